use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::ImageBuffer;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShuffleMode {
    /// One permutation per `(seed, cropped size, patch)`, shared by all images.
    FixedOrder,
    /// A fresh permutation per sample id.
    RandomOrder,
}

type PermKey = (u64, usize, usize, usize);

fn fixed_cache() -> &'static RwLock<HashMap<PermKey, Arc<Vec<usize>>>> {
    static CACHE: OnceLock<RwLock<HashMap<PermKey, Arc<Vec<usize>>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Permutation of the `grid_w x grid_h` patch grid of a `width x height`
/// (already cropped) image. Slot `i` of the output receives patch `perm[i]`.
pub fn shuffle_permutation(
    mode: ShuffleMode,
    seed: u64,
    sample_id: &str,
    width: usize,
    height: usize,
    patch: usize,
) -> Arc<Vec<usize>> {
    let cells = (width / patch) * (height / patch);
    match mode {
        ShuffleMode::FixedOrder => {
            let key = (seed, width, height, patch);
            if let Some(p) = fixed_cache().read().expect("cache lock").get(&key) {
                return Arc::clone(p);
            }
            let label = format!("fixed:{width}x{height}:{patch}");
            let perm = Arc::new(Rng::keyed(seed, label.as_bytes()).permutation(cells));
            let mut cache = fixed_cache().write().expect("cache lock");
            Arc::clone(cache.entry(key).or_insert(perm))
        }
        ShuffleMode::RandomOrder => {
            let label = format!("random:{width}x{height}:{patch}:{sample_id}");
            Arc::new(Rng::keyed(seed, label.as_bytes()).permutation(cells))
        }
    }
}

/// Permutes whole pixels. Identical to [`patch_shuffle`] with `patch = 1`.
pub fn pixel_shuffle(img: &ImageBuffer, mode: ShuffleMode, seed: u64, sample_id: &str) -> ImageBuffer {
    patch_shuffle(img, 1, mode, seed, sample_id).expect("a 1-pixel grid is never degenerate")
}

/// Center-crops the image to a whole number of `patch x patch` tiles and
/// permutes the tiles.
pub fn patch_shuffle(
    img: &ImageBuffer,
    patch: usize,
    mode: ShuffleMode,
    seed: u64,
    sample_id: &str,
) -> Result<ImageBuffer> {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let (gw, gh) = (w / patch.max(1), h / patch.max(1));
    if patch == 0 || gw == 0 || gh == 0 {
        return Err(Error::DegenerateGrid {
            width: w,
            height: h,
            patch,
        });
    }
    let (cw, ch) = (gw * patch, gh * patch);
    let (left, top) = ((w - cw) / 2, (h - ch) / 2);
    let perm = shuffle_permutation(mode, seed, sample_id, cw, ch, patch);

    let src = img.data();
    let row_bytes = patch * c;
    let mut out = vec![0u8; cw * ch * c];
    for (slot, &from) in perm.iter().enumerate() {
        let (dx, dy) = ((slot % gw) * patch, (slot / gw) * patch);
        let (sx, sy) = (left + (from % gw) * patch, top + (from / gw) * patch);
        for r in 0..patch {
            let s = ((sy + r) * w + sx) * c;
            let d = ((dy + r) * cw + dx) * c;
            out[d..d + row_bytes].copy_from_slice(&src[s..s + row_bytes]);
        }
    }
    ImageBuffer::new(cw, ch, c, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::rng::Rng;

    fn random_image(seed: u64, w: usize, h: usize, c: usize) -> ImageBuffer {
        let mut rng = Rng::new(seed, 99);
        ImageBuffer::from_fn(w, h, c, |_, _, _| rng.below(256) as u8).unwrap()
    }

    fn sorted_pixels(img: &ImageBuffer) -> Vec<Vec<u8>> {
        let mut px: Vec<Vec<u8>> = img.data().chunks_exact(img.channels()).map(<[u8]>::to_vec).collect();
        px.sort();
        px
    }

    fn sorted_patches(img: &ImageBuffer, patch: usize) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        for gy in 0..img.height() / patch {
            for gx in 0..img.width() / patch {
                let mut block = Vec::new();
                for y in 0..patch {
                    for x in 0..patch {
                        block.extend_from_slice(img.pixel(gx * patch + x, gy * patch + y));
                    }
                }
                out.push(block);
            }
        }
        out.sort();
        out
    }

    #[test]
    fn one_pixel_is_identity() {
        let img = ImageBuffer::new(1, 1, 3, vec![1, 2, 3]).unwrap();
        assert_eq!(pixel_shuffle(&img, ShuffleMode::RandomOrder, 5, "a"), img);
    }

    #[test]
    fn fixed_order_shares_permutation() {
        let a = random_image(1, 4, 4, 3);
        let b = random_image(2, 4, 4, 3);
        let sa = pixel_shuffle(&a, ShuffleMode::FixedOrder, 77, "a");
        let sb = pixel_shuffle(&b, ShuffleMode::FixedOrder, 77, "b");
        // Recover the permutation from A (its pixels are distinct with
        // overwhelming probability) and undo it on B.
        let perm: Vec<usize> = (0..16)
            .map(|slot| {
                let (x, y) = (slot % 4, slot / 4);
                (0..16)
                    .find(|&i| a.pixel(i % 4, i / 4) == sa.pixel(x, y))
                    .unwrap()
            })
            .collect();
        let mut restored = vec![0u8; 48];
        for (slot, &from) in perm.iter().enumerate() {
            restored[from * 3..from * 3 + 3].copy_from_slice(sb.pixel(slot % 4, slot / 4));
        }
        assert_eq!(restored, b.data());
    }

    #[test]
    fn random_order_depends_on_sample_id() {
        let a = random_image(1, 8, 8, 1);
        let x = pixel_shuffle(&a, ShuffleMode::RandomOrder, 3, "x");
        let y = pixel_shuffle(&a, ShuffleMode::RandomOrder, 3, "y");
        assert_ne!(x, y);
        assert_eq!(x, pixel_shuffle(&a, ShuffleMode::RandomOrder, 3, "x"));
    }

    #[test]
    fn single_patch_is_identity() {
        let img = random_image(3, 16, 16, 3);
        assert_eq!(patch_shuffle(&img, 16, ShuffleMode::RandomOrder, 1, "s").unwrap(), img);
    }

    #[test]
    fn patch_blocks_preserved() {
        let img = random_image(4, 32, 32, 3);
        let out = patch_shuffle(&img, 16, ShuffleMode::RandomOrder, 1, "s").unwrap();
        assert_eq!(sorted_patches(&out, 16), sorted_patches(&img, 16));
    }

    #[test]
    fn odd_size_is_center_cropped() {
        let img = random_image(5, 33, 33, 1);
        let out = patch_shuffle(&img, 16, ShuffleMode::FixedOrder, 1, "s").unwrap();
        assert_eq!((out.width(), out.height()), (32, 32));
        let crop = ImageBuffer::from_fn(32, 32, 1, |x, y, _| img.get(x, y, 0)).unwrap();
        assert_eq!(sorted_patches(&out, 16), sorted_patches(&crop, 16));
    }

    #[test]
    fn degenerate_grid() {
        let img = random_image(6, 10, 40, 1);
        assert!(matches!(
            patch_shuffle(&img, 16, ShuffleMode::FixedOrder, 0, "s"),
            Err(Error::DegenerateGrid { .. })
        ));
        assert!(patch_shuffle(&img, 0, ShuffleMode::FixedOrder, 0, "s").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn pixel_multiset_preserved(w in 1usize..12, h in 1usize..12, c in prop_oneof![Just(1usize), Just(3usize)], seed: u64, fixed: bool) {
            let img = random_image(seed, w, h, c);
            let mode = if fixed { ShuffleMode::FixedOrder } else { ShuffleMode::RandomOrder };
            let out = pixel_shuffle(&img, mode, seed, "id");
            prop_assert_eq!(sorted_pixels(&out), sorted_pixels(&img));
        }

        #[test]
        fn patch_one_equals_pixel_shuffle_of_crop(w in 1usize..12, h in 1usize..12, seed: u64) {
            let img = random_image(seed, w, h, 3);
            prop_assert_eq!(
                patch_shuffle(&img, 1, ShuffleMode::RandomOrder, seed, "q").unwrap(),
                pixel_shuffle(&img, ShuffleMode::RandomOrder, seed, "q")
            );
        }
    }
}
