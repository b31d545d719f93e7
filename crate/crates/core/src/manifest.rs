//! Dataset manifests (JSON Lines) and class vocabularies.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, ManifestIssue, Result};

/// One image record. Object classes are kept by name, deduplicated in first
/// occurrence order, and resolved against a [`Vocabulary`] when an analysis
/// needs indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub id: String,
    #[serde(rename = "image")]
    pub image_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objects: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_short: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_long: Option<String>,
}

impl Sample {
    pub fn new(id: impl Into<String>, image_path: impl Into<String>) -> Self {
        Sample {
            id: id.into(),
            image_path: image_path.into(),
            objects: None,
            label: None,
            caption_short: None,
            caption_long: None,
        }
    }

    pub fn with_objects<S: Into<String>>(mut self, objects: impl IntoIterator<Item = S>) -> Self {
        self.objects = Some(objects.into_iter().map(Into::into).collect());
        self.dedup_objects();
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_captions(mut self, short: Option<String>, long: Option<String>) -> Self {
        self.caption_short = short;
        self.caption_long = long;
        self
    }

    fn dedup_objects(&mut self) {
        if let Some(objects) = &mut self.objects {
            let mut seen = HashSet::new();
            objects.retain(|o| seen.insert(o.clone()));
        }
    }

    /// Sorted, unique vocabulary indices of the annotated objects.
    pub fn object_indices(&self, vocab: &Vocabulary) -> Result<Vec<usize>> {
        let objects = self.objects.as_ref().ok_or_else(|| Error::MissingAnnotation {
            sample: self.id.clone(),
            what: "object annotations",
        })?;
        let mut idx = objects
            .iter()
            .map(|o| vocab.index_of(o))
            .collect::<Result<Vec<_>>>()?;
        idx.sort_unstable();
        idx.dedup();
        Ok(idx)
    }

    pub fn label_index(&self, vocab: &Vocabulary) -> Result<usize> {
        let label = self.label.as_ref().ok_or_else(|| Error::MissingAnnotation {
            sample: self.id.clone(),
            what: "a single label",
        })?;
        vocab.index_of(label)
    }

    pub fn caption(&self, field: CaptionField) -> Option<&str> {
        match field {
            CaptionField::Short => self.caption_short.as_deref(),
            CaptionField::Long => self.caption_long.as_deref(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionField {
    Short,
    #[default]
    Long,
}

#[derive(Clone, Debug, Serialize)]
pub struct DatasetManifest {
    pub name: String,
    pub vocabulary_name: Option<String>,
    pub samples: Vec<Sample>,
    /// Directory that relative image paths are resolved against.
    #[serde(skip)]
    pub root: Option<PathBuf>,
}

impl PartialEq for DatasetManifest {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.vocabulary_name == other.vocabulary_name
            && self.samples == other.samples
    }
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::InvalidConfig("manifest name must be nonempty".into()));
        }
        let mut seen = HashSet::new();
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate sample id {:?} in manifest {name:?}",
                    s.id
                )));
            }
        }
        let samples = samples
            .into_iter()
            .map(|mut s| {
                s.dedup_objects();
                s
            })
            .collect();
        Ok(DatasetManifest {
            name,
            vocabulary_name: None,
            samples,
            root: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn image_path(&self, sample: &Sample) -> PathBuf {
        let p = Path::new(&sample.image_path);
        match &self.root {
            Some(root) if p.is_relative() => root.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        out
    }
}

/// Reads a JSON Lines manifest. The manifest is named after the file stem and
/// relative image paths resolve against the file's directory. Every malformed
/// line and duplicate id is reported, not just the first.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut issues = Vec::new();
    let mut samples = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = i + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Sample>(raw) {
            Ok(mut s) => {
                if s.id.is_empty() {
                    issues.push(ManifestIssue::Parse {
                        line,
                        message: "empty id".into(),
                    });
                    continue;
                }
                if s.image_path.is_empty() {
                    issues.push(ManifestIssue::Parse {
                        line,
                        message: "empty image path".into(),
                    });
                    continue;
                }
                if seen.insert(s.id.clone(), line).is_some() {
                    issues.push(ManifestIssue::DuplicateId { line, id: s.id });
                    continue;
                }
                s.dedup_objects();
                samples.push(s);
            }
            Err(e) => issues.push(ManifestIssue::Parse {
                line,
                message: e.to_string(),
            }),
        }
    }
    if !issues.is_empty() {
        return Err(Error::InvalidManifest {
            path: path.to_path_buf(),
            issues,
        });
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "manifest".into());
    Ok(DatasetManifest {
        name,
        vocabulary_name: None,
        samples,
        root: path.parent().map(Path::to_path_buf),
    })
}

pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(manifest.to_jsonl().as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Ordered class names; the index of a class is its position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate vocabulary entry {n:?}")));
            }
        }
        Ok(Vocabulary { names, index })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let names: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
        if let Some(i) = names.iter().position(|n| n.is_empty()) {
            return Err(Error::InvalidConfig(format!(
                "vocabulary {} line {}: empty class name",
                path.display(),
                i + 1
            )));
        }
        Vocabulary::new(names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownClass { name: name.into() })
    }
}
