use serde::{Deserialize, Serialize};

use super::transport::Transport;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IclConfig {
    pub demos_per_dataset: usize,
    /// Stop once the running accuracy moved less than `stop_epsilon` over
    /// the last `stop_window` holdouts.
    pub stop_window: usize,
    pub stop_epsilon: f64,
    /// Upper bound on holdouts queried; `None` uses the whole pool.
    pub max_holdouts: Option<usize>,
    pub seed: u64,
}

impl Default for IclConfig {
    fn default() -> Self {
        IclConfig {
            demos_per_dataset: 120,
            stop_window: 100,
            stop_epsilon: 0.01,
            max_holdouts: None,
            seed: 0,
        }
    }
}

impl IclConfig {
    pub fn validate(&self) -> Result<()> {
        if self.demos_per_dataset == 0 || self.stop_window == 0 {
            return Err(Error::InvalidConfig("demos_per_dataset and stop_window must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IclPrompt {
    pub text: String,
    /// 1-based distribution index of the holdout's dataset.
    pub answer: usize,
    /// `shown[d]` is the 1-based index dataset `d` appears under.
    pub shown: Vec<usize>,
}

pub(crate) fn flatten(caption: &str) -> String {
    caption.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Random dataset-to-index assignment: `shown[d]` is 1-based.
pub fn anonymized_indices(k: usize, seed: u64) -> Vec<usize> {
    let order = Rng::keyed(seed, b"anonymize").permutation(k);
    let mut shown = vec![0; k];
    for (pos, &d) in order.iter().enumerate() {
        shown[d] = pos + 1;
    }
    shown
}

/// Lists the first `demos_per_dataset` captions of every dataset under
/// anonymous "Distribution i" headers in a seed-dependent order, then asks
/// for the index of `holdout`.
pub fn build_icl_prompt(
    demos: &[Vec<String>],
    holdout: &str,
    holdout_dataset: usize,
    demos_per_dataset: usize,
    seed: u64,
) -> Result<IclPrompt> {
    let k = demos.len();
    for (d, pool) in demos.iter().enumerate() {
        if pool.len() < demos_per_dataset {
            return Err(Error::InsufficientCaptions {
                dataset: d,
                needed: demos_per_dataset,
                available: pool.len(),
            });
        }
    }
    let shown = anonymized_indices(k, seed);
    let mut by_index: Vec<usize> = (0..k).collect();
    by_index.sort_by_key(|&d| shown[d]);
    let mut text = format!(
        "Below are image captions sampled from {k} different distributions.\n"
    );
    for &d in &by_index {
        text.push_str(&format!("\nDistribution {}:\n", shown[d]));
        for c in &demos[d][..demos_per_dataset] {
            text.push_str("- ");
            text.push_str(&flatten(c));
            text.push('\n');
        }
    }
    text.push_str(&format!(
        "\nWhich distribution (1-{k}) does the following caption come from? \
         Answer with the distribution number only.\nCaption: {}\nAnswer:",
        flatten(holdout)
    ));
    Ok(IclPrompt {
        text,
        answer: shown[holdout_dataset],
        shown,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IclAnswer {
    Index(usize),
    Unparseable,
}

/// The first run of digits whose value lies in `1..=k`.
pub fn parse_icl_response(text: &str, k: usize) -> IclAnswer {
    text.split(|c: char| !c.is_ascii_digit())
        .filter(|t| !t.is_empty())
        .filter_map(|t| t.parse::<usize>().ok())
        .find(|v| (1..=k).contains(v))
        .map_or(IclAnswer::Unparseable, IclAnswer::Index)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IclEvaluation {
    /// Running accuracy after each holdout.
    pub curve: Vec<f64>,
    pub final_accuracy: f64,
    pub evaluated: usize,
    pub unparseable: usize,
    /// True when the stop rule fired before the pool ran out.
    pub converged: bool,
    pub config: IclConfig,
}

/// Demonstrations per dataset, and `(dataset, caption)` holdouts.
pub type DemoSplit = (Vec<Vec<String>>, Vec<(usize, String)>);

/// Per-dataset shuffle: the first `demos_per_dataset` captions are
/// demonstrations, the rest holdouts taken round-robin across datasets.
pub fn split_demos(captions: &[Vec<String>], cfg: &IclConfig) -> Result<DemoSplit> {
    let mut demos = Vec::new();
    let mut pools = Vec::new();
    for (d, set) in captions.iter().enumerate() {
        if set.len() < cfg.demos_per_dataset {
            return Err(Error::InsufficientCaptions {
                dataset: d,
                needed: cfg.demos_per_dataset,
                available: set.len(),
            });
        }
        let mut shuffled = set.clone();
        Rng::keyed(cfg.seed, format!("icl-pool:{d}").as_bytes()).shuffle(&mut shuffled);
        let rest = shuffled.split_off(cfg.demos_per_dataset);
        demos.push(shuffled);
        pools.push(rest);
    }
    let longest = pools.iter().map(Vec::len).max().unwrap_or(0);
    let mut holdouts = Vec::new();
    for i in 0..longest {
        for (d, pool) in pools.iter().enumerate() {
            if let Some(c) = pool.get(i) {
                holdouts.push((d, c.clone()));
            }
        }
    }
    Ok((demos, holdouts))
}

/// Queries one holdout at a time, re-randomizing the index assignment for
/// each, until the stop rule fires or the pool is exhausted. Unparseable
/// replies count as wrong.
pub fn run_icl_eval(captions: &[Vec<String>], transport: &dyn Transport, cfg: &IclConfig) -> Result<IclEvaluation> {
    cfg.validate()?;
    let k = captions.len();
    if k < 2 {
        return Err(Error::InvalidConfig("in-context evaluation needs at least 2 datasets".into()));
    }
    let (demos, mut holdouts) = split_demos(captions, cfg)?;
    if let Some(max) = cfg.max_holdouts {
        holdouts.truncate(max);
    }
    let mut curve = Vec::new();
    let (mut correct, mut unparseable) = (0usize, 0usize);
    let mut converged = false;
    for (j, (d, caption)) in holdouts.iter().enumerate() {
        let prompt = build_icl_prompt(&demos, caption, *d, cfg.demos_per_dataset, cfg.seed.wrapping_add(j as u64))?;
        let reply = transport.send(&prompt.text)?;
        match parse_icl_response(&reply, k) {
            IclAnswer::Index(i) => correct += usize::from(i == prompt.answer),
            IclAnswer::Unparseable => unparseable += 1,
        }
        curve.push(correct as f64 / (j + 1) as f64);
        if curve.len() >= cfg.stop_window {
            let w = &curve[curve.len() - cfg.stop_window..];
            let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
            if hi - lo < cfg.stop_epsilon {
                converged = true;
                break;
            }
        }
    }
    Ok(IclEvaluation {
        final_accuracy: curve.last().copied().unwrap_or(0.0),
        evaluated: curve.len(),
        unparseable,
        converged,
        curve,
        config: cfg.clone(),
    })
}
