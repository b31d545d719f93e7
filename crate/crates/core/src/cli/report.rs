use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::{MeanRgbRow, PseudoRow, SweepRow, TrialReport};
use crate::error::{Error, Result};
use crate::llm::{DatasetSummary, IclEvaluation};
use crate::objects::{ClassShareTable, MajorityRule, RankedClass, ShareAccuracy, UniqueObjectHistogram};
use crate::textlens::PhraseCount;

pub const FORMAT_VERSION: &str = "biaslens-report/1.0";
const FORMAT_PREFIX: &str = "biaslens-report/";
const SUPPORTED_MAJOR: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: String,
    pub toolkit_version: String,
    pub command: String,
    /// The effective configuration with every default filled in.
    pub config: serde_json::Value,
    pub blocks: Vec<Block>,
    /// Wall-clock times; the only part of a report that varies between runs.
    pub timings: Vec<Timing>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformedImage {
    pub dataset: String,
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Written files, relative to the output directory.
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetPhrases {
    pub dataset: String,
    pub phrases: Vec<PhraseCount>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicWords {
    pub words: Vec<String>,
    pub probabilities: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRanking {
    pub dataset: String,
    pub classes: Vec<RankedClass>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "block", rename_all = "snake_case")]
pub enum Block {
    Transform { transform: String, images: Vec<TransformedImage> },
    Trials(TrialReport),
    MeanRgb { rows: Vec<MeanRgbRow> },
    Sweep { axis: String, rows: Vec<SweepRow> },
    PseudoDatasets { k: usize, rows: Vec<PseudoRow> },
    ClassShares(ClassShareTable),
    UniqueObjects { datasets: Vec<UniqueObjectHistogram> },
    Rankings { min_frequency: u64, datasets: Vec<DatasetRanking> },
    MajorityRule { rule: MajorityRule, train_accuracy: f64, val_accuracy: f64, unseen_val: usize },
    ShareAccuracy { source: String, label_names: Vec<String>, result: ShareAccuracy },
    Phrases { datasets: Vec<DatasetPhrases> },
    Topics { vocab_size: usize, topics: Vec<TopicWords> },
    /// Caption classification with bag-of-words features, a proxy for a
    /// learned caption encoder.
    CaptionTrials { proxy: String, report: TrialReport },
    Icl(IclEvaluation),
    Summary { dataset_names: Vec<String>, summary: DatasetSummary },
}

impl Report {
    pub fn new(command: &str, config: serde_json::Value, blocks: Vec<Block>, timings: Vec<Timing>) -> Self {
        Report {
            format_version: FORMAT_VERSION.into(),
            toolkit_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            blocks,
            timings,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Serialized result blocks alone, for reproducibility comparisons.
    pub fn blocks_json(&self) -> String {
        serde_json::to_string(&self.blocks).expect("blocks serialize")
    }

    /// Parses a report, rejecting unknown major format versions.
    pub fn parse(text: &str) -> Result<Report> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("report is not JSON: {e}")))?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Format("report has no format_version".into()))?;
        let major = version
            .strip_prefix(FORMAT_PREFIX)
            .and_then(|v| v.split('.').next())
            .and_then(|m| m.parse::<u64>().ok());
        if major != Some(SUPPORTED_MAJOR) {
            return Err(Error::UnsupportedVersion(version.to_owned()));
        }
        serde_json::from_value(value).map_err(|e| Error::Format(format!("malformed report: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Report> {
        let path = path.as_ref();
        Report::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json().as_bytes())
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Confusion,
    MeanRgb,
    Sweep,
    PseudoDatasets,
    UniqueObjects,
    ClassShares,
    Rankings,
    AccuracyVsShare,
    Phrases,
    Topics,
    IclCurve,
}

impl PlotKind {
    pub fn file_name(self) -> &'static str {
        match self {
            PlotKind::Confusion => "confusion.csv",
            PlotKind::MeanRgb => "mean_rgb.csv",
            PlotKind::Sweep => "sweep.csv",
            PlotKind::PseudoDatasets => "pseudo_datasets.csv",
            PlotKind::UniqueObjects => "unique_objects.csv",
            PlotKind::ClassShares => "class_shares.csv",
            PlotKind::Rankings => "rankings.csv",
            PlotKind::AccuracyVsShare => "accuracy_vs_share.csv",
            PlotKind::Phrases => "phrases.csv",
            PlotKind::Topics => "topics.csv",
            PlotKind::IclCurve => "icl_curve.csv",
        }
    }

    fn name(self) -> &'static str {
        match self {
            PlotKind::Confusion => "trials",
            PlotKind::MeanRgb => "mean_rgb",
            PlotKind::Sweep => "sweep",
            PlotKind::PseudoDatasets => "pseudo_datasets",
            PlotKind::UniqueObjects => "unique_objects",
            PlotKind::ClassShares => "class_shares",
            PlotKind::Rankings => "rankings",
            PlotKind::AccuracyVsShare => "share_accuracy",
            PlotKind::Phrases => "phrases",
            PlotKind::Topics => "topics",
            PlotKind::IclCurve => "icl",
        }
    }

    pub const ALL: [PlotKind; 11] = [
        PlotKind::Confusion,
        PlotKind::MeanRgb,
        PlotKind::Sweep,
        PlotKind::PseudoDatasets,
        PlotKind::UniqueObjects,
        PlotKind::ClassShares,
        PlotKind::Rankings,
        PlotKind::AccuracyVsShare,
        PlotKind::Phrases,
        PlotKind::Topics,
        PlotKind::IclCurve,
    ];
}

type Table = (Vec<String>, Vec<Vec<String>>);

fn num(v: f64) -> String {
    format!("{v}")
}

fn confusion_table(r: &TrialReport) -> Table {
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(r.class_names.iter().cloned());
    let rows = r
        .class_names
        .iter()
        .zip(&r.confusion)
        .map(|(name, row)| std::iter::once(name.clone()).chain(row.iter().map(u64::to_string)).collect())
        .collect();
    (header, rows)
}

fn table_for(report: &Report, kind: PlotKind) -> Option<Table> {
    let s = |x: &str| x.to_string();
    report.blocks.iter().find_map(|b| match (kind, b) {
        (PlotKind::Confusion, Block::Trials(r)) | (PlotKind::Confusion, Block::CaptionTrials { report: r, .. }) => {
            Some(confusion_table(r))
        }
        (PlotKind::MeanRgb, Block::MeanRgb { rows }) => Some((
            vec![s("dataset"), s("id"), s("r"), s("g"), s("b")],
            rows.iter()
                .map(|r| {
                    // Gray images report one mean, repeated across the columns.
                    let m = |c: usize| num(r.means[c.min(r.means.len() - 1)]);
                    vec![r.dataset.clone(), r.id.clone(), m(0), m(1), m(2)]
                })
                .collect(),
        )),
        (PlotKind::Sweep, Block::Sweep { axis, rows }) => Some((
            vec![axis.clone(), s("mean_accuracy"), s("std")],
            rows.iter()
                .map(|r| vec![num(r.value), num(r.report.mean), num(r.report.std)])
                .collect(),
        )),
        (PlotKind::PseudoDatasets, Block::PseudoDatasets { rows, .. }) => Some((
            vec![s("size"), s("train_accuracy"), s("val_accuracy")],
            rows.iter()
                .map(|r| vec![r.size.to_string(), num(r.train_accuracy), num(r.val_accuracy)])
                .collect(),
        )),
        (PlotKind::UniqueObjects, Block::UniqueObjects { datasets }) => Some((
            vec![s("dataset"), s("unique_objects"), s("images")],
            datasets
                .iter()
                .flat_map(|d| {
                    d.histogram
                        .iter()
                        .enumerate()
                        .map(|(n, c)| vec![d.dataset.clone(), n.to_string(), c.to_string()])
                })
                .collect(),
        )),
        (PlotKind::ClassShares, Block::ClassShares(t)) => {
            let mut header = vec![s("class"), s("support")];
            header.extend(t.dataset_names.iter().map(|d| format!("share_{d}")));
            let rows = t
                .classes
                .iter()
                .map(|c| {
                    let mut row = vec![c.name.clone(), c.support.to_string()];
                    row.extend(c.shares.iter().map(|&v| num(v)));
                    row
                })
                .collect();
            Some((header, rows))
        }
        (PlotKind::Rankings, Block::Rankings { datasets, .. }) => Some((
            vec![s("dataset"), s("rank"), s("class"), s("weight"), s("support")],
            datasets
                .iter()
                .flat_map(|d| {
                    d.classes.iter().enumerate().map(|(i, c)| {
                        vec![d.dataset.clone(), (i + 1).to_string(), c.name.clone(), num(c.weight), c.support.to_string()]
                    })
                })
                .collect(),
        )),
        (PlotKind::AccuracyVsShare, Block::ShareAccuracy { label_names, result, .. }) => Some((
            vec![s("label"), s("support"), s("majority_share"), s("accuracy")],
            result
                .rows
                .iter()
                .map(|r| {
                    vec![
                        label_names[r.label].clone(),
                        r.support.to_string(),
                        num(r.majority_share),
                        num(r.accuracy),
                    ]
                })
                .collect(),
        )),
        (PlotKind::Phrases, Block::Phrases { datasets }) => Some((
            vec![s("dataset"), s("rank"), s("phrase"), s("count")],
            datasets
                .iter()
                .flat_map(|d| {
                    d.phrases
                        .iter()
                        .enumerate()
                        .map(|(i, p)| vec![d.dataset.clone(), (i + 1).to_string(), p.phrase.clone(), p.count.to_string()])
                })
                .collect(),
        )),
        (PlotKind::Topics, Block::Topics { topics, .. }) => Some((
            vec![s("topic"), s("rank"), s("word"), s("probability")],
            topics
                .iter()
                .enumerate()
                .flat_map(|(t, tw)| {
                    tw.words
                        .iter()
                        .zip(&tw.probabilities)
                        .enumerate()
                        .map(move |(i, (w, p))| vec![(t + 1).to_string(), (i + 1).to_string(), w.clone(), num(*p)])
                })
                .collect(),
        )),
        (PlotKind::IclCurve, Block::Icl(ev)) => Some((
            vec![s("holdouts"), s("accuracy")],
            ev.curve
                .iter()
                .enumerate()
                .map(|(i, a)| vec![(i + 1).to_string(), num(*a)])
                .collect(),
        )),
        _ => None,
    })
}

pub fn csv_string(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Writes one CSV per plot family present in the report, or only `only`.
/// Returns the written paths.
pub fn emit_plot_data(report: &Report, dir: &Path, only: Option<PlotKind>) -> Result<Vec<PathBuf>> {
    let kinds: Vec<PlotKind> = match only {
        Some(k) => vec![k],
        None => PlotKind::ALL.to_vec(),
    };
    let mut written = Vec::new();
    for kind in kinds {
        match table_for(report, kind) {
            Some((header, rows)) => {
                let path = dir.join(kind.file_name());
                write_atomic(&path, csv_string(&header, &rows).as_bytes())?;
                written.push(path);
            }
            None if only.is_some() => return Err(Error::MissingBlock(kind.name())),
            None => {}
        }
    }
    Ok(written)
}
