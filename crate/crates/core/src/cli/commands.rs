use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::*;
use super::report::{
    emit_plot_data, Block, DatasetPhrases, DatasetRanking, Report, Timing, TopicWords, TransformedImage,
};
use crate::classify::{DiskImages, Experiment, FeatureKind, FeatureSpec, SweepAxis};
use crate::error::{Error, Result};
use crate::llm::{run_icl_eval, summarize_datasets, LoggedTransport, MockTransport, Transport};
use crate::manifest::{load_manifest, DatasetManifest, Vocabulary};
use crate::objects::{
    accuracy_vs_majority_share, build_presence, class_shares, label_vocabulary, rank_classes_by_coefficients,
    single_labels, unique_object_stats, MajorityRule,
};
use crate::par::Parallelism;
use crate::split::{sample_split, SampleRef};
use crate::textlens::{
    caption_name, corpus_from_manifests, lda_fit, manifest_tokens, phrase_frequencies, top_word_indices,
    TokenizerConfig,
};
use crate::transforms::TransformSpec;

/// Flags shared by the analysis subcommands; each overrides its config key.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct CommonArgs {
    /// TOML config file; omitted keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Manifest files, one dataset each, in class order.
    #[arg(long, num_args = 1..)]
    pub manifests: Vec<PathBuf>,
    /// Run on one thread.
    #[arg(long)]
    pub sequential: bool,
}

impl CommonArgs {
    fn apply(
        &self,
        seed: &mut Option<u64>,
        out: &mut Option<PathBuf>,
        manifests: &mut Vec<PathBuf>,
    ) {
        if self.seed.is_some() {
            *seed = self.seed;
        }
        if self.out.is_some() {
            out.clone_from(&self.out);
        }
        if !self.manifests.is_empty() {
            manifests.clone_from(&self.manifests);
        }
    }

    fn parallelism(&self, configured: Parallelism) -> Parallelism {
        if self.sequential {
            Parallelism::Sequential
        } else {
            configured
        }
    }
}

/// Blocks and timings of one run, ready to be written as a report.
pub struct Outcome {
    pub report: Report,
    pub out_dir: PathBuf,
}

struct Stopwatch {
    timings: Vec<Timing>,
    start: Instant,
}

impl Stopwatch {
    fn new() -> Self {
        Stopwatch {
            timings: Vec::new(),
            start: Instant::now(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.push(Timing {
            stage: stage.into(),
            seconds: (now - self.start).as_secs_f64(),
        });
        self.start = now;
    }
}

fn output_dir(configured: &Option<PathBuf>) -> PathBuf {
    configured.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

fn echo<T: Serialize>(cfg: &T) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn load_manifests(paths: &[PathBuf]) -> Result<Vec<DatasetManifest>> {
    require_manifests(paths)?;
    let manifests = paths.iter().map(load_manifest).collect::<Result<Vec<_>>>()?;
    for (i, m) in manifests.iter().enumerate() {
        if manifests[..i].iter().any(|o| o.name == m.name) {
            return Err(Error::InvalidConfig(format!("two manifests are named {:?}", m.name)));
        }
    }
    Ok(manifests)
}

fn finish(command: &str, config: serde_json::Value, blocks: Vec<Block>, clock: Stopwatch, out_dir: PathBuf) -> Outcome {
    Outcome {
        report: Report::new(command, config, blocks, clock.timings),
        out_dir,
    }
}

/// Keeps ids usable as file names.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

pub fn transform(args: &CommonArgs) -> Result<Outcome> {
    let mut cfg: TransformConfig = load_config(args.config.as_deref())?;
    let mut seed = None;
    args.apply(&mut seed, &mut cfg.output_dir, &mut cfg.manifests);
    cfg.parallelism = args.parallelism(cfg.parallelism);
    if let Some(s) = seed {
        if let TransformSpec::PixelShuffle { seed, .. } | TransformSpec::PatchShuffle { seed, .. } = &mut cfg.transform {
            *seed = s;
        }
    }
    cfg.transform.validate()?;
    let out_dir = output_dir(&cfg.output_dir);
    let mut clock = Stopwatch::new();
    let manifests = load_manifests(&cfg.manifests)?;
    clock.lap("load");

    let jobs: Vec<SampleRef> = manifests
        .iter()
        .enumerate()
        .flat_map(|(m, man)| (0..man.len().min(cfg.limit.unwrap_or(usize::MAX))).map(move |s| (m, s)))
        .collect();
    let images = cfg.parallelism.try_map(&jobs, |&(m, s)| {
        let manifest = &manifests[m];
        let sample = &manifest.samples[s];
        let mut img = crate::raster::load_image(manifest.image_path(sample))?;
        if cfg.resize > 0 {
            img = img.resize(cfg.resize, cfg.resize);
        }
        let out = cfg.transform.apply(&img, &sample.id)?;
        let rel_dir = Path::new("images").join(file_stem(&manifest.name));
        std::fs::create_dir_all(out_dir.join(&rel_dir)).map_err(|e| Error::io(out_dir.join(&rel_dir), e))?;
        let stem = file_stem(&sample.id);
        let mut files = Vec::new();
        if matches!(out.channels(), 1 | 3) {
            files.push((rel_dir.join(format!("{stem}.png")), out.to_image()?));
        } else {
            for c in 0..out.channels() {
                files.push((rel_dir.join(format!("{stem}_c{c}.png")), out.channel_slice(c..c + 1)?.to_image()?));
            }
        }
        for (rel, png) in &files {
            crate::raster::save_png(png, out_dir.join(rel))?;
        }
        Ok(TransformedImage {
            dataset: manifest.name.clone(),
            id: sample.id.clone(),
            width: out.width(),
            height: out.height(),
            channels: out.channels(),
            files: files.iter().map(|(rel, _)| rel.to_string_lossy().replace('\\', "/")).collect(),
        })
    })?;
    clock.lap("transform");
    let blocks = vec![Block::Transform {
        transform: cfg.transform.name().into(),
        images,
    }];
    Ok(finish("transform", echo(&cfg), blocks, clock, out_dir))
}

fn prepare_classify(args: &CommonArgs, command: &str) -> Result<(ClassifyConfig, Option<Vocabulary>, Vec<DatasetManifest>)> {
    let mut cfg: ClassifyConfig = load_config(args.config.as_deref())?;
    args.apply(&mut cfg.seed, &mut cfg.output_dir, &mut cfg.manifests);
    cfg.parallelism = args.parallelism(cfg.parallelism);
    cfg.train.seed = require_seed(cfg.seed, command)?;
    let vocab = cfg.object_vocab.as_ref().map(Vocabulary::load).transpose()?;
    if cfg.features.kind == FeatureKind::BagOfObjects && vocab.is_none() {
        return Err(Error::InvalidConfig("bag_of_objects features need `object_vocab`".into()));
    }
    let manifests = load_manifests(&cfg.manifests)?;
    Ok((cfg, vocab, manifests))
}

fn experiment<'a>(
    cfg: &'a ClassifyConfig,
    manifests: &'a [DatasetManifest],
    vocab: Option<&'a Vocabulary>,
) -> Experiment<'a> {
    let mut exp = Experiment::new(manifests, &DiskImages, &cfg.transform, &cfg.features, &cfg.train);
    exp.resize = cfg.resize;
    exp.object_vocab = vocab;
    exp.parallelism = cfg.parallelism;
    exp
}

pub fn classify(args: &CommonArgs) -> Result<Outcome> {
    let mut clock = Stopwatch::new();
    let (cfg, vocab, manifests) = prepare_classify(args, "classify")?;
    clock.lap("load");
    let exp = experiment(&cfg, &manifests, vocab.as_ref());
    let mut blocks = vec![Block::Trials(exp.run_trials(cfg.n_trials, cfg.n_train, cfg.n_val)?)];
    clock.lap("trials");
    if let Some(p) = &cfg.pseudo {
        if p.manifest >= manifests.len() {
            return Err(Error::InvalidConfig(format!("pseudo.manifest {} is out of range", p.manifest)));
        }
        let rows = exp.pseudo_dataset_check(p.manifest, p.k, &p.sizes, p.val_per_dataset)?;
        blocks.push(Block::PseudoDatasets { k: p.k, rows });
        clock.lap("pseudo_datasets");
    }
    if cfg.mean_rgb {
        blocks.push(Block::MeanRgb { rows: exp.mean_rgb_rows()? });
        clock.lap("mean_rgb");
    }
    Ok(finish("classify", echo(&cfg), blocks, clock, output_dir(&cfg.output_dir)))
}

pub fn sweep(args: &CommonArgs) -> Result<Outcome> {
    let mut clock = Stopwatch::new();
    let (cfg, vocab, manifests) = prepare_classify(args, "sweep")?;
    let axis = cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::InvalidConfig("`sweep` needs a [sweep] table with an axis and values".into()))?;
    clock.lap("load");
    let rows = experiment(&cfg, &manifests, vocab.as_ref()).sweep(&axis, cfg.n_trials, cfg.n_train, cfg.n_val)?;
    clock.lap("sweep");
    let axis_name = match axis {
        SweepAxis::PatchSize(_) => "patch_size",
        SweepAxis::FilterRadius(_) => "filter_radius",
    };
    let blocks = vec![Block::Sweep {
        axis: axis_name.into(),
        rows,
    }];
    Ok(finish("sweep", echo(&cfg), blocks, clock, output_dir(&cfg.output_dir)))
}

pub fn objects(args: &CommonArgs, vocab_path: Option<&Path>) -> Result<Outcome> {
    let mut clock = Stopwatch::new();
    let mut cfg: ObjectsConfig = load_config(args.config.as_deref())?;
    args.apply(&mut cfg.seed, &mut cfg.output_dir, &mut cfg.manifests);
    cfg.parallelism = args.parallelism(cfg.parallelism);
    if let Some(p) = vocab_path {
        cfg.vocab = Some(p.to_path_buf());
    }
    let seed = require_seed(cfg.seed, "objects")?;
    cfg.train.seed = seed;
    let vocab_file = cfg
        .vocab
        .clone()
        .ok_or_else(|| Error::InvalidConfig("`objects` needs an object vocabulary (--vocab)".into()))?;
    let vocab = Vocabulary::load(&vocab_file)?;
    let manifests = load_manifests(&cfg.manifests)?;
    clock.lap("load");

    let pm = build_presence(&manifests, &vocab)?;
    let mut blocks = vec![
        Block::ClassShares(class_shares(&pm, cfg.min_support, cfg.top_k)?),
        Block::UniqueObjects {
            datasets: unique_object_stats(&pm),
        },
    ];
    clock.lap("statistics");

    let features = FeatureSpec::new(FeatureKind::BagOfObjects);
    let transform = TransformSpec::Identity;
    let mut exp = Experiment::new(&manifests, &DiskImages, &transform, &features, &cfg.train);
    exp.object_vocab = Some(&vocab);
    exp.parallelism = cfg.parallelism;
    let (_, details) = exp.run_trials_detailed(1, cfg.n_train, cfg.n_val)?;
    let detail = &details[0];
    let ranked = rank_classes_by_coefficients(&detail.model, &pm, cfg.min_frequency)?;
    blocks.push(Block::Rankings {
        min_frequency: cfg.min_frequency,
        datasets: pm
            .dataset_names()
            .iter()
            .zip(ranked)
            .map(|(d, classes)| DatasetRanking {
                dataset: d.clone(),
                classes,
            })
            .collect(),
    });
    clock.lap("rankings");

    if cfg.labels {
        let label_vocab = match &cfg.label_vocab {
            Some(p) => Vocabulary::load(p)?,
            None => label_vocabulary(&manifests)?,
        };
        let (labels, _) = single_labels(&manifests, &label_vocab)?;
        let offsets: Vec<usize> = manifests
            .iter()
            .scan(0, |acc, m| {
                let start = *acc;
                *acc += m.len();
                Some(start)
            })
            .collect();
        let label_of = |refs: &[SampleRef]| -> Vec<usize> { refs.iter().map(|&(m, s)| labels[offsets[m] + s]).collect() };
        let datasets_of = |refs: &[SampleRef]| -> Vec<usize> { refs.iter().map(|&(m, _)| m).collect() };
        // Same seed as the logistic-regression trial, hence the same split.
        let split = sample_split(&manifests, cfg.n_train, cfg.n_val, seed)?;
        let (k, n_labels) = (manifests.len(), label_vocab.len());
        let (train_l, train_d) = (label_of(&split.train), datasets_of(&split.train));
        let (val_l, val_d) = (label_of(&split.val), datasets_of(&split.val));
        let rule = MajorityRule::fit(&train_l, &train_d, n_labels, k)?;
        let train_out = rule.apply(&train_l, &train_d)?;
        let val_out = rule.apply(&val_l, &val_d)?;
        let names = label_vocab.names().to_vec();
        blocks.push(Block::ShareAccuracy {
            source: "logistic_regression".into(),
            label_names: names.clone(),
            result: accuracy_vs_majority_share(
                &detail.predictions,
                &detail.val_labels,
                &label_of(&detail.val),
                n_labels,
                k,
                cfg.correlation_min_support,
            )?,
        });
        blocks.push(Block::ShareAccuracy {
            source: "majority_rule".into(),
            label_names: names,
            result: accuracy_vs_majority_share(
                &val_out.predictions,
                &val_d,
                &val_l,
                n_labels,
                k,
                cfg.correlation_min_support,
            )?,
        });
        blocks.push(Block::MajorityRule {
            train_accuracy: train_out.accuracy,
            val_accuracy: val_out.accuracy,
            unseen_val: val_out.unseen.iter().filter(|&&u| u).count(),
            rule,
        });
        clock.lap("labels");
    }
    Ok(finish("objects", echo(&cfg), blocks, clock, output_dir(&cfg.output_dir)))
}

pub fn text(args: &CommonArgs, mode: Option<TextMode>) -> Result<Outcome> {
    let mut clock = Stopwatch::new();
    let mut cfg: TextConfig = load_config(args.config.as_deref())?;
    args.apply(&mut cfg.seed, &mut cfg.output_dir, &mut cfg.manifests);
    cfg.parallelism = args.parallelism(cfg.parallelism);
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if cfg.mode != TextMode::Freq {
        let seed = require_seed(cfg.seed, "text")?;
        cfg.lda.seed = seed;
        cfg.train.seed = seed;
    }
    let manifests = load_manifests(&cfg.manifests)?;
    clock.lap("load");

    let block = match cfg.mode {
        TextMode::Freq => {
            let tokenizer = TokenizerConfig {
                bigrams: true,
                ..cfg.tokenizer.clone()
            };
            let grouped = manifest_tokens(&manifests, cfg.caption, &tokenizer)?;
            Block::Phrases {
                datasets: manifests
                    .iter()
                    .zip(&grouped)
                    .map(|(m, docs)| DatasetPhrases {
                        dataset: m.name.clone(),
                        phrases: phrase_frequencies(docs, cfg.n_top),
                    })
                    .collect(),
            }
        }
        TextMode::Lda => {
            let corpus = corpus_from_manifests(&manifests, cfg.caption, &cfg.tokenizer)?;
            let model = lda_fit(&corpus, &cfg.lda)?;
            let topics = top_word_indices(&model, cfg.top_words)
                .into_iter()
                .enumerate()
                .map(|(t, idx)| TopicWords {
                    words: idx.iter().map(|&w| model.vocab[w].clone()).collect(),
                    probabilities: idx.iter().map(|&w| model.phi[t][w]).collect(),
                })
                .collect();
            Block::Topics {
                vocab_size: corpus.vocab.len(),
                topics,
            }
        }
        TextMode::Classify => {
            let features = FeatureSpec::new(FeatureKind::BagOfWords {
                vocab_size: cfg.vocab_size,
                caption: cfg.caption,
                tokenizer: cfg.tokenizer.clone(),
            });
            let transform = TransformSpec::Identity;
            let mut exp = Experiment::new(&manifests, &DiskImages, &transform, &features, &cfg.train);
            exp.parallelism = cfg.parallelism;
            Block::CaptionTrials {
                proxy: "bag_of_words".into(),
                report: exp.run_trials(cfg.n_trials, cfg.n_train, cfg.n_val)?,
            }
        }
    };
    clock.lap("text");
    Ok(finish("text", echo(&cfg), vec![block], clock, output_dir(&cfg.output_dir)))
}

fn build_transport(cfg: &TransportConfig) -> Result<Box<dyn Transport>> {
    match cfg {
        TransportConfig::Mock { responses } => {
            if responses.is_empty() {
                return Err(Error::InvalidConfig("mock transport needs at least one response".into()));
            }
            Ok(Box::new(MockTransport::scripted(responses.iter().cloned())))
        }
        #[cfg(feature = "http")]
        TransportConfig::Http(http) => Ok(Box::new(crate::llm::HttpTransport::from_env(http.clone())?)),
        #[cfg(not(feature = "http"))]
        TransportConfig::Http(_) => Err(Error::InvalidConfig(
            "this build has no HTTP transport; enable the `http` feature or use a mock".into(),
        )),
    }
}

pub fn llm(args: &CommonArgs, mode: Option<LlmMode>) -> Result<Outcome> {
    let mut clock = Stopwatch::new();
    let mut cfg: LlmConfig = load_config(args.config.as_deref())?;
    args.apply(&mut cfg.seed, &mut cfg.output_dir, &mut cfg.manifests);
    if let Some(m) = mode {
        cfg.mode = m;
    }
    let seed = require_seed(cfg.seed, "llm")?;
    cfg.icl.seed = seed;
    cfg.summary.seed = seed;
    let manifests = load_manifests(&cfg.manifests)?;
    let captions = manifests
        .iter()
        .map(|m| {
            m.samples
                .iter()
                .map(|s| {
                    s.caption(cfg.caption).map(str::to_owned).ok_or_else(|| Error::MissingAnnotation {
                        sample: s.id.clone(),
                        what: caption_name(cfg.caption),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let out_dir = output_dir(&cfg.output_dir);
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let transport = LoggedTransport::new(build_transport(&cfg.transport)?, out_dir.join(&cfg.log_file))?;
    clock.lap("load");
    let block = match cfg.mode {
        LlmMode::Icl => Block::Icl(run_icl_eval(&captions, &transport, &cfg.icl)?),
        LlmMode::Summary => Block::Summary {
            dataset_names: manifests.iter().map(|m| m.name.clone()).collect(),
            summary: summarize_datasets(&captions, &transport, &cfg.summary)?,
        },
    };
    clock.lap("llm");
    Ok(finish("llm", echo(&cfg), vec![block], clock, out_dir))
}

/// Writes `report.json` and every plot table the report supports.
pub fn write_outcome(outcome: &Outcome) -> Result<PathBuf> {
    let path = outcome.out_dir.join("report.json");
    outcome.report.save(&path)?;
    emit_plot_data(&outcome.report, &outcome.out_dir, None)?;
    Ok(path)
}
