//! Command-line front end. Every analysis subcommand writes `report.json`
//! plus plot-ready CSV tables into its output directory.
//!
//! Exit codes: 0 success, 1 bad arguments or configuration, 2 runtime
//! failure.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use commands::CommonArgs;
use config::{LlmMode, TextMode};
use report::{emit_plot_data, PlotKind, Report};

#[derive(Debug, Parser)]
#[command(name = "biaslens", version, about = "Measure and explain bias among image datasets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply a transform to every image and save the results.
    Transform(CommonArgs),
    /// Dataset classification trials on transformed images.
    Classify(CommonArgs),
    /// Classification accuracy across a transform parameter.
    Sweep(CommonArgs),
    /// Object-level statistics from annotation manifests.
    Objects {
        #[command(flatten)]
        common: CommonArgs,
        /// Object class vocabulary, one name per line.
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Caption phrase frequencies, topics or caption classification.
    Text {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        mode: Option<TextMode>,
    },
    /// Language-model dataset classification or summaries.
    Llm {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        mode: Option<LlmMode>,
    },
    /// Regenerate plot tables from an existing report.
    Report {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to the report's directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit only this table; fails when the report lacks its block.
        #[arg(long, value_enum)]
        plot: Option<PlotKind>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Transform(_) => "transform",
            Command::Classify(_) => "classify",
            Command::Sweep(_) => "sweep",
            Command::Objects { .. } => "objects",
            Command::Text { .. } => "text",
            Command::Llm { .. } => "llm",
            Command::Report { .. } => "report",
        }
    }
}

/// Runs a subcommand, returning the files it wrote.
pub fn execute(command: &Command) -> Result<Vec<PathBuf>> {
    let outcome = match command {
        Command::Transform(a) => commands::transform(a)?,
        Command::Classify(a) => commands::classify(a)?,
        Command::Sweep(a) => commands::sweep(a)?,
        Command::Objects { common, vocab } => commands::objects(common, vocab.as_deref())?,
        Command::Text { common, mode } => commands::text(common, *mode)?,
        Command::Llm { common, mode } => commands::llm(common, *mode)?,
        Command::Report { input, out, plot } => {
            let report = Report::load(input)?;
            let dir = match out {
                Some(d) => d.clone(),
                None => input.parent().map(PathBuf::from).unwrap_or_default(),
            };
            return emit_plot_data(&report, &dir, *plot);
        }
    };
    Ok(vec![commands::write_outcome(&outcome)?])
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        1
    } else {
        2
    }
}

/// Parses `argv` (program name first) and runs it.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("biaslens {}: {e}", cli.command.name());
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_and_usage_codes() {
        assert_eq!(run(["biaslens", "--help"]), 0);
        assert_eq!(run(["biaslens", "--version"]), 0);
        assert_eq!(run(["biaslens", "frobnicate"]), 1);
        assert_eq!(run(["biaslens", "text", "--mode", "nope"]), 1);
    }

    #[test]
    fn missing_seed_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o");
        assert_eq!(run(["biaslens".as_ref(), "classify".as_ref(), "--out".as_ref(), out.as_os_str()]), 1);
        assert!(!out.join("report.json").exists());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
