//! The `gpkt` command line: argument parsing, configs and subcommands.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::run;
pub use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(
    name = "gpkt",
    version,
    about = "Feature-prior knowledge transfer between dense networks"
)]
pub struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config's `out_dir`; default `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Replaces the seed of the run: the teacher plan for `train-teacher` and
    /// `compare`, the student plan for `distill`.
    #[arg(long, global = true)]
    pub seed_override: Option<u64>,
    /// Worker threads for `compare`.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the teacher; writes teacher.fpnn and teacher_metrics.csv.
    TrainTeacher,
    /// Cache teacher features; writes features.fpfc.
    ExtractFeatures,
    /// Train a student in the plan's mode; writes student.fpnn, run_log.csv
    /// and student_metrics.csv.
    Distill,
    /// Evaluate a model on the test split; writes evaluation.csv.
    Evaluate {
        /// Model to evaluate (default: `<out>/student.fpnn`).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run every mode over the config's seeds; writes comparison.csv and
    /// summary.txt.
    Compare,
}
