//! The `pgan` command-line tool: dataset synthesis, training, evaluation,
//! single-image generation, qualitative grids and ablation runs.

pub mod ablation;
pub mod args;
pub mod commands;
pub mod grid;

use std::path::Path;

pub use ablation::{held_out_ssim, run_ablation, AblationReport, AblationRow, ABLATION_VARIANTS};
pub use args::{Cli, Command};
pub use commands::{load_run_config, RunConfig};
pub use grid::{grid_size, render_grid, select_rows, GRID_MARGIN};

/// Errors the operator caused: bad flags, missing inputs, invalid configs.
#[derive(Debug, thiserror::Error)]
pub enum UsageError {
    #[error("{0}")]
    Invalid(String),
    #[error("{what} {} does not exist", path.display())]
    MissingPath { what: &'static str, path: std::path::PathBuf },
}

pub fn require_path(what: &'static str, path: &Path) -> Result<(), UsageError> {
    if path.exists() {
        Ok(())
    } else {
        Err(UsageError::MissingPath { what, path: path.to_path_buf() })
    }
}

/// 2 for usage and configuration errors, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let usage = err.chain().any(|e| {
        e.is::<UsageError>()
            || e.is::<serde_json::Error>()
            || matches!(e.downcast_ref::<pgan_core::Error>(), Some(pgan_core::Error::Config(_) | pgan_core::Error::Json(_)))
    });
    if usage {
        2
    } else {
        1
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Grid(a) => commands::grid(&a),
        Command::Generate(a) => commands::generate(&a),
        Command::TrainClassifier(a) => commands::train_classifier(&a),
        Command::Ablate(a) => commands::ablate(&a),
    }
}

/// Prints `value` as pretty JSON under a heading.
pub fn echo<S: serde::Serialize>(heading: &str, value: &S) -> anyhow::Result<()> {
    println!("{heading}:\n{}", serde_json::to_string_pretty(value)?);
    Ok(())
}
