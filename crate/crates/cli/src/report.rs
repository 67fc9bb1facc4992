//! `fedldp report`: a human summary of a finished run directory.

use std::fmt::Write;
use std::path::PathBuf;

use clap::Args;

use fedldp_core::federation::PerturbationMode;
use fedldp_core::ranges::RangeMode;
use fedldp_core::shuffle::CompositionMode;

use crate::artifacts::{self, read_required};
use crate::config::{ExperimentConfig, ReportingKind};
use crate::console;
use crate::error::CliError;

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory written by `fedldp run`.
    #[arg(long)]
    pub run: PathBuf,
}

pub fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let config = ExperimentConfig::parse(&read_required(
        &args.run.join(artifacts::CONFIG_SNAPSHOT),
    )?)?;
    let metrics =
        artifacts::parse_metrics_csv(&read_required(&args.run.join(artifacts::METRICS_FILE))?)?;
    if metrics.rows.is_empty() {
        return Err(CliError::config("metrics file holds no rounds"));
    }

    let accuracy = metrics.column("accuracy")?;
    let clip_rate = metrics.column("clip_rate")?;
    let consumed = metrics.column("consumed_budget")?;
    let last = metrics.rows.last().expect("non-empty rows");
    let (best_round, best) = metrics
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| (i + 1, row[accuracy]))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty rows");

    let mut out = String::new();
    let _ = writeln!(out, "run directory: {}", args.run.display());
    if let Some(blobs) = &config.dataset.synthetic_blobs {
        let _ = writeln!(
            out,
            "dataset: synthetic blobs, {} train / {} test, {} features, {} classes",
            blobs.train_samples, blobs.test_samples, blobs.feature_dim, blobs.classes
        );
    } else if let Some(mnist) = &config.dataset.mnist {
        let _ = match mnist.subset {
            Some(n) => writeln!(out, "dataset: mnist at {} (subset {n})", mnist.path.display()),
            None => writeln!(out, "dataset: mnist at {}", mnist.path.display()),
        };
    }
    let _ = writeln!(
        out,
        "model: dims {:?}; {} of {} clients per round; seed {}",
        config.model.dims, config.federation.selected_clients, config.federation.total_clients,
        config.seed
    );
    let _ = writeln!(
        out,
        "privacy: eps {} per report, {} perturbation, {} composition, {} reporting",
        config.privacy.epsilon,
        match config.privacy.perturbation {
            PerturbationMode::TwoPoint => "two-point",
            PerturbationMode::Disabled => "disabled (baseline)",
        },
        match config.privacy.composition {
            CompositionMode::NoShuffle => "no-shuffle",
            CompositionMode::ModelShuffle => "model-shuffle",
            CompositionMode::ParameterShuffle => "parameter-shuffle",
        },
        match config.reporting.kind {
            ReportingKind::Direct => "direct",
            ReportingKind::Shuffled => "shuffled",
        }
    );
    let _ = writeln!(
        out,
        "range policy: {}, initial center {} radius {}",
        match config.range.mode {
            RangeMode::Fixed => "fixed",
            RangeMode::Adaptive => "adaptive",
        },
        config.range.center,
        config.range.radius
    );
    let _ = writeln!(
        out,
        "rounds: {} of {} configured",
        metrics.rows.len(),
        config.federation.rounds
    );
    let _ = writeln!(
        out,
        "final accuracy {:.4} (best {:.4} at round {best_round}); final clip rate {:.3}; \
         total consumed budget {}",
        last[accuracy], best, last[clip_rate], last[consumed]
    );
    console::emit(&out);
    Ok(())
}
