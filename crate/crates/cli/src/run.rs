//! `fedldp run`: one federated training run from a config file.

use std::path::PathBuf;

use clap::Args;

use fedldp_core::federation::{self, FederationConfig, PerturbationMode, RoundState};

use crate::artifacts::{self, resolve_out_dir};
use crate::config::ExperimentConfig;
use crate::console;
use crate::error::CliError;

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment description (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Run directory for the artifacts. Defaults to the FEDLDP_OUT
    /// environment variable, then the config's output_dir, then
    /// runs/run-<seed> (with a -baseline suffix under --no-noise).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Disable clipping and perturbation: a clean federated baseline on
    /// the same seed and data.
    #[arg(long)]
    pub no_noise: bool,
}

pub fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let text = artifacts::read_required(&args.config)?;
    let mut experiment = ExperimentConfig::parse(&text)?;
    if args.no_noise {
        experiment.privacy.perturbation = PerturbationMode::Disabled;
    }
    let default_name = if args.no_noise {
        format!("run-{}-baseline", experiment.seed)
    } else {
        format!("run-{}", experiment.seed)
    };
    let dir = resolve_out_dir(
        args.out,
        experiment.output_dir.as_deref(),
        PathBuf::from("runs").join(default_name),
    );

    let states = execute(&experiment)?;

    // The snapshot reproduces this run anywhere; keep the output path out
    // of it so replaying does not point back at this directory. Artifacts
    // land before anything prints, so a closed stdout cannot lose a run.
    let mut snapshot = experiment;
    snapshot.output_dir = None;
    artifacts::write_run_dir(&dir, &snapshot, &states)?;

    for state in &states {
        let m = &state.metrics;
        console::emit_line(&format!(
            "round {:>3}: accuracy {:.4}, clip rate {:.3}, consumed budget {}",
            m.round, m.accuracy, m.clip_rate, m.consumed_budget
        ));
    }
    console::emit_line(&format!("wrote {}", dir.display()));
    Ok(())
}

/// Builds data and config, validates, and runs the federated loop.
/// Validation problems are config errors; a failure after a valid start
/// (a diverged model, say) is a run failure.
pub fn execute(experiment: &ExperimentConfig) -> Result<Vec<RoundState>, CliError> {
    let (train, test) = experiment.datasets()?;
    let federation: FederationConfig = experiment.federation_config()?;
    federation
        .validate(&train, &test)
        .map_err(|e| CliError::config(e.to_string()))?;
    federation::run_federated(&federation, &train, &test)
        .map_err(|e| CliError::failed(format!("run aborted: {e}")))
}
