//! `fedldp sweep`: the same experiment across a list of privacy budgets.
//!
//! Each budget gets its own `metrics-eps-<eps>.csv` in the sweep
//! directory; the base config is snapshotted alongside so the whole sweep
//! reproduces from the directory contents plus the epsilon list.

use std::fs;
use std::path::PathBuf;

use clap::Args;

use crate::artifacts::{self, resolve_out_dir};
use crate::config::ExperimentConfig;
use crate::console;
use crate::error::{io_at, CliError};
use crate::run;

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Experiment description (TOML); its epsilon is replaced per run.
    #[arg(long)]
    pub config: PathBuf,
    /// Sweep directory. Defaults to FEDLDP_OUT, then the config's
    /// output_dir, then runs/sweep-<seed>.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-report budgets to sweep, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,1,5,10")]
    pub epsilons: Vec<f64>,
}

pub fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let text = artifacts::read_required(&args.config)?;
    let base = ExperimentConfig::parse(&text)?;
    let dir = resolve_out_dir(
        args.out,
        base.output_dir.as_deref(),
        PathBuf::from("runs").join(format!("sweep-{}", base.seed)),
    );
    fs::create_dir_all(&dir).map_err(|e| io_at(&dir, e))?;

    let mut snapshot = base.clone();
    snapshot.output_dir = None;
    let snapshot_path = dir.join(artifacts::CONFIG_SNAPSHOT);
    fs::write(&snapshot_path, snapshot.to_toml()?).map_err(|e| io_at(&snapshot_path, e))?;

    for &epsilon in &args.epsilons {
        let mut experiment = base.clone();
        experiment.privacy.epsilon = epsilon;
        let states = run::execute(&experiment)?;
        let path = dir.join(format!("metrics-eps-{epsilon}.csv"));
        fs::write(&path, artifacts::metrics_csv(&states)).map_err(|e| io_at(&path, e))?;
        let last = states.last().expect("validated rounds > 0");
        console::emit_line(&format!(
            "eps {:>5}: final accuracy {:.4}, consumed budget {}",
            epsilon, last.metrics.accuracy, last.metrics.consumed_budget
        ));
    }
    console::emit_line(&format!("wrote {}", dir.display()));
    Ok(())
}
