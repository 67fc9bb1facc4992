//! `fedldp verify`: the statistical verification battery.
//!
//! Runs the standard battery (or, under `--mutate`, the deliberately
//! sabotaged variants), writes one JSON line per report, and prints a
//! summary table. Exit 0 means every check behaved as expected: all
//! passing for the standard battery, all failing for the mutants.

use std::fs;
use std::path::PathBuf;

use clap::Args;

use fedldp_core::analysis::{mutation_verification, VerificationPlan, VerificationReport};

use crate::artifacts::{self, resolve_out_dir};
use crate::config::ExperimentConfig;
use crate::console;
use crate::error::{io_at, CliError};

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Optional experiment config; its [verification] section selects
    /// check families and costs.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run the sabotaged mechanism variants instead. Every check must
    /// then fail; a passing check means the battery lost its teeth.
    #[arg(long)]
    pub mutate: bool,
    /// Directory for the JSON-lines report file. Defaults to FEDLDP_OUT,
    /// then the config's output_dir, then the current directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the Monte-Carlo draw count per check.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Override the aggregate repetition count per check.
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Override the battery seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn cmd_verify(args: VerifyArgs) -> Result<(), CliError> {
    let experiment = match &args.config {
        Some(path) => Some(ExperimentConfig::parse(&artifacts::read_required(path)?)?),
        None => None,
    };
    let mut plan = experiment
        .as_ref()
        .map(ExperimentConfig::verification_plan)
        .unwrap_or_else(|| VerificationPlan::all(1_000_000, 10_000, 500));
    if let Some(samples) = args.samples {
        plan.samples = samples;
    }
    if let Some(repetitions) = args.repetitions {
        plan.repetitions = repetitions;
    }
    if let Some(seed) = args.seed {
        plan.seed = seed;
    }
    if plan.samples == 0 || plan.repetitions == 0 {
        return Err(CliError::config(
            "verification needs at least one sample and one repetition",
        ));
    }

    let reports = if args.mutate {
        mutation_verification(plan.samples, plan.repetitions, plan.seed)
    } else {
        plan.run()
    }
    .map_err(|e| CliError::config(format!("verification setup: {e}")))?;

    let dir = resolve_out_dir(
        args.out,
        experiment.as_ref().and_then(|e| e.output_dir.as_deref()),
        PathBuf::from("."),
    );
    fs::create_dir_all(&dir).map_err(|e| io_at(&dir, e))?;
    let file = dir.join(if args.mutate {
        "mutation.jsonl"
    } else {
        "verification.jsonl"
    });
    let mut lines = String::new();
    for report in &reports {
        let line = serde_json::to_string(report)
            .map_err(|e| CliError::failed(format!("cannot serialize report: {e}")))?;
        lines.push_str(&line);
        lines.push('\n');
    }
    fs::write(&file, lines).map_err(|e| io_at(&file, e))?;

    console::emit(&render_table(&reports));
    console::emit_line(&format!("wrote {}", file.display()));

    if args.mutate {
        let survivors: Vec<&str> = reports
            .iter()
            .filter(|r| r.passed)
            .map(|r| r.check.as_str())
            .collect();
        if survivors.is_empty() {
            console::emit_line(&format!(
                "all {} mutant checks failed as they should; the battery has teeth",
                reports.len()
            ));
            Ok(())
        } else {
            Err(CliError::failed(format!(
                "mutants survived {} of {} checks: {}",
                survivors.len(),
                reports.len(),
                survivors.join(", ")
            )))
        }
    } else {
        let failed: Vec<&str> = reports
            .iter()
            .filter(|r| !r.passed)
            .map(|r| r.check.as_str())
            .collect();
        if failed.is_empty() {
            console::emit_line(&format!("all {} checks passed", reports.len()));
            Ok(())
        } else {
            Err(CliError::failed(format!(
                "{} of {} checks failed: {}",
                failed.len(),
                reports.len(),
                failed.join(", ")
            )))
        }
    }
}

fn render_table(reports: &[VerificationReport]) -> String {
    use std::fmt::Write;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<22} {:<22} {:<6} {:>13} {:>13} {:>12}  {}",
        "check", "mechanism", "result", "theoretical", "empirical", "tolerance", "detail"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<22} {:<22} {:<6} {:>13.6} {:>13.6} {:>12.6}  {}",
            r.check,
            r.mechanism.label(),
            if r.passed { "pass" } else { "FAIL" },
            r.theoretical,
            r.empirical,
            r.tolerance,
            r.detail
        );
    }
    out
}
