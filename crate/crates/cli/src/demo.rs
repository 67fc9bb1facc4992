//! `fedldp shuffle-demo`: a watchable split-and-shuffle round.
//!
//! A handful of clients initialize tiny models, split them into
//! per-parameter reports, and release them on the synchronized schedule.
//! The printed pooled stream is exactly what the collector sees: arrival
//! times and parameter addresses, no senders. The closing lines show how
//! the per-report budget composes under each shuffling granularity.

use std::fmt::Write;

use clap::Args;
use rand::Rng;

use fedldp_core::mechanism::PrivacyBudget;
use fedldp_core::model::ModelWeights;
use fedldp_core::seeds;
use fedldp_core::shuffle::{
    collect, composed_budget, group_reports, schedule, split, CompositionMode, ShuffleConfig,
    TimingProfile,
};

use crate::console;
use crate::error::CliError;

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// How many clients report.
    #[arg(long, default_value_t = 3)]
    pub clients: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Length of the uniform send window.
    #[arg(long, default_value_t = 1.0)]
    pub window: f64,
    /// Per-report budget used in the composition summary.
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
}

pub fn cmd_demo(args: DemoArgs) -> Result<(), CliError> {
    if args.clients == 0 {
        return Err(CliError::config("need at least one client to demo"));
    }
    let bad = |e: fedldp_core::Error| CliError::config(e.to_string());
    let budget = PrivacyBudget::new(args.epsilon).map_err(bad)?;

    // A 3-2 model: six weights plus two biases, eight reports per client.
    let dims = [3usize, 2];
    let dimension = dims[0] * dims[1] + dims[1];

    // Per-client hardware, drawn once; the schedule must wait for the
    // slowest responder, so every client shares one window.
    let profiles: Vec<TimingProfile> = (0..args.clients)
        .map(|c| {
            let mut rng = seeds::profile_rng(args.seed, c as u64);
            TimingProfile::new(rng.random_range(0.5..2.0), rng.random_range(0.05..0.3))
        })
        .collect::<Result<_, _>>()
        .map_err(bad)?;
    let slowest = profiles
        .iter()
        .map(|p| p.response())
        .fold(f64::NEG_INFINITY, f64::max);
    let config = ShuffleConfig::new(slowest, args.window).map_err(bad)?;

    let mut trace = String::new();
    let _ = writeln!(
        trace,
        "split-and-shuffle: {} clients, {dimension} reports each, window {:.2}",
        args.clients, args.window
    );
    let _ = writeln!(
        trace,
        "synchronized start: every client waits until t = {slowest:.3} (slowest response), \
         then sends each report at an independent uniform time in the window"
    );

    let mut batches = Vec::with_capacity(args.clients);
    for (c, profile) in profiles.iter().enumerate() {
        let mut rng = seeds::client_rng(args.seed, 0, c as u64);
        let model = ModelWeights::xavier_scaled(&dims, &[1.0], &mut rng).map_err(bad)?;
        let entries = split(&model);
        let reports = schedule(&entries, *profile, &config, &mut rng).map_err(bad)?;
        let _ = writeln!(
            trace,
            "client {c}: response time {:.3}, {} reports scheduled",
            profile.response(),
            reports.len()
        );
        batches.push(reports);
    }

    let pooled = collect(&batches).map_err(bad)?;
    let _ = writeln!(
        trace,
        "\npooled stream as the collector sees it (no sender attached):"
    );
    for report in &pooled {
        let _ = writeln!(
            trace,
            "  t = {:.4}  layer {} offset {}  value {:+.4}",
            report.arrival, report.id.layer, report.id.offset, report.value
        );
    }

    let groups = group_reports(&pooled);
    let _ = writeln!(
        trace,
        "\n{} reports pooled into {} parameter groups of {} anonymous values each",
        pooled.len(),
        groups.len(),
        args.clients
    );

    let rounds = 10;
    let _ = writeln!(
        trace,
        "budget after {rounds} such rounds at eps {} per report: \
         no shuffling {}, model shuffling {}, parameter shuffling {}",
        args.epsilon,
        composed_budget(CompositionMode::NoShuffle, budget, rounds, dimension),
        composed_budget(CompositionMode::ModelShuffle, budget, rounds, dimension),
        composed_budget(CompositionMode::ParameterShuffle, budget, rounds, dimension),
    );
    console::emit(&trace);
    Ok(())
}
