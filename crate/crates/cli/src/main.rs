use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rfagree_core::byzantine::{PolicyKind, StrategyKind};
use rfagree_core::estimation::measure_success_rate;
use rfagree_core::harness::{monitor_trace, run_experiment, write_results, ExperimentConfig, Placement, Violation};
use rfagree_core::protocols::IcMode;
use rfagree_core::simnet::{EventTrace, Mode};
use rfagree_core::EstimationConfig;

/// Seeded simulations of reference-frame broadcast and agreement.
#[derive(Parser)]
#[command(name = "rfagree", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Broadcast one node's direction.
    Arcast(RunArgs),
    /// Agree on a direction among all nodes.
    Agree(RunArgs),
    /// Measure the per-link success rate of the direction channel.
    Estimate(EstimateArgs),
    /// Monitor a saved trace file.
    Check {
        trace: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML file mirroring the experiment configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    /// Qubits per measurement axis.
    #[arg(long)]
    qubits: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Faulty-node strategy.
    #[arg(long)]
    adversary: Option<StrategyKind>,
    /// Scheduler policy.
    #[arg(long)]
    scheduler: Option<PolicyKind>,
    #[arg(long)]
    ic_mode: Option<IcMode>,
    /// Deliver exact directions.
    #[arg(long)]
    ideal_channel: bool,
    #[arg(long)]
    max_events: Option<u64>,
    /// Skip bound K of the fair scheduler.
    #[arg(long)]
    fairness_bound: Option<u64>,
    /// Permit t >= n/4; bounds are then recorded but not enforced.
    #[arg(long)]
    allow_excess_faults: bool,
    #[arg(long)]
    faulty_placement: Option<Placement>,
    /// Designated sender of a broadcast run.
    #[arg(long)]
    sender: Option<usize>,
    /// Results file (JSON lines).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trace file with one segment per trial.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, default_value_t = 0.02)]
    delta: f64,
    #[arg(long, default_value_t = 20_000)]
    qubits: u64,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn experiment_config(mode: Mode, a: &RunArgs) -> Result<ExperimentConfig, String> {
    let mut c = match &a.config {
        Some(p) => ExperimentConfig::from_file(p).map_err(|e| e.to_string())?,
        None => ExperimentConfig::default(),
    };
    c.mode = mode;
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(
            if let Some(v) = a.$flag.clone() {
                c.$field = v;
            }
        )*};
    }
    set!(n => n, t => t, delta => delta, qubits => qubits_per_axis, trials => trials, seed => master_seed,
        adversary => fault_strategy, scheduler => scheduler, ic_mode => ic_mode, max_events => max_events,
        fairness_bound => fairness_bound, faulty_placement => faulty_placement, sender => sender);
    c.ideal_channel |= a.ideal_channel;
    c.allow_excess_faults |= a.allow_excess_faults;
    c.validate().map_err(|e| e.to_string())?;
    Ok(c)
}

fn create(path: &PathBuf) -> Result<BufWriter<File>, String> {
    File::create(path).map(BufWriter::new).map_err(|e| format!("{}: {e}", path.display()))
}

fn report(v: &Violation) -> String {
    let inst = v.instance.map(|i| format!(" instance {i}")).unwrap_or_default();
    format!("{:?}{inst} nodes {:?} events {:?}: {}", v.lemma, v.nodes, v.events, v.detail)
}

fn run(mode: Mode, args: &RunArgs) -> Result<ExitCode, String> {
    let cfg = experiment_config(mode, args)?;
    let exp = run_experiment(&cfg, args.trace_out.is_some()).map_err(|e| e.to_string())?;
    if let Some(path) = &args.out {
        write_results(create(path)?, &cfg, &exp.records, &exp.summary).map_err(|e| e.to_string())?;
    }
    if let Some(path) = &args.trace_out {
        let mut w = create(path)?;
        for t in &exp.traces {
            t.write_jsonl(&mut w).map_err(|e| e.to_string())?;
        }
        w.flush().map_err(|e| e.to_string())?;
    }
    let s = &exp.summary;
    for r in exp.records.iter().filter(|r| r.failed()) {
        for v in &r.lemma_violations {
            eprintln!("trial {}: violation {}", r.trial, report(v));
        }
        if r.unexpected_nontermination() {
            eprintln!("trial {}: correct nodes did not terminate ({:?})", r.trial, r.end);
        }
        if let Some(e) = &r.error {
            eprintln!("trial {}: error: {e}", r.trial);
        }
    }
    println!(
        "{} runs: {} conditioned, {} terminated, {} violations, {} unexpected non-terminations, success rate {:.4}",
        s.runs, s.conditioned_runs, s.terminated_runs, s.violations, s.unexpected_nonterminations, s.success_rate
    );
    if let Some(slack) = s.pairwise_slack {
        println!("pairwise slack to 42δ: min {:.6} median {:.6} max {:.6}", slack.min, slack.median, slack.max);
    }
    if cfg.violation_study() {
        println!("violation study: bounds recorded, not enforced");
    }
    Ok(if s.failed_runs == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn check(path: &PathBuf) -> Result<ExitCode, String> {
    let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let traces = EventTrace::read_jsonl(BufReader::new(file)).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut violations = 0;
    for t in &traces {
        let r = monitor_trace(t);
        for v in &r.violations {
            println!("trial {}: violation {}", t.header.trial, report(v));
        }
        violations += r.violations.len();
    }
    println!("{} traces, {violations} violations", traces.len());
    Ok(if violations == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Arcast(a) => run(Mode::Arcast, a),
        Command::Agree(a) => run(Mode::Agree, a),
        Command::Estimate(e) => EstimationConfig::new(e.delta, e.qubits, false).map_err(|e| e.to_string()).map(|cfg| {
            let rate = measure_success_rate(&cfg, e.trials, e.seed);
            println!("delta {} qubits {}: success {:.6} failure {:.6} over {} trials", e.delta, e.qubits, rate, 1.0 - rate, e.trials);
            ExitCode::SUCCESS
        }),
        Command::Check { trace } => check(trace),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}
