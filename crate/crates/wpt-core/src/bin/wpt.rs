//! Command-line front end: Monte-Carlo sweeps, single-channel solves,
//! the moment self-check, and channel file generation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use wpt_core::channel::{BandPlan, Channel, TapProfile};
use wpt_core::harness::{
    self, csv_to_string, resolve_threads, run_experiment, summary_to_json, ExperimentSpec,
};
use wpt_core::rectenna::{signal_moments, time_average_moments, RectifierParams};
use wpt_core::{C64, CombinerSolution, Error, ReceiveCombiner, Scheme, SolverOpts};

#[derive(Parser)]
#[command(name = "wpt", version, about = "Multi-sine wireless power transfer simulator")]
struct Cli {
    /// Worker threads (overrides the WPT_THREADS environment variable).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo sweep and write rows as CSV.
    Simulate(SimulateArgs),
    /// Optimize one scheme on a stored channel and print the solution.
    Optimize(OptimizeArgs),
    /// Self-check: frequency-domain moments against the time-average oracle.
    Oracle(OracleArgs),
    /// Draw a channel realization and store it as JSON.
    ChannelGen(ChannelGenArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "tx-antennas", value_delimiter = ',')]
    tx_antennas: Vec<usize>,
    #[arg(long = "tones", value_delimiter = ',')]
    tones: Vec<usize>,
    #[arg(long = "rx-antennas", value_delimiter = ',')]
    rx_antennas: Vec<usize>,
    /// Scheme name (repeatable): dc-opt, dc-ass, rf-opt, rf-ass, rf-abf.
    #[arg(long = "scheme")]
    schemes: Vec<String>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "power-dbm")]
    power_dbm: Option<f64>,
    #[arg(long = "center-hz")]
    center_hz: Option<f64>,
    #[arg(long = "bandwidth-hz")]
    bandwidth_hz: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long = "max-iterations")]
    max_iterations: Option<usize>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary JSON destination.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Channel file produced by channel-gen (or handwritten).
    #[arg(long)]
    channel: PathBuf,
    #[arg(long)]
    scheme: String,
    #[arg(long = "power-dbm", default_value_t = -30.0)]
    power_dbm: f64,
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    #[arg(long = "max-iterations", default_value_t = 100)]
    max_iterations: usize,
    /// Solution JSON destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 8)]
    tones: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct ChannelGenArgs {
    #[arg(long = "tx-antennas")]
    tx_antennas: usize,
    #[arg(long = "rx-antennas")]
    rx_antennas: usize,
    #[arg(long)]
    tones: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "center-hz", default_value_t = 5.18e9)]
    center_hz: f64,
    #[arg(long = "bandwidth-hz", default_value_t = 1e7)]
    bandwidth_hz: f64,
    /// Destination path for the channel JSON.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Parse(_) | Error::Invalid(_) | Error::Dimension(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Simulate(args) => simulate(args, cli.threads),
        Command::Optimize(args) => optimize(args),
        Command::Oracle(args) => oracle(args),
        Command::ChannelGen(args) => channel_gen(args),
    }
}

fn parse_schemes(names: &[String]) -> Result<Vec<Scheme>, Error> {
    names.iter().map(|s| s.parse::<Scheme>()).collect()
}

fn simulate(args: SimulateArgs, threads: Option<usize>) -> Result<ExitCode, Error> {
    let mut spec = match &args.config {
        Some(path) => ExperimentSpec::load(path)?,
        None => ExperimentSpec {
            tx_antennas: vec![],
            tones: vec![],
            rx_antennas: vec![],
            schemes: vec![],
            realizations: 100,
            seed: 0,
            power_dbm: -30.0,
            center_hz: 5.18e9,
            bandwidth_hz: 1e7,
            tap_powers: None,
            tap_spacing_s: None,
            rectifier: RectifierParams::default(),
            epsilon: SolverOpts::default().epsilon,
            max_iterations: SolverOpts::default().max_iterations,
        },
    };
    if !args.tx_antennas.is_empty() {
        spec.tx_antennas = args.tx_antennas;
    }
    if !args.tones.is_empty() {
        spec.tones = args.tones;
    }
    if !args.rx_antennas.is_empty() {
        spec.rx_antennas = args.rx_antennas;
    }
    if !args.schemes.is_empty() {
        spec.schemes = parse_schemes(&args.schemes)?;
    }
    if let Some(v) = args.realizations {
        spec.realizations = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    if let Some(v) = args.power_dbm {
        spec.power_dbm = v;
    }
    if let Some(v) = args.center_hz {
        spec.center_hz = v;
    }
    if let Some(v) = args.bandwidth_hz {
        spec.bandwidth_hz = v;
    }
    if let Some(v) = args.epsilon {
        spec.epsilon = v;
    }
    if let Some(v) = args.max_iterations {
        spec.max_iterations = v;
    }

    let run = run_experiment(&spec, resolve_threads(threads))?;
    let csv = csv_to_string(&run.rows);
    match &args.out {
        Some(path) => {
            std::fs::write(path, csv)?;
            eprintln!("wrote {} rows to {}", run.rows.len(), path.display());
        }
        None => print!("{csv}"),
    }
    if let Some(path) = &args.summary {
        std::fs::write(path, summary_to_json(&run.summary))?;
        eprintln!("wrote summary for {} cells to {}", run.summary.len(), path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn vector_json(v: &wpt_core::CVector) -> serde_json::Value {
    serde_json::json!({
        "re": v.iter().map(|z| z.re).collect::<Vec<_>>(),
        "im": v.iter().map(|z| z.im).collect::<Vec<_>>(),
    })
}

fn solution_json(sol: &CombinerSolution, p_out: f64, p_rf: f64) -> serde_json::Value {
    let receive = match &sol.receive {
        ReceiveCombiner::None => serde_json::Value::Null,
        ReceiveCombiner::PerTone(ws) => serde_json::json!({
            "type": "per-tone",
            "vectors": ws.iter().map(vector_json).collect::<Vec<_>>(),
        }),
        ReceiveCombiner::Common(w) => serde_json::json!({
            "type": "common",
            "vector": vector_json(w),
        }),
    };
    serde_json::json!({
        "scheme": sol.scheme,
        "objective_v": sol.objective,
        "p_out_w": p_out,
        "p_rf_w": p_rf,
        "iterations": sol.report.iterations,
        "converged": sol.report.converged,
        "relative_step": sol.report.relative_step,
        "objective_trace": sol.report.objective_trace,
        "waveform": {
            "M": sol.waveform.tx_antennas(),
            "N": sol.waveform.tones(),
            "power_w": sol.waveform.total_power(),
            "s": vector_json(sol.waveform.stacked()),
        },
        "receive": receive,
    })
}

fn optimize(args: OptimizeArgs) -> Result<ExitCode, Error> {
    let channel = Channel::load(&args.channel)?;
    let scheme = args.scheme.parse::<Scheme>()?;
    let power = 1e-3 * 10f64.powf(args.power_dbm / 10.0);
    let opts = SolverOpts {
        epsilon: args.epsilon,
        max_iterations: args.max_iterations,
    };
    if !(opts.epsilon.is_finite() && opts.epsilon > 0.0) || opts.max_iterations == 0 {
        return Err(Error::Invalid("solver options out of range".into()));
    }
    let params = RectifierParams::default();
    let sol = harness::solve_scheme(&channel, scheme, power, &params, &opts)?;
    let (p_out, p_rf) = harness::solution_powers(&sol, &channel, &params);
    let text = serde_json::to_string_pretty(&solution_json(&sol, p_out, p_rf))
        .expect("solution serialization cannot fail");
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn oracle(args: OracleArgs) -> Result<ExitCode, Error> {
    if args.tones == 0 || args.trials == 0 {
        return Err(Error::Invalid("oracle needs tones >= 1 and trials >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..args.trials {
        let amps: Vec<C64> = (0..args.tones)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                // Amplitudes around the microwatt scale, like real solves.
                C64::new(re, im) * 1e-3
            })
            .collect();
        let (e2, e4) = signal_moments(&amps);
        let (o2, o4) = time_average_moments(&amps);
        let rel2 = (e2 - o2).abs() / o2.abs().max(f64::MIN_POSITIVE);
        let rel4 = (e4 - o4).abs() / o4.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(rel2).max(rel4);
    }
    println!("max relative moment error over {} trials: {worst:.3e}", args.trials);
    if worst <= 1e-9 {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("moment mismatch exceeds 1e-9");
        Ok(ExitCode::from(1))
    }
}

fn channel_gen(args: ChannelGenArgs) -> Result<ExitCode, Error> {
    let band = BandPlan::new(args.center_hz, args.bandwidth_hz, args.tones)?;
    let profile = TapProfile::indoor_default();
    let channel = Channel::generate(args.tx_antennas, args.rx_antennas, band, &profile, args.seed)?;
    channel.save(&args.out)?;
    eprintln!(
        "wrote {}x{} channel with {} tones to {}",
        args.rx_antennas,
        args.tx_antennas,
        args.tones,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}
