use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use balloc::experiments::calibration::{self, write_calibration};
use balloc::experiments::campaign::{meta_path, run_campaign_with, write_csv, write_csv_to, write_meta, RunOptions};
use balloc::experiments::config::parse_config;
use balloc::experiments::lower_bounds::{self, DEFAULT_KAPPAS};
use balloc::experiments::presets::{preset, Preset, Scale};
use balloc::graphs::{conductance_exact, generate, GraphKind, RegularGraph};
use balloc::potentials::drift_sweep;
use balloc::processes::{check_c1, check_c2, check_d0, check_d1, check_d2, probability_vector};
use balloc::sim::{self, BatchRunConfig};
use balloc::{Error, NormalizedLoads, ProcessKind, ProcessSpec, Result, RngSeedPlan, TieBreaking, WeightDistribution, WeightKind};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "balloc", version, about = "Batched balls-into-bins simulation and verification")]
struct Cli {
    /// Master seed. Overrides the seed of a campaign config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Use the full-size preset parameters (n = 1000, 100 runs per point).
    #[arg(long, global = true)]
    paper_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one simulation and print the gap at every batch boundary.
    Simulate(SimulateArgs),
    /// Run a campaign from a JSON config or a named preset and write CSV.
    Campaign(CampaignArgs),
    /// Print the vector conditions of a process as JSON.
    CheckConditions(CheckArgs),
    /// Exact conductance of a graph given as an edge list.
    Conductance { graph_file: PathBuf },
    /// Write the edge list of a generated graph.
    Graph {
        /// `cycle:N`, `hypercube:DIM`, `complete:N` or `random_regular:N:D[:SEED]`.
        kind: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the one-step drift inequality on random load vectors.
    DriftCheck {
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        vectors: usize,
        /// Second-order constant K.
        #[arg(long, default_value_t = 1.0)]
        k: f64,
    },
    /// Lower-bound experiments.
    LowerBound {
        #[command(subcommand)]
        which: LowerBound,
    },
    /// Recompute the pilot-calibrated thresholds and write them as JSON.
    Calibrate {
        #[arg(long, default_value = "calibration.json")]
        out: PathBuf,
        #[arg(long, default_value_t = calibration::PILOT_SEED)]
        pilot_seed: u64,
    },
}

#[derive(Args, Debug)]
struct ProcessArgs {
    /// `one_choice`, `two_choice`, `three_choice`, `d_choice:D`, `one_plus_beta:B`,
    /// `quantile:DELTA` or `graphical:EDGE_FILE`.
    #[arg(long, default_value = "two_choice")]
    process: String,
    #[arg(long, value_enum, default_value_t = Ties::Deterministic)]
    ties: Ties,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Ties {
    Deterministic,
    Random,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Batch size (defaults to n).
    #[arg(long)]
    b: Option<u64>,
    /// Number of balls (defaults to 100 b).
    #[arg(long)]
    m: Option<u64>,
    #[command(flatten)]
    process: ProcessArgs,
    /// `unit`, `exponential`, `scaled_geometric:Q` or `uniform_bounded`.
    #[arg(long, default_value = "unit")]
    weights: String,
    /// Gap samples at evenly spaced steps inside the final batch.
    #[arg(long, default_value_t = 0)]
    midbatch: usize,
    /// Print the full trace as JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct CampaignArgs {
    /// JSON campaign config.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// fig5, fig6, fig7 or fig8.
    #[arg(long)]
    preset: Option<String>,
    /// Output CSV (defaults to the config's `output`, else stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock time per run in `runtime_ms`.
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Process, as accepted by `--process`.
    process: String,
    n: usize,
    /// Quantile parameter of the prefix conditions (defaults per process).
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Cap constant of the max-entry conditions (defaults per process).
    #[arg(long)]
    c: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum LowerBound {
    /// Load of the max-probability bin after one batch from empty.
    FirstBatch {
        #[arg(long, default_value_t = 128)]
        n: usize,
        /// Defaults to 2 ceil(n ln n).
        #[arg(long)]
        b: Option<u64>,
        #[arg(long, default_value_t = 200)]
        runs: usize,
        #[command(flatten)]
        process: ProcessArgs,
    },
    /// Gap after ceil(n ln n) balls for vectors bounded away from zero.
    Log {
        #[arg(long, default_value_t = 256)]
        n: usize,
        /// Defaults to n.
        #[arg(long)]
        b: Option<u64>,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value = "one_plus_beta:0.5")]
        process: String,
        /// Defaults to the committed calibration.
        #[arg(long)]
        k_hat: Option<f64>,
    },
    /// Spacing between the two smallest of n Poisson samples.
    Poisson {
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Defaults to 16 ln n.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, value_delimiter = ',')]
        kappa: Vec<f64>,
    },
}

fn parse_process(text: &str) -> Result<ProcessKind> {
    let (name, arg) = match text.split_once(':') {
        Some((a, b)) => (a, Some(b)),
        None => (text, None),
    };
    let need = |what: &str| {
        arg.ok_or_else(|| Error::InvalidParameter(format!("process `{name}` needs `:{what}`")))
    };
    let num = |what: &str| -> Result<f64> {
        let s = need(what)?;
        s.parse()
            .map_err(|_| Error::InvalidParameter(format!("bad {what} `{s}` for process `{name}`")))
    };
    Ok(match name {
        "one_choice" => ProcessKind::OneChoice,
        "two_choice" => ProcessKind::two_choice(),
        "three_choice" => ProcessKind::DChoice { d: 3 },
        "d_choice" => ProcessKind::DChoice { d: num("D")? as u32 },
        "one_plus_beta" => ProcessKind::OnePlusBeta { beta: num("BETA")? },
        "quantile" => ProcessKind::Quantile { delta: num("DELTA")? },
        "graphical" => ProcessKind::Graphical(Arc::new(RegularGraph::read_edge_list(Path::new(need("EDGE_FILE")?))?)),
        other => return Err(Error::InvalidParameter(format!("unknown process `{other}`"))),
    })
}

fn parse_spec(args: &ProcessArgs) -> Result<ProcessSpec> {
    let ties = match args.ties {
        Ties::Deterministic => TieBreaking::Deterministic,
        Ties::Random => TieBreaking::Random,
    };
    Ok(ProcessSpec::new(parse_process(&args.process)?, ties))
}

fn parse_weights(text: &str) -> Result<WeightDistribution> {
    let kind = match text.split_once(':') {
        None if text == "unit" => WeightKind::Unit,
        None if text == "exponential" => WeightKind::Exponential,
        None if text == "uniform_bounded" => WeightKind::UniformBounded,
        Some(("scaled_geometric", q)) => WeightKind::ScaledGeometric {
            q: q.parse().map_err(|_| Error::InvalidParameter(format!("bad q `{q}`")))?,
        },
        _ => return Err(Error::InvalidParameter(format!("unknown weights `{text}`"))),
    };
    WeightDistribution::new(kind)
}

fn parse_graph_kind(text: &str) -> Result<GraphKind> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::InvalidParameter(format!("bad graph `{text}`"));
    let int = |i: usize| -> Result<u64> { parts.get(i).ok_or_else(bad)?.parse().map_err(|_| bad()) };
    Ok(match parts[0] {
        "cycle" => GraphKind::Cycle { n: int(1)? as usize },
        "hypercube" => GraphKind::Hypercube { dim: int(1)? as u32 },
        "complete" => GraphKind::Complete { n: int(1)? as usize },
        "random_regular" => GraphKind::RandomRegular {
            n: int(1)? as usize,
            d: int(2)? as usize,
            seed: if parts.len() > 3 { int(3)? } else { 0 },
        },
        _ => return Err(bad()),
    })
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    writeln!(std::io::stdout().lock(), "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn simulate(args: SimulateArgs, seed: u64) -> Result<()> {
    let b = args.b.unwrap_or(args.n as u64);
    let mut cfg = BatchRunConfig::new(args.n, b, args.m.unwrap_or(100 * b), parse_spec(&args.process)?);
    cfg.weights = parse_weights(&args.weights)?;
    cfg.seed_plan = RngSeedPlan::new(seed, 0);
    cfg.midbatch_samples = args.midbatch;
    let trace = sim::run(&cfg)?;
    if args.json {
        return print_json(&trace);
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let io = |e| Error::io("<stdout>", e);
    writeln!(out, "step,gap,min_y").map_err(io)?;
    for r in &trace.boundaries {
        writeln!(out, "{},{},{}", r.step, r.gap, r.min_y).map_err(io)?;
    }
    for s in &trace.midbatch {
        writeln!(out, "# midbatch step={} gap={}", s.step, s.gap).map_err(io)?;
    }
    Ok(())
}

fn campaign(args: CampaignArgs, cli_seed: Option<u64>, scale: Scale) -> Result<()> {
    let mut c = match (&args.config, &args.preset) {
        (Some(path), _) => parse_config(path)?,
        (None, Some(name)) => preset(name.parse::<Preset>()?, scale, 0),
        (None, None) => unreachable!("clap requires a config or a preset"),
    };
    if let Some(seed) = cli_seed {
        c.seed = seed;
    }
    let result = run_campaign_with(&c, RunOptions { timing: args.timing })?;
    match args.out.or_else(|| c.output.clone()) {
        Some(path) => {
            write_csv(&result, &path)?;
            write_meta(&result, &path)?;
            eprintln!(
                "wrote {} rows to {} (metadata in {})",
                result.rows.len(),
                path.display(),
                meta_path(&path).display()
            );
        }
        None => write_csv_to(&result, std::io::stdout().lock())?,
    }
    Ok(())
}

fn check_conditions(args: CheckArgs) -> Result<()> {
    let kind = parse_process(&args.process)?;
    let (delta0, eps0, c0) = match kind {
        ProcessKind::OnePlusBeta { beta } => (0.25, beta / 2.0, 2.0),
        ProcessKind::Quantile { delta } => (delta, 1.0 - delta, 2.0),
        ProcessKind::DChoice { d } => (0.25, 0.5, d as f64),
        _ => (0.25, 0.5, 2.0),
    };
    let (delta, eps, c) = (
        args.delta.unwrap_or(delta0),
        args.epsilon.unwrap_or(eps0),
        args.c.unwrap_or(c0),
    );
    let p = match &kind {
        ProcessKind::Graphical(g) => {
            // ranks follow vertex order on all-distinct loads
            let y = NormalizedLoads::from_values((0..g.n()).map(|v| -(v as f64)).collect());
            let rank: Vec<usize> = (0..g.n()).collect();
            balloc::graphs::graphical_probability_vector(g, &y, &rank)
        }
        _ => probability_vector(&kind, args.n)?,
    };
    let reports = vec![
        check_d0(&p),
        check_d1(&p, delta, eps)?,
        check_d2(&p, c)?,
        check_c1(&p, delta, eps)?,
        check_c2(&p, c),
    ];
    print_json(&json!({
        "process": kind.label(),
        "n": p.n(),
        "vector": p.as_slice(),
        "reports": reports,
    }))
}

fn lower_bound(which: LowerBound, seed: u64) -> Result<()> {
    match which {
        LowerBound::FirstBatch { n, b, runs, process } => {
            let b = b.unwrap_or_else(|| 2 * (n as f64 * (n as f64).ln()).ceil() as u64);
            let out = lower_bounds::first_batch_lower_bound(n, b, &parse_spec(&process)?, runs, seed)?;
            print_json(&json!({
                "n": out.n,
                "b": out.b,
                "c_cap": out.c_cap,
                "gamma": out.gamma,
                "threshold": out.threshold,
                "guaranteed": out.guaranteed,
                "mean_y": out.mean_y,
                "success": out.success,
            }))
        }
        LowerBound::Log { n, b, runs, process, k_hat } => {
            let spec = ProcessSpec::deterministic(parse_process(&process)?);
            let k_hat = k_hat.unwrap_or_else(|| calibration::committed().log_lower.k_hat);
            let out = lower_bounds::log_lower_experiment(&spec, n, b.unwrap_or(n as u64), runs, seed, Some(k_hat))?;
            print_json(&out)
        }
        LowerBound::Poisson { n, lambda, trials, kappa } => {
            let lambda = lambda.unwrap_or(16.0 * (n as f64).ln());
            let kappas = if kappa.is_empty() { DEFAULT_KAPPAS.to_vec() } else { kappa };
            print_json(&lower_bounds::poisson_min_gap(n, lambda, trials, &kappas, seed)?)
        }
    }
}

fn execute(cli: Cli) -> Result<bool> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    }
    let seed = cli.seed.unwrap_or(0);
    let scale = if cli.paper_scale { Scale::Paper } else { Scale::Desk };
    match cli.command {
        Command::Simulate(args) => simulate(args, seed)?,
        Command::Campaign(args) => campaign(args, cli.seed, scale)?,
        Command::CheckConditions(args) => check_conditions(args)?,
        Command::Conductance { graph_file } => {
            let g = RegularGraph::read_edge_list(&graph_file)?;
            let r = conductance_exact(&g)?;
            print_json(&json!({ "n": g.n(), "d": g.d(), "conductance": r }))?;
        }
        Command::Graph { kind, out } => {
            let g = generate(parse_graph_kind(&kind)?)?;
            match out {
                Some(path) => g.write_edge_list(&path)?,
                None => write!(std::io::stdout().lock(), "{}", g.to_edge_list())
                    .map_err(|e| Error::io("<stdout>", e))?,
            }
        }
        Command::DriftCheck { n, vectors, k } => {
            let cases = drift_sweep(n, vectors, k, seed)?;
            let violations: usize = cases.iter().map(|c| c.violations).sum();
            print_json(&json!({ "n": n, "k": k, "cases": cases, "violations": violations }))?;
            return Ok(violations == 0);
        }
        Command::LowerBound { which } => lower_bound(which, seed)?,
        Command::Calibrate { out, pilot_seed } => {
            let cal = calibration::calibrate(pilot_seed)?;
            write_calibration(&cal, &out)?;
            print_json(&cal)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
