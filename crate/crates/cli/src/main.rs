use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ssrcbf::filter::Method;
use ssrcbf::scenario::{IoData, Scenario, ScenarioParams};
use ssrcbf::{Error, Result};
use ssrcbf_cli::bench::{bench_sensors, bench_subspaces, BenchConfig};
use ssrcbf_cli::{
    is_attack_model_error, reconstruct, report, run_closedloop, write_states, SsrMethod, EXIT_ATTACK_MODEL,
};

#[derive(Parser)]
#[command(name = "ssrcbf", version, about = "Safe control under sparse sensor attacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruction time against the number of sensors.
    BenchSensors(BenchSensorsArgs),
    /// Reconstruction time against the number of eigenspaces.
    BenchSubspaces(BenchSubspacesArgs),
    /// Closed-loop simulation under attack.
    Closedloop(ClosedloopArgs),
    /// Plausible states for a scenario and a recorded data file.
    Ssr(SsrArgs),
    /// Write a scenario file (and optionally a recorded data window).
    Generate(GenerateArgs),
}

#[derive(Args)]
struct Common {
    /// Runs averaged per sweep point.
    #[arg(long, default_value_t = 20)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Timed repetitions per run (the fastest counts).
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Place attacked sensors at random instead of on every eigenvalue.
    #[arg(long)]
    random_attack: bool,
    /// CSV output path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// SVG plot of mean time.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct BenchSensorsArgs {
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    s: usize,
    #[arg(long, default_value_t = 4)]
    q: usize,
    /// Sensor counts: `8..16` (inclusive) or `8,10,12`.
    #[arg(long, default_value = "8..16")]
    p: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BenchSubspacesArgs {
    #[arg(long, default_value_t = 12)]
    p: usize,
    #[arg(long, default_value_t = 6)]
    s: usize,
    #[arg(long, default_value_t = 7)]
    q: usize,
    /// Eigenspace counts: `2..8` (inclusive) or `2,4,6`.
    #[arg(long, default_value = "2..8")]
    r: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ClosedloopArgs {
    /// Scenario file; `--fixture` uses the bundled closed-loop setup.
    #[arg(long, required_unless_present = "fixture", conflicts_with = "fixture")]
    scenario: Option<PathBuf>,
    #[arg(long)]
    fixture: bool,
    /// `nominal`, `brute`, `decomp-ssr`, `upper-bound`, `partial`,
    /// `partial:0,2`, or `all`. Repeatable.
    #[arg(long, default_value = "all")]
    method: Vec<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Prefix for `<prefix>_h.svg` and `<prefix>_cost.svg`.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct SsrArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// `brute`, `decomp-ssr` or `majority`.
    #[arg(long, default_value = "decomp-ssr")]
    method: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// Input dimension; generated systems use `B = I`, so it must equal `n`.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 8)]
    p: usize,
    #[arg(long, default_value_t = 4)]
    q: usize,
    #[arg(long, default_value_t = 3)]
    s: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    worst_case: bool,
    /// The closed-loop setup with the fixed 4x4 plant instead of a random system.
    #[arg(long)]
    fixture: bool,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also record an open-loop window of this many steps...
    #[arg(long)]
    record: Option<usize>,
    /// ...into this data file.
    #[arg(long, requires = "record")]
    data_out: Option<PathBuf>,
}

fn parse_list(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidParameter(format!("bad range `{text}`"));
    if let Some((a, b)) = text.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim_start_matches('=').trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect()
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn bench_config(c: &Common, s: usize, q: usize) -> BenchConfig {
    let mut cfg = BenchConfig::new(s, q, c.runs, c.seed);
    cfg.repeats = c.repeats;
    cfg.worst_case = !c.random_attack;
    cfg
}

fn finish_bench(c: &Common, axis: &str, rows: &[ssrcbf_cli::bench::BenchRow]) -> Result<()> {
    report::write_bench(output(c.out.as_deref())?, axis, rows)?;
    if let Some(svg) = &c.svg {
        std::fs::write(svg, report::bench_plot(axis, rows))?;
    }
    Ok(())
}

fn methods(list: &[String]) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for m in list {
        if m == "all" {
            out.push(Method::Nominal);
            out.extend(Method::FILTERS);
        } else {
            out.push(m.parse()?);
        }
    }
    Ok(out)
}

/// Returns whether any run stopped on an infeasible step.
fn closedloop(args: &ClosedloopArgs) -> Result<bool> {
    let mut sc = match &args.scenario {
        Some(path) => Scenario::load(path)?,
        None => Scenario::closed_loop_fixture(),
    };
    if let Some(g) = args.gamma {
        sc.gamma = g;
    }
    if let Some(w) = args.window {
        sc.window = w;
    }
    let horizon = args.horizon.unwrap_or(sc.horizon);
    let runs = run_closedloop(&sc, &methods(&args.method)?, horizon)?;
    report::write_closedloop(output(args.out.as_deref())?, sc.sys.n(), sc.sys.m(), &runs)?;
    if let Some(prefix) = &args.svg {
        let (h, cost) = report::closedloop_plots(&runs);
        let base = prefix.to_string_lossy();
        std::fs::write(format!("{base}_h.svg"), h)?;
        std::fs::write(format!("{base}_cost.svg"), cost)?;
    }
    let mut failed = false;
    for run in &runs {
        if let Some(f) = &run.failure {
            eprintln!("{}: stopped at step {}: {}", run.method, f.tau, f.error);
            failed = true;
        }
    }
    Ok(failed)
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let mut sc = if args.fixture {
        Scenario::closed_loop_setup(args.seed)?
    } else {
        if args.m.is_some_and(|m| m != args.n) {
            return Err(Error::InvalidParameter(
                "generated systems use B = I, so m must equal n".into(),
            ));
        }
        let params = ScenarioParams::new(args.n, args.p, args.q, args.s, args.seed).worst_case(args.worst_case);
        Scenario::random(&params)?
    };
    if let Some(h) = args.horizon {
        sc.horizon = h;
    }
    if let Some(g) = args.gamma {
        sc.gamma = g;
    }
    if let Some(w) = args.window {
        sc.window = w;
    }
    sc.verify()?;
    sc.save(&args.out)?;
    if let (Some(t), Some(path)) = (args.record, &args.data_out) {
        let (win, _) = sc.record_window(t);
        std::fs::write(path, IoData::from_window(&win).to_json())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::BenchSensors(a) => {
            let cfg = bench_config(&a.common, a.s, a.q);
            let rows = bench_sensors(&cfg, a.n, &parse_list(&a.p)?)?;
            finish_bench(&a.common, "p", &rows)?;
        }
        Command::BenchSubspaces(a) => {
            let cfg = bench_config(&a.common, a.s, a.q);
            let rows = bench_subspaces(&cfg, a.p, &parse_list(&a.r)?)?;
            finish_bench(&a.common, "r", &rows)?;
        }
        Command::Closedloop(a) => return closedloop(&a),
        Command::Ssr(a) => {
            let sc = Scenario::load(&a.scenario)?;
            let data = IoData::from_json(&std::fs::read_to_string(&a.data)?)?;
            let set = reconstruct(&sc, &data.to_window()?, a.method.parse::<SsrMethod>()?)?;
            write_states(output(a.out.as_deref())?, set.states())?;
        }
        Command::Generate(a) => generate(&a)?,
    }
    Ok(false)
}

fn main() -> ExitCode {
    // Usage errors exit with 1.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(EXIT_ATTACK_MODEL as u8),
        Err(e) => {
            eprintln!("error: {e}");
            if is_attack_model_error(&e) {
                ExitCode::from(EXIT_ATTACK_MODEL as u8)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
