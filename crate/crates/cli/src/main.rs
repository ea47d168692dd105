use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use roelab_core::error::Error;
use roelab_core::locality::Mode;
use roelab_core::scenario::{
    error_report, run, BuiltinMap, FiberInput, Kind, MapInput, Outcome, Scenario, SpaceInput, UnitaryInput,
};

#[derive(Parser)]
#[command(name = "roelab", version, about = "Quantitative rigidity experiments on finite metric spaces")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "ROELAB_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract a coarse equivalence from a unitary.
    Extract(Common),
    /// Build a covering unitary for a map.
    Cover(Common),
    /// Concentration witnesses at points and radii.
    Witness(Common),
    /// Quasi-locality reports and approximability windows.
    Ql(Common),
    /// Outer-automorphism roundtrip.
    Outer(Common),
    /// Seeded extraction sweep over band-noise perturbations of a covering.
    Sweep(Common),
    /// Run a scenario file.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Args)]
struct OutputArgs {
    /// Report path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV path for sweeps (next to --out by default).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Timings path (next to --out by default).
    #[arg(long)]
    timings: Option<PathBuf>,
    /// Suppress the check summary on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct Common {
    /// `path:N` or a JSON space file (`{n, dist}` or `{n, edges}`).
    #[arg(long)]
    space: Option<String>,
    /// Target space, same syntax as --space.
    #[arg(long)]
    target_space: Option<String>,
    /// `identity`, `reflection`, `collapse`, or a JSON map file.
    #[arg(long)]
    map: Option<String>,
    /// `N` for uniform fibers or a comma list of dimensions.
    #[arg(long)]
    fibers: Option<String>,
    /// Operator file, `identity`, `cover`, or `cover-noise`.
    #[arg(long)]
    unitary: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Comma-separated radii.
    #[arg(long, value_delimiter = ',')]
    radius_grid: Option<Vec<f64>>,
    /// Seed for band noise and the local search.
    #[arg(long)]
    seed: Option<u64>,
    /// Sweep seeds as `a..b` or a comma list.
    #[arg(long)]
    seeds: Option<String>,
    /// Band-noise propagation.
    #[arg(long, default_value_t = 2.0)]
    propagation: f64,
    /// Band-noise layers.
    #[arg(long, default_value_t = 1)]
    layers: usize,
    /// Comma-separated points for witness runs.
    #[arg(long, value_delimiter = ',')]
    points: Option<Vec<usize>>,
    /// Force `exact` or `bounds` quasi-locality.
    #[arg(long)]
    mode: Option<String>,
    /// Write the covering unitary here (cover).
    #[arg(long)]
    save_unitary: Option<PathBuf>,
    #[command(flatten)]
    out: OutputArgs,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn parse_space(s: &str) -> Result<SpaceInput, Error> {
    match s.strip_prefix("path:") {
        Some(n) => Ok(SpaceInput::Path {
            path: n.parse().map_err(|_| invalid(format!("bad path size {n:?}")))?,
        }),
        None => Ok(SpaceInput::File { file: s.into() }),
    }
}

fn parse_map(s: &str) -> MapInput {
    match s {
        "identity" => MapInput::Builtin { builtin: BuiltinMap::Identity },
        "reflection" => MapInput::Builtin { builtin: BuiltinMap::Reflection },
        "collapse" => MapInput::Builtin { builtin: BuiltinMap::Collapse },
        file => MapInput::File { file: file.into() },
    }
}

fn parse_fibers(s: &str) -> Result<FiberInput, Error> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| invalid(format!("bad fiber dimension {p:?}"))))
        .collect::<Result<_, _>>()?;
    Ok(if parts.len() == 1 && !s.contains(',') {
        FiberInput::Uniform { uniform: parts[0] }
    } else {
        FiberInput::Dims { dims: parts }
    })
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, Error> {
    let bad = || invalid(format!("bad seed list {s:?}"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
        return Ok((a..b).collect());
    }
    s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

fn scenario_from(kind: Kind, c: &Common) -> Result<Scenario, Error> {
    let space = c.space.as_deref().ok_or_else(|| invalid("--space is required"))?;
    let mut sc = Scenario::new(kind, parse_space(space)?);
    sc.target_space = c.target_space.as_deref().map(parse_space).transpose()?;
    sc.map = c.map.as_deref().map(parse_map);
    if let Some(f) = &c.fibers {
        sc.fibers = parse_fibers(f)?;
    }
    let seed = c.seed.unwrap_or(0);
    sc.unitary = match c.unitary.as_deref() {
        None => None,
        Some("identity") => Some(UnitaryInput::Identity),
        Some("cover") => Some(UnitaryInput::CoveringOfMap),
        Some("cover-noise") => Some(UnitaryInput::CoveringTimesBandNoise {
            seed,
            propagation: c.propagation,
            layers: c.layers,
        }),
        Some(path) => Some(UnitaryInput::File { path: path.into() }),
    };
    if kind == Kind::RoundtripSweep && sc.unitary.is_none() {
        sc.unitary = Some(UnitaryInput::CoveringTimesBandNoise {
            seed,
            propagation: c.propagation,
            layers: c.layers,
        });
    }
    sc.delta = c.delta;
    sc.epsilon = c.epsilon;
    sc.radius_grid = c.radius_grid.clone();
    sc.points = c.points.clone();
    sc.seeds = c.seeds.as_deref().map(parse_seeds).transpose()?;
    sc.mode = match c.mode.as_deref() {
        None => None,
        Some("exact") => Some(Mode::Exact),
        Some("bounds") => Some(Mode::Bounds),
        Some(m) => return Err(invalid(format!("unknown mode {m:?}"))),
    };
    sc.locality_seed = c.seed;
    sc.save_unitary = c.save_unitary.clone();
    Ok(sc)
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn emit(outcome: &Outcome, out: &OutputArgs) -> Result<(), Error> {
    let report = outcome.report_text();
    match &out.out {
        Some(p) => write(p, &report)?,
        None => print!("{report}"),
    }
    let timings = serde_json::to_string_pretty(&outcome.timings).expect("timings serialize") + "\n";
    if let Some(p) = out.timings.clone().or_else(|| out.out.as_deref().map(|o| sibling(o, ".timings.json"))) {
        write(&p, &timings)?;
    }
    if let Some(csv) = &outcome.csv {
        if let Some(p) = out.csv.clone().or_else(|| out.out.as_deref().map(|o| sibling(o, ".csv"))) {
            write(&p, csv)?;
        }
    }
    if !out.quiet {
        for c in outcome.report["checks"].as_array().into_iter().flatten() {
            let mark = if c["passed"].as_bool() == Some(true) { "PASS" } else { "FAIL" };
            eprintln!("{mark} {} ({})", c["name"].as_str().unwrap_or("?"), c["detail"].as_str().unwrap_or(""));
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<bool, (Error, Option<PathBuf>)> {
    let (sc, base, out) = match cli.command {
        Command::Run { scenario, out } => {
            let text = fs::read_to_string(&scenario)
                .map_err(|e| (Error::Io(format!("{}: {e}", scenario.display())), out.out.clone()))?;
            let sc = Scenario::from_json(&text).map_err(|e| (e, out.out.clone()))?;
            let base = scenario.parent().map(Path::to_path_buf).unwrap_or_default();
            (sc, base, out)
        }
        Command::Extract(c) => with(Kind::Extract, c)?,
        Command::Cover(c) => with(Kind::Cover, c)?,
        Command::Witness(c) => with(Kind::Witness, c)?,
        Command::Ql(c) => with(Kind::QuasiLocality, c)?,
        Command::Outer(c) => with(Kind::Outer, c)?,
        Command::Sweep(c) => with(Kind::RoundtripSweep, c)?,
    };
    let outcome = run(&sc, &base).map_err(|e| (e, out.out.clone()))?;
    emit(&outcome, &out).map_err(|e| (e, None))?;
    Ok(outcome.passed)
}

fn with(kind: Kind, c: Common) -> Result<(Scenario, PathBuf, OutputArgs), (Error, Option<PathBuf>)> {
    let sc = scenario_from(kind, &c).map_err(|e| (e, c.out.out.clone()))?;
    Ok((sc, PathBuf::new(), c.out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("roelab: cannot size thread pool: {e}");
        }
    }
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err((e, out)) => {
            let doc = serde_json::to_string_pretty(&error_report(&e)).expect("error serializes") + "\n";
            eprintln!("roelab: {e}");
            match out {
                Some(p) if fs::write(&p, &doc).is_ok() => {}
                _ => print!("{doc}"),
            }
            ExitCode::from(2)
        }
    }
}
