use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use brickwall::circuit::{route_linear, serialize, transpile_basis};
use brickwall::experiment::{
    depth_scan, mitigate_series, run_experiment, shot_circuit, trotter_study, Backend, DepthRow, ExperimentConfig, InitialState,
    KPolicy, Manifest, MitigationConfig, NoiseSpec, PointReport, Row, TimeSeries,
};
use brickwall::reference::SpecMode;
use brickwall::shots::NoiseModel;
use brickwall::{ChainParams, Variant};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "brickwall", version, about = "Circuit simulation of collective decay in qubit chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Population time series from one backend.
    Simulate(SimulateArgs),
    /// Trotter error of the circuit against the master equation.
    TrotterStudy(StudyArgs),
    /// Two-qubit depth of every circuit variant against chain length.
    DepthScan(DepthArgs),
    /// ZNE and CDR on a finished noisy shot run.
    Mitigate(MitigateArgs),
    /// Circuit files.
    Circuit {
        #[command(subcommand)]
        command: CircuitCommand,
    },
}

#[derive(Subcommand)]
enum CircuitCommand {
    /// Write the Trotter circuit of a chain as a JSON IR file.
    Dump(DumpArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of emitters (when no configuration file is given).
    #[arg(long)]
    n: Option<usize>,
    /// Initial state over 0, 1 and +, one character per emitter.
    #[arg(long)]
    initial: Option<String>,
    /// Times as γ̃t: a comma list or start:stop:step.
    #[arg(long, allow_hyphen_values = true)]
    gamma_t: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    backend: Option<Backend>,
    /// Circuit variant: static, dynamic or hardware_aware.
    #[arg(long)]
    variant: Option<Variant>,
    /// Trotter steps: auto or a positive integer.
    #[arg(long)]
    k: Option<KPolicy>,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    chi: Option<usize>,
    /// none, heron-median or custom:<path> (TOML or JSON rates).
    #[arg(long)]
    noise: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Run ZNE and CDR with default settings unless the configuration has them.
    #[arg(long)]
    mitigate: bool,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    k: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    states: usize,
    #[arg(long, default_value = "0.1:1.8:0.1")]
    gamma_t: String,
    /// Master-equation generator used as the reference: full or diagonal_only.
    #[arg(long, default_value = "diagonal_only")]
    reference: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct DepthArgs {
    /// Chain lengths: a comma list or start:stop.
    #[arg(long, default_value = "1:20")]
    n: String,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0.45)]
    gamma_t: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct MitigateArgs {
    /// Output directory of a noisy `simulate --backend shots` run.
    #[arg(long)]
    run: PathBuf,
    /// TOML file with a `[mitigation]`-style table replacing the run's settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Defaults to the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "static")]
    variant: Variant,
    #[arg(long, default_value_t = 0.45)]
    gamma_t: f64,
    #[arg(long, default_value = "auto")]
    k: KPolicy,
    /// Initial state; defaults to all emitters excited.
    #[arg(long)]
    initial: Option<String>,
    /// Route onto the line of qubits.
    #[arg(long)]
    route: bool,
    /// Rewrite into Rz/SX/X/CZ.
    #[arg(long)]
    transpile: bool,
    #[arg(long, default_value = "circuit.json")]
    out: PathBuf,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::TrotterStudy(a) => study(a),
        Command::DepthScan(a) => depth(a),
        Command::Mitigate(a) => mitigate(a),
        Command::Circuit { command: CircuitCommand::Dump(a) } => dump(a),
    }
}

/// Parses `a,b,c` or `start:stop:step` (inclusive of `stop` up to round-off).
fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, h] => {
            let (a, b, h): (f64, f64, f64) = (a.trim().parse()?, b.trim().parse()?, h.trim().parse()?);
            if !(h > 0.0) || b < a {
                bail!("grid '{s}' needs step > 0 and stop ≥ start");
            }
            let steps = ((b - a) / h + 1e-9).floor() as usize;
            Ok((0..=steps).map(|i| round12(a + h * i as f64)).collect())
        }
        [_] => s.split(',').map(|x| x.trim().parse::<f64>().with_context(|| format!("bad time '{x}'"))).collect(),
        _ => bail!("grid '{s}' must be a comma list or start:stop:step"),
    }
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    match s.split_once(':') {
        Some((a, b)) => Ok((a.trim().parse()?..=b.trim().parse()?).collect()),
        None => s.split(',').map(|x| x.trim().parse::<usize>().with_context(|| format!("bad size '{x}'"))).collect(),
    }
}

fn parse_noise(s: &str) -> Result<NoiseSpec> {
    match s.strip_prefix("custom:") {
        None => Ok(NoiseSpec::Named(s.to_string())),
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading noise model {path}"))?;
            let model: NoiseModel = if path.ends_with(".json") {
                serde_json::from_str(&text).with_context(|| format!("parsing {path}"))?
            } else {
                toml::from_str(&text).with_context(|| format!("parsing {path}"))?
            };
            Ok(NoiseSpec::Custom(model))
        }
    }
}

fn build_config(a: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut cfg: ExperimentConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            if let Some(n) = a.n {
                cfg.n = n;
            }
            if let Some(s) = &a.initial {
                cfg.initial = s.parse()?;
            }
            if let Some(g) = &a.gamma_t {
                cfg.gamma_t = parse_grid(g)?;
            }
            cfg
        }
        None => {
            let (Some(n), Some(g)) = (a.n, &a.gamma_t) else {
                bail!("give --config or both --n and --gamma-t");
            };
            let initial: InitialState = match &a.initial {
                Some(s) => s.parse()?,
                None => InitialState::from_bits(&vec![1; n]),
            };
            ExperimentConfig::new(n, initial, parse_grid(g)?)
        }
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = &a.out {
        cfg.output.dir = v.display().to_string();
    }
    if let Some(v) = a.backend {
        cfg.backend = v;
    }
    if let Some(v) = a.variant {
        cfg.variant = v;
    }
    if let Some(v) = a.k {
        cfg.k = v;
    }
    if let Some(v) = a.shots {
        cfg.shots = v;
    }
    if let Some(v) = a.trajectories {
        cfg.trajectories = v;
    }
    if let Some(v) = a.chi {
        cfg.chi = v;
    }
    if let Some(v) = &a.noise {
        cfg.noise = parse_noise(v)?;
    }
    Ok(cfg)
}

fn write_rows(path: &Path, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows(path: &Path) -> Result<TimeSeries> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let rows =
        r.deserialize().collect::<std::result::Result<Vec<Row>, _>>().with_context(|| format!("reading {}", path.display()))?;
    Ok(TimeSeries { rows })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn write_reports(path: &Path, reports: &[PointReport]) -> Result<()> {
    write_json(path, &reports)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = build_config(&a.run)?;
    if a.mitigate && cfg.mitigation.is_none() {
        cfg.mitigation = Some(MitigationConfig::default());
    }
    cfg.validate()?;
    let out = run_experiment(&cfg)?;
    for note in &out.manifest.notes {
        eprintln!("note: {note}");
    }
    let dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_rows(&dir.join(&cfg.output.csv), &out.series.rows)?;
    write_json(&dir.join(&cfg.output.manifest), &out.manifest)?;
    if !out.reports.is_empty() {
        write_reports(&dir.join(&cfg.output.report), &out.reports)?;
    }
    println!("{} rows written to {}", out.series.rows.len(), dir.join(&cfg.output.csv).display());
    Ok(())
}

fn study(a: StudyArgs) -> Result<()> {
    let reference: SpecMode = match a.reference.as_str() {
        "full" => SpecMode::Full,
        "diagonal_only" => SpecMode::DiagonalOnly,
        other => bail!("unknown reference '{other}' (expected full or diagonal_only)"),
    };
    let grid = parse_grid(&a.gamma_t)?;
    let s = trotter_study(&ChainParams::paper_defaults(a.n), &a.k, a.states, &grid, reference, a.seed)?;
    fs::create_dir_all(&a.out)?;
    let path = a.out.join("trotter.csv");
    write_rows(&path, &s.series().rows)?;
    write_json(&a.out.join("trotter.json"), &s)?;
    println!("trotter study written to {}", path.display());
    Ok(())
}

fn depth(a: DepthArgs) -> Result<()> {
    let rows: Vec<DepthRow> = depth_scan(&parse_sizes(&a.n)?, &Variant::ALL, a.k, a.gamma_t)?;
    fs::create_dir_all(&a.out)?;
    let path = a.out.join("depth.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["n", "variant", "k", "logical", "native"])?;
    for r in &rows {
        w.write_record([
            r.n.to_string(),
            r.variant.name().to_string(),
            r.k.to_string(),
            r.logical.to_string(),
            r.native.to_string(),
        ])?;
    }
    w.flush()?;
    println!("depth scan written to {}", path.display());
    Ok(())
}

fn mitigate(a: MitigateArgs) -> Result<()> {
    let manifest_path = a.run.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).with_context(|| format!("reading {}", manifest_path.display()))?;
    let manifest: Manifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", manifest_path.display()))?;
    let mut cfg = manifest.config;
    if cfg.backend != Backend::Shots || cfg.noise.resolve()?.is_none() {
        bail!("mitigate needs a run made with --backend shots and a noise model");
    }
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.mitigation = Some(toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?);
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let raw = read_rows(&a.run.join(&cfg.output.csv))?;
    let (series, reports) = mitigate_series(&cfg, &raw)?;
    let out = a.out.unwrap_or(a.run);
    fs::create_dir_all(&out)?;
    let mut rows: Vec<Row> = raw.rows.into_iter().filter(|r| r.method == "shots_raw").collect();
    rows.extend(series.rows);
    let path = out.join("mitigated.csv");
    write_rows(&path, &rows)?;
    write_reports(&out.join(&cfg.output.report), &reports)?;
    println!("{} rows written to {}", rows.len(), path.display());
    Ok(())
}

fn dump(a: DumpArgs) -> Result<()> {
    let params = ChainParams::paper_defaults(a.n);
    let init: InitialState = match &a.initial {
        Some(s) => s.parse()?,
        None => InitialState::from_bits(&vec![1; a.n]),
    };
    if init.len() != a.n {
        bail!("initial state has {} entries for {} emitters", init.len(), a.n);
    }
    let (mut c, _) = shot_circuit(&params, &init, a.gamma_t, a.k.steps(a.gamma_t)?, a.variant, false)?;
    if a.route {
        c = route_linear(&c)?;
    }
    if a.transpile {
        c = transpile_basis(&c);
    }
    fs::write(&a.out, serialize(&c)?).with_context(|| format!("writing {}", a.out.display()))?;
    println!("circuit with {} qubits written to {}", c.num_qubits, a.out.display());
    Ok(())
}
