use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use nonlocal::format::to_json_sig17;
use nonlocal::frontier::{check_envelope, csv_string, curve_points, scan, CurveFamily, FrontierPoint, ScanConfig};
use nonlocal::games::{simulate_rounds, quantum_win_exact, svetlichny_bound, GameResult, GameSpec};
use nonlocal::nonlocality::{
    chsh_max_horodecki, critical_visibility, expectation, maximize, raw_multiplier, MaximizeOptions, SettingMode,
    SettingsTable,
};
use nonlocal::states::{linear_entropy, make_state, DensityMatrix, StateFamily};
use nonlocal::verify::{self, VerifyConfig};
use nonlocal::{Error, Result};

const THREADS_VAR: &str = "NONLOCAL_THREADS";

#[derive(Parser)]
#[command(name = "nonlocal", version, about = "Nonlocality of mixed states in CHSH and Svetlichny games")]
struct Cli {
    /// Seed for every stochastic step; echoed in the output.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the primary artifact here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Report S normalized (classical bound 1) or raw (classical bound 2^{N-1}).
    #[arg(long, global = true, value_enum, default_value_t = Convention::Normalized)]
    convention: Convention,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Convention {
    Normalized,
    Raw,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Planar,
    Bloch,
}

impl From<Mode> for SettingMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Planar => SettingMode::Planar,
            Mode::Bloch => SettingMode::Bloch,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build and inspect states.
    #[command(subcommand)]
    State(StateCmd),
    /// Maximal game values and noise tolerance.
    #[command(subcommand)]
    Nonloc(NonlocCmd),
    /// Classical bounds, exact quantum win probabilities and simulation.
    #[command(subcommand)]
    Game(GameCmd),
    /// Entropy-nonlocality curves and random-state scans.
    #[command(subcommand)]
    Frontier(FrontierCmd),
    /// Acceptance checks.
    #[command(subcommand)]
    Verify(VerifyCmd),
}

#[derive(Subcommand)]
enum StateCmd {
    /// Emit the density matrix as JSON.
    Make(StateArgs),
    /// Linear entropy and purity.
    Entropy(StateArgs),
}

#[derive(Subcommand)]
enum NonlocCmd {
    /// Exact CHSH maximum of a two-qubit state.
    ChshMax(StateArgs),
    /// Optimized maximal game value (Svetlichny for three qubits).
    SvetMax(OptArgs),
    /// Critical white-noise visibility.
    Visibility(OptArgs),
}

#[derive(Subcommand)]
enum GameCmd {
    /// Best classical win probability by enumerating strategies.
    Classical {
        /// Number of players.
        #[arg(long)]
        n: usize,
    },
    /// Exact quantum win probability.
    Exact(PlayArgs),
    /// Monte Carlo play of the game.
    Simulate {
        #[command(flatten)]
        play: PlayArgs,
        #[arg(long, default_value_t = 100_000)]
        rounds: u64,
    },
}

#[derive(Subcommand)]
enum FrontierCmd {
    /// Sample an analytic curve as CSV.
    Curve {
        /// One of mnms2, mems2, min2, planar2, mnms3.
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 200)]
        grid: usize,
    },
    /// Random-state scan as CSV, with an envelope summary.
    Scan(ScanArgs),
}

#[derive(Subcommand)]
enum VerifyCmd {
    /// Run every acceptance criterion; exits 1 if any fails.
    All,
}

#[derive(Args)]
struct StateArgs {
    /// State family tag, e.g. mnms2, mnms3, ghz, bell.
    #[arg(long, conflicts_with = "state", required_unless_present = "state")]
    family: Option<String>,
    /// Family parameter.
    #[arg(long, requires = "family", allow_negative_numbers = true)]
    param: Option<f64>,
    /// Density matrix JSON as written by `state make`.
    #[arg(long, value_name = "FILE")]
    state: Option<PathBuf>,
}

#[derive(Args)]
struct OptArgs {
    #[command(flatten)]
    state: StateArgs,
    #[arg(long, value_enum, default_value_t = Mode::Planar)]
    mode: Mode,
    /// Optimizer starts.
    #[arg(long, default_value_t = 64)]
    starts: usize,
}

#[derive(Args)]
struct PlayArgs {
    #[command(flatten)]
    opt: OptArgs,
    /// Settings JSON; defaults to the optimal settings for the state.
    #[arg(long, value_name = "FILE")]
    settings: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    /// Scan configuration JSON; flags given explicitly, including `--seed`, override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    qubits: Option<usize>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Columns of the Ginibre matrix; full rank by default.
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    starts: Option<usize>,
}

/// Where the primary artifact and any side summary go.
struct Output {
    out: Option<PathBuf>,
}

impl Output {
    fn artifact(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(path) => fs::write(path, text).map_err(|source| Error::Io { path: path.clone(), source }),
            None => {
                let _ = io::stdout().write_all(text.as_bytes());
                Ok(())
            }
        }
    }

    fn json(&self, value: &Value) -> Result<()> {
        let mut text = to_json_sig17(value, true)?;
        text.push('\n');
        self.artifact(&text)
    }

    /// Summary alongside a CSV artifact: stdout when the CSV went to a file.
    fn summary(&self, value: &Value) -> Result<()> {
        let text = to_json_sig17(value, true)?;
        if self.out.is_some() {
            println!("{text}");
        } else {
            eprintln!("{text}");
        }
        Ok(())
    }
}

struct Ctx {
    seed: u64,
    seed_given: bool,
    convention: Convention,
    output: Output,
}

impl Ctx {
    fn s(&self, s: f64, parties: usize) -> f64 {
        match self.convention {
            Convention::Normalized => s,
            Convention::Raw => s * raw_multiplier(parties),
        }
    }

    fn convention(&self) -> &'static str {
        match self.convention {
            Convention::Normalized => "normalized",
            Convention::Raw => "raw",
        }
    }

    fn opts(&self, starts: usize) -> MaximizeOptions {
        MaximizeOptions { starts, seed: self.seed, ..Default::default() }
    }
}

fn load_state(args: &StateArgs) -> Result<DensityMatrix> {
    match (&args.family, &args.state) {
        (Some(tag), _) => make_state(StateFamily::from_tag(tag, args.param)?),
        (None, Some(path)) => DensityMatrix::from_json(&read(path)?),
        (None, None) => unreachable!("clap requires --family or --state"),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn object(value: Value) -> Map<String, Value> {
    match value {
        Value::Object(map) => map,
        other => Map::from_iter([("value".to_string(), other)]),
    }
}

/// Exact CHSH settings for two qubits, optimized settings otherwise.
fn best_settings(rho: &DensityMatrix, mode: Mode, opts: &MaximizeOptions) -> Result<SettingsTable> {
    Ok(if rho.qubits() == 2 {
        chsh_max_horodecki(rho)?.settings
    } else {
        maximize(rho, mode.into(), opts)?.settings
    })
}

fn game_json(ctx: &Ctx, rho: &DensityMatrix, result: &GameResult, settings: &SettingsTable, stochastic: bool) -> Result<Value> {
    let n = rho.qubits();
    let mut map = object(serde_json::to_value(result)?);
    map.insert("parties".into(), json!(n));
    map.insert("s_value".into(), json!(ctx.s(expectation(rho, settings)?, n)));
    map.insert("convention".into(), json!(ctx.convention()));
    if stochastic {
        map.insert("seed".into(), json!(ctx.seed));
    }
    Ok(Value::Object(map))
}

fn play_settings(ctx: &Ctx, play: &PlayArgs, rho: &DensityMatrix) -> Result<(SettingsTable, bool)> {
    match &play.settings {
        Some(path) => Ok((serde_json::from_str(&read(path)?)?, false)),
        None => Ok((best_settings(rho, play.opt.mode, &ctx.opts(play.opt.starts))?, rho.qubits() > 2)),
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 { a.max(1) } else { gcd(b, a % b) }
}

fn scale_points(ctx: &Ctx, qubits: usize, points: &mut [FrontierPoint]) {
    for p in points {
        p.s = ctx.s(p.s, qubits);
    }
}

fn run(ctx: &Ctx, command: Command) -> Result<ExitCode> {
    match command {
        Command::State(StateCmd::Make(args)) => {
            let rho = load_state(&args)?;
            ctx.output.json(&serde_json::to_value(rho.to_doc())?)?;
        }
        Command::State(StateCmd::Entropy(args)) => {
            let rho = load_state(&args)?;
            ctx.output.json(&json!({
                "qubits": rho.qubits(),
                "linear_entropy": linear_entropy(&rho),
                "purity": rho.purity(),
            }))?;
        }
        Command::Nonloc(NonlocCmd::ChshMax(args)) => {
            let rho = load_state(&args)?;
            let r = chsh_max_horodecki(&rho)?;
            ctx.output.json(&json!({
                "s_value": ctx.s(r.s_value, 2),
                "win_probability": (2.0 + r.s_value) / 4.0,
                "linear_entropy": linear_entropy(&rho),
                "method": r.method,
                "settings": r.settings,
                "convention": ctx.convention(),
            }))?;
        }
        Command::Nonloc(NonlocCmd::SvetMax(args)) => {
            let rho = load_state(&args.state)?;
            let r = maximize(&rho, args.mode.into(), &ctx.opts(args.starts))?;
            ctx.output.json(&json!({
                "s_value": ctx.s(r.s_value, rho.qubits()),
                "win_probability": (2.0 + r.s_value) / 4.0,
                "linear_entropy": linear_entropy(&rho),
                "method": r.method,
                "converged": r.converged,
                "settings": r.settings,
                "starts": args.starts,
                "seed": ctx.seed,
                "convention": ctx.convention(),
            }))?;
        }
        Command::Nonloc(NonlocCmd::Visibility(args)) => {
            let rho = load_state(&args.state)?;
            let v = critical_visibility(&rho, args.mode.into(), &ctx.opts(args.starts))?;
            ctx.output.json(&json!({
                "critical_visibility": v,
                "linear_entropy": linear_entropy(&rho),
                "seed": ctx.seed,
            }))?;
        }
        Command::Game(GameCmd::Classical { n }) => {
            let (best, count) = svetlichny_bound(n)?;
            let mut map = object(serde_json::to_value(&best)?);
            if let Some((num, den)) = best.exact {
                let g = gcd(num, den);
                map.insert("exact".into(), json!(format!("{}/{}", num / g, den / g)));
            }
            map.insert("parties".into(), json!(n));
            map.insert("bipartitions".into(), json!(count));
            ctx.output.json(&Value::Object(map))?;
        }
        Command::Game(GameCmd::Exact(play)) => {
            let rho = load_state(&play.opt.state)?;
            let (settings, stochastic) = play_settings(ctx, &play, &rho)?;
            let result = quantum_win_exact(&rho, &settings, &GameSpec::local(rho.qubits())?)?;
            ctx.output.json(&game_json(ctx, &rho, &result, &settings, stochastic)?)?;
        }
        Command::Game(GameCmd::Simulate { play, rounds }) => {
            let rho = load_state(&play.opt.state)?;
            let (settings, _) = play_settings(ctx, &play, &rho)?;
            let spec = GameSpec::local(rho.qubits())?;
            let result = simulate_rounds(&rho, &settings, &spec, rounds, ctx.seed)?;
            let exact = quantum_win_exact(&rho, &settings, &spec)?.win_probability;
            let mut map = object(game_json(ctx, &rho, &result, &settings, true)?);
            map.insert("exact_win_probability".into(), json!(exact));
            ctx.output.json(&Value::Object(map))?;
        }
        Command::Frontier(FrontierCmd::Curve { family, grid }) => {
            let family = CurveFamily::from_tag(&family)?;
            if grid < 2 {
                return Err(Error::Domain(format!("grid needs at least 2 points, got {grid}")));
            }
            let qubits = if family == CurveFamily::Mnms3 { 3 } else { 2 };
            let mut points = curve_points(family, grid)?;
            scale_points(ctx, qubits, &mut points);
            ctx.output.artifact(&csv_string(&points))?;
        }
        Command::Frontier(FrontierCmd::Scan(args)) => {
            let mut config: ScanConfig = match &args.config {
                Some(path) => serde_json::from_str(&read(path)?)?,
                None => ScanConfig::default(),
            };
            if args.config.is_none() || ctx.seed_given {
                config.seed = ctx.seed;
            }
            config.qubits = args.qubits.unwrap_or(config.qubits);
            config.samples = args.samples.unwrap_or(config.samples);
            config.mode = args.mode.map_or(config.mode, Into::into);
            config.rank = args.rank.or(config.rank);
            config.starts = args.starts.unwrap_or(config.starts);

            let mut points = scan(&config)?;
            let report = check_envelope(&points, config.qubits, if config.qubits == 2 { 1e-9 } else { 1e-6 })?;
            scale_points(ctx, config.qubits, &mut points);
            ctx.output.artifact(&csv_string(&points))?;
            ctx.output.summary(&json!({
                "config": config,
                "envelope": report,
                "clean": report.clean(),
                "convention": ctx.convention(),
            }))?;
        }
        Command::Verify(VerifyCmd::All) => {
            let config = VerifyConfig { seed: ctx.seed };
            let mut failed = 0;
            let mut outcomes = Vec::new();
            for id in 1..=verify::CRITERIA {
                let outcome = verify::run(id, &config);
                println!("{outcome}");
                failed += usize::from(!outcome.passed);
                outcomes.push(outcome);
            }
            println!("{} passed, {failed} failed (seed {})", outcomes.len() - failed, ctx.seed);
            if let Some(path) = &ctx.output.out {
                let text = to_json_sig17(&json!({ "seed": ctx.seed, "outcomes": outcomes }), true)?;
                fs::write(path, text + "\n").map_err(|source| Error::Io { path: path.clone(), source })?;
            }
            if failed > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let threads: usize = raw.trim().parse().map_err(|_| format!("{THREADS_VAR} must be a thread count, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| format!("cannot size thread pool: {e}"))
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let ctx = Ctx {
        seed: cli.seed.unwrap_or(0),
        seed_given: cli.seed.is_some(),
        convention: cli.convention,
        output: Output { out: cli.out },
    };
    match run(&ctx, cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
