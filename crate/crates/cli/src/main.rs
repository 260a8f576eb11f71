use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::{json, Value};

use sfmnet_core::config::RunConfig;
use sfmnet_core::dataset::{
    corridor_setup, gen_corridor_dataset, gen_open_dataset, open_setup, sim_rng, sample_params, DatasetSplit,
};
use sfmnet_core::eval::{load_tracks, run_benchmark, synthetic_curved_tracks, ColumnMap, ObservedTrack};
use sfmnet_core::goal::{classify, ObservedStream};
use sfmnet_core::io::sha256_hex;
use sfmnet_core::net::{NetType, TrajectoryWindow, WeightSet};
use sfmnet_core::predict::rollout;
use sfmnet_core::scenario::Scenario;
use sfmnet_core::sfm::{simulate, GoalSpec, PedState, Trajectory};
use sfmnet_core::train::train;
use sfmnet_core::{Error, Vec2};

#[derive(Parser, Debug)]
#[command(name = "sfmnet", version, about = "Social-force-structured pedestrian trajectory prediction")]
struct Cli {
    /// Seed for every random draw of this invocation (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Key-value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one pedestrian with the social force model.
    Simulate(SimulateArgs),
    /// Generate a windowed training dataset.
    GenDataset(GenArgs),
    /// Train Net1 or Net2 on a dataset.
    Train(TrainArgs),
    /// Roll a trained network forward from an observed trajectory.
    Rollout(RolloutArgs),
    /// Classify the destination of an observed corridor trajectory.
    Classify(ClassifyArgs),
    /// Benchmark CV, CA and the network on pedestrian tracks.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct OutDir {
    /// Directory receiving the outputs and the provenance record.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// `open`, `corridor` or a scenario file.
    #[arg(long, default_value = "open")]
    scenario: String,
    #[arg(long)]
    duration: Option<f64>,
    /// Start position `x,y`; random when omitted.
    #[arg(long, value_parser = parse_vec2)]
    start: Option<Vec2>,
    /// Goal position `x,y`; random when omitted.
    #[arg(long, value_parser = parse_vec2)]
    goal: Option<Vec2>,
    /// Initial velocity `vx,vy` for an explicit start.
    #[arg(long, value_parser = parse_vec2)]
    velocity: Option<Vec2>,
    #[arg(long)]
    mass: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    desired_speed: Option<f64>,
    /// End the run once the goal is within this radius.
    #[arg(long)]
    stop_radius: Option<f64>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// `open` (Net1 data) or `corridor`/a scenario file (Net2 data).
    #[arg(long, default_value = "open")]
    scenario: String,
    #[arg(long)]
    count: Option<usize>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Defaults to the network matching the dataset columns.
    #[arg(long)]
    net: Option<NetType>,
    #[arg(long)]
    epochs: Option<usize>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Debug)]
struct RolloutArgs {
    #[arg(long)]
    weights: PathBuf,
    /// Trajectory CSV holding the observed positions.
    #[arg(long)]
    input: PathBuf,
    /// Index of the last observed row; defaults to the first full window.
    #[arg(long)]
    from_row: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Scenario with walls (Net2 only).
    #[arg(long)]
    scenario: Option<String>,
    /// Goal `x,y` (Net2 only).
    #[arg(long, value_parser = parse_vec2, conflicts_with = "goal_area")]
    goal: Option<Vec2>,
    /// Goal waypoint area by name (Net2 only).
    #[arg(long)]
    goal_area: Option<String>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "corridor")]
    scenario: String,
    /// Add a hypothesis that the pedestrian stops.
    #[arg(long)]
    stop_hypothesis: bool,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    weights: PathBuf,
    /// Track file as `NAME=PATH`; repeatable.
    #[arg(long = "data", value_parser = parse_named_path)]
    data: Vec<(String, PathBuf)>,
    /// Column roles of the track files, e.g. `frame,ped,x,y`.
    #[arg(long, default_value = "frame,ped,x,y")]
    columns: ColumnMap,
    /// Seconds per frame index in the track files.
    #[arg(long)]
    frame_dt: Option<f64>,
    /// Add N synthetic curved SFM tracks as dataset `synthetic`.
    #[arg(long)]
    synthetic: Option<usize>,
    #[command(flatten)]
    out: OutDir,
}

fn parse_vec2(s: &str) -> Result<Vec2, String> {
    let (x, y) = s.split_once(',').ok_or("expected `x,y`")?;
    let x: f64 = x.trim().parse().map_err(|_| format!("invalid number `{x}`"))?;
    let y: f64 = y.trim().parse().map_err(|_| format!("invalid number `{y}`"))?;
    if !(x.is_finite() && y.is_finite()) {
        return Err("coordinates must be finite".into());
    }
    Ok(Vec2::new(x, y))
}

fn parse_named_path(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or("expected `NAME=PATH`")?;
    if name.is_empty() || name.contains(',') {
        return Err(format!("invalid dataset name `{name}`"));
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

/// Why a command failed, mapped onto the exit code.
#[derive(Debug)]
enum Failure {
    Validation(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

type CmdResult<T> = Result<T, Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

fn require_file(path: &Path) -> CmdResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("{}: no such file", path.display())))
    }
}

fn load_scenario(spec: &str) -> CmdResult<Scenario> {
    if spec != "open" && spec != "corridor" {
        require_file(Path::new(spec))?;
    }
    Ok(Scenario::load(spec)?)
}

fn file_digest(path: &Path) -> CmdResult<String> {
    let bytes = fs::read(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Collects outputs in memory and writes them atomically at the end, so a
/// failing command never leaves partial files behind.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), contents.into()));
    }

    fn commit(self) -> CmdResult<Vec<PathBuf>> {
        let mut written = Vec::new();
        for (name, bytes) in self.files {
            let path = self.dir.join(&name);
            let io_err = |e: std::io::Error| invalid(format!("{}: {e}", path.display()));
            let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io_err)?;
            tmp.write_all(&bytes).map_err(io_err)?;
            tmp.persist(&path).map_err(|e| io_err(e.error))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Provenance of one invocation: enough to replay it bit-exactly.
struct Provenance {
    command: &'static str,
    args: Vec<String>,
    seed: u64,
    config: RunConfig,
    inputs: Vec<(String, String)>,
}

impl Provenance {
    fn input(&mut self, path: &Path) -> CmdResult<()> {
        let digest = file_digest(path)?;
        self.inputs.push((path.display().to_string(), digest));
        Ok(())
    }

    fn record(&self, outputs: &Outputs) -> String {
        let files = |list: &[(String, String)]| -> Value {
            Value::Array(
                list.iter()
                    .map(|(p, d)| json!({ "path": p, "sha256": d }))
                    .collect(),
            )
        };
        let outs: Vec<(String, String)> = outputs
            .files
            .iter()
            .map(|(n, b)| (n.clone(), sha256_hex(b)))
            .collect();
        let record = json!({
            "command": self.command,
            "args": self.args,
            "seed": self.seed,
            "config_sha256": self.config.digest(),
            "config": self.config.to_text(),
            "versions": { "sfmnet": sfmnet_core::VERSION },
            "inputs": files(&self.inputs),
            "outputs": files(&outs),
        });
        let mut text = serde_json::to_string_pretty(&record).expect("json value");
        text.push('\n');
        text
    }
}

/// Command-line arguments minus the ones that cannot change outputs.
fn replay_args() -> Vec<String> {
    let mut out = Vec::new();
    let mut skip_next = false;
    for a in std::env::args().skip(1) {
        if skip_next {
            skip_next = false;
            continue;
        }
        if a == "--jobs" {
            skip_next = true;
            continue;
        }
        if a.starts_with("--jobs=") || a == "-v" || a == "--verbose" {
            continue;
        }
        out.push(a);
    }
    out
}

fn finish(prov: Provenance, mut outputs: Outputs) -> CmdResult<()> {
    let record = prov.record(&outputs);
    outputs.add(&format!("{}.run.json", prov.command), record);
    for path in outputs.commit()? {
        info!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, mut cfg: RunConfig, mut prov: Provenance) -> CmdResult<()> {
    let scenario = load_scenario(&a.scenario)?;
    if let Some(d) = a.duration {
        cfg.sim.duration = d;
    }
    if let Some(r) = a.stop_radius {
        cfg.sim.stop_radius = Some(r);
    }
    cfg.validate()?;
    let seed = cfg.seed;
    let (mut params, initial, goal) = match (a.start, a.goal) {
        (Some(start), Some(goal)) => {
            let params = sample_params(&mut sim_rng(seed, 0));
            let v = a.velocity.unwrap_or(Vec2::ZERO);
            (params, PedState::new(start, v, 0.0), GoalSpec::new(goal))
        }
        (None, None) => {
            if a.velocity.is_some() {
                return Err(invalid("--velocity needs --start and --goal"));
            }
            let setup = if scenario.waypoints.len() >= 2 {
                corridor_setup(0, seed, &scenario)?
            } else {
                open_setup(0, seed)
            };
            (setup.params, setup.initial, setup.goal)
        }
        _ => return Err(invalid("--start and --goal must be given together")),
    };
    if let Some(m) = a.mass {
        params.mass = m;
    }
    if let Some(t) = a.tau {
        params.char_time = t;
    }
    if let Some(v) = a.desired_speed {
        params.desired_speed = v;
    }
    let traj = simulate(&initial, &params, &goal, &scenario.walls, &cfg.sim)?;
    info!(
        "{} states, goal {}",
        traj.len(),
        if traj.goal_reached { "reached" } else { "not reached" }
    );
    prov.config = cfg;
    let mut out = Outputs::new(&a.out.out_dir);
    out.add("trajectory.csv", traj.to_csv());
    finish(prov, out)
}

fn cmd_gen(a: &GenArgs, mut cfg: RunConfig, mut prov: Provenance) -> CmdResult<()> {
    let scenario = load_scenario(&a.scenario)?;
    if let Some(c) = a.count {
        cfg.gen.count = c;
    }
    cfg.gen.seed = cfg.seed;
    cfg.validate()?;
    let ds = if a.scenario == "open" {
        gen_open_dataset(&cfg.gen)?
    } else {
        gen_corridor_dataset(&cfg.gen, &scenario)?
    };
    info!(
        "{} train / {} val samples, {} simulations skipped",
        ds.train.len(),
        ds.val.len(),
        ds.skipped.len()
    );
    prov.config = cfg;
    let mut out = Outputs::new(&a.out.out_dir);
    out.add("dataset.csv", ds.to_csv());
    finish(prov, out)
}

fn cmd_train(a: &TrainArgs, mut cfg: RunConfig, mut prov: Provenance) -> CmdResult<()> {
    require_file(&a.dataset)?;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    cfg.train.seed = cfg.seed;
    cfg.validate()?;
    prov.input(&a.dataset)?;
    let ds = DatasetSplit::read_csv(&a.dataset, cfg.gen.dt)?;
    let net = match (a.net, ds.net_type()) {
        (Some(n), _) => n,
        (None, Some(n)) => n,
        (None, None) => return Err(invalid(format!("{}: dataset is empty", a.dataset.display()))),
    };
    let (weights, report) = train(net, &ds, &cfg.train)?;
    info!(
        "final train MSE {:.6e}, val MSE {:.6e} (min {:.6e} / {:.6e})",
        report.final_train_mse(),
        report.final_val_mse(),
        report.min_train_mse(),
        report.min_val_mse()
    );
    prov.config = cfg;
    let mut out = Outputs::new(&a.out.out_dir);
    out.add("weights.json", weights.to_json());
    out.add("report.csv", report.to_csv());
    finish(prov, out)
}

fn observed_window(traj: &Trajectory, last_row: usize, n: usize, dt: f64) -> CmdResult<(TrajectoryWindow, f64)> {
    if last_row + 1 < n || last_row >= traj.len() {
        return Err(invalid(format!(
            "row {last_row} cannot end a {n}-sample window in a {}-row trajectory",
            traj.len()
        )));
    }
    let pts = &traj.points[last_row + 1 - n..=last_row];
    let window = TrajectoryWindow::new(pts.iter().map(|p| p.state.position).collect(), dt)?;
    Ok((window, pts[n - 1].state.time))
}

fn cmd_rollout(a: &RolloutArgs, mut cfg: RunConfig, mut prov: Provenance) -> CmdResult<()> {
    require_file(&a.weights)?;
    require_file(&a.input)?;
    let scenario = a.scenario.as_deref().map(load_scenario).transpose()?;
    if let Some(h) = a.horizon {
        cfg.rollout.horizon = h;
    }
    cfg.validate()?;
    prov.input(&a.weights)?;
    prov.input(&a.input)?;
    let weights = WeightSet::read(&a.weights)?;
    let traj = Trajectory::read_csv(&a.input)?;
    let n = weights.window_len();
    let (window, t0) = observed_window(&traj, a.from_row.unwrap_or(n - 1), n, cfg.rollout.dt)?;
    let goal = match (&a.goal, &a.goal_area) {
        (Some(g), _) => Some(GoalSpec::new(*g)),
        (None, Some(name)) => {
            let sc = scenario
                .as_ref()
                .ok_or_else(|| invalid("--goal-area needs --scenario"))?;
            let area = sc
                .waypoint(name)
                .ok_or_else(|| invalid(format!("scenario has no waypoint area `{name}`")))?;
            Some(GoalSpec::new(area.center))
        }
        (None, None) => None,
    };
    let mut rcfg = cfg.rollout;
    rcfg.goal = goal;
    let walls = scenario.as_ref().map(|s| s.walls.as_slice());
    let pred = rollout(&weights, &window, walls, &rcfg, t0)?;
    prov.config = cfg;
    let mut out = Outputs::new(&a.out.out_dir);
    out.add("rollout.csv", pred.to_csv());
    finish(prov, out)
}

fn cmd_classify(a: &ClassifyArgs, mut cfg: RunConfig, mut prov: Provenance) -> CmdResult<()> {
    require_file(&a.weights)?;
    require_file(&a.input)?;
    let scenario = load_scenario(&a.scenario)?;
    if a.stop_hypothesis {
        cfg.goal.stop_hypothesis = true;
    }
    cfg.validate()?;
    prov.input(&a.weights)?;
    prov.input(&a.input)?;
    let weights = WeightSet::read(&a.weights)?;
    let traj = Trajectory::read_csv(&a.input)?;
    let stream = ObservedStream::new(
        traj.points.iter().map(|p| p.state.time).collect(),
        traj.positions(),
    )?;
    let belief = classify(&stream, &scenario, &weights, &cfg.goal)?;
    match &belief.decision {
        Some((name, t)) => info!("decision: {name} at t = {t:.1} s"),
        None => info!("no hypothesis reached the threshold"),
    }
    prov.config = cfg;
    let mut out = Outputs::new(&a.out.out_dir);
    out.add("beliefs.csv", belief.to_csv());
    finish(prov, out)
}

fn cmd_eval(a: &EvalArgs, mut cfg: RunConfig, mut prov: Provenance) -> CmdResult<()> {
    require_file(&a.weights)?;
    for (_, p) in &a.data {
        require_file(p)?;
    }
    if a.data.is_empty() && a.synthetic.is_none() {
        return Err(invalid("nothing to evaluate: give --data NAME=PATH or --synthetic N"));
    }
    if let Some(f) = a.frame_dt {
        cfg.frame_dt = f;
    }
    cfg.validate()?;
    prov.input(&a.weights)?;
    let weights = WeightSet::read(&a.weights)?;
    let mut datasets: Vec<(String, Vec<ObservedTrack>)> = Vec::new();
    for (name, path) in &a.data {
        prov.input(path)?;
        datasets.push((name.clone(), load_tracks(path, a.columns, cfg.frame_dt)?));
    }
    if let Some(count) = a.synthetic {
        datasets.push((
            "synthetic".into(),
            synthetic_curved_tracks(count, cfg.seed, cfg.eval.resample_dt)?,
        ));
    }
    let table = run_benchmark(&weights, &datasets, &cfg.eval)?;
    info!("\n{}", table.to_text());
    prov.config = cfg;
    let mut out = Outputs::new(&a.out.out_dir);
    out.add("results.csv", table.to_csv());
    out.add("table.txt", table.to_text());
    finish(prov, out)
}

fn out_dir(cmd: &Command) -> &Path {
    match cmd {
        Command::Simulate(a) => &a.out.out_dir,
        Command::GenDataset(a) => &a.out.out_dir,
        Command::Train(a) => &a.out.out_dir,
        Command::Rollout(a) => &a.out.out_dir,
        Command::Classify(a) => &a.out.out_dir,
        Command::Eval(a) => &a.out.out_dir,
    }
}

fn run(cli: &Cli) -> CmdResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => {
            require_file(p)?;
            RunConfig::read(p)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let dir = out_dir(&cli.command);
    fs::create_dir_all(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
    let command = match &cli.command {
        Command::Simulate(_) => "simulate",
        Command::GenDataset(_) => "gen-dataset",
        Command::Train(_) => "train",
        Command::Rollout(_) => "rollout",
        Command::Classify(_) => "classify",
        Command::Eval(_) => "eval",
    };
    let mut prov = Provenance {
        command,
        args: replay_args(),
        seed: cfg.seed,
        config: cfg.clone(),
        inputs: Vec::new(),
    };
    if let Some(p) = &cli.config {
        prov.input(p)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, cfg, prov),
        Command::GenDataset(a) => cmd_gen(a, cfg, prov),
        Command::Train(a) => cmd_train(a, cfg, prov),
        Command::Rollout(a) => cmd_rollout(a, cfg, prov),
        Command::Classify(a) => cmd_classify(a, cfg, prov),
        Command::Eval(a) => cmd_eval(a, cfg, prov),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .parse_default_env()
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            ExitCode::from(3)
        }
    }
}
