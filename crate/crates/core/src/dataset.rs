//! Synthetic training data: randomised SFM simulations sliced into windows
//! labelled with the force acting at the window's last sample.
//!
//! Every simulation draws from its own RNG stream derived from
//! `(seed, sim_index)`, so the generated set does not depend on how many
//! threads ran the simulations.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{nearest_wall, Vec2, WallSegment};
use crate::io::{parse_f64, sha256_hex};
use crate::net::{AuxInput, NetInput, NetType, TrajectoryWindow, WINDOW_LEN};
use crate::scenario::Scenario;
use crate::sfm::{simulate, GoalSpec, PedState, SfmParams, SimConfig, Trajectory};

pub const MASS_RANGE: (f64, f64) = (50.0, 90.0);
pub const CHAR_TIME_RANGE: (f64, f64) = (0.5, 0.9);
pub const DESIRED_SPEED_RANGE: (f64, f64) = (0.5, 3.0);
pub const WALL_A: f64 = 1000.0;
pub const WALL_B: f64 = 0.08;
pub const PED_RADIUS: f64 = 0.3;
/// Start-to-goal distance range of open-space runs, m.
pub const OPEN_START_DISTANCE: (f64, f64) = (8.0, 10.0);
/// Half extent of the square open-space goals are drawn from, m.
pub const OPEN_GOAL_EXTENT: f64 = 10.0;
/// Labels above this magnitude mean the integrator blew up.
pub const LABEL_SANITY_BOUND: f64 = 1e4;
pub const TRAIN_FRACTION: f64 = 0.7;

pub fn sample_params<R: Rng>(rng: &mut R) -> SfmParams {
    SfmParams {
        mass: rng.gen_range(MASS_RANGE.0..=MASS_RANGE.1),
        char_time: rng.gen_range(CHAR_TIME_RANGE.0..=CHAR_TIME_RANGE.1),
        desired_speed: rng.gen_range(DESIRED_SPEED_RANGE.0..=DESIRED_SPEED_RANGE.1),
        radius: PED_RADIUS,
        wall_a: WALL_A,
        wall_b: WALL_B,
        ..SfmParams::default()
    }
}

/// Independent RNG stream of simulation `index`.
pub fn sim_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn uniform_in_disc<R: Rng>(rng: &mut R, center: Vec2, radius: f64) -> Vec2 {
    let r = radius * rng.gen::<f64>().sqrt();
    center + Vec2::from_polar(r, rng.gen_range(0.0..2.0 * PI))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Open,
    Corridor,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Open => "open",
            ScenarioKind::Corridor => "corridor",
        }
    }

    pub fn net_type(self) -> NetType {
        match self {
            ScenarioKind::Open => NetType::Net1,
            ScenarioKind::Corridor => NetType::Net2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub count: usize,
    pub seed: u64,
    pub duration: f64,
    pub dt: f64,
    pub window_len: usize,
    pub train_fraction: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            count: 800,
            seed: 0,
            duration: 20.0,
            dt: 0.1,
            window_len: WINDOW_LEN,
            train_fraction: TRAIN_FRACTION,
        }
    }
}

impl GenConfig {
    fn sim_config(&self) -> SimConfig {
        SimConfig {
            duration: self.duration,
            dt: self.dt,
            ..SimConfig::default()
        }
    }

    fn describe(&self, scenario: &Scenario, kind: ScenarioKind) -> String {
        format!(
            "kind={};scenario={};count={};seed={};duration={:e};dt={:e};n={};train_fraction={:e};\
             m={:?};tau={:?};vd={:?};A={:e};B={:e};r={:e}",
            kind.as_str(),
            sha256_hex(scenario.to_text().as_bytes()),
            self.count,
            self.seed,
            self.duration,
            self.dt,
            self.window_len,
            self.train_fraction,
            MASS_RANGE,
            CHAR_TIME_RANGE,
            DESIRED_SPEED_RANGE,
            WALL_A,
            WALL_B,
            PED_RADIUS
        )
    }
}

/// One randomised simulation and what it was drawn from.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub traj_id: usize,
    pub params: SfmParams,
    pub goal: GoalSpec,
    pub start_area: Option<usize>,
    pub goal_area: Option<usize>,
    pub trajectory: Trajectory,
}

/// Randomised initial conditions of one simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSetup {
    pub params: SfmParams,
    pub initial: PedState,
    pub goal: GoalSpec,
    pub start_area: Option<usize>,
    pub goal_area: Option<usize>,
}

/// Open space: start 8 to 10 m from a random goal, initial speed uniform in
/// `[0, v_d]` heading up to 90 degrees off the goal direction.
pub fn open_setup(index: usize, seed: u64) -> SimSetup {
    let mut rng = sim_rng(seed, index);
    let params = sample_params(&mut rng);
    let goal = Vec2::new(
        rng.gen_range(-OPEN_GOAL_EXTENT..=OPEN_GOAL_EXTENT),
        rng.gen_range(-OPEN_GOAL_EXTENT..=OPEN_GOAL_EXTENT),
    );
    let distance = rng.gen_range(OPEN_START_DISTANCE.0..=OPEN_START_DISTANCE.1);
    let bearing = rng.gen_range(0.0..2.0 * PI);
    let start = goal + Vec2::from_polar(distance, bearing);
    let heading = bearing + PI + rng.gen_range(-FRAC_PI_2..=FRAC_PI_2);
    let speed = rng.gen_range(0.0..=params.desired_speed);
    SimSetup {
        params,
        initial: PedState::new(start, Vec2::from_polar(speed, heading), 0.0),
        goal: GoalSpec::new(goal),
        start_area: None,
        goal_area: None,
    }
}

fn run_setup(index: usize, setup: SimSetup, walls: &[WallSegment], config: &GenConfig) -> Result<SimRun> {
    let trajectory = simulate(&setup.initial, &setup.params, &setup.goal, walls, &config.sim_config())?;
    Ok(SimRun {
        traj_id: index,
        params: setup.params,
        goal: setup.goal,
        start_area: setup.start_area,
        goal_area: setup.goal_area,
        trajectory,
    })
}

pub fn simulate_open(index: usize, config: &GenConfig) -> Result<SimRun> {
    run_setup(index, open_setup(index, config.seed), &[], config)
}

/// Corridor: start and goal drawn uniformly inside two distinct waypoint
/// areas; initial speed uniform in `[0, v_d]` pointing along the start arm
/// towards the crossing.
pub fn corridor_setup(index: usize, seed: u64, scenario: &Scenario) -> Result<SimSetup> {
    let areas = &scenario.waypoints;
    if areas.len() < 2 {
        return Err(Error::InvalidParams(
            "corridor generation needs at least two waypoint areas".into(),
        ));
    }
    let mut rng = sim_rng(seed, index);
    let params = sample_params(&mut rng);
    let start_area = rng.gen_range(0..areas.len());
    let goal_area = loop {
        let g = rng.gen_range(0..areas.len());
        if g != start_area {
            break g;
        }
    };
    let start = uniform_in_disc(&mut rng, areas[start_area].center, areas[start_area].radius);
    let goal = uniform_in_disc(&mut rng, areas[goal_area].center, areas[goal_area].radius);
    let inward = (-areas[start_area].center)
        .normalized(1e-9)
        .unwrap_or(Vec2::new(1.0, 0.0));
    let speed = rng.gen_range(0.0..=params.desired_speed);
    Ok(SimSetup {
        params,
        initial: PedState::new(start, inward * speed, 0.0),
        goal: GoalSpec::new(goal),
        start_area: Some(start_area),
        goal_area: Some(goal_area),
    })
}

pub fn simulate_corridor(index: usize, config: &GenConfig, scenario: &Scenario) -> Result<SimRun> {
    run_setup(index, corridor_setup(index, config.seed, scenario)?, &scenario.walls, config)
}

/// A window cut from a trajectory, with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// Time of the window's last sample.
    pub t: f64,
    pub window: TrajectoryWindow,
    pub label: Vec2,
    pub aux: Option<AuxInput>,
}

/// Goal and walls used to evaluate Net2's auxiliary inputs.
#[derive(Debug, Clone, Copy)]
pub struct AuxContext<'a> {
    pub goal: GoalSpec,
    pub walls: &'a [WallSegment],
}

/// Net2 inputs at position `p`.
pub fn aux_inputs(p: Vec2, ctx: &AuxContext<'_>) -> Result<AuxInput> {
    let e_d = ctx.goal.direction_from(p)?;
    let contact = nearest_wall(p, ctx.walls)?
        .ok_or_else(|| Error::InvalidParams("Net2 inputs need at least one wall".into()))?;
    Ok(AuxInput {
        e_d,
        d_w: contact.distance,
        n_w: contact.normal,
    })
}

/// Stride-1 windows of `n` positions; each labelled with the total force
/// logged at its last step. Trajectories shorter than `n` give no windows.
pub fn make_windows(
    trajectory: &Trajectory,
    n: usize,
    dt: f64,
    aux: Option<&AuxContext<'_>>,
) -> Result<Vec<WindowSample>> {
    let pts = &trajectory.points;
    if n < 3 || pts.len() < n {
        return Ok(Vec::new());
    }
    (0..=pts.len() - n)
        .map(|k| {
            let last = &pts[k + n - 1];
            let window =
                TrajectoryWindow::new(pts[k..k + n].iter().map(|p| p.state.position).collect(), dt)?;
            let aux = aux
                .map(|ctx| aux_inputs(last.state.position, ctx))
                .transpose()?;
            Ok(WindowSample {
                t: last.state.time,
                window,
                label: last.forces.total,
                aux,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub traj_id: usize,
    pub t: f64,
    pub input: NetInput,
    pub label: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<SampleRecord>,
    pub val: Vec<SampleRecord>,
    pub seed: u64,
    /// SHA-256 of the generation config.
    pub provenance: String,
    pub dt: f64,
    /// Trajectories dropped because their simulation failed.
    pub skipped: Vec<usize>,
}

pub const DATASET_HEADER_PREFIX: &str = "traj_id,split,t";

impl DatasetSplit {
    pub fn net_type(&self) -> Option<NetType> {
        let first = self.train.first().or(self.val.first())?;
        Some(if first.input.aux.is_some() {
            NetType::Net2
        } else {
            NetType::Net1
        })
    }

    pub fn train_ids(&self) -> Vec<usize> {
        unique_ids(&self.train)
    }

    pub fn val_ids(&self) -> Vec<usize> {
        unique_ids(&self.val)
    }

    /// True when no trajectory contributes windows to both splits.
    pub fn is_leak_free(&self) -> bool {
        let val = self.val_ids();
        self.train_ids().iter().all(|id| val.binary_search(id).is_err())
    }

    pub fn window_len(&self) -> Option<usize> {
        self.train
            .first()
            .or(self.val.first())
            .map(|s| s.input.window.len())
    }

    pub fn to_csv(&self) -> String {
        let n = self.window_len().unwrap_or(WINDOW_LEN);
        let mut out = String::new();
        out.push_str(DATASET_HEADER_PREFIX);
        for k in 0..n {
            let _ = write!(out, ",px{k}");
        }
        for k in 0..n {
            let _ = write!(out, ",py{k}");
        }
        out.push_str(",edx,edy,dw,nwx,nwy,fx,fy\n");
        for (split, records) in [(Split::Train, &self.train), (Split::Val, &self.val)] {
            for r in records {
                let _ = write!(out, "{},{},{:e}", r.traj_id, split.as_str(), r.t);
                let pos = r.input.window.positions();
                for p in pos {
                    let _ = write!(out, ",{:e}", p.x);
                }
                for p in pos {
                    let _ = write!(out, ",{:e}", p.y);
                }
                match &r.input.aux {
                    Some(a) => {
                        let _ = write!(
                            out,
                            ",{:e},{:e},{:e},{:e},{:e}",
                            a.e_d.x, a.e_d.y, a.d_w, a.n_w.x, a.n_w.y
                        );
                    }
                    None => out.push_str(",,,,,"),
                }
                let _ = writeln!(out, ",{:e},{:e}", r.label.x, r.label.y);
            }
        }
        out
    }

    /// Parses a dataset CSV. The file carries no time step, so the window
    /// spacing `dt` is supplied by the caller.
    pub fn parse_csv(text: &str, dt: f64, source: &str) -> Result<DatasetSplit> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(source, 1, "empty dataset file"))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let n = cols.iter().filter(|c| c.starts_with("px")).count();
        let expected = {
            let mut h = vec!["traj_id".to_string(), "split".into(), "t".into()];
            h.extend((0..n).map(|k| format!("px{k}")));
            h.extend((0..n).map(|k| format!("py{k}")));
            h.extend(["edx", "edy", "dw", "nwx", "nwy", "fx", "fy"].map(String::from));
            h
        };
        if n < 3 || cols != expected {
            return Err(Error::parse(source, 1, "unexpected dataset header"));
        }
        let mut ds = DatasetSplit {
            train: Vec::new(),
            val: Vec::new(),
            seed: 0,
            provenance: String::new(),
            dt,
            skipped: Vec::new(),
        };
        for (i, line) in lines {
            let lineno = i + 1;
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != cols.len() {
                return Err(Error::parse(source, lineno, "wrong number of fields"));
            }
            let num = |j: usize| {
                parse_f64(f[j])
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(source, lineno, format!("bad `{}` value", cols[j])))
            };
            let traj_id: usize = f[0]
                .parse()
                .map_err(|_| Error::parse(source, lineno, "bad traj_id"))?;
            let split = match f[1] {
                "train" => Split::Train,
                "val" => Split::Val,
                _ => return Err(Error::parse(source, lineno, "split must be train or val")),
            };
            let t = num(2)?;
            let positions = (0..n)
                .map(|k| Ok(Vec2::new(num(3 + k)?, num(3 + n + k)?)))
                .collect::<Result<Vec<_>>>()?;
            let base = 3 + 2 * n;
            let aux_present = f[base..base + 5].iter().map(|s| !s.is_empty()).collect::<Vec<_>>();
            let aux = if aux_present.iter().all(|p| *p) {
                Some(AuxInput {
                    e_d: Vec2::new(num(base)?, num(base + 1)?),
                    d_w: num(base + 2)?,
                    n_w: Vec2::new(num(base + 3)?, num(base + 4)?),
                })
            } else if aux_present.iter().any(|p| *p) {
                return Err(Error::parse(source, lineno, "partially filled aux columns"));
            } else {
                None
            };
            let label = Vec2::new(num(base + 5)?, num(base + 6)?);
            let window = TrajectoryWindow::new(positions, dt)
                .map_err(|e| Error::parse(source, lineno, e.to_string()))?;
            let rec = SampleRecord {
                traj_id,
                t,
                input: NetInput { window, aux },
                label,
            };
            match split {
                Split::Train => ds.train.push(rec),
                Split::Val => ds.val.push(rec),
            }
        }
        let has_aux: Vec<bool> = ds.train.iter().chain(&ds.val).map(|r| r.input.aux.is_some()).collect();
        if has_aux.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::parse(source, 0, "mixed Net1 and Net2 rows"));
        }
        Ok(ds)
    }

    pub fn read_csv(path: &Path, dt: f64) -> Result<DatasetSplit> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DatasetSplit::parse_csv(&text, dt, &path.display().to_string())
    }
}

fn unique_ids(records: &[SampleRecord]) -> Vec<usize> {
    let mut ids: Vec<usize> = records.iter().map(|r| r.traj_id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Turns one simulation into labelled records, or `None` when it must be skipped.
fn records_of(run: &SimRun, config: &GenConfig, walls: Option<&[WallSegment]>) -> Result<Option<Vec<SampleRecord>>> {
    let labels_sane = run
        .trajectory
        .points
        .iter()
        .all(|p| p.forces.total.is_finite() && p.forces.total.norm() < LABEL_SANITY_BOUND);
    if !labels_sane {
        warn!("trajectory {}: force label beyond sanity bound, skipped", run.traj_id);
        return Ok(None);
    }
    let ctx = walls.map(|walls| AuxContext {
        goal: run.goal,
        walls,
    });
    let mut windows = make_windows(&run.trajectory, config.window_len, config.dt, ctx.as_ref())?;
    if run.trajectory.goal_reached {
        // The arrival state's force points at a goal already reached.
        windows.pop();
    }
    Ok(Some(
        windows
            .into_iter()
            .filter(|w| w.window.last_displacement().norm() >= crate::sfm::DEGENERACY_EPS)
            .map(|w| SampleRecord {
                traj_id: run.traj_id,
                t: w.t,
                input: NetInput {
                    window: w.window,
                    aux: w.aux,
                },
                label: w.label,
            })
            .collect(),
    ))
}

fn assemble(
    config: &GenConfig,
    results: Vec<(usize, Result<Option<Vec<SampleRecord>>>)>,
    provenance: String,
) -> DatasetSplit {
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    for (id, res) in results {
        match res {
            Ok(Some(records)) => kept.push(records),
            Ok(None) => skipped.push(id),
            Err(e) => {
                warn!("trajectory {id}: {e}; skipped");
                skipped.push(id);
            }
        }
    }
    let n_train = (kept.len() as f64 * config.train_fraction).round() as usize;
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (i, records) in kept.into_iter().enumerate() {
        if i < n_train {
            train.extend(records);
        } else {
            val.extend(records);
        }
    }
    DatasetSplit {
        train,
        val,
        seed: config.seed,
        provenance,
        dt: config.dt,
        skipped,
    }
}

fn check_config(config: &GenConfig) -> Result<()> {
    if config.count < 10 {
        return Err(Error::InvalidParams(format!(
            "dataset generation needs at least 10 simulations, got {}",
            config.count
        )));
    }
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(Error::InvalidParams("train fraction must lie in (0, 1)".into()));
    }
    if !(config.dt > 0.0 && config.duration > 0.0) {
        return Err(Error::InvalidParams("duration and dt must be > 0".into()));
    }
    Ok(())
}

/// Open-space dataset for Net1. Runs on the current rayon pool.
pub fn gen_open_dataset(config: &GenConfig) -> Result<DatasetSplit> {
    check_config(config)?;
    let results: Vec<_> = (0..config.count)
        .into_par_iter()
        .map(|i| (i, simulate_open(i, config).and_then(|run| records_of(&run, config, None))))
        .collect();
    let provenance = sha256_hex(config.describe(&Scenario::open(), ScenarioKind::Open).as_bytes());
    Ok(assemble(config, results, provenance))
}

/// Corridor dataset for Net2, with `e_d` towards the true goal and the
/// nearest wall's distance and normal.
pub fn gen_corridor_dataset(config: &GenConfig, scenario: &Scenario) -> Result<DatasetSplit> {
    check_config(config)?;
    scenario.validate()?;
    if scenario.walls.is_empty() || scenario.waypoints.len() < 2 {
        return Err(Error::InvalidParams(
            "corridor generation needs walls and at least two waypoint areas".into(),
        ));
    }
    let results: Vec<_> = (0..config.count)
        .into_par_iter()
        .map(|i| {
            (
                i,
                simulate_corridor(i, config, scenario)
                    .and_then(|run| records_of(&run, config, Some(&scenario.walls))),
            )
        })
        .collect();
    let provenance = sha256_hex(config.describe(scenario, ScenarioKind::Corridor).as_bytes());
    Ok(assemble(config, results, provenance))
}
