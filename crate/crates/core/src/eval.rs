//! Trajectory benchmarking: MDE/FDE metrics, pedestrian track ingestion,
//! constant-velocity and constant-acceleration baselines, and report tables.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{sample_params, sim_rng};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::io::{parse_f64, split_fields};
use crate::net::{TrajectoryWindow, WeightSet};
use crate::predict::{rollout, RolloutConfig};
use crate::sfm::{simulate, GoalSpec, PedState, SimConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ObservedTrack {
    pub ped_id: String,
    pub times: Vec<f64>,
    pub positions: Vec<Vec2>,
}

impl ObservedTrack {
    pub fn new(ped_id: impl Into<String>, times: Vec<f64>, positions: Vec<Vec2>) -> Result<Self> {
        if times.len() != positions.len() {
            return Err(Error::LengthMismatch {
                left: times.len(),
                right: positions.len(),
            });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParams("track timestamps must be strictly increasing".into()));
        }
        Ok(ObservedTrack {
            ped_id: ped_id.into(),
            times,
            positions,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalProtocol {
    pub observe_duration: f64,
    pub predict_duration: f64,
    pub resample_dt: f64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            observe_duration: 1.0,
            predict_duration: 4.8,
            resample_dt: 0.1,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.observe_duration > 0.0 && self.predict_duration > 0.0 && self.resample_dt > 0.0) {
            return Err(Error::InvalidParams("protocol durations must be > 0".into()));
        }
        Ok(())
    }

    pub fn observe_points(&self) -> usize {
        (self.observe_duration / self.resample_dt).round() as usize
    }

    pub fn predict_points(&self) -> usize {
        (self.predict_duration / self.resample_dt).round() as usize
    }
}

/// Mean Euclidean distance between time-aligned points.
pub fn mde(predicted: &[Vec2], ground_truth: &[Vec2]) -> Result<f64> {
    if predicted.len() != ground_truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: ground_truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::Empty("mde needs at least one point"));
    }
    let sum: f64 = predicted
        .iter()
        .zip(ground_truth)
        .map(|(p, g)| p.distance(*g))
        .sum();
    Ok(sum / predicted.len() as f64)
}

/// Distance between the final points.
pub fn fde(predicted: &[Vec2], ground_truth: &[Vec2]) -> Result<f64> {
    match (predicted.last(), ground_truth.last()) {
        (Some(p), Some(g)) => Ok(p.distance(*g)),
        _ => Err(Error::Empty("fde needs non-empty trajectories")),
    }
}

/// Which input column holds frame, pedestrian id, x and y.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnMap {
    pub frame: usize,
    pub ped: usize,
    pub x: usize,
    pub y: usize,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            frame: 0,
            ped: 1,
            x: 2,
            y: 3,
        }
    }
}

impl std::str::FromStr for ColumnMap {
    type Err = Error;

    /// Comma-separated role per input column, e.g. `frame,ped,y,x`. Columns
    /// named `_` are ignored.
    fn from_str(s: &str) -> Result<Self> {
        let mut found: HashMap<&str, usize> = HashMap::new();
        for (i, name) in s.split(',').map(str::trim).enumerate() {
            match name {
                "_" => {}
                "frame" | "ped" | "x" | "y" => {
                    if found.insert(name, i).is_some() {
                        return Err(Error::Format(format!("column `{name}` mapped twice")));
                    }
                }
                other => return Err(Error::Format(format!("unknown column role `{other}`"))),
            }
        }
        let get = |k: &str| {
            found
                .get(k)
                .copied()
                .ok_or_else(|| Error::Format(format!("column map lacks `{k}`")))
        };
        Ok(ColumnMap {
            frame: get("frame")?,
            ped: get("ped")?,
            x: get("x")?,
            y: get("y")?,
        })
    }
}

/// Parses a whitespace- or comma-separated pedestrian table. Tracks keep the
/// file's per-pedestrian row order and are returned in order of first
/// appearance; tracks with fewer than two points are dropped.
pub fn parse_tracks(text: &str, source: &str, columns: ColumnMap, frame_dt: f64) -> Result<Vec<ObservedTrack>> {
    if !(frame_dt > 0.0) {
        return Err(Error::InvalidParams("frame_dt must be > 0".into()));
    }
    let width = columns.frame.max(columns.ped).max(columns.x).max(columns.y) + 1;
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, (Vec<f64>, Vec<Vec2>, Vec<usize>)> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let lineno = i + 1;
        let fields = split_fields(trimmed);
        if fields.len() < width {
            return Err(Error::parse(source, lineno, format!("expected at least {width} columns")));
        }
        let num = |j: usize| {
            parse_f64(fields[j])
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(source, lineno, format!("non-numeric value `{}`", fields[j])))
        };
        let frame = num(columns.frame)?;
        num(columns.ped)?;
        let ped = fields[columns.ped].trim().to_string();
        let p = Vec2::new(num(columns.x)?, num(columns.y)?);
        let entry = rows.entry(ped.clone()).or_insert_with(|| {
            order.push(ped);
            (Vec::new(), Vec::new(), Vec::new())
        });
        entry.0.push(frame * frame_dt);
        entry.1.push(p);
        entry.2.push(lineno);
    }
    let mut tracks = Vec::new();
    for ped in order {
        let (times, positions, lines) = rows.remove(&ped).expect("recorded");
        if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::parse(
                source,
                lines[k + 1],
                format!("timestamps of pedestrian {ped} are not increasing"),
            ));
        }
        if times.len() >= 2 {
            tracks.push(ObservedTrack {
                ped_id: ped,
                times,
                positions,
            });
        }
    }
    Ok(tracks)
}

pub fn load_tracks(path: &Path, columns: ColumnMap, frame_dt: f64) -> Result<Vec<ObservedTrack>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tracks(&text, &path.display().to_string(), columns, frame_dt)
}

/// Linear interpolation onto `t0, t0 + dt, ...` up to the last timestamp.
/// The first point is kept exactly, and so is the last when it falls on the grid.
pub fn resample(track: &ObservedTrack, dt: f64) -> Result<ObservedTrack> {
    if track.len() < 2 {
        return Err(Error::InvalidParams("resampling needs at least two points".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParams("dt must be > 0".into()));
    }
    let t0 = track.times[0];
    let t_end = *track.times.last().expect("non-empty");
    let count = ((t_end - t0) / dt + 1e-9).floor() as usize + 1;
    let mut times = Vec::with_capacity(count);
    let mut positions = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let mut t = t0 + k as f64 * dt;
        if (t - t_end).abs() < 1e-9 {
            t = t_end;
        }
        while seg + 2 < track.len() && track.times[seg + 1] < t {
            seg += 1;
        }
        let (ta, tb) = (track.times[seg], track.times[seg + 1]);
        let (pa, pb) = (track.positions[seg], track.positions[seg + 1]);
        let p = if t == ta {
            pa
        } else if t == tb {
            pb
        } else {
            pa + (pb - pa) * ((t - ta) / (tb - ta))
        };
        times.push(t);
        positions.push(p);
    }
    ObservedTrack::new(track.ped_id.clone(), times, positions)
}

fn horizon_steps(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(Error::InvalidParams("horizon and dt must be > 0".into()));
    }
    Ok((horizon / dt).round() as usize)
}

/// Extrapolates the last displacement.
pub fn cv_baseline(window: &[Vec2], horizon: f64, dt: f64) -> Result<Vec<Vec2>> {
    if window.len() < 2 {
        return Err(Error::InvalidParams("CV baseline needs at least 2 points".into()));
    }
    let steps = horizon_steps(horizon, dt)?;
    let n = window.len();
    let disp = window[n - 1] - window[n - 2];
    Ok((1..=steps).map(|k| window[n - 1] + disp * k as f64).collect())
}

/// Extrapolates the last displacement and its last change.
pub fn ca_baseline(window: &[Vec2], horizon: f64, dt: f64) -> Result<Vec<Vec2>> {
    if window.len() < 3 {
        return Err(Error::InvalidParams("CA baseline needs at least 3 points".into()));
    }
    let steps = horizon_steps(horizon, dt)?;
    let n = window.len();
    let mut disp = window[n - 1] - window[n - 2];
    let change = disp - (window[n - 2] - window[n - 3]);
    let mut p = window[n - 1];
    Ok((0..steps)
        .map(|_| {
            disp += change;
            p += disp;
            p
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Cv,
    Ca,
    SfmNn,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Cv, Model::Ca, Model::SfmNn];

    pub fn as_str(self) -> &'static str {
        match self {
            Model::Cv => "CV",
            Model::Ca => "CA",
            Model::SfmNn => "SFM-NN",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub dataset: String,
    pub model: Model,
    pub mde: f64,
    pub fde: f64,
    pub n_segments: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTable {
    /// Per dataset and model, datasets in input order.
    pub rows: Vec<BenchmarkRow>,
    /// Mean over datasets per model.
    pub average: Vec<BenchmarkRow>,
    /// Tracks per dataset too short for a single segment.
    pub skipped_tracks: Vec<(String, usize)>,
}

/// Published FF and LSTM reference errors as (dataset, FF MDE, FF FDE, LSTM MDE, LSTM FDE).
pub const REFERENCE_ERRORS: [(&str, f64, f64, f64, f64); 5] = [
    ("Hotel", 1.59, 3.12, 0.15, 0.33),
    ("ETH", 0.67, 1.32, 0.60, 1.31),
    ("UCY", 0.69, 1.38, 0.52, 1.25),
    ("Zara1", 0.39, 0.81, 0.43, 0.93),
    ("Zara2", 0.38, 0.77, 0.51, 1.09),
];

impl BenchmarkTable {
    pub fn row(&self, dataset: &str, model: Model) -> Option<&BenchmarkRow> {
        self.rows
            .iter()
            .chain(&self.average)
            .find(|r| r.dataset == dataset && r.model == model)
    }

    /// `dataset,model,mde,fde,n_segments`, averages last.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,model,mde,fde,n_segments\n");
        for r in self.rows.iter().chain(&self.average) {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{}",
                r.dataset,
                r.model.as_str(),
                r.mde,
                r.fde,
                r.n_segments
            );
        }
        out
    }

    /// Metric-by-dataset text table with one column per model.
    pub fn to_text(&self) -> String {
        let mut datasets: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !datasets.contains(&r.dataset.as_str()) {
                datasets.push(&r.dataset);
            }
        }
        let mut out = String::new();
        let _ = writeln!(out, "Prediction errors in meters");
        let _ = writeln!(out, "{:<8} {:<16} {:>8} {:>8} {:>8}", "Metric", "Dataset", "CV", "CA", "SFM-NN");
        for (metric, pick) in [("MDE", true), ("FDE", false)] {
            let _ = writeln!(out, "{}", "-".repeat(52));
            let mut lines: Vec<String> = datasets.iter().map(|d| d.to_string()).collect();
            lines.push("Average".into());
            for (i, d) in lines.iter().enumerate() {
                let vals: Vec<String> = Model::ALL
                    .iter()
                    .map(|m| {
                        self.row(d, *m)
                            .map(|r| format!("{:.2}", if pick { r.mde } else { r.fde }))
                            .unwrap_or_else(|| "-".into())
                    })
                    .collect();
                let label = if i == 0 { metric } else { "" };
                if i + 1 == lines.len() {
                    let _ = writeln!(out, "{}", "-".repeat(52));
                }
                let _ = writeln!(
                    out,
                    "{:<8} {:<16} {:>8} {:>8} {:>8}",
                    label, d, vals[0], vals[1], vals[2]
                );
            }
        }
        let _ = writeln!(out, "{}", "-".repeat(52));
        let _ = writeln!(out);
        let _ = writeln!(out, "Published reference values (not recomputed):");
        let _ = writeln!(
            out,
            "{:<16} {:>8} {:>8} {:>9} {:>9}",
            "Dataset", "FF MDE", "FF FDE", "LSTM MDE", "LSTM FDE"
        );
        for (d, ffm, fff, lm, lf) in REFERENCE_ERRORS {
            let _ = writeln!(out, "{d:<16} {ffm:>8.2} {fff:>8.2} {lm:>9.2} {lf:>9.2}");
        }
        for (d, n) in &self.skipped_tracks {
            if *n > 0 {
                let _ = writeln!(out, "\n{d}: {n} track(s) too short for evaluation, skipped");
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct SegmentScore {
    mde: [f64; 3],
    fde: [f64; 3],
}

fn score_segment(
    weights: &WeightSet,
    obs: &[Vec2],
    truth: &[Vec2],
    protocol: &EvalProtocol,
    t0: f64,
) -> Result<SegmentScore> {
    let dt = protocol.resample_dt;
    let horizon = protocol.predict_duration;
    let cv = cv_baseline(obs, horizon, dt)?;
    let ca = ca_baseline(obs, horizon, dt)?;
    let window = TrajectoryWindow::new(obs.to_vec(), dt)?;
    let cfg = RolloutConfig {
        horizon,
        dt,
        ..RolloutConfig::default()
    };
    let nn = rollout(weights, &window, None, &cfg, t0)?.positions();
    let preds = [cv, ca, nn];
    let mut s = SegmentScore {
        mde: [0.0; 3],
        fde: [0.0; 3],
    };
    for (i, p) in preds.iter().enumerate() {
        s.mde[i] = mde(p, truth)?;
        s.fde[i] = fde(p, truth)?;
    }
    Ok(s)
}

/// Start indices of non-overlapping observation windows that leave room for
/// the full prediction horizon.
fn segment_starts(len: usize, observe: usize, predict: usize) -> Vec<usize> {
    (0..)
        .map(|k| k * observe)
        .take_while(|s| s + observe + predict <= len)
        .collect()
}

/// Scores CV, CA and the network's Net1 rollout on every eligible segment of
/// every track: observe `observe_duration`, predict `predict_duration`.
pub fn run_benchmark(
    weights: &WeightSet,
    datasets: &[(String, Vec<ObservedTrack>)],
    protocol: &EvalProtocol,
) -> Result<BenchmarkTable> {
    protocol.validate()?;
    let observe = protocol.observe_points();
    let predict = protocol.predict_points();
    if observe != weights.window_len() {
        return Err(Error::InvalidParams(format!(
            "observation of {observe} points does not match the network window of {}",
            weights.window_len()
        )));
    }
    if !matches!(weights, WeightSet::Net1(_)) {
        return Err(Error::InvalidParams("benchmark rollouts use Net1 weights".into()));
    }
    let mut rows = Vec::new();
    let mut skipped_tracks = Vec::new();
    for (name, tracks) in datasets {
        let resampled: Vec<ObservedTrack> = tracks
            .iter()
            .map(|t| resample(t, protocol.resample_dt))
            .collect::<Result<_>>()?;
        let mut segments: Vec<(usize, usize)> = Vec::new();
        let mut skipped = 0;
        for (ti, t) in resampled.iter().enumerate() {
            let starts = segment_starts(t.len(), observe, predict);
            if starts.is_empty() {
                skipped += 1;
            }
            segments.extend(starts.into_iter().map(|s| (ti, s)));
        }
        let scores: Vec<SegmentScore> = segments
            .par_iter()
            .map(|&(ti, s)| {
                let t = &resampled[ti];
                score_segment(
                    weights,
                    &t.positions[s..s + observe],
                    &t.positions[s + observe..s + observe + predict],
                    protocol,
                    t.times[s + observe - 1],
                )
            })
            .collect::<Result<_>>()?;
        for (i, model) in Model::ALL.iter().enumerate() {
            let n = scores.len();
            let (m, f) = if n == 0 {
                (f64::NAN, f64::NAN)
            } else {
                (
                    scores.iter().map(|s| s.mde[i]).sum::<f64>() / n as f64,
                    scores.iter().map(|s| s.fde[i]).sum::<f64>() / n as f64,
                )
            };
            rows.push(BenchmarkRow {
                dataset: name.clone(),
                model: *model,
                mde: m,
                fde: f,
                n_segments: n,
            });
        }
        skipped_tracks.push((name.clone(), skipped));
    }
    let average = Model::ALL
        .iter()
        .map(|model| {
            let own: Vec<&BenchmarkRow> = rows
                .iter()
                .filter(|r| r.model == *model && r.n_segments > 0)
                .collect();
            let k = own.len().max(1) as f64;
            BenchmarkRow {
                dataset: "Average".into(),
                model: *model,
                mde: own.iter().map(|r| r.mde).sum::<f64>() / k,
                fde: own.iter().map(|r| r.fde).sum::<f64>() / k,
                n_segments: own.iter().map(|r| r.n_segments).sum(),
            }
        })
        .collect();
    Ok(BenchmarkTable {
        rows,
        average,
        skipped_tracks,
    })
}

/// Open-space SFM tracks whose initial heading is 45 to 90 degrees off the
/// goal direction, so that every track bends. Sampled every `dt` seconds.
pub fn synthetic_curved_tracks(count: usize, seed: u64, dt: f64) -> Result<Vec<ObservedTrack>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = sim_rng(seed, i);
            let params = sample_params(&mut rng);
            let bearing = rng.gen_range(0.0..2.0 * PI);
            let distance = rng.gen_range(8.0..=10.0);
            let goal = Vec2::from_polar(distance, bearing);
            let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let heading = bearing + side * rng.gen_range(FRAC_PI_4..=FRAC_PI_2);
            let speed = rng.gen_range(0.5..=1.0) * params.desired_speed;
            let initial = PedState::new(Vec2::ZERO, Vec2::from_polar(speed, heading), 0.0);
            let cfg = SimConfig {
                duration: 20.0,
                dt,
                ..SimConfig::default()
            };
            let traj = simulate(&initial, &params, &GoalSpec::new(goal), &[], &cfg)?;
            ObservedTrack::new(
                format!("{i}"),
                traj.points.iter().map(|p| p.state.time).collect(),
                traj.positions(),
            )
        })
        .collect()
}
