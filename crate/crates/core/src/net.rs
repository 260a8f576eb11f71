//! Social-force-structured networks.
//!
//! Net1 predicts the goal attraction from a window of past positions:
//!
//! ```text
//! f = sigmoid(D W_v) . w_vs  *  dp_last / |dp_last|  -  tanh(flat(dP) W_vel) (*) w_vel_s
//! ```
//!
//! where `dP` are the window positions relative to the oldest one, `D` the
//! magnitudes of consecutive displacements and `dp_last` the most recent
//! displacement. The speed branch stands for `m v_d / tau`, the velocity
//! branch for `m v / tau`.
//!
//! Net2 takes the desired direction `e_d` as an input instead of deriving it
//! from motion, and adds a wall repulsion branch `w_A exp(d_w / w_B) n_w (*) w_fs`
//! fed with the distance and normal of the nearest wall.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::io::{sha256_hex, sig17};

/// Number of positions in an input window.
pub const WINDOW_LEN: usize = 10;
/// Hidden width of the speed branch.
pub const SPEED_HIDDEN: usize = 10;

pub const WEIGHT_FORMAT_VERSION: &str = "sfmnet-weights/1";

/// Largest exponent accepted by the repulsive branch before `exp` overflows.
const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryWindow {
    positions: Vec<Vec2>,
    dt: f64,
}

impl TrajectoryWindow {
    pub fn new(positions: Vec<Vec2>, dt: f64) -> Result<Self> {
        if positions.len() < 3 {
            return Err(Error::Shape(format!(
                "window needs at least 3 positions, got {}",
                positions.len()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParams(format!("window dt must be > 0, got {dt}")));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParams("window positions must be finite".into()));
        }
        Ok(TrajectoryWindow { positions, dt })
    }

    /// Oldest first.
    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn last(&self) -> Vec2 {
        self.positions[self.positions.len() - 1]
    }

    /// Most recent displacement.
    pub fn last_displacement(&self) -> Vec2 {
        let n = self.positions.len();
        self.positions[n - 1] - self.positions[n - 2]
    }

    /// Drops the oldest position and appends `p`.
    pub fn slide(&mut self, p: Vec2) {
        self.positions.remove(0);
        self.positions.push(p);
    }

    pub fn translated(&self, offset: Vec2) -> TrajectoryWindow {
        TrajectoryWindow {
            positions: self.positions.iter().map(|p| *p + offset).collect(),
            dt: self.dt,
        }
    }

    pub fn rotated(&self, angle: f64) -> TrajectoryWindow {
        TrajectoryWindow {
            positions: self.positions.iter().map(|p| p.rotate(angle)).collect(),
            dt: self.dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    /// Positions relative to the oldest window sample.
    pub relative: Vec<Vec2>,
    /// Most recent displacement.
    pub last_displacement: Vec2,
    /// Magnitudes of consecutive displacements, oldest first.
    pub step_lengths: Vec<f64>,
}

pub fn features(window: &TrajectoryWindow) -> Features {
    let p = window.positions();
    let origin = p[0];
    Features {
        relative: p.iter().map(|q| *q - origin).collect(),
        last_displacement: window.last_displacement(),
        step_lengths: p.windows(2).map(|w| (w[1] - w[0]).norm()).collect(),
    }
}

/// Wall and goal inputs of Net2, evaluated at the window's last position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxInput {
    pub e_d: Vec2,
    pub d_w: f64,
    pub n_w: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetInput {
    pub window: TrajectoryWindow,
    pub aux: Option<AuxInput>,
}

impl NetInput {
    pub fn net1(window: TrajectoryWindow) -> Self {
        NetInput { window, aux: None }
    }

    pub fn net2(window: TrajectoryWindow, aux: AuxInput) -> Self {
        NetInput {
            window,
            aux: Some(aux),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Named parameter tensors with a fixed iteration order.
pub trait ParamSet: Clone {
    fn tensors(&self) -> Vec<(&'static str, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += other * scale`, tensor by tensor.
    fn add_scaled(&mut self, other: &Self, scale: f64) {
        let src = other.tensors();
        for ((_, dst), (_, s)) in self.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s) {
                *d += v * scale;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Net1Weights {
    n: usize,
    /// (n-1) x 10, row-major.
    pub w_v: Vec<f64>,
    pub w_vs: Vec<f64>,
    /// 2n x 2, row-major, rows follow x0, y0, x1, y1, ...
    pub w_vel: Vec<f64>,
    pub w_vel_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Net2Weights {
    pub base: Net1Weights,
    pub w_a: f64,
    pub w_b: f64,
    pub w_fs: Vec<f64>,
}

/// Intermediate values of the attractive branches kept for the backward pass.
struct AttractiveCache {
    step_lengths: Vec<f64>,
    flat: Vec<f64>,
    hidden: Vec<f64>,
    vel_act: [f64; 2],
    direction: Vec2,
}

impl Net1Weights {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 3, "window length must be at least 3");
        Net1Weights {
            n,
            w_v: vec![0.0; (n - 1) * SPEED_HIDDEN],
            w_vs: vec![0.0; SPEED_HIDDEN],
            w_vel: vec![0.0; 2 * n * 2],
            w_vel_s: vec![0.0; 2],
        }
    }

    /// Matrices uniform in [-0.1, 0.1], rescale vectors at 10.
    pub fn init<R: Rng>(n: usize, rng: &mut R) -> Self {
        let mut w = Net1Weights::zeros(n);
        for v in w.w_v.iter_mut().chain(w.w_vel.iter_mut()) {
            *v = rng.gen_range(-0.1..=0.1);
        }
        w.w_vs.fill(10.0);
        w.w_vel_s.fill(100.0);
        w
    }

    pub fn window_len(&self) -> usize {
        self.n
    }

    /// Parameters of the desired-speed branch (`W_v` and `w_vs`).
    pub fn speed_branch_count(&self) -> usize {
        self.w_v.len() + self.w_vs.len()
    }

    fn check_window(&self, window: &TrajectoryWindow) -> Result<()> {
        if window.len() != self.n {
            return Err(Error::Shape(format!(
                "window has {} positions, weights expect {}",
                window.len(),
                self.n
            )));
        }
        Ok(())
    }

    fn attractive(&self, feats: &Features, direction: Vec2) -> (Vec2, AttractiveCache) {
        let hidden: Vec<f64> = (0..SPEED_HIDDEN)
            .map(|j| {
                let z: f64 = feats
                    .step_lengths
                    .iter()
                    .enumerate()
                    .map(|(k, d)| d * self.w_v[k * SPEED_HIDDEN + j])
                    .sum();
                sigmoid(z)
            })
            .collect();
        let speed: f64 = hidden.iter().zip(&self.w_vs).map(|(h, w)| h * w).sum();

        let flat: Vec<f64> = feats.relative.iter().flat_map(|p| [p.x, p.y]).collect();
        let mut vel_act = [0.0; 2];
        for (i, act) in vel_act.iter_mut().enumerate() {
            let u: f64 = flat
                .iter()
                .enumerate()
                .map(|(k, x)| x * self.w_vel[k * 2 + i])
                .sum();
            *act = u.tanh();
        }
        let f = direction * speed
            - Vec2::new(vel_act[0] * self.w_vel_s[0], vel_act[1] * self.w_vel_s[1]);
        (
            f,
            AttractiveCache {
                step_lengths: feats.step_lengths.clone(),
                flat,
                hidden,
                vel_act,
                direction,
            },
        )
    }

    /// Accumulates into `grad` the gradient of `residual . f` through the attractive branches.
    fn attractive_backward(&self, cache: &AttractiveCache, residual: Vec2, grad: &mut Net1Weights) {
        let d_speed = residual.dot(cache.direction);
        for j in 0..SPEED_HIDDEN {
            let h = cache.hidden[j];
            grad.w_vs[j] += d_speed * h;
            let dz = d_speed * self.w_vs[j] * h * (1.0 - h);
            for (k, d) in cache.step_lengths.iter().enumerate() {
                grad.w_v[k * SPEED_HIDDEN + j] += d * dz;
            }
        }
        let r = [residual.x, residual.y];
        for i in 0..2 {
            let t = cache.vel_act[i];
            grad.w_vel_s[i] -= r[i] * t;
            let du = -r[i] * self.w_vel_s[i] * (1.0 - t * t);
            for (k, x) in cache.flat.iter().enumerate() {
                grad.w_vel[k * 2 + i] += x * du;
            }
        }
    }

    fn motion_direction(feats: &Features) -> Result<Vec2> {
        let disp = feats.last_displacement;
        disp.normalized(crate::sfm::DEGENERACY_EPS)
            .ok_or(Error::StationaryWindow {
                displacement: disp.norm(),
            })
    }

    /// Net1 force with the desired direction taken from the last displacement.
    pub fn forward(&self, window: &TrajectoryWindow) -> Result<Vec2> {
        self.check_window(window)?;
        let feats = features(window);
        let e = Self::motion_direction(&feats)?;
        Ok(self.attractive(&feats, e).0)
    }

    /// Net1 force with an externally supplied direction. A zero direction
    /// drops the speed branch.
    pub fn forward_with_direction(&self, window: &TrajectoryWindow, direction: Vec2) -> Result<Vec2> {
        self.check_window(window)?;
        Ok(self.attractive(&features(window), direction).0)
    }

    /// Returns the prediction and the gradient of `0.5 |f - label|^2`.
    pub fn backward(&self, window: &TrajectoryWindow, label: Vec2) -> Result<(Vec2, Net1Weights)> {
        self.check_window(window)?;
        let feats = features(window);
        let e = Self::motion_direction(&feats)?;
        let (f, cache) = self.attractive(&feats, e);
        let mut grad = self.zeros_like();
        self.attractive_backward(&cache, f - label, &mut grad);
        Ok((f, grad))
    }
}

impl ParamSet for Net1Weights {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("W_v", &self.w_v),
            ("w_vs", &self.w_vs),
            ("W_vel", &self.w_vel),
            ("w_vel_s", &self.w_vel_s),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("W_v", &mut self.w_v),
            ("w_vs", &mut self.w_vs),
            ("W_vel", &mut self.w_vel),
            ("w_vel_s", &mut self.w_vel_s),
        ]
    }
}

impl Net2Weights {
    pub fn zeros(n: usize) -> Self {
        Net2Weights {
            base: Net1Weights::zeros(n),
            w_a: 0.0,
            w_b: -0.1,
            w_fs: vec![0.0; 2],
        }
    }

    /// Net1 initialisation plus `w_A = 1`, `w_B = -0.1`, `w_fs = (1, 1)`.
    pub fn init<R: Rng>(n: usize, rng: &mut R) -> Self {
        Net2Weights {
            base: Net1Weights::init(n, rng),
            w_a: 1.0,
            w_b: -0.1,
            w_fs: vec![1.0, 1.0],
        }
    }

    /// Repulsive weights reproducing `A exp((r - d_w) / B) n_w` exactly.
    pub fn set_wall_oracle(&mut self, a: f64, b: f64, radius: f64) {
        self.w_a = a * (radius / b).exp();
        self.w_b = -b;
        self.w_fs = vec![1.0, 1.0];
    }

    pub fn window_len(&self) -> usize {
        self.base.n
    }

    fn exponent(&self, d_w: f64) -> Result<f64> {
        let x = d_w / self.w_b;
        if !x.is_finite() || x > MAX_EXPONENT {
            return Err(Error::ExponentOverflow {
                sample: format!("d_w = {d_w}, w_B = {}", self.w_b),
                exponent: x,
            });
        }
        Ok(x)
    }

    /// Wall branch alone: `w_A exp(d_w / w_B) n_w (*) w_fs`.
    pub fn repulsive(&self, d_w: f64, n_w: Vec2) -> Result<Vec2> {
        let s = self.w_a * self.exponent(d_w)?.exp();
        Ok((n_w * s).hadamard(Vec2::new(self.w_fs[0], self.w_fs[1])))
    }

    fn aux(input: &NetInput) -> Result<AuxInput> {
        input
            .aux
            .ok_or_else(|| Error::Shape("Net2 needs e_d, d_w and n_w inputs".into()))
    }

    pub fn forward(&self, input: &NetInput) -> Result<Vec2> {
        self.base.check_window(&input.window)?;
        let aux = Self::aux(input)?;
        let (att, _) = self.base.attractive(&features(&input.window), aux.e_d);
        Ok(att + self.repulsive(aux.d_w, aux.n_w)?)
    }

    pub fn backward(&self, input: &NetInput, label: Vec2) -> Result<(Vec2, Net2Weights)> {
        self.base.check_window(&input.window)?;
        let aux = Self::aux(input)?;
        let (att, cache) = self.base.attractive(&features(&input.window), aux.e_d);
        let x = self.exponent(aux.d_w)?;
        let e = x.exp();
        let fs = Vec2::new(self.w_fs[0], self.w_fs[1]);
        let rep = (aux.n_w * (self.w_a * e)).hadamard(fs);
        let f = att + rep;
        let r = f - label;

        let mut grad = self.zeros_like();
        self.base.attractive_backward(&cache, r, &mut grad.base);
        let s = self.w_a * e;
        grad.w_fs[0] = r.x * s * aux.n_w.x;
        grad.w_fs[1] = r.y * s * aux.n_w.y;
        let ds = r.dot(aux.n_w.hadamard(fs));
        grad.w_a = ds * e;
        grad.w_b = ds * s * (-aux.d_w / (self.w_b * self.w_b));
        Ok((f, grad))
    }
}

impl ParamSet for Net2Weights {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut t = self.base.tensors();
        t.push(("w_A", std::slice::from_ref(&self.w_a)));
        t.push(("w_B", std::slice::from_ref(&self.w_b)));
        t.push(("w_fs", &self.w_fs));
        t
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut t = self.base.tensors_mut();
        t.push(("w_A", std::slice::from_mut(&mut self.w_a)));
        t.push(("w_B", std::slice::from_mut(&mut self.w_b)));
        t.push(("w_fs", &mut self.w_fs));
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetType {
    Net1,
    Net2,
}

impl NetType {
    pub fn as_str(self) -> &'static str {
        match self {
            NetType::Net1 => "net1",
            NetType::Net2 => "net2",
        }
    }
}

impl std::str::FromStr for NetType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "net1" => Ok(NetType::Net1),
            "net2" => Ok(NetType::Net2),
            other => Err(Error::Format(format!("unknown net type `{other}`"))),
        }
    }
}

/// Either network's weights.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSet {
    Net1(Net1Weights),
    Net2(Net2Weights),
}

impl WeightSet {
    pub fn init<R: Rng>(net: NetType, n: usize, rng: &mut R) -> Self {
        match net {
            NetType::Net1 => WeightSet::Net1(Net1Weights::init(n, rng)),
            NetType::Net2 => WeightSet::Net2(Net2Weights::init(n, rng)),
        }
    }

    pub fn net_type(&self) -> NetType {
        match self {
            WeightSet::Net1(_) => NetType::Net1,
            WeightSet::Net2(_) => NetType::Net2,
        }
    }

    pub fn window_len(&self) -> usize {
        match self {
            WeightSet::Net1(w) => w.window_len(),
            WeightSet::Net2(w) => w.window_len(),
        }
    }

    pub fn net1(&self) -> &Net1Weights {
        match self {
            WeightSet::Net1(w) => w,
            WeightSet::Net2(w) => &w.base,
        }
    }

    pub fn forward(&self, input: &NetInput) -> Result<Vec2> {
        match self {
            WeightSet::Net1(w) => w.forward(&input.window),
            WeightSet::Net2(w) => w.forward(input),
        }
    }

    pub fn backward(&self, input: &NetInput, label: Vec2) -> Result<(Vec2, WeightSet)> {
        match self {
            WeightSet::Net1(w) => w
                .backward(&input.window, label)
                .map(|(f, g)| (f, WeightSet::Net1(g))),
            WeightSet::Net2(w) => w.backward(input, label).map(|(f, g)| (f, WeightSet::Net2(g))),
        }
    }

    pub fn to_json(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{{");
        let _ = writeln!(out, "  \"format_version\": \"{WEIGHT_FORMAT_VERSION}\",");
        let _ = writeln!(out, "  \"net_type\": \"{}\",", self.net_type().as_str());
        let _ = writeln!(out, "  \"n\": {},", self.window_len());
        let _ = writeln!(out, "  \"arrays\": {{");
        let n = self.window_len();
        let tensors = self.tensors();
        for (i, (name, data)) in tensors.iter().enumerate() {
            let shape = tensor_shape(name, n);
            let shape_txt: Vec<String> = shape.iter().map(|s| s.to_string()).collect();
            let data_txt: Vec<String> = data.iter().map(|v| sig17(*v)).collect();
            let _ = write!(
                out,
                "    \"{name}\": {{\"shape\": [{}], \"data\": [{}]}}",
                shape_txt.join(", "),
                data_txt.join(", ")
            );
            out.push_str(if i + 1 < tensors.len() { ",\n" } else { "\n" });
        }
        let _ = writeln!(out, "  }}");
        let _ = writeln!(out, "}}");
        out
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }

    pub fn from_json(text: &str) -> Result<WeightSet> {
        let bad = |m: &str| Error::Format(format!("weight file: {m}"));
        let v: Value = serde_json::from_str(text).map_err(|e| bad(&e.to_string()))?;
        match v.get("format_version").and_then(Value::as_str) {
            Some(WEIGHT_FORMAT_VERSION) => {}
            Some(other) => return Err(bad(&format!("unsupported format version `{other}`"))),
            None => return Err(bad("missing format_version")),
        }
        let net: NetType = v
            .get("net_type")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing net_type"))?
            .parse()?;
        let n = v
            .get("n")
            .and_then(Value::as_u64)
            .filter(|n| *n >= 3)
            .ok_or_else(|| bad("missing or invalid n"))? as usize;
        let arrays = v
            .get("arrays")
            .and_then(Value::as_object)
            .ok_or_else(|| bad("missing arrays"))?;

        let mut weights = match net {
            NetType::Net1 => WeightSet::Net1(Net1Weights::zeros(n)),
            NetType::Net2 => WeightSet::Net2(Net2Weights::zeros(n)),
        };
        let expected: Vec<&str> = weights.tensors().iter().map(|(k, _)| *k).collect();
        if let Some(extra) = arrays.keys().find(|k| !expected.contains(&k.as_str())) {
            return Err(bad(&format!("unexpected array `{extra}`")));
        }
        for (name, dst) in weights.tensors_mut() {
            let entry = arrays
                .get(name)
                .ok_or_else(|| bad(&format!("missing array `{name}`")))?;
            let shape: Vec<usize> = entry
                .get("shape")
                .and_then(Value::as_array)
                .ok_or_else(|| bad(&format!("`{name}` has no shape")))?
                .iter()
                .map(|s| s.as_u64().map(|s| s as usize))
                .collect::<Option<_>>()
                .ok_or_else(|| bad(&format!("`{name}` has a bad shape")))?;
            if shape != tensor_shape(name, n) {
                return Err(Error::Shape(format!(
                    "`{name}` has shape {shape:?}, expected {:?}",
                    tensor_shape(name, n)
                )));
            }
            let data = entry
                .get("data")
                .and_then(Value::as_array)
                .ok_or_else(|| bad(&format!("`{name}` has no data")))?;
            if data.len() != dst.len() {
                return Err(Error::Shape(format!(
                    "`{name}` holds {} values, expected {}",
                    data.len(),
                    dst.len()
                )));
            }
            for (d, x) in dst.iter_mut().zip(data) {
                *d = x
                    .as_f64()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| bad(&format!("`{name}` holds a non-finite value")))?;
            }
        }
        if let WeightSet::Net2(w) = &weights {
            if w.w_b == 0.0 {
                return Err(bad("w_B must be nonzero"));
            }
        }
        Ok(weights)
    }

    pub fn read(path: &Path) -> Result<WeightSet> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        WeightSet::from_json(&text)
    }
}

fn tensor_shape(name: &str, n: usize) -> Vec<usize> {
    match name {
        "W_v" => vec![n - 1, SPEED_HIDDEN],
        "w_vs" => vec![SPEED_HIDDEN],
        "W_vel" => vec![2 * n, 2],
        "w_vel_s" | "w_fs" => vec![2],
        "w_A" | "w_B" => vec![1],
        other => unreachable!("unknown tensor {other}"),
    }
}

impl ParamSet for WeightSet {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        match self {
            WeightSet::Net1(w) => w.tensors(),
            WeightSet::Net2(w) => w.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        match self {
            WeightSet::Net1(w) => w.tensors_mut(),
            WeightSet::Net2(w) => w.tensors_mut(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line_window(speed: f64, heading: f64) -> TrajectoryWindow {
        let step = Vec2::from_polar(speed * 0.1, heading);
        TrajectoryWindow::new(
            (0..WINDOW_LEN).map(|k| Vec2::new(2.0, -1.0) + step * k as f64).collect(),
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn features_of_uniform_motion() {
        let f = features(&line_window(1.0, 0.3));
        assert_eq!(f.relative[0], Vec2::ZERO);
        assert_eq!(f.step_lengths.len(), WINDOW_LEN - 1);
        for d in &f.step_lengths {
            assert!((d - 0.1).abs() < 1e-12);
        }
        assert!((f.last_displacement.norm() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn features_of_stationary_window() {
        let w = TrajectoryWindow::new(vec![Vec2::new(3.0, 4.0); WINDOW_LEN], 0.1).unwrap();
        let f = features(&w);
        assert!(f.relative.iter().all(|p| *p == Vec2::ZERO));
        assert!(f.step_lengths.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn param_counts() {
        let w1 = Net1Weights::zeros(WINDOW_LEN);
        assert_eq!(w1.speed_branch_count(), 100);
        assert_eq!(w1.param_count(), 142);
        assert_eq!(Net2Weights::zeros(WINDOW_LEN).param_count(), 146);
    }

    #[test]
    fn zero_weights_give_zero_force() {
        let w = Net1Weights::zeros(WINDOW_LEN);
        assert_eq!(w.forward(&line_window(1.3, 1.0)).unwrap(), Vec2::ZERO);
    }

    #[test]
    fn speed_term_alone() {
        let mut w = Net1Weights::zeros(WINDOW_LEN);
        w.w_vs[0] = 40.0;
        let win = line_window(1.0, 0.7);
        let f = w.forward(&win).unwrap();
        let e = Vec2::from_polar(1.0, 0.7);
        assert!((f - e * 20.0).norm() < 1e-12);
    }

    #[test]
    fn stationary_window_errors() {
        let w = Net1Weights::zeros(WINDOW_LEN);
        let win = TrajectoryWindow::new(vec![Vec2::new(1.0, 1.0); WINDOW_LEN], 0.1).unwrap();
        assert!(matches!(w.forward(&win), Err(Error::StationaryWindow { .. })));
    }

    #[test]
    fn wrong_window_length_errors() {
        let w = Net1Weights::zeros(WINDOW_LEN);
        let win = TrajectoryWindow::new(vec![Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0)], 0.1).unwrap();
        assert!(matches!(w.forward(&win), Err(Error::Shape(_))));
    }

    #[test]
    fn repulsive_oracle_weights() {
        let mut w = Net2Weights::zeros(WINDOW_LEN);
        w.set_wall_oracle(1000.0, 0.08, 0.3);
        let n = Vec2::from_polar(1.0, 2.0);
        let f = w.repulsive(0.3, n).unwrap();
        assert!((f - n * 1000.0).norm() < 1e-9 * 1000.0);
        assert!(w.repulsive(50.0, n).unwrap().norm() < 1e-6);
        w.w_fs = vec![0.0, 0.0];
        assert_eq!(w.repulsive(0.4, n).unwrap(), Vec2::ZERO);
    }

    #[test]
    fn repulsive_overflow_errors() {
        let mut w = Net2Weights::zeros(WINDOW_LEN);
        w.w_b = 0.001;
        assert!(matches!(
            w.repulsive(1.0, Vec2::new(1.0, 0.0)),
            Err(Error::ExponentOverflow { .. })
        ));
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = Net2Weights::init(WINDOW_LEN, &mut rng);
        let input = NetInput::net2(
            line_window(1.1, -0.4),
            AuxInput {
                e_d: Vec2::from_polar(1.0, 0.2),
                d_w: 0.6,
                n_w: Vec2::from_polar(1.0, 1.2),
            },
        );
        let f = w.forward(&input).unwrap();
        let (pred, g) = w.backward(&input, f).unwrap();
        assert_eq!(pred, f);
        for (_, t) in g.tensors() {
            assert!(t.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for net in [NetType::Net1, NetType::Net2] {
            let w = WeightSet::init(net, WINDOW_LEN, &mut rng);
            let text = w.to_json();
            let back = WeightSet::from_json(&text).unwrap();
            assert_eq!(back, w);
            assert_eq!(back.to_json(), text);
        }
    }

    #[test]
    fn json_rejects_bad_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let text = WeightSet::init(NetType::Net1, WINDOW_LEN, &mut rng)
            .to_json()
            .replace("\"shape\": [9, 10]", "\"shape\": [10, 9]");
        assert!(WeightSet::from_json(&text).is_err());
        assert!(WeightSet::from_json("{\"net_type\": \"net1\"}").is_err());
    }
}
