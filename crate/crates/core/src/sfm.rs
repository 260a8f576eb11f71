//! Social force dynamics of a single pedestrian among static walls.
//!
//! The total force is the goal attraction `m (v_d e_d - v) / tau` plus one
//! exponential repulsion per wall, `A exp((r - d_w) / B) n_w`. The optional
//! contact terms add a compression `k1 g(r - d_w) n_w` and a sliding friction
//! `-k2 g(r - d_w) (v . t_w) t_w` with `g(x) = max(0, x)`. Interaction forces
//! between pedestrians are not modelled.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Vec2, WallSegment};
use crate::io::{parse_f64, sig9};

/// Below this distance a direction (goal or wall normal) is considered undefined.
pub const DEGENERACY_EPS: f64 = 1e-9;

/// Distance to the goal at which a simulation ends.
pub const GOAL_RADIUS: f64 = 0.2;

pub const TRAJECTORY_HEADER: &str = "t,x,y,vx,vy,fx,fy,fox,foy,fwx,fwy";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SfmParams {
    /// kg
    pub mass: f64,
    /// s
    pub char_time: f64,
    /// m/s
    pub desired_speed: f64,
    /// m
    pub radius: f64,
    /// N
    pub wall_a: f64,
    /// m
    pub wall_b: f64,
    /// N/m, only used with contact terms on
    pub contact_k1: f64,
    /// kg/(m s), only used with contact terms on
    pub contact_k2: f64,
}

impl SfmParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.mass > 0.0, "mass must be > 0"),
            (self.char_time > 0.0, "characteristic time must be > 0"),
            (self.desired_speed >= 0.0, "desired speed must be >= 0"),
            (self.radius > 0.0, "radius must be > 0"),
            (self.wall_b > 0.0, "wall B must be > 0"),
            (
                self.wall_a.is_finite() && self.contact_k1.is_finite() && self.contact_k2.is_finite(),
                "force constants must be finite",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidParams(msg.to_string()));
            }
        }
        Ok(())
    }
}

impl Default for SfmParams {
    fn default() -> Self {
        SfmParams {
            mass: 70.0,
            char_time: 0.7,
            desired_speed: 1.2,
            radius: 0.3,
            wall_a: 1000.0,
            wall_b: 0.08,
            contact_k1: 1.2e5,
            contact_k2: 2.4e5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PedState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub time: f64,
}

impl PedState {
    pub fn new(position: Vec2, velocity: Vec2, time: f64) -> Self {
        PedState {
            position,
            velocity,
            time,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.velocity.is_finite() && self.time.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalSpec {
    pub point: Vec2,
}

impl GoalSpec {
    pub fn new(point: Vec2) -> Self {
        GoalSpec { point }
    }

    /// Unit vector from `p` towards the goal.
    pub fn direction_from(&self, p: Vec2) -> Result<Vec2> {
        let delta = self.point - p;
        delta
            .normalized(DEGENERACY_EPS)
            .ok_or(Error::DegenerateGoal {
                distance: delta.norm(),
            })
    }
}

/// Contact gate `max(0, x)`.
pub fn contact_gate(x: f64) -> f64 {
    x.max(0.0)
}

pub fn attractive_force(state: &PedState, params: &SfmParams, goal: &GoalSpec) -> Result<Vec2> {
    let e_d = goal.direction_from(state.position)?;
    Ok((e_d * params.desired_speed - state.velocity) * (params.mass / params.char_time))
}

/// Repulsion (and optionally contact) force of a single wall.
pub fn single_wall_force(
    state: &PedState,
    params: &SfmParams,
    wall: &WallSegment,
    contact_terms: bool,
) -> Result<Vec2> {
    let q = wall.closest_point(state.position);
    let diff = state.position - q;
    let d_w = diff.norm();
    if d_w < DEGENERACY_EPS {
        return Err(Error::CoincidentPoint { distance: d_w });
    }
    let n_w = diff / d_w;
    let overlap = params.radius - d_w;
    let mut f = n_w * (params.wall_a * (overlap / params.wall_b).exp());
    if contact_terms {
        let g = contact_gate(overlap);
        let t_w = n_w.perp();
        f += n_w * (params.contact_k1 * g);
        f -= t_w * (params.contact_k2 * g * state.velocity.dot(t_w));
    }
    Ok(f)
}

pub fn wall_force(
    state: &PedState,
    params: &SfmParams,
    walls: &[WallSegment],
    contact_terms: bool,
) -> Result<Vec2> {
    walls.iter().try_fold(Vec2::ZERO, |acc, w| {
        Ok(acc + single_wall_force(state, params, w, contact_terms)?)
    })
}

/// Force components acting at one state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ForceBreakdown {
    pub total: Vec2,
    pub attractive: Vec2,
    pub wall: Vec2,
}

pub fn force_breakdown(
    state: &PedState,
    params: &SfmParams,
    goal: &GoalSpec,
    walls: &[WallSegment],
    contact_terms: bool,
) -> Result<ForceBreakdown> {
    let attractive = attractive_force(state, params, goal)?;
    let wall = wall_force(state, params, walls, contact_terms)?;
    Ok(ForceBreakdown {
        total: attractive + wall,
        attractive,
        wall,
    })
}

pub fn total_force(
    state: &PedState,
    params: &SfmParams,
    goal: &GoalSpec,
    walls: &[WallSegment],
    contact_terms: bool,
) -> Result<Vec2> {
    Ok(force_breakdown(state, params, goal, walls, contact_terms)?.total)
}

/// Semi-implicit Euler update under a known force.
pub fn integrate(state: &PedState, force: Vec2, mass: f64, dt: f64) -> PedState {
    let velocity = state.velocity + force * (dt / mass);
    PedState {
        position: state.position + velocity * dt,
        velocity,
        time: state.time + dt,
    }
}

/// One semi-implicit Euler step of the contact-free dynamics.
pub fn step(
    state: &PedState,
    params: &SfmParams,
    goal: &GoalSpec,
    walls: &[WallSegment],
    dt: f64,
) -> Result<PedState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt must be > 0, got {dt}")));
    }
    let f = total_force(state, params, goal, walls, false)?;
    Ok(integrate(state, f, params.mass, dt))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub duration: f64,
    pub dt: f64,
    /// `None` disables the goal-reached stop.
    pub stop_radius: Option<f64>,
    pub contact_terms: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            duration: 20.0,
            dt: 0.1,
            stop_radius: Some(GOAL_RADIUS),
            contact_terms: false,
        }
    }
}

impl SimConfig {
    /// Number of integration steps covering `duration`.
    pub fn step_count(&self) -> usize {
        (self.duration / self.dt + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub state: PedState,
    /// Forces evaluated at `state`; they drive the step out of it.
    pub forces: ForceBreakdown,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub goal_reached: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.points.iter().map(|p| p.state.position).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 160);
        out.push_str(TRAJECTORY_HEADER);
        out.push('\n');
        for pt in &self.points {
            let s = &pt.state;
            let f = &pt.forces;
            let fields = [
                s.time,
                s.position.x,
                s.position.y,
                s.velocity.x,
                s.velocity.y,
                f.total.x,
                f.total.y,
                f.attractive.x,
                f.attractive.y,
                f.wall.x,
                f.wall.y,
            ];
            for (i, v) in fields.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", sig9(*v));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the trajectory CSV written by [`Trajectory::to_csv`]. Only the
    /// `t`, `x`, `y` columns are required; missing columns read as zero.
    pub fn parse_csv(text: &str, source: &str) -> Result<Trajectory> {
        let mut lines = text.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((_, l)) => break l,
                None => return Err(Error::parse(source, 1, "missing header")),
            }
        };
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let idx = |name: &str| cols.iter().position(|c| *c == name);
        let (Some(it), Some(ix), Some(iy)) = (idx("t"), idx("x"), idx("y")) else {
            return Err(Error::parse(source, 1, "header must contain t, x and y"));
        };
        let opt: Vec<Option<usize>> = ["vx", "vy", "fx", "fy", "fox", "foy", "fwx", "fwy"]
            .iter()
            .map(|n| idx(n))
            .collect();

        let mut points = Vec::new();
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let get = |i: usize| -> Result<f64> {
                fields
                    .get(i)
                    .and_then(|f| parse_f64(f))
                    .ok_or_else(|| Error::parse(source, lineno + 1, format!("bad numeric field {}", i + 1)))
            };
            let get_opt = |i: Option<usize>| -> Result<f64> { i.map_or(Ok(0.0), get) };
            let state = PedState::new(
                Vec2::new(get(ix)?, get(iy)?),
                Vec2::new(get_opt(opt[0])?, get_opt(opt[1])?),
                get(it)?,
            );
            let forces = ForceBreakdown {
                total: Vec2::new(get_opt(opt[2])?, get_opt(opt[3])?),
                attractive: Vec2::new(get_opt(opt[4])?, get_opt(opt[5])?),
                wall: Vec2::new(get_opt(opt[6])?, get_opt(opt[7])?),
            };
            points.push(TrajectoryPoint { state, forces });
        }
        Ok(Trajectory {
            points,
            goal_reached: false,
        })
    }

    pub fn read_csv(path: &Path) -> Result<Trajectory> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Trajectory::parse_csv(&text, &path.display().to_string())
    }
}

/// Integrates from `initial` for `config.duration`, logging the force breakdown
/// at every recorded state. Stops early once within the stop radius of the goal.
/// Distance from `p` to the segment travelled from `a` to `b`.
fn sweep_distance(a: Vec2, b: Vec2, p: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sq();
    if len2 == 0.0 {
        return p.distance(a);
    }
    let s = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * s)
}

pub fn simulate(
    initial: &PedState,
    params: &SfmParams,
    goal: &GoalSpec,
    walls: &[WallSegment],
    config: &SimConfig,
) -> Result<Trajectory> {
    params.validate()?;
    if !(config.duration > 0.0) || !(config.dt > 0.0) {
        return Err(Error::InvalidParams(
            "duration and dt must be > 0".to_string(),
        ));
    }
    let steps = config.step_count();
    let mut points = Vec::with_capacity(steps + 1);
    let mut state = *initial;
    let mut goal_reached = false;
    for k in 0..=steps {
        let forces = force_breakdown(&state, params, goal, walls, config.contact_terms).map_err(|e| {
            Error::SimulationStep {
                step: k,
                source: Box::new(e),
            }
        })?;
        if !state.is_finite() || !forces.total.is_finite() {
            return Err(Error::SimulationStep {
                step: k,
                source: Box::new(Error::InvalidParams("non-finite state".into())),
            });
        }
        points.push(TrajectoryPoint { state, forces });
        if let Some(radius) = config.stop_radius {
            // Swept test: a fast agent may step across the goal disc.
            if k > 0 && sweep_distance(points[k - 1].state.position, state.position, goal.point) < radius {
                goal_reached = true;
                break;
            }
        }
        if k < steps {
            state = integrate(&state, forces.total, params.mass, config.dt);
        }
    }
    Ok(Trajectory {
        points,
        goal_reached,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SfmParams {
        SfmParams::default()
    }

    fn at(p: Vec2, v: Vec2) -> PedState {
        PedState::new(p, v, 0.0)
    }

    #[test]
    fn attractive_force_from_rest() {
        let f = attractive_force(
            &at(Vec2::ZERO, Vec2::ZERO),
            &params(),
            &GoalSpec::new(Vec2::new(5.0, 0.0)),
        )
        .unwrap();
        assert!((f.x - 120.0).abs() < 1e-12);
        assert_eq!(f.y, 0.0);
    }

    #[test]
    fn attractive_force_vanishes_at_desired_velocity() {
        let p = params();
        let f = attractive_force(
            &at(Vec2::ZERO, Vec2::new(0.0, p.desired_speed)),
            &p,
            &GoalSpec::new(Vec2::new(0.0, 5.0)),
        )
        .unwrap();
        assert_eq!(f, Vec2::ZERO);
    }

    #[test]
    fn degenerate_goal_errors() {
        let err = attractive_force(
            &at(Vec2::new(1.0, 1.0), Vec2::ZERO),
            &params(),
            &GoalSpec::new(Vec2::new(1.0, 1.0 + 1e-10)),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateGoal { .. }));
    }

    #[test]
    fn wall_force_at_radius_equals_a() {
        let p = params();
        let wall = WallSegment::new(Vec2::new(-5.0, 0.0), Vec2::new(5.0, 0.0)).unwrap();
        let f = wall_force(&at(Vec2::new(0.0, p.radius), Vec2::ZERO), &p, &[wall], false).unwrap();
        assert!((f.norm() - 1000.0).abs() < 1e-12);
        assert!(f.x.abs() < 1e-12 && f.y > 0.0);

        let f = wall_force(
            &at(Vec2::new(0.0, p.radius + p.wall_b), Vec2::ZERO),
            &p,
            &[wall],
            false,
        )
        .unwrap();
        assert!((f.norm() - 1000.0 / std::f64::consts::E).abs() < 1e-9);
        assert!((f.norm() - 367.879441171).abs() < 1e-6);
    }

    #[test]
    fn empty_walls_give_zero() {
        let f = wall_force(&at(Vec2::ZERO, Vec2::ZERO), &params(), &[], true).unwrap();
        assert_eq!(f, Vec2::ZERO);
    }

    #[test]
    fn coincident_wall_point_errors() {
        let wall = WallSegment::new(Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0)).unwrap();
        let err = wall_force(&at(Vec2::new(0.5, 0.0), Vec2::ZERO), &params(), &[wall], false);
        assert!(matches!(err, Err(Error::CoincidentPoint { .. })));
    }

    #[test]
    fn contact_terms_follow_formula() {
        // Overlapping the wall by 0.1 m while sliding along it.
        let p = params();
        let wall = WallSegment::new(Vec2::new(-5.0, 0.0), Vec2::new(5.0, 0.0)).unwrap();
        let state = at(Vec2::new(0.0, 0.2), Vec2::new(1.5, -0.3));
        let f = wall_force(&state, &p, &[wall], true).unwrap();
        let n = Vec2::new(0.0, 1.0);
        let t = Vec2::new(-1.0, 0.0);
        let g = 0.1f64;
        let expected = n * (p.wall_a * (g / p.wall_b).exp()) + n * (p.contact_k1 * g)
            - t * (p.contact_k2 * g * state.velocity.dot(t));
        assert!((f - expected).norm() < 1e-9 * expected.norm());
        // Without overlap the contact terms vanish.
        let far = at(Vec2::new(0.0, 0.5), Vec2::new(1.5, 0.0));
        assert_eq!(
            wall_force(&far, &p, &[wall], true).unwrap(),
            wall_force(&far, &p, &[wall], false).unwrap()
        );
    }

    #[test]
    fn total_is_sum_of_parts() {
        let p = params();
        let walls = [WallSegment::new(Vec2::new(-5.0, 1.0), Vec2::new(5.0, 1.0)).unwrap()];
        let s = at(Vec2::new(0.3, 0.2), Vec2::new(0.4, 0.1));
        let g = GoalSpec::new(Vec2::new(4.0, -2.0));
        let total = total_force(&s, &p, &g, &walls, false).unwrap();
        let sum = attractive_force(&s, &p, &g).unwrap() + wall_force(&s, &p, &walls, false).unwrap();
        assert_eq!(total, sum);
        assert_eq!(
            total_force(&s, &p, &g, &[], false).unwrap(),
            attractive_force(&s, &p, &g).unwrap()
        );
    }

    #[test]
    fn step_hand_arithmetic() {
        let s = integrate(&at(Vec2::ZERO, Vec2::ZERO), Vec2::new(120.0, 0.0), 70.0, 0.1);
        assert!((s.velocity.x - 0.171428571428571).abs() < 1e-12);
        assert!((s.position.x - 0.0171428571428571).abs() < 1e-12);
        assert!((s.time - 0.1).abs() < 1e-15);

        let v = Vec2::new(0.3, -0.2);
        let s = integrate(&at(Vec2::new(1.0, 1.0), v), Vec2::ZERO, 70.0, 0.1);
        assert_eq!(s.position, Vec2::new(1.0, 1.0) + v * 0.1);
    }

    #[test]
    fn step_rejects_nonpositive_dt() {
        let r = step(
            &at(Vec2::ZERO, Vec2::ZERO),
            &params(),
            &GoalSpec::new(Vec2::new(1.0, 0.0)),
            &[],
            0.0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn simulate_counts_and_logs() {
        let p = SfmParams {
            desired_speed: 0.3,
            ..params()
        };
        let traj = simulate(
            &at(Vec2::ZERO, Vec2::ZERO),
            &p,
            &GoalSpec::new(Vec2::new(50.0, 0.0)),
            &[],
            &SimConfig::default(),
        )
        .unwrap();
        assert_eq!(traj.len(), 201);
        assert!(!traj.goal_reached);
        for pt in &traj.points {
            let f = total_force(&pt.state, &p, &GoalSpec::new(Vec2::new(50.0, 0.0)), &[], false).unwrap();
            assert_eq!(f, pt.forces.total);
        }
    }

    #[test]
    fn simulate_stops_at_goal() {
        let traj = simulate(
            &at(Vec2::ZERO, Vec2::ZERO),
            &params(),
            &GoalSpec::new(Vec2::new(5.0, 0.0)),
            &[],
            &SimConfig::default(),
        )
        .unwrap();
        assert!(traj.goal_reached);
        assert!(traj.len() < 201);
        let last = traj.points.last().unwrap().state.position;
        let before = traj.points[traj.len() - 2].state.position;
        assert!(sweep_distance(before, last, Vec2::new(5.0, 0.0)) < GOAL_RADIUS);
        let earlier = traj.points[traj.len() - 3].state.position;
        assert!(sweep_distance(earlier, before, Vec2::new(5.0, 0.0)) >= GOAL_RADIUS);
    }

    #[test]
    fn fast_agent_cannot_step_over_goal() {
        let p = SfmParams {
            desired_speed: 3.0,
            ..params()
        };
        let goal = Vec2::new(0.45, 0.19);
        let traj = simulate(
            &at(Vec2::ZERO, Vec2::new(3.0, 0.0)),
            &p,
            &GoalSpec::new(goal),
            &[],
            &SimConfig::default(),
        )
        .unwrap();
        assert!(traj.goal_reached);
        assert!(traj.len() <= 4, "{}", traj.len());
    }

    #[test]
    fn simulate_reports_failing_step() {
        // Starting exactly on a wall.
        let wall = WallSegment::new(Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0)).unwrap();
        let err = simulate(
            &at(Vec2::ZERO, Vec2::ZERO),
            &params(),
            &GoalSpec::new(Vec2::new(5.0, 0.0)),
            &[wall],
            &SimConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::SimulationStep { step: 0, .. }));
    }

    #[test]
    fn csv_round_trip_keeps_positions() {
        let traj = simulate(
            &at(Vec2::ZERO, Vec2::new(0.1, 0.0)),
            &params(),
            &GoalSpec::new(Vec2::new(3.0, 1.0)),
            &[],
            &SimConfig {
                duration: 1.0,
                ..SimConfig::default()
            },
        )
        .unwrap();
        let csv = traj.to_csv();
        assert!(csv.starts_with(TRAJECTORY_HEADER));
        assert_eq!(csv.lines().count(), 12);
        let back = Trajectory::parse_csv(&csv, "mem").unwrap();
        assert_eq!(back.len(), traj.len());
        for (a, b) in back.points.iter().zip(&traj.points) {
            assert!((a.state.position - b.state.position).norm() < 1e-8);
            assert!((a.forces.total - b.forces.total).norm() < 1e-6);
        }
    }
}
