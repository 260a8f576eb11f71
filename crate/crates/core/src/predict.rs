//! Open-loop rollouts: the network infers a force from the current window,
//! the force is integrated with semi-implicit Euler, and the predicted
//! position replaces the oldest window sample.

use crate::error::{Error, Result};
use crate::geom::{nearest_wall, Vec2, WallSegment};
use crate::net::{AuxInput, NetInput, TrajectoryWindow, WeightSet};
use crate::sfm::{ForceBreakdown, GoalSpec, PedState, Trajectory, TrajectoryPoint, DEGENERACY_EPS};

/// Mass used to turn predicted forces into accelerations, kg.
pub const DEFAULT_MASS: f64 = 70.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutConfig {
    pub horizon: f64,
    pub dt: f64,
    pub mass: f64,
    /// Required by Net2 to form `e_d`.
    pub goal: Option<GoalSpec>,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            horizon: 4.8,
            dt: 0.1,
            mass: DEFAULT_MASS,
            goal: None,
        }
    }
}

impl RolloutConfig {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.dt > 0.0 && self.mass > 0.0) {
            return Err(Error::InvalidParams(
                "rollout horizon, dt and mass must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Integration mass for a window. The network absorbs `m / tau` into its
/// weights, so the integrator falls back to the configured constant.
pub fn infer_mass(_window: &TrajectoryWindow, config: &RolloutConfig) -> f64 {
    config.mass
}

/// Most recent non-zero displacement direction in the window.
fn motion_direction(window: &TrajectoryWindow) -> Option<Vec2> {
    window
        .positions()
        .windows(2)
        .rev()
        .find_map(|w| (w[1] - w[0]).normalized(DEGENERACY_EPS))
}

struct ForceModel<'a> {
    weights: &'a WeightSet,
    walls: &'a [WallSegment],
    goal: Option<GoalSpec>,
    held_direction: Option<Vec2>,
}

impl ForceModel<'_> {
    fn infer(&mut self, window: &TrajectoryWindow) -> Result<ForceBreakdown> {
        match self.weights {
            WeightSet::Net1(w) => {
                if let Some(e) = window.last_displacement().normalized(DEGENERACY_EPS) {
                    self.held_direction = Some(e);
                }
                let e = self.held_direction.unwrap_or(Vec2::ZERO);
                let f = w.forward_with_direction(window, e)?;
                Ok(ForceBreakdown {
                    total: f,
                    attractive: f,
                    wall: Vec2::ZERO,
                })
            }
            WeightSet::Net2(w) => {
                let goal = self.goal.ok_or_else(|| {
                    Error::InvalidParams("Net2 rollouts need a goal".into())
                })?;
                let p = window.last();
                let e_d = match goal.direction_from(p) {
                    Ok(e) => {
                        self.held_direction = Some(e);
                        e
                    }
                    // Standing on the goal: keep the last direction.
                    Err(e) => self.held_direction.ok_or(e)?,
                };
                let contact = nearest_wall(p, self.walls)?
                    .ok_or_else(|| Error::InvalidParams("Net2 rollouts need walls".into()))?;
                let aux = AuxInput {
                    e_d,
                    d_w: contact.distance,
                    n_w: contact.normal,
                };
                let total = w.forward(&NetInput::net2(window.clone(), aux))?;
                let wall = w.repulsive(aux.d_w, aux.n_w)?;
                Ok(ForceBreakdown {
                    total,
                    attractive: total - wall,
                    wall,
                })
            }
        }
    }
}

/// Rolls `config.steps()` positions forward from `seed`. The returned
/// trajectory holds only predicted points, timestamped from `t0`, the time
/// of the seed's last sample; each carries the force inferred at it.
pub fn rollout(
    weights: &WeightSet,
    seed: &TrajectoryWindow,
    walls: Option<&[WallSegment]>,
    config: &RolloutConfig,
    t0: f64,
) -> Result<Trajectory> {
    config.validate()?;
    if (seed.dt() - config.dt).abs() > 1e-9 {
        return Err(Error::InvalidParams(format!(
            "seed window spacing {} s differs from rollout dt {} s",
            seed.dt(),
            config.dt
        )));
    }
    if seed.len() != weights.window_len() {
        return Err(Error::Shape(format!(
            "seed window has {} positions, weights expect {}",
            seed.len(),
            weights.window_len()
        )));
    }
    let walls = walls.unwrap_or(&[]);
    if matches!(weights, WeightSet::Net2(_)) && (walls.is_empty() || config.goal.is_none()) {
        return Err(Error::InvalidParams(
            "Net2 rollouts need a scenario with walls and a goal".into(),
        ));
    }
    let mut model = ForceModel {
        weights,
        walls,
        goal: config.goal,
        held_direction: match weights {
            WeightSet::Net1(_) => motion_direction(seed),
            WeightSet::Net2(_) => None,
        },
    };
    let mass = infer_mass(seed, config);
    let dt = config.dt;
    let steps = config.steps();
    let mut window = seed.clone();
    let mut points: Vec<TrajectoryPoint> = Vec::with_capacity(steps);
    for step in 0..=steps {
        let forces = model
            .infer(&window)
            .map_err(|e| Error::RolloutStep {
                step,
                source: Box::new(e),
            })?;
        if step > 0 {
            points[step - 1].forces = forces;
        }
        if step == steps {
            break;
        }
        let p = window.last();
        let v = window.last_displacement() / dt;
        let v_next = v + forces.total * (dt / mass);
        let p_next = p + v_next * dt;
        if !p_next.is_finite() {
            return Err(Error::RolloutStep {
                step,
                source: Box::new(Error::InvalidParams("non-finite predicted position".into())),
            });
        }
        points.push(TrajectoryPoint {
            state: PedState::new(p_next, v_next, t0 + (step + 1) as f64 * dt),
            forces: ForceBreakdown::default(),
        });
        window.slide(p_next);
    }
    Ok(Trajectory {
        points,
        goal_reached: false,
    })
}
