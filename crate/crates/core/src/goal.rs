//! Multi-goal prediction.
//!
//! One Net2 rollout per candidate goal is scored against each incoming
//! observation with an isotropic Gaussian position likelihood, and the
//! hypothesis probabilities follow the first-order generalised
//! pseudo-Bayesian recursion `mu_j <- L_j mu_j / sum_k L_k mu_k`. After each
//! update the probabilities are clamped from below by a floor and
//! renormalised so that no hypothesis is locked out for good.

use std::f64::consts::PI;
use std::fmt::Write as _;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::net::{TrajectoryWindow, WeightSet};
use crate::predict::{rollout, RolloutConfig};
use crate::scenario::Scenario;
use crate::sfm::GoalSpec;

pub const STOP_HYPOTHESIS: &str = "stop";

#[derive(Debug, Clone, PartialEq)]
pub struct GoalConfig {
    /// Position noise standard deviation, m.
    pub sigma: f64,
    pub floor: f64,
    pub threshold: f64,
    /// Observation steps between rollout re-seeds.
    pub reseed_every: usize,
    /// Add a hypothesis that the pedestrian stops where last seen.
    pub stop_hypothesis: bool,
    pub mass: f64,
}

impl Default for GoalConfig {
    fn default() -> Self {
        GoalConfig {
            sigma: 0.3,
            floor: 1e-3,
            threshold: 0.8,
            reseed_every: 10,
            stop_hypothesis: false,
            mass: crate::predict::DEFAULT_MASS,
        }
    }
}

impl GoalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidParams("sigma must be > 0".into()));
        }
        if !(0.0..0.5).contains(&self.floor) {
            return Err(Error::InvalidParams("floor must lie in [0, 0.5)".into()));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::InvalidParams("threshold must lie in (0, 1]".into()));
        }
        if self.reseed_every == 0 {
            return Err(Error::InvalidParams("reseed_every must be >= 1".into()));
        }
        if !(self.mass > 0.0) {
            return Err(Error::InvalidParams("mass must be > 0".into()));
        }
        Ok(())
    }
}

/// Density of `observation - predicted` under `N(0, sigma^2 I)`.
pub fn likelihood(observation: Vec2, predicted: Vec2, sigma: f64) -> f64 {
    log_likelihood(observation, predicted, sigma).exp()
}

pub fn log_likelihood(observation: Vec2, predicted: Vec2, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    -(observation - predicted).norm_sq() / (2.0 * s2) - (2.0 * PI * s2).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefUpdate {
    pub beliefs: Vec<f64>,
    /// Every weighted likelihood vanished and the active beliefs were reset to uniform.
    pub reset: bool,
}

/// Bayes update in the log domain, then floor and renormalise. Entries with
/// zero prior (disqualified hypotheses) stay at zero.
pub fn posterior_log(beliefs: &[f64], log_likelihoods: &[f64], floor: f64) -> Result<BeliefUpdate> {
    if beliefs.len() != log_likelihoods.len() {
        return Err(Error::LengthMismatch {
            left: beliefs.len(),
            right: log_likelihoods.len(),
        });
    }
    let active: Vec<bool> = beliefs.iter().map(|b| *b > 0.0).collect();
    let n_active = active.iter().filter(|a| **a).count();
    if n_active == 0 {
        return Err(Error::Empty("no active hypotheses"));
    }
    let logw: Vec<f64> = beliefs
        .iter()
        .zip(log_likelihoods)
        .map(|(b, l)| if *b > 0.0 { b.ln() + l } else { f64::NEG_INFINITY })
        .collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut post, reset) = if max.is_finite() {
        let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = w.iter().sum();
        (w.iter().map(|x| x / sum).collect::<Vec<_>>(), false)
    } else {
        let u = 1.0 / n_active as f64;
        (active.iter().map(|a| if *a { u } else { 0.0 }).collect(), true)
    };
    for (p, a) in post.iter_mut().zip(&active) {
        if *a {
            *p = p.max(floor);
        }
    }
    let sum: f64 = post.iter().sum();
    for p in &mut post {
        *p /= sum;
    }
    Ok(BeliefUpdate { beliefs: post, reset })
}

/// [`posterior_log`] for likelihoods given as densities.
pub fn posterior(beliefs: &[f64], likelihoods: &[f64], floor: f64) -> Result<BeliefUpdate> {
    let logs: Vec<f64> = likelihoods.iter().map(|l| l.ln()).collect();
    posterior_log(beliefs, &logs, floor)
}

/// One recursion step for the observation at the current time against each
/// hypothesis' predicted position.
pub fn update_beliefs(
    beliefs: &[f64],
    observation: Vec2,
    predicted: &[Vec2],
    sigma: f64,
    floor: f64,
) -> Result<BeliefUpdate> {
    let logs: Vec<f64> = predicted
        .iter()
        .map(|p| log_likelihood(observation, *p, sigma))
        .collect();
    posterior_log(beliefs, &logs, floor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalHypothesis {
    pub name: String,
    /// `None` for the stop hypothesis.
    pub goal_point: Option<Vec2>,
    /// Most recent rollout.
    pub rollout: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalBelief {
    pub hypotheses: Vec<GoalHypothesis>,
    pub times: Vec<f64>,
    /// `probabilities[step][hypothesis]`.
    pub probabilities: Vec<Vec<f64>>,
    /// First hypothesis to exceed the threshold and when.
    pub decision: Option<(String, f64)>,
    pub disqualified: Vec<bool>,
    pub resets: usize,
}

impl GoalBelief {
    pub fn decision_name(&self) -> &str {
        self.decision.as_ref().map_or("undecided", |(n, _)| n.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.hypotheses.iter().position(|h| h.name == name)
    }

    /// Probability trace of one hypothesis.
    pub fn trace(&self, hypothesis: usize) -> Vec<f64> {
        self.probabilities.iter().map(|p| p[hypothesis]).collect()
    }

    /// `t,hyp_name,probability`, grouped by time.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,hyp_name,probability\n");
        for (t, probs) in self.times.iter().zip(&self.probabilities) {
            for (h, p) in self.hypotheses.iter().zip(probs) {
                let _ = writeln!(out, "{},{},{:e}", crate::io::sig9(*t), h.name, p);
            }
        }
        out
    }
}

/// Timestamped positions at a uniform step.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedStream {
    pub times: Vec<f64>,
    pub positions: Vec<Vec2>,
}

impl ObservedStream {
    pub fn new(times: Vec<f64>, positions: Vec<Vec2>) -> Result<Self> {
        if times.len() != positions.len() {
            return Err(Error::LengthMismatch {
                left: times.len(),
                right: positions.len(),
            });
        }
        if times.len() < 2 {
            return Err(Error::Empty("observation stream needs at least 2 samples"));
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6) {
            return Err(Error::InvalidParams("observations must be uniformly spaced in time".into()));
        }
        Ok(ObservedStream { times, positions })
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn window_ending_at(&self, idx: usize, n: usize) -> Result<TrajectoryWindow> {
        TrajectoryWindow::new(self.positions[idx + 1 - n..=idx].to_vec(), self.dt())
    }
}

fn rollout_hypothesis(
    weights: &WeightSet,
    hyp: &GoalHypothesis,
    window: &TrajectoryWindow,
    scenario: &Scenario,
    steps: usize,
    config: &GoalConfig,
) -> Result<Vec<Vec2>> {
    let Some(goal) = hyp.goal_point else {
        return Ok(vec![window.last(); steps]);
    };
    let cfg = RolloutConfig {
        horizon: steps as f64 * window.dt(),
        dt: window.dt(),
        mass: config.mass,
        goal: Some(GoalSpec::new(goal)),
    };
    let traj = rollout(weights, window, Some(&scenario.walls), &cfg, 0.0)?;
    Ok(traj.positions())
}

/// Classifies the destination of `observed` among the scenario's waypoint
/// areas other than the one it starts in.
pub fn classify(
    observed: &ObservedStream,
    scenario: &Scenario,
    weights: &WeightSet,
    config: &GoalConfig,
) -> Result<GoalBelief> {
    config.validate()?;
    if !matches!(weights, WeightSet::Net2(_)) {
        return Err(Error::InvalidParams("goal classification needs Net2 weights".into()));
    }
    let n = weights.window_len();
    if observed.len() < n {
        return Err(Error::InvalidParams(format!(
            "need at least {n} observations to seed rollouts, got {}",
            observed.len()
        )));
    }
    let start_area = scenario
        .area_of(observed.positions[0])
        .ok_or_else(|| Error::InvalidParams("scenario has no waypoint areas".into()))?;
    let mut hypotheses: Vec<GoalHypothesis> = scenario
        .waypoints
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != start_area)
        .map(|(_, w)| GoalHypothesis {
            name: w.name.clone(),
            goal_point: Some(w.center),
            rollout: Vec::new(),
        })
        .collect();
    if hypotheses.len() < 2 {
        return Err(Error::InvalidParams(
            "goal classification needs at least two candidate waypoints".into(),
        ));
    }
    if config.stop_hypothesis {
        hypotheses.push(GoalHypothesis {
            name: STOP_HYPOTHESIS.into(),
            goal_point: None,
            rollout: Vec::new(),
        });
    }

    let k = config.reseed_every;
    let h = hypotheses.len();
    let mut beliefs = vec![1.0 / h as f64; h];
    let mut disqualified = vec![false; h];
    let mut belief = GoalBelief {
        hypotheses: Vec::new(),
        times: vec![observed.times[n - 1]],
        probabilities: vec![beliefs.clone()],
        decision: None,
        disqualified: Vec::new(),
        resets: 0,
    };

    let mut seed_idx = n - 1;
    let reseed = |seed_idx: usize, hypotheses: &mut Vec<GoalHypothesis>, disqualified: &mut Vec<bool>| -> Result<()> {
        let window = observed.window_ending_at(seed_idx, n)?;
        let rollouts: Vec<Result<Vec<Vec2>>> = hypotheses
            .par_iter()
            .zip(disqualified.par_iter())
            .map(|(hyp, dq)| {
                if *dq {
                    Ok(Vec::new())
                } else {
                    rollout_hypothesis(weights, hyp, &window, scenario, k, config)
                }
            })
            .collect();
        for ((hyp, dq), r) in hypotheses.iter_mut().zip(disqualified.iter_mut()).zip(rollouts) {
            match r {
                Ok(points) => hyp.rollout = points,
                Err(e) => {
                    warn!("hypothesis `{}` disqualified: {e}", hyp.name);
                    *dq = true;
                    hyp.rollout.clear();
                }
            }
        }
        Ok(())
    };
    reseed(seed_idx, &mut hypotheses, &mut disqualified)?;

    for i in n..observed.len() {
        for (b, dq) in beliefs.iter_mut().zip(&disqualified) {
            if *dq {
                *b = 0.0;
            }
        }
        if disqualified.iter().all(|d| *d) {
            return Err(Error::InvalidParams("every goal hypothesis was disqualified".into()));
        }
        let offset = i - seed_idx;
        let predicted: Vec<Vec2> = hypotheses
            .iter()
            .map(|hyp| hyp.rollout.get(offset - 1).copied().unwrap_or(Vec2::ZERO))
            .collect();
        let upd = update_beliefs(&beliefs, observed.positions[i], &predicted, config.sigma, config.floor)?;
        if upd.reset {
            warn!("all hypothesis likelihoods vanished at t = {}", observed.times[i]);
            belief.resets += 1;
        }
        beliefs = upd.beliefs;
        belief.times.push(observed.times[i]);
        belief.probabilities.push(beliefs.clone());
        if belief.decision.is_none() {
            if let Some((j, p)) = beliefs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
            {
                if *p > config.threshold {
                    belief.decision = Some((hypotheses[j].name.clone(), observed.times[i]));
                }
            }
        }
        if offset == k && i + 1 < observed.len() {
            seed_idx = i;
            reseed(seed_idx, &mut hypotheses, &mut disqualified)?;
        }
    }
    belief.hypotheses = hypotheses;
    belief.disqualified = disqualified;
    Ok(belief)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn likelihood_values() {
        let l0 = likelihood(Vec2::ZERO, Vec2::ZERO, 0.3);
        assert!((l0 - 1.0 / (2.0 * PI * 0.09)).abs() < 1e-12);
        assert!((l0 - 1.7684).abs() < 1e-4);
        let l3 = likelihood(Vec2::new(0.9, 0.0), Vec2::ZERO, 0.3);
        assert!((l3 / l0 - (-4.5f64).exp()).abs() < 1e-12);
        let a = Vec2::new(0.2, -1.0);
        let b = Vec2::new(-0.4, 0.3);
        assert_eq!(likelihood(a, b, 0.5), likelihood(b, a, 0.5));
    }

    #[test]
    fn equal_likelihoods_keep_beliefs() {
        let b = [0.2, 0.3, 0.5];
        let u = posterior(&b, &[0.7; 3], 0.0).unwrap();
        for (x, y) in u.beliefs.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(!u.reset);
    }

    #[test]
    fn ratio_ten_for_three_steps() {
        let mut b = vec![0.5, 0.5];
        for _ in 0..3 {
            b = posterior(&b, &[10.0, 1.0], 0.0).unwrap().beliefs;
        }
        assert!((b[0] - 1000.0 / 1001.0).abs() < 1e-12);
    }

    #[test]
    fn floor_lower_bound() {
        let floor = 1e-3;
        let j = 4;
        let bound = floor / (1.0 + (j - 1) as f64 * floor);
        let mut b = vec![0.25; j];
        for step in 0..50 {
            let l: Vec<f64> = (0..j).map(|i| if i == step % 2 { 1e3 } else { 1e-30 }).collect();
            b = posterior(&b, &l, floor).unwrap().beliefs;
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(b.iter().all(|x| *x >= bound * (1.0 - 1e-12)));
        }
    }

    #[test]
    fn all_zero_likelihoods_reset() {
        let u = posterior(&[0.9, 0.1, 0.0], &[0.0, 0.0, 0.0], 1e-3).unwrap();
        assert!(u.reset);
        assert_eq!(u.beliefs, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn floor_recovers_within_eight_steps() {
        let floor = 1e-3;
        let mut b = vec![1.0, 1.0, 1.0];
        // Drive hypothesis 0 down to the floor.
        for _ in 0..20 {
            b = posterior(&b, &[1e-6, 1.0, 1.0], floor).unwrap().beliefs;
        }
        assert!(b[0] < 2e-3);
        let mut steps = 0;
        while b[0] <= 0.5 {
            b = posterior(&b, &[10.0, 1.0, 1.0], floor).unwrap().beliefs;
            steps += 1;
            assert!(steps <= 8);
        }
    }

    #[test]
    fn stream_requires_uniform_times() {
        let p = vec![Vec2::ZERO; 3];
        assert!(ObservedStream::new(vec![0.0, 0.1, 0.3], p.clone()).is_err());
        assert!(ObservedStream::new(vec![0.0, 0.1, 0.2], p).is_ok());
    }
}
