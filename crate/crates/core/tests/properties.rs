use std::f64::consts::PI;

use proptest::prelude::*;
use sfmnet_core::dataset::{sim_rng, SampleRecord};
use sfmnet_core::eval::{cv_baseline, fde, mde};
use sfmnet_core::goal::{posterior_log, update_beliefs};
use sfmnet_core::net::{
    AuxInput, Net1Weights, Net2Weights, NetInput, NetType, ParamSet, TrajectoryWindow, WeightSet, WINDOW_LEN,
};
use sfmnet_core::sfm::{attractive_force, integrate, single_wall_force, GoalSpec, PedState, SfmParams};
use sfmnet_core::train::{batch_gradient, mse_loss};
use sfmnet_core::{Vec2, WallSegment};

fn vec2(range: f64) -> impl Strategy<Value = Vec2> {
    (-range..range, -range..range).prop_map(|(x, y)| Vec2::new(x, y))
}

/// A smoothly turning walk of `WINDOW_LEN` samples at 10 Hz.
fn window() -> impl Strategy<Value = TrajectoryWindow> {
    (vec2(5.0), 0.2..2.5f64, 0.0..2.0 * PI, prop::collection::vec(-0.3..0.3f64, WINDOW_LEN)).prop_map(
        |(start, speed, heading, turns)| {
            let mut p = start;
            let mut v = Vec2::from_polar(speed, heading);
            let pts = turns
                .iter()
                .map(|turn| {
                    let here = p;
                    v = v.rotate(*turn);
                    p += v * 0.1;
                    here
                })
                .collect();
            TrajectoryWindow::new(pts, 0.1).unwrap()
        },
    )
}

fn unit() -> impl Strategy<Value = Vec2> {
    (0.0..2.0 * PI).prop_map(|a| Vec2::from_polar(1.0, a))
}

fn aux() -> impl Strategy<Value = AuxInput> {
    (unit(), 0.05..2.0f64, unit()).prop_map(|(e_d, d_w, n_w)| AuxInput { e_d, d_w, n_w })
}

fn net(kind: NetType, seed: u64) -> WeightSet {
    WeightSet::init(kind, WINDOW_LEN, &mut sim_rng(seed, 0))
}

fn close(a: Vec2, b: Vec2, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + a.norm().max(b.norm()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn networks_ignore_absolute_position(w in window(), a in aux(), offset in vec2(100.0), seed in 0u64..50) {
        let n1 = net(NetType::Net1, seed);
        let moved = w.translated(offset);
        prop_assert!(close(
            n1.forward(&NetInput::net1(w.clone())).unwrap(),
            n1.forward(&NetInput::net1(moved.clone())).unwrap(),
            1e-9
        ));
        let n2 = net(NetType::Net2, seed);
        prop_assert!(close(
            n2.forward(&NetInput::net2(w, a)).unwrap(),
            n2.forward(&NetInput::net2(moved, a)).unwrap(),
            1e-9
        ));
    }

    #[test]
    fn speed_term_rotates_with_the_window(w in window(), angle in 0.0..2.0 * PI, seed in 0u64..50) {
        let mut n1 = Net1Weights::init(WINDOW_LEN, &mut sim_rng(seed, 0));
        n1.w_vel_s.fill(0.0);
        let f = n1.forward(&w).unwrap();
        let g = n1.forward(&w.rotated(angle)).unwrap();
        prop_assert!(close(g, f.rotate(angle), 1e-9), "{:?} vs {:?}", g, f.rotate(angle));
    }

    #[test]
    fn wall_push_weakens_with_distance(d1 in 0.01..3.0f64, gap in 0.001..1.0f64, angle in 0.0..2.0 * PI) {
        let wall = WallSegment::new(Vec2::new(-50.0, 0.0), Vec2::new(50.0, 0.0)).unwrap().rotated(angle);
        let normal = Vec2::new(0.0, 1.0).rotate(angle);
        let params = SfmParams::default();
        let force = |d: f64| {
            let s = PedState::new(normal * d, Vec2::ZERO, 0.0);
            single_wall_force(&s, &params, &wall, false).unwrap()
        };
        let (near, far) = (force(d1), force(d1 + gap));
        prop_assert!(near.norm() > far.norm());
        prop_assert!(near.dot(normal) > 0.0);
    }

    #[test]
    fn attractive_force_vanishes_at_desired_velocity(p in vec2(10.0), goal in vec2(10.0), vd in 0.1..3.0f64) {
        prop_assume!(p.distance(goal) > 1e-3);
        let params = SfmParams { desired_speed: vd, ..SfmParams::default() };
        let g = GoalSpec::new(goal);
        let v = g.direction_from(p).unwrap() * vd;
        let f = attractive_force(&PedState::new(p, v, 0.0), &params, &g).unwrap();
        prop_assert!(f.norm() < 1e-9 * params.mass);
    }

    #[test]
    fn integration_is_semi_implicit(p in vec2(10.0), v in vec2(3.0), f in vec2(500.0), m in 40.0..100.0f64) {
        let dt = 0.1;
        let next = integrate(&PedState::new(p, v, 1.0), f, m, dt);
        let v_next = v + f * (dt / m);
        prop_assert!(close(next.velocity, v_next, 1e-12));
        prop_assert!(close(next.position, p + v_next * dt, 1e-12));
        prop_assert!((next.time - 1.1).abs() < 1e-12);
    }

    #[test]
    fn analytic_gradient_matches_differences(w in window(), a in aux(), label in vec2(300.0), seed in 0u64..1000) {
        for kind in [NetType::Net1, NetType::Net2] {
            let weights = net(kind, seed);
            let input = match kind {
                NetType::Net1 => NetInput::net1(w.clone()),
                NetType::Net2 => NetInput::net2(w.clone(), a),
            };
            let loss = |p: &WeightSet| 0.5 * (p.forward(&input).unwrap() - label).norm_sq();
            let (_, grad) = weights.backward(&input, label).unwrap();
            let flat: Vec<f64> = grad.tensors().iter().flat_map(|(_, t)| t.to_vec()).collect();
            let scale = flat.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            let mut k = 0;
            for (ti, (_, t)) in weights.tensors().iter().enumerate() {
                for j in 0..t.len() {
                    let h = 1e-6 * t[j].abs().max(1.0);
                    let mut plus = weights.clone();
                    plus.tensors_mut()[ti].1[j] += h;
                    let mut minus = weights.clone();
                    minus.tensors_mut()[ti].1[j] -= h;
                    let (lp, lm) = (loss(&plus), loss(&minus));
                    let numeric = (lp - lm) / (2.0 * h);
                    // Cancellation in `lp - lm` bounds what the difference can resolve.
                    let noise = 64.0 * f64::EPSILON * lp.abs().max(lm.abs()) / h;
                    let denom = flat[k].abs().max(numeric.abs()).max(1e-6 * scale).max(1e-12);
                    prop_assert!(
                        (flat[k] - numeric).abs() <= 1e-4 * denom + noise,
                        "{kind:?} param {k}: {} vs {}", flat[k], numeric
                    );
                    k += 1;
                }
            }
        }
    }

    #[test]
    fn batch_gradient_is_the_sample_mean(ws in prop::collection::vec((window(), vec2(200.0)), 1..12), seed in 0u64..100) {
        let weights = net(NetType::Net1, seed);
        let records: Vec<SampleRecord> = ws
            .into_iter()
            .enumerate()
            .map(|(i, (w, label))| SampleRecord { traj_id: i, t: 0.0, input: NetInput::net1(w), label })
            .collect();
        let refs: Vec<&SampleRecord> = records.iter().collect();
        let (grad, batch_mse) = batch_gradient(&weights, &refs).unwrap();

        let mut mean = weights.zeros_like();
        let mut preds = Vec::new();
        for r in &records {
            let (f, g) = weights.backward(&r.input, r.label).unwrap();
            mean.add_scaled(&g, 1.0 / records.len() as f64);
            preds.push(f);
        }
        for ((_, a), (_, b)) in grad.tensors().iter().zip(mean.tensors()) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
            }
        }
        // Mean over every scalar component equals the batch loss.
        let labels: Vec<Vec2> = records.iter().map(|r| r.label).collect();
        let mse = mse_loss(&preds, &labels).unwrap();
        let by_component: f64 = preds
            .iter()
            .zip(&labels)
            .flat_map(|(p, l)| [(p.x - l.x).powi(2), (p.y - l.y).powi(2)])
            .sum::<f64>() / (2 * labels.len()) as f64;
        prop_assert!((mse - batch_mse).abs() <= 1e-9 * (1.0 + mse));
        prop_assert!((mse - by_component).abs() <= 1e-9 * (1.0 + mse));
    }

    #[test]
    fn displacement_errors_are_metrics(a in prop::collection::vec(vec2(20.0), 1..40), shift in vec2(5.0)) {
        let b: Vec<Vec2> = a.iter().map(|p| *p + shift).collect();
        prop_assert_eq!(mde(&a, &a).unwrap(), 0.0);
        prop_assert!((mde(&a, &b).unwrap() - shift.norm()).abs() < 1e-9);
        prop_assert!((mde(&a, &b).unwrap() - mde(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((fde(&a, &b).unwrap() - shift.norm()).abs() < 1e-9);
        let c: Vec<Vec2> = a.iter().rev().copied().collect();
        let worst = a.iter().zip(&c).map(|(x, y)| x.distance(*y)).fold(0.0, f64::max);
        prop_assert!(mde(&a, &c).unwrap() <= worst + 1e-12);
    }

    #[test]
    fn constant_velocity_is_exact_on_lines(p0 in vec2(10.0), v in vec2(2.0), n in 2usize..12, horizon in 1usize..60) {
        let dt = 0.1;
        let window: Vec<Vec2> = (0..n).map(|k| p0 + v * (k as f64 * dt)).collect();
        let pred = cv_baseline(&window, horizon as f64 * dt, dt).unwrap();
        prop_assert_eq!(pred.len(), horizon);
        for (k, p) in pred.iter().enumerate() {
            let expected = p0 + v * ((n + k) as f64 * dt);
            prop_assert!(p.distance(expected) < 1e-9);
        }
    }

    #[test]
    fn posterior_is_normalised_and_floored(
        raw in prop::collection::vec(0.01..1.0f64, 2..6),
        logs in prop::collection::vec(-800.0..0.0f64, 6),
        floor in 0.0..0.05f64,
    ) {
        let sum: f64 = raw.iter().sum();
        let prior: Vec<f64> = raw.iter().map(|b| b / sum).collect();
        let logs = &logs[..prior.len()];
        let post = posterior_log(&prior, logs, floor).unwrap().beliefs;
        prop_assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let bound = floor / (1.0 + prior.len() as f64 * floor);
        prop_assert!(post.iter().all(|p| *p >= bound - 1e-15));
    }

    #[test]
    fn posterior_commutes_with_relabelling(
        prior in prop::collection::vec(0.05..1.0f64, 3),
        preds in prop::collection::vec(vec2(3.0), 3),
        obs in vec2(3.0),
        rot in 0usize..3,
    ) {
        let direct = update_beliefs(&prior, obs, &preds, 0.3, 1e-3).unwrap().beliefs;
        let perm = |v: &[f64]| -> Vec<f64> { (0..3).map(|i| v[(i + rot) % 3]).collect() };
        let permuted_preds: Vec<Vec2> = (0..3).map(|i| preds[(i + rot) % 3]).collect();
        let shuffled = update_beliefs(&perm(&prior), obs, &permuted_preds, 0.3, 1e-3).unwrap().beliefs;
        for (a, b) in perm(&direct).iter().zip(&shuffled) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn parameter_counts() {
    assert_eq!(Net1Weights::zeros(WINDOW_LEN).param_count(), 142);
    assert_eq!(Net2Weights::zeros(WINDOW_LEN).param_count(), 146);
}
