use sfmnet_core::config::RunConfig;
use sfmnet_core::dataset::{gen_corridor_dataset, gen_open_dataset, simulate_corridor, DatasetSplit, GenConfig};
use sfmnet_core::eval::{load_tracks, run_benchmark, ColumnMap, EvalProtocol, Model};
use sfmnet_core::goal::{classify, GoalConfig, ObservedStream};
use sfmnet_core::net::{NetType, TrajectoryWindow, WeightSet};
use sfmnet_core::predict::{rollout, RolloutConfig};
use sfmnet_core::scenario::Scenario;
use sfmnet_core::sfm::Trajectory;
use sfmnet_core::train::{train, TrainConfig};

fn small(count: usize) -> GenConfig {
    GenConfig {
        count,
        seed: 5,
        ..GenConfig::default()
    }
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        ..TrainConfig::default()
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let scenario = Scenario::corridor();
    let run = |threads| {
        in_pool(threads, || {
            let open = gen_open_dataset(&small(12)).unwrap();
            let corridor = gen_corridor_dataset(&small(12), &scenario).unwrap();
            let (w1, r1) = train(NetType::Net1, &open, &quick(3)).unwrap();
            let (w2, r2) = train(NetType::Net2, &corridor, &quick(3)).unwrap();
            (open.to_csv(), corridor.to_csv(), w1.to_json(), w2.to_json(), r1.to_csv(), r2.to_csv())
        })
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn dataset_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let ds = gen_corridor_dataset(&small(10), &Scenario::corridor()).unwrap();
    assert!(ds.is_leak_free());
    let path = dir.path().join("dataset.csv");
    std::fs::write(&path, ds.to_csv()).unwrap();
    let back = DatasetSplit::read_csv(&path, ds.dt).unwrap();
    assert_eq!(back.train, ds.train);
    assert_eq!(back.val, ds.val);
    assert_eq!(back.net_type(), Some(NetType::Net2));
}

#[test]
fn weights_and_trajectories_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = gen_open_dataset(&small(10)).unwrap();
    let (w, _) = train(NetType::Net1, &ds, &quick(2)).unwrap();
    let wpath = dir.path().join("weights.json");
    std::fs::write(&wpath, w.to_json()).unwrap();
    let back = WeightSet::read(&wpath).unwrap();
    assert_eq!(back, w);
    assert_eq!(back.digest(), w.digest());

    let run = simulate_corridor(2, &small(1), &Scenario::corridor()).unwrap();
    let tpath = dir.path().join("trajectory.csv");
    std::fs::write(&tpath, run.trajectory.to_csv()).unwrap();
    let traj = Trajectory::read_csv(&tpath).unwrap();
    assert_eq!(traj.len(), run.trajectory.len());
    for (a, b) in traj.positions().iter().zip(run.trajectory.positions()) {
        assert!(a.distance(b) < 1e-6);
    }
}

#[test]
fn scenario_and_config_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cross.txt");
    std::fs::write(&path, Scenario::corridor().to_text()).unwrap();
    assert_eq!(Scenario::read(&path).unwrap(), Scenario::corridor());

    let mut cfg = RunConfig::default();
    cfg.set("train.epochs", "7").unwrap();
    cfg.set("goal.stop_hypothesis", "true").unwrap();
    let cpath = dir.path().join("run.cfg");
    std::fs::write(&cpath, cfg.to_text()).unwrap();
    assert_eq!(RunConfig::read(&cpath).unwrap(), cfg);
}

#[test]
fn trained_net2_drives_rollout_and_classification() {
    let scenario = Scenario::corridor();
    let cfg = small(20);
    let ds = gen_corridor_dataset(&cfg, &scenario).unwrap();
    let (w, report) = train(NetType::Net2, &ds, &quick(5)).unwrap();
    assert!(report.final_train_mse() < report.initial_train_mse);

    let run = simulate_corridor(ds.val_ids()[0], &cfg, &scenario).unwrap();
    let pos = run.trajectory.positions();
    let seed = TrajectoryWindow::new(pos[..10].to_vec(), 0.1).unwrap();
    let rc = RolloutConfig {
        horizon: 2.0,
        goal: Some(run.goal),
        ..RolloutConfig::default()
    };
    let pred = rollout(&w, &seed, Some(&scenario.walls), &rc, 0.9).unwrap();
    assert_eq!(pred.len(), 20);
    assert!(pred.points.iter().all(|p| p.state.is_finite()));

    let obs = ObservedStream::new(
        run.trajectory.points.iter().map(|p| p.state.time).collect(),
        pos,
    )
    .unwrap();
    let gc = GoalConfig {
        stop_hypothesis: true,
        ..GoalConfig::default()
    };
    let belief = classify(&obs, &scenario, &w, &gc).unwrap();
    assert_eq!(belief.hypotheses.len(), 4);
    for row in &belief.probabilities {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn benchmark_reads_track_files() {
    let dir = tempfile::tempdir().unwrap();
    // Two pedestrians walking straight lines, frames every 0.4 s.
    let mut text = String::from("# frame ped x y\n");
    for k in 0..20 {
        let frame = 10 * k;
        let t = 0.4 * k as f64;
        text += &format!("{frame} 1 {} 0.0\n", 1.2 * t);
        text += &format!("{frame} 2 3.0 {}\n", -0.8 * t);
    }
    let path = dir.path().join("lines.txt");
    std::fs::write(&path, text).unwrap();
    let tracks = load_tracks(&path, ColumnMap::default(), 0.04).unwrap();
    assert_eq!(tracks.len(), 2);

    let ds = gen_open_dataset(&small(10)).unwrap();
    let (w, _) = train(NetType::Net1, &ds, &quick(2)).unwrap();
    let table = run_benchmark(&w, &[("lines".into(), tracks)], &EvalProtocol::default()).unwrap();
    let cv = table.row("lines", Model::Cv).unwrap();
    // 77 resampled points give segments starting at 0 and 1 s per track.
    assert_eq!(cv.n_segments, 4);
    assert!(cv.mde < 1e-9);
    assert!(table.to_csv().starts_with("dataset,model,mde,fde,n_segments\n"));
}
