mod common;

use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;

use asysg_core::parallel::{run_lockfree_shared, run_param_server, run_threaded, SharedParams};
use asysg_core::problems::{NoisyQuadratic, NoisyQuadraticSpec};
use asysg_core::sim::{run_sim, simulate, IterateLog, ScriptedChoices};
use asysg_core::{DelayModel, GammaRule, Mode, Problem, ReadModel, RunConfig};
use common::median;

fn quadratic(n: usize, seed: u64) -> NoisyQuadratic {
    NoisyQuadratic::new(
        NoisyQuadraticSpec::random(n, 0.2, 1.0, 0.5, 16, 3.0, seed),
        seed,
    )
    .unwrap()
}

fn threads(mode: Mode, k: usize, m: usize, gamma: f64, workers: usize, seed: u64) -> RunConfig {
    RunConfig::serial(k, m, gamma, seed)
        .with_mode(mode)
        .with_workers(workers)
        .with_delay_bound(64)
        .with_checkpoint_every(k.div_ceil(10).max(1))
}

#[test]
fn hammered_coordinate_loses_no_increments() {
    let shared = SharedParams::new(&[0.0, 0.0]);
    let per_thread = 300_000;
    thread::scope(|s| {
        for _ in 0..4 {
            s.spawn(|| {
                for _ in 0..per_thread {
                    shared.add(1, 1.0);
                }
            });
        }
    });
    assert_eq!(shared.load(1), (4 * per_thread) as f64);
    assert_eq!(shared.load(0), 0.0);
}

#[test]
fn torn_reads_mix_whole_values() {
    // Each writer adds one and takes it back, so every coordinate always
    // holds an integer in 0..=writers, however a read interleaves.
    let n = 64;
    let writers = 3;
    let shared = SharedParams::new(&vec![0.0; n]);
    let stop = AtomicBool::new(false);
    thread::scope(|s| {
        for w in 0..writers {
            let (shared, stop) = (&shared, &stop);
            s.spawn(move || {
                let mut i = w;
                while !stop.load(Ordering::Relaxed) {
                    shared.add(i % n, 1.0);
                    shared.add(i % n, -1.0);
                    i += 7;
                }
            });
        }
        let mut buf = vec![0.0; n];
        for _ in 0..2_000 {
            shared.read_into(&mut buf);
            for &v in &buf {
                assert!(
                    v.fract() == 0.0 && (0.0..=writers as f64).contains(&v),
                    "read {v}"
                );
            }
        }
        stop.store(true, Ordering::Relaxed);
    });
    assert!(shared.to_vec().iter().all(|&v| v == 0.0));
}

#[test]
fn lockfree_applies_exactly_k_writes() {
    let p = quadratic(20, 1);
    let run = run_lockfree_shared(&p, &threads(Mode::InconThreads, 10_000, 2, 0.01, 4, 5)).unwrap();
    assert_eq!(run.writes_per_worker.iter().sum::<u64>(), 10_000);
    assert_eq!(run.delays.total(), 10_000);
    assert_eq!(run.trace.rows.last().unwrap().k, 10_000);
    assert!(run.trace.is_well_ordered());
    assert!(run.final_x.is_finite());
}

#[test]
fn single_worker_lockfree_replays_through_the_simulator() {
    let p = quadratic(8, 2);
    let mut cfg = threads(Mode::InconThreads, 2_000, 3, 0.02, 1, 9);
    cfg.record_log = true;
    let run = run_lockfree_shared(&p, &cfg).unwrap();
    let log = run.log.clone().unwrap();
    assert_eq!(run.delays.max_observed, 0);

    let mut script = ScriptedChoices {
        minibatch: 3,
        samples: log.iter().flat_map(|w| w.samples.clone()).collect(),
        coordinates: log.iter().map(|w| w.coordinate).collect(),
        ..ScriptedChoices::default()
    };
    let sim_cfg = cfg
        .clone()
        .with_mode(Mode::InconSim)
        .with_delay_bound(0)
        .with_read_model(ReadModel::Prefix { tau: 0 });
    let mut iterates = IterateLog::default();
    let out = simulate(&p, &sim_cfg, &mut script, &mut iterates).unwrap();
    assert_eq!(out.final_x, run.final_x);
    for w in &log {
        let k = w.k as usize;
        let i = w.coordinate;
        assert_eq!(
            iterates.iterates[k][i] - w.decrement,
            iterates.iterates[k + 1][i]
        );
    }
}

#[test]
fn single_worker_param_server_lags_at_most_one() {
    let p = quadratic(6, 3);
    let run = run_param_server(&p, &threads(Mode::ConThreads, 500, 4, 0.02, 1, 1)).unwrap();
    assert!(run.delays.histogram.keys().all(|&d| d <= 1));
    assert_eq!(run.contributions_applied, 500 * 4);
    assert_eq!(run.delays.total(), 500 * 4);
}

#[test]
fn single_worker_param_server_tracks_uniform_delay_sim() {
    let p = quadratic(6, 3);
    let mut threaded = Vec::new();
    let mut simulated = Vec::new();
    for seed in 0..10 {
        let cfg = threads(Mode::ConThreads, 400, 2, 0.05, 1, seed);
        threaded.push(run_param_server(&p, &cfg).unwrap().trace.last().unwrap().f);
        let sim = cfg
            .clone()
            .with_workers(1)
            .with_mode(Mode::ConSim)
            .with_delay_bound(1)
            .with_delay_model(DelayModel::Uniform);
        simulated.push(run_sim(&p, &sim).unwrap().trace.last().unwrap().f);
    }
    let a = median(&mut threaded);
    let b = median(&mut simulated);
    assert!(a <= 3.0 * b && b <= 3.0 * a, "threaded {a}, simulated {b}");
}

#[test]
fn zero_step_freezes_both_engines() {
    let p = quadratic(5, 4);
    let x1 = p.initial_point();
    for mode in [Mode::ConThreads, Mode::InconThreads] {
        let run = run_threaded(&p, &threads(mode, 300, 2, 0.0, 3, 2)).unwrap();
        assert_eq!(run.final_x, x1);
        let f0 = run.trace.rows[0].f;
        assert!(run.trace.rows.iter().all(|r| r.f == f0));
    }
}

#[test]
fn param_server_conserves_contributions() {
    let p = quadratic(10, 5);
    let run = run_param_server(&p, &threads(Mode::ConThreads, 2_000, 3, 0.01, 4, 3)).unwrap();
    assert_eq!(run.contributions_applied, 6_000);
    assert_eq!(run.delays.total(), 6_000);
    assert_eq!(run.writes_per_worker.iter().sum::<u64>(), 6_000);
    let ks: Vec<u64> = run.trace.rows.iter().map(|r| r.k).collect();
    let want: Vec<u64> = (0..=2_000).step_by(200).collect();
    assert_eq!(ks, want);
}

#[test]
fn four_worker_param_server_respects_its_bound() {
    let p = quadratic(10, 6);
    let base = RunConfig::serial(1, 1, 0.0, 0)
        .with_mode(Mode::ConThreads)
        .with_workers(4)
        .with_delay_bound(4);
    let c = p.constants();
    let k = asysg_core::theory::k_threshold_corollary2(
        c.gap,
        1,
        c.lipschitz.unwrap(),
        c.sigma_sq.unwrap(),
        base.delay_bound,
    )
    .unwrap() as usize;
    let cfg = RunConfig {
        iterations: k,
        gamma: GammaRule::Corollary2,
        checkpoint_every: 1,
        ..base
    };
    let bound = 4.0 * (c.gap * c.lipschitz.unwrap() / k as f64).sqrt() * c.sigma_sq.unwrap().sqrt();
    let mut mins = Vec::new();
    for seed in 0..10 {
        let run = run_param_server(&p, &cfg.clone().with_seed(seed)).unwrap();
        mins.push(run.trace.gradsq().into_iter().fold(f64::INFINITY, f64::min));
    }
    let mean = mins.iter().sum::<f64>() / mins.len() as f64;
    assert!(
        mean <= 1.25 * bound,
        "mean min gradsq {mean} vs bound {bound}"
    );
}

#[test]
fn wrong_mode_is_rejected() {
    let p = quadratic(3, 1);
    assert!(run_param_server(&p, &threads(Mode::InconThreads, 10, 1, 0.1, 1, 1)).is_err());
    assert!(run_lockfree_shared(&p, &threads(Mode::ConSim, 10, 1, 0.1, 1, 1)).is_err());
}
