//! Scratch probe for hyperparameter sanity while developing; run with
//! `cargo run --release -p tatl-core --example probe -- <what>`.

use tatl_core::env::{InvertedPendulum, MountainCar, PendulumParams};
use tatl_core::fqi::{evaluate_greedy, fqi_train, Basis, LinearQ, RbfBasis};
use tatl_core::harness::{build_task, ExperimentConfig, ExperimentId, Scale};
use tatl_core::mdp::Environment;

fn ip_probe(episodes: usize, lr: f64, discount: f64, steps: usize, frac: f64) {
    let mut params = PendulumParams::default();
    params.discount = discount;
    params.horizon = steps;
    let mut env = InvertedPendulum::new(params);
    let rbf = RbfBasis::lattice(
        &env.spec().state_lo.clone(),
        &env.spec().state_hi.clone(),
        20,
        vec![1.2, 1.2],
        false,
    )
    .unwrap();
    let q0 = LinearQ::zeros(Basis::Rbf(rbf), 3, lr);
    let cfg = tatl_core::fqi::FqiConfig {
        episodes,
        steps_per_episode: steps,
        learning_rate: lr,
        discount,
        epsilon: tatl_core::fqi::EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            anneal_fraction: frac,
        },
        divergence_threshold: 1e6,
        sample_budget: None,
    };
    for seed in 0..3u64 {
        let t0 = std::time::Instant::now();
        match fqi_train(&mut env, &cfg, q0.clone(), seed) {
            Ok((q, curve)) => {
                let (avg, trajs) = evaluate_greedy(&mut env, &q, 10, cfg.steps_per_episode, 999).unwrap();
                // upright fraction in the last 50 steps of each eval episode
                let mut upright = 0usize;
                let mut counted = 0usize;
                for t in &trajs {
                    for tr in t.transitions.iter().rev().take(50) {
                        counted += 1;
                        if tr.next_state[0].abs() < 0.3 {
                            upright += 1;
                        }
                    }
                }
                println!(
                    "ip seed {seed}: eval avg {avg:.1}, upright tail {:.0}%, train final {:.1}, {:?}",
                    100.0 * upright as f64 / counted as f64,
                    curve.final_windowed(50),
                    t0.elapsed()
                );
            }
            Err(e) => println!("ip seed {seed}: TRAIN FAILED: {e}"),
        }
    }
}

fn mc_probe(episodes: usize, lr: f64, discount: f64, sigma: Vec<f64>) {
    let mut env = MountainCar::new(250, discount);
    let rbf = RbfBasis::lattice(
        &env.spec().state_lo.clone(),
        &env.spec().state_hi.clone(),
        20,
        sigma,
        false,
    )
    .unwrap();
    let q0 = LinearQ::zeros(Basis::Rbf(rbf), 3, lr);
    let cfg = tatl_core::fqi::FqiConfig {
        episodes,
        steps_per_episode: 250,
        learning_rate: lr,
        discount,
        epsilon: tatl_core::fqi::EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            anneal_fraction: 0.5,
        },
        divergence_threshold: 1e6,
        sample_budget: None,
    };
    for seed in 0..3u64 {
        match fqi_train(&mut env, &cfg, q0.clone(), seed) {
            Ok((q, curve)) => {
                let (avg, trajs) = evaluate_greedy(&mut env, &q, 10, 250, 999).unwrap();
                let reached = trajs
                    .iter()
                    .filter(|t| t.transitions.last().map(|x| x.terminal).unwrap_or(false))
                    .count();
                let mean_len: f64 =
                    trajs.iter().map(|t| t.len() as f64).sum::<f64>() / trajs.len() as f64;
                println!(
                    "mc seed {seed}: eval avg {avg:.3}, reached {reached}/10, mean len {mean_len:.0}, train final {:.3}",
                    curve.final_windowed(50)
                );
            }
            Err(e) => println!("mc seed {seed}: TRAIN FAILED: {e}"),
        }
    }
}

fn grid_probe(episodes: usize, eps_end: f64, frac: f64) {
    let cfg = ExperimentConfig::preset(ExperimentId::Grid, Scale::Desk);
    let setup = build_task(&cfg).unwrap();
    let mut env = setup.source_env.clone();
    let q0 = LinearQ::zeros(setup.source_basis.clone(), 4, 1.0);
    let mut fcfg = cfg.fqi_source.config();
    fcfg.episodes = episodes;
    fcfg.epsilon = tatl_core::fqi::EpsilonSchedule {
        start: 1.0,
        end: eps_end,
        anneal_fraction: frac,
    };
    let t0 = std::time::Instant::now();
    let (q, curve) = fqi_train(env.as_mut(), &fcfg, q0, 0).unwrap();
    let (avg, trajs) = evaluate_greedy(env.as_mut(), &q, 100, 120, 7).unwrap();
    let reached = trajs
        .iter()
        .filter(|t| t.transitions.last().map(|x| x.terminal).unwrap_or(false))
        .count();
    println!(
        "grid eps_end={eps_end} frac={frac} eps={episodes}: eval avg {avg:.2}, reached {reached}/100, samples {}, train final {:.2}, {:?}",
        curve.total_samples(),
        curve.final_windowed(50),
        t0.elapsed()
    );
}

fn main() {
    let what = std::env::args().nth(1).unwrap_or_else(|| "ip".into());
    match what.as_str() {
        "ip" => ip_probe(600, 5e-3, 0.98, 300, 0.5),
        "ip-long" => ip_probe(2000, 5e-3, 0.98, 300, 0.5),
        "ip-g99" => ip_probe(4000, 5e-3, 0.99, 300, 0.8),
        "ip-g99-500" => ip_probe(4000, 5e-3, 0.99, 500, 0.8),
        "mc" => mc_probe(800, 0.05, 0.99, vec![0.3, 0.1]),
        "mc-tight" => mc_probe(800, 0.05, 0.99, vec![0.09, 0.0004]),
        "grid" => {
            grid_probe(1500, 0.3, 0.5);
            grid_probe(3000, 0.3, 0.5);
            grid_probe(3000, 0.05, 0.8);
            grid_probe(6000, 0.05, 0.5);
        }
        other => eprintln!("unknown probe '{other}'"),
    }
}
