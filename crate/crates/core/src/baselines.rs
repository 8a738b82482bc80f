//! Comparison methods: UMA-TL (the mapped source policy initializes target
//! FQI) and plain no-transfer FQI on the target.

use nalgebra::DMatrix;

use crate::alignment::InterTaskMap;
use crate::error::{Error, Result};
use crate::fqi::{fqi_train, Basis, EpsilonGreedyPolicy, FqiConfig, LearningCurve, LinearQ};
use crate::mdp::{Environment, StateVector};
use crate::rng;
use crate::transfer::chart_to_target;

/// How many source states the initialization regression samples by default.
pub const DEFAULT_INIT_SAMPLES: usize = 2000;

/// Fit target-basis weights so that Q_T(chi_s(s), a) matches Q_S(s, a) over
/// states drawn from source rollouts. Consumes zero target-environment
/// samples: only the source simulator and the map are touched.
pub fn initialize_target_q(
    source_q: &LinearQ,
    source_env: &mut dyn Environment,
    map: &InterTaskMap,
    target_env: &dyn Environment,
    target_basis: Basis,
    samples: usize,
    seed: u64,
) -> Result<LinearQ> {
    if source_env.spec().action_set.cardinality() != target_env.spec().action_set.cardinality() {
        return Err(Error::ActionMismatch(
            "baseline transfer requires equal action cardinality".into(),
        ));
    }
    let horizon = source_env.spec().horizon;
    let mut states: Vec<StateVector> = Vec::with_capacity(samples);
    let mut ep = 0u64;
    while states.len() < samples {
        let policy = EpsilonGreedyPolicy {
            q: source_q,
            eps: 0.3,
        };
        let traj = crate::mdp::rollout(source_env, &policy, horizon, rng::mix(seed, 0xB0 ^ ep))?;
        for t in traj.transitions {
            states.push(t.state);
            if states.len() == samples {
                break;
            }
        }
        ep += 1;
        if ep > 100_000 {
            return Err(Error::Numerical(
                "source rollouts produced no states for initialization".into(),
            ));
        }
    }

    let n_actions = source_q.n_actions();
    let feat_dim = target_basis.output_dim();
    let n = states.len();
    let mut x = DMatrix::zeros(n, feat_dim);
    let mut y = DMatrix::zeros(n, n_actions);
    let mut feats = vec![0.0; feat_dim];
    for (i, s) in states.iter().enumerate() {
        let mapped = chart_to_target(source_env, target_env, map, s);
        target_basis.eval_into(&mapped, &mut feats);
        for (j, &f) in feats.iter().enumerate() {
            x[(i, j)] = f;
        }
        let q_vals = source_q.q_values(s);
        for (a, &v) in q_vals.iter().enumerate() {
            y[(i, a)] = v;
        }
    }
    let svd = x.svd(true, true);
    let theta = svd
        .solve(&y, 1e-10)
        .map_err(|e| Error::Numerical(format!("initialization regression failed: {e}")))?;
    let mut q0 = LinearQ::zeros(target_basis, n_actions, source_q.learning_rate);
    for a in 0..n_actions {
        for f in 0..feat_dim {
            q0.weights[a][f] = theta[(f, a)];
        }
    }
    Ok(q0)
}

/// UMA-TL: regress the mapped source values into the target basis, then run
/// FQI in the target starting from that initialization.
#[allow(clippy::too_many_arguments)]
pub fn run_uma_tl(
    source_q: &LinearQ,
    source_env: &mut dyn Environment,
    map: &InterTaskMap,
    target_env: &mut dyn Environment,
    target_basis: Basis,
    cfg: &FqiConfig,
    init_samples: usize,
    seed: u64,
) -> Result<(LinearQ, LearningCurve)> {
    let before = target_env.steps_taken();
    let q0 = initialize_target_q(
        source_q,
        source_env,
        map,
        target_env,
        target_basis,
        init_samples,
        seed,
    )?;
    debug_assert_eq!(
        before,
        target_env.steps_taken(),
        "initialization must consume no target samples"
    );
    fqi_train(target_env, cfg, q0, seed)
}

/// No-transfer baseline: FQI from zero weights in the target.
pub fn run_rl_no_transfer(
    target_env: &mut dyn Environment,
    basis: Basis,
    cfg: &FqiConfig,
    seed: u64,
) -> Result<(LinearQ, LearningCurve)> {
    let n_actions = target_env.spec().action_set.cardinality();
    let q0 = LinearQ::zeros(basis, n_actions, cfg.learning_rate);
    fqi_train(target_env, cfg, q0, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::GridWorld;
    use crate::fqi::EpsilonSchedule;

    #[test]
    fn identity_initialization_reproduces_tabular_q() {
        let (mut source, target) = GridWorld::default_pair(120, 0.95);
        let dims = vec![20usize, 20];
        let mut q = LinearQ::zeros(Basis::Tabular { dims: dims.clone() }, 4, 1.0);
        for (a, row) in q.weights.iter_mut().enumerate() {
            for (f, w) in row.iter_mut().enumerate() {
                *w = (a as f64) + (f % 5) as f64 * 0.1;
            }
        }
        let map = InterTaskMap::identity(2);
        let q0 = initialize_target_q(
            &q,
            &mut source,
            &map,
            &target,
            Basis::Tabular { dims },
            2000,
            7,
        )
        .unwrap();
        // cells never visited by the sampling rollouts regress to zero
        // weights; on visited cells the tabular regression reproduces the
        // source values, so greedy actions agree there
        let mut agree = 0;
        let mut total = 0;
        for x in 0..20usize {
            for y in 0..20usize {
                let s = StateVector::new(vec![x as f64, y as f64]);
                let feats = q0.basis.eval(&s);
                let visited = (0..4).any(|a| q0.q_value(&feats, a).abs() > 1e-9);
                if !visited {
                    continue;
                }
                total += 1;
                if crate::fqi::greedy_action(&q, &s) == crate::fqi::greedy_action(&q0, &s) {
                    agree += 1;
                }
            }
        }
        assert!(total > 100, "sampling visited only {total} cells");
        assert!(
            agree * 100 >= total * 95,
            "greedy agreement {agree}/{total} too low on visited cells"
        );
    }

    #[test]
    fn initialization_consumes_no_target_samples() {
        let (mut source, target) = GridWorld::default_pair(120, 0.95);
        let q = LinearQ::zeros(Basis::Tabular { dims: vec![20, 20] }, 4, 1.0);
        let before = target.steps_taken();
        let _ = initialize_target_q(
            &q,
            &mut source,
            &InterTaskMap::identity(2),
            &target,
            Basis::Tabular { dims: vec![20, 20] },
            500,
            3,
        )
        .unwrap();
        assert_eq!(target.steps_taken(), before);
    }

    #[test]
    fn no_transfer_baseline_trains() {
        let (_, mut target) = GridWorld::default_pair(60, 0.95);
        let cfg = FqiConfig {
            episodes: 50,
            steps_per_episode: 60,
            learning_rate: 1.0,
            discount: 0.95,
            epsilon: EpsilonSchedule::constant(1.0),
            divergence_threshold: 1e6,
            sample_budget: None,
        };
        let (q, curve) = run_rl_no_transfer(
            &mut target,
            Basis::Tabular { dims: vec![20, 20] },
            &cfg,
            5,
        )
        .unwrap();
        assert_eq!(curve.points.len(), 50);
        assert!(q.max_abs_weight() > 0.0);
    }
}
