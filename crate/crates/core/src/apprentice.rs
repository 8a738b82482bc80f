//! Control-affine apprentice model of target dynamics, identified by
//! least squares from random-policy data:
//!
//!   s' = W_hat phi(s) + B_hat a
//!
//! with the utility-gap stopping rule: keep collecting data and refitting
//! until the projected source policy earns nearly the same average reward
//! under the apprentice as under the true target.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fqi::Basis;
use crate::mdp::{
    angle_diff, average_reward, rollout, ActionSet, Environment, Policy, RandomPolicy,
    StateVector, Trajectory, Transition,
};
use crate::rng::{self};

/// How the action enters the combined basis psi(s, a).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionEncoding {
    /// psi = [phi(s), a]: one gain column, affine in the action magnitude.
    Scalar,
    /// psi = [phi(s), onehot(a) minus the first action]: one displacement
    /// column per action, for tasks whose discrete actions are not scalar
    /// multiples of one direction (grid moves). The first action's column
    /// is absorbed into the drift to keep the design full rank.
    Indicator,
}

/// Learned target-dynamics model. Prediction is exactly
/// W_hat phi(s) + B_hat enc(a).
#[derive(Debug, Clone, PartialEq)]
pub struct ApprenticeModel {
    /// state_dim x basis_dim
    pub w_hat: DMatrix<f64>,
    /// state_dim x 1 (scalar encoding) or state_dim x |A| (indicator).
    pub b_hat: DMatrix<f64>,
    pub basis: Basis,
    pub encoding: ActionEncoding,
    pub action_set: ActionSet,
    /// Which state dimension the scalar gain actuates, when known.
    pub actuated_dim: Option<usize>,
    /// RMS residual of the fit.
    pub residual_rms: f64,
}

impl ApprenticeModel {
    pub fn state_dim(&self) -> usize {
        self.w_hat.nrows()
    }

    /// W_hat phi(s) + B_hat enc(a), exactly.
    pub fn predict(&self, s: &StateVector, action_value: f64) -> StateVector {
        let phi = self.basis.eval(s);
        let d = self.state_dim();
        let mut out = vec![0.0; d];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &f) in phi.iter().enumerate() {
                acc += self.w_hat[(i, j)] * f;
            }
            *o = acc;
        }
        match self.encoding {
            ActionEncoding::Scalar => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += self.b_hat[(i, 0)] * action_value;
                }
            }
            ActionEncoding::Indicator => {
                let idx = self.action_set.nearest_index(action_value);
                for (i, o) in out.iter_mut().enumerate() {
                    *o += self.b_hat[(i, idx)];
                }
            }
        }
        StateVector::new(out)
    }

    /// Estimated control gain in the given state dimension (scalar encoding).
    pub fn gain(&self, dim: usize) -> Option<f64> {
        match self.encoding {
            ActionEncoding::Scalar => Some(self.b_hat[(dim, 0)]),
            ActionEncoding::Indicator => None,
        }
    }

    pub fn gain_norm(&self) -> f64 {
        self.b_hat.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// The dynamics interface the transfer engine consumes. Implemented by the
/// linear apprentice and, in tests and diagnostics, by exact-model wrappers.
pub trait TargetModel: Send + Sync {
    fn predict_next(&self, s: &StateVector, action_value: f64) -> StateVector;
    /// Estimated control gain in the actuated dimension, if defined.
    fn actuated_gain(&self) -> Option<f64>;
}

impl TargetModel for ApprenticeModel {
    fn predict_next(&self, s: &StateVector, action_value: f64) -> StateVector {
        self.predict(s, action_value)
    }

    fn actuated_gain(&self) -> Option<f64> {
        self.actuated_dim.and_then(|d| self.gain(d))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApprenticeConfig {
    /// Trials k per collection round.
    pub trials: usize,
    /// Steps per trial N_T in the first round; refit rounds double it.
    pub steps_per_trial: usize,
    /// Utility-gap convergence threshold zeta.
    pub utility_gap_tol: f64,
    pub max_refits: usize,
}

impl ApprenticeConfig {
    pub fn validate(&self, basis_dim: usize) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Precondition("apprentice needs trials >= 1".into()));
        }
        if !(self.utility_gap_tol > 0.0) {
            return Err(Error::Precondition(
                "utility gap tolerance must be > 0".into(),
            ));
        }
        if self.trials * self.steps_per_trial < basis_dim + 1 {
            return Err(Error::Precondition(format!(
                "apprentice data budget {} cannot identify {} parameters per row",
                self.trials * self.steps_per_trial,
                basis_dim + 1
            )));
        }
        Ok(())
    }
}

/// Sup / mean prediction error on held-out data, plus the control-gain
/// ratio alpha = B / B_hat when the true gain is known (test fixtures).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelErrorReport {
    pub sup_error: f64,
    pub mean_error: f64,
    pub alpha_estimate: Option<f64>,
}

/// Run `trials` rollouts of `policy`, each up to `steps_per_trial` steps,
/// and return the flattened transitions plus per-rollout lengths.
pub fn collect_policy_data(
    env: &mut dyn Environment,
    policy: &dyn Policy,
    trials: usize,
    steps_per_trial: usize,
    seed: u64,
) -> Result<(Vec<Transition>, Vec<usize>)> {
    let mut data = Vec::new();
    let mut lens = Vec::with_capacity(trials);
    for t in 0..trials {
        let traj = rollout(env, policy, steps_per_trial, rng::mix(seed, t as u64))?;
        lens.push(traj.len());
        data.extend(traj.transitions);
    }
    Ok((data, lens))
}

/// Uniform-random-action data collection; the same dataset is reusable for
/// manifold alignment.
pub fn collect_random_data(
    env: &mut dyn Environment,
    cfg: &ApprenticeConfig,
    seed: u64,
) -> Result<(Vec<Transition>, Vec<usize>)> {
    let n = env.spec().action_set.cardinality();
    collect_policy_data(
        env,
        &RandomPolicy { n_actions: n },
        cfg.trials,
        cfg.steps_per_trial,
        seed,
    )
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub encoding: ActionEncoding,
    /// State components living on a circle: regression targets are
    /// continuity-corrected so wrap jumps do not poison the fit.
    pub angular_dims: Vec<usize>,
    pub actuated_dim: Option<usize>,
    /// Ignore all-zero design columns (one-hot features never excited by
    /// the dataset) instead of failing; their coefficients stay zero.
    pub drop_unexcited: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            encoding: ActionEncoding::Scalar,
            angular_dims: Vec::new(),
            actuated_dim: None,
            drop_unexcited: false,
        }
    }
}

/// Least-squares fit of theta = [W_hat, B_hat] on (s, a, s') triplets,
/// solved through a QR factorization of the design matrix.
pub fn fit_apprentice(
    data: &[Transition],
    basis: &Basis,
    action_set: &ActionSet,
    opts: &FitOptions,
) -> Result<ApprenticeModel> {
    let n = data.len();
    let f = basis.output_dim();
    let state_dim = data
        .first()
        .map(|t| t.state.dim())
        .ok_or_else(|| Error::Precondition("apprentice fit needs data".into()))?;
    let action_cols = match opts.encoding {
        ActionEncoding::Scalar => 1,
        ActionEncoding::Indicator => action_set.cardinality() - 1,
    };
    let m = f + action_cols;
    if n < m {
        return Err(Error::Precondition(format!(
            "apprentice fit needs at least {m} transitions, got {n}"
        )));
    }

    let mut x = DMatrix::zeros(n, m);
    let mut y = DMatrix::zeros(n, state_dim);
    let mut phi = vec![0.0; f];
    for (row, t) in data.iter().enumerate() {
        basis.eval_into(&t.state, &mut phi);
        for (j, &v) in phi.iter().enumerate() {
            x[(row, j)] = v;
        }
        match opts.encoding {
            ActionEncoding::Scalar => {
                x[(row, f)] = action_set.value(t.action_index);
            }
            ActionEncoding::Indicator => {
                if t.action_index > 0 {
                    x[(row, f + t.action_index - 1)] = 1.0;
                }
            }
        }
        for d in 0..state_dim {
            y[(row, d)] = if opts.angular_dims.contains(&d) {
                t.state[d] + angle_diff(t.next_state[d], t.state[d])
            } else {
                t.next_state[d]
            };
        }
    }

    // optionally silence never-excited columns (zero coefficients)
    let col_active: Vec<bool> = (0..m).map(|j| x.column(j).amax() > 1e-12).collect();
    let active: Vec<usize> = (0..m).filter(|&j| col_active[j]).collect();
    if !opts.drop_unexcited && active.len() != m {
        let dead = (0..m).find(|&j| !col_active[j]).unwrap();
        return Err(Error::RankDeficient(format!(
            "design column {} ({}) is never excited by the data",
            dead,
            column_name(dead, f, opts.encoding)
        )));
    }
    let xa = if active.len() == m {
        x.clone()
    } else {
        let mut xa = DMatrix::zeros(n, active.len());
        for (cj, &j) in active.iter().enumerate() {
            xa.set_column(cj, &x.column(j));
        }
        xa
    };

    let qr = xa.qr();
    let r = qr.r();
    let diag_max = (0..r.nrows().min(r.ncols()))
        .map(|i| r[(i, i)].abs())
        .fold(0.0f64, f64::max);
    for i in 0..r.nrows().min(r.ncols()) {
        if r[(i, i)].abs() < 1e-10 * diag_max.max(1e-300) {
            return Err(Error::RankDeficient(format!(
                "design column {} ({}) is not excited independently",
                active[i],
                column_name(active[i], f, opts.encoding)
            )));
        }
    }
    let q = qr.q();
    let qty = q.transpose() * &y;
    let theta_active = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("triangular solve failed in apprentice fit".into()))?;

    // scatter back to the full coefficient matrix (m x state_dim)
    let mut theta = DMatrix::zeros(m, state_dim);
    for (cj, &j) in active.iter().enumerate() {
        for d in 0..state_dim {
            theta[(j, d)] = theta_active[(cj, d)];
        }
    }

    let resid = (&x * &theta - &y).norm() / (n as f64 * state_dim as f64).sqrt();

    let mut w_hat = DMatrix::zeros(state_dim, f);
    for d in 0..state_dim {
        for j in 0..f {
            w_hat[(d, j)] = theta[(j, d)];
        }
    }
    let b_hat = match opts.encoding {
        ActionEncoding::Scalar => DMatrix::from_fn(state_dim, 1, |d, _| theta[(f, d)]),
        ActionEncoding::Indicator => {
            DMatrix::from_fn(state_dim, action_set.cardinality(), |d, a| {
                if a == 0 {
                    0.0
                } else {
                    theta[(f + a - 1, d)]
                }
            })
        }
    };

    Ok(ApprenticeModel {
        w_hat,
        b_hat,
        basis: basis.clone(),
        encoding: opts.encoding,
        action_set: action_set.clone(),
        actuated_dim: opts.actuated_dim,
        residual_rms: resid,
    })
}

fn column_name(j: usize, basis_dim: usize, encoding: ActionEncoding) -> String {
    if j < basis_dim {
        format!("state-basis feature {j}")
    } else {
        match encoding {
            ActionEncoding::Scalar => "action magnitude".to_string(),
            ActionEncoding::Indicator => format!("action indicator {}", j - basis_dim + 1),
        }
    }
}

/// Roll `policy` inside the model, sharing the true environment's reward
/// function, terminal predicate, state projection and initial draws.
pub fn model_rollout(
    env_template: &dyn Environment,
    model: &dyn TargetModel,
    policy: &dyn Policy,
    max_steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    if max_steps == 0 {
        return Err(Error::Precondition("rollout requires max_steps >= 1".into()));
    }
    let mut policy_rng = rng::stream(seed, rng::POLICY_STREAM);
    let mut env = env_template.boxed_clone();
    let mut s = env.reset(seed);
    let mut transitions = Vec::new();
    for i in 0..max_steps {
        let a = policy.select(&s, &mut policy_rng);
        let value = env.spec().action_set.value(a);
        let predicted = model.predict_next(&s, value);
        if !predicted.is_finite() {
            return Err(Error::Numerical(format!(
                "model produced a non-finite state at step {i}"
            )));
        }
        let next = env.canonicalize(predicted);
        let reward = env.reward_of(&s, a, &next);
        let terminal = env.is_terminal(&next);
        transitions.push(Transition {
            state: s,
            action_index: a,
            next_state: next.clone(),
            reward,
            terminal,
        });
        s = next;
        if terminal {
            break;
        }
    }
    Ok(Trajectory { transitions, seed })
}

/// |U_M(pi) - U_M_hat(pi)|: average-reward difference of the same policy
/// under the true environment and under apprentice rollouts, with identical
/// per-trial seeds.
pub fn utility_gap(
    policy: &dyn Policy,
    env_true: &mut dyn Environment,
    model: &dyn TargetModel,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Precondition("utility gap needs trials >= 1".into()));
    }
    let horizon = env_true.spec().horizon;
    let mut true_trajs = Vec::with_capacity(trials);
    let mut model_trajs = Vec::with_capacity(trials);
    for t in 0..trials {
        let s = rng::mix(seed, 0xCAFE ^ t as u64);
        true_trajs.push(rollout(env_true, policy, horizon, s)?);
        model_trajs.push(model_rollout(env_true, model, policy, horizon, s)?);
    }
    Ok((average_reward(&true_trajs)? - average_reward(&model_trajs)?).abs())
}

/// Sup/mean prediction errors over a holdout set; alpha = B / B_hat in the
/// actuated dimension when the true gain is supplied.
pub fn model_error_report(
    m: &ApprenticeModel,
    holdout: &[Transition],
    true_gain: Option<f64>,
) -> Result<ModelErrorReport> {
    if holdout.is_empty() {
        return Err(Error::Precondition(
            "model error report needs holdout data".into(),
        ));
    }
    let mut sup = 0.0f64;
    let mut sum = 0.0f64;
    for t in holdout {
        let pred = m.predict(&t.state, m.action_set.value(t.action_index));
        let mut err2 = 0.0;
        for d in 0..t.next_state.dim() {
            let e = t.next_state[d] - pred[d];
            err2 += e * e;
        }
        let e = err2.sqrt();
        sup = sup.max(e);
        sum += e;
    }
    let alpha = match (true_gain, m.actuated_dim) {
        (Some(b), Some(dim)) => m.gain(dim).map(|bh| b / bh),
        _ => None,
    };
    Ok(ModelErrorReport {
        sup_error: sup,
        mean_error: sum / holdout.len() as f64,
        alpha_estimate: alpha,
    })
}

/// One fit round of the apprentice loop.
#[derive(Debug, Clone)]
pub struct ApprenticeRound {
    /// Cumulative target-environment samples consumed so far.
    pub samples: u64,
    pub model: ApprenticeModel,
    pub utility_gap: f64,
}

#[derive(Debug, Clone)]
pub struct ApprenticeOutcome {
    pub rounds: Vec<ApprenticeRound>,
    pub dataset: Vec<Transition>,
    pub traj_lens: Vec<usize>,
    pub converged: bool,
}

impl ApprenticeOutcome {
    pub fn model(&self) -> &ApprenticeModel {
        &self.rounds.last().expect("at least one round").model
    }

    pub fn total_samples(&self) -> u64 {
        self.dataset.len() as u64
    }
}

/// The apprentice learning loop: fit on the accumulated dataset, evaluate
/// the utility gap of `eval_policy`, and repeat with a doubled per-trial
/// budget of fresh `collect_policy` data until the gap falls below zeta or
/// `max_refits` is exhausted. `initial_data` is reused as round zero
/// (shared with manifold alignment).
#[allow(clippy::too_many_arguments)]
pub fn learn_apprentice(
    env: &mut dyn Environment,
    initial_data: Vec<Transition>,
    initial_lens: Vec<usize>,
    collect_policy: &dyn Policy,
    eval_policy: &dyn Policy,
    basis: &Basis,
    cfg: &ApprenticeConfig,
    opts: &FitOptions,
    seed: u64,
) -> Result<ApprenticeOutcome> {
    cfg.validate(basis.output_dim())?;
    let action_set = env.spec().action_set.clone();
    let mut dataset = initial_data;
    let mut lens = initial_lens;
    if dataset.is_empty() {
        let (d, l) = collect_policy_data(
            env,
            collect_policy,
            cfg.trials,
            cfg.steps_per_trial,
            rng::mix(seed, 0xD0),
        )?;
        dataset = d;
        lens = l;
    }
    let mut rounds: Vec<ApprenticeRound> = Vec::new();
    let mut converged = false;
    for round in 0..=cfg.max_refits {
        let model = fit_apprentice(&dataset, basis, &action_set, opts)?;
        let gap = utility_gap(
            eval_policy,
            env,
            &model,
            cfg.trials.min(20),
            rng::mix(seed, 0xEA),
        )?;
        rounds.push(ApprenticeRound {
            samples: dataset.len() as u64,
            model,
            utility_gap: gap,
        });
        if gap <= cfg.utility_gap_tol {
            converged = true;
            break;
        }
        if round == cfg.max_refits {
            break;
        }
        let extra = cfg.steps_per_trial << (round + 1);
        let (d, l) = collect_policy_data(
            env,
            collect_policy,
            cfg.trials,
            extra,
            rng::mix(seed, 0xD1 + round as u64),
        )?;
        dataset.extend(d);
        lens.extend(l);
    }
    Ok(ApprenticeOutcome {
        rounds,
        dataset,
        traj_lens: lens,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{InvertedPendulum, PendulumParams};
    use rand::Rng as _;

    /// Build transitions from a known linear system s' = W s + B a.
    fn linear_fixture(
        w: [[f64; 2]; 2],
        b: [f64; 2],
        n: usize,
        noise: f64,
        seed: u64,
    ) -> (Vec<Transition>, ActionSet) {
        let actions = ActionSet::new(vec![-1.0, 0.0, 1.0]).unwrap();
        let mut r = rng::rng_from(seed);
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let s = StateVector::new(vec![
                r.random_range(-1.0..1.0),
                r.random_range(-1.0..1.0),
            ]);
            let ai = r.random_range(0..3);
            let a = actions.value(ai);
            let mut next = vec![0.0; 2];
            for (i, nx) in next.iter_mut().enumerate() {
                *nx = w[i][0] * s[0] + w[i][1] * s[1] + b[i] * a;
                if noise > 0.0 {
                    *nx += r.random_range(-noise..noise);
                }
            }
            data.push(Transition {
                state: s,
                action_index: ai,
                next_state: StateVector::new(next),
                reward: 0.0,
                terminal: false,
            });
        }
        (data, actions)
    }

    fn fit_linear(data: &[Transition], actions: &ActionSet) -> ApprenticeModel {
        fit_apprentice(
            data,
            &Basis::Raw { dim: 2, bias: false },
            actions,
            &FitOptions {
                actuated_dim: Some(1),
                ..FitOptions::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn recovers_known_linear_system_exactly() {
        let w = [[0.9, 0.1], [-0.05, 0.95]];
        let b = [0.07, 0.21];
        let (data, actions) = linear_fixture(w, b, 300, 0.0, 42);
        let m = fit_linear(&data, &actions);
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (m.w_hat[(i, j)] - w[i][j]).abs() < 1e-6,
                    "W[{i}{j}] = {}",
                    m.w_hat[(i, j)]
                );
            }
            assert!((m.b_hat[(i, 0)] - b[i]).abs() < 1e-6);
        }
        let report = model_error_report(&m, &data, Some(b[1])).unwrap();
        let alpha = report.alpha_estimate.unwrap();
        assert!((alpha - 1.0).abs() < 1e-6, "alpha = {alpha}");
        assert!(report.sup_error < 1e-6);
        assert!(report.sup_error >= report.mean_error);
    }

    #[test]
    fn zero_dynamics_fits_zero_parameters() {
        let (mut data, actions) = linear_fixture([[0.0; 2]; 2], [0.0; 2], 100, 0.0, 7);
        for t in &mut data {
            t.next_state = StateVector::new(vec![0.0, 0.0]);
        }
        let m = fit_linear(&data, &actions);
        assert!(m.w_hat.amax() < 1e-9);
        assert!(m.b_hat.amax() < 1e-9);
        assert!(m.gain_norm() < 1e-6); // rejected later by the b_min floor
    }

    #[test]
    fn noisy_fit_matches_normal_equations_oracle() {
        let w = [[0.8, 0.2], [0.1, 0.7]];
        let b = [0.15, -0.3];
        let (data, actions) = linear_fixture(w, b, 500, 0.01, 11);
        let m = fit_linear(&data, &actions);
        // independent oracle: explicit normal equations X'X theta = X'Y
        let n = data.len();
        let mut x = DMatrix::zeros(n, 3);
        let mut y = DMatrix::zeros(n, 2);
        for (i, t) in data.iter().enumerate() {
            x[(i, 0)] = t.state[0];
            x[(i, 1)] = t.state[1];
            x[(i, 2)] = actions.value(t.action_index);
            y[(i, 0)] = t.next_state[0];
            y[(i, 1)] = t.next_state[1];
        }
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * &y;
        let theta = xtx.lu().solve(&xty).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((m.w_hat[(i, j)] - theta[(j, i)]).abs() < 1e-8);
            }
            assert!((m.b_hat[(i, 0)] - theta[(2, i)]).abs() < 1e-8);
        }
        // parameters near the truth despite noise
        for i in 0..2 {
            assert!((m.b_hat[(i, 0)] - b[i]).abs() < 0.05);
        }
    }

    #[test]
    fn prediction_is_affine_in_the_action() {
        let (data, actions) = linear_fixture([[0.9, 0.0], [0.0, 0.9]], [0.1, 0.2], 200, 0.0, 3);
        let m = fit_linear(&data, &actions);
        let s = StateVector::new(vec![0.4, -0.2]);
        let p0 = m.predict(&s, 0.0);
        let p1 = m.predict(&s, 1.0);
        let p2 = m.predict(&s, 2.0);
        for d in 0..2 {
            let lhs = p2[d] - p0[d];
            let rhs = 2.0 * (p1[d] - p0[d]);
            assert!((lhs - rhs).abs() < 1e-12, "not affine in a at dim {d}");
        }
        // a = 0 gives the drift only
        let drift = m.predict(&s, 0.0);
        let mut expect = vec![0.0; 2];
        for (i, e) in expect.iter_mut().enumerate() {
            for j in 0..2 {
                *e += m.w_hat[(i, j)] * s[j];
            }
        }
        assert!((drift[0] - expect[0]).abs() < 1e-12);
        assert!((drift[1] - expect[1]).abs() < 1e-12);
    }

    #[test]
    fn fitted_theta_beats_random_perturbations() {
        let (data, actions) = linear_fixture([[0.9, 0.1], [0.0, 0.8]], [0.1, 0.3], 400, 0.02, 19);
        let m = fit_linear(&data, &actions);
        let residual = |w: &DMatrix<f64>, b: &DMatrix<f64>| -> f64 {
            data.iter()
                .map(|t| {
                    let mut e2 = 0.0;
                    for i in 0..2 {
                        let pred = w[(i, 0)] * t.state[0]
                            + w[(i, 1)] * t.state[1]
                            + b[(i, 0)] * actions.value(t.action_index);
                        let e = t.next_state[i] - pred;
                        e2 += e * e;
                    }
                    e2
                })
                .sum()
        };
        let base = residual(&m.w_hat, &m.b_hat);
        let mut r = rng::rng_from(99);
        for _ in 0..100 {
            let mut w = m.w_hat.clone();
            let mut b = m.b_hat.clone();
            for v in w.iter_mut() {
                *v += r.random_range(-0.01..0.01);
            }
            for v in b.iter_mut() {
                *v += r.random_range(-0.01..0.01);
            }
            assert!(residual(&w, &b) >= base - 1e-12);
        }
    }

    #[test]
    fn unexcited_column_is_reported_by_name() {
        let (mut data, actions) = linear_fixture([[0.9, 0.0], [0.0, 0.9]], [0.1, 0.2], 50, 0.0, 5);
        // kill the action column
        for t in &mut data {
            t.action_index = 1; // value 0.0
        }
        let err = fit_apprentice(
            &data,
            &Basis::Raw { dim: 2, bias: false },
            &actions,
            &FitOptions::default(),
        )
        .unwrap_err();
        match err {
            Error::RankDeficient(msg) => assert!(msg.contains("action magnitude"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn collect_random_data_is_reproducible_and_bounded() {
        let mut env = InvertedPendulum::new(PendulumParams::default());
        let cfg = ApprenticeConfig {
            trials: 3,
            steps_per_trial: 40,
            utility_gap_tol: 1.0,
            max_refits: 0,
        };
        let (d1, l1) = collect_random_data(&mut env, &cfg, 21).unwrap();
        let mut env2 = InvertedPendulum::new(PendulumParams::default());
        let (d2, l2) = collect_random_data(&mut env2, &cfg, 21).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(l1, l2);
        assert_eq!(l1.len(), 3);
        assert!(l1.iter().all(|&l| l <= 40));
        // every action index appears (persistently exciting)
        let mut seen = [false; 3];
        for t in &d1 {
            seen[t.action_index] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn perfect_model_has_zero_utility_gap() {
        struct ExactModel {
            env: Box<dyn Environment>,
        }
        impl TargetModel for ExactModel {
            fn predict_next(&self, s: &StateVector, value: f64) -> StateVector {
                self.env.peek_applied(s, value, 0).unwrap().next
            }
            fn actuated_gain(&self) -> Option<f64> {
                None
            }
        }
        let mut env = InvertedPendulum::new(PendulumParams::default());
        let model = ExactModel {
            env: env.boxed_clone(),
        };
        let gap = utility_gap(&RandomPolicy { n_actions: 3 }, &mut env, &model, 4, 33).unwrap();
        assert_eq!(gap, 0.0);
    }

    #[test]
    fn injected_error_grows_the_utility_gap_monotonically() {
        struct PerturbedModel {
            env: Box<dyn Environment>,
            delta: f64,
        }
        impl TargetModel for PerturbedModel {
            fn predict_next(&self, s: &StateVector, value: f64) -> StateVector {
                let mut n = self.env.peek_applied(s, value, 0).unwrap().next;
                n.0[1] += self.delta;
                n
            }
            fn actuated_gain(&self) -> Option<f64> {
                None
            }
        }
        let mut env = InvertedPendulum::new(PendulumParams::default());
        let mut gaps = Vec::new();
        for delta in [0.01, 0.05, 0.1] {
            let model = PerturbedModel {
                env: env.boxed_clone(),
                delta,
            };
            gaps.push(
                utility_gap(&RandomPolicy { n_actions: 3 }, &mut env, &model, 4, 33).unwrap(),
            );
        }
        assert!(gaps[0] < gaps[1] && gaps[1] < gaps[2], "gaps {gaps:?}");
    }

    #[test]
    fn angular_targets_survive_the_wrap() {
        // transitions that cross the pi cut: a linear fit of theta' would be
        // poisoned without continuity correction
        let actions = ActionSet::new(vec![-1.0, 0.0, 1.0]).unwrap();
        let mut data = Vec::new();
        for i in 0..120 {
            let th = std::f64::consts::PI - 0.2 + 0.4 * (i as f64 / 120.0); // crosses pi
            let wrapped = crate::mdp::wrap_angle(th);
            let next = crate::mdp::wrap_angle(th + 0.05);
            data.push(Transition {
                state: StateVector::new(vec![wrapped, 0.05 + 1e-4 * i as f64]),
                action_index: i % 3,
                next_state: StateVector::new(vec![next, 0.05]),
                reward: 0.0,
                terminal: false,
            });
        }
        let m = fit_apprentice(
            &data,
            &Basis::Raw { dim: 2, bias: true },
            &actions,
            &FitOptions {
                angular_dims: vec![0],
                ..FitOptions::default()
            },
        )
        .unwrap();
        // prediction near the cut should advance by ~+0.05, not jump by -2pi
        let s = StateVector::new(vec![std::f64::consts::PI - 0.01, 0.05]);
        let p = m.predict(&s, 0.0);
        assert!(
            (p[0] - (s[0] + 0.05)).abs() < 0.02,
            "wrap-corrected prediction drifted: {} vs {}",
            p[0],
            s[0] + 0.05
        );
    }
}
