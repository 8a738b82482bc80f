//! Fitted Q-iteration on a linear-in-basis action-value function
//! Q(s,a) = w[:,a]' xi(s), with epsilon-greedy exploration and incremental
//! Bellman-residual updates batched per episode.

pub mod basis;

use std::fmt::Write as _;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::mdp::{Environment, Policy, StateVector, Trajectory};
use crate::rng::{self, Rng};

pub use basis::{Basis, RbfBasis};

/// Linear-in-basis action-value function. Weights are stored per action so
/// Q(s,a) = dot(weights[a], xi(s)) exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearQ {
    pub basis: Basis,
    /// weights[action][feature]
    pub weights: Vec<Vec<f64>>,
    /// The step size the weights were (or will be) trained with.
    pub learning_rate: f64,
}

impl LinearQ {
    pub fn zeros(basis: Basis, n_actions: usize, learning_rate: f64) -> Self {
        let dim = basis.output_dim();
        LinearQ {
            basis,
            weights: vec![vec![0.0; dim]; n_actions],
            learning_rate,
        }
    }

    pub fn n_actions(&self) -> usize {
        self.weights.len()
    }

    pub fn q_value(&self, features: &[f64], action: usize) -> f64 {
        self.weights[action]
            .iter()
            .zip(features)
            .map(|(w, f)| w * f)
            .sum()
    }

    pub fn q_values(&self, s: &StateVector) -> Vec<f64> {
        let feats = self.basis.eval(s);
        (0..self.n_actions())
            .map(|a| self.q_value(&feats, a))
            .collect()
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|row| row.iter())
            .fold(0.0f64, |m, w| m.max(w.abs()))
    }
}

/// argmax_a Q(s,a); ties broken toward the lowest index.
pub fn greedy_action(q: &LinearQ, s: &StateVector) -> usize {
    let values = q.q_values(s);
    let mut best = 0;
    for (a, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = a;
        }
    }
    best
}

/// Uniform random action with probability `eps`, else the greedy action.
pub fn epsilon_greedy(q: &LinearQ, s: &StateVector, eps: f64, rng: &mut Rng) -> usize {
    if eps > 0.0 && rng.random::<f64>() < eps {
        rng.random_range(0..q.n_actions())
    } else {
        greedy_action(q, s)
    }
}

/// Greedy policy over a trained Q.
pub struct GreedyPolicy<'a> {
    pub q: &'a LinearQ,
}

impl Policy for GreedyPolicy<'_> {
    fn select(&self, state: &StateVector, _rng: &mut Rng) -> usize {
        greedy_action(self.q, state)
    }
}

/// Epsilon-greedy behaviour policy.
pub struct EpsilonGreedyPolicy<'a> {
    pub q: &'a LinearQ,
    pub eps: f64,
}

impl Policy for EpsilonGreedyPolicy<'_> {
    fn select(&self, state: &StateVector, rng: &mut Rng) -> usize {
        epsilon_greedy(self.q, state, self.eps, rng)
    }
}

/// Linear annealing from `start` to `end` over the first `anneal_fraction`
/// of training episodes, then constant at `end`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_fraction: f64,
}

impl EpsilonSchedule {
    pub fn constant(eps: f64) -> Self {
        EpsilonSchedule {
            start: eps,
            end: eps,
            anneal_fraction: 1.0,
        }
    }

    pub fn at(&self, episode: usize, total_episodes: usize) -> f64 {
        let span = (total_episodes as f64 * self.anneal_fraction).max(1.0);
        let t = (episode as f64 / span).min(1.0);
        self.start + (self.end - self.start) * t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FqiConfig {
    /// Training episodes (each episode is one collect-then-update batch).
    pub episodes: usize,
    /// Max steps per collected episode.
    pub steps_per_episode: usize,
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon: EpsilonSchedule,
    /// Abort when any |weight| exceeds this.
    pub divergence_threshold: f64,
    /// Stop early once this many environment samples have been consumed
    /// (equal-budget comparisons).
    pub sample_budget: Option<u64>,
}

impl FqiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Precondition("fqi needs episodes >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Precondition("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::Precondition("discount must lie in [0,1)".into()));
        }
        Ok(())
    }
}

/// One learning-curve sample: cumulative environment steps consumed so far
/// and the (undiscounted) reward of the episode that ended there.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub samples: u64,
    pub episode_reward: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    /// Trailing moving average of episode rewards with the given window,
    /// reported against cumulative samples.
    pub fn windowed(&self, window: usize) -> Vec<(u64, f64)> {
        let w = window.max(1);
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let lo = i.saturating_sub(w - 1);
                let mean = self.points[lo..=i]
                    .iter()
                    .map(|q| q.episode_reward)
                    .sum::<f64>()
                    / (i - lo + 1) as f64;
                (p.samples, mean)
            })
            .collect()
    }

    pub fn final_windowed(&self, window: usize) -> f64 {
        self.windowed(window).last().map(|&(_, r)| r).unwrap_or(0.0)
    }

    pub fn total_samples(&self) -> u64 {
        self.points.last().map(|p| p.samples).unwrap_or(0)
    }
}

/// Train by collecting one epsilon-greedy episode at a time, then applying
/// incremental Bellman-residual updates over its transitions:
/// w[:,a] += lr * (r + gamma * max_a' Q(s',a') - Q(s,a)) * xi(s).
pub fn fqi_train(
    env: &mut dyn Environment,
    cfg: &FqiConfig,
    q0: LinearQ,
    seed: u64,
) -> Result<(LinearQ, LearningCurve)> {
    cfg.validate()?;
    let n_actions = env.spec().action_set.cardinality();
    if q0.n_actions() != n_actions {
        return Err(Error::Precondition(format!(
            "Q has {} action columns but the environment exposes {}",
            q0.n_actions(),
            n_actions
        )));
    }
    let mut q = q0;
    q.learning_rate = cfg.learning_rate;
    let mut curve = LearningCurve::default();
    let mut samples: u64 = 0;
    let feat_dim = q.basis.output_dim();
    let mut feats = vec![0.0; feat_dim];
    let mut next_feats = vec![0.0; feat_dim];
    for ep in 0..cfg.episodes {
        let eps = cfg.epsilon.at(ep, cfg.episodes);
        let traj = {
            let policy = EpsilonGreedyPolicy { q: &q, eps };
            crate::mdp::rollout(env, &policy, cfg.steps_per_episode, rng::mix(seed, ep as u64))?
        };
        for t in &traj.transitions {
            q.basis.eval_into(&t.state, &mut feats);
            let q_sa = q.q_value(&feats, t.action_index);
            let bootstrap = if t.terminal {
                0.0
            } else {
                q.basis.eval_into(&t.next_state, &mut next_feats);
                (0..n_actions)
                    .map(|a| q.q_value(&next_feats, a))
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            let td = t.reward + cfg.discount * bootstrap - q_sa;
            let lr = cfg.learning_rate;
            for (w, &f) in q.weights[t.action_index].iter_mut().zip(&feats) {
                *w += lr * td * f;
            }
        }
        samples += traj.len() as u64;
        curve.points.push(CurvePoint {
            samples,
            episode_reward: traj.total_reward(),
        });
        let m = q.max_abs_weight();
        if !m.is_finite() || m > cfg.divergence_threshold {
            return Err(Error::Numerical(format!(
                "FQI weights diverged at episode {ep}: max |w| = {m:e} (lr {}, eps {eps:.3})",
                cfg.learning_rate
            )));
        }
        if cfg.sample_budget.is_some_and(|b| samples >= b) {
            break;
        }
    }
    Ok((q, curve))
}

/// Evaluate a trained Q greedily: mean undiscounted episode reward.
pub fn evaluate_greedy(
    env: &mut dyn Environment,
    q: &LinearQ,
    episodes: usize,
    max_steps: usize,
    seed: u64,
) -> Result<(f64, Vec<Trajectory>)> {
    let mut trajs = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let traj = crate::mdp::rollout(
            env,
            &GreedyPolicy { q },
            max_steps,
            rng::mix(seed, 0x5EED ^ ep as u64),
        )?;
        trajs.push(traj);
    }
    let avg = crate::mdp::average_reward(&trajs)?;
    Ok((avg, trajs))
}

// ---------------------------------------------------------------------------
// plain-text serialization
// ---------------------------------------------------------------------------

/// Serialize to the plain-text format: header `basis_type,dim,actions`, the
/// basis block, then one row of action weights per basis feature. Rust's
/// float formatting prints the shortest decimal that round-trips exactly.
pub fn q_to_string(q: &LinearQ) -> String {
    let mut out = String::new();
    let actions = q.n_actions();
    match &q.basis {
        Basis::Rbf(rbf) => {
            let _ = writeln!(out, "rbf,{},{}", rbf.centers[0].dim(), actions);
            let _ = writeln!(
                out,
                "centers,{},bias,{}",
                rbf.centers.len(),
                u8::from(rbf.bias)
            );
            let _ = writeln!(out, "{}", join(&rbf.variances));
            for c in &rbf.centers {
                let _ = writeln!(out, "{}", join(c.as_slice()));
            }
        }
        Basis::Raw { dim, bias } => {
            let _ = writeln!(out, "raw,{dim},{actions}");
            let _ = writeln!(out, "bias,{}", u8::from(*bias));
        }
        Basis::Tabular { dims } => {
            let _ = writeln!(out, "tabular,{},{}", dims.len(), actions);
            let dim_strs: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(out, "dims,{}", dim_strs.join(","));
        }
    }
    let _ = writeln!(out, "lr,{}", q.learning_rate);
    for f in 0..q.basis.output_dim() {
        let row: Vec<f64> = (0..actions).map(|a| q.weights[a][f]).collect();
        let _ = writeln!(out, "{}", join(&row));
    }
    out
}

pub fn q_from_string(text: &str) -> Result<LinearQ> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty Q file".into()))?;
    let parts: Vec<&str> = header.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Parse(format!("bad Q header '{header}'")));
    }
    let dim: usize = parse(parts[1])?;
    let actions: usize = parse(parts[2])?;
    let basis = match parts[0] {
        "rbf" => {
            let meta = next_line(&mut lines)?;
            let m: Vec<&str> = meta.split(',').collect();
            if m.len() != 4 || m[0] != "centers" || m[2] != "bias" {
                return Err(Error::Parse(format!("bad RBF meta line '{meta}'")));
            }
            let n_centers: usize = parse(m[1])?;
            let bias = m[3] == "1";
            let variances = parse_row(next_line(&mut lines)?)?;
            let mut centers = Vec::with_capacity(n_centers);
            for _ in 0..n_centers {
                let row = parse_row(next_line(&mut lines)?)?;
                if row.len() != dim {
                    return Err(Error::Parse("center row has wrong dimension".into()));
                }
                centers.push(StateVector::new(row));
            }
            Basis::Rbf(RbfBasis::new(centers, variances, bias)?)
        }
        "raw" => {
            let meta = next_line(&mut lines)?;
            let m: Vec<&str> = meta.split(',').collect();
            if m.len() != 2 || m[0] != "bias" {
                return Err(Error::Parse(format!("bad raw meta line '{meta}'")));
            }
            Basis::Raw {
                dim,
                bias: m[1] == "1",
            }
        }
        "tabular" => {
            let meta = next_line(&mut lines)?;
            let m: Vec<&str> = meta.split(',').collect();
            if m.len() < 2 || m[0] != "dims" {
                return Err(Error::Parse(format!("bad tabular meta line '{meta}'")));
            }
            let dims: Vec<usize> = m[1..]
                .iter()
                .map(|s| parse::<usize>(s))
                .collect::<Result<_>>()?;
            Basis::Tabular { dims }
        }
        other => return Err(Error::Parse(format!("unknown basis type '{other}'"))),
    };
    let lr_line = next_line(&mut lines)?;
    let lr: f64 = lr_line
        .strip_prefix("lr,")
        .ok_or_else(|| Error::Parse("missing learning-rate line".into()))
        .and_then(parse)?;
    let feat_dim = basis.output_dim();
    let mut weights = vec![vec![0.0; feat_dim]; actions];
    for f in 0..feat_dim {
        let row = parse_row(next_line(&mut lines)?)?;
        if row.len() != actions {
            return Err(Error::Parse("weight row has wrong action count".into()));
        }
        for (a, &v) in row.iter().enumerate() {
            weights[a][f] = v;
        }
    }
    Ok(LinearQ {
        basis,
        weights,
        learning_rate: lr,
    })
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn next_line<'a>(lines: &mut std::str::Lines<'a>) -> Result<&'a str> {
    lines
        .next()
        .ok_or_else(|| Error::Parse("truncated Q file".into()))
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("cannot parse '{s}'")))
}

fn parse_row(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace().map(parse::<f64>).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{ActionSet, InitialDistribution, MdpSpec, Step};

    /// Deterministic one-state two-armed bandit used by convergence tests.
    #[derive(Clone)]
    struct Bandit {
        spec: MdpSpec,
        state: StateVector,
        steps: u64,
    }

    impl Bandit {
        fn new() -> Self {
            Bandit {
                spec: MdpSpec {
                    state_dim: 1,
                    action_set: ActionSet::new(vec![0.0, 1.0]).unwrap(),
                    horizon: 1,
                    discount: 0.0,
                    initial_distribution: InitialDistribution::CenterJitter {
                        center: vec![0.0],
                        jitter: vec![0.0],
                    },
                    reward_bound: 1.0,
                    state_lo: vec![0.0],
                    state_hi: vec![0.0],
                },
                state: StateVector::new(vec![0.0]),
                steps: 0,
            }
        }
    }

    impl Environment for Bandit {
        fn spec(&self) -> &MdpSpec {
            &self.spec
        }
        fn name(&self) -> &str {
            "bandit"
        }
        fn state(&self) -> &StateVector {
            &self.state
        }
        fn reset(&mut self, _seed: u64) -> StateVector {
            self.state.clone()
        }
        fn reset_to(&mut self, state: StateVector) {
            self.state = state;
        }
        fn step(&mut self, action_index: usize) -> Step {
            self.steps += 1;
            Step {
                next: self.state.clone(),
                reward: action_index as f64,
                terminal: true,
            }
        }
        fn step_applied(&mut self, _value: f64) -> crate::error::Result<Step> {
            unreachable!()
        }
        fn supports_continuous_action(&self) -> bool {
            false
        }
        fn peek(&self, state: &StateVector, action_index: usize, _i: usize) -> Step {
            Step {
                next: state.clone(),
                reward: action_index as f64,
                terminal: true,
            }
        }
        fn peek_applied(
            &self,
            _state: &StateVector,
            _value: f64,
            _i: usize,
        ) -> crate::error::Result<Step> {
            unreachable!()
        }
        fn reward_of(&self, _s: &StateVector, a: usize, _n: &StateVector) -> f64 {
            a as f64
        }
        fn is_terminal(&self, _state: &StateVector) -> bool {
            false
        }
        fn canonicalize(&self, state: StateVector) -> StateVector {
            state
        }
        fn actuated_dim(&self) -> Option<usize> {
            None
        }
        fn step_index(&self) -> usize {
            0
        }
        fn steps_taken(&self) -> u64 {
            self.steps
        }
        fn boxed_clone(&self) -> Box<dyn Environment> {
            Box::new(self.clone())
        }
    }

    fn bandit_q() -> LinearQ {
        LinearQ::zeros(Basis::Raw { dim: 1, bias: true }, 2, 0.5)
    }

    #[test]
    fn bandit_converges_to_bellman_solution() {
        let mut env = Bandit::new();
        let cfg = FqiConfig {
            episodes: 200,
            steps_per_episode: 1,
            learning_rate: 0.5,
            discount: 0.0,
            epsilon: EpsilonSchedule::constant(1.0),
            divergence_threshold: 1e6,
            sample_budget: None,
        };
        let (q, curve) = fqi_train(&mut env, &cfg, bandit_q(), 3).unwrap();
        let s = StateVector::new(vec![0.0]);
        let v = q.q_values(&s);
        assert!((v[0] - 0.0).abs() < 1e-6, "Q(a0) = {}", v[0]);
        assert!((v[1] - 1.0).abs() < 1e-6, "Q(a1) = {}", v[1]);
        assert_eq!(curve.points.len(), 200);
        assert_eq!(curve.total_samples(), 200);
    }

    #[test]
    fn greedy_tie_breaks_low_and_scales_invariantly() {
        let mut q = bandit_q();
        let s = StateVector::new(vec![0.0]);
        assert_eq!(greedy_action(&q, &s), 0); // all-zero weights: lowest index
        q.weights[0] = vec![0.0, 1.0];
        q.weights[1] = vec![0.0, 3.0];
        assert_eq!(greedy_action(&q, &s), 1);
        for row in &mut q.weights {
            for w in row.iter_mut() {
                *w *= 7.5;
            }
        }
        assert_eq!(greedy_action(&q, &s), 1);
    }

    #[test]
    fn epsilon_zero_is_greedy_and_reproducible() {
        let mut q = bandit_q();
        q.weights[1] = vec![0.0, 2.0];
        let s = StateVector::new(vec![0.0]);
        let mut r1 = rng::stream(5, rng::POLICY_STREAM);
        let mut r2 = rng::stream(5, rng::POLICY_STREAM);
        for _ in 0..100 {
            assert_eq!(epsilon_greedy(&q, &s, 0.0, &mut r1), greedy_action(&q, &s));
        }
        let seq1: Vec<usize> = (0..50).map(|_| epsilon_greedy(&q, &s, 0.5, &mut r1)).collect();
        for _ in 0..100 {
            epsilon_greedy(&q, &s, 0.0, &mut r2);
        }
        let seq2: Vec<usize> = (0..50).map(|_| epsilon_greedy(&q, &s, 0.5, &mut r2)).collect();
        assert_eq!(seq1, seq2);
    }

    #[test]
    fn epsilon_one_is_uniform_within_3_sigma() {
        let q = bandit_q();
        let s = StateVector::new(vec![0.0]);
        let n = 10_000usize;
        let mut counts = [0usize; 2];
        let mut r = rng::stream(9, rng::POLICY_STREAM);
        for _ in 0..n {
            counts[epsilon_greedy(&q, &s, 1.0, &mut r)] += 1;
        }
        let p = 0.5;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!(
                (c as f64 - n as f64 * p).abs() <= 3.0 * sigma,
                "counts {counts:?} deviate beyond 3 sigma"
            );
        }
    }

    #[test]
    fn q_is_exactly_linear_in_weights() {
        // dQ/dw via finite differences equals xi(s)
        let basis = Basis::Rbf(
            RbfBasis::new(
                vec![
                    StateVector::new(vec![0.0, 0.0]),
                    StateVector::new(vec![1.0, 1.0]),
                ],
                vec![1.2, 1.2],
                true,
            )
            .unwrap(),
        );
        let mut q = LinearQ::zeros(basis, 2, 0.1);
        let s = StateVector::new(vec![0.3, -0.4]);
        let feats = q.basis.eval(&s);
        let h = 1e-4;
        for f in 0..feats.len() {
            let base = q.q_values(&s)[0];
            q.weights[0][f] += h;
            let bumped = q.q_values(&s)[0];
            q.weights[0][f] -= h;
            let grad = (bumped - base) / h;
            assert!(
                (grad - feats[f]).abs() < 1e-8,
                "feature {f}: fd {grad} vs xi {}",
                feats[f]
            );
        }
    }

    #[test]
    fn divergence_is_reported() {
        let mut env = Bandit::new();
        let cfg = FqiConfig {
            episodes: 5000,
            steps_per_episode: 1,
            learning_rate: 2e5,
            discount: 0.0,
            epsilon: EpsilonSchedule::constant(1.0),
            divergence_threshold: 1e6,
            sample_budget: None,
        };
        // a huge learning rate overshoots the fixed point geometrically
        let result = fqi_train(&mut env, &cfg, bandit_q(), 3);
        assert!(matches!(result, Err(Error::Numerical(_))));
    }

    #[test]
    fn epsilon_schedule_anneals_linearly() {
        let e = EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            anneal_fraction: 0.5,
        };
        assert_eq!(e.at(0, 100), 1.0);
        assert!((e.at(25, 100) - 0.525).abs() < 1e-12);
        assert!((e.at(50, 100) - 0.05).abs() < 1e-12);
        assert!((e.at(99, 100) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn serialization_round_trips_exactly() {
        let basis = Basis::Rbf(
            RbfBasis::new(
                vec![
                    StateVector::new(vec![0.1, -2.0 / 3.0]),
                    StateVector::new(vec![std::f64::consts::PI, 1e-13]),
                ],
                vec![1.2, 0.37],
                true,
            )
            .unwrap(),
        );
        let mut q = LinearQ::zeros(basis, 3, 5e-3);
        let mut r = rng::rng_from(1234);
        for row in &mut q.weights {
            for w in row.iter_mut() {
                *w = r.random::<f64>() * 2e3 - 1e3;
            }
        }
        let text = q_to_string(&q);
        let back = q_from_string(&text).unwrap();
        assert_eq!(q, back);

        let tq = LinearQ::zeros(Basis::Tabular { dims: vec![4, 3] }, 4, 1.0);
        let back = q_from_string(&q_to_string(&tq)).unwrap();
        assert_eq!(tq, back);
    }
}
