//! Shared MDP abstractions: states, discrete action sets, transitions,
//! trajectories, returns, and the policy/environment interfaces every other
//! module builds on.
//!
//! All types here are immutable after construction except `Environment`
//! implementations, which are single-owner stateful; specs, policies and
//! trajectories can be shared read-only across threads.

use std::fmt::Write as _;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Real-valued task state (grid coordinates or continuous physical state).
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn new(components: Vec<f64>) -> Self {
        StateVector(components)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Euclidean distance to another state of the same dimension.
    pub fn distance(&self, other: &StateVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl std::ops::Index<usize> for StateVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::Deref for StateVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl FromIterator<f64> for StateVector {
    fn from_iter<T: IntoIterator<Item = f64>>(iter: T) -> Self {
        StateVector(iter.into_iter().collect())
    }
}

/// Ordered set of discrete action magnitudes (force N, torque N·m, or grid
/// displacement code). Values are stored sorted ascending so that ordinal
/// correspondence between two sets is sign- and order-preserving.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet {
    values: Vec<f64>,
}

impl ActionSet {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Precondition("action set must be non-empty".into()));
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("non-finite action value"));
        if values.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Precondition(
                "action magnitudes must be distinct".into(),
            ));
        }
        Ok(ActionSet { values })
    }

    pub fn cardinality(&self) -> usize {
        self.values.len()
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_magnitude(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Index of the value closest to `v` (lowest index wins ties).
    pub fn nearest_index(&self, v: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &a) in self.values.iter().enumerate() {
            let d = (a - v).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Initial-state sampler specification (rho_0).
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDistribution {
    /// Uniform over an axis-aligned box.
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
    /// A fixed center plus independent uniform jitter per component.
    CenterJitter { center: Vec<f64>, jitter: Vec<f64> },
    /// Uniform over an explicit list of lattice cells.
    Cells { cells: Vec<(i64, i64)> },
}

impl InitialDistribution {
    pub fn sample(&self, rng: &mut Rng) -> StateVector {
        match self {
            InitialDistribution::UniformBox { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(&l, &h)| if l == h { l } else { rng.random_range(l..h) })
                .collect(),
            InitialDistribution::CenterJitter { center, jitter } => center
                .iter()
                .zip(jitter)
                .map(|(&c, &j)| {
                    if j == 0.0 {
                        c
                    } else {
                        c + rng.random_range(-j..j)
                    }
                })
                .collect(),
            InitialDistribution::Cells { cells } => {
                let (x, y) = cells[rng.random_range(0..cells.len())];
                StateVector::new(vec![x as f64, y as f64])
            }
        }
    }
}

/// Static description of an MDP: dimensions, actions, horizon, discount,
/// initial-state distribution and the reward bound R_max.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpSpec {
    pub state_dim: usize,
    pub action_set: ActionSet,
    pub horizon: usize,
    pub discount: f64,
    pub initial_distribution: InitialDistribution,
    pub reward_bound: f64,
    /// Declared per-component state bounds (used by invariants and basis grids).
    pub state_lo: Vec<f64>,
    pub state_hi: Vec<f64>,
}

impl MdpSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::Precondition(format!(
                "discount must lie in [0,1), got {}",
                self.discount
            )));
        }
        if self.horizon == 0 {
            return Err(Error::Precondition("horizon must be >= 1".into()));
        }
        if self.reward_bound <= 0.0 {
            return Err(Error::Precondition("reward bound must be positive".into()));
        }
        Ok(())
    }
}

/// One environment step: successor state, reward earned, terminal flag.
#[derive(Debug, Clone)]
pub struct Step {
    pub next: StateVector,
    pub reward: f64,
    pub terminal: bool,
}

/// A single (s, a, s', r, terminal) record.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateVector,
    pub action_index: usize,
    pub next_state: StateVector,
    pub reward: f64,
    pub terminal: bool,
}

/// An ordered list of chained transitions plus the seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Undiscounted sum of rewards.
    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }

    /// Checks the state-chaining invariant.
    pub fn is_chained(&self) -> bool {
        self.transitions
            .windows(2)
            .all(|w| w[0].next_state == w[1].state)
    }

    /// Plain-text CSV dump: `step,s_0..s_{d-1},action_index,reward,terminal`.
    pub fn to_csv(&self) -> String {
        let dim = self
            .transitions
            .first()
            .map(|t| t.state.dim())
            .unwrap_or(0);
        let mut out = String::from("step");
        for d in 0..dim {
            let _ = write!(out, ",s_{d}");
        }
        out.push_str(",action_index,reward,terminal\n");
        for (i, t) in self.transitions.iter().enumerate() {
            let _ = write!(out, "{i}");
            for c in t.state.iter() {
                let _ = write!(out, ",{c}");
            }
            let _ = writeln!(
                out,
                ",{},{},{}",
                t.action_index,
                t.reward,
                if t.terminal { 1 } else { 0 }
            );
        }
        out
    }
}

/// Abstract "state -> action index" evaluation interface so greedy, random
/// and composite transfer policies are interchangeable.
pub trait Policy {
    fn select(&self, state: &StateVector, rng: &mut Rng) -> usize;
}

/// Uniform-random action choice.
pub struct RandomPolicy {
    pub n_actions: usize,
}

impl Policy for RandomPolicy {
    fn select(&self, _state: &StateVector, rng: &mut Rng) -> usize {
        rng.random_range(0..self.n_actions)
    }
}

/// Always selects the same action index.
pub struct FixedPolicy {
    pub action: usize,
}

impl Policy for FixedPolicy {
    fn select(&self, _state: &StateVector, _rng: &mut Rng) -> usize {
        self.action
    }
}

/// A benchmark dynamical system. Instances are single-owner mutable state;
/// parameter blocks inside them are immutable and shareable. There is no
/// interior mutability: stepping requires `&mut`, model queries are pure.
pub trait Environment: Send + Sync {
    fn spec(&self) -> &MdpSpec;
    fn name(&self) -> &str;
    fn state(&self) -> &StateVector;

    /// Sample rho_0 and reset step counters and noise streams.
    fn reset(&mut self, seed: u64) -> StateVector;

    /// Place the environment at an arbitrary state; the per-episode step
    /// index rewinds to 0.
    fn reset_to(&mut self, state: StateVector);

    /// Advance one step with a discrete action index.
    fn step(&mut self, action_index: usize) -> Step;

    /// Advance one step applying a raw actuation value. Only continuous
    /// tasks support this; discrete-only tasks return a precondition error.
    fn step_applied(&mut self, value: f64) -> Result<Step>;

    fn supports_continuous_action(&self) -> bool;

    /// Pure one-step model query at an arbitrary state. Deterministic
    /// (noise-free); does not disturb the environment or its counters.
    fn peek(&self, state: &StateVector, action_index: usize, step_index: usize) -> Step;

    /// `peek` with a raw actuation value (continuous tasks only).
    fn peek_applied(&self, state: &StateVector, value: f64, step_index: usize) -> Result<Step>;

    /// Reward for arriving at `next` after taking `action_index` at `state`.
    /// Shared by true-environment and model-based rollouts.
    fn reward_of(&self, state: &StateVector, action_index: usize, next: &StateVector) -> f64;

    fn is_terminal(&self, state: &StateVector) -> bool;

    /// Project an arbitrary vector back onto the state manifold (wrap
    /// angles, clamp to bounds).
    fn canonicalize(&self, state: StateVector) -> StateVector;

    /// Chart used for manifold alignment: a connected coordinate system for
    /// the states this task actually visits. Identity by default.
    fn alignment_coords(&self, state: &StateVector) -> StateVector {
        state.clone()
    }

    fn from_alignment_coords(&self, coords: &StateVector) -> StateVector {
        coords.clone()
    }

    /// State dimension directly driven by the actuation, if the task is
    /// continuously actuated.
    fn actuated_dim(&self) -> Option<usize>;

    /// State components that live on a circle (wrap-aware regression).
    fn angular_dims(&self) -> &[usize] {
        &[]
    }

    /// Per-episode step index (drives time-varying dynamics).
    fn step_index(&self) -> usize;

    /// Total environment steps consumed since construction (sample accounting).
    fn steps_taken(&self) -> u64;

    fn boxed_clone(&self) -> Box<dyn Environment>;
}

impl Clone for Box<dyn Environment> {
    fn clone(&self) -> Self {
        self.boxed_clone()
    }
}

/// Sample an initial state from the spec's rho_0; deterministic per seed.
pub fn sample_initial_state(spec: &MdpSpec, seed: u64) -> StateVector {
    let mut r = rng::stream(seed, rng::INIT_STREAM);
    spec.initial_distribution.sample(&mut r)
}

/// Roll a policy in an environment for at most `max_steps` steps, truncating
/// early iff a terminal transition occurs. Identical (env, policy, seed)
/// triples produce bit-identical trajectories.
pub fn rollout(
    env: &mut dyn Environment,
    policy: &dyn Policy,
    max_steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    if max_steps == 0 {
        return Err(Error::Precondition("rollout requires max_steps >= 1".into()));
    }
    let mut policy_rng = rng::stream(seed, rng::POLICY_STREAM);
    let mut s = env.reset(seed);
    let mut transitions = Vec::new();
    for i in 0..max_steps {
        let a = policy.select(&s, &mut policy_rng);
        let step = env.step(a);
        if !step.next.is_finite() {
            return Err(Error::Numerical(format!(
                "environment '{}' produced a non-finite state at step {i}",
                env.name()
            )));
        }
        transitions.push(Transition {
            state: s,
            action_index: a,
            next_state: step.next.clone(),
            reward: step.reward,
            terminal: step.terminal,
        });
        s = step.next;
        if step.terminal {
            break;
        }
    }
    Ok(Trajectory { transitions, seed })
}

/// `rollout` from an explicit start state instead of a rho_0 draw.
pub fn rollout_from(
    env: &mut dyn Environment,
    policy: &dyn Policy,
    start: StateVector,
    max_steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    if max_steps == 0 {
        return Err(Error::Precondition("rollout requires max_steps >= 1".into()));
    }
    env.reset(seed);
    env.reset_to(start);
    let mut policy_rng = rng::stream(seed, rng::POLICY_STREAM);
    let mut s = env.state().clone();
    let mut transitions = Vec::new();
    for i in 0..max_steps {
        let a = policy.select(&s, &mut policy_rng);
        let step = env.step(a);
        if !step.next.is_finite() {
            return Err(Error::Numerical(format!(
                "environment '{}' produced a non-finite state at step {i}",
                env.name()
            )));
        }
        transitions.push(Transition {
            state: s,
            action_index: a,
            next_state: step.next.clone(),
            reward: step.reward,
            terminal: step.terminal,
        });
        s = step.next;
        if step.terminal {
            break;
        }
    }
    Ok(Trajectory { transitions, seed })
}

/// Discounted return sum_i gamma^i r_i, i counted from 0.
pub fn discounted_return(traj: &Trajectory, discount: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&discount) {
        return Err(Error::Precondition(format!(
            "discount must lie in [0,1), got {discount}"
        )));
    }
    let mut g = 1.0;
    let mut total = 0.0;
    for t in &traj.transitions {
        total += g * t.reward;
        g *= discount;
    }
    Ok(total)
}

/// Mean of undiscounted reward sums across trajectories.
pub fn average_reward(trajs: &[Trajectory]) -> Result<f64> {
    if trajs.is_empty() {
        return Err(Error::Precondition(
            "average_reward requires at least one trajectory".into(),
        ));
    }
    Ok(trajs.iter().map(|t| t.total_reward()).sum::<f64>() / trajs.len() as f64)
}

/// Spot-check `|reward| <= reward_bound` on random rollouts.
pub fn check_reward_bound(env: &mut dyn Environment, episodes: usize, seed: u64) -> Result<()> {
    let n = env.spec().action_set.cardinality();
    let bound = env.spec().reward_bound;
    let horizon = env.spec().horizon;
    for ep in 0..episodes {
        let traj = rollout(
            env,
            &RandomPolicy { n_actions: n },
            horizon,
            rng::mix(seed, ep as u64),
        )?;
        for (i, t) in traj.transitions.iter().enumerate() {
            if t.reward.abs() > bound {
                return Err(Error::Numerical(format!(
                    "reward {} at step {i} exceeds declared bound {bound}",
                    t.reward
                )));
            }
        }
    }
    Ok(())
}

/// Wrap an angle into [-pi, pi).
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut t = (theta + std::f64::consts::PI).rem_euclid(two_pi);
    if t < 0.0 {
        t += two_pi;
    }
    t - std::f64::consts::PI
}

/// Smallest signed angular difference a - b on the circle.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj_with_rewards(rewards: &[f64]) -> Trajectory {
        let transitions = rewards
            .iter()
            .map(|&r| Transition {
                state: StateVector::new(vec![0.0]),
                action_index: 0,
                next_state: StateVector::new(vec![0.0]),
                reward: r,
                terminal: false,
            })
            .collect();
        Trajectory {
            transitions,
            seed: 0,
        }
    }

    #[test]
    fn discounted_return_zero_rewards() {
        let t = traj_with_rewards(&[0.0, 0.0, 0.0]);
        assert_eq!(discounted_return(&t, 0.9).unwrap(), 0.0);
    }

    #[test]
    fn discounted_return_geometric() {
        let t = traj_with_rewards(&[1.0, 1.0, 1.0]);
        assert_eq!(discounted_return(&t, 0.5).unwrap(), 1.75);
    }

    #[test]
    fn discounted_return_rejects_bad_discount() {
        let t = traj_with_rewards(&[1.0]);
        assert!(discounted_return(&t, 1.0).is_err());
        assert!(discounted_return(&t, -0.1).is_err());
    }

    #[test]
    fn average_reward_mean_and_singleton() {
        let a = traj_with_rewards(&[4.0, 6.0]);
        let b = traj_with_rewards(&[20.0]);
        assert_eq!(average_reward(&[a.clone(), b]).unwrap(), 15.0);
        assert_eq!(average_reward(&[a]).unwrap(), 10.0);
        assert!(average_reward(&[]).is_err());
    }

    #[test]
    fn action_set_sorts_and_rejects_duplicates() {
        let s = ActionSet::new(vec![2.0, -2.0, 0.0]).unwrap();
        assert_eq!(s.values(), &[-2.0, 0.0, 2.0]);
        assert!(ActionSet::new(vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn action_set_nearest() {
        let s = ActionSet::new(vec![-2.0, 0.0, 2.0]).unwrap();
        assert_eq!(s.nearest_index(1.2), 2);
        assert_eq!(s.nearest_index(-0.9), 1);
        assert_eq!(s.nearest_index(-1.0), 0); // tie broken toward lowest index
    }

    #[test]
    fn wrap_angle_covers_circle() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12
            || (wrap_angle(3.0 * std::f64::consts::PI) + std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(0.1) - 0.1).abs() < 1e-15);
        assert!((angle_diff(-3.1, 3.1) - 0.083_185_307_179_586_7).abs() < 1e-12);
    }

    #[test]
    fn initial_distribution_deterministic_per_seed() {
        let spec = MdpSpec {
            state_dim: 2,
            action_set: ActionSet::new(vec![-1.0, 1.0]).unwrap(),
            horizon: 10,
            discount: 0.9,
            initial_distribution: InitialDistribution::UniformBox {
                lo: vec![-1.0, -1.0],
                hi: vec![1.0, 1.0],
            },
            reward_bound: 1.0,
            state_lo: vec![-1.0, -1.0],
            state_hi: vec![1.0, 1.0],
        };
        let a = sample_initial_state(&spec, 11);
        let b = sample_initial_state(&spec, 11);
        let c = sample_initial_state(&spec, 12);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn trajectory_csv_header_and_rows() {
        let t = traj_with_rewards(&[1.5]);
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "step,s_0,action_index,reward,terminal");
        assert_eq!(lines.next().unwrap(), "0,0,0,1.5,0");
    }
}
