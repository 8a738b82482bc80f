//! The transfer engine: compose the mapped source-optimal policy with the
//! model-error adaptive policy and execute it in the target task.
//!
//! Per step, the target state is mapped into source coordinates, the greedy
//! source action is taken, the source simulator is stepped once and the
//! result mapped back, giving the reference next state. The correction is
//!
//!   c = chi_s(P_S(chi_s+(s), a_S)) - P_hat(s, a_T)
//!
//! and the applied action is the ordinal-mapped source action plus K c in
//! the actuated dimension, with the mixture gain K = 1 / B_hat. No learning
//! happens in the target: sample complexity reduces to apprentice learning.

use std::fmt::Write as _;

use crate::alignment::{map_action, InterTaskMap};
use crate::apprentice::TargetModel;
use crate::error::{Error, Result};
use crate::fqi::{greedy_action, LinearQ};
use crate::mdp::{ActionSet, Environment, StateVector, Trajectory, Transition};
use crate::rng;

/// Floor on |B_hat| below which the mixture gain K = 1/B_hat is undefined
/// and transfer refuses to run.
pub const B_MIN: f64 = 1e-6;

/// Everything the composite policy needs. Immutable during execution.
pub struct TransferContext {
    pub source_q: LinearQ,
    /// Source simulator (queried one step at a time, never mutated).
    pub source_env: Box<dyn Environment>,
    pub map: InterTaskMap,
    pub model: Box<dyn TargetModel>,
    pub source_actions: ActionSet,
    pub target_actions: ActionSet,
    /// K = 1/B_hat in the actuated dimension; None for discrete-only tasks.
    pub gain: Option<f64>,
    pub actuated_dim: Option<usize>,
    /// Applied actions are clamped to this multiple of the max base
    /// magnitude; hitting the clamp is logged, not hidden.
    pub clamp_factor: f64,
    map_is_identity: bool,
}

impl TransferContext {
    pub fn new(
        source_q: LinearQ,
        source_env: Box<dyn Environment>,
        map: InterTaskMap,
        model: Box<dyn TargetModel>,
        target_env: &dyn Environment,
    ) -> Result<Self> {
        Self::with_gain_override(source_q, source_env, map, model, target_env, None)
    }

    /// `gain_override` substitutes the mixture gain; used by diagnostics
    /// with exact-model stand-ins whose gain is supplied externally.
    pub fn with_gain_override(
        source_q: LinearQ,
        source_env: Box<dyn Environment>,
        map: InterTaskMap,
        model: Box<dyn TargetModel>,
        target_env: &dyn Environment,
        gain_override: Option<f64>,
    ) -> Result<Self> {
        let source_actions = source_env.spec().action_set.clone();
        let target_actions = target_env.spec().action_set.clone();
        if source_actions.cardinality() != target_actions.cardinality() {
            return Err(Error::ActionMismatch(format!(
                "transfer requires equal action cardinality, got |A^S| = {} and |A^T| = {}",
                source_actions.cardinality(),
                target_actions.cardinality()
            )));
        }
        let actuated_dim = target_env.actuated_dim();
        let gain = if target_env.supports_continuous_action() {
            let b_hat = gain_override
                .or_else(|| model.actuated_gain())
                .ok_or_else(|| {
                    Error::Precondition(
                        "continuous-actuation transfer needs a scalar control gain".into(),
                    )
                })?;
            if b_hat.abs() < B_MIN {
                return Err(Error::Numerical(format!(
                    "estimated control gain |B_hat| = {:.3e} is below the {B_MIN:e} floor; \
                     the mixture gain K = 1/B_hat is undefined and transfer is rejected",
                    b_hat.abs()
                )));
            }
            Some(1.0 / b_hat)
        } else {
            None
        };
        let map_is_identity = {
            let d = map.forward.in_dim();
            map.forward.out_dim() == d && map == InterTaskMap::identity(d)
        };
        Ok(TransferContext {
            source_q,
            source_env,
            map,
            model,
            source_actions,
            target_actions,
            gain,
            actuated_dim,
            clamp_factor: 3.0,
            map_is_identity,
        })
    }

    /// K * B_hat = 1 in the actuated dimension, by construction.
    pub fn mixture_gain(&self) -> Option<f64> {
        self.gain
    }

    /// chi_s+ : target state -> source coordinates (through the alignment
    /// charts of both environments).
    pub fn to_source(&self, target_env: &dyn Environment, s_target: &StateVector) -> StateVector {
        if self.map_is_identity {
            return s_target.clone();
        }
        chart_to_source(self.source_env.as_ref(), target_env, &self.map, s_target)
    }

    /// chi_s : source state -> target coordinates.
    pub fn to_target(&self, target_env: &dyn Environment, s_source: &StateVector) -> StateVector {
        if self.map_is_identity {
            return s_source.clone();
        }
        chart_to_target(self.source_env.as_ref(), target_env, &self.map, s_source)
    }
}

/// chi_s+ as a free function: target raw state -> source raw state, going
/// through both environments' alignment charts.
pub fn chart_to_source(
    source_env: &dyn Environment,
    target_env: &dyn Environment,
    map: &InterTaskMap,
    s_target: &StateVector,
) -> StateVector {
    let coords = target_env.alignment_coords(s_target);
    let mapped = StateVector::new(map.inverse.apply(coords.as_slice()));
    let raw = source_env.from_alignment_coords(&mapped);
    source_env.canonicalize(raw)
}

/// chi_s as a free function: source raw state -> target raw state.
pub fn chart_to_target(
    source_env: &dyn Environment,
    target_env: &dyn Environment,
    map: &InterTaskMap,
    s_source: &StateVector,
) -> StateVector {
    let coords = source_env.alignment_coords(s_source);
    let mapped = StateVector::new(map.forward.apply(coords.as_slice()));
    target_env.from_alignment_coords(&mapped)
}

/// The mapped source policy as a discrete policy on the target: greedy
/// source action at chi_s+(s), returned as the ordinal-equivalent target
/// index. This is the projected policy whose utility drives the apprentice
/// stopping rule, and the grid-world data-collection policy.
pub struct ProjectedPolicy<'a> {
    pub source_q: &'a LinearQ,
    pub source_env: &'a dyn Environment,
    pub target_env: &'a dyn Environment,
    pub map: &'a InterTaskMap,
}

impl crate::mdp::Policy for ProjectedPolicy<'_> {
    fn select(&self, state: &StateVector, _rng: &mut crate::rng::Rng) -> usize {
        let s_src = chart_to_source(self.source_env, self.target_env, self.map, state);
        greedy_action(self.source_q, &s_src)
    }
}

/// The reference produced by one source-simulator query.
#[derive(Debug, Clone)]
pub struct ProjectedStep {
    /// Image of the target state in source coordinates.
    pub source_state: StateVector,
    /// Greedy source action at that image.
    pub source_action: usize,
    /// Source successor mapped back into target coordinates.
    pub target_next: StateVector,
}

/// Map the target state to source space, take the greedy source action,
/// step the source simulator once (on a copy; no persistent mutation) and
/// map the result back.
pub fn projected_source_next(
    ctx: &TransferContext,
    target_env: &dyn Environment,
    s_target: &StateVector,
) -> ProjectedStep {
    let s_src = ctx.to_source(target_env, s_target);
    let a_src = greedy_action(&ctx.source_q, &s_src);
    project_with_action(ctx, target_env, s_target, a_src)
}

/// Same as `projected_source_next` with the source action pinned; shared by
/// the matched-apprentice model so both paths are bit-identical.
pub fn project_with_action(
    ctx: &TransferContext,
    target_env: &dyn Environment,
    s_target: &StateVector,
    a_src: usize,
) -> ProjectedStep {
    let s_src = ctx.to_source(target_env, s_target);
    let step = ctx.source_env.peek(&s_src, a_src, 0);
    ProjectedStep {
        source_state: s_src,
        source_action: a_src,
        target_next: ctx.to_target(target_env, &step.next),
    }
}

/// The model-error correction c and the action-space correction K c.
#[derive(Debug, Clone)]
pub struct AdaptiveCorrection {
    pub state_correction: StateVector,
    pub action_correction: f64,
}

/// c = reference next state minus the apprentice prediction for the
/// ordinal-equivalent target action; a_ad = K c in the actuated dimension.
pub fn adaptive_correction(
    ctx: &TransferContext,
    s_target: &StateVector,
    a_target_idx: usize,
    target_next_ref: &StateVector,
) -> AdaptiveCorrection {
    let a_value = ctx.target_actions.value(a_target_idx);
    let pred = ctx.model.predict_next(s_target, a_value);
    let c: StateVector = target_next_ref
        .iter()
        .zip(pred.iter())
        .map(|(r, p)| r - p)
        .collect();
    let action_correction = match (ctx.gain, ctx.actuated_dim) {
        (Some(k), Some(dim)) => k * c[dim],
        _ => 0.0,
    };
    AdaptiveCorrection {
        state_correction: c,
        action_correction,
    }
}

/// What the composite policy decided to do at one step.
#[derive(Debug, Clone)]
pub enum CompositeDecision {
    /// Continuous actuation: base value plus K c, clamped.
    Continuous {
        base_index: usize,
        applied_value: f64,
        correction: AdaptiveCorrection,
        clamped: bool,
    },
    /// Discrete resolution: the base action whose one-step apprentice
    /// prediction lands closest to the reference (ties prefer the mapped
    /// source action, then the lowest index).
    Discrete {
        base_index: usize,
        chosen_index: usize,
        correction: AdaptiveCorrection,
    },
}

impl CompositeDecision {
    pub fn applied_value(&self, actions: &ActionSet) -> f64 {
        match self {
            CompositeDecision::Continuous { applied_value, .. } => *applied_value,
            CompositeDecision::Discrete { chosen_index, .. } => actions.value(*chosen_index),
        }
    }

    pub fn correction(&self) -> &AdaptiveCorrection {
        match self {
            CompositeDecision::Continuous { correction, .. } => correction,
            CompositeDecision::Discrete { correction, .. } => correction,
        }
    }
}

/// Evaluate the composite policy at a target state.
pub fn composite_action(
    ctx: &TransferContext,
    target_env: &dyn Environment,
    s_target: &StateVector,
) -> Result<CompositeDecision> {
    let projected = projected_source_next(ctx, target_env, s_target);
    let base_index = map_action(
        projected.source_action,
        &ctx.source_actions,
        &ctx.target_actions,
    )?;
    if target_env.supports_continuous_action() {
        let correction = adaptive_correction(ctx, s_target, base_index, &projected.target_next);
        if !correction.action_correction.is_finite() {
            return Err(Error::Numerical(
                "non-finite adaptive correction; the apprentice model is unusable here".into(),
            ));
        }
        let raw = ctx.target_actions.value(base_index) + correction.action_correction;
        let cap = ctx.clamp_factor * ctx.target_actions.max_magnitude();
        let applied_value = raw.clamp(-cap, cap);
        Ok(CompositeDecision::Continuous {
            base_index,
            clamped: applied_value != raw,
            applied_value,
            correction,
        })
    } else {
        // one-step model matching over the discrete action set
        let correction = adaptive_correction(ctx, s_target, base_index, &projected.target_next);
        let mut best = base_index;
        let mut best_d = f64::INFINITY;
        for a in 0..ctx.target_actions.cardinality() {
            let pred = ctx
                .model
                .predict_next(s_target, ctx.target_actions.value(a));
            let d = pred.distance(&projected.target_next);
            let better = d < best_d - 1e-12
                || ((d - best_d).abs() <= 1e-12 && a == base_index && best != base_index);
            if better {
                best_d = d;
                best = a;
            }
        }
        Ok(CompositeDecision::Discrete {
            base_index,
            chosen_index: best,
            correction,
        })
    }
}

/// Aggregate record of a transfer run.
#[derive(Debug, Clone, Default)]
pub struct TransferRecord {
    pub episode_rewards: Vec<f64>,
    pub average_reward: f64,
    /// Running sup of |state correction| components (the ||pi_ad||_inf bound).
    pub correction_sup: f64,
    pub clamp_events: u64,
    pub target_steps: u64,
    /// Per-step CSV log when requested:
    /// episode,step,target_state...,source_action,correction...,applied_action,reward
    pub log_csv: Option<String>,
}

/// Execute the composite policy in the target task. No learning occurs: the
/// context is immutable and only the target environment advances.
pub fn run_transfer(
    ctx: &TransferContext,
    target_env: &mut dyn Environment,
    episodes: usize,
    seed: u64,
    keep_log: bool,
) -> Result<(Vec<Trajectory>, TransferRecord)> {
    if episodes == 0 {
        return Err(Error::Precondition("run_transfer needs episodes >= 1".into()));
    }
    let horizon = target_env.spec().horizon;
    let mut record = TransferRecord::default();
    let mut log = if keep_log {
        let dim = target_env.spec().state_dim;
        let mut header = String::from("episode,step");
        for d in 0..dim {
            let _ = write!(header, ",s_{d}");
        }
        for d in 0..dim {
            let _ = write!(header, ",c_{d}");
        }
        header.push_str(",source_action,applied_action,reward\n");
        Some(header)
    } else {
        None
    };
    let mut trajectories = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let mut s = target_env.reset(rng::mix(seed, ep as u64));
        let mut transitions = Vec::new();
        for step_idx in 0..horizon {
            let decision = composite_action(ctx, target_env, &s)?;
            for c in decision.correction().state_correction.iter() {
                record.correction_sup = record.correction_sup.max(c.abs());
            }
            let (step, base_index) = match &decision {
                CompositeDecision::Continuous {
                    applied_value,
                    base_index,
                    clamped,
                    ..
                } => {
                    if *clamped {
                        record.clamp_events += 1;
                    }
                    (target_env.step_applied(*applied_value)?, *base_index)
                }
                CompositeDecision::Discrete {
                    chosen_index,
                    base_index,
                    ..
                } => (target_env.step(*chosen_index), *base_index),
            };
            record.target_steps += 1;
            if !step.next.is_finite() {
                return Err(Error::Numerical(format!(
                    "target environment produced a non-finite state at episode {ep} step {step_idx}"
                )));
            }
            if let Some(log) = log.as_mut() {
                let _ = write!(log, "{ep},{step_idx}");
                for v in s.iter() {
                    let _ = write!(log, ",{v}");
                }
                for v in decision.correction().state_correction.iter() {
                    let _ = write!(log, ",{v}");
                }
                let _ = writeln!(
                    log,
                    ",{},{},{}",
                    base_index,
                    decision.applied_value(&ctx.target_actions),
                    step.reward
                );
            }
            transitions.push(Transition {
                state: s,
                action_index: base_index,
                next_state: step.next.clone(),
                reward: step.reward,
                terminal: step.terminal,
            });
            s = step.next;
            if step.terminal {
                break;
            }
        }
        record.episode_rewards.push(
            transitions.iter().map(|t| t.reward).sum::<f64>(),
        );
        trajectories.push(Trajectory {
            transitions,
            seed: rng::mix(seed, ep as u64),
        });
    }
    record.average_reward =
        record.episode_rewards.iter().sum::<f64>() / record.episode_rewards.len() as f64;
    record.log_csv = log;
    Ok((trajectories, record))
}

/// An apprentice that IS the projected source model: the matched case where
/// every correction is exactly zero. Both the reference and the prediction
/// run through `project_with_action`, so the difference is bit-zero.
pub struct ProjectedSourceApprentice {
    pub source_q: LinearQ,
    pub source_env: Box<dyn Environment>,
    pub target_env: Box<dyn Environment>,
    pub map: InterTaskMap,
}

impl TargetModel for ProjectedSourceApprentice {
    fn predict_next(&self, s: &StateVector, _action_value: f64) -> StateVector {
        // the borrowed context pieces are cheap to rebuild per call; the
        // query path must be the one `projected_source_next` uses
        let ctx = TransferContext::with_gain_override(
            self.source_q.clone(),
            self.source_env.clone(),
            self.map.clone(),
            Box::new(NullModel),
            self.target_env.as_ref(),
            Some(1.0),
        )
        .expect("projected-source context");
        projected_source_next(&ctx, self.target_env.as_ref(), s).target_next
    }

    fn actuated_gain(&self) -> Option<f64> {
        None
    }
}

/// Placeholder model for contexts that never consult their apprentice.
struct NullModel;

impl TargetModel for NullModel {
    fn predict_next(&self, s: &StateVector, _action_value: f64) -> StateVector {
        s.clone()
    }
    fn actuated_gain(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// A model with a known sup-norm prediction error injected in one state
/// dimension; drives the model-error sensitivity studies.
pub struct PerturbedModel {
    pub base: Box<dyn TargetModel>,
    pub delta: f64,
    pub dim: usize,
}

impl TargetModel for PerturbedModel {
    fn predict_next(&self, s: &StateVector, action_value: f64) -> StateVector {
        let mut n = self.base.predict_next(s, action_value);
        n.0[self.dim] += self.delta;
        n
    }

    fn actuated_gain(&self) -> Option<f64> {
        self.base.actuated_gain()
    }
}

/// Diagnostics for fixtures with known true control gain: the gain ratio
/// alpha, the measured per-step residual between the true target step and
/// alpha times the apprentice prediction, and the average rewards of the
/// transfer policy and of a greedy oracle policy on the target.
#[derive(Debug, Clone)]
pub struct TheoremReport {
    pub alpha: f64,
    pub eps_sup: f64,
    pub eps_mean: f64,
    pub transfer_avg_reward: f64,
    pub oracle_avg_reward: f64,
}

impl TheoremReport {
    pub fn return_gap(&self) -> f64 {
        self.oracle_avg_reward - self.transfer_avg_reward
    }
}

pub fn theorem_diagnostics(
    ctx: &TransferContext,
    target_env: &mut dyn Environment,
    true_gain: f64,
    oracle_q: &LinearQ,
    episodes: usize,
    seed: u64,
) -> Result<TheoremReport> {
    let b_hat = ctx
        .gain
        .map(|k| 1.0 / k)
        .ok_or_else(|| Error::Precondition("theorem diagnostics need a scalar gain".into()))?;
    let alpha = true_gain / b_hat;
    let (trajs, record) = run_transfer(ctx, target_env, episodes, seed, false)?;
    let mut eps_sup = 0.0f64;
    let mut eps_sum = 0.0f64;
    let mut count = 0usize;
    for traj in &trajs {
        for t in &traj.transitions {
            let a_value = ctx.target_actions.value(t.action_index);
            let pred = ctx.model.predict_next(&t.state, a_value);
            let truth = target_env.peek(&t.state, t.action_index, 0).next;
            let mut e2 = 0.0;
            for d in 0..truth.dim() {
                let e = truth[d] - alpha * pred[d];
                e2 += e * e;
            }
            let e = e2.sqrt();
            eps_sup = eps_sup.max(e);
            eps_sum += e;
            count += 1;
        }
    }
    let horizon = target_env.spec().horizon;
    let (oracle_avg, _) = crate::fqi::evaluate_greedy(target_env, oracle_q, episodes, horizon, seed)?;
    Ok(TheoremReport {
        alpha,
        eps_sup,
        eps_mean: if count > 0 { eps_sum / count as f64 } else { 0.0 },
        transfer_avg_reward: record.average_reward,
        oracle_avg_reward: oracle_avg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apprentice::{fit_apprentice, ActionEncoding, FitOptions};
    use crate::env::{GridLayout, GridWorld, InvertedPendulum, PendulumParams};
    use crate::fqi::Basis;
    use crate::mdp::rollout_from;
    use std::sync::Arc;

    fn ip_pair() -> (InvertedPendulum, InvertedPendulum) {
        let p = PendulumParams::default();
        (InvertedPendulum::new(p.clone()), InvertedPendulum::new(p))
    }

    fn trained_ish_q(env: &InvertedPendulum) -> LinearQ {
        // weights do not need to be optimal for mechanical tests; a fixed
        // nonzero pattern makes greedy actions state-dependent
        let lo = &env.spec().state_lo;
        let hi = &env.spec().state_hi;
        let rbf = crate::fqi::RbfBasis::lattice(lo, hi, 20, vec![1.2, 1.2], true).unwrap();
        let mut q = LinearQ::zeros(Basis::Rbf(rbf), 3, 5e-3);
        for (a, row) in q.weights.iter_mut().enumerate() {
            for (f, w) in row.iter_mut().enumerate() {
                *w = ((a * 31 + f * 7) % 13) as f64 / 13.0 - 0.5;
            }
        }
        q
    }

    fn matched_context(
        q: &LinearQ,
        source: &InvertedPendulum,
        target: &InvertedPendulum,
    ) -> TransferContext {
        let model = ProjectedSourceApprentice {
            source_q: q.clone(),
            source_env: source.boxed_clone(),
            target_env: target.boxed_clone(),
            map: InterTaskMap::identity(2),
        };
        TransferContext::with_gain_override(
            q.clone(),
            source.boxed_clone(),
            InterTaskMap::identity(2),
            Box::new(model),
            target,
            Some(0.02 / (1.0 * 1.0 * 1.0)), // nominal per-step gain; unused since c = 0
        )
        .unwrap()
    }

    #[test]
    fn matched_apprentice_gives_exactly_zero_correction() {
        let (source, target) = ip_pair();
        let q = trained_ish_q(&source);
        let ctx = matched_context(&q, &source, &target);
        let mut env = target.clone();
        let s0 = env.reset(5);
        let mut s = s0;
        for _ in 0..50 {
            let projected = projected_source_next(&ctx, &env, &s);
            let corr = adaptive_correction(&ctx, &s, projected.source_action, &projected.target_next);
            for c in corr.state_correction.iter() {
                assert_eq!(*c, 0.0, "correction must be bit-zero in the matched case");
            }
            assert_eq!(corr.action_correction, 0.0);
            let d = composite_action(&ctx, &env, &s).unwrap();
            s = env.step_applied(d.applied_value(&ctx.target_actions)).unwrap().next;
        }
    }

    #[test]
    fn matched_transfer_reproduces_source_rollout_step_for_step() {
        let (source, target) = ip_pair();
        let q = trained_ish_q(&source);
        let ctx = matched_context(&q, &source, &target);
        let mut env_t = target.clone();
        let (trajs, record) = run_transfer(&ctx, &mut env_t, 1, 42, false).unwrap();
        // reference: greedy source rollout from the same seed
        let mut env_s = source.clone();
        let start = {
            let mut probe = source.clone();
            probe.reset(rng::mix(42, 0))
        };
        let oracle = rollout_from(
            &mut env_s,
            &crate::fqi::GreedyPolicy { q: &q },
            start,
            target.spec().horizon,
            rng::mix(42, 0),
        )
        .unwrap();
        assert_eq!(trajs[0].len(), oracle.len());
        for (a, b) in trajs[0].transitions.iter().zip(&oracle.transitions) {
            assert_eq!(a.state, b.state);
            assert_eq!(a.next_state, b.next_state);
            assert_eq!(a.reward, b.reward);
        }
        assert_eq!(record.correction_sup, 0.0);
        assert_eq!(record.clamp_events, 0);
    }

    #[test]
    fn gain_arithmetic_matches_k_equals_one_over_b() {
        struct FixedModel;
        impl TargetModel for FixedModel {
            fn predict_next(&self, s: &StateVector, _a: f64) -> StateVector {
                s.clone()
            }
            fn actuated_gain(&self) -> Option<f64> {
                Some(2.0)
            }
        }
        let (source, target) = ip_pair();
        let q = trained_ish_q(&source);
        let ctx = TransferContext::new(
            q,
            source.boxed_clone(),
            InterTaskMap::identity(2),
            Box::new(FixedModel),
            &target,
        )
        .unwrap();
        assert_eq!(ctx.mixture_gain(), Some(0.5));
        // c_actuated = 0.5 -> a_ad = K * c = 0.25
        let s = StateVector::new(vec![0.1, 0.0]);
        let reference = StateVector::new(vec![0.1, 0.5]);
        let corr = adaptive_correction(&ctx, &s, 1, &reference);
        assert!((corr.action_correction - 0.25).abs() < 1e-15);
        assert!((ctx.mixture_gain().unwrap() * 2.0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn b_min_floor_rejects_transfer() {
        struct TinyGain;
        impl TargetModel for TinyGain {
            fn predict_next(&self, s: &StateVector, _a: f64) -> StateVector {
                s.clone()
            }
            fn actuated_gain(&self) -> Option<f64> {
                Some(1e-9)
            }
        }
        let (source, target) = ip_pair();
        let q = trained_ish_q(&source);
        let result = TransferContext::new(
            q,
            source.boxed_clone(),
            InterTaskMap::identity(2),
            Box::new(TinyGain),
            &target,
        );
        assert!(matches!(result, Err(Error::Numerical(_))));
    }

    #[test]
    fn halved_control_gain_doubles_the_applied_action() {
        // target = source with control gain halved: the apprentice learns
        // B_hat = B/2 and the composite recovers the source trajectory
        let source = InvertedPendulum::new(PendulumParams::default());
        let mut weak_params = PendulumParams::default();
        weak_params.control_sign = 0.5; // halve the control-effective term
        let target = InvertedPendulum::new(weak_params);
        let q = trained_ish_q(&source);

        // identify the weak plant from random data
        let mut env = target.clone();
        let (data, _) = crate::apprentice::collect_policy_data(
            &mut env,
            &crate::mdp::RandomPolicy { n_actions: 3 },
            40,
            120,
            9,
        )
        .unwrap();
        let model = fit_apprentice(
            &data,
            &Basis::Raw { dim: 2, bias: true },
            &target.spec().action_set,
            &FitOptions {
                encoding: ActionEncoding::Scalar,
                angular_dims: vec![0],
                actuated_dim: Some(1),
                drop_unexcited: false,
            },
        )
        .unwrap();
        let b_weak = model.gain(1).unwrap();

        // the strong plant's gain should be about twice the weak one's
        let mut env2 = source.clone();
        let (data2, _) = crate::apprentice::collect_policy_data(
            &mut env2,
            &crate::mdp::RandomPolicy { n_actions: 3 },
            40,
            120,
            9,
        )
        .unwrap();
        let model2 = fit_apprentice(
            &data2,
            &Basis::Raw { dim: 2, bias: true },
            &source.spec().action_set,
            &FitOptions {
                encoding: ActionEncoding::Scalar,
                angular_dims: vec![0],
                actuated_dim: Some(1),
                drop_unexcited: false,
            },
        )
        .unwrap();
        let b_strong = model2.gain(1).unwrap();
        let ratio = b_strong / b_weak;
        assert!(
            (ratio - 2.0).abs() < 0.2,
            "gain ratio {ratio} should be near 2"
        );

        // with the weak-plant apprentice, corrections roughly double the
        // torque whenever the reference asks for full authority
        let ctx = TransferContext::new(
            q,
            source.boxed_clone(),
            InterTaskMap::identity(2),
            Box::new(model),
            &target,
        )
        .unwrap();
        let mut env_t = target.clone();
        let s = env_t.reset(3);
        let decision = composite_action(&ctx, &env_t, &s).unwrap();
        if let CompositeDecision::Continuous {
            applied_value,
            base_index,
            ..
        } = decision
        {
            let base = ctx.target_actions.value(base_index);
            if base != 0.0 {
                let boost = applied_value / base;
                assert!(
                    boost > 1.5 && boost < 2.6,
                    "expected roughly doubled action, got factor {boost}"
                );
            }
        } else {
            panic!("pendulum transfer must be continuous");
        }
    }

    #[test]
    fn windy_grid_discrete_resolution_counteracts_wind() {
        // wind pushes up; the reference asks for the unperturbed cell, so
        // the resolved action compensates by stepping into the wind
        let text = ". w+0+1 . .\n. w+0+1 . .\n. w+0+1 . G\n. w+0+1 . .\n";
        let layout = Arc::new(GridLayout::parse(text).unwrap());
        let source = GridWorld::new(layout.clone(), false, 40, 0.95);
        let target = GridWorld::new(layout, true, 40, 0.95);

        // a Q whose greedy action is always "right"
        let mut q = LinearQ::zeros(
            Basis::Tabular {
                dims: vec![4, 4],
            },
            4,
            1.0,
        );
        for w in q.weights[3].iter_mut() {
            *w = 1.0;
        }

        // apprentice that knows the windy plant exactly
        let env = target.clone();
        let mut data = Vec::new();
        for x in 0..4i64 {
            for y in 0..4i64 {
                if (x, y) == (3, 1) {
                    continue;
                }
                for a in 0..4 {
                    let s = StateVector::new(vec![x as f64, y as f64]);
                    let step = env.peek(&s, a, 0);
                    data.push(Transition {
                        state: s,
                        action_index: a,
                        next_state: step.next,
                        reward: step.reward,
                        terminal: step.terminal,
                    });
                }
            }
        }
        let model = fit_apprentice(
            &data,
            &Basis::Tabular {
                dims: vec![4, 4],
            },
            &target.spec().action_set,
            &FitOptions {
                encoding: ActionEncoding::Indicator,
                angular_dims: vec![],
                actuated_dim: None,
                drop_unexcited: true,
            },
        )
        .unwrap();
        let ctx = TransferContext::new(
            q,
            source.boxed_clone(),
            InterTaskMap::identity(2),
            Box::new(model),
            &target,
        )
        .unwrap();
        // from (0,2): source reference is (1,2); stepping right in the windy
        // grid would land (1,3); the resolver picks "down" (move down then
        // blown back up = stay)? No: prediction for down is (1,1)+wind...
        // enumerate and check the chosen action minimizes deviation.
        let s = StateVector::new(vec![0.0, 2.0]);
        let d = composite_action(&ctx, &target, &s).unwrap();
        if let CompositeDecision::Discrete {
            chosen_index,
            base_index,
            ..
        } = d
        {
            assert_eq!(base_index, 3, "greedy source action should be right");
            // the reference (1,2) is unreachable; both right (1,3) and down
            // (0->wind column? no: down from (0,2) is (0,1), no wind) miss;
            // verify the choice is the argmin of the apprentice deviation
            let reference = projected_source_next(&ctx, &target, &s).target_next;
            let mut best = (f64::INFINITY, 5usize);
            for a in 0..4 {
                let pred = ctx.model.predict_next(&s, ctx.target_actions.value(a));
                let dist = pred.distance(&reference);
                if dist < best.0 - 1e-12 {
                    best = (dist, a);
                }
            }
            assert_eq!(chosen_index, best.1);
        } else {
            panic!("grid transfer must use the discrete path");
        }
    }

    #[test]
    fn transfer_never_mutates_the_context() {
        let (source, target) = ip_pair();
        let q = trained_ish_q(&source);
        let ctx = matched_context(&q, &source, &target);
        let before: Vec<Vec<f64>> = ctx.source_q.weights.clone();
        let mut env = target.clone();
        let _ = run_transfer(&ctx, &mut env, 2, 7, false).unwrap();
        assert_eq!(ctx.source_q.weights, before);
    }

    #[test]
    fn composite_linearity_in_the_correction() {
        struct OffsetModel {
            env: Box<dyn Environment>,
            offset: f64,
        }
        impl TargetModel for OffsetModel {
            fn predict_next(&self, s: &StateVector, value: f64) -> StateVector {
                let mut n = self.env.peek_applied(s, value, 0).unwrap().next;
                n.0[1] += self.offset;
                n
            }
            fn actuated_gain(&self) -> Option<f64> {
                Some(0.02)
            }
        }
        let (source, target) = ip_pair();
        let q = trained_ish_q(&source);
        let ctx = TransferContext::new(
            q,
            source.boxed_clone(),
            InterTaskMap::identity(2),
            Box::new(OffsetModel {
                env: target.boxed_clone(),
                offset: 0.004,
            }),
            &target,
        )
        .unwrap();
        let mut env = target.clone();
        let s = env.reset(11);
        let d = composite_action(&ctx, &env, &s).unwrap();
        if let CompositeDecision::Continuous {
            applied_value,
            base_index,
            correction,
            clamped,
        } = d
        {
            assert!(!clamped);
            let base = ctx.target_actions.value(base_index);
            let k = ctx.mixture_gain().unwrap();
            assert!(
                (applied_value - base - k * correction.state_correction[1]).abs() < 1e-12,
                "composite action must equal base + K * c exactly"
            );
        }
    }
}
