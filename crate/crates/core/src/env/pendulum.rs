//! Inverted pendulum swing-up and balance. theta = 0 is upright; theta is
//! wrapped to [-pi, pi) and theta_dot clamped to [-pi, pi].
//!
//! The time-varying variant modulates length and mass with the episode step
//! index i: L_i = L0 + 0.5 cos(pi i / 50), M_i likewise, so both stay in
//! [0.5, 1.5].

use std::f64::consts::PI;

use crate::error::Result;
use crate::mdp::{
    angle_diff, wrap_angle, ActionSet, Environment, InitialDistribution, MdpSpec, StateVector,
    Step,
};
use crate::rng;

/// Where episodes start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PendulumStart {
    /// Hanging straight down with small jitter (the swing-up task).
    SwingUp,
    /// Near upright (the balance task, used by model-error studies).
    Balance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumParams {
    pub length0: f64,
    pub mass0: f64,
    pub gravity: f64,
    pub damping: f64,
    pub torque_limit: f64,
    pub dt: f64,
    pub time_varying: bool,
    /// -1.0 flips the sign of the control-effective term (the negative
    /// transfer fixture); +1.0 otherwise.
    pub control_sign: f64,
    pub start: PendulumStart,
    pub horizon: usize,
    pub discount: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        // The torque limit is below the max gravity torque M*g*L so the
        // pendulum cannot be lifted directly from hanging and must swing.
        PendulumParams {
            length0: 1.0,
            mass0: 1.0,
            gravity: 9.81,
            damping: 0.1,
            torque_limit: 7.0,
            dt: 0.02,
            time_varying: false,
            control_sign: 1.0,
            start: PendulumStart::SwingUp,
            horizon: 300,
            discount: 0.98,
        }
    }
}

#[derive(Clone)]
pub struct InvertedPendulum {
    params: PendulumParams,
    spec: MdpSpec,
    state: StateVector,
    episode_step: usize,
    steps: u64,
}

impl InvertedPendulum {
    pub fn new(params: PendulumParams) -> Self {
        let tau = params.torque_limit;
        let initial_distribution = match params.start {
            PendulumStart::SwingUp => InitialDistribution::CenterJitter {
                center: vec![PI, 0.0],
                jitter: vec![0.1, 0.05],
            },
            PendulumStart::Balance => InitialDistribution::CenterJitter {
                center: vec![0.0, 0.0],
                jitter: vec![0.3, 0.1],
            },
        };
        // max |r| = 10 pi^2 + 5 pi^2
        let reward_bound = 15.0 * PI * PI + 1e-9;
        let spec = MdpSpec {
            state_dim: 2,
            action_set: ActionSet::new(vec![-tau, 0.0, tau]).unwrap(),
            horizon: params.horizon,
            discount: params.discount,
            initial_distribution,
            reward_bound,
            state_lo: vec![-PI, -PI],
            state_hi: vec![PI, PI],
        };
        InvertedPendulum {
            params,
            spec,
            state: StateVector::new(vec![PI, 0.0]),
            episode_step: 0,
            steps: 0,
        }
    }

    pub fn params(&self) -> &PendulumParams {
        &self.params
    }

    /// Length and mass at episode step i.
    pub fn params_at(&self, step_index: usize) -> (f64, f64) {
        if self.params.time_varying {
            let phase = (PI * step_index as f64 / 50.0).cos();
            (
                self.params.length0 + 0.5 * phase,
                self.params.mass0 + 0.5 * phase,
            )
        } else {
            (self.params.length0, self.params.mass0)
        }
    }

    /// Quadratic state cost; maximal (zero) upright at rest.
    pub fn reward_at(state: &StateVector) -> f64 {
        -10.0 * state[0] * state[0] - 5.0 * state[1] * state[1]
    }

    fn transition(&self, s: &StateVector, torque: f64, step_index: usize) -> Step {
        let (l, m) = self.params_at(step_index);
        let p = &self.params;
        let (th, thd) = (s[0], s[1]);
        let acc = (p.gravity / l) * th.sin() + p.control_sign * torque / (m * l * l)
            - p.damping * thd;
        let thd2 = (thd + p.dt * acc).clamp(-PI, PI);
        let th2 = wrap_angle(th + p.dt * thd2);
        let next = StateVector::new(vec![th2, thd2]);
        let reward = Self::reward_at(&next);
        Step {
            next,
            reward,
            terminal: false,
        }
    }
}

impl Environment for InvertedPendulum {
    fn spec(&self) -> &MdpSpec {
        &self.spec
    }

    fn name(&self) -> &str {
        if self.params.control_sign < 0.0 {
            "pendulum_sign_flipped"
        } else if self.params.time_varying {
            "pendulum_time_varying"
        } else {
            "pendulum"
        }
    }

    fn state(&self) -> &StateVector {
        &self.state
    }

    fn reset(&mut self, seed: u64) -> StateVector {
        let mut r = rng::stream(seed, rng::INIT_STREAM);
        let s = self.spec.initial_distribution.sample(&mut r);
        self.state = self.canonicalize(s);
        self.episode_step = 0;
        self.state.clone()
    }

    fn reset_to(&mut self, state: StateVector) {
        self.state = self.canonicalize(state);
        self.episode_step = 0;
    }

    fn step(&mut self, action_index: usize) -> Step {
        let torque = self.spec.action_set.value(action_index);
        let step = self.transition(&self.state, torque, self.episode_step);
        self.state = step.next.clone();
        self.episode_step += 1;
        self.steps += 1;
        step
    }

    fn step_applied(&mut self, value: f64) -> Result<Step> {
        let step = self.transition(&self.state, value, self.episode_step);
        self.state = step.next.clone();
        self.episode_step += 1;
        self.steps += 1;
        Ok(step)
    }

    fn supports_continuous_action(&self) -> bool {
        true
    }

    fn peek(&self, state: &StateVector, action_index: usize, step_index: usize) -> Step {
        self.transition(state, self.spec.action_set.value(action_index), step_index)
    }

    fn peek_applied(&self, state: &StateVector, value: f64, step_index: usize) -> Result<Step> {
        Ok(self.transition(state, value, step_index))
    }

    fn reward_of(&self, _state: &StateVector, _action_index: usize, next: &StateVector) -> f64 {
        Self::reward_at(next)
    }

    fn is_terminal(&self, _state: &StateVector) -> bool {
        false
    }

    fn canonicalize(&self, state: StateVector) -> StateVector {
        StateVector::new(vec![wrap_angle(state[0]), state[1].clamp(-PI, PI)])
    }

    /// Hanging-centred chart: theta in [0, 2pi) with the cut at upright, so
    /// swing data forms one connected blob for alignment.
    fn alignment_coords(&self, state: &StateVector) -> StateVector {
        StateVector::new(vec![state[0].rem_euclid(2.0 * PI), state[1]])
    }

    fn from_alignment_coords(&self, coords: &StateVector) -> StateVector {
        StateVector::new(vec![wrap_angle(coords[0]), coords[1].clamp(-PI, PI)])
    }

    fn actuated_dim(&self) -> Option<usize> {
        Some(1)
    }

    fn angular_dims(&self) -> &[usize] {
        &[0]
    }

    fn step_index(&self) -> usize {
        self.episode_step
    }

    fn steps_taken(&self) -> u64 {
        self.steps
    }

    fn boxed_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}

/// Convenience check used in tests: wrap-aware equality of two angles.
pub fn angles_close(a: f64, b: f64, tol: f64) -> bool {
    angle_diff(a, b).abs() <= tol
}
