//! Cart-pole balance. State (x, x_dot, theta, theta_dot); the pole is
//! non-minimum phase: it initially rotates opposite to the cart's motion.

use crate::error::Result;
use crate::mdp::{
    ActionSet, Environment, InitialDistribution, MdpSpec, StateVector, Step,
};
use crate::rng;

pub const GRAVITY: f64 = 9.81;
pub const CART_MASS: f64 = 1.0;
pub const POLE_MASS: f64 = 0.1;
pub const HALF_LENGTH: f64 = 0.5;
pub const DT: f64 = 0.02;
/// |theta| beyond this counts as a fall (12 degrees).
pub const FALL_THRESHOLD: f64 = 12.0 * std::f64::consts::PI / 180.0;
pub const TRACK_LIMIT: f64 = 2.4;

#[derive(Clone)]
pub struct CartPole {
    spec: MdpSpec,
    state: StateVector,
    episode_step: usize,
    steps: u64,
}

impl CartPole {
    pub fn new(horizon: usize, discount: f64) -> Self {
        let spec = MdpSpec {
            state_dim: 4,
            action_set: ActionSet::new(vec![-20.0, 0.0, 20.0]).unwrap(),
            horizon,
            discount,
            initial_distribution: InitialDistribution::CenterJitter {
                center: vec![0.0; 4],
                jitter: vec![0.05; 4],
            },
            reward_bound: 1.0 + 1e-9,
            state_lo: vec![-TRACK_LIMIT, -10.0, -FALL_THRESHOLD, -10.0],
            state_hi: vec![TRACK_LIMIT, 10.0, FALL_THRESHOLD, 10.0],
        };
        CartPole {
            spec,
            state: StateVector::new(vec![0.0; 4]),
            episode_step: 0,
            steps: 0,
        }
    }

    fn fallen(s: &StateVector) -> bool {
        s[2].abs() > FALL_THRESHOLD || s[0].abs() > TRACK_LIMIT
    }

    fn transition(&self, s: &StateVector, force: f64) -> Step {
        let (x, xd, th, thd) = (s[0], s[1], s[2], s[3]);
        let total_mass = CART_MASS + POLE_MASS;
        let pml = POLE_MASS * HALF_LENGTH;
        let cos = th.cos();
        let sin = th.sin();
        let temp = (force + pml * thd * thd * sin) / total_mass;
        let th_acc =
            (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total_mass));
        let x_acc = temp - pml * th_acc * cos / total_mass;
        let xd2 = (xd + DT * x_acc).clamp(-10.0, 10.0);
        let x2 = x + DT * xd2;
        let thd2 = (thd + DT * th_acc).clamp(-10.0, 10.0);
        let th2 = th + DT * thd2;
        let next = StateVector::new(vec![x2, xd2, th2, thd2]);
        let terminal = Self::fallen(&next);
        Step {
            reward: if terminal { 0.0 } else { 1.0 },
            next,
            terminal,
        }
    }

    /// Total mechanical energy (kinetic + pole potential); used by the
    /// work-energy audit in tests.
    pub fn energy(s: &StateVector) -> f64 {
        let (xd, th, thd) = (s[1], s[2], s[3]);
        let cart_ke = 0.5 * CART_MASS * xd * xd;
        // pole CM velocity = cart velocity + rotation about the pivot
        let vx = xd + HALF_LENGTH * thd * th.cos();
        let vy = -HALF_LENGTH * thd * th.sin();
        let pole_ke = 0.5 * POLE_MASS * (vx * vx + vy * vy);
        let inertia = POLE_MASS * HALF_LENGTH * HALF_LENGTH / 3.0;
        let rot_ke = 0.5 * inertia * thd * thd;
        let pe = POLE_MASS * GRAVITY * HALF_LENGTH * th.cos();
        cart_ke + pole_ke + rot_ke + pe
    }
}

impl Environment for CartPole {
    fn spec(&self) -> &MdpSpec {
        &self.spec
    }

    fn name(&self) -> &str {
        "cartpole"
    }

    fn state(&self) -> &StateVector {
        &self.state
    }

    fn reset(&mut self, seed: u64) -> StateVector {
        let mut r = rng::stream(seed, rng::INIT_STREAM);
        self.state = self.spec.initial_distribution.sample(&mut r);
        self.episode_step = 0;
        self.state.clone()
    }

    fn reset_to(&mut self, state: StateVector) {
        self.state = state;
        self.episode_step = 0;
    }

    fn step(&mut self, action_index: usize) -> Step {
        let force = self.spec.action_set.value(action_index);
        let step = self.transition(&self.state, force);
        self.state = step.next.clone();
        self.episode_step += 1;
        self.steps += 1;
        step
    }

    fn step_applied(&mut self, value: f64) -> Result<Step> {
        let step = self.transition(&self.state, value);
        self.state = step.next.clone();
        self.episode_step += 1;
        self.steps += 1;
        Ok(step)
    }

    fn supports_continuous_action(&self) -> bool {
        true
    }

    fn peek(&self, state: &StateVector, action_index: usize, _step_index: usize) -> Step {
        self.transition(state, self.spec.action_set.value(action_index))
    }

    fn peek_applied(&self, state: &StateVector, value: f64, _step_index: usize) -> Result<Step> {
        Ok(self.transition(state, value))
    }

    fn reward_of(&self, _state: &StateVector, _action_index: usize, next: &StateVector) -> f64 {
        if Self::fallen(next) {
            0.0
        } else {
            1.0
        }
    }

    fn is_terminal(&self, state: &StateVector) -> bool {
        Self::fallen(state)
    }

    fn canonicalize(&self, state: StateVector) -> StateVector {
        StateVector::new(vec![
            state[0].clamp(-TRACK_LIMIT, TRACK_LIMIT),
            state[1].clamp(-10.0, 10.0),
            state[2],
            state[3].clamp(-10.0, 10.0),
        ])
    }

    fn actuated_dim(&self) -> Option<usize> {
        Some(1)
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unforced_equilibrium_holds() {
        let cp = CartPole::new(500, 0.98);
        let s = StateVector::new(vec![0.0; 4]);
        let step = cp.peek(&s, 1, 0);
        assert_eq!(step.next.as_slice(), &[0.0; 4]);
        assert_eq!(step.reward, 1.0);
        assert!(!step.terminal);
    }

    #[test]
    fn pole_initially_opposes_cart_motion() {
        let cp = CartPole::new(500, 0.98);
        let s = StateVector::new(vec![0.0; 4]);
        let step = cp.peek(&s, 2, 0); // +20 N
        assert!(step.next[1] > 0.0, "cart should accelerate forward");
        assert!(step.next[3] < 0.0, "pole should rotate opposite the push");
    }

    #[test]
    fn fall_terminates() {
        let cp = CartPole::new(500, 0.98);
        let s = StateVector::new(vec![0.0, 0.0, 0.2, 2.0]);
        let step = cp.peek(&s, 1, 0);
        assert!(step.terminal);
        assert_eq!(step.reward, 0.0);
    }
}
