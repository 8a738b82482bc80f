//! Under-powered car on a hill. Throttle alone cannot climb the slope; the
//! agent has to rock back and forth to build momentum.

use crate::error::Result;
use crate::mdp::{
    ActionSet, Environment, InitialDistribution, MdpSpec, StateVector, Step,
};
use crate::rng;

pub const POSITION_LO: f64 = -1.2;
pub const POSITION_HI: f64 = 0.6;
pub const VELOCITY_LO: f64 = -0.07;
pub const VELOCITY_HI: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.6;

#[derive(Clone)]
pub struct MountainCar {
    spec: MdpSpec,
    state: StateVector,
    episode_step: usize,
    steps: u64,
}

impl MountainCar {
    pub fn new(horizon: usize, discount: f64) -> Self {
        let spec = MdpSpec {
            state_dim: 2,
            action_set: ActionSet::new(vec![-1.0, 0.0, 1.0]).unwrap(),
            horizon,
            discount,
            initial_distribution: InitialDistribution::UniformBox {
                lo: vec![-0.6, 0.0],
                hi: vec![-0.4, 0.0],
            },
            reward_bound: (POSITION_HI - POSITION_LO) * (POSITION_HI - POSITION_LO) + 1e-9,
            state_lo: vec![POSITION_LO, VELOCITY_LO],
            state_hi: vec![POSITION_HI, VELOCITY_HI],
        };
        MountainCar {
            spec,
            state: StateVector::new(vec![-0.5, 0.0]),
            episode_step: 0,
            steps: 0,
        }
    }

    fn transition(&self, s: &StateVector, throttle: f64) -> Step {
        let (x, v) = (s[0], s[1]);
        let mut v2 = v + 0.001 * throttle - 0.0025 * (3.0 * x).cos();
        v2 = v2.clamp(VELOCITY_LO, VELOCITY_HI);
        let mut x2 = x + v2;
        if x2 < POSITION_LO {
            // inelastic left wall
            x2 = POSITION_LO;
            v2 = 0.0;
        }
        if x2 > POSITION_HI {
            x2 = POSITION_HI;
        }
        let terminal = x2 >= GOAL_POSITION;
        let d = x2 - GOAL_POSITION;
        Step {
            next: StateVector::new(vec![x2, v2]),
            reward: -d * d,
            terminal,
        }
    }
}

impl Environment for MountainCar {
    fn spec(&self) -> &MdpSpec {
        &self.spec
    }

    fn name(&self) -> &str {
        "mountain_car"
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
        self.state = self.canonicalize(state);
        self.episode_step = 0;
    }

    fn step(&mut self, action_index: usize) -> Step {
        let throttle = self.spec.action_set.value(action_index);
        let step = self.transition(&self.state, throttle);
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
        let d = next[0] - GOAL_POSITION;
        -d * d
    }

    fn is_terminal(&self, state: &StateVector) -> bool {
        state[0] >= GOAL_POSITION
    }

    fn canonicalize(&self, state: StateVector) -> StateVector {
        StateVector::new(vec![
            state[0].clamp(POSITION_LO, POSITION_HI),
            state[1].clamp(VELOCITY_LO, VELOCITY_HI),
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
    fn goal_is_terminal_with_zero_reward() {
        let mc = MountainCar::new(200, 0.98);
        let s = StateVector::new(vec![0.58, 0.05]);
        let step = mc.peek(&s, 2, 0);
        assert!(step.terminal);
        assert_eq!(step.reward, 0.0);
        assert_eq!(step.next[0], GOAL_POSITION);
    }

    #[test]
    fn left_wall_is_inelastic() {
        let mc = MountainCar::new(200, 0.98);
        let s = StateVector::new(vec![-1.2, -0.05]);
        let step = mc.peek(&s, 0, 0);
        assert_eq!(step.next[0], POSITION_LO);
        assert_eq!(step.next[1], 0.0);
    }

    #[test]
    fn full_throttle_from_valley_cannot_climb_directly() {
        let mut mc = MountainCar::new(10_000, 0.98);
        mc.reset_to(StateVector::new(vec![-0.523_598_8, 0.0])); // valley bottom
        let mut reached = false;
        let mut prev_x = -0.6;
        let mut advancing = true;
        for _ in 0..400 {
            let step = mc.step(2); // full throttle right
            if step.terminal {
                reached = true;
                break;
            }
            // once the car starts sliding back the direct attempt has failed
            if step.next[0] < prev_x {
                advancing = false;
                break;
            }
            prev_x = step.next[0];
        }
        assert!(!reached && !advancing, "car climbed directly; it should be under-powered");
    }

    #[test]
    fn bounds_hold_under_random_actions() {
        let mut mc = MountainCar::new(10_000, 0.98);
        mc.reset(9);
        let mut rng = crate::rng::stream(9, crate::rng::POLICY_STREAM);
        use rand::Rng as _;
        for _ in 0..10_000 {
            let a = rng.random_range(0..3);
            let step = mc.step(a);
            let s = &step.next;
            assert!(s[0] >= POSITION_LO && s[0] <= POSITION_HI);
            assert!(s[1] >= VELOCITY_LO && s[1] <= VELOCITY_HI);
            assert!(step.reward <= 0.0);
            if step.terminal {
                mc.reset(10);
            }
        }
    }
}
