//! Bicycle balance at constant forward speed, after Randlov & Alstrom's
//! model. State (theta, theta_dot, omega, omega_dot): handlebar angle/rate
//! and roll angle/rate. The only control is handlebar torque; the rider's
//! centre-of-gravity displacement enters as per-step uniform noise.
//!
//! The forward speed (2.778 m/s) is below the self-stabilising critical
//! velocity, so an uncontrolled bike falls within a few seconds.

use std::f64::consts::PI;

use rand::Rng as _;

use crate::error::Result;
use crate::mdp::{
    ActionSet, Environment, InitialDistribution, MdpSpec, StateVector, Step,
};
use crate::rng::{self, Rng};

pub const DT: f64 = 0.01;
pub const FORWARD_SPEED: f64 = 10.0 / 3.6; // 2.778 m/s
pub const GRAVITY: f64 = 9.82;
/// |omega| beyond this counts as a fall (12 degrees).
pub const FALL_THRESHOLD: f64 = PI / 15.0;
/// Handlebar angle is mechanically limited to +/- 80 degrees.
pub const HANDLEBAR_LIMIT: f64 = 80.0 * PI / 180.0;
pub const CG_NOISE_AMPLITUDE: f64 = 0.02;
pub const FALL_PENALTY: f64 = -100.0;

// rigid-body constants from the Randlov formulation
const BIKE_MASS: f64 = 15.0;
const WHEEL_MASS: f64 = 1.7;
const RIDER_MASS: f64 = 60.0;
const CM_HEIGHT: f64 = 0.94; // h
const CM_HORIZONTAL: f64 = 0.66; // c
const RIDER_CM_OFFSET: f64 = 0.30; // dCM
const WHEEL_RADIUS: f64 = 0.34;
const WHEELBASE: f64 = 1.11;

#[derive(Clone)]
pub struct Bicycle {
    spec: MdpSpec,
    state: StateVector,
    episode_step: usize,
    steps: u64,
    noise: Rng,
}

impl Bicycle {
    pub fn new(horizon: usize, discount: f64) -> Self {
        let rate_cap = 2.0 * PI;
        let spec = MdpSpec {
            state_dim: 4,
            action_set: ActionSet::new(vec![-2.0, 0.0, 2.0]).unwrap(),
            horizon,
            discount,
            initial_distribution: InitialDistribution::CenterJitter {
                center: vec![0.0; 4],
                jitter: vec![0.02; 4],
            },
            reward_bound: FALL_PENALTY.abs() + 1e-9,
            state_lo: vec![-HANDLEBAR_LIMIT, -rate_cap, -PI / 2.0, -rate_cap],
            state_hi: vec![HANDLEBAR_LIMIT, rate_cap, PI / 2.0, rate_cap],
        };
        Bicycle {
            spec,
            state: StateVector::new(vec![0.0; 4]),
            episode_step: 0,
            steps: 0,
            noise: rng::stream(0, rng::ENV_STREAM),
        }
    }

    /// One integration step; `cg_offset` is the rider CG displacement (m).
    fn transition(&self, s: &StateVector, torque: f64, cg_offset: f64) -> Step {
        let (th, thd, om, omd) = (s[0], s[1], s[2], s[3]);
        let total_mass = BIKE_MASS + RIDER_MASS;
        let inertia_bike = 13.0 / 3.0 * BIKE_MASS * CM_HEIGHT * CM_HEIGHT
            + RIDER_MASS * (CM_HEIGHT + RIDER_CM_OFFSET) * (CM_HEIGHT + RIDER_CM_OFFSET);
        let inertia_dc = WHEEL_MASS * WHEEL_RADIUS * WHEEL_RADIUS;
        let inertia_dv = 1.5 * WHEEL_MASS * WHEEL_RADIUS * WHEEL_RADIUS;
        let inertia_dl = 0.5 * WHEEL_MASS * WHEEL_RADIUS * WHEEL_RADIUS;
        let sigma_dot = FORWARD_SPEED / WHEEL_RADIUS;

        // turn radii; straight line when the handlebar is centred
        let (inv_rf, inv_rb, inv_rcm) = if th == 0.0 {
            (0.0, 0.0, 0.0)
        } else {
            let inv_rf = th.sin().abs() / WHEELBASE;
            let inv_rb = th.tan().abs() / WHEELBASE;
            let rcm = ((WHEELBASE - CM_HORIZONTAL) * (WHEELBASE - CM_HORIZONTAL)
                + (WHEELBASE / th.tan()) * (WHEELBASE / th.tan()))
            .sqrt();
            (inv_rf, inv_rb, 1.0 / rcm)
        };

        let phi = om + (cg_offset / CM_HEIGHT).atan();
        let om_acc = (total_mass * CM_HEIGHT * GRAVITY * phi.sin()
            - phi.cos()
                * (inertia_dc * sigma_dot * thd
                    + th.signum()
                        * FORWARD_SPEED
                        * FORWARD_SPEED
                        * (WHEEL_MASS * WHEEL_RADIUS * (inv_rf + inv_rb)
                            + total_mass * CM_HEIGHT * inv_rcm)))
            / inertia_bike;
        let th_acc = (torque - inertia_dv * sigma_dot * omd) / inertia_dl;

        let rate_cap = 2.0 * PI;
        let omd2 = (omd + DT * om_acc).clamp(-rate_cap, rate_cap);
        let om2 = om + DT * omd2;
        let mut thd2 = (thd + DT * th_acc).clamp(-rate_cap, rate_cap);
        let mut th2 = th + DT * thd2;
        if th2.abs() > HANDLEBAR_LIMIT {
            th2 = th2.clamp(-HANDLEBAR_LIMIT, HANDLEBAR_LIMIT);
            thd2 = 0.0;
        }
        let next = StateVector::new(vec![th2, thd2, om2.clamp(-PI / 2.0, PI / 2.0), omd2]);
        let terminal = next[2].abs() > FALL_THRESHOLD;
        Step {
            reward: if terminal { FALL_PENALTY } else { 1.0 },
            next,
            terminal,
        }
    }
}

impl Environment for Bicycle {
    fn spec(&self) -> &MdpSpec {
        &self.spec
    }

    fn name(&self) -> &str {
        "bicycle"
    }

    fn state(&self) -> &StateVector {
        &self.state
    }

    fn reset(&mut self, seed: u64) -> StateVector {
        let mut r = rng::stream(seed, rng::INIT_STREAM);
        self.state = self.spec.initial_distribution.sample(&mut r);
        self.noise = rng::stream(seed, rng::ENV_STREAM);
        self.episode_step = 0;
        self.state.clone()
    }

    fn reset_to(&mut self, state: StateVector) {
        self.state = state;
        self.episode_step = 0;
    }

    fn step(&mut self, action_index: usize) -> Step {
        let torque = self.spec.action_set.value(action_index);
        let d = self
            .noise
            .random_range(-CG_NOISE_AMPLITUDE..CG_NOISE_AMPLITUDE);
        let step = self.transition(&self.state, torque, d);
        self.state = step.next.clone();
        self.episode_step += 1;
        self.steps += 1;
        step
    }

    fn step_applied(&mut self, value: f64) -> Result<Step> {
        let d = self
            .noise
            .random_range(-CG_NOISE_AMPLITUDE..CG_NOISE_AMPLITUDE);
        let step = self.transition(&self.state, value, d);
        self.state = step.next.clone();
        self.episode_step += 1;
        self.steps += 1;
        Ok(step)
    }

    fn supports_continuous_action(&self) -> bool {
        true
    }

    /// Noise-free model query.
    fn peek(&self, state: &StateVector, action_index: usize, _step_index: usize) -> Step {
        self.transition(state, self.spec.action_set.value(action_index), 0.0)
    }

    fn peek_applied(&self, state: &StateVector, value: f64, _step_index: usize) -> Result<Step> {
        Ok(self.transition(state, value, 0.0))
    }

    fn reward_of(&self, _state: &StateVector, _action_index: usize, next: &StateVector) -> f64 {
        if next[2].abs() > FALL_THRESHOLD {
            FALL_PENALTY
        } else {
            1.0
        }
    }

    fn is_terminal(&self, state: &StateVector) -> bool {
        state[2].abs() > FALL_THRESHOLD
    }

    fn canonicalize(&self, state: StateVector) -> StateVector {
        let rate_cap = 2.0 * PI;
        StateVector::new(vec![
            state[0].clamp(-HANDLEBAR_LIMIT, HANDLEBAR_LIMIT),
            state[1].clamp(-rate_cap, rate_cap),
            state[2].clamp(-PI / 2.0, PI / 2.0),
            state[3].clamp(-rate_cap, rate_cap),
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
