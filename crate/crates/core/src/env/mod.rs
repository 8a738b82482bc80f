//! The benchmark dynamical systems: grid world (plain and windy), inverted
//! pendulum (stationary, time-varying and sign-flipped), mountain car,
//! cart-pole and bicycle balance.

pub mod bicycle;
pub mod cartpole;
pub mod grid;
pub mod mountain_car;
pub mod pendulum;

pub use bicycle::Bicycle;
pub use cartpole::CartPole;
pub use grid::{GridLayout, GridWorld};
pub use mountain_car::MountainCar;
pub use pendulum::{InvertedPendulum, PendulumParams, PendulumStart};
