//! Per-experiment wiring: which environments, feature bases and apprentice
//! options each benchmark uses.

use std::sync::Arc;

use crate::apprentice::{ActionEncoding, FitOptions};
use crate::env::{
    grid, Bicycle, CartPole, GridLayout, GridWorld, InvertedPendulum, MountainCar,
    PendulumParams,
};
use crate::error::Result;
use crate::fqi::{Basis, RbfBasis};
use crate::harness::config::{ExperimentConfig, ExperimentId};
use crate::mdp::Environment;

pub struct TaskSetup {
    pub source_env: Box<dyn Environment>,
    pub target_env: Box<dyn Environment>,
    /// Q-function basis for source training.
    pub source_basis: Basis,
    /// Q-function basis for target-side baselines (UMA-TL, RL).
    pub target_basis: Basis,
    pub apprentice_basis: Basis,
    pub apprentice_fit: FitOptions,
    /// Same-domain transfers use the exact identity map.
    pub identity_map: bool,
}

fn ip_q_basis(env: &dyn Environment) -> Result<Basis> {
    let rbf = RbfBasis::lattice(
        &env.spec().state_lo,
        &env.spec().state_hi,
        20,
        vec![1.2, 1.2],
        false,
    )?;
    Ok(Basis::Rbf(rbf))
}

pub fn build_task(cfg: &ExperimentConfig) -> Result<TaskSetup> {
    match cfg.experiment {
        ExperimentId::Grid => {
            let layout = if cfg.grid_layout == "builtin" {
                GridLayout::parse(grid::DEFAULT_LAYOUT)?
            } else {
                GridLayout::parse(&std::fs::read_to_string(&cfg.grid_layout)?)?
            };
            let layout = Arc::new(layout);
            let horizon = cfg.fqi_target.steps_per_episode;
            let source = GridWorld::new(layout.clone(), false, horizon, cfg.fqi_source.discount);
            let target = GridWorld::new(layout.clone(), true, horizon, cfg.fqi_target.discount);
            let dims = vec![layout.width, layout.height];
            Ok(TaskSetup {
                source_env: Box::new(source),
                target_env: Box::new(target),
                source_basis: Basis::Tabular { dims: dims.clone() },
                target_basis: Basis::Tabular { dims: dims.clone() },
                apprentice_basis: Basis::Tabular { dims },
                apprentice_fit: FitOptions {
                    encoding: ActionEncoding::Indicator,
                    angular_dims: vec![],
                    actuated_dim: None,
                    drop_unexcited: true,
                },
                identity_map: true,
            })
        }
        ExperimentId::IpTimevarying | ExperimentId::NegativeTransfer => {
            let mut source_params = PendulumParams::default();
            source_params.horizon = cfg.fqi_source.steps_per_episode;
            source_params.discount = cfg.fqi_source.discount;
            let mut target_params = source_params.clone();
            target_params.horizon = cfg.fqi_target.steps_per_episode;
            target_params.discount = cfg.fqi_target.discount;
            if cfg.experiment == ExperimentId::IpTimevarying {
                target_params.time_varying = true;
            } else {
                target_params.control_sign = -1.0;
            }
            let source = InvertedPendulum::new(source_params);
            let target = InvertedPendulum::new(target_params);
            let source_basis = Basis::Rbf(RbfBasis::lattice(
                &source.spec().state_lo,
                &source.spec().state_hi,
                cfg.source_centers,
                cfg.source_sigma.clone(),
                false,
            )?);
            let target_basis = ip_q_basis(&target)?;
            Ok(TaskSetup {
                source_env: Box::new(source),
                target_env: Box::new(target),
                source_basis,
                target_basis,
                apprentice_basis: Basis::Raw { dim: 2, bias: true },
                apprentice_fit: FitOptions {
                    encoding: ActionEncoding::Scalar,
                    angular_dims: vec![0],
                    actuated_dim: Some(1),
                    drop_unexcited: false,
                },
                identity_map: true,
            })
        }
        ExperimentId::McToIp => {
            let source = MountainCar::new(cfg.fqi_source.steps_per_episode, cfg.fqi_source.discount);
            let mut target_params = PendulumParams::default();
            target_params.horizon = cfg.fqi_target.steps_per_episode;
            target_params.discount = cfg.fqi_target.discount;
            let target = InvertedPendulum::new(target_params);
            let source_basis = Basis::Rbf(RbfBasis::lattice(
                &source.spec().state_lo,
                &source.spec().state_hi,
                cfg.source_centers,
                cfg.source_sigma.clone(),
                false,
            )?);
            let target_basis = ip_q_basis(&target)?;
            Ok(TaskSetup {
                source_env: Box::new(source),
                target_env: Box::new(target),
                source_basis,
                target_basis,
                apprentice_basis: Basis::Raw { dim: 2, bias: true },
                apprentice_fit: FitOptions {
                    encoding: ActionEncoding::Scalar,
                    angular_dims: vec![0],
                    actuated_dim: Some(1),
                    drop_unexcited: false,
                },
                identity_map: false,
            })
        }
        ExperimentId::CartpoleToBicycle => {
            let source = CartPole::new(cfg.fqi_source.steps_per_episode, cfg.fqi_source.discount);
            let horizon = (cfg.bicycle_cap_seconds / crate::env::bicycle::DT).round() as usize;
            let target = Bicycle::new(horizon, cfg.fqi_target.discount);
            Ok(TaskSetup {
                source_env: Box::new(source),
                target_env: Box::new(target),
                source_basis: Basis::Raw { dim: 4, bias: true },
                target_basis: Basis::Raw { dim: 4, bias: true },
                apprentice_basis: Basis::Raw { dim: 4, bias: true },
                apprentice_fit: FitOptions {
                    encoding: ActionEncoding::Scalar,
                    angular_dims: vec![],
                    actuated_dim: Some(1),
                    drop_unexcited: false,
                },
                identity_map: false,
            })
        }
    }
}
