//! Planar excavator rock-capturing workbench: physics, environment, neural
//! networks, PPO training and evaluation.

// Validation writes `!(x > 0.0)` on purpose: it rejects NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod eval;
pub mod geom;
pub mod nn;
pub mod physics;
pub mod ppo;
pub mod provenance;
