//! Density-driven optimal control (D²OC) for multi-agent tracking of
//! time-varying reference densities.
//!
//! A swarm of discrete-time LTI agents tracks a drifting cloud of weighted
//! reference samples by minimizing local Wasserstein distances over a finite
//! horizon. Two closed-form quadratic-program controllers are provided: a
//! nominal one that stacks the current local barycenter across the horizon,
//! and a feedforward-augmented one that injects the barycenter drift
//! predicted from the reference velocity field. The `analysis` module
//! quantifies the lag reduction and the ultimate bound on the local
//! Wasserstein distance.
//!
//! Module map:
//! - [`dynamics`]: LTI models, output relative degree, lifted horizon matrices
//! - [`reference`]: sample clouds advected by a velocity field
//! - [`transport`]: local sample selection, barycenters, exact small-instance OT
//! - [`control`]: nominal and feedforward QP controllers, error decomposition
//! - [`swarm`]: multi-agent simulation loop with weight decay and min-consensus
//! - [`analysis`]: contraction factor, disturbance estimation, ultimate bound
//! - [`config`] / [`metrics`]: scenario description and run logging

pub mod analysis;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod metrics;
pub mod reference;
pub mod rng;
pub mod swarm;
pub mod transport;

pub use config::ScenarioConfig;
pub use swarm::{run_simulation, Simulation};
