//! Capillary imbibition toolkit: simulation of water uptake in porous
//! columns, monotone reconstruction of noisy uptake measurements, and
//! calibration of material parameters against data.
//!
//! The moisture equation is driven by a compactly supported absorption law
//! ([`absorption`]) and integrated with explicit schemes ([`solver`], with a
//! refinement study in [`convergence`]). Laboratory records load through
//! [`data`], get denoised by the monotone representation in [`reconstruct`],
//! and feed the swarm calibration in [`optimize`] with the losses of
//! [`metrics`].

pub mod absorption;
pub mod convergence;
pub mod data;
pub mod metrics;
pub mod optimize;
pub mod reconstruct;
pub mod series;
pub mod solver;

pub use absorption::AbsorptionLaw;
pub use series::ImbibitionSeries;
pub use solver::{BoundaryCondition, MaterialParams, Scheme, SimGrid};
