//! Classical and quantum evolution of parametrized quantum systems.
//!
//! The crate compares the constrained classical propagation of a quantum
//! system with its exact quantum evolution:
//!
//! * [`manifold`] — generic evolution engine for any parametrized family of
//!   classical states, with mixed-ensemble support;
//! * [`phasespace`] — Wigner functions of truncated Fock states and Liouville
//!   transport of phase-space distributions along classical flows;
//! * [`kerr`] — Kerr-medium case study (classical flow, exact Fock
//!   propagation, phase-space panels);
//! * [`jaynes_cummings`] — semi-classical Jaynes-Cummings dynamics against
//!   the exact entangled solution;
//! * [`separable`] — K-separable covariance dynamics of coupled oscillator
//!   ensembles in a structured matrix algebra, with a dense oracle.

pub mod jaynes_cummings;
pub mod kerr;
pub mod manifold;
pub mod math;
pub mod ode;
pub mod phasespace;
pub mod separable;
