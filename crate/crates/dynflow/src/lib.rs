//! dynflow: minimizing-movement solvers and diagnostics for gradient flows
//! of time-dependent energies on time-dependent metric, probability, and
//! Hilbert spaces.
//!
//! The crate is organized around a generic proximal engine ([`mms`]) driven
//! by three concrete problem families:
//!
//! * [`entropy`] — JKO steps for the relative entropy under a time-indexed
//!   Kantorovich distance, with Fisher-information and dissipation
//!   diagnostics and the identification test against the forward adjoint
//!   heat flow;
//! * [`dirichlet`] — time-dependent Dirichlet forms on weighted graphs,
//!   heat and adjoint heat propagators with their exact algebraic
//!   relationships, and a finite-dimensional quadratic testbed;
//! * [`transport`] — the exact L²-Kantorovich solver, entropic scaling
//!   iterations, and the action-minimizing dynamic distance.
//!
//! [`space`] holds the time-dependent metric/measure families and
//! [`harness`] the scenario runner behind the `dynflow` CLI.
//!
//! All numerics are generic over the floating-point scalar through
//! [`scalar::Scalar`]; the `*64` aliases below fix `f64` for the common
//! case.

pub mod linalg;
pub mod mms;
pub mod quadrature;
pub mod scalar;
pub mod space;
pub mod transport;

pub use scalar::Scalar;

/// Double-precision aliases for the core types.
pub type TimeGrid64 = space::TimeGrid<f64>;
pub type MetricFamily64 = space::MetricFamily<f64>;
pub type MeasureFamily64 = space::MeasureFamily<f64>;
pub type ProbabilityVector64 = transport::ProbabilityVector<f64>;
pub type Coupling64 = transport::Coupling<f64>;
pub type DualPotentials64 = transport::DualPotentials<f64>;
