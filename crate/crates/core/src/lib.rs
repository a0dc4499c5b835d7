//! Pulse design, simulation and robustness analysis for nonadiabatic
//! geometric quantum gates.
//!
//! The dense linear algebra in [`linalg`] is generic over the scalar type;
//! the physics modules work in `f64` through the aliases below.

pub mod bessel;
pub mod characterize;
pub mod evolution;
pub mod geometry;
pub mod linalg;
pub mod pulses;
pub mod reproduce;
pub mod twoqubit;

pub use num_complex::Complex64;

pub type CMatrix = linalg::ComplexMatrix<f64>;
pub type Unitary = linalg::UnitaryMatrix<f64>;
pub type State = linalg::StateVector<f64>;
