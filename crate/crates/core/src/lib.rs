//! Quantum noise and multipartite entanglement of the frequency comb emitted by a
//! single optical parametric oscillator (OPO) pumped above threshold.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: physical parameters and the classical operating point.
//! * [`stability`]: linearised Jacobian of the mean-field equations and its
//!   eigenvalue spectrum, numeric and closed form.
//! * [`spectra`]: input–output transfer matrices of the quadrature fluctuations
//!   and output variances of linear quadrature combinations ("witnesses"),
//!   including the zero-frequency limit.
//! * [`vlf`]: van Loock–Furusawa inseparability inequalities for every mode
//!   partition of the comb, with optimisation of the free pump weight.
//! * [`montecarlo`]: time-domain Langevin simulation used as an independent check
//!   of the analytic spectra.
//!
//! Throughout, a single-mode vacuum quadrature has variance 1 and every result at
//! zero analysis frequency depends only on the pump ratio `sigma`, the number of
//! signal/idler pairs `n`, and the amplitude profile.

pub mod error;
pub mod golden;
pub mod model;
pub mod montecarlo;
pub mod spectra;
pub mod stability;
pub mod vlf;

pub use error::{Error, Result};
pub use model::{OpoParams, ParamSpec, SteadyState};
pub use spectra::{Channel, TransferMatrix, Witness};
pub use stability::{Jacobian, StabilityReport};
pub use vlf::{VlfCase, VlfKind, VlfResult};
