//! Worst-case revenue analysis for selling a common-value good.
//!
//! A seller knows the prior distribution of the buyers' common value but not
//! their information structure. This crate builds the mechanisms that hedge
//! against that ignorance and computes what they can guarantee:
//!
//! - [`prior`]: value distributions on [0, 1], discrete grids and parametric
//!   densities, with cell-mass discretization between them.
//! - [`mechanism`]: finite symmetric mechanisms (allocation and payment
//!   tables): the exponential price mechanism, its generalized two-buyer
//!   form, and posted prices.
//! - [`lp`]: a dense two-phase simplex solver with dual certificates.
//! - [`bce`]: worst-case (minimum-revenue) Bayes correlated equilibria as
//!   linear programs, the dual bound, virtual-revenue machinery, and the
//!   Markov embedding that reduces arbitrary deviation rates to band rates.
//! - [`guarantee`]: closed-form guarantee objectives and their optimizers,
//!   the buyer-optimal signal bound, and asymptotics in the number of buyers.
//!
//! Everything numeric is generic over [`Scalar`] (f32 or f64); the `*64`
//! aliases below fix f64, which all tolerances in the crate are calibrated
//! for.

pub mod bce;
pub mod guarantee;
pub mod lp;
pub mod mechanism;
pub mod numeric;
pub mod prior;
mod scalar;

pub use scalar::Scalar;

pub type DiscretePrior64 = prior::DiscretePrior<f64>;
pub type ContinuousPrior64 = prior::ContinuousPrior<f64>;
pub type Mechanism64 = mechanism::FiniteMechanism<f64>;
pub type LinearProgram64 = lp::LinearProgram<f64>;
pub type GuaranteeResult64 = guarantee::GuaranteeResult<f64>;
pub type RsBound64 = guarantee::RsBound<f64>;
