//! Numerical laboratory for a Volterra-type multifractional Gaussian process.
//!
//! The process under study is `B(t) = ∫₀ᵗ K_{h(t)}(t,u) W(du)`, where the
//! Volterra kernel for a fixed regularity index `H ∈ (1/2, 1)` is
//!
//! ```text
//! K_H(t,u) = u^{1/2-H} ∫_u^t (y-u)^{H-3/2} y^{H-1/2} dy,   0 < u ≤ t,
//! ```
//!
//! and `h` is a time-varying index taking values in `[a,b] ⊂ (1/2, 1)`.
//! The crate provides exact (quadrature-based) kernel and covariance
//! evaluation, two independent path samplers, and estimators for the
//! pathwise quantities the process theory predicts: local times, pointwise
//! Hölder exponents, local nondeterminism margins, and the weighted local
//! time appearing in the Tanaka-type decomposition.
//!
//! Modules are layered bottom-up: [`specfun`] (gamma/beta and the variance
//! normalization constant), [`quad`] (adaptive quadrature with
//! singularity-removing substitutions), [`kernel`], [`covariance`],
//! [`simulate`], [`analysis`], and [`tanaka`].

pub mod analysis;
pub mod covariance;
pub mod error;
pub mod grid;
pub mod hurst;
pub mod kernel;
pub mod quad;
pub mod report;
pub mod simulate;
pub mod specfun;
pub mod tanaka;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use hurst::HurstFunction;
pub use quad::QuadratureSpec;
