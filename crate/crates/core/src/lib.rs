//! Pseudo-spectral simulation and verification toolkit for the forced
//! magneto-geostrophic (MG) active scalar equation on the 3-torus,
//!
//! ```text
//! ∂_t θ + u·∇θ = κΔθ + S,     u = M^ν[θ],
//! ```
//!
//! with `ν ≥ 0`. `ν = 0` is the critical case (order-one symbol); `ν > 0`
//! smooths by two derivatives.

pub mod diagnostics;
pub mod experiments;
pub mod io;
pub mod multipliers;
pub mod solver;
pub mod spectral;
