//! Calderón–Zygmund operators built from rotationally invariant stable
//! densities.
//!
//! The operators act as `T_A f(x) = ∫ K_A(x, x̃) f(x̃) dx̃` with
//! `K_A(x, x̃) = ∫_0^∞ ∫ 2y A(x̄, y) ∇φ_y(x̄ - x̃) · ∇φ_y(x̄ - x) dx̄ dy`,
//! where `∇` is the full gradient in `(x, y)` and `φ_y` the stable density at
//! scale `y`. The crate evaluates densities and subordinators, kernels and
//! Fourier multipliers, applies the operators to sampled fields, simulates the
//! underlying martingale transforms, and checks the quantitative bounds
//! (size, smoothness, strong and weak type) numerically.

pub mod density;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod montecarlo;
pub mod multiplier;
pub mod operator;
pub mod quad;
mod special;
pub mod subordinator;
pub mod symbol;
pub mod verify;

pub use density::{RadialProfile, StableKind, StableSpec};
pub use error::{Error, Result};
pub use grid::{Geometry, SampledField};
pub use symbol::MatrixSymbol;
