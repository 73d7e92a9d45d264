//! Weighted Bergman kernels, metrics and curvatures on bounded domains in `C^n`.
//!
//! The crate builds truncated orthonormal systems of weighted Bergman spaces
//! `A^2(Ω, μ)` from quadrature, evaluates the reproducing kernel and its
//! derivatives, and cross-checks everything against closed forms on model
//! domains (balls, polydiscs, annuli):
//!
//! - [`numerics`]: quadrature rules, radial moments, Gram factorization and
//!   constrained minimum-norm solves.
//! - [`domains`]: domains, weights, plurisubharmonic potentials and their 4-jets.
//! - [`kernel`]: orthonormal systems and the [`kernel::KernelModel`] evaluator.
//! - [`minint`]: minimum integrals and the Bergman–Fuks route to `K`, `g`, `H`.
//! - [`geometry`]: metrics and curvature from kernels or potential jets,
//!   including normal (Bochner) coordinates.
//! - [`sequences`]: the `e^{-mφ}` sweeps and the dynamical (Tsuji) iteration.
//! - [`oracles`]: Forelli–Rudin and Kähler–Einstein closed forms.
//! - [`series`]: truncated multivariate power series used for jets.

pub mod domains;
pub mod error;
pub mod geometry;
pub mod kernel;
pub mod minint;
pub mod numerics;
pub mod oracles;
pub mod sequences;
pub mod series;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// A point of `C^n`, stored as its coordinates.
pub type Point = Vec<C64>;
