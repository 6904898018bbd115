//! Numerical laboratory for pairs of disordered lattice Hamiltonians
//! `H± = Δ ± V` on finite boxes.
//!
//! The crate builds the discrete Laplacian on a box, samples i.i.d. random
//! potentials reproducibly, diagonalizes the resulting symmetric matrices
//! from first principles, and turns the spectra and eigenvector overlaps
//! into empirical spectral measures:
//!
//! - the density of states `n±` of either operator,
//! - the correlation measure `ρ` on the plane, carrying one atom per
//!   eigenvalue pair weighted by the squared eigenvector overlap,
//! - the interband absorption curve `A(E)`, the distribution function of
//!   the eigenvalue sum `λ⁺ + λ⁻` under `ρ`.
//!
//! On top of the measures sit exact geometric tools for the band-rectangle
//! support of `ρ` (good-corner classification, strip covers, corner window
//! bounds), tail-mass profiles with Lifshitz-type exponent fits, and an
//! exact finite-torus harness for covariance trace identities.
//!
//! Everything is a pure function of its inputs; identical inputs produce
//! bitwise identical outputs, independent of thread count or call order.

pub mod covariance;
pub mod eigen;
pub mod error;
pub mod geometry;
pub mod interval;
pub mod io;
pub mod lattice;
pub mod matrix;
pub mod measures;
pub mod tails;

pub use error::CoreError;
pub use matrix::Matrix;
