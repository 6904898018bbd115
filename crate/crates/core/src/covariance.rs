//! Exact finite-torus harness for covariant operator families.
//!
//! The probability space is the uniform measure on one shift orbit of a
//! fixed base potential over the torus `(Z/NZ)^d`, which is shift-ergodic,
//! so every expectation identity of the abstract framework collapses to a
//! finite sum that can be checked to machine precision:
//!
//! - `E(Tr(P A_ω B_ω P)) = E(Tr(P B_ω A_ω P))` for covariant `A`, `B`,
//! - the cyclic variant with three factors,
//! - nonnegativity of `E(Tr(P A_ω B_ω P))` for positive families.
//!
//! `P` is the rank-one projection onto the delta function at the origin;
//! its shift orbit is an orthogonal partition of unity, verified exactly on
//! the permutation representation.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eigen::eig_symmetric;
use crate::error::{CoreError, Result};
use crate::matrix::{CompensatedSum, Matrix};

/// Identities are exact on the torus; only floating point intervenes.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Positivity may dip below zero by eigensolver roundoff only.
pub const POSITIVITY_TOL: f64 = -1e-12;
/// Per-entry tolerance of the shift-equivariance spot check.
pub const EQUIVARIANCE_TOL: f64 = 1e-12;
/// Dense realizations cap, matching O(N^d)³ eigensolves.
pub const TORUS_SITE_CAP: usize = 4096;

/// The torus `(Z/NZ)^d` acting on itself by cyclic shifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusSpace {
    pub dimension: usize,
    pub modulus: usize,
}

impl TorusSpace {
    pub fn new(dimension: usize, modulus: usize) -> Result<Self> {
        if !(1..=3).contains(&dimension) {
            return Err(CoreError::InvalidBox(format!(
                "torus dimension must be 1, 2 or 3, got {dimension}"
            )));
        }
        if modulus < 3 {
            return Err(CoreError::InvalidBox(format!(
                "torus modulus must be at least 3, got {modulus}"
            )));
        }
        let count = modulus.pow(dimension as u32);
        if count > TORUS_SITE_CAP {
            return Err(CoreError::InvalidBox(format!(
                "torus has {count} sites, cap is {TORUS_SITE_CAP}"
            )));
        }
        Ok(TorusSpace { dimension, modulus })
    }

    pub fn site_count(&self) -> usize {
        self.modulus.pow(self.dimension as u32)
    }

    pub fn site_index(&self, coords: &[usize]) -> usize {
        let mut idx = 0;
        for &c in coords {
            idx = idx * self.modulus + c % self.modulus;
        }
        idx
    }

    pub fn site_coords(&self, index: usize) -> Vec<usize> {
        let mut coords = vec![0; self.dimension];
        let mut rest = index;
        for slot in coords.iter_mut().rev() {
            *slot = rest % self.modulus;
            rest /= self.modulus;
        }
        coords
    }

    /// Index of `site + shift` with coordinates added modulo N.
    pub fn translate(&self, site: usize, shift: &[usize]) -> usize {
        let coords = self.site_coords(site);
        let shifted: Vec<usize> = coords
            .iter()
            .zip(shift)
            .map(|(&c, &s)| (c + s) % self.modulus)
            .collect();
        self.site_index(&shifted)
    }

    /// All group elements in row-major order.
    pub fn group_elements(&self) -> Vec<Vec<usize>> {
        (0..self.site_count()).map(|i| self.site_coords(i)).collect()
    }

    /// Periodic nearest-neighbor hopping matrix on the torus.
    pub fn laplacian(&self) -> Matrix {
        let n = self.site_count();
        let mut delta = Matrix::zeros(n, n);
        for site in 0..n {
            for axis in 0..self.dimension {
                let mut shift = vec![0; self.dimension];
                shift[axis] = 1;
                let fwd = self.translate(site, &shift);
                delta[(site, fwd)] = 1.0;
                delta[(fwd, site)] = 1.0;
            }
        }
        delta
    }

    /// `(T_n q)(x) = q(x + n)`.
    pub fn shift_potential(&self, q: &[f64], shift: &[usize]) -> Vec<f64> {
        (0..self.site_count())
            .map(|site| q[self.translate(site, shift)])
            .collect()
    }

    /// `U_n* A U_n`, with `(U_n f)(x) = f(x - n)`: entrywise this is
    /// `(x, y) ↦ A(x + n, y + n)`.
    pub fn conjugate_by_shift(&self, a: &Matrix, shift: &[usize]) -> Matrix {
        let n = self.site_count();
        let mut out = Matrix::zeros(n, n);
        for x in 0..n {
            let sx = self.translate(x, shift);
            for y in 0..n {
                out[(x, y)] = a[(sx, self.translate(y, shift))];
            }
        }
        out
    }

    /// The shift orbit of the origin projection is an orthogonal partition
    /// of unity exactly when every site is hit exactly once.
    pub fn partition_of_unity_is_exact(&self) -> bool {
        let mut hits = vec![0usize; self.site_count()];
        for shift in self.group_elements() {
            hits[self.translate(0, &shift)] += 1;
        }
        hits.iter().all(|&h| h == 1)
    }

    /// `U_{m+n} = U_m U_n` and `U_0 = Id` on the permutation representation.
    pub fn group_law_is_exact(&self) -> bool {
        let elements = self.group_elements();
        let zero = vec![0; self.dimension];
        let identity_ok = (0..self.site_count()).all(|s| self.translate(s, &zero) == s);
        if !identity_ok {
            return false;
        }
        for m in &elements {
            for n in &elements {
                let mn: Vec<usize> = m
                    .iter()
                    .zip(n)
                    .map(|(&a, &b)| (a + b) % self.modulus)
                    .collect();
                for site in [0usize, self.site_count() / 2, self.site_count() - 1] {
                    if self.translate(site, &mn) != self.translate(self.translate(site, n), m) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Pointwise transforms of the potential sequence; all commute with shifts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointwiseMap {
    One,
    Identity,
    Square,
    Cos,
}

impl PointwiseMap {
    fn apply(&self, v: f64) -> f64 {
        match self {
            PointwiseMap::One => 1.0,
            PointwiseMap::Identity => v,
            PointwiseMap::Square => v * v,
            PointwiseMap::Cos => v.cos(),
        }
    }
}

/// Bounded functions applied to `H±` through the eigendecomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundedFunction {
    /// Indicator of `(lo, hi]`: the spectral projection.
    Indicator { lo: f64, hi: f64 },
    /// `exp(-((λ - center)/width)²)`, positive and bounded by 1.
    Gaussian { center: f64, width: f64 },
    /// `cos(frequency·λ + phase)`, bounded but not positive.
    Cosine { frequency: f64, phase: f64 },
}

impl BoundedFunction {
    fn apply(&self, lambda: f64) -> f64 {
        match *self {
            BoundedFunction::Indicator { lo, hi } => {
                if lambda > lo && lambda <= hi {
                    1.0
                } else {
                    0.0
                }
            }
            BoundedFunction::Gaussian { center, width } => {
                let t = (lambda - center) / width;
                (-t * t).exp()
            }
            BoundedFunction::Cosine { frequency, phase } => (frequency * lambda + phase).cos(),
        }
    }

    fn is_nonnegative(&self) -> bool {
        matches!(self, BoundedFunction::Indicator { .. } | BoundedFunction::Gaussian { .. })
    }
}

/// Which operator of the pair the recipe refers to.
pub use crate::lattice::OperatorSign;

/// Recipes for covariant families realized on the torus.
///
/// `OriginProjection` is deliberately *not* covariant; it exists to
/// exercise the equivariance guard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "snake_case")]
pub enum FamilyRecipe {
    /// The free hopping operator; shift-invariant.
    Laplacian,
    /// Multiplication by a pointwise transform of the potential.
    Multiplication { map: PointwiseMap },
    /// `φ(H±_ω)` through the eigensolver.
    FunctionOfH { sign: OperatorSign, function: BoundedFunction },
    /// Spectral projection `E_{H±}((lo, hi])`.
    SpectralProjection { sign: OperatorSign, lo: f64, hi: f64 },
    /// `|δ₀⟩⟨δ₀|` at every ω: fails covariance.
    OriginProjection,
}

impl FamilyRecipe {
    /// True when every realization is positive semidefinite by construction.
    pub fn is_positive(&self) -> bool {
        match self {
            FamilyRecipe::Laplacian => false,
            FamilyRecipe::Multiplication { map } => {
                matches!(map, PointwiseMap::One | PointwiseMap::Square)
            }
            FamilyRecipe::FunctionOfH { function, .. } => function.is_nonnegative(),
            FamilyRecipe::SpectralProjection { .. } => true,
            FamilyRecipe::OriginProjection => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub max_abs_diff: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivityCheck {
    pub value: f64,
    pub pass: bool,
}

/// A torus together with one base potential; expectations run over the
/// uniform measure on its shift orbit.
#[derive(Debug, Clone)]
pub struct OrbitContext {
    torus: TorusSpace,
    potential: Vec<f64>,
}

impl OrbitContext {
    pub fn new(torus: TorusSpace, potential: Vec<f64>) -> Result<Self> {
        if potential.len() != torus.site_count() {
            return Err(CoreError::DimensionMismatch(format!(
                "potential has {} entries, torus has {} sites",
                potential.len(),
                torus.site_count()
            )));
        }
        Ok(OrbitContext { torus, potential })
    }

    pub fn torus(&self) -> &TorusSpace {
        &self.torus
    }

    /// Realize the family at the shifted point `T_shift ω`.
    pub fn realize(&self, recipe: &FamilyRecipe, shift: &[usize]) -> Result<Matrix> {
        let q = self.torus.shift_potential(&self.potential, shift);
        let n = self.torus.site_count();
        match *recipe {
            FamilyRecipe::Laplacian => Ok(self.torus.laplacian()),
            FamilyRecipe::Multiplication { map } => {
                Ok(Matrix::from_diagonal(&q.iter().map(|&v| map.apply(v)).collect::<Vec<_>>()))
            }
            FamilyRecipe::FunctionOfH { sign, function } => {
                let h = self.hamiltonian(&q, sign);
                apply_function(&h, |x| function.apply(x))
            }
            FamilyRecipe::SpectralProjection { sign, lo, hi } => {
                let h = self.hamiltonian(&q, sign);
                apply_function(&h, |x| if x > lo && x <= hi { 1.0 } else { 0.0 })
            }
            FamilyRecipe::OriginProjection => {
                let mut p = Matrix::zeros(n, n);
                p[(0, 0)] = 1.0;
                Ok(p)
            }
        }
    }

    fn hamiltonian(&self, q: &[f64], sign: OperatorSign) -> Matrix {
        let mut h = self.torus.laplacian();
        let factor = match sign {
            OperatorSign::Plus => 1.0,
            OperatorSign::Minus => -1.0,
        };
        for (site, &v) in q.iter().enumerate() {
            h[(site, site)] += factor * v;
        }
        h
    }

    /// Spot-check `A_{T_nω} = U_n* A_ω U_n` on a few seeded random shifts.
    pub fn check_equivariance(&self, recipe: &FamilyRecipe, seed: u64) -> Result<()> {
        let base = self.realize(recipe, &vec![0; self.torus.dimension])?;
        let scale = base.max_abs().max(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..3 {
            let shift: Vec<usize> = (0..self.torus.dimension)
                .map(|_| 1 + (rng.next_u64() as usize) % (self.torus.modulus - 1))
                .collect();
            let realized = self.realize(recipe, &shift)?;
            let conjugated = self.torus.conjugate_by_shift(&base, &shift);
            let mut deviation = 0.0f64;
            for x in 0..realized.rows() {
                for y in 0..realized.cols() {
                    deviation = deviation.max((realized[(x, y)] - conjugated[(x, y)]).abs());
                }
            }
            if deviation > EQUIVARIANCE_TOL * scale {
                return Err(CoreError::NotCovariant { deviation, shift });
            }
        }
        Ok(())
    }

    /// All realizations over the orbit, in group order.
    fn realize_orbit(&self, recipe: &FamilyRecipe) -> Result<Vec<Matrix>> {
        self.torus
            .group_elements()
            .iter()
            .map(|shift| self.realize(recipe, shift))
            .collect()
    }

    /// `E(Tr(P A_ω B_ω P))` over the orbit: the exact average of
    /// `(A_{T_nω} B_{T_nω})₀₀`.
    pub fn orbit_expectation(&self, a: &FamilyRecipe, b: &FamilyRecipe) -> Result<f64> {
        self.check_equivariance(a, 0x5eed)?;
        self.check_equivariance(b, 0x5eed ^ 1)?;
        let orbit_a = self.realize_orbit(a)?;
        let orbit_b = self.realize_orbit(b)?;
        Ok(pair_expectation(&orbit_a, &orbit_b))
    }

    /// `E(Tr(P A B P))` versus `E(Tr(P B A P))`.
    pub fn commutation_check(&self, a: &FamilyRecipe, b: &FamilyRecipe) -> Result<IdentityCheck> {
        self.check_equivariance(a, 0x5eed)?;
        self.check_equivariance(b, 0x5eed ^ 1)?;
        let orbit_a = self.realize_orbit(a)?;
        let orbit_b = self.realize_orbit(b)?;
        let lhs = pair_expectation(&orbit_a, &orbit_b);
        let rhs = pair_expectation(&orbit_b, &orbit_a);
        let diff = (lhs - rhs).abs();
        Ok(IdentityCheck { lhs, rhs, max_abs_diff: diff, pass: diff <= IDENTITY_TOL })
    }

    /// `E(Tr(P A B C P))` versus `E(Tr(P C A B P))`.
    pub fn cyclic_check(
        &self,
        a: &FamilyRecipe,
        b: &FamilyRecipe,
        c: &FamilyRecipe,
    ) -> Result<IdentityCheck> {
        for (recipe, salt) in [(a, 0u64), (b, 1), (c, 2)] {
            self.check_equivariance(recipe, 0x5eed ^ salt)?;
        }
        let orbit_a = self.realize_orbit(a)?;
        let orbit_b = self.realize_orbit(b)?;
        let orbit_c = self.realize_orbit(c)?;
        let lhs = triple_expectation(&orbit_a, &orbit_b, &orbit_c);
        let rhs = triple_expectation(&orbit_c, &orbit_a, &orbit_b);
        let diff = (lhs - rhs).abs();
        Ok(IdentityCheck { lhs, rhs, max_abs_diff: diff, pass: diff <= IDENTITY_TOL })
    }

    /// `E(Tr(P A B P)) ≥ 0` for positive semidefinite families.
    pub fn positivity_check(&self, a: &FamilyRecipe, b: &FamilyRecipe) -> Result<PositivityCheck> {
        if !a.is_positive() || !b.is_positive() {
            return Err(CoreError::InvalidArgument(
                "positivity check requires positive semidefinite recipes".into(),
            ));
        }
        let value = self.orbit_expectation(a, b)?;
        Ok(PositivityCheck { value, pass: value >= POSITIVITY_TOL })
    }
}

fn pair_expectation(orbit_a: &[Matrix], orbit_b: &[Matrix]) -> f64 {
    let mut acc = CompensatedSum::new();
    for (a, b) in orbit_a.iter().zip(orbit_b) {
        // Tr(P A B P) = (A B)₀₀ = row₀(A) · col₀(B).
        let mut term = 0.0;
        for k in 0..a.cols() {
            term += a[(0, k)] * b[(k, 0)];
        }
        acc.add(term);
    }
    acc.value() / orbit_a.len() as f64
}

fn triple_expectation(orbit_a: &[Matrix], orbit_b: &[Matrix], orbit_c: &[Matrix]) -> f64 {
    let mut acc = CompensatedSum::new();
    for ((a, b), c) in orbit_a.iter().zip(orbit_b).zip(orbit_c) {
        let n = a.cols();
        // (A B C)₀₀ = row₀(A) · (B · col₀(C)).
        let c0: Vec<f64> = (0..n).map(|k| c[(k, 0)]).collect();
        let bc0 = b.mul_vec(&c0);
        let mut term = 0.0;
        for k in 0..n {
            term += a[(0, k)] * bc0[k];
        }
        acc.add(term);
    }
    acc.value() / orbit_a.len() as f64
}

/// `f(H) = Q f(Λ) Qᵀ` through the symmetric eigensolver.
fn apply_function(h: &Matrix, f: impl Fn(f64) -> f64) -> Result<Matrix> {
    let dec = eig_symmetric(h)?;
    let n = dec.n();
    let fvals: Vec<f64> = dec.eigenvalues().iter().map(|&x| f(x)).collect();
    let q = dec.eigenvectors();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for k in 0..n {
            let scale = q[(i, k)] * fvals[k];
            if scale == 0.0 {
                continue;
            }
            for j in 0..n {
                out[(i, j)] += scale * q[(j, k)];
            }
        }
    }
    Ok(out)
}
