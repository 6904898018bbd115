//! Empirical spectral measures of a finite-box realization.
//!
//! All measures are exact weighted point sets; nothing is binned. A single
//! realization of the pair `H±` contributes:
//!
//! - the density of states, one atom per eigenvalue, weighted either by
//!   `1/|Λ|` (count per volume) or by the squared eigenfunction amplitude
//!   at the center site (the rank-one-projection estimator),
//! - the correlation measure, one atom at each eigenvalue pair
//!   `(λ⁺_i, λ⁻_j)` with weight `w_ij / |Λ|`, `w_ij` the squared overlap,
//! - the interband absorption curve, the distribution function of the sum
//!   `λ⁺ + λ⁻` under the correlation measure.
//!
//! Monte-Carlo averaging over realizations is a convex combination of atom
//! lists; evaluations are order-independent up to roundoff because atoms
//! are kept sorted and summed with compensation.

use serde::{Deserialize, Serialize};

use crate::eigen::{EigenDecomposition, OverlapMatrix};
use crate::error::{CoreError, Result};
use crate::interval::{Interval, IntervalKind, Rectangle};
use crate::lattice::BoxSpec;
use crate::matrix::CompensatedSum;

/// Slack allowed when checking the per-realization rectangle inequality.
pub const RECTANGLE_INEQUALITY_SLACK: f64 = 1e-12;

/// How a measure was produced; merging refuses to mix provenances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    DosCountPerVolume,
    DosLocalAtSite,
    Correlation,
    IlacSum,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Provenance::DosCountPerVolume => "dos_count_per_volume",
            Provenance::DosLocalAtSite => "dos_local_at_site",
            Provenance::Correlation => "correlation",
            Provenance::IlacSum => "ilac_sum",
        };
        write!(f, "{s}")
    }
}

/// Density-of-states estimator choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DosEstimator {
    /// Every eigenvalue carries weight `1/|Λ|`.
    CountPerVolume,
    /// Eigenvalue `λ_k` carries `|v_k(x₀)|²` at the center site `x₀`.
    LocalAtSite,
}

impl DosEstimator {
    fn provenance(&self) -> Provenance {
        match self {
            DosEstimator::CountPerVolume => Provenance::DosCountPerVolume,
            DosEstimator::LocalAtSite => Provenance::DosLocalAtSite,
        }
    }
}

/// Weighted point masses on the line, sorted by position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure1D {
    positions: Vec<f64>,
    weights: Vec<f64>,
    total_mass: f64,
    provenance: Provenance,
}

impl EmpiricalMeasure1D {
    pub fn from_atoms(mut atoms: Vec<(f64, f64)>, provenance: Provenance) -> Self {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let positions = atoms.iter().map(|a| a.0).collect();
        let weights: Vec<f64> = atoms.iter().map(|a| a.1).collect();
        let mut total = CompensatedSum::new();
        for &w in &weights {
            debug_assert!(w >= 0.0);
            total.add(w);
        }
        EmpiricalMeasure1D { positions, weights, total_mass: total.value(), provenance }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.positions.iter().copied().zip(self.weights.iter().copied())
    }

    /// Mass of an interval: the compensated sum of the weights of the atoms
    /// it contains, taken in position order.
    pub fn mass(&self, interval: &Interval) -> f64 {
        if interval.is_empty() {
            return 0.0;
        }
        let (start, end) = atom_range(&self.positions, interval);
        let mut acc = CompensatedSum::new();
        for &w in &self.weights[start..end] {
            acc.add(w);
        }
        acc.value()
    }

    /// Convex combination with equal weights `1/R`.
    pub fn merge_equal(parts: &[EmpiricalMeasure1D]) -> Result<EmpiricalMeasure1D> {
        let r = parts.len();
        let w = vec![1.0 / r as f64; r];
        Self::merge_weighted(parts, &w)
    }

    pub fn merge_weighted(
        parts: &[EmpiricalMeasure1D],
        coefficients: &[f64],
    ) -> Result<EmpiricalMeasure1D> {
        let provenance = check_merge(parts.iter().map(|p| p.provenance), coefficients, parts.len())?;
        let mut atoms = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        for (part, &c) in parts.iter().zip(coefficients) {
            for (x, w) in part.atoms() {
                atoms.push((x, c * w));
            }
        }
        Ok(EmpiricalMeasure1D::from_atoms(atoms, provenance))
    }
}

/// Weighted point masses on the plane, sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure2D {
    atoms: Vec<Atom2>,
    total_mass: f64,
    provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom2 {
    pub x: f64,
    pub y: f64,
    pub weight: f64,
}

impl EmpiricalMeasure2D {
    pub fn from_atoms(mut atoms: Vec<Atom2>, provenance: Provenance) -> Self {
        atoms.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        let mut total = CompensatedSum::new();
        for a in &atoms {
            debug_assert!(a.weight >= 0.0);
            total.add(a.weight);
        }
        EmpiricalMeasure2D { atoms, total_mass: total.value(), provenance }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn atoms(&self) -> &[Atom2] {
        &self.atoms
    }

    /// Mass of a rectangle, summed in storage order with compensation.
    pub fn mass(&self, rect: &Rectangle) -> f64 {
        if rect.x.is_empty() || rect.y.is_empty() {
            return 0.0;
        }
        let xs: Vec<f64> = self.atoms.iter().map(|a| a.x).collect();
        let (start, end) = atom_range(&xs, &rect.x);
        let mut acc = CompensatedSum::new();
        for a in &self.atoms[start..end] {
            if rect.y.contains(a.y) {
                acc.add(a.weight);
            }
        }
        acc.value()
    }

    /// Marginal mass `ρ(X × ℝ)` of an interval on the first coordinate.
    pub fn marginal_x(&self, interval: &Interval) -> f64 {
        self.mass(&Rectangle::new(*interval, Interval::all()))
    }

    /// Marginal mass `ρ(ℝ × Y)` of an interval on the second coordinate.
    pub fn marginal_y(&self, interval: &Interval) -> f64 {
        self.mass(&Rectangle::new(Interval::all(), *interval))
    }

    pub fn merge_equal(parts: &[EmpiricalMeasure2D]) -> Result<EmpiricalMeasure2D> {
        let r = parts.len();
        let w = vec![1.0 / r as f64; r];
        Self::merge_weighted(parts, &w)
    }

    pub fn merge_weighted(
        parts: &[EmpiricalMeasure2D],
        coefficients: &[f64],
    ) -> Result<EmpiricalMeasure2D> {
        let provenance = check_merge(parts.iter().map(|p| p.provenance), coefficients, parts.len())?;
        let mut atoms = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        for (part, &c) in parts.iter().zip(coefficients) {
            for a in part.atoms() {
                atoms.push(Atom2 { x: a.x, y: a.y, weight: c * a.weight });
            }
        }
        Ok(EmpiricalMeasure2D::from_atoms(atoms, provenance))
    }
}

fn check_merge(
    provenances: impl Iterator<Item = Provenance>,
    coefficients: &[f64],
    count: usize,
) -> Result<Provenance> {
    if count == 0 {
        return Err(CoreError::InvalidArgument("cannot merge zero measures".into()));
    }
    if coefficients.len() != count {
        return Err(CoreError::InvalidArgument(format!(
            "{} coefficients for {} measures",
            coefficients.len(),
            count
        )));
    }
    if coefficients.iter().any(|&c| c < 0.0 || !c.is_finite()) {
        return Err(CoreError::InvalidArgument("merge coefficients must be finite and ≥ 0".into()));
    }
    let mut provenance = None;
    for p in provenances {
        match provenance {
            None => provenance = Some(p),
            Some(q) if q == p => {}
            Some(q) => {
                return Err(CoreError::ProvenanceMismatch(q.to_string(), p.to_string()));
            }
        }
    }
    Ok(provenance.unwrap())
}

/// Locate the contiguous index range of sorted `positions` admitted by the
/// interval.
fn atom_range(positions: &[f64], interval: &Interval) -> (usize, usize) {
    let start = match interval.kind {
        IntervalKind::Closed => positions.partition_point(|&p| p < interval.lo),
        _ => positions.partition_point(|&p| p <= interval.lo),
    };
    let end = match interval.kind {
        IntervalKind::Open => positions.partition_point(|&p| p < interval.hi),
        _ => positions.partition_point(|&p| p <= interval.hi),
    };
    (start, end.max(start))
}

/// Density of states of one realization.
pub fn dos_estimate(
    dec: &EigenDecomposition,
    spec: &BoxSpec,
    estimator: DosEstimator,
) -> EmpiricalMeasure1D {
    let volume = spec.site_count() as f64;
    let atoms: Vec<(f64, f64)> = match estimator {
        DosEstimator::CountPerVolume => dec
            .eigenvalues()
            .iter()
            .map(|&x| (x, 1.0 / volume))
            .collect(),
        DosEstimator::LocalAtSite => {
            let site = spec.center_site();
            dec.eigenvalues()
                .iter()
                .enumerate()
                .map(|(k, &x)| {
                    let amp = dec.component(site, k);
                    (x, amp * amp)
                })
                .collect()
        }
    };
    EmpiricalMeasure1D::from_atoms(atoms, estimator.provenance())
}

/// Correlation measure of one realization: an atom at `(λ⁺_i, λ⁻_j)` with
/// weight `w_ij / |Λ|`. Its mass on `A × B` equals
/// `Tr(E₊(A) E₋(B)) / |Λ|` by direct expansion.
pub fn correlation_estimate(
    dec_plus: &EigenDecomposition,
    dec_minus: &EigenDecomposition,
    overlaps: &OverlapMatrix,
    spec: &BoxSpec,
) -> Result<EmpiricalMeasure2D> {
    let n = dec_plus.n();
    if dec_minus.n() != n || overlaps.n() != n {
        return Err(CoreError::DimensionMismatch(format!(
            "decompositions and overlaps disagree: {} / {} / {}",
            n,
            dec_minus.n(),
            overlaps.n()
        )));
    }
    if spec.site_count() != n {
        return Err(CoreError::DimensionMismatch(format!(
            "box has {} sites but decomposition has size {n}",
            spec.site_count()
        )));
    }
    let volume = n as f64;
    let mut atoms = Vec::with_capacity(n * n);
    for i in 0..n {
        let x = dec_plus.eigenvalues()[i];
        for j in 0..n {
            atoms.push(Atom2 {
                x,
                y: dec_minus.eigenvalues()[j],
                weight: overlaps.weight(i, j) / volume,
            });
        }
    }
    Ok(EmpiricalMeasure2D::from_atoms(atoms, Provenance::Correlation))
}

/// Right-continuous distribution function of the eigenvalue sum
/// `s = λ⁺ + λ⁻` under a correlation measure.
///
/// Evaluating at `E` gives the mass of `{(λ₁, λ₂) : λ₁ + λ₂ ≤ E}`, which is
/// the interband absorption coefficient of the realization. Working on the
/// sum coordinate is the same as taking the anti-diagonal marginal under
/// the rotation `(λ₁, λ₂) ↦ ((λ₁+λ₂)/√2, (λ₁−λ₂)/√2)` and rescaling the
/// argument; the √2 factors cancel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlacCurve {
    breakpoints: Vec<f64>,
    increments: Vec<f64>,
    cumulative: Vec<f64>,
    total_mass: f64,
}

impl IlacCurve {
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// `A(e)`: cumulative mass of sums ≤ `e`.
    pub fn eval(&self, e: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&s| s <= e);
        if idx == 0 {
            0.0
        } else {
            self.cumulative[idx - 1]
        }
    }

    /// Left limit `A(e⁻)`: cumulative mass of sums strictly below `e`.
    pub fn eval_left(&self, e: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&s| s < e);
        if idx == 0 {
            0.0
        } else {
            self.cumulative[idx - 1]
        }
    }

    /// Mass of an interval of sums under the chosen endpoint convention.
    pub fn mass(&self, interval: &Interval) -> f64 {
        if interval.is_empty() {
            return 0.0;
        }
        let (hi, lo) = match interval.kind {
            IntervalKind::HalfOpen => (self.eval(interval.hi), self.eval(interval.lo)),
            IntervalKind::Open => (self.eval_left(interval.hi), self.eval(interval.lo)),
            IntervalKind::Closed => (self.eval(interval.hi), self.eval_left(interval.lo)),
        };
        (hi - lo).max(0.0)
    }

    /// Increment `A(center + a) - A(center - a)`.
    pub fn increment(&self, center: f64, a: f64) -> f64 {
        self.eval(center + a) - self.eval(center - a)
    }
}

impl IlacCurve {
    /// Build a curve from raw `(sum, weight)` atoms.
    pub fn from_sum_atoms(mut sums: Vec<(f64, f64)>) -> IlacCurve {
        sums.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut breakpoints = Vec::new();
        let mut increments = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = CompensatedSum::new();
        let mut k = 0;
        while k < sums.len() {
            let s = sums[k].0;
            let mut local = CompensatedSum::new();
            while k < sums.len() && sums[k].0 == s {
                local.add(sums[k].1);
                k += 1;
            }
            let inc = local.value();
            acc.add(inc);
            breakpoints.push(s);
            increments.push(inc);
            // Clamp out any compensated-sum wiggle: A must be nondecreasing.
            let prev = cumulative.last().copied().unwrap_or(0.0);
            cumulative.push(acc.value().max(prev));
        }
        let total_mass = cumulative.last().copied().unwrap_or(0.0);
        IlacCurve { breakpoints, increments, cumulative, total_mass }
    }

    /// Equal-weight average of curves: the curve of the merged measure.
    pub fn merge_equal(parts: &[IlacCurve]) -> Result<IlacCurve> {
        if parts.is_empty() {
            return Err(CoreError::InvalidArgument("cannot merge zero curves".into()));
        }
        let scale = 1.0 / parts.len() as f64;
        let mut atoms = Vec::with_capacity(parts.iter().map(|p| p.breakpoints.len()).sum());
        for part in parts {
            for (&s, &w) in part.breakpoints.iter().zip(&part.increments) {
                atoms.push((s, scale * w));
            }
        }
        Ok(IlacCurve::from_sum_atoms(atoms))
    }
}

/// Build the absorption curve of a correlation measure.
pub fn ilac_curve(rho: &EmpiricalMeasure2D) -> IlacCurve {
    IlacCurve::from_sum_atoms(rho.atoms().iter().map(|a| (a.x + a.y, a.weight)).collect())
}

/// Outcome of the per-realization inequality
/// `ρ(A × B) ≤ min(n₊(A), n₋(B))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectangleCheck {
    pub lhs: f64,
    pub rhs_plus: f64,
    pub rhs_minus: f64,
    pub holds: bool,
}

/// Check the rectangle inequality against count-per-volume DOS measures
/// built from the same decompositions as the correlation measure.
pub fn rectangle_inequality_check(
    rho: &EmpiricalMeasure2D,
    dos_plus: &EmpiricalMeasure1D,
    dos_minus: &EmpiricalMeasure1D,
    rect: &Rectangle,
) -> Result<RectangleCheck> {
    for dos in [dos_plus, dos_minus] {
        if dos.provenance() != Provenance::DosCountPerVolume {
            return Err(CoreError::ProvenanceMismatch(
                Provenance::DosCountPerVolume.to_string(),
                dos.provenance().to_string(),
            ));
        }
    }
    if rho.provenance() != Provenance::Correlation {
        return Err(CoreError::ProvenanceMismatch(
            Provenance::Correlation.to_string(),
            rho.provenance().to_string(),
        ));
    }
    let lhs = rho.mass(rect);
    let rhs_plus = dos_plus.mass(&rect.x);
    let rhs_minus = dos_minus.mass(&rect.y);
    let holds = lhs <= rhs_plus.min(rhs_minus) + RECTANGLE_INEQUALITY_SLACK;
    Ok(RectangleCheck { lhs, rhs_plus, rhs_minus, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{eig_symmetric, overlap_matrix};
    use crate::lattice::{self, Boundary};
    use crate::matrix::Matrix;

    fn hand_pair() -> (EigenDecomposition, EigenDecomposition, OverlapMatrix, BoxSpec) {
        let spec = BoxSpec::new(1, 2, Boundary::Dirichlet).unwrap();
        let h_plus = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let h_minus = Matrix::from_diagonal(&[1.0, -1.0]);
        let dp = eig_symmetric(&h_plus).unwrap();
        let dm = eig_symmetric(&h_minus).unwrap();
        let w = overlap_matrix(&dp, &dm).unwrap();
        (dp, dm, w, spec)
    }

    #[test]
    fn free_path_dos_masses() {
        let spec = BoxSpec::new(1, 3, Boundary::Dirichlet).unwrap();
        let delta = lattice::laplacian(&spec).unwrap();
        let dec = eig_symmetric(&delta).unwrap();
        let dos = dos_estimate(&dec, &spec, DosEstimator::CountPerVolume);
        assert!((dos.mass(&Interval::open(-3.0, 3.0)) - 1.0).abs() < 1e-15);
        let third = dos.mass(&Interval::open(-0.5, 0.5));
        assert!((third - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn local_estimator_has_unit_mass() {
        let spec = BoxSpec::new(1, 7, Boundary::Dirichlet).unwrap();
        let delta = lattice::laplacian(&spec).unwrap();
        let q = lattice::sample_potential(
            &lattice::PotentialDistribution::UniformInterval { a: 0.0, b: 1.0 },
            &spec,
            11,
            0,
        )
        .unwrap();
        let pair = lattice::assemble_hamiltonians(&delta, &q, &spec).unwrap();
        let dec = eig_symmetric(&pair.h_plus).unwrap();
        let dos = dos_estimate(&dec, &spec, DosEstimator::LocalAtSite);
        assert!((dos.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_measure_hand_values() {
        let (dp, dm, w, spec) = hand_pair();
        let rho = correlation_estimate(&dp, &dm, &w, &spec).unwrap();
        assert!((rho.total_mass() - 1.0).abs() < 1e-12);
        let point = Rectangle::new(Interval::closed(-1.0, -1.0), Interval::closed(-1.0, -1.0));
        assert!((rho.mass(&point) - 0.25).abs() < 1e-14);
        // Full-plane mass and disjoint-rectangle mass.
        assert!((rho.mass(&Rectangle::all()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_operators_concentrate_on_the_diagonal() {
        let a = Matrix::from_rows(&[&[0.3, 0.9, 0.0], &[0.9, -0.4, 0.2], &[0.0, 0.2, 1.0]]);
        let spec = BoxSpec::new(1, 3, Boundary::Dirichlet).unwrap();
        let d = eig_symmetric(&a).unwrap();
        let w = overlap_matrix(&d, &d).unwrap();
        let rho = correlation_estimate(&d, &d, &w, &spec).unwrap();
        // Off-diagonal disjoint product sets carry no mass.
        let evs = d.eigenvalues();
        let off = Rectangle::new(
            Interval::closed(evs[0], evs[0]),
            Interval::closed(evs[2], evs[2]),
        );
        assert!(rho.mass(&off) < 1e-20);
    }

    #[test]
    fn ilac_hand_values() {
        let (dp, dm, w, spec) = hand_pair();
        let rho = correlation_estimate(&dp, &dm, &w, &spec).unwrap();
        let curve = ilac_curve(&rho);
        assert!((curve.eval(-2.0) - 0.25).abs() < 1e-14);
        assert!((curve.eval(0.0) - 0.75).abs() < 1e-14);
        assert!((curve.eval(2.0) - 1.0).abs() < 1e-14);
        assert_eq!(curve.eval(-2.5), 0.0);
        assert!((curve.eval(5.0) - curve.total_mass()).abs() < 1e-15);
    }

    #[test]
    fn curve_is_nondecreasing() {
        let (dp, dm, w, spec) = hand_pair();
        let rho = correlation_estimate(&dp, &dm, &w, &spec).unwrap();
        let curve = ilac_curve(&rho);
        for pair in curve.cumulative().windows(2) {
            assert!(pair[0] <= pair[1]);
        }
    }

    #[test]
    fn rectangle_inequality_hand_case() {
        let (dp, dm, w, spec) = hand_pair();
        let rho = correlation_estimate(&dp, &dm, &w, &spec).unwrap();
        let dos_p = dos_estimate(&dp, &spec, DosEstimator::CountPerVolume);
        let dos_m = dos_estimate(&dm, &spec, DosEstimator::CountPerVolume);
        let rect = Rectangle::new(Interval::closed(-1.0, -1.0), Interval::closed(-1.0, 1.0));
        let check = rectangle_inequality_check(&rho, &dos_p, &dos_m, &rect).unwrap();
        assert!((check.lhs - 0.5).abs() < 1e-14);
        assert!((check.rhs_plus - 0.5).abs() < 1e-14);
        assert!(check.holds);

        // Empty rectangle.
        let empty = Rectangle::new(Interval::open(0.0, 0.0), Interval::all());
        let check = rectangle_inequality_check(&rho, &dos_p, &dos_m, &empty).unwrap();
        assert_eq!(check.lhs, 0.0);
        assert!(check.holds);

        // Whole plane: equality on both sides.
        let all = Rectangle::all();
        let check = rectangle_inequality_check(&rho, &dos_p, &dos_m, &all).unwrap();
        assert!((check.lhs - 1.0).abs() < 1e-12);
        assert!((check.rhs_plus - 1.0).abs() < 1e-12);
        assert!((check.rhs_minus - 1.0).abs() < 1e-12);
        assert!(check.holds);
    }

    #[test]
    fn estimator_mismatch_is_flagged() {
        let (dp, dm, w, spec) = hand_pair();
        let rho = correlation_estimate(&dp, &dm, &w, &spec).unwrap();
        let local = dos_estimate(&dp, &spec, DosEstimator::LocalAtSite);
        let count = dos_estimate(&dm, &spec, DosEstimator::CountPerVolume);
        let rect = Rectangle::all();
        assert!(matches!(
            rectangle_inequality_check(&rho, &local, &count, &rect),
            Err(CoreError::ProvenanceMismatch(..))
        ));
    }

    #[test]
    fn marginals_reproduce_the_dos() {
        let (dp, dm, w, spec) = hand_pair();
        let rho = correlation_estimate(&dp, &dm, &w, &spec).unwrap();
        let dos_p = dos_estimate(&dp, &spec, DosEstimator::CountPerVolume);
        for iv in [
            Interval::half_open(-2.0, -0.5),
            Interval::half_open(-0.5, 2.0),
            Interval::all(),
        ] {
            assert!((rho.marginal_x(&iv) - dos_p.mass(&iv)).abs() < 1e-10);
        }
    }

    #[test]
    fn merge_single_is_identity_and_double_is_idempotent() {
        let (dp, _, _, spec) = hand_pair();
        let dos = dos_estimate(&dp, &spec, DosEstimator::CountPerVolume);
        let merged = EmpiricalMeasure1D::merge_equal(std::slice::from_ref(&dos)).unwrap();
        let iv = Interval::half_open(-2.0, 0.5);
        assert!((merged.mass(&iv) - dos.mass(&iv)).abs() < 1e-15);

        let doubled = EmpiricalMeasure1D::merge_equal(&[dos.clone(), dos.clone()]).unwrap();
        assert!((doubled.mass(&iv) - dos.mass(&iv)).abs() < 1e-12);
        assert!((doubled.total_mass() - dos.total_mass()).abs() < 1e-12);
    }

    #[test]
    fn merge_refuses_mixed_estimators() {
        let (dp, dm, _, spec) = hand_pair();
        let a = dos_estimate(&dp, &spec, DosEstimator::CountPerVolume);
        let b = dos_estimate(&dm, &spec, DosEstimator::LocalAtSite);
        assert!(matches!(
            EmpiricalMeasure1D::merge_equal(&[a, b]),
            Err(CoreError::ProvenanceMismatch(..))
        ));
    }

    #[test]
    fn merge_is_permutation_invariant() {
        let spec = BoxSpec::new(1, 6, Boundary::Dirichlet).unwrap();
        let delta = lattice::laplacian(&spec).unwrap();
        let dist = lattice::PotentialDistribution::UniformInterval { a: 0.0, b: 1.0 };
        let mut parts = Vec::new();
        for r in 0..4 {
            let q = lattice::sample_potential(&dist, &spec, 21, r).unwrap();
            let pair = lattice::assemble_hamiltonians(&delta, &q, &spec).unwrap();
            let dec = eig_symmetric(&pair.h_plus).unwrap();
            parts.push(dos_estimate(&dec, &spec, DosEstimator::CountPerVolume));
        }
        let forward = EmpiricalMeasure1D::merge_equal(&parts).unwrap();
        parts.reverse();
        let backward = EmpiricalMeasure1D::merge_equal(&parts).unwrap();
        for iv in [
            Interval::half_open(-2.0, -1.0),
            Interval::half_open(-1.0, 0.3),
            Interval::half_open(0.3, 3.0),
            Interval::all(),
        ] {
            assert!((forward.mass(&iv) - backward.mass(&iv)).abs() < 1e-12);
        }
    }

    #[test]
    fn ilac_matches_direct_double_sum_on_small_realizations() {
        // Independent route: brute-force double sum straight from eigendata.
        let spec = BoxSpec::new(1, 8, Boundary::Dirichlet).unwrap();
        let delta = lattice::laplacian(&spec).unwrap();
        let dist = lattice::PotentialDistribution::UniformInterval { a: 0.0, b: 1.0 };
        for r in 0..3 {
            let q = lattice::sample_potential(&dist, &spec, 33, r).unwrap();
            let pair = lattice::assemble_hamiltonians(&delta, &q, &spec).unwrap();
            let dp = eig_symmetric(&pair.h_plus).unwrap();
            let dm = eig_symmetric(&pair.h_minus).unwrap();
            let w = overlap_matrix(&dp, &dm).unwrap();
            let rho = correlation_estimate(&dp, &dm, &w, &spec).unwrap();
            let curve = ilac_curve(&rho);
            let n = spec.site_count();
            for &e in curve.breakpoints() {
                let mut direct = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        if dp.eigenvalues()[i] + dm.eigenvalues()[j] <= e {
                            direct += w.weight(i, j);
                        }
                    }
                }
                direct /= n as f64;
                assert!((curve.eval(e) - direct).abs() < 1e-10);
            }
        }
    }
}
