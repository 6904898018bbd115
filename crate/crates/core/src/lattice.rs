//! Finite-box lattice model: the discrete Laplacian, i.i.d. random
//! potentials, and the Hamiltonian pair `H± = Δ ± V`.
//!
//! The Laplacian here is the pure hopping term: the adjacency matrix of the
//! box graph, with zero diagonal, so the spectrum of the free operator lies
//! in `[-2d, 2d]`. Under Dirichlet boundary conditions the box operator is a
//! compression of the full lattice operator and its eigenvalues stay inside
//! the almost-sure bands `σ(Δ) + supp(±μ)`.
//!
//! Potentials are sampled by a counter-based generator: the value at a site
//! is a pure function of `(master_seed, realization_index, site_index)`, so
//! realizations are reproducible bit-for-bit regardless of how many worker
//! threads draw them or in which order.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::matrix::Matrix;

/// Default ceiling on the number of sites; dense eigensolves are O(|Λ|³).
pub const DEFAULT_SITE_CAP: usize = 20_000;

/// Words of ChaCha output reserved per site (two u64 draws).
const WORDS_PER_SITE: u128 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Dirichlet,
    Periodic,
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Boundary::Dirichlet => write!(f, "dirichlet"),
            Boundary::Periodic => write!(f, "periodic"),
        }
    }
}

/// Which operator of the pair `H± = Δ ± V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorSign {
    Plus,
    Minus,
}

/// A finite box `{0, …, L-1}^d` with a site-index bijection.
///
/// Sites are indexed row-major over coordinates `(n₁, …, n_d)`: the first
/// coordinate varies slowest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub dimension: usize,
    pub side_length: usize,
    pub boundary: Boundary,
    #[serde(default = "default_site_cap")]
    pub site_cap: usize,
}

fn default_site_cap() -> usize {
    DEFAULT_SITE_CAP
}

impl BoxSpec {
    pub fn new(dimension: usize, side_length: usize, boundary: Boundary) -> Result<Self> {
        Self::with_site_cap(dimension, side_length, boundary, DEFAULT_SITE_CAP)
    }

    pub fn with_site_cap(
        dimension: usize,
        side_length: usize,
        boundary: Boundary,
        site_cap: usize,
    ) -> Result<Self> {
        if !(1..=3).contains(&dimension) {
            return Err(CoreError::InvalidBox(format!(
                "dimension must be 1, 2 or 3, got {dimension}"
            )));
        }
        if side_length == 0 {
            return Err(CoreError::InvalidBox("side length must be positive".into()));
        }
        let mut count: usize = 1;
        for _ in 0..dimension {
            count = count.checked_mul(side_length).ok_or_else(|| {
                CoreError::InvalidBox("site count overflows usize".into())
            })?;
        }
        if count > site_cap {
            return Err(CoreError::InvalidBox(format!(
                "site count {count} exceeds the cap {site_cap}"
            )));
        }
        Ok(BoxSpec { dimension, side_length, boundary, site_cap })
    }

    pub fn site_count(&self) -> usize {
        self.side_length.pow(self.dimension as u32)
    }

    /// Row-major index of a coordinate tuple.
    pub fn site_index(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.dimension);
        let mut idx = 0;
        for &c in coords {
            debug_assert!(c < self.side_length);
            idx = idx * self.side_length + c;
        }
        idx
    }

    /// Inverse of [`site_index`](Self::site_index).
    pub fn site_coords(&self, index: usize) -> Vec<usize> {
        debug_assert!(index < self.site_count());
        let mut coords = vec![0; self.dimension];
        let mut rest = index;
        for slot in coords.iter_mut().rev() {
            *slot = rest % self.side_length;
            rest /= self.side_length;
        }
        coords
    }

    /// The site with all coordinates `⌊L/2⌋`, used by the local density of
    /// states estimator.
    pub fn center_site(&self) -> usize {
        let c = vec![self.side_length / 2; self.dimension];
        self.site_index(&c)
    }

    /// True when the site touches no box face (every coordinate strictly
    /// between 0 and L-1).
    pub fn is_interior(&self, index: usize) -> bool {
        self.site_coords(index)
            .iter()
            .all(|&c| c > 0 && c + 1 < self.side_length)
    }
}

/// Nearest-neighbor hopping matrix of the box graph.
///
/// Entry `(m, n)` is 1 exactly when sites `m` and `n` are nearest neighbors
/// (Dirichlet: inside the box; periodic: modulo L per axis); the diagonal
/// is zero.
pub fn laplacian(spec: &BoxSpec) -> Result<Matrix> {
    if spec.side_length < 2 {
        return Err(CoreError::InvalidBox(format!(
            "side length must be at least 2 for a hopping term, got {}",
            spec.side_length
        )));
    }
    if spec.boundary == Boundary::Periodic && spec.side_length == 2 {
        return Err(CoreError::PeriodicDoubleEdge);
    }
    let n = spec.site_count();
    let mut delta = Matrix::zeros(n, n);
    for site in 0..n {
        let coords = spec.site_coords(site);
        for axis in 0..spec.dimension {
            let mut fwd = coords.clone();
            fwd[axis] += 1;
            if fwd[axis] == spec.side_length {
                if spec.boundary == Boundary::Periodic {
                    fwd[axis] = 0;
                } else {
                    continue;
                }
            }
            let other = spec.site_index(&fwd);
            delta[(site, other)] = 1.0;
            delta[(other, site)] = 1.0;
        }
    }
    Ok(delta)
}

/// Single-site distribution of the i.i.d. potential values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialDistribution {
    /// Uniform on `[a, b]`.
    UniformInterval { a: f64, b: f64 },
    /// `v1` with probability `p`, else `v0`.
    Bernoulli { v0: f64, v1: f64, p: f64 },
    /// Uniform on the union `[a1, b1] ∪ [a2, b2]`, weighted by length.
    TwoIntervalUniform { a1: f64, b1: f64, a2: f64, b2: f64 },
}

/// One closed piece of the support of the single-site distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportInterval {
    pub lo: f64,
    pub hi: f64,
}

impl SupportInterval {
    /// Point masses are reported as degenerate intervals.
    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }
}

impl PotentialDistribution {
    pub fn validate(&self) -> Result<()> {
        let finite = |x: f64, name: &str| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(CoreError::InvalidDistribution(format!("{name} must be finite, got {x}")))
            }
        };
        match *self {
            PotentialDistribution::UniformInterval { a, b } => {
                finite(a, "a")?;
                finite(b, "b")?;
                if a > b {
                    return Err(CoreError::InvalidDistribution(format!(
                        "interval endpoints out of order: {a} > {b}"
                    )));
                }
            }
            PotentialDistribution::Bernoulli { v0, v1, p } => {
                finite(v0, "v0")?;
                finite(v1, "v1")?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(CoreError::InvalidDistribution(format!(
                        "bernoulli probability must lie in [0, 1], got {p}"
                    )));
                }
            }
            PotentialDistribution::TwoIntervalUniform { a1, b1, a2, b2 } => {
                finite(a1, "a1")?;
                finite(b1, "b1")?;
                finite(a2, "a2")?;
                finite(b2, "b2")?;
                if a1 > b1 || a2 > b2 {
                    return Err(CoreError::InvalidDistribution(
                        "interval endpoints out of order".into(),
                    ));
                }
                if b1 >= a2 {
                    return Err(CoreError::InvalidDistribution(format!(
                        "intervals must be separated: b1 = {b1} is not below a2 = {a2}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Support as a finite union of closed intervals, increasing, with point
    /// masses flagged as degenerate intervals.
    pub fn support(&self) -> Vec<SupportInterval> {
        match *self {
            PotentialDistribution::UniformInterval { a, b } => {
                vec![SupportInterval { lo: a, hi: b }]
            }
            PotentialDistribution::Bernoulli { v0, v1, .. } => {
                let (lo, hi) = if v0 <= v1 { (v0, v1) } else { (v1, v0) };
                if lo == hi {
                    vec![SupportInterval { lo, hi }]
                } else {
                    vec![SupportInterval { lo, hi: lo }, SupportInterval { lo: hi, hi }]
                }
            }
            PotentialDistribution::TwoIntervalUniform { a1, b1, a2, b2 } => vec![
                SupportInterval { lo: a1, hi: b1 },
                SupportInterval { lo: a2, hi: b2 },
            ],
        }
    }

    pub fn support_min(&self) -> f64 {
        self.support().first().unwrap().lo
    }

    pub fn support_max(&self) -> f64 {
        self.support().last().unwrap().hi
    }

    /// Whether every support piece carries an absolutely continuous uniform
    /// density, so that `μ((a, a+ε)) ≥ Cε` holds at each edge.
    pub fn has_uniform_edge_density(&self) -> bool {
        match self {
            PotentialDistribution::UniformInterval { a, b } => a < b,
            PotentialDistribution::Bernoulli { .. } => false,
            PotentialDistribution::TwoIntervalUniform { a1, b1, a2, b2 } => a1 < b1 && a2 < b2,
        }
    }
}

/// One sample of the site potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    pub master_seed: u64,
    pub realization_index: u64,
    pub values: Vec<f64>,
}

fn unit_from_bits(bits: u64) -> f64 {
    // 53 random mantissa bits, uniform in [0, 1).
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Draw the i.i.d. potential for the whole box.
///
/// Site `k` reads the ChaCha stream `(seed = master_seed, stream =
/// realization_index)` at word position `4k`, so each value is independent
/// of every other draw.
pub fn sample_potential(
    dist: &PotentialDistribution,
    spec: &BoxSpec,
    master_seed: u64,
    realization_index: u64,
) -> Result<DisorderRealization> {
    dist.validate()?;
    let n = spec.site_count();
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(realization_index);
    let mut values = Vec::with_capacity(n);
    for site in 0..n {
        rng.set_word_pos(site as u128 * WORDS_PER_SITE);
        values.push(draw_site(dist, &mut rng));
    }
    Ok(DisorderRealization { master_seed, realization_index, values })
}

fn draw_site(dist: &PotentialDistribution, rng: &mut ChaCha8Rng) -> f64 {
    let u = unit_from_bits(rng.next_u64());
    match *dist {
        PotentialDistribution::UniformInterval { a, b } => {
            (a + u * (b - a)).clamp(a, b)
        }
        PotentialDistribution::Bernoulli { v0, v1, p } => {
            if u < p {
                v1
            } else {
                v0
            }
        }
        PotentialDistribution::TwoIntervalUniform { a1, b1, a2, b2 } => {
            let len1 = b1 - a1;
            let len2 = b2 - a2;
            let total = len1 + len2;
            if total == 0.0 {
                // Two point masses, equal weight.
                if u < 0.5 {
                    a1
                } else {
                    a2
                }
            } else {
                let t = u * total;
                if t < len1 {
                    (a1 + t).clamp(a1, b1)
                } else {
                    (a2 + (t - len1)).clamp(a2, b2)
                }
            }
        }
    }
}

/// The pair `H± = Δ ± diag(q)` for one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianPair {
    pub h_plus: Matrix,
    pub h_minus: Matrix,
    pub box_spec: BoxSpec,
    pub master_seed: u64,
    pub realization_index: u64,
}

impl HamiltonianPair {
    pub fn operator(&self, sign: OperatorSign) -> &Matrix {
        match sign {
            OperatorSign::Plus => &self.h_plus,
            OperatorSign::Minus => &self.h_minus,
        }
    }
}

/// Assemble `h_plus = Δ + diag(q)` and `h_minus = Δ - diag(q)`.
pub fn assemble_hamiltonians(
    laplacian: &Matrix,
    realization: &DisorderRealization,
    spec: &BoxSpec,
) -> Result<HamiltonianPair> {
    let n = spec.site_count();
    if laplacian.rows() != n || laplacian.cols() != n {
        return Err(CoreError::DimensionMismatch(format!(
            "laplacian is {}x{}, box has {} sites",
            laplacian.rows(),
            laplacian.cols(),
            n
        )));
    }
    if realization.values.len() != n {
        return Err(CoreError::DimensionMismatch(format!(
            "realization has {} values, box has {} sites",
            realization.values.len(),
            n
        )));
    }
    let mut h_plus = laplacian.clone();
    let mut h_minus = laplacian.clone();
    for (site, &q) in realization.values.iter().enumerate() {
        h_plus[(site, site)] += q;
        h_minus[(site, site)] -= q;
    }
    Ok(HamiltonianPair {
        h_plus,
        h_minus,
        box_spec: *spec,
        master_seed: realization.master_seed,
        realization_index: realization.realization_index,
    })
}

/// Ordered list of disjoint closed spectral bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStructure {
    pub bands: Vec<SupportInterval>,
}

impl BandStructure {
    pub fn new(bands: Vec<SupportInterval>) -> Result<Self> {
        if bands.is_empty() {
            return Err(CoreError::InvalidBands("band list is empty".into()));
        }
        for w in bands.windows(2) {
            if w[0].hi >= w[1].lo {
                return Err(CoreError::InvalidBands(format!(
                    "bands [{}, {}] and [{}, {}] are not disjoint increasing",
                    w[0].lo, w[0].hi, w[1].lo, w[1].hi
                )));
            }
        }
        Ok(BandStructure { bands })
    }

    /// Infimum of the almost-sure spectrum.
    pub fn min(&self) -> f64 {
        self.bands[0].lo
    }

    /// Supremum of the almost-sure spectrum.
    pub fn max(&self) -> f64 {
        self.bands.last().unwrap().hi
    }

    /// Whether `x` lies in one of the closed bands.
    pub fn contains(&self, x: f64) -> bool {
        self.bands.iter().any(|b| x >= b.lo && x <= b.hi)
    }
}

/// Band structure of `H±` plus the band-gap flag used by the two-interval
/// tail analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlmostSureBands {
    pub structure: BandStructure,
    /// True when the support pieces, fattened by `2d` on each side, stay
    /// pairwise disjoint; only then do internal spectral gaps survive.
    pub gap_condition_met: bool,
}

/// The almost-sure spectrum `σ(Δ) + supp(±μ)` as a union of closed bands.
///
/// Each support interval `[s, t]` of `±μ` contributes the band
/// `[s - 2d, t + 2d]`; overlapping contributions merge.
pub fn almost_sure_bands(
    dist: &PotentialDistribution,
    dimension: usize,
    sign: OperatorSign,
) -> Result<AlmostSureBands> {
    dist.validate()?;
    if !(1..=3).contains(&dimension) {
        return Err(CoreError::InvalidBox(format!(
            "dimension must be 1, 2 or 3, got {dimension}"
        )));
    }
    let mut pieces = dist.support();
    if sign == OperatorSign::Minus {
        pieces = pieces
            .iter()
            .rev()
            .map(|p| SupportInterval { lo: -p.hi, hi: -p.lo })
            .collect();
    }
    let half_width = 2.0 * dimension as f64;
    let fattened: Vec<SupportInterval> = pieces
        .iter()
        .map(|p| SupportInterval { lo: p.lo - half_width, hi: p.hi + half_width })
        .collect();
    let mut merged: Vec<SupportInterval> = Vec::new();
    for piece in &fattened {
        match merged.last_mut() {
            Some(last) if piece.lo <= last.hi => {
                last.hi = last.hi.max(piece.hi);
            }
            _ => merged.push(*piece),
        }
    }
    let gap_condition_met = fattened.len() >= 2 && merged.len() == fattened.len();
    Ok(AlmostSureBands {
        structure: BandStructure::new(merged)?,
        gap_condition_met,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform01() -> PotentialDistribution {
        PotentialDistribution::UniformInterval { a: 0.0, b: 1.0 }
    }

    #[test]
    fn path_of_two_sites() {
        let spec = BoxSpec::new(1, 2, Boundary::Dirichlet).unwrap();
        let delta = laplacian(&spec).unwrap();
        assert_eq!(delta, Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]));
    }

    #[test]
    fn ring_of_three_sites() {
        let spec = BoxSpec::new(1, 3, Boundary::Periodic).unwrap();
        let delta = laplacian(&spec).unwrap();
        let expected = Matrix::from_rows(&[
            &[0.0, 1.0, 1.0],
            &[1.0, 0.0, 1.0],
            &[1.0, 1.0, 0.0],
        ]);
        assert_eq!(delta, expected);
    }

    #[test]
    fn square_corners_have_two_neighbors() {
        let spec = BoxSpec::new(2, 2, Boundary::Dirichlet).unwrap();
        let delta = laplacian(&spec).unwrap();
        for i in 0..4 {
            let row_sum: f64 = delta.row(i).iter().sum();
            assert_eq!(row_sum, 2.0);
        }
        for i in 0..4 {
            assert_eq!(delta[(i, i)], 0.0);
        }
    }

    #[test]
    fn rejects_degenerate_boxes() {
        let spec = BoxSpec::new(1, 1, Boundary::Dirichlet).unwrap();
        assert!(matches!(laplacian(&spec), Err(CoreError::InvalidBox(_))));
        let spec = BoxSpec::new(1, 2, Boundary::Periodic).unwrap();
        assert!(matches!(laplacian(&spec), Err(CoreError::PeriodicDoubleEdge)));
    }

    #[test]
    fn dirichlet_row_sums_saturate_exactly_on_interior_sites() {
        for spec in [
            BoxSpec::new(2, 4, Boundary::Dirichlet).unwrap(),
            BoxSpec::new(3, 3, Boundary::Dirichlet).unwrap(),
        ] {
            let delta = laplacian(&spec).unwrap();
            let bound = 2.0 * spec.dimension as f64;
            for site in 0..spec.site_count() {
                let row_sum: f64 = delta.row(site).iter().sum();
                assert!(row_sum <= bound);
                assert_eq!(row_sum == bound, spec.is_interior(site));
            }
        }
    }

    #[test]
    fn periodic_boxes_are_regular_graphs() {
        for spec in [
            BoxSpec::new(1, 6, Boundary::Periodic).unwrap(),
            BoxSpec::new(2, 5, Boundary::Periodic).unwrap(),
            BoxSpec::new(3, 3, Boundary::Periodic).unwrap(),
        ] {
            let delta = laplacian(&spec).unwrap();
            let degree = 2.0 * spec.dimension as f64;
            for site in 0..spec.site_count() {
                let row_sum: f64 = delta.row(site).iter().sum();
                assert_eq!(row_sum, degree);
            }
        }
    }

    #[test]
    fn site_indexing_is_a_bijection() {
        let spec = BoxSpec::new(3, 4, Boundary::Dirichlet).unwrap();
        for idx in 0..spec.site_count() {
            let coords = spec.site_coords(idx);
            assert_eq!(spec.site_index(&coords), idx);
        }
    }

    #[test]
    fn site_cap_is_enforced() {
        assert!(BoxSpec::new(3, 30, Boundary::Dirichlet).is_err());
        assert!(BoxSpec::with_site_cap(3, 30, Boundary::Dirichlet, 30_000).is_ok());
    }

    #[test]
    fn degenerate_bernoulli_is_constant() {
        let dist = PotentialDistribution::Bernoulli { v0: 2.5, v1: 2.5, p: 0.3 };
        let spec = BoxSpec::new(1, 16, Boundary::Dirichlet).unwrap();
        let r = sample_potential(&dist, &spec, 7, 0).unwrap();
        assert!(r.values.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn uniform_draws_stay_in_support() {
        let dist = uniform01();
        let spec = BoxSpec::new(1, 200, Boundary::Dirichlet).unwrap();
        for idx in 0..5 {
            let r = sample_potential(&dist, &spec, 99, idx).unwrap();
            assert!(r.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn two_interval_draws_stay_in_support_and_hit_both_pieces() {
        let dist = PotentialDistribution::TwoIntervalUniform {
            a1: 0.0,
            b1: 1.0,
            a2: 9.0,
            b2: 10.0,
        };
        let spec = BoxSpec::new(1, 500, Boundary::Dirichlet).unwrap();
        let r = sample_potential(&dist, &spec, 3, 0).unwrap();
        let in_first = r.values.iter().filter(|&&v| (0.0..=1.0).contains(&v)).count();
        let in_second = r.values.iter().filter(|&&v| (9.0..=10.0).contains(&v)).count();
        assert_eq!(in_first + in_second, r.values.len());
        assert!(in_first > 0 && in_second > 0);
    }

    #[test]
    fn sampling_is_reproducible_bitwise() {
        let dist = uniform01();
        let spec = BoxSpec::new(2, 9, Boundary::Dirichlet).unwrap();
        let a = sample_potential(&dist, &spec, 42, 17).unwrap();
        let b = sample_potential(&dist, &spec, 42, 17).unwrap();
        assert_eq!(a, b);
        let c = sample_potential(&dist, &spec, 42, 18).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn site_values_do_not_depend_on_box_shape() {
        // Same (seed, realization, site index) must give the same value even
        // when the box is larger.
        let dist = uniform01();
        let small = BoxSpec::new(1, 8, Boundary::Dirichlet).unwrap();
        let large = BoxSpec::new(1, 64, Boundary::Dirichlet).unwrap();
        let a = sample_potential(&dist, &small, 5, 2).unwrap();
        let b = sample_potential(&dist, &large, 5, 2).unwrap();
        assert_eq!(a.values[..], b.values[..8]);
    }

    #[test]
    fn assembly_matches_hand_example() {
        let spec = BoxSpec::new(1, 2, Boundary::Dirichlet).unwrap();
        let delta = laplacian(&spec).unwrap();
        let realization = DisorderRealization {
            master_seed: 0,
            realization_index: 0,
            values: vec![1.0, 2.0],
        };
        let pair = assemble_hamiltonians(&delta, &realization, &spec).unwrap();
        assert_eq!(pair.h_plus, Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 2.0]]));
        assert_eq!(pair.h_minus, Matrix::from_rows(&[&[-1.0, 1.0], &[1.0, -2.0]]));
    }

    #[test]
    fn zero_potential_collapses_the_pair() {
        let spec = BoxSpec::new(1, 5, Boundary::Dirichlet).unwrap();
        let delta = laplacian(&spec).unwrap();
        let realization = DisorderRealization {
            master_seed: 0,
            realization_index: 0,
            values: vec![0.0; 5],
        };
        let pair = assemble_hamiltonians(&delta, &realization, &spec).unwrap();
        assert_eq!(pair.h_plus, delta);
        assert_eq!(pair.h_minus, delta);
    }

    #[test]
    fn pair_sums_to_twice_the_laplacian() {
        let dist = uniform01();
        let spec = BoxSpec::new(2, 5, Boundary::Dirichlet).unwrap();
        let delta = laplacian(&spec).unwrap();
        let r = sample_potential(&dist, &spec, 11, 0).unwrap();
        let pair = assemble_hamiltonians(&delta, &r, &spec).unwrap();
        let n = spec.site_count();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(
                    pair.h_plus[(i, j)] + pair.h_minus[(i, j)],
                    2.0 * delta[(i, j)]
                );
            }
        }
    }

    #[test]
    fn minus_of_q_equals_plus_of_negated_q() {
        let dist = uniform01();
        let spec = BoxSpec::new(1, 12, Boundary::Dirichlet).unwrap();
        let delta = laplacian(&spec).unwrap();
        let r = sample_potential(&dist, &spec, 4, 3).unwrap();
        let negated = DisorderRealization {
            values: r.values.iter().map(|v| -v).collect(),
            ..r.clone()
        };
        let pair = assemble_hamiltonians(&delta, &r, &spec).unwrap();
        let flipped = assemble_hamiltonians(&delta, &negated, &spec).unwrap();
        assert_eq!(pair.h_minus, flipped.h_plus);
    }

    #[test]
    fn uniform_bands_in_one_dimension() {
        let bands = almost_sure_bands(&uniform01(), 1, OperatorSign::Plus).unwrap();
        assert_eq!(bands.structure.bands.len(), 1);
        assert_eq!(bands.structure.min(), -2.0);
        assert_eq!(bands.structure.max(), 3.0);
        assert!(!bands.gap_condition_met);
    }

    #[test]
    fn two_interval_bands_and_gap_flag() {
        let dist = PotentialDistribution::TwoIntervalUniform {
            a1: 0.0,
            b1: 1.0,
            a2: 9.0,
            b2: 10.0,
        };
        let bands = almost_sure_bands(&dist, 1, OperatorSign::Plus).unwrap();
        assert_eq!(
            bands.structure.bands,
            vec![
                SupportInterval { lo: -2.0, hi: 3.0 },
                SupportInterval { lo: 7.0, hi: 12.0 }
            ]
        );
        assert!(bands.gap_condition_met);

        let tight = PotentialDistribution::TwoIntervalUniform {
            a1: 0.0,
            b1: 1.0,
            a2: 4.0,
            b2: 5.0,
        };
        let merged = almost_sure_bands(&tight, 1, OperatorSign::Plus).unwrap();
        assert_eq!(merged.structure.bands.len(), 1);
        assert!(!merged.gap_condition_met);
    }

    #[test]
    fn minus_bands_mirror_plus_bands() {
        let dist = PotentialDistribution::TwoIntervalUniform {
            a1: 0.0,
            b1: 1.0,
            a2: 9.0,
            b2: 10.0,
        };
        let plus = almost_sure_bands(&dist, 1, OperatorSign::Plus).unwrap();
        let minus = almost_sure_bands(&dist, 1, OperatorSign::Minus).unwrap();
        let mirrored: Vec<SupportInterval> = plus
            .structure
            .bands
            .iter()
            .rev()
            .map(|b| SupportInterval { lo: -b.hi, hi: -b.lo })
            .collect();
        assert_eq!(minus.structure.bands, mirrored);
    }

    #[test]
    fn rejects_bad_distribution_parameters() {
        assert!(PotentialDistribution::UniformInterval { a: 1.0, b: 0.0 }
            .validate()
            .is_err());
        assert!(PotentialDistribution::Bernoulli { v0: 0.0, v1: 1.0, p: 1.5 }
            .validate()
            .is_err());
        assert!(PotentialDistribution::TwoIntervalUniform { a1: 0.0, b1: 2.0, a2: 1.0, b2: 3.0 }
            .validate()
            .is_err());
    }
}
