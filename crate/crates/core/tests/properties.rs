//! Property tests for the structural invariants of the pipeline.

use ilac_core::eigen::{eig_symmetric, overlap_matrix};
use ilac_core::geometry::{self, ExactBands, Rat};
use ilac_core::interval::Interval;
use ilac_core::lattice::{
    self, almost_sure_bands, BoxSpec, Boundary, OperatorSign, PotentialDistribution,
};
use ilac_core::matrix::Matrix;
use ilac_core::measures::{dos_estimate, DosEstimator, EmpiricalMeasure1D};
use num_bigint::BigInt;
use proptest::prelude::*;

fn symmetric_of(n: usize) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(-5.0f64..5.0, n * (n + 1) / 2).prop_map(move |vals| {
        let mut m = Matrix::zeros(n, n);
        let mut it = vals.into_iter();
        for i in 0..n {
            for j in 0..=i {
                let v = it.next().unwrap();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    })
}

fn symmetric_matrix(max_n: usize) -> impl Strategy<Value = Matrix> {
    (2..=max_n).prop_flat_map(symmetric_of).no_shrink()
}

fn symmetric_pair(max_n: usize) -> impl Strategy<Value = (Matrix, Matrix)> {
    (2..=max_n)
        .prop_flat_map(|n| (symmetric_of(n), symmetric_of(n)))
        .no_shrink()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn eigensolver_reconstructs_random_symmetric_input(a in symmetric_matrix(28)) {
        let dec = eig_symmetric(&a).unwrap();
        let frob = a.frobenius_norm();
        prop_assert!(dec.reconstruction_error(&a) <= 1e-9 * frob.max(1e-30));
        prop_assert!(dec.orthogonality_defect() <= 1e-10);
        // Ascending eigenvalues.
        for w in dec.eigenvalues().windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn overlaps_are_doubly_stochastic((a, b) in symmetric_pair(16)) {
        let da = eig_symmetric(&a).unwrap();
        let db = eig_symmetric(&b).unwrap();
        let w = overlap_matrix(&da, &db).unwrap();
        for k in 0..w.n() {
            prop_assert!((w.row_sum(k) - 1.0).abs() < 1e-9);
            prop_assert!((w.column_sum(k) - 1.0).abs() < 1e-9);
            for j in 0..w.n() {
                prop_assert!(w.weight(k, j) >= 0.0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dirichlet_spectrum_respects_compression_bounds(
        side in 4usize..24,
        seed in 0u64..1000,
    ) {
        let spec = BoxSpec::new(1, side, Boundary::Dirichlet).unwrap();
        let dist = PotentialDistribution::UniformInterval { a: 0.0, b: 1.0 };
        let delta = lattice::laplacian(&spec).unwrap();
        let q = lattice::sample_potential(&dist, &spec, seed, 0).unwrap();
        let pair = lattice::assemble_hamiltonians(&delta, &q, &spec).unwrap();
        let dec = eig_symmetric(&pair.h_plus).unwrap();
        let d = spec.dimension as f64;
        let lo = -2.0 * d + dist.support_min();
        let hi = 2.0 * d + dist.support_max();
        prop_assert!(dec.eigenvalues()[0] >= lo - 1e-9);
        prop_assert!(dec.eigenvalues().last().unwrap() <= &(hi + 1e-9));
    }

    #[test]
    fn sampling_is_a_pure_function_of_the_key(
        seed in 0u64..500,
        idx in 0u64..50,
        side in 2usize..40,
    ) {
        let spec = BoxSpec::new(1, side, Boundary::Dirichlet).unwrap();
        let dist = PotentialDistribution::UniformInterval { a: -1.0, b: 2.0 };
        let a = lattice::sample_potential(&dist, &spec, seed, idx).unwrap();
        let b = lattice::sample_potential(&dist, &spec, seed, idx).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn band_negation_symmetry(
        a1 in -3.0f64..0.0,
        w1 in 0.01f64..2.0,
        gap in 0.01f64..6.0,
        w2 in 0.01f64..2.0,
    ) {
        let dist = PotentialDistribution::TwoIntervalUniform {
            a1,
            b1: a1 + w1,
            a2: a1 + w1 + gap,
            b2: a1 + w1 + gap + w2,
        };
        let plus = almost_sure_bands(&dist, 2, OperatorSign::Plus).unwrap();
        let minus = almost_sure_bands(&dist, 2, OperatorSign::Minus).unwrap();
        let mirrored: Vec<(f64, f64)> = plus
            .structure
            .bands
            .iter()
            .rev()
            .map(|b| (-b.hi, -b.lo))
            .collect();
        let got: Vec<(f64, f64)> = minus.structure.bands.iter().map(|b| (b.lo, b.hi)).collect();
        prop_assert_eq!(got, mirrored);
        prop_assert_eq!(plus.gap_condition_met, minus.gap_condition_met);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn measure_interval_evaluation_is_monotone(
        atoms in proptest::collection::vec((-10.0f64..10.0, 0.0f64..1.0), 1..60),
        lo in -12.0f64..12.0,
        width in 0.0f64..8.0,
        widen in 0.0f64..4.0,
    ) {
        use ilac_core::measures::Provenance;
        let m = EmpiricalMeasure1D::from_atoms(atoms, Provenance::DosCountPerVolume);
        let inner = Interval::half_open(lo, lo + width);
        let outer = Interval::half_open(lo - widen, lo + width + widen);
        prop_assert!(m.mass(&inner) <= m.mass(&outer) + 1e-15);
        prop_assert!(m.mass(&inner) >= 0.0);
        // Whole-line mass equals total mass.
        prop_assert!((m.mass(&Interval::all()) - m.total_mass()).abs() < 1e-12);
    }

    #[test]
    fn merge_is_order_independent(
        seeds in proptest::collection::vec(0u64..100, 2..6),
        perm_seed in 0u64..64,
    ) {
        let spec = BoxSpec::new(1, 5, Boundary::Dirichlet).unwrap();
        let delta = lattice::laplacian(&spec).unwrap();
        let dist = PotentialDistribution::UniformInterval { a: 0.0, b: 1.0 };
        let mut parts: Vec<EmpiricalMeasure1D> = Vec::new();
        for &s in &seeds {
            let q = lattice::sample_potential(&dist, &spec, s, 0).unwrap();
            let pair = lattice::assemble_hamiltonians(&delta, &q, &spec).unwrap();
            let dec = eig_symmetric(&pair.h_plus).unwrap();
            parts.push(dos_estimate(&dec, &spec, DosEstimator::CountPerVolume));
        }
        let merged = EmpiricalMeasure1D::merge_equal(&parts).unwrap();
        // Deterministic pseudo-shuffle.
        let mut shuffled = parts.clone();
        let n = shuffled.len();
        for i in 0..n {
            let j = ((perm_seed as usize).wrapping_mul(31).wrapping_add(i * 17)) % n;
            shuffled.swap(i, j);
        }
        let remerged = EmpiricalMeasure1D::merge_equal(&shuffled).unwrap();
        for iv in [
            Interval::half_open(-2.0, -0.7),
            Interval::half_open(-0.7, 0.9),
            Interval::half_open(0.9, 3.0),
            Interval::all(),
        ] {
            prop_assert!((merged.mass(&iv) - remerged.mass(&iv)).abs() < 1e-12);
        }
    }
}

// ── corner classification against the brute-force oracle ────────────────

/// Independent classifier: sample the line at all candidate abscissae (and
/// midpoints between them) with exact rational comparisons.
pub fn oracle_classify(
    sigma: &geometry::RectangleSet,
    corner: &(Rat, Rat),
) -> (bool, Vec<(Rat, Rat)>) {
    let s = &corner.0 + &corner.1;
    let mut ts: Vec<Rat> = Vec::new();
    for r in &sigma.rectangles {
        ts.push(r.x_lo.clone());
        ts.push(r.x_hi.clone());
        ts.push(&s - &r.y_lo);
        ts.push(&s - &r.y_hi);
    }
    ts.sort();
    ts.dedup();
    let in_sigma = |x: &Rat, y: &Rat| sigma.rectangles.iter().any(|r| r.contains(x, y));
    let two = Rat::from_integer(BigInt::from(2));

    let mut good = true;
    let mut k_set: Vec<(Rat, Rat)> = Vec::new();
    for w in ts.windows(2) {
        let mid = (&w[0] + &w[1]) / &two;
        let y = &s - &mid;
        if in_sigma(&mid, &y) {
            good = false;
        }
    }
    for t in &ts {
        let y = &s - t;
        if !in_sigma(t, &y) {
            continue;
        }
        let is_corner = sigma.rectangles.iter().any(|r| {
            (*t == r.x_lo || *t == r.x_hi) && (y == r.y_lo || y == r.y_hi)
        });
        if is_corner {
            k_set.push((t.clone(), y));
        } else {
            good = false;
        }
    }
    k_set.sort();
    k_set.dedup();
    (good, k_set)
}

fn random_two_band_config(seed: u64) -> (ExactBands, ExactBands) {
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = |rng: &mut ChaCha8Rng| loop {
        // Half-integer grid provokes exact coincidences across sides.
        let mut vals: Vec<i64> = (0..4).map(|_| (rng.next_u64() % 33) as i64).collect();
        vals.sort_unstable();
        if vals[1] < vals[2] {
            let rat = |v: i64| Rat::new(BigInt::from(v), BigInt::from(2));
            return ExactBands::new(vec![
                (rat(vals[0]), rat(vals[1])),
                (rat(vals[2]), rat(vals[3])),
            ])
            .unwrap();
        }
    };
    (side(&mut rng), side(&mut rng))
}

#[test]
fn classifier_agrees_with_oracle_on_random_two_band_configs() {
    for seed in 0..60 {
        let (plus, minus) = random_two_band_config(seed);
        let sigma = geometry::build_support(&plus, &minus);
        let mut corners: Vec<(Rat, Rat)> = sigma
            .rectangles
            .iter()
            .flat_map(|r| r.corners())
            .collect();
        corners.sort();
        corners.dedup();
        for corner in corners {
            let report = geometry::classify_corner(&sigma, &corner).unwrap();
            let (oracle_good, oracle_k) = oracle_classify(&sigma, &corner);
            assert_eq!(
                report.is_good, oracle_good,
                "seed {seed}, corner ({}, {})",
                corner.0, corner.1
            );
            if report.is_good {
                let got: Vec<(Rat, Rat)> = report
                    .k_set
                    .iter()
                    .map(|k| (k.x.clone(), k.y.clone()))
                    .collect();
                assert_eq!(got, oracle_k, "seed {seed}: K sets differ");
            }
        }
    }
}

#[test]
fn only_lower_left_and_top_right_corners_classify_good() {
    for seed in 0..40 {
        let (plus, minus) = random_two_band_config(seed);
        let sigma = geometry::build_support(&plus, &minus);
        for rect in &sigma.rectangles {
            if rect.is_degenerate() {
                continue;
            }
            for corner in [
                (rect.x_hi.clone(), rect.y_lo.clone()),
                (rect.x_lo.clone(), rect.y_hi.clone()),
            ] {
                let report = geometry::classify_corner(&sigma, &corner).unwrap();
                assert!(
                    !report.is_good,
                    "seed {seed}: off-diagonal corner ({}, {}) classified good",
                    corner.0, corner.1
                );
            }
        }
    }
}
