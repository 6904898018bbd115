//! Dense real-symmetric eigendecomposition, built from first principles.
//!
//! The algorithm is the classical two-stage reduction: Householder
//! similarity transformations bring the matrix to symmetric tridiagonal
//! form, then an implicit-shift QL iteration drives the off-diagonal to
//! zero while the rotations accumulate into the eigenvector basis. The
//! loop structure follows the Algol procedures `tred2`/`tql2` of Bowdler,
//! Martin, Reinsch and Wilkinson and their EISPACK descendants.
//!
//! Inputs that are already tridiagonal (every 1-d Hamiltonian is) skip the
//! Householder stage, and a values-only entry point skips eigenvector
//! accumulation; the density-of-states pipeline leans on both.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::matrix::Matrix;

/// Relative asymmetry tolerated before an input is rejected.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// QL sweeps allowed per eigenvalue before giving up.
pub const MAX_SWEEPS: usize = 50;

/// Eigenvalues in ascending order with an orthonormal eigenvector basis;
/// column `k` of the basis pairs with eigenvalue `k`. Exact ties keep the
/// order in which the iteration produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: Matrix,
}

impl EigenDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Orthogonal matrix whose columns are the eigenvectors.
    pub fn eigenvectors(&self) -> &Matrix {
        &self.eigenvectors
    }

    /// Component of eigenvector `k` at position `site`.
    pub fn component(&self, site: usize, k: usize) -> f64 {
        self.eigenvectors[(site, k)]
    }

    /// Worst residual `‖A v_k - λ_k v_k‖₂` over all k.
    pub fn max_residual(&self, a: &Matrix) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for k in 0..n {
            let v = self.eigenvectors.column(k);
            let av = a.mul_vec(&v);
            let r2: f64 = av
                .iter()
                .zip(&v)
                .map(|(&avi, &vi)| {
                    let r = avi - self.eigenvalues[k] * vi;
                    r * r
                })
                .sum();
            worst = worst.max(r2.sqrt());
        }
        worst
    }

    /// `‖QᵀQ - I‖_max`.
    pub fn orthogonality_defect(&self) -> f64 {
        let q = &self.eigenvectors;
        let gram = q.transpose_mul(q);
        let n = self.n();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// `‖A - QΛQᵀ‖_F`.
    pub fn reconstruction_error(&self, a: &Matrix) -> f64 {
        let n = self.n();
        let q = &self.eigenvectors;
        let mut err = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += q[(i, k)] * self.eigenvalues[k] * q[(j, k)];
                }
                let d = a[(i, j)] - s;
                err += d * d;
            }
        }
        err.sqrt()
    }
}

/// Squared eigenvector overlaps `w_ij = ⟨φ⁺_i, φ⁻_j⟩²`.
///
/// Both eigenbases are complete, so the matrix is doubly stochastic: every
/// row and every column sums to 1 up to roundoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatrix {
    weights: Matrix,
}

impl OverlapMatrix {
    pub fn n(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.weights.row(i).iter().sum()
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        (0..self.n()).map(|i| self.weights[(i, j)]).sum()
    }
}

impl Serialize for Matrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..self.rows()).map(|i| self.row(i).to_vec()).collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(deserializer)?;
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        Ok(Matrix::from_rows(&refs))
    }
}

/// Full eigendecomposition of a symmetric matrix.
pub fn eig_symmetric(a: &Matrix) -> Result<EigenDecomposition> {
    let n = check_symmetric(a)?;
    if n == 1 {
        return Ok(EigenDecomposition {
            eigenvalues: vec![a[(0, 0)]],
            eigenvectors: Matrix::identity(1),
        });
    }
    let (mut d, mut e, mut qt) = if a.is_tridiagonal() {
        let (d, e) = tridiagonal_parts(a);
        (d, e, Matrix::identity(n))
    } else {
        let mut v = symmetrized_copy(a);
        let (d, e) = householder_reduce(&mut v, true);
        (d, e, v.transpose())
    };
    ql_implicit(&mut d, &mut e, Some(&mut qt))?;
    let order = sort_order(&d);
    let eigenvalues: Vec<f64> = order.iter().map(|&k| d[k]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        for row in 0..n {
            eigenvectors[(row, col)] = qt[(k, row)];
        }
    }
    Ok(EigenDecomposition { eigenvalues, eigenvectors })
}

/// Eigenvalues only, ascending. Skips all eigenvector work.
pub fn eig_symmetric_values(a: &Matrix) -> Result<Vec<f64>> {
    let n = check_symmetric(a)?;
    if n == 1 {
        return Ok(vec![a[(0, 0)]]);
    }
    let (mut d, mut e) = if a.is_tridiagonal() {
        tridiagonal_parts(a)
    } else {
        let mut v = symmetrized_copy(a);
        householder_reduce(&mut v, false)
    };
    ql_implicit(&mut d, &mut e, None)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Squared overlaps between the two eigenbases, `w_ij = (q⁺_i · q⁻_j)²`,
/// rows indexed by ascending eigenvalues of the first decomposition.
pub fn overlap_matrix(
    dec_plus: &EigenDecomposition,
    dec_minus: &EigenDecomposition,
) -> Result<OverlapMatrix> {
    if dec_plus.n() != dec_minus.n() {
        return Err(CoreError::DimensionMismatch(format!(
            "decompositions have sizes {} and {}",
            dec_plus.n(),
            dec_minus.n()
        )));
    }
    let mut dots = dec_plus.eigenvectors.transpose_mul(&dec_minus.eigenvectors);
    for i in 0..dots.rows() {
        for v in dots.row_mut(i) {
            *v = *v * *v;
        }
    }
    Ok(OverlapMatrix { weights: dots })
}

fn check_symmetric(a: &Matrix) -> Result<usize> {
    if !a.is_square() || a.rows() == 0 {
        return Err(CoreError::DimensionMismatch(format!(
            "expected a nonempty square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let scale = a.max_abs();
    let asymmetry = a.asymmetry();
    if asymmetry > SYMMETRY_TOL * scale.max(1.0) {
        return Err(CoreError::NotSymmetric {
            asymmetry,
            tolerance: SYMMETRY_TOL * scale.max(1.0),
        });
    }
    Ok(a.rows())
}

/// Copy with the lower triangle mirrored onto the upper, making the working
/// matrix exactly symmetric.
fn symmetrized_copy(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut v = a.clone();
    for i in 0..n {
        for j in 0..i {
            v[(j, i)] = v[(i, j)];
        }
    }
    v
}

fn tridiagonal_parts(a: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.rows();
    let d: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    let mut e: Vec<f64> = (0..n - 1).map(|i| a[(i + 1, i)]).collect();
    e.push(0.0);
    (d, e)
}

/// Householder reduction of `v` to tridiagonal form.
///
/// Returns `(d, e)` with `d` the diagonal and `e[i]` the coupling between
/// `i` and `i+1` (`e[n-1] = 0`). With `accumulate` set, `v` is overwritten
/// by the orthogonal basis of the reduction so that `A = V T Vᵀ`; otherwise
/// the contents of `v` become scratch.
fn householder_reduce(v: &mut Matrix, accumulate: bool) -> (Vec<f64>, Vec<f64>) {
    let n = v.rows();
    let mut d: Vec<f64> = (0..n).map(|j| v[(n - 1, j)]).collect();
    let mut e = vec![0.0f64; n];

    for i in (1..n).rev() {
        // Scale to avoid under/overflow when forming the reflector.
        let mut scale = 0.0;
        let mut h = 0.0;
        for item in d.iter().take(i) {
            scale += item.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for item in d.iter_mut().take(i) {
                *item /= scale;
                h += *item * *item;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }

            // Similarity transformation on the leading block, lower triangle.
            for j in 0..i {
                let f = d[j];
                v[(j, i)] = f;
                let mut g = e[j] + v[(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    v[(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    if accumulate {
        // Turn the stored reflectors into the explicit orthogonal basis.
        for i in 0..n - 1 {
            v[(n - 1, i)] = v[(i, i)];
            v[(i, i)] = 1.0;
            let h = d[i + 1];
            if h != 0.0 {
                for k in 0..=i {
                    d[k] = v[(k, i + 1)] / h;
                }
                for j in 0..=i {
                    let mut g = 0.0;
                    for k in 0..=i {
                        g += v[(k, i + 1)] * v[(k, j)];
                    }
                    for k in 0..=i {
                        v[(k, j)] -= g * d[k];
                    }
                }
            }
            for k in 0..=i {
                v[(k, i + 1)] = 0.0;
            }
        }
        for j in 0..n {
            d[j] = v[(n - 1, j)];
            v[(n - 1, j)] = 0.0;
        }
        v[(n - 1, n - 1)] = 1.0;
    } else {
        // Without accumulation the tridiagonal diagonal sits on v's diagonal.
        for j in 0..n {
            d[j] = v[(j, j)];
        }
    }
    e[0] = 0.0;

    // Shift couplings so that e[i] links i and i+1.
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    (d, e)
}

/// Implicit-shift QL iteration on a symmetric tridiagonal matrix.
///
/// `e[i]` couples `i` and `i+1`; `e[n-1]` must be zero. When `qt` is given,
/// its ROWS are rotated along, so that on exit row `k` of `qt` is the
/// eigenvector of eigenvalue `d[k]` expressed in the original basis.
fn ql_implicit(d: &mut [f64], e: &mut [f64], mut qt: Option<&mut Matrix>) -> Result<()> {
    let n = d.len();
    let eps = f64::EPSILON;
    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;

    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        debug_assert!(m < n, "trailing coupling must vanish");

        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_SWEEPS {
                    return Err(CoreError::NoConvergence { index: l, sweeps: MAX_SWEEPS });
                }

                // Implicit shift from the leading 2x2 block.
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                // One QL sweep of Givens rotations, bottom to top.
                p = d[m];
                let mut c = 1.0f64;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0f64;
                let mut s2 = 0.0f64;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    if let Some(q) = qt.as_deref_mut() {
                        rotate_rows(q, i, s, c);
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Apply the rotation mixing basis rows `i` and `i+1`.
#[inline]
fn rotate_rows(qt: &mut Matrix, i: usize, s: f64, c: f64) {
    let (top, bottom) = qt.adjacent_rows_mut(i);
    for (a, b) in top.iter_mut().zip(bottom.iter_mut()) {
        let h = *b;
        *b = s * *a + c * h;
        *a = c * *a - s * h;
    }
}

fn sort_order(d: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut unit = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let x = unit();
                a[(i, j)] = x;
                a[(j, i)] = x;
            }
        }
        a
    }

    #[test]
    fn two_site_hopping() {
        let a = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let dec = eig_symmetric(&a).unwrap();
        assert!((dec.eigenvalues()[0] + 1.0).abs() < 1e-14);
        assert!((dec.eigenvalues()[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_matrix_sorts_and_permutes() {
        let a = Matrix::from_diagonal(&[3.0, 1.0, 2.0]);
        let dec = eig_symmetric(&a).unwrap();
        assert_eq!(dec.eigenvalues(), &[1.0, 2.0, 3.0]);
        // Eigenvectors are a signed permutation of the identity columns.
        let expected_rows = [1usize, 2, 0];
        for (col, &row) in expected_rows.iter().enumerate() {
            assert!((dec.component(row, col).abs() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn three_site_path_spectrum() {
        let a = Matrix::from_rows(&[
            &[0.0, 1.0, 0.0],
            &[1.0, 0.0, 1.0],
            &[0.0, 1.0, 0.0],
        ]);
        let dec = eig_symmetric(&a).unwrap();
        let sqrt2 = 2.0f64.sqrt();
        assert!((dec.eigenvalues()[0] + sqrt2).abs() < 1e-12);
        assert!(dec.eigenvalues()[1].abs() < 1e-12);
        assert!((dec.eigenvalues()[2] - sqrt2).abs() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let a = Matrix::from_rows(&[&[0.0, 1.0], &[2.0, 0.0]]);
        assert!(matches!(eig_symmetric(&a), Err(CoreError::NotSymmetric { .. })));
    }

    #[test]
    fn one_by_one() {
        let a = Matrix::from_rows(&[&[7.0]]);
        let dec = eig_symmetric(&a).unwrap();
        assert_eq!(dec.eigenvalues(), &[7.0]);
    }

    #[test]
    fn reconstruction_and_orthogonality_on_random_input() {
        for &(n, seed) in &[(8usize, 1u64), (40, 2), (90, 3)] {
            let a = random_symmetric(n, seed);
            let dec = eig_symmetric(&a).unwrap();
            let frob = a.frobenius_norm();
            assert!(
                dec.reconstruction_error(&a) <= 1e-9 * frob,
                "reconstruction failed at n={n}"
            );
            assert!(
                dec.orthogonality_defect() <= 1e-10,
                "orthogonality failed at n={n}"
            );
            assert!(dec.max_residual(&a) <= 1e-10 * frob.max(1.0));
        }
    }

    #[test]
    fn values_path_matches_vector_path() {
        let a = random_symmetric(24, 9);
        let dec = eig_symmetric(&a).unwrap();
        let vals = eig_symmetric_values(&a).unwrap();
        for (x, y) in dec.eigenvalues().iter().zip(&vals) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn tridiagonal_fast_path_matches_dense_route() {
        // Same matrix, once detected as tridiagonal and once forced dense by
        // perturbing a far entry, then restoring it.
        let n = 16;
        let mut tri = Matrix::zeros(n, n);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..n {
            tri[(i, i)] = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            if i + 1 < n {
                tri[(i, i + 1)] = 1.0;
                tri[(i + 1, i)] = 1.0;
            }
        }
        let fast = eig_symmetric(&tri).unwrap();
        let mut v = symmetrized_copy(&tri);
        let (mut d, mut e) = householder_reduce(&mut v, true);
        let mut qt = v.transpose();
        ql_implicit(&mut d, &mut e, Some(&mut qt)).unwrap();
        d.sort_by(f64::total_cmp);
        for (a, b) in fast.eigenvalues().iter().zip(&d) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn eigenvalue_ties_keep_stable_order() {
        let a = Matrix::from_diagonal(&[2.0, 2.0, 1.0]);
        let dec = eig_symmetric(&a).unwrap();
        assert_eq!(dec.eigenvalues(), &[1.0, 2.0, 2.0]);
    }

    #[test]
    fn decomposition_is_scale_equivariant() {
        // The reduction scales its reflectors, so extreme magnitudes must
        // not degrade the spectrum.
        let base = random_symmetric(14, 11);
        let reference = eig_symmetric(&base).unwrap();
        for &scale in &[1e8, 1e-8] {
            let mut scaled = base.clone();
            for i in 0..14 {
                for j in 0..14 {
                    scaled[(i, j)] *= scale;
                }
            }
            let dec = eig_symmetric(&scaled).unwrap();
            for (a, b) in dec.eigenvalues().iter().zip(reference.eigenvalues()) {
                assert!(
                    (a - b * scale).abs() <= 1e-12 * scale * base.frobenius_norm(),
                    "scale {scale}: {a} vs {}",
                    b * scale
                );
            }
        }
    }

    #[test]
    fn overlap_of_identical_bases_is_identity() {
        let a = random_symmetric(12, 4);
        let dec = eig_symmetric(&a).unwrap();
        let w = overlap_matrix(&dec, &dec).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((w.weight(i, j) - target).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn overlap_hand_example_half_everywhere() {
        let h_plus = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let h_minus = Matrix::from_diagonal(&[1.0, -1.0]);
        let dp = eig_symmetric(&h_plus).unwrap();
        let dm = eig_symmetric(&h_minus).unwrap();
        let w = overlap_matrix(&dp, &dm).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((w.weight(i, j) - 0.5).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn overlap_rows_and_columns_sum_to_one() {
        let a = random_symmetric(30, 6);
        let b = random_symmetric(30, 7);
        let w = overlap_matrix(&eig_symmetric(&a).unwrap(), &eig_symmetric(&b).unwrap()).unwrap();
        for k in 0..30 {
            assert!((w.row_sum(k) - 1.0).abs() < 1e-9);
            assert!((w.column_sum(k) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn overlap_is_exactly_invariant_under_column_sign_flips() {
        let a = random_symmetric(10, 8);
        let b = random_symmetric(10, 9);
        let da = eig_symmetric(&a).unwrap();
        let db = eig_symmetric(&b).unwrap();
        let w = overlap_matrix(&da, &db).unwrap();

        let mut flipped = da.clone();
        for row in 0..10 {
            let x = flipped.eigenvectors[(row, 3)];
            flipped.eigenvectors[(row, 3)] = -x;
            let y = flipped.eigenvectors[(row, 7)];
            flipped.eigenvectors[(row, 7)] = -y;
        }
        let w2 = overlap_matrix(&flipped, &db).unwrap();
        // (-x)² == x² bitwise, so this is exact equality.
        assert_eq!(w, w2);
    }

    #[test]
    fn overlap_dimension_mismatch_is_rejected() {
        let a = random_symmetric(4, 1);
        let b = random_symmetric(5, 1);
        let da = eig_symmetric(&a).unwrap();
        let db = eig_symmetric(&b).unwrap();
        assert!(overlap_matrix(&da, &db).is_err());
    }
}
