//! Complex linear-algebra helpers shared by the subspace estimators.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

const SVD_MAX_SWEEPS: usize = 100_000;

/// Singular values in non-increasing order.
pub fn singular_values(m: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    let svd = m
        .clone()
        .try_svd(false, false, f64::EPSILON, SVD_MAX_SWEEPS)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(sv)
}

/// Leading `k` left singular vectors and all singular values, sorted
/// non-increasing.
pub fn leading_left_singular(
    m: &DMatrix<Complex64>,
    k: usize,
) -> Result<(DMatrix<Complex64>, Vec<f64>)> {
    let min_dim = m.nrows().min(m.ncols());
    if k == 0 || k > min_dim {
        return Err(Error::InvalidArgument(format!(
            "cannot take {k} singular vectors of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let svd = m
        .clone()
        .try_svd(true, false, f64::EPSILON, SVD_MAX_SWEEPS)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let u = svd.u.as_ref().expect("left singular vectors requested");

    let mut order: Vec<usize> = (0..min_dim).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());

    let basis = DMatrix::from_fn(m.nrows(), k, |r, c| u[(r, order[c])]);
    let values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    Ok((basis, values))
}

/// Thin QR factorization `m = Q R` with `Q` of the same width as `m`.
pub fn thin_qr(m: &DMatrix<Complex64>) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let qr = m.clone().qr();
    (qr.q(), qr.r())
}

/// Least-squares solution of `a x = b` for a full-column-rank tall `a`.
pub fn least_squares(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    if a.nrows() < a.ncols() {
        return Err(Error::InvalidArgument(format!(
            "least squares needs rows >= cols, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() != b.nrows() {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: {} rows vs {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    let (q, r) = thin_qr(a);
    let ratio = diag_ratio(&r);
    if ratio < 1e-14 {
        return Err(Error::Numerical(format!(
            "rank-deficient least squares, |R_kk| ratio = {ratio:.3e}"
        )));
    }
    let rhs = q.adjoint() * b;
    r.solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::Numerical("singular triangular solve".into()))
}

/// Smallest-to-largest ratio of the diagonal magnitudes of an upper-triangular
/// factor; a proxy for the condition of the factored matrix.
pub fn diag_ratio(r: &DMatrix<Complex64>) -> f64 {
    let k = r.nrows().min(r.ncols());
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..k {
        let v = r[(i, i)].norm();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi == 0.0 {
        0.0
    } else {
        lo / hi
    }
}

/// Eigenvalues of a general complex square matrix.
pub fn eigenvalues(a: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let t = schur_t(a)?;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Eigenvalues and right eigenvectors of a small general complex matrix.
///
/// Uses the Schur form followed by back-substitution on the triangular
/// factor. Eigenvectors are unit-norm; near-defective matrices get a floored
/// denominator instead of an error, which is adequate for the small
/// rotation matrices this crate diagonalizes.
pub fn eigen(a: &DMatrix<Complex64>) -> Result<(Vec<Complex64>, DMatrix<Complex64>)> {
    let n = a.nrows();
    let schur = a
        .clone()
        .try_schur(f64::EPSILON, SVD_MAX_SWEEPS)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    let (q, t) = schur.unpack();
    let values: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();

    let t_norm = t.iter().map(|v| v.norm()).fold(0.0f64, f64::max).max(1e-300);
    let floor = 1e-15 * t_norm;

    let mut vectors = DMatrix::from_element(n, n, Complex64::default());
    let mut y = vec![Complex64::default(); n];
    for (i, &lambda) in values.iter().enumerate() {
        y.iter_mut().for_each(|v| *v = Complex64::default());
        y[i] = Complex64::new(1.0, 0.0);
        for j in (0..i).rev() {
            let mut s = Complex64::default();
            for m in (j + 1)..=i {
                s += t[(j, m)] * y[m];
            }
            let mut denom = t[(j, j)] - lambda;
            if denom.norm() < floor {
                denom = Complex64::new(floor, 0.0);
            }
            y[j] = -s / denom;
        }
        let mut x = vec![Complex64::default(); n];
        for r in 0..n {
            for m in 0..=i {
                x[r] += q[(r, m)] * y[m];
            }
        }
        let norm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        for r in 0..n {
            vectors[(r, i)] = x[r] / norm;
        }
    }
    Ok((values, vectors))
}

fn schur_t(a: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let schur = a
        .clone()
        .try_schur(f64::EPSILON, SVD_MAX_SWEEPS)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok(t)
}

/// `m - Q (Q^H m)`: the component of each column of `m` orthogonal to the
/// orthonormal columns of `q`.
pub fn project_out(q: &DMatrix<Complex64>, m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    m - q * (q.adjoint() * m)
}

/// Relative residual of `m` outside the span of the orthonormal basis `u`:
/// `||(I - U U^H) m||_F / ||m||_F`.
pub fn span_residual_rel(u: &DMatrix<Complex64>, m: &DMatrix<Complex64>) -> f64 {
    project_out(u, m).norm() / m.norm()
}

/// Largest principal angle (radians) between the column spans of `a` and `b`.
pub fn max_principal_angle(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Result<f64> {
    let (qa, _) = thin_qr(a);
    let (qb, _) = thin_qr(b);
    let sv = singular_values(&(qa.adjoint() * qb))?;
    let c = sv.last().copied().unwrap_or(0.0).clamp(0.0, 1.0);
    Ok(c.acos())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phasor(p: f64) -> Complex64 {
        Complex64::from_polar(1.0, p)
    }

    #[test]
    fn leading_left_singular_sorts_descending() {
        let m = DMatrix::from_fn(8, 5, |r, c| {
            Complex64::new((r as f64 * 1.3 + c as f64).sin(), (r as f64 - 2.0 * c as f64).cos())
        });
        let (u, sv) = leading_left_singular(&m, 3).unwrap();
        assert_eq!(u.ncols(), 3);
        for w in sv.windows(2) {
            assert!(w[0] >= w[1]);
        }
        // orthonormal columns
        let g = u.adjoint() * &u;
        for r in 0..3 {
            for c in 0..3 {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!((g[(r, c)] - Complex64::new(expect, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn least_squares_recovers_exact_solution() {
        let a = DMatrix::from_fn(7, 3, |r, c| {
            Complex64::new(
                (1.3 * r as f64 + 0.7 * c as f64).sin(),
                (0.9 * r as f64 * c as f64 + 0.2).cos(),
            )
        });
        let x_true = DMatrix::from_fn(3, 2, |r, c| Complex64::new(r as f64 + 0.5, c as f64 - 1.0));
        let b = &a * &x_true;
        let x = least_squares(&a, &b).unwrap();
        assert!((&x - &x_true).norm() < 1e-10);
    }

    #[test]
    fn eigen_recovers_diagonalizable_matrix() {
        // A = V D V^{-1} with known unit-modulus eigenvalues
        let d = [phasor(-0.3), phasor(-1.1), phasor(-2.4)];
        let v = DMatrix::from_fn(3, 3, |r, c| {
            Complex64::new(
                (0.8 * r as f64 + 1.7 * c as f64).cos(),
                (1.1 * r as f64 * c as f64 - 0.4).sin(),
            )
        });
        let dm = DMatrix::from_fn(3, 3, |r, c| if r == c { d[r] } else { Complex64::default() });
        let vinv = v.clone().try_inverse().unwrap();
        let a = &v * dm * &vinv;
        let (vals, vecs) = eigen(&a).unwrap();
        // every eigenpair satisfies A x = lambda x
        for i in 0..3 {
            let x = vecs.column(i).into_owned();
            let r = &a * &x - &x * vals[i];
            assert!(r.norm() < 1e-9, "eigenpair {i} residual {}", r.norm());
        }
        // eigenvalues match the planted ones up to permutation
        let mut got: Vec<f64> = vals.iter().map(|v| v.arg()).collect();
        let mut want: Vec<f64> = d.iter().map(|v| v.arg()).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-9);
        }
    }

    #[test]
    fn project_out_annihilates_in_span_columns() {
        let m = DMatrix::from_fn(6, 2, |r, c| Complex64::new((r + c) as f64, r as f64 * 0.5));
        let (q, _) = thin_qr(&m);
        let res = project_out(&q, &m);
        assert!(res.norm() < 1e-10 * m.norm());
    }

    #[test]
    fn principal_angle_of_identical_spans_is_zero() {
        let m = DMatrix::from_fn(6, 2, |r, c| Complex64::new((r + 2 * c) as f64, -(r as f64)));
        // rotate the basis by an arbitrary unitary mix
        let mix = DMatrix::from_fn(2, 2, |r, c| {
            if r == c {
                Complex64::new(0.6, 0.0)
            } else if r < c {
                Complex64::new(0.0, 0.8)
            } else {
                Complex64::new(0.0, 0.8)
            }
        });
        let rotated = &m * mix;
        let angle = max_principal_angle(&m, &rotated).unwrap();
        assert!(angle < 1e-7, "angle {angle}");
    }
}
