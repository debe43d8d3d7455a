//! Small dense helpers shared by the solvers and the fixed point machinery.
//!
//! Matrices are [`nalgebra::DMatrix`] (column-major). Batched products use
//! row-major batches of vectors, one vector per row.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// `[Re(z); Im(z)]`
pub fn complex_to_real(z: &[Complex64]) -> Vec<f64> {
    z.iter().map(|c| c.re).chain(z.iter().map(|c| c.im)).collect()
}

/// Inverse of [`complex_to_real`]. `x` must have even length.
pub fn real_to_complex(x: &[f64]) -> Vec<Complex64> {
    let n = x.len() / 2;
    (0..n).map(|i| Complex64::new(x[i], x[n + i])).collect()
}

/// Real embedding `[[Re, -Im], [Im, Re]]` of a complex matrix.
pub fn real_embedding(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let z = m[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn matvec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(x)).as_slice().to_vec()
}

/// `mᵀ x`
pub fn matvec_t(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    m.tr_mul(&DVector::from_column_slice(x)).as_slice().to_vec()
}

/// `out[b] = beta·out[b] + alpha·m·batch[b]` for a row-major batch of vectors.
///
/// `batch` holds `rows` vectors of length `m.ncols()`, `out` holds `rows`
/// vectors of length `m.nrows()`.
pub fn batch_matvec(m: &DMatrix<f64>, batch: &[f64], rows: usize, alpha: f64, beta: f64, out: &mut [f64]) {
    let (mr, mc) = m.shape();
    assert_eq!(batch.len(), rows * mc);
    assert_eq!(out.len(), rows * mr);
    if rows == 0 {
        return;
    }
    // out (rows × mr) = batch (rows × mc) · mᵀ (mc × mr); mᵀ(j, i) = m[(i, j)] at j·mr + i
    unsafe {
        matrixmultiply::dgemm(
            rows,
            mc,
            mr,
            alpha,
            batch.as_ptr(),
            mc as isize,
            1,
            m.as_ptr(),
            mr as isize,
            1,
            beta,
            out.as_mut_ptr(),
            mr as isize,
            1,
        );
    }
}

/// Largest squared singular value `‖m‖₂²` by power iteration on `mᵀm`.
/// Stops once the relative change falls below `tol`.
pub fn spectral_norm_sq(m: &DMatrix<f64>, tol: f64, max_iter: usize) -> f64 {
    let n = m.ncols();
    if n == 0 || m.nrows() == 0 {
        return 0.0;
    }
    // deterministic, non-degenerate start
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.01 * ((i * 7919) % 101) as f64);
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let w = m.tr_mul(&(m * &v));
        let next = w.norm();
        if next == 0.0 {
            return 0.0;
        }
        v = w / next;
        let done = (next - estimate).abs() <= tol * next;
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    #[test]
    fn embedding_matches_complex_product() {
        let m = DMatrix::from_fn(3, 4, |i, j| Complex64::new(i as f64 - j as f64, (i * j) as f64 * 0.5));
        let x: Vec<Complex64> = (0..4).map(|k| Complex64::new(k as f64, 1.0 - k as f64)).collect();
        let y = &m * DVector::from_column_slice(&x);
        let real = matvec(&real_embedding(&m), &complex_to_real(&x));
        let expected = complex_to_real(y.as_slice());
        for (a, b) in real.iter().zip(&expected) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        assert_eq!(real_to_complex(&expected), y.as_slice());
    }

    #[test]
    fn batched_product_matches_per_vector() {
        let m = DMatrix::from_fn(5, 3, |i, j| (i as f64 + 1.0) * (j as f64 - 0.5));
        let batch: Vec<f64> = (0..6).map(|k| k as f64 * 0.3 - 1.0).collect();
        let mut out = vec![1.0; 10];
        batch_matvec(&m, &batch, 2, 2.0, 1.0, &mut out);
        for b in 0..2 {
            let single = matvec(&m, &batch[b * 3..b * 3 + 3]);
            for i in 0..5 {
                assert_relative_eq!(out[b * 5 + i], 1.0 + 2.0 * single[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn power_iteration_finds_top_singular_value() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 0.5]));
        assert_relative_eq!(spectral_norm_sq(&m, 1e-12, 1000), 9.0, max_relative = 1e-8);
    }
}
