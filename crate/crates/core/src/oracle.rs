//! Dense brute-force references for the fast operators.
//!
//! Everything here is quadratic or worse and meant for tests and the
//! verification harness.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::error::{ensure_len, Result};
use crate::fdom::{impulse_response, FreqResponse};
use crate::ski::{InterpOperator, SparseFilter};
use crate::tcore::{toeplitz_dense, ToeplitzKernel};
use crate::Matrix;

/// `M x`.
pub fn dense_matvec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(x)).as_slice().to_vec()
}

/// `||a - b||_2 / ||b||_2`, or the absolute error when `b` is zero.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Relative Frobenius error between matrices.
pub fn relative_fro(a: &Matrix, b: &Matrix) -> f64 {
    relative_l2(a.as_slice(), b.as_slice())
}

/// Keeps the lower triangle including the diagonal.
pub fn lower_masked(m: &Matrix) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| if j <= i { m[(i, j)] } else { 0.0 })
}

/// Banded Toeplitz matrix of a sparse filter.
pub fn banded_dense(f: &SparseFilter, n: usize) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for (k, &tap) in f.taps().iter().enumerate() {
        let delta = f.offset(k);
        for i in 0..n as isize {
            let j = i - delta;
            if (0..n as isize).contains(&j) {
                m[(i as usize, j as usize)] = tap;
            }
        }
    }
    m
}

/// Inducing Gram `A_ab = k(p_a - p_b)` as a dense matrix.
pub fn inducing_dense(a: &ToeplitzKernel) -> Result<Matrix> {
    toeplitz_dense(a)
}

/// `W A W^T` materialized.
pub fn ski_dense(w: &InterpOperator, a: &Matrix) -> Result<Matrix> {
    ensure_len("inducing matrix size", w.cols(), a.nrows())?;
    let wd = w.to_dense();
    Ok(&wd * a * wd.transpose())
}

/// Causal masked SKI product `(L . (W A W^T)) x`.
pub fn masked_ski_matvec(w: &InterpOperator, a: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    Ok(dense_matvec(&lower_masked(&ski_dense(w, a)?), x))
}

/// Dense Toeplitz operator for a sampled response: `t_delta = k[delta mod 2n]`
/// with `k` the length-`2n` impulse response.
pub fn response_dense(kh: &FreqResponse, causal: bool) -> Result<Matrix> {
    let n = kh.n();
    let k = impulse_response(kh);
    let len = 2 * n as isize;
    Ok(Matrix::from_fn(n, n, |i, j| {
        let delta = i as isize - j as isize;
        if causal && delta < 0 {
            0.0
        } else {
            k[delta.rem_euclid(len) as usize]
        }
    }))
}

/// Discrete Hilbert kernel `h[l] = 2/(pi l)` for odd `l`, zero otherwise.
pub fn hilbert_tap(l: i64) -> f64 {
    if l % 2 == 0 {
        0.0
    } else {
        2.0 / (PI * l as f64)
    }
}

/// `sum_{|l| <= limit} h[l] F[m - l]` over the even periodic extension.
pub fn hilbert_truncated(bins: &[f64], limit: i64) -> Vec<f64> {
    let n = bins.len() as i64 - 1;
    let period = 2 * n;
    let at = |m: i64| {
        let m = m.rem_euclid(period);
        bins[if m <= n { m } else { period - m } as usize]
    };
    (0..=n)
        .map(|m| (-limit..=limit).map(|l| hilbert_tap(l) * at(m - l)).sum())
        .collect()
}

/// Convolution against `h` summed over all periodic aliases: for a
/// `2n`-periodic sequence the aliased kernel is `cot(pi l / 2n) / n` on odd `l`.
pub fn hilbert_periodized(bins: &[f64]) -> Vec<f64> {
    let n = bins.len() - 1;
    let period = 2 * n;
    let at = |m: usize| bins[if m <= n { m } else { period - m }];
    (0..=n)
        .map(|m| {
            (1..period)
                .step_by(2)
                .map(|l| (PI * l as f64 / period as f64).tan().recip() / n as f64 * at((m + period - l) % period))
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_and_band() {
        let m = Matrix::from_fn(3, 3, |i, j| (3 * i + j) as f64);
        let l = lower_masked(&m);
        assert_eq!(l[(0, 1)], 0.0);
        assert_eq!(l[(2, 1)], 7.0);
        let f = SparseFilter::centered(vec![1.0, 2.0, 3.0]).unwrap();
        let b = banded_dense(&f, 4);
        assert_eq!(b[(0, 0)], 2.0);
        assert_eq!(b[(0, 1)], 1.0);
        assert_eq!(b[(1, 0)], 3.0);
        assert_eq!(b[(0, 2)], 0.0);
    }

    #[test]
    fn periodized_hilbert_of_cosine() {
        let n = 12;
        let bins: Vec<f64> = (0..=n).map(|m| (PI * m as f64 / n as f64).cos()).collect();
        for (m, v) in hilbert_periodized(&bins).iter().enumerate() {
            assert!((v - (PI * m as f64 / n as f64).sin()).abs() < 1e-13);
        }
    }
}
