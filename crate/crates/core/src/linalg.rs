//! Small dense kernels on row-major square matrices, sized for the few
//! hundred points a session accumulates.

/// Jitter schedule tried, in order, when a kernel matrix fails to factor.
pub(crate) const JITTER_LADDER: [f64; 4] = [0.0, 1e-8, 1e-6, 1e-4];

/// In-place Cholesky factorization `A = L Lᵀ` of a row-major symmetric
/// matrix. On success the lower triangle holds `L` and the strict upper
/// triangle is zeroed.
pub(crate) fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for i in 0..n {
        for j in 0..=i {
            let (row_i, row_j) = (i * n, j * n);
            let mut s = a[row_i + j];
            for k in 0..j {
                s -= a[row_i + k] * a[row_j + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return false;
                }
                a[row_i + i] = s.sqrt();
            } else {
                a[row_i + j] = s / a[row_j + j];
            }
        }
        for j in i + 1..n {
            a[i * n + j] = 0.0;
        }
    }
    true
}

/// Factors `A + jitter·I`, walking the jitter ladder from `min_jitter`.
/// Returns the factor and the jitter that succeeded.
pub(crate) fn cholesky_with_jitter(a: &[f64], n: usize, min_jitter: f64) -> Option<(Vec<f64>, f64)> {
    for &j in JITTER_LADDER.iter().filter(|&&j| j >= min_jitter) {
        let mut l = a.to_vec();
        for i in 0..n {
            l[i * n + i] += j;
        }
        if cholesky_in_place(&mut l, n) {
            return Some((l, j));
        }
    }
    None
}

/// Solves `L x = b` in place.
pub(crate) fn solve_lower(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        let s: f64 = row.iter().zip(&b[..i]).map(|(a, x)| a * x).sum();
        b[i] = (b[i] - s) / l[i * n + i];
    }
}

/// Solves `Lᵀ x = b` in place.
pub(crate) fn solve_lower_transpose(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        b[i] /= l[i * n + i];
        let xi = b[i];
        let row = &l[i * n..i * n + i];
        for (bk, lik) in b[..i].iter_mut().zip(row) {
            *bk -= lik * xi;
        }
    }
}

/// `A⁻¹ b` given the Cholesky factor of `A`.
pub(crate) fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    solve_lower(l, n, b);
    solve_lower_transpose(l, n, b);
}

/// Full symmetric inverse `A⁻¹ = L⁻ᵀ L⁻¹`, row-major.
pub(crate) fn inverse_from_cholesky(l: &[f64], n: usize) -> Vec<f64> {
    // Rows of `linv_t` are the columns of L⁻¹, i.e. linv_t[j][k] = (L⁻¹)[k][j],
    // non-zero only for k >= j.
    let mut linv_t = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|v| *v = 0.0);
        col[j] = 1.0;
        for i in j..n {
            let mut s = col[i];
            for k in j..i {
                s -= l[i * n + k] * col[k];
            }
            col[i] = s / l[i * n + i];
        }
        linv_t[j * n..(j + 1) * n].copy_from_slice(&col);
    }
    let mut inv = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..=a {
            let ra = &linv_t[a * n..(a + 1) * n];
            let rb = &linv_t[b * n..(b + 1) * n];
            let s: f64 = ra[a..].iter().zip(&rb[a..]).map(|(x, y)| x * y).sum();
            inv[a * n + b] = s;
            inv[b * n + a] = s;
        }
    }
    inv
}

pub(crate) fn log_det_from_cholesky(l: &[f64], n: usize) -> f64 {
    2.0 * (0..n).map(|i| l[i * n + i].ln()).sum::<f64>()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (-((i as f64 - j as f64).powi(2)) / 4.0).exp();
            }
            a[i * n + i] += 0.1;
        }
        a
    }

    #[test]
    fn factor_solve_inverse() {
        let n = 9;
        let a = spd(n);
        let mut l = a.clone();
        assert!(cholesky_in_place(&mut l, n));
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = b.clone();
        cholesky_solve(&l, n, &mut x);
        for i in 0..n {
            let r: f64 = (0..n).map(|j| a[i * n + j] * x[j]).sum();
            assert!((r - b[i]).abs() < 1e-10);
        }
        let inv = inverse_from_cholesky(&l, n);
        for i in 0..n {
            for j in 0..n {
                let e: f64 = (0..n).map(|k| a[i * n + k] * inv[k * n + j]).sum();
                assert!((e - if i == j { 1.0 } else { 0.0 }).abs() < 1e-9);
            }
        }
        let nl = nalgebra::DMatrix::from_row_slice(n, n, &a);
        assert!((log_det_from_cholesky(&l, n) - nl.determinant().ln()).abs() < 1e-10);
    }

    #[test]
    fn singular_matrix_needs_jitter() {
        let a = vec![1.0, 1.0, 1.0, 1.0];
        let mut l = a.clone();
        assert!(!cholesky_in_place(&mut l, 2));
        let (_, j) = cholesky_with_jitter(&a, 2, 0.0).unwrap();
        assert!(j > 0.0 && j <= 1e-4);
    }
}
