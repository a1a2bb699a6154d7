//! Small dense helpers on row-major `f64` slices. The matrices here are
//! `d×d` with `d` in the single digits, so plain loops beat allocation.

use nalgebra::DMatrix;

use crate::error::NoiseError;

pub(crate) fn mat_vec_add(m: &[f64], x: &[f64], scale: f64, out: &mut [f64]) {
    let d = x.len();
    for (l, o) in out.iter_mut().enumerate() {
        let row = &m[l * d..(l + 1) * d];
        *o += scale * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub(crate) fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

pub(crate) fn to_dmatrix(d: usize, m: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, m)
}

pub(crate) fn from_dmatrix(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * d);
    for r in 0..d {
        for c in 0..d {
            out.push(m[(r, c)]);
        }
    }
    out
}

/// Lower-triangular `L` with `L Lᵀ = A` for symmetric positive semidefinite
/// `A`. Pivots within `tol` of zero are treated as rank deficiency.
pub(crate) fn cholesky_psd(d: usize, a: &[f64], tol: f64) -> Result<Vec<f64>, NoiseError> {
    for r in 0..d {
        for c in 0..r {
            if (a[r * d + c] - a[c * d + r]).abs() > tol {
                return Err(NoiseError::NonSymmetricCovariance { row: r, col: c });
            }
        }
    }
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let pivot = a[j * d + j] - (0..j).map(|k| l[j * d + k] * l[j * d + k]).sum::<f64>();
        if pivot < -tol {
            return Err(NoiseError::NonPsdCovariance { pivot: j, value: pivot });
        }
        if pivot <= tol {
            // Zero pivot: the rest of the column must vanish too.
            for i in j + 1..d {
                let r = a[i * d + j] - (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum::<f64>();
                if r.abs() > tol {
                    return Err(NoiseError::NonPsdCovariance { pivot: j, value: pivot });
                }
            }
            continue;
        }
        let ljj = pivot.sqrt();
        l[j * d + j] = ljj;
        for i in j + 1..d {
            let r = a[i * d + j] - (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum::<f64>();
            l[i * d + j] = r / ljj;
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs() {
        let a = [4.0, 2.0, 0.4, 2.0, 2.0, 0.5, 0.4, 0.5, 3.0];
        let l = cholesky_psd(3, &a, 1e-12).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let v: f64 = (0..3).map(|k| l[r * 3 + k] * l[c * 3 + k]).sum();
                assert!((v - a[r * 3 + c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_accepts_semidefinite_and_rejects_indefinite() {
        let rank_one = [1.0, 1.0, 1.0, 1.0];
        let l = cholesky_psd(2, &rank_one, 1e-12).unwrap();
        assert_eq!(l, vec![1.0, 0.0, 1.0, 0.0]);
        assert!(cholesky_psd(2, &[0.0; 4], 1e-12).is_ok());
        assert!(matches!(
            cholesky_psd(2, &[1.0, 2.0, 2.0, 1.0], 1e-12),
            Err(NoiseError::NonPsdCovariance { .. })
        ));
        assert!(matches!(
            cholesky_psd(2, &[1.0, 0.5, 0.0, 1.0], 1e-12),
            Err(NoiseError::NonSymmetricCovariance { .. })
        ));
    }
}
