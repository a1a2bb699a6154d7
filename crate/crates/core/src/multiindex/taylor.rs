use std::sync::OnceLock;

use crate::error::FieldError;
use crate::field::ScalarField;
use crate::multiindex::MultiIndex;

/// `C_p(x0, x)` together with the order `p + 1` of the remainder it bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaylorRemainderBound {
    pub constant: f64,
    pub order: usize,
}

impl TaylorRemainderBound {
    /// `C · ‖x − x0‖^{p+1}` (Euclidean norm).
    pub fn bound(&self, x: &[f64], x0: &[f64]) -> f64 {
        self.constant * distance(x, x0).powi(self.order as i32)
    }
}

fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// `Σ_{|α| ≤ p} D^α f(x0)/α! · (x − x0)^α`.
pub fn taylor_polynomial(f: &dyn ScalarField, x0: &[f64], x: &[f64], p: usize) -> Result<f64, FieldError> {
    let h: Vec<f64> = x.iter().zip(x0).map(|(a, b)| a - b).collect();
    let mut acc = 0.0;
    for order in 0..=p {
        for alpha in MultiIndex::all_of_length(x0.len(), order) {
            acc += f.derivative(&alpha, x0)? / alpha.factorial() as f64 * alpha.power(&h);
        }
    }
    Ok(acc)
}

const PANELS: usize = 32;
const NODES: usize = 8;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre() -> &'static ([f64; NODES], [f64; NODES]) {
    static RULE: OnceLock<([f64; NODES], [f64; NODES])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = NODES;
        let mut nodes = [0.0; NODES];
        let mut weights = [0.0; NODES];
        for i in 0..n {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, 0.0);
                for j in 0..n {
                    let p2 = p1;
                    p1 = p0;
                    p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
                }
                dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
                let dz = p0 / dp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = z;
            weights[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
        (nodes, weights)
    })
}

/// Composite Gauss–Legendre quadrature of `g` over `[0, 1]`.
fn integrate_unit<E>(mut g: impl FnMut(f64) -> Result<f64, E>) -> Result<f64, E> {
    let (nodes, weights) = gauss_legendre();
    let width = 1.0 / PANELS as f64;
    let mut acc = 0.0;
    for panel in 0..PANELS {
        let mid = (panel as f64 + 0.5) * width;
        for (z, w) in nodes.iter().zip(weights) {
            acc += w * g(mid + 0.5 * width * z)?;
        }
    }
    Ok(acc * 0.5 * width)
}

/// `C_p(x0, x) = Σ_{|α| = p+1} (p+1)/α! ∫_0^1 (1−s)^p |D^α f(x0 + s(x − x0))| ds`,
/// so that `|f(x) − T_p(x)| ≤ C_p ‖x − x0‖^{p+1}`.
pub fn taylor_remainder_constant(
    f: &dyn ScalarField,
    x0: &[f64],
    x: &[f64],
    p: usize,
) -> Result<TaylorRemainderBound, FieldError> {
    let d = x0.len();
    let mut constant = 0.0;
    let mut point = vec![0.0; d];
    for alpha in MultiIndex::all_of_length(d, p + 1) {
        let integral = integrate_unit(|s| {
            for (pt, (a, b)) in point.iter_mut().zip(x0.iter().zip(x)) {
                *pt = a + s * (b - a);
            }
            Ok::<_, FieldError>((1.0 - s).powi(p as i32) * f.derivative(&alpha, &point)?.abs())
        })?;
        constant += (p + 1) as f64 / alpha.factorial() as f64 * integral;
    }
    Ok(TaylorRemainderBound { constant, order: p + 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Polynomial;

    fn power(n: u32) -> Polynomial {
        Polynomial::monomial(MultiIndex::new(vec![n]), 1.0)
    }

    #[test]
    fn quadrature_is_exact_for_polynomials() {
        let v = integrate_unit(|s| Ok::<_, ()>(s.powi(7) - 3.0 * s * s)).unwrap();
        assert!((v - (1.0 / 8.0 - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn square_order_zero() {
        let b = taylor_remainder_constant(&power(2), &[0.0], &[1.0], 0).unwrap();
        assert!((b.constant - 1.0).abs() < 1e-14);
        assert_eq!(b.order, 1);
        assert!((b.bound(&[1.0], &[0.0]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cube_order_one() {
        // (p+1)/α! = 2/2, ∫(1-s)·6s ds = 1, and the remainder 1³ - 0 - 0 = 1
        // meets the bound with equality.
        let f = power(3);
        let b = taylor_remainder_constant(&f, &[0.0], &[1.0], 1).unwrap();
        assert!((b.constant - 1.0).abs() < 1e-14);
        let rem = f.value(&[1.0]) - taylor_polynomial(&f, &[0.0], &[1.0], 1).unwrap();
        assert!((rem - 1.0).abs() < 1e-14);
    }

    #[test]
    fn linear_fields_have_zero_constant() {
        let f = Polynomial::affine(&[2.0, -1.0, 0.5], 3.0);
        for p in 1..4 {
            let b = taylor_remainder_constant(&f, &[0.1, 0.2, 0.3], &[1.0, -1.0, 2.0], p).unwrap();
            assert_eq!(b.constant, 0.0);
        }
    }

    #[test]
    fn taylor_polynomial_reproduces_polynomials_of_low_degree() {
        let f = Polynomial::new(
            2,
            [
                (MultiIndex::new(vec![2, 1]), 1.5),
                (MultiIndex::new(vec![0, 1]), -2.0),
                (MultiIndex::new(vec![0, 0]), 0.25),
            ],
        );
        let (x0, x) = ([0.3, -0.7], [1.2, 0.4]);
        let t = taylor_polynomial(&f, &x0, &x, 3).unwrap();
        assert!((t - f.value(&x)).abs() < 1e-13);
    }
}
