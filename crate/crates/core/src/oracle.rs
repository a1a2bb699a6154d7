//! Independent reference values: exact ε-series composition in rational
//! arithmetic, and closed forms for geometric Brownian motion.

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;

use crate::expansion::ExpansionResult;
use crate::field::{MatrixField, Polynomial, VectorField};
use crate::model::NoisePath;
use crate::multiindex::{diffusion_order_term, drift_order_term, MultiIndex};
use crate::rng::rng_from_seed;
use crate::scalar::Scalar;
use crate::simulate::SolutionPath;

/// Product of two ε-series truncated after degree `k_max`.
pub fn series_mul<T: Scalar>(a: &[T], b: &[T], k_max: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k_max + 1];
    for (i, x) in a.iter().enumerate().take(k_max + 1) {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate().take(k_max + 1 - i) {
            out[i + j] = out[i + j].clone() + x.clone() * y.clone();
        }
    }
    out
}

/// Coefficients of `ε^0 … ε^{k_max}` in `f(Σ_j ε^j u_j)`, by multiplying
/// out every monomial of `f`. `u[j]` is the vector `u_j`.
pub fn compose_series<T: Scalar>(f: &Polynomial<T>, u: &[Vec<T>], k_max: usize) -> Vec<T> {
    let d = u[0].len();
    let component: Vec<Vec<T>> = (0..d)
        .map(|i| {
            let mut s = vec![T::zero(); k_max + 1];
            for (j, uj) in u.iter().enumerate().take(k_max + 1) {
                s[j] = uj[i].clone();
            }
            s
        })
        .collect();
    let mut out = vec![T::zero(); k_max + 1];
    for (alpha, c) in f.terms() {
        let mut prod = vec![T::zero(); k_max + 1];
        prod[0] = c.clone();
        for (i, &e) in alpha.entries().iter().enumerate() {
            for _ in 0..e {
                prod = series_mul(&prod, &component[i], k_max);
            }
        }
        for (o, p) in out.iter_mut().zip(prod) {
            *o = o.clone() + p;
        }
    }
    out
}

/// Coefficients of `Σ_j ε^j f_j(u(ε))`.
pub fn compose_family_series<T: Scalar>(family: &[Polynomial<T>], u: &[Vec<T>], k_max: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k_max + 1];
    for (j, f) in family.iter().enumerate().take(k_max + 1) {
        let s = compose_series(f, u, k_max - j);
        for (i, v) in s.into_iter().enumerate() {
            out[i + j] = out[i + j].clone() + v;
        }
    }
    out
}

fn small_rational<R: Rng>(rng: &mut R) -> BigRational {
    let num: i64 = rng.random_range(-6..=6);
    let den: i64 = rng.random_range(1..=4);
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Random polynomial with at most `terms` monomials of total degree at most
/// `max_degree` and small rational coefficients.
pub fn random_polynomial<R: Rng>(rng: &mut R, dim: usize, max_degree: u32, terms: usize) -> Polynomial<BigRational> {
    let monomials = (0..terms).map(|_| {
        let mut left = rng.random_range(0..=max_degree);
        let mut exps = vec![0u32; dim];
        while left > 0 {
            exps[rng.random_range(0..dim)] += 1;
            left -= 1;
        }
        (MultiIndex::new(exps), small_rational(rng))
    });
    Polynomial::new(dim, monomials)
}

/// A random polynomial model with rational coefficients: drift family,
/// diffusion family and coefficient vectors `u_0 … u_depth`.
#[derive(Clone, Debug)]
pub struct RationalModel {
    pub dim: usize,
    pub drift: Vec<Vec<Polynomial<BigRational>>>,
    pub diffusion: Vec<Vec<Polynomial<BigRational>>>,
    pub u: Vec<Vec<BigRational>>,
}

impl RationalModel {
    pub fn random<R: Rng>(rng: &mut R, dim: usize, depth: usize) -> Self {
        let drift_len = rng.random_range(1..=2);
        let diffusion_len = rng.random_range(1..=3);
        let drift = (0..drift_len)
            .map(|_| (0..dim).map(|_| random_polynomial(rng, dim, 4, 4)).collect())
            .collect();
        let diffusion = (0..diffusion_len)
            .map(|_| (0..dim * dim).map(|_| random_polynomial(rng, dim, 4, 3)).collect())
            .collect();
        let u = (0..=depth)
            .map(|_| (0..dim).map(|_| small_rational(rng)).collect())
            .collect();
        RationalModel {
            dim,
            drift,
            diffusion,
            u,
        }
    }

    pub fn drift_fields(&self) -> Vec<VectorField<BigRational>> {
        self.drift
            .iter()
            .map(|c| VectorField::from_polynomials(c.clone()))
            .collect()
    }

    pub fn diffusion_fields(&self) -> Vec<MatrixField<BigRational>> {
        self.diffusion
            .iter()
            .map(|c| MatrixField::from_polynomials(self.dim, c.clone()))
            .collect()
    }
}

/// Outcome of comparing the partition-based order terms with the brute-force
/// series on random models.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OrderTermCheck {
    pub models: usize,
    pub comparisons: usize,
    pub mismatches: usize,
}

/// Compares drift and diffusion order terms for `k ≤ k_max` against the
/// brute-force series on `models` random models (dimensions cycling through
/// `1..=max_dim`, coefficient depth `k_max`), exactly.
pub fn check_order_terms(seed: u64, models: usize, max_dim: usize, k_max: usize) -> OrderTermCheck {
    let mut rng = rng_from_seed(seed);
    let mut check = OrderTermCheck {
        models,
        comparisons: 0,
        mismatches: 0,
    };
    for n in 0..models {
        let dim = 1 + n % max_dim;
        let model = RationalModel::random(&mut rng, dim, k_max);
        let u: Vec<&[BigRational]> = model.u.iter().map(|v| v.as_slice()).collect();
        let drift_fields = model.drift_fields();
        let diffusion_fields = model.diffusion_fields();
        let drift_series: Vec<Vec<BigRational>> = (0..dim)
            .map(|l| {
                let fam: Vec<_> = model.drift.iter().map(|c| c[l].clone()).collect();
                compose_family_series(&fam, &model.u, k_max)
            })
            .collect();
        let diffusion_series: Vec<Vec<BigRational>> = (0..dim * dim)
            .map(|idx| {
                let fam: Vec<_> = model.diffusion.iter().map(|c| c[idx].clone()).collect();
                compose_family_series(&fam, &model.u, k_max)
            })
            .collect();
        for k in 0..=k_max {
            let drift = drift_order_term(k, &drift_fields, &u).expect("polynomials have all derivatives");
            let diffusion = diffusion_order_term(k, &diffusion_fields, &u).expect("polynomials have all derivatives");
            for (got, series) in drift
                .iter()
                .zip(&drift_series)
                .chain(diffusion.iter().zip(&diffusion_series))
            {
                check.comparisons += 1;
                if *got != series[k] {
                    check.mismatches += 1;
                }
            }
        }
    }
    check
}

/// Probabilists' Hermite polynomial in time-scaled form:
/// `H_0 = 1`, `H_1 = b`, `H_{n+1} = b H_n − n t H_{n−1}`.
fn scaled_hermite(n: usize, t: f64, b: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, b);
    if n == 0 {
        return prev;
    }
    for j in 1..n {
        let next = b * cur - j as f64 * t * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `u_k(t)` for `du = r u dt + ε σ̃ u dB`, i.e. the ε^k coefficient of
/// `x0 exp((r − ε²σ̃²/2) t + ε σ̃ B_t)`: `x0 e^{rt} σ̃^k H_k(t, B_t) / k!`.
pub fn gbm_coefficient(k: usize, r: f64, vol: f64, x0: f64, t: f64, b: f64) -> f64 {
    let fact: f64 = (1..=k).map(|i| i as f64).product();
    x0 * (r * t).exp() * vol.powi(k as i32) * scaled_hermite(k, t, b) / fact
}

/// Exact solution `x0 exp((r − ε²σ̃²/2) t + ε σ̃ B_t)`.
pub fn gbm_exact(r: f64, vol: f64, eps: f64, x0: f64, t: f64, b: f64) -> f64 {
    let s = eps * vol;
    x0 * ((r - 0.5 * s * s) * t + s * b).exp()
}

/// `sup_t |u_k − u_k^{closed}|` for each computed order, on the noise path
/// the expansion was solved on (scalar Brownian noise with unit variance).
pub fn gbm_coefficient_errors(expansion: &ExpansionResult, r: f64, vol: f64, x0: f64, noise: &NoisePath) -> Vec<f64> {
    let b = noise.brownian_path();
    let times = noise.grid().times();
    (0..=expansion.order())
        .map(|k| {
            let path = expansion.coefficient(k);
            times
                .iter()
                .enumerate()
                .map(|(m, &t)| (path.state(m)[0] - gbm_coefficient(k, r, vol, x0, t, b[m])).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// `max |a − b| / max |b|` over all grid states.
pub fn relative_path_diff(a: &SolutionPath, b: &SolutionPath) -> f64 {
    let scale = b.states().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = crate::linalg::max_abs_diff(a.states(), b.states());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn square_series() {
        let f = Polynomial::new(1, [(MultiIndex::new(vec![2]), q(1, 1))]);
        let u = vec![vec![q(1, 1)], vec![q(2, 1)], vec![q(3, 1)]];
        let s = compose_series(&f, &u, 2);
        assert_eq!(s, vec![q(1, 1), q(4, 1), q(10, 1)]);
    }

    #[test]
    fn family_shift() {
        // x² + ε x + ε² at u = 1 + 2ε + 3ε².
        let fam = vec![
            Polynomial::new(1, [(MultiIndex::new(vec![2]), q(1, 1))]),
            Polynomial::new(1, [(MultiIndex::new(vec![1]), q(1, 1))]),
            Polynomial::constant(1, q(1, 1)),
        ];
        let u = vec![vec![q(1, 1)], vec![q(2, 1)], vec![q(3, 1)]];
        assert_eq!(compose_family_series(&fam, &u, 2)[2], q(13, 1));
    }

    #[test]
    fn order_terms_agree_with_series() {
        let check = check_order_terms(3, 6, 3, 4);
        assert_eq!(check.mismatches, 0);
        assert!(check.comparisons > 100);
    }

    #[test]
    fn gbm_coefficients_are_taylor_coefficients() {
        let (r, vol, x0, t, b) = (0.05, 0.8, 1.3, 0.7, 0.4);
        let eps = 1e-2f64;
        let series: f64 = (0..6)
            .map(|k| eps.powi(k as i32) * gbm_coefficient(k, r, vol, x0, t, b))
            .sum();
        assert!((series - gbm_exact(r, vol, eps, x0, t, b)).abs() < 1e-13);
        assert!(
            (gbm_coefficient(2, r, vol, x0, t, b) - x0 * (r * t).exp() * vol * vol * (b * b - t) / 2.0).abs() < 1e-15
        );
    }
}
