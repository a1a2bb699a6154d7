//! Scalar, vector and matrix fields together with the derivative evaluators
//! the expansion needs.
//!
//! Two built-in derivative sources: [`Polynomial`] (exact, any order) and
//! [`FiniteDifferenceField`] (central differences up to a fixed order).
//! [`FnField`] wraps caller-supplied analytic derivatives.

use std::fmt;
use std::sync::Arc;

use crate::error::FieldError;
use crate::multiindex::{factorial, MultiIndex};
use crate::scalar::Scalar;

/// A real function on `R^d` able to report its partial derivatives.
pub trait ScalarField<T: Scalar = f64>: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &[T]) -> T;

    /// `D^α f(x)`.
    fn derivative(&self, alpha: &MultiIndex, x: &[T]) -> Result<T, FieldError>;

    /// Highest total derivative order available, `None` when unlimited.
    fn max_order(&self) -> Option<usize> {
        None
    }

    /// True when the field is identically zero; lets callers skip work.
    fn is_zero(&self) -> bool {
        false
    }

    /// Polynomial degree when the field is a polynomial.
    fn degree(&self) -> Option<usize> {
        None
    }
}

pub type FieldRef<T = f64> = Arc<dyn ScalarField<T>>;

/// Exact polynomial `Σ c_β x^β`, derivatives computed symbolically.
#[derive(Clone, PartialEq)]
pub struct Polynomial<T: Scalar = f64> {
    dim: usize,
    terms: Vec<(MultiIndex, T)>,
}

impl<T: Scalar> Polynomial<T> {
    /// Builds a polynomial from `(exponent, coefficient)` pairs; repeated
    /// exponents are summed and zero coefficients dropped.
    pub fn new(dim: usize, terms: impl IntoIterator<Item = (MultiIndex, T)>) -> Self {
        let mut collected: Vec<(MultiIndex, T)> = Vec::new();
        for (alpha, c) in terms {
            assert_eq!(alpha.dim(), dim, "exponent dimension mismatch");
            match collected.binary_search_by(|(a, _)| a.cmp(&alpha)) {
                Ok(pos) => collected[pos].1 = collected[pos].1.clone() + c,
                Err(pos) => collected.insert(pos, (alpha, c)),
            }
        }
        collected.retain(|(_, c)| !c.is_zero());
        Polynomial { dim, terms: collected }
    }

    pub fn zero(dim: usize) -> Self {
        Polynomial { dim, terms: Vec::new() }
    }

    pub fn constant(dim: usize, c: T) -> Self {
        Self::new(dim, [(MultiIndex::zeros(dim), c)])
    }

    /// `Σ_i a_i x_i + c`.
    pub fn affine(coeffs: &[T], c: T) -> Self {
        let dim = coeffs.len();
        let mut terms: Vec<(MultiIndex, T)> = coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| (MultiIndex::unit(dim, i), a.clone()))
            .collect();
        terms.push((MultiIndex::zeros(dim), c));
        Self::new(dim, terms)
    }

    /// `c · x^α`.
    pub fn monomial(alpha: MultiIndex, c: T) -> Self {
        let dim = alpha.dim();
        Self::new(dim, [(alpha, c)])
    }

    pub fn terms(&self) -> &[(MultiIndex, T)] {
        &self.terms
    }

    pub fn evaluate(&self, x: &[T]) -> T {
        self.terms
            .iter()
            .fold(T::zero(), |acc, (beta, c)| acc + c.clone() * beta.power(x))
    }

    /// The polynomial `D^α p`.
    pub fn differentiate(&self, alpha: &MultiIndex) -> Polynomial<T> {
        let terms = self.terms.iter().filter_map(|(beta, c)| {
            let rest = beta.checked_sub(alpha)?;
            let falling: u128 = beta
                .entries()
                .iter()
                .zip(rest.entries())
                .map(|(&b, &r)| factorial(b) / factorial(r))
                .product();
            Some((rest, c.clone() * T::from_ratio(falling, 1)))
        });
        Polynomial::new(self.dim, terms)
    }

    pub fn total_degree(&self) -> Option<usize> {
        self.terms.iter().map(|(a, _)| a.length()).max()
    }

    fn derivative_at(&self, alpha: &MultiIndex, x: &[T]) -> T {
        let mut acc = T::zero();
        for (beta, c) in &self.terms {
            let Some(rest) = beta.checked_sub(alpha) else {
                continue;
            };
            let falling: u128 = beta
                .entries()
                .iter()
                .zip(rest.entries())
                .map(|(&b, &r)| factorial(b) / factorial(r))
                .product();
            acc = acc + c.clone() * T::from_ratio(falling, 1) * rest.power(x);
        }
        acc
    }
}

impl<T: Scalar> fmt::Debug for Polynomial<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self.terms.iter().map(|(a, c)| format!("{c:?}·x^{a}")).collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl<T: Scalar> ScalarField<T> for Polynomial<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[T]) -> T {
        self.evaluate(x)
    }

    fn derivative(&self, alpha: &MultiIndex, x: &[T]) -> Result<T, FieldError> {
        if alpha.dim() != self.dim || x.len() != self.dim {
            return Err(FieldError::DimensionMismatch {
                expected: self.dim,
                got: x.len().min(alpha.dim()),
            });
        }
        Ok(self.derivative_at(alpha, x))
    }

    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn degree(&self) -> Option<usize> {
        Some(self.total_degree().unwrap_or(0))
    }
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type DerivFn = dyn Fn(&MultiIndex, &[f64]) -> Option<f64> + Send + Sync;

/// Generic field whose derivatives come from central finite differences.
///
/// First derivatives use step `cbrt(ε_mach)·(1 + ‖x‖_∞)`; order `n` uses
/// `ε_mach^{1/(n+2)}·(1 + ‖x‖_∞)`.
#[derive(Clone)]
pub struct FiniteDifferenceField {
    name: String,
    dim: usize,
    max_order: usize,
    f: Arc<ValueFn>,
}

impl FiniteDifferenceField {
    pub const DEFAULT_MAX_ORDER: usize = 4;

    pub fn new(name: impl Into<String>, dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        FiniteDifferenceField {
            name: name.into(),
            dim,
            max_order: Self::DEFAULT_MAX_ORDER,
            f: Arc::new(f),
        }
    }

    pub fn with_max_order(mut self, max_order: usize) -> Self {
        self.max_order = max_order;
        self
    }

    fn step(order: usize, x: &[f64]) -> f64 {
        let scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        f64::EPSILON.powf(1.0 / (order as f64 + 2.0)) * scale
    }
}

impl fmt::Debug for FiniteDifferenceField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FiniteDifferenceField({})", self.name)
    }
}

impl ScalarField for FiniteDifferenceField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn derivative(&self, alpha: &MultiIndex, x: &[f64]) -> Result<f64, FieldError> {
        let order = alpha.length();
        if order == 0 {
            return Ok((self.f)(x));
        }
        if order > self.max_order {
            return Err(FieldError::MissingDerivative {
                field: self.name.clone(),
                order,
                max: self.max_order,
            });
        }
        let h = Self::step(order, x);
        // Tensor product of one-dimensional central stencils
        // Σ_k (-1)^k C(n,k) f(x + (n/2 - k) h e_i) / h^n.
        let axes: Vec<(usize, u32)> = alpha
            .entries()
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0)
            .map(|(i, &a)| (i, a))
            .collect();
        let mut counters = vec![0u32; axes.len()];
        let mut point = x.to_vec();
        let mut acc = 0.0;
        loop {
            let mut weight = 1.0;
            for (&(axis, n), &kk) in axes.iter().zip(&counters) {
                let binom = (factorial(n) / (factorial(kk) * factorial(n - kk))) as f64;
                weight *= if kk % 2 == 0 { binom } else { -binom };
                point[axis] = x[axis] + (n as f64 / 2.0 - kk as f64) * h;
            }
            acc += weight * (self.f)(&point);
            let mut pos = 0;
            loop {
                if pos == axes.len() {
                    return Ok(acc / h.powi(order as i32));
                }
                counters[pos] += 1;
                if counters[pos] <= axes[pos].1 {
                    break;
                }
                counters[pos] = 0;
                pos += 1;
            }
        }
    }

    fn max_order(&self) -> Option<usize> {
        Some(self.max_order)
    }
}

/// Field with caller-supplied derivatives. The closure returns `None` for
/// derivatives it cannot provide.
#[derive(Clone)]
pub struct FnField {
    name: String,
    dim: usize,
    max_order: Option<usize>,
    f: Arc<DerivFn>,
}

impl FnField {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        max_order: Option<usize>,
        f: impl Fn(&MultiIndex, &[f64]) -> Option<f64> + Send + Sync + 'static,
    ) -> Self {
        FnField {
            name: name.into(),
            dim,
            max_order,
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for FnField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnField({})", self.name)
    }
}

impl ScalarField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(&MultiIndex::zeros(self.dim), x).unwrap_or(f64::NAN)
    }

    fn derivative(&self, alpha: &MultiIndex, x: &[f64]) -> Result<f64, FieldError> {
        let order = alpha.length();
        if self.max_order.is_some_and(|m| order > m) {
            return Err(FieldError::MissingDerivative {
                field: self.name.clone(),
                order,
                max: self.max_order.unwrap_or(0),
            });
        }
        (self.f)(alpha, x).ok_or_else(|| FieldError::MissingDerivative {
            field: self.name.clone(),
            order,
            max: self.max_order.unwrap_or(order.saturating_sub(1)),
        })
    }

    fn max_order(&self) -> Option<usize> {
        self.max_order
    }
}

/// A map `R^d → R^d` given componentwise.
#[derive(Clone, Debug)]
pub struct VectorField<T: Scalar = f64> {
    components: Vec<FieldRef<T>>,
}

impl<T: Scalar> VectorField<T> {
    pub fn new(components: Vec<FieldRef<T>>) -> Self {
        let d = components.len();
        assert!(
            components.iter().all(|c| c.dim() == d),
            "every component of a vector field on R^d must take d arguments"
        );
        VectorField { components }
    }

    pub fn from_polynomials(components: Vec<Polynomial<T>>) -> Self {
        Self::new(components.into_iter().map(|p| Arc::new(p) as FieldRef<T>).collect())
    }

    pub fn zero(dim: usize) -> Self {
        Self::from_polynomials(vec![Polynomial::zero(dim); dim])
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[FieldRef<T>] {
        &self.components
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.is_zero())
    }

    pub fn evaluate_into(&self, x: &[T], out: &mut [T]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.value(x);
        }
    }

    pub fn evaluate(&self, x: &[T]) -> Vec<T> {
        self.components.iter().map(|c| c.value(x)).collect()
    }

    /// Jacobian `J[l][i] = ∂_i f_l(x)`, row-major.
    pub fn jacobian(&self, x: &[T]) -> Result<Vec<T>, FieldError> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for c in &self.components {
            for i in 0..d {
                out.push(c.derivative(&MultiIndex::unit(d, i), x)?);
            }
        }
        Ok(out)
    }

    pub fn max_order(&self) -> Option<usize> {
        self.components.iter().filter_map(|c| c.max_order()).min()
    }
}

/// A map `R^d → R^{d×d}`, entries stored row-major.
#[derive(Clone, Debug)]
pub struct MatrixField<T: Scalar = f64> {
    dim: usize,
    entries: Vec<FieldRef<T>>,
}

impl<T: Scalar> MatrixField<T> {
    pub fn new(dim: usize, entries: Vec<FieldRef<T>>) -> Self {
        assert_eq!(entries.len(), dim * dim, "matrix field needs d*d entries");
        assert!(entries.iter().all(|e| e.dim() == dim));
        MatrixField { dim, entries }
    }

    pub fn from_polynomials(dim: usize, entries: Vec<Polynomial<T>>) -> Self {
        Self::new(dim, entries.into_iter().map(|p| Arc::new(p) as FieldRef<T>).collect())
    }

    pub fn zero(dim: usize) -> Self {
        Self::from_polynomials(dim, vec![Polynomial::zero(dim); dim * dim])
    }

    /// Constant matrix field.
    pub fn constant(dim: usize, values: &[T]) -> Self {
        Self::from_polynomials(
            dim,
            values.iter().map(|v| Polynomial::constant(dim, v.clone())).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[FieldRef<T>] {
        &self.entries
    }

    pub fn entry(&self, row: usize, col: usize) -> &FieldRef<T> {
        &self.entries[row * self.dim + col]
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.is_zero())
    }

    pub fn evaluate_into(&self, x: &[T], out: &mut [T]) {
        for (o, e) in out.iter_mut().zip(&self.entries) {
            *o = e.value(x);
        }
    }

    pub fn evaluate(&self, x: &[T]) -> Vec<T> {
        self.entries.iter().map(|e| e.value(x)).collect()
    }

    pub fn max_order(&self) -> Option<usize> {
        self.entries.iter().filter_map(|c| c.max_order()).min()
    }
}

impl MatrixField<f64> {
    /// `x ↦ M·diag(x)`, i.e. entry `(l, l')` is `M_{l,l'} x_{l'}`.
    pub fn diagonal_scaling(dim: usize, m: &[f64]) -> Self {
        let entries = (0..dim * dim)
            .map(|idx| {
                let col = idx % dim;
                Polynomial::monomial(MultiIndex::unit(dim, col), m[idx])
            })
            .collect();
        Self::from_polynomials(dim, entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly_1d(coeffs: &[f64]) -> Polynomial {
        Polynomial::new(
            1,
            coeffs
                .iter()
                .enumerate()
                .map(|(p, &c)| (MultiIndex::new(vec![p as u32]), c)),
        )
    }

    #[test]
    fn polynomial_derivatives_are_exact() {
        // p(x, y) = 3 x^2 y + 2 y^3 - 5
        let p = Polynomial::new(
            2,
            [
                (MultiIndex::new(vec![2, 1]), 3.0),
                (MultiIndex::new(vec![0, 3]), 2.0),
                (MultiIndex::new(vec![0, 0]), -5.0),
            ],
        );
        let x = [2.0, -1.0];
        assert_eq!(p.value(&x), -12.0 - 2.0 - 5.0);
        assert_eq!(p.derivative(&MultiIndex::new(vec![1, 0]), &x).unwrap(), -12.0);
        assert_eq!(p.derivative(&MultiIndex::new(vec![2, 1]), &x).unwrap(), 6.0);
        assert_eq!(p.derivative(&MultiIndex::new(vec![0, 2]), &x).unwrap(), -12.0);
        assert_eq!(p.derivative(&MultiIndex::new(vec![3, 0]), &x).unwrap(), 0.0);
        assert_eq!(p.total_degree(), Some(3));
    }

    #[test]
    fn polynomial_merges_and_drops_zero_terms() {
        let p = Polynomial::new(
            1,
            [
                (MultiIndex::new(vec![1]), 2.0),
                (MultiIndex::new(vec![1]), -2.0),
                (MultiIndex::new(vec![0]), 1.0),
            ],
        );
        assert_eq!(p.terms().len(), 1);
        assert!(Polynomial::<f64>::zero(2).is_zero());
    }

    #[test]
    fn finite_differences_track_analytic_derivatives() {
        let f = FiniteDifferenceField::new("sin·exp", 2, |x| x[0].sin() * x[1].exp());
        let x = [0.7f64, -0.3];
        let (s, c, e) = (x[0].sin(), x[0].cos(), x[1].exp());
        let cases = [
            (vec![1, 0], c * e, 1e-8),
            (vec![0, 1], s * e, 1e-8),
            (vec![2, 0], -s * e, 1e-5),
            (vec![1, 1], c * e, 1e-5),
            (vec![3, 0], -c * e, 1e-3),
            (vec![2, 2], -s * e, 1e-2),
        ];
        for (alpha, expected, tol) in cases {
            let got = f.derivative(&MultiIndex::new(alpha.clone()), &x).unwrap();
            assert!((got - expected).abs() < tol, "{alpha:?}: {got} vs {expected}");
        }
    }

    #[test]
    fn finite_differences_refuse_high_orders() {
        let f = FiniteDifferenceField::new("sin", 1, |x| x[0].sin()).with_max_order(2);
        let err = f.derivative(&MultiIndex::new(vec![3]), &[0.0]).unwrap_err();
        assert!(matches!(err, FieldError::MissingDerivative { order: 3, max: 2, .. }));
    }

    #[test]
    fn diagonal_scaling_matches_definition() {
        let m = [1.0, 2.0, 3.0, 4.0];
        let s = MatrixField::diagonal_scaling(2, &m);
        assert_eq!(s.evaluate(&[10.0, 100.0]), vec![10.0, 200.0, 30.0, 400.0]);
    }

    #[test]
    fn vector_field_jacobian() {
        let f = VectorField::from_polynomials(vec![poly_1d(&[1.0, 0.0, 2.0])]);
        assert_eq!(f.jacobian(&[3.0]).unwrap(), vec![12.0]);
    }
}
