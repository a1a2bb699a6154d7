//! The SDE `du = β_ε(u) dt + σ_ε(u) η(dt)` with `σ_ε = Σ_{j≤M} ε^j σ_j`
//! (and optionally `β_ε = Σ_j ε^j β_j`), plus its driving noise.

mod lipschitz;
mod noise;

pub use lipschitz::{lipschitz_estimate, lipschitz_estimate_fn, BoxDomain, LipschitzReport};
pub use noise::{sample_noise_path, JumpEvent, JumpSpec, MarkDistribution, NoiseDrift, NoisePath, NoiseSpec, TimeGrid};

use crate::error::{FieldError, SolveError};
use crate::field::{MatrixField, VectorField};

/// Drift and diffusion families of the SDE.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    dim: usize,
    drift: Vec<VectorField>,
    diffusion: Vec<MatrixField>,
    eps_order: usize,
    eps_max: f64,
}

impl ModelSpec {
    /// ε-independent drift `β` and diffusion family `σ_0, …, σ_M`. The
    /// ε-order defaults to `M`; raise it with [`ModelSpec::with_eps_order`]
    /// when the family is exact and higher members vanish.
    pub fn new(drift: VectorField, diffusion: Vec<MatrixField>) -> Result<Self, SolveError> {
        Self::with_drift_family(vec![drift], diffusion)
    }

    /// ε-dependent drift `β_0, β_1, …`.
    pub fn with_drift_family(drift: Vec<VectorField>, diffusion: Vec<MatrixField>) -> Result<Self, SolveError> {
        let Some(first) = drift.first() else {
            return Err(SolveError::InvalidModel("drift family is empty".into()));
        };
        if diffusion.is_empty() {
            return Err(SolveError::InvalidModel("diffusion family is empty".into()));
        }
        let dim = first.dim();
        if drift.iter().any(|f| f.dim() != dim) || diffusion.iter().any(|s| s.dim() != dim) {
            return Err(SolveError::InvalidModel(format!(
                "every drift and diffusion member must act on R^{dim}"
            )));
        }
        let eps_order = (diffusion.len() - 1).max(drift.len() - 1);
        Ok(ModelSpec {
            dim,
            drift,
            diffusion,
            eps_order,
            eps_max: 1.0,
        })
    }

    /// Declares `σ_ε` (and `β_ε`) exact polynomials in ε up to order `m`;
    /// members past the supplied ones are zero.
    pub fn with_eps_order(mut self, m: usize) -> Result<Self, SolveError> {
        let supplied = (self.diffusion.len() - 1).max(self.drift.len() - 1);
        if m < supplied {
            return Err(SolveError::InvalidModel(format!(
                "eps order {m} below the {supplied} family members supplied"
            )));
        }
        self.eps_order = m;
        Ok(self)
    }

    /// Upper end `ε_0` of the admissible ε range.
    pub fn with_eps_max(mut self, eps_max: f64) -> Self {
        self.eps_max = eps_max;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn drift_family(&self) -> &[VectorField] {
        &self.drift
    }

    pub fn diffusion_family(&self) -> &[MatrixField] {
        &self.diffusion
    }

    pub fn eps_order(&self) -> usize {
        self.eps_order
    }

    pub fn eps_max(&self) -> f64 {
        self.eps_max
    }

    /// `β_ε(x)` into `out`.
    pub fn drift_at(&self, eps: f64, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut scale = 1.0;
        for member in &self.drift {
            if scale != 0.0 && !member.is_zero() {
                for (o, c) in out.iter_mut().zip(member.components()) {
                    *o += scale * c.value(x);
                }
            }
            scale *= eps;
        }
    }

    /// `σ_ε(x)` (row-major) into `out`.
    pub fn diffusion_at(&self, eps: f64, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut scale = 1.0;
        for member in &self.diffusion {
            if scale != 0.0 && !member.is_zero() {
                for (o, e) in out.iter_mut().zip(member.entries()) {
                    *o += scale * e.value(x);
                }
            }
            scale *= eps;
        }
    }

    /// Checks that an expansion of order `k` is available: `k ≤ M`, and every
    /// field supplies the derivative orders the order terms need
    /// (order `k − j` from family member `j`, at least first order from the
    /// ε-free members when `k ≥ 1`).
    pub fn check_expansion_order(&self, k: usize) -> Result<(), SolveError> {
        if k > self.eps_order {
            return Err(SolveError::OrderUnavailable {
                requested: k,
                available: self.eps_order,
            });
        }
        let need = |j: usize| if j == 0 { k } else { k.saturating_sub(j) };
        let check = |j: usize, max: Option<usize>, what: &str| -> Result<(), SolveError> {
            match max {
                Some(max) if max < need(j) => Err(FieldError::MissingDerivative {
                    field: format!("{what}_{j}"),
                    order: need(j),
                    max,
                }
                .into()),
                _ => Ok(()),
            }
        };
        for (j, f) in self.drift.iter().enumerate() {
            if j <= k {
                check(j, f.max_order(), "drift")?;
            }
        }
        for (j, s) in self.diffusion.iter().enumerate() {
            if j <= k {
                check(j, s.max_order(), "sigma")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldRef, FiniteDifferenceField, Polynomial};
    use crate::multiindex::MultiIndex;
    use std::sync::Arc;

    fn gbm(r: f64, s: f64) -> ModelSpec {
        let x = |c: f64| Polynomial::monomial(MultiIndex::new(vec![1]), c);
        ModelSpec::new(
            VectorField::from_polynomials(vec![x(r)]),
            vec![MatrixField::zero(1), MatrixField::from_polynomials(1, vec![x(s)])],
        )
        .unwrap()
    }

    #[test]
    fn evaluates_eps_families() {
        let m = gbm(0.05, 2.0);
        let mut out = [0.0];
        m.diffusion_at(0.3, &[1.5], &mut out);
        assert!((out[0] - 0.3 * 2.0 * 1.5).abs() < 1e-15);
        m.diffusion_at(0.0, &[1.5], &mut out);
        assert_eq!(out[0], 0.0);
        m.drift_at(0.3, &[2.0], &mut out);
        assert!((out[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn order_checks() {
        let m = gbm(0.05, 1.0);
        assert!(m.check_expansion_order(1).is_ok());
        assert!(matches!(
            m.check_expansion_order(2),
            Err(SolveError::OrderUnavailable {
                requested: 2,
                available: 1
            })
        ));
        let m = m.with_eps_order(4).unwrap();
        assert!(m.check_expansion_order(4).is_ok());
        assert!(gbm(0.0, 1.0).with_eps_order(0).is_err());

        let fd: FieldRef = Arc::new(FiniteDifferenceField::new("sin", 1, |x| x[0].sin()).with_max_order(2));
        let m = ModelSpec::new(VectorField::new(vec![fd]), vec![MatrixField::constant(1, &[1.0])])
            .unwrap()
            .with_eps_order(3)
            .unwrap();
        assert!(m.check_expansion_order(2).is_ok());
        assert!(matches!(
            m.check_expansion_order(3),
            Err(SolveError::Field(FieldError::MissingDerivative { order: 3, .. }))
        ));
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let drift = VectorField::zero(2);
        assert!(ModelSpec::new(drift, vec![MatrixField::zero(1)]).is_err());
    }
}
