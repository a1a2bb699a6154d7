//! Closed-form recursion for linear models
//! `β(x) = A x + b`, `σ_0(x) = C + Π·diag(x)`, `σ_1(x) = λ·diag(x)`,
//! `σ_j = 0` for `j ≥ 2`.
//!
//! Then `du_0 = (A u_0 + b) dt + (C + Π diag(u_0)) dη` and, for `k ≥ 1`,
//! `du_k = A u_k dt + Π diag(u_k) dη + λ diag(u_{k-1}) dη`. All equations
//! share one homogeneous part, so one fundamental solution serves every
//! order. It is the discrete one generated by the Euler step maps
//! `I + A Δt + Π diag(Δη)` and `I + Π diag(ΔJ)`, which makes the result agree
//! with the generic recursion up to rounding.

use nalgebra::DMatrix;

use crate::error::SolveError;
use crate::field::{MatrixField, Polynomial, VectorField};
use crate::linalg::{from_dmatrix, identity, mat_vec_add, to_dmatrix};
use crate::model::{ModelSpec, NoisePath};
use crate::multiindex::MultiIndex;
use crate::simulate::{Scheme, SolutionPath, BLOWUP_THRESHOLD};

use super::ExpansionResult;

/// Coefficients of a linear model; matrices are row-major `d×d`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub dim: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Constant part of `σ_0`.
    pub c: Vec<f64>,
    pub pi: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl LinearModel {
    pub fn new(dim: usize, a: Vec<f64>, b: Vec<f64>, pi: Vec<f64>, lambda: Vec<f64>) -> Result<Self, SolveError> {
        let model = LinearModel {
            dim,
            a,
            b,
            c: vec![0.0; dim * dim],
            pi,
            lambda,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_constant_noise(mut self, c: Vec<f64>) -> Result<Self, SolveError> {
        self.c = c;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), SolveError> {
        let d = self.dim;
        let ok = d >= 1
            && self.a.len() == d * d
            && self.b.len() == d
            && self.c.len() == d * d
            && self.pi.len() == d * d
            && self.lambda.len() == d * d;
        if ok {
            Ok(())
        } else {
            Err(SolveError::InvalidModel(format!(
                "linear model matrices must be {d}x{d}, b of length {d}"
            )))
        }
    }

    /// The same model as polynomial fields, with ε-order `eps_order`.
    pub fn to_model_spec(&self, eps_order: usize) -> Result<ModelSpec, SolveError> {
        let d = self.dim;
        let drift = VectorField::from_polynomials(
            (0..d)
                .map(|l| Polynomial::affine(&self.a[l * d..(l + 1) * d], self.b[l]))
                .collect(),
        );
        let sigma0 = MatrixField::from_polynomials(
            d,
            (0..d * d)
                .map(|idx| {
                    Polynomial::new(
                        d,
                        [
                            (MultiIndex::zeros(d), self.c[idx]),
                            (MultiIndex::unit(d, idx % d), self.pi[idx]),
                        ],
                    )
                })
                .collect(),
        );
        let sigma1 = MatrixField::diagonal_scaling(d, &self.lambda);
        ModelSpec::new(drift, vec![sigma0, sigma1])?.with_eps_order(eps_order.max(1))
    }
}

/// Discrete fundamental solution: `Φ` and `Φ^{-1}` after every step map.
struct DiscreteFundamental {
    /// After the continuous map of step `m` (before its jumps).
    step_inv: Vec<f64>,
    /// Before and after each jump.
    jump_pre: Vec<f64>,
    jump_inv: Vec<f64>,
    /// At grid points (after all jumps of the preceding step).
    grid_value: Vec<f64>,
}

fn invert(m: &DMatrix<f64>, step: usize) -> Result<DMatrix<f64>, SolveError> {
    m.clone().try_inverse().ok_or(SolveError::NearSingular {
        step,
        residual: f64::INFINITY,
    })
}

fn discrete_fundamental(model: &LinearModel, noise: &NoisePath) -> Result<DiscreteFundamental, SolveError> {
    let d = model.dim;
    let grid = noise.grid();
    let n = grid.steps();
    let a = to_dmatrix(d, &model.a);
    let pi = to_dmatrix(d, &model.pi);
    let mut phi = DMatrix::<f64>::identity(d, d);
    let mut phi_inv = DMatrix::<f64>::identity(d, d);
    let mut out = DiscreteFundamental {
        step_inv: Vec::with_capacity(n * d * d),
        jump_pre: Vec::with_capacity(noise.jumps().len() * d * d),
        jump_inv: Vec::with_capacity(noise.jumps().len() * d * d),
        grid_value: Vec::with_capacity((n + 1) * d * d),
    };
    out.grid_value.extend(identity(d));
    let mut deta = vec![0.0; d];
    let step_map = |w: &[f64], dt: f64| {
        let mut m = DMatrix::<f64>::identity(d, d) + &a * dt;
        for l in 0..d {
            for i in 0..d {
                m[(l, i)] += pi[(l, i)] * w[i];
            }
        }
        m
    };
    for m in 0..n {
        noise.continuous_increment(m, &mut deta);
        let map = step_map(&deta, grid.dt(m));
        phi = &map * &phi;
        phi_inv = &phi_inv * invert(&map, m)?;
        out.step_inv.extend(from_dmatrix(&phi_inv));
        for event in noise.jumps_in_step(m).1 {
            out.jump_pre.extend(from_dmatrix(&phi));
            let map = step_map(&event.mark, 0.0);
            phi = &map * &phi;
            phi_inv = &phi_inv * invert(&map, m)?;
            out.jump_inv.extend(from_dmatrix(&phi_inv));
        }
        let residual = (&phi * &phi_inv - DMatrix::<f64>::identity(d, d)).amax();
        if !(residual <= 1e-8) {
            return Err(SolveError::NearSingular { step: m + 1, residual });
        }
        out.grid_value.extend(from_dmatrix(&phi));
    }
    Ok(out)
}

/// One coefficient by discrete variation of constants:
/// `X_m = Φ_m (x0 + Σ Φ^{-1} c)` over all affine updates `c` up to `t_m`.
fn solve_one(
    fund: &DiscreteFundamental,
    noise: &NoisePath,
    x0: &[f64],
    forcing: Option<&[f64]>,
    loading: impl Fn(Option<usize>, Option<usize>) -> Vec<f64>,
) -> SolutionPath {
    let d = x0.len();
    let grid = noise.grid();
    let n = grid.steps();
    let block = |i: usize| i * d * d..(i + 1) * d * d;
    let mut states = vec![f64::NAN; (n + 1) * d];
    let mut pre_jump = vec![f64::NAN; noise.jumps().len() * d];
    states[..d].copy_from_slice(x0);
    let mut y = x0.to_vec();
    let mut c = vec![0.0; d];
    let mut deta = vec![0.0; d];
    let mut blowup = None;
    for m in 0..n {
        c.fill(0.0);
        if let Some(f) = forcing {
            for (o, v) in c.iter_mut().zip(f) {
                *o += v * grid.dt(m);
            }
        }
        noise.continuous_increment(m, &mut deta);
        mat_vec_add(&loading(Some(m), None), &deta, 1.0, &mut c);
        mat_vec_add(&fund.step_inv[block(m)], &c, 1.0, &mut y);
        let (first, events) = noise.jumps_in_step(m);
        for (offset, event) in events.iter().enumerate() {
            let e = first + offset;
            let x_pre = &mut pre_jump[e * d..(e + 1) * d];
            x_pre.fill(0.0);
            mat_vec_add(&fund.jump_pre[block(e)], &y, 1.0, x_pre);
            c.fill(0.0);
            mat_vec_add(&loading(None, Some(e)), &event.mark, 1.0, &mut c);
            mat_vec_add(&fund.jump_inv[block(e)], &c, 1.0, &mut y);
        }
        let x = &mut states[(m + 1) * d..(m + 2) * d];
        x.fill(0.0);
        mat_vec_add(&fund.grid_value[block(m + 1)], &y, 1.0, x);
        let norm = crate::linalg::norm(x);
        if !norm.is_finite() || norm > BLOWUP_THRESHOLD {
            x.fill(f64::NAN);
            blowup = Some(m + 1);
            break;
        }
    }
    SolutionPath::new(grid.clone(), d, states, pre_jump, blowup, Scheme::ClosedForm)
}

/// Coefficients `u_0 … u_{k_max}` of a linear model by variation of
/// constants. Matches [`super::solve_coefficients`] on
/// [`LinearModel::to_model_spec`] up to rounding.
pub fn solve_coefficients_linear_model(
    model: &LinearModel,
    k_max: usize,
    x0: &[f64],
    noise: &NoisePath,
) -> Result<ExpansionResult, SolveError> {
    let d = model.dim;
    if x0.len() != d || noise.dim() != d {
        return Err(SolveError::InvalidModel(format!(
            "dimension mismatch: model {d}, initial value {}, noise {}",
            x0.len(),
            noise.dim()
        )));
    }
    let fund = discrete_fundamental(model, noise)?;
    let mut paths = Vec::with_capacity(k_max + 1);
    paths.push(solve_one(&fund, noise, x0, Some(&model.b), |_, _| model.c.clone()));
    let zero = vec![0.0; d];
    for _ in 1..=k_max {
        let prev = paths.last().unwrap();
        let lambda_diag = |u: &[f64]| -> Vec<f64> { (0..d * d).map(|idx| model.lambda[idx] * u[idx % d]).collect() };
        let path = if prev.is_blowup() {
            SolutionPath::new(
                noise.grid().clone(),
                d,
                vec![f64::NAN; prev.states().len()],
                vec![f64::NAN; noise.jumps().len() * d],
                Some(0),
                Scheme::ClosedForm,
            )
        } else {
            solve_one(&fund, noise, &zero, None, |m, e| match (m, e) {
                (Some(m), _) => lambda_diag(prev.state(m)),
                (None, Some(e)) => lambda_diag(prev.pre_jump_state(e)),
                _ => unreachable!(),
            })
        };
        paths.push(path);
    }
    Ok(ExpansionResult::new(paths, noise))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::expansion::solve_coefficients;
    use crate::model::{sample_noise_path, JumpSpec, MarkDistribution, NoiseSpec, TimeGrid};

    fn grid(n: usize) -> Arc<TimeGrid> {
        Arc::new(TimeGrid::uniform(1.0, n).unwrap())
    }

    fn rel_diff(a: &SolutionPath, b: &SolutionPath) -> f64 {
        let scale = b.states().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        crate::linalg::max_abs_diff(a.states(), b.states()) / scale.max(f64::MIN_POSITIVE)
    }

    #[test]
    fn iterated_integral_chain() {
        let model = LinearModel::new(1, vec![0.0], vec![0.0], vec![0.0], vec![1.0]).unwrap();
        let noise = sample_noise_path(&NoiseSpec::brownian(1), grid(1000), 3);
        let res = solve_coefficients_linear_model(&model, 2, &[1.0], &noise).unwrap();
        let b = noise.brownian_path();
        // Discrete Itô sums: u_2 = Σ B_m ΔB_m = (B² − Σ ΔB²)/2.
        let mut qv = 0.0;
        for (m, bm) in b.iter().enumerate() {
            assert_eq!(res.coefficient(0).state(m)[0], 1.0);
            assert!((res.coefficient(1).state(m)[0] - bm).abs() < 1e-13);
            assert!((res.coefficient(2).state(m)[0] - (bm * bm - qv) / 2.0).abs() < 1e-12);
            if m < 1000 {
                qv += noise.brownian_increment(m)[0].powi(2);
            }
        }
    }

    #[test]
    fn decoupled_noise_leaves_higher_orders_zero() {
        let model = LinearModel::new(1, vec![-0.5], vec![1.0], vec![0.0], vec![0.0])
            .unwrap()
            .with_constant_noise(vec![0.3])
            .unwrap();
        let noise = sample_noise_path(&NoiseSpec::brownian(1), grid(100), 1);
        let res = solve_coefficients_linear_model(&model, 3, &[0.0], &noise).unwrap();
        for k in 1..=3 {
            assert!(res.coefficient(k).states().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn agrees_with_generic_recursion() {
        let model = LinearModel::new(
            2,
            vec![-0.3, 0.2, 0.1, -0.4],
            vec![0.5, -0.2],
            vec![0.2, 0.1, -0.1, 0.3],
            vec![0.4, 0.0, 0.2, 0.5],
        )
        .unwrap()
        .with_constant_noise(vec![0.1, 0.0, 0.0, 0.2])
        .unwrap();
        let spec = NoiseSpec::new(
            2,
            vec![1.0, 0.3, 0.3, 1.0],
            vec![0.1, 0.0],
            Some(JumpSpec {
                intensity: 3.0,
                marks: MarkDistribution::Normal {
                    mean: vec![0.0, 0.1],
                    std: vec![0.2, 0.2],
                },
                compensated: true,
            }),
        )
        .unwrap();
        let noise = sample_noise_path(&spec, grid(500), 12);
        let fast = solve_coefficients_linear_model(&model, 3, &[1.0, 0.5], &noise).unwrap();
        let generic = solve_coefficients(&model.to_model_spec(3).unwrap(), 3, &[1.0, 0.5], &noise).unwrap();
        for k in 0..=3 {
            let r = rel_diff(fast.coefficient(k), generic.coefficient(k));
            assert!(r < 1e-10, "k = {k}: {r}");
        }
    }
}
