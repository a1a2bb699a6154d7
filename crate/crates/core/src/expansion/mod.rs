//! Recursive coefficient equations for `u_0, …, u_K`.
//!
//! `u_0` solves the full SDE at `ε = 0`. For `k ≥ 1`, `u_k(0) = 0` and
//!
//! `du_k = ([β_ε(u)]_k^∘ + ∇β_0(u_0) u_k) dt + Σ_j (G_j u_k + [σ_ε(u)]_k^∘ e_j) dη_j`,
//!
//! where `∘` marks the order term with `u_k` set to zero and
//! `(G_j)_{l,i} = ∂_i σ_{0,l,j}(u_0)`. Each equation is linear in `u_k` and is
//! handed to [`integrate_linear`] on the shared noise path.

mod fundamental;
mod linear_model;
mod voc;

pub use fundamental::{
    doleans_dade_jump_factor, fundamental_matrix_constant, fundamental_matrix_scalar, FundamentalMatrix,
};
pub use linear_model::{solve_coefficients_linear_model, LinearModel};
pub use voc::solve_linear_by_variation_of_constants;

use std::sync::Arc;

use crate::error::{FieldError, SolveError};
use crate::field::ScalarField;
use crate::model::{ModelSpec, NoisePath, TimeGrid};
use crate::multiindex::{MultiIndex, OrderTermPlan};
use crate::simulate::{integrate_full, integrate_linear, CoefficientPath, LinearSdeCoefficients, SolutionPath};

/// Coefficient paths `u_0 … u_K` on one noise realization.
#[derive(Clone, Debug)]
pub struct ExpansionResult {
    paths: Vec<SolutionPath>,
    grid: Arc<TimeGrid>,
    seed: u64,
}

impl ExpansionResult {
    pub(crate) fn new(paths: Vec<SolutionPath>, noise: &NoisePath) -> Self {
        ExpansionResult {
            paths,
            grid: noise.grid().clone(),
            seed: noise.seed(),
        }
    }

    pub fn order(&self) -> usize {
        self.paths.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.paths[0].dim()
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    /// Seed of the noise path the coefficients were computed on.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn coefficient(&self, k: usize) -> &SolutionPath {
        &self.paths[k]
    }

    pub fn coefficients(&self) -> &[SolutionPath] {
        &self.paths
    }

    /// Lowest order whose path blew up.
    pub fn blowup(&self) -> Option<usize> {
        self.paths.iter().position(|p| p.is_blowup())
    }

    /// `Σ_{j≤k} ε^j u_j(t_m)`.
    pub fn truncation(&self, eps: f64, k: usize, m: usize, out: &mut [f64]) {
        out.fill(0.0);
        let mut scale = 1.0;
        for path in &self.paths[..=k] {
            for (o, v) in out.iter_mut().zip(path.state(m)) {
                *o += scale * v;
            }
            scale *= eps;
        }
    }
}

/// A path of NaNs standing in for a coefficient that could not be computed
/// because a lower one blew up.
fn unavailable(noise: &NoisePath, dim: usize) -> SolutionPath {
    let n = noise.steps();
    SolutionPath::new(
        noise.grid().clone(),
        dim,
        vec![f64::NAN; (n + 1) * dim],
        vec![f64::NAN; noise.jumps().len() * dim],
        Some(0),
        crate::simulate::Scheme::EulerMaruyama,
    )
}

/// Per-point data shared by all orders `k ≥ 1`: `∇β_0(u_0)` and `G`.
struct LinearPart {
    drift_matrix: Vec<f64>,
    noise_gain: Vec<f64>,
}

fn linear_part(model: &ModelSpec, u0: &[f64]) -> Result<LinearPart, FieldError> {
    let d = model.dim();
    let drift_matrix = model.drift_family()[0].jacobian(u0)?;
    let sigma0 = &model.diffusion_family()[0];
    let mut noise_gain = vec![0.0; d * d * d];
    for l in 0..d {
        for j in 0..d {
            let entry = sigma0.entry(l, j);
            if entry.is_zero() || entry.degree() == Some(0) {
                continue;
            }
            for i in 0..d {
                noise_gain[j * d * d + l * d + i] = entry.derivative(&MultiIndex::unit(d, i), u0)?;
            }
        }
    }
    Ok(LinearPart {
        drift_matrix,
        noise_gain,
    })
}

fn gridded(values: Vec<f64>) -> CoefficientPath {
    if values.iter().all(|v| *v == 0.0) {
        CoefficientPath::Zero
    } else {
        CoefficientPath::Gridded(values)
    }
}

/// Order-`k` inhomogeneities `[β]_k^∘` (d) and `[σ]_k^∘` (d×d) at one point.
struct OrderPlans {
    drift: OrderTermPlan,
    diffusion: OrderTermPlan,
}

impl OrderPlans {
    fn new(model: &ModelSpec, k: usize) -> Self {
        let d = model.dim();
        OrderPlans {
            drift: OrderTermPlan::new(k, k, d, model.drift_family().len()),
            diffusion: OrderTermPlan::new(k, k, d, model.diffusion_family().len()),
        }
    }

    fn evaluate(
        &self,
        model: &ModelSpec,
        u: &[&[f64]],
        forcing: &mut [f64],
        loading: &mut [f64],
    ) -> Result<(), FieldError> {
        let d = model.dim();
        for (l, out) in forcing.iter_mut().enumerate() {
            let comps: Vec<&dyn ScalarField> = model
                .drift_family()
                .iter()
                .map(|f| f.components()[l].as_ref())
                .collect();
            *out = self.drift.evaluate_without_top(&comps, u)?;
        }
        for (idx, out) in loading.iter_mut().enumerate().take(d * d) {
            let entries: Vec<&dyn ScalarField> = model
                .diffusion_family()
                .iter()
                .map(|s| s.entries()[idx].as_ref())
                .collect();
            *out = self.diffusion.evaluate_without_top(&entries, u)?;
        }
        Ok(())
    }
}

/// Solves the coefficient equations up to order `k_max` on one noise path.
///
/// Every `u_k` depends only on `u_0 … u_{k-1}`, so raising `k_max` leaves the
/// earlier paths bit-identical. A blown-up coefficient is kept (marked) and
/// all higher ones are filled with NaN.
pub fn solve_coefficients(
    model: &ModelSpec,
    k_max: usize,
    x0: &[f64],
    noise: &NoisePath,
) -> Result<ExpansionResult, SolveError> {
    model.check_expansion_order(k_max)?;
    let d = model.dim();
    let n = noise.steps();
    let events = noise.jumps().len();
    let u0 = integrate_full(model, 0.0, x0, noise)?;
    let mut paths = vec![u0];
    if k_max == 0 {
        return Ok(ExpansionResult::new(paths, noise));
    }
    if paths[0].is_blowup() {
        paths.extend((1..=k_max).map(|_| unavailable(noise, d)));
        return Ok(ExpansionResult::new(paths, noise));
    }

    let mut grid_linear = Vec::with_capacity(n);
    for m in 0..n {
        grid_linear.push(linear_part(model, paths[0].state(m))?);
    }
    let mut jump_linear = Vec::with_capacity(events);
    for e in 0..events {
        jump_linear.push(linear_part(model, paths[0].pre_jump_state(e))?);
    }
    let drift_matrix = gridded(
        grid_linear
            .iter()
            .flat_map(|p| p.drift_matrix.iter().copied())
            .collect(),
    );
    let noise_gain = gridded(grid_linear.iter().flat_map(|p| p.noise_gain.iter().copied()).collect());
    let jump_gain = gridded(jump_linear.iter().flat_map(|p| p.noise_gain.iter().copied()).collect());
    drop(grid_linear);
    drop(jump_linear);

    let zero = vec![0.0; d];
    let x_zero = vec![0.0; d];
    for k in 1..=k_max {
        if paths[k - 1].is_blowup() {
            paths.push(unavailable(noise, d));
            continue;
        }
        let plans = OrderPlans::new(model, k);
        let mut forcing = vec![0.0; n * d];
        let mut loading = vec![0.0; n * d * d];
        let mut u: Vec<&[f64]> = Vec::with_capacity(k + 1);
        for m in 0..n {
            u.clear();
            u.extend(paths.iter().map(|p| p.state(m)));
            u.push(&zero);
            plans.evaluate(
                model,
                &u,
                &mut forcing[m * d..(m + 1) * d],
                &mut loading[m * d * d..(m + 1) * d * d],
            )?;
        }
        let mut jump_loading = vec![0.0; events * d * d];
        let mut scratch = vec![0.0; d];
        for e in 0..events {
            u.clear();
            u.extend(paths.iter().map(|p| p.pre_jump_state(e)));
            u.push(&zero);
            plans.evaluate(model, &u, &mut scratch, &mut jump_loading[e * d * d..(e + 1) * d * d])?;
        }
        let coeffs = LinearSdeCoefficients {
            dim: d,
            forcing: gridded(forcing),
            drift_matrix: drift_matrix.clone(),
            noise_gain: noise_gain.clone(),
            noise_loading: gridded(loading),
            jump_gain: jump_gain.clone(),
            jump_loading: gridded(jump_loading),
        };
        paths.push(integrate_linear(&coeffs, &x_zero, noise)?);
    }
    Ok(ExpansionResult::new(paths, noise))
}
