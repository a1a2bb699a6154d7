//! Pathwise Euler–Maruyama integration on a shared [`NoisePath`].
//!
//! Coefficients are evaluated at the left grid point for the continuous part
//! of `η`. Jumps in `(t_m, t_{m+1}]` are applied after the continuous update,
//! in time order, each with the coefficient evaluated at the current
//! pre-jump state; that state is kept on the path.

use std::sync::Arc;

use crate::error::SolveError;
use crate::model::{ModelSpec, NoisePath, TimeGrid};

/// Paths whose norm exceeds this are marked as blown up.
pub const BLOWUP_THRESHOLD: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    EulerMaruyama,
    /// Closed-form or variation-of-constants evaluation on the grid.
    ClosedForm,
}

/// States on the grid, post-jump (càdlàg) at grid points, plus the
/// pre-jump state at every jump event.
#[derive(Clone, Debug)]
pub struct SolutionPath {
    grid: Arc<TimeGrid>,
    dim: usize,
    states: Vec<f64>,
    pre_jump: Vec<f64>,
    blowup: Option<usize>,
    scheme: Scheme,
}

impl SolutionPath {
    pub(crate) fn new(
        grid: Arc<TimeGrid>,
        dim: usize,
        states: Vec<f64>,
        pre_jump: Vec<f64>,
        blowup: Option<usize>,
        scheme: Scheme,
    ) -> Self {
        debug_assert_eq!(states.len(), (grid.steps() + 1) * dim);
        SolutionPath {
            grid,
            dim,
            states,
            pre_jump,
            blowup,
            scheme,
        }
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// State at grid point `m`.
    pub fn state(&self, m: usize) -> &[f64] {
        &self.states[m * self.dim..(m + 1) * self.dim]
    }

    /// All states, row-major `(n+1)×d`.
    pub fn states(&self) -> &[f64] {
        &self.states
    }

    /// State just before jump event `e`.
    pub fn pre_jump_state(&self, e: usize) -> &[f64] {
        &self.pre_jump[e * self.dim..(e + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.grid.steps())
    }

    /// First grid index whose state exceeded [`BLOWUP_THRESHOLD`] or was not
    /// finite; later states are NaN.
    pub fn blowup(&self) -> Option<usize> {
        self.blowup
    }

    pub fn is_blowup(&self) -> bool {
        self.blowup.is_some()
    }

    /// Component `i` along the whole grid.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states.iter().skip(i).step_by(self.dim).copied().collect()
    }
}

fn diverged(x: &[f64]) -> bool {
    let n = crate::linalg::norm(x);
    !n.is_finite() || n > BLOWUP_THRESHOLD
}

fn check_inputs(dim: usize, x0: &[f64], noise: &NoisePath) -> Result<(), SolveError> {
    if x0.len() != dim {
        return Err(SolveError::InvalidModel(format!(
            "initial value has {} entries, model dimension is {dim}",
            x0.len()
        )));
    }
    if noise.dim() != dim {
        return Err(SolveError::InvalidModel(format!(
            "noise dimension {} does not match model dimension {dim}",
            noise.dim()
        )));
    }
    Ok(())
}

/// Euler–Maruyama for `dX = β_ε(X) dt + σ_ε(X) η(dt)`:
/// `X_{m+1} = X_m + β_ε(X_m)Δt + σ_ε(X_m)(bΔt + ΔB_m)`, then
/// `X ← X + σ_ε(X⁻)·mark` for each jump in the step.
pub fn integrate_full(model: &ModelSpec, eps: f64, x0: &[f64], noise: &NoisePath) -> Result<SolutionPath, SolveError> {
    let d = model.dim();
    check_inputs(d, x0, noise)?;
    if !(eps >= 0.0) {
        return Err(SolveError::InvalidModel(format!("eps must be nonnegative, got {eps}")));
    }
    let grid = noise.grid().clone();
    let n = grid.steps();
    let mut states = vec![f64::NAN; (n + 1) * d];
    let mut pre_jump = vec![f64::NAN; noise.jumps().len() * d];
    states[..d].copy_from_slice(x0);

    let mut x = x0.to_vec();
    let mut next = vec![0.0; d];
    let mut drift = vec![0.0; d];
    let mut sigma = vec![0.0; d * d];
    let mut deta = vec![0.0; d];
    let mut blowup = None;

    for m in 0..n {
        let dt = grid.dt(m);
        model.drift_at(eps, &x, &mut drift);
        model.diffusion_at(eps, &x, &mut sigma);
        noise.continuous_increment(m, &mut deta);
        for l in 0..d {
            let row = &sigma[l * d..(l + 1) * d];
            next[l] = x[l] + drift[l] * dt + row.iter().zip(&deta).map(|(a, b)| a * b).sum::<f64>();
        }
        let (first, events) = noise.jumps_in_step(m);
        for (offset, event) in events.iter().enumerate() {
            let e = first + offset;
            pre_jump[e * d..(e + 1) * d].copy_from_slice(&next);
            model.diffusion_at(eps, &next, &mut sigma);
            let before = next.clone();
            for l in 0..d {
                let row = &sigma[l * d..(l + 1) * d];
                next[l] = before[l] + row.iter().zip(&event.mark).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        std::mem::swap(&mut x, &mut next);
        if diverged(&x) {
            blowup = Some(m + 1);
            break;
        }
        states[(m + 1) * d..(m + 2) * d].copy_from_slice(&x);
    }
    Ok(SolutionPath::new(
        grid,
        d,
        states,
        pre_jump,
        blowup,
        Scheme::EulerMaruyama,
    ))
}

/// A coefficient of a linear SDE as a function of time: absent, constant, or
/// one value per grid step (per jump event for the jump coefficients).
#[derive(Clone, Debug, PartialEq)]
pub enum CoefficientPath {
    Zero,
    Constant(Vec<f64>),
    Gridded(Vec<f64>),
}

impl CoefficientPath {
    fn at(&self, index: usize, width: usize) -> Option<&[f64]> {
        match self {
            CoefficientPath::Zero => None,
            CoefficientPath::Constant(v) => Some(v),
            CoefficientPath::Gridded(v) => Some(&v[index * width..(index + 1) * width]),
        }
    }

    fn check(&self, width: usize, count: usize) -> Result<(), SolveError> {
        let (expected, got) = match self {
            CoefficientPath::Zero => return Ok(()),
            CoefficientPath::Constant(v) => (width, v.len()),
            CoefficientPath::Gridded(v) => (width * count, v.len()),
        };
        if expected == got {
            Ok(())
        } else {
            Err(SolveError::CoefficientLength { expected, got })
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            CoefficientPath::Zero => true,
            CoefficientPath::Constant(v) | CoefficientPath::Gridded(v) => v.iter().all(|x| *x == 0.0),
        }
    }
}

/// Coefficients of
/// `dX = [F(t) + γ(t) X] dt + Σ_j G_j(t) X dη_j + g(t) dη`.
///
/// Layouts are row-major: `γ[l][i]`, `G[j][l][i]`, `g[l][j]`. The jump
/// coefficients are indexed by jump event and hold the values at the
/// pre-jump time.
#[derive(Clone, Debug)]
pub struct LinearSdeCoefficients {
    pub dim: usize,
    pub forcing: CoefficientPath,
    pub drift_matrix: CoefficientPath,
    pub noise_gain: CoefficientPath,
    pub noise_loading: CoefficientPath,
    pub jump_gain: CoefficientPath,
    pub jump_loading: CoefficientPath,
}

impl LinearSdeCoefficients {
    pub fn zero(dim: usize) -> Self {
        LinearSdeCoefficients {
            dim,
            forcing: CoefficientPath::Zero,
            drift_matrix: CoefficientPath::Zero,
            noise_gain: CoefficientPath::Zero,
            noise_loading: CoefficientPath::Zero,
            jump_gain: CoefficientPath::Zero,
            jump_loading: CoefficientPath::Zero,
        }
    }

    /// Time-constant coefficients; the jump coefficients equal the continuous
    /// ones.
    pub fn constant(
        dim: usize,
        forcing: Vec<f64>,
        drift_matrix: Vec<f64>,
        noise_gain: Vec<f64>,
        noise_loading: Vec<f64>,
    ) -> Self {
        let wrap = |v: Vec<f64>| {
            if v.iter().all(|x| *x == 0.0) {
                CoefficientPath::Zero
            } else {
                CoefficientPath::Constant(v)
            }
        };
        let gain = wrap(noise_gain);
        let loading = wrap(noise_loading);
        LinearSdeCoefficients {
            dim,
            forcing: wrap(forcing),
            drift_matrix: wrap(drift_matrix),
            jump_gain: gain.clone(),
            jump_loading: loading.clone(),
            noise_gain: gain,
            noise_loading: loading,
        }
    }

    pub fn validate(&self, noise: &NoisePath) -> Result<(), SolveError> {
        let (d, n, e) = (self.dim, noise.steps(), noise.jumps().len());
        self.forcing.check(d, n)?;
        self.drift_matrix.check(d * d, n)?;
        self.noise_gain.check(d * d * d, n)?;
        self.noise_loading.check(d * d, n)?;
        self.jump_gain.check(d * d * d, e)?;
        self.jump_loading.check(d * d, e)?;
        Ok(())
    }
}

/// `out += Σ_j (G_j x + g_{·j}) w_j`.
fn apply_noise(d: usize, gain: Option<&[f64]>, loading: Option<&[f64]>, x: &[f64], w: &[f64], out: &mut [f64]) {
    if let Some(g) = gain {
        for (j, wj) in w.iter().enumerate() {
            if *wj == 0.0 {
                continue;
            }
            let block = &g[j * d * d..(j + 1) * d * d];
            for (l, o) in out.iter_mut().enumerate() {
                let row = &block[l * d..(l + 1) * d];
                *o += wj * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    if let Some(g) = loading {
        for (l, o) in out.iter_mut().enumerate() {
            let row = &g[l * d..(l + 1) * d];
            *o += row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// Euler–Maruyama for a linear SDE with time-dependent random coefficients,
/// with the same jump handling as [`integrate_full`].
pub fn integrate_linear(
    coeffs: &LinearSdeCoefficients,
    x0: &[f64],
    noise: &NoisePath,
) -> Result<SolutionPath, SolveError> {
    let d = coeffs.dim;
    check_inputs(d, x0, noise)?;
    coeffs.validate(noise)?;
    let grid = noise.grid().clone();
    let n = grid.steps();
    let mut states = vec![f64::NAN; (n + 1) * d];
    let mut pre_jump = vec![f64::NAN; noise.jumps().len() * d];
    states[..d].copy_from_slice(x0);

    let mut x = x0.to_vec();
    let mut next = vec![0.0; d];
    let mut deta = vec![0.0; d];
    let mut blowup = None;

    for m in 0..n {
        let dt = grid.dt(m);
        next.copy_from_slice(&x);
        if let Some(f) = coeffs.forcing.at(m, d) {
            for (o, v) in next.iter_mut().zip(f) {
                *o += v * dt;
            }
        }
        if let Some(gamma) = coeffs.drift_matrix.at(m, d * d) {
            crate::linalg::mat_vec_add(gamma, &x, dt, &mut next);
        }
        noise.continuous_increment(m, &mut deta);
        apply_noise(
            d,
            coeffs.noise_gain.at(m, d * d * d),
            coeffs.noise_loading.at(m, d * d),
            &x,
            &deta,
            &mut next,
        );
        let (first, events) = noise.jumps_in_step(m);
        for (offset, event) in events.iter().enumerate() {
            let e = first + offset;
            pre_jump[e * d..(e + 1) * d].copy_from_slice(&next);
            let before = next.clone();
            apply_noise(
                d,
                coeffs.jump_gain.at(e, d * d * d),
                coeffs.jump_loading.at(e, d * d),
                &before,
                &event.mark,
                &mut next,
            );
        }
        std::mem::swap(&mut x, &mut next);
        if diverged(&x) {
            blowup = Some(m + 1);
            break;
        }
        states[(m + 1) * d..(m + 2) * d].copy_from_slice(&x);
    }
    Ok(SolutionPath::new(
        grid,
        d,
        states,
        pre_jump,
        blowup,
        Scheme::EulerMaruyama,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{MatrixField, Polynomial, VectorField};
    use crate::model::{sample_noise_path, JumpSpec, MarkDistribution, NoiseSpec, TimeGrid};
    use crate::multiindex::MultiIndex;

    fn x_times(c: f64) -> Polynomial {
        Polynomial::monomial(MultiIndex::new(vec![1]), c)
    }

    fn grid(t: f64, n: usize) -> Arc<TimeGrid> {
        Arc::new(TimeGrid::uniform(t, n).unwrap())
    }

    #[test]
    fn deterministic_decay() {
        let model = ModelSpec::new(
            VectorField::from_polynomials(vec![x_times(-1.0)]),
            vec![MatrixField::zero(1)],
        )
        .unwrap();
        for n in [100usize, 1000] {
            let noise = sample_noise_path(&NoiseSpec::brownian(1), grid(1.0, n), 1);
            let path = integrate_full(&model, 0.7, &[1.0], &noise).unwrap();
            let dt = 1.0 / n as f64;
            for (m, t) in path.grid().times().iter().enumerate() {
                assert!((path.state(m)[0] - (-t).exp()).abs() <= dt);
            }
        }
    }

    #[test]
    fn pure_jump_counts() {
        let model = ModelSpec::new(VectorField::zero(1), vec![MatrixField::constant(1, &[1.0])]).unwrap();
        let spec = NoiseSpec::new(
            1,
            vec![0.0],
            vec![0.0],
            Some(JumpSpec {
                intensity: 3.0,
                marks: MarkDistribution::Constant { value: vec![1.0] },
                compensated: false,
            }),
        )
        .unwrap();
        for seed in 0..20 {
            let noise = sample_noise_path(&spec, grid(2.0, 64), seed);
            let path = integrate_full(&model, 0.0, &[0.5], &noise).unwrap();
            assert_eq!(path.final_state()[0], 0.5 + noise.jumps().len() as f64);
            for (e, event) in noise.jumps().iter().enumerate() {
                assert_eq!(path.pre_jump_state(e)[0], 0.5 + e as f64);
                let after = path.state(event.step + 1)[0];
                assert!(after >= 0.5 + (e + 1) as f64);
            }
        }
    }

    #[test]
    fn additive_constant_loading_is_exact() {
        let spec = NoiseSpec::new(1, vec![1.0], vec![0.2], None).unwrap();
        let noise = sample_noise_path(&spec, grid(1.0, 200), 11);
        let coeffs = LinearSdeCoefficients::constant(1, vec![0.0], vec![0.0], vec![0.0], vec![1.5]);
        let path = integrate_linear(&coeffs, &[0.3], &noise).unwrap();
        let bpath = noise.brownian_path();
        for (m, t) in noise.grid().times().iter().enumerate() {
            let eta = bpath[m] + 0.2 * t;
            assert!((path.state(m)[0] - (0.3 + 1.5 * eta)).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_forcing_is_exact() {
        let noise = sample_noise_path(&NoiseSpec::brownian(1), grid(2.0, 37), 4);
        let coeffs = LinearSdeCoefficients::constant(1, vec![1.0], vec![0.0], vec![0.0], vec![0.0]);
        let path = integrate_linear(&coeffs, &[1.0], &noise).unwrap();
        for (m, t) in noise.grid().times().iter().enumerate() {
            assert!((path.state(m)[0] - (1.0 + t)).abs() < 1e-13);
        }
    }

    #[test]
    fn blowup_is_marked_not_fatal() {
        let model = ModelSpec::new(
            VectorField::from_polynomials(vec![Polynomial::monomial(MultiIndex::new(vec![3]), 1.0)]),
            vec![MatrixField::zero(1)],
        )
        .unwrap();
        let noise = sample_noise_path(&NoiseSpec::brownian(1), grid(1.0, 100), 0);
        let path = integrate_full(&model, 0.0, &[10.0], &noise).unwrap();
        let at = path.blowup().expect("cubic growth from 10 explodes");
        assert!(path.state(at)[0].is_nan());
        assert!(path.state(at - 1)[0].is_finite());
    }

    #[test]
    fn mismatched_coefficients_are_rejected() {
        let noise = sample_noise_path(&NoiseSpec::brownian(1), grid(1.0, 10), 0);
        let mut c = LinearSdeCoefficients::zero(1);
        c.forcing = CoefficientPath::Gridded(vec![0.0; 9]);
        assert!(matches!(
            integrate_linear(&c, &[0.0], &noise),
            Err(SolveError::CoefficientLength { expected: 10, got: 9 })
        ));
    }
}
