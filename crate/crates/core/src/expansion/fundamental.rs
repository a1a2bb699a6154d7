//! Fundamental solutions of the homogeneous linear equation
//! `dΦ = γ Φ dt + Σ_j G_j Φ dη_j`, `Φ(0) = I`.

use std::sync::Arc;

use crate::error::SolveError;
use crate::linalg::{from_dmatrix, identity, to_dmatrix};
use crate::model::{NoisePath, TimeGrid};
use crate::simulate::CoefficientPath;

/// `Φ` and `Φ^{-1}` on the grid, plus the values just before and after
/// every jump event.
///
/// A jump inside `(t_m, t_{m+1}]` is placed at the end of its step: the
/// pre-jump value carries the continuous evolution through `t_{m+1}`, which
/// is the same convention the Euler integrators use.
#[derive(Clone, Debug)]
pub struct FundamentalMatrix {
    grid: Arc<TimeGrid>,
    dim: usize,
    values: Vec<f64>,
    inverses: Vec<f64>,
    pre_jump: Vec<f64>,
    post_jump: Vec<f64>,
    post_jump_inverses: Vec<f64>,
}

impl FundamentalMatrix {
    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn block(v: &[f64], d: usize, i: usize) -> &[f64] {
        &v[i * d * d..(i + 1) * d * d]
    }

    /// `Φ(t_m)`, row-major.
    pub fn value(&self, m: usize) -> &[f64] {
        Self::block(&self.values, self.dim, m)
    }

    /// `Φ(t_m)^{-1}`, row-major.
    pub fn inverse(&self, m: usize) -> &[f64] {
        Self::block(&self.inverses, self.dim, m)
    }

    pub fn pre_jump_value(&self, e: usize) -> &[f64] {
        Self::block(&self.pre_jump, self.dim, e)
    }

    pub fn post_jump_value(&self, e: usize) -> &[f64] {
        Self::block(&self.post_jump, self.dim, e)
    }

    pub fn post_jump_inverse(&self, e: usize) -> &[f64] {
        Self::block(&self.post_jump_inverses, self.dim, e)
    }

    /// Largest `max_{l,i} |(Φ Φ^{-1} − I)_{l,i}|` over the grid.
    pub fn max_residual(&self) -> f64 {
        let n = self.values.len() / (self.dim * self.dim);
        (0..n).map(|m| self.residual(m)).fold(0.0, f64::max)
    }

    fn residual(&self, m: usize) -> f64 {
        let d = self.dim;
        let (a, b) = (self.value(m), self.inverse(m));
        let mut worst: f64 = 0.0;
        for l in 0..d {
            for i in 0..d {
                let p: f64 = (0..d).map(|r| a[l * d + r] * b[r * d + i]).sum();
                let target = if l == i { 1.0 } else { 0.0 };
                let r = (p - target).abs();
                worst = if r.is_nan() { f64::INFINITY } else { worst.max(r) };
            }
        }
        worst
    }

    fn check(self) -> Result<Self, SolveError> {
        let n = self.values.len() / (self.dim * self.dim);
        for m in 0..n {
            let residual = self.residual(m);
            if residual > 1e-8 {
                return Err(SolveError::NearSingular { step: m, residual });
            }
        }
        Ok(self)
    }
}

fn scalar_at(path: &CoefficientPath, index: usize) -> f64 {
    match path {
        CoefficientPath::Zero => 0.0,
        CoefficientPath::Constant(v) => v[0],
        CoefficientPath::Gridded(v) => v[index],
    }
}

/// Scalar fundamental solution (`d = 1`), the stochastic exponential
///
/// `Φ(t) = exp(∫_0^t (γ − ½ G² a) ds + ∫_0^t G dη^c) · Π_{τ ≤ t} (1 + G(τ) Δη(τ))`,
///
/// with `a` the Brownian variance and `η^c` the continuous part of the
/// noise (drift, Brownian motion, compensator). Integrals use left-point
/// values of `γ` and `G`. Without Brownian part the `½ G² a` correction is
/// absent, which is the deterministic-driver case. `jump_gain` holds `G` at
/// each jump event (`Zero` and `Constant` apply to all events).
pub fn fundamental_matrix_scalar(
    gamma: &CoefficientPath,
    gain: &CoefficientPath,
    jump_gain: &CoefficientPath,
    noise: &NoisePath,
) -> Result<FundamentalMatrix, SolveError> {
    if noise.dim() != 1 {
        return Err(SolveError::NoClosedForm(format!(
            "scalar fundamental solution needs d = 1, got {}",
            noise.dim()
        )));
    }
    let grid = noise.grid().clone();
    let n = grid.steps();
    let events = noise.jumps().len();
    let a = noise.covariance()[0];
    let mut values = Vec::with_capacity(n + 1);
    let mut inverses = Vec::with_capacity(n + 1);
    let mut pre_jump = Vec::with_capacity(events);
    let mut post_jump = Vec::with_capacity(events);
    let mut post_jump_inverses = Vec::with_capacity(events);
    let (mut exponent, mut product) = (0.0f64, 1.0f64);
    values.push(1.0);
    inverses.push(1.0);
    let mut deta = [0.0];
    for m in 0..n {
        let dt = grid.dt(m);
        let (g, gm) = (scalar_at(gamma, m), scalar_at(gain, m));
        noise.continuous_increment(m, &mut deta);
        exponent += (g - 0.5 * gm * gm * a) * dt + gm * deta[0];
        let (first, step_events) = noise.jumps_in_step(m);
        for (offset, event) in step_events.iter().enumerate() {
            let e = first + offset;
            pre_jump.push(exponent.exp() * product);
            let factor = 1.0 + scalar_at(jump_gain, e) * event.mark[0];
            if factor == 0.0 {
                return Err(SolveError::SingularJump { event: e });
            }
            product *= factor;
            post_jump.push(exponent.exp() * product);
            post_jump_inverses.push((-exponent).exp() / product);
        }
        values.push(exponent.exp() * product);
        inverses.push((-exponent).exp() / product);
    }
    FundamentalMatrix {
        grid,
        dim: 1,
        values,
        inverses,
        pre_jump,
        post_jump,
        post_jump_inverses,
    }
    .check()
}

/// `Φ(t) = exp(γ t)` for a constant `d×d` matrix `γ` and no state-dependent
/// noise (`G = 0`), by scaling and squaring with a Padé approximant.
pub fn fundamental_matrix_constant(gamma: &[f64], noise: &NoisePath) -> Result<FundamentalMatrix, SolveError> {
    let d = noise.dim();
    if gamma.len() != d * d {
        return Err(SolveError::CoefficientLength {
            expected: d * d,
            got: gamma.len(),
        });
    }
    let grid = noise.grid().clone();
    let g = to_dmatrix(d, gamma);
    let expm = |t: f64| from_dmatrix(&(&g * t).exp());
    let mut values = Vec::with_capacity((grid.steps() + 1) * d * d);
    let mut inverses = Vec::with_capacity(values.capacity());
    for &t in grid.times() {
        if t == 0.0 {
            values.extend(identity(d));
            inverses.extend(identity(d));
        } else {
            values.extend(expm(t));
            inverses.extend(expm(-t));
        }
    }
    let mut pre_jump = Vec::new();
    let mut post_jump_inverses = Vec::new();
    for event in noise.jumps() {
        let m = event.step + 1;
        pre_jump.extend_from_slice(&values[m * d * d..(m + 1) * d * d]);
        post_jump_inverses.extend_from_slice(&inverses[m * d * d..(m + 1) * d * d]);
    }
    FundamentalMatrix {
        grid,
        dim: d,
        values,
        inverses,
        post_jump: pre_jump.clone(),
        pre_jump,
        post_jump_inverses,
    }
    .check()
}

/// The jump factor `Π_{τ ≤ t_m} (1 + Δη(τ)) e^{−Δη(τ)}` of a scalar noise
/// path on the grid.
pub fn doleans_dade_jump_factor(noise: &NoisePath) -> Vec<f64> {
    let mut out = Vec::with_capacity(noise.steps() + 1);
    let mut acc = 1.0;
    out.push(acc);
    for m in 0..noise.steps() {
        for event in noise.jumps_in_step(m).1 {
            let dj = event.mark[0];
            acc *= (1.0 + dj) * (-dj).exp();
        }
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_noise_path, JumpEvent, NoiseSpec};

    fn grid(t: f64, n: usize) -> Arc<TimeGrid> {
        Arc::new(TimeGrid::uniform(t, n).unwrap())
    }

    fn single_jump_path(mark: f64) -> NoisePath {
        let g = grid(1.0, 10);
        NoisePath::from_parts(
            g,
            vec![0.0],
            vec![0.0; 10],
            vec![0.0; 10],
            vec![JumpEvent {
                time: 0.3,
                step: 0,
                mark: vec![mark],
            }],
            0,
        )
        .unwrap()
    }

    #[test]
    fn constant_rate_is_exponential() {
        let gamma = -0.7;
        let noise = sample_noise_path(&NoiseSpec::brownian(1), grid(2.0, 400), 1);
        let c = CoefficientPath::Constant(vec![gamma]);
        let phi = fundamental_matrix_scalar(&c, &CoefficientPath::Zero, &CoefficientPath::Zero, &noise).unwrap();
        for (m, t) in noise.grid().times().iter().enumerate() {
            let exact = (gamma * t).exp();
            assert!((phi.value(m)[0] - exact).abs() <= gamma * gamma * t * 0.005 + 1e-14);
            assert!((phi.value(m)[0] * phi.inverse(m)[0] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn exponential_martingale_has_unit_mean() {
        let gain = CoefficientPath::Constant(vec![0.8]);
        let n_paths = 10_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for seed in 0..n_paths {
            let noise = sample_noise_path(&NoiseSpec::brownian(1), grid(1.0, 8), seed);
            let phi = fundamental_matrix_scalar(&CoefficientPath::Zero, &gain, &gain, &noise).unwrap();
            let v = phi.value(8)[0];
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / n_paths as f64;
        let se = ((sum_sq / n_paths as f64 - mean * mean) / n_paths as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn literal_doleans_dade_jump_factor() {
        let noise = single_jump_path(0.5);
        let factor = doleans_dade_jump_factor(&noise);
        for (m, t) in noise.grid().times().iter().enumerate() {
            let expected = if *t < 0.3 - 1e-12 { 1.0 } else { 1.5 * (-0.5f64).exp() };
            assert!((factor[m] - expected).abs() < 1e-15, "t = {t}");
        }
    }

    #[test]
    fn jump_multiplies_by_one_plus_gain_times_mark() {
        let noise = single_jump_path(0.5);
        let one = CoefficientPath::Constant(vec![1.0]);
        let phi = fundamental_matrix_scalar(&CoefficientPath::Zero, &CoefficientPath::Zero, &one, &noise).unwrap();
        assert_eq!(phi.value(2)[0], 1.0);
        assert_eq!(phi.value(3)[0], 1.5);
        assert_eq!(phi.pre_jump_value(0)[0], 1.0);
        assert_eq!(phi.post_jump_value(0)[0], 1.5);
        let none = fundamental_matrix_scalar(
            &CoefficientPath::Zero,
            &CoefficientPath::Zero,
            &CoefficientPath::Zero,
            &noise,
        )
        .unwrap();
        assert_eq!(none.value(10)[0], 1.0);
    }

    #[test]
    fn jump_of_minus_one_is_singular() {
        let noise = single_jump_path(-1.0);
        let one = CoefficientPath::Constant(vec![1.0]);
        assert!(matches!(
            fundamental_matrix_scalar(&CoefficientPath::Zero, &one, &one, &noise),
            Err(SolveError::SingularJump { event: 0 })
        ));
    }

    #[test]
    fn matrix_exponential_of_rotation() {
        let noise = sample_noise_path(&NoiseSpec::brownian(2), grid(1.0, 16), 0);
        let w = 2.0;
        let phi = fundamental_matrix_constant(&[0.0, -w, w, 0.0], &noise).unwrap();
        for (m, t) in noise.grid().times().iter().enumerate() {
            let v = phi.value(m);
            let (c, s) = ((w * t).cos(), (w * t).sin());
            for (got, want) in v.iter().zip([c, -s, s, c]) {
                assert!((got - want).abs() < 1e-12);
            }
        }
        assert!(phi.max_residual() < 1e-12);
    }
}
