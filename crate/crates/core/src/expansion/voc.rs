//! Variation of constants for linear SDEs with a closed-form fundamental
//! solution.

use crate::error::SolveError;
use crate::linalg::mat_vec_add;
use crate::model::NoisePath;
use crate::simulate::{CoefficientPath, LinearSdeCoefficients, Scheme, SolutionPath, BLOWUP_THRESHOLD};

use super::fundamental::{fundamental_matrix_constant, fundamental_matrix_scalar, FundamentalMatrix};

fn fundamental_for(coeffs: &LinearSdeCoefficients, noise: &NoisePath) -> Result<FundamentalMatrix, SolveError> {
    if coeffs.dim == 1 {
        return fundamental_matrix_scalar(&coeffs.drift_matrix, &coeffs.noise_gain, &coeffs.jump_gain, noise);
    }
    if !coeffs.noise_gain.is_zero() || !coeffs.jump_gain.is_zero() {
        return Err(SolveError::NoClosedForm(
            "state-dependent noise in dimension > 1".into(),
        ));
    }
    match &coeffs.drift_matrix {
        CoefficientPath::Zero => fundamental_matrix_constant(&vec![0.0; coeffs.dim * coeffs.dim], noise),
        CoefficientPath::Constant(g) => fundamental_matrix_constant(g, noise),
        CoefficientPath::Gridded(_) => Err(SolveError::NoClosedForm(
            "time-dependent drift matrix in dimension > 1".into(),
        )),
    }
}

fn slice(path: &CoefficientPath, index: usize, width: usize) -> Option<&[f64]> {
    match path {
        CoefficientPath::Zero => None,
        CoefficientPath::Constant(v) => Some(v),
        CoefficientPath::Gridded(v) => Some(&v[index * width..(index + 1) * width]),
    }
}

/// `X(t) = Φ(t)[x0 + ∫Φ^{-1}(F − G g a) ds + ∫Φ^{-1} g dη]` on the grid.
///
/// Integrals are left-point sums; the contribution of a jump uses the
/// post-jump `Φ^{-1}`. The Itô correction `G g a` only arises for `d = 1`,
/// the only case with state-dependent noise admitted here.
pub fn solve_linear_by_variation_of_constants(
    coeffs: &LinearSdeCoefficients,
    x0: &[f64],
    noise: &NoisePath,
) -> Result<SolutionPath, SolveError> {
    let d = coeffs.dim;
    if x0.len() != d || noise.dim() != d {
        return Err(SolveError::InvalidModel(format!(
            "dimension mismatch: coefficients {d}, initial value {}, noise {}",
            x0.len(),
            noise.dim()
        )));
    }
    coeffs.validate(noise)?;
    let phi = fundamental_for(coeffs, noise)?;
    let grid = noise.grid().clone();
    let n = grid.steps();
    let a = noise.covariance()[0];

    let mut states = vec![f64::NAN; (n + 1) * d];
    let mut pre_jump = vec![f64::NAN; noise.jumps().len() * d];
    states[..d].copy_from_slice(x0);
    let mut y = x0.to_vec();
    let mut integrand = vec![0.0; d];
    let mut deta = vec![0.0; d];
    let mut blowup = None;

    for m in 0..n {
        let dt = grid.dt(m);
        integrand.fill(0.0);
        if let Some(f) = slice(&coeffs.forcing, m, d) {
            for (o, v) in integrand.iter_mut().zip(f) {
                *o += v * dt;
            }
        }
        noise.continuous_increment(m, &mut deta);
        if let Some(g) = slice(&coeffs.noise_loading, m, d * d) {
            mat_vec_add(g, &deta, 1.0, &mut integrand);
            if d == 1 {
                if let Some(gain) = slice(&coeffs.noise_gain, m, 1) {
                    integrand[0] -= gain[0] * g[0] * a * dt;
                }
            }
        }
        mat_vec_add(phi.inverse(m), &integrand, 1.0, &mut y);

        let (first, events) = noise.jumps_in_step(m);
        for (offset, event) in events.iter().enumerate() {
            let e = first + offset;
            let mut x_pre = vec![0.0; d];
            mat_vec_add(phi.pre_jump_value(e), &y, 1.0, &mut x_pre);
            pre_jump[e * d..(e + 1) * d].copy_from_slice(&x_pre);
            if let Some(g) = slice(&coeffs.jump_loading, e, d * d) {
                integrand.fill(0.0);
                mat_vec_add(g, &event.mark, 1.0, &mut integrand);
                mat_vec_add(phi.post_jump_inverse(e), &integrand, 1.0, &mut y);
            }
        }

        let x = &mut states[(m + 1) * d..(m + 2) * d];
        x.fill(0.0);
        mat_vec_add(phi.value(m + 1), &y, 1.0, x);
        let norm = crate::linalg::norm(x);
        if !norm.is_finite() || norm > BLOWUP_THRESHOLD {
            x.fill(f64::NAN);
            blowup = Some(m + 1);
            break;
        }
    }
    Ok(SolutionPath::new(grid, d, states, pre_jump, blowup, Scheme::ClosedForm))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{sample_noise_path, JumpSpec, MarkDistribution, NoiseSpec, TimeGrid};
    use crate::simulate::integrate_linear;

    fn grid(t: f64, n: usize) -> Arc<TimeGrid> {
        Arc::new(TimeGrid::uniform(t, n).unwrap())
    }

    #[test]
    fn homogeneous_is_phi_times_x0() {
        let noise = sample_noise_path(&NoiseSpec::brownian(1), grid(1.0, 100), 2);
        let coeffs = LinearSdeCoefficients::constant(1, vec![0.0], vec![0.3], vec![0.5], vec![0.0]);
        let x = solve_linear_by_variation_of_constants(&coeffs, &[2.0], &noise).unwrap();
        let phi =
            fundamental_matrix_scalar(&coeffs.drift_matrix, &coeffs.noise_gain, &coeffs.jump_gain, &noise).unwrap();
        for m in 0..=100 {
            assert!((x.state(m)[0] - 2.0 * phi.value(m)[0]).abs() < 1e-13);
        }
    }

    #[test]
    fn additive_unit_loading_is_brownian() {
        let noise = sample_noise_path(&NoiseSpec::brownian(1), grid(1.0, 100), 9);
        let coeffs = LinearSdeCoefficients::constant(1, vec![0.0], vec![0.0], vec![0.0], vec![1.0]);
        let x = solve_linear_by_variation_of_constants(&coeffs, &[0.4], &noise).unwrap();
        let b = noise.brownian_path();
        for (m, bm) in b.iter().enumerate() {
            assert!((x.state(m)[0] - (0.4 + bm)).abs() < 1e-13);
        }
    }

    #[test]
    fn converges_to_euler_with_jumps_and_forcing() {
        let spec = NoiseSpec::new(
            1,
            vec![1.0],
            vec![0.0],
            Some(JumpSpec {
                intensity: 2.0,
                marks: MarkDistribution::Uniform {
                    low: vec![-0.4],
                    high: vec![0.4],
                },
                compensated: false,
            }),
        )
        .unwrap();
        let coeffs = LinearSdeCoefficients::constant(1, vec![0.2], vec![-0.5], vec![0.4], vec![0.3]);
        let rms = |n: usize| {
            let mut acc = 0.0;
            for seed in 0..100 {
                let noise = sample_noise_path(&spec, grid(1.0, n), seed);
                let a = solve_linear_by_variation_of_constants(&coeffs, &[1.0], &noise).unwrap();
                let b = integrate_linear(&coeffs, &[1.0], &noise).unwrap();
                let sup = (0..=n)
                    .map(|m| (a.state(m)[0] - b.state(m)[0]).abs())
                    .fold(0.0, f64::max);
                acc += sup * sup;
            }
            (acc / 100.0).sqrt()
        };
        let (coarse, fine) = (rms(64), rms(1024));
        let slope = (coarse / fine).ln() / 16f64.ln();
        assert!(slope >= 0.4, "slope {slope}: {coarse} -> {fine}");
    }

    #[test]
    fn matrix_case_with_additive_noise() {
        let noise = sample_noise_path(&NoiseSpec::brownian(2), grid(1.0, 4000), 4);
        let gamma = vec![-1.0, 0.5, 0.0, -2.0];
        let coeffs = LinearSdeCoefficients::constant(2, vec![1.0, 0.0], gamma, vec![0.0; 8], vec![0.3, 0.0, 0.1, 0.2]);
        let a = solve_linear_by_variation_of_constants(&coeffs, &[1.0, -1.0], &noise).unwrap();
        let b = integrate_linear(&coeffs, &[1.0, -1.0], &noise).unwrap();
        let diff = crate::linalg::max_abs_diff(a.states(), b.states());
        assert!(diff < 5e-3, "{diff}");
    }

    #[test]
    fn multiplicative_matrix_case_has_no_closed_form() {
        let noise = sample_noise_path(&NoiseSpec::brownian(2), grid(1.0, 10), 4);
        let mut gain = vec![0.0; 8];
        gain[0] = 1.0;
        let coeffs = LinearSdeCoefficients::constant(2, vec![0.0; 2], vec![0.0; 4], gain, vec![0.0; 4]);
        assert!(matches!(
            solve_linear_by_variation_of_constants(&coeffs, &[1.0, 1.0], &noise),
            Err(SolveError::NoClosedForm(_))
        ));
    }
}
