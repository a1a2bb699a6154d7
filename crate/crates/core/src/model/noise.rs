//! Driving noise `η(dt) = b(t) dt + dB_A(t) + dJ(t)`: a Brownian motion with
//! covariance `A`, a deterministic drift and a finite-activity compound
//! Poisson jump part standing in for the Lévy measure.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::NoiseError;
use crate::linalg::cholesky_psd;
use crate::rng::rng_from_seed;

const PSD_TOLERANCE: f64 = 1e-12;

/// Strictly increasing times `0 = t_0 < t_1 < … < t_n = T`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self, NoiseError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(NoiseError::InvalidGrid(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(NoiseError::InvalidGrid("need at least one step".into()));
        }
        let dt = horizon / steps as f64;
        let mut times: Vec<f64> = (0..steps).map(|m| m as f64 * dt).collect();
        times.push(horizon);
        Ok(TimeGrid { times })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self, NoiseError> {
        if times.len() < 2 || times[0] != 0.0 {
            return Err(NoiseError::InvalidGrid("grid must start at 0 and have a step".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(NoiseError::InvalidGrid("times must be strictly increasing".into()));
        }
        Ok(TimeGrid { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn dt(&self, m: usize) -> f64 {
        self.times[m + 1] - self.times[m]
    }

    pub fn max_dt(&self) -> f64 {
        (0..self.steps()).map(|m| self.dt(m)).fold(0.0, f64::max)
    }

    /// Every `stride`-th grid point.
    pub fn coarsen(&self, stride: usize) -> Result<TimeGrid, NoiseError> {
        if stride == 0 || !self.steps().is_multiple_of(stride) {
            return Err(NoiseError::InvalidGrid(format!(
                "stride {stride} does not divide {} steps",
                self.steps()
            )));
        }
        Ok(TimeGrid {
            times: self.times.iter().copied().step_by(stride).collect(),
        })
    }

    /// Index `m` of the step `(t_m, t_{m+1}]` containing `t ∈ (0, T]`.
    pub fn step_containing(&self, t: f64) -> usize {
        let upper = self.times.partition_point(|&s| s < t);
        upper.clamp(1, self.steps()) - 1
    }
}

/// Law of the jump marks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MarkDistribution {
    Constant {
        value: Vec<f64>,
    },
    /// Independent normal components.
    Normal {
        mean: Vec<f64>,
        std: Vec<f64>,
    },
    /// Independent uniform components on `[low, high)`.
    Uniform {
        low: Vec<f64>,
        high: Vec<f64>,
    },
}

impl MarkDistribution {
    pub fn dim(&self) -> usize {
        match self {
            MarkDistribution::Constant { value } => value.len(),
            MarkDistribution::Normal { mean, .. } => mean.len(),
            MarkDistribution::Uniform { low, .. } => low.len(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            MarkDistribution::Constant { value } => value.clone(),
            MarkDistribution::Normal { mean, .. } => mean.clone(),
            MarkDistribution::Uniform { low, high } => low.iter().zip(high).map(|(a, b)| 0.5 * (a + b)).collect(),
        }
    }

    fn validate(&self) -> Result<(), NoiseError> {
        let ok = match self {
            MarkDistribution::Constant { value } => value.iter().all(|v| v.is_finite()),
            MarkDistribution::Normal { mean, std } => {
                mean.len() == std.len() && std.iter().all(|s| *s >= 0.0 && s.is_finite())
            }
            MarkDistribution::Uniform { low, high } => {
                low.len() == high.len() && low.iter().zip(high).all(|(a, b)| a <= b)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(NoiseError::Invalid(format!("malformed mark distribution {self:?}")))
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match self {
            MarkDistribution::Constant { value } => out.extend_from_slice(value),
            MarkDistribution::Normal { mean, std } => {
                for (m, s) in mean.iter().zip(std) {
                    let n = Normal::new(*m, *s).expect("validated std");
                    out.push(n.sample(rng));
                }
            }
            MarkDistribution::Uniform { low, high } => {
                for (a, b) in low.iter().zip(high) {
                    let u: f64 = rng.random();
                    out.push(a + (b - a) * u);
                }
            }
        }
    }
}

/// Compound Poisson jumps: event times Poisson with rate `intensity`, marks
/// i.i.d. When `compensated`, `intensity · E[mark]` is subtracted as drift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpSpec {
    pub intensity: f64,
    #[serde(rename = "mark_distribution")]
    pub marks: MarkDistribution,
    #[serde(default)]
    pub compensated: bool,
}

/// Deterministic part `b(t)` of the driving noise. The piecewise-constant
/// form is an extension beyond a constant `b`.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseDrift {
    Constant(Vec<f64>),
    /// `values[i]` holds on `[breaks[i], breaks[i+1])`, with `breaks[0] = 0`.
    PiecewiseConstant {
        breaks: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

impl NoiseDrift {
    /// `∫_{s}^{t} b(r) dr`, accumulated into `out`.
    fn integrate(&self, s: f64, t: f64, out: &mut [f64]) {
        match self {
            NoiseDrift::Constant(b) => {
                for (o, v) in out.iter_mut().zip(b) {
                    *o += v * (t - s);
                }
            }
            NoiseDrift::PiecewiseConstant { breaks, values } => {
                for (i, v) in values.iter().enumerate() {
                    let lo = breaks[i].max(s);
                    let hi = breaks.get(i + 1).copied().unwrap_or(f64::INFINITY).min(t);
                    if hi > lo {
                        for (o, b) in out.iter_mut().zip(v) {
                            *o += b * (hi - lo);
                        }
                    }
                }
            }
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            NoiseDrift::Constant(b) => b.iter().all(|v| *v == 0.0),
            NoiseDrift::PiecewiseConstant { values, .. } => values.iter().flatten().all(|v| *v == 0.0),
        }
    }
}

/// Law of the driving noise.
#[derive(Clone, Debug)]
pub struct NoiseSpec {
    dim: usize,
    covariance: Vec<f64>,
    factor: Vec<f64>,
    drift: NoiseDrift,
    jumps: Option<JumpSpec>,
}

impl NoiseSpec {
    /// `covariance` is the row-major `d×d` matrix `A`; it must be symmetric
    /// positive semidefinite.
    pub fn new(dim: usize, covariance: Vec<f64>, drift: Vec<f64>, jumps: Option<JumpSpec>) -> Result<Self, NoiseError> {
        if drift.len() != dim {
            return Err(NoiseError::Invalid(format!("drift b must have {dim} entries")));
        }
        Self::with_drift(dim, covariance, NoiseDrift::Constant(drift), jumps)
    }

    pub fn with_drift(
        dim: usize,
        covariance: Vec<f64>,
        drift: NoiseDrift,
        jumps: Option<JumpSpec>,
    ) -> Result<Self, NoiseError> {
        if dim == 0 {
            return Err(NoiseError::Invalid("dimension must be positive".into()));
        }
        if covariance.len() != dim * dim {
            return Err(NoiseError::Invalid(format!("covariance must be {dim}x{dim}")));
        }
        if let NoiseDrift::PiecewiseConstant { breaks, values } = &drift {
            if breaks.is_empty()
                || breaks[0] != 0.0
                || breaks.len() != values.len()
                || breaks.windows(2).any(|w| !(w[1] > w[0]))
                || values.iter().any(|v| v.len() != dim)
            {
                return Err(NoiseError::Invalid("malformed piecewise-constant drift".into()));
            }
        }
        if let Some(j) = &jumps {
            if !(j.intensity >= 0.0 && j.intensity.is_finite()) {
                return Err(NoiseError::Invalid(format!(
                    "jump intensity must be finite and nonnegative, got {}",
                    j.intensity
                )));
            }
            j.marks.validate()?;
            if j.marks.dim() != dim {
                return Err(NoiseError::Invalid(format!("jump marks must have {dim} entries")));
            }
        }
        let factor = cholesky_psd(dim, &covariance, PSD_TOLERANCE)?;
        Ok(NoiseSpec {
            dim,
            covariance,
            factor,
            drift,
            jumps: jumps.filter(|j| j.intensity > 0.0),
        })
    }

    /// Standard `d`-dimensional Brownian motion, no drift, no jumps.
    pub fn brownian(dim: usize) -> Self {
        Self::new(dim, crate::linalg::identity(dim), vec![0.0; dim], None).expect("identity covariance is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    pub fn drift(&self) -> &NoiseDrift {
        &self.drift
    }

    pub fn jumps(&self) -> Option<&JumpSpec> {
        self.jumps.as_ref()
    }

    pub fn has_piecewise_drift(&self) -> bool {
        matches!(self.drift, NoiseDrift::PiecewiseConstant { .. })
    }
}

/// One jump of the compound Poisson part.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    /// Index `m` with `t_m < time ≤ t_{m+1}`.
    pub step: usize,
    pub mark: Vec<f64>,
}

/// A realized noise trajectory on a grid, shared by every solver that needs
/// to see the same randomness.
#[derive(Clone, Debug)]
pub struct NoisePath {
    grid: Arc<TimeGrid>,
    dim: usize,
    covariance: Vec<f64>,
    brownian: Vec<f64>,
    drift: Vec<f64>,
    jumps: Vec<JumpEvent>,
    /// `jumps[step_start[m]..step_start[m+1]]` fall in step `m`.
    step_start: Vec<usize>,
    seed: u64,
}

impl NoisePath {
    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Brownian covariance `A` (per unit time).
    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    /// `B(t_{m+1}) − B(t_m)`.
    pub fn brownian_increment(&self, m: usize) -> &[f64] {
        &self.brownian[m * self.dim..(m + 1) * self.dim]
    }

    /// `∫ b dt` over step `m`, minus the jump compensator when enabled.
    pub fn drift_increment(&self, m: usize) -> &[f64] {
        &self.drift[m * self.dim..(m + 1) * self.dim]
    }

    /// Continuous part of `η` over step `m`: drift plus Brownian increment.
    pub fn continuous_increment(&self, m: usize, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.drift[m * self.dim + i] + self.brownian[m * self.dim + i];
        }
    }

    pub fn jumps(&self) -> &[JumpEvent] {
        &self.jumps
    }

    /// Jumps in `(t_m, t_{m+1}]`, in time order, with their global indices.
    pub fn jumps_in_step(&self, m: usize) -> (usize, &[JumpEvent]) {
        let (a, b) = (self.step_start[m], self.step_start[m + 1]);
        (a, &self.jumps[a..b])
    }

    /// `B(t_m)` for every grid point, row-major `(n+1)×d`.
    pub fn brownian_path(&self) -> Vec<f64> {
        let mut out = vec![0.0; (self.steps() + 1) * self.dim];
        for m in 0..self.steps() {
            for i in 0..self.dim {
                out[(m + 1) * self.dim + i] = out[m * self.dim + i] + self.brownian[m * self.dim + i];
            }
        }
        out
    }

    /// The same realization seen on every `stride`-th grid point; increments
    /// are sums of the fine increments.
    pub fn restrict(&self, stride: usize) -> Result<NoisePath, NoiseError> {
        let grid = Arc::new(self.grid.coarsen(stride)?);
        let n = grid.steps();
        let d = self.dim;
        let mut brownian = vec![0.0; n * d];
        let mut drift = vec![0.0; n * d];
        for m in 0..self.steps() {
            let c = m / stride;
            for i in 0..d {
                brownian[c * d + i] += self.brownian[m * d + i];
                drift[c * d + i] += self.drift[m * d + i];
            }
        }
        let jumps: Vec<JumpEvent> = self
            .jumps
            .iter()
            .map(|e| JumpEvent {
                step: e.step / stride,
                ..e.clone()
            })
            .collect();
        let step_start = step_offsets(&jumps, n);
        Ok(NoisePath {
            grid,
            dim: d,
            covariance: self.covariance.clone(),
            brownian,
            drift,
            jumps,
            step_start,
            seed: self.seed,
        })
    }

    /// Builds a path from explicit increments, for tests and replays.
    pub fn from_parts(
        grid: Arc<TimeGrid>,
        covariance: Vec<f64>,
        brownian: Vec<f64>,
        drift: Vec<f64>,
        mut jumps: Vec<JumpEvent>,
        seed: u64,
    ) -> Result<NoisePath, NoiseError> {
        let n = grid.steps();
        let d = (covariance.len() as f64).sqrt() as usize;
        if d * d != covariance.len() || brownian.len() != n * d || drift.len() != n * d {
            return Err(NoiseError::Invalid("noise path parts have inconsistent shapes".into()));
        }
        let horizon = grid.horizon();
        for e in &mut jumps {
            if !(e.time > 0.0 && e.time <= horizon) || e.mark.len() != d {
                return Err(NoiseError::Invalid(format!("jump at {} outside (0, T]", e.time)));
            }
            e.step = grid.step_containing(e.time);
        }
        if jumps.windows(2).any(|w| !(w[1].time > w[0].time)) {
            return Err(NoiseError::Invalid("jump times must be strictly increasing".into()));
        }
        let step_start = step_offsets(&jumps, n);
        Ok(NoisePath {
            grid,
            dim: d,
            covariance,
            brownian,
            drift,
            jumps,
            step_start,
            seed,
        })
    }
}

fn step_offsets(jumps: &[JumpEvent], steps: usize) -> Vec<usize> {
    let mut start = vec![0usize; steps + 1];
    for e in jumps {
        start[e.step + 1] += 1;
    }
    for m in 0..steps {
        start[m + 1] += start[m];
    }
    start
}

/// Samples one noise trajectory. Deterministic in `(noise, grid, seed)`:
/// Brownian increments `√Δt · L z` with `L Lᵀ = A`, then a Poisson number of
/// jumps at uniform order-statistic times with i.i.d. marks.
pub fn sample_noise_path(noise: &NoiseSpec, grid: Arc<TimeGrid>, seed: u64) -> NoisePath {
    let mut rng = rng_from_seed(seed);
    let d = noise.dim;
    let n = grid.steps();
    let mut brownian = vec![0.0; n * d];
    let degenerate = noise.factor.iter().all(|v| *v == 0.0);
    let mut z = vec![0.0; d];
    for m in 0..n {
        if degenerate {
            break;
        }
        let sqrt_dt = grid.dt(m).sqrt();
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for l in 0..d {
            let row = &noise.factor[l * d..(l + 1) * d];
            brownian[m * d + l] = sqrt_dt * row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    let mut drift = vec![0.0; n * d];
    if !noise.drift.is_zero() {
        for m in 0..n {
            let (s, t) = (grid.times()[m], grid.times()[m + 1]);
            noise.drift.integrate(s, t, &mut drift[m * d..(m + 1) * d]);
        }
    }

    let mut jumps = Vec::new();
    if let Some(spec) = &noise.jumps {
        let horizon = grid.horizon();
        let count = Poisson::new(spec.intensity * horizon)
            .map(|p| p.sample(&mut rng) as usize)
            .unwrap_or(0);
        let mut times: Vec<f64> = (0..count).map(|_| horizon * (1.0 - rng.random::<f64>())).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        for time in times {
            let mut mark = Vec::with_capacity(d);
            spec.marks.sample(&mut rng, &mut mark);
            jumps.push(JumpEvent {
                time,
                step: grid.step_containing(time),
                mark,
            });
        }
        if spec.compensated {
            let mean = spec.marks.mean();
            for m in 0..n {
                let dt = grid.dt(m);
                for i in 0..d {
                    drift[m * d + i] -= spec.intensity * mean[i] * dt;
                }
            }
        }
    }
    let step_start = step_offsets(&jumps, n);
    NoisePath {
        grid,
        dim: d,
        covariance: noise.covariance.clone(),
        brownian,
        drift,
        jumps,
        step_start,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t: f64, n: usize) -> Arc<TimeGrid> {
        Arc::new(TimeGrid::uniform(t, n).unwrap())
    }

    #[test]
    fn degenerate_noise_is_silent() {
        let spec = NoiseSpec::new(2, vec![0.0; 4], vec![0.0; 2], None).unwrap();
        let path = sample_noise_path(&spec, grid(1.0, 50), 9);
        assert!(path.jumps().is_empty());
        for m in 0..50 {
            assert_eq!(path.brownian_increment(m), &[0.0, 0.0]);
            assert_eq!(path.drift_increment(m), &[0.0, 0.0]);
        }
    }

    #[test]
    fn reproducible_bit_for_bit() {
        let spec = NoiseSpec::new(
            1,
            vec![1.0],
            vec![0.1],
            Some(JumpSpec {
                intensity: 4.0,
                marks: MarkDistribution::Normal {
                    mean: vec![0.0],
                    std: vec![0.3],
                },
                compensated: true,
            }),
        )
        .unwrap();
        let a = sample_noise_path(&spec, grid(2.0, 100), 77);
        let b = sample_noise_path(&spec, grid(2.0, 100), 77);
        assert_eq!(a.brownian, b.brownian);
        assert_eq!(a.drift, b.drift);
        assert_eq!(a.jumps, b.jumps);
        let c = sample_noise_path(&spec, grid(2.0, 100), 78);
        assert_ne!(a.brownian, c.brownian);
    }

    #[test]
    fn restriction_sums_increments() {
        let spec = NoiseSpec::new(
            2,
            vec![1.0, 0.3, 0.3, 0.5],
            vec![0.2, -0.1],
            Some(JumpSpec {
                intensity: 10.0,
                marks: MarkDistribution::Constant { value: vec![1.0, -1.0] },
                compensated: false,
            }),
        )
        .unwrap();
        let fine = sample_noise_path(&spec, grid(1.0, 120), 5);
        let coarse = fine.restrict(4).unwrap();
        assert_eq!(coarse.steps(), 30);
        for c in 0..30 {
            for i in 0..2 {
                let sum: f64 = (0..4).map(|k| fine.brownian_increment(4 * c + k)[i]).sum();
                assert!((coarse.brownian_increment(c)[i] - sum).abs() < 1e-15);
            }
        }
        for e in coarse.jumps() {
            let g = coarse.grid().times();
            assert!(g[e.step] < e.time && e.time <= g[e.step + 1]);
        }
        assert_eq!(coarse.jumps().len(), fine.jumps().len());
    }

    #[test]
    fn jump_steps_bracket_jump_times() {
        let spec = NoiseSpec::new(
            1,
            vec![0.0],
            vec![0.0],
            Some(JumpSpec {
                intensity: 20.0,
                marks: MarkDistribution::Uniform {
                    low: vec![-1.0],
                    high: vec![1.0],
                },
                compensated: false,
            }),
        )
        .unwrap();
        let path = sample_noise_path(&spec, grid(1.5, 37), 3);
        let mut prev = 0.0;
        for m in 0..path.steps() {
            let (_, events) = path.jumps_in_step(m);
            for e in events {
                assert!(e.time > prev);
                prev = e.time;
                assert!(path.grid().times()[m] < e.time && e.time <= path.grid().times()[m + 1]);
                assert!((-1.0..1.0).contains(&e.mark[0]));
            }
        }
    }

    #[test]
    fn compensation_subtracts_mean_jump_rate() {
        let spec = NoiseSpec::new(
            1,
            vec![0.0],
            vec![0.0],
            Some(JumpSpec {
                intensity: 3.0,
                marks: MarkDistribution::Constant { value: vec![0.5] },
                compensated: true,
            }),
        )
        .unwrap();
        let path = sample_noise_path(&spec, grid(1.0, 10), 1);
        for m in 0..10 {
            assert!((path.drift_increment(m)[0] + 3.0 * 0.5 * 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn piecewise_drift_integrates_exactly() {
        let drift = NoiseDrift::PiecewiseConstant {
            breaks: vec![0.0, 0.25],
            values: vec![vec![1.0], vec![-2.0]],
        };
        let spec = NoiseSpec::with_drift(1, vec![0.0], drift, None).unwrap();
        let path = sample_noise_path(&spec, grid(1.0, 2), 0);
        assert!((path.drift_increment(0)[0] - (0.25 - 0.5)).abs() < 1e-15);
        assert!((path.drift_increment(1)[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(matches!(
            NoiseSpec::new(2, vec![1.0, 2.0, 2.0, 1.0], vec![0.0; 2], None),
            Err(NoiseError::NonPsdCovariance { .. })
        ));
        assert!(NoiseSpec::new(1, vec![1.0], vec![0.0, 0.0], None).is_err());
        assert!(TimeGrid::uniform(0.0, 10).is_err());
        assert!(TimeGrid::from_times(vec![0.0, 0.5, 0.5]).is_err());
    }

    #[test]
    fn step_lookup() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        assert_eq!(g.step_containing(0.25), 0);
        assert_eq!(g.step_containing(0.2500001), 1);
        assert_eq!(g.step_containing(1.0), 3);
        assert_eq!(g.step_containing(1e-9), 0);
    }
}
