//! Monte Carlo measurement of the truncation remainder
//! `u_ε − Σ_{j≤k} ε^j u_j` and of its scaling in `ε`.
//!
//! Each replicate samples one noise path; the coefficients are solved once on
//! it and the full SDE is integrated on the same path for every `ε`.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{FieldError, SolveError, StudyError};
use crate::expansion::{solve_coefficients, ExpansionResult};
use crate::field::ScalarField;
use crate::model::{sample_noise_path, BoxDomain, ModelSpec, NoisePath, NoiseSpec, TimeGrid};
use crate::multiindex::MultiIndex;
use crate::rng::{path_seed, rng_from_seed, stream_seed};
use crate::simulate::integrate_full;

const BOOTSTRAP_RESAMPLES: usize = 500;

/// Inputs of a remainder study.
#[derive(Clone, Debug)]
pub struct RemainderConfig {
    /// Highest truncation order studied; orders `0..=k_max` are reported.
    pub k_max: usize,
    pub x0: Vec<f64>,
    pub grid: Arc<TimeGrid>,
    /// Strictly decreasing, positive, at most the model's `ε_max`.
    pub eps_ladder: Vec<f64>,
    pub replicates: usize,
    pub master_seed: u64,
    /// Repeat the largest `ε` on the grid coarsened by two to detect
    /// time-discretization bias.
    pub check_dt: bool,
}

/// Statistics of `sup_t ‖remainder‖` at one `(ε, k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsStats {
    pub eps: f64,
    pub k: usize,
    pub mean_sup: f64,
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
    pub paths: usize,
    pub excluded: usize,
}

/// Log-log fit of the remainder against `ε` for one order.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeFit {
    pub k: usize,
    /// Absent when fewer than two usable ladder points remain.
    pub slope: Option<f64>,
    /// Bootstrap 95% interval over replicates.
    pub ci: Option<(f64, f64)>,
    pub q90_slope: Option<f64>,
    /// Halving the step changed the mean at the largest `ε` by 10% or more.
    pub dt_limited: bool,
}

#[derive(Clone, Debug)]
pub struct RemainderStudy {
    pub k_max: usize,
    pub eps_ladder: Vec<f64>,
    /// Ordered by ladder position, then by `k`.
    pub per_eps: Vec<EpsStats>,
    pub fits: Vec<SlopeFit>,
    pub warnings: Vec<String>,
}

impl RemainderStudy {
    pub fn stats(&self, eps_index: usize, k: usize) -> &EpsStats {
        &self.per_eps[eps_index * (self.k_max + 1) + k]
    }

    pub fn fit(&self, k: usize) -> &SlopeFit {
        &self.fits[k]
    }
}

/// Per-replicate outcome: `sups[e][k]`, `None` where excluded.
struct Record {
    sups: Vec<Option<Vec<f64>>>,
    coarse: Option<Vec<f64>>,
}

/// `sup_m ‖u_ε(t_m) − Σ_{j≤k} ε^j u_j(t_m)‖` for every `k ≤ k_max`, or `None`
/// if either side blew up. Uses `dev_k = dev_{k−1} − ε^k u_k`.
fn sup_deviations(
    model: &ModelSpec,
    expansion: &ExpansionResult,
    eps: f64,
    x0: &[f64],
    noise: &NoisePath,
) -> Result<Option<Vec<f64>>, SolveError> {
    let k_max = expansion.order();
    if expansion.blowup().is_some() {
        return Ok(None);
    }
    let full = integrate_full(model, eps, x0, noise)?;
    if full.is_blowup() {
        return Ok(None);
    }
    let d = full.dim();
    let mut sups = vec![0.0f64; k_max + 1];
    let mut dev = vec![0.0; d];
    for m in 0..=noise.steps() {
        dev.copy_from_slice(full.state(m));
        let mut scale = 1.0;
        for (k, sup) in sups.iter_mut().enumerate() {
            for (o, v) in dev.iter_mut().zip(expansion.coefficient(k).state(m)) {
                *o -= scale * v;
            }
            *sup = sup.max(crate::linalg::norm(&dev));
            scale *= eps;
        }
    }
    Ok(Some(sups))
}

fn validate(model: &ModelSpec, cfg: &RemainderConfig) -> Result<(), StudyError> {
    let bad = |msg: String| Err(StudyError::InvalidConfig(msg));
    if cfg.replicates == 0 {
        return bad("replicates must be at least 1".into());
    }
    if cfg.eps_ladder.is_empty() {
        return bad("eps ladder is empty".into());
    }
    if cfg.eps_ladder.iter().any(|e| !(*e > 0.0)) {
        return bad("eps values must be positive".into());
    }
    if cfg.eps_ladder.windows(2).any(|w| !(w[1] < w[0])) {
        return bad("eps ladder must be strictly decreasing".into());
    }
    if cfg.eps_ladder[0] > model.eps_max() {
        return bad(format!(
            "largest eps {} exceeds the model's eps_max {}",
            cfg.eps_ladder[0],
            model.eps_max()
        ));
    }
    if cfg.x0.len() != model.dim() {
        return bad(format!(
            "x0 has {} entries, model dimension is {}",
            cfg.x0.len(),
            model.dim()
        ));
    }
    Ok(())
}

/// Type-7 (linear interpolation) quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// OLS slope of `log y` against `log x`; `None` with fewer than two points or
/// a nonpositive `y`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || y.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Runs the study. Deterministic in `cfg.master_seed` regardless of thread
/// count: replicate `r` always uses noise seed `path_seed(master, r)`.
pub fn run_remainder_study(
    model: &ModelSpec,
    noise_spec: &NoiseSpec,
    cfg: &RemainderConfig,
) -> Result<RemainderStudy, StudyError> {
    validate(model, cfg)?;
    model.check_expansion_order(cfg.k_max)?;
    let mut warnings = Vec::new();
    if cfg.replicates < 100 {
        warnings.push(format!(
            "only {} replicates; slope estimates are unreliable below 100",
            cfg.replicates
        ));
    }
    let coarse_grid = cfg.check_dt && cfg.grid.steps() >= 2 && cfg.grid.steps().is_multiple_of(2);
    if cfg.check_dt && !coarse_grid {
        warnings.push("step-size check skipped: grid cannot be coarsened by two".into());
    }

    let records: Vec<Result<Record, SolveError>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let noise = sample_noise_path(noise_spec, cfg.grid.clone(), path_seed(cfg.master_seed, r as u64));
            let expansion = solve_coefficients(model, cfg.k_max, &cfg.x0, &noise)?;
            let sups = cfg
                .eps_ladder
                .iter()
                .map(|&eps| sup_deviations(model, &expansion, eps, &cfg.x0, &noise))
                .collect::<Result<Vec<_>, _>>()?;
            let coarse = if coarse_grid {
                let noise = noise.restrict(2).map_err(SolveError::from)?;
                let expansion = solve_coefficients(model, cfg.k_max, &cfg.x0, &noise)?;
                sup_deviations(model, &expansion, cfg.eps_ladder[0], &cfg.x0, &noise)?
            } else {
                None
            };
            Ok(Record { sups, coarse })
        })
        .collect();
    let records = records.into_iter().collect::<Result<Vec<_>, _>>()?;

    let total = cfg.replicates;
    let n_eps = cfg.eps_ladder.len();
    let orders = cfg.k_max + 1;
    let mut per_eps = Vec::with_capacity(n_eps * orders);
    let mut usable = Vec::with_capacity(n_eps);
    for (e, &eps) in cfg.eps_ladder.iter().enumerate() {
        let kept: Vec<&Vec<f64>> = records.iter().filter_map(|r| r.sups[e].as_ref()).collect();
        let excluded = total - kept.len();
        if 2 * excluded > total {
            return Err(StudyError::InsufficientPaths { eps, excluded, total });
        }
        if excluded > 0 {
            warnings.push(format!(
                "eps = {eps}: {excluded} of {total} paths blew up and were excluded"
            ));
        }
        usable.push(10 * kept.len() >= 9 * total);
        for k in 0..orders {
            let mut v: Vec<f64> = kept.iter().map(|s| s[k]).collect();
            v.sort_by(f64::total_cmp);
            per_eps.push(EpsStats {
                eps,
                k,
                mean_sup: v.iter().sum::<f64>() / v.len() as f64,
                q50: quantile(&v, 0.5),
                q90: quantile(&v, 0.9),
                q99: quantile(&v, 0.99),
                paths: kept.len(),
                excluded,
            });
        }
    }

    for k in 0..orders {
        let means: Vec<f64> = (0..n_eps).map(|e| per_eps[e * orders + k].mean_sup).collect();
        let violations = means.windows(2).filter(|w| w[1] > w[0] * (1.0 + 1e-9)).count();
        if violations > 1 {
            return Err(StudyError::NonMonotoneLadder { k, violations });
        }
        if violations == 1 {
            warnings.push(format!("order {k}: mean remainder increases at one ladder step"));
        }
    }

    let fit_eps: Vec<usize> = (0..n_eps).filter(|&e| usable[e]).collect();
    let xs: Vec<f64> = fit_eps.iter().map(|&e| cfg.eps_ladder[e]).collect();
    if xs.len() < 2 {
        warnings.push("fewer than two usable eps values; slopes not fitted".into());
    }
    let mut boot_rng = rng_from_seed(stream_seed(cfg.master_seed, "bootstrap"));
    let resamples: Vec<Vec<usize>> = if xs.len() >= 2 {
        (0..BOOTSTRAP_RESAMPLES)
            .map(|_| (0..total).map(|_| boot_rng.random_range(0..total)).collect())
            .collect()
    } else {
        Vec::new()
    };

    let mut fits = Vec::with_capacity(orders);
    for k in 0..orders {
        let col =
            |f: fn(&EpsStats) -> f64| -> Vec<f64> { fit_eps.iter().map(|&e| f(&per_eps[e * orders + k])).collect() };
        let slope = log_log_slope(&xs, &col(|s| s.mean_sup));
        let q90_slope = log_log_slope(&xs, &col(|s| s.q90));
        let ci = slope.and_then(|_| {
            let mut slopes: Vec<f64> = resamples
                .iter()
                .filter_map(|idx| {
                    let ys: Vec<f64> = fit_eps
                        .iter()
                        .map(|&e| {
                            let (sum, count) = idx
                                .iter()
                                .filter_map(|&r| records[r].sups[e].as_ref())
                                .fold((0.0, 0usize), |(s, c), v| (s + v[k], c + 1));
                            sum / count as f64
                        })
                        .collect();
                    log_log_slope(&xs, &ys)
                })
                .collect();
            slopes.sort_by(f64::total_cmp);
            (!slopes.is_empty()).then(|| (quantile(&slopes, 0.025), quantile(&slopes, 0.975)))
        });
        let dt_limited = if coarse_grid {
            let (sum, count) = records
                .iter()
                .filter(|r| r.sups[0].is_some())
                .filter_map(|r| r.coarse.as_ref())
                .fold((0.0, 0usize), |(s, c), v| (s + v[k], c + 1));
            let fine = per_eps[k].mean_sup;
            count == 0 || ((sum / count as f64) - fine).abs() >= 0.1 * fine.abs()
        } else {
            false
        };
        fits.push(SlopeFit {
            k,
            slope,
            ci,
            q90_slope,
            dt_limited,
        });
    }

    Ok(RemainderStudy {
        k_max: cfg.k_max,
        eps_ladder: cfg.eps_ladder.clone(),
        per_eps,
        fits,
        warnings,
    })
}

/// Sampled bounds on the order-`k+1` derivatives of drift and diffusion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundConstants {
    /// `max ‖D^{k+1} β‖` over the sampled box, Frobenius over components and
    /// multi-indices.
    pub drift: f64,
    /// Same for `σ_ε`, also maximized over an `ε` grid on `[0, ε_max]`.
    pub diffusion: f64,
    pub order: usize,
}

const EPS_GRID_POINTS: usize = 11;

/// Estimates the derivative bounds of order `k + 1` on a box from the box
/// center, its corners and `samples` uniform points. These are estimates on
/// the box, not proven global bounds.
pub fn estimate_bound_constants(
    model: &ModelSpec,
    k: usize,
    domain: &BoxDomain,
    samples: usize,
    seed: u64,
) -> Result<BoundConstants, SolveError> {
    let d = model.dim();
    if domain.dim() != d {
        return Err(SolveError::InvalidModel(format!(
            "box has dimension {}, model {d}",
            domain.dim()
        )));
    }
    let order = k + 1;
    let alphas = MultiIndex::all_of_length(d, order);

    let mut points: Vec<Vec<f64>> = vec![domain.lo.iter().zip(&domain.hi).map(|(a, b)| 0.5 * (a + b)).collect()];
    if d <= 10 {
        for mask in 0..(1usize << d) {
            points.push(
                (0..d)
                    .map(|i| if mask >> i & 1 == 1 { domain.hi[i] } else { domain.lo[i] })
                    .collect(),
            );
        }
    }
    let mut rng = rng_from_seed(seed);
    for _ in 0..samples {
        let mut x = vec![0.0; d];
        domain.sample(&mut rng, &mut x);
        points.push(x);
    }
    let eps_grid: Vec<f64> = (0..EPS_GRID_POINTS)
        .map(|i| model.eps_max() * i as f64 / (EPS_GRID_POINTS - 1) as f64)
        .collect();

    // D^α of a family member, skipping fields that are identically zero or of
    // too low degree.
    let deriv = |f: &dyn ScalarField, alpha: &MultiIndex, x: &[f64]| -> Result<f64, FieldError> {
        if f.is_zero() || f.degree().is_some_and(|deg| deg < alpha.length()) {
            Ok(0.0)
        } else {
            f.derivative(alpha, x)
        }
    };

    let mut drift_bound = 0.0f64;
    let mut diffusion_bound = 0.0f64;
    let drift_eps: &[f64] = if model.drift_family().len() > 1 {
        &eps_grid
    } else {
        &[0.0]
    };
    for x in &points {
        // Derivatives of every family member, then combined per ε.
        let drift_parts: Vec<Vec<f64>> = model
            .drift_family()
            .iter()
            .map(|f| {
                let mut v = Vec::with_capacity(d * alphas.len());
                for c in f.components() {
                    for a in &alphas {
                        v.push(deriv(c.as_ref(), a, x)?);
                    }
                }
                Ok(v)
            })
            .collect::<Result<_, FieldError>>()?;
        let diffusion_parts: Vec<Vec<f64>> = model
            .diffusion_family()
            .iter()
            .map(|s| {
                let mut v = Vec::with_capacity(d * d * alphas.len());
                for c in s.entries() {
                    for a in &alphas {
                        v.push(deriv(c.as_ref(), a, x)?);
                    }
                }
                Ok(v)
            })
            .collect::<Result<_, FieldError>>()?;
        let combine = |parts: &[Vec<f64>], eps: f64| -> f64 {
            let mut acc = vec![0.0; parts[0].len()];
            let mut scale = 1.0;
            for p in parts {
                for (a, v) in acc.iter_mut().zip(p) {
                    *a += scale * v;
                }
                scale *= eps;
            }
            crate::linalg::norm(&acc)
        };
        for &eps in drift_eps {
            drift_bound = drift_bound.max(combine(&drift_parts, eps));
        }
        for &eps in &eps_grid {
            diffusion_bound = diffusion_bound.max(combine(&diffusion_parts, eps));
        }
    }
    Ok(BoundConstants {
        drift: drift_bound,
        diffusion: diffusion_bound,
        order,
    })
}
