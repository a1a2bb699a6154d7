//! JSON model configuration and the built-in presets.
//!
//! ```json
//! {
//!   "preset": "gbm-small-vol",
//!   "dimension": 1,
//!   "drift": [{"1": 0.05}],
//!   "sigma": [[[0]], [[{"1": 1.0}]]],
//!   "eps_order": 4,
//!   "eps_max": 0.5,
//!   "x0": [1.0],
//!   "noise": {
//!     "covariance": [[1.0]],
//!     "drift_b": [0.0],
//!     "jumps": {"intensity": 3.0, "mark_distribution": {"type": "constant", "value": [1.0]}}
//!   },
//!   "run": {"k": 2, "T": 1.0, "steps": 10000, "eps": [0.2, 0.1], "replicates": 200, "seed": 1}
//! }
//! ```
//!
//! A polynomial is either a number (a constant) or a map from comma-separated
//! exponents to coefficients: `{"2,0": 1.5, "0,1": -1}` is `1.5 x_1² − x_2`.
//! `drift` lists one polynomial per component, or names a preset whose drift
//! is reused. `drift_family` (optional) gives `β_0, β_1, …` for an
//! ε-dependent drift and replaces `drift`. `sigma` lists the matrices
//! `σ_0, σ_1, …` as rows of polynomials. With `preset`, the preset supplies
//! every field the file leaves out; `run` and `noise` are merged key by key.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{NoiseError, SolveError};
use crate::expansion::LinearModel;
use crate::field::{MatrixField, Polynomial, VectorField};
use crate::model::{JumpSpec, ModelSpec, NoiseDrift, NoiseSpec};
use crate::multiindex::MultiIndex;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown preset '{0}' (known: gbm-small-vol, stochastic-vol, ou-additive, linear-matrix)")]
    UnknownPreset(String),
    #[error("invalid config field '{field}': {message}")]
    Invalid { field: String, message: String },
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Model(#[from] SolveError),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolyJson {
    Constant(f64),
    Terms(BTreeMap<String, f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DriftJson {
    Preset(String),
    Components(Vec<PolyJson>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DriftBJson {
    Constant(Vec<f64>),
    PiecewiseConstant { breaks: Vec<f64>, values: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub covariance: Option<Vec<Vec<f64>>>,
    pub drift_b: Option<DriftBJson>,
    pub jumps: Option<JumpSpec>,
}

/// Run parameters; every field can also be set on the command line.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub k: Option<usize>,
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub steps: Option<usize>,
    pub eps: Option<Vec<f64>>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<String>,
    /// Tolerance of the closed-form coefficient check in `oracle`.
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: Option<String>,
    pub dimension: Option<usize>,
    pub drift: Option<DriftJson>,
    pub drift_family: Option<Vec<Vec<PolyJson>>>,
    pub sigma: Option<Vec<Vec<Vec<PolyJson>>>>,
    pub eps_order: Option<usize>,
    pub eps_max: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub run: RunSection,
}

pub const PRESETS: [&str; 4] = ["gbm-small-vol", "stochastic-vol", "ou-additive", "linear-matrix"];

/// The preset as a config document.
pub fn preset(name: &str) -> Result<Value, ConfigError> {
    let v = match name {
        // Black-Scholes with volatility ε·σ̃: σ_0 = 0, σ_1 = σ̃ x.
        "gbm-small-vol" => serde_json::json!({
            "dimension": 1,
            "drift": [{"1": 0.05}],
            "sigma": [[[0.0]], [[{"1": 1.0}]]],
            "eps_order": 4,
            "eps_max": 0.5,
            "x0": [1.0],
            "noise": {"covariance": [[1.0]], "drift_b": [0.0]},
            "run": {"k": 2, "T": 1.0, "steps": 10000, "eps": [0.2, 0.1, 0.05, 0.025],
                    "replicates": 200, "seed": 20240601, "tolerance": 0.01}
        }),
        // Black-Scholes leading order σ_0 = σ̃ x with higher volatility terms.
        "stochastic-vol" => serde_json::json!({
            "dimension": 1,
            "drift": [{"1": 0.05}],
            "sigma": [[[{"1": 0.2}]], [[{"1": 0.1}]], [[{"1": 0.05}]]],
            "eps_order": 3,
            "eps_max": 0.5,
            "x0": [1.0],
            "noise": {"covariance": [[1.0]], "drift_b": [0.0]},
            "run": {"k": 2, "T": 1.0, "steps": 2000, "eps": [0.2, 0.1, 0.05, 0.025],
                    "replicates": 200, "seed": 20240602}
        }),
        // β(x) = A x + F(x) with cubic damping, additive noise ε Λ.
        "ou-additive" => serde_json::json!({
            "dimension": 2,
            "drift": [
                {"1,0": -1.0, "0,1": 0.5, "3,0": -0.1},
                {"1,0": 0.2, "0,1": -0.5, "1,1": -0.05}
            ],
            "sigma": [[[0.0, 0.0], [0.0, 0.0]], [[0.3, 0.0], [0.1, 0.2]]],
            "eps_order": 3,
            "eps_max": 0.5,
            "x0": [1.0, -0.5],
            "noise": {"covariance": [[1.0, 0.0], [0.0, 1.0]], "drift_b": [0.0, 0.0]},
            "run": {"k": 2, "T": 1.0, "steps": 2000, "eps": [0.2, 0.1, 0.05, 0.025],
                    "replicates": 200, "seed": 20240603}
        }),
        // β = A x + b, σ_0 = Π diag(x), σ_1 = λ diag(x), with jumps.
        "linear-matrix" => serde_json::json!({
            "dimension": 2,
            "drift": [{"1,0": -0.5, "0,1": 0.2, "0,0": 0.1}, {"1,0": 0.1, "0,1": -0.3}],
            "sigma": [
                [[{"1,0": 0.2}, {"0,1": 0.05}], [0.0, {"0,1": 0.15}]],
                [[{"1,0": 0.3}, 0.0], [{"1,0": 0.1}, {"0,1": 0.25}]]
            ],
            "eps_order": 3,
            "eps_max": 0.5,
            "x0": [1.0, 0.5],
            "noise": {
                "covariance": [[1.0, 0.0], [0.0, 1.0]],
                "drift_b": [0.0, 0.0],
                "jumps": {"intensity": 2.0,
                          "mark_distribution": {"type": "normal", "mean": [0.0, 0.0], "std": [0.1, 0.1]},
                          "compensated": true}
            },
            "run": {"k": 3, "T": 1.0, "steps": 2000, "eps": [0.2, 0.1, 0.05, 0.025],
                    "replicates": 100, "seed": 20240604}
        }),
        other => return Err(ConfigError::UnknownPreset(other.to_string())),
    };
    Ok(v)
}

/// Overlays `overlay` on `base`; `run` and `noise` objects merge key by key.
fn merge(base: &mut Value, overlay: Value) {
    let (Value::Object(b), Value::Object(o)) = (base, overlay) else {
        return;
    };
    for (key, value) in o {
        match (b.get_mut(&key), value) {
            (Some(Value::Object(slot)), Value::Object(inner)) if key == "run" || key == "noise" => {
                slot.extend(inner);
            }
            (_, value) => {
                b.insert(key, value);
            }
        }
    }
}

/// Parses a config document, filling gaps from its preset. Returns the
/// effective document alongside the parsed config.
pub fn parse_config(text: &str) -> Result<(ModelConfig, Value), ConfigError> {
    let user: Value = serde_json::from_str(text)?;
    if !user.is_object() {
        return Err(invalid("<root>", "expected a JSON object"));
    }
    let mut effective = match user.get("preset").and_then(Value::as_str) {
        Some(name) => preset(name)?,
        None => Value::Object(Default::default()),
    };
    merge(&mut effective, user);
    if let Some(Value::String(name)) = effective.get("drift").cloned() {
        effective["drift"] = preset(&name)?["drift"].clone();
    }
    let config: ModelConfig = serde_json::from_value(effective.clone())?;
    Ok((config, effective))
}

/// Config of a named preset.
pub fn preset_config(name: &str) -> Result<(ModelConfig, Value), ConfigError> {
    parse_config(&serde_json::json!({ "preset": name }).to_string())
}

fn parse_exponents(key: &str, dim: usize, field: &str) -> Result<MultiIndex, ConfigError> {
    let key = key.trim();
    if key.is_empty() || key == "const" {
        return Ok(MultiIndex::zeros(dim));
    }
    let exps = key
        .split(',')
        .map(|s| s.trim().parse::<u32>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| invalid(field, format!("bad exponent key '{key}'")))?;
    if exps.len() != dim {
        return Err(invalid(
            field,
            format!("exponent key '{key}' has {} entries, dimension is {dim}", exps.len()),
        ));
    }
    Ok(MultiIndex::new(exps))
}

fn polynomial(p: &PolyJson, dim: usize, field: &str) -> Result<Polynomial, ConfigError> {
    match p {
        PolyJson::Constant(c) => Ok(Polynomial::constant(dim, *c)),
        PolyJson::Terms(map) => {
            let mut terms = Vec::with_capacity(map.len());
            for (k, c) in map {
                if !c.is_finite() {
                    return Err(invalid(field, "coefficients must be finite"));
                }
                terms.push((parse_exponents(k, dim, field)?, *c));
            }
            Ok(Polynomial::new(dim, terms))
        }
    }
}

fn vector(ps: &[PolyJson], dim: usize, field: &str) -> Result<Vec<Polynomial>, ConfigError> {
    if ps.len() != dim {
        return Err(invalid(field, format!("expected {dim} components, got {}", ps.len())));
    }
    ps.iter().map(|p| polynomial(p, dim, field)).collect()
}

fn matrix(rows: &[Vec<PolyJson>], dim: usize, field: &str) -> Result<Vec<Polynomial>, ConfigError> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(invalid(field, format!("expected a {dim}x{dim} matrix")));
    }
    rows.iter().flatten().map(|p| polynomial(p, dim, field)).collect()
}

fn square(rows: &[Vec<f64>], dim: usize, field: &str) -> Result<Vec<f64>, ConfigError> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(invalid(field, format!("expected a {dim}x{dim} matrix")));
    }
    Ok(rows.iter().flatten().copied().collect())
}

/// Parameters of a scalar geometric Brownian motion `du = r u dt + ε σ̃ u dB`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GbmParams {
    pub r: f64,
    pub vol: f64,
    pub x0: f64,
}

/// A config turned into solver inputs.
#[derive(Clone, Debug)]
pub struct ResolvedModel {
    pub preset: Option<String>,
    pub model: ModelSpec,
    pub noise: NoiseSpec,
    pub x0: Vec<f64>,
    pub run: RunSection,
    /// Set when the model has the closed-form GBM coefficients.
    pub gbm: Option<GbmParams>,
    /// Set when the model is linear in the sense of [`LinearModel`].
    pub linear: Option<LinearModel>,
}

fn single_term(p: &Polynomial, alpha: &MultiIndex) -> Option<f64> {
    match p.terms() {
        [] => Some(0.0),
        [(a, c)] if a == alpha => Some(*c),
        _ => None,
    }
}

fn detect_linear(dim: usize, drift: &[Vec<Polynomial>], sigma: &[Vec<Polynomial>]) -> Option<LinearModel> {
    if drift.len() != 1 || sigma.len() > 2 {
        return None;
    }
    let (mut a, mut b) = (vec![0.0; dim * dim], vec![0.0; dim]);
    for (l, p) in drift[0].iter().enumerate() {
        for (alpha, c) in p.terms() {
            match alpha.length() {
                0 => b[l] = *c,
                1 => a[l * dim + alpha.entries().iter().position(|e| *e == 1)?] = *c,
                _ => return None,
            }
        }
    }
    let mut c = vec![0.0; dim * dim];
    let mut pi = vec![0.0; dim * dim];
    let mut lambda = vec![0.0; dim * dim];
    for (idx, p) in sigma[0].iter().enumerate() {
        let col = MultiIndex::unit(dim, idx % dim);
        for (alpha, coef) in p.terms() {
            if alpha.length() == 0 {
                c[idx] = *coef;
            } else if *alpha == col {
                pi[idx] = *coef;
            } else {
                return None;
            }
        }
    }
    if let Some(s1) = sigma.get(1) {
        for (idx, p) in s1.iter().enumerate() {
            lambda[idx] = single_term(p, &MultiIndex::unit(dim, idx % dim))?;
        }
    }
    LinearModel::new(dim, a, b, pi, lambda)
        .ok()?
        .with_constant_noise(c)
        .ok()
}

impl ModelConfig {
    pub fn resolve(&self) -> Result<ResolvedModel, ConfigError> {
        let dim = self.dimension.ok_or_else(|| invalid("dimension", "missing"))?;
        if dim == 0 {
            return Err(invalid("dimension", "must be at least 1"));
        }
        let drift_polys: Vec<Vec<Polynomial>> = match (&self.drift_family, &self.drift) {
            (Some(family), _) => {
                if family.is_empty() {
                    return Err(invalid("drift_family", "empty"));
                }
                family
                    .iter()
                    .map(|f| vector(f, dim, "drift_family"))
                    .collect::<Result<_, _>>()?
            }
            (None, Some(DriftJson::Components(c))) => vec![vector(c, dim, "drift")?],
            (None, Some(DriftJson::Preset(name))) => return Err(ConfigError::UnknownPreset(name.clone())),
            (None, None) => return Err(invalid("drift", "missing")),
        };
        let sigma = self.sigma.as_ref().ok_or_else(|| invalid("sigma", "missing"))?;
        if sigma.is_empty() {
            return Err(invalid("sigma", "needs at least sigma_0"));
        }
        let sigma_polys: Vec<Vec<Polynomial>> = sigma
            .iter()
            .map(|m| matrix(m, dim, "sigma"))
            .collect::<Result<_, _>>()?;
        let mut model = ModelSpec::with_drift_family(
            drift_polys
                .iter()
                .map(|c| VectorField::from_polynomials(c.clone()))
                .collect(),
            sigma_polys
                .iter()
                .map(|m| MatrixField::from_polynomials(dim, m.clone()))
                .collect(),
        )?;
        if let Some(m) = self.eps_order {
            model = model
                .with_eps_order(m)
                .map_err(|e| invalid("eps_order", e.to_string()))?;
        }
        if let Some(e) = self.eps_max {
            if !(e > 0.0) {
                return Err(invalid("eps_max", "must be positive"));
            }
            model = model.with_eps_max(e);
        }
        let x0 = self.x0.clone().unwrap_or_else(|| vec![0.0; dim]);
        if x0.len() != dim {
            return Err(invalid("x0", format!("expected {dim} entries")));
        }

        let noise_cfg = self.noise.clone().unwrap_or_default();
        let covariance = match &noise_cfg.covariance {
            Some(rows) => square(rows, dim, "noise.covariance")?,
            None => crate::linalg::identity(dim),
        };
        let drift_b = match &noise_cfg.drift_b {
            None => NoiseDrift::Constant(vec![0.0; dim]),
            Some(DriftBJson::Constant(b)) => NoiseDrift::Constant(b.clone()),
            Some(DriftBJson::PiecewiseConstant { breaks, values }) => NoiseDrift::PiecewiseConstant {
                breaks: breaks.clone(),
                values: values.clone(),
            },
        };
        let noise = NoiseSpec::with_drift(dim, covariance.clone(), drift_b, noise_cfg.jumps.clone())?;

        let plain_brownian = covariance == [1.0]
            && noise.jumps().is_none()
            && matches!(noise.drift(), NoiseDrift::Constant(b) if b[0] == 0.0);
        let gbm = if dim == 1
            && plain_brownian
            && drift_polys.len() == 1
            && sigma_polys.len() >= 2
            && sigma_polys[0][0].terms().is_empty()
            && sigma_polys[2..].iter().all(|m| m[0].terms().is_empty())
        {
            let x = MultiIndex::new(vec![1]);
            single_term(&drift_polys[0][0], &x)
                .zip(single_term(&sigma_polys[1][0], &x))
                .map(|(r, vol)| GbmParams { r, vol, x0: x0[0] })
        } else {
            None
        };
        let linear = detect_linear(dim, &drift_polys, &sigma_polys);
        Ok(ResolvedModel {
            preset: self.preset.clone(),
            model,
            noise,
            x0,
            run: self.run.clone(),
            gbm,
            linear,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        for name in PRESETS {
            let (cfg, _) = preset_config(name).unwrap();
            let r = cfg.resolve().unwrap();
            assert_eq!(r.preset.as_deref(), Some(name));
            assert!(r.run.k.unwrap() <= r.model.eps_order());
        }
        let gbm = preset_config("gbm-small-vol").unwrap().0.resolve().unwrap();
        assert_eq!(
            gbm.gbm,
            Some(GbmParams {
                r: 0.05,
                vol: 1.0,
                x0: 1.0
            })
        );
        assert!(gbm.linear.is_some());
        let lin = preset_config("linear-matrix").unwrap().0.resolve().unwrap();
        let lm = lin.linear.unwrap();
        assert_eq!(lm.pi, vec![0.2, 0.05, 0.0, 0.15]);
        assert_eq!(lm.lambda, vec![0.3, 0.0, 0.1, 0.25]);
        assert_eq!(lm.b, vec![0.1, 0.0]);
        assert!(lin.gbm.is_none());
        assert!(preset_config("ou-additive")
            .unwrap()
            .0
            .resolve()
            .unwrap()
            .linear
            .is_none());
    }

    #[test]
    fn user_fields_override_preset() {
        let (cfg, effective) =
            parse_config(r#"{"preset": "gbm-small-vol", "x0": [2.0], "run": {"steps": 50}}"#).unwrap();
        assert_eq!(cfg.x0, Some(vec![2.0]));
        assert_eq!(cfg.run.steps, Some(50));
        assert_eq!(cfg.run.k, Some(2));
        assert_eq!(effective["run"]["replicates"], 200);
    }

    #[test]
    fn inline_model_with_jumps() {
        let text = r#"{
            "dimension": 2,
            "drift": [{"1,0": -1, "0,2": 0.5}, {"0,1": -1}],
            "sigma": [[[{"1,0": 0.1}, 0], [0, 0.2]], [[1, 0], [0, 1]]],
            "x0": [1, 2],
            "noise": {"covariance": [[1, 0.5], [0.5, 1]], "drift_b": [0.1, 0],
                      "jumps": {"intensity": 2, "mark_distribution": {"type": "uniform", "low": [0, 0], "high": [1, 1]}}}
        }"#;
        let r = parse_config(text).unwrap().0.resolve().unwrap();
        assert_eq!(r.model.dim(), 2);
        assert_eq!(r.model.eps_order(), 1);
        assert!(r.noise.jumps().is_some());
        assert!(r.linear.is_none());
        let mut out = vec![0.0; 2];
        r.model.drift_at(0.0, &[2.0, 3.0], &mut out);
        assert_eq!(out, vec![-2.0 + 4.5, -3.0]);
    }

    #[test]
    fn drift_by_preset_name() {
        let text = r#"{"dimension": 1, "drift": "gbm-small-vol", "sigma": [[[{"1": 0.3}]]]}"#;
        let r = parse_config(text).unwrap().0.resolve().unwrap();
        let mut out = [0.0];
        r.model.drift_at(0.0, &[2.0], &mut out);
        assert_eq!(out[0], 0.1);
    }

    #[test]
    fn bad_configs_are_reported() {
        assert!(matches!(parse_config("{"), Err(ConfigError::Json(_))));
        assert!(matches!(
            parse_config(r#"{"preset": "nope"}"#),
            Err(ConfigError::UnknownPreset(_))
        ));
        assert!(matches!(parse_config(r#"{"bogus": 1}"#), Err(ConfigError::Json(_))));
        let bad_key = r#"{"dimension": 2, "drift": [{"1": 1}, 0], "sigma": [[[0, 0], [0, 0]]]}"#;
        let err = parse_config(bad_key).unwrap().0.resolve().unwrap_err();
        assert!(
            matches!(err, ConfigError::Invalid { ref field, .. } if field == "drift"),
            "{err}"
        );
        let bad_cov = r#"{"dimension": 1, "drift": [0], "sigma": [[[1]]], "noise": {"covariance": [[-1]]}}"#;
        assert!(matches!(
            parse_config(bad_cov).unwrap().0.resolve(),
            Err(ConfigError::Noise(_))
        ));
    }
}
