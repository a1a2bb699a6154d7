use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::{json, Value};
use smallnoise_core::config::{self, ConfigError, ResolvedModel, RunSection};
use smallnoise_core::oracle::{check_order_terms, gbm_coefficient_errors, relative_path_diff};
use smallnoise_core::rng::path_seed;
use smallnoise_core::{
    run_remainder_study, sample_noise_path, solve_coefficients, solve_coefficients_linear_model, ExpansionResult,
    FieldError, RemainderConfig, SolveError, StudyError, TimeGrid,
};

use crate::report::{self, Csv};
use crate::RunArgs;

const DEFAULT_K: usize = 1;
const DEFAULT_HORIZON: f64 = 1.0;
const DEFAULT_STEPS: usize = 1000;
const DEFAULT_REPLICATES: usize = 100;
const DEFAULT_TOLERANCE: f64 = 1e-2;
const SPECIALIZATION_TOLERANCE: f64 = 1e-10;
const ORDER_TERM_MODELS: usize = 50;
const ORDER_TERM_MAX_DIM: usize = 3;
const ORDER_TERM_K: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Derivative(String),
    #[error("{0}")]
    Paths(String),
    #[error("{0}")]
    Tolerance(String),
    #[error("{0}")]
    Failed(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Field(FieldError::MissingDerivative { .. }) | SolveError::OrderUnavailable { .. } => {
                CliError::Derivative(e.to_string())
            }
            SolveError::Noise(_) | SolveError::InvalidModel(_) | SolveError::Field(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Model(inner) => inner.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Solve(inner) => inner.into(),
            StudyError::InvalidConfig(_) => CliError::Config(e.to_string()),
            StudyError::InsufficientPaths { .. } => CliError::Paths(e.to_string()),
            StudyError::NonMonotoneLadder { .. } => CliError::Failed(e.to_string()),
        }
    }
}

fn config_err(field: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("invalid config field '{field}': {message}"))
}

/// Config with flags applied and defaults filled.
struct Run {
    command: &'static str,
    config_file: Option<PathBuf>,
    effective: Value,
    resolved: ResolvedModel,
    k: usize,
    horizon: f64,
    steps: usize,
    eps: Vec<f64>,
    replicates: usize,
    seed: u64,
    jobs: Option<usize>,
    out: PathBuf,
    tolerance: f64,
}

fn apply_flags(run: &mut RunSection, args: &RunArgs) {
    run.k = args.k.or(run.k);
    run.horizon = args.horizon.or(run.horizon);
    run.steps = args.steps.or(run.steps);
    run.eps = args.eps.clone().or(run.eps.take());
    run.replicates = args.replicates.or(run.replicates);
    run.seed = args.seed.or(run.seed);
    run.jobs = args.jobs.or(run.jobs);
    if let Some(out) = &args.out {
        run.out = Some(out.display().to_string());
    }
}

fn load(command: &'static str, args: &RunArgs) -> Result<Run, CliError> {
    let (mut cfg, mut effective) = match (&args.config, &args.preset) {
        (Some(path), preset) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
            let mut doc: Value = serde_json::from_str(&text).map_err(ConfigError::from)?;
            if let (Some(name), Some(obj)) = (preset, doc.as_object_mut()) {
                obj.insert("preset".into(), Value::String(name.clone()));
            }
            config::parse_config(&doc.to_string())?
        }
        (None, Some(name)) => config::preset_config(name)?,
        (None, None) => return Err(CliError::Config("either --config or --preset is required".into())),
    };
    apply_flags(&mut cfg.run, args);
    effective["run"] = serde_json::to_value(&cfg.run).expect("run section serializes");
    let resolved = cfg.resolve()?;

    let run = &cfg.run;
    let horizon = run.horizon.unwrap_or(DEFAULT_HORIZON);
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(config_err("T", "must be positive and finite"));
    }
    let steps = run.steps.unwrap_or(DEFAULT_STEPS);
    if steps < 10 {
        return Err(config_err("steps", "must be at least 10"));
    }
    if run.jobs == Some(0) {
        return Err(config_err("jobs", "must be at least 1"));
    }
    let tolerance = run.tolerance.unwrap_or(DEFAULT_TOLERANCE);
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(config_err("tolerance", "must be positive"));
    }
    Ok(Run {
        command,
        config_file: args.config.clone(),
        effective,
        k: run.k.unwrap_or(DEFAULT_K),
        horizon,
        steps,
        eps: run.eps.clone().unwrap_or_default(),
        replicates: run.replicates.unwrap_or(DEFAULT_REPLICATES),
        seed: run.seed.unwrap_or(0),
        jobs: run.jobs,
        out: run
            .out
            .as_deref()
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(".")),
        tolerance,
        resolved,
    })
}

impl Run {
    fn grid(&self) -> Result<Arc<TimeGrid>, CliError> {
        Ok(Arc::new(
            TimeGrid::uniform(self.horizon, self.steps).map_err(SolveError::from)?,
        ))
    }

    fn require_replicates(&self) -> Result<(), CliError> {
        if self.replicates == 0 {
            return Err(config_err("replicates", "must be at least 1"));
        }
        Ok(())
    }

    fn parallel<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.unwrap_or(0))
            .build()
            .map_err(|e| CliError::Failed(format!("cannot start worker threads: {e}")))?;
        Ok(pool.install(f))
    }

    /// Solves every replicate, in replicate order.
    fn expansions(&self, grid: &Arc<TimeGrid>) -> Result<Vec<ExpansionResult>, CliError> {
        let r = &self.resolved;
        let results: Vec<Result<ExpansionResult, SolveError>> = self.parallel(|| {
            (0..self.replicates)
                .into_par_iter()
                .map(|rep| {
                    let noise = sample_noise_path(&r.noise, grid.clone(), path_seed(self.seed, rep as u64));
                    solve_coefficients(&r.model, self.k, &r.x0, &noise)
                })
                .collect()
        })?;
        let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        let blown = results.iter().filter(|e| e.blowup().is_some()).count();
        if blown > 0 {
            eprintln!(
                "warning: {blown} of {} replicates blew up; their values are NaN from the blow-up step on",
                self.replicates
            );
        }
        Ok(results)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    fn prepare_out(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(|source| CliError::Io {
            path: self.out.clone(),
            source,
        })
    }

    fn write_manifest(&self, outputs: &[&str], results: Value) -> Result<(), CliError> {
        let manifest = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config_file": self.config_file.as_deref().map(Path::display).map(|p| p.to_string()),
            "settings": {
                "k": self.k,
                "T": self.horizon,
                "steps": self.steps,
                "eps": self.eps,
                "replicates": self.replicates,
                "seed": self.seed,
                "jobs": self.jobs,
                "tolerance": self.tolerance,
            },
            "config": self.effective,
            "outputs": outputs,
            "results": results,
        });
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        self.write("run-manifest.json", &text)?;
        Ok(())
    }
}

pub fn expand(args: &RunArgs) -> Result<(), CliError> {
    let run = load("expand", args)?;
    run.resolved.model.check_expansion_order(run.k)?;
    let grid = run.grid()?;
    let expansions = run.expansions(&grid)?;
    let mut csv = Csv::new(&["replicate", "time", "k", "component", "value"]);
    for (rep, expansion) in expansions.iter().enumerate() {
        for (m, t) in grid.times().iter().enumerate() {
            for k in 0..=run.k {
                for (i, v) in expansion.coefficient(k).state(m).iter().enumerate() {
                    csv.row(&[
                        rep.to_string(),
                        report::num(*t),
                        k.to_string(),
                        i.to_string(),
                        report::num(*v),
                    ]);
                }
            }
        }
    }
    run.prepare_out()?;
    run.write("coefficients.csv", csv.as_str())?;
    run.write_manifest(&["coefficients.csv"], Value::Null)
}

pub fn remainder(args: &RunArgs) -> Result<(), CliError> {
    let run = load("remainder", args)?;
    run.require_replicates()?;
    if run.eps.is_empty() {
        return Err(config_err("eps", "remainder needs a nonempty eps ladder"));
    }
    let cfg = RemainderConfig {
        k_max: run.k,
        x0: run.resolved.x0.clone(),
        grid: run.grid()?,
        eps_ladder: run.eps.clone(),
        replicates: run.replicates,
        master_seed: run.seed,
        check_dt: true,
    };
    let study = run.parallel(|| run_remainder_study(&run.resolved.model, &run.resolved.noise, &cfg))??;
    for w in &study.warnings {
        eprintln!("warning: {w}");
    }

    let mut rows = Csv::new(&["eps", "k", "mean_sup", "q50", "q90", "q99", "paths", "excluded"]);
    for s in &study.per_eps {
        rows.row(&[
            report::num(s.eps),
            s.k.to_string(),
            report::num(s.mean_sup),
            report::num(s.q50),
            report::num(s.q90),
            report::num(s.q99),
            s.paths.to_string(),
            s.excluded.to_string(),
        ]);
    }
    let mut summary = Csv::new(&["k", "slope", "ci_lo", "ci_hi", "dt_limited"]);
    for f in &study.fits {
        summary.row(&[
            f.k.to_string(),
            report::opt(f.slope),
            report::opt(f.ci.map(|c| c.0)),
            report::opt(f.ci.map(|c| c.1)),
            f.dt_limited.to_string(),
        ]);
    }
    run.prepare_out()?;
    run.write("remainder.csv", rows.as_str())?;
    run.write("summary.csv", summary.as_str())?;
    let q90: Vec<Option<f64>> = study.fits.iter().map(|f| f.q90_slope).collect();
    run.write_manifest(
        &["remainder.csv", "summary.csv"],
        json!({ "q90_slope": q90, "warnings": study.warnings }),
    )
}

pub fn oracle(args: &RunArgs) -> Result<(), CliError> {
    let run = load("oracle", args)?;
    run.require_replicates()?;
    let mut csv = Csv::new(&["check", "k", "value", "tolerance", "pass"]);
    let mut failures = Vec::new();
    let mut record = |csv: &mut Csv, check: &str, k: usize, value: f64, tol: f64, pass: bool| {
        if !pass {
            failures.push(format!("{check} k={k}: {value} > {tol}"));
        }
        csv.row(&[
            check.to_string(),
            k.to_string(),
            report::num(value),
            report::num(tol),
            pass.to_string(),
        ]);
    };

    let terms = run.parallel(|| check_order_terms(run.seed, ORDER_TERM_MODELS, ORDER_TERM_MAX_DIM, ORDER_TERM_K))?;
    let mismatches = terms.mismatches as f64;
    record(
        &mut csv,
        "order_terms",
        ORDER_TERM_K,
        mismatches,
        0.0,
        terms.mismatches == 0,
    );

    let r = &run.resolved;
    if r.gbm.is_some() || r.linear.is_some() {
        r.model.check_expansion_order(run.k)?;
    }
    if let Some(gbm) = r.gbm {
        let grid = run.grid()?;
        let per_rep: Vec<Result<Vec<f64>, SolveError>> = run.parallel(|| {
            (0..run.replicates)
                .into_par_iter()
                .map(|rep| {
                    let noise = sample_noise_path(&r.noise, grid.clone(), path_seed(run.seed, rep as u64));
                    let expansion = solve_coefficients(&r.model, run.k, &r.x0, &noise)?;
                    Ok(gbm_coefficient_errors(&expansion, gbm.r, gbm.vol, gbm.x0, &noise))
                })
                .collect()
        })?;
        let per_rep = per_rep.into_iter().collect::<Result<Vec<_>, _>>()?;
        for k in 0..=run.k {
            let mean = per_rep.iter().map(|e| e[k]).sum::<f64>() / per_rep.len() as f64;
            record(
                &mut csv,
                "gbm_closed_form",
                k,
                mean,
                run.tolerance,
                mean < run.tolerance,
            );
        }
    }
    if let Some(linear) = &r.linear {
        let grid = run.grid()?;
        let per_rep: Vec<Result<Vec<f64>, SolveError>> = run.parallel(|| {
            (0..run.replicates)
                .into_par_iter()
                .map(|rep| {
                    let noise = sample_noise_path(&r.noise, grid.clone(), path_seed(run.seed, rep as u64));
                    let generic = solve_coefficients(&r.model, run.k, &r.x0, &noise)?;
                    let special = solve_coefficients_linear_model(linear, run.k, &r.x0, &noise)?;
                    Ok((0..=run.k)
                        .map(|k| relative_path_diff(generic.coefficient(k), special.coefficient(k)))
                        .collect())
                })
                .collect()
        })?;
        let per_rep = per_rep.into_iter().collect::<Result<Vec<_>, _>>()?;
        for k in 0..=run.k {
            let worst = per_rep.iter().map(|d: &Vec<f64>| d[k]).fold(0.0, f64::max);
            let worst = if per_rep.iter().any(|d| d[k].is_nan()) {
                f64::NAN
            } else {
                worst
            };
            record(
                &mut csv,
                "specialization",
                k,
                worst,
                SPECIALIZATION_TOLERANCE,
                worst < SPECIALIZATION_TOLERANCE,
            );
        }
    }
    if r.gbm.is_none() && r.linear.is_none() {
        eprintln!("warning: model has no closed form or linear specialization; only the order-term check ran");
    }

    run.prepare_out()?;
    run.write("oracle.csv", csv.as_str())?;
    run.write_manifest(&["oracle.csv"], json!({ "failures": failures }))?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Tolerance(format!(
            "oracle tolerance exceeded: {}",
            failures.join("; ")
        )))
    }
}
