use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::field::VectorField;
use crate::rng::rng_from_seed;

/// Axis-aligned box `Π [lo_i, hi_i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        assert!(lo.iter().zip(&hi).all(|(a, b)| a <= b), "empty box");
        BoxDomain { lo, hi }
    }

    pub fn cube(dim: usize, half_width: f64) -> Self {
        Self::new(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(&self.lo).zip(&self.hi) {
            *o = a + (b - a) * rng.random::<f64>();
        }
    }

    /// The box scaled by `factor` about its center.
    pub fn scaled(&self, factor: f64) -> BoxDomain {
        let (lo, hi) = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| {
                let (c, h) = (0.5 * (a + b), 0.5 * (b - a) * factor);
                (c - h, c + h)
            })
            .unzip();
        BoxDomain { lo, hi }
    }
}

/// Sampled Lipschitz constant on a box and on the box enlarged fourfold;
/// strong growth between the two suggests the field is not globally
/// Lipschitz.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzReport {
    pub on_box: f64,
    pub on_enlarged_box: f64,
}

impl LipschitzReport {
    pub fn looks_non_lipschitz(&self) -> bool {
        !self.on_enlarged_box.is_finite() || self.on_enlarged_box > 2.0 * self.on_box.max(1e-12)
    }
}

/// `max ‖f(x) − f(y)‖ / ‖x − y‖` over `samples` random pairs in the box, for
/// a map with `out_dim` outputs.
pub fn lipschitz_estimate_fn(
    domain: &BoxDomain,
    out_dim: usize,
    samples: usize,
    seed: u64,
    f: impl Fn(&[f64], &mut [f64]),
) -> f64 {
    let d = domain.dim();
    let mut rng = rng_from_seed(seed);
    let (mut x, mut y) = (vec![0.0; d], vec![0.0; d]);
    let (mut fx, mut fy) = (vec![0.0; out_dim], vec![0.0; out_dim]);
    let mut best = 0.0f64;
    for _ in 0..samples {
        domain.sample(&mut rng, &mut x);
        domain.sample(&mut rng, &mut y);
        let dx = crate::linalg::norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
        if dx == 0.0 {
            continue;
        }
        f(&x, &mut fx);
        f(&y, &mut fy);
        let df = crate::linalg::norm(&fx.iter().zip(&fy).map(|(a, b)| a - b).collect::<Vec<_>>());
        best = best.max(df / dx);
    }
    best
}

/// Sampled Lipschitz estimate of a vector field on a box.
pub fn lipschitz_estimate(field: &VectorField, domain: &BoxDomain, samples: usize, seed: u64) -> f64 {
    lipschitz_estimate_fn(domain, field.dim(), samples, seed, |x, out| field.evaluate_into(x, out))
}
