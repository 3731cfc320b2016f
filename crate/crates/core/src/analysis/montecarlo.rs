use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MC_LIMIT;
use crate::error::{guard, Error, Result};
use crate::shapley::{marginal_weights, shapley_table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L1,
    L2,
}

/// Distribution of the error norm `r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusLaw {
    Fixed(f64),
    /// `high` with probability `p_high`, otherwise `low`.
    TwoPoint { low: f64, high: f64, p_high: f64 },
}

impl RadiusLaw {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            RadiusLaw::Fixed(r) => r >= 0.0 && r.is_finite(),
            RadiusLaw::TwoPoint { low, high, p_high } => {
                low >= 0.0 && high >= 0.0 && low.is_finite() && high.is_finite() && (0.0..=1.0).contains(&p_high)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid radius law {self:?}")))
        }
    }

    /// `E[r^p]`.
    fn moment(&self, p: i32) -> f64 {
        match *self {
            RadiusLaw::Fixed(r) => r.powi(p),
            RadiusLaw::TwoPoint { low, high, p_high } => p_high * high.powi(p) + (1.0 - p_high) * low.powi(p),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            RadiusLaw::Fixed(r) => r,
            RadiusLaw::TwoPoint { low, high, p_high } => {
                if rng.random::<f64>() < p_high {
                    high
                } else {
                    low
                }
            }
        }
    }
}

/// Configuration of an average-case error-propagation experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseExperiment {
    pub n: usize,
    pub norm_kind: NormKind,
    pub radius: RadiusLaw,
    pub trials: usize,
    pub seed: u64,
    /// `kappa1 / kappa0`; exactly 1 for the uniform samplers used here.
    pub kappa_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub n: usize,
    pub norm_kind: NormKind,
    pub trials: usize,
    /// Mean of `|S_n e|_2^2` (L2) or `|S_n e|_1` (L1).
    pub empirical_mean: f64,
    pub standard_error: f64,
    pub bound: f64,
    pub holds: bool,
    /// L2 only: `E[r^2] Tr(S_n S_n^T) / 2^n`, the exact expectation for a
    /// uniform direction.
    pub expected: Option<f64>,
    /// L2 only: whether the empirical mean lies within 3 standard errors of
    /// `expected`.
    pub within_3se: Option<bool>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub per_trial: Vec<f64>,
}

/// Samples error vectors of norm `r`, pushes them through the Shapley map
/// and compares the average amplification against the smooth-noise bound.
///
/// L2 draws directions uniformly on the sphere (normalized Gaussians). L1
/// draws `|e| / r` uniformly on the simplex (normalized exponentials) with
/// independent random signs. Trial `t` uses its own ChaCha stream, so the
/// result does not depend on how trials are scheduled across threads.
pub fn mc_average_case(cfg: &NoiseExperiment, keep_trials: bool) -> Result<McReport> {
    if cfg.n == 0 {
        return Err(Error::domain("need at least one player"));
    }
    guard("Monte Carlo size n", cfg.n, MC_LIMIT)?;
    if cfg.trials == 0 {
        return Err(Error::domain("need at least one trial"));
    }
    if !(cfg.kappa_ratio >= 1.0 && cfg.kappa_ratio.is_finite()) {
        return Err(Error::domain("kappa ratio must be finite and at least 1"));
    }
    cfg.radius.validate()?;

    let n = cfg.n;
    let dim = 1usize << n;
    let samples: Vec<f64> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t as u64);
            let r = cfg.radius.draw(&mut rng);
            let e = match cfg.norm_kind {
                NormKind::L2 => sphere_point(&mut rng, dim, r),
                NormKind::L1 => simplex_point(&mut rng, dim, r),
            };
            let phi = shapley_table(&e, n);
            match cfg.norm_kind {
                NormKind::L2 => phi.iter().map(|x| x * x).sum(),
                NormKind::L1 => phi.iter().map(|x| x.abs()).sum(),
            }
        })
        .collect();

    let count = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / count;
    let var = if samples.len() > 1 {
        samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1.0)
    } else {
        0.0
    };
    let se = (var / count).sqrt();
    let nf = n as f64;
    let scale = dim as f64;

    let (bound, expected) = match cfg.norm_kind {
        NormKind::L2 => {
            let bound = 6.0 / nf * cfg.kappa_ratio * cfg.radius.moment(2) / scale;
            let trace = nf * d1(n);
            (bound, Some(cfg.radius.moment(2) * trace / scale))
        }
        NormKind::L1 => (2.0 * cfg.kappa_ratio * cfg.radius.moment(1) / scale, None),
    };
    let within_3se = expected.map(|e| (mean - e).abs() <= 3.0 * se);

    Ok(McReport {
        n,
        norm_kind: cfg.norm_kind,
        trials: cfg.trials,
        empirical_mean: mean,
        standard_error: se,
        bound,
        holds: mean <= bound,
        expected,
        within_3se,
        per_trial: if keep_trials { samples } else { Vec::new() },
    })
}

/// Diagonal entry of `S_n S_n^T`: sum of squared row entries.
fn d1(n: usize) -> f64 {
    // 2 * sum_s C(n-1, s) / (n C(n-1, s))^2 = (2/n) * sum_s marginal weight(s)
    2.0 / n as f64 * marginal_weights(n).iter().sum::<f64>()
}

fn sphere_point(rng: &mut ChaCha8Rng, dim: usize, r: f64) -> Vec<f64> {
    let mut z: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut z {
        *x *= r / norm;
    }
    z
}

fn simplex_point(rng: &mut ChaCha8Rng, dim: usize, r: f64) -> Vec<f64> {
    let mut z: Vec<f64> = (0..dim).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = z.iter().sum();
    for x in &mut z {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        *x *= sign * r / total;
    }
    z
}
