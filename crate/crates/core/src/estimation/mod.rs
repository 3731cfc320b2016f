//! Fitting interaction models from data.
//!
//! Three estimators share the [`FitConfig`] / [`FitMeta`] plumbing:
//! exact least squares on coalition values, a low-rank pairwise model
//! trained by mini-batch gradient descent, and Bradley-Terry matchup
//! likelihood. Each objective is exposed with its analytic gradient so the
//! derivatives can be checked against finite differences.

mod bradley_terry;
mod dataset;
mod least_squares;
mod lowrank;

pub use bradley_terry::{bradley_terry_objective, fit_bradley_terry, predict_win_prob};
pub use dataset::{split_indices, Matchup, MatchupDataset, PerformanceDataset};
pub use least_squares::{fit_least_squares, least_squares_objective};
pub use lowrank::{fit_lowrank_pairwise, pairwise_to_cga, LowRankGradient, LowRankPairwiseModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters for the iterative fits. `rank` is read only by the
/// low-rank path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub l2: f64,
    pub rank: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            l2: 0.0,
            rank: 1,
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::domain(format!("l2 must be finite and non-negative, got {}", self.l2)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::domain("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::domain("batch size must be at least 1"));
        }
        Ok(())
    }
}

/// Diagnostics recorded alongside a fitted model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub method: String,
    pub l2: f64,
    /// Training mean squared error, penalty excluded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
    /// Training mean negative log likelihood, penalty excluded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nll: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identified: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design_rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// How first-order weights were shifted after a matchup fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centering: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fitted<T> {
    pub model: T,
    pub meta: FitMeta,
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(FitConfig::default().validate().is_ok());
        for bad in [
            FitConfig { l2: -1.0, ..Default::default() },
            FitConfig { learning_rate: 0.0, ..Default::default() },
            FitConfig { epochs: 0, ..Default::default() },
            FitConfig { batch_size: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn meta_omits_missing_fields() {
        let meta = FitMeta {
            method: "least_squares".into(),
            identified: Some(true),
            ..Default::default()
        };
        let json = serde_json::to_string(&meta).unwrap();
        assert_eq!(json, r#"{"method":"least_squares","l2":0.0,"identified":true}"#);
        assert_eq!(serde_json::from_str::<FitMeta>(&json).unwrap(), meta);
    }
}
