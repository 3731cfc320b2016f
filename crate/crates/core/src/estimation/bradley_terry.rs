use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::check_teams;
use super::{FitConfig, FitMeta, Fitted, MatchupDataset};
use crate::coalition::{canonical_coalitions, Coalition};
use crate::error::{Error, Result};
use crate::game::CgaModel;
use crate::CharacteristicFunction;

/// `P(a beats b) = 1 / (1 + exp(v(b) - v(a)))`.
pub fn predict_win_prob(model: &CgaModel, a: Coalition, b: Coalition) -> Result<f64> {
    check_teams(model.universe(), a, b)?;
    Ok(logistic(model.value(a) - model.value(b)))
}

fn logistic(d: f64) -> f64 {
    1.0 / (1.0 + (-d).exp())
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Column layout of an order-k matchup model and the per-row feature
/// differences `x_a - x_b`. Teams are disjoint, so no column appears in both.
struct Features {
    columns: Vec<Coalition>,
    rows: Vec<(Vec<usize>, Vec<usize>, bool)>,
}

impl Features {
    fn new(data: &MatchupDataset, k: usize) -> Result<Self> {
        if k != 1 && k != 2 {
            return Err(Error::domain(format!("matchup models support order 1 or 2, got {k}")));
        }
        let n = data.universe().len();
        let columns = canonical_coalitions(n, k.min(n));
        let index: HashMap<Coalition, usize> = columns.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let features = |team: Coalition| -> Vec<usize> {
            let members: Vec<usize> = team.members().collect();
            let mut out: Vec<usize> = members.iter().map(|&i| index[&Coalition::from_indices([i])]).collect();
            if k == 2 {
                for (x, &i) in members.iter().enumerate() {
                    for &j in &members[x + 1..] {
                        out.push(index[&Coalition::from_indices([i, j])]);
                    }
                }
            }
            out
        };
        let rows = data
            .rows()
            .iter()
            .map(|m| (features(m.team_a), features(m.team_b), m.a_won))
            .collect();
        Ok(Features { columns, rows })
    }

    fn margin(&self, row: usize, w: &[f64]) -> f64 {
        let (a, b, _) = &self.rows[row];
        a.iter().map(|&i| w[i]).sum::<f64>() - b.iter().map(|&i| w[i]).sum::<f64>()
    }

    fn nll(&self, row: usize, w: &[f64]) -> f64 {
        let d = self.margin(row, w);
        if self.rows[row].2 {
            softplus(-d)
        } else {
            softplus(d)
        }
    }

    fn mean_nll(&self, w: &[f64]) -> f64 {
        (0..self.rows.len()).map(|r| self.nll(r, w)).sum::<f64>() / self.rows.len() as f64
    }

    /// Mean NLL over `batch` plus `l2 |w|^2`, gradient accumulated into `grad`.
    fn objective(&self, batch: &[usize], w: &[f64], l2: f64, grad: &mut [f64]) -> f64 {
        for (g, x) in grad.iter_mut().zip(w) {
            *g = 2.0 * l2 * x;
        }
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for &r in batch {
            let (a, b, won) = &self.rows[r];
            let d = self.margin(r, w);
            total += self.nll(r, w);
            let resid = scale * (logistic(d) - if *won { 1.0 } else { 0.0 });
            a.iter().for_each(|&i| grad[i] += resid);
            b.iter().for_each(|&i| grad[i] -= resid);
        }
        total * scale + l2 * w.iter().map(|x| x * x).sum::<f64>()
    }
}

/// Mean negative log likelihood of `data` plus `l2 |w|^2` and its gradient.
///
/// `weights` follow the canonical size-then-mask column order of an order-k
/// model over the data's universe.
pub fn bradley_terry_objective(data: &MatchupDataset, k: usize, weights: &[f64], l2: f64) -> Result<(f64, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::domain("matchup dataset is empty"));
    }
    let features = Features::new(data, k)?;
    if weights.len() != features.columns.len() {
        return Err(Error::domain(format!(
            "expected {} weights, got {}",
            features.columns.len(),
            weights.len()
        )));
    }
    let mut grad = vec![0.0; weights.len()];
    let all: Vec<usize> = (0..features.rows.len()).collect();
    let loss = features.objective(&all, weights, l2, &mut grad);
    Ok((loss, grad))
}

/// Order-k Bradley-Terry fit by mini-batch gradient descent.
///
/// Weights start uniform on `[-1/sqrt(n), 1/sqrt(n)]` and batches are
/// reshuffled every epoch from the seeded stream. When every distinct
/// training team has the same size `s`, first-order weights are then shifted
/// by `-mean/s` so the mean score of those teams is zero; this leaves every
/// matchup probability unchanged. With mixed sizes no shift preserves the
/// probabilities and none is applied. `meta.centering` records which case
/// occurred.
pub fn fit_bradley_terry(data: &MatchupDataset, k: usize, cfg: &FitConfig) -> Result<Fitted<CgaModel>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::domain("matchup dataset is empty"));
    }
    let features = Features::new(data, k)?;
    let n = data.universe().len();

    let mut init = ChaCha8Rng::seed_from_u64(cfg.seed);
    init.set_stream(0);
    let scale = 1.0 / (n as f64).sqrt();
    let mut w: Vec<f64> = (0..features.columns.len()).map(|_| init.random_range(-scale..=scale)).collect();

    let mut shuffle = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle.set_stream(1);
    let mut order: Vec<usize> = (0..features.rows.len()).collect();
    let mut grad = vec![0.0; w.len()];
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        for batch in order.chunks(cfg.batch_size) {
            features.objective(batch, &w, cfg.l2, &mut grad);
            w.iter_mut().zip(&grad).for_each(|(x, g)| *x -= cfg.learning_rate * g);
        }
        let nll = features.mean_nll(&w);
        if !nll.is_finite() || w.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerical(Some(epoch), "matchup likelihood diverged"));
        }
    }

    let mut model = CgaModel::new(data.universe().clone(), k, features.columns.iter().copied().zip(w))?;
    let teams: BTreeSet<Coalition> = data.rows().iter().flat_map(|m| [m.team_a, m.team_b]).collect();
    let sizes: BTreeSet<usize> = teams.iter().map(|t| t.size()).collect();
    let centering = if let [size] = sizes.iter().copied().collect::<Vec<_>>()[..] {
        let mean = teams.iter().map(|&t| model.value(t)).sum::<f64>() / teams.len() as f64;
        let shift = mean / size as f64;
        model = model.map_weights(|s, x| if s.size() == 1 { x - shift } else { x });
        format!("mean score over {} distinct training teams of size {size}", teams.len())
    } else {
        "none: training teams have mixed sizes".to_owned()
    };

    let final_w: Vec<f64> = features.columns.iter().map(|&s| model.weight(s)).collect();
    Ok(Fitted {
        model,
        meta: FitMeta {
            method: "bradley_terry".into(),
            l2: cfg.l2,
            nll: Some(features.mean_nll(&final_w)),
            epochs: Some(cfg.epochs),
            seed: Some(cfg.seed),
            centering: Some(centering),
            ..Default::default()
        },
    })
}
