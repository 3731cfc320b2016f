//! Experiment drivers behind the CLI: team completion, percentile scoring,
//! synthetic data generation and the worst-case bound sweep.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use cga_core::analysis::{l1_bounds, l2_worst_bound, top_singular_direction, BoundCheck, BoundOutcome};
use cga_core::coalition::{binomial, Coalition, FixedSize};
use cga_core::estimation::PerformanceDataset;
use cga_core::io::{save_model_json, save_performance_csv};
use cga_core::{random_cga, CharacteristicFunction, Error, Game, PlayerUniverse, Result};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

/// Largest number of candidate additions scored by [`best_completion`].
pub const COMPLETION_BUDGET: u64 = 10_000_000;
/// Above this many teams, percentile sampling switches from enumeration to
/// rejection sampling.
const ENUMERATION_LIMIT: u64 = 1 << 20;

fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionQuery {
    pub base: Coalition,
    pub slots: usize,
    pub pool: Coalition,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub team: Coalition,
    pub score: f64,
    pub candidates: u64,
}

/// Highest-scoring `base ∪ A` over every `A ⊆ pool` with `|A| = slots`;
/// ties go to the smallest team mask.
pub fn best_completion<F>(f: &F, q: &CompletionQuery) -> Result<Completion>
where
    F: CharacteristicFunction + ?Sized,
{
    let u = f.universe();
    u.check(q.base)?;
    u.check(q.pool)?;
    if !q.base.is_disjoint(q.pool) {
        return Err(domain("candidate pool overlaps the base team"));
    }
    if q.slots == 0 || q.slots > q.pool.size() {
        return Err(domain(format!(
            "need 1 <= slots <= pool size, got {} slots for {} candidates",
            q.slots,
            q.pool.size()
        )));
    }
    let candidates = binomial(q.pool.size(), q.slots);
    if candidates > COMPLETION_BUDGET {
        return Err(Error::Capacity {
            what: format!("completion candidates C({}, {})", q.pool.size(), q.slots),
            actual: candidates,
            limit: COMPLETION_BUDGET,
        });
    }
    let pool: Vec<usize> = q.pool.members().collect();
    let mut best: Option<(f64, Coalition)> = None;
    for pick in FixedSize::new(pool.len(), q.slots) {
        let team = q.base.union(Coalition::from_indices(pick.members().map(|j| pool[j])));
        let score = f.value(team);
        let better = match best {
            None => true,
            Some((s, t)) => score > s || (score == s && team.mask() < t.mask()),
        };
        if better {
            best = Some((score, team));
        }
    }
    let (score, team) = best.expect("at least one candidate");
    Ok(Completion { team, score, candidates })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercentileReport {
    pub percentile: f64,
    pub team_score: f64,
    pub below: u64,
    pub sampled: u64,
    pub requested: u64,
}

/// Fraction of random teams of `team_size` that score strictly below `team`.
///
/// The comparison teams are distinct, never equal to `team`, and capped at
/// the number of such teams that exist.
pub fn score_team_percentile<F>(f: &F, team: Coalition, random_teams: u64, team_size: usize, seed: u64) -> Result<PercentileReport>
where
    F: CharacteristicFunction + ?Sized,
{
    let u = f.universe();
    u.check(team)?;
    let n = u.len();
    if team_size == 0 || team_size > n {
        return Err(domain(format!("team size must lie in 1..={n}, got {team_size}")));
    }
    let available = binomial(n, team_size) - u64::from(team.size() == team_size);
    let count = random_teams.min(available);
    if count == 0 {
        return Err(domain("no comparison teams are available"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let teams: Vec<Coalition> = if available <= ENUMERATION_LIMIT && 2 * count >= available {
        let mut all: Vec<Coalition> = FixedSize::new(n, team_size).filter(|&t| t != team).collect();
        let (picked, _) = all.partial_shuffle(&mut rng, count as usize);
        picked.to_vec()
    } else {
        let mut seen = HashSet::with_capacity(count as usize);
        let mut out = Vec::with_capacity(count as usize);
        while (out.len() as u64) < count {
            let t = Coalition::from_indices(index::sample(&mut rng, n, team_size));
            if t != team && seen.insert(t) {
                out.push(t);
            }
        }
        out
    };

    let team_score = f.value(team);
    let below = teams.iter().filter(|&&t| f.value(t) < team_score).count() as u64;
    Ok(PercentileReport {
        percentile: below as f64 / count as f64,
        team_score,
        below,
        sampled: count,
        requested: random_teams,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub noise_sd: f64,
    pub weight_scale: f64,
    /// Coalition sizes to observe; all sizes when absent.
    pub sizes: Option<Vec<usize>>,
    /// Draw this many coalitions uniformly instead of listing them all.
    pub samples: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub data_path: PathBuf,
    pub model_path: PathBuf,
    pub rows: usize,
    pub n: usize,
    pub k: usize,
    pub noise_sd: f64,
}

/// `<dir>/<stem>.model.json` next to a data file.
pub fn model_path_for(out_path: &Path) -> PathBuf {
    let stem = out_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out_path.with_file_name(format!("{stem}.model.json"))
}

/// Coalitions and (optionally noisy) values of a random order-k model.
///
/// The model, the coalition sample and the noise come from separate streams
/// of one seed, so changing the noise level keeps the coalitions fixed.
pub fn simulate_dataset(cfg: &SimulateConfig) -> Result<(cga_core::CgaModel, PerformanceDataset)> {
    if !(cfg.noise_sd >= 0.0 && cfg.noise_sd.is_finite()) {
        return Err(domain("noise standard deviation must be finite and non-negative"));
    }
    let model = random_cga(cfg.n, cfg.k, cfg.seed, cfg.weight_scale)?;
    let n = cfg.n;
    let sizes: Vec<usize> = match &cfg.sizes {
        Some(s) => {
            if let Some(&bad) = s.iter().find(|&&x| x > n) {
                return Err(domain(format!("coalition size {bad} exceeds {n} players")));
            }
            let mut s = s.clone();
            s.sort_unstable();
            s.dedup();
            s
        }
        None => (0..=n).collect(),
    };

    let mut sample_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sample_rng.set_stream(2);
    let coalitions: Vec<Coalition> = match cfg.samples {
        None => sizes.iter().flat_map(|&s| FixedSize::new(n, s)).collect(),
        Some(m) => {
            let weights: Vec<f64> = sizes.iter().map(|&s| binomial(n, s) as f64).collect();
            let total: f64 = weights.iter().sum();
            (0..m)
                .map(|_| {
                    let mut x = sample_rng.random::<f64>() * total;
                    let mut size = *sizes.last().expect("non-empty size list");
                    for (&s, &w) in sizes.iter().zip(&weights) {
                        if x < w {
                            size = s;
                            break;
                        }
                        x -= w;
                    }
                    Coalition::from_indices(index::sample(&mut sample_rng, n, size))
                })
                .collect()
        }
    };
    if coalitions.is_empty() {
        return Err(domain("no coalitions selected"));
    }

    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(1);
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| domain(e.to_string()))?;
    let rows = coalitions
        .into_iter()
        .map(|c| {
            let e = if cfg.noise_sd > 0.0 { noise.sample(&mut noise_rng) } else { 0.0 };
            (c, model.value(c) + e)
        })
        .collect();
    let data = PerformanceDataset::new(model.universe().clone(), rows)?;
    Ok((model, data))
}

/// Writes the simulated performance CSV to `out_path` and the generating
/// model to `<stem>.model.json` beside it.
pub fn simulate_game(cfg: &SimulateConfig, out_path: &Path) -> Result<SimulateReport> {
    let (model, data) = simulate_dataset(cfg)?;
    let model_path = model_path_for(out_path);
    save_performance_csv(out_path, &data)?;
    let meta = serde_json::json!({ "generator": "random_cga", "seed": cfg.seed, "weight_scale": cfg.weight_scale });
    save_model_json(&model_path, &model, Some(&meta))?;
    Ok(SimulateReport {
        data_path: out_path.to_path_buf(),
        model_path,
        rows: data.len(),
        n: cfg.n,
        k: cfg.k,
        noise_sd: cfg.noise_sd,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub evaluated: usize,
    pub held: usize,
    pub max_ratio: f64,
}

impl SweepStats {
    fn record(&mut self, c: &BoundCheck) {
        self.evaluated += 1;
        self.held += usize::from(c.holds);
        self.max_ratio = self.max_ratio.max(c.ratio());
    }

    pub fn all_hold(&self) -> bool {
        self.evaluated > 0 && self.held == self.evaluated
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTrial {
    pub trial: usize,
    pub bound: String,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSweep {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub worst_l2: SweepStats,
    pub total: SweepStats,
    pub interior: SweepStats,
    /// Two equal halves; empty when `n` is odd.
    pub grouped: SweepStats,
    /// Error only on the grand coalition: `total` with equality.
    pub total_equality: BoundCheck,
    /// Error along the top right-singular vector of `S_n`: L2 equality.
    pub l2_tightness: BoundCheck,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub per_trial: Vec<SweepTrial>,
}

/// Random perturbation sweep over the worst-case Shapley error bounds.
///
/// Trial `t` draws a uniform game and three Gaussian perturbations from its
/// own stream: unrestricted, zero on `∅` and the grand coalition, and
/// supported on proper non-empty subsets of one half of the players.
pub fn bound_sweep(n: usize, trials: usize, seed: u64, keep_trials: bool) -> Result<BoundSweep> {
    if n < 3 {
        return Err(domain("the bound sweep needs at least 3 players"));
    }
    let u = PlayerUniverse::numbered(n)?;
    let dim = 1usize << n;
    let grand = dim - 1;
    let groups: Option<Vec<Coalition>> = n.is_multiple_of(2).then(|| {
        let half = Coalition::grand(n / 2);
        vec![half, Coalition::from_mask(half.mask() << (n / 2))]
    });
    let within_group = |m: usize| {
        groups.as_ref().is_some_and(|gs| {
            gs.iter().any(|g| {
                let c = Coalition::from_mask(m as u64);
                !c.is_empty() && c.is_subset_of(*g) && c != *g
            })
        })
    };

    let mut sweep = BoundSweep {
        n,
        trials,
        seed,
        worst_l2: SweepStats::default(),
        total: SweepStats::default(),
        interior: SweepStats::default(),
        grouped: SweepStats::default(),
        total_equality: BoundCheck::new(0.0, 0.0),
        l2_tightness: BoundCheck::new(0.0, 0.0),
        per_trial: Vec::new(),
    };
    let mut log = |trial: usize, bound: &str, c: &BoundCheck| {
        if keep_trials {
            sweep.per_trial.push(SweepTrial {
                trial,
                bound: bound.to_owned(),
                lhs: c.lhs,
                rhs: c.rhs,
            });
        }
    };

    let mut stats = (SweepStats::default(), SweepStats::default(), SweepStats::default(), SweepStats::default());
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut noise = |keep: &dyn Fn(usize) -> bool| -> Vec<f64> {
            v.iter()
                .enumerate()
                .map(|(m, &x)| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    if keep(m) {
                        x + e
                    } else {
                        x
                    }
                })
                .collect()
        };
        let general = noise(&|_| true);
        let interior = noise(&|m| m != 0 && m != grand);
        let grouped = noise(&within_group);

        let game = |vals: Vec<f64>| Game::new(u.clone(), vals);
        let base = game(v.clone())?;

        let g = game(general)?;
        let l2 = l2_worst_bound(&base, &g)?;
        stats.0.record(&l2);
        log(t, "worst_l2", &l2);
        let r = l1_bounds(&base, &g, None)?;
        stats.1.record(&r.total);
        log(t, "total", &r.total);

        let r = l1_bounds(&base, &game(interior)?, None)?;
        if let BoundOutcome::Evaluated(c) = &r.interior {
            stats.2.record(c);
            log(t, "interior", c);
        }

        if let Some(gs) = &groups {
            let r = l1_bounds(&base, &game(grouped)?, Some(gs))?;
            if let BoundOutcome::Evaluated(c) = &r.grouped {
                stats.3.record(c);
                log(t, "grouped", c);
            }
        }
    }
    sweep.worst_l2 = stats.0;
    sweep.total = stats.1;
    sweep.interior = stats.2;
    sweep.grouped = stats.3;

    let zero = Game::new(u.clone(), vec![0.0; dim])?;
    let mut spike = vec![0.0; dim];
    spike[grand] = 1.0;
    sweep.total_equality = l1_bounds(&zero, &Game::new(u.clone(), spike)?, None)?.total;
    let top = top_singular_direction(n)?;
    sweep.l2_tightness = l2_worst_bound(&zero, &Game::new(u, top)?)?;
    Ok(sweep)
}
