use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FitConfig, FitMeta, Fitted, PerformanceDataset};
use crate::coalition::{Coalition, PlayerUniverse};
use crate::error::{Error, Result};
use crate::game::CgaModel;

/// `v(C) = sum_{i in C} w_i + x_C^T F G^T x_C` with `F`, `G` of shape `n x r`.
///
/// With one-hot `x_C` the quadratic term is `a . b` where `a` and `b` sum
/// the rows of `F` and `G` over the members of `C`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankPairwiseModel {
    universe: PlayerUniverse,
    w: Vec<f64>,
    left: DMatrix<f64>,
    right: DMatrix<f64>,
}

/// Gradient of [`LowRankPairwiseModel::objective`], shaped like the model.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankGradient {
    pub w: Vec<f64>,
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
}

impl LowRankPairwiseModel {
    pub fn new(universe: PlayerUniverse, w: Vec<f64>, left: DMatrix<f64>, right: DMatrix<f64>) -> Result<Self> {
        let n = universe.len();
        if w.len() != n || left.nrows() != n || right.nrows() != n {
            return Err(Error::domain("low-rank model dimensions do not match the universe"));
        }
        if left.ncols() != right.ncols() || left.ncols() == 0 || left.ncols() > n {
            return Err(Error::domain(format!(
                "factor ranks must agree and lie in 1..={n}, got {} and {}",
                left.ncols(),
                right.ncols()
            )));
        }
        Ok(LowRankPairwiseModel { universe, w, left, right })
    }

    pub fn universe(&self) -> &PlayerUniverse {
        &self.universe
    }

    pub fn rank(&self) -> usize {
        self.left.ncols()
    }

    pub fn linear(&self) -> &[f64] {
        &self.w
    }

    pub fn left(&self) -> &DMatrix<f64> {
        &self.left
    }

    pub fn right(&self) -> &DMatrix<f64> {
        &self.right
    }

    /// `F G^T`.
    pub fn interaction_matrix(&self) -> DMatrix<f64> {
        &self.left * self.right.transpose()
    }

    pub fn eval(&self, c: Coalition) -> Result<f64> {
        self.universe.check(c)?;
        Ok(self.parts(c).0)
    }

    /// Value together with the factor sums `a` and `b`.
    fn parts(&self, c: Coalition) -> (f64, Vec<f64>, Vec<f64>) {
        let r = self.rank();
        let mut a = vec![0.0; r];
        let mut b = vec![0.0; r];
        let mut linear = 0.0;
        for i in c.members() {
            linear += self.w[i];
            for t in 0..r {
                a[t] += self.left[(i, t)];
                b[t] += self.right[(i, t)];
            }
        }
        let quad: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        (linear + quad, a, b)
    }

    /// Mean squared error over `rows` plus `l2` times the squared norm of
    /// every parameter, with its gradient.
    pub fn objective(&self, rows: &[(Coalition, f64)], l2: f64) -> (f64, LowRankGradient) {
        let (n, r) = (self.universe.len(), self.rank());
        let mut grad = LowRankGradient {
            w: self.w.iter().map(|x| 2.0 * l2 * x).collect(),
            left: &self.left * (2.0 * l2),
            right: &self.right * (2.0 * l2),
        };
        let penalty = l2 * (self.w.iter().map(|x| x * x).sum::<f64>() + self.left.norm_squared() + self.right.norm_squared());
        if rows.is_empty() {
            return (penalty, grad);
        }
        let scale = 2.0 / rows.len() as f64;
        let mut sse = 0.0;
        for &(c, y) in rows {
            let (pred, a, b) = self.parts(c);
            let e = pred - y;
            sse += e * e;
            for i in c.members() {
                grad.w[i] += scale * e;
                for t in 0..r {
                    grad.left[(i, t)] += scale * e * b[t];
                    grad.right[(i, t)] += scale * e * a[t];
                }
            }
        }
        debug_assert_eq!(grad.w.len(), n);
        (sse / rows.len() as f64 + penalty, grad)
    }

    fn mse(&self, rows: &[(Coalition, f64)]) -> f64 {
        rows.iter().map(|&(c, y)| (self.parts(c).0 - y).powi(2)).sum::<f64>() / rows.len() as f64
    }

    fn step(&mut self, grad: &LowRankGradient, lr: f64) {
        self.w.iter_mut().zip(&grad.w).for_each(|(x, g)| *x -= lr * g);
        self.left -= &grad.left * lr;
        self.right -= &grad.right * lr;
    }

    fn is_finite(&self) -> bool {
        self.w.iter().chain(self.left.iter()).chain(self.right.iter()).all(|x| x.is_finite())
    }
}

/// Mini-batch gradient descent on [`LowRankPairwiseModel::objective`].
///
/// Parameters start uniform on `[-1/sqrt(n), 1/sqrt(n)]`; rows are
/// reshuffled every epoch. Initialization and shuffling use separate streams
/// of one seeded generator. A non-finite loss aborts with the epoch index.
pub fn fit_lowrank_pairwise(data: &PerformanceDataset, cfg: &FitConfig) -> Result<Fitted<LowRankPairwiseModel>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::domain("cannot fit an empty dataset"));
    }
    let n = data.universe().len();
    if cfg.rank == 0 || cfg.rank > n {
        return Err(Error::domain(format!("rank must lie in 1..={n}, got {}", cfg.rank)));
    }

    let mut init = ChaCha8Rng::seed_from_u64(cfg.seed);
    init.set_stream(0);
    let scale = 1.0 / (n as f64).sqrt();
    let mut draw = || init.random_range(-scale..=scale);
    let w = (0..n).map(|_| draw()).collect();
    let left = DMatrix::from_fn(n, cfg.rank, |_, _| draw());
    let right = DMatrix::from_fn(n, cfg.rank, |_, _| draw());
    let mut model = LowRankPairwiseModel::new(data.universe().clone(), w, left, right)?;

    let mut shuffle = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle.set_stream(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut mse = model.mse(data.rows());
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data.rows()[i]));
            let (_, grad) = model.objective(&batch, cfg.l2);
            model.step(&grad, cfg.learning_rate);
        }
        mse = model.mse(data.rows());
        if !mse.is_finite() || !model.is_finite() {
            return Err(Error::numerical(Some(epoch), "training loss diverged"));
        }
    }

    Ok(Fitted {
        model,
        meta: FitMeta {
            method: "lowrank_pairwise".into(),
            l2: cfg.l2,
            final_loss: Some(mse),
            rank: Some(cfg.rank),
            epochs: Some(cfg.epochs),
            seed: Some(cfg.seed),
            ..Default::default()
        },
    })
}

/// Order-2 interaction weights of a pairwise model: `w_i + V_ii` for
/// singletons and `V_ij + V_ji` for pairs, with `V = F G^T`.
pub fn pairwise_to_cga(m: &LowRankPairwiseModel) -> Result<CgaModel> {
    let n = m.universe.len();
    let v = m.interaction_matrix();
    let singles = (0..n).map(|i| (Coalition::from_indices([i]), m.w[i] + v[(i, i)]));
    let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
    let pairs: Vec<_> = pairs
        .map(|(i, j)| (Coalition::from_indices([i, j]), v[(i, j)] + v[(j, i)]))
        .collect();
    CgaModel::new(m.universe.clone(), 2, singles.chain(pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::testing::{max_relative_error, numeric_gradient};
    use crate::CharacteristicFunction;
    use rand_distr::{Distribution, Normal};

    fn random_model(n: usize, r: usize, seed: u64, sd: f64) -> LowRankPairwiseModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sd).unwrap();
        let w = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let left = DMatrix::from_fn(n, r, |_, _| normal.sample(&mut rng));
        let right = DMatrix::from_fn(n, r, |_, _| normal.sample(&mut rng));
        LowRankPairwiseModel::new(PlayerUniverse::numbered(n).unwrap(), w, left, right).unwrap()
    }

    fn full_data(n: usize, mut f: impl FnMut(Coalition) -> f64) -> PerformanceDataset {
        let rows = (1..1u64 << n).map(Coalition::from_mask).map(|c| (c, f(c))).collect();
        PerformanceDataset::new(PlayerUniverse::numbered(n).unwrap(), rows).unwrap()
    }

    fn flatten(g: &LowRankGradient) -> Vec<f64> {
        g.w.iter().chain(g.left.iter()).chain(g.right.iter()).copied().collect()
    }

    fn unflatten(template: &LowRankPairwiseModel, p: &[f64]) -> LowRankPairwiseModel {
        let (n, r) = (template.universe.len(), template.rank());
        LowRankPairwiseModel::new(
            template.universe.clone(),
            p[..n].to_vec(),
            DMatrix::from_column_slice(n, r, &p[n..n + n * r]),
            DMatrix::from_column_slice(n, r, &p[n + n * r..]),
        )
        .unwrap()
    }

    #[test]
    fn zero_factors_give_additive_model() {
        let u = PlayerUniverse::numbered(3).unwrap();
        let m = LowRankPairwiseModel::new(u, vec![1.0, 2.0, -1.0], DMatrix::zeros(3, 1), DMatrix::zeros(3, 1)).unwrap();
        let cga = pairwise_to_cga(&m).unwrap();
        for i in 0..3 {
            assert_eq!(cga.weight(Coalition::from_indices([i])), m.w[i]);
        }
        assert!(cga.weights().iter().filter(|(s, _)| s.size() == 2).all(|&(_, w)| w == 0.0));
    }

    #[test]
    fn off_diagonal_entry_symmetrizes() {
        let u = PlayerUniverse::numbered(2).unwrap();
        let left = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let right = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let m = LowRankPairwiseModel::new(u, vec![0.0, 0.0], left, right).unwrap();
        let cga = pairwise_to_cga(&m).unwrap();
        assert_eq!(cga.weight(Coalition::from_mask(0b11)), 1.0);
        assert_eq!(cga.weight(Coalition::from_mask(0b01)), 0.0);
        assert_eq!(cga.weight(Coalition::from_mask(0b10)), 0.0);
    }

    #[test]
    fn conversion_agrees_with_direct_evaluation() {
        let m = random_model(8, 3, 4, 1.0);
        let cga = pairwise_to_cga(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let c = Coalition::from_mask(rng.random_range(0..256));
            assert!((cga.value(c) - m.eval(c).unwrap()).abs() < 1e-9);
        }
        assert_eq!(m.eval(Coalition::EMPTY).unwrap(), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = random_model(5, 2, 9, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let rows: Vec<_> = (0..15)
            .map(|_| (Coalition::from_mask(rng.random_range(0..32)), rng.random_range(-2.0..2.0)))
            .collect();
        let (_, grad) = m.objective(&rows, 0.2);
        let p: Vec<f64> = m.w.iter().chain(m.left.iter()).chain(m.right.iter()).copied().collect();
        let fd = numeric_gradient(&p, |q| unflatten(&m, q).objective(&rows, 0.2).0);
        assert!(max_relative_error(&flatten(&grad), &fd) < 1e-4);
    }

    fn cfg(rank: usize, epochs: usize, lr: f64) -> FitConfig {
        FitConfig {
            rank,
            epochs,
            learning_rate: lr,
            batch_size: 16,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn fits_rank_one_family() {
        let truth = random_model(8, 1, 21, 0.4);
        let data = full_data(8, |c| truth.eval(c).unwrap());
        let fit = fit_lowrank_pairwise(&data, &cfg(1, 2000, 0.01)).unwrap();
        assert!(fit.meta.final_loss.unwrap() <= 1e-3, "{:?}", fit.meta);
    }

    #[test]
    fn full_rank_fits_any_pairwise_game() {
        let truth = crate::game::random_cga(5, 2, 6, 0.5).unwrap();
        let data = full_data(5, |c| truth.value(c));
        let fit = fit_lowrank_pairwise(&data, &cfg(5, 3000, 0.01)).unwrap();
        assert!(fit.meta.final_loss.unwrap() <= 1e-4, "{:?}", fit.meta);
    }

    #[test]
    fn under_ranked_fits_worse() {
        let truth = random_model(8, 3, 30, 0.4);
        let data = full_data(8, |c| truth.eval(c).unwrap());
        let low = fit_lowrank_pairwise(&data, &cfg(1, 300, 0.005)).unwrap().meta.final_loss.unwrap();
        let right = fit_lowrank_pairwise(&data, &cfg(3, 300, 0.005)).unwrap().meta.final_loss.unwrap();
        assert!(right < low, "rank 3 mse {right} vs rank 1 mse {low}");
    }

    #[test]
    fn deterministic_given_seed() {
        let truth = random_model(6, 2, 1, 0.5);
        let data = full_data(6, |c| truth.eval(c).unwrap());
        let a = fit_lowrank_pairwise(&data, &cfg(2, 20, 0.005)).unwrap();
        let b = fit_lowrank_pairwise(&data, &cfg(2, 20, 0.005)).unwrap();
        assert_eq!(a, b);
        let c = fit_lowrank_pairwise(&data, &FitConfig { seed: 4, ..cfg(2, 20, 0.005) }).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn divergence_reports_epoch() {
        let truth = random_model(6, 2, 1, 2.0);
        let data = full_data(6, |c| truth.eval(c).unwrap());
        match fit_lowrank_pairwise(&data, &cfg(2, 50, 10.0)) {
            Err(Error::Numerical { epoch: Some(e), .. }) => assert!(e < 50),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
