use std::path::{Path, PathBuf};

use cga_core::allocation::{exact_max_deficit, exceedance_fraction, sampled_least_core_value, SampleBudget};
use cga_core::analysis::{l1_bounds, l2_worst_bound, mc_average_case, spectrum, NoiseExperiment, NormKind, RadiusLaw};
use cga_core::coalition::{Coalition, BRUTE_FORCE_LIMIT};
use cga_core::estimation::{fit_bradley_terry, fit_least_squares, fit_lowrank_pairwise, pairwise_to_cga, FitConfig};
use cga_core::identification::{check_identifiability, misspec_report};
use cga_core::io::{load_game_csv, load_matchup_csv, load_model_json, load_performance_csv, model_to_json, save_model_json};
use cga_core::{
    group_shapley, random_cga, shapley_bruteforce, shapley_from_weights, Allocation, CgaModel, CharacteristicFunction,
    Error, Game, PlayerUniverse, Result,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::experiments::{best_completion, bound_sweep, score_team_percentile, simulate_game, CompletionQuery, SimulateConfig};
use crate::report::ReportEnvelope;

#[derive(Debug, Parser)]
#[command(name = "cga", version, about = "Cooperative game abstractions: fit, analyse and allocate")]
pub struct Cli {
    /// Write the report envelope here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an interaction model to a performance CSV.
    Fit(FitArgs),
    /// Fit a Bradley-Terry model to a matchup CSV.
    FitMatchups(FitMatchupsArgs),
    /// Shapley values of a model or game.
    Shapley(ShapleyArgs),
    /// Rank test for identifiability from the given team sizes.
    Identify(IdentifyArgs),
    /// Shapley error-propagation bounds and spectra.
    Bounds(BoundsArgs),
    /// Sampled and exact least-core values at an allocation.
    LeastCore(LeastCoreArgs),
    /// Best players to add to a team.
    CompleteTeam(CompleteTeamArgs),
    /// Percentile of a team among random teams.
    Percentile(PercentileArgs),
    /// Write a synthetic performance CSV and its generating model.
    Simulate(SimulateArgs),
    /// Misspecification error of an order-k fit to an order-r game.
    Misspec(MisspecArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    /// Factor rank of the low-rank pairwise model.
    #[arg(long, default_value_t = 1)]
    pub rank: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainArgs {
    fn config(&self) -> FitConfig {
        FitConfig {
            l2: self.l2,
            rank: self.rank,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FitMethod {
    LeastSquares,
    Lowrank,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    #[arg(long, value_enum, default_value_t = FitMethod::LeastSquares)]
    pub method: FitMethod,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Also write the fitted model JSON here.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitMatchupsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

/// A model JSON or a complete game CSV.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct SourceArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub game: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ShapleyMethod {
    ClosedForm,
    BruteForce,
}

#[derive(Debug, Args)]
pub struct ShapleyArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Defaults to closed-form for models and brute-force for games.
    #[arg(long, value_enum)]
    pub method: Option<ShapleyMethod>,
    /// Within-group Shapley values for a partition such as `a;b|c;d`.
    #[arg(long)]
    pub groups: Option<String>,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BoundsMode {
    WorstL2,
    L1,
    McL2,
    McL1,
    Spectrum,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: BoundsMode,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// Density ratio of the noise sampler; 1 for the uniform samplers.
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    /// Compare a true game with an estimate instead of sweeping random ones.
    #[arg(long, requires = "estimate")]
    pub game: Option<PathBuf>,
    #[arg(long, requires = "game")]
    pub estimate: Option<PathBuf>,
    #[arg(long)]
    pub groups: Option<String>,
    /// Per-trial values for external plotting.
    #[arg(long)]
    pub per_trial_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LeastCoreArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// `shapley`, or an allocation JSON file `{"players": [...], "payoffs": [...]}`.
    #[arg(long, default_value = "shapley")]
    pub allocation: String,
    #[arg(long, conflicts_with_all = ["delta", "confidence_failure"])]
    pub samples: Option<u64>,
    /// Target miss probability; with `--confidence-failure` sets the budget.
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub confidence_failure: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CompleteTeamArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value = "")]
    pub base: String,
    #[arg(long)]
    pub slots: usize,
    /// Candidates; every player outside the base by default.
    #[arg(long)]
    pub pool: Option<String>,
}

#[derive(Debug, Args)]
pub struct PercentileArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub team: String,
    #[arg(long, default_value_t = 1000)]
    pub random_teams: u64,
    /// Size of the comparison teams; the target's size by default.
    #[arg(long)]
    pub team_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 1.0)]
    pub weight_scale: f64,
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MisspecArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub r: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub weight_scale: f64,
}

/// Either kind of characteristic function loaded from disk.
pub enum Source {
    Model(CgaModel),
    Game(Game),
}

impl Source {
    fn load(args: &SourceArgs) -> Result<(Source, PathBuf)> {
        match (&args.model, &args.game) {
            (Some(p), _) => Ok((Source::Model(load_model_json(p)?.model), p.clone())),
            (_, Some(p)) => Ok((Source::Game(load_game_csv(p)?), p.clone())),
            _ => Err(Error::Domain("either --model or --game is required".into())),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Source::Model(_) => "model",
            Source::Game(_) => "game",
        }
    }

    fn dense(&self) -> Result<Game> {
        match self {
            Source::Model(m) => Game::from_model(m),
            Source::Game(g) => Ok(g.clone()),
        }
    }

    fn shapley(&self) -> Result<Allocation> {
        match self {
            Source::Model(m) => Ok(shapley_from_weights(m)),
            Source::Game(g) => shapley_bruteforce(g),
        }
    }
}

impl CharacteristicFunction for Source {
    fn universe(&self) -> &PlayerUniverse {
        match self {
            Source::Model(m) => m.universe(),
            Source::Game(g) => g.universe(),
        }
    }

    fn value(&self, c: Coalition) -> f64 {
        match self {
            Source::Model(m) => m.value(c),
            Source::Game(g) => g.value(c),
        }
    }
}

fn parse_groups(u: &PlayerUniverse, spec: &str) -> Result<Vec<Coalition>> {
    spec.split('|').map(|g| u.parse(g)).collect()
}

fn ids(u: &PlayerUniverse, c: Coalition) -> Vec<&str> {
    c.members().map(|i| u.id(i)).collect()
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("reports always serialize")
}

/// Reorders an allocation file to `u` by player id.
fn load_allocation(path: &Path, u: &PlayerUniverse) -> Result<Allocation> {
    let text = std::fs::read_to_string(path)?;
    let file: Allocation = serde_json::from_str(&text).map_err(|e| Error::Format {
        line: Some(e.line() as u64),
        message: e.to_string(),
    })?;
    if file.universe().len() != u.len() {
        return Err(Error::Domain("allocation and game have different player counts".into()));
    }
    let payoffs = u
        .ids()
        .iter()
        .map(|id| {
            file.universe()
                .index_of(id)
                .map(|i| file[i])
                .ok_or_else(|| Error::Domain(format!("allocation has no payoff for {id:?}")))
        })
        .collect::<Result<_>>()?;
    Allocation::new(u.clone(), payoffs)
}

/// Runs one parsed command and returns its envelope.
pub fn run(command: &Command) -> Result<ReportEnvelope> {
    match command {
        Command::Fit(a) => fit(a),
        Command::FitMatchups(a) => fit_matchups(a),
        Command::Shapley(a) => shapley(a),
        Command::Identify(a) => {
            let report = check_identifiability(a.n, a.k, &a.sizes)?;
            ReportEnvelope::new("identify", &[], None, to_value(&report))
        }
        Command::Bounds(a) => bounds(a),
        Command::LeastCore(a) => least_core(a),
        Command::CompleteTeam(a) => complete_team(a),
        Command::Percentile(a) => percentile(a),
        Command::Simulate(a) => simulate(a),
        Command::Misspec(a) => {
            let model = random_cga(a.n, a.r, a.seed, a.weight_scale)?;
            let report = misspec_report(a.n, a.k, a.r, &model)?;
            ReportEnvelope::new("misspec", &[], Some(a.seed), to_value(&report))
        }
    }
}

fn fit(a: &FitArgs) -> Result<ReportEnvelope> {
    let csv = load_performance_csv(&a.data)?;
    let (model, meta) = match a.method {
        FitMethod::LeastSquares => {
            let fitted = fit_least_squares(&csv.dataset, a.order, a.train.l2)?;
            (fitted.model, fitted.meta)
        }
        FitMethod::Lowrank => {
            let fitted = fit_lowrank_pairwise(&csv.dataset, &a.train.config())?;
            (pairwise_to_cga(&fitted.model)?, fitted.meta)
        }
    };
    let meta = to_value(&meta);
    if let Some(p) = &a.model_out {
        save_model_json(p, &model, Some(&meta))?;
    }
    let mut warnings = Vec::new();
    if csv.nonzero_empty {
        warnings.push("the empty coalition has a nonzero value; models evaluate it to 0".to_owned());
    }
    let payload = json!({
        "rows": csv.dataset.len(),
        "model": model_to_json(&model, Some(&meta)),
        "warnings": warnings,
    });
    let seed = matches!(a.method, FitMethod::Lowrank).then_some(a.train.seed);
    ReportEnvelope::new("fit", std::slice::from_ref(&a.data), seed, payload)
}

fn fit_matchups(a: &FitMatchupsArgs) -> Result<ReportEnvelope> {
    let data = load_matchup_csv(&a.data)?;
    let fitted = fit_bradley_terry(&data, a.order, &a.train.config())?;
    let meta = to_value(&fitted.meta);
    if let Some(p) = &a.model_out {
        save_model_json(p, &fitted.model, Some(&meta))?;
    }
    let payload = json!({
        "rows": data.len(),
        "model": model_to_json(&fitted.model, Some(&meta)),
    });
    ReportEnvelope::new("fit-matchups", std::slice::from_ref(&a.data), Some(a.train.seed), payload)
}

fn shapley(a: &ShapleyArgs) -> Result<ReportEnvelope> {
    let (source, path) = Source::load(&a.source)?;
    let u = source.universe().clone();
    let (method, allocation) = if let Some(spec) = &a.groups {
        let groups = parse_groups(&u, spec)?;
        ("group", group_shapley(&source, &groups)?)
    } else {
        let method = a.method.unwrap_or(match source {
            Source::Model(_) => ShapleyMethod::ClosedForm,
            Source::Game(_) => ShapleyMethod::BruteForce,
        });
        match (method, &source) {
            (ShapleyMethod::ClosedForm, Source::Model(m)) => ("closed_form", shapley_from_weights(m)),
            (ShapleyMethod::ClosedForm, Source::Game(g)) => ("closed_form", shapley_from_weights(&cga_core::weights_from_game(g))),
            (ShapleyMethod::BruteForce, s) => ("brute_force", shapley_bruteforce(&s.dense()?)?),
        }
    };
    let grand = source.value(u.grand()) - source.value(Coalition::EMPTY);
    let payload = json!({
        "source": source.kind(),
        "method": method,
        "allocation": to_value(&allocation),
        "total": allocation.total(),
        "grand_value": grand,
    });
    ReportEnvelope::new("shapley", &[path], None, payload)
}

fn bounds(a: &BoundsArgs) -> Result<ReportEnvelope> {
    let mut inputs = Vec::new();
    let mut per_trial: Vec<(String, f64, f64, usize)> = Vec::new();
    let require_n = || a.n.ok_or_else(|| Error::Domain("--n is required for this mode".into()));
    let payload = match a.mode {
        BoundsMode::Spectrum => to_value(&spectrum(require_n()?)?),
        BoundsMode::WorstL2 | BoundsMode::L1 if a.game.is_some() => {
            let (gp, ep) = (a.game.clone().unwrap(), a.estimate.clone().unwrap());
            let v = load_game_csv(&gp)?;
            let vhat = load_game_csv(&ep)?;
            inputs = vec![gp, ep];
            if a.mode == BoundsMode::WorstL2 {
                to_value(&l2_worst_bound(&v, &vhat)?)
            } else {
                let groups = a.groups.as_deref().map(|s| parse_groups(v.universe(), s)).transpose()?;
                to_value(&l1_bounds(&v, &vhat, groups.as_deref())?)
            }
        }
        BoundsMode::WorstL2 | BoundsMode::L1 => {
            let sweep = bound_sweep(require_n()?, a.trials, a.seed, a.per_trial_csv.is_some())?;
            per_trial = sweep.per_trial.iter().map(|t| (t.bound.clone(), t.lhs, t.rhs, t.trial)).collect();
            let mut v = to_value(&sweep);
            let obj = v.as_object_mut().expect("sweep is an object");
            obj.remove("per_trial");
            if a.mode == BoundsMode::WorstL2 {
                for key in ["total", "interior", "grouped", "total_equality"] {
                    obj.remove(key);
                }
            } else {
                for key in ["worst_l2", "l2_tightness"] {
                    obj.remove(key);
                }
            }
            v
        }
        BoundsMode::McL2 | BoundsMode::McL1 => {
            let cfg = NoiseExperiment {
                n: require_n()?,
                norm_kind: if a.mode == BoundsMode::McL2 { NormKind::L2 } else { NormKind::L1 },
                radius: RadiusLaw::Fixed(a.radius),
                trials: a.trials,
                seed: a.seed,
                kappa_ratio: a.kappa,
            };
            let report = mc_average_case(&cfg, a.per_trial_csv.is_some())?;
            let label = if a.mode == BoundsMode::McL2 { "mc_l2" } else { "mc_l1" };
            per_trial = report.per_trial.iter().enumerate().map(|(t, &x)| (label.to_owned(), x, report.bound, t)).collect();
            let mut v = to_value(&report);
            v.as_object_mut().expect("report is an object").remove("per_trial");
            v
        }
    };
    if let Some(path) = &a.per_trial_csv {
        let mut text = String::from("trial,bound,lhs,rhs\n");
        for (bound, lhs, rhs, t) in &per_trial {
            text.push_str(&format!("{t},{bound},{lhs:?},{rhs:?}\n"));
        }
        std::fs::write(path, text)?;
    }
    let seed = match a.mode {
        BoundsMode::Spectrum => None,
        _ if a.game.is_some() => None,
        _ => Some(a.seed),
    };
    let payload = json!({ "mode": format!("{:?}", a.mode), "report": payload });
    ReportEnvelope::new("bounds", &inputs, seed, payload)
}

fn least_core(a: &LeastCoreArgs) -> Result<ReportEnvelope> {
    let (source, path) = Source::load(&a.source)?;
    let mut inputs = vec![path];
    let u = source.universe().clone();
    let allocation = if a.allocation == "shapley" {
        source.shapley()?
    } else {
        let p = PathBuf::from(&a.allocation);
        let x = load_allocation(&p, &u)?;
        inputs.push(p);
        x
    };
    let budget = match a.samples {
        Some(m) => SampleBudget::new(a.delta, a.confidence_failure, m)?,
        None => SampleBudget::from_targets(a.delta, a.confidence_failure)?,
    };
    let estimate = sampled_least_core_value(&source, &allocation, &budget, a.seed)?;
    let (exact, exceedance) = if u.len() <= BRUTE_FORCE_LIMIT && u.len() >= 2 {
        let g = source.dense()?;
        let exact = exact_max_deficit(&g, &allocation)?;
        (Some(exact), Some(exceedance_fraction(&g, &allocation, estimate.e_hat)?))
    } else {
        (None, None)
    };
    let payload = json!({
        "evaluated_on": source.kind(),
        "budget": to_value(&budget),
        "estimate": to_value(&estimate),
        "argmax_players": ids(&u, estimate.argmax),
        "exact": exact.map(|e| to_value(&e)),
        "exceedance_fraction": exceedance,
    });
    ReportEnvelope::new("least-core", &inputs, Some(a.seed), payload)
}

fn complete_team(a: &CompleteTeamArgs) -> Result<ReportEnvelope> {
    let (source, path) = Source::load(&a.source)?;
    let u = source.universe();
    let base = u.parse(&a.base)?;
    let pool = match &a.pool {
        Some(p) => u.parse(p)?,
        None => u.grand().difference(base),
    };
    let c = best_completion(&source, &CompletionQuery { base, slots: a.slots, pool })?;
    let payload = json!({
        "team": ids(u, c.team),
        "added": ids(u, c.team.difference(base)),
        "score": c.score,
        "candidates": c.candidates,
    });
    ReportEnvelope::new("complete-team", &[path], None, payload)
}

fn percentile(a: &PercentileArgs) -> Result<ReportEnvelope> {
    let (source, path) = Source::load(&a.source)?;
    let team = source.universe().parse(&a.team)?;
    let size = a.team_size.unwrap_or(team.size());
    let report = score_team_percentile(&source, team, a.random_teams, size, a.seed)?;
    ReportEnvelope::new("percentile", &[path], Some(a.seed), to_value(&report))
}

fn simulate(a: &SimulateArgs) -> Result<ReportEnvelope> {
    let cfg = SimulateConfig {
        n: a.n,
        k: a.k,
        seed: a.seed,
        noise_sd: a.noise_sd,
        weight_scale: a.weight_scale,
        sizes: a.sizes.clone(),
        samples: a.samples,
    };
    let report = simulate_game(&cfg, &a.out)?;
    ReportEnvelope::new("simulate", &[], Some(a.seed), to_value(&report))
}
