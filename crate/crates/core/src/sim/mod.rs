//! Seeded Monte-Carlo experiments over (τ, α₁, n) grids.
//!
//! Every replicate draws its data from a generator seeded by the cell key and
//! the replicate number, so results do not depend on the worker count.

mod config;
mod table;

pub use config::{
    EstimatorConfig, ExperimentConfig, IndexName, Layout, MeanSpec, OptimalToken, OutputSpec, SigmaSpec,
    TauMean, WeightChoice, SCHEMA_VERSION,
};
pub use table::{aggregate_to_table, format_float, parse_float, write_outputs, Table};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotics::{optimal_weight, psi_lda, psi_matrix, psi_pca, AsymptoticMethod};
use crate::error::{Error, Result};
use crate::estimators::{fobi_direction, lda_direction, msi_against, pca_direction, pp_direction, OptimizerOptions};
use crate::indices::{IndexKind, IndexSpec};
use crate::mixture::{derive, random_mean_at_distance_with, sample_with, MixtureModel};

pub const WORKERS_ENV: &str = "PPDA_WORKERS";

/// An estimator with every per-cell choice made.
#[derive(Debug, Clone)]
pub enum Estimator {
    Lda,
    Pca,
    Fobi(IndexSpec),
    Pursuit(IndexSpec, OptimizerOptions),
}

impl Estimator {
    pub fn resolve(config: &EstimatorConfig, alpha1: f64, tau: f64) -> Result<Self> {
        let weight = |w1: &WeightChoice| -> Result<f64> {
            match w1 {
                WeightChoice::Fixed(w) => Ok(*w),
                WeightChoice::Optimal(_) => Ok(optimal_weight(alpha1, tau)?.w1),
            }
        };
        Ok(match config {
            EstimatorConfig::Lda => Estimator::Lda,
            EstimatorConfig::Pca => Estimator::Pca,
            EstimatorConfig::Fobi { index, w1 } => Estimator::Fobi(config::index_spec(*index, weight(w1)?)?),
            EstimatorConfig::Pp { index, w1, optimizer } => {
                Estimator::Pursuit(config::index_spec(*index, weight(w1)?)?, *optimizer)
            }
        })
    }

    /// tr(Ψ) for the estimator at this model; NaN where no closed form exists.
    pub fn theory_trace(&self, model: &MixtureModel) -> Result<f64> {
        match self {
            Estimator::Lda => Ok(psi_lda(model)?.0.trace()),
            Estimator::Pca => match psi_pca(model) {
                Ok(s) => Ok(s.trace),
                Err(Error::Inapplicable(_)) => Ok(f64::NAN),
                Err(e) => Err(e),
            },
            Estimator::Fobi(_) => Ok(f64::NAN),
            Estimator::Pursuit(spec, _) => {
                let method = match spec.kind {
                    IndexKind::SquaredSkewness => AsymptoticMethod::Skewness,
                    IndexKind::SquaredExcessKurtosis => AsymptoticMethod::Kurtosis,
                    IndexKind::Hybrid => AsymptoticMethod::Hybrid(spec.w1),
                };
                Ok(psi_matrix(method, model)?.trace)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicateOutcome {
    pub msi: f64,
    /// n · 2(1 − msi).
    pub scaled_loss: f64,
    pub converged: bool,
}

/// Samples one dataset of size n and applies every estimator to it. Estimator
/// failures are returned per estimator.
pub fn run_replicate(
    model: &MixtureModel,
    n: usize,
    estimators: &[Estimator],
    seed: u64,
) -> Result<Vec<std::result::Result<ReplicateOutcome, String>>> {
    if n < model.dim() {
        return Err(Error::Validation(format!("n = {n} is below p = {}", model.dim())));
    }
    let theta = derive(model)?.theta_unit;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ld = sample_with(model, n, &mut rng)?;
    let pp_seed: u64 = rng.random();
    Ok(estimators
        .iter()
        .map(|e| {
            let est = match e {
                Estimator::Lda => lda_direction(&ld).map(|r| (r.direction, r.converged)),
                Estimator::Pca => pca_direction(&ld.data).map(|r| (r.direction, r.converged)),
                Estimator::Fobi(spec) => fobi_direction(&ld.data, spec).map(|u| (u, true)),
                Estimator::Pursuit(spec, opts) => {
                    pp_direction(&ld.data, spec, opts, pp_seed).map(|r| (r.direction, r.converged))
                }
            };
            est.map(|(u, converged)| {
                let (msi, loss) = msi_against(&u, &theta);
                ReplicateOutcome { msi, scaled_loss: n as f64 * loss, converged }
            })
            .map_err(|err| err.to_string())
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub tau: f64,
    pub alpha1: f64,
    pub n: usize,
    pub method: String,
    pub msi_mean: f64,
    pub msi_sd: f64,
    pub scaled_loss_mean: f64,
    pub scaled_loss_sd: f64,
    /// NaN when undefined, infinite when the estimator has no information.
    pub theory_trace: f64,
    /// Replicates that produced a direction.
    pub replicate_count: usize,
    pub nonconverged: usize,
    pub failures: usize,
    /// First failure message, if any.
    pub failure_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedCell {
    pub tau: f64,
    pub alpha1: f64,
    pub n: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub cells: Vec<CellResult>,
    pub skipped: Vec<SkippedCell>,
}

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(SPLITMIX_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a substream seed from a master seed and a key.
pub fn mix(seed: u64, key: &[u64]) -> u64 {
    key.iter().fold(splitmix(seed), |h, k| splitmix(h ^ splitmix(*k)))
}

const MEAN_STREAM: u64 = 1;
const REPLICATE_STREAM: u64 = 2;

pub fn mean_seed(seed: u64, tau: f64, alpha1: f64) -> u64 {
    mix(seed, &[MEAN_STREAM, tau.to_bits(), alpha1.to_bits()])
}

pub fn replicate_seed(seed: u64, tau: f64, alpha1: f64, n: usize, replicate: usize) -> u64 {
    mix(seed, &[REPLICATE_STREAM, tau.to_bits(), alpha1.to_bits(), n as u64, replicate as u64])
}

/// Worker count: explicit value, then `PPDA_WORKERS`, then all cores.
pub fn resolve_workers(explicit: Option<usize>) -> Result<usize> {
    if let Some(w) = explicit {
        return if w == 0 { Err(Error::Config("workers must be at least 1".into())) } else { Ok(w) };
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(w) if w > 0 => Ok(w),
            _ => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

/// Builds the model for one (τ, α₁) pair.
pub fn cell_model(config: &ExperimentConfig, tau: f64, alpha1: f64) -> Result<MixtureModel> {
    let sigma = config.sigma.build(config.p)?;
    let mu2 = match config.mean.explicit_for(tau) {
        Some(mu2) => mu2,
        None if config.mean == MeanSpec::RandomAtDistance => {
            let mut rng = ChaCha8Rng::seed_from_u64(mean_seed(config.seed, tau, alpha1));
            random_mean_at_distance_with(&sigma, tau, &mut rng)?
        }
        None => return Err(Error::Config(format!("mean.by_tau has no entry for tau = {tau}"))),
    };
    MixtureModel::centered(alpha1, mu2, sigma)
}

struct Pair {
    tau: f64,
    alpha1: f64,
    model: MixtureModel,
    estimators: Vec<Estimator>,
    traces: Vec<f64>,
}

fn summarize(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn run_grid(config: &ExperimentConfig) -> Result<GridResult> {
    run_grid_with_workers(config, resolve_workers(config.workers)?)
}

pub fn run_grid_with_workers(config: &ExperimentConfig, workers: usize) -> Result<GridResult> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let labels: Vec<String> = config.estimators.iter().map(|e| e.label()).collect();

    let mut pairs = Vec::new();
    for &tau in &config.tau_grid {
        for &alpha1 in &config.alpha1_grid {
            let model = cell_model(config, tau, alpha1)?;
            let estimators = config
                .estimators
                .iter()
                .map(|e| Estimator::resolve(e, alpha1, tau))
                .collect::<Result<Vec<_>>>()?;
            let traces = estimators.iter().map(|e| e.theory_trace(&model)).collect::<Result<Vec<_>>>()?;
            pairs.push(Pair { tau, alpha1, model, estimators, traces });
        }
    }

    let mut skipped = Vec::new();
    let mut tasks = Vec::new();
    for (k, pair) in pairs.iter().enumerate() {
        for &n in &config.n_grid {
            if n < config.p {
                skipped.push(SkippedCell {
                    tau: pair.tau,
                    alpha1: pair.alpha1,
                    n,
                    reason: format!("n = {n} is below p = {}", config.p),
                });
                continue;
            }
            for r in 0..config.replicates {
                tasks.push((k, n, r));
            }
        }
    }

    let outcomes: Vec<_> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(k, n, r)| {
                let pair = &pairs[k];
                let seed = replicate_seed(config.seed, pair.tau, pair.alpha1, n, r);
                run_replicate(&pair.model, n, &pair.estimators, seed)
            })
            .collect()
    });

    let mut cells = Vec::new();
    let mut i = 0;
    while i < tasks.len() {
        let (k, n, _) = tasks[i];
        let block = &outcomes[i..i + config.replicates];
        i += config.replicates;
        let pair = &pairs[k];
        for (j, label) in labels.iter().enumerate() {
            let mut msi = Vec::new();
            let mut loss = Vec::new();
            let mut nonconverged = 0;
            let mut failures = 0;
            let mut failure_reason = None;
            for outcome in block {
                let result = match outcome {
                    Ok(per_estimator) => per_estimator[j].clone(),
                    Err(e) => Err(e.to_string()),
                };
                match result {
                    Ok(o) => {
                        msi.push(o.msi);
                        loss.push(o.scaled_loss);
                        if !o.converged {
                            nonconverged += 1;
                        }
                    }
                    Err(reason) => {
                        failures += 1;
                        failure_reason.get_or_insert(reason);
                    }
                }
            }
            let (msi_mean, msi_sd) = summarize(&msi);
            let (scaled_loss_mean, scaled_loss_sd) = summarize(&loss);
            cells.push(CellResult {
                tau: pair.tau,
                alpha1: pair.alpha1,
                n,
                method: label.clone(),
                msi_mean,
                msi_sd,
                scaled_loss_mean,
                scaled_loss_sd,
                theory_trace: pair.traces[j],
                replicate_count: msi.len(),
                nonconverged,
                failures,
                failure_reason,
            });
        }
    }
    Ok(GridResult { cells, skipped })
}
