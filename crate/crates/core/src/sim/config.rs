use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::OptimizerOptions;
use crate::indices::IndexSpec;
use crate::linalg::SymmetricMatrix;
use crate::mixture::{ar1_covariance, ones_plus_identity};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaSpec {
    Ar1 { rho: f64 },
    Spherical { variance: f64 },
    OnesPlusIdentity,
    Explicit { matrix: Vec<Vec<f64>> },
}

impl SigmaSpec {
    pub fn build(&self, p: usize) -> Result<SymmetricMatrix> {
        let s = match self {
            SigmaSpec::Ar1 { rho } => ar1_covariance(p, *rho)?,
            SigmaSpec::Spherical { variance } => {
                if !(*variance > 0.0 && variance.is_finite()) {
                    return Err(config(format!("sigma.variance must be positive, got {variance}")));
                }
                SymmetricMatrix::symmetrized(SymmetricMatrix::identity(p).into_inner() * *variance)
            }
            SigmaSpec::OnesPlusIdentity => ones_plus_identity(p),
            SigmaSpec::Explicit { matrix } => {
                if matrix.len() != p {
                    return Err(config(format!("sigma.matrix has {} rows, expected p = {p}", matrix.len())));
                }
                SymmetricMatrix::from_rows(matrix).map_err(|e| config(format!("sigma.matrix: {e}")))?
            }
        };
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauMean {
    pub tau: f64,
    pub mu2: Vec<f64>,
}

/// μ₁ is always the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeanSpec {
    /// μ₂ drawn uniformly on the ellipsoid μᵀΣ⁻¹μ = τ, once per (τ, α₁).
    RandomAtDistance,
    /// One fixed μ₂ per grid value of τ; the grid τ is then only a label.
    Explicit { by_tau: Vec<TauMean> },
}

impl MeanSpec {
    pub(crate) fn explicit_for(&self, tau: f64) -> Option<DVector<f64>> {
        match self {
            MeanSpec::RandomAtDistance => None,
            MeanSpec::Explicit { by_tau } => by_tau
                .iter()
                .find(|m| (m.tau - tau).abs() <= 1e-12 * tau.abs().max(1.0))
                .map(|m| DVector::from_vec(m.mu2.clone())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexName {
    Skewness,
    Kurtosis,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimalToken {
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightChoice {
    Fixed(f64),
    /// Minimizer of C_η at the cell's (α₁, τ).
    Optimal(OptimalToken),
}

impl Default for WeightChoice {
    fn default() -> Self {
        WeightChoice::Fixed(0.8)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorConfig {
    Lda,
    Pca,
    Fobi {
        index: IndexName,
        #[serde(default)]
        w1: WeightChoice,
    },
    Pp {
        index: IndexName,
        #[serde(default)]
        w1: WeightChoice,
        #[serde(default)]
        optimizer: OptimizerOptions,
    },
}

impl EstimatorConfig {
    /// Stable name used in output tables.
    pub fn label(&self) -> String {
        let index = |index: &IndexName, w1: &WeightChoice| match (index, w1) {
            (IndexName::Skewness, _) => "skewness".to_string(),
            (IndexName::Kurtosis, _) => "kurtosis".to_string(),
            (IndexName::Hybrid, WeightChoice::Fixed(w)) => format!("hybrid({w})"),
            (IndexName::Hybrid, WeightChoice::Optimal(_)) => "hybrid(optimal)".to_string(),
        };
        match self {
            EstimatorConfig::Lda => "lda".into(),
            EstimatorConfig::Pca => "pca".into(),
            EstimatorConfig::Fobi { index: i, w1 } => format!("fobi-{}", index(i, w1)),
            EstimatorConfig::Pp { index: i, w1, .. } => format!("pp-{}", index(i, w1)),
        }
    }

    fn validate(&self, at: &str) -> Result<()> {
        match self {
            EstimatorConfig::Lda | EstimatorConfig::Pca => Ok(()),
            EstimatorConfig::Fobi { index, w1 } => check_weight(*index, w1, at),
            EstimatorConfig::Pp { index, w1, optimizer } => {
                check_weight(*index, w1, at)?;
                optimizer.validate().map_err(|e| config(format!("{at}.optimizer: {e}")))
            }
        }
    }
}

fn check_weight(index: IndexName, w1: &WeightChoice, at: &str) -> Result<()> {
    if let (IndexName::Hybrid, WeightChoice::Fixed(w)) = (index, w1) {
        IndexSpec::hybrid(*w).map_err(|e| config(format!("{at}.w1: {e}")))?;
    }
    Ok(())
}

pub(crate) fn index_spec(index: IndexName, w1: f64) -> Result<IndexSpec> {
    Ok(match index {
        IndexName::Skewness => IndexSpec::skewness(),
        IndexName::Kurtosis => IndexSpec::kurtosis(),
        IndexName::Hybrid => IndexSpec::hybrid(w1)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Heatmap,
    #[default]
    Curve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    #[serde(default = "default_stem")]
    pub stem: String,
    #[serde(default)]
    pub json: bool,
}

fn default_stem() -> String {
    "results".into()
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: PathBuf::from("results"), stem: default_stem(), json: false }
    }
}

impl OutputSpec {
    pub fn csv_path(&self) -> PathBuf {
        self.dir.join(format!("{}.csv", self.stem))
    }

    pub fn json_path(&self) -> PathBuf {
        self.dir.join(format!("{}.json", self.stem))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub p: usize,
    pub tau_grid: Vec<f64>,
    pub alpha1_grid: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub sigma: SigmaSpec,
    pub mean: MeanSpec,
    pub estimators: Vec<EstimatorConfig>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub layout: Layout,
    #[serde(default)]
    pub outputs: OutputSpec,
    /// Worker threads; falls back to `PPDA_WORKERS`, then to all cores.
    #[serde(default)]
    pub workers: Option<usize>,
}

fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(text).map_err(|e| config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(config(format!("schema: expected {SCHEMA_VERSION}, got {}", self.schema)));
        }
        if self.p == 0 {
            return Err(config("p must be at least 1"));
        }
        if self.replicates == 0 {
            return Err(config("replicates must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(config("workers must be at least 1"));
        }
        if self.estimators.is_empty() {
            return Err(config("estimators must not be empty"));
        }
        for (i, t) in self.tau_grid.iter().enumerate() {
            if !(*t > 0.0 && t.is_finite()) {
                return Err(config(format!("tau_grid[{i}] must be positive and finite, got {t}")));
            }
        }
        for (i, a) in self.alpha1_grid.iter().enumerate() {
            if !(*a > 0.0 && *a < 1.0) {
                return Err(config(format!("alpha1_grid[{i}] must lie in (0, 1), got {a}")));
            }
        }
        self.sigma.build(self.p)?;
        if let MeanSpec::Explicit { by_tau } = &self.mean {
            for (i, m) in by_tau.iter().enumerate() {
                if m.mu2.len() != self.p {
                    return Err(config(format!("mean.by_tau[{i}].mu2 has length {}, expected p = {}", m.mu2.len(), self.p)));
                }
            }
            for t in &self.tau_grid {
                if self.mean.explicit_for(*t).is_none() {
                    return Err(config(format!("mean.by_tau has no entry for tau = {t}")));
                }
            }
        }
        let mut labels = Vec::new();
        for (i, e) in self.estimators.iter().enumerate() {
            e.validate(&format!("estimators[{i}]"))?;
            let l = e.label();
            if labels.contains(&l) {
                return Err(config(format!("estimators[{i}] duplicates {l}")));
            }
            labels.push(l);
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
