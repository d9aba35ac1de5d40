//! Experiment configuration files.
//!
//! A config is a JSON object with a `kind` discriminator and a mandatory
//! `seed`. Unknown keys are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iddim::DimMethod;
use crate::nn::{BiasPlacement, OptimizerKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentConfig {
    Generate(GenerateConfig),
    Learnable(LearnableConfig),
    Hard(HardConfig),
    Sq(SqConfig),
    Iddim(IddimConfig),
    Geometry(GeometryConfig),
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentConfig::Generate(_) => "generate",
            ExperimentConfig::Learnable(_) => "learnable",
            ExperimentConfig::Hard(_) => "hard",
            ExperimentConfig::Sq(_) => "sq",
            ExperimentConfig::Iddim(_) => "iddim",
            ExperimentConfig::Geometry(_) => "geometry",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ExperimentConfig::Generate(c) => c.seed,
            ExperimentConfig::Learnable(c) => c.seed,
            ExperimentConfig::Hard(c) => c.seed,
            ExperimentConfig::Sq(c) => c.seed,
            ExperimentConfig::Iddim(c) => c.seed,
            ExperimentConfig::Geometry(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ExperimentConfig::Generate(c) => c.seed = seed,
            ExperimentConfig::Learnable(c) => c.seed = seed,
            ExperimentConfig::Hard(c) => c.seed = seed,
            ExperimentConfig::Sq(c) => c.seed = seed,
            ExperimentConfig::Iddim(c) => c.seed = seed,
            ExperimentConfig::Geometry(c) => c.seed = seed,
        }
    }

    pub fn output_dir(&self) -> Option<&PathBuf> {
        match self {
            ExperimentConfig::Generate(c) => c.out.as_ref(),
            ExperimentConfig::Learnable(c) => c.out.as_ref(),
            ExperimentConfig::Hard(c) => c.out.as_ref(),
            ExperimentConfig::Sq(c) => c.out.as_ref(),
            ExperimentConfig::Iddim(c) => c.out.as_ref(),
            ExperimentConfig::Geometry(c) => c.out.as_ref(),
        }
    }

    /// Check every parameter before any work starts.
    pub fn validate(&self) -> Result<()> {
        match self {
            ExperimentConfig::Generate(c) => c.validate(),
            ExperimentConfig::Learnable(c) => c.validate(),
            ExperimentConfig::Hard(c) => c.validate(),
            ExperimentConfig::Sq(c) => c.validate(),
            ExperimentConfig::Iddim(c) => c.validate(),
            ExperimentConfig::Geometry(c) => c.validate(),
        }
    }
}

fn fail(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(fail(msg))
    }
}

/// Optimiser settings shared by the training experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainBlock {
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_base_lr")]
    pub base_lr: f64,
    /// Fixed exponent `c` of the learning-rate factor `exp(c)`. When absent,
    /// `c` is drawn once per run from `Unif([-2, 1])` using the run seed.
    #[serde(default)]
    pub lr_log_multiplier: Option<f64>,
    pub batch_size: usize,
    pub steps: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
}

fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam
}

fn default_base_lr() -> f64 {
    1e-3
}

fn default_eval_every() -> usize {
    100
}

impl TrainBlock {
    fn validate(&self) -> Result<()> {
        require(self.base_lr.is_finite() && self.base_lr >= 0.0, "base_lr must be finite and non-negative")?;
        if let Some(c) = self.lr_log_multiplier {
            require((-2.0..=1.0).contains(&c), "lr_log_multiplier must lie in [-2, 1]")?;
        }
        require(self.batch_size > 0, "batch_size must be positive")?;
        require(self.eval_every > 0, "eval_every must be positive")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnableConfig {
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Dimension of the subspace whose unit sphere carries the data.
    #[serde(default = "default_sphere_dim")]
    pub sphere_dim: usize,
    /// Ambient dimensions to run.
    pub grid: Vec<usize>,
    #[serde(default = "default_train_size")]
    pub train_size: usize,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default = "default_student_width")]
    pub student_width: usize,
    /// Teacher width; `ceil(n / 4)` when absent.
    #[serde(default)]
    pub target_width: Option<usize>,
    #[serde(default = "default_weight_bound")]
    pub weight_bound: f64,
    /// A run converges when its final relative test MSE is at most this.
    #[serde(default = "default_success_mse")]
    pub success_mse: f64,
    pub train: TrainBlock,
}

fn default_sphere_dim() -> usize {
    10
}

fn default_train_size() -> usize {
    1000
}

fn default_test_size() -> usize {
    2000
}

fn default_student_width() -> usize {
    100
}

fn default_weight_bound() -> f64 {
    10.0
}

fn default_success_mse() -> f64 {
    0.1
}

impl LearnableConfig {
    fn validate(&self) -> Result<()> {
        require(!self.grid.is_empty(), "grid must be non-empty")?;
        require(self.sphere_dim >= 2, "sphere_dim must be at least 2")?;
        require(self.grid.iter().all(|&n| n >= self.sphere_dim), "every ambient dimension must be >= sphere_dim")?;
        require(self.train_size > 0 && self.test_size > 0, "train_size and test_size must be positive")?;
        require(self.student_width > 0, "student_width must be positive")?;
        require(self.target_width != Some(0), "target_width must be positive")?;
        require(self.weight_bound > 0.0, "weight_bound must be positive")?;
        self.train.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardConfig {
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_reach")]
    pub reach: f64,
    /// Code widths `n_b` to run.
    pub grid: Vec<u32>,
    #[serde(default = "default_hard_test_size")]
    pub test_size: usize,
    /// Student width as a multiple of the ambient dimension.
    #[serde(default = "default_width_factor")]
    pub width_factor: usize,
    #[serde(default = "default_hidden_layers")]
    pub hidden_layers: usize,
    #[serde(default = "default_student_bias")]
    pub bias_placement: BiasPlacement,
    /// Fixed parity subset (0-based, inside the prefix). Random when absent.
    #[serde(default)]
    pub subset: Option<Vec<usize>>,
    pub train: TrainBlock,
}

fn default_reach() -> f64 {
    0.5
}

fn default_hard_test_size() -> usize {
    10_000
}

fn default_width_factor() -> usize {
    2
}

fn default_hidden_layers() -> usize {
    1
}

fn default_student_bias() -> BiasPlacement {
    BiasPlacement::BeforeActivation
}

impl HardConfig {
    fn validate(&self) -> Result<()> {
        require(!self.grid.is_empty(), "grid must be non-empty")?;
        require(self.grid.iter().all(|&b| (2..=30).contains(&b)), "code widths must lie in [2, 30]")?;
        require(self.reach > 0.0 && self.reach.is_finite(), "reach must be positive")?;
        require(self.test_size > 0, "test_size must be positive")?;
        require(self.width_factor > 0 && self.hidden_layers > 0, "student shape must be positive")?;
        if let Some(s) = &self.subset {
            require(!s.is_empty(), "subset must be non-empty")?;
            let min_prefix = self.grid.iter().map(|b| b - b / 2).min().unwrap_or(0) as usize;
            require(s.iter().all(|&i| i < min_prefix), "subset must fit in the shortest prefix")?;
        }
        self.train.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqConfig {
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_reach")]
    pub reach: f64,
    /// Code widths for the correlation-scan scaling run.
    #[serde(default = "default_sq_grid")]
    pub grid: Vec<u32>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Midpoint nodes per non-constant segment.
    #[serde(default = "default_quadrature")]
    pub quadrature: usize,
    /// Dimension of the Boolean parity class for the variance check.
    #[serde(default = "default_parity_dim")]
    pub parity_dim: usize,
    #[serde(default = "default_query_count")]
    pub queries: usize,
}

fn default_sq_grid() -> Vec<u32> {
    vec![4, 6, 8, 10]
}

fn default_tau() -> f64 {
    0.1
}

fn default_quadrature() -> usize {
    8
}

fn default_parity_dim() -> usize {
    8
}

fn default_query_count() -> usize {
    100
}

impl SqConfig {
    fn validate(&self) -> Result<()> {
        require(self.grid.len() >= 2, "grid needs at least two code widths")?;
        require(self.grid.iter().all(|&b| (2..=12).contains(&b)), "code widths must lie in [2, 12]")?;
        require(self.tau > 0.0 && self.tau < 1.0, "tau must lie in (0, 1)")?;
        require(self.quadrature > 0, "quadrature must be positive")?;
        require((1..=12).contains(&self.parity_dim), "parity_dim must lie in [1, 12]")?;
        require(self.reach > 0.0, "reach must be positive")
    }
}

/// One sphere of the dimension suite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereCase {
    pub ambient: usize,
    pub intrinsic: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IddimConfig {
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_sphere_suite")]
    pub suite: Vec<SphereCase>,
    #[serde(default = "default_centers")]
    pub centers: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Difference vectors per centre as a multiple of the ambient dimension.
    #[serde(default = "default_oversampling")]
    pub oversampling: usize,
    #[serde(default = "default_method")]
    pub method: DimMethod,
    #[serde(default = "default_truncation")]
    pub truncation: f64,
    /// Optional headerless CSV of points to analyse by nearest neighbours.
    #[serde(default)]
    pub point_cloud: Option<PathBuf>,
    #[serde(default = "default_neighbors")]
    pub neighbors: usize,
}

fn default_sphere_suite() -> Vec<SphereCase> {
    [(20, 2), (20, 10), (20, 18), (100, 10), (100, 50), (100, 90)]
        .iter()
        .map(|&(ambient, intrinsic)| SphereCase { ambient, intrinsic })
        .collect()
}

fn default_centers() -> usize {
    5
}

fn default_sigma() -> f64 {
    crate::iddim::DEFAULT_SIGMA
}

fn default_oversampling() -> usize {
    crate::iddim::DEFAULT_OVERSAMPLING
}

fn default_method() -> DimMethod {
    DimMethod::ShiftedSpectrum
}

fn default_truncation() -> f64 {
    crate::iddim::DEFAULT_TRUNCATION
}

fn default_neighbors() -> usize {
    64
}

impl IddimConfig {
    fn validate(&self) -> Result<()> {
        require(
            self.suite.iter().all(|c| c.intrinsic >= 1 && c.intrinsic < c.ambient),
            "each case needs 1 <= intrinsic < ambient",
        )?;
        require(self.centers > 0, "centers must be positive")?;
        require(self.sigma > 0.0, "sigma must be positive")?;
        require(self.oversampling >= 1, "oversampling must be at least 1")?;
        require(self.truncation > 0.0 && self.truncation < 1.0, "truncation must lie in (0, 1)")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_coupon_bins")]
    pub coupon_bins: Vec<usize>,
    #[serde(default = "default_coupon_trials")]
    pub coupon_trials: usize,
    #[serde(default = "default_clouds")]
    pub clouds: usize,
    #[serde(default = "default_cloud_points")]
    pub cloud_points: usize,
    #[serde(default = "default_cloud_eps")]
    pub cloud_epsilon: f64,
}

fn default_coupon_bins() -> Vec<usize> {
    vec![2, 10, 100]
}

fn default_coupon_trials() -> usize {
    1000
}

fn default_clouds() -> usize {
    20
}

fn default_cloud_points() -> usize {
    1000
}

fn default_cloud_eps() -> f64 {
    0.1
}

impl GeometryConfig {
    fn validate(&self) -> Result<()> {
        require(self.coupon_bins.iter().all(|&b| b >= 1), "coupon bins must be positive")?;
        require(self.coupon_trials >= 100, "coupon_trials must be at least 100")?;
        require(self.cloud_epsilon > 0.0, "cloud_epsilon must be positive")
    }
}

/// Which manifold a generated dataset is drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifoldChoice {
    Curve { reach: f64, intrinsic_dim: usize, code_bits: u32 },
    Sphere { sphere_dim: usize, ambient_dim: usize },
}

/// Labels attached to generated points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LabelChoice {
    None,
    /// Lifted parity; random subset when absent. Curve only.
    Parity { subset: Option<Vec<usize>> },
    /// Random normalised teacher of the given width.
    Random { width: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub manifold: ManifoldChoice,
    pub count: usize,
    #[serde(default = "default_label")]
    pub label: LabelChoice,
}

fn default_label() -> LabelChoice {
    LabelChoice::None
}

impl GenerateConfig {
    fn validate(&self) -> Result<()> {
        require(self.count > 0, "count must be positive")?;
        match (&self.manifold, &self.label) {
            (ManifoldChoice::Curve { reach, intrinsic_dim, code_bits }, _) => {
                require(*reach > 0.0 && *intrinsic_dim >= 1, "invalid curve parameters")?;
                require((2..=30).contains(code_bits), "code_bits must lie in [2, 30]")?;
            }
            (ManifoldChoice::Sphere { sphere_dim, ambient_dim }, label) => {
                require(*sphere_dim >= 1 && sphere_dim <= ambient_dim, "invalid sphere dimensions")?;
                require(!matches!(label, LabelChoice::Parity { .. }), "parity labels need the curve")?;
            }
        }
        if let LabelChoice::Random { width } = self.label {
            require(width > 0, "teacher width must be positive")?;
        }
        Ok(())
    }
}
