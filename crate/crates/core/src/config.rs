//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::instance::{make_smooth_instance, GridDensityPair, SmoothKind};
use crate::kernel::{build_kernel, KernelSpec};
use crate::lower_bound::{make_lower_bound_instance, LowerBoundInstance, LowerBoundParams};
use crate::net::{NetFamily, DEFAULT_CAP};
use crate::noise::{NoiseFamily, NoiseModel};

pub const DEFAULT_SIZES: [usize; 7] = [256, 512, 1024, 2048, 4096, 8192, 16384];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorMode {
    /// Indicator empirical risk on noiseless data.
    Indicator,
    /// Plain-kernel smoothed risk on noiseless data.
    Direct,
    /// Deconvolution-kernel risk on noisy data.
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub mode: EstimatorMode,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub replicates: Option<usize>,
    #[serde(default)]
    pub sizes: Option<Vec<usize>>,
    pub instance: InstanceConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub net: NetConfig,
    #[serde(default)]
    pub tuning: TuningConfig,
    #[serde(default)]
    pub rates: RatesConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    20_240_917
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    #[serde(default = "one")]
    pub d: usize,
    #[serde(default)]
    pub nodes: Option<usize>,
    #[serde(flatten)]
    pub kind: InstanceKind,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InstanceKind {
    LinearRamp {
        #[serde(default = "unit")]
        slope: f64,
    },
    QuadraticBowl {
        curvature: f64,
    },
    ShiftedCosine {
        amplitude: f64,
        frequency: u32,
        #[serde(default)]
        phase: f64,
    },
    LowerBound {
        q: usize,
        alpha: f64,
        gamma: f64,
        #[serde(default = "half")]
        c_star: f64,
        #[serde(default)]
        c_psi: Option<f64>,
        #[serde(default = "far_offsets")]
        offsets: (f64, f64),
        /// `"ones"`, `"zeros"` or one 0/1 flag per cell; all ones when absent.
        #[serde(default)]
        signs: Option<Signs>,
    },
}

fn unit() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn far_offsets() -> (f64, f64) {
    (6.0, 6.0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Signs {
    Keyword(String),
    Explicit(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseConfig {
    #[serde(default)]
    pub dims: Vec<NoiseDimConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDimConfig {
    pub family: String,
    #[serde(default = "unit")]
    pub scale: f64,
    #[serde(default)]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_support")]
    pub support: f64,
    #[serde(default = "default_degree")]
    pub degree: u32,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
}

fn default_radius() -> f64 {
    0.5
}
fn default_support() -> f64 {
    4.0
}
fn default_degree() -> u32 {
    15
}
fn default_half_width() -> f64 {
    crate::deconv::DEFAULT_HALF_WIDTH
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            radius: default_radius(),
            support: default_support(),
            degree: default_degree(),
            half_width: default_half_width(),
        }
    }
}

/// A number, or the keyword given by the field's documentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumberOr {
    Value(f64),
    Keyword(String),
}

impl NumberOr {
    fn keyword(word: &str) -> Self {
        NumberOr::Keyword(word.to_string())
    }

    fn resolve(&self, keyword: &str, field: &str) -> Result<Option<f64>> {
        match self {
            NumberOr::Value(v) => Ok(Some(*v)),
            NumberOr::Keyword(k) if k == keyword => Ok(None),
            NumberOr::Keyword(k) => Err(Error::config(format!(
                "{field} must be a number or \"{keyword}\", got \"{k}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// `level`, `shift` or `coefficient`.
    #[serde(default = "default_net_family")]
    pub family: String,
    /// Number of coefficients for the coefficient family.
    #[serde(default)]
    pub count: Option<usize>,
    /// Spacing `δ`, or `"auto"` for the tuning rule.
    #[serde(default = "auto")]
    pub delta: NumberOr,
    #[serde(default = "default_range")]
    pub range: (f64, f64),
    /// Lattice offset, or `"random"` for a fresh uniform offset in `[0, δ)` per trial.
    #[serde(default = "random")]
    pub phase: NumberOr,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_net_family() -> String {
    "level".into()
}
fn auto() -> NumberOr {
    NumberOr::keyword("auto")
}
fn random() -> NumberOr {
    NumberOr::keyword("random")
}
fn default_range() -> (f64, f64) {
    (-0.45, 0.45)
}
fn default_cap() -> usize {
    DEFAULT_CAP
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            family: default_net_family(),
            count: None,
            delta: auto(),
            range: default_range(),
            phase: random(),
            cap: default_cap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    /// `auto` (closed-form rules) or `explicit` (`lambda` and `delta` below).
    #[serde(default = "auto_policy")]
    pub policy: String,
    #[serde(default = "unit")]
    pub lambda_prefactor: f64,
    #[serde(default = "unit")]
    pub delta_prefactor: f64,
    #[serde(default)]
    pub lambda: Option<Vec<f64>>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "lowest_index")]
    pub tie_rule: String,
}

fn auto_policy() -> String {
    "auto".into()
}
fn lowest_index() -> String {
    "lowest-index".into()
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            policy: auto_policy(),
            lambda_prefactor: 1.0,
            delta_prefactor: 1.0,
            lambda: None,
            delta: None,
            tie_rule: lowest_index(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregate {
    Mean,
    Median,
    TrimmedMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesConfig {
    /// Relative slope tolerance; defaults to 0.25, or 0.30 in noisy mode.
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default = "default_metrics")]
    pub assert_metrics: Vec<String>,
    #[serde(default = "default_aggregate")]
    pub aggregate: Aggregate,
}

fn default_metrics() -> Vec<String> {
    vec!["d_fg".into()]
}
fn default_aggregate() -> Aggregate {
    Aggregate::Mean
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self {
            tolerance: None,
            assert_metrics: default_metrics(),
            aggregate: default_aggregate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputConfig {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

/// Net family with its lattice settings resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct NetPlan {
    pub family: NetFamily,
    pub fixed_delta: Option<f64>,
    pub fixed_phase: Option<f64>,
    pub cap: usize,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("configuration serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn dim(&self) -> usize {
        self.instance.d
    }

    pub fn replicates(&self) -> usize {
        self.replicates
            .unwrap_or(if self.dim() == 1 { 200 } else { 60 })
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.sizes.clone().unwrap_or_else(|| DEFAULT_SIZES.to_vec())
    }

    pub fn nodes(&self) -> usize {
        self.instance
            .nodes
            .unwrap_or(if self.dim() == 1 { 1024 } else { 256 })
    }

    pub fn tolerance(&self) -> f64 {
        self.rates.tolerance.unwrap_or(match self.mode {
            EstimatorMode::Noisy => 0.30,
            _ => 0.25,
        })
    }

    /// Checks the rate-experiment invariants and every enumerated keyword.
    pub fn validate(&self) -> Result<()> {
        let sizes = self.sizes();
        if sizes.len() < 3 {
            return Err(Error::config("at least 3 sample sizes are needed for a slope"));
        }
        if sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] == 0 {
            return Err(Error::config("sample sizes must be positive and strictly increasing"));
        }
        if self.replicates() < 30 {
            return Err(Error::config("at least 30 replicates per size are needed"));
        }
        self.validate_components()
    }

    /// Checks everything except the size grid and replicate count.
    pub fn validate_components(&self) -> Result<()> {
        Grid::new(self.dim(), self.nodes())?;
        self.noise_model()?;
        self.kernel_spec()?;
        self.net_plan()?;
        match self.tuning.policy.as_str() {
            "auto" => {}
            "explicit" => {
                let lambda = self.tuning.lambda.as_ref().ok_or_else(|| {
                    Error::config("explicit tuning needs a lambda vector")
                })?;
                if lambda.len() != self.dim() {
                    return Err(Error::config("explicit lambda needs one entry per dimension"));
                }
            }
            other => return Err(Error::config(format!("unknown tuning policy `{other}`"))),
        }
        if self.tuning.tie_rule != "lowest-index" {
            return Err(Error::config("the only supported tie rule is lowest-index"));
        }
        for metric in &self.rates.assert_metrics {
            if metric != "d_fg" && metric != "d_delta" {
                return Err(Error::config(format!("unknown metric `{metric}`")));
            }
        }
        if let Some(t) = self.rates.tolerance {
            if !(t > 0.0) {
                return Err(Error::config("slope tolerance must be positive"));
            }
        }
        if self.mode == EstimatorMode::Noisy && self.noise_model()?.is_dirac() {
            return Err(Error::config("noisy mode needs a non-degenerate noise model"));
        }
        Ok(())
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        let d = self.dim();
        if self.noise.dims.is_empty() {
            return Ok(NoiseModel::dirac(d));
        }
        let entries: Vec<&NoiseDimConfig> = if self.noise.dims.len() == 1 {
            vec![&self.noise.dims[0]; d]
        } else if self.noise.dims.len() == d {
            self.noise.dims.iter().collect()
        } else {
            return Err(Error::config("noise needs one entry, or one per dimension"));
        };
        let dims = entries
            .into_iter()
            .map(|e| NoiseFamily::from_tag(&e.family, e.scale, e.beta))
            .collect::<Result<Vec<_>>>()?;
        NoiseModel::new(dims)
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        if !(self.kernel.half_width > 0.0) {
            return Err(Error::config("kernel half-width must be positive"));
        }
        build_kernel(self.kernel.radius, self.kernel.support, self.kernel.degree)
    }

    pub fn net_plan(&self) -> Result<NetPlan> {
        let range = self.net.range;
        let family = match self.net.family.as_str() {
            "level" => NetFamily::Level { range },
            "shift" => NetFamily::Shift { range },
            "coefficient" => NetFamily::Coefficient {
                count: self.net.count.unwrap_or(2),
                range,
            },
            other => return Err(Error::config(format!("unknown net family `{other}`"))),
        };
        Ok(NetPlan {
            family,
            fixed_delta: self.net.delta.resolve("auto", "net.delta")?,
            fixed_phase: self.net.phase.resolve("random", "net.phase")?,
            cap: self.net.cap,
        })
    }

    /// Builds the configured instance; lower-bound instances also return their shape.
    pub fn build_instance(&self) -> Result<(GridDensityPair, Option<LowerBoundInstance>)> {
        let grid = Grid::new(self.dim(), self.nodes())?;
        let smooth = match &self.instance.kind {
            InstanceKind::LinearRamp { slope } => SmoothKind::LinearRamp { slope: *slope },
            InstanceKind::QuadraticBowl { curvature } => SmoothKind::QuadraticBowl {
                curvature: *curvature,
            },
            InstanceKind::ShiftedCosine {
                amplitude,
                frequency,
                phase,
            } => SmoothKind::ShiftedCosine {
                amplitude: *amplitude,
                frequency: *frequency,
                phase: *phase,
            },
            InstanceKind::LowerBound {
                q,
                alpha,
                gamma,
                c_star,
                c_psi,
                offsets,
                signs,
            } => {
                let k = q * q;
                let signs = match signs {
                    None => vec![true; k],
                    Some(Signs::Keyword(w)) if w == "ones" => vec![true; k],
                    Some(Signs::Keyword(w)) if w == "zeros" => vec![false; k],
                    Some(Signs::Keyword(w)) => {
                        return Err(Error::config(format!("unknown sign keyword `{w}`")))
                    }
                    Some(Signs::Explicit(v)) => v.iter().map(|&b| b != 0).collect(),
                };
                let params = LowerBoundParams {
                    q: *q,
                    alpha: *alpha,
                    gamma: *gamma,
                    c_star: *c_star,
                    c_psi: *c_psi,
                    offsets: *offsets,
                    signs,
                };
                let inst = make_lower_bound_instance(&params, grid)?;
                return Ok((inst.pair.clone(), Some(inst)));
            }
        };
        Ok((make_smooth_instance(smooth, grid)?, None))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RAMP: &str = r#"
experiment_id = "ramp"
mode = "noisy"
replicates = 40
sizes = [256, 512, 1024]

[instance]
kind = "linear-ramp"
slope = 1.0

[noise]
dims = [{ family = "laplace", scale = 0.1 }]

[net]
delta = 0.1
phase = "random"
"#;

    #[test]
    fn parses_and_resolves() {
        let config = ExperimentConfig::from_toml_str(RAMP).unwrap();
        assert_eq!(config.mode, EstimatorMode::Noisy);
        assert_eq!(config.nodes(), 1024);
        assert_eq!(config.tolerance(), 0.30);
        let plan = config.net_plan().unwrap();
        assert_eq!(plan.fixed_delta, Some(0.1));
        assert_eq!(plan.fixed_phase, None);
        assert_eq!(config.noise_model().unwrap().decay_exponents(), vec![2.0]);
        let (pair, lb) = config.build_instance().unwrap();
        assert!(lb.is_none());
        assert_eq!(pair.grid.nodes, 1024);
        assert_eq!(config.hash(), config.clone().hash());
        assert_eq!(config.hash().len(), 64);
    }

    #[test]
    fn rejects_invalid_grids_and_keywords() {
        let short = RAMP.replace("sizes = [256, 512, 1024]", "sizes = [256, 512]");
        assert!(ExperimentConfig::from_toml_str(&short).is_err());
        let unsorted = RAMP.replace("[256, 512, 1024]", "[256, 1024, 512]");
        assert!(ExperimentConfig::from_toml_str(&unsorted).is_err());
        let few = RAMP.replace("replicates = 40", "replicates = 10");
        assert!(ExperimentConfig::from_toml_str(&few).is_err());
        let bad_family = RAMP.replace("laplace", "cauchy");
        assert!(matches!(
            ExperimentConfig::from_toml_str(&bad_family),
            Err(Error::Config(_))
        ));
        let bad_delta = RAMP.replace("delta = 0.1", "delta = \"often\"");
        assert!(ExperimentConfig::from_toml_str(&bad_delta).is_err());
        let dirac = RAMP.replace("dims = [{ family = \"laplace\", scale = 0.1 }]", "");
        assert!(ExperimentConfig::from_toml_str(&dirac).is_err());
    }

    #[test]
    fn lower_bound_section() {
        let text = r#"
experiment_id = "lb"
mode = "indicator"
replicates = 30
sizes = [1, 2, 3]

[instance]
kind = "lower-bound"
d = 2
nodes = 64
q = 4
alpha = 1.0
gamma = 1.0
signs = "ones"
"#;
        let config = ExperimentConfig::from_toml_str(text).unwrap();
        let (_, lb) = config.build_instance().unwrap();
        assert_eq!(lb.unwrap().shape.signs, vec![true; 16]);
    }
}
