//! Monte Carlo trials, aggregation over replicates and log-log slope fits.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Aggregate, EstimatorMode, ExperimentConfig, NetPlan};
use crate::deconv::{build_deconv_kernel, build_plain_kernel, DeconvKernel};
use crate::erm::{erm_minimize, select_tuning, smoothed_terms, RiskProfile, Tuning, TuningMode};
use crate::error::{Error, Result};
use crate::instance::{draw_sample, GridDensityPair};
use crate::kernel::KernelSpec;
use crate::net::{build_net, NetOptions};
use crate::noise::NoiseModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "d_fg")]
    DFg,
    #[serde(rename = "d_delta")]
    DDelta,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::DFg, Metric::DDelta];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::DFg => "d_fg",
            Metric::DDelta => "d_delta",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "d_fg" => Ok(Metric::DFg),
            "d_delta" => Ok(Metric::DDelta),
            other => Err(Error::config(format!("unknown metric `{other}`"))),
        }
    }
}

/// Rate exponent in exact arithmetic:
/// `γα / (γ(2+α) + d + 2Σβ)` for `d_Δ`, `γ(α+1) / (γ(2+α) + d + 2Σβ)` for `d_{f,g}`.
pub fn compute_tau_exact(
    alpha: Ratio<i64>,
    beta: &[Ratio<i64>],
    gamma: Ratio<i64>,
    d: u32,
    metric: Metric,
) -> Result<Ratio<i64>> {
    let zero = Ratio::from_integer(0);
    if alpha < zero || gamma <= zero || beta.iter().any(|b| *b < zero) {
        return Err(Error::precondition("need alpha >= 0, gamma > 0 and beta >= 0"));
    }
    let two = Ratio::from_integer(2);
    let sum: Ratio<i64> = beta.iter().copied().fold(zero, |a, b| a + b);
    let denominator = gamma * (two + alpha) + Ratio::from_integer(d as i64) + two * sum;
    let numerator = match metric {
        Metric::DDelta => gamma * alpha,
        Metric::DFg => gamma * (alpha + Ratio::from_integer(1)),
    };
    Ok(numerator / denominator)
}

pub fn compute_tau(alpha: f64, beta: &[f64], gamma: f64, d: usize, metric: Metric) -> Result<f64> {
    if !(alpha >= 0.0 && gamma > 0.0) || beta.iter().any(|b| !(*b >= 0.0)) {
        return Err(Error::precondition("need alpha >= 0, gamma > 0 and beta >= 0"));
    }
    let sum: f64 = beta.iter().sum();
    let denominator = gamma * (2.0 + alpha) + d as f64 + 2.0 * sum;
    Ok(match metric {
        Metric::DDelta => gamma * alpha / denominator,
        Metric::DFg => gamma * (alpha + 1.0) / denominator,
    })
}

/// Exponent with its exact fraction when every input is a fraction with a small denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tau {
    pub value: f64,
    pub exact: Option<(i64, i64)>,
}

pub fn tau(alpha: f64, beta: &[f64], gamma: f64, d: usize, metric: Metric) -> Result<Tau> {
    let value = compute_tau(alpha, beta, gamma, d, metric)?;
    let exact = (|| {
        let a = as_ratio(alpha)?;
        let g = as_ratio(gamma)?;
        let b = beta.iter().map(|&v| as_ratio(v)).collect::<Option<Vec<_>>>()?;
        let r = compute_tau_exact(a, &b, g, d as u32, metric).ok()?;
        Some((*r.numer(), *r.denom()))
    })();
    Ok(Tau { value, exact })
}

fn as_ratio(v: f64) -> Option<Ratio<i64>> {
    let r = Ratio::<i64>::approximate_float(v)?;
    (*r.numer() as f64 / *r.denom() as f64 == v && *r.denom() <= 1 << 20).then_some(r)
}

/// Least-squares fit of `ln y` on `ln n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
}

pub fn fit_loglog(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::precondition("a slope fit needs at least 3 points"));
    }
    if points.iter().any(|&(n, y)| !(n > 0.0 && y > 0.0)) {
        return Err(Error::precondition("log-log fit needs positive coordinates"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::precondition("slope fit needs distinct sizes"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let stderr = (ssr / (k - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        stderr,
        intercept,
    })
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `rep` at size `n`.
pub fn trial_seed(base: u64, n: usize, rep: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ n as u64) ^ rep as u64)
}

const PHASE_STREAM: u64 = 0x5048_4153_455f_4e45;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub n: usize,
    pub seed: u64,
    pub excess_fg: f64,
    pub excess_delta: f64,
    pub empirical_risk: f64,
    /// Index of the chosen member and its net parameters.
    pub candidate: usize,
    pub candidate_params: Vec<f64>,
    pub net_size: usize,
    pub lambda: Vec<f64>,
    pub delta: f64,
    pub phase: f64,
    /// Range of `h` over the sample for the chosen set (smoothed modes only).
    pub h_range: Option<(f64, f64)>,
    /// Observations that fell outside the grid (indicator mode).
    pub outside: usize,
}

/// An experiment with its instance, noise and kernel resolved once.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub pair: GridDensityPair,
    pub noise: NoiseModel,
    pub spec: KernelSpec,
    pub plan: NetPlan,
    kernels: Mutex<BTreeMap<usize, Arc<DeconvKernel>>>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate_components()?;
        let (pair, _) = config.build_instance()?;
        Ok(Self {
            noise: config.noise_model()?,
            spec: config.kernel_spec()?,
            plan: config.net_plan()?,
            pair,
            config,
            kernels: Mutex::new(BTreeMap::new()),
        })
    }

    /// Exponents of the noise the estimator is tuned for (zero outside noisy mode).
    pub fn tuning_beta(&self) -> Vec<f64> {
        match self.config.mode {
            EstimatorMode::Noisy => self.noise.decay_exponents(),
            _ => vec![0.0; self.pair.dim()],
        }
    }

    pub fn tuning(&self, n: usize) -> Result<Tuning> {
        let d = self.pair.dim();
        let t = &self.config.tuning;
        let mut tuning = if t.policy == "explicit" {
            let lambda = t.lambda.clone().unwrap_or_default();
            let delta = t.delta.or(self.plan.fixed_delta).ok_or_else(|| {
                Error::config("explicit tuning needs a delta in [tuning] or [net]")
            })?;
            Tuning { lambda, delta }
        } else {
            let mode = match self.config.mode {
                EstimatorMode::Noisy => TuningMode::Noisy,
                _ => TuningMode::Direct,
            };
            select_tuning(
                n,
                n,
                self.pair.margin.alpha,
                self.pair.regularity.gamma,
                &self.tuning_beta(),
                d,
                mode,
                (t.lambda_prefactor, t.delta_prefactor),
            )?
        };
        if let Some(delta) = self.plan.fixed_delta {
            tuning.delta = delta;
        }
        Ok(tuning)
    }

    fn kernel(&self, n: usize, lambda: &[f64]) -> Result<Arc<DeconvKernel>> {
        if let Some(k) = self.kernels.lock().expect("kernel cache").get(&n) {
            return Ok(k.clone());
        }
        let step = self.pair.grid.step();
        let hw = self.config.kernel.half_width;
        let kernel = Arc::new(match self.config.mode {
            EstimatorMode::Noisy => build_deconv_kernel(&self.spec, &self.noise, lambda, step, hw)?,
            _ => build_plain_kernel(&self.spec, lambda, step, hw)?,
        });
        self.kernels
            .lock()
            .expect("kernel cache")
            .insert(n, kernel.clone());
        Ok(kernel)
    }

    /// One replicate: sample, build the net, minimize, score against the Bayes set.
    pub fn run_trial(&self, n: usize, seed: u64) -> Result<RiskReport> {
        let tuning = self.tuning(n)?;
        let grid = &self.pair.grid;
        let sample = draw_sample(&self.pair, &self.noise, n, n, seed)?;
        let phase = match self.plan.fixed_phase {
            Some(p) => p,
            None => ChaCha8Rng::seed_from_u64(splitmix64(seed ^ PHASE_STREAM)).gen::<f64>()
                * tuning.delta,
        };
        let net = build_net(
            &self.plan.family,
            &self.pair,
            &NetOptions {
                delta: tuning.delta,
                gamma: self.pair.regularity.gamma,
                lipschitz: self.pair.regularity.lipschitz,
                phase,
                cap: self.plan.cap,
            },
        )?;
        let (profile, kernel) = match self.config.mode {
            EstimatorMode::Indicator => (RiskProfile::indicator(&sample, grid)?, None),
            _ => {
                let kernel = self.kernel(n, &tuning.lambda)?;
                (RiskProfile::smoothed(&sample, &kernel, grid)?, Some(kernel))
            }
        };
        let solution = erm_minimize(&net, |s| profile.risk(s), &tuning.lambda, tuning.delta)?;
        let h_range = match kernel {
            Some(k) => {
                let terms = smoothed_terms(&sample, &solution.set, &k, grid)?;
                Some((terms.h_min, terms.h_max))
            }
            None => None,
        };
        let (excess_fg, excess_delta) = self.pair.excess(&solution.set)?;
        Ok(RiskReport {
            n,
            seed,
            excess_fg,
            excess_delta,
            empirical_risk: solution.risk,
            candidate: solution.index,
            candidate_params: net.members[solution.index].params.clone(),
            net_size: net.len(),
            lambda: tuning.lambda,
            delta: tuning.delta,
            phase,
            h_range,
            outside: profile.outside,
        })
    }
}

/// Single trial straight from a configuration.
pub fn run_trial(config: &ExperimentConfig, n: usize, seed: u64) -> Result<RiskReport> {
    Experiment::new(config.clone())?.run_trial(n, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRow {
    pub experiment_id: String,
    pub metric: Metric,
    pub n: usize,
    pub mean_excess: f64,
    pub stderr: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment_id: String,
    pub metric: Metric,
    pub slope: f64,
    pub slope_stderr: f64,
    pub tau_target: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment_id: String,
    pub config_hash: String,
    pub base_seed: u64,
    pub seeds: Vec<SeedEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureCount {
    pub n: usize,
    pub failed: usize,
    pub first_error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub experiment_id: String,
    pub tolerance: f64,
    pub data: Vec<DataRow>,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<FailureCount>,
    pub pass: bool,
}

impl RateResult {
    pub fn empty(experiment_id: &str) -> Self {
        Self {
            experiment_id: experiment_id.to_string(),
            tolerance: 0.0,
            data: Vec::new(),
            summary: Vec::new(),
            failures: Vec::new(),
            pass: false,
        }
    }

    pub fn slope(&self, metric: Metric) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.metric == metric)
    }

    pub fn rows(&self, metric: Metric) -> impl Iterator<Item = &DataRow> {
        self.data.iter().filter(move |r| r.metric == metric)
    }
}

/// Centre and standard error of replicate values under the chosen aggregate.
pub fn aggregate(values: &[f64], how: Aggregate) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (0.0, 0.0);
    }
    let mean_sd = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        (m, sd)
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    match how {
        Aggregate::Mean => {
            let (m, sd) = mean_sd(values);
            (m, sd / (k as f64).sqrt())
        }
        Aggregate::Median => {
            let median = if k % 2 == 1 {
                sorted[k / 2]
            } else {
                0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
            };
            let (_, sd) = mean_sd(values);
            (median, 1.2533 * sd / (k as f64).sqrt())
        }
        Aggregate::TrimmedMean => {
            let cut = k / 10;
            let kept = &sorted[cut..k - cut];
            let (m, sd) = mean_sd(kept);
            (m, sd / (kept.len() as f64).sqrt())
        }
    }
}

/// Runs every replicate of every size, aggregates and fits the slopes.
pub fn run_rate_experiment(config: &ExperimentConfig) -> Result<(RateResult, Manifest)> {
    config.validate()?;
    let experiment = Experiment::new(config.clone())?;
    let sizes = config.sizes();
    let reps = config.replicates();
    let jobs: Vec<(usize, usize, u64)> = sizes
        .iter()
        .flat_map(|&n| (0..reps).map(move |r| (n, r, trial_seed(config.seed, n, r))))
        .collect();
    for &n in &sizes {
        // build each kernel once, before the parallel section
        if config.mode != EstimatorMode::Indicator {
            experiment.kernel(n, &experiment.tuning(n)?.lambda)?;
        }
    }
    let outcomes: Vec<Result<RiskReport>> = jobs
        .par_iter()
        .map(|&(n, _, seed)| experiment.run_trial(n, seed))
        .collect();

    let id = config.experiment_id.clone();
    let mut data = Vec::new();
    let mut failures = Vec::new();
    let mut means: BTreeMap<Metric, Vec<(f64, f64)>> = BTreeMap::new();
    for (i, &n) in sizes.iter().enumerate() {
        let chunk = &outcomes[i * reps..(i + 1) * reps];
        let ok: Vec<&RiskReport> = chunk.iter().filter_map(|o| o.as_ref().ok()).collect();
        let failed = reps - ok.len();
        if failed > 0 {
            let first = chunk
                .iter()
                .find_map(|o| o.as_ref().err())
                .map(|e| e.to_string())
                .unwrap_or_default();
            eprintln!("{id}: {failed} of {reps} trials failed at n = {n}: {first}");
            if failed as f64 > 0.05 * reps as f64 {
                return Err(Error::Experiment(format!(
                    "{failed} of {reps} trials failed at n = {n}: {first}"
                )));
            }
            failures.push(FailureCount {
                n,
                failed,
                first_error: first,
            });
        }
        for metric in Metric::ALL {
            let values: Vec<f64> = ok
                .iter()
                .map(|r| match metric {
                    Metric::DFg => r.excess_fg,
                    Metric::DDelta => r.excess_delta,
                })
                .collect();
            let (centre, stderr) = aggregate(&values, config.rates.aggregate);
            means.entry(metric).or_default().push((n as f64, centre));
            data.push(DataRow {
                experiment_id: id.clone(),
                metric,
                n,
                mean_excess: centre,
                stderr,
                replicates: ok.len(),
            });
        }
    }

    let tolerance = config.tolerance();
    let beta = experiment.tuning_beta();
    let mut summary = Vec::new();
    for (metric, points) in &means {
        let Ok(fit) = fit_loglog(points) else { continue };
        let target = compute_tau(
            experiment.pair.margin.alpha,
            &beta,
            experiment.pair.regularity.gamma,
            experiment.pair.dim(),
            *metric,
        )?;
        summary.push(SummaryRow {
            experiment_id: id.clone(),
            metric: *metric,
            slope: fit.slope,
            slope_stderr: fit.stderr,
            tau_target: target,
            pass: (fit.slope + target).abs() <= tolerance * target,
        });
    }
    let pass = config.rates.assert_metrics.iter().all(|name| {
        Metric::parse(name)
            .ok()
            .and_then(|m| summary.iter().find(|r| r.metric == m))
            .is_some_and(|r| r.pass)
    });
    let manifest = Manifest {
        experiment_id: id.clone(),
        config_hash: config.hash(),
        base_seed: config.seed,
        seeds: jobs
            .iter()
            .map(|&(n, replicate, seed)| SeedEntry { n, replicate, seed })
            .collect(),
    };
    Ok((
        RateResult {
            experiment_id: id,
            tolerance,
            data,
            summary,
            failures,
            pass,
        },
        manifest,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Ratio<i64> {
        Ratio::new(n, d)
    }

    #[test]
    fn tau_examples() {
        let one = r(1, 1);
        assert_eq!(
            compute_tau_exact(one, &[one], one, 1, Metric::DFg).unwrap(),
            r(1, 3)
        );
        assert_eq!(
            compute_tau_exact(r(0, 1), &[r(0, 1)], one, 1, Metric::DFg).unwrap(),
            r(1, 3)
        );
        assert_eq!(
            compute_tau_exact(r(0, 1), &[r(5, 2)], r(3, 2), 2, Metric::DDelta).unwrap(),
            r(0, 1)
        );
        let t = tau(1.0, &[2.0], 1.0, 1, Metric::DFg).unwrap();
        assert_eq!(t.exact, Some((1, 4)));
        assert_eq!(t.value, 0.25);
        assert_eq!(tau(1.0, &[0.3], 1.0, 1, Metric::DFg).unwrap().exact, Some((10, 23)));
        assert_eq!(tau(1.0, &[2f64.sqrt()], 1.0, 1, Metric::DFg).unwrap().exact, None);
        assert!(compute_tau(-1.0, &[0.0], 1.0, 1, Metric::DFg).is_err());
    }

    #[test]
    fn fit_recovers_exact_power() {
        let pts: Vec<(f64, f64)> = [256.0, 1024.0, 4096.0]
            .iter()
            .map(|&n: &f64| (n, 3.0 * n.powf(-0.4)))
            .collect();
        let fit = fit_loglog(&pts).unwrap();
        assert!((fit.slope + 0.4).abs() < 1e-12);
        assert!(fit.stderr < 1e-10);
        assert!(fit_loglog(&pts[..2]).is_err());
    }

    #[test]
    fn seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for n in [256, 512, 1024] {
            for rep in 0..200 {
                assert!(seen.insert(trial_seed(7, n, rep)));
            }
        }
    }

    #[test]
    fn aggregates() {
        let v = [1.0, 2.0, 3.0, 4.0, 100.0];
        assert_eq!(aggregate(&v, Aggregate::Mean).0, 22.0);
        assert_eq!(aggregate(&v, Aggregate::Median).0, 3.0);
        assert_eq!(aggregate(&[5.0], Aggregate::Mean), (5.0, 0.0));
    }
}
