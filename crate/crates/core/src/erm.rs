//! Empirical risks, tuning rules and exhaustive minimization over a net.

use serde::{Deserialize, Serialize};

use crate::decision::DecisionSet;
use crate::deconv::{build_plain_kernel, DeconvKernel, DEFAULT_HALF_WIDTH};
use crate::error::{Error, Result};
use crate::field::{check_geometry, correlate_to_grid, h_eval_many, h_field, linear_binning};
use crate::grid::Grid;
use crate::kernel::KernelSpec;
use crate::net::HypothesisNet;

/// Observations `Z = X + ε` of both classes, rows of `d` coordinates.
///
/// The latent `X` rows are kept for diagnostics; the estimators never read them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub d: usize,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub seed: u64,
}

impl Sample {
    pub fn new(
        d: usize,
        z1: Vec<f64>,
        z2: Vec<f64>,
        x1: Vec<f64>,
        x2: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        if d == 0 || z1.len() % d != 0 || z2.len() % d != 0 {
            return Err(Error::precondition("sample rows do not match the dimension"));
        }
        if z1.is_empty() || z2.is_empty() {
            return Err(Error::precondition("both classes need at least one observation"));
        }
        if !z1.iter().chain(&z2).all(|v| v.is_finite()) {
            return Err(Error::precondition("sample contains non-finite values"));
        }
        Ok(Self {
            d,
            z1,
            z2,
            x1,
            x2,
            seed,
        })
    }

    /// Sample with no latent rows recorded.
    pub fn observed(d: usize, z1: Vec<f64>, z2: Vec<f64>) -> Result<Self> {
        Self::new(d, z1, z2, Vec::new(), Vec::new(), 0)
    }

    pub fn n(&self) -> usize {
        self.z1.len() / self.d
    }

    pub fn m(&self) -> usize {
        self.z2.len() / self.d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRisk {
    pub value: f64,
    /// Observations outside `K`, counted in neither term.
    pub outside: usize,
}

/// `(1/2n) Σ 1{Z⁽¹⁾ ∈ K∖G} + (1/2m) Σ 1{Z⁽²⁾ ∈ G}`, membership by grid cell.
pub fn risk_indicator(sample: &Sample, set: &DecisionSet, grid: &Grid) -> Result<IndicatorRisk> {
    check_sample(sample, grid)?;
    if set.len() != grid.len() {
        return Err(Error::precondition("decision set does not match the grid"));
    }
    let mut outside = 0;
    let mut first = 0usize;
    for z in sample.z1.chunks_exact(grid.d) {
        match grid.cell_of(z) {
            Some(i) if !set.mask[i] => first += 1,
            Some(_) => {}
            None => outside += 1,
        }
    }
    let mut second = 0usize;
    for z in sample.z2.chunks_exact(grid.d) {
        match grid.cell_of(z) {
            Some(i) if set.mask[i] => second += 1,
            Some(_) => {}
            None => outside += 1,
        }
    }
    Ok(IndicatorRisk {
        value: first as f64 / (2.0 * sample.n() as f64) + second as f64 / (2.0 * sample.m() as f64),
        outside,
    })
}

fn check_sample(sample: &Sample, grid: &Grid) -> Result<()> {
    if sample.d != grid.d {
        return Err(Error::precondition("sample and grid dimensions differ"));
    }
    Ok(())
}

/// `(1/2n) Σ h_{K∖G,λ}(Z⁽¹⁾) + (1/2m) Σ h_{G,λ}(Z⁽²⁾)` through the tabulated fields.
pub fn risk_deconv(
    sample: &Sample,
    set: &DecisionSet,
    kernel: &DeconvKernel,
    grid: &Grid,
) -> Result<f64> {
    Ok(smoothed_terms(sample, set, kernel, grid)?.risk)
}

/// Same form as [`risk_deconv`] with the plain kernel `K` in place of `K_η`.
pub fn risk_smoothed_direct(
    sample: &Sample,
    set: &DecisionSet,
    spec: &KernelSpec,
    lambda: &[f64],
    grid: &Grid,
) -> Result<f64> {
    let kernel = build_plain_kernel(spec, lambda, grid.step(), DEFAULT_HALF_WIDTH)?;
    risk_deconv(sample, set, &kernel, grid)
}

/// Risk value and the range of `h` over the evaluated points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedRisk {
    pub risk: f64,
    pub h_min: f64,
    pub h_max: f64,
}

pub fn smoothed_terms(
    sample: &Sample,
    set: &DecisionSet,
    kernel: &DeconvKernel,
    grid: &Grid,
) -> Result<SmoothedRisk> {
    check_sample(sample, grid)?;
    let outer = h_field(kernel, &set.complement(), grid)?;
    let inner = h_field(kernel, set, grid)?;
    let h1 = h_eval_many(&outer, &sample.z1)?;
    let h2 = h_eval_many(&inner, &sample.z2)?;
    let (h_min, h_max) = h1
        .iter()
        .chain(&h2)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let risk = h1.iter().sum::<f64>() / (2.0 * sample.n() as f64)
        + h2.iter().sum::<f64>() / (2.0 * sample.m() as f64);
    Ok(SmoothedRisk { risk, h_min, h_max })
}

/// Per-node weights with `risk(G) = Σ_{i ∉ G} a_i + Σ_{i ∈ G} b_i`.
///
/// Every empirical risk in this module is additive over the cells of `G`, so one
/// pass over the sample serves all candidates of a net.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub outside: usize,
}

impl RiskProfile {
    pub fn indicator(sample: &Sample, grid: &Grid) -> Result<Self> {
        check_sample(sample, grid)?;
        let mut a = vec![0.0; grid.len()];
        let mut b = vec![0.0; grid.len()];
        let mut outside = 0;
        let wa = 1.0 / (2.0 * sample.n() as f64);
        let wb = 1.0 / (2.0 * sample.m() as f64);
        for z in sample.z1.chunks_exact(grid.d) {
            match grid.cell_of(z) {
                Some(i) => a[i] += wa,
                None => outside += 1,
            }
        }
        for z in sample.z2.chunks_exact(grid.d) {
            match grid.cell_of(z) {
                Some(i) => b[i] += wb,
                None => outside += 1,
            }
        }
        Ok(Self { a, b, outside })
    }

    /// Weights of the smoothed risk: linear binning of the sample onto the
    /// extended grid, then correlation with the kernel samples.
    pub fn smoothed(sample: &Sample, kernel: &DeconvKernel, grid: &Grid) -> Result<Self> {
        check_sample(sample, grid)?;
        check_geometry(kernel, grid)?;
        let reach: Vec<usize> = kernel.dims.iter().map(|t| t.reach).collect();
        let b1 = linear_binning(&sample.z1, grid, &reach)?;
        let b2 = linear_binning(&sample.z2, grid, &reach)?;
        let wa = 1.0 / (2.0 * sample.n() as f64);
        let wb = 1.0 / (2.0 * sample.m() as f64);
        let a = correlate_to_grid(&b1, kernel)
            .into_iter()
            .map(|v| v * wa)
            .collect();
        let b = correlate_to_grid(&b2, kernel)
            .into_iter()
            .map(|v| v * wb)
            .collect();
        Ok(Self { a, b, outside: 0 })
    }

    pub fn risk(&self, set: &DecisionSet) -> f64 {
        set.mask
            .iter()
            .zip(self.a.iter().zip(&self.b))
            .map(|(&inside, (a, b))| if inside { *b } else { *a })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuningMode {
    Noisy,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub lambda: Vec<f64>,
    pub delta: f64,
}

/// Closed-form bandwidths and net spacing.
///
/// Noisy: `λ_j = N^{-1/(γ(2+α) + 2Σβ + d)}`, `δ = (Π λ_j^{-β_j} / √N)^{2/(d/γ + 2 + α)}`.
/// Direct: `λ_j = N^{-1/(γ(2+α) + d)}`, `δ = N^{-1/(d/γ + 2 + α)}`. `N = n ∧ m`;
/// both values are multiplied by the given prefactors.
#[allow(clippy::too_many_arguments)]
pub fn select_tuning(
    n: usize,
    m: usize,
    alpha: f64,
    gamma: f64,
    beta: &[f64],
    d: usize,
    mode: TuningMode,
    prefactors: (f64, f64),
) -> Result<Tuning> {
    if !(alpha >= 0.0 && gamma > 0.0) {
        return Err(Error::precondition("need alpha >= 0 and gamma > 0"));
    }
    if beta.len() != d {
        return Err(Error::precondition("one noise exponent per dimension is needed"));
    }
    let size = n.min(m) as f64;
    if size < 1.0 {
        return Err(Error::precondition("sample sizes must be positive"));
    }
    let df = d as f64;
    let smoothness = df / gamma + 2.0 + alpha;
    match mode {
        TuningMode::Noisy => {
            if let Some(b) = beta.iter().find(|&&b| b <= 0.5) {
                return Err(Error::precondition(format!(
                    "noise exponent {b} is at most 1/2; the noisy tuning needs beta > 1/2"
                )));
            }
            let sum: f64 = beta.iter().sum();
            let l = prefactors.0 * size.powf(-1.0 / (gamma * (2.0 + alpha) + 2.0 * sum + df));
            let lambda = vec![l; d];
            let inflation: f64 = lambda.iter().zip(beta).map(|(l, b)| l.powf(-b)).product();
            let delta = prefactors.1 * (inflation / size.sqrt()).powf(2.0 / smoothness);
            Ok(Tuning { lambda, delta })
        }
        TuningMode::Direct => {
            let l = prefactors.0 * size.powf(-1.0 / (gamma * (2.0 + alpha) + df));
            Ok(Tuning {
                lambda: vec![l; d],
                delta: prefactors.1 * size.powf(-1.0 / smoothness),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErmSolution {
    pub index: usize,
    pub set: DecisionSet,
    pub risk: f64,
    pub lambda: Vec<f64>,
    pub delta: f64,
}

/// Evaluates every member and keeps the first minimizer.
pub fn erm_minimize(
    net: &HypothesisNet,
    risk: impl Fn(&DecisionSet) -> f64,
    lambda: &[f64],
    delta: f64,
) -> Result<ErmSolution> {
    if net.is_empty() {
        return Err(Error::precondition("cannot minimize over an empty net"));
    }
    let values: Vec<f64> = net.members.iter().map(|m| risk(&m.set)).collect();
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    Ok(ErmSolution {
        index: best,
        set: net.members[best].set.clone(),
        risk: values[best],
        lambda: lambda.to_vec(),
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::decision_set_of;

    #[test]
    fn hand_counted_indicator_risk() {
        let grid = Grid::new(1, 100).unwrap();
        let sample = Sample::observed(1, vec![0.2, 0.8], vec![0.3, 0.9]).unwrap();
        let set = decision_set_of(&grid.tabulate(|x| x[0] - 0.5));
        let r = risk_indicator(&sample, &set, &grid).unwrap();
        assert_eq!(r.value, 0.5);
        assert_eq!(r.outside, 0);

        let full = DecisionSet::full(grid.len());
        let r = risk_indicator(&sample, &full, &grid).unwrap();
        assert_eq!(r.value, 0.5);
        let empty = DecisionSet::empty(grid.len());
        assert_eq!(risk_indicator(&sample, &empty, &grid).unwrap().value, 0.5);
    }

    #[test]
    fn points_outside_are_reported() {
        let grid = Grid::new(1, 10).unwrap();
        let sample = Sample::observed(1, vec![-0.2, 0.5], vec![1.3]).unwrap();
        let r = risk_indicator(&sample, &DecisionSet::empty(10), &grid).unwrap();
        assert_eq!(r.outside, 2);
        assert_eq!(r.value, 0.25);
        let profile = RiskProfile::indicator(&sample, &grid).unwrap();
        assert_eq!(profile.outside, 2);
        assert_eq!(profile.risk(&DecisionSet::empty(10)), 0.25);
    }

    #[test]
    fn tuning_formulas() {
        let noisy = select_tuning(4096, 5000, 1.0, 1.0, &[2.0], 1, TuningMode::Noisy, (1.0, 1.0))
            .unwrap();
        assert!((noisy.lambda[0] - 2f64.powf(-1.5)).abs() < 1e-12);
        let direct =
            select_tuning(4096, 4096, 1.0, 1.0, &[0.0], 1, TuningMode::Direct, (1.0, 1.0)).unwrap();
        assert!((direct.lambda[0] - 0.125).abs() < 1e-12);
        assert!((direct.delta - 0.125).abs() < 1e-12);
        assert!(matches!(
            select_tuning(100, 100, 1.0, 1.0, &[0.4], 1, TuningMode::Noisy, (1.0, 1.0)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let sets = vec![
            DecisionSet::empty(4),
            DecisionSet::full(4),
            DecisionSet::full(4),
        ];
        let net = HypothesisNet::from_sets(sets);
        let sol = erm_minimize(&net, |s| if s.count() == 4 { 0.0 } else { 1.0 }, &[], 0.1)
            .unwrap();
        assert_eq!(sol.index, 1);
        let single = HypothesisNet::from_sets(vec![DecisionSet::empty(4)]);
        assert_eq!(erm_minimize(&single, |_| 3.0, &[], 0.1).unwrap().index, 0);
        assert!(erm_minimize(&HypothesisNet::from_sets(vec![]), |_| 0.0, &[], 0.1).is_err());
    }

    #[test]
    fn empty_set_smoothed_risk() {
        let grid = Grid::new(1, 256).unwrap();
        let spec = KernelSpec::default();
        let sample = Sample::observed(1, vec![0.3, 0.5, 0.61], vec![0.2]).unwrap();
        let empty = DecisionSet::empty(grid.len());
        let r = risk_smoothed_direct(&sample, &empty, &spec, &[0.05], &grid).unwrap();
        let kernel = build_plain_kernel(&spec, &[0.05], grid.step(), DEFAULT_HALF_WIDTH).unwrap();
        let full = h_field(&kernel, &DecisionSet::full(grid.len()), &grid).unwrap();
        let expected = h_eval_many(&full, &sample.z1).unwrap().iter().sum::<f64>() / 6.0;
        assert!((r - expected).abs() < 1e-14);
    }

    #[test]
    fn profile_matches_field_path() {
        use crate::deconv::build_deconv_kernel;
        use crate::noise::NoiseModel;
        for (d, nodes, lambda) in [(1, 512, 0.1), (2, 64, 0.2)] {
            let grid = Grid::new(d, nodes).unwrap();
            let noise = NoiseModel::laplace(d, 0.05).unwrap();
            let kernel = build_deconv_kernel(
                &KernelSpec::default(),
                &noise,
                &vec![lambda; d],
                grid.step(),
                DEFAULT_HALF_WIDTH,
            )
            .unwrap();
            let z1: Vec<f64> = (0..40 * d).map(|i| ((i * 7919) % 113) as f64 / 90.0 - 0.1).collect();
            let z2: Vec<f64> = (0..30 * d).map(|i| ((i * 104_729) % 97) as f64 / 80.0 - 0.05).collect();
            let sample = Sample::observed(d, z1, z2).unwrap();
            let profile = RiskProfile::smoothed(&sample, &kernel, &grid).unwrap();
            let set = decision_set_of(&grid.tabulate(|x| x[0] + 0.3 * x[d - 1] - 0.6));
            let via_fields = risk_deconv(&sample, &set, &kernel, &grid).unwrap();
            assert!((profile.risk(&set) - via_fields).abs() < 1e-10, "d={d}");
        }
    }
}
