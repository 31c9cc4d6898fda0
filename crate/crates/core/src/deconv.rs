//! Noise-corrected kernel `K_η = F^{-1}[F[K] / F[η](·/λ)]`, sampled on the grid offsets.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{fourier_nodes, KernelSpec};
use crate::noise::{NoiseFamily, NoiseModel};

/// Default real-space reach of the sampled kernel, in units of `λ`.
pub const DEFAULT_HALF_WIDTH: f64 = 12.0;

const REFINE_TOL: f64 = 1e-12;
const MAX_REFINEMENTS: usize = 8;

/// Samples of `K_{η,j}(t_k)` at `t_k = k Δx / λ_j`, `k = 0..=reach`; the kernel is even.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTable {
    pub lambda: f64,
    pub reach: usize,
    pub values: Vec<f64>,
    /// Absolute change at the last quadrature refinement.
    pub quadrature_error: f64,
    /// `∫_{|t| > half-width} |K_η|` estimated from the tail of a longer table.
    pub truncated_mass: f64,
}

impl KernelTable {
    pub fn at(&self, k: isize) -> f64 {
        let k = k.unsigned_abs();
        if k > self.reach {
            0.0
        } else {
            self.values[k]
        }
    }

    /// Convolution weights `Δx · λ^{-1} K_η(k Δx / λ)` for `k = -reach..=reach`.
    pub fn weights(&self, step: f64) -> Vec<f64> {
        let r = self.reach as isize;
        (-r..=r)
            .map(|k| step / self.lambda * self.at(k))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeconvKernel {
    pub spec: KernelSpec,
    pub noise: NoiseModel,
    pub step: f64,
    pub half_width: f64,
    pub dims: Vec<KernelTable>,
    pub warnings: Vec<String>,
}

impl DeconvKernel {
    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.dims.iter().map(|t| t.lambda).collect()
    }

    /// Product of the per-dimension samples at integer offsets.
    pub fn value(&self, offsets: &[isize]) -> f64 {
        self.dims
            .iter()
            .zip(offsets)
            .map(|(table, &k)| table.at(k))
            .product()
    }
}

/// Builds `K_η` per dimension by quadrature of the inverse Fourier integral over `[0, M]`.
///
/// `step` is the grid spacing in real space; samples are taken at multiples of
/// `step / λ_j` out to `half_width` (in units of `λ`).
pub fn build_deconv_kernel(
    spec: &KernelSpec,
    noise: &NoiseModel,
    lambda: &[f64],
    step: f64,
    half_width: f64,
) -> Result<DeconvKernel> {
    if lambda.is_empty() || lambda.len() != noise.dim() {
        return Err(Error::precondition(format!(
            "{} bandwidths for a {}-dimensional noise model",
            lambda.len(),
            noise.dim()
        )));
    }
    if lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::precondition("bandwidths must be positive and finite"));
    }
    if !(step > 0.0 && half_width > 0.0) {
        return Err(Error::precondition("grid step and half-width must be positive"));
    }
    let mut warnings = Vec::new();
    for (j, family) in noise.dims.iter().enumerate() {
        if !family.is_dirac() && family.beta() <= 0.5 {
            warnings.push(format!(
                "dimension {j}: noise exponent {} is at most 1/2",
                family.beta()
            ));
        }
    }
    let mut dims = Vec::with_capacity(lambda.len());
    for (j, (&l, family)) in lambda.iter().zip(&noise.dims).enumerate() {
        if l < 2.0 * step {
            warnings.push(format!(
                "dimension {j}: bandwidth {l} is below twice the grid step {step}; expect aliasing"
            ));
        }
        dims.push(sample_dimension(spec, family, l, step, half_width)?);
    }
    Ok(DeconvKernel {
        spec: spec.clone(),
        noise: noise.clone(),
        step,
        half_width,
        dims,
        warnings,
    })
}

fn sample_dimension(
    spec: &KernelSpec,
    family: &NoiseFamily,
    lambda: f64,
    step: f64,
    half_width: f64,
) -> Result<KernelTable> {
    let reach = (half_width * lambda / step + 1e-9).floor() as usize;
    // one extra half-width of samples feeds the truncated-mass estimate
    let extended = 2 * reach;
    let dt = step / lambda;
    let t_max = extended as f64 * dt;

    let mut previous: Option<Vec<f64>> = None;
    let mut quadrature_error = f64::INFINITY;
    for refinement in 0..MAX_REFINEMENTS {
        let nodes = fourier_nodes(spec, t_max, refinement);
        let mut weights = Vec::with_capacity(nodes.len());
        for (&s, &w) in nodes.nodes.iter().zip(&nodes.weights) {
            let cf = family.cf(s / lambda);
            if !(cf.abs() > 1e-300) {
                return Err(Error::Numerical(format!(
                    "characteristic function underflows at frequency {}",
                    s / lambda
                )));
            }
            weights.push(w * spec.fourier(s) / cf / PI);
        }
        let values: Vec<f64> = (0..=extended)
            .map(|k| {
                let t = k as f64 * dt;
                nodes
                    .nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&s, &w)| w * (t * s).cos())
                    .sum()
            })
            .collect();
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("non-finite deconvolution kernel value".into()));
        }
        if let Some(prev) = &previous {
            let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            quadrature_error = prev
                .iter()
                .zip(&values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if quadrature_error <= REFINE_TOL * scale {
                return Ok(table(lambda, reach, dt, values, quadrature_error));
            }
        }
        previous = Some(values);
    }
    Err(Error::QuadratureNonConvergence {
        achieved: quadrature_error,
    })
}

fn table(lambda: f64, reach: usize, dt: f64, mut values: Vec<f64>, err: f64) -> KernelTable {
    // the tail beyond the reach, out to twice the reach, by the trapezoid rule
    let tail: f64 = values[reach..].iter().map(|v| v.abs()).sum::<f64>() * dt * 2.0;
    values.truncate(reach + 1);
    KernelTable {
        lambda,
        reach,
        values,
        quadrature_error: err,
        truncated_mass: tail,
    }
}

/// Plain kernel `K` sampled like a deconvolution kernel (dirac noise).
pub fn build_plain_kernel(
    spec: &KernelSpec,
    lambda: &[f64],
    step: f64,
    half_width: f64,
) -> Result<DeconvKernel> {
    build_deconv_kernel(spec, &NoiseModel::dirac(lambda.len()), lambda, step, half_width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::composite;

    const STEP: f64 = 1.0 / 1024.0;

    #[test]
    fn dirac_reproduces_plain_kernel() {
        let spec = KernelSpec::default();
        let dk = build_plain_kernel(&spec, &[0.1], STEP, DEFAULT_HALF_WIDTH).unwrap();
        let table = &dk.dims[0];
        assert_eq!(table.reach, 1228);
        for k in (0..=table.reach).step_by(7) {
            let t = k as f64 * STEP / 0.1;
            let exact = spec.real_space(t);
            assert!((table.values[k] - exact).abs() < 1e-10, "k={k}");
        }
        assert!(dk.warnings.is_empty());
        assert!(table.truncated_mass < 1e-4);
    }

    #[test]
    fn laplace_value_at_origin() {
        let spec = KernelSpec::default();
        let sigma = 1.0;
        let lambda = 0.1;
        let noise = NoiseModel::laplace(1, sigma).unwrap();
        let dk = build_deconv_kernel(&spec, &noise, &[lambda], STEP, 1.0).unwrap();
        let oracle = composite(-4.0, 4.0, 64, |s| {
            spec.fourier(s) * (1.0 + sigma * sigma * s * s / (lambda * lambda))
        }) / (2.0 * PI);
        let v = dk.dims[0].values[0];
        assert!(((v - oracle) / oracle).abs() < 1e-10, "{v} vs {oracle}");
    }

    #[test]
    fn amplitude_grows_as_bandwidth_shrinks() {
        let spec = KernelSpec::default();
        let noise = NoiseModel::laplace(1, 0.1).unwrap();
        let sup = |lambda: f64| {
            let dk = build_deconv_kernel(&spec, &noise, &[lambda], STEP, 2.0).unwrap();
            dk.dims[0].values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        };
        assert!(sup(0.05) > sup(0.2));
    }

    #[test]
    fn warnings_for_small_beta_and_aliasing() {
        let spec = KernelSpec::default();
        let noise = NoiseModel::new(vec![NoiseFamily::SymmetrizedGamma {
            shape: 0.2,
            scale: 0.1,
        }])
        .unwrap();
        let dk = build_deconv_kernel(&spec, &noise, &[1.5 * STEP], STEP, 12.0).unwrap();
        assert_eq!(dk.warnings.len(), 2);
    }

    #[test]
    fn product_structure() {
        let spec = KernelSpec::default();
        let noise = NoiseModel::new(vec![NoiseFamily::Dirac, NoiseFamily::Laplace { scale: 0.2 }])
            .unwrap();
        let dk = build_deconv_kernel(&spec, &noise, &[0.2, 0.3], 1.0 / 256.0, 12.0).unwrap();
        let v = dk.value(&[3, -5]);
        assert_eq!(v, dk.dims[0].values[3] * dk.dims[1].values[5]);
        assert_eq!(dk.value(&[100_000, 0]), 0.0);
    }

    #[test]
    fn rejects_mismatched_bandwidths() {
        let spec = KernelSpec::default();
        assert!(build_plain_kernel(&spec, &[], STEP, 12.0).is_err());
        assert!(build_plain_kernel(&spec, &[-0.1], STEP, 12.0).is_err());
    }
}
