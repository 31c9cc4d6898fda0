//! Measurement-error laws: product densities with real characteristic functions.
//!
//! Fourier convention used throughout the crate: `F[f](t) = ∫ e^{itx} f(x) dx`,
//! with the `1/(2π)` factor on the inverse transform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One coordinate of the error law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum NoiseFamily {
    /// No error in this coordinate.
    Dirac,
    /// Laplace law with density `exp(-|x|/scale) / (2 scale)`.
    Laplace { scale: f64 },
    /// Difference of two independent Gamma(shape, scale) draws.
    SymmetrizedGamma { shape: f64, scale: f64 },
}

impl NoiseFamily {
    /// Builds a family from its configuration tag.
    ///
    /// `beta` is only read for `symmetrized-gamma`, where it fixes the shape as `beta / 2`.
    pub fn from_tag(tag: &str, scale: f64, beta: Option<f64>) -> Result<Self> {
        let family = match tag {
            "dirac" => NoiseFamily::Dirac,
            "laplace" => NoiseFamily::Laplace { scale },
            "symmetrized-gamma" => {
                let beta = beta.ok_or_else(|| {
                    Error::config("symmetrized-gamma noise needs an explicit beta")
                })?;
                NoiseFamily::SymmetrizedGamma {
                    shape: beta / 2.0,
                    scale,
                }
            }
            other => return Err(Error::config(format!("unknown noise family `{other}`"))),
        };
        family.validate()?;
        Ok(family)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            NoiseFamily::Dirac => Ok(()),
            NoiseFamily::Laplace { scale } if scale > 0.0 && scale.is_finite() => Ok(()),
            NoiseFamily::SymmetrizedGamma { shape, scale }
                if shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite() =>
            {
                Ok(())
            }
            other => Err(Error::config(format!("invalid noise parameters {other:?}"))),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            NoiseFamily::Dirac => "dirac",
            NoiseFamily::Laplace { .. } => "laplace",
            NoiseFamily::SymmetrizedGamma { .. } => "symmetrized-gamma",
        }
    }

    /// Polynomial decay exponent of the characteristic function.
    pub fn beta(&self) -> f64 {
        match *self {
            NoiseFamily::Dirac => 0.0,
            NoiseFamily::Laplace { .. } => 2.0,
            NoiseFamily::SymmetrizedGamma { shape, .. } => 2.0 * shape,
        }
    }

    pub fn cf(&self, t: f64) -> f64 {
        match *self {
            NoiseFamily::Dirac => 1.0,
            NoiseFamily::Laplace { scale } => 1.0 / (1.0 + scale * scale * t * t),
            NoiseFamily::SymmetrizedGamma { shape, scale } => {
                (1.0 + scale * scale * t * t).powf(-shape)
            }
        }
    }

    pub fn is_dirac(&self) -> bool {
        matches!(self, NoiseFamily::Dirac)
    }

    /// Density of the law, where it has one.
    ///
    /// The symmetrized Gamma density is only closed-form for shape 1 (Laplace);
    /// other shapes return `None`.
    pub fn density(&self, x: f64) -> Option<f64> {
        match *self {
            NoiseFamily::Dirac => None,
            NoiseFamily::Laplace { scale } => Some((-x.abs() / scale).exp() / (2.0 * scale)),
            NoiseFamily::SymmetrizedGamma { shape, scale } if shape == 1.0 => {
                Some((-x.abs() / scale).exp() / (2.0 * scale))
            }
            NoiseFamily::SymmetrizedGamma { .. } => None,
        }
    }
}

/// Product error law `η(x) = Π η_i(x_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub dims: Vec<NoiseFamily>,
}

impl NoiseModel {
    pub fn new(dims: Vec<NoiseFamily>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::config("noise model needs at least one dimension"));
        }
        for family in &dims {
            family.validate()?;
        }
        Ok(Self { dims })
    }

    /// Noiseless law in `d` dimensions.
    pub fn dirac(d: usize) -> Self {
        Self {
            dims: vec![NoiseFamily::Dirac; d],
        }
    }

    pub fn laplace(d: usize, scale: f64) -> Result<Self> {
        Self::new(vec![NoiseFamily::Laplace { scale }; d])
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn is_dirac(&self) -> bool {
        self.dims.iter().all(NoiseFamily::is_dirac)
    }

    /// `F[η_dim](t)`.
    pub fn cf_eval(&self, t: f64, dim: usize) -> Result<f64> {
        let family = self.dims.get(dim).ok_or_else(|| {
            Error::precondition(format!(
                "dimension {dim} out of range for a {}-dimensional noise model",
                self.dim()
            ))
        })?;
        Ok(family.cf(t))
    }

    /// Full characteristic function at a frequency vector.
    pub fn cf_product(&self, t: &[f64]) -> Result<f64> {
        if t.len() != self.dim() {
            return Err(Error::precondition("frequency vector has the wrong dimension"));
        }
        Ok(self.dims.iter().zip(t).map(|(f, &ti)| f.cf(ti)).product())
    }

    pub fn decay_exponents(&self) -> Vec<f64> {
        self.dims.iter().map(NoiseFamily::beta).collect()
    }

    /// True when every non-degenerate coordinate has `beta > 1/2`.
    pub fn suits_deconvolution(&self) -> bool {
        self.dims.iter().all(|f| f.is_dirac() || f.beta() > 0.5)
    }

    /// Draws `count` i.i.d. rows, row-major `count × d`.
    pub fn sample_noise(&self, count: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(count, &mut rng)
    }

    pub(crate) fn sample_with(&self, count: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; count * d];
        for row in out.chunks_exact_mut(d) {
            for (value, family) in row.iter_mut().zip(&self.dims) {
                *value = draw(family, rng);
            }
        }
        out
    }
}

fn draw(family: &NoiseFamily, rng: &mut ChaCha8Rng) -> f64 {
    match *family {
        NoiseFamily::Dirac => 0.0,
        NoiseFamily::Laplace { scale } => {
            let e: f64 = Exp::new(1.0 / scale).expect("validated scale").sample(rng);
            let flip: bool = rand::Rng::gen(rng);
            if flip {
                e
            } else {
                -e
            }
        }
        NoiseFamily::SymmetrizedGamma { shape, scale } => {
            let gamma = Gamma::new(shape, scale).expect("validated gamma parameters");
            gamma.sample(rng) - gamma.sample(rng)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::composite;

    fn laplace(scale: f64) -> NoiseModel {
        NoiseModel::laplace(1, scale).unwrap()
    }

    #[test]
    fn cf_at_zero_is_one() {
        let model = NoiseModel::new(vec![
            NoiseFamily::Dirac,
            NoiseFamily::Laplace { scale: 0.3 },
            NoiseFamily::SymmetrizedGamma {
                shape: 0.75,
                scale: 2.0,
            },
        ])
        .unwrap();
        for dim in 0..3 {
            assert_eq!(model.cf_eval(0.0, dim).unwrap(), 1.0);
        }
        assert!(model.cf_eval(1.0, 3).is_err());
    }

    #[test]
    fn laplace_cf_closed_form() {
        let model = laplace(0.7);
        for &t in &[0.5, 1.0, 3.0, 12.0] {
            let expected = 1.0 / (1.0 + 0.49 * t * t);
            assert!((model.cf_eval(t, 0).unwrap() - expected).abs() < 1e-15);
        }
        assert_eq!(model.decay_exponents(), vec![2.0]);
    }

    #[test]
    fn dirac_is_identically_one() {
        let model = NoiseModel::dirac(2);
        assert_eq!(model.cf_eval(123.0, 1).unwrap(), 1.0);
        assert_eq!(model.decay_exponents(), vec![0.0, 0.0]);
        assert_eq!(model.sample_noise(5, 9), vec![0.0; 10]);
    }

    #[test]
    fn mixed_exponents() {
        let model =
            NoiseModel::new(vec![NoiseFamily::Dirac, NoiseFamily::Laplace { scale: 1.0 }]).unwrap();
        assert_eq!(model.decay_exponents(), vec![0.0, 2.0]);
        assert!(model.suits_deconvolution());
    }

    #[test]
    fn unknown_tag_is_config_error() {
        assert!(matches!(
            NoiseFamily::from_tag("cauchy", 1.0, None),
            Err(Error::Config(_))
        ));
        assert!(NoiseFamily::from_tag("symmetrized-gamma", 1.0, None).is_err());
        let f = NoiseFamily::from_tag("symmetrized-gamma", 1.0, Some(3.0)).unwrap();
        assert_eq!(f.beta(), 3.0);
    }

    #[test]
    fn cf_matches_fourier_quadrature_of_laplace_density() {
        let family = NoiseFamily::Laplace { scale: 0.8 };
        for &t in &[0.0, 0.3, 1.0, 2.5, 7.0] {
            // even density: F = 2 ∫_0^∞ cos(tx) η(x) dx
            let q = 2.0
                * composite(0.0, 60.0, 4000, |x| {
                    (t * x).cos() * family.density(x).unwrap()
                });
            let cf = family.cf(t);
            assert!(((q - cf) / cf).abs() < 1e-6, "t={t}: {q} vs {cf}");
        }
    }

    #[test]
    fn cf_matches_quadrature_for_symmetrized_gamma() {
        // density of G1 - G2 by convolution of Gamma densities
        let (shape, scale) = (1.5f64, 0.5f64);
        let norm = 1.0 / (libm_gamma(shape) * scale.powf(shape));
        let gamma_pdf = |y: f64| {
            if y <= 0.0 {
                0.0
            } else {
                norm * y.powf(shape - 1.0) * (-y / scale).exp()
            }
        };
        let density = |x: f64| {
            let x = x.abs();
            // y = v² removes the square-root singularity at the origin
            composite(0.0, 40f64.sqrt(), 120, |v| 2.0 * v * gamma_pdf(v * v) * gamma_pdf(v * v + x))
        };
        let family = NoiseFamily::SymmetrizedGamma { shape, scale };
        for &t in &[0.0, 0.5, 1.0, 2.0] {
            let q = 2.0 * composite(0.0, 40.0, 120, |x| (t * x).cos() * density(x));
            let cf = family.cf(t);
            assert!(((q - cf) / cf).abs() < 1e-6, "t={t}: {q} vs {cf}");
        }
    }

    // Γ(1.5) = √π / 2 is the only value the test needs.
    fn libm_gamma(x: f64) -> f64 {
        assert_eq!(x, 1.5);
        std::f64::consts::PI.sqrt() / 2.0
    }

    #[test]
    fn two_sided_decay_bound() {
        for family in [
            NoiseFamily::Laplace { scale: 1.0 },
            NoiseFamily::SymmetrizedGamma {
                shape: 0.75,
                scale: 0.5,
            },
        ] {
            let beta = family.beta();
            let ratios: Vec<f64> = (0..=60)
                .map(|i| 10f64.powf(1.0 + 3.0 * i as f64 / 60.0))
                .map(|t| family.cf(t) * t.powf(beta))
                .collect();
            let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ratios.iter().cloned().fold(0.0, f64::max);
            assert!(lo > 0.0 && hi / lo < 1.5, "{family:?}: {lo} {hi}");
        }
    }

    #[test]
    fn laplace_sample_moments() {
        let n = 100_000;
        let draws = laplace(1.0).sample_noise(n, 42);
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * 2f64.sqrt() / (n as f64).sqrt());
        assert!((var - 2.0).abs() < 0.1);
    }

    #[test]
    fn sampling_is_reproducible() {
        let model = NoiseModel::new(vec![
            NoiseFamily::Laplace { scale: 0.2 },
            NoiseFamily::SymmetrizedGamma {
                shape: 2.0,
                scale: 0.1,
            },
        ])
        .unwrap();
        let a = model.sample_noise(1000, 7);
        let b = model.sample_noise(1000, 7);
        assert_eq!(a, b);
        assert_ne!(a, model.sample_noise(1000, 8));
    }
}
