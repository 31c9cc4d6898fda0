//! Hard instances for the lower bound in `d = 2`: a constant density perturbed by
//! `q²` band-limited bumps, against `g₀ ≡ 1`, under a two-component measure `Q₀`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::decision::decision_set_of;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::instance::{margin_diagnostic, GridDensityPair, Margin, Regularity, Template};
use crate::quadrature::composite;

/// `ρ(x) = (1 - cos x) / (π x²)`, whose Fourier transform is `(1 - |t|)_+`.
pub fn rho_eval(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        (1.0 - x2 / 12.0 + x2 * x2 / 360.0) / (2.0 * PI)
    } else {
        let s = (0.5 * x).sin();
        2.0 * s * s / (PI * x * x)
    }
}

/// `∫_{-T}^{T} ρ` plus the asymptotic tail `(2/π)(1/T - 2/T³)`, with `T = 2π·periods`.
pub fn rho_mass(periods: usize) -> f64 {
    let t = 2.0 * PI * periods as f64;
    let body = 2.0 * composite(0.0, t, 8 * periods, rho_eval);
    body + 2.0 / PI * (1.0 / t - 2.0 / t.powi(3))
}

fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundParams {
    pub q: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub c_star: f64,
    /// Defaults to `4π²(1 + c*)`, which puts the peak of each `ψ_j` at `(1 + c*) q^{-γ}`.
    pub c_psi: Option<f64>,
    pub offsets: (f64, f64),
    /// One flag per cell, cell `j = p_1 + q p_2`.
    pub signs: Vec<bool>,
}

impl LowerBoundParams {
    pub fn all_ones(q: usize, alpha: f64, gamma: f64) -> Self {
        Self {
            q,
            alpha,
            gamma,
            c_star: 0.5,
            c_psi: None,
            offsets: (6.0, 6.0),
            signs: vec![true; q * q],
        }
    }
}

/// Pointwise formulas of the construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundShape {
    pub q: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub c_star: f64,
    pub c_psi: f64,
    pub offsets: (f64, f64),
    pub signs: Vec<bool>,
    /// `k ω = q^{-αγ}`.
    pub k_omega: f64,
    /// Height of the correction bump that restores `∫ φ dQ₀ = 1`.
    pub bump_height: f64,
}

impl LowerBoundShape {
    pub fn new(params: &LowerBoundParams) -> Result<Self> {
        let q = params.q;
        if q < 2 {
            return Err(Error::config("lower-bound grid parameter q must be at least 2"));
        }
        if params.signs.len() != q * q {
            return Err(Error::config(format!(
                "sign vector has {} entries, expected q² = {}",
                params.signs.len(),
                q * q
            )));
        }
        if !(params.alpha >= 0.0 && params.gamma > 0.0 && params.c_star > 0.0) {
            return Err(Error::config("need alpha >= 0, gamma > 0 and c* > 0"));
        }
        let (a, b) = params.offsets;
        if a.min(b) < 2.0 {
            return Err(Error::config("offsets must keep the correction bump away from K"));
        }
        let qf = q as f64;
        let k_omega = qf.powf(-params.alpha * params.gamma);
        let c_psi = params
            .c_psi
            .unwrap_or(4.0 * PI * PI * (1.0 + params.c_star));
        let mut shape = Self {
            q,
            alpha: params.alpha,
            gamma: params.gamma,
            c_star: params.c_star,
            c_psi,
            offsets: params.offsets,
            signs: params.signs.clone(),
            k_omega,
            bump_height: 0.0,
        };
        let bump_mass = shape.bump_mass();
        shape.bump_height = params.c_star * qf.powf(-params.gamma) / bump_mass;
        Ok(shape)
    }

    pub fn k(&self) -> usize {
        self.q * self.q
    }

    pub fn omega(&self) -> f64 {
        self.k_omega / self.k() as f64
    }

    fn scale(&self) -> f64 {
        (self.q as f64).powf(-self.gamma)
    }

    pub fn centre(&self, p: usize) -> f64 {
        (2 * p + 1) as f64 / (2 * self.q) as f64
    }

    /// One-dimensional factor `ρ(2πq(x - z_p)) cos(4πq(x - z_p))`.
    pub fn factor(&self, p: usize, x: f64) -> f64 {
        let u = x - self.centre(p);
        let w = 2.0 * PI * self.q as f64;
        rho_eval(w * u) * (2.0 * w * u).cos()
    }

    pub fn psi(&self, j: usize, x: &[f64]) -> f64 {
        let (p1, p2) = (j % self.q, j / self.q);
        self.scale() * self.c_psi * self.factor(p1, x[0]) * self.factor(p2, x[1])
    }

    pub fn mu(&self, x: &[f64]) -> f64 {
        let (a, b) = self.offsets;
        self.k_omega * rho_eval(x[0] - 0.5) * rho_eval(x[1] - 0.5)
            + (1.0 - self.k_omega) * rho_eval(x[0] - a) * rho_eval(x[1] - b)
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        let (a, b) = self.offsets;
        1.0 - self.c_star * self.scale() + self.bump_height * bump(x[0] - a) * bump(x[1] - b)
    }

    fn perturbation(&self, x: &[f64]) -> f64 {
        let f1: Vec<f64> = (0..self.q).map(|p| self.factor(p, x[0])).collect();
        let f2: Vec<f64> = (0..self.q).map(|p| self.factor(p, x[1])).collect();
        let mut acc = 0.0;
        for (j, &on) in self.signs.iter().enumerate() {
            if on {
                acc += f1[j % self.q] * f2[j / self.q];
            }
        }
        self.scale() * self.c_psi * acc
    }

    pub fn f_sigma(&self, x: &[f64]) -> f64 {
        self.phi(x) + self.perturbation(x)
    }

    /// `f_σ - g₀`; on `[0,1]²` the correction bump vanishes identically.
    pub fn nu(&self, x: &[f64]) -> f64 {
        let (a, b) = self.offsets;
        let bump_term = self.bump_height * bump(x[0] - a) * bump(x[1] - b);
        self.perturbation(x) - self.c_star * self.scale() + bump_term
    }

    /// `∫∫ bump(x₁ - a) bump(x₂ - b) μ(x) dx`, separably.
    fn bump_mass(&self) -> f64 {
        let (a, b) = self.offsets;
        let one = |c: f64, centre: f64| {
            composite(c - 1.0, c + 1.0, 64, |u| bump(u - c) * rho_eval(u - centre))
        };
        self.k_omega * one(a, 0.5) * one(b, 0.5) + (1.0 - self.k_omega) * one(a, a) * one(b, b)
    }

    /// `∫ ρ(2πq(x - z_p)) cos(4πq(x - z_p)) ρ(x - c) dx` over a window of half-width `reach`.
    pub fn factor_moment(&self, p: usize, c: f64, reach: f64) -> f64 {
        let z = self.centre(p);
        let lo = z.min(c) - reach;
        let hi = z.max(c) + reach;
        let panels = ((hi - lo) * 6.0 * self.q as f64).ceil() as usize + 8;
        composite(lo, hi, panels, |x| self.factor(p, x) * rho_eval(x - c))
    }

    /// `∫ ψ_j dQ₀`, split as the `μ₀` and `μ₁` contributions.
    pub fn psi_moments(&self, j: usize) -> (f64, f64) {
        let (p1, p2) = (j % self.q, j / self.q);
        let (a, b) = self.offsets;
        let amp = self.scale() * self.c_psi;
        let reach = 200.0;
        let mu0 = amp * self.k_omega * self.factor_moment(p1, 0.5, reach) * self.factor_moment(p2, 0.5, reach);
        let mu1 = amp
            * (1.0 - self.k_omega)
            * self.factor_moment(p1, a, reach)
            * self.factor_moment(p2, b, reach);
        (mu0, mu1)
    }

    /// `∫ f_σ dQ₀` over the plane, by separable quadrature.
    pub fn total_mass(&self) -> f64 {
        let rho = rho_mass(64);
        let base = (1.0 - self.c_star * self.scale()) * rho * rho;
        let bumps = self.bump_height * self.bump_mass();
        let perturbation: f64 = (0..self.k())
            .filter(|&j| self.signs[j])
            .map(|j| {
                let (m0, m1) = self.psi_moments(j);
                m0 + m1
            })
            .sum();
        base + bumps + perturbation
    }
}

/// Sign agreement of the bumps on sampled nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignCoherence {
    pub checked: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundInstance {
    pub shape: LowerBoundShape,
    pub pair: GridDensityPair,
}

/// Tabulates `φ`, `f_σ`, `μ` and `g₀ ≡ 1` on the grid of `[0,1]²`.
pub fn make_lower_bound_instance(
    params: &LowerBoundParams,
    grid: Grid,
) -> Result<LowerBoundInstance> {
    if grid.d != 2 {
        return Err(Error::config("the lower-bound family is defined for d = 2"));
    }
    let shape = LowerBoundShape::new(params)?;
    let q = shape.q;
    let n = grid.nodes;
    let coords: Vec<f64> = (0..n).map(|i| grid.coord(i)).collect();
    // separable tabulation of the one-dimensional factors
    let table: Vec<Vec<f64>> = (0..q)
        .map(|p| coords.iter().map(|&x| shape.factor(p, x)).collect())
        .collect();
    let amp = shape.scale() * shape.c_psi;
    let offset = shape.c_star * shape.scale();
    let mut nu = vec![0.0; grid.len()];
    for (j, _) in shape.signs.iter().enumerate().filter(|(_, &on)| on) {
        let (p1, p2) = (j % q, j / q);
        for i2 in 0..n {
            let row = table[p2][i2];
            for i1 in 0..n {
                nu[i1 + n * i2] += table[p1][i1] * row;
            }
        }
    }
    nu.iter_mut().for_each(|v| *v = amp * *v - offset);
    let f: Vec<f64> = nu.iter().map(|v| 1.0 + v).collect();
    if let Some(min) = f.iter().cloned().reduce(f64::min) {
        if min < 0.0 {
            return Err(Error::Validity(format!(
                "f_sigma reaches {min:.3e} on the grid; reduce c_psi"
            )));
        }
    }
    let mu = grid.tabulate(|x| shape.mu(x));
    let bayes = decision_set_of(&nu);

    let mut lipschitz: f64 = 0.0;
    for i in 0..grid.len() {
        for j in grid.neighbours(i) {
            lipschitz = lipschitz.max((nu[i] - nu[j]).abs() / grid.step());
        }
    }
    let rho_half = rho_eval(0.5);
    let c0 = shape.k_omega.recip() / (4.0 * PI * PI * rho_half * rho_half);
    let mut pair = GridDensityPair {
        grid,
        f,
        g: vec![1.0; grid.len()],
        mu,
        nu_star: nu,
        margin: Margin {
            alpha: shape.alpha,
            c2: f64::NAN,
            t0: shape.c_star * shape.scale(),
        },
        regularity: Regularity {
            gamma: shape.gamma,
            lipschitz,
        },
        bayes,
        template: Template::LowerBound(Box::new(shape.clone())),
        c0: Some(c0),
        normalized_on_k: false,
    };
    let scan = default_margin_scan(&shape);
    let diag = margin_diagnostic(&pair, &scan)?;
    pair.margin.c2 = diag.smallest_constant(shape.alpha);
    Ok(LowerBoundInstance { shape, pair })
}

/// Geometric scan of `t` from `0.01` to `0.2` times `q^{-γ}`.
pub fn default_margin_scan(shape: &LowerBoundShape) -> Vec<f64> {
    let s = shape.scale();
    (0..=20)
        .map(|i| s * 0.01 * 20f64.powf(i as f64 / 20.0))
        .collect()
}

impl LowerBoundInstance {
    /// Checks `ψ_j ψ_{j'} >= 0` at every `stride`-th node for all pairs `j ≠ j'`.
    pub fn sign_coherence(&self, stride: usize) -> SignCoherence {
        let grid = &self.pair.grid;
        let shape = &self.shape;
        let peak = shape.scale() * shape.c_psi / (4.0 * PI * PI);
        let tol = 1e-12 * peak * peak;
        let mut checked = 0;
        let mut violations = 0;
        for flat in (0..grid.len()).step_by(stride.max(1)) {
            let x = grid.point(flat);
            let values: Vec<f64> = (0..shape.k()).map(|j| shape.psi(j, &x)).collect();
            for j in 0..values.len() {
                for jp in j + 1..values.len() {
                    checked += 1;
                    if values[j] * values[jp] < -tol {
                        violations += 1;
                    }
                }
            }
        }
        SignCoherence {
            checked,
            violations,
        }
    }

    /// Largest node-wise gap between `f_σ - g₀` and `Σ σ_l ψ_l - c* q^{-γ}`.
    pub fn difference_gap(&self) -> f64 {
        let grid = &self.pair.grid;
        let shape = &self.shape;
        (0..grid.len())
            .map(|i| {
                let x = grid.point(i);
                let direct: f64 = (0..shape.k())
                    .filter(|&j| shape.signs[j])
                    .map(|j| shape.psi(j, &x))
                    .sum::<f64>()
                    - shape.c_star * shape.scale();
                (self.pair.f[i] - self.pair.g[i] - direct).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_values() {
        assert!((rho_eval(0.0) - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!((rho_eval(PI) - 2.0 / PI.powi(3)).abs() < 1e-15);
        // the series and the closed form agree across the switch
        let a = rho_eval(0.999e-4);
        let b = rho_eval(1.001e-4);
        assert!((a - b).abs() < 1e-12);
        assert_eq!(rho_eval(-2.0), rho_eval(2.0));
    }

    #[test]
    fn rho_has_unit_mass() {
        assert!((rho_mass(64) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn all_zero_signs() {
        let mut params = LowerBoundParams::all_ones(4, 1.0, 1.0);
        params.signs = vec![false; 16];
        let inst = make_lower_bound_instance(&params, Grid::new(2, 64).unwrap()).unwrap();
        assert_eq!(inst.pair.bayes.count(), 0);
        let expected = -0.5 / 4.0;
        assert!(inst.pair.nu_star.iter().all(|&v| (v - expected).abs() < 1e-15));
    }

    #[test]
    fn weights_and_validity() {
        let params = LowerBoundParams::all_ones(4, 1.0, 1.0);
        let inst = make_lower_bound_instance(&params, Grid::new(2, 128).unwrap()).unwrap();
        assert!((inst.shape.k_omega - 0.25).abs() < 1e-15);
        assert!((inst.shape.k() as f64 * inst.shape.omega() - 0.25).abs() < 1e-15);
        assert!(inst.pair.f.iter().all(|&v| v >= 0.0));
        assert!(inst.difference_gap() < 1e-14);
        assert!(inst.pair.check().pass);
        assert_eq!(inst.sign_coherence(97).violations, 0);
        assert!(inst.pair.bayes.count() > 0);
    }

    #[test]
    fn oversized_bumps_are_rejected() {
        let mut params = LowerBoundParams::all_ones(2, 1.0, 0.2);
        params.c_psi = Some(1e4);
        let err = make_lower_bound_instance(&params, Grid::new(2, 64).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Validity(_)));
    }

    #[test]
    fn rejects_bad_configuration() {
        let mut params = LowerBoundParams::all_ones(4, 1.0, 1.0);
        params.signs.pop();
        assert!(LowerBoundShape::new(&params).is_err());
        let params = LowerBoundParams::all_ones(4, 1.0, 1.0);
        assert!(make_lower_bound_instance(&params, Grid::new(1, 64).unwrap()).is_err());
    }
}
