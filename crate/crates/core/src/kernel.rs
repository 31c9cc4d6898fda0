//! Product kernels whose one-dimensional Fourier profile has compact support.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{composite, NodeSet};

/// Shape of `F[K_j]` on `[0, M]`; the profile is even in `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case")]
pub enum Profile {
    /// `1` on `[0, r]`, a polynomial smoothstep of odd `degree` on `[r, M]`, `0` beyond.
    FlatTop {
        radius: f64,
        support: f64,
        degree: u32,
    },
    /// `exp(-s²/(2 width²))` cut off at `M`.
    TruncatedGaussian { width: f64, support: f64 },
}

/// One-dimensional kernel profile, used identically in every coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub profile: Profile,
    /// `F[K](0)`; equals `∫K`.
    pub gain: f64,
    #[serde(skip)]
    taper: Vec<f64>,
}

impl Default for KernelSpec {
    fn default() -> Self {
        build_kernel(0.5, 4.0, 15).expect("default kernel parameters are valid")
    }
}

/// Flat-top spec: `F[K] = 1` on `[-r, r]`, tapered to `0` at `±M`.
///
/// `degree` must be odd; a taper of degree `2p + 1` is `C^p` at both junctions.
pub fn build_kernel(radius: f64, support: f64, degree: u32) -> Result<KernelSpec> {
    if !(radius > 0.0 && radius.is_finite() && support.is_finite()) {
        return Err(Error::config("flat radius and support must be positive and finite"));
    }
    if radius >= support {
        return Err(Error::config(format!(
            "flat radius {radius} must be smaller than the support bound {support}"
        )));
    }
    if degree % 2 == 0 || degree > 41 {
        return Err(Error::config(format!(
            "taper degree must be odd and at most 41, got {degree}"
        )));
    }
    Ok(KernelSpec {
        profile: Profile::FlatTop {
            radius,
            support,
            degree,
        },
        gain: 1.0,
        taper: smoothstep_coefficients(degree),
    })
}

impl KernelSpec {
    pub fn truncated_gaussian(width: f64, support: f64) -> Result<Self> {
        if !(width > 0.0 && support > 0.0 && width.is_finite() && support.is_finite()) {
            return Err(Error::config("gaussian width and support must be positive"));
        }
        Ok(Self {
            profile: Profile::TruncatedGaussian { width, support },
            gain: 1.0,
            taper: Vec::new(),
        })
    }

    /// Same profile multiplied by `gain`.
    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    /// Restores the taper coefficients after deserialization.
    pub fn rebuilt(&self) -> Result<Self> {
        let base = match self.profile {
            Profile::FlatTop {
                radius,
                support,
                degree,
            } => build_kernel(radius, support, degree)?,
            Profile::TruncatedGaussian { width, support } => {
                Self::truncated_gaussian(width, support)?
            }
        };
        Ok(base.with_gain(self.gain))
    }

    pub fn support(&self) -> f64 {
        match self.profile {
            Profile::FlatTop { support, .. } | Profile::TruncatedGaussian { support, .. } => {
                support
            }
        }
    }

    /// Radius of the region on which the profile is constant, `0` if there is none.
    pub fn flat_radius(&self) -> f64 {
        match self.profile {
            Profile::FlatTop { radius, .. } => radius,
            Profile::TruncatedGaussian { .. } => 0.0,
        }
    }

    /// `F[K_j](s)`.
    pub fn fourier(&self, s: f64) -> f64 {
        self.gain * self.shape(s.abs())
    }

    fn shape(&self, s: f64) -> f64 {
        match self.profile {
            Profile::FlatTop {
                radius, support, ..
            } => {
                if s <= radius {
                    1.0
                } else if s >= support {
                    0.0
                } else {
                    smoothstep(self.taper.len() - 1, (support - s) / (support - radius))
                }
            }
            Profile::TruncatedGaussian { width, support } => {
                if s > support {
                    0.0
                } else {
                    (-0.5 * (s / width).powi(2)).exp()
                }
            }
        }
    }

    /// Pieces of `[0, M]` on which the profile is smooth.
    pub(crate) fn pieces(&self) -> Vec<(f64, f64)> {
        match self.profile {
            Profile::FlatTop {
                radius, support, ..
            } => vec![(0.0, radius), (radius, support)],
            Profile::TruncatedGaussian { support, .. } => vec![(0.0, support)],
        }
    }

    /// Real-space kernel `K_j(u) = (1/π) ∫_0^M F(s) cos(us) ds`.
    pub fn real_space(&self, u: f64) -> f64 {
        let u = u.abs();
        match self.profile {
            Profile::FlatTop {
                radius, support, ..
            } => {
                let flat = if u < 1e-8 {
                    radius * (1.0 - (radius * u).powi(2) / 6.0) / PI
                } else {
                    (radius * u).sin() / (PI * u)
                };
                let len = support - radius;
                let panels = oscillation_panels(u, len);
                let taper = composite(radius, support, panels, |s| {
                    self.shape(s) * (u * s).cos()
                });
                self.gain * (flat + taper / PI)
            }
            Profile::TruncatedGaussian { support, .. } => {
                let panels = oscillation_panels(u, support) + 2;
                self.gain * composite(0.0, support, panels, |s| self.shape(s) * (u * s).cos()) / PI
            }
        }
    }

    /// Total variation of `F^{(p+1)}` over the real line, with `p` the smoothness index.
    fn derivative_variation(&self) -> Option<(usize, f64)> {
        let Profile::FlatTop {
            radius,
            support,
            degree,
        } = self.profile
        else {
            return None;
        };
        let p = ((degree - 1) / 2) as usize;
        let len = support - radius;
        let mut first = self.taper.clone();
        for _ in 0..=p {
            first = differentiate(&first);
        }
        let second = differentiate(&first);
        // chain rule for x = (M - s) / len
        let at = |c: &[f64], j: usize, s: f64| horner(c, (support - s) / len) / len.powi(j as i32);
        let jump_in = at(&first, p + 1, radius).abs();
        let jump_out = at(&first, p + 1, support).abs();
        let inner = composite(radius, support, 4000, |s| at(&second, p + 2, s).abs());
        Some((p, 2.0 * self.gain.abs() * (jump_in + jump_out + inner)))
    }
}

fn oscillation_panels(u: f64, len: f64) -> usize {
    2 + (u * len / PI).ceil() as usize
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

fn differentiate(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(k, &a)| k as f64 * a)
        .collect()
}

/// Smoothstep in Bernstein form, `P(Bin(degree, x) > degree / 2)`; all terms are positive.
fn smoothstep(degree: usize, x: f64) -> f64 {
    let y = 1.0 - x;
    ((degree + 1) / 2..=degree)
        .map(|j| {
            binomial(degree as u64, j as u64) * x.powi(j as i32) * y.powi((degree - j) as i32)
        })
        .sum()
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Monomial coefficients of the smoothstep `S(u) = u^{p+1} Σ_k C(p+k,k) C(2p+1,p-k) (-u)^k`.
fn smoothstep_coefficients(degree: u32) -> Vec<f64> {
    let p = ((degree - 1) / 2) as u64;
    let mut c = vec![0.0; degree as usize + 1];
    for k in 0..=p {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        c[(p + 1 + k) as usize] = sign * binomial(p + k, k) * binomial(2 * p + 1, p - k);
    }
    c
}

/// Outcome of [`kernel_order_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub order: usize,
    pub tol: f64,
    pub integral: f64,
    /// `∫ u^k K(u) du` for `k = 1..=order`.
    pub moments: Vec<f64>,
    pub moments_ok: Vec<bool>,
    pub integral_ok: bool,
    /// Upper estimate of `∫ |u|^{l+1} |K(u)| du`; infinite when the tail is not integrable.
    pub absolute_moment: f64,
    pub absolute_moment_finite: bool,
    /// Change of the moment table under a 25% wider summation window.
    pub achieved_error: f64,
    pub pass: bool,
}

/// Checks the order-`l` conditions for one coordinate of the kernel.
///
/// Moments are summed with a Gaussian window `exp(-u²/(2U²))`, `U = 10/r`, on a
/// uniform grid fine enough that the trapezoid rule is exact for the windowed,
/// band-limited integrand. The absolute moment is a trapezoid sum on `[-T, T]`
/// plus an integration-by-parts bound on the tail.
pub fn kernel_order_check(spec: &KernelSpec, l: usize, tol: f64) -> Result<OrderReport> {
    if l < 1 {
        return Err(Error::precondition("kernel order must be at least 1"));
    }
    let scale = match spec.profile {
        Profile::FlatTop { radius, .. } => radius,
        Profile::TruncatedGaussian { width, support } => width.min(support),
    };
    let support = spec.support();
    let window = 10.0 / scale;
    let h = PI / (2.0 * support);
    let reach = 9.0 * 1.25 * window;
    let count = (reach / h).ceil() as usize;
    let values: Vec<f64> = (0..=count).map(|j| spec.real_space(j as f64 * h)).collect();

    let windowed = |width: f64| -> Vec<f64> {
        // index 0 is ∫K, then moments 1..=l; the grid is mirrored so odd sums cancel exactly
        (0..=l)
            .map(|k| {
                if k % 2 == 1 {
                    return 0.0;
                }
                let tail: f64 = values
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(j, &v)| {
                        let u = j as f64 * h;
                        u.powi(k as i32) * v * (-0.5 * (u / width).powi(2)).exp()
                    })
                    .sum();
                let centre = if k == 0 { values[0] } else { 0.0 };
                h * (centre + 2.0 * tail)
            })
            .collect()
    };
    let coarse = windowed(window);
    let fine = windowed(1.25 * window);
    let achieved_error = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if !achieved_error.is_finite() || achieved_error > 1e-2 {
        return Err(Error::QuadratureNonConvergence {
            achieved: achieved_error,
        });
    }

    let integral = fine[0];
    let moments = fine[1..].to_vec();
    let integral_ok = (integral - 1.0).abs() <= tol;
    let moments_ok: Vec<bool> = moments.iter().map(|m| m.abs() <= tol).collect();

    let absolute_moment = absolute_moment(spec, l);
    let absolute_moment_finite = absolute_moment.is_finite();
    let pass = integral_ok
        && moments_ok.iter().all(|&ok| ok)
        && absolute_moment_finite
        && achieved_error <= tol;
    Ok(OrderReport {
        order: l,
        tol,
        integral,
        moments,
        moments_ok,
        integral_ok,
        absolute_moment,
        absolute_moment_finite,
        achieved_error,
        pass,
    })
}

fn absolute_moment(spec: &KernelSpec, l: usize) -> f64 {
    let Some((p, variation)) = spec.derivative_variation() else {
        // a profile with a jump at M gives |K(u)| ~ 1/|u|, never integrable against |u|^{l+1}
        return f64::INFINITY;
    };
    if p <= l {
        return f64::INFINITY;
    }
    let cutoff = 100.0 / spec.flat_radius().max(1e-3).min(1.0);
    let h = PI / (8.0 * spec.support());
    let count = (cutoff / h).ceil() as usize;
    let cutoff = count as f64 * h;
    let body: f64 = (1..=count)
        .map(|j| {
            let u = j as f64 * h;
            let w = if j == count { 0.5 } else { 1.0 };
            w * u.powi(l as i32 + 1) * spec.real_space(u).abs()
        })
        .sum::<f64>()
        * 2.0
        * h;
    // |K(u)| <= TV(F^{(p+1)}) / (2π |u|^{p+2})
    let tail = variation / PI * cutoff.powi(l as i32 - p as i32) / (p - l) as f64;
    body + tail
}

/// Quadrature nodes for the inverse Fourier integral over `[0, M]`.
pub(crate) fn fourier_nodes(spec: &KernelSpec, t_max: f64, refinement: usize) -> NodeSet {
    let pieces = spec.pieces();
    let panels: Vec<usize> = pieces
        .iter()
        .map(|&(a, b)| oscillation_panels(t_max, b - a) << refinement)
        .collect();
    NodeSet::composite(&pieces, &panels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothstep_endpoints() {
        for degree in [3, 5, 15] {
            let c = smoothstep_coefficients(degree);
            for i in 0..=20 {
                let x = i as f64 / 20.0;
                let d = degree as usize;
                assert!((horner(&c, x) - smoothstep(d, x)).abs() < 1e-9);
            }
            assert!(horner(&c, 0.0).abs() < 1e-14);
            assert!((horner(&c, 1.0) - 1.0).abs() < 1e-9);
            assert!((horner(&c, 0.5) - 0.5).abs() < 1e-9);
        }
        let cubic = smoothstep_coefficients(3);
        assert_eq!(cubic, vec![0.0, 0.0, 3.0, -2.0]);
    }

    #[test]
    fn profile_values() {
        let spec = build_kernel(1.0, 2.0, 3).unwrap();
        assert_eq!(spec.fourier(0.0), 1.0);
        assert_eq!(spec.fourier(3.0), 0.0);
        assert_eq!(spec.fourier(-0.7), 1.0);
        let mid = spec.fourier(1.5);
        assert!((mid - 0.5).abs() < 1e-12);
        let mut last = 1.0;
        for i in 0..=100 {
            let v = spec.fourier(1.0 + i as f64 / 100.0);
            assert!(v <= last + 1e-15 && (0.0..=1.0).contains(&v));
            last = v;
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(build_kernel(2.0, 2.0, 3), Err(Error::Config(_))));
        assert!(matches!(build_kernel(3.0, 2.0, 3), Err(Error::Config(_))));
        assert!(build_kernel(1.0, 2.0, 4).is_err());
    }

    #[test]
    fn real_space_matches_plain_quadrature() {
        let spec = build_kernel(0.5, 4.0, 15).unwrap();
        for &u in &[0.0, 0.3, 2.0, 7.5, 40.0] {
            let direct = composite(0.0, 4.0, 400, |s| spec.fourier(s) * (u * s).cos()) / PI;
            assert!((spec.real_space(u) - direct).abs() < 1e-9, "u={u}");
        }
    }

    #[test]
    fn cubic_second_moment_vanishes() {
        let spec = build_kernel(1.0, 2.0, 3).unwrap();
        let report = kernel_order_check(&spec, 2, 1e-8).unwrap();
        assert!(report.moments[1].abs() < 1e-8);
        assert!(report.integral_ok);
        // a C^1 taper leaves |u|^3 K non-integrable
        assert!(!report.absolute_moment_finite);
    }

    #[test]
    fn default_spec_is_order_five() {
        let report = kernel_order_check(&KernelSpec::default(), 5, 1e-8).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn truncated_gaussian_odd_moment() {
        let spec = KernelSpec::truncated_gaussian(1.0, 3.0).unwrap();
        let report = kernel_order_check(&spec, 1, 1e-8).unwrap();
        assert!(report.moments_ok[0]);
        assert!(!report.absolute_moment_finite);
    }

    #[test]
    fn halved_gain_fails_on_mass() {
        let spec = KernelSpec::default().with_gain(0.5);
        let report = kernel_order_check(&spec, 1, 1e-8).unwrap();
        assert!(!report.integral_ok);
        assert!((report.integral - 0.5).abs() < 1e-8);
        assert!(!report.pass);
    }
}
