//! Problem instances: densities `f`, `g` and the measure `Q` tabulated on the grid of `K`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decision::{decision_set_of, dist_delta, dist_fg, DecisionSet};
use crate::erm::Sample;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::lower_bound::LowerBoundShape;
use crate::noise::NoiseModel;

/// Analytic form of `ν* = f - g`, for evaluation off the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Template {
    /// `slope · (x_1 - 1/2)`.
    LinearRamp { slope: f64 },
    /// `curvature · (‖x - centre‖² - offset)`.
    QuadraticBowl {
        curvature: f64,
        centre: Vec<f64>,
        offset: f64,
    },
    /// `amplitude · cos(2π frequency x_1 - phase)`.
    ShiftedCosine {
        amplitude: f64,
        frequency: u32,
        phase: f64,
    },
    LowerBound(Box<LowerBoundShape>),
}

impl Template {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Template::LinearRamp { slope } => slope * (x[0] - 0.5),
            Template::QuadraticBowl {
                curvature,
                centre,
                offset,
            } => {
                let r2: f64 = x.iter().zip(centre).map(|(a, c)| (a - c).powi(2)).sum();
                curvature * (r2 - offset)
            }
            Template::ShiftedCosine {
                amplitude,
                frequency,
                phase,
            } => amplitude * (2.0 * std::f64::consts::PI * *frequency as f64 * x[0] - phase).cos(),
            Template::LowerBound(shape) => shape.nu(x),
        }
    }
}

/// `Q{x ∈ K : |f - g| <= t} <= c2 t^alpha` for `t < t0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub alpha: f64,
    pub c2: f64,
    pub t0: f64,
}

/// Hölder exponent and constant of `ν*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularity {
    pub gamma: f64,
    pub lipschitz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensityPair {
    pub grid: Grid,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    /// Density of `Q` with respect to Lebesgue measure, at the nodes.
    pub mu: Vec<f64>,
    pub nu_star: Vec<f64>,
    pub margin: Margin,
    pub regularity: Regularity,
    pub bayes: DecisionSet,
    pub template: Template,
    /// Declared bound on `max μ / min_K μ`, when `μ` is not constant.
    pub c0: Option<f64>,
    /// Whether `f` and `g` carry all their `Q`-mass inside `K`.
    pub normalized_on_k: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SmoothKind {
    LinearRamp { slope: f64 },
    QuadraticBowl { curvature: f64 },
    ShiftedCosine {
        amplitude: f64,
        frequency: u32,
        phase: f64,
    },
}

/// Pairs `f = 1 + ν*/2`, `g = 1 - ν*/2` with Lebesgue `Q` on `K`.
///
/// Each template has zero mean over the grid, so both densities integrate to one.
pub fn make_smooth_instance(kind: SmoothKind, grid: Grid) -> Result<GridDensityPair> {
    let d = grid.d;
    let (template, margin, regularity) = match kind {
        SmoothKind::LinearRamp { slope } => {
            let margin = if slope == 0.0 {
                Margin {
                    alpha: 0.0,
                    c2: 1.0,
                    t0: f64::INFINITY,
                }
            } else {
                Margin {
                    alpha: 1.0,
                    c2: 2.0 / slope.abs(),
                    t0: slope.abs() / 2.0,
                }
            };
            (
                Template::LinearRamp { slope },
                margin,
                Regularity {
                    gamma: 1.0,
                    lipschitz: slope.abs(),
                },
            )
        }
        SmoothKind::QuadraticBowl { curvature } => {
            if curvature <= 0.0 {
                return Err(Error::config("quadratic bowl needs a positive curvature"));
            }
            let centre = vec![0.5; d];
            let points = grid.points();
            let offset = points
                .chunks_exact(d)
                .map(|x| x.iter().map(|v| (v - 0.5).powi(2)).sum::<f64>())
                .sum::<f64>()
                / grid.len() as f64;
            let s = offset.sqrt();
            let margin = match d {
                1 => Margin {
                    alpha: 1.0,
                    c2: 2.0 * std::f64::consts::SQRT_2 / (curvature * s),
                    t0: curvature * offset,
                },
                2 => Margin {
                    alpha: 1.0,
                    c2: 2.0 * std::f64::consts::PI / curvature,
                    t0: curvature * (0.25 - offset),
                },
                _ => {
                    return Err(Error::config(
                        "quadratic bowl margin constants are only derived for d <= 2",
                    ))
                }
            };
            let radius = (d as f64).sqrt() / 2.0;
            (
                Template::QuadraticBowl {
                    curvature,
                    centre,
                    offset,
                },
                margin,
                Regularity {
                    gamma: 1.0,
                    lipschitz: 2.0 * curvature * radius,
                },
            )
        }
        SmoothKind::ShiftedCosine {
            amplitude,
            frequency,
            phase,
        } => {
            if amplitude <= 0.0 || frequency == 0 || frequency as usize * 2 >= grid.nodes {
                return Err(Error::config(
                    "shifted cosine needs a positive amplitude and 0 < 2 frequency < nodes",
                ));
            }
            (
                Template::ShiftedCosine {
                    amplitude,
                    frequency,
                    phase,
                },
                Margin {
                    alpha: 1.0,
                    c2: 1.0 / amplitude,
                    t0: amplitude,
                },
                Regularity {
                    gamma: 1.0,
                    lipschitz: 2.0 * std::f64::consts::PI * frequency as f64 * amplitude,
                },
            )
        }
    };

    let nu = grid.tabulate(|x| template.eval(x));
    let mut f: Vec<f64> = nu.iter().map(|v| 1.0 + 0.5 * v).collect();
    let mut g: Vec<f64> = nu.iter().map(|v| 1.0 - 0.5 * v).collect();
    if f.iter().chain(&g).any(|&v| v < 0.0) {
        return Err(Error::config(
            "instance parameters make f or g negative on the grid",
        ));
    }
    let cell = grid.cell_volume();
    let mass_f: f64 = f.iter().sum::<f64>() * cell;
    let mass_g: f64 = g.iter().sum::<f64>() * cell;
    f.iter_mut().for_each(|v| *v /= mass_f);
    g.iter_mut().for_each(|v| *v /= mass_g);
    let nu_star: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a - b).collect();
    let bayes = decision_set_of(&nu_star);
    Ok(GridDensityPair {
        grid,
        f,
        g,
        mu: vec![1.0; grid.len()],
        nu_star,
        margin,
        regularity,
        bayes,
        template,
        c0: None,
        normalized_on_k: true,
    })
}

/// Outcome of the instance invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceChecks {
    pub mass_f: f64,
    pub mass_g: f64,
    pub normalized: bool,
    pub nonnegative: bool,
    pub bayes_consistent: bool,
    pub mu_ratio: f64,
    pub c0_ok: bool,
    pub pass: bool,
}

impl GridDensityPair {
    pub fn dim(&self) -> usize {
        self.grid.d
    }

    /// `Q`-mass of each cell.
    pub fn q_weights(&self) -> Vec<f64> {
        let cell = self.grid.cell_volume();
        self.mu.iter().map(|m| m * cell).collect()
    }

    /// `R_K(G) = ½ [∫_{K∖G} f dQ + ∫_G g dQ]`.
    pub fn population_risk(&self, set: &DecisionSet) -> f64 {
        let cell = self.grid.cell_volume();
        0.5 * set
            .mask
            .iter()
            .enumerate()
            .map(|(i, &inside)| if inside { self.g[i] } else { self.f[i] } * self.mu[i] * cell)
            .sum::<f64>()
    }

    /// `(d_{f,g}(G, G*), d_Δ(G, G*))`.
    pub fn excess(&self, set: &DecisionSet) -> Result<(f64, f64)> {
        let q = self.q_weights();
        Ok((
            dist_fg(set, &self.bayes, &self.f, &self.g, &q)?,
            dist_delta(set, &self.bayes, &q)?,
        ))
    }

    pub fn sup_nu(&self) -> f64 {
        self.nu_star.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Nodes with an axis neighbour on the other side of the Bayes boundary.
    pub fn boundary_cells(&self) -> usize {
        (0..self.grid.len())
            .filter(|&i| {
                self.grid
                    .neighbours(i)
                    .into_iter()
                    .any(|j| self.bayes.mask[j] != self.bayes.mask[i])
            })
            .count()
    }

    /// Grid-resolution slack for the set-distance bound of the margin lemma.
    pub fn resolution_slack(&self) -> f64 {
        let max_cell = self.q_weights().into_iter().fold(0.0, f64::max);
        2.0 * self.sup_nu() * max_cell * self.boundary_cells() as f64
    }

    pub fn check(&self) -> InstanceChecks {
        let q = self.q_weights();
        let mass_f: f64 = self.f.iter().zip(&q).map(|(a, w)| a * w).sum();
        let mass_g: f64 = self.g.iter().zip(&q).map(|(a, w)| a * w).sum();
        let normalized =
            !self.normalized_on_k || ((mass_f - 1.0).abs() <= 1e-6 && (mass_g - 1.0).abs() <= 1e-6);
        let nonnegative = self.f.iter().chain(&self.g).all(|&v| v >= 0.0);
        let bayes_consistent = decision_set_of(&self.nu_star) == self.bayes;
        let (lo, hi) = self
            .mu
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &m| (lo.min(m), hi.max(m)));
        let mu_ratio = hi / lo;
        let c0_ok = self.c0.map_or(true, |c0| mu_ratio <= c0);
        InstanceChecks {
            mass_f,
            mass_g,
            normalized,
            nonnegative,
            bayes_consistent,
            mu_ratio,
            c0_ok,
            pass: normalized && nonnegative && bayes_consistent && c0_ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginDiagnostic {
    pub t: Vec<f64>,
    pub measure: Vec<f64>,
    /// Log-log least-squares exponent; `+∞` when every margin set is empty.
    pub alpha_hat: f64,
    pub c2_hat: f64,
}

impl MarginDiagnostic {
    /// Smallest `c` with `measure(t) <= c t^alpha` on every scanned level.
    pub fn smallest_constant(&self, alpha: f64) -> f64 {
        self.t
            .iter()
            .zip(&self.measure)
            .map(|(&t, &m)| m / t.powf(alpha))
            .fold(0.0, f64::max)
    }

    /// Constant `ĉ2 = measure(t_max) / t_max^alpha` and whether
    /// `measure(t) <= ĉ2 t^alpha` holds across the scan.
    pub fn anchored_bound(&self, alpha: f64) -> (f64, bool) {
        let Some((&t_max, &m_max)) = self
            .t
            .iter()
            .zip(&self.measure)
            .max_by(|a, b| a.0.total_cmp(b.0))
        else {
            return (0.0, true);
        };
        let c2 = m_max / t_max.powf(alpha);
        let ok = self
            .t
            .iter()
            .zip(&self.measure)
            .all(|(&t, &m)| m <= c2 * t.powf(alpha) * (1.0 + 1e-12));
        (c2, ok)
    }
}

/// `Q{|f - g| <= t}` over the grid for each `t`, with a log-log fit.
pub fn margin_diagnostic(pair: &GridDensityPair, t_grid: &[f64]) -> Result<MarginDiagnostic> {
    if t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::precondition("margin levels must be positive"));
    }
    let q = pair.q_weights();
    let measure: Vec<f64> = t_grid
        .iter()
        .map(|&t| {
            pair.nu_star
                .iter()
                .zip(&q)
                .filter(|(v, _)| v.abs() <= t)
                .map(|(_, w)| w)
                .sum()
        })
        .collect();
    let points: Vec<(f64, f64)> = t_grid
        .iter()
        .zip(&measure)
        .filter(|(_, &m)| m > 0.0)
        .map(|(&t, &m)| (t.ln(), m.ln()))
        .collect();
    let (alpha_hat, c2_hat) = if points.len() < 2 {
        (f64::INFINITY, 0.0)
    } else {
        let (slope, intercept) = least_squares(&points);
        (slope, intercept.exp())
    };
    Ok(MarginDiagnostic {
        t: t_grid.to_vec(),
        measure,
        alpha_hat,
        c2_hat,
    })
}

pub(crate) fn least_squares(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Draws `X⁽¹⁾ ~ f dQ`, `X⁽²⁾ ~ g dQ` cell by cell with uniform jitter inside the
/// cell, then adds independent noise.
pub fn draw_sample(
    pair: &GridDensityPair,
    noise: &NoiseModel,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<Sample> {
    if n == 0 || m == 0 {
        return Err(Error::precondition("sample sizes must be at least 1"));
    }
    if !pair.normalized_on_k {
        return Err(Error::precondition(
            "sampling needs densities whose Q-mass lies inside K",
        ));
    }
    if noise.dim() != pair.dim() {
        return Err(Error::precondition("noise dimension differs from the instance"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x1 = draw_points(pair, &pair.f, n, &mut rng);
    let x2 = draw_points(pair, &pair.g, m, &mut rng);
    let e1 = noise.sample_with(n, &mut rng);
    let e2 = noise.sample_with(m, &mut rng);
    let z1 = x1.iter().zip(&e1).map(|(a, b)| a + b).collect();
    let z2 = x2.iter().zip(&e2).map(|(a, b)| a + b).collect();
    Sample::new(pair.dim(), z1, z2, x1, x2, seed)
}

fn draw_points(pair: &GridDensityPair, density: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let grid = &pair.grid;
    let mut cumulative = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    for (dens, mu) in density.iter().zip(&pair.mu) {
        acc += (dens * mu).max(0.0);
        cumulative.push(acc);
    }
    let total = acc;
    let step = grid.step();
    let mut out = Vec::with_capacity(count * grid.d);
    for _ in 0..count {
        let u: f64 = rng.gen::<f64>() * total;
        let cell = cumulative.partition_point(|&c| c <= u).min(grid.len() - 1);
        for i in grid.multi_index(cell) {
            out.push((i as f64 + rng.gen::<f64>()) * step);
        }
    }
    out
}
