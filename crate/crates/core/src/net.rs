//! Finite nets of candidate functions `ν` around an instance template, with the
//! induced sets `G_ν = {ν >= 0}`.

use serde::{Deserialize, Serialize};

use crate::decision::{decision_set_of, DecisionSet};
use crate::error::{Error, Result};
use crate::instance::GridDensityPair;

pub const DEFAULT_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum NetFamily {
    /// `ν* - c`, `c ∈ phase + δZ` inside `range`.
    Level { range: (f64, f64) },
    /// `ν*(· - θ)`, each coordinate of `θ` in `phase + δZ` inside `range`.
    Shift { range: (f64, f64) },
    /// `ν* + Σ_k a_k φ_k` with tensor-cosine `φ_k` and `a_k ∈ phase + δZ` inside `range`.
    Coefficient { count: usize, range: (f64, f64) },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetOptions {
    pub delta: f64,
    pub gamma: f64,
    pub lipschitz: f64,
    /// Offset of the parameter lattice, usually in `[0, δ)`.
    pub phase: f64,
    pub cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetMember {
    pub params: Vec<f64>,
    pub values: Vec<f64>,
    pub set: DecisionSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisNet {
    pub family: NetFamily,
    pub delta: f64,
    pub gamma: f64,
    pub lipschitz: f64,
    pub members: Vec<NetMember>,
    /// Smallest `‖ν - ν*‖_∞` over the members.
    pub template_gap: f64,
}

impl HypothesisNet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Net made of the given sets only, with no function values attached.
    pub fn from_sets(sets: Vec<DecisionSet>) -> Self {
        Self {
            family: NetFamily::Level { range: (0.0, 0.0) },
            delta: f64::NAN,
            gamma: f64::NAN,
            lipschitz: f64::NAN,
            members: sets
                .into_iter()
                .map(|set| NetMember {
                    params: Vec::new(),
                    values: Vec::new(),
                    set,
                })
                .collect(),
            template_gap: f64::NAN,
        }
    }
}

/// Points of `phase + δZ` inside `[lo, hi]`.
pub fn lattice(lo: f64, hi: f64, delta: f64, phase: f64) -> Vec<f64> {
    let eps = 1e-9;
    let first = ((lo - phase) / delta - eps).ceil() as i64;
    let last = ((hi - phase) / delta + eps).floor() as i64;
    (first..=last).map(|k| phase + k as f64 * delta).collect()
}

/// Tensor-cosine basis: a constant, then `cos(π x_j)` per coordinate, then `cos(2π x_1)`.
fn basis(k: usize, x: &[f64]) -> f64 {
    use std::f64::consts::PI;
    match k {
        0 => 1.0,
        k if k <= x.len() => (PI * x[k - 1]).cos(),
        _ => (2.0 * PI * x[0]).cos(),
    }
}

pub fn build_net(
    family: &NetFamily,
    pair: &GridDensityPair,
    options: &NetOptions,
) -> Result<HypothesisNet> {
    let delta = options.delta;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::precondition("net spacing must be positive"));
    }
    let grid = &pair.grid;
    let d = grid.d;
    let (range, axes) = match *family {
        NetFamily::Level { range } => (range, 1),
        NetFamily::Shift { range } => (range, d),
        NetFamily::Coefficient { count, range } => {
            if !(1..=3).contains(&count) {
                return Err(Error::config("coefficient family takes 1 to 3 coefficients"));
            }
            (range, count)
        }
    };
    if range.0 > range.1 {
        return Err(Error::config("net range is empty"));
    }
    let axis = lattice(range.0, range.1, delta, options.phase);
    let cardinality = (axis.len() as u128).pow(axes as u32);
    if cardinality > options.cap as u128 {
        return Err(Error::Resource(format!(
            "net would have {cardinality} members, above the cap of {}",
            options.cap
        )));
    }
    if cardinality == 0 {
        return Err(Error::config("net range contains no lattice point"));
    }

    let points = grid.points();
    let mut members = Vec::with_capacity(cardinality as usize);
    for index in 0..cardinality as usize {
        let mut rest = index;
        let params: Vec<f64> = (0..axes)
            .map(|_| {
                let v = axis[rest % axis.len()];
                rest /= axis.len();
                v
            })
            .collect();
        let values: Vec<f64> = match family {
            NetFamily::Level { .. } => pair.nu_star.iter().map(|v| v - params[0]).collect(),
            NetFamily::Shift { .. } => points
                .chunks_exact(d)
                .map(|x| {
                    let moved: Vec<f64> = x.iter().zip(&params).map(|(a, t)| a - t).collect();
                    pair.template.eval(&moved)
                })
                .collect(),
            NetFamily::Coefficient { .. } => pair
                .nu_star
                .iter()
                .zip(points.chunks_exact(d))
                .map(|(v, x)| {
                    v + params
                        .iter()
                        .enumerate()
                        .map(|(k, a)| a * basis(k, x))
                        .sum::<f64>()
                })
                .collect(),
        };
        check_holder(&values, pair, options)?;
        let set = decision_set_of(&values);
        members.push(NetMember {
            params,
            values,
            set,
        });
    }

    let template_gap = members
        .iter()
        .map(|m| sup_distance(&m.values, &pair.nu_star))
        .fold(f64::INFINITY, f64::min);
    if template_gap > delta * (1.0 + 1e-9) {
        return Err(Error::Spacing {
            gap: template_gap,
            delta,
        });
    }
    Ok(HypothesisNet {
        family: family.clone(),
        delta,
        gamma: options.gamma,
        lipschitz: options.lipschitz,
        members,
        template_gap,
    })
}

pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// First-order surrogate: `|ν(x) - ν(y)| <= L h^{min(γ,1)}` on adjacent nodes.
fn check_holder(values: &[f64], pair: &GridDensityPair, options: &NetOptions) -> Result<()> {
    let grid = &pair.grid;
    let bound = options.lipschitz * grid.step().powf(options.gamma.min(1.0)) * (1.0 + 1e-9);
    let n = grid.nodes;
    let mut stride = 1;
    for _ in 0..grid.d {
        for i in 0..values.len() {
            if (i / stride) % n + 1 < n {
                let gap = (values[i + stride] - values[i]).abs();
                if gap > bound {
                    return Err(Error::Validity(format!(
                        "candidate increment {gap:.3e} exceeds the Hölder bound {bound:.3e}"
                    )));
                }
            }
        }
        stride *= n;
    }
    Ok(())
}
