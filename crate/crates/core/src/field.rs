//! Smoothed set functionals `h_{G,λ}(z) = ∫_G λ^{-1} K_η((z - x)/λ) dx` on an extended grid.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::decision::DecisionSet;
use crate::deconv::DeconvKernel;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Values on `shape[j] = nodes + 2 reach[j]` nodes per dimension.
///
/// Node `e` along dimension `j` sits at `(e - reach[j] + 0.5) * step`, so the
/// grid of `K` is embedded with a margin of `reach[j]` nodes on each side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub shape: Vec<usize>,
    pub reach: Vec<usize>,
    pub step: f64,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn constant(grid: &Grid, reach: &[usize], value: f64) -> Self {
        let shape: Vec<usize> = reach.iter().map(|r| grid.nodes + 2 * r).collect();
        let len = shape.iter().product();
        Self {
            shape,
            reach: reach.to_vec(),
            step: grid.step(),
            values: vec![value; len],
        }
    }

    /// Values at the nodes of `K` only, in grid order.
    pub fn restrict(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len())
            .map(|flat| {
                let idx = grid.multi_index(flat);
                let mut e = 0;
                for j in (0..self.dim()).rev() {
                    e = e * self.shape[j] + idx[j] + self.reach[j];
                }
                self.values[e]
            })
            .collect()
    }

    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Lower corner index and fractional offsets of `z`, or `None` outside the extended grid.
    fn locate(&self, z: &[f64]) -> Option<(Vec<usize>, Vec<f64>)> {
        let mut base = Vec::with_capacity(self.dim());
        let mut frac = Vec::with_capacity(self.dim());
        for (j, &zj) in z.iter().enumerate() {
            let p = zj / self.step - 0.5 + self.reach[j] as f64;
            let last = (self.shape[j] - 1) as f64;
            if !(p >= 0.0 && p <= last) {
                return None;
            }
            let i = (p.floor() as usize).min(self.shape[j].saturating_sub(2));
            base.push(i);
            frac.push(p - i as f64);
        }
        Some((base, frac))
    }

    /// Multilinear weights `(flat index, weight)` of the corners around `z`.
    pub(crate) fn stencil(&self, z: &[f64]) -> Option<Vec<(usize, f64)>> {
        let (base, frac) = self.locate(z)?;
        let d = self.dim();
        let mut out = Vec::with_capacity(1 << d);
        for corner in 0..(1usize << d) {
            let mut flat = 0;
            let mut weight = 1.0;
            for j in (0..d).rev() {
                let up = (corner >> j) & 1 == 1;
                let i = base[j] + usize::from(up);
                flat = flat * self.shape[j] + i;
                weight *= if up { frac[j] } else { 1.0 - frac[j] };
            }
            out.push((flat, weight));
        }
        Some(out)
    }
}

/// Multilinear interpolation of the field at `z`.
pub fn h_eval(field: &ScalarField, z: &[f64]) -> Result<f64> {
    if z.len() != field.dim() {
        return Err(Error::precondition("evaluation point has the wrong dimension"));
    }
    let stencil = field
        .stencil(z)
        .ok_or(Error::Extrapolation { count: 1, total: 1 })?;
    Ok(stencil.iter().map(|&(i, w)| w * field.values[i]).sum())
}

/// Evaluates the field at every row of `points` (row-major, `d` columns).
pub fn h_eval_many(field: &ScalarField, points: &[f64]) -> Result<Vec<f64>> {
    let d = field.dim();
    let total = points.len() / d;
    let mut out = Vec::with_capacity(total);
    let mut outside = 0;
    for z in points.chunks_exact(d) {
        match field.stencil(z) {
            Some(st) => out.push(st.iter().map(|&(i, w)| w * field.values[i]).sum()),
            None => outside += 1,
        }
    }
    if outside > 0 {
        return Err(Error::Extrapolation {
            count: outside,
            total,
        });
    }
    Ok(out)
}

/// `h_{G,λ}` at every node of the extended grid.
///
/// Midpoint rule over the cells of `G`, evaluated as a separable full
/// convolution of the mask with the rescaled kernel samples.
pub fn h_field(kernel: &DeconvKernel, set: &DecisionSet, grid: &Grid) -> Result<ScalarField> {
    check_geometry(kernel, grid)?;
    if set.len() != grid.len() {
        return Err(Error::precondition("decision set does not match the grid"));
    }
    let data: Vec<f64> = set.mask.iter().map(|&b| f64::from(u8::from(b))).collect();
    let reach: Vec<usize> = kernel.dims.iter().map(|t| t.reach).collect();
    let mut shape = vec![grid.nodes; grid.d];
    let mut values = data;
    for (axis, table) in kernel.dims.iter().enumerate() {
        let w = table.weights(grid.step());
        let (v, s) = convolve_axis(&values, &shape, axis, &w, Mode::Full);
        values = v;
        shape = s;
    }
    Ok(ScalarField {
        shape,
        reach,
        step: grid.step(),
        values,
    })
}

pub(crate) fn check_geometry(kernel: &DeconvKernel, grid: &Grid) -> Result<()> {
    if kernel.dim() != grid.d {
        return Err(Error::precondition(format!(
            "{}-dimensional kernel on a {}-dimensional grid",
            kernel.dim(),
            grid.d
        )));
    }
    if (kernel.step - grid.step()).abs() > 1e-15 * grid.step() {
        return Err(Error::precondition(
            "kernel was sampled for a different grid step",
        ));
    }
    Ok(())
}

/// Accumulates multilinear hat weights of `points` onto the extended grid of `kernel`.
pub(crate) fn linear_binning(
    points: &[f64],
    grid: &Grid,
    reach: &[usize],
) -> Result<ScalarField> {
    let mut field = ScalarField::constant(grid, reach, 0.0);
    let total = points.len() / grid.d;
    let mut outside = 0;
    for z in points.chunks_exact(grid.d) {
        match field.stencil(z) {
            Some(st) => {
                for (i, w) in st {
                    field.values[i] += w;
                }
            }
            None => outside += 1,
        }
    }
    if outside > 0 {
        return Err(Error::Extrapolation {
            count: outside,
            total,
        });
    }
    Ok(field)
}

/// For binned sample weights `B` on the extended grid, returns
/// `Σ_e B[e] Π_j w_j[e_j - reach_j - i_j]` at every node `i` of `K`.
pub(crate) fn correlate_to_grid(binned: &ScalarField, kernel: &DeconvKernel) -> Vec<f64> {
    let mut shape = binned.shape.clone();
    let mut values = binned.values.clone();
    for (axis, table) in kernel.dims.iter().enumerate() {
        let w = table.weights(binned.step);
        let (v, s) = convolve_axis(&values, &shape, axis, &w, Mode::Valid);
        values = v;
        shape = s;
    }
    values
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Mode {
    /// Output length `L + 2R`.
    Full,
    /// Output length `L - 2R`: only positions where the kernel fits.
    Valid,
}

/// Convolves every line along `axis` with the odd-length symmetric filter `w`.
pub(crate) fn convolve_axis(
    data: &[f64],
    shape: &[usize],
    axis: usize,
    w: &[f64],
    mode: Mode,
) -> (Vec<f64>, Vec<usize>) {
    let len = shape[axis];
    let r = w.len() / 2;
    let out_len = match mode {
        Mode::Full => len + 2 * r,
        Mode::Valid => len - 2 * r,
    };
    let mut out_shape = shape.to_vec();
    out_shape[axis] = out_len;
    let stride: usize = shape[..axis].iter().product();
    let out_stride = stride;
    let outer: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; out_shape.iter().product()];

    let mut engine = LineConvolver::new(len, w, mode);
    let mut line = vec![0.0; len];
    let mut result = vec![0.0; out_len];
    for o in 0..outer {
        for inner in 0..stride {
            let base = o * len * stride + inner;
            for (k, slot) in line.iter_mut().enumerate() {
                *slot = data[base + k * stride];
            }
            engine.apply(&line, &mut result);
            let out_base = o * out_len * out_stride + inner;
            for (k, &v) in result.iter().enumerate() {
                out[out_base + k * out_stride] = v;
            }
        }
    }
    (out, out_shape)
}

struct LineConvolver {
    w: Vec<f64>,
    mode: Mode,
    fft: Option<FftPath>,
}

struct FftPath {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    filter: Vec<Complex<f64>>,
    buffer: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl LineConvolver {
    fn new(len: usize, w: &[f64], mode: Mode) -> Self {
        let full = len + w.len() - 1;
        let fft = if len * w.len() > 1 << 15 {
            let size = full.next_power_of_two();
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(size);
            let inverse = planner.plan_fft_inverse(size);
            let mut filter: Vec<Complex<f64>> = w
                .iter()
                .map(|&v| Complex::new(v, 0.0))
                .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
                .take(size)
                .collect();
            forward.process(&mut filter);
            let scratch_len = forward
                .get_inplace_scratch_len()
                .max(inverse.get_inplace_scratch_len());
            Some(FftPath {
                forward,
                inverse,
                filter,
                buffer: vec![Complex::new(0.0, 0.0); size],
                scratch: vec![Complex::new(0.0, 0.0); scratch_len],
            })
        } else {
            None
        };
        Self {
            w: w.to_vec(),
            mode,
            fft,
        }
    }

    fn apply(&mut self, line: &[f64], out: &mut [f64]) {
        let offset = match self.mode {
            Mode::Full => 0,
            Mode::Valid => self.w.len() - 1,
        };
        match &mut self.fft {
            None => {
                out.iter_mut().for_each(|v| *v = 0.0);
                for (k, slot) in out.iter_mut().enumerate() {
                    let p = k + offset;
                    // full index p = i + q with q the filter index
                    let lo = p.saturating_sub(self.w.len() - 1);
                    let hi = p.min(line.len() - 1);
                    let mut acc = 0.0;
                    for i in lo..=hi {
                        acc += line[i] * self.w[p - i];
                    }
                    *slot = acc;
                }
            }
            Some(path) => {
                let size = path.buffer.len();
                for (slot, &v) in path.buffer.iter_mut().zip(line) {
                    *slot = Complex::new(v, 0.0);
                }
                for slot in path.buffer[line.len()..].iter_mut() {
                    *slot = Complex::new(0.0, 0.0);
                }
                path.forward
                    .process_with_scratch(&mut path.buffer, &mut path.scratch);
                for (b, f) in path.buffer.iter_mut().zip(&path.filter) {
                    *b *= f;
                }
                path.inverse
                    .process_with_scratch(&mut path.buffer, &mut path.scratch);
                let scale = 1.0 / size as f64;
                for (k, slot) in out.iter_mut().enumerate() {
                    *slot = path.buffer[k + offset].re * scale;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deconv::{build_plain_kernel, DEFAULT_HALF_WIDTH};
    use crate::kernel::KernelSpec;
    use crate::decision::decision_set_of;

    fn direct_full(line: &[f64], w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; line.len() + w.len() - 1];
        for (i, &a) in line.iter().enumerate() {
            for (q, &b) in w.iter().enumerate() {
                out[i + q] += a * b;
            }
        }
        out
    }

    #[test]
    fn fft_and_direct_agree() {
        let line: Vec<f64> = (0..300).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let w: Vec<f64> = (0..201).map(|i| (-(i as f64 - 100.0).powi(2) / 500.0).exp()).collect();
        let expected = direct_full(&line, &w);
        for mode in [Mode::Full, Mode::Valid] {
            let mut fast = LineConvolver::new(line.len(), &w, mode);
            assert!(fast.fft.is_some());
            let mut slow = LineConvolver::new(line.len(), &w, mode);
            slow.fft = None;
            let n = match mode {
                Mode::Full => line.len() + 200,
                Mode::Valid => line.len() - 200,
            };
            let mut a = vec![0.0; n];
            let mut b = vec![0.0; n];
            fast.apply(&line, &mut a);
            slow.apply(&line, &mut b);
            let offset = if mode == Mode::Full { 0 } else { 200 };
            for k in 0..n {
                assert!((a[k] - b[k]).abs() < 1e-10);
                assert!((b[k] - expected[k + offset]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_set_gives_zero_field() {
        let grid = Grid::new(1, 256).unwrap();
        let dk = build_plain_kernel(&KernelSpec::default(), &[0.05], grid.step(), 12.0).unwrap();
        let field = h_field(&dk, &DecisionSet::empty(grid.len()), &grid).unwrap();
        assert!(field.values.iter().all(|&v| v == 0.0));
        assert_eq!(field.shape, vec![256 + 2 * dk.dims[0].reach]);
    }

    #[test]
    fn full_set_small_bandwidth() {
        let grid = Grid::new(1, 2048).unwrap();
        let dk = build_plain_kernel(&KernelSpec::default(), &[0.01], grid.step(), DEFAULT_HALF_WIDTH)
            .unwrap();
        let field = h_field(&dk, &DecisionSet::full(grid.len()), &grid).unwrap();
        assert!((h_eval(&field, &[0.5]).unwrap() - 1.0).abs() < 1e-3);

        let half = decision_set_of(&grid.tabulate(|x| 0.5 - x[0]));
        let field = h_field(&dk, &half, &grid).unwrap();
        assert!((h_eval(&field, &[0.25]).unwrap() - 1.0).abs() < 1e-3);
        assert!(h_eval(&field, &[0.75]).unwrap().abs() < 1e-3);
    }

    #[test]
    fn interpolation_identities() {
        let grid = Grid::new(1, 16).unwrap();
        let mut field = ScalarField::constant(&grid, &[2], 0.0);
        for (i, v) in field.values.iter_mut().enumerate() {
            *v = (i * i) as f64;
        }
        // node e sits at (e - 2 + 0.5) / 16
        let node = |e: f64| (e - 1.5) / 16.0;
        assert_eq!(h_eval(&field, &[node(5.0)]).unwrap(), 25.0);
        let mid = h_eval(&field, &[node(5.5)]).unwrap();
        assert!((mid - 30.5).abs() < 1e-12);
        assert!(matches!(
            h_eval(&field, &[node(-0.5)]),
            Err(Error::Extrapolation { .. })
        ));
        assert!(h_eval(&field, &[node(19.0)]).is_ok());
        assert!(h_eval(&field, &[node(19.01)]).is_err());

        let grid2 = Grid::new(2, 8).unwrap();
        let c = ScalarField::constant(&grid2, &[1, 3], 2.5);
        for z in [[0.0, 0.0], [0.33, 0.71], [1.05, -0.3]] {
            assert!((h_eval(&c, &z).unwrap() - 2.5).abs() < 1e-14);
        }
    }

    #[test]
    fn restrict_picks_interior_nodes() {
        let grid = Grid::new(2, 4).unwrap();
        let mut field = ScalarField::constant(&grid, &[1, 2], 0.0);
        let width = field.shape[0];
        for (i, v) in field.values.iter_mut().enumerate() {
            *v = i as f64;
        }
        let inner = field.restrict(&grid);
        assert_eq!(inner[0], (2 * width + 1) as f64);
        assert_eq!(inner.len(), 16);
    }

    #[test]
    fn many_points_reports_outside_count() {
        let grid = Grid::new(1, 8).unwrap();
        let field = ScalarField::constant(&grid, &[1], 1.0);
        match h_eval_many(&field, &[0.5, 3.0, -4.0, 0.1]) {
            Err(Error::Extrapolation { count, total }) => {
                assert_eq!((count, total), (2, 4));
            }
            other => panic!("{other:?}"),
        }
    }
}
