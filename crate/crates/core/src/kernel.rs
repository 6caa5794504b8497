//! Kernels, the evaluation grid and boundary-corrected smoothing on `[0, 1]`.
//!
//! The smoothing weight of a design point `v` at location `u` is
//! `K_h(u, v) = c(v) h^-1 K0((u - v) / h)`, where `c(v)` makes the weight
//! integrate to one over `u` in `[0, 1]`. [`boundary_kernel_eval`] uses the
//! closed-form `c(v)`; grid-based estimators use the factor that makes the
//! trapezoid quadrature of the weights on the grid exactly one, so that
//! marginalizing a bivariate estimate recovers the univariate one to rounding
//! error. The two factors agree up to `O(G^-2)`.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Relative guard for kernel density denominators: `1e-10 / (n h)`.
pub fn density_guard(n: usize, h: f64) -> f64 {
    1e-10 / (n as f64 * h)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseKernel {
    #[default]
    Epanechnikov,
    /// Standard normal density.
    Gaussian,
}

impl BaseKernel {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            BaseKernel::Epanechnikov => {
                if u.abs() < 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            BaseKernel::Gaussian => FRAC_1_SQRT_2PI * (-0.5 * u * u).exp(),
        }
    }

    pub fn derivative(self, u: f64) -> f64 {
        match self {
            BaseKernel::Epanechnikov => {
                if u.abs() < 1.0 {
                    -1.5 * u
                } else {
                    0.0
                }
            }
            BaseKernel::Gaussian => -u * FRAC_1_SQRT_2PI * (-0.5 * u * u).exp(),
        }
    }

    /// `int_{-inf}^t K0(s) ds`.
    pub fn cdf(self, t: f64) -> f64 {
        match self {
            BaseKernel::Epanechnikov => {
                let t = t.clamp(-1.0, 1.0);
                0.5 + 0.75 * (t - t * t * t / 3.0)
            }
            BaseKernel::Gaussian => 0.5 * (1.0 + erf(t / std::f64::consts::SQRT_2)),
        }
    }

    pub fn support_radius(self) -> f64 {
        match self {
            BaseKernel::Epanechnikov => 1.0,
            BaseKernel::Gaussian => f64::INFINITY,
        }
    }

    pub fn is_compact(self) -> bool {
        self.support_radius().is_finite()
    }

    /// `int s^2 K0(s) ds`.
    pub fn second_moment(self) -> f64 {
        match self {
            BaseKernel::Epanechnikov => 0.2,
            BaseKernel::Gaussian => 1.0,
        }
    }
}

/// Equally spaced points on `[0, 1]` with trapezoid weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    pub const DEFAULT_SIZE: usize = 101;

    pub fn uniform(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 points, got {size}"
            )));
        }
        let step = 1.0 / (size - 1) as f64;
        let mut points: Vec<f64> = (0..size).map(|g| g as f64 * step).collect();
        points[size - 1] = 1.0;
        let mut weights = vec![step; size];
        weights[0] = 0.5 * step;
        weights[size - 1] = 0.5 * step;
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.len() - 1) as f64
    }

    /// Trapezoid quadrature of tabulated values over `[0, 1]`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Linear interpolation of tabulated values; `z` is clamped to `[0, 1]`.
    pub fn interpolate(&self, values: &[f64], z: f64) -> f64 {
        let last = self.len() - 1;
        let t = z.clamp(0.0, 1.0) * last as f64;
        let i = (t.floor() as usize).min(last - 1);
        let frac = t - i as f64;
        if frac == 0.0 {
            return values[i];
        }
        values[i] * (1.0 - frac) + values[i + 1] * frac
    }

    /// Half-open index range of grid points within `radius` of `center`.
    pub(crate) fn window(&self, center: f64, radius: f64) -> (usize, usize) {
        if !radius.is_finite() {
            return (0, self.len());
        }
        let last = (self.len() - 1) as f64;
        let lo = ((center - radius) * last).ceil().max(0.0);
        let hi = ((center + radius) * last).floor().min(last);
        if hi < lo {
            return (0, 0);
        }
        (lo as usize, hi as usize + 1)
    }
}

/// One bandwidth per nonparametric coordinate, on the `[0, 1]` scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Bandwidths(Vec<f64>);

impl Bandwidths {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::InvalidArgument("no bandwidths given".into()));
        }
        for &hj in &h {
            check_bandwidth(hj)?;
        }
        Ok(Self(h))
    }

    pub fn uniform(d: usize, h: f64) -> Result<Self> {
        Self::new(vec![h; d])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> f64 {
        self.0[j]
    }
}

impl TryFrom<Vec<f64>> for Bandwidths {
    type Error = Error;
    fn try_from(h: Vec<f64>) -> Result<Self> {
        Self::new(h)
    }
}

impl From<Bandwidths> for Vec<f64> {
    fn from(h: Bandwidths) -> Self {
        h.0
    }
}

pub(crate) fn check_bandwidth(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidBandwidth(h))
    }
}

/// Closed-form `c(v) = 1 / int_0^1 h^-1 K0((u - v)/h) du`.
pub fn boundary_factor(kernel: BaseKernel, v: f64, h: f64) -> f64 {
    let mass = kernel.cdf((1.0 - v) / h) - kernel.cdf(-v / h);
    1.0 / mass
}

/// `K_h(u, v) = c(v) h^-1 K0((u - v)/h)`, normalized so that it integrates to
/// one in `u` over `[0, 1]`.
pub fn boundary_kernel_eval(kernel: BaseKernel, u: f64, v: f64, h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    Ok(boundary_factor(kernel, v, h) * kernel.eval((u - v) / h) / h)
}

#[inline]
fn scaled_kernel(kernel: BaseKernel, h: f64, x: f64) -> f64 {
    kernel.eval(x / h) / h
}

/// Grid-quadrature version of the boundary factor for a design point `v`.
pub(crate) fn grid_normalizer(kernel: BaseKernel, h: f64, grid: &Grid, v: f64) -> Result<f64> {
    let (lo, hi) = grid.window(v, kernel.support_radius() * h);
    let pts = grid.points();
    let w = grid.weights();
    let mass: f64 = (lo..hi)
        .map(|g| w[g] * scaled_kernel(kernel, h, pts[g] - v))
        .sum();
    if mass > 0.0 {
        Ok(1.0 / mass)
    } else {
        Err(Error::InvalidArgument(format!(
            "bandwidth {h} is too small for grid spacing {}",
            grid.spacing()
        )))
    }
}

/// Sparse table of boundary-corrected weights `K_h(z_g, v_i)` for every
/// design point `v_i` against every grid point `z_g`.
#[derive(Clone, Debug)]
pub(crate) struct GridWeights {
    start: Vec<usize>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl GridWeights {
    pub(crate) fn new<I>(samples: I, kernel: BaseKernel, h: f64, grid: &Grid) -> Result<Self>
    where
        I: IntoIterator<Item = f64>,
    {
        check_bandwidth(h)?;
        let pts = grid.points();
        let radius = kernel.support_radius() * h;
        let mut start = Vec::new();
        let mut offsets = vec![0];
        let mut values = Vec::new();
        for v in samples {
            let c = grid_normalizer(kernel, h, grid, v)?;
            let (lo, hi) = grid.window(v, radius);
            start.push(lo);
            values.extend((lo..hi).map(|g| c * scaled_kernel(kernel, h, pts[g] - v)));
            offsets.push(values.len());
        }
        Ok(Self {
            start,
            offsets,
            values,
        })
    }

    pub(crate) fn len(&self) -> usize {
        self.start.len()
    }

    /// First grid index and the weights from there on.
    #[inline]
    pub(crate) fn row(&self, i: usize) -> (usize, &[f64]) {
        (self.start[i], &self.values[self.offsets[i]..self.offsets[i + 1]])
    }

    /// `n^-1 sum_i K_h(z_g, v_i)` at every grid point.
    pub(crate) fn density(&self, grid_len: usize) -> Vec<f64> {
        let mut q = vec![0.0; grid_len];
        for i in 0..self.len() {
            let (s, w) = self.row(i);
            for (qg, wg) in q[s..s + w.len()].iter_mut().zip(w) {
                *qg += wg;
            }
        }
        let n = self.len() as f64;
        q.iter_mut().for_each(|v| *v /= n);
        q
    }
}

/// Boundary-corrected kernel density estimate on the grid,
/// `q(z) = n^-1 sum_i K_h(z, Z_i)`, which integrates to one by quadrature.
pub fn kde_1d(samples: &[f64], h: f64, kernel: BaseKernel, grid: &Grid) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let weights = GridWeights::new(samples.iter().copied(), kernel, h, grid)?;
    Ok(weights.density(grid.len()))
}

/// Bivariate product-kernel density on the grid,
/// `q(z_j, z_k) = n^-1 sum_i K_hj(z_j, Z_ij) K_hk(z_k, Z_ik)`.
pub fn kde_2d(
    samples_j: &[f64],
    samples_k: &[f64],
    h_j: f64,
    h_k: f64,
    kernel: BaseKernel,
    grid: &Grid,
) -> Result<Array2<f64>> {
    if samples_j.len() != samples_k.len() {
        return Err(Error::DimensionMismatch(format!(
            "paired samples have lengths {} and {}",
            samples_j.len(),
            samples_k.len()
        )));
    }
    if samples_j.is_empty() {
        return Err(Error::EmptySample);
    }
    let wj = GridWeights::new(samples_j.iter().copied(), kernel, h_j, grid)?;
    let wk = GridWeights::new(samples_k.iter().copied(), kernel, h_k, grid)?;
    Ok(bivariate_density(&wj, &wk, grid.len()))
}

pub(crate) fn bivariate_density(wj: &GridWeights, wk: &GridWeights, g: usize) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((g, g));
    for i in 0..wj.len() {
        let (sj, aj) = wj.row(i);
        let (sk, ak) = wk.row(i);
        for (a, &x) in aj.iter().enumerate() {
            let mut row = q.row_mut(sj + a);
            let row = row.as_slice_mut().expect("standard layout");
            for (r, &y) in row[sk..sk + ak.len()].iter_mut().zip(ak) {
                *r += x * y;
            }
        }
    }
    q /= wj.len() as f64;
    q
}

/// Local-constant marginal regression of `responses` on one coordinate,
/// tabulated on the grid.
pub fn nw_marginal(
    responses: &[f64],
    z_col: &[f64],
    h: f64,
    kernel: BaseKernel,
    grid: &Grid,
) -> Result<Vec<f64>> {
    if responses.len() != z_col.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} responses for {} design points",
            responses.len(),
            z_col.len()
        )));
    }
    if z_col.is_empty() {
        return Err(Error::EmptySample);
    }
    let weights = GridWeights::new(z_col.iter().copied(), kernel, h, grid)?;
    let g = grid.len();
    let mut num = vec![0.0; g];
    let mut den = vec![0.0; g];
    for (i, &w_i) in responses.iter().enumerate() {
        let (s, a) = weights.row(i);
        for (k, &ak) in a.iter().enumerate() {
            num[s + k] += ak * w_i;
            den[s + k] += ak;
        }
    }
    let n = z_col.len();
    let guard = density_guard(n, h);
    num.iter()
        .zip(&den)
        .enumerate()
        .map(|(idx, (&nu, &de))| {
            if de / n as f64 <= guard {
                Err(Error::DegenerateWindow {
                    index: idx,
                    z: grid.points()[idx],
                    density: de / n as f64,
                })
            } else {
                Ok(nu / de)
            }
        })
        .collect()
}

/// Product-kernel Nadaraya-Watson smoother over all `d` coordinates at once.
///
/// Per-coordinate weights use the same grid-normalized boundary correction as
/// the backfitting estimators.
#[derive(Clone, Debug)]
pub struct ProductSmoother {
    z: Array2<f64>,
    h: Vec<f64>,
    kernel: BaseKernel,
    normalizers: Vec<Vec<f64>>,
    cells: Option<CellIndex>,
}

/// Smoothed values at data rows, plus the rows whose kernel window holds no
/// observation other than the row itself.
#[derive(Clone, Debug)]
pub struct DataSmooth {
    pub values: Vec<Vec<f64>>,
    pub isolated_rows: Vec<usize>,
}

impl ProductSmoother {
    pub fn new(z: ArrayView2<f64>, h: &Bandwidths, kernel: BaseKernel, grid: &Grid) -> Result<Self> {
        let (n, d) = z.dim();
        if n == 0 {
            return Err(Error::EmptySample);
        }
        if h.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "{} bandwidths for {d} coordinates",
                h.len()
            )));
        }
        let normalizers = (0..d)
            .map(|j| {
                z.column(j)
                    .iter()
                    .map(|&v| grid_normalizer(kernel, h.get(j), grid, v))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let cells = if kernel.is_compact() && n >= 2048 {
            Some(CellIndex::new(z, h.as_slice()))
        } else {
            None
        };
        Ok(Self {
            z: z.to_owned(),
            h: h.as_slice().to_vec(),
            kernel,
            normalizers,
            cells,
        })
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    fn guard(&self) -> f64 {
        let prod_h: f64 = self.h.iter().product();
        1e-10 / (self.n() as f64 * prod_h)
    }

    #[inline]
    fn weight(&self, i: usize, point: &[f64]) -> f64 {
        let mut w = 1.0;
        for (j, &e) in point.iter().enumerate() {
            let k = scaled_kernel(self.kernel, self.h[j], e - self.z[[i, j]]);
            if k == 0.0 {
                return 0.0;
            }
            w *= self.normalizers[j][i] * k;
        }
        w
    }

    /// Returns per-column sums `sum_i w_i W_i`, the total weight and the
    /// weight of observation `own` (if any).
    fn accumulate(&self, point: &[f64], columns: &[&[f64]], own: Option<usize>) -> (Vec<f64>, f64, f64) {
        let mut num = vec![0.0; columns.len()];
        let mut den = 0.0;
        let mut own_w = 0.0;
        let mut visit = |i: usize| {
            let w = self.weight(i, point);
            if w == 0.0 {
                return;
            }
            den += w;
            for (acc, col) in num.iter_mut().zip(columns) {
                *acc += w * col[i];
            }
            if own == Some(i) {
                own_w = w;
            }
        };
        match &self.cells {
            Some(cells) => cells.for_each_candidate(point, &mut visit),
            None => (0..self.n()).for_each(visit),
        }
        (num, den, own_w)
    }

    fn eval_sums(&self, columns: &[&[f64]], eval_points: ArrayView2<f64>) -> Result<Vec<(Vec<f64>, f64)>> {
        self.check_columns(columns)?;
        if eval_points.ncols() != self.z.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "evaluation points have {} coordinates, design has {}",
                eval_points.ncols(),
                self.z.ncols()
            )));
        }
        Ok((0..eval_points.nrows())
            .into_par_iter()
            .map(|r| {
                let point = eval_points.row(r).to_vec();
                let (num, den, _) = self.accumulate(&point, columns, None);
                (num, den)
            })
            .collect())
    }

    /// Smooths each response column at arbitrary evaluation points. Points
    /// whose local density falls below the guard are reported together.
    pub fn smooth(&self, columns: &[&[f64]], eval_points: ArrayView2<f64>) -> Result<Vec<Vec<f64>>> {
        let rows = self.eval_sums(columns, eval_points)?;
        let n = self.n() as f64;
        let guard = self.guard();
        let bad: Vec<usize> = rows
            .iter()
            .enumerate()
            .filter(|(_, (_, den))| den / n <= guard)
            .map(|(r, _)| r)
            .collect();
        if !bad.is_empty() {
            return Err(Error::DegenerateRows { rows: bad });
        }
        Ok(transpose_ratios(&rows, columns.len()))
    }

    /// Like [`smooth`](Self::smooth) but returns NaN at degenerate points.
    pub fn smooth_lenient(&self, columns: &[&[f64]], eval_points: ArrayView2<f64>) -> Result<Vec<Vec<f64>>> {
        let mut rows = self.eval_sums(columns, eval_points)?;
        let n = self.n() as f64;
        let guard = self.guard();
        for (num, den) in rows.iter_mut() {
            if *den / n <= guard {
                num.iter_mut().for_each(|v| *v = f64::NAN);
            }
        }
        Ok(transpose_ratios(&rows, columns.len()))
    }

    /// Smooths at the design rows themselves and flags rows with no
    /// neighbour inside their product window.
    pub fn smooth_at_data(&self, columns: &[&[f64]]) -> Result<DataSmooth> {
        self.check_columns(columns)?;
        let n = self.n() as f64;
        let guard = self.guard();
        let rows: Vec<(Vec<f64>, f64, f64)> = (0..self.n())
            .into_par_iter()
            .map(|i| {
                let point = self.z.row(i).to_vec();
                self.accumulate(&point, columns, Some(i))
            })
            .collect();
        let isolated_rows = rows
            .iter()
            .enumerate()
            .filter(|(_, (_, den, own))| (den - own) / n <= guard)
            .map(|(i, _)| i)
            .collect();
        let pairs: Vec<(Vec<f64>, f64)> = rows.into_iter().map(|(num, den, _)| (num, den)).collect();
        Ok(DataSmooth {
            values: transpose_ratios(&pairs, columns.len()),
            isolated_rows,
        })
    }

    fn check_columns(&self, columns: &[&[f64]]) -> Result<()> {
        for col in columns {
            if col.len() != self.n() {
                return Err(Error::DimensionMismatch(format!(
                    "response of length {} for {} design rows",
                    col.len(),
                    self.n()
                )));
            }
        }
        Ok(())
    }
}

fn transpose_ratios(rows: &[(Vec<f64>, f64)], ncols: usize) -> Vec<Vec<f64>> {
    (0..ncols)
        .map(|c| rows.iter().map(|(num, den)| num[c] / den).collect())
        .collect()
}

/// Bucket index over the first one or two coordinates for compact kernels.
#[derive(Clone, Debug)]
struct CellIndex {
    dims: usize,
    width: [f64; 2],
    counts: [usize; 2],
    cells: Vec<Vec<u32>>,
}

impl CellIndex {
    fn new(z: ArrayView2<f64>, h: &[f64]) -> Self {
        let dims = z.ncols().min(2);
        let mut width = [1.0; 2];
        let mut counts = [1; 2];
        for j in 0..dims {
            width[j] = h[j];
            counts[j] = (1.0 / h[j]).floor() as usize + 1;
        }
        let mut cells = vec![Vec::new(); counts[0] * counts[1]];
        for (i, row) in z.outer_iter().enumerate() {
            let c0 = Self::coord(row[0], width[0], counts[0]);
            let c1 = if dims > 1 { Self::coord(row[1], width[1], counts[1]) } else { 0 };
            cells[c0 * counts[1] + c1].push(i as u32);
        }
        Self {
            dims,
            width,
            counts,
            cells,
        }
    }

    fn coord(v: f64, width: f64, count: usize) -> usize {
        ((v / width).floor().max(0.0) as usize).min(count - 1)
    }

    fn for_each_candidate(&self, point: &[f64], visit: &mut impl FnMut(usize)) {
        let mut lo = [0usize; 2];
        let mut hi = [0usize; 2];
        for j in 0..self.dims {
            lo[j] = Self::coord(point[j] - self.width[j], self.width[j], self.counts[j]);
            hi[j] = Self::coord(point[j] + self.width[j], self.width[j], self.counts[j]);
        }
        for c0 in lo[0]..=hi[0] {
            for c1 in lo[1]..=hi[1] {
                for &i in &self.cells[c0 * self.counts[1] + c1] {
                    visit(i as usize);
                }
            }
        }
    }
}

/// Full-dimensional product-kernel Nadaraya-Watson estimate of
/// `E(W | Z = z)` at each evaluation point.
pub fn nw_full(
    responses: &[f64],
    z: ArrayView2<f64>,
    h: &Bandwidths,
    kernel: BaseKernel,
    grid: &Grid,
    eval_points: ArrayView2<f64>,
) -> Result<Vec<f64>> {
    let smoother = ProductSmoother::new(z, h, kernel, grid)?;
    let mut out = smoother.smooth(&[responses], eval_points)?;
    Ok(out.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Composite Simpson on a fine mesh; independent of the grid code.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
        let m = m + m % 2;
        let step = (b - a) / m as f64;
        let mut s = f(a) + f(b);
        for k in 1..m {
            let x = a + k as f64 * step;
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * step / 3.0
    }

    /// Simpson with the kernel's kinks as breakpoints.
    fn integrate_u(kernel: BaseKernel, v: f64, h: f64) -> f64 {
        let mut cuts = vec![0.0, 1.0];
        if kernel.is_compact() {
            cuts.extend([v - h, v + h].iter().filter(|c| **c > 0.0 && **c < 1.0));
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.windows(2)
            .map(|c| simpson(|u| boundary_kernel_eval(kernel, u, v, h).unwrap(), c[0], c[1], 2000))
            .sum()
    }

    #[test]
    fn epanechnikov_values() {
        let k = BaseKernel::Epanechnikov;
        assert_eq!(k.eval(0.0), 0.75);
        assert_eq!(k.eval(1.0), 0.0);
        assert_eq!(k.eval(0.5), 0.5625);
        assert_eq!(k.eval(-0.5), k.eval(0.5));
    }

    #[test]
    fn base_kernels_are_densities() {
        for k in [BaseKernel::Epanechnikov, BaseKernel::Gaussian] {
            let total = if k.is_compact() {
                simpson(|u| k.eval(u), -1.0, 1.0, 4000)
            } else {
                simpson(|u| k.eval(u), -12.0, 12.0, 20000)
            };
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
            for u in [-3.0, -0.7, 0.0, 0.2, 2.5] {
                assert!(k.eval(u) >= 0.0);
                assert_eq!(k.eval(u), k.eval(-u));
            }
        }
    }

    #[test]
    fn interior_boundary_kernel() {
        let v = boundary_kernel_eval(BaseKernel::Epanechnikov, 0.5, 0.5, 0.1).unwrap();
        assert_abs_diff_eq!(v, 7.5, epsilon = 1e-12);
        assert_eq!(boundary_factor(BaseKernel::Epanechnikov, 0.5, 0.1), 1.0);
    }

    #[test]
    fn boundary_factor_doubles_at_edge() {
        assert_abs_diff_eq!(boundary_factor(BaseKernel::Epanechnikov, 0.0, 0.1), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(boundary_factor(BaseKernel::Gaussian, 1.0, 0.1), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn boundary_kernel_rejects_bad_bandwidth() {
        assert!(matches!(
            boundary_kernel_eval(BaseKernel::Epanechnikov, 0.1, 0.1, 0.0),
            Err(Error::InvalidBandwidth(_))
        ));
        assert!(boundary_kernel_eval(BaseKernel::Epanechnikov, 0.1, 0.1, -0.2).is_err());
    }

    #[test]
    fn boundary_kernel_integrates_to_one() {
        let grid = Grid::uniform(101).unwrap();
        for kernel in [BaseKernel::Epanechnikov, BaseKernel::Gaussian] {
            for &h in &[0.05, 0.1, 0.3] {
                for &v in grid.points() {
                    let total = integrate_u(kernel, v, h);
                    assert!((total - 1.0).abs() < 1e-8, "{kernel:?} h={h} v={v}: {total}");
                }
            }
        }
    }

    #[test]
    fn grid_normalizer_converges_to_closed_form() {
        let kernel = BaseKernel::Epanechnikov;
        let errs: Vec<f64> = [51, 101, 201]
            .iter()
            .map(|&g| {
                let grid = Grid::uniform(g).unwrap();
                (grid_normalizer(kernel, 0.1, &grid, 0.03).unwrap() - boundary_factor(kernel, 0.03, 0.1)).abs()
            })
            .collect();
        // kinks of the kernel fall between nodes, so the error is not monotone in G
        assert!(errs.iter().all(|e| *e < 0.01), "{errs:?}");
    }

    #[test]
    fn grid_weights_sum_to_one() {
        let grid = Grid::uniform(101).unwrap();
        assert_abs_diff_eq!(grid.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let w = GridWeights::new([0.0, 0.013, 0.5, 0.999, 1.0], BaseKernel::Epanechnikov, 0.07, &grid).unwrap();
        for i in 0..w.len() {
            let (s, vals) = w.row(i);
            let total: f64 = vals.iter().enumerate().map(|(k, v)| v * grid.weights()[s + k]).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn kde_single_sample_is_kernel_slice() {
        let grid = Grid::uniform(101).unwrap();
        let q = kde_1d(&[0.5], 0.1, BaseKernel::Epanechnikov, &grid).unwrap();
        let c = grid_normalizer(BaseKernel::Epanechnikov, 0.1, &grid, 0.5).unwrap();
        for (g, &z) in grid.points().iter().enumerate() {
            let expect = c * BaseKernel::Epanechnikov.eval((z - 0.5) / 0.1) / 0.1;
            assert!((q[g] - expect).abs() <= 1e-14 * expect.abs().max(1.0));
            // interior point: grid factor is the closed-form one up to O(G^-2)
            let exact = boundary_kernel_eval(BaseKernel::Epanechnikov, z, 0.5, 0.1).unwrap();
            assert!((q[g] - exact).abs() < 0.03);
        }
        assert!(matches!(kde_1d(&[], 0.1, BaseKernel::Epanechnikov, &grid), Err(Error::EmptySample)));
    }

    #[test]
    fn kde_uniform_large_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let grid = Grid::uniform(101).unwrap();
        let q = kde_1d(&xs, 0.05, BaseKernel::Epanechnikov, &grid).unwrap();
        // boundary weights affect the estimate up to 2h from each edge
        let interior_err = grid
            .points()
            .iter()
            .zip(&q)
            .filter(|(z, _)| **z >= 0.1 && **z <= 0.9)
            .map(|(_, v)| (v - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(interior_err < 0.05, "{interior_err}");
        assert!(q.iter().all(|&v| v >= 0.0));
        assert_abs_diff_eq!(grid.integrate(&q), 1.0, epsilon = 0.01);
    }

    #[test]
    fn kde_2d_marginalizes_and_factorizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        let grid = Grid::uniform(41).unwrap();
        let k = BaseKernel::Epanechnikov;
        let q2 = kde_2d(&a, &b, 0.1, 0.15, k, &grid).unwrap();
        let q1 = kde_1d(&a, 0.1, k, &grid).unwrap();
        for g in 0..grid.len() {
            let row: Vec<f64> = q2.row(g).to_vec();
            assert_abs_diff_eq!(grid.integrate(&row), q1[g], epsilon = 1e-10);
        }

        let single = kde_2d(&[0.5], &[0.5], 0.1, 0.2, k, &grid).unwrap();
        let qa = kde_1d(&[0.5], 0.1, k, &grid).unwrap();
        let qb = kde_1d(&[0.5], 0.2, k, &grid).unwrap();
        for g in 0..grid.len() {
            for h in 0..grid.len() {
                assert_abs_diff_eq!(single[[g, h]], qa[g] * qb[h], epsilon = 1e-12);
            }
        }
        assert!(matches!(kde_2d(&a, &b[..10], 0.1, 0.1, k, &grid), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn kde_2d_independent_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let grid = Grid::uniform(51).unwrap();
        let q = kde_2d(&a, &b, 0.1, 0.1, BaseKernel::Epanechnikov, &grid).unwrap();
        let mut worst: f64 = 0.0;
        for (g, zg) in grid.points().iter().enumerate() {
            for (h, zh) in grid.points().iter().enumerate() {
                if (0.2..=0.8).contains(zg) && (0.2..=0.8).contains(zh) {
                    worst = worst.max((q[[g, h]] - 1.0).abs());
                }
            }
        }
        assert!(worst < 0.1, "{worst}");
    }

    #[test]
    fn nw_marginal_constant_and_single_point() {
        let grid = Grid::uniform(101).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let m = nw_marginal(&vec![2.5; 300], &z, 0.1, BaseKernel::Epanechnikov, &grid).unwrap();
        assert!(m.iter().all(|v| (v - 2.5).abs() < 1e-12));

        let wide = nw_marginal(&[3.0], &[0.4], 0.9, BaseKernel::Epanechnikov, &grid).unwrap();
        assert!(wide.iter().all(|v| (v - 3.0).abs() < 1e-12));
        let narrow = nw_marginal(&[3.0], &[0.4], 0.1, BaseKernel::Epanechnikov, &grid);
        assert!(matches!(narrow, Err(Error::DegenerateWindow { index: 0, .. })));
    }

    #[test]
    fn nw_marginal_tracks_identity() {
        let grid = Grid::uniform(101).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let h = 0.05;
        let m = nw_marginal(&z, &z, h, BaseKernel::Epanechnikov, &grid).unwrap();
        // brute force over all pairs, normalizing each weight by its own
        // trapezoid sum over the grid
        let k = BaseKernel::Epanechnikov;
        let c: Vec<f64> = z
            .iter()
            .map(|&zi| {
                let mass: f64 = grid.points().iter().zip(grid.weights()).map(|(zg, w)| w * k.eval((zg - zi) / h) / h).sum();
                1.0 / mass
            })
            .collect();
        for (g, &zg) in grid.points().iter().enumerate() {
            if !(0.1..=0.9).contains(&zg) {
                continue;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for (&zi, ci) in z.iter().zip(&c) {
                let w = ci * k.eval((zg - zi) / h);
                num += w * zi;
                den += w;
            }
            assert_abs_diff_eq!(m[g], num / den, epsilon = 1e-12);
            assert!((m[g] - zg).abs() < 5.0 * h * h + 0.01);
        }
    }

    #[test]
    fn nw_full_matches_marginal_in_one_dimension() {
        let grid = Grid::uniform(101).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let z: Vec<f64> = (0..400).map(|_| rng.random::<f64>()).collect();
        let w: Vec<f64> = z.iter().map(|v| (6.0 * v).sin() + rng.random::<f64>()).collect();
        let zmat = Array2::from_shape_vec((400, 1), z.clone()).unwrap();
        let eval = Array2::from_shape_vec((grid.len(), 1), grid.points().to_vec()).unwrap();
        let h = Bandwidths::new(vec![0.08]).unwrap();
        let full = nw_full(&w, zmat.view(), &h, BaseKernel::Epanechnikov, &grid, eval.view()).unwrap();
        let marg = nw_marginal(&w, &z, 0.08, BaseKernel::Epanechnikov, &grid).unwrap();
        for (a, b) in full.iter().zip(&marg) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let constant = nw_full(&vec![1.25; 400], zmat.view(), &h, BaseKernel::Epanechnikov, &grid, eval.view()).unwrap();
        assert!(constant.iter().all(|v| (v - 1.25).abs() < 1e-12));
    }

    #[test]
    fn nw_full_flags_isolated_points() {
        let grid = Grid::uniform(101).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut z = Array2::<f64>::zeros((400, 5));
        z.iter_mut().for_each(|v| *v = 0.5 * rng.random::<f64>());
        // one far corner observation, evaluated together with an empty region
        z.row_mut(0).fill(0.95);
        let w: Vec<f64> = (0..400).map(|i| i as f64).collect();
        let h = Bandwidths::uniform(5, 0.05).unwrap();
        let mut eval = Array2::<f64>::zeros((3, 5));
        eval.row_mut(0).fill(0.25);
        eval.row_mut(1).fill(0.8);
        eval.row_mut(2).fill(0.95);
        let err = nw_full(&w, z.view(), &h, BaseKernel::Epanechnikov, &grid, eval.view()).unwrap_err();
        match err {
            Error::DegenerateRows { rows } => assert!(rows.contains(&1) && !rows.contains(&2)),
            other => panic!("unexpected {other:?}"),
        }
        let smoother = ProductSmoother::new(z.view(), &h, BaseKernel::Epanechnikov, &grid).unwrap();
        let at_data = smoother.smooth_at_data(&[&w]).unwrap();
        assert!(at_data.isolated_rows.contains(&0));
        assert_eq!(at_data.values[0][0], 0.0);
    }

    #[test]
    fn cell_index_matches_brute_force() {
        let grid = Grid::uniform(101).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let n = 3000;
        let mut z = Array2::<f64>::zeros((n, 3));
        z.iter_mut().for_each(|v| *v = rng.random::<f64>());
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let h = Bandwidths::new(vec![0.1, 0.15, 0.3]).unwrap();
        let smoother = ProductSmoother::new(z.view(), &h, BaseKernel::Epanechnikov, &grid).unwrap();
        assert!(smoother.cells.is_some());
        let fast = smoother.smooth_at_data(&[&w]).unwrap();
        let mut brute = smoother.clone();
        brute.cells = None;
        let slow = brute.smooth_at_data(&[&w]).unwrap();
        for (a, b) in fast.values[0].iter().zip(&slow.values[0]) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn nw_marginal_is_linear(a in -5.0f64..5.0, b in -5.0f64..5.0, seed in 0u64..1000) {
            let grid = Grid::uniform(51).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
            let w1: Vec<f64> = (0..200).map(|_| rng.random::<f64>() - 0.5).collect();
            let w2: Vec<f64> = (0..200).map(|_| 3.0 * rng.random::<f64>()).collect();
            let mix: Vec<f64> = w1.iter().zip(&w2).map(|(x, y)| a * x + b * y).collect();
            let k = BaseKernel::Epanechnikov;
            let m1 = nw_marginal(&w1, &z, 0.2, k, &grid).unwrap();
            let m2 = nw_marginal(&w2, &z, 0.2, k, &grid).unwrap();
            let mm = nw_marginal(&mix, &z, 0.2, k, &grid).unwrap();
            for g in 0..grid.len() {
                prop_assert!((mm[g] - (a * m1[g] + b * m2[g])).abs() < 1e-12);
            }
        }

        #[test]
        fn kde_is_a_density(seed in 0u64..1000, h in 0.03f64..0.4) {
            let grid = Grid::uniform(101).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z: Vec<f64> = (0..50).map(|_| rng.random::<f64>().powi(2)).collect();
            let q = kde_1d(&z, h, BaseKernel::Epanechnikov, &grid).unwrap();
            prop_assert!(q.iter().all(|&v| v >= 0.0));
            prop_assert!((grid.integrate(&q) - 1.0).abs() < 1e-12);
        }
    }
}
