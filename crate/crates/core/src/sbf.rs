//! Local-constant smooth backfitting on a grid.
//!
//! For a response `W` the fit solves, for every coordinate `j`,
//!
//! ```text
//! m_j(z_j) = m~_j(z_j) - m_0 - sum_{k != j} int m_k(z_k) q_jk(z_j, z_k) / q_j(z_j) dz_k
//! ```
//!
//! subject to `int m_j q_j = 0`, where `m~_j` is the marginal kernel regression
//! of `W` on `Z_j` and `q_j`, `q_jk` are kernel density estimates. Integrals
//! are trapezoid sums on the grid, which turns the cross terms into fixed
//! `G x G` transfer matrices computed once per design.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{bivariate_density, density_guard, BaseKernel, Bandwidths, Grid, GridWeights};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothingMethod {
    #[default]
    LocalConstant,
    LocalLinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbfConfig {
    pub bandwidths: Bandwidths,
    pub grid_size: usize,
    /// Stopping threshold on the sup-norm change of one sweep, relative to
    /// the sup-norm of the centred marginal fits of the same response.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub kernel: BaseKernel,
    pub method: SmoothingMethod,
}

impl SbfConfig {
    pub const DEFAULT_TOLERANCE: f64 = 1e-8;
    pub const DEFAULT_MAX_ITERATIONS: usize = 500;

    pub fn new(bandwidths: Bandwidths) -> Self {
        Self {
            bandwidths,
            grid_size: Grid::DEFAULT_SIZE,
            tolerance: Self::DEFAULT_TOLERANCE,
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
            kernel: BaseKernel::Epanechnikov,
            method: SmoothingMethod::LocalConstant,
        }
    }

    pub fn with_grid_size(mut self, grid_size: usize) -> Self {
        self.grid_size = grid_size;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_kernel(mut self, kernel: BaseKernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_method(mut self, method: SmoothingMethod) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.method == SmoothingMethod::LocalLinear {
            return Err(Error::NotImplemented("local-linear smooth backfitting"));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        let grid = self.grid()?;
        for &h in self.bandwidths.as_slice() {
            if h < grid.spacing() {
                return Err(Error::InvalidArgument(format!(
                    "bandwidth {h} is below the grid spacing {}; use a larger bandwidth or a finer grid",
                    grid.spacing()
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::uniform(self.grid_size)
    }
}

/// Marginal and pairwise design densities on the grid, with the derived
/// transfer matrices `T_jk[g, g'] = w_g' q_jk(z_g, z_g') / q_j(z_g)`.
#[derive(Clone, Debug)]
pub struct ProjectionOperator {
    grid: Grid,
    bandwidths: Bandwidths,
    kernel: BaseKernel,
    n: usize,
    weights: Vec<GridWeights>,
    q_marg: Vec<Vec<f64>>,
    q_biv: Vec<Array2<f64>>,
    transfer: Vec<Option<Array2<f64>>>,
}

pub fn build_projection(z: ArrayView2<f64>, config: &SbfConfig) -> Result<ProjectionOperator> {
    config.validate()?;
    let (n, d) = z.dim();
    if d == 0 {
        return Err(Error::InvalidArgument("no nonparametric coordinates".into()));
    }
    if n < 10 {
        return Err(Error::InvalidArgument(format!(
            "smooth backfitting needs at least 10 observations, got {n}"
        )));
    }
    if config.bandwidths.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "{} bandwidths for {d} coordinates",
            config.bandwidths.len()
        )));
    }
    if let Some(bad) = z.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!(
            "nonparametric covariates must lie in [0, 1], found {bad}"
        )));
    }
    let grid = config.grid()?;
    let g = grid.len();
    let weights = (0..d)
        .map(|j| GridWeights::new(z.column(j).iter().copied(), config.kernel, config.bandwidths.get(j), &grid))
        .collect::<Result<Vec<_>>>()?;
    let q_marg: Vec<Vec<f64>> = weights.iter().map(|w| w.density(g)).collect();
    for (j, q) in q_marg.iter().enumerate() {
        let guard = density_guard(n, config.bandwidths.get(j));
        if let Some(idx) = q.iter().position(|&v| v <= guard) {
            return Err(Error::SparseRegion {
                coordinate: j,
                index: idx,
                z: grid.points()[idx],
                density: q[idx],
            });
        }
    }
    let mut q_biv = Vec::with_capacity(d * (d - 1) / 2);
    for j in 0..d {
        for k in j + 1..d {
            q_biv.push(bivariate_density(&weights[j], &weights[k], g));
        }
    }
    let mut op = ProjectionOperator {
        grid,
        bandwidths: config.bandwidths.clone(),
        kernel: config.kernel,
        n,
        weights,
        q_marg,
        q_biv,
        transfer: vec![None; d * d],
    };
    for j in 0..d {
        for k in 0..d {
            if j != k {
                op.transfer[j * d + k] = Some(op.build_transfer(j, k));
            }
        }
    }
    Ok(op)
}

impl ProjectionOperator {
    pub fn d(&self) -> usize {
        self.q_marg.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn bandwidths(&self) -> &Bandwidths {
        &self.bandwidths
    }

    pub fn kernel(&self) -> BaseKernel {
        self.kernel
    }

    /// `q_j` on the grid.
    pub fn marginal(&self, j: usize) -> &[f64] {
        &self.q_marg[j]
    }

    /// Number of stored bivariate tables, `d (d - 1) / 2`.
    pub fn bivariate_count(&self) -> usize {
        self.q_biv.len()
    }

    /// `q_jk(z_j, z_k)` with rows indexed by `z_j`.
    pub fn bivariate(&self, j: usize, k: usize) -> ArrayView2<'_, f64> {
        assert!(j != k, "bivariate density needs two distinct coordinates");
        if j < k {
            self.q_biv[self.pair_index(j, k)].view()
        } else {
            self.q_biv[self.pair_index(k, j)].t()
        }
    }

    fn pair_index(&self, j: usize, k: usize) -> usize {
        let d = self.d();
        j * d - j * (j + 1) / 2 + (k - j - 1)
    }

    fn build_transfer(&self, j: usize, k: usize) -> Array2<f64> {
        let q = self.bivariate(j, k);
        let w = self.grid.weights();
        let qj = &self.q_marg[j];
        Array2::from_shape_fn(q.dim(), |(g, h)| w[h] * q[[g, h]] / qj[g])
    }

    fn transfer(&self, j: usize, k: usize) -> &Array2<f64> {
        self.transfer[j * self.d() + k].as_ref().expect("off-diagonal transfer")
    }

    /// `<f, 1>_j = int f(z) q_j(z) dz` by quadrature.
    pub fn inner_one(&self, j: usize, f: &[f64]) -> f64 {
        let w = self.grid.weights();
        f.iter().zip(w).zip(&self.q_marg[j]).map(|((f, w), q)| f * w * q).sum()
    }

    /// Marginal kernel regressions of every response column on each
    /// coordinate; entry `j` is `G x c`.
    fn marginal_fits(&self, responses: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let c = responses.ncols();
        let g = self.grid.len();
        (0..self.d())
            .map(|j| {
                let mut num = Array2::<f64>::zeros((g, c));
                let wj = &self.weights[j];
                for (i, row) in responses.outer_iter().enumerate() {
                    let (s, a) = wj.row(i);
                    for (off, &ak) in a.iter().enumerate() {
                        let mut out = num.row_mut(s + off);
                        out.scaled_add(ak, &row);
                    }
                }
                let n = self.n as f64;
                for (gi, mut r) in num.outer_iter_mut().enumerate() {
                    let q = self.q_marg[j][gi] * n;
                    r.mapv_inplace(|v| v / q);
                }
                num
            })
            .collect()
    }

    fn check_config(&self, config: &SbfConfig) -> Result<()> {
        config.validate()?;
        if config.bandwidths != self.bandwidths || config.grid_size != self.grid.len() || config.kernel != self.kernel {
            return Err(Error::InvalidArgument(
                "configuration does not match the one used to build the projection".into(),
            ));
        }
        Ok(())
    }
}

/// Intercept plus centred component functions tabulated on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AdditiveFit {
    pub m0: f64,
    pub components: Vec<Vec<f64>>,
    pub grid: Grid,
    pub iterations: usize,
    /// Last relative sup-norm change (see [`SbfConfig::tolerance`]).
    pub final_delta: f64,
    pub converged: bool,
    pub delta_history: Vec<f64>,
}

impl AdditiveFit {
    pub fn d(&self) -> usize {
        self.components.len()
    }

    pub fn component_at(&self, j: usize, zj: f64) -> f64 {
        self.grid.interpolate(&self.components[j], zj)
    }

    /// `m0 + sum_j m_j(z_j)`, interpolating linearly between grid nodes.
    pub fn evaluate(&self, z: &[f64]) -> f64 {
        debug_assert_eq!(z.len(), self.d());
        let mut total = self.m0;
        for (j, &zj) in z.iter().enumerate() {
            total += self.component_at(j, zj);
        }
        total
    }

    /// Evaluates the fit at every row of `z`.
    pub fn evaluate_rows(&self, z: ArrayView2<f64>) -> Vec<f64> {
        z.outer_iter()
            .map(|row| {
                let mut total = self.m0;
                for (j, &zj) in row.iter().enumerate() {
                    total += self.component_at(j, zj);
                }
                total
            })
            .collect()
    }

    /// `self + sum_i coef_i * others_i`, componentwise.
    pub fn combine(&self, others: &[&AdditiveFit], coefs: &[f64]) -> AdditiveFit {
        let mut out = self.clone();
        for (other, &c) in others.iter().zip(coefs) {
            out.m0 += c * other.m0;
            for (dst, src) in out.components.iter_mut().zip(&other.components) {
                for (a, b) in dst.iter_mut().zip(src) {
                    *a += c * b;
                }
            }
        }
        out
    }
}

pub fn evaluate_additive(fit: &AdditiveFit, z: &[f64]) -> f64 {
    fit.evaluate(z)
}

pub fn sbf_fit(responses: &[f64], proj: &ProjectionOperator, config: &SbfConfig) -> Result<AdditiveFit> {
    let col = ArrayView2::from_shape((responses.len(), 1), responses)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    Ok(sbf_multi(col, proj, config)?.remove(0))
}

/// Backfits every column of `responses` against the same design. The columns
/// share one sweep schedule, so the fits are exactly linear in the columns.
pub fn sbf_multi(responses: ArrayView2<f64>, proj: &ProjectionOperator, config: &SbfConfig) -> Result<Vec<AdditiveFit>> {
    let names: Vec<String> = (0..responses.ncols()).map(|c| format!("column {c}")).collect();
    sbf_multi_named(responses, &names, proj, config)
}

pub fn sbf_multi_named(
    responses: ArrayView2<f64>,
    names: &[String],
    proj: &ProjectionOperator,
    config: &SbfConfig,
) -> Result<Vec<AdditiveFit>> {
    proj.check_config(config)?;
    let (n, c) = responses.dim();
    if n != proj.n {
        return Err(Error::DimensionMismatch(format!(
            "{n} responses for a design with {} rows",
            proj.n
        )));
    }
    if c == 0 {
        return Err(Error::InvalidArgument("no response columns".into()));
    }
    let d = proj.d();
    let g = proj.grid.len();
    let m0: Vec<f64> = (0..c).map(|col| responses.column(col).sum() / n as f64).collect();
    let mut targets = proj.marginal_fits(responses);
    for t in &mut targets {
        for mut row in t.outer_iter_mut() {
            for (v, m) in row.iter_mut().zip(&m0) {
                *v -= m;
            }
        }
    }
    let scale: Vec<f64> = (0..c)
        .map(|col| {
            targets
                .iter()
                .flat_map(|t| t.column(col).to_vec())
                .fold(0.0, |a: f64, v| a.max(v.abs()))
        })
        .collect();

    let mut comps: Vec<Array2<f64>> = vec![Array2::zeros((g, c)); d];
    let mut history = Vec::new();
    let mut converged = false;
    let mut last_rel = vec![f64::INFINITY; c];
    for _sweep in 0..config.max_iterations {
        let mut change = vec![0.0f64; c];
        for j in 0..d {
            let mut next = targets[j].clone();
            for (k, comp) in comps.iter().enumerate() {
                if k != j {
                    next -= &proj.transfer(j, k).dot(comp);
                }
            }
            for col in 0..c {
                let mean = proj.inner_one(j, &next.column(col).to_vec());
                next.column_mut(col).mapv_inplace(|v| v - mean);
            }
            for ((a, b), idx) in next.iter().zip(comps[j].iter()).zip(0..) {
                let col = idx % c;
                change[col] = change[col].max((a - b).abs());
            }
            comps[j] = next;
        }
        for col in 0..c {
            last_rel[col] = if scale[col] > 0.0 { change[col] / scale[col] } else { 0.0 };
        }
        let worst = last_rel.iter().copied().fold(0.0, f64::max);
        history.push(worst);
        if worst <= config.tolerance {
            converged = true;
            break;
        }
    }
    if history.len() > 3 && history[3..].windows(2).any(|w| w[1] > w[0]) {
        log::debug!("backfitting changes were not monotone after sweep 3: {history:?}");
    }
    let final_delta = *history.last().unwrap_or(&0.0);
    if !converged {
        let failing: Vec<&str> = (0..c)
            .filter(|&col| last_rel[col] > config.tolerance)
            .map(|col| names.get(col).map(String::as_str).unwrap_or("?"))
            .collect();
        return Err(Error::NotConverged {
            column: failing.join(", "),
            iterations: history.len(),
            final_delta,
        });
    }
    Ok((0..c)
        .map(|col| AdditiveFit {
            m0: m0[col],
            components: comps.iter().map(|m| m.column(col).to_vec()).collect(),
            grid: proj.grid.clone(),
            iterations: history.len(),
            final_delta,
            converged: true,
            delta_history: history.clone(),
        })
        .collect())
}

/// Dense matrix of the discretized backfitting equations over all `d G`
/// unknowns.
///
/// The constraint `<m_j, 1> = 0` is imposed by adding `<m_j, 1>` to every
/// equation of block `j`; the term vanishes at the constrained solution and
/// removes the null space of constant shifts.
fn direct_system(proj: &ProjectionOperator) -> DMatrix<f64> {
    let d = proj.d();
    let g = proj.grid.len();
    let size = d * g;
    let w = proj.grid.weights();
    let mut a = DMatrix::<f64>::identity(size, size);
    for j in 0..d {
        let q = &proj.q_marg[j];
        for r in 0..g {
            let row = j * g + r;
            for h in 0..g {
                a[(row, j * g + h)] += w[h] * q[h];
            }
            for k in (0..d).filter(|&k| k != j) {
                let t = proj.transfer(j, k);
                for h in 0..g {
                    a[(row, k * g + h)] += t[[r, h]];
                }
            }
        }
    }
    a
}

fn check_direct_size(proj: &ProjectionOperator) -> Result<()> {
    let size = proj.d() * proj.grid.len();
    if size > 2000 {
        return Err(Error::InvalidArgument(format!(
            "direct solve limited to d*G <= 2000, got {size}"
        )));
    }
    Ok(())
}

/// 2-norm condition number of the discretized backfitting system. Large
/// values signal near concurvity among the nonparametric coordinates.
pub fn direct_condition_number(proj: &ProjectionOperator) -> Result<f64> {
    check_direct_size(proj)?;
    let sv = direct_system(proj).singular_values();
    Ok(sv.max() / sv.min())
}

/// Solves the discretized backfitting equations for all `d G` unknowns at
/// once with a dense LU factorization. Meant as a test oracle.
pub fn sbf_direct_oracle(responses: &[f64], proj: &ProjectionOperator) -> Result<AdditiveFit> {
    let n = proj.n;
    if responses.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} responses for a design with {n} rows",
            responses.len()
        )));
    }
    check_direct_size(proj)?;
    let d = proj.d();
    let g = proj.grid.len();
    let col = ArrayView2::from_shape((n, 1), responses).map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    let m0 = responses.iter().sum::<f64>() / n as f64;
    let targets = proj.marginal_fits(col);
    let rhs = DVector::from_iterator(d * g, targets.iter().flat_map(|t| t.column(0).iter().map(|v| v - m0).collect::<Vec<_>>()));
    let a = direct_system(proj);
    let sv = a.clone().singular_values();
    let cond = sv.max() / sv.min();
    if !(cond.is_finite() && cond < 1e12) {
        return Err(Error::SingularSystem(format!(
            "backfitting system has condition number {cond:e}"
        )));
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("LU factorization failed".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem("non-finite solution".into()));
    }
    Ok(AdditiveFit {
        m0,
        components: (0..d).map(|j| sol.rows(j * g, g).iter().copied().collect()).collect(),
        grid: proj.grid.clone(),
        iterations: 0,
        final_delta: 0.0,
        converged: true,
        delta_history: Vec::new(),
    })
}
