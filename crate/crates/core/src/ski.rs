//! Sparse plus low-rank Toeplitz operators via structured kernel interpolation.
//!
//! The low-rank part approximates `T` by `W A W^T` where `A` holds kernel
//! values between inducing points and `W` interpolates from the inducing grid
//! to the observation positions `0..n`. A short convolution supplies the
//! near-diagonal band.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::TnoConfig;
use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::rpe::Encoder;
use crate::tcore::{toeplitz_matvec_into, FftWorkspace, ToeplitzKernel};
use crate::Matrix;

/// Largest sparse filter width.
pub const MAX_FILTER_WIDTH: usize = 128;

/// Queries closer than this (in units of the spacing) to a node snap to it.
const NODE_SNAP: f64 = 1e-12;

/// Which interval the inducing grid spans for a length-`n` sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridSpan {
    /// `[0, n]`, endpoints included.
    #[default]
    Closed,
    /// `[0, n - 1]`: the first and last observation positions. With `r = n`
    /// the grid coincides with the observations and `W` is the identity.
    Observed,
}

/// Evenly spaced inducing points `p_1 < ... < p_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct InducingGrid {
    points: Vec<f64>,
    spacing: f64,
}

impl InducingGrid {
    /// `r` points evenly spaced on `[lo, hi]`, both endpoints included.
    pub fn uniform(lo: f64, hi: f64, r: usize) -> Result<Self> {
        if r < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 inducing points, got {r}"
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidParameter(format!("invalid grid interval [{lo}, {hi}]")));
        }
        let spacing = (hi - lo) / (r - 1) as f64;
        let mut points: Vec<f64> = (0..r).map(|j| lo + j as f64 * spacing).collect();
        points[r - 1] = hi;
        Ok(Self { points, spacing })
    }

    /// Grid for a length-`n` sequence. `r` may reach `n + 1` on the closed
    /// span (unit spacing) and `n` on the observed span.
    pub fn for_sequence(n: usize, r: usize, span: GridSpan) -> Result<Self> {
        let (hi, max_r) = match span {
            GridSpan::Closed => (n as f64, n + 1),
            GridSpan::Observed => ((n.max(1) - 1) as f64, n),
        };
        if r < 2 || r > max_r {
            return Err(Error::InvalidParameter(format!(
                "inducing count r = {r} must satisfy 2 <= r <= {max_r} for n = {n}"
            )));
        }
        Self::uniform(0.0, hi, r)
    }

    pub fn r(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn lo(&self) -> f64 {
        self.points[0]
    }

    pub fn hi(&self) -> f64 {
        self.points[self.points.len() - 1]
    }
}

/// `p_j = (j - 1) n / (r - 1)` on `[0, n]`.
pub fn make_inducing_grid(n: usize, r: usize) -> Result<InducingGrid> {
    InducingGrid::for_sequence(n, r, GridSpan::Closed)
}

/// `x(t) = sign(t) lambda^{|t|}`, mapping every offset into `[-1, 1]`.
pub fn inverse_time_warp(t: f64, lambda: f64) -> Result<f64> {
    check_warp_lambda(lambda)?;
    Ok(warp(t, lambda))
}

fn check_warp_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "warp lambda must lie in (0, 1), got {lambda}"
        )))
    }
}

#[inline]
fn warp(t: f64, lambda: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t.signum() * lambda.powf(t.abs())
    }
}

/// Interpolation degree `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Degree {
    #[default]
    Linear,
    Cubic,
}

impl Degree {
    pub fn order(self) -> usize {
        match self {
            Degree::Linear => 1,
            Degree::Cubic => 3,
        }
    }

    pub fn from_order(order: usize) -> Result<Self> {
        match order {
            1 => Ok(Degree::Linear),
            3 => Ok(Degree::Cubic),
            other => Err(Error::InvalidParameter(format!(
                "interpolation degree must be 1 or 3, got {other}"
            ))),
        }
    }

    /// Number of stencil nodes, `N + 1`.
    pub fn stencil(self) -> usize {
        self.order() + 1
    }
}

/// How the interpolation products are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecPath {
    /// CSR rows, `O(N)` work per row.
    #[default]
    Sparse,
    /// A materialized `n x r` matrix and dense products.
    Dense,
}

/// Sparse interpolation matrix `W` (one row per query) over an inducing grid.
#[derive(Debug, Clone)]
pub struct InterpOperator {
    grid: InducingGrid,
    degree: Degree,
    queries: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
    /// `|psi_N(q)|`: product of distances to the stencil nodes.
    psi: Vec<f64>,
    dense: Option<Matrix>,
}

/// Lagrange weights over stencil nodes placed at integer local coordinates
/// `0..k`, evaluated at local coordinate `s`.
fn lagrange_local(s: f64, k: usize, out: &mut [f64]) {
    for (j, w) in out.iter_mut().enumerate().take(k) {
        let mut v = 1.0;
        for m in 0..k {
            if m != j {
                v *= (s - m as f64) / (j as f64 - m as f64);
            }
        }
        *w = v;
    }
}

/// Per-query Lagrange weights over the `N + 1` nearest inducing points.
pub fn interpolation_weights(grid: &InducingGrid, queries: &[f64], degree: Degree) -> Result<InterpOperator> {
    let r = grid.r();
    let k = degree.stencil();
    if r < k {
        return Err(Error::InvalidParameter(format!(
            "degree {} interpolation needs at least {k} inducing points, got {r}",
            degree.order()
        )));
    }
    ensure_finite("interpolation queries", queries)?;
    let (lo, hi, h) = (grid.lo(), grid.hi(), grid.spacing());
    let tol = NODE_SNAP * (hi - lo).max(1.0);
    let mut row_ptr = Vec::with_capacity(queries.len() + 1);
    let mut cols = Vec::with_capacity(queries.len() * k);
    let mut weights = Vec::with_capacity(queries.len() * k);
    let mut psi = Vec::with_capacity(queries.len());
    let mut local = [0.0; 4];
    row_ptr.push(0);
    for &q in queries {
        if q < lo - tol || q > hi + tol {
            return Err(Error::OutsideSpan { query: q, lo, hi });
        }
        let u = ((q - lo) / h).clamp(0.0, (r - 1) as f64);
        let nearest = u.round();
        let j = (u.floor() as usize).min(r - 2);
        let base = match degree {
            Degree::Linear => j,
            Degree::Cubic => j.saturating_sub(1).min(r - 4),
        };
        let prod: f64 = (base..base + k).map(|c| (q - grid.points[c]).abs()).product();
        psi.push(prod);
        if (u - nearest).abs() <= NODE_SNAP {
            cols.push(nearest as usize);
            weights.push(1.0);
        } else {
            lagrange_local(u - base as f64, k, &mut local);
            for (c, &w) in (base..base + k).zip(&local[..k]) {
                cols.push(c);
                weights.push(w);
            }
        }
        row_ptr.push(cols.len());
    }
    Ok(InterpOperator {
        grid: grid.clone(),
        degree,
        queries: queries.to_vec(),
        row_ptr,
        cols,
        weights,
        psi,
        dense: None,
    })
}

/// Interpolation from the grid to observation positions `0, 1, ..., n - 1`.
pub fn observation_weights(grid: &InducingGrid, n: usize, degree: Degree) -> Result<InterpOperator> {
    let queries: Vec<f64> = (0..n).map(|i| i as f64).collect();
    interpolation_weights(grid, &queries, degree)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

impl InterpOperator {
    pub fn grid(&self) -> &InducingGrid {
        &self.grid
    }

    pub fn degree(&self) -> Degree {
        self.degree
    }

    pub fn queries(&self) -> &[f64] {
        &self.queries
    }

    /// Number of rows (queries).
    pub fn rows(&self) -> usize {
        self.queries.len()
    }

    /// Number of columns (inducing points).
    pub fn cols(&self) -> usize {
        self.grid.r()
    }

    /// Column indices and weights of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.weights[a..b])
    }

    /// `|psi_N(q_i)|`.
    pub fn psi(&self, i: usize) -> f64 {
        self.psi[i]
    }

    /// Lagrange remainder factor `|psi_N(q_i)| / (N + 1)!`.
    pub fn lagrange_factor(&self, i: usize) -> f64 {
        self.psi[i] / factorial(self.degree.stencil())
    }

    pub fn max_lagrange_factor(&self) -> f64 {
        (0..self.rows()).map(|i| self.lagrange_factor(i)).fold(0.0, f64::max)
    }

    pub fn exec(&self) -> ExecPath {
        if self.dense.is_some() {
            ExecPath::Dense
        } else {
            ExecPath::Sparse
        }
    }

    /// Selects the execution path; the dense path materializes `W`.
    pub fn with_exec(mut self, exec: ExecPath) -> Self {
        self.dense = match exec {
            ExecPath::Sparse => None,
            ExecPath::Dense => Some(self.to_dense()),
        };
        self
    }

    /// Materialized `rows x r` matrix.
    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows(), self.cols());
        for i in 0..self.rows() {
            let (c, w) = self.row(i);
            for (&c, &w) in c.iter().zip(w) {
                m[(i, c)] += w;
            }
        }
        m
    }

    /// `W^T x` (length `r`).
    pub fn apply_transpose(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        ensure_len("interpolation transpose input", self.rows(), x.len())?;
        ensure_len("interpolation transpose output", self.cols(), out.len())?;
        match &self.dense {
            Some(w) => {
                let mut o = nalgebra::DVectorViewMut::from_slice(out, self.cols());
                o.gemv_tr(1.0, w, &nalgebra::DVectorView::from_slice(x, self.rows()), 0.0);
            }
            None => {
                out.fill(0.0);
                for (i, &xi) in x.iter().enumerate() {
                    let (c, w) = self.row(i);
                    for (&c, &w) in c.iter().zip(w) {
                        out[c] += w * xi;
                    }
                }
            }
        }
        Ok(())
    }

    /// `W z` (length `rows`).
    pub fn apply(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        ensure_len("interpolation input", self.cols(), z.len())?;
        ensure_len("interpolation output", self.rows(), out.len())?;
        match &self.dense {
            Some(w) => {
                let mut o = nalgebra::DVectorViewMut::from_slice(out, self.rows());
                o.gemv(1.0, w, &nalgebra::DVectorView::from_slice(z, self.cols()), 0.0);
            }
            None => {
                for (i, o) in out.iter_mut().enumerate() {
                    let (c, w) = self.row(i);
                    *o = c.iter().zip(w).map(|(&c, &w)| w * z[c]).sum();
                }
            }
        }
        Ok(())
    }
}

/// Piecewise-linear RPE over the warped coordinate: `d` channels of values
/// at an odd number of nodes evenly spaced on `[-1, 1]`. The centre node sits
/// at 0 and its values are pinned to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedRpe {
    values: Matrix,
    lambda: f64,
}

impl WarpedRpe {
    pub fn zeros(nodes: usize, d: usize, lambda: f64) -> Result<Self> {
        Self::from_values(Matrix::zeros(nodes, d), lambda)
    }

    /// Node values drawn from `N(0, 0.02^2)`; the centre node stays zero.
    pub fn random<R: Rng + ?Sized>(nodes: usize, d: usize, lambda: f64, rng: &mut R) -> Result<Self> {
        let normal = Normal::new(0.0, 0.02).expect("valid normal");
        let mut values = Matrix::from_fn(nodes, d, |_, _| normal.sample(rng));
        if nodes % 2 == 1 {
            values.row_mut(nodes / 2).fill(0.0);
        }
        Self::from_values(values, lambda)
    }

    /// `values` is `nodes x d`; the centre row must be zero.
    pub fn from_values(values: Matrix, lambda: f64) -> Result<Self> {
        check_warp_lambda(lambda)?;
        let nodes = values.nrows();
        if nodes < 3 || nodes % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "warped rpe needs an odd node count >= 3, got {nodes}"
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::InvalidParameter("warped rpe needs at least one channel".into()));
        }
        ensure_finite("warped rpe values", values.as_slice())?;
        if values.row(nodes / 2).iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidParameter(
                "warped rpe value at coordinate 0 must be zero".into(),
            ));
        }
        Ok(Self { values, lambda })
    }

    pub fn nodes(&self) -> usize {
        self.values.nrows()
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn center(&self) -> usize {
        self.nodes() / 2
    }

    /// Position of node `j` in warped coordinates.
    pub fn node_position(&self, j: usize) -> f64 {
        let c = self.center();
        if j == c {
            0.0
        } else {
            (j as f64 - c as f64) / c as f64
        }
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    /// Overwrites node values, re-pinning the centre row to zero.
    pub fn set_values(&mut self, values: &Matrix) -> Result<()> {
        ensure_len("warped rpe rows", self.nodes(), values.nrows())?;
        ensure_len("warped rpe channels", self.channels(), values.ncols())?;
        ensure_finite("warped rpe values", values.as_slice())?;
        self.values.copy_from(values);
        let c = self.center();
        self.values.row_mut(c).fill(0.0);
        Ok(())
    }

    /// Bracketing nodes and weight on the upper node for warped coordinate `x`.
    pub fn bracket(&self, x: f64) -> (usize, f64) {
        let c = self.center() as f64;
        let u = ((x.clamp(-1.0, 1.0) + 1.0) * c).clamp(0.0, 2.0 * c);
        let j = (u.floor() as usize).min(self.nodes() - 2);
        (j, u - j as f64)
    }

    /// Interpolated values at warped coordinate `x`.
    pub fn eval_warped(&self, x: f64, out: &mut [f64]) {
        let (j, frac) = self.bracket(x);
        for (l, o) in out.iter_mut().enumerate() {
            let (a, b) = (self.values[(j, l)], self.values[(j + 1, l)]);
            *o = if frac == 0.0 { a } else { a + frac * (b - a) };
        }
    }

    /// `RPE(x(t))`.
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        self.eval_warped(warp(t, self.lambda), out);
    }
}

impl Encoder for WarpedRpe {
    fn width(&self) -> usize {
        self.channels()
    }

    fn encode(&self, x: f64, out: &mut [f64]) {
        self.eval(x, out)
    }
}

/// `RPE_l(x(t))` for every channel.
pub fn eval_warped_rpe(rpe: &WarpedRpe, t: f64) -> Vec<f64> {
    let mut out = vec![0.0; rpe.channels()];
    rpe.eval(t, &mut out);
    out
}

/// Tap placement of a [`SparseFilter`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    /// Odd width, centre tap at offset 0.
    Centered,
    /// Tap `k` sits at offset `k >= 0`.
    Causal,
}

/// Short 1D convolution supplying the near-diagonal band.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFilter {
    taps: Vec<f64>,
    mode: FilterMode,
}

impl SparseFilter {
    pub fn new(taps: Vec<f64>, mode: FilterMode) -> Result<Self> {
        let m = taps.len();
        if m == 0 || m > MAX_FILTER_WIDTH {
            return Err(Error::InvalidParameter(format!(
                "filter width must be in 1..={MAX_FILTER_WIDTH}, got {m}"
            )));
        }
        if mode == FilterMode::Centered && m % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "centered filter width must be odd, got {m}"
            )));
        }
        ensure_finite("filter taps", &taps)?;
        Ok(Self { taps, mode })
    }

    pub fn centered(taps: Vec<f64>) -> Result<Self> {
        Self::new(taps, FilterMode::Centered)
    }

    pub fn causal(taps: Vec<f64>) -> Result<Self> {
        Self::new(taps, FilterMode::Causal)
    }

    pub fn zeros(m: usize, mode: FilterMode) -> Result<Self> {
        Self::new(vec![0.0; m], mode)
    }

    pub fn m(&self) -> usize {
        self.taps.len()
    }

    pub fn mode(&self) -> FilterMode {
        self.mode
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn set_taps(&mut self, taps: &[f64]) -> Result<()> {
        ensure_len("filter taps", self.m(), taps.len())?;
        ensure_finite("filter taps", taps)?;
        self.taps.copy_from_slice(taps);
        Ok(())
    }

    /// Offset `delta` of tap `k`.
    pub fn offset(&self, k: usize) -> isize {
        match self.mode {
            FilterMode::Centered => k as isize - (self.m() / 2) as isize,
            FilterMode::Causal => k as isize,
        }
    }
}

/// `y_i = sum_delta f[delta] x_{i - delta}` with zero boundaries.
pub fn sparse_conv_matvec(f: &SparseFilter, x: &[f64]) -> Result<Vec<f64>> {
    let mut y = vec![0.0; x.len()];
    sparse_conv_into(f, x, &mut y)?;
    Ok(y)
}

/// Accumulating variant: adds the filter output into `y`.
fn sparse_conv_into(f: &SparseFilter, x: &[f64], y: &mut [f64]) -> Result<()> {
    ensure_len("filter output", x.len(), y.len())?;
    let n = x.len() as isize;
    for (k, &tap) in f.taps.iter().enumerate() {
        if tap == 0.0 {
            continue;
        }
        let delta = f.offset(k);
        // y_i += tap * x_{i - delta} for 0 <= i - delta < n
        let lo = delta.max(0);
        let hi = (n + delta).min(n);
        for i in lo..hi {
            y[i as usize] += tap * x[(i - delta) as usize];
        }
    }
    Ok(())
}

/// `W (A (W^T x))`, the middle product by FFT at length `r`.
pub fn ski_lowrank_matvec(
    w: &InterpOperator,
    a: &ToeplitzKernel,
    x: &[f64],
    ws: &mut FftWorkspace,
) -> Result<Vec<f64>> {
    let mut y = vec![0.0; w.rows()];
    let mut scratch = LowRankScratch::new(w.cols());
    lowrank_into(w, a, x, ws, &mut scratch, &mut y)?;
    Ok(y)
}

struct LowRankScratch {
    z: Vec<f64>,
    az: Vec<f64>,
}

impl LowRankScratch {
    fn new(r: usize) -> Self {
        Self {
            z: vec![0.0; r],
            az: vec![0.0; r],
        }
    }
}

fn lowrank_into(
    w: &InterpOperator,
    a: &ToeplitzKernel,
    x: &[f64],
    ws: &mut FftWorkspace,
    s: &mut LowRankScratch,
    y: &mut [f64],
) -> Result<()> {
    ensure_len("inducing kernel size", w.cols(), a.n())?;
    w.apply_transpose(x, &mut s.z)?;
    toeplitz_matvec_into(a, &s.z, ws, &mut s.az)?;
    w.apply(&s.az, y)
}

/// Inducing-offset kernels `A_l(delta) = RPE_l(x(delta h))` for every channel,
/// as Toeplitz kernels over the `r` inducing points.
pub fn inducing_kernels(rpe: &dyn Encoder, grid: &InducingGrid) -> Result<Vec<ToeplitzKernel>> {
    let r = grid.r();
    let m = r as isize - 1;
    let h = grid.spacing();
    let offsets: Vec<f64> = (-m..=m).map(|k| k as f64 * h).collect();
    let table = rpe.encode_batch(&offsets);
    (0..rpe.width())
        .map(|l| ToeplitzKernel::new(r, table.column(l).iter().copied().collect(), false))
        .collect()
}

/// Reusable sparse plus low-rank operator for one configuration.
#[derive(Debug)]
pub struct SkiOperator {
    w: InterpOperator,
    taps: usize,
    lambda: f64,
    ws: FftWorkspace,
    scratch_y: Vec<f64>,
}

impl SkiOperator {
    pub fn new(cfg: &TnoConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = InducingGrid::for_sequence(cfg.n, cfg.r, cfg.span)?;
        let w = observation_weights(&grid, cfg.n, cfg.degree)?.with_exec(cfg.exec);
        Ok(Self {
            w,
            taps: cfg.centered_taps(),
            lambda: cfg.lambda,
            ws: FftWorkspace::for_len(cfg.r),
            scratch_y: vec![0.0; cfg.n],
        })
    }

    pub fn interp(&self) -> &InterpOperator {
        &self.w
    }

    /// Per channel: `sparse_conv(f_l, x_l) + W A_l W^T x_l`.
    pub fn apply(&mut self, x: &Matrix, rpe: &WarpedRpe, filters: &[SparseFilter]) -> Result<Matrix> {
        let (n, d) = x.shape();
        ensure_len("sequence length", self.w.rows(), n)?;
        ensure_len("rpe channels", d, rpe.channels())?;
        ensure_len("filter count", d, filters.len())?;
        ensure_finite("sequence", x.as_slice())?;
        if rpe.lambda() != self.lambda {
            return Err(Error::InvalidParameter(format!(
                "rpe warp lambda {} differs from config lambda {}",
                rpe.lambda(),
                self.lambda
            )));
        }
        for f in filters {
            if f.mode() != FilterMode::Centered || f.m() != self.taps {
                return Err(Error::InvalidParameter(format!(
                    "expected centered filters with {} taps, got {:?} with {}",
                    self.taps,
                    f.mode(),
                    f.m()
                )));
            }
        }
        let kernels = inducing_kernels(rpe, self.w.grid())?;
        let mut scratch = LowRankScratch::new(self.w.cols());
        let mut out = Matrix::zeros(n, d);
        for l in 0..d {
            let xl = x.column(l);
            let xl = xl.as_slice();
            lowrank_into(
                &self.w,
                &kernels[l],
                xl,
                &mut self.ws,
                &mut scratch,
                &mut self.scratch_y,
            )?;
            sparse_conv_into(&filters[l], xl, &mut self.scratch_y)?;
            out.column_mut(l).copy_from_slice(&self.scratch_y);
        }
        Ok(out)
    }
}

/// Sparse plus low-rank bidirectional operator for one input.
pub fn ski_tno(x: &Matrix, cfg: &TnoConfig, rpe: &WarpedRpe, filters: &[SparseFilter]) -> Result<Matrix> {
    ensure_len("sequence length vs config", cfg.n, x.nrows())?;
    ensure_len("channels vs config", cfg.d, x.ncols())?;
    SkiOperator::new(cfg)?.apply(x, rpe, filters)
}

/// Causally masked `(L . (W A W^T)) x` via the running sum
/// `s_i = s_{i-1} + w_i x_i`, `x'_i = [W A]_i^T s_i`.
///
/// With [`ExecPath::Sparse`] each step touches only the stencil rows of `A`,
/// `O(N r)` per position. With [`ExecPath::Dense`] the `n x r` factors `W A`
/// and the running sums are materialized and combined with dense row products.
pub fn ski_causal_scan(w: &InterpOperator, a: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    let r = w.cols();
    ensure_len("inducing matrix rows", r, a.nrows())?;
    ensure_len("inducing matrix cols", r, a.ncols())?;
    ensure_len("scan input", w.rows(), x.len())?;
    let n = x.len();
    let mut y = vec![0.0; n];
    match w.exec() {
        ExecPath::Sparse => {
            // A is column-major; rows of A are gathered through A^T columns
            let at = a.transpose();
            let mut s = vec![0.0; r];
            let mut wa = vec![0.0; r];
            for i in 0..n {
                let (cols, weights) = w.row(i);
                for (&c, &wt) in cols.iter().zip(weights) {
                    s[c] += wt * x[i];
                }
                wa.fill(0.0);
                for (&c, &wt) in cols.iter().zip(weights) {
                    for (acc, &v) in wa.iter_mut().zip(at.column(c).iter()) {
                        *acc += wt * v;
                    }
                }
                y[i] = wa.iter().zip(&s).map(|(p, q)| p * q).sum();
            }
        }
        ExecPath::Dense => {
            let wd = w.dense.as_ref().expect("dense exec path holds W");
            let wa = wd * a;
            let mut sums = wd.clone();
            for (i, &xi) in x.iter().enumerate() {
                sums.row_mut(i).scale_mut(xi);
            }
            for i in 1..n {
                for c in 0..r {
                    sums[(i, c)] += sums[(i - 1, c)];
                }
            }
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = wa.row(i).dot(&sums.row(i));
            }
        }
    }
    Ok(y)
}
