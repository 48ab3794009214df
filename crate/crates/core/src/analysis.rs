//! Nyström reconstruction, spectral norms, the SKI error bound and
//! impulse-response decay diagnostics.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::ski::{observation_weights, Degree, InducingGrid};
use crate::Matrix;

/// Relative singular-value cutoff for pseudo-inverses.
pub const PINV_RTOL: f64 = 1e-12;

/// Smallest `sigma_r(A)` accepted by [`ski_bound_evaluate`].
pub const MIN_SIGMA_R: f64 = 1e-10;

const POWER_MAX_ITERS: usize = 500;
const POWER_RTOL: f64 = 1e-12;

/// Singular values, largest first.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Largest singular value from a full SVD.
pub fn svd_norm(m: &Matrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Pseudo-inverse dropping singular values below `rtol * sigma_1`.
pub fn pseudo_inverse(a: &Matrix, rtol: f64) -> Matrix {
    let svd = a.clone().svd(true, true);
    let s1 = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cut = rtol * s1;
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut out = Matrix::zeros(a.ncols(), a.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut && s > 0.0 {
            out += (vt.row(k).transpose() / s) * u.column(k).transpose();
        }
    }
    out
}

/// `F A^+ B`, applied through the truncated SVD of `A` as
/// `(F V) S^-1 (U^T B)` so the large entries of `A^+` never meet `F` directly.
pub fn nystrom_dense(f: &Matrix, a: &Matrix, b: &Matrix) -> Result<Matrix> {
    ensure_len("nystrom F columns", a.nrows(), f.ncols())?;
    ensure_len("nystrom B rows", a.ncols(), b.nrows())?;
    let svd = a.clone().svd(true, true);
    let s1 = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut out = Matrix::zeros(f.nrows(), b.ncols());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > PINV_RTOL * s1 && s > 0.0 {
            let left = f * vt.row(k).transpose();
            let right = u.column(k).transpose() * b;
            out += (left / s) * right;
        }
    }
    Ok(out)
}

/// Best rank-`r` approximation by SVD truncation.
pub fn best_rank(t: &Matrix, r: usize) -> Matrix {
    let svd = t.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut out = Matrix::zeros(t.nrows(), t.ncols());
    for &k in order.iter().take(r) {
        out += u.column(k) * vt.row(k) * svd.singular_values[k];
    }
    out
}

/// `sigma_1(M)` by power iteration on `M^T M` from a fixed seeded start.
pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    ensure_finite("matrix", m.as_slice())?;
    if m.is_empty() {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v = nalgebra::DVector::from_fn(m.ncols(), |_, _| rng.random_range(-1.0..1.0));
    v.normalize_mut();
    let mut lambda = 0.0;
    let mut change = f64::INFINITY;
    for _ in 0..POWER_MAX_ITERS {
        let mv = m * &v;
        let next = mv.norm_squared();
        if next == 0.0 {
            return Ok(0.0);
        }
        change = (next - lambda).abs() / next;
        lambda = next;
        if change < POWER_RTOL {
            return Ok(lambda.sqrt());
        }
        v = m.tr_mul(&mv);
        v.normalize_mut();
    }
    Err(Error::NonConvergence(change))
}

/// Smooth test kernel with analytic bounds on its derivatives.
pub struct TestKernel {
    name: String,
    f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    bound: Box<dyn Fn(usize) -> f64 + Send + Sync>,
}

impl fmt::Debug for TestKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestKernel")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

fn gamma_half_integer(k: usize) -> f64 {
    // Gamma(k / 2) for k >= 1
    if k % 2 == 0 {
        (1..k / 2).map(|v| v as f64).product()
    } else {
        let mut g = std::f64::consts::PI.sqrt();
        let mut x = 0.5;
        while x < k as f64 / 2.0 - 0.25 {
            g *= x;
            x += 1.0;
        }
        g
    }
}

/// `sup |d^m/dt^m exp(-(t/l)^2)| <= (1/2pi) l sqrt(pi) Gamma((m+1)/2) (2/l)^{m+1}`.
fn gaussian_derivative_bound(ell: f64, m: usize) -> f64 {
    ell * std::f64::consts::PI.sqrt() * gamma_half_integer(m + 1) * (2.0 / ell).powi(m as i32 + 1)
        / (2.0 * std::f64::consts::PI)
}

fn binomial(m: usize, j: usize) -> f64 {
    (0..j).map(|i| (m - i) as f64 / (i + 1) as f64).product()
}

impl TestKernel {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        bound: impl Fn(usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            f: Box::new(f),
            bound: Box::new(bound),
        }
    }

    /// `exp(-(t/l)^2)`.
    pub fn gaussian(ell: f64) -> Self {
        Self::new(
            format!("gaussian(l={ell})"),
            move |t| (-(t / ell).powi(2)).exp(),
            move |m| gaussian_derivative_bound(ell, m),
        )
    }

    /// `exp(-(t/l)^2) cos(nu t)`; derivative bound by Leibniz.
    pub fn gaussian_cosine(ell: f64, nu: f64) -> Self {
        Self::new(
            format!("gaussian-cosine(l={ell},nu={nu})"),
            move |t| (-(t / ell).powi(2)).exp() * (nu * t).cos(),
            move |m| {
                (0..=m)
                    .map(|j| binomial(m, j) * gaussian_derivative_bound(ell, j) * nu.powi((m - j) as i32))
                    .sum()
            },
        )
    }

    /// `1 / (1 + (t/l)^2)`, with `|k^(m)| <= m! / l^m`.
    pub fn inverse_quadratic(ell: f64) -> Self {
        Self::new(
            format!("inverse-quadratic(l={ell})"),
            move |t| 1.0 / (1.0 + (t / ell).powi(2)),
            move |m| (1..=m).map(|v| v as f64).product::<f64>() / ell.powi(m as i32),
        )
    }

    /// `sum_k a_k cos(nu_k t + phi_k)` with seeded amplitudes, frequencies
    /// in `[nu_lo, nu_hi]` and phases.
    pub fn cosine_sum(seed: u64, terms: usize, nu_lo: f64, nu_hi: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let comps: Vec<(f64, f64, f64)> = (0..terms)
            .map(|_| {
                (
                    rng.random_range(0.5..1.0) / terms as f64,
                    rng.random_range(nu_lo..nu_hi),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let c2 = comps.clone();
        Self::new(
            format!("cosine-sum(seed={seed},K={terms})"),
            move |t| comps.iter().map(|(a, nu, phi)| a * (nu * t + phi).cos()).sum(),
            move |m| c2.iter().map(|(a, nu, _)| a.abs() * nu.powi(m as i32)).sum(),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    /// Bound on `sup |k^(m)|`.
    pub fn derivative_bound(&self, m: usize) -> f64 {
        (self.bound)(m)
    }
}

/// The five smooth kernels of the bound suite.
pub fn bound_suite() -> Vec<TestKernel> {
    vec![
        TestKernel::gaussian(4.0),
        TestKernel::gaussian_cosine(6.0, 0.5),
        TestKernel::inverse_quadratic(4.0),
        TestKernel::cosine_sum(1, 24, 0.05, 1.5),
        TestKernel::cosine_sum(2, 24, 0.05, 1.5),
    ]
}

/// Every term of the SKI error bound for one kernel and grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBoundReport {
    pub kernel: String,
    pub n: usize,
    pub r: usize,
    pub degree: usize,
    /// `max_i |psi_N(i)| / (N + 1)!`.
    pub psi_max: f64,
    /// Bound on `|k^(N+1)|`.
    pub l_bound: f64,
    pub sigma1_f: f64,
    pub sigma1_b: f64,
    pub sigma_r_a: f64,
    pub nystrom_err: f64,
    pub ski_bound: f64,
    pub ski_err_empirical: f64,
}

impl ErrorBoundReport {
    pub fn holds(&self) -> bool {
        self.ski_err_empirical <= self.ski_bound
    }

    /// Flat `key: value` text.
    pub fn to_kv(&self) -> String {
        format!(
            "kernel: {}\nn: {}\nr: {}\ndegree: {}\npsi_max: {:e}\nL: {:e}\nsigma1_F: {:e}\nsigma1_B: {:e}\nsigma_r_A: {:e}\nnystrom_err: {:e}\nski_bound: {:e}\nski_err_empirical: {:e}\nholds: {}\n",
            self.kernel,
            self.n,
            self.r,
            self.degree,
            self.psi_max,
            self.l_bound,
            self.sigma1_f,
            self.sigma1_b,
            self.sigma_r_a,
            self.nystrom_err,
            self.ski_bound,
            self.ski_err_empirical,
            self.holds()
        )
    }

    pub const CSV_COLUMNS: [&'static str; 13] = [
        "kernel",
        "n",
        "r",
        "degree",
        "psi_max",
        "L",
        "sigma1_F",
        "sigma1_B",
        "sigma_r_A",
        "nystrom_err",
        "ski_bound",
        "ski_err_empirical",
        "holds",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.kernel.replace(',', ";"),
            self.n.to_string(),
            self.r.to_string(),
            self.degree.to_string(),
            format!("{:e}", self.psi_max),
            format!("{:e}", self.l_bound),
            format!("{:e}", self.sigma1_f),
            format!("{:e}", self.sigma1_b),
            format!("{:e}", self.sigma_r_a),
            format!("{:e}", self.nystrom_err),
            format!("{:e}", self.ski_bound),
            format!("{:e}", self.ski_err_empirical),
            (self.holds() as u8).to_string(),
        ]
    }
}

/// Evaluates the SKI error bound for observation positions `0..n` against
/// the best rank-`r` approximation of `T_ij = k(i - j)`.
pub fn ski_bound_evaluate(
    kernel: &TestKernel,
    grid: &InducingGrid,
    degree: Degree,
    n: usize,
) -> Result<ErrorBoundReport> {
    let r = grid.r();
    let p = grid.points();
    let w = observation_weights(grid, n, degree)?;
    let a = Matrix::from_fn(r, r, |i, j| kernel.eval(p[i] - p[j]));
    let f = Matrix::from_fn(n, r, |i, j| kernel.eval(i as f64 - p[j]));
    let b = Matrix::from_fn(r, n, |i, j| kernel.eval(p[i] - j as f64));
    let t = Matrix::from_fn(n, n, |i, j| kernel.eval(i as f64 - j as f64));
    let sa = singular_values(&a);
    let sigma_r_a = sa[r - 1];
    if sigma_r_a < MIN_SIGMA_R {
        return Err(Error::SingularInducing(sigma_r_a));
    }
    let t_opt = best_rank(&t, r);
    let wd = w.to_dense();
    let e_ski = &wd * &a * wd.transpose() - &t_opt;
    let e_nyst = nystrom_dense(&f, &a, &b)? - &t_opt;
    let nystrom_err = svd_norm(&e_nyst);
    let sigma1_f = svd_norm(&f);
    let sigma1_b = svd_norm(&b);
    let order = degree.order();
    let psi_max = w.max_lagrange_factor();
    let l_bound = kernel.derivative_bound(order + 1);
    let (nf, rf) = (n as f64, r as f64);
    let ski_bound =
        (nf * rf).sqrt() * psi_max * l_bound * ((order + 1) as f64 * nf.sqrt() + sigma1_f.min(sigma1_b) / sigma_r_a)
            + nystrom_err;
    Ok(ErrorBoundReport {
        kernel: kernel.name().to_string(),
        n,
        r,
        degree: order,
        psi_max,
        l_bound,
        sigma1_f,
        sigma1_b,
        sigma_r_a,
        nystrom_err,
        ski_bound,
        ski_err_empirical: svd_norm(&e_ski),
    })
}

/// Which smoothness class an impulse response came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayMode {
    Gelu,
    Silu,
    Relu,
}

impl DecayMode {
    pub fn name(self) -> &'static str {
        match self {
            DecayMode::Gelu => "gelu",
            DecayMode::Silu => "silu",
            DecayMode::Relu => "relu",
        }
    }
}

/// Distance beyond which a GeLU-class response must have decayed.
pub const GELU_FAR_DISTANCE: usize = 64;
/// Allowed `|k| / peak` at and beyond [`GELU_FAR_DISTANCE`].
pub const GELU_FAR_RATIO: f64 = 1e-3;
/// Values below this fraction of the peak are excluded from the slope fit.
const SLOPE_FLOOR: f64 = 1e-14;

/// `max_d |k[d]| d^N` against the bound from the spectral `N`-th derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerDecay {
    pub order: u32,
    pub observed: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub mode: DecayMode,
    pub len: usize,
    pub peak: f64,
    pub peak_index: usize,
    /// Least-squares slope of `ln |k|` against distance (`-inf` when only
    /// one sample clears the floor).
    pub slope: f64,
    /// `max |k[d]| / peak` over distances `d >= 64`.
    pub far_ratio: f64,
    pub power: Vec<PowerDecay>,
    pub energy: f64,
    /// Relative gap between time and frequency energies.
    pub parseval_err: f64,
    /// Energy beyond distance `len / 4` over total energy.
    pub tail_fraction: f64,
    pub tail_monotone: bool,
    pub passed: bool,
}

impl DecayReport {
    pub fn to_kv(&self) -> String {
        let mut s = format!(
            "mode: {}\nlen: {}\npeak: {:e}\npeak_index: {}\nslope: {:e}\nfar_ratio: {:e}\n",
            self.mode.name(),
            self.len,
            self.peak,
            self.peak_index,
            self.slope,
            self.far_ratio
        );
        for p in &self.power {
            s += &format!(
                "power{}_observed: {:e}\npower{}_bound: {:e}\n",
                p.order, p.observed, p.order, p.bound
            );
        }
        s += &format!(
            "energy: {:e}\nparseval_err: {:e}\ntail_fraction: {:e}\ntail_monotone: {}\npassed: {}\n",
            self.energy, self.parseval_err, self.tail_fraction, self.tail_monotone, self.passed
        );
        s
    }
}

/// Envelope over circular distance: `e[d] = max(|k[d]|, |k[len - d]|)`.
fn envelope(k: &[f64]) -> Vec<f64> {
    let len = k.len();
    (0..=len / 2)
        .map(|d| k[d].abs().max(k[(len - d) % len].abs()))
        .collect()
}

fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// `(1/len) sum_m |D^N K_m|` where `D^N K` is the transform of
/// `(i t)^N k[t]` with `t` the signed circular index.
fn spectral_derivative_l1(k: &[f64], order: u32) -> f64 {
    let len = k.len();
    let mut ws = crate::tcore::FftWorkspace::with_fft_len(len).expect("even length");
    let weighted: Vec<f64> = (0..len)
        .map(|t| {
            let s = if t <= len / 2 { t as f64 } else { t as f64 - len as f64 };
            k[t] * s.powi(order as i32)
        })
        .collect();
    let mut spec = vec![num_complex::Complex64::new(0.0, 0.0); len / 2 + 1];
    ws.rfft(&weighted, &mut spec);
    let half: f64 = spec
        .iter()
        .enumerate()
        .map(|(m, c)| {
            let w = if m == 0 || m == len / 2 { 1.0 } else { 2.0 };
            w * c.norm()
        })
        .sum();
    half / len as f64
}

/// Decay diagnostics of a length-`2n` impulse response.
pub fn decay_diagnostics(impulse: &[f64], mode: DecayMode) -> Result<DecayReport> {
    let len = impulse.len();
    if len < 4 || len % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "impulse length must be even and >= 4, got {len}"
        )));
    }
    ensure_finite("impulse", impulse)?;
    let (peak_index, peak) = impulse
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.abs()))
        .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    if peak == 0.0 {
        return Err(Error::ZeroImpulse);
    }
    let env = envelope(impulse);

    let pts: Vec<(f64, f64)> = env
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > SLOPE_FLOOR * peak)
        .map(|(d, &v)| (d as f64, v.ln()))
        .collect();
    let slope = if pts.len() < 2 {
        f64::NEG_INFINITY
    } else {
        ls_slope(&pts)
    };
    let far_ratio = env.iter().skip(GELU_FAR_DISTANCE).fold(0.0, |a: f64, &v| a.max(v)) / peak;

    let power: Vec<PowerDecay> = (1..=3)
        .map(|order| PowerDecay {
            order,
            observed: env
                .iter()
                .enumerate()
                .skip(1)
                .map(|(d, v)| v * (d as f64).powi(order as i32))
                .fold(0.0, f64::max),
            bound: spectral_derivative_l1(impulse, order),
        })
        .collect();

    let energy: f64 = impulse.iter().map(|v| v * v).sum();
    let mut ws = crate::tcore::FftWorkspace::with_fft_len(len)?;
    let mut spec = vec![num_complex::Complex64::new(0.0, 0.0); len / 2 + 1];
    ws.rfft(impulse, &mut spec);
    let freq_energy: f64 = spec
        .iter()
        .enumerate()
        .map(|(m, c)| {
            if m == 0 || m == len / 2 {
                c.norm_sqr()
            } else {
                2.0 * c.norm_sqr()
            }
        })
        .sum::<f64>()
        / len as f64;
    let parseval_err = (energy - freq_energy).abs() / energy;

    // energy at circular distance exactly d, then tails sum_{d' > d}
    let mut at_dist = vec![0.0; len / 2 + 1];
    for (t, v) in impulse.iter().enumerate() {
        at_dist[t.min(len - t)] += v * v;
    }
    let mut tails = vec![0.0; at_dist.len()];
    let mut acc = 0.0;
    for d in (0..at_dist.len()).rev() {
        tails[d] = acc;
        acc += at_dist[d];
    }
    let tail_monotone = tails.windows(2).all(|w| w[1] <= w[0]);
    let tail_fraction = tails[len / 4] / energy;

    let passed = match mode {
        DecayMode::Gelu => slope < 0.0 && far_ratio <= GELU_FAR_RATIO,
        DecayMode::Silu => power
            .iter()
            .all(|p| p.observed.is_finite() && p.observed <= p.bound * (1.0 + 1e-9)),
        DecayMode::Relu => energy.is_finite() && parseval_err <= 1e-10 && tail_monotone && tail_fraction < 0.01,
    };
    Ok(DecayReport {
        mode,
        len,
        peak,
        peak_index,
        slope,
        far_ratio,
        power,
        energy,
        parseval_err,
        tail_fraction,
        tail_monotone,
        passed,
    })
}
