//! Exact Toeplitz kernels and the circulant-embedding matvec.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::rpe::Encoder;
use crate::Matrix;

/// Largest `n` accepted by [`toeplitz_dense`].
pub const DENSE_ORACLE_MAX_N: usize = 4096;

/// The `2n - 1` values `t_{i-j}` defining an `n x n` Toeplitz operator.
///
/// Values are stored contiguously at index `delta + (n - 1)` for offsets
/// `delta = i - j` in `-(n-1)..=(n-1)`. A causal kernel has every negative
/// offset exactly zero.
#[derive(Clone, PartialEq)]
pub struct ToeplitzKernel {
    n: usize,
    values: Vec<f64>,
    causal: bool,
}

impl ToeplitzKernel {
    /// Validates a raw value array. Causal kernels must already carry zeros
    /// at every negative offset.
    pub fn new(n: usize, values: Vec<f64>, causal: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("kernel length n must be positive".into()));
        }
        ensure_len("kernel values (2n - 1)", 2 * n - 1, values.len())?;
        ensure_finite("kernel values", &values)?;
        if causal && values[..n - 1].iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidParameter(
                "causal kernel has non-zero values at negative offsets".into(),
            ));
        }
        Ok(Self { n, values, causal })
    }

    /// Builds a kernel by evaluating `f` at every offset. With `causal` set,
    /// negative offsets are forced to zero without calling `f`.
    pub fn from_fn(n: usize, causal: bool, mut f: impl FnMut(isize) -> f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("kernel length n must be positive".into()));
        }
        let m = n as isize - 1;
        let values = (-m..=m)
            .map(|delta| if causal && delta < 0 { 0.0 } else { f(delta) })
            .collect();
        Self::new(n, values, causal)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, true, |d| if d == 0 { 1.0 } else { 0.0 }).expect("identity kernel")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn causal(&self) -> bool {
        self.causal
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at offset `delta = i - j`.
    pub fn at(&self, delta: isize) -> f64 {
        self.values[(delta + self.n as isize - 1) as usize]
    }

    /// Offset-indexed pairs `(delta, value)`.
    pub fn offsets(&self) -> impl Iterator<Item = (isize, f64)> + '_ {
        let m = self.n as isize - 1;
        (-m..=m).zip(self.values.iter().copied())
    }
}

impl fmt::Debug for ToeplitzKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ToeplitzKernel")
            .field("n", &self.n)
            .field("causal", &self.causal)
            .finish_non_exhaustive()
    }
}

/// Exponential decay `lambda^{|i-j|}` applied to kernel values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayBias {
    lambda: f64,
}

impl DecayBias {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda > 0.0 && lambda <= 1.0 {
            Ok(Self { lambda })
        } else {
            Err(Error::InvalidParameter(format!(
                "decay lambda must lie in (0, 1], got {lambda}"
            )))
        }
    }

    pub fn none() -> Self {
        Self { lambda: 1.0 }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn factor(&self, delta: isize) -> f64 {
        self.lambda.powi(delta.unsigned_abs() as i32)
    }
}

/// Returns the kernel with `values[delta]` scaled by `lambda^{|delta|}`.
pub fn apply_decay_bias(kernel: &ToeplitzKernel, bias: DecayBias) -> ToeplitzKernel {
    let values = kernel.offsets().map(|(delta, v)| v * bias.factor(delta)).collect();
    ToeplitzKernel {
        n: kernel.n,
        values,
        causal: kernel.causal,
    }
}

/// Real FFT plans and scratch for one transform length.
///
/// A workspace is mutable scratch: use one per thread.
pub struct FftWorkspace {
    len: usize,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
    time: Vec<f64>,
    spec_a: Vec<Complex64>,
    spec_b: Vec<Complex64>,
    scratch_fwd: Vec<Complex64>,
    scratch_inv: Vec<Complex64>,
}

impl FftWorkspace {
    /// Workspace sized for linear convolution of length-`n` sequences:
    /// the next power of two at or above `2n`.
    pub fn for_len(n: usize) -> Self {
        Self::with_fft_len((2 * n.max(1)).next_power_of_two()).expect("power-of-two length")
    }

    /// Workspace with an explicit (even) transform length.
    pub fn with_fft_len(len: usize) -> Result<Self> {
        if len < 2 || len % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "fft length must be even and >= 2, got {len}"
            )));
        }
        let mut planner = RealFftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let scratch_fwd = forward.make_scratch_vec();
        let scratch_inv = inverse.make_scratch_vec();
        Ok(Self {
            len,
            time: vec![0.0; len],
            spec_a: vec![Complex64::new(0.0, 0.0); len / 2 + 1],
            spec_b: vec![Complex64::new(0.0, 0.0); len / 2 + 1],
            forward,
            inverse,
            scratch_fwd,
            scratch_inv,
        })
    }

    pub fn fft_len(&self) -> usize {
        self.len
    }

    /// Number of half-spectrum bins, `fft_len / 2 + 1`.
    pub fn bins(&self) -> usize {
        self.len / 2 + 1
    }

    fn load(&mut self, data: &[f64]) {
        self.time[..data.len()].copy_from_slice(data);
        self.time[data.len()..].fill(0.0);
    }

    /// Forward real FFT of `data` zero-padded to `fft_len`, written to `out`.
    pub fn rfft(&mut self, data: &[f64], out: &mut [Complex64]) {
        debug_assert!(data.len() <= self.len && out.len() == self.bins());
        self.load(data);
        self.forward
            .process_with_scratch(&mut self.time, out, &mut self.scratch_fwd)
            .expect("forward fft buffer sizes");
    }

    /// Normalized inverse real FFT (`1/len` scaling) of a half spectrum.
    /// Imaginary parts of the DC and Nyquist bins are ignored.
    pub fn irfft(&mut self, spectrum: &[Complex64], out: &mut [f64]) {
        debug_assert!(spectrum.len() == self.bins() && out.len() == self.len);
        self.spec_b.copy_from_slice(spectrum);
        self.inverse_from_b(out);
    }

    fn inverse_from_b(&mut self, out: &mut [f64]) {
        let last = self.spec_b.len() - 1;
        self.spec_b[0].im = 0.0;
        self.spec_b[last].im = 0.0;
        self.inverse
            .process_with_scratch(&mut self.spec_b, &mut self.time, &mut self.scratch_inv)
            .expect("inverse fft buffer sizes");
        let scale = 1.0 / self.len as f64;
        for (o, t) in out.iter_mut().zip(&self.time) {
            *o = t * scale;
        }
    }

    /// Circular convolution of a wrapped time-domain kernel (length `fft_len`)
    /// with `x` zero-padded; the first `out.len()` samples are written.
    pub fn circular_convolve(&mut self, wrapped_kernel: &[f64], x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(wrapped_kernel.len(), self.len);
        self.time.copy_from_slice(wrapped_kernel);
        self.forward
            .process_with_scratch(&mut self.time, &mut self.spec_a, &mut self.scratch_fwd)
            .expect("forward fft buffer sizes");
        self.load(x);
        self.forward
            .process_with_scratch(&mut self.time, &mut self.spec_b, &mut self.scratch_fwd)
            .expect("forward fft buffer sizes");
        for (b, a) in self.spec_b.iter_mut().zip(&self.spec_a) {
            *b *= a;
        }
        self.apply_inverse_truncated(out);
    }

    /// Applies a half-spectrum response to `x` zero-padded: one forward and
    /// one inverse transform. The first `out.len()` samples are written.
    pub fn filter_with_response(&mut self, response: &[Complex64], x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(response.len(), self.bins());
        self.load(x);
        self.forward
            .process_with_scratch(&mut self.time, &mut self.spec_b, &mut self.scratch_fwd)
            .expect("forward fft buffer sizes");
        for (b, a) in self.spec_b.iter_mut().zip(response) {
            *b *= a;
        }
        self.apply_inverse_truncated(out);
    }

    fn apply_inverse_truncated(&mut self, out: &mut [f64]) {
        let last = self.spec_b.len() - 1;
        self.spec_b[0].im = 0.0;
        self.spec_b[last].im = 0.0;
        self.inverse
            .process_with_scratch(&mut self.spec_b, &mut self.time, &mut self.scratch_inv)
            .expect("inverse fft buffer sizes");
        let scale = 1.0 / self.len as f64;
        for (o, t) in out.iter_mut().zip(&self.time) {
            *o = t * scale;
        }
    }
}

impl fmt::Debug for FftWorkspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FftWorkspace").field("fft_len", &self.len).finish()
    }
}

/// Writes the kernel in circulant-embedding order: offset `delta >= 0` at
/// index `delta`, negative offsets wrapped to `len + delta`.
fn wrap_kernel(kernel: &ToeplitzKernel, len: usize, out: &mut Vec<f64>) {
    out.clear();
    out.resize(len, 0.0);
    let n = kernel.n;
    let v = &kernel.values;
    out[..n].copy_from_slice(&v[n - 1..]);
    if !kernel.causal {
        for j in 1..n {
            out[len - j] = v[n - 1 - j];
        }
    }
}

/// `y_i = sum_j t_{i-j} x_j` by zero-padded circulant embedding.
pub fn toeplitz_matvec(kernel: &ToeplitzKernel, x: &[f64], ws: &mut FftWorkspace) -> Result<Vec<f64>> {
    let mut y = vec![0.0; kernel.n];
    toeplitz_matvec_into(kernel, x, ws, &mut y)?;
    Ok(y)
}

/// In-place variant of [`toeplitz_matvec`].
pub fn toeplitz_matvec_into(kernel: &ToeplitzKernel, x: &[f64], ws: &mut FftWorkspace, y: &mut [f64]) -> Result<()> {
    let n = kernel.n;
    ensure_len("toeplitz input", n, x.len())?;
    ensure_len("toeplitz output", n, y.len())?;
    if ws.fft_len() < 2 * n {
        return Err(Error::InvalidParameter(format!(
            "fft length {} is below 2n = {}",
            ws.fft_len(),
            2 * n
        )));
    }
    ensure_finite("toeplitz input", x)?;
    let mut wrapped = Vec::new();
    wrap_kernel(kernel, ws.fft_len(), &mut wrapped);
    ws.circular_convolve(&wrapped, x, y);
    Ok(())
}

/// Materializes `M[i][j] = values[i - j]` (oracle use only).
pub fn toeplitz_dense(kernel: &ToeplitzKernel) -> Result<Matrix> {
    let n = kernel.n;
    if n > DENSE_ORACLE_MAX_N {
        return Err(Error::OracleTooLarge {
            n,
            max: DENSE_ORACLE_MAX_N,
        });
    }
    Ok(Matrix::from_fn(n, n, |i, j| kernel.at(i as isize - j as isize)))
}

/// Baseline operator: per channel, kernel `lambda^{|delta|} RPE_l(delta)` at
/// all `2n - 1` offsets applied with [`toeplitz_matvec`].
pub fn tno_baseline(x: &Matrix, rpe: &dyn Encoder, bias: DecayBias, ws: &mut FftWorkspace) -> Result<Matrix> {
    let (n, d) = x.shape();
    ensure_len("rpe output width vs channels", d, rpe.width())?;
    ensure_finite("sequence", x.as_slice())?;
    let m = n as isize - 1;
    let offsets: Vec<f64> = (-m..=m).map(|o| o as f64).collect();
    let table = rpe.encode_batch(&offsets);
    let mut out = Matrix::zeros(n, d);
    for l in 0..d {
        let kernel = ToeplitzKernel::from_fn(n, false, |delta| bias.factor(delta) * table[((delta + m) as usize, l)])?;
        toeplitz_matvec_into(&kernel, x.column(l).as_slice(), ws, out.column_mut(l).as_mut_slice())?;
    }
    Ok(out)
}
