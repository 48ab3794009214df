//! Frequency-domain Toeplitz operators.
//!
//! Kernels are given by samples of their response at `omega_m = m pi / n`,
//! `m = 0..=n`, and act on length-`n` inputs through transforms of length
//! `2n`. A real even response becomes causal by adding the negated discrete
//! Hilbert transform as imaginary part.

use num_complex::Complex64;

use crate::error::{ensure_finite, ensure_len, Error, Flavor, Result};
use crate::rpe::Encoder;
use crate::tcore::{FftWorkspace, ToeplitzKernel};
use crate::Matrix;

/// `omega_m = m pi / n`.
pub fn omega(n: usize, m: usize) -> f64 {
    m as f64 * std::f64::consts::PI / n as f64
}

/// The `n + 1` bin frequencies for base length `n`.
pub fn bin_frequencies(n: usize) -> Vec<f64> {
    (0..=n).map(|m| omega(n, m)).collect()
}

/// Frequency response sampled at `omega_m = m pi / n` for `m = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqResponse {
    n: usize,
    samples: Vec<Complex64>,
    flavor: Flavor,
}

impl FreqResponse {
    /// Real samples of an even spectrum.
    pub fn real_even(n: usize, samples: Vec<f64>) -> Result<Self> {
        check_base_len(n)?;
        ensure_len("frequency bins (n + 1)", n + 1, samples.len())?;
        ensure_finite("frequency samples", &samples)?;
        Ok(Self {
            n,
            samples: samples.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
            flavor: Flavor::RealEven,
        })
    }

    /// Samples `f` at every bin.
    pub fn sample_real_even(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::real_even(n, bin_frequencies(n).into_iter().map(f).collect())
    }

    /// General complex samples; the DC and Nyquist bins must be real.
    pub fn complex(n: usize, samples: Vec<Complex64>) -> Result<Self> {
        check_base_len(n)?;
        ensure_len("frequency bins (n + 1)", n + 1, samples.len())?;
        if samples.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("frequency samples"));
        }
        if samples[0].im != 0.0 || samples[n].im != 0.0 {
            return Err(Error::InvalidParameter(
                "complex response must be real at omega = 0 and omega = pi".into(),
            ));
        }
        Ok(Self {
            n,
            samples,
            flavor: Flavor::Complex,
        })
    }

    /// Like [`FreqResponse::complex`] but zeroes the endpoint imaginary parts.
    pub fn complex_projected(n: usize, mut samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() == n + 1 {
            samples[0].im = 0.0;
            samples[n].im = 0.0;
        }
        Self::complex(n, samples)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    /// Real parts of the samples.
    pub fn real(&self) -> Vec<f64> {
        self.samples.iter().map(|c| c.re).collect()
    }

    fn expect_real_even(&self) -> Result<()> {
        if self.flavor == Flavor::RealEven {
            Ok(())
        } else {
            Err(Error::WrongFlavor {
                expected: Flavor::RealEven,
                found: self.flavor,
            })
        }
    }
}

fn check_base_len(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidParameter("base length n must be positive".into()))
    } else {
        Ok(())
    }
}

/// Length-`2n` inverse transform of the conjugate-symmetric completion.
pub fn impulse_response(kh: &FreqResponse) -> Vec<f64> {
    let mut ws = FftWorkspace::with_fft_len(2 * kh.n).expect("even length");
    let mut out = vec![0.0; 2 * kh.n];
    ws.irfft(&kh.samples, &mut out);
    out
}

/// Causal projection of a real even time sequence of length `2n`: keeps
/// `t = 0` and `t = n`, doubles `0 < t < n`, zeroes the anticausal half.
fn causal_projection(k: &mut [f64]) {
    let n = k.len() / 2;
    for v in &mut k[1..n] {
        *v *= 2.0;
    }
    k[n + 1..].fill(0.0);
}

/// `k_hat - i H{k_hat}` through the time-domain causal projection.
fn causal_samples(kh: &FreqResponse, ws: &mut FftWorkspace, time: &mut [f64], out: &mut [Complex64]) {
    let n = kh.n;
    ws.irfft(&kh.samples, time);
    causal_projection(time);
    ws.rfft(time, out);
    for (o, k) in out.iter_mut().zip(&kh.samples) {
        o.re = k.re;
    }
    out[0].im = 0.0;
    out[n].im = 0.0;
}

/// Discrete Hilbert transform `H{k_hat}` at the same bins.
pub fn discrete_hilbert(kh: &FreqResponse) -> Result<Vec<f64>> {
    Ok(causal_freq_kernel(kh)?.samples.iter().map(|c| -c.im).collect())
}

/// `k_hat_causal = k_hat - i H{k_hat}`; its time kernel vanishes at negative offsets.
pub fn causal_freq_kernel(kh: &FreqResponse) -> Result<FreqResponse> {
    kh.expect_real_even()?;
    let n = kh.n;
    let mut ws = FftWorkspace::with_fft_len(2 * n)?;
    let mut time = vec![0.0; 2 * n];
    let mut out = vec![Complex64::new(0.0, 0.0); n + 1];
    causal_samples(kh, &mut ws, &mut time, &mut out);
    Ok(FreqResponse {
        n,
        samples: out,
        flavor: Flavor::Complex,
    })
}

/// Hilbert transform of a `2 pi`-periodic function sampled at `2n` points
/// `omega_m = m pi / n`: the time coefficients are multiplied by
/// `i sign(t)`, with `t = 0` and `t = n` sent to zero.
pub fn periodic_hilbert(samples: &[f64]) -> Result<Vec<f64>> {
    let len = samples.len();
    if len < 2 || len % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "periodic samples need an even length >= 2, got {len}"
        )));
    }
    ensure_finite("periodic samples", samples)?;
    let n = len / 2;
    let mut ws = FftWorkspace::with_fft_len(len)?;
    let mut spec = vec![Complex64::new(0.0, 0.0); n + 1];
    ws.rfft(samples, &mut spec);
    // rfft index t carries the coefficient of time -t, so i sign(-t) = -i
    for c in &mut spec[1..n] {
        *c = Complex64::new(c.im, -c.re);
    }
    spec[0] = Complex64::new(0.0, 0.0);
    spec[n] = Complex64::new(0.0, 0.0);
    let mut out = vec![0.0; len];
    ws.irfft(&spec, &mut out);
    Ok(out)
}

/// Even `2n`-periodic extension of `n + 1` bin samples.
pub fn even_extension(bins: &[f64]) -> Vec<f64> {
    let n = bins.len() - 1;
    (0..2 * n).map(|m| bins[if m <= n { m } else { 2 * n - m }]).collect()
}

/// Time kernel of a complex response as a Toeplitz kernel (`t_delta = k[delta mod 2n]`).
pub fn response_kernel(kh: &FreqResponse, causal: bool) -> Result<ToeplitzKernel> {
    let k = impulse_response(kh);
    let len = k.len() as isize;
    ToeplitzKernel::from_fn(kh.n, causal, |delta| k[delta.rem_euclid(len) as usize])
}

fn check_bins(x: &Matrix, bins_n: usize) -> Result<()> {
    if bins_n < x.nrows() {
        return Err(Error::InvalidParameter(format!(
            "frequency resolution {bins_n} is below the sequence length {}",
            x.nrows()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::InvalidParameter("empty sequence".into()));
    }
    ensure_finite("sequence", x.as_slice())
}

/// Causal operator with the response evaluated at bins `m pi / n`.
pub fn fd_tno_causal(x: &Matrix, rpe: &dyn Encoder) -> Result<Matrix> {
    fd_tno_causal_at(x, rpe, x.nrows())
}

/// Causal operator with the response sampled at the finer bins
/// `m pi / bins_n` (`bins_n >= n`), for inputs longer than training.
pub fn fd_tno_causal_at(x: &Matrix, rpe: &dyn Encoder, bins_n: usize) -> Result<Matrix> {
    let (n, d) = x.shape();
    check_bins(x, bins_n)?;
    ensure_len("rpe output width vs channels", d, rpe.width())?;
    let table = rpe.encode_batch(&bin_frequencies(bins_n));
    let mut ws = FftWorkspace::with_fft_len(2 * bins_n)?;
    let mut time = vec![0.0; 2 * bins_n];
    let mut kc = vec![Complex64::new(0.0, 0.0); bins_n + 1];
    let mut out = Matrix::zeros(n, d);
    for l in 0..d {
        let col: Vec<f64> = table.column(l).iter().copied().collect();
        let kh = FreqResponse::real_even(bins_n, col)?;
        causal_samples(&kh, &mut ws, &mut time, &mut kc);
        ws.filter_with_response(&kc, x.column(l).as_slice(), out.column_mut(l).as_mut_slice());
    }
    Ok(out)
}

/// Splits a doubled-width rpe table into per-channel complex responses,
/// zeroing the imaginary parts at the first and last bins.
fn bidirectional_response(table: &Matrix, l: usize, d: usize) -> Vec<Complex64> {
    let bins = table.nrows();
    let mut s: Vec<Complex64> = (0..bins)
        .map(|m| Complex64::new(table[(m, l)], table[(m, d + l)]))
        .collect();
    s[0].im = 0.0;
    s[bins - 1].im = 0.0;
    s
}

/// Bidirectional operator from a complex response: channel `l` takes its
/// real part from rpe output `l` and imaginary part from output `d + l`.
pub fn fd_tno_bidirectional(x: &Matrix, rpe: &dyn Encoder) -> Result<Matrix> {
    fd_tno_bidirectional_at(x, rpe, x.nrows())
}

pub fn fd_tno_bidirectional_at(x: &Matrix, rpe: &dyn Encoder, bins_n: usize) -> Result<Matrix> {
    let (n, d) = x.shape();
    check_bins(x, bins_n)?;
    if rpe.width() != 2 * d {
        return Err(Error::DimensionMismatch {
            what: "rpe output width vs 2 x channels",
            expected: 2 * d,
            actual: rpe.width(),
        });
    }
    let table = rpe.encode_batch(&bin_frequencies(bins_n));
    if table.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rpe response"));
    }
    let mut ws = FftWorkspace::with_fft_len(2 * bins_n)?;
    let mut out = Matrix::zeros(n, d);
    for l in 0..d {
        let response = bidirectional_response(&table, l, d);
        ws.filter_with_response(&response, x.column(l).as_slice(), out.column_mut(l).as_mut_slice());
    }
    Ok(out)
}

/// Per-channel complex responses the bidirectional operator would use.
pub fn bidirectional_responses(rpe: &dyn Encoder, n: usize) -> Result<Vec<FreqResponse>> {
    if rpe.width() % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "bidirectional rpe width must be even, got {}",
            rpe.width()
        )));
    }
    let d = rpe.width() / 2;
    let table = rpe.encode_batch(&bin_frequencies(n));
    (0..d)
        .map(|l| FreqResponse::complex(n, bidirectional_response(&table, l, d)))
        .collect()
}

/// Per-channel real even responses sampled from `rpe`.
pub fn real_responses(rpe: &dyn Encoder, n: usize) -> Result<Vec<FreqResponse>> {
    let table = rpe.encode_batch(&bin_frequencies(n));
    (0..rpe.width())
        .map(|l| FreqResponse::real_even(n, table.column(l).iter().copied().collect()))
        .collect()
}
