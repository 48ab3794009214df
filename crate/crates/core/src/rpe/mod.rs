//! MLP relative positional encoders.
//!
//! An [`MlpRpe`] maps a scalar (a relative offset, or a frequency) to `d`
//! kernel values. Hidden layers apply an optional layer norm before the
//! activation; the output layer is linear. Gradients are derived by hand for
//! exactly this architecture.

mod fit;
mod probe;

pub use fit::{fit_fd_causal, fit_ski, FitOptions, FitReport};
pub use probe::{piecewise_linearity_probe, ProbeReport};

use std::io::{Read, Write};

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::Matrix;

/// Variance epsilon used by layer norm.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Anything that maps a scalar input to a fixed number of outputs.
pub trait Encoder {
    fn width(&self) -> usize;

    fn encode(&self, x: f64, out: &mut [f64]);

    /// Evaluates every input; row `i` of the result holds the outputs for `xs[i]`.
    fn encode_batch(&self, xs: &[f64]) -> Matrix {
        let w = self.width();
        let mut m = Matrix::zeros(xs.len(), w);
        let mut row = vec![0.0; w];
        for (i, &x) in xs.iter().enumerate() {
            self.encode(x, &mut row);
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }
}

impl<E: Encoder + ?Sized> Encoder for &E {
    fn width(&self) -> usize {
        (**self).width()
    }
    fn encode(&self, x: f64, out: &mut [f64]) {
        (**self).encode(x, out)
    }
    fn encode_batch(&self, xs: &[f64]) -> Matrix {
        (**self).encode_batch(xs)
    }
}

/// Closure-backed encoder, mostly for synthetic responses in tests.
pub struct FnEncoder<F> {
    width: usize,
    f: F,
}

impl<F: Fn(f64, &mut [f64])> FnEncoder<F> {
    pub fn new(width: usize, f: F) -> Self {
        Self { width, f }
    }
}

impl<F: Fn(f64, &mut [f64])> Encoder for FnEncoder<F> {
    fn width(&self) -> usize {
        self.width
    }
    fn encode(&self, x: f64, out: &mut [f64]) {
        (self.f)(x, out)
    }
}

/// Feeds `cos(omega)` to the wrapped encoder.
///
/// A frequency response built this way is even and `2 pi`-periodic with
/// every derivative continuous, so the smoothness of the inner network
/// carries over to the full circle.
pub struct CosInput<E>(pub E);

impl<E: Encoder> Encoder for CosInput<E> {
    fn width(&self) -> usize {
        self.0.width()
    }
    fn encode(&self, x: f64, out: &mut [f64]) {
        self.0.encode(x.cos(), out)
    }
    fn encode_batch(&self, xs: &[f64]) -> Matrix {
        let c: Vec<f64> = xs.iter().map(|x| x.cos()).collect();
        self.0.encode_batch(&c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Gelu,
    Silu,
}

impl Activation {
    pub fn id(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Gelu => 1,
            Activation::Silu => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Gelu),
            2 => Some(Activation::Silu),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Gelu => "gelu",
            Activation::Silu => "silu",
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Gelu => x * normal_cdf(x),
            Activation::Silu => x / (1.0 + (-x).exp()),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => normal_cdf(x) + x * (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-x).exp());
                s + x * s * (1.0 - s)
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "gelu" => Ok(Activation::Gelu),
            "silu" => Ok(Activation::Silu),
            other => Err(Error::Parse(format!("unknown activation '{other}'"))),
        }
    }
}

/// Exact Gaussian CDF through `erf`; GeLU must stay entire, so no tanh fit.
fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: DVector<f64>,
    pub beta: DVector<f64>,
}

fn normalize(z: &mut [f64]) -> f64 {
    layer_normalize(z, LAYER_NORM_EPS)
}

/// Normalizes `z` in place to zero mean and unit variance (population
/// variance plus `eps`); returns `1 / sqrt(var + eps)`.
pub fn layer_normalize(z: &mut [f64], eps: f64) -> f64 {
    let k = z.len() as f64;
    let mean = z.iter().sum::<f64>() / k;
    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k;
    let inv_std = 1.0 / (var + eps).sqrt();
    for v in z.iter_mut() {
        *v = (*v - mean) * inv_std;
    }
    inv_std
}

/// Affine map `out x in`, with a layer norm on hidden layers when enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: DVector<f64>,
    pub norm: Option<LayerNorm>,
}

#[derive(Debug, Clone)]
struct HiddenCache {
    normalized: Vec<f64>,
    inv_std: f64,
    pre_activation: Vec<f64>,
    output: Vec<f64>,
}

#[derive(Debug, Clone)]
struct ForwardCache {
    input: f64,
    hidden: Vec<HiddenCache>,
}

/// Loss gradients for every parameter tensor of an [`MlpRpe`], plus the
/// gradient with respect to the scalar input.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle {
    pub weights: Vec<Matrix>,
    pub biases: Vec<DVector<f64>>,
    pub gammas: Vec<Option<DVector<f64>>>,
    pub betas: Vec<Option<DVector<f64>>>,
    pub input: f64,
}

impl GradBundle {
    fn zeros_like(net: &MlpRpe) -> Self {
        Self {
            weights: net.layers.iter().map(|l| l.weight.map(|_| 0.0)).collect(),
            biases: net.layers.iter().map(|l| l.bias.map(|_| 0.0)).collect(),
            gammas: net
                .layers
                .iter()
                .map(|l| l.norm.as_ref().map(|n| n.gamma.map(|_| 0.0)))
                .collect(),
            betas: net
                .layers
                .iter()
                .map(|l| l.norm.as_ref().map(|n| n.beta.map(|_| 0.0)))
                .collect(),
            input: 0.0,
        }
    }

    /// Parameter gradients in [`MlpRpe::params`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in 0..self.weights.len() {
            push_row_major(&self.weights[l], &mut out);
            out.extend(self.biases[l].iter());
            if let (Some(g), Some(b)) = (&self.gammas[l], &self.betas[l]) {
                out.extend(g.iter());
                out.extend(b.iter());
            }
        }
        out
    }
}

fn push_row_major(m: &Matrix, out: &mut Vec<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
}

/// Multi-layer perceptron `R -> R^width` with no output activation.
#[derive(Debug, Clone)]
pub struct MlpRpe {
    widths: Vec<usize>,
    activation: Activation,
    layers: Vec<Layer>,
    cache: Option<ForwardCache>,
}

impl PartialEq for MlpRpe {
    fn eq(&self, other: &Self) -> bool {
        self.widths == other.widths && self.activation == other.activation && self.layers == other.layers
    }
}

impl MlpRpe {
    /// All-zero parameters (layer-norm scales set to one).
    ///
    /// `widths` lists every layer width, input first; the input width must be 1.
    pub fn zeros(widths: &[usize], activation: Activation, layer_norm: bool) -> Result<Self> {
        if widths.len() < 2 || widths[0] != 1 || widths.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "widths must start with 1 and have at least two positive entries, got {widths:?}"
            )));
        }
        let depth = widths.len() - 1;
        let layers = (0..depth)
            .map(|l| {
                let (fan_in, fan_out) = (widths[l], widths[l + 1]);
                let hidden = l + 1 < depth;
                Layer {
                    weight: Matrix::zeros(fan_out, fan_in),
                    bias: DVector::zeros(fan_out),
                    norm: (hidden && layer_norm).then(|| LayerNorm {
                        gamma: DVector::from_element(fan_out, 1.0),
                        beta: DVector::zeros(fan_out),
                    }),
                }
            })
            .collect();
        Ok(Self {
            widths: widths.to_vec(),
            activation,
            layers,
            cache: None,
        })
    }

    /// Random initialization: weights and biases uniform in
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, layer-norm scale one and shift zero.
    pub fn new<R: Rng + ?Sized>(
        widths: &[usize],
        activation: Activation,
        layer_norm: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(widths, activation, layer_norm)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.weight.ncols() as f64).sqrt();
            layer
                .weight
                .iter_mut()
                .for_each(|w| *w = rng.random_range(-bound..bound));
            layer.bias.iter_mut().for_each(|b| *b = rng.random_range(-bound..bound));
        }
        Ok(net)
    }

    /// Standard widths: `1 -> hidden x depth -> out`.
    pub fn with_hidden<R: Rng + ?Sized>(
        hidden: usize,
        depth: usize,
        out: usize,
        activation: Activation,
        layer_norm: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let mut widths = vec![1];
        widths.extend(std::iter::repeat_n(hidden, depth));
        widths.push(out);
        Self::new(&widths, activation, layer_norm, rng)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layer_norm(&self) -> bool {
        self.layers.iter().any(|l| l.norm.is_some())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.cache = None;
        &mut self.layers
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("non-empty widths")
    }

    /// Total number of hidden units.
    pub fn hidden_units(&self) -> usize {
        self.widths[1..self.widths.len() - 1].iter().sum()
    }

    /// Forward pass without caching.
    pub fn forward(&self, t: f64) -> Vec<f64> {
        self.run(t, None)
    }

    /// Forward pass that keeps the activations needed by [`MlpRpe::backward`].
    pub fn forward_train(&mut self, t: f64) -> Vec<f64> {
        let mut cache = ForwardCache {
            input: t,
            hidden: Vec::with_capacity(self.layers.len()),
        };
        let out = self.run(t, Some(&mut cache));
        self.cache = Some(cache);
        out
    }

    fn run(&self, t: f64, mut cache: Option<&mut ForwardCache>) -> Vec<f64> {
        let mut h = vec![t];
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z: Vec<f64> = (0..layer.weight.nrows())
                .map(|i| layer.bias[i] + layer.weight.row(i).iter().zip(&h).map(|(w, x)| w * x).sum::<f64>())
                .collect();
            if l == last {
                return z;
            }
            let (normalized, inv_std) = match &layer.norm {
                Some(norm) => {
                    let inv_std = normalize(&mut z);
                    let normalized = z.clone();
                    for (i, v) in z.iter_mut().enumerate() {
                        *v = norm.gamma[i] * *v + norm.beta[i];
                    }
                    (normalized, inv_std)
                }
                None => (Vec::new(), 1.0),
            };
            let next: Vec<f64> = z.iter().map(|&u| self.activation.apply(u)).collect();
            if let Some(c) = cache.as_deref_mut() {
                c.hidden.push(HiddenCache {
                    normalized,
                    inv_std,
                    pre_activation: z,
                    output: next.clone(),
                });
            }
            h = next;
        }
        unreachable!("network has an output layer")
    }

    /// Reverse-mode gradients of `upstream . output` for the last
    /// [`MlpRpe::forward_train`] call.
    pub fn backward(&self, upstream: &[f64]) -> Result<GradBundle> {
        let cache = self.cache.as_ref().ok_or(Error::MissingForwardCache)?;
        crate::error::ensure_len("upstream gradient", self.output_width(), upstream.len())?;
        let mut grads = GradBundle::zeros_like(self);
        let last = self.layers.len() - 1;
        let mut delta: Vec<f64> = upstream.to_vec();
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            if l < last {
                let hc = &cache.hidden[l];
                // delta currently holds d(loss)/d(hidden output)
                let mut du: Vec<f64> = delta
                    .iter()
                    .zip(&hc.pre_activation)
                    .map(|(g, &u)| g * self.activation.derivative(u))
                    .collect();
                if let Some(norm) = &layer.norm {
                    let k = du.len() as f64;
                    let gamma_grad = grads.gammas[l].as_mut().expect("gamma grad");
                    let beta_grad = grads.betas[l].as_mut().expect("beta grad");
                    let mut dn = vec![0.0; du.len()];
                    for i in 0..du.len() {
                        gamma_grad[i] = du[i] * hc.normalized[i];
                        beta_grad[i] = du[i];
                        dn[i] = du[i] * norm.gamma[i];
                    }
                    let mean_dn = dn.iter().sum::<f64>() / k;
                    let mean_dn_x = dn.iter().zip(&hc.normalized).map(|(a, b)| a * b).sum::<f64>() / k;
                    for i in 0..du.len() {
                        du[i] = hc.inv_std * (dn[i] - mean_dn - hc.normalized[i] * mean_dn_x);
                    }
                }
                delta = du;
            }
            let input: &[f64] = if l == 0 {
                std::slice::from_ref(&cache.input)
            } else {
                &cache.hidden[l - 1].output
            };
            for i in 0..layer.weight.nrows() {
                grads.biases[l][i] = delta[i];
                for j in 0..layer.weight.ncols() {
                    grads.weights[l][(i, j)] = delta[i] * input[j];
                }
            }
            let mut back = vec![0.0; layer.weight.ncols()];
            for i in 0..layer.weight.nrows() {
                for (j, b) in back.iter_mut().enumerate() {
                    *b += layer.weight[(i, j)] * delta[i];
                }
            }
            delta = back;
        }
        grads.input = delta[0];
        Ok(grads)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len() + l.norm.as_ref().map_or(0, |n| n.gamma.len() + n.beta.len()))
            .sum()
    }

    /// Flat parameter vector: per layer, weight (row-major), bias, then
    /// layer-norm scale and shift when present.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            push_row_major(&layer.weight, &mut out);
            out.extend(layer.bias.iter());
            if let Some(norm) = &layer.norm {
                out.extend(norm.gamma.iter());
                out.extend(norm.beta.iter());
            }
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        crate::error::ensure_len("parameter vector", self.param_count(), params.len())?;
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            for i in 0..layer.weight.nrows() {
                for j in 0..layer.weight.ncols() {
                    layer.weight[(i, j)] = it.next().expect("length checked");
                }
            }
            layer
                .bias
                .iter_mut()
                .for_each(|b| *b = it.next().expect("length checked"));
            if let Some(norm) = &mut layer.norm {
                norm.gamma
                    .iter_mut()
                    .for_each(|g| *g = it.next().expect("length checked"));
                norm.beta
                    .iter_mut()
                    .for_each(|b| *b = it.next().expect("length checked"));
            }
        }
        self.cache = None;
        Ok(())
    }

    /// Writes the binary parameter file.
    ///
    /// Layout (all integers little-endian):
    ///
    /// ```text
    /// b"TRPE"            magic
    /// u32                format version (1)
    /// u8                 activation id (0 relu, 1 gelu, 2 silu)
    /// u8                 layer-norm flag (0 or 1)
    /// u16                reserved, zero
    /// u32                number of widths L
    /// u32 x L            layer widths, input first
    /// f64 x ...          per layer: weight row-major (out x in), bias (out),
    ///                    then gamma (out) and beta (out) for normalized hidden layers
    /// ```
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"TRPE")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&[self.activation.id(), self.layer_norm() as u8])?;
        w.write_all(&0u16.to_le_bytes())?;
        w.write_all(&(self.widths.len() as u32).to_le_bytes())?;
        for &width in &self.widths {
            w.write_all(&(width as u32).to_le_bytes())?;
        }
        for p in self.params() {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"TRPE" {
            return Err(Error::Parse("bad magic in rpe parameter file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != 1 {
            return Err(Error::Parse(format!("unsupported rpe file version {version}")));
        }
        let mut flags = [0u8; 4];
        r.read_exact(&mut flags)?;
        let activation =
            Activation::from_id(flags[0]).ok_or_else(|| Error::Parse(format!("unknown activation id {}", flags[0])))?;
        let count = read_u32(&mut r)? as usize;
        if count > 1024 {
            return Err(Error::Parse(format!("implausible layer count {count}")));
        }
        let widths = (0..count)
            .map(|_| read_u32(&mut r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut net = Self::zeros(&widths, activation, flags[1] != 0)?;
        let mut params = vec![0.0; net.param_count()];
        let mut buf = [0u8; 8];
        for p in &mut params {
            r.read_exact(&mut buf)?;
            *p = f64::from_le_bytes(buf);
        }
        net.set_params(&params)?;
        Ok(net)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

impl Encoder for MlpRpe {
    fn width(&self) -> usize {
        self.output_width()
    }

    fn encode(&self, x: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.forward(x));
    }

    /// Batched forward: each layer is one matrix product over all inputs.
    fn encode_batch(&self, xs: &[f64]) -> Matrix {
        let mut h = Matrix::from_row_slice(1, xs.len(), xs);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.weight * &h;
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            if l == last {
                return z.transpose();
            }
            if let Some(norm) = &layer.norm {
                for mut col in z.column_iter_mut() {
                    normalize(col.as_mut_slice());
                    col.component_mul_assign(&norm.gamma);
                    col += &norm.beta;
                }
            }
            z.apply(|v| *v = self.activation.apply(*v));
            h = z;
        }
        unreachable!("network has an output layer")
    }
}
