//! Toy end-to-end fits: match a target Toeplitz operator's outputs on
//! seeded inputs by gradient descent on the operator's parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{CosInput, MlpRpe};
use crate::config::TnoConfig;
use crate::error::{ensure_len, Error, Result};
use crate::fdom::{bin_frequencies, fd_tno_causal};
use crate::ski::{inducing_kernels, SkiOperator, SparseFilter, WarpedRpe};
use crate::tcore::{toeplitz_matvec_into, FftWorkspace, ToeplitzKernel};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub steps: usize,
    /// Initial (and maximum) Adam step size.
    pub lr: f64,
    /// Number of seeded input sequences.
    pub samples: usize,
    pub seed: u64,
    /// Stop once the loss falls to this value.
    pub target_loss: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: 1e-2,
            samples: 4,
            seed: 0,
            target_loss: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Loss before the first step, then after every accepted step.
    pub losses: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
}

impl FitReport {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("at least the initial loss")
    }
}

trait Objective {
    fn loss(&mut self, params: &[f64]) -> Result<f64>;
    fn loss_grad(&mut self, params: &[f64]) -> Result<(f64, Vec<f64>)>;
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-12;
const MAX_HALVINGS: usize = 40;
const RESTART_AFTER: usize = 4;

/// Adam whose proposals are only taken when they do not increase the loss;
/// a rejected proposal halves the step size.
fn descend(obj: &mut dyn Objective, params: &mut [f64], opts: &FitOptions) -> Result<FitReport> {
    let (mut loss, mut grad) = obj.loss_grad(params)?;
    if !loss.is_finite() {
        return Err(Error::Divergence { step: 0 });
    }
    let mut report = FitReport {
        losses: vec![loss],
        accepted: 0,
        rejected: 0,
    };
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut lr = opts.lr;
    let mut trial = vec![0.0; params.len()];
    for step in 1..=opts.steps {
        if loss <= opts.target_loss {
            break;
        }
        let c1 = 1.0 - BETA1.powi(step as i32);
        let c2 = 1.0 - BETA2.powi(step as i32);
        for i in 0..params.len() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
        }
        let mut accepted = None;
        let mut saw_non_finite = false;
        for attempt in 0..MAX_HALVINGS {
            if attempt == RESTART_AFTER {
                // stale momentum may not point downhill; restart from the gradient
                for i in 0..params.len() {
                    m[i] = grad[i] * c1;
                    v[i] = grad[i] * grad[i] * c2;
                }
            }
            for i in 0..params.len() {
                trial[i] = params[i] - lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
            let l = obj.loss(&trial)?;
            if l.is_finite() && l <= loss {
                accepted = Some(l);
                break;
            }
            saw_non_finite |= !l.is_finite();
            report.rejected += 1;
            lr *= 0.5;
        }
        match accepted {
            Some(_) => {
                params.copy_from_slice(&trial);
                let (l, g) = obj.loss_grad(params)?;
                loss = l;
                grad = g;
                report.losses.push(loss);
                report.accepted += 1;
                lr = (lr * 1.1).min(opts.lr);
            }
            None if saw_non_finite => return Err(Error::Divergence { step }),
            None => break,
        }
    }
    Ok(report)
}

fn seeded_inputs(samples: usize, n: usize, d: usize, seed: u64) -> Vec<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| Matrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng)))
        .collect()
}

fn target_outputs(targets: &[ToeplitzKernel], xs: &[Matrix]) -> Result<Vec<Matrix>> {
    let (n, d) = xs[0].shape();
    if targets.len() != 1 && targets.len() != d {
        return Err(Error::DimensionMismatch {
            what: "target kernels (1 or d)",
            expected: d,
            actual: targets.len(),
        });
    }
    let mut ws = FftWorkspace::for_len(n);
    xs.iter()
        .map(|x| {
            let mut y = Matrix::zeros(n, d);
            for l in 0..d {
                let k = &targets[if targets.len() == 1 { 0 } else { l }];
                ensure_len("target kernel length", n, k.n())?;
                toeplitz_matvec_into(k, x.column(l).as_slice(), &mut ws, y.column_mut(l).as_mut_slice())?;
            }
            Ok(y)
        })
        .collect()
}

fn mse(pred: &Matrix, target: &Matrix) -> f64 {
    (pred - target).norm_squared()
}

/// `sum_i r[i] x[i - delta]` over valid indices.
fn correlate(r: &[f64], x: &[f64], delta: isize) -> f64 {
    let n = r.len() as isize;
    (delta.max(0)..(n + delta).min(n))
        .map(|i| r[i as usize] * x[(i - delta) as usize])
        .sum()
}

struct FdObjective {
    net: MlpRpe,
    xs: Vec<Matrix>,
    ys: Vec<Matrix>,
    /// `cos(pi m t / n)` for `m = 0..=n`, `t = 0..n`, row-major by `m`.
    cos_table: Vec<f64>,
}

impl FdObjective {
    fn scale(&self) -> f64 {
        let (n, d) = self.xs[0].shape();
        1.0 / (self.xs.len() * n * d) as f64
    }
}

impl Objective for FdObjective {
    fn loss(&mut self, params: &[f64]) -> Result<f64> {
        self.net.set_params(params)?;
        let mut total = 0.0;
        for (x, y) in self.xs.iter().zip(&self.ys) {
            total += mse(&fd_tno_causal(x, &CosInput(&self.net))?, y);
        }
        Ok(total * self.scale())
    }

    fn loss_grad(&mut self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.net.set_params(params)?;
        let (n, d) = self.xs[0].shape();
        let scale = self.scale();
        let mut total = 0.0;
        // dL/dc_l[t] for the causal time kernel at t = 0..n
        let mut dc = Matrix::zeros(n, d);
        for (x, y) in self.xs.iter().zip(&self.ys) {
            let pred = fd_tno_causal(x, &CosInput(&self.net))?;
            let resid = pred - y;
            total += resid.norm_squared();
            for l in 0..d {
                let (r, xl) = (resid.column(l), x.column(l));
                for t in 0..n {
                    dc[(t, l)] += 2.0 * scale * correlate(r.as_slice(), xl.as_slice(), t as isize);
                }
            }
        }
        // c[t] = coef(t) k[t], k[t] = (1/2n) sum_m w_m K_m cos(pi m t / n)
        let two_n = 2.0 * n as f64;
        let mut grad = vec![0.0; self.net.param_count()];
        for (m, &w) in bin_frequencies(n).iter().enumerate() {
            let wm = if m == 0 || m == n { 1.0 } else { 2.0 };
            let upstream: Vec<f64> = (0..d)
                .map(|l| {
                    (0..n)
                        .map(|t| {
                            let coef = if t == 0 { 1.0 } else { 2.0 };
                            dc[(t, l)] * coef * self.cos_table[m * n + t]
                        })
                        .sum::<f64>()
                        * wm
                        / two_n
                })
                .collect();
            self.net.forward_train(w.cos());
            let g = self.net.backward(&upstream)?.flatten();
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        Ok((total * scale, grad))
    }
}

/// Fits the frequency response of a causal operator, with the network fed
/// `cos(omega)`, to reproduce `targets` (one kernel, or one per channel).
pub fn fit_fd_causal(net: &mut MlpRpe, targets: &[ToeplitzKernel], opts: &FitOptions) -> Result<FitReport> {
    let n = targets
        .first()
        .ok_or_else(|| Error::InvalidParameter("no target kernels".into()))?
        .n();
    let d = net.output_width();
    let xs = seeded_inputs(opts.samples.max(1), n, d, opts.seed);
    let ys = target_outputs(targets, &xs)?;
    let cos_table = (0..=n)
        .flat_map(|m| (0..n).map(move |t| (std::f64::consts::PI * (m * t) as f64 / n as f64).cos()))
        .collect();
    let mut obj = FdObjective {
        net: net.clone(),
        xs,
        ys,
        cos_table,
    };
    let mut params = net.params();
    let report = descend(&mut obj, &mut params, opts)?;
    net.set_params(&params)?;
    Ok(report)
}

struct SkiObjective {
    op: SkiOperator,
    rpe: WarpedRpe,
    filters: Vec<SparseFilter>,
    xs: Vec<Matrix>,
    ys: Vec<Matrix>,
}

impl SkiObjective {
    fn unpack(&mut self, params: &[f64]) -> Result<()> {
        let (nodes, d) = (self.rpe.nodes(), self.rpe.channels());
        let values = Matrix::from_column_slice(nodes, d, &params[..nodes * d]);
        self.rpe.set_values(&values)?;
        let m = self.filters[0].m();
        for (l, f) in self.filters.iter_mut().enumerate() {
            let off = nodes * d + l * m;
            f.set_taps(&params[off..off + m])?;
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        let (n, d) = self.xs[0].shape();
        1.0 / (self.xs.len() * n * d) as f64
    }
}

fn pack_ski(rpe: &WarpedRpe, filters: &[SparseFilter]) -> Vec<f64> {
    let mut p: Vec<f64> = rpe.values().as_slice().to_vec();
    for f in filters {
        p.extend_from_slice(f.taps());
    }
    p
}

impl Objective for SkiObjective {
    fn loss(&mut self, params: &[f64]) -> Result<f64> {
        self.unpack(params)?;
        let mut total = 0.0;
        for (x, y) in self.xs.iter().zip(&self.ys) {
            total += mse(&self.op.apply(x, &self.rpe, &self.filters)?, y);
        }
        Ok(total * self.scale())
    }

    fn loss_grad(&mut self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.unpack(params)?;
        let d = self.xs[0].ncols();
        let scale = self.scale();
        let w = self.op.interp().clone();
        let r = w.cols();
        let h = w.grid().spacing();
        let nodes = self.rpe.nodes();
        let m = self.filters[0].m();
        let mut grad = vec![0.0; params.len()];
        let mut total = 0.0;
        // G_l = sum_s (W^T r)(W^T x)^T, reduced along diagonals a - b = delta
        let mut diag = Matrix::zeros(2 * r - 1, d);
        let mut wr = vec![0.0; r];
        let mut wx = vec![0.0; r];
        for (x, y) in self.xs.iter().zip(&self.ys) {
            let resid = self.op.apply(x, &self.rpe, &self.filters)? - y;
            total += resid.norm_squared();
            for l in 0..d {
                let (rl, xl) = (resid.column(l), x.column(l));
                w.apply_transpose(rl.as_slice(), &mut wr)?;
                w.apply_transpose(xl.as_slice(), &mut wx)?;
                for a in 0..r {
                    for b in 0..r {
                        diag[(a + r - 1 - b, l)] += 2.0 * scale * wr[a] * wx[b];
                    }
                }
                for k in 0..m {
                    grad[nodes * d + l * m + k] +=
                        2.0 * scale * correlate(rl.as_slice(), xl.as_slice(), self.filters[l].offset(k));
                }
            }
        }
        let lambda = self.rpe.lambda();
        for k in 0..2 * r - 1 {
            let t = (k as f64 - (r - 1) as f64) * h;
            let x = crate::ski::inverse_time_warp(t, lambda)?;
            let (j, frac) = self.rpe.bracket(x);
            for l in 0..d {
                let g = diag[(k, l)];
                grad[l * nodes + j] += (1.0 - frac) * g;
                grad[l * nodes + j + 1] += frac * g;
            }
        }
        let c = self.rpe.center();
        for l in 0..d {
            grad[l * nodes + c] = 0.0;
        }
        Ok((total * scale, grad))
    }
}

/// Fits warped-RPE node values and filter taps of the sparse plus low-rank
/// operator to reproduce `targets`.
pub fn fit_ski(
    rpe: &mut WarpedRpe,
    filters: &mut [SparseFilter],
    cfg: &TnoConfig,
    targets: &[ToeplitzKernel],
    opts: &FitOptions,
) -> Result<FitReport> {
    ensure_len("filters per channel", cfg.d, filters.len())?;
    ensure_len("rpe channels", cfg.d, rpe.channels())?;
    let xs = seeded_inputs(opts.samples.max(1), cfg.n, cfg.d, opts.seed);
    let ys = target_outputs(targets, &xs)?;
    let op = SkiOperator::new(cfg)?;
    // surfaces shape errors before descent starts
    inducing_kernels(&*rpe, op.interp().grid())?;
    let mut obj = SkiObjective {
        op,
        rpe: rpe.clone(),
        filters: filters.to_vec(),
        xs,
        ys,
    };
    let mut params = pack_ski(rpe, filters);
    let report = descend(&mut obj, &mut params, opts)?;
    obj.unpack(&params)?;
    *rpe = obj.rpe;
    filters.clone_from_slice(&obj.filters);
    Ok(report)
}
