//! Named invariant checks with fixed seeds.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use tno_core::analysis::{
    best_rank, bound_suite, nystrom_dense, singular_values, ski_bound_evaluate, spectral_norm, svd_norm, TestKernel,
};
use tno_core::csv::read_kernel;
use tno_core::fdom::{
    bidirectional_responses, causal_freq_kernel, discrete_hilbert, even_extension, fd_tno_bidirectional, fd_tno_causal,
    impulse_response, periodic_hilbert, real_responses, FreqResponse,
};
use tno_core::oracle::{dense_matvec, hilbert_periodized, masked_ski_matvec, relative_l2, response_dense};
use tno_core::rpe::{layer_normalize, piecewise_linearity_probe, Activation, CosInput, MlpRpe, LAYER_NORM_EPS};
use tno_core::ski::{
    interpolation_weights, inverse_time_warp, make_inducing_grid, observation_weights, ski_causal_scan,
    ski_lowrank_matvec, Degree, ExecPath, GridSpan, InducingGrid,
};
use tno_core::tcore::{apply_decay_bias, toeplitz_dense, toeplitz_matvec, DecayBias, FftWorkspace, ToeplitzKernel};
use tno_core::{Error, Matrix, Result};

use crate::{figures, stream, uniform_matrix, uniform_vec, EXIT_FAILURE, EXIT_OK};

/// Group of checks selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Tcore,
    Ski,
    Fdom,
    Rpe,
    Analysis,
    Cli,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 7] = ["tcore", "ski", "fdom", "rpe", "analysis", "cli", "all"];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Tcore => "tcore",
            Suite::Ski => "ski",
            Suite::Fdom => "fdom",
            Suite::Rpe => "rpe",
            Suite::Analysis => "analysis",
            Suite::Cli => "cli",
            Suite::All => "all",
        }
    }

    fn includes(self, module: Suite) -> bool {
        self == Suite::All || self == module
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            Suite::Tcore,
            Suite::Ski,
            Suite::Fdom,
            Suite::Rpe,
            Suite::Analysis,
            Suite::Cli,
            Suite::All,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| {
            Error::Parse(format!(
                "unknown suite '{s}' (expected one of {})",
                Suite::NAMES.join(", ")
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub suite: Suite,
    pub seed: u64,
    pub results: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn failed(&self) -> usize {
        self.results.iter().filter(|r| !r.passed).count()
    }

    pub fn exit_code(&self) -> i32 {
        if self.failed() == 0 {
            EXIT_OK
        } else {
            EXIT_FAILURE
        }
    }

    /// One `PASS|FAIL <name> <detail>` line per check between `#` lines.
    pub fn render(&self) -> String {
        let mut s = format!("# verify suite={} seed={}\n", self.suite, self.seed);
        for r in &self.results {
            s += &format!("{} {} {}\n", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        }
        s += &format!(
            "# summary total={} passed={} failed={}\n",
            self.results.len(),
            self.results.len() - self.failed(),
            self.failed()
        );
        s
    }
}

type Outcome = (bool, String);

struct Check {
    module: Suite,
    name: &'static str,
    run: fn(u64) -> Result<Outcome>,
}

const CHECKS: &[Check] = &[
    Check {
        module: Suite::Tcore,
        name: "tcore.oracle-equivalence",
        run: tcore_oracle,
    },
    Check {
        module: Suite::Tcore,
        name: "tcore.linearity",
        run: tcore_linearity,
    },
    Check {
        module: Suite::Tcore,
        name: "tcore.causality",
        run: tcore_causality,
    },
    Check {
        module: Suite::Tcore,
        name: "tcore.decay-bias-monotone",
        run: tcore_decay_monotone,
    },
    Check {
        module: Suite::Ski,
        name: "ski.exactness",
        run: ski_exactness,
    },
    Check {
        module: Suite::Ski,
        name: "ski.partition-of-unity",
        run: ski_partition,
    },
    Check {
        module: Suite::Ski,
        name: "ski.lagrange-factor",
        run: ski_lagrange,
    },
    Check {
        module: Suite::Ski,
        name: "ski.warp-oddness",
        run: ski_warp_odd,
    },
    Check {
        module: Suite::Ski,
        name: "ski.scan-agreement",
        run: ski_scan,
    },
    Check {
        module: Suite::Fdom,
        name: "fdom.hilbert-antisymmetry",
        run: fdom_hilbert,
    },
    Check {
        module: Suite::Fdom,
        name: "fdom.causality",
        run: fdom_causality,
    },
    Check {
        module: Suite::Fdom,
        name: "fdom.real-part-preserved",
        run: fdom_real_part,
    },
    Check {
        module: Suite::Fdom,
        name: "fdom.parseval",
        run: fdom_parseval,
    },
    Check {
        module: Suite::Fdom,
        name: "fdom.oracle-equivalence",
        run: fdom_oracle,
    },
    Check {
        module: Suite::Rpe,
        name: "rpe.gradients",
        run: rpe_gradients,
    },
    Check {
        module: Suite::Rpe,
        name: "rpe.piecewise-linear-probe",
        run: rpe_probe,
    },
    Check {
        module: Suite::Rpe,
        name: "rpe.layernorm-scale-invariance",
        run: rpe_layernorm,
    },
    Check {
        module: Suite::Analysis,
        name: "analysis.bound-validity",
        run: analysis_bound,
    },
    Check {
        module: Suite::Analysis,
        name: "analysis.nystrom-collapse",
        run: analysis_nystrom,
    },
    Check {
        module: Suite::Analysis,
        name: "analysis.power-iteration",
        run: analysis_power,
    },
    Check {
        module: Suite::Cli,
        name: "cli.determinism",
        run: cli_determinism,
    },
    Check {
        module: Suite::Cli,
        name: "cli.exit-status",
        run: cli_exit_status,
    },
];

/// Names of the checks a suite runs, in order.
pub fn invariant_names(suite: Suite) -> Vec<&'static str> {
    CHECKS
        .iter()
        .filter(|c| suite.includes(c.module))
        .map(|c| c.name)
        .collect()
}

fn run_check(check: &Check, seed: u64) -> CheckResult {
    let (passed, detail) = match (check.run)(seed) {
        Ok(outcome) => outcome,
        Err(e) => (false, format!("error: {e}")),
    };
    CheckResult {
        name: check.name.to_string(),
        passed,
        detail,
    }
}

/// Runs every check of `suite`. A kernel fixture, when given, is checked
/// first against the dense oracle.
pub fn run_suite(suite: Suite, seed: u64, kernel_fixture: Option<&str>) -> VerifyReport {
    let mut results = Vec::new();
    if let Some(text) = kernel_fixture {
        results.push(check_kernel_fixture(text, seed));
    }
    for check in CHECKS.iter().filter(|c| suite.includes(c.module)) {
        results.push(run_check(check, seed));
    }
    VerifyReport { suite, seed, results }
}

/// Parses a kernel CSV and compares its fast matvec with the dense product.
pub fn check_kernel_fixture(text: &str, seed: u64) -> CheckResult {
    let name = "tcore.kernel-fixture".to_string();
    let outcome = read_kernel(text.as_bytes()).and_then(|k| {
        let x = uniform_vec(&mut stream(seed, 0xf1), k.n());
        let fast = toeplitz_matvec(&k, &x, &mut FftWorkspace::for_len(k.n()))?;
        let err = relative_l2(&fast, &dense_matvec(&toeplitz_dense(&k)?, &x));
        Ok((err <= 1e-10, format!("n={} rel={err:.3e}", k.n())))
    });
    match outcome {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("invalid kernel: {e}"),
        },
    }
}

fn verdict(passed: bool, detail: String) -> Result<Outcome> {
    Ok((passed, detail))
}

fn random_kernel<R: Rng>(rng: &mut R, n: usize, causal: bool) -> Result<ToeplitzKernel> {
    ToeplitzKernel::from_fn(n, causal, |_| rng.random_range(-1.0..1.0))
}

fn tcore_oracle(seed: u64) -> Result<Outcome> {
    let mut rng = stream(seed, 1);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for n in 2..=512 {
        let k = random_kernel(&mut rng, n, n % 3 == 0)?;
        let x = uniform_vec(&mut rng, n);
        let fast = toeplitz_matvec(&k, &x, &mut FftWorkspace::for_len(n))?;
        worst = worst.max(relative_l2(&fast, &dense_matvec(&toeplitz_dense(&k)?, &x)));
        cases += 1;
    }
    verdict(worst <= 1e-10, format!("cases={cases} max_rel={worst:.3e}"))
}

fn tcore_linearity(seed: u64) -> Result<Outcome> {
    let mut rng = stream(seed, 2);
    let mut worst: f64 = 0.0;
    for n in [2, 7, 64, 333, 512] {
        let k = random_kernel(&mut rng, n, false)?;
        let mut ws = FftWorkspace::for_len(n);
        let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let x = uniform_vec(&mut rng, n);
        let z = uniform_vec(&mut rng, n);
        let mix: Vec<f64> = x.iter().zip(&z).map(|(p, q)| a * p + b * q).collect();
        let lhs = toeplitz_matvec(&k, &mix, &mut ws)?;
        let kx = toeplitz_matvec(&k, &x, &mut ws)?;
        let kz = toeplitz_matvec(&k, &z, &mut ws)?;
        let rhs: Vec<f64> = kx.iter().zip(&kz).map(|(p, q)| a * p + b * q).collect();
        worst = worst.max(relative_l2(&lhs, &rhs));
    }
    verdict(worst <= 1e-12, format!("cases=5 max_rel={worst:.3e}"))
}

fn tcore_causality(seed: u64) -> Result<Outcome> {
    let mut rng = stream(seed, 3);
    let mut worst: f64 = 0.0;
    let mut probes = 0;
    for n in [3, 16, 100, 257, 512] {
        let k = random_kernel(&mut rng, n, true)?;
        let l1: f64 = k.values().iter().map(|v| v.abs()).sum();
        let mut ws = FftWorkspace::for_len(n);
        let x = uniform_vec(&mut rng, n);
        let y = toeplitz_matvec(&k, &x, &mut ws)?;
        for i in [0, n / 3, n / 2, n - 2] {
            let mut xp = x.clone();
            for v in &mut xp[i + 1..] {
                *v += rng.random_range(-10.0..10.0);
            }
            let yp = toeplitz_matvec(&k, &xp, &mut ws)?;
            let scale = l1 * xp.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
            worst = worst.max((yp[i] - y[i]).abs() / scale);
            probes += 1;
        }
    }
    // roundoff of a length-2n FFT round trip
    verdict(worst <= 1e-13, format!("probes={probes} max_change={worst:.3e}"))
}

fn tcore_decay_monotone(_seed: u64) -> Result<Outcome> {
    let n = 512;
    let ones = ToeplitzKernel::from_fn(n, false, |_| 1.0)?;
    let mut ok = true;
    for lambda in [0.5, 0.9, 0.99, 0.999] {
        let biased = apply_decay_bias(&ones, DecayBias::new(lambda)?);
        for d in 0..n as isize - 1 {
            ok &= biased.at(d + 1).abs() < biased.at(d).abs();
            ok &= biased.at(-d - 1).abs() < biased.at(-d).abs();
        }
    }
    verdict(ok, format!("lambdas=4 n={n} strictly_decreasing={ok}"))
}

fn hat(t: f64) -> f64 {
    (1.0 - t.abs()).max(0.0)
}

fn ski_exactness(seed: u64) -> Result<Outcome> {
    let mut rng = stream(seed, 4);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for (n, r) in [(37, 5), (64, 9), (64, 17), (100, 12), (128, 33), (16, 17)] {
        let grid = make_inducing_grid(n, r)?;
        let (p, h) = (grid.points().to_vec(), grid.spacing());
        let w = observation_weights(&grid, n, Degree::Linear)?;
        let wd = w.to_dense();

        // kernel equal to the tensor-product linear interpolant of its grid values
        let a = random_kernel(&mut rng, r, false)?;
        let ad = toeplitz_dense(&a)?;
        let t = Matrix::from_fn(n, n, |i, j| {
            let mut v = 0.0;
            for (ia, pa) in p.iter().enumerate() {
                let wa = hat((i as f64 - pa) / h);
                if wa == 0.0 {
                    continue;
                }
                for (ib, pb) in p.iter().enumerate() {
                    v += wa * hat((j as f64 - pb) / h) * ad[(ia, ib)];
                }
            }
            v
        });
        worst = worst.max((&wd * &ad * wd.transpose() - t).norm());

        // stationary affine kernel: its own linear interpolant on any grid
        let (c0, c1) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let affine = |d: f64| c0 + c1 * d;
        let aa = ToeplitzKernel::from_fn(r, false, |k| affine(k as f64 * h))?;
        let ta = Matrix::from_fn(n, n, |i, j| affine(i as f64 - j as f64));
        worst = worst.max((&wd * toeplitz_dense(&aa)? * wd.transpose() - ta).norm());
        cases += 2;
    }
    // stationary piecewise-linear kernel with knots on the observation points
    for n in [8, 50, 128] {
        let grid = InducingGrid::for_sequence(n, n, GridSpan::Observed)?;
        let w = observation_weights(&grid, n, Degree::Linear)?;
        let a = random_kernel(&mut rng, n, false)?;
        let t = toeplitz_dense(&a)?;
        let wd = w.to_dense();
        worst = worst.max((&wd * &t * wd.transpose() - &t).norm());
        cases += 1;
    }
    verdict(worst <= 1e-10, format!("cases={cases} max_fro={worst:.3e}"))
}

fn ski_partition(seed: u64) -> Result<Outcome> {
    let mut rng = stream(seed, 5);
    let mut row_err: f64 = 0.0;
    let mut const_err: f64 = 0.0;
    let c = 2.5;
    for (n, r) in [(10, 4), (64, 8), (100, 33), (256, 64), (512, 64)] {
        let grid = make_inducing_grid(n, r)?;
        for degree in [Degree::Linear, Degree::Cubic] {
            let mut queries: Vec<f64> = (0..n).map(|i| i as f64).collect();
            queries.extend((0..200).map(|_| rng.random_range(grid.lo()..=grid.hi())));
            let w = interpolation_weights(&grid, &queries, degree)?;
            for i in 0..w.rows() {
                row_err = row_err.max((w.row(i).1.iter().sum::<f64>() - 1.0).abs());
            }
            let wo = observation_weights(&grid, n, degree)?;
            let a = ToeplitzKernel::from_fn(r, false, |_| c)?;
            let y = ski_lowrank_matvec(&wo, &a, &vec![1.0; n], &mut FftWorkspace::for_len(r))?;
            const_err = const_err.max(relative_l2(&y, &vec![c * n as f64; n]));
        }
    }
    verdict(
        row_err <= 1e-12 && const_err <= 1e-8,
        format!("grids=10 max_row_sum_err={row_err:.3e} const_rel={const_err:.3e}"),
    )
}

fn ski_lagrange(seed: u64) -> Result<Outcome> {
    let mut rng = stream(seed, 6);
    let mut worst_ratio: f64 = 0.0;
    let mut mid_err: f64 = 0.0;
    let mut queries_checked = 0;
    for (n, r) in [(4, 2), (64, 8), (100, 7), (128, 33), (512, 64), (1000, 91)] {
        let grid = make_inducing_grid(n, r)?;
        let h = grid.spacing();
        let bound = h * h / 8.0;
        let mut queries: Vec<f64> = (0..n).map(|i| i as f64).collect();
        queries.extend((0..500).map(|_| rng.random_range(grid.lo()..=grid.hi())));
        let w = interpolation_weights(&grid, &queries, Degree::Linear)?;
        for i in 0..w.rows() {
            worst_ratio = worst_ratio.max(w.lagrange_factor(i) / bound);
        }
        let mids: Vec<f64> = grid.points().windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        let wm = interpolation_weights(&grid, &mids, Degree::Linear)?;
        for i in 0..wm.rows() {
            mid_err = mid_err.max((wm.lagrange_factor(i) - bound).abs() / bound);
        }
        queries_checked += w.rows() + wm.rows();
    }
    verdict(
        worst_ratio <= 1.0 + 1e-12 && mid_err <= 1e-12,
        format!("queries={queries_checked} max_factor_over_h2_8={worst_ratio:.15} midpoint_rel={mid_err:.3e}"),
    )
}

fn ski_warp_odd(seed: u64) -> Result<Outcome> {
    let mut rng = stream(seed, 7);
    let mut ts: Vec<f64> = (0..=2000).map(|k| k as f64).collect();
    ts.extend((0..2000).map(|_| rng.random_range(0.0..1e4)));
    ts.extend([1e-300, 0.5, 1e6, f64::MAX]);
    let mut ok = true;
    for lambda in [0.5, 0.9, 0.99, 0.999] {
        for &t in &ts {
            ok &= inverse_time_warp(-t, lambda)? == -inverse_time_warp(t, lambda)?;
        }
    }
    verdict(ok, format!("points={} exact={ok}", 4 * ts.len()))
}

fn ski_scan(seed: u64) -> Result<Outcome> {
    let mut rng = stream(seed, 8);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for n in 1..=256 {
        let r = (n / 4).clamp(2, n + 1);
        let grid = make_inducing_grid(n, r)?;
        let a = uniform_matrix(&mut rng, r, r);
        let x = uniform_vec(&mut rng, n);
        for degree in [Degree::Linear, Degree::Cubic] {
            if r < degree.stencil() {
                continue;
            }
            let w = observation_weights(&grid, n, degree)?;
            let oracle = masked_ski_matvec(&w, &a, &x)?;
            for exec in [ExecPath::Sparse, ExecPath::Dense] {
                let y = ski_causal_scan(&w.clone().with_exec(exec), &a, &x)?;
                worst = worst.max(relative_l2(&y, &oracle));
                cases += 1;
            }
        }
    }
    verdict(worst <= 1e-10, format!("cases={cases} max_rel={worst:.3e}"))
}

/// Seeded real-even spectra: MLP responses and synthetic shapes.
fn spectrum_corpus(seed: u64) -> Result<Vec<FreqResponse>> {
    let mut out = Vec::new();
    for (i, act) in [Activation::Gelu, Activation::Silu, Activation::Relu]
        .into_iter()
        .enumerate()
    {
        for s in 0..4u64 {
            let mut rng = stream(seed, 0x100 + 4 * i as u64 + s);
            let net = MlpRpe::with_hidden(32, 2, 1, act, s % 2 == 0, &mut rng)?;
            let n = [64, 256][s as usize % 2];
            out.extend(real_responses(&CosInput(&net), n)?);
        }
    }
    let mut rng = stream(seed, 9);
    for (k, n) in [16usize, 64, 100, 256].into_iter().enumerate() {
        let noise: Vec<f64> = uniform_vec(&mut rng, n + 1);
        out.push(FreqResponse::real_even(n, noise)?);
        let coeffs = uniform_vec(&mut rng, 8);
        out.push(FreqResponse::sample_real_even(n, |w| {
            coeffs
                .iter()
                .enumerate()
                .map(|(j, c)| c * ((j + k) as f64 * w).cos())
                .sum()
        })?);
    }
    out.push(FreqResponse::sample_real_even(128, |w| {
        (-(w - 1.0).powi(2) * 4.0).exp()
    })?);
    out.push(FreqResponse::sample_real_even(128, |_| 1.0)?);
    Ok(out)
}

fn fdom_hilbert(seed: u64) -> Result<Outcome> {
    let mut rng = stream(seed, 10);
    let mut worst: f64 = 0.0;
    let mut cross: f64 = 0.0;
    let sizes = [4usize, 8, 33, 128, 256];
    for &n in &sizes {
        let bins = uniform_vec(&mut rng, n + 1);
        let mut f = even_extension(&bins);
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        f.iter_mut().for_each(|v| *v -= mean);
        let nyquist = f
            .iter()
            .enumerate()
            .map(|(m, v)| if m % 2 == 0 { *v } else { -v })
            .sum::<f64>()
            / f.len() as f64;
        let twice = periodic_hilbert(&periodic_hilbert(&f)?)?;
        let scale = f.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        for (m, (hh, fv)) in twice.iter().zip(&f).enumerate() {
            let ac = fv - nyquist * if m % 2 == 0 { 1.0 } else { -1.0 };
            worst = worst.max((hh + ac).abs() / scale);
        }
        let kh = FreqResponse::real_even(n, f[..=n].to_vec())?;
        cross = cross.max(relative_l2(&discrete_hilbert(&kh)?, &hilbert_periodized(&f[..=n])));
    }
    verdict(
        worst <= 1e-8 && cross <= 1e-10,
        format!(
            "sizes={} max_hh_plus_ac={worst:.3e} cot_oracle_rel={cross:.3e}",
            sizes.len()
        ),
    )
}

fn anticausal_ratio(kh: &FreqResponse) -> Result<f64> {
    let k = impulse_response(&causal_freq_kernel(kh)?);
    let n = kh.n();
    let peak = k.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let anti = k[n + 1..].iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    Ok(if peak == 0.0 { 0.0 } else { anti / peak })
}

fn fdom_causality(seed: u64) -> Result<Outcome> {
    let corpus = spectrum_corpus(seed)?;
    let mut worst: f64 = 0.0;
    for kh in &corpus {
        worst = worst.max(anticausal_ratio(kh)?);
    }
    verdict(
        worst <= 1e-8,
        format!("spectra={} max_anticausal_over_peak={worst:.3e}", corpus.len()),
    )
}

fn fdom_real_part(seed: u64) -> Result<Outcome> {
    let corpus = spectrum_corpus(seed)?;
    let mut ok = true;
    for kh in &corpus {
        let kc = causal_freq_kernel(kh)?;
        ok &= kc
            .samples()
            .iter()
            .zip(kh.samples())
            .all(|(a, b)| a.re.to_bits() == b.re.to_bits());
    }
    verdict(ok, format!("spectra={} bitwise={ok}", corpus.len()))
}

fn parseval_gap(kh: &FreqResponse) -> f64 {
    let n = kh.n();
    let k = impulse_response(kh);
    let time: f64 = k.iter().map(|v| v * v).sum();
    let freq: f64 = kh
        .samples()
        .iter()
        .enumerate()
        .map(|(m, c)| {
            if m == 0 || m == n {
                c.norm_sqr()
            } else {
                2.0 * c.norm_sqr()
            }
        })
        .sum::<f64>()
        / (2 * n) as f64;
    (time - freq).abs() / time.max(f64::MIN_POSITIVE)
}

fn fdom_parseval(seed: u64) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for kh in spectrum_corpus(seed)? {
        worst = worst
            .max(parseval_gap(&kh))
            .max(parseval_gap(&causal_freq_kernel(&kh)?));
        count += 2;
    }
    let mut rng = stream(seed, 11);
    for n in [8, 64, 256] {
        let net = MlpRpe::with_hidden(16, 2, 4, Activation::Gelu, true, &mut rng)?;
        for kh in bidirectional_responses(&CosInput(&net), n)? {
            worst = worst.max(parseval_gap(&kh));
            count += 1;
        }
    }
    verdict(worst <= 1e-10, format!("transforms={count} max_rel_gap={worst:.3e}"))
}

/// Complex causal response built with the cotangent Hilbert oracle.
fn causal_by_oracle(kh: &FreqResponse) -> Result<FreqResponse> {
    let re = kh.real();
    let h = hilbert_periodized(&re);
    let n = kh.n();
    let samples = re
        .iter()
        .zip(&h)
        .enumerate()
        .map(|(m, (&a, &b))| {
            let im = if m == 0 || m == n { 0.0 } else { -b };
            tno_core::Complex64::new(a, im)
        })
        .collect();
    FreqResponse::complex(n, samples)
}

fn fdom_oracle(seed: u64) -> Result<Outcome> {
    let mut rng = stream(seed, 12);
    let d = 2;
    let causal_net = MlpRpe::with_hidden(8, 2, d, Activation::Gelu, true, &mut rng)?;
    let bidir_net = MlpRpe::with_hidden(8, 2, 2 * d, Activation::Silu, true, &mut rng)?;
    let (causal_rpe, bidir_rpe) = (CosInput(&causal_net), CosInput(&bidir_net));
    let mut worst_causal: f64 = 0.0;
    let mut worst_bidir: f64 = 0.0;
    for n in 1..=256 {
        let x = uniform_matrix(&mut rng, n, d);
        let yc = fd_tno_causal(&x, &causal_rpe)?;
        let yb = fd_tno_bidirectional(&x, &bidir_rpe)?;
        let reals = real_responses(&causal_rpe, n)?;
        let complexes = bidirectional_responses(&bidir_rpe, n)?;
        for l in 0..d {
            let xl = x.column(l).as_slice().to_vec();
            let dc = response_dense(&causal_by_oracle(&reals[l])?, true)?;
            worst_causal = worst_causal.max(relative_l2(yc.column(l).as_slice(), &dense_matvec(&dc, &xl)));
            let db = response_dense(&complexes[l], false)?;
            worst_bidir = worst_bidir.max(relative_l2(yb.column(l).as_slice(), &dense_matvec(&db, &xl)));
        }
    }
    verdict(
        worst_causal <= 1e-8 && worst_bidir <= 1e-8,
        format!("cases=256 causal_max_rel={worst_causal:.3e} bidir_max_rel={worst_bidir:.3e}"),
    )
}

/// Largest relative gap between analytic and central-difference gradients
/// of `<upstream, net(t)>` over every parameter.
pub fn gradient_gap(net: &mut MlpRpe, t: f64, upstream: &[f64]) -> Result<(f64, usize)> {
    // fourth-order central stencil: truncation O(h^4) lets h stay large
    // enough that roundoff does not swamp small coordinates
    const STEP: f64 = 1e-3;
    const FLOOR: f64 = 1e-8;
    net.forward_train(t);
    let analytic = net.backward(upstream)?.flatten();
    let base = net.params();
    let mut probe = base.clone();
    let eval = |net: &mut MlpRpe, p: &[f64]| -> Result<f64> {
        net.set_params(p)?;
        Ok(net.forward(t).iter().zip(upstream).map(|(a, b)| a * b).sum())
    };
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut at = |k: f64| {
            probe[i] = base[i] + k * STEP;
            eval(net, &probe)
        };
        let fd = (at(-2.0)? - 8.0 * at(-1.0)? + 8.0 * at(1.0)? - at(2.0)?) / (12.0 * STEP);
        probe[i] = base[i];
        let denom = fd.abs().max(analytic[i].abs()).max(FLOOR);
        worst = worst.max((fd - analytic[i]).abs() / denom);
    }
    net.set_params(&base)?;
    Ok((worst, base.len()))
}

fn rpe_gradients(seed: u64) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut coords = 0;
    let mut min_params = usize::MAX;
    for (i, (act, ln)) in [
        (Activation::Gelu, true),
        (Activation::Silu, true),
        (Activation::Gelu, false),
        (Activation::Silu, false),
    ]
    .into_iter()
    .enumerate()
    {
        let mut rng = stream(seed, 0x200 + i as u64);
        let mut net = MlpRpe::with_hidden(16, 2, 4, act, ln, &mut rng)?;
        min_params = min_params.min(net.param_count());
        for t in [-0.7, 0.2, 1.3] {
            let upstream = uniform_vec(&mut rng, 4);
            let (gap, count) = gradient_gap(&mut net, t, &upstream)?;
            worst = worst.max(gap);
            coords += count;
        }
    }
    verdict(
        worst <= 1e-5 && min_params >= 200,
        format!("nets=4 coordinates={coords} min_params={min_params} max_rel={worst:.3e}"),
    )
}

fn rpe_probe(seed: u64) -> Result<Outcome> {
    let mut passed = 0;
    let mut total = 0;
    let mut max_kinks = 0;
    for s in 0..4u64 {
        let mut rng = stream(seed, 0x300 + s);
        let net = MlpRpe::with_hidden(16, 2, 3, Activation::Relu, false, &mut rng)?;
        let rep = piecewise_linearity_probe(&net, -4.0, 4.0, 10_000)?;
        passed += rep.passed as usize;
        max_kinks = max_kinks.max(rep.breakpoints.iter().copied().max().unwrap_or(0));
        total += 1;
    }
    let wide = crate::figure_rpe(Activation::Relu, seed);
    let rep = piecewise_linearity_probe(&wide, -1.0, 1.0, 10_000)?;
    passed += rep.passed as usize;
    total += 1;
    let gelu = crate::figure_rpe(Activation::Gelu, seed);
    let refused = matches!(
        piecewise_linearity_probe(&gelu, -1.0, 1.0, 10_000),
        Err(Error::ProbeRefused(_))
    );
    verdict(
        passed == total && refused,
        format!("relu_nets={total} passed={passed} max_kinks={max_kinks} gelu_refused={refused}"),
    )
}

fn rpe_layernorm(seed: u64) -> Result<Outcome> {
    let mut rng = stream(seed, 13);
    let mut exact: f64 = 0.0;
    let mut with_eps: f64 = 0.0;
    for width in [2, 4, 16, 64] {
        let z = uniform_vec(&mut rng, width);
        for c in [1e-3, 0.5, 3.0, 1e3] {
            let scaled: Vec<f64> = z.iter().map(|v| c * v).collect();
            for (eps, worst) in [(0.0, &mut exact), (LAYER_NORM_EPS, &mut with_eps)] {
                let (mut a, mut b) = (z.clone(), scaled.clone());
                layer_normalize(&mut a, eps);
                layer_normalize(&mut b, eps);
                *worst = a.iter().zip(&b).fold(*worst, |m, (p, q)| m.max((p - q).abs()));
            }
        }
    }
    verdict(
        exact <= 1e-10,
        format!("cases=16 max_diff={exact:.3e} max_diff_with_eps={with_eps:.3e}"),
    )
}

fn analysis_bound(_seed: u64) -> Result<Outcome> {
    let mut cells = 0;
    let mut holds = 0;
    let mut worst: f64 = 0.0;
    for kernel in bound_suite() {
        for n in [64, 128] {
            for r in [8, 16, 32] {
                for degree in [Degree::Linear, Degree::Cubic] {
                    cells += 1;
                    let grid = make_inducing_grid(n, r)?;
                    if let Ok(rep) = ski_bound_evaluate(&kernel, &grid, degree, n) {
                        holds += rep.holds() as usize;
                        worst = worst.max(rep.ski_err_empirical / rep.ski_bound);
                    }
                }
            }
        }
    }
    verdict(
        holds == cells,
        format!("cells={cells} holds={holds} max_err_over_bound={worst:.3e}"),
    )
}

fn nystrom_collapse_gap(kernel: &TestKernel, n: usize) -> Result<f64> {
    let grid = InducingGrid::for_sequence(n, n, GridSpan::Observed)?;
    let p = grid.points();
    let f = Matrix::from_fn(n, n, |i, j| kernel.eval(i as f64 - p[j]));
    let a = Matrix::from_fn(n, n, |i, j| kernel.eval(p[i] - p[j]));
    let b = Matrix::from_fn(n, n, |i, j| kernel.eval(p[i] - j as f64));
    let t = Matrix::from_fn(n, n, |i, j| kernel.eval(i as f64 - j as f64));
    Ok(svd_norm(&(nystrom_dense(&f, &a, &b)? - best_rank(&t, n))))
}

fn analysis_nystrom(_seed: u64) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for kernel in bound_suite() {
        for n in [8, 32, 64] {
            worst = worst.max(nystrom_collapse_gap(&kernel, n)?);
            cases += 1;
        }
    }
    verdict(worst <= 1e-8, format!("cases={cases} max_nystrom_err={worst:.3e}"))
}

fn analysis_power(seed: u64) -> Result<Outcome> {
    let mut rng = stream(seed, 14);
    let mut mats = vec![
        Matrix::identity(7, 7),
        Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0])),
        uniform_matrix(&mut rng, 64, 64),
        uniform_matrix(&mut rng, 128, 32),
        uniform_matrix(&mut rng, 32, 128),
        uniform_matrix(&mut rng, 256, 256),
    ];
    let gauss = TestKernel::gaussian(8.0);
    mats.push(Matrix::from_fn(100, 100, |i, j| gauss.eval(i as f64 - j as f64)));
    let u = uniform_vec(&mut rng, 50);
    mats.push(Matrix::from_fn(50, 50, |i, j| u[i] * u[j]));
    let mut worst: f64 = 0.0;
    for m in &mats {
        let exact = singular_values(m)[0];
        worst = worst.max((spectral_norm(m)? - exact).abs() / exact);
    }
    verdict(worst <= 1e-8, format!("matrices={} max_rel={worst:.3e}", mats.len()))
}

fn cli_determinism(seed: u64) -> Result<Outcome> {
    let mut same = true;
    let mut files = 0;
    for which in figures::Figure::ALL {
        let first = figures::render(which, seed, figures::DEFAULT_N)?;
        let second = figures::render(which, seed, figures::DEFAULT_N)?;
        same &= first == second;
        files += first.len();
    }
    let check = &CHECKS[0];
    same &= run_check(check, seed) == run_check(check, seed);
    verdict(
        same,
        format!("figure_files={files} repeated_check={} identical={same}", check.name),
    )
}

fn cli_exit_status(seed: u64) -> Result<Outcome> {
    let pass = CheckResult {
        name: "a".into(),
        passed: true,
        detail: String::new(),
    };
    let fail = CheckResult {
        name: "b".into(),
        passed: false,
        detail: String::new(),
    };
    let report = |results| VerifyReport {
        suite: Suite::All,
        seed,
        results,
    };
    let clean = report(vec![pass.clone(), pass.clone()]).exit_code();
    let dirty = report(vec![pass, fail]).exit_code();
    let empty = report(Vec::new()).exit_code();
    let truncated = check_kernel_fixture("# n=4 causal=0\n1\n2\n3\n", seed);
    let fixture = report(vec![truncated.clone()]).exit_code();
    let ok =
        clean == EXIT_OK && empty == EXIT_OK && dirty == EXIT_FAILURE && fixture == EXIT_FAILURE && !truncated.passed;
    verdict(
        ok,
        format!("clean={clean} empty={empty} failing={dirty} truncated_fixture={fixture}"),
    )
}
