//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the console.

use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::Rng;
use tno_cli::bench::{self, BenchPlan};
use tno_cli::verify::gradient_gap;
use tno_cli::{seeded_rpe, stream, uniform_matrix, uniform_vec};
use tno_core::analysis::{bound_suite, decay_diagnostics, ski_bound_evaluate, DecayMode};
use tno_core::config::{Mode, TnoConfig};
use tno_core::fdom::{
    bidirectional_responses, causal_freq_kernel, fd_tno_bidirectional, fd_tno_causal, impulse_response, real_responses,
    FreqResponse,
};
use tno_core::oracle::{
    banded_dense, dense_matvec, hilbert_periodized, masked_ski_matvec, relative_l2, response_dense, ski_dense,
};
use tno_core::rpe::{fit_fd_causal, fit_ski, piecewise_linearity_probe, Activation, CosInput, FitOptions, MlpRpe};
use tno_core::ski::{
    interpolation_weights, make_inducing_grid, observation_weights, ski_causal_scan, ski_lowrank_matvec, Degree,
    ExecPath, FilterMode, SparseFilter, WarpedRpe,
};
use tno_core::tcore::{toeplitz_dense, toeplitz_matvec, FftWorkspace, ToeplitzKernel};
use tno_core::{Complex64, Error, Result};

type Verdict = Result<(bool, String)>;

const CASES: usize = 60;

fn case_lengths(salt: u64) -> Vec<usize> {
    let mut rng = stream(17, salt);
    (0..CASES).map(|_| rng.random_range(2..=256)).collect()
}

fn random_kernel(rng: &mut impl Rng, n: usize, causal: bool) -> Result<ToeplitzKernel> {
    ToeplitzKernel::from_fn(n, causal, |_| rng.random_range(-1.0..1.0))
}

fn oracle_equivalence() -> Verdict {
    let start = Instant::now();
    let mut rng = stream(1, 1);
    let mut worst = [0.0f64; 6];

    for n in case_lengths(1) {
        let causal = rng.random_bool(0.5);
        let k = random_kernel(&mut rng, n, causal)?;
        let x = uniform_vec(&mut rng, n);
        let y = toeplitz_matvec(&k, &x, &mut FftWorkspace::for_len(n))?;
        worst[0] = worst[0].max(relative_l2(&y, &dense_matvec(&toeplitz_dense(&k)?, &x)));
    }
    for n in case_lengths(2) {
        let m = rng.random_range(1..=33usize);
        let mode = if rng.random_bool(0.5) {
            FilterMode::Causal
        } else {
            FilterMode::Centered
        };
        let taps = if mode == FilterMode::Centered { m | 1 } else { m };
        let f = SparseFilter::new(uniform_vec(&mut rng, taps), mode)?;
        let x = uniform_vec(&mut rng, n);
        let y = tno_core::ski::sparse_conv_matvec(&f, &x)?;
        worst[1] = worst[1].max(relative_l2(&y, &dense_matvec(&banded_dense(&f, n), &x)));
    }
    for n in case_lengths(3) {
        let r = rng.random_range(2..=(n + 1).min(64));
        let degree = if r >= 4 && rng.random_bool(0.5) {
            Degree::Cubic
        } else {
            Degree::Linear
        };
        let w = observation_weights(&make_inducing_grid(n, r)?, n, degree)?;
        let a = random_kernel(&mut rng, r, false)?;
        let x = uniform_vec(&mut rng, n);
        let y = ski_lowrank_matvec(&w, &a, &x, &mut FftWorkspace::for_len(r))?;
        let oracle = dense_matvec(&ski_dense(&w, &toeplitz_dense(&a)?)?, &x);
        worst[2] = worst[2].max(relative_l2(&y, &oracle));
    }
    for n in case_lengths(4) {
        let r = rng.random_range(2..=(n + 1).min(64));
        let exec = if rng.random_bool(0.5) {
            ExecPath::Sparse
        } else {
            ExecPath::Dense
        };
        let w = observation_weights(&make_inducing_grid(n, r)?, n, Degree::Linear)?.with_exec(exec);
        let a = uniform_matrix(&mut rng, r, r);
        let x = uniform_vec(&mut rng, n);
        let y = ski_causal_scan(&w, &a, &x)?;
        worst[3] = worst[3].max(relative_l2(&y, &masked_ski_matvec(&w, &a, &x)?));
    }
    let d = 3;
    let causal_net = MlpRpe::with_hidden(16, 2, d, Activation::Gelu, true, &mut rng)?;
    let bidir_net = MlpRpe::with_hidden(16, 2, 2 * d, Activation::Silu, true, &mut rng)?;
    for n in case_lengths(5) {
        let x = uniform_matrix(&mut rng, n, d);
        let y = fd_tno_causal(&x, &CosInput(&causal_net))?;
        for (l, kh) in real_responses(&CosInput(&causal_net), n)?.iter().enumerate() {
            // imaginary part from the cotangent form of the periodic Hilbert sum
            let re = kh.real();
            let h = hilbert_periodized(&re);
            let samples = (0..=n)
                .map(|m| Complex64::new(re[m], if m == 0 || m == n { 0.0 } else { -h[m] }))
                .collect();
            let dense = response_dense(&FreqResponse::complex(n, samples)?, true)?;
            let xl = x.column(l).as_slice().to_vec();
            worst[4] = worst[4].max(relative_l2(y.column(l).as_slice(), &dense_matvec(&dense, &xl)));
        }
    }
    for n in case_lengths(6) {
        let x = uniform_matrix(&mut rng, n, d);
        let y = fd_tno_bidirectional(&x, &CosInput(&bidir_net))?;
        for (l, kh) in bidirectional_responses(&CosInput(&bidir_net), n)?.iter().enumerate() {
            let xl = x.column(l).as_slice().to_vec();
            let dense = response_dense(kh, false)?;
            worst[5] = worst[5].max(relative_l2(y.column(l).as_slice(), &dense_matvec(&dense, &xl)));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let real_ok = worst[..4].iter().all(|&e| e <= 1e-10);
    let fd_ok = worst[4..].iter().all(|&e| e <= 1e-8);
    Ok((
        real_ok && fd_ok && secs < 60.0,
        format!(
            "{CASES} cases each; toeplitz {:.1e} sparse_conv {:.1e} lowrank {:.1e} scan {:.1e} fd_causal {:.1e} fd_bidir {:.1e}; {secs:.1}s",
            worst[0], worst[1], worst[2], worst[3], worst[4], worst[5]
        ),
    ))
}

fn causality() -> Verdict {
    let mut spectra = Vec::new();
    for (i, act) in [Activation::Gelu, Activation::Silu, Activation::Relu]
        .into_iter()
        .enumerate()
    {
        for s in 0..4u64 {
            let net = seeded_rpe(1, act, s % 2 == 0, 100 + 10 * i as u64 + s);
            spectra.extend(real_responses(&CosInput(&net), [128, 512][s as usize % 2])?);
        }
    }
    let mut rng = stream(2, 0);
    for n in [16, 64, 100, 256, 512] {
        spectra.push(FreqResponse::real_even(n, uniform_vec(&mut rng, n + 1))?);
        let c = uniform_vec(&mut rng, 6);
        spectra.push(FreqResponse::sample_real_even(n, |w| {
            c.iter().enumerate().map(|(j, a)| a * (j as f64 * w).cos()).sum::<f64>() + (3.0 * w).sin().powi(2)
        })?);
    }
    let mut worst_leak: f64 = 0.0;
    for kh in &spectra {
        let k = impulse_response(&causal_freq_kernel(kh)?);
        let n = kh.n();
        let peak = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let anti = k[n + 1..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst_leak = worst_leak.max(anti / peak);
    }

    let mut worst_change: f64 = 0.0;
    let mut probes = 0;
    for (n, seed) in [(32, 0u64), (128, 1), (511, 2)] {
        let net = MlpRpe::with_hidden(32, 2, 4, Activation::Gelu, true, &mut stream(seed, 3))?;
        let rpe = CosInput(&net);
        let x = uniform_matrix(&mut rng, n, 4);
        let y = fd_tno_causal(&x, &rpe)?;
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in [0, n / 4, n / 2, n - 2] {
            let mut xp = x.clone();
            for j in i + 1..n {
                for l in 0..4 {
                    xp[(j, l)] += rng.random_range(-5.0..5.0);
                }
            }
            let yp = fd_tno_causal(&xp, &rpe)?;
            for l in 0..4 {
                worst_change = worst_change.max((yp[(i, l)] - y[(i, l)]).abs() / scale);
            }
            probes += 1;
        }
    }
    Ok((
        spectra.len() >= 20 && worst_leak <= 1e-8 && worst_change <= 1e-6,
        format!(
            "{} spectra max anticausal/peak {worst_leak:.1e}; {probes} perturbations max output change {worst_change:.1e}",
            spectra.len()
        ),
    ))
}

fn error_bound() -> Verdict {
    let start = Instant::now();
    let (mut cells, mut holds) = (0, 0);
    for kernel in bound_suite() {
        for n in [64, 128] {
            for r in [8, 16, 32] {
                for degree in [Degree::Linear, Degree::Cubic] {
                    cells += 1;
                    match ski_bound_evaluate(&kernel, &make_inducing_grid(n, r)?, degree, n) {
                        Ok(rep) => holds += rep.holds() as usize,
                        Err(e) => eprintln!("  {} n={n} r={r} N={}: {e}", kernel.name(), degree.order()),
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        holds == cells && cells == 60 && secs < 120.0,
        format!("{holds}/{cells} cells hold; {secs:.1}s"),
    ))
}

fn lagrange_factor() -> Verdict {
    let mut rng = stream(4, 0);
    let (mut worst, mut mid_gap, mut count) = (0.0f64, 0.0f64, 0);
    for (n, r) in [(4, 2), (16, 5), (64, 8), (100, 7), (512, 64), (777, 100), (4096, 64)] {
        let grid = make_inducing_grid(n, r)?;
        let bound = grid.spacing().powi(2) / 8.0;
        let mut queries: Vec<f64> = (0..n).map(|i| i as f64).collect();
        queries.extend((0..1000).map(|_| rng.random_range(grid.lo()..=grid.hi())));
        let w = interpolation_weights(&grid, &queries, Degree::Linear)?;
        for i in 0..w.rows() {
            worst = worst.max(w.lagrange_factor(i) / bound);
        }
        let mids: Vec<f64> = grid.points().windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        let wm = interpolation_weights(&grid, &mids, Degree::Linear)?;
        for i in 0..wm.rows() {
            mid_gap = mid_gap.max((wm.lagrange_factor(i) - bound).abs() / bound);
        }
        count += w.rows() + wm.rows();
    }
    Ok((
        worst <= 1.0 + 1e-12 && mid_gap <= 1e-12,
        format!("{count} queries; max factor/(h^2/8) = {worst:.15}; midpoint rel gap {mid_gap:.1e}"),
    ))
}

fn decay() -> Verdict {
    let (mut gelu_far, mut relu_tail): (f64, f64) = (0.0, 0.0);
    let mut silu_ratio: f64 = 0.0;
    let mut all_pass = true;
    for seed in 0..10u64 {
        for (act, mode) in [
            (Activation::Gelu, DecayMode::Gelu),
            (Activation::Silu, DecayMode::Silu),
            (Activation::Relu, DecayMode::Relu),
        ] {
            let net = seeded_rpe(1, act, true, seed);
            let k = impulse_response(&real_responses(&CosInput(&net), 512)?[0]);
            let rep = decay_diagnostics(&k, mode)?;
            all_pass &= rep.passed;
            match mode {
                DecayMode::Gelu => gelu_far = gelu_far.max(rep.far_ratio),
                DecayMode::Silu => {
                    let p3 = rep.power[2];
                    silu_ratio = silu_ratio.max(p3.observed / p3.bound);
                }
                DecayMode::Relu => relu_tail = relu_tail.max(rep.tail_fraction),
            }
        }
    }
    Ok((
        all_pass && gelu_far <= 1e-3 && silu_ratio <= 1.0 && relu_tail < 1e-2,
        format!(
            "10 seeds; gelu max |k|/peak beyond 64 = {gelu_far:.1e}; silu max |k| n^3 / bound = {silu_ratio:.3}; relu max tail energy = {relu_tail:.1e}"
        ),
    ))
}

fn probe() -> Verdict {
    let mut passed = 0;
    let shapes = [(8, 1, 1), (16, 2, 3), (32, 3, 2), (64, 3, 1)];
    for (i, &(hidden, depth, out)) in shapes.iter().enumerate() {
        for s in 0..3u64 {
            let net = MlpRpe::with_hidden(
                hidden,
                depth,
                out,
                Activation::Relu,
                false,
                &mut stream(6, 10 * i as u64 + s),
            )?;
            passed += piecewise_linearity_probe(&net, -3.0, 3.0, 10_000)?.passed as usize;
        }
    }
    let total = 3 * shapes.len();
    let gelu = seeded_rpe(1, Activation::Gelu, true, 0);
    let refused = matches!(
        piecewise_linearity_probe(&gelu, -1.0, 1.0, 10_000),
        Err(Error::ProbeRefused(_))
    );
    Ok((
        passed == total && refused,
        format!("{passed}/{total} relu nets pass; gelu refused = {refused}"),
    ))
}

fn gradients() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut min_coords = usize::MAX;
    let mut nets = 0;
    for (i, act) in [Activation::Gelu, Activation::Silu].into_iter().enumerate() {
        for ln in [true, false] {
            for (hidden, depth, out) in [(16, 2, 4), (24, 3, 2)] {
                let mut rng = stream(7, 100 * i as u64 + 10 * ln as u64 + depth as u64);
                let mut net = MlpRpe::with_hidden(hidden, depth, out, act, ln, &mut rng)?;
                let t = rng.random_range(-2.0..2.0);
                let upstream = uniform_vec(&mut rng, out);
                let (gap, coords) = gradient_gap(&mut net, t, &upstream)?;
                worst = worst.max(gap);
                min_coords = min_coords.min(coords);
                nets += 1;
            }
        }
    }
    Ok((
        worst <= 1e-5 && min_coords >= 200,
        format!("{nets} nets, >= {min_coords} coordinates each; max relative gap {worst:.1e}"),
    ))
}

fn toy_fit() -> Verdict {
    let n = 64;
    let mut net = MlpRpe::with_hidden(64, 2, 1, Activation::Gelu, true, &mut stream(8, 0))?;
    let delay = ToeplitzKernel::from_fn(n, true, |d| if d == 3 { 1.0 } else { 0.0 })?;
    let opts = FitOptions {
        steps: 2000,
        lr: 1e-2,
        samples: 2,
        seed: 1,
        target_loss: 0.0,
    };
    let fd = fit_fd_causal(&mut net, &[delay], &opts)?;
    let k = impulse_response(&causal_freq_kernel(&real_responses(&CosInput(&net), n)?[0])?);
    let mass = k[3] * k[3] / k.iter().map(|v| v * v).sum::<f64>();

    let cfg = TnoConfig {
        n: 128,
        d: 4,
        r: 32,
        m: 16,
        ..Default::default()
    };
    let mut rpe = WarpedRpe::random(65, cfg.d, cfg.lambda, &mut stream(8, 1))?;
    let mut filters = (0..cfg.d)
        .map(|_| SparseFilter::zeros(cfg.centered_taps(), FilterMode::Centered))
        .collect::<Result<Vec<_>>>()?;
    let gauss = ToeplitzKernel::from_fn(cfg.n, false, |d| (-(d as f64 / 8.0).powi(2)).exp())?;
    let ski = fit_ski(&mut rpe, &mut filters, &cfg, &[gauss], &opts)?;
    let reduction = ski.initial_loss() / ski.final_loss();
    Ok((
        fd.accepted <= 2000 && mass >= 0.95 && reduction >= 100.0,
        format!("delay-3 mass at index 3 = {mass:.4}; ski gaussian loss reduced {reduction:.0}x"),
    ))
}

fn speed() -> Verdict {
    // the scan materializes W A and the running sums, as in the matrix form
    // of the recursion; the on-the-fly sparse variant is timed for the record
    let cfg = TnoConfig {
        d: 64,
        r: 64,
        m: 32,
        exec: ExecPath::Dense,
        ..Default::default()
    };
    let at_2048 = BenchPlan::new(
        vec![Mode::Baseline, Mode::FdCausal, Mode::CausalScan],
        vec![2048],
        cfg.clone(),
    );
    let sparse_scan = BenchPlan::new(
        vec![Mode::CausalScan],
        vec![2048],
        TnoConfig {
            exec: ExecPath::Sparse,
            ..cfg.clone()
        },
    );
    let sweep = BenchPlan::new(vec![Mode::Ski], vec![512, 1024, 2048, 4096, 8192], cfg);
    let fixed = bench::run(&at_2048)?;
    let sparse = bench::run(&sparse_scan)?;
    // one core: keep the fastest median of three sweeps per length so a
    // single disturbed cell cannot bend the fit
    let mut ski = bench::run(&sweep)?;
    for _ in 0..2 {
        for (best, again) in ski.iter_mut().zip(bench::run(&sweep)?) {
            if again.median_ns < best.median_ns {
                *best = again;
            }
        }
    }
    let time = |m: Mode| {
        fixed
            .iter()
            .find(|r| r.mode == m)
            .map(|r| r.median_ns)
            .expect("mode timed")
    };
    let (base, fd, scan) = (time(Mode::Baseline), time(Mode::FdCausal), time(Mode::CausalScan));
    let slope = bench::loglog_slope(&ski, Mode::Ski).expect("five lengths");
    let reps = fixed.iter().chain(&ski).map(|r| r.reps).min().unwrap_or(0);
    Ok((
        fd < base && (0.8..=1.3).contains(&slope) && scan > base && reps >= 20,
        format!(
            "n=2048: baseline {:.2}ms fd-causal {:.2}ms causal-scan {:.2}ms (sparse rows {:.2}ms); ski slope 512..8192 = {slope:.3}; {reps} reps",
            base / 1e6,
            fd / 1e6,
            scan / 1e6,
            sparse[0].median_ns / 1e6
        ),
    ))
}

fn run_tno(args: &[&str]) -> Result<(i32, Vec<u8>)> {
    let out = Command::new(env!("CARGO_BIN_EXE_tno")).args(args).output()?;
    Ok((out.status.code().unwrap_or(-1), out.stdout))
}

fn read_dir_sorted(dir: &std::path::Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        files.push((
            entry.file_name().to_string_lossy().into_owned(),
            std::fs::read(entry.path())?,
        ));
    }
    files.sort();
    Ok(files)
}

fn determinism() -> Verdict {
    let (code_a, first) = run_tno(&["verify", "all", "--seed", "0"])?;
    let (code_b, second) = run_tno(&["verify", "all", "--seed", "0"])?;
    let verify_same = first == second && code_a == code_b;
    let mut figures_same = true;
    let mut files = 0;
    for which in ["decay", "response", "bound"] {
        let a = tempfile::tempdir()?;
        let b = tempfile::tempdir()?;
        for dir in [&a, &b] {
            let path = dir.path().to_string_lossy().into_owned();
            let (code, _) = run_tno(&["figures", which, "--seed", "0", "--out", &path])?;
            figures_same &= code == 0;
        }
        let (fa, fb) = (read_dir_sorted(a.path())?, read_dir_sorted(b.path())?);
        figures_same &= !fa.is_empty() && fa == fb;
        files += fa.len();
    }
    Ok((
        verify_same && figures_same,
        format!(
            "verify all identical = {verify_same} (exit {code_a}); {files} figure files identical = {figures_same}"
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("causality", causality),
        ("ski error bound", error_bound),
        ("lagrange factor", lagrange_factor),
        ("decay", decay),
        ("piecewise-linear probe", probe),
        ("gradient checks", gradients),
        ("toy fits", toy_fit),
        ("speed direction", speed),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += !ok as usize;
        println!(
            "{} criterion {:>2} {name}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {}/{} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
