//! Wall-clock sweeps over operator modes and sequence lengths.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use tno_core::config::{Mode, TnoConfig};
use tno_core::fdom::{fd_tno_bidirectional, fd_tno_causal};
use tno_core::rpe::{Activation, CosInput};
use tno_core::ski::{
    inducing_kernels, observation_weights, ski_causal_scan, ExecPath, FilterMode, InducingGrid, SkiOperator,
    SparseFilter, WarpedRpe,
};
use tno_core::tcore::{tno_baseline, toeplitz_dense, DecayBias, FftWorkspace};
use tno_core::{Error, Result};

use crate::{seeded_rpe, stream, uniform_matrix, uniform_vec};

pub const MIN_WARMUP: usize = 5;
pub const MIN_REPS: usize = 20;
/// Medians below this many nanoseconds per sample are not trusted; the
/// inner loop grows until a sample takes longer.
pub const MIN_SAMPLE_NS: f64 = 1_000.0;

#[derive(Debug, Clone)]
pub struct BenchPlan {
    pub modes: Vec<Mode>,
    pub lengths: Vec<usize>,
    /// Shared `d`, `r`, `m`, `lambda`, `degree`, `exec` and `span`; `n` and
    /// `mode` are set per cell.
    pub cfg: TnoConfig,
    pub seed: u64,
    pub warmup: usize,
    pub reps: usize,
    pub threads: usize,
}

impl BenchPlan {
    pub fn new(modes: Vec<Mode>, lengths: Vec<usize>, cfg: TnoConfig) -> Self {
        Self {
            modes,
            lengths,
            cfg,
            seed: 0,
            warmup: MIN_WARMUP,
            reps: MIN_REPS,
            threads: 1,
        }
    }

    /// Flat description of the shared configuration.
    pub fn echo(&self) -> String {
        format!(
            "d={} r={} m={} lambda={} degree={} exec={} span={} seed={} warmup={} reps={} threads={}",
            self.cfg.d,
            self.cfg.r,
            self.cfg.m,
            self.cfg.lambda,
            self.cfg.degree.order(),
            match self.cfg.exec {
                ExecPath::Sparse => "sparse",
                ExecPath::Dense => "dense",
            },
            match self.cfg.span {
                tno_core::ski::GridSpan::Closed => "closed",
                tno_core::ski::GridSpan::Observed => "observed",
            },
            self.seed,
            self.warmup.max(MIN_WARMUP),
            self.reps.max(MIN_REPS),
            self.threads.max(1)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub mode: Mode,
    pub n: usize,
    pub d: usize,
    pub r: usize,
    pub m: usize,
    pub reps: usize,
    /// Operator calls per timed sample.
    pub inner: usize,
    pub median_ns: f64,
    /// Sequence elements (`n * d`) per second.
    pub throughput: f64,
    pub config: String,
}

type Job = Box<dyn FnMut() -> Result<()>>;

/// Builds the timed closure for one cell. Inputs, encoders and workspaces
/// are created here, outside the timed region.
pub fn prepare(mode: Mode, cfg: &TnoConfig, seed: u64) -> Result<Job> {
    let (n, d) = (cfg.n, cfg.d);
    let mut rng = stream(seed, 0xbe);
    let x = uniform_matrix(&mut rng, n, d);
    let rpe_seed = seed ^ 0x5eed;
    let job: Job = match mode {
        Mode::Baseline => {
            let net = seeded_rpe(d, Activation::Gelu, true, rpe_seed);
            let bias = DecayBias::new(cfg.lambda)?;
            let mut ws = FftWorkspace::for_len(n);
            Box::new(move || tno_baseline(&x, &net, bias, &mut ws).map(drop))
        }
        Mode::FdCausal => {
            let net = seeded_rpe(d, Activation::Gelu, true, rpe_seed);
            Box::new(move || fd_tno_causal(&x, &CosInput(&net)).map(drop))
        }
        Mode::FdBidir => {
            let net = seeded_rpe(2 * d, Activation::Gelu, true, rpe_seed);
            Box::new(move || fd_tno_bidirectional(&x, &CosInput(&net)).map(drop))
        }
        Mode::Ski | Mode::SkiDense => {
            let mut c = cfg.clone();
            c.exec = if mode == Mode::Ski {
                ExecPath::Sparse
            } else {
                ExecPath::Dense
            };
            let rpe = WarpedRpe::random(2 * c.r + 1, d, c.lambda, &mut rng)?;
            let filters = (0..d)
                .map(|_| SparseFilter::new(uniform_vec(&mut rng, c.centered_taps()), FilterMode::Centered))
                .collect::<Result<Vec<_>>>()?;
            let mut op = SkiOperator::new(&c)?;
            Box::new(move || op.apply(&x, &rpe, &filters).map(drop))
        }
        Mode::CausalScan => {
            cfg.validate()?;
            let grid = InducingGrid::for_sequence(n, cfg.r, cfg.span)?;
            let w = observation_weights(&grid, n, cfg.degree)?.with_exec(cfg.exec);
            let rpe = WarpedRpe::random(2 * cfg.r + 1, d, cfg.lambda, &mut rng)?;
            Box::new(move || {
                for (l, k) in inducing_kernels(&rpe, &grid)?.iter().enumerate() {
                    ski_causal_scan(&w, &toeplitz_dense(k)?, x.column(l).as_slice())?;
                }
                Ok(())
            })
        }
    };
    Ok(job)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Warmup, then `reps` samples of `inner` calls each; returns
/// `(inner, median ns per call)`.
pub fn measure(job: &mut Job, warmup: usize, reps: usize) -> Result<(usize, f64)> {
    for _ in 0..warmup.max(MIN_WARMUP) {
        job()?;
    }
    let reps = reps.max(MIN_REPS);
    let mut inner = 1usize;
    loop {
        let mut samples = Vec::with_capacity(reps);
        for _ in 0..reps {
            let start = Instant::now();
            for _ in 0..inner {
                job()?;
            }
            samples.push(start.elapsed().as_nanos() as f64);
        }
        let med = median(samples);
        if med >= MIN_SAMPLE_NS || inner >= 1 << 24 {
            return Ok((inner, med / inner as f64));
        }
        inner *= 10;
    }
}

fn run_cell(plan: &BenchPlan, mode: Mode, n: usize) -> Result<BenchResult> {
    let mut cfg = plan.cfg.clone();
    cfg.n = n;
    cfg.mode = mode;
    let mut job = prepare(mode, &cfg, plan.seed)?;
    let reps = plan.reps.max(MIN_REPS);
    let (inner, median_ns) = measure(&mut job, plan.warmup, reps)?;
    Ok(BenchResult {
        mode,
        n,
        d: cfg.d,
        r: cfg.r,
        m: cfg.m,
        reps,
        inner,
        median_ns,
        throughput: (n * cfg.d) as f64 / (median_ns * 1e-9),
        config: plan.echo(),
    })
}

/// Times every `(mode, n)` cell. With more than one thread, cells run
/// concurrently but each timed region stays on a single thread.
pub fn run(plan: &BenchPlan) -> Result<Vec<BenchResult>> {
    if plan.modes.is_empty() || plan.lengths.is_empty() {
        return Err(Error::InvalidParameter(
            "bench needs at least one mode and one length".into(),
        ));
    }
    let cells: Vec<(Mode, usize)> = plan
        .modes
        .iter()
        .flat_map(|&m| plan.lengths.iter().map(move |&n| (m, n)))
        .collect();
    let threads = plan.threads.clamp(1, cells.len());
    if threads == 1 {
        return cells.iter().map(|&(m, n)| run_cell(plan, m, n)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<BenchResult>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(m, n)) = cells.get(i) else { break };
                let res = run_cell(plan, m, n);
                slots.lock().expect("bench slot lock")[i] = Some(res);
            });
        }
    });
    slots
        .into_inner()
        .expect("bench slot lock")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}

/// Least-squares slope of `ln(time)` against `ln(n)` for one mode, when it
/// has at least two lengths.
pub fn loglog_slope(results: &[BenchResult], mode: Mode) -> Option<f64> {
    let pts: Vec<(f64, f64)> = results
        .iter()
        .filter(|r| r.mode == mode)
        .map(|r| ((r.n as f64).ln(), r.median_ns.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub const CSV_COLUMNS: [&str; 9] = ["mode", "n", "d", "r", "m", "reps", "inner", "median_ns", "throughput"];

/// Result rows under a config echo, with one `slope` comment per mode.
pub fn to_csv(plan: &BenchPlan, results: &[BenchResult]) -> String {
    let mut s = format!("# bench {}\n", plan.echo());
    for &mode in &plan.modes {
        if let Some(slope) = loglog_slope(results, mode) {
            s += &format!("# slope mode={mode} value={slope:.4}\n");
        }
    }
    s += &format!("# {}\n", CSV_COLUMNS.join(","));
    for r in results {
        s += &format!(
            "{},{},{},{},{},{},{},{:.1},{:.6e}\n",
            r.mode, r.n, r.d, r.r, r.m, r.reps, r.inner, r.median_ns, r.throughput
        );
    }
    s
}
