//! CSV series for impulse responses, frequency responses and the SKI bound table.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use tno_core::analysis::{bound_suite, decay_diagnostics, ski_bound_evaluate, DecayMode, ErrorBoundReport};
use tno_core::csv::write_table;
use tno_core::fdom::{bin_frequencies, causal_freq_kernel, impulse_response, real_responses};
use tno_core::rpe::{piecewise_linearity_probe, Activation, CosInput};
use tno_core::ski::{make_inducing_grid, Degree};
use tno_core::{Error, Result};

use crate::figure_rpe;

/// Frequency bins used when no `--n` is given.
pub const DEFAULT_N: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Decay,
    Response,
    Bound,
}

impl Figure {
    pub const ALL: [Figure; 3] = [Figure::Decay, Figure::Response, Figure::Bound];

    pub fn name(self) -> &'static str {
        match self {
            Figure::Decay => "decay",
            Figure::Response => "response",
            Figure::Bound => "bound",
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Figure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown figure '{s}' (expected decay, response or bound)")))
    }
}

/// One rendered CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FigureFile {
    pub name: String,
    pub contents: String,
}

const ACTIVATIONS: [Activation; 3] = [Activation::Gelu, Activation::Silu, Activation::Relu];

fn decay_mode(act: Activation) -> DecayMode {
    match act {
        Activation::Gelu => DecayMode::Gelu,
        Activation::Silu => DecayMode::Silu,
        Activation::Relu => DecayMode::Relu,
    }
}

fn table(comments: &[String], columns: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut buf = Vec::new();
    write_table(&mut buf, comments, columns, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// `(index, k)` for the `2n`-point impulse response of each activation.
fn decay_files(seed: u64, n: usize) -> Result<Vec<FigureFile>> {
    let mut files = Vec::new();
    for act in ACTIVATIONS {
        let net = figure_rpe(act, seed);
        let kh = &real_responses(&CosInput(&net), n)?[0];
        let k = impulse_response(kh);
        let report = decay_diagnostics(&k, decay_mode(act))?;
        let mut comments = vec![format!("activation={} seed={seed} n={n}", act.name())];
        comments.extend(report.to_kv().lines().map(str::to_string));
        let rows: Vec<Vec<String>> = k
            .iter()
            .enumerate()
            .map(|(i, v)| vec![i.to_string(), format!("{v:e}")])
            .collect();
        files.push(FigureFile {
            name: format!("decay_{}.csv", act.name()),
            contents: table(&comments, &["index", "k"], &rows)?,
        });
    }
    Ok(files)
}

/// `(omega, cos omega, Re, Im)` of the causal response for each activation.
/// The encoder sees `cos omega`, so a ReLU trace is piecewise linear in that column.
fn response_files(seed: u64, n: usize) -> Result<Vec<FigureFile>> {
    let mut files = Vec::new();
    for act in ACTIVATIONS {
        let net = figure_rpe(act, seed);
        let kh = &real_responses(&CosInput(&net), n)?[0];
        let kc = causal_freq_kernel(kh)?;
        let mut comments = vec![format!("activation={} seed={seed} n={n}", act.name())];
        match piecewise_linearity_probe(&net, -1.0, 1.0, 10_000) {
            Ok(rep) => comments.push(format!(
                "probe passed={} breakpoints={} max_off_kink={:e}",
                rep.passed, rep.breakpoints[0], rep.max_off_kink
            )),
            Err(e) => comments.push(e.to_string()),
        }
        let rows: Vec<Vec<String>> = bin_frequencies(n)
            .iter()
            .zip(kc.samples())
            .map(|(w, c)| {
                vec![
                    format!("{w:e}"),
                    format!("{:e}", w.cos()),
                    format!("{:e}", c.re),
                    format!("{:e}", c.im),
                ]
            })
            .collect();
        files.push(FigureFile {
            name: format!("response_{}.csv", act.name()),
            contents: table(&comments, &["omega", "cos_omega", "re", "im"], &rows)?,
        });
    }
    Ok(files)
}

/// Every cell of the bound suite.
pub fn bound_reports() -> Result<Vec<ErrorBoundReport>> {
    let mut out = Vec::new();
    for kernel in bound_suite() {
        for n in [64, 128] {
            for r in [8, 16, 32] {
                for degree in [Degree::Linear, Degree::Cubic] {
                    out.push(ski_bound_evaluate(&kernel, &make_inducing_grid(n, r)?, degree, n)?);
                }
            }
        }
    }
    Ok(out)
}

fn bound_files() -> Result<Vec<FigureFile>> {
    let reports = bound_reports()?;
    let rows: Vec<Vec<String>> = reports.iter().map(ErrorBoundReport::csv_row).collect();
    let comments = vec![format!(
        "cells={} holds={}",
        reports.len(),
        reports.iter().filter(|r| r.holds()).count()
    )];
    Ok(vec![FigureFile {
        name: "bound.csv".into(),
        contents: table(&comments, &ErrorBoundReport::CSV_COLUMNS, &rows)?,
    }])
}

/// Renders one figure family in memory. `n` is the frequency resolution of
/// the decay and response series.
pub fn render(which: Figure, seed: u64, n: usize) -> Result<Vec<FigureFile>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "figure resolution n = {n} must be at least 2"
        )));
    }
    match which {
        Figure::Decay => decay_files(seed, n),
        Figure::Response => response_files(seed, n),
        Figure::Bound => bound_files(),
    }
}

/// Writes rendered files into `dir`, creating it if needed.
pub fn write_all(dir: &Path, files: &[FigureFile]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for f in files {
        std::fs::write(dir.join(&f.name), &f.contents)?;
    }
    Ok(())
}
