//! Operator hyperparameters and their flat `key = value` text form.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ski::{Degree, ExecPath, GridSpan, MAX_FILTER_WIDTH};

/// Operator family selected by `mode`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Baseline,
    Ski,
    SkiDense,
    FdCausal,
    FdBidir,
    CausalScan,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Baseline,
        Mode::Ski,
        Mode::SkiDense,
        Mode::FdCausal,
        Mode::FdBidir,
        Mode::CausalScan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Ski => "ski",
            Mode::SkiDense => "ski-dense",
            Mode::FdCausal => "fd-causal",
            Mode::FdBidir => "fd-bidir",
            Mode::CausalScan => "causal-scan",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown mode '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TnoConfig {
    pub n: usize,
    pub d: usize,
    /// Inducing point count.
    pub r: usize,
    /// Sparse filter width. Centered filters use `m` taps when `m` is odd and
    /// `m + 1` otherwise.
    pub m: usize,
    /// Warp decay for the SKI positional encoder.
    pub lambda: f64,
    pub degree: Degree,
    pub mode: Mode,
    pub exec: ExecPath,
    pub span: GridSpan,
}

impl Default for TnoConfig {
    fn default() -> Self {
        Self {
            n: 512,
            d: 64,
            r: 64,
            m: 32,
            lambda: 0.99,
            degree: Degree::Linear,
            mode: Mode::Ski,
            exec: ExecPath::Sparse,
            span: GridSpan::Closed,
        }
    }
}

impl TnoConfig {
    /// Width of a centered filter honoring `m`.
    pub fn centered_taps(&self) -> usize {
        self.m | 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n == 0 || self.d == 0 {
            return bad(format!("n and d must be positive (n = {}, d = {})", self.n, self.d));
        }
        let max_r = match self.span {
            GridSpan::Closed => self.n + 1,
            GridSpan::Observed => self.n,
        };
        if self.r < 2 || self.r > max_r {
            return bad(format!(
                "r = {} must satisfy 2 <= r <= {max_r} for n = {}",
                self.r, self.n
            ));
        }
        if self.r < self.degree.stencil() {
            return bad(format!(
                "r = {} is too small for degree {}",
                self.r,
                self.degree.order()
            ));
        }
        if self.m == 0 || self.centered_taps() > MAX_FILTER_WIDTH {
            return bad(format!("m = {} outside 1..{MAX_FILTER_WIDTH}", self.m));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad(format!("lambda = {} must lie in (0, 1)", self.lambda));
        }
        Ok(())
    }

    /// Applies one `key`, `value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Parse(format!("invalid value '{v}' for key '{key}'")))
        }
        match key {
            "n" => self.n = num(key, value)?,
            "d" => self.d = num(key, value)?,
            "r" => self.r = num(key, value)?,
            "m" => self.m = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "degree" => self.degree = Degree::from_order(num(key, value)?)?,
            "mode" => self.mode = value.parse()?,
            "exec" => {
                self.exec = match value {
                    "sparse" => ExecPath::Sparse,
                    "dense" => ExecPath::Dense,
                    _ => return Err(Error::Parse(format!("invalid exec '{value}'"))),
                }
            }
            "span" => {
                self.span = match value {
                    "closed" => GridSpan::Closed,
                    "observed" => GridSpan::Observed,
                    _ => return Err(Error::Parse(format!("invalid span '{value}'"))),
                }
            }
            _ => return Err(Error::Parse(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        format!(
            "n = {}\nd = {}\nr = {}\nm = {}\nlambda = {}\ndegree = {}\nmode = {}\nexec = {}\nspan = {}\n",
            self.n,
            self.d,
            self.r,
            self.m,
            self.lambda,
            self.degree.order(),
            self.mode,
            match self.exec {
                ExecPath::Sparse => "sparse",
                ExecPath::Dense => "dense",
            },
            match self.span {
                GridSpan::Closed => "closed",
                GridSpan::Observed => "observed",
            }
        )
    }
}
