use super::{Activation, ForwardCache, MlpRpe};
use crate::error::{Error, Result};

/// Second differences below `SECOND_DIFF_TOL * scale` count as zero.
pub const SECOND_DIFF_TOL: f64 = 1e-8;

/// Outcome of scanning a ReLU network on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub grid_points: usize,
    pub hidden_units: usize,
    /// Detected kinks per output channel.
    pub breakpoints: Vec<usize>,
    /// Kink positions per channel, located from the two straddling second
    /// differences.
    pub kink_locations: Vec<Vec<f64>>,
    /// Grid intervals where some hidden pre-activation changes sign.
    pub pattern_changes: usize,
    /// Largest `|second difference| / scale` away from every pattern change.
    pub max_off_kink: f64,
    pub passed: bool,
}

/// Checks that every output channel is continuous piecewise linear on
/// `[a, b]`: second differences on a `points`-point grid must vanish except
/// within one step of an activation-pattern change, and each channel may
/// have at most as many kinks as there are hidden units.
pub fn piecewise_linearity_probe(net: &MlpRpe, a: f64, b: f64, points: usize) -> Result<ProbeReport> {
    if net.activation() != Activation::Relu {
        return Err(Error::ProbeRefused(format!(
            "{} networks are not piecewise linear",
            net.activation().name()
        )));
    }
    if points < 3 || !(b > a) {
        return Err(Error::InvalidParameter(format!(
            "probe needs b > a and at least 3 points (got [{a}, {b}], {points})"
        )));
    }
    let step = (b - a) / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|k| a + k as f64 * step).collect();
    let d = net.output_width();

    let mut outputs = vec![Vec::with_capacity(points); d];
    let mut patterns: Vec<Vec<bool>> = Vec::with_capacity(points);
    for &t in &grid {
        let mut cache = ForwardCache {
            input: t,
            hidden: Vec::new(),
        };
        let y = net.run(t, Some(&mut cache));
        for (l, v) in y.into_iter().enumerate() {
            outputs[l].push(v);
        }
        patterns.push(
            cache
                .hidden
                .iter()
                .flat_map(|h| h.pre_activation.iter().map(|&u| u > 0.0))
                .collect(),
        );
    }

    // near[k]: stencil centred at k is within one step of a pattern change
    let mut near = vec![false; points];
    let mut pattern_changes = 0;
    for j in 0..points - 1 {
        if patterns[j] != patterns[j + 1] {
            pattern_changes += 1;
            near[j.saturating_sub(1)..=(j + 2).min(points - 1)].fill(true);
        }
    }

    let mut breakpoints = Vec::with_capacity(d);
    let mut kink_locations = Vec::with_capacity(d);
    let mut max_off_kink: f64 = 0.0;
    for y in &outputs {
        let scale = y.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        let second: Vec<f64> = (1..points - 1).map(|k| y[k - 1] - 2.0 * y[k] + y[k + 1]).collect();
        let tol = SECOND_DIFF_TOL * scale;
        let mut kinks = Vec::new();
        let mut k = 0;
        while k < second.len() {
            let idx = k + 1;
            let v = second[k];
            if v.abs() <= tol {
                k += 1;
                continue;
            }
            if !near[idx] {
                max_off_kink = max_off_kink.max(v.abs() / scale);
            }
            let next = second.get(k + 1).copied().unwrap_or(0.0);
            if next.abs() > tol && next.signum() == v.signum() {
                kinks.push(grid[idx] + step * next / (v + next));
                k += 2;
            } else {
                kinks.push(grid[idx]);
                k += 1;
            }
        }
        breakpoints.push(kinks.len());
        kink_locations.push(kinks);
    }
    let hidden_units = net.hidden_units();
    let passed = max_off_kink <= SECOND_DIFF_TOL && breakpoints.iter().all(|&c| c <= hidden_units);
    Ok(ProbeReport {
        grid_points: points,
        hidden_units,
        breakpoints,
        kink_locations,
        pattern_changes,
        max_off_kink,
        passed,
    })
}
