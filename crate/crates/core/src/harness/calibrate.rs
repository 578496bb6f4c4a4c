//! Fit the device spreads and nonlinearity to the reference cell table.
//!
//! Coordinate search over `(g_high_rel_std, g_low_rel_std, g_half_rel_std,
//! nonlin_alpha)`: each coordinate tries a step up and down, improvements
//! are kept, and all steps halve when a full sweep fails to improve. Every
//! evaluation reuses the same seed so the objective is a deterministic
//! function of the parameters.

use crate::device::DeviceModelParams;
use crate::error::Result;
use crate::harness::cellbench::{check_table1, run_cell_benchmark, CellBenchRow, WindowCheck, CELL_OPS};

pub const MAX_EVALUATIONS: usize = 200;

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub params: DeviceModelParams,
    pub objective: f64,
    pub evaluations: usize,
    pub correction_factor: f64,
    pub rows: Vec<CellBenchRow>,
    pub checks: Vec<WindowCheck>,
}

impl CalibrationResult {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Squared relative error against the reference (mean, std) pairs, plus a
/// hinge penalty for statistics that leave the inner part of a tolerance
/// window. Means are normalized by the larger of |mean| and std so the
/// near-zero row does not dominate.
pub fn objective(rows: &[CellBenchRow]) -> f64 {
    reference_error(rows) + window_penalty(rows)
}

/// Fraction of each window width kept clear at both edges.
const WINDOW_MARGIN: f64 = 0.1;
const WINDOW_WEIGHT: f64 = 100.0;

fn window_penalty(rows: &[CellBenchRow]) -> f64 {
    check_table1(rows)
        .iter()
        .map(|c| {
            let width = c.hi - c.lo;
            let lo = c.lo + WINDOW_MARGIN * width;
            let hi = c.hi - WINDOW_MARGIN * width;
            let out = (lo - c.value).max(c.value - hi).max(0.0) / width;
            WINDOW_WEIGHT * out * out
        })
        .sum()
}

fn reference_error(rows: &[CellBenchRow]) -> f64 {
    rows.iter()
        .zip(CELL_OPS.iter())
        .map(|(r, op)| {
            let (m, s) = op.reference;
            let dm = (r.mean - m) / m.abs().max(s);
            let ds = (r.std - s) / s;
            dm * dm + ds * ds
        })
        .sum()
}

const ALPHA_LIMIT: f64 = 0.5;

fn coordinate(p: &mut DeviceModelParams, k: usize) -> &mut f64 {
    match k {
        0 => &mut p.g_high_rel_std,
        1 => &mut p.g_low_rel_std,
        2 => &mut p.g_half_rel_std,
        _ => &mut p.nonlin_alpha,
    }
}

pub fn calibrate(
    start: &DeviceModelParams,
    cells: usize,
    correction_samples: usize,
    seed: u64,
) -> Result<CalibrationResult> {
    start.validate()?;
    let eval = |p: &DeviceModelParams| -> Result<f64> {
        let (_, rows) = run_cell_benchmark(p, cells, correction_samples, seed)?;
        Ok(objective(&rows))
    };
    let mut best = *start;
    let mut best_obj = eval(&best)?;
    let mut evaluations = 1;
    let mut steps = [0.02, 0.05, 0.05, 0.02];
    'search: while steps.iter().any(|&s| s > 1e-4) {
        let mut improved = false;
        for k in 0..4 {
            for dir in [1.0, -1.0] {
                let mut trial = best;
                let x = coordinate(&mut trial, k);
                *x += dir * steps[k];
                *x = if k == 3 {
                    x.clamp(-ALPHA_LIMIT, ALPHA_LIMIT)
                } else {
                    x.max(0.0)
                };
                if trial == best {
                    continue;
                }
                if evaluations >= MAX_EVALUATIONS {
                    break 'search;
                }
                let obj = eval(&trial)?;
                evaluations += 1;
                if obj < best_obj {
                    best = trial;
                    best_obj = obj;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            for s in &mut steps {
                *s *= 0.5;
            }
        }
    }
    let (correction_factor, rows) = run_cell_benchmark(&best, cells, correction_samples, seed)?;
    let checks = check_table1(&rows);
    Ok(CalibrationResult {
        params: best,
        objective: best_obj,
        evaluations,
        correction_factor,
        rows,
        checks,
    })
}
