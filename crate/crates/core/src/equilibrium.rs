//! Closed-form optima and the brute-force oracles that check them.
//!
//! The oracles deliberately know nothing about the closed forms: a
//! golden-section search for one variable, a refined grid scan for two, and
//! central differences for stationarity.

use serde::{Deserialize, Serialize};

use crate::error::{nonnegative, positive, Error, Result};
use crate::loss::{expected_fact_loss, AgentPoint};
use crate::mechanism::win_probability;
use crate::model::CostDistribution;
use crate::par;

/// Data amount minimising the stand-alone loss: `sqrt(k/(2c))`.
pub fn optimal_local_data(c: f64, k: f64) -> Result<f64> {
    positive("c", c)?;
    positive("k", k)?;
    Ok((k / (2.0 * c)).sqrt())
}

/// Best response inside plain federated training. The unconstrained
/// stationary point `sqrt(k/(2c)) − Σ` is negative once the others already
/// cover the local optimum; the agent then uses no data at all.
pub fn optimal_federated_data(c: f64, k: f64, sum_others: f64) -> Result<f64> {
    nonnegative("sum_others", sum_others)?;
    Ok((optimal_local_data(c, k)? - sum_others).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchMethod {
    ClosedForm,
    GoldenSection,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub argmin_m: f64,
    /// Absent for searches over `m` alone.
    pub argmin_c: Option<f64>,
    pub min_value: f64,
    pub method: SearchMethod,
    /// Final grid spacing per axis `(m, c)`, or the final bracket width for
    /// golden-section.
    pub resolution: (f64, f64),
}

fn eval_finite<F: Fn(f64) -> f64>(f: &F, x: f64) -> Result<f64> {
    let y = f(x);
    if y.is_finite() {
        Ok(y)
    } else {
        Err(Error::NonFinite { point: vec![x] })
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the minimiser of a unimodal function on
/// `[lower, upper]`, to bracket width `tol`.
pub fn numeric_argmin_1d<F>(objective: F, lower: f64, upper: f64, tol: f64) -> Result<BestResponse>
where
    F: Fn(f64) -> f64,
{
    positive("tol", tol)?;
    if !(lower.is_finite() && upper.is_finite() && lower < upper) {
        return Err(Error::InvalidParameter {
            name: "upper",
            value: upper,
            reason: "search interval must be finite with lower < upper",
        });
    }
    let (mut a, mut b) = (lower, upper);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = eval_finite(&objective, x1)?;
    let mut f2 = eval_finite(&objective, x2)?;
    // the bracket shrinks by 0.618 per step; 4000 steps is far past f64 resolution
    for _ in 0..4000 {
        if b - a <= tol || x1 >= x2 {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = eval_finite(&objective, x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = eval_finite(&objective, x2)?;
        }
    }
    let argmin = 0.5 * (a + b);
    Ok(BestResponse {
        argmin_m: argmin,
        argmin_c: None,
        min_value: eval_finite(&objective, argmin)?,
        method: SearchMethod::GoldenSection,
        resolution: (b - a, 0.0),
    })
}

/// Grid scan over `(m, c)` followed by `refine` zoomed rescans around the
/// incumbent. Each rescan spans ±2 cells of the previous grid, so with
/// `grid = 33` the spacing shrinks eightfold per pass.
pub fn numeric_argmin_2d<F>(
    objective: F,
    m_range: (f64, f64),
    c_range: (f64, f64),
    grid: usize,
    refine: usize,
) -> Result<BestResponse>
where
    F: Fn(f64, f64) -> f64 + Sync + Send,
{
    if grid < 16 {
        return Err(Error::InvalidParameter {
            name: "grid",
            value: grid as f64,
            reason: "at least 16 points per axis",
        });
    }
    for (lo, hi) in [m_range, c_range] {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter {
                name: "range",
                value: hi - lo,
                reason: "ranges must be finite with positive length",
            });
        }
    }
    let (mut m_lo, mut m_hi) = m_range;
    let (mut c_lo, mut c_hi) = c_range;
    let cells = (grid - 1) as f64;
    let mut best = (0.0, 0.0, f64::INFINITY);
    let mut steps = (0.0, 0.0);
    for _ in 0..=refine {
        let dm = (m_hi - m_lo) / cells;
        let dc = (c_hi - c_lo) / cells;
        steps = (dm, dc);
        let values = par::map_indices(grid * grid, |idx| {
            let m = m_lo + dm * (idx / grid) as f64;
            let c = c_lo + dc * (idx % grid) as f64;
            (m, c, objective(m, c))
        });
        // first strict minimum in index order keeps the result schedule-free
        let mut incumbent = (0.0, 0.0, f64::INFINITY);
        for &(m, c, v) in &values {
            if !v.is_finite() {
                return Err(Error::NonFinite { point: vec![m, c] });
            }
            if v < incumbent.2 {
                incumbent = (m, c, v);
            }
        }
        best = incumbent;
        m_lo = (best.0 - 2.0 * dm).max(m_range.0);
        m_hi = (best.0 + 2.0 * dm).min(m_range.1);
        c_lo = (best.1 - 2.0 * dc).max(c_range.0);
        c_hi = (best.1 + 2.0 * dc).min(c_range.1);
    }
    Ok(BestResponse {
        argmin_m: best.0,
        argmin_c: Some(best.1),
        min_value: best.2,
        method: SearchMethod::Grid,
        resolution: steps,
    })
}

/// Default finite-difference step for a data-amount coordinate.
pub fn fd_step(x: f64) -> f64 {
    (1e-6 * x.abs()).max(1e-9)
}

/// Central-difference gradient at a claimed optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub point: Vec<f64>,
    pub value: f64,
    pub partials: Vec<f64>,
    /// `|∂f/∂x_j| · |x_j| / |f|`: the partials made scale free.
    pub normalized: Vec<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

pub const STATIONARITY_TOL: f64 = 1e-5;

pub fn verify_stationarity<F>(
    objective: F,
    point: &[f64],
    steps: &[f64],
) -> Result<StationarityReport>
where
    F: Fn(&[f64]) -> f64,
{
    if point.len() != steps.len() {
        return Err(Error::Config(format!(
            "{} coordinates but {} steps",
            point.len(),
            steps.len()
        )));
    }
    let eval = |x: &[f64]| {
        let y = objective(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::NonFinite { point: x.to_vec() })
        }
    };
    let value = eval(point)?;
    let mut probe = point.to_vec();
    let mut partials = Vec::with_capacity(point.len());
    for (j, &h) in steps.iter().enumerate() {
        positive("step", h)?;
        probe[j] = point[j] + h;
        let up = eval(&probe)?;
        probe[j] = point[j] - h;
        let down = eval(&probe)?;
        probe[j] = point[j];
        partials.push((up - down) / (2.0 * h));
    }
    let scale = value.abs().max(f64::MIN_POSITIVE);
    let normalized: Vec<f64> = partials
        .iter()
        .zip(point)
        .map(|(d, x)| (d * x).abs() / scale)
        .collect();
    let passed = normalized.iter().all(|&r| r <= STATIONARITY_TOL);
    Ok(StationarityReport {
        point: point.to_vec(),
        value,
        partials,
        normalized,
        tolerance: STATIONARITY_TOL,
        passed,
    })
}

/// Expected mechanism loss as a function of `(m, reported c)` for an agent
/// that believes the competing costs follow `dist`.
pub fn fact_objective<'a>(
    base: AgentPoint,
    k: f64,
    n: usize,
    dist: &'a CostDistribution,
    others_fee_sum: f64,
) -> impl Fn(f64, f64) -> f64 + Sync + Send + 'a {
    move |m, c| {
        let p = AgentPoint {
            m,
            reported_cost: c,
            ..base
        };
        expected_fact_loss(&p, k, n, win_probability(c, dist), others_fee_sum).unwrap_or(f64::NAN)
    }
}

/// Joint best response over data and reported cost, searched on
/// `[m_lo, m_hi] × [c_lo, c_hi]` with 33×33 grids and 3 refinements.
pub fn fact_best_response(
    base: AgentPoint,
    k: f64,
    n: usize,
    dist: &CostDistribution,
    others_fee_sum: f64,
    m_range: (f64, f64),
    c_range: (f64, f64),
) -> Result<BestResponse> {
    numeric_argmin_2d(
        fact_objective(base, k, n, dist, others_fee_sum),
        m_range,
        c_range,
        33,
        3,
    )
}
