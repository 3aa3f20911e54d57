//! Loss, penalty, fee and gap formulas.
//!
//! Everything here is a pure function of scalars. `k` is the composite noise
//! scale (step size × gradient variance × Lipschitz constant), `c` a
//! per-sample cost, `m` a data amount and `sum_others` the data used by every
//! other agent.

use serde::{Deserialize, Serialize};

use crate::error::{nonnegative, positive, Error, Result};
use crate::model::LossBreakdown;

/// Outcome of one agent's sandwich competition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompetitionBranch {
    Won,
    Lost,
}

/// Data amount that minimises the stand-alone loss for cost `c`.
fn local_optimum(c: f64, k: f64) -> f64 {
    (k / (2.0 * c)).sqrt()
}

fn check_alpha(alpha: f64) -> Result<f64> {
    if alpha.is_finite() && (0.0..2.0).contains(&alpha) {
        Ok(alpha)
    } else {
        Err(Error::InvalidParameter {
            name: "alpha",
            value: alpha,
            reason: "must lie in [0, 2)",
        })
    }
}

/// Stand-alone loss `k/(2m) + c·m`.
pub fn local_loss(m: f64, c: f64, k: f64) -> Result<f64> {
    nonnegative("m", m)?;
    if m == 0.0 {
        return Err(Error::Domain {
            op: "local_loss",
            reason: "training alone with no data is undefined (m = 0)",
        });
    }
    positive("c", c)?;
    positive("k", k)?;
    Ok(k / (2.0 * m) + c * m)
}

/// Loss inside plain federated training: the convergence term sees the
/// pooled batch `m + sum_others`, the data cost only the agent's own `m`.
pub fn federated_loss(m: f64, sum_others: f64, c: f64, k: f64) -> Result<f64> {
    nonnegative("m", m)?;
    nonnegative("sum_others", sum_others)?;
    positive("c", c)?;
    positive("k", k)?;
    let pooled = m + sum_others;
    if pooled == 0.0 {
        return Err(Error::Domain {
            op: "federated_loss",
            reason: "no agent contributes data (m + sum_others = 0)",
        });
    }
    Ok(k / (2.0 * pooled) + c * m)
}

/// Penalty scalar that leaves an IR gap controlled by `alpha`.
///
/// The local optimum `sqrt(k/(2c))` is derived from `c` internally.
pub fn lambda_for(c: f64, sum_others: f64, k: f64, alpha: f64) -> Result<f64> {
    positive("c", c)?;
    positive("k", k)?;
    check_alpha(alpha)?;
    nonnegative("sum_others", sum_others)?;
    if sum_others == 0.0 {
        return Err(Error::Singular { agent: 0 });
    }
    let m_star = local_optimum(c, k);
    let pooled = sum_others + m_star;
    let shift = c - k / (2.0 * pooled * pooled);
    Ok(m_star * pooled / ((2.0 - alpha) * k * sum_others) * shift * shift)
}

/// Free-rider penalty evaluated with the reported cost.
///
/// Zero exactly at `m = m_c* + reported_c/(2λ) − k/(4λ(m_c*+Σ)²)` and
/// quadratic in `m` around that vertex.
pub fn free_rider_penalty(
    m: f64,
    reported_c: f64,
    lambda: f64,
    sum_others: f64,
    k: f64,
) -> Result<f64> {
    nonnegative("m", m)?;
    positive("reported_c", reported_c)?;
    nonnegative("lambda", lambda)?;
    nonnegative("sum_others", sum_others)?;
    positive("k", k)?;
    if lambda == 0.0 {
        return Err(Error::DegeneratePenalty);
    }
    let m_c = local_optimum(reported_c, k);
    let pooled = m_c + sum_others;
    let arg = reported_c / (2.0 * lambda) - k / (4.0 * lambda * pooled * pooled) + m_c - m;
    Ok(lambda * arg * arg)
}

/// The per-agent quantities most losses need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentPoint {
    pub m: f64,
    pub true_cost: f64,
    pub reported_cost: f64,
    pub lambda: f64,
    pub sum_others: f64,
}

impl AgentPoint {
    pub fn truthful(m: f64, cost: f64, lambda: f64, sum_others: f64) -> Self {
        Self {
            m,
            true_cost: cost,
            reported_cost: cost,
            lambda,
            sum_others,
        }
    }

    pub fn with_m(self, m: f64) -> Self {
        Self { m, ..self }
    }

    pub fn with_reported_cost(self, reported_cost: f64) -> Self {
        Self {
            reported_cost,
            ..self
        }
    }
}

/// Penalised federated loss. The agent pays its true cost for data while the
/// penalty is evaluated at the reported cost.
pub fn pfl_loss(p: &AgentPoint, k: f64) -> Result<LossBreakdown> {
    positive("true_cost", p.true_cost)?;
    let penalty = free_rider_penalty(p.m, p.reported_cost, p.lambda, p.sum_others, k)?;
    let pooled = p.m + p.sum_others;
    if pooled == 0.0 {
        return Err(Error::Domain {
            op: "pfl_loss",
            reason: "no agent contributes data (m + sum_others = 0)",
        });
    }
    Ok(LossBreakdown::new(
        k / (2.0 * pooled),
        p.true_cost * p.m,
        penalty,
        0.0,
    ))
}

/// Closed-form advantage of penalised federated training over local training
/// at the local optimum.
pub fn ir_gap_analytic(m_star: f64, sum_others: f64, k: f64, alpha: f64) -> Result<f64> {
    positive("m_star", m_star)?;
    positive("sum_others", sum_others)?;
    positive("k", k)?;
    check_alpha(alpha)?;
    Ok(alpha / 4.0 * (k * sum_others) / (m_star * (sum_others + m_star)))
}

/// A contract fee, split into the part that survives in the agent's loss and
/// the penalty refund that cancels against the penalised loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractFee {
    /// `k·Σ / (2m(m+Σ))`.
    pub effective: f64,
    pub penalty: f64,
    /// `effective − penalty`; what the server actually collects.
    pub full: f64,
}

pub fn contract_fee(
    m: f64,
    reported_c: f64,
    sum_others: f64,
    k: f64,
    lambda: f64,
) -> Result<ContractFee> {
    nonnegative("m", m)?;
    if m == 0.0 {
        return Err(Error::Domain {
            op: "contract_fee",
            reason: "the fee divides by the agent's own data (m = 0)",
        });
    }
    let penalty = free_rider_penalty(m, reported_c, lambda, sum_others, k)?;
    let effective = k * sum_others / (2.0 * m * (m + sum_others));
    Ok(ContractFee {
        effective,
        penalty,
        full: effective - penalty,
    })
}

/// Full mechanism loss for a known competition outcome.
///
/// Every agent pays its contract fee; a winner also receives three times the
/// average of the other agents' fees.
pub fn fact_loss(
    p: &AgentPoint,
    k: f64,
    n: usize,
    branch: CompetitionBranch,
    others_fee_sum: f64,
) -> Result<LossBreakdown> {
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "n",
            value: n as f64,
            reason: "at least two agents are required",
        });
    }
    let pfl = pfl_loss(p, k)?;
    let fee = contract_fee(p.m, p.reported_cost, p.sum_others, k, p.lambda)?;
    let transfer = match branch {
        CompetitionBranch::Lost => fee.full,
        CompetitionBranch::Won => fee.full - 3.0 / n as f64 * others_fee_sum,
    };
    Ok(LossBreakdown::new(
        pfl.convergence_term,
        pfl.data_cost,
        pfl.free_rider_penalty,
        transfer,
    ))
}

fn check_probability(win_prob: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&win_prob) {
        Ok(win_prob)
    } else {
        Err(Error::InvalidParameter {
            name: "win_prob",
            value: win_prob,
            reason: "must lie in [0, 1]",
        })
    }
}

/// Expected mechanism loss, simplified: the penalty and the pooled
/// convergence term cancel, leaving `k/(2m) + c·m − (3υ/n)·Σ_{j≠i} fee_j`.
pub fn expected_fact_loss(
    p: &AgentPoint,
    k: f64,
    n: usize,
    win_prob: f64,
    others_fee_sum: f64,
) -> Result<f64> {
    check_probability(win_prob)?;
    let local = local_loss(p.m, p.true_cost, k)?;
    Ok(local - 3.0 * win_prob / n as f64 * others_fee_sum)
}

/// Expected mechanism loss as the probability-weighted mixture of the two
/// branches, without any simplification.
pub fn expected_fact_loss_mixture(
    p: &AgentPoint,
    k: f64,
    n: usize,
    win_prob: f64,
    others_fee_sum: f64,
) -> Result<f64> {
    check_probability(win_prob)?;
    let won = fact_loss(p, k, n, CompetitionBranch::Won, others_fee_sum)?.total;
    let lost = fact_loss(p, k, n, CompetitionBranch::Lost, others_fee_sum)?.total;
    Ok(win_prob * won + (1.0 - win_prob) * lost)
}
