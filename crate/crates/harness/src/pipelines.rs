//! Scenario pipelines behind `sweep`, `penalty-curve`, `compare` and `train`.

use factsim_core::equilibrium::optimal_local_data;
use factsim_core::fedsim::{convergence_bound, run_pfl_training, TrainingRun};
use factsim_core::loss::{
    fact_loss, federated_loss, free_rider_penalty, lambda_for, local_loss, pfl_loss, AgentPoint,
    CompetitionBranch,
};
use factsim_core::mechanism::{
    assign_lambdas, collect_fees, collect_fees_with, collect_penalties, run_competition_synthetic,
    run_competition_triples, settle, synthetic_wins, ServerLedger, ZeroDataPolicy,
};
use factsim_core::rng::{stream, Domain};
use factsim_core::{others_sum, par, AgentProfile, LossBreakdown};
use rand::RngCore;
use serde::Serialize;

use crate::config::{CompetitionMode, Scenario};
use crate::error::{HarnessError, Result};
use crate::svg::{line_chart, Series};
use crate::table::{ResultTable, TableMeta};

pub const SWEEP_COLUMNS: [&str; 5] = [
    "misreport_pct",
    "reported_cost",
    "win_prob",
    "mean_net_improvement",
    "stderr",
];
pub const PENALTY_COLUMNS: [&str; 2] = ["m", "penalty_plus_cost"];
pub const COMPARE_COLUMNS: [&str; 5] = [
    "agent",
    "local_loss",
    "federated_loss",
    "fact_mean_loss",
    "fact_stderr",
];
pub const TRAIN_COLUMNS: [&str; 2] = ["round", "avg_sq_grad_norm"];
pub const AGENT_COLUMNS: [&str; 13] = [
    "agent",
    "data",
    "batch",
    "weight",
    "lambda",
    "fee",
    "payout",
    "won",
    "convergence_term",
    "data_cost",
    "free_rider_penalty",
    "competition_transfer",
    "total",
];

/// Everything a command produces, written by a single writer at the end.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub tables: Vec<ResultTable>,
    pub json: Vec<(String, serde_json::Value)>,
    pub charts: Vec<(String, String)>,
}

impl Artifacts {
    pub fn table(&self, name: &str) -> Option<&ResultTable> {
        self.tables.iter().find(|t| t.name() == name)
    }

    pub fn write(&self, dir: &std::path::Path, svg: bool) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        for t in &self.tables {
            t.write(dir)?;
        }
        for (name, value) in &self.json {
            let path = dir.join(format!("{name}.json"));
            std::fs::write(&path, serde_json::to_string_pretty(value)? + "\n")
                .map_err(|e| HarnessError::io(&path, e))?;
        }
        if svg {
            for (name, body) in &self.charts {
                let path = dir.join(format!("{name}.svg"));
                std::fs::write(&path, body).map_err(|e| HarnessError::io(&path, e))?;
            }
        }
        Ok(())
    }
}

fn meta(s: &Scenario) -> TableMeta {
    TableMeta::new(&s.hash, s.seed())
}

/// Roster with penalty scalars and the resulting contract fees, everyone truthful.
pub(crate) struct Baseline {
    pub agents: Vec<AgentProfile>,
    pub fees: Vec<f64>,
    pub sums: Vec<f64>,
}

impl Baseline {
    pub fn new(s: &Scenario) -> Result<Self> {
        let agents = assign_lambdas(&s.roster()?, &s.constants)?;
        let fees = collect_fees(&agents, &s.constants)?.amounts();
        let sums = (0..agents.len())
            .map(|i| others_sum(&agents, i))
            .collect::<factsim_core::Result<_>>()?;
        Ok(Self { agents, fees, sums })
    }

    pub fn others_fees(&self, i: usize) -> f64 {
        self.fees.iter().sum::<f64>() - self.fees[i]
    }

    pub fn point(&self, i: usize) -> AgentPoint {
        let a = &self.agents[i];
        AgentPoint::truthful(
            a.data_amount(),
            a.true_cost(),
            a.lambda().unwrap_or(0.0),
            self.sums[i],
        )
    }
}

/// Server-side expectation of the others' data, used for the penalty scalar.
fn expected_others(s: &Scenario, i: usize) -> Result<f64> {
    let k = s.constants.k();
    let mut total = 0.0;
    for (j, &c) in s.true_costs.iter().enumerate() {
        if j != i {
            total += optimal_local_data(c, k)?;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub misreport_pct: f64,
    pub reported_cost: f64,
    pub win_prob: f64,
    pub mean_net_improvement: f64,
    pub stderr: f64,
    /// Net improvement predicted from the exact win probability.
    pub expected_net_improvement: f64,
}

/// Truthfulness sweep for the focal agent.
///
/// The agent reports `c_true·(1 + p/100)` and collects the data the server
/// expects for that report; everyone else stays truthful. Every point reuses
/// the same competing-cost draws.
pub fn sweep_rows(s: &Scenario) -> Result<Vec<SweepRow>> {
    let base = Baseline::new(s)?;
    let i = s.focal;
    let k = s.constants.k();
    let n = s.n();
    let c_true = s.true_costs[i];
    let local_star = local_loss(optimal_local_data(c_true, k)?, c_true, k)?;
    let others_fees = base.others_fees(i);
    let sum_expected = expected_others(s, i)?;
    let dist = &s.dists[i];
    s.sweep_pcts
        .iter()
        .map(|&pct| {
            let reported = c_true * (1.0 + pct / 100.0);
            let point = AgentPoint {
                m: optimal_local_data(reported, k)?,
                true_cost: c_true,
                reported_cost: reported,
                lambda: lambda_for(reported, sum_expected, k, s.constants.alpha())?,
                sum_others: base.sums[i],
            };
            let lost = fact_loss(&point, k, n, CompetitionBranch::Lost, others_fees)?.total;
            let won = fact_loss(&point, k, n, CompetitionBranch::Won, others_fees)?.total;
            let wins = synthetic_wins(reported, dist, s.trials(), s.seed(), i as u64, s.sampling)?;
            let freq = wins as f64 / s.trials() as f64;
            let prize = lost - won;
            let win_prob = factsim_core::mechanism::win_probability(reported, dist);
            Ok(SweepRow {
                misreport_pct: pct,
                reported_cost: reported,
                win_prob,
                mean_net_improvement: local_star - lost + freq * prize,
                stderr: prize * (freq * (1.0 - freq) / s.trials() as f64).sqrt(),
                expected_net_improvement: local_star - lost + win_prob * prize,
            })
        })
        .collect()
}

pub fn cmd_sweep(s: &Scenario) -> Result<Artifacts> {
    let rows = sweep_rows(s)?;
    let mut t = ResultTable::new("sweep", &SWEEP_COLUMNS, meta(s))?;
    for r in &rows {
        t.push(vec![
            r.misreport_pct,
            r.reported_cost,
            r.win_prob,
            r.mean_net_improvement,
            r.stderr,
        ]);
    }
    let chart = line_chart(
        &format!("{}: net improvement vs misreport", s.config.name),
        "misreport (% of true cost)",
        "mean net improvement in loss",
        &[Series {
            label: "Monte Carlo",
            points: rows
                .iter()
                .map(|r| (r.misreport_pct, r.mean_net_improvement))
                .collect(),
        }],
    );
    Ok(Artifacts {
        tables: vec![t],
        json: vec![],
        charts: vec![("sweep".into(), chart)],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PenaltyCurve {
    pub m_star: f64,
    pub step: f64,
    pub argmin: f64,
}

/// `P_fr(m) + c·m` for the focal agent on `points` evenly spaced values of `[0, 2m*]`.
pub fn penalty_curve(s: &Scenario) -> Result<(Vec<(f64, f64)>, PenaltyCurve)> {
    let base = Baseline::new(s)?;
    let i = s.focal;
    let k = s.constants.k();
    let c = s.true_costs[i];
    let lambda = base.agents[i].lambda().unwrap_or(0.0);
    let m_star = optimal_local_data(c, k)?;
    let points = s.config.penalty_curve.points;
    let step = 2.0 * m_star / (points - 1) as f64;
    let rows = (0..points)
        .map(|j| {
            let m = j as f64 * step;
            Ok((
                m,
                free_rider_penalty(m, c, lambda, base.sums[i], k)? + c * m,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let argmin = rows
        .iter()
        .fold((f64::NAN, f64::INFINITY), |best, &(m, v)| {
            if v < best.1 {
                (m, v)
            } else {
                best
            }
        })
        .0;
    Ok((
        rows,
        PenaltyCurve {
            m_star,
            step,
            argmin,
        },
    ))
}

pub fn cmd_penalty_curve(s: &Scenario) -> Result<Artifacts> {
    let (rows, summary) = penalty_curve(s)?;
    let mut t = ResultTable::new("penalty", &PENALTY_COLUMNS, meta(s))?;
    for &(m, v) in &rows {
        t.push(vec![m, v]);
    }
    let chart = line_chart(
        &format!("{}: penalty plus data cost", s.config.name),
        "data amount m",
        "P_fr(m) + c m",
        &[Series {
            label: "penalty + cost",
            points: rows,
        }],
    );
    Ok(Artifacts {
        tables: vec![t],
        json: vec![("penalty_summary".into(), serde_json::to_value(summary)?)],
        charts: vec![("penalty".into(), chart)],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompareRow {
    pub agent: usize,
    pub local_loss: f64,
    pub federated_loss: f64,
    pub fact_mean_loss: f64,
    pub fact_stderr: f64,
    pub win_frequency: f64,
    /// `υ·won + (1−υ)·lost` with the exact win probability.
    pub fact_mixture: f64,
}

fn trial_seed(seed: u64, trial: u64) -> u64 {
    stream(seed, Domain::Grouping, u64::MAX, trial).next_u64()
}

/// Per-agent losses for local training, plain federated training and FACT.
/// Returns the agent rows and the aggregate row.
pub fn compare_rows(s: &Scenario) -> Result<(Vec<CompareRow>, CompareRow)> {
    let base = Baseline::new(s)?;
    let k = s.constants.k();
    let n = s.n();
    let trials = s.trials();
    let mut rows = Vec::with_capacity(n);
    let (freq, stats): (Vec<f64>, Option<Vec<(f64, f64)>>) = match s.config.competition.mode {
        CompetitionMode::Synthetic => {
            let out = run_competition_synthetic(
                &base.agents,
                &s.dists,
                trials,
                s.seed(),
                s.sampling,
                Some(&base.fees),
            )?;
            (out.win_frequency, None)
        }
        CompetitionMode::Triples => {
            let (freq, stats) = triple_statistics(s, &base)?;
            (freq, Some(stats))
        }
    };
    for i in 0..n {
        let p = base.point(i);
        let lost = fact_loss(&p, k, n, CompetitionBranch::Lost, base.others_fees(i))?.total;
        let won = fact_loss(&p, k, n, CompetitionBranch::Won, base.others_fees(i))?.total;
        let prize = lost - won;
        let (mean, stderr) = match &stats {
            None => (
                lost - freq[i] * prize,
                prize * (freq[i] * (1.0 - freq[i]) / trials as f64).sqrt(),
            ),
            Some(st) => st[i],
        };
        let upsilon = factsim_core::mechanism::win_probability(p.reported_cost, &s.dists[i]);
        rows.push(CompareRow {
            agent: i,
            local_loss: local_loss(p.m, p.true_cost, k)?,
            federated_loss: federated_loss(p.m, p.sum_others, p.true_cost, k)?,
            fact_mean_loss: mean,
            fact_stderr: stderr,
            win_frequency: freq[i],
            fact_mixture: upsilon * won + (1.0 - upsilon) * lost,
        });
    }
    let avg = |f: fn(&CompareRow) -> f64| rows.iter().map(f).sum::<f64>() / n as f64;
    let aggregate_se = match &stats {
        // lanes are independent across agents
        None => {
            rows.iter()
                .map(|r| r.fact_stderr.powi(2))
                .sum::<f64>()
                .sqrt()
                / n as f64
        }
        Some(_) => triple_aggregate_se(s, &base)?,
    };
    let aggregate = CompareRow {
        agent: usize::MAX,
        local_loss: avg(|r| r.local_loss),
        federated_loss: avg(|r| r.federated_loss),
        fact_mean_loss: avg(|r| r.fact_mean_loss),
        fact_stderr: aggregate_se,
        win_frequency: avg(|r| r.win_frequency),
        fact_mixture: avg(|r| r.fact_mixture),
    };
    Ok((rows, aggregate))
}

/// Per-trial realised FACT losses under the triple competition.
fn triple_losses(s: &Scenario, base: &Baseline) -> Result<Vec<Vec<f64>>> {
    let k = s.constants.k();
    let pfl: Vec<f64> = (0..s.n())
        .map(|i| pfl_loss(&base.point(i), k).map(|b| b.total))
        .collect::<factsim_core::Result<_>>()?;
    let rule = s.remainder_rule();
    par::map_indices(s.trials() as usize, |t| {
        let outcome = run_competition_triples(&base.agents, &rule, trial_seed(s.seed(), t as u64))?;
        let st = settle(&outcome, &base.fees, &s.constants)?;
        Ok(pfl
            .iter()
            .zip(&st.net_transfers)
            .map(|(l, x)| l + x)
            .collect())
    })
    .into_iter()
    .collect()
}

fn mean_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Win frequencies and (mean, standard error) of each agent's loss.
type TripleStats = (Vec<f64>, Vec<(f64, f64)>);

fn triple_statistics(s: &Scenario, base: &Baseline) -> Result<TripleStats> {
    let losses = triple_losses(s, base)?;
    let k = s.constants.k();
    let n = s.n();
    let mut freq = Vec::with_capacity(n);
    let mut stats = Vec::with_capacity(n);
    for i in 0..n {
        let lost = fact_loss(
            &base.point(i),
            k,
            n,
            CompetitionBranch::Lost,
            base.others_fees(i),
        )?
        .total;
        let column = losses.iter().map(move |row| row[i]);
        freq.push(column.clone().filter(|&x| x < lost).count() as f64 / losses.len() as f64);
        stats.push(mean_se(column));
    }
    Ok((freq, stats))
}

fn triple_aggregate_se(s: &Scenario, base: &Baseline) -> Result<f64> {
    let losses = triple_losses(s, base)?;
    let n = s.n() as f64;
    Ok(mean_se(losses.iter().map(|row| row.iter().sum::<f64>() / n)).1)
}

pub fn cmd_compare(s: &Scenario) -> Result<Artifacts> {
    let (rows, aggregate) = compare_rows(s)?;
    let mut t = ResultTable::new("compare", &COMPARE_COLUMNS, meta(s))?;
    for r in &rows {
        t.push(vec![
            r.agent as f64,
            r.local_loss,
            r.federated_loss,
            r.fact_mean_loss,
            r.fact_stderr,
        ]);
    }
    t.push(vec![
        -1.0,
        aggregate.local_loss,
        aggregate.federated_loss,
        aggregate.fact_mean_loss,
        aggregate.fact_stderr,
    ]);
    let series = |label, f: fn(&CompareRow) -> f64| Series {
        label,
        points: rows.iter().map(|r| (r.agent as f64, f(r))).collect(),
    };
    let chart = line_chart(
        &format!("{}: per-agent loss", s.config.name),
        "agent",
        "loss",
        &[
            series("local", |r| r.local_loss),
            series("federated", |r| r.federated_loss),
            series("FACT", |r| r.fact_mean_loss),
        ],
    );
    Ok(Artifacts {
        tables: vec![t],
        json: vec![],
        charts: vec![("compare".into(), chart)],
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub run: TrainingRun,
    pub mean_grad_norm_sq: f64,
    pub bound: f64,
    pub ledger: ServerLedger,
    pub budget_feasible: bool,
    pub data: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub penalties: Vec<f64>,
    pub fees: Vec<f64>,
    pub payouts: Vec<f64>,
    pub won: Vec<bool>,
    pub breakdowns: Vec<LossBreakdown>,
}

/// End to end: penalty scalars, penalties, fees, FedAvg, competition, settlement.
///
/// Free riders pay no fee, so a win by one of them is voided before settlement.
pub fn train(s: &Scenario) -> Result<TrainReport> {
    let (task, fed) = s
        .fedsim
        .as_ref()
        .ok_or_else(|| HarnessError::Config("train needs a [fedsim] section".into()))?;
    let k = s.constants.k();
    let mut roster = s.roster()?;
    for &i in &s.free_riders {
        roster[i] = roster[i].with_data_amount(0.0)?;
    }
    let agents = assign_lambdas(&roster, &s.constants)?;
    let penalties = collect_penalties(&agents, &s.constants)?;
    let fees = collect_fees_with(&agents, &s.constants, ZeroDataPolicy::Waive)?;
    let amounts = fees.amounts();

    let run = run_pfl_training(&agents, task, fed)?;

    let mut outcome = run_competition_triples(&agents, &s.remainder_rule(), s.seed())?;
    for (a, f) in outcome.agents.iter_mut().zip(&fees.fees) {
        if f.is_none() {
            a.won = false;
        }
    }
    let settlement = settle(&outcome, &amounts, &s.constants)?;
    let mut ledger = penalties.ledger;
    ledger.absorb(&settlement.ledger);
    if !ledger.is_finite() || !ledger.is_budget_feasible() {
        return Err(factsim_core::Error::Invariant(format!(
            "ledger after settlement is infeasible: {ledger:?}"
        ))
        .into());
    }

    let breakdowns = (0..agents.len())
        .map(|i| {
            let a = &agents[i];
            let p = AgentPoint {
                m: a.data_amount(),
                true_cost: a.true_cost(),
                reported_cost: a.reported_cost(),
                lambda: a.lambda().unwrap_or(0.0),
                sum_others: others_sum(&agents, i)?,
            };
            let pfl = pfl_loss(&p, k)?;
            Ok(LossBreakdown::new(
                pfl.convergence_term,
                pfl.data_cost,
                pfl.free_rider_penalty,
                settlement.net_transfers[i],
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let bound = convergence_bound(&run, task, run.initial_gap)?;
    Ok(TrainReport {
        mean_grad_norm_sq: run.mean_grad_norm_sq(),
        bound,
        budget_feasible: ledger.is_budget_feasible(),
        ledger,
        data: agents.iter().map(|a| a.data_amount()).collect(),
        lambdas: agents.iter().map(|a| a.lambda().unwrap_or(0.0)).collect(),
        penalties: penalties.penalties,
        fees: amounts,
        payouts: settlement.outcome.agents.iter().map(|a| a.payout).collect(),
        won: settlement.outcome.agents.iter().map(|a| a.won).collect(),
        breakdowns,
        run,
    })
}

pub fn cmd_train(s: &Scenario) -> Result<Artifacts> {
    let r = train(s)?;
    let mut t = ResultTable::new("train", &TRAIN_COLUMNS, meta(s))?;
    for (round, &g) in r.run.grad_norm_sq.iter().enumerate() {
        t.push(vec![round as f64, g]);
    }
    let mut agents = ResultTable::new("agents", &AGENT_COLUMNS, meta(s))?;
    for (i, b) in r.breakdowns.iter().enumerate() {
        agents.push(vec![
            i as f64,
            r.data[i],
            r.run.batch_sizes[i] as f64,
            r.run.weights[i],
            r.lambdas[i],
            r.fees[i],
            r.payouts[i],
            f64::from(u8::from(r.won[i])),
            b.convergence_term,
            b.data_cost,
            b.free_rider_penalty,
            b.competition_transfer,
            b.total,
        ]);
    }
    let chart = line_chart(
        &format!("{}: squared gradient norm", s.config.name),
        "round",
        "squared gradient norm",
        &[Series {
            label: "FedAvg",
            points: r
                .run
                .grad_norm_sq
                .iter()
                .enumerate()
                .map(|(i, &g)| (i as f64, g))
                .collect(),
        }],
    );
    let summary = serde_json::json!({
        "scenario": s.config.name,
        "scenario_hash": s.hash,
        "seed": s.seed(),
        "rounds": r.run.rounds,
        "local_steps": r.run.local_steps,
        "epochs": r.run.epochs,
        "step_size": r.run.step_size,
        "effective_batch": r.run.effective_batch,
        "free_riders": r.run.free_riders,
        "initial_gap": r.run.initial_gap,
        "mean_grad_norm_sq": r.mean_grad_norm_sq,
        "convergence_bound": r.bound,
        "final_params": r.run.final_params,
    });
    let ledger = serde_json::json!({
        "scenario_hash": s.hash,
        "penalties_collected": r.ledger.penalties_collected,
        "fees_collected": r.ledger.fees_collected,
        "payouts_made": r.ledger.payouts_made,
        "budget_feasible": r.budget_feasible,
        "penalties": r.penalties,
        "fees": r.fees,
        "payouts": r.payouts,
        "winners": r.won.iter().enumerate().filter(|(_, &w)| w).map(|(i, _)| i).collect::<Vec<_>>(),
    });
    Ok(Artifacts {
        tables: vec![t, agents],
        json: vec![("train_summary".into(), summary), ("ledger".into(), ledger)],
        charts: vec![("train".into(), chart)],
    })
}
