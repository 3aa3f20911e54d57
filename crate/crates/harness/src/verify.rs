//! Invariant checks with explicit tolerances and measured residuals.

use factsim_core::equilibrium::{
    fact_best_response, fact_objective, fd_step, numeric_argmin_1d, optimal_federated_data,
    optimal_local_data, verify_stationarity, STATIONARITY_TOL,
};
use factsim_core::fedsim::{
    convergence_bound, measure_variance_scaling, run_pfl_training, FedConfig, SyntheticTask,
};
use factsim_core::loss::{
    expected_fact_loss, expected_fact_loss_mixture, fact_loss, federated_loss, ir_gap_analytic,
    lambda_for, local_loss, pfl_loss, AgentPoint, CompetitionBranch,
};
use factsim_core::mechanism::{
    run_competition_triples, settle, synthetic_wins, win_probability, RemainderRule, Sampling,
};
use factsim_core::rng::{stream, Domain};
use factsim_core::{AgentProfile, CostDistribution, MechanismConstants};
use rand::Rng;
use serde::Serialize;

use crate::config::Scenario;
use crate::error::Result;
use crate::pipelines::{compare_rows, penalty_curve, sweep_rows, Baseline, SWEEP_COLUMNS};
use crate::table::{ResultTable, TableMeta};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub tolerance: f64,
    pub residual: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    /// Passes when `residual <= tolerance`.
    pub fn within(name: &str, residual: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_owned(),
            tolerance,
            residual,
            passed: residual <= tolerance,
            detail: detail.into(),
        }
    }

    /// Passes when `residual < 0`; used for strict inequalities.
    pub fn negative(name: &str, residual: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_owned(),
            tolerance: 0.0,
            residual,
            passed: residual < 0.0,
            detail: detail.into(),
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Knobs for `verify`.
#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    /// Multiplies every penalty scalar before the IR-gap checks. Anything
    /// other than 1 is a negative control and must make those checks fail.
    pub lambda_scale: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { lambda_scale: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub trials: u64,
    pub lambda_scale: f64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

pub fn local_optimum_fixtures() -> Result<Vec<Check>> {
    Ok(vec![
        Check::within(
            "local_optimum_3125",
            rel(optimal_local_data(1.024e-7, 2.0)?, 3125.0),
            1e-9,
            "sqrt(k/(2c)) at c = 1.024e-7, k = 2",
        ),
        Check::within(
            "local_optimum_3750",
            rel(optimal_local_data(7.111e-8, 2.0)?, 3750.0),
            1e-3,
            "published cost 7.111e-8 is rounded",
        ),
    ])
}

pub fn free_riding_fixture() -> Result<Check> {
    let m = optimal_federated_data(1.024e-7, 2.0, 15.0 * 3125.0)?;
    Ok(Check::within(
        "free_riding_exact_zero",
        m,
        0.0,
        "15 others at 3125 each",
    ))
}

/// Closed-form local optimum against golden-section search, per roster cost.
pub fn local_optimum_oracle(costs: &[f64], k: f64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for &c in costs {
        let m_star = optimal_local_data(c, k)?;
        let br = numeric_argmin_1d(
            |m| local_loss(m, c, k).unwrap_or(f64::INFINITY),
            1e-3 * m_star,
            4.0 * m_star,
            1e-10 * m_star,
        )?;
        worst = worst.max(rel(br.argmin_m, m_star));
    }
    Ok(Check::within(
        "local_optimum_oracle",
        worst,
        1e-6,
        "golden section vs sqrt(k/(2c))",
    ))
}

/// Plain federated best response against golden-section search.
pub fn federated_optimum_oracle(costs: &[f64], sums: &[f64], k: f64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for (&c, &sum) in costs.iter().zip(sums) {
        let m_star = optimal_local_data(c, k)?;
        let closed = optimal_federated_data(c, k, sum)?;
        let br = numeric_argmin_1d(
            |m| federated_loss(m, sum, c, k).unwrap_or(f64::INFINITY),
            0.0,
            2.0 * m_star,
            1e-10 * m_star,
        )?;
        // the objective is flat to f64 resolution within ~sqrt(eps) of an interior minimiser
        worst = worst.max((br.argmin_m - closed).abs() / m_star);
    }
    Ok(Check::within(
        "federated_optimum_oracle",
        worst,
        1e-6,
        "golden section vs max(m* - sum_others, 0), relative to m*",
    ))
}

/// Random draws of (c, k, Σ, α): PFL argmin and IR gap.
pub fn pfl_random_draws(seed: u64, draws: u64, lambda_scale: f64) -> Result<Vec<Check>> {
    let mut worst_arg: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    let mut min_gap = f64::INFINITY;
    for d in 0..draws {
        let mut rng = stream(seed, Domain::Oracle, 3, d);
        let c = 10f64.powf(rng.random_range(-8.0..1.0));
        let k = rng.random_range(0.1..10.0);
        let alpha = rng.random_range(0.0..1.9);
        let m_star = optimal_local_data(c, k)?;
        let sum = m_star * 10f64.powf(rng.random_range(0.0..5.0));
        let lambda = lambda_for(c, sum, k, alpha)? * lambda_scale;
        let base = AgentPoint::truthful(m_star, c, lambda, sum);
        let br = numeric_argmin_1d(
            |m| pfl_loss(&base.with_m(m), k).map_or(f64::INFINITY, |b| b.total),
            0.0,
            4.0 * m_star,
            1e-9 * m_star,
        )?;
        worst_arg = worst_arg.max(rel(br.argmin_m, m_star));
        let gap = local_loss(m_star, c, k)? - pfl_loss(&base, k)?.total;
        let analytic = ir_gap_analytic(m_star, sum, k, alpha)?;
        worst_gap = worst_gap.max(rel(gap, analytic));
        min_gap = min_gap.min(gap);
    }
    Ok(vec![
        Check::within(
            "pfl_optimum_random",
            worst_arg,
            1e-6,
            format!("{draws} draws, golden section vs sqrt(k/(2c))"),
        ),
        Check::within(
            "ir_gap_random",
            worst_gap,
            1e-10,
            format!("{draws} draws, measured vs closed-form gap"),
        ),
        Check::within(
            "individual_rationality_random",
            -min_gap,
            0.0,
            "local minus PFL loss is never negative",
        ),
    ])
}

/// IR gap for the configured roster with the penalty scalars the server assigns.
pub fn ir_gap_roster(s: &Scenario, lambda_scale: f64) -> Result<Check> {
    let base = Baseline::new(s)?;
    let k = s.constants.k();
    let mut worst: f64 = 0.0;
    for i in 0..s.n() {
        let mut p = base.point(i);
        let m_star = optimal_local_data(p.true_cost, k)?;
        p.lambda *= lambda_scale;
        p.m = m_star;
        let gap = local_loss(m_star, p.true_cost, k)? - pfl_loss(&p, k)?.total;
        worst = worst.max(rel(
            gap,
            ir_gap_analytic(m_star, p.sum_others, k, s.constants.alpha())?,
        ));
    }
    Ok(Check::within(
        "ir_gap_roster",
        worst,
        1e-10,
        "measured vs closed-form gap for each agent",
    ))
}

/// Lost branch equals local loss at the optimum; won branch is strictly smaller.
pub fn branch_losses(s: &Scenario) -> Result<Vec<Check>> {
    let base = Baseline::new(s)?;
    let k = s.constants.k();
    let n = s.n();
    let mut lost_worst: f64 = 0.0;
    let mut won_margin = f64::NEG_INFINITY;
    for i in 0..n {
        let p = base.point(i);
        let local = local_loss(p.m, p.true_cost, k)?;
        let others = base.others_fees(i);
        lost_worst = lost_worst.max(rel(
            fact_loss(&p, k, n, CompetitionBranch::Lost, others)?.total,
            local,
        ));
        if others > 0.0 {
            won_margin =
                won_margin.max(fact_loss(&p, k, n, CompetitionBranch::Won, others)?.total - local);
        }
    }
    Ok(vec![
        Check::within(
            "lost_branch_equals_local",
            lost_worst,
            1e-12,
            "relative to local loss",
        ),
        Check::negative(
            "won_branch_below_local",
            won_margin,
            "largest won-branch minus local loss",
        ),
    ])
}

/// Simplified expected loss against the unsimplified two-branch mixture.
pub fn expectation_simplification(seed: u64, draws: u64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for d in 0..draws {
        let mut rng = stream(seed, Domain::Oracle, 10, d);
        let n = rng.random_range(3..40usize);
        let k = rng.random_range(0.1..10.0);
        let c = 10f64.powf(rng.random_range(-8.0..0.0));
        let m_star = optimal_local_data(c, k)?;
        let sum = m_star * (n - 1) as f64;
        let reported = c * rng.random_range(0.5..1.5);
        let m = m_star * rng.random_range(0.5..1.5);
        let lambda = lambda_for(reported, sum, k, rng.random_range(0.0..1.9))?;
        let p = AgentPoint {
            m,
            true_cost: c,
            reported_cost: reported,
            lambda,
            sum_others: sum,
        };
        let pool = rng.random_range(0.0..1.0) * local_loss(m_star, c, k)?;
        let u = rng.random_range(0.0..1.0);
        let simple = expected_fact_loss(&p, k, n, u, pool)?;
        let mixture = expected_fact_loss_mixture(&p, k, n, u, pool)?;
        worst = worst.max(rel(simple, mixture));
    }
    Ok(Check::within(
        "expected_loss_simplification",
        worst,
        1e-12,
        format!("{draws} draws, simplified vs mixture"),
    ))
}

/// 2-D grid oracle and stationarity for the focal agent's FACT objective.
pub fn joint_optimum(
    name: &str,
    dist: &CostDistribution,
    c_true: f64,
    k: f64,
    n: usize,
    alpha: f64,
) -> Result<Vec<Check>> {
    let m_star = optimal_local_data(c_true, k)?;
    let sum = m_star * (n - 1) as f64;
    let lambda = lambda_for(c_true, sum, k, alpha)?;
    let base = AgentPoint::truthful(m_star, c_true, lambda, sum);
    let fee = factsim_core::loss::contract_fee(m_star, c_true, sum, k, lambda)?.full;
    let pool = fee * (n - 1) as f64;
    let br = fact_best_response(
        base,
        k,
        n,
        dist,
        pool,
        (0.5 * m_star, 1.5 * m_star),
        (0.5 * c_true, 1.5 * c_true),
    )?;
    let (rm, rc) = br.resolution;
    let c_hat = br.argmin_c.unwrap_or(f64::NAN);
    let f = fact_objective(base, k, n, dist, pool);
    let at_truth = f(m_star, c_true);
    let mut checks = vec![
        Check::within(
            &format!("joint_optimum_value_{name}"),
            (at_truth - br.min_value) / at_truth.abs(),
            1e-12,
            "objective at (m*, c_true) minus the oracle minimum",
        ),
        Check::within(
            &format!("joint_optimum_resolution_{name}"),
            (rm / m_star).max(rc / c_true),
            1e-3,
            "final grid spacing, relative per axis",
        ),
    ];
    if dist.kind() != "empirical" {
        checks.push(Check::within(
            &format!("joint_optimum_location_{name}"),
            ((br.argmin_m - m_star).abs() / rm).max((c_hat - c_true).abs() / rc),
            1.0,
            format!(
                "oracle argmin ({:.6e}, {c_hat:.6e}) in grid steps",
                br.argmin_m
            ),
        ));
        let st = verify_stationarity(
            |x| f(x[0], x[1]),
            &[m_star, c_true],
            &[fd_step(m_star), 1e-6 * c_true],
        )?;
        let worst = st.normalized.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        checks.push(Check::within(
            &format!("joint_stationarity_{name}"),
            worst,
            STATIONARITY_TOL,
            "normalised partials",
        ));
    }
    Ok(checks)
}

/// The ten reference (distribution, cost) pairs for the sandwich probability.
pub fn reference_pairs() -> Result<Vec<(CostDistribution, f64)>> {
    Ok(vec![
        (CostDistribution::uniform(0.0, 1.0)?, 0.5),
        (CostDistribution::uniform(0.0, 1.0)?, 0.25),
        (CostDistribution::uniform(0.0, 1.0)?, 0.9),
        (CostDistribution::uniform(2.0, 3.0)?, 2.05),
        (CostDistribution::gaussian_around(1.0, 0.1)?, 1.0),
        (CostDistribution::gaussian_around(1.0, 0.1)?, 1.1),
        (CostDistribution::gaussian_around(1.0, 0.1)?, 0.8),
        (CostDistribution::gaussian(1.0, 1.0, 0.3)?, 0.5),
        (
            CostDistribution::empirical(vec![1.0, 2.0, 3.0, 4.0, 5.0])?,
            2.5,
        ),
        (
            CostDistribution::empirical((1..=50).map(f64::from).collect())?,
            37.5,
        ),
    ])
}

/// Monte Carlo sandwich frequency in binomial standard errors.
pub fn win_probability_mc(
    name: &str,
    pairs: &[(CostDistribution, f64)],
    trials: u64,
    seed: u64,
    sampling: Sampling,
) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for (lane, (dist, c)) in pairs.iter().enumerate() {
        let p = win_probability(*c, dist);
        let freq =
            synthetic_wins(*c, dist, trials, seed, lane as u64, sampling)? as f64 / trials as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        let z = if se > 0.0 {
            (freq - p).abs() / se
        } else if freq == p {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(z);
    }
    Ok(Check::within(
        name,
        worst,
        3.0,
        format!(
            "{} pairs at {trials} trials, worst |freq - 2F(1-F)| in standard errors",
            pairs.len()
        ),
    ))
}

/// Pairs drawn from a roster's own distributions around each true cost.
pub fn roster_pairs(s: &Scenario) -> Vec<(CostDistribution, f64)> {
    let d = &s.dists[s.focal];
    let c = s.true_costs[s.focal];
    (0..10)
        .map(|j| (d.clone(), c * (0.82 + 0.04 * j as f64)))
        .collect()
}

/// Median holder wins every permutation of a distinct triple.
pub fn sandwich_permutations() -> Result<Check> {
    let perms = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let costs = [1.0, 2.0, 3.0];
    let mut failures = 0u32;
    for (seed, p) in perms.iter().enumerate() {
        let agents: Vec<AgentProfile> = p
            .iter()
            .map(|&j| AgentProfile::truthful(costs[j], 1.0))
            .collect::<factsim_core::Result<_>>()?;
        let out = run_competition_triples(&agents, &RemainderRule::SitOut, seed as u64)?;
        let median = p.iter().position(|&j| j == 1).unwrap_or(usize::MAX);
        let winners: Vec<usize> = out.winners().collect();
        if winners != [median] {
            failures += 1;
        }
    }
    Ok(Check::within(
        "sandwich_median_wins",
        f64::from(failures),
        0.0,
        "failing permutations of (1, 2, 3)",
    ))
}

/// Budget identity on random rosters.
pub fn budget_random_rosters(seed: u64, rosters: u64) -> Result<Vec<Check>> {
    let mut worst_exact: f64 = 0.0;
    let mut worst_general: f64 = 0.0;
    let mut worst_slack = f64::NEG_INFINITY;
    let mut winner_count_errors = 0u32;
    for r in 0..rosters {
        let mut rng = stream(seed, Domain::Oracle, 9, r);
        let n = rng.random_range(3..=60usize);
        let agents = (0..n)
            .map(|_| AgentProfile::truthful(f64::from(rng.random_range(1..20u32)) * 0.1, 1.0))
            .collect::<factsim_core::Result<Vec<_>>>()?;
        let fees: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let constants = MechanismConstants::new(2.0, 1.0, n)?;
        let outcome = run_competition_triples(&agents, &RemainderRule::SitOut, rng.random())?;
        let st = settle(&outcome, &fees, &constants)?;
        let collected: f64 = fees.iter().sum();
        let winners: Vec<usize> = st.outcome.winners().collect();
        if winners.len() != n / 3 {
            winner_count_errors += 1;
        }
        let own: f64 = winners.iter().map(|&i| fees[i]).sum();
        let paid = st.ledger.payouts_made;
        let general = 3.0 * winners.len() as f64 / n as f64 * collected - 3.0 / n as f64 * own;
        worst_general = worst_general.max((paid - general).abs() / collected);
        if n % 3 == 0 {
            worst_exact =
                worst_exact.max((paid - (collected - 3.0 / n as f64 * own)).abs() / collected);
        }
        worst_slack = worst_slack.max(paid - collected);
    }
    Ok(vec![
        Check::within(
            "budget_identity_exact",
            worst_exact,
            1e-12,
            "paid vs collected - (3/n) sum of winners' fees, n divisible by 3",
        ),
        Check::within(
            "budget_identity_general",
            worst_general,
            1e-12,
            "paid vs (3W/n) collected - (3/n) sum of winners' fees",
        ),
        Check::within(
            "budget_feasible",
            worst_slack,
            0.0,
            "largest paid minus collected",
        ),
        Check::within(
            "one_winner_per_triple",
            f64::from(winner_count_errors),
            0.0,
            "rosters without floor(n/3) winners",
        ),
    ])
}

/// Log-log slope of averaged-gradient variance over batch sizes 1..256.
pub fn variance_slope(seed: u64) -> Result<Check> {
    let task = SyntheticTask::new(16, 0.1, 1.0, 3.0)?;
    let sizes: Vec<u64> = (0..=8).map(|p| 1u64 << p).collect();
    let v = measure_variance_scaling(&task, &sizes, 2000, seed)?;
    let xs: Vec<f64> = sizes.iter().map(|&m| (m as f64).ln()).collect();
    let ys: Vec<f64> = v.iter().map(|x| x.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    Ok(Check::within(
        "variance_slope",
        (slope + 1.0).abs(),
        0.05,
        format!("slope {slope:.4} over M = 1..256, 2000 draws each"),
    ))
}

/// Time-averaged squared gradient norm against the bound, one local step.
pub fn convergence_bound_runs(
    name: &str,
    task: &SyntheticTask,
    agents: &[AgentProfile],
    base: &FedConfig,
    seeds: u64,
) -> Result<Check> {
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..seeds {
        let cfg = FedConfig {
            local_steps: 1,
            seed: base.seed.wrapping_add(seed),
            ..*base
        };
        let run = run_pfl_training(agents, task, &cfg)?;
        let bound = convergence_bound(&run, task, run.initial_gap)?;
        worst = worst.max(run.mean_grad_norm_sq() / bound);
    }
    Ok(Check::within(
        name,
        worst,
        1.0,
        format!("{seeds} seeds, worst ratio of averaged squared gradient norm to the bound"),
    ))
}

pub fn reference_bound_runs() -> Result<Check> {
    let task = SyntheticTask::new(16, 0.1, 1.0, 6.0)?;
    let agents = (0..8)
        .map(|_| AgentProfile::truthful(1.0, 4.0))
        .collect::<factsim_core::Result<Vec<_>>>()?;
    let cfg = FedConfig {
        rounds: 2000,
        local_steps: 1,
        epochs: 1,
        batches_per_epoch: None,
        step_size: 0.5,
        seed: 0,
    };
    convergence_bound_runs("convergence_bound_reference", &task, &agents, &cfg, 20)
}

/// Sweep shape: peak at 0%, nonincreasing in |misreport|, and the 0% row
/// agreeing with the exact expectation.
pub fn sweep_checks(s: &Scenario) -> Result<Vec<Check>> {
    let rows = sweep_rows(s)?;
    let zero = rows
        .iter()
        .position(|r| r.misreport_pct == 0.0)
        .unwrap_or(0);
    let peak = rows[zero].mean_net_improvement;
    let above_peak = rows
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != zero)
        .map(|(_, r)| r.mean_net_improvement - peak)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut rise: f64 = 0.0;
    for j in 1..rows.len() {
        // moving away from 0% on either side
        let (inner, outer) = if j <= zero { (j, j - 1) } else { (j - 1, j) };
        rise = rise.max(rows[outer].mean_net_improvement - rows[inner].mean_net_improvement);
    }
    let r0 = &rows[zero];
    let z0 = if r0.stderr > 0.0 {
        (r0.mean_net_improvement - r0.expected_net_improvement).abs() / r0.stderr
    } else {
        0.0
    };
    let mut table = ResultTable::new("sweep", &SWEEP_COLUMNS, TableMeta::new(&s.hash, s.seed()))?;
    for r in &rows {
        table.push(vec![
            r.misreport_pct,
            r.reported_cost,
            r.win_prob,
            r.mean_net_improvement,
            r.stderr,
        ]);
    }
    let back = ResultTable::from_csv("sweep", &table.to_csv()?, table.meta.clone())?;
    Ok(vec![
        Check::negative(
            "sweep_peak_at_truth",
            above_peak,
            "largest off-zero net improvement minus the 0% value",
        ),
        Check::within(
            "sweep_monotone_decay",
            rise,
            0.0,
            "largest increase moving away from 0%",
        ),
        Check::within(
            "sweep_truthful_expectation",
            z0,
            3.0,
            "0% row vs (3 upsilon/n) sum of others' fees, in standard errors",
        ),
        Check::within(
            "csv_round_trip",
            f64::from(u8::from(back != table)),
            0.0,
            "sweep table re-parsed",
        ),
    ])
}

pub fn penalty_checks(s: &Scenario) -> Result<Vec<Check>> {
    let (rows, summary) = penalty_curve(s)?;
    let at_zero = rows[0].1;
    let mid = rows[(rows.len() - 1) / 2].1;
    Ok(vec![
        Check::within(
            "penalty_curve_minimiser",
            (summary.argmin - summary.m_star).abs() / summary.step,
            1.0,
            format!(
                "argmin {:.3} vs m* {:.3}, in grid steps",
                summary.argmin, summary.m_star
            ),
        ),
        Check::negative(
            "penalty_curve_zero_exceeds_optimum",
            mid - at_zero,
            "value at m* minus value at 0",
        ),
    ])
}

pub fn compare_checks(s: &Scenario) -> Result<Vec<Check>> {
    let (rows, _) = compare_rows(s)?;
    let mut order: f64 = f64::NEG_INFINITY;
    let mut mixture: f64 = 0.0;
    for r in &rows {
        // allow Monte Carlo noise on the FACT column
        let slack = 3.0 * r.fact_stderr;
        order = order
            .max(r.federated_loss - r.fact_mean_loss - slack)
            .max(r.fact_mean_loss - r.local_loss - slack);
        if r.fact_stderr > 0.0 {
            mixture = mixture.max((r.fact_mean_loss - r.fact_mixture).abs() / r.fact_stderr);
        }
    }
    let mut checks = vec![Check::within(
        "compare_ordering",
        order,
        0.0,
        "largest violation of federated <= FACT <= local beyond 3 standard errors",
    )];
    if s.config.competition.mode == crate::config::CompetitionMode::Synthetic {
        checks.push(Check::within(
            "compare_mixture_identity",
            mixture,
            4.0,
            "FACT mean vs upsilon-weighted branch mixture, in standard errors",
        ));
    }
    Ok(checks)
}

pub fn cmd_verify(s: &Scenario, opts: VerifyOptions) -> Result<VerifyReport> {
    let seed = s.seed();
    let k = s.constants.k();
    let base = Baseline::new(s)?;
    let mut checks = local_optimum_fixtures()?;
    checks.push(free_riding_fixture()?);
    checks.push(local_optimum_oracle(&s.true_costs, k)?);
    checks.push(federated_optimum_oracle(&s.true_costs, &base.sums, k)?);
    checks.extend(pfl_random_draws(seed, 200, opts.lambda_scale)?);
    checks.push(ir_gap_roster(s, opts.lambda_scale)?);
    checks.extend(branch_losses(s)?);
    checks.push(expectation_simplification(seed, 1000)?);
    let i = s.focal;
    checks.extend(joint_optimum(
        "roster",
        &s.dists[i],
        s.true_costs[i],
        k,
        s.n(),
        s.constants.alpha(),
    )?);
    for (name, d) in [
        (
            "gaussian",
            CostDistribution::gaussian_around(s.true_costs[i], 0.1)?,
        ),
        (
            "uniform",
            CostDistribution::uniform(0.6 * s.true_costs[i], 1.4 * s.true_costs[i])?,
        ),
    ] {
        checks.extend(joint_optimum(
            name,
            &d,
            s.true_costs[i],
            k,
            s.n(),
            s.constants.alpha(),
        )?);
    }
    checks.push(win_probability_mc(
        "win_probability_reference",
        &reference_pairs()?,
        s.trials(),
        seed,
        Sampling::PerTrial,
    )?);
    checks.push(win_probability_mc(
        "win_probability_roster",
        &roster_pairs(s),
        s.trials(),
        seed ^ 1,
        Sampling::PerTrial,
    )?);
    checks.push(sandwich_permutations()?);
    checks.extend(budget_random_rosters(seed, 1000)?);
    checks.extend(sweep_checks(s)?);
    checks.extend(penalty_checks(s)?);
    checks.extend(compare_checks(s)?);
    checks.push(variance_slope(seed)?);
    checks.push(reference_bound_runs()?);
    if let Some((task, fed)) = &s.fedsim {
        checks.push(convergence_bound_runs(
            "convergence_bound_roster",
            task,
            &s.roster()?,
            fed,
            20,
        )?);
    }
    Ok(VerifyReport {
        scenario: s.config.name.clone(),
        scenario_hash: s.hash.clone(),
        seed,
        trials: s.trials(),
        lambda_scale: opts.lambda_scale,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
