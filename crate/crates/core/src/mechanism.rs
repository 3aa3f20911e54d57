//! Server side of the mechanism: penalty scalars, penalty and fee
//! collection, the sandwich competition and payout settlement.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{contract_fee, free_rider_penalty, lambda_for, ContractFee};
use crate::model::{others_sum, AgentProfile, CostDistribution, MechanismConstants};
use crate::par;
use crate::rng::{stream, Domain};

/// Running totals for the server.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ServerLedger {
    pub penalties_collected: f64,
    pub fees_collected: f64,
    pub payouts_made: f64,
}

impl ServerLedger {
    pub fn absorb(&mut self, delta: &ServerLedger) {
        self.penalties_collected += delta.penalties_collected;
        self.fees_collected += delta.fees_collected;
        self.payouts_made += delta.payouts_made;
    }

    pub fn is_finite(&self) -> bool {
        self.penalties_collected.is_finite()
            && self.fees_collected.is_finite()
            && self.payouts_made.is_finite()
    }

    /// Payouts never exceed the fee pool (up to rounding of the sums).
    pub fn is_budget_feasible(&self) -> bool {
        self.is_finite()
            && self.payouts_made <= self.fees_collected + 1e-12 * self.fees_collected.abs()
    }
}

fn check_roster(agents: &[AgentProfile], constants: &MechanismConstants) -> Result<()> {
    if agents.len() != constants.n() {
        return Err(Error::Config(format!(
            "roster has {} agents but constants declare n = {}",
            agents.len(),
            constants.n()
        )));
    }
    Ok(())
}

fn assigned_lambda(agent: &AgentProfile, index: usize) -> Result<f64> {
    agent
        .lambda()
        .ok_or_else(|| Error::Config(format!("agent {index} has no penalty scalar assigned")))
}

/// Give every agent its penalty scalar.
///
/// The server has only reported costs at this point, so the other agents'
/// data is taken to be their expected optima `sqrt(k/(2c_j))`.
pub fn assign_lambdas(
    agents: &[AgentProfile],
    constants: &MechanismConstants,
) -> Result<Vec<AgentProfile>> {
    check_roster(agents, constants)?;
    let k = constants.k();
    let expected: Vec<f64> = agents
        .iter()
        .map(|a| (k / (2.0 * a.reported_cost())).sqrt())
        .collect();
    let total: f64 = expected.iter().sum();
    agents
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let sum_others = total - expected[i];
            let lambda = lambda_for(a.reported_cost(), sum_others, k, constants.alpha()).map_err(
                |e| match e {
                    Error::Singular { .. } => Error::Singular { agent: i },
                    other => other,
                },
            )?;
            a.with_lambda(lambda)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyCollection {
    pub penalties: Vec<f64>,
    pub ledger: ServerLedger,
}

/// Charge every agent its free-rider penalty for the data it actually used.
pub fn collect_penalties(
    agents: &[AgentProfile],
    constants: &MechanismConstants,
) -> Result<PenaltyCollection> {
    check_roster(agents, constants)?;
    let penalties = agents
        .iter()
        .enumerate()
        .map(|(i, a)| {
            free_rider_penalty(
                a.data_amount(),
                a.reported_cost(),
                assigned_lambda(a, i)?,
                others_sum(agents, i)?,
                constants.k(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let ledger = ServerLedger {
        penalties_collected: penalties.iter().sum(),
        ..ServerLedger::default()
    };
    Ok(PenaltyCollection { penalties, ledger })
}

/// What to do with an agent that used no data when fees are due.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZeroDataPolicy {
    /// The fee formula divides by `m`; refuse.
    Reject,
    /// Charge nothing and keep the agent out of the payout pool.
    Waive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeeCollection {
    /// `None` where a zero-data agent's fee was waived.
    pub fees: Vec<Option<ContractFee>>,
    pub ledger: ServerLedger,
}

impl FeeCollection {
    /// Collected amounts, zero where waived.
    pub fn amounts(&self) -> Vec<f64> {
        self.fees
            .iter()
            .map(|f| f.map_or(0.0, |f| f.full))
            .collect()
    }
}

/// Collect contract fees; errors if any agent used no data.
pub fn collect_fees(
    agents: &[AgentProfile],
    constants: &MechanismConstants,
) -> Result<FeeCollection> {
    collect_fees_with(agents, constants, ZeroDataPolicy::Reject)
}

pub fn collect_fees_with(
    agents: &[AgentProfile],
    constants: &MechanismConstants,
    policy: ZeroDataPolicy,
) -> Result<FeeCollection> {
    check_roster(agents, constants)?;
    let fees = agents
        .iter()
        .enumerate()
        .map(|(i, a)| {
            if a.data_amount() == 0.0 && policy == ZeroDataPolicy::Waive {
                return Ok(None);
            }
            contract_fee(
                a.data_amount(),
                a.reported_cost(),
                others_sum(agents, i)?,
                constants.k(),
                assigned_lambda(a, i)?,
            )
            .map(Some)
        })
        .collect::<Result<Vec<_>>>()?;
    let ledger = ServerLedger {
        fees_collected: fees.iter().flatten().map(|f| f.full).sum(),
        ..ServerLedger::default()
    };
    Ok(FeeCollection { fees, ledger })
}

/// Probability of being strictly sandwiched by two independent draws:
/// `2·P(C<c)·P(C>c)`, i.e. `2F(c)(1−F(c))` for a continuous law.
pub fn win_probability(c: f64, dist: &CostDistribution) -> f64 {
    2.0 * dist.prob_below(c) * dist.prob_above(c)
}

pub fn win_probability_from_cdf(f: f64) -> f64 {
    2.0 * f * (1.0 - f)
}

/// `c` wins against `(a, b)` iff it lies strictly between them.
#[inline]
pub fn is_sandwiched(c: f64, a: f64, b: f64) -> bool {
    a.min(b) < c && c < a.max(b)
}

/// How an agent was graded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Grading {
    /// Competed inside a triple of real agents (indices into the roster).
    Triple { group: [usize; 3] },
    /// Compared against two costs drawn from its distribution.
    Synthetic { c_a: f64, c_b: f64 },
    /// Left over after grouping and not eligible to win.
    SatOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub won: bool,
    pub fee_paid: f64,
    pub payout: f64,
    pub grading: Grading,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitionOutcome {
    pub agents: Vec<AgentOutcome>,
    pub ledger: ServerLedger,
}

impl CompetitionOutcome {
    pub fn winners(&self) -> impl Iterator<Item = usize> + '_ {
        self.agents
            .iter()
            .enumerate()
            .filter(|(_, a)| a.won)
            .map(|(i, _)| i)
    }
}

/// Treatment of the `n mod 3` agents left after grouping.
#[derive(Debug, Clone, PartialEq)]
pub enum RemainderRule {
    SitOut,
    /// Grade each leftover agent against two draws from its own distribution
    /// (one per roster entry). May produce more than `n/3` winners.
    Synthetic(Vec<CostDistribution>),
}

/// Winner of one triple: the agent holding the median cost; agents tied at
/// the median are chosen between uniformly.
fn triple_winner<R: Rng + ?Sized>(costs: [f64; 3], rng: &mut R) -> usize {
    let mut sorted = costs;
    sorted.sort_by(f64::total_cmp);
    let median = sorted[1];
    let tied: Vec<usize> = (0..3).filter(|&j| costs[j] == median).collect();
    if tied.len() == 1 {
        tied[0]
    } else {
        tied[rng.random_range(0..tied.len())]
    }
}

/// Randomly partition the roster into triples and grade each by reported cost.
pub fn run_competition_triples(
    agents: &[AgentProfile],
    remainder: &RemainderRule,
    seed: u64,
) -> Result<CompetitionOutcome> {
    let n = agents.len();
    if n < 3 {
        return Err(Error::Config(format!(
            "triple competition needs n >= 3, got {n}"
        )));
    }
    if let RemainderRule::Synthetic(dists) = remainder {
        if dists.len() != n {
            return Err(Error::Config(format!(
                "{} cost distributions for {n} agents",
                dists.len()
            )));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, Domain::Grouping, 0, 0));

    let mut outcomes: Vec<AgentOutcome> = (0..n)
        .map(|_| AgentOutcome {
            won: false,
            fee_paid: 0.0,
            payout: 0.0,
            grading: Grading::SatOut,
        })
        .collect();

    let mut chunks = order.chunks_exact(3);
    for (g, chunk) in chunks.by_ref().enumerate() {
        let group = [chunk[0], chunk[1], chunk[2]];
        let costs = group.map(|i| agents[i].reported_cost());
        let winner = triple_winner(costs, &mut stream(seed, Domain::TieBreak, g as u64, 0));
        for (slot, &i) in group.iter().enumerate() {
            outcomes[i].grading = Grading::Triple { group };
            outcomes[i].won = slot == winner;
        }
    }
    if let RemainderRule::Synthetic(dists) = remainder {
        for &i in chunks.remainder() {
            let mut rng = stream(seed, Domain::Remainder, i as u64, 0);
            let c_a = dists[i].sample(&mut rng);
            let c_b = dists[i].sample(&mut rng);
            outcomes[i].won = is_sandwiched(agents[i].reported_cost(), c_a, c_b);
            outcomes[i].grading = Grading::Synthetic { c_a, c_b };
        }
    }
    Ok(CompetitionOutcome {
        agents: outcomes,
        ledger: ServerLedger::default(),
    })
}

/// Where the two competing costs of a synthetic trial come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sampling {
    /// Two fresh draws per trial.
    PerTrial,
    /// A pool of `size` draws made once per agent; each trial picks two
    /// distinct entries.
    FixedPool { size: usize },
}

fn draw_pool(dist: &CostDistribution, size: usize, seed: u64, lane: u64) -> Vec<f64> {
    let mut rng = stream(seed, Domain::Pool, lane, 0);
    (0..size).map(|_| dist.sample(&mut rng)).collect()
}

/// The two competing costs for trial `trial` on stream lane `lane`.
fn trial_costs(
    dist: &CostDistribution,
    pool: Option<&[f64]>,
    seed: u64,
    lane: u64,
    trial: u64,
) -> (f64, f64) {
    let mut rng = stream(seed, Domain::Synthetic, lane, trial);
    match pool {
        None => (dist.sample(&mut rng), dist.sample(&mut rng)),
        Some(pool) => {
            let a = rng.random_range(0..pool.len());
            let mut b = rng.random_range(0..pool.len() - 1);
            if b >= a {
                b += 1;
            }
            (pool[a], pool[b])
        }
    }
}

const TRIAL_CHUNK: u64 = 1024;

/// Wins in `trials` synthetic competitions for a single reported cost.
///
/// Trial `t` always uses the stream at `(seed, lane, t)`, so two calls with
/// the same lane and different `c` see the same competing costs.
pub fn synthetic_wins(
    c: f64,
    dist: &CostDistribution,
    trials: u64,
    seed: u64,
    lane: u64,
    sampling: Sampling,
) -> Result<u64> {
    let pool = match sampling {
        Sampling::PerTrial => None,
        Sampling::FixedPool { size } if size >= 2 => Some(draw_pool(dist, size, seed, lane)),
        Sampling::FixedPool { size } => {
            return Err(Error::Config(format!(
                "cost pool needs at least 2 entries, got {size}"
            )))
        }
    };
    let chunks = trials.div_ceil(TRIAL_CHUNK) as usize;
    let counts = par::map_indices(chunks, |chunk| {
        let start = chunk as u64 * TRIAL_CHUNK;
        let end = (start + TRIAL_CHUNK).min(trials);
        (start..end)
            .filter(|&t| {
                let (a, b) = trial_costs(dist, pool.as_deref(), seed, lane, t);
                is_sandwiched(c, a, b)
            })
            .count() as u64
    });
    Ok(counts.iter().sum())
}

/// Monte Carlo summary of repeated synthetic competitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOutcome {
    pub trials: u64,
    pub wins: Vec<u64>,
    pub win_frequency: Vec<f64>,
    /// Mean payout per trial, `frequency · (3/n)·Σ_{j≠i} fee_j`.
    pub mean_payout: Vec<f64>,
    /// Fee minus mean payout; negative when the agent nets money on average.
    pub mean_net_transfer: Vec<f64>,
}

/// Run `trials` synthetic competitions for every agent. Agent `j` draws from
/// `dists[j]` on stream lane `j`. With `fees`, payouts are averaged too.
pub fn run_competition_synthetic(
    agents: &[AgentProfile],
    dists: &[CostDistribution],
    trials: u64,
    seed: u64,
    sampling: Sampling,
    fees: Option<&[f64]>,
) -> Result<SyntheticOutcome> {
    if trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let n = agents.len();
    if dists.len() != n {
        return Err(Error::Config(format!(
            "{} cost distributions for {n} agents",
            dists.len()
        )));
    }
    if let Some(f) = fees {
        if f.len() != n {
            return Err(Error::Config(format!("{} fees for {n} agents", f.len())));
        }
    }
    let wins = agents
        .iter()
        .zip(dists)
        .enumerate()
        .map(|(j, (a, d))| synthetic_wins(a.reported_cost(), d, trials, seed, j as u64, sampling))
        .collect::<Result<Vec<_>>>()?;
    let win_frequency: Vec<f64> = wins.iter().map(|&w| w as f64 / trials as f64).collect();
    let pool: f64 = fees.map_or(0.0, |f| f.iter().sum());
    let (mean_payout, mean_net_transfer) = (0..n)
        .map(|i| {
            let own = fees.map_or(0.0, |f| f[i]);
            let payout = win_frequency[i] * 3.0 / n as f64 * (pool - own);
            (payout, own - payout)
        })
        .unzip();
    Ok(SyntheticOutcome {
        trials,
        wins,
        win_frequency,
        mean_payout,
        mean_net_transfer,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    pub outcome: CompetitionOutcome,
    /// Fee paid minus payout received, per agent.
    pub net_transfers: Vec<f64>,
    pub ledger: ServerLedger,
}

/// Pay each winner three times the average of the other agents' fees.
pub fn settle(
    outcome: &CompetitionOutcome,
    fees: &[f64],
    constants: &MechanismConstants,
) -> Result<Settlement> {
    let n = constants.n();
    if fees.len() != n || outcome.agents.len() != n {
        return Err(Error::Config(format!(
            "settlement needs {n} fees and outcomes, got {} and {}",
            fees.len(),
            outcome.agents.len()
        )));
    }
    let collected: f64 = fees.iter().sum();
    let mut settled = outcome.clone();
    let mut paid = 0.0;
    for (agent, &fee) in settled.agents.iter_mut().zip(fees) {
        agent.fee_paid = fee;
        agent.payout = if agent.won {
            3.0 / n as f64 * (collected - fee)
        } else {
            0.0
        };
        paid += agent.payout;
    }
    let ledger = ServerLedger {
        penalties_collected: 0.0,
        fees_collected: collected,
        payouts_made: paid,
    };
    if !ledger.is_budget_feasible() {
        return Err(Error::Invariant(format!(
            "payouts {paid} exceed collected fees {collected}"
        )));
    }
    settled.ledger = ledger;
    let net_transfers = settled
        .agents
        .iter()
        .map(|a| a.fee_paid - a.payout)
        .collect();
    Ok(Settlement {
        outcome: settled,
        net_transfers,
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::ir_gap_analytic;
    use approx::assert_relative_eq;

    fn constants(n: usize) -> MechanismConstants {
        MechanismConstants::new(2.0, 1.0, n).unwrap()
    }

    fn fixture_roster(n: usize) -> Vec<AgentProfile> {
        (0..n)
            .map(|_| AgentProfile::truthful(1.024e-7, 3125.0).unwrap())
            .collect()
    }

    #[test]
    fn identical_agents_get_identical_lambdas() {
        let agents = assign_lambdas(&fixture_roster(16), &constants(16)).unwrap();
        let expected = lambda_for(1.024e-7, 15.0 * 3125.0, 2.0, 1.0).unwrap();
        for a in &agents {
            assert_relative_eq!(a.lambda().unwrap(), expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn distinct_costs_distinct_lambdas() {
        let agents = vec![
            AgentProfile::truthful(1.0, 1.0).unwrap(),
            AgentProfile::truthful(0.25, 2.0).unwrap(),
        ];
        let out = assign_lambdas(&agents, &constants(2)).unwrap();
        let (a, b) = (out[0].lambda().unwrap(), out[1].lambda().unwrap());
        assert!(a > 0.0 && b > 0.0 && a != b);
    }

    #[test]
    fn huge_reported_cost_keeps_lambda_finite() {
        // with m* -> 0 the scalar behaves like m*·c²/((2-α)k) ∝ c^{3/2}
        let lam_at = |c: f64| {
            let mut agents = fixture_roster(4);
            agents[0] = agents[0].with_reported_cost(c).unwrap();
            assign_lambdas(&agents, &constants(4)).unwrap()[0]
                .lambda()
                .unwrap()
        };
        let (a, b) = (lam_at(1e12), lam_at(4e12));
        assert!(a.is_finite() && a > 0.0 && b.is_finite());
        assert_relative_eq!(b / a, 8.0, max_relative = 1e-6);
    }

    #[test]
    fn roster_size_must_match() {
        assert!(matches!(
            assign_lambdas(&fixture_roster(3), &constants(4)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn penalties_minimal_at_vertex_and_punish_free_riding() {
        let c = 1.024e-7;
        let agents = assign_lambdas(&fixture_roster(16), &constants(16)).unwrap();
        let at_opt = collect_penalties(&agents, &constants(16)).unwrap();
        let p0 = at_opt.penalties[0];
        assert!(p0 > 0.0);
        assert_relative_eq!(
            at_opt.ledger.penalties_collected,
            16.0 * p0,
            max_relative = 1e-12
        );

        // the penalty's own vertex sits at m_c* + offset, so compare penalty + data cost
        let lam = agents[0].lambda().unwrap();
        let total = |m: f64| free_rider_penalty(m, c, lam, 46875.0, 2.0).unwrap() + c * m;
        for f in [0.9, 1.1] {
            assert!(total(3125.0 * f) > total(3125.0));
        }

        let mut riders = agents.clone();
        riders[0] = riders[0].with_data_amount(0.0).unwrap();
        let ridden = collect_penalties(&riders, &constants(16)).unwrap();
        assert!(ridden.penalties[0] > p0 + c * 3125.0);

        let mut off = agents;
        off[1] = off[1].with_lambda(0.0).unwrap();
        assert_eq!(
            collect_penalties(&off, &constants(16)),
            Err(Error::DegeneratePenalty)
        );
    }

    #[test]
    fn fees_at_truthful_optimum_equal_ir_gap() {
        let agents = assign_lambdas(&fixture_roster(16), &constants(16)).unwrap();
        let fees = collect_fees(&agents, &constants(16)).unwrap();
        let gap = ir_gap_analytic(3125.0, 46875.0, 2.0, 1.0).unwrap();
        for f in &fees.fees {
            assert_relative_eq!(f.unwrap().full, gap, max_relative = 1e-9);
        }
        assert_eq!(
            fees.amounts()
                .iter()
                .filter(|&&a| a == fees.amounts()[0])
                .count(),
            16
        );
    }

    #[test]
    fn zero_data_fee_policy() {
        let mut agents = assign_lambdas(&fixture_roster(4), &constants(4)).unwrap();
        agents[2] = agents[2].with_data_amount(0.0).unwrap();
        assert!(matches!(
            collect_fees(&agents, &constants(4)),
            Err(Error::Domain { .. })
        ));
        let waived = collect_fees_with(&agents, &constants(4), ZeroDataPolicy::Waive).unwrap();
        assert!(waived.fees[2].is_none());
        assert_eq!(waived.amounts()[2], 0.0);
    }

    #[test]
    fn sandwich_winner_is_median_for_all_orderings() {
        let values = [1.0, 2.0, 3.0];
        let perms = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for p in perms {
            let costs = p.map(|i| values[i]);
            let w = triple_winner(costs, &mut stream(0, Domain::TieBreak, 0, 0));
            assert_eq!(costs[w], 2.0);
        }
    }

    #[test]
    fn three_way_tie_is_uniform() {
        let runs = 100_000u64;
        let mut counts = [0u64; 3];
        for r in 0..runs {
            counts[triple_winner([5.0, 5.0, 5.0], &mut stream(0, Domain::TieBreak, 0, r))] += 1;
        }
        let sd = (runs as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!(
                (c as f64 - runs as f64 / 3.0).abs() < 3.0 * sd,
                "{counts:?}"
            );
        }
    }

    #[test]
    fn partial_tie_picks_among_median_holders() {
        for r in 0..200 {
            let w = triple_winner([1.0, 2.0, 2.0], &mut stream(1, Domain::TieBreak, 0, r));
            assert!(w == 1 || w == 2);
            let w = triple_winner([1.0, 1.0, 2.0], &mut stream(1, Domain::TieBreak, 0, r));
            assert!(w == 0 || w == 1);
        }
    }

    #[test]
    fn triples_partition_sixteen_agents() {
        let agents: Vec<AgentProfile> = (0..16)
            .map(|i| AgentProfile::truthful(1.0 + i as f64, 1.0).unwrap())
            .collect();
        let out = run_competition_triples(&agents, &RemainderRule::SitOut, 3).unwrap();
        let in_triples = out
            .agents
            .iter()
            .filter(|a| matches!(a.grading, Grading::Triple { .. }))
            .count();
        assert_eq!(in_triples, 15);
        assert_eq!(out.winners().count(), 5);

        let dists: Vec<CostDistribution> = agents
            .iter()
            .map(|a| CostDistribution::gaussian_around(a.true_cost(), 0.1).unwrap())
            .collect();
        let synth = run_competition_triples(&agents, &RemainderRule::Synthetic(dists), 3).unwrap();
        let leftover = synth
            .agents
            .iter()
            .filter(|a| matches!(a.grading, Grading::Synthetic { .. }))
            .count();
        assert_eq!(leftover, 1);
        assert_eq!(
            out,
            run_competition_triples(&agents, &RemainderRule::SitOut, 3).unwrap()
        );
        assert!(run_competition_triples(&agents[..2], &RemainderRule::SitOut, 3).is_err());
    }

    #[test]
    fn win_probability_values() {
        assert_eq!(win_probability_from_cdf(0.5), 0.5);
        assert_eq!(win_probability_from_cdf(1.0), 0.0);
        let u = CostDistribution::uniform(0.0, 1.0).unwrap();
        assert_eq!(win_probability(0.25, &u), 0.375);
        assert_eq!(win_probability(0.5, &u), 0.5);
    }

    #[test]
    fn synthetic_uniform_half() {
        let u = CostDistribution::uniform(0.0, 1.0).unwrap();
        let trials = 20_000;
        let wins = synthetic_wins(0.5, &u, trials, 11, 0, Sampling::PerTrial).unwrap();
        let freq = wins as f64 / trials as f64;
        assert!(
            (freq - 0.5).abs() < 3.0 * (0.25 / trials as f64).sqrt(),
            "{freq}"
        );
    }

    #[test]
    fn below_support_never_wins() {
        let u = CostDistribution::uniform(1.0, 2.0).unwrap();
        assert_eq!(
            synthetic_wins(0.5, &u, 5_000, 1, 0, Sampling::PerTrial).unwrap(),
            0
        );
        assert_eq!(
            synthetic_wins(0.5, &u, 5_000, 1, 0, Sampling::FixedPool { size: 2000 }).unwrap(),
            0
        );
    }

    #[test]
    fn synthetic_truthful_gaussian_near_half() {
        let agents = fixture_roster(3);
        let dists: Vec<_> = agents
            .iter()
            .map(|a| CostDistribution::gaussian_around(a.true_cost(), 0.1).unwrap())
            .collect();
        let out = run_competition_synthetic(
            &agents,
            &dists,
            20_000,
            5,
            Sampling::PerTrial,
            Some(&[1.0, 1.0, 1.0]),
        )
        .unwrap();
        for (f, p) in out.win_frequency.iter().zip(&out.mean_payout) {
            assert!((f - 0.5).abs() < 3.0 * (0.25f64 / 20_000.0).sqrt());
            assert_relative_eq!(*p, f * 2.0, max_relative = 1e-12);
        }
        assert!(
            run_competition_synthetic(&agents, &dists, 0, 5, Sampling::PerTrial, None).is_err()
        );
    }

    #[test]
    fn settle_examples() {
        let mk = |won: &[bool]| CompetitionOutcome {
            agents: won
                .iter()
                .map(|&w| AgentOutcome {
                    won: w,
                    fee_paid: 0.0,
                    payout: 0.0,
                    grading: Grading::SatOut,
                })
                .collect(),
            ledger: ServerLedger::default(),
        };
        let s = settle(
            &mk(&[true, false, false, true, false, false]),
            &[1.0; 6],
            &constants(6),
        )
        .unwrap();
        assert_eq!(s.outcome.agents[0].payout, 2.5);
        assert_eq!(s.outcome.agents[3].payout, 2.5);
        assert_eq!(s.ledger.payouts_made, 5.0);
        assert_eq!(s.ledger.fees_collected, 6.0);

        let s = settle(&mk(&[false, true, false]), &[1.0; 3], &constants(3)).unwrap();
        assert_eq!(s.ledger.payouts_made, 2.0);
        assert_eq!(s.net_transfers, vec![1.0, -1.0, 1.0]);

        let s = settle(&mk(&[false, true, false]), &[0.0; 3], &constants(3)).unwrap();
        assert!(s.outcome.agents.iter().all(|a| a.payout == 0.0));

        // two winners among four agents overdraw the pool
        let err = settle(&mk(&[true, true, false, false]), &[1.0; 4], &constants(4)).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }
}
