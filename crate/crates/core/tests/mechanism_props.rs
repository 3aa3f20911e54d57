use factsim_core::loss::{expected_fact_loss, AgentPoint};
use factsim_core::mechanism::*;
use factsim_core::{AgentProfile, CostDistribution, MechanismConstants};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_roster(rng: &mut ChaCha8Rng, n: usize) -> Vec<AgentProfile> {
    (0..n)
        .map(|_| {
            // coarse grid of costs so ties occur
            let c = f64::from(rng.random_range(1..20u32)) * 0.1;
            AgentProfile::truthful(c, 1.0).unwrap()
        })
        .collect()
}

#[test]
fn budget_identity_on_random_rosters() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..1000u64 {
        let n = rng.random_range(3..=60usize);
        let agents = random_roster(&mut rng, n);
        let fees: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let constants = MechanismConstants::new(2.0, 1.0, n).unwrap();
        let outcome = run_competition_triples(&agents, &RemainderRule::SitOut, trial).unwrap();
        let s = settle(&outcome, &fees, &constants).unwrap();
        let collected: f64 = fees.iter().sum();
        let winners: Vec<usize> = s.outcome.winners().collect();
        assert_eq!(winners.len(), n / 3);
        let own: f64 = winners.iter().map(|&i| fees[i]).sum();
        let general = 3.0 * winners.len() as f64 / n as f64 * collected - 3.0 / n as f64 * own;
        let tol = 1e-12 * collected;
        assert!((s.ledger.payouts_made - general).abs() <= tol);
        if n % 3 == 0 {
            assert!((s.ledger.payouts_made - (collected - 3.0 / n as f64 * own)).abs() <= tol);
        }
        assert!(s.ledger.payouts_made <= collected);
        assert!(s.ledger.is_budget_feasible());
    }
}

#[test]
fn exactly_one_winner_per_triple() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..200 {
        let agents = random_roster(&mut rng, 30);
        let out = run_competition_triples(&agents, &RemainderRule::SitOut, seed).unwrap();
        let mut groups: Vec<[usize; 3]> = out
            .agents
            .iter()
            .filter_map(|a| match a.grading {
                Grading::Triple { group } => Some(group),
                _ => None,
            })
            .collect();
        groups.sort();
        groups.dedup();
        assert_eq!(groups.len(), 10);
        for g in groups {
            let winners: Vec<usize> = g.iter().copied().filter(|&i| out.agents[i].won).collect();
            assert_eq!(winners.len(), 1);
            let mut costs = g.map(|i| agents[i].reported_cost());
            costs.sort_by(f64::total_cmp);
            assert_eq!(agents[winners[0]].reported_cost(), costs[1]);
        }
    }
}

#[test]
fn same_seed_same_outcome() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let agents = random_roster(&mut rng, 17);
    let dists: Vec<_> = agents
        .iter()
        .map(|a| CostDistribution::gaussian_around(a.true_cost(), 0.1).unwrap())
        .collect();
    let rule = RemainderRule::Synthetic(dists.clone());
    assert_eq!(
        run_competition_triples(&agents, &rule, 9).unwrap(),
        run_competition_triples(&agents, &rule, 9).unwrap()
    );
    let a = run_competition_synthetic(&agents, &dists, 5000, 3, Sampling::PerTrial, None).unwrap();
    let b = run_competition_synthetic(&agents, &dists, 5000, 3, Sampling::PerTrial, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn synthetic_counts_independent_of_worker_count() {
    let dist = CostDistribution::gaussian_around(1.0, 0.1).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                (
                    synthetic_wins(1.03, &dist, 20_000, 8, 4, Sampling::PerTrial).unwrap(),
                    synthetic_wins(
                        1.03,
                        &dist,
                        20_000,
                        8,
                        4,
                        Sampling::FixedPool { size: 2000 },
                    )
                    .unwrap(),
                )
            })
    };
    assert_eq!(run(1), run(8));
}

/// Ten (distribution, reported cost) pairs, Monte Carlo against the closed form.
#[test]
fn sandwich_frequency_matches_closed_form() {
    let cases = [
        (CostDistribution::uniform(0.0, 1.0).unwrap(), 0.5),
        (CostDistribution::uniform(0.0, 1.0).unwrap(), 0.25),
        (CostDistribution::uniform(0.0, 1.0).unwrap(), 0.9),
        (CostDistribution::uniform(2.0, 3.0).unwrap(), 2.05),
        (CostDistribution::gaussian_around(1.0, 0.1).unwrap(), 1.0),
        (CostDistribution::gaussian_around(1.0, 0.1).unwrap(), 1.1),
        (CostDistribution::gaussian_around(1.0, 0.1).unwrap(), 0.8),
        (CostDistribution::gaussian(1.0, 1.0, 0.3).unwrap(), 0.5),
        (
            CostDistribution::empirical(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(),
            2.5,
        ),
        (
            CostDistribution::empirical((1..=50).map(f64::from).collect()).unwrap(),
            37.5,
        ),
    ];
    let trials = 100_000u64;
    for (lane, (dist, c)) in cases.iter().enumerate() {
        let p = win_probability(*c, dist);
        let wins = synthetic_wins(*c, dist, trials, 31, lane as u64, Sampling::PerTrial).unwrap();
        let freq = wins as f64 / trials as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!(
            (freq - p).abs() <= 3.0 * se,
            "{} c={c}: {freq} vs {p}",
            dist.kind()
        );
    }
}

#[test]
fn fixed_pool_sampling_is_close_to_closed_form() {
    let dist = CostDistribution::gaussian_around(1.0, 0.1).unwrap();
    let trials = 100_000;
    let wins = synthetic_wins(
        1.05,
        &dist,
        trials,
        2,
        0,
        Sampling::FixedPool { size: 2000 },
    )
    .unwrap();
    let freq = wins as f64 / trials as f64;
    // a finite pool adds its own sampling error on top of the trial noise
    assert!((freq - win_probability(1.05, &dist)).abs() < 0.03, "{freq}");
}

#[test]
fn truthful_report_minimises_expected_loss() {
    let (c, k, n) = (1.024e-7, 2.0, 16);
    let dist = CostDistribution::gaussian_around(c, 0.1).unwrap();
    let base = AgentPoint::truthful(3125.0, c, 1.0, 46875.0);
    let loss_at = |pct: i32| {
        let reported = c * (1.0 + f64::from(pct) / 100.0);
        expected_fact_loss(
            &base.with_reported_cost(reported),
            k,
            n,
            win_probability(reported, &dist),
            2.25e-3,
        )
        .unwrap()
    };
    let truthful = loss_at(0);
    for step in 1..=10 {
        for sign in [-1, 1] {
            let closer = loss_at(sign * 5 * (step - 1));
            let further = loss_at(sign * 5 * step);
            assert!(further >= closer, "step {step} sign {sign}");
            assert!(further > truthful);
        }
    }
}
