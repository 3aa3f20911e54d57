use factsim_core::equilibrium::*;
use factsim_core::loss::{contract_fee, federated_loss, lambda_for, pfl_loss, AgentPoint};
use factsim_core::mechanism::win_probability;
use factsim_core::CostDistribution;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const C_TRUE: f64 = 1.024e-7;
const K: f64 = 2.0;
const N: usize = 16;

/// Fee pool of 15 truthful agents at m = 3125.
fn reference_pool() -> (AgentPoint, f64) {
    let sum = 15.0 * 3125.0;
    let lam = lambda_for(C_TRUE, sum, K, 1.0).unwrap();
    let fee = contract_fee(3125.0, C_TRUE, sum, K, lam).unwrap().full;
    (AgentPoint::truthful(3125.0, C_TRUE, lam, sum), 15.0 * fee)
}

fn check_joint_optimum(dist: &CostDistribution, c_slack: f64) {
    let (base, pool) = reference_pool();
    let m_star = optimal_local_data(C_TRUE, K).unwrap();
    let br = fact_best_response(
        base,
        K,
        N,
        dist,
        pool,
        (0.5 * m_star, 1.5 * m_star),
        (0.5 * C_TRUE, 1.5 * C_TRUE),
    )
    .unwrap();
    let c = br.argmin_c.unwrap();
    let (rm, rc) = br.resolution;
    assert!(
        rm / m_star <= 1e-3 && rc / C_TRUE <= 1e-3,
        "{:?}",
        br.resolution
    );
    assert!(
        (br.argmin_m - m_star).abs() <= rm,
        "m {} vs {m_star} (step {rm})",
        br.argmin_m
    );
    assert!(
        (c - C_TRUE).abs() <= rc.max(c_slack),
        "c {c} vs {C_TRUE} (step {rc})"
    );
}

#[test]
fn joint_optimum_is_truthful_for_gaussian_beliefs() {
    check_joint_optimum(
        &CostDistribution::gaussian_around(C_TRUE, 0.1).unwrap(),
        0.0,
    );
}

#[test]
fn joint_optimum_is_truthful_for_uniform_beliefs() {
    check_joint_optimum(
        &CostDistribution::uniform(0.6 * C_TRUE, 1.4 * C_TRUE).unwrap(),
        0.0,
    );
}

#[test]
fn joint_optimum_is_truthful_for_empirical_beliefs() {
    // odd, symmetric list with the true cost as its median; the win
    // probability is flat between list entries, so allow one spacing
    let spacing = 0.01 * C_TRUE;
    let costs: Vec<f64> = (-50..=50).map(|j| C_TRUE + spacing * j as f64).collect();
    let dist = CostDistribution::empirical(costs).unwrap();
    assert_eq!(dist.median(), C_TRUE);
    check_joint_optimum(&dist, spacing);
}

#[test]
fn pfl_golden_section_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let c = 10f64.powf(rng.random_range(-8.0..1.0));
        let k = rng.random_range(0.1..10.0);
        let alpha = rng.random_range(0.0..1.9);
        let m_star = optimal_local_data(c, k).unwrap();
        let sum = m_star * 10f64.powf(rng.random_range(0.0..5.0));
        let lam = lambda_for(c, sum, k, alpha).unwrap();
        let base = AgentPoint::truthful(0.0, c, lam, sum);
        let br = numeric_argmin_1d(
            |m| pfl_loss(&base.with_m(m), k).unwrap().total,
            0.0,
            4.0 * m_star,
            1e-9 * m_star,
        )
        .unwrap();
        assert!(
            (br.argmin_m / m_star - 1.0).abs() <= 1e-6,
            "c {c} k {k} sum {sum} alpha {alpha}: {} vs {m_star}",
            br.argmin_m
        );
    }
}

#[test]
fn federated_best_response_clamps_at_zero() {
    let br = numeric_argmin_1d(
        |m| federated_loss(m, 1e4, 1.0, 2.0).unwrap(),
        0.0,
        10.0,
        1e-9,
    )
    .unwrap();
    assert!(br.argmin_m < 1e-8);
    assert_eq!(optimal_federated_data(1.0, 2.0, 1e4).unwrap(), 0.0);
    // interior case agrees with the unclamped stationary point
    let br = numeric_argmin_1d(
        |m| federated_loss(m, 0.25, 1.0, 2.0).unwrap(),
        0.0,
        10.0,
        1e-10,
    )
    .unwrap();
    // flat to f64 resolution within ~sqrt(eps) of the minimiser
    assert!((br.argmin_m - 0.75).abs() < 1e-6);
}

proptest! {
    #[test]
    fn free_riding_monotone(c in 1e-3f64..10.0, k in 0.1f64..10.0, s in prop::collection::vec(0.0f64..20.0, 2..20)) {
        let mut s = s;
        s.sort_by(f64::total_cmp);
        let m_star = optimal_local_data(c, k).unwrap();
        let mut prev = f64::INFINITY;
        for &sum in &s {
            let m = optimal_federated_data(c, k, sum).unwrap();
            prop_assert!(m <= prev);
            prop_assert_eq!(m == 0.0, sum >= m_star);
            prev = m;
        }
    }
}

#[test]
fn expected_fact_loss_is_stationary_at_truth() {
    let (base, pool) = reference_pool();
    let dist = CostDistribution::gaussian_around(C_TRUE, 0.1).unwrap();
    let f = fact_objective(base, K, N, &dist, pool);
    let m_star = optimal_local_data(C_TRUE, K).unwrap();
    let report = verify_stationarity(
        |x| f(x[0], x[1]),
        &[m_star, C_TRUE],
        &[fd_step(m_star), 1e-6 * C_TRUE],
    )
    .unwrap();
    assert!(report.passed, "{report:?}");

    let off = verify_stationarity(
        |x| f(x[0], x[1]),
        &[m_star, 1.1 * C_TRUE],
        &[fd_step(m_star), 1e-6 * C_TRUE],
    )
    .unwrap();
    assert!(!off.passed);
}

#[test]
fn pfl_is_stationary_at_truth() {
    let (base, _) = reference_pool();
    let r = verify_stationarity(
        |x| pfl_loss(&base.with_m(x[0]), K).unwrap().total,
        &[3125.0],
        &[fd_step(3125.0)],
    )
    .unwrap();
    assert!(r.passed, "{r:?}");
}

#[test]
fn descent_in_c_points_towards_the_median() {
    let (base, pool) = reference_pool();
    let dists = [
        CostDistribution::gaussian_around(C_TRUE, 0.1).unwrap(),
        CostDistribution::uniform(0.5 * C_TRUE, 1.5 * C_TRUE).unwrap(),
    ];
    for dist in &dists {
        let f = fact_objective(base, K, N, dist, pool);
        for j in 1..40 {
            let c = C_TRUE * (0.6 + 0.02 * j as f64);
            let gap = 0.5 - dist.cdf(c);
            if gap.abs() < 0.01 || win_probability(c, dist) < 1e-6 {
                continue;
            }
            let h = 1e-4 * C_TRUE;
            let descent = -(f(3125.0, c + h) - f(3125.0, c - h));
            assert_eq!(descent.signum(), gap.signum(), "{} at c = {c}", dist.kind());
        }
    }
}
