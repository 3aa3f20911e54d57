//! Value types shared by every other module.

use rand::Rng;
use rand_distr::{Distribution, Normal as NormalSampler};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{nonnegative, positive, Error, Result};

/// Constants that parameterise every mechanism formula.
///
/// `k` is the product of step size, per-sample gradient variance and
/// Lipschitz constant. The individual factors never appear separately in the
/// loss model, so only the product is stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismConstants {
    k: f64,
    alpha: f64,
    n: usize,
}

impl MechanismConstants {
    pub fn new(k: f64, alpha: f64, n: usize) -> Result<Self> {
        positive("k", k)?;
        if !(alpha.is_finite() && (0.0..2.0).contains(&alpha)) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                value: alpha,
                reason: "must lie in [0, 2)",
            });
        }
        if n < 2 {
            return Err(Error::InvalidParameter {
                name: "n",
                value: n as f64,
                reason: "at least two agents are required",
            });
        }
        Ok(Self { k, alpha, n })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// One agent: its private cost, what it tells the server, how much data it
/// uses, and the penalty scalar once the server has assigned one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    true_cost: f64,
    reported_cost: f64,
    data_amount: f64,
    lambda: Option<f64>,
}

impl AgentProfile {
    pub fn new(true_cost: f64, reported_cost: f64, data_amount: f64) -> Result<Self> {
        Ok(Self {
            true_cost: positive("true_cost", true_cost)?,
            reported_cost: positive("reported_cost", reported_cost)?,
            data_amount: nonnegative("data_amount", data_amount)?,
            lambda: None,
        })
    }

    /// An agent that reports its true cost.
    pub fn truthful(cost: f64, data_amount: f64) -> Result<Self> {
        Self::new(cost, cost, data_amount)
    }

    pub fn true_cost(&self) -> f64 {
        self.true_cost
    }

    pub fn reported_cost(&self) -> f64 {
        self.reported_cost
    }

    pub fn data_amount(&self) -> f64 {
        self.data_amount
    }

    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    pub fn is_truthful(&self) -> bool {
        self.true_cost == self.reported_cost
    }

    pub fn with_lambda(self, lambda: f64) -> Result<Self> {
        nonnegative("lambda", lambda)?;
        Ok(Self {
            lambda: Some(lambda),
            ..self
        })
    }

    pub fn with_data_amount(self, data_amount: f64) -> Result<Self> {
        Ok(Self {
            data_amount: nonnegative("data_amount", data_amount)?,
            ..self
        })
    }

    pub fn with_reported_cost(self, reported_cost: f64) -> Result<Self> {
        Ok(Self {
            reported_cost: positive("reported_cost", reported_cost)?,
            ..self
        })
    }
}

/// Sum of `data_amount` over every agent except `i`.
pub fn others_sum(profiles: &[AgentProfile], i: usize) -> Result<f64> {
    if i >= profiles.len() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: profiles.len(),
        });
    }
    Ok(profiles
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, p)| p.data_amount)
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Law {
    /// Gaussian truncated below at `floor` (resampled, so the CDF is renormalised).
    Gaussian {
        mean: f64,
        std_dev: f64,
        floor: f64,
    },
    Uniform {
        lower: f64,
        upper: f64,
    },
    /// Sorted ascending.
    Empirical {
        costs: Vec<f64>,
    },
}

/// The population of costs an agent believes the others' costs are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostDistribution {
    law: Law,
}

impl CostDistribution {
    pub fn gaussian(mean: f64, std_dev: f64, floor: f64) -> Result<Self> {
        positive("mean", mean)?;
        positive("std_dev", std_dev)?;
        positive("floor", floor)?;
        if floor >= mean {
            return Err(Error::InvalidParameter {
                name: "floor",
                value: floor,
                reason: "truncation floor must lie below the mean",
            });
        }
        Ok(Self {
            law: Law::Gaussian {
                mean,
                std_dev,
                floor,
            },
        })
    }

    /// Gaussian centred on `true_cost` with standard deviation
    /// `rel_std * true_cost`, truncated at `true_cost / 100`.
    pub fn gaussian_around(true_cost: f64, rel_std: f64) -> Result<Self> {
        positive("rel_std", rel_std)?;
        Self::gaussian(true_cost, rel_std * true_cost, true_cost / 100.0)
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        nonnegative("lower", lower)?;
        positive("upper", upper)?;
        if upper <= lower {
            return Err(Error::InvalidParameter {
                name: "upper",
                value: upper,
                reason: "must exceed the lower bound",
            });
        }
        Ok(Self {
            law: Law::Uniform { lower, upper },
        })
    }

    pub fn empirical(mut costs: Vec<f64>) -> Result<Self> {
        if costs.is_empty() {
            return Err(Error::Config("empirical cost list is empty".into()));
        }
        for &c in &costs {
            positive("empirical cost", c)?;
        }
        costs.sort_by(f64::total_cmp);
        Ok(Self {
            law: Law::Empirical { costs },
        })
    }

    pub fn kind(&self) -> &'static str {
        match self.law {
            Law::Gaussian { .. } => "gaussian",
            Law::Uniform { .. } => "uniform",
            Law::Empirical { .. } => "empirical",
        }
    }

    /// Draw one strictly positive cost.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.law {
            Law::Gaussian {
                mean,
                std_dev,
                floor,
            } => {
                let normal =
                    NormalSampler::new(*mean, *std_dev).expect("validated at construction");
                loop {
                    let x = normal.sample(rng);
                    if x >= *floor {
                        return x;
                    }
                }
            }
            Law::Uniform { lower, upper } => loop {
                let x = rng.random_range(*lower..*upper);
                if x > 0.0 {
                    return x;
                }
            },
            Law::Empirical { costs } => costs[rng.random_range(0..costs.len())],
        }
    }

    /// P(C <= c).
    pub fn cdf(&self, c: f64) -> f64 {
        match &self.law {
            Law::Gaussian {
                mean,
                std_dev,
                floor,
            } => {
                if c < *floor {
                    return 0.0;
                }
                let normal = Normal::new(*mean, *std_dev).expect("validated at construction");
                let below_floor = normal.cdf(*floor);
                ((normal.cdf(c) - below_floor) / (1.0 - below_floor)).clamp(0.0, 1.0)
            }
            Law::Uniform { lower, upper } => ((c - lower) / (upper - lower)).clamp(0.0, 1.0),
            Law::Empirical { costs } => {
                costs.partition_point(|&x| x <= c) as f64 / costs.len() as f64
            }
        }
    }

    /// P(C < c). Equal to [`cdf`](Self::cdf) for the continuous laws.
    pub fn prob_below(&self, c: f64) -> f64 {
        match &self.law {
            Law::Empirical { costs } => {
                costs.partition_point(|&x| x < c) as f64 / costs.len() as f64
            }
            _ => self.cdf(c),
        }
    }

    /// P(C > c).
    pub fn prob_above(&self, c: f64) -> f64 {
        1.0 - self.cdf(c)
    }

    pub fn median(&self) -> f64 {
        match &self.law {
            Law::Gaussian {
                mean,
                std_dev,
                floor,
            } => {
                let normal = Normal::new(*mean, *std_dev).expect("validated at construction");
                let below_floor = normal.cdf(*floor);
                normal.inverse_cdf(below_floor + 0.5 * (1.0 - below_floor))
            }
            Law::Uniform { lower, upper } => 0.5 * (lower + upper),
            Law::Empirical { costs } => {
                let n = costs.len();
                if n % 2 == 1 {
                    costs[n / 2]
                } else {
                    0.5 * (costs[n / 2 - 1] + costs[n / 2])
                }
            }
        }
    }

    /// Smallest and largest cost that can be drawn.
    pub fn support(&self) -> (f64, f64) {
        match &self.law {
            Law::Gaussian { floor, .. } => (*floor, f64::INFINITY),
            Law::Uniform { lower, upper } => (*lower, *upper),
            Law::Empirical { costs } => (costs[0], costs[costs.len() - 1]),
        }
    }
}

/// A loss value split into its additive parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub convergence_term: f64,
    pub data_cost: f64,
    pub free_rider_penalty: f64,
    /// Negative when the agent nets a payout.
    pub competition_transfer: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(
        convergence_term: f64,
        data_cost: f64,
        free_rider_penalty: f64,
        competition_transfer: f64,
    ) -> Self {
        Self {
            convergence_term,
            data_cost,
            free_rider_penalty,
            competition_transfer,
            total: convergence_term + data_cost + free_rider_penalty + competition_transfer,
        }
    }

    /// Whether `total` is exactly the sum of the parts.
    pub fn is_consistent(&self) -> bool {
        self.total
            == self.convergence_term
                + self.data_cost
                + self.free_rider_penalty
                + self.competition_transfer
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use proptest::prelude::*;

    #[test]
    fn alpha_interval_is_half_open() {
        assert!(MechanismConstants::new(2.0, 0.0, 2).is_ok());
        assert!(MechanismConstants::new(2.0, 1.999, 2).is_ok());
        assert!(MechanismConstants::new(2.0, 2.0, 2).is_err());
        assert!(MechanismConstants::new(2.0, -0.1, 2).is_err());
        assert!(MechanismConstants::new(2.0, f64::NAN, 2).is_err());
    }

    #[test]
    fn constants_reject_bad_k_and_n() {
        assert!(matches!(
            MechanismConstants::new(0.0, 1.0, 4),
            Err(Error::InvalidParameter { name: "k", .. })
        ));
        assert!(matches!(
            MechanismConstants::new(2.0, 1.0, 1),
            Err(Error::InvalidParameter { name: "n", .. })
        ));
    }

    #[test]
    fn profile_validation() {
        assert!(AgentProfile::new(0.0, 1.0, 1.0).is_err());
        assert!(AgentProfile::new(1.0, -1.0, 1.0).is_err());
        assert!(AgentProfile::new(1.0, 1.0, -1.0).is_err());
        assert!(AgentProfile::truthful(1.0, 0.0).is_ok());
        let p = AgentProfile::truthful(1.0, 1.0).unwrap();
        assert!(p.with_lambda(-1e-9).is_err());
        assert_eq!(p.with_lambda(0.0).unwrap().lambda(), Some(0.0));
    }

    fn roster(ms: &[f64]) -> Vec<AgentProfile> {
        ms.iter()
            .map(|&m| AgentProfile::truthful(1.0, m).unwrap())
            .collect()
    }

    #[test]
    fn others_sum_examples() {
        let sixteen = roster(&[3125.0; 16]);
        assert_eq!(others_sum(&sixteen, 0).unwrap(), 46875.0);
        assert_eq!(others_sum(&roster(&[5.0, 0.0]), 0).unwrap(), 0.0);
        assert_eq!(others_sum(&roster(&[1.0, 2.0, 3.0]), 1).unwrap(), 4.0);
        assert_eq!(
            others_sum(&roster(&[1.0, 2.0]), 2),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        );
    }

    proptest! {
        #[test]
        fn others_sum_plus_own_is_total(ms in prop::collection::vec(0u32..10_000, 2..40)) {
            let ms: Vec<f64> = ms.into_iter().map(f64::from).collect();
            let agents = roster(&ms);
            let total: f64 = ms.iter().sum();
            for (i, m) in ms.iter().enumerate() {
                // integer-valued data keeps the sums exact
                prop_assert_eq!(others_sum(&agents, i).unwrap() + m, total);
            }
        }

        #[test]
        fn cdf_monotone_in_unit_interval(
            mean in 0.1f64..10.0,
            rel in 0.01f64..0.5,
            xs in prop::collection::vec(0.0f64..20.0, 2..50),
        ) {
            let dists = [
                CostDistribution::gaussian_around(mean, rel).unwrap(),
                CostDistribution::uniform(mean * 0.5, mean * 1.5).unwrap(),
                CostDistribution::empirical(vec![mean * 0.7, mean, mean * 1.2, mean * 2.0]).unwrap(),
            ];
            let mut xs = xs;
            xs.sort_by(f64::total_cmp);
            for d in &dists {
                let mut prev = 0.0;
                for &x in &xs {
                    let f = d.cdf(x);
                    prop_assert!((0.0..=1.0).contains(&f));
                    prop_assert!(f >= prev);
                    prop_assert!(d.prob_below(x) <= f);
                    prev = f;
                }
            }
        }
    }

    #[test]
    fn samples_are_positive_even_with_wide_gaussian() {
        let d = CostDistribution::gaussian(1.0, 5.0, 0.01).unwrap();
        let mut rng = stream(1, Domain::Oracle, 0, 0);
        for _ in 0..10_000 {
            assert!(d.sample(&mut rng) >= 0.01);
        }
        let u = CostDistribution::uniform(0.0, 1.0).unwrap();
        for _ in 0..10_000 {
            assert!(u.sample(&mut rng) > 0.0);
        }
    }

    #[test]
    fn medians() {
        let g = CostDistribution::gaussian_around(1.024e-7, 0.1).unwrap();
        assert!((g.median() / 1.024e-7 - 1.0).abs() < 1e-12);
        assert!((g.cdf(g.median()) - 0.5).abs() < 1e-12);
        assert_eq!(CostDistribution::uniform(1.0, 3.0).unwrap().median(), 2.0);
        assert_eq!(
            CostDistribution::empirical(vec![3.0, 1.0, 2.0])
                .unwrap()
                .median(),
            2.0
        );
    }

    #[test]
    fn truncated_cdf_matches_sampler() {
        // heavy truncation so the renormalisation matters
        let d = CostDistribution::gaussian(1.0, 1.0, 0.5).unwrap();
        let mut rng = stream(9, Domain::Oracle, 0, 0);
        let draws = 200_000;
        let below = (0..draws).filter(|_| d.sample(&mut rng) <= 1.2).count() as f64 / draws as f64;
        let expected = d.cdf(1.2);
        let se = (expected * (1.0 - expected) / draws as f64).sqrt();
        assert!((below - expected).abs() < 4.0 * se, "{below} vs {expected}");
    }

    #[test]
    fn breakdown_total_is_sum() {
        let b = LossBreakdown::new(0.1, 0.2, 0.3, -0.7);
        assert!(b.is_consistent());
        assert_eq!(b.total, 0.1 + 0.2 + 0.3 + -0.7);
    }
}
