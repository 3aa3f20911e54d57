//! FedAvg on a synthetic quadratic with controllable gradient noise.
//!
//! The objective is `f(w) = ½ Σ_j λ_j (w_j − w*_j)²` with curvatures spread
//! linearly over `[μ, L]`. A single sample's gradient is `∇f(w) + ξ` with
//! `ξ ~ N(0, σ²/d · I)`, so `E‖ξ‖² = σ²` and a batch of `m` samples has
//! gradient variance `σ²/m`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{positive, Error, Result};
use crate::model::AgentProfile;
use crate::par;
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    curvature: Vec<f64>,
    optimum: Vec<f64>,
    noise_var: f64,
}

impl SyntheticTask {
    /// `dim` curvatures evenly spaced on `[mu, lipschitz]`, optimum at all ones.
    pub fn new(dim: usize, mu: f64, lipschitz: f64, noise_var: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("task dimension must be >= 1".into()));
        }
        positive("mu", mu)?;
        positive("lipschitz", lipschitz)?;
        if mu > lipschitz {
            return Err(Error::InvalidParameter {
                name: "mu",
                value: mu,
                reason: "smallest curvature must not exceed the Lipschitz constant",
            });
        }
        if !(noise_var.is_finite() && noise_var >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "noise_var",
                value: noise_var,
                reason: "must be finite and >= 0",
            });
        }
        let curvature = if dim == 1 {
            vec![lipschitz]
        } else {
            (0..dim)
                .map(|j| mu + (lipschitz - mu) * j as f64 / (dim - 1) as f64)
                .collect()
        };
        Ok(Self {
            curvature,
            optimum: vec![1.0; dim],
            noise_var,
        })
    }

    pub fn with_optimum(self, optimum: Vec<f64>) -> Result<Self> {
        if optimum.len() != self.curvature.len() {
            return Err(Error::Config(format!(
                "optimum has {} coordinates, task has {}",
                optimum.len(),
                self.curvature.len()
            )));
        }
        Ok(Self { optimum, ..self })
    }

    pub fn dim(&self) -> usize {
        self.curvature.len()
    }

    pub fn lipschitz(&self) -> f64 {
        self.curvature.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn optimum(&self) -> &[f64] {
        &self.optimum
    }

    pub fn loss(&self, w: &[f64]) -> f64 {
        self.curvature
            .iter()
            .zip(w.iter().zip(&self.optimum))
            .map(|(l, (x, o))| 0.5 * l * (x - o) * (x - o))
            .sum()
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        self.curvature
            .iter()
            .zip(w.iter().zip(&self.optimum))
            .map(|(l, (x, o))| l * (x - o))
            .collect()
    }

    pub fn grad_norm_sq(&self, w: &[f64]) -> f64 {
        self.gradient(w).iter().map(|g| g * g).sum()
    }

    /// One sample's gradient noise.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let sd = (self.noise_var / self.dim() as f64).sqrt();
        (0..self.dim())
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Gradient averaged over a batch of `batch` samples. The batch mean of
    /// Gaussian noise is drawn directly from its exact law.
    pub fn stochastic_gradient<R: Rng + ?Sized>(
        &self,
        w: &[f64],
        batch: u64,
        rng: &mut R,
    ) -> Vec<f64> {
        let sd = (self.noise_var / (self.dim() as f64 * batch as f64)).sqrt();
        self.gradient(w)
            .into_iter()
            .map(|g| g + sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

/// Confirm that `k` equals `γσ²L` for the task and step size.
pub fn check_noise_scale(k: f64, step_size: f64, task: &SyntheticTask) -> Result<()> {
    let implied = step_size * task.noise_var() * task.lipschitz();
    if (implied - k).abs() <= 1e-9 * k.abs() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "k = {k} but step_size · sigma² · L = {implied}"
        )))
    }
}

/// Round a continuous data amount to a batch count. Any positive amount
/// trains on at least one sample.
pub fn batch_count(m: f64) -> u64 {
    if m <= 0.0 {
        0
    } else {
        (m.round() as u64).max(1)
    }
}

/// Where an agent stands inside its local epochs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cursor {
    pub epoch: u64,
    pub batch: u64,
    /// Total gradient steps taken; addresses the noise stream.
    pub steps: u64,
}

/// Local training state of one agent. Holds the cursor so training can pause
/// after `h` batches and resume where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub batch: u64,
    /// Noise stream lane; distinct agents normally use distinct lanes.
    pub lane: u64,
    pub epochs: u64,
    pub batches_per_epoch: u64,
    pub seed: u64,
    pub cursor: Cursor,
}

impl AgentState {
    pub fn new(batch: u64, lane: u64, epochs: u64, batches_per_epoch: u64, seed: u64) -> Self {
        Self {
            batch,
            lane,
            epochs,
            batches_per_epoch,
            seed,
            cursor: Cursor::default(),
        }
    }

    pub fn is_free_rider(&self) -> bool {
        self.batch == 0
    }

    pub fn finished(&self) -> bool {
        self.cursor.epoch >= self.epochs
    }
}

/// Advance `params` by up to `h` local gradient steps, stopping early only
/// when the agent has exhausted its epochs. Returns the new parameters.
pub fn agent_update(
    params: &[f64],
    agent: &mut AgentState,
    task: &SyntheticTask,
    h: u64,
    step_size: f64,
) -> Result<Vec<f64>> {
    if h == 0 {
        return Err(Error::Config("local steps h must be >= 1".into()));
    }
    let mut w = params.to_vec();
    if agent.is_free_rider() {
        return Ok(w);
    }
    for _ in 0..h {
        if agent.finished() {
            break;
        }
        let mut rng = stream(
            agent.seed,
            Domain::GradientNoise,
            agent.lane,
            agent.cursor.steps,
        );
        let g = task.stochastic_gradient(&w, agent.batch, &mut rng);
        for (x, gj) in w.iter_mut().zip(g) {
            *x -= step_size * gj;
        }
        let c = &mut agent.cursor;
        c.steps += 1;
        c.batch += 1;
        if c.batch == agent.batches_per_epoch {
            c.batch = 0;
            c.epoch += 1;
        }
    }
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FedConfig {
    pub rounds: u64,
    pub local_steps: u64,
    pub epochs: u64,
    /// Batches per local epoch; `None` spreads `rounds · local_steps` batches
    /// evenly over the epochs.
    pub batches_per_epoch: Option<u64>,
    pub step_size: f64,
    pub seed: u64,
}

impl FedConfig {
    fn batches_per_epoch(&self) -> u64 {
        self.batches_per_epoch
            .unwrap_or_else(|| (self.rounds * self.local_steps).div_ceil(self.epochs.max(1)))
            .max(1)
    }
}

/// Summary of a federated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub rounds: u64,
    pub local_steps: u64,
    pub epochs: u64,
    pub step_size: f64,
    pub batch_sizes: Vec<u64>,
    /// `s_i = m_i / Σ m_j`.
    pub weights: Vec<f64>,
    /// `‖∇f(w^t)‖²` of the aggregate at the start of each round.
    pub grad_norm_sq: Vec<f64>,
    pub effective_batch: u64,
    pub free_riders: Vec<usize>,
    pub initial_gap: f64,
    pub final_params: Vec<f64>,
}

impl TrainingRun {
    pub fn mean_grad_norm_sq(&self) -> f64 {
        self.grad_norm_sq.iter().sum::<f64>() / self.grad_norm_sq.len() as f64
    }
}

/// Weighted FedAvg for the roster's data amounts, starting from the origin.
pub fn run_pfl_training(
    agents: &[AgentProfile],
    task: &SyntheticTask,
    cfg: &FedConfig,
) -> Result<TrainingRun> {
    let bpe = cfg.batches_per_epoch();
    let states = agents
        .iter()
        .enumerate()
        .map(|(i, a)| {
            AgentState::new(
                batch_count(a.data_amount()),
                i as u64,
                cfg.epochs,
                bpe,
                cfg.seed,
            )
        })
        .collect();
    run_training(states, task, cfg, vec![0.0; task.dim()])
}

/// Weighted FedAvg over explicit agent states.
pub fn run_training(
    mut states: Vec<AgentState>,
    task: &SyntheticTask,
    cfg: &FedConfig,
    init: Vec<f64>,
) -> Result<TrainingRun> {
    positive("step_size", cfg.step_size)?;
    if cfg.rounds == 0 || cfg.local_steps == 0 || cfg.epochs == 0 {
        return Err(Error::Config(
            "rounds, local_steps and epochs must all be >= 1".into(),
        ));
    }
    if init.len() != task.dim() {
        return Err(Error::Config(
            "initial parameters do not match the task dimension".into(),
        ));
    }
    let batch_sizes: Vec<u64> = states.iter().map(|s| s.batch).collect();
    let effective_batch: u64 = batch_sizes.iter().sum();
    if effective_batch == 0 {
        return Err(Error::NoContributors);
    }
    let weights: Vec<f64> = batch_sizes
        .iter()
        .map(|&b| b as f64 / effective_batch as f64)
        .collect();
    let free_riders = states
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_free_rider())
        .map(|(i, _)| i)
        .collect();

    let mut w = init;
    let initial_gap = task.loss(&w);
    let mut history = Vec::with_capacity(cfg.rounds as usize);
    let mut locals: Vec<(AgentState, Result<Vec<f64>>)> = Vec::new();
    for _ in 0..cfg.rounds {
        history.push(task.grad_norm_sq(&w));
        locals.clear();
        locals.extend(states.drain(..).map(|s| (s, Ok(Vec::new()))));
        let broadcast = &w;
        par::for_each_mut(&mut locals, |_, (state, out)| {
            *out = agent_update(broadcast, state, task, cfg.local_steps, cfg.step_size);
        });
        let mut next = vec![0.0; task.dim()];
        for ((state, out), &s) in locals.drain(..).zip(&weights) {
            let local = out?;
            if s > 0.0 {
                for (acc, x) in next.iter_mut().zip(&local) {
                    *acc += s * x;
                }
            }
            states.push(state);
        }
        w = next;
    }
    Ok(TrainingRun {
        rounds: cfg.rounds,
        local_steps: cfg.local_steps,
        epochs: cfg.epochs,
        step_size: cfg.step_size,
        batch_sizes,
        weights,
        grad_norm_sq: history,
        effective_batch,
        free_riders,
        initial_gap,
        final_params: w,
    })
}

/// Upper bound on the time-averaged squared gradient norm:
/// `2Δ_f/(γT) + γσ²L/(2Σm)`.
pub fn convergence_bound(run: &TrainingRun, task: &SyntheticTask, delta_f: f64) -> Result<f64> {
    let gamma_l = run.step_size * task.lipschitz();
    if gamma_l >= 2.0 {
        return Err(Error::StepSize { gamma_l });
    }
    Ok(2.0 * delta_f / (run.step_size * run.rounds as f64)
        + run.step_size * task.noise_var() * task.lipschitz() / (2.0 * run.effective_batch as f64))
}

/// Empirical variance `E‖ḡ_M − ∇f‖²` of the `M`-sample mean gradient at the
/// task's origin, for each `M` in `batch_sizes`. Each draw averages `M`
/// independently sampled per-sample gradients.
pub fn measure_variance_scaling(
    task: &SyntheticTask,
    batch_sizes: &[u64],
    draws: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    if draws < 1000 {
        return Err(Error::Config(format!(
            "need at least 1000 draws, got {draws}"
        )));
    }
    let dim = task.dim();
    batch_sizes
        .iter()
        .map(|&m| {
            if m == 0 {
                return Err(Error::Config("batch size must be >= 1".into()));
            }
            let per_draw = par::map_indices(draws as usize, |d| {
                let mut rng = stream(seed, Domain::Oracle, m, d as u64);
                let mut mean = vec![0.0; dim];
                for _ in 0..m {
                    for (acc, x) in mean.iter_mut().zip(task.sample_noise(&mut rng)) {
                        *acc += x;
                    }
                }
                mean.iter().map(|x| (x / m as f64).powi(2)).sum::<f64>()
            });
            Ok(per_draw.iter().sum::<f64>() / draws as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(noise: f64) -> SyntheticTask {
        SyntheticTask::new(8, 0.1, 1.0, noise).unwrap()
    }

    #[test]
    fn largest_curvature_is_lipschitz() {
        let t = SyntheticTask::new(5, 0.2, 3.0, 1.0).unwrap();
        assert_eq!(t.lipschitz(), 3.0);
        assert!(SyntheticTask::new(5, 4.0, 3.0, 1.0).is_err());
        assert!(SyntheticTask::new(0, 0.1, 3.0, 1.0).is_err());
    }

    #[test]
    fn per_sample_noise_variance() {
        let t = task(2.5);
        let mut rng = stream(3, Domain::Oracle, 0, 0);
        let draws = 100_000;
        let mean_sq: f64 = (0..draws)
            .map(|_| t.sample_noise(&mut rng).iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            / draws as f64;
        assert!((mean_sq / 2.5 - 1.0).abs() < 0.05, "{mean_sq}");
    }

    #[test]
    fn noiseless_step_is_gradient_descent() {
        let t = task(0.0);
        let w0 = vec![0.5; 8];
        let mut a = AgentState::new(10, 0, 1, 100, 1);
        let w1 = agent_update(&w0, &mut a, &t, 1, 0.3).unwrap();
        let g = t.gradient(&w0);
        for j in 0..8 {
            assert_eq!(w1[j], w0[j] - 0.3 * g[j]);
        }
    }

    #[test]
    fn exactly_h_steps_per_call() {
        let t = task(1.0);
        let mut a = AgentState::new(10, 0, 100, 100, 1);
        agent_update(&[0.0; 8], &mut a, &t, 6, 0.1).unwrap();
        assert_eq!(a.cursor.steps, 6);
        agent_update(&[0.0; 8], &mut a, &t, 6, 0.1).unwrap();
        assert_eq!(a.cursor.steps, 12);
    }

    #[test]
    fn pause_resume_matches_single_call() {
        let t = task(1.0);
        let mut split = AgentState::new(7, 2, 3, 5, 99);
        let mut whole = split.clone();
        let mid = agent_update(&[0.0; 8], &mut split, &t, 4, 0.1).unwrap();
        let a = agent_update(&mid, &mut split, &t, 4, 0.1).unwrap();
        let b = agent_update(&[0.0; 8], &mut whole, &t, 8, 0.1).unwrap();
        assert_eq!(a, b);
        assert_eq!(split.cursor, whole.cursor);
        assert_eq!(
            whole.cursor,
            Cursor {
                epoch: 1,
                batch: 3,
                steps: 8
            }
        );
    }

    #[test]
    fn finished_agent_stops() {
        let t = task(1.0);
        let mut a = AgentState::new(7, 0, 1, 2, 1);
        agent_update(&[0.0; 8], &mut a, &t, 6, 0.1).unwrap();
        assert!(a.finished());
        assert_eq!(a.cursor.steps, 2);
    }

    #[test]
    fn free_rider_is_skipped() {
        let t = task(1.0);
        let mut a = AgentState::new(0, 0, 1, 2, 1);
        assert!(a.is_free_rider());
        assert_eq!(
            agent_update(&[0.25; 8], &mut a, &t, 3, 0.1).unwrap(),
            vec![0.25; 8]
        );
    }

    #[test]
    fn rounding_at_the_boundary() {
        assert_eq!(batch_count(0.0), 0);
        assert_eq!(batch_count(0.2), 1);
        assert_eq!(batch_count(3124.6), 3125);
    }

    #[test]
    fn noise_scale_consistency() {
        let t = SyntheticTask::new(4, 0.1, 1.0, 40.0).unwrap();
        assert!(check_noise_scale(2.0, 0.05, &t).is_ok());
        assert!(check_noise_scale(2.1, 0.05, &t).is_err());
    }

    #[test]
    fn bound_rejects_large_steps() {
        let t = task(1.0);
        let agents = [AgentProfile::truthful(1.0, 4.0).unwrap()];
        let cfg = FedConfig {
            rounds: 3,
            local_steps: 1,
            epochs: 1,
            batches_per_epoch: None,
            step_size: 2.5,
            seed: 0,
        };
        let run = run_pfl_training(&agents, &t, &cfg).unwrap();
        assert_eq!(run.grad_norm_sq.len(), 3);
        assert!(matches!(
            convergence_bound(&run, &t, 1.0),
            Err(Error::StepSize { .. })
        ));
    }

    #[test]
    fn no_contributors_is_an_error() {
        let agents = [AgentProfile::truthful(1.0, 0.0).unwrap(); 3];
        let cfg = FedConfig {
            rounds: 3,
            local_steps: 1,
            epochs: 1,
            batches_per_epoch: None,
            step_size: 0.1,
            seed: 0,
        };
        assert_eq!(
            run_pfl_training(&agents, &task(1.0), &cfg),
            Err(Error::NoContributors)
        );
    }

    #[test]
    fn variance_needs_enough_draws() {
        assert!(measure_variance_scaling(&task(1.0), &[1], 10, 0).is_err());
        let zero = measure_variance_scaling(&task(0.0), &[1, 4], 1000, 0).unwrap();
        assert_eq!(zero, vec![0.0, 0.0]);
    }
}
