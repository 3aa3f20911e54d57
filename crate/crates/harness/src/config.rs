//! Scenario files.
//!
//! A scenario is a TOML document; see `configs/` for one per workload
//! regime. Keys are documented on the section structs below.

use std::path::{Path, PathBuf};

use factsim_core::equilibrium::optimal_local_data;
use factsim_core::fedsim::{FedConfig, SyntheticTask};
use factsim_core::mechanism::{RemainderRule, Sampling};
use factsim_core::{AgentProfile, CostDistribution, MechanismConstants};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub const DESK_TRIALS: u64 = 20_000;
pub const PAPER_TRIALS: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub constants: ConstantsSection,
    pub agents: AgentsSection,
    pub distribution: DistributionSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub competition: CompetitionSection,
    #[serde(default)]
    pub penalty_curve: PenaltyCurveSection,
    #[serde(default)]
    pub fedsim: Option<FedsimSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    /// Composite noise scale γσ²L.
    pub k: f64,
    /// IR margin in [0, 2). Required: there is no default.
    pub alpha: f64,
    /// Optional cross-check of the roster size.
    #[serde(default)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsSection {
    /// `count` identical agents at `cost`, or an explicit `costs` list.
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub cost: Option<f64>,
    #[serde(default)]
    pub costs: Option<Vec<f64>>,
    /// Data per agent; defaults to each agent's local optimum.
    #[serde(default)]
    pub data: Option<Vec<f64>>,
    /// Agents that contribute no data (used by `train`).
    #[serde(default)]
    pub free_riders: Vec<usize>,
    /// Agent whose report is swept and whose penalty curve is drawn.
    #[serde(default)]
    pub focal: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistKind {
    GaussianAroundTrueCost,
    Uniform,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSection {
    pub kind: DistKind,
    /// Gaussian: standard deviation as a fraction of the true cost.
    #[serde(default)]
    pub rel_std: Option<f64>,
    /// Uniform: absolute bounds, or a half-width relative to each true cost.
    #[serde(default)]
    pub lower: Option<f64>,
    #[serde(default)]
    pub upper: Option<f64>,
    #[serde(default)]
    pub rel_halfwidth: Option<f64>,
    /// Empirical: inline list or a file with one cost per line.
    #[serde(default)]
    pub costs: Option<Vec<f64>>,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub min_pct: f64,
    pub max_pct: f64,
    pub step_pct: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            min_pct: -50.0,
            max_pct: 50.0,
            step_pct: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingKind {
    PerTrial,
    FixedPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemainderKind {
    SitOut,
    Synthetic,
}

/// Which competition the `compare` pipeline averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompetitionMode {
    /// Two sampled costs per trial (the Monte Carlo protocol).
    Synthetic,
    /// Random triples of real agents, settled against the real fee pool.
    Triples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompetitionSection {
    pub trials: u64,
    pub sampling: SamplingKind,
    pub pool_size: usize,
    pub remainder: RemainderKind,
    pub mode: CompetitionMode,
}

impl Default for CompetitionSection {
    fn default() -> Self {
        Self {
            trials: DESK_TRIALS,
            sampling: SamplingKind::PerTrial,
            pool_size: 2000,
            remainder: RemainderKind::SitOut,
            mode: CompetitionMode::Synthetic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyCurveSection {
    /// Grid points on [0, 2m*].
    pub points: usize,
}

impl Default for PenaltyCurveSection {
    fn default() -> Self {
        Self { points: 201 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedsimSection {
    pub rounds: u64,
    pub local_steps: u64,
    pub epochs: u64,
    pub step_size: f64,
    pub dim: usize,
    pub lipschitz: f64,
    pub mu: f64,
    /// Per-sample gradient variance; derived from `k = γσ²L` when absent and
    /// checked against it when present.
    #[serde(default)]
    pub sigma2: Option<f64>,
    #[serde(default)]
    pub batches_per_epoch: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    #[serde(default)]
    pub svg: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            svg: false,
        }
    }
}

/// Command-line overrides applied on top of a file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub out: Option<PathBuf>,
    pub paper_scale: bool,
}

fn cfg_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        let cfg = Self::from_toml_str(&text).map_err(|e| {
            cfg_err(format!(
                "{}: {}",
                path.display(),
                e.to_string().trim_start_matches("config error: ")
            ))
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        if o.paper_scale {
            self.competition.trials = PAPER_TRIALS;
        }
        if let Some(t) = o.trials {
            self.competition.trials = t;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.out {
            self.output.dir = d.clone();
        }
        self
    }

    /// SHA-256 of the canonical JSON serialisation. Field order is the
    /// struct order, so any field change changes the hash.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// A validated scenario with every derived quantity resolved.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub hash: String,
    pub constants: MechanismConstants,
    pub true_costs: Vec<f64>,
    pub data: Vec<f64>,
    pub free_riders: Vec<usize>,
    pub focal: usize,
    pub dists: Vec<CostDistribution>,
    pub sweep_pcts: Vec<f64>,
    pub sampling: Sampling,
    pub fedsim: Option<(SyntheticTask, FedConfig)>,
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig, base_dir: &Path) -> Result<Self> {
        let c = &config;
        let true_costs = match (&c.agents.costs, c.agents.count, c.agents.cost) {
            (Some(list), None, None) => list.clone(),
            (None, Some(count), Some(cost)) => vec![cost; count],
            _ => {
                return Err(cfg_err(
                    "agents: give either `costs = [...]` or both `count` and `cost`",
                ))
            }
        };
        let n = true_costs.len();
        if let Some(declared) = c.constants.n {
            if declared != n {
                return Err(cfg_err(format!(
                    "constants.n = {declared} but the roster has {n} agents"
                )));
            }
        }
        let constants = MechanismConstants::new(c.constants.k, c.constants.alpha, n)
            .map_err(|e| cfg_err(format!("constants: {e}")))?;
        for (i, &cost) in true_costs.iter().enumerate() {
            if !(cost.is_finite() && cost > 0.0) {
                return Err(cfg_err(format!(
                    "agents: cost of agent {i} must be > 0, got {cost}"
                )));
            }
        }
        let data = match &c.agents.data {
            Some(d) if d.len() != n => {
                return Err(cfg_err(format!(
                    "agents.data has {} entries for {n} agents",
                    d.len()
                )))
            }
            Some(d) => d.clone(),
            None => true_costs
                .iter()
                .map(|&cost| optimal_local_data(cost, constants.k()))
                .collect::<factsim_core::Result<_>>()?,
        };
        if let Some(&bad) = c.agents.free_riders.iter().find(|&&i| i >= n) {
            return Err(cfg_err(format!(
                "agents.free_riders: index {bad} out of range"
            )));
        }
        if c.agents.focal >= n {
            return Err(cfg_err(format!(
                "agents.focal = {} out of range",
                c.agents.focal
            )));
        }
        let dists = resolve_distributions(&c.distribution, &true_costs, base_dir)?;
        let sweep_pcts = resolve_sweep(&c.sweep)?;
        if c.competition.trials == 0 {
            return Err(cfg_err("competition.trials must be >= 1"));
        }
        let sampling = match c.competition.sampling {
            SamplingKind::PerTrial => Sampling::PerTrial,
            SamplingKind::FixedPool if c.competition.pool_size >= 2 => Sampling::FixedPool {
                size: c.competition.pool_size,
            },
            SamplingKind::FixedPool => return Err(cfg_err("competition.pool_size must be >= 2")),
        };
        if c.penalty_curve.points < 3 {
            return Err(cfg_err("penalty_curve.points must be >= 3"));
        }
        let fedsim = c
            .fedsim
            .as_ref()
            .map(|f| resolve_fedsim(f, constants.k(), c.seed))
            .transpose()?;
        let hash = config.hash();
        Ok(Self {
            hash,
            constants,
            true_costs,
            data,
            free_riders: c.agents.free_riders.clone(),
            focal: c.agents.focal,
            dists,
            sweep_pcts,
            sampling,
            fedsim,
            config,
        })
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let (cfg, base) = ScenarioConfig::load(path)?;
        Self::from_config(cfg.apply(overrides), &base)
    }

    pub fn n(&self) -> usize {
        self.true_costs.len()
    }

    pub fn trials(&self) -> u64 {
        self.config.competition.trials
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    /// Truthful agents using the configured data amounts.
    pub fn roster(&self) -> Result<Vec<AgentProfile>> {
        self.true_costs
            .iter()
            .zip(&self.data)
            .map(|(&c, &m)| AgentProfile::truthful(c, m).map_err(Into::into))
            .collect()
    }

    pub fn remainder_rule(&self) -> RemainderRule {
        match self.config.competition.remainder {
            RemainderKind::SitOut => RemainderRule::SitOut,
            RemainderKind::Synthetic => RemainderRule::Synthetic(self.dists.clone()),
        }
    }
}

fn resolve_distributions(
    d: &DistributionSection,
    true_costs: &[f64],
    base_dir: &Path,
) -> Result<Vec<CostDistribution>> {
    let wrap = |e: factsim_core::Error| cfg_err(format!("distribution: {e}"));
    match d.kind {
        DistKind::GaussianAroundTrueCost => {
            let rel = d.rel_std.unwrap_or(0.1);
            true_costs
                .iter()
                .map(|&c| CostDistribution::gaussian_around(c, rel).map_err(wrap))
                .collect()
        }
        DistKind::Uniform => match (d.lower, d.upper, d.rel_halfwidth) {
            (Some(lo), Some(hi), None) => {
                let u = CostDistribution::uniform(lo, hi).map_err(wrap)?;
                Ok(vec![u; true_costs.len()])
            }
            (None, None, Some(w)) if w > 0.0 && w < 1.0 => true_costs
                .iter()
                .map(|&c| CostDistribution::uniform(c * (1.0 - w), c * (1.0 + w)).map_err(wrap))
                .collect(),
            _ => Err(cfg_err(
                "distribution: uniform needs `lower` and `upper`, or `rel_halfwidth` in (0, 1)",
            )),
        },
        DistKind::Empirical => {
            let costs = match (&d.costs, &d.path) {
                (Some(list), None) => list.clone(),
                (None, Some(p)) => read_cost_file(&base_dir.join(p))?,
                _ => {
                    return Err(cfg_err(
                        "distribution: empirical needs exactly one of `costs` or `path`",
                    ))
                }
            };
            let e = CostDistribution::empirical(costs).map_err(wrap)?;
            Ok(vec![e; true_costs.len()])
        }
    }
}

fn read_cost_file(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| cfg_err(format!("distribution.path {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            l.parse::<f64>()
                .map_err(|e| cfg_err(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn resolve_sweep(s: &SweepSection) -> Result<Vec<f64>> {
    if !(s.step_pct > 0.0 && s.max_pct > 0.0) {
        return Err(cfg_err("sweep: step_pct and max_pct must be > 0"));
    }
    if s.min_pct != -s.max_pct {
        return Err(cfg_err(format!(
            "sweep: range must be symmetric around 0% (min_pct = {}, max_pct = {})",
            s.min_pct, s.max_pct
        )));
    }
    let half = s.max_pct / s.step_pct;
    if (half - half.round()).abs() > 1e-9 {
        return Err(cfg_err(
            "sweep: max_pct must be a whole number of steps so 0% is on the grid",
        ));
    }
    if s.max_pct >= 100.0 {
        return Err(cfg_err(
            "sweep: misreports must stay above -100% so reported costs are positive",
        ));
    }
    let half = half.round() as i64;
    Ok((-half..=half).map(|i| i as f64 * s.step_pct).collect())
}

fn resolve_fedsim(f: &FedsimSection, k: f64, seed: u64) -> Result<(SyntheticTask, FedConfig)> {
    if !(f.step_size > 0.0 && f.lipschitz > 0.0) {
        return Err(cfg_err("fedsim: step_size and lipschitz must be > 0"));
    }
    let implied = k / (f.step_size * f.lipschitz);
    let sigma2 = f.sigma2.unwrap_or(implied);
    let task = SyntheticTask::new(f.dim, f.mu, f.lipschitz, sigma2)
        .map_err(|e| cfg_err(format!("fedsim: {e}")))?;
    factsim_core::fedsim::check_noise_scale(k, f.step_size, &task)
        .map_err(|e| cfg_err(format!("fedsim: {e}")))?;
    let cfg = FedConfig {
        rounds: f.rounds,
        local_steps: f.local_steps,
        epochs: f.epochs,
        batches_per_epoch: f.batches_per_epoch,
        step_size: f.step_size,
        seed,
    };
    if f.rounds == 0 || f.local_steps == 0 || f.epochs == 0 {
        return Err(cfg_err(
            "fedsim: rounds, local_steps and epochs must be >= 1",
        ));
    }
    Ok((task, cfg))
}
