//! TOML experiment configuration with strict key checking.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::adaptive::{AdaptiveConfig, McmcIterations, MutationMode};
use crate::error::{Error, Result};
use crate::generators::{bounded_flow, decreasing_flow, halving_schedule, random_flow, seeded};
use crate::ips::SelectionRule;
use crate::isa::{GibbsProblem, ScheduleMode, TemperatureSchedule};
use crate::measure::{FiniteDistribution, KernelMatrix, PotentialVector};
use crate::oracle::{FlowSpec, FlowStep};

/// Complete description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub n_particles: usize,
    pub horizon: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub checks: CheckConfig,
}

fn default_replicates() -> usize {
    500
}

/// State space, potentials and kernels, or an energy landscape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// Flow given step by step; `potentials[n-1]` and `kernels[n-1]` define step `n`.
    Explicit {
        initial: Vec<f64>,
        potentials: Vec<Vec<f64>>,
        kernels: Vec<Vec<Vec<f64>>>,
    },
    /// Seeded random flow.
    Random { dim: usize, flow_seed: u64 },
    /// Seeded flow with `g_n = m` and `b_n <= a/(a+m)`.
    Bounded { dim: usize, a: f64, m: f64, flow_seed: u64 },
    /// Seeded flow following a potential-oscillation schedule (default `1 + 2^{-p}`).
    Decreasing {
        dim: usize,
        a: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        g: Option<Vec<f64>>,
        flow_seed: u64,
    },
    /// Energy `V`, reference `m` (default uniform) and proposal.
    Gibbs {
        energy: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference: Option<Vec<f64>>,
        #[serde(default)]
        proposal: Proposal,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        proposal_matrix: Option<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Proposal {
    #[default]
    Ring,
    Complete,
    Matrix,
}

/// Selection rule as written in configuration files.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionConfig {
    #[default]
    MaxKeep,
    Multinomial,
    Constant(f64),
    PerStep(Vec<f64>),
}

impl SelectionConfig {
    pub fn rule(&self) -> SelectionRule {
        match self {
            SelectionConfig::MaxKeep => SelectionRule::MaxKeep,
            SelectionConfig::Multinomial => SelectionRule::Multinomial,
            SelectionConfig::Constant(e) => SelectionRule::Constant(*e),
            SelectionConfig::PerStep(v) => SelectionRule::PerStep(v.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlgorithmConfig {
    Classic {
        #[serde(default)]
        selection: SelectionConfig,
    },
    Isa {
        schedule: ScheduleConfig,
        k0: usize,
        a: f64,
        /// Level `eps` of the reported proportion `V >= V_min + eps`.
        level: f64,
        /// Auxiliary level `eps' < eps` of the tail bound.
        level_prime: f64,
        #[serde(default)]
        selection: SelectionConfig,
    },
    Adaptive {
        epsilon: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta_max: Option<f64>,
        #[serde(default)]
        mutation: MutationConfig,
        #[serde(default)]
        iterations: IterationsConfig,
        /// Performance degree `a` of the concentration hypothesis, when checked.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hypothesis_a: Option<f64>,
    },
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig::Classic { selection: SelectionConfig::MaxKeep }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationConfig {
    #[default]
    Theoretical,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IterationsConfig {
    Fixed(u64),
    TargetContraction(f64),
    Hypothesis(f64),
}

impl Default for IterationsConfig {
    fn default() -> Self {
        IterationsConfig::Fixed(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleConfig {
    /// `beta_n = beta0 + n . step`.
    Linear {
        #[serde(default)]
        beta0: f64,
        step: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_increment: Option<f64>,
    },
    /// `beta_n = c . ln(1 + n)`.
    Logarithmic { c: f64 },
    /// Explicit `beta_0, ..., beta_T`.
    Table {
        betas: Vec<f64>,
        #[serde(default)]
        mode: ModeConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_increment: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeConfig {
    #[default]
    Bounded,
    Decreasing,
    Constant,
}

/// Declared regime for classic flows whose constants are not implied by the problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RegimeConfig {
    Bounded { a: f64, m: f64 },
    Decreasing { a: f64, g: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    #[serde(default = "default_ys")]
    pub ys: Vec<f64>,
    #[serde(default = "default_s_grid")]
    pub s_grid: Vec<f64>,
    #[serde(default = "default_true")]
    pub l2: bool,
    #[serde(default = "default_true")]
    pub eta: bool,
    #[serde(default = "default_true")]
    pub gamma: bool,
    /// Thresholds for the summary exceedance table.
    #[serde(default)]
    pub thresholds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<RegimeConfig>,
}

fn default_ys() -> Vec<f64> {
    vec![1.0, 2.0, 4.0]
}

fn default_s_grid() -> Vec<f64> {
    vec![0.0, 0.05, 0.1, 0.2, 0.3]
}

fn default_true() -> bool {
    true
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            ys: default_ys(),
            s_grid: default_s_grid(),
            l2: true,
            eta: true,
            gamma: true,
            thresholds: Vec::new(),
            regime: None,
        }
    }
}

/// Parses and validates; every field-level problem is listed in the error.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and parses a configuration file.
pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Canonical TOML form.
pub fn to_toml(cfg: &ExperimentConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))
}

/// A built problem: an explicit flow or an energy landscape.
#[derive(Debug, Clone)]
pub enum BuiltProblem {
    Flow(FlowSpec),
    Gibbs(GibbsProblem),
}

fn positive(errs: &mut Vec<String>, name: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        errs.push(format!("{name}: must be finite and > 0, got {v}"));
    }
}

fn unit(errs: &mut Vec<String>, name: &str, v: f64) {
    if !(v > 0.0 && v < 1.0) {
        errs.push(format!("{name}: must lie in (0, 1), got {v}"));
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n_particles == 0 {
            errs.push("n_particles: must be >= 1".to_string());
        }
        if self.replicates == 0 {
            errs.push("replicates: must be >= 1".to_string());
        }
        match &self.problem {
            ProblemConfig::Explicit { initial, potentials, kernels } => {
                if potentials.len() != kernels.len() {
                    errs.push(format!(
                        "problem.kernels: {} kernels for {} potentials",
                        kernels.len(),
                        potentials.len()
                    ));
                }
                if potentials.len() < self.horizon {
                    errs.push(format!("problem.potentials: {} steps given, horizon is {}", potentials.len(), self.horizon));
                }
                let d = initial.len();
                if potentials.iter().any(|p| p.len() != d) || kernels.iter().any(|k| k.len() != d || k.iter().any(|r| r.len() != d)) {
                    errs.push(format!("problem: every potential and kernel must have dimension {d}"));
                }
            }
            ProblemConfig::Random { dim, .. } => {
                if *dim == 0 {
                    errs.push("problem.dim: must be >= 1".into());
                }
            }
            ProblemConfig::Bounded { dim, a, m, .. } => {
                if *dim == 0 {
                    errs.push("problem.dim: must be >= 1".into());
                }
                unit(&mut errs, "problem.a", *a);
                if !(*m >= 1.0 && m.is_finite()) {
                    errs.push(format!("problem.m: must be finite and >= 1, got {m}"));
                }
            }
            ProblemConfig::Decreasing { dim, a, g, .. } => {
                if *dim == 0 {
                    errs.push("problem.dim: must be >= 1".into());
                }
                unit(&mut errs, "problem.a", *a);
                if let Some(g) = g {
                    if g.len() < self.horizon {
                        errs.push(format!("problem.g: {} entries, horizon is {}", g.len(), self.horizon));
                    }
                }
            }
            ProblemConfig::Gibbs { energy, reference, proposal, proposal_matrix } => {
                if energy.is_empty() {
                    errs.push("problem.energy: must not be empty".into());
                }
                if reference.as_ref().is_some_and(|r| r.len() != energy.len()) {
                    errs.push("problem.reference: length differs from problem.energy".into());
                }
                if (*proposal == Proposal::Matrix) != proposal_matrix.is_some() {
                    errs.push("problem.proposal_matrix: required exactly when proposal = \"matrix\"".into());
                }
            }
        }
        let gibbs = matches!(self.problem, ProblemConfig::Gibbs { .. });
        match &self.algorithm {
            AlgorithmConfig::Classic { .. } => {
                if gibbs {
                    errs.push("algorithm.kind: classic runs need a flow problem, not gibbs".into());
                }
            }
            AlgorithmConfig::Isa { schedule, k0, a, level, level_prime, .. } => {
                if !gibbs {
                    errs.push("algorithm.kind: isa needs a gibbs problem".into());
                }
                if *k0 == 0 {
                    errs.push("algorithm.k0: must be >= 1".into());
                }
                unit(&mut errs, "algorithm.a", *a);
                if !(*level_prime > 0.0 && level_prime < level) {
                    errs.push("algorithm.level_prime: must satisfy 0 < level_prime < level".into());
                }
                if let ScheduleConfig::Table { betas, .. } = schedule {
                    if betas.len() != self.horizon + 1 {
                        errs.push(format!("algorithm.schedule.betas: {} entries, need horizon + 1 = {}", betas.len(), self.horizon + 1));
                    }
                }
            }
            AlgorithmConfig::Adaptive { epsilon, tol, delta_max, hypothesis_a, iterations, .. } => {
                if !gibbs {
                    errs.push("algorithm.kind: adaptive needs a gibbs problem".into());
                }
                unit(&mut errs, "algorithm.epsilon", *epsilon);
                if let Some(t) = tol {
                    positive(&mut errs, "algorithm.tol", *t);
                }
                if let Some(d) = delta_max {
                    positive(&mut errs, "algorithm.delta_max", *d);
                }
                if let Some(a) = hypothesis_a {
                    unit(&mut errs, "algorithm.hypothesis_a", *a);
                }
                match iterations {
                    IterationsConfig::Fixed(0) => errs.push("algorithm.iterations: fixed count must be >= 1".into()),
                    IterationsConfig::TargetContraction(b) => unit(&mut errs, "algorithm.iterations.target-contraction", *b),
                    IterationsConfig::Hypothesis(a) => unit(&mut errs, "algorithm.iterations.hypothesis", *a),
                    IterationsConfig::Fixed(_) => {}
                }
            }
        }
        if self.checks.ys.iter().any(|y| !(*y >= 0.0 && y.is_finite())) {
            errs.push("checks.ys: entries must be finite and >= 0".into());
        }
        if self.checks.s_grid.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            errs.push("checks.s_grid: entries must be finite and >= 0".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }

    /// Materializes the problem; flows are truncated or checked against the horizon.
    pub fn build_problem(&self) -> Result<BuiltProblem> {
        let t = self.horizon;
        Ok(match &self.problem {
            ProblemConfig::Explicit { initial, potentials, kernels } => {
                let steps = potentials
                    .iter()
                    .zip(kernels)
                    .take(t)
                    .map(|(p, k)| {
                        Ok(FlowStep {
                            potential: PotentialVector::new(p.clone())?,
                            kernel: KernelMatrix::new(k.clone())?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                BuiltProblem::Flow(FlowSpec::new(FiniteDistribution::new(initial.clone())?, steps)?)
            }
            ProblemConfig::Random { dim, flow_seed } => BuiltProblem::Flow(random_flow(*dim, t, &mut seeded(*flow_seed))?),
            ProblemConfig::Bounded { dim, a, m, flow_seed } => BuiltProblem::Flow(bounded_flow(*dim, t, *a, *m, *flow_seed)?),
            ProblemConfig::Decreasing { dim, a, g, flow_seed } => {
                let g = g.clone().map_or_else(|| halving_schedule(t), |g| g[..t].to_vec());
                BuiltProblem::Flow(decreasing_flow(*dim, &g, *a, *flow_seed)?)
            }
            ProblemConfig::Gibbs { energy, reference, proposal, proposal_matrix } => {
                let p = match (proposal, reference) {
                    (Proposal::Ring, None) => GibbsProblem::on_ring(energy.clone())?,
                    (Proposal::Complete, None) => GibbsProblem::on_complete_graph(energy.clone())?,
                    _ => {
                        let d = energy.len();
                        let m = reference
                            .clone()
                            .map_or_else(|| FiniteDistribution::uniform(d), FiniteDistribution::from_unnormalized)?;
                        let k = match proposal {
                            Proposal::Matrix => KernelMatrix::new(proposal_matrix.clone().unwrap_or_default())?,
                            Proposal::Ring => GibbsProblem::on_ring(energy.clone())?.proposal().clone(),
                            Proposal::Complete => GibbsProblem::on_complete_graph(energy.clone())?.proposal().clone(),
                        };
                        GibbsProblem::new(energy.clone().try_into()?, m, k)?
                    }
                };
                BuiltProblem::Gibbs(p)
            }
        })
    }

    pub fn selection_rule(&self) -> SelectionRule {
        match &self.algorithm {
            AlgorithmConfig::Classic { selection } | AlgorithmConfig::Isa { selection, .. } => selection.rule(),
            AlgorithmConfig::Adaptive { .. } => SelectionRule::Constant(1.0),
        }
    }

    /// Adaptive settings, when the algorithm is adaptive.
    pub fn adaptive(&self) -> Option<AdaptiveConfig> {
        match &self.algorithm {
            AlgorithmConfig::Adaptive { epsilon, tol, delta_max, mutation, iterations, .. } => {
                let mut c = AdaptiveConfig::new(*epsilon)
                    .with_mutation(match mutation {
                        MutationConfig::Theoretical => MutationMode::Theoretical,
                        MutationConfig::Adaptive => MutationMode::Adaptive,
                    })
                    .with_iterations(match *iterations {
                        IterationsConfig::Fixed(m) => McmcIterations::Fixed(m),
                        IterationsConfig::TargetContraction(b) => McmcIterations::TargetContraction(b),
                        IterationsConfig::Hypothesis(a) => McmcIterations::Hypothesis(a),
                    });
                if let Some(t) = tol {
                    c.tol = *t;
                }
                c.delta_max = *delta_max;
                Some(c)
            }
            _ => None,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self, horizon: usize) -> Result<TemperatureSchedule> {
        match self {
            ScheduleConfig::Linear { beta0, step, max_increment } => {
                let s = TemperatureSchedule::linear(*beta0, *step, horizon)?;
                match max_increment {
                    Some(m) => TemperatureSchedule::new(s.betas().to_vec(), ScheduleMode::BoundedIncrement { max_increment: *m }),
                    None => Ok(s),
                }
            }
            ScheduleConfig::Logarithmic { c } => TemperatureSchedule::logarithmic(*c, horizon),
            ScheduleConfig::Table { betas, mode, max_increment } => {
                let mode = match mode {
                    ModeConfig::Bounded => ScheduleMode::BoundedIncrement {
                        max_increment: max_increment.unwrap_or_else(|| {
                            betas.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
                        }),
                    },
                    ModeConfig::Decreasing => ScheduleMode::DecreasingIncrement,
                    ModeConfig::Constant => ScheduleMode::ConstantStep,
                };
                TemperatureSchedule::new(betas.clone(), mode)
            }
        }
    }
}
