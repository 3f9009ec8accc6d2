//! Replicate execution and aggregation.

use std::path::Path;

use crate::adaptive::{run_adaptive, theoretical_adaptive_flow, AdaptiveConfig, AdaptiveReference, MutationMode};
use crate::error::{Error, Result};
use crate::harness::config::{AlgorithmConfig, BuiltProblem, ExperimentConfig};
use crate::harness::output::{Cell, Table};
use crate::harness::stats::{summarize, ExceedanceRow, ReplicateStats};
use crate::ips::{map_indices, run_ips, StepDiagnostics};
use crate::isa::{build_isa_flow, minorize, GibbsProblem, IsaFlow};
use crate::oracle::{run_flow, FlowSpec, FlowTrace};
use crate::rng::Lineage;

/// Exact objects attached to an experiment.
#[derive(Debug, Clone)]
pub enum ExactContext {
    Classic { spec: FlowSpec, trace: FlowTrace },
    Isa { problem: GibbsProblem, flow: IsaFlow, trace: FlowTrace, level: f64, level_prime: f64 },
    Adaptive { problem: GibbsProblem, config: AdaptiveConfig, reference: Option<AdaptiveReference> },
}

impl ExactContext {
    /// Exact flow trace, when the particle system approximates a known flow.
    pub fn trace(&self) -> Option<&FlowTrace> {
        match self {
            ExactContext::Classic { trace, .. } | ExactContext::Isa { trace, .. } => Some(trace),
            ExactContext::Adaptive { reference, .. } => reference.as_ref().map(|r| &r.trace),
        }
    }
}

/// Every replicate value, the exact counterparts and their aggregates.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub dim: usize,
    pub names: Vec<String>,
    /// `values[replicate][step][stat]`; `NaN` where a statistic is undefined.
    pub values: Vec<Vec<Vec<f64>>>,
    /// `exact[step][stat]`.
    pub exact: Vec<Vec<Option<f64>>>,
    pub context: ExactContext,
    pub stats: ReplicateStats,
}

fn eta_names(dim: usize) -> Vec<String> {
    (0..dim).map(|x| format!("eta_{x}")).collect()
}

fn occupation_row(states: &[usize], dim: usize) -> Vec<f64> {
    let mut counts = vec![0usize; dim];
    for &x in states {
        counts[x] += 1;
    }
    let n = states.len() as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

const FK_DIAGNOSTICS: [&str; 4] = ["log_gamma1", "mean_potential", "kept_fraction", "ess"];
const ADAPTIVE_DIAGNOSTICS: [&str; 7] = ["log_gamma1", "delta_n", "beta_n", "c_n", "kept_fraction", "saturated_flag", "residual"];

fn fk_replicate(
    spec: &FlowSpec,
    cfg: &ExperimentConfig,
    lineage: Lineage,
    indicator: Option<&[f64]>,
) -> Result<Vec<Vec<f64>>> {
    let d = spec.dim();
    let mut rows = Vec::with_capacity(spec.horizon() + 1);
    let (_, diags) = run_ips(spec, cfg.n_particles, lineage, &cfg.selection_rule(), |ens| {
        let mut row = occupation_row(&ens.states, d);
        row.extend([ens.log_gamma1, f64::NAN, f64::NAN, f64::NAN]);
        if let Some(ind) = indicator {
            row.push(ens.states.iter().map(|&x| ind[x]).sum::<f64>() / ens.len() as f64);
        }
        rows.push(row);
    })?;
    for (n, StepDiagnostics { mean_potential, kept_fraction, ess, .. }) in diags.iter().enumerate() {
        let row = &mut rows[n + 1];
        row[d + 1] = *mean_potential;
        row[d + 2] = *kept_fraction;
        row[d + 3] = *ess;
    }
    Ok(rows)
}

fn fk_exact(trace: &FlowTrace, dim: usize, extra: Option<&[f64]>) -> Result<Vec<Vec<Option<f64>>>> {
    trace
        .etas
        .iter()
        .enumerate()
        .map(|(n, eta)| {
            let mut row: Vec<Option<f64>> = eta.weights().iter().map(|&w| Some(w)).collect();
            row.extend([Some(trace.log_gamma1[n]), None, None, None]);
            if let Some(ind) = extra {
                row.push(Some(eta.expect(ind)?));
            }
            debug_assert_eq!(row.len(), dim + 4 + usize::from(extra.is_some()));
            Ok(row)
        })
        .collect()
}

fn replicates<T: Send>(cfg: &ExperimentConfig, f: impl Fn(Lineage) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    map_indices(cfg.replicates, |r| {
        f(Lineage::new(cfg.seed, r as u64)).map_err(|e| Error::Replicate { replicate: r as u64, source: Box::new(e) })
    })
    .into_iter()
    .collect()
}

/// Exact objects for `cfg` without running any replicate.
pub fn exact_context(cfg: &ExperimentConfig) -> Result<ExactContext> {
    cfg.validate()?;
    Ok(match (&cfg.algorithm, cfg.build_problem()?) {
        (AlgorithmConfig::Classic { .. }, BuiltProblem::Flow(spec)) => {
            let trace = run_flow(&spec)?;
            ExactContext::Classic { spec, trace }
        }
        (AlgorithmConfig::Isa { schedule, k0, a, level, level_prime, .. }, BuiltProblem::Gibbs(problem)) => {
            let cert = minorize(&problem, *k0)?;
            let flow = build_isa_flow(&problem, &schedule.build(cfg.horizon)?, &cert, *a)?;
            let trace = run_flow(&flow.spec)?;
            ExactContext::Isa { problem, flow, trace, level: *level, level_prime: *level_prime }
        }
        (AlgorithmConfig::Adaptive { .. }, BuiltProblem::Gibbs(problem)) => {
            let config = cfg.adaptive().expect("adaptive algorithm");
            let reference = match config.mutation {
                MutationMode::Theoretical => Some(theoretical_adaptive_flow(&problem, &config, cfg.horizon)?),
                MutationMode::Adaptive => None,
            };
            ExactContext::Adaptive { problem, config, reference }
        }
        _ => return Err(Error::Config("algorithm and problem kinds are incompatible".into())),
    })
}

/// Runs `R` replicates with lineages `(seed, r)` and aggregates them in replicate order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let context = exact_context(cfg)?;
    let (dim, names, values, exact) = match &context {
        ExactContext::Classic { spec, trace } => {
            let d = spec.dim();
            let values = replicates(cfg, |l| fk_replicate(spec, cfg, l, None))?;
            let mut names = eta_names(d);
            names.extend(FK_DIAGNOSTICS.map(String::from));
            (d, names, values, fk_exact(trace, d, None)?)
        }
        ExactContext::Isa { problem, flow, trace, level, .. } => {
            let d = problem.dim();
            let indicator = problem.level_indicator(*level);
            let values = replicates(cfg, |l| fk_replicate(&flow.spec, cfg, l, Some(&indicator)))?;
            let mut names = eta_names(d);
            names.extend(FK_DIAGNOSTICS.map(String::from));
            names.push("proportion".into());
            (d, names, values, fk_exact(trace, d, Some(&indicator))?)
        }
        ExactContext::Adaptive { problem, config: acfg, reference } => {
            let d = problem.dim();
            let values = replicates(cfg, |l| {
                let run = run_adaptive(problem, acfg, cfg.n_particles, cfg.horizon, l, reference.as_ref())?;
                Ok(run
                    .ensembles
                    .iter()
                    .enumerate()
                    .map(|(n, ens)| {
                        let mut row = occupation_row(&ens.states, d);
                        row.push(ens.log_gamma1);
                        match n.checked_sub(1).map(|i| &run.diagnostics.steps[i]) {
                            Some(s) => row.extend([
                                s.delta,
                                s.beta,
                                s.c,
                                s.kept_fraction,
                                f64::from(u8::from(s.saturated)),
                                s.residual,
                            ]),
                            None => row.extend([f64::NAN, 0.0, f64::NAN, f64::NAN, f64::NAN, f64::NAN]),
                        }
                        row
                    })
                    .collect::<Vec<_>>())
            })?;
            let mut names = eta_names(d);
            names.extend(ADAPTIVE_DIAGNOSTICS.map(String::from));
            let exact = match reference {
                Some(r) => (0..=cfg.horizon)
                    .map(|n| {
                        let mut row: Vec<Option<f64>> = r.trace.etas[n].weights().iter().map(|&w| Some(w)).collect();
                        row.push(Some(r.trace.log_gamma1[n]));
                        let step = n.checked_sub(1);
                        row.extend([
                            step.map(|i| r.deltas[i]),
                            Some(r.betas[n]),
                            step.map(|i| r.c[i]),
                            step.map(|_| r.epsilon),
                            None,
                            None,
                        ]);
                        row
                    })
                    .collect(),
                None => vec![vec![None; names.len()]; cfg.horizon + 1],
            };
            (d, names, values, exact)
        }
    };
    let mut out = ExperimentOutput {
        config: cfg.clone(),
        dim,
        names,
        values,
        exact,
        context,
        stats: ReplicateStats::default(),
    };
    out.stats = out.aggregate();
    Ok(out)
}

impl ExperimentOutput {
    pub fn horizon(&self) -> usize {
        self.exact.len() - 1
    }

    pub fn stat_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Defined values of one statistic at one step, in replicate order.
    pub fn series(&self, step: usize, stat: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[step][stat]).filter(|v| !v.is_nan()).collect()
    }

    /// Occupation measure of every replicate at `step`.
    pub fn occupations(&self, step: usize) -> Vec<&[f64]> {
        self.values.iter().map(|r| &r[step][..self.dim]).collect()
    }

    fn aggregate(&self) -> ReplicateStats {
        let mut stats = ReplicateStats::default();
        for step in 0..=self.horizon() {
            for (k, name) in self.names.iter().enumerate() {
                let series = self.series(step, k);
                if series.is_empty() {
                    continue;
                }
                let exact = self.exact[step][k];
                if let Some(e) = exact {
                    for &t in &self.config.checks.thresholds {
                        let hits = series.iter().filter(|v| (*v - e).abs() >= t).count();
                        stats.exceedances.push(ExceedanceRow {
                            step,
                            statistic: name.clone(),
                            threshold: t,
                            frequency: hits as f64 / series.len() as f64,
                        });
                    }
                }
                stats.rows.push(summarize(step, name, &series, exact));
            }
        }
        stats
    }

    /// Long-format table `replicate, step, statistic, value`.
    pub fn raw_table(&self) -> Table {
        let mut t = Table::new(&["replicate", "step", "statistic", "value"]);
        for (r, rep) in self.values.iter().enumerate() {
            for (step, row) in rep.iter().enumerate() {
                for (k, &v) in row.iter().enumerate() {
                    if !v.is_nan() {
                        t.push(vec![r.into(), step.into(), self.names[k].as_str().into(), v.into()]);
                    }
                }
            }
        }
        t
    }

    /// One row per replicate and step with the non-occupation statistics as columns.
    pub fn diagnostics_table(&self) -> Table {
        let mut header = vec!["replicate", "step"];
        header.extend(self.names[self.dim..].iter().map(String::as_str));
        let mut t = Table::new(&header);
        for (r, rep) in self.values.iter().enumerate() {
            for (step, row) in rep.iter().enumerate() {
                let mut cells: Vec<Cell> = vec![r.into(), step.into()];
                cells.extend(row[self.dim..].iter().map(|&v| if v.is_nan() { Cell::Empty } else { v.into() }));
                t.push(cells);
            }
        }
        t
    }

    pub fn summary_table(&self) -> Table {
        summary_table(&self.stats)
    }

    pub fn exceedance_table(&self) -> Table {
        let mut t = Table::new(&["step", "statistic", "threshold", "frequency"]);
        for e in &self.stats.exceedances {
            t.push(vec![e.step.into(), e.statistic.as_str().into(), e.threshold.into(), e.frequency.into()]);
        }
        t
    }

    /// Writes `raw.csv`, `summary.csv`, `diagnostics.csv` and `exceedance.csv` into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        self.raw_table().write_path(&dir.join("raw.csv"))?;
        self.summary_table().write_path(&dir.join("summary.csv"))?;
        self.diagnostics_table().write_path(&dir.join("diagnostics.csv"))?;
        self.exceedance_table().write_path(&dir.join("exceedance.csv"))
    }
}

/// Exact flow table `step, beta, eta_0.., log_gamma1, g_n, b_n` (and `delta_n, c_n`
/// for the adaptive reference). Fails when the configuration has no exact flow.
pub fn oracle_table(context: &ExactContext) -> Result<Table> {
    let trace = context
        .trace()
        .ok_or_else(|| Error::Config("fully adaptive mutation has no exact reference flow".into()))?;
    let dim = trace.etas[0].dim();
    let adaptive = match context {
        ExactContext::Adaptive { reference, .. } => reference.as_ref(),
        _ => None,
    };
    let betas: Option<&[f64]> = match context {
        ExactContext::Classic { .. } => None,
        ExactContext::Isa { flow, .. } => Some(flow.schedule.betas()),
        ExactContext::Adaptive { .. } => adaptive.map(|r| r.betas.as_slice()),
    };
    let mut header = vec!["step".to_string(), "beta".to_string()];
    header.extend(eta_names(dim));
    header.extend(["log_gamma1", "g_n", "b_n"].map(String::from));
    if adaptive.is_some() {
        header.extend(["delta_n", "c_n"].map(String::from));
    }
    let mut t = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for (n, eta) in trace.etas.iter().enumerate() {
        let prev = n.checked_sub(1);
        let mut row: Vec<Cell> = vec![n.into(), betas.map(|b| b[n]).into()];
        row.extend(eta.weights().iter().map(|&w| Cell::from(w)));
        row.push(trace.log_gamma1[n].into());
        row.push(prev.map(|i| trace.g[i]).into());
        row.push(prev.map(|i| trace.b[i]).into());
        if let Some(r) = adaptive {
            row.push(prev.map(|i| r.deltas[i]).into());
            row.push(prev.map(|i| r.c[i]).into());
        }
        t.push(row);
    }
    Ok(t)
}

/// Summary table `step, statistic, count, mean, se, q05..q95, exact`.
pub fn summary_table(stats: &ReplicateStats) -> Table {
    let mut t = Table::new(&["step", "statistic", "count", "mean", "se", "q05", "q25", "q50", "q75", "q95", "exact"]);
    for r in &stats.rows {
        let mut cells: Vec<Cell> = vec![r.step.into(), r.statistic.as_str().into(), r.count.into(), r.mean.into(), r.se.into()];
        cells.extend(r.quantiles.iter().map(|&q| Cell::from(q)));
        cells.push(r.exact.into());
        t.push(cells);
    }
    t
}

/// Writes the summary table of `stats` to `path`.
pub fn emit_csv(stats: &ReplicateStats, path: &Path) -> Result<()> {
    summary_table(stats).write_path(path)
}
