//! Empirical left-hand sides against theoretical right-hand sides, one row per inequality.

use crate::bounds::{
    adaptive_deviation_radius, adaptive_tail_probability, condition_bounded, condition_decreasing, eta_deviation_radius,
    gamma_radius_bounded, gamma_radius_decreasing, gibbs_tail_bound, lp_stability_bound, lp_uniform_bound, r_star_bounded,
    r_star_decreasing, r_star_decreasing_eta, DecreasingSchedule, RegimeParams,
};
use crate::error::Result;
use crate::estimators::{d2_sup, frequency_within, osc_dictionary};
use crate::generators::halving_schedule;
use crate::harness::config::{AlgorithmConfig, ExperimentConfig, ProblemConfig, RegimeConfig};
use crate::harness::experiment::{run_experiment, ExactContext, ExperimentOutput};
use crate::harness::output::{Cell, Table};
use crate::isa::isa_eta_constants;
use crate::oracle::{FlowSpec, FlowTrace, SemigroupTable};

/// Relative tolerance used when checking regime hypotheses against exact quantities.
pub const HYPOTHESIS_TOL: f64 = 1e-12;
/// Largest solver residual accepted on unsaturated adaptive steps.
pub const KAPPA_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    HypothesisUnmet,
}

impl CheckStatus {
    pub fn label(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::HypothesisUnmet => "hypothesis-unmet",
        }
    }
}

/// One inequality `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub check: String,
    pub step: usize,
    /// `y`, `s` or nothing.
    pub parameter: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub status: CheckStatus,
    pub detail: String,
}

impl CheckRow {
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
}

impl VerifyReport {
    /// No row failed.
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(|r| r.status == CheckStatus::Fail)
    }

    pub fn rows_named<'a>(&'a self, check: &'a str) -> impl Iterator<Item = &'a CheckRow> + 'a {
        self.rows.iter().filter(move |r| r.check == check)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["check", "step", "parameter", "lhs", "rhs", "margin", "status", "detail"]);
        for r in &self.rows {
            t.push(vec![
                r.check.as_str().into(),
                r.step.into(),
                Cell::from(r.parameter),
                r.lhs.into(),
                r.rhs.into(),
                r.margin().into(),
                r.status.label().into(),
                r.detail.as_str().into(),
            ]);
        }
        t
    }
}

/// Runs the experiment and checks every applicable inequality.
pub fn verify_bounds(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    verify_output(&run_experiment(cfg)?)
}

#[derive(Debug, Clone)]
pub(crate) enum Regime {
    Bounded { a: f64, m: f64 },
    Decreasing { a: f64, g: Vec<f64> },
}

pub(crate) fn declared_regime(cfg: &ExperimentConfig) -> Option<Regime> {
    match (&cfg.problem, &cfg.checks.regime) {
        (_, Some(RegimeConfig::Bounded { a, m })) => Some(Regime::Bounded { a: *a, m: *m }),
        (_, Some(RegimeConfig::Decreasing { a, g })) => Some(Regime::Decreasing { a: *a, g: g.clone() }),
        (ProblemConfig::Bounded { a, m, .. }, None) => Some(Regime::Bounded { a: *a, m: *m }),
        (ProblemConfig::Decreasing { a, g, .. }, None) => Some(Regime::Decreasing {
            a: *a,
            g: g.clone().unwrap_or_else(|| halving_schedule(cfg.horizon)),
        }),
        _ => None,
    }
}

fn within(x: f64, cap: f64) -> bool {
    x <= cap * (1.0 + HYPOTHESIS_TOL) + 1e-15
}

/// First step violating the regime conditions, with a description.
fn regime_violation(regime: &Regime, trace: &FlowTrace) -> Result<Option<(usize, String)>> {
    for (i, (&g, &b)) in trace.g.iter().zip(&trace.b).enumerate() {
        let n = i + 1;
        match regime {
            Regime::Bounded { a, m } => {
                let cap = condition_bounded(*m, *a)?;
                if !within(g, *m) || !within(b, cap) {
                    return Ok(Some((n, format!("g_{n} = {g:e} (M = {m:e}), b_{n} = {b:e} (cap {cap:e})"))));
                }
            }
            Regime::Decreasing { a, g: sched } => {
                let Some(&gp) = sched.get(i) else {
                    return Ok(Some((n, format!("schedule has no g_{n}"))));
                };
                let cap = condition_decreasing(gp, *a)?.b_max;
                if !within(g, gp) || !within(b, cap) {
                    return Ok(Some((n, format!("g_{n} = {g:e} (declared {gp:e}), b_{n} = {b:e} (cap {cap:e})"))));
                }
            }
        }
    }
    Ok(None)
}

fn deviations(out: &ExperimentOutput, trace: &FlowTrace, n: usize) -> Vec<Vec<f64>> {
    let eta = trace.etas[n].weights();
    out.occupations(n).into_iter().map(|occ| occ.iter().zip(eta).map(|(a, b)| a - b).collect()).collect()
}

/// `|eta^N(f) - eta(f)|` for every replicate (rows) and dictionary function (columns).
fn abs_errors(out: &ExperimentOutput, trace: &FlowTrace, n: usize, funcs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    deviations(out, trace, n)
        .into_iter()
        .map(|dev| funcs.iter().map(|f| dev.iter().zip(f).map(|(d, v)| d * v).sum::<f64>().abs()).collect())
        .collect()
}

/// Largest fraction of replicates, over test functions, with error above `t` (or at least `t`).
fn worst_frequency(errors: &[Vec<f64>], t: f64, inclusive: bool) -> f64 {
    let r = errors.len() as f64;
    let cols = errors.first().map_or(0, Vec::len);
    (0..cols)
        .map(|j| errors.iter().filter(|row| if inclusive { row[j] >= t } else { row[j] > t }).count() as f64 / r)
        .fold(0.0, f64::max)
}

struct Rows<'a> {
    report: &'a mut VerifyReport,
    replicates: usize,
}

impl Rows<'_> {
    fn l2(&mut self, check: &str, step: usize, lhs: f64, rhs: f64) {
        let status = if lhs <= rhs { CheckStatus::Pass } else { CheckStatus::Fail };
        self.push(check, step, None, lhs, rhs, status, "replicate d_2 over osc-1 functions");
    }

    fn exact(&mut self, check: &str, step: usize, parameter: Option<f64>, lhs: f64, rhs: f64) {
        let status = if lhs <= rhs { CheckStatus::Pass } else { CheckStatus::Fail };
        self.push(check, step, parameter, lhs, rhs, status, "exact");
    }

    fn frequency(&mut self, check: &str, step: usize, parameter: f64, freq: f64, bound: f64, detail: String) {
        let status = if frequency_within(freq, bound, self.replicates) { CheckStatus::Pass } else { CheckStatus::Fail };
        self.push(check, step, Some(parameter), freq, bound, status, &detail);
    }

    fn unmet(&mut self, check: &str, step: usize, detail: &str) {
        self.push(check, step, None, f64::NAN, f64::NAN, CheckStatus::HypothesisUnmet, detail);
    }

    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, check: &str, step: usize, parameter: Option<f64>, lhs: f64, rhs: f64, status: CheckStatus, detail: &str) {
        self.report.rows.push(CheckRow {
            check: check.to_string(),
            step,
            parameter,
            lhs,
            rhs,
            status,
            detail: detail.to_string(),
        });
    }
}

/// Exact products the regime bounds are derived from: `g_{p,n}` against its cap
/// (`M + a`, or `g_{p+1}^{1 + alpha}` in the decreasing regime) and `b_p g_{p-1,n} <= a`.
fn regime_products(rows: &mut Rows<'_>, regime: &Regime, spec: &FlowSpec, trace: &FlowTrace) -> Result<()> {
    let table = SemigroupTable::new(spec)?;
    for n in 0..=spec.horizon() {
        let mut g_ratio: f64 = 0.0;
        let mut bg: f64 = 0.0;
        let a = match regime {
            Regime::Bounded { a, .. } | Regime::Decreasing { a, .. } => *a,
        };
        for p in 0..=n {
            let cap = match regime {
                Regime::Bounded { a, m } => m + a,
                Regime::Decreasing { a, g } => g.get(p).map_or(1.0, |gp| gp.powf(1.0 + a / (1.0 - a))),
            };
            g_ratio = g_ratio.max(table.g(p, n) / cap);
            if p >= 1 {
                bg = bg.max(trace.b[p - 1] * table.g(p - 1, n));
            }
        }
        rows.exact("regime-g", n, None, g_ratio, 1.0 + HYPOTHESIS_TOL);
        rows.exact("regime-bg", n, None, bg, a * (1.0 + HYPOTHESIS_TOL));
    }
    Ok(())
}

/// Checks every applicable inequality on a finished experiment.
pub fn verify_output(out: &ExperimentOutput) -> Result<VerifyReport> {
    let cfg = &out.config;
    let np = cfg.n_particles as u64;
    let horizon = out.horizon();
    let mut report = VerifyReport::default();
    let mut rows = Rows { report: &mut report, replicates: cfg.replicates };
    let funcs = osc_dictionary(out.dim);
    match &out.context {
        ExactContext::Classic { spec, trace } => {
            if cfg.checks.l2 {
                let table = SemigroupTable::new(spec)?;
                for n in 0..=horizon {
                    let d2 = d2_sup(&deviations(out, trace, n))?.value;
                    rows.l2("lp-stability", n, d2, lp_stability_bound(2, table.stability_sum(n), np)?);
                }
            }
            let Some(regime) = declared_regime(cfg) else {
                return Ok(report);
            };
            if let Some((step, why)) = regime_violation(&regime, trace)? {
                for check in ["lp-uniform", "eta-concentration", "gamma-concentration"] {
                    rows.unmet(check, step, &why);
                }
                return Ok(report);
            }
            regime_products(&mut rows, &regime, spec, trace)?;
            let (a, schedule) = match &regime {
                Regime::Bounded { a, .. } => (*a, None),
                Regime::Decreasing { a, g } => (*a, Some(DecreasingSchedule::new(g.clone())?)),
            };
            let lg = out.stat_index("log_gamma1").expect("log_gamma1 recorded");
            for n in 0..=horizon {
                if cfg.checks.l2 {
                    let d2 = d2_sup(&deviations(out, trace, n))?.value;
                    rows.l2("lp-uniform", n, d2, lp_uniform_bound(2, a, np)?);
                }
                if cfg.checks.eta {
                    let (r1, r2) = match (&regime, &schedule) {
                        (Regime::Bounded { a, m }, _) => r_star_bounded(&RegimeParams::new(*a, *m, np)?),
                        (_, Some(s)) => r_star_decreasing_eta(s, a, np, n)?,
                        _ => unreachable!("schedule present in the decreasing regime"),
                    };
                    let errors = abs_errors(out, trace, n, &funcs);
                    for &y in &cfg.checks.ys {
                        let t = eta_deviation_radius(r1, r2, np, y)?;
                        rows.frequency("eta-concentration", n, y, worst_frequency(&errors, t, false), (-y).exp(), format!("radius {t:e}"));
                    }
                }
                if cfg.checks.gamma && n >= 1 {
                    let exact = trace.log_gamma1[n];
                    let ratios: Vec<f64> = out.series(n, lg).into_iter().map(|l| (l - exact) / n as f64).collect();
                    let constants = match &schedule {
                        Some(s) => Some(r_star_decreasing(s, a, np, n)?),
                        None => None,
                    };
                    for &y in &cfg.checks.ys {
                        let t = match (&regime, &constants) {
                            (Regime::Bounded { a, m }, _) => gamma_radius_bounded(&RegimeParams::new(*a, *m, np)?, n, y)?,
                            (_, Some(c)) => gamma_radius_decreasing(c, n, np, y)?,
                            _ => unreachable!("constants present in the decreasing regime"),
                        };
                        for (sign, name) in [(1.0, "gamma-concentration+"), (-1.0, "gamma-concentration-")] {
                            let hits = ratios.iter().filter(|&&x| sign * x > t).count();
                            let freq = hits as f64 / ratios.len() as f64;
                            rows.frequency(name, n, y, freq, (-y).exp(), format!("radius {t:e}"));
                        }
                    }
                }
            }
        }
        ExactContext::Isa { problem, flow, trace, level, level_prime } => {
            let m_eps = problem.level_mass(*level_prime);
            let indicator = problem.level_indicator(*level);
            for n in 0..=horizon {
                let tail = trace.etas[n].expect(&indicator)?;
                let beta = flow.schedule.betas()[n];
                rows.exact("gibbs-tail", n, Some(beta), tail, gibbs_tail_bound(beta, *level, *level_prime, m_eps)?);
            }
            let osc = problem.osc();
            let a = flow.a;
            let regime = if flow.schedule.is_bounded() {
                Regime::Bounded { a, m: (flow.schedule.max_increment() * osc).exp() }
            } else {
                Regime::Decreasing { a, g: flow.schedule.increments().iter().map(|d| (d * osc).exp()).collect() }
            };
            if let Some((step, why)) = regime_violation(&regime, trace)? {
                rows.unmet("isa-composite", step, &why);
                return Ok(report);
            }
            regime_products(&mut rows, &regime, &flow.spec, trace)?;
            let k = out.stat_index("proportion").expect("proportion recorded");
            for n in 0..=horizon {
                let beta = flow.schedule.betas()[n];
                let tail_bound = gibbs_tail_bound(beta, *level, *level_prime, m_eps)?;
                let (ri, rj) = isa_eta_constants(flow, osc, np, n)?;
                let props = out.series(n, k);
                for &y in &cfg.checks.ys {
                    let composite = tail_bound + eta_deviation_radius(ri, rj, np, y)?;
                    let freq = props.iter().filter(|&&p| p > composite).count() as f64 / props.len() as f64;
                    rows.frequency("isa-composite", n, y, freq, (-y).exp(), format!("composite {composite:e}"));
                }
            }
        }
        ExactContext::Adaptive { reference, .. } => {
            let res = out.stat_index("residual").expect("residual recorded");
            let sat = out.stat_index("saturated_flag").expect("saturation recorded");
            for n in 1..=horizon {
                let worst = out
                    .values
                    .iter()
                    .filter(|r| r[n][sat] == 0.0)
                    .map(|r| r[n][res].abs())
                    .fold(0.0, f64::max);
                rows.exact("kappa-residual", n, None, worst, KAPPA_RESIDUAL_TOL);
            }
            let Some(reference) = reference else {
                rows.unmet("adaptive-l2", 0, "fully adaptive mutation is outside the analysed setting");
                return Ok(report);
            };
            let trace = &reference.trace;
            if cfg.checks.l2 {
                let bounds = reference.l2_bounds(cfg.n_particles)?;
                for (n, bound) in bounds.iter().enumerate() {
                    rows.l2("adaptive-l2", n, d2_sup(&deviations(out, trace, n))?.value, *bound);
                }
            }
            let AlgorithmConfig::Adaptive { hypothesis_a: Some(a), .. } = cfg.algorithm else {
                return Ok(report);
            };
            if let Some((step, value)) = reference.hypothesis_failure(a) {
                let why = format!("b_n g_n (1 + c_n) = {value:e} > a = {a}");
                rows.unmet("adaptive-tail", step, &why);
                rows.unmet("adaptive-radius", step, &why);
                return Ok(report);
            }
            for n in 1..=horizon {
                let errors = abs_errors(out, trace, n, &funcs);
                for &s in &cfg.checks.s_grid {
                    let bound = adaptive_tail_probability(a, np, s)?;
                    rows.frequency("adaptive-tail", n, s, worst_frequency(&errors, s, true), bound, String::new());
                }
                for &y in cfg.checks.ys.iter().filter(|y| **y >= 1.0) {
                    let t = adaptive_deviation_radius(a, np, y)?;
                    rows.frequency("adaptive-radius", n, y, worst_frequency(&errors, t, true), (-y).exp(), format!("radius {t:e}"));
                }
            }
        }
    }
    Ok(report)
}
