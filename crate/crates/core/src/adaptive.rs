//! Adaptive interacting simulated annealing.
//!
//! Each increment solves `eta(e^{-Delta V}) = epsilon` on the current measure, so the
//! expected fraction of particles kept in place during selection is `epsilon`.
//! Energies must be non-negative with no reference mass on `{V = 0}`.

use crate::bounds::{adaptive_deviation_radius, adaptive_tail_probability, bp_constant};
use crate::error::{invalid, Error, Result};
use crate::estimators::{d2_sup, frequency_within, osc_dictionary};
use crate::ips::{map_indices, mutate_finite, select_with_weights, ParticleEnsemble};
use crate::isa::{metropolis_kernel, GibbsProblem};
use crate::measure::{bg_transform, dobrushin, potential_ratio, FiniteDistribution, KernelMatrix, PotentialVector};
use crate::oracle::{fk_step, run_flow, FlowSpec, FlowStep, FlowTrace};
use crate::rng::{Lineage, Phase};

/// Largest power of the Metropolis kernel searched when tuning iterations.
pub const MAX_ADAPTIVE_ITERS: u64 = 1 << 40;

/// `lambda(x) = mu(e^{-x V})` for a finite or empirical measure.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaCurve {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl LambdaCurve {
    /// Curve of `mu` against energy `v`; only atoms with positive mass are kept.
    pub fn from_distribution(mu: &FiniteDistribution, v: &[f64]) -> Result<Self> {
        if mu.dim() != v.len() {
            return Err(Error::DimensionMismatch { expected: v.len(), got: mu.dim() });
        }
        let (values, weights) = mu
            .weights()
            .iter()
            .zip(v)
            .filter(|(w, _)| **w > 0.0)
            .map(|(&w, &x)| (x, w))
            .unzip();
        Self::checked(values, weights)
    }

    /// Curve of the empirical measure of `states`.
    pub fn from_states(states: &[usize], v: &[f64]) -> Result<Self> {
        if states.is_empty() {
            return Err(invalid("empty ensemble"));
        }
        let w = 1.0 / states.len() as f64;
        let mut values = Vec::with_capacity(states.len());
        for &x in states {
            values.push(*v.get(x).ok_or_else(|| Error::IndexOutOfRange(format!("state {x} with {} energies", v.len())))?);
        }
        Self::checked(values, vec![w; states.len()])
    }

    fn checked(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(invalid(format!("energy {v} must be finite and >= 0")));
        }
        Ok(Self { values, weights })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.values.iter().zip(&self.weights).map(|(v, w)| w * (-x * v).exp()).sum()
    }

    /// Mass on `{V = 0}`, the limit of `lambda` at infinity.
    pub fn floor(&self) -> f64 {
        self.values.iter().zip(&self.weights).filter(|(v, _)| **v == 0.0).map(|(_, w)| w).sum()
    }

    /// `mu(V)`.
    pub fn mean_energy(&self) -> f64 {
        self.values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

/// Root of `lambda(Delta) = epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaSolution {
    pub delta: f64,
    /// `lambda(delta_max) > epsilon`; `delta` is then `delta_max`.
    pub saturated: bool,
    /// `lambda(delta) - epsilon`.
    pub residual: f64,
}

/// Bracket-doubling from `[0, 1]` then bisection on the value of `lambda` down to `tol`.
pub fn kappa_solve(curve: &LambdaCurve, epsilon: f64, tol: f64, delta_max: f64) -> Result<KappaSolution> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(tol > 0.0) || !(delta_max > 0.0) {
        return Err(invalid("tol and delta_max must be > 0"));
    }
    if epsilon == 1.0 {
        return Ok(KappaSolution { delta: 0.0, saturated: false, residual: 0.0 });
    }
    let mut hi = delta_max.min(1.0);
    let mut f_hi = curve.eval(hi);
    while f_hi > epsilon && hi < delta_max {
        hi = (2.0 * hi).min(delta_max);
        f_hi = curve.eval(hi);
    }
    if f_hi > epsilon {
        return Ok(KappaSolution { delta: hi, saturated: true, residual: f_hi - epsilon });
    }
    let mut lo = 0.0;
    let mut f_lo = 1.0;
    while f_hi - epsilon < -tol && f_lo - epsilon > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = curve.eval(mid);
        if f > epsilon {
            lo = mid;
            f_lo = f;
        } else {
            hi = mid;
            f_hi = f;
        }
    }
    let (delta, f) = if f_lo - epsilon <= epsilon - f_hi { (lo, f_lo) } else { (hi, f_hi) };
    Ok(KappaSolution { delta, saturated: false, residual: f - epsilon })
}

/// Which kernel drives the mutation step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationMode {
    /// `M_{n+1}` of the deterministic reference flow.
    Theoretical,
    /// Metropolis kernel at the realized inverse temperature `beta^N_{n+1}`.
    Adaptive,
}

/// Number of Metropolis moves per mutation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum McmcIterations {
    Fixed(u64),
    /// Smallest power with Dobrushin coefficient at most the target.
    TargetContraction(f64),
    /// Smallest power with `b_n g_n (1 + c_n) <= a`.
    Hypothesis(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveConfig {
    pub epsilon: f64,
    pub tol: f64,
    /// Cap on increments; `None` means `50 / osc(V)`.
    pub delta_max: Option<f64>,
    pub mutation: MutationMode,
    pub iterations: McmcIterations,
}

impl AdaptiveConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            tol: 1e-12,
            delta_max: None,
            mutation: MutationMode::Theoretical,
            iterations: McmcIterations::Fixed(1),
        }
    }

    pub fn with_iterations(mut self, iterations: McmcIterations) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_mutation(mut self, mutation: MutationMode) -> Self {
        self.mutation = mutation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol must be > 0"));
        }
        if let Some(d) = self.delta_max {
            if !(d > 0.0 && d.is_finite()) {
                return Err(invalid("delta_max must be finite and > 0"));
            }
        }
        match self.iterations {
            McmcIterations::Fixed(0) => Err(invalid("at least one MCMC iteration is required")),
            McmcIterations::TargetContraction(b) if !(b > 0.0 && b < 1.0) => Err(invalid("target contraction must lie in (0, 1)")),
            McmcIterations::Hypothesis(a) if !(a > 0.0 && a < 1.0) => Err(invalid("a must lie in (0, 1)")),
            _ => Ok(()),
        }
    }

    /// Effective increment cap for `problem`.
    pub fn delta_cap(&self, problem: &GibbsProblem) -> f64 {
        self.delta_max.unwrap_or_else(|| {
            let o = problem.osc();
            50.0 / if o > 0.0 { o } else { problem.v_max() }
        })
    }
}

/// Checks `V >= 0` everywhere and `m({V = 0}) = 0`.
pub fn check_problem(problem: &GibbsProblem) -> Result<()> {
    let v = problem.energy().values();
    if let Some(x) = v.iter().position(|&e| e < 0.0) {
        return Err(invalid(format!("energy at state {x} is negative; the adaptive scheme needs V >= 0")));
    }
    if let Some(x) = (0..v.len()).find(|&x| v[x] == 0.0 && problem.reference().weights()[x] > 0.0) {
        return Err(invalid(format!("reference measure charges state {x} where V = 0; shift V so that m(V = 0) = 0")));
    }
    Ok(())
}

/// `V_max e^{Delta V_max} / (epsilon eta(V))`.
pub fn perturbation_constant(v_max: f64, delta: f64, epsilon: f64, mean_energy: f64) -> f64 {
    v_max * (delta * v_max).exp() / (epsilon * mean_energy)
}

/// Smallest `m` with `beta(K^m) <= target`.
pub fn min_power_for_contraction(kernel: &KernelMatrix, target: f64) -> Result<u64> {
    if dobrushin(kernel) <= target {
        return Ok(1);
    }
    let mut lo = 1u64;
    let mut lo_k = kernel.clone();
    loop {
        if lo >= MAX_ADAPTIVE_ITERS {
            return Err(Error::BudgetExceeded { step: None, required: f64::INFINITY });
        }
        let hi_k = lo_k.compose(&lo_k)?;
        if dobrushin(&hi_k) <= target {
            let mut hi = 2 * lo;
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if dobrushin(&kernel.power(mid)) <= target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(hi);
        }
        lo *= 2;
        lo_k = hi_k;
    }
}

fn mutation_kernel(
    problem: &GibbsProblem,
    beta: f64,
    rule: McmcIterations,
    g: f64,
    c: f64,
    step: usize,
) -> Result<(KernelMatrix, u64)> {
    let k = metropolis_kernel(problem, beta)?;
    let target = match rule {
        McmcIterations::Fixed(m) => return Ok((k.power(m), m)),
        McmcIterations::TargetContraction(b) => b,
        McmcIterations::Hypothesis(a) => a / (g * (1.0 + c)),
    };
    let m = min_power_for_contraction(&k, target).map_err(|e| match e {
        Error::BudgetExceeded { required, .. } => Error::BudgetExceeded { step: Some(step), required },
        other => other,
    })?;
    Ok((k.power(m), m))
}

/// Deterministic schedule `Delta_{n+1} = kappa_{eta_n}(epsilon)` with its exact flow.
#[derive(Debug, Clone)]
pub struct AdaptiveReference {
    pub spec: FlowSpec,
    pub trace: FlowTrace,
    pub epsilon: f64,
    /// `beta_0 = 0, ..., beta_T`.
    pub betas: Vec<f64>,
    /// `Delta_1, ..., Delta_T`.
    pub deltas: Vec<f64>,
    /// `c_1, ..., c_T`.
    pub c: Vec<f64>,
    pub iterations: Vec<u64>,
    pub saturated: Vec<bool>,
}

impl AdaptiveReference {
    pub fn horizon(&self) -> usize {
        self.deltas.len()
    }

    /// `h_n = b_n g_n (1 + c_n)` for `n = 1..=T`.
    pub fn hypothesis_factors(&self) -> Vec<f64> {
        (0..self.horizon()).map(|i| self.trace.b[i] * self.trace.g[i] * (1.0 + self.c[i])).collect()
    }

    /// `e~_0 = 1`, `e~_{n+1} = 1 + h_{n+1} e~_n`.
    pub fn e_tilde(&self) -> Vec<f64> {
        let mut out = vec![1.0];
        for h in self.hypothesis_factors() {
            out.push(1.0 + h * out.last().expect("non-empty"));
        }
        out
    }

    /// `B_2 e~_n / sqrt N`, the L2 bound on `d_2(eta_n^N, eta_n)`.
    pub fn l2_bounds(&self, n_particles: usize) -> Result<Vec<f64>> {
        let b2 = bp_constant(2)?;
        let sq = (n_particles as f64).sqrt();
        Ok(self.e_tilde().into_iter().map(|e| b2 * e / sq).collect())
    }

    /// First step where `h_n > a`, with its value.
    pub fn hypothesis_failure(&self, a: f64) -> Option<(usize, f64)> {
        self.hypothesis_factors()
            .into_iter()
            .enumerate()
            .find(|(_, h)| *h > a)
            .map(|(i, h)| (i + 1, h))
    }
}

/// Builds the reference schedule from exact measures, starting at `eta_0 = m`.
pub fn theoretical_adaptive_flow(problem: &GibbsProblem, config: &AdaptiveConfig, horizon: usize) -> Result<AdaptiveReference> {
    config.validate()?;
    check_problem(problem)?;
    let v = problem.energy().values();
    let v_max = problem.v_max();
    let cap = config.delta_cap(problem);
    let mut eta = problem.reference().clone();
    let mut steps = Vec::with_capacity(horizon);
    let mut betas = vec![0.0];
    let (mut deltas, mut c, mut iterations, mut saturated) = (vec![], vec![], vec![], vec![]);
    for n in 1..=horizon {
        let curve = LambdaCurve::from_distribution(&eta, v)?;
        let sol = kappa_solve(&curve, config.epsilon, config.tol, cap)?;
        let potential = PotentialVector::exp_neg(sol.delta, v)?;
        let cn = perturbation_constant(v_max, sol.delta, config.epsilon, curve.mean_energy());
        let beta = betas.last().expect("non-empty") + sol.delta;
        let (kernel, m) = mutation_kernel(problem, beta, config.iterations, potential_ratio(&potential), cn, n)?;
        eta = fk_step(&eta, &potential, &kernel)?;
        betas.push(beta);
        deltas.push(sol.delta);
        c.push(cn);
        iterations.push(m);
        saturated.push(sol.saturated);
        steps.push(FlowStep { potential, kernel });
    }
    let spec = FlowSpec::new(problem.reference().clone(), steps)?;
    let trace = run_flow(&spec)?;
    Ok(AdaptiveReference {
        spec,
        trace,
        epsilon: config.epsilon,
        betas,
        deltas,
        c,
        iterations,
        saturated,
    })
}

/// Where `c_n` was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CSource {
    /// Exact reference measure and schedule.
    Oracle,
    /// Empirical surrogate from the ensemble.
    Empirical,
}

impl CSource {
    pub fn label(self) -> &'static str {
        match self {
            CSource::Oracle => "oracle",
            CSource::Empirical => "empirical",
        }
    }
}

/// One adaptive step.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveStep {
    pub n: usize,
    pub delta: f64,
    pub beta: f64,
    pub c: f64,
    pub c_source: CSource,
    pub kept_fraction: f64,
    pub saturated: bool,
    pub residual: f64,
    pub iterations: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdaptiveDiagnostics {
    pub steps: Vec<AdaptiveStep>,
}

/// Ensembles at times `0..=T` and per-step diagnostics.
#[derive(Debug, Clone)]
pub struct AdaptiveRun {
    pub ensembles: Vec<ParticleEnsemble<usize>>,
    pub diagnostics: AdaptiveDiagnostics,
}

impl AdaptiveRun {
    pub fn occupations(&self, dim: usize) -> Result<Vec<FiniteDistribution>> {
        self.ensembles.iter().map(|e| e.occupation(dim)).collect()
    }
}

/// Initial ensemble of `N` independent draws from `m`.
pub fn initial_ensemble(problem: &GibbsProblem, n_particles: usize, lineage: Lineage) -> Result<ParticleEnsemble<usize>> {
    if n_particles == 0 {
        return Err(invalid("population size N must be >= 1"));
    }
    let m = problem.reference();
    let states = map_indices(n_particles, |i| m.sample(&mut lineage.stream(0, Phase::Init, i as u64)));
    Ok(ParticleEnsemble { states, step: 0, log_gamma1: 0.0, lineage })
}

/// One selection/mutation step from `ens` at time `n` with inverse temperature `beta_n`.
pub fn adaptive_step(
    problem: &GibbsProblem,
    config: &AdaptiveConfig,
    ens: &ParticleEnsemble<usize>,
    beta: f64,
    reference: Option<&AdaptiveReference>,
) -> Result<(ParticleEnsemble<usize>, AdaptiveStep)> {
    let v = problem.energy().values();
    let n = ens.step + 1;
    let curve = LambdaCurve::from_states(&ens.states, v)?;
    let sol = kappa_solve(&curve, config.epsilon, config.tol, config.delta_cap(problem))?;
    let weights: Vec<f64> = ens.states.iter().map(|&x| (-sol.delta * v[x]).exp()).collect();
    let (selected, diag) = select_with_weights(ens, &weights, 1.0, n)?;
    let v_max = problem.v_max();
    let empirical_c = perturbation_constant(v_max, sol.delta, config.epsilon, curve.mean_energy());
    let beta_next = beta + sol.delta;
    let (next, c, c_source, iterations, beta_used) = match (config.mutation, reference) {
        (MutationMode::Theoretical, Some(r)) => {
            let step = r.spec.step(n)?;
            (mutate_finite(&selected, &step.kernel)?, r.c[n - 1], CSource::Oracle, r.iterations[n - 1], r.betas[n])
        }
        (MutationMode::Theoretical, None) => return Err(invalid("theoretical mutation needs a reference flow")),
        (MutationMode::Adaptive, _) => {
            let g = (sol.delta * problem.osc()).exp();
            let (kernel, m) = mutation_kernel(problem, beta_next, config.iterations, g, empirical_c, n)?;
            let c = reference.map_or((empirical_c, CSource::Empirical), |r| (r.c[n - 1], CSource::Oracle));
            (mutate_finite(&selected, &kernel)?, c.0, c.1, m, beta_next)
        }
    };
    Ok((
        next,
        AdaptiveStep {
            n,
            delta: sol.delta,
            beta: beta_used,
            c,
            c_source,
            kept_fraction: diag.kept_fraction,
            saturated: sol.saturated,
            residual: sol.residual,
            iterations,
        },
    ))
}

/// Runs `T` adaptive steps. Theoretical mutation builds the reference flow when none is given.
pub fn run_adaptive(
    problem: &GibbsProblem,
    config: &AdaptiveConfig,
    n_particles: usize,
    horizon: usize,
    lineage: Lineage,
    reference: Option<&AdaptiveReference>,
) -> Result<AdaptiveRun> {
    config.validate()?;
    check_problem(problem)?;
    let built;
    let reference = match (config.mutation, reference) {
        (MutationMode::Theoretical, None) => {
            built = theoretical_adaptive_flow(problem, config, horizon)?;
            Some(&built)
        }
        (_, r) => r,
    };
    if let Some(r) = reference {
        if r.horizon() < horizon {
            return Err(invalid(format!("reference horizon {} shorter than T = {horizon}", r.horizon())));
        }
    }
    let mut ens = initial_ensemble(problem, n_particles, lineage)?;
    let mut ensembles = vec![ens.clone()];
    let mut steps = Vec::with_capacity(horizon);
    let mut beta = 0.0;
    for _ in 0..horizon {
        let (next, step) = adaptive_step(problem, config, &ens, beta, reference)?;
        beta = match config.mutation {
            MutationMode::Theoretical => beta + step.delta,
            MutationMode::Adaptive => step.beta,
        };
        ens = next;
        ensembles.push(ens.clone());
        steps.push(step);
    }
    Ok(AdaptiveRun { ensembles, diagnostics: AdaptiveDiagnostics { steps } })
}

fn replicate_runs(
    problem: &GibbsProblem,
    config: &AdaptiveConfig,
    reference: &AdaptiveReference,
    n_particles: usize,
    horizon: usize,
    seed: u64,
    replicates: usize,
) -> Result<Vec<AdaptiveRun>> {
    if replicates == 0 {
        return Err(invalid("at least one replicate is required"));
    }
    map_indices(replicates, |r| {
        run_adaptive(problem, config, n_particles, horizon, Lineage::new(seed, r as u64), Some(reference))
            .map_err(|e| Error::Replicate { replicate: r as u64, source: Box::new(e) })
    })
    .into_iter()
    .collect()
}

fn deviation(a: &FiniteDistribution, b: &FiniteDistribution) -> Vec<f64> {
    a.weights().iter().zip(b.weights()).map(|(x, y)| x - y).collect()
}

fn theoretical(config: &AdaptiveConfig) -> AdaptiveConfig {
    config.clone().with_mutation(MutationMode::Theoretical)
}

/// Perturbation inequalities at one step `n -> n+1`, all `d_2` over the replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationStep {
    pub n: usize,
    pub c: f64,
    pub g: f64,
    pub b: f64,
    /// `d_2(eta^N_n, eta_n)`.
    pub d_eta: f64,
    /// `d_2(psi_H(eta^N_n), eta^N_n)`.
    pub d_psi_self: f64,
    /// `d_2(psi_H(eta^N_n), eta_n)`.
    pub d_psi: f64,
    /// `d_2(phi(psi_H(eta^N_n)), phi(eta_n))`.
    pub d_phi: f64,
    pub saturated_replicates: usize,
}

/// Slack for the solver tolerance entering `H^N`.
pub const PERTURBATION_SLACK: f64 = 1e-8;

impl PerturbationStep {
    /// `d_2(psi_H eta^N, eta^N) <= c d_2(eta^N, eta)`.
    pub fn reweighting_holds(&self) -> bool {
        self.d_psi_self <= self.c * self.d_eta + PERTURBATION_SLACK
    }

    /// `d_2(psi_H eta^N, eta) <= (1 + c) d_2(eta^N, eta)`.
    pub fn triangle_holds(&self) -> bool {
        self.d_psi <= (1.0 + self.c) * self.d_eta + PERTURBATION_SLACK
    }

    /// `d_2(phi mu, phi eta) <= g b d_2(mu, eta)`.
    pub fn contraction_holds(&self) -> bool {
        self.d_phi <= self.g * self.b * self.d_psi + PERTURBATION_SLACK
    }

    pub fn holds(&self) -> bool {
        self.reweighting_holds() && self.triangle_holds() && self.contraction_holds()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationReport {
    pub replicates: usize,
    pub n_particles: usize,
    pub exact_sup: bool,
    pub steps: Vec<PerturbationStep>,
}

impl PerturbationReport {
    pub fn holds(&self) -> bool {
        self.steps.iter().all(PerturbationStep::holds)
    }
}

/// Replicate check of the reweighting and contraction inequalities with exact constants.
pub fn perturbation_check(
    problem: &GibbsProblem,
    config: &AdaptiveConfig,
    n_particles: usize,
    horizon: usize,
    seed: u64,
    replicates: usize,
) -> Result<PerturbationReport> {
    let config = theoretical(config);
    let reference = theoretical_adaptive_flow(problem, &config, horizon)?;
    let runs = replicate_runs(problem, &config, &reference, n_particles, horizon, seed, replicates)?;
    let v = problem.energy().values();
    let d = problem.dim();
    let mut steps = Vec::with_capacity(horizon);
    let mut exact_sup = true;
    for n in 0..horizon {
        let eta = &reference.trace.etas[n];
        let fk = reference.spec.step(n + 1)?;
        let phi_eta = &reference.trace.etas[n + 1];
        let (mut dev_eta, mut dev_self, mut dev_psi, mut dev_phi) = (vec![], vec![], vec![], vec![]);
        let mut saturated = 0;
        for run in &runs {
            let hat = run.ensembles[n].occupation(d)?;
            let step = &run.diagnostics.steps[n];
            saturated += usize::from(step.saturated);
            let h = PotentialVector::exp_neg(step.delta - reference.deltas[n], v)?;
            let psi = bg_transform(&h, &hat)?;
            let phi = fk_step(&psi, &fk.potential, &fk.kernel)?;
            dev_eta.push(deviation(&hat, eta));
            dev_self.push(deviation(&psi, &hat));
            dev_psi.push(deviation(&psi, eta));
            dev_phi.push(deviation(&phi, phi_eta));
        }
        let sup = |devs: &[Vec<f64>]| d2_sup(devs);
        let (a, b, c, e) = (sup(&dev_eta)?, sup(&dev_self)?, sup(&dev_psi)?, sup(&dev_phi)?);
        exact_sup &= a.exact;
        steps.push(PerturbationStep {
            n,
            c: reference.c[n],
            g: reference.trace.g[n],
            b: reference.trace.b[n],
            d_eta: a.value,
            d_psi_self: b.value,
            d_psi: c.value,
            d_phi: e.value,
            saturated_replicates: saturated,
        });
    }
    Ok(PerturbationReport { replicates, n_particles, exact_sup, steps })
}

/// `d_2(eta_n^N, eta_n)` against `B_2 e~_n / sqrt N`.
#[derive(Debug, Clone, PartialEq)]
pub struct L2Point {
    pub n: usize,
    pub estimate: f64,
    pub bound: f64,
    pub exact_sup: bool,
}

impl L2Point {
    pub fn holds(&self) -> bool {
        self.estimate <= self.bound
    }
}

/// Replicate L2 error at every time `0..=T` against the exact-constant bound.
pub fn l2_error_check(
    problem: &GibbsProblem,
    config: &AdaptiveConfig,
    n_particles: usize,
    horizon: usize,
    seed: u64,
    replicates: usize,
) -> Result<Vec<L2Point>> {
    let config = theoretical(config);
    let reference = theoretical_adaptive_flow(problem, &config, horizon)?;
    let runs = replicate_runs(problem, &config, &reference, n_particles, horizon, seed, replicates)?;
    let bounds = reference.l2_bounds(n_particles)?;
    (0..=horizon)
        .map(|n| {
            let devs = runs
                .iter()
                .map(|r| Ok(deviation(&r.ensembles[n].occupation(problem.dim())?, &reference.trace.etas[n])))
                .collect::<Result<Vec<_>>>()?;
            let est = d2_sup(&devs)?;
            Ok(L2Point { n, estimate: est.value, bound: bounds[n], exact_sup: est.exact })
        })
        .collect()
}

/// Conditional one-step error from a frozen ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalStep {
    pub n: usize,
    pub estimate: f64,
    /// `B_2 / sqrt N`.
    pub bound: f64,
}

/// Draws `replicates` transitions from `frozen` and compares them to `phi^N(eta^N_n)`.
pub fn conditional_step_check(
    problem: &GibbsProblem,
    config: &AdaptiveConfig,
    reference: &AdaptiveReference,
    frozen: &ParticleEnsemble<usize>,
    seed: u64,
    replicates: usize,
) -> Result<ConditionalStep> {
    let config = theoretical(config);
    let d = problem.dim();
    let n = frozen.step;
    let hat = frozen.occupation(d)?;
    let curve = LambdaCurve::from_states(&frozen.states, problem.energy().values())?;
    let sol = kappa_solve(&curve, config.epsilon, config.tol, config.delta_cap(problem))?;
    let g_hat = PotentialVector::exp_neg(sol.delta, problem.energy().values())?;
    let target = fk_step(&hat, &g_hat, &reference.spec.step(n + 1)?.kernel)?;
    let beta = reference.betas[n];
    let devs = map_indices(replicates, |r| {
        let mut ens = frozen.clone();
        ens.lineage = Lineage::new(seed, r as u64);
        let (next, _) = adaptive_step(problem, &config, &ens, beta, Some(reference))?;
        Ok(deviation(&next.occupation(d)?, &target))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let n_particles = frozen.len() as f64;
    Ok(ConditionalStep {
        n,
        estimate: d2_sup(&devs)?.value,
        bound: bp_constant(2)? / n_particles.sqrt(),
    })
}

/// One exceedance comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationPoint {
    pub n_particles: usize,
    pub n: usize,
    /// `"tail"` for a deviation level `s`, `"radius"` for a confidence level `y`.
    pub kind: &'static str,
    pub parameter: f64,
    pub threshold: f64,
    /// Largest exceedance frequency over the test functions.
    pub frequency: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConcentrationOutcome {
    /// Hypothesis `b_n g_n (1 + c_n) <= a` fails at `step`.
    HypothesisUnmet { step: usize, value: f64, a: f64 },
    Compared(Vec<ConcentrationPoint>),
}

impl ConcentrationOutcome {
    pub fn holds(&self) -> bool {
        matches!(self, ConcentrationOutcome::Compared(p) if p.iter().all(|x| x.pass))
    }
}

/// Exceedance frequencies over replicates against both adaptive concentration bounds.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_concentration_check(
    problem: &GibbsProblem,
    config: &AdaptiveConfig,
    a: f64,
    n_grid: &[usize],
    horizon: usize,
    s_grid: &[f64],
    y_grid: &[f64],
    seed: u64,
    replicates: usize,
) -> Result<ConcentrationOutcome> {
    let config = theoretical(config);
    let reference = theoretical_adaptive_flow(problem, &config, horizon)?;
    if let Some((step, value)) = reference.hypothesis_failure(a) {
        return Ok(ConcentrationOutcome::HypothesisUnmet { step, value, a });
    }
    let d = problem.dim();
    let funcs = osc_dictionary(d);
    let mut points = Vec::new();
    for &np in n_grid {
        let runs = replicate_runs(problem, &config, &reference, np, horizon, seed ^ np as u64, replicates)?;
        for n in 1..=horizon {
            let eta = &reference.trace.etas[n];
            let devs = runs
                .iter()
                .map(|r| {
                    let hat = r.ensembles[n].occupation(d)?;
                    funcs.iter().map(|f| Ok((hat.expect(f)? - eta.expect(f)?).abs())).collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let freq = |t: f64| {
                (0..funcs.len())
                    .map(|j| devs.iter().filter(|row| row[j] >= t).count() as f64 / replicates as f64)
                    .fold(0.0, f64::max)
            };
            for &s in s_grid {
                let bound = adaptive_tail_probability(a, np as u64, s)?;
                let frequency = freq(s);
                points.push(ConcentrationPoint {
                    n_particles: np,
                    n,
                    kind: "tail",
                    parameter: s,
                    threshold: s,
                    frequency,
                    bound,
                    pass: frequency_within(frequency, bound, replicates),
                });
            }
            for &y in y_grid {
                let t = adaptive_deviation_radius(a, np as u64, y)?;
                let bound = (-y).exp();
                let frequency = freq(t);
                points.push(ConcentrationPoint {
                    n_particles: np,
                    n,
                    kind: "radius",
                    parameter: y,
                    threshold: t,
                    frequency,
                    bound,
                    pass: frequency_within(frequency, bound, replicates),
                });
            }
        }
    }
    Ok(ConcentrationOutcome::Compared(points))
}
