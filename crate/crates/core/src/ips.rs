//! N-particle selection/mutation approximation of a Feynman-Kac flow.
//!
//! Selection keeps particle `i` in place with probability `eps . G(x_i)` and
//! otherwise redraws it from the `G`-weighted empirical measure. Mutation moves
//! each particle independently through the step's Markov kernel.

use std::sync::Arc;
use std::time::Duration;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::measure::{BoundedFunction, FiniteDistribution, KernelMatrix};
use crate::oracle::FlowSpec;
use crate::rng::{Lineage, Phase, StreamRng};

/// Evaluates `f(i)` for `i in 0..n`, in parallel when enabled, preserving order.
pub(crate) fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Draws a state from a probability row by inverse CDF.
pub fn sample_row(row: &[f64], rng: &mut StreamRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = j;
            if u < acc {
                return j;
            }
        }
    }
    last
}

impl KernelMatrix {
    /// One draw from `K(x, .)`.
    pub fn sample(&self, x: usize, rng: &mut StreamRng) -> usize {
        sample_row(self.row(x), rng)
    }
}

impl FiniteDistribution {
    pub fn sample(&self, rng: &mut StreamRng) -> usize {
        sample_row(self.weights(), rng)
    }
}

/// A Feynman-Kac model that particles can be run on.
///
/// Steps are indexed `n = 1..=horizon()`; `potential(n, .)` is `G_n` and
/// `mutate(n, .)` draws from `M_n`.
pub trait FeynmanKacModel: Sync {
    type State: Clone + Send + Sync;

    fn horizon(&self) -> usize;
    fn sample_initial(&self, rng: &mut StreamRng) -> Self::State;
    fn potential(&self, n: usize, x: &Self::State) -> f64;
    fn mutate(&self, n: usize, x: &Self::State, rng: &mut StreamRng) -> Self::State;
}

impl FeynmanKacModel for FlowSpec {
    type State = usize;

    fn horizon(&self) -> usize {
        FlowSpec::horizon(self)
    }

    fn sample_initial(&self, rng: &mut StreamRng) -> usize {
        self.initial().sample(rng)
    }

    fn potential(&self, n: usize, x: &usize) -> f64 {
        self.steps()[n - 1].potential.values()[*x]
    }

    fn mutate(&self, n: usize, x: &usize, rng: &mut StreamRng) -> usize {
        self.steps()[n - 1].kernel.sample(*x, rng)
    }
}

/// Deterministic map `(state, stream) -> state` acting as a Markov kernel on a general space.
pub struct SamplerKernel<S> {
    f: Arc<dyn Fn(&S, &mut StreamRng) -> S + Send + Sync>,
}

impl<S> Clone for SamplerKernel<S> {
    fn clone(&self) -> Self {
        Self { f: Arc::clone(&self.f) }
    }
}

impl<S> SamplerKernel<S> {
    pub fn new(f: impl Fn(&S, &mut StreamRng) -> S + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f) }
    }

    pub fn draw(&self, x: &S, rng: &mut StreamRng) -> S {
        (self.f)(x, rng)
    }
}

type InitFn<S> = Arc<dyn Fn(&mut StreamRng) -> S + Send + Sync>;
type PotentialFn<S> = Arc<dyn Fn(usize, &S) -> f64 + Send + Sync>;

/// Model on a general state space given by closures.
pub struct SamplerModel<S> {
    horizon: usize,
    initial: InitFn<S>,
    potential: PotentialFn<S>,
    kernels: Vec<SamplerKernel<S>>,
}

impl<S> SamplerModel<S> {
    /// `kernels[n - 1]` is `M_n`; the horizon is `kernels.len()`.
    pub fn new(
        initial: impl Fn(&mut StreamRng) -> S + Send + Sync + 'static,
        potential: impl Fn(usize, &S) -> f64 + Send + Sync + 'static,
        kernels: Vec<SamplerKernel<S>>,
    ) -> Self {
        Self {
            horizon: kernels.len(),
            initial: Arc::new(initial),
            potential: Arc::new(potential),
            kernels,
        }
    }
}

impl<S: Clone + Send + Sync> FeynmanKacModel for SamplerModel<S> {
    type State = S;

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn sample_initial(&self, rng: &mut StreamRng) -> S {
        (self.initial)(rng)
    }

    fn potential(&self, n: usize, x: &S) -> f64 {
        (self.potential)(n, x)
    }

    fn mutate(&self, n: usize, x: &S, rng: &mut StreamRng) -> S {
        self.kernels[n - 1].draw(x, rng)
    }
}

/// How the keep-probability constant `eps_n` is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum SelectionRule {
    /// `eps_n = 1 / max_i G(x_i)` over the current ensemble.
    MaxKeep,
    /// `eps_n = 0`: every particle is redrawn.
    Multinomial,
    /// Fixed `eps` with `eps . max_i G(x_i) <= 1`.
    Constant(f64),
    /// `eps_n` for step `n` at index `n - 1`.
    PerStep(Vec<f64>),
}

impl SelectionRule {
    fn epsilon(&self, step: usize, g_max: f64) -> Result<f64> {
        let eps = match self {
            SelectionRule::MaxKeep => return Ok(1.0 / g_max),
            SelectionRule::Multinomial => return Ok(0.0),
            SelectionRule::Constant(e) => *e,
            SelectionRule::PerStep(v) => *v
                .get(step - 1)
                .ok_or_else(|| invalid(format!("no eps given for step {step}")))?,
        };
        if !(eps >= 0.0) || eps * g_max > 1.0 + 1e-12 {
            return Err(invalid(format!(
                "eps = {eps} at step {step} violates 0 <= eps . max G <= 1 (max G = {g_max})"
            )));
        }
        Ok(eps)
    }
}

/// Particle states at time `step` and the running `log gamma_step^N(1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble<S> {
    pub states: Vec<S>,
    pub step: usize,
    pub log_gamma1: f64,
    pub lineage: Lineage,
}

impl<S> ParticleEnsemble<S> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `gamma_step^N(1)`.
    pub fn gamma1(&self) -> f64 {
        self.log_gamma1.exp()
    }
}

impl ParticleEnsemble<usize> {
    /// Empirical measure `eta^N` on `{0, .., dim-1}`.
    pub fn occupation(&self, dim: usize) -> Result<FiniteDistribution> {
        FiniteDistribution::empirical(dim, &self.states)
    }

    /// `eta^N(f)` for a function given by its table.
    pub fn estimate_table(&self, f: &BoundedFunction) -> Result<f64> {
        if let Some(&bad) = self.states.iter().find(|&&x| x >= f.dim()) {
            return Err(Error::DimensionMismatch { expected: f.dim(), got: bad + 1 });
        }
        Ok(estimate(self, |&x| f.values()[x]))
    }
}

/// `eta^N(f) = (1/N) sum_i f(x_i)`.
pub fn estimate<S>(ens: &ParticleEnsemble<S>, f: impl Fn(&S) -> f64) -> f64 {
    ens.states.iter().map(f).sum::<f64>() / ens.states.len() as f64
}

/// Per-selection summary.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    /// Step `n` whose potential `G_n` was used.
    pub step: usize,
    /// `eta_{n-1}^N(G_n)`.
    pub mean_potential: f64,
    /// Keep-probability constant actually used.
    pub epsilon: f64,
    /// Fraction of particles kept in place by the acceptance test.
    pub kept_fraction: f64,
    /// `(sum w)^2 / sum w^2`.
    pub ess: f64,
    /// `log gamma_n^N(1)` after the step.
    pub log_gamma1: f64,
    /// Zero on targets without a clock.
    pub wall_time: Duration,
}

/// Wall clock that reads zero on targets without one.
struct Stopwatch(#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))] std::time::Instant);

impl Stopwatch {
    fn start() -> Self {
        Stopwatch(
            #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
            std::time::Instant::now(),
        )
    }

    fn elapsed(&self) -> Duration {
        #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
        return self.0.elapsed();
        #[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
        return Duration::ZERO;
    }
}

pub fn init_ensemble<M: FeynmanKacModel>(model: &M, n_particles: usize, lineage: Lineage) -> Result<ParticleEnsemble<M::State>> {
    if n_particles == 0 {
        return Err(invalid("population size N must be >= 1"));
    }
    let states = map_indices(n_particles, |i| {
        let mut rng = lineage.stream(0, Phase::Init, i as u64);
        model.sample_initial(&mut rng)
    });
    Ok(ParticleEnsemble {
        states,
        step: 0,
        log_gamma1: 0.0,
        lineage,
    })
}

/// Selection with precomputed weights `w_i = G(x_i)` and keep-probabilities `eps . w_i`.
pub fn select_with_weights<S: Clone + Send + Sync>(
    ens: &ParticleEnsemble<S>,
    weights: &[f64],
    epsilon: f64,
    step: usize,
) -> Result<(ParticleEnsemble<S>, StepDiagnostics)> {
    let start = Stopwatch::start();
    let n = ens.len();
    if weights.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: weights.len() });
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(invalid(format!("potential value {w} is not finite and non-negative")));
    }
    let mut cumulative = Vec::with_capacity(n);
    let mut total = 0.0;
    let mut sq = 0.0;
    for &w in weights {
        total += w;
        sq += w * w;
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Extinction { step });
    }
    let lineage = ens.lineage;
    let draws = map_indices(n, |i| {
        let mut rng = lineage.stream(step as u64, Phase::Selection, i as u64);
        let u: f64 = rng.random();
        if u < epsilon * weights[i] {
            (ens.states[i].clone(), true)
        } else {
            let v = rng.random::<f64>() * total;
            let j = cumulative.partition_point(|&c| c <= v).min(n - 1);
            (ens.states[j].clone(), false)
        }
    });
    let kept = draws.iter().filter(|d| d.1).count();
    let mean = total / n as f64;
    let log_gamma1 = ens.log_gamma1 + mean.ln();
    let diag = StepDiagnostics {
        step,
        mean_potential: mean,
        epsilon,
        kept_fraction: kept as f64 / n as f64,
        ess: total * total / sq,
        log_gamma1,
        wall_time: start.elapsed(),
    };
    Ok((
        ParticleEnsemble {
            states: draws.into_iter().map(|d| d.0).collect(),
            step: ens.step,
            log_gamma1,
            lineage,
        },
        diag,
    ))
}

/// Selection with `G_{step+1}` of the model, where `step` is the ensemble's current time.
pub fn selection_step<M: FeynmanKacModel>(
    model: &M,
    ens: &ParticleEnsemble<M::State>,
    rule: &SelectionRule,
) -> Result<(ParticleEnsemble<M::State>, StepDiagnostics)> {
    let n = ens.step + 1;
    if n > model.horizon() {
        return Err(Error::IndexOutOfRange(format!("step {n} beyond horizon {}", model.horizon())));
    }
    let weights = map_indices(ens.len(), |i| model.potential(n, &ens.states[i]));
    let g_max = weights.iter().copied().fold(0.0, f64::max);
    if !(g_max > 0.0) {
        return Err(Error::Extinction { step: n });
    }
    let eps = rule.epsilon(n, g_max)?;
    select_with_weights(ens, &weights, eps, n)
}

/// Moves every particle with `draw`, advancing the ensemble time by one.
pub fn mutate_with<S: Clone + Send + Sync>(
    ens: &ParticleEnsemble<S>,
    draw: impl Fn(&S, &mut StreamRng) -> S + Sync + Send,
) -> ParticleEnsemble<S> {
    let step = ens.step + 1;
    let lineage = ens.lineage;
    let states = map_indices(ens.len(), |i| {
        let mut rng = lineage.stream(step as u64, Phase::Mutation, i as u64);
        draw(&ens.states[i], &mut rng)
    });
    ParticleEnsemble {
        states,
        step,
        log_gamma1: ens.log_gamma1,
        lineage,
    }
}

/// Mutation through `M_{step+1}` of the model.
pub fn mutation_step<M: FeynmanKacModel>(model: &M, ens: &ParticleEnsemble<M::State>) -> Result<ParticleEnsemble<M::State>> {
    let n = ens.step + 1;
    if n > model.horizon() {
        return Err(Error::IndexOutOfRange(format!("step {n} beyond horizon {}", model.horizon())));
    }
    Ok(mutate_with(ens, |x, rng| model.mutate(n, x, rng)))
}

/// Mutation of a finite-state ensemble through an explicit kernel.
pub fn mutate_finite(ens: &ParticleEnsemble<usize>, kernel: &KernelMatrix) -> Result<ParticleEnsemble<usize>> {
    if let Some(&bad) = ens.states.iter().find(|&&x| x >= kernel.dim()) {
        return Err(Error::DimensionMismatch { expected: kernel.dim(), got: bad + 1 });
    }
    Ok(mutate_with(ens, |&x, rng| kernel.sample(x, rng)))
}

/// Runs the full algorithm; `observer` sees the ensemble at every time `0..=T`.
pub fn run_ips<M: FeynmanKacModel>(
    model: &M,
    n_particles: usize,
    lineage: Lineage,
    rule: &SelectionRule,
    mut observer: impl FnMut(&ParticleEnsemble<M::State>),
) -> Result<(ParticleEnsemble<M::State>, Vec<StepDiagnostics>)> {
    let mut ens = init_ensemble(model, n_particles, lineage)?;
    observer(&ens);
    let mut diags = Vec::with_capacity(model.horizon());
    for _ in 0..model.horizon() {
        let (selected, diag) = selection_step(model, &ens, rule)?;
        ens = mutation_step(model, &selected)?;
        diags.push(diag);
        observer(&ens);
    }
    Ok((ens, diags))
}

/// Same as [`run_ips`] but keeps every intermediate ensemble.
pub fn run_ips_trajectory<M: FeynmanKacModel>(
    model: &M,
    n_particles: usize,
    lineage: Lineage,
    rule: &SelectionRule,
) -> Result<(Vec<ParticleEnsemble<M::State>>, Vec<StepDiagnostics>)> {
    let mut all = Vec::with_capacity(model.horizon() + 1);
    let (_, diags) = run_ips(model, n_particles, lineage, rule, |e| all.push(e.clone()))?;
    Ok((all, diags))
}
