//! Interacting simulated annealing on Boltzmann-Gibbs measures
//! `mu_beta(dx) ∝ e^{-beta V(x)} m(dx)`.
//!
//! The annealing flow uses `G_n = e^{-(beta_n - beta_{n-1}) V}` and
//! `M_n = K_{beta_n}^{k0 m_n}`, where `K_beta` is the Metropolis kernel built
//! from a proposal `K` reversible with respect to `m`.

use std::sync::Arc;

use rand::Rng;

use crate::bounds::{
    eta_deviation_radius, gibbs_tail_bound, r_star_bounded, r_star_decreasing_eta, tune_mcmc_iters, DecreasingSchedule,
    RegimeParams, TuningInputs, TuningMode,
};
use crate::error::{invalid, Error, Result};
use crate::ips::{run_ips, SamplerKernel, SelectionRule};
use crate::measure::{BoundedFunction, FiniteDistribution, KernelMatrix, PotentialVector};
use crate::oracle::{run_flow, FlowSpec, FlowStep};
use crate::rng::{Lineage, StreamRng};

/// Tolerance for `m(x) K(x,y) = m(y) K(y,x)`.
pub const REVERSIBILITY_TOL: f64 = 1e-12;

/// Energy `V`, reference measure `m` and `m`-reversible proposal `K` on a finite space.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsProblem {
    energy: BoundedFunction,
    reference: FiniteDistribution,
    proposal: KernelMatrix,
}

impl GibbsProblem {
    pub fn new(energy: BoundedFunction, reference: FiniteDistribution, proposal: KernelMatrix) -> Result<Self> {
        let d = energy.dim();
        for got in [reference.dim(), proposal.dim()] {
            if got != d {
                return Err(Error::DimensionMismatch { expected: d, got });
            }
        }
        let defect = proposal.reversibility_defect(&reference)?;
        if defect > REVERSIBILITY_TOL {
            return Err(Error::NotReversible { defect });
        }
        Ok(Self {
            energy,
            reference,
            proposal,
        })
    }

    /// Uniform reference measure and a lazy nearest-neighbour ring proposal.
    pub fn on_ring(energy: Vec<f64>) -> Result<Self> {
        let d = energy.len();
        Self::new(
            BoundedFunction::new(energy)?,
            FiniteDistribution::uniform(d)?,
            crate::generators::lazy_ring(d, 1.0 / 3.0)?,
        )
    }

    /// Uniform reference measure and independent uniform proposals.
    pub fn on_complete_graph(energy: Vec<f64>) -> Result<Self> {
        let d = energy.len();
        let m = FiniteDistribution::uniform(d)?;
        Self::new(BoundedFunction::new(energy)?, m.clone(), KernelMatrix::constant(&m))
    }

    pub fn dim(&self) -> usize {
        self.energy.dim()
    }

    pub fn energy(&self) -> &BoundedFunction {
        &self.energy
    }

    pub fn reference(&self) -> &FiniteDistribution {
        &self.reference
    }

    pub fn proposal(&self) -> &KernelMatrix {
        &self.proposal
    }

    /// Essential infimum of `V` under `m`.
    pub fn v_min(&self) -> f64 {
        self.support_energies().fold(f64::INFINITY, f64::min)
    }

    pub fn v_max(&self) -> f64 {
        self.support_energies().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn osc(&self) -> f64 {
        self.v_max() - self.v_min()
    }

    fn support_energies(&self) -> impl Iterator<Item = f64> + '_ {
        self.energy
            .values()
            .iter()
            .zip(self.reference.weights())
            .filter(|(_, &w)| w > 0.0)
            .map(|(&v, _)| v)
    }

    /// Same problem with `V` shifted so that `V_min = 0`.
    pub fn shifted(&self) -> Result<Self> {
        let v0 = self.v_min();
        Ok(Self {
            energy: BoundedFunction::new(self.energy.values().iter().map(|v| v - v0).collect())?,
            reference: self.reference.clone(),
            proposal: self.proposal.clone(),
        })
    }

    /// `m(V <= V_min + eps')`.
    pub fn level_mass(&self, eps_prime: f64) -> f64 {
        let cut = self.v_min() + eps_prime;
        self.reference.mass_where(|x| self.energy.values()[x] <= cut)
    }

    /// Indicator of `{V >= V_min + eps}`.
    pub fn level_indicator(&self, eps: f64) -> Vec<f64> {
        let cut = self.v_min() + eps;
        self.energy.values().iter().map(|&v| if v >= cut { 1.0 } else { 0.0 }).collect()
    }
}

/// `K_beta(x,y) = K(x,y) min(1, e^{-beta(V(y)-V(x))})` off the diagonal, remainder on it.
pub fn metropolis_kernel(problem: &GibbsProblem, beta: f64) -> Result<KernelMatrix> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(invalid(format!("beta must be finite and >= 0, got {beta}")));
    }
    let d = problem.dim();
    let v = problem.energy.values();
    let rows = (0..d)
        .map(|x| {
            let mut row: Vec<f64> = (0..d)
                .map(|y| {
                    let k = problem.proposal.get(x, y);
                    if y == x || k == 0.0 {
                        0.0
                    } else {
                        k * (-beta * (v[y] - v[x])).exp().min(1.0)
                    }
                })
                .collect();
            let off: f64 = row.iter().sum();
            row[x] = (1.0 - off).max(0.0);
            row
        })
        .collect();
    KernelMatrix::new(rows)
}

/// `mu_beta`, computed with the minimum energy factored out.
pub fn gibbs_measure(problem: &GibbsProblem, beta: f64) -> Result<FiniteDistribution> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(invalid(format!("beta must be finite and >= 0, got {beta}")));
    }
    let v0 = problem.v_min();
    FiniteDistribution::from_unnormalized(
        problem
            .energy
            .values()
            .iter()
            .zip(problem.reference.weights())
            .map(|(&v, &m)| if m > 0.0 { m * (-beta * (v - v0)).exp() } else { 0.0 })
            .collect(),
    )
}

/// Exact `mu_beta(V >= V_min + eps)`.
pub fn gibbs_tail(problem: &GibbsProblem, beta: f64, eps: f64) -> Result<f64> {
    let mu = gibbs_measure(problem, beta)?;
    mu.expect(&problem.level_indicator(eps))
}

/// `K^{k0}(x, .) >= delta nu(.)` together with the path energy gap for `k0` moves.
#[derive(Debug, Clone, PartialEq)]
pub struct MinorizationCert {
    pub k0: usize,
    pub delta: f64,
    pub nu: FiniteDistribution,
    /// Largest cumulative uphill energy along any `k0`-step path of `K`.
    pub gap: f64,
}

impl MinorizationCert {
    /// `1 - delta e^{-beta gap}`, the Dobrushin bound for `K_beta^{k0}`.
    pub fn dobrushin_bound(&self, beta: f64) -> f64 {
        1.0 - self.delta * (-beta * self.gap).exp()
    }
}

/// Largest `sum_i (V(x_{i+1}) - V(x_i))^+` over `k0`-step paths with positive `K` probability.
pub fn path_energy_gap(proposal: &KernelMatrix, energy: &[f64], k0: usize) -> f64 {
    let d = proposal.dim();
    let mut best = vec![0.0f64; d];
    for _ in 0..k0 {
        let mut next = vec![f64::NEG_INFINITY; d];
        for (x, &bx) in best.iter().enumerate() {
            if bx == f64::NEG_INFINITY {
                continue;
            }
            for (y, &k) in proposal.row(x).iter().enumerate() {
                if k > 0.0 {
                    next[y] = next[y].max(bx + (energy[y] - energy[x]).max(0.0));
                }
            }
        }
        best = next;
    }
    best.into_iter().fold(0.0, f64::max)
}

/// Entrywise-minimum minorization of `K^{k0}`.
pub fn minorize(problem: &GibbsProblem, k0: usize) -> Result<MinorizationCert> {
    if k0 == 0 {
        return Err(invalid("k0 must be >= 1"));
    }
    let kk = problem.proposal.power(k0 as u64);
    let d = problem.dim();
    let col_min: Vec<f64> = (0..d)
        .map(|y| (0..d).map(|x| kk.get(x, y)).fold(f64::INFINITY, f64::min))
        .collect();
    let delta: f64 = col_min.iter().sum();
    if !(delta > 0.0) {
        return Err(Error::NoMinorization { k0 });
    }
    Ok(MinorizationCert {
        k0,
        delta: delta.min(1.0),
        nu: FiniteDistribution::from_unnormalized(col_min)?,
        gap: path_energy_gap(&problem.proposal, problem.energy.values(), k0),
    })
}

/// How the inverse-temperature increments are constrained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleMode {
    /// `sup_n Delta_n <= max_increment`.
    BoundedIncrement { max_increment: f64 },
    /// `Delta_n` non-increasing.
    DecreasingIncrement,
    /// Equal increments.
    ConstantStep,
}

/// Non-decreasing inverse temperatures `beta_0 <= beta_1 <= ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureSchedule {
    betas: Vec<f64>,
    mode: ScheduleMode,
}

impl TemperatureSchedule {
    pub fn new(betas: Vec<f64>, mode: ScheduleMode) -> Result<Self> {
        if betas.is_empty() {
            return Err(invalid("schedule needs beta_0"));
        }
        if !(betas[0] >= 0.0) || betas.iter().any(|b| !b.is_finite()) {
            return Err(invalid("inverse temperatures must be finite and beta_0 >= 0"));
        }
        let inc: Vec<f64> = betas.windows(2).map(|w| w[1] - w[0]).collect();
        if let Some(i) = inc.iter().position(|&d| d < 0.0) {
            return Err(invalid(format!("schedule decreases at step {}", i + 1)));
        }
        match mode {
            ScheduleMode::BoundedIncrement { max_increment } => {
                if let Some(i) = inc.iter().position(|&d| d > max_increment * (1.0 + 1e-12)) {
                    return Err(invalid(format!("increment at step {} exceeds {max_increment}", i + 1)));
                }
            }
            ScheduleMode::DecreasingIncrement => {
                if let Some(i) = inc.windows(2).position(|w| w[1] > w[0] * (1.0 + 1e-12) + 1e-15) {
                    return Err(invalid(format!("increment grows at step {}", i + 2)));
                }
            }
            ScheduleMode::ConstantStep => {
                if let Some(&first) = inc.first() {
                    if inc.iter().any(|&d| (d - first).abs() > 1e-12 * first.abs().max(1e-300)) {
                        return Err(invalid("constant-step schedule has unequal increments"));
                    }
                }
            }
        }
        Ok(Self { betas, mode })
    }

    /// `beta_n = beta_0 + n . step`.
    pub fn linear(beta0: f64, step: f64, horizon: usize) -> Result<Self> {
        Self::new((0..=horizon).map(|n| beta0 + step * n as f64).collect(), ScheduleMode::ConstantStep)
    }

    /// `beta_n = c . ln(1 + n)`.
    pub fn logarithmic(c: f64, horizon: usize) -> Result<Self> {
        Self::new((0..=horizon).map(|n| c * (n as f64).ln_1p()).collect(), ScheduleMode::DecreasingIncrement)
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn mode(&self) -> ScheduleMode {
        self.mode
    }

    pub fn horizon(&self) -> usize {
        self.betas.len() - 1
    }

    /// `Delta_n` for `n = 1..=T` at index `n - 1`.
    pub fn increments(&self) -> Vec<f64> {
        self.betas.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `sup_n Delta_n` (declared bound in bounded mode).
    pub fn max_increment(&self) -> f64 {
        match self.mode {
            ScheduleMode::BoundedIncrement { max_increment } => max_increment,
            _ => self.increments().into_iter().fold(0.0, f64::max),
        }
    }

    /// Bounded-increment or constant-step mode.
    pub fn is_bounded(&self) -> bool {
        !matches!(self.mode, ScheduleMode::DecreasingIncrement)
    }
}

/// Annealing flow and the iteration counts used for each step.
#[derive(Debug, Clone)]
pub struct IsaFlow {
    pub spec: FlowSpec,
    pub schedule: TemperatureSchedule,
    pub cert: MinorizationCert,
    pub a: f64,
    /// `m_p` for `p = 1..=T` at index `p - 1`.
    pub iterations: Vec<u64>,
}

impl IsaFlow {
    /// Number of Metropolis moves `k0 m_p` in step `p`.
    pub fn kernel_steps(&self, p: usize) -> u64 {
        self.cert.k0 as u64 * self.iterations[p - 1]
    }
}

/// Builds `G_n = e^{-Delta_n V}`, `M_n = K_{beta_n}^{k0 m_n}` with `m_n` from the tuning rule.
pub fn build_isa_flow(problem: &GibbsProblem, schedule: &TemperatureSchedule, cert: &MinorizationCert, a: f64) -> Result<IsaFlow> {
    let osc = problem.osc();
    let max_inc = schedule.max_increment();
    let mut steps = Vec::with_capacity(schedule.horizon());
    let mut iterations = Vec::with_capacity(schedule.horizon());
    for (i, &inc) in schedule.increments().iter().enumerate() {
        let p = i + 1;
        let beta = schedule.betas[p];
        let mode = if schedule.is_bounded() {
            TuningMode::Bounded { max_increment: max_inc }
        } else {
            TuningMode::Decreasing { increment: inc }
        };
        let m_p = tune_mcmc_iters(&TuningInputs {
            beta,
            delta: cert.delta,
            osc_v: osc,
            gap: cert.gap,
            a,
            mode,
        })
        .map_err(|e| match e {
            Error::BudgetExceeded { required, .. } => Error::BudgetExceeded { step: Some(p), required },
            other => other,
        })?;
        let total = m_p
            .checked_mul(cert.k0 as u64)
            .ok_or(Error::BudgetExceeded { step: Some(p), required: m_p as f64 * cert.k0 as f64 })?;
        let v0 = problem.v_min();
        let shifted: Vec<f64> = problem.energy.values().iter().map(|v| v - v0).collect();
        steps.push(FlowStep {
            potential: PotentialVector::exp_neg(inc, &shifted)?,
            kernel: metropolis_kernel(problem, beta)?.power(total),
        });
        iterations.push(m_p);
    }
    Ok(IsaFlow {
        spec: FlowSpec::new(gibbs_measure(problem, schedule.betas[0])?, steps)?,
        schedule: schedule.clone(),
        cert: cert.clone(),
        a,
        iterations,
    })
}

/// Per-time entries of an ISA optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct IsaStep {
    pub n: usize,
    pub beta: f64,
    /// Fraction of particles with `V >= V_min + eps`.
    pub proportion: f64,
    /// `mu_{beta_n}(V >= V_min + eps)`.
    pub exact_tail: f64,
    /// `e^{-beta_n (eps - eps')} / m_{eps'}`.
    pub tail_bound: f64,
    /// Tail bound plus the `(r N + r' y)/N^2` term, one entry per requested `y`.
    pub composite: Vec<f64>,
}

/// Outcome of [`optimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct IsaReport {
    pub epsilon: f64,
    pub eps_prime: f64,
    pub m_eps_prime: f64,
    pub ys: Vec<f64>,
    pub steps: Vec<IsaStep>,
}

impl IsaReport {
    pub fn terminal(&self) -> &IsaStep {
        self.steps.last().expect("time 0 always present")
    }
}

/// The `(r_i*, r_j*)` pair for the flow's regime at time `n`.
pub fn isa_eta_constants(flow: &IsaFlow, osc: f64, n_particles: u64, n: usize) -> Result<(f64, f64)> {
    if flow.schedule.is_bounded() {
        let m = (flow.schedule.max_increment() * osc).exp();
        Ok(r_star_bounded(&RegimeParams::new(flow.a, m, n_particles)?))
    } else {
        let g: Vec<f64> = flow.schedule.increments().iter().map(|d| (d * osc).exp()).collect();
        let g = if g.is_empty() { vec![1.0] } else { g };
        r_star_decreasing_eta(&DecreasingSchedule::new(g)?, flow.a, n_particles, n)
    }
}

/// Runs the particle approximation of an ISA flow and compares the fraction of
/// particles above level `V_min + eps` with the exact tail and the composite bound.
pub fn optimize(
    problem: &GibbsProblem,
    flow: &IsaFlow,
    n_particles: usize,
    lineage: Lineage,
    rule: &SelectionRule,
    epsilon: f64,
    eps_prime: f64,
    ys: &[f64],
) -> Result<IsaReport> {
    let m_eps_prime = problem.level_mass(eps_prime);
    gibbs_tail_bound(0.0, epsilon, eps_prime, m_eps_prime)?;
    let indicator = problem.level_indicator(epsilon);
    let trace = run_flow(&flow.spec)?;
    let mut proportions = Vec::with_capacity(flow.spec.horizon() + 1);
    run_ips(&flow.spec, n_particles, lineage, rule, |ens| {
        proportions.push(ens.states.iter().map(|&x| indicator[x]).sum::<f64>() / ens.len() as f64);
    })?;
    let osc = problem.osc();
    let steps = proportions
        .into_iter()
        .enumerate()
        .map(|(n, proportion)| {
            let beta = flow.schedule.betas[n];
            let tail_bound = gibbs_tail_bound(beta, epsilon, eps_prime, m_eps_prime)?;
            let (ri, rj) = isa_eta_constants(flow, osc, n_particles as u64, n)?;
            let composite = ys
                .iter()
                .map(|&y| Ok(tail_bound + eta_deviation_radius(ri, rj, n_particles as u64, y)?))
                .collect::<Result<Vec<_>>>()?;
            Ok(IsaStep {
                n,
                beta,
                proportion,
                exact_tail: trace.etas[n].expect(&indicator)?,
                tail_bound,
                composite,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IsaReport {
        epsilon,
        eps_prime,
        m_eps_prime,
        ys: ys.to_vec(),
        steps,
    })
}

/// Metropolis sampler on a general space: `iterations` moves of the
/// `beta`-annealed chain with proposal `proposal`, which the caller
/// guarantees to be reversible with respect to the reference measure.
pub fn metropolis_sampler<S: Clone + Send + Sync + 'static>(
    energy: Arc<dyn Fn(&S) -> f64 + Send + Sync>,
    proposal: SamplerKernel<S>,
    beta: f64,
    iterations: u64,
) -> SamplerKernel<S> {
    SamplerKernel::new(move |x: &S, rng: &mut StreamRng| {
        let mut cur = x.clone();
        let mut v_cur = energy(&cur);
        for _ in 0..iterations {
            let cand = proposal.draw(&cur, rng);
            let v_cand = energy(&cand);
            let u: f64 = rng.random();
            if u < (-beta * (v_cand - v_cur)).exp() {
                cur = cand;
                v_cur = v_cand;
            }
        }
        cur
    })
}

/// Fraction of states with energy at least `v_min + eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelProportion {
    pub value: f64,
    pub v_min_used: f64,
    /// Set when `v_min` is the best particle energy rather than the true minimum.
    pub surrogate: bool,
}

pub fn level_proportion<S>(states: &[S], energy: impl Fn(&S) -> f64, eps: f64, v_min: Option<f64>) -> LevelProportion {
    let values: Vec<f64> = states.iter().map(energy).collect();
    let (v0, surrogate) = match v_min {
        Some(v) => (v, false),
        None => (values.iter().copied().fold(f64::INFINITY, f64::min), true),
    };
    LevelProportion {
        value: values.iter().filter(|&&v| v >= v0 + eps).count() as f64 / values.len().max(1) as f64,
        v_min_used: v0,
        surrogate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{dobrushin, total_variation};
    use crate::oracle::fk_step;

    fn three_state() -> GibbsProblem {
        let m = FiniteDistribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        // m(x)K(x,y) symmetric
        let s = [[0.0, 0.05, 0.1], [0.05, 0.0, 0.15], [0.1, 0.15, 0.0]];
        let rows = (0..3)
            .map(|x| {
                let mut r: Vec<f64> = (0..3).map(|y| s[x][y] / m.weights()[x]).collect();
                r[x] = 1.0 - r.iter().sum::<f64>();
                r
            })
            .collect();
        GibbsProblem::new(BoundedFunction::new(vec![0.0, 1.0, 0.4]).unwrap(), m, KernelMatrix::new(rows).unwrap()).unwrap()
    }

    #[test]
    fn metropolis_examples() {
        let p = three_state();
        assert!(total_variation(&FiniteDistribution::uniform(3).unwrap(), &FiniteDistribution::uniform(3).unwrap()).unwrap() == 0.0);
        let k0 = metropolis_kernel(&p, 0.0).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                assert!((k0.get(x, y) - p.proposal().get(x, y)).abs() < 1e-15);
            }
        }
        let flat = GibbsProblem::new(BoundedFunction::new(vec![2.0; 3]).unwrap(), p.reference().clone(), p.proposal().clone()).unwrap();
        assert_eq!(metropolis_kernel(&flat, 7.0).unwrap(), *flat.proposal());
        let mu = gibbs_measure(&p, 2.0).unwrap();
        let pushed = mu.push(&metropolis_kernel(&p, 2.0).unwrap()).unwrap();
        for (a, b) in pushed.weights().iter().zip(mu.weights()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn non_reversible_proposal_rejected() {
        let k = KernelMatrix::new(vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let m = FiniteDistribution::uniform(3).unwrap();
        let e = GibbsProblem::new(BoundedFunction::new(vec![0.0, 1.0, 2.0]).unwrap(), m, k);
        assert!(matches!(e, Err(Error::NotReversible { .. })));
    }

    #[test]
    fn gibbs_examples() {
        let p = GibbsProblem::on_complete_graph(vec![0.0, 1.0]).unwrap();
        assert_eq!(gibbs_measure(&p, 0.0).unwrap(), *p.reference());
        let mu = gibbs_measure(&p, 2f64.ln()).unwrap();
        assert!((mu.weights()[0] - 2.0 / 3.0).abs() < 1e-15);
        let p = GibbsProblem::on_ring(vec![3.0, 1.0, 0.0, 2.0]).unwrap();
        assert!(gibbs_measure(&p, 50.0).unwrap().weights()[2] >= 1.0 - 1e-15);
    }

    #[test]
    fn minorization_examples() {
        let p = GibbsProblem::on_complete_graph(vec![0.0, 1.0, 3.0]).unwrap();
        let c = minorize(&p, 1).unwrap();
        assert!((c.delta - 1.0).abs() < 1e-15);
        let id = GibbsProblem::new(
            BoundedFunction::new(vec![0.0, 1.0]).unwrap(),
            FiniteDistribution::uniform(2).unwrap(),
            KernelMatrix::identity(2).unwrap(),
        )
        .unwrap();
        for k0 in 1..5 {
            assert!(matches!(minorize(&id, k0), Err(Error::NoMinorization { .. })));
        }
        let ring = GibbsProblem::on_ring(vec![0.0, 2.0, 1.0, 3.0]).unwrap();
        let c = minorize(&ring, 4).unwrap();
        assert!(c.delta > 0.0);
        for beta in [0.0, 0.25, 0.5, 1.0, 2.0, 4.0] {
            let exact = dobrushin(&metropolis_kernel(&ring, beta).unwrap().power(4));
            assert!(exact <= c.dobrushin_bound(beta) + 1e-12, "beta={beta}");
        }
    }

    #[test]
    fn path_gap_on_a_line() {
        let ring = GibbsProblem::on_ring(vec![0.0, 1.0, 2.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!(path_energy_gap(ring.proposal(), ring.energy().values(), 1), 1.0);
        assert_eq!(path_energy_gap(ring.proposal(), ring.energy().values(), 3), 3.0);
        assert_eq!(path_energy_gap(ring.proposal(), ring.energy().values(), 5), 4.0);
    }

    #[test]
    fn schedule_validation() {
        assert!(TemperatureSchedule::new(vec![0.0, 1.0, 0.5], ScheduleMode::ConstantStep).is_err());
        assert!(TemperatureSchedule::new(vec![0.0, 1.0, 3.0], ScheduleMode::BoundedIncrement { max_increment: 1.5 }).is_err());
        assert!(TemperatureSchedule::new(vec![0.0, 1.0, 3.0], ScheduleMode::DecreasingIncrement).is_err());
        let s = TemperatureSchedule::logarithmic(2.0, 10).unwrap();
        assert_eq!(s.horizon(), 10);
        assert!(TemperatureSchedule::linear(0.0, 0.3, 5).is_ok());
    }

    #[test]
    fn isa_flow_reproduces_gibbs_measures() {
        let p = three_state();
        let cert = minorize(&p, 1).unwrap();
        let sched = TemperatureSchedule::new(vec![0.0, 0.5, 1.5], ScheduleMode::BoundedIncrement { max_increment: 1.0 }).unwrap();
        let flow = build_isa_flow(&p, &sched, &cert, 0.5).unwrap();
        let out = fk_step(&gibbs_measure(&p, 0.0).unwrap(), &flow.spec.steps()[0].potential, &flow.spec.steps()[0].kernel).unwrap();
        let target = gibbs_measure(&p, 0.5).unwrap();
        for (a, b) in out.weights().iter().zip(target.weights()) {
            assert!((a - b).abs() < 1e-10);
        }
        let m = (1.0f64 * p.osc()).exp();
        for (n, s) in flow.spec.steps().iter().enumerate() {
            let g = crate::measure::potential_ratio(&s.potential);
            assert!(g <= m * (1.0 + 1e-12));
            assert!(dobrushin(&s.kernel) <= 0.5 / (0.5 + g) + 1e-12, "step {}", n + 1);
        }
        let flat = TemperatureSchedule::new(vec![1.0, 1.0], ScheduleMode::ConstantStep).unwrap();
        let f = build_isa_flow(&p, &flat, &cert, 0.5).unwrap();
        assert!(f.spec.steps()[0].potential.values().iter().all(|&g| g == 1.0));
    }

    #[test]
    fn constant_energy_has_no_tail() {
        let p = GibbsProblem::on_ring(vec![1.0; 5]).unwrap();
        let cert = minorize(&p, 4).unwrap();
        let sched = TemperatureSchedule::linear(0.0, 0.5, 3).unwrap();
        let flow = build_isa_flow(&p, &sched, &cert, 0.5).unwrap();
        let r = optimize(&p, &flow, 50, Lineage::new(1, 0), &SelectionRule::MaxKeep, 0.1, 0.05, &[2.0]).unwrap();
        assert!(r.steps.iter().all(|s| s.proportion == 0.0));
        assert_eq!(r.m_eps_prime, 1.0);
    }

    #[test]
    fn budget_overflow_names_step() {
        let p = GibbsProblem::on_ring(vec![0.0, 5.0, 0.0, 5.0]).unwrap();
        let cert = minorize(&p, 2).unwrap();
        let sched = TemperatureSchedule::linear(0.0, 4.0, 5).unwrap();
        match build_isa_flow(&p, &sched, &cert, 0.5) {
            Err(Error::BudgetExceeded { step: Some(s), .. }) => assert!(s >= 1),
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn sampler_level_proportion_flags_surrogate() {
        let states = vec![0.3, 1.2, -0.4];
        let lp = level_proportion(&states, |x| x * x, 0.5, None);
        assert!(lp.surrogate);
        assert_eq!(lp.v_min_used, 0.09);
        let energy: Arc<dyn Fn(&f64) -> f64 + Send + Sync> = Arc::new(|x: &f64| x * x);
        let step = metropolis_sampler(energy, SamplerKernel::new(|x: &f64, r: &mut StreamRng| x + r.random::<f64>() - 0.5), 1.0, 10);
        let mut rng = Lineage::new(0, 0).stream(0, crate::rng::Phase::Aux, 0);
        assert!(step.draw(&0.0, &mut rng).is_finite());
    }
}
