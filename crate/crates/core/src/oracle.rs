//! Exact Feynman-Kac flows on finite state spaces.
//!
//! The flow is `eta_n = psi_{G_n}(eta_{n-1}) . M_n` with normalizing constants
//! `gamma_n(1) = prod_p eta_{p-1}(G_p)`. The semigroup `Q_{p,n}` is built as a
//! product of `diag(G_k) M_k` factors, each rescaled by its largest entry so
//! that long annealing products do not underflow; the discarded scale is
//! tracked in log space.

use crate::error::{invalid, Error, Result};
use crate::measure::{bg_transform, dobrushin, potential_ratio, FiniteDistribution, KernelMatrix, PotentialVector};

/// Largest state space the exact oracle accepts.
pub const MAX_ORACLE_DIM: usize = 4096;
/// Longest horizon the exact oracle accepts.
pub const MAX_ORACLE_STEPS: usize = 10_000;

/// One `(G_n, M_n)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowStep {
    pub potential: PotentialVector,
    pub kernel: KernelMatrix,
}

/// Initial law and the time-indexed potentials and kernels, `n = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    initial: FiniteDistribution,
    steps: Vec<FlowStep>,
}

impl FlowSpec {
    pub fn new(initial: FiniteDistribution, steps: Vec<FlowStep>) -> Result<Self> {
        let d = initial.dim();
        if d > MAX_ORACLE_DIM {
            return Err(Error::OracleLimit(format!("dimension {d} > {MAX_ORACLE_DIM}")));
        }
        if steps.len() > MAX_ORACLE_STEPS {
            return Err(Error::OracleLimit(format!("horizon {} > {MAX_ORACLE_STEPS}", steps.len())));
        }
        for s in &steps {
            for got in [s.potential.dim(), s.kernel.dim()] {
                if got != d {
                    return Err(Error::DimensionMismatch { expected: d, got });
                }
            }
        }
        Ok(Self { initial, steps })
    }

    pub fn dim(&self) -> usize {
        self.initial.dim()
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn initial(&self) -> &FiniteDistribution {
        &self.initial
    }

    pub fn steps(&self) -> &[FlowStep] {
        &self.steps
    }

    /// Step `n` in `1..=T`.
    pub fn step(&self, n: usize) -> Result<&FlowStep> {
        if n == 0 || n > self.horizon() {
            return Err(Error::IndexOutOfRange(format!("step {n} outside 1..={}", self.horizon())));
        }
        Ok(&self.steps[n - 1])
    }

    /// Same flow truncated to the first `t` steps.
    pub fn truncated(&self, t: usize) -> FlowSpec {
        FlowSpec {
            initial: self.initial.clone(),
            steps: self.steps[..t.min(self.horizon())].to_vec(),
        }
    }
}

/// Exact trajectory of a flow.
#[derive(Debug, Clone)]
pub struct FlowTrace {
    /// `eta_0 ..= eta_T`.
    pub etas: Vec<FiniteDistribution>,
    /// `gamma_0(1) ..= gamma_T(1)`.
    pub gamma1: Vec<f64>,
    /// `log gamma_n(1)`, accurate even when `gamma1` underflows.
    pub log_gamma1: Vec<f64>,
    /// `g_n` for `n = 1..=T` (index `n - 1`).
    pub g: Vec<f64>,
    /// `b_n = beta(M_n)` for `n = 1..=T` (index `n - 1`).
    pub b: Vec<f64>,
}

/// `phi(mu) = psi_G(mu) . M`.
pub fn fk_step(mu: &FiniteDistribution, potential: &PotentialVector, kernel: &KernelMatrix) -> Result<FiniteDistribution> {
    bg_transform(potential, mu)?.push(kernel)
}

pub fn run_flow(spec: &FlowSpec) -> Result<FlowTrace> {
    let t = spec.horizon();
    let mut etas = Vec::with_capacity(t + 1);
    let mut log_gamma1 = Vec::with_capacity(t + 1);
    etas.push(spec.initial.clone());
    log_gamma1.push(0.0);
    for step in &spec.steps {
        let prev = etas.last().expect("eta_0 present");
        let mean_g = prev.expect(step.potential.values())?;
        let next = fk_step(prev, &step.potential, &step.kernel)?;
        log_gamma1.push(log_gamma1.last().expect("non-empty") + mean_g.ln());
        etas.push(next);
    }
    Ok(FlowTrace {
        gamma1: log_gamma1.iter().map(|l| l.exp()).collect(),
        log_gamma1,
        etas,
        g: spec.steps.iter().map(|s| potential_ratio(&s.potential)).collect(),
        b: spec.steps.iter().map(|s| dobrushin(&s.kernel)).collect(),
    })
}

/// `G_{p,n}`, `P_{p,n}` and their oscillation/contraction summaries.
#[derive(Debug, Clone)]
pub struct SemigroupQuantities {
    pub p: usize,
    pub n: usize,
    /// `G_{p,n} = Q_{p,n} 1`, divided by `exp(log_scale)`.
    pub potential: PotentialVector,
    /// `P_{p,n} f = Q_{p,n} f / Q_{p,n} 1`.
    pub kernel: KernelMatrix,
    pub g: f64,
    pub b: f64,
    /// Log of the factor removed from `Q_{p,n}` during construction.
    pub log_scale: f64,
}

/// Scaled unnormalized operator `Q_{p,n} = exp(log_scale) * data`.
#[derive(Debug, Clone)]
struct ScaledOperator {
    dim: usize,
    data: Vec<f64>,
    log_scale: f64,
}

impl ScaledOperator {
    fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data, log_scale: 0.0 }
    }

    /// `diag(G) . M . self`, rescaled so the largest entry is one.
    fn premultiply(&self, step: &FlowStep) -> Self {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        let g = step.potential.values();
        for i in 0..d {
            let out_row = &mut out[i * d..(i + 1) * d];
            for (k, &mik) in step.kernel.row(i).iter().enumerate() {
                if mik == 0.0 {
                    continue;
                }
                let w = g[i] * mik;
                for (o, q) in out_row.iter_mut().zip(&self.data[k * d..(k + 1) * d]) {
                    *o += w * q;
                }
            }
        }
        let max = out.iter().copied().fold(0.0, f64::max);
        out.iter_mut().for_each(|v| *v /= max);
        Self {
            dim: d,
            data: out,
            log_scale: self.log_scale + max.ln(),
        }
    }

    fn quantities(&self, p: usize, n: usize) -> Result<SemigroupQuantities> {
        let d = self.dim;
        let sums: Vec<f64> = self.data.chunks(d).map(|r| r.iter().sum()).collect();
        let min = sums.iter().copied().fold(f64::MAX, f64::min);
        if !(min >= 1e-300) {
            return Err(Error::RatioOverflow { p, n });
        }
        let potential = PotentialVector::new(sums.clone())?;
        let kernel = KernelMatrix::from_raw(
            d,
            self.data
                .chunks(d)
                .zip(&sums)
                .flat_map(|(r, s)| r.iter().map(move |v| v / s))
                .collect(),
        );
        Ok(SemigroupQuantities {
            p,
            n,
            g: potential_ratio(&potential),
            b: dobrushin(&kernel),
            potential,
            kernel,
            log_scale: self.log_scale,
        })
    }
}

fn check_pair(spec: &FlowSpec, p: usize, n: usize) -> Result<()> {
    if p > n || n > spec.horizon() {
        return Err(Error::IndexOutOfRange(format!(
            "pair (p={p}, n={n}) must satisfy p <= n <= {}",
            spec.horizon()
        )));
    }
    Ok(())
}

fn build_operator(spec: &FlowSpec, p: usize, n: usize) -> ScaledOperator {
    let mut q = ScaledOperator::identity(spec.dim());
    for k in ((p + 1)..=n).rev() {
        q = q.premultiply(&spec.steps[k - 1]);
    }
    q
}

/// Semigroup quantities for `p <= n`.
pub fn semigroup(spec: &FlowSpec, p: usize, n: usize) -> Result<SemigroupQuantities> {
    check_pair(spec, p, n)?;
    build_operator(spec, p, n).quantities(p, n)
}

/// `phi_{p,n}(mu)(f) = mu(Q_{p,n} f) / mu(Q_{p,n} 1)`.
pub fn apply_semigroup(spec: &FlowSpec, p: usize, n: usize, mu: &FiniteDistribution) -> Result<FiniteDistribution> {
    let q = semigroup(spec, p, n)?;
    bg_transform(&q.potential, mu)?.push(&q.kernel)
}

/// Every `(p, n)` pair with `0 <= p <= n <= T`.
#[derive(Debug, Clone)]
pub struct SemigroupTable {
    horizon: usize,
    /// `entries[n][p]`.
    entries: Vec<Vec<SemigroupQuantities>>,
}

impl SemigroupTable {
    pub fn new(spec: &FlowSpec) -> Result<Self> {
        let horizon = spec.horizon();
        let mut entries = Vec::with_capacity(horizon + 1);
        for n in 0..=horizon {
            let mut row = vec![None; n + 1];
            let mut q = ScaledOperator::identity(spec.dim());
            row[n] = Some(q.quantities(n, n)?);
            for p in (0..n).rev() {
                q = q.premultiply(&spec.steps[p]);
                row[p] = Some(q.quantities(p, n)?);
            }
            entries.push(row.into_iter().map(|e| e.expect("filled")).collect());
        }
        Ok(Self { horizon, entries })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn get(&self, p: usize, n: usize) -> &SemigroupQuantities {
        &self.entries[n][p]
    }

    pub fn g(&self, p: usize, n: usize) -> f64 {
        self.entries[n][p].g
    }

    pub fn b(&self, p: usize, n: usize) -> f64 {
        self.entries[n][p].b
    }

    /// `sum_{k=0}^{n} g_{k,n} b_{k,n}`.
    pub fn stability_sum(&self, n: usize) -> f64 {
        (0..=n).map(|k| self.g(k, n) * self.b(k, n)).sum()
    }
}

/// One inequality instance `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityCheck {
    pub name: &'static str,
    pub p: usize,
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
}

impl InequalityCheck {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// Outcome of the exact semigroup inequality checks.
#[derive(Debug, Clone, Default)]
pub struct LemmaReport {
    pub checks: Vec<InequalityCheck>,
}

impl LemmaReport {
    pub fn min_slack(&self) -> f64 {
        self.checks.iter().map(InequalityCheck::slack).fold(f64::INFINITY, f64::min)
    }

    pub fn min_slack_of(&self, name: &str) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.name == name)
            .map(InequalityCheck::slack)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.min_slack() >= -tol
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut names: Vec<_> = self.checks.iter().map(|c| c.name).collect();
        names.dedup();
        names
    }
}

pub const CHECK_OSC_RECURSION: &str = "g-sum";
pub const CHECK_OSC_WEIGHTED: &str = "g-sum-weighted";
pub const CHECK_DOBRUSHIN_PRODUCT: &str = "b-product";
pub const CHECK_GB_PRODUCT: &str = "gb-product";
pub const CHECK_BACKWARD_G: &str = "g-backward";
pub const CHECK_KERNEL_POTENTIAL: &str = "kernel-potential";

/// Exact evaluation of the semigroup estimates for every pair `p <= n`:
///
/// * `g_{p,n} - 1 <= sum_{k=p+1}^n (g_k - 1) b_{p+1} ... b_{k-1}`
/// * `g_{p,n} - 1 <= sum_{k=p+1}^n (g_k - 1) g_{p+1} b_{p+1} ... g_{k-1} b_{k-1}`
/// * `b_{p,n} <= prod_{k=p+1}^n b_k g_{k,n}`
/// * `g_{p,n} b_{p,n} <= prod_{k=p+1}^n b_k g_{k-1,n}`
/// * `g_{p-1,n} <= g_p (1 + b_p (g_{p,n} - 1))`
/// * `sup K.G(x)/K.G(y) <= 1 + beta(K)(g - 1)` for `K = M_p`, `G = G_{p,n}`
pub fn check_semigroup_lemmas(spec: &FlowSpec) -> Result<LemmaReport> {
    let table = SemigroupTable::new(spec)?;
    let trace_g: Vec<f64> = spec.steps.iter().map(|s| potential_ratio(&s.potential)).collect();
    let trace_b: Vec<f64> = spec.steps.iter().map(|s| dobrushin(&s.kernel)).collect();
    let g = |k: usize| trace_g[k - 1];
    let b = |k: usize| trace_b[k - 1];
    let mut report = LemmaReport::default();
    for n in 0..=spec.horizon() {
        for p in 0..=n {
            let (mut sum, mut weighted) = (0.0, 0.0);
            let (mut run, mut weighted_run) = (1.0, 1.0);
            for k in (p + 1)..=n {
                sum += (g(k) - 1.0) * run;
                weighted += (g(k) - 1.0) * weighted_run;
                run *= b(k);
                weighted_run *= g(k) * b(k);
            }
            report.checks.push(InequalityCheck {
                name: CHECK_OSC_RECURSION,
                p,
                n,
                lhs: table.g(p, n) - 1.0,
                rhs: sum,
            });
            report.checks.push(InequalityCheck {
                name: CHECK_OSC_WEIGHTED,
                p,
                n,
                lhs: table.g(p, n) - 1.0,
                rhs: weighted,
            });
            let prod_b: f64 = ((p + 1)..=n).map(|k| b(k) * table.g(k, n)).product();
            report.checks.push(InequalityCheck {
                name: CHECK_DOBRUSHIN_PRODUCT,
                p,
                n,
                lhs: table.b(p, n),
                rhs: prod_b,
            });
            let prod_gb: f64 = ((p + 1)..=n).map(|k| b(k) * table.g(k - 1, n)).product();
            report.checks.push(InequalityCheck {
                name: CHECK_GB_PRODUCT,
                p,
                n,
                lhs: table.g(p, n) * table.b(p, n),
                rhs: prod_gb,
            });
            if p >= 1 {
                report.checks.push(InequalityCheck {
                    name: CHECK_BACKWARD_G,
                    p,
                    n,
                    lhs: table.g(p - 1, n),
                    rhs: g(p) * (1.0 + b(p) * (table.g(p, n) - 1.0)),
                });
                let kg = check_lemma_kg(&spec.steps[p - 1].kernel, &table.get(p, n).potential)?;
                report.checks.push(InequalityCheck {
                    name: CHECK_KERNEL_POTENTIAL,
                    p,
                    n,
                    lhs: kg.lhs,
                    rhs: kg.rhs,
                });
            }
        }
    }
    Ok(report)
}

/// `sup_{x,y} K.G(x) / K.G(y) <= 1 + beta(K)(g - 1)` with `g = sup G/G`.
pub fn check_lemma_kg(kernel: &KernelMatrix, potential: &PotentialVector) -> Result<InequalityCheck> {
    if kernel.dim() != potential.dim() {
        return Err(Error::DimensionMismatch {
            expected: kernel.dim(),
            got: potential.dim(),
        });
    }
    let kg = kernel.apply(potential.values())?;
    let (lo, hi) = kg.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo <= 0.0 {
        return Err(invalid("K.G vanishes somewhere"));
    }
    Ok(InequalityCheck {
        name: CHECK_KERNEL_POTENTIAL,
        p: 0,
        n: 0,
        lhs: hi / lo,
        rhs: 1.0 + dobrushin(kernel) * (potential_ratio(potential) - 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(w: &[f64]) -> FiniteDistribution {
        FiniteDistribution::new(w.to_vec()).unwrap()
    }

    fn kernel(rows: &[&[f64]]) -> KernelMatrix {
        KernelMatrix::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn step(g: &[f64], k: KernelMatrix) -> FlowStep {
        FlowStep {
            potential: PotentialVector::new(g.to_vec()).unwrap(),
            kernel: k,
        }
    }

    #[test]
    fn fk_step_examples() {
        let mu = dist(&[0.3, 0.7]);
        let id = KernelMatrix::identity(2).unwrap();
        let out = fk_step(&mu, &PotentialVector::constant(2, 2.0).unwrap(), &id).unwrap();
        assert!((out.weights()[0] - 0.3).abs() < 1e-15);

        let out = fk_step(&dist(&[0.5, 0.5]), &PotentialVector::new(vec![1.0, 3.0]).unwrap(), &id).unwrap();
        assert!((out.weights()[1] - 0.75).abs() < 1e-15);

        let swap = kernel(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let out = fk_step(&dist(&[1.0, 0.0]), &PotentialVector::constant(2, 1.0).unwrap(), &swap).unwrap();
        assert_eq!(out.weights(), &[0.0, 1.0]);
    }

    #[test]
    fn run_flow_trivial_horizon() {
        let spec = FlowSpec::new(dist(&[0.4, 0.6]), vec![]).unwrap();
        let trace = run_flow(&spec).unwrap();
        assert_eq!(trace.etas.len(), 1);
        assert_eq!(trace.gamma1, vec![1.0]);
    }

    #[test]
    fn run_flow_constant_potential_gives_powers() {
        let k = kernel(&[&[0.6, 0.4], &[0.3, 0.7]]);
        let steps = (0..5).map(|_| step(&[1.5, 1.5], k.clone())).collect();
        let trace = run_flow(&FlowSpec::new(dist(&[0.5, 0.5]), steps).unwrap()).unwrap();
        for (n, g) in trace.gamma1.iter().enumerate() {
            assert!((g - 1.5f64.powi(n as i32)).abs() < 1e-12 * g);
        }
    }

    #[test]
    fn semigroup_diagonal_is_identity() {
        let k = kernel(&[&[0.6, 0.4], &[0.3, 0.7]]);
        let spec = FlowSpec::new(dist(&[0.5, 0.5]), vec![step(&[1.0, 2.0], k)]).unwrap();
        let q = semigroup(&spec, 1, 1).unwrap();
        assert_eq!(q.g, 1.0);
        assert_eq!(q.kernel, KernelMatrix::identity(2).unwrap());
        assert!(semigroup(&spec, 1, 0).is_err());
        assert!(semigroup(&spec, 0, 2).is_err());
    }

    #[test]
    fn semigroup_single_constant_kernel_step_has_zero_contraction() {
        let pi = dist(&[0.2, 0.5, 0.3]);
        let spec = FlowSpec::new(pi.clone(), vec![step(&[1.0, 2.0, 3.0], KernelMatrix::constant(&pi))]).unwrap();
        let q = semigroup(&spec, 0, 1).unwrap();
        assert!(q.b < 1e-15);
    }

    #[test]
    fn lemma_kg_trivial_cases() {
        let k = kernel(&[&[0.6, 0.4], &[0.3, 0.7]]);
        let c = check_lemma_kg(&k, &PotentialVector::constant(2, 3.0).unwrap()).unwrap();
        assert!((c.lhs - 1.0).abs() < 1e-15 && (c.rhs - 1.0).abs() < 1e-15);
        let g = PotentialVector::new(vec![1.0, 4.0]).unwrap();
        let c = check_lemma_kg(&KernelMatrix::identity(2).unwrap(), &g).unwrap();
        assert_eq!(c.lhs, 4.0);
        assert_eq!(c.rhs, 4.0);
    }

    #[test]
    fn lemmas_on_identity_and_constant_kernels() {
        let id = KernelMatrix::identity(3).unwrap();
        let steps = vec![step(&[1.0, 2.0, 3.0], id.clone()), step(&[2.0, 1.0, 1.5], id)];
        let report = check_semigroup_lemmas(&FlowSpec::new(dist(&[0.2, 0.3, 0.5]), steps).unwrap()).unwrap();
        assert!(report.holds(1e-12), "min slack {}", report.min_slack());

        let pi = dist(&[0.2, 0.3, 0.5]);
        let c = KernelMatrix::constant(&pi);
        let steps = vec![step(&[1.0, 2.0, 3.0], c.clone()), step(&[2.0, 1.0, 1.5], c)];
        let spec = FlowSpec::new(pi, steps).unwrap();
        let report = check_semigroup_lemmas(&spec).unwrap();
        assert!(report.holds(1e-12));
        assert!(semigroup(&spec, 0, 2).unwrap().b < 1e-15);
    }

    #[test]
    fn additive_g_sum_fails_on_aligned_identity_flow() {
        let id = KernelMatrix::identity(2).unwrap();
        let steps = vec![step(&[1.0, 2.0], id.clone()), step(&[1.0, 3.0], id)];
        let report = check_semigroup_lemmas(&FlowSpec::new(dist(&[0.5, 0.5]), steps).unwrap()).unwrap();
        let stated = report.checks.iter().find(|c| c.name == CHECK_OSC_RECURSION && c.p == 0 && c.n == 2).unwrap();
        assert_eq!((stated.lhs, stated.rhs), (5.0, 3.0));
        let weighted = report.checks.iter().find(|c| c.name == CHECK_OSC_WEIGHTED && c.p == 0 && c.n == 2).unwrap();
        assert_eq!((weighted.lhs, weighted.rhs), (5.0, 5.0));
        assert!(report.min_slack_of(CHECK_OSC_WEIGHTED) >= 0.0);
    }

    #[test]
    fn ratio_overflow_is_reported() {
        let id = KernelMatrix::identity(2).unwrap();
        let steps = (0..40).map(|_| step(&[1.0, 1e-20], id.clone())).collect();
        let spec = FlowSpec::new(dist(&[0.5, 0.5]), steps).unwrap();
        assert!(matches!(semigroup(&spec, 0, 40), Err(Error::RatioOverflow { p: 0, n: 40 })));
    }
}
