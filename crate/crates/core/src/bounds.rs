//! Closed-form constants and right-hand sides of the non-asymptotic error
//! bounds, plus the MCMC iteration tuning rules.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{invalid, Error, Result};

/// Largest iteration count representable by the tuning rule.
pub const MAX_MCMC_ITERS: f64 = 9.223_372_036_854_775_807e18;

fn check_a(a: f64) -> Result<()> {
    if !(a > 0.0 && a < 1.0) {
        return Err(invalid(format!("performance degree a must lie in (0,1), got {a}")));
    }
    Ok(())
}

fn check_nonneg(name: &str, x: f64) -> Result<()> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(invalid(format!("{name} must be finite and >= 0, got {x}")));
    }
    Ok(())
}

/// Ceiling that treats values within `1e-12` (relative) of an integer as that integer.
pub fn snapped_ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-12 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Moment constant `B_p` with `B_{2q}^{2q} = (2q)!/(2^q q!)` and
/// `B_{2q+1}^{2q+1} = (2q+1)!/(2^q q! sqrt(2q+1))`.
pub fn bp_constant(p: u32) -> Result<f64> {
    if p == 0 {
        return Err(invalid("B_p requires p >= 1"));
    }
    let q = f64::from(p / 2);
    let pf = f64::from(p);
    let ln_fact = |x: f64| libm::lgamma(x + 1.0);
    let mut log_pow = ln_fact(pf) - q * std::f64::consts::LN_2 - ln_fact(q);
    if p % 2 == 1 {
        log_pow -= 0.5 * pf.ln();
    }
    Ok((log_pow / pf).exp())
}

/// `h0(x) = 2(x + sqrt(x))`.
pub fn h0(x: f64) -> Result<f64> {
    check_nonneg("x", x)?;
    Ok(2.0 * (x + x.sqrt()))
}

/// `h1(x) = x/3 + sqrt(2x)`.
pub fn h1(x: f64) -> Result<f64> {
    check_nonneg("x", x)?;
    Ok(x / 3.0 + (2.0 * x).sqrt())
}

/// Performance degree `a`, potential bound `M` and population size `N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeParams {
    pub a: f64,
    pub m: f64,
    pub n_particles: u64,
}

impl RegimeParams {
    pub fn new(a: f64, m: f64, n_particles: u64) -> Result<Self> {
        check_a(a)?;
        if !(m >= 1.0 && m.is_finite()) {
            return Err(invalid(format!("M must be finite and >= 1, got {m}")));
        }
        if n_particles == 0 {
            return Err(invalid("N must be >= 1"));
        }
        Ok(Self { a, m, n_particles })
    }

    fn inv_sqrt_n(&self) -> f64 {
        1.0 / (self.n_particles as f64).sqrt()
    }
}

fn r_star_tail(a: f64, u: f64, inv_sqrt_n: f64) -> f64 {
    (8.0 / (1.0 - a * a).sqrt() + 18.0 * u * inv_sqrt_n).sqrt()
}

fn r_star_bounded_raw(a: f64, m: f64, inv_sqrt_n: f64) -> (f64, f64) {
    let s = (m + a) * (m + a);
    let tail = r_star_tail(a, s, inv_sqrt_n);
    (4.5 * s / (1.0 - a) + tail, 18.0 * s / (1.0 - a) + tail)
}

/// `(r1*, r2*)` for the bounded-potential regime.
pub fn r_star_bounded(params: &RegimeParams) -> (f64, f64) {
    r_star_bounded_raw(params.a, params.m, params.inv_sqrt_n())
}

/// `(r1*, r2*)` in the `N -> infinity` limit (the `1/sqrt(N)` term dropped).
pub fn r_star_bounded_limit(a: f64, m: f64) -> Result<(f64, f64)> {
    check_a(a)?;
    if !(m >= 1.0) {
        return Err(invalid(format!("M must be >= 1, got {m}")));
    }
    Ok(r_star_bounded_raw(a, m, 0.0))
}

/// `(r~1, r~2) = (8M(M+a)^2/(1-a), 4M/(1-a))`.
pub fn r_tilde_bounded(params: &RegimeParams) -> (f64, f64) {
    let RegimeParams { a, m, .. } = *params;
    (8.0 * m * (m + a) * (m + a) / (1.0 - a), 4.0 * m / (1.0 - a))
}

/// Potential-oscillation schedule `g_1, g_2, ...` for the decreasing regime.
///
/// Indices past the end reuse the last entry and indices below one reuse
/// `g_1`; both choices only enlarge the sums because the schedule is
/// non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct DecreasingSchedule {
    g: Vec<f64>,
}

impl DecreasingSchedule {
    pub fn new(g: Vec<f64>) -> Result<Self> {
        if g.is_empty() {
            return Err(invalid("g schedule must be non-empty"));
        }
        for (i, &v) in g.iter().enumerate() {
            if !(v >= 1.0 && v.is_finite()) {
                return Err(invalid(format!("g_{} = {v} must be finite and >= 1", i + 1)));
            }
            if i > 0 && v > g[i - 1] * (1.0 + 1e-12) {
                return Err(invalid(format!("g schedule increases at index {}", i + 1)));
            }
        }
        Ok(Self { g })
    }

    /// `g_k`, one-based.
    pub fn get(&self, k: i64) -> f64 {
        let idx = (k.max(1) as usize - 1).min(self.g.len() - 1);
        self.g[idx]
    }

    pub fn values(&self) -> &[f64] {
        &self.g
    }
}

/// `alpha = a / (1 - a)`.
pub fn alpha_of(a: f64) -> f64 {
    a / (1.0 - a)
}

/// Auxiliary sequences and concentration constants at time `n` for the decreasing regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecreasingConstants {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    pub r3_star: f64,
    pub r4_star: f64,
    pub r3_tilde: f64,
    pub r4_tilde: f64,
    pub r5_tilde: f64,
}

/// `u1(n) = (1-a) sum_{p>=0} g_{n-p+1}^{2(1+alpha)} a^p`, with the geometric
/// tail past `p = n` summed in closed form.
pub fn u1(schedule: &DecreasingSchedule, a: f64, n: usize) -> Result<f64> {
    check_a(a)?;
    let e = 2.0 * (1.0 + alpha_of(a));
    let n = n as i64;
    let mut sum = 0.0;
    let mut ap = 1.0;
    for p in 0..=n {
        sum += schedule.get(n - p + 1).powf(e) * ap;
        ap *= a;
    }
    sum += schedule.get(1).powf(e) * ap / (1.0 - a);
    Ok((1.0 - a) * sum)
}

/// `u2(n) = (1/n) sum_{p=1}^n g_p^{3+2 alpha}`.
pub fn u2(schedule: &DecreasingSchedule, a: f64, n: usize) -> Result<f64> {
    check_a(a)?;
    if n == 0 {
        return Err(invalid("u2 requires n >= 1"));
    }
    let e = 3.0 + 2.0 * alpha_of(a);
    Ok((1..=n as i64).map(|p| schedule.get(p).powf(e)).sum::<f64>() / n as f64)
}

/// `u3(n) = sqrt((1/n) sum_{p=0}^{n-1} g_{p+1}^2)`.
pub fn u3(schedule: &DecreasingSchedule, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("u3 requires n >= 1"));
    }
    Ok(((1..=n as i64).map(|p| schedule.get(p).powi(2)).sum::<f64>() / n as f64).sqrt())
}

/// `r~4 = (4/3) sum_{n>=0} g_{n+1} a^n`, tail past the schedule in closed form.
pub fn r4_tilde(schedule: &DecreasingSchedule, a: f64) -> Result<f64> {
    check_a(a)?;
    let len = schedule.values().len();
    let mut sum = 0.0;
    let mut an = 1.0;
    for &g in schedule.values() {
        sum += g * an;
        an *= a;
    }
    sum += schedule.get(len as i64) * an / (1.0 - a);
    Ok(4.0 / 3.0 * sum)
}

/// All decreasing-regime constants at time `n >= 1` for population size `N`.
pub fn r_star_decreasing(schedule: &DecreasingSchedule, a: f64, n_particles: u64, n: usize) -> Result<DecreasingConstants> {
    check_a(a)?;
    if n_particles == 0 {
        return Err(invalid("N must be >= 1"));
    }
    let u1 = u1(schedule, a, n)?;
    let u2 = u2(schedule, a, n)?;
    let u3 = u3(schedule, n)?;
    let tail = r_star_tail(a, u1, 1.0 / (n_particles as f64).sqrt());
    Ok(DecreasingConstants {
        u1,
        u2,
        u3,
        r3_star: 4.5 * u1 / (1.0 - a) + tail,
        r4_star: 18.0 * u1 / (1.0 - a) + tail,
        r3_tilde: 16.0 * u2 / (1.0 - a),
        r4_tilde: r4_tilde(schedule, a)?,
        r5_tilde: 4.0 * std::f64::consts::SQRT_2 * u3 / (1.0 - a),
    })
}

/// `(r3*(n), r4*(n))` alone; defined for every `n >= 0`.
pub fn r_star_decreasing_eta(schedule: &DecreasingSchedule, a: f64, n_particles: u64, n: usize) -> Result<(f64, f64)> {
    if n_particles == 0 {
        return Err(invalid("N must be >= 1"));
    }
    let u1 = u1(schedule, a, n)?;
    let tail = r_star_tail(a, u1, 1.0 / (n_particles as f64).sqrt());
    Ok((4.5 * u1 / (1.0 - a) + tail, 18.0 * u1 / (1.0 - a) + tail))
}

/// Largest admissible `sup b_p` in the bounded regime: `a / (a + M)`.
pub fn condition_bounded(g_sup: f64, a: f64) -> Result<f64> {
    check_a(a)?;
    if !(g_sup >= 1.0) {
        return Err(invalid(format!("g_sup must be >= 1, got {g_sup}")));
    }
    Ok(a / (a + g_sup))
}

/// Admissible `b_p` in the decreasing regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecreasingCondition {
    pub b_max: f64,
    /// Set when `g_p <= 1` and the limiting value `a` is returned.
    pub degenerate: bool,
}

/// `min((g^alpha - 1)/(g^{alpha+1} - 1), a / g^{alpha+1})`.
pub fn condition_decreasing(g_p: f64, a: f64) -> Result<DecreasingCondition> {
    check_a(a)?;
    if !g_p.is_finite() || g_p.is_nan() {
        return Err(invalid(format!("g_p must be finite, got {g_p}")));
    }
    if g_p <= 1.0 {
        return Ok(DecreasingCondition { b_max: a, degenerate: true });
    }
    let alpha = alpha_of(a);
    let lg = g_p.ln();
    let first = (alpha * lg).exp_m1() / ((alpha + 1.0) * lg).exp_m1();
    let second = a * (-(alpha + 1.0) * lg).exp();
    Ok(DecreasingCondition {
        b_max: first.min(second),
        degenerate: false,
    })
}

/// Increment regime for the iteration tuning rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TuningMode {
    /// Uniform increment bound `Delta`: `log((e^{Delta osc V} + a)/a)`.
    Bounded { max_increment: f64 },
    /// Current increment `Delta_p`: `osc V . Delta_p + log(1/a)`.
    Decreasing { increment: f64 },
}

/// Inputs of the MCMC iteration tuning rule.
///
/// `gap` multiplies `beta_p` in the exponent. It is the path energy-gap
/// constant of the proposal; passing `osc_v` here gives the coarser rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningInputs {
    pub beta: f64,
    pub delta: f64,
    pub osc_v: f64,
    pub gap: f64,
    pub a: f64,
    pub mode: TuningMode,
}

/// Raw real-valued lower bound on the MCMC iteration count.
pub fn mcmc_iters_lower_bound(t: &TuningInputs) -> Result<f64> {
    check_a(t.a)?;
    if !(t.delta > 0.0 && t.delta <= 1.0) {
        return Err(invalid(format!("delta must lie in (0,1], got {}", t.delta)));
    }
    check_nonneg("beta", t.beta)?;
    check_nonneg("osc_v", t.osc_v)?;
    check_nonneg("gap", t.gap)?;
    let log_term = match t.mode {
        TuningMode::Bounded { max_increment } => {
            check_nonneg("max_increment", max_increment)?;
            let m = (max_increment * t.osc_v).exp();
            ((m + t.a) / t.a).ln()
        }
        TuningMode::Decreasing { increment } => {
            check_nonneg("increment", increment)?;
            t.osc_v * increment - t.a.ln()
        }
    };
    Ok(log_term * (t.gap * t.beta).exp() / t.delta)
}

/// Smallest admissible `m_p` (at least one).
pub fn tune_mcmc_iters(t: &TuningInputs) -> Result<u64> {
    let raw = mcmc_iters_lower_bound(t)?;
    if !(raw <= MAX_MCMC_ITERS) {
        return Err(Error::BudgetExceeded { step: None, required: raw });
    }
    Ok((snapped_ceil(raw) as u64).max(1))
}

/// `sqrt(log(1/a) / (osc V . gap))`.
pub fn critical_delta_beta(a: f64, osc_v: f64, gap: f64) -> Result<f64> {
    check_a(a)?;
    if !(osc_v > 0.0 && gap > 0.0) {
        return Err(invalid("osc_v and gap must be positive"));
    }
    Ok((-a.ln() / (osc_v * gap)).sqrt())
}

/// `e^{-beta(eps - eps')} / m_{eps'}`.
pub fn gibbs_tail_bound(beta: f64, eps: f64, eps_prime: f64, m_eps_prime: f64) -> Result<f64> {
    check_nonneg("beta", beta)?;
    if !(eps_prime > 0.0 && eps_prime < eps) {
        return Err(invalid(format!("need 0 < eps' < eps, got eps'={eps_prime}, eps={eps}")));
    }
    if !(m_eps_prime > 0.0 && m_eps_prime <= 1.0 + 1e-12) {
        return Err(invalid(format!("m_eps' must lie in (0,1], got {m_eps_prime}")));
    }
    Ok((-beta * (eps - eps_prime)).exp() / m_eps_prime)
}

/// `(r N + r' y) / N^2`, the deviation radius of the `eta` concentration events.
pub fn eta_deviation_radius(r_first: f64, r_second: f64, n_particles: u64, y: f64) -> Result<f64> {
    check_nonneg("y", y)?;
    let n = n_particles as f64;
    Ok((r_first * n + r_second * y) / (n * n))
}

/// `r~1/N h0(y) + r~2 h1(y/(nN))`.
pub fn gamma_radius_bounded(params: &RegimeParams, n: usize, y: f64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("time index n must be >= 1"));
    }
    let (r1, r2) = r_tilde_bounded(params);
    let nn = params.n_particles as f64;
    Ok(r1 / nn * h0(y)? + r2 * h1(y / (n as f64 * nn))?)
}

/// `r~3 (y + sqrt y)/N + r~4 y/(nN) + r~5 sqrt(y/(nN))`.
pub fn gamma_radius_decreasing(c: &DecreasingConstants, n: usize, n_particles: u64, y: f64) -> Result<f64> {
    check_nonneg("y", y)?;
    if n == 0 {
        return Err(invalid("time index n must be >= 1"));
    }
    let nn = n_particles as f64;
    let ynn = y / (n as f64 * nn);
    Ok(c.r3_tilde * (y + y.sqrt()) / nn + c.r4_tilde * ynn + c.r5_tilde * ynn.sqrt())
}

/// Time-uniform `L^p` bound `B_p / (2(1-a) sqrt N)`.
pub fn lp_uniform_bound(p: u32, a: f64, n_particles: u64) -> Result<f64> {
    check_a(a)?;
    Ok(bp_constant(p)? / (2.0 * (1.0 - a) * (n_particles as f64).sqrt()))
}

/// `(B_p / sqrt N) . sum_k g_{k,n} b_{k,n}`.
pub fn lp_stability_bound(p: u32, stability_sum: f64, n_particles: u64) -> Result<f64> {
    check_nonneg("stability sum", stability_sum)?;
    Ok(bp_constant(p)? * stability_sum / (n_particles as f64).sqrt())
}

/// `P(|X| >= s) <= e^{1/2}(1-a) sqrt(N) s e^{-(1-a)^2 N s^2 / 2}`.
///
/// The exponential Markov step behind this bound needs `s >= 1/((1-a) sqrt N)`;
/// below that threshold the trivial bound `1` is returned.
pub fn adaptive_tail_probability(a: f64, n_particles: u64, s: f64) -> Result<f64> {
    check_a(a)?;
    check_nonneg("s", s)?;
    let sq = (n_particles as f64).sqrt();
    if s * (1.0 - a) * sq < 1.0 {
        return Ok(1.0);
    }
    let r1 = 0.5f64.exp() * (1.0 - a);
    let r2 = 0.5 * (1.0 - a) * (1.0 - a);
    Ok((r1 * sq * s * (-r2 * sq * sq * s * s).exp()).min(1.0))
}

/// Radius `2(1 + sqrt y)/((1-a) sqrt N)` exceeded with probability at most `e^{-y}`, `y >= 1`.
pub fn adaptive_deviation_radius(a: f64, n_particles: u64, y: f64) -> Result<f64> {
    check_a(a)?;
    if !(y >= 1.0 && y.is_finite()) {
        return Err(invalid(format!("y must be >= 1, got {y}")));
    }
    Ok(2.0 / (1.0 - a) * (1.0 + y.sqrt()) / (n_particles as f64).sqrt())
}

/// Named bound evaluation with its inputs, for text and CSV reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub name: String,
    pub formula: String,
    pub inputs: Vec<(String, f64)>,
    pub values: Vec<(String, f64)>,
}

impl BoundReport {
    pub fn new(name: impl Into<String>, formula: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            formula: formula.into(),
            inputs: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn input(mut self, key: &str, v: f64) -> Self {
        self.inputs.push((key.to_string(), v));
        self
    }

    pub fn value(mut self, key: &str, v: f64) -> Self {
        self.values.push((key.to_string(), v));
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.iter().chain(&self.inputs).find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    /// Flat `key=value` block, one pair per line.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name={}", self.name);
        let _ = writeln!(s, "formula={}", self.formula);
        for (k, v) in self.inputs.iter().chain(&self.values) {
            let _ = writeln!(s, "{k}={}", crate::harness::format_real(*v));
        }
        s
    }

    /// CSV with columns `name,kind,key,value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["name", "kind", "key", "value"])?;
        for (kind, list) in [("input", &self.inputs), ("value", &self.values)] {
            for (k, v) in list {
                out.write_record([self.name.as_str(), kind, k.as_str(), &crate::harness::format_real(*v)])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}
