//! Acceptance suite: one line per criterion, non-zero exit status if any fails.

use std::time::Instant;

use fkips::adaptive::{
    adaptive_concentration_check, kappa_solve, l2_error_check, run_adaptive, theoretical_adaptive_flow, AdaptiveConfig,
    ConcentrationOutcome, LambdaCurve, McmcIterations,
};
use fkips::bounds::{gibbs_tail_bound, lp_uniform_bound};
use fkips::estimators::d2_sup;
use fkips::generators::{bounded_flow, double_well_energy, random_flow, random_reversible_pair, seeded};
use fkips::harness::verify::CheckStatus;
use fkips::harness::{parse_config, run_experiment, verify_bounds, ExperimentConfig};
use fkips::ips::{run_ips, SelectionRule};
use fkips::isa::{gibbs_measure, gibbs_tail, metropolis_kernel, minorize, GibbsProblem};
use fkips::measure::{dobrushin, BoundedFunction, FiniteDistribution};
use fkips::measure::{KernelMatrix, PotentialVector};
use fkips::oracle::{
    check_semigroup_lemmas, run_flow, semigroup, FlowSpec, FlowStep, CHECK_OSC_RECURSION, CHECK_OSC_WEIGHTED,
};
use fkips::rng::Lineage;
use rand::Rng;

type Outcome = Result<String, String>;

/// Result of one criterion. `Unattainable` is reserved for an inequality that is
/// checked exactly and shown false by an explicit counterexample.
enum Verdict {
    Pass(String),
    Unattainable(String),
    Fail(String),
}

impl From<Outcome> for Verdict {
    fn from(o: Outcome) -> Self {
        match o {
            Ok(s) => Verdict::Pass(s),
            Err(s) => Verdict::Fail(s),
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

/// Unnormalized `gamma_n` by plain products `gamma_{n-1} diag(G_n) M_n`.
fn naive_gammas(spec: &FlowSpec) -> Vec<Vec<f64>> {
    let mut out = vec![spec.initial().weights().to_vec()];
    for step in spec.steps() {
        let prev = out.last().unwrap();
        let d = prev.len();
        let mut next = vec![0.0; d];
        for x in 0..d {
            let w = prev[x] * step.potential.values()[x];
            for (y, v) in next.iter_mut().enumerate() {
                *v += w * step.kernel.get(x, y);
            }
        }
        out.push(next);
    }
    out
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn oracle_identity() -> Outcome {
    let mut rng = seeded(101);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let dim = rng.random_range(2..=6);
        let horizon = rng.random_range(1..=8);
        let spec = random_flow(dim, horizon, &mut rng).map_err(e)?;
        let trace = run_flow(&spec).map_err(e)?;
        let gammas = naive_gammas(&spec);
        for n in 0..=horizon {
            let total: f64 = gammas[n].iter().sum();
            worst = worst.max(rel(trace.gamma1[n], total));
            for y in 0..dim {
                worst = worst.max((trace.etas[n].weights()[y] - gammas[n][y] / total).abs());
            }
            for p in 0..=n {
                let q = semigroup(&spec, p, n).map_err(e)?;
                let scale = q.log_scale.exp();
                for y in 0..dim {
                    let via_q: f64 = (0..dim)
                        .map(|x| gammas[p][x] * scale * q.potential.values()[x] * q.kernel.get(x, y))
                        .sum();
                    worst = worst.max((via_q - gammas[n][y]).abs() / total);
                }
            }
        }
    }
    ensure(worst <= 1e-10, || format!("worst relative error {worst:e}"))?;
    Ok(format!("200 flows, worst relative error {worst:.2e}"))
}

fn semigroup_lemmas() -> Verdict {
    match semigroup_lemma_scan() {
        Ok(v) => v,
        Err(msg) => Verdict::Fail(msg),
    }
}

fn semigroup_lemma_scan() -> Result<Verdict, String> {
    let mut rng = seeded(202);
    let mut other = f64::INFINITY;
    let mut weighted = f64::INFINITY;
    let mut additive = f64::INFINITY;
    let mut violating_flows = 0;
    for _ in 0..200 {
        let dim = rng.random_range(2..=8);
        let spec = random_flow(dim, rng.random_range(1..=6), &mut rng).map_err(e)?;
        let report = check_semigroup_lemmas(&spec).map_err(e)?;
        let flow_additive = report.min_slack_of(CHECK_OSC_RECURSION);
        if flow_additive < -1e-10 {
            violating_flows += 1;
        }
        additive = additive.min(flow_additive);
        weighted = weighted.min(report.min_slack_of(CHECK_OSC_WEIGHTED));
        for c in report.checks.iter().filter(|c| c.name != CHECK_OSC_RECURSION && c.name != CHECK_OSC_WEIGHTED) {
            other = other.min(c.slack());
        }
    }
    ensure(other >= -1e-10, || format!("b-product, gb-product, g-backward or kernel-potential slack {other:e}"))?;
    ensure(weighted >= -1e-10, || format!("weighted g-sum slack {weighted:e}"))?;
    let holding = format!(
        "b-product, gb-product, g-backward, kernel-potential hold (min slack {other:.2e}); weighted g-sum holds (min slack {weighted:.2e})"
    );
    if additive >= -1e-10 {
        return Ok(Verdict::Pass(format!("200 flows, every inequality holds; {holding}")));
    }
    let id = KernelMatrix::identity(2).map_err(e)?;
    let step = |g: Vec<f64>| -> Result<FlowStep, String> {
        Ok(FlowStep {
            potential: PotentialVector::new(g).map_err(e)?,
            kernel: id.clone(),
        })
    };
    let witness = FlowSpec::new(
        FiniteDistribution::new(vec![0.5, 0.5]).map_err(e)?,
        vec![step(vec![1.0, 2.0])?, step(vec![1.0, 3.0])?],
    )
    .map_err(e)?;
    let c = check_semigroup_lemmas(&witness)
        .map_err(e)?
        .checks
        .into_iter()
        .find(|c| c.name == CHECK_OSC_RECURSION && c.p == 0 && c.n == 2)
        .ok_or("missing witness row")?;
    ensure(c.lhs > c.rhs, || "witness does not violate the additive g-sum".into())?;
    Ok(Verdict::Unattainable(format!(
        "additive g-sum bound g_pn - 1 <= sum (g_k - 1) b_(p+1)..b_(k-1) violated on {violating_flows}/200 flows \
         (min slack {additive:.3}); exact witness: identity kernels, G_1 = (1, 2), G_2 = (1, 3) gives {} > {}; {holding}",
        c.lhs, c.rhs
    )))
}

fn unbiasedness() -> Outcome {
    let mut rng = seeded(303);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let spec = random_flow(3, 5, &mut rng).map_err(e)?;
        let exact = *run_flow(&spec).map_err(e)?.gamma1.last().unwrap();
        for np in [100, 1000] {
            let vals: Vec<f64> = (0..500)
                .map(|r| {
                    run_ips(&spec, np, Lineage::new(np as u64, r), &SelectionRule::MaxKeep, |_| {})
                        .map(|(ens, _)| ens.gamma1())
                })
                .collect::<Result<_, _>>()
                .map_err(e)?;
            let (mean, se) = fkips::estimators::mean_and_se(&vals);
            let z = (mean - exact).abs() / se;
            worst = worst.max(z);
        }
    }
    ensure(worst <= 4.0, || format!("largest |z| = {worst:.3}"))?;
    Ok(format!("5 flows x N in {{100, 1000}}, R = 500, largest |z| = {worst:.2}"))
}

fn l2_uniform() -> Outcome {
    let (a, m, np) = (0.5, 0.5f64.exp(), 400usize);
    let spec = bounded_flow(4, 30, a, m, 404).map_err(e)?;
    let trace = run_flow(&spec).map_err(e)?;
    let mut per_step: Vec<Vec<Vec<f64>>> = vec![Vec::new(); 31];
    for r in 0..500 {
        run_ips(&spec, np, Lineage::new(4, r), &SelectionRule::MaxKeep, |ens| {
            let occ = ens.occupation(4).unwrap();
            per_step[ens.step].push(occ.weights().iter().zip(trace.etas[ens.step].weights()).map(|(x, y)| x - y).collect());
        })
        .map_err(e)?;
    }
    let bound = lp_uniform_bound(2, a, np as u64).map_err(e)?;
    let mut worst: f64 = 0.0;
    for devs in &per_step {
        worst = worst.max(d2_sup(devs).map_err(e)?.value);
    }
    ensure(worst <= bound, || format!("max d_2 {worst:.4e} > bound {bound:.4e}"))?;
    Ok(format!("T = 30, max d_2 = {worst:.4e} <= {bound:.4e}"))
}

fn bounded_config(n: usize, r: usize, horizon: usize, seed: u64) -> ExperimentConfig {
    parse_config(&format!(
        "seed = {seed}\nn_particles = {n}\nhorizon = {horizon}\nreplicates = {r}\n\
         [problem]\nkind = \"bounded\"\ndim = 4\na = 0.5\nm = {m:?}\nflow_seed = 7\n\
         [checks]\nys = [1.0, 2.0, 4.0]\n",
        m = 0.5f64.exp()
    ))
    .expect("valid config")
}

fn decreasing_config(n: usize, r: usize, horizon: usize) -> ExperimentConfig {
    parse_config(&format!(
        "seed = 6\nn_particles = {n}\nhorizon = {horizon}\nreplicates = {r}\n\
         [problem]\nkind = \"decreasing\"\ndim = 4\na = 0.5\nflow_seed = 8\n\
         [checks]\nys = [1.0, 2.0, 4.0]\n"
    ))
    .expect("valid config")
}

fn summarize_rows(report: &fkips::harness::VerifyReport, names: &[&str]) -> Outcome {
    let mut count = 0;
    let mut worst_margin = f64::INFINITY;
    for name in names {
        for row in report.rows_named(name) {
            ensure(row.status == CheckStatus::Pass, || format!("{name} step {} {:?}: {:?}", row.step, row.parameter, row.status))?;
            count += 1;
            worst_margin = worst_margin.min(row.margin());
        }
    }
    ensure(count > 0, || format!("no rows for {names:?}"))?;
    Ok(format!("{count} rows pass, smallest margin {worst_margin:.3e}"))
}

fn eta_concentration() -> Outcome {
    let report = verify_bounds(&bounded_config(200, 2000, 10, 5)).map_err(e)?;
    summarize_rows(&report, &["eta-concentration"])
}

fn gamma_concentration() -> Outcome {
    let bounded = verify_bounds(&bounded_config(200, 2000, 10, 9)).map_err(e)?;
    let b = summarize_rows(&bounded, &["gamma-concentration+", "gamma-concentration-"])?;
    let decreasing = verify_bounds(&decreasing_config(200, 2000, 10)).map_err(e)?;
    let d = summarize_rows(&decreasing, &["gamma-concentration+", "gamma-concentration-"])?;
    Ok(format!("bounded: {b}; decreasing: {d}"))
}

fn metropolis_invariance() -> Outcome {
    let mut rng = seeded(707);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let dim = rng.random_range(2..=8);
        let (m, k) = random_reversible_pair(dim, &mut rng).map_err(e)?;
        let energy: Vec<f64> = (0..dim).map(|_| 3.0 * rng.random::<f64>()).collect();
        let p = GibbsProblem::new(BoundedFunction::new(energy).map_err(e)?, m, k).map_err(e)?;
        for beta in [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
            let mu = gibbs_measure(&p, beta).map_err(e)?;
            let pushed = mu.push(&metropolis_kernel(&p, beta).map_err(e)?).map_err(e)?;
            for (a, b) in pushed.weights().iter().zip(mu.weights()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    ensure(worst <= 1e-12, || format!("max entry error {worst:e}"))?;
    Ok(format!("50 problems x 7 betas, max entry error {worst:.2e}"))
}

fn dobrushin_annealing() -> Outcome {
    let mut rng = seeded(808);
    let mut problems = vec![
        (GibbsProblem::on_ring(double_well_energy()).map_err(e)?, 8),
        (GibbsProblem::on_ring(vec![0.0, 1.0, 0.5, 2.0]).map_err(e)?, 4),
    ];
    for _ in 0..10 {
        let dim = rng.random_range(3..=6);
        let (m, k) = random_reversible_pair(dim, &mut rng).map_err(e)?;
        let energy: Vec<f64> = (0..dim).map(|_| 2.0 * rng.random::<f64>()).collect();
        problems.push((GibbsProblem::new(BoundedFunction::new(energy).map_err(e)?, m, k).map_err(e)?, dim));
    }
    let mut checked = 0;
    let mut worst = f64::INFINITY;
    for (p, k0) in &problems {
        let cert = minorize(p, *k0).map_err(e)?;
        for beta in [0.0, 0.25, 0.5, 1.0, 2.0, 4.0] {
            let exact = dobrushin(&metropolis_kernel(p, beta).map_err(e)?.power(*k0 as u64));
            let bound = cert.dobrushin_bound(beta);
            ensure(exact <= bound + 1e-12, || format!("beta {beta}: {exact} > {bound}"))?;
            worst = worst.min(bound - exact);
            checked += 1;
        }
    }
    Ok(format!("{checked} (problem, beta) pairs, smallest margin {worst:.3e}"))
}

fn isa_config() -> ExperimentConfig {
    let energy = double_well_energy();
    parse_config(&format!(
        "seed = 12\nn_particles = 1000\nhorizon = 10\nreplicates = 200\n\
         [problem]\nkind = \"gibbs\"\nenergy = {energy:?}\n\
         [algorithm]\nkind = \"isa\"\nk0 = 8\na = 0.5\nlevel = 0.5\nlevel_prime = 0.25\n\
         [algorithm.schedule]\nkind = \"linear\"\nstep = 0.1\nmax_increment = 0.1\n\
         [checks]\nys = [2.0]\n"
    ))
    .expect("valid config")
}

fn gibbs_tail_and_isa() -> Outcome {
    let p = GibbsProblem::on_ring(double_well_energy()).map_err(e)?;
    let mut grid = 0;
    for beta in [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0] {
        for (eps, eps_p) in [(0.5, 0.25), (1.0, 0.5), (1.0, 0.1), (2.0, 1.0), (0.25, 0.1)] {
            let exact = gibbs_tail(&p, beta, eps).map_err(e)?;
            let bound = gibbs_tail_bound(beta, eps, eps_p, p.level_mass(eps_p)).map_err(e)?;
            ensure(exact <= bound, || format!("beta {beta} eps {eps}: {exact} > {bound}"))?;
            grid += 1;
        }
    }
    let report = verify_bounds(&isa_config()).map_err(e)?;
    ensure(report.rows_named("isa-composite").all(|r| r.status == CheckStatus::Pass), || {
        format!("{:?}", report.rows_named("isa-composite").find(|r| r.status != CheckStatus::Pass))
    })?;
    let tail = summarize_rows(&report, &["gibbs-tail"])?;
    let comp = summarize_rows(&report, &["isa-composite"])?;
    Ok(format!("{grid} tail grid points; ISA exact tails: {tail}; composite y = 2: {comp}"))
}

fn adaptive_solver() -> Outcome {
    let problems = [
        GibbsProblem::on_ring(vec![1.5, 0.5, 1.0, 2.0, 1.25, 0.75]).map_err(e)?,
        GibbsProblem::on_ring(double_well_energy().iter().map(|v| v + 0.5).collect()).map_err(e)?,
        GibbsProblem::on_complete_graph(vec![0.2, 1.0, 3.0, 0.7]).map_err(e)?,
    ];
    let mut worst_residual: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    let mut unsaturated = 0;
    for (i, p) in problems.iter().enumerate() {
        for eps in [0.2, 0.5, 0.8] {
            let cfg = AdaptiveConfig::new(eps).with_iterations(McmcIterations::Fixed(2));
            let reference = theoretical_adaptive_flow(p, &cfg, 12).map_err(e)?;
            for n in 0..12 {
                worst_ratio = worst_ratio.max((reference.trace.gamma1[n + 1] / reference.trace.gamma1[n] - eps).abs());
            }
            for r in 0..20 {
                let run = run_adaptive(p, &cfg, 200, 12, Lineage::new(i as u64, r), Some(&reference)).map_err(e)?;
                for (n, s) in run.diagnostics.steps.iter().enumerate() {
                    if s.saturated {
                        continue;
                    }
                    let curve = LambdaCurve::from_states(&run.ensembles[n].states, p.energy().values()).map_err(e)?;
                    worst_residual = worst_residual.max((curve.eval(s.delta) - eps).abs());
                    unsaturated += 1;
                }
            }
        }
    }
    let single = kappa_solve(
        &LambdaCurve::from_distribution(&FiniteDistribution::new(vec![0.5, 0.5]).map_err(e)?, &[1.0, 2.0]).map_err(e)?,
        0.5,
        1e-12,
        50.0,
    )
    .map_err(e)?;
    let root = -((5.0f64.sqrt() - 1.0) / 2.0).ln();
    ensure((single.delta - root).abs() < 1e-6, || format!("two-atom root {}", single.delta))?;
    ensure(worst_residual <= 1e-9, || format!("residual {worst_residual:e}"))?;
    ensure(worst_ratio <= 1e-8, || format!("gamma ratio error {worst_ratio:e}"))?;
    Ok(format!(
        "{unsaturated} unsaturated steps, max |lambda - eps| = {worst_residual:.2e}; max |gamma ratio - eps| = {worst_ratio:.2e}"
    ))
}

fn six_state() -> Result<GibbsProblem, String> {
    GibbsProblem::on_ring(vec![1.5, 0.5, 1.0, 2.0, 1.25, 0.75]).map_err(e)
}

fn theorem_l2() -> Outcome {
    let cfg = AdaptiveConfig::new(0.5).with_iterations(McmcIterations::Fixed(2));
    let points = l2_error_check(&six_state()?, &cfg, 400, 8, 1111, 500).map_err(e)?;
    let mut tightest = f64::INFINITY;
    for p in &points {
        ensure(p.exact_sup, || "inexact supremum".into())?;
        ensure(p.holds(), || format!("step {}: {:.4e} > {:.4e}", p.n, p.estimate, p.bound))?;
        tightest = tightest.min(p.bound / p.estimate.max(1e-300));
    }
    Ok(format!("T = 8, every step within bound, smallest bound/estimate ratio {tightest:.2}"))
}

fn corollary_concentration() -> Outcome {
    let p = GibbsProblem::on_ring(vec![1.0, 0.25, 0.75, 1.5]).map_err(e)?;
    let cfg = AdaptiveConfig::new(0.5).with_iterations(McmcIterations::Hypothesis(0.6));
    let s_grid = [0.0, 0.025, 0.05, 0.075, 0.1, 0.15, 0.2, 0.3];
    let y_grid = [1.0, 2.0, 4.0];
    let out = adaptive_concentration_check(&p, &cfg, 0.6, &[100, 400], 5, &s_grid, &y_grid, 1212, 2000).map_err(e)?;
    match out {
        ConcentrationOutcome::HypothesisUnmet { step, value, .. } => Err(format!("hypothesis fails at step {step}: {value}")),
        ConcentrationOutcome::Compared(points) => {
            if let Some(bad) = points.iter().find(|p| !p.pass) {
                return Err(format!("{bad:?}"));
            }
            let max_freq = points.iter().filter(|p| p.bound < 1.0).map(|p| p.frequency).fold(0.0, f64::max);
            Ok(format!("{} grid points pass, largest frequency against a non-trivial bound {max_freq:.4}", points.len()))
        }
    }
}

fn adaptive_config() -> ExperimentConfig {
    parse_config(
        "seed = 21\nn_particles = 150\nhorizon = 6\nreplicates = 12\n\
         [problem]\nkind = \"gibbs\"\nenergy = [1.5, 0.5, 1.0, 2.0, 1.25, 0.75]\n\
         [algorithm]\nkind = \"adaptive\"\nepsilon = 0.4\niterations = { fixed = 2 }\n",
    )
    .expect("valid config")
}

fn csv_bytes(cfg: &ExperimentConfig) -> Result<Vec<u8>, String> {
    let out = run_experiment(cfg).map_err(e)?;
    let mut bytes = out.raw_table().to_bytes().map_err(e)?;
    bytes.extend(out.summary_table().to_bytes().map_err(e)?);
    bytes.extend(out.diagnostics_table().to_bytes().map_err(e)?);
    Ok(bytes)
}

fn determinism() -> Outcome {
    let mut isa = isa_config();
    isa.replicates = 6;
    isa.n_particles = 300;
    let configs = [bounded_config(120, 16, 8, 3), isa, adaptive_config()];
    let mut total = 0;
    for cfg in &configs {
        let mut reference: Option<Vec<u8>> = None;
        for threads in [1, 2, 8, 8] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(e)?;
            let bytes = pool.install(|| csv_bytes(cfg))?;
            match &reference {
                None => reference = Some(bytes),
                Some(r) => ensure(*r == bytes, || format!("output differs with {threads} threads"))?,
            }
        }
        total += reference.map_or(0, |r| r.len());
    }
    Ok(format!("classic, ISA and adaptive configs byte-identical across 1, 2, 8 threads and repeated runs ({total} bytes)"))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 13] = [
        ("oracle identity", || oracle_identity().into()),
        ("semigroup lemmas", semigroup_lemmas),
        ("unbiasedness of gamma_T^N(1)", || unbiasedness().into()),
        ("uniform L2 bound", || l2_uniform().into()),
        ("eta concentration, bounded regime", || eta_concentration().into()),
        ("gamma concentration, both regimes", || gamma_concentration().into()),
        ("Metropolis invariance", || metropolis_invariance().into()),
        ("Dobrushin annealing bound", || dobrushin_annealing().into()),
        ("Gibbs tail and ISA composite bound", || gibbs_tail_and_isa().into()),
        ("adaptive increment solver", || adaptive_solver().into()),
        ("adaptive L2 bound with exact constants", || theorem_l2().into()),
        ("adaptive concentration under the hypothesis", || corollary_concentration().into()),
        ("determinism across thread counts", || determinism().into()),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut unattainable = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let verdict = std::panic::catch_unwind(run).unwrap_or_else(|_| Verdict::Fail("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let (label, detail) = match verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Unattainable(d) => {
                unattainable += 1;
                ("UNATTAINABLE", d)
            }
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{label} criterion {:>2} {name}: {detail} ({secs:.1}s)", i + 1);
    }
    println!("{failed} failed, {unattainable} unattainable as stated");
    if failed > 0 {
        std::process::exit(1);
    }
}
