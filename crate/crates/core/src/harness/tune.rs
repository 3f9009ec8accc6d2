//! Bound calculators evaluated for a configuration.

use crate::bounds::{
    condition_bounded, critical_delta_beta, lp_stability_bound, lp_uniform_bound, mcmc_iters_lower_bound, r_star_bounded,
    r_star_decreasing, r_star_decreasing_eta, r_tilde_bounded, BoundReport, DecreasingSchedule, RegimeParams, TuningInputs,
    TuningMode,
};
use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::experiment::{exact_context, ExactContext};
use crate::harness::verify::{declared_regime, Regime};
use crate::oracle::SemigroupTable;

fn regime_reports(regime: &Regime, np: u64, horizon: usize) -> Result<Vec<BoundReport>> {
    let mut out = Vec::new();
    match regime {
        Regime::Bounded { a, m } => {
            let params = RegimeParams::new(*a, *m, np)?;
            let (r1, r2) = r_star_bounded(&params);
            let (t1, t2) = r_tilde_bounded(&params);
            out.push(
                BoundReport::new("bounded-regime", "r1*, r2*, r~1, r~2, b_p cap a/(a+M), uniform L2 bound B_2/(2(1-a)sqrt(N))")
                    .input("a", *a)
                    .input("M", *m)
                    .input("N", np as f64)
                    .value("r1_star", r1)
                    .value("r2_star", r2)
                    .value("r1_tilde", t1)
                    .value("r2_tilde", t2)
                    .value("b_cap", condition_bounded(*m, *a)?)
                    .value("l2_uniform", lp_uniform_bound(2, *a, np)?),
            );
        }
        Regime::Decreasing { a, g } => {
            let schedule = DecreasingSchedule::new(g.clone())?;
            for n in 1..=horizon {
                let c = r_star_decreasing(&schedule, *a, np, n)?;
                out.push(
                    BoundReport::new("decreasing-regime", "u1, u2, u3, r3*, r4*, r~3, r~4, r~5 at step n")
                        .input("a", *a)
                        .input("N", np as f64)
                        .input("n", n as f64)
                        .input("g_n", schedule.get(n as i64))
                        .value("u1", c.u1)
                        .value("u2", c.u2)
                        .value("u3", c.u3)
                        .value("r3_star", c.r3_star)
                        .value("r4_star", c.r4_star)
                        .value("r3_tilde", c.r3_tilde)
                        .value("r4_tilde", c.r4_tilde)
                        .value("r5_tilde", c.r5_tilde),
                );
            }
            let (r3, r4) = r_star_decreasing_eta(&schedule, *a, np, 0)?;
            out.push(
                BoundReport::new("decreasing-regime-initial", "r3*(0), r4*(0), uniform L2 bound")
                    .input("a", *a)
                    .input("N", np as f64)
                    .value("r3_star", r3)
                    .value("r4_star", r4)
                    .value("l2_uniform", lp_uniform_bound(2, *a, np)?),
            );
        }
    }
    Ok(out)
}

/// Every bound constant that applies to `cfg`, without running particles.
pub fn tune_reports(cfg: &ExperimentConfig) -> Result<Vec<BoundReport>> {
    let np = cfg.n_particles as u64;
    let mut out = Vec::new();
    match exact_context(cfg)? {
        ExactContext::Classic { spec, .. } => {
            let table = SemigroupTable::new(&spec)?;
            for n in 0..=spec.horizon() {
                let sum = table.stability_sum(n);
                out.push(
                    BoundReport::new("lp-stability", "B_2/sqrt(N) sum_k g_(k,n) b_(k,n)")
                        .input("n", n as f64)
                        .input("N", np as f64)
                        .value("stability_sum", sum)
                        .value("l2_bound", lp_stability_bound(2, sum, np)?),
                );
            }
            if let Some(regime) = declared_regime(cfg) {
                out.extend(regime_reports(&regime, np, spec.horizon())?);
            }
        }
        ExactContext::Isa { problem, flow, .. } => {
            let osc = problem.osc();
            let cert = &flow.cert;
            let mut report = BoundReport::new("isa-certificate", "minorization K^k0 >= delta nu, path gap, critical beta increment")
                .input("k0", cert.k0 as f64)
                .input("a", flow.a)
                .input("osc_v", osc)
                .value("delta", cert.delta)
                .value("gap", cert.gap);
            if osc > 0.0 && cert.gap > 0.0 {
                report = report
                    .value("critical_delta_beta", critical_delta_beta(flow.a, osc, cert.gap)?)
                    .value("critical_delta_beta_osc", critical_delta_beta(flow.a, osc, osc)?);
            }
            out.push(report);
            let bounded = flow.schedule.is_bounded();
            for (i, &inc) in flow.schedule.increments().iter().enumerate() {
                let p = i + 1;
                let beta = flow.schedule.betas()[p];
                let mode = if bounded {
                    TuningMode::Bounded { max_increment: flow.schedule.max_increment() }
                } else {
                    TuningMode::Decreasing { increment: inc }
                };
                let inputs = TuningInputs { beta, delta: cert.delta, osc_v: osc, gap: cert.gap, a: flow.a, mode };
                out.push(
                    BoundReport::new("mcmc-iterations", "m_p >= log-term e^(gap beta_p) / delta")
                        .input("p", p as f64)
                        .input("beta_p", beta)
                        .input("delta_beta_p", inc)
                        .value("lower_bound", mcmc_iters_lower_bound(&inputs)?)
                        .value("m_p", flow.iterations[i] as f64)
                        .value("kernel_steps", flow.kernel_steps(p) as f64),
                );
            }
            let regime = if bounded {
                Regime::Bounded { a: flow.a, m: (flow.schedule.max_increment() * osc).exp() }
            } else {
                Regime::Decreasing { a: flow.a, g: flow.schedule.increments().iter().map(|d| (d * osc).exp()).collect() }
            };
            out.extend(regime_reports(&regime, np, flow.schedule.horizon())?);
        }
        ExactContext::Adaptive { config, reference, .. } => {
            let mut head = BoundReport::new("adaptive-settings", "target ratio, solver tolerance")
                .input("epsilon", config.epsilon)
                .input("tol", config.tol);
            if let Some(d) = config.delta_max {
                head = head.input("delta_max", d);
            }
            out.push(head);
            if let Some(r) = reference {
                let e = r.e_tilde();
                let l2 = r.l2_bounds(cfg.n_particles)?;
                let h = r.hypothesis_factors();
                for n in 1..=r.horizon() {
                    out.push(
                        BoundReport::new("adaptive-step", "Delta_n, beta_n, c_n, b_n g_n (1 + c_n), e~_n, B_2 e~_n/sqrt(N)")
                            .input("n", n as f64)
                            .input("N", np as f64)
                            .value("delta_n", r.deltas[n - 1])
                            .value("beta_n", r.betas[n])
                            .value("c_n", r.c[n - 1])
                            .value("mcmc_iterations", r.iterations[n - 1] as f64)
                            .value("hypothesis_factor", h[n - 1])
                            .value("e_tilde", e[n])
                            .value("l2_bound", l2[n]),
                    );
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;

    #[test]
    fn bounded_config_reports_r_star() {
        let cfg = parse_config(
            "n_particles = 100\nhorizon = 3\n[problem]\nkind = \"bounded\"\ndim = 3\na = 0.5\nm = 1.0\nflow_seed = 1\n",
        )
        .unwrap();
        let reports = tune_reports(&cfg).unwrap();
        assert_eq!(reports.iter().filter(|r| r.name == "lp-stability").count(), 4);
        let regime = reports.iter().find(|r| r.name == "bounded-regime").unwrap();
        let (r1, _) = r_star_bounded(&RegimeParams::new(0.5, 1.0, 100).unwrap());
        assert_eq!(regime.get("r1_star"), Some(r1));
        assert_eq!(regime.get("b_cap"), Some(0.5 / 1.5));
    }
}
