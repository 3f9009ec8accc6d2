use fkips::adaptive::*;
use fkips::isa::GibbsProblem;
use fkips::rng::Lineage;

fn six_state() -> GibbsProblem {
    GibbsProblem::on_ring(vec![1.5, 0.5, 1.0, 2.0, 1.25, 0.75]).unwrap()
}

fn four_state() -> GibbsProblem {
    GibbsProblem::on_ring(vec![1.0, 0.25, 0.75, 1.5]).unwrap()
}

#[test]
fn perturbation_inequalities_hold_over_replicates() {
    let cfg = AdaptiveConfig::new(0.5).with_iterations(McmcIterations::Fixed(2));
    let report = perturbation_check(&four_state(), &cfg, 50, 5, 11, 200).unwrap();
    assert!(report.exact_sup);
    for s in &report.steps {
        eprintln!("{s:?}");
        assert!(s.holds(), "{s:?}");
    }
}

#[test]
fn l2_error_is_below_exact_constant_bound() {
    let cfg = AdaptiveConfig::new(0.5).with_iterations(McmcIterations::Fixed(2));
    let pts = l2_error_check(&six_state(), &cfg, 200, 6, 5, 300).unwrap();
    for p in &pts {
        eprintln!("{p:?}");
        assert!(p.holds(), "{p:?}");
    }
}

#[test]
fn kept_fraction_averages_to_epsilon() {
    let p = six_state();
    let cfg = AdaptiveConfig::new(0.4).with_iterations(McmcIterations::Fixed(2));
    let reference = theoretical_adaptive_flow(&p, &cfg, 1).unwrap();
    let r = 500;
    let n = 1000;
    let kept: Vec<f64> = (0..r)
        .map(|k| run_adaptive(&p, &cfg, n, 1, Lineage::new(9, k), Some(&reference)).unwrap().diagnostics.steps[0].kept_fraction)
        .collect();
    let mean = kept.iter().sum::<f64>() / r as f64;
    let sigma = (0.4 * 0.6 / (n as f64 * r as f64)).sqrt();
    eprintln!("mean {mean} sigma {sigma}");
    assert!((mean - 0.4).abs() <= 4.0 * sigma);
}

#[test]
fn conditional_step_error_is_below_khintchine_bound() {
    let p = six_state();
    let cfg = AdaptiveConfig::new(0.5).with_iterations(McmcIterations::Fixed(2));
    let reference = theoretical_adaptive_flow(&p, &cfg, 4).unwrap();
    let run = run_adaptive(&p, &cfg, 100, 3, Lineage::new(2, 0), Some(&reference)).unwrap();
    for ens in &run.ensembles {
        let c = conditional_step_check(&p, &cfg, &reference, ens, 77, 400).unwrap();
        eprintln!("{c:?}");
        assert!(c.estimate <= c.bound);
    }
}

#[test]
fn concentration_bounds_hold_under_the_hypothesis() {
    let cfg = AdaptiveConfig::new(0.5).with_iterations(McmcIterations::Hypothesis(0.6));
    let out = adaptive_concentration_check(&four_state(), &cfg, 0.6, &[400], 3, &[0.0, 0.1, 0.15, 0.2], &[1.0, 2.0], 21, 2000).unwrap();
    match &out {
        ConcentrationOutcome::Compared(points) => {
            for p in points {
                eprintln!("{p:?}");
            }
        }
        other => panic!("{other:?}"),
    }
    assert!(out.holds());
}

#[test]
fn concentration_check_refuses_when_hypothesis_fails() {
    let cfg = AdaptiveConfig::new(0.5).with_iterations(McmcIterations::Fixed(1));
    let out = adaptive_concentration_check(&four_state(), &cfg, 0.05, &[50], 3, &[0.1], &[1.0], 1, 10).unwrap();
    assert!(matches!(out, ConcentrationOutcome::HypothesisUnmet { step: 1, .. }), "{out:?}");
}
