use fkips_wasm::{adaptive, annealing, regime};

const ENERGY: [f64; 8] = [1.5, 0.5, 1.5, 2.5, 3.0, 2.0, 1.0, 2.0];

#[test]
fn annealing_matches_closed_form_gibbs_and_certificate() {
    let beta = 1.3;
    let v = annealing(&ENERGY, beta, 8, 0.5).unwrap();
    let z: f64 = ENERGY.iter().map(|e| (-beta * e).exp()).sum();
    for (g, e) in v.gibbs.iter().zip(ENERGY) {
        assert!((g - (-beta * e).exp() / z).abs() < 1e-12);
    }
    let tail: f64 = ENERGY.iter().filter(|&&e| e >= 0.5 + 0.5).map(|e| (-beta * e).exp() / z).sum();
    assert!((v.tail - tail).abs() < 1e-12, "{} vs {tail}", v.tail);
    assert!(v.dobrushin_exact <= v.dobrushin_bound + 1e-12);
    assert!(v.delta > 0.0 && v.delta <= 1.0);
}

#[test]
fn annealing_rejects_bad_input() {
    assert!(annealing(&[], 1.0, 4, 0.0).is_err());
    assert!(annealing(&ENERGY, 1.0, 0, 0.0).is_err());
}

#[test]
fn adaptive_view_is_consistent() {
    let horizon = 6;
    let v = adaptive(&ENERGY, 0.5, 300, horizon, 7).unwrap();
    assert_eq!(v.betas.len(), horizon + 1);
    assert_eq!(v.deltas.len(), horizon);
    assert_eq!(v.kept_fraction.len(), horizon);
    assert_eq!(v.occupations.len(), horizon + 1);
    assert_eq!(v.exact.len(), horizon + 1);
    assert!(v.betas.windows(2).all(|w| w[1] >= w[0]));
    for dist in v.occupations.iter().chain(&v.exact) {
        assert_eq!(dist.len(), ENERGY.len());
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let again = adaptive(&ENERGY, 0.5, 300, horizon, 7).unwrap();
    assert_eq!(v.occupations, again.occupations);
}

#[test]
fn regime_constants_follow_their_closed_forms() {
    let (a, m) = (0.5, 0.5f64.exp());
    let v = regime(a, m, 400).unwrap();
    assert!((v.r1_tilde - 8.0 * m * (m + a) * (m + a) / (1.0 - a)).abs() < 1e-12);
    assert!((v.r2_tilde - 4.0 * m / (1.0 - a)).abs() < 1e-12);
    assert!((v.b_cap - a / (a + m)).abs() < 1e-15);
    let quarter = regime(a, m, 1600).unwrap();
    assert!((v.l2_uniform / quarter.l2_uniform - 2.0).abs() < 1e-12);
    assert!(regime(1.0, m, 400).is_err());
}
