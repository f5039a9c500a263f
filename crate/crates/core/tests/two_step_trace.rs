//! A two-step scalar run where every quantity can be written out by hand.
//!
//! With the empty set as censoring region the Test always fails, so the
//! gradient is the deterministic `(a_i x - y) x` and the run involves no
//! randomness at all.

use nalgebra::DMatrix;

use censored_lds::estimator::{
    check_generic_bound, check_potential, son_sg, Branch, ConfidenceEllipsoid, SonSgConfig,
};
use censored_lds::rng::NormalStream;
use censored_lds::sets::ObservableSet;
use censored_lds::simulator::Pair;

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn pair(t: usize, x: f64, y: f64) -> Pair {
    Pair {
        t,
        x: nalgebra::DVector::from_element(1, x),
        y: nalgebra::DVector::from_element(1, y),
        set: ObservableSet::empty(1).unwrap(),
    }
}

#[test]
fn hand_computed_trace_matches() {
    let (a0, s0) = (0.4, 2.0);
    let a_star = 0.6;
    let k = ConfidenceEllipsoid::new(scalar(a0), scalar(s0)).unwrap();
    let cfg = SonSgConfig {
        alpha: 0.5,
        ..Default::default()
    };
    let eta = 4.0;
    assert_eq!(cfg.eta(), eta);
    let data = [pair(1, 1.0, 0.9), pair(2, -0.5, 0.1)];
    let test = cfg.test_config(10).unwrap();
    let mut rng = NormalStream::new(0);
    let run = son_sg(&k, &data, &cfg, &test, &mut rng, Some(&scalar(a_star))).unwrap();

    // Step 1: g = (0.4 - 0.9) * 1 = -0.5, sigma = 3, a~ = 0.4 + 4 * 0.5 / 3.
    let radius = 1.0 / s0.sqrt();
    let clamp = |a: f64| a.clamp(a0 - radius, a0 + radius);
    let g1 = (a0 * 1.0 - 0.9) * 1.0;
    let sig1 = s0 + 1.0;
    let a1 = clamp(a0 - eta * g1 / sig1);
    // Step 2.
    let g2 = (a1 * -0.5 - 0.1) * -0.5;
    let sig2 = sig1 + 0.25;
    let a2 = clamp(a1 - eta * g2 / sig2);

    assert!((run.a_hat[(0, 0)] - a2).abs() < 1e-12, "{} vs {a2}", run.a_hat[(0, 0)]);
    assert!((run.sigma_final[(0, 0)] - sig2).abs() < 1e-12);
    let recs = &run.diagnostics.records;
    assert!(recs.iter().all(|r| r.branch == Branch::CensorOblivious));

    let e1 = (2.0 * eta * g1 * (a0 - a_star) - (a0 - a_star).powi(2))
        + (2.0 * eta * g2 * (a1 - a_star) - ((a1 - a_star) * -0.5f64).powi(2));
    let e2 = g1 * g1 / sig1 + g2 * g2 / sig2;
    assert!((run.diagnostics.e1().unwrap() - e1).abs() < 1e-12);
    assert!((run.diagnostics.e2() - e2).abs() < 1e-12);

    let slack = 1.0 - e1 + eta * eta * e2 - sig2 * (a2 - a_star).powi(2);
    let lib = check_generic_bound(&run.diagnostics, &run.a_hat, &scalar(a_star), &k, &run.sigma_final).unwrap();
    assert!((lib - slack).abs() < 1e-12, "{lib} vs {slack}");
    assert!(slack >= 0.0);

    // Potential: 1/3 + 0.25/3.25 <= ln(3.25) + ln(1/2).
    let lhs = 1.0 / sig1 + 0.25 / sig2;
    assert!((run.diagnostics.leverage_sum() - lhs).abs() < 1e-12);
    assert!(check_potential(&run.diagnostics, &run.sigma_final, s0));
}

#[test]
fn truth_outside_ellipsoid_is_reported() {
    let k = ConfidenceEllipsoid::new(scalar(0.0), scalar(100.0)).unwrap();
    let cfg = SonSgConfig::default();
    let test = cfg.test_config(10).unwrap();
    let mut rng = NormalStream::new(0);
    let data = [pair(1, 1.0, 0.5)];
    let run = son_sg(&k, &data, &cfg, &test, &mut rng, Some(&scalar(0.5))).unwrap();
    let err = check_generic_bound(&run.diagnostics, &run.a_hat, &scalar(0.5), &k, &run.sigma_final)
        .unwrap_err();
    assert!(err.to_string().contains("bound inapplicable"), "{err}");
}
