use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use censored_lds::estimator::{
    kkt_residual, learn_censored_lds, project_ellipsoid, ConfidenceEllipsoid, EstimatorState,
    SonSgConfig, INVERSE_DRIFT_LIMIT,
};
use censored_lds::harness::persist::format_float;
use censored_lds::sets::{make_chasing_schedule, make_static_schedule, HalfSpace, ObservableSet};
use censored_lds::simulator::{simulate, SystemSpec};

fn vec_in(d: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, d)
}

fn half_space(d: usize) -> impl Strategy<Value = HalfSpace> {
    (vec_in(d, 1.0), -1.0..1.0f64)
        .prop_filter("nonzero normal", |(n, _)| n.iter().any(|v| v.abs() > 1e-3))
        .prop_map(|(n, c)| HalfSpace::new(n, c).unwrap())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn spd2(entries: [f64; 4], floor: f64) -> DMatrix<f64> {
    let g = DMatrix::from_row_slice(2, 2, &entries);
    &g * g.transpose() + DMatrix::identity(2, 2) * floor
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn half_space_membership_is_a_dot_product(h in half_space(3), x in vec_in(3, 3.0)) {
        let set = ObservableSet::HalfSpace(h.clone());
        prop_assert_eq!(set.contains(&x).unwrap(), dot(&h.normal, &x) >= h.offset);
    }

    #[test]
    fn union_and_intersection_are_or_and_and(
        hs in prop::collection::vec(half_space(2), 1..4),
        x in vec_in(2, 3.0),
    ) {
        let each: Vec<bool> = hs.iter().map(|h| dot(&h.normal, &x) >= h.offset).collect();
        let union = ObservableSet::union_of_half_spaces(hs.clone()).unwrap();
        prop_assert_eq!(union.contains(&x).unwrap(), each.iter().any(|b| *b));
        let inter = ObservableSet::intersection(
            hs.into_iter().map(ObservableSet::HalfSpace).collect(),
        ).unwrap();
        prop_assert_eq!(inter.contains(&x).unwrap(), each.iter().all(|b| *b));
    }

    #[test]
    fn axis_box_membership(lo in vec_in(3, 2.0), width in vec_in(3, 2.0), x in vec_in(3, 3.0)) {
        let hi: Vec<f64> = lo.iter().zip(&width).map(|(l, w)| l + w.abs()).collect();
        let set = ObservableSet::axis_box(lo.clone(), hi.clone()).unwrap();
        let inside = (0..3).all(|i| lo[i] <= x[i] && x[i] <= hi[i]);
        prop_assert_eq!(set.contains(&x).unwrap(), inside);
    }

    #[test]
    fn schedules_are_pure(offsets in vec_in(2, 2.0), x in vec_in(2, 3.0), t in 1usize..1000) {
        let s = make_chasing_schedule(offsets).unwrap();
        prop_assert_eq!(s.next_set(t, &x).unwrap(), s.next_set(t, &x).unwrap());
        prop_assert_eq!(s.next_set(t, &x).unwrap(), s.next_set(t + 7, &x).unwrap());
    }

    #[test]
    fn floats_round_trip_through_text(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(!v.is_nan());
        prop_assert_eq!(format_float(v).parse::<f64>().unwrap().to_bits(), bits);
    }

    #[test]
    fn projection_is_feasible_and_no_worse_than_boundary_points(
        c in prop::array::uniform4(-2.0..2.0f64),
        s0 in prop::array::uniform4(-1.0..1.0f64),
        si in prop::array::uniform4(-2.0..2.0f64),
        off in prop::array::uniform4(-5.0..5.0f64),
        probe in prop::array::uniform4(-1.0..1.0f64),
    ) {
        let center = DMatrix::from_row_slice(2, 2, &c);
        let k = ConfidenceEllipsoid::new(center.clone(), spd2(s0, 0.3)).unwrap();
        let sigma = spd2(si, 0.3);
        let a_tilde = &center + DMatrix::from_row_slice(2, 2, &off);
        let p = project_ellipsoid(&a_tilde, &sigma, &k, 1e-12).unwrap();
        prop_assert!(k.distance_sq(&p.a) <= 1.0 + 1e-9);
        prop_assert!(kkt_residual(&p, &a_tilde, &sigma, &k) < 1e-8);
        // Any feasible point is at least as far from a_tilde.
        let dir = DMatrix::from_row_slice(2, 2, &probe);
        let n = k.distance_sq(&(&center + &dir)).sqrt();
        prop_assume!(n > 1e-6);
        let q = &center + dir / n;
        let cost = |a: &DMatrix<f64>| {
            let e = a - &a_tilde;
            (&e * &sigma).component_mul(&e).sum()
        };
        prop_assert!(cost(&p.a) <= cost(&q) * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn maintained_inverse_tracks_covariance(xs in prop::collection::vec(vec_in(3, 10.0), 1..60)) {
        let k = ConfidenceEllipsoid::new(DMatrix::zeros(3, 3), DMatrix::identity(3, 3) * 0.05).unwrap();
        let mut state = EstimatorState::new(&k).unwrap();
        for x in xs {
            let drift = state.add_covariate(&DVector::from_vec(x)).unwrap();
            prop_assert!(drift <= INVERSE_DRIFT_LIMIT);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn run_checks_hold_on_random_censored_runs(
        a in prop::array::uniform4(-0.6..0.6f64),
        offset in -1.0..0.5f64,
        normal in prop::array::uniform2(-1.0..1.0f64),
        chase in any::<bool>(),
        alpha in 0.2..0.7f64,
        seed in any::<u32>(),
    ) {
        prop_assume!(normal.iter().any(|v| v.abs() > 0.05));
        let a_star = DMatrix::from_row_slice(2, 2, &a);
        let spec = SystemSpec::new(a_star.clone()).unwrap();
        let sched = if chase {
            make_chasing_schedule(vec![offset - 1.0, offset - 1.0]).unwrap()
        } else {
            make_static_schedule(ObservableSet::half_space(normal.to_vec(), offset).unwrap())
        };
        let traj = simulate(&spec, &sched, 300, seed as u64).unwrap();
        let cfg = SonSgConfig { alpha, ..Default::default() };
        let Ok((_, report)) = learn_censored_lds(&traj.censored_view(), &cfg, seed as u64, Some(&a_star)) else {
            return Ok(());
        };
        let inv = &report.invariants;
        prop_assert!(inv.iterates_in_ellipsoid && inv.inverse_consistent && inv.time_ordered && inv.potential);
        if inv.truth_in_ellipsoid == Some(true) {
            prop_assert_eq!(inv.generic_bound, Some(true));
        }
    }
}
