use proptest::prelude::*;
use timing_game::boundary::unconstrained_value;
use timing_game::equilibrium::preemption_outcome;
use timing_game::model::{in_closed_preemption, never_value};
use timing_game::{
    attrition_rate, classify_region, det_preemption_time, follower_value, leader_value, Boundary, Constants, Params,
    Point, Region,
};

fn table1() -> (Params, Constants, Boundary) {
    let p = Params::table1();
    let k = Constants::new(&p).unwrap();
    let b = Boundary::exponential(&p, &k, 0.0984).unwrap();
    (p, k, b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn outcome_masses_sum_to_survival(a in 0.0f64..=1.0, b in 0.0f64..=1.0, gi in 0.0f64..1.0, gj in 0.0f64..1.0) {
        let o = preemption_outcome(a, b, gi, gj);
        let m = (1.0 - gi) * (1.0 - gj);
        prop_assert!((o.total() - m).abs() <= 1e-12);
        prop_assert!(o.lambda_l_i >= 0.0 && o.lambda_l_j >= 0.0 && o.lambda_m >= 0.0);
    }

    #[test]
    fn rate_nonnegative_off_preemption(x in 0.0f64..40.0, y in 0.0f64..40.0) {
        let (p, k, b) = table1();
        prop_assume!(!in_closed_preemption(x, y, &k));
        let rate = attrition_rate(x, y, &p, &k, &b).unwrap();
        prop_assert!(rate >= 0.0 && rate.is_finite());
        match classify_region(x, y, &k, &b) {
            Region::Continuation => prop_assert_eq!(rate, 0.0),
            Region::Attrition => prop_assert!(y >= b.eval(x)),
            Region::Preemption => prop_assert!(false, "closed P excluded"),
        }
    }

    #[test]
    fn boundary_below_unconstrained_threshold(x in 0.0f64..200.0) {
        let (_, k, b) = table1();
        prop_assert!(b.eval(x) <= k.y_star);
    }

    #[test]
    fn unconstrained_value_dominates_immediate(y in 0.1f64..30.0) {
        let (p, k, _) = table1();
        let v = unconstrained_value(y, &p, &k);
        prop_assert!(v >= leader_value(0.0, y, &p) - 1e-9);
        prop_assert!(v >= never_value(&p) - 1e-9);
    }

    #[test]
    fn payoffs_agree_on_the_line(x in 0.0f64..50.0, t in 0.0f64..30.0) {
        let (p, k, _) = table1();
        let y = k.preemption_line(x);
        let (l, f) = (leader_value(t, y, &p), follower_value(t, x, &p));
        prop_assert!((l - f).abs() <= 1e-9 * (1.0 + l.abs()));
    }

    #[test]
    fn preemption_time_hits_the_line(x in 0.5f64..10.0, y in 0.5f64..8.0) {
        let p = Params { mu_y: 0.06, mu_x: 0.02, ..Params::table1_deterministic() };
        let k = Constants::new(&p).unwrap();
        prop_assume!(!in_closed_preemption(x, y, &k));
        let t = det_preemption_time(Point::new(x, y), &p, &k).unwrap();
        prop_assert!(t.is_finite() && t > 0.0);
        let (xt, yt) = (x * (0.02 * t).exp(), y * (0.06 * t).exp());
        prop_assert!((yt - k.preemption_line(xt)).abs() < 1e-6 * (1.0 + yt));
    }
}
