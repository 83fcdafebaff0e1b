use proptest::prelude::*;

use omp_recovery::threshold::{m_theory, make_plan, make_plan_forced, ThresholdError};

#[test]
fn theory_curve_increases_where_the_formula_does() {
    for n in [10usize, 57, 100, 1000, 10_000] {
        for k in 1..n / 2 {
            let direct = 2.0 * (k + 1) as f64 * ((n - k - 1) as f64).ln() > 2.0 * k as f64 * ((n - k) as f64).ln();
            if direct {
                assert!(m_theory(k + 1, n) > m_theory(k, n), "n={n} k={k}");
            }
        }
    }
}

#[test]
fn forced_plan_below_scaling() {
    assert!(matches!(
        make_plan(100, 100, 20, 20),
        Err(ThresholdError::BelowScaling { .. })
    ));
    let p = make_plan_forced(100, 100, 20, 20).unwrap();
    assert!(!p.reliable);
    assert_eq!(p.epsilon, 0.01);
    assert!((p.mu * 100.0 - 2.0 * 1.01 * 80f64.ln()).abs() < 1e-12);
}

proptest! {
    #[test]
    fn plans_satisfy_both_threshold_bounds(n in 10usize..2000, a in 0.0f64..1.0, b in 0.0f64..1.0, extra in 1.001f64..6.0) {
        let k_hi = ((n - 1) / 2).max(1);
        let k_max = 1 + (a * (k_hi - 1) as f64) as usize;
        let k_min = 1 + (b * (k_max - 1) as f64) as usize;
        prop_assume!(2 * k_max < n);
        let m = (extra * 2.0 * k_max as f64 * ((n - k_min) as f64).ln()).ceil() as usize;
        let plan = make_plan(m, n, k_min, k_max).unwrap();
        prop_assert!(plan.delta > 0.0 && plan.epsilon > 0.0 && plan.reliable);
        let lhs = (1.0 + plan.delta) / (1.0 + plan.epsilon);
        prop_assert!((lhs - (1.0 + plan.epsilon)).abs() <= 1e-12);
        prop_assert!((plan.mu * m as f64 - 2.0 * (1.0 + plan.epsilon) * ((n - k_min) as f64).ln()).abs() <= 1e-12 * plan.mu * m as f64);
        for k in k_min..n {
            prop_assert!(plan.mu >= plan.lower_bound(k) - 1e-9);
        }
        for k in 1..=k_max {
            prop_assert!(plan.mu <= plan.upper_bound(k) + 1e-9);
        }
    }
}
