use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use omp_recovery::linalg::{dot, DenseMatrix};
use omp_recovery::model::{generate_instance, Noise, ProblemInstance, SignalSpec, SparseSignal};
use omp_recovery::omp::{check_events, debias, default_max_iter, run_genie, run_omp, StopReason};
use omp_recovery::threshold::make_plan;

fn na(inst: &ProblemInstance) -> (DMatrix<f64>, DVector<f64>) {
    (
        DMatrix::from_row_slice(inst.m(), inst.n(), inst.a.as_slice()),
        DVector::from_column_slice(&inst.y),
    )
}

/// Residual of `y` after projecting out `cols`, from the normal equations.
fn residual(a: &DMatrix<f64>, y: &DVector<f64>, cols: &[usize]) -> DVector<f64> {
    if cols.is_empty() {
        return y.clone();
    }
    let phi = a.select_columns(cols);
    let coef = (phi.transpose() * &phi)
        .cholesky()
        .unwrap()
        .solve(&(phi.transpose() * y));
    y - phi * coef
}

fn scores(a: &DMatrix<f64>, r: &DVector<f64>) -> Vec<f64> {
    let r_sq = r.norm_squared();
    (0..a.ncols()).map(|j| a.column(j).dot(r).powi(2) / r_sq).collect()
}

fn brute_force_sequence(inst: &ProblemInstance, mu: f64) -> Vec<usize> {
    let (a, y) = na(inst);
    let mut picked = Vec::new();
    while picked.len() < inst.m().min(inst.n()) {
        let r = residual(&a, &y, &picked);
        if r.norm_squared() <= 1e-14 * y.norm_squared() {
            break;
        }
        let s = scores(&a, &r);
        let best = (0..s.len())
            .filter(|j| !picked.contains(j))
            .fold(None, |acc: Option<usize>, j| match acc {
                Some(b) if s[b] >= s[j] => Some(b),
                _ => Some(j),
            })
            .unwrap();
        if s[best] <= mu {
            break;
        }
        picked.push(best);
    }
    picked
}

#[test]
fn identity_measurements() {
    let signal = SparseSignal::new(2, vec![0], vec![1.0]).unwrap();
    let inst = ProblemInstance::from_parts(signal, DenseMatrix::identity(2), vec![0.0; 2], 0);
    let res = run_omp(&inst, 0.5, 2).unwrap();
    assert_eq!(res.support_estimate, vec![0]);
    assert_eq!(res.trace.stop_reason, StopReason::ZeroResidual);
    let res = run_omp(&inst, 1.5, 2).unwrap();
    assert!(res.support_estimate.is_empty());
    assert_eq!(res.trace.stop_reason, StopReason::Threshold);
}

#[test]
fn sequence_matches_brute_force() {
    let spec = SignalSpec::equal_power(30, 3, 3.0, Noise::Noiseless);
    for seed in 0..10 {
        let inst = generate_instance(&spec, 40, seed).unwrap();
        let mu = 0.01;
        assert_eq!(
            run_omp(&inst, mu, default_max_iter(&inst)).unwrap().trace.order(),
            brute_force_sequence(&inst, mu),
            "seed {seed}"
        );
    }
}

#[test]
fn genie_table_matches_brute_force() {
    let spec = SignalSpec::equal_power(50, 4, 100.0, Noise::Gaussian);
    for seed in 0..5 {
        let inst = generate_instance(&spec, 30, seed).unwrap();
        let genie = run_genie(&inst).unwrap();
        let order = genie.trace.order();
        let (a, y) = na(&inst);
        assert_eq!(genie.rho_table.len(), inst.signal.k() + 1);
        for (t, row) in genie.rho_table.iter().enumerate() {
            let expected = scores(&a, &residual(&a, &y, &order[..t]));
            for (j, (p, q)) in row.iter().zip(&expected).enumerate() {
                if order[..t].contains(&j) {
                    assert!(p.abs() <= 1e-10, "selected {j} at t={t}: {p}");
                } else {
                    assert!((p - q).abs() <= 1e-8 * q.abs(), "t={t} j={j}: {p} vs {q}");
                }
            }
        }
    }
}

#[test]
fn genie_selects_the_support() {
    let spec = SignalSpec::equal_power(40, 1, 1.0, Noise::Noiseless);
    let inst = generate_instance(&spec, 10, 3).unwrap();
    let genie = run_genie(&inst).unwrap();
    assert_eq!(genie.trace.iterations.len(), 1);
    assert_eq!(genie.trace.order(), inst.signal.support);

    let spec = SignalSpec::equal_power(40, 6, 6.0, Noise::Noiseless);
    let inst = generate_instance(&spec, 20, 4).unwrap();
    let mut order = run_genie(&inst).unwrap().trace.order();
    order.sort_unstable();
    assert_eq!(order, inst.signal.support);
}

#[test]
fn degenerate_thresholds() {
    let spec = SignalSpec::equal_power(40, 5, 5.0, Noise::Noiseless);
    let inst = generate_instance(&spec, 30, 5).unwrap();
    let table = run_genie(&inst).unwrap().rho_table;
    let e = check_events(&table, &inst.signal.support, 0.0);
    assert!(!e.missed_detection && e.false_alarm);
    let e = check_events(&table, &inst.signal.support, 1e300);
    assert!(e.missed_detection && !e.false_alarm);
}

#[test]
fn event_free_trials_recover_exactly() {
    let (n, k, m) = (100, 20, 200);
    let mu = make_plan(m, n, k, k).unwrap().mu;
    let spec = SignalSpec::equal_power(n, k, k as f64, Noise::Noiseless);
    let (mut clean, mut exact) = (0, 0);
    for seed in 0..1000 {
        let inst = generate_instance(&spec, m, seed).unwrap();
        let events = check_events(&run_genie(&inst).unwrap().rho_table, &inst.signal.support, mu);
        let res = run_omp(&inst, mu, default_max_iter(&inst)).unwrap();
        let ok = res.support_estimate == inst.signal.support;
        exact += usize::from(ok);
        if !events.any() {
            clean += 1;
            assert!(ok && res.trace.iterations.len() == k, "seed {seed}");
        }
    }
    assert!(clean <= exact);
}

#[test]
fn noiseless_recovery_at_conservative_scaling() {
    let n = 128;
    for k in [4, 8, 16] {
        let m = (4.0 * k as f64 * (n as f64).ln()).ceil() as usize;
        let mu = make_plan(m, n, k, k).unwrap().mu;
        let spec = SignalSpec::equal_power(n, k, k as f64, Noise::Noiseless);
        let hits = (0..500)
            .filter(|&seed| {
                let inst = generate_instance(&spec, m, seed).unwrap();
                run_omp(&inst, mu, default_max_iter(&inst)).unwrap().support_estimate == inst.signal.support
            })
            .count();
        assert!(hits as f64 / 500.0 >= 0.99, "k={k} m={m}: {hits}/500");
    }
}

#[test]
fn debiased_estimates() {
    let spec = SignalSpec::equal_power(60, 5, 5.0, Noise::Noiseless);
    let inst = generate_instance(&spec, 30, 6).unwrap();
    let x_hat = debias(&inst, &inst.signal.support).unwrap();
    for (p, q) in x_hat.iter().zip(inst.signal.dense()) {
        assert!((p - q).abs() <= 1e-8 * q.abs().max(1.0));
    }

    let spec = SignalSpec::equal_power(60, 5, 10.0, Noise::Gaussian);
    let inst = generate_instance(&spec, 30, 7).unwrap();
    let x_hat = debias(&inst, &inst.signal.support).unwrap();
    let r: Vec<f64> = inst.a.mul_vec(&x_hat).iter().zip(&inst.y).map(|(p, q)| q - p).collect();
    for &j in &inst.signal.support {
        assert!(dot(&inst.a.column(j), &r).abs() <= 1e-8);
    }
    assert!(x_hat
        .iter()
        .enumerate()
        .all(|(j, v)| *v == 0.0 || inst.signal.contains(j)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trace_invariants(seed in any::<u64>(), k in 1usize..6, m in 8usize..50, snr_db in 0.0f64..40.0) {
        let spec = SignalSpec::equal_power(60, k, 10f64.powf(snr_db / 10.0), Noise::Gaussian);
        let inst = generate_instance(&spec, m, seed).unwrap();
        let mu = 2.0 * 60f64.ln() / m as f64;
        let res = run_omp(&inst, mu, default_max_iter(&inst)).unwrap();
        let order = res.trace.order();
        let mut sorted = order.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), order.len());
        let norms = inst.a.column_norms_sq();
        let mut prev = f64::INFINITY;
        for rec in &res.trace.iterations {
            prop_assert!(rec.rho_star >= 0.0);
            prop_assert!(rec.rho_star > mu);
            prop_assert!(rec.rho_star <= norms[rec.index] + 1e-10);
            prop_assert!(rec.residual_norm_sq <= prev);
            prev = rec.residual_norm_sq;
        }
        if let Some(x) = &res.x_hat {
            prop_assert!(x.iter().enumerate().all(|(j, v)| *v == 0.0 || res.support_estimate.contains(&j)));
        }

        if let Ok(genie) = run_genie(&inst) {
            let g = genie.trace.order();
            for (t, row) in genie.rho_table.iter().enumerate() {
                for (j, r) in row.iter().enumerate() {
                    prop_assert!(*r <= norms[j] + 1e-10);
                    if g[..t.min(g.len())].contains(&j) {
                        prop_assert!(r.abs() <= 1e-10 * norms[j]);
                    }
                }
            }
        }
    }
}
