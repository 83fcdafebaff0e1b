use omp_recovery::linalg::norm_sq;
use omp_recovery::model::{
    generate_instance, generate_signal, snr, Amplitude, Noise, PowerSpacing, ProblemInstance, SignMode, SignalSpec,
    SparseSignal,
};

#[test]
fn column_energy_averages_to_one() {
    let spec = SignalSpec::equal_power(100, 1, 1.0, Noise::Noiseless);
    let mut total = 0.0;
    let mut count = 0;
    for seed in 0..100 {
        let inst = generate_instance(&spec, 100, seed).unwrap();
        for e in inst.a.column_norms_sq() {
            total += e;
            count += 1;
        }
    }
    assert_eq!(count, 10_000);
    let mean = total / count as f64;
    assert!((mean - 1.0).abs() <= 0.02, "mean column energy {mean}");
}

#[test]
fn entry_variance_is_one_over_m() {
    let m = 50;
    let spec = SignalSpec::equal_power(1000, 1, 1.0, Noise::Noiseless);
    let mut vals = Vec::with_capacity(1_000_000);
    for seed in 0..20 {
        vals.extend_from_slice(generate_instance(&spec, m, seed).unwrap().a.as_slice());
    }
    assert_eq!(vals.len(), 1_000_000);
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let target = 1.0 / m as f64;
    assert!((var - target).abs() <= 0.02 * target, "variance {var}");
}

#[test]
fn signal_to_noise_ratio_tracks_signal_power() {
    let spec = SignalSpec::equal_power(100, 20, 100.0, Noise::Gaussian);
    let mut sum = 0.0;
    for seed in 0..500 {
        let inst = generate_instance(&spec, 150, seed).unwrap();
        let ax = inst.a.mul_vec(&inst.signal.dense());
        sum += norm_sq(&ax) / norm_sq(&inst.w);
        assert_eq!(snr(&inst), inst.signal.norm_sq());
    }
    let mean = sum / 500.0;
    assert!((mean - 100.0).abs() <= 10.0, "mean power ratio {mean}");
}

#[test]
fn snr_examples() {
    let s = SparseSignal::new(5, vec![2], vec![-3.0]).unwrap();
    let a = omp_recovery::linalg::DenseMatrix::zeros(2, 5);
    assert_eq!(snr(&ProblemInstance::from_parts(s, a, vec![0.0; 2], 0)), 9.0);

    let spec = SignalSpec::equal_power(100, 20, 20.0 * 0.7f64.powi(2), Noise::Noiseless);
    let inst = generate_instance(&spec, 30, 1).unwrap();
    assert!((snr(&inst) - 20.0 * 0.49).abs() < 1e-12);

    let spec = SignalSpec {
        n: 100,
        k: 20,
        amplitude: Amplitude::DynamicRange {
            db: 20.0,
            total_power: 100.0,
            spacing: PowerSpacing::Linear,
        },
        noise: Noise::Gaussian,
        signs: SignMode::Random,
    };
    assert!((snr(&generate_instance(&spec, 30, 2).unwrap()) - 100.0).abs() <= 1e-10);
}

#[test]
fn noiseless_measurements_are_exact() {
    let spec = SignalSpec::equal_power(60, 7, 7.0, Noise::Noiseless);
    let inst = generate_instance(&spec, 25, 3).unwrap();
    assert!(inst.w.iter().all(|w| *w == 0.0));
    assert_eq!(inst.y, inst.a.mul_vec(&inst.signal.dense()));
}

#[test]
fn support_indices_are_uniform() {
    // chi-square with 49 degrees of freedom; 85.35 is the 0.999 quantile
    let (n, k, draws) = (50usize, 5usize, 100_000u64);
    let spec = SignalSpec::equal_power(n, k, 1.0, Noise::Noiseless);
    let mut counts = vec![0u64; n];
    for seed in 0..draws {
        for j in generate_signal(&spec, seed).unwrap().support {
            counts[j] += 1;
        }
    }
    let expected = (draws as f64) * k as f64 / n as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < 85.35, "chi-square {chi2}");
}

#[test]
fn instances_are_reproducible() {
    let spec = SignalSpec::equal_power(80, 6, 30.0, Noise::Gaussian);
    let a = generate_instance(&spec, 40, 77).unwrap();
    let b = generate_instance(&spec, 40, 77).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, generate_instance(&spec, 40, 78).unwrap());
}

#[test]
fn text_format_round_trips() {
    let spec = SignalSpec::equal_power(12, 3, 5.0, Noise::Gaussian);
    let inst = generate_instance(&spec, 6, 9).unwrap();
    let mut buf = Vec::new();
    inst.write_text(&mut buf).unwrap();
    let back = ProblemInstance::read_text(buf.as_slice()).unwrap();
    assert_eq!(back, inst);
}
