use loadcast::dataset::{
    build_windows, enumerate_specs, raw_windows, split, synthesize, LoadSeries, NormParams,
    SynthParams, WindowSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Row for target `k` read straight off the lag formula: u(k - d - n + 1) .. u(k - d).
fn brute_force(values: &[f64], delay: usize, inputs: usize) -> Vec<(Vec<f64>, f64)> {
    let mut rows = Vec::new();
    for k in 0..values.len() {
        let oldest_lag = delay + inputs - 1;
        if k < oldest_lag {
            continue;
        }
        let mut x = Vec::new();
        let mut lag = oldest_lag;
        loop {
            x.push(values[k - lag]);
            if lag == delay {
                break;
            }
            lag -= 1;
        }
        rows.push((x, values[k]));
    }
    rows
}

#[test]
fn windows_match_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let specs = enumerate_specs();
    for case in 0..500 {
        let spec = specs[rng.random_range(0..specs.len())];
        let n = rng.random_range(spec.min_series_len()..spec.min_series_len() + 80);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2000.0)).collect();
        let (x, y) = raw_windows(&values, spec).unwrap();
        let oracle = brute_force(&values, spec.delay, spec.input_count);
        assert_eq!(x.len(), oracle.len(), "case {case}");
        for (i, (ox, oy)) in oracle.iter().enumerate() {
            assert_eq!(&x[i], ox, "case {case} row {i}");
            assert_eq!(y[i], *oy, "case {case} row {i}");
        }
    }
}

#[test]
fn row_count_for_every_spec() {
    let s: LoadSeries<f64> = synthesize(5, 1, &SynthParams::default()).unwrap();
    let norm = NormParams::fit(&s.values).unwrap();
    for spec in enumerate_specs() {
        let ds = build_windows(&s, spec, norm).unwrap();
        assert_eq!(ds.len(), s.len() - (spec.delay + spec.input_count - 1));
        assert!(ds.inputs.iter().all(|r| r.len() == spec.input_count));
        // normalized rows are the normalized raw rows
        let (raw_x, raw_y) = raw_windows(&s.values, spec).unwrap();
        assert_eq!(ds.inputs[0], raw_x[0].iter().map(|&v| norm.normalize(v)).collect::<Vec<_>>());
        assert_eq!(ds.targets[3], norm.normalize(raw_y[3]));
    }
}

#[test]
fn enumeration_endpoints() {
    let specs = enumerate_specs();
    assert_eq!(specs.len(), 28);
    // u(k-2), u(k-1) -> u(k)
    let first = specs[0];
    assert_eq!(first, WindowSpec::new(1, 2).unwrap());
    assert_eq!(first.input_indices(10).collect::<Vec<_>>(), vec![8, 9]);
    // u(k-11), ..., u(k-4) -> u(k)
    let last = specs[27];
    assert_eq!(last, WindowSpec::new(4, 8).unwrap());
    assert_eq!(last.input_indices(20).collect::<Vec<_>>(), (9..=16).collect::<Vec<_>>());
    for d in 1..=4 {
        for n in 2..=8 {
            assert!(specs.contains(&WindowSpec::new(d, n).unwrap()));
        }
    }
}

#[test]
fn normalization_ignores_test_split() {
    let s: LoadSeries<f64> = synthesize(61, 3, &SynthParams::default()).unwrap();
    let (train, test) = split(&s, 40, 21).unwrap();
    let from_train = NormParams::fit(&train.values).unwrap();

    let mut perturbed = s.clone();
    for v in perturbed.values[960..].iter_mut() {
        *v *= 5.0;
    }
    let (train2, _) = split(&perturbed, 40, 21).unwrap();
    assert_eq!(NormParams::fit(&train2.values).unwrap(), from_train);

    let manual_min = train.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let manual_max = train.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!((from_train.min, from_train.max), (manual_min, manual_max));
    // test windows are scaled with train parameters, so they may leave [-1, 1]
    let test_ds = build_windows(&test, WindowSpec::new(1, 7).unwrap(), from_train).unwrap();
    assert_eq!(test_ds.norm, from_train);
}

#[test]
fn extended_window_for_ten_inputs() {
    let v: Vec<f64> = (0..30).map(f64::from).collect();
    let (x, _) = raw_windows(&v, WindowSpec::extended(1, 10).unwrap()).unwrap();
    assert!(x.iter().all(|r| r.len() == 10));
    assert_eq!(x[0], (0..10).map(f64::from).collect::<Vec<_>>());
}
