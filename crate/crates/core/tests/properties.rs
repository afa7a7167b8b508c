//! Property tests for the invariants each module promises.

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use dann_amc::data::{make_splits, read_csv, synth_shift, CsvOptions, Dataset, StandardScaler};
use dann_amc::embed::tsne::initial_layout;
use dann_amc::embed::{conditional_affinities, joint_affinities, tsne_from, TsneConfig};
use dann_amc::features::{cumulants, moments, spectral, FeatureSpec};
use dann_amc::models::{build_dann_with, dann_backward, dann_forward};
use dann_amc::nn::layers::{BatchNormLayer, DropoutLayer, GradReversalLayer};
use dann_amc::nn::{softmax_cross_entropy, AdamState, Layer, Matrix, Pass};
use dann_amc::signal::{apply_channel, draw_gain, modulate, ChannelConfig, Constellation};
use dann_amc::train::{lambda_at, train_dann, EarlyStop, MetricsReport, TrainConfig, TrainData};
use dann_amc::{Band, Domain, Modulation, NUM_CLASSES};

fn randm(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn modulation() -> impl Strategy<Value = Modulation> {
    (0..NUM_CLASSES).prop_map(|i| Modulation::from_index(i).unwrap())
}

// --- network engine --------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grl_is_exact_for_any_weight(lambda in 0.0f64..10.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = randm(5, 4, 10.0, &mut rng);
        let mut layer = Layer::GradReversal(GradReversalLayer::new(lambda).unwrap());
        let (out, cache) = layer.forward(&x, &mut Pass::train()).unwrap();
        prop_assert_eq!(out.data(), x.data());
        let back = layer.backward(&cache, &x).unwrap();
        for (b, g) in back.data().iter().zip(x.data()) {
            prop_assert_eq!(b.to_bits(), (-lambda * g).to_bits());
        }
    }

    #[test]
    fn batch_norm_standardizes_each_feature(rows in 2usize..40, cols in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = randm(rows, cols, 3.0, &mut rng);
        x.data_mut().iter_mut().for_each(|v| *v += 5.0);
        let mut layer = Layer::BatchNorm(BatchNormLayer::new(cols));
        let (out, _) = layer.forward(&x, &mut Pass::train()).unwrap();
        for j in 0..cols {
            let col: Vec<f64> = (0..rows).map(|r| x.get(r, j)).collect();
            let mean = col.iter().sum::<f64>() / rows as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows as f64;
            prop_assume!(var > 1e-2);
            let y: Vec<f64> = (0..rows).map(|r| out.get(r, j)).collect();
            let m = y.iter().sum::<f64>() / rows as f64;
            let v = y.iter().map(|a| (a - m).powi(2)).sum::<f64>() / rows as f64;
            prop_assert!(m.abs() < 1e-6);
            // eps in the denominator shrinks the variance by var/(var + eps).
            prop_assert!((v - 1.0).abs() < 1e-4 + 1e-5 / var);
        }
        if let Layer::BatchNorm(bn) = &layer {
            prop_assert!(bn.running_var.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn cross_entropy_is_nonnegative(seed in any::<u64>(), classes in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = randm(6, classes, 5.0, &mut rng);
        let labels: Vec<usize> = (0..6).map(|_| rng.random_range(0..classes)).collect();
        let (loss, _) = softmax_cross_entropy(&logits, &labels).unwrap();
        prop_assert!(loss >= 0.0);
        let (uniform, _) = softmax_cross_entropy(&Matrix::filled(6, classes, 1.7), &labels).unwrap();
        prop_assert!((uniform - (classes as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn adam_ignores_zero_gradients(seed in any::<u64>(), steps in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stack = build_dann_with(4, seed, 0.3).unwrap().label_head;
        let before = stack.flat_params();
        let mut adam = AdamState::new(1e-2);
        for t in 0..steps {
            stack.zero_grad();
            let x = randm(3, 128, 1.0, &mut rng);
            let (y, cache) = stack.forward(&x, &mut Pass::train()).unwrap();
            stack.backward(&cache, &Matrix::zeros(y.rows(), y.cols())).unwrap();
            adam.step(&mut [&mut stack]).unwrap();
            prop_assert_eq!(adam.steps(), t as u64 + 1);
        }
        prop_assert_eq!(stack.flat_params(), before);
    }

    #[test]
    fn trunk_gradient_splits_into_label_and_reversed_domain_parts(seed in any::<u64>(), lambda in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = build_dann_with(6, seed, 0.0).unwrap();
        let x = randm(10, 6, 1.0, &mut rng);
        let y: Vec<usize> = (0..10).map(|_| rng.random_range(0..NUM_CLASSES)).collect();
        let d = vec![0usize; 10];
        let grads = |lam: f64, label: bool, domain: bool| {
            let mut m = base.clone();
            let out = dann_forward(&mut m, &x, &mut Pass::train(), lam).unwrap();
            let (_, gy) = softmax_cross_entropy(&out.label_logits, &y).unwrap();
            let (_, gd) = softmax_cross_entropy(&out.domain_logits, &d).unwrap();
            dann_backward(&mut m, &out, label.then_some(&gy), domain.then_some(&gd)).unwrap();
            (m.extractor.flat_grads(), m.label_head.flat_grads(), m.domain_head.flat_grads())
        };
        let (total, ty, td) = grads(lambda, true, true);
        let (label, _, ld) = grads(lambda, true, false);
        let (reversed, dy, _) = grads(1.0, false, true);
        prop_assert!(ld.iter().all(|g| *g == 0.0));
        prop_assert!(dy.iter().all(|g| *g == 0.0));
        prop_assert!(ty.iter().all(|g| g.is_finite()) && td.iter().all(|g| g.is_finite()));
        for ((t, l), r) in total.iter().zip(&label).zip(&reversed) {
            // `reversed` already carries the −1 of the reversal layer.
            prop_assert!((t - (l + lambda * r)).abs() <= 1e-10 * (1.0 + t.abs()));
        }
    }
}

#[test]
fn train_mode_dropout_preserves_the_mean() {
    const MASKS: usize = 10_000;
    let rate = 0.3;
    let x = Matrix::from_vec(1, 4, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
    let mut layer = Layer::Dropout(DropoutLayer::new(rate, 7).unwrap());
    let mut sums = [0.0; 4];
    for _ in 0..MASKS {
        let (out, _) = layer.forward(&x, &mut Pass::train()).unwrap();
        for (s, v) in sums.iter_mut().zip(out.data()) {
            *s += v;
        }
    }
    for (s, v) in sums.iter().zip(x.data()) {
        let mean = s / MASKS as f64;
        // Each draw is v/keep with probability keep, else 0.
        let sd = v.abs() * (rate / (1.0 - rate)).sqrt() / (MASKS as f64).sqrt();
        assert!((mean - v).abs() <= 3.0 * sd, "mean {mean} vs {v} (σ {sd})");
    }
    let (out, _) = layer.forward(&x, &mut Pass::eval()).unwrap();
    assert_eq!(out.data(), x.data());
}

// --- signal ----------------------------------------------------------------

#[test]
fn constellations_have_unit_power() {
    for m in Modulation::ALL {
        let c = Constellation::new(m);
        assert_eq!(c.points.len(), 1 << m.bits_per_symbol());
        assert!((c.mean_power() - 1.0).abs() < 1e-12, "{m:?}");
    }
}

#[test]
fn strong_line_of_sight_concentrates_the_envelope() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let env: Vec<f64> = (0..100_000)
        .map(|_| draw_gain(dann_amc::signal::ChannelModel::Rician, 1e4, &mut rng).norm())
        .collect();
    let mean = env.iter().sum::<f64>() / env.len() as f64;
    let sd = (env.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (env.len() as f64 - 1.0)).sqrt();
    assert!(sd < 0.02, "envelope std {sd}");
}

// --- features --------------------------------------------------------------

fn feature_vector(frame: &[Complex64]) -> Vec<f64> {
    let mut v = moments(frame).unwrap().values.to_vec();
    v.extend(cumulants(frame).unwrap().features());
    v.extend(spectral(frame).unwrap().values());
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn features_ignore_a_global_phase_rotation(
        m in modulation(),
        len in 32usize..300,
        theta in -std::f64::consts::PI..std::f64::consts::PI,
        seed in any::<u64>(),
        rician in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let domain = if rician { Domain::Rician } else { Domain::Rayleigh };
        let channel = ChannelConfig::preset(domain, Band::Mhz10, seed);
        let x = modulate(m, len, &mut rng).unwrap();
        let frame = apply_channel(&x, &channel, &mut rng).unwrap();
        let rot = Complex64::from_polar(1.0, theta);
        let rotated: Vec<Complex64> = frame.iter().map(|s| s * rot).collect();
        let (a, b) = (feature_vector(&frame), feature_vector(&rotated));
        for (i, (u, v)) in a.iter().zip(&b).enumerate() {
            prop_assert!((u - v).abs() <= 1e-9 * (1.0 + u.abs()), "feature {i}: {u} vs {v}");
        }
    }
}

#[test]
fn feature_header_is_stable() {
    let golden = [
        "mom_amp_mean", "mom_amp_var", "mom_amp_skew", "mom_amp_kurt",
        "mom_phase_mean", "mom_phase_var", "mom_phase_skew", "mom_phase_kurt",
        "mom_freq_mean", "mom_freq_var", "mom_freq_skew", "mom_freq_kurt",
        "cum_c20_abs", "cum_c21", "cum_c40_abs", "cum_c41_abs", "cum_c42_abs",
        "cum_c40_norm", "cum_c42_norm",
        "spec_centroid", "spec_spread", "spec_flatness", "spec_papr", "spec_obw_frac",
    ];
    assert_eq!(FeatureSpec::all().names(), golden);
}

// --- data pipeline ---------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scaler_round_trips(rows in 2usize..30, cols in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = randm(rows, cols, 4.0, &mut rng);
        x.data_mut().iter_mut().for_each(|v| *v += 10.0);
        let ds = Dataset::unnamed(x.clone(), vec![0; rows], Domain::Rayleigh).unwrap();
        let mut scaler = StandardScaler::default();
        scaler.fit(&ds).unwrap();
        prop_assume!(scaler.stds.iter().all(|s| *s > 1e-3));
        let back = scaler.inverse_transform_matrix(&scaler.transform_matrix(&x).unwrap()).unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn csv_round_trip_preserves_values(rows in 1usize..20, cols in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = randm(rows, cols, 1e3, &mut rng);
        let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..NUM_CLASSES)).collect();
        let names: Vec<String> = (0..cols).map(|j| format!("f{j}")).collect();
        let ds = Dataset::new(names, x, labels, Domain::Rician, Some(Band::Mhz1)).unwrap();
        let opts = CsvOptions::new(Domain::Rician).band(Band::Mhz1);
        let mut first = Vec::new();
        ds.write_csv(&mut first).unwrap();
        let loaded = read_csv(first.as_slice(), &opts).unwrap();
        let mut second = Vec::new();
        loaded.write_csv(&mut second).unwrap();
        let reloaded = read_csv(second.as_slice(), &opts).unwrap();
        prop_assert_eq!(&reloaded.labels, &ds.labels);
        prop_assert_eq!(&reloaded.feature_names, &ds.feature_names);
        for (a, b) in reloaded.features.data().iter().zip(ds.features.data()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn splits_partition_each_domain(n in 10usize..60, m in 10usize..60, seed in any::<u64>()) {
        let (source, _) = synth_shift(n, 6, 1.0, seed).unwrap();
        let (_, target) = synth_shift(m, 6, 1.0, seed ^ 1).unwrap();
        let plan = make_splits(&source, &target, seed).unwrap();
        let mut s: Vec<usize> = plan.source_train.iter().chain(&plan.source_val).copied().collect();
        s.sort_unstable();
        prop_assert_eq!(s, (0..source.len()).collect::<Vec<_>>());
        let mut t: Vec<usize> = plan.target_unlabeled.iter().chain(&plan.target_eval).copied().collect();
        t.sort_unstable();
        prop_assert_eq!(t, (0..target.len()).collect::<Vec<_>>());
        // Stratification: each class keeps its share of the source within one row.
        let counts = source.class_counts();
        for (part, share) in [(&plan.source_train, 0.8), (&plan.source_val, 0.2)] {
            let mut got = [0usize; NUM_CLASSES];
            for &i in part.iter() {
                got[source.labels[i]] += 1;
            }
            for c in 0..NUM_CLASSES {
                prop_assert!((got[c] as f64 - share * counts[c] as f64).abs() <= 1.0);
            }
        }
    }
}

// --- training and metrics --------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn metrics_are_consistent(pairs in prop::collection::vec((0..NUM_CLASSES, 0..NUM_CLASSES), 1..200)) {
        let (labels, preds): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let r = MetricsReport::from_predictions(&labels, &preds).unwrap();
        let total: usize = r.confusion.iter().flatten().sum();
        prop_assert_eq!(total, labels.len());
        prop_assert_eq!(r.n, labels.len());
        let defined: Vec<f64> = r.per_class_acc.iter().flatten().copied().collect();
        prop_assert_eq!(r.avg_acc, defined.iter().sum::<f64>() / defined.len() as f64);
        prop_assert_eq!(r.missing_classes, defined.len() < NUM_CLASSES);
    }

    #[test]
    fn lambda_schedule_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(lambda_at(lo, 10.0) <= lambda_at(hi, 10.0));
        prop_assert!((0.0..1.0).contains(&lambda_at(lo, 10.0)));
    }
}

#[test]
fn training_history_invariants() {
    let (source, target) = synth_shift(40, 8, 2.0, 5).unwrap();
    let split = make_splits(&source, &target, 5).unwrap().apply(&source, &target);
    let data = TrainData::from_splits(&split);
    for early_stop in [EarlyStop::TargetVal, EarlyStop::SourceVal, EarlyStop::Off] {
        let cfg = TrainConfig {
            epochs: 12,
            batch_size: 16,
            patience: 3,
            early_stop,
            ..TrainConfig::default()
        };
        let (_, h) = train_dann(&data, &cfg).unwrap();
        // The reversal weight starts at 0 and never decreases.
        assert_eq!(h.steps[0].lambda, 0.0);
        assert!(h.steps.windows(2).all(|w| w[0].lambda <= w[1].lambda));
        for s in &h.steps {
            let total = s.label_loss - s.lambda * (s.domain_loss_source + s.domain_loss_target);
            assert!((s.total - total).abs() <= 1e-10);
        }
        // The kept epoch is the first one reaching the best monitored accuracy.
        let monitored: Vec<f64> = h
            .epochs
            .iter()
            .map(|e| match h.monitor {
                EarlyStop::TargetVal => e.target_val_acc.unwrap(),
                _ => e.source_val_acc,
            })
            .collect();
        if early_stop == EarlyStop::Off {
            assert_eq!(h.best_epoch, h.epochs.len());
            continue;
        }
        let best = h.best_acc.unwrap();
        assert_eq!(monitored[h.best_epoch - 1], best);
        assert!(monitored.iter().all(|a| *a <= best));
        assert!(monitored[..h.best_epoch - 1].iter().all(|a| *a < best));
    }
}

// --- embedding -------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn affinities_are_normalized(n in 12usize..60, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = randm(n, 4, 1.0, &mut rng);
        let perplexity = ((n as f64 - 1.0) / 3.0 - 0.5).min(10.0);
        let (p, entropies) = conditional_affinities(&x, perplexity).unwrap();
        for i in 0..n {
            prop_assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((entropies[i] - perplexity.ln()).abs() < 1e-4);
        }
        let joint = joint_affinities(&p);
        prop_assert!((joint.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn embedding_follows_a_row_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 40;
    let x = randm(n, 5, 1.0, &mut rng);
    // A small step keeps the optimizer contractive on 40 points; at the
    // default rate rounding differences from the reordered sums grow about
    // fivefold per iteration and swamp the comparison.
    let cfg = TsneConfig {
        perplexity: 8.0,
        iterations: 300,
        learning_rate: 5.0,
        ..TsneConfig::default()
    };
    let init = initial_layout(n, &cfg);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.reverse();
    perm.swap(3, 17);
    let out = tsne_from(&x, &init, &cfg).unwrap();
    let permuted = tsne_from(&x.select_rows(&perm), &init.select_rows(&perm), &cfg).unwrap();
    for (k, &i) in perm.iter().enumerate() {
        for c in 0..2 {
            let (a, b) = (permuted.points.get(k, c), out.points.get(i, c));
            assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "row {i}: {a} vs {b}");
        }
    }
}
