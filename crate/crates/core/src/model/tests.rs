use super::*;
use crate::dataset::{DataRow, Dataset, ExposureCategory};
use crate::features::FeatureVector;
use crate::{Concentrations, Hour};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("f{i}")).collect()
}

fn random_model(rng: &mut ChaCha8Rng, inputs: usize, n1: usize, n2: usize) -> MlpModel {
    let shape = Shape { inputs, n1, n2 };
    let params = (0..shape.param_count())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let mean = (0..inputs).map(|_| rng.random_range(-1.0..1.0)).collect();
    let std = (0..inputs).map(|_| rng.random_range(0.5..2.0)).collect();
    MlpModel::from_parts("full".into(), names(inputs), shape, mean, std, Some(params)).unwrap()
}

fn dataset(features: Vec<Vec<f64>>, targets: Vec<Concentrations>) -> Dataset {
    let n = features.first().map_or(0, Vec::len);
    Dataset {
        feature_names: names(n),
        rows: features
            .into_iter()
            .zip(targets)
            .map(|(f, t)| DataRow {
                features: FeatureVector::from_raw(f),
                targets: t,
                station_id: "s".into(),
                hour: Hour(0),
                region: "r".into(),
                category: ExposureCategory::Low,
            })
            .collect(),
    }
}

#[test]
fn zero_model_outputs_zero() {
    let m = MlpModel::zeros("full", names(3), 4, 2).unwrap();
    assert_eq!(m.forward(&[1.0, -2.0, 3.0]).unwrap(), [0.0; 4]);
    assert_eq!(m.predict(&[1.0, -2.0, 3.0]).unwrap(), [0.0; 4]);
    assert!(matches!(
        m.forward(&[1.0]),
        Err(Error::DimensionMismatch {
            expected: 3,
            actual: 1
        })
    ));
}

#[test]
fn hand_computed_forward() {
    // x = 2 → z1 = 2·2 − 1 = 3 → z2 = 3·3 + 0.5 = 9.5 → out = (9.5, −9.5 + 10, 0, 19).
    let shape = Shape {
        inputs: 1,
        n1: 1,
        n2: 1,
    };
    let params = vec![
        2.0, -1.0, 3.0, 0.5, 1.0, -1.0, 0.0, 2.0, 0.0, 10.0, 0.0, 0.0,
    ];
    let m = MlpModel::from_parts(
        "full".into(),
        names(1),
        shape,
        vec![0.0],
        vec![1.0],
        Some(params),
    )
    .unwrap();
    assert_eq!(m.forward(&[2.0]).unwrap(), [9.5, 0.5, 0.0, 19.0]);
    // x = 0 → z1 = −1 is cut by ReLU, so h2 = b2 = 0.5.
    assert_eq!(m.forward(&[0.0]).unwrap(), [0.5, 9.5, 0.0, 1.0]);
    let mut neg = m.clone();
    neg.params_mut()[8] = -5.0;
    assert_eq!(neg.forward(&[0.0]).unwrap()[0], -4.5);
    assert_eq!(neg.predict(&[0.0]).unwrap()[0], 0.0);
    // NA input is imputed with the normalization mean.
    assert_eq!(m.forward(&[f64::NAN]).unwrap(), m.forward(&[0.0]).unwrap());
}

#[test]
fn batched_forward_matches_single() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = random_model(&mut rng, 5, 8, 4);
    let rows: Vec<Vec<f64>> = (0..50)
        .map(|_| (0..5).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    let batch = m.predict_batch(&rows, Execution::default()).unwrap();
    for (r, b) in rows.iter().zip(&batch) {
        assert_eq!(&m.predict(r).unwrap(), b);
    }
}

#[test]
fn msle_examples() {
    let y: Vec<Concentrations> = vec![[Some(1.0), Some(2.0), None, Some(0.0)]];
    assert_eq!(msle_loss(&[[1.0, 2.0, 7.0, 0.0]], &y).unwrap(), 0.0);
    let one = msle_loss(
        &[[std::f64::consts::E - 1.0, 0.0, 0.0, 0.0]],
        &[[Some(0.0), None, None, None]],
    )
    .unwrap();
    assert!((one - 1.0).abs() < 1e-15);
    // Negative outputs are clamped at 0.
    assert_eq!(
        msle_loss(&[[-3.0, 0.0, 0.0, 0.0]], &[[Some(0.0), None, None, None]]).unwrap(),
        0.0
    );
    assert!(msle_loss(&[[1.0; 4]], &[[None; 4]]).is_err());

    let outs = vec![[3.0, 1.0, 0.5, 9.0], [0.2, 4.0, 2.0, 1.0]];
    let ts = vec![
        [Some(2.0), None, Some(1.0), Some(8.0)],
        [None, Some(5.0), Some(0.0), None],
    ];
    let base = msle_loss(&outs, &ts).unwrap();
    let mut outs2 = outs.clone();
    let mut ts2 = ts.clone();
    outs2.push([100.0, -4.0, 3.0, 2.0]);
    ts2.push([None; 4]);
    assert_eq!(msle_loss(&outs2, &ts2).unwrap(), base);
}

fn fd_check(model: &MlpModel, batch: &TrainingBatch) -> f64 {
    let g = gradient(model, batch, Execution::Sequential).unwrap();
    let eps = 1e-5;
    let mut numeric = vec![0.0; g.params.len()];
    let mut m = model.clone();
    for i in 0..numeric.len() {
        let orig = m.params()[i];
        m.params_mut()[i] = orig + eps;
        let up = gradient(&m, batch, Execution::Sequential).unwrap().loss;
        m.params_mut()[i] = orig - eps;
        let down = gradient(&m, batch, Execution::Sequential).unwrap().loss;
        m.params_mut()[i] = orig;
        numeric[i] = (up - down) / (2.0 * eps);
    }
    let diff: f64 = g
        .params
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let na: f64 = g.params.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-300)
}

fn random_batch(rng: &mut ChaCha8Rng, model: &MlpModel, n: usize) -> TrainingBatch {
    let d = model.input_dim();
    let features: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let targets: Vec<Concentrations> = (0..n)
        .map(|i| {
            let mut t =
                [0; 4].map(|_| (rng.random::<f64>() < 0.7).then(|| rng.random_range(0.0..5.0)));
            if i == 0 {
                t[0] = Some(1.0);
            }
            t
        })
        .collect();
    TrainingBatch::new(model, &features, &targets).unwrap()
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..25 {
        let (i, n1, n2) = (
            rng.random_range(1..5),
            rng.random_range(1..6),
            rng.random_range(1..5),
        );
        let mut model = random_model(&mut rng, i, n1, n2);
        // Keep outputs positive so the clamp is inactive.
        let off = model.shape().output_offset() + 4 * n2;
        for k in 0..4 {
            model.params_mut()[off + k] = 3.0;
        }
        let batch = random_batch(&mut rng, &model, 6);
        let err = fd_check(&model, &batch);
        assert!(err <= 1e-4, "relative error {err}");
    }
}

#[test]
fn gradient_vanishes_at_minimum_and_ignores_na() {
    let mut m = MlpModel::zeros("full", names(2), 3, 2).unwrap();
    let off = m.shape().output_offset() + 4 * 2;
    let y = [4.0, 20.0, 7.5, 1.0];
    m.params_mut()[off..].copy_from_slice(&y);
    let features = vec![vec![0.3, 1.0], vec![-2.0, 0.5]];
    let targets = vec![y.map(Some), [Some(4.0), None, None, Some(1.0)]];
    let batch = TrainingBatch::new(&m, &features, &targets).unwrap();
    let g = gradient(&m, &batch, Execution::Sequential).unwrap();
    assert!(g.params.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-8);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = random_model(&mut rng, 3, 4, 3);
    let f: Vec<Vec<f64>> = (0..5)
        .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let t: Vec<Concentrations> = (0..5)
        .map(|_| [Some(rng.random_range(0.0..9.0)), None, Some(1.0), None])
        .collect();
    let base = gradient(
        &model,
        &TrainingBatch::new(&model, &f, &t).unwrap(),
        Execution::Sequential,
    )
    .unwrap();
    let (mut f2, mut t2) = (f.clone(), t.clone());
    f2.insert(2, vec![5.0, -5.0, 1.0]);
    t2.insert(2, [None; 4]);
    let with_na = gradient(
        &model,
        &TrainingBatch::new(&model, &f2, &t2).unwrap(),
        Execution::Sequential,
    )
    .unwrap();
    assert_eq!(base.loss, with_na.loss);
    for (a, b) in base.params.iter().zip(&with_na.params) {
        assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
    }
}

#[test]
fn adam_examples() {
    let mut p = vec![1.0, -2.0];
    let mut st = AdamState::new(2);
    adam_step(&mut p, &[0.0, 0.0], &mut st, 0.001).unwrap();
    assert_eq!(p, vec![1.0, -2.0]);

    let mut p = vec![1.0, -2.0, 0.5];
    let mut st = AdamState::new(3);
    adam_step(&mut p, &[0.3, -40.0, 0.0], &mut st, 0.001).unwrap();
    // Step one: m̂ = g, v̂ = g², so the update is lr·g/(|g| + ε).
    assert!((p[0] - (1.0 - 0.001 * 0.3 / (0.3 + 1e-8))).abs() < 1e-15);
    assert!((p[1] - (-2.0 + 0.001 * 40.0 / (40.0 + 1e-8))).abs() < 1e-15);
    assert_eq!(p[2], 0.5);

    // Scalar reference trace for two steps.
    let (g1, g2, lr) = (0.5f64, -1.5f64, 0.01);
    let m1 = 0.1 * g1;
    let v1 = 0.001 * g1 * g1;
    let x1 = 2.0 - lr * (m1 / 0.1) / ((v1 / 0.001).sqrt() + 1e-8);
    let m2 = 0.9 * m1 + 0.1 * g2;
    let v2 = 0.999 * v1 + 0.001 * g2 * g2;
    let x2 = x1 - lr * (m2 / (1.0 - 0.81)) / ((v2 / (1.0 - 0.999 * 0.999)).sqrt() + 1e-8);
    let mut p = vec![2.0];
    let mut st = AdamState::new(1);
    adam_step(&mut p, &[g1], &mut st, lr).unwrap();
    adam_step(&mut p, &[g2], &mut st, lr).unwrap();
    assert!((p[0] - x2).abs() < 1e-14, "{} vs {x2}", p[0]);
    assert_eq!(st.steps(), 2);
    assert!(adam_step(&mut p, &[1.0, 2.0], &mut st, lr).is_err());
}

fn toy_dataset(rng: &mut ChaCha8Rng, n: usize, constant: bool) -> Dataset {
    let features: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..4).map(|_| rng.random_range(0.0..10.0)).collect())
        .collect();
    let targets = features
        .iter()
        .map(|f| {
            if constant {
                [Some(12.0), Some(40.0), Some(8.0), None]
            } else {
                [
                    Some(2.0 * f[0] + f[1]),
                    Some(60.0 - 3.0 * f[0]),
                    (f[2] > 5.0).then_some(f[3]),
                    Some(f[2] + f[3]),
                ]
            }
        })
        .collect();
    dataset(features, targets)
}

#[test]
fn constant_targets_are_learned() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = toy_dataset(&mut rng, 500, true);
    let cfg = TrainConfig {
        epochs: 50,
        batch_size: 64,
        n1: 16,
        n2: 8,
        ..TrainConfig::default()
    };
    let out = train(&data, "full", &cfg).unwrap();
    assert_eq!(out.loss_trace.len(), 50);
    assert!(out.loss_trace.iter().all(|l| l.is_finite()));
    assert!(
        *out.loss_trace.last().unwrap() < 1e-3,
        "{:?}",
        out.loss_trace
    );
}

#[test]
fn training_is_deterministic_across_execution_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data = toy_dataset(&mut rng, 700, false);
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 200,
        n1: 12,
        n2: 6,
        seed: 9,
        execution: Execution::Sequential,
        ..TrainConfig::default()
    };
    let a = train(&data, "full", &cfg).unwrap();
    let b = train(
        &data,
        "full",
        &TrainConfig {
            execution: Execution::Parallel,
            ..cfg
        },
    )
    .unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.loss_trace, b.loss_trace);
    assert!(a.loss_trace.last() < a.loss_trace.first());
    let c = train(&data, "full", &TrainConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.model.fingerprint(), c.model.fingerprint());
    assert!(train(&dataset(vec![], vec![]), "full", &cfg).is_err());
}

#[test]
fn transfer_freezes_hidden_layers() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let global_data = toy_dataset(&mut rng, 600, false);
    let cfg = TrainConfig {
        epochs: 4,
        batch_size: 128,
        n1: 10,
        n2: 6,
        ..TrainConfig::default()
    };
    let global = train(&global_data, "full", &cfg).unwrap().model;
    let mut regional = toy_dataset(&mut rng, 80, false);
    for r in &mut regional.rows {
        r.targets = r.targets.map(|t| t.map(|v| 1.5 * v));
    }
    let same = transfer_fit(&global, &regional, &TrainConfig { epochs: 0, ..cfg }).unwrap();
    assert_eq!(same.model, global);
    let tuned = transfer_fit(
        &global,
        &regional,
        &TrainConfig {
            epochs: 20,
            batch_size: 16,
            ..cfg
        },
    )
    .unwrap();
    assert_eq!(tuned.model.hidden_params(), global.hidden_params());
    assert_eq!(
        tuned.model.hidden_fingerprint(),
        global.hidden_fingerprint()
    );
    assert_eq!(tuned.model.norm_mean(), global.norm_mean());
    assert_ne!(tuned.model.b3(), global.b3());
    assert!(tuned.loss_trace.last() < tuned.loss_trace.first());

    let mut other = regional.clone();
    other.feature_names[0] = "other".into();
    assert!(matches!(
        transfer_fit(&global, &other, &cfg),
        Err(Error::LayoutMismatch(_))
    ));
}

#[test]
fn model_file_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = random_model(&mut rng, 7, 5, 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    m.save(&path).unwrap();
    let back = MlpModel::load(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.fingerprint(), m.fingerprint());
    let x: Vec<f64> = (0..7).map(|i| i as f64).collect();
    assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap());

    let mut bytes = m.to_bytes();
    bytes[8] = 99;
    assert!(matches!(
        MlpModel::from_bytes(&bytes),
        Err(Error::ModelFormat(_))
    ));
    let bytes = m.to_bytes();
    assert!(MlpModel::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    assert!(MlpModel::from_bytes(b"not a model").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn predictions_nonnegative_and_finite(seed in any::<u64>(), x in proptest::collection::vec(-1e6f64..1e6, 3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(&mut rng, 3, 4, 3);
        for v in m.predict(&x).unwrap() {
            prop_assert!(v >= 0.0 && v.is_finite());
        }
    }

    #[test]
    fn loss_is_permutation_invariant(
        outs in proptest::collection::vec(proptest::array::uniform4(-5.0f64..50.0), 1..12),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ts: Vec<Concentrations> = outs.iter().map(|_| [Some(rng.random_range(0.0..40.0)), None, Some(1.0), None]).collect();
        let mut idx: Vec<usize> = (0..outs.len()).collect();
        use rand::seq::SliceRandom;
        idx.shuffle(&mut rng);
        let po: Vec<_> = idx.iter().map(|&i| outs[i]).collect();
        let pt: Vec<_> = idx.iter().map(|&i| ts[i]).collect();
        let a = msle_loss(&outs, &ts).unwrap();
        let b = msle_loss(&po, &pt).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }
}
