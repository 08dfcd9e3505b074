use geoforensics_core::learn::{
    encode_segments, gradient_check, load_grid_model, load_model, load_set_model, model_to_text, save_model,
    saliency_set, train_logreg, train_set, GridModel, LearnError, LogRegModel, LogRegParams, Model, SegmentFeatures,
    SetNetConfig, SetNetModel, SgdParams,
};
use geoforensics_core::lsd::LineSegment;
use geoforensics_core::synth::{render, SceneSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_segments(rng: &mut ChaCha8Rng, n: usize) -> Vec<LineSegment> {
    (0..n)
        .map(|_| {
            LineSegment::new(
                rng.random_range(0.0..200.0),
                rng.random_range(0.0..100.0),
                rng.random_range(0.0..200.0),
                rng.random_range(0.0..100.0),
            )
        })
        .collect()
}

fn small_weights(model: &mut SetNetModel, rng: &mut ChaCha8Rng) {
    let p: Vec<f64> = model.params().iter().map(|_| rng.random_range(-0.3..0.3)).collect();
    model.set_params(&p);
}

#[test]
fn set_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut model = SetNetModel::new(&SetNetConfig::default(), 11);
    small_weights(&mut model, &mut rng);
    let set = encode_segments(&random_segments(&mut rng, 3), (200, 100), 512);
    for real in [true, false] {
        let (_, g) = model.loss_and_grad(&set, real);
        let mut m = model.clone();
        let err = gradient_check(&model.params(), &g, 1e-5, 1e-7, |p| {
            m.set_params(p);
            m.loss_and_grad(&set, real).0
        });
        assert!(err <= 1e-4, "relative error {err}");
    }
}

#[test]
fn grid_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for seed in 0..5 {
        let model = GridModel::new((3, 2), 32, seed);
        let x: Vec<f64> = (0..18).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, g) = model.loss_and_grad(&x, seed % 2 == 0);
        let mut m = model.clone();
        let err = gradient_check(&model.params(), &g, 1e-5, 1e-7, |p| {
            m.set_params(p);
            m.loss_and_grad(&x, seed % 2 == 0).0
        });
        assert!(err <= 1e-4, "relative error {err}");
    }
}

#[test]
fn logistic_gradient_step_matches_hand_computation() {
    let mut m = LogRegModel::zeros(vec!["x".into()]);
    let (loss, g) = m.loss_and_grad(&[1.0], true, 0.0);
    assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    let h = 1e-6;
    let mut p = m.clone();
    p.weights[0] = h;
    let mut q = m.clone();
    q.weights[0] = -h;
    let numeric = (p.loss_and_grad(&[1.0], true, 0.0).0 - q.loss_and_grad(&[1.0], true, 0.0).0) / (2.0 * h);
    assert!((g[0] - numeric).abs() < 1e-9);
    m.gradient_step(&[1.0], true, 0.1, 0.0);
    assert!((m.weights[0] - 0.05).abs() < 1e-15);
    assert!((m.bias - 0.05).abs() < 1e-15);
}

fn blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..200 {
        let real = i % 2 == 0;
        let c = if real { 2.5 } else { -2.5 };
        x.push(vec![c + noise.sample(&mut rng), c + noise.sample(&mut rng)]);
        y.push(real);
    }
    (x, y)
}

#[test]
fn separable_blobs_are_learned() {
    let (x, y) = blobs(7);
    let params = LogRegParams {
        epochs: 500,
        ..LogRegParams::default()
    };
    let m = train_logreg(vec!["a".into(), "b".into()], &x, &y, &params).unwrap();
    let correct = x
        .iter()
        .zip(&y)
        .filter(|(xi, yi)| (m.predict(xi).unwrap().score > 0.5) == **yi)
        .count();
    assert!(correct as f64 / 200.0 >= 0.99, "accuracy {}", correct as f64 / 200.0);
    assert!(m.train_meta.final_loss.is_finite());
}

#[test]
fn standardization_makes_feature_scale_irrelevant() {
    let (x, y) = blobs(21);
    let scale = [1e-3, 250.0];
    let xs: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0] * scale[0], r[1] * scale[1]]).collect();
    let names = || vec!["a".to_string(), "b".to_string()];
    let a = train_logreg(names(), &x, &y, &LogRegParams::default()).unwrap();
    let b = train_logreg(names(), &xs, &y, &LogRegParams::default()).unwrap();
    for (r, rs) in x.iter().zip(&xs) {
        let (pa, pb) = (a.predict(r).unwrap(), b.predict(rs).unwrap());
        assert!((pa.score - pb.score).abs() <= 1e-9);
    }
}

#[test]
fn training_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sets: Vec<Vec<SegmentFeatures>> =
        (0..12).map(|_| encode_segments(&random_segments(&mut rng, 6), (200, 100), 512)).collect();
    let labels: Vec<bool> = (0..12).map(|i| i % 3 == 0).collect();
    let params = SgdParams {
        epochs: 3,
        batch: 4,
        subset_sampling: true,
        ..SgdParams::default()
    };
    let run = || {
        let t = train_set(SetNetModel::new(&SetNetConfig::default(), 3), &sets, &labels, &params).unwrap();
        model_to_text(&Model::Set(t.model))
    };
    assert_eq!(run(), run());
}

#[test]
fn first_epochs_do_not_increase_loss() {
    let dims = (256, 256);
    let mut sets = Vec::new();
    let mut labels = Vec::new();
    for k in 0..40u64 {
        let eps = if k % 2 == 0 { 0.0 } else { 0.26 };
        let r = render(&SceneSpec::random(300 + k, dims, eps, 0.0)).unwrap();
        let segs: Vec<LineSegment> = r.truth.true_segments.iter().map(|t| t.segment).collect();
        sets.push(encode_segments(&segs, dims, 512));
        labels.push(eps == 0.0);
    }
    let params = SgdParams {
        epochs: 5,
        ..SgdParams::default()
    };
    let t = train_set(SetNetModel::new(&SetNetConfig::default(), 42), &sets, &labels, &params).unwrap();
    assert_eq!(t.loss_history.len(), 6);
    assert!((t.loss_history[0] - std::f64::consts::LN_2).abs() < 0.1);
    for w in t.loss_history.windows(2) {
        assert!(w[1] <= w[0], "{:?}", t.loss_history);
    }
}

#[test]
fn single_class_training_is_rejected() {
    let sets = vec![encode_segments(&[LineSegment::new(0.0, 0.0, 5.0, 5.0)], (10, 10), 8); 4];
    let r = train_set(SetNetModel::new(&SetNetConfig::default(), 1), &sets, &[true; 4], &SgdParams::default());
    assert!(matches!(r, Err(LearnError::SingleClass)));
}

#[test]
fn singleton_saliency_is_l1_norm_of_input_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = SetNetModel::new(&SetNetConfig::default(), 8);
    for _ in 0..10 {
        let set = encode_segments(&random_segments(&mut rng, 1), (200, 100), 512);
        let sal = model.saliency_encoded(&set)[0];
        let h = 1e-6;
        let mut numeric = 0.0;
        for j in 0..5 {
            let mut p = set.clone();
            let mut q = set.clone();
            p[0][j] += h;
            q[0][j] -= h;
            let d = model.forward_encoded(&p).unwrap().logit - model.forward_encoded(&q).unwrap().logit;
            numeric += (d / (2.0 * h)).abs();
        }
        assert!(sal > 0.0);
        assert!((sal - numeric).abs() <= 1e-5 * numeric.max(1.0), "{sal} vs {numeric}");
    }
}

#[test]
fn saliency_is_indexed_by_input_segment() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = SetNetModel::new(&SetNetConfig::default(), 9);
    let mut segs = random_segments(&mut rng, 7);
    segs.insert(3, LineSegment::new(4.0, 4.0, 4.0, 4.0));
    let sal = saliency_set(&model, &segs, (200, 100));
    assert_eq!(sal.len(), 8);
    assert_eq!(sal[3], 0.0);
    assert!(sal.iter().all(|v| *v >= 0.0));
}

#[test]
fn saved_models_predict_identically() {
    let dir = tempfile::TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);

    let set = SetNetModel::new(&SetNetConfig::default(), 10);
    let path = dir.path().join("set.model");
    save_model(&path, &Model::Set(set.clone())).unwrap();
    let back = load_set_model(&path).unwrap();
    for _ in 0..10 {
        let s = encode_segments(&random_segments(&mut rng, 5), (200, 100), 512);
        assert_eq!(
            set.forward_encoded(&s).unwrap().logit.to_bits(),
            back.forward_encoded(&s).unwrap().logit.to_bits()
        );
    }
    assert!(matches!(load_grid_model(&path), Err(LearnError::KindMismatch { .. })));

    let grid = GridModel::new((2, 2), 8, 10);
    let gpath = dir.path().join("grid.model");
    save_model(&gpath, &Model::Grid(grid.clone())).unwrap();
    let Model::Grid(gback) = load_model(&gpath).unwrap() else { panic!("kind") };
    for _ in 0..10 {
        let x: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert_eq!(grid.forward_flat(&x).logit.to_bits(), gback.forward_flat(&x).logit.to_bits());
    }

    let (x, y) = blobs(3);
    let lr = train_logreg(vec!["a".into(), "b".into()], &x, &y, &LogRegParams::default()).unwrap();
    let lpath = dir.path().join("lr.model");
    save_model(&lpath, &Model::LogReg(lr.clone())).unwrap();
    let Model::LogReg(lback) = load_model(&lpath).unwrap() else { panic!("kind") };
    for r in x.iter().take(10) {
        assert_eq!(lr.predict(r).unwrap().logit.to_bits(), lback.predict(r).unwrap().logit.to_bits());
    }
}

#[test]
fn prediction_score_is_sigmoid_of_logit() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let model = SetNetModel::new(&SetNetConfig::default(), 13);
    for _ in 0..50 {
        let n = rng.random_range(1..20);
        let s = encode_segments(&random_segments(&mut rng, n), (200, 100), 512);
        let p = model.forward_encoded(&s).unwrap();
        assert!((p.score - 1.0 / (1.0 + (-p.logit).exp())).abs() <= 1e-12);
    }
}
