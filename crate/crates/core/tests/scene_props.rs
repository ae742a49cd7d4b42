use gazeshutter::config::SceneParams;
use gazeshutter::dataset::PrivacyClass;
use gazeshutter::scene::{
    cnn_direct_classify, train_scene_model, SceneDescriptor, SceneModel, DESCRIPTOR_DIM, EMBEDDING_DIM,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn descriptor(rng: &mut ChaCha8Rng, center: f64) -> SceneDescriptor {
    SceneDescriptor::new((0..DESCRIPTOR_DIM).map(|_| center + rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn batch(seed: u64, n: usize) -> Vec<(SceneDescriptor, PrivacyClass)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let c = if i % 2 == 0 { PrivacyClass::Sensitive } else { PrivacyClass::NonSensitive };
            (descriptor(&mut rng, 0.0), c)
        })
        .collect()
}

/// Plain matrix-vector products written independently of the model code.
fn oracle_forward(m: &SceneModel, d: &[f64]) -> (Vec<f64>, [f64; 2]) {
    let mut h = vec![0.0; EMBEDDING_DIM];
    for j in 0..EMBEDDING_DIM {
        let mut acc = m.b1[j];
        for i in 0..DESCRIPTOR_DIM {
            acc += m.w1[j * DESCRIPTOR_DIM + i] * d[i];
        }
        h[j] = if acc > 0.0 { acc } else { 0.0 };
    }
    let mut z = [0.0; 2];
    for c in 0..2 {
        z[c] = m.b2[c];
        for j in 0..EMBEDDING_DIM {
            z[c] += m.w2[c * EMBEDDING_DIM + j] * h[j];
        }
    }
    let p0 = 1.0 / (1.0 + (z[1] - z[0]).exp());
    (h, [p0, 1.0 - p0])
}

fn param_mut(m: &mut SceneModel, k: usize) -> &mut f64 {
    let (a, b, c) = (m.w1.len(), m.b1.len(), m.w2.len());
    if k < a {
        &mut m.w1[k]
    } else if k < a + b {
        &mut m.b1[k - a]
    } else if k < a + b + c {
        &mut m.w2[k - a - b]
    } else {
        &mut m.b2[k - a - b - c]
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forward_matches_hand_rolled_oracle(seed in any::<u64>(), scale in 0.001f64..0.2) {
        let m = SceneModel::random(seed, scale);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let d = descriptor(&mut rng, 0.0);
        let out = m.forward(&d);
        let (h, p) = oracle_forward(&m, d.values());
        for j in 0..EMBEDDING_DIM {
            prop_assert!((out.embedding.0[j] - h[j]).abs() <= 1e-12 * (1.0 + h[j].abs()));
            prop_assert!(out.embedding.0[j] >= 0.0);
        }
        prop_assert!((out.probabilities[0] - p[0]).abs() < 1e-12);
        prop_assert!((out.probabilities.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let (class, score) = cnn_direct_classify(&m, &d);
        prop_assert_eq!(score, out.probabilities[0]);
        prop_assert_eq!(class == PrivacyClass::Sensitive, p[0] >= 0.5);
    }

    #[test]
    fn softmax_sums_to_one_for_extreme_logits(seed in any::<u64>(), scale in 1.0f64..50.0) {
        let m = SceneModel::random(seed, scale);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = m.forward(&descriptor(&mut rng, 0.0)).probabilities;
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((p[0] + p[1] - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences(seed in any::<u64>()) {
        let m = SceneModel::random(seed, 0.05);
        let data = batch(seed ^ 7, 4);
        let (_, g) = m.loss_and_gradient(&data);
        let analytic: Vec<f64> = g.w1.iter().chain(&g.b1).chain(&g.w2).chain(&g.b2).cloned().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 99);
        let eps = 1e-5;
        for _ in 0..20 {
            let k = rng.random_range(0..analytic.len());
            let mut plus = m.clone();
            *param_mut(&mut plus, k) += eps;
            let mut minus = m.clone();
            *param_mut(&mut minus, k) -= eps;
            let numeric = (plus.loss(&data) - minus.loss(&data)) / (2.0 * eps);
            let rel = (numeric - analytic[k]).abs() / (numeric.abs() + analytic[k].abs()).max(1e-7);
            prop_assert!(rel < 1e-4, "param {}: analytic {} numeric {}", k, analytic[k], numeric);
        }
    }
}

#[test]
fn zero_model_has_loss_ln2() {
    let data = batch(3, 6);
    assert!((SceneModel::zeros().loss(&data) - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn training_is_deterministic() {
    let data = batch(11, 10);
    let params = SceneParams { epochs: 15, learning_rate: 0.1, seed: 4 };
    let a = train_scene_model(&data, &params).unwrap();
    let b = train_scene_model(&data, &params).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.loss_history, b.loss_history);
}

#[test]
fn loss_history_never_increases_beyond_tolerance() {
    let data = batch(12, 10);
    let params = SceneParams { epochs: 40, learning_rate: 5.0, seed: 1 };
    let t = train_scene_model(&data, &params).unwrap();
    for w in t.loss_history.windows(2) {
        assert!(w[1] <= w[0] + 1e-6);
    }
}

#[test]
fn separable_clusters_are_learned_within_200_epochs() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut data = Vec::new();
    for i in 0..40 {
        let (c, center) = if i % 2 == 0 { (PrivacyClass::Sensitive, 0.5) } else { (PrivacyClass::NonSensitive, -0.5) };
        data.push((descriptor(&mut rng, center), c));
    }
    let params = SceneParams { epochs: 200, ..SceneParams::default() };
    let model = train_scene_model(&data, &params).unwrap().model;
    let correct = data.iter().filter(|(d, c)| cnn_direct_classify(&model, d).0 == *c).count();
    assert_eq!(correct, data.len());
}

#[test]
fn saved_model_reloads_identically() {
    let m = SceneModel::random(5, 0.1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.json");
    m.save(&path).unwrap();
    assert_eq!(SceneModel::load(&path).unwrap(), m);
}
