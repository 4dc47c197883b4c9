use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use seaice_core::losses::Objective;
use seaice_core::train::{evaluate, train, Dataset, LossKind, ModelSpec, TrainConfig};
use seaice_core::vit::{
    decode_checkpoint, encode_checkpoint, init_params, patchify, predict, unpatchify, Checkpoint, CheckpointMeta,
    ViTConfig,
};
use seaice_core::Tensor;

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.sample::<f32, _>(StandardNormal)).collect()
}

fn six_class() -> ViTConfig {
    ViTConfig {
        num_classes: 6,
        ..ViTConfig::vit_test()
    }
}

#[test]
fn patch_order_is_irrelevant_without_position_embedding() {
    let cfg = six_class();
    let mut params = init_params(&cfg, 4).unwrap();
    params.pos_embed = Tensor::zeros(params.pos_embed.shape().to_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let image = gaussian(&mut rng, 2 * 8 * 8);

    // Reverse the four patch tokens and rebuild the image.
    let tokens = patchify(&image, 2, 8, 8, 4).unwrap();
    let reversed: Vec<f32> = tokens.chunks(2 * 16).rev().flatten().copied().collect();
    let shuffled = unpatchify(&reversed, 2, 8, 8, 4).unwrap();
    assert_ne!(shuffled, image);

    let a = predict(&params, &cfg, &Tensor::new(vec![1, 2, 8, 8], image).unwrap()).unwrap();
    let b = predict(&params, &cfg, &Tensor::new(vec![1, 2, 8, 8], shuffled).unwrap()).unwrap();
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() < 1e-5, "{x} vs {y}");
    }
}

#[test]
fn batch_rows_are_independent() {
    let cfg = six_class();
    let params = init_params(&cfg, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let data = gaussian(&mut rng, 3 * 128);
    let whole = predict(&params, &cfg, &Tensor::new(vec![3, 2, 8, 8], data.clone()).unwrap()).unwrap();
    for (i, img) in data.chunks(128).enumerate() {
        let one = predict(&params, &cfg, &Tensor::new(vec![1, 2, 8, 8], img.to_vec()).unwrap()).unwrap();
        for (x, y) in one.data().iter().zip(&whole.data()[i * 6..(i + 1) * 6]) {
            assert!((x - y).abs() < 1e-5);
        }
    }
}

#[test]
fn overfits_sixty_four_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let labels: Vec<usize> = (0..64).map(|_| rng.gen_range(0..6)).collect();
    let data = Dataset::new(2, 8, gaussian(&mut rng, 64 * 128), labels).unwrap();
    let mut cfg = TrainConfig::new(LossKind::Ce, 0);
    cfg.adam.lr = 1e-3;
    cfg.batch_size = 64;
    cfg.steps = 500;
    cfg.record_wall_time = false;
    let model = ModelSpec::default().resolve(8, 6).unwrap();
    let out = train(&cfg, &model, &data, &Objective::CrossEntropy, |_| {}).unwrap();
    let names: Vec<String> = (0..6).map(|c| c.to_string()).collect();
    let acc = evaluate(&out.params, &model, &data, names).unwrap().accuracy().unwrap();
    assert!(acc >= 0.99, "accuracy {acc}");
    assert!(out.log.last().unwrap().loss < out.log[0].loss);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let cfg = six_class();
    let ckpt = Checkpoint {
        config: cfg.clone(),
        meta: CheckpointMeta {
            seed: 9,
            steps: 0,
            loss: "focal".into(),
            gamma: Some(2.0),
            class_names: (0..6).map(|c| format!("c{c}")).collect(),
        },
        params: init_params(&cfg, 9).unwrap(),
    };
    let bytes = encode_checkpoint(&ckpt).unwrap();
    let back = decode_checkpoint(&bytes).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(encode_checkpoint(&back).unwrap(), bytes);

    let again = Checkpoint {
        params: init_params(&cfg, 9).unwrap(),
        ..ckpt.clone()
    };
    assert_eq!(encode_checkpoint(&again).unwrap(), bytes);

    let mut bad = bytes.clone();
    bad[7] = b'2';
    assert!(decode_checkpoint(&bad).is_err());
    assert!(decode_checkpoint(&bytes[..bytes.len() - 4]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(decode_checkpoint(&extra).is_err());
}

#[test]
fn softmax_of_logits_is_a_distribution() {
    let cfg = six_class();
    let params = init_params(&cfg, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let logits = predict(
        &params,
        &cfg,
        &Tensor::new(vec![4, 2, 8, 8], gaussian(&mut rng, 512)).unwrap(),
    )
    .unwrap();
    for row in logits.data().chunks(6) {
        let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
        let z: f64 = row.iter().map(|&v| (v as f64 - m).exp()).sum();
        let p: Vec<f64> = row.iter().map(|&v| (v as f64 - m).exp() / z).collect();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x > 0.0));
    }
}

#[test]
fn parameter_counts_follow_layout() {
    assert_eq!(ViTConfig::vit_test().param_count(), 1227);
    assert_eq!(six_class().param_count(), 1254);
    assert_eq!(init_params(&six_class(), 0).unwrap().count(), 1254);
}
