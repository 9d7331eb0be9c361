use bandless::kspace::*;
use bandless::models::*;
use bandless::Error;
use gradcore::gradcheck::check_gradients;
use gradcore::{PoolKind, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn slice64() -> KSpaceSlice {
    simulate_slice(&SimulationParams { slices: 1, ..Default::default() }, 0).unwrap()
}

fn tiny_adversary() -> AdversaryConfig {
    AdversaryConfig {
        stem_channels: 4,
        block1_channels: 4,
        block2_channels: 8,
        groups: 2,
        pool_window: 2,
        pool: PoolChoice(PoolKind::Avg),
    }
}

#[test]
fn empty_cascade_is_zero_filled_rss() {
    let s = slice64();
    let mask = make_mask(64, 4, 16, 1).unwrap();
    let x0 = apply_mask(&s.kspace, &mask).unwrap();
    let cfg = PredictorConfig { cascades: 0, ..Default::default() };
    let ns = init_predictor::<f64>(0, &cfg).unwrap();
    assert!(ns.is_empty());
    let out = predictor_forward(&x0, &mask, &s.sens.maps, &ns, &cfg).unwrap();
    let zf = rss(&x0.ifft2c().unwrap()).unwrap();
    assert_eq!(out.to_vec(), zf.to_vec());
}

#[test]
fn zero_update_with_unit_lambda_keeps_acquired_data() {
    // The final U-Net projection starts at zero, so with lambda = 1 every
    // cascade returns x0 unchanged and the output is the zero-filled RSS.
    let s = slice64();
    let mask = make_mask(64, 4, 16, 2).unwrap();
    let x0 = apply_mask(&s.kspace, &mask).unwrap();
    let cfg = PredictorConfig { cascades: 2, ..Default::default() };
    let ns = init_predictor::<f64>(3, &cfg).unwrap();
    assert_eq!(ns.get("cascade1.lambda").unwrap().to_vec(), vec![1.0]);
    let out = predictor_forward(&x0, &mask, &s.sens.maps, &ns, &cfg).unwrap();
    let zf = rss(&x0.ifft2c().unwrap()).unwrap();
    assert_eq!(out.to_vec(), zf.to_vec());
}

#[test]
fn random_predictor_output_is_finite() {
    let s = slice64();
    let mask = make_mask(64, 4, 16, 0).unwrap();
    let x0 = apply_mask(&s.kspace, &mask).unwrap();
    let cfg = PredictorConfig::default();
    let mut ns = init_predictor::<f32>(1, &cfg).unwrap();
    // Give the zero-initialised projections random values too.
    for t in 0..cfg.cascades {
        let name = format!("cascade{t}.unet.out.weight");
        let shape = ns.get(&name).unwrap().shape().to_vec();
        let n: usize = shape.iter().product();
        let v: Vec<f32> = (0..n).map(|i| ((i * 37 % 11) as f32 - 5.0) * 0.05).collect();
        ns.set(&name, Tensor::from_vec(v, &shape).unwrap()).unwrap();
    }
    let out = predictor_forward(&x0.cast(), &mask, &s.sens.maps.cast(), &ns, &cfg).unwrap();
    assert_eq!(out.shape(), &[64, 64]);
    assert!(out.all_finite());
}

#[test]
fn predictor_rejects_mismatched_inputs() {
    let s = slice64();
    let cfg = PredictorConfig::default();
    let ns = init_predictor::<f64>(0, &cfg).unwrap();
    let bad_mask = make_mask(32, 4, 8, 0).unwrap();
    assert!(predictor_forward(&s.kspace, &bad_mask, &s.sens.maps, &ns, &cfg).is_err());
    let deep = PredictorConfig { unet_pools: 7, ..cfg.clone() };
    let mask = make_mask(64, 4, 16, 0).unwrap();
    assert!(predictor_forward(&s.kspace, &mask, &s.sens.maps, &ns, &deep).is_err());
}

#[test]
fn predictor_depends_on_every_parameter_only() {
    let s = simulate_slice(&SimulationParams { slices: 1, size: 32, coils: 2, ..Default::default() }, 0).unwrap();
    let mask = make_mask(32, 4, 8, 0).unwrap();
    let x0 = apply_mask(&s.kspace, &mask).unwrap();
    let cfg = PredictorConfig { cascades: 1, unet_channels: 4, unet_pools: 1, norm_groups: 2 };
    let mut ns = init_predictor::<f64>(0, &cfg).unwrap();
    ns.set("cascade0.unet.out.weight", Tensor::full(&[2, 4, 1, 1], 0.1)).unwrap();
    let vars = ns.vars();
    let out = predictor_forward(&x0, &mask, &s.sens.maps, &vars, &cfg).unwrap();
    let g = gradcore::backward(&out.sum().unwrap(), false).unwrap();
    for (name, v) in vars.iter() {
        assert!(g.get(v).is_some(), "no gradient for {name}");
    }
}

#[test]
fn adversary_output_in_open_unit_interval() {
    let cfg = AdversaryConfig::desk();
    let ns = init_adversary::<f64>(0, &cfg).unwrap();
    for scale in [0.0, 1.0, 1e3] {
        let img = Tensor::from_f64(
            &(0..64 * 64).map(|i| scale * ((i % 13) as f64 - 6.0)).collect::<Vec<_>>(),
            &[64, 64],
        )
        .unwrap();
        let p = adversary_forward(&img, &ns, &cfg).unwrap().prob.item().unwrap();
        assert!(p > 0.0 && p < 1.0, "{p}");
    }
}

#[test]
fn zero_head_gives_one_half() {
    let cfg = AdversaryConfig::desk();
    let mut ns = init_adversary::<f64>(0, &cfg).unwrap();
    let shape = ns.get("head.weight").unwrap().shape().to_vec();
    ns.set("head.weight", Tensor::zeros(&shape)).unwrap();
    ns.set("head.bias", Tensor::zeros(&[1])).unwrap();
    let img = Image64::noise(5);
    let p = adversary_forward(&img, &ns, &cfg).unwrap().prob.item().unwrap();
    assert_eq!(p, 0.5);
}

struct Image64;
impl Image64 {
    fn noise(seed: u64) -> Tensor<f64> {
        let ph = make_phantom(seed, 64, 64, PhantomKind::Textured).unwrap();
        ph.image.to_tensor()
    }
}

#[test]
fn adversary_input_gradient_matches_differences() {
    let cfg = tiny_adversary();
    let ns = init_adversary::<f64>(2, &cfg).unwrap();
    // Quantised inputs can park a ReLU within one difference step of its
    // kink, so draw them from a continuous distribution.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..1.0)).collect();
    let x = Tensor::from_f64(&x, &[8, 8]).unwrap();
    let f = |t: &[Tensor<f64>]| {
        adversary_forward(&t[0], &ns, &cfg)
            .map(|o| o.prob)
            .map_err(|e| match e {
                Error::Grad(g) => g,
                other => panic!("{other}"),
            })
    };
    let err = check_gradients(&f, &[x], 1e-4).unwrap();
    assert!(err < 1e-3, "relative error {err}");
}

#[test]
fn adversary_rejects_bad_inputs() {
    let cfg = AdversaryConfig::desk();
    let ns = init_adversary::<f64>(0, &cfg).unwrap();
    assert!(adversary_forward(&Tensor::zeros(&[60, 64]), &ns, &cfg).is_err());
    assert!(adversary_forward(&Tensor::zeros(&[1, 64, 64]), &ns, &cfg).is_err());
    let bad = AdversaryConfig { groups: 3, ..cfg };
    assert!(bad.validate().is_err());
}

#[test]
fn init_is_deterministic_with_expected_statistics() {
    let pc = PredictorConfig::default();
    let ac = AdversaryConfig::desk();
    let a = init_params::<f64>(5, &pc, &ac).unwrap();
    let b = init_params::<f64>(5, &pc, &ac).unwrap();
    assert!(a.predictor.values_equal(&b.predictor));
    assert!(a.adversary.values_equal(&b.adversary));
    let c = init_params::<f64>(6, &pc, &ac).unwrap();
    assert!(!a.adversary.values_equal(&c.adversary));

    let mut checked = 0;
    for ns in [&a.predictor, &a.adversary] {
        for (name, t) in ns.iter() {
            if name.ends_with(".gain") {
                assert!(t.data().iter().all(|&v| v == 1.0), "{name}");
            } else if name.ends_with(".bias") {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            } else if name.ends_with(".weight") && t.rank() == 4 && !name.ends_with("unet.out.weight") {
                let s = t.shape();
                if t.numel() < 500 {
                    continue;
                }
                let fan_in = (s[1] * s[2] * s[3]) as f64;
                let n = t.numel() as f64;
                let mean = t.data().iter().sum::<f64>() / n;
                let std = (t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                let want = (2.0 / fan_in).sqrt();
                assert!((std / want - 1.0).abs() < 0.2, "{name}: std {std} want {want}");
                checked += 1;
            }
        }
    }
    assert!(checked > 10);
}

#[test]
fn namespaces_are_disjoint_and_unique() {
    let p = init_params::<f32>(0, &PredictorConfig::default(), &AdversaryConfig::desk()).unwrap();
    for (name, _) in p.predictor.iter() {
        assert!(!p.adversary.contains(name));
    }
    let mut ns = Namespace::<f32>::default();
    ns.insert("a", Tensor::zeros(&[1])).unwrap();
    assert!(ns.insert("a", Tensor::zeros(&[1])).is_err());
    assert!(ns.set("a", Tensor::zeros(&[2])).is_err());
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let p = init_params::<f32>(1, &PredictorConfig::default(), &AdversaryConfig::desk()).unwrap();
    let bytes = encode_checkpoint(&p);
    assert!(bytes.starts_with(b"BNDCKPT1\n"));
    let q: ModelParams<f32> = decode_checkpoint(&bytes, std::path::Path::new("mem")).unwrap();
    assert!(p.predictor.values_equal(&q.predictor));
    assert!(p.adversary.values_equal(&q.adversary));
    assert_eq!(encode_checkpoint(&q), bytes);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &p).unwrap();
    let r = load_checkpoint_for::<f32>(&path, &PredictorConfig::default(), &AdversaryConfig::desk()).unwrap();
    assert!(r.predictor.values_equal(&p.predictor));
}

#[test]
fn checkpoint_shape_mismatch_names_the_parameter() {
    let p = init_params::<f32>(1, &PredictorConfig::default(), &AdversaryConfig::desk()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &p).unwrap();
    let wide = PredictorConfig { unet_channels: 12, ..Default::default() };
    let err = load_checkpoint_for::<f32>(&path, &wide, &AdversaryConfig::desk()).unwrap_err();
    match err {
        Error::ParamShape { name, .. } => assert!(name.starts_with("predictor/cascade0"), "{name}"),
        other => panic!("unexpected {other}"),
    }
    let more = PredictorConfig { cascades: 4, ..Default::default() };
    let err = load_checkpoint_for::<f32>(&path, &more, &AdversaryConfig::desk()).unwrap_err();
    assert!(err.to_string().contains("cascade3"), "{err}");
    let bytes = std::fs::read(&path).unwrap();
    assert!(decode_checkpoint::<f32>(&bytes[..bytes.len() - 2], &path).is_err());
}
