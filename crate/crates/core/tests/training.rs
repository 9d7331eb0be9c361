use bandless::config::{PenaltyTarget, TrainConfig};
use bandless::kspace::*;
use bandless::models::*;
use bandless::training::*;
use bandless::Error;
use gradcore::gradcheck::check_gradients;
use gradcore::{backward, CheckedGuard, GradError, PoolKind, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_config() -> TrainConfig {
    TrainConfig {
        pretrain_epochs: 1,
        adv_epochs: 1,
        batch_size: 2,
        n_center: 4,
        predictor: PredictorConfig {
            cascades: 1,
            unet_channels: 4,
            unet_pools: 1,
            norm_groups: 2,
        },
        adversary: AdversaryConfig {
            stem_channels: 4,
            block1_channels: 4,
            block2_channels: 8,
            groups: 2,
            pool_window: 2,
            pool: PoolChoice(PoolKind::Avg),
        },
        ..TrainConfig::desk()
    }
}

fn tiny_slices(n: usize, seed: u64) -> Vec<KSpaceSlice> {
    simulate_dataset(&SimulationParams {
        slices: n,
        size: 32,
        coils: 2,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::from_vec((0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect(), shape).unwrap()
}

/// Replaces every zero-initialised output projection so gradients reach the
/// whole U-Net.
fn wake_predictor(ns: &mut Namespace<f64>, cfg: &PredictorConfig, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..cfg.cascades {
        let name = format!("cascade{t}.unet.out.weight");
        let shape = ns.get(&name).unwrap().shape().to_vec();
        ns.set(&name, random(&mut rng, &shape, 0.1)).unwrap();
    }
}

fn lift(e: Error) -> GradError {
    GradError::Invalid {
        op: "test",
        detail: e.to_string(),
    }
}

#[test]
fn flip_is_an_involution_and_swaps_stripes() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = random(&mut rng, &[5, 5], 1.0);
    assert_eq!(flip(&flip(&x).unwrap()).unwrap().to_vec(), x.to_vec());
    // Vertical stripes become horizontal stripes.
    let v: Vec<f64> = (0..16).map(|i| (i % 4 % 2) as f64).collect();
    let stripes = Tensor::from_vec(v, &[4, 4]).unwrap();
    let f = flip(&stripes).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert_eq!(f.at(&[i, j]), (i % 2) as f64);
        }
    }
}

#[test]
fn flip_passes_an_all_ones_gradient_back_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&mut rng, &[3, 4, 4], 1.0).var();
    let y = flip(&x).unwrap().sum().unwrap();
    let g = backward(&y, false).unwrap();
    assert!(g.get(&x).unwrap().to_vec().iter().all(|&v| v == 1.0));
}

#[test]
fn flipped_zero_filled_reconstruction_matches_manual_transposes() {
    let s = &tiny_slices(1, 4)[0];
    let st = SliceTensors::<f64>::new(s);
    let setup = ReconSetup::from(&tiny_config()).zero_filled();
    let ns = Namespace::default();
    let (out, target) = reconstruct_with_flip(&st, true, &ns, &setup).unwrap();
    assert_eq!(target.to_vec(), s.target.to_vec());

    let k = s.kspace.transpose_last2().unwrap();
    let mask = make_mask(32, 4, 4, mask_offset(s.seed, 4)).unwrap();
    let zf = rss(&apply_mask(&k, &mask).unwrap().ifft2c().unwrap()).unwrap();
    let expected = zf.transpose_last2().unwrap();
    assert_eq!(out.to_vec(), expected.to_vec());

    // Undersampling along the other axis gives a different aliasing pattern.
    let (plain, _) = reconstruct_with_flip(&st, false, &ns, &setup).unwrap();
    assert_ne!(plain.to_vec(), out.to_vec());
}

/// Mean SSIM written out window by window.
fn ssim_direct(a: &[f64], b: &[f64], h: usize, w: usize, range: f64) -> f64 {
    let k = 7;
    let n = (k * k) as f64;
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let mut total = 0.0;
    let mut count = 0.0;
    for i in 0..=h - k {
        for j in 0..=w - k {
            let px = |buf: &[f64], di: usize, dj: usize| buf[(i + di) * w + j + dj];
            let (mut mx, mut my) = (0.0, 0.0);
            for di in 0..k {
                for dj in 0..k {
                    mx += px(a, di, dj);
                    my += px(b, di, dj);
                }
            }
            mx /= n;
            my /= n;
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for di in 0..k {
                for dj in 0..k {
                    let dx = px(a, di, dj) - mx;
                    let dy = px(b, di, dj) - my;
                    vx += dx * dx;
                    vy += dy * dy;
                    cxy += dx * dy;
                }
            }
            vx /= n - 1.0;
            vy /= n - 1.0;
            cxy /= n - 1.0;
            total += (2.0 * mx * my + c1) * (2.0 * cxy + c2)
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1.0;
        }
    }
    total / count
}

#[test]
fn ssim_matches_direct_window_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (h, w) = (12, 14);
    let a = Tensor::full(&[h, w], 0.5);
    let noise = random(&mut rng, &[h, w], 0.01);
    let b = a.add(&noise).unwrap();
    let got = ssim(&a, &b, 1.0).unwrap().item().unwrap();
    let want = ssim_direct(&a.to_vec(), &b.to_vec(), h, w, 1.0);
    assert!((got - want).abs() < 1e-6, "{got} vs {want}");

    let c = random(&mut rng, &[h, w], 1.0);
    let got = ssim(&c, &b, 2.0).unwrap().item().unwrap();
    let want = ssim_direct(&c.to_vec(), &b.to_vec(), h, w, 2.0);
    assert!((got - want).abs() < 1e-6, "{got} vs {want}");
}

#[test]
fn ssim_rejects_bad_inputs() {
    let a = Tensor::<f64>::zeros(&[6, 6]);
    assert!(ssim(&a, &a, 1.0).is_err());
    let b = Tensor::<f64>::zeros(&[8, 8]);
    assert!(ssim(&b, &b, 0.0).is_err());
    assert!(ssim(&b, &Tensor::zeros(&[8, 9]), 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ssim_is_one_on_identical_images_and_symmetric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&mut rng, &[9, 10], 1.0);
        let b = random(&mut rng, &[9, 10], 1.0);
        let same = ssim(&a, &a, 2.0).unwrap().item().unwrap();
        prop_assert!((same - 1.0).abs() < 1e-9);
        let ab = ssim(&a, &b, 2.0).unwrap().item().unwrap();
        let ba = ssim(&b, &a, 2.0).unwrap().item().unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab < 1.0);
    }

    #[test]
    fn cross_entropy_is_finite_and_nonnegative(z in -800.0f64..800.0, label in prop::bool::ANY) {
        let l = if label { 1.0 } else { 0.0 };
        let ce = cross_entropy(l, &Tensor::scalar(z)).unwrap().item().unwrap();
        prop_assert!(ce.is_finite() && ce >= 0.0);
    }
}

#[test]
fn cross_entropy_at_even_odds_is_ln2() {
    for label in [0.0, 1.0] {
        let ce = cross_entropy(label, &Tensor::scalar(0.0f64)).unwrap().item().unwrap();
        assert!((ce - std::f64::consts::LN_2).abs() < 1e-9);
    }
}

#[test]
fn undecided_adversary_gives_ln2_fooling_term() {
    let cfg = tiny_config();
    let mut adv = init_adversary::<f64>(0, &cfg.adversary).unwrap();
    for name in ["head.weight", "head.bias"] {
        let t = adv.get(name).unwrap();
        let z = Tensor::zeros(t.shape());
        adv.set(name, z).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let img = random(&mut rng, &[16, 16], 1.0);
    let target = random(&mut rng, &[16, 16], 1.0);
    for r in [false, true] {
        let pl = predictor_loss(&img, &target, r, Some((&adv, &cfg.adversary)), 1.0, 0.01).unwrap();
        let fool = pl.ce_fool.unwrap().item().unwrap();
        assert!((fool - std::f64::consts::LN_2).abs() < 1e-9);
    }
}

#[test]
fn perfect_reconstruction_leaves_only_the_fooling_term() {
    let cfg = tiny_config();
    let adv = init_adversary::<f64>(5, &cfg.adversary).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let target = random(&mut rng, &[16, 16], 1.0);
    let pl = predictor_loss(&target, &target, true, Some((&adv, &cfg.adversary)), 2.0, 0.01).unwrap();
    let total = pl.total.item().unwrap();
    let fool = pl.ce_fool.unwrap().item().unwrap();
    assert!(pl.recon.item().unwrap().abs() < 1e-9);
    assert!((total - fool).abs() < 1e-9);
}

fn affine(w: &Tensor<f64>, b: f64) -> impl Fn(&Tensor<f64>) -> bandless::Result<AdversaryOutput<f64>> + '_ {
    move |x| {
        let logit = x.mul(w)?.sum()?.add_scalar(b)?;
        let prob = logit.sigmoid()?;
        Ok(AdversaryOutput { logit, prob })
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[test]
fn affine_adversary_penalty_has_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let w = random(&mut rng, &[6, 6], 0.3);
    let x = random(&mut rng, &[6, 6], 1.0);
    let b = 0.2;
    let z: f64 = x.to_vec().iter().zip(w.to_vec()).map(|(a, c)| a * c).sum::<f64>() + b;
    let w2: f64 = w.to_vec().iter().map(|v| v * v).sum();
    let s = sigmoid(z);
    let d = s * (1.0 - s);

    let al = adversary_loss_with(&x, true, 0.1, PenaltyTarget::Probability, affine(&w, b)).unwrap();
    let pen = al.penalty.item().unwrap();
    assert!((pen - d * d * w2).abs() < 1e-6, "{pen} vs {}", d * d * w2);
    let ce = al.ce.item().unwrap();
    assert!((ce + s.ln()).abs() < 1e-9);
    assert!((al.total.item().unwrap() - (ce + 0.1 * pen)).abs() < 1e-12);

    let al = adversary_loss_with(&x, false, 0.1, PenaltyTarget::Logit, affine(&w, b)).unwrap();
    assert!((al.penalty.item().unwrap() - w2).abs() < 1e-9);
}

#[test]
fn affine_penalty_ignores_constant_offsets_it_cannot_see() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut wv = random(&mut rng, &[5, 5], 0.3).to_vec();
    let mean = wv.iter().sum::<f64>() / wv.len() as f64;
    wv.iter_mut().for_each(|v| *v -= mean);
    let w = Tensor::from_vec(wv, &[5, 5]).unwrap();
    let x = random(&mut rng, &[5, 5], 1.0);
    let shifted = x.add_scalar(3.0).unwrap();
    for target in [PenaltyTarget::Probability, PenaltyTarget::Logit] {
        let p0 = adversary_loss_with(&x, true, 0.1, target, affine(&w, 0.0)).unwrap();
        let p1 = adversary_loss_with(&shifted, true, 0.1, target, affine(&w, 0.0)).unwrap();
        let (a, b) = (p0.penalty.item().unwrap(), p1.penalty.item().unwrap());
        assert!((a - b).abs() < 1e-12 * a.max(1.0));
    }
}

#[test]
fn zero_gamma_is_plain_cross_entropy() {
    let cfg = tiny_config();
    let adv = init_adversary::<f64>(1, &cfg.adversary).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let img = random(&mut rng, &[16, 16], 1.0);
    let al = adversary_loss(&img, true, &adv, &cfg.adversary, 0.0, PenaltyTarget::Probability).unwrap();
    assert_eq!(al.total.item().unwrap(), al.ce.item().unwrap());
    assert_eq!(al.penalty.item().unwrap(), 0.0);
}

#[test]
fn predictor_loss_gradient_matches_finite_differences() {
    let cfg = tiny_config();
    let s = &tiny_slices(1, 9)[0];
    let st = SliceTensors::<f64>::new(s);
    let setup = ReconSetup::from(&cfg);
    let mut base = init_predictor::<f64>(2, &cfg.predictor).unwrap();
    wake_predictor(&mut base, &cfg.predictor, 10);
    let adv = init_adversary::<f64>(2, &cfg.adversary).unwrap();
    let names = [
        "cascade0.lambda",
        "cascade0.unet.out.weight",
        "cascade0.unet.down0.conv0.weight",
    ];
    let inputs: Vec<Tensor<f64>> = names.iter().map(|n| base.get(n).unwrap().clone()).collect();
    let range = st.data_range();
    for r in [false, true] {
        let f = |xs: &[Tensor<f64>]| -> gradcore::Result<Tensor<f64>> {
            let mut ns = base.clone();
            for (n, x) in names.iter().zip(xs) {
                ns.set(n, x.clone()).map_err(lift)?;
            }
            let (m, t) = reconstruct_with_flip(&st, r, &ns, &setup).map_err(lift)?;
            let pl = predictor_loss(&m, &t, r, Some((&adv, &cfg.adversary)), range, cfg.l1_weight)
                .map_err(lift)?;
            Ok(pl.total)
        };
        // Leaky ReLU and |.| kinks sit within 1e-5 of some coordinates; a
        // smaller step stays on one side of them.
        let err = check_gradients(&f, &inputs, 1e-6).unwrap();
        assert!(err < 1e-3, "r={r}: relative error {err}");
    }
}

#[test]
fn each_objective_only_reaches_its_own_namespace() {
    let cfg = tiny_config();
    let s = &tiny_slices(1, 11)[0];
    let st = SliceTensors::<f64>::new(s);
    let mut pred = init_predictor::<f64>(3, &cfg.predictor).unwrap();
    wake_predictor(&mut pred, &cfg.predictor, 12);
    let adv = init_adversary::<f64>(3, &cfg.adversary).unwrap();
    let (pv, av) = (pred.vars(), adv.vars());
    let obj = slice_objectives(&st, true, &pv, &av, &cfg, true).unwrap();

    let g = backward(&obj.predictor, false).unwrap();
    for (name, v) in av.iter() {
        if let Some(t) = g.get(v) {
            assert!(t.to_vec().iter().all(|&x| x == 0.0), "adversary `{name}` got a gradient");
        }
    }
    assert!(pv.iter().all(|(_, v)| g.get(v).is_some()));

    let al = obj.adversary.unwrap();
    let g = backward(&al.total, false).unwrap();
    for (name, v) in pv.iter() {
        if let Some(t) = g.get(v) {
            assert!(t.to_vec().iter().all(|&x| x == 0.0), "predictor `{name}` got a gradient");
        }
    }
    assert!(av.iter().any(|(_, v)| g.get(v).is_some()));
}

#[test]
fn adam_follows_hand_trace() {
    let mut ns = Namespace::default();
    ns.insert("p", Tensor::scalar(1.0f64)).unwrap();
    let mut opt = AdamState::new(&ns, 0.9, 0.999, 1e-8);
    let expected = [0.900000002, 0.8654394181165108, 0.8275002408356956];
    for (g, want) in [0.5, -0.2, 0.1].into_iter().zip(expected) {
        opt.update(&mut ns, &[Some(vec![g])], 0.1).unwrap();
        let p = ns.get("p").unwrap().item().unwrap();
        assert!((p - want).abs() < 1e-12, "{p} vs {want}");
    }
    assert_eq!(opt.step, 3);
}

#[test]
fn adam_rejects_mismatched_gradients() {
    let mut ns = Namespace::default();
    ns.insert("p", Tensor::scalar(1.0f64)).unwrap();
    let mut opt = AdamState::new(&ns, 0.9, 0.999, 1e-8);
    assert!(opt.update(&mut ns, &[], 0.1).is_err());
}

#[test]
fn zero_rate_freezes_a_namespace() {
    let cfg = tiny_config();
    let slices = tiny_slices(2, 13);
    let tensors: Vec<SliceTensors<f64>> = slices.iter().map(SliceTensors::new).collect();
    let batch: Vec<&SliceTensors<f64>> = tensors.iter().collect();
    let mut tr = Trainer::<f64>::new(&cfg).unwrap();
    let before = tr.params.clone();
    tr.train_step(&batch, 0, Phase::Adversarial, true, Rates { predictor: 0.0, adversary: 1e-3 })
        .unwrap();
    assert!(tr.params.predictor.values_equal(&before.predictor));
    assert!(!tr.params.adversary.values_equal(&before.adversary));

    let mut tr = Trainer::<f64>::new(&cfg).unwrap();
    tr.train_step(&batch, 0, Phase::Adversarial, true, Rates { predictor: 1e-3, adversary: 0.0 })
        .unwrap();
    assert!(!tr.params.predictor.values_equal(&before.predictor));
    assert!(tr.params.adversary.values_equal(&before.adversary));
}

#[test]
fn pretraining_steps_leave_the_adversary_alone() {
    let cfg = tiny_config();
    let slices = tiny_slices(2, 14);
    let tensors: Vec<SliceTensors<f64>> = slices.iter().map(SliceTensors::new).collect();
    let batch: Vec<&SliceTensors<f64>> = tensors.iter().collect();
    let mut tr = Trainer::<f64>::new(&cfg).unwrap();
    let before = tr.params.clone();
    let rep = tr
        .train_step(&batch, 0, Phase::Pretrain, false, Rates { predictor: 1e-3, adversary: 1e-3 })
        .unwrap();
    assert!(tr.params.adversary.values_equal(&before.adversary));
    assert_eq!((rep.ce_fool, rep.adv_ce, rep.penalty), (0.0, 0.0, 0.0));
    assert_eq!(rep.labels.len(), 2);
}

#[test]
fn labels_are_balanced_and_reproducible() {
    let tr = Trainer::<f32>::new(&tiny_config()).unwrap();
    let mut ones = 0;
    for step in 0..1000 {
        ones += tr.sample_labels(step, 1).iter().filter(|&&r| r).count();
    }
    let mean = ones as f64 / 1000.0;
    assert!((mean - 0.5).abs() <= 0.05, "mean label {mean}");
    assert_eq!(tr.sample_labels(17, 8), tr.sample_labels(17, 8));
    assert_ne!(
        (0..20).map(|s| tr.sample_labels(s, 4)).collect::<Vec<_>>(),
        (20..40).map(|s| tr.sample_labels(s, 4)).collect::<Vec<_>>()
    );
}

#[test]
fn fixed_orientation_labels() {
    let cfg = TrainConfig { flip_prob: 0.0, ..tiny_config() };
    let tr = Trainer::<f32>::new(&cfg).unwrap();
    assert!((0..100).all(|s| tr.sample_labels(s, 4).iter().all(|&r| !r)));
}

#[test]
fn training_steps_are_deterministic() {
    let cfg = tiny_config();
    let slices = tiny_slices(4, 15);
    let tensors: Vec<SliceTensors<f32>> = slices.iter().map(SliceTensors::new).collect();
    let run = || {
        let mut tr = Trainer::<f32>::new(&cfg).unwrap();
        let mut rows = Vec::new();
        for step in 0..10 {
            let batch: Vec<&SliceTensors<f32>> = tensors[(step % 2) * 2..(step % 2) * 2 + 2].iter().collect();
            let rates = Rates { predictor: 1e-3, adversary: 1e-3 };
            rows.push(tr.train_step(&batch, 0, Phase::Adversarial, true, rates).unwrap().csv_row());
        }
        (rows, encode_checkpoint(&tr.params))
    };
    assert_eq!(run(), run());
}

#[test]
fn adversary_learns_a_fixed_orientation() {
    // With every label 0 the adversary only has to push its logit down.
    let cfg = TrainConfig { flip_prob: 0.0, gamma: 0.0, ..tiny_config() };
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let images: Vec<Tensor<f64>> = (0..8).map(|_| random(&mut rng, &[16, 16], 1.0)).collect();
    let mut adv = init_adversary::<f64>(0, &cfg.adversary).unwrap();
    let mut opt = AdamState::new(&adv, 0.9, 0.999, 1e-8);
    let mut first = None;
    let mut last = 0.0;
    for step in 0..200 {
        let vars = adv.vars();
        let img = &images[step % images.len()];
        let al = adversary_loss(img, false, &vars, &cfg.adversary, 0.0, cfg.penalty).unwrap();
        last = al.ce.item().unwrap();
        first.get_or_insert(last);
        let g = backward(&al.total, false).unwrap();
        let grads: Vec<Option<Vec<f64>>> = vars.iter().map(|(_, v)| g.get(v).map(|t| t.to_vec())).collect();
        opt.update(&mut adv, &grads, 1e-3).unwrap();
    }
    let first = first.unwrap();
    assert!(last < 0.5 * first, "CE went from {first} to {last}");
    let p = adversary_forward(&images[0], &adv, &cfg.adversary).unwrap().prob.item().unwrap();
    assert!(p < 0.5);
}

fn poisoned_step() -> (Error, bool) {
    let cfg = tiny_config();
    let mut slices = tiny_slices(2, 17);
    let mut k = slices[0].kspace.to_vec();
    k.iter_mut().for_each(|v| *v = f64::NAN);
    slices[0].kspace = Tensor::from_interleaved(k, slices[0].kspace.shape()).unwrap();
    let tensors: Vec<SliceTensors<f64>> = slices.iter().map(SliceTensors::new).collect();
    let batch: Vec<&SliceTensors<f64>> = tensors.iter().collect();
    let mut tr = Trainer::<f64>::new(&cfg).unwrap();
    let before = tr.params.clone();
    let err = tr
        .train_step(&batch, 0, Phase::Pretrain, false, Rates { predictor: 1e-3, adversary: 0.0 })
        .unwrap_err();
    (err, tr.params.predictor.values_equal(&before.predictor))
}

#[test]
fn non_finite_data_is_caught_by_domain_checks() {
    let (err, untouched) = poisoned_step();
    assert!(matches!(err, Error::Grad(GradError::Domain { .. })), "{err}");
    assert!(untouched);
}

#[test]
fn non_finite_loss_is_reported_as_divergence() {
    let _unchecked = CheckedGuard::new(false);
    let (err, untouched) = poisoned_step();
    assert!(matches!(err, Error::Divergence { step: 0, .. }), "{err}");
    assert!(untouched);
}

#[test]
fn empty_batch_is_rejected() {
    let mut tr = Trainer::<f32>::new(&tiny_config()).unwrap();
    let rates = Rates { predictor: 1e-3, adversary: 1e-3 };
    assert!(tr.train_step(&[], 0, Phase::Pretrain, false, rates).is_err());
}

#[test]
fn run_writes_checkpoints_log_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = tiny_config();
    let slices = tiny_slices(4, 18);
    let opts = RunOptions { out_dir: Some(out.clone()), verbose: false };
    let outcome = run_training::<f32>(&slices, &cfg, &opts).unwrap();
    assert_eq!(outcome.log.len(), 4);
    assert_eq!(outcome.checkpoints.len(), 3);
    for name in [checkpoint_name(0), checkpoint_name(1), FINAL_CHECKPOINT.to_string()] {
        assert!(out.join(name).is_file());
    }
    let phases: Vec<Phase> = outcome.log.iter().map(|r| r.phase).collect();
    assert_eq!(phases, [Phase::Pretrain, Phase::Pretrain, Phase::Adversarial, Phase::Adversarial]);
    assert!(outcome.log[..2].iter().all(|r| r.adv_ce == 0.0 && r.ce_fool == 0.0));
    assert!(outcome.log[2..].iter().all(|r| r.adv_ce > 0.0 && r.ce_fool > 0.0));

    let text = std::fs::read_to_string(out.join(LOG_NAME)).unwrap();
    let parsed = parse_log(&text, &out).unwrap();
    assert_eq!(parsed.len(), 4);
    for (a, b) in parsed.iter().zip(&outcome.log) {
        assert_eq!(a.csv_row(), b.csv_row());
    }
    let saved = TrainConfig::from_text(&std::fs::read_to_string(out.join(CONFIG_NAME)).unwrap()).unwrap();
    assert_eq!(saved, cfg);
    let last = load_checkpoint::<f32>(&out.join(FINAL_CHECKPOINT)).unwrap();
    assert!(last.predictor.values_equal(&outcome.params.predictor));
    assert_eq!(epoch_means(&outcome.log).len(), 2);
}

#[test]
fn standard_run_has_no_adversarial_terms() {
    let cfg = TrainConfig { adversarial: false, ..tiny_config() };
    let outcome = run_training::<f32>(&tiny_slices(4, 19), &cfg, &RunOptions::default()).unwrap();
    assert!(outcome
        .log
        .iter()
        .all(|r| r.ce_fool == 0.0 && r.adv_ce == 0.0 && r.penalty == 0.0));
    assert_eq!(outcome.log.last().unwrap().phase, Phase::Adversarial);
}

#[test]
fn run_rejects_unusable_datasets() {
    let cfg = tiny_config();
    assert!(run_training::<f32>(&[], &cfg, &RunOptions::default()).is_err());
    let deep = TrainConfig {
        predictor: PredictorConfig { unet_pools: 6, ..cfg.predictor.clone() },
        ..cfg.clone()
    };
    assert!(run_training::<f32>(&tiny_slices(1, 20), &deep, &RunOptions::default()).is_err());
}

#[test]
fn malformed_logs_are_rejected() {
    let p = std::path::Path::new("log.csv");
    assert!(parse_log("nonsense\n", p).is_err());
    assert!(parse_log(&format!("{LOG_HEADER}\n1,2,3\n"), p).is_err());
    assert!(parse_log(&format!("{LOG_HEADER}\n0,0,7,0,0,0,0,0\n"), p).is_err());
}

#[test]
fn large_scale_schedule_values() {
    let c = TrainConfig::paper();
    assert_eq!((c.pretrain_epochs, c.adv_epochs), (100, 60));
    assert_eq!((c.lr_pretrain, c.lr_adv), (0.0003, 0.0001));
    assert_eq!((c.beta1, c.batch_size), (0.9, 8));
    assert_eq!((c.gamma, c.l1_weight), (0.1, 0.01));
    assert_eq!(TrainConfig::preset("paper").unwrap(), c);
    assert!(TrainConfig::preset("huge").is_err());
}

#[test]
fn config_text_roundtrip_and_overrides() {
    let mut c = TrainConfig::desk();
    c.set("gamma", "0.25").unwrap();
    c.set("penalty", "logit").unwrap();
    let back = TrainConfig::from_text(&c.to_text()).unwrap();
    assert_eq!(back, c);
    assert!(c.set("gamma", "lots").is_err());
    assert!(c.set("no_such_key", "1").is_err());
    let err = TrainConfig::from_text("gamma = 0.1\nbogus line\n").unwrap_err();
    assert!(matches!(err, Error::Config { line: 2, .. }), "{err}");
}

#[test]
fn phase_rates() {
    let mut c = TrainConfig::desk();
    assert_eq!(Rates::for_phase(&c, Phase::Pretrain), Rates { predictor: 0.0003, adversary: 0.0 });
    assert_eq!(Rates::for_phase(&c, Phase::Adversarial), Rates { predictor: 0.0001, adversary: 0.0001 });
    c.set("adv_lr_scale", "10").unwrap();
    let r = Rates::for_phase(&c, Phase::Adversarial);
    assert_eq!(r.predictor, 0.0001);
    assert!((r.adversary - 0.001).abs() < 1e-15);
    c.adv_lr_scale = 0.0;
    assert!(c.validate().is_err());
}
