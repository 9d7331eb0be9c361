use bandless::image::Image;
use bandless::kspace::*;
use gradcore::Tensor;
use proptest::prelude::*;

fn plane(t: &Tensor<f64>, coil: usize) -> Vec<(f64, f64)> {
    let (h, w) = (t.shape()[1], t.shape()[2]);
    (0..h * w)
        .map(|p| t.at_complex(&[coil, p / w, p % w]))
        .collect()
}

#[test]
fn phantom_is_deterministic_and_bounded() {
    for kind in [PhantomKind::Ellipses, PhantomKind::Textured] {
        let a = make_phantom(7, 64, 64, kind).unwrap();
        let b = make_phantom(7, 64, 64, kind).unwrap();
        assert_eq!(a.image.data, b.image.data);
        assert!(a.image.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(a.image.max() > 0.0);
    }
}

#[test]
fn different_seeds_give_different_phantoms() {
    for pair in 0..100u64 {
        let a = make_phantom(2 * pair, 64, 64, PhantomKind::Textured).unwrap();
        let b = make_phantom(2 * pair + 1, 64, 64, PhantomKind::Textured).unwrap();
        let differ = a.image.data.iter().zip(&b.image.data).filter(|(x, y)| x != y).count();
        assert!(differ * 100 > 64 * 64, "pair {pair}: only {differ} pixels differ");
    }
}

#[test]
fn phantom_rejects_bad_sizes() {
    assert!(make_phantom(0, 63, 64, PhantomKind::Ellipses).is_err());
    assert!(make_phantom(0, 16, 16, PhantomKind::Ellipses).is_err());
}

#[test]
fn sensitivities_have_unit_rss() {
    for (seed, nc) in [(0, 1), (1, 4), (2, 8)] {
        let s = make_sensitivities(seed, nc, 64, 64).unwrap();
        let r = rss(&s.maps).unwrap();
        for &v in r.data() {
            assert!((v - 1.0).abs() < 1e-6, "coils {nc}: rss {v}");
        }
        if nc == 1 {
            for (re, im) in plane(&s.maps, 0) {
                assert!(((re * re + im * im).sqrt() - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn sensitivities_are_smooth() {
    for seed in 0..10 {
        let s = make_sensitivities(seed, 4, 64, 64).unwrap();
        let w = 64;
        for c in 0..4 {
            let p = plane(&s.maps, c);
            let mut worst: f64 = 0.0;
            for y in 0..64 {
                for x in 0..64 {
                    let (a, b) = p[y * w + x];
                    if x + 1 < w {
                        let (c2, d2) = p[y * w + x + 1];
                        worst = worst.max(((c2 - a).powi(2) + (d2 - b).powi(2)).sqrt());
                    }
                    if y + 1 < 64 {
                        let (c2, d2) = p[(y + 1) * w + x];
                        worst = worst.max(((c2 - a).powi(2) + (d2 - b).powi(2)).sqrt());
                    }
                }
            }
            assert!(worst < 0.2, "seed {seed} coil {c}: step {worst}");
        }
    }
}

#[test]
fn identity_coil_forward_model_reproduces_phantom() {
    let ph = make_phantom(3, 32, 32, PhantomKind::Ellipses).unwrap();
    let s = forward_model(&ph, &SensitivitySet::unit(32, 32), 0.0, 3).unwrap();
    let img = s.kspace.ifft2c().unwrap();
    for (i, (re, im)) in plane(&img, 0).into_iter().enumerate() {
        assert!((re - ph.image.data[i]).abs() < 1e-5);
        assert!(im.abs() < 1e-5);
    }
}

#[test]
fn noiseless_rss_matches_target() {
    let ph = make_phantom(4, 64, 64, PhantomKind::Textured).unwrap();
    let sens = make_sensitivities(4, 4, 64, 64).unwrap();
    let s = forward_model(&ph, &sens, 0.0, 4).unwrap();
    let r = rss(&s.kspace.ifft2c().unwrap()).unwrap();
    for (a, b) in r.data().iter().zip(s.target.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn background_noise_matches_sigma() {
    // Orthonormal transforms carry the per-component k-space std unchanged
    // into the image domain.
    let sigma = 0.01;
    let ph = make_phantom(5, 64, 64, PhantomKind::Textured).unwrap();
    let sens = make_sensitivities(5, 4, 64, 64).unwrap();
    let s = forward_model(&ph, &sens, sigma, 5).unwrap();
    let img = s.kspace.ifft2c().unwrap();
    let mut vals = Vec::new();
    for c in 0..4 {
        for (i, (re, im)) in plane(&img, c).into_iter().enumerate() {
            if ph.image.data[i] == 0.0 {
                vals.push(re);
                vals.push(im);
            }
        }
    }
    assert!(vals.len() > 1000, "background too small: {}", vals.len());
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((std / sigma - 1.0).abs() < 0.2, "std {std}");
}

#[test]
fn negative_sigma_is_rejected() {
    let ph = make_phantom(0, 32, 32, PhantomKind::Ellipses).unwrap();
    assert!(forward_model(&ph, &SensitivitySet::unit(32, 32), -1.0, 0).is_err());
}

#[test]
fn rss_examples() {
    let z = Tensor::<f64>::from_interleaved(vec![3.0, 0.0, 0.0, 4.0], &[2, 1, 1]).unwrap();
    assert_eq!(rss(&z).unwrap().to_vec(), vec![5.0]);
    let one = Tensor::<f64>::from_interleaved(vec![-1.5, 2.0, 0.6, -0.8], &[1, 1, 2]).unwrap();
    assert_eq!(rss(&one).unwrap().to_vec(), vec![2.5, 1.0]);
}

fn mask_oracle(w: usize, accel: usize, n_center: usize, offset: usize) -> usize {
    (0..w)
        .filter(|&c| c % accel == offset || (c >= w / 2 - n_center / 2 && c < w / 2 + n_center / 2))
        .count()
}

#[test]
fn mask_counts_match_enumeration() {
    let m = make_mask(64, 4, 16, 0).unwrap();
    assert_eq!(m.count(), mask_oracle(64, 4, 16, 0));
    assert_eq!(m.count(), 28);
    assert_eq!(make_mask(64, 1, 16, 0).unwrap().count(), 64);
    for accel in 1..9 {
        for offset in 0..accel {
            let m = make_mask(64, accel, 16, offset).unwrap();
            assert_eq!(m.count(), mask_oracle(64, accel, 16, offset));
            assert!(center_band(64, 16).all(|c| m.accept[c]));
        }
    }
}

#[test]
fn mask_rejects_bad_arguments() {
    assert!(make_mask(64, 4, 16, 4).is_err());
    assert!(make_mask(64, 4, 15, 0).is_err());
    assert!(make_mask(64, 4, 64, 0).is_err());
    assert!(make_mask(64, 0, 16, 0).is_err());
}

#[test]
fn random_mask_keeps_center() {
    let m = SamplingMask::random(64, 4, 16, 9).unwrap();
    assert!(center_band(64, 16).all(|c| m.accept[c]));
    assert_eq!(m.count(), 16 + 16);
    assert_eq!(m, SamplingMask::random(64, 4, 16, 9).unwrap());
}

#[test]
fn masking_is_identical_across_coils() {
    let slice = simulate_slice(&SimulationParams { slices: 1, ..Default::default() }, 0).unwrap();
    let m = mask_for_seed(slice.seed, MaskKind::Equispaced, 64, 4, 16).unwrap();
    let k = apply_mask(&slice.kspace, &m).unwrap();
    let full = apply_mask(&slice.kspace, &make_mask(64, 1, 16, 0).unwrap()).unwrap();
    assert_eq!(full.to_vec(), slice.kspace.to_vec());
    let (nc, h, w) = (4, 64, 64);
    let (mut e_in, mut e_out) = (0.0, 0.0);
    for c in 0..nc {
        for y in 0..h {
            for x in 0..w {
                let a = k.at_complex(&[c, y, x]);
                let b = slice.kspace.at_complex(&[c, y, x]);
                if m.accept[x] {
                    assert_eq!(a, b);
                } else {
                    assert_eq!(a, (0.0, 0.0));
                }
                e_in += b.0 * b.0 + b.1 * b.1;
                e_out += a.0 * a.0 + a.1 * a.1;
            }
        }
    }
    assert!(e_out <= e_in);
}

/// Centered 2D DFT written out term by term (index origin at n/2).
fn direct_dft(x: &[(f64, f64)], n: usize, inverse: bool) -> Vec<(f64, f64)> {
    let sign = if inverse { 1.0 } else { -1.0 };
    let c = (n / 2) as f64;
    let mut out = vec![(0.0, 0.0); n * n];
    for ky in 0..n {
        for kx in 0..n {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..n {
                for xx in 0..n {
                    let ph = sign * 2.0 * std::f64::consts::PI / n as f64
                        * ((ky as f64 - c) * (y as f64 - c) + (kx as f64 - c) * (xx as f64 - c));
                    let (a, b) = x[y * n + xx];
                    re += a * ph.cos() - b * ph.sin();
                    im += a * ph.sin() + b * ph.cos();
                }
            }
            out[ky * n + kx] = (re / n as f64, im / n as f64);
        }
    }
    out
}

#[test]
fn twofold_aliasing_identity() {
    let n = 8;
    let ph = Image::from_fn(n, n, |y, x| ((3 * y + 5 * x) % 7) as f64 / 7.0 + 0.1 * y as f64);
    let m: Vec<(f64, f64)> = ph.data.iter().map(|&v| (v, 0.0)).collect();
    let mask = make_mask(n, 2, 0, 0).unwrap();

    // Oracle path: direct DFT, zero odd columns, direct inverse DFT.
    let mut k = direct_dft(&m, n, false);
    for (i, v) in k.iter_mut().enumerate() {
        if !mask.accept[i % n] {
            *v = (0.0, 0.0);
        }
    }
    let oracle = direct_dft(&k, n, true);

    // Library path.
    let t = Tensor::from_planar(&ph.data, &vec![0.0; n * n], &[1, n, n]).unwrap();
    let lib = apply_mask(&t.fft2c().unwrap(), &mask).unwrap().ifft2c().unwrap();
    let lib = plane(&lib, 0);

    for y in 0..n {
        for x in 0..n {
            let want = (m[y * n + x].0 + m[y * n + (x + n / 2) % n].0) / 2.0;
            let (o, l) = (oracle[y * n + x], lib[y * n + x]);
            assert!((o.0 - want).abs() < 1e-10 && o.1.abs() < 1e-10, "oracle at {y},{x}");
            assert!((l.0 - want).abs() < 1e-10 && l.1.abs() < 1e-10, "library at {y},{x}");
        }
    }
    // Single coil with unit maps: the zero-filled RSS is |m'|.
    let zf = rss(&apply_mask(&t.fft2c().unwrap(), &mask).unwrap().ifft2c().unwrap()).unwrap();
    for y in 0..n {
        for x in 0..n {
            let want = (m[y * n + x].0 + m[y * n + (x + n / 2) % n].0) / 2.0;
            assert!((zf.at(&[y, x]) - want.abs()).abs() < 1e-10);
        }
    }
}

#[test]
fn slice_format_roundtrip_is_exact() {
    let params = SimulationParams { slices: 2, size: 32, coils: 2, ..Default::default() };
    let s = simulate_slice(&params, 1).unwrap();
    let bytes = encode_slice(&s);
    assert_eq!(&bytes[..9], b"BNDSLICE1");
    let back = decode_slice(&bytes, std::path::Path::new("mem")).unwrap();
    assert_eq!(encode_slice(&back), bytes);
    assert_eq!(back.kspace.to_vec(), s.kspace.to_vec());
    assert_eq!(back.target.to_vec(), s.target.to_vec());
    assert_eq!(back.seed, s.seed);
    assert!(decode_slice(&bytes[..bytes.len() - 1], std::path::Path::new("mem")).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode_slice(&bad, std::path::Path::new("mem")).is_err());
}

#[test]
fn dataset_directory_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let params = SimulationParams { slices: 3, size: 32, coils: 2, ..Default::default() };
    let written = write_dataset(dir.path(), &params).unwrap();
    let read = read_dataset(dir.path()).unwrap();
    assert_eq!(read.len(), 3);
    for (a, b) in written.iter().zip(&read) {
        assert_eq!(encode_slice(a), encode_slice(b));
    }
    let manifest = std::fs::read_to_string(dir.path().join(MANIFEST_NAME)).unwrap();
    assert!(manifest.contains(&format!("slice_00002.bnd {}", read[2].seed)));
}

#[test]
fn sensitivity_estimate_has_unit_rss_where_defined() {
    let s = simulate_slice(&SimulationParams { slices: 1, ..Default::default() }, 0).unwrap();
    let m = make_mask(64, 4, 16, 0).unwrap();
    let est = estimate_sensitivities(&apply_mask(&s.kspace, &m).unwrap(), &m).unwrap();
    let r = rss(&est).unwrap();
    assert!(r.data().iter().all(|&v| v == 0.0 || (v - 1.0).abs() < 1e-9));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mask_invariants(accel in 1usize..9, half_center in 0usize..16, seed in any::<u64>()) {
        let w = 64;
        let offset = mask_offset(seed, accel);
        prop_assert!(offset < accel);
        let m = make_mask(w, accel, 2 * half_center, offset).unwrap();
        let band = center_band(w, 2 * half_center);
        for c in 0..w {
            let want = c % accel == offset || band.contains(&c);
            prop_assert_eq!(m.accept[c], want);
        }
    }

    #[test]
    fn rss_is_nonnegative_and_scales(v in proptest::collection::vec(-5.0f64..5.0, 12), a in 0.0f64..3.0) {
        let t = Tensor::from_interleaved(v.clone(), &[3, 1, 2]).unwrap();
        let r = rss(&t).unwrap();
        let rs = rss(&t.scale(a).unwrap()).unwrap();
        for (x, y) in r.data().iter().zip(rs.data()) {
            prop_assert!(*x >= 0.0);
            prop_assert!((y - a * x).abs() < 1e-9 * (1.0 + x));
        }
    }
}
