//! Fidelity metrics, the directional banding score, and the orientation
//! probe.

use gradcore::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::image::Image;
use crate::kspace::{derive_seed, KSpaceSlice};
use crate::models::{adversary_forward, init_adversary, AdversaryConfig, Namespace};
use crate::parallel::par_map;
use crate::training::{
    cross_entropy, reconstruct_with_flip, ssim, AdamState, ReconSetup, SliceTensors,
};
use crate::{Error, Result};

pub const ANISOTROPY_EPS: f64 = 1e-12;

/// `(Ey - Ex) / (Ey + Ex + eps)` on the residual `recon - target`, where `Ex`
/// and `Ey` are the energies of horizontal and vertical forward differences.
/// Positive when the residual varies faster along y (horizontal streaks).
pub fn anisotropy_score(recon: &Image, target: &Image) -> Result<f64> {
    let r = recon.sub(target)?;
    // Each sum runs along its own difference axis innermost, so transposing
    // the inputs swaps the two sums bit for bit.
    let (mut ex, mut ey) = (0.0, 0.0);
    for y in 0..r.h {
        for x in 0..r.w.saturating_sub(1) {
            ex += (r.get(y, x + 1) - r.get(y, x)).powi(2);
        }
    }
    for x in 0..r.w {
        for y in 0..r.h.saturating_sub(1) {
            ey += (r.get(y + 1, x) - r.get(y, x)).powi(2);
        }
    }
    Ok((ey - ex) / (ey + ex + ANISOTROPY_EPS))
}

pub fn l1_error(recon: &Image, target: &Image) -> Result<f64> {
    let r = recon.sub(target)?;
    Ok(r.data.iter().map(|v| v.abs()).sum::<f64>() / r.data.len() as f64)
}

/// `|recon - target|^2 / |target|^2`.
pub fn nmse(recon: &Image, target: &Image) -> Result<f64> {
    let r = recon.sub(target)?;
    let num: f64 = r.data.iter().map(|v| v * v).sum();
    let den: f64 = target.data.iter().map(|v| v * v).sum();
    Ok(if den > 0.0 { num / den } else { num })
}

/// SSIM against `target` with the data range set to the target maximum.
pub fn ssim_image(recon: &Image, target: &Image) -> Result<f64> {
    recon.same_shape("ssim", target)?;
    let v = ssim(&recon.to_tensor::<f64>(), &target.to_tensor(), target.max())?;
    Ok(v.item()?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub index: usize,
    pub seed: u64,
    pub ssim: f64,
    pub l1: f64,
    pub nmse: f64,
    pub anisotropy: f64,
}

/// Mean with a 95% percentile-bootstrap interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

pub const BOOTSTRAP_RESAMPLES: usize = 2000;

pub fn summarize(values: &[f64], seed: u64) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary {
            mean: f64::NAN,
            lo: f64::NAN,
            hi: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let at = |q: f64| means[((q * (BOOTSTRAP_RESAMPLES - 1) as f64).round()) as usize];
    Summary {
        mean,
        lo: at(0.025).min(mean),
        hi: at(0.975).max(mean),
    }
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub ssim: Summary,
    pub l1: Summary,
    pub nmse: Summary,
    pub anisotropy: Summary,
    pub abs_anisotropy: Summary,
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>) -> Self {
        let col = |f: fn(&EvalRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
        EvalReport {
            ssim: summarize(&col(|r| r.ssim), 1),
            l1: summarize(&col(|r| r.l1), 2),
            nmse: summarize(&col(|r| r.nmse), 3),
            anisotropy: summarize(&col(|r| r.anisotropy), 4),
            abs_anisotropy: summarize(&col(|r| r.anisotropy.abs()), 5),
            rows,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "# anisotropy = (Ey - Ex) / (Ey + Ex + 1e-12) on recon - target; positive = residual varies faster along y\n\
             index,seed,ssim,l1,nmse,anisotropy\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.index, r.seed, r.ssim, r.l1, r.nmse, r.anisotropy
            ));
        }
        s
    }

    pub fn summary_text(&self) -> String {
        let line = |name: &str, s: &Summary| {
            format!("{name:<15} mean {:.6}  95% CI [{:.6}, {:.6}]\n", s.mean, s.lo, s.hi)
        };
        let mut t = format!("slices          {}\n", self.rows.len());
        t += &line("ssim", &self.ssim);
        t += &line("l1", &self.l1);
        t += &line("nmse", &self.nmse);
        t += &line("anisotropy", &self.anisotropy);
        t += &line("|anisotropy|", &self.abs_anisotropy);
        t
    }
}

/// Parses the CSV written by [`EvalReport::to_csv`].
pub fn parse_eval_csv(text: &str) -> Result<Vec<EvalRow>> {
    let mut rows = Vec::new();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    if lines.next() != Some("index,seed,ssim,l1,nmse,anisotropy") {
        return Err(Error::invalid("metrics csv", "unexpected header"));
    }
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::invalid("metrics csv", line.to_string());
        if f.len() != 6 {
            return Err(bad());
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
        rows.push(EvalRow {
            index: f[0].parse().map_err(|_| bad())?,
            seed: f[1].parse().map_err(|_| bad())?,
            ssim: num(2)?,
            l1: num(3)?,
            nmse: num(4)?,
            anisotropy: num(5)?,
        });
    }
    Ok(rows)
}

pub fn eval_row(index: usize, seed: u64, recon: &Image, target: &Image) -> Result<EvalRow> {
    Ok(EvalRow {
        index,
        seed,
        ssim: ssim_image(recon, target)?,
        l1: l1_error(recon, target)?,
        nmse: nmse(recon, target)?,
        anisotropy: anisotropy_score(recon, target)?,
    })
}

/// Scores an arbitrary reconstruction function on every slice.
pub fn evaluate_with<F>(dataset: &[KSpaceSlice], recon: F) -> Result<EvalReport>
where
    F: Fn(&KSpaceSlice) -> Result<Image> + Sync,
{
    let rows = par_map(dataset.len(), |i| {
        let s = &dataset[i];
        eval_row(i, s.seed, &recon(s)?, &s.target_image())
    })?;
    Ok(EvalReport::from_rows(rows))
}

/// Reconstruction of one slice in orientation `r` at 32-bit precision.
pub fn reconstruct_image(
    slice: &KSpaceSlice,
    r: bool,
    ns: &Namespace<f32>,
    setup: &ReconSetup,
) -> Result<Image> {
    let t = SliceTensors::<f32>::new(slice);
    let out = gradcore::no_grad(|| reconstruct_with_flip(&t, r, ns, setup))?;
    Image::from_tensor(&out.0)
}

/// Runs the predictor at `r = 0` on every slice.
pub fn evaluate(params: &Namespace<f32>, dataset: &[KSpaceSlice], cfg: &TrainConfig) -> Result<EvalReport> {
    let setup = ReconSetup::from(cfg);
    evaluate_with(dataset, |s| reconstruct_image(s, false, params, &setup))
}

/// What the probe classifies.
#[derive(Clone, Copy)]
pub enum ProbeSource<'a> {
    /// The target itself, transposed for label 1.
    GroundTruth,
    /// Zero-filled RSS of the undersampled data.
    ZeroFilled,
    /// A frozen predictor.
    Predictor(&'a Namespace<f32>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub adversary: AdversaryConfig,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Replace the orientation labels with independent coin flips.
    pub shuffle_labels: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            adversary: AdversaryConfig::desk(),
            epochs: 50,
            lr: 1e-3,
            batch_size: 8,
            seed: 0,
            shuffle_labels: false,
        }
    }
}

pub const MIN_PROBE_SLICES: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResult {
    pub accuracy: f64,
    pub train_accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Both orientations of every slice, labelled by orientation.
pub fn probe_images(
    source: ProbeSource<'_>,
    dataset: &[KSpaceSlice],
    setup: &ReconSetup,
) -> Result<Vec<(Image, bool)>> {
    let imgs = par_map(2 * dataset.len(), |i| {
        let (s, r) = (&dataset[i / 2], i % 2 == 1);
        let img = match source {
            ProbeSource::GroundTruth => {
                let t = s.target_image();
                if r {
                    t.transpose()
                } else {
                    t
                }
            }
            ProbeSource::ZeroFilled => {
                let ns = Namespace::default();
                reconstruct_image(s, r, &ns, &setup.zero_filled())?
            }
            ProbeSource::Predictor(ns) => reconstruct_image(s, r, ns, setup)?,
        };
        Ok((img, r))
    })?;
    Ok(imgs)
}

/// Trains a fresh adversary on the images of the first half of the slices
/// and reports its accuracy on the second half.
pub fn adversary_probe(
    source: ProbeSource<'_>,
    dataset: &[KSpaceSlice],
    setup: &ReconSetup,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    if dataset.len() < MIN_PROBE_SLICES {
        return Err(Error::invalid(
            "probe dataset",
            format!("{} slices, need at least {MIN_PROBE_SLICES}", dataset.len()),
        ));
    }
    let mut images = probe_images(source, dataset, setup)?;
    if cfg.shuffle_labels {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x5_4FF1E));
        for item in &mut images {
            item.1 = rng.random::<bool>();
        }
    }
    let split = 2 * (dataset.len() / 2);
    let (train, test) = images.split_at(split);
    train_probe(train, test, cfg)
}

fn accuracy(items: &[(Image, bool)], ns: &Namespace<f32>, cfg: &AdversaryConfig) -> Result<f64> {
    let hits = par_map(items.len(), |i| {
        let (img, label) = &items[i];
        let out = gradcore::no_grad(|| adversary_forward(&img.to_tensor::<f32>(), ns, cfg))?;
        Ok((out.logit.item()? > 0.0) == *label)
    })?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / items.len().max(1) as f64)
}

/// Cross-entropy training of a fresh adversary, then held-out accuracy.
pub fn train_probe(
    train: &[(Image, bool)],
    test: &[(Image, bool)],
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid("probe", "empty train or test split"));
    }
    let mut ns: Namespace<f32> = init_adversary(derive_seed(cfg.seed, 0x9_0BE), &cfg.adversary)?;
    let mut opt = AdamState::new(&ns, 0.9, 0.999, 1e-8);
    let tensors: Vec<(Tensor<f32>, bool)> = train.iter().map(|(i, l)| (i.to_tensor(), *l)).collect();
    let mut order: Vec<usize> = (0..tensors.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x9_0BF));
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let vars = ns.vars();
            let mut acc: Vec<Option<Vec<f32>>> = vec![None; vars.len()];
            let scale = 1.0 / chunk.len() as f32;
            for &i in chunk {
                let (x, label) = &tensors[i];
                let out = adversary_forward(x, &vars, &cfg.adversary)?;
                let loss = cross_entropy(*label as u8 as f64, &out.logit)?;
                let g = gradcore::backward(&loss, false)?;
                for (slot, (_, v)) in acc.iter_mut().zip(vars.iter()) {
                    if let Some(t) = g.get(v) {
                        let buf = slot.get_or_insert_with(|| vec![0.0; t.numel()]);
                        for (b, &x) in buf.iter_mut().zip(t.data()) {
                            *b += x * scale;
                        }
                    }
                }
            }
            opt.update(&mut ns, &acc, cfg.lr)?;
        }
    }
    Ok(ProbeResult {
        accuracy: accuracy(test, &ns, &cfg.adversary)?,
        train_accuracy: accuracy(train, &ns, &cfg.adversary)?,
        n_train: train.len(),
        n_test: test.len(),
    })
}
