//! Orientation-flip self-supervision, the predictor and adversary objectives,
//! Adam, and the two-phase training schedule.

use std::path::{Path, PathBuf};

use gradcore::{backward, grad, Float, Padding, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{PenaltyTarget, TrainConfig};
use crate::kspace::{apply_mask, derive_seed, estimate_sensitivities, mask_for_seed, KSpaceSlice};
use crate::models::{
    adversary_forward, init_adversary, init_predictor, predictor_forward, AdversaryConfig,
    AdversaryOutput, ModelParams, Namespace, PredictorConfig,
};
use crate::{Error, Result};

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Transposes the last two axes. An involution.
pub fn flip<T: Float>(x: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(x.transpose_last2()?)
}

fn flip_if<T: Float>(x: &Tensor<T>, r: bool) -> Result<Tensor<T>> {
    if r {
        flip(x)
    } else {
        Ok(x.clone())
    }
}

/// A slice converted to the working precision.
#[derive(Clone, Debug)]
pub struct SliceTensors<T: Float> {
    pub kspace: Tensor<T>,
    pub sens: Tensor<T>,
    pub target: Tensor<T>,
    pub seed: u64,
}

impl<T: Float> SliceTensors<T> {
    pub fn new(slice: &KSpaceSlice) -> Self {
        SliceTensors {
            kspace: slice.kspace.cast(),
            sens: slice.sens.maps.cast(),
            target: slice.target.cast(),
            seed: slice.seed,
        }
    }

    /// Largest target value; the SSIM data range.
    pub fn data_range(&self) -> T {
        self.target
            .data()
            .iter()
            .copied()
            .fold(T::neg_infinity(), T::max)
    }
}

/// Settings that decide how a slice is undersampled and reconstructed.
#[derive(Clone, Debug)]
pub struct ReconSetup {
    pub predictor: PredictorConfig,
    pub accel: usize,
    pub n_center: usize,
    pub mask: crate::kspace::MaskKind,
    pub estimate_sens: bool,
}

impl From<&TrainConfig> for ReconSetup {
    fn from(c: &TrainConfig) -> Self {
        ReconSetup {
            predictor: c.predictor.clone(),
            accel: c.accel,
            n_center: c.n_center,
            mask: c.mask,
            estimate_sens: c.estimate_sens,
        }
    }
}

impl ReconSetup {
    /// The same sampling with an empty cascade: plain zero-filled RSS.
    pub fn zero_filled(&self) -> Self {
        ReconSetup {
            predictor: PredictorConfig {
                cascades: 0,
                ..self.predictor.clone()
            },
            ..self.clone()
        }
    }
}

/// Reconstructs in orientation `r`: the k-space and maps are transposed when
/// `r` is set, undersampled along the (fixed) width axis, reconstructed, and
/// the output is transposed back. Returns the reconstruction and the
/// untransposed target.
pub fn reconstruct_with_flip<T: Float>(
    slice: &SliceTensors<T>,
    r: bool,
    ns: &Namespace<T>,
    setup: &ReconSetup,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let shape = slice.kspace.shape();
    if r && shape[1] != shape[2] {
        return Err(Error::invalid(
            "flip",
            format!("transposed reconstruction needs a square slice, got {shape:?}"),
        ));
    }
    let k = flip_if(&slice.kspace, r)?;
    let w = k.shape()[2];
    let mask = mask_for_seed(slice.seed, setup.mask, w, setup.accel, setup.n_center)?;
    let masked = apply_mask(&k, &mask)?;
    let sens = if setup.estimate_sens {
        estimate_sensitivities(&masked, &mask)?
    } else {
        flip_if(&slice.sens, r)?
    };
    let out = predictor_forward(&masked, &mask, &sens, ns, &setup.predictor)?;
    Ok((flip_if(&out, r)?, slice.target.clone()))
}

fn box_filter<T: Float>(x: &Tensor<T>, kernel: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w) = (x.shape()[0], x.shape()[1]);
    let y = x.reshape(&[1, h, w])?.conv2d(kernel, None, Padding::Valid)?;
    let (oh, ow) = (y.shape()[1], y.shape()[2]);
    Ok(y.reshape(&[oh, ow])?)
}

/// Mean SSIM over all fully contained 7x7 windows (uniform weights,
/// unbiased local variances), as a differentiable scalar.
pub fn ssim<T: Float>(a: &Tensor<T>, b: &Tensor<T>, data_range: T) -> Result<Tensor<T>> {
    if a.shape() != b.shape() || a.rank() != 2 {
        return Err(Error::invalid(
            "ssim",
            format!("shapes {:?} and {:?}", a.shape(), b.shape()),
        ));
    }
    if !(data_range > T::zero()) {
        return Err(Error::invalid("ssim", "data range must be positive"));
    }
    let (h, w) = (a.shape()[0], a.shape()[1]);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid("ssim", format!("image {h}x{w} smaller than the window")));
    }
    let np = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let kernel = Tensor::full(&[1, 1, SSIM_WINDOW, SSIM_WINDOW], T::of(1.0 / np));
    let cov_norm = T::of(np / (np - 1.0));
    let c1 = T::of((SSIM_K1 * data_range.as_f64()).powi(2));
    let c2 = T::of((SSIM_K2 * data_range.as_f64()).powi(2));
    let ux = box_filter(a, &kernel)?;
    let uy = box_filter(b, &kernel)?;
    let uxx = box_filter(&a.square()?, &kernel)?;
    let uyy = box_filter(&b.square()?, &kernel)?;
    let uxy = box_filter(&a.mul(b)?, &kernel)?;
    let ux_uy = ux.mul(&uy)?;
    let vx = uxx.sub(&ux.square()?)?.scale(cov_norm)?;
    let vy = uyy.sub(&uy.square()?)?.scale(cov_norm)?;
    let vxy = uxy.sub(&ux_uy)?.scale(cov_norm)?;
    let two = T::of(2.0);
    let num = ux_uy.scale(two)?.add_scalar(c1)?.mul(&vxy.scale(two)?.add_scalar(c2)?)?;
    let den = ux
        .square()?
        .add(&uy.square()?)?
        .add_scalar(c1)?
        .mul(&vx.add(&vy)?.add_scalar(c2)?)?;
    Ok(num.div(&den)?.mean()?)
}

/// Mean absolute error.
pub fn l1<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(a.sub(b)?.abs()?.mean()?)
}

/// `(1 - ssim) + l1_weight * mean|a - b|`.
pub fn recon_loss<T: Float>(
    recon: &Tensor<T>,
    target: &Tensor<T>,
    data_range: T,
    l1_weight: f64,
) -> Result<Tensor<T>> {
    let s = ssim(recon, target, data_range)?;
    let d = l1(recon, target)?.scale(T::of(l1_weight))?;
    Ok(s.neg()?.add_scalar(T::one())?.add(&d)?)
}

/// Binary cross-entropy of a logit against a label in `[0, 1]`, written with
/// log-sigmoids so it is finite for every finite logit.
pub fn cross_entropy<T: Float>(label: f64, logit: &Tensor<T>) -> Result<Tensor<T>> {
    let pos = logit.log_sigmoid()?.scale(T::of(-label))?;
    let neg = logit.neg()?.log_sigmoid()?.scale(T::of(label - 1.0))?;
    Ok(pos.add(&neg)?)
}

/// Reconstruction loss plus the term that pushes the adversary toward the
/// wrong orientation `1 - r`. The adversary namespace is detached here, so
/// gradients reach the image (and the predictor) but never its parameters.
pub struct PredictorLoss<T: Float> {
    pub total: Tensor<T>,
    pub recon: Tensor<T>,
    pub ce_fool: Option<Tensor<T>>,
}

pub fn predictor_loss<T: Float>(
    recon: &Tensor<T>,
    target: &Tensor<T>,
    r: bool,
    adversary: Option<(&Namespace<T>, &AdversaryConfig)>,
    data_range: T,
    l1_weight: f64,
) -> Result<PredictorLoss<T>> {
    let rl = recon_loss(recon, target, data_range, l1_weight)?;
    match adversary {
        None => Ok(PredictorLoss {
            total: rl.clone(),
            recon: rl,
            ce_fool: None,
        }),
        Some((ns, cfg)) => {
            let frozen = ns.detached();
            let out = adversary_forward(recon, &frozen, cfg)?;
            let fool = cross_entropy(1.0 - r as u8 as f64, &out.logit)?;
            Ok(PredictorLoss {
                total: rl.add(&fool)?,
                recon: rl,
                ce_fool: Some(fool),
            })
        }
    }
}

pub struct AdversaryLoss<T: Float> {
    pub total: Tensor<T>,
    pub ce: Tensor<T>,
    /// `|d score / d image|^2`, before scaling by gamma.
    pub penalty: Tensor<T>,
}

/// `CE(r, A(m)) + gamma * |dA/dm|^2` for an arbitrary adversary. The image
/// is detached first; the input gradient is taken with `create_graph` so the
/// penalty is differentiable in the adversary parameters.
pub fn adversary_loss_with<T: Float>(
    image: &Tensor<T>,
    r: bool,
    gamma: f64,
    target: PenaltyTarget,
    adversary: impl Fn(&Tensor<T>) -> Result<AdversaryOutput<T>>,
) -> Result<AdversaryLoss<T>> {
    let x = image.stop_gradient().var();
    let out = adversary(&x)?;
    let ce = cross_entropy(r as u8 as f64, &out.logit)?;
    let score = match target {
        PenaltyTarget::Probability => &out.prob,
        PenaltyTarget::Logit => &out.logit,
    };
    let penalty = if gamma > 0.0 && score.is_tracked() {
        let g = grad(score, &[&x], true)?.remove(0);
        g.square()?.sum()?
    } else {
        Tensor::scalar(T::zero())
    };
    let total = if gamma > 0.0 {
        ce.add(&penalty.scale(T::of(gamma))?)?
    } else {
        ce.clone()
    };
    Ok(AdversaryLoss { total, ce, penalty })
}

pub fn adversary_loss<T: Float>(
    image: &Tensor<T>,
    r: bool,
    ns: &Namespace<T>,
    cfg: &AdversaryConfig,
    gamma: f64,
    target: PenaltyTarget,
) -> Result<AdversaryLoss<T>> {
    adversary_loss_with(image, r, gamma, target, |x| adversary_forward(x, ns, cfg))
}

/// Adam moments for one namespace.
#[derive(Clone, Debug)]
pub struct AdamState<T: Float> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Float> AdamState<T> {
    pub fn new(ns: &Namespace<T>, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Vec<T>> = ns.iter().map(|(_, t)| vec![T::zero(); t.numel()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            beta1,
            beta2,
            eps,
        }
    }

    /// One bias-corrected update. `grads[i]` belongs to the i-th parameter;
    /// `None` counts as a zero gradient.
    pub fn update(&mut self, ns: &mut Namespace<T>, grads: &[Option<Vec<T>>], lr: f64) -> Result<()> {
        if grads.len() != ns.len() || self.m.len() != ns.len() {
            return Err(Error::invalid("adam", "gradient count does not match parameters"));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(t));
        let c2 = T::of(1.0 - self.beta2.powi(t));
        let (lr_t, eps) = (T::of(lr), T::of(self.eps));
        let names: Vec<String> = ns.iter().map(|(n, _)| n.to_string()).collect();
        for (i, name) in names.iter().enumerate() {
            let p = ns.get(name)?;
            let shape = p.shape().to_vec();
            let mut vals = p.to_vec();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..vals.len() {
                let g = grads[i].as_ref().map_or(T::zero(), |g| g[j]);
                m[j] = b1 * m[j] + (T::one() - b1) * g;
                v[j] = b2 * v[j] + (T::one() - b2) * g * g;
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                vals[j] = vals[j] - lr_t * mh / (vh.sqrt() + eps);
            }
            if lr != 0.0 {
                ns.set(name, Tensor::from_vec(vals, &shape)?)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Adversarial,
}

impl Phase {
    pub fn number(self) -> u8 {
        match self {
            Phase::Pretrain => 1,
            Phase::Adversarial => 2,
        }
    }
}

/// Batch means of every logged quantity for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub epoch: usize,
    pub phase: Phase,
    pub recon_loss: f64,
    pub ce_fool: f64,
    pub adv_ce: f64,
    pub penalty: f64,
    pub label_r_mean: f64,
    pub labels: Vec<bool>,
}

impl StepReport {
    pub fn is_finite(&self) -> bool {
        [self.recon_loss, self.ce_fool, self.adv_ce, self.penalty]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step,
            self.epoch,
            self.phase.number(),
            self.recon_loss,
            self.ce_fool,
            self.adv_ce,
            self.penalty,
            self.label_r_mean
        )
    }
}

pub const LOG_HEADER: &str = "step,epoch,phase,recon_loss,ce_fool,adv_ce,penalty,label_r_mean";

pub fn log_csv(rows: &[StepReport]) -> String {
    let mut s = format!("{LOG_HEADER}\n");
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Per-namespace learning rates for one step; zero freezes a namespace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rates {
    pub predictor: f64,
    pub adversary: f64,
}

impl Rates {
    /// Phase 1 trains only the predictor at `lr_pretrain`. Phase 2 uses
    /// `lr_adv` for the predictor and `lr_adv * adv_lr_scale` for the adversary.
    pub fn for_phase(cfg: &TrainConfig, phase: Phase) -> Rates {
        match phase {
            Phase::Pretrain => Rates { predictor: cfg.lr_pretrain, adversary: 0.0 },
            Phase::Adversarial => Rates {
                predictor: cfg.lr_adv,
                adversary: cfg.lr_adv * cfg.adv_lr_scale,
            },
        }
    }
}

/// Both objectives for a single slice, built from differentiable copies of
/// the two namespaces.
pub struct SliceObjectives<T: Float> {
    pub recon: Tensor<T>,
    pub predictor: Tensor<T>,
    pub ce_fool: Option<Tensor<T>>,
    pub adversary: Option<AdversaryLoss<T>>,
}

/// Builds the predictor objective on `pred_vars` and, when `adversarial`,
/// the adversary objective on `adv_vars`, both from the same
/// reconstruction. The predictor objective sees the adversary detached and
/// the adversary objective sees the reconstruction detached.
pub fn slice_objectives<T: Float>(
    slice: &SliceTensors<T>,
    r: bool,
    pred_vars: &Namespace<T>,
    adv_vars: &Namespace<T>,
    cfg: &TrainConfig,
    adversarial: bool,
) -> Result<SliceObjectives<T>> {
    let setup = ReconSetup::from(cfg);
    let (m_hat, target) = reconstruct_with_flip(slice, r, pred_vars, &setup)?;
    let adv = adversarial.then_some((adv_vars, &cfg.adversary));
    let pl = predictor_loss(&m_hat, &target, r, adv, slice.data_range(), cfg.l1_weight)?;
    let al = if adversarial {
        Some(adversary_loss(
            &m_hat.detach(),
            r,
            adv_vars,
            &cfg.adversary,
            cfg.gamma,
            cfg.penalty,
        )?)
    } else {
        None
    };
    Ok(SliceObjectives {
        recon: pl.recon,
        predictor: pl.total,
        ce_fool: pl.ce_fool,
        adversary: al,
    })
}

fn accumulate<T: Float>(
    acc: &mut [Option<Vec<T>>],
    vars: &Namespace<T>,
    g: &gradcore::Gradients<T>,
    scale: T,
) {
    for (slot, (_, v)) in acc.iter_mut().zip(vars.iter()) {
        if let Some(t) = g.get(v) {
            let buf = slot.get_or_insert_with(|| vec![T::zero(); t.numel()]);
            for (b, &x) in buf.iter_mut().zip(t.data()) {
                *b = *b + x * scale;
            }
        }
    }
}

fn value<T: Float>(t: &Tensor<T>) -> f64 {
    t.item().map(|v| v.as_f64()).unwrap_or(f64::NAN)
}

/// Parameters plus optimizer state for a full run.
pub struct Trainer<T: Float> {
    pub cfg: TrainConfig,
    pub params: ModelParams<T>,
    pub opt_predictor: AdamState<T>,
    pub opt_adversary: AdamState<T>,
    pub step: usize,
}

impl<T: Float> Trainer<T> {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let params = ModelParams {
            predictor: init_predictor(cfg.seed, &cfg.predictor)?,
            adversary: init_adversary(cfg.seed, &cfg.adversary)?,
        };
        Ok(Trainer {
            opt_predictor: AdamState::new(&params.predictor, cfg.beta1, cfg.beta2, cfg.adam_eps),
            opt_adversary: AdamState::new(&params.adversary, cfg.beta1, cfg.beta2, cfg.adam_eps),
            params,
            cfg: cfg.clone(),
            step: 0,
        })
    }

    /// Starts the adversary from its initial weights with fresh moments.
    pub fn reset_adversary(&mut self) -> Result<()> {
        self.params.adversary = init_adversary(self.cfg.seed, &self.cfg.adversary)?;
        self.opt_adversary = AdamState::new(
            &self.params.adversary,
            self.cfg.beta1,
            self.cfg.beta2,
            self.cfg.adam_eps,
        );
        Ok(())
    }

    /// Orientation labels for a step: one Bernoulli(flip_prob) draw per slice,
    /// a pure function of `(seed, step)`.
    pub fn sample_labels(&self, step: usize, n: usize) -> Vec<bool> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, 0x5EED_0000 + step as u64));
        (0..n).map(|_| rng.random::<f64>() < self.cfg.flip_prob).collect()
    }

    /// One simultaneous update of both namespaces from the same batch of
    /// reconstructions. With `adversarial` off, only the reconstruction loss
    /// is used and the adversary is left untouched.
    pub fn train_step(
        &mut self,
        batch: &[&SliceTensors<T>],
        epoch: usize,
        phase: Phase,
        adversarial: bool,
        rates: Rates,
    ) -> Result<StepReport> {
        if batch.is_empty() {
            return Err(Error::invalid("batch", "empty batch"));
        }
        let labels = self.sample_labels(self.step, batch.len());
        let pred_vars = self.params.predictor.vars();
        let adv_vars = self.params.adversary.vars();
        let scale = T::of(1.0 / batch.len() as f64);
        let mut gp: Vec<Option<Vec<T>>> = vec![None; pred_vars.len()];
        let mut ga: Vec<Option<Vec<T>>> = vec![None; adv_vars.len()];
        let (mut recon, mut fool, mut ace, mut pen) = (0.0, 0.0, 0.0, 0.0);
        for (slice, &r) in batch.iter().zip(&labels) {
            let obj = slice_objectives(slice, r, &pred_vars, &adv_vars, &self.cfg, adversarial)?;
            recon += value(&obj.recon);
            if let Some(f) = &obj.ce_fool {
                fool += value(f);
            }
            if let Some(al) = &obj.adversary {
                ace += value(&al.ce);
                pen += value(&al.penalty);
            }
            if !value(&obj.predictor).is_finite() {
                break;
            }
            let g = backward(&obj.predictor, false)?;
            accumulate(&mut gp, &pred_vars, &g, scale);
            if let Some(al) = &obj.adversary {
                let g = backward(&al.total, false)?;
                accumulate(&mut ga, &adv_vars, &g, scale);
            }
        }
        let n = batch.len() as f64;
        let report = StepReport {
            step: self.step,
            epoch,
            phase,
            recon_loss: recon / n,
            ce_fool: fool / n,
            adv_ce: ace / n,
            penalty: pen / n,
            label_r_mean: labels.iter().filter(|&&r| r).count() as f64 / n,
            labels,
        };
        if !report.is_finite() {
            return Err(Error::Divergence {
                step: self.step,
                report: report.csv_row(),
            });
        }
        self.opt_predictor
            .update(&mut self.params.predictor, &gp, rates.predictor)?;
        if adversarial {
            self.opt_adversary
                .update(&mut self.params.adversary, &ga, rates.adversary)?;
        }
        self.step += 1;
        Ok(report)
    }
}

/// Where and how a run reports progress.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub verbose: bool,
}

pub struct TrainOutcome<T: Float> {
    pub params: ModelParams<T>,
    pub log: Vec<StepReport>,
    pub checkpoints: Vec<PathBuf>,
}

pub const LOG_NAME: &str = "train_log.csv";
pub const CONFIG_NAME: &str = "config.txt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:03}.ckpt")
}

fn check_dataset(dataset: &[KSpaceSlice], cfg: &TrainConfig) -> Result<()> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::invalid("dataset", "no slices"))?;
    let shape = first.kspace.shape().to_vec();
    for s in dataset {
        if s.kspace.shape() != shape.as_slice() {
            return Err(Error::invalid(
                "dataset",
                format!("mixed slice shapes {:?} and {shape:?}", s.kspace.shape()),
            ));
        }
    }
    if shape[1] != shape[2] {
        return Err(Error::invalid("dataset", "training needs square slices"));
    }
    cfg.predictor.check_extent(shape[1], shape[2])?;
    cfg.adversary.check_extent(shape[1], shape[2])
}

/// Two-phase schedule. Phase 1 trains the predictor on the reconstruction
/// loss alone (flips included); phase 2 trains both namespaces with the
/// adversarial terms at `lr_adv` (scaled by `adv_lr_scale` for the
/// adversary), starting from a fresh adversary. With
/// `cfg.adversarial` off, phase 2 keeps the same schedule and rate but leaves
/// the adversarial terms out.
pub fn run_training<T: Float>(
    dataset: &[KSpaceSlice],
    cfg: &TrainConfig,
    opts: &RunOptions,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    check_dataset(dataset, cfg)?;
    if let Some(dir) = &opts.out_dir {
        crate::io::create_dir(dir)?;
        crate::io::write_atomic(&dir.join(CONFIG_NAME), cfg.to_text().as_bytes())?;
    }
    let tensors: Vec<SliceTensors<T>> = dataset.iter().map(SliceTensors::new).collect();
    let mut trainer = Trainer::<T>::new(cfg)?;
    let mut log = Vec::new();
    let mut checkpoints = Vec::new();
    for epoch in 0..cfg.total_epochs() {
        let phase = if epoch < cfg.pretrain_epochs {
            Phase::Pretrain
        } else {
            Phase::Adversarial
        };
        if epoch == cfg.pretrain_epochs {
            trainer.reset_adversary()?;
        }
        let adversarial = phase == Phase::Adversarial && cfg.adversarial;
        let rates = Rates::for_phase(cfg, phase);
        let mut order: Vec<usize> = (0..tensors.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0xE70C_0000 + epoch as u64)));
        let mut epoch_loss = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&SliceTensors<T>> = chunk.iter().map(|&i| &tensors[i]).collect();
            let report = trainer.train_step(&batch, epoch, phase, adversarial, rates)?;
            epoch_loss += report.recon_loss;
            steps += 1;
            log.push(report);
        }
        if opts.verbose {
            let tail = &log[log.len() - steps..];
            let mean = |f: fn(&StepReport) -> f64| tail.iter().map(f).sum::<f64>() / steps as f64;
            eprintln!(
                "epoch {epoch:3} phase {} recon {:.5} ce_fool {:.4} adv_ce {:.4} penalty {:.3e}",
                phase.number(),
                epoch_loss / steps as f64,
                mean(|r| r.ce_fool),
                mean(|r| r.adv_ce),
                mean(|r| r.penalty),
            );
        }
        if let Some(dir) = &opts.out_dir {
            let path = dir.join(checkpoint_name(epoch));
            crate::models::save_checkpoint(&path, &trainer.params)?;
            checkpoints.push(path);
            crate::io::write_atomic(&dir.join(LOG_NAME), log_csv(&log).as_bytes())?;
        }
    }
    if let Some(dir) = &opts.out_dir {
        let path = dir.join(FINAL_CHECKPOINT);
        crate::models::save_checkpoint(&path, &trainer.params)?;
        checkpoints.push(path);
    }
    Ok(TrainOutcome {
        params: trainer.params,
        log,
        checkpoints,
    })
}

/// Mean reconstruction loss per epoch, in epoch order.
pub fn epoch_means(log: &[StepReport]) -> Vec<f64> {
    let last = log.iter().map(|r| r.epoch).max().map_or(0, |e| e + 1);
    (0..last)
        .map(|e| {
            let rows: Vec<f64> = log.iter().filter(|r| r.epoch == e).map(|r| r.recon_loss).collect();
            rows.iter().sum::<f64>() / rows.len().max(1) as f64
        })
        .collect()
}

/// Reads a training log written by [`log_csv`].
pub fn parse_log(text: &str, path: &Path) -> Result<Vec<StepReport>> {
    let mut lines = text.lines();
    if lines.next() != Some(LOG_HEADER) {
        return Err(Error::format(path, "unexpected log header"));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::format(path, format!("bad log row `{line}`"));
            if f.len() != 8 {
                return Err(bad());
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
            Ok(StepReport {
                step: f[0].parse().map_err(|_| bad())?,
                epoch: f[1].parse().map_err(|_| bad())?,
                phase: match f[2] {
                    "1" => Phase::Pretrain,
                    "2" => Phase::Adversarial,
                    _ => return Err(bad()),
                },
                recon_loss: num(3)?,
                ce_fool: num(4)?,
                adv_ce: num(5)?,
                penalty: num(6)?,
                label_r_mean: num(7)?,
                labels: Vec::new(),
            })
        })
        .collect()
}
