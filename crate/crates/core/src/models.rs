//! The reconstruction predictor (U-Net cascades with soft data consistency)
//! and the orientation adversary (a shallow pre-activation ResNet), plus
//! their parameter store and checkpoint format.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use gradcore::{Float, Padding, PoolKind, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::kspace::{derive_seed, rss, SamplingMask};
use crate::{Error, Result};

pub const NORM_EPS: f64 = 1e-5;
pub const UNET_SLOPE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct PredictorConfig {
    pub cascades: usize,
    pub unet_channels: usize,
    pub unet_pools: usize,
    pub norm_groups: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            cascades: 3,
            unet_channels: 8,
            unet_pools: 2,
            norm_groups: 4,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.unet_channels == 0 || self.norm_groups == 0 {
            return Err(Error::invalid("predictor config", "channels and groups must be positive"));
        }
        if self.unet_channels % self.norm_groups != 0 {
            return Err(Error::invalid(
                "predictor config",
                format!(
                    "unet_channels {} not divisible by norm_groups {}",
                    self.unet_channels, self.norm_groups
                ),
            ));
        }
        Ok(())
    }

    pub fn check_extent(&self, h: usize, w: usize) -> Result<()> {
        let f = 1usize << self.unet_pools;
        if h % f != 0 || w % f != 0 {
            return Err(Error::invalid(
                "predictor input",
                format!("{h}x{w} not divisible by 2^{} = {f}", self.unet_pools),
            ));
        }
        Ok(())
    }
}

/// Pooling used inside the adversary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolChoice(pub PoolKind);

impl fmt::Display for PoolChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.0 {
            PoolKind::Max => "max",
            PoolKind::Avg => "avg",
        })
    }
}

impl FromStr for PoolChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(PoolChoice(PoolKind::Max)),
            "avg" => Ok(PoolChoice(PoolKind::Avg)),
            _ => Err(Error::invalid("pool kind", s)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdversaryConfig {
    pub stem_channels: usize,
    pub block1_channels: usize,
    pub block2_channels: usize,
    /// Number of GroupNorm groups.
    pub groups: usize,
    pub pool_window: usize,
    pub pool: PoolChoice,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        AdversaryConfig {
            stem_channels: 64,
            block1_channels: 64,
            block2_channels: 128,
            groups: 32,
            pool_window: 4,
            pool: PoolChoice(PoolKind::Max),
        }
    }
}

impl AdversaryConfig {
    /// Reduced widths that keep CPU training at 64x64 within minutes.
    pub fn desk() -> Self {
        AdversaryConfig {
            stem_channels: 16,
            block1_channels: 16,
            block2_channels: 32,
            groups: 4,
            ..AdversaryConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.pool_window == 0 {
            return Err(Error::invalid("adversary config", "groups and pool window must be positive"));
        }
        for c in [self.stem_channels, self.block1_channels, self.block2_channels] {
            if c == 0 || c % self.groups != 0 {
                return Err(Error::invalid(
                    "adversary config",
                    format!("channel count {c} not divisible by groups {}", self.groups),
                ));
            }
        }
        Ok(())
    }

    pub fn check_extent(&self, h: usize, w: usize) -> Result<()> {
        let f = self.pool_window * self.pool_window;
        if h % f != 0 || w % f != 0 || h < f || w < f {
            return Err(Error::invalid(
                "adversary input",
                format!("{h}x{w} must be a nonzero multiple of {f}"),
            ));
        }
        Ok(())
    }
}

/// Named parameters in insertion order.
#[derive(Clone, Debug)]
pub struct Namespace<T: Float> {
    entries: Vec<(String, Tensor<T>)>,
    index: HashMap<String, usize>,
}

impl<T: Float> Default for Namespace<T> {
    fn default() -> Self {
        Namespace {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Float> Namespace<T> {
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid("parameter name", format!("duplicate `{name}`")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, t));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i].1)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    fn map(&self, f: impl Fn(&Tensor<T>) -> Tensor<T>) -> Namespace<T> {
        Namespace {
            entries: self.entries.iter().map(|(n, t)| (n.clone(), f(t))).collect(),
            index: self.index.clone(),
        }
    }

    /// Differentiable leaves sharing the current values.
    pub fn vars(&self) -> Namespace<T> {
        self.map(|t| t.var())
    }

    /// Values without diff records; nothing computed from these can send
    /// gradient back into the namespace.
    pub fn detached(&self) -> Namespace<T> {
        self.map(|t| t.detach())
    }

    pub fn cast<U: Float>(&self) -> Namespace<U> {
        Namespace {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.cast::<U>()))
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Replaces the value of an existing parameter; the shape must match.
    pub fn set(&mut self, name: &str, t: Tensor<T>) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))?;
        if self.entries[i].1.shape() != t.shape() {
            return Err(Error::ParamShape {
                name: name.to_string(),
                expected: self.entries[i].1.shape().to_vec(),
                found: t.shape().to_vec(),
            });
        }
        self.entries[i].1 = t;
        Ok(())
    }

    pub fn values_equal(&self, other: &Namespace<T>) -> bool {
        self.len() == other.len()
            && self.iter().zip(other.iter()).all(|((na, a), (nb, b))| {
                na == nb && a.shape() == b.shape() && a.data() == b.data()
            })
    }
}

/// Predictor and adversary parameters, kept in separate namespaces.
#[derive(Clone, Debug)]
pub struct ModelParams<T: Float> {
    pub predictor: Namespace<T>,
    pub adversary: Namespace<T>,
}

pub const PREDICTOR_NS: &str = "predictor";
pub const ADVERSARY_NS: &str = "adversary";

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn new(seed: u64) -> Self {
        Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn he<T: Float>(&mut self, shape: &[usize], fan_in: usize) -> Tensor<T> {
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let n: usize = shape.iter().product();
        let v: Vec<f64> = (0..n).map(|_| normal.sample(&mut self.rng)).collect();
        Tensor::from_f64(&v, shape).expect("shape")
    }
}

fn add_conv<T: Float>(
    ns: &mut Namespace<T>,
    init: &mut Init,
    name: &str,
    ci: usize,
    co: usize,
    k: usize,
    bias: bool,
) -> Result<()> {
    ns.insert(format!("{name}.weight"), init.he(&[co, ci, k, k], ci * k * k))?;
    if bias {
        ns.insert(format!("{name}.bias"), Tensor::zeros(&[co]))?;
    }
    Ok(())
}

fn add_norm<T: Float>(ns: &mut Namespace<T>, name: &str, c: usize) -> Result<()> {
    ns.insert(format!("{name}.gain"), Tensor::ones(&[c]))?;
    ns.insert(format!("{name}.bias"), Tensor::zeros(&[c]))?;
    Ok(())
}

fn unet_widths(cfg: &PredictorConfig) -> Vec<usize> {
    (0..=cfg.unet_pools).map(|l| cfg.unet_channels << l).collect()
}

/// Predictor parameters. Conv weights use He fan-in scaling, except the
/// final 1x1 projection of every U-Net which starts at zero so an untrained
/// cascade leaves its k-space input unchanged apart from data consistency.
pub fn init_predictor<T: Float>(seed: u64, cfg: &PredictorConfig) -> Result<Namespace<T>> {
    cfg.validate()?;
    let mut init = Init::new(derive_seed(seed, 10));
    let mut ns = Namespace::default();
    let widths = unet_widths(cfg);
    for t in 0..cfg.cascades {
        let p = format!("cascade{t}");
        ns.insert(format!("{p}.lambda"), Tensor::ones(&[1]))?;
        for l in 0..=cfg.unet_pools {
            let ci = if l == 0 { 2 } else { widths[l - 1] };
            let q = format!("{p}.unet.down{l}");
            add_conv(&mut ns, &mut init, &format!("{q}.conv0"), ci, widths[l], 3, true)?;
            add_norm(&mut ns, &format!("{q}.norm0"), widths[l])?;
            add_conv(&mut ns, &mut init, &format!("{q}.conv1"), widths[l], widths[l], 3, true)?;
            add_norm(&mut ns, &format!("{q}.norm1"), widths[l])?;
        }
        for l in (0..cfg.unet_pools).rev() {
            let ci = widths[l + 1] + widths[l];
            let q = format!("{p}.unet.up{l}");
            add_conv(&mut ns, &mut init, &format!("{q}.conv0"), ci, widths[l], 3, true)?;
            add_norm(&mut ns, &format!("{q}.norm0"), widths[l])?;
            add_conv(&mut ns, &mut init, &format!("{q}.conv1"), widths[l], widths[l], 3, true)?;
            add_norm(&mut ns, &format!("{q}.norm1"), widths[l])?;
        }
        ns.insert(format!("{p}.unet.out.weight"), Tensor::zeros(&[2, widths[0], 1, 1]))?;
        ns.insert(format!("{p}.unet.out.bias"), Tensor::zeros(&[2]))?;
    }
    Ok(ns)
}

fn adversary_blocks(cfg: &AdversaryConfig) -> [(usize, usize); 4] {
    [
        (cfg.stem_channels, cfg.block1_channels),
        (cfg.block1_channels, cfg.block1_channels),
        (cfg.block1_channels, cfg.block2_channels),
        (cfg.block2_channels, cfg.block2_channels),
    ]
}

pub fn init_adversary<T: Float>(seed: u64, cfg: &AdversaryConfig) -> Result<Namespace<T>> {
    cfg.validate()?;
    let mut init = Init::new(derive_seed(seed, 11));
    let mut ns = Namespace::default();
    add_conv(&mut ns, &mut init, "stem", 1, cfg.stem_channels, 3, true)?;
    for (b, (ci, co)) in adversary_blocks(cfg).into_iter().enumerate() {
        let p = format!("block{b}");
        add_norm(&mut ns, &format!("{p}.norm0"), ci)?;
        add_conv(&mut ns, &mut init, &format!("{p}.conv0"), ci, co, 3, true)?;
        add_norm(&mut ns, &format!("{p}.norm1"), co)?;
        add_conv(&mut ns, &mut init, &format!("{p}.conv1"), co, co, 3, true)?;
        if ci != co {
            add_conv(&mut ns, &mut init, &format!("{p}.proj"), ci, co, 1, false)?;
        }
    }
    let c = cfg.block2_channels;
    ns.insert("head.weight", init.he(&[1, c], c))?;
    ns.insert("head.bias", Tensor::zeros(&[1]))?;
    Ok(ns)
}

pub fn init_params<T: Float>(
    seed: u64,
    predictor: &PredictorConfig,
    adversary: &AdversaryConfig,
) -> Result<ModelParams<T>> {
    Ok(ModelParams {
        predictor: init_predictor(seed, predictor)?,
        adversary: init_adversary(seed, adversary)?,
    })
}

fn conv<T: Float>(
    x: &Tensor<T>,
    ns: &Namespace<T>,
    name: &str,
    bias: bool,
) -> Result<Tensor<T>> {
    let w = ns.get(&format!("{name}.weight"))?;
    let b = if bias {
        Some(ns.get(&format!("{name}.bias"))?)
    } else {
        None
    };
    Ok(x.conv2d(w, b, Padding::Same)?)
}

fn norm<T: Float>(x: &Tensor<T>, ns: &Namespace<T>, name: &str, groups: usize) -> Result<Tensor<T>> {
    Ok(x.group_norm(
        groups,
        ns.get(&format!("{name}.gain"))?,
        ns.get(&format!("{name}.bias"))?,
        NORM_EPS,
    )?)
}

/// conv3x3 -> GroupNorm -> leaky relu, twice.
fn unet_block<T: Float>(
    x: &Tensor<T>,
    ns: &Namespace<T>,
    name: &str,
    groups: usize,
) -> Result<Tensor<T>> {
    let slope = UNET_SLOPE;
    let h = conv(x, ns, &format!("{name}.conv0"), true)?;
    let h = norm(&h, ns, &format!("{name}.norm0"), groups)?.leaky_relu(slope)?;
    let h = conv(&h, ns, &format!("{name}.conv1"), true)?;
    Ok(norm(&h, ns, &format!("{name}.norm1"), groups)?.leaky_relu(slope)?)
}

/// Two-channel to two-channel U-Net with average-pool downsampling,
/// nearest-neighbour upsampling and skip concatenation.
pub fn unet<T: Float>(
    x: &Tensor<T>,
    ns: &Namespace<T>,
    prefix: &str,
    cfg: &PredictorConfig,
) -> Result<Tensor<T>> {
    let mut skips = Vec::with_capacity(cfg.unet_pools);
    let mut h = x.clone();
    for l in 0..=cfg.unet_pools {
        if l > 0 {
            h = h.avg_pool2d(2)?;
        }
        h = unet_block(&h, ns, &format!("{prefix}.down{l}"), cfg.norm_groups)?;
        if l < cfg.unet_pools {
            skips.push(h.clone());
        }
    }
    for l in (0..cfg.unet_pools).rev() {
        let up = h.upsample_nearest(2)?;
        let cat = Tensor::concat(&[&up, &skips[l]], 0)?;
        h = unet_block(&cat, ns, &format!("{prefix}.up{l}"), cfg.norm_groups)?;
    }
    conv(&h, ns, &format!("{prefix}.out"), true)
}

/// Cascaded reconstruction from masked multi-coil k-space.
///
/// Each cascade maps the current k-space estimate to coil images, combines
/// them with the conjugate sensitivities, refines the combined image with a
/// U-Net (real and imaginary parts as two channels), re-expands through the
/// sensitivities back to k-space, and applies the soft data-consistency step
/// `k <- k - lambda * mask * (k - x0) + refinement`. The output is the RSS of
/// the final coil images.
pub fn predictor_forward<T: Float>(
    masked_kspace: &Tensor<T>,
    mask: &SamplingMask,
    sens: &Tensor<T>,
    ns: &Namespace<T>,
    cfg: &PredictorConfig,
) -> Result<Tensor<T>> {
    let shape = masked_kspace.shape();
    if !masked_kspace.is_complex() || shape.len() != 3 {
        return Err(Error::invalid(
            "predictor input",
            format!("expected complex [n_c, h, w], got {shape:?}"),
        ));
    }
    if sens.shape() != shape || !sens.is_complex() {
        return Err(Error::invalid(
            "sensitivity maps",
            format!("shape {:?} does not match k-space {shape:?}", sens.shape()),
        ));
    }
    let (h, w) = (shape[1], shape[2]);
    if mask.width() != w {
        return Err(Error::invalid(
            "mask width",
            format!("mask has {} columns, k-space width is {w}", mask.width()),
        ));
    }
    cfg.check_extent(h, w)?;
    let m = mask.to_tensor::<T>();
    let sens_conj = sens.conj()?;
    let x0 = masked_kspace;
    let mut k = x0.clone();
    for t in 0..cfg.cascades {
        let p = format!("cascade{t}");
        let img = k.ifft2c()?;
        let comb = img.mul(&sens_conj)?.sum_axes(&[0], false)?;
        let chans = Tensor::concat(
            &[&comb.re()?.reshape(&[1, h, w])?, &comb.im()?.reshape(&[1, h, w])?],
            0,
        )?;
        let u = unet(&chans, ns, &format!("{p}.unet"), cfg)?;
        let z = Tensor::complex(
            &u.narrow(0, 0, 1)?.reshape(&[h, w])?,
            &u.narrow(0, 1, 1)?.reshape(&[h, w])?,
        )?;
        let refine = sens.mul(&z)?.fft2c()?;
        let dc = k.sub(x0)?.mul(&m)?.mul(ns.get(&format!("{p}.lambda"))?)?;
        k = k.sub(&dc)?.add(&refine)?;
    }
    rss(&k.ifft2c()?)
}

/// Pre-activation basic block: `GN -> relu -> conv -> GN -> relu -> conv`
/// plus an identity or 1x1-projected shortcut.
fn preact_block<T: Float>(
    x: &Tensor<T>,
    ns: &Namespace<T>,
    name: &str,
    groups: usize,
) -> Result<Tensor<T>> {
    let a = norm(x, ns, &format!("{name}.norm0"), groups)?.relu()?;
    let h = conv(&a, ns, &format!("{name}.conv0"), true)?;
    let h = norm(&h, ns, &format!("{name}.norm1"), groups)?.relu()?;
    let h = conv(&h, ns, &format!("{name}.conv1"), true)?;
    let proj = format!("{name}.proj");
    let shortcut = if ns.contains(&format!("{proj}.weight")) {
        conv(&a, ns, &proj, false)?
    } else {
        x.clone()
    };
    Ok(h.add(&shortcut)?)
}

/// Adversary output for one image.
#[derive(Clone, Debug)]
pub struct AdversaryOutput<T: Float> {
    /// Rank-0 pre-sigmoid score.
    pub logit: Tensor<T>,
    /// Rank-0 probability of the transposed orientation.
    pub prob: Tensor<T>,
}

/// Orientation classifier on a real `[h, w]` image.
pub fn adversary_forward<T: Float>(
    image: &Tensor<T>,
    ns: &Namespace<T>,
    cfg: &AdversaryConfig,
) -> Result<AdversaryOutput<T>> {
    if image.rank() != 2 || image.is_complex() {
        return Err(Error::invalid(
            "adversary input",
            format!("expected real [h, w], got {:?}", image.shape()),
        ));
    }
    let (h, w) = (image.shape()[0], image.shape()[1]);
    cfg.check_extent(h, w)?;
    let mut x = conv(&image.reshape(&[1, h, w])?, ns, "stem", true)?;
    for b in 0..4 {
        if b == 2 {
            x = x.pool2d(cfg.pool.0, cfg.pool_window)?;
        }
        x = preact_block(&x, ns, &format!("block{b}"), cfg.groups)?;
    }
    x = x.pool2d(cfg.pool.0, cfg.pool_window)?;
    let c = x.shape()[0];
    let feat = x.mean_axes(&[1, 2], false)?.relu()?.reshape(&[1, c])?;
    let logit = feat
        .mul(ns.get("head.weight")?)?
        .sum()?
        .add(&ns.get("head.bias")?.reshape(&[])?)?;
    let prob = logit.sigmoid()?;
    Ok(AdversaryOutput { logit, prob })
}

pub const CHECKPOINT_MAGIC: &str = "BNDCKPT1";

fn shape_text(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
}

/// `BNDCKPT1` header line, one manifest line `namespace/name f32 d0,d1,..`
/// per parameter, a blank line, then the little-endian `f32` payloads in
/// manifest order.
pub fn encode_checkpoint<T: Float>(params: &ModelParams<T>) -> Vec<u8> {
    let spaces = [(PREDICTOR_NS, &params.predictor), (ADVERSARY_NS, &params.adversary)];
    let mut text = format!("{CHECKPOINT_MAGIC}\n");
    for (space, ns) in spaces {
        for (name, t) in ns.iter() {
            text.push_str(&format!("{space}/{name} f32 {}\n", shape_text(t.shape())));
        }
    }
    text.push('\n');
    let mut out = text.into_bytes();
    for (_, ns) in spaces {
        for (_, t) in ns.iter() {
            for &v in t.data() {
                out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
    }
    out
}

pub fn decode_checkpoint<T: Float>(bytes: &[u8], path: &Path) -> Result<ModelParams<T>> {
    let bad = |d: String| Error::format(path, d);
    let split = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| bad("manifest is not terminated by a blank line".into()))?;
    let header = std::str::from_utf8(&bytes[..split])
        .map_err(|_| bad("manifest is not UTF-8".into()))?;
    let mut lines = header.lines();
    if lines.next() != Some(CHECKPOINT_MAGIC) {
        return Err(bad("missing BNDCKPT1 magic".into()));
    }
    let mut payload = &bytes[split + 2..];
    let mut params = ModelParams {
        predictor: Namespace::default(),
        adversary: Namespace::default(),
    };
    for line in lines {
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 3 || fields[1] != "f32" {
            return Err(bad(format!("bad manifest line `{line}`")));
        }
        let shape: Vec<usize> = if fields[2].is_empty() {
            Vec::new()
        } else {
            fields[2]
                .split(',')
                .map(|d| d.parse().map_err(|_| bad(format!("bad shape in `{line}`"))))
                .collect::<Result<_>>()?
        };
        let n: usize = shape.iter().product();
        if payload.len() < 4 * n {
            return Err(bad(format!("payload too short for `{}`", fields[0])));
        }
        let values: Vec<T> = payload[..4 * n]
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        payload = &payload[4 * n..];
        let t = Tensor::from_vec(values, &shape)?;
        match fields[0].split_once('/') {
            Some((PREDICTOR_NS, name)) => params.predictor.insert(name, t)?,
            Some((ADVERSARY_NS, name)) => params.adversary.insert(name, t)?,
            _ => return Err(bad(format!("unknown namespace in `{}`", fields[0]))),
        }
    }
    if !payload.is_empty() {
        return Err(bad(format!("{} trailing payload bytes", payload.len())));
    }
    Ok(params)
}

/// Checks that `loaded` has exactly the parameters and shapes of `expected`.
pub fn verify_params<T: Float>(loaded: &ModelParams<T>, expected: &ModelParams<T>) -> Result<()> {
    for (space, l, e) in [
        (PREDICTOR_NS, &loaded.predictor, &expected.predictor),
        (ADVERSARY_NS, &loaded.adversary, &expected.adversary),
    ] {
        for (name, t) in e.iter() {
            let got = l
                .get(name)
                .map_err(|_| Error::MissingParam(format!("{space}/{name}")))?;
            if got.shape() != t.shape() {
                return Err(Error::ParamShape {
                    name: format!("{space}/{name}"),
                    expected: t.shape().to_vec(),
                    found: got.shape().to_vec(),
                });
            }
        }
        if let Some((name, _)) = l.iter().find(|(n, _)| !e.contains(n)) {
            return Err(Error::invalid(
                "checkpoint",
                format!("unexpected parameter `{space}/{name}`"),
            ));
        }
    }
    Ok(())
}

pub fn save_checkpoint<T: Float>(path: &Path, params: &ModelParams<T>) -> Result<()> {
    crate::io::write_atomic(path, &encode_checkpoint(params))
}

pub fn load_checkpoint<T: Float>(path: &Path) -> Result<ModelParams<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

/// Loads a checkpoint and verifies it against the parameter layout implied
/// by the given configs.
pub fn load_checkpoint_for<T: Float>(
    path: &Path,
    predictor: &PredictorConfig,
    adversary: &AdversaryConfig,
) -> Result<ModelParams<T>> {
    let loaded = load_checkpoint(path)?;
    verify_params(&loaded, &init_params(0, predictor, adversary)?)?;
    Ok(loaded)
}
