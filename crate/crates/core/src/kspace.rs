//! Synthetic multi-coil Cartesian acquisitions: phantoms, coil sensitivities,
//! the coil-wise forward model, root-sum-of-squares combination, and column
//! sampling masks.
//!
//! K-space is always held in the centered view (DC at `(h/2, w/2)`), produced
//! by [`Tensor::fft2c`]. Mask column indices refer to that view.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use gradcore::{Float, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::image::Image;
use crate::{Error, Result};

/// Floor under the squared magnitude inside [`rss`], keeping its gradient
/// finite where every coil is exactly zero.
pub const RSS_FLOOR: f64 = 1e-12;

/// SplitMix64 step; used to derive independent substream seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_extent(what: &'static str, h: usize, w: usize, min: usize) -> Result<()> {
    for n in [h, w] {
        if !n.is_power_of_two() || n < min {
            return Err(Error::invalid(
                what,
                format!("extent {n} must be a power of two >= {min}"),
            ));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhantomKind {
    Ellipses,
    Textured,
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhantomKind::Ellipses => "ellipses",
            PhantomKind::Textured => "textured",
        })
    }
}

impl FromStr for PhantomKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ellipses" => Ok(PhantomKind::Ellipses),
            "textured" => Ok(PhantomKind::Textured),
            _ => Err(Error::invalid("phantom kind", s)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Phantom {
    pub image: Image,
    pub seed: u64,
    pub kind: PhantomKind,
}

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
    value: f64,
}

impl Ellipse {
    fn random(rng: &mut ChaCha8Rng, spread: f64, axes: (f64, f64), value: (f64, f64)) -> Self {
        let theta = rng.random_range(0.0..PI);
        // Polar center so the layout distribution is rotation invariant.
        let rad = spread * rng.random::<f64>().sqrt();
        let phi = rng.random_range(0.0..2.0 * PI);
        Ellipse {
            cx: rad * phi.cos(),
            cy: rad * phi.sin(),
            a: rng.random_range(axes.0..axes.1),
            b: rng.random_range(axes.0..axes.1),
            cos: theta.cos(),
            sin: theta.sin(),
            value: rng.random_range(value.0..value.1),
        }
    }

    fn contains(&self, u: f64, v: f64) -> bool {
        let (du, dv) = (u - self.cx, v - self.cy);
        let p = (du * self.cos + dv * self.sin) / self.a;
        let q = (-du * self.sin + dv * self.cos) / self.b;
        p * p + q * q <= 1.0
    }
}

/// Normalized pixel-center coordinate in `(-1, 1)`.
#[inline]
fn coord(i: usize, n: usize) -> f64 {
    (2 * i + 1) as f64 / n as f64 - 1.0
}

/// Deterministic phantom with values in `[0, 1]`.
///
/// An outer "body" ellipse carries 4 to 11 inner ellipses of random
/// intensity. The textured kind adds an isotropic band-limited pattern inside
/// the body. All random choices are invariant in distribution under
/// transposition, so orientation carries no information about the anatomy.
pub fn make_phantom(seed: u64, h: usize, w: usize, kind: PhantomKind) -> Result<Phantom> {
    check_extent("phantom size", h, w, 32)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let body = Ellipse::random(&mut rng, 0.08, (0.62, 0.9), (0.35, 0.55));
    let inner_count = rng.random_range(4..=11);
    let inner: Vec<Ellipse> = (0..inner_count)
        .map(|_| Ellipse::random(&mut rng, 0.55, (0.04, 0.3), (-0.25, 0.45)))
        .collect();
    let waves: Vec<(f64, f64, f64, f64)> = match kind {
        PhantomKind::Ellipses => Vec::new(),
        PhantomKind::Textured => (0..24)
            .map(|_| {
                let dir = rng.random_range(0.0..2.0 * PI);
                let freq = rng.random_range(3.0..10.0) * PI;
                let amp = rng.random_range(0.01..0.03);
                let phase = rng.random_range(0.0..2.0 * PI);
                (freq * dir.cos(), freq * dir.sin(), amp, phase)
            })
            .collect(),
    };
    let image = Image::from_fn(h, w, |y, x| {
        let (u, v) = (coord(x, w), coord(y, h));
        if !body.contains(u, v) {
            return 0.0;
        }
        let mut m = body.value;
        for e in &inner {
            if e.contains(u, v) {
                m += e.value;
            }
        }
        for &(fu, fv, amp, phase) in &waves {
            m += amp * (fu * u + fv * v + phase).cos();
        }
        m.clamp(0.0, 1.0)
    });
    Ok(Phantom { image, seed, kind })
}

/// Coil sensitivity maps, complex `[n_c, h, w]`, normalized to unit RSS.
#[derive(Clone, Debug)]
pub struct SensitivitySet {
    pub maps: Tensor<f64>,
}

impl SensitivitySet {
    pub fn n_coils(&self) -> usize {
        self.maps.shape()[0]
    }

    /// Unit maps for a single coil.
    pub fn unit(h: usize, w: usize) -> Self {
        let data = (0..h * w).flat_map(|_| [1.0, 0.0]).collect();
        SensitivitySet {
            maps: Tensor::from_interleaved(data, &[1, h, w]).expect("shape"),
        }
    }
}

/// Gaussian-bump coil profiles placed around the border with a slowly varying
/// phase, then normalized pixelwise so the RSS is exactly one.
pub fn make_sensitivities(seed: u64, n_c: usize, h: usize, w: usize) -> Result<SensitivitySet> {
    if n_c == 0 {
        return Err(Error::invalid("coil count", "need at least one coil"));
    }
    if h == 0 || w == 0 {
        return Err(Error::invalid("sensitivity size", format!("{h}x{w}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let rot = rng.random_range(0.0..2.0 * PI);
    let coils: Vec<[f64; 6]> = (0..n_c)
        .map(|i| {
            let ang = rot + 2.0 * PI * i as f64 / n_c as f64
                + rng.random_range(-0.15..0.15) * 2.0 * PI / n_c as f64;
            let rad = rng.random_range(1.0..1.2);
            let width = rng.random_range(0.85..1.05);
            let p0 = rng.random_range(0.0..2.0 * PI);
            let pu = rng.random_range(-1.0..1.0);
            let pv = rng.random_range(-1.0..1.0);
            [rad * ang.cos(), rad * ang.sin(), width, p0, pu, pv]
        })
        .collect();
    let mut data = vec![0.0; 2 * n_c * h * w];
    let mut mag = vec![0.0; n_c];
    for y in 0..h {
        for x in 0..w {
            let (u, v) = (coord(x, w), coord(y, h));
            let mut total = 0.0;
            for (i, c) in coils.iter().enumerate() {
                let d2 = (u - c[0]).powi(2) + (v - c[1]).powi(2);
                mag[i] = (-d2 / (2.0 * c[2] * c[2])).exp();
                total += mag[i] * mag[i];
            }
            let norm = total.sqrt();
            for (i, c) in coils.iter().enumerate() {
                let phase = c[3] + c[4] * u + c[5] * v;
                let a = mag[i] / norm;
                let o = 2 * ((i * h + y) * w + x);
                data[o] = a * phase.cos();
                data[o + 1] = a * phase.sin();
            }
        }
    }
    Ok(SensitivitySet {
        maps: Tensor::from_interleaved(data, &[n_c, h, w])?,
    })
}

/// Per-pixel root-sum-of-squares over the leading coil axis.
///
/// The squared magnitude is floored at [`RSS_FLOOR`] in the backward pass
/// only, so the value is exact while the gradient stays finite at zero.
pub fn rss<T: Float>(coil_images: &Tensor<T>) -> Result<Tensor<T>> {
    if !coil_images.is_complex() || coil_images.rank() != 3 {
        return Err(Error::invalid(
            "rss input",
            format!("expected complex [n_c, h, w], got {:?}", coil_images.shape()),
        ));
    }
    Ok(coil_images
        .abs2()?
        .sum_axes(&[0], false)?
        .sqrt_floored(T::of(RSS_FLOOR))?)
}

/// One synthetic training instance.
#[derive(Clone, Debug)]
pub struct KSpaceSlice {
    /// Complex `[n_c, h, w]`, centered view.
    pub kspace: Tensor<f64>,
    /// Real `[h, w]`.
    pub target: Tensor<f64>,
    pub sens: SensitivitySet,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl KSpaceSlice {
    pub fn n_coils(&self) -> usize {
        self.kspace.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.kspace.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.kspace.shape()[2]
    }

    pub fn target_image(&self) -> Image {
        Image::from_tensor(&self.target).expect("real [h, w] target")
    }

    /// Rounds every stored value to 32-bit precision, matching what the
    /// on-disk format can represent.
    pub fn quantized(&self) -> KSpaceSlice {
        let q = |t: &Tensor<f64>| t.cast::<f32>().cast::<f64>();
        KSpaceSlice {
            kspace: q(&self.kspace),
            target: q(&self.target),
            sens: SensitivitySet {
                maps: q(&self.sens.maps),
            },
            noise_sigma: self.noise_sigma as f32 as f64,
            seed: self.seed,
        }
    }
}

/// Coil-wise acquisition `kspace[i] = fft2c(sens[i] * m) + noise`, where the
/// noise is iid Gaussian with standard deviation `noise_sigma` on each of the
/// real and imaginary parts. The target is the RSS of the noiseless coil
/// images.
pub fn forward_model(
    phantom: &Phantom,
    sens: &SensitivitySet,
    noise_sigma: f64,
    seed: u64,
) -> Result<KSpaceSlice> {
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::invalid("noise sigma", noise_sigma.to_string()));
    }
    let (h, w) = (phantom.image.h, phantom.image.w);
    if sens.maps.shape()[1..] != [h, w] {
        return Err(Error::invalid(
            "sensitivity shape",
            format!("maps {:?} vs phantom {h}x{w}", sens.maps.shape()),
        ));
    }
    check_extent("image size", h, w, 1)?;
    let m: Tensor<f64> = phantom.image.to_tensor();
    let coils = sens.maps.mul(&m)?;
    let target = rss(&coils)?;
    let clean = coils.fft2c()?;
    let mut data = clean.to_vec();
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
        let normal = Normal::new(0.0, noise_sigma).expect("finite sigma");
        for v in &mut data {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(KSpaceSlice {
        kspace: Tensor::from_interleaved(data, clean.shape())?,
        target,
        sens: sens.clone(),
        noise_sigma,
        seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskKind {
    Equispaced,
    Random,
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskKind::Equispaced => "equispaced",
            MaskKind::Random => "random",
        })
    }
}

impl FromStr for MaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equispaced" => Ok(MaskKind::Equispaced),
            "random" => Ok(MaskKind::Random),
            _ => Err(Error::invalid("mask kind", s)),
        }
    }
}

/// Per-column acceptance pattern along the width axis of the centered view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplingMask {
    pub accept: Vec<bool>,
    pub accel: usize,
    pub n_center: usize,
    pub offset: usize,
}

/// Center band `[w/2 - n/2, w/2 + n/2)`.
pub fn center_band(w: usize, n_center: usize) -> std::ops::Range<usize> {
    w / 2 - n_center / 2..w / 2 + n_center / 2
}

fn check_mask_args(w: usize, accel: usize, n_center: usize) -> Result<()> {
    if w == 0 || accel == 0 {
        return Err(Error::invalid(
            "mask",
            format!("width {w} and acceleration {accel} must be positive"),
        ));
    }
    if n_center % 2 != 0 || n_center >= w {
        return Err(Error::invalid(
            "mask",
            format!("center band {n_center} must be even and below width {w}"),
        ));
    }
    Ok(())
}

impl SamplingMask {
    /// Equispaced columns `c % accel == offset` plus the center band.
    pub fn equispaced(w: usize, accel: usize, n_center: usize, offset: usize) -> Result<Self> {
        check_mask_args(w, accel, n_center)?;
        if offset >= accel {
            return Err(Error::invalid(
                "mask offset",
                format!("offset {offset} not in [0, {accel})"),
            ));
        }
        let band = center_band(w, n_center);
        let accept = (0..w)
            .map(|c| c % accel == offset || band.contains(&c))
            .collect();
        Ok(SamplingMask {
            accept,
            accel,
            n_center,
            offset,
        })
    }

    /// Center band plus `ceil(w / accel)` outer columns drawn uniformly
    /// without replacement (fewer if the band leaves too few candidates).
    pub fn random(w: usize, accel: usize, n_center: usize, seed: u64) -> Result<Self> {
        check_mask_args(w, accel, n_center)?;
        let band = center_band(w, n_center);
        let mut outer: Vec<usize> = (0..w).filter(|c| !band.contains(c)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 4));
        let take = w.div_ceil(accel).min(outer.len());
        let mut accept: Vec<bool> = (0..w).map(|c| band.contains(&c)).collect();
        for i in 0..take {
            let j = rng.random_range(i..outer.len());
            outer.swap(i, j);
            accept[outer[i]] = true;
        }
        Ok(SamplingMask {
            accept,
            accel,
            n_center,
            offset: 0,
        })
    }

    pub fn width(&self) -> usize {
        self.accept.len()
    }

    pub fn count(&self) -> usize {
        self.accept.iter().filter(|&&a| a).count()
    }

    /// 0/1 real tensor of shape `[w]`, broadcastable over `[.., h, w]`.
    pub fn to_tensor<T: Float>(&self) -> Tensor<T> {
        let v = self
            .accept
            .iter()
            .map(|&a| if a { T::one() } else { T::zero() })
            .collect();
        Tensor::from_vec(v, &[self.width()]).expect("shape")
    }
}

/// Equispaced mask; see [`SamplingMask::equispaced`].
pub fn make_mask(w: usize, accel: usize, n_center: usize, offset: usize) -> Result<SamplingMask> {
    SamplingMask::equispaced(w, accel, n_center, offset)
}

/// Equispaced offset assigned to a slice, a pure function of its seed.
pub fn mask_offset(slice_seed: u64, accel: usize) -> usize {
    (derive_seed(slice_seed, 5) % accel.max(1) as u64) as usize
}

/// The mask a slice with seed `slice_seed` is acquired with.
pub fn mask_for_seed(
    slice_seed: u64,
    kind: MaskKind,
    w: usize,
    accel: usize,
    n_center: usize,
) -> Result<SamplingMask> {
    match kind {
        MaskKind::Equispaced => {
            SamplingMask::equispaced(w, accel, n_center, mask_offset(slice_seed, accel))
        }
        MaskKind::Random => SamplingMask::random(w, accel, n_center, slice_seed),
    }
}

/// Zeroes the rejected columns of every coil; accepted values pass through
/// unchanged.
pub fn apply_mask<T: Float>(kspace: &Tensor<T>, mask: &SamplingMask) -> Result<Tensor<T>> {
    let w = *kspace.shape().last().unwrap_or(&0);
    if w != mask.width() {
        return Err(Error::invalid(
            "mask width",
            format!("mask has {} columns, k-space width is {w}", mask.width()),
        ));
    }
    Ok(kspace.mul(&mask.to_tensor())?)
}

/// Sensitivity estimate from the fully sampled center band only:
/// `s_i = lowres_i / rss(lowres)`. Pixels where the low-resolution RSS
/// vanishes get zero maps.
pub fn estimate_sensitivities<T: Float>(
    masked_kspace: &Tensor<T>,
    mask: &SamplingMask,
) -> Result<Tensor<T>> {
    let band = center_band(mask.width(), mask.n_center);
    let center = SamplingMask {
        accept: (0..mask.width()).map(|c| band.contains(&c)).collect(),
        ..mask.clone()
    };
    let low = gradcore::no_grad(|| apply_mask(masked_kspace, &center)?.ifft2c().map_err(Error::from))?;
    let shape = low.shape().to_vec();
    let (nc, plane) = (shape[0], shape[1] * shape[2]);
    let d = low.data();
    let mut out = vec![T::zero(); d.len()];
    for p in 0..plane {
        let mut total = T::zero();
        for i in 0..nc {
            let o = 2 * (i * plane + p);
            total = total + d[o] * d[o] + d[o + 1] * d[o + 1];
        }
        let norm = total.sqrt();
        if norm > T::zero() {
            for i in 0..nc {
                let o = 2 * (i * plane + p);
                out[o] = d[o] / norm;
                out[o + 1] = d[o + 1] / norm;
            }
        }
    }
    Ok(Tensor::from_interleaved(out, &shape)?)
}

/// Dataset synthesis settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationParams {
    pub slices: usize,
    pub size: usize,
    pub coils: usize,
    pub sigma: f64,
    pub seed: u64,
    pub kind: PhantomKind,
}

impl Default for SimulationParams {
    fn default() -> Self {
        SimulationParams {
            slices: 200,
            size: 64,
            coils: 4,
            sigma: 0.01,
            seed: 0,
            kind: PhantomKind::Textured,
        }
    }
}

impl SimulationParams {
    pub fn validate(&self) -> Result<()> {
        check_extent("image size", self.size, self.size, 32)?;
        if self.coils == 0 {
            return Err(Error::invalid("coil count", "need at least one coil"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid("noise sigma", self.sigma.to_string()));
        }
        Ok(())
    }

    pub fn slice_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, 1_000_000 + index as u64)
    }
}

/// Slice `index` of a synthetic dataset, already rounded to storage
/// precision so in-memory and on-disk datasets agree exactly.
pub fn simulate_slice(params: &SimulationParams, index: usize) -> Result<KSpaceSlice> {
    params.validate()?;
    let seed = params.slice_seed(index);
    let phantom = make_phantom(seed, params.size, params.size, params.kind)?;
    let sens = make_sensitivities(seed, params.coils, params.size, params.size)?;
    Ok(forward_model(&phantom, &sens, params.sigma, seed)?.quantized())
}

pub fn simulate_dataset(params: &SimulationParams) -> Result<Vec<KSpaceSlice>> {
    (0..params.slices).map(|i| simulate_slice(params, i)).collect()
}

pub const SLICE_MAGIC: &[u8; 9] = b"BNDSLICE1";

fn push_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

/// Serializes a slice: magic, `u32` n_c/h/w, `f32` sigma, `u64` seed, then
/// little-endian `f32` planes (kspace re, kspace im, sens re, sens im,
/// target).
pub fn encode_slice(slice: &KSpaceSlice) -> Vec<u8> {
    let (nc, h, w) = (slice.n_coils(), slice.height(), slice.width());
    let n = nc * h * w;
    let mut out = Vec::with_capacity(9 + 20 + 4 * (4 * n + h * w));
    out.extend_from_slice(SLICE_MAGIC);
    for d in [nc, h, w] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    push_f32(&mut out, slice.noise_sigma);
    out.extend_from_slice(&slice.seed.to_le_bytes());
    for t in [&slice.kspace, &slice.sens.maps] {
        let d = t.data();
        for part in 0..2 {
            for i in 0..n {
                push_f32(&mut out, d[2 * i + part]);
            }
        }
    }
    for &v in slice.target.data() {
        push_f32(&mut out, v);
    }
    out
}

pub fn decode_slice(bytes: &[u8], path: &Path) -> Result<KSpaceSlice> {
    let bad = |d: &str| Error::format(path, d.to_string());
    if bytes.len() < 33 || &bytes[..9] != SLICE_MAGIC {
        return Err(bad("missing BNDSLICE1 header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (nc, h, w) = (u32_at(9), u32_at(13), u32_at(17));
    let sigma = f32::from_le_bytes(bytes[21..25].try_into().unwrap()) as f64;
    let seed = u64::from_le_bytes(bytes[25..33].try_into().unwrap());
    let n = nc
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| bad("header extents overflow"))?;
    let expected = 33 + 4 * (4 * n + h * w);
    if bytes.len() != expected {
        return Err(bad(&format!(
            "expected {expected} bytes for {nc}x{h}x{w}, found {}",
            bytes.len()
        )));
    }
    let mut floats = bytes[33..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let mut interleaved = |count: usize| {
        let re: Vec<f64> = floats.by_ref().take(count).collect();
        let im: Vec<f64> = floats.by_ref().take(count).collect();
        (re, im)
    };
    let (kr, ki) = interleaved(n);
    let (sr, si) = interleaved(n);
    let target: Vec<f64> = floats.collect();
    Ok(KSpaceSlice {
        kspace: Tensor::from_planar(&kr, &ki, &[nc, h, w])?,
        target: Tensor::from_vec(target, &[h, w])?,
        sens: SensitivitySet {
            maps: Tensor::from_planar(&sr, &si, &[nc, h, w])?,
        },
        noise_sigma: sigma,
        seed,
    })
}

pub fn write_slice(path: &Path, slice: &KSpaceSlice) -> Result<()> {
    crate::io::write_atomic(path, &encode_slice(slice))
}

pub fn read_slice(path: &Path) -> Result<KSpaceSlice> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_slice(&bytes, path)
}

pub const MANIFEST_NAME: &str = "manifest.txt";

pub fn slice_file_name(index: usize) -> String {
    format!("slice_{index:05}.bnd")
}

/// Writes a synthetic dataset and its manifest into `dir`.
pub fn write_dataset(dir: &Path, params: &SimulationParams) -> Result<Vec<KSpaceSlice>> {
    params.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let slices = simulate_dataset(params)?;
    let mut manifest = format!(
        "# bandless synthetic dataset\nslices = {}\nsize = {}\ncoils = {}\nsigma = {}\nseed = {}\nphantom = {}\n# file seed\n",
        params.slices, params.size, params.coils, params.sigma, params.seed, params.kind
    );
    for (i, s) in slices.iter().enumerate() {
        let name = slice_file_name(i);
        write_slice(&dir.join(&name), s)?;
        manifest.push_str(&format!("{name} {}\n", s.seed));
    }
    crate::io::write_atomic(&dir.join(MANIFEST_NAME), manifest.as_bytes())?;
    Ok(slices)
}

/// Reads every `*.bnd` file of a dataset directory in name order.
pub fn read_dataset(dir: &Path) -> Result<Vec<KSpaceSlice>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for e in entries {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "bnd") {
            paths.push(p);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::invalid(
            "dataset",
            format!("no .bnd slices in {}", dir.display()),
        ));
    }
    paths.iter().map(|p| read_slice(p)).collect()
}
