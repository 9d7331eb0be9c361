//! Vertical-only blur followed by locally scaled Gaussian noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::image::Image;
use crate::{Error, Result};

pub const MEDIAN_WINDOW: usize = 11;

#[derive(Clone, Debug, PartialEq)]
pub struct DitherParams {
    /// Blur strength; weight of the pixels directly above and below.
    pub alpha: f64,
    /// Noise variance per unit of local median.
    pub noise_c: f64,
    /// Side of the square median window; odd.
    pub window: usize,
    pub seed: u64,
}

impl DitherParams {
    /// The milder setting considered clinically usable.
    pub fn clinical(seed: u64) -> Self {
        DitherParams {
            alpha: 0.125,
            noise_c: 0.03,
            window: MEDIAN_WINDOW,
            seed,
        }
    }

    /// The stronger setting that masks banding more but degrades the image.
    pub fn strong(seed: u64) -> Self {
        DitherParams {
            alpha: 0.25,
            noise_c: 0.05,
            window: MEDIAN_WINDOW,
            seed,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::invalid("blur alpha", alpha.to_string()));
    }
    Ok(())
}

/// The 3x3 kernel `[[0, a, 0], [0, 1, 0], [0, a, 0]] / (1 + 2a)`.
pub fn blur_kernel(alpha: f64) -> [[f64; 3]; 3] {
    let n = 1.0 + 2.0 * alpha;
    [
        [0.0, alpha / n, 0.0],
        [0.0, 1.0 / n, 0.0],
        [0.0, alpha / n, 0.0],
    ]
}

/// Convolves with [`blur_kernel`] using replicate padding.
pub fn blur_anisotropic(image: &Image, alpha: f64) -> Result<Image> {
    check_alpha(alpha)?;
    let k = blur_kernel(alpha);
    Ok(Image::from_fn(image.h, image.w, |y, x| {
        let mut acc = 0.0;
        for (dy, row) in k.iter().enumerate() {
            for (dx, &kv) in row.iter().enumerate() {
                if kv != 0.0 {
                    acc += kv * image.get_clamped(y as isize + dy as isize - 1, x as isize + dx as isize - 1);
                }
            }
        }
        acc
    }))
}

fn check_window(window: usize) -> Result<()> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::invalid("median window", format!("{window} must be odd")));
    }
    Ok(())
}

/// Median of each `window x window` neighbourhood, replicate padding.
pub fn local_median(image: &Image, window: usize) -> Result<Image> {
    check_window(window)?;
    let r = (window / 2) as isize;
    let mut buf = Vec::with_capacity(window * window);
    let mut out = Vec::with_capacity(image.h * image.w);
    for y in 0..image.h as isize {
        for x in 0..image.w as isize {
            buf.clear();
            for dy in -r..=r {
                for dx in -r..=r {
                    buf.push(image.get_clamped(y + dy, x + dx));
                }
            }
            let mid = buf.len() / 2;
            let (_, m, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
            out.push(*m);
        }
    }
    Image::new(image.h, image.w, out)
}

/// Adds `N(0, noise_c * local median)` independently at every pixel.
pub fn adaptive_noise(image: &Image, noise_c: f64, window: usize, seed: u64) -> Result<Image> {
    check_window(window)?;
    if !(noise_c >= 0.0) || !noise_c.is_finite() {
        return Err(Error::invalid("noise constant", noise_c.to_string()));
    }
    if noise_c == 0.0 {
        return Ok(image.clone());
    }
    let median = local_median(image, window)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = image
        .data
        .iter()
        .zip(&median.data)
        .map(|(&v, &m)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + (noise_c * m.max(0.0)).sqrt() * z
        })
        .collect();
    Image::new(image.h, image.w, data)
}

/// Blur, then noise scaled by the median of the blurred image.
pub fn dither(image: &Image, params: &DitherParams) -> Result<Image> {
    let blurred = blur_anisotropic(image, params.alpha)?;
    adaptive_noise(&blurred, params.noise_c, params.window, params.seed)
}
