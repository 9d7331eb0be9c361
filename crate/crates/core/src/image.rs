//! Plain row-major 2D images in 64-bit precision, for everything that does not
//! need differentiation (metrics, dithering, PGM output).

use gradcore::{Float, Tensor};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != h * w {
            return Err(Error::invalid(
                "image",
                format!("{} values for {h}x{w}", data.len()),
            ));
        }
        Ok(Image { h, w, data })
    }

    pub fn filled(h: usize, w: usize, value: f64) -> Self {
        Image {
            h,
            w,
            data: vec![value; h * w],
        }
    }

    pub fn from_fn(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                data.push(f(y, x));
            }
        }
        Image { h, w, data }
    }

    /// Converts a real `[h, w]` tensor.
    pub fn from_tensor<T: Float>(t: &Tensor<T>) -> Result<Self> {
        if t.rank() != 2 || t.is_complex() {
            return Err(Error::invalid(
                "image",
                format!("expected real [h, w] tensor, got {:?}", t.shape()),
            ));
        }
        Image::new(t.shape()[0], t.shape()[1], t.to_f64_vec())
    }

    pub fn to_tensor<T: Float>(&self) -> Tensor<T> {
        Tensor::from_f64(&self.data, &[self.h, self.w]).expect("consistent image")
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.w + x]
    }

    /// Pixel with coordinates clamped to the image (replicate padding).
    #[inline]
    pub fn get_clamped(&self, y: isize, x: isize) -> f64 {
        let y = y.clamp(0, self.h as isize - 1) as usize;
        let x = x.clamp(0, self.w as isize - 1) as usize;
        self.data[y * self.w + x]
    }

    pub fn transpose(&self) -> Image {
        Image::from_fn(self.w, self.h, |y, x| self.get(x, y))
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sub(&self, other: &Image) -> Result<Image> {
        self.same_shape("image difference", other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Image { data, ..*self })
    }

    pub(crate) fn same_shape(&self, what: &'static str, other: &Image) -> Result<()> {
        if (self.h, self.w) != (other.h, other.w) {
            return Err(Error::invalid(
                what,
                format!("{}x{} vs {}x{}", self.h, self.w, other.h, other.w),
            ));
        }
        Ok(())
    }
}
