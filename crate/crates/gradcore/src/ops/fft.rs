//! Orthonormal 2D FFT over the last two axes.

use rustfft::num_complex::Complex;
use rustfft::FftDirection;

use crate::tensor::DType;
use crate::{Float, GradError, Result, Tensor};

fn check_pow2<T: Float>(op: &'static str, x: &Tensor<T>) -> Result<(usize, usize)> {
    x.expect_complex(op)?;
    let r = x.rank();
    if r < 2 {
        return Err(GradError::Rank {
            op,
            expected: 2,
            got: x.shape().to_vec(),
        });
    }
    let (h, w) = (x.shape()[r - 2], x.shape()[r - 1]);
    for (axis, extent) in [(r - 2, h), (r - 1, w)] {
        if !extent.is_power_of_two() {
            return Err(GradError::NotPowerOfTwo { op, axis, extent });
        }
    }
    Ok((h, w))
}

fn transform<T: Float>(data: &[T], h: usize, w: usize, dir: FftDirection) -> Vec<T> {
    let planes = data.len() / (2 * h * w);
    let scale = T::one() / T::of(((h * w) as f64).sqrt());
    let mut buf: Vec<Complex<T>> = data
        .chunks_exact(2)
        .map(|c| Complex::new(c[0], c[1]))
        .collect();
    let (row_fft, col_fft) =
        T::with_planner(|p| (p.plan_fft(w, dir), p.plan_fft(h, dir)));
    row_fft.process(&mut buf);
    let mut column = vec![Complex::new(T::zero(), T::zero()); h];
    for p in 0..planes {
        let plane = &mut buf[p * h * w..(p + 1) * h * w];
        for j in 0..w {
            for i in 0..h {
                column[i] = plane[i * w + j];
            }
            col_fft.process(&mut column);
            for i in 0..h {
                plane[i * w + j] = column[i];
            }
        }
    }
    let mut out = Vec::with_capacity(data.len());
    for c in buf {
        out.push(c.re * scale);
        out.push(c.im * scale);
    }
    out
}

impl<T: Float> Tensor<T> {
    /// Forward DFT of the last two axes, scaled by `1/sqrt(h*w)`.
    pub fn fft2(&self) -> Result<Tensor<T>> {
        let (h, w) = check_pow2("fft2", self)?;
        let data = transform(self.data(), h, w, FftDirection::Forward);
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            DType::Complex,
            "fft2",
            vec![self.clone()],
            Box::new(|_, g, _| Ok(vec![Some(g.ifft2()?)])),
        ))
    }

    /// Inverse DFT of the last two axes, scaled by `1/sqrt(h*w)`.
    pub fn ifft2(&self) -> Result<Tensor<T>> {
        let (h, w) = check_pow2("ifft2", self)?;
        let data = transform(self.data(), h, w, FftDirection::Inverse);
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            DType::Complex,
            "ifft2",
            vec![self.clone()],
            Box::new(|_, g, _| Ok(vec![Some(g.fft2()?)])),
        ))
    }

    /// Centered forward transform: `fftshift(fft2(ifftshift(x)))`. Both the
    /// input origin and the output DC sample sit at `(h/2, w/2)`.
    pub fn fft2c(&self) -> Result<Tensor<T>> {
        self.ifftshift()?.fft2()?.fftshift()
    }

    /// Centered inverse transform: `fftshift(ifft2(ifftshift(k)))`.
    pub fn ifft2c(&self) -> Result<Tensor<T>> {
        self.ifftshift()?.ifft2()?.fftshift()
    }
}

#[cfg(test)]
mod tests {
    use crate::{GradError, Tensor};

    #[test]
    fn impulse_transforms_to_constant() {
        let mut v = vec![0.0; 2 * 32];
        v[0] = 1.0;
        let x = Tensor::<f64>::from_interleaved(v, &[4, 8]).unwrap();
        let k = x.fft2().unwrap();
        let c = 1.0 / 32f64.sqrt();
        for pair in k.data().chunks(2) {
            assert!((pair[0] - c).abs() < 1e-15 && pair[1].abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        let x = Tensor::<f64>::complex_zeros(&[6, 8]);
        assert!(matches!(
            x.fft2().unwrap_err(),
            GradError::NotPowerOfTwo { axis: 0, extent: 6, .. }
        ));
        assert!(Tensor::<f64>::zeros(&[4, 4]).fft2().is_err());
    }
}
