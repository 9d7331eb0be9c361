//! 2D cross-correlation via im2col + GEMM.
//!
//! Three primitives form a family closed under differentiation:
//! `conv2d(x, W)`, `conv_input_grad(g, W)` and `conv_weight_grad(x, g)`.
//! Each one's backward rule is expressed with the other two, which is what
//! makes the second-order gradient penalty work through convolutions.

use crate::ops::elementwise::slot;
use crate::tensor::DType;
use crate::{Float, GradError, Result, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of `k/2` on each side; output keeps the input extent.
    Same,
    /// No padding; output shrinks by `k - 1`.
    Valid,
}

#[derive(Clone, Copy, Debug)]
struct Geom {
    ci: usize,
    co: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    ph: usize,
    pw: usize,
    ho: usize,
    wo: usize,
}

impl Geom {
    fn new(input: &[usize], weight: &[usize], padding: Padding) -> Result<Geom> {
        if input.len() != 3 {
            return Err(GradError::Rank {
                op: "conv2d",
                expected: 3,
                got: input.to_vec(),
            });
        }
        if weight.len() != 4 {
            return Err(GradError::Rank {
                op: "conv2d",
                expected: 4,
                got: weight.to_vec(),
            });
        }
        let (ci, h, w) = (input[0], input[1], input[2]);
        let (co, wci, kh, kw) = (weight[0], weight[1], weight[2], weight[3]);
        if wci != ci {
            return Err(GradError::ShapeMismatch {
                op: "conv2d",
                axis: 0,
                lhs: input.to_vec(),
                rhs: weight.to_vec(),
            });
        }
        let (ph, pw) = match padding {
            Padding::Same => {
                for (axis, k) in [(2, kh), (3, kw)] {
                    if k % 2 == 0 {
                        return Err(GradError::invalid(
                            "conv2d",
                            format!("same padding needs an odd kernel, axis {axis} has {k}"),
                        ));
                    }
                }
                (kh / 2, kw / 2)
            }
            Padding::Valid => (0, 0),
        };
        if h + 2 * ph < kh || w + 2 * pw < kw {
            return Err(GradError::invalid(
                "conv2d",
                format!("kernel {kh}x{kw} larger than input {h}x{w}"),
            ));
        }
        Ok(Geom {
            ci,
            co,
            h,
            w,
            kh,
            kw,
            ph,
            pw,
            ho: h + 2 * ph - kh + 1,
            wo: w + 2 * pw - kw + 1,
        })
    }

    fn k(&self) -> usize {
        self.ci * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.ph == 0 && self.pw == 0
    }

    fn input_shape(&self) -> Vec<usize> {
        vec![self.ci, self.h, self.w]
    }

    fn output_shape(&self) -> Vec<usize> {
        vec![self.co, self.ho, self.wo]
    }

    fn weight_shape(&self) -> Vec<usize> {
        vec![self.co, self.ci, self.kh, self.kw]
    }

    /// Valid output-column range for kernel tap `kj`.
    fn ox_range(&self, kj: usize) -> (usize, usize) {
        let lo = self.pw.saturating_sub(kj);
        let hi = (self.w + self.pw).saturating_sub(kj).min(self.wo);
        (lo, hi.max(lo))
    }

    fn im2col<T: Float>(&self, x: &[T]) -> Vec<T> {
        let p = self.p();
        let mut cols = vec![T::zero(); self.k() * p];
        for c in 0..self.ci {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    let (lo, hi) = self.ox_range(kj);
                    for oy in 0..self.ho {
                        let iy = oy + ki;
                        if iy < self.ph || iy - self.ph >= self.h {
                            continue;
                        }
                        let src = (c * self.h + iy - self.ph) * self.w;
                        let ix0 = lo + kj - self.pw;
                        dst[oy * self.wo + lo..oy * self.wo + hi]
                            .copy_from_slice(&x[src + ix0..src + ix0 + (hi - lo)]);
                    }
                }
            }
        }
        cols
    }

    fn col2im<T: Float>(&self, cols: &[T]) -> Vec<T> {
        let p = self.p();
        let mut x = vec![T::zero(); self.ci * self.h * self.w];
        for c in 0..self.ci {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let src = &cols[row * p..(row + 1) * p];
                    let (lo, hi) = self.ox_range(kj);
                    for oy in 0..self.ho {
                        let iy = oy + ki;
                        if iy < self.ph || iy - self.ph >= self.h {
                            continue;
                        }
                        let dst = (c * self.h + iy - self.ph) * self.w + lo + kj - self.pw;
                        for (d, &s) in x[dst..dst + (hi - lo)]
                            .iter_mut()
                            .zip(&src[oy * self.wo + lo..oy * self.wo + hi])
                        {
                            *d = *d + s;
                        }
                    }
                }
            }
        }
        x
    }

    /// `W[co,K] @ cols(x)[K,P]`.
    fn forward<T: Float>(&self, x: &[T], w: &[T]) -> Vec<T> {
        let (k, p) = (self.k(), self.p());
        let mut out = vec![T::zero(); self.co * p];
        let owned;
        let cols: &[T] = if self.is_pointwise() {
            x
        } else {
            owned = self.im2col(x);
            &owned
        };
        T::gemm(self.co, k, p, T::one(), w, k, 1, cols, p, 1, T::zero(), &mut out, p, 1);
        out
    }

    /// `col2im(W^T @ g)`.
    fn input_grad<T: Float>(&self, g: &[T], w: &[T]) -> Vec<T> {
        let (k, p) = (self.k(), self.p());
        let mut cols = vec![T::zero(); k * p];
        T::gemm(k, self.co, p, T::one(), w, 1, k, g, p, 1, T::zero(), &mut cols, p, 1);
        if self.is_pointwise() {
            cols
        } else {
            self.col2im(&cols)
        }
    }

    /// `g[co,P] @ cols(x)^T`.
    fn weight_grad<T: Float>(&self, x: &[T], g: &[T]) -> Vec<T> {
        let (k, p) = (self.k(), self.p());
        let mut out = vec![T::zero(); self.co * k];
        let owned;
        let cols: &[T] = if self.is_pointwise() {
            x
        } else {
            owned = self.im2col(x);
            &owned
        };
        T::gemm(self.co, p, k, T::one(), g, p, 1, cols, 1, p, T::zero(), &mut out, k, 1);
        out
    }
}

fn expect_shape<T: Float>(op: &'static str, t: &Tensor<T>, want: &[usize]) -> Result<()> {
    t.expect_real(op)?;
    if t.shape() != want {
        let axis = t
            .shape()
            .iter()
            .zip(want)
            .position(|(a, b)| a != b)
            .unwrap_or(0);
        return Err(GradError::ShapeMismatch {
            op,
            axis,
            lhs: t.shape().to_vec(),
            rhs: want.to_vec(),
        });
    }
    Ok(())
}

fn conv_raw<T: Float>(x: &Tensor<T>, w: &Tensor<T>, geom: Geom) -> Tensor<T> {
    let data = geom.forward(x.data(), w.data());
    Tensor::from_op(
        data,
        geom.output_shape(),
        DType::Real,
        "conv2d",
        vec![x.clone(), w.clone()],
        Box::new(move |inp, g, needs| {
            Ok(vec![
                slot(needs[0], || Ok(conv_input_grad(g, &inp[1], geom)))?,
                slot(needs[1], || Ok(conv_weight_grad(&inp[0], g, geom)))?,
            ])
        }),
    )
}

fn conv_input_grad<T: Float>(g: &Tensor<T>, w: &Tensor<T>, geom: Geom) -> Tensor<T> {
    let data = geom.input_grad(g.data(), w.data());
    Tensor::from_op(
        data,
        geom.input_shape(),
        DType::Real,
        "conv2d_input_grad",
        vec![g.clone(), w.clone()],
        Box::new(move |inp, gg, needs| {
            Ok(vec![
                slot(needs[0], || Ok(conv_raw(gg, &inp[1], geom)))?,
                slot(needs[1], || Ok(conv_weight_grad(gg, &inp[0], geom)))?,
            ])
        }),
    )
}

fn conv_weight_grad<T: Float>(x: &Tensor<T>, g: &Tensor<T>, geom: Geom) -> Tensor<T> {
    let data = geom.weight_grad(x.data(), g.data());
    Tensor::from_op(
        data,
        geom.weight_shape(),
        DType::Real,
        "conv2d_weight_grad",
        vec![x.clone(), g.clone()],
        Box::new(move |inp, gw, needs| {
            Ok(vec![
                slot(needs[0], || Ok(conv_input_grad(&inp[1], gw, geom)))?,
                slot(needs[1], || Ok(conv_raw(&inp[0], gw, geom)))?,
            ])
        }),
    )
}

impl<T: Float> Tensor<T> {
    /// Cross-correlation of a `[c_in, h, w]` input with `[c_out, c_in, kh, kw]`
    /// weights (stride 1), plus an optional per-channel bias.
    pub fn conv2d(
        &self,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        padding: Padding,
    ) -> Result<Tensor<T>> {
        self.expect_real("conv2d")?;
        weight.expect_real("conv2d")?;
        let geom = Geom::new(self.shape(), weight.shape(), padding)?;
        let out = conv_raw(self, weight, geom);
        match bias {
            None => Ok(out),
            Some(b) => {
                expect_shape("conv2d", b, &[geom.co])?;
                out.add(&b.reshape(&[geom.co, 1, 1])?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[f64], w: &[f64], g: &Geom) -> Vec<f64> {
        let mut out = vec![0.0; g.co * g.ho * g.wo];
        for o in 0..g.co {
            for oy in 0..g.ho {
                for ox in 0..g.wo {
                    let mut acc = 0.0;
                    for c in 0..g.ci {
                        for ki in 0..g.kh {
                            for kj in 0..g.kw {
                                let iy = oy as isize + ki as isize - g.ph as isize;
                                let ix = ox as isize + kj as isize - g.pw as isize;
                                if iy < 0 || ix < 0 || iy >= g.h as isize || ix >= g.w as isize {
                                    continue;
                                }
                                acc += x[(c * g.h + iy as usize) * g.w + ix as usize]
                                    * w[((o * g.ci + c) * g.kh + ki) * g.kw + kj];
                            }
                        }
                    }
                    out[(o * g.ho + oy) * g.wo + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn matches_direct_loops() {
        let x: Vec<f64> = (0..2 * 5 * 7).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let w: Vec<f64> = (0..3 * 2 * 9).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        for pad in [Padding::Same, Padding::Valid] {
            let xt = Tensor::<f64>::from_f64(&x, &[2, 5, 7]).unwrap();
            let wt = Tensor::<f64>::from_f64(&w, &[3, 2, 3, 3]).unwrap();
            let geom = Geom::new(xt.shape(), wt.shape(), pad).unwrap();
            let y = xt.conv2d(&wt, None, pad).unwrap();
            assert_eq!(y.to_vec(), naive(&x, &w, &geom));
        }
    }

    #[test]
    fn identity_and_constant_kernels() {
        let x = Tensor::<f64>::from_f64(&[1.0, -2.0, 3.5, 4.0], &[1, 2, 2]).unwrap();
        let one = Tensor::<f64>::ones(&[1, 1, 1, 1]);
        let zero = Tensor::<f64>::zeros(&[1]);
        assert_eq!(x.conv2d(&one, Some(&zero), Padding::Same).unwrap().to_vec(), x.to_vec());

        let c = Tensor::<f64>::full(&[1, 6, 6], 0.7);
        let k = Tensor::<f64>::ones(&[1, 1, 3, 3]);
        let y = c.conv2d(&k, None, Padding::Same).unwrap();
        for i in 1..5 {
            for j in 1..5 {
                assert!((y.at(&[0, i, j]) - 6.3).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn errors_name_axis() {
        let x = Tensor::<f64>::zeros(&[2, 4, 4]);
        let w = Tensor::<f64>::zeros(&[1, 3, 3, 3]);
        assert!(matches!(
            x.conv2d(&w, None, Padding::Same).unwrap_err(),
            GradError::ShapeMismatch { axis: 0, .. }
        ));
        let even = Tensor::<f64>::zeros(&[1, 2, 2, 2]);
        assert!(x.conv2d(&even, None, Padding::Same).is_err());
        assert!(x.conv2d(&even, None, Padding::Valid).is_ok());
    }
}
