//! Shape and layout operations. All of them are linear, so each backward
//! rule is another layout op and second derivatives come for free.

use std::sync::Arc;

use crate::tensor::numel_of;
use crate::{Float, GradError, Result, Tensor};

impl<T: Float> Tensor<T> {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if numel_of(shape) != self.numel() {
            return Err(GradError::DataLength {
                op: "reshape",
                len: self.numel(),
                shape: shape.to_vec(),
            });
        }
        let from = self.shape().to_vec();
        Ok(Tensor::from_op_shared(
            Arc::clone(self.data_arc()),
            shape.to_vec(),
            self.dtype(),
            "reshape",
            vec![self.clone()],
            Box::new(move |_, g, _| Ok(vec![Some(g.reshape(&from)?)])),
        ))
    }

    /// Swaps the last two axes: `[.., h, w] -> [.., w, h]`.
    pub fn transpose_last2(&self) -> Result<Tensor<T>> {
        let r = self.rank();
        if r < 2 {
            return Err(GradError::Rank {
                op: "transpose_last2",
                expected: 2,
                got: self.shape().to_vec(),
            });
        }
        let (h, w) = (self.shape()[r - 2], self.shape()[r - 1]);
        let width = self.dtype().width();
        let planes = self.numel() / (h * w).max(1);
        let d = self.data();
        let mut out = vec![T::zero(); d.len()];
        for p in 0..planes {
            let base = p * h * w;
            for i in 0..h {
                for j in 0..w {
                    let src = (base + i * w + j) * width;
                    let dst = (base + j * h + i) * width;
                    out[dst..dst + width].copy_from_slice(&d[src..src + width]);
                }
            }
        }
        let mut shape = self.shape().to_vec();
        shape.swap(r - 2, r - 1);
        Ok(Tensor::from_op(
            out,
            shape,
            self.dtype(),
            "transpose_last2",
            vec![self.clone()],
            Box::new(|_, g, _| Ok(vec![Some(g.transpose_last2()?)])),
        ))
    }

    fn axis_blocks(&self, op: &'static str, axis: usize) -> Result<(usize, usize, usize)> {
        if axis >= self.rank() {
            return Err(GradError::invalid(
                op,
                format!("axis {axis} out of range for {:?}", self.shape()),
            ));
        }
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize =
            self.shape()[axis + 1..].iter().product::<usize>() * self.dtype().width();
        Ok((outer, self.shape()[axis], inner))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<T>> {
        let (outer, n, inner) = self.axis_blocks("narrow", axis)?;
        if start + len > n {
            return Err(GradError::invalid(
                "narrow",
                format!("range {start}..{} exceeds extent {n} on axis {axis}", start + len),
            ));
        }
        let d = self.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let s = (o * n + start) * inner;
            out.extend_from_slice(&d[s..s + len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Ok(Tensor::from_op(
            out,
            shape,
            self.dtype(),
            "narrow",
            vec![self.clone()],
            Box::new(move |_, g, _| Ok(vec![Some(g.pad_axis(axis, start, n)?)])),
        ))
    }

    /// Embeds this tensor at offset `start` of a zero tensor whose extent on
    /// `axis` is `total`. Adjoint of [`Tensor::narrow`].
    pub fn pad_axis(&self, axis: usize, start: usize, total: usize) -> Result<Tensor<T>> {
        let (outer, n, inner) = self.axis_blocks("pad_axis", axis)?;
        if start + n > total {
            return Err(GradError::invalid(
                "pad_axis",
                format!("extent {n} at {start} does not fit in {total}"),
            ));
        }
        let d = self.data();
        let mut out = vec![T::zero(); outer * total * inner];
        for o in 0..outer {
            let s = o * n * inner;
            let t = (o * total + start) * inner;
            out[t..t + n * inner].copy_from_slice(&d[s..s + n * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = total;
        Ok(Tensor::from_op(
            out,
            shape,
            self.dtype(),
            "pad_axis",
            vec![self.clone()],
            Box::new(move |_, g, _| Ok(vec![Some(g.narrow(axis, start, n)?)])),
        ))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        let first = parts
            .first()
            .ok_or_else(|| GradError::invalid("concat", "no inputs"))?;
        let rank = first.rank();
        if axis >= rank {
            return Err(GradError::invalid("concat", format!("axis {axis} out of range")));
        }
        for p in parts {
            if p.dtype() != first.dtype() {
                return Err(GradError::DType {
                    op: "concat",
                    expected: first.dtype(),
                    got: p.dtype(),
                });
            }
            if p.rank() != rank {
                return Err(GradError::Rank {
                    op: "concat",
                    expected: rank,
                    got: p.shape().to_vec(),
                });
            }
            for ax in 0..rank {
                if ax != axis && p.shape()[ax] != first.shape()[ax] {
                    return Err(GradError::ShapeMismatch {
                        op: "concat",
                        axis: ax,
                        lhs: first.shape().to_vec(),
                        rhs: p.shape().to_vec(),
                    });
                }
            }
        }
        let outer: usize = first.shape()[..axis].iter().product();
        let inner: usize =
            first.shape()[axis + 1..].iter().product::<usize>() * first.dtype().width();
        let extents: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = extents.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &n) in parts.iter().zip(&extents) {
                let s = o * n * inner;
                out.extend_from_slice(&p.data()[s..s + n * inner]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        Ok(Tensor::from_op(
            out,
            shape,
            first.dtype(),
            "concat",
            parts.iter().map(|&p| p.clone()).collect(),
            Box::new(move |_, g, needs| {
                let mut start = 0;
                let mut grads = Vec::with_capacity(extents.len());
                for (i, &n) in extents.iter().enumerate() {
                    grads.push(if needs[i] {
                        Some(g.narrow(axis, start, n)?)
                    } else {
                        None
                    });
                    start += n;
                }
                Ok(grads)
            }),
        ))
    }

    /// Circular shift of the last two axes by `(dy, dx)`.
    pub fn roll_last2(&self, dy: isize, dx: isize) -> Result<Tensor<T>> {
        let r = self.rank();
        if r < 2 {
            return Err(GradError::Rank {
                op: "roll_last2",
                expected: 2,
                got: self.shape().to_vec(),
            });
        }
        let (h, w) = (self.shape()[r - 2], self.shape()[r - 1]);
        let width = self.dtype().width();
        let planes = self.numel() / (h * w).max(1);
        let sy = dy.rem_euclid(h as isize) as usize;
        let sx = dx.rem_euclid(w as isize) as usize;
        let d = self.data();
        let mut out = vec![T::zero(); d.len()];
        for p in 0..planes {
            let base = p * h * w;
            for i in 0..h {
                let ti = (i + sy) % h;
                for j in 0..w {
                    let tj = (j + sx) % w;
                    let src = (base + i * w + j) * width;
                    let dst = (base + ti * w + tj) * width;
                    out[dst..dst + width].copy_from_slice(&d[src..src + width]);
                }
            }
        }
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            self.dtype(),
            "roll_last2",
            vec![self.clone()],
            Box::new(move |_, g, _| Ok(vec![Some(g.roll_last2(-dy, -dx)?)])),
        ))
    }

    /// Moves the zero-frequency sample of the last two axes to the center.
    pub fn fftshift(&self) -> Result<Tensor<T>> {
        let r = self.rank().max(2);
        let (h, w) = (
            *self.shape().get(r - 2).unwrap_or(&1),
            *self.shape().get(r - 1).unwrap_or(&1),
        );
        self.roll_last2((h / 2) as isize, (w / 2) as isize)
    }

    /// Inverse of [`Tensor::fftshift`].
    pub fn ifftshift(&self) -> Result<Tensor<T>> {
        let r = self.rank().max(2);
        let (h, w) = (
            *self.shape().get(r - 2).unwrap_or(&1),
            *self.shape().get(r - 1).unwrap_or(&1),
        );
        self.roll_last2(-((h / 2) as isize), -((w / 2) as isize))
    }
}
