//! Non-overlapping k×k pooling over the last two axes, and nearest-neighbour
//! upsampling (the adjoint of sum pooling).

use std::sync::Arc;

use crate::tensor::DType;
use crate::{Float, GradError, Result, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
}

fn pool_dims<T: Float>(op: &'static str, x: &Tensor<T>, k: usize) -> Result<(usize, usize, usize)> {
    x.expect_real(op)?;
    let r = x.rank();
    if r < 2 {
        return Err(GradError::Rank {
            op,
            expected: 2,
            got: x.shape().to_vec(),
        });
    }
    if k == 0 {
        return Err(GradError::invalid(op, "window must be positive"));
    }
    let (h, w) = (x.shape()[r - 2], x.shape()[r - 1]);
    for (axis, extent) in [(r - 2, h), (r - 1, w)] {
        if extent % k != 0 {
            return Err(GradError::NotDivisible {
                op,
                axis,
                extent,
                divisor: k,
            });
        }
    }
    Ok((x.numel() / (h * w).max(1), h, w))
}

fn pooled_shape(shape: &[usize], k: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    let r = s.len();
    s[r - 2] /= k;
    s[r - 1] /= k;
    s
}

/// Adds `g[i]` into position `idx[i]` of a zero tensor of `shape`.
fn scatter_flat<T: Float>(g: &Tensor<T>, idx: Arc<Vec<usize>>, shape: Vec<usize>) -> Tensor<T> {
    let mut out = vec![T::zero(); shape.iter().product()];
    for (&i, &v) in idx.iter().zip(g.data()) {
        out[i] = out[i] + v;
    }
    let gshape = g.shape().to_vec();
    Tensor::from_op(
        out,
        shape,
        DType::Real,
        "scatter",
        vec![g.clone()],
        Box::new(move |_, gg, _| Ok(vec![Some(gather_flat(gg, Arc::clone(&idx), gshape.clone()))])),
    )
}

/// Picks `x[idx[i]]` into a tensor of `shape`.
fn gather_flat<T: Float>(x: &Tensor<T>, idx: Arc<Vec<usize>>, shape: Vec<usize>) -> Tensor<T> {
    let d = x.data();
    let out = idx.iter().map(|&i| d[i]).collect();
    let xshape = x.shape().to_vec();
    Tensor::from_op(
        out,
        shape,
        DType::Real,
        "gather",
        vec![x.clone()],
        Box::new(move |_, gg, _| Ok(vec![Some(scatter_flat(gg, Arc::clone(&idx), xshape.clone()))])),
    )
}

impl<T: Float> Tensor<T> {
    /// Max over non-overlapping `k×k` windows. The gradient goes to the first
    /// maximal element of each window in row-major order.
    pub fn max_pool2d(&self, k: usize) -> Result<Tensor<T>> {
        let (planes, h, w) = pool_dims("max_pool2d", self, k)?;
        let (oh, ow) = (h / k, w / k);
        let d = self.data();
        let mut idx = Vec::with_capacity(planes * oh * ow);
        for p in 0..planes {
            let base = p * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * k * w + ox * k;
                    for dy in 0..k {
                        let row = base + (oy * k + dy) * w + ox * k;
                        for i in row..row + k {
                            if d[i] > d[best] {
                                best = i;
                            }
                        }
                    }
                    idx.push(best);
                }
            }
        }
        Ok(gather_flat(self, Arc::new(idx), pooled_shape(self.shape(), k)))
    }

    /// Mean over non-overlapping `k×k` windows.
    pub fn avg_pool2d(&self, k: usize) -> Result<Tensor<T>> {
        let (planes, h, w) = pool_dims("avg_pool2d", self, k)?;
        let (oh, ow) = (h / k, w / k);
        let inv = T::one() / T::of((k * k) as f64);
        let d = self.data();
        let mut out = vec![T::zero(); planes * oh * ow];
        for p in 0..planes {
            for y in 0..h {
                let row = &d[(p * h + y) * w..(p * h + y + 1) * w];
                let orow = &mut out[(p * oh + y / k) * ow..(p * oh + y / k + 1) * ow];
                for (x, &v) in row.iter().enumerate() {
                    orow[x / k] = orow[x / k] + v;
                }
            }
        }
        for v in &mut out {
            *v = *v * inv;
        }
        Ok(Tensor::from_op(
            out,
            pooled_shape(self.shape(), k),
            DType::Real,
            "avg_pool2d",
            vec![self.clone()],
            Box::new(move |_, g, _| Ok(vec![Some(g.upsample_nearest(k)?.scale(inv)?)])),
        ))
    }

    pub fn pool2d(&self, kind: PoolKind, k: usize) -> Result<Tensor<T>> {
        match kind {
            PoolKind::Max => self.max_pool2d(k),
            PoolKind::Avg => self.avg_pool2d(k),
        }
    }

    /// Repeats every pixel of the last two axes into a `k×k` block.
    pub fn upsample_nearest(&self, k: usize) -> Result<Tensor<T>> {
        self.expect_real("upsample_nearest")?;
        let r = self.rank();
        if r < 2 || k == 0 {
            return Err(GradError::invalid(
                "upsample_nearest",
                format!("bad shape {:?} or factor {k}", self.shape()),
            ));
        }
        let (h, w) = (self.shape()[r - 2], self.shape()[r - 1]);
        let planes = self.numel() / (h * w).max(1);
        let (oh, ow) = (h * k, w * k);
        let d = self.data();
        let mut out = vec![T::zero(); planes * oh * ow];
        for p in 0..planes {
            for y in 0..oh {
                let src = &d[(p * h + y / k) * w..(p * h + y / k + 1) * w];
                let dst = &mut out[(p * oh + y) * ow..(p * oh + y + 1) * ow];
                for (x, v) in dst.iter_mut().enumerate() {
                    *v = src[x / k];
                }
            }
        }
        let mut shape = self.shape().to_vec();
        shape[r - 2] = oh;
        shape[r - 1] = ow;
        let kk = T::of((k * k) as f64);
        Ok(Tensor::from_op(
            out,
            shape,
            DType::Real,
            "upsample_nearest",
            vec![self.clone()],
            Box::new(move |_, g, _| Ok(vec![Some(g.avg_pool2d(k)?.scale(kk)?)])),
        ))
    }
}
