//! Sums, means, and their broadcast adjoints.

use crate::shape::{aligned_strides, broadcastable_to, contiguous_strides, for_each_index2};
use crate::{Float, GradError, Result, Tensor};

fn storage(shape: &[usize], complex: bool) -> Vec<usize> {
    let mut s = shape.to_vec();
    if complex {
        s.push(2);
    }
    s
}

impl<T: Float> Tensor<T> {
    /// Sums over broadcast axes so the result has `shape`. Inverse of
    /// [`Tensor::broadcast_to`].
    pub fn sum_to(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if self.shape() == shape {
            return Ok(self.clone());
        }
        if !broadcastable_to(shape, self.shape()) {
            return Err(GradError::invalid(
                "sum_to",
                format!("{:?} does not broadcast to {:?}", shape, self.shape()),
            ));
        }
        let complex = self.is_complex();
        let src = storage(self.shape(), complex);
        let dst = storage(shape, complex);
        let n_out: usize = dst.iter().product();
        let mut out = vec![T::zero(); n_out];
        let d = self.data();
        if n_out == 1 {
            out[0] = d.iter().copied().sum();
        } else {
            let sa = contiguous_strides(&src);
            let sb = aligned_strides(&dst, &src);
            for_each_index2(&src, &sa, &sb, |_, i, j| out[j] = out[j] + d[i]);
        }
        let from = self.shape().to_vec();
        Ok(Tensor::from_op(
            out,
            shape.to_vec(),
            self.dtype(),
            "sum_to",
            vec![self.clone()],
            Box::new(move |_, g, _| Ok(vec![Some(g.broadcast_to(&from)?)])),
        ))
    }

    /// Repeats values along broadcast axes.
    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if self.shape() == shape {
            return Ok(self.clone());
        }
        if !broadcastable_to(self.shape(), shape) {
            return Err(GradError::invalid(
                "broadcast_to",
                format!("{:?} does not broadcast to {:?}", self.shape(), shape),
            ));
        }
        let complex = self.is_complex();
        let src = storage(self.shape(), complex);
        let dst = storage(shape, complex);
        let mut out = vec![T::zero(); dst.iter().product()];
        let d = self.data();
        let sa = contiguous_strides(&dst);
        let sb = aligned_strides(&src, &dst);
        for_each_index2(&dst, &sa, &sb, |o, _, j| out[o] = d[j]);
        let from = self.shape().to_vec();
        Ok(Tensor::from_op(
            out,
            shape.to_vec(),
            self.dtype(),
            "broadcast_to",
            vec![self.clone()],
            Box::new(move |_, g, _| Ok(vec![Some(g.sum_to(&from)?)])),
        ))
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&self) -> Result<Tensor<T>> {
        let ones = vec![1; self.rank()];
        self.sum_to(&ones)?.reshape(&[])
    }

    pub fn mean(&self) -> Result<Tensor<T>> {
        let n = self.numel().max(1);
        self.sum()?.scale(T::one() / T::of(n as f64))
    }

    pub fn sum_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor<T>> {
        let mut keep = self.shape().to_vec();
        for &a in axes {
            if a >= keep.len() {
                return Err(GradError::invalid(
                    "sum_axes",
                    format!("axis {a} out of range for {:?}", self.shape()),
                ));
            }
            keep[a] = 1;
        }
        let s = self.sum_to(&keep)?;
        if keepdim {
            return Ok(s);
        }
        let squeezed: Vec<usize> = self
            .shape()
            .iter()
            .enumerate()
            .filter(|(i, _)| !axes.contains(i))
            .map(|(_, &n)| n)
            .collect();
        s.reshape(&squeezed)
    }

    pub fn mean_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor<T>> {
        let count: usize = axes.iter().map(|&a| self.shape().get(a).copied().unwrap_or(1)).product();
        self.sum_axes(axes, keepdim)?
            .scale(T::one() / T::of(count.max(1) as f64))
    }
}

#[cfg(test)]
mod tests {
    use crate::{backward, Tensor};

    #[test]
    fn sum_axes_values() {
        let x = Tensor::<f64>::from_f64(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]).unwrap();
        assert_eq!(x.sum_axes(&[0], false).unwrap().to_vec(), vec![5.0, 7.0, 9.0]);
        assert_eq!(x.sum_axes(&[1], true).unwrap().shape(), &[2, 1]);
        assert_eq!(x.mean().unwrap().item().unwrap(), 3.5);
    }

    #[test]
    fn mean_gradient_is_uniform() {
        let x = Tensor::<f64>::from_f64(&[1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap().var();
        let g = backward(&x.mean().unwrap(), false).unwrap();
        assert_eq!(g.get(&x).unwrap().to_vec(), vec![0.25; 4]);
    }
}
