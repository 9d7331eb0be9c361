//! Group normalization, composed from recorded primitives so that it is
//! twice differentiable.

use crate::{Float, GradError, Result, Tensor};

impl<T: Float> Tensor<T> {
    /// Normalizes a `[c, h, w]` input over `groups` channel groups to zero
    /// mean and unit variance (biased estimate, `eps` added to the variance),
    /// then applies a per-channel `gain` and `bias`.
    pub fn group_norm(
        &self,
        groups: usize,
        gain: &Tensor<T>,
        bias: &Tensor<T>,
        eps: f64,
    ) -> Result<Tensor<T>> {
        self.expect_real("group_norm")?;
        self.expect_rank("group_norm", 3)?;
        let c = self.shape()[0];
        if groups == 0 || c % groups != 0 {
            return Err(GradError::NotDivisible {
                op: "group_norm",
                axis: 0,
                extent: c,
                divisor: groups,
            });
        }
        for p in [gain, bias] {
            if p.shape() != [c] {
                return Err(GradError::ShapeMismatch {
                    op: "group_norm",
                    axis: 0,
                    lhs: self.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
        }
        let per_group = self.numel() / groups;
        let x = self.reshape(&[groups, per_group])?;
        let centered = x.sub(&x.mean_axes(&[1], true)?)?;
        let var = centered.square()?.mean_axes(&[1], true)?;
        let normed = centered.div(&var.add_scalar(T::of(eps))?.sqrt()?)?;
        normed
            .reshape(self.shape())?
            .mul(&gain.reshape(&[c, 1, 1])?)?
            .add(&bias.reshape(&[c, 1, 1])?)
    }
}
