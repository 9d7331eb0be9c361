//! Conversions between real and complex tensors.

use crate::ops::elementwise::slot;
use crate::tensor::DType;
use crate::{Float, GradError, Result, Tensor};

impl<T: Float> Tensor<T> {
    /// Builds `re + i im` from two real tensors of the same shape.
    pub fn complex(re: &Tensor<T>, im: &Tensor<T>) -> Result<Tensor<T>> {
        re.expect_real("complex")?;
        im.expect_real("complex")?;
        if re.shape() != im.shape() {
            let axis = re
                .shape()
                .iter()
                .zip(im.shape())
                .position(|(a, b)| a != b)
                .unwrap_or(0);
            return Err(GradError::ShapeMismatch {
                op: "complex",
                axis,
                lhs: re.shape().to_vec(),
                rhs: im.shape().to_vec(),
            });
        }
        let mut data = Vec::with_capacity(2 * re.numel());
        for (&a, &b) in re.data().iter().zip(im.data()) {
            data.push(a);
            data.push(b);
        }
        Ok(Tensor::from_op(
            data,
            re.shape().to_vec(),
            DType::Complex,
            "complex",
            vec![re.clone(), im.clone()],
            Box::new(|_, g, needs| Ok(vec![slot(needs[0], || g.re())?, slot(needs[1], || g.im())?])),
        ))
    }

    /// Real part.
    pub fn re(&self) -> Result<Tensor<T>> {
        self.expect_complex("re")?;
        let data = self.data().iter().step_by(2).copied().collect();
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            DType::Real,
            "re",
            vec![self.clone()],
            Box::new(|_, g, _| Ok(vec![Some(Tensor::complex(g, &g.zeros_like())?)])),
        ))
    }

    /// Imaginary part.
    pub fn im(&self) -> Result<Tensor<T>> {
        self.expect_complex("im")?;
        let data = self.data().iter().skip(1).step_by(2).copied().collect();
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            DType::Real,
            "im",
            vec![self.clone()],
            Box::new(|_, g, _| Ok(vec![Some(Tensor::complex(&g.zeros_like(), g)?)])),
        ))
    }

    pub fn conj(&self) -> Result<Tensor<T>> {
        self.expect_complex("conj")?;
        let data = self
            .data()
            .chunks_exact(2)
            .flat_map(|c| [c[0], -c[1]])
            .collect();
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            DType::Complex,
            "conj",
            vec![self.clone()],
            Box::new(|_, g, _| Ok(vec![Some(g.conj()?)])),
        ))
    }

    /// Squared magnitude `re^2 + im^2` as a real tensor.
    pub fn abs2(&self) -> Result<Tensor<T>> {
        self.expect_complex("abs2")?;
        let data = self
            .data()
            .chunks_exact(2)
            .map(|c| c[0] * c[0] + c[1] * c[1])
            .collect();
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            DType::Real,
            "abs2",
            vec![self.clone()],
            Box::new(|inp, g, _| Ok(vec![Some(inp[0].mul(g)?.scale(T::of(2.0))?)])),
        ))
    }
}
