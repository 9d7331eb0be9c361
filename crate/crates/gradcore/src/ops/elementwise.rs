//! Pointwise arithmetic and activations with trailing-dimension broadcasting.

use crate::graph::is_checked;
use crate::shape::{aligned_strides, broadcast_shapes, for_each_index2};
use crate::tensor::DType;
use crate::{Float, GradError, Result, Tensor};

pub(crate) fn slot<T: Float>(
    need: bool,
    f: impl FnOnce() -> Result<Tensor<T>>,
) -> Result<Option<Tensor<T>>> {
    if need {
        f().map(Some)
    } else {
        Ok(None)
    }
}

/// Pointwise op selector, used by the gradient check suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Div,
    Relu,
    LeakyRelu,
    Sigmoid,
    Log,
    Sqrt,
    Abs,
    Square,
}

impl Elementwise {
    pub const ALL: [Elementwise; 11] = [
        Elementwise::Add,
        Elementwise::Sub,
        Elementwise::Mul,
        Elementwise::Div,
        Elementwise::Relu,
        Elementwise::LeakyRelu,
        Elementwise::Sigmoid,
        Elementwise::Log,
        Elementwise::Sqrt,
        Elementwise::Abs,
        Elementwise::Square,
    ];

    pub fn arity(self) -> usize {
        match self {
            Elementwise::Add | Elementwise::Sub | Elementwise::Mul | Elementwise::Div => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Elementwise::Add => "add",
            Elementwise::Sub => "sub",
            Elementwise::Mul => "mul",
            Elementwise::Div => "div",
            Elementwise::Relu => "relu",
            Elementwise::LeakyRelu => "leaky_relu",
            Elementwise::Sigmoid => "sigmoid",
            Elementwise::Log => "log",
            Elementwise::Sqrt => "sqrt",
            Elementwise::Abs => "abs",
            Elementwise::Square => "square",
        }
    }
}

/// Default negative slope for [`Elementwise::LeakyRelu`].
pub const LEAKY_SLOPE: f64 = 0.2;

/// Applies a pointwise op to one or two inputs.
pub fn elementwise<T: Float>(kind: Elementwise, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    if inputs.len() != kind.arity() {
        return Err(GradError::invalid(
            "elementwise",
            format!("{} takes {} inputs, got {}", kind.name(), kind.arity(), inputs.len()),
        ));
    }
    let x = inputs[0];
    match kind {
        Elementwise::Add => x.add(inputs[1]),
        Elementwise::Sub => x.sub(inputs[1]),
        Elementwise::Mul => x.mul(inputs[1]),
        Elementwise::Div => x.div(inputs[1]),
        Elementwise::Relu => x.relu(),
        Elementwise::LeakyRelu => x.leaky_relu(LEAKY_SLOPE),
        Elementwise::Sigmoid => x.sigmoid(),
        Elementwise::Log => x.log(),
        Elementwise::Sqrt => x.sqrt(),
        Elementwise::Abs => x.abs(),
        Elementwise::Square => x.square(),
    }
}

fn same_dtype<T: Float>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.dtype() != b.dtype() {
        return Err(GradError::DType {
            op,
            expected: a.dtype(),
            got: b.dtype(),
        });
    }
    Ok(())
}

/// Applies `f` over the broadcast storage of two same-dtype tensors.
fn zip_storage<T: Float>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<(Vec<usize>, Vec<T>)> {
    let (da, db) = (a.data(), b.data());
    if a.shape() == b.shape() {
        let data = da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect();
        return Ok((a.shape().to_vec(), data));
    }
    let shape = broadcast_shapes(op, a.shape(), b.shape())?;
    if b.numel() == 1 && a.dtype() == DType::Real {
        let y = db[0];
        return Ok((shape, da.iter().map(|&x| f(x, y)).collect()));
    }
    if a.numel() == 1 && a.dtype() == DType::Real {
        let x = da[0];
        return Ok((shape, db.iter().map(|&y| f(x, y)).collect()));
    }
    let mut sa_shape = a.shape().to_vec();
    let mut sb_shape = b.shape().to_vec();
    let mut out_storage = shape.clone();
    if a.is_complex() {
        sa_shape.push(2);
        sb_shape.push(2);
        out_storage.push(2);
    }
    let sa = aligned_strides(&sa_shape, &out_storage);
    let sb = aligned_strides(&sb_shape, &out_storage);
    let mut data = vec![T::zero(); out_storage.iter().product()];
    for_each_index2(&out_storage, &sa, &sb, |o, i, j| data[o] = f(da[i], db[j]));
    Ok((shape, data))
}

fn map_real<T: Float>(x: &Tensor<T>, f: impl Fn(T) -> T) -> Vec<T> {
    x.data().iter().map(|&v| f(v)).collect()
}

fn mask<T: Float>(x: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    Tensor::constant(map_real(x, f), x.shape().to_vec(), DType::Real)
}

impl<T: Float> Tensor<T> {
    pub fn add(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        same_dtype("add", self, rhs)?;
        let (shape, data) = zip_storage("add", self, rhs, |a, b| a + b)?;
        Ok(Tensor::from_op(
            data,
            shape,
            self.dtype(),
            "add",
            vec![self.clone(), rhs.clone()],
            Box::new(|inp, g, needs| {
                Ok(vec![
                    slot(needs[0], || g.sum_to(inp[0].shape()))?,
                    slot(needs[1], || g.sum_to(inp[1].shape()))?,
                ])
            }),
        ))
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        same_dtype("sub", self, rhs)?;
        let (shape, data) = zip_storage("sub", self, rhs, |a, b| a - b)?;
        Ok(Tensor::from_op(
            data,
            shape,
            self.dtype(),
            "sub",
            vec![self.clone(), rhs.clone()],
            Box::new(|inp, g, needs| {
                Ok(vec![
                    slot(needs[0], || g.sum_to(inp[0].shape()))?,
                    slot(needs[1], || g.sum_to(inp[1].shape())?.neg())?,
                ])
            }),
        ))
    }

    /// Pointwise product. Complex operands multiply as complex numbers; a
    /// real operand scales a complex one.
    pub fn mul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        match (self.dtype(), rhs.dtype()) {
            (DType::Real, DType::Real) => {
                let (shape, data) = zip_storage("mul", self, rhs, |a, b| a * b)?;
                Ok(Tensor::from_op(
                    data,
                    shape,
                    DType::Real,
                    "mul",
                    vec![self.clone(), rhs.clone()],
                    Box::new(|inp, g, needs| {
                        Ok(vec![
                            slot(needs[0], || g.mul(&inp[1])?.sum_to(inp[0].shape()))?,
                            slot(needs[1], || g.mul(&inp[0])?.sum_to(inp[1].shape()))?,
                        ])
                    }),
                ))
            }
            (DType::Complex, DType::Complex) => self.cmul(rhs),
            (DType::Complex, DType::Real) => self.mul_complex_real(rhs),
            (DType::Real, DType::Complex) => rhs.mul_complex_real(self),
        }
    }

    fn cmul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = broadcast_shapes("mul", self.shape(), rhs.shape())?;
        let sa = aligned_strides(self.shape(), &shape);
        let sb = aligned_strides(rhs.shape(), &shape);
        let (da, db) = (self.data(), rhs.data());
        let mut data = vec![T::zero(); 2 * shape.iter().product::<usize>()];
        for_each_index2(&shape, &sa, &sb, |o, i, j| {
            let (ar, ai) = (da[2 * i], da[2 * i + 1]);
            let (br, bi) = (db[2 * j], db[2 * j + 1]);
            data[2 * o] = ar * br - ai * bi;
            data[2 * o + 1] = ar * bi + ai * br;
        });
        Ok(Tensor::from_op(
            data,
            shape,
            DType::Complex,
            "cmul",
            vec![self.clone(), rhs.clone()],
            Box::new(|inp, g, needs| {
                Ok(vec![
                    slot(needs[0], || g.mul(&inp[1].conj()?)?.sum_to(inp[0].shape()))?,
                    slot(needs[1], || g.mul(&inp[0].conj()?)?.sum_to(inp[1].shape()))?,
                ])
            }),
        ))
    }

    /// `self` complex, `rhs` real.
    fn mul_complex_real(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = broadcast_shapes("mul", self.shape(), rhs.shape())?;
        let sa = aligned_strides(self.shape(), &shape);
        let sb = aligned_strides(rhs.shape(), &shape);
        let (da, db) = (self.data(), rhs.data());
        let mut data = vec![T::zero(); 2 * shape.iter().product::<usize>()];
        for_each_index2(&shape, &sa, &sb, |o, i, j| {
            data[2 * o] = da[2 * i] * db[j];
            data[2 * o + 1] = da[2 * i + 1] * db[j];
        });
        Ok(Tensor::from_op(
            data,
            shape,
            DType::Complex,
            "mul_cr",
            vec![self.clone(), rhs.clone()],
            Box::new(|inp, g, needs| {
                Ok(vec![
                    slot(needs[0], || g.mul(&inp[1])?.sum_to(inp[0].shape()))?,
                    slot(needs[1], || g.mul(&inp[0].conj()?)?.re()?.sum_to(inp[1].shape()))?,
                ])
            }),
        ))
    }

    pub fn div(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.expect_real("div")?;
        rhs.expect_real("div")?;
        if is_checked() && rhs.data().iter().any(|&v| v == T::zero()) {
            return Err(GradError::Domain {
                op: "div",
                detail: "division by exact zero".into(),
            });
        }
        let (shape, data) = zip_storage("div", self, rhs, |a, b| a / b)?;
        Ok(Tensor::from_op(
            data,
            shape,
            DType::Real,
            "div",
            vec![self.clone(), rhs.clone()],
            Box::new(|inp, g, needs| {
                let (a, b) = (&inp[0], &inp[1]);
                Ok(vec![
                    slot(needs[0], || g.div(b)?.sum_to(a.shape()))?,
                    slot(needs[1], || {
                        g.mul(a)?.div(&b.square()?)?.neg()?.sum_to(b.shape())
                    })?,
                ])
            }),
        ))
    }

    pub fn neg(&self) -> Result<Tensor<T>> {
        self.scale(-T::one())
    }

    /// Multiplies every element (real or complex) by a real constant.
    pub fn scale(&self, c: T) -> Result<Tensor<T>> {
        let data = map_real(self, |v| v * c);
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            self.dtype(),
            "scale",
            vec![self.clone()],
            Box::new(move |_, g, _| Ok(vec![Some(g.scale(c)?)])),
        ))
    }

    pub fn add_scalar(&self, c: T) -> Result<Tensor<T>> {
        self.expect_real("add_scalar")?;
        let data = map_real(self, |v| v + c);
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            DType::Real,
            "add_scalar",
            vec![self.clone()],
            Box::new(|_, g, _| Ok(vec![Some(g.clone())])),
        ))
    }

    pub fn relu(&self) -> Result<Tensor<T>> {
        self.expect_real("relu")?;
        let data = map_real(self, |v| if v > T::zero() { v } else { T::zero() });
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            DType::Real,
            "relu",
            vec![self.clone()],
            Box::new(|inp, g, _| {
                let m = mask(&inp[0], |v| if v > T::zero() { T::one() } else { T::zero() });
                Ok(vec![Some(g.mul(&m)?)])
            }),
        ))
    }

    pub fn leaky_relu(&self, slope: f64) -> Result<Tensor<T>> {
        self.expect_real("leaky_relu")?;
        let s = T::of(slope);
        let data = map_real(self, |v| if v > T::zero() { v } else { v * s });
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            DType::Real,
            "leaky_relu",
            vec![self.clone()],
            Box::new(move |inp, g, _| {
                let m = mask(&inp[0], |v| if v > T::zero() { T::one() } else { s });
                Ok(vec![Some(g.mul(&m)?)])
            }),
        ))
    }

    /// Logistic function, computed without overflow for large `|x|`; the
    /// output is always strictly inside `(0, 1)`.
    pub fn sigmoid(&self) -> Result<Tensor<T>> {
        self.expect_real("sigmoid")?;
        let data = map_real(self, sigmoid_scalar);
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            DType::Real,
            "sigmoid",
            vec![self.clone()],
            Box::new(|inp, g, _| {
                let s = inp[0].sigmoid()?;
                let ds = s.mul(&s.neg()?.add_scalar(T::one())?)?;
                Ok(vec![Some(g.mul(&ds)?)])
            }),
        ))
    }

    /// `log(1 + exp(x))`, stable for any finite `x`.
    pub fn softplus(&self) -> Result<Tensor<T>> {
        self.expect_real("softplus")?;
        let data = map_real(self, |v| {
            let zero = T::zero();
            let m = if v > zero { v } else { zero };
            m + (-v.abs()).exp().ln_1p()
        });
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            DType::Real,
            "softplus",
            vec![self.clone()],
            Box::new(|inp, g, _| Ok(vec![Some(g.mul(&inp[0].sigmoid()?)?)])),
        ))
    }

    /// `log(sigmoid(x)) = -softplus(-x)`.
    pub fn log_sigmoid(&self) -> Result<Tensor<T>> {
        self.neg()?.softplus()?.neg()
    }

    pub fn exp(&self) -> Result<Tensor<T>> {
        self.expect_real("exp")?;
        let data = map_real(self, |v| v.exp());
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            DType::Real,
            "exp",
            vec![self.clone()],
            Box::new(|inp, g, _| Ok(vec![Some(g.mul(&inp[0].exp()?)?)])),
        ))
    }

    pub fn log(&self) -> Result<Tensor<T>> {
        self.expect_real("log")?;
        if is_checked() {
            if let Some(v) = self.data().iter().find(|&&v| !(v > T::zero())) {
                return Err(GradError::Domain {
                    op: "log",
                    detail: format!("non-positive input {v}"),
                });
            }
        }
        let data = map_real(self, |v| v.ln());
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            DType::Real,
            "log",
            vec![self.clone()],
            Box::new(|inp, g, _| Ok(vec![Some(g.div(&inp[0])?)])),
        ))
    }

    pub fn sqrt(&self) -> Result<Tensor<T>> {
        self.expect_real("sqrt")?;
        if is_checked() {
            if let Some(v) = self.data().iter().find(|&&v| !(v >= T::zero())) {
                return Err(GradError::Domain {
                    op: "sqrt",
                    detail: format!("negative input {v}"),
                });
            }
        }
        let data = map_real(self, |v| v.sqrt());
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            DType::Real,
            "sqrt",
            vec![self.clone()],
            Box::new(|inp, g, _| Ok(vec![Some(g.div(&inp[0].sqrt()?)?.scale(T::of(0.5))?)])),
        ))
    }

    /// Square root whose derivative is evaluated at `max(x, floor)`, so the
    /// gradient stays finite at zero. The forward value is the exact root.
    pub fn sqrt_floored(&self, floor: T) -> Result<Tensor<T>> {
        self.expect_real("sqrt_floored")?;
        if is_checked() {
            if let Some(v) = self.data().iter().find(|&&v| !(v >= T::zero())) {
                return Err(GradError::Domain {
                    op: "sqrt_floored",
                    detail: format!("negative input {v}"),
                });
            }
        }
        let data = map_real(self, |v| v.sqrt());
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            DType::Real,
            "sqrt_floored",
            vec![self.clone()],
            Box::new(move |inp, g, _| {
                let root = inp[0].clamp_min(floor)?.sqrt()?;
                Ok(vec![Some(g.div(&root)?.scale(T::of(0.5))?)])
            }),
        ))
    }

    pub fn clamp_min(&self, lo: T) -> Result<Tensor<T>> {
        self.expect_real("clamp_min")?;
        let data = map_real(self, |v| if v > lo { v } else { lo });
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            DType::Real,
            "clamp_min",
            vec![self.clone()],
            Box::new(move |inp, g, _| {
                let m = mask(&inp[0], |v| if v > lo { T::one() } else { T::zero() });
                Ok(vec![Some(g.mul(&m)?)])
            }),
        ))
    }

    pub fn abs(&self) -> Result<Tensor<T>> {
        self.expect_real("abs")?;
        let data = map_real(self, |v| v.abs());
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            DType::Real,
            "abs",
            vec![self.clone()],
            Box::new(|inp, g, _| {
                let sign = mask(&inp[0], |v| {
                    if v > T::zero() {
                        T::one()
                    } else if v < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    }
                });
                Ok(vec![Some(g.mul(&sign)?)])
            }),
        ))
    }

    pub fn square(&self) -> Result<Tensor<T>> {
        self.expect_real("square")?;
        let data = map_real(self, |v| v * v);
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            DType::Real,
            "square",
            vec![self.clone()],
            Box::new(|inp, g, _| Ok(vec![Some(g.mul(&inp[0])?.scale(T::of(2.0))?)])),
        ))
    }
}

/// Logistic function clamped to the open interval `(0, 1)`: saturated
/// values are pinned to the nearest representable interior point.
pub(crate) fn sigmoid_scalar<T: Float>(v: T) -> T {
    let s = if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    };
    let hi = T::one() - T::epsilon() / T::of(2.0);
    s.max(T::min_positive_value()).min(hi)
}
