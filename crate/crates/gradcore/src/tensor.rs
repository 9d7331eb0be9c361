use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::graph::Node;
use crate::{Float, GradError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DType {
    Real,
    Complex,
}

impl DType {
    /// Stored scalars per logical element.
    pub fn width(self) -> usize {
        match self {
            DType::Real => 1,
            DType::Complex => 2,
        }
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

pub(crate) fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

pub(crate) struct Inner<T: Float> {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) dtype: DType,
    pub(crate) data: Arc<Vec<T>>,
    pub(crate) record: Option<Arc<Node<T>>>,
}

/// An n-dimensional real or complex array with an optional diff record.
///
/// Cloning is cheap and shares both the storage and the record. Tensors are
/// immutable; operations always produce new tensors.
pub struct Tensor<T: Float> {
    pub(crate) inner: Arc<Inner<T>>,
}

impl<T: Float> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<T: Float> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("shape", &self.inner.shape)
            .field("dtype", &self.inner.dtype)
            .field("tracked", &self.inner.record.is_some())
            .finish()
    }
}

pub(crate) fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Float> Tensor<T> {
    pub(crate) fn raw(
        data: Arc<Vec<T>>,
        shape: Vec<usize>,
        dtype: DType,
        record: Option<Arc<Node<T>>>,
    ) -> Self {
        debug_assert_eq!(data.len(), numel_of(&shape) * dtype.width());
        Tensor {
            inner: Arc::new(Inner {
                id: fresh_id(),
                shape,
                dtype,
                data,
                record,
            }),
        }
    }

    pub(crate) fn constant(data: Vec<T>, shape: Vec<usize>, dtype: DType) -> Self {
        Self::raw(Arc::new(data), shape, dtype, None)
    }

    /// Real tensor from row-major values.
    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        if data.len() != numel_of(shape) {
            return Err(GradError::DataLength {
                op: "from_vec",
                len: data.len(),
                shape: shape.to_vec(),
            });
        }
        Ok(Self::constant(data, shape.to_vec(), DType::Real))
    }

    /// Complex tensor from interleaved `(re, im)` values.
    pub fn from_interleaved(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        if data.len() != 2 * numel_of(shape) {
            return Err(GradError::DataLength {
                op: "from_interleaved",
                len: data.len(),
                shape: shape.to_vec(),
            });
        }
        Ok(Self::constant(data, shape.to_vec(), DType::Complex))
    }

    /// Complex tensor from separate real and imaginary planes.
    pub fn from_planar(re: &[T], im: &[T], shape: &[usize]) -> Result<Self> {
        let n = numel_of(shape);
        if re.len() != n || im.len() != n {
            return Err(GradError::DataLength {
                op: "from_planar",
                len: re.len().max(im.len()),
                shape: shape.to_vec(),
            });
        }
        let mut data = Vec::with_capacity(2 * n);
        for (&a, &b) in re.iter().zip(im) {
            data.push(a);
            data.push(b);
        }
        Ok(Self::constant(data, shape.to_vec(), DType::Complex))
    }

    pub fn from_f64(data: &[f64], shape: &[usize]) -> Result<Self> {
        Self::from_vec(data.iter().map(|&x| T::of(x)).collect(), shape)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::constant(vec![value; numel_of(shape)], shape.to_vec(), DType::Real)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn complex_zeros(shape: &[usize]) -> Self {
        Self::constant(
            vec![T::zero(); 2 * numel_of(shape)],
            shape.to_vec(),
            DType::Complex,
        )
    }

    /// Rank-0 real tensor.
    pub fn scalar(value: T) -> Self {
        Self::constant(vec![value], vec![], DType::Real)
    }

    pub fn zeros_like(&self) -> Self {
        Self::constant(
            vec![T::zero(); self.inner.data.len()],
            self.inner.shape.clone(),
            self.inner.dtype,
        )
    }

    /// A differentiable leaf sharing this tensor's values. Gradients are
    /// reported against the returned tensor's id.
    pub fn var(&self) -> Self {
        Self::raw(
            Arc::clone(&self.inner.data),
            self.inner.shape.clone(),
            self.inner.dtype,
            Some(Arc::new(Node::leaf())),
        )
    }

    /// Value-identical tensor without a diff record.
    pub fn detach(&self) -> Self {
        Self::raw(
            Arc::clone(&self.inner.data),
            self.inner.shape.clone(),
            self.inner.dtype,
            None,
        )
    }

    /// Alias of [`Tensor::detach`].
    pub fn stop_gradient(&self) -> Self {
        self.detach()
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        numel_of(&self.inner.shape)
    }

    pub fn dtype(&self) -> DType {
        self.inner.dtype
    }

    pub fn is_complex(&self) -> bool {
        self.inner.dtype == DType::Complex
    }

    /// True when the tensor carries a diff record (leaf variable or op output).
    pub fn is_tracked(&self) -> bool {
        self.inner.record.is_some()
    }

    pub fn is_leaf_var(&self) -> bool {
        self.inner
            .record
            .as_ref()
            .map(|n| n.is_leaf())
            .unwrap_or(false)
    }

    /// Raw storage. Complex tensors return interleaved pairs.
    pub fn data(&self) -> &[T] {
        &self.inner.data
    }

    pub(crate) fn data_arc(&self) -> &Arc<Vec<T>> {
        &self.inner.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.inner.data.as_ref().clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.inner.data.iter().map(|x| x.as_f64()).collect()
    }

    fn flat_index(&self, index: &[usize]) -> usize {
        let shape = self.shape();
        assert_eq!(index.len(), shape.len(), "index rank");
        let mut flat = 0;
        for (&i, &n) in index.iter().zip(shape) {
            assert!(i < n, "index {index:?} out of bounds for {shape:?}");
            flat = flat * n + i;
        }
        flat
    }

    /// Real element at a multi-index.
    pub fn at(&self, index: &[usize]) -> T {
        assert!(!self.is_complex(), "at() on complex tensor");
        self.inner.data[self.flat_index(index)]
    }

    /// Complex element `(re, im)` at a multi-index.
    pub fn at_complex(&self, index: &[usize]) -> (T, T) {
        assert!(self.is_complex(), "at_complex() on real tensor");
        let i = self.flat_index(index);
        (self.inner.data[2 * i], self.inner.data[2 * i + 1])
    }

    /// Value of a single-element real tensor.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 || self.is_complex() {
            return Err(GradError::invalid(
                "item",
                format!("expected one real element, got {:?}", self.shape()),
            ));
        }
        Ok(self.inner.data[0])
    }

    /// Real and imaginary planes of a complex tensor.
    pub fn to_planar(&self) -> (Vec<T>, Vec<T>) {
        assert!(self.is_complex(), "to_planar() on real tensor");
        let d = self.data();
        (
            d.iter().step_by(2).copied().collect(),
            d.iter().skip(1).step_by(2).copied().collect(),
        )
    }

    /// Converts precision. The result carries no diff record.
    pub fn cast<U: Float>(&self) -> Tensor<U> {
        Tensor::constant(
            self.inner.data.iter().map(|x| U::of(x.as_f64())).collect(),
            self.inner.shape.clone(),
            self.inner.dtype,
        )
    }

    pub(crate) fn expect_real(&self, op: &'static str) -> Result<()> {
        if self.is_complex() {
            return Err(GradError::DType {
                op,
                expected: DType::Real,
                got: DType::Complex,
            });
        }
        Ok(())
    }

    pub(crate) fn expect_complex(&self, op: &'static str) -> Result<()> {
        if !self.is_complex() {
            return Err(GradError::DType {
                op,
                expected: DType::Complex,
                got: DType::Real,
            });
        }
        Ok(())
    }

    pub(crate) fn expect_rank(&self, op: &'static str, rank: usize) -> Result<()> {
        if self.rank() != rank {
            return Err(GradError::Rank {
                op,
                expected: rank,
                got: self.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.inner.data.iter().all(|x| x.is_finite())
    }
}
