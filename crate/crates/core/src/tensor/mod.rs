//! Dense row-major `f32` tensors with a reverse-mode gradient tape.
//!
//! Values live in [`Tensor`]. Differentiable computation is expressed by
//! registering tensors on a [`Tape`], which hands back [`Var`] handles and
//! records every operation in execution order. [`Tape::backward`] replays the
//! records in reverse to produce [`Gradients`] for every leaf that was
//! registered with gradients enabled.

mod adam;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
    #[error("{op}: invalid parameter: {msg}")]
    Param { op: &'static str, msg: String },
    #[error("backward: {0}")]
    Contract(String),
    #[error("{op}: non-finite value in output")]
    NonFinite { op: &'static str },
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// A shaped block of `f32` values stored row-major.
///
/// Every dimension is at least one; a rank-0 tensor holds a single scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Self> {
        let shape = shape.into();
        if shape.contains(&0) {
            return Err(TensorError::Invalid {
                op: "tensor",
                msg: format!("zero-sized dimension in shape {shape:?}"),
            });
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::Invalid {
                op: "tensor",
                msg: format!("shape {shape:?} holds {numel} values but {} were supplied", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 0.0)
    }

    /// # Panics
    /// If any dimension is zero.
    pub fn full(shape: impl Into<Vec<usize>>, value: f32) -> Self {
        let shape = shape.into();
        assert!(shape.iter().all(|&d| d > 0), "zero-sized dimension");
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f32) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_vec(data: Vec<f32>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// The only element of a one-element tensor.
    pub fn item(&self) -> Option<f32> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Length of the last axis (1 for scalars).
    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub(crate) fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(TensorError::Invalid {
                op,
                msg: format!("expected a matrix, got shape {:?}", self.shape),
            }),
        }
    }

    /// Eager matrix product without tape participation.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = rhs.dims2("matmul")?;
        if k != k2 {
            return Err(TensorError::Shape {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        Tensor::new(vec![m, n], gemm(&self.data, &rhs.data, m, k, n, false, false))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.dims2("transpose")?;
        Tensor::new(vec![c, r], transpose(&self.data, r, c))
    }
}

/// `C[m×n] = op(A)·op(B)` with f64 accumulation in fixed order.
///
/// With `ta`, `a` is stored as `[k×m]`; with `tb`, `b` is stored as `[n×k]`.
pub(crate) fn gemm(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, ta: bool, tb: bool) -> Vec<f32> {
    let mut out = vec![0f32; m * n];
    let mut acc = vec![0f64; n];
    for i in 0..m {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for p in 0..k {
            let av = if ta { a[p * m + i] } else { a[i * k + p] } as f64;
            if av == 0.0 {
                continue;
            }
            if tb {
                for (j, slot) in acc.iter_mut().enumerate() {
                    *slot += av * b[j * k + p] as f64;
                }
            } else {
                let row = &b[p * n..(p + 1) * n];
                for (slot, &bv) in acc.iter_mut().zip(row) {
                    *slot += av * bv as f64;
                }
            }
        }
        for (o, &v) in out[i * n..(i + 1) * n].iter_mut().zip(&acc) {
            *o = v as f32;
        }
    }
    out
}

pub(crate) fn transpose(data: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0f32; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}
