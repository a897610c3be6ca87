//! Dense tensors and a tape-based reverse-mode differentiation engine.
//!
//! The engine supports exactly the primitives the score-following
//! model needs: 2-D convolution, dense layers, layer normalization,
//! ELU/sigmoid/tanh, 2x2 max pooling, bilinear 2x upsampling,
//! per-channel affine modulation, channel concatenation and a handful
//! of elementwise and reduction helpers.

mod gradcheck;
mod graph;
pub mod kernels;
mod params;
mod real;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

pub use gradcheck::{
    grad_check, grad_check_params, grad_check_params_with, grad_check_with, relative_error,
    GradCheckReport, GradMismatch,
};
pub use graph::{Activation, Graph, GraphError, LeafGrads, LstmParams, NodeId, LAYER_NORM_EPS};
pub use params::{Gradients, ParamId, ParamStore};
pub use real::{gemm, Real};

/// Error raised when tensor shapes do not fit an operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeError {
    pub op: &'static str,
    pub detail: alloc::string::String,
}

impl ShapeError {
    pub fn new(op: &'static str, detail: impl Into<alloc::string::String>) -> Self {
        Self {
            op,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for ShapeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.op, self.detail)
    }
}

/// Row-major dense tensor.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("len", &self.data.len())
            .finish()
    }
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::ZERO)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        assert_valid_shape(shape);
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self, ShapeError> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(ShapeError::new(
                "tensor",
                alloc::format!("invalid shape {:?}", shape),
            ));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(ShapeError::new(
                "tensor",
                alloc::format!("shape {:?} needs {} values, got {}", shape, n, data.len()),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_f64(shape: &[usize], values: &[f64]) -> Result<Self, ShapeError> {
        Self::from_vec(shape, values.iter().map(|&v| T::from_f64(v)).collect())
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self, ShapeError> {
        if shape.is_empty()
            || shape.contains(&0)
            || shape.iter().product::<usize>() != self.data.len()
        {
            return Err(ShapeError::new(
                "reshape",
                alloc::format!("{:?} -> {:?}", self.shape, shape),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Converts between element types (used to run f32 models in f64).
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::ZERO, |m, v| m.max(v.abs()))
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn scale_in_place(&mut self, s: T) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    /// Dimensions of a `[C, H, W]` tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize), ShapeError> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(ShapeError::new(
                "chw",
                alloc::format!("expected [C,H,W], got {:?}", self.shape),
            )),
        }
    }
}

fn assert_valid_shape(shape: &[usize]) {
    assert!(
        !shape.is_empty() && !shape.contains(&0),
        "invalid tensor shape {:?}",
        shape
    );
}

/// Reflect-pads a `[C, H, W]` tensor at the bottom and right edge to the
/// given size (mirror without repeating the edge pixel).
pub fn reflect_pad<T: Real>(
    x: &Tensor<T>,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor<T>, ShapeError> {
    let (c, h, w) = x.chw()?;
    if out_h < h || out_w < w || (out_h > h && out_h - h >= h) || (out_w > w && out_w - w >= w) {
        return Err(ShapeError::new(
            "reflect_pad",
            alloc::format!("cannot pad {}x{} to {}x{}", h, w, out_h, out_w),
        ));
    }
    let reflect = |i: usize, n: usize| if i < n { i } else { 2 * (n - 1) - i };
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &x.data[ch * h * w..(ch + 1) * h * w];
        for y in 0..out_h {
            let row = &plane[reflect(y, h) * w..][..w];
            for xx in 0..out_w {
                out.push(row[reflect(xx, w)]);
            }
        }
    }
    Tensor::from_vec(&[c, out_h, out_w], out)
}


#[cfg(test)]
mod ops_tests;
