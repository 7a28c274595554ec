//! Dense row-major `f64` tensors with a small, closed set of kernels, plus
//! the reverse-mode [`Tape`] built on top of them.
//!
//! Broadcasting is deliberately narrow. Binary elementwise ops accept either
//! two tensors of identical shape, or a matrix `[m, n]` on the left and a
//! vector `[n]` on the right, in which case the vector is applied to every
//! row. Every other combination is a [`TensorError::Shape`].

mod ops;
mod tape;

pub use ops::{Eager, Ops};
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: axis {axis} out of range for rank {rank}")]
    Axis {
        op: &'static str,
        axis: usize,
        rank: usize,
    },
    #[error("{op}: index {index} out of range (bound {bound})")]
    Index {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("invalid tensor: {0}")]
    Invalid(String),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward was already run on this tape")]
    TapeConsumed,
}

type Result<T> = std::result::Result<T, TensorError>;

// Largest f64 strictly below one. Saturated sigmoid/tanh outputs are clamped
// here so they stay inside their open ranges.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    Row,
}

fn broadcast_kind(op: &'static str, a: &[usize], b: &[usize]) -> Result<Broadcast> {
    if a == b {
        Ok(Broadcast::Same)
    } else if a.len() == 2 && b.len() == 1 && a[1] == b[0] {
        Ok(Broadcast::Row)
    } else {
        Err(TensorError::Shape {
            op,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        })
    }
}

/// Splits `shape` around `axis` into (outer, axis length, inner) strides.
fn axis_split(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(TensorError::Axis {
            op,
            axis,
            rank: shape.len(),
        });
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(TensorError::Invalid(format!(
                "zero-sized dimension in shape {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(TensorError::Invalid(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![v; n],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl rand::Rng) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(|_| rng.gen_range(lo..hi)).collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access for optimizers; the shape cannot change.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.len() <= 1
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_broadcast(
        &self,
        other: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let kind = broadcast_kind(op, &self.shape, &other.shape)?;
        let data = match kind {
            Broadcast::Same => self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            Broadcast::Row => {
                let n = other.data.len();
                self.data
                    .iter()
                    .enumerate()
                    .map(|(i, &a)| f(a, other.data[i % n]))
                    .collect()
            }
        };
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_broadcast(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_broadcast(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Self> {
        self.zip_broadcast(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    pub fn shift(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    /// Matrix product. A rank-1 left operand `[k]` is treated as a `[1, k]`
    /// row and the result is returned as rank-1 `[n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Self> {
        let err = || TensorError::Shape {
            op: "matmul",
            lhs: self.shape.clone(),
            rhs: other.shape.clone(),
        };
        let (m, k) = match self.shape.as_slice() {
            [k] => (1, *k),
            [m, k] => (*m, *k),
            _ => return Err(err()),
        };
        let n = match other.shape.as_slice() {
            [k2, n] if *k2 == k => *n,
            _ => return Err(err()),
        };
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        let shape = if self.rank() == 1 { vec![n] } else { vec![m, n] };
        Ok(Self { shape, data: out })
    }

    pub fn transpose(&self) -> Result<Self> {
        let [m, n] = self.shape[..] else {
            return Err(TensorError::Axis {
                op: "transpose",
                axis: 1,
                rank: self.rank(),
            });
        };
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Self {
            shape: vec![n, m],
            data,
        })
    }

    pub fn sigmoid(&self) -> Self {
        self.map(|x| {
            let s = if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            };
            s.clamp(f64::MIN_POSITIVE, BELOW_ONE)
        })
    }

    pub fn tanh(&self) -> Self {
        self.map(|x| x.tanh().clamp(-BELOW_ONE, BELOW_ONE))
    }

    pub fn relu(&self) -> Self {
        self.map(|x| x.max(0.0))
    }

    pub fn softmax_axis(&self, axis: usize) -> Result<Self> {
        let (outer, len, inner) = axis_split("softmax", &self.shape, axis)?;
        let mut data = self.data.clone();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let max = (0..len)
                    .map(|j| self.data[idx(j)])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..len {
                    let e = (self.data[idx(j)] - max).exp();
                    data[idx(j)] = e;
                    total += e;
                }
                for j in 0..len {
                    data[idx(j)] /= total;
                }
            }
        }
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn log_softmax_axis(&self, axis: usize) -> Result<Self> {
        let (outer, len, inner) = axis_split("log_softmax", &self.shape, axis)?;
        let mut data = self.data.clone();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let max = (0..len)
                    .map(|j| self.data[idx(j)])
                    .fold(f64::NEG_INFINITY, f64::max);
                let total: f64 = (0..len).map(|j| (self.data[idx(j)] - max).exp()).sum();
                let log_norm = max + total.ln();
                for j in 0..len {
                    data[idx(j)] = self.data[idx(j)] - log_norm;
                }
            }
        }
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn concat(&self, other: &Tensor, axis: usize) -> Result<Self> {
        let shape_err = || TensorError::Shape {
            op: "concat",
            lhs: self.shape.clone(),
            rhs: other.shape.clone(),
        };
        if self.rank() != other.rank() {
            return Err(shape_err());
        }
        let (outer, la, inner) = axis_split("concat", &self.shape, axis)?;
        let lb = other.shape[axis];
        for d in 0..self.rank() {
            if d != axis && self.shape[d] != other.shape[d] {
                return Err(shape_err());
            }
        }
        let mut data = Vec::with_capacity(self.len() + other.len());
        for o in 0..outer {
            data.extend_from_slice(&self.data[o * la * inner..(o + 1) * la * inner]);
            data.extend_from_slice(&other.data[o * lb * inner..(o + 1) * lb * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = la + lb;
        Ok(Self { shape, data })
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum_axis(&self, axis: usize) -> Result<Self> {
        let (outer, len, inner) = axis_split("sum_axis", &self.shape, axis)?;
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                for i in 0..inner {
                    data[o * inner + i] += self.data[(o * len + j) * inner + i];
                }
            }
        }
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Ok(Self { shape, data })
    }

    pub fn sum_all(&self) -> Self {
        Self::scalar(self.data.iter().sum())
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.len() {
            return Err(TensorError::Shape {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Gathers rows of a `[V, E]` table into `[ids.len(), E]`.
    pub fn gather_rows(&self, ids: &[usize]) -> Result<Self> {
        let [rows, cols] = self.shape[..] else {
            return Err(TensorError::Shape {
                op: "gather_rows",
                lhs: self.shape.clone(),
                rhs: vec![ids.len()],
            });
        };
        if ids.is_empty() {
            return Err(TensorError::Invalid("gather_rows: no ids".into()));
        }
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(TensorError::Index {
                    op: "gather_rows",
                    index: id,
                    bound: rows,
                });
            }
            data.extend_from_slice(&self.data[id * cols..(id + 1) * cols]);
        }
        Ok(Self {
            shape: vec![ids.len(), cols],
            data,
        })
    }

    /// Picks flat elements by index into a rank-1 tensor.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(TensorError::Invalid("select: no indices".into()));
        }
        let mut data = Vec::with_capacity(indices.len());
        for &i in indices {
            data.push(*self.data.get(i).ok_or(TensorError::Index {
                op: "select",
                index: i,
                bound: self.len(),
            })?);
        }
        Ok(Self {
            shape: vec![indices.len()],
            data,
        })
    }

    /// Valid (unpadded) 2-D convolution.
    ///
    /// `self` is an `[H, W, C]` image, `kernels` is `[K, kh, kw, C]`, `bias`
    /// is `[K]`. Output is `[H', W', K]` with `H' = (H - kh) / stride + 1`.
    pub fn conv2d(&self, kernels: &Tensor, bias: &Tensor, stride: usize) -> Result<Self> {
        let geo = ConvGeometry::new(self, kernels, bias, stride)?;
        let mut out = vec![0.0; geo.out_h * geo.out_w * geo.k];
        for oy in 0..geo.out_h {
            for ox in 0..geo.out_w {
                for f in 0..geo.k {
                    let mut acc = bias.data[f];
                    for dy in 0..geo.kh {
                        for dx in 0..geo.kw {
                            let in_base = geo.input_index(oy, ox, dy, dx);
                            let k_base = geo.kernel_index(f, dy, dx);
                            for c in 0..geo.c {
                                acc += self.data[in_base + c] * kernels.data[k_base + c];
                            }
                        }
                    }
                    out[(oy * geo.out_w + ox) * geo.k + f] = acc;
                }
            }
        }
        Ok(Self {
            shape: vec![geo.out_h, geo.out_w, geo.k],
            data: out,
        })
    }

    /// Euclidean norm of all elements.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub w: usize,
    pub c: usize,
    pub k: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub(crate) fn new(input: &Tensor, kernels: &Tensor, bias: &Tensor, stride: usize) -> Result<Self> {
        let shape_err = || TensorError::Shape {
            op: "conv2d",
            lhs: input.shape.clone(),
            rhs: kernels.shape.clone(),
        };
        let [h, w, c] = input.shape[..] else {
            return Err(shape_err());
        };
        let [k, kh, kw, kc] = kernels.shape[..] else {
            return Err(shape_err());
        };
        if kc != c || bias.shape != [k] {
            return Err(shape_err());
        }
        if stride == 0 {
            return Err(TensorError::Invalid("conv2d: stride must be positive".into()));
        }
        if kh > h || kw > w {
            return Err(TensorError::Invalid(format!(
                "conv2d: {kh}x{kw} kernel does not fit a {h}x{w} input"
            )));
        }
        Ok(Self {
            w,
            c,
            k,
            kh,
            kw,
            stride,
            out_h: (h - kh) / stride + 1,
            out_w: (w - kw) / stride + 1,
        })
    }

    pub(crate) fn input_index(&self, oy: usize, ox: usize, dy: usize, dx: usize) -> usize {
        ((oy * self.stride + dy) * self.w + ox * self.stride + dx) * self.c
    }

    pub(crate) fn kernel_index(&self, f: usize, dy: usize, dx: usize) -> usize {
        ((f * self.kh + dy) * self.kw + dx) * self.c
    }
}
