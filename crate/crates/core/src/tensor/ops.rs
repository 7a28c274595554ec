use super::{Result, Tape, Tensor, Var};

/// The op set shared by the recording [`Tape`] and the eager evaluator.
///
/// Model code written against `Ops` runs unchanged for training (on a tape,
/// differentiable) and for decoding (eagerly, no bookkeeping). Both routes
/// call the same [`Tensor`] kernels, so their forward values are
/// bit-identical.
pub trait Ops {
    type V: Clone;

    fn value<'a>(&'a self, v: &'a Self::V) -> &'a Tensor;
    fn input(&mut self, t: Tensor) -> Self::V;

    fn add(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn sub(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn scale(&mut self, a: &Self::V, c: f64) -> Self::V;
    fn shift(&mut self, a: &Self::V, c: f64) -> Self::V;
    fn matmul(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn sigmoid(&mut self, a: &Self::V) -> Self::V;
    fn tanh(&mut self, a: &Self::V) -> Self::V;
    fn relu(&mut self, a: &Self::V) -> Self::V;
    fn softmax_axis(&mut self, a: &Self::V, axis: usize) -> Result<Self::V>;
    fn log_softmax_axis(&mut self, a: &Self::V, axis: usize) -> Result<Self::V>;
    fn concat(&mut self, a: &Self::V, b: &Self::V, axis: usize) -> Result<Self::V>;
    fn sum_axis(&mut self, a: &Self::V, axis: usize) -> Result<Self::V>;
    fn reshape(&mut self, a: &Self::V, shape: &[usize]) -> Result<Self::V>;
    fn embedding_lookup(&mut self, table: &Self::V, id: usize) -> Result<Self::V>;
    fn select(&mut self, a: &Self::V, indices: &[usize]) -> Result<Self::V>;
    fn conv2d(&mut self, x: &Self::V, k: &Self::V, b: &Self::V, stride: usize) -> Result<Self::V>;
}

impl Ops for Tape {
    type V = Var;

    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor {
        Tape::value(self, *v)
    }
    fn input(&mut self, t: Tensor) -> Var {
        self.leaf(t)
    }
    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Tape::add(self, *a, *b)
    }
    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Tape::sub(self, *a, *b)
    }
    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Tape::mul(self, *a, *b)
    }
    fn scale(&mut self, a: &Var, c: f64) -> Var {
        Tape::scale(self, *a, c)
    }
    fn shift(&mut self, a: &Var, c: f64) -> Var {
        Tape::shift(self, *a, c)
    }
    fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Tape::matmul(self, *a, *b)
    }
    fn sigmoid(&mut self, a: &Var) -> Var {
        Tape::sigmoid(self, *a)
    }
    fn tanh(&mut self, a: &Var) -> Var {
        Tape::tanh(self, *a)
    }
    fn relu(&mut self, a: &Var) -> Var {
        Tape::relu(self, *a)
    }
    fn softmax_axis(&mut self, a: &Var, axis: usize) -> Result<Var> {
        Tape::softmax_axis(self, *a, axis)
    }
    fn log_softmax_axis(&mut self, a: &Var, axis: usize) -> Result<Var> {
        Tape::log_softmax_axis(self, *a, axis)
    }
    fn concat(&mut self, a: &Var, b: &Var, axis: usize) -> Result<Var> {
        Tape::concat(self, *a, *b, axis)
    }
    fn sum_axis(&mut self, a: &Var, axis: usize) -> Result<Var> {
        Tape::sum_axis(self, *a, axis)
    }
    fn reshape(&mut self, a: &Var, shape: &[usize]) -> Result<Var> {
        Tape::reshape(self, *a, shape)
    }
    fn embedding_lookup(&mut self, table: &Var, id: usize) -> Result<Var> {
        Tape::embedding_lookup(self, *table, id)
    }
    fn select(&mut self, a: &Var, indices: &[usize]) -> Result<Var> {
        Tape::select(self, *a, indices)
    }
    fn conv2d(&mut self, x: &Var, k: &Var, b: &Var, stride: usize) -> Result<Var> {
        Tape::conv2d(self, *x, *k, *b, stride)
    }
}

/// Forward-only evaluation on plain tensors.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

impl Ops for Eager {
    type V = Tensor;

    fn value<'a>(&'a self, v: &'a Tensor) -> &'a Tensor {
        v
    }
    fn input(&mut self, t: Tensor) -> Tensor {
        t
    }
    fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.add(b)
    }
    fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.sub(b)
    }
    fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.mul(b)
    }
    fn scale(&mut self, a: &Tensor, c: f64) -> Tensor {
        a.scale(c)
    }
    fn shift(&mut self, a: &Tensor, c: f64) -> Tensor {
        a.shift(c)
    }
    fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.matmul(b)
    }
    fn sigmoid(&mut self, a: &Tensor) -> Tensor {
        a.sigmoid()
    }
    fn tanh(&mut self, a: &Tensor) -> Tensor {
        a.tanh()
    }
    fn relu(&mut self, a: &Tensor) -> Tensor {
        a.relu()
    }
    fn softmax_axis(&mut self, a: &Tensor, axis: usize) -> Result<Tensor> {
        a.softmax_axis(axis)
    }
    fn log_softmax_axis(&mut self, a: &Tensor, axis: usize) -> Result<Tensor> {
        a.log_softmax_axis(axis)
    }
    fn concat(&mut self, a: &Tensor, b: &Tensor, axis: usize) -> Result<Tensor> {
        a.concat(b, axis)
    }
    fn sum_axis(&mut self, a: &Tensor, axis: usize) -> Result<Tensor> {
        a.sum_axis(axis)
    }
    fn reshape(&mut self, a: &Tensor, shape: &[usize]) -> Result<Tensor> {
        a.reshape(shape)
    }
    fn embedding_lookup(&mut self, table: &Tensor, id: usize) -> Result<Tensor> {
        let rows = table.gather_rows(&[id])?;
        let e = rows.shape()[1];
        rows.reshape(&[e])
    }
    fn select(&mut self, a: &Tensor, indices: &[usize]) -> Result<Tensor> {
        a.select(indices)
    }
    fn conv2d(&mut self, x: &Tensor, k: &Tensor, b: &Tensor, stride: usize) -> Result<Tensor> {
        x.conv2d(k, b, stride)
    }
}
