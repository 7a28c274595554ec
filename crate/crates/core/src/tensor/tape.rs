use super::{broadcast_kind, Broadcast, ConvGeometry, Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax(Var, usize),
    LogSoftmax(Var, usize),
    Concat(Var, Var, usize),
    SumAxis(Var, usize),
    SumAll(Var),
    Reshape(Var),
    GatherRows(Var, Vec<usize>),
    Select(Var, Vec<usize>),
    Conv2d {
        input: Var,
        kernels: Var,
        bias: Var,
        stride: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Record of executed ops, in execution order, for one forward pass.
///
/// Every op appends a node whose inputs were recorded earlier, so the node
/// list is always topologically sorted. [`Tape::backward`] may run once.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
///
/// Every leaf has an entry (zeros when the loss does not depend on it).
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => {
            for (a, b) in acc.data.iter_mut().zip(&g.data) {
                *a += b;
            }
        }
        None => *slot = Some(g),
    }
}

/// Reduces a gradient to the shape of the right operand of a broadcast op.
fn reduce_like(g: Tensor, kind: Broadcast) -> Tensor {
    match kind {
        Broadcast::Same => g,
        Broadcast::Row => g.sum_axis(0).expect("row broadcast operand is a matrix"),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input (parameter or constant).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).scale(c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).shift(c);
        self.push(v, Op::Shift(a))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).transpose()?;
        Ok(self.push(v, Op::Transpose(a)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).sigmoid();
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).tanh();
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).relu();
        self.push(v, Op::Relu(a))
    }

    pub fn softmax_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let v = self.value(a).softmax_axis(axis)?;
        Ok(self.push(v, Op::Softmax(a, axis)))
    }

    pub fn log_softmax_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let v = self.value(a).log_softmax_axis(axis)?;
        Ok(self.push(v, Op::LogSoftmax(a, axis)))
    }

    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var> {
        let v = self.value(a).concat(self.value(b), axis)?;
        Ok(self.push(v, Op::Concat(a, b, axis)))
    }

    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let v = self.value(a).sum_axis(axis)?;
        Ok(self.push(v, Op::SumAxis(a, axis)))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_all();
        self.push(v, Op::SumAll(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).reshape(shape)?;
        Ok(self.push(v, Op::Reshape(a)))
    }

    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let v = self.value(table).gather_rows(ids)?;
        Ok(self.push(v, Op::GatherRows(table, ids.to_vec())))
    }

    /// Row `id` of a `[V, E]` table as an `[E]` vector.
    pub fn embedding_lookup(&mut self, table: Var, id: usize) -> Result<Var> {
        let rows = self.gather_rows(table, &[id])?;
        let e = self.value(rows).shape()[1];
        self.reshape(rows, &[e])
    }

    pub fn select(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let v = self.value(a).select(indices)?;
        Ok(self.push(v, Op::Select(a, indices.to_vec())))
    }

    pub fn conv2d(&mut self, input: Var, kernels: Var, bias: Var, stride: usize) -> Result<Var> {
        let v = self
            .value(input)
            .conv2d(self.value(kernels), self.value(bias), stride)?;
        Ok(self.push(
            v,
            Op::Conv2d {
                input,
                kernels,
                bias,
                stride,
            },
        ))
    }

    /// Propagates d(loss)/d(node) back through the tape.
    ///
    /// Fails on a non-scalar loss or when called a second time.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(TensorError::TapeConsumed);
        }
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(TensorError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let seed = Tensor::full(loss_value.shape(), 1.0);
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(seed);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    let kind = broadcast_kind("add", self.value(*a).shape(), self.value(*b).shape())?;
                    accumulate(&mut grads[a.0], g.clone());
                    accumulate(&mut grads[b.0], reduce_like(g, kind));
                }
                Op::Sub(a, b) => {
                    let kind = broadcast_kind("sub", self.value(*a).shape(), self.value(*b).shape())?;
                    accumulate(&mut grads[b.0], reduce_like(g.scale(-1.0), kind));
                    accumulate(&mut grads[a.0], g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let kind = broadcast_kind("mul", av.shape(), bv.shape())?;
                    accumulate(&mut grads[a.0], g.mul(bv)?);
                    accumulate(&mut grads[b.0], reduce_like(g.mul(av)?, kind));
                }
                Op::Scale(a, c) => accumulate(&mut grads[a.0], g.scale(*c)),
                Op::Shift(a) => accumulate(&mut grads[a.0], g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    // dA = dC·Bᵀ, dB = Aᵀ·dC; rank-1 A behaves as a [1, k] row.
                    let ga = g.matmul(&bv.transpose()?)?;
                    let (a2, g2) = if av.rank() == 1 {
                        (av.reshape(&[1, av.len()])?, g.reshape(&[1, g.len()])?)
                    } else {
                        (av.clone(), g)
                    };
                    let gb = a2.transpose()?.matmul(&g2)?;
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Transpose(a) => accumulate(&mut grads[a.0], g.transpose()?),
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let data = g.data.iter().zip(&y.data).map(|(g, y)| g * y * (1.0 - y)).collect();
                    accumulate(&mut grads[a.0], Tensor { shape: g.shape, data });
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let data = g.data.iter().zip(&y.data).map(|(g, y)| g * (1.0 - y * y)).collect();
                    accumulate(&mut grads[a.0], Tensor { shape: g.shape, data });
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let data = g
                        .data
                        .iter()
                        .zip(&x.data)
                        .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut grads[a.0], Tensor { shape: g.shape, data });
                }
                Op::Softmax(a, axis) => {
                    // dx = y ⊙ (g − Σ_axis g⊙y)
                    let y = &node.value;
                    let gx = softmax_backward(&g, y, *axis)?;
                    accumulate(&mut grads[a.0], gx);
                }
                Op::LogSoftmax(a, axis) => {
                    // dx = g − softmax(x) ⊙ Σ_axis g
                    let y = &node.value;
                    let gx = log_softmax_backward(&g, y, *axis)?;
                    accumulate(&mut grads[a.0], gx);
                }
                Op::Concat(a, b, axis) => {
                    let (ga, gb) = split_axis(&g, self.value(*a).shape()[*axis], *axis)?;
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::SumAxis(a, axis) => {
                    let shape = self.value(*a).shape().to_vec();
                    accumulate(&mut grads[a.0], expand_axis(&g, &shape, *axis)?);
                }
                Op::SumAll(a) => {
                    let shape = self.value(*a).shape();
                    accumulate(&mut grads[a.0], Tensor::full(shape, g.item()));
                }
                Op::Reshape(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    accumulate(&mut grads[a.0], Tensor { shape, data: g.data });
                }
                Op::GatherRows(table, ids) => {
                    let tv = self.value(*table);
                    let cols = tv.shape()[1];
                    let mut gt = Tensor::zeros(tv.shape());
                    for (r, &id) in ids.iter().enumerate() {
                        for c in 0..cols {
                            gt.data[id * cols + c] += g.data[r * cols + c];
                        }
                    }
                    accumulate(&mut grads[table.0], gt);
                }
                Op::Select(a, indices) => {
                    let mut ga = Tensor::zeros(self.value(*a).shape());
                    for (k, &i) in indices.iter().enumerate() {
                        ga.data[i] += g.data[k];
                    }
                    accumulate(&mut grads[a.0], ga);
                }
                Op::Conv2d {
                    input,
                    kernels,
                    bias,
                    stride,
                } => {
                    let (x, w, b) = (self.value(*input), self.value(*kernels), self.value(*bias));
                    let geo = ConvGeometry::new(x, w, b, *stride)?;
                    let mut gx = Tensor::zeros(x.shape());
                    let mut gw = Tensor::zeros(w.shape());
                    let mut gb = Tensor::zeros(b.shape());
                    for oy in 0..geo.out_h {
                        for ox in 0..geo.out_w {
                            for f in 0..geo.k {
                                let go = g.data[(oy * geo.out_w + ox) * geo.k + f];
                                if go == 0.0 {
                                    continue;
                                }
                                gb.data[f] += go;
                                for dy in 0..geo.kh {
                                    for dx in 0..geo.kw {
                                        let ib = geo.input_index(oy, ox, dy, dx);
                                        let kb = geo.kernel_index(f, dy, dx);
                                        for c in 0..geo.c {
                                            gx.data[ib + c] += go * w.data[kb + c];
                                            gw.data[kb + c] += go * x.data[ib + c];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    accumulate(&mut grads[input.0], gx);
                    accumulate(&mut grads[kernels.0], gw);
                    accumulate(&mut grads[bias.0], gb);
                }
            }
        }

        for (idx, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && grads[idx].is_none() {
                grads[idx] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }
}

fn softmax_backward(g: &Tensor, y: &Tensor, axis: usize) -> Result<Tensor> {
    let gy = g.mul(y)?;
    let summed = expand_axis(&gy.sum_axis(axis)?, y.shape(), axis)?;
    g.sub(&summed)?.mul(y)
}

fn log_softmax_backward(g: &Tensor, y: &Tensor, axis: usize) -> Result<Tensor> {
    let p = y.map(f64::exp);
    let summed = expand_axis(&g.sum_axis(axis)?, y.shape(), axis)?;
    g.sub(&p.mul(&summed)?)
}

/// Broadcasts `g` (with `axis` summed out) back to `shape`.
fn expand_axis(g: &Tensor, shape: &[usize], axis: usize) -> Result<Tensor> {
    let (outer, len, inner) = super::axis_split("expand_axis", shape, axis)?;
    let mut data = vec![0.0; outer * len * inner];
    for o in 0..outer {
        for j in 0..len {
            for i in 0..inner {
                data[(o * len + j) * inner + i] = g.data[o * inner + i];
            }
        }
    }
    Ok(Tensor {
        shape: shape.to_vec(),
        data,
    })
}

fn split_axis(g: &Tensor, first: usize, axis: usize) -> Result<(Tensor, Tensor)> {
    let (outer, len, inner) = super::axis_split("split_axis", g.shape(), axis)?;
    let second = len - first;
    let mut a = Vec::with_capacity(outer * first * inner);
    let mut b = Vec::with_capacity(outer * second * inner);
    for o in 0..outer {
        let base = o * len * inner;
        a.extend_from_slice(&g.data[base..base + first * inner]);
        b.extend_from_slice(&g.data[base + first * inner..base + len * inner]);
    }
    let mut sa = g.shape.clone();
    sa[axis] = first;
    let mut sb = g.shape.clone();
    sb[axis] = second;
    Ok((Tensor { shape: sa, data: a }, Tensor { shape: sb, data: b }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_weights_has_unit_gradient() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::matrix(2, 3, vec![0.3, -1.0, 2.0, 0.0, 5.0, 1.0]).unwrap());
        let loss = tape.sum_all(w);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap(), &Tensor::full(&[2, 3], 1.0));
    }

    #[test]
    fn sigmoid_at_zero_has_quarter_gradient() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::zeros(&[4]));
        let s = tape.sigmoid(w);
        let loss = tape.sum_all(s);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[0.25; 4]);
    }

    #[test]
    fn sigmoid_and_tanh_gradients_closed_form() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0]).unwrap());
        let s = tape.sigmoid(x);
        let loss = tape.sum_all(s);
        let g = tape.backward(loss).unwrap();
        let sig = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((g.get(x).unwrap().item() - sig * (1.0 - sig)).abs() < 1e-15);
        assert!((sig * (1.0 - sig) - 0.196_611_933_241_481_85).abs() < 1e-15);

        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.0]).unwrap());
        let t = tape.tanh(x);
        let loss = tape.sum_all(t);
        assert_eq!(tape.backward(loss).unwrap().get(x).unwrap().item(), 1.0);
    }

    #[test]
    fn backward_twice_is_an_error() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::zeros(&[2]));
        let loss = tape.sum_all(w);
        tape.backward(loss).unwrap();
        assert_eq!(tape.backward(loss).unwrap_err(), TensorError::TapeConsumed);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::zeros(&[2]));
        assert!(matches!(
            tape.backward(w),
            Err(TensorError::NonScalarLoss(s)) if s == vec![2]
        ));
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::full(&[2], 1.0));
        let unused = tape.leaf(Tensor::zeros(&[3, 1]));
        let loss = tape.sum_all(w);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(unused).unwrap(), &Tensor::zeros(&[3, 1]));
    }

    #[test]
    fn shared_input_accumulates() {
        // loss = Σ x⊙x → grad = 2x
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, -2.0]).unwrap());
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum_all(sq);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, -4.0]);
    }
}
