//! Tape-based reverse-mode automatic differentiation.
//!
//! Every primitive's backward pass is expressed in the same primitive set and
//! recorded on the same tape, so `grad` can be applied to expressions that
//! already contain gradients. That closure property is what makes second-order
//! meta-gradients possible without a symbolic engine.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`]. Node ids are assigned in creation order,
/// so the tape is topologically sorted by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(&self) -> usize {
        self.0
    }
}

/// A tape node holding a trainable or frozen leaf tensor.
#[derive(Debug, Clone, Copy)]
pub struct Parameter {
    pub var: Var,
    pub trainable: bool,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    /// 1.0 where the input is > 0, else 0.0. Treated as locally constant:
    /// contributes no gradient.
    ReluMask(Var),
    Exp(Var),
    Ln(Var),
    Recip(Var),
    SumAll(Var),
    /// Replicate a one-element tensor to the given shape.
    BroadcastTo(Var, Vec<usize>),
    Reshape(Var, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Recorded computation graph with eagerly evaluated node values.
/// Single-owner during recording; finished values are plain tensors.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn eval_op(op: &Op, inputs: &[&Tensor]) -> Result<Tensor> {
    match op {
        Op::Leaf => unreachable!("leaf values are stored, not computed"),
        Op::MatMul(_, _) => {
            let (a, b) = (inputs[0], inputs[1]);
            let (m, k) = a.dims2()?;
            let (k2, n) = b.dims2()?;
            if k != k2 {
                return Err(Error::Dimension(format!(
                    "matmul: {:?} x {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
            let (ad, bd) = (a.data(), b.data());
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                for p in 0..k {
                    let aip = ad[i * k + p];
                    if aip == 0.0 {
                        continue;
                    }
                    let brow = &bd[p * n..(p + 1) * n];
                    let orow = &mut out[i * n..(i + 1) * n];
                    for j in 0..n {
                        orow[j] += aip * brow[j];
                    }
                }
            }
            Tensor::matrix(m, n, out)
        }
        Op::Transpose(_) => {
            let a = inputs[0];
            let (r, c) = a.dims2()?;
            let mut out = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    out[j * r + i] = a.get2(i, j);
                }
            }
            Tensor::matrix(c, r, out)
        }
        Op::Add(_, _) | Op::Sub(_, _) | Op::Mul(_, _) => {
            let (a, b) = (inputs[0], inputs[1]);
            if a.shape() != b.shape() {
                return Err(Error::Dimension(format!(
                    "elementwise op on shapes {:?} and {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
            let data = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| match op {
                    Op::Add(_, _) => x + y,
                    Op::Sub(_, _) => x - y,
                    _ => x * y,
                })
                .collect();
            Tensor::new(a.shape().to_vec(), data)
        }
        Op::Scale(_, c) => {
            let a = inputs[0];
            Tensor::new(a.shape().to_vec(), a.data().iter().map(|x| x * c).collect())
        }
        Op::Relu(_) => {
            let a = inputs[0];
            Tensor::new(
                a.shape().to_vec(),
                a.data().iter().map(|x| x.max(0.0)).collect(),
            )
        }
        Op::ReluMask(_) => {
            let a = inputs[0];
            Tensor::new(
                a.shape().to_vec(),
                a.data().iter().map(|x| if *x > 0.0 { 1.0 } else { 0.0 }).collect(),
            )
        }
        Op::Exp(_) => {
            let a = inputs[0];
            Tensor::new(a.shape().to_vec(), a.data().iter().map(|x| x.exp()).collect())
        }
        Op::Ln(_) => {
            let a = inputs[0];
            if a.data().iter().any(|x| *x <= 0.0) {
                return Err(Error::Dimension("ln of non-positive value".into()));
            }
            Tensor::new(a.shape().to_vec(), a.data().iter().map(|x| x.ln()).collect())
        }
        Op::Recip(_) => {
            let a = inputs[0];
            if a.data().iter().any(|x| *x == 0.0) {
                return Err(Error::Dimension("reciprocal of zero".into()));
            }
            Tensor::new(a.shape().to_vec(), a.data().iter().map(|x| 1.0 / x).collect())
        }
        Op::SumAll(_) => Ok(Tensor::scalar(inputs[0].data().iter().sum())),
        Op::BroadcastTo(_, shape) => {
            let v = inputs[0].item()?;
            let numel = shape.iter().product();
            Tensor::new(shape.clone(), vec![v; numel])
        }
        Op::Reshape(_, shape) => {
            let a = inputs[0];
            Tensor::new(shape.clone(), a.data().to_vec())
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Current value of a node.
    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn apply(&mut self, op: Op) -> Result<Var> {
        let value = {
            let ins: Vec<&Tensor> = op_inputs(&op).iter().map(|v| self.value(*v)).collect();
            eval_op(&op, &ins)?
        };
        Ok(self.push(op, value))
    }

    /// Record a constant (non-trainable leaf).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t)
    }

    /// Record a trainable leaf.
    pub fn parameter(&mut self, t: Tensor) -> Parameter {
        Parameter { var: self.constant(t), trainable: true }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.apply(Op::Scale(a, c)).expect("scale preserves shape")
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.apply(Op::Relu(a)).expect("relu preserves shape")
    }

    pub fn relu_mask(&mut self, a: Var) -> Var {
        self.apply(Op::ReluMask(a)).expect("mask preserves shape")
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.apply(Op::Exp(a)).expect("exp preserves shape")
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Ln(a))
    }

    pub fn recip(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Recip(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        self.apply(Op::SumAll(a)).expect("sum is always valid")
    }

    pub fn broadcast_to(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        self.apply(Op::BroadcastTo(a, shape.to_vec()))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(a).numel() {
            return Err(Error::Dimension(format!(
                "reshape {:?} -> {:?}",
                self.shape(a),
                shape
            )));
        }
        self.apply(Op::Reshape(a, shape.to_vec()))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).numel() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Sum of each row of a 2-D tensor, as [rows, 1].
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let (_, c) = self.value(a).dims2()?;
        let ones = self.constant(Tensor::ones(&[c, 1]));
        self.matmul(a, ones)
    }

    /// Replicate a [rows, 1] column across `cols` columns.
    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Result<Var> {
        let ones = self.constant(Tensor::ones(&[1, cols]));
        self.matmul(a, ones)
    }

    /// Replicate a [1, cols] row down `rows` rows (bias-add broadcast).
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let ones = self.constant(Tensor::ones(&[rows, 1]));
        self.matmul(ones, a)
    }

    /// Σ_i (a_i − b_i)² over all elements. Shapes must match.
    pub fn l2_squared(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        Ok(self.sum_all(sq))
    }

    /// Row-wise softmax of a [b, n] logits matrix, stabilized by detached
    /// row-max subtraction.
    pub fn softmax_rows(&mut self, logits: Var) -> Result<Var> {
        let (b, n) = self.value(logits).dims2()?;
        let z = self.sub_row_max(logits, b, n)?;
        let e = self.exp(z);
        let s = self.row_sum(e)?;
        let rinv = self.recip(s)?;
        let denom = self.broadcast_cols(rinv, n)?;
        self.mul(e, denom)
    }

    /// Subtract each row's max as a detached constant. Leaves softmax and
    /// cross-entropy values and gradients exact while bounding exponents.
    fn sub_row_max(&mut self, logits: Var, b: usize, n: usize) -> Result<Var> {
        let v = self.value(logits).clone();
        let mut maxes = Vec::with_capacity(b);
        for i in 0..b {
            let mut m = f64::NEG_INFINITY;
            for j in 0..n {
                m = m.max(v.get2(i, j));
            }
            maxes.push(m);
        }
        let m = self.constant(Tensor::matrix(b, 1, maxes)?);
        let mb = self.broadcast_cols(m, n)?;
        self.sub(logits, mb)
    }

    /// Per-example −log softmax(logits)[label] for a [b, n] logits matrix,
    /// plus the batch mean. Numerically stabilized.
    pub fn softmax_cross_entropy_per_example(
        &mut self,
        logits: Var,
        labels: &[usize],
    ) -> Result<(Vec<Var>, Var)> {
        let (b, n) = self.value(logits).dims2()?;
        if labels.len() != b {
            return Err(Error::Validation(format!(
                "labels length {} does not match batch {}",
                labels.len(),
                b
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if *l >= n {
                return Err(Error::Validation(format!(
                    "label {} out of range [0, {}) at row {}",
                    l, n, i
                )));
            }
        }
        let v = self.value(logits).clone();
        let mut maxes = Vec::with_capacity(b);
        for i in 0..b {
            let mut m = f64::NEG_INFINITY;
            for j in 0..n {
                m = m.max(v.get2(i, j));
            }
            maxes.push(m);
        }
        let m = self.constant(Tensor::matrix(b, 1, maxes)?);
        let mb = self.broadcast_cols(m, n)?;
        let z = self.sub(logits, mb)?;
        let e = self.exp(z);
        let s = self.row_sum(e)?;
        let lse = self.ln(s)?;
        // picked_i = logits[i, label_i], via a one-hot mask and row sums.
        let mut onehot = vec![0.0; b * n];
        for (i, l) in labels.iter().enumerate() {
            onehot[i * n + l] = 1.0;
        }
        let oh = self.constant(Tensor::matrix(b, n, onehot)?);
        let masked = self.mul(logits, oh)?;
        let picked = self.row_sum(masked)?;
        let shifted = self.add(lse, m)?;
        let loss_col = self.sub(shifted, picked)?; // [b, 1]
        let mut per_example = Vec::with_capacity(b);
        for i in 0..b {
            let mut sel = vec![0.0; b];
            sel[i] = 1.0;
            let row = self.constant(Tensor::matrix(1, b, sel)?);
            let li = self.matmul(row, loss_col)?;
            per_example.push(li);
        }
        let mean = self.mean_all(loss_col);
        Ok((per_example, mean))
    }

    /// Mean softmax cross-entropy over a batch.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (_, mean) = self.softmax_cross_entropy_per_example(logits, labels)?;
        Ok(mean)
    }

    /// Reverse-mode gradient of a one-element `output` with respect to each
    /// var in `wrt`. The returned gradients are tape nodes built from the same
    /// primitives, so they can be differentiated again. A var the output does
    /// not depend on gets a zero gradient.
    pub fn grad(&mut self, output: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        if !self.value(output).is_scalar() {
            return Err(Error::Validation(format!(
                "grad requires a one-element output, got shape {:?}",
                self.shape(output)
            )));
        }
        let mut adjoint: Vec<Option<Var>> = vec![None; self.nodes.len()];
        let seed_shape = self.shape(output).to_vec();
        adjoint[output.0] = Some(self.constant(Tensor::ones(&seed_shape)));

        for i in (0..=output.0).rev() {
            let g = match adjoint[i] {
                Some(g) => g,
                None => continue,
            };
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let bt = self.transpose(b)?;
                    let ga = self.matmul(g, bt)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                    let at = self.transpose(a)?;
                    let gb = self.matmul(at, g)?;
                    self.accumulate(&mut adjoint, b, gb)?;
                }
                Op::Transpose(a) => {
                    let ga = self.transpose(g)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut adjoint, a, g)?;
                    self.accumulate(&mut adjoint, b, g)?;
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut adjoint, a, g)?;
                    let ng = self.scale(g, -1.0);
                    self.accumulate(&mut adjoint, b, ng)?;
                }
                Op::Mul(a, b) => {
                    let ga = self.mul(g, b)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                    let gb = self.mul(g, a)?;
                    self.accumulate(&mut adjoint, b, gb)?;
                }
                Op::Scale(a, c) => {
                    let ga = self.scale(g, c);
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::Relu(a) => {
                    // Subgradient 0 at exactly 0.
                    let mask = self.relu_mask(a);
                    let ga = self.mul(g, mask)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::ReluMask(_) => {}
                Op::Exp(a) => {
                    let ga = self.mul(g, Var(i))?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::Ln(a) => {
                    let r = self.recip(a)?;
                    let ga = self.mul(g, r)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::Recip(a) => {
                    let out2 = self.mul(Var(i), Var(i))?;
                    let prod = self.mul(g, out2)?;
                    let ga = self.scale(prod, -1.0);
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::SumAll(a) => {
                    let shape = self.shape(a).to_vec();
                    let ga = self.broadcast_to(g, &shape)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::BroadcastTo(a, _) => {
                    let s = self.sum_all(g);
                    let shape = self.shape(a).to_vec();
                    let ga = self.reshape(s, &shape)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
                Op::Reshape(a, _) => {
                    let shape = self.shape(a).to_vec();
                    let ga = self.reshape(g, &shape)?;
                    self.accumulate(&mut adjoint, a, ga)?;
                }
            }
        }

        wrt.iter()
            .map(|p| match adjoint.get(p.0).copied().flatten() {
                Some(g) => Ok(g),
                None => {
                    let shape = self.shape(*p).to_vec();
                    Ok(self.constant(Tensor::zeros(&shape)))
                }
            })
            .collect()
    }

    fn accumulate(&mut self, adjoint: &mut [Option<Var>], at: Var, contribution: Var) -> Result<()> {
        adjoint[at.0] = Some(match adjoint[at.0] {
            None => contribution,
            Some(existing) => self.add(existing, contribution)?,
        });
        Ok(())
    }

    /// Recompute every node value from the recorded ops. Shares the evaluation
    /// code with recording, so replayed values are bit-identical.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Leaf => node.value.clone(),
                op => {
                    let ins: Vec<&Tensor> = op_inputs(op).iter().map(|v| &values[v.0]).collect();
                    eval_op(op, &ins)?
                }
            };
            values.push(v);
        }
        Ok(values)
    }
}

fn op_inputs(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
        Op::Transpose(a)
        | Op::Scale(a, _)
        | Op::Relu(a)
        | Op::ReluMask(a)
        | Op::Exp(a)
        | Op::Ln(a)
        | Op::Recip(a)
        | Op::SumAll(a)
        | Op::BroadcastTo(a, _)
        | Op::Reshape(a, _) => vec![*a],
    }
}
