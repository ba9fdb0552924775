//! Reverse-mode differentiation over a linear record of operations.
//!
//! Every forward op appends a node holding its output value and the handles of
//! its inputs. `backward` walks the nodes from last to first, so the replay
//! order is exactly the reverse of the forward order. Parameter leaves remember
//! their index in the [`ParamStore`] and deposit their adjoint there.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

/// Operation kinds understood by [`Tape::forward_op`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpKind {
    MatMul,
    /// Elementwise sum; the second operand may be a `[1, n]` row broadcast over rows.
    Add,
    Sub,
    Mul,
    /// Column-wise concatenation of any number of inputs.
    Concat,
    Sigmoid,
    Tanh,
    LRelu(f64),
    /// Scalar `[1, 1]` sum of squared entries.
    SumOfSquares,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    OneMinus(Var),
    Concat(Vec<Var>),
    Columns(Var, Vec<usize>),
    Sigmoid(Var),
    Tanh(Var),
    LRelu(Var, f64),
    Dropout(Var, Vec<f64>),
    SumOfSquares(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    params: HashMap<usize, Var>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new(), params: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::ForeignVar);
        }
        Ok(())
    }

    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.tape, self.id, "variable from another tape");
        &self.nodes[v.index].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var { tape: self.id, index: self.nodes.len() - 1 }
    }

    fn push_checked(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        let value = value.finite(name)?;
        Ok(self.push(value, op))
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf bound to a named parameter. Repeated lookups on one tape share a node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let idx = store.index_of(name)?;
        if let Some(&v) = self.params.get(&idx) {
            return Ok(v);
        }
        let v = self.push(store.value_at(idx).clone(), Op::Param(idx));
        self.params.insert(idx, v);
        Ok(v)
    }

    pub fn forward_op(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var> {
        let binary = |name: &'static str| -> Result<(Var, Var)> {
            match inputs {
                [a, b] => Ok((*a, *b)),
                _ => Err(Error::InvalidShape { op: name, msg: format!("expects 2 inputs, got {}", inputs.len()) }),
            }
        };
        let unary = |name: &'static str| -> Result<Var> {
            match inputs {
                [a] => Ok(*a),
                _ => Err(Error::InvalidShape { op: name, msg: format!("expects 1 input, got {}", inputs.len()) }),
            }
        };
        match kind {
            OpKind::MatMul => {
                let (a, b) = binary("matmul")?;
                self.matmul(a, b)
            }
            OpKind::Add => {
                let (a, b) = binary("add")?;
                self.add(a, b)
            }
            OpKind::Sub => {
                let (a, b) = binary("sub")?;
                self.sub(a, b)
            }
            OpKind::Mul => {
                let (a, b) = binary("mul")?;
                self.mul(a, b)
            }
            OpKind::Concat => self.concat(inputs),
            OpKind::Sigmoid => {
                let a = unary("sigmoid")?;
                self.sigmoid(a)
            }
            OpKind::Tanh => {
                let a = unary("tanh")?;
                self.tanh(a)
            }
            OpKind::LRelu(slope) => {
                let a = unary("lrelu")?;
                self.lrelu(a, slope)
            }
            OpKind::SumOfSquares => {
                let a = unary("sum_of_squares")?;
                self.sum_of_squares(a)
            }
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let out = self.value(a).matmul(self.value(b))?;
        self.push_checked(out, Op::MatMul(a, b), "matmul")
    }

    /// `a + b`, where `b` may also be a `[1, n]` row added to every row of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() == vb.shape() {
            let out = va.zip_with(vb, "add", |x, y| x + y)?;
            return self.push_checked(out, Op::Add(a, b), "add");
        }
        let (m, n) = va.expect_matrix("add")?;
        if vb.shape() != [1, n] {
            return Err(Error::ShapeMismatch { op: "add", left: va.shape().to_vec(), right: vb.shape().to_vec() });
        }
        let mut data = va.data().to_vec();
        for i in 0..m {
            for (o, &b) in data[i * n..(i + 1) * n].iter_mut().zip(vb.data()) {
                *o += b;
            }
        }
        let out = Tensor::new(vec![m, n], data)?;
        self.push_checked(out, Op::AddRow(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let out = self.value(a).zip_with(self.value(b), "sub", |x, y| x - y)?;
        self.push_checked(out, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let out = self.value(a).zip_with(self.value(b), "mul", |x, y| x * y)?;
        self.push_checked(out, Op::Mul(a, b), "mul")
    }

    /// Multiply by a fixed constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(|x| x * c);
        self.push_checked(out, Op::Scale(a, c), "scale")
    }

    /// Multiply every entry of `a` by the `[1, 1]` variable `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        self.check(a)?;
        self.check(s)?;
        let vs = self.value(s);
        if !vs.is_scalar() {
            return Err(Error::ShapeMismatch {
                op: "scale_by",
                left: self.value(a).shape().to_vec(),
                right: vs.shape().to_vec(),
            });
        }
        let c = vs.item();
        let out = self.value(a).map(|x| x * c);
        self.push_checked(out, Op::ScaleBy(a, s), "scale_by")
    }

    /// `1 - a` elementwise.
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(|x| 1.0 - x);
        self.push_checked(out, Op::OneMinus(a), "one_minus")
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        for &p in parts {
            self.check(p)?;
        }
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_cols(&values)?;
        self.push_checked(out, Op::Concat(parts.to_vec()), "concat")
    }

    /// Gather columns by index; a contiguous range is the plain slice case.
    pub fn columns(&mut self, a: Var, cols: &[usize]) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).select_cols(cols)?;
        self.push_checked(out, Op::Columns(a, cols.to_vec()), "slice")
    }

    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let cols: Vec<usize> = (start..end).collect();
        self.columns(a, &cols)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(sigmoid);
        self.push_checked(out, Op::Sigmoid(a), "sigmoid")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(f64::tanh);
        self.push_checked(out, Op::Tanh(a), "tanh")
    }

    pub fn lrelu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push_checked(out, Op::LRelu(a, slope), "lrelu")
    }

    /// Inverted dropout. Outside training, or at rate 0, returns `a` itself.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var> {
        self.check(a)?;
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> =
            (0..self.value(a).len()).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
        let v = self.value(a);
        let data = v.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::new(v.shape().to_vec(), data)?;
        self.push_checked(out, Op::Dropout(a, mask), "dropout")
    }

    pub fn sum_of_squares(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = Tensor::scalar(self.value(a).sum_of_squares());
        self.push_checked(out, Op::SumOfSquares(a), "sum_of_squares")
    }

    /// Sum of scalar variables.
    pub fn sum_scalars(&mut self, terms: &[Var]) -> Result<Var> {
        let (&first, rest) =
            terms.split_first().ok_or(Error::InvalidShape { op: "sum_scalars", msg: "no terms".into() })?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    /// Accumulate `d loss / d param` into the store's gradient slots.
    ///
    /// Gradients are added to whatever the slots already hold; zeroing is left
    /// to the optimizer step or an explicit [`ParamStore::zero_grad`].
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        self.check(loss)?;
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NotScalar(lv.shape().to_vec()));
        }
        let mut adj: Vec<Option<Tensor>> = (0..=loss.index).map(|_| None).collect();
        adj[loss.index] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.index).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            let mut send = |v: Var, grad: Tensor| match &mut adj[v.index] {
                Some(acc) => acc.add_assign(&grad),
                slot @ None => *slot = Some(grad),
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(idx) => store.accumulate_grad(*idx, &g),
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    send(*a, g.matmul(&vb.transpose())?);
                    send(*b, va.transpose().matmul(&g)?);
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::AddRow(a, b) => {
                    let n = g.cols();
                    let mut col_sums = vec![0.0; n];
                    for r in 0..g.rows() {
                        for (s, x) in col_sums.iter_mut().zip(g.row_slice(r)) {
                            *s += x;
                        }
                    }
                    send(*b, Tensor::new(vec![1, n], col_sums)?);
                    send(*a, g);
                }
                Op::Sub(a, b) => {
                    send(*b, g.map(|x| -x));
                    send(*a, g);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    send(*a, g.zip_with(vb, "mul", |x, y| x * y)?);
                    send(*b, g.zip_with(va, "mul", |x, y| x * y)?);
                }
                Op::Scale(a, c) => send(*a, g.map(|x| x * c)),
                Op::ScaleBy(a, s) => {
                    let (va, vs) = (self.value(*a), self.value(*s));
                    let ds: f64 = g.data().iter().zip(va.data()).map(|(x, y)| x * y).sum();
                    let c = vs.item();
                    send(*s, Tensor::new(vs.shape().to_vec(), vec![ds])?);
                    send(*a, g.map(|x| x * c));
                }
                Op::OneMinus(a) => send(*a, g.map(|x| -x)),
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let cols: Vec<usize> = (offset..offset + w).collect();
                        send(p, g.select_cols(&cols)?);
                        offset += w;
                    }
                }
                Op::Columns(a, cols) => {
                    let va = self.value(*a);
                    let (m, n) = (va.rows(), va.cols());
                    let k = cols.len();
                    let mut data = vec![0.0; m * n];
                    for r in 0..m {
                        for (j, &c) in cols.iter().enumerate() {
                            data[r * n + c] += g.data()[r * k + j];
                        }
                    }
                    send(*a, Tensor::new(vec![m, n], data)?);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    send(*a, g.zip_with(y, "sigmoid", |x, s| x * s * (1.0 - s))?);
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    send(*a, g.zip_with(y, "tanh", |x, t| x * (1.0 - t * t))?);
                }
                Op::LRelu(a, slope) => {
                    let va = self.value(*a);
                    let slope = *slope;
                    send(*a, g.zip_with(va, "lrelu", |x, v| if v > 0.0 { x } else { slope * x })?);
                }
                Op::Dropout(a, mask) => {
                    let data = g.data().iter().zip(mask).map(|(x, m)| x * m).collect();
                    send(*a, Tensor::new(g.shape().to_vec(), data)?);
                }
                Op::SumOfSquares(a) => {
                    let c = 2.0 * g.item();
                    send(*a, self.value(*a).map(|x| c * x));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
