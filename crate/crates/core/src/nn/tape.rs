//! Reverse-mode differentiation over a linear record of coarse ops.
//!
//! Each op stores its output and whatever its backward rule needs. Parameters
//! are referenced by [`ParamId`] and read from the [`ParamStore`] passed to the
//! forward call; `backward` accumulates into the same store's grad slots.

use super::kernels::{self, LstmCache, LstmGrads, LEAKY_SLOPE};
use super::{Activation, NnError, ParamId, ParamStore, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Parameter handles of one LSTM layer.
#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn ids(&self) -> [ParamId; 3] {
        [self.w_ih, self.w_hh, self.bias]
    }
}

enum Op<T> {
    Input,
    Linear {
        x: Var,
        w: ParamId,
        b: ParamId,
        act: Activation,
    },
    Add(Vec<Var>),
    Act(Var, Activation),
    Concat(Vec<Var>),
    Row { x: Var, row: usize },
    Embedding { table: ParamId, ids: Vec<u32> },
    Lstm { x: Var, p: LstmParams, cache: LstmCache<T> },
    Mse { pred: Var, gold: Vec<T> },
    SoftmaxCe { logits: Var, label: usize, probs: Vec<f64> },
    Sum(Var),
    Scale(Var, T),
}

struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
}

/// Gradients of every tape node from one backward pass.
pub struct NodeGrads<T = f32>(Vec<Option<Vec<T>>>);

impl<T> NodeGrads<T> {
    pub fn wrt(&self, v: Var) -> Option<&[T]> {
        self.0[v.0].as_deref()
    }
}

pub struct Tape<T = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self { nodes: Vec::new() }
    }
}

fn shape_err(msg: impl Into<String>) -> NnError {
    NnError::Shape(msg.into())
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, what: &str) -> Result<Var, NnError> {
        if !value.is_finite() {
            return Err(NnError::NonFinite(what.to_string()));
        }
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.data()[0]
    }

    pub fn input(&mut self, t: Tensor<T>) -> Result<Var, NnError> {
        self.push(Op::Input, t, "input")
    }

    pub fn input_vec(&mut self, data: Vec<T>) -> Result<Var, NnError> {
        self.input(Tensor::from_vec(data))
    }

    pub fn linear(
        &mut self,
        store: &ParamStore<T>,
        x: Var,
        w: ParamId,
        b: ParamId,
        act: Activation,
    ) -> Result<Var, NnError> {
        let wt = store.value(w);
        let bt = store.value(b);
        let xv = self.value(x).data();
        if wt.shape().len() != 2 || wt.shape()[1] != xv.len() || bt.len() != wt.shape()[0] {
            return Err(shape_err(format!(
                "linear {}: weight {:?}, bias {:?}, input {}",
                store.get(w).name,
                wt.shape(),
                bt.shape(),
                xv.len()
            )));
        }
        let mut out = vec![T::zero(); wt.shape()[0]];
        kernels::matvec(wt.data(), xv, Some(bt.data()), &mut out);
        act.apply(&mut out);
        self.push(Op::Linear { x, w, b, act }, Tensor::from_vec(out), "linear")
    }

    pub fn add(&mut self, terms: &[Var]) -> Result<Var, NnError> {
        let first = terms.first().ok_or_else(|| shape_err("add of nothing"))?;
        let shape = self.value(*first).shape().to_vec();
        let mut out = vec![T::zero(); self.value(*first).len()];
        for &t in terms {
            let v = self.value(t);
            if v.shape() != shape.as_slice() {
                return Err(shape_err(format!("add {:?} + {:?}", shape, v.shape())));
            }
            kernels::axpy(T::one(), v.data(), &mut out);
        }
        self.push(Op::Add(terms.to_vec()), Tensor::new(shape, out)?, "add")
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Result<Var, NnError> {
        let mut v = self.value(x).clone();
        act.apply(v.data_mut());
        self.push(Op::Act(x, act), v, "activation")
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        self.push(Op::Concat(parts.to_vec()), Tensor::from_vec(out), "concat")
    }

    /// Row `row` of a rank-2 node as a vector.
    pub fn row(&mut self, x: Var, row: usize) -> Result<Var, NnError> {
        let t = self.value(x);
        if row >= t.rows() {
            return Err(NnError::Index(format!("row {row} of {:?}", t.shape())));
        }
        let r = t.row(row).to_vec();
        self.push(Op::Row { x, row }, Tensor::from_vec(r), "row")
    }

    pub fn embedding(
        &mut self,
        store: &ParamStore<T>,
        table: ParamId,
        ids: &[u32],
    ) -> Result<Var, NnError> {
        let out = super::layers::embedding_lookup(store.value(table), ids)?;
        self.push(
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            out,
            "embedding",
        )
    }

    /// All hidden states `[len × H]` of an LSTM over the rows of `x`.
    pub fn lstm(&mut self, store: &ParamStore<T>, p: LstmParams, x: Var) -> Result<Var, NnError> {
        let xt = self.value(x);
        if xt.shape().len() != 2 || xt.cols() != p.input {
            return Err(shape_err(format!(
                "lstm expects [len × {}], got {:?}",
                p.input,
                xt.shape()
            )));
        }
        if xt.rows() == 0 {
            return Err(NnError::EmptySequence);
        }
        let cache = kernels::lstm_forward(
            store.value(p.w_ih).data(),
            store.value(p.w_hh).data(),
            store.value(p.bias).data(),
            xt.data(),
            p.input,
            p.hidden,
        );
        let out = Tensor::new(vec![cache.len, p.hidden], cache.hiddens.clone())?;
        self.push(Op::Lstm { x, p, cache }, out, "lstm")
    }

    /// Last hidden state of an LSTM run.
    pub fn lstm_last(&mut self, store: &ParamStore<T>, p: LstmParams, x: Var) -> Result<Var, NnError> {
        let hs = self.lstm(store, p, x)?;
        let last = self.value(hs).rows() - 1;
        self.row(hs, last)
    }

    pub fn mse(&mut self, pred: Var, gold: &[T]) -> Result<Var, NnError> {
        let loss = super::layers::mse(self.value(pred).data(), gold)?;
        self.push(
            Op::Mse {
                pred,
                gold: gold.to_vec(),
            },
            Tensor::scalar(loss),
            "mse",
        )
    }

    pub fn softmax_ce(&mut self, logits: Var, label: usize) -> Result<Var, NnError> {
        let l = self.value(logits).data();
        let (loss, probs) = super::layers::softmax_ce_with_probs(l, label)?;
        self.push(
            Op::SoftmaxCe {
                logits,
                label,
                probs,
            },
            Tensor::scalar(T::of(loss)),
            "softmax_ce",
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, NnError> {
        let s: f64 = self.value(x).data().iter().map(|&v| v.f64()).sum();
        self.push(Op::Sum(x), Tensor::scalar(T::of(s)), "sum")
    }

    pub fn scale(&mut self, x: Var, k: T) -> Result<Var, NnError> {
        let mut v = self.value(x).clone();
        v.data_mut().iter_mut().for_each(|e| *e *= k);
        self.push(Op::Scale(x, k), v, "scale")
    }

    /// Accumulates `d loss / d param` into `store` for every parameter the
    /// loss depends on. Parameters not reached keep their grads untouched.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<NodeGrads<T>, NnError> {
        if self.value(loss).len() != 1 {
            return Err(NnError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            // Inputs of a node always sit at lower indices.
            let (lower, _) = grads.split_at_mut(idx);
            self.backprop_node(&self.nodes[idx], &g, lower, store);
            grads[idx] = Some(g);
        }
        Ok(NodeGrads(grads))
    }

    fn backprop_node(
        &self,
        node: &Node<T>,
        g: &[T],
        lower: &mut [Option<Vec<T>>],
        store: &mut ParamStore<T>,
    ) {
        fn slot<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
            grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
        }
        let one = T::one();
        match &node.op {
            Op::Input => {}
            Op::Linear { x, w, b, act } => {
                let out = node.value.data();
                let dz: Vec<T> = g
                    .iter()
                    .zip(out)
                    .map(|(&gi, &o)| gi * act.derivative_from_output(o))
                    .collect();
                let xv = self.value(*x).data();
                kernels::outer_acc(&dz, xv, store.get_mut(*w).grad.data_mut());
                kernels::axpy(one, &dz, store.get_mut(*b).grad.data_mut());
                kernels::matvec_t_acc(store.value(*w).data(), &dz, slot(lower, *x, xv.len()));
            }
            Op::Add(terms) => {
                for &t in terms {
                    kernels::axpy(one, g, slot(lower, t, g.len()));
                }
            }
            Op::Act(x, act) => {
                let out = node.value.data();
                let gx = slot(lower, *x, g.len());
                for i in 0..g.len() {
                    gx[i] += g[i] * act.derivative_from_output(out[i]);
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    kernels::axpy(one, &g[off..off + n], slot(lower, p, n));
                    off += n;
                }
            }
            Op::Row { x, row } => {
                let t = self.value(*x);
                let c = t.cols();
                let gx = slot(lower, *x, t.len());
                kernels::axpy(one, g, &mut gx[row * c..(row + 1) * c]);
            }
            Op::Embedding { table, ids } => {
                let gt = store.get_mut(*table).grad.data_mut();
                let d = g.len() / ids.len().max(1);
                for (i, &id) in ids.iter().enumerate() {
                    let id = id as usize;
                    kernels::axpy(one, &g[i * d..(i + 1) * d], &mut gt[id * d..(id + 1) * d]);
                }
            }
            Op::Lstm { x, p, cache } => {
                let xv = self.value(*x).data();
                let mut gw_ih = vec![T::zero(); store.value(p.w_ih).len()];
                let mut gw_hh = vec![T::zero(); store.value(p.w_hh).len()];
                let mut gb = vec![T::zero(); store.value(p.bias).len()];
                kernels::lstm_backward(
                    cache,
                    store.value(p.w_ih).data(),
                    store.value(p.w_hh).data(),
                    xv,
                    p.input,
                    g,
                    LstmGrads {
                        w_ih: &mut gw_ih,
                        w_hh: &mut gw_hh,
                        bias: &mut gb,
                        inputs: Some(slot(lower, *x, xv.len())),
                    },
                );
                kernels::axpy(one, &gw_ih, store.get_mut(p.w_ih).grad.data_mut());
                kernels::axpy(one, &gw_hh, store.get_mut(p.w_hh).grad.data_mut());
                kernels::axpy(one, &gb, store.get_mut(p.bias).grad.data_mut());
            }
            Op::Mse { pred, gold } => {
                let pv = self.value(*pred).data();
                let k = T::of(2.0) * g[0] / T::of(pv.len() as f64);
                let gx = slot(lower, *pred, pv.len());
                for i in 0..pv.len() {
                    gx[i] += k * (pv[i] - gold[i]);
                }
            }
            Op::SoftmaxCe {
                logits,
                label,
                probs,
            } => {
                let gx = slot(lower, *logits, probs.len());
                for (i, &p) in probs.iter().enumerate() {
                    let target = if i == *label { 1.0 } else { 0.0 };
                    gx[i] += g[0] * T::of(p - target);
                }
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                slot(lower, *x, n).iter_mut().for_each(|v| *v += g[0]);
            }
            Op::Scale(x, k) => {
                kernels::axpy(*k, g, slot(lower, *x, g.len()));
            }
        }
    }
}

impl Activation {
    pub fn apply<T: Real>(self, v: &mut [T]) {
        match self {
            Activation::None => {}
            Activation::Relu => v.iter_mut().for_each(|x| *x = x.max(T::zero())),
            Activation::LeakyRelu => {
                let slope = T::of(LEAKY_SLOPE);
                v.iter_mut().for_each(|x| {
                    if *x < T::zero() {
                        *x *= slope
                    }
                })
            }
        }
    }

    /// Derivative expressed through the output; valid because both rectifiers
    /// preserve the sign of their input.
    fn derivative_from_output<T: Real>(self, out: T) -> T {
        match self {
            Activation::None => T::one(),
            Activation::Relu if out > T::zero() => T::one(),
            Activation::Relu => T::zero(),
            Activation::LeakyRelu if out > T::zero() => T::one(),
            Activation::LeakyRelu => T::of(LEAKY_SLOPE),
        }
    }
}
