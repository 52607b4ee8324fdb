//! Small deterministic neural substrate: tensors, a reverse-mode tape, the
//! layers the advice models need, Adam, gradient clipping and weight files.

pub mod io;
pub mod kernels;
pub mod layers;
pub mod optim;
mod params;
mod tape;
mod tensor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use optim::{clip_grad_norm, grad_norm, AdamConfig, AdamState};
pub use params::{ParamId, ParamStore, Parameter};
pub use tape::{LstmParams, NodeGrads, Tape, Var};
pub use tensor::Tensor;

/// Scalar type of tensors: `f32` for models, `f64` for gradient checks.
pub trait Real:
    num_traits::Float + std::ops::AddAssign + std::ops::MulAssign + Default + std::fmt::Debug + Send + Sync + 'static
{
    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Relu,
    /// Slope 0.01 for negative inputs.
    LeakyRelu,
}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("empty sequence fed to a recurrent layer")]
    EmptySequence,
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("weight file format error: {0}")]
    Format(String),
    #[error("weight load error: {0}")]
    Load(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Registers the three tensors of an LSTM layer under `prefix`.
///
/// Weights are Uniform(±1/sqrt(fan_in)); the bias is zero except the forget
/// gate block, which starts at 1.
pub fn add_lstm(
    store: &mut ParamStore,
    prefix: &str,
    input: usize,
    hidden: usize,
    rng: &mut crate::rng::Rng,
) -> Result<LstmParams, NnError> {
    let w_ih = store.add_uniform(&format!("{prefix}.w_ih"), &[4 * hidden, input], input, rng)?;
    let w_hh = store.add_uniform(&format!("{prefix}.w_hh"), &[4 * hidden, hidden], hidden, rng)?;
    let mut b = vec![0f32; 4 * hidden];
    b[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
    let bias = store.add(&format!("{prefix}.bias"), Tensor::from_vec(b))?;
    Ok(LstmParams {
        w_ih,
        w_hh,
        bias,
        input,
        hidden,
    })
}

/// Handles of one fully connected layer.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

pub fn add_linear(
    store: &mut ParamStore,
    prefix: &str,
    input: usize,
    output: usize,
    rng: &mut crate::rng::Rng,
) -> Result<Linear, NnError> {
    let w = store.add_uniform(&format!("{prefix}.w"), &[output, input], input, rng)?;
    let b = store.add_zeros(&format!("{prefix}.b"), &[output])?;
    Ok(Linear { w, b })
}

impl Linear {
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var, act: Activation) -> Result<Var, NnError> {
        tape.linear(store, x, self.w, self.b, act)
    }

    /// Tape-free forward.
    pub fn apply<T: Real>(&self, store: &ParamStore<T>, x: &[T], act: Activation) -> Vec<T> {
        let w = store.value(self.w);
        let mut out = vec![T::zero(); w.rows()];
        kernels::matvec(w.data(), x, Some(store.value(self.b).data()), &mut out);
        act.apply(&mut out);
        out
    }
}

/// Tape-free last hidden state of an LSTM over embedded tokens.
pub fn encode_last<T: Real>(
    store: &ParamStore<T>,
    embedding: ParamId,
    lstm: LstmParams,
    ids: &[u32],
) -> Result<Vec<T>, NnError> {
    if ids.is_empty() {
        return Err(NnError::EmptySequence);
    }
    let x = layers::embedding_lookup(store.value(embedding), ids)?;
    let cache = kernels::lstm_forward(
        store.value(lstm.w_ih).data(),
        store.value(lstm.w_hh).data(),
        store.value(lstm.bias).data(),
        x.data(),
        lstm.input,
        lstm.hidden,
    );
    let h = lstm.hidden;
    Ok(cache.hiddens[(cache.len - 1) * h..].to_vec())
}
