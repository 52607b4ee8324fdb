//! Tape-free layer functions. The tape ops call into these for their forward
//! values, and trained models use them directly for inference.

use super::kernels;
use super::{Activation, NnError, Real, Tensor};

pub fn fc_forward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    activation: Activation,
) -> Result<Tensor<T>, NnError> {
    let ws = weight.shape();
    if ws.len() != 2 || ws[1] != input.len() || bias.len() != ws[0] {
        return Err(NnError::Shape(format!(
            "fc: weight {:?}, bias {:?}, input {:?}",
            ws,
            bias.shape(),
            input.shape()
        )));
    }
    let mut out = vec![T::zero(); ws[0]];
    kernels::matvec(weight.data(), input.data(), Some(bias.data()), &mut out);
    activation.apply(&mut out);
    Ok(Tensor::from_vec(out))
}

/// Rows of `table` selected by `ids`, as a `[len × d]` tensor.
pub fn embedding_lookup<T: Real>(table: &Tensor<T>, ids: &[u32]) -> Result<Tensor<T>, NnError> {
    if table.shape().len() != 2 {
        return Err(NnError::Shape(format!("embedding table {:?}", table.shape())));
    }
    let (v, d) = (table.shape()[0], table.shape()[1]);
    let mut out = Vec::with_capacity(ids.len() * d);
    for &id in ids {
        let id = id as usize;
        if id >= v {
            return Err(NnError::Index(format!("token id {id} outside vocabulary of {v}")));
        }
        out.extend_from_slice(table.row(id));
    }
    Tensor::new(vec![ids.len(), d], out)
}

/// Weights of one LSTM layer (gate order i, f, g, o).
pub struct LstmWeights<'a, T = f32> {
    pub w_ih: &'a Tensor<T>,
    pub w_hh: &'a Tensor<T>,
    pub bias: &'a Tensor<T>,
}

pub struct LstmOutput<T = f32> {
    /// `[len × H]`
    pub hidden: Tensor<T>,
    /// `[len × H]`
    pub cells: Tensor<T>,
}

pub fn lstm_forward<T: Real>(w: &LstmWeights<'_, T>, inputs: &Tensor<T>) -> Result<LstmOutput<T>, NnError> {
    let h4 = w.w_ih.rows();
    if h4 == 0 || !h4.is_multiple_of(4) {
        return Err(NnError::Shape(format!("lstm w_ih {:?}", w.w_ih.shape())));
    }
    let hidden = h4 / 4;
    let d = w.w_ih.cols();
    if w.w_hh.shape() != [h4, hidden] || w.bias.len() != h4 {
        return Err(NnError::Shape(format!(
            "lstm w_hh {:?}, bias {:?}",
            w.w_hh.shape(),
            w.bias.shape()
        )));
    }
    if inputs.shape().len() != 2 || inputs.cols() != d {
        return Err(NnError::Shape(format!(
            "lstm input {:?}, expected [len × {d}]",
            inputs.shape()
        )));
    }
    if inputs.rows() == 0 {
        return Err(NnError::EmptySequence);
    }
    let cache = kernels::lstm_forward(
        w.w_ih.data(),
        w.w_hh.data(),
        w.bias.data(),
        inputs.data(),
        d,
        hidden,
    );
    let len = cache.len;
    Ok(LstmOutput {
        hidden: Tensor::new(vec![len, hidden], cache.hiddens)?,
        cells: Tensor::new(vec![len, hidden], cache.cells)?,
    })
}

/// Loss and the softmax distribution, both at 64-bit precision.
pub fn softmax_ce_with_probs<T: Real>(logits: &[T], label: usize) -> Result<(f64, Vec<f64>), NnError> {
    if logits.len() < 2 {
        return Err(NnError::Shape(format!(
            "softmax needs at least 2 logits, got {}",
            logits.len()
        )));
    }
    if label >= logits.len() {
        return Err(NnError::Index(format!(
            "label {label} for {} classes",
            logits.len()
        )));
    }
    let probs = softmax(logits);
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v.f64()));
    let lse = max + logits.iter().map(|&v| (v.f64() - max).exp()).sum::<f64>().ln();
    Ok((lse - logits[label].f64(), probs))
}

pub fn softmax<T: Real>(logits: &[T]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v.f64()));
    let exps: Vec<f64> = logits.iter().map(|&v| (v.f64() - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, label: usize) -> Result<T, NnError> {
    softmax_ce_with_probs(logits.data(), label).map(|(l, _)| T::of(l))
}

pub fn mse<T: Real>(pred: &[T], gold: &[T]) -> Result<T, NnError> {
    if pred.len() != gold.len() || pred.is_empty() {
        return Err(NnError::Shape(format!(
            "mse of {} vs {} values",
            pred.len(),
            gold.len()
        )));
    }
    let s: f64 = pred
        .iter()
        .zip(gold)
        .map(|(&p, &g)| {
            let d = p.f64() - g.f64();
            d * d
        })
        .sum();
    Ok(T::of(s / pred.len() as f64))
}

pub fn mse_loss<T: Real>(pred: &Tensor<T>, gold: &Tensor<T>) -> Result<T, NnError> {
    if pred.shape() != gold.shape() {
        return Err(NnError::Shape(format!(
            "mse {:?} vs {:?}",
            pred.shape(),
            gold.shape()
        )));
    }
    mse(pred.data(), gold.data())
}
