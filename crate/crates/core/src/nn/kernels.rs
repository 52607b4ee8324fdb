//! Dense kernels shared by the tape ops and tape-free inference, generic
//! over the scalar type.

use super::Real;

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 16];
    let ca = a.chunks_exact(16);
    let cb = b.chunks_exact(16);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..16 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s = T::zero();
    for v in acc {
        s += v;
    }
    for (x, y) in ra.iter().zip(rb) {
        s += *x * *y;
    }
    s
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// `out = W x (+ bias)`, `W` is `[out.len() × x.len()]` row-major.
pub fn matvec<T: Real>(w: &[T], x: &[T], bias: Option<&[T]>, out: &mut [T]) {
    let n = x.len();
    debug_assert_eq!(w.len(), out.len() * n);
    for (i, o) in out.iter_mut().enumerate() {
        let v = dot(&w[i * n..(i + 1) * n], x);
        *o = match bias {
            Some(b) => v + b[i],
            None => v,
        };
    }
}

/// `out += Wᵀ dy`
pub fn matvec_t_acc<T: Real>(w: &[T], dy: &[T], out: &mut [T]) {
    let n = out.len();
    debug_assert_eq!(w.len(), dy.len() * n);
    for (i, &g) in dy.iter().enumerate() {
        if g != T::zero() {
            axpy(g, &w[i * n..(i + 1) * n], out);
        }
    }
}

/// `dW += dy ⊗ x`
pub fn outer_acc<T: Real>(dy: &[T], x: &[T], dw: &mut [T]) {
    let n = x.len();
    debug_assert_eq!(dw.len(), dy.len() * n);
    for (i, &g) in dy.iter().enumerate() {
        if g != T::zero() {
            axpy(g, x, &mut dw[i * n..(i + 1) * n]);
        }
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub const LEAKY_SLOPE: f64 = 0.01;

/// Forward state of one LSTM run, kept for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct LstmCache<T = f32> {
    pub len: usize,
    pub hidden: usize,
    /// Post-activation gates per step, `[len × 4H]` in i, f, g, o order.
    pub gates: Vec<T>,
    /// Cell states `[len × H]`.
    pub cells: Vec<T>,
    /// Hidden states `[len × H]`.
    pub hiddens: Vec<T>,
}

/// Runs the standard LSTM recurrence from zero initial state.
/// `w_ih` is `[4H × d]`, `w_hh` is `[4H × H]`, `bias` is `[4H]`.
pub fn lstm_forward<T: Real>(
    w_ih: &[T],
    w_hh: &[T],
    bias: &[T],
    inputs: &[T],
    d: usize,
    hidden: usize,
) -> LstmCache<T> {
    let len = inputs.len() / d;
    let h4 = 4 * hidden;
    let mut cache = LstmCache {
        len,
        hidden,
        gates: vec![T::zero(); len * h4],
        cells: vec![T::zero(); len * hidden],
        hiddens: vec![T::zero(); len * hidden],
    };
    let mut z = vec![T::zero(); h4];
    let mut h_prev = vec![T::zero(); hidden];
    let mut c_prev = vec![T::zero(); hidden];
    let mut rec = vec![T::zero(); h4];
    for t in 0..len {
        matvec(w_ih, &inputs[t * d..(t + 1) * d], Some(bias), &mut z);
        matvec(w_hh, &h_prev, None, &mut rec);
        let gates = &mut cache.gates[t * h4..(t + 1) * h4];
        for k in 0..h4 {
            let pre = z[k] + rec[k];
            gates[k] = if (2 * hidden..3 * hidden).contains(&k) {
                pre.tanh()
            } else {
                sigmoid(pre)
            };
        }
        let (ig, rest) = gates.split_at(hidden);
        let (fg, rest) = rest.split_at(hidden);
        let (gg, og) = rest.split_at(hidden);
        let cells = &mut cache.cells[t * hidden..(t + 1) * hidden];
        let hs = &mut cache.hiddens[t * hidden..(t + 1) * hidden];
        for j in 0..hidden {
            let c = fg[j] * c_prev[j] + ig[j] * gg[j];
            cells[j] = c;
            hs[j] = og[j] * c.tanh();
        }
        c_prev.copy_from_slice(cells);
        h_prev.copy_from_slice(hs);
    }
    cache
}

/// Gradient buffers for [`lstm_backward`]; accumulated into, never cleared.
pub struct LstmGrads<'a, T = f32> {
    pub w_ih: &'a mut [T],
    pub w_hh: &'a mut [T],
    pub bias: &'a mut [T],
    /// `[len × d]`, or `None` when the input needs no gradient.
    pub inputs: Option<&'a mut [T]>,
}

/// Backpropagates `d_hidden` (`[len × H]`, gradient for every h_t) through
/// the recurrence.
#[allow(clippy::too_many_arguments)]
pub fn lstm_backward<T: Real>(
    cache: &LstmCache<T>,
    w_ih: &[T],
    w_hh: &[T],
    inputs: &[T],
    d: usize,
    d_hidden: &[T],
    grads: LstmGrads<'_, T>,
) {
    let hidden = cache.hidden;
    let h4 = 4 * hidden;
    let LstmGrads {
        w_ih: gw_ih,
        w_hh: gw_hh,
        bias: gb,
        inputs: mut gx,
    } = grads;
    let one = T::one();
    let mut dh_next = vec![T::zero(); hidden];
    let mut dc_next = vec![T::zero(); hidden];
    let mut dz = vec![T::zero(); h4];
    let zeros = vec![T::zero(); hidden];
    for t in (0..cache.len).rev() {
        let gates = &cache.gates[t * h4..(t + 1) * h4];
        let (ig, rest) = gates.split_at(hidden);
        let (fg, rest) = rest.split_at(hidden);
        let (gg, og) = rest.split_at(hidden);
        let c = &cache.cells[t * hidden..(t + 1) * hidden];
        let (c_prev, h_prev) = if t == 0 {
            (&zeros[..], &zeros[..])
        } else {
            (
                &cache.cells[(t - 1) * hidden..t * hidden],
                &cache.hiddens[(t - 1) * hidden..t * hidden],
            )
        };
        for j in 0..hidden {
            let dh = d_hidden[t * hidden + j] + dh_next[j];
            let tc = c[j].tanh();
            let d_o = dh * tc;
            let dc = dh * og[j] * (one - tc * tc) + dc_next[j];
            let d_i = dc * gg[j];
            let d_g = dc * ig[j];
            let d_f = dc * c_prev[j];
            dc_next[j] = dc * fg[j];
            dz[j] = d_i * ig[j] * (one - ig[j]);
            dz[hidden + j] = d_f * fg[j] * (one - fg[j]);
            dz[2 * hidden + j] = d_g * (one - gg[j] * gg[j]);
            dz[3 * hidden + j] = d_o * og[j] * (one - og[j]);
        }
        let x_t = &inputs[t * d..(t + 1) * d];
        outer_acc(&dz, x_t, gw_ih);
        if t > 0 {
            outer_acc(&dz, h_prev, gw_hh);
        }
        axpy(one, &dz, gb);
        if let Some(gx) = gx.as_deref_mut() {
            matvec_t_acc(w_ih, &dz, &mut gx[t * d..(t + 1) * d]);
        }
        dh_next.iter_mut().for_each(|v| *v = T::zero());
        if t > 0 {
            matvec_t_acc(w_hh, &dz, &mut dh_next);
        }
    }
}
