//! Finite-difference checks of the tape's gradients, layer by layer and for
//! every full model at toy sizes.
//!
//! Checks run on `f64` casts of the parameter stores through the same
//! generic forward code the models train with, so differences measure the
//! backward rules rather than single-precision rounding. Relative error is
//! `|a - n| / max(|a|, |n|, floor)`; the floor keeps coordinates whose
//! gradient is essentially zero from turning rounding noise into huge ratios.

use serde::{Deserialize, Serialize};

use crate::advgen::{AdvgenDims, AdviceGenerator};
use crate::grounding::{grounder_vocab, Grounder, GrounderDims, GrounderKind};
use crate::lang::{CellGrid, Templates, Vocab};
use crate::nn::{add_linear, add_lstm, Activation, ParamStore, Real, Tape, Var};
use crate::predictor::{E2EPredictor, PredictorDims, PredictorKind};
use crate::rng::Rng;
use crate::world::{BoardState, Coordinate, Head};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub h: f64,
    pub floor: f64,
    /// Required relative agreement on most coordinates.
    pub tol: f64,
    /// Fraction of coordinates that must be within `tol`.
    pub quorum: f64,
    /// Bound on every coordinate.
    pub worst_tol: f64,
    /// Coordinates sampled per parameter tensor.
    pub per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-5,
            floor: 1e-6,
            tol: 1e-3,
            quorum: 0.95,
            worst_tol: 1e-2,
            per_tensor: 12,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub name: String,
    pub checked: usize,
    pub within: usize,
    pub worst: f64,
    pub worst_at: String,
}

impl GradCheck {
    pub fn fraction_within(&self) -> f64 {
        self.within as f64 / self.checked.max(1) as f64
    }

    pub fn passes(&self, cfg: &GradCheckConfig) -> bool {
        self.checked > 0 && self.fraction_within() >= cfg.quorum && self.worst <= cfg.worst_tol
    }
}

pub fn relative_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Compares backprop gradients of `loss` with central differences on sampled
/// coordinates of every parameter in `store`.
pub fn check_store<T: Real, F>(name: &str, store: &mut ParamStore<T>, cfg: &GradCheckConfig, loss: F) -> Result<GradCheck, Error>
where
    F: Fn(&ParamStore<T>, &mut Tape<T>) -> Result<Var, Error>,
{
    store.zero_grad();
    let mut tape = Tape::new();
    let l = loss(store, &mut tape)?;
    tape.backward(l, store)?;
    let mut rng = Rng::named(cfg.seed, &format!("gradcheck.{name}"));
    let eval = |s: &ParamStore<T>| -> Result<f64, Error> {
        let mut t = Tape::new();
        let v = loss(s, &mut t)?;
        Ok(t.scalar(v).f64())
    };
    let mut out = GradCheck {
        name: name.to_string(),
        checked: 0,
        within: 0,
        worst: 0.0,
        worst_at: String::new(),
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.value(id).len();
        let picks: Vec<usize> = if n <= cfg.per_tensor {
            (0..n).collect()
        } else {
            (0..cfg.per_tensor).map(|_| rng.below(n)).collect()
        };
        for i in picks {
            let analytic = store.grad(id).data()[i].f64();
            let x = store.value(id).data()[i];
            let (hi, lo) = (x + T::of(cfg.h), x - T::of(cfg.h));
            store.get_mut(id).value.data_mut()[i] = hi;
            let fp = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = lo;
            let fm = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = x;
            let numeric = (fp - fm) / (hi - lo).f64();
            let r = relative_error(analytic, numeric, cfg.floor);
            out.checked += 1;
            out.within += (r <= cfg.tol) as usize;
            if r > out.worst {
                out.worst = r;
                out.worst_at = format!("{}[{i}] analytic {analytic:.6e} numeric {numeric:.6e}", store.get(id).name);
            }
        }
    }
    Ok(out)
}

fn random_store_values(store: &mut ParamStore, rng: &mut Rng, scale: f32) {
    for p in store.iter_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v = rng.uniform_f32(-scale, scale));
    }
}

fn gold(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
}

/// One check per tape op (and activation), each on a small random graph.
pub fn layer_suite(cfg: &GradCheckConfig) -> Result<Vec<GradCheck>, Error> {
    let mut out = Vec::new();
    let mut rng = Rng::named(cfg.seed, "gradcheck.layers");
    let xin = gold(&mut rng, 5);

    for (name, act) in [
        ("linear", Activation::None),
        ("linear_relu", Activation::Relu),
        ("linear_leaky_relu", Activation::LeakyRelu),
    ] {
        let mut s = ParamStore::new();
        let fc = add_linear(&mut s, "fc", 5, 4, &mut rng)?;
        random_store_values(&mut s, &mut rng, 0.8);
        let g = gold(&mut rng, 4);
        let x = xin.clone();
        out.push(check_store(name, &mut s.cast::<f64>(), cfg, |s, t| {
            let x = t.input_vec(x.clone())?;
            let y = fc.forward(t, s, x, act)?;
            Ok(t.mse(y, &g)?)
        })?);
    }

    {
        let mut s = ParamStore::new();
        let a = add_linear(&mut s, "a", 5, 3, &mut rng)?;
        let b = add_linear(&mut s, "b", 5, 3, &mut rng)?;
        let c = add_linear(&mut s, "c", 6, 2, &mut rng)?;
        random_store_values(&mut s, &mut rng, 0.8);
        let g = gold(&mut rng, 2);
        let x = xin.clone();
        out.push(check_store("add_concat_activation", &mut s.cast::<f64>(), cfg, |s, t| {
            let x = t.input_vec(x.clone())?;
            let ya = a.forward(t, s, x, Activation::None)?;
            let yb = b.forward(t, s, x, Activation::None)?;
            let sum = t.add(&[ya, yb])?;
            let r = t.activation(sum, Activation::LeakyRelu)?;
            let cat = t.concat(&[r, yb])?;
            let y = c.forward(t, s, cat, Activation::None)?;
            Ok(t.mse(y, &g)?)
        })?);
    }

    {
        let mut s = ParamStore::new();
        let fc = add_linear(&mut s, "fc", 5, 4, &mut rng)?;
        random_store_values(&mut s, &mut rng, 0.8);
        let x = xin.clone();
        out.push(check_store("softmax_ce", &mut s.cast::<f64>(), cfg, |s, t| {
            let x = t.input_vec(x.clone())?;
            let y = fc.forward(t, s, x, Activation::None)?;
            Ok(t.softmax_ce(y, 2)?)
        })?);
        out.push(check_store("sum_scale", &mut s.cast::<f64>(), cfg, |s, t| {
            let x = t.input_vec(x.clone())?;
            let y = fc.forward(t, s, x, Activation::None)?;
            let sq = t.concat(&[y])?;
            let total = t.sum(sq)?;
            Ok(t.scale(total, 0.7)?)
        })?);
    }

    {
        let mut s = ParamStore::new();
        let table = s.add_normal("embedding", &[7, 4], 0.5, &mut rng)?;
        let lstm = add_lstm(&mut s, "lstm", 4, 5, &mut rng)?;
        random_store_values(&mut s, &mut rng, 0.6);
        let ids = [3u32, 1, 6, 3, 2];
        let g_all = gold(&mut rng, ids.len() * 5);
        out.push(check_store("embedding_lstm_all_states", &mut s.cast::<f64>(), cfg, |s, t| {
            let e = t.embedding(s, table, &ids)?;
            let hs = t.lstm(s, lstm, e)?;
            Ok(t.mse(hs, &g_all)?)
        })?);
        let g_row = gold(&mut rng, 5);
        out.push(check_store("lstm_last_row", &mut s.cast::<f64>(), cfg, |s, t| {
            let e = t.embedding(s, table, &ids)?;
            let h = t.lstm_last(s, lstm, e)?;
            let mid = t.lstm(s, lstm, e)?;
            let r = t.row(mid, 1)?;
            let both = t.add(&[h, r])?;
            Ok(t.mse(both, &g_row)?)
        })?);
    }
    Ok(out)
}

fn toy_world(rng: &mut Rng) -> BoardState {
    let blocks = (0..4)
        .map(|i| Coordinate::new(-0.8 + 0.5 * i as f64, 0.05, rng.uniform(-0.9, 0.9)))
        .collect();
    BoardState::new(blocks, 0.1).expect("toy board is valid")
}

/// Every trainable model at toy sizes, with its training loss.
pub fn model_suite(cfg: &GradCheckConfig) -> Result<Vec<GradCheck>, Error> {
    let mut out = Vec::new();
    let mut rng = Rng::named(cfg.seed, "gradcheck.models");
    let templates = Templates::builtin();
    let grid = CellGrid::default();
    let gd = GrounderDims {
        embed: 4,
        hidden: 5,
        proj: 4,
    };
    let coords = [
        Coordinate::new(-0.4, 0.3, 0.7),
        Coordinate::new(0.6, 0.8, -0.2),
        Coordinate::new(0.1, 0.5, 0.9),
    ];
    let mut frozen = Vec::new();
    for kind in [GrounderKind::Restrictive, GrounderKind::Corrective] {
        let vocab = grounder_vocab(kind, &templates, &grid);
        let ids = vec![2u32, 5, 9, 4, 7];
        let mut g = Grounder::new(kind, vocab, gd, &mut rng)?;
        random_store_values(g.store_mut(), &mut rng, 0.5);
        let golds: Vec<Vec<f64>> = coords.iter().map(|_| gold(&mut rng, 3)).collect();
        let name = kind.architecture().to_string();
        out.push(check_store(&name, &mut g.store().cast::<f64>(), cfg, |s, t| {
            let outs = g.forward_tape_with(s, t, &ids, &coords)?;
            let mut losses = Vec::new();
            for (i, o) in outs.into_iter().enumerate() {
                losses.push(match kind {
                    GrounderKind::Restrictive => t.softmax_ce(o, i % 2)?,
                    GrounderKind::Corrective => t.mse(o, &golds[i])?,
                });
            }
            Ok(t.add(&losses)?)
        })?);
        frozen.push(g.frozen_trunk()?);
    }

    let vocab = Vocab::from(["move", "the", "block", "left", "of", "one", "length"].map(String::from).to_vec());
    let ids = [2u32, 3, 4, 5, 6, 3, 1, 2];
    let world = toy_world(&mut rng);
    let pd = PredictorDims { embed: 4, hidden: 5 };
    let gs = gold(&mut rng, 3);
    let gt = gold(&mut rng, 3);
    let mut frozen = frozen.into_iter();
    let (rt, ct) = (frozen.next(), frozen.next());
    for (kind, trunk) in [
        (PredictorKind::Baseline, None),
        (PredictorKind::Restrictive, rt),
        (PredictorKind::Corrective, ct),
    ] {
        let proj = trunk.as_ref().map(|t| t.dims.proj);
        let mut m = E2EPredictor::new(kind, vocab.clone(), pd, trunk, &mut rng)?;
        random_store_values(m.store_mut(), &mut rng, 0.5);
        let advice = [proj.map(|p| gold(&mut rng, p).into_iter().map(|v| v as f32).collect()), None];
        out.push(check_store(kind.architecture(), &mut m.store().cast::<f64>(), cfg, |s, t| {
            let [a, b] = m.forward_tape_with(s, t, &ids, &world, &advice)?;
            let la = t.mse(a, &gs)?;
            let lb = t.mse(b, &gt)?;
            Ok(t.add(&[la, lb])?)
        })?);
    }

    let ad = AdvgenDims {
        embed: 4,
        hidden: 5,
        world: 3,
    };
    for head in Head::BOTH {
        let mut g = AdviceGenerator::new(head, vocab.clone(), ad, &mut rng)?;
        random_store_values(g.store_mut(), &mut rng, 0.5);
        out.push(check_store(crate::advgen::architecture(head), &mut g.store().cast::<f64>(), cfg, |s, t| {
            g.loss_tape_with(s, t, &ids, &world, 1 + head.index())
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_all_pass(checks: &[GradCheck], cfg: &GradCheckConfig) {
        for c in checks {
            eprintln!("{:<28} {:>4}/{:<4} worst {:.2e} {}", c.name, c.within, c.checked, c.worst, c.worst_at);
        }
        for c in checks {
            assert!(
                c.passes(cfg),
                "{}: {}/{} within, worst {:.3e} at {}",
                c.name,
                c.within,
                c.checked,
                c.worst,
                c.worst_at
            );
        }
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(1.0, 1.0, 1e-2), 0.0);
        assert!((relative_error(1e-6, 2e-6, 1e-2) - 1e-4).abs() < 1e-12);
        assert!((relative_error(2.0, 1.0, 1e-2) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn layers_match_finite_differences() {
        let cfg = GradCheckConfig::default();
        let checks = layer_suite(&cfg).unwrap();
        assert_eq!(checks.len(), 8);
        assert_all_pass(&checks, &cfg);
    }

    #[test]
    fn models_match_finite_differences() {
        let cfg = GradCheckConfig::default();
        let checks = model_suite(&cfg).unwrap();
        assert_eq!(checks.len(), 7);
        assert_all_pass(&checks, &cfg);
    }

    #[test]
    fn harness_detects_wrong_gradients() {
        let cfg = GradCheckConfig::default();
        let mut s = ParamStore::new();
        let fc = add_linear(&mut s, "fc", 2, 2, &mut Rng::new(0, 0)).unwrap();
        // Loss depends on the parameters through a path the tape cannot see.
        let c = check_store("hidden_path", &mut s, &cfg, |s, t| {
            let bias = s.value(fc.b).data().to_vec();
            let x = t.input_vec(bias)?;
            Ok(t.mse(x, &[1.0, -1.0])?)
        })
        .unwrap();
        assert!(!c.passes(&cfg));
    }
}
