//! The end-to-end coordinate predictor.
//!
//! ```text
//! h     = LSTM(embed(instruction))_n                      256
//! w     = relu(FC_world(board[60]))                       256
//! a_k   = relu(FC_adv(trunk(advice_k)))  or nothing       256   (k = source, target)
//! out_k = FC_k(relu(FC_trunk(h + w + a_k)))               3
//! ```
//!
//! `trunk` is a frozen copy of a pretrained grounder's embedding, LSTM and
//! sentence projection. Null advice leaves `a_k` out of the sum entirely.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::Example;
use crate::grounding::{vocab_and_dims, FrozenTrunk, GrounderKind};
use crate::lang::{
    render_centered, render_corrective, render_restrictive, render_union, tokenize, AdviceSentence, CellGrid,
    NamedRegion, TemplateSet, Vocab,
};
use crate::nn::{
    add_linear, add_lstm, clip_grad_norm, io, Activation, AdamConfig, AdamState, Linear, LstmParams, ParamId,
    ParamStore, Real, Tape, Var,
};
use crate::rng::Rng;
use crate::world::{centered_region, direction_of, quadrant_of, BoardState, Coordinate, Head, Quadrant, QUADRANT_SIDE};
use crate::Error;

pub const BASELINE_ARCH: &str = "e2e.baseline.v1";
pub const RESTRICTIVE_ARCH: &str = "e2e.restrictive.v1";
pub const CORRECTIVE_ARCH: &str = "e2e.corrective.v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Baseline,
    Restrictive,
    Corrective,
}

impl PredictorKind {
    pub fn architecture(self) -> &'static str {
        match self {
            PredictorKind::Baseline => BASELINE_ARCH,
            PredictorKind::Restrictive => RESTRICTIVE_ARCH,
            PredictorKind::Corrective => CORRECTIVE_ARCH,
        }
    }

    pub fn grounder(self) -> Option<GrounderKind> {
        match self {
            PredictorKind::Baseline => None,
            PredictorKind::Restrictive => Some(GrounderKind::Restrictive),
            PredictorKind::Corrective => Some(GrounderKind::Corrective),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorDims {
    pub embed: usize,
    pub hidden: usize,
}

impl Default for PredictorDims {
    fn default() -> Self {
        Self { embed: 100, hidden: 256 }
    }
}

/// Advice for each head; `None` is null advice.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HeadAdvice {
    pub source: Option<AdviceSentence>,
    pub target: Option<AdviceSentence>,
}

impl HeadAdvice {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn get(&self, head: Head) -> Option<&AdviceSentence> {
        match head {
            Head::Source => self.source.as_ref(),
            Head::Target => self.target.as_ref(),
        }
    }

    pub fn set(&mut self, head: Head, s: Option<AdviceSentence>) {
        let s = s.filter(|s| !s.is_null());
        match head {
            Head::Source => self.source = s,
            Head::Target => self.target = s,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_none() && self.target.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub source: Coordinate,
    pub target: Coordinate,
    #[serde(default, skip_serializing_if = "HeadAdvice::is_empty")]
    pub advice: HeadAdvice,
}

impl Prediction {
    pub fn get(&self, head: Head) -> Coordinate {
        match head {
            Head::Source => self.source,
            Head::Target => self.target,
        }
    }
}

/// Encoded advice per head, as fed to the fusion sums.
pub type AdviceVecs = [Option<Vec<f32>>; 2];

#[derive(Clone, Debug)]
pub struct E2EPredictor {
    pub kind: PredictorKind,
    pub vocab: Vocab,
    pub dims: PredictorDims,
    store: ParamStore,
    embedding: ParamId,
    lstm: LstmParams,
    world_fc: Linear,
    advice_fc: Option<Linear>,
    trunk_fc: Linear,
    heads: [Linear; 2],
    frozen: Option<FrozenTrunk>,
}

/// Instruction vocabulary from training instructions only.
pub fn instruction_vocab(train: &[Example]) -> Vocab {
    Vocab::build(train.iter().map(|e| e.instruction.as_str()))
}

impl E2EPredictor {
    pub fn new(
        kind: PredictorKind,
        vocab: Vocab,
        dims: PredictorDims,
        frozen: Option<FrozenTrunk>,
        rng: &mut Rng,
    ) -> Result<Self, Error> {
        if kind.grounder() != frozen.as_ref().map(|f| f.kind) {
            return Err(Error::Contract(format!(
                "{kind:?} predictor needs a {:?} advice trunk",
                kind.grounder()
            )));
        }
        let mut store = ParamStore::new();
        let h = dims.hidden;
        let embedding = store.add_normal("instr.embedding", &[vocab.len(), dims.embed], 0.1, rng)?;
        let lstm = add_lstm(&mut store, "instr.lstm", dims.embed, h, rng)?;
        let world_fc = add_linear(&mut store, "world.fc", crate::world::MAX_BLOCKS * 3, h, rng)?;
        let advice_fc = match &frozen {
            Some(f) => Some(add_linear(&mut store, "advice.fc", f.proj(), h, rng)?),
            None => None,
        };
        let trunk_fc = add_linear(&mut store, "fusion.fc", h, h, rng)?;
        let heads = [
            add_linear(&mut store, "head.source", h, 3, rng)?,
            add_linear(&mut store, "head.target", h, 3, rng)?,
        ];
        Ok(Self {
            kind,
            vocab,
            dims,
            store,
            embedding,
            lstm,
            world_fc,
            advice_fc,
            trunk_fc,
            heads,
            frozen,
        })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn frozen(&self) -> Option<&FrozenTrunk> {
        self.frozen.as_ref()
    }

    /// Fingerprint of the frozen advice trunk, if any.
    pub fn trunk_fingerprint(&self) -> Option<u64> {
        self.frozen.as_ref().map(FrozenTrunk::fingerprint)
    }

    pub fn lstm_ids(&self) -> Vec<ParamId> {
        self.lstm.ids().to_vec()
    }

    pub fn tokenize_instruction(&self, text: &str) -> Result<Vec<u32>, Error> {
        Ok(tokenize(text, &self.vocab)?)
    }

    pub fn encode_advice(&self, s: Option<&AdviceSentence>) -> Result<Option<Vec<f32>>, Error> {
        match s {
            None => Ok(None),
            Some(s) if s.is_null() => Ok(None),
            Some(s) => {
                let f = self
                    .frozen
                    .as_ref()
                    .ok_or_else(|| Error::Contract(format!("{:?} predictor takes no advice", self.kind)))?;
                Ok(Some(f.encode_text(&s.text)?))
            }
        }
    }

    pub fn encode_head_advice(&self, a: &HeadAdvice) -> Result<AdviceVecs, Error> {
        Ok([self.encode_advice(a.source.as_ref())?, self.encode_advice(a.target.as_ref())?])
    }

    /// Tape-free forward pass.
    pub fn forward(&self, ids: &[u32], world: &BoardState, advice: &AdviceVecs) -> Result<[Coordinate; 2], Error> {
        let s = &self.store;
        let h = crate::nn::encode_last(s, self.embedding, self.lstm, ids)?;
        let w = self.world_fc.apply(s, &world.encode(), Activation::Relu);
        let mut out = [Coordinate::default(); 2];
        for head in Head::BOTH {
            let mut f = h.clone();
            f.iter_mut().zip(&w).for_each(|(a, b)| *a += b);
            if let Some(v) = &advice[head.index()] {
                let fc = self.advice_fc.expect("advice requires an advice branch");
                let a = fc.apply(s, v, Activation::Relu);
                f.iter_mut().zip(&a).for_each(|(x, y)| *x += y);
            }
            let t = self.trunk_fc.apply(s, &f, Activation::Relu);
            out[head.index()] = Coordinate::from_f32(&self.heads[head.index()].apply(s, &t, Activation::None));
        }
        Ok(out)
    }

    pub(crate) fn forward_tape(
        &self,
        tape: &mut Tape,
        ids: &[u32],
        world: &BoardState,
        advice: &AdviceVecs,
    ) -> Result<[Var; 2], Error> {
        self.forward_tape_with(&self.store, tape, ids, world, advice)
    }

    /// [`Self::forward_tape`] reading parameters from a store with this
    /// model's layout.
    pub(crate) fn forward_tape_with<T: Real>(
        &self,
        s: &ParamStore<T>,
        tape: &mut Tape<T>,
        ids: &[u32],
        world: &BoardState,
        advice: &AdviceVecs,
    ) -> Result<[Var; 2], Error> {
        let e = tape.embedding(s, self.embedding, ids)?;
        let h = tape.lstm_last(s, self.lstm, e)?;
        let wx = tape.input_vec(world.encode().into_iter().map(|v| T::of(f64::from(v))).collect())?;
        let w = self.world_fc.forward(tape, s, wx, Activation::Relu)?;
        let mut outs = Vec::with_capacity(2);
        for head in Head::BOTH {
            let mut terms = vec![h, w];
            if let Some(v) = &advice[head.index()] {
                let fc = self.advice_fc.expect("advice requires an advice branch");
                let x = tape.input_vec(v.iter().map(|&a| T::of(f64::from(a))).collect())?;
                terms.push(fc.forward(tape, s, x, Activation::Relu)?);
            }
            let f = tape.add(&terms)?;
            let t = self.trunk_fc.forward(tape, s, f, Activation::Relu)?;
            outs.push(self.heads[head.index()].forward(tape, s, t, Activation::None)?);
        }
        Ok([outs[0], outs[1]])
    }

    pub fn predict(&self, instruction: &str, world: &BoardState, advice: &HeadAdvice) -> Result<Prediction, Error> {
        let ids = self.tokenize_instruction(instruction)?;
        let vecs = self.encode_head_advice(advice)?;
        let [source, target] = self.forward(&ids, world, &vecs)?;
        Ok(Prediction {
            source,
            target,
            advice: advice.clone(),
        })
    }

    pub fn meta(&self, seed: u64, training: serde_json::Value) -> io::WeightMeta {
        let mut vocab = BTreeMap::new();
        vocab.insert("instruction".to_string(), self.vocab.tokens().to_vec());
        let mut hyper = json!({ "dims": self.dims, "training": training });
        if let Some(f) = &self.frozen {
            vocab.insert("advice".to_string(), f.vocab.tokens().to_vec());
            hyper["advice_dims"] = json!(f.dims);
        }
        io::WeightMeta {
            architecture: self.kind.architecture().to_string(),
            hyperparameters: hyper,
            vocab,
            seed,
        }
    }

    pub fn save(&self, path: &Path, meta: &io::WeightMeta) -> Result<(), Error> {
        let mut stores = vec![&self.store];
        if let Some(f) = &self.frozen {
            stores.push(f.store());
        }
        Ok(io::save_stores(&stores, path, meta)?)
    }

    pub fn load(path: &Path, kind: PredictorKind) -> Result<(Self, io::WeightMeta), Error> {
        let meta = io::read_meta(path)?;
        let tokens = meta
            .vocab
            .get("instruction")
            .ok_or_else(|| Error::Contract("sidecar has no instruction vocabulary".into()))?;
        let vocab = Vocab::from(tokens.clone());
        vocab.check()?;
        let dims: PredictorDims = serde_json::from_value(meta.hyperparameters["dims"].clone())
            .map_err(|e| Error::Contract(format!("sidecar dims: {e}")))?;
        let frozen = match kind.grounder() {
            None => None,
            Some(gk) => {
                let mut m = meta.clone();
                m.hyperparameters["dims"] = meta.hyperparameters["advice_dims"].clone();
                let (avocab, adims) = vocab_and_dims(&m)?;
                Some(FrozenTrunk::skeleton(gk, avocab, adims)?)
            }
        };
        let mut p = E2EPredictor::new(kind, vocab, dims, frozen, &mut Rng::new(0, 0))?;
        {
            let E2EPredictor { store, frozen, .. } = &mut p;
            let mut stores: Vec<&mut ParamStore> = vec![store];
            if let Some(f) = frozen.as_mut() {
                stores.push(f.store_mut_for_load());
            }
            io::load_stores(&mut stores, path, kind.architecture())?;
        }
        Ok((p, meta))
    }
}

// ---- training ----

/// Relative weights of the restrictive advice forms used in training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestrictiveMix {
    pub quadrant: f64,
    pub union: f64,
    pub centered: f64,
}

impl Default for RestrictiveMix {
    fn default() -> Self {
        Self {
            quadrant: 0.5,
            union: 0.25,
            centered: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Second-iteration epochs of corrective training.
    pub iter2_epochs: usize,
    pub batch: usize,
    pub lr: f32,
    pub clip: f32,
    pub mix: RestrictiveMix,
    pub dims: PredictorDims,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            iter2_epochs: 5,
            batch: 32,
            lr: 1e-3,
            clip: 5.0,
            mix: RestrictiveMix::default(),
            dims: PredictorDims::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean per-example loss of each epoch, in order.
    pub epoch_losses: Vec<f32>,
    /// Examples that received advice in each epoch.
    pub advised: Vec<usize>,
}

struct Trainer<'a> {
    adam: AdamState,
    cfg: &'a TrainConfig,
    lstm_ids: Vec<ParamId>,
    ids: Vec<Vec<u32>>,
}

impl<'a> Trainer<'a> {
    fn new(m: &E2EPredictor, data: &[Example], cfg: &'a TrainConfig) -> Result<Self, Error> {
        if data.is_empty() || cfg.batch == 0 {
            return Err(Error::Contract("training needs examples and a positive batch".into()));
        }
        let ids = data
            .iter()
            .map(|e| m.tokenize_instruction(&e.instruction))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            adam: AdamState::new(&m.store, AdamConfig::with_lr(cfg.lr)),
            cfg,
            lstm_ids: m.lstm_ids(),
            ids,
        })
    }

    /// One pass over `order`; returns the mean per-example loss.
    fn epoch(
        &mut self,
        m: &mut E2EPredictor,
        data: &[Example],
        order: &[usize],
        advice: &[AdviceVecs],
        label: &str,
    ) -> Result<f32, Error> {
        let mut total = 0f64;
        for chunk in order.chunks(self.cfg.batch) {
            m.store.zero_grad();
            for &i in chunk {
                let e = &data[i];
                let mut tape = Tape::new();
                let [s, t] = m.forward_tape(&mut tape, &self.ids[i], &e.world, &advice[i])?;
                let ls = tape.mse(s, &e.gold_source().to_f32())?;
                let lt = tape.mse(t, &e.target.to_f32())?;
                let loss = tape.add(&[ls, lt])?;
                total += f64::from(tape.scalar(loss));
                tape.backward(loss, &mut m.store)?;
            }
            m.store.scale_grads(1.0 / chunk.len() as f32);
            clip_grad_norm(&mut m.store, &self.lstm_ids, self.cfg.clip);
            self.adam.step(&mut m.store);
        }
        let mean = total / order.len() as f64;
        if !mean.is_finite() || !m.store.all_finite() {
            return Err(Error::Diverged(label.to_string()));
        }
        Ok(mean as f32)
    }
}

fn no_advice(n: usize) -> Vec<AdviceVecs> {
    vec![[None, None]; n]
}

/// Plain two-head regression with no advice.
pub fn train_baseline(m: &mut E2EPredictor, data: &[Example], cfg: &TrainConfig) -> Result<TrainLog, Error> {
    let root = Rng::named(cfg.seed, "train.baseline");
    let mut tr = Trainer::new(m, data, cfg)?;
    let advice = no_advice(data.len());
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let order = root.fork(&format!("epoch.{epoch}")).permutation(data.len());
        log.epoch_losses.push(tr.epoch(m, data, &order, &advice, &format!("baseline epoch {epoch}"))?);
        log.advised.push(0);
    }
    Ok(log)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestrictiveForm {
    Quadrant,
    Union,
    Centered,
}

/// Truthful restrictive advice about `gold` in the given form.
pub fn gold_region_advice(
    head: Head,
    gold: &Coordinate,
    form: RestrictiveForm,
    ts: &TemplateSet,
    grid: &CellGrid,
    rng: &mut Rng,
) -> AdviceSentence {
    let q = quadrant_of(gold);
    match form {
        RestrictiveForm::Quadrant => render_restrictive(head, NamedRegion::Quadrant(q), ts, rng),
        RestrictiveForm::Union => {
            let others: Vec<Quadrant> = Quadrant::ALL.into_iter().filter(|&o| o != q).collect();
            let other = others[rng.below(others.len())];
            render_union(head, q, other, ts, rng).expect("distinct quadrants")
        }
        RestrictiveForm::Centered => {
            let jitter = 0.75 * QUADRANT_SIDE / 2.0;
            let c = Coordinate::new(
                (gold.x + rng.uniform(-jitter, jitter)).clamp(-1.0, 1.0),
                gold.y,
                (gold.z + rng.uniform(-jitter, jitter)).clamp(-1.0, 1.0),
            );
            let s = render_centered(head, &centered_region(&c, QUADRANT_SIDE), grid, ts, rng);
            match s.meaning.as_ref().and_then(|m| m.contains(gold)) {
                Some(true) => s,
                _ => render_restrictive(head, NamedRegion::Quadrant(q), ts, rng),
            }
        }
    }
}

fn pick_form(mix: &RestrictiveMix, rng: &mut Rng) -> RestrictiveForm {
    let u = rng.uniform(0.0, mix.quadrant + mix.union + mix.centered);
    if u < mix.quadrant {
        RestrictiveForm::Quadrant
    } else if u < mix.quadrant + mix.union {
        RestrictiveForm::Union
    } else {
        RestrictiveForm::Centered
    }
}

/// Sentence → trunk vector cache; valid because the trunk never changes.
struct AdviceCache<'m> {
    m: &'m FrozenTrunk,
    map: HashMap<String, Vec<f32>>,
}

impl<'m> AdviceCache<'m> {
    fn get(&mut self, s: &AdviceSentence) -> Result<Vec<f32>, Error> {
        if let Some(v) = self.map.get(&s.text) {
            return Ok(v.clone());
        }
        let v = self.m.encode_text(&s.text)?;
        self.map.insert(s.text.clone(), v.clone());
        Ok(v)
    }
}

/// Each epoch a fresh random half (`⌊N/2⌋`) of the examples gets truthful
/// region advice for both heads; the rest get null advice.
pub fn train_restrictive_e2e(
    m: &mut E2EPredictor,
    data: &[Example],
    ts: &TemplateSet,
    grid: &CellGrid,
    cfg: &TrainConfig,
) -> Result<TrainLog, Error> {
    if m.kind != PredictorKind::Restrictive {
        return Err(Error::Contract("restrictive training needs a restrictive predictor".into()));
    }
    let frozen = m.frozen.clone().expect("restrictive predictor has a trunk");
    let mut cache = AdviceCache {
        m: &frozen,
        map: HashMap::new(),
    };
    let root = Rng::named(cfg.seed, "train.restrictive");
    let mut tr = Trainer::new(m, data, cfg)?;
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let mut rng = root.fork(&format!("epoch.{epoch}"));
        let chosen = advised_half(data.len(), &mut rng);
        let mut advice = no_advice(data.len());
        for &i in &chosen {
            for head in Head::BOTH {
                let form = pick_form(&cfg.mix, &mut rng);
                let s = gold_region_advice(head, &data[i].gold(head), form, ts, grid, &mut rng);
                advice[i][head.index()] = Some(cache.get(&s)?);
            }
        }
        let order = rng.permutation(data.len());
        log.epoch_losses.push(tr.epoch(m, data, &order, &advice, &format!("restrictive epoch {epoch}"))?);
        log.advised.push(chosen.len());
    }
    Ok(log)
}

/// Indices of a uniformly random subset of size `⌊n/2⌋`.
pub fn advised_half(n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut p = rng.permutation(n);
    p.truncate(n / 2);
    p.sort_unstable();
    p
}

/// Iteration 1 trains the plain regression; iteration 2 re-predicts every
/// example without advice each epoch and trains on direction advice derived
/// from that prediction.
pub fn train_corrective_e2e(
    m: &mut E2EPredictor,
    data: &[Example],
    ts: &TemplateSet,
    cfg: &TrainConfig,
) -> Result<TrainLog, Error> {
    if m.kind != PredictorKind::Corrective {
        return Err(Error::Contract("corrective training needs a corrective predictor".into()));
    }
    let log = train_baseline(m, data, cfg)?;
    corrective_iteration2(m, data, ts, cfg, log)
}

/// Corrective training with iteration 1 taken from an already trained
/// baseline: every shared tensor is copied, the advice branch keeps its
/// initialization, and only iteration 2 runs.
pub fn train_corrective_from_baseline(
    m: &mut E2EPredictor,
    baseline: &E2EPredictor,
    data: &[Example],
    ts: &TemplateSet,
    cfg: &TrainConfig,
) -> Result<TrainLog, Error> {
    if m.kind != PredictorKind::Corrective || baseline.kind != PredictorKind::Baseline {
        return Err(Error::Contract("warm start needs a corrective model and a baseline".into()));
    }
    if m.vocab != baseline.vocab || m.dims != baseline.dims {
        return Err(Error::Contract("baseline vocabulary or dims differ".into()));
    }
    m.store.copy_matching(&baseline.store)?;
    corrective_iteration2(m, data, ts, cfg, TrainLog::default())
}

fn corrective_iteration2(
    m: &mut E2EPredictor,
    data: &[Example],
    ts: &TemplateSet,
    cfg: &TrainConfig,
    mut log: TrainLog,
) -> Result<TrainLog, Error> {
    let frozen = m.frozen.clone().expect("corrective predictor has a trunk");
    let mut cache = AdviceCache {
        m: &frozen,
        map: HashMap::new(),
    };
    let root = Rng::named(cfg.seed, "train.corrective");
    let mut tr = Trainer::new(m, data, cfg)?;
    let none = [None, None];
    for epoch in 0..cfg.iter2_epochs {
        let mut rng = root.fork(&format!("epoch.{epoch}"));
        let mut advice = no_advice(data.len());
        let mut advised = 0;
        for (i, e) in data.iter().enumerate() {
            let pred = m.forward(&tr.ids[i], &e.world, &none)?;
            let mut any = false;
            for head in Head::BOTH {
                if let Ok(d) = direction_of(&pred[head.index()], &e.gold(head)) {
                    let s = render_corrective(d, ts, &mut rng);
                    advice[i][head.index()] = Some(cache.get(&s)?);
                    any = true;
                }
            }
            advised += any as usize;
        }
        let order = rng.permutation(data.len());
        log.epoch_losses.push(tr.epoch(m, data, &order, &advice, &format!("corrective epoch {epoch}"))?);
        log.advised.push(advised);
    }
    Ok(log)
}

/// Mean normalized error per head over `examples` under fixed advice.
pub fn mean_errors(
    m: &E2EPredictor,
    examples: &[Example],
    mut advice: impl FnMut(&Example) -> HeadAdvice,
) -> Result<[f64; 2], Error> {
    let mut sums = [0f64; 2];
    for e in examples {
        let p = m.predict(&e.instruction, &e.world, &advice(e))?;
        for head in Head::BOTH {
            sums[head.index()] += crate::world::normalized_error(&p.get(head), &e.gold(head), e.world.block_length);
        }
    }
    let n = examples.len().max(1) as f64;
    Ok(sums.map(|s| s / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, GeneratorConfig};
    use crate::grounding::{grounder_vocab, Grounder, GrounderDims};
    use crate::lang::Templates;

    fn small_dims() -> PredictorDims {
        PredictorDims { embed: 8, hidden: 12 }
    }

    fn trunk(kind: GrounderKind) -> FrozenTrunk {
        let t = Templates::builtin();
        let v = grounder_vocab(kind, &t, &CellGrid::default());
        let dims = GrounderDims {
            embed: 6,
            hidden: 7,
            proj: 5,
        };
        Grounder::new(kind, v, dims, &mut Rng::new(4, 4)).unwrap().frozen_trunk().unwrap()
    }

    fn data() -> crate::data::Dataset {
        generate_synthetic(&GeneratorConfig {
            train: 24,
            dev: 4,
            test: 4,
            seed: 1,
            ..GeneratorConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn null_advice_equals_structural_removal() {
        let d = data();
        let m = E2EPredictor::new(
            PredictorKind::Restrictive,
            instruction_vocab(&d.train),
            small_dims(),
            Some(trunk(GrounderKind::Restrictive)),
            &mut Rng::new(1, 1),
        )
        .unwrap();
        let e = &d.train[0];
        let a = m.predict(&e.instruction, &e.world, &HeadAdvice::none()).unwrap();
        let b = m.predict(&e.instruction, &e.world, &HeadAdvice::none()).unwrap();
        assert_eq!(a, b);
        let ids = m.tokenize_instruction(&e.instruction).unwrap();
        let mut tape = Tape::new();
        let outs = m.forward_tape(&mut tape, &ids, &e.world, &[None, None]).unwrap();
        assert_eq!(tape.value(outs[0]).data(), &a.source.to_f32()[..]);
    }

    #[test]
    fn restrictive_schedule_advises_half_and_keeps_trunk_frozen() {
        let d = data();
        let mut m = E2EPredictor::new(
            PredictorKind::Restrictive,
            instruction_vocab(&d.train),
            small_dims(),
            Some(trunk(GrounderKind::Restrictive)),
            &mut Rng::new(1, 1),
        )
        .unwrap();
        let before = m.trunk_fingerprint();
        let t = Templates::builtin();
        let cfg = TrainConfig {
            epochs: 3,
            batch: 8,
            dims: small_dims(),
            ..TrainConfig::default()
        };
        let log = train_restrictive_e2e(&mut m, &d.train, &t.train, &CellGrid::default(), &cfg).unwrap();
        assert_eq!(log.advised, vec![12, 12, 12]);
        assert_eq!(m.trunk_fingerprint(), before);
        let mut r = Rng::new(0, 0);
        assert_ne!(advised_half(24, &mut r), advised_half(24, &mut r));
    }

    #[test]
    fn corrective_with_no_second_iteration_equals_baseline() {
        let d = data();
        let cfg = TrainConfig {
            epochs: 2,
            iter2_epochs: 0,
            batch: 8,
            dims: small_dims(),
            ..TrainConfig::default()
        };
        let v = instruction_vocab(&d.train);
        let mk = |kind, tr| E2EPredictor::new(kind, v.clone(), small_dims(), tr, &mut Rng::new(1, 1)).unwrap();
        let mut c = mk(PredictorKind::Corrective, Some(trunk(GrounderKind::Corrective)));
        let mut b = mk(PredictorKind::Corrective, Some(trunk(GrounderKind::Corrective)));
        let t = Templates::builtin();
        let lc = train_corrective_e2e(&mut c, &d.train, &t.train, &cfg).unwrap();
        let lb = train_baseline(&mut b, &d.train, &cfg).unwrap();
        assert_eq!(lc.epoch_losses, lb.epoch_losses);
        assert_eq!(c.store().fingerprint(), b.store().fingerprint());
    }

    #[test]
    fn gold_advice_is_truthful() {
        let t = Templates::builtin();
        let grid = CellGrid::default();
        let mut rng = Rng::new(5, 5);
        for _ in 0..2000 {
            let gold = Coordinate::new(rng.uniform(-1.0, 1.0), 0.05, rng.uniform(-1.0, 1.0));
            for form in [RestrictiveForm::Quadrant, RestrictiveForm::Union, RestrictiveForm::Centered] {
                let s = gold_region_advice(Head::Target, &gold, form, &t.train, &grid, &mut rng);
                assert_eq!(s.meaning.unwrap().contains(&gold), Some(true));
            }
        }
    }

    #[test]
    fn baseline_rejects_advice() {
        let d = data();
        let m = E2EPredictor::new(PredictorKind::Baseline, instruction_vocab(&d.train), small_dims(), None, &mut Rng::new(1, 1)).unwrap();
        let mut a = HeadAdvice::none();
        a.set(Head::Target, Some(AdviceSentence::free_text("the target is in the top left", crate::lang::AdviceKind::Restrictive)));
        let e = &d.train[0];
        assert!(m.predict(&e.instruction, &e.world, &a).is_err());
    }
}
