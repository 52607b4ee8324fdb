//! Pretrained advice grounders.
//!
//! Both grounders read the advice with an embedding + LSTM, project the last
//! hidden state, and add per-axis projections of a query coordinate:
//!
//! ```text
//! hidden = relu(FC_sent(h_n) + FC_x(x) + FC_y(y) + FC_z(z))
//! out    = FC_O(hidden)          // 2 logits (restrictive) or 3 coords (corrective)
//! ```
//!
//! The restrictive grounder classifies whether the coordinate lies in the
//! region the sentence names; the corrective grounder outputs a coordinate
//! that moves the query in the advised direction. The trunk (embedding, LSTM,
//! FC_sent) is what the end-to-end predictor later loads and freezes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::lang::{
    render_centered, render_corrective, render_restrictive, render_union, tokenize, union_pairs, words,
    AdviceMeaning, AdviceSentence, CellGrid, NamedRegion, TemplateSet, Templates, Vocab, OOV_ID,
};
use crate::nn::{
    add_linear, add_lstm, clip_grad_norm, io, Activation, AdamConfig, AdamState, Linear, LstmParams, ParamId,
    ParamStore, Real, Tape, Var,
};
use crate::rng::Rng;
use crate::world::{Coordinate, Direction, Half, Head, Quadrant};
use crate::Error;

pub const RESTRICTIVE_ARCH: &str = "grounder.restrictive.v1";
pub const CORRECTIVE_ARCH: &str = "grounder.corrective.v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrounderKind {
    Restrictive,
    Corrective,
}

impl GrounderKind {
    pub fn architecture(self) -> &'static str {
        match self {
            GrounderKind::Restrictive => RESTRICTIVE_ARCH,
            GrounderKind::Corrective => CORRECTIVE_ARCH,
        }
    }

    fn outputs(self) -> usize {
        match self {
            GrounderKind::Restrictive => 2,
            GrounderKind::Corrective => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrounderDims {
    pub embed: usize,
    pub hidden: usize,
    pub proj: usize,
}

impl Default for GrounderDims {
    fn default() -> Self {
        Self {
            embed: 100,
            hidden: 256,
            proj: 100,
        }
    }
}

/// Embedding, LSTM and sentence projection: the part of a grounder that
/// turns advice text into a fixed vector.
#[derive(Clone, Copy, Debug)]
pub struct AdviceTrunk {
    pub embedding: ParamId,
    pub lstm: LstmParams,
    pub fc_sent: Linear,
}

impl AdviceTrunk {
    fn add(store: &mut ParamStore, prefix: &str, vocab: usize, dims: GrounderDims, rng: &mut Rng) -> Result<Self, Error> {
        let embedding = store.add_normal(&format!("{prefix}embedding"), &[vocab, dims.embed], 0.1, rng)?;
        let lstm = add_lstm(store, &format!("{prefix}lstm"), dims.embed, dims.hidden, rng)?;
        let fc_sent = add_linear(store, &format!("{prefix}fc_sent"), dims.hidden, dims.proj, rng)?;
        Ok(Self {
            embedding,
            lstm,
            fc_sent,
        })
    }

    /// Sentence vector `FC_sent(h_n)`, before any activation.
    pub fn encode(&self, store: &ParamStore, ids: &[u32]) -> Result<Vec<f32>, Error> {
        let h = crate::nn::encode_last(store, self.embedding, self.lstm, ids)?;
        Ok(self.fc_sent.apply(store, &h, Activation::None))
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, ids: &[u32]) -> Result<Var, Error> {
        let e = tape.embedding(store, self.embedding, ids)?;
        let h = tape.lstm_last(store, self.lstm, e)?;
        Ok(self.fc_sent.forward(tape, store, h, Activation::None)?)
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut v = vec![self.embedding];
        v.extend(self.lstm.ids());
        v.extend([self.fc_sent.w, self.fc_sent.b]);
        v
    }
}

/// A copy of a grounder's trunk that never changes after construction.
#[derive(Clone, Debug)]
pub struct FrozenTrunk {
    pub kind: GrounderKind,
    pub vocab: Vocab,
    pub dims: GrounderDims,
    store: ParamStore,
    trunk: AdviceTrunk,
}

pub const TRUNK_PREFIX: &str = "advice_trunk.";

impl FrozenTrunk {
    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn encode_text(&self, text: &str) -> Result<Vec<f32>, Error> {
        let ids = tokenize(text, &self.vocab)?;
        self.trunk.encode(&self.store, &ids)
    }

    pub fn fingerprint(&self) -> u64 {
        self.store.fingerprint()
    }

    pub fn proj(&self) -> usize {
        self.dims.proj
    }

    /// Skeleton with the right shapes, for loading saved weights into.
    pub fn skeleton(kind: GrounderKind, vocab: Vocab, dims: GrounderDims) -> Result<Self, Error> {
        let mut store = ParamStore::new();
        let trunk = AdviceTrunk::add(&mut store, TRUNK_PREFIX, vocab.len(), dims, &mut Rng::new(0, 0))?;
        Ok(Self {
            kind,
            vocab,
            dims,
            store,
            trunk,
        })
    }

    pub(crate) fn store_mut_for_load(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}

#[derive(Clone, Debug)]
pub struct Grounder {
    pub kind: GrounderKind,
    pub vocab: Vocab,
    pub dims: GrounderDims,
    store: ParamStore,
    trunk: AdviceTrunk,
    fc_x: Linear,
    fc_y: Linear,
    fc_z: Linear,
    fc_out: Linear,
}

impl Grounder {
    pub fn new(kind: GrounderKind, vocab: Vocab, dims: GrounderDims, rng: &mut Rng) -> Result<Self, Error> {
        let mut store = ParamStore::new();
        let trunk = AdviceTrunk::add(&mut store, "", vocab.len(), dims, rng)?;
        let fc_x = add_linear(&mut store, "fc_x", 1, dims.proj, rng)?;
        let fc_y = add_linear(&mut store, "fc_y", 1, dims.proj, rng)?;
        let fc_z = add_linear(&mut store, "fc_z", 1, dims.proj, rng)?;
        let fc_out = add_linear(&mut store, "fc_out", dims.proj, kind.outputs(), rng)?;
        Ok(Self {
            kind,
            vocab,
            dims,
            store,
            trunk,
            fc_x,
            fc_y,
            fc_z,
            fc_out,
        })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn trunk(&self) -> AdviceTrunk {
        self.trunk
    }

    pub fn frozen_trunk(&self) -> Result<FrozenTrunk, Error> {
        let mut f = FrozenTrunk::skeleton(self.kind, self.vocab.clone(), self.dims)?;
        for id in self.trunk.ids() {
            let p = self.store.get(id);
            let target = f
                .store
                .id(&format!("{TRUNK_PREFIX}{}", p.name))
                .expect("skeleton mirrors trunk names");
            f.store.set_value(target, p.value.clone())?;
        }
        Ok(f)
    }

    pub fn lstm_ids(&self) -> Vec<ParamId> {
        self.trunk.lstm.ids().to_vec()
    }

    /// Output for one coordinate given an encoded sentence vector.
    fn head(&self, sent: &[f32], c: &Coordinate) -> Vec<f32> {
        let s = &self.store;
        let mut h = sent.to_vec();
        for (fc, v) in [(self.fc_x, c.x), (self.fc_y, c.y), (self.fc_z, c.z)] {
            let a = fc.apply(s, &[v as f32], Activation::None);
            h.iter_mut().zip(a).for_each(|(x, y)| *x += y);
        }
        Activation::Relu.apply(&mut h);
        self.fc_out.apply(s, &h, Activation::None)
    }

    pub fn encode(&self, ids: &[u32]) -> Result<Vec<f32>, Error> {
        self.trunk.encode(&self.store, ids)
    }

    /// Raw outputs for each coordinate under one advice sentence.
    pub fn forward_many(&self, ids: &[u32], coords: &[Coordinate]) -> Result<Vec<Vec<f32>>, Error> {
        let sent = self.encode(ids)?;
        Ok(coords.iter().map(|c| self.head(&sent, c)).collect())
    }

    /// Restrictive logits `[outside, inside]`.
    pub fn restrictive_forward(&self, ids: &[u32], c: &Coordinate) -> Result<[f32; 2], Error> {
        self.expect(GrounderKind::Restrictive)?;
        let o = self.forward_many(ids, std::slice::from_ref(c))?.remove(0);
        Ok([o[0], o[1]])
    }

    pub fn corrective_forward(&self, ids: &[u32], c: &Coordinate) -> Result<Coordinate, Error> {
        self.expect(GrounderKind::Corrective)?;
        let o = self.forward_many(ids, std::slice::from_ref(c))?.remove(0);
        Ok(Coordinate::from_f32(&o))
    }

    fn expect(&self, kind: GrounderKind) -> Result<(), Error> {
        if self.kind != kind {
            return Err(Error::Contract(format!("{:?} grounder used as {kind:?}", self.kind)));
        }
        Ok(())
    }

    /// Records the forward pass for one sentence and several coordinates;
    /// returns the output node per coordinate.
    pub(crate) fn forward_tape(&self, tape: &mut Tape, ids: &[u32], coords: &[Coordinate]) -> Result<Vec<Var>, Error> {
        self.forward_tape_with(&self.store, tape, ids, coords)
    }

    /// [`Self::forward_tape`] reading parameters from `s`, which must share
    /// this model's layout (e.g. an `f64` cast of its store).
    pub(crate) fn forward_tape_with<T: Real>(
        &self,
        s: &ParamStore<T>,
        tape: &mut Tape<T>,
        ids: &[u32],
        coords: &[Coordinate],
    ) -> Result<Vec<Var>, Error> {
        let sent = self.trunk.forward(tape, s, ids)?;
        let mut outs = Vec::with_capacity(coords.len());
        for c in coords {
            let mut terms = vec![sent];
            for (fc, v) in [(self.fc_x, c.x), (self.fc_y, c.y), (self.fc_z, c.z)] {
                let x = tape.input_vec(vec![T::of(v)])?;
                terms.push(fc.forward(tape, s, x, Activation::None)?);
            }
            let sum = tape.add(&terms)?;
            let h = tape.activation(sum, Activation::Relu)?;
            outs.push(self.fc_out.forward(tape, s, h, Activation::None)?);
        }
        Ok(outs)
    }

    pub fn meta(&self, seed: u64, extra: serde_json::Value) -> io::WeightMeta {
        let mut vocab = BTreeMap::new();
        vocab.insert("advice".to_string(), self.vocab.tokens().to_vec());
        io::WeightMeta {
            architecture: self.kind.architecture().to_string(),
            hyperparameters: json!({ "dims": self.dims, "training": extra }),
            vocab,
            seed,
        }
    }

    pub fn save(&self, path: &Path, meta: &io::WeightMeta) -> Result<(), Error> {
        Ok(io::save_weights(&self.store, path, meta)?)
    }

    pub fn load(path: &Path, kind: GrounderKind) -> Result<(Self, io::WeightMeta), Error> {
        let meta = io::read_meta(path)?;
        let (vocab, dims) = vocab_and_dims(&meta)?;
        let mut g = Grounder::new(kind, vocab, dims, &mut Rng::new(0, 0))?;
        io::load_weights(&mut g.store, path, kind.architecture())?;
        Ok((g, meta))
    }
}

pub(crate) fn vocab_and_dims(meta: &io::WeightMeta) -> Result<(Vocab, GrounderDims), Error> {
    let tokens = meta
        .vocab
        .get("advice")
        .ok_or_else(|| Error::Contract("sidecar has no advice vocabulary".into()))?;
    let vocab = Vocab::from(tokens.clone());
    vocab.check()?;
    let dims: GrounderDims = serde_json::from_value(meta.hyperparameters["dims"].clone())
        .map_err(|e| Error::Contract(format!("sidecar dims: {e}")))?;
    Ok((vocab, dims))
}

// ---- corrective loss ----

/// Satisfaction margin used when drawing ghost coordinates.
pub const GHOST_MARGIN: f64 = 0.05;

/// The advice-following coordinate the corrective loss regresses toward, or
/// `None` when `pred` already strictly follows `d` from `input` (zero loss).
pub fn corrective_ghost(pred: &Coordinate, input: &Coordinate, d: Direction, rng: &mut Rng) -> Option<Coordinate> {
    if d.satisfied(input, pred) {
        return None;
    }
    let (v, forward) = match d {
        Direction::Up => (input.z, true),
        Direction::Down => (input.z, false),
        Direction::Left => (input.x, false),
        Direction::Right => (input.x, true),
    };
    let (lo, hi) = if forward { (v + GHOST_MARGIN, 1.0) } else { (-1.0, v - GHOST_MARGIN) };
    let a = if lo < hi {
        rng.uniform(lo, hi)
    } else if forward {
        v + GHOST_MARGIN
    } else {
        v - GHOST_MARGIN
    };
    let mut g = *input;
    match d {
        Direction::Up | Direction::Down => g.z = a,
        Direction::Left | Direction::Right => g.x = a,
    }
    Some(g)
}

/// Zero when `pred` follows the advice, otherwise MSE to a ghost coordinate.
pub fn corrective_loss(pred: &Coordinate, input: &Coordinate, d: Direction, rng: &mut Rng) -> f64 {
    match corrective_ghost(pred, input, d, rng) {
        None => 0.0,
        Some(g) => {
            let (a, b) = (pred.to_array(), g.to_array());
            a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / 3.0
        }
    }
}

// ---- sampling ----

/// Which restrictive phrasings a sample may use, as relative weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindMix {
    pub quadrant: f64,
    pub half: f64,
    pub union: f64,
    pub centered: f64,
}

impl Default for KindMix {
    fn default() -> Self {
        Self {
            quadrant: 0.3,
            half: 0.1,
            union: 0.2,
            centered: 0.4,
        }
    }
}

fn random_head(rng: &mut Rng) -> Head {
    Head::BOTH[rng.below(2)]
}

pub fn sample_restrictive_sentence(ts: &TemplateSet, grid: &CellGrid, mix: &KindMix, rng: &mut Rng) -> AdviceSentence {
    let head = random_head(rng);
    let total = mix.quadrant + mix.half + mix.union + mix.centered;
    let u = rng.uniform(0.0, total);
    if u < mix.quadrant {
        render_restrictive(head, NamedRegion::Quadrant(Quadrant::ALL[rng.below(4)]), ts, rng)
    } else if u < mix.quadrant + mix.half {
        render_restrictive(head, NamedRegion::Half(Half::ALL[rng.below(4)]), ts, rng)
    } else if u < mix.quadrant + mix.half + mix.union {
        let pairs = union_pairs();
        let (a, b) = pairs[rng.below(pairs.len())];
        let (a, b) = if rng.bernoulli(0.5) { (a, b) } else { (b, a) };
        render_union(head, a, b, ts, rng).expect("distinct pair")
    } else {
        let col = rng.below(grid.cells);
        let row = rng.below(grid.cells);
        render_centered(head, &grid.cell_region(col, row), grid, ts, rng)
    }
}

fn random_coordinate(rng: &mut Rng) -> Coordinate {
    Coordinate::new(rng.uniform(-1.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(-1.0, 1.0))
}

/// `k` labelled coordinates for one sentence, each label a fair coin,
/// coordinates drawn uniformly from the matching side of the region.
pub fn balanced_coordinates(meaning: &AdviceMeaning, k: usize, rng: &mut Rng) -> Vec<(Coordinate, bool)> {
    (0..k)
        .map(|_| {
            let want = rng.bernoulli(0.5);
            loop {
                let c = random_coordinate(rng);
                if meaning.contains(&c) == Some(want) {
                    return (c, want);
                }
            }
        })
        .collect()
}

/// Replaces template words (never the region or direction words) by the
/// OOV id with probability `p`.
fn word_dropout(s: &AdviceSentence, ids: &[u32], p: f64, rng: &mut Rng) -> Vec<u32> {
    if p <= 0.0 {
        return ids.to_vec();
    }
    let keep: std::collections::HashSet<String> = words(&s.filler).into_iter().collect();
    words(&s.text)
        .iter()
        .zip(ids)
        .map(|(w, &id)| if !keep.contains(w) && rng.bernoulli(p) { OOV_ID } else { id })
        .collect()
}

// ---- training ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub samples: usize,
    pub heldout: usize,
    /// Coordinates sharing one sentence per forward pass.
    pub group: usize,
    pub batch: usize,
    pub lr: f32,
    /// Final learning rate as a fraction of `lr`, reached by cosine decay.
    pub lr_floor: f32,
    pub clip: f32,
    pub word_dropout: f64,
    pub mix: KindMix,
    pub dims: GrounderDims,
    pub log_every: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            samples: 200_000,
            heldout: 20_000,
            group: 16,
            batch: 32,
            lr: 1e-3,
            lr_floor: 1.0,
            clip: 5.0,
            word_dropout: 0.1,
            mix: KindMix::default(),
            dims: GrounderDims::default(),
            log_every: 50,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    /// Settings that reach the accuracy targets within a few minutes on one
    /// core. Region boundaries need many more samples and a decayed rate to
    /// get sharp; directions are learned almost immediately.
    pub fn for_kind(kind: GrounderKind) -> Self {
        match kind {
            GrounderKind::Restrictive => Self {
                samples: 800_000,
                lr: 4e-3,
                lr_floor: 0.02,
                ..Self::default()
            },
            GrounderKind::Corrective => Self {
                samples: 100_000,
                ..Self::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub kind: GrounderKind,
    /// Mean training loss per `log_every` optimizer steps.
    pub loss_log: Vec<f32>,
    /// Accuracy (restrictive) or satisfaction rate (corrective) on fresh
    /// samples rendered from train templates.
    pub train_templates: f64,
    /// The same on held-out test-template phrasings.
    pub test_templates: f64,
    pub steps: usize,
}

/// Advice vocabulary for a grounder: every word the train templates can
/// produce for its advice kinds.
pub fn grounder_vocab(kind: GrounderKind, templates: &Templates, grid: &CellGrid) -> Vocab {
    let sentences = templates.train_sentences(grid);
    let corrective: std::collections::HashSet<&String> = templates.train.corrective.iter().collect();
    let is_corrective = |s: &str| {
        corrective
            .iter()
            .any(|t| Direction::ALL.iter().any(|d| t.replacen("{}", d.word(), 1) == s))
    };
    Vocab::build(
        sentences
            .iter()
            .filter(|s| is_corrective(s) == (kind == GrounderKind::Corrective))
            .map(String::as_str),
    )
}

struct Group {
    ids: Vec<u32>,
    coords: Vec<Coordinate>,
    labels: Vec<bool>,
    direction: Option<Direction>,
}

#[allow(clippy::too_many_arguments)]
fn draw_group(
    kind: GrounderKind,
    vocab: &Vocab,
    ts: &TemplateSet,
    grid: &CellGrid,
    cfg: &PretrainConfig,
    k: usize,
    dropout: f64,
    rng: &mut Rng,
) -> Result<Group, Error> {
    match kind {
        GrounderKind::Restrictive => {
            let s = sample_restrictive_sentence(ts, grid, &cfg.mix, rng);
            let ids = word_dropout(&s, &tokenize(&s.text, vocab)?, dropout, rng);
            let meaning = s.meaning.as_ref().expect("rendered sentences carry meaning");
            let (coords, labels) = balanced_coordinates(meaning, k, rng).into_iter().unzip();
            Ok(Group {
                ids,
                coords,
                labels,
                direction: None,
            })
        }
        GrounderKind::Corrective => {
            let d = Direction::ALL[rng.below(4)];
            let s = render_corrective(d, ts, rng);
            let ids = word_dropout(&s, &tokenize(&s.text, vocab)?, dropout, rng);
            let coords = (0..k).map(|_| random_coordinate(rng)).collect();
            Ok(Group {
                ids,
                coords,
                labels: Vec::new(),
                direction: Some(d),
            })
        }
    }
}

/// Pretrains a grounder on freshly sampled (advice, coordinate) pairs.
pub fn pretrain(
    kind: GrounderKind,
    templates: &Templates,
    grid: &CellGrid,
    cfg: &PretrainConfig,
) -> Result<(Grounder, PretrainReport), Error> {
    if cfg.group == 0 || cfg.batch == 0 {
        return Err(Error::Contract("group and batch must be positive".into()));
    }
    let root = Rng::named(cfg.seed, &format!("grounding.{kind:?}"));
    let vocab = grounder_vocab(kind, templates, grid);
    let mut g = Grounder::new(kind, vocab, cfg.dims, &mut root.fork("init"))?;
    let mut data_rng = root.fork("samples");
    let mut ghost_rng = root.fork("ghost");
    let mut adam = AdamState::new(&g.store, AdamConfig::with_lr(cfg.lr));
    let lstm_ids = g.lstm_ids();

    let steps = cfg.samples.div_ceil(cfg.batch);
    let mut loss_log = Vec::new();
    let mut window = 0f64;
    let mut window_n = 0usize;
    for step in 0..steps {
        g.store.zero_grad();
        let mut remaining = cfg.batch;
        let mut batch_loss = 0f64;
        while remaining > 0 {
            let k = remaining.min(cfg.group);
            remaining -= k;
            let grp = draw_group(kind, &g.vocab, &templates.train, grid, cfg, k, cfg.word_dropout, &mut data_rng)?;
            let mut tape = Tape::new();
            let outs = g.forward_tape(&mut tape, &grp.ids, &grp.coords)?;
            let mut losses = Vec::with_capacity(k);
            for (i, &o) in outs.iter().enumerate() {
                match kind {
                    GrounderKind::Restrictive => losses.push(tape.softmax_ce(o, grp.labels[i] as usize)?),
                    GrounderKind::Corrective => {
                        let pred = Coordinate::from_f32(tape.value(o).data());
                        let d = grp.direction.expect("corrective group");
                        if let Some(ghost) = corrective_ghost(&pred, &grp.coords[i], d, &mut ghost_rng) {
                            losses.push(tape.mse(o, &ghost.to_f32())?);
                        }
                    }
                }
            }
            if losses.is_empty() {
                continue;
            }
            let total = tape.add(&losses)?;
            batch_loss += f64::from(tape.scalar(total));
            tape.backward(total, &mut g.store)?;
        }
        let loss = batch_loss / cfg.batch as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("{kind:?} grounder at step {step}")));
        }
        g.store.scale_grads(1.0 / cfg.batch as f32);
        clip_grad_norm(&mut g.store, &lstm_ids, cfg.clip);
        adam.config.lr = cosine_lr(cfg.lr, cfg.lr_floor, step, steps);
        adam.step(&mut g.store);
        window += loss;
        window_n += 1;
        if window_n == cfg.log_every || step + 1 == steps {
            loss_log.push((window / window_n as f64) as f32);
            window = 0.0;
            window_n = 0;
        }
    }
    if !g.store.all_finite() {
        return Err(Error::Diverged(format!("{kind:?} grounder weights")));
    }

    let eval_rng = root.fork("heldout");
    let train_templates = evaluate(&g, &templates.train, grid, cfg, cfg.heldout, &mut eval_rng.fork("train"))?;
    let test_templates = evaluate(&g, &templates.test, grid, cfg, cfg.heldout, &mut eval_rng.fork("test"))?;
    Ok((
        g,
        PretrainReport {
            kind,
            loss_log,
            train_templates,
            test_templates,
            steps,
        },
    ))
}

/// Cosine decay from `lr` to `lr * floor` over `steps`.
pub fn cosine_lr(lr: f32, floor: f32, step: usize, steps: usize) -> f32 {
    if floor >= 1.0 || steps <= 1 {
        return lr;
    }
    let t = step as f64 / (steps - 1) as f64;
    let k = f64::from(floor) + (1.0 - f64::from(floor)) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
    (f64::from(lr) * k) as f32
}

/// Accuracy (restrictive) or direction-satisfaction rate (corrective) over
/// `n` fresh samples rendered from `ts`.
pub fn evaluate(
    g: &Grounder,
    ts: &TemplateSet,
    grid: &CellGrid,
    cfg: &PretrainConfig,
    n: usize,
    rng: &mut Rng,
) -> Result<f64, Error> {
    let mut correct = 0usize;
    let mut seen = 0usize;
    while seen < n {
        let k = cfg.group.min(n - seen);
        let grp = draw_group(g.kind, &g.vocab, ts, grid, cfg, k, 0.0, rng)?;
        let outs = g.forward_many(&grp.ids, &grp.coords)?;
        for (i, o) in outs.iter().enumerate() {
            let ok = match g.kind {
                GrounderKind::Restrictive => (o[1] > o[0]) == grp.labels[i],
                GrounderKind::Corrective => grp
                    .direction
                    .expect("corrective group")
                    .satisfied(&grp.coords[i], &Coordinate::from_f32(o)),
            };
            correct += ok as usize;
        }
        seen += k;
    }
    Ok(correct as f64 / n as f64)
}

/// Probability that `c` lies in the region `text` describes.
pub fn inside_probability(g: &Grounder, text: &str, c: &Coordinate) -> Result<f64, Error> {
    let ids = tokenize(text, &g.vocab)?;
    let l = g.restrictive_forward(&ids, c)?;
    Ok(crate::nn::layers::softmax(&l)[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> PretrainConfig {
        PretrainConfig {
            samples: 64,
            heldout: 64,
            dims: GrounderDims {
                embed: 4,
                hidden: 5,
                proj: 6,
            },
            log_every: 1,
            ..PretrainConfig::default()
        }
    }

    #[test]
    fn ghost_mean_matches_interval_midpoint() {
        let input = Coordinate::new(0.1, 0.4, 0.9);
        let pred = Coordinate::new(0.1, 0.4, 0.95);
        let mut rng = Rng::new(1, 2);
        let n = 20_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let g = corrective_ghost(&pred, &input, Direction::Down, &mut rng).unwrap();
            assert_eq!((g.x, g.y), (input.x, input.y));
            assert!(g.z >= -1.0 && g.z < 0.85);
            sum += g.z;
        }
        let mean = sum / n as f64;
        assert!((mean - (-1.0 + 0.85) / 2.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn corrective_loss_zero_iff_strict() {
        let input = Coordinate::new(-0.5, 0.5, 0.9);
        let mut rng = Rng::new(0, 0);
        assert_eq!(corrective_loss(&Coordinate::new(-0.5, 0.5, 0.5), &input, Direction::Down, &mut rng), 0.0);
        assert!(corrective_loss(&Coordinate::new(-0.5, 0.5, 0.95), &input, Direction::Down, &mut rng) > 0.0);
        assert!(corrective_loss(&input, &input, Direction::Down, &mut rng) > 0.0);
        let edge = Coordinate::new(0.98, 0.0, 0.0);
        let g = corrective_ghost(&edge, &edge, Direction::Right, &mut rng).unwrap();
        assert!((g.x - 1.03).abs() < 1e-12);
    }

    #[test]
    fn balanced_labels() {
        let mut rng = Rng::new(3, 3);
        let m = AdviceMeaning::Regions(vec![Quadrant::TopLeft.region()]);
        let s = balanced_coordinates(&m, 20_000, &mut rng);
        let pos = s.iter().filter(|(_, l)| *l).count() as f64 / s.len() as f64;
        assert!((pos - 0.5).abs() < 0.01);
        assert!(s.iter().all(|(c, l)| m.contains(c) == Some(*l)));
    }

    #[test]
    fn untrained_restrictive_is_near_chance() {
        let t = Templates::builtin();
        let grid = CellGrid::default();
        let cfg = tiny();
        let vocab = grounder_vocab(GrounderKind::Restrictive, &t, &grid);
        let g = Grounder::new(GrounderKind::Restrictive, vocab, GrounderDims::default(), &mut Rng::new(9, 9)).unwrap();
        let acc = evaluate(&g, &t.train, &grid, &cfg, 4000, &mut Rng::new(1, 1)).unwrap();
        assert!((0.35..=0.65).contains(&acc), "{acc}");
    }

    #[test]
    fn pretraining_is_deterministic() {
        let t = Templates::builtin();
        let grid = CellGrid::default();
        let (a, ra) = pretrain(GrounderKind::Corrective, &t, &grid, &tiny()).unwrap();
        let (b, rb) = pretrain(GrounderKind::Corrective, &t, &grid, &tiny()).unwrap();
        assert_eq!(ra.loss_log, rb.loss_log);
        assert_eq!(a.store().fingerprint(), b.store().fingerprint());
    }

    #[test]
    fn vocabularies_split_by_kind() {
        let t = Templates::builtin();
        let grid = CellGrid::default();
        let r = grounder_vocab(GrounderKind::Restrictive, &t, &grid);
        let c = grounder_vocab(GrounderKind::Corrective, &t, &grid);
        assert!(r.contains("top") && !r.contains("down"));
        assert!(c.contains("down") && !c.contains("column"));
        assert!(r.contains("column"));
    }

    #[test]
    fn frozen_trunk_matches_grounder_encoding() {
        let t = Templates::builtin();
        let grid = CellGrid::default();
        let vocab = grounder_vocab(GrounderKind::Restrictive, &t, &grid);
        let g = Grounder::new(GrounderKind::Restrictive, vocab, tiny().dims, &mut Rng::new(2, 2)).unwrap();
        let f = g.frozen_trunk().unwrap();
        let text = "the target is in the top left";
        let ids = tokenize(text, &g.vocab).unwrap();
        assert_eq!(f.encode_text(text).unwrap(), g.encode(&ids).unwrap());
    }
}
