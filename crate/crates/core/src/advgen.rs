//! Self-generated advice.
//!
//! A region classifier reads the instruction and board and scores the four
//! quadrants for one head:
//!
//! ```text
//! h = LSTM(embed(instruction))_n                256
//! w = leaky_relu(FC_world(board[60]))           20
//! p = softmax(FC_out([h; w]))                   4
//! ```
//!
//! Its two most probable quadrants become union advice; alternatively the
//! predictor's own first answer is turned into a centered-region sentence.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::Example;
use crate::lang::{render_centered, render_restrictive, render_union, tokenize, AdviceSentence, CellGrid, NamedRegion, TemplateSet, Vocab};
use crate::nn::{
    add_linear, add_lstm, clip_grad_norm, io, layers, Activation, AdamConfig, AdamState, Linear, LstmParams, ParamId,
    ParamStore, Real, Tape, Var,
};
use crate::predictor::{E2EPredictor, HeadAdvice, Prediction};
use crate::rng::Rng;
use crate::world::{centered_region, quadrant_of, BoardState, Coordinate, Head, Quadrant, Region, QUADRANT_SIDE};
use crate::Error;

pub const SOURCE_ARCH: &str = "advgen.source.v1";
pub const TARGET_ARCH: &str = "advgen.target.v1";

pub fn architecture(head: Head) -> &'static str {
    match head {
        Head::Source => SOURCE_ARCH,
        Head::Target => TARGET_ARCH,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvgenDims {
    pub embed: usize,
    pub hidden: usize,
    pub world: usize,
}

impl Default for AdvgenDims {
    fn default() -> Self {
        Self {
            embed: 256,
            hidden: 256,
            world: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionPrediction {
    /// Indexed by `Quadrant::index`.
    pub probs: [f64; 4],
    pub top1: Quadrant,
    pub top2: Quadrant,
}

impl RegionPrediction {
    /// Orders quadrants by probability; equal scores keep `Quadrant::ALL` order.
    pub fn from_probs(probs: [f64; 4]) -> Self {
        let mut order = Quadrant::ALL;
        order.sort_by(|a, b| probs[b.index()].total_cmp(&probs[a.index()]));
        Self {
            probs,
            top1: order[0],
            top2: order[1],
        }
    }

    pub fn rank(&self, k: usize) -> Quadrant {
        match k {
            0 => self.top1,
            _ => self.top2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdviceGenerator {
    pub head: Head,
    pub vocab: Vocab,
    pub dims: AdvgenDims,
    store: ParamStore,
    embedding: ParamId,
    lstm: LstmParams,
    world_fc: Linear,
    out: Linear,
}

impl AdviceGenerator {
    pub fn new(head: Head, vocab: Vocab, dims: AdvgenDims, rng: &mut Rng) -> Result<Self, Error> {
        let mut store = ParamStore::new();
        let embedding = store.add_normal("instr.embedding", &[vocab.len(), dims.embed], 0.1, rng)?;
        let lstm = add_lstm(&mut store, "instr.lstm", dims.embed, dims.hidden, rng)?;
        let world_fc = add_linear(&mut store, "world.fc", crate::world::MAX_BLOCKS * 3, dims.world, rng)?;
        let out = add_linear(&mut store, "out", dims.hidden + dims.world, 4, rng)?;
        Ok(Self {
            head,
            vocab,
            dims,
            store,
            embedding,
            lstm,
            world_fc,
            out,
        })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn logits(&self, ids: &[u32], world: &BoardState) -> Result<Vec<f32>, Error> {
        let s = &self.store;
        let mut x = crate::nn::encode_last(s, self.embedding, self.lstm, ids)?;
        x.extend(self.world_fc.apply(s, &world.encode(), Activation::LeakyRelu));
        Ok(self.out.apply(s, &x, Activation::None))
    }

    pub fn forward(&self, instruction: &str, world: &BoardState) -> Result<RegionPrediction, Error> {
        let ids = tokenize(instruction, &self.vocab)?;
        let p = layers::softmax(&self.logits(&ids, world)?);
        Ok(RegionPrediction::from_probs([p[0], p[1], p[2], p[3]]))
    }

    fn loss_tape(&self, tape: &mut Tape, ids: &[u32], world: &BoardState, label: usize) -> Result<Var, Error> {
        self.loss_tape_with(&self.store, tape, ids, world, label)
    }

    /// Cross-entropy of the quadrant label, reading parameters from a store
    /// with this model's layout.
    pub(crate) fn loss_tape_with<T: Real>(
        &self,
        s: &ParamStore<T>,
        tape: &mut Tape<T>,
        ids: &[u32],
        world: &BoardState,
        label: usize,
    ) -> Result<Var, Error> {
        let e = tape.embedding(s, self.embedding, ids)?;
        let h = tape.lstm_last(s, self.lstm, e)?;
        let wx = tape.input_vec(world.encode().into_iter().map(|v| T::of(f64::from(v))).collect())?;
        let w = self.world_fc.forward(tape, s, wx, Activation::LeakyRelu)?;
        let x = tape.concat(&[h, w])?;
        let o = self.out.forward(tape, s, x, Activation::None)?;
        Ok(tape.softmax_ce(o, label)?)
    }

    pub fn meta(&self, seed: u64, training: serde_json::Value) -> io::WeightMeta {
        let mut vocab = BTreeMap::new();
        vocab.insert("instruction".to_string(), self.vocab.tokens().to_vec());
        io::WeightMeta {
            architecture: architecture(self.head).to_string(),
            hyperparameters: json!({ "dims": self.dims, "training": training }),
            vocab,
            seed,
        }
    }

    pub fn save(&self, path: &Path, meta: &io::WeightMeta) -> Result<(), Error> {
        Ok(io::save_weights(&self.store, path, meta)?)
    }

    pub fn load(path: &Path, head: Head) -> Result<(Self, io::WeightMeta), Error> {
        let meta = io::read_meta(path)?;
        let tokens = meta
            .vocab
            .get("instruction")
            .ok_or_else(|| Error::Contract("sidecar has no instruction vocabulary".into()))?;
        let vocab = Vocab::from(tokens.clone());
        vocab.check()?;
        let dims: AdvgenDims = serde_json::from_value(meta.hyperparameters["dims"].clone())
            .map_err(|e| Error::Contract(format!("sidecar dims: {e}")))?;
        let mut g = AdviceGenerator::new(head, vocab, dims, &mut Rng::new(0, 0))?;
        io::load_weights(&mut g.store, path, architecture(head))?;
        Ok((g, meta))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdvgenConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f32,
    pub clip: f32,
    pub dims: AdvgenDims,
    pub seed: u64,
}

impl Default for AdvgenConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch: 32,
            lr: 1e-4,
            clip: 5.0,
            dims: AdvgenDims::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionAccuracy {
    pub top1: f64,
    pub top2: f64,
    pub total: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdvgenLog {
    pub epoch_losses: Vec<f32>,
    pub dev_top1: Vec<f64>,
    /// Epoch whose weights were kept (best dev top-1, earliest on ties).
    pub best_epoch: usize,
    pub dev: RegionAccuracy,
}

/// Top-1 accuracy and top-2 coverage of gold quadrants.
pub fn region_accuracy(g: &AdviceGenerator, examples: &[Example]) -> Result<RegionAccuracy, Error> {
    let (mut t1, mut t2) = (0usize, 0usize);
    for e in examples {
        let rp = g.forward(&e.instruction, &e.world)?;
        let gold = quadrant_of(&e.gold(g.head));
        t1 += (rp.top1 == gold) as usize;
        t2 += (rp.top1 == gold || rp.top2 == gold) as usize;
    }
    let n = examples.len().max(1) as f64;
    Ok(RegionAccuracy {
        top1: t1 as f64 / n,
        top2: t2 as f64 / n,
        total: examples.len(),
    })
}

/// Trains on `quadrant_of(gold)` labels with cross-entropy; keeps the
/// weights of the epoch with the best dev top-1 accuracy.
pub fn train_advgen(
    g: &mut AdviceGenerator,
    train: &[Example],
    dev: &[Example],
    cfg: &AdvgenConfig,
) -> Result<AdvgenLog, Error> {
    if train.is_empty() || cfg.batch == 0 {
        return Err(Error::Contract("advgen training needs examples and a positive batch".into()));
    }
    let root = Rng::named(cfg.seed, &format!("advgen.{}", g.head));
    let ids: Vec<Vec<u32>> = train
        .iter()
        .map(|e| tokenize(&e.instruction, &g.vocab))
        .collect::<Result<_, _>>()?;
    let labels: Vec<usize> = train.iter().map(|e| quadrant_of(&e.gold(g.head)).index()).collect();
    let lstm_ids = g.lstm.ids().to_vec();
    let mut adam = AdamState::new(&g.store, AdamConfig::with_lr(cfg.lr));
    let mut log = AdvgenLog::default();
    let mut best: Option<(f64, ParamStore)> = None;
    for epoch in 0..cfg.epochs {
        let order = root.fork(&format!("epoch.{epoch}")).permutation(train.len());
        let mut total = 0f64;
        for chunk in order.chunks(cfg.batch) {
            g.store.zero_grad();
            for &i in chunk {
                let mut tape = Tape::new();
                let loss = g.loss_tape(&mut tape, &ids[i], &train[i].world, labels[i])?;
                total += f64::from(tape.scalar(loss));
                tape.backward(loss, &mut g.store)?;
            }
            g.store.scale_grads(1.0 / chunk.len() as f32);
            clip_grad_norm(&mut g.store, &lstm_ids, cfg.clip);
            adam.step(&mut g.store);
        }
        let mean = total / train.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged(format!("advgen {} epoch {epoch}", g.head)));
        }
        log.epoch_losses.push(mean as f32);
        let acc = if dev.is_empty() { 0.0 } else { region_accuracy(g, dev)?.top1 };
        log.dev_top1.push(acc);
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, g.store.clone()));
            log.best_epoch = epoch;
        }
    }
    if let Some((_, store)) = best {
        g.store = store;
    }
    if !dev.is_empty() {
        log.dev = region_accuracy(g, dev)?;
    }
    Ok(log)
}

/// Union advice from the two most confident quadrants.
pub fn make_union_advice(rp: &RegionPrediction, head: Head, ts: &TemplateSet, rng: &mut Rng) -> AdviceSentence {
    render_union(head, rp.top1, rp.top2, ts, rng).expect("top1 and top2 differ")
}

/// Quadrant advice naming the `k`-th most confident region (0 = top-1).
pub fn make_ranked_advice(rp: &RegionPrediction, k: usize, head: Head, ts: &TemplateSet, rng: &mut Rng) -> AdviceSentence {
    render_restrictive(head, NamedRegion::Quadrant(rp.rank(k)), ts, rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputSpecificAdvice {
    /// The pass-one (null advice) prediction.
    pub first: Prediction,
    /// Quadrant-sized square centered on the first prediction.
    pub region: Region,
    /// The region the sentence actually names, after grid snapping.
    pub advised_region: Region,
    pub sentence: AdviceSentence,
}

/// Pass one of input-specific advice: predict without advice and describe a
/// quadrant-sized region centered on that prediction.
pub fn make_input_specific_advice(
    predictor: &E2EPredictor,
    example: &Example,
    head: Head,
    ts: &TemplateSet,
    grid: &CellGrid,
    rng: &mut Rng,
) -> Result<InputSpecificAdvice, Error> {
    let first = predictor.predict(&example.instruction, &example.world, &HeadAdvice::none())?;
    Ok(input_specific_from(first, head, ts, grid, rng))
}

pub fn input_specific_from(first: Prediction, head: Head, ts: &TemplateSet, grid: &CellGrid, rng: &mut Rng) -> InputSpecificAdvice {
    let p = first.get(head);
    let region = centered_region(&Coordinate::new(p.x, p.y, p.z), QUADRANT_SIDE);
    let sentence = render_centered(head, &region, grid, ts, rng);
    let advised_region = match &sentence.meaning {
        Some(crate::lang::AdviceMeaning::Regions(r)) => r[0],
        _ => region,
    };
    InputSpecificAdvice {
        first,
        region,
        advised_region,
        sentence,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, GeneratorConfig};
    use crate::lang::Templates;
    use crate::predictor::instruction_vocab;

    #[test]
    fn ties_follow_quadrant_order() {
        let rp = RegionPrediction::from_probs([0.25; 4]);
        assert_eq!((rp.top1, rp.top2), (Quadrant::TopLeft, Quadrant::TopRight));
        let rp = RegionPrediction::from_probs([0.1, 0.2, 0.4, 0.3]);
        assert_eq!((rp.top1, rp.top2), (Quadrant::BottomLeft, Quadrant::BottomRight));
    }

    #[test]
    fn zero_weights_give_uniform_probs() {
        let d = generate_synthetic(&GeneratorConfig {
            train: 4,
            dev: 1,
            test: 1,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let dims = AdvgenDims {
            embed: 5,
            hidden: 6,
            world: 4,
        };
        let mut g = AdviceGenerator::new(Head::Source, instruction_vocab(&d.train), dims, &mut Rng::new(0, 0)).unwrap();
        for p in g.store_mut().iter_mut() {
            p.value.fill(0.0);
        }
        let e = &d.train[0];
        let rp = g.forward(&e.instruction, &e.world).unwrap();
        assert!(rp.probs.iter().all(|&p| (p - 0.25).abs() < 1e-9));
        assert_eq!((rp.top1, rp.top2), (Quadrant::TopLeft, Quadrant::TopRight));
    }

    #[test]
    fn union_advice_phrases() {
        let t = Templates::builtin();
        let mut rng = Rng::new(0, 0);
        let rp = RegionPrediction::from_probs([0.5, 0.1, 0.3, 0.1]);
        let s = make_union_advice(&rp, Head::Target, &t.test, &mut rng);
        assert!(s.text.contains("left half"), "{}", s.text);
        let rp = RegionPrediction::from_probs([0.5, 0.1, 0.1, 0.3]);
        let s = make_union_advice(&rp, Head::Target, &t.test, &mut rng);
        assert!(s.text.contains("top left or the lower right"), "{}", s.text);
    }

    #[test]
    fn input_specific_region_geometry() {
        let t = Templates::builtin();
        let grid = CellGrid::default();
        let mut rng = Rng::new(0, 0);
        let at = |x, z| Prediction {
            source: Coordinate::new(x, 0.05, z),
            target: Coordinate::new(x, 0.05, z),
            advice: HeadAdvice::none(),
        };
        let a = input_specific_from(at(0.0, 0.0), Head::Target, &t.test, &grid, &mut rng);
        assert_eq!(a.region, Region::new(-0.5, 0.5, -0.5, 0.5));
        let a = input_specific_from(at(0.97, -0.99), Head::Source, &t.test, &grid, &mut rng);
        assert_eq!(a.region, Region::new(0.0, 1.0, -1.0, 0.0));
        assert!(a.advised_region.within_board());
    }
}
