#![allow(dead_code)]

use std::sync::Arc;

use advice_core::advgen::{AdvgenDims, AdviceGenerator};
use advice_core::data::{generate_synthetic, Dataset, GeneratorConfig};
use advice_core::grounding::{grounder_vocab, Grounder, GrounderDims, GrounderKind};
use advice_core::lang::{CellGrid, Templates};
use advice_core::predictor::{instruction_vocab, E2EPredictor, PredictorDims, PredictorKind};
use advice_core::protocols::ModelSet;
use advice_core::world::Head;
use advice_core::Rng;
use blocks_advice::api::AppState;
use blocks_advice::registry::ModelRegistry;
use blocks_advice::store::SessionStore;

pub fn dataset() -> Dataset {
    generate_synthetic(&GeneratorConfig {
        train: 40,
        dev: 10,
        test: 10,
        seed: 5,
        ..Default::default()
    })
    .unwrap()
}

/// Untrained but complete model set with small layers; predictions are
/// meaningless, which is fine for exercising the protocol plumbing.
pub fn tiny_models(d: &Dataset) -> ModelSet {
    let t = Templates::builtin();
    let grid = CellGrid::default();
    let mut rng = Rng::new(1, 0);
    let gd = GrounderDims { embed: 8, hidden: 8, proj: 8 };
    let trunk = |kind, rng: &mut Rng| {
        Grounder::new(kind, grounder_vocab(kind, &t, &grid), gd, rng)
            .unwrap()
            .frozen_trunk()
            .unwrap()
    };
    let iv = instruction_vocab(&d.train);
    let pd = PredictorDims { embed: 8, hidden: 8 };
    let ad = AdvgenDims { embed: 8, hidden: 8, world: 20 };
    let mut m = ModelSet::empty(t.clone(), grid);
    m.baseline = Some(E2EPredictor::new(PredictorKind::Baseline, iv.clone(), pd, None, &mut rng).unwrap());
    let rt = trunk(GrounderKind::Restrictive, &mut rng);
    m.restrictive = Some(E2EPredictor::new(PredictorKind::Restrictive, iv.clone(), pd, Some(rt), &mut rng).unwrap());
    let ct = trunk(GrounderKind::Corrective, &mut rng);
    m.corrective = Some(E2EPredictor::new(PredictorKind::Corrective, iv.clone(), pd, Some(ct), &mut rng).unwrap());
    m.advgen_source = Some(AdviceGenerator::new(Head::Source, iv.clone(), ad, &mut rng).unwrap());
    m.advgen_target = Some(AdviceGenerator::new(Head::Target, iv, ad, &mut rng).unwrap());
    m
}

pub fn state_with(store: SessionStore) -> (Arc<AppState>, Dataset) {
    let d = dataset();
    let reg = Arc::new(ModelRegistry::from_models(tiny_models(&d)));
    (Arc::new(AppState::new(reg, Arc::new(d.clone()), store, 9)), d)
}

pub fn state() -> (Arc<AppState>, Dataset) {
    state_with(SessionStore::new())
}
