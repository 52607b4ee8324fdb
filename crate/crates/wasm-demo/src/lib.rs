//! Browser demo: three model-free operations of the advice pipeline.
//!
//! * [`sample_example`] draws one synthetic board with its instruction and
//!   gold coordinates.
//! * [`advise`] plays the oracle advisor for a clicked prediction: the
//!   restrictive quadrant sentence, the corrective direction and the
//!   input-specific (centered) region a self-advising model would emit.
//! * [`check_advice`] runs free text through the restrictive grounder's
//!   tokenizer and applies the service's out-of-vocabulary rule.
//!
//! Each returns a JSON string; the `wasm_bindgen` exports are thin wrappers.

use advice_core::data::{generate_synthetic, GeneratorConfig};
use advice_core::grounding::{grounder_vocab, GrounderKind};
use advice_core::lang::{
    oov_fraction, render_centered, render_corrective, render_restrictive, words, AdviceSentence, CellGrid,
    NamedRegion, Templates,
};
use advice_core::world::{centered_region, direction_of, quadrant_of, Coordinate, Head, Region, QUADRANT_SIDE};
use advice_core::Rng;
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Same threshold the HTTP service uses to reject advice text.
pub const MAX_OOV: f64 = 0.5;

fn rect(r: &Region) -> serde_json::Value {
    json!({ "x_min": r.x_min, "x_max": r.x_max, "z_min": r.z_min, "z_max": r.z_max })
}

fn sentence(s: &AdviceSentence) -> serde_json::Value {
    json!({ "text": s.text, "kind": s.kind })
}

pub fn sample_example(seed: u64) -> Result<String, String> {
    let cfg = GeneratorConfig {
        train: 1,
        dev: 1,
        test: 1,
        seed,
        ..Default::default()
    };
    let d = generate_synthetic(&cfg).map_err(|e| e.to_string())?;
    let e = &d.train[0];
    Ok(json!({
        "id": e.id,
        "instruction": e.instruction,
        "blocks": e.world.blocks,
        "block_length": d.block_length,
        "source": e.gold(Head::Source),
        "target": e.gold(Head::Target),
    })
    .to_string())
}

fn parse_head(head: &str) -> Result<Head, String> {
    match head {
        "source" => Ok(Head::Source),
        "target" => Ok(Head::Target),
        other => Err(format!("unknown head `{other}` (expected source or target)")),
    }
}

/// Oracle feedback on a prediction at `(px, pz)` whose gold is `(gx, gz)`.
pub fn advise(px: f64, pz: f64, gx: f64, gz: f64, head: &str, seed: u64) -> Result<String, String> {
    let head = parse_head(head)?;
    let pred = Coordinate::new(px, 0.0, pz).clamped_to_board();
    let gold = Coordinate::new(gx, 0.0, gz).clamped_to_board();
    let templates = Templates::builtin();
    let ts = &templates.test;
    let grid = CellGrid::default();
    let mut rng = Rng::named(seed, "demo.advise");

    let q = quadrant_of(&gold);
    let restrictive = render_restrictive(head, NamedRegion::Quadrant(q), ts, &mut rng);
    let corrective = direction_of(&pred, &gold)
        .ok()
        .map(|d| sentence(&render_corrective(d, ts, &mut rng)));
    let region = centered_region(&pred, QUADRANT_SIDE);
    let centered = render_centered(head, &region, &grid, ts, &mut rng);
    let snapped = match &centered.meaning {
        Some(advice_core::lang::AdviceMeaning::Regions(rs)) => rs.first().copied(),
        _ => None,
    };
    Ok(json!({
        "restrictive": { "sentence": sentence(&restrictive), "region": rect(&q.region()), "quadrant": q },
        "corrective": corrective,
        "input_specific": {
            "sentence": sentence(&centered),
            "region": rect(&region),
            "advised_region": snapped.map(|r| rect(&r)),
            "gold_inside": snapped.is_some_and(|r| r.contains(&gold)),
        },
        "prediction_quadrant": quadrant_of(&pred),
    })
    .to_string())
}

#[derive(Serialize)]
struct Token {
    word: String,
    known: bool,
}

pub fn check_advice(text: &str) -> String {
    let vocab = grounder_vocab(GrounderKind::Restrictive, &Templates::builtin(), &CellGrid::default());
    let tokens: Vec<Token> = words(text)
        .into_iter()
        .map(|w| Token {
            known: vocab.contains(&w),
            word: w,
        })
        .collect();
    let oov = oov_fraction(text, &vocab);
    json!({
        "tokens": tokens,
        "oov_fraction": oov,
        "accepted": !tokens.is_empty() && oov <= MAX_OOV,
    })
    .to_string()
}

#[wasm_bindgen(js_name = sampleExample)]
pub fn sample_example_js(seed: u32) -> Result<String, JsError> {
    sample_example(seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = advise)]
pub fn advise_js(px: f64, pz: f64, gx: f64, gz: f64, head: &str, seed: u32) -> Result<String, JsError> {
    advise(px, pz, gx, gz, head, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = checkAdvice)]
pub fn check_advice_js(text: &str) -> String {
    check_advice(text)
}
