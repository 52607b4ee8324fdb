//! Interactive advice protocols as explicit state machines, a simulated
//! advisor that answers from gold labels, and the evaluation harness.
//!
//! Every session starts in `AwaitingPredict`. The system `Predict` input
//! produces the first prediction; protocols that take human feedback then
//! wait in `AwaitingFeedback` for one round of per-head events and re-predict
//! at most once. Source and target are advised independently.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::advgen::{input_specific_from, make_ranked_advice, make_union_advice, region_accuracy, AdviceGenerator, RegionAccuracy, RegionPrediction};
use crate::data::Example;
use crate::lang::{render_corrective, render_restrictive, AdviceKind, AdviceSentence, CellGrid, NamedRegion, TemplateSet, Templates};
use crate::predictor::{E2EPredictor, HeadAdvice, Prediction};
use crate::rng::Rng;
use crate::world::{direction_of, normalized_error, quadrant_of, BoardState, Coordinate, Head};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Baseline,
    Restrictive,
    Corrective,
    Retry,
    SelfGenUnion,
    SelfGenInputSpecific,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 6] = [
        ProtocolKind::Baseline,
        ProtocolKind::Restrictive,
        ProtocolKind::Corrective,
        ProtocolKind::Retry,
        ProtocolKind::SelfGenUnion,
        ProtocolKind::SelfGenInputSpecific,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Baseline => "baseline",
            ProtocolKind::Restrictive => "restrictive",
            ProtocolKind::Corrective => "corrective",
            ProtocolKind::Retry => "retry",
            ProtocolKind::SelfGenUnion => "self_gen_union",
            ProtocolKind::SelfGenInputSpecific => "self_gen_input_specific",
        }
    }

    /// Whether a person (or the oracle) gets a feedback turn.
    pub fn takes_feedback(self) -> bool {
        matches!(self, ProtocolKind::Restrictive | ProtocolKind::Corrective | ProtocolKind::Retry)
    }

    pub fn needs_advgen(self) -> bool {
        matches!(self, ProtocolKind::Retry | ProtocolKind::SelfGenUnion)
    }

    /// Event kinds accepted in the feedback phase.
    pub fn feedback_kinds(self) -> &'static [EventKind] {
        match self {
            ProtocolKind::Restrictive => &[EventKind::RestrictiveAdvice, EventKind::Accept],
            ProtocolKind::Corrective => &[EventKind::CorrectiveAdvice, EventKind::Accept],
            ProtocolKind::Retry => &[EventKind::Retry, EventKind::Accept],
            _ => &[],
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let k = s.trim().to_ascii_lowercase().replace('-', "_");
        ProtocolKind::ALL
            .into_iter()
            .find(|p| p.name() == k)
            .ok_or_else(|| {
                let names: Vec<_> = ProtocolKind::ALL.iter().map(|p| p.name()).collect();
                format!("unknown protocol `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingPredict,
    AwaitingFeedback,
    Done,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    None,
    RestrictiveAdvice,
    CorrectiveAdvice,
    Retry,
    Accept,
}

impl EventKind {
    pub fn is_advice(self) -> bool {
        matches!(self, EventKind::RestrictiveAdvice | EventKind::CorrectiveAdvice)
    }

    pub fn name(self) -> &'static str {
        match self {
            EventKind::None => "none",
            EventKind::RestrictiveAdvice => "restrictive_advice",
            EventKind::CorrectiveAdvice => "corrective_advice",
            EventKind::Retry => "retry",
            EventKind::Accept => "accept",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvisorEvent {
    pub kind: EventKind,
    pub head: Option<Head>,
    pub sentence: Option<AdviceSentence>,
}

impl AdvisorEvent {
    pub fn accept(head: Head) -> Self {
        Self {
            kind: EventKind::Accept,
            head: Some(head),
            sentence: None,
        }
    }

    pub fn retry(head: Head) -> Self {
        Self {
            kind: EventKind::Retry,
            head: Some(head),
            sentence: None,
        }
    }

    pub fn advice(head: Head, sentence: AdviceSentence) -> Self {
        let kind = match sentence.kind {
            AdviceKind::Corrective => EventKind::CorrectiveAdvice,
            _ => EventKind::RestrictiveAdvice,
        };
        Self {
            kind,
            head: Some(head),
            sentence: Some(sentence),
        }
    }

    /// Advice chosen by the system itself (self-generated protocols).
    fn system(head: Head, sentence: AdviceSentence) -> Self {
        Self {
            kind: EventKind::None,
            head: Some(head),
            sentence: Some(sentence),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[error("{message}")]
pub struct ProtocolError {
    pub message: String,
    /// Inputs that would have been legal.
    pub expected: Vec<String>,
}

impl ProtocolError {
    fn new(message: impl Into<String>, expected: &[&str]) -> Self {
        Self {
            message: message.into(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Input {
    /// System step producing the first prediction.
    Predict,
    /// One feedback round: at most one event per head.
    Feedback(Vec<AdvisorEvent>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gold {
    pub source: Coordinate,
    pub target: Coordinate,
}

impl Gold {
    pub fn get(&self, head: Head) -> Coordinate {
        match head {
            Head::Source => self.source,
            Head::Target => self.target,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionExample {
    pub id: Option<String>,
    pub instruction: String,
    pub world: BoardState,
    pub gold: Option<Gold>,
}

impl From<&Example> for SessionExample {
    fn from(e: &Example) -> Self {
        Self {
            id: Some(e.id.clone()),
            instruction: e.instruction.clone(),
            world: e.world.clone(),
            gold: Some(Gold {
                source: e.gold_source(),
                target: e.target,
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub prediction: Prediction,
    /// Events that answered this prediction; empty for the final one.
    pub events: Vec<AdvisorEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub protocol: ProtocolKind,
    pub example: SessionExample,
    pub phase: Phase,
    pub history: Vec<Turn>,
    pub models: BTreeMap<String, String>,
    /// Seeds template choice for system-rendered advice.
    pub seed: u64,
    /// Advice-generator output per head, for protocols that use it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regions: Option<[RegionPrediction; 2]>,
}

impl Session {
    pub fn new(id: impl Into<String>, protocol: ProtocolKind, example: SessionExample, models: &ModelSet, seed: u64) -> Self {
        Self {
            id: id.into(),
            protocol,
            example,
            phase: Phase::AwaitingPredict,
            history: Vec::new(),
            models: models.ids_for(protocol),
            seed,
            regions: None,
        }
    }

    pub fn current(&self) -> Option<&Prediction> {
        self.history.last().map(|t| &t.prediction)
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    /// Events given so far across all turns.
    pub fn events(&self) -> impl Iterator<Item = &AdvisorEvent> {
        self.history.iter().flat_map(|t| t.events.iter())
    }

    /// Inputs legal in the current phase.
    pub fn expected(&self) -> Vec<&'static str> {
        match self.phase {
            Phase::AwaitingPredict => vec!["predict"],
            Phase::AwaitingFeedback => self.protocol.feedback_kinds().iter().map(|k| k.name()).collect(),
            Phase::Done => vec![],
        }
    }
}

/// The trained models a protocol run can draw on.
#[derive(Clone, Debug)]
pub struct ModelSet {
    pub baseline: Option<E2EPredictor>,
    pub restrictive: Option<E2EPredictor>,
    pub corrective: Option<E2EPredictor>,
    pub advgen_source: Option<AdviceGenerator>,
    pub advgen_target: Option<AdviceGenerator>,
    pub templates: Templates,
    pub grid: CellGrid,
}

/// Content-addressed model id: architecture name plus weight fingerprint.
pub fn model_id(name: &str, fingerprint: u64) -> String {
    format!("{name}-{fingerprint:016x}")
}

impl ModelSet {
    pub fn empty(templates: Templates, grid: CellGrid) -> Self {
        Self {
            baseline: None,
            restrictive: None,
            corrective: None,
            advgen_source: None,
            advgen_target: None,
            templates,
            grid,
        }
    }

    pub fn predictor(&self, p: ProtocolKind) -> Result<&E2EPredictor, Error> {
        let (slot, name) = match p {
            ProtocolKind::Baseline => (&self.baseline, "baseline"),
            ProtocolKind::Corrective => (&self.corrective, "corrective"),
            _ => (&self.restrictive, "restrictive"),
        };
        slot.as_ref().ok_or_else(|| Error::MissingModel(format!("{name} predictor (needed by {p})")))
    }

    pub fn advgen(&self, head: Head) -> Result<&AdviceGenerator, Error> {
        match head {
            Head::Source => self.advgen_source.as_ref(),
            Head::Target => self.advgen_target.as_ref(),
        }
        .ok_or_else(|| Error::MissingModel(format!("advgen {head}")))
    }

    /// Checks every model the protocol needs is present.
    pub fn check(&self, p: ProtocolKind) -> Result<(), Error> {
        self.predictor(p)?;
        if p.needs_advgen() {
            for h in Head::BOTH {
                self.advgen(h)?;
            }
        }
        Ok(())
    }

    /// Content-addressed ids of the models a protocol uses.
    pub fn ids_for(&self, p: ProtocolKind) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        if let Ok(m) = self.predictor(p) {
            out.insert("predictor".into(), model_id(m.kind.architecture(), m.store().fingerprint()));
        }
        if p.needs_advgen() {
            for h in Head::BOTH {
                if let Ok(g) = self.advgen(h) {
                    out.insert(format!("advgen_{h}"), model_id(crate::advgen::architecture(h), g.store().fingerprint()));
                }
            }
        }
        out
    }

    pub fn eval_templates(&self) -> &TemplateSet {
        &self.templates.test
    }
}

fn session_rng(s: &Session) -> Rng {
    Rng::named(s.seed, &format!("session.turn.{}", s.history.len()))
}

/// Advances a session by one input.
///
/// On error the session is left untouched.
pub fn step(session: &mut Session, input: Input, models: &ModelSet) -> Result<(), Error> {
    let p = session.protocol;
    match (session.phase, input) {
        (Phase::Done, _) => Err(ProtocolError::new(format!("session {} is finished", session.id), &[]).into()),
        (Phase::AwaitingPredict, Input::Predict) => first_predict(session, models),
        (Phase::AwaitingPredict, Input::Feedback(_)) => {
            Err(ProtocolError::new("no prediction to give feedback on yet", &["predict"]).into())
        }
        (Phase::AwaitingFeedback, Input::Predict) => {
            Err(ProtocolError::new("awaiting feedback, not a predict step", &session.expected()).into())
        }
        (Phase::AwaitingFeedback, Input::Feedback(events)) => {
            validate_feedback(p, &events, &session.expected())?;
            feedback(session, events, models)
        }
    }
}

fn validate_feedback(p: ProtocolKind, events: &[AdvisorEvent], expected: &[&str]) -> Result<(), ProtocolError> {
    if events.is_empty() {
        return Err(ProtocolError::new("empty feedback", expected));
    }
    let mut seen = [false; 2];
    for e in events {
        let Some(h) = e.head else {
            return Err(ProtocolError::new("feedback event must name a head", expected));
        };
        if std::mem::replace(&mut seen[h.index()], true) {
            return Err(ProtocolError::new(format!("two events for the {h} head"), expected));
        }
        if !p.feedback_kinds().contains(&e.kind) {
            return Err(ProtocolError::new(format!("{} is not accepted by a {p} session", e.kind.name()), expected));
        }
        let has_text = e.sentence.as_ref().is_some_and(|s| !s.is_null() && !s.text.trim().is_empty());
        if e.kind.is_advice() != has_text {
            return Err(ProtocolError::new(
                format!("{} event {} a sentence", e.kind.name(), if has_text { "must not carry" } else { "needs" }),
                expected,
            ));
        }
    }
    Ok(())
}

fn first_predict(s: &mut Session, models: &ModelSet) -> Result<(), Error> {
    models.check(s.protocol)?;
    let m = models.predictor(s.protocol)?;
    let ts = models.eval_templates();
    let ex = &s.example;
    let mut rng = session_rng(s);
    match s.protocol {
        ProtocolKind::Baseline | ProtocolKind::Restrictive | ProtocolKind::Corrective => {
            let pred = m.predict(&ex.instruction, &ex.world, &HeadAdvice::none())?;
            s.history.push(Turn {
                prediction: pred,
                events: vec![],
            });
            s.phase = if s.protocol == ProtocolKind::Baseline {
                Phase::Done
            } else {
                Phase::AwaitingFeedback
            };
        }
        ProtocolKind::Retry | ProtocolKind::SelfGenUnion => {
            let mut regions = Vec::with_capacity(2);
            let mut advice = HeadAdvice::none();
            for h in Head::BOTH {
                let rp = models.advgen(h)?.forward(&ex.instruction, &ex.world)?;
                let sentence = if s.protocol == ProtocolKind::Retry {
                    make_ranked_advice(&rp, 0, h, ts, &mut rng)
                } else {
                    make_union_advice(&rp, h, ts, &mut rng)
                };
                advice.set(h, Some(sentence));
                regions.push(rp);
            }
            let pred = m.predict(&ex.instruction, &ex.world, &advice)?;
            s.regions = Some([regions[0].clone(), regions[1].clone()]);
            s.history.push(Turn {
                prediction: pred,
                events: vec![],
            });
            s.phase = if s.protocol == ProtocolKind::Retry {
                Phase::AwaitingFeedback
            } else {
                Phase::Done
            };
        }
        ProtocolKind::SelfGenInputSpecific => {
            let first = m.predict(&ex.instruction, &ex.world, &HeadAdvice::none())?;
            let mut advice = HeadAdvice::none();
            let mut events = Vec::with_capacity(2);
            for h in Head::BOTH {
                let a = input_specific_from(first.clone(), h, ts, &models.grid, &mut rng);
                events.push(AdvisorEvent::system(h, a.sentence.clone()));
                advice.set(h, Some(a.sentence));
            }
            let second = m.predict(&ex.instruction, &ex.world, &advice)?;
            s.history.push(Turn {
                prediction: first,
                events,
            });
            s.history.push(Turn {
                prediction: second,
                events: vec![],
            });
            s.phase = Phase::Done;
        }
    }
    Ok(())
}

fn feedback(s: &mut Session, events: Vec<AdvisorEvent>, models: &ModelSet) -> Result<(), Error> {
    if events.iter().all(|e| e.kind == EventKind::Accept) {
        s.history.last_mut().expect("feedback follows a prediction").events = events;
        s.phase = Phase::Done;
        return Ok(());
    }
    let m = models.predictor(s.protocol)?;
    // Heads without new advice keep whatever advice produced their current answer.
    let mut advice = s.current().expect("feedback follows a prediction").advice.clone();
    let mut rng = session_rng(s);
    for e in &events {
        let h = e.head.expect("validated");
        match e.kind {
            EventKind::RestrictiveAdvice | EventKind::CorrectiveAdvice => advice.set(h, e.sentence.clone()),
            EventKind::Retry => {
                let rp = &s.regions.as_ref().expect("retry sessions carry region predictions")[h.index()];
                advice.set(h, Some(make_ranked_advice(rp, 1, h, models.eval_templates(), &mut rng)));
            }
            EventKind::Accept | EventKind::None => {}
        }
    }
    let pred = m.predict(&s.example.instruction, &s.example.world, &advice)?;
    s.history.last_mut().expect("feedback follows a prediction").events = events;
    s.history.push(Turn {
        prediction: pred,
        events: vec![],
    });
    s.phase = Phase::Done;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    /// Advise on every example, not just wrong ones.
    pub always_advice: bool,
    /// Corrective advice is given above this many block lengths of error.
    pub corrective_threshold: f64,
    /// When false the oracle never asks for a retry.
    pub retry: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            always_advice: false,
            corrective_threshold: 1.0,
            retry: true,
        }
    }
}

/// What a truthful advisor who can see the gold answer would say.
#[allow(clippy::too_many_arguments)]
pub fn oracle_advise(
    protocol: ProtocolKind,
    pred: &Prediction,
    gold: Option<&Gold>,
    head: Head,
    block_length: f64,
    cfg: &OracleConfig,
    ts: &TemplateSet,
    rng: &mut Rng,
) -> Result<AdvisorEvent, Error> {
    let gold = gold
        .ok_or_else(|| Error::Contract("the oracle advisor needs gold labels".into()))?
        .get(head);
    let p = pred.get(head);
    let wrong_region = quadrant_of(&p) != quadrant_of(&gold);
    Ok(match protocol {
        ProtocolKind::Restrictive if wrong_region || cfg.always_advice => AdvisorEvent::advice(
            head,
            render_restrictive(head, NamedRegion::Quadrant(quadrant_of(&gold)), ts, rng),
        ),
        ProtocolKind::Corrective if normalized_error(&p, &gold, block_length) > cfg.corrective_threshold || cfg.always_advice => {
            match direction_of(&p, &gold) {
                Ok(d) => AdvisorEvent::advice(head, render_corrective(d, ts, rng)),
                Err(_) => AdvisorEvent::accept(head),
            }
        }
        ProtocolKind::Retry if cfg.retry && (wrong_region || cfg.always_advice) => AdvisorEvent::retry(head),
        ProtocolKind::Restrictive | ProtocolKind::Corrective | ProtocolKind::Retry => AdvisorEvent::accept(head),
        _ => {
            return Err(ProtocolError::new(format!("a {protocol} session takes no advisor events"), &[]).into());
        }
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub median: f64,
}

impl ErrorStats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Self {
            mean: v.iter().sum::<f64>() / n as f64,
            median,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub oracle: OracleConfig,
    /// Use the advice-trained model but never give it advice.
    pub train_advice_only: bool,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: ProtocolKind,
    pub models: BTreeMap<String, String>,
    pub source: ErrorStats,
    pub target: ErrorStats,
    /// Examples on which at least one head received advice or a retry.
    pub advice_given: usize,
    pub total: usize,
    pub seed: u64,
    #[serde(default)]
    pub options: EvalOptions,
}

impl EvalReport {
    pub fn head(&self, h: Head) -> &ErrorStats {
        match h {
            Head::Source => &self.source,
            Head::Target => &self.target,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalRun {
    pub report: EvalReport,
    pub sessions: Vec<Session>,
}

/// Runs every example through the protocol with the oracle advisor.
/// A pure function of (models, examples, options).
pub fn run_eval(
    protocol: ProtocolKind,
    examples: &[Example],
    block_length: f64,
    models: &ModelSet,
    opts: &EvalOptions,
) -> Result<EvalRun, Error> {
    models.check(protocol)?;
    let ts = models.eval_templates();
    let mut sessions = Vec::with_capacity(examples.len());
    let mut errs: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut advised = 0usize;
    for e in examples {
        let mut rng = Rng::named(opts.seed, &format!("eval.{protocol}.{}", e.id));
        let mut s = Session::new(e.id.clone(), protocol, SessionExample::from(e), models, rng.next_u64());
        if opts.train_advice_only {
            // One unadvised prediction from the protocol's model.
            let pred = models.predictor(protocol)?.predict(&e.instruction, &e.world, &HeadAdvice::none())?;
            s.history.push(Turn {
                prediction: pred,
                events: vec![],
            });
            s.phase = Phase::Done;
        } else {
            step(&mut s, Input::Predict, models)?;
            if s.phase == Phase::AwaitingFeedback {
                let pred = s.current().expect("predicted").clone();
                let events = Head::BOTH
                    .into_iter()
                    .map(|h| oracle_advise(protocol, &pred, s.example.gold.as_ref(), h, block_length, &opts.oracle, ts, &mut rng))
                    .collect::<Result<Vec<_>, _>>()?;
                step(&mut s, Input::Feedback(events), models)?;
            }
        }
        if s.events().any(|ev| matches!(ev.kind, EventKind::RestrictiveAdvice | EventKind::CorrectiveAdvice | EventKind::Retry)) {
            advised += 1;
        }
        let fin = s.current().expect("done sessions have a prediction");
        for h in Head::BOTH {
            errs[h.index()].push(normalized_error(&fin.get(h), &e.gold(h), block_length));
        }
        sessions.push(s);
    }
    let report = EvalReport {
        protocol,
        models: models.ids_for(protocol),
        source: ErrorStats::of(&errs[0]),
        target: ErrorStats::of(&errs[1]),
        advice_given: advised,
        total: examples.len(),
        seed: opts.seed,
        options: *opts,
    };
    Ok(EvalRun { report, sessions })
}

/// Of the re-predictions that followed region advice, how many landed inside
/// the advised region: `(inside, advised)`.
pub fn advice_follow_counts(sessions: &[Session]) -> (usize, usize) {
    let (mut inside, mut total) = (0, 0);
    for s in sessions {
        for (i, turn) in s.history.iter().enumerate() {
            let Some(next) = s.history.get(i + 1) else { continue };
            for ev in &turn.events {
                let (Some(h), Some(sentence)) = (ev.head, &ev.sentence) else { continue };
                if let Some(hit) = sentence.meaning.as_ref().and_then(|m| m.contains(&next.prediction.get(h))) {
                    total += 1;
                    inside += hit as usize;
                }
            }
        }
    }
    (inside, total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub head: Head,
    #[serde(flatten)]
    pub accuracy: RegionAccuracy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<EvalReport>,
    pub accuracy: Vec<AccuracyRow>,
}

impl Comparison {
    /// Fixed-width text rendering: median and mean per head, one protocol per line.
    pub fn table(&self) -> String {
        let mut out = format!("{:<26} {:^19} {:^19}\n", "", "Source", "Target");
        out += &format!(
            "{:<26} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
            "protocol", "Median", "Mean", "Median", "Mean", "advised"
        );
        for r in &self.rows {
            out += &format!(
                "{:<26} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>4}/{:<4}\n",
                r.protocol.name(),
                r.source.median,
                r.source.mean,
                r.target.median,
                r.target.mean,
                r.advice_given,
                r.total
            );
        }
        out += &format!("\n{:<26} {:>9} {:>9}\n", "advgen", "top-1", "top-2");
        for a in &self.accuracy {
            out += &format!("{:<26} {:>9.4} {:>9.4}\n", a.head.to_string(), a.accuracy.top1, a.accuracy.top2);
        }
        out
    }
}

/// All six protocols plus advice-generator accuracy on the same examples.
pub fn compare_protocols(examples: &[Example], block_length: f64, models: &ModelSet, opts: &EvalOptions) -> Result<Comparison, Error> {
    let rows = ProtocolKind::ALL
        .into_iter()
        .map(|p| run_eval(p, examples, block_length, models, opts).map(|r| r.report))
        .collect::<Result<Vec<_>, _>>()?;
    let accuracy = Head::BOTH
        .into_iter()
        .map(|h| {
            Ok(AccuracyRow {
                head: h,
                accuracy: region_accuracy(models.advgen(h)?, examples)?,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(Comparison { rows, accuracy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advgen::{AdvgenDims, AdviceGenerator};
    use crate::data::{generate_synthetic, Dataset, GeneratorConfig};
    use crate::grounding::{grounder_vocab, FrozenTrunk, GrounderDims, GrounderKind};
    use crate::predictor::{instruction_vocab, PredictorDims, PredictorKind};
    use crate::world::Quadrant;

    fn tiny() -> (Dataset, ModelSet) {
        let d = generate_synthetic(&GeneratorConfig {
            train: 8,
            dev: 4,
            test: 6,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let templates = Templates::builtin();
        let grid = CellGrid::default();
        let iv = instruction_vocab(&d.train);
        let pd = PredictorDims { embed: 6, hidden: 8 };
        let gd = GrounderDims {
            embed: 5,
            hidden: 6,
            proj: 4,
        };
        let mut rng = Rng::new(1, 0);
        let trunk = |k: GrounderKind, rng: &mut Rng| {
            let v = grounder_vocab(k, &templates, &grid);
            let mut t = FrozenTrunk::skeleton(k, v, gd).unwrap();
            for p in t.store_mut_for_load().iter_mut() {
                p.value.data_mut().iter_mut().for_each(|x| *x = rng.uniform_f32(-0.3, 0.3));
            }
            t
        };
        let rt = trunk(GrounderKind::Restrictive, &mut rng);
        let ct = trunk(GrounderKind::Corrective, &mut rng);
        let ad = AdvgenDims {
            embed: 6,
            hidden: 8,
            world: 4,
        };
        let models = ModelSet {
            baseline: Some(E2EPredictor::new(PredictorKind::Baseline, iv.clone(), pd, None, &mut rng).unwrap()),
            restrictive: Some(E2EPredictor::new(PredictorKind::Restrictive, iv.clone(), pd, Some(rt), &mut rng).unwrap()),
            corrective: Some(E2EPredictor::new(PredictorKind::Corrective, iv.clone(), pd, Some(ct), &mut rng).unwrap()),
            advgen_source: Some(AdviceGenerator::new(Head::Source, iv.clone(), ad, &mut rng).unwrap()),
            advgen_target: Some(AdviceGenerator::new(Head::Target, iv, ad, &mut rng).unwrap()),
            templates,
            grid,
        };
        (d, models)
    }

    fn start(p: ProtocolKind, d: &Dataset, m: &ModelSet) -> Session {
        let mut s = Session::new("s", p, SessionExample::from(&d.test[0]), m, 7);
        step(&mut s, Input::Predict, m).unwrap();
        s
    }

    fn protocol_err(r: Result<(), Error>) -> ProtocolError {
        match r {
            Err(Error::Protocol(e)) => e,
            other => panic!("expected a protocol error, got {other:?}"),
        }
    }

    #[test]
    fn baseline_is_one_prediction() {
        let (d, m) = tiny();
        let mut s = start(ProtocolKind::Baseline, &d, &m);
        assert_eq!((s.phase, s.history.len()), (Phase::Done, 1));
        let before = s.clone();
        let e = protocol_err(step(&mut s, Input::Feedback(vec![AdvisorEvent::accept(Head::Source)]), &m));
        assert!(e.expected.is_empty());
        assert_eq!(s, before);
    }

    #[test]
    fn restrictive_accept_keeps_one_prediction() {
        let (d, m) = tiny();
        let mut s = start(ProtocolKind::Restrictive, &d, &m);
        assert_eq!(s.phase, Phase::AwaitingFeedback);
        let ev = Head::BOTH.into_iter().map(AdvisorEvent::accept).collect();
        step(&mut s, Input::Feedback(ev), &m).unwrap();
        assert_eq!((s.phase, s.history.len()), (Phase::Done, 1));
    }

    #[test]
    fn restrictive_advice_repredicts_once() {
        let (d, m) = tiny();
        let mut s = start(ProtocolKind::Restrictive, &d, &m);
        let sentence = AdviceSentence::free_text("the target is in the lower left", AdviceKind::Restrictive);
        step(&mut s, Input::Feedback(vec![AdvisorEvent::advice(Head::Target, sentence)]), &m).unwrap();
        assert_eq!((s.phase, s.history.len()), (Phase::Done, 2));
        // The unadvised head is unchanged.
        assert_eq!(s.history[0].prediction.source, s.history[1].prediction.source);
        assert!(step(&mut s, Input::Predict, &m).is_err());
    }

    #[test]
    fn wrong_event_kinds_list_expected() {
        let (d, m) = tiny();
        let mut s = start(ProtocolKind::Restrictive, &d, &m);
        let e = protocol_err(step(&mut s, Input::Feedback(vec![AdvisorEvent::retry(Head::Source)]), &m));
        assert_eq!(e.expected, vec!["restrictive_advice", "accept"]);
        let dup = vec![AdvisorEvent::accept(Head::Source), AdvisorEvent::accept(Head::Source)];
        protocol_err(step(&mut s, Input::Feedback(dup), &m));
        let bare = AdvisorEvent {
            kind: EventKind::RestrictiveAdvice,
            head: Some(Head::Source),
            sentence: None,
        };
        protocol_err(step(&mut s, Input::Feedback(vec![bare]), &m));
        assert_eq!(s.phase, Phase::AwaitingFeedback);
    }

    #[test]
    fn self_gen_rejects_human_events() {
        let (d, m) = tiny();
        for p in [ProtocolKind::SelfGenUnion, ProtocolKind::SelfGenInputSpecific] {
            let mut s = start(p, &d, &m);
            assert!(s.is_done());
            let sentence = AdviceSentence::free_text("the block is in the top left", AdviceKind::Restrictive);
            protocol_err(step(&mut s, Input::Feedback(vec![AdvisorEvent::advice(Head::Source, sentence)]), &m));
        }
        let s = start(ProtocolKind::SelfGenInputSpecific, &d, &m);
        assert_eq!(s.history.len(), 2);
        assert_eq!(s.history[0].events.len(), 2);
    }

    #[test]
    fn retry_uses_second_region() {
        let (d, m) = tiny();
        let mut s = start(ProtocolKind::Retry, &d, &m);
        let rp = s.regions.clone().unwrap();
        let first = s.current().unwrap().advice.target.clone().unwrap();
        assert_eq!(first.meaning, Some(crate::lang::AdviceMeaning::Regions(vec![rp[1].top1.region()])));
        step(&mut s, Input::Feedback(vec![AdvisorEvent::retry(Head::Target)]), &m).unwrap();
        let fin = s.current().unwrap();
        let second = fin.advice.target.clone().unwrap();
        assert_eq!(second.meaning, Some(crate::lang::AdviceMeaning::Regions(vec![rp[1].top2.region()])));
        // The source head keeps its top-1 advice.
        assert_eq!(fin.advice.source, s.history[0].prediction.advice.source);
        assert!(s.is_done());
    }

    #[test]
    fn oracle_rules() {
        let ts = &Templates::builtin().test;
        let mut rng = Rng::new(0, 0);
        let cfg = OracleConfig::default();
        let at = |x: f64, z: f64| Prediction {
            source: Coordinate::new(x, 0.05, z),
            target: Coordinate::new(x, 0.05, z),
            advice: HeadAdvice::none(),
        };
        let gold = Gold {
            source: Coordinate::new(-0.5, 0.05, 0.5),
            target: Coordinate::new(-0.5, 0.05, -0.5),
        };
        let pred = at(-0.4, 0.6);
        let e = oracle_advise(ProtocolKind::Restrictive, &pred, Some(&gold), Head::Source, 0.1, &cfg, ts, &mut rng).unwrap();
        assert_eq!(e.kind, EventKind::Accept);
        let e = oracle_advise(ProtocolKind::Restrictive, &pred, Some(&gold), Head::Target, 0.1, &cfg, ts, &mut rng).unwrap();
        assert_eq!(e.kind, EventKind::RestrictiveAdvice);
        let s = e.sentence.unwrap();
        assert!(s.text.contains("lower left"), "{}", s.text);
        assert_eq!(s.meaning.unwrap().contains(&gold.target), Some(true));
        // 0.3 block lengths off: below the corrective threshold.
        let near = at(-0.5, 0.53);
        let e = oracle_advise(ProtocolKind::Corrective, &near, Some(&gold), Head::Source, 0.1, &cfg, ts, &mut rng).unwrap();
        assert_eq!(e.kind, EventKind::Accept);
        let e = oracle_advise(ProtocolKind::Corrective, &pred, Some(&gold), Head::Target, 0.1, &cfg, ts, &mut rng).unwrap();
        assert_eq!(e.kind, EventKind::CorrectiveAdvice);
        let e = oracle_advise(ProtocolKind::Retry, &pred, Some(&gold), Head::Target, 0.1, &cfg, ts, &mut rng).unwrap();
        assert_eq!(e.kind, EventKind::Retry);
        let off = OracleConfig { retry: false, ..cfg };
        let e = oracle_advise(ProtocolKind::Retry, &pred, Some(&gold), Head::Target, 0.1, &off, ts, &mut rng).unwrap();
        assert_eq!(e.kind, EventKind::Accept);
        assert!(oracle_advise(ProtocolKind::Restrictive, &pred, None, Head::Target, 0.1, &cfg, ts, &mut rng).is_err());
        assert!(oracle_advise(ProtocolKind::SelfGenUnion, &pred, Some(&gold), Head::Target, 0.1, &cfg, ts, &mut rng).is_err());
        assert_eq!(quadrant_of(&gold.target), Quadrant::BottomLeft);
    }

    #[test]
    fn baseline_report_matches_direct_evaluation() {
        let (d, m) = tiny();
        let r = run_eval(ProtocolKind::Baseline, &d.test, d.block_length, &m, &EvalOptions::default()).unwrap().report;
        let b = m.baseline.as_ref().unwrap();
        let mut src = Vec::new();
        for e in &d.test {
            let p = b.predict(&e.instruction, &e.world, &HeadAdvice::none()).unwrap();
            src.push(normalized_error(&p.source, &e.gold_source(), d.block_length));
        }
        assert_eq!(r.source, ErrorStats::of(&src));
        assert_eq!((r.advice_given, r.total), (0, d.test.len()));
    }

    #[test]
    fn eval_is_deterministic_and_report_round_trips() {
        let (d, m) = tiny();
        let opts = EvalOptions {
            seed: 3,
            ..EvalOptions::default()
        };
        let c1 = compare_protocols(&d.test, d.block_length, &m, &opts).unwrap();
        let c2 = compare_protocols(&d.test, d.block_length, &m, &opts).unwrap();
        assert_eq!(c1, c2);
        assert_eq!((c1.rows.len(), c1.accuracy.len()), (6, 2));
        let json = serde_json::to_string(&c1).unwrap();
        assert_eq!(serde_json::from_str::<Comparison>(&json).unwrap(), c1);
        assert!(c1.table().contains("self_gen_input_specific"));
        let (inside, total) = {
            let run = run_eval(ProtocolKind::Restrictive, &d.test, d.block_length, &m, &opts).unwrap();
            advice_follow_counts(&run.sessions)
        };
        assert!(inside <= total);
    }

    #[test]
    fn median_and_mean() {
        assert_eq!(ErrorStats::of(&[3.0, 1.0, 2.0]), ErrorStats { mean: 2.0, median: 2.0 });
        assert_eq!(ErrorStats::of(&[4.0, 1.0, 2.0, 3.0]).median, 2.5);
        assert_eq!(ErrorStats::of(&[]), ErrorStats::default());
    }
}
