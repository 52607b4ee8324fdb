//! Advice sentences: template families, region and direction naming, the
//! centered-cell grid, and tokenization.

mod vocab;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;
use crate::world::{centered_region, Coordinate, Direction, Half, Head, Quadrant, Region, QUADRANT_SIDE};

pub use vocab::{words, Vocab, OOV_ID, OOV_TOKEN, PAD_ID, PAD_TOKEN};

const BUILTIN_TEMPLATES: &str = include_str!("../../assets/templates.json");
const SLOT: &str = "{}";

#[derive(Debug, Error)]
pub enum LangError {
    #[error("template error: {0}")]
    Template(String),
    #[error("vocabulary error: {0}")]
    Vocab(String),
    #[error("advice has no tokens")]
    EmptyAdvice,
    #[error("a union needs two different quadrants")]
    SameQuadrant,
    #[error("cannot decode cell phrase `{0}`")]
    CellPhrase(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateSetId {
    Train,
    Test,
}

/// Templates of one kind, split by the head they talk about.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadTemplates {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

impl HeadTemplates {
    pub fn for_head(&self, head: Head) -> &[String] {
        match head {
            Head::Source => &self.source,
            Head::Target => &self.target,
        }
    }

    fn all(&self) -> impl Iterator<Item = &String> {
        self.source.iter().chain(&self.target)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    #[serde(skip, default = "default_set_id")]
    pub id: TemplateSetId,
    pub restrictive: HeadTemplates,
    pub union: HeadTemplates,
    pub centered: HeadTemplates,
    pub corrective: Vec<String>,
}

fn default_set_id() -> TemplateSetId {
    TemplateSetId::Train
}

impl TemplateSet {
    fn all(&self) -> impl Iterator<Item = &String> {
        self.restrictive
            .all()
            .chain(self.union.all())
            .chain(self.centered.all())
            .chain(&self.corrective)
    }
}

/// The `templates.json` fixture: a train and a held-out test family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Templates {
    pub train: TemplateSet,
    pub test: TemplateSet,
}

impl Templates {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_TEMPLATES).expect("bundled templates are valid")
    }

    pub fn load(path: &Path) -> Result<Self, LangError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self, LangError> {
        let mut t: Templates =
            serde_json::from_str(text).map_err(|e| LangError::Template(e.to_string()))?;
        t.train.id = TemplateSetId::Train;
        t.test.id = TemplateSetId::Test;
        t.validate()?;
        Ok(t)
    }

    pub fn set(&self, id: TemplateSetId) -> &TemplateSet {
        match id {
            TemplateSetId::Train => &self.train,
            TemplateSetId::Test => &self.test,
        }
    }

    fn validate(&self) -> Result<(), LangError> {
        for set in [&self.train, &self.test] {
            for t in set.all() {
                if t.matches(SLOT).count() != 1 {
                    return Err(LangError::Template(format!(
                        "`{t}` must have exactly one {SLOT} slot"
                    )));
                }
            }
            let lists: [&[String]; 7] = [
                &set.restrictive.source,
                &set.restrictive.target,
                &set.union.source,
                &set.union.target,
                &set.centered.source,
                &set.centered.target,
                &set.corrective,
            ];
            if lists.iter().any(|l| l.is_empty()) {
                return Err(LangError::Template(format!(
                    "{:?} set has an empty template list",
                    set.id
                )));
            }
        }
        if let Some(shared) = self.train.all().find(|t| self.test.all().any(|u| u == *t)) {
            return Err(LangError::Template(format!(
                "`{shared}` appears in both train and test"
            )));
        }
        Ok(())
    }

    /// Every sentence the train family can produce; the advice vocabulary is
    /// built from these.
    pub fn train_sentences(&self, grid: &CellGrid) -> Vec<String> {
        render_all(&self.train, grid)
    }

    pub fn test_sentences(&self, grid: &CellGrid) -> Vec<String> {
        render_all(&self.test, grid)
    }
}

fn render_all(set: &TemplateSet, grid: &CellGrid) -> Vec<String> {
    let mut out = Vec::new();
    let region_fillers: Vec<String> = Quadrant::ALL
        .iter()
        .map(|q| q.to_string())
        .chain(Half::ALL.iter().map(|h| h.to_string()))
        .collect();
    let union_fillers: Vec<String> = union_pairs()
        .into_iter()
        .map(|(a, b)| union_phrase(a, b).expect("distinct pair"))
        .collect();
    let cell_fillers: Vec<String> = grid.cells().map(|(c, r)| grid.phrase(c, r)).collect();
    for (templates, fillers) in [
        (&set.restrictive, &region_fillers),
        (&set.union, &union_fillers),
        (&set.centered, &cell_fillers),
    ] {
        for t in templates.all() {
            for f in fillers {
                out.push(fill(t, f));
            }
        }
    }
    for t in &set.corrective {
        for d in Direction::ALL {
            out.push(fill(t, d.word()));
        }
    }
    out
}

fn fill(template: &str, filler: &str) -> String {
    template.replacen(SLOT, filler, 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdviceKind {
    Restrictive,
    Corrective,
    Union,
    Centered,
    Null,
}

/// What a rendered sentence asserts, kept alongside the text so truthfulness
/// can be checked without parsing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdviceMeaning {
    /// The coordinate lies in at least one of these regions.
    Regions(Vec<Region>),
    Direction(Direction),
}

impl AdviceMeaning {
    pub fn contains(&self, c: &Coordinate) -> Option<bool> {
        match self {
            AdviceMeaning::Regions(rs) => Some(rs.iter().any(|r| r.contains(c))),
            AdviceMeaning::Direction(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdviceSentence {
    pub text: String,
    pub kind: AdviceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meaning: Option<AdviceMeaning>,
    /// The words substituted into the template slot.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub filler: String,
}

impl AdviceSentence {
    pub fn null() -> Self {
        Self {
            text: String::new(),
            kind: AdviceKind::Null,
            meaning: None,
            filler: String::new(),
        }
    }

    /// Free text of unknown meaning, e.g. typed by a person.
    pub fn free_text(text: &str, kind: AdviceKind) -> Self {
        Self {
            text: text.to_string(),
            kind,
            meaning: None,
            filler: String::new(),
        }
    }

    pub fn is_null(&self) -> bool {
        self.kind == AdviceKind::Null
    }
}

/// A region a restrictive sentence can name directly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedRegion {
    Quadrant(Quadrant),
    Half(Half),
}

impl NamedRegion {
    pub fn region(self) -> Region {
        match self {
            NamedRegion::Quadrant(q) => q.region(),
            NamedRegion::Half(h) => h.region(),
        }
    }

    pub fn name(self) -> String {
        match self {
            NamedRegion::Quadrant(q) => q.to_string(),
            NamedRegion::Half(h) => h.to_string(),
        }
    }
}

fn pick<'a>(list: &'a [String], rng: &mut Rng) -> &'a str {
    list[rng.below(list.len())].as_str()
}

pub fn render_restrictive(head: Head, named: NamedRegion, ts: &TemplateSet, rng: &mut Rng) -> AdviceSentence {
    let filler = named.name();
    AdviceSentence {
        text: fill(pick(ts.restrictive.for_head(head), rng), &filler),
        kind: AdviceKind::Restrictive,
        meaning: Some(AdviceMeaning::Regions(vec![named.region()])),
        filler,
    }
}

pub fn render_corrective(d: Direction, ts: &TemplateSet, rng: &mut Rng) -> AdviceSentence {
    AdviceSentence {
        text: fill(pick(&ts.corrective, rng), d.word()),
        kind: AdviceKind::Corrective,
        meaning: Some(AdviceMeaning::Direction(d)),
        filler: d.word().to_string(),
    }
}

/// Unordered quadrant pairs in canonical order.
pub fn union_pairs() -> Vec<(Quadrant, Quadrant)> {
    let mut out = Vec::new();
    for (i, &a) in Quadrant::ALL.iter().enumerate() {
        for &b in &Quadrant::ALL[i + 1..] {
            out.push((a, b));
        }
    }
    out
}

/// Region phrase for two quadrants: a half when they share an edge, a
/// disjunction otherwise. Symmetric in its arguments.
pub fn union_phrase(a: Quadrant, b: Quadrant) -> Result<String, LangError> {
    if a == b {
        return Err(LangError::SameQuadrant);
    }
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    Ok(match Half::from_adjacent(a, b) {
        Some(h) => h.to_string(),
        None => format!("{a} or the {b}"),
    })
}

pub fn render_union(
    head: Head,
    a: Quadrant,
    b: Quadrant,
    ts: &TemplateSet,
    rng: &mut Rng,
) -> Result<AdviceSentence, LangError> {
    let filler = union_phrase(a, b)?;
    let regions = match Half::from_adjacent(a, b) {
        Some(h) => vec![h.region()],
        None => vec![a.region(), b.region()],
    };
    Ok(AdviceSentence {
        text: fill(pick(ts.union.for_head(head), rng), &filler),
        kind: AdviceKind::Union,
        meaning: Some(AdviceMeaning::Regions(regions)),
        filler,
    })
}

const NUMBER_WORDS: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen",
];

/// Named cells over the board for centered-region advice. Column 0 is the
/// left edge, row 0 the bottom edge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellGrid {
    pub cells: usize,
    pub side: f64,
}

impl Default for CellGrid {
    fn default() -> Self {
        Self {
            cells: 8,
            side: QUADRANT_SIDE,
        }
    }
}

impl CellGrid {
    pub fn cell_size(&self) -> f64 {
        2.0 / self.cells as f64
    }

    fn index(&self, v: f64) -> usize {
        let i = ((v + 1.0) / self.cell_size()).floor();
        (i.max(0.0) as usize).min(self.cells - 1)
    }

    /// `(column, row)` of the cell containing `(x, z)`.
    pub fn snap(&self, x: f64, z: f64) -> (usize, usize) {
        (self.index(x), self.index(z))
    }

    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        let s = self.cell_size();
        (-1.0 + s * (col as f64 + 0.5), -1.0 + s * (row as f64 + 0.5))
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.cells).flat_map(move |c| (0..self.cells).map(move |r| (c, r)))
    }

    pub fn phrase(&self, col: usize, row: usize) -> String {
        format!("column {}, row {}", NUMBER_WORDS[col], NUMBER_WORDS[row])
    }

    /// Region advertised by a cell: the grid's side length, centered on the
    /// cell center and kept on the board.
    pub fn cell_region(&self, col: usize, row: usize) -> Region {
        let (x, z) = self.cell_center(col, row);
        centered_region(&Coordinate::new(x, 0.0, z), self.side)
    }

    /// Recovers `(column, row)` from any text containing a cell phrase.
    pub fn decode(&self, text: &str) -> Result<(usize, usize), LangError> {
        let w = words(text);
        let find = |key: &str| -> Option<usize> {
            let pos = w.iter().position(|t| t == key)?;
            let n = NUMBER_WORDS.iter().position(|x| Some(*x) == w.get(pos + 1).map(String::as_str))?;
            (n < self.cells).then_some(n)
        };
        match (find("column"), find("row")) {
            (Some(c), Some(r)) => Ok((c, r)),
            _ => Err(LangError::CellPhrase(text.to_string())),
        }
    }
}

/// Names the region by the grid cell its center snaps to. The advertised
/// region is the snapped cell's region, which is what `meaning` records.
pub fn render_centered(head: Head, r: &Region, grid: &CellGrid, ts: &TemplateSet, rng: &mut Rng) -> AdviceSentence {
    let (cx, cz) = r.center();
    let (col, row) = grid.snap(cx, cz);
    let filler = grid.phrase(col, row);
    AdviceSentence {
        text: fill(pick(ts.centered.for_head(head), rng), &filler),
        kind: AdviceKind::Centered,
        meaning: Some(AdviceMeaning::Regions(vec![grid.cell_region(col, row)])),
        filler,
    }
}

/// Token ids of a sentence; errors when nothing is left after cleaning.
pub fn tokenize(text: &str, vocab: &Vocab) -> Result<Vec<u32>, LangError> {
    let ids: Vec<u32> = words(text).iter().map(|w| vocab.id(w)).collect();
    if ids.is_empty() {
        return Err(LangError::EmptyAdvice);
    }
    Ok(ids)
}

/// Fraction of a text's words the vocabulary does not know.
pub fn oov_fraction(text: &str, vocab: &Vocab) -> f64 {
    let w = words(text);
    if w.is_empty() {
        return 1.0;
    }
    w.iter().filter(|t| !vocab.contains(t)).count() as f64 / w.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rendered_all(f: impl Fn(&mut Rng) -> AdviceSentence) -> Vec<String> {
        (0..200).map(|s| f(&mut Rng::new(s, 0)).text).collect()
    }

    #[test]
    fn builtin_templates_meet_inventory() {
        let t = Templates::builtin();
        for (set, min) in [(&t.train, 6), (&t.test, 4)] {
            for l in [
                &set.restrictive.source,
                &set.restrictive.target,
                &set.union.source,
                &set.union.target,
                &set.centered.source,
                &set.centered.target,
                &set.corrective,
            ] {
                assert!(l.len() >= min, "{:?}", l);
            }
        }
    }

    #[test]
    fn restrictive_examples() {
        let t = Templates::builtin();
        let target = rendered_all(|r| {
            render_restrictive(Head::Target, NamedRegion::Quadrant(Quadrant::TopLeft), &t.train, r)
        });
        assert!(target.iter().any(|s| s == "the target is in the top left"));
        let source = rendered_all(|r| {
            render_restrictive(Head::Source, NamedRegion::Quadrant(Quadrant::BottomLeft), &t.test, r)
        });
        assert!(source.iter().any(|s| s == "the block's region is the lower left"));
    }

    #[test]
    fn rendering_is_deterministic_per_seed() {
        let t = Templates::builtin();
        let a = render_corrective(Direction::Left, &t.test, &mut Rng::new(5, 1));
        let b = render_corrective(Direction::Left, &t.test, &mut Rng::new(5, 1));
        assert_eq!(a, b);
    }

    #[test]
    fn corrective_examples() {
        let t = Templates::builtin();
        let down = rendered_all(|r| render_corrective(Direction::Down, &t.train, r));
        assert!(down.iter().any(|s| s == "move down"));
        let left = rendered_all(|r| render_corrective(Direction::Left, &t.test, r));
        assert!(left.iter().any(|s| s == "shift it to the left"));
        let mut r = Rng::new(0, 0);
        let texts: std::collections::HashSet<String> = Direction::ALL
            .iter()
            .map(|&d| {
                let mut r2 = r.fork("same");
                render_corrective(d, &t.train, &mut r2).text
            })
            .collect();
        let _ = r.next_u64();
        assert_eq!(texts.len(), 4);
    }

    #[test]
    fn union_phrases() {
        use Quadrant::*;
        assert_eq!(union_phrase(TopLeft, BottomLeft).unwrap(), "left half");
        assert_eq!(union_phrase(TopLeft, BottomRight).unwrap(), "top left or the lower right");
        for (a, b) in union_pairs() {
            assert_eq!(union_phrase(a, b).unwrap(), union_phrase(b, a).unwrap());
        }
        assert!(matches!(union_phrase(TopRight, TopRight), Err(LangError::SameQuadrant)));
        let t = Templates::builtin();
        let s = render_union(Head::Target, BottomLeft, TopLeft, &t.train, &mut Rng::new(0, 0)).unwrap();
        assert!(s.text.ends_with("left half"));
    }

    #[test]
    fn cell_grid_center_and_decode() {
        let g = CellGrid::default();
        assert_eq!(g.snap(0.0, 0.0), (4, 4));
        assert_eq!(g.snap(-1.0, 1.0), (0, 7));
        let t = Templates::builtin();
        let r = crate::world::centered_region(&Coordinate::new(0.0, 0.0, 0.0), 1.0);
        let s = render_centered(Head::Target, &r, &g, &t.train, &mut Rng::new(1, 1));
        assert!(s.text.contains("column four, row four"), "{}", s.text);
        assert_eq!(g.decode(&s.text).unwrap(), (4, 4));
    }

    #[test]
    fn train_and_test_sentences_are_disjoint() {
        let t = Templates::builtin();
        let g = CellGrid::default();
        let train: std::collections::HashSet<String> = t.train_sentences(&g).into_iter().collect();
        assert!(t.test_sentences(&g).iter().all(|s| !train.contains(s)));
    }

    #[test]
    fn tokenize_examples() {
        let v = Vocab::build(["move down"]);
        assert_eq!(tokenize("Move down.", &v).unwrap(), vec![2, 3]);
        assert_eq!(tokenize("move sideways", &v).unwrap(), vec![2, OOV_ID]);
        assert!(matches!(tokenize(" .. ", &v), Err(LangError::EmptyAdvice)));
        let once = words("move down");
        assert_eq!(words(&once.join(" ")), once);
    }

    #[test]
    fn template_validation_rejects_double_slot() {
        let mut t = Templates::builtin();
        t.train.corrective[0] = "move {} {}".into();
        let json = serde_json::to_string(&t).unwrap();
        assert!(Templates::from_json(&json).is_err());
    }
}
