//! Datasets: the JSON schema, a loader that normalizes into board units, and
//! a synthetic generator whose instructions refer to blocks only by spatial
//! properties ("the leftmost block", "the topmost block").

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;
use crate::world::{quadrant_of, BoardState, Coordinate, Quadrant, MAX_BLOCKS};

pub const FORMAT_VERSION: u32 = 1;
const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{} invalid example(s): {}", .0.len(), .0.iter().map(|(id, why)| format!("{id} ({why})")).collect::<Vec<_>>().join(", "))]
    Invalid(Vec<(String, String)>),
    #[error("generation failed after {MAX_ATTEMPTS} attempts: {0}")]
    Generation(String),
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub world: BoardState,
    pub instruction: String,
    pub source_index: usize,
    pub target: Coordinate,
}

impl Example {
    pub fn gold_source(&self) -> Coordinate {
        self.world.blocks[self.source_index]
    }

    pub fn gold(&self, head: crate::world::Head) -> Coordinate {
        match head {
            crate::world::Head::Source => self.gold_source(),
            crate::world::Head::Target => self.target,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    Loaded { path: String },
    Synthetic { seed: u64, config: GeneratorConfig },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub block_length: f64,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn split(&self, s: Split) -> &[Example] {
        match s {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &Example> {
        self.train.iter().chain(&self.dev).chain(&self.test)
    }

    pub fn find(&self, id: &str) -> Option<(Split, &Example)> {
        Split::ALL
            .into_iter()
            .find_map(|s| self.split(s).iter().find(|e| e.id == id).map(|e| (s, e)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub min_blocks: usize,
    pub max_blocks: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub block_length: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            min_blocks: 3,
            max_blocks: 20,
            train: 8000,
            dev: 300,
            test: 500,
            block_length: 0.1,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    fn validate(&self) -> Result<(), DataError> {
        if self.min_blocks < 2 || self.min_blocks > self.max_blocks || self.max_blocks > MAX_BLOCKS {
            return Err(DataError::Config(format!(
                "block range {}..={} must lie in 2..={MAX_BLOCKS}",
                self.min_blocks, self.max_blocks
            )));
        }
        if self.train == 0 || self.dev == 0 || self.test == 0 {
            return Err(DataError::Config("split sizes must be positive".into()));
        }
        if !(self.block_length > 0.0 && self.block_length < 0.25) {
            return Err(DataError::Config(format!("block length {}", self.block_length)));
        }
        Ok(())
    }
}

/// Spatial property that singles out one block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extreme {
    Leftmost,
    Rightmost,
    Topmost,
    Bottommost,
    Centermost,
}

impl Extreme {
    pub const ALL: [Extreme; 5] = [
        Extreme::Leftmost,
        Extreme::Rightmost,
        Extreme::Topmost,
        Extreme::Bottommost,
        Extreme::Centermost,
    ];

    pub fn word(self) -> &'static str {
        match self {
            Extreme::Leftmost => "leftmost",
            Extreme::Rightmost => "rightmost",
            Extreme::Topmost => "topmost",
            Extreme::Bottommost => "bottommost",
            Extreme::Centermost => "centermost",
        }
    }

    /// Larger is "more" of the property.
    fn score(self, c: &Coordinate) -> f64 {
        match self {
            Extreme::Leftmost => -c.x,
            Extreme::Rightmost => c.x,
            Extreme::Topmost => c.z,
            Extreme::Bottommost => -c.z,
            Extreme::Centermost => -c.x.hypot(c.z),
        }
    }

    /// The block with the highest score, if it leads the runner-up by `margin`.
    pub fn unique_block(self, blocks: &[Coordinate], margin: f64) -> Option<usize> {
        let mut order: Vec<(f64, usize)> = blocks.iter().enumerate().map(|(i, b)| (self.score(b), i)).collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0));
        match order.as_slice() {
            [(best, i)] => best.is_finite().then_some(*i),
            [(best, i), (second, _), ..] if best - second >= margin => Some(*i),
            _ => None,
        }
    }
}

/// Offset relation between the reference block and the target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    LeftOf,
    RightOf,
    Above,
    Below,
}

impl Relation {
    pub const ALL: [Relation; 4] = [Relation::LeftOf, Relation::RightOf, Relation::Above, Relation::Below];

    pub fn phrase(self) -> &'static str {
        match self {
            Relation::LeftOf => "left of",
            Relation::RightOf => "right of",
            Relation::Above => "above",
            Relation::Below => "below",
        }
    }

    /// Unit step `(dx, dz)`.
    pub fn step(self) -> (f64, f64) {
        match self {
            Relation::LeftOf => (-1.0, 0.0),
            Relation::RightOf => (1.0, 0.0),
            Relation::Above => (0.0, 1.0),
            Relation::Below => (0.0, -1.0),
        }
    }
}

const VERBS: [&str; 4] = ["move", "put", "place", "slide"];
const COUNTS: [&str; 3] = ["one", "two", "three"];

fn instruction_text(verb: &str, src: Extreme, count: usize, rel: Relation, reference: Extreme) -> String {
    let unit = if count == 1 { "length" } else { "lengths" };
    format!(
        "{verb} the {} block {} {unit} {} the {} block",
        src.word(),
        COUNTS[count - 1],
        rel.phrase(),
        reference.word()
    )
}

fn place_blocks(n: usize, bl: f64, rng: &mut Rng) -> Result<Vec<Coordinate>, DataError> {
    let lim = 1.0 - 0.5 * bl;
    let mut blocks: Vec<Coordinate> = Vec::with_capacity(n);
    let mut attempts = 0;
    while blocks.len() < n {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(DataError::Generation(format!("placing {n} separated blocks")));
        }
        let c = Coordinate::new(rng.uniform(-lim, lim), 0.5 * bl, rng.uniform(-lim, lim));
        if blocks.iter().all(|b| b.plane_distance(&c) >= bl) {
            blocks.push(c);
        }
    }
    Ok(blocks)
}

fn generate_example(id: String, cfg: &GeneratorConfig, rng: &mut Rng) -> Result<Example, DataError> {
    let bl = cfg.block_length;
    let lim = 1.0 - 0.5 * bl;
    for _ in 0..MAX_ATTEMPTS {
        let n = cfg.min_blocks + rng.below(cfg.max_blocks - cfg.min_blocks + 1);
        let blocks = place_blocks(n, bl, rng)?;
        let unique: Vec<(Extreme, usize)> = Extreme::ALL
            .iter()
            .filter_map(|&e| e.unique_block(&blocks, 0.5 * bl).map(|i| (e, i)))
            .collect();
        let Some(&(src, src_idx)) = rng.choose(&unique) else {
            continue;
        };
        let refs: Vec<(Extreme, usize)> = unique.iter().copied().filter(|&(_, i)| i != src_idx).collect();
        let Some(&(reference, ref_idx)) = rng.choose(&refs) else {
            continue;
        };
        let rel = Relation::ALL[rng.below(4)];
        let count = 1 + rng.below(3);
        let (dx, dz) = rel.step();
        let r = blocks[ref_idx];
        let target = Coordinate::new(r.x + dx * count as f64 * bl, r.y, r.z + dz * count as f64 * bl);
        if target.x.abs() > lim || target.z.abs() > lim {
            continue;
        }
        let verb = VERBS[rng.below(VERBS.len())];
        let world = BoardState::new(blocks, bl).map_err(|e| DataError::Generation(e.to_string()))?;
        return Ok(Example {
            id,
            world,
            instruction: instruction_text(verb, src, count, rel, reference),
            source_index: src_idx,
            target,
        });
    }
    Err(DataError::Generation("no board with two uniquely identifiable blocks".into()))
}

pub fn generate_synthetic(config: &GeneratorConfig) -> Result<Dataset, DataError> {
    config.validate()?;
    let mut rng = Rng::named(config.seed, "data.generate");
    let mut next = 0usize;
    let mut make = |count: usize, rng: &mut Rng| -> Result<Vec<Example>, DataError> {
        (0..count)
            .map(|_| {
                let id = format!("syn-{next:06}");
                next += 1;
                generate_example(id, config, rng)
            })
            .collect()
    };
    let train = make(config.train, &mut rng)?;
    let dev = make(config.dev, &mut rng)?;
    let test = make(config.test, &mut rng)?;
    Ok(Dataset {
        block_length: config.block_length,
        train,
        dev,
        test,
        provenance: Provenance::Synthetic {
            seed: config.seed,
            config: config.clone(),
        },
    })
}

// ---- file format ----

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordRange {
    pub x: [f64; 2],
    pub z: [f64; 2],
}

impl Default for CoordRange {
    fn default() -> Self {
        Self {
            x: [-1.0, 1.0],
            z: [-1.0, 1.0],
        }
    }
}

/// Affine map between a file's coordinate range and board units. Both axes
/// must span the same length so distances (and block length) keep one scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoordMap {
    range: CoordRange,
    scale: f64,
}

impl CoordMap {
    pub fn new(range: CoordRange) -> Result<Self, DataError> {
        let sx = range.x[1] - range.x[0];
        let sz = range.z[1] - range.z[0];
        if !(sx > 0.0 && sz > 0.0 && sx.is_finite() && sz.is_finite()) {
            return Err(DataError::Schema(format!("degenerate coord_range {range:?}")));
        }
        if ((sx - sz) / sx).abs() > 1e-9 {
            return Err(DataError::Schema(format!(
                "coord_range spans differ on x ({sx}) and z ({sz})"
            )));
        }
        Ok(Self { range, scale: 2.0 / sx })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn is_identity(&self) -> bool {
        self.range == CoordRange::default()
    }

    pub fn to_board(&self, c: [f64; 3]) -> Coordinate {
        if self.is_identity() {
            return Coordinate::from(c);
        }
        Coordinate::new(
            (c[0] - self.range.x[0]) * self.scale - 1.0,
            c[1] * self.scale,
            (c[2] - self.range.z[0]) * self.scale - 1.0,
        )
    }

    pub fn from_board(&self, c: &Coordinate) -> [f64; 3] {
        if self.is_identity() {
            return c.to_array();
        }
        [
            (c.x + 1.0) / self.scale + self.range.x[0],
            c.y / self.scale,
            (c.z + 1.0) / self.scale + self.range.z[0],
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileHeader {
    pub block_length: f64,
    #[serde(default)]
    pub coord_range: CoordRange,
    pub version: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileExample {
    pub id: String,
    pub world: Vec<[f64; 3]>,
    pub instruction: String,
    pub source_index: usize,
    pub target: [f64; 3],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub header: FileHeader,
    pub examples: Vec<FileExample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<SplitManifest>,
}

const CLAMP_SLACK: f64 = 1e-6;

fn convert(fe: &FileExample, map: &CoordMap, block_length: f64) -> Result<Example, String> {
    if fe.instruction.trim().is_empty() {
        return Err("empty instruction".into());
    }
    if fe.world.is_empty() || fe.world.len() > MAX_BLOCKS {
        return Err(format!("{} blocks", fe.world.len()));
    }
    if fe.source_index >= fe.world.len() {
        return Err(format!("source_index {} out of range", fe.source_index));
    }
    let mut blocks = Vec::with_capacity(fe.world.len());
    for c in fe.world.iter().chain(std::iter::once(&fe.target)) {
        if c.iter().any(|v| !v.is_finite()) {
            return Err("non-finite coordinate".into());
        }
        let b = map.to_board(*c);
        if b.x.abs() > 1.0 + CLAMP_SLACK || b.z.abs() > 1.0 + CLAMP_SLACK {
            return Err(format!("coordinate {c:?} outside coord_range"));
        }
        blocks.push(b.clamped_to_board());
    }
    let target = blocks.pop().expect("target pushed last");
    let world = BoardState::new(blocks, block_length).map_err(|e| e.to_string())?;
    Ok(Example {
        id: fe.id.clone(),
        world,
        instruction: fe.instruction.clone(),
        source_index: fe.source_index,
        target,
    })
}

/// Parses a dataset document. Either every example is valid and the whole
/// dataset is returned, or an error lists every offending example id.
pub fn parse_dataset(text: &str, origin: &str) -> Result<Dataset, DataError> {
    let file: DatasetFile = serde_json::from_str(text).map_err(|e| DataError::Schema(e.to_string()))?;
    if file.header.version != FORMAT_VERSION {
        return Err(DataError::Schema(format!(
            "version {} (expected {FORMAT_VERSION})",
            file.header.version
        )));
    }
    let map = CoordMap::new(file.header.coord_range)?;
    if !(file.header.block_length > 0.0 && file.header.block_length.is_finite()) {
        return Err(DataError::Schema(format!("block_length {}", file.header.block_length)));
    }
    let block_length = file.header.block_length * map.scale();

    let mut bad = Vec::new();
    let mut by_id: BTreeMap<String, Example> = BTreeMap::new();
    for fe in &file.examples {
        if by_id.contains_key(&fe.id) {
            bad.push((fe.id.clone(), "duplicate id".to_string()));
            continue;
        }
        match convert(fe, &map, block_length) {
            Ok(e) => {
                by_id.insert(fe.id.clone(), e);
            }
            Err(why) => bad.push((fe.id.clone(), why)),
        }
    }
    if !bad.is_empty() {
        return Err(DataError::Invalid(bad));
    }

    let manifest = file.splits.unwrap_or_else(|| SplitManifest {
        train: file.examples.iter().map(|e| e.id.clone()).collect(),
        ..SplitManifest::default()
    });
    let mut seen = HashSet::new();
    let mut take = |ids: &[String]| -> Result<Vec<Example>, DataError> {
        ids.iter()
            .map(|id| {
                if !seen.insert(id.clone()) {
                    return Err(DataError::Schema(format!("example `{id}` listed in two splits")));
                }
                by_id
                    .get(id)
                    .cloned()
                    .ok_or_else(|| DataError::Schema(format!("split lists unknown example `{id}`")))
            })
            .collect()
    };
    let train = take(&manifest.train)?;
    let dev = take(&manifest.dev)?;
    let test = take(&manifest.test)?;
    if let Some(id) = by_id.keys().find(|id| !seen.contains(*id)) {
        return Err(DataError::Schema(format!("example `{id}` is in no split")));
    }
    Ok(Dataset {
        block_length,
        train,
        dev,
        test,
        provenance: Provenance::Loaded {
            path: origin.to_string(),
        },
    })
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DataError> {
    parse_dataset(&std::fs::read_to_string(path)?, &path.display().to_string())
}

/// Serializes in board units (`coord_range` = the board itself).
pub fn to_file(d: &Dataset) -> DatasetFile {
    let fe = |e: &Example| FileExample {
        id: e.id.clone(),
        world: e.world.blocks.iter().map(|b| b.to_array()).collect(),
        instruction: e.instruction.clone(),
        source_index: e.source_index,
        target: e.target.to_array(),
    };
    let ids = |s: &[Example]| s.iter().map(|e| e.id.clone()).collect();
    DatasetFile {
        header: FileHeader {
            block_length: d.block_length,
            coord_range: CoordRange::default(),
            version: FORMAT_VERSION,
        },
        examples: d.all().map(fe).collect(),
        splits: Some(SplitManifest {
            train: ids(&d.train),
            dev: ids(&d.dev),
            test: ids(&d.test),
        }),
    }
}

pub fn save_dataset(d: &Dataset, path: &Path) -> Result<(), DataError> {
    let text = serde_json::to_string_pretty(&to_file(d)).map_err(|e| DataError::Schema(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

// ---- statistics ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub count: usize,
    /// Fraction of gold targets per quadrant, in `Quadrant::ALL` order.
    pub target_quadrants: [f64; 4],
    pub source_quadrants: [f64; 4],
    pub mean_blocks: f64,
    pub mean_pairwise_distance: f64,
    pub overlapping_boards: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub block_length: f64,
    pub train: SplitStats,
    pub dev: SplitStats,
    pub test: SplitStats,
}

fn quadrant_fractions(cs: impl Iterator<Item = Coordinate>) -> [f64; 4] {
    let mut counts = [0usize; 4];
    let mut n = 0;
    for c in cs {
        counts[quadrant_of(&c).index()] += 1;
        n += 1;
    }
    counts.map(|k| if n == 0 { 0.0 } else { k as f64 / n as f64 })
}

fn split_stats(ex: &[Example]) -> SplitStats {
    let (mut dist_sum, mut pairs) = (0.0, 0usize);
    for e in ex {
        let b = &e.world.blocks;
        for i in 0..b.len() {
            for j in i + 1..b.len() {
                dist_sum += b[i].plane_distance(&b[j]);
                pairs += 1;
            }
        }
    }
    let n = ex.len().max(1) as f64;
    SplitStats {
        count: ex.len(),
        target_quadrants: quadrant_fractions(ex.iter().map(|e| e.target)),
        source_quadrants: quadrant_fractions(ex.iter().map(|e| e.gold_source())),
        mean_blocks: ex.iter().map(|e| e.world.blocks.len() as f64).sum::<f64>() / n,
        mean_pairwise_distance: if pairs == 0 { 0.0 } else { dist_sum / pairs as f64 },
        overlapping_boards: ex.iter().filter(|e| !e.world.overlapping_pairs().is_empty()).count(),
    }
}

pub fn dataset_stats(d: &Dataset) -> DatasetStats {
    DatasetStats {
        block_length: d.block_length,
        train: split_stats(&d.train),
        dev: split_stats(&d.dev),
        test: split_stats(&d.test),
    }
}

impl SplitStats {
    pub fn quadrant(&self, q: Quadrant) -> f64 {
        self.target_quadrants[q.index()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GeneratorConfig {
        GeneratorConfig {
            train: 40,
            dev: 10,
            test: 10,
            seed: 3,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn counts_match_config_and_ids_are_disjoint() {
        let d = generate_synthetic(&small()).unwrap();
        assert_eq!((d.train.len(), d.dev.len(), d.test.len()), (40, 10, 10));
        let ids: HashSet<&str> = d.all().map(|e| e.id.as_str()).collect();
        assert_eq!(ids.len(), 60);
    }

    #[test]
    fn generated_examples_hold_invariants() {
        let d = generate_synthetic(&small()).unwrap();
        for e in d.all() {
            assert!(e.target.on_board());
            assert!(e.world.overlapping_pairs().is_empty());
            assert!((3..=20).contains(&e.world.blocks.len()));
            assert!(!e.instruction.is_empty());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(dataset_stats(&a), dataset_stats(&b));
    }

    #[test]
    fn minimal_file_loads_into_train() {
        let text = r#"{"header":{"block_length":0.1,"version":1},
            "examples":[{"id":"a","world":[[0.1,0.05,0.2]],"instruction":"move it","source_index":0,"target":[0.3,0.05,0.2]}]}"#;
        let d = parse_dataset(text, "mem").unwrap();
        assert_eq!(d.train.len(), 1);
        assert!(d.dev.is_empty() && d.test.is_empty());
    }

    #[test]
    fn bad_source_index_is_named() {
        let text = r#"{"header":{"block_length":0.1,"version":1},
            "examples":[{"id":"ok","world":[[0,0,0]],"instruction":"x","source_index":0,"target":[0,0,0]},
                        {"id":"bad-25","world":[[0,0,0]],"instruction":"x","source_index":25,"target":[0,0,0]}]}"#;
        match parse_dataset(text, "mem") {
            Err(DataError::Invalid(v)) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].0, "bad-25");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn loader_normalizes_and_inverts() {
        let map = CoordMap::new(CoordRange {
            x: [0.0, 10.0],
            z: [-5.0, 5.0],
        })
        .unwrap();
        let c = [2.5, 0.4, 1.0];
        let b = map.to_board(c);
        assert!((b.x + 0.5).abs() < 1e-12 && (b.z - 0.2).abs() < 1e-12);
        let back = map.from_board(&b);
        for k in 0..3 {
            assert!((back[k] - c[k]).abs() < 1e-6);
        }
        assert!(CoordMap::new(CoordRange {
            x: [0.0, 10.0],
            z: [0.0, 4.0]
        })
        .is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let d = generate_synthetic(&small()).unwrap();
        let text = serde_json::to_string(&to_file(&d)).unwrap();
        let back = parse_dataset(&text, "mem").unwrap();
        assert_eq!(back.train, d.train);
        assert_eq!(back.test, d.test);
    }

    #[test]
    fn unique_extreme_needs_margin() {
        let blocks = [Coordinate::new(-0.5, 0.0, 0.0), Coordinate::new(-0.47, 0.0, 0.3)];
        assert_eq!(Extreme::Leftmost.unique_block(&blocks, 0.05), None);
        assert_eq!(Extreme::Leftmost.unique_block(&blocks, 0.01), Some(0));
    }
}
