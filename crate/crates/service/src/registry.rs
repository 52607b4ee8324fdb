//! Directory-backed model registry.
//!
//! A models directory holds up to seven weight files, one per [`Role`], each
//! with its JSON sidecar. Loading goes through the core loaders, which check
//! the sidecar architecture and every tensor shape.

use std::path::{Path, PathBuf};

use advice_core::advgen::{self, AdviceGenerator};
use advice_core::grounding::{Grounder, GrounderKind};
use advice_core::lang::{CellGrid, Templates};
use advice_core::nn::ParamStore;
use advice_core::predictor::{E2EPredictor, PredictorKind};
use advice_core::protocols::{model_id, ModelSet, ProtocolKind};
use advice_core::world::Head;
use advice_core::Error;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    GrounderRestrictive,
    GrounderCorrective,
    Baseline,
    Restrictive,
    Corrective,
    AdvgenSource,
    AdvgenTarget,
}

impl Role {
    pub const ALL: [Role; 7] = [
        Role::GrounderRestrictive,
        Role::GrounderCorrective,
        Role::Baseline,
        Role::Restrictive,
        Role::Corrective,
        Role::AdvgenSource,
        Role::AdvgenTarget,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Role::GrounderRestrictive => "grounder_restrictive",
            Role::GrounderCorrective => "grounder_corrective",
            Role::Baseline => "baseline",
            Role::Restrictive => "restrictive",
            Role::Corrective => "corrective",
            Role::AdvgenSource => "advgen_source",
            Role::AdvgenTarget => "advgen_target",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.bin", self.name())
    }

    pub fn grounder(kind: GrounderKind) -> Role {
        match kind {
            GrounderKind::Restrictive => Role::GrounderRestrictive,
            GrounderKind::Corrective => Role::GrounderCorrective,
        }
    }

    pub fn predictor(kind: PredictorKind) -> Role {
        match kind {
            PredictorKind::Baseline => Role::Baseline,
            PredictorKind::Restrictive => Role::Restrictive,
            PredictorKind::Corrective => Role::Corrective,
        }
    }

    pub fn advgen(head: Head) -> Role {
        match head {
            Head::Source => Role::AdvgenSource,
            Head::Target => Role::AdvgenTarget,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub id: String,
    pub role: Role,
    pub architecture: String,
    pub parameters: usize,
    /// Seed recorded in the sidecar; absent for in-memory models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolAvailability {
    pub protocol: ProtocolKind,
    pub available: bool,
    pub models: std::collections::BTreeMap<String, String>,
}

/// Read-only set of loaded models. Once built it is never mutated, so the
/// HTTP service shares it freely between requests.
#[derive(Debug)]
pub struct ModelRegistry {
    dir: Option<PathBuf>,
    entries: Vec<ModelEntry>,
    grounders: [Option<Grounder>; 2],
    models: ModelSet,
}

fn count(store: &ParamStore) -> usize {
    store.iter().map(|p| p.value.len()).sum()
}

fn entry(role: Role, architecture: &str, store: &ParamStore, seed: Option<u64>) -> ModelEntry {
    ModelEntry {
        id: model_id(architecture, store.fingerprint()),
        role,
        architecture: architecture.to_string(),
        parameters: count(store),
        seed,
    }
}

pub fn model_path(dir: &Path, role: Role) -> PathBuf {
    dir.join(role.file_name())
}

pub fn load_grounder(dir: &Path, kind: GrounderKind) -> Result<Grounder, Error> {
    let path = model_path(dir, Role::grounder(kind));
    if !path.exists() {
        return Err(Error::MissingModel(format!("{} (run pretrain-grounding first)", path.display())));
    }
    Ok(Grounder::load(&path, kind)?.0)
}

pub fn load_predictor(dir: &Path, kind: PredictorKind) -> Result<E2EPredictor, Error> {
    let path = model_path(dir, Role::predictor(kind));
    if !path.exists() {
        return Err(Error::MissingModel(path.display().to_string()));
    }
    Ok(E2EPredictor::load(&path, kind)?.0)
}

impl ModelRegistry {
    /// Loads every model file present in `dir`. Missing files are allowed
    /// (protocols needing them report unavailable); a file that exists but
    /// fails to load is an error.
    pub fn open(dir: &Path, templates: Templates, grid: CellGrid) -> Result<Self, Error> {
        if !dir.is_dir() {
            return Err(Error::MissingModel(format!("models directory {}", dir.display())));
        }
        let mut reg = Self::from_models(ModelSet::empty(templates, grid));
        reg.dir = Some(dir.to_path_buf());
        for role in Role::ALL {
            let path = model_path(dir, role);
            if !path.exists() {
                continue;
            }
            let seed;
            match role {
                Role::GrounderRestrictive | Role::GrounderCorrective => {
                    let kind = if role == Role::GrounderRestrictive {
                        GrounderKind::Restrictive
                    } else {
                        GrounderKind::Corrective
                    };
                    let (g, meta) = Grounder::load(&path, kind)?;
                    seed = meta.seed;
                    reg.grounders[kind as usize] = Some(g);
                }
                Role::Baseline | Role::Restrictive | Role::Corrective => {
                    let kind = match role {
                        Role::Baseline => PredictorKind::Baseline,
                        Role::Restrictive => PredictorKind::Restrictive,
                        _ => PredictorKind::Corrective,
                    };
                    let (m, meta) = E2EPredictor::load(&path, kind)?;
                    seed = meta.seed;
                    *reg.predictor_slot(kind) = Some(m);
                }
                Role::AdvgenSource | Role::AdvgenTarget => {
                    let head = if role == Role::AdvgenSource { Head::Source } else { Head::Target };
                    let (g, meta) = AdviceGenerator::load(&path, head)?;
                    seed = meta.seed;
                    *reg.advgen_slot(head) = Some(g);
                }
            }
            reg.entries.retain(|e| e.role != role);
            let mut e = reg.describe(role).expect("just loaded");
            e.seed = Some(seed);
            reg.entries.push(e);
        }
        Ok(reg)
    }

    /// Wraps models that are already in memory.
    pub fn from_models(models: ModelSet) -> Self {
        let mut reg = Self {
            dir: None,
            entries: Vec::new(),
            grounders: [None, None],
            models,
        };
        reg.entries = Role::ALL.iter().filter_map(|&r| reg.describe(r)).collect();
        reg
    }

    fn predictor_slot(&mut self, kind: PredictorKind) -> &mut Option<E2EPredictor> {
        match kind {
            PredictorKind::Baseline => &mut self.models.baseline,
            PredictorKind::Restrictive => &mut self.models.restrictive,
            PredictorKind::Corrective => &mut self.models.corrective,
        }
    }

    fn advgen_slot(&mut self, head: Head) -> &mut Option<AdviceGenerator> {
        match head {
            Head::Source => &mut self.models.advgen_source,
            Head::Target => &mut self.models.advgen_target,
        }
    }

    fn describe(&self, role: Role) -> Option<ModelEntry> {
        let m = &self.models;
        match role {
            Role::GrounderRestrictive | Role::GrounderCorrective => {
                let g = self.grounders[(role == Role::GrounderCorrective) as usize].as_ref()?;
                Some(entry(role, g.kind.architecture(), g.store(), None))
            }
            Role::Baseline => m.baseline.as_ref().map(|p| entry(role, p.kind.architecture(), p.store(), None)),
            Role::Restrictive => m.restrictive.as_ref().map(|p| entry(role, p.kind.architecture(), p.store(), None)),
            Role::Corrective => m.corrective.as_ref().map(|p| entry(role, p.kind.architecture(), p.store(), None)),
            Role::AdvgenSource => m
                .advgen_source
                .as_ref()
                .map(|g| entry(role, advgen::architecture(Head::Source), g.store(), None)),
            Role::AdvgenTarget => m
                .advgen_target
                .as_ref()
                .map(|g| entry(role, advgen::architecture(Head::Target), g.store(), None)),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn models(&self) -> &ModelSet {
        &self.models
    }

    pub fn entries(&self) -> &[ModelEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&ModelEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn grounder(&self, kind: GrounderKind) -> Option<&Grounder> {
        self.grounders[kind as usize].as_ref()
    }

    pub fn availability(&self) -> Vec<ProtocolAvailability> {
        ProtocolKind::ALL
            .iter()
            .map(|&p| ProtocolAvailability {
                protocol: p,
                available: self.models.check(p).is_ok(),
                models: self.models.ids_for(p),
            })
            .collect()
    }
}
