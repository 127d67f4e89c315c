//! Embedding record stores: ingestion, validation, frequency strata,
//! per-class capping, and the deterministic text-cleaning steps.

pub(crate) mod io;

pub use io::{load_store, write_store, StoreFormat};

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// One precomputed note embedding with class label and group code.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub patient_id: Option<String>,
    pub vector: Tensor,
    pub label: String,
    pub group: String,
}

/// Validated, immutable collection of embedding records with class and group
/// indices. Safe for concurrent reads.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    records: Vec<EmbeddingRecord>,
    dim: usize,
    class_index: BTreeMap<String, Vec<usize>>,
    group_index: BTreeMap<String, Vec<usize>>,
}

impl EmbeddingStore {
    pub fn from_records(records: Vec<EmbeddingRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Ingest("store has no records".into()));
        }
        let dim = records[0].vector.numel();
        let mut seen = BTreeSet::new();
        let mut class_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut group_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if r.vector.numel() != dim {
                return Err(Error::Ingest(format!(
                    "record '{}' has dimension {}, expected {}",
                    r.id,
                    r.vector.numel(),
                    dim
                )));
            }
            if r.label.is_empty() {
                return Err(Error::Ingest(format!("record '{}' has an empty label", r.id)));
            }
            if !seen.insert(r.id.clone()) {
                return Err(Error::Ingest(format!("duplicate record id '{}'", r.id)));
            }
            class_index.entry(r.label.clone()).or_default().push(i);
            group_index.entry(r.group.clone()).or_default().push(i);
        }
        Ok(EmbeddingStore { records, dim, class_index, group_index })
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Class labels in lexicographic order.
    pub fn classes(&self) -> Vec<String> {
        self.class_index.keys().cloned().collect()
    }

    pub fn class_records(&self, label: &str) -> Option<&[usize]> {
        self.class_index.get(label).map(Vec::as_slice)
    }

    /// label -> record count, lexicographic key order.
    pub fn class_counts(&self) -> BTreeMap<String, usize> {
        self.class_index.iter().map(|(k, v)| (k.clone(), v.len())).collect()
    }

    pub fn group_counts(&self) -> BTreeMap<String, usize> {
        self.group_index.iter().map(|(k, v)| (k.clone(), v.len())).collect()
    }
}

/// Which frequency stratum of class labels to select.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratumKind {
    Popular,
    SemiRare,
    Random,
}

impl std::str::FromStr for StratumKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "popular" => Ok(StratumKind::Popular),
            "semi_rare" | "semi-rare" => Ok(StratumKind::SemiRare),
            "random" => Ok(StratumKind::Random),
            other => Err(Error::Validation(format!("unknown stratum kind '{}'", other))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StratumSpec {
    pub kind: StratumKind,
    pub top_count: usize,
    pub min_notes: usize,
}

impl StratumSpec {
    pub fn new(kind: StratumKind) -> Self {
        StratumSpec { kind, top_count: 50, min_notes: 10 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_count < 1 {
            return Err(Error::Validation("top_count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Select class labels by frequency stratum.
///
/// - `popular`: the `top_count` classes with the largest record counts.
/// - `semi_rare`: among classes with count > `min_notes`, the `top_count`
///   classes with the smallest counts.
/// - `random`: every class with count > `min_notes` (the episode sampler does
///   the uniform draw).
///
/// Ties in count are broken lexicographically by label.
pub fn select_classes(store: &EmbeddingStore, spec: &StratumSpec) -> Result<Vec<String>> {
    spec.validate()?;
    let counts = store.class_counts();
    let mut pairs: Vec<(String, usize)> = counts.into_iter().collect();
    match spec.kind {
        StratumKind::Popular => {
            pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            pairs.truncate(spec.top_count);
        }
        StratumKind::SemiRare => {
            pairs.retain(|(_, c)| *c > spec.min_notes);
            pairs.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
            pairs.truncate(spec.top_count);
        }
        StratumKind::Random => {
            pairs.retain(|(_, c)| *c > spec.min_notes);
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyStratum(format!(
            "no class satisfies stratum {:?} (min_notes {})",
            spec.kind, spec.min_notes
        )));
    }
    Ok(pairs.into_iter().map(|(l, _)| l).collect())
}

/// Subsample each class to at most `cap` records, optionally capping records
/// per (class, patient) pair first. Records without a patient id are exempt
/// from the per-patient cap. Deterministic under `seed`.
pub fn cap_per_class(
    store: &EmbeddingStore,
    cap: usize,
    per_patient_cap: Option<usize>,
    seed: u64,
) -> Result<EmbeddingStore> {
    if cap < 1 {
        return Err(Error::Validation("cap must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept: Vec<usize> = Vec::new();
    for label in store.classes() {
        let idxs = store.class_records(&label).unwrap();
        let mut pool: Vec<usize> = idxs.to_vec();
        if let Some(pcap) = per_patient_cap {
            // Keep the earliest record ids per (class, patient).
            let mut by_patient: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            let mut exempt: Vec<usize> = Vec::new();
            for &i in idxs {
                match &store.records[i].patient_id {
                    Some(p) => by_patient.entry(p.as_str()).or_default().push(i),
                    None => exempt.push(i),
                }
            }
            pool = exempt;
            for (_, mut group) in by_patient {
                group.sort_by(|a, b| store.records[*a].id.cmp(&store.records[*b].id));
                group.truncate(pcap);
                pool.extend(group);
            }
            pool.sort_unstable();
        }
        if pool.len() > cap {
            pool.shuffle(&mut rng);
            pool.truncate(cap);
            pool.sort_unstable();
        }
        kept.extend(pool);
    }
    kept.sort_unstable();
    EmbeddingStore::from_records(kept.into_iter().map(|i| store.records[i].clone()).collect())
}

/// Deterministic cleaning: lowercase, replace non-alphanumeric characters with
/// spaces, drop stopwords, keep the first `max_tokens` tokens.
pub fn clean_text(text: &str, stopwords: &BTreeSet<String>, max_tokens: usize) -> String {
    let lowered = text.to_lowercase();
    let spaced: String = lowered
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    spaced
        .split_whitespace()
        .filter(|tok| !stopwords.contains(*tok))
        .take(max_tokens)
        .collect::<Vec<_>>()
        .join(" ")
}
