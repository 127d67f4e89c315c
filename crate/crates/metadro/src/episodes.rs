//! N-way K-shot Q-query episode construction. Group codes are attached to
//! query items only; support items cannot leak them into the inner loss.

use rand::seq::index::sample as index_sample;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::dataset::EmbeddingStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TaskSpec {
    pub n_ways: usize,
    pub k_shots: usize,
    pub q_queries: usize,
}

impl TaskSpec {
    pub fn new(n_ways: usize, k_shots: usize, q_queries: usize) -> Result<Self> {
        let spec = TaskSpec { n_ways, k_shots, q_queries };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ways < 2 {
            return Err(Error::Validation("n_ways must be >= 2".into()));
        }
        if self.k_shots < 1 {
            return Err(Error::Validation("k_shots must be >= 1".into()));
        }
        if self.q_queries < 1 {
            return Err(Error::Validation("q_queries must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SupportItem {
    pub record_id: String,
    pub vector: Tensor,
    /// Episode label in [0, N).
    pub label: usize,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct QueryItem {
    pub record_id: String,
    pub vector: Tensor,
    pub label: usize,
    /// Group code, used only by the outer (meta) objective.
    pub group: String,
}

/// One few-shot task: K support and Q query items per episode label.
/// Immutable after construction.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Episode {
    pub support: Vec<SupportItem>,
    pub query: Vec<QueryItem>,
    /// Episode label -> original class label.
    pub class_map: Vec<String>,
}

/// Draw one episode: N classes uniformly without replacement from `pool`,
/// then K+Q records per class without replacement (first K to support).
pub fn sample_episode(
    store: &EmbeddingStore,
    spec: &TaskSpec,
    pool: &[String],
    rng: &mut ChaCha8Rng,
) -> Result<Episode> {
    spec.validate()?;
    if pool.len() < spec.n_ways {
        return Err(Error::Episode(format!(
            "need {} classes, pool has {}",
            spec.n_ways,
            pool.len()
        )));
    }
    let class_picks = index_sample(rng, pool.len(), spec.n_ways);
    let mut support = Vec::with_capacity(spec.n_ways * spec.k_shots);
    let mut query = Vec::with_capacity(spec.n_ways * spec.q_queries);
    let mut class_map = Vec::with_capacity(spec.n_ways);
    for (episode_label, pick) in class_picks.iter().enumerate() {
        let class = &pool[pick];
        let idxs = store
            .class_records(class)
            .ok_or_else(|| Error::Episode(format!("class '{}' not in store", class)))?;
        let need = spec.k_shots + spec.q_queries;
        if idxs.len() < need {
            return Err(Error::Episode(format!(
                "class '{}' has {} records, need {}",
                class,
                idxs.len(),
                need
            )));
        }
        let drawn = index_sample(rng, idxs.len(), need);
        for (j, d) in drawn.iter().enumerate() {
            let r = &store.records()[idxs[d]];
            if j < spec.k_shots {
                support.push(SupportItem {
                    record_id: r.id.clone(),
                    vector: r.vector.clone(),
                    label: episode_label,
                });
            } else {
                query.push(QueryItem {
                    record_id: r.id.clone(),
                    vector: r.vector.clone(),
                    label: episode_label,
                    group: r.group.clone(),
                });
            }
        }
        class_map.push(class.clone());
    }
    Ok(Episode { support, query, class_map })
}

/// Draw `batch_size` independent episodes, advancing the rng deterministically.
pub fn sample_meta_batch(
    store: &EmbeddingStore,
    spec: &TaskSpec,
    pool: &[String],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Episode>> {
    if batch_size < 1 {
        return Err(Error::Validation("batch_size must be >= 1".into()));
    }
    (0..batch_size).map(|_| sample_episode(store, spec, pool, rng)).collect()
}
