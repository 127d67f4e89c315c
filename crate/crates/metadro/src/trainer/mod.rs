//! Meta-training and meta-testing loops tying episodes, models, and the
//! group-robust objective together.

mod metrics;

pub use metrics::{
    confidence_interval, export_metrics, import_metrics, proportion_half_width, GroupSnapshot,
    MetricsFormat, MetricsRecord, METRICS_CSV_HEADER,
};

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::dataset::EmbeddingStore;
use crate::dro::{partition_by_group, rank_groups, robust_objective, update_stats, DroConfig, GroupStats};
use crate::episodes::{sample_episode, sample_meta_batch, Episode, TaskSpec};
use crate::error::{Error, Result};
use crate::models::{
    load_params, save_params, EpisodeLosses, MamlModel, MamlOrder, MlpEncoder, ProtoNetModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Protonet,
    Maml,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "protonet" => Ok(ModelKind::Protonet),
            "maml" => Ok(ModelKind::Maml),
            other => Err(Error::Validation(format!("unknown model kind '{}'", other))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub task: TaskSpec,
    pub model: ModelKind,
    pub meta_batch_size: usize,
    pub outer_lr: f64,
    pub meta_iterations: u64,
    /// Evaluate every this many iterations; 0 disables interval evals
    /// (a final record is always produced).
    pub eval_interval: u64,
    /// Number of meta-test tasks T per evaluation.
    pub eval_tasks: usize,
    pub seed: u64,
    pub dro: DroConfig,
    /// Encoder hidden widths; empty means a single linear layer.
    pub hidden: Vec<usize>,
    /// Encoder output width e.
    pub embed_dim: usize,
    pub maml_order: MamlOrder,
    pub inner_lr: f64,
    pub inner_steps: usize,
    /// Classes held out for meta-test episodes; 0 shares classes between
    /// train and test (records still never cross within an episode).
    pub holdout_classes: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.dro.validate()?;
        if self.meta_batch_size < 1 {
            return Err(Error::Validation("meta_batch_size must be >= 1".into()));
        }
        if self.outer_lr <= 0.0 || !self.outer_lr.is_finite() {
            return Err(Error::Validation("outer_lr must be > 0".into()));
        }
        if self.meta_iterations < 1 {
            return Err(Error::Validation("meta_iterations must be >= 1".into()));
        }
        if self.eval_tasks < 2 {
            return Err(Error::Validation("eval_tasks must be >= 2".into()));
        }
        if self.embed_dim < 1 {
            return Err(Error::Validation("embed_dim must be >= 1".into()));
        }
        if self.inner_lr <= 0.0 || !self.inner_lr.is_finite() {
            return Err(Error::Validation("inner_lr must be > 0".into()));
        }
        if self.inner_steps < 1 {
            return Err(Error::Validation("inner_steps must be >= 1".into()));
        }
        Ok(())
    }

    fn encoder_widths(&self, input_dim: usize) -> Vec<usize> {
        let mut widths = vec![input_dim];
        widths.extend(&self.hidden);
        widths.push(self.embed_dim);
        widths
    }
}

/// A trained (or initialized) model of either kind.
#[derive(Debug, Clone)]
pub enum ModelState {
    Protonet(ProtoNetModel),
    Maml(MamlModel),
}

/// Tape handles for one batch's parameters.
pub enum ModelVars {
    Protonet(Vec<(Var, Var)>),
    Maml(Vec<Var>),
}

impl ModelVars {
    /// Flat list of trainable parameter vars, in named-params order.
    pub fn flat(&self) -> Vec<Var> {
        match self {
            ModelVars::Protonet(layers) => layers.iter().flat_map(|(w, b)| [*w, *b]).collect(),
            ModelVars::Maml(vars) => vars.clone(),
        }
    }
}

impl ModelState {
    /// Construct a freshly initialized model per the config, seeded by
    /// `config.seed`.
    pub fn from_config(config: &TrainConfig, input_dim: usize) -> Result<ModelState> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = MlpEncoder::new(config.encoder_widths(input_dim), &mut rng)?;
        Ok(match config.model {
            ModelKind::Protonet => ModelState::Protonet(ProtoNetModel::new(encoder)),
            ModelKind::Maml => ModelState::Maml(MamlModel::new(
                encoder,
                config.task.n_ways,
                config.inner_lr,
                config.inner_steps,
                config.maml_order,
                &mut rng,
            )?),
        })
    }

    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        match self {
            ModelState::Protonet(m) => m.named_params(),
            ModelState::Maml(m) => m.named_params(),
        }
    }

    pub fn set_params(&mut self, values: &[Tensor]) -> Result<()> {
        match self {
            ModelState::Protonet(m) => m.encoder.set_params(values),
            ModelState::Maml(m) => m.set_params(values),
        }
    }

    pub fn to_tape(&self, tape: &mut Tape) -> ModelVars {
        match self {
            ModelState::Protonet(m) => ModelVars::Protonet(m.encoder.to_tape(tape).layers),
            ModelState::Maml(m) => ModelVars::Maml(m.to_tape(tape)),
        }
    }

    pub fn episode_losses(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        episode: &Episode,
    ) -> Result<EpisodeLosses> {
        match (self, vars) {
            (ModelState::Protonet(m), ModelVars::Protonet(layers)) => {
                m.episode_losses(tape, layers, episode)
            }
            (ModelState::Maml(m), ModelVars::Maml(vs)) => m.episode_outer_losses(tape, vs, episode),
            _ => Err(Error::Validation("model/vars kind mismatch".into())),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_params(path, &self.named_params())
    }

    /// Load checkpoint tensors into this model; names must match exactly.
    pub fn load(&mut self, path: &Path) -> Result<()> {
        let loaded = load_params(path)?;
        let expected: Vec<String> = self.named_params().into_iter().map(|(n, _)| n).collect();
        let names: Vec<String> = loaded.iter().map(|(n, _)| n.clone()).collect();
        if names != expected {
            return Err(Error::Ingest(format!(
                "checkpoint parameters {:?} do not match model {:?}",
                names, expected
            )));
        }
        let values: Vec<Tensor> = loaded.into_iter().map(|(_, t)| t).collect();
        self.set_params(&values)
    }
}

/// Split classes into train and held-out evaluation pools. With
/// `holdout == 0` both pools are the full class list.
pub fn split_classes(
    store: &EmbeddingStore,
    holdout: usize,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    let mut classes = store.classes();
    if holdout == 0 {
        return Ok((classes.clone(), classes));
    }
    if holdout >= classes.len() {
        return Err(Error::Validation(format!(
            "holdout_classes {} must be < total classes {}",
            holdout,
            classes.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5711C));
    classes.shuffle(&mut rng);
    let eval = classes.split_off(classes.len() - holdout);
    Ok((classes, eval))
}

pub struct TrainOutcome {
    pub model: ModelState,
    pub history: Vec<MetricsRecord>,
    pub stats: GroupStats,
}

/// Meta-train per the configured objective. Deterministic under
/// `config.seed`. `on_eval` fires for every metrics record as it is produced.
pub fn meta_train(
    config: &TrainConfig,
    store: &EmbeddingStore,
    mut on_eval: impl FnMut(&MetricsRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    let (train_pool, _) = split_classes(store, config.holdout_classes, config.seed)?;
    if train_pool.len() < config.task.n_ways {
        return Err(Error::Validation(format!(
            "train pool has {} classes, task needs {}",
            train_pool.len(),
            config.task.n_ways
        )));
    }
    let mut model = ModelState::from_config(config, store.dim())?;
    let mut sample_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut stats = GroupStats::new();
    let mut history: Vec<MetricsRecord> = Vec::new();

    for iteration in 1..=config.meta_iterations {
        let batch = sample_meta_batch(
            store,
            &config.task,
            &train_pool,
            config.meta_batch_size,
            &mut sample_rng,
        )?;
        let mut tape = Tape::new();
        let vars = model.to_tape(&mut tape);
        let mut all_losses: Vec<(String, Var)> = Vec::new();
        for episode in &batch {
            let out = model.episode_losses(&mut tape, &vars, episode)?;
            all_losses.extend(out.per_example);
        }
        let group_batch = partition_by_group(&mut tape, &all_losses)?;
        stats = update_stats(&stats, &group_batch);
        let flat = vars.flat();
        let (objective, _selected) =
            robust_objective(&mut tape, &group_batch, &stats, &config.dro, &flat)?;
        let obj_value = tape.value(objective).item()?;
        if !obj_value.is_finite() {
            return Err(Error::NonFinite {
                iteration,
                group_means: group_batch
                    .groups
                    .iter()
                    .map(|(g, gl)| (g.clone(), gl.mean_value))
                    .collect(),
            });
        }
        let grads = tape.grad(objective, &flat)?;
        let updated: Vec<Tensor> = model
            .named_params()
            .iter()
            .zip(&grads)
            .map(|((_, p), g)| sgd_apply(p, tape.value(*g), config.outer_lr))
            .collect::<Result<_>>()?;
        model.set_params(&updated)?;

        if config.eval_interval > 0 && iteration % config.eval_interval == 0 {
            let record = meta_test_at(&model, config, store, config.eval_tasks, iteration)?;
            on_eval(&record);
            history.push(record);
        }
    }
    if history.last().map(|r| r.iteration) != Some(config.meta_iterations) {
        let record = meta_test_at(&model, config, store, config.eval_tasks, config.meta_iterations)?;
        on_eval(&record);
        history.push(record);
    }
    Ok(TrainOutcome { model, history, stats })
}

fn sgd_apply(param: &Tensor, grad: &Tensor, lr: f64) -> Result<Tensor> {
    if param.shape() != grad.shape() {
        return Err(Error::Dimension(format!(
            "sgd update: param {:?} vs grad {:?}",
            param.shape(),
            grad.shape()
        )));
    }
    Tensor::new(
        param.shape().to_vec(),
        param.data().iter().zip(grad.data()).map(|(p, g)| p - lr * g).collect(),
    )
}

fn meta_test_at(
    model: &ModelState,
    config: &TrainConfig,
    store: &EmbeddingStore,
    t_tasks: usize,
    iteration: u64,
) -> Result<MetricsRecord> {
    let seed = config.seed ^ 0xE7A1_u64.wrapping_mul(iteration.wrapping_add(1));
    let mut record = meta_test(model, config, store, t_tasks, seed)?;
    record.iteration = iteration;
    Ok(record)
}

/// Evaluate `t_tasks` freshly sampled episodes without updating parameters.
/// MAML still adapts per task in its inner loop. Reports the mean accuracy
/// with a 95% half-width and worst/best/middle group accuracies, with groups
/// ranked by test-time mean loss.
pub fn meta_test(
    model: &ModelState,
    config: &TrainConfig,
    store: &EmbeddingStore,
    t_tasks: usize,
    seed: u64,
) -> Result<MetricsRecord> {
    if t_tasks < 2 {
        return Err(Error::Validation("eval tasks T must be >= 2".into()));
    }
    let (_, eval_pool) = split_classes(store, config.holdout_classes, config.seed)?;
    if eval_pool.len() < config.task.n_ways {
        return Err(Error::Validation(format!(
            "eval pool has {} classes, task needs {}",
            eval_pool.len(),
            config.task.n_ways
        )));
    }
    // Meta-test never needs gradients; first-order adaptation produces the
    // same values with a smaller tape.
    let eval_model = match model {
        ModelState::Maml(m) => {
            let mut m = m.clone();
            m.order = MamlOrder::First;
            ModelState::Maml(m)
        }
        other => other.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut task_accs = Vec::with_capacity(t_tasks);
    // group -> (queries, correct, loss sum)
    let mut agg: BTreeMap<String, (u64, u64, f64)> = BTreeMap::new();
    for _ in 0..t_tasks {
        let episode = sample_episode(store, &config.task, &eval_pool, &mut rng)?;
        let mut tape = Tape::new();
        let vars = eval_model.to_tape(&mut tape);
        let out = eval_model.episode_losses(&mut tape, &vars, &episode)?;
        task_accs.push(out.correct as f64 / out.total as f64);
        for ((group, loss_var), correct) in out.per_example.iter().zip(&out.correct_flags) {
            let e = agg.entry(group.clone()).or_insert((0, 0, 0.0));
            e.0 += 1;
            e.1 += u64::from(*correct);
            e.2 += tape.value(*loss_var).item()?;
        }
    }
    let (avg, avg_std, avg_hw) = confidence_interval(&task_accs);
    let test_stats =
        GroupStats::from_entries(agg.iter().map(|(g, (n, _, s))| (g.clone(), *n, *s)));
    let (worst_group, best_group, middle_group) = rank_groups(&test_stats)?;
    let acc_of = |g: &str| {
        let (n, c, _) = agg[g];
        let p = c as f64 / n as f64;
        (p, proportion_half_width(p, n))
    };
    let (worst, worst_hw) = acc_of(&worst_group);
    let (best, best_hw) = acc_of(&best_group);
    let (middle, middle_hw) = acc_of(&middle_group);
    let record = MetricsRecord {
        iteration: 0,
        avg,
        avg_hw,
        avg_std,
        worst,
        worst_hw,
        best,
        best_hw,
        middle,
        middle_hw,
        worst_group,
        best_group,
        middle_group,
        groups: agg
            .iter()
            .map(|(g, (n, _, s))| GroupSnapshot {
                group: g.clone(),
                n: *n,
                mean_loss: s / *n as f64,
            })
            .collect(),
    };
    record.validate()?;
    Ok(record)
}
