//! MAML: inner-loop SGD on the support loss, outer gradients through (or
//! around, for first order) the adapted parameters.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{stack_rows, Tape, Tensor, Var};
use crate::episodes::Episode;
use crate::error::{Error, Result};

use super::encoder::MlpEncoder;
use super::protonet::argmax_row;
use super::EpisodeLosses;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MamlOrder {
    First,
    Second,
}

impl std::str::FromStr for MamlOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(MamlOrder::First),
            "second" => Ok(MamlOrder::Second),
            other => Err(Error::Validation(format!("unknown MAML order '{}'", other))),
        }
    }
}

/// One SGD step `θ' = θ − lr·∇loss` expressed on the tape. With
/// `through = true` the gradients stay connected to θ, so later gradients
/// differentiate through the step; with `through = false` the gradients are
/// re-inserted as constants (first-order treatment).
pub fn sgd_step_on_tape(
    tape: &mut Tape,
    params: &[Var],
    loss: Var,
    lr: f64,
    through: bool,
) -> Result<Vec<Var>> {
    let grads = tape.grad(loss, params)?;
    params
        .iter()
        .zip(grads)
        .map(|(p, g)| {
            let g = if through {
                g
            } else {
                let v = tape.value(g).clone();
                tape.constant(v)
            };
            let step = tape.scale(g, lr);
            tape.sub(*p, step)
        })
        .collect()
}

/// Encoder plus linear classifier head, all adapted jointly in the inner loop.
#[derive(Debug, Clone)]
pub struct MamlModel {
    pub encoder: MlpEncoder,
    pub head_w: Tensor,
    pub head_b: Tensor,
    pub inner_lr: f64,
    pub inner_steps: usize,
    pub order: MamlOrder,
}

impl MamlModel {
    pub fn new(
        encoder: MlpEncoder,
        n_ways: usize,
        inner_lr: f64,
        inner_steps: usize,
        order: MamlOrder,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if inner_lr <= 0.0 {
            return Err(Error::Validation("inner_lr must be > 0".into()));
        }
        if inner_steps < 1 {
            return Err(Error::Validation("inner_steps must be >= 1".into()));
        }
        let e = encoder.output_dim();
        let std = (1.0 / e as f64).sqrt();
        let normal = Normal::new(0.0, std).map_err(|err| Error::Validation(err.to_string()))?;
        let head_w = Tensor::matrix(e, n_ways, (0..e * n_ways).map(|_| normal.sample(rng)).collect())?;
        let head_b = Tensor::matrix(1, n_ways, vec![0.0; n_ways])?;
        Ok(MamlModel { encoder, head_w, head_b, inner_lr, inner_steps, order })
    }

    pub fn n_ways(&self) -> usize {
        self.head_w.shape()[1]
    }

    /// Register θ on a tape: encoder layers then head, flat var list.
    pub fn to_tape(&self, tape: &mut Tape) -> Vec<Var> {
        let mut vars = Vec::new();
        for (w, b) in self.encoder.weights.iter().zip(&self.encoder.biases) {
            vars.push(tape.constant(w.clone()));
            vars.push(tape.constant(b.clone()));
        }
        vars.push(tape.constant(self.head_w.clone()));
        vars.push(tape.constant(self.head_b.clone()));
        vars
    }

    /// Logits for a [rows, d] batch under an arbitrary parameter var list
    /// (initial θ or adapted θ').
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let n_enc = self.encoder.weights.len() * 2;
        let enc_vars: Vec<(Var, Var)> =
            vars[..n_enc].chunks(2).map(|c| (c[0], c[1])).collect();
        let h = self.encoder.forward(tape, &enc_vars, x)?;
        let rows = tape.value(h).rows()?;
        let z = tape.matmul(h, vars[n_enc])?;
        let bb = tape.broadcast_rows(vars[n_enc + 1], rows)?;
        tape.add(z, bb)
    }

    /// Inner-loop adaptation on the support set: `inner_steps` SGD steps on
    /// the support cross-entropy. Returns fresh adapted vars; θ is untouched.
    /// With `order == Second` the steps stay recorded for meta-gradients.
    pub fn inner_adapt(&self, tape: &mut Tape, vars: &[Var], episode: &Episode) -> Result<Vec<Var>> {
        let svecs: Vec<&Tensor> = episode.support.iter().map(|s| &s.vector).collect();
        let sx = tape.constant(stack_rows(&svecs)?);
        let labels: Vec<usize> = episode.support.iter().map(|s| s.label).collect();
        let mut current = vars.to_vec();
        for _ in 0..self.inner_steps {
            let logits = self.forward(tape, &current, sx)?;
            let loss = tape.softmax_cross_entropy(logits, &labels)?;
            current = sgd_step_on_tape(
                tape,
                &current,
                loss,
                self.inner_lr,
                self.order == MamlOrder::Second,
            )?;
        }
        Ok(current)
    }

    /// Per-query-example outer losses at the adapted parameters, tagged with
    /// group codes, plus accuracy counts.
    pub fn episode_outer_losses(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        episode: &Episode,
    ) -> Result<EpisodeLosses> {
        let adapted = self.inner_adapt(tape, vars, episode)?;
        let qvecs: Vec<&Tensor> = episode.query.iter().map(|q| &q.vector).collect();
        let qx = tape.constant(stack_rows(&qvecs)?);
        let logits = self.forward(tape, &adapted, qx)?;
        let labels: Vec<usize> = episode.query.iter().map(|q| q.label).collect();
        let (per_example, mean) = tape.softmax_cross_entropy_per_example(logits, &labels)?;
        let lv = tape.value(logits).clone();
        let correct_flags: Vec<bool> = episode
            .query
            .iter()
            .enumerate()
            .map(|(i, q)| argmax_row(&lv, i) == q.label)
            .collect();
        let correct = correct_flags.iter().filter(|c| **c).count();
        Ok(EpisodeLosses {
            per_example: episode
                .query
                .iter()
                .zip(per_example)
                .map(|(q, v)| (q.group.clone(), v))
                .collect(),
            correct_flags,
            mean,
            correct,
            total: episode.query.len(),
        })
    }

    /// Meta-gradient of the summed outer query losses with respect to θ.
    pub fn maml_meta_gradient(&self, batch: &[Episode]) -> Result<Vec<Tensor>> {
        if batch.is_empty() {
            return Err(Error::Validation("empty meta batch".into()));
        }
        let mut tape = Tape::new();
        let vars = self.to_tape(&mut tape);
        let mut total: Option<Var> = None;
        for ep in batch {
            let out = self.episode_outer_losses(&mut tape, &vars, ep)?;
            total = Some(match total {
                None => out.mean,
                Some(t) => tape.add(t, out.mean)?,
            });
        }
        let grads = tape.grad(total.unwrap(), &vars)?;
        Ok(grads.into_iter().map(|g| tape.value(g).clone()).collect())
    }

    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = self.encoder.named_params();
        out.push(("head.w".into(), self.head_w.clone()));
        out.push(("head.b".into(), self.head_b.clone()));
        out
    }

    pub fn set_params(&mut self, values: &[Tensor]) -> Result<()> {
        let n_enc = self.encoder.weights.len() * 2;
        if values.len() != n_enc + 2 {
            return Err(Error::Validation(format!(
                "expected {} tensors, got {}",
                n_enc + 2,
                values.len()
            )));
        }
        self.encoder.set_params(&values[..n_enc])?;
        if values[n_enc].shape() != self.head_w.shape() || values[n_enc + 1].shape() != self.head_b.shape() {
            return Err(Error::Dimension("head shape mismatch".into()));
        }
        self.head_w = values[n_enc].clone();
        self.head_b = values[n_enc + 1].clone();
        Ok(())
    }
}
