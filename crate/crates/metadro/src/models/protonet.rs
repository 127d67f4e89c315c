//! Prototypical Network head: class prototypes as support means, squared
//! Euclidean distance to prototypes as negative logits.

use crate::autodiff::{stack_rows, Tape, Tensor, Var};
use crate::episodes::{Episode, SupportItem};
use crate::error::{Error, Result};

use super::encoder::MlpEncoder;
use super::EpisodeLosses;

#[derive(Debug, Clone)]
pub struct ProtoNetModel {
    pub encoder: MlpEncoder,
}

impl ProtoNetModel {
    pub fn new(encoder: MlpEncoder) -> Self {
        ProtoNetModel { encoder }
    }

    /// Prototypes c_n = mean of each class's encoded support vectors,
    /// returned as an [N, e] matrix (row n = c_n).
    pub fn prototypes(
        &self,
        tape: &mut Tape,
        enc_vars: &[(Var, Var)],
        support: &[SupportItem],
    ) -> Result<Var> {
        if support.is_empty() {
            return Err(Error::Validation("empty support set".into()));
        }
        let n_ways = support.iter().map(|s| s.label).max().unwrap() + 1;
        let vectors: Vec<&Tensor> = support.iter().map(|s| &s.vector).collect();
        let x = tape.constant(stack_rows(&vectors)?);
        let encoded = self.encoder.forward(tape, enc_vars, x)?;
        // Averaging matrix: row n holds 1/K_n at each support item of class n,
        // so prototypes fall out of a single constant matmul.
        let mut counts = vec![0usize; n_ways];
        for s in support {
            counts[s.label] += 1;
        }
        let mut avg = vec![0.0; n_ways * support.len()];
        for (i, s) in support.iter().enumerate() {
            avg[s.label * support.len() + i] = 1.0 / counts[s.label] as f64;
        }
        let a = tape.constant(Tensor::matrix(n_ways, support.len(), avg)?);
        tape.matmul(a, encoded)
    }

    /// Logits for encoded queries [M, e] against prototypes [N, e]:
    /// logit_{m,n} = −‖q_m − c_n‖². Argmax over logits equals argmin over
    /// distances.
    pub fn logits(&self, tape: &mut Tape, prototypes: Var, queries_enc: Var) -> Result<Var> {
        let (m, e) = tape.value(queries_enc).dims2()?;
        let (n, e2) = tape.value(prototypes).dims2()?;
        if e != e2 {
            return Err(Error::Dimension(format!(
                "query dim {} vs prototype dim {}",
                e, e2
            )));
        }
        // ‖q−c‖² = ‖q‖² + ‖c‖² − 2 q·c
        let pt = tape.transpose(prototypes)?;
        let qc = tape.matmul(queries_enc, pt)?;
        let q2 = tape.mul(queries_enc, queries_enc)?;
        let qsq = tape.row_sum(q2)?;
        let qsq_b = tape.broadcast_cols(qsq, n)?;
        let p2 = tape.mul(prototypes, prototypes)?;
        let psq = tape.row_sum(p2)?;
        let psq_t = tape.transpose(psq)?;
        let psq_b = tape.broadcast_rows(psq_t, m)?;
        let qc2 = tape.scale(qc, -2.0);
        let s = tape.add(qsq_b, psq_b)?;
        let dist = tape.add(s, qc2)?;
        Ok(tape.scale(dist, -1.0))
    }

    /// Query cross-entropy for one episode: per-example losses tagged with
    /// group codes, the episode mean, and prediction accuracy counts.
    pub fn episode_losses(
        &self,
        tape: &mut Tape,
        enc_vars: &[(Var, Var)],
        episode: &Episode,
    ) -> Result<EpisodeLosses> {
        let protos = self.prototypes(tape, enc_vars, &episode.support)?;
        let qvecs: Vec<&Tensor> = episode.query.iter().map(|q| &q.vector).collect();
        let qx = tape.constant(stack_rows(&qvecs)?);
        let qenc = self.encoder.forward(tape, enc_vars, qx)?;
        let logits = self.logits(tape, protos, qenc)?;
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

    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        self.encoder.named_params()
    }
}

pub(crate) fn argmax_row(logits: &Tensor, row: usize) -> usize {
    let cols = logits.shape()[1];
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for j in 0..cols {
        let v = logits.get2(row, j);
        if v > best_v {
            best_v = v;
            best = j;
        }
    }
    best
}
