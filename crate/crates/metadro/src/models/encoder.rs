//! Fully connected encoder applied to precomputed embeddings.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// MLP with ReLU on all but the last layer. Holds parameter values between
/// iterations; per-batch computation goes through tape vars.
#[derive(Debug, Clone)]
pub struct MlpEncoder {
    pub widths: Vec<usize>,
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

/// Tape handles for one batch's encoder parameters, layer by layer.
#[derive(Debug, Clone)]
pub struct EncoderVars {
    pub layers: Vec<(Var, Var)>,
}

impl MlpEncoder {
    /// He-initialized encoder for `widths = [input, hidden..., output]`.
    pub fn new(widths: Vec<usize>, rng: &mut ChaCha8Rng) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Validation("encoder needs at least input and output widths".into()));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = (2.0 / fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std).map_err(|e| Error::Validation(e.to_string()))?;
            let data: Vec<f64> = (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect();
            weights.push(Tensor::matrix(fan_in, fan_out, data)?);
            biases.push(Tensor::matrix(1, fan_out, vec![0.0; fan_out])?);
        }
        let _ = rng.gen::<u64>(); // decouple later draws from layer count
        Ok(MlpEncoder { widths, weights, biases })
    }

    /// Identity map (square weight = I, zero bias): handy in tests where the
    /// encoder must not move the inputs.
    pub fn identity(dim: usize) -> Self {
        MlpEncoder {
            widths: vec![dim, dim],
            weights: vec![Tensor::eye(dim)],
            biases: vec![Tensor::matrix(1, dim, vec![0.0; dim]).unwrap()],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Register current parameter values on a tape.
    pub fn to_tape(&self, tape: &mut Tape) -> EncoderVars {
        let layers = self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| (tape.constant(w.clone()), tape.constant(b.clone())))
            .collect();
        EncoderVars { layers }
    }

    /// Forward pass over a [rows, input_dim] batch using the given vars.
    pub fn forward(&self, tape: &mut Tape, vars: &[(Var, Var)], x: Var) -> Result<Var> {
        let rows = tape.value(x).rows()?;
        let mut h = x;
        let last = vars.len() - 1;
        for (i, (w, b)) in vars.iter().enumerate() {
            let z = tape.matmul(h, *w)?;
            let bb = tape.broadcast_rows(*b, rows)?;
            h = tape.add(z, bb)?;
            if i != last {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    /// Named parameter tensors, in layer order.
    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            out.push((format!("enc.w{}", i), w.clone()));
            out.push((format!("enc.b{}", i), b.clone()));
        }
        out
    }

    /// Replace parameter values (same order as `named_params`).
    pub fn set_params(&mut self, values: &[Tensor]) -> Result<()> {
        if values.len() != self.weights.len() * 2 {
            return Err(Error::Validation(format!(
                "expected {} encoder tensors, got {}",
                self.weights.len() * 2,
                values.len()
            )));
        }
        for (i, pair) in values.chunks(2).enumerate() {
            if pair[0].shape() != self.weights[i].shape() || pair[1].shape() != self.biases[i].shape() {
                return Err(Error::Dimension(format!("encoder layer {} shape mismatch", i)));
            }
            self.weights[i] = pair[0].clone();
            self.biases[i] = pair[1].clone();
        }
        Ok(())
    }
}
