//! Meta-learners: MLP encoder, Prototypical Network, MAML, and parameter
//! checkpoints.

mod checkpoint;
mod encoder;
mod maml;
mod protonet;

pub use checkpoint::{load_params, save_params};
pub use encoder::{EncoderVars, MlpEncoder};
pub use maml::{sgd_step_on_tape, MamlModel, MamlOrder};
pub use protonet::ProtoNetModel;

use crate::autodiff::Var;

/// Query losses for one episode: per-example loss nodes tagged with group
/// codes, the episode mean node, and the prediction tally.
#[derive(Debug, Clone)]
pub struct EpisodeLosses {
    pub per_example: Vec<(String, Var)>,
    /// Whether each query example was predicted correctly, in query order.
    pub correct_flags: Vec<bool>,
    pub mean: Var,
    pub correct: usize,
    pub total: usize,
}
