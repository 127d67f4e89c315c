//! Sample one N-way K-shot episode and classify its queries by nearest
//! prototype, showing the pieces the trainer assembles per iteration.
//!
//! Usage: cargo run --example protonet_episode

use metadro::autodiff::Tape;
use metadro::episodes::{sample_episode, TaskSpec};
use metadro::models::{MlpEncoder, ProtoNetModel};
use metadro::synth::{generate, SynthSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> metadro::Result<()> {
    let store = generate(&SynthSpec {
        dim: 8,
        classes: 10,
        groups_per_class: 2,
        records_per_class: 30,
        mean_scale: 5.0,
        noise_sigma: 0.8,
        shift_delta: 0.0,
        minority_frac: 0.1,
        seed: 1,
    })?;

    let task = TaskSpec::new(5, 3, 2)?;
    let pool = store.classes();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let episode = sample_episode(&store, &task, &pool, &mut rng)?;

    println!(
        "episode: {} support, {} query, classes {:?}",
        episode.support.len(),
        episode.query.len(),
        episode.class_map
    );

    // The identity encoder makes this pure nearest-prototype classification
    // in the raw embedding space.
    let model = ProtoNetModel::new(MlpEncoder::identity(store.dim()));
    let mut tape = Tape::new();
    let vars = model.encoder.to_tape(&mut tape).layers;
    let out = model.episode_losses(&mut tape, &vars, &episode)?;

    for (flag, (group, loss)) in out.correct_flags.iter().zip(&out.per_example) {
        println!(
            "query group {}: loss {:.4} {}",
            group,
            tape.value(*loss).item()?,
            if *flag { "correct" } else { "wrong" }
        );
    }
    println!(
        "accuracy {}/{}  mean loss {:.4}",
        out.correct,
        out.total,
        tape.value(out.mean).item()?
    );
    Ok(())
}
