//! Train a prototypical network on separable synthetic embeddings and
//! evaluate on held-out classes.
//!
//! Usage: cargo run --release --example train_protonet [seed] [iterations]

use metadro::synth::{generate, SynthSpec};
use metadro::trainer::{meta_train, ModelKind, TrainConfig};
use metadro::episodes::TaskSpec;
use metadro::dro::DroConfig;
use metadro::models::MamlOrder;

fn main() -> metadro::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(0);
    let iters: u64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(2000);
    let lr: f64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(0.005);

    let store = generate(&SynthSpec {
        dim: 16,
        classes: 20,
        groups_per_class: 2,
        records_per_class: 50,
        mean_scale: 5.0,
        noise_sigma: 1.0,
        shift_delta: 0.0,
        minority_frac: 0.1,
        seed,
    })?;

    let cfg = TrainConfig {
        task: TaskSpec::new(10, 5, 1)?,
        model: ModelKind::Protonet,
        meta_batch_size: 16,
        outer_lr: lr,
        meta_iterations: iters,
        eval_interval: 200,
        eval_tasks: 100,
        seed,
        dro: DroConfig::default(),
        hidden: vec![],
        embed_dim: 64,
        maml_order: MamlOrder::Second,
        inner_lr: 0.01,
        inner_steps: 1,
        holdout_classes: 10,
    };

    let start = std::time::Instant::now();
    let outcome = meta_train(&cfg, &store, |rec| {
        println!(
            "iter {:5}  avg {:.4} ± {:.4}  worst {:.4} ({})",
            rec.iteration, rec.avg, rec.avg_hw, rec.worst, rec.worst_group
        );
    })?;
    let last = outcome.history.last().unwrap();
    println!("final: {}  ({:.1?})", last.format_summary_row(), start.elapsed());
    Ok(())
}
