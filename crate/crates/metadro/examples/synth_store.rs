//! Generate a synthetic grouped-shift store, round-trip it through all
//! three on-disk formats, and print class/group summaries.
//!
//! Usage: cargo run --example synth_store

use metadro::dataset::{load_store, write_store, StoreFormat};
use metadro::synth::{generate, SynthSpec};

fn main() -> metadro::Result<()> {
    let store = generate(&SynthSpec {
        dim: 8,
        classes: 5,
        groups_per_class: 3,
        records_per_class: 40,
        mean_scale: 4.0,
        noise_sigma: 1.0,
        shift_delta: 2.0,
        minority_frac: 0.15,
        seed: 11,
    })?;

    println!("{} records, dim {}", store.len(), store.dim());
    println!("class counts: {:?}", store.class_counts());
    println!("group counts: {:?}", store.group_counts());

    let dir = std::env::temp_dir().join("metadro_synth_store_example");
    std::fs::create_dir_all(&dir)?;
    for (name, format) in [
        ("store.csv", StoreFormat::Csv),
        ("store.jsonl", StoreFormat::Jsonl),
        ("store.bin", StoreFormat::Binary),
    ] {
        let path = dir.join(name);
        write_store(&store, &path, format)?;
        let back = load_store(&path, format)?;
        assert_eq!(back.len(), store.len());
        assert_eq!(back.dim(), store.dim());
        println!(
            "{:?}: {} bytes, round-trips {} records",
            format,
            std::fs::metadata(&path)?.len(),
            back.len()
        );
    }
    Ok(())
}
