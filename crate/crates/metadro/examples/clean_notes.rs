//! Clean raw note text: lowercase, strip punctuation, drop stopwords,
//! truncate to a token budget. The operation is idempotent.
//!
//! Usage: cargo run --example clean_notes

use std::collections::BTreeSet;

use metadro::dataset::clean_text;

fn main() {
    let stopwords: BTreeSet<String> =
        ["the", "a", "an", "was", "is", "of", "and", "to"].iter().map(|s| s.to_string()).collect();

    let notes = [
        "The patient was GIVEN 5mg of Aspirin, twice daily!",
        "Chest X-ray: no acute findings. Follow-up in 2 weeks...",
        "",
    ];

    for note in notes {
        let cleaned = clean_text(note, &stopwords, 8);
        assert_eq!(cleaned, clean_text(&cleaned, &stopwords, 8));
        println!("{:?} -> {:?}", note, cleaned);
    }
}
