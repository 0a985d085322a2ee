//! Regenerates the bundled mini-corpus: `cargo run -p mstml --example make_fixtures [out]`.

use std::path::PathBuf;

fn main() -> mstml::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/mini_corpus.jsonl"));
    let docs = mstml::synth::mini_corpus(42);
    mstml::synth::write_jsonl(&docs, &out)?;
    println!("wrote {} records to {}", docs.len(), out.display());
    Ok(())
}
