//! Builds a prior memory from the synthetic corpus and writes it to disk.
//!
//! cargo run --example build_memory -- memory.txt

use scene_synth::agents::mock::synthetic_corpus;
use scene_synth::agents::EmbeddingClient;
use scene_synth::memory::{build_memory, deserialize_memory, serialize_memory};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "memory.txt".into());
    let corpus = synthetic_corpus(24);
    let memory = build_memory(&corpus, &EmbeddingClient::mock())?;
    let doc = serialize_memory(&memory);
    assert_eq!(deserialize_memory(&doc)?, memory);
    std::fs::write(&out, &doc)?;
    println!(
        "{} entries, dim {}, mean length {:.1} tokens -> {out}",
        memory.len(),
        memory.embedding_dim,
        memory.stats.avg_len
    );
    for e in memory.entries.iter().take(3) {
        println!("  {}: {}", e.id, e.texts.summary);
    }
    Ok(())
}
