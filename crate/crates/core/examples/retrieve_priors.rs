//! Semantic retrieval, and the BM25 fallback when nothing is similar enough.

use scene_synth::memory::{augment, retrieve};
use scene_synth::pipeline::{mock_memory, Clients};
use scene_synth::scene::ShortDescription;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clients = Clients::mock();
    let memory = mock_memory(&clients.embedder)?;
    for text in ["a cozy bedroom", "a wine cellar with barrels"] {
        let d = ShortDescription::new(text)?;
        let pkg = retrieve(&d, &memory, 3, 0.35, &clients.embedder, &clients.agent)?;
        println!(
            "{text:?}: {} mode, max cosine {:.3}",
            pkg.mode.as_str(),
            pkg.max_cosine
        );
        if !pkg.query_terms.is_empty() {
            println!("  query terms: {}", pkg.query_terms.join(" "));
        }
        for r in &pkg.retrieved {
            println!("  {:.4} {} {}", r.score, r.entry.id, r.entry.texts.summary);
        }
        println!("{}", augment(&d, &pkg).prompt_text());
    }
    Ok(())
}
