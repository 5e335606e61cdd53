//! Full mock pipeline: retrieve priors, ground zones and objects, refine.
//!
//! cargo run --example generate_bedroom -- "a cozy bedroom" 7

use scene_synth::document::serialize_layout;
use scene_synth::pipeline::{generate, mock_memory, Clients, PipelineConfig};
use scene_synth::scene::ShortDescription;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let text = args.next().unwrap_or_else(|| "a cozy bedroom".into());
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);

    let clients = Clients::mock();
    let memory = mock_memory(&clients.embedder)?;
    let d = ShortDescription::new(text)?;
    let g = generate(&d, &memory, &PipelineConfig::default(), &clients, seed)?;

    println!(
        "retrieval: {} (max cosine {:.3})",
        g.augmented.package.mode.as_str(),
        g.augmented.package.max_cosine
    );
    for z in &g.zones.zones {
        println!(
            "zone {} [{:.2}, {:.2}] x [{:.2}, {:.2}]",
            z.id, z.region.min_x, z.region.max_x, z.region.min_y, z.region.max_y
        );
    }
    println!("penalties per step: {:?}", g.trace.penalties());
    print!("{}", serialize_layout(&g.layout));
    Ok(())
}
