//! Collision% and OOB% over a small batch of mock generations.

use scene_synth::eval::evaluate_batch;
use scene_synth::pipeline::{mock_memory, Clients, PipelineConfig};
use scene_synth::scene::ShortDescription;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clients = Clients::mock();
    let memory = mock_memory(&clients.embedder)?;
    let scenes = [
        "a cozy bedroom",
        "a small home office",
        "a bright living room",
        "a compact bathroom",
    ]
    .into_iter()
    .map(ShortDescription::new)
    .collect::<Result<Vec<_>, _>>()?;
    let report = evaluate_batch(
        &scenes,
        3,
        &memory,
        &PipelineConfig::default(),
        &clients,
        11,
    );
    print!("{}", report.to_tsv());
    Ok(())
}
