//! One generation against an OpenAI-compatible endpoint.
//!
//! Reads SCENE_SYNTH_API_BASE, SCENE_SYNTH_API_KEY and the optional model
//! variables.
//! Exits with a message when no endpoint is configured.

use scene_synth::agents::http::{live_clients, LiveSettings};
use scene_synth::agents::mock::synthetic_corpus;
use scene_synth::agents::RequestLimiter;
use scene_synth::memory::build_memory;
use scene_synth::pipeline::{generate, Clients, PipelineConfig};
use scene_synth::scene::ShortDescription;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let settings = match LiveSettings::from_env() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("no live endpoint: {e}");
            return Ok(());
        }
    };
    let live = live_clients(&settings, RequestLimiter::new(4))?;
    let clients = Clients {
        agent: live.agent,
        embedder: live.embedder,
    };
    let memory = build_memory(&synthetic_corpus(12), &clients.embedder)?;
    let d = ShortDescription::new("a cozy bedroom")?;
    let g = generate(&d, &memory, &PipelineConfig::default(), &clients, 0)?;
    println!(
        "{} objects, final penalty {:?}",
        g.layout.object_count(),
        g.trace.final_penalty()
    );
    Ok(())
}
