//! Renders a generated layout as a top-down PPM with its color legend.
//!
//! cargo run --example render_plan -- plan.ppm

use scene_synth::pipeline::{generate, mock_memory, Clients, PipelineConfig};
use scene_synth::render::{legend, render_topdown};
use scene_synth::scene::ShortDescription;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "plan.ppm".into());
    let clients = Clients::mock();
    let memory = mock_memory(&clients.embedder)?;
    let d = ShortDescription::new("a bright living room")?;
    let layout = generate(&d, &memory, &PipelineConfig::default(), &clients, 3)?.layout;
    let img = render_topdown(&layout, 384, 3);
    std::fs::write(&out, img.to_ppm())?;
    print!("{}", legend(&layout, 3));
    println!("wrote {out}");
    Ok(())
}
