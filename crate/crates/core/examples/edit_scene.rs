//! Delete, add and move edits, each followed by refinement.

use scene_synth::edit::{edit_and_refine, EditOp};
use scene_synth::pipeline::{generate, mock_memory, Clients, PipelineConfig};
use scene_synth::refine::{Diagnoser, RefineConfig};
use scene_synth::scene::{AssetCatalog, ShortDescription};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clients = Clients::mock();
    let memory = mock_memory(&clients.embedder)?;
    let d = ShortDescription::new("a cozy bedroom")?;
    let layout = generate(&d, &memory, &PipelineConfig::default(), &clients, 7)?.layout;
    let config = RefineConfig {
        render_resolution: None,
        ..RefineConfig::default()
    };
    let catalog = AssetCatalog::default();

    let ops = [
        EditOp::Delete {
            id: "nightstand_1".into(),
        },
        EditOp::Add {
            category: "plant".into(),
            x: 1.0,
            y: 2.6,
            yaw: 0.0,
            parent: None,
            on_top: None,
        },
        EditOp::Move {
            id: "wardrobe_0".into(),
            x: 3.2,
            y: 0.6,
        },
    ];
    for op in &ops {
        let out = edit_and_refine(&layout, op, &catalog, &config, Diagnoser::Geometric, 1)?;
        println!(
            "{op:?}\n  affected {:?}, {} objects, penalties {:?}",
            out.edited.affected,
            out.layout.object_count(),
            out.trace.penalties()
        );
    }
    Ok(())
}
