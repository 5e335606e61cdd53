//! Geometric refinement of a layout with a penetration and a wall breach.

use scene_synth::geometry::{FootprintDims, OrientedFootprint, Region, Vec2};
use scene_synth::refine::{refine_loop_with, Diagnoser, PenaltyWeights, RefineConfig};
use scene_synth::scene::{FunctionalityZone, Layout, ObjectPlacement, RoomBoundary};

fn boxed(id: &str, x: f64, y: f64, hw: f64, hd: f64) -> ObjectPlacement {
    let fp = OrientedFootprint::new(Vec2::new(x, y), 0.0, FootprintDims::new(hw, hd, 1.0)).unwrap();
    ObjectPlacement::dominant(id, "box", fp, "main")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let room = RoomBoundary::new(4.0, 3.0, 2.8)?;
    let zone = FunctionalityZone {
        id: "main".into(),
        region: Region::new(0.0, 0.0, 4.0, 3.0)?,
        functionality: "living".into(),
    };
    let layout = Layout::new(
        room,
        vec![zone],
        vec![
            boxed("sofa", 1.0, 1.0, 0.9, 0.4),
            boxed("table", 1.6, 1.2, 0.5, 0.3),
            boxed("shelf", 3.9, 2.0, 0.4, 0.2),
        ],
        vec![],
        vec![],
    )?;
    // A low threshold keeps the loop going until every violation is gone.
    let config = RefineConfig {
        weights: PenaltyWeights {
            theta_p: 0.1,
            ..PenaltyWeights::default()
        },
        render_resolution: None,
        ..RefineConfig::default()
    };
    let (out, trace) = refine_loop_with(&layout, &config, Diagnoser::Geometric, 1)?;
    for step in &trace.steps {
        println!(
            "step {} p={:.2} counts={:?}",
            step.index,
            step.penalty,
            step.report.counts()
        );
        for a in &step.actions {
            println!("  {a:?}");
        }
    }
    for o in out.objects() {
        println!(
            "{} at ({:.3}, {:.3})",
            o.id, o.footprint.center.x, o.footprint.center.y
        );
    }
    Ok(())
}
