//! Oriented-footprint measures: overlap, clearance and out-of-room area.

use std::f64::consts::FRAC_PI_4;

use scene_synth::geometry::{
    clearance_distance, oob_excess, overlap_area, FootprintDims, OrientedFootprint, Vec2,
};
use scene_synth::scene::RoomBoundary;

fn square(x: f64, y: f64, yaw: f64, side: f64) -> OrientedFootprint {
    OrientedFootprint::new(
        Vec2::new(x, y),
        yaw,
        FootprintDims::new(side / 2.0, side / 2.0, 1.0),
    )
    .unwrap()
}

fn main() {
    let a = square(0.0, 0.0, 0.0, 2.0);
    let b = square(0.0, 0.0, FRAC_PI_4, 2.0);
    println!(
        "2x2 squares, one turned 45 deg: overlap {:.6} (octagon {:.6})",
        overlap_area(&a, &b),
        8.0 * (2f64.sqrt() - 1.0)
    );

    let c = square(2.0, 2.0, FRAC_PI_4, 1.0);
    println!(
        "gap to a diamond at (2, 2): {:.6}",
        clearance_distance(&square(0.0, 0.0, 0.0, 1.0), &c)
    );

    let room = RoomBoundary::new(4.0, 3.0, 2.8).unwrap();
    let corner = square(0.1, 0.1, 0.5, 1.0);
    println!(
        "square over the corner: {:.6} m^2 outside of {:.1}",
        oob_excess(&corner, &room),
        corner.area()
    );
}
