//! Library results against independent oracles with frozen expectations.

mod common;

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use scene_synth::geometry::{
    clearance_distance, oob_excess, FootprintDims, OrientedFootprint, PoseSearch, Region, Vec2,
    ZoneConstraint,
};
use scene_synth::pipeline::{generate, mock_memory, Clients, PipelineConfig};
use scene_synth::refine::{diagnose_geometric, CLR_REQUIRED, EPS_OOB, EPS_PEN};
use scene_synth::render::{object_color, render_topdown, PlanTransform};
use scene_synth::scene::{Layout, RelationKind, RoomBoundary, ShortDescription};

fn point_segment(p: P, a: P, b: P) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

/// Smallest distance from points sampled along one boundary to the other
/// polygon's edges, both ways round.
fn sampled_gap(a: &[P], b: &[P], per_edge: usize) -> f64 {
    let mut best = f64::INFINITY;
    for (from, to) in [(a, b), (b, a)] {
        for i in 0..from.len() {
            let (p, q) = (from[i], from[(i + 1) % from.len()]);
            for s in 0..per_edge {
                let t = s as f64 / per_edge as f64;
                let x = (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1));
                for j in 0..to.len() {
                    best = best.min(point_segment(x, to[j], to[(j + 1) % to.len()]));
                }
            }
        }
    }
    best
}

#[test]
fn clearance_matches_boundary_sampling() {
    let a = fp(0.0, 0.0, 0.0, 0.5, 0.5);
    let b = fp(2.0, 2.0, FRAC_PI_4, 0.5, 0.5);
    let want = sampled_gap(&rect_vertices(&a), &rect_vertices(&b), 10_000);
    let got = clearance_distance(&a, &b);
    assert!((got - want).abs() < 1e-3, "{got} vs {want}");
    // Corner (0.5, 0.5) to the nearest edge of the rotated square.
    assert!((got - (2.0 * 2f64.sqrt() - 2f64.sqrt() / 2.0 - 0.5)).abs() < 1e-9);
}

#[test]
fn random_clearance_matches_boundary_sampling() {
    let mut r = rng(21);
    for _ in 0..100 {
        let a = random_footprint(&mut r, (0.0, 0.0), (4.0, 3.0));
        let b = random_footprint(&mut r, (0.0, 0.0), (4.0, 3.0));
        let got = clearance_distance(&a, &b);
        if exact_overlap(&a, &b) > 1e-9 {
            assert_eq!(got, 0.0);
            continue;
        }
        let want = sampled_gap(&rect_vertices(&a), &rect_vertices(&b), 2_000);
        assert!((got - want).abs() < 1e-3, "{got} vs {want}");
    }
}

#[test]
fn corner_straddle_matches_monte_carlo() {
    let room = room();
    let f = fp(0.1, 0.2, 0.5, 0.6, 0.4);
    let mc = mc_oob(&f, &room, 1_000_000, 5);
    let got = oob_excess(&f, &room);
    assert!((got - mc).abs() / mc < 0.01, "{got} vs {mc}");
    assert!((got - exact_oob(&f, &room)).abs() < 1e-9);
}

#[test]
fn pose_search_returns_first_free_cell_in_scan_order() {
    let zone = Region::new(0.0, 0.0, 3.0, 3.0).unwrap();
    let zc = ZoneConstraint {
        zone_id: "z".into(),
        buffer: zone,
        interactive: zone,
    };
    let obstacle = fp(1.5, 1.5, 0.0, 0.5, 0.5);
    let dims = FootprintDims::new(0.4, 0.3, 1.0);
    let yaws = [0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2];
    for seed in 0..30u64 {
        let n = 31;
        let start = ChaCha8Rng::seed_from_u64(seed).random_range(0..n * n);
        let mut want = None;
        'scan: for k in 0..n * n {
            let idx = (start + k) % (n * n);
            let c = Vec2::new((idx % n) as f64 * 0.1, (idx / n) as f64 * 0.1);
            for yaw in yaws {
                let cand = OrientedFootprint::new(c, yaw, dims).unwrap();
                let inside = rect_vertices(&cand).iter().all(|&(x, y)| {
                    (-1e-9..=3.0 + 1e-9).contains(&x) && (-1e-9..=3.0 + 1e-9).contains(&y)
                });
                if inside && exact_overlap(&cand, &obstacle) <= 1e-9 {
                    want = Some(cand);
                    break 'scan;
                }
            }
        }
        let got = PoseSearch::default()
            .candidate_pose(&zc, dims, &[obstacle], seed)
            .unwrap()
            .footprint;
        let want = want.unwrap();
        assert!(
            (got.center.x - want.center.x).abs() < 1e-12
                && (got.center.y - want.center.y).abs() < 1e-12
        );
        assert_eq!(got.yaw, want.yaw);
    }
}

fn bedroom() -> Layout {
    let clients = Clients::mock();
    let memory = mock_memory(&clients.embedder).unwrap();
    let d = ShortDescription::new("a cozy bedroom").unwrap();
    generate(&d, &memory, &PipelineConfig::default(), &clients, 7)
        .unwrap()
        .layout
}

#[test]
fn bed_pixel_share_matches_area_share() {
    let l = bedroom();
    let res = 512;
    let img = render_topdown(&l, res, 7);
    let t = PlanTransform::for_layout(&l, res);
    let mut floor = 0usize;
    for py in 0..res {
        for px in 0..res {
            let w = t.world(px, py);
            if w.x >= 0.0 && w.x <= l.room.width && w.y >= 0.0 && w.y <= l.room.depth {
                floor += 1;
            }
        }
    }
    let (bi, bed) = l
        .objects()
        .enumerate()
        .find(|(_, o)| o.category == "bed")
        .unwrap();
    let bed_px = img.count(object_color(bi, 7));
    let share = bed_px as f64 / floor as f64;
    let want = bed.footprint.area() / l.room.floor_area();
    assert!((share - want).abs() / want < 0.02, "{share} vs {want}");
}

/// All-pairs diagnosis with the exact polygon oracle and sampled gaps.
fn brute_counts(l: &Layout) -> (usize, usize, usize) {
    let objs: Vec<_> = l.objects().collect();
    let on_top = |a: &str, b: &str| {
        l.relations.iter().any(|r| {
            r.kind == RelationKind::OnTopOf
                && ((r.subject == a && r.object == b) || (r.subject == b && r.object == a))
        })
    };
    let supported = |a: &str| {
        l.relations
            .iter()
            .any(|r| r.kind == RelationKind::OnTopOf && r.subject == a)
    };
    let (mut pen, mut clr) = (0, 0);
    for i in 0..objs.len() {
        for j in i + 1..objs.len() {
            let (a, b) = (objs[i], objs[j]);
            if on_top(&a.id, &b.id) {
                continue;
            }
            if exact_overlap(&a.footprint, &b.footprint) > EPS_PEN {
                pen += 1;
                continue;
            }
            if supported(&a.id) || supported(&b.id) {
                continue;
            }
            let (va, vb) = (rect_vertices(&a.footprint), rect_vertices(&b.footprint));
            let touching = shoelace(&convex_intersection(&va, &vb)) > 0.0;
            let d = if touching {
                0.0
            } else {
                sampled_gap(&va, &vb, 400)
            };
            if d > 1e-6 && d < CLR_REQUIRED {
                clr += 1;
            }
        }
    }
    let oob = objs
        .iter()
        .filter(|o| exact_oob(&o.footprint, &l.room) > EPS_OOB)
        .count();
    (pen, clr, oob)
}

#[test]
fn diagnosis_counts_match_all_pairs() {
    for seed in 0..60 {
        for l in [random_metric_layout(seed), injected_layout(seed)] {
            let got = diagnose_geometric(&l, CLR_REQUIRED).counts();
            assert_eq!(got, brute_counts(&l), "seed {seed}");
        }
    }
}

#[test]
fn overlap_is_symmetric_and_bounded() {
    let mut r = rng(8);
    let room = RoomBoundary::new(4.0, 3.0, 2.8).unwrap();
    for _ in 0..500 {
        let a = random_footprint(&mut r, (-1.0, -1.0), (5.0, 4.0));
        let b = random_footprint(&mut r, (-1.0, -1.0), (5.0, 4.0));
        let ab = scene_synth::geometry::overlap_area(&a, &b);
        let ba = scene_synth::geometry::overlap_area(&b, &a);
        assert!((ab - ba).abs() < 1e-12);
        assert!(ab <= a.area().min(b.area()) + 1e-12);
        assert!((oob_excess(&a, &room) - exact_oob(&a, &room)).abs() < 1e-9);
    }
}
