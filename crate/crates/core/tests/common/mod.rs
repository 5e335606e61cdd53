//! Independent oracles and seeded generators shared by the integration
//! tests. Nothing here calls the library's geometry or scoring code.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scene_synth::geometry::{FootprintDims, OrientedFootprint, Region, Vec2};
use scene_synth::scene::{
    FunctionalityZone, Granularity, Layout, ObjectPlacement, Relation, RelationKind, RoomBoundary,
};

pub type P = (f64, f64);

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn room() -> RoomBoundary {
    RoomBoundary::new(4.0, 3.0, 2.8).unwrap()
}

pub fn fp(x: f64, y: f64, yaw: f64, hw: f64, hd: f64) -> OrientedFootprint {
    OrientedFootprint::new(Vec2::new(x, y), yaw, FootprintDims::new(hw, hd, 1.0)).unwrap()
}

// ---- plane geometry -------------------------------------------------------

/// Counter-clockwise corners from the raw parameters.
pub fn rect_vertices(f: &OrientedFootprint) -> Vec<P> {
    let (cx, cy) = (f.center.x, f.center.y);
    let (c, s) = (f.yaw.cos(), f.yaw.sin());
    let (hw, hd) = (f.half_extents.x, f.half_extents.y);
    [(-hw, -hd), (hw, -hd), (hw, hd), (-hw, hd)]
        .iter()
        .map(|&(a, b)| (cx + a * c - b * s, cy + a * s + b * c))
        .collect()
}

/// Rectangle in its own frame, for point membership by inverse rotation.
#[derive(Clone, Copy)]
pub struct Frame {
    cx: f64,
    cy: f64,
    c: f64,
    s: f64,
    hw: f64,
    hd: f64,
}

impl Frame {
    pub fn of(f: &OrientedFootprint) -> Self {
        Self {
            cx: f.center.x,
            cy: f.center.y,
            c: f.yaw.cos(),
            s: f.yaw.sin(),
            hw: f.half_extents.x,
            hd: f.half_extents.y,
        }
    }

    pub fn contains(&self, p: P) -> bool {
        let (dx, dy) = (p.0 - self.cx, p.1 - self.cy);
        let a = dx * self.c + dy * self.s;
        let b = -dx * self.s + dy * self.c;
        a.abs() <= self.hw && b.abs() <= self.hd
    }
}

pub fn in_rect(f: &OrientedFootprint, p: P) -> bool {
    Frame::of(f).contains(p)
}

fn cross(o: P, a: P, b: P) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn in_convex(poly: &[P], p: P, tol: f64) -> bool {
    (0..poly.len()).all(|i| cross(poly[i], poly[(i + 1) % poly.len()], p) >= -tol)
}

fn segment_intersection(a: P, b: P, c: P, d: P) -> Option<P> {
    let r = (b.0 - a.0, b.1 - a.1);
    let s = (d.0 - c.0, d.1 - c.1);
    let den = r.0 * s.1 - r.1 * s.0;
    if den.abs() < 1e-15 {
        return None;
    }
    let t = ((c.0 - a.0) * s.1 - (c.1 - a.1) * s.0) / den;
    let u = ((c.0 - a.0) * r.1 - (c.1 - a.1) * r.0) / den;
    ((-1e-12..=1.0 + 1e-12).contains(&t) && (-1e-12..=1.0 + 1e-12).contains(&u))
        .then(|| (a.0 + t * r.0, a.1 + t * r.1))
}

/// Monotone-chain convex hull, counter-clockwise.
pub fn hull(mut pts: Vec<P>) -> Vec<P> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-13 && (a.1 - b.1).abs() < 1e-13);
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<P> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<P> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub fn shoelace(poly: &[P]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        s += a.0 * b.1 - a.1 * b.0;
    }
    0.5 * s.abs()
}

/// Intersection of two convex polygons by vertex enumeration: vertices of
/// each inside the other plus all edge crossings, then their hull.
pub fn convex_intersection(a: &[P], b: &[P]) -> Vec<P> {
    let mut pts = Vec::new();
    pts.extend(a.iter().copied().filter(|&p| in_convex(b, p, 1e-12)));
    pts.extend(b.iter().copied().filter(|&p| in_convex(a, p, 1e-12)));
    for i in 0..a.len() {
        for j in 0..b.len() {
            if let Some(p) =
                segment_intersection(a[i], a[(i + 1) % a.len()], b[j], b[(j + 1) % b.len()])
            {
                pts.push(p);
            }
        }
    }
    hull(pts)
}

pub fn exact_overlap(a: &OrientedFootprint, b: &OrientedFootprint) -> f64 {
    shoelace(&convex_intersection(&rect_vertices(a), &rect_vertices(b)))
}

pub fn aabb(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<P> {
    vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
}

pub fn exact_oob(f: &OrientedFootprint, room: &RoomBoundary) -> f64 {
    let inside = shoelace(&convex_intersection(
        &rect_vertices(f),
        &aabb(0.0, 0.0, room.width, room.depth),
    ));
    (4.0 * f.half_extents.x * f.half_extents.y - inside).max(0.0)
}

/// Sampling box around `poly`, in whichever frame (world or the local
/// frame of one of `frames`) gives the smallest box.
struct SampleBox {
    c: f64,
    s: f64,
    lo: P,
    hi: P,
}

impl SampleBox {
    fn area(&self) -> f64 {
        (self.hi.0 - self.lo.0) * (self.hi.1 - self.lo.1)
    }

    fn point(&self, u: f64, v: f64) -> P {
        let a = self.lo.0 + u * (self.hi.0 - self.lo.0);
        let b = self.lo.1 + v * (self.hi.1 - self.lo.1);
        (a * self.c - b * self.s, a * self.s + b * self.c)
    }
}

fn tight_box(poly: &[P], yaws: &[f64]) -> SampleBox {
    let mut best: Option<SampleBox> = None;
    for &yaw in yaws {
        let (c, s) = (yaw.cos(), yaw.sin());
        let local: Vec<P> = poly
            .iter()
            .map(|&(x, y)| (x * c + y * s, -x * s + y * c))
            .collect();
        let lo = local.iter().fold((f64::INFINITY, f64::INFINITY), |m, p| {
            (m.0.min(p.0), m.1.min(p.1))
        });
        let hi = local
            .iter()
            .fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |m, p| {
                (m.0.max(p.0), m.1.max(p.1))
            });
        let b = SampleBox { c, s, lo, hi };
        if best.as_ref().is_none_or(|x| b.area() < x.area()) {
            best = Some(b);
        }
    }
    best.unwrap()
}

/// Monte-Carlo overlap area with `n` samples. Only the sampling window is
/// taken from the exact polygon; membership is tested point by point.
pub fn mc_overlap(a: &OrientedFootprint, b: &OrientedFootprint, n: usize, seed: u64) -> f64 {
    let poly = convex_intersection(&rect_vertices(a), &rect_vertices(b));
    if poly.len() < 3 {
        return 0.0;
    }
    let bx = tight_box(&poly, &[0.0, a.yaw, b.yaw]);
    let (fa, fb) = (Frame::of(a), Frame::of(b));
    let mut r = rng(seed);
    let mut hits = 0usize;
    for _ in 0..n {
        let p = bx.point(r.random(), r.random());
        if fa.contains(p) && fb.contains(p) {
            hits += 1;
        }
    }
    bx.area() * hits as f64 / n as f64
}

/// Monte-Carlo area of `f` outside the room. The outside is split into four
/// disjoint wall strips; samples are shared in proportion to window area.
pub fn mc_oob(f: &OrientedFootprint, room: &RoomBoundary, n: usize, seed: u64) -> f64 {
    const BIG: f64 = 1e3;
    let (w, d) = (room.width, room.depth);
    let strips: [(f64, f64, f64, f64); 4] = [
        (-BIG, -BIG, 0.0, BIG),
        (w, -BIG, BIG, BIG),
        (0.0, -BIG, w, 0.0),
        (0.0, d, w, BIG),
    ];
    let verts = rect_vertices(f);
    let mut windows = Vec::new();
    for &(x0, y0, x1, y1) in &strips {
        let poly = convex_intersection(&verts, &aabb(x0, y0, x1, y1));
        if poly.len() >= 3 && shoelace(&poly) > 0.0 {
            windows.push(((x0, y0, x1, y1), tight_box(&poly, &[0.0, f.yaw])));
        }
    }
    let total: f64 = windows.iter().map(|w| w.1.area()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let frame = Frame::of(f);
    let mut r = rng(seed);
    let mut est = 0.0;
    for ((x0, y0, x1, y1), bx) in &windows {
        let m = ((n as f64) * bx.area() / total).round().max(1.0) as usize;
        let mut hits = 0usize;
        for _ in 0..m {
            let p = bx.point(r.random(), r.random());
            let in_strip = p.0 >= *x0 && p.0 <= *x1 && p.1 >= *y0 && p.1 <= *y1;
            if in_strip && frame.contains(p) {
                hits += 1;
            }
        }
        est += bx.area() * hits as f64 / m as f64;
    }
    est
}

pub fn random_footprint(r: &mut ChaCha8Rng, lo: P, hi: P) -> OrientedFootprint {
    fp(
        r.random_range(lo.0..hi.0),
        r.random_range(lo.1..hi.1),
        r.random_range(-PI..PI),
        r.random_range(0.1..1.0),
        r.random_range(0.1..1.0),
    )
}

// ---- ranking --------------------------------------------------------------

/// Okapi BM25 written out term by term.
pub fn bm25_reference(docs: &[Vec<String>], query: &[String], k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let total: usize = docs.iter().map(Vec::len).sum();
    let avgdl = total as f64 / n;
    let terms: BTreeSet<&String> = query.iter().collect();
    docs.iter()
        .map(|doc| {
            let mut score = 0.0;
            for t in &terms {
                let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
                let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                let tf = doc.iter().filter(|w| w == t).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let dl = doc.len() as f64;
                score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / avgdl));
            }
            score
        })
        .collect()
}

/// Repeated selection of the best remaining index; ties go to the lower index.
pub fn brute_top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut left: Vec<usize> = (0..scores.len()).collect();
    let mut out = Vec::new();
    while out.len() < k && !left.is_empty() {
        let mut best = 0;
        for i in 1..left.len() {
            if scores[left[i]] > scores[left[best]] {
                best = i;
            }
        }
        out.push(left.remove(best));
    }
    out
}

// ---- layouts --------------------------------------------------------------

pub fn strip_zones(room: &RoomBoundary, k: usize) -> Vec<FunctionalityZone> {
    (0..k)
        .map(|i| FunctionalityZone {
            id: format!("zone_{i}"),
            region: Region::new(
                room.width * i as f64 / k as f64,
                0.0,
                if i + 1 == k {
                    room.width
                } else {
                    room.width * (i + 1) as f64 / k as f64
                },
                room.depth,
            )
            .unwrap(),
            functionality: format!("use {i}"),
        })
        .collect()
}

const ODD_LABELS: &[&str] = &[
    "box",
    "tall \"shelf\"",
    "back\\slash",
    "tab\there",
    "line\nbreak",
    "café chair",
    "x=1 y=2",
    "# not a comment",
];

/// Random valid layout: strip zones, up to `max_dom` dominants and
/// `max_acc` accessories anywhere in or around the room, random relations.
pub fn random_layout(seed: u64, max_dom: usize, max_acc: usize) -> Layout {
    let mut r = rng(seed);
    let room = RoomBoundary::new(
        r.random_range(2.0..8.0),
        r.random_range(2.0..8.0),
        r.random_range(2.0..4.0),
    )
    .unwrap();
    let zones = if r.random_bool(0.1) {
        Vec::new()
    } else {
        strip_zones(&room, r.random_range(1..4))
    };
    let mut doms = Vec::new();
    let mut accs: Vec<ObjectPlacement> = Vec::new();
    if !zones.is_empty() {
        for i in 0..r.random_range(0..=max_dom) {
            let f = random_footprint(&mut r, (-0.5, -0.5), (room.width + 0.5, room.depth + 0.5));
            let zone = zones[r.random_range(0..zones.len())].id.clone();
            let cat = ODD_LABELS[r.random_range(0..ODD_LABELS.len())];
            doms.push(ObjectPlacement::dominant(format!("d{i}"), cat, f, zone));
        }
    }
    if !doms.is_empty() {
        for i in 0..r.random_range(0..=max_acc) {
            let f = random_footprint(&mut r, (-0.5, -0.5), (room.width + 0.5, room.depth + 0.5));
            let parent: &ObjectPlacement = &doms[r.random_range(0..doms.len())];
            let zone = if r.random_bool(0.8) {
                parent.zone_id.clone()
            } else {
                None
            };
            let cat = ODD_LABELS[r.random_range(0..ODD_LABELS.len())];
            accs.push(ObjectPlacement::accessory(
                format!("a{i}"),
                cat,
                f,
                parent.id.clone(),
                zone,
            ));
        }
    }
    let mut ids: Vec<String> = vec!["room".into()];
    ids.extend(zones.iter().map(|z| z.id.clone()));
    ids.extend(doms.iter().chain(&accs).map(|o| o.id.clone()));
    let mut relations = Vec::new();
    for _ in 0..r.random_range(0..8) {
        let kind = RelationKind::ALL[r.random_range(0..RelationKind::ALL.len())];
        let g = [
            Granularity::Zone,
            Granularity::Dominant,
            Granularity::Accessory,
        ][r.random_range(0..3)];
        let s = ids[r.random_range(0..ids.len())].clone();
        let o = ids[r.random_range(0..ids.len())].clone();
        relations.push(Relation::new(s, kind, o, g));
    }
    Layout::new(room, zones, doms, accs, relations).unwrap()
}

/// Random layout for metric recounts: objects of varied size packed in a
/// 4 x 3 room with frequent overlaps, some resting on others.
pub fn random_metric_layout(seed: u64) -> Layout {
    let mut r = rng(seed);
    let room = room();
    let zones = strip_zones(&room, 2);
    let mut doms = Vec::new();
    for i in 0..r.random_range(0..10) {
        let f = random_footprint(&mut r, (-0.3, -0.3), (4.3, 3.3));
        doms.push(ObjectPlacement::dominant(
            format!("d{i}"),
            "box",
            f,
            zones[i % 2].id.clone(),
        ));
    }
    let mut accs = Vec::new();
    let mut relations = Vec::new();
    if !doms.is_empty() {
        for i in 0..r.random_range(0..6) {
            let p = r.random_range(0..doms.len());
            let parent: &ObjectPlacement = &doms[p];
            let on_top = r.random_bool(0.5);
            let f = if on_top {
                parent.footprint.with_center(parent.footprint.center)
            } else {
                random_footprint(&mut r, (-0.3, -0.3), (4.3, 3.3))
            };
            let id = format!("a{i}");
            if on_top {
                relations.push(Relation::new(
                    id.clone(),
                    RelationKind::OnTopOf,
                    parent.id.clone(),
                    Granularity::Accessory,
                ));
            }
            accs.push(ObjectPlacement::accessory(
                id,
                "item",
                f,
                parent.id.clone(),
                parent.zone_id.clone(),
            ));
        }
    }
    Layout::new(room, zones, doms, accs, relations).unwrap()
}

/// Brute-force Collision%: objects in a non-stacked pair overlapping by
/// more than `eps_pen`, by exact polygon area.
pub fn recount_collision(l: &Layout, eps_pen: f64) -> f64 {
    let objs: Vec<&ObjectPlacement> = l.dominants.iter().chain(&l.accessories).collect();
    if objs.is_empty() {
        return 0.0;
    }
    let stacked = |a: &str, b: &str| {
        l.relations.iter().any(|r| {
            r.kind == RelationKind::OnTopOf
                && ((r.subject == a && r.object == b) || (r.subject == b && r.object == a))
        })
    };
    let mut k = 0;
    for a in &objs {
        let hit = objs.iter().any(|b| {
            b.id != a.id
                && !stacked(&a.id, &b.id)
                && exact_overlap(&a.footprint, &b.footprint) > eps_pen
        });
        if hit {
            k += 1;
        }
    }
    100.0 * k as f64 / objs.len() as f64
}

pub fn recount_oob(l: &Layout, eps_oob: f64) -> f64 {
    let objs: Vec<&ObjectPlacement> = l.dominants.iter().chain(&l.accessories).collect();
    if objs.is_empty() {
        return 0.0;
    }
    let k = objs
        .iter()
        .filter(|o| exact_oob(&o.footprint, &l.room) > eps_oob)
        .count();
    100.0 * k as f64 / objs.len() as f64
}

// ---- refinement corpus ----------------------------------------------------

/// Ten dominants on a jittered 5 x 2 grid in a 4 x 3 room, then three
/// disjoint neighbor pairs pushed into each other and two other objects
/// pushed partly through a wall.
pub fn injected_layout(seed: u64) -> Layout {
    let mut r = rng(seed);
    let room = room();
    let zones = strip_zones(&room, 2);
    let (cw, ch) = (room.width / 5.0, room.depth / 2.0);
    let mut fps = Vec::new();
    for row in 0..2 {
        for col in 0..5 {
            let hw = r.random_range(0.15..0.28);
            let hd = r.random_range(0.2..0.45);
            let cx = cw * (col as f64 + 0.5) + r.random_range(-0.05..0.05);
            let cy = ch * (row as f64 + 0.5) + r.random_range(-0.1..0.1);
            fps.push(fp(cx, cy, 0.0, hw, hd));
        }
    }
    // Pairs (0,1), (2,3) in the lower row and (5,6) in the upper row.
    for &(a, b) in &[(0usize, 1usize), (2, 3), (5, 6)] {
        let gap =
            fps[b].center.x - fps[b].half_extents.x - (fps[a].center.x + fps[a].half_extents.x);
        let depth = r.random_range(0.05..0.15);
        fps[a] = fps[a].translated(Vec2::new(gap + depth, 0.0));
    }
    // Objects 4 (lower right) and 9 (upper right) straddle walls.
    let push = r.random_range(0.1..0.2);
    fps[4] = fps[4].translated(Vec2::new(
        room.width - (fps[4].center.x + fps[4].half_extents.x) + push,
        0.0,
    ));
    let push = r.random_range(0.1..0.2);
    fps[9] = fps[9].translated(Vec2::new(
        0.0,
        room.depth - (fps[9].center.y + fps[9].half_extents.y) + push,
    ));
    let doms: Vec<ObjectPlacement> = fps
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            let zone = if f.center.x < room.width / 2.0 {
                "zone_0"
            } else {
                "zone_1"
            };
            ObjectPlacement::dominant(format!("obj_{i:02}"), "box", f, zone)
        })
        .collect();
    Layout::new(room, zones, doms, vec![], vec![]).unwrap()
}
