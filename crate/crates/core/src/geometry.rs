//! Exact 2D kernel for oriented furniture footprints.
//!
//! Every placed object is a rectangle rotated about the vertical axis. Overlap
//! areas come from convex polygon clipping, clearances from vertex/edge
//! distances, and room containment from clipping against the room rectangle.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::RoomBoundary;

/// Overlap below this is treated as zero by the pose search.
pub const OVERLAP_EPS: f64 = 1e-9;
/// Containment slack for corner-in-region tests.
pub const CONTAIN_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("half extents must be finite and positive, got ({0}, {1})")]
    HalfExtents(f64, f64),
    #[error("height must be finite and positive, got {0}")]
    Height(f64),
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("degenerate region [{min_x}, {max_x}] x [{min_y}, {max_y}]")]
    DegenerateRegion {
        min_x: f64,
        min_y: f64,
        max_x: f64,
        max_y: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn length(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    let t = yaw.rem_euclid(TAU);
    if t >= PI {
        t - TAU
    } else {
        t
    }
}

/// Smallest absolute difference between two angles, in `[0, pi]`.
pub fn angle_between(a: f64, b: f64) -> f64 {
    normalize_yaw(a - b).abs()
}

/// Dimensions of an object before it is posed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FootprintDims {
    pub half_width: f64,
    pub half_depth: f64,
    pub height: f64,
}

impl FootprintDims {
    pub fn new(half_width: f64, half_depth: f64, height: f64) -> Self {
        Self {
            half_width,
            half_depth,
            height,
        }
    }
}

/// A rectangle on the floor plane rotated by `yaw` about its center, plus a
/// height. `half_extents.x` runs along the local x axis (width) and
/// `half_extents.y` along the local y axis (depth). The local +y axis is the
/// object's front.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedFootprint {
    pub center: Vec2,
    pub yaw: f64,
    pub half_extents: Vec2,
    pub height: f64,
}

impl OrientedFootprint {
    pub fn new(center: Vec2, yaw: f64, dims: FootprintDims) -> Result<Self, GeometryError> {
        let fp = Self {
            center,
            yaw: normalize_yaw(yaw),
            half_extents: Vec2::new(dims.half_width, dims.half_depth),
            height: dims.height,
        };
        fp.validate()?;
        Ok(fp)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.center.is_finite() || !self.yaw.is_finite() {
            return Err(GeometryError::NonFinite("footprint pose"));
        }
        let (hw, hd) = (self.half_extents.x, self.half_extents.y);
        if !(hw.is_finite() && hd.is_finite() && hw > 0.0 && hd > 0.0) {
            return Err(GeometryError::HalfExtents(hw, hd));
        }
        if !(self.height.is_finite() && self.height > 0.0) {
            return Err(GeometryError::Height(self.height));
        }
        Ok(())
    }

    pub fn dims(&self) -> FootprintDims {
        FootprintDims::new(self.half_extents.x, self.half_extents.y, self.height)
    }

    /// Local (x, y) unit axes in world coordinates.
    pub fn axes(&self) -> (Vec2, Vec2) {
        let (s, c) = self.yaw.sin_cos();
        (Vec2::new(c, s), Vec2::new(-s, c))
    }

    pub fn forward(&self) -> Vec2 {
        self.axes().1
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Vec2; 4] {
        let (u, v) = self.axes();
        let ux = u * self.half_extents.x;
        let vy = v * self.half_extents.y;
        let c = self.center;
        [c - ux - vy, c + ux - vy, c + ux + vy, c - ux + vy]
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_extents.x * self.half_extents.y
    }

    pub fn circumradius(&self) -> f64 {
        self.half_extents.length()
    }

    pub fn contains_point(&self, p: Vec2) -> bool {
        let (u, v) = self.axes();
        let d = p - self.center;
        d.dot(u).abs() <= self.half_extents.x && d.dot(v).abs() <= self.half_extents.y
    }

    /// Axis-aligned bounds as `(min, max)`.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let (u, v) = self.axes();
        let ex = (u.x * self.half_extents.x).abs() + (v.x * self.half_extents.y).abs();
        let ey = (u.y * self.half_extents.x).abs() + (v.y * self.half_extents.y).abs();
        (
            Vec2::new(self.center.x - ex, self.center.y - ey),
            Vec2::new(self.center.x + ex, self.center.y + ey),
        )
    }

    pub fn translated(&self, d: Vec2) -> Self {
        Self {
            center: self.center + d,
            ..*self
        }
    }

    pub fn with_center(&self, center: Vec2) -> Self {
        Self { center, ..*self }
    }

    /// Grows both half extents by `margin`. The result contains every point
    /// within `margin` of the original rectangle.
    pub fn inflated(&self, margin: f64) -> Self {
        Self {
            half_extents: Vec2::new(self.half_extents.x + margin, self.half_extents.y + margin),
            ..*self
        }
    }

    /// True when `other` lies inside this footprint in plan.
    pub fn contains_footprint(&self, other: &OrientedFootprint, eps: f64) -> bool {
        let (u, v) = self.axes();
        other.corners().iter().all(|&p| {
            let d = p - self.center;
            d.dot(u).abs() <= self.half_extents.x + eps
                && d.dot(v).abs() <= self.half_extents.y + eps
        })
    }
}

/// Axis-aligned rectangle in room coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Region {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self, GeometryError> {
        let r = Self {
            min_x,
            min_y,
            max_x,
            max_y,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.min_x, self.min_y, self.max_x, self.max_y]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::NonFinite("region"));
        }
        if !(self.min_x < self.max_x && self.min_y < self.max_y) {
            return Err(GeometryError::DegenerateRegion {
                min_x: self.min_x,
                min_y: self.min_y,
                max_x: self.max_x,
                max_y: self.max_y,
            });
        }
        Ok(())
    }

    pub fn of_room(room: &RoomBoundary) -> Self {
        Self {
            min_x: 0.0,
            min_y: 0.0,
            max_x: room.width,
            max_y: room.depth,
        }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(
            0.5 * (self.min_x + self.max_x),
            0.5 * (self.min_y + self.max_y),
        )
    }

    /// Exact containment, no tolerance.
    pub fn contains_region(&self, other: &Region) -> bool {
        self.min_x <= other.min_x
            && self.min_y <= other.min_y
            && other.max_x <= self.max_x
            && other.max_y <= self.max_y
    }

    pub fn contains_point(&self, p: Vec2) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn contains_footprint(&self, fp: &OrientedFootprint) -> bool {
        fp.corners().iter().all(|p| {
            p.x >= self.min_x - CONTAIN_EPS
                && p.x <= self.max_x + CONTAIN_EPS
                && p.y >= self.min_y - CONTAIN_EPS
                && p.y <= self.max_y + CONTAIN_EPS
        })
    }

    pub fn intersection(&self, other: &Region) -> Option<Region> {
        Region::new(
            self.min_x.max(other.min_x),
            self.min_y.max(other.min_y),
            self.max_x.min(other.max_x),
            self.max_y.min(other.max_y),
        )
        .ok()
    }

    pub fn overlap_area(&self, other: &Region) -> f64 {
        let w = self.max_x.min(other.max_x) - self.min_x.max(other.min_x);
        let h = self.max_y.min(other.max_y) - self.min_y.max(other.min_y);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }

    /// Length of the boundary the two regions share when they touch without
    /// overlapping (or overlap). Zero when they are apart or meet at a corner.
    pub fn contact_length(&self, other: &Region) -> f64 {
        let w = self.max_x.min(other.max_x) - self.min_x.max(other.min_x);
        let h = self.max_y.min(other.max_y) - self.min_y.max(other.min_y);
        if w < 0.0 || h < 0.0 {
            0.0
        } else {
            w.max(h)
        }
    }

    /// Counter-clockwise corner list.
    pub fn corners(&self) -> [Vec2; 4] {
        [
            Vec2::new(self.min_x, self.min_y),
            Vec2::new(self.max_x, self.min_y),
            Vec2::new(self.max_x, self.max_y),
            Vec2::new(self.min_x, self.max_y),
        ]
    }
}

/// Sutherland-Hodgman clipping of `subject` against a convex,
/// counter-clockwise `clip` polygon.
pub fn clip_convex(subject: &[Vec2], clip: &[Vec2]) -> Vec<Vec2> {
    let mut output: Vec<Vec2> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let edge = b - a;
        let inside = |p: Vec2| edge.cross(p - a) >= 0.0;
        let input = std::mem::take(&mut output);
        let mut prev = *input.last().unwrap();
        for &cur in &input {
            let cur_in = inside(cur);
            let prev_in = inside(prev);
            if cur_in {
                if !prev_in {
                    output.push(segment_line_intersection(prev, cur, a, edge));
                }
                output.push(cur);
            } else if prev_in {
                output.push(segment_line_intersection(prev, cur, a, edge));
            }
            prev = cur;
        }
    }
    output
}

fn segment_line_intersection(p: Vec2, q: Vec2, a: Vec2, edge: Vec2) -> Vec2 {
    let d = q - p;
    let denom = edge.cross(d);
    if denom == 0.0 {
        return p;
    }
    let t = edge.cross(a - p) / denom;
    p + d * t
}

/// Shoelace area, absolute value.
pub fn polygon_area(poly: &[Vec2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..poly.len() {
        s += poly[i].cross(poly[(i + 1) % poly.len()]);
    }
    0.5 * s.abs()
}

/// Area of the intersection of two footprints in m².
pub fn overlap_area(a: &OrientedFootprint, b: &OrientedFootprint) -> f64 {
    if (a.center - b.center).length() > a.circumradius() + b.circumradius() {
        return 0.0;
    }
    let clipped = clip_convex(&a.corners(), &b.corners());
    polygon_area(&clipped).clamp(0.0, a.area().min(b.area()))
}

/// Separating-axis test. Touching rectangles count as intersecting.
pub fn footprints_intersect(a: &OrientedFootprint, b: &OrientedFootprint) -> bool {
    let ca = a.corners();
    let cb = b.corners();
    let (ua, va) = a.axes();
    let (ub, vb) = b.axes();
    for axis in [ua, va, ub, vb] {
        let (amin, amax) = project(&ca, axis);
        let (bmin, bmax) = project(&cb, axis);
        if amax < bmin - 1e-12 || bmax < amin - 1e-12 {
            return false;
        }
    }
    true
}

fn project(poly: &[Vec2], axis: Vec2) -> (f64, f64) {
    poly.iter()
        .map(|p| p.dot(axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    };
    (p - (a + ab * t)).length()
}

/// Minimum distance between the two rectangle boundaries; zero when they
/// touch or overlap.
pub fn clearance_distance(a: &OrientedFootprint, b: &OrientedFootprint) -> f64 {
    if footprints_intersect(a, b) {
        return 0.0;
    }
    let ca = a.corners();
    let cb = b.corners();
    let mut best = f64::INFINITY;
    for (poly, other) in [(&ca, &cb), (&cb, &ca)] {
        for &p in poly.iter() {
            for j in 0..4 {
                best = best.min(point_segment_distance(p, other[j], other[(j + 1) % 4]));
            }
        }
    }
    best
}

/// Area of `a` lying outside the room rectangle `[0, width] x [0, depth]`.
pub fn oob_excess(a: &OrientedFootprint, room: &RoomBoundary) -> f64 {
    let (lo, hi) = a.bounds();
    if lo.x >= 0.0 && lo.y >= 0.0 && hi.x <= room.width && hi.y <= room.depth {
        return 0.0;
    }
    let inside = polygon_area(&clip_convex(&a.corners(), &Region::of_room(room).corners()));
    (a.area() - inside).max(0.0)
}

/// Expands `r` by `delta` on every side, then clips it to the room floor.
pub fn dilate_region(r: &Region, delta: f64, clip: &RoomBoundary) -> Region {
    Region {
        min_x: (r.min_x - delta).max(0.0),
        min_y: (r.min_y - delta).max(0.0),
        max_x: (r.max_x + delta).min(clip.width),
        max_y: (r.max_y + delta).min(clip.depth),
    }
}

/// The two placement boundaries around a zone. `buffer` is preferred;
/// `interactive` is used only where the target space is free.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneConstraint {
    pub zone_id: String,
    pub buffer: Region,
    pub interactive: Region,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PosePriority {
    Buffer,
    Interactive,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseChoice {
    pub footprint: OrientedFootprint,
    pub priority: PosePriority,
}

/// Yaws tried at each grid cell, in order.
pub const CARDINAL_YAWS: [f64; 4] = [0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2];

/// Deterministic grid search for a free pose inside a zone constraint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseSearch {
    /// Translation grid step, meters.
    pub step: f64,
    /// Inflation applied to occupied footprints when falling back to the
    /// interactive boundary.
    pub clearance_margin: f64,
}

impl Default for PoseSearch {
    fn default() -> Self {
        Self {
            step: 0.1,
            clearance_margin: 0.1,
        }
    }
}

/// Grid of candidate centers over a region, scanned row-major (y outer).
#[derive(Clone, Copy, Debug)]
pub struct PoseGrid {
    pub origin: Vec2,
    pub step: f64,
    pub cols: usize,
    pub rows: usize,
}

impl PoseGrid {
    pub fn over(region: &Region, step: f64) -> Self {
        let cols = ((region.width() + 1e-9) / step).floor() as usize + 1;
        let rows = ((region.height() + 1e-9) / step).floor() as usize + 1;
        Self {
            origin: Vec2::new(region.min_x, region.min_y),
            step,
            cols,
            rows,
        }
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell(&self, index: usize) -> Vec2 {
        let row = index / self.cols;
        let col = index % self.cols;
        Vec2::new(
            self.origin.x + col as f64 * self.step,
            self.origin.y + row as f64 * self.step,
        )
    }

    /// Cell indices starting at `start`, wrapping around.
    pub fn scan_from(&self, start: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.len();
        (0..n).map(move |k| (start + k) % n)
    }
}

/// Start offsets for the buffer and interactive scans, derived from the seed.
pub fn scan_offsets(seed: u64, buffer_cells: usize, interactive_cells: usize) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = rng.random_range(0..buffer_cells.max(1));
    let b = rng.random_range(0..interactive_cells.max(1));
    (a, b)
}

impl PoseSearch {
    pub fn candidate_pose(
        &self,
        constraint: &ZoneConstraint,
        dims: FootprintDims,
        occupied: &[OrientedFootprint],
        seed: u64,
    ) -> Option<PoseChoice> {
        let buffer_grid = PoseGrid::over(&constraint.buffer, self.step);
        let interactive_grid = PoseGrid::over(&constraint.interactive, self.step);
        let (start_buf, start_int) = scan_offsets(seed, buffer_grid.len(), interactive_grid.len());

        if let Some(fp) = scan(&buffer_grid, start_buf, &constraint.buffer, dims, occupied) {
            return Some(PoseChoice {
                footprint: fp,
                priority: PosePriority::Buffer,
            });
        }
        let inflated: Vec<OrientedFootprint> = occupied
            .iter()
            .map(|o| o.inflated(self.clearance_margin))
            .collect();
        scan(
            &interactive_grid,
            start_int,
            &constraint.interactive,
            dims,
            &inflated,
        )
        .map(|fp| PoseChoice {
            footprint: fp,
            priority: PosePriority::Interactive,
        })
    }

    /// True when `fp` would be accepted at the buffer priority.
    pub fn admits_buffer(
        &self,
        constraint: &ZoneConstraint,
        fp: &OrientedFootprint,
        occupied: &[OrientedFootprint],
    ) -> bool {
        constraint.buffer.contains_footprint(fp) && is_free(fp, occupied)
    }
}

/// Convenience wrapper using the default 0.1 m grid.
pub fn candidate_pose(
    constraint: &ZoneConstraint,
    dims: FootprintDims,
    occupied: &[OrientedFootprint],
    seed: u64,
) -> Option<OrientedFootprint> {
    PoseSearch::default()
        .candidate_pose(constraint, dims, occupied, seed)
        .map(|c| c.footprint)
}

pub fn is_free(fp: &OrientedFootprint, occupied: &[OrientedFootprint]) -> bool {
    occupied.iter().all(|o| overlap_area(fp, o) <= OVERLAP_EPS)
}

fn scan(
    grid: &PoseGrid,
    start: usize,
    region: &Region,
    dims: FootprintDims,
    occupied: &[OrientedFootprint],
) -> Option<OrientedFootprint> {
    for idx in grid.scan_from(start) {
        let center = grid.cell(idx);
        for yaw in CARDINAL_YAWS {
            let fp = OrientedFootprint::new(center, yaw, dims).ok()?;
            if region.contains_footprint(&fp) && is_free(&fp, occupied) {
                return Some(fp);
            }
        }
    }
    None
}
