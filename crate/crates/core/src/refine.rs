//! Iterative reflection and rectification.
//!
//! Each step renders the plan, diagnoses penetration, clearance and
//! out-of-bound violations, scores them, and applies the clearance tool
//! followed by the collision tool until the penalty drops below the
//! threshold or the step cap is reached.
//!
//! Every rectifier move is accepted only if the geometric penalty of the
//! whole layout does not increase, so under the geometric diagnoser the
//! penalty trajectory is non-increasing.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::agents::{
    AgentClient, AgentError, DiagnosisReply, ImageRef, ObjectExcess, PairClearance, PairOverlap,
    Prompt, SuggestionReply,
};
use crate::document::{format_header, serialize_layout, RecordWriter};
use crate::geometry::{
    clearance_distance, dilate_region, oob_excess, overlap_area, OrientedFootprint, Region, Vec2,
};
use crate::render::{render_topdown, Raster, DEFAULT_RESOLUTION};
use crate::scene::{Layout, RelationKind, Role, RoomBoundary};

pub const EPS_PEN: f64 = 1e-4;
pub const EPS_OOB: f64 = 1e-3;
pub const CLR_REQUIRED: f64 = 0.1;
pub const MAX_STEPS: usize = 5;
pub const THETA_P: f64 = 3.5;
pub const DELTA_INT: f64 = 0.8;

#[derive(Debug, Error)]
pub enum RefineError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("invalid refinement parameter: {0}")]
    Parameter(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub lambda_pen: f64,
    pub lambda_clr: f64,
    pub lambda_oob: f64,
    pub theta_p: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        Self {
            lambda_pen: 0.3,
            lambda_clr: 0.2,
            lambda_oob: 0.5,
            theta_p: THETA_P,
        }
    }
}

impl PenaltyWeights {
    pub fn validate(&self) -> Result<(), RefineError> {
        let all = [
            self.lambda_pen,
            self.lambda_clr,
            self.lambda_oob,
            self.theta_p,
        ];
        if all.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(RefineError::Parameter(format!(
                "weights must be non-negative: {self:?}"
            )))
        }
    }

    /// Rectification is due when `p >= theta_p`.
    pub fn triggers(&self, p: f64) -> bool {
        p >= self.theta_p
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            lambda_pen: self.lambda_pen * c,
            lambda_clr: self.lambda_clr * c,
            lambda_oob: self.lambda_oob * c,
            theta_p: self.theta_p * c,
        }
    }
}

/// Violation lists plus suggestions. Counts are the list lengths.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub penetration_pairs: Vec<PairOverlap>,
    pub clearance_pairs: Vec<PairClearance>,
    pub oob_objects: Vec<ObjectExcess>,
    pub suggestions: Vec<SuggestionReply>,
}

impl DiagnosisReport {
    pub fn counts(&self) -> (usize, usize, usize) {
        (
            self.penetration_pairs.len(),
            self.clearance_pairs.len(),
            self.oob_objects.len(),
        )
    }

    pub fn is_clean(&self) -> bool {
        self.counts() == (0, 0, 0)
    }

    pub fn to_reply(&self) -> DiagnosisReply {
        DiagnosisReply {
            penetration_pairs: self.penetration_pairs.clone(),
            clearance_pairs: self.clearance_pairs.clone(),
            oob_objects: self.oob_objects.clone(),
            suggestions: self.suggestions.clone(),
        }
    }

    pub fn from_reply(r: DiagnosisReply) -> Self {
        Self {
            penetration_pairs: r.penetration_pairs,
            clearance_pairs: r.clearance_pairs,
            oob_objects: r.oob_objects,
            suggestions: r.suggestions,
        }
    }

    /// Ids named anywhere in the violation lists.
    pub fn violating_ids(&self) -> BTreeSet<&str> {
        let mut s = BTreeSet::new();
        for p in &self.penetration_pairs {
            s.insert(p.a.as_str());
            s.insert(p.b.as_str());
        }
        for p in &self.clearance_pairs {
            s.insert(p.a.as_str());
            s.insert(p.b.as_str());
        }
        for o in &self.oob_objects {
            s.insert(o.id.as_str());
        }
        s
    }
}

pub fn penalty(report: &DiagnosisReport, w: &PenaltyWeights) -> f64 {
    let (p, c, o) = report.counts();
    penalty_from_counts(p, c, o, w)
}

pub fn penalty_from_counts(n_pen: usize, n_clr: usize, n_oob: usize, w: &PenaltyWeights) -> f64 {
    w.lambda_pen * n_pen as f64 + w.lambda_clr * n_clr as f64 + w.lambda_oob * n_oob as f64
}

/// The object that moves when resolving a pair, then the one that stays:
/// accessories before dominants, then the lexicographically smaller id.
pub fn choose_mover<'a>(layout: &Layout, a: &'a str, b: &'a str) -> (&'a str, &'a str) {
    let role = |id: &str| layout.object(id).map(|o| o.role);
    match (role(a), role(b)) {
        (Some(Role::Accessory), Some(Role::Dominant)) => (a, b),
        (Some(Role::Dominant), Some(Role::Accessory)) => (b, a),
        _ if a <= b => (a, b),
        _ => (b, a),
    }
}

/// Deterministic diagnosis from geometry alone.
pub fn diagnose_geometric(layout: &Layout, clr_required: f64) -> DiagnosisReport {
    let objects: Vec<_> = layout.objects().collect();
    let mut report = DiagnosisReport::default();
    for i in 0..objects.len() {
        for j in i + 1..objects.len() {
            let (a, b) = (objects[i], objects[j]);
            if layout.stacked(&a.id, &b.id) {
                continue;
            }
            let ov = overlap_area(&a.footprint, &b.footprint);
            if ov > EPS_PEN {
                let (m, s) = choose_mover(layout, &a.id, &b.id);
                report.penetration_pairs.push(PairOverlap {
                    a: a.id.clone(),
                    b: b.id.clone(),
                    overlap: ov,
                });
                report.suggestions.push(SuggestionReply {
                    targets: vec![m.to_string(), s.to_string()],
                    directive: format!(
                        "translate {m} away from {s} along the minimal separation axis"
                    ),
                });
                continue;
            }
            if layout.is_supported(&a.id) || layout.is_supported(&b.id) {
                continue;
            }
            let d = clearance_distance(&a.footprint, &b.footprint);
            if d > 0.0 && d < clr_required {
                let (m, s) = choose_mover(layout, &a.id, &b.id);
                report.clearance_pairs.push(PairClearance {
                    a: a.id.clone(),
                    b: b.id.clone(),
                    distance: d,
                    required: clr_required,
                });
                report.suggestions.push(SuggestionReply {
                    targets: vec![m.to_string(), s.to_string()],
                    directive: format!(
                        "move {m} away from {s} until they are {clr_required} m apart"
                    ),
                });
            }
        }
    }
    for o in &objects {
        let ex = oob_excess(&o.footprint, &layout.room);
        if ex > EPS_OOB {
            report.oob_objects.push(ObjectExcess {
                id: o.id.clone(),
                excess: ex,
            });
            report.suggestions.push(SuggestionReply {
                targets: vec![o.id.clone()],
                directive: format!("push {} back inside the room", o.id),
            });
        }
    }
    report
}

pub fn geometric_penalty(layout: &Layout, clr_required: f64, w: &PenaltyWeights) -> f64 {
    penalty(&diagnose_geometric(layout, clr_required), w)
}

/// Follows `on_top_of` down to the object resting on the floor.
pub fn support_root(layout: &Layout, id: &str) -> String {
    let mut cur = id.to_string();
    for _ in 0..=layout.object_count() {
        let next = layout
            .relations
            .iter()
            .find(|r| r.kind == RelationKind::OnTopOf && r.subject == cur)
            .map(|r| r.object.clone());
        match next {
            Some(n) if layout.object(&n).is_some() => cur = n,
            _ => break,
        }
    }
    cur
}

/// `root` and everything it transitively supports, `root` first.
pub fn support_group(layout: &Layout, root: &str) -> Vec<String> {
    let mut group = vec![root.to_string()];
    let mut i = 0;
    while i < group.len() {
        let base = group[i].clone();
        for r in &layout.relations {
            if r.kind == RelationKind::OnTopOf && r.object == base && !group.contains(&r.subject) {
                group.push(r.subject.clone());
            }
        }
        i += 1;
    }
    group
}

pub fn translate_group(layout: &mut Layout, group: &[String], d: Vec2) {
    for id in group {
        if let Some(o) = layout.object_mut(id) {
            o.footprint = o.footprint.translated(d);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tool {
    Clearance,
    Collision,
}

impl Tool {
    pub fn as_str(self) -> &'static str {
        match self {
            Tool::Clearance => "clearance",
            Tool::Collision => "collision",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolAction {
    pub tool: Tool,
    pub target: String,
    pub dx: f64,
    pub dy: f64,
    pub applied: bool,
    pub note: String,
}

/// Knobs shared by the two rectifiers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RectifyOptions {
    pub weights: PenaltyWeights,
    pub clr_required: f64,
    pub delta_int: f64,
}

impl Default for RectifyOptions {
    fn default() -> Self {
        Self {
            weights: PenaltyWeights::default(),
            clr_required: CLR_REQUIRED,
            delta_int: DELTA_INT,
        }
    }
}

fn pen_pairs_of(layout: &Layout, group: &[String]) -> HashSet<(String, String)> {
    let mut out = HashSet::new();
    for id in group {
        let Some(a) = layout.object(id) else { continue };
        for b in layout.objects() {
            if b.id == *id || layout.stacked(id, &b.id) {
                continue;
            }
            if overlap_area(&a.footprint, &b.footprint) > EPS_PEN {
                let key = if *id < b.id {
                    (id.clone(), b.id.clone())
                } else {
                    (b.id.clone(), id.clone())
                };
                out.insert(key);
            }
        }
    }
    out
}

fn oob_members(layout: &Layout, group: &[String]) -> HashSet<String> {
    group
        .iter()
        .filter(|id| {
            layout
                .object(id)
                .is_some_and(|o| oob_excess(&o.footprint, &layout.room) > EPS_OOB)
        })
        .cloned()
        .collect()
}

const DIRECTIONS: [Vec2; 4] = [
    Vec2::new(1.0, 0.0),
    Vec2::new(-1.0, 0.0),
    Vec2::new(0.0, 1.0),
    Vec2::new(0.0, -1.0),
];

/// Smallest shift along `dir` that brings the clearance to `required`,
/// by a 1 cm scan refined with bisection. The sweep stops at the first
/// shift where `blocked` holds.
fn min_clearance_shift(
    mover: &OrientedFootprint,
    other: &OrientedFootprint,
    dir: Vec2,
    required: f64,
    blocked: impl Fn(&OrientedFootprint) -> bool,
) -> Option<f64> {
    let dist = |s: f64| clearance_distance(&mover.translated(dir * s), other);
    if dist(0.0) >= required {
        return Some(0.0);
    }
    let step = 0.01;
    let limit = required + 2.0 * (mover.circumradius() + other.circumradius()) + step;
    let mut prev = 0.0;
    let mut s = step;
    while s <= limit {
        if blocked(&mover.translated(dir * s)) {
            return None;
        }
        if dist(s) >= required {
            let (mut lo, mut hi) = (prev, s);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if dist(mid) >= required {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(hi);
        }
        prev = s;
        s += step;
    }
    None
}

fn seeded_rotation<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let n = items.len().max(1);
    let k = (seed % n as u64) as usize;
    items
        .iter()
        .cycle()
        .skip(k)
        .take(items.len())
        .cloned()
        .collect()
}

/// Moves the movable member of each clearance pair along the world axis
/// needing the least displacement. A move is rejected when it would add a
/// penetration or out-of-bound object, or raise the penalty.
pub fn rectify_clearance(
    layout: &Layout,
    report: &DiagnosisReport,
    clr_required: f64,
    room: &RoomBoundary,
    seed: u64,
) -> Layout {
    let opts = RectifyOptions {
        clr_required,
        ..RectifyOptions::default()
    };
    rectify_clearance_with(layout, report, room, seed, &opts).0
}

pub fn rectify_clearance_with(
    layout: &Layout,
    report: &DiagnosisReport,
    room: &RoomBoundary,
    seed: u64,
    opts: &RectifyOptions,
) -> (Layout, Vec<ToolAction>) {
    let mut current = layout.clone();
    current.room = *room;
    let mut actions = Vec::new();
    let dirs = seeded_rotation(&DIRECTIONS, seed);
    for pair in &report.clearance_pairs {
        let (Some(_), Some(_)) = (current.object(&pair.a), current.object(&pair.b)) else {
            continue;
        };
        let (m, s) = choose_mover(&current, &pair.a, &pair.b);
        let (m, s) = (m.to_string(), s.to_string());
        let required = pair.required.max(opts.clr_required);
        let mfp = current.object(&m).expect("checked").footprint;
        let sfp = current.object(&s).expect("checked").footprint;
        if clearance_distance(&mfp, &sfp) >= required || overlap_area(&mfp, &sfp) > EPS_PEN {
            continue;
        }
        let group = support_group(&current, &support_root(&current, &m));
        let p_before = geometric_penalty(&current, opts.clr_required, &opts.weights);
        let pen_before = pen_pairs_of(&current, &group);
        let oob_before = oob_members(&current, &group);
        let start_oob = oob_excess(&mfp, room) > EPS_OOB;
        let blocked = |fp: &OrientedFootprint| {
            if !start_oob && oob_excess(fp, room) > EPS_OOB {
                return true;
            }
            current.objects().any(|o| {
                !group.contains(&o.id)
                    && overlap_area(fp, &o.footprint) > EPS_PEN
                    && overlap_area(&mfp, &o.footprint) <= EPS_PEN
            })
        };
        let mut cands: Vec<(f64, Vec2)> = dirs
            .iter()
            .filter_map(|&d| {
                min_clearance_shift(&mfp, &sfp, d, required, &blocked).map(|sh| (sh, d))
            })
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut done = false;
        for (shift, dir) in cands {
            let delta = dir * shift;
            let mut trial = current.clone();
            translate_group(&mut trial, &group, delta);
            if !pen_pairs_of(&trial, &group).is_subset(&pen_before)
                || !oob_members(&trial, &group).is_subset(&oob_before)
            {
                continue;
            }
            if geometric_penalty(&trial, opts.clr_required, &opts.weights) > p_before {
                continue;
            }
            current = trial;
            actions.push(ToolAction {
                tool: Tool::Clearance,
                target: m.clone(),
                dx: delta.x,
                dy: delta.y,
                applied: true,
                note: format!("away from {s}"),
            });
            done = true;
            break;
        }
        if !done {
            actions.push(ToolAction {
                tool: Tool::Clearance,
                target: m.clone(),
                dx: 0.0,
                dy: 0.0,
                applied: false,
                note: format!("no admissible move away from {s}"),
            });
        }
    }
    (current, actions)
}

/// Minimal axis-aligned vector that moves `fp`'s bounds inside `region`.
fn push_into(fp: &OrientedFootprint, region: &Region) -> Option<Vec2> {
    let (lo, hi) = fp.bounds();
    let axis = |min: f64, max: f64, rmin: f64, rmax: f64| -> Option<f64> {
        if max - min > rmax - rmin + 1e-12 {
            return None;
        }
        Some(if min < rmin {
            rmin - min
        } else if max > rmax {
            rmax - max
        } else {
            0.0
        })
    };
    Some(Vec2::new(
        axis(lo.x, hi.x, region.min_x, region.max_x)?,
        axis(lo.y, hi.y, region.min_y, region.max_y)?,
    ))
}

/// Separation candidates along both footprints' edge normals, in both
/// senses, with the shift that brings the projections apart.
fn separation_candidates(m: &OrientedFootprint, o: &OrientedFootprint) -> Vec<(f64, Vec2)> {
    let (mu, mv) = m.axes();
    let (ou, ov) = o.axes();
    let mut out = Vec::with_capacity(8);
    for n in [mu, mv, ou, ov] {
        let proj = |fp: &OrientedFootprint| {
            let c = fp.corners();
            let ps = c.iter().map(|p| p.dot(n));
            ps.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
        };
        let (m_lo, m_hi) = proj(m);
        let (o_lo, o_hi) = proj(o);
        out.push(((o_hi - m_lo).max(0.0), n));
        out.push(((m_hi - o_lo).max(0.0), -n));
    }
    out
}

/// Pushes out-of-bound objects back inside the room, then separates
/// penetrating pairs along the minimal translation vector. Dominants are
/// kept inside their zone's interactive boundary when that still
/// separates the pair.
pub fn rectify_collision(
    layout: &Layout,
    report: &DiagnosisReport,
    room: &RoomBoundary,
    seed: u64,
) -> Layout {
    rectify_collision_with(layout, report, room, seed, &RectifyOptions::default()).0
}

pub fn rectify_collision_with(
    layout: &Layout,
    report: &DiagnosisReport,
    room: &RoomBoundary,
    seed: u64,
    opts: &RectifyOptions,
) -> (Layout, Vec<ToolAction>) {
    let mut current = layout.clone();
    current.room = *room;
    let mut actions = Vec::new();
    let floor = room.floor();

    for item in &report.oob_objects {
        let Some(obj) = current.object(&item.id) else {
            continue;
        };
        let fp = obj.footprint;
        if oob_excess(&fp, room) <= EPS_OOB {
            continue;
        }
        let group = support_group(&current, &support_root(&current, &item.id));
        let p_before = geometric_penalty(&current, opts.clr_required, &opts.weights);
        let mut action = ToolAction {
            tool: Tool::Collision,
            target: item.id.clone(),
            dx: 0.0,
            dy: 0.0,
            applied: false,
            note: "object does not fit inside the room".into(),
        };
        if let Some(d) = push_into(&fp, &floor) {
            let mut trial = current.clone();
            translate_group(&mut trial, &group, d);
            if geometric_penalty(&trial, opts.clr_required, &opts.weights) <= p_before {
                current = trial;
                action = ToolAction {
                    dx: d.x,
                    dy: d.y,
                    applied: true,
                    note: "pushed inside the room".into(),
                    ..action
                };
            } else {
                action.note = "push-in would raise the penalty".into();
            }
        }
        actions.push(action);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for pair in &report.penetration_pairs {
        let (Some(a), Some(b)) = (current.object(&pair.a), current.object(&pair.b)) else {
            continue;
        };
        if overlap_area(&a.footprint, &b.footprint) <= EPS_PEN || current.stacked(&a.id, &b.id) {
            continue;
        }
        let (m, s) = choose_mover(&current, &pair.a, &pair.b);
        let (m, s) = (m.to_string(), s.to_string());
        let mut applied = None;
        // The designated mover first; the other member only if it is stuck.
        for (mover, stay) in [(&m, &s), (&s, &m)] {
            if let Some(a) = separate(&current, mover, stay, &mut rng, opts) {
                applied = Some(a);
                break;
            }
        }
        match applied {
            Some((next, action)) => {
                current = next;
                actions.push(action);
            }
            None => actions.push(ToolAction {
                tool: Tool::Collision,
                target: m.clone(),
                dx: 0.0,
                dy: 0.0,
                applied: false,
                note: format!("cannot separate from {s}"),
            }),
        }
    }
    (current, actions)
}

fn separate(
    layout: &Layout,
    mover: &str,
    stay: &str,
    rng: &mut ChaCha8Rng,
    opts: &RectifyOptions,
) -> Option<(Layout, ToolAction)> {
    let root = support_root(layout, mover);
    if root == support_root(layout, stay) {
        return None;
    }
    let group = support_group(layout, &root);
    let mfp = layout.object(mover)?.footprint;
    let sfp = layout.object(stay)?.footprint;
    let root_obj = layout.object(&root)?;
    let interactive = root_obj
        .zone_id
        .as_deref()
        .filter(|_| root_obj.role == Role::Dominant)
        .and_then(|z| layout.zone(z))
        .map(|z| dilate_region(&z.region, opts.delta_int, &layout.room));
    let p_before = geometric_penalty(layout, opts.clr_required, &opts.weights);

    let mut cands = separation_candidates(&mfp, &sfp);
    // Seeded order among candidates of equal length, e.g. coincident centers.
    cands.shuffle(rng);
    cands.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut best: Option<(f64, f64, Layout, Vec2)> = None;
    for (shift, n) in cands {
        let mut delta = n * shift;
        if let Some(region) = &interactive {
            let moved = root_obj.footprint.translated(delta);
            if !region.contains_footprint(&moved) {
                if let Some(c) = push_into(&moved, region) {
                    let clamped = delta + c;
                    if overlap_area(&mfp.translated(clamped), &sfp) <= EPS_PEN {
                        delta = clamped;
                    }
                }
            }
        }
        let mut trial = layout.clone();
        translate_group(&mut trial, &group, delta);
        let now = trial.object(mover)?.footprint;
        if overlap_area(&now, &sfp) > EPS_PEN {
            continue;
        }
        let p = geometric_penalty(&trial, opts.clr_required, &opts.weights);
        if p > p_before {
            continue;
        }
        let len = delta.length();
        let better = match &best {
            None => true,
            Some((bp, bl, _, _)) => p < *bp || (p == *bp && len < *bl),
        };
        if better {
            best = Some((p, len, trial, delta));
        }
    }
    best.map(|(_, _, next, d)| {
        (
            next,
            ToolAction {
                tool: Tool::Collision,
                target: mover.to_string(),
                dx: d.x,
                dy: d.y,
                applied: true,
                note: format!("separated from {stay}"),
            },
        )
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinementStep {
    pub index: usize,
    pub layout: Layout,
    pub report: DiagnosisReport,
    pub penalty: f64,
    pub actions: Vec<ToolAction>,
    pub image: Option<Raster>,
}

impl RefinementStep {
    pub fn image_name(&self) -> String {
        format!("step_{}.ppm", self.index)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RefinementTrace {
    pub steps: Vec<RefinementStep>,
}

impl RefinementTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn penalties(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.penalty).collect()
    }

    pub fn final_penalty(&self) -> Option<f64> {
        self.steps.last().map(|s| s.penalty)
    }

    /// One `step` record per step followed by its violations, directives
    /// and tool actions.
    pub fn to_document(&self) -> String {
        let mut out = String::from("# refinement trace\n");
        out.push_str(&format_header("trace", 1));
        out.push('\n');
        for s in &self.steps {
            let (np, nc, no) = s.report.counts();
            let mut w = RecordWriter::new("step")
                .uint("index", s.index as u64)
                .num("penalty", s.penalty)
                .uint("n_pen", np as u64)
                .uint("n_clr", nc as u64)
                .uint("n_oob", no as u64);
            w = match &s.image {
                Some(_) => w.str("image", &s.image_name()),
                None => w.absent("image"),
            };
            let _ = writeln!(out, "{}", w.finish());
            for p in &s.report.penetration_pairs {
                let _ = writeln!(
                    out,
                    "{}",
                    RecordWriter::new("violation")
                        .uint("step", s.index as u64)
                        .word("class", "penetration")
                        .str("a", &p.a)
                        .str("b", &p.b)
                        .num("value", p.overlap)
                        .finish()
                );
            }
            for p in &s.report.clearance_pairs {
                let _ = writeln!(
                    out,
                    "{}",
                    RecordWriter::new("violation")
                        .uint("step", s.index as u64)
                        .word("class", "clearance")
                        .str("a", &p.a)
                        .str("b", &p.b)
                        .num("value", p.distance)
                        .finish()
                );
            }
            for o in &s.report.oob_objects {
                let _ = writeln!(
                    out,
                    "{}",
                    RecordWriter::new("violation")
                        .uint("step", s.index as u64)
                        .word("class", "oob")
                        .str("a", &o.id)
                        .absent("b")
                        .num("value", o.excess)
                        .finish()
                );
            }
            for g in &s.report.suggestions {
                let _ = writeln!(
                    out,
                    "{}",
                    RecordWriter::new("directive")
                        .uint("step", s.index as u64)
                        .str("targets", &g.targets.join(","))
                        .str("text", &g.directive)
                        .finish()
                );
            }
            for a in &s.actions {
                let _ = writeln!(
                    out,
                    "{}",
                    RecordWriter::new("action")
                        .uint("step", s.index as u64)
                        .word("tool", a.tool.as_str())
                        .str("target", &a.target)
                        .num("dx", a.dx)
                        .num("dy", a.dy)
                        .word("outcome", if a.applied { "applied" } else { "rejected" })
                        .str("note", &a.note)
                        .finish()
                );
            }
        }
        out
    }

    /// History text for the diagnosing agent. A directive counts as
    /// resolved when none of its targets is in violation at the next step.
    pub fn history_text(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.steps.iter().enumerate() {
            let (np, nc, no) = s.report.counts();
            let _ = writeln!(
                out,
                "step {}: penalty {} (penetration {np}, clearance {nc}, out-of-bound {no})",
                s.index, s.penalty
            );
            let next = self.steps.get(i + 1).map(|n| n.report.violating_ids());
            for g in &s.report.suggestions {
                let status = match &next {
                    None => "pending",
                    Some(ids) if g.targets.iter().any(|t| ids.contains(t.as_str())) => "open",
                    Some(_) => "resolved",
                };
                let _ = writeln!(out, "  [{status}] {}", g.directive);
            }
        }
        out
    }
}

pub enum Diagnoser<'a> {
    Geometric,
    Agent(&'a AgentClient),
}

/// Asks the agent for a report, then drops entries naming unknown ids or
/// repeating a pair.
pub fn diagnose_agent(
    layout: &Layout,
    image: Option<&Raster>,
    trace: &RefinementTrace,
    agent: &AgentClient,
    clr_required: f64,
) -> Result<DiagnosisReport, AgentError> {
    let doc = serialize_layout(layout);
    let mut text = format!(
        "Inspect this scene layout and its top-down render. Report object penetrations, \
         pairs closer than {clr_required} m, and objects outside the room, with a directive for each.\n\n{doc}"
    );
    if !trace.is_empty() {
        text.push_str("\nPrevious refinement steps:\n");
        text.push_str(&trace.history_text());
    }
    let mut prompt = Prompt::new(text).with_context(json!({
        "layout": doc,
        "clr_required": clr_required,
    }));
    if let Some(img) = image {
        prompt = prompt.with_images(vec![ImageRef::Inline {
            name: format!("step_{}.ppm", trace.len()),
            mime: "image/x-portable-pixmap".into(),
            data: img.to_ppm(),
        }]);
    }
    let reply: DiagnosisReply = agent.complete(prompt)?;
    Ok(validate_report(layout, DiagnosisReport::from_reply(reply)))
}

pub fn validate_report(layout: &Layout, report: DiagnosisReport) -> DiagnosisReport {
    let known = |id: &str| {
        let ok = layout.object(id).is_some();
        if !ok {
            warn!("diagnosis cites unknown object {id:?}; entry dropped");
        }
        ok
    };
    let key = |a: &str, b: &str| {
        if a < b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        }
    };
    let mut seen = HashSet::new();
    let penetration_pairs = report
        .penetration_pairs
        .into_iter()
        .filter(|p| known(&p.a) && known(&p.b) && p.a != p.b && seen.insert(key(&p.a, &p.b)))
        .collect();
    let mut seen = HashSet::new();
    let clearance_pairs = report
        .clearance_pairs
        .into_iter()
        .filter(|p| known(&p.a) && known(&p.b) && p.a != p.b && seen.insert(key(&p.a, &p.b)))
        .collect();
    let mut seen = HashSet::new();
    let oob_objects = report
        .oob_objects
        .into_iter()
        .filter(|o| known(&o.id) && seen.insert(o.id.clone()))
        .collect();
    let suggestions = report
        .suggestions
        .into_iter()
        .filter(|s| !s.targets.is_empty() && s.targets.iter().all(|t| known(t)))
        .collect();
    DiagnosisReport {
        penetration_pairs,
        clearance_pairs,
        oob_objects,
        suggestions,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineConfig {
    pub weights: PenaltyWeights,
    pub max_steps: usize,
    pub clr_required: f64,
    pub delta_int: f64,
    /// Render resolution; `None` skips rendering in geometric mode.
    pub render_resolution: Option<u32>,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            weights: PenaltyWeights::default(),
            max_steps: MAX_STEPS,
            clr_required: CLR_REQUIRED,
            delta_int: DELTA_INT,
            render_resolution: Some(DEFAULT_RESOLUTION),
        }
    }
}

pub fn refine_loop(
    g0: &Layout,
    w: &PenaltyWeights,
    max_steps: usize,
    diagnoser: Diagnoser<'_>,
    seed: u64,
) -> Result<(Layout, RefinementTrace), RefineError> {
    let config = RefineConfig {
        weights: *w,
        max_steps,
        ..RefineConfig::default()
    };
    refine_loop_with(g0, &config, diagnoser, seed)
}

pub fn refine_loop_with(
    g0: &Layout,
    config: &RefineConfig,
    diagnoser: Diagnoser<'_>,
    seed: u64,
) -> Result<(Layout, RefinementTrace), RefineError> {
    if config.max_steps == 0 {
        return Err(RefineError::Parameter(
            "max_steps must be at least 1".into(),
        ));
    }
    config.weights.validate()?;
    let opts = RectifyOptions {
        weights: config.weights,
        clr_required: config.clr_required,
        delta_int: config.delta_int,
    };
    let mut g = g0.clone();
    let mut trace = RefinementTrace::default();
    for t in 0..=config.max_steps {
        let resolution = match (&diagnoser, config.render_resolution) {
            (_, Some(r)) => Some(r),
            (Diagnoser::Agent(_), None) => Some(DEFAULT_RESOLUTION),
            (Diagnoser::Geometric, None) => None,
        };
        let image = resolution.map(|r| render_topdown(&g, r, seed));
        let report = match &diagnoser {
            Diagnoser::Geometric => diagnose_geometric(&g, config.clr_required),
            Diagnoser::Agent(agent) => {
                diagnose_agent(&g, image.as_ref(), &trace, agent, config.clr_required)?
            }
        };
        let p = penalty(&report, &config.weights);
        let mut step = RefinementStep {
            index: t,
            layout: g.clone(),
            report,
            penalty: p,
            actions: Vec::new(),
            image,
        };
        if !config.weights.triggers(p) || t == config.max_steps {
            trace.steps.push(step);
            break;
        }
        let step_seed = seed.wrapping_add(t as u64);
        let room = g.room;
        let (g1, mut acts) = rectify_clearance_with(&g, &step.report, &room, step_seed, &opts);
        let (g2, acts2) = rectify_collision_with(&g1, &step.report, &room, step_seed, &opts);
        acts.extend(acts2);
        step.actions = acts;
        trace.steps.push(step);
        g = g2;
    }
    Ok((g, trace))
}
