//! Functionality-aware hierarchical layout construction.
//!
//! Zones are grounded first and act as spatial anchors. Dominant objects
//! are placed zone by zone, each proposal conditioned on what is already
//! placed. Accessories follow, one dominant at a time. Agent proposals
//! that break a placement rule are snapped to a valid pose by a seeded grid
//! search rather than rejected outright.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::agents::mock::stable_hash;
use crate::agents::{
    AccessoryPlacementKind, AccessoryProposalReply, AgentClient, AgentError, DominantProposalReply,
    Prompt, ZoneGroundingReply, ZoneProposal,
};
use crate::geometry::{
    angle_between, clearance_distance, dilate_region, is_free, normalize_yaw, oob_excess,
    overlap_area, FootprintDims, OrientedFootprint, PoseGrid, PosePriority, PoseSearch, Region,
    Vec2, ZoneConstraint, CONTAIN_EPS, OVERLAP_EPS,
};
use crate::memory::AugmentedDescription;
use crate::scene::{
    normalize_category, AssetCatalog, FunctionalityZone, Granularity, Layout, ObjectPlacement,
    Relation, RelationKind, Role, RoomBoundary, ValidationError, ROOT_ID,
};

pub const DELTA_BUF: f64 = 0.3;
pub const DELTA_INT: f64 = 0.8;
pub const MAX_DOMINANTS_PER_ZONE: usize = 4;
pub const MAX_ZONE_OVERLAP: f64 = 0.10;
pub const WALL_CONTACT: f64 = 0.05;
pub const NEAR_DISTANCE: f64 = 1.0;

#[derive(Debug, Error)]
pub enum GroundingError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("zone grounding failed after retry: {0}")]
    ZoneValidation(String),
    #[error("delta_buf ({0}) must be non-negative and below delta_int ({1})")]
    Parameter(f64, f64),
    #[error("invalid accessory criteria: {0}")]
    Criteria(String),
}

/// Placement rules for accessories: on a support surface, or beside the
/// parent and facing it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccessoryCriteria {
    /// Allow resting on the parent or another accessory.
    pub support: bool,
    /// Maximum boundary gap to the parent, meters.
    pub adjacency: f64,
    /// Facing tolerance, radians.
    pub facing_tolerance: f64,
}

impl Default for AccessoryCriteria {
    fn default() -> Self {
        Self {
            support: true,
            adjacency: 0.6,
            facing_tolerance: FRAC_PI_4,
        }
    }
}

impl AccessoryCriteria {
    pub fn validate(&self) -> Result<(), GroundingError> {
        if !(self.adjacency > 0.0 && self.adjacency.is_finite()) {
            return Err(GroundingError::Criteria(format!(
                "adjacency {}",
                self.adjacency
            )));
        }
        if !(self.facing_tolerance > 0.0 && self.facing_tolerance <= std::f64::consts::PI) {
            return Err(GroundingError::Criteria(format!(
                "facing tolerance {}",
                self.facing_tolerance
            )));
        }
        Ok(())
    }

    /// Same orientation as the parent, or front pointing at its center.
    pub fn faces(&self, fp: &OrientedFootprint, parent: &OrientedFootprint) -> bool {
        parallel(fp, parent, self.facing_tolerance) || toward(fp, parent, self.facing_tolerance)
    }

    pub fn adjacent(&self, fp: &OrientedFootprint, parent: &OrientedFootprint) -> bool {
        clearance_distance(fp, parent) <= self.adjacency
    }

    pub fn floor_ok(&self, fp: &OrientedFootprint, parent: &OrientedFootprint) -> bool {
        self.adjacent(fp, parent) && self.faces(fp, parent)
    }
}

fn parallel(fp: &OrientedFootprint, parent: &OrientedFootprint, tol: f64) -> bool {
    angle_between(fp.yaw, parent.yaw) <= tol
}

fn toward(fp: &OrientedFootprint, parent: &OrientedFootprint, tol: f64) -> bool {
    let d = parent.center - fp.center;
    if d.length() < 1e-12 {
        return false;
    }
    angle_between(yaw_facing(d), fp.yaw) <= tol
}

/// Yaw whose forward axis points along `d`.
pub fn yaw_facing(d: Vec2) -> f64 {
    normalize_yaw((-d.x).atan2(d.y))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundingConfig {
    pub delta_buf: f64,
    pub delta_int: f64,
    pub search: PoseSearch,
    pub max_dominants_per_zone: usize,
    pub criteria: AccessoryCriteria,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        Self {
            delta_buf: DELTA_BUF,
            delta_int: DELTA_INT,
            search: PoseSearch::default(),
            max_dominants_per_zone: MAX_DOMINANTS_PER_ZONE,
            criteria: AccessoryCriteria::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZoneGrounding {
    pub zones: Vec<FunctionalityZone>,
    pub functions: Vec<String>,
    /// Ids of zones whose proposed region was clipped to the room.
    pub clipped: Vec<String>,
    /// Agent calls used: 1, or 2 after a retry.
    pub attempts: u32,
}

pub fn slug(label: &str) -> String {
    let s: String = label
        .trim()
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { '_' })
        .collect();
    let s = s.trim_matches('_').to_string();
    if s.is_empty() {
        "zone".into()
    } else {
        s
    }
}

fn room_json(room: &RoomBoundary) -> Value {
    json!({"width": room.width, "depth": room.depth, "height": room.height})
}

fn region_json(r: &Region) -> Value {
    json!([r.min_x, r.min_y, r.max_x, r.max_y])
}

fn fp_json(id: &str, category: &str, fp: &OrientedFootprint) -> Value {
    json!({
        "id": id, "category": category,
        "x": fp.center.x, "y": fp.center.y, "yaw": fp.yaw,
        "hw": fp.half_extents.x, "hd": fp.half_extents.y, "height": fp.height,
    })
}

/// Clips proposals to the room and checks the partition rules.
fn accept_zones(
    proposals: &[ZoneProposal],
    room: &RoomBoundary,
) -> Result<(Vec<FunctionalityZone>, Vec<String>), String> {
    let floor = room.floor();
    let mut zones: Vec<FunctionalityZone> = Vec::new();
    let mut clipped = Vec::new();
    let mut used: BTreeMap<String, usize> = BTreeMap::new();
    for p in proposals {
        let [a, b, c, d] = p.region;
        let raw = Region {
            min_x: a.min(c),
            min_y: b.min(d),
            max_x: a.max(c),
            max_y: b.max(d),
        };
        let region = raw
            .intersection(&floor)
            .filter(|r| r.width() > 1e-9 && r.height() > 1e-9)
            .ok_or_else(|| format!("zone {:?} has no area inside the room", p.functionality))?;
        let base = format!("{}_zone", slug(&p.functionality));
        let n = used.entry(base.clone()).or_insert(0);
        let id = if *n == 0 {
            base.clone()
        } else {
            format!("{base}_{n}")
        };
        *n += 1;
        if region != raw {
            clipped.push(id.clone());
        }
        zones.push(FunctionalityZone {
            id,
            region,
            functionality: p.functionality.trim().to_string(),
        });
    }
    for i in 0..zones.len() {
        for j in i + 1..zones.len() {
            let (a, b) = (&zones[i].region, &zones[j].region);
            let limit = MAX_ZONE_OVERLAP * a.area().min(b.area());
            if a.overlap_area(b) > limit + 1e-12 {
                return Err(format!(
                    "zones {} and {} overlap by more than 10% of the smaller one",
                    zones[i].id, zones[j].id
                ));
            }
        }
    }
    Ok((zones, clipped))
}

/// Asks the agent for 1 to 6 zones, clips them to the room and checks the
/// overlap rule. A rejected partition is re-requested once.
pub fn ground_zones(
    d_aug: &AugmentedDescription,
    room: &RoomBoundary,
    agent: &AgentClient,
) -> Result<ZoneGrounding, GroundingError> {
    room.validate()?;
    let base = format!(
        "{}\n\nThe room is {} m wide (x) and {} m deep (y). Partition it into functionality zones.",
        d_aug.prompt_text(),
        room.width,
        room.depth
    );
    let context = json!({
        "description": d_aug.original.as_str(),
        "room": room_json(room),
        "priors": d_aug.prior_summaries(),
    });
    let mut text = base.clone();
    for attempt in 1..=2 {
        let reply: ZoneGroundingReply =
            agent.complete(Prompt::new(text.clone()).with_context(context.clone()))?;
        match accept_zones(&reply.zones, room) {
            Ok((zones, clipped)) => {
                let functions = zones.iter().map(|z| z.functionality.clone()).collect();
                return Ok(ZoneGrounding {
                    zones,
                    functions,
                    clipped,
                    attempts: attempt,
                });
            }
            Err(msg) if attempt == 1 => {
                warn!("zone proposal rejected, retrying: {msg}");
                text = format!("{base}\n\nThe previous partition was rejected: {msg}.");
            }
            Err(msg) => return Err(GroundingError::ZoneValidation(msg)),
        }
    }
    unreachable!("loop returns on the second attempt")
}

pub fn zone_constraints(
    zone: &FunctionalityZone,
    room: &RoomBoundary,
    delta_buf: f64,
    delta_int: f64,
) -> Result<ZoneConstraint, GroundingError> {
    if !(delta_buf >= 0.0 && delta_buf < delta_int) {
        return Err(GroundingError::Parameter(delta_buf, delta_int));
    }
    Ok(ZoneConstraint {
        zone_id: zone.id.clone(),
        buffer: dilate_region(&zone.region, delta_buf, room),
        interactive: dilate_region(&zone.region, delta_int, room),
    })
}

/// One placement decision, kept for replay and audits.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacementRecord {
    pub id: String,
    pub category: String,
    pub proposed: OrientedFootprint,
    pub placed: OrientedFootprint,
    pub snapped: bool,
    pub priority: Option<PosePriority>,
    /// Seed handed to the grid search.
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Placement {
    pub objects: Vec<ObjectPlacement>,
    pub relations: Vec<Relation>,
    pub records: Vec<PlacementRecord>,
    pub warnings: Vec<String>,
}

/// Hands out `category_n` ids, counting per category.
#[derive(Clone, Debug, Default)]
pub struct IdAllocator {
    next: BTreeMap<String, usize>,
}

impl IdAllocator {
    pub fn from_layout(layout: &Layout) -> Self {
        let mut a = Self::default();
        for o in layout.objects() {
            a.reserve(&o.id);
        }
        a
    }

    pub fn reserve(&mut self, id: &str) {
        if let Some((cat, n)) = id.rsplit_once('_') {
            if let Ok(n) = n.parse::<usize>() {
                let e = self.next.entry(cat.to_string()).or_insert(0);
                *e = (*e).max(n + 1);
            }
        }
    }

    pub fn allocate(&mut self, category: &str) -> String {
        let n = self.next.entry(category.to_string()).or_insert(0);
        let id = format!("{category}_{n}");
        *n += 1;
        id
    }
}

pub fn step_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut bytes = seed.to_le_bytes().to_vec();
    for p in parts {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    stable_hash(&[&bytes])
}

/// Walks the zones in order, asking for up to four dominants per zone.
/// Proposals that are not admissible inside the buffer boundary are
/// snapped by the grid search; zones with no free pose are skipped with a
/// warning.
#[allow(clippy::too_many_arguments)]
pub fn place_dominants(
    d_aug: &AugmentedDescription,
    zones: &[FunctionalityZone],
    constraints: &[ZoneConstraint],
    catalog: &AssetCatalog,
    agent: &AgentClient,
    seed: u64,
    room: &RoomBoundary,
    config: &GroundingConfig,
    ids: &mut IdAllocator,
) -> Result<Placement, GroundingError> {
    let mut out = Placement::default();
    for (t, zone) in zones.iter().enumerate() {
        let zc = constraints
            .iter()
            .find(|c| c.zone_id == zone.id)
            .cloned()
            .map_or_else(
                || zone_constraints(zone, room, config.delta_buf, config.delta_int),
                Ok,
            )?;
        let placed: Vec<Value> = out
            .objects
            .iter()
            .map(|o| fp_json(&o.id, &o.category, &o.footprint))
            .collect();
        let text = format!(
            "{}\n\nPlace the primary furniture for the {} zone, region [{}, {}, {}, {}] m. \
             Already placed: {}.",
            d_aug.prompt_text(),
            zone.functionality,
            zone.region.min_x,
            zone.region.min_y,
            zone.region.max_x,
            zone.region.max_y,
            if placed.is_empty() {
                "nothing".to_string()
            } else {
                out.objects
                    .iter()
                    .map(|o| o.id.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            }
        );
        let context = json!({
            "zone": {"id": zone.id, "functionality": zone.functionality, "region": region_json(&zone.region)},
            "buffer": region_json(&zc.buffer),
            "interactive": region_json(&zc.interactive),
            "placed": placed,
            "room": room_json(room),
        });
        let reply: DominantProposalReply =
            agent.complete(Prompt::new(text).with_context(context))?;
        for (k, p) in reply
            .objects
            .iter()
            .take(config.max_dominants_per_zone)
            .enumerate()
        {
            let category = normalize_category(&p.category);
            if !catalog.allows(&category, Role::Dominant) {
                let msg = format!("{category} is not a dominant category; proposal skipped");
                warn!("{msg}");
                out.warnings.push(msg);
                continue;
            }
            let dims = catalog.dims(&category);
            let proposed =
                OrientedFootprint::new(Vec2::new(p.x, p.y), p.yaw, dims).map_err(|source| {
                    ValidationError::Geometry {
                        id: category.clone(),
                        source,
                    }
                })?;
            let occupied: Vec<OrientedFootprint> =
                out.objects.iter().map(|o| o.footprint).collect();
            let s = step_seed(seed, &[t as u64, k as u64]);
            let (placed, snapped, priority) =
                if config.search.admits_buffer(&zc, &proposed, &occupied) {
                    (proposed, false, Some(PosePriority::Buffer))
                } else {
                    match config.search.candidate_pose(&zc, dims, &occupied, s) {
                        Some(c) => (c.footprint, true, Some(c.priority)),
                        None => {
                            let msg = format!(
                                "no free pose for {category} in zone {}; proposal skipped",
                                zone.id
                            );
                            warn!("{msg}");
                            out.warnings.push(msg);
                            continue;
                        }
                    }
                };
            let id = ids.allocate(&category);
            out.records.push(PlacementRecord {
                id: id.clone(),
                category: category.clone(),
                proposed,
                placed,
                snapped,
                priority,
                seed: s,
            });
            out.objects.push(ObjectPlacement::dominant(
                id,
                category,
                placed,
                zone.id.clone(),
            ));
        }
    }
    Ok(out)
}

/// Which rule an accessory satisfies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Criterion {
    Support,
    AdjacentFacing,
}

/// Checks an accessory against its rule from geometry alone.
pub fn satisfies_criterion(
    acc: &OrientedFootprint,
    parent: &OrientedFootprint,
    support: Option<&OrientedFootprint>,
    criteria: &AccessoryCriteria,
) -> Option<Criterion> {
    if let Some(s) = support {
        if criteria.support && s.contains_footprint(acc, CONTAIN_EPS) {
            return Some(Criterion::Support);
        }
        return None;
    }
    criteria
        .floor_ok(acc, parent)
        .then_some(Criterion::AdjacentFacing)
}

/// Pose resting on `support`, if the footprint fits in either orientation.
fn snap_on_top(support: &OrientedFootprint, dims: FootprintDims) -> Option<OrientedFootprint> {
    for turn in [0.0, std::f64::consts::FRAC_PI_2] {
        let fp = OrientedFootprint::new(support.center, support.yaw + turn, dims).ok()?;
        if support.contains_footprint(&fp, CONTAIN_EPS) {
            return Some(fp);
        }
    }
    None
}

/// Seeded row-major scan around the parent for a free floor pose that is
/// adjacent to the parent and faces it.
fn snap_beside(
    parent: &OrientedFootprint,
    dims: FootprintDims,
    occupied: &[OrientedFootprint],
    room: &RoomBoundary,
    criteria: &AccessoryCriteria,
    step: f64,
    seed: u64,
) -> Option<OrientedFootprint> {
    let (lo, hi) = parent.bounds();
    let reach = criteria.adjacency + dims.half_width.max(dims.half_depth);
    let region = Region {
        min_x: lo.x - reach,
        min_y: lo.y - reach,
        max_x: hi.x + reach,
        max_y: hi.y + reach,
    }
    .intersection(&room.floor())?;
    let grid = PoseGrid::over(&region, step);
    if grid.is_empty() {
        return None;
    }
    let start = crate::geometry::scan_offsets(seed, grid.len(), 1).0;
    for idx in grid.scan_from(start) {
        let c = grid.cell(idx);
        let toward_parent = parent.center - c;
        let mut yaws = vec![parent.yaw];
        if toward_parent.length() > 1e-12 {
            yaws.push(yaw_facing(toward_parent));
        }
        for yaw in yaws {
            let Ok(fp) = OrientedFootprint::new(c, yaw, dims) else {
                continue;
            };
            if oob_excess(&fp, room) > OVERLAP_EPS || !is_free(&fp, occupied) {
                continue;
            }
            if criteria.floor_ok(&fp, parent) {
                return Some(fp);
            }
        }
    }
    None
}

/// Walks the dominants in order, asking for their accessories. Supported
/// accessories rest inside their support and record `on_top_of`; floor
/// accessories must be adjacent to the parent and face it.
#[allow(clippy::too_many_arguments)]
pub fn place_accessories(
    d_aug: &AugmentedDescription,
    dominants: &[ObjectPlacement],
    criteria: &AccessoryCriteria,
    catalog: &AssetCatalog,
    agent: &AgentClient,
    seed: u64,
    room: &RoomBoundary,
    step: f64,
    ids: &mut IdAllocator,
) -> Result<Placement, GroundingError> {
    criteria.validate()?;
    let mut out = Placement::default();
    let mut floor: Vec<OrientedFootprint> = dominants.iter().map(|d| d.footprint).collect();
    for (t, parent) in dominants.iter().enumerate() {
        let mine_start = out.objects.len();
        let placed: Vec<Value> = out.objects[mine_start..]
            .iter()
            .map(|o| fp_json(&o.id, &o.category, &o.footprint))
            .collect();
        let text = format!(
            "{}\n\nPropose accessories for {} ({}) at ({:.2}, {:.2}), yaw {:.3}.",
            d_aug.prompt_text(),
            parent.id,
            parent.category,
            parent.footprint.center.x,
            parent.footprint.center.y,
            parent.footprint.yaw
        );
        let context = json!({
            "parent": fp_json(&parent.id, &parent.category, &parent.footprint),
            "placed_accessories": placed,
            "room": room_json(room),
        });
        let reply: AccessoryProposalReply =
            agent.complete(Prompt::new(text).with_context(context))?;
        for (k, p) in reply.accessories.iter().enumerate() {
            let category = normalize_category(&p.category);
            let dims = catalog.dims(&category);
            let s = step_seed(seed, &[1000 + t as u64, k as u64]);
            let Ok(proposed) = OrientedFootprint::new(Vec2::new(p.x, p.y), p.yaw, dims) else {
                continue;
            };
            let skip = |out: &mut Placement, why: &str| {
                let msg = format!("{category} for {}: {why}; proposal skipped", parent.id);
                warn!("{msg}");
                out.warnings.push(msg);
            };
            let on_top = p.placement == AccessoryPlacementKind::OnTop && criteria.support;
            if on_top {
                let mine = &out.objects[mine_start..];
                let support = match p.support.as_deref().map(normalize_category) {
                    None => Some((parent.id.clone(), parent.footprint)),
                    Some(name) if name == parent.id || name == parent.category => {
                        Some((parent.id.clone(), parent.footprint))
                    }
                    Some(name) => mine
                        .iter()
                        .find(|o| o.id == name)
                        .or_else(|| mine.iter().find(|o| o.category == name))
                        .map(|o| (o.id.clone(), o.footprint)),
                };
                let Some((support_id, support_fp)) = support else {
                    skip(&mut out, "support not found");
                    continue;
                };
                let (placed, snapped) = if support_fp.contains_footprint(&proposed, CONTAIN_EPS) {
                    (proposed, false)
                } else if let Some(fp) = snap_on_top(&support_fp, dims) {
                    (fp, true)
                } else {
                    skip(&mut out, "does not fit on its support");
                    continue;
                };
                let id = ids.allocate(&category);
                out.records.push(PlacementRecord {
                    id: id.clone(),
                    category: category.clone(),
                    proposed,
                    placed,
                    snapped,
                    priority: None,
                    seed: s,
                });
                out.relations.push(Relation::new(
                    id.clone(),
                    RelationKind::OnTopOf,
                    support_id,
                    Granularity::Accessory,
                ));
                out.objects.push(ObjectPlacement::accessory(
                    id,
                    category,
                    placed,
                    parent.id.clone(),
                    parent.zone_id.clone(),
                ));
                continue;
            }
            let ok = oob_excess(&proposed, room) <= OVERLAP_EPS
                && is_free(&proposed, &floor)
                && criteria.floor_ok(&proposed, &parent.footprint);
            let (placed, snapped) = if ok {
                (proposed, false)
            } else if let Some(fp) =
                snap_beside(&parent.footprint, dims, &floor, room, criteria, step, s)
            {
                (fp, true)
            } else {
                skip(&mut out, "no free adjacent pose");
                continue;
            };
            let id = ids.allocate(&category);
            out.records.push(PlacementRecord {
                id: id.clone(),
                category: category.clone(),
                proposed,
                placed,
                snapped,
                priority: None,
                seed: s,
            });
            out.relations.push(Relation::new(
                id.clone(),
                RelationKind::AdjacentTo,
                parent.id.clone(),
                Granularity::Accessory,
            ));
            if toward(&placed, &parent.footprint, criteria.facing_tolerance) {
                out.relations.push(Relation::new(
                    id.clone(),
                    RelationKind::Faces,
                    parent.id.clone(),
                    Granularity::Accessory,
                ));
            }
            floor.push(placed);
            out.objects.push(ObjectPlacement::accessory(
                id,
                category,
                placed,
                parent.id.clone(),
                parent.zone_id.clone(),
            ));
        }
    }
    Ok(out)
}

fn near_wall(fp: &OrientedFootprint, room: &RoomBoundary) -> bool {
    let (lo, hi) = fp.bounds();
    lo.x <= WALL_CONTACT
        || lo.y <= WALL_CONTACT
        || room.width - hi.x <= WALL_CONTACT
        || room.depth - hi.y <= WALL_CONTACT
}

/// Relations derivable from geometry: zone contact, dominants against a
/// wall, and dominants near each other within a zone.
pub fn derived_relations(
    room: &RoomBoundary,
    zones: &[FunctionalityZone],
    dominants: &[ObjectPlacement],
) -> Vec<Relation> {
    let mut out = Vec::new();
    for i in 0..zones.len() {
        for j in i + 1..zones.len() {
            let (a, b) = (&zones[i].region, &zones[j].region);
            if a.contact_length(b) > 1e-9 || a.overlap_area(b) > 0.0 {
                out.push(Relation::new(
                    zones[i].id.clone(),
                    RelationKind::AdjacentTo,
                    zones[j].id.clone(),
                    Granularity::Zone,
                ));
            }
        }
    }
    for d in dominants {
        if near_wall(&d.footprint, room) {
            out.push(Relation::new(
                d.id.clone(),
                RelationKind::AgainstWall,
                ROOT_ID,
                Granularity::Dominant,
            ));
        }
    }
    for i in 0..dominants.len() {
        for j in i + 1..dominants.len() {
            let (a, b) = (&dominants[i], &dominants[j]);
            if a.zone_id == b.zone_id
                && clearance_distance(&a.footprint, &b.footprint) <= NEAR_DISTANCE
            {
                out.push(Relation::new(
                    a.id.clone(),
                    RelationKind::Near,
                    b.id.clone(),
                    Granularity::Dominant,
                ));
            }
        }
    }
    out
}

/// Builds the layout: hierarchy from role and parent data, relations from
/// geometry merged with the placement records.
pub fn assemble_layout(
    room: &RoomBoundary,
    zones: Vec<FunctionalityZone>,
    dominants: Vec<ObjectPlacement>,
    accessories: Vec<ObjectPlacement>,
    relations: Vec<Relation>,
) -> Result<Layout, ValidationError> {
    let mut all = derived_relations(room, &zones, &dominants);
    for r in relations {
        if !all.contains(&r) {
            all.push(r);
        }
    }
    Layout::new(*room, zones, dominants, accessories, all)
}

/// True when no pair of the given footprints penetrates.
pub fn pairwise_clear(fps: &[OrientedFootprint]) -> bool {
    (0..fps.len())
        .all(|i| (i + 1..fps.len()).all(|j| overlap_area(&fps[i], &fps[j]) <= OVERLAP_EPS))
}
