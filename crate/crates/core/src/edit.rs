//! Object addition, deletion and relocation on an existing layout. Every
//! edit is validated, then the result re-enters the refinement loop.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::geometry::{normalize_yaw, OrientedFootprint, Vec2, CONTAIN_EPS};
use crate::grounding::IdAllocator;
use crate::refine::{
    refine_loop_with, support_group, Diagnoser, RefineConfig, RefineError, RefinementTrace,
};
use crate::scene::{
    normalize_category, AssetCatalog, Granularity, Layout, ObjectPlacement, Relation, RelationKind,
    Role, ValidationError,
};

#[derive(Debug, Error)]
pub enum EditError {
    #[error("unknown object {0:?}")]
    UnknownObject(String),
    #[error("parent {0:?} is not a dominant object")]
    InvalidParent(String),
    #[error("support {0:?} is not an object under the same parent")]
    InvalidSupport(String),
    #[error("no zone contains ({0}, {1})")]
    NoZone(f64, f64),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Refine(#[from] RefineError),
}

#[derive(Clone, Debug, PartialEq)]
pub enum EditOp {
    Add {
        category: String,
        x: f64,
        y: f64,
        yaw: f64,
        /// Dominant this accessory belongs to; `None` adds a dominant.
        parent: Option<String>,
        /// Object the accessory rests on.
        on_top: Option<String>,
    },
    Delete {
        id: String,
    },
    Move {
        id: String,
        x: f64,
        y: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EditResult {
    pub layout: Layout,
    /// Ids created, or removed for deletions.
    pub affected: Vec<String>,
}

fn zone_at(layout: &Layout, p: Vec2) -> Option<String> {
    layout
        .zones
        .iter()
        .find(|z| z.region.contains_point(p))
        .map(|z| z.id.clone())
}

/// Applies the edit and validates the result. Does not refine.
pub fn apply_edit(
    layout: &Layout,
    op: &EditOp,
    catalog: &AssetCatalog,
) -> Result<EditResult, EditError> {
    match op {
        EditOp::Add {
            category,
            x,
            y,
            yaw,
            parent,
            on_top,
        } => add(
            layout,
            category,
            Vec2::new(*x, *y),
            *yaw,
            parent.as_deref(),
            on_top.as_deref(),
            catalog,
        ),
        EditOp::Delete { id } => delete(layout, id),
        EditOp::Move { id, x, y } => relocate(layout, id, Vec2::new(*x, *y)),
    }
}

fn add(
    layout: &Layout,
    category: &str,
    at: Vec2,
    yaw: f64,
    parent: Option<&str>,
    on_top: Option<&str>,
    catalog: &AssetCatalog,
) -> Result<EditResult, EditError> {
    let category = normalize_category(category);
    let dims = catalog.dims(&category);
    let mut fp = OrientedFootprint::new(at, normalize_yaw(yaw), dims).map_err(|source| {
        ValidationError::Geometry {
            id: category.clone(),
            source,
        }
    })?;
    let id = IdAllocator::from_layout(layout).allocate(&category);
    let mut out = layout.clone();
    match parent {
        None => {
            let zone = zone_at(layout, at).ok_or(EditError::NoZone(at.x, at.y))?;
            out.dominants
                .push(ObjectPlacement::dominant(id.clone(), category, fp, zone));
        }
        Some(p) => {
            let dom = layout
                .dominants
                .iter()
                .find(|d| d.id == p)
                .ok_or_else(|| EditError::InvalidParent(p.to_string()))?;
            if let Some(s) = on_top {
                let support = layout
                    .object(s)
                    .filter(|o| o.id == dom.id || o.parent_id.as_deref() == Some(dom.id.as_str()))
                    .ok_or_else(|| EditError::InvalidSupport(s.to_string()))?;
                if !support.footprint.contains_footprint(&fp, CONTAIN_EPS) {
                    fp = fp.with_center(support.footprint.center);
                }
                out.relations.push(Relation::new(
                    id.clone(),
                    RelationKind::OnTopOf,
                    support.id.clone(),
                    Granularity::Accessory,
                ));
            } else {
                out.relations.push(Relation::new(
                    id.clone(),
                    RelationKind::AdjacentTo,
                    dom.id.clone(),
                    Granularity::Accessory,
                ));
            }
            out.accessories.push(ObjectPlacement::accessory(
                id.clone(),
                category,
                fp,
                dom.id.clone(),
                dom.zone_id.clone(),
            ));
        }
    }
    Ok(EditResult {
        layout: out.rebuilt()?,
        affected: vec![id],
    })
}

/// Removes the object, its accessories and everything resting on any of
/// them, with all relations that mention a removed id.
fn delete(layout: &Layout, id: &str) -> Result<EditResult, EditError> {
    let target = layout
        .object(id)
        .ok_or_else(|| EditError::UnknownObject(id.to_string()))?;
    let mut gone: BTreeSet<String> = BTreeSet::new();
    let mut queue = vec![target.id.clone()];
    while let Some(cur) = queue.pop() {
        if !gone.insert(cur.clone()) {
            continue;
        }
        for o in &layout.accessories {
            if o.parent_id.as_deref() == Some(cur.as_str()) {
                queue.push(o.id.clone());
            }
        }
        queue.extend(support_group(layout, &cur).into_iter().skip(1));
    }
    let mut out = layout.clone();
    out.dominants.retain(|o| !gone.contains(&o.id));
    out.accessories.retain(|o| !gone.contains(&o.id));
    out.relations
        .retain(|r| !gone.contains(&r.subject) && !gone.contains(&r.object));
    let mut affected: Vec<String> = gone.into_iter().collect();
    affected.sort();
    Ok(EditResult {
        layout: out.rebuilt()?,
        affected,
    })
}

/// Moves the object's center to `to`, carrying whatever rests on it. A
/// moved dominant joins the zone containing its new center, if any. A
/// supported object that leaves its support loses the `on_top_of` edge.
fn relocate(layout: &Layout, id: &str, to: Vec2) -> Result<EditResult, EditError> {
    let obj = layout
        .object(id)
        .ok_or_else(|| EditError::UnknownObject(id.to_string()))?
        .clone();
    let d = to - obj.footprint.center;
    let group = support_group(layout, id);
    let mut out = layout.clone();
    for gid in &group {
        if let Some(o) = out.object_mut(gid) {
            o.footprint = if gid == id {
                o.footprint.with_center(to)
            } else {
                o.footprint.translated(d)
            };
        }
    }
    if obj.role == Role::Dominant {
        if let Some(zone) = zone_at(layout, to) {
            for o in out.dominants.iter_mut().filter(|o| o.id == id) {
                o.zone_id = Some(zone.clone());
            }
            for o in out
                .accessories
                .iter_mut()
                .filter(|o| o.parent_id.as_deref() == Some(id))
            {
                o.zone_id = Some(zone.clone());
            }
        }
    }
    let snapshot = out.clone();
    out.relations.retain(|r| {
        if r.kind != RelationKind::OnTopOf || r.subject != id {
            return true;
        }
        match (snapshot.object(&r.subject), snapshot.object(&r.object)) {
            (Some(a), Some(s)) => s.footprint.contains_footprint(&a.footprint, CONTAIN_EPS),
            _ => false,
        }
    });
    Ok(EditResult {
        layout: out.rebuilt()?,
        affected: group,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EditOutcome {
    pub edited: EditResult,
    pub layout: Layout,
    pub trace: RefinementTrace,
}

pub fn edit_and_refine(
    layout: &Layout,
    op: &EditOp,
    catalog: &AssetCatalog,
    config: &RefineConfig,
    diagnoser: Diagnoser<'_>,
    seed: u64,
) -> Result<EditOutcome, EditError> {
    let edited = apply_edit(layout, op, catalog)?;
    let (refined, trace) = refine_loop_with(&edited.layout, config, diagnoser, seed)?;
    let refined = refined.rebuilt()?;
    Ok(EditOutcome {
        edited,
        layout: refined,
        trace,
    })
}
