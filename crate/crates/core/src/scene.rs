//! Domain types shared by every stage of the pipeline.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{FootprintDims, GeometryError, OrientedFootprint, Region};

/// Id of the hierarchy root. Wall relations point at it.
pub const ROOT_ID: &str = "room";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("description is empty")]
    EmptyDescription,
    #[error("room dimensions must be positive, got {0} x {1} x {2}")]
    Room(f64, f64, f64),
    #[error("{id}: {source}")]
    Geometry {
        id: String,
        #[source]
        source: GeometryError,
    },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("id must be non-empty")]
    EmptyId,
    #[error("zone {0:?} has an empty functionality label")]
    EmptyFunctionality(String),
    #[error("zone {0:?} extends beyond the room")]
    ZoneOutsideRoom(String),
    #[error("accessory {0:?} has no parent")]
    AccessoryWithoutParent(String),
    #[error("dominant {0:?} has no zone")]
    DominantWithoutZone(String),
    #[error("dominant {0:?} must not have a parent")]
    DominantWithParent(String),
    #[error("{0:?} is listed with the wrong role")]
    WrongRole(String),
    #[error("{owner:?} references unknown {kind} {target:?}")]
    DanglingReference {
        owner: String,
        kind: &'static str,
        target: String,
    },
    #[error("hierarchy does not match placements: {0}")]
    Hierarchy(String),
    #[error("catalog entry {0:?} has non-positive dimensions")]
    Catalog(String),
}

/// The condensed user input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ShortDescription(String);

impl ShortDescription {
    pub fn new(text: impl Into<String>) -> Result<Self, ValidationError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ValidationError::EmptyDescription);
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ShortDescription {
    type Error = ValidationError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(s)
    }
}

impl From<ShortDescription> for String {
    fn from(d: ShortDescription) -> String {
        d.0
    }
}

impl fmt::Display for ShortDescription {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Room extents in meters. The floor is `[0, width] x [0, depth]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomBoundary {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
}

impl RoomBoundary {
    pub fn new(width: f64, depth: f64, height: f64) -> Result<Self, ValidationError> {
        let room = Self {
            width,
            depth,
            height,
        };
        room.validate()?;
        Ok(room)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let ok = [self.width, self.depth, self.height]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(ValidationError::Room(self.width, self.depth, self.height))
        }
    }

    pub fn floor(&self) -> Region {
        Region::of_room(self)
    }

    pub fn floor_area(&self) -> f64 {
        self.width * self.depth
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Dominant,
    Accessory,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Dominant => "dominant",
            Role::Accessory => "accessory",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dominant" => Some(Role::Dominant),
            "accessory" => Some(Role::Accessory),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectPlacement {
    pub id: String,
    pub category: String,
    pub footprint: OrientedFootprint,
    pub role: Role,
    pub zone_id: Option<String>,
    pub parent_id: Option<String>,
}

impl ObjectPlacement {
    pub fn dominant(
        id: impl Into<String>,
        category: impl Into<String>,
        footprint: OrientedFootprint,
        zone_id: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            category: category.into(),
            footprint,
            role: Role::Dominant,
            zone_id: Some(zone_id.into()),
            parent_id: None,
        }
    }

    pub fn accessory(
        id: impl Into<String>,
        category: impl Into<String>,
        footprint: OrientedFootprint,
        parent_id: impl Into<String>,
        zone_id: Option<String>,
    ) -> Self {
        Self {
            id: id.into(),
            category: category.into(),
            footprint,
            role: Role::Accessory,
            zone_id,
            parent_id: Some(parent_id.into()),
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.id.is_empty() {
            return Err(ValidationError::EmptyId);
        }
        self.footprint
            .validate()
            .map_err(|source| ValidationError::Geometry {
                id: self.id.clone(),
                source,
            })?;
        match self.role {
            Role::Accessory if self.parent_id.is_none() => {
                Err(ValidationError::AccessoryWithoutParent(self.id.clone()))
            }
            Role::Dominant if self.zone_id.is_none() => {
                Err(ValidationError::DominantWithoutZone(self.id.clone()))
            }
            Role::Dominant if self.parent_id.is_some() => {
                Err(ValidationError::DominantWithParent(self.id.clone()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalityZone {
    pub id: String,
    pub region: Region,
    pub functionality: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    AdjacentTo,
    Faces,
    OnTopOf,
    AgainstWall,
    Near,
}

impl RelationKind {
    pub const ALL: [RelationKind; 5] = [
        RelationKind::AdjacentTo,
        RelationKind::Faces,
        RelationKind::OnTopOf,
        RelationKind::AgainstWall,
        RelationKind::Near,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::AdjacentTo => "adjacent_to",
            RelationKind::Faces => "faces",
            RelationKind::OnTopOf => "on_top_of",
            RelationKind::AgainstWall => "against_wall",
            RelationKind::Near => "near",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Zone,
    Dominant,
    Accessory,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Zone => "zone",
            Granularity::Dominant => "dominant",
            Granularity::Accessory => "accessory",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "zone" => Some(Granularity::Zone),
            "dominant" => Some(Granularity::Dominant),
            "accessory" => Some(Granularity::Accessory),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Relation {
    pub subject: String,
    pub kind: RelationKind,
    pub object: String,
    pub granularity: Granularity,
}

impl Relation {
    pub fn new(
        subject: impl Into<String>,
        kind: RelationKind,
        object: impl Into<String>,
        granularity: Granularity,
    ) -> Self {
        Self {
            subject: subject.into(),
            kind,
            object: object.into(),
            granularity,
        }
    }

    pub fn involves(&self, id: &str) -> bool {
        self.subject == id || self.object == id
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Root,
    Zone,
    Dominant,
    Accessory,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Root => "root",
            Level::Zone => "zone",
            Level::Dominant => "dominant",
            Level::Accessory => "accessory",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "root" => Some(Level::Root),
            "zone" => Some(Level::Zone),
            "dominant" => Some(Level::Dominant),
            "accessory" => Some(Level::Accessory),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyNode {
    pub id: String,
    pub level: Level,
    pub parent: Option<String>,
}

/// Scene tree: root, zones, dominants, accessories. Nodes are stored in
/// pre-order so the tree can be written and compared as a flat list.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Hierarchy {
    pub nodes: Vec<HierarchyNode>,
}

impl Hierarchy {
    /// Builds the tree from role and parent data.
    pub fn build(
        zones: &[FunctionalityZone],
        dominants: &[ObjectPlacement],
        accessories: &[ObjectPlacement],
    ) -> Result<Self, ValidationError> {
        let zone_ids: HashSet<&str> = zones.iter().map(|z| z.id.as_str()).collect();
        let dom_ids: HashSet<&str> = dominants.iter().map(|d| d.id.as_str()).collect();
        for d in dominants {
            let zid = d.zone_id.as_deref().unwrap_or_default();
            if !zone_ids.contains(zid) {
                return Err(ValidationError::DanglingReference {
                    owner: d.id.clone(),
                    kind: "zone",
                    target: zid.to_string(),
                });
            }
        }
        for a in accessories {
            let pid = a.parent_id.as_deref().unwrap_or_default();
            if !dom_ids.contains(pid) {
                return Err(ValidationError::DanglingReference {
                    owner: a.id.clone(),
                    kind: "dominant",
                    target: pid.to_string(),
                });
            }
        }

        let mut nodes = vec![HierarchyNode {
            id: ROOT_ID.to_string(),
            level: Level::Root,
            parent: None,
        }];
        for z in zones {
            nodes.push(HierarchyNode {
                id: z.id.clone(),
                level: Level::Zone,
                parent: Some(ROOT_ID.to_string()),
            });
            for d in dominants
                .iter()
                .filter(|d| d.zone_id.as_deref() == Some(&z.id))
            {
                nodes.push(HierarchyNode {
                    id: d.id.clone(),
                    level: Level::Dominant,
                    parent: Some(z.id.clone()),
                });
                for a in accessories
                    .iter()
                    .filter(|a| a.parent_id.as_deref() == Some(&d.id))
                {
                    nodes.push(HierarchyNode {
                        id: a.id.clone(),
                        level: Level::Accessory,
                        parent: Some(d.id.clone()),
                    });
                }
            }
        }
        Ok(Self { nodes })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn children<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a HierarchyNode> + 'a {
        self.nodes
            .iter()
            .filter(move |n| n.parent.as_deref() == Some(id))
    }

    pub fn get(&self, id: &str) -> Option<&HierarchyNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Checks tree shape: one root, unique ids, parents one level up.
    pub fn check_well_formed(&self) -> Result<(), ValidationError> {
        let mut levels: HashMap<&str, Level> = HashMap::new();
        let mut roots = 0;
        for n in &self.nodes {
            if levels.insert(n.id.as_str(), n.level).is_some() {
                return Err(ValidationError::Hierarchy(format!(
                    "node {:?} repeated",
                    n.id
                )));
            }
            let expected_parent = match n.level {
                Level::Root => None,
                Level::Zone => Some(Level::Root),
                Level::Dominant => Some(Level::Zone),
                Level::Accessory => Some(Level::Dominant),
            };
            match (expected_parent, &n.parent) {
                (None, None) => roots += 1,
                (Some(lvl), Some(p)) => match levels.get(p.as_str()) {
                    Some(found) if *found == lvl => {}
                    _ => {
                        return Err(ValidationError::Hierarchy(format!(
                            "node {:?} has parent {:?} at the wrong level",
                            n.id, p
                        )))
                    }
                },
                _ => {
                    return Err(ValidationError::Hierarchy(format!(
                        "node {:?} has an invalid parent",
                        n.id
                    )))
                }
            }
        }
        if roots != 1 {
            return Err(ValidationError::Hierarchy(format!("{roots} roots")));
        }
        Ok(())
    }
}

/// The pipeline product: zones, dominant objects, accessories, the scene
/// tree and typed relations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub room: RoomBoundary,
    pub zones: Vec<FunctionalityZone>,
    pub dominants: Vec<ObjectPlacement>,
    pub accessories: Vec<ObjectPlacement>,
    pub hierarchy: Hierarchy,
    pub relations: Vec<Relation>,
}

impl Layout {
    pub fn empty(room: RoomBoundary) -> Self {
        Self {
            room,
            zones: Vec::new(),
            dominants: Vec::new(),
            accessories: Vec::new(),
            hierarchy: Hierarchy::build(&[], &[], &[]).expect("empty hierarchy"),
            relations: Vec::new(),
        }
    }

    /// Builds a layout, deriving the hierarchy, and validates it.
    pub fn new(
        room: RoomBoundary,
        zones: Vec<FunctionalityZone>,
        dominants: Vec<ObjectPlacement>,
        accessories: Vec<ObjectPlacement>,
        relations: Vec<Relation>,
    ) -> Result<Self, ValidationError> {
        let hierarchy = Hierarchy::build(&zones, &dominants, &accessories)?;
        let layout = Self {
            room,
            zones,
            dominants,
            accessories,
            hierarchy,
            relations,
        };
        layout.validate()?;
        Ok(layout)
    }

    /// Rebuilds the hierarchy after placements changed.
    pub fn rebuilt(mut self) -> Result<Self, ValidationError> {
        self.hierarchy = Hierarchy::build(&self.zones, &self.dominants, &self.accessories)?;
        self.validate()?;
        Ok(self)
    }

    pub fn objects(&self) -> impl Iterator<Item = &ObjectPlacement> {
        self.dominants.iter().chain(self.accessories.iter())
    }

    pub fn object_count(&self) -> usize {
        self.dominants.len() + self.accessories.len()
    }

    pub fn object(&self, id: &str) -> Option<&ObjectPlacement> {
        self.objects().find(|o| o.id == id)
    }

    pub fn object_mut(&mut self, id: &str) -> Option<&mut ObjectPlacement> {
        self.dominants
            .iter_mut()
            .chain(self.accessories.iter_mut())
            .find(|o| o.id == id)
    }

    pub fn zone(&self, id: &str) -> Option<&FunctionalityZone> {
        self.zones.iter().find(|z| z.id == id)
    }

    /// All ids a relation may reference: root, zones and objects.
    pub fn known_ids(&self) -> HashSet<&str> {
        std::iter::once(ROOT_ID)
            .chain(self.zones.iter().map(|z| z.id.as_str()))
            .chain(self.objects().map(|o| o.id.as_str()))
            .collect()
    }

    /// Pairs `(upper, support)` declared by `on_top_of` relations.
    pub fn support_pairs(&self) -> HashSet<(&str, &str)> {
        self.relations
            .iter()
            .filter(|r| r.kind == RelationKind::OnTopOf)
            .map(|r| (r.subject.as_str(), r.object.as_str()))
            .collect()
    }

    /// True when the two objects are related by vertical support either way.
    pub fn stacked(&self, a: &str, b: &str) -> bool {
        self.relations.iter().any(|r| {
            r.kind == RelationKind::OnTopOf
                && ((r.subject == a && r.object == b) || (r.subject == b && r.object == a))
        })
    }

    /// Objects resting on another object rather than the floor.
    pub fn is_supported(&self, id: &str) -> bool {
        self.relations
            .iter()
            .any(|r| r.kind == RelationKind::OnTopOf && r.subject == id)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        self.room.validate()?;
        let floor = self.room.floor();
        let mut seen: HashSet<&str> = HashSet::new();
        seen.insert(ROOT_ID);
        for z in &self.zones {
            if z.id.is_empty() {
                return Err(ValidationError::EmptyId);
            }
            if !seen.insert(z.id.as_str()) {
                return Err(ValidationError::DuplicateId(z.id.clone()));
            }
            if z.functionality.trim().is_empty() {
                return Err(ValidationError::EmptyFunctionality(z.id.clone()));
            }
            z.region
                .validate()
                .map_err(|source| ValidationError::Geometry {
                    id: z.id.clone(),
                    source,
                })?;
            if !floor.contains_region(&z.region) {
                return Err(ValidationError::ZoneOutsideRoom(z.id.clone()));
            }
        }
        for d in &self.dominants {
            d.validate()?;
            if d.role != Role::Dominant {
                return Err(ValidationError::WrongRole(d.id.clone()));
            }
            if !seen.insert(d.id.as_str()) {
                return Err(ValidationError::DuplicateId(d.id.clone()));
            }
        }
        for a in &self.accessories {
            a.validate()?;
            if a.role != Role::Accessory {
                return Err(ValidationError::WrongRole(a.id.clone()));
            }
            if !seen.insert(a.id.as_str()) {
                return Err(ValidationError::DuplicateId(a.id.clone()));
            }
        }
        for a in &self.accessories {
            if let Some(z) = &a.zone_id {
                if self.zone(z).is_none() {
                    return Err(ValidationError::DanglingReference {
                        owner: a.id.clone(),
                        kind: "zone",
                        target: z.clone(),
                    });
                }
            }
        }
        let expected = Hierarchy::build(&self.zones, &self.dominants, &self.accessories)?;
        if expected != self.hierarchy {
            return Err(ValidationError::Hierarchy(
                "stored tree differs from the one implied by placements".into(),
            ));
        }
        if self.hierarchy.node_count() != 1 + self.zones.len() + self.object_count() {
            return Err(ValidationError::Hierarchy(
                "some placement is missing from the tree".into(),
            ));
        }
        self.hierarchy.check_well_formed()?;
        for r in &self.relations {
            for id in [&r.subject, &r.object] {
                if !seen.contains(id.as_str()) {
                    return Err(ValidationError::DanglingReference {
                        owner: format!("relation {}", r.kind.as_str()),
                        kind: "id",
                        target: id.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssetSpec {
    pub half_width: f64,
    pub half_depth: f64,
    pub height: f64,
    pub roles: Vec<Role>,
}

impl AssetSpec {
    pub fn dims(&self) -> FootprintDims {
        FootprintDims::new(self.half_width, self.half_depth, self.height)
    }
}

/// Category to footprint dimensions. Stands in for a 3D asset library.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssetCatalog {
    entries: BTreeMap<String, AssetSpec>,
}

/// Footprint for categories the catalog has never seen: 0.5 x 0.5 x 0.5 m.
pub const UNKNOWN_ASSET: AssetSpec = AssetSpec {
    half_width: 0.25,
    half_depth: 0.25,
    height: 0.5,
    roles: Vec::new(),
};

impl AssetCatalog {
    pub fn new(entries: BTreeMap<String, AssetSpec>) -> Result<Self, ValidationError> {
        for (k, v) in &entries {
            let ok = [v.half_width, v.half_depth, v.height]
                .iter()
                .all(|x| x.is_finite() && *x > 0.0);
            if !ok {
                return Err(ValidationError::Catalog(k.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, category: &str) -> Option<&AssetSpec> {
        self.entries.get(&normalize_category(category))
    }

    /// Dimensions for a category, falling back to the unknown-asset size.
    pub fn dims(&self, category: &str) -> FootprintDims {
        self.get(category)
            .map(AssetSpec::dims)
            .unwrap_or_else(|| UNKNOWN_ASSET.dims())
    }

    pub fn allows(&self, category: &str, role: Role) -> bool {
        self.get(category).is_none_or(|s| s.roles.contains(&role))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

impl Default for AssetCatalog {
    fn default() -> Self {
        use Role::{Accessory as A, Dominant as D};
        // (category, width, depth, height, roles), full sizes in meters.
        let rows: &[(&str, f64, f64, f64, &[Role])] = &[
            ("bed", 1.6, 2.0, 0.55, &[D]),
            ("single_bed", 1.0, 2.0, 0.5, &[D]),
            ("wardrobe", 1.2, 0.6, 2.0, &[D]),
            ("dresser", 1.0, 0.5, 0.9, &[D, A]),
            ("nightstand", 0.45, 0.4, 0.55, &[A]),
            ("lamp", 0.3, 0.3, 0.5, &[A]),
            ("floor_lamp", 0.35, 0.35, 1.6, &[A]),
            ("rug", 1.6, 1.2, 0.01, &[A]),
            ("sofa", 2.0, 0.9, 0.85, &[D]),
            ("armchair", 0.8, 0.8, 0.9, &[D, A]),
            ("coffee_table", 1.1, 0.6, 0.45, &[A]),
            ("side_table", 0.5, 0.5, 0.55, &[A]),
            ("tv_stand", 1.6, 0.45, 0.55, &[D]),
            ("tv", 1.2, 0.1, 0.7, &[A]),
            ("bookshelf", 1.0, 0.35, 1.9, &[D]),
            ("desk", 1.4, 0.7, 0.75, &[D]),
            ("office_chair", 0.6, 0.6, 1.0, &[A]),
            ("chair", 0.5, 0.5, 0.9, &[A]),
            ("monitor", 0.6, 0.2, 0.45, &[A]),
            ("filing_cabinet", 0.5, 0.6, 1.1, &[D, A]),
            ("meeting_table", 1.8, 0.9, 0.75, &[D]),
            ("plant", 0.4, 0.4, 1.0, &[A]),
            ("dining_table", 1.6, 0.9, 0.75, &[D]),
            ("kitchen_counter", 2.0, 0.6, 0.9, &[D]),
            ("fridge", 0.7, 0.7, 1.8, &[D]),
            ("stool", 0.4, 0.4, 0.65, &[A]),
            ("vanity", 0.9, 0.5, 0.85, &[D]),
            ("toilet", 0.4, 0.7, 0.8, &[D]),
            ("bathtub", 0.8, 1.7, 0.6, &[D]),
            ("cabinet", 0.8, 0.45, 1.0, &[D, A]),
        ];
        let entries = rows
            .iter()
            .map(|&(name, w, d, h, roles)| {
                (
                    name.to_string(),
                    AssetSpec {
                        half_width: w / 2.0,
                        half_depth: d / 2.0,
                        height: h,
                        roles: roles.to_vec(),
                    },
                )
            })
            .collect();
        Self { entries }
    }
}

/// Lowercase, spaces and dashes folded to underscores.
pub fn normalize_category(category: &str) -> String {
    category
        .trim()
        .to_lowercase()
        .chars()
        .map(|c| if c == ' ' || c == '-' { '_' } else { c })
        .collect()
}
