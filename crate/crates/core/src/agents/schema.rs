use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Named structured-response contracts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaId {
    SceneParse,
    ZoneGrounding,
    DominantProposal,
    AccessoryProposal,
    Diagnosis,
    ObjectEnrichment,
    /// Not a chat schema; tags embedding failures.
    Embedding,
}

impl SchemaId {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemaId::SceneParse => "scene_parse",
            SchemaId::ZoneGrounding => "zone_grounding",
            SchemaId::DominantProposal => "dominant_proposal",
            SchemaId::AccessoryProposal => "accessory_proposal",
            SchemaId::Diagnosis => "diagnosis_report",
            SchemaId::ObjectEnrichment => "object_enrichment",
            SchemaId::Embedding => "embedding",
        }
    }

    /// Diagnosis produces refinement suggestions and runs cooler.
    pub fn default_temperature(self) -> f64 {
        match self {
            SchemaId::Diagnosis => 0.3,
            _ => 0.7,
        }
    }

    /// Reply-format instructions appended to every prompt.
    pub fn instructions(self) -> &'static str {
        match self {
            SchemaId::SceneParse => {
                "Reply with JSON only: {\"summary\": string, \"relations\": [string], \"scales\": [string]}. \
                 summary names the scene type; relations describe how objects are arranged relative to each other; \
                 scales describe relative object sizes."
            }
            SchemaId::ZoneGrounding => {
                "Reply with JSON only: {\"zones\": [{\"functionality\": string, \"region\": [min_x, min_y, max_x, max_y]}]}. \
                 Use 1 to 6 zones, coordinates in meters inside the room, zones should not overlap."
            }
            SchemaId::DominantProposal => {
                "Reply with JSON only: {\"objects\": [{\"category\": string, \"x\": number, \"y\": number, \"yaw\": number}]}. \
                 Propose at most 4 primary furniture pieces for this zone; x, y is the footprint center in meters, yaw in radians, \
                 front faces local +y."
            }
            SchemaId::AccessoryProposal => {
                "Reply with JSON only: {\"accessories\": [{\"category\": string, \"placement\": \"on_top\" | \"beside\", \
                 \"support\": string or null, \"x\": number, \"y\": number, \"yaw\": number}]}. \
                 on_top items rest on the parent or on the accessory named by support."
            }
            SchemaId::Diagnosis => {
                "Reply with JSON only: {\"penetration_pairs\": [{\"a\": id, \"b\": id, \"overlap\": number}], \
                 \"clearance_pairs\": [{\"a\": id, \"b\": id, \"distance\": number, \"required\": number}], \
                 \"oob_objects\": [{\"id\": id, \"excess\": number}], \
                 \"suggestions\": [{\"targets\": [id], \"directive\": string}]}."
            }
            SchemaId::ObjectEnrichment => {
                "Reply with JSON only: {\"objects\": [string]} listing furniture and objects likely present in the scene."
            }
            SchemaId::Embedding => "",
        }
    }
}

impl fmt::Display for SchemaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A typed reply bound to one schema.
pub trait StructuredReply: DeserializeOwned + Serialize {
    const SCHEMA: SchemaId;

    /// Semantic checks beyond field presence and types.
    fn check(&self) -> Result<(), String> {
        Ok(())
    }
}

fn finite(name: &str, values: &[f64]) -> Result<(), String> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(format!("{name} contains a non-finite number"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneParseReply {
    pub summary: String,
    pub relations: Vec<String>,
    pub scales: Vec<String>,
}

impl StructuredReply for SceneParseReply {
    const SCHEMA: SchemaId = SchemaId::SceneParse;
    fn check(&self) -> Result<(), String> {
        if self.summary.trim().is_empty() {
            return Err("summary is empty".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneProposal {
    pub functionality: String,
    pub region: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneGroundingReply {
    pub zones: Vec<ZoneProposal>,
}

pub const MAX_ZONES: usize = 6;

impl StructuredReply for ZoneGroundingReply {
    const SCHEMA: SchemaId = SchemaId::ZoneGrounding;
    fn check(&self) -> Result<(), String> {
        if self.zones.is_empty() || self.zones.len() > MAX_ZONES {
            return Err(format!(
                "expected 1 to {MAX_ZONES} zones, got {}",
                self.zones.len()
            ));
        }
        for z in &self.zones {
            if z.functionality.trim().is_empty() {
                return Err("zone functionality is empty".into());
            }
            finite("region", &z.region)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominantProposal {
    pub category: String,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominantProposalReply {
    pub objects: Vec<DominantProposal>,
}

impl StructuredReply for DominantProposalReply {
    const SCHEMA: SchemaId = SchemaId::DominantProposal;
    fn check(&self) -> Result<(), String> {
        for o in &self.objects {
            if o.category.trim().is_empty() {
                return Err("object category is empty".into());
            }
            finite("object pose", &[o.x, o.y, o.yaw])?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessoryPlacementKind {
    OnTop,
    Beside,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccessoryProposal {
    pub category: String,
    pub placement: AccessoryPlacementKind,
    #[serde(default)]
    pub support: Option<String>,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccessoryProposalReply {
    pub accessories: Vec<AccessoryProposal>,
}

impl StructuredReply for AccessoryProposalReply {
    const SCHEMA: SchemaId = SchemaId::AccessoryProposal;
    fn check(&self) -> Result<(), String> {
        for a in &self.accessories {
            if a.category.trim().is_empty() {
                return Err("accessory category is empty".into());
            }
            finite("accessory pose", &[a.x, a.y, a.yaw])?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairOverlap {
    pub a: String,
    pub b: String,
    pub overlap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairClearance {
    pub a: String,
    pub b: String,
    pub distance: f64,
    pub required: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectExcess {
    pub id: String,
    pub excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuggestionReply {
    pub targets: Vec<String>,
    pub directive: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReply {
    pub penetration_pairs: Vec<PairOverlap>,
    pub clearance_pairs: Vec<PairClearance>,
    pub oob_objects: Vec<ObjectExcess>,
    pub suggestions: Vec<SuggestionReply>,
}

impl StructuredReply for DiagnosisReply {
    const SCHEMA: SchemaId = SchemaId::Diagnosis;
    fn check(&self) -> Result<(), String> {
        for p in &self.penetration_pairs {
            finite("penetration", &[p.overlap])?;
        }
        for p in &self.clearance_pairs {
            finite("clearance", &[p.distance, p.required])?;
        }
        for o in &self.oob_objects {
            finite("oob", &[o.excess])?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentReply {
    pub objects: Vec<String>,
}

impl StructuredReply for EnrichmentReply {
    const SCHEMA: SchemaId = SchemaId::ObjectEnrichment;
}
