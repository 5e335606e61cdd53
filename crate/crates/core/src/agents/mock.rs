//! Deterministic offline backends and the fixture library.
//!
//! [`MockAgent`] answers every schema from a small set of scene templates.
//! Its replies are a pure function of the request (prompt, schema and
//! context), so entire pipeline runs are reproducible. [`MockEmbedder`] is a
//! normalized hashed bag of tokens.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Mutex;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{
    AccessoryPlacementKind, AccessoryProposal, AccessoryProposalReply, AgentRequest, ChatBackend,
    ClientError, DominantProposal, DominantProposalReply, EmbeddingBackend, EnrichmentReply,
    SceneParseReply, SchemaId, ZoneGroundingReply, ZoneProposal,
};
use crate::document::deserialize_layout;
use crate::geometry::{FootprintDims, OrientedFootprint, Region, Vec2};
use crate::memory::{tokenize, ParsedScene, ParsedSceneTexts};
use crate::refine::diagnose_geometric;
use crate::scene::AssetCatalog;

pub const MOCK_EMBED_DIM: usize = 1024;

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "of", "in", "on", "with", "for", "to", "at", "by", "is", "are",
    "my", "our", "some",
];

/// Normalized hashed bag of tokens. Order-insensitive, stopwords dropped.
#[derive(Clone, Debug)]
pub struct MockEmbedder {
    dim: usize,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self {
            dim: MOCK_EMBED_DIM,
        }
    }
}

impl MockEmbedder {
    pub fn with_dim(dim: usize) -> Self {
        Self { dim }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (stable_hash(&[token.as_bytes()]) % self.dim as u64) as usize
    }
}

impl EmbeddingBackend for MockEmbedder {
    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, ClientError> {
        let mut v = vec![0.0; self.dim];
        for tok in tokenize(text) {
            if STOPWORDS.contains(&tok.as_str()) {
                continue;
            }
            v[self.bucket(&tok)] += 1.0;
        }
        Ok(v)
    }
}

pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Clone, Copy, Debug)]
pub enum Anchor {
    BackWall,
    FrontWall,
    LeftWall,
    RightWall,
    Center,
}

#[derive(Clone, Copy, Debug)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug)]
pub enum AccessoryAnchor {
    /// Next to the parent, flush with its back edge.
    Beside(Side),
    /// On the parent, or on an earlier accessory of the given category.
    OnTop(Option<&'static str>),
    /// In front of the parent, facing it, with the given gap.
    InFront(f64),
}

#[derive(Clone, Copy, Debug)]
pub struct DominantTemplate {
    pub category: &'static str,
    pub anchor: Anchor,
}

#[derive(Clone, Copy, Debug)]
pub struct ZoneTemplate {
    pub functionality: &'static str,
    /// Region as fractions of the room: `[x0, y0, x1, y1]`.
    pub frac: [f64; 4],
    pub dominants: &'static [DominantTemplate],
}

#[derive(Clone, Copy, Debug)]
pub struct AccessoryTemplate {
    pub category: &'static str,
    pub anchor: AccessoryAnchor,
}

#[derive(Clone, Copy, Debug)]
pub struct SceneTemplate {
    pub key: &'static str,
    pub keywords: &'static [&'static str],
    pub summary: &'static str,
    pub relations: &'static [&'static str],
    pub scales: &'static [&'static str],
    pub zones: &'static [ZoneTemplate],
}

pub const FIXTURES: &[SceneTemplate] = &[
    SceneTemplate {
        key: "bedroom_template",
        keywords: &["bedroom", "bed", "sleep", "guest room", "dorm", "nursery"],
        summary: "a bedroom",
        relations: &[
            "the bed headboard is placed against the wall",
            "nightstands flank both sides of the bed",
            "a lamp sits on top of the nightstand",
            "the wardrobe stands against the opposite wall",
        ],
        scales: &[
            "the bed is the largest object in the room",
            "a nightstand is about a quarter of the bed width",
        ],
        zones: &[
            ZoneTemplate {
                functionality: "sleeping",
                frac: [0.0, 0.0, 0.65, 1.0],
                dominants: &[DominantTemplate {
                    category: "bed",
                    anchor: Anchor::BackWall,
                }],
            },
            ZoneTemplate {
                functionality: "storage",
                frac: [0.65, 0.0, 1.0, 1.0],
                dominants: &[
                    DominantTemplate {
                        category: "wardrobe",
                        anchor: Anchor::FrontWall,
                    },
                    DominantTemplate {
                        category: "dresser",
                        anchor: Anchor::RightWall,
                    },
                ],
            },
        ],
    },
    SceneTemplate {
        key: "living_room_template",
        keywords: &[
            "living",
            "lounge",
            "family room",
            "sofa",
            "tv",
            "television",
        ],
        summary: "a living room",
        relations: &[
            "the sofa faces the tv stand",
            "a coffee table sits in front of the sofa",
            "a side table is next to the sofa",
            "the tv is on top of the tv stand",
        ],
        scales: &[
            "the sofa is wider than the coffee table",
            "the tv is slightly narrower than the tv stand",
        ],
        zones: &[
            ZoneTemplate {
                functionality: "seating",
                frac: [0.0, 0.0, 1.0, 0.6],
                dominants: &[DominantTemplate {
                    category: "sofa",
                    anchor: Anchor::BackWall,
                }],
            },
            ZoneTemplate {
                functionality: "media",
                frac: [0.0, 0.6, 1.0, 1.0],
                dominants: &[DominantTemplate {
                    category: "tv_stand",
                    anchor: Anchor::FrontWall,
                }],
            },
        ],
    },
    SceneTemplate {
        key: "office_template",
        keywords: &["office", "study", "workspace", "desk", "work"],
        summary: "an office",
        relations: &[
            "the desk is placed against the wall",
            "an office chair is in front of the desk facing it",
            "a monitor sits on top of the desk",
            "a filing cabinet stands next to the bookshelf",
        ],
        scales: &[
            "the desk is about twice as wide as the chair",
            "the bookshelf is the tallest object",
        ],
        zones: &[
            ZoneTemplate {
                functionality: "work",
                frac: [0.0, 0.0, 0.6, 1.0],
                dominants: &[DominantTemplate {
                    category: "desk",
                    anchor: Anchor::BackWall,
                }],
            },
            ZoneTemplate {
                functionality: "storage",
                frac: [0.6, 0.0, 1.0, 1.0],
                dominants: &[DominantTemplate {
                    category: "bookshelf",
                    anchor: Anchor::RightWall,
                }],
            },
        ],
    },
];

/// Accessories proposed for each dominant category.
pub fn accessory_templates(dominant: &str) -> &'static [AccessoryTemplate] {
    use AccessoryAnchor::*;
    match dominant {
        "bed" | "single_bed" => &[
            AccessoryTemplate {
                category: "nightstand",
                anchor: Beside(Side::Left),
            },
            AccessoryTemplate {
                category: "nightstand",
                anchor: Beside(Side::Right),
            },
            AccessoryTemplate {
                category: "lamp",
                anchor: OnTop(Some("nightstand")),
            },
        ],
        "sofa" => &[
            AccessoryTemplate {
                category: "coffee_table",
                anchor: InFront(0.4),
            },
            AccessoryTemplate {
                category: "side_table",
                anchor: Beside(Side::Right),
            },
        ],
        "tv_stand" => &[
            AccessoryTemplate {
                category: "tv",
                anchor: OnTop(None),
            },
            AccessoryTemplate {
                category: "plant",
                anchor: Beside(Side::Left),
            },
        ],
        "desk" => &[
            AccessoryTemplate {
                category: "office_chair",
                anchor: InFront(0.15),
            },
            AccessoryTemplate {
                category: "monitor",
                anchor: OnTop(None),
            },
        ],
        "bookshelf" => &[AccessoryTemplate {
            category: "filing_cabinet",
            anchor: Beside(Side::Left),
        }],
        _ => &[],
    }
}

pub fn dominant_templates(functionality: &str) -> &'static [DominantTemplate] {
    FIXTURES
        .iter()
        .flat_map(|t| t.zones.iter())
        .find(|z| z.functionality == functionality)
        .map(|z| z.dominants)
        .unwrap_or(&[])
}

/// Picks a fixture by keyword, falling back to a hash of the request.
pub fn select_fixture(text: &str, fallback_hash: u64) -> &'static SceneTemplate {
    let lower = text.to_lowercase();
    FIXTURES
        .iter()
        .find(|t| lower.contains(t.key) || t.keywords.iter().any(|k| lower.contains(k)))
        .unwrap_or(&FIXTURES[(fallback_hash % FIXTURES.len() as u64) as usize])
}

pub fn fixture(key: &str) -> Option<&'static SceneTemplate> {
    FIXTURES.iter().find(|t| t.key == key)
}

/// Object nouns used as the offline enrichment dictionary.
pub fn enrichment_objects(description: &str) -> Vec<String> {
    let table: &[(&[&str], &[&str])] = &[
        (
            &["bedroom", "bed", "sleep", "guest", "dorm", "nursery"],
            &["bed", "nightstand", "wardrobe", "lamp", "dresser"],
        ),
        (
            &["living", "lounge", "family"],
            &["sofa", "coffee", "table", "tv", "armchair", "rug"],
        ),
        (
            &["office", "study", "workspace", "work"],
            &["desk", "chair", "monitor", "bookshelf", "cabinet"],
        ),
        (
            &["kitchen", "cook"],
            &["fridge", "counter", "stove", "sink", "stool"],
        ),
        (
            &["dining", "dinner"],
            &["dining", "table", "chair", "cabinet"],
        ),
        (
            &["bath", "toilet"],
            &["toilet", "bathtub", "vanity", "cabinet"],
        ),
        (
            &["library", "reading"],
            &["bookshelf", "armchair", "lamp", "table"],
        ),
    ];
    let lower = description.to_lowercase();
    let mut out: Vec<String> = Vec::new();
    for (keys, objects) in table {
        if keys.iter().any(|k| lower.contains(k)) {
            for o in *objects {
                if !out.iter().any(|x| x == o) {
                    out.push((*o).to_string());
                }
            }
        }
    }
    if out.is_empty() {
        out = ["table", "chair", "lamp", "cabinet"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    }
    out
}

fn request_hash(req: &AgentRequest) -> u64 {
    stable_hash(&[req.schema.as_str().as_bytes(), req.prompt.as_bytes()])
}

fn num(v: &Value, key: &str) -> Result<f64, ClientError> {
    v.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| ClientError::Decode(format!("mock context lacks {key}")))
}

fn text<'a>(v: &'a Value, key: &str) -> &'a str {
    v.get(key).and_then(Value::as_str).unwrap_or("")
}

fn region_of(v: &Value) -> Result<Region, ClientError> {
    let arr = v
        .as_array()
        .filter(|a| a.len() == 4)
        .ok_or_else(|| ClientError::Decode("mock context region malformed".into()))?;
    let n: Vec<f64> = arr.iter().filter_map(Value::as_f64).collect();
    if n.len() != 4 {
        return Err(ClientError::Decode("mock context region malformed".into()));
    }
    Ok(Region {
        min_x: n[0],
        min_y: n[1],
        max_x: n[2],
        max_y: n[3],
    })
}

fn footprint_of(v: &Value) -> Result<OrientedFootprint, ClientError> {
    Ok(OrientedFootprint {
        center: Vec2::new(num(v, "x")?, num(v, "y")?),
        yaw: num(v, "yaw")?,
        half_extents: Vec2::new(num(v, "hw")?, num(v, "hd")?),
        height: num(v, "height").unwrap_or(1.0),
    })
}

fn anchor_pose(zone: &Region, anchor: Anchor, dims: FootprintDims) -> (Vec2, f64) {
    let c = zone.center();
    let (hw, hd) = (dims.half_width, dims.half_depth);
    match anchor {
        Anchor::BackWall => (Vec2::new(c.x, zone.min_y + hd), 0.0),
        Anchor::FrontWall => (Vec2::new(c.x, zone.max_y - hd), PI),
        Anchor::LeftWall => (Vec2::new(zone.min_x + hd, c.y), -FRAC_PI_2),
        Anchor::RightWall => (Vec2::new(zone.max_x - hd, c.y), FRAC_PI_2),
        Anchor::Center => {
            let _ = hw;
            (c, 0.0)
        }
    }
}

fn accessory_pose(
    parent: &OrientedFootprint,
    anchor: AccessoryAnchor,
    dims: FootprintDims,
) -> (Vec2, f64) {
    let (u, v) = parent.axes();
    let (phw, phd) = (parent.half_extents.x, parent.half_extents.y);
    match anchor {
        AccessoryAnchor::Beside(side) => {
            let sign = match side {
                Side::Left => -1.0,
                Side::Right => 1.0,
            };
            let c =
                parent.center + u * (sign * (phw + dims.half_width)) + v * (-phd + dims.half_depth);
            (c, parent.yaw)
        }
        AccessoryAnchor::OnTop(_) => (parent.center, parent.yaw),
        AccessoryAnchor::InFront(gap) => {
            let c = parent.center + v * (phd + gap + dims.half_depth);
            (c, parent.yaw + PI)
        }
    }
}

/// Fixture-driven agent. Replies may be queued per schema to inject
/// specific behavior; queued replies are consumed before falling back to
/// the fixtures.
#[derive(Debug, Default)]
pub struct MockAgent {
    catalog: AssetCatalog,
    queued: Mutex<HashMap<SchemaId, VecDeque<String>>>,
}

impl MockAgent {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_reply(&self, schema: SchemaId, reply: impl Into<String>) {
        self.queued
            .lock()
            .expect("mock queue")
            .entry(schema)
            .or_default()
            .push_back(reply.into());
    }

    fn scene_parse(&self, req: &AgentRequest) -> Value {
        let mut key_text = text(&req.context, "scene_id").to_string();
        if let Some(views) = req.context.get("views").and_then(Value::as_array) {
            for v in views.iter().filter_map(Value::as_str) {
                key_text.push(' ');
                key_text.push_str(v);
            }
        }
        let t = select_fixture(&key_text, request_hash(req));
        serde_json::to_value(SceneParseReply {
            summary: t.summary.into(),
            relations: t.relations.iter().map(|s| s.to_string()).collect(),
            scales: t.scales.iter().map(|s| s.to_string()).collect(),
        })
        .expect("reply serializes")
    }

    fn zones(&self, req: &AgentRequest) -> Result<Value, ClientError> {
        let room = req.context.get("room").cloned().unwrap_or(Value::Null);
        let (w, d) = (num(&room, "width")?, num(&room, "depth")?);
        let t = select_fixture(text(&req.context, "description"), request_hash(req));
        let zones = t
            .zones
            .iter()
            .map(|z| ZoneProposal {
                functionality: z.functionality.into(),
                region: [z.frac[0] * w, z.frac[1] * d, z.frac[2] * w, z.frac[3] * d],
            })
            .collect();
        Ok(serde_json::to_value(ZoneGroundingReply { zones }).expect("reply serializes"))
    }

    fn dominants(&self, req: &AgentRequest) -> Result<Value, ClientError> {
        let zone = req.context.get("zone").cloned().unwrap_or(Value::Null);
        let region = region_of(zone.get("region").unwrap_or(&Value::Null))?;
        let functionality = text(&zone, "functionality");
        let objects = dominant_templates(functionality)
            .iter()
            .map(|t| {
                let dims = self.catalog.dims(t.category);
                let (c, yaw) = anchor_pose(&region, t.anchor, dims);
                DominantProposal {
                    category: t.category.into(),
                    x: c.x,
                    y: c.y,
                    yaw,
                }
            })
            .collect();
        Ok(serde_json::to_value(DominantProposalReply { objects }).expect("reply serializes"))
    }

    fn accessories(&self, req: &AgentRequest) -> Result<Value, ClientError> {
        let parent = req.context.get("parent").cloned().unwrap_or(Value::Null);
        let parent_fp = footprint_of(&parent)?;
        let category = text(&parent, "category");
        let mut placed: Vec<(&str, OrientedFootprint)> = Vec::new();
        let mut out = Vec::new();
        for t in accessory_templates(category) {
            let dims = self.catalog.dims(t.category);
            let base = match t.anchor {
                AccessoryAnchor::OnTop(Some(support)) => placed
                    .iter()
                    .find(|(c, _)| *c == support)
                    .map(|(_, fp)| *fp),
                _ => Some(parent_fp),
            };
            let Some(base) = base else { continue };
            let (c, yaw) = accessory_pose(&base, t.anchor, dims);
            let (placement, support) = match t.anchor {
                AccessoryAnchor::OnTop(s) => (AccessoryPlacementKind::OnTop, s.map(String::from)),
                _ => (AccessoryPlacementKind::Beside, None),
            };
            if let Ok(fp) = OrientedFootprint::new(c, yaw, dims) {
                placed.push((t.category, fp));
            }
            out.push(AccessoryProposal {
                category: t.category.into(),
                placement,
                support,
                x: c.x,
                y: c.y,
                yaw,
            });
        }
        Ok(
            serde_json::to_value(AccessoryProposalReply { accessories: out })
                .expect("reply serializes"),
        )
    }

    fn diagnosis(&self, req: &AgentRequest) -> Result<Value, ClientError> {
        let doc = text(&req.context, "layout");
        let layout = deserialize_layout(doc)
            .map_err(|e| ClientError::Decode(format!("mock cannot read layout: {e}")))?;
        let clr = num(&req.context, "clr_required")?;
        let reply = diagnose_geometric(&layout, clr).to_reply();
        Ok(serde_json::to_value(reply).expect("reply serializes"))
    }

    fn enrichment(&self, req: &AgentRequest) -> Value {
        serde_json::to_value(EnrichmentReply {
            objects: enrichment_objects(text(&req.context, "description")),
        })
        .expect("reply serializes")
    }
}

impl ChatBackend for MockAgent {
    fn send(&self, req: &AgentRequest) -> Result<String, ClientError> {
        if let Some(q) = self.queued.lock().expect("mock queue").get_mut(&req.schema) {
            if let Some(reply) = q.pop_front() {
                return Ok(reply);
            }
        }
        let value = match req.schema {
            SchemaId::SceneParse => self.scene_parse(req),
            SchemaId::ZoneGrounding => self.zones(req)?,
            SchemaId::DominantProposal => self.dominants(req)?,
            SchemaId::AccessoryProposal => self.accessories(req)?,
            SchemaId::Diagnosis => self.diagnosis(req)?,
            SchemaId::ObjectEnrichment => self.enrichment(req),
            SchemaId::Embedding => {
                return Err(ClientError::Config("embedding is not a chat schema".into()))
            }
        };
        Ok(value.to_string())
    }
}

/// Returns queued replies in order, regardless of schema, and records every
/// request it receives.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    replies: Mutex<VecDeque<Result<String, ClientError>>>,
    seen: Mutex<Vec<AgentRequest>>,
}

impl ScriptedBackend {
    pub fn new(replies: Vec<Result<String, ClientError>>) -> Self {
        Self {
            replies: Mutex::new(replies.into()),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<AgentRequest> {
        self.seen.lock().expect("scripted lock").clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn send(&self, request: &AgentRequest) -> Result<String, ClientError> {
        self.seen
            .lock()
            .expect("scripted lock")
            .push(request.clone());
        self.replies
            .lock()
            .expect("scripted lock")
            .pop_front()
            .unwrap_or_else(|| Err(ClientError::Transport("script exhausted".into())))
    }
}

/// Records requests and forwards them to another backend.
pub struct RecordingBackend<B> {
    inner: B,
    seen: Mutex<Vec<AgentRequest>>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<AgentRequest> {
        self.seen.lock().expect("recording lock").clone()
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn send(&self, request: &AgentRequest) -> Result<String, ClientError> {
        self.seen
            .lock()
            .expect("recording lock")
            .push(request.clone());
        self.inner.send(request)
    }
}

struct SceneKind {
    name: &'static str,
    objects: &'static [&'static str],
}

const SCENE_KINDS: &[SceneKind] = &[
    SceneKind {
        name: "bedroom",
        objects: &["bed", "nightstand", "wardrobe", "lamp", "dresser"],
    },
    SceneKind {
        name: "living room",
        objects: &["sofa", "coffee table", "tv stand", "armchair", "side table"],
    },
    SceneKind {
        name: "office",
        objects: &[
            "desk",
            "office chair",
            "monitor",
            "bookshelf",
            "filing cabinet",
        ],
    },
    SceneKind {
        name: "kitchen",
        objects: &["kitchen counter", "fridge", "stool", "cabinet", "sink"],
    },
    SceneKind {
        name: "dining room",
        objects: &["dining table", "chair", "cabinet", "lamp", "plant"],
    },
    SceneKind {
        name: "bathroom",
        objects: &["toilet", "bathtub", "vanity", "cabinet", "mirror"],
    },
    SceneKind {
        name: "kids room",
        objects: &["single bed", "desk", "toy chest", "bookshelf", "rug"],
    },
    SceneKind {
        name: "study",
        objects: &["desk", "chair", "bookshelf", "lamp", "armchair"],
    },
    SceneKind {
        name: "guest room",
        objects: &["bed", "nightstand", "dresser", "armchair", "lamp"],
    },
    SceneKind {
        name: "library",
        objects: &["bookshelf", "armchair", "reading lamp", "table", "rug"],
    },
    SceneKind {
        name: "game room",
        objects: &["sofa", "tv stand", "game table", "stool", "shelf"],
    },
    SceneKind {
        name: "studio apartment",
        objects: &["bed", "sofa", "desk", "kitchen counter", "wardrobe"],
    },
];

const ADJECTIVES: &[&str] = &[
    "cozy",
    "modern",
    "small",
    "spacious",
    "minimalist",
    "rustic",
    "bright",
    "compact",
    "classic",
    "scandinavian",
    "quiet",
    "warm",
];

/// A deterministic corpus of parsed multi-view scenes, cycling through
/// twelve scene types and twelve styles.
pub fn synthetic_corpus(n: usize) -> Vec<ParsedScene> {
    (0..n)
        .map(|i| {
            let kind = &SCENE_KINDS[i % SCENE_KINDS.len()];
            let adj = ADJECTIVES[(i / SCENE_KINDS.len()) % ADJECTIVES.len()];
            let o = kind.objects;
            let k = o.len();
            let pick = |j: usize| o[(i + j) % k];
            let relations = vec![
                format!("the {} is placed against the wall", pick(0)),
                format!("the {} stands next to the {}", pick(1), pick(0)),
                format!("the {} faces the {}", pick(2), pick(0)),
                format!("the {} is near the {}", pick(3), pick(4)),
            ];
            let scales = vec![
                format!("the {} is larger than the {}", pick(0), pick(1)),
                format!("the {} is about half the size of the {}", pick(3), pick(2)),
            ];
            ParsedScene {
                scene_id: format!("{}_{:03}", kind.name.replace(' ', "_"), i),
                texts: ParsedSceneTexts {
                    summary: format!("a {adj} {}", kind.name),
                    relations,
                    scales,
                },
            }
        })
        .collect()
}

/// Context payload describing a zone, as the grounding stage sends it.
pub fn zone_context(region: &Region, functionality: &str) -> Value {
    json!({
        "functionality": functionality,
        "region": [region.min_x, region.min_y, region.max_x, region.max_y],
    })
}
