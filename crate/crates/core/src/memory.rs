//! Scene prior memory: offline construction from parsed multi-view scenes
//! and online retrieval that augments a short description.
//!
//! Retrieval is semantic (cosine over unit embeddings) while the best match
//! clears `theta_ret`, and falls back to BM25 over an enriched query
//! otherwise.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use base64::Engine;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::agents::{
    AgentClient, AgentError, Embedding, EmbeddingClient, EnrichmentReply, ImageRef, Prompt,
    SceneParseReply,
};
use crate::document::{expect_format, format_header, parse_records, ParseError, RecordWriter};
use crate::scene::ShortDescription;

pub const DEFAULT_TOP_K: usize = 3;
pub const DEFAULT_THETA_RET: f64 = 0.35;
pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;
pub const DEFAULT_VIEWS: usize = 6;
pub const UNIT_NORM_TOL: f64 = 1e-6;

pub const MEMORY_FORMAT: &str = "prior_memory";
pub const MEMORY_VERSION: u32 = 1;
pub const MANIFEST_FORMAT: &str = "manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("scene {scene_id}: {source}")]
    Parse {
        scene_id: String,
        #[source]
        source: AgentError,
    },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("memory is empty")]
    EmptyMemory,
    #[error("no scenes to build from")]
    EmptyInput,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("scene {0} has no views")]
    NoViews(String),
    #[error("entry {id} has dimension {got}, memory uses {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        got: usize,
    },
    #[error("entry {id} embedding norm {norm} is not 1")]
    NotUnit { id: String, norm: f64 },
    #[error("duplicate entry id {0}")]
    DuplicateId(String),
    #[error(transparent)]
    Format(#[from] ParseError),
    #[error("memory file statistics disagree with its entries: {0}")]
    StaleStats(String),
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiViewUnit {
    pub scene_id: String,
    pub views: Vec<String>,
}

impl MultiViewUnit {
    pub fn new(scene_id: impl Into<String>, views: Vec<String>) -> Result<Self, MemoryError> {
        let scene_id = scene_id.into();
        if views.is_empty() {
            return Err(MemoryError::NoViews(scene_id));
        }
        Ok(Self { scene_id, views })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParsedSceneTexts {
    pub summary: String,
    pub relations: Vec<String>,
    pub scales: Vec<String>,
}

impl ParsedSceneTexts {
    pub fn tokens(&self) -> Vec<String> {
        let mut out = tokenize(&self.summary);
        for s in self.relations.iter().chain(&self.scales) {
            out.extend(tokenize(s));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParsedScene {
    pub scene_id: String,
    pub texts: ParsedSceneTexts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub id: String,
    pub texts: ParsedSceneTexts,
    pub embedding: Embedding,
}

impl SceneEntry {
    /// The entry as record lines: one `entry` record, then its relations
    /// and scales.
    pub fn records(&self) -> Vec<String> {
        let mut out = vec![RecordWriter::new("entry")
            .str("id", &self.id)
            .str("summary", &self.texts.summary)
            .finish()];
        for r in &self.texts.relations {
            out.push(
                RecordWriter::new("relation")
                    .str("entry", &self.id)
                    .str("text", r)
                    .finish(),
            );
        }
        for s in &self.texts.scales {
            out.push(
                RecordWriter::new("scale")
                    .str("entry", &self.id)
                    .str("text", s)
                    .finish(),
            );
        }
        out
    }

    pub fn tokens(&self) -> Vec<String> {
        self.texts.tokens()
    }
}

/// Document frequencies and mean entry length over the memory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bm25Stats {
    pub doc_count: usize,
    pub avg_len: f64,
    pub doc_freq: BTreeMap<String, usize>,
}

impl Bm25Stats {
    pub fn from_token_lists<'a>(docs: impl IntoIterator<Item = &'a [String]>) -> Self {
        let mut doc_count = 0;
        let mut total = 0usize;
        let mut doc_freq: BTreeMap<String, usize> = BTreeMap::new();
        for doc in docs {
            doc_count += 1;
            total += doc.len();
            let distinct: BTreeSet<&String> = doc.iter().collect();
            for t in distinct {
                *doc_freq.entry(t.clone()).or_insert(0) += 1;
            }
        }
        let avg_len = if doc_count == 0 {
            0.0
        } else {
            total as f64 / doc_count as f64
        };
        Self {
            doc_count,
            avg_len,
            doc_freq,
        }
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count as f64;
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }
}

/// BM25 over the distinct query terms.
pub fn bm25_score(
    query_terms: &[String],
    entry: &SceneEntry,
    stats: &Bm25Stats,
    k1: f64,
    b: f64,
) -> f64 {
    bm25_score_tokens(query_terms, &entry.tokens(), stats, k1, b)
}

pub fn bm25_score_tokens(
    query_terms: &[String],
    doc: &[String],
    stats: &Bm25Stats,
    k1: f64,
    b: f64,
) -> f64 {
    let mut tf: HashMap<&str, usize> = HashMap::new();
    for t in doc {
        *tf.entry(t.as_str()).or_insert(0) += 1;
    }
    let len_norm = if stats.avg_len > 0.0 {
        doc.len() as f64 / stats.avg_len
    } else {
        0.0
    };
    let distinct: BTreeSet<&str> = query_terms.iter().map(String::as_str).collect();
    distinct
        .into_iter()
        .filter_map(|t| tf.get(t).map(|&f| (t, f as f64)))
        .map(|(t, f)| stats.idf(t) * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * len_norm)))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorMemory {
    pub entries: Vec<SceneEntry>,
    pub embedding_dim: usize,
    pub stats: Bm25Stats,
}

impl PriorMemory {
    /// Checks dimensions, unit norms and id uniqueness, then computes stats.
    pub fn new(entries: Vec<SceneEntry>) -> Result<Self, MemoryError> {
        let first = entries.first().ok_or(MemoryError::EmptyMemory)?;
        let embedding_dim = first.embedding.dim();
        let mut ids = BTreeSet::new();
        for e in &entries {
            if !ids.insert(e.id.as_str()) {
                return Err(MemoryError::DuplicateId(e.id.clone()));
            }
            if e.embedding.dim() != embedding_dim {
                return Err(MemoryError::DimensionMismatch {
                    id: e.id.clone(),
                    expected: embedding_dim,
                    got: e.embedding.dim(),
                });
            }
            let norm = e.embedding.norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(MemoryError::NotUnit {
                    id: e.id.clone(),
                    norm,
                });
            }
        }
        let tokens: Vec<Vec<String>> = entries.iter().map(SceneEntry::tokens).collect();
        let stats = Bm25Stats::from_token_lists(tokens.iter().map(Vec::as_slice));
        Ok(Self {
            entries,
            embedding_dim,
            stats,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn cosine_scores(&self, query: &Embedding) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| e.embedding.cosine(query))
            .collect()
    }

    pub fn bm25_scores(&self, query_terms: &[String]) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| bm25_score(query_terms, e, &self.stats, BM25_K1, BM25_B))
            .collect()
    }
}

/// Parses one multi-view unit with a single batched agent call.
pub fn parse_views(
    unit: &MultiViewUnit,
    vlm: &AgentClient,
) -> Result<ParsedSceneTexts, MemoryError> {
    if unit.views.is_empty() {
        return Err(MemoryError::NoViews(unit.scene_id.clone()));
    }
    let text = format!(
        "These {} images show the same indoor scene ({}) from different viewpoints. \
         Describe the scene type, the spatial relations between objects, and their relative scales.",
        unit.views.len(),
        unit.scene_id
    );
    let prompt = Prompt::new(text)
        .with_images(unit.views.iter().cloned().map(ImageRef::Path).collect())
        .with_context(json!({"scene_id": unit.scene_id, "views": unit.views}));
    let reply: SceneParseReply = vlm.complete(prompt).map_err(|source| MemoryError::Parse {
        scene_id: unit.scene_id.clone(),
        source,
    })?;
    Ok(ParsedSceneTexts {
        summary: reply.summary,
        relations: reply.relations,
        scales: reply.scales,
    })
}

/// Embeds every summary (in parallel) and indexes the entries.
pub fn build_memory(
    parsed: &[ParsedScene],
    embed: &EmbeddingClient,
) -> Result<PriorMemory, MemoryError> {
    if parsed.is_empty() {
        return Err(MemoryError::EmptyInput);
    }
    let entries = parsed
        .par_iter()
        .map(|p| {
            let embedding = embed.embed(&p.texts.summary)?;
            Ok(SceneEntry {
                id: p.scene_id.clone(),
                texts: p.texts.clone(),
                embedding,
            })
        })
        .collect::<Result<Vec<_>, MemoryError>>()?;
    PriorMemory::new(entries)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    Semantic,
    Generalized,
}

impl RetrievalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RetrievalMode::Semantic => "semantic",
            RetrievalMode::Generalized => "generalized",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Retrieved {
    pub entry: SceneEntry,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorPackage {
    pub retrieved: Vec<Retrieved>,
    pub mode: RetrievalMode,
    pub max_cosine: f64,
    /// Query terms used for BM25; empty in semantic mode.
    pub query_terms: Vec<String>,
}

impl PriorPackage {
    pub fn empty() -> Self {
        Self {
            retrieved: Vec::new(),
            mode: RetrievalMode::Semantic,
            max_cosine: 0.0,
            query_terms: Vec::new(),
        }
    }

    /// Plain-text dump: one header record and one `prior` record per hit.
    pub fn to_document(&self) -> String {
        let mut out = format_header("prior_package", 1);
        out.push('\n');
        let _ = writeln!(
            out,
            "{}",
            RecordWriter::new("package")
                .word("mode", self.mode.as_str())
                .num("max_cosine", self.max_cosine)
                .uint("count", self.retrieved.len() as u64)
                .finish()
        );
        for (rank, r) in self.retrieved.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}",
                RecordWriter::new("prior")
                    .uint("rank", rank as u64)
                    .str("entry", &r.entry.id)
                    .num("score", r.score)
                    .str("summary", &r.entry.texts.summary)
                    .finish()
            );
        }
        out
    }
}

/// Indices of the `k` highest scores, descending; ties keep insertion order.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx.truncate(k);
    idx
}

/// Nouns the enricher believes are present, as query tokens.
pub fn enrichment_terms(
    d: &ShortDescription,
    enricher: &AgentClient,
) -> Result<Vec<String>, MemoryError> {
    let prompt = Prompt::new(format!(
        "List the furniture and objects likely found in: {}",
        d.as_str()
    ))
    .with_context(json!({"description": d.as_str()}));
    let reply: EnrichmentReply = enricher.complete(prompt)?;
    Ok(reply.objects.iter().flat_map(|o| tokenize(o)).collect())
}

pub fn retrieve(
    d: &ShortDescription,
    memory: &PriorMemory,
    k: usize,
    theta_ret: f64,
    embed: &EmbeddingClient,
    enricher: &AgentClient,
) -> Result<PriorPackage, MemoryError> {
    if memory.is_empty() {
        return Err(MemoryError::EmptyMemory);
    }
    let q = embed.embed(d.as_str())?;
    retrieve_with(d, &q, memory, k, theta_ret, || {
        enrichment_terms(d, enricher)
    })
}

/// Retrieval given the query embedding; `enrich` runs only on fallback.
pub fn retrieve_with(
    d: &ShortDescription,
    query: &Embedding,
    memory: &PriorMemory,
    k: usize,
    theta_ret: f64,
    enrich: impl FnOnce() -> Result<Vec<String>, MemoryError>,
) -> Result<PriorPackage, MemoryError> {
    if memory.is_empty() {
        return Err(MemoryError::EmptyMemory);
    }
    if k == 0 {
        return Err(MemoryError::InvalidK);
    }
    let cos = memory.cosine_scores(query);
    let max_cosine = cos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mode, scores, query_terms) = if max_cosine > theta_ret {
        (RetrievalMode::Semantic, cos, Vec::new())
    } else {
        let mut terms = tokenize(d.as_str());
        terms.extend(enrich()?);
        (
            RetrievalMode::Generalized,
            memory.bm25_scores(&terms),
            terms,
        )
    };
    let retrieved = top_k(&scores, k)
        .into_iter()
        .map(|i| Retrieved {
            entry: memory.entries[i].clone(),
            score: scores[i],
        })
        .collect();
    Ok(PriorPackage {
        retrieved,
        mode,
        max_cosine,
        query_terms,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedDescription {
    pub original: ShortDescription,
    pub package: PriorPackage,
}

pub fn augment(d: &ShortDescription, pkg: &PriorPackage) -> AugmentedDescription {
    AugmentedDescription {
        original: d.clone(),
        package: pkg.clone(),
    }
}

impl AugmentedDescription {
    /// The description alone, or followed by each prior in score order.
    pub fn prompt_text(&self) -> String {
        let mut out = self.original.as_str().to_string();
        if self.package.retrieved.is_empty() {
            return out;
        }
        out.push_str("\n\nScene priors:");
        for (i, r) in self.package.retrieved.iter().enumerate() {
            let _ = write!(out, "\n[{}] {}", i + 1, r.entry.texts.summary);
            for rel in &r.entry.texts.relations {
                let _ = write!(out, "\n  relation: {rel}");
            }
            for s in &r.entry.texts.scales {
                let _ = write!(out, "\n  scale: {s}");
            }
        }
        out
    }

    pub fn prior_summaries(&self) -> Vec<&str> {
        self.package
            .retrieved
            .iter()
            .map(|r| r.entry.texts.summary.as_str())
            .collect()
    }
}

fn encode_embedding(e: &Embedding) -> String {
    let bytes: Vec<u8> = e.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

fn decode_embedding(line: usize, data: &str) -> Result<Embedding, ParseError> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(data)
        .map_err(|e| ParseError::new(line, Some("data"), format!("bad base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(ParseError::new(
            line,
            Some("data"),
            "length is not a multiple of 8",
        ));
    }
    Ok(Embedding::from_unit(
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    ))
}

/// Memory file: entries, their embeddings and the BM25 statistics.
pub fn serialize_memory(memory: &PriorMemory) -> String {
    let mut out = String::from("# scene prior memory\n");
    out.push_str(&format_header(MEMORY_FORMAT, MEMORY_VERSION));
    out.push('\n');
    let _ = writeln!(
        out,
        "{}",
        RecordWriter::new("memory")
            .uint("entries", memory.entries.len() as u64)
            .uint("dim", memory.embedding_dim as u64)
            .num("avg_len", memory.stats.avg_len)
            .uint("terms", memory.stats.doc_freq.len() as u64)
            .finish()
    );
    for e in &memory.entries {
        for line in e.records() {
            out.push_str(&line);
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "{}",
            RecordWriter::new("embedding")
                .str("entry", &e.id)
                .str("data", &encode_embedding(&e.embedding))
                .finish()
        );
    }
    for (term, df) in &memory.stats.doc_freq {
        let _ = writeln!(
            out,
            "{}",
            RecordWriter::new("df")
                .str("term", term)
                .uint("count", *df as u64)
                .finish()
        );
    }
    out
}

pub fn deserialize_memory(doc: &str) -> Result<PriorMemory, MemoryError> {
    let records = parse_records(doc)?;
    let (header, body) = expect_format(&records, MEMORY_FORMAT, MEMORY_VERSION)?;
    let mut meta = None;
    let mut texts: Vec<(String, ParsedSceneTexts)> = Vec::new();
    let mut embeddings: HashMap<String, Embedding> = HashMap::new();
    let mut doc_freq = BTreeMap::new();
    let find = |texts: &mut Vec<(String, ParsedSceneTexts)>, line: usize, id: &str| {
        texts
            .iter()
            .position(|(e, _)| e == id)
            .ok_or_else(|| ParseError::new(line, Some("entry"), format!("unknown entry {id:?}")))
    };
    for rec in body {
        match rec.kind.as_str() {
            "memory" => {
                rec.expect_fields(&["entries", "dim", "avg_len", "terms"])?;
                meta = Some((
                    rec.uint("entries")? as usize,
                    rec.uint("dim")? as usize,
                    rec.num("avg_len")?,
                    rec.uint("terms")? as usize,
                ));
            }
            "entry" => {
                rec.expect_fields(&["id", "summary"])?;
                texts.push((
                    rec.str("id")?,
                    ParsedSceneTexts {
                        summary: rec.str("summary")?,
                        relations: Vec::new(),
                        scales: Vec::new(),
                    },
                ));
            }
            "relation" | "scale" => {
                rec.expect_fields(&["entry", "text"])?;
                let i = find(&mut texts, rec.line, &rec.str("entry")?)?;
                let t = rec.str("text")?;
                if rec.kind == "relation" {
                    texts[i].1.relations.push(t);
                } else {
                    texts[i].1.scales.push(t);
                }
            }
            "embedding" => {
                rec.expect_fields(&["entry", "data"])?;
                let id = rec.str("entry")?;
                find(&mut texts, rec.line, &id)?;
                embeddings.insert(id, decode_embedding(rec.line, &rec.str("data")?)?);
            }
            "df" => {
                rec.expect_fields(&["term", "count"])?;
                doc_freq.insert(rec.str("term")?, rec.uint("count")? as usize);
            }
            other => {
                return Err(
                    ParseError::new(rec.line, None, format!("unknown record {other:?}")).into(),
                )
            }
        }
    }
    let (n, dim, avg_len, terms) =
        meta.ok_or_else(|| ParseError::new(header.line, None, "missing memory record"))?;
    let entries = texts
        .into_iter()
        .map(|(id, texts)| {
            let embedding = embeddings.remove(&id).ok_or_else(|| {
                ParseError::new(header.line, None, format!("entry {id:?} has no embedding"))
            })?;
            Ok(SceneEntry {
                id,
                texts,
                embedding,
            })
        })
        .collect::<Result<Vec<_>, ParseError>>()?;
    let memory = PriorMemory::new(entries)?;
    if memory.len() != n || memory.embedding_dim != dim {
        return Err(MemoryError::StaleStats(format!(
            "header says {n} entries of dim {dim}, found {} of dim {}",
            memory.len(),
            memory.embedding_dim
        )));
    }
    if memory.stats.avg_len != avg_len
        || memory.stats.doc_freq != doc_freq
        || doc_freq.len() != terms
    {
        return Err(MemoryError::StaleStats("term statistics".into()));
    }
    Ok(memory)
}

/// One manifest scene: views to parse, or texts already parsed.
#[derive(Clone, Debug, PartialEq)]
pub enum ManifestScene {
    Views(MultiViewUnit),
    Parsed(ParsedScene),
}

/// Reads a manifest of `scene`, `view`, `summary`, `relation` and `scale`
/// records. A scene with a summary is taken as already parsed.
pub fn parse_manifest(doc: &str) -> Result<Vec<ManifestScene>, MemoryError> {
    let records = parse_records(doc)?;
    let (_, body) = expect_format(&records, MANIFEST_FORMAT, MANIFEST_VERSION)?;
    let mut scenes: Vec<(String, Vec<String>, Option<ParsedSceneTexts>)> = Vec::new();
    for rec in body {
        if rec.kind == "scene" {
            rec.expect_fields(&["id"])?;
            let id = rec.str("id")?;
            if scenes.iter().any(|(s, _, _)| *s == id) {
                return Err(MemoryError::DuplicateId(id));
            }
            scenes.push((id, Vec::new(), None));
            continue;
        }
        rec.expect_fields(&["scene", "path", "text"])?;
        let id = rec.str("scene")?;
        let slot = scenes
            .iter_mut()
            .find(|(s, _, _)| *s == id)
            .ok_or_else(|| {
                ParseError::new(rec.line, Some("scene"), format!("unknown scene {id:?}"))
            })?;
        match rec.kind.as_str() {
            "view" => slot.1.push(rec.str("path")?),
            "summary" => {
                let texts = slot.2.get_or_insert_with(|| ParsedSceneTexts {
                    summary: String::new(),
                    relations: Vec::new(),
                    scales: Vec::new(),
                });
                texts.summary = rec.str("text")?;
            }
            "relation" | "scale" => {
                let texts = slot.2.as_mut().ok_or_else(|| {
                    ParseError::new(rec.line, None, "relation or scale before summary")
                })?;
                let t = rec.str("text")?;
                if rec.kind == "relation" {
                    texts.relations.push(t);
                } else {
                    texts.scales.push(t);
                }
            }
            other => {
                return Err(
                    ParseError::new(rec.line, None, format!("unknown record {other:?}")).into(),
                )
            }
        }
    }
    scenes
        .into_iter()
        .map(|(id, views, texts)| match texts {
            Some(t) if !t.summary.trim().is_empty() => Ok(ManifestScene::Parsed(ParsedScene {
                scene_id: id,
                texts: t,
            })),
            _ => Ok(ManifestScene::Views(MultiViewUnit::new(id, views)?)),
        })
        .collect()
}

/// Parses the scenes that need it (in parallel) and returns all of them.
pub fn resolve_manifest(
    scenes: Vec<ManifestScene>,
    vlm: &AgentClient,
) -> Result<Vec<ParsedScene>, MemoryError> {
    scenes
        .into_par_iter()
        .map(|s| match s {
            ManifestScene::Parsed(p) => Ok(p),
            ManifestScene::Views(unit) => Ok(ParsedScene {
                texts: parse_views(&unit, vlm)?,
                scene_id: unit.scene_id,
            }),
        })
        .collect()
}
