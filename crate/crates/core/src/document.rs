//! Plain-text record documents.
//!
//! One record per line: a kind word followed by `key=value` fields in a
//! fixed order. Values are `-` (absent), a bare token (numbers, enum words)
//! or a double-quoted string with `\"`, `\\`, `\n` and `\t` escapes. Lines
//! starting with `#` are comments. Floats are written in shortest
//! round-trip form so re-serializing a parsed document is byte-identical.
//!
//! ```text
//! format name="layout" version=1
//! room width=4 depth=3 height=2.8
//! zone id="sleeping_zone" functionality="sleeping" min_x=0 min_y=0 max_x=2.4 max_y=3
//! object id="bed_0" category="bed" role=dominant zone="sleeping_zone" parent=- x=1.2 y=1 yaw=0 hw=0.8 hd=1 height=0.55
//! node id="room" level=root parent=-
//! relation subject="bed_0" kind=against_wall object="room" granularity=dominant
//! ```

use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::{OrientedFootprint, Region, Vec2};
use crate::scene::{
    FunctionalityZone, Granularity, Hierarchy, HierarchyNode, Layout, Level, ObjectPlacement,
    Relation, RelationKind, Role, RoomBoundary, ValidationError,
};

pub const LAYOUT_FORMAT: &str = "layout";
pub const LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}{}: {message}", field.as_ref().map(|f| format!(", field {f:?}")).unwrap_or_default())]
pub struct ParseError {
    pub line: usize,
    pub field: Option<String>,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, field: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            line,
            field: field.map(str::to_string),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DocumentError {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("validation error: {0}")]
    Validation(#[from] ValidationError),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Absent,
    Bare(String),
    Quoted(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub line: usize,
    pub kind: String,
    pub fields: Vec<(String, Value)>,
}

impl Record {
    fn err(&self, field: &str, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.line, Some(field), msg)
    }

    fn raw(&self, key: &str) -> Result<&Value, ParseError> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v)
            .ok_or_else(|| self.err(key, "missing field"))
    }

    pub fn has(&self, key: &str) -> bool {
        self.fields.iter().any(|(k, _)| k == key)
    }

    /// Rejects fields outside `allowed` and repeated keys.
    pub fn expect_fields(&self, allowed: &[&str]) -> Result<(), ParseError> {
        for (i, (k, _)) in self.fields.iter().enumerate() {
            if !allowed.contains(&k.as_str()) {
                return Err(self.err(k, format!("unknown field for {}", self.kind)));
            }
            if self.fields[..i].iter().any(|(p, _)| p == k) {
                return Err(self.err(k, "repeated field"));
            }
        }
        Ok(())
    }

    pub fn str(&self, key: &str) -> Result<String, ParseError> {
        match self.raw(key)? {
            Value::Bare(s) | Value::Quoted(s) => Ok(s.clone()),
            Value::Absent => Err(self.err(key, "value required")),
        }
    }

    pub fn opt_str(&self, key: &str) -> Result<Option<String>, ParseError> {
        match self.raw(key)? {
            Value::Bare(s) | Value::Quoted(s) => Ok(Some(s.clone())),
            Value::Absent => Ok(None),
        }
    }

    pub fn num(&self, key: &str) -> Result<f64, ParseError> {
        match self.raw(key)? {
            Value::Bare(s) => {
                let v: f64 = s
                    .parse()
                    .map_err(|_| self.err(key, format!("not a number: {s:?}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(self.err(key, "number must be finite"))
                }
            }
            _ => Err(self.err(key, "expected a bare number")),
        }
    }

    pub fn uint(&self, key: &str) -> Result<u64, ParseError> {
        match self.raw(key)? {
            Value::Bare(s) => s
                .parse()
                .map_err(|_| self.err(key, format!("not an unsigned integer: {s:?}"))),
            _ => Err(self.err(key, "expected a bare integer")),
        }
    }

    pub fn word<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<T, ParseError> {
        let s = self.str(key)?;
        parse(&s).ok_or_else(|| self.err(key, format!("unrecognized value {s:?}")))
    }
}

/// Builds one record line with fields in insertion order.
#[derive(Debug)]
pub struct RecordWriter {
    line: String,
}

impl RecordWriter {
    pub fn new(kind: &str) -> Self {
        Self {
            line: kind.to_string(),
        }
    }

    pub fn str(mut self, key: &str, value: &str) -> Self {
        let _ = write!(self.line, " {key}={}", quote(value));
        self
    }

    pub fn opt_str(self, key: &str, value: Option<&str>) -> Self {
        match value {
            Some(v) => self.str(key, v),
            None => self.absent(key),
        }
    }

    pub fn word(mut self, key: &str, value: &str) -> Self {
        let _ = write!(self.line, " {key}={value}");
        self
    }

    pub fn num(mut self, key: &str, value: f64) -> Self {
        let _ = write!(self.line, " {key}={value}");
        self
    }

    pub fn uint(mut self, key: &str, value: u64) -> Self {
        let _ = write!(self.line, " {key}={value}");
        self
    }

    pub fn absent(mut self, key: &str) -> Self {
        let _ = write!(self.line, " {key}=-");
        self
    }

    pub fn finish(self) -> String {
        self.line
    }
}

pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Splits a document into records, skipping blanks and comments.
pub fn parse_records(text: &str) -> Result<Vec<Record>, ParseError> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        records.push(parse_line(line, line_no)?);
    }
    Ok(records)
}

fn is_key_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn parse_line(line: &str, line_no: usize) -> Result<Record, ParseError> {
    let mut chars = line.char_indices().peekable();
    let mut kind = String::new();
    while let Some(&(_, c)) = chars.peek() {
        if c.is_whitespace() {
            break;
        }
        if !is_key_char(c) {
            return Err(ParseError::new(
                line_no,
                None,
                format!("invalid character {c:?} in record kind"),
            ));
        }
        kind.push(c);
        chars.next();
    }
    let mut fields = Vec::new();
    loop {
        while chars.peek().is_some_and(|&(_, c)| c.is_whitespace()) {
            chars.next();
        }
        if chars.peek().is_none() {
            break;
        }
        let mut key = String::new();
        while let Some(&(_, c)) = chars.peek() {
            if c == '=' || c.is_whitespace() {
                break;
            }
            if !is_key_char(c) {
                return Err(ParseError::new(
                    line_no,
                    None,
                    format!("invalid character {c:?} in field name"),
                ));
            }
            key.push(c);
            chars.next();
        }
        if key.is_empty() {
            return Err(ParseError::new(line_no, None, "empty field name"));
        }
        match chars.next() {
            Some((_, '=')) => {}
            _ => return Err(ParseError::new(line_no, Some(&key), "expected '='")),
        }
        let value = match chars.peek() {
            Some(&(_, '"')) => {
                chars.next();
                let mut s = String::new();
                let mut closed = false;
                while let Some((_, c)) = chars.next() {
                    match c {
                        '"' => {
                            closed = true;
                            break;
                        }
                        '\\' => match chars.next() {
                            Some((_, '"')) => s.push('"'),
                            Some((_, '\\')) => s.push('\\'),
                            Some((_, 'n')) => s.push('\n'),
                            Some((_, 't')) => s.push('\t'),
                            Some((_, 'r')) => s.push('\r'),
                            other => {
                                return Err(ParseError::new(
                                    line_no,
                                    Some(&key),
                                    format!("bad escape {:?}", other.map(|(_, c)| c)),
                                ))
                            }
                        },
                        c => s.push(c),
                    }
                }
                if !closed {
                    return Err(ParseError::new(line_no, Some(&key), "unterminated string"));
                }
                if chars.peek().is_some_and(|&(_, c)| !c.is_whitespace()) {
                    return Err(ParseError::new(
                        line_no,
                        Some(&key),
                        "missing space after string",
                    ));
                }
                Value::Quoted(s)
            }
            _ => {
                let mut s = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c.is_whitespace() {
                        break;
                    }
                    if c == '"' || c == '=' {
                        return Err(ParseError::new(
                            line_no,
                            Some(&key),
                            format!("unexpected {c:?} in bare value"),
                        ));
                    }
                    s.push(c);
                    chars.next();
                }
                match s.as_str() {
                    "" => return Err(ParseError::new(line_no, Some(&key), "empty value")),
                    "-" => Value::Absent,
                    _ => Value::Bare(s),
                }
            }
        };
        fields.push((key, value));
    }
    Ok(Record {
        line: line_no,
        kind,
        fields,
    })
}

/// Reads and checks the leading `format` record.
pub fn expect_format<'a>(
    records: &'a [Record],
    name: &str,
    version: u32,
) -> Result<(&'a Record, &'a [Record]), ParseError> {
    let (first, rest) = records
        .split_first()
        .ok_or_else(|| ParseError::new(1, None, "empty document"))?;
    if first.kind != "format" {
        return Err(ParseError::new(
            first.line,
            None,
            format!("expected a format header, found {:?}", first.kind),
        ));
    }
    let found = first.str("name")?;
    if found != name {
        return Err(ParseError::new(
            first.line,
            Some("name"),
            format!("expected {name:?} document, found {found:?}"),
        ));
    }
    let v = first.uint("version")?;
    if v != u64::from(version) {
        return Err(ParseError::new(
            first.line,
            Some("version"),
            format!("unsupported version {v}"),
        ));
    }
    Ok((first, rest))
}

pub fn format_header(name: &str, version: u32) -> String {
    RecordWriter::new("format")
        .str("name", name)
        .uint("version", u64::from(version))
        .finish()
}

fn footprint_fields(w: RecordWriter, fp: &OrientedFootprint) -> RecordWriter {
    w.num("x", fp.center.x)
        .num("y", fp.center.y)
        .num("yaw", fp.yaw)
        .num("hw", fp.half_extents.x)
        .num("hd", fp.half_extents.y)
        .num("height", fp.height)
}

pub fn object_record(o: &ObjectPlacement) -> String {
    let w = RecordWriter::new("object")
        .str("id", &o.id)
        .str("category", &o.category)
        .word("role", o.role.as_str())
        .opt_str("zone", o.zone_id.as_deref())
        .opt_str("parent", o.parent_id.as_deref());
    footprint_fields(w, &o.footprint).finish()
}

pub fn zone_record(z: &FunctionalityZone) -> String {
    RecordWriter::new("zone")
        .str("id", &z.id)
        .str("functionality", &z.functionality)
        .num("min_x", z.region.min_x)
        .num("min_y", z.region.min_y)
        .num("max_x", z.region.max_x)
        .num("max_y", z.region.max_y)
        .finish()
}

pub fn relation_record(r: &Relation) -> String {
    RecordWriter::new("relation")
        .str("subject", &r.subject)
        .word("kind", r.kind.as_str())
        .str("object", &r.object)
        .word("granularity", r.granularity.as_str())
        .finish()
}

/// Writes the layout as a record document.
pub fn serialize_layout(layout: &Layout) -> String {
    let mut out = String::new();
    out.push_str("# scene layout\n");
    out.push_str(&format_header(LAYOUT_FORMAT, LAYOUT_VERSION));
    out.push('\n');
    let room = RecordWriter::new("room")
        .num("width", layout.room.width)
        .num("depth", layout.room.depth)
        .num("height", layout.room.height)
        .finish();
    out.push_str(&room);
    out.push('\n');
    for z in &layout.zones {
        out.push_str(&zone_record(z));
        out.push('\n');
    }
    for o in layout.objects() {
        out.push_str(&object_record(o));
        out.push('\n');
    }
    for n in &layout.hierarchy.nodes {
        let line = RecordWriter::new("node")
            .str("id", &n.id)
            .word("level", n.level.as_str())
            .opt_str("parent", n.parent.as_deref())
            .finish();
        out.push_str(&line);
        out.push('\n');
    }
    for r in &layout.relations {
        out.push_str(&relation_record(r));
        out.push('\n');
    }
    out
}

pub fn parse_room(rec: &Record) -> Result<RoomBoundary, ParseError> {
    rec.expect_fields(&["width", "depth", "height"])?;
    let (w, d, h) = (rec.num("width")?, rec.num("depth")?, rec.num("height")?);
    Ok(RoomBoundary {
        width: w,
        depth: d,
        height: h,
    })
}

pub fn parse_zone(rec: &Record) -> Result<FunctionalityZone, ParseError> {
    rec.expect_fields(&["id", "functionality", "min_x", "min_y", "max_x", "max_y"])?;
    Ok(FunctionalityZone {
        id: rec.str("id")?,
        functionality: rec.str("functionality")?,
        region: Region {
            min_x: rec.num("min_x")?,
            min_y: rec.num("min_y")?,
            max_x: rec.num("max_x")?,
            max_y: rec.num("max_y")?,
        },
    })
}

pub fn parse_object(rec: &Record) -> Result<ObjectPlacement, ParseError> {
    rec.expect_fields(&[
        "id", "category", "role", "zone", "parent", "x", "y", "yaw", "hw", "hd", "height",
    ])?;
    let footprint = OrientedFootprint {
        center: Vec2::new(rec.num("x")?, rec.num("y")?),
        yaw: rec.num("yaw")?,
        half_extents: Vec2::new(rec.num("hw")?, rec.num("hd")?),
        height: rec.num("height")?,
    };
    if !(-std::f64::consts::PI..std::f64::consts::PI).contains(&footprint.yaw) {
        return Err(rec.err("yaw", "yaw must lie in [-pi, pi)"));
    }
    Ok(ObjectPlacement {
        id: rec.str("id")?,
        category: rec.str("category")?,
        role: rec.word("role", Role::parse)?,
        zone_id: rec.opt_str("zone")?,
        parent_id: rec.opt_str("parent")?,
        footprint,
    })
}

pub fn parse_relation(rec: &Record) -> Result<Relation, ParseError> {
    rec.expect_fields(&["subject", "kind", "object", "granularity"])?;
    Ok(Relation {
        subject: rec.str("subject")?,
        kind: rec.word("kind", RelationKind::parse)?,
        object: rec.str("object")?,
        granularity: rec.word("granularity", Granularity::parse)?,
    })
}

/// Parses a layout document and validates every invariant.
pub fn deserialize_layout(doc: &str) -> Result<Layout, DocumentError> {
    let records = parse_records(doc)?;
    let (_, body) = expect_format(&records, LAYOUT_FORMAT, LAYOUT_VERSION)?;
    let mut room = None;
    let mut zones = Vec::new();
    let mut dominants = Vec::new();
    let mut accessories = Vec::new();
    let mut nodes = Vec::new();
    let mut relations = Vec::new();
    for rec in body {
        match rec.kind.as_str() {
            "room" => {
                if room.is_some() {
                    return Err(ParseError::new(rec.line, None, "second room record").into());
                }
                room = Some(parse_room(rec)?);
            }
            "zone" => zones.push(parse_zone(rec)?),
            "object" => {
                let o = parse_object(rec)?;
                match o.role {
                    Role::Dominant => dominants.push(o),
                    Role::Accessory => accessories.push(o),
                }
            }
            "node" => {
                rec.expect_fields(&["id", "level", "parent"])?;
                nodes.push(HierarchyNode {
                    id: rec.str("id")?,
                    level: rec.word("level", Level::parse)?,
                    parent: rec.opt_str("parent")?,
                });
            }
            "relation" => relations.push(parse_relation(rec)?),
            other => {
                return Err(
                    ParseError::new(rec.line, None, format!("unknown record {other:?}")).into(),
                )
            }
        }
    }
    let room = room.ok_or_else(|| ParseError::new(records[0].line, None, "missing room record"))?;
    for o in dominants.iter().chain(accessories.iter()) {
        o.validate()?;
    }
    let derived = Hierarchy::build(&zones, &dominants, &accessories)?;
    let hierarchy = if nodes.is_empty() {
        derived
    } else {
        let stored = Hierarchy { nodes };
        stored.check_well_formed()?;
        stored
    };
    let layout = Layout {
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

#[derive(serde::Serialize, serde::Deserialize)]
struct JsonMirror<T> {
    format: String,
    version: u32,
    #[serde(flatten)]
    body: T,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct LayoutBody {
    layout: Layout,
}

/// JSON mirror of the layout document, same field names as the types.
pub fn layout_to_json(layout: &Layout) -> String {
    let mirror = JsonMirror {
        format: LAYOUT_FORMAT.into(),
        version: LAYOUT_VERSION,
        body: LayoutBody {
            layout: layout.clone(),
        },
    };
    serde_json::to_string_pretty(&mirror).expect("layout serializes")
}

#[derive(Debug, Error)]
pub enum JsonLayoutError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unexpected document {0:?} v{1}")]
    Format(String, u32),
    #[error("validation error: {0}")]
    Validation(#[from] ValidationError),
}

pub fn layout_from_json(text: &str) -> Result<Layout, JsonLayoutError> {
    let mirror: JsonMirror<LayoutBody> = serde_json::from_str(text)?;
    if mirror.format != LAYOUT_FORMAT || mirror.version != LAYOUT_VERSION {
        return Err(JsonLayoutError::Format(mirror.format, mirror.version));
    }
    mirror.body.layout.validate()?;
    Ok(mirror.body.layout)
}
