//! Orthographic top-down plan raster.
//!
//! Square canvas, room scaled to fit inside a margin, y pointing up. The
//! room border is drawn just outside the floor rectangle, zones are tinted,
//! objects are filled from a fixed palette (dominants first, accessories on
//! top) and labeled with their index when large enough.

use std::fmt::Write as _;

use crate::document::{format_header, RecordWriter};
use crate::geometry::Vec2;
use crate::scene::Layout;

pub const DEFAULT_RESOLUTION: u32 = 512;
pub const MIN_RESOLUTION: u32 = 64;
const MARGIN: u32 = 8;
const BORDER: u32 = 2;
const LABEL_MIN_PX: f64 = 12.0;

pub type Rgb = [u8; 3];

pub const BACKGROUND: Rgb = [255, 255, 255];
pub const BORDER_COLOR: Rgb = [0, 0, 0];
pub const FLOOR: Rgb = [236, 236, 236];
const LABEL_BG: Rgb = [20, 20, 20];
const LABEL_FG: Rgb = [250, 250, 250];

pub const ZONE_TINTS: [Rgb; 6] = [
    [222, 235, 247],
    [229, 245, 224],
    [254, 237, 222],
    [239, 237, 245],
    [255, 247, 204],
    [224, 243, 243],
];

pub const OBJECT_PALETTE: [Rgb; 16] = [
    [228, 26, 28],
    [55, 126, 184],
    [77, 175, 74],
    [152, 78, 163],
    [255, 127, 0],
    [166, 86, 40],
    [247, 129, 191],
    [0, 139, 139],
    [128, 128, 0],
    [0, 0, 205],
    [139, 0, 0],
    [46, 139, 87],
    [199, 21, 133],
    [72, 61, 139],
    [210, 105, 30],
    [112, 128, 144],
];

/// 3x5 digit glyphs, one row per `u8`, high bit on the left.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl Raster {
    fn new(width: u32, height: u32, fill: Rgb) -> Self {
        let mut pixels = Vec::with_capacity((width * height * 3) as usize);
        for _ in 0..width * height {
            pixels.extend_from_slice(&fill);
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let i = ((y * self.width + x) * 3) as usize;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn set(&mut self, x: u32, y: u32, c: Rgb) {
        let i = ((y * self.width + x) * 3) as usize;
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    pub fn count(&self, c: Rgb) -> usize {
        self.pixels.chunks_exact(3).filter(|p| *p == c).count()
    }

    /// Binary portable pixmap.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Maps between world meters and pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanTransform {
    pub scale: f64,
    pub margin: f64,
    pub room_depth: f64,
}

impl PlanTransform {
    pub fn for_layout(layout: &Layout, resolution: u32) -> Self {
        let span = layout.room.width.max(layout.room.depth);
        Self {
            scale: f64::from(resolution - 2 * MARGIN) / span,
            margin: f64::from(MARGIN),
            room_depth: layout.room.depth,
        }
    }

    /// World position of a pixel center.
    pub fn world(&self, px: u32, py: u32) -> Vec2 {
        Vec2::new(
            (f64::from(px) + 0.5 - self.margin) / self.scale,
            self.room_depth - (f64::from(py) + 0.5 - self.margin) / self.scale,
        )
    }

    pub fn pixel(&self, p: Vec2) -> (f64, f64) {
        (
            p.x * self.scale + self.margin,
            (self.room_depth - p.y) * self.scale + self.margin,
        )
    }
}

pub fn object_color(index: usize, seed: u64) -> Rgb {
    OBJECT_PALETTE[(index + (seed % OBJECT_PALETTE.len() as u64) as usize) % OBJECT_PALETTE.len()]
}

pub fn zone_tint(index: usize) -> Rgb {
    ZONE_TINTS[index % ZONE_TINTS.len()]
}

fn inside_floor(layout: &Layout, p: Vec2) -> bool {
    p.x >= 0.0 && p.x <= layout.room.width && p.y >= 0.0 && p.y <= layout.room.depth
}

/// Renders the plan. Identical inputs give identical bytes.
pub fn render_topdown(layout: &Layout, resolution: u32, seed: u64) -> Raster {
    let res = resolution.max(MIN_RESOLUTION);
    let t = PlanTransform::for_layout(layout, res);
    let mut img = Raster::new(res, res, BACKGROUND);

    let (x0, y0) = t.pixel(Vec2::new(0.0, layout.room.depth));
    let (x1, y1) = t.pixel(Vec2::new(layout.room.width, 0.0));
    let b = f64::from(BORDER);
    for py in 0..res {
        for px in 0..res {
            let w = t.world(px, py);
            if inside_floor(layout, w) {
                img.set(px, py, FLOOR);
                continue;
            }
            let (cx, cy) = (f64::from(px) + 0.5, f64::from(py) + 0.5);
            if cx >= x0 - b && cx <= x1 + b && cy >= y0 - b && cy <= y1 + b {
                img.set(px, py, BORDER_COLOR);
            }
        }
    }

    for (zi, z) in layout.zones.iter().enumerate() {
        fill(&mut img, &t, layout, zone_tint(zi), |p| {
            z.region.contains_point(p)
        });
    }
    for (i, o) in layout.objects().enumerate() {
        let fp = o.footprint;
        fill(&mut img, &t, layout, object_color(i, seed), |p| {
            fp.contains_point(p)
        });
    }
    for (i, o) in layout.objects().enumerate() {
        let side = 2.0 * o.footprint.half_extents.x.min(o.footprint.half_extents.y) * t.scale;
        if side >= LABEL_MIN_PX {
            let (cx, cy) = t.pixel(o.footprint.center);
            draw_label(&mut img, cx, cy, i);
        }
    }
    img
}

fn fill(
    img: &mut Raster,
    t: &PlanTransform,
    layout: &Layout,
    c: Rgb,
    inside: impl Fn(Vec2) -> bool,
) {
    for py in 0..img.height {
        for px in 0..img.width {
            let w = t.world(px, py);
            if inside_floor(layout, w) && inside(w) {
                img.set(px, py, c);
            }
        }
    }
}

fn draw_label(img: &mut Raster, cx: f64, cy: f64, index: usize) {
    let text = index.to_string();
    let w = 4 * text.len() as i64 + 1;
    let h = 7i64;
    let left = cx.floor() as i64 - w / 2;
    let top = cy.floor() as i64 - h / 2;
    let mut put = |x: i64, y: i64, c: Rgb| {
        if x >= 0 && y >= 0 && (x as u32) < img.width && (y as u32) < img.height {
            img.set(x as u32, y as u32, c);
        }
    };
    for y in 0..h {
        for x in 0..w {
            put(left + x, top + y, LABEL_BG);
        }
    }
    for (k, ch) in text.bytes().enumerate() {
        let glyph = DIGITS[(ch - b'0') as usize];
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) != 0 {
                    put(
                        left + 1 + 4 * k as i64 + col,
                        top + 1 + row as i64,
                        LABEL_FG,
                    );
                }
            }
        }
    }
}

/// Color legend as a record document: zones, then objects by index.
pub fn legend(layout: &Layout, seed: u64) -> String {
    let mut out = format_header("legend", 1);
    out.push('\n');
    let rgb = |w: RecordWriter, c: Rgb| {
        w.uint("r", u64::from(c[0]))
            .uint("g", u64::from(c[1]))
            .uint("b", u64::from(c[2]))
    };
    for (i, z) in layout.zones.iter().enumerate() {
        let w = RecordWriter::new("zone")
            .uint("index", i as u64)
            .str("id", &z.id);
        let _ = writeln!(out, "{}", rgb(w, zone_tint(i)).finish());
    }
    for (i, o) in layout.objects().enumerate() {
        let w = RecordWriter::new("object")
            .uint("index", i as u64)
            .str("id", &o.id)
            .str("category", &o.category);
        let _ = writeln!(out, "{}", rgb(w, object_color(i, seed)).finish());
    }
    out
}
