//! Deterministic chart rendering: compiles a `ChartSpec` into a scene graph,
//! rasterises it to an RGB grid, and emits an element index so metrics can
//! locate task regions and text.
//!
//! Text uses a fixed embedded metrics model: glyph advance = 0.60 x font size,
//! cap-height = 0.70 x font size. Glyphs rasterise as filled boxes; the
//! metrics, not the glyph shapes, drive the perceptual metrics.

use crate::color::{Rgb, BLACK, WHITE};
use crate::error::{Error, Result};
use crate::model::{ChartSpec, DataTable, Orientation, TaskSpec, TaskType};
use serde::{Deserialize, Serialize};

pub const GLYPH_ADVANCE_RATIO: f64 = 0.60;
pub const CAP_HEIGHT_RATIO: f64 = 0.70;
pub const OUTER_MARGIN: f64 = 10.0;
pub const AXIS_LABEL_PAD: f64 = 8.0;
pub const DATA_LABEL_PAD: f64 = 4.0;

pub fn text_width(text: &str, font_size: f64) -> f64 {
    text.chars().count() as f64 * GLYPH_ADVANCE_RATIO * font_size
}

pub fn cap_height(font_size: f64) -> f64 {
    CAP_HEIGHT_RATIO * font_size
}

/// Gap between adjacent bars.
pub fn bar_gap(bar_width: f64) -> f64 {
    (0.25 * bar_width).max(4.0)
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Axis-aligned rectangle in continuous canvas coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectF {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl RectF {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        RectF { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn to_pixels(&self) -> PixelRect {
        let x0 = self.x0.floor() as i32;
        let y0 = self.y0.floor() as i32;
        PixelRect {
            x0,
            y0,
            // a degenerate extent must stay degenerate after snapping
            x1: if self.x1 > self.x0 { self.x1.ceil() as i32 } else { x0 },
            y1: if self.y1 > self.y0 { self.y1.ceil() as i32 } else { y0 },
        }
    }
}

/// Half-open integer pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl PixelRect {
    pub fn width(&self) -> i32 {
        (self.x1 - self.x0).max(0)
    }

    pub fn height(&self) -> i32 {
        (self.y1 - self.y0).max(0)
    }

    pub fn area(&self) -> i64 {
        self.width() as i64 * self.height() as i64
    }

    pub fn intersects(&self, other: &PixelRect) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }

    pub fn union(&self, other: &PixelRect) -> PixelRect {
        if self.area() == 0 {
            return *other;
        }
        if other.area() == 0 {
            return *self;
        }
        PixelRect {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    pub fn clipped(&self, w: usize, h: usize) -> PixelRect {
        PixelRect {
            x0: self.x0.clamp(0, w as i32),
            y0: self.y0.clamp(0, h as i32),
            x1: self.x1.clamp(0, w as i32),
            y1: self.y1.clamp(0, h as i32),
        }
    }

    pub fn fully_within(&self, w: usize, h: usize) -> bool {
        self.x0 >= 0 && self.y0 >= 0 && self.x1 <= w as i32 && self.y1 <= h as i32
    }

    pub fn scaled(&self, factor: f64) -> PixelRect {
        RectF::new(
            self.x0 as f64 * factor,
            self.y0 as f64 * factor,
            self.x1 as f64 * factor,
            self.y1 as f64 * factor,
        )
        .to_pixels()
    }
}

// ---------------------------------------------------------------------------
// Scene graph
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Rectangle {
        rect: RectF,
        fill: Rgb,
    },
    TextRun {
        text: String,
        /// Origin of the unrotated run (top-left); rotation pivots here.
        anchor: (f64, f64),
        font_size: f64,
        rotation_deg: f64,
        color: Rgb,
    },
    AxisLine {
        rect: RectF,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Bar,
    CategoryLabel,
    DataLabel,
    Axis,
}

/// One indexed chart element; the lookup structure metrics use in place of
/// compiled-SVG attribute matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementRecord {
    pub kind: ElementKind,
    pub category: Option<String>,
    pub bbox: PixelRect,
    pub text: Option<String>,
    /// Cap-height of the rendered font in pixels, for label records.
    pub glyph_height: Option<f64>,
    /// Flat fill colour the element was drawn with.
    pub fill: Rgb,
    /// For data labels: whether the label was moved inside the bar.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placed_inside: Option<bool>,
}

/// Ordered draw list plus the element index and any layout overflow notes.
/// Draw order is fixed: background, axes, bars, labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    pub width: u32,
    pub height: u32,
    pub primitives: Vec<Primitive>,
    pub elements: Vec<ElementRecord>,
    pub overflow: Vec<String>,
}

// ---------------------------------------------------------------------------
// Raster
// ---------------------------------------------------------------------------

/// Row-major 8-bit RGB pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pixels: Vec<Rgb>,
}

impl Raster {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        Raster {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        self.pixels[y * self.width + x] = c;
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = image::RgbImage::new(self.width as u32, self.height as u32);
        for y in 0..self.height {
            for x in 0..self.width {
                let c = self.get(x, y);
                buf.put_pixel(x as u32, y as u32, image::Rgb([c.r, c.g, c.b]));
            }
        }
        let mut out = std::io::Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderResult {
    pub raster: Raster,
    pub elements: Vec<ElementRecord>,
    pub overflow: Vec<String>,
}

// ---------------------------------------------------------------------------
// Layout
// ---------------------------------------------------------------------------

fn format_value(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.1}")
    }
}

/// AABB of a w x h box rotated by `deg` about the origin.
fn rotated_extent(w: f64, h: f64, deg: f64) -> (f64, f64, f64, f64) {
    let th = deg.to_radians();
    let (s, c) = (th.sin(), th.cos());
    let corners = [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)];
    let mut x0 = f64::INFINITY;
    let mut y0 = f64::INFINITY;
    let mut x1 = f64::NEG_INFINITY;
    let mut y1 = f64::NEG_INFINITY;
    for (dx, dy) in corners {
        let rx = dx * c - dy * s;
        let ry = dx * s + dy * c;
        x0 = x0.min(rx);
        y0 = y0.min(ry);
        x1 = x1.max(rx);
        y1 = y1.max(ry);
    }
    (x0, y0, x1, y1)
}

struct TextPlacement {
    anchor: (f64, f64),
    bbox: RectF,
}

/// Places a rotated text run so its AABB's top-left lands at (ax, ay).
fn place_rotated(text: &str, font_size: f64, deg: f64, ax: f64, ay: f64) -> TextPlacement {
    let w = text_width(text, font_size);
    let h = cap_height(font_size);
    let (mx0, my0, mx1, my1) = rotated_extent(w, h, deg);
    TextPlacement {
        anchor: (ax - mx0, ay - my0),
        bbox: RectF::new(ax, ay, ax + (mx1 - mx0), ay + (my1 - my0)),
    }
}

/// Compiles a validated spec into a scene graph. Bar lengths are linearly
/// proportional to value with zero mapping to zero length. Layout problems
/// (bars or mandatory labels that cannot fit) are reported as overflow notes,
/// not failures; the objective penalises them through legibility and density.
pub fn layout(spec: &ChartSpec) -> SceneGraph {
    let (w, h) = spec.canvas_size();
    let (wf, hf) = (w as f64, h as f64);
    let p = &spec.params;
    let mut prims = Vec::new();
    let mut elements = Vec::new();
    let mut overflow = Vec::new();

    let vmax = spec
        .table
        .rows
        .iter()
        .map(|r| r.value)
        .fold(0.0_f64, f64::max);
    let n = spec.table.rows.len();
    let gap = bar_gap(p.bar_width);
    let pitch = p.bar_width + gap;
    let block = n as f64 * p.bar_width + (n.saturating_sub(1)) as f64 * gap;

    let rot = p.label_rotation.degrees();
    let cat_rot_extent: Vec<(f64, f64)> = spec
        .table
        .rows
        .iter()
        .map(|r| {
            let (x0, y0, x1, y1) =
                rotated_extent(text_width(&r.category, p.axis_label_font_size), cap_height(p.axis_label_font_size), rot);
            (x1 - x0, y1 - y0)
        })
        .collect();

    let data_labels: Vec<String> = spec.table.rows.iter().map(|r| format_value(r.value)).collect();
    let data_h = cap_height(p.data_label_font_size);
    let max_data_w = data_labels
        .iter()
        .map(|t| text_width(t, p.data_label_font_size))
        .fold(0.0_f64, f64::max);

    let bar_fill = |cat: &str| -> Rgb {
        if spec.is_highlighted(cat) {
            p.highlight_color.to_rgb()
        } else {
            p.bar_color.to_rgb()
        }
    };

    match p.orientation {
        Orientation::Horizontal => {
            let gutter = cat_rot_extent.iter().map(|e| e.0).fold(0.0_f64, f64::max) + AXIS_LABEL_PAD;
            let axis_x = OUTER_MARGIN + gutter;
            let bars_x0 = axis_x + 1.0;
            let mut plot_len = (wf - OUTER_MARGIN) - bars_x0 - (max_data_w + DATA_LABEL_PAD);
            let mut labels_forced_inside = false;
            if plot_len < 1.0 {
                overflow.push("data labels do not fit beside bars".into());
                plot_len = ((wf - OUTER_MARGIN) - bars_x0).max(1.0);
                labels_forced_inside = true;
            }

            let avail_cross = hf - 2.0 * OUTER_MARGIN;
            if block > avail_cross {
                overflow.push(format!(
                    "bar block height {block:.1} exceeds available {avail_cross:.1}"
                ));
            }
            let y_start = OUTER_MARGIN + ((avail_cross - block) / 2.0).max(0.0);

            // axis line
            let axis_rect = RectF::new(axis_x, OUTER_MARGIN, axis_x + 1.0, hf - OUTER_MARGIN);
            prims.push(Primitive::AxisLine { rect: axis_rect });
            elements.push(ElementRecord {
                kind: ElementKind::Axis,
                category: None,
                bbox: axis_rect.to_pixels(),
                text: None,
                glyph_height: None,
                fill: BLACK,
                placed_inside: None,
            });

            for (i, row) in spec.table.rows.iter().enumerate() {
                let y0 = y_start + i as f64 * pitch;
                let y1 = y0 + p.bar_width;
                let len = if vmax > 0.0 && row.value > 0.0 {
                    (row.value / vmax * plot_len).max(1.0)
                } else {
                    0.0
                };
                let bar = RectF::new(bars_x0, y0, bars_x0 + len, y1);
                let fill = bar_fill(&row.category);
                prims.push(Primitive::Rectangle { rect: bar, fill });
                elements.push(ElementRecord {
                    kind: ElementKind::Bar,
                    category: Some(row.category.clone()),
                    bbox: bar.to_pixels(),
                    text: None,
                    glyph_height: None,
                    fill,
                    placed_inside: None,
                });

                // data label at the value end of the bar
                let dlw = text_width(&data_labels[i], p.data_label_font_size);
                let outside_x = bar.x1 + DATA_LABEL_PAD;
                let inside = labels_forced_inside || outside_x + dlw > wf - OUTER_MARGIN;
                let dx = if inside {
                    (bar.x1 - DATA_LABEL_PAD - dlw).max(bars_x0)
                } else {
                    outside_x
                };
                let dy = y0 + (p.bar_width - data_h) / 2.0;
                let dl = place_rotated(&data_labels[i], p.data_label_font_size, 0.0, dx, dy);
                prims.push(Primitive::TextRun {
                    text: data_labels[i].clone(),
                    anchor: dl.anchor,
                    font_size: p.data_label_font_size,
                    rotation_deg: 0.0,
                    color: BLACK,
                });
                elements.push(ElementRecord {
                    kind: ElementKind::DataLabel,
                    category: Some(row.category.clone()),
                    bbox: dl.bbox.to_pixels(),
                    text: Some(data_labels[i].clone()),
                    glyph_height: Some(data_h),
                    fill: BLACK,
                    placed_inside: Some(inside),
                });

                // category label right-aligned in the gutter
                let (rw, rh) = cat_rot_extent[i];
                let cl = place_rotated(
                    &row.category,
                    p.axis_label_font_size,
                    rot,
                    axis_x - AXIS_LABEL_PAD - rw,
                    y0 + (p.bar_width - rh) / 2.0,
                );
                prims.push(Primitive::TextRun {
                    text: row.category.clone(),
                    anchor: cl.anchor,
                    font_size: p.axis_label_font_size,
                    rotation_deg: rot,
                    color: BLACK,
                });
                elements.push(ElementRecord {
                    kind: ElementKind::CategoryLabel,
                    category: Some(row.category.clone()),
                    bbox: cl.bbox.to_pixels(),
                    text: Some(row.category.clone()),
                    glyph_height: Some(cap_height(p.axis_label_font_size)),
                    fill: BLACK,
                    placed_inside: None,
                });
            }
        }
        Orientation::Vertical => {
            let gutter = cat_rot_extent.iter().map(|e| e.1).fold(0.0_f64, f64::max) + AXIS_LABEL_PAD;
            let axis_y = hf - OUTER_MARGIN - gutter;
            let reserve_top = data_h + DATA_LABEL_PAD;
            let mut plot_len = axis_y - 1.0 - OUTER_MARGIN - reserve_top;
            let mut labels_forced_inside = false;
            if plot_len < 1.0 {
                overflow.push("data labels do not fit above bars".into());
                plot_len = (axis_y - 1.0 - OUTER_MARGIN).max(1.0);
                labels_forced_inside = true;
            }

            let avail_cross = wf - 2.0 * OUTER_MARGIN;
            if block > avail_cross {
                overflow.push(format!(
                    "bar block width {block:.1} exceeds available {avail_cross:.1}"
                ));
            }
            let x_start = OUTER_MARGIN + ((avail_cross - block) / 2.0).max(0.0);

            let axis_rect = RectF::new(OUTER_MARGIN, axis_y, wf - OUTER_MARGIN, axis_y + 1.0);
            prims.push(Primitive::AxisLine { rect: axis_rect });
            elements.push(ElementRecord {
                kind: ElementKind::Axis,
                category: None,
                bbox: axis_rect.to_pixels(),
                text: None,
                glyph_height: None,
                fill: BLACK,
                placed_inside: None,
            });

            for (i, row) in spec.table.rows.iter().enumerate() {
                let x0 = x_start + i as f64 * pitch;
                let x1 = x0 + p.bar_width;
                let len = if vmax > 0.0 && row.value > 0.0 {
                    (row.value / vmax * plot_len).max(1.0)
                } else {
                    0.0
                };
                let bar = RectF::new(x0, axis_y - len, x1, axis_y);
                let fill = bar_fill(&row.category);
                prims.push(Primitive::Rectangle { rect: bar, fill });
                elements.push(ElementRecord {
                    kind: ElementKind::Bar,
                    category: Some(row.category.clone()),
                    bbox: bar.to_pixels(),
                    text: None,
                    glyph_height: None,
                    fill,
                    placed_inside: None,
                });

                let dlw = text_width(&data_labels[i], p.data_label_font_size);
                let outside_y = bar.y0 - DATA_LABEL_PAD - data_h;
                let inside = labels_forced_inside || outside_y < OUTER_MARGIN;
                let dy = if inside {
                    bar.y0 + DATA_LABEL_PAD
                } else {
                    outside_y
                };
                let dx = x0 + (p.bar_width - dlw) / 2.0;
                let dl = place_rotated(&data_labels[i], p.data_label_font_size, 0.0, dx, dy);
                prims.push(Primitive::TextRun {
                    text: data_labels[i].clone(),
                    anchor: dl.anchor,
                    font_size: p.data_label_font_size,
                    rotation_deg: 0.0,
                    color: BLACK,
                });
                elements.push(ElementRecord {
                    kind: ElementKind::DataLabel,
                    category: Some(row.category.clone()),
                    bbox: dl.bbox.to_pixels(),
                    text: Some(data_labels[i].clone()),
                    glyph_height: Some(data_h),
                    fill: BLACK,
                    placed_inside: Some(inside),
                });

                let (rw, rh) = cat_rot_extent[i];
                let cl = place_rotated(
                    &row.category,
                    p.axis_label_font_size,
                    rot,
                    x0 + (p.bar_width - rw) / 2.0,
                    axis_y + AXIS_LABEL_PAD,
                );
                let _ = rh;
                prims.push(Primitive::TextRun {
                    text: row.category.clone(),
                    anchor: cl.anchor,
                    font_size: p.axis_label_font_size,
                    rotation_deg: rot,
                    color: BLACK,
                });
                elements.push(ElementRecord {
                    kind: ElementKind::CategoryLabel,
                    category: Some(row.category.clone()),
                    bbox: cl.bbox.to_pixels(),
                    text: Some(row.category.clone()),
                    glyph_height: Some(cap_height(p.axis_label_font_size)),
                    fill: BLACK,
                    placed_inside: None,
                });
            }
        }
    }

    for e in &elements {
        if !e.bbox.fully_within(w as usize, h as usize) {
            overflow.push(format!(
                "{:?} {:?} extends outside the canvas",
                e.kind,
                e.category.as_deref().unwrap_or("")
            ));
        }
    }

    SceneGraph {
        width: w,
        height: h,
        primitives: prims,
        elements,
        overflow,
    }
}

// ---------------------------------------------------------------------------
// Rasterisation
// ---------------------------------------------------------------------------

fn fill_rect(raster: &mut Raster, rect: &RectF, color: Rgb) {
    let x0 = rect.x0.round().max(0.0) as usize;
    let y0 = rect.y0.round().max(0.0) as usize;
    let x1 = (rect.x1.round().max(0.0) as usize).min(raster.width);
    let y1 = (rect.y1.round().max(0.0) as usize).min(raster.height);
    for y in y0..y1 {
        for x in x0..x1 {
            raster.set(x, y, color);
        }
    }
}

/// Fills the glyph boxes of a text run. Rotation pivots at the run anchor;
/// rotated glyph quads are filled by an inverse-rotation pixel-centre test.
fn fill_text(raster: &mut Raster, text: &str, anchor: (f64, f64), font_size: f64, deg: f64, color: Rgb) {
    let adv = GLYPH_ADVANCE_RATIO * font_size;
    let cap = cap_height(font_size);
    let th = deg.to_radians();
    let (s, c) = (th.sin(), th.cos());
    for (i, ch) in text.chars().enumerate() {
        if ch.is_whitespace() {
            continue;
        }
        let gx0 = i as f64 * adv;
        let gx1 = gx0 + adv;
        if deg == 0.0 {
            fill_rect(
                raster,
                &RectF::new(anchor.0 + gx0, anchor.1, anchor.0 + gx1, anchor.1 + cap),
                color,
            );
            continue;
        }
        // AABB of the rotated glyph box, then point-in-box via inverse rotation
        let mut bx0 = f64::INFINITY;
        let mut by0 = f64::INFINITY;
        let mut bx1 = f64::NEG_INFINITY;
        let mut by1 = f64::NEG_INFINITY;
        for (dx, dy) in [(gx0, 0.0), (gx1, 0.0), (gx0, cap), (gx1, cap)] {
            let rx = anchor.0 + dx * c - dy * s;
            let ry = anchor.1 + dx * s + dy * c;
            bx0 = bx0.min(rx);
            by0 = by0.min(ry);
            bx1 = bx1.max(rx);
            by1 = by1.max(ry);
        }
        let px0 = bx0.floor().max(0.0) as usize;
        let py0 = by0.floor().max(0.0) as usize;
        let px1 = (bx1.ceil().max(0.0) as usize).min(raster.width);
        let py1 = (by1.ceil().max(0.0) as usize).min(raster.height);
        for py in py0..py1 {
            for px in px0..px1 {
                let dx = px as f64 + 0.5 - anchor.0;
                let dy = py as f64 + 0.5 - anchor.1;
                // inverse rotation
                let ux = dx * c + dy * s;
                let uy = -dx * s + dy * c;
                if ux >= gx0 && ux < gx1 && uy >= 0.0 && uy < cap {
                    raster.set(px, py, color);
                }
            }
        }
    }
}

thread_local! {
    /// Per-thread rasterise call count; evaluation tests assert on
    /// exactly-once rendering.
    pub static RENDER_CALLS: std::cell::Cell<u64> = const { std::cell::Cell::new(0) };
}

/// Pure function of (scene, w, h): identical scenes produce bit-identical
/// rasters. The background initialises to pure white; drawing outside the
/// canvas is clipped silently (layout already reported the overflow).
pub fn rasterise(scene: &SceneGraph, width: u32, height: u32) -> RenderResult {
    RENDER_CALLS.with(|c| c.set(c.get() + 1));
    let mut raster = Raster::new(width as usize, height as usize, WHITE);
    for prim in &scene.primitives {
        match prim {
            Primitive::AxisLine { rect } => fill_rect(&mut raster, rect, BLACK),
            Primitive::Rectangle { rect, fill } => fill_rect(&mut raster, rect, *fill),
            Primitive::TextRun { .. } => {}
        }
    }
    // labels draw last
    for prim in &scene.primitives {
        if let Primitive::TextRun {
            text,
            anchor,
            font_size,
            rotation_deg,
            color,
        } = prim
        {
            fill_text(&mut raster, text, *anchor, *font_size, *rotation_deg, *color);
        }
    }
    RenderResult {
        raster,
        elements: scene.elements.clone(),
        overflow: scene.overflow.clone(),
    }
}

/// Renders a validated spec end to end.
pub fn render(spec: &ChartSpec) -> RenderResult {
    let scene = layout(spec);
    rasterise(&scene, scene.width, scene.height)
}

// ---------------------------------------------------------------------------
// Image pyramid
// ---------------------------------------------------------------------------

/// Area-averaging downsample to `round(factor * original)` per axis.
pub fn downsample(src: &Raster, factor: f64) -> Result<Raster> {
    let dw = (src.width as f64 * factor).round() as usize;
    let dh = (src.height as f64 * factor).round() as usize;
    if dw == 0 || dh == 0 {
        return Err(Error::DegeneratePyramidLevel { factor });
    }
    let mut out = Raster::new(dw, dh, WHITE);
    let sx = src.width as f64 / dw as f64;
    let sy = src.height as f64 / dh as f64;
    for j in 0..dh {
        let y_lo = j as f64 * sy;
        let y_hi = (j + 1) as f64 * sy;
        for i in 0..dw {
            let x_lo = i as f64 * sx;
            let x_hi = (i + 1) as f64 * sx;
            let (mut r, mut g, mut b, mut area) = (0.0, 0.0, 0.0, 0.0);
            let yy0 = y_lo.floor() as usize;
            let yy1 = (y_hi.ceil() as usize).min(src.height);
            let xx0 = x_lo.floor() as usize;
            let xx1 = (x_hi.ceil() as usize).min(src.width);
            for y in yy0..yy1 {
                let cov_y = (y_hi.min((y + 1) as f64) - y_lo.max(y as f64)).max(0.0);
                for x in xx0..xx1 {
                    let cov = cov_y * (x_hi.min((x + 1) as f64) - x_lo.max(x as f64)).max(0.0);
                    let px = src.get(x, y);
                    r += cov * px.r as f64;
                    g += cov * px.g as f64;
                    b += cov * px.b as f64;
                    area += cov;
                }
            }
            out.set(
                i,
                j,
                Rgb::new(
                    (r / area).round() as u8,
                    (g / area).round() as u8,
                    (b / area).round() as u8,
                ),
            );
        }
    }
    Ok(out)
}

pub fn pyramid(render: &RenderResult, factors: &[f64]) -> Result<Vec<Raster>> {
    factors
        .iter()
        .map(|&f| downsample(&render.raster, f))
        .collect()
}

// ---------------------------------------------------------------------------
// Task areas of interest
// ---------------------------------------------------------------------------

fn find_element<'a>(
    render: &'a RenderResult,
    kind: ElementKind,
    category: &str,
) -> Option<&'a ElementRecord> {
    render
        .elements
        .iter()
        .find(|e| e.kind == kind && e.category.as_deref() == Some(category))
}

/// Task AOIs: for RV/CDV/CP, each target bar unioned with its data label;
/// for FE, the extremum bar (derived from the table when no explicit target
/// is given) unioned with its category label, since answering FE requires
/// reading the category name.
pub fn task_aois(render: &RenderResult, task: &TaskSpec, table: &DataTable) -> Result<Vec<PixelRect>> {
    let union_of = |category: &str, label_kind: ElementKind| -> Result<PixelRect> {
        let bar = find_element(render, ElementKind::Bar, category)
            .ok_or_else(|| Error::MissingTargetElement(category.to_string()))?;
        let label = find_element(render, label_kind, category)
            .ok_or_else(|| Error::MissingTargetElement(category.to_string()))?;
        Ok(bar.bbox.union(&label.bbox))
    };
    match task.task_type {
        TaskType::FE => {
            let category = if let Some(t) = task.targets.first() {
                t.clone()
            } else {
                let idx = table
                    .argmax()
                    .ok_or_else(|| Error::MissingTargetElement("<extremum>".into()))?;
                table.rows[idx].category.clone()
            };
            Ok(vec![union_of(&category, ElementKind::CategoryLabel)?])
        }
        TaskType::RV | TaskType::CDV | TaskType::CP => task
            .targets
            .iter()
            .map(|t| union_of(t, ElementKind::DataLabel))
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// SVG export
// ---------------------------------------------------------------------------

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Vector export. Every bar and label carries a `data-category` attribute so
/// task regions stay machine-locatable in the vector output.
pub fn to_svg(scene: &SceneGraph) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        scene.width, scene.height, scene.width, scene.height
    ));
    out.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n",
        scene.width, scene.height
    ));
    // element categories line up with primitives through a parallel walk
    let mut elem_iter = scene.elements.iter();
    for prim in &scene.primitives {
        let elem = elem_iter.next();
        match prim {
            Primitive::AxisLine { rect } => {
                out.push_str(&format!(
                    "  <rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#000000\"/>\n",
                    rect.x0,
                    rect.y0,
                    rect.width(),
                    rect.height()
                ));
            }
            Primitive::Rectangle { rect, fill } => {
                let cat = elem
                    .and_then(|e| e.category.as_deref())
                    .map(|c| format!(" data-category=\"{}\"", xml_escape(c)))
                    .unwrap_or_default();
                out.push_str(&format!(
                    "  <rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"{}/>\n",
                    rect.x0,
                    rect.y0,
                    rect.width(),
                    rect.height(),
                    fill.to_hex(),
                    cat
                ));
            }
            Primitive::TextRun {
                text,
                anchor,
                font_size,
                rotation_deg,
                color,
            } => {
                let cat = elem
                    .and_then(|e| e.category.as_deref())
                    .map(|c| format!(" data-category=\"{}\"", xml_escape(c)))
                    .unwrap_or_default();
                let transform = if *rotation_deg != 0.0 {
                    format!(
                        " transform=\"rotate({:.1} {:.2} {:.2})\"",
                        rotation_deg, anchor.0, anchor.1
                    )
                } else {
                    String::new()
                };
                // dominant-baseline hanging: y anchors the top, like the raster model
                out.push_str(&format!(
                    "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"{:.1}\" font-family=\"monospace\" dominant-baseline=\"hanging\" fill=\"{}\"{}{}>{}</text>\n",
                    anchor.0,
                    anchor.1,
                    font_size,
                    color.to_hex(),
                    transform,
                    cat,
                    xml_escape(text)
                ));
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Draws 2 px AOI outlines onto a copy of the raster, for inspection output.
pub fn overlay_aois(render: &RenderResult, aois: &[PixelRect]) -> Raster {
    let mut out = render.raster.clone();
    let accent = Rgb::new(255, 0, 0);
    for aoi in aois {
        let r = aoi.clipped(out.width, out.height);
        for t in 0..2i32 {
            for x in r.x0..r.x1 {
                for y in [r.y0 + t, r.y1 - 1 - t] {
                    if y >= 0 && (y as usize) < out.height {
                        out.set(x as usize, y as usize, accent);
                    }
                }
            }
            for y in r.y0..r.y1 {
                for x in [r.x0 + t, r.x1 - 1 - t] {
                    if x >= 0 && (x as usize) < out.width {
                        out.set(x as usize, y as usize, accent);
                    }
                }
            }
        }
    }
    out
}
