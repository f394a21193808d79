//! The four perceptual metrics over a rendered chart: white-space ratio with
//! its reference-band penalty, colour preference against a WAVE anchor table,
//! task saliency over AOIs, and pyramid-based text legibility.

use crate::color::{lab_distance, Lab, Rgb, WHITE};
use crate::error::{Error, Result};
use crate::render::{ElementKind, PixelRect, RenderResult};
use std::collections::BTreeMap;
use std::path::PathBuf;

/// Reference white-space-ratio distribution from human-crafted charts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WsrReference {
    pub mu: f64,
    pub sigma: f64,
}

impl Default for WsrReference {
    fn default() -> Self {
        WsrReference {
            mu: 0.496,
            sigma: 0.263,
        }
    }
}

/// Fraction of pixels exactly equal to #FFFFFF.
pub fn white_space_ratio(render: &RenderResult) -> f64 {
    let total = render.raster.pixels().len();
    if total == 0 {
        return 1.0;
    }
    let white = render.raster.pixels().iter().filter(|&&p| p == WHITE).count();
    white as f64 / total as f64
}

/// Zero inside the open band (mu - sigma, mu + sigma), otherwise the negative
/// absolute deviation from mu.
pub fn wsr_penalty(wsr: f64, reference: &WsrReference) -> f64 {
    if wsr > reference.mu - reference.sigma && wsr < reference.mu + reference.sigma {
        0.0
    } else {
        -(wsr - reference.mu).abs()
    }
}

// ---------------------------------------------------------------------------
// Colour preference (WAVE)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct WaveAnchor {
    pub color: Rgb,
    pub valence: f64,
}

/// Colour-valence anchor table. Treated as opaque calibration data so that
/// alternate tables can be swapped in from a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveTable {
    pub anchors: Vec<WaveAnchor>,
    pub source_id: String,
}

const BUILTIN_WAVE_CSV: &str = include_str!("../data/wave_anchors_v1.csv");
pub const BUILTIN_WAVE_SOURCE_ID: &str = "wave_anchors_v1";

impl WaveTable {
    pub fn from_csv_str(data: &str, source_id: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(data.as_bytes());
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["r", "g", "b", "valence"] {
            return Err(Error::WaveTable(format!(
                "expected header r,g,b,valence; got {headers:?}"
            )));
        }
        let mut anchors = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::WaveTable(format!("bad row {rec:?}")))
            };
            let (r, g, b, v) = (parse(0)?, parse(1)?, parse(2)?, parse(3)?);
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::WaveTable(format!("valence {v} outside [0, 1]")));
            }
            anchors.push(WaveAnchor {
                color: Rgb::new(r as u8, g as u8, b as u8),
                valence: v,
            });
        }
        if anchors.len() < 8 {
            return Err(Error::WaveTable(format!(
                "need at least 8 anchors, got {}",
                anchors.len()
            )));
        }
        Ok(WaveTable {
            anchors,
            source_id: source_id.to_string(),
        })
    }

    pub fn from_csv_path(path: &std::path::Path) -> Result<Self> {
        let data = std::fs::read_to_string(path)?;
        Self::from_csv_str(&data, &path.display().to_string())
    }

    /// The shipped 32-anchor table (8 hues x 4 cuts).
    pub fn builtin() -> Self {
        Self::from_csv_str(BUILTIN_WAVE_CSV, BUILTIN_WAVE_SOURCE_ID)
            .expect("builtin WAVE table is well-formed")
    }

    /// Valence of the nearest anchor in L*a*b*; ties break to the lowest row.
    pub fn nearest_valence(&self, color: Rgb) -> f64 {
        let lab = Lab::from_rgb(color);
        let mut best = (f64::INFINITY, 0.0);
        for a in &self.anchors {
            let d = lab.distance(Lab::from_rgb(a.color));
            if d < best.0 {
                best = (d, a.valence);
            }
        }
        best.1
    }
}

/// Area-weighted mean valence over non-background pixels, each pixel scored
/// by its nearest anchor. Background (pure white) carries no affective
/// signal and is excluded.
pub fn wave_score(render: &RenderResult, table: &WaveTable) -> Result<f64> {
    // ordered so the float accumulation below is deterministic
    let mut histogram: BTreeMap<(u8, u8, u8), u64> = BTreeMap::new();
    for &px in render.raster.pixels() {
        if px != WHITE {
            *histogram.entry((px.r, px.g, px.b)).or_insert(0) += 1;
        }
    }
    if histogram.is_empty() {
        return Err(Error::EmptyForeground);
    }
    let mut weighted = 0.0;
    let mut total = 0u64;
    for ((r, g, b), count) in histogram {
        weighted += table.nearest_valence(Rgb::new(r, g, b)) * count as f64;
        total += count;
    }
    Ok(weighted / total as f64)
}

// ---------------------------------------------------------------------------
// Saliency
// ---------------------------------------------------------------------------

/// Per-pixel saliency grid matching the raster dimensions, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl SaliencyMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        SaliencyMap {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    fn set_max(&mut self, x: usize, y: usize, v: f64) {
        let cell = &mut self.values[y * self.width + x];
        if v > *cell {
            *cell = v;
        }
    }
}

/// Width of the surround ring used by the contrast proxy.
pub const SALIENCY_RING_PX: i32 = 20;

/// Deterministic contrast proxy: each element's saliency is the perceptual
/// colour distance between its fill and the mean colour of a 20 px surround
/// ring, constant over the element bbox, zero on background, with the global
/// maximum normalised to 1.
pub fn proxy_saliency(render: &RenderResult) -> SaliencyMap {
    let (w, h) = (render.raster.width, render.raster.height);
    let mut map = SaliencyMap::zeros(w, h);
    let mut raw: Vec<(PixelRect, f64)> = Vec::new();
    let mut max_raw = 0.0_f64;

    for elem in &render.elements {
        let bbox = elem.bbox.clipped(w, h);
        if bbox.area() == 0 {
            continue;
        }
        let ring = PixelRect {
            x0: bbox.x0 - SALIENCY_RING_PX,
            y0: bbox.y0 - SALIENCY_RING_PX,
            x1: bbox.x1 + SALIENCY_RING_PX,
            y1: bbox.y1 + SALIENCY_RING_PX,
        }
        .clipped(w, h);
        let (mut r, mut g, mut b, mut n) = (0.0, 0.0, 0.0, 0u64);
        for y in ring.y0..ring.y1 {
            for x in ring.x0..ring.x1 {
                if x >= bbox.x0 && x < bbox.x1 && y >= bbox.y0 && y < bbox.y1 {
                    continue;
                }
                let px = render.raster.get(x as usize, y as usize);
                r += px.r as f64;
                g += px.g as f64;
                b += px.b as f64;
                n += 1;
            }
        }
        let surround = if n == 0 {
            WHITE
        } else {
            Rgb::new(
                (r / n as f64).round() as u8,
                (g / n as f64).round() as u8,
                (b / n as f64).round() as u8,
            )
        };
        let d = lab_distance(elem.fill, surround);
        max_raw = max_raw.max(d);
        raw.push((bbox, d));
    }

    if max_raw > 0.0 {
        for (bbox, d) in raw {
            let v = d / max_raw;
            for y in bbox.y0..bbox.y1 {
                for x in bbox.x0..bbox.x1 {
                    map.set_max(x as usize, y as usize, v);
                }
            }
        }
    }
    map
}

/// How saliency maps are produced for an evaluation.
#[derive(Debug, Clone)]
pub enum SaliencyProvider {
    /// Built-in deterministic contrast proxy.
    Proxy,
    /// Precomputed greyscale PNGs named `<chart_id>.<task_id>.png`.
    FileBacked { dir: PathBuf },
}

impl SaliencyProvider {
    pub fn saliency(
        &self,
        render: &RenderResult,
        key: Option<(&str, &str)>,
    ) -> Result<SaliencyMap> {
        match self {
            SaliencyProvider::Proxy => Ok(proxy_saliency(render)),
            SaliencyProvider::FileBacked { dir } => {
                let (chart_id, task_id) = key.ok_or_else(|| Error::Ingest {
                    path: dir.display().to_string(),
                    message: "file-backed saliency requires a chart id and task id".into(),
                })?;
                let path = dir.join(format!("{chart_id}.{task_id}.png"));
                load_saliency_png(&path, render.raster.width, render.raster.height)
            }
        }
    }
}

/// Loads a greyscale 8-bit PNG of the exact render dimensions; intensities
/// map linearly to [0, 1].
pub fn load_saliency_png(path: &std::path::Path, want_w: usize, want_h: usize) -> Result<SaliencyMap> {
    let img = image::open(path)?.into_luma8();
    let (gw, gh) = (img.width() as usize, img.height() as usize);
    if (gw, gh) != (want_w, want_h) {
        return Err(Error::SaliencySize {
            got_w: gw,
            got_h: gh,
            want_w,
            want_h,
        });
    }
    Ok(SaliencyMap {
        width: gw,
        height: gh,
        values: img.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
    })
}

/// Mean saliency over the union of AOI pixels, excluding pixels whose value
/// is exactly zero. Returns `(mean, degenerate)`; degenerate is set when
/// every AOI pixel is zero, in which case the mean is defined as 0.
pub fn task_saliency(map: &SaliencyMap, aois: &[PixelRect]) -> Result<(f64, bool)> {
    if aois.is_empty() {
        return Err(Error::AoiOutOfBounds("empty AOI list".into()));
    }
    for aoi in aois {
        if !aoi.fully_within(map.width, map.height) {
            return Err(Error::AoiOutOfBounds(format!("{aoi:?}")));
        }
    }
    let mut visited = vec![false; map.width * map.height];
    let mut sum = 0.0;
    let mut count = 0u64;
    for aoi in aois {
        for y in aoi.y0..aoi.y1 {
            for x in aoi.x0..aoi.x1 {
                let idx = y as usize * map.width + x as usize;
                if visited[idx] {
                    continue;
                }
                visited[idx] = true;
                let v = map.values[idx];
                if v != 0.0 {
                    sum += v;
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        Ok((0.0, true))
    } else {
        Ok((sum / count as f64, false))
    }
}

// ---------------------------------------------------------------------------
// Text legibility
// ---------------------------------------------------------------------------

pub const DEFAULT_PYRAMID_FACTORS: [f64; 3] = [1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0];
pub const DEFAULT_LEGIBILITY_THRESHOLD_PX: f64 = 5.0;

fn is_label(kind: ElementKind) -> bool {
    matches!(kind, ElementKind::CategoryLabel | ElementKind::DataLabel)
}

/// Geometric legibility over a pyramid of scales: a label counts as detected
/// at a level iff its scaled cap-height clears the threshold, its scaled
/// bbox lies fully within the scaled canvas, and it overlaps no other label.
/// Score = detected / (levels x labels).
pub fn text_legibility(render: &RenderResult, factors: &[f64], threshold_px: f64) -> Result<f64> {
    let labels: Vec<_> = render
        .elements
        .iter()
        .filter(|e| is_label(e.kind))
        .collect();
    let m = labels.len();
    if m == 0 {
        return Err(Error::NoLabels);
    }
    let (w, h) = (render.raster.width, render.raster.height);
    let mut detected = 0u64;
    for &factor in factors {
        let lw = (w as f64 * factor).round() as usize;
        let lh = (h as f64 * factor).round() as usize;
        if lw == 0 || lh == 0 {
            return Err(Error::DegeneratePyramidLevel { factor });
        }
        let scaled: Vec<PixelRect> = labels.iter().map(|e| e.bbox.scaled(factor)).collect();
        for (i, label) in labels.iter().enumerate() {
            let glyph_h = label.glyph_height.unwrap_or(0.0) * factor;
            if glyph_h < threshold_px {
                continue;
            }
            if !scaled[i].fully_within(lw, lh) {
                continue;
            }
            let overlaps = scaled
                .iter()
                .enumerate()
                .any(|(j, r)| j != i && r.intersects(&scaled[i]));
            if overlaps {
                continue;
            }
            detected += 1;
        }
    }
    Ok(detected as f64 / (factors.len() as f64 * m as f64))
}
