//! Colour representations and conversions: HSV, 8-bit sRGB, hex parsing,
//! and CIE 1976 L*a*b* under D65 for perceptual colour distance.

use serde::{Deserialize, Serialize};

/// 8-bit sRGB colour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

pub const WHITE: Rgb = Rgb {
    r: 255,
    g: 255,
    b: 255,
};
pub const BLACK: Rgb = Rgb { r: 0, g: 0, b: 0 };

impl Rgb {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Rgb { r, g, b }
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let s = s.strip_prefix('#').unwrap_or(s);
        if s.len() != 6 {
            return None;
        }
        let v = u32::from_str_radix(s, 16).ok()?;
        Some(Rgb::new((v >> 16) as u8, (v >> 8) as u8, v as u8))
    }

    pub fn to_hex(self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.r, self.g, self.b)
    }
}

/// HSV colour: hue in degrees [0, 360), saturation and value in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hsv {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

impl Hsv {
    pub fn new(h: f64, s: f64, v: f64) -> Self {
        Hsv { h, s, v }
    }

    pub fn to_rgb(self) -> Rgb {
        let h = self.h.rem_euclid(360.0);
        let c = self.v * self.s;
        let hp = h / 60.0;
        let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
        let (r1, g1, b1) = match hp as u32 {
            0 => (c, x, 0.0),
            1 => (x, c, 0.0),
            2 => (0.0, c, x),
            3 => (0.0, x, c),
            4 => (x, 0.0, c),
            _ => (c, 0.0, x),
        };
        let m = self.v - c;
        let q = |t: f64| ((t + m) * 255.0).round().clamp(0.0, 255.0) as u8;
        Rgb::new(q(r1), q(g1), q(b1))
    }

    /// Standard max/min-channel conversion, kept at full real precision.
    pub fn from_rgb(rgb: Rgb) -> Self {
        let r = rgb.r as f64 / 255.0;
        let g = rgb.g as f64 / 255.0;
        let b = rgb.b as f64 / 255.0;
        let max = r.max(g).max(b);
        let min = r.min(g).min(b);
        let d = max - min;
        let h = if d == 0.0 {
            0.0
        } else if max == r {
            60.0 * ((g - b) / d).rem_euclid(6.0)
        } else if max == g {
            60.0 * ((b - r) / d + 2.0)
        } else {
            60.0 * ((r - g) / d + 4.0)
        };
        let s = if max == 0.0 { 0.0 } else { d / max };
        Hsv::new(h, s, max)
    }
}

/// CIE L*a*b* coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

fn srgb_linearise(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

// D65 reference white.
const XN: f64 = 0.95047;
const YN: f64 = 1.0;
const ZN: f64 = 1.08883;

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

impl Lab {
    pub fn from_rgb(rgb: Rgb) -> Self {
        let r = srgb_linearise(rgb.r);
        let g = srgb_linearise(rgb.g);
        let b = srgb_linearise(rgb.b);
        // sRGB -> XYZ (D65)
        let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
        let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
        let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
        let fx = lab_f(x / XN);
        let fy = lab_f(y / YN);
        let fz = lab_f(z / ZN);
        Lab {
            l: 116.0 * fy - 16.0,
            a: 500.0 * (fx - fy),
            b: 200.0 * (fy - fz),
        }
    }

    pub fn distance(self, other: Lab) -> f64 {
        let dl = self.l - other.l;
        let da = self.a - other.a;
        let db = self.b - other.b;
        (dl * dl + da * da + db * db).sqrt()
    }
}

/// Euclidean distance between two sRGB colours in L*a*b*.
pub fn lab_distance(a: Rgb, b: Rgb) -> f64 {
    Lab::from_rgb(a).distance(Lab::from_rgb(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_round_trip() {
        let c = Rgb::from_hex("#949d48").unwrap();
        assert_eq!(c, Rgb::new(0x94, 0x9d, 0x48));
        assert_eq!(c.to_hex(), "#949d48");
        assert!(Rgb::from_hex("zz").is_none());
    }

    #[test]
    fn hsv_round_trip_on_default_bar_colour() {
        let c = Rgb::from_hex("#949d48").unwrap();
        let hsv = Hsv::from_rgb(c);
        assert_eq!(hsv.to_rgb(), c);
        // olive-green: hue in the yellow-green range, moderate saturation
        assert!(hsv.h > 60.0 && hsv.h < 90.0, "h = {}", hsv.h);
        assert!(hsv.s > 0.4 && hsv.s < 0.6);
    }

    #[test]
    fn hsv_primaries() {
        assert_eq!(Hsv::new(0.0, 1.0, 1.0).to_rgb(), Rgb::new(255, 0, 0));
        assert_eq!(Hsv::new(120.0, 1.0, 1.0).to_rgb(), Rgb::new(0, 255, 0));
        assert_eq!(Hsv::new(240.0, 1.0, 1.0).to_rgb(), Rgb::new(0, 0, 255));
        assert_eq!(Hsv::new(0.0, 0.0, 1.0).to_rgb(), WHITE);
    }

    #[test]
    fn lab_of_white_and_black() {
        let w = Lab::from_rgb(WHITE);
        assert!((w.l - 100.0).abs() < 1e-3);
        assert!(w.a.abs() < 1e-2 && w.b.abs() < 1e-2);
        let k = Lab::from_rgb(BLACK);
        assert!(k.l.abs() < 1e-6);
        assert!(lab_distance(WHITE, BLACK) > 99.0);
    }

    #[test]
    fn lab_distance_symmetric_and_zero_on_equal() {
        let a = Rgb::new(10, 200, 50);
        let b = Rgb::new(240, 20, 80);
        assert_eq!(lab_distance(a, a), 0.0);
        assert!((lab_distance(a, b) - lab_distance(b, a)).abs() < 1e-12);
    }
}
