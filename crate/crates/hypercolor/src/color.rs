//! Color spaces and conversions.
//!
//! Clouds store colors in unit-scale sRGB internally; 0-255 appears only at
//! file boundaries and in evaluation reports. Stage-2 training runs in
//! CIELAB, rescaled so every channel lives in [0, 1]:
//! `L/100, (a+128)/255, (b+128)/255`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Which space (and scale) a color matrix is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorSpaceTag {
    /// sRGB, each channel in [0, 1].
    RgbUnit,
    /// sRGB, each channel in [0, 255].
    Rgb255,
    /// CIELAB under D65, rescaled to [0, 1] per channel.
    Lab,
}

const D65: [f64; 3] = [0.950_47, 1.0, 1.088_83];

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA {
        t * t * t
    } else {
        3.0 * DELTA * DELTA * (t - 4.0 / 29.0)
    }
}

/// Unit sRGB triple to (L, a, b) in the conventional ranges
/// (L in [0, 100], a/b roughly [-128, 127]).
pub fn rgb_unit_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let r = srgb_to_linear(rgb[0]);
    let g = srgb_to_linear(rgb[1]);
    let b = srgb_to_linear(rgb[2]);
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let fx = lab_f(x / D65[0]);
    let fy = lab_f(y / D65[1]);
    let fz = lab_f(z / D65[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Inverse of [`rgb_unit_to_lab`]. Output is not clamped.
pub fn lab_to_rgb_unit(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let x = D65[0] * lab_f_inv(fx);
    let y = D65[1] * lab_f_inv(fy);
    let z = D65[2] * lab_f_inv(fz);
    let r = 3.240_454_2 * x - 1.537_138_5 * y - 0.498_531_4 * z;
    let g = -0.969_266_0 * x + 1.876_010_8 * y + 0.041_556_0 * z;
    let b = 0.055_643_4 * x - 0.204_025_9 * y + 1.057_225_2 * z;
    [linear_to_srgb(r), linear_to_srgb(g), linear_to_srgb(b)]
}

fn to_unit(c: [f64; 3], from: ColorSpaceTag) -> [f64; 3] {
    match from {
        ColorSpaceTag::RgbUnit => c,
        ColorSpaceTag::Rgb255 => [c[0] / 255.0, c[1] / 255.0, c[2] / 255.0],
        ColorSpaceTag::Lab => lab_to_rgb_unit([c[0] * 100.0, c[1] * 255.0 - 128.0, c[2] * 255.0 - 128.0]),
    }
}

fn from_unit(c: [f64; 3], to: ColorSpaceTag) -> [f64; 3] {
    match to {
        ColorSpaceTag::RgbUnit => c,
        ColorSpaceTag::Rgb255 => [c[0] * 255.0, c[1] * 255.0, c[2] * 255.0],
        ColorSpaceTag::Lab => {
            let lab = rgb_unit_to_lab(c);
            [lab[0] / 100.0, (lab[1] + 128.0) / 255.0, (lab[2] + 128.0) / 255.0]
        }
    }
}

fn declared_range(tag: ColorSpaceTag) -> (f64, f64) {
    match tag {
        ColorSpaceTag::RgbUnit | ColorSpaceTag::Lab => (0.0, 1.0),
        ColorSpaceTag::Rgb255 => (0.0, 255.0),
    }
}

/// Converts an `N x 3` color matrix between spaces.
///
/// Inputs outside the declared range of `from` are clamped first; the number
/// of clamped scalars is returned alongside the result so callers can flag it.
pub fn rgb_lab_convert(
    colors: &Array2<f64>,
    from: ColorSpaceTag,
    to: ColorSpaceTag,
) -> (Array2<f64>, usize) {
    let (lo, hi) = declared_range(from);
    let mut clamped = 0usize;
    let mut out = Array2::zeros(colors.dim());
    for (i, row) in colors.rows().into_iter().enumerate() {
        let mut c = [row[0], row[1], row[2]];
        for v in &mut c {
            if *v < lo || *v > hi {
                *v = v.clamp(lo, hi);
                clamped += 1;
            }
        }
        let converted = from_unit(to_unit(c, from), to);
        for (j, v) in converted.into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    (out, clamped)
}
