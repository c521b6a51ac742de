//! Oriented binary corner features and ratio-test matching.
//!
//! FAST-9 corners on a √2 image pyramid, intensity-centroid orientation and
//! rotated 256-bit intensity-comparison descriptors on a box-blurred image.

use std::sync::OnceLock;

use image::imageops::{self, FilterType};
use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::media::Raster;

pub const FAST_THRESHOLD: i16 = 20;
pub const MAX_KEYPOINTS: usize = 500;
pub const RATIO_TEST: f64 = 0.75;
const LEVELS: usize = 5;
const BORDER: i32 = 19;
const PATCH_RADIUS: i32 = 15;
const PAIR_RADIUS: f64 = 13.0;

const CIRCLE: [(i32, i32); 16] = [
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: i32,
    pub y: i32,
    pub level: usize,
    pub angle: f64,
    pub score: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<[u64; 4]>,
}

fn pairs() -> &'static [(i32, i32, i32, i32); 256] {
    static PAIRS: OnceLock<[(i32, i32, i32, i32); 256]> = OnceLock::new();
    PAIRS.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(0x0b1e_c7ed);
        let normal = rand_distr::Normal::new(0.0, 31.0 / 5.0).expect("valid sigma");
        let mut draw = || rng.sample::<f64, _>(normal).clamp(-PAIR_RADIUS, PAIR_RADIUS).round() as i32;
        let mut out = [(0, 0, 0, 0); 256];
        for p in out.iter_mut() {
            *p = (draw(), draw(), draw(), draw());
        }
        out
    })
}

fn gray(image: &Raster) -> GrayImage {
    let luma = image.luma();
    GrayImage::from_fn(image.width(), image.height(), |x, y| {
        Luma([luma[(y * image.width() + x) as usize].round().clamp(0.0, 255.0) as u8])
    })
}

fn box_blur(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width() as i32, img.height() as i32);
    let at = |x: i32, y: i32| img.get_pixel(x.clamp(0, w - 1) as u32, y.clamp(0, h - 1) as u32)[0] as u32;
    let mut tmp = vec![0u32; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            tmp[(y * w + x) as usize] = (-2..=2).map(|d| at(x + d, y)).sum();
        }
    }
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as i32, y as i32);
        let s: u32 = (-2..=2).map(|d| tmp[((y + d).clamp(0, h - 1) * w + x) as usize]).sum();
        Luma([((s + 12) / 25) as u8])
    })
}

/// Corner score, or `None` when fewer than nine contiguous circle pixels are all brighter or all darker.
fn fast_score(img: &GrayImage, x: i32, y: i32) -> Option<u32> {
    let p = img.get_pixel(x as u32, y as u32)[0] as i16;
    let mut signs = [0i8; 16];
    let mut diffs = [0i16; 16];
    for (k, (dx, dy)) in CIRCLE.iter().enumerate() {
        let v = img.get_pixel((x + dx) as u32, (y + dy) as u32)[0] as i16;
        diffs[k] = v - p;
        signs[k] = if v > p + FAST_THRESHOLD {
            1
        } else if v < p - FAST_THRESHOLD {
            -1
        } else {
            0
        };
    }
    for sign in [1i8, -1] {
        let mut run = 0;
        for k in 0..32 {
            if signs[k % 16] == sign {
                run += 1;
                if run >= 9 {
                    let score = (0..16)
                        .filter(|&i| signs[i] == sign)
                        .map(|i| (diffs[i].abs() - FAST_THRESHOLD) as u32)
                        .sum();
                    return Some(score);
                }
            } else {
                run = 0;
            }
        }
    }
    None
}

fn detect_level(img: &GrayImage, level: usize) -> Vec<Keypoint> {
    let (w, h) = (img.width() as i32, img.height() as i32);
    if w <= 2 * BORDER || h <= 2 * BORDER {
        return Vec::new();
    }
    let mut scores = vec![0u32; (w * h) as usize];
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            if let Some(s) = fast_score(img, x, y) {
                scores[(y * w + x) as usize] = s + 1;
            }
        }
    }
    let mut out = Vec::new();
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            let s = scores[(y * w + x) as usize];
            if s == 0 {
                continue;
            }
            // 3x3 non-maximum suppression; earlier position wins ties.
            let mut is_max = true;
            'nms: for dy in -1..=1 {
                for dx in -1..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let o = scores[((y + dy) * w + x + dx) as usize];
                    if o > s || (o == s && (dy, dx) < (0, 0)) {
                        is_max = false;
                        break 'nms;
                    }
                }
            }
            if is_max {
                out.push(Keypoint {
                    x,
                    y,
                    level,
                    angle: orientation(img, x, y),
                    score: s - 1,
                });
            }
        }
    }
    out
}

fn orientation(img: &GrayImage, x: i32, y: i32) -> f64 {
    let (mut m10, mut m01) = (0.0, 0.0);
    for dy in -PATCH_RADIUS..=PATCH_RADIUS {
        for dx in -PATCH_RADIUS..=PATCH_RADIUS {
            if dx * dx + dy * dy > PATCH_RADIUS * PATCH_RADIUS {
                continue;
            }
            let v = img.get_pixel((x + dx) as u32, (y + dy) as u32)[0] as f64;
            m10 += dx as f64 * v;
            m01 += dy as f64 * v;
        }
    }
    m01.atan2(m10)
}

fn describe(blurred: &GrayImage, kp: &Keypoint) -> [u64; 4] {
    let (c, s) = (kp.angle.cos(), kp.angle.sin());
    let (w, h) = (blurred.width() as i32, blurred.height() as i32);
    let sample = |px: i32, py: i32| {
        let rx = (c * px as f64 - s * py as f64).round() as i32;
        let ry = (s * px as f64 + c * py as f64).round() as i32;
        blurred.get_pixel((kp.x + rx).clamp(0, w - 1) as u32, (kp.y + ry).clamp(0, h - 1) as u32)[0]
    };
    let mut d = [0u64; 4];
    for (i, &(x1, y1, x2, y2)) in pairs().iter().enumerate() {
        if sample(x1, y1) < sample(x2, y2) {
            d[i / 64] |= 1 << (i % 64);
        }
    }
    d
}

pub fn extract(image: &Raster) -> Features {
    let base = gray(image);
    let mut found: Vec<(Keypoint, [u64; 4])> = Vec::new();
    for level in 0..LEVELS {
        let scale = std::f64::consts::SQRT_2.powi(level as i32);
        let (w, h) = (
            (base.width() as f64 / scale).round() as u32,
            (base.height() as f64 / scale).round() as u32,
        );
        if w as i32 <= 2 * BORDER || h as i32 <= 2 * BORDER {
            break;
        }
        let img = if level == 0 { base.clone() } else { imageops::resize(&base, w, h, FilterType::Triangle) };
        let blurred = box_blur(&img);
        for kp in detect_level(&img, level) {
            let d = describe(&blurred, &kp);
            found.push((kp, d));
        }
    }
    found.sort_by(|(a, _), (b, _)| b.score.cmp(&a.score).then((a.level, a.y, a.x).cmp(&(b.level, b.y, b.x))));
    found.truncate(MAX_KEYPOINTS);
    let (keypoints, descriptors) = found.into_iter().unzip();
    Features { keypoints, descriptors }
}

fn hamming(a: &[u64; 4], b: &[u64; 4]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// One-to-one matches passing the ratio test, as `(index_a, index_b, distance)`.
pub fn match_features(a: &Features, b: &Features) -> Vec<(usize, usize, u32)> {
    let mut candidates = Vec::new();
    for (i, da) in a.descriptors.iter().enumerate() {
        let (mut best, mut second) = ((u32::MAX, usize::MAX), u32::MAX);
        for (j, db) in b.descriptors.iter().enumerate() {
            let d = hamming(da, db);
            if d < best.0 {
                second = best.0;
                best = (d, j);
            } else if d < second {
                second = d;
            }
        }
        if best.1 != usize::MAX && (second == u32::MAX || (best.0 as f64) < RATIO_TEST * second as f64) {
            candidates.push((i, best.1, best.0));
        }
    }
    candidates.sort_by_key(|&(i, _, d)| (d, i));
    let mut used = vec![false; b.descriptors.len()];
    let mut out = Vec::new();
    for (i, j, d) in candidates {
        if !std::mem::replace(&mut used[j], true) {
            out.push((i, j, d));
        }
    }
    out
}

/// Matched pairs over the smaller keypoint count; 0 when either side has none.
pub fn match_ratio(a: &Features, b: &Features) -> f64 {
    let n = a.keypoints.len().min(b.keypoints.len());
    if n == 0 {
        return 0.0;
    }
    (match_features(a, b).len() as f64 / n as f64).min(1.0)
}

pub fn keypoint_match_ratio(a: &Raster, b: &Raster) -> f64 {
    match_ratio(&extract(a), &extract(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solid_images_have_no_keypoints() {
        let flat = Raster::solid(96, 96, [120, 40, 40]);
        assert!(extract(&flat).keypoints.is_empty());
        assert_eq!(keypoint_match_ratio(&flat, &flat), 0.0);
    }

    #[test]
    fn square_has_corners() {
        let img = Raster::from_fn(96, 96, |x, y| if (30..66).contains(&x) && (30..66).contains(&y) { [220; 3] } else { [30; 3] });
        let f = extract(&img);
        assert!(f.keypoints.len() >= 4, "{}", f.keypoints.len());
        assert_eq!(f.keypoints.len(), f.descriptors.len());
    }
}
