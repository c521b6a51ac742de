//! Windowed structural similarity on luma.
//!
//! Window sums come from integral images over mean-centred luma so large
//! frames stay cheap and numerically stable.

use crate::error::{Error, Result};
use crate::media::Raster;

pub const WINDOW: usize = 8;
pub const STRIDE: usize = 4;
pub const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);
pub const CENTER_FRACTION: f64 = 0.5;

/// Summed-area table with a zero first row and column.
struct Integral {
    w: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new(values: &[f64], w: usize, h: usize) -> Self {
        let stride = w + 1;
        let mut sums = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += values[y * w + x];
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { w, sums }
    }

    fn rect(&self, x: usize, y: usize, ww: usize, hh: usize) -> f64 {
        let s = self.w + 1;
        self.sums[(y + hh) * s + x + ww] - self.sums[y * s + x + ww] - self.sums[(y + hh) * s + x] + self.sums[y * s + x]
    }
}

/// SSIM of one window given its sums.
pub fn window_ssim(n: f64, sa: f64, sb: f64, saa: f64, sbb: f64, sab: f64, offset: f64) -> f64 {
    let (ma, mb) = (sa / n, sb / n);
    let va = (saa / n - ma * ma).max(0.0);
    let vb = (sbb / n - mb * mb).max(0.0);
    let cov = sab / n - ma * mb;
    let (ma, mb) = (ma + offset, mb + offset);
    ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2))
}

fn luma_ssim(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let offset = a.iter().chain(b).sum::<f64>() / (2 * a.len()) as f64;
    let ca: Vec<f64> = a.iter().map(|v| v - offset).collect();
    let cb: Vec<f64> = b.iter().map(|v| v - offset).collect();
    let square = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
    let prod: Vec<f64> = ca.iter().zip(&cb).map(|(x, y)| x * y).collect();
    let ia = Integral::new(&ca, w, h);
    let ib = Integral::new(&cb, w, h);
    let iaa = Integral::new(&square(&ca), w, h);
    let ibb = Integral::new(&square(&cb), w, h);
    let iab = Integral::new(&prod, w, h);
    let (ww, wh) = if w < WINDOW || h < WINDOW { (w, h) } else { (WINDOW, WINDOW) };
    let n = (ww * wh) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    let mut y = 0;
    while y + wh <= h {
        let mut x = 0;
        while x + ww <= w {
            total += window_ssim(
                n,
                ia.rect(x, y, ww, wh),
                ib.rect(x, y, ww, wh),
                iaa.rect(x, y, ww, wh),
                ibb.rect(x, y, ww, wh),
                iab.rect(x, y, ww, wh),
                offset,
            );
            count += 1;
            x += STRIDE;
        }
        y += STRIDE;
    }
    total / count as f64
}

/// Mean SSIM over 8x8 windows at stride 4; `center_crop` compares the central 50% of both images.
pub fn ssim(a: &Raster, b: &Raster, center_crop: bool) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (a, b) = if center_crop {
        (a.center_crop(CENTER_FRACTION), b.center_crop(CENTER_FRACTION))
    } else {
        (a.clone(), b.clone())
    };
    Ok(luma_ssim(&a.luma(), &b.luma(), a.width() as usize, a.height() as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_one() {
        let img = Raster::from_fn(20, 12, |x, y| [(x * 13 % 256) as u8, (y * 29 % 256) as u8, ((x * y) % 256) as u8]);
        assert!((ssim(&img, &img, false).unwrap() - 1.0).abs() < 1e-9);
        assert!((ssim(&img, &img, true).unwrap() - 1.0).abs() < 1e-9);
        let flat = Raster::solid(16, 16, [90, 90, 90]);
        assert!((ssim(&flat, &flat, false).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_images_use_one_window() {
        let a = Raster::from_fn(5, 3, |x, _| [(x * 40) as u8; 3]);
        let b = Raster::from_fn(5, 3, |x, _| [(200 - x * 40) as u8; 3]);
        let v = ssim(&a, &b, false).unwrap();
        assert!(v < 0.0, "{v}");
    }

    #[test]
    fn mismatched_sizes() {
        let err = ssim(&Raster::solid(8, 8, [0; 3]), &Raster::solid(9, 8, [0; 3]), false).unwrap_err();
        assert_eq!(err.code(), "DIMENSION_MISMATCH");
    }
}
