//! Per-channel color histograms and their distance.

use crate::media::Raster;

pub const BINS: usize = 32;

/// Normalized histogram per RGB channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorHistogram(pub [[f64; BINS]; 3]);

impl ColorHistogram {
    pub fn of(image: &Raster) -> Self {
        let mut counts = [[0u64; BINS]; 3];
        for px in image.bytes().chunks_exact(3) {
            for (c, &v) in px.iter().enumerate() {
                counts[c][v as usize * BINS / 256] += 1;
            }
        }
        let n = (image.width() as usize * image.height() as usize) as f64;
        let mut h = [[0.0; BINS]; 3];
        for c in 0..3 {
            for b in 0..BINS {
                h[c][b] = counts[c][b] as f64 / n;
            }
        }
        ColorHistogram(h)
    }

    /// Half the L1 distance per channel, averaged over channels; in `[0, 1]`.
    pub fn distance(&self, other: &ColorHistogram) -> f64 {
        let mut total = 0.0;
        for c in 0..3 {
            let l1: f64 = self.0[c].iter().zip(&other.0[c]).map(|(a, b)| (a - b).abs()).sum();
            total += l1 / 2.0;
        }
        (total / 3.0).clamp(0.0, 1.0)
    }
}

pub fn histogram_distance(a: &Raster, b: &Raster) -> f64 {
    ColorHistogram::of(a).distance(&ColorHistogram::of(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extremes() {
        let black = Raster::solid(8, 8, [0, 0, 0]);
        let white = Raster::solid(8, 8, [255, 255, 255]);
        assert_eq!(histogram_distance(&black, &black), 0.0);
        assert!((histogram_distance(&black, &white) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn solid_primaries_differ_in_two_channels() {
        let red = Raster::solid(4, 4, [255, 0, 0]);
        let green = Raster::solid(4, 4, [0, 255, 0]);
        assert!((histogram_distance(&red, &green) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn size_independent() {
        let a = Raster::solid(4, 4, [10, 200, 30]);
        let b = Raster::solid(16, 9, [10, 200, 30]);
        assert_eq!(histogram_distance(&a, &b), 0.0);
    }
}
