//! Deterministic inputs shared by the benchmarks.

use agbo_core::imaging::BinaryMask;
use agbo_core::imaging::{GrayImage, Histogram256, RgbImage};

/// Smooth bright disk on a dark frame, `w x h`.
pub fn fundus(w: usize, h: usize) -> RgbImage {
    let (cx, cy) = (w as f64 * 0.55, h as f64 * 0.5);
    let r = w.min(h) as f64 * 0.4;
    RgbImage::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        let edge = ((r - (dx * dx + dy * dy).sqrt()) / 6.0).clamp(0.0, 1.0);
        let c = |v: f64| (v * edge) as u8;
        [c(210.0), c(120.0), c(70.0)]
    })
    .expect("valid size")
}

/// Grayscale texture with a few dark vertical ridges.
pub fn ridges(side: usize) -> GrayImage {
    GrayImage::from_fn(side, side, |x, y| {
        let stripe = (x % 32) as f64 - 16.0;
        let v = 190.0 - 80.0 * (-stripe * stripe / 4.5).exp() + ((x * 7 + y * 13) % 11) as f64;
        v as u8
    })
    .expect("valid size")
}

pub fn full_mask(side: usize) -> BinaryMask {
    BinaryMask::from_fn(side, side, |_, _| true).expect("valid size")
}

/// Two-hump histogram.
pub fn bimodal_histogram() -> Histogram256 {
    let mut counts = [0u64; 256];
    for (v, c) in counts.iter_mut().enumerate() {
        let a = (v as f64 - 40.0) / 12.0;
        let b = (v as f64 - 170.0) / 25.0;
        *c = (5000.0 * (-a * a).exp() + 3000.0 * (-b * b).exp()) as u64;
    }
    Histogram256 { counts }
}

/// `n` points in `[0,1]^d` from a fixed low-discrepancy sequence, with a
/// smooth target.
pub fn gp_data(n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let x: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..d)
                .map(|k| ((i + 1) as f64 * (0.618_034 + 0.1 * k as f64)).fract())
                .collect()
        })
        .collect();
    let y = x
        .iter()
        .map(|p| p.iter().map(|v| (3.0 * v).sin()).sum())
        .collect();
    (x, y)
}
