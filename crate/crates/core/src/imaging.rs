//! Fundus image standardization.
//!
//! The pipeline converts a color fundus photograph into a centered,
//! circularly masked square image: grayscale conversion, histogram,
//! Otsu threshold, foreground mask, disk geometry estimation, crop and
//! bilinear resample, circular mask.

use std::collections::VecDeque;

use thiserror::Error;

/// Side length of a standardized image.
pub const STANDARD_SIZE: usize = 512;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImagingError {
    #[error("empty histogram")]
    EmptyHistogram,
    #[error("no foreground")]
    NoForeground,
    #[error("image must be square, got {width}x{height}")]
    NotSquare { width: usize, height: usize },
    #[error("invalid image dimensions {width}x{height} for {len} pixels")]
    BadDimensions {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("output size {0} is below the minimum of 16")]
    OutputTooSmall(usize),
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<(), ImagingError> {
    if width == 0 || height == 0 || width.checked_mul(height) != Some(len) {
        return Err(ImagingError::BadDimensions { width, height, len });
    }
    Ok(())
}

/// 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self, ImagingError> {
        check_dims(width, height, pixels.len())?;
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: [u8; 3]) -> Result<Self, ImagingError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self, ImagingError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<[u8; 3]> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}

/// 8-bit single-channel raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        check_dims(width, height, pixels.len())?;
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self, ImagingError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// Intensity histogram with one bin per 8-bit level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram256 {
    pub counts: [u64; 256],
}

impl Histogram256 {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

impl Default for Histogram256 {
    fn default() -> Self {
        Self { counts: [0; 256] }
    }
}

/// Boolean raster; `true` marks foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, ImagingError> {
        check_dims(width, height, bits.len())?;
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self, ImagingError> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self, ImagingError> {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::new(width, height, bits)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Iterates `(x, y)` of every foreground pixel in raster order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }
}

/// Estimated fundus disk: center in pixel-index coordinates and radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskGeometry {
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
}

/// Luma with weights 0.299/0.587/0.114, rounded half away from zero.
pub fn rgb_to_gray(img: &RgbImage) -> GrayImage {
    let pixels = img.pixels.iter().map(|&p| luma(p)).collect();
    GrayImage {
        width: img.width,
        height: img.height,
        pixels,
    }
}

#[inline]
pub fn luma([r, g, b]: [u8; 3]) -> u8 {
    let v = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    v.round().clamp(0.0, 255.0) as u8
}

pub fn compute_histogram(img: &GrayImage) -> Histogram256 {
    let mut hist = Histogram256::default();
    for &v in &img.pixels {
        hist.counts[v as usize] += 1;
    }
    hist
}

/// Otsu threshold over a 256-bin histogram.
///
/// Levels `<= T` form class 0. Candidate splits run from the lowest occupied
/// level up to 255 and the lowest maximizer wins, so a histogram with a
/// single occupied level returns that level.
///
/// Between-class variance is compared exactly: with `n0, s0` (count and
/// intensity sum of class 0) and `n1, s1` for class 1 it is proportional to
/// `(s0*n1 - s1*n0)^2 / (n0*n1)`, which is compared as a rational number.
pub fn otsu_threshold(hist: &Histogram256) -> Result<u8, ImagingError> {
    let total: u64 = hist.total();
    if total == 0 {
        return Err(ImagingError::EmptyHistogram);
    }
    let total_sum: u128 = hist
        .counts
        .iter()
        .enumerate()
        .map(|(v, &c)| v as u128 * c as u128)
        .sum();
    let first = hist.counts.iter().position(|&c| c > 0).unwrap_or(0);

    let mut best_t = first;
    let mut best: Option<BetweenClass> = None;
    let mut n0: u128 = 0;
    let mut s0: u128 = 0;
    for t in first..256 {
        n0 += hist.counts[t] as u128;
        s0 += t as u128 * hist.counts[t] as u128;
        let n1 = total as u128 - n0;
        let s1 = total_sum - s0;
        let score = BetweenClass::new(n0, s0, n1, s1);
        let better = match &best {
            None => true,
            Some(b) => score.gt(b),
        };
        if better {
            best = Some(score);
            best_t = t;
        }
    }
    Ok(best_t as u8)
}

/// Exact representation of `num / den` where `num = (s0*n1 - s1*n0)^2` and
/// `den = n0*n1`; empty classes score zero.
#[derive(Debug, Clone, Copy)]
struct BetweenClass {
    num: u128,
    den: u128,
    // Fallback when the exact numerator would overflow (> 2^28 pixels).
    approx: f64,
}

impl BetweenClass {
    fn new(n0: u128, s0: u128, n1: u128, s1: u128) -> Self {
        if n0 == 0 || n1 == 0 {
            return Self {
                num: 0,
                den: 1,
                approx: 0.0,
            };
        }
        let a = s0 * n1;
        let b = s1 * n0;
        let diff = a.abs_diff(b);
        let den = n0 * n1;
        let approx = (diff as f64) * (diff as f64) / den as f64;
        match diff.checked_mul(diff) {
            Some(num) => Self { num, den, approx },
            None => Self {
                num: u128::MAX,
                den: 0,
                approx,
            },
        }
    }

    fn exact(&self) -> bool {
        self.den != 0
    }

    fn gt(&self, other: &Self) -> bool {
        if !(self.exact() && other.exact()) {
            return self.approx > other.approx;
        }
        // Compare quotients first, then remainders: r1/d1 > r2/d2.
        let (q1, r1) = (self.num / self.den, self.num % self.den);
        let (q2, r2) = (other.num / other.den, other.num % other.den);
        if q1 != q2 {
            return q1 > q2;
        }
        match (r1.checked_mul(other.den), r2.checked_mul(self.den)) {
            (Some(l), Some(r)) => l > r,
            _ => self.approx > other.approx,
        }
    }
}

/// Foreground is every pixel strictly brighter than `t`.
pub fn make_binary_mask(img: &GrayImage, t: u8) -> BinaryMask {
    BinaryMask {
        width: img.width,
        height: img.height,
        bits: img.pixels.iter().map(|&v| v > t).collect(),
    }
}

/// Labels 4-connected foreground components. Returns the label image
/// (`u32::MAX` = background) and per-component pixel counts, in raster order
/// of each component's first pixel.
fn label_components(mask: &BinaryMask) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![u32::MAX; w * h];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits[start] || labels[start] != u32::MAX {
            continue;
        }
        let label = sizes.len() as u32;
        let mut size = 0usize;
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if mask.bits[j] && labels[j] == u32::MAX {
                    labels[j] = label;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Centroid of the largest 4-connected component and its area-equivalent
/// radius `sqrt(area / pi)`. Equal-area components resolve to the one met
/// first in raster order.
pub fn estimate_center_radius(mask: &BinaryMask) -> Result<DiskGeometry, ImagingError> {
    let (labels, sizes) = label_components(mask);
    let (best, &area) = sizes
        .iter()
        .enumerate()
        .rev()
        .max_by_key(|(_, &s)| s)
        .ok_or(ImagingError::NoForeground)?;
    let best = best as u32;

    let (mut sx, mut sy) = (0u128, 0u128);
    for (i, &l) in labels.iter().enumerate() {
        if l == best {
            sx += (i % mask.width) as u128;
            sy += (i / mask.width) as u128;
        }
    }
    let n = area as u128;
    // Integer part and remainder keep the centroid exact under translation.
    let mean = |s: u128| (s / n) as f64 + (s % n) as f64 / n as f64;
    Ok(DiskGeometry {
        center_x: mean(sx),
        center_y: mean(sy),
        radius: (area as f64 / std::f64::consts::PI).sqrt(),
    })
}

/// Samples `img` at continuous pixel-index coordinates. Points outside the
/// image extent `[-0.5, dim - 0.5]` are black; inside, neighbours are clamped
/// to the edge.
fn sample_bilinear(img: &RgbImage, sx: f64, sy: f64) -> [u8; 3] {
    let (w, h) = (img.width as f64, img.height as f64);
    if !(sx >= -0.5 && sx <= w - 0.5 && sy >= -0.5 && sy <= h - 0.5) {
        return [0, 0, 0];
    }
    let cx = sx.clamp(0.0, w - 1.0);
    let cy = sy.clamp(0.0, h - 1.0);
    let x0 = cx.floor() as usize;
    let y0 = cy.floor() as usize;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let fx = cx - x0 as f64;
    let fy = cy - y0 as f64;
    let (p00, p10, p01, p11) = (
        img.get(x0, y0),
        img.get(x1, y0),
        img.get(x0, y1),
        img.get(x1, y1),
    );
    let mut out = [0u8; 3];
    for c in 0..3 {
        let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p10[c]) * fx;
        let bottom = f64::from(p01[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
        out[c] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Extracts the square window of side `2r` centered on the disk and resamples
/// it bilinearly to `out_size x out_size`. Window regions outside the source
/// image are black.
pub fn crop_and_resize(
    img: &RgbImage,
    geom: &DiskGeometry,
    out_size: usize,
) -> Result<RgbImage, ImagingError> {
    if out_size < 16 {
        return Err(ImagingError::OutputTooSmall(out_size));
    }
    let step = 2.0 * geom.radius / out_size as f64;
    let left = geom.center_x - geom.radius;
    let top = geom.center_y - geom.radius;
    RgbImage::from_fn(out_size, out_size, |i, j| {
        let sx = left + (i as f64 + 0.5) * step;
        let sy = top + (j as f64 + 0.5) * step;
        sample_bilinear(img, sx, sy)
    })
}

/// Blackens every pixel farther than `side / 2` from the image center.
pub fn apply_circular_mask(img: &RgbImage) -> Result<RgbImage, ImagingError> {
    if img.width != img.height {
        return Err(ImagingError::NotSquare {
            width: img.width,
            height: img.height,
        });
    }
    let side = img.width as f64;
    let c = (side - 1.0) / 2.0;
    let r2 = (side / 2.0) * (side / 2.0);
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            if dx * dx + dy * dy > r2 {
                out.pixels[y * img.width + x] = [0, 0, 0];
            }
        }
    }
    Ok(out)
}

/// Full standardization to `STANDARD_SIZE`.
pub fn standardize(img: &RgbImage) -> Result<RgbImage, ImagingError> {
    standardize_to(img, STANDARD_SIZE)
}

pub fn standardize_to(img: &RgbImage, out_size: usize) -> Result<RgbImage, ImagingError> {
    let gray = rgb_to_gray(img);
    let hist = compute_histogram(&gray);
    let t = otsu_threshold(&hist)?;
    let mask = make_binary_mask(&gray, t);
    let geom = estimate_center_radius(&mask)?;
    let crop = crop_and_resize(img, &geom, out_size)?;
    apply_circular_mask(&crop)
}
