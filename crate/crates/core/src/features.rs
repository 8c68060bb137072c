//! Optic-disc features: anatomical areas and ratios, rim quadrants, GLCM
//! texture statistics and Frangi vesselness.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{otsu_threshold, BinaryMask, GrayImage, Histogram256};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("empty disc")]
    EmptyDisc,
    #[error("mask dimensions {0}x{1} do not match {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("degenerate ROI: no valid pixel pairs")]
    DegenerateRoi,
    #[error("empty ROI")]
    EmptyRoi,
    #[error("invalid parameter: {0}")]
    InvalidParam(&'static str),
}

/// Disc and cup segmentations of the same image.
#[derive(Debug, Clone)]
pub struct SegmentationMasks {
    pub disc: BinaryMask,
    pub cup: BinaryMask,
}

impl SegmentationMasks {
    pub fn new(disc: BinaryMask, cup: BinaryMask) -> Result<Self, FeatureError> {
        if !disc.same_shape(&cup) {
            return Err(FeatureError::ShapeMismatch(
                disc.width(),
                disc.height(),
                cup.width(),
                cup.height(),
            ));
        }
        Ok(Self { disc, cup })
    }

    /// True when every cup pixel lies inside the disc.
    pub fn cup_within_disc(&self) -> bool {
        self.cup
            .bits()
            .iter()
            .zip(self.disc.bits())
            .all(|(&c, &d)| !c || d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Laterality {
    Left,
    #[default]
    Right,
}

/// Neuroretinal rim pixel counts per quadrant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IsntAreas {
    pub inferior: usize,
    pub superior: usize,
    pub nasal: usize,
    pub temporal: usize,
}

impl IsntAreas {
    pub fn total(&self) -> usize {
        self.inferior + self.superior + self.nasal + self.temporal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureFeatures {
    pub contrast: f64,
    pub dissimilarity: f64,
    pub homogeneity: f64,
    pub energy: f64,
    pub correlation: f64,
    pub asm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VesselSummary {
    pub mean_vesselness: f64,
    pub max_vesselness: f64,
    pub vessel_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub disc_area: usize,
    pub cup_area: usize,
    pub cdr_area: f64,
    pub cdr_vertical: f64,
    pub cdr_horizontal: f64,
    pub nrr_area: usize,
    pub isnt: IsntAreas,
    pub texture: TextureFeatures,
    pub vessels: VesselSummary,
    /// False when the cup mask leaks outside the disc.
    pub masks_consistent: bool,
}

pub fn mask_area(m: &BinaryMask) -> usize {
    m.count()
}

pub fn cdr_area(masks: &SegmentationMasks) -> Result<f64, FeatureError> {
    let disc = mask_area(&masks.disc);
    if disc == 0 {
        return Err(FeatureError::EmptyDisc);
    }
    Ok(mask_area(&masks.cup) as f64 / disc as f64)
}

/// Tight inclusive bounding box `(min_x, min_y, max_x, max_y)`.
fn bounding_box(m: &BinaryMask) -> Option<(usize, usize, usize, usize)> {
    m.foreground().fold(None, |acc, (x, y)| match acc {
        None => Some((x, y, x, y)),
        Some((x0, y0, x1, y1)) => Some((x0.min(x), y0.min(y), x1.max(x), y1.max(y))),
    })
}

/// Vertical and horizontal cup-to-disc ratios from bounding-box extents.
pub fn cdr_axes(masks: &SegmentationMasks) -> Result<(f64, f64), FeatureError> {
    let (dx0, dy0, dx1, dy1) = bounding_box(&masks.disc).ok_or(FeatureError::EmptyDisc)?;
    let (disc_h, disc_w) = ((dy1 - dy0 + 1) as f64, (dx1 - dx0 + 1) as f64);
    Ok(match bounding_box(&masks.cup) {
        None => (0.0, 0.0),
        Some((cx0, cy0, cx1, cy1)) => (
            (cy1 - cy0 + 1) as f64 / disc_h,
            (cx1 - cx0 + 1) as f64 / disc_w,
        ),
    })
}

/// Disc area minus cup area, clamped at zero.
pub fn nrr_area(masks: &SegmentationMasks) -> usize {
    mask_area(&masks.disc).saturating_sub(mask_area(&masks.cup))
}

/// Partitions rim pixels (disc and not cup) by their angle around the disc
/// centroid. Angles are measured counter-clockwise from image-right with
/// image-up positive; superior covers [45, 135), the image-left sector
/// [135, 225), inferior [225, 315) and the image-right sector the rest. For
/// a right eye the image-left sector is temporal.
pub fn isnt_areas(
    masks: &SegmentationMasks,
    laterality: Laterality,
) -> Result<IsntAreas, FeatureError> {
    let n = mask_area(&masks.disc);
    if n == 0 {
        return Err(FeatureError::EmptyDisc);
    }
    let (mut sx, mut sy) = (0.0f64, 0.0f64);
    for (x, y) in masks.disc.foreground() {
        sx += x as f64;
        sy += y as f64;
    }
    let (cx, cy) = (sx / n as f64, sy / n as f64);

    // sectors: [superior, image-left, inferior, image-right]
    let mut sectors = [0usize; 4];
    let w = masks.disc.width();
    for (i, (&d, &c)) in masks.disc.bits().iter().zip(masks.cup.bits()).enumerate() {
        if !d || c {
            continue;
        }
        let dx = (i % w) as f64 - cx;
        let dy = cy - (i / w) as f64;
        let mut deg = dy.atan2(dx).to_degrees();
        if deg < 0.0 {
            deg += 360.0;
        }
        let s = if (45.0..135.0).contains(&deg) {
            0
        } else if (135.0..225.0).contains(&deg) {
            1
        } else if (225.0..315.0).contains(&deg) {
            2
        } else {
            3
        };
        sectors[s] += 1;
    }
    let (temporal, nasal) = match laterality {
        Laterality::Right => (sectors[1], sectors[3]),
        Laterality::Left => (sectors[3], sectors[1]),
    };
    Ok(IsntAreas {
        inferior: sectors[2],
        superior: sectors[0],
        nasal,
        temporal,
    })
}

/// Normalized, symmetric co-occurrence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GlcmMatrix {
    levels: usize,
    probs: Vec<f64>,
}

impl GlcmMatrix {
    pub fn from_probs(levels: usize, probs: Vec<f64>) -> Result<Self, FeatureError> {
        if levels < 2 || probs.len() != levels * levels {
            return Err(FeatureError::InvalidParam("GLCM must be L x L with L >= 2"));
        }
        Ok(Self { levels, probs })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.levels + j]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

pub const DEFAULT_GLCM_LEVELS: usize = 8;
pub const DEFAULT_GLCM_OFFSETS: [(i32, i32); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

/// Uniform quantization of `[0, 255]` into `levels` bins.
#[inline]
pub fn quantize(v: u8, levels: usize) -> usize {
    (v as usize * levels) / 256
}

/// Co-occurrence matrix of the image quantized to `levels` bins.
pub fn glcm_compute(
    img: &GrayImage,
    roi: &BinaryMask,
    levels: usize,
    offsets: &[(i32, i32)],
) -> Result<GlcmMatrix, FeatureError> {
    if !(2..=256).contains(&levels) {
        return Err(FeatureError::InvalidParam("levels must be in [2, 256]"));
    }
    let quantized: Vec<usize> = img.pixels().iter().map(|&v| quantize(v, levels)).collect();
    glcm_from_levels(img.width(), img.height(), &quantized, roi, levels, offsets)
}

/// Co-occurrence matrix of an already quantized level image
/// (`width * height` entries, each `< levels`).
pub fn glcm_from_levels(
    width: usize,
    height: usize,
    level_img: &[usize],
    roi: &BinaryMask,
    levels: usize,
    offsets: &[(i32, i32)],
) -> Result<GlcmMatrix, FeatureError> {
    if levels < 2 {
        return Err(FeatureError::InvalidParam("levels must be >= 2"));
    }
    if offsets.is_empty() {
        return Err(FeatureError::InvalidParam("offsets must be nonempty"));
    }
    if roi.width() != width || roi.height() != height || level_img.len() != width * height {
        return Err(FeatureError::ShapeMismatch(
            roi.width(),
            roi.height(),
            width,
            height,
        ));
    }
    if level_img.iter().any(|&l| l >= levels) {
        return Err(FeatureError::InvalidParam("level out of range"));
    }
    let mut counts = vec![0u64; levels * levels];
    let mut pairs = 0u64;
    for &(dy, dx) in offsets {
        for y in 0..height {
            let y2 = y as i64 + dy as i64;
            if y2 < 0 || y2 >= height as i64 {
                continue;
            }
            for x in 0..width {
                let x2 = x as i64 + dx as i64;
                if x2 < 0 || x2 >= width as i64 {
                    continue;
                }
                let (a, b) = (y * width + x, y2 as usize * width + x2 as usize);
                if !(roi.bits()[a] && roi.bits()[b]) {
                    continue;
                }
                let (i, j) = (level_img[a], level_img[b]);
                counts[i * levels + j] += 1;
                counts[j * levels + i] += 1;
                pairs += 2;
            }
        }
    }
    if pairs == 0 {
        return Err(FeatureError::DegenerateRoi);
    }
    let total = pairs as f64;
    Ok(GlcmMatrix {
        levels,
        probs: counts.iter().map(|&c| c as f64 / total).collect(),
    })
}

/// Haralick statistics. Correlation is defined as 1 when either marginal has
/// zero variance (a constant region is perfectly correlated with itself).
pub fn glcm_features(g: &GlcmMatrix) -> TextureFeatures {
    let l = g.levels;
    let (mut contrast, mut dissimilarity, mut homogeneity, mut asm) = (0.0, 0.0, 0.0, 0.0);
    let (mut mu_i, mut mu_j) = (0.0, 0.0);
    for i in 0..l {
        for j in 0..l {
            let p = g.get(i, j);
            let d = i as f64 - j as f64;
            contrast += p * d * d;
            dissimilarity += p * d.abs();
            homogeneity += p / (1.0 + d * d);
            asm += p * p;
            mu_i += p * i as f64;
            mu_j += p * j as f64;
        }
    }
    let (mut var_i, mut var_j, mut cov) = (0.0, 0.0, 0.0);
    for i in 0..l {
        for j in 0..l {
            let p = g.get(i, j);
            let (di, dj) = (i as f64 - mu_i, j as f64 - mu_j);
            var_i += p * di * di;
            var_j += p * dj * dj;
            cov += p * di * dj;
        }
    }
    let denom = var_i.sqrt() * var_j.sqrt();
    let correlation = if denom <= f64::EPSILON {
        1.0
    } else {
        (cov / denom).clamp(-1.0, 1.0)
    };
    TextureFeatures {
        contrast,
        dissimilarity,
        homogeneity,
        energy: asm.sqrt(),
        correlation,
        asm,
    }
}

/// Per-pixel second derivatives `(xx, xy, yy)`.
#[derive(Debug, Clone)]
pub struct HessianField {
    pub width: usize,
    pub height: usize,
    pub xx: Vec<f64>,
    pub xy: Vec<f64>,
    pub yy: Vec<f64>,
}

/// Sampled Gaussian and its first two derivatives on `[-r, r]`,
/// moment-normalized so that smoothing preserves constants, the first
/// derivative of `x` is 1 and the second derivative of `x^2` is 2.
fn gaussian_kernels(sigma: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let r = (4.0 * sigma).ceil().max(1.0) as i64;
    let s2 = sigma * sigma;
    let xs: Vec<f64> = (-r..=r).map(|k| k as f64).collect();
    let g: Vec<f64> = xs.iter().map(|x| (-x * x / (2.0 * s2)).exp()).collect();
    let gsum: f64 = g.iter().sum();
    let g0: Vec<f64> = g.iter().map(|v| v / gsum).collect();

    let mut g1: Vec<f64> = xs.iter().zip(&g).map(|(x, v)| -x / s2 * v).collect();
    // convolution: out(x) = sum_k w(k) f(x - k); for f = x it is -sum k w(k)
    let m1: f64 = -xs.iter().zip(&g1).map(|(x, w)| x * w).sum::<f64>();
    g1.iter_mut().for_each(|w| *w /= m1);

    let mut g2: Vec<f64> = xs
        .iter()
        .zip(&g)
        .map(|(x, v)| (x * x / (s2 * s2) - 1.0 / s2) * v)
        .collect();
    let mean2 = g2.iter().sum::<f64>() / g2.len() as f64;
    g2.iter_mut().for_each(|w| *w -= mean2);
    let m2: f64 = xs.iter().zip(&g2).map(|(x, w)| x * x * w).sum();
    g2.iter_mut().for_each(|w| *w *= 2.0 / m2);
    (g0, g1, g2)
}

/// Symmetric reflection `d c b a | a b c d | d c b a` of an index.
#[inline]
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// 1-D convolution along rows (`horizontal`) or columns. Derivative kernels
/// (`zero_sum`) are applied to differences from the center sample so that a
/// constant input maps to exactly zero.
fn convolve_axis(
    src: &[f64],
    width: usize,
    height: usize,
    kernel: &[f64],
    horizontal: bool,
    zero_sum: bool,
) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let center = src[y * width + x];
            let mut acc = 0.0;
            for (ki, &w) in kernel.iter().enumerate() {
                let k = ki as i64 - r;
                let v = if horizontal {
                    src[y * width + reflect(x as i64 - k, width)]
                } else {
                    src[reflect(y as i64 - k, height) * width + x]
                };
                acc += if zero_sum { w * (v - center) } else { w * v };
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Scale-normalized Gaussian Hessian (`sigma^2` times second derivatives).
pub fn hessian_at_scale(img: &GrayImage, sigma: f64) -> Result<HessianField, FeatureError> {
    let src: Vec<f64> = img.pixels().iter().map(|&v| f64::from(v)).collect();
    hessian_of(&src, img.width(), img.height(), sigma)
}

pub fn hessian_of(
    src: &[f64],
    width: usize,
    height: usize,
    sigma: f64,
) -> Result<HessianField, FeatureError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(FeatureError::InvalidParam("sigma must be > 0"));
    }
    let (g0, g1, g2) = gaussian_kernels(sigma);
    let s2 = sigma * sigma;
    let dxx = convolve_axis(src, width, height, &g2, true, true);
    let xx = convolve_axis(&dxx, width, height, &g0, false, false);
    let dyy = convolve_axis(src, width, height, &g2, false, true);
    let yy = convolve_axis(&dyy, width, height, &g0, true, false);
    let dx = convolve_axis(src, width, height, &g1, true, true);
    let xy = convolve_axis(&dx, width, height, &g1, false, true);
    let scale = |v: Vec<f64>| v.into_iter().map(|h| h * s2).collect::<Vec<_>>();
    Ok(HessianField {
        width,
        height,
        xx: scale(xx),
        xy: scale(xy),
        yy: scale(yy),
    })
}

/// Eigenvalues of `[[a, b], [b, c]]` ordered by magnitude, `|l1| <= |l2|`.
pub fn sorted_eigenvalues(a: f64, b: f64, c: f64) -> (f64, f64) {
    let half_tr = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (e1, e2) = (half_tr - disc, half_tr + disc);
    if e1.abs() <= e2.abs() {
        (e1, e2)
    } else {
        (e2, e1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureScale {
    /// Half of the largest structureness observed at each scale.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrangiParams {
    pub beta: f64,
    pub c: StructureScale,
    pub scales: Vec<f64>,
}

impl Default for FrangiParams {
    fn default() -> Self {
        Self {
            beta: 0.5,
            c: StructureScale::Auto,
            scales: vec![1.0, 2.0, 4.0, 8.0],
        }
    }
}

impl FrangiParams {
    fn validate(&self) -> Result<(), FeatureError> {
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(FeatureError::InvalidParam("beta must be > 0"));
        }
        if let StructureScale::Fixed(c) = self.c {
            if c.is_nan() || c <= 0.0 {
                return Err(FeatureError::InvalidParam("c must be > 0"));
            }
        }
        if self.scales.is_empty() || self.scales.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(FeatureError::InvalidParam(
                "scales must be nonempty and > 0",
            ));
        }
        Ok(())
    }
}

/// Multiscale vesselness for dark tubular structures on a bright
/// background: per scale
/// `exp(-Rb^2 / 2 beta^2) * (1 - exp(-S^2 / 2 c^2))` where `l2 > 0`,
/// zero otherwise; the map is the maximum over scales.
pub fn frangi_vesselness(img: &GrayImage, p: &FrangiParams) -> Result<Vec<f64>, FeatureError> {
    p.validate()?;
    let src: Vec<f64> = img.pixels().iter().map(|&v| f64::from(v)).collect();
    let (w, h) = (img.width(), img.height());
    let mut out = vec![0.0f64; w * h];
    for &sigma in &p.scales {
        let hs = hessian_of(&src, w, h, sigma)?;
        let eig: Vec<(f64, f64)> = (0..w * h)
            .map(|i| sorted_eigenvalues(hs.xx[i], hs.xy[i], hs.yy[i]))
            .collect();
        let c = match p.c {
            StructureScale::Fixed(c) => c,
            StructureScale::Auto => {
                let max_s = eig
                    .iter()
                    .map(|&(l1, l2)| (l1 * l1 + l2 * l2).sqrt())
                    .fold(0.0, f64::max);
                0.5 * max_s
            }
        };
        if c <= 0.0 {
            continue;
        }
        let two_beta2 = 2.0 * p.beta * p.beta;
        let two_c2 = 2.0 * c * c;
        for (o, &(l1, l2)) in out.iter_mut().zip(&eig) {
            if l2 <= 0.0 {
                continue;
            }
            let rb = l1 / l2;
            let s2 = l1 * l1 + l2 * l2;
            let v = (-(rb * rb) / two_beta2).exp() * (1.0 - (-s2 / two_c2).exp());
            if v > *o {
                *o = v;
            }
        }
    }
    Ok(out)
}

/// Mean, max and Otsu-split density of a `[0, 1]` map over `roi`. The map is
/// quantized to 256 levels for the split.
pub fn vessel_summary(map: &[f64], roi: &BinaryMask) -> Result<VesselSummary, FeatureError> {
    if map.len() != roi.bits().len() {
        return Err(FeatureError::InvalidParam("map and roi sizes differ"));
    }
    let values: Vec<f64> = map
        .iter()
        .zip(roi.bits())
        .filter(|(_, &b)| b)
        .map(|(&v, _)| v.clamp(0.0, 1.0))
        .collect();
    if values.is_empty() {
        return Err(FeatureError::EmptyRoi);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let max = values.iter().copied().fold(0.0, f64::max);
    let to_level = |v: f64| (v * 255.0).round() as u8;
    let mut hist = Histogram256::default();
    for &v in &values {
        hist.counts[to_level(v) as usize] += 1;
    }
    let t = otsu_threshold(&hist).expect("nonempty roi");
    let above = values.iter().filter(|&&v| to_level(v) > t).count();
    Ok(VesselSummary {
        mean_vesselness: mean,
        max_vesselness: max,
        vessel_density: above as f64 / n,
    })
}

/// Field of view of a standardized image: nonzero pixels, or the whole frame
/// when the image is entirely black.
pub fn field_of_view(img: &GrayImage) -> BinaryMask {
    let bits: Vec<bool> = img.pixels().iter().map(|&v| v > 0).collect();
    let bits = if bits.iter().any(|&b| b) {
        bits
    } else {
        vec![true; bits.len()]
    };
    BinaryMask::new(img.width(), img.height(), bits).expect("same shape as image")
}

#[derive(Debug, Clone)]
pub struct FeatureOptions {
    pub glcm_levels: usize,
    pub glcm_offsets: Vec<(i32, i32)>,
    pub frangi: FrangiParams,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self {
            glcm_levels: DEFAULT_GLCM_LEVELS,
            glcm_offsets: DEFAULT_GLCM_OFFSETS.to_vec(),
            frangi: FrangiParams::default(),
        }
    }
}

pub fn extract_features(
    img: &GrayImage,
    masks: &SegmentationMasks,
    laterality: Laterality,
) -> Result<FeatureRecord, FeatureError> {
    extract_features_with(img, masks, laterality, &FeatureOptions::default())
}

/// Texture is measured over the disc; vessels over the image field of view.
pub fn extract_features_with(
    img: &GrayImage,
    masks: &SegmentationMasks,
    laterality: Laterality,
    opts: &FeatureOptions,
) -> Result<FeatureRecord, FeatureError> {
    if img.width() != masks.disc.width() || img.height() != masks.disc.height() {
        return Err(FeatureError::ShapeMismatch(
            img.width(),
            img.height(),
            masks.disc.width(),
            masks.disc.height(),
        ));
    }
    let disc_area = mask_area(&masks.disc);
    if disc_area == 0 {
        return Err(FeatureError::EmptyDisc);
    }
    let cup_area = mask_area(&masks.cup);
    let (cdr_vertical, cdr_horizontal) = cdr_axes(masks)?;
    let glcm = glcm_compute(img, &masks.disc, opts.glcm_levels, &opts.glcm_offsets)?;
    let vesselness = frangi_vesselness(img, &opts.frangi)?;
    let vessels = vessel_summary(&vesselness, &field_of_view(img))?;
    Ok(FeatureRecord {
        disc_area,
        cup_area,
        cdr_area: cdr_area(masks)?,
        cdr_vertical,
        cdr_horizontal,
        nrr_area: nrr_area(masks),
        isnt: isnt_areas(masks, laterality)?,
        texture: glcm_features(&glcm),
        vessels,
        masks_consistent: masks.cup_within_disc(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disk(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            dx * dx + dy * dy <= r * r
        })
        .unwrap()
    }

    fn raster_count(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> usize {
        let mut n = 0;
        for y in 0..h {
            for x in 0..w {
                if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r {
                    n += 1;
                }
            }
        }
        n
    }

    fn rect(w: usize, h: usize, x0: usize, y0: usize, rw: usize, rh: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            (x0..x0 + rw).contains(&x) && (y0..y0 + rh).contains(&y)
        })
        .unwrap()
    }

    #[test]
    fn areas() {
        assert_eq!(mask_area(&BinaryMask::empty(5, 5).unwrap()), 0);
        assert_eq!(
            mask_area(&BinaryMask::new(10, 10, vec![true; 100]).unwrap()),
            100
        );
        let oracle = raster_count(64, 64, 32.0, 32.0, 20.0);
        assert_eq!(mask_area(&disk(64, 64, 32.0, 32.0, 20.0)), oracle);
        assert!((oracle as f64 - 1257.0).abs() < 15.0);
    }

    #[test]
    fn cdr_area_cases() {
        let d = disk(64, 64, 32.0, 32.0, 20.0);
        let same = SegmentationMasks::new(d.clone(), d.clone()).unwrap();
        assert_eq!(cdr_area(&same).unwrap(), 1.0);
        let none = SegmentationMasks::new(d.clone(), BinaryMask::empty(64, 64).unwrap()).unwrap();
        assert_eq!(cdr_area(&none).unwrap(), 0.0);
        let cup = disk(64, 64, 32.0, 32.0, 10.0);
        let m = SegmentationMasks::new(d, cup).unwrap();
        let expect = raster_count(64, 64, 32.0, 32.0, 10.0) as f64
            / raster_count(64, 64, 32.0, 32.0, 20.0) as f64;
        assert_eq!(cdr_area(&m).unwrap(), expect);
        assert!((expect - 0.25).abs() < 0.01);
        let empty = SegmentationMasks::new(
            BinaryMask::empty(4, 4).unwrap(),
            BinaryMask::empty(4, 4).unwrap(),
        )
        .unwrap();
        assert_eq!(cdr_area(&empty), Err(FeatureError::EmptyDisc));
    }

    #[test]
    fn cdr_axes_cases() {
        let d = rect(100, 100, 10, 10, 40, 60);
        let m = SegmentationMasks::new(d.clone(), d.clone()).unwrap();
        assert_eq!(cdr_axes(&m).unwrap(), (1.0, 1.0));
        let m = SegmentationMasks::new(d.clone(), BinaryMask::empty(100, 100).unwrap()).unwrap();
        assert_eq!(cdr_axes(&m).unwrap(), (0.0, 0.0));
        let m = SegmentationMasks::new(d, rect(100, 100, 20, 25, 20, 30)).unwrap();
        assert_eq!(cdr_axes(&m).unwrap(), (0.5, 0.5));
        let e = BinaryMask::empty(3, 3).unwrap();
        assert!(cdr_axes(&SegmentationMasks::new(e.clone(), e).unwrap()).is_err());
    }

    #[test]
    fn nrr_cases() {
        let d = disk(64, 64, 32.0, 32.0, 20.0);
        let c = disk(64, 64, 32.0, 32.0, 10.0);
        let m = SegmentationMasks::new(d.clone(), d.clone()).unwrap();
        assert_eq!(nrr_area(&m), 0);
        let m = SegmentationMasks::new(d.clone(), c.clone()).unwrap();
        assert_eq!(nrr_area(&m) + mask_area(&c), mask_area(&d));
        assert_eq!(
            nrr_area(&m),
            raster_count(64, 64, 32.0, 32.0, 20.0) - raster_count(64, 64, 32.0, 32.0, 10.0)
        );
        let bad = SegmentationMasks::new(c, d).unwrap();
        assert_eq!(nrr_area(&bad), 0);
        assert!(!bad.cup_within_disc());
        assert!(m.cup_within_disc());
    }

    #[test]
    fn isnt_symmetric_annulus() {
        let d = disk(81, 81, 40.0, 40.0, 30.0);
        let c = disk(81, 81, 40.0, 40.0, 15.0);
        let m = SegmentationMasks::new(d, c).unwrap();
        let a = isnt_areas(&m, Laterality::Right).unwrap();
        let v = [a.inferior, a.superior, a.nasal, a.temporal];
        let (lo, hi) = (*v.iter().min().unwrap(), *v.iter().max().unwrap());
        assert!((hi - lo) as f64 <= 0.01 * lo as f64, "{a:?}");
        assert_eq!(a.total(), nrr_area(&m));
    }

    #[test]
    fn isnt_superior_removed() {
        let d = disk(81, 81, 40.0, 40.0, 30.0);
        // Cup covers the center and the whole upper half of the disc.
        let c = BinaryMask::from_fn(81, 81, |x, y| {
            let r2 = (x as f64 - 40.0).powi(2) + (y as f64 - 40.0).powi(2);
            r2 <= 225.0 || (y < 40 && d.get(x, y))
        })
        .unwrap();
        let m = SegmentationMasks::new(d.clone(), c).unwrap();
        let a = isnt_areas(&m, Laterality::Right).unwrap();
        // Centroid is (40, 40) for the full disc; upper half holds no rim.
        assert_eq!(a.superior, 0);
        assert!(a.inferior > 0);
        assert_eq!(a.total(), nrr_area(&m));
    }

    #[test]
    fn isnt_laterality_swaps() {
        let d = disk(64, 64, 30.0, 33.0, 20.0);
        let c = disk(64, 64, 26.0, 31.0, 9.0);
        let m = SegmentationMasks::new(d, c).unwrap();
        let r = isnt_areas(&m, Laterality::Right).unwrap();
        let l = isnt_areas(&m, Laterality::Left).unwrap();
        assert_eq!((r.nasal, r.temporal), (l.temporal, l.nasal));
        assert_eq!((r.inferior, r.superior), (l.inferior, l.superior));
        assert!(r.temporal < r.nasal);
    }

    #[test]
    fn glcm_hand_counts() {
        let full = BinaryMask::new(2, 2, vec![true; 4]).unwrap();
        let lv = [0, 0, 1, 1];
        let g = glcm_from_levels(2, 2, &lv, &full, 2, &[(0, 1)]).unwrap();
        assert_eq!(g.probs(), &[0.5, 0.0, 0.0, 0.5]);
        let g = glcm_from_levels(2, 2, &lv, &full, 2, &[(1, 0)]).unwrap();
        assert_eq!(g.probs(), &[0.0, 0.5, 0.5, 0.0]);

        let img = GrayImage::new(2, 2, vec![0, 0, 255, 255]).unwrap();
        let g = glcm_compute(&img, &full, 2, &[(0, 1)]).unwrap();
        assert_eq!(g.probs(), &[0.5, 0.0, 0.0, 0.5]);

        let flat = GrayImage::new(4, 4, vec![77; 16]).unwrap();
        let full4 = BinaryMask::new(4, 4, vec![true; 16]).unwrap();
        let g = glcm_compute(&flat, &full4, 8, &DEFAULT_GLCM_OFFSETS).unwrap();
        let q = quantize(77, 8);
        assert_eq!(g.get(q, q), 1.0);
        assert_eq!(g.probs().iter().filter(|&&p| p > 0.0).count(), 1);
    }

    #[test]
    fn glcm_errors() {
        let img = GrayImage::new(2, 2, vec![0; 4]).unwrap();
        let one = BinaryMask::new(2, 2, vec![true, false, false, false]).unwrap();
        assert_eq!(
            glcm_compute(&img, &one, 2, &[(0, 1)]),
            Err(FeatureError::DegenerateRoi)
        );
        let full = BinaryMask::new(2, 2, vec![true; 4]).unwrap();
        assert!(glcm_compute(&img, &full, 1, &[(0, 1)]).is_err());
        assert!(glcm_compute(&img, &full, 2, &[]).is_err());
    }

    #[test]
    fn glcm_feature_cases() {
        let diag = GlcmMatrix::from_probs(2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let f = glcm_features(&diag);
        assert_eq!(f.contrast, 0.0);
        assert_eq!(f.homogeneity, 1.0);
        assert_eq!(f.asm, 0.5);
        assert!((f.correlation - 1.0).abs() < 1e-12);
        assert!((f.energy - 0.5f64.sqrt()).abs() < 1e-15);

        let anti = GlcmMatrix::from_probs(2, vec![0.0, 0.5, 0.5, 0.0]).unwrap();
        let f = glcm_features(&anti);
        assert_eq!(f.contrast, 1.0);
        assert!((f.correlation + 1.0).abs() < 1e-12);

        let mut p = vec![0.0; 16];
        p[5] = 1.0;
        let f = glcm_features(&GlcmMatrix::from_probs(4, p).unwrap());
        assert_eq!((f.contrast, f.asm, f.correlation), (0.0, 1.0, 1.0));
    }

    #[test]
    fn glcm_random_is_symmetric_and_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..30 {
            let px: Vec<u8> = (0..100).map(|_| rng.random()).collect();
            let img = GrayImage::new(10, 10, px).unwrap();
            let roi = BinaryMask::from_fn(10, 10, |_, _| rng.random_bool(0.8)).unwrap();
            let Ok(g) = glcm_compute(&img, &roi, 8, &DEFAULT_GLCM_OFFSETS) else {
                continue;
            };
            let s: f64 = g.probs().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            for i in 0..8 {
                for j in 0..8 {
                    assert_eq!(g.get(i, j), g.get(j, i));
                }
            }
            let f = glcm_features(&g);
            assert!((f.energy - f.asm.sqrt()).abs() < 1e-15);
            assert!(f.homogeneity > 0.0 && f.homogeneity <= 1.0);
            assert!(f.asm > 0.0 && f.asm <= 1.0);
            assert!((-1.0..=1.0).contains(&f.correlation));
        }
    }

    #[test]
    fn hessian_constant_is_zero() {
        let img = GrayImage::new(20, 16, vec![123; 320]).unwrap();
        for s in [1.0, 3.0] {
            let h = hessian_at_scale(&img, s).unwrap();
            assert!(h.xx.iter().chain(&h.xy).chain(&h.yy).all(|&v| v == 0.0));
        }
        assert!(hessian_at_scale(&img, 0.0).is_err());
    }

    #[test]
    fn hessian_quadratic_ramp() {
        let (w, h) = (64, 24);
        let src: Vec<f64> = (0..w * h).map(|i| ((i % w) as f64).powi(2)).collect();
        for sigma in [1.0, 2.0] {
            let hs = hessian_of(&src, w, h, sigma).unwrap();
            let margin = (4.0 * sigma).ceil() as usize + 1;
            for y in 0..h {
                for x in margin..w - margin {
                    let i = y * w + x;
                    assert!(
                        (hs.xx[i] - 2.0 * sigma * sigma).abs() < 1e-9,
                        "{}",
                        hs.xx[i]
                    );
                    assert!(hs.yy[i].abs() < 1e-9);
                    assert!(hs.xy[i].abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn hessian_blob_symmetry() {
        let n = 41;
        let src: Vec<f64> = (0..n * n)
            .map(|i| {
                let (x, y) = ((i % n) as f64 - 20.0, (i / n) as f64 - 20.0);
                200.0 * (-(x * x + y * y) / 18.0).exp()
            })
            .collect();
        let hs = hessian_of(&src, n, n, 2.0).unwrap();
        let c = 20 * n + 20;
        assert!((hs.xx[c] - hs.yy[c]).abs() < 1e-6);
        assert!(hs.xx[c] < 0.0);
    }

    fn line_image(w: usize, h: usize, x0: usize, width: usize, line: u8, field: u8) -> GrayImage {
        GrayImage::from_fn(w, h, |x, _| {
            if (x0..x0 + width).contains(&x) {
                line
            } else {
                field
            }
        })
        .unwrap()
    }

    #[test]
    fn frangi_constant_is_zero() {
        let img = GrayImage::new(32, 32, vec![90; 1024]).unwrap();
        let v = frangi_vesselness(&img, &FrangiParams::default()).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn frangi_dark_line_polarity() {
        let img = line_image(64, 64, 30, 3, 50, 200);
        let v = frangi_vesselness(&img, &FrangiParams::default()).unwrap();
        assert!(v.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let (mut on, mut non, mut off, mut noff) = (0.0, 0, 0.0, 0);
        for (i, &x) in v.iter().enumerate() {
            if (30..33).contains(&(i % 64)) {
                on += x;
                non += 1;
            } else {
                off += x;
                noff += 1;
            }
        }
        let (on, off) = (on / non as f64, off / noff as f64);
        assert!(on >= 5.0 * off, "on {on} off {off}");

        let bright = line_image(64, 64, 30, 3, 200, 50);
        let vb = frangi_vesselness(&bright, &FrangiParams::default()).unwrap();
        let on_b: f64 = vb
            .iter()
            .enumerate()
            .filter(|(i, _)| (30..33).contains(&(i % 64)))
            .map(|(_, &x)| x)
            .sum::<f64>()
            / 192.0;
        assert!(on_b < 1e-3, "{on_b}");
    }

    #[test]
    fn frangi_offset_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let px: Vec<u8> = (0..48 * 40).map(|_| rng.random_range(0..200)).collect();
        let a = GrayImage::new(48, 40, px.clone()).unwrap();
        let b = GrayImage::new(48, 40, px.iter().map(|v| v + 55).collect()).unwrap();
        let p = FrangiParams::default();
        let (va, vb) = (
            frangi_vesselness(&a, &p).unwrap(),
            frangi_vesselness(&b, &p).unwrap(),
        );
        for (x, y) in va.iter().zip(&vb) {
            assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn frangi_rejects_bad_params() {
        let img = GrayImage::new(8, 8, vec![0; 64]).unwrap();
        let mut p = FrangiParams::default();
        p.scales.clear();
        assert!(frangi_vesselness(&img, &p).is_err());
        let p = FrangiParams {
            beta: 0.0,
            ..FrangiParams::default()
        };
        assert!(frangi_vesselness(&img, &p).is_err());
    }

    #[test]
    fn vessel_summary_cases() {
        let roi = BinaryMask::new(10, 10, vec![true; 100]).unwrap();
        let s = vessel_summary(&[0.0; 100], &roi).unwrap();
        assert_eq!(
            (s.mean_vesselness, s.max_vesselness, s.vessel_density),
            (0.0, 0.0, 0.0)
        );
        let mut m = vec![0.0; 100];
        m[37] = 1.0;
        let s = vessel_summary(&m, &roi).unwrap();
        assert_eq!(s.max_vesselness, 1.0);
        assert!((s.mean_vesselness - 0.01).abs() < 1e-15);
        assert!((s.vessel_density - 0.01).abs() < 1e-15);
        let none = BinaryMask::empty(10, 10).unwrap();
        assert_eq!(vessel_summary(&m, &none), Err(FeatureError::EmptyRoi));
    }

    #[test]
    fn vessel_density_tracks_line_fraction() {
        let (w, h, lw) = (128, 64, 4);
        let img = line_image(w, h, 60, lw, 60, 200);
        let p = FrangiParams {
            scales: vec![1.0, 2.0],
            ..FrangiParams::default()
        };
        let v = frangi_vesselness(&img, &p).unwrap();
        let roi = BinaryMask::new(w, h, vec![true; w * h]).unwrap();
        let s = vessel_summary(&v, &roi).unwrap();
        let truth = lw as f64 / w as f64;
        assert!(
            (s.vessel_density - truth).abs() <= 0.05,
            "{} vs {truth}",
            s.vessel_density
        );
        assert!(s.max_vesselness >= s.mean_vesselness);
    }

    #[test]
    fn extract_concentric() {
        let n = 96;
        let img = GrayImage::from_fn(n, n, |x, y| ((x * 7 + y * 3) % 256) as u8).unwrap();
        let d = disk(n, n, 48.0, 48.0, 30.0);
        let c = disk(n, n, 48.0, 48.0, 12.0);
        let m = SegmentationMasks::new(d.clone(), c.clone()).unwrap();
        let r = extract_features(&img, &m, Laterality::Right).unwrap();
        assert_eq!(r.disc_area, raster_count(n, n, 48.0, 48.0, 30.0));
        assert_eq!(r.cup_area, raster_count(n, n, 48.0, 48.0, 12.0));
        assert_eq!(r.nrr_area, r.disc_area - r.cup_area);
        assert_eq!(r.isnt.total(), r.nrr_area);
        assert_eq!(r.cdr_vertical, 25.0 / 61.0);
        assert!(r.masks_consistent);
        let glcm = glcm_compute(&img, &d, 8, &DEFAULT_GLCM_OFFSETS).unwrap();
        assert_eq!(r.texture, glcm_features(&glcm));

        let same = SegmentationMasks::new(d.clone(), d.clone()).unwrap();
        let r = extract_features(&img, &same, Laterality::Left).unwrap();
        assert_eq!((r.cdr_area, r.nrr_area, r.isnt.total()), (1.0, 0, 0));

        let e = BinaryMask::empty(n, n).unwrap();
        let em = SegmentationMasks::new(e.clone(), e).unwrap();
        assert_eq!(
            extract_features(&img, &em, Laterality::Right),
            Err(FeatureError::EmptyDisc)
        );
    }
}
