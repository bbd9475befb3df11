//! Patch descriptors: histogram of oriented gradients followed by
//! per-channel color histograms.
//!
//! A candidate box is resampled to a fixed `patch_size` square with
//! bilinear interpolation (clamp-to-edge outside the frame). The HOG block
//! has `orientation_bins` unsigned bins per `cell_size` cell, each cell
//! L2-normalized on its own. The color block holds one L1-normalized
//! marginal histogram per RGB channel.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::BoundingBox;
use crate::{Error, Result};

const NORM_EPS: f64 = 1e-6;

/// Decoded RGB frame, row-major, 8 bits per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    index: usize,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, index: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ConfigOutOfBounds(format!(
                "frame size {width}x{height}"
            )));
        }
        if pixels.len() != 3 * width * height {
            return Err(Error::ConfigOutOfBounds(format!(
                "frame buffer holds {} bytes, expected {}",
                pixels.len(),
                3 * width * height
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            index,
        })
    }

    /// A frame filled with one color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3], index: usize) -> Result<Self> {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(3 * width * height)
            .collect();
        Self::new(width, height, pixels, index)
    }

    pub fn from_image(img: &image::DynamicImage, index: usize) -> Result<Self> {
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(w as usize, h as usize, rgb.into_raw(), index)
    }

    pub fn open(path: &Path, index: usize) -> Result<Self> {
        Self::from_image(&image::open(path)?, index)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let img =
            image::RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
                .expect("buffer length checked at construction");
        img.save(path)?;
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn bounds(&self) -> BoundingBox {
        BoundingBox::new(0.0, 0.0, self.width as f64, self.height as f64)
            .expect("frame has positive size")
    }
}

/// Fixed-size RGB raster, channel values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    size: usize,
    pixels: Vec<f32>,
}

impl Patch {
    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut pixels = Vec::with_capacity(3 * size * size);
        for y in 0..size {
            for x in 0..size {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self { size, pixels }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn rgb(&self, x: usize, y: usize) -> [f32; 3] {
        let i = 3 * (y * self.size + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn gray(&self) -> Vec<f64> {
        self.pixels
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub patch_size: usize,
    pub cell_size: usize,
    pub orientation_bins: usize,
    pub color_bins: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            patch_size: 32,
            cell_size: 8,
            orientation_bins: 9,
            color_bins: 8,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.cell_size == 0 || !self.patch_size.is_multiple_of(self.cell_size) {
            return Err(Error::ConfigOutOfBounds(format!(
                "patch_size {} must be a positive multiple of cell_size {}",
                self.patch_size, self.cell_size
            )));
        }
        if self.orientation_bins == 0 || self.color_bins == 0 || self.color_bins > 256 {
            return Err(Error::ConfigOutOfBounds(
                "orientation_bins and color_bins must be in 1..=256".into(),
            ));
        }
        Ok(())
    }

    pub fn cells_per_side(&self) -> usize {
        self.patch_size / self.cell_size
    }

    pub fn hog_dim(&self) -> usize {
        self.cells_per_side().pow(2) * self.orientation_bins
    }

    pub fn hoc_dim(&self) -> usize {
        3 * self.color_bins
    }

    pub fn dim(&self) -> usize {
        self.hog_dim() + self.hoc_dim()
    }
}

/// Concatenated `[hog | hoc]` descriptor. Cheap to clone.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Arc<[f32]>);

impl FeatureVector {
    pub fn new(values: Vec<f32>) -> Self {
        Self(values.into())
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_vec(&self) -> Vec<f32> {
        self.0.to_vec()
    }
}

impl From<Vec<f32>> for FeatureVector {
    fn from(v: Vec<f32>) -> Self {
        Self::new(v)
    }
}

impl From<&[f32]> for FeatureVector {
    fn from(v: &[f32]) -> Self {
        Self(v.into())
    }
}

/// Computes descriptors for one feature configuration.
#[derive(Debug, Clone)]
pub struct Featurizer {
    cfg: FeatureConfig,
    // (cos, sin) of the orientation bin boundaries after the first.
    boundaries: Vec<(f64, f64)>,
}

impl Default for Featurizer {
    fn default() -> Self {
        Self::new(FeatureConfig::default()).expect("default config is valid")
    }
}

impl Featurizer {
    pub fn new(cfg: FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        let step = std::f64::consts::PI / cfg.orientation_bins as f64;
        let boundaries = (1..cfg.orientation_bins)
            .map(|k| {
                let a = k as f64 * step;
                (a.cos(), a.sin())
            })
            .collect();
        Ok(Self { cfg, boundaries })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim()
    }

    /// Resamples `bx` to a square patch. Output pixel `(i, j)` samples the
    /// frame at `bx.x + (i + 0.5) * bx.w / size - 0.5`, so a box that is
    /// exactly `size` pixels wide at integer offsets copies pixels verbatim.
    pub fn extract_patch(&self, frame: &Frame, bx: &BoundingBox) -> Result<Patch> {
        extract_patch(frame, bx, self.cfg.patch_size)
    }

    pub fn hog(&self, patch: &Patch) -> Vec<f32> {
        let n = patch.size();
        let cell = self.cfg.cell_size;
        let cells = n / cell;
        let bins = self.cfg.orientation_bins;
        let gray = patch.gray();
        let mut hist = vec![0f64; cells * cells * bins];
        let at = |x: usize, y: usize| gray[y * n + x];
        for y in 0..n {
            let (ym, yp) = (y.saturating_sub(1), (y + 1).min(n - 1));
            for x in 0..n {
                let (xm, xp) = (x.saturating_sub(1), (x + 1).min(n - 1));
                let mut gx = at(xp, y) - at(xm, y);
                let mut gy = at(x, yp) - at(x, ym);
                if gx == 0.0 && gy == 0.0 {
                    continue;
                }
                // Fold onto the upper half-plane: unsigned orientation.
                if gy < 0.0 || (gy == 0.0 && gx < 0.0) {
                    gx = -gx;
                    gy = -gy;
                }
                let bin = self
                    .boundaries
                    .iter()
                    .take_while(|&&(c, s)| c * gy - s * gx >= 0.0)
                    .count();
                let c = (y / cell) * cells + x / cell;
                hist[c * bins + bin] += gx.hypot(gy);
            }
        }
        for h in hist.chunks_exact_mut(bins) {
            let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_EPS);
            h.iter_mut().for_each(|v| *v /= norm);
        }
        hist.into_iter().map(|v| v as f32).collect()
    }

    pub fn hoc(&self, patch: &Patch) -> Vec<f32> {
        let bins = self.cfg.color_bins;
        let mut counts = vec![0u32; 3 * bins];
        let scale = bins as f32 / 256.0;
        for px in patch.pixels.chunks_exact(3) {
            for (ch, &v) in px.iter().enumerate() {
                let b = ((v * scale) as usize).min(bins - 1);
                counts[ch * bins + b] += 1;
            }
        }
        let total = (patch.size() * patch.size()) as f64;
        counts
            .into_iter()
            .map(|c| (c as f64 / total) as f32)
            .collect()
    }

    pub fn featurize(&self, frame: &Frame, bx: &BoundingBox) -> Result<FeatureVector> {
        let patch = self.extract_patch(frame, bx)?;
        let mut v = self.hog(&patch);
        v.extend(self.hoc(&patch));
        Ok(FeatureVector::new(v))
    }
}

pub fn extract_patch(frame: &Frame, bx: &BoundingBox, size: usize) -> Result<Patch> {
    if bx.intersection_area(&frame.bounds()) <= 0.0 {
        return Err(Error::BoxOutsideFrame);
    }
    let (fw, fh) = (frame.width() as isize, frame.height() as isize);
    let axis = |origin: f64, extent: f64, limit: isize| -> Vec<(usize, usize, f32)> {
        (0..size)
            .map(|i| {
                let s = origin + (i as f64 + 0.5) * extent / size as f64 - 0.5;
                let s0 = s.floor();
                let frac = (s - s0) as f32;
                let clamp = |v: isize| v.clamp(0, limit - 1) as usize;
                (clamp(s0 as isize), clamp(s0 as isize + 1), frac)
            })
            .collect()
    };
    let xs = axis(bx.x(), bx.w(), fw);
    let ys = axis(bx.y(), bx.h(), fh);
    let px = frame.pixels();
    let stride = 3 * frame.width();
    let mut pixels = Vec::with_capacity(3 * size * size);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..3 {
                let v00 = px[y0 * stride + 3 * x0 + ch] as f32;
                let v01 = px[y0 * stride + 3 * x1 + ch] as f32;
                let v10 = px[y1 * stride + 3 * x0 + ch] as f32;
                let v11 = px[y1 * stride + 3 * x1 + ch] as f32;
                let top = v00 + (v01 - v00) * fx;
                let bottom = v10 + (v11 - v10) * fx;
                pixels.push(top + (bottom - top) * fy);
            }
        }
    }
    Ok(Patch { size, pixels })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn random_frame(w: usize, h: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pixels = (0..3 * w * h).map(|_| rng.random()).collect();
        Frame::new(w, h, pixels, 1).unwrap()
    }

    fn gray_patch(f: impl Fn(usize, usize) -> f32) -> Patch {
        Patch::from_fn(32, |x, y| {
            let v = f(x, y);
            [v, v, v]
        })
    }

    #[test]
    fn frame_validates_buffer() {
        assert!(Frame::new(2, 2, vec![0; 11], 1).is_err());
        assert!(Frame::new(0, 2, vec![], 1).is_err());
    }

    #[test]
    fn uniform_frame_gives_uniform_patch() {
        let frame = Frame::filled(50, 40, [128, 128, 128], 1).unwrap();
        let patch = extract_patch(&frame, &frame.bounds(), 32).unwrap();
        assert!(patch.pixels.iter().all(|&v| v == 128.0));
    }

    #[test]
    fn aligned_window_copies_pixels() {
        let frame = random_frame(64, 48, 3);
        let patch = extract_patch(&frame, &bb(7.0, 5.0, 32.0, 32.0), 32).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                let expected = frame.rgb(x + 7, y + 5).map(f32::from);
                assert_eq!(patch.rgb(x, y), expected);
            }
        }
    }

    #[test]
    fn clamp_to_edge_fills_outside_pixels() {
        // 4x4 toy frame: white except for the rightmost column.
        let mut frame = Frame::filled(4, 4, [255, 255, 255], 1).unwrap();
        for y in 0..4 {
            let i = 3 * (y * 4 + 3);
            frame.pixels_mut()[i..i + 3].copy_from_slice(&[0, 0, 0]);
        }
        // Box spans x in [-2, 2): half outside the left edge. Clamping
        // replicates column 0, and columns 0..2 are white.
        let patch = extract_patch(&frame, &bb(-2.0, 0.0, 4.0, 4.0), 4).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                // Sample positions -2.0 + (x + 0.5) - 0.5 = x - 2 are at most 1.
                assert_eq!(patch.rgb(x, y), [255.0; 3], "({x}, {y})");
            }
        }
        let frame = Frame::filled(20, 20, [255, 255, 255], 1).unwrap();
        let patch = extract_patch(&frame, &bb(-10.0, 2.0, 20.0, 12.0), 32).unwrap();
        assert!(patch.pixels.iter().all(|&v| v == 255.0));
    }

    #[test]
    fn disjoint_box_is_rejected() {
        let frame = Frame::filled(10, 10, [0, 0, 0], 1).unwrap();
        assert!(matches!(
            extract_patch(&frame, &bb(10.0, 0.0, 5.0, 5.0), 32),
            Err(Error::BoxOutsideFrame)
        ));
        assert!(extract_patch(&frame, &bb(-5.0, -5.0, 5.5, 5.5), 32).is_ok());
    }

    #[test]
    fn hog_of_constant_patch_is_zero() {
        let f = Featurizer::default();
        let hog = f.hog(&gray_patch(|_, _| 77.0));
        assert_eq!(hog.len(), 144);
        assert!(hog.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_step_edge_fills_horizontal_gradient_bin() {
        let f = Featurizer::default();
        let hog = f.hog(&gray_patch(|x, _| if x < 16 { 0.0 } else { 255.0 }));
        for cy in 0..4 {
            for cx in 0..4 {
                let cell = &hog[(cy * 4 + cx) * 9..(cy * 4 + cx + 1) * 9];
                if cx == 1 || cx == 2 {
                    assert!((cell[0] - 1.0).abs() < 1e-6, "cell ({cx},{cy}): {cell:?}");
                    assert!(cell[1..].iter().all(|&v| v == 0.0));
                } else {
                    assert!(cell.iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    /// Direct per-pixel histogram with `atan2`, used as an oracle.
    fn hog_oracle(patch: &Patch) -> Vec<f64> {
        let g = patch.gray();
        let n = patch.size();
        let mut hist = vec![0f64; 16 * 9];
        for y in 0..n {
            for x in 0..n {
                let gx = g[y * n + (x + 1).min(n - 1)] - g[y * n + x.saturating_sub(1)];
                let gy = g[(y + 1).min(n - 1) * n + x] - g[y.saturating_sub(1) * n + x];
                let mag = gx.hypot(gy);
                if mag == 0.0 {
                    continue;
                }
                let mut deg = gy.atan2(gx).to_degrees();
                if deg < 0.0 {
                    deg += 180.0;
                }
                if deg >= 180.0 {
                    deg -= 180.0;
                }
                let bin = ((deg / 20.0) as usize).min(8);
                hist[((y / 8) * 4 + x / 8) * 9 + bin] += mag;
            }
        }
        for h in hist.chunks_exact_mut(9) {
            let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-6);
            h.iter_mut().for_each(|v| *v /= norm);
        }
        hist
    }

    #[test]
    fn rotated_bar_permutes_bins_and_cells() {
        // A full-height vertical bar: every gradient lies along x (bin 0).
        // Rotating the patch by 90 degrees turns them to 90 degrees (bin 4)
        // and moves cell (cx, cy) to (3 - cy, cx).
        let bar = gray_patch(|x, _| if (10..14).contains(&x) { 200.0 } else { 20.0 });
        let rotated = Patch::from_fn(32, |x, y| bar.rgb(y, 31 - x));
        let f = Featurizer::default();
        let (a, b) = (f.hog(&bar), f.hog(&rotated));
        for (va, vo) in a.iter().zip(hog_oracle(&bar)) {
            assert!((*va as f64 - vo).abs() < 1e-6);
        }
        for (vb, vo) in b.iter().zip(hog_oracle(&rotated)) {
            assert!((*vb as f64 - vo).abs() < 1e-6);
        }
        let mut nonzero = 0;
        for cy in 0..4 {
            for cx in 0..4 {
                let (rx, ry) = (3 - cy, cx);
                let orig = &a[(cy * 4 + cx) * 9..(cy * 4 + cx + 1) * 9];
                let mapped = &b[(ry * 4 + rx) * 9..(ry * 4 + rx + 1) * 9];
                assert_eq!(orig[0], mapped[4], "cell ({cx},{cy})");
                assert!(orig[1..].iter().all(|&v| v == 0.0));
                assert!(mapped.iter().enumerate().all(|(k, &v)| k == 4 || v == 0.0));
                nonzero += (orig[0] > 0.0) as usize;
            }
        }
        assert_eq!(nonzero, 4);
    }

    #[test]
    fn hoc_examples() {
        let f = Featurizer::default();
        let black = f.hoc(&gray_patch(|_, _| 0.0));
        for ch in 0..3 {
            assert_eq!(black[ch * 8], 1.0);
            assert!(black[ch * 8 + 1..ch * 8 + 8].iter().all(|&v| v == 0.0));
        }
        let split = f.hoc(&gray_patch(|x, _| if x < 16 { 0.0 } else { 255.0 }));
        for ch in 0..3 {
            assert_eq!(split[ch * 8], 0.5);
            assert_eq!(split[ch * 8 + 7], 0.5);
        }
    }

    #[test]
    fn hoc_matches_pixel_counting() {
        let frame = random_frame(32, 32, 9);
        let f = Featurizer::default();
        let patch = f.extract_patch(&frame, &frame.bounds()).unwrap();
        let hoc = f.hoc(&patch);
        let mut expected = [0f64; 24];
        for y in 0..32 {
            for x in 0..32 {
                for (ch, v) in frame.rgb(x, y).iter().enumerate() {
                    expected[ch * 8 + (*v as usize) / 32] += 1.0 / 1024.0;
                }
            }
        }
        for (a, b) in hoc.iter().zip(expected) {
            assert!((*a as f64 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn featurize_dims_and_determinism() {
        let frame = random_frame(80, 60, 1);
        let f = Featurizer::default();
        let bx = bb(10.3, 12.7, 25.1, 30.9);
        let a = f.featurize(&frame, &bx).unwrap();
        let b = f.featurize(&frame, &bx).unwrap();
        assert_eq!(a.len(), 168);
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn uniform_frame_gives_zero_hog_and_point_mass_hoc() {
        let frame = Frame::filled(40, 40, [10, 100, 250], 1).unwrap();
        let f = Featurizer::default();
        let v = f.featurize(&frame, &bb(3.0, 4.0, 21.5, 17.0)).unwrap();
        let (hog, hoc) = v.as_slice().split_at(144);
        assert!(hog.iter().all(|&x| x == 0.0));
        assert_eq!(hoc[0], 1.0);
        assert_eq!(hoc[8 + 3], 1.0);
        assert_eq!(hoc[16 + 7], 1.0);
        assert_eq!(hoc.iter().sum::<f32>(), 3.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn descriptor_invariants(
            seed in 0u64..1000,
            x in -20.0..60.0f64,
            y in -20.0..40.0f64,
            w in 2.0..60.0f64,
            h in 2.0..60.0f64,
        ) {
            let frame = random_frame(64, 48, seed);
            let f = Featurizer::default();
            let bx = bb(x, y, w, h);
            prop_assume!(bx.intersection_area(&frame.bounds()) > 0.0);
            let v = f.featurize(&frame, &bx).unwrap();
            prop_assert_eq!(v.len(), f.dim());
            prop_assert!(v.as_slice().iter().all(|x| x.is_finite()));
            let (hog, hoc) = v.as_slice().split_at(144);
            for cell in hog.chunks_exact(9) {
                let n: f64 = cell.iter().map(|&c| (c as f64).powi(2)).sum::<f64>().sqrt();
                prop_assert!(n <= 1.0 + 1e-6);
            }
            for marginal in hoc.chunks_exact(8) {
                prop_assert!(marginal.iter().all(|&c| c >= 0.0));
                let n: f64 = marginal.iter().map(|&c| (c as f64).powi(2)).sum::<f64>().sqrt();
                prop_assert!(n <= 1.0 + 1e-9);
            }
            let total: f64 = hoc.iter().map(|&c| c as f64).sum();
            prop_assert!((total - 3.0).abs() < 1e-9);
        }

        #[test]
        fn hog_ignores_intensity_offset(seed in 0u64..1000, offset in -60.0..60.0f32) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base: Vec<f32> = (0..32 * 32).map(|_| rng.random_range(70.0..180.0f32).round()).collect();
            let a = gray_patch(|x, y| base[y * 32 + x]);
            let b = gray_patch(|x, y| base[y * 32 + x] + offset);
            let f = Featurizer::default();
            for (u, v) in f.hog(&a).iter().zip(f.hog(&b)) {
                prop_assert!((u - v).abs() < 1e-5);
            }
        }
    }
}
