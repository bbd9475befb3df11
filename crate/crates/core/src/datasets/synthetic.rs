//! Deterministic synthetic sequences with exact ground truth.
//!
//! A checkerboard target with per-pixel texture noise moves over a smooth
//! random background according to a piecewise-constant velocity schedule.
//! Events add occluders, illumination gain, static distractors and
//! out-of-view spans. Box coordinates are kept on a 1/1024 pixel grid so
//! that they survive a text round trip exactly.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Attribute, Sequence};
use crate::features::Frame;
use crate::geometry::BoundingBox;
use crate::{Error, Result};

const GRID: f64 = 1024.0;
/// Spacing of the background's random color lattice, pixels.
const BACKGROUND_CELL: usize = 48;

fn quantize(v: f64) -> f64 {
    (v * GRID).round() / GRID
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    /// Initial box `[x, y, w, h]`, zero-based.
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub texture_seed: u64,
    /// Checkerboard cell size, pixels.
    #[serde(default = "default_cell")]
    pub cell: usize,
}

fn default_cell() -> usize {
    6
}

/// Velocity from frame `start` on, until the next segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionSegment {
    pub start: usize,
    /// Pixels per frame.
    pub velocity: [f64; 2],
    /// Per-frame size multiplier, applied about the box center.
    #[serde(default = "one")]
    pub scale_rate: f64,
}

fn one() -> f64 {
    1.0
}

/// Frame spans are one-based and inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SynthEvent {
    /// Draws an opaque occluder. Without an explicit box the occluder
    /// follows the target with a 10% margin.
    Occlusion {
        start: usize,
        end: usize,
        occluder: Option<[f64; 4]>,
    },
    /// Multiplies pixel intensities by `gain`.
    Illumination { start: usize, end: usize, gain: f64 },
    /// Static checkerboard distractors covering about `density` of the
    /// canvas.
    Clutter { density: f64 },
    /// Allows the target to leave the canvas.
    OutOfView { start: usize, end: usize },
    /// Blends the target texture linearly into a second texture over the
    /// span and keeps the second texture afterwards.
    Morph {
        start: usize,
        end: usize,
        texture_seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub length: usize,
    /// `[width, height]`.
    pub canvas: [usize; 2],
    pub target: TargetSpec,
    pub motion: Vec<MotionSegment>,
    #[serde(default)]
    pub events: Vec<SynthEvent>,
    /// Per-pixel Gaussian noise, 8-bit units.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    /// Tags added to the ones implied by the events.
    #[serde(default)]
    pub attributes: Vec<Attribute>,
}

fn default_name() -> String {
    "synthetic".into()
}

impl SynthConfig {
    /// A static target in the middle of a 320x240 canvas.
    pub fn still(name: &str, length: usize, seed: u64) -> Self {
        Self {
            name: name.into(),
            length,
            canvas: [320, 240],
            target: TargetSpec {
                bbox: [140.0, 100.0, 40.0, 40.0],
                texture_seed: seed,
                cell: default_cell(),
            },
            motion: vec![MotionSegment {
                start: 1,
                velocity: [0.0, 0.0],
                scale_rate: 1.0,
            }],
            events: Vec::new(),
            noise: 0.0,
            seed,
            attributes: Vec::new(),
        }
    }

    fn segment(&self, t: usize) -> Option<&MotionSegment> {
        self.motion.iter().rev().find(|s| s.start <= t)
    }

    fn active(&self, t: usize) -> impl Iterator<Item = &SynthEvent> {
        self.events.iter().filter(move |e| match e {
            SynthEvent::Occlusion { start, end, .. }
            | SynthEvent::Illumination { start, end, .. }
            | SynthEvent::OutOfView { start, end } => (*start..=*end).contains(&t),
            SynthEvent::Morph { start, .. } => t >= *start,
            SynthEvent::Clutter { .. } => true,
        })
    }

    /// Exact target box of every frame.
    pub fn ground_truth(&self) -> Result<Vec<BoundingBox>> {
        let [x, y, w, h] = self.target.bbox;
        let (mut x, mut y, mut w, mut h) = (quantize(x), quantize(y), quantize(w), quantize(h));
        let mut out = Vec::with_capacity(self.length);
        for t in 1..=self.length {
            if t > 1 {
                if let Some(seg) = self.segment(t) {
                    let (cx, cy) = (x + w / 2.0, y + h / 2.0);
                    w = quantize(w * seg.scale_rate);
                    h = quantize(h * seg.scale_rate);
                    x = quantize(cx - w / 2.0 + seg.velocity[0]);
                    y = quantize(cy - h / 2.0 + seg.velocity[1]);
                }
            }
            out.push(BoundingBox::new(x, y, w, h)?);
        }
        Ok(out)
    }

    /// Tags implied by the configuration plus the explicit ones.
    pub fn implied_attributes(&self) -> BTreeSet<Attribute> {
        let mut tags: BTreeSet<Attribute> = self.attributes.iter().copied().collect();
        for e in &self.events {
            tags.insert(match e {
                SynthEvent::Occlusion { .. } => Attribute::OCC,
                SynthEvent::Illumination { .. } => Attribute::IV,
                SynthEvent::Clutter { .. } => Attribute::BC,
                SynthEvent::OutOfView { .. } => Attribute::OV,
                SynthEvent::Morph { .. } => Attribute::DEF,
            });
        }
        let [_, _, w, h] = self.target.bbox;
        let fast = 0.2 * w.hypot(h);
        for s in &self.motion {
            if s.scale_rate != 1.0 {
                tags.insert(Attribute::SV);
            }
            if s.velocity[0].hypot(s.velocity[1]) > fast {
                tags.insert(Attribute::FM);
            }
        }
        tags
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigOutOfBounds(msg));
        if self.length < 2 {
            return bad(format!("length {} is below 2", self.length));
        }
        let [cw, ch] = self.canvas;
        if cw < 16 || ch < 16 {
            return bad(format!("canvas {cw}x{ch} is below 16x16"));
        }
        if self.target.cell == 0 {
            return bad("checker cell must be at least 1 px".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be non-negative".into());
        }
        if self.motion.is_empty() || self.motion[0].start > 1 {
            return bad("motion schedule must start at frame 1".into());
        }
        if self.motion.windows(2).any(|p| p[0].start >= p[1].start) {
            return bad("motion segments must have increasing starts".into());
        }
        for s in &self.motion {
            if !(s.scale_rate > 0.0 && s.scale_rate.is_finite())
                || !s.velocity.iter().all(|v| v.is_finite())
            {
                return bad(format!("invalid motion segment at frame {}", s.start));
            }
        }
        for e in &self.events {
            let span = match e {
                SynthEvent::Occlusion {
                    start,
                    end,
                    occluder,
                } => {
                    if let Some([x, y, w, h]) = occluder {
                        BoundingBox::new(*x, *y, *w, *h)
                            .map_err(|_| Error::ConfigOutOfBounds("invalid occluder box".into()))?;
                    }
                    Some((*start, *end))
                }
                SynthEvent::Illumination { start, end, gain } => {
                    if !(*gain > 0.0 && gain.is_finite()) {
                        return bad(format!("illumination gain {gain} must be positive"));
                    }
                    Some((*start, *end))
                }
                SynthEvent::OutOfView { start, end } | SynthEvent::Morph { start, end, .. } => {
                    Some((*start, *end))
                }
                SynthEvent::Clutter { density } => {
                    if !(0.0..=1.0).contains(density) {
                        return bad(format!("clutter density {density} outside [0, 1]"));
                    }
                    None
                }
            };
            if let Some((s, e)) = span {
                if s < 1 || s > e || e > self.length {
                    return bad(format!("event span {s}..={e} outside 1..={}", self.length));
                }
            }
        }
        let gt = self
            .ground_truth()
            .map_err(|e| Error::ConfigOutOfBounds(format!("target box: {e}")))?;
        for (i, b) in gt.iter().enumerate() {
            let t = i + 1;
            let inside = b.x() >= 1.0
                && b.y() >= 1.0
                && b.right() <= cw as f64 - 1.0
                && b.bottom() <= ch as f64 - 1.0;
            let excused = self
                .active(t)
                .any(|e| matches!(e, SynthEvent::OutOfView { .. }));
            if !inside && !excused {
                return bad(format!(
                    "target leaves the canvas at frame {t} without an out-of-view event"
                ));
            }
        }
        Ok(())
    }
}

/// Random-color checkerboard with per-pixel variation.
#[derive(Debug, Clone)]
struct Texture {
    w: usize,
    h: usize,
    rgb: Vec<[f32; 3]>,
}

impl Texture {
    /// `(1 - a) * self + a * other`, texel by texel.
    fn blend(&self, other: &Texture, a: f32) -> Texture {
        let rgb = self
            .rgb
            .iter()
            .zip(&other.rgb)
            .map(|(p, q)| std::array::from_fn(|c| (1.0 - a) * p[c] + a * q[c]))
            .collect();
        Texture {
            w: self.w,
            h: self.h,
            rgb,
        }
    }

    fn checkerboard(w: usize, h: usize, cell: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cx, cy) = (w.div_ceil(cell), h.div_ceil(cell));
        let colors: Vec<[f32; 3]> = (0..cx * cy)
            .map(|_| std::array::from_fn(|_| rng.random_range(0.0..255.0f32)))
            .collect();
        let rgb = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                let base = colors[(y / cell) * cx + x / cell];
                std::array::from_fn(|c| {
                    (base[c] + rng.random_range(-20.0..20.0f32)).clamp(0.0, 255.0)
                })
            })
            .collect();
        Self { w, h, rgb }
    }

    /// Nearest texel for normalized coordinates in `[0, 1)`.
    fn sample(&self, u: f64, v: f64) -> [f32; 3] {
        let x = ((u * self.w as f64) as usize).min(self.w - 1);
        let y = ((v * self.h as f64) as usize).min(self.h - 1);
        self.rgb[y * self.w + x]
    }

    /// Paints the texture into every pixel whose center lies in `b`.
    fn paint(&self, img: &mut [[f32; 3]], width: usize, height: usize, b: &BoundingBox) {
        let x0 = (b.x() - 0.5).ceil().max(0.0) as usize;
        let y0 = (b.y() - 0.5).ceil().max(0.0) as usize;
        for py in y0..height {
            let cy = py as f64 + 0.5;
            if cy >= b.bottom() {
                break;
            }
            for px in x0..width {
                let cx = px as f64 + 0.5;
                if cx >= b.right() {
                    break;
                }
                img[py * width + px] = self.sample((cx - b.x()) / b.w(), (cy - b.y()) / b.h());
            }
        }
    }
}

/// Smooth background: bilinear interpolation of a coarse random lattice.
fn background(width: usize, height: usize, seed: u64) -> Vec<[f32; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB6);
    let (gx, gy) = (width / BACKGROUND_CELL + 2, height / BACKGROUND_CELL + 2);
    let lattice: Vec<[f32; 3]> = (0..gx * gy)
        .map(|_| std::array::from_fn(|_| rng.random_range(40.0..215.0f32)))
        .collect();
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let fy = y as f32 / BACKGROUND_CELL as f32;
        let (iy, ty) = (fy as usize, fy.fract());
        for x in 0..width {
            let fx = x as f32 / BACKGROUND_CELL as f32;
            let (ix, tx) = (fx as usize, fx.fract());
            let at = |i: usize, j: usize| lattice[j * gx + i];
            out.push(std::array::from_fn(|c| {
                let top = at(ix, iy)[c] * (1.0 - tx) + at(ix + 1, iy)[c] * tx;
                let bottom = at(ix, iy + 1)[c] * (1.0 - tx) + at(ix + 1, iy + 1)[c] * tx;
                top * (1.0 - ty) + bottom * ty
            }));
        }
    }
    out
}

/// Renders the configured sequence in memory.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Sequence> {
    cfg.validate()?;
    let [width, height] = cfg.canvas;
    let gt = cfg.ground_truth()?;
    let [_, _, tw, th] = cfg.target.bbox;
    let (tw, th) = (tw.ceil().max(1.0) as usize, th.ceil().max(1.0) as usize);
    let target = Texture::checkerboard(tw, th, cfg.target.cell, cfg.target.texture_seed);
    let occluder = Texture::checkerboard(32, 32, 16, cfg.seed ^ 0x0CC1);

    let mut scene = background(width, height, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xC1);
    for e in &cfg.events {
        if let SynthEvent::Clutter { density } = e {
            let count = (density * (width * height) as f64 / (tw * th) as f64).round() as usize;
            for i in 0..count {
                let x = rng.random_range(0.0..(width - tw.min(width - 1)) as f64);
                let y = rng.random_range(0.0..(height - th.min(height - 1)) as f64);
                let seed = cfg.target.texture_seed.wrapping_add(1000 + i as u64);
                let tex = Texture::checkerboard(tw, th, cfg.target.cell, seed);
                tex.paint(
                    &mut scene,
                    width,
                    height,
                    &BoundingBox::new(x, y, tw as f64, th as f64)?,
                );
            }
        }
    }

    let noise = Normal::new(0.0, cfg.noise.max(0.0)).expect("finite non-negative sigma");
    let frames = gt
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let t = i + 1;
            let mut img = scene.clone();
            let morph = cfg.active(t).find_map(|e| match e {
                SynthEvent::Morph {
                    start,
                    end,
                    texture_seed,
                } => Some((*start, *end, *texture_seed)),
                _ => None,
            });
            match morph {
                Some((start, end, seed)) => {
                    let a = if end > start {
                        ((t - start) as f32 / (end - start) as f32).min(1.0)
                    } else {
                        1.0
                    };
                    let other = Texture::checkerboard(tw, th, cfg.target.cell, seed);
                    target.blend(&other, a).paint(&mut img, width, height, b);
                }
                None => target.paint(&mut img, width, height, b),
            }
            let mut gain = 1.0f32;
            for e in cfg.active(t) {
                match e {
                    SynthEvent::Occlusion { occluder: o, .. } => {
                        let ob = match o {
                            Some([x, y, w, h]) => BoundingBox::new(*x, *y, *w, *h)?,
                            None => BoundingBox::new(
                                b.x() - 0.1 * b.w(),
                                b.y() - 0.1 * b.h(),
                                1.2 * b.w(),
                                1.2 * b.h(),
                            )?,
                        };
                        occluder.paint(&mut img, width, height, &ob);
                    }
                    SynthEvent::Illumination { gain: g, .. } => gain *= *g as f32,
                    _ => {}
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(
                cfg.seed.wrapping_mul(0x9E37_79B9).wrapping_add(t as u64),
            );
            let pixels = img
                .iter()
                .flat_map(|p| *p)
                .map(|v| {
                    let n = if cfg.noise > 0.0 {
                        noise.sample(&mut rng) as f32
                    } else {
                        0.0
                    };
                    (v * gain + n).round().clamp(0.0, 255.0) as u8
                })
                .collect();
            Frame::new(width, height, pixels, t)
        })
        .collect::<Result<Vec<_>>>()?;
    Sequence::from_frames(cfg.name.clone(), frames, Some(gt), cfg.implied_attributes())
}

/// Back-and-forth horizontal motion at `speed` px/frame, turning around
/// every `leg` frames.
fn shuttle(speed: f64, leg: usize, length: usize) -> Vec<MotionSegment> {
    (0..length.div_ceil(leg))
        .map(|i| MotionSegment {
            start: 1 + i * leg,
            velocity: [if i % 2 == 0 { speed } else { -speed }, 0.0],
            scale_rate: 1.0,
        })
        .collect()
}

/// The bundled synthetic suite: drift, occlusion, illumination change,
/// clutter, scale change and fast motion.
pub fn standard_suite() -> Vec<SynthConfig> {
    let base = |name: &str, seed: u64, length: usize| SynthConfig {
        noise: 4.0,
        target: TargetSpec {
            bbox: [60.0, 100.0, 40.0, 40.0],
            texture_seed: seed,
            cell: default_cell(),
        },
        ..SynthConfig::still(name, length, seed)
    };
    vec![
        SynthConfig {
            motion: shuttle(2.0, 100, 200),
            ..base("drift", 1, 200)
        },
        SynthConfig {
            motion: shuttle(1.0, 75, 150),
            events: vec![
                SynthEvent::Occlusion {
                    start: 61,
                    end: 70,
                    occluder: Some([114.0, 94.0, 62.0, 52.0]),
                },
                SynthEvent::Morph {
                    start: 2,
                    end: 60,
                    texture_seed: 102,
                },
                SynthEvent::Clutter { density: 0.05 },
            ],
            ..base("occlusion", 2, 150)
        },
        SynthConfig {
            motion: shuttle(1.5, 60, 120),
            events: vec![SynthEvent::Illumination {
                start: 40,
                end: 80,
                gain: 0.6,
            }],
            ..base("illumination", 3, 120)
        },
        SynthConfig {
            motion: shuttle(1.5, 60, 120),
            events: vec![SynthEvent::Clutter { density: 0.15 }],
            ..base("clutter", 4, 120)
        },
        SynthConfig {
            motion: vec![
                MotionSegment {
                    start: 1,
                    velocity: [1.0, 0.0],
                    scale_rate: 1.005,
                },
                MotionSegment {
                    start: 61,
                    velocity: [1.0, 0.0],
                    scale_rate: 1.0 / 1.005,
                },
            ],
            ..base("scale", 5, 120)
        },
        SynthConfig {
            motion: shuttle(12.0, 15, 120),
            ..base("fast", 6, 120)
        },
    ]
}
