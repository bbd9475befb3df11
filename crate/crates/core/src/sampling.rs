//! Candidate generation around the previous target state and the labeled
//! bootstrap set built from the annotated first frame.

use rand::seq::index;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureVector, Featurizer, Frame};
use crate::geometry::{iou, BoundingBox, Transformation};
use crate::learners::Label;
use crate::{par, Error, Result};

/// Consecutive rejections tolerated before giving up on a quota.
pub const MAX_REJECTIONS: usize = 100;

/// Independent random streams of one tracker run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Candidates,
    Bootstrap,
    Committee,
    RandomQuery,
    Boost(usize),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Candidates => 1,
            Stream::Bootstrap => 2,
            Stream::Committee => 3,
            Stream::RandomQuery => 4,
            Stream::Boost(member) => 16 + member as u64,
        }
    }
}

/// A generator determined by `(seed, frame, stream)` alone, so any frame
/// can be replayed without running the ones before it.
pub fn stream_rng(seed: u64, frame: usize, stream: Stream) -> ChaCha8Rng {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (frame as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream.id());
    rng
}

/// Standard deviations of the candidate distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSigma {
    /// Horizontal shift, pixels.
    pub dx: f64,
    /// Vertical shift, pixels.
    pub dy: f64,
    /// Log-scale.
    pub ds: f64,
}

impl SearchSigma {
    pub const ZERO: Self = Self {
        dx: 0.0,
        dy: 0.0,
        ds: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n: usize,
    pub sigma: SearchSigma,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::ConfigOutOfBounds("n must be at least 1".into()));
        }
        let s = self.sigma;
        if !(s.dx >= 0.0 && s.dy >= 0.0 && s.ds >= 0.0) {
            return Err(Error::ConfigOutOfBounds(
                "search sigmas must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// `n` candidate moves. The first is always the identity; the rest draw
/// `dx ~ N(0, sigma.dx^2)`, `dy ~ N(0, sigma.dy^2)` and
/// `ds = exp(N(0, sigma.ds^2))`.
pub fn sample_transformations<R: Rng>(cfg: &SamplerConfig, rng: &mut R) -> Vec<Transformation> {
    let mut out = Vec::with_capacity(cfg.n);
    if cfg.n == 0 {
        return out;
    }
    out.push(Transformation::IDENTITY);
    for _ in 1..cfg.n {
        let zx: f64 = rng.sample(StandardNormal);
        let zy: f64 = rng.sample(StandardNormal);
        let zs: f64 = rng.sample(StandardNormal);
        let t = Transformation::new(
            cfg.sigma.dx * zx,
            cfg.sigma.dy * zy,
            (cfg.sigma.ds * zs).exp(),
        )
        .expect("exp is positive");
        out.push(t);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    /// Total number of first-frame samples.
    pub m_prime: usize,
    /// Bound on positive jitter, pixels, applied to position and size.
    pub perturb_radius: f64,
    /// Annulus for local negatives, in units of the target diagonal.
    pub neg_ring: [f64; 2],
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            m_prime: 400,
            perturb_radius: 5.0,
            neg_ring: [0.5, 1.5],
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_prime < 4 {
            return Err(Error::ConfigOutOfBounds(
                "m_prime must be at least 4".into(),
            ));
        }
        if self.perturb_radius.is_nan() || self.perturb_radius < 0.0 {
            return Err(Error::ConfigOutOfBounds(
                "perturb_radius must be non-negative".into(),
            ));
        }
        let [inner, outer] = self.neg_ring;
        if !(inner >= 0.0 && outer > inner) {
            return Err(Error::ConfigOutOfBounds(
                "neg_ring must satisfy 0 <= inner < outer".into(),
            ));
        }
        Ok(())
    }

    /// Positive, local-negative and global-negative counts.
    pub fn quotas(&self) -> (usize, usize, usize) {
        let pos = self.m_prime / 2;
        let local = self.m_prime / 4;
        (pos, local, self.m_prime - pos - local)
    }
}

/// Which part of the bootstrap recipe produced a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BootstrapKind {
    Positive,
    LocalNegative,
    GlobalNegative,
}

#[derive(Debug, Clone)]
pub struct BootstrapSample {
    pub bx: BoundingBox,
    pub features: FeatureVector,
    pub label: Label,
    pub kind: BootstrapKind,
}

const POSITIVE_MIN_IOU: f64 = 0.7;
const LOCAL_MAX_IOU: f64 = 0.3;
const GLOBAL_MAX_IOU: f64 = 0.1;

fn rejection<R: Rng>(
    rng: &mut R,
    what: &'static str,
    mut draw: impl FnMut(&mut R) -> Option<BoundingBox>,
) -> Result<BoundingBox> {
    for _ in 0..MAX_REJECTIONS {
        if let Some(b) = draw(rng) {
            return Ok(b);
        }
    }
    Err(Error::DegenerateFrame {
        what,
        attempts: MAX_REJECTIONS,
    })
}

/// Boxes of the bootstrap set, without features.
pub fn bootstrap_boxes<R: Rng>(
    frame_bounds: &BoundingBox,
    p1: &BoundingBox,
    cfg: &BootstrapConfig,
    rng: &mut R,
) -> Result<Vec<(BoundingBox, BootstrapKind)>> {
    cfg.validate()?;
    let (n_pos, n_local, n_global) = cfg.quotas();
    let mut out = Vec::with_capacity(cfg.m_prime);
    let r = cfg.perturb_radius;
    let visible = |b: &BoundingBox| b.intersection_area(frame_bounds) > 0.0;

    for _ in 0..n_pos {
        if r == 0.0 {
            out.push((*p1, BootstrapKind::Positive));
            continue;
        }
        let b = rejection(rng, "positive jitter", |rng| {
            let mut jitter = || -> Option<f64> {
                let v = 0.5 * r * rng.sample::<f64, _>(StandardNormal);
                (v.abs() <= r).then_some(v)
            };
            let (dx, dy, dw) = (jitter()?, jitter()?, jitter()?);
            let ds = (p1.w() + dw) / p1.w();
            let b = p1.apply(&Transformation::new(dx, dy, ds).ok()?);
            (iou(&b, p1) >= POSITIVE_MIN_IOU && visible(&b)).then_some(b)
        })?;
        out.push((b, BootstrapKind::Positive));
    }

    let diag = p1.diagonal();
    let (cx, cy) = p1.center();
    let [inner, outer] = cfg.neg_ring;
    for _ in 0..n_local {
        let b = rejection(rng, "local negative", |rng| {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let rad = diag * rng.random_range(inner..outer);
            let (nx, ny) = (cx + rad * theta.cos(), cy + rad * theta.sin());
            if !(0.0..frame_bounds.w()).contains(&nx) || !(0.0..frame_bounds.h()).contains(&ny) {
                return None;
            }
            let b = p1.translated(nx - cx, ny - cy);
            (iou(&b, p1) <= LOCAL_MAX_IOU).then_some(b)
        })?;
        out.push((b, BootstrapKind::LocalNegative));
    }

    let span = |frame: f64, size: f64| {
        let slack = frame - size;
        (slack.min(0.0), slack.max(0.0))
    };
    let (x_lo, x_hi) = span(frame_bounds.w(), p1.w());
    let (y_lo, y_hi) = span(frame_bounds.h(), p1.h());
    for _ in 0..n_global {
        let b = rejection(rng, "global negative", |rng| {
            let x = if x_hi > x_lo {
                rng.random_range(x_lo..=x_hi)
            } else {
                x_lo
            };
            let y = if y_hi > y_lo {
                rng.random_range(y_lo..=y_hi)
            } else {
                y_lo
            };
            let b = BoundingBox::new(x, y, p1.w(), p1.h()).ok()?;
            (iou(&b, p1) <= GLOBAL_MAX_IOU).then_some(b)
        })?;
        out.push((b, BootstrapKind::GlobalNegative));
    }
    Ok(out)
}

/// Labeled first-frame samples: half jittered positives, a quarter local
/// negatives from an annulus around the target, a quarter global negatives
/// drawn uniformly over the frame.
pub fn initial_training_set<R: Rng>(
    frame: &Frame,
    p1: &BoundingBox,
    cfg: &BootstrapConfig,
    featurizer: &Featurizer,
    rng: &mut R,
) -> Result<Vec<BootstrapSample>> {
    if p1.intersection_area(&frame.bounds()) <= 0.0 {
        return Err(Error::BoxOutsideFrame);
    }
    let boxes = bootstrap_boxes(&frame.bounds(), p1, cfg, rng)?;
    let features = par::map(&boxes, |(b, _)| featurizer.featurize(frame, b));
    boxes
        .into_iter()
        .zip(features)
        .map(|((bx, kind), f)| {
            Ok(BootstrapSample {
                bx,
                features: f?,
                label: if kind == BootstrapKind::Positive {
                    Label::Positive
                } else {
                    Label::Negative
                },
                kind,
            })
        })
        .collect()
}

/// Redraws allowed per member before a store is declared impossible.
const MAX_REDRAWS: usize = 1000;

/// Draws `c` index sets of size `m` uniformly without replacement from
/// `labels`, independently per member. Every set holds both classes.
/// Indices are returned in ascending order.
pub fn bootstrap_committee<R: Rng>(
    labels: &[Label],
    c: usize,
    m: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if m > labels.len() {
        return Err(Error::ConfigOutOfBounds(format!(
            "m = {m} exceeds the {} bootstrap samples",
            labels.len()
        )));
    }
    let has = |l| labels.contains(&l);
    if m < 2 || !has(Label::Positive) || !has(Label::Negative) {
        return Err(Error::InsufficientDiversity);
    }
    let mut stores = Vec::with_capacity(c);
    for _ in 0..c {
        let mut drawn = None;
        for _ in 0..MAX_REDRAWS {
            let mut idx = index::sample(rng, labels.len(), m).into_vec();
            let pos = idx
                .iter()
                .filter(|&&i| labels[i] == Label::Positive)
                .count();
            if pos > 0 && pos < m {
                idx.sort_unstable();
                drawn = Some(idx);
                break;
            }
        }
        stores.push(drawn.ok_or(Error::InsufficientDiversity)?);
    }
    Ok(stores)
}
