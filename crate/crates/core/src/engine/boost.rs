//! Modified AdaBoost committee update.
//!
//! Each round draws up to `m` uncertain samples according to the current
//! re-sampling distribution, trains a candidate model on the drawn subset
//! plus the member's store, and measures the weighted error of that model
//! over the whole uncertain set. Correctly classified samples are
//! down-weighted by `beta = eps / (1 - eps)` and the distribution is
//! renormalized. The round with the smallest error wins: its subset is
//! appended to the member's store and its `beta` becomes the member's
//! voting weight.

use rand::Rng;

use crate::learners::knn::{mean_top, push_top, Neighbors, QueryBatch};
use crate::learners::{CommitteeMember, KnnModel, Label, Sample};

/// Error window applied before computing `beta`.
pub const EPS_MIN: f64 = 1e-4;
pub const EPS_MAX: f64 = 0.5 - 1e-4;

/// `eps / (1 - eps)` after clamping `eps` into `[EPS_MIN, EPS_MAX]`.
pub fn beta_from_error(eps: f64) -> f64 {
    let e = eps.clamp(EPS_MIN, EPS_MAX);
    e / (1.0 - e)
}

/// Trains a candidate model for one round and predicts every uncertain
/// sample with it.
pub trait RoundLearner {
    /// Labels predicted for all uncertain samples by a model trained on
    /// the member's store plus the samples at `drawn`.
    fn predict(&mut self, drawn: &[usize]) -> Vec<Label>;
}

impl<F: FnMut(&[usize]) -> Vec<Label>> RoundLearner for F {
    fn predict(&mut self, drawn: &[usize]) -> Vec<Label> {
        self(drawn)
    }
}

/// Full trace of one boosting run.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostState {
    /// Re-sampling distribution before each round, plus the final one.
    pub pi: Vec<Vec<f64>>,
    /// Weighted error of each round, unclamped.
    pub epsilon: Vec<f64>,
    pub beta: Vec<f64>,
    /// Indices drawn in each round, in draw order.
    pub drawn: Vec<Vec<usize>>,
    /// Predictions of each round's model.
    pub predictions: Vec<Vec<Label>>,
    /// Zero-based index of the winning round.
    pub tau_star: usize,
}

impl BoostState {
    /// Winning subset, sorted ascending.
    pub fn selected(&self) -> Vec<usize> {
        let mut s = self.drawn[self.tau_star].clone();
        s.sort_unstable();
        s
    }

    pub fn selected_beta(&self) -> f64 {
        self.beta[self.tau_star]
    }

    pub fn selected_epsilon(&self) -> f64 {
        self.epsilon[self.tau_star]
    }
}

/// Draws `count` distinct indices, each draw proportional to `weights`
/// among the indices not yet drawn. Consumes exactly `count` uniforms.
pub fn weighted_draw<R: Rng>(weights: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    let count = count.min(weights.len());
    let mut taken = vec![false; weights.len()];
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let u: f64 = rng.random();
        let remaining: f64 = weights
            .iter()
            .zip(&taken)
            .filter(|(_, &t)| !t)
            .map(|(w, _)| w)
            .sum();
        let target = u * remaining;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, (&w, &t)) in weights.iter().zip(&taken).enumerate() {
            if t {
                continue;
            }
            acc += w;
            pick = Some(i);
            if target < acc {
                break;
            }
        }
        let i = pick.expect("count <= number of items");
        taken[i] = true;
        out.push(i);
    }
    out
}

/// Runs `tau_b` boosting rounds over uncertain samples with the given
/// oracle `labels`, drawing `min(m, |U|)` samples per round. Returns
/// `None` when there are no uncertain samples.
pub fn modified_adaboost<R: Rng, L: RoundLearner>(
    labels: &[Label],
    m: usize,
    tau_b: usize,
    learner: &mut L,
    rng: &mut R,
) -> Option<BoostState> {
    let n = labels.len();
    if n == 0 || tau_b == 0 {
        return None;
    }
    let draw = m.min(n);
    let mut pi = vec![1.0 / n as f64; n];
    let mut state = BoostState {
        pi: Vec::with_capacity(tau_b + 1),
        epsilon: Vec::with_capacity(tau_b),
        beta: Vec::with_capacity(tau_b),
        drawn: Vec::with_capacity(tau_b),
        predictions: Vec::with_capacity(tau_b),
        tau_star: 0,
    };
    for _ in 0..tau_b {
        let drawn = weighted_draw(&pi, draw, rng);
        let predicted = learner.predict(&drawn);
        debug_assert_eq!(predicted.len(), n);
        let eps: f64 = pi
            .iter()
            .zip(predicted.iter().zip(labels))
            .filter(|(_, (p, l))| p != l)
            .map(|(w, _)| w)
            .sum();
        let beta = beta_from_error(eps);
        state.pi.push(pi.clone());
        for (w, (p, l)) in pi.iter_mut().zip(predicted.iter().zip(labels)) {
            if p == l {
                *w *= beta;
            }
        }
        let z: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|w| *w /= z);
        state.epsilon.push(eps);
        state.beta.push(beta);
        state.drawn.push(drawn);
        state.predictions.push(predicted);
    }
    state.pi.push(pi);
    state.tau_star =
        state.epsilon.iter().enumerate().fold(
            0,
            |best, (i, &e)| if e < state.epsilon[best] { i } else { best },
        );
    Some(state)
}

/// Uncertain samples of one frame with the similarity data every member
/// shares: the normalized batch, its Gram matrix, and a representative
/// index per distinct `(row, label)` pair.
#[derive(Debug, Clone)]
pub struct UncertainSet {
    pub samples: Vec<Sample>,
    /// Position of each sample in the frame's candidate list.
    pub candidates: Vec<usize>,
    batch: QueryBatch,
    gram: Vec<f32>,
    representative: Vec<usize>,
}

impl UncertainSet {
    pub fn new(samples: Vec<Sample>, candidates: Vec<usize>) -> crate::Result<Self> {
        let features: Vec<_> = samples.iter().map(|s| s.features.clone()).collect();
        Ok(Self::with_batch(
            samples,
            candidates,
            QueryBatch::new(&features)?,
        ))
    }

    /// Like [`UncertainSet::new`] with `batch` already holding the
    /// normalized features of `samples`.
    pub fn with_batch(samples: Vec<Sample>, candidates: Vec<usize>, batch: QueryBatch) -> Self {
        assert_eq!(samples.len(), batch.len());
        let gram = batch.self_similarity();
        let representative = (0..samples.len())
            .map(|i| {
                (0..i)
                    .find(|&j| samples[j].label == samples[i].label && batch.row(j) == batch.row(i))
                    .unwrap_or(i)
            })
            .collect();
        Self {
            samples,
            candidates,
            batch,
            gram,
            representative,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn batch(&self) -> &QueryBatch {
        &self.batch
    }
}

/// Round learner for a k-NN member. A model trained on `D_c` plus a drawn
/// subset scores each uncertain sample from the union of its cached
/// neighbours in `D_c` and its similarities to the drawn samples, which
/// gives the same score as retraining.
pub struct CachedKnnLearner<'a> {
    set: &'a UncertainSet,
    base: Neighbors,
    /// Whether each uncertain sample already sits in the member's index.
    indexed: Vec<bool>,
    k: usize,
}

impl<'a> CachedKnnLearner<'a> {
    /// `base` holds the neighbours of every uncertain sample in `model`.
    pub fn new(model: &KnnModel, set: &'a UncertainSet, base: Neighbors) -> Self {
        let indexed = (0..set.len())
            .map(|i| model.contains_normalized(set.batch.row(i), set.samples[i].label))
            .collect();
        Self {
            set,
            base,
            indexed,
            k: model.k(),
        }
    }

    /// Scores of every uncertain sample under `D_c` plus `drawn`.
    pub fn scores(&self, drawn: &[usize]) -> Vec<f64> {
        let mut added: Vec<usize> = drawn
            .iter()
            .map(|&j| self.set.representative[j])
            .filter(|&j| !self.indexed[j])
            .collect();
        added.sort_unstable();
        added.dedup();
        let n = self.set.len();
        let k = self.k;
        let mut pos = vec![f32::NEG_INFINITY; k];
        let mut neg = vec![f32::NEG_INFINITY; k];
        (0..n)
            .map(|i| {
                pos.copy_from_slice(self.base.top(i, Label::Positive));
                neg.copy_from_slice(self.base.top(i, Label::Negative));
                let row = &self.set.gram[i * n..(i + 1) * n];
                for &j in &added {
                    let top = match self.set.samples[j].label {
                        Label::Positive => &mut pos,
                        Label::Negative => &mut neg,
                    };
                    push_top(top, row[j]);
                }
                mean_top(&pos) - mean_top(&neg)
            })
            .collect()
    }
}

impl RoundLearner for CachedKnnLearner<'_> {
    fn predict(&mut self, drawn: &[usize]) -> Vec<Label> {
        self.scores(drawn)
            .into_iter()
            .map(Label::from_score)
            .collect()
    }
}

/// Boosts one member on the frame's uncertain set and extends its store
/// with the winning subset. Leaves the member untouched when the set is
/// empty. `base` are the member's neighbours of every uncertain sample.
pub fn boost_member<R: Rng>(
    member: &mut CommitteeMember,
    set: &UncertainSet,
    base: Neighbors,
    m: usize,
    tau_b: usize,
    rng: &mut R,
) -> Option<BoostState> {
    if set.is_empty() {
        return None;
    }
    let labels = set.labels();
    let mut learner = CachedKnnLearner::new(&member.model, set, base);
    let state = modified_adaboost(&labels, m, tau_b, &mut learner, rng)?;
    member.extend(state.selected().into_iter().map(|i| set.samples[i].clone()));
    member.set_beta(state.selected_beta());
    Some(state)
}
