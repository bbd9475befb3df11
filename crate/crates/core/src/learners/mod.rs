//! Labeled sample stores and the classifiers trained on them.
//!
//! Committee members and the oracle share one classifier family: a lazy
//! k-NN scorer (see [`knn`]). Training indexes a store; scoring compares a
//! probe against its nearest stored positives and negatives.

pub mod knn;
mod store;

pub use knn::{KnnModel, DEFAULT_K};
pub use store::{evict, Sample, SampleStore, CHECKPOINT_VERSION};

use serde::{Deserialize, Serialize};

/// Smallest boosting weight a member may carry.
pub const BETA_MIN: f64 = 1e-4;
/// Largest boosting weight a member may carry.
pub const BETA_MAX: f64 = 1.0 - 1e-4;

/// Binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    /// Sign of `score`, with zero counted as positive.
    pub fn from_score(score: f64) -> Self {
        if score >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }

    pub fn from_i8(v: i8) -> Option<Self> {
        match v {
            1 => Some(Label::Positive),
            -1 => Some(Label::Negative),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }
}

/// Clamps a boosting weight into `[BETA_MIN, BETA_MAX]`.
pub fn clamp_beta(beta: f64) -> f64 {
    if beta.is_nan() {
        return BETA_MAX;
    }
    beta.clamp(BETA_MIN, BETA_MAX)
}

/// Voting weight `log(1/beta)` of a clamped boosting weight.
pub fn vote_weight(beta: f64) -> f64 {
    (1.0 / clamp_beta(beta)).ln()
}

/// A short-memory committee member: its private store, the model indexed
/// from it, and its boosting weight.
#[derive(Debug, Clone)]
pub struct CommitteeMember {
    pub store: SampleStore,
    pub model: KnnModel,
    beta: f64,
}

impl CommitteeMember {
    pub fn new(store: SampleStore, k: usize, beta: f64) -> crate::Result<Self> {
        let model = KnnModel::train(&store, k)?;
        Ok(Self {
            store,
            model,
            beta: clamp_beta(beta),
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn set_beta(&mut self, beta: f64) {
        self.beta = clamp_beta(beta);
    }

    pub fn weight(&self) -> f64 {
        vote_weight(self.beta)
    }

    /// Appends samples to the store and to the model index.
    pub fn extend(&mut self, samples: impl IntoIterator<Item = Sample>) {
        let samples: Vec<Sample> = samples.into_iter().collect();
        let evicts = self.store.push_all(samples.iter().cloned());
        if evicts {
            // Eviction changed the store beyond an append; rebuild.
            self.model = KnnModel::train(&self.store, self.model.k())
                .expect("eviction preserves both classes");
        } else {
            self.model.extend(&samples);
        }
    }
}

/// Long-memory classifier over every labeled sample, re-indexed only when
/// [`OracleModel::retrain`] is called.
#[derive(Debug, Clone)]
pub struct OracleModel {
    store: SampleStore,
    model: KnnModel,
    last_trained: usize,
    /// Store entries already in the index.
    indexed: usize,
    /// Set when eviction reshuffled entries the index already holds.
    stale: bool,
}

impl OracleModel {
    pub fn new(store: SampleStore, k: usize, frame: usize) -> crate::Result<Self> {
        let model = KnnModel::train(&store, k)?;
        Ok(Self {
            indexed: store.len(),
            store,
            model,
            last_trained: frame,
            stale: false,
        })
    }

    pub fn store(&self) -> &SampleStore {
        &self.store
    }

    pub fn model(&self) -> &KnnModel {
        &self.model
    }

    pub fn last_trained(&self) -> usize {
        self.last_trained
    }

    /// Appends labeled samples to the store without touching the index.
    pub fn add(&mut self, samples: impl IntoIterator<Item = Sample>) {
        if self.store.push_all(samples) {
            self.stale = true;
        }
    }

    /// Brings the index up to date with the store. Appended entries are
    /// indexed incrementally; after an eviction the index is rebuilt. On
    /// failure the previous model is kept.
    pub fn retrain(&mut self, frame: usize) -> crate::Result<()> {
        if self.stale {
            self.model = KnnModel::train(&self.store, self.model.k())?;
            self.stale = false;
        } else {
            self.model.extend(&self.store.entries()[self.indexed..]);
        }
        self.indexed = self.store.len();
        self.last_trained = frame;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_of_zero_is_positive() {
        assert_eq!(Label::from_score(0.0), Label::Positive);
        assert_eq!(Label::from_score(-0.0), Label::Positive);
        assert_eq!(Label::from_score(-1e-300), Label::Negative);
    }

    #[test]
    fn clamped_weights_are_finite_and_positive() {
        for beta in [0.0, 1e-9, 0.5, 1.0, 2.0, f64::NAN] {
            let w = vote_weight(beta);
            assert!(
                w > 0.0 && w <= (1.0 / BETA_MIN).ln() + 1e-12,
                "{beta} -> {w}"
            );
        }
        assert!((vote_weight(0.5) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn label_round_trips_through_i8() {
        for l in [Label::Positive, Label::Negative] {
            assert_eq!(Label::from_i8(l.as_i8()), Some(l));
        }
        assert_eq!(Label::from_i8(0), None);
    }
}
