use serde::{Deserialize, Serialize};

use crate::features::FeatureConfig;
use crate::geometry::BoundingBox;
use crate::learners::DEFAULT_K;
use crate::sampling::{BootstrapConfig, SamplerConfig, SearchSigma};
use crate::{Error, Result};

/// How labels are obtained for candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    /// Query the oracle when the committee score falls in `[-delta, delta]`.
    Active,
    /// Query the oracle with a fixed probability, ignoring the score.
    Random(f64),
    /// Always query the oracle.
    OracleOnly,
    /// Never query; the committee labels everything.
    CommitteeOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QbstConfig {
    /// Committee size `C`.
    pub committee_size: usize,
    /// Samples added to each member per frame.
    pub m: usize,
    /// Boosting rounds per member per frame.
    pub tau_b: usize,
    /// Oracle retrain interval, frames.
    pub delta_oracle: usize,
    /// Query band half-width.
    pub delta: f64,
    pub query_mode: QueryMode,
}

impl Default for QbstConfig {
    fn default() -> Self {
        Self {
            committee_size: 7,
            m: 130,
            tau_b: 15,
            delta_oracle: 11,
            delta: 0.38,
            query_mode: QueryMode::Active,
        }
    }
}

impl QbstConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::ConfigOutOfBounds(msg.into()));
        if self.committee_size == 0 {
            return bad("committee_size must be at least 1");
        }
        if self.m == 0 {
            return bad("m must be at least 1");
        }
        if self.tau_b == 0 {
            return bad("tau_b must be at least 1");
        }
        if self.delta_oracle == 0 {
            return bad("delta_oracle must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return bad("delta must lie in [0, 1]");
        }
        if let QueryMode::Random(p) = self.query_mode {
            if !(0.0..=1.0).contains(&p) {
                return bad("random query probability must lie in [0, 1]");
            }
        }
        Ok(())
    }

    /// Lower and upper labeling thresholds `(-delta, +delta)`.
    pub fn thresholds(&self) -> (f64, f64) {
        (-self.delta, self.delta)
    }
}

/// Candidate spread relative to the current target box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Candidates per frame.
    pub n: usize,
    /// Horizontal standard deviation as a fraction of the box width.
    pub rel_dx: f64,
    /// Vertical standard deviation as a fraction of the box height.
    pub rel_dy: f64,
    /// Standard deviation of the log-scale.
    pub sigma_ds: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            rel_dx: 0.5,
            rel_dy: 0.5,
            sigma_ds: 0.05,
        }
    }
}

impl SearchConfig {
    pub fn sampler(&self, target: &BoundingBox) -> SamplerConfig {
        SamplerConfig {
            n: self.n,
            sigma: SearchSigma {
                dx: self.rel_dx * target.w(),
                dy: self.rel_dy * target.h(),
                ds: self.sigma_ds,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::ConfigOutOfBounds("n must be at least 1".into()));
        }
        if !(self.rel_dx >= 0.0 && self.rel_dy >= 0.0 && self.sigma_ds >= 0.0) {
            return Err(Error::ConfigOutOfBounds(
                "search spreads must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    /// Neighbours per class in the margin scorer.
    pub k: usize,
    /// Optional cap on each committee store; unbounded when absent.
    pub committee_budget: Option<usize>,
    /// Optional cap on the oracle store; unbounded when absent.
    pub oracle_budget: Option<usize>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            committee_budget: None,
            oracle_budget: None,
        }
    }
}

/// Everything a tracker run needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub seed: u64,
    pub qbst: QbstConfig,
    pub search: SearchConfig,
    pub bootstrap: BootstrapConfig,
    pub features: FeatureConfig,
    pub learner: LearnerConfig,
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.qbst.validate()?;
        self.search.validate()?;
        self.bootstrap.validate()?;
        self.features.validate()?;
        if self.learner.k == 0 {
            return Err(Error::ConfigOutOfBounds("k must be at least 1".into()));
        }
        for budget in [self.learner.committee_budget, self.learner.oracle_budget]
            .into_iter()
            .flatten()
        {
            if budget < 2 {
                return Err(Error::ConfigOutOfBounds(
                    "store budgets must be at least 2".into(),
                ));
            }
        }
        if self.qbst.m > self.bootstrap.m_prime {
            return Err(Error::ConfigOutOfBounds(format!(
                "m = {} exceeds m_prime = {}",
                self.qbst.m, self.bootstrap.m_prime
            )));
        }
        if self.bootstrap.m_prime < 2 * self.qbst.committee_size * self.qbst.m {
            log::debug!(
                "m_prime = {} is below 2 * C * m = {}; member stores will overlap heavily",
                self.bootstrap.m_prime,
                2 * self.qbst.committee_size * self.qbst.m
            );
        }
        Ok(())
    }
}
