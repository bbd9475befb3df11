//! Committee voting, oracle query decisions and candidate averaging.

use rand::Rng;

use crate::engine::config::{QbstConfig, QueryMode};
use crate::geometry::Transformation;
use crate::learners::{vote_weight, Label};

/// Normalized weighted vote: `sum_c w_c * vote_c / sum_c w_c` with
/// `w_c = log(1 / beta_c)`. Lies in `[-1, 1]` and is `+-1` exactly when the
/// committee is unanimous.
pub fn committee_score(betas: &[f64], votes: &[Label]) -> f64 {
    assert_eq!(betas.len(), votes.len(), "one vote per member");
    if let Some(first) = votes.first() {
        if votes.iter().all(|v| v == first) {
            return first.sign();
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (&b, v) in betas.iter().zip(votes) {
        let w = vote_weight(b);
        num += w * v.sign();
        den += w;
    }
    if den == 0.0 {
        return 0.0;
    }
    (num / den).clamp(-1.0, 1.0)
}

/// Whether the candidate with committee score `s` is sent to the oracle.
/// `coin` is a uniform draw in `[0, 1)`, used only by the random mode.
pub fn needs_query(s: f64, cfg: &QbstConfig, coin: f64) -> bool {
    match cfg.query_mode {
        QueryMode::Active => {
            let (lo, hi) = cfg.thresholds();
            cfg.delta > 0.0 && lo <= s && s <= hi
        }
        QueryMode::Random(p) => coin < p,
        QueryMode::OracleOnly => true,
        QueryMode::CommitteeOnly => false,
    }
}

/// Final label of one candidate and whether the oracle provided it.
pub fn active_label<R: Rng>(
    s: f64,
    cfg: &QbstConfig,
    oracle_score: impl FnOnce() -> f64,
    rng: &mut R,
) -> (Label, bool) {
    let coin = rng.random::<f64>();
    if needs_query(s, cfg, coin) {
        (Label::from_score(oracle_score()), true)
    } else {
        (Label::from_score(s), false)
    }
}

/// A scored and labeled candidate move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredCandidate {
    pub transformation: Transformation,
    pub score: f64,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Localization {
    pub transformation: Transformation,
    pub target_lost: bool,
}

/// Convex combination of the positive candidates, weighted by their
/// clipped committee scores; `dx` and `dy` are averaged linearly and `ds`
/// in log space. Falls back to the best positive when no positive has a
/// positive score, and to the identity with `target_lost` when no
/// candidate is positive.
pub fn localize(candidates: &[ScoredCandidate]) -> Localization {
    let positives: Vec<&ScoredCandidate> = candidates
        .iter()
        .filter(|c| c.label == Label::Positive)
        .collect();
    if positives.is_empty() {
        return Localization {
            transformation: Transformation::IDENTITY,
            target_lost: true,
        };
    }
    let total: f64 = positives.iter().map(|c| c.score.max(0.0)).sum();
    let weighted: Vec<(f64, &ScoredCandidate)> = positives
        .iter()
        .filter(|c| c.score > 0.0)
        .map(|c| (c.score / total, *c))
        .collect();
    let found = |transformation| Localization {
        transformation,
        target_lost: false,
    };
    match weighted.as_slice() {
        [] => {
            let best =
                positives.iter().fold(
                    positives[0],
                    |best, c| if c.score > best.score { c } else { best },
                );
            found(best.transformation)
        }
        [(_, only)] => found(only.transformation),
        _ => {
            let (mut dx, mut dy, mut log_ds) = (0.0, 0.0, 0.0);
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for (w, c) in &weighted {
                let t = c.transformation;
                let v = [t.dx(), t.dy(), t.ds().ln()];
                dx += w * v[0];
                dy += w * v[1];
                log_ds += w * v[2];
                for i in 0..3 {
                    lo[i] = lo[i].min(v[i]);
                    hi[i] = hi[i].max(v[i]);
                }
            }
            // Rounding can leave the sum an ulp outside the hull.
            let t = Transformation::new(
                dx.clamp(lo[0], hi[0]),
                dy.clamp(lo[1], hi[1]),
                log_ds.clamp(lo[2], hi[2]).exp(),
            )
            .expect("exp is positive");
            found(t)
        }
    }
}
