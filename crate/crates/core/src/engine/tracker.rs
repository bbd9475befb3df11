//! Query-by-boosting tracker state and the per-frame loop.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::engine::boost::{boost_member, UncertainSet};
use crate::engine::config::{QbstConfig, TrackerConfig};
use crate::engine::vote::{committee_score, localize, needs_query, ScoredCandidate};
use crate::features::{FeatureVector, Featurizer, Frame};
use crate::geometry::{apply, BoundingBox, Transformation};
use crate::learners::knn::{Neighbors, QueryBatch};
use crate::learners::{CommitteeMember, Label, OracleModel, Sample, SampleStore};
use crate::par;
use crate::sampling::{
    bootstrap_committee, initial_training_set, sample_transformations, stream_rng, Stream,
};
use crate::{Error, Result};

/// Voting weight every member starts with.
pub const INITIAL_BETA: f64 = 0.5;

/// What happened on one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDiagnostics {
    /// One-based frame number.
    pub frame: usize,
    pub target: BoundingBox,
    /// Candidates that overlapped the frame.
    pub candidates: usize,
    /// Candidates labeled by the oracle.
    pub queries: usize,
    /// Winning boosting error per member; `None` when nothing was queried.
    pub epsilon: Vec<Option<f64>>,
    /// Member weights after the frame.
    pub beta: Vec<f64>,
    pub target_lost: bool,
    pub oracle_retrained: bool,
    pub elapsed: Duration,
    /// Set when the frame could not be processed and the previous box was
    /// held.
    pub failure: Option<String>,
}

/// Candidates of one frame with their committee scores.
#[derive(Debug, Clone)]
pub struct ScoredFrame {
    /// One-based frame number.
    pub frame: usize,
    pub moves: Vec<Transformation>,
    pub boxes: Vec<BoundingBox>,
    pub features: Vec<FeatureVector>,
    pub batch: QueryBatch,
    /// Per-member neighbor lists over `batch`.
    pub neighbors: Vec<Neighbors>,
    /// Normalized committee score per candidate.
    pub scores: Vec<f64>,
}

/// Labels of one scored frame under a query rule.
#[derive(Debug, Clone)]
pub struct FrameLabels {
    /// Candidates sent to the oracle, ascending.
    pub queried: Vec<usize>,
    pub labels: Vec<Label>,
    /// Features of the queried candidates.
    pub batch: QueryBatch,
}

/// Committee, oracle and current target of one tracking run.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    featurizer: Featurizer,
    committee: Vec<CommitteeMember>,
    oracle: OracleModel,
    target: BoundingBox,
    frame: usize,
}

impl Tracker {
    /// Builds the committee and oracle from the first frame and its
    /// ground-truth box.
    pub fn new(first: &Frame, p1: BoundingBox, cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        let featurizer = Featurizer::new(cfg.features)?;
        let mut rng = stream_rng(cfg.seed, 1, Stream::Bootstrap);
        let boot = initial_training_set(first, &p1, &cfg.bootstrap, &featurizer, &mut rng)?;
        let samples: Vec<Sample> = boot
            .iter()
            .map(|b| Sample::new(b.features.clone(), b.label, 1))
            .collect();
        let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
        let mut rng = stream_rng(cfg.seed, 1, Stream::Committee);
        let sets = bootstrap_committee(&labels, cfg.qbst.committee_size, cfg.qbst.m, &mut rng)?;
        let k = cfg.learner.k;
        let committee = sets
            .iter()
            .map(|idx| {
                let mut store = SampleStore::with_capacity_limit(cfg.learner.committee_budget);
                store.push_all(idx.iter().map(|&i| samples[i].clone()));
                CommitteeMember::new(store, k, INITIAL_BETA)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut store = SampleStore::with_capacity_limit(cfg.learner.oracle_budget);
        store.push_all(samples);
        let oracle = OracleModel::new(store, k, 1)?;
        Ok(Self {
            cfg,
            featurizer,
            committee,
            oracle,
            target: p1,
            frame: 1,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn target(&self) -> BoundingBox {
        self.target
    }

    /// Last processed one-based frame number.
    pub fn frame(&self) -> usize {
        self.frame
    }

    pub fn committee(&self) -> &[CommitteeMember] {
        &self.committee
    }

    pub fn oracle(&self) -> &OracleModel {
        &self.oracle
    }

    pub fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    /// Writes `committee_<c>.bin` per member and `oracle.bin` into `dir`.
    pub fn write_checkpoint(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let write = |name: String, store: &SampleStore| -> Result<()> {
            let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
            store.write_checkpoint(&mut w)?;
            w.flush()?;
            Ok(())
        };
        for (c, member) in self.committee.iter().enumerate() {
            write(format!("committee_{c}.bin"), &member.store)?;
        }
        write("oracle.bin".into(), self.oracle.store())
    }

    /// Processes the next frame. Failures are reported in the diagnostics
    /// and leave the previous box in place.
    pub fn track(&mut self, frame: &Frame) -> FrameDiagnostics {
        let t = self.frame + 1;
        let start = Instant::now();
        let mut diag = match self.step(frame, t) {
            Ok(d) => d,
            Err(e) => self.failed(t, e),
        };
        self.frame = t;
        diag.elapsed = start.elapsed();
        diag
    }

    /// Samples, featurizes and committee-scores the candidates of the next
    /// frame without changing any state.
    pub fn score_frame(&self, frame: &Frame) -> Result<ScoredFrame> {
        let t = self.frame + 1;
        let mut rng = stream_rng(self.cfg.seed, t, Stream::Candidates);
        let moves = sample_transformations(&self.cfg.search.sampler(&self.target), &mut rng);
        let bounds = frame.bounds();
        let (moves, boxes): (Vec<_>, Vec<_>) = moves
            .into_iter()
            .map(|y| (y, apply(&self.target, &y)))
            .filter(|(_, b)| b.intersection_area(&bounds) > 0.0)
            .unzip();
        if boxes.is_empty() {
            return Err(Error::BoxOutsideFrame);
        }
        let features: Vec<FeatureVector> =
            par::map(&boxes, |b| self.featurizer.featurize(frame, b))
                .into_iter()
                .collect::<Result<_>>()?;
        let batch = QueryBatch::new(&features)?;

        let neighbors = par::map(&self.committee, |c| c.model.neighbors(&batch))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let betas: Vec<f64> = self.committee.iter().map(|c| c.beta()).collect();
        let scores: Vec<f64> = (0..batch.len())
            .map(|i| {
                let votes: Vec<Label> = neighbors
                    .iter()
                    .map(|nb| Label::from_score(nb.score(i)))
                    .collect();
                committee_score(&betas, &votes)
            })
            .collect();
        Ok(ScoredFrame {
            frame: t,
            moves,
            boxes,
            features,
            batch,
            neighbors,
            scores,
        })
    }

    /// Applies the query rule of `qbst` to a scored frame: uncertain
    /// candidates get the oracle's label, the rest the committee's.
    pub fn label_frame(&self, scored: &ScoredFrame, qbst: &QbstConfig) -> Result<FrameLabels> {
        let mut rng = stream_rng(self.cfg.seed, scored.frame, Stream::RandomQuery);
        let queried: Vec<usize> = (0..scored.scores.len())
            .filter(|&i| needs_query(scored.scores[i], qbst, rng.random::<f64>()))
            .collect();
        let mut labels: Vec<Label> = scored
            .scores
            .iter()
            .map(|&s| Label::from_score(s))
            .collect();
        let batch = scored.batch.select(&queried);
        if !queried.is_empty() {
            let oracle_nb = self.oracle.model().neighbors(&batch)?;
            for (j, &i) in queried.iter().enumerate() {
                labels[i] = Label::from_score(oracle_nb.score(j));
            }
        }
        Ok(FrameLabels {
            queried,
            labels,
            batch,
        })
    }

    fn step(&mut self, frame: &Frame, t: usize) -> Result<FrameDiagnostics> {
        let cfg = self.cfg;
        let seed = cfg.seed;
        let scored = self.score_frame(frame)?;
        let FrameLabels {
            queried,
            labels,
            batch: uncertain_batch,
        } = self.label_frame(&scored, &cfg.qbst)?;
        let ScoredFrame {
            moves,
            features,
            neighbors,
            scores,
            ..
        } = scored;
        let n = scores.len();

        self.oracle.add(
            features
                .iter()
                .zip(&labels)
                .map(|(f, &l)| Sample::new(f.clone(), l, t)),
        );

        let candidates: Vec<ScoredCandidate> = (0..n)
            .map(|i| ScoredCandidate {
                transformation: moves[i],
                score: scores[i],
                label: labels[i],
            })
            .collect();
        let loc = localize(&candidates);
        self.target = apply(&self.target, &loc.transformation);

        let set = UncertainSet::with_batch(
            queried
                .iter()
                .map(|&i| Sample::new(features[i].clone(), labels[i], t))
                .collect(),
            queried.clone(),
            uncertain_batch,
        );
        let (m, tau_b) = (cfg.qbst.m, cfg.qbst.tau_b);
        let mut epsilon = vec![None; self.committee.len()];
        let mut work: Vec<_> = self
            .committee
            .iter_mut()
            .zip(neighbors)
            .zip(epsilon.iter_mut())
            .collect();
        par::for_each_mut(&mut work, |c, ((member, nb), eps)| {
            let base = nb.select(&queried);
            let mut rng = stream_rng(seed, t, Stream::Boost(c));
            if let Some(state) = boost_member(member, &set, base, m, tau_b, &mut rng) {
                **eps = Some(state.selected_epsilon());
            }
        });
        drop(work);

        let retrain = t.is_multiple_of(cfg.qbst.delta_oracle);
        if retrain {
            self.oracle.retrain(t)?;
        }

        Ok(FrameDiagnostics {
            frame: t,
            target: self.target,
            candidates: n,
            queries: queried.len(),
            epsilon,
            beta: self.committee.iter().map(|c| c.beta()).collect(),
            target_lost: loc.target_lost,
            oracle_retrained: retrain,
            elapsed: Duration::ZERO,
            failure: None,
        })
    }
}

/// Per-frame output of a full run. The first entry is the initial frame.
#[derive(Debug, Clone, Default)]
pub struct TrackResult {
    pub frames: Vec<FrameDiagnostics>,
    pub elapsed: Duration,
}

impl TrackResult {
    pub fn boxes(&self) -> Vec<BoundingBox> {
        self.frames.iter().map(|f| f.target).collect()
    }

    pub fn total_queries(&self) -> usize {
        self.frames.iter().map(|f| f.queries).sum()
    }

    /// Frames per second over the tracked frames, excluding initialization.
    pub fn fps(&self) -> f64 {
        let tracked = self.frames.len().saturating_sub(1);
        let time: f64 = self
            .frames
            .iter()
            .skip(1)
            .map(|f| f.elapsed.as_secs_f64())
            .sum();
        if time > 0.0 {
            tracked as f64 / time
        } else {
            f64::INFINITY
        }
    }
}

/// Runs the tracker over `frames`, decoding them lazily. The first frame
/// initializes the tracker with `p1`.
pub fn run_sequence<I>(frames: I, p1: BoundingBox, cfg: TrackerConfig) -> Result<TrackResult>
where
    I: IntoIterator<Item = Result<Frame>>,
{
    run_tracker(frames, p1, cfg).map(|(_, r)| r)
}

/// Like [`run_sequence`], also returning the final tracker state.
pub fn run_tracker<I>(
    frames: I,
    p1: BoundingBox,
    cfg: TrackerConfig,
) -> Result<(Tracker, TrackResult)>
where
    I: IntoIterator<Item = Result<Frame>>,
{
    let start = Instant::now();
    let mut frames = frames.into_iter();
    let first = frames.next().ok_or(Error::FrameCountMismatch {
        frames: 0,
        boxes: 1,
    })??;
    let init_start = Instant::now();
    let mut tracker = Tracker::new(&first, p1, cfg)?;
    let mut out = TrackResult::default();
    out.frames.push(FrameDiagnostics {
        frame: 1,
        target: p1,
        candidates: 0,
        queries: 0,
        epsilon: vec![None; cfg.qbst.committee_size],
        beta: tracker.committee().iter().map(|c| c.beta()).collect(),
        target_lost: false,
        oracle_retrained: true,
        elapsed: init_start.elapsed(),
        failure: None,
    });
    drop(first);
    for frame in frames {
        let d = match frame {
            Ok(f) => tracker.track(&f),
            Err(e) => tracker.skip(e),
        };
        log::debug!(
            "frame {}: queries {} lost {} {:.1} ms",
            d.frame,
            d.queries,
            d.target_lost,
            d.elapsed.as_secs_f64() * 1e3
        );
        out.frames.push(d);
    }
    out.elapsed = start.elapsed();
    Ok((tracker, out))
}

impl Tracker {
    /// Records frame `t` as failed and holds the previous box.
    fn failed(&self, t: usize, e: Error) -> FrameDiagnostics {
        log::warn!("frame {t}: {e}; holding previous box");
        FrameDiagnostics {
            frame: t,
            target: self.target,
            candidates: 0,
            queries: 0,
            epsilon: vec![None; self.committee.len()],
            beta: self.committee.iter().map(|c| c.beta()).collect(),
            target_lost: true,
            oracle_retrained: false,
            elapsed: Duration::ZERO,
            failure: Some(e.to_string()),
        }
    }

    /// Skips a frame that could not be read.
    pub fn skip(&mut self, e: Error) -> FrameDiagnostics {
        let t = self.frame + 1;
        self.frame = t;
        self.failed(t, e)
    }
}

/// Writes `t,x,y,w,h,queries,target_lost` lines. Boxes use the one-based
/// pixel convention of the ground-truth files.
pub fn write_results<W: Write>(mut w: W, frames: &[FrameDiagnostics]) -> Result<()> {
    for f in frames {
        let b = f.target;
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6},{},{}",
            f.frame,
            b.x() + 1.0,
            b.y() + 1.0,
            b.w(),
            b.h(),
            f.queries,
            u8::from(f.target_lost)
        )?;
    }
    Ok(())
}

/// One line of a result file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultRow {
    pub frame: usize,
    /// Zero-based box.
    pub target: BoundingBox,
    pub queries: usize,
    pub target_lost: bool,
}

/// Parses a file written by [`write_results`].
pub fn read_results<R: Read>(r: R, path: &Path) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for (n, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let content = line.trim();
        if content.is_empty() {
            continue;
        }
        let bad = || Error::UnparsableLine {
            path: path.to_path_buf(),
            line: n + 1,
            content: content.to_string(),
        };
        let f: Vec<&str> = content.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(bad());
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
        let target =
            BoundingBox::new(num(1)? - 1.0, num(2)? - 1.0, num(3)?, num(4)?).map_err(|_| bad())?;
        rows.push(ResultRow {
            frame: f[0].parse().map_err(|_| bad())?,
            target,
            queries: f[5].parse().map_err(|_| bad())?,
            target_lost: match f[6] {
                "0" => false,
                "1" => true,
                _ => return Err(bad()),
            },
        });
    }
    Ok(rows)
}

/// Per-frame, per-member boosting error and weight, one row per member.
pub fn write_diagnostics<W: Write>(mut w: W, frames: &[FrameDiagnostics]) -> Result<()> {
    writeln!(
        w,
        "t,member,epsilon,beta,queries,target_lost,elapsed_ms,failure"
    )?;
    for f in frames {
        for (c, (eps, beta)) in f.epsilon.iter().zip(&f.beta).enumerate() {
            let eps = eps.map_or(String::new(), |e| format!("{e:.6}"));
            writeln!(
                w,
                "{},{},{},{:.6},{},{},{:.3},{}",
                f.frame,
                c,
                eps,
                beta,
                f.queries,
                u8::from(f.target_lost),
                f.elapsed.as_secs_f64() * 1e3,
                f.failure.as_deref().unwrap_or("").replace(',', ";")
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(frame: usize, x: f64, lost: bool) -> FrameDiagnostics {
        FrameDiagnostics {
            frame,
            target: BoundingBox::new(x, 2.5, 10.0, 20.0).unwrap(),
            candidates: 5,
            queries: 3,
            epsilon: vec![Some(0.125), None],
            beta: vec![0.25, 0.5],
            target_lost: lost,
            oracle_retrained: false,
            elapsed: Duration::from_millis(4),
            failure: None,
        }
    }

    #[test]
    fn result_lines_round_trip() {
        let frames = vec![diag(1, 0.0, false), diag(2, 7.123456, true)];
        let mut buf = Vec::new();
        write_results(&mut buf, &frames).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "1,1.000000,3.500000,10.000000,20.000000,3,0"
        );
        let rows = read_results(&buf[..], Path::new("r.txt")).unwrap();
        assert_eq!(rows.len(), 2);
        assert!((rows[1].target.x() - 7.123456).abs() < 1e-9);
        assert!(rows[1].target_lost);
    }

    #[test]
    fn malformed_result_line_is_reported() {
        let err = read_results(&b"1,2,3\n"[..], Path::new("r.txt")).unwrap_err();
        assert!(matches!(err, Error::UnparsableLine { line: 1, .. }));
    }

    #[test]
    fn diagnostics_have_one_row_per_member() {
        let mut buf = Vec::new();
        write_diagnostics(&mut buf, &[diag(3, 0.0, false)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "3,0,0.125000,0.250000,3,0,4.000,");
        assert_eq!(lines[2], "3,1,,0.500000,3,0,4.000,");
    }
}
