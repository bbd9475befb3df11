use std::io::{Read, Write};

use crate::features::FeatureVector;
use crate::learners::Label;
use crate::{Error, Result};

/// Version byte written at the start of a store checkpoint.
///
/// Layout, all integers little-endian:
///
/// ```text
/// u8        version (= 1)
/// u32       entry count N
/// u32       feature dimension D
/// f32 x N*D feature rows, row-major
/// i8  x N   labels (+1 / -1)
/// u32 x N   frame indices
/// ```
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: FeatureVector,
    pub label: Label,
    pub frame: usize,
}

impl Sample {
    pub fn new(features: impl Into<FeatureVector>, label: Label, frame: usize) -> Self {
        Self {
            features: features.into(),
            label,
            frame,
        }
    }
}

/// Labeled samples in insertion order, optionally capped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleStore {
    entries: Vec<Sample>,
    capacity: Option<usize>,
}

impl SampleStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// A store that evicts down to `capacity` after every append.
    pub fn with_capacity_limit(capacity: Option<usize>) -> Self {
        Self {
            entries: Vec::new(),
            capacity: capacity.map(|c| c.max(2)),
        }
    }

    pub fn from_samples(samples: impl IntoIterator<Item = Sample>) -> Self {
        Self {
            entries: samples.into_iter().collect(),
            capacity: None,
        }
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn set_capacity(&mut self, capacity: Option<usize>) {
        self.capacity = capacity.map(|c| c.max(2));
        self.enforce_capacity();
    }

    pub fn entries(&self) -> &[Sample] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.entries.iter().filter(|s| s.label == label).count()
    }

    pub fn is_mixed(&self) -> bool {
        let mut seen = [false; 2];
        for s in &self.entries {
            seen[(s.label == Label::Positive) as usize] = true;
            if seen[0] && seen[1] {
                return true;
            }
        }
        false
    }

    pub fn push(&mut self, sample: Sample) {
        self.entries.push(sample);
        self.enforce_capacity();
    }

    /// Appends every sample; returns whether the capacity cap removed any
    /// entry.
    pub fn push_all(&mut self, samples: impl IntoIterator<Item = Sample>) -> bool {
        self.entries.extend(samples);
        self.enforce_capacity()
    }

    fn enforce_capacity(&mut self) -> bool {
        match self.capacity {
            Some(cap) if self.entries.len() > cap => {
                let entries = std::mem::take(&mut self.entries);
                self.entries = evict_entries(entries, cap);
                true
            }
            _ => false,
        }
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        let dim = self.entries.first().map_or(0, |s| s.features.len());
        if self.entries.iter().any(|s| s.features.len() != dim) {
            return Err(Error::Checkpoint("entries differ in dimension".into()));
        }
        w.write_all(&[CHECKPOINT_VERSION])?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        w.write_all(&(dim as u32).to_le_bytes())?;
        for s in &self.entries {
            for v in s.features.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        let labels: Vec<u8> = self.entries.iter().map(|s| s.label.as_i8() as u8).collect();
        w.write_all(&labels)?;
        for s in &self.entries {
            w.write_all(&(s.frame as u32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut version = [0u8; 1];
        r.read_exact(&mut version)?;
        if version[0] != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {}",
                version[0]
            )));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let count = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let dim = u32::from_le_bytes(word) as usize;
        let mut rows = Vec::with_capacity(count);
        for _ in 0..count {
            let mut row = Vec::with_capacity(dim);
            for _ in 0..dim {
                r.read_exact(&mut word)?;
                row.push(f32::from_le_bytes(word));
            }
            rows.push(row);
        }
        let mut labels = vec![0u8; count];
        r.read_exact(&mut labels)?;
        let mut entries = Vec::with_capacity(count);
        for (row, l) in rows.into_iter().zip(labels) {
            let label = Label::from_i8(l as i8)
                .ok_or_else(|| Error::Checkpoint(format!("bad label byte {l}")))?;
            r.read_exact(&mut word)?;
            entries.push(Sample::new(row, label, u32::from_le_bytes(word) as usize));
        }
        Ok(Self {
            entries,
            capacity: None,
        })
    }
}

/// Drops the oldest entries until `budget` remain, keeping at least one
/// sample of each class that was present. Age is the frame index, ties
/// broken by insertion order.
pub fn evict(store: &SampleStore, budget: usize) -> SampleStore {
    SampleStore {
        entries: evict_entries(store.entries.clone(), budget.max(2)),
        capacity: store.capacity,
    }
}

fn evict_entries(entries: Vec<Sample>, budget: usize) -> Vec<Sample> {
    if entries.len() <= budget {
        return entries;
    }
    // Oldest first.
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by_key(|&i| (entries[i].frame, i));
    let mut keep = vec![false; entries.len()];
    for &i in &order[order.len() - budget..] {
        keep[i] = true;
    }
    for label in [Label::Positive, Label::Negative] {
        let present = entries.iter().any(|s| s.label == label);
        let kept = entries
            .iter()
            .zip(&keep)
            .any(|(s, &k)| k && s.label == label);
        if present && !kept {
            // Pin the oldest entry of the missing class and drop the
            // oldest kept entry in its place.
            let pinned = *order
                .iter()
                .find(|&&i| entries[i].label == label)
                .expect("class is present");
            let dropped = *order.iter().find(|&&i| keep[i]).expect("budget >= 2");
            keep[dropped] = false;
            keep[pinned] = true;
        }
    }
    entries
        .into_iter()
        .zip(keep)
        .filter_map(|(s, k)| k.then_some(s))
        .collect()
}
