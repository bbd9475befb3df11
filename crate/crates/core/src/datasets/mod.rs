//! Image sequences in the OTB directory layout and a synthetic generator.
//!
//! A sequence directory holds `img/` with numbered JPEG or PNG frames, a
//! `groundtruth_rect.txt` with one `x,y,w,h` box per frame in one-based
//! pixel coordinates, and optionally an `attributes.txt` listing challenge
//! tags. Boxes are converted to zero-based coordinates on load.

mod synthetic;

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::features::Frame;
use crate::geometry::BoundingBox;
use crate::{Error, Result};

pub use synthetic::{
    generate_synthetic, standard_suite, MotionSegment, SynthConfig, SynthEvent, TargetSpec,
};

pub const GROUND_TRUTH_FILE: &str = "groundtruth_rect.txt";
pub const ATTRIBUTES_FILE: &str = "attributes.txt";
pub const IMAGE_DIR: &str = "img";

/// Challenge tags of the OTB taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Attribute {
    /// Illumination variation.
    IV,
    /// Scale variation.
    SV,
    /// Occlusion.
    OCC,
    /// Deformation.
    DEF,
    /// Motion blur.
    MB,
    /// Fast motion.
    FM,
    /// In-plane rotation.
    IPR,
    /// Out-of-plane rotation.
    OPR,
    /// Out of view.
    OV,
    /// Background clutter.
    BC,
    /// Low resolution.
    LR,
}

impl Attribute {
    pub const ALL: [Attribute; 11] = [
        Self::IV,
        Self::SV,
        Self::OCC,
        Self::DEF,
        Self::MB,
        Self::FM,
        Self::IPR,
        Self::OPR,
        Self::OV,
        Self::BC,
        Self::LR,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Self::IV => "IV",
            Self::SV => "SV",
            Self::OCC => "OCC",
            Self::DEF => "DEF",
            Self::MB => "MB",
            Self::FM => "FM",
            Self::IPR => "IPR",
            Self::OPR => "OPR",
            Self::OV => "OV",
            Self::BC => "BC",
            Self::LR => "LR",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|a| a.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownAttribute(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Frames {
    Files(Vec<PathBuf>),
    Memory(Vec<Frame>),
}

/// An ordered list of frames with optional per-frame ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub name: String,
    frames: Frames,
    ground_truth: Option<Vec<BoundingBox>>,
    pub attributes: BTreeSet<Attribute>,
    /// Directory the sequence was loaded from.
    source: Option<PathBuf>,
}

impl Sequence {
    /// An in-memory sequence. Frames are renumbered from 1.
    pub fn from_frames(
        name: impl Into<String>,
        frames: Vec<Frame>,
        ground_truth: Option<Vec<BoundingBox>>,
        attributes: BTreeSet<Attribute>,
    ) -> Result<Self> {
        if let Some(gt) = &ground_truth {
            if gt.len() != frames.len() {
                return Err(Error::FrameCountMismatch {
                    frames: frames.len(),
                    boxes: gt.len(),
                });
            }
        }
        let frames = frames
            .into_iter()
            .enumerate()
            .map(|(i, f)| f.with_index(i + 1))
            .collect();
        Ok(Self {
            name: name.into(),
            frames: Frames::Memory(frames),
            ground_truth,
            attributes,
            source: None,
        })
    }

    pub fn len(&self) -> usize {
        match &self.frames {
            Frames::Files(p) => p.len(),
            Frames::Memory(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ground_truth(&self) -> Option<&[BoundingBox]> {
        self.ground_truth.as_deref()
    }

    /// Ground truth, or an error naming where it was expected.
    pub fn require_ground_truth(&self) -> Result<&[BoundingBox]> {
        self.ground_truth().ok_or_else(|| {
            Error::MissingGroundTruth(
                self.source
                    .as_ref()
                    .map_or_else(|| PathBuf::from(&self.name), |p| p.join(GROUND_TRUTH_FILE)),
            )
        })
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    /// Decodes frame `i` (zero-based); its index is `i + 1`.
    pub fn frame(&self, i: usize) -> Result<Frame> {
        match &self.frames {
            Frames::Files(p) => Frame::open(&p[i], i + 1),
            Frames::Memory(f) => Ok(f[i].clone()),
        }
    }

    /// Frames in order, decoded on demand.
    pub fn frames(&self) -> impl Iterator<Item = Result<Frame>> + '_ {
        (0..self.len()).map(move |i| self.frame(i))
    }

    pub fn has(&self, tag: Attribute) -> bool {
        self.attributes.contains(&tag)
    }

    /// Writes the sequence in the OTB layout: PNG frames numbered from
    /// `0001`, ground truth in one-based coordinates and the attribute tags.
    pub fn export(&self, dir: &Path) -> Result<()> {
        let img = dir.join(IMAGE_DIR);
        fs::create_dir_all(&img)?;
        for (i, frame) in self.frames().enumerate() {
            frame?.save(&img.join(format!("{:04}.png", i + 1)))?;
        }
        if let Some(gt) = &self.ground_truth {
            fs::write(dir.join(GROUND_TRUTH_FILE), format_ground_truth(gt))?;
        }
        if !self.attributes.is_empty() {
            let tags: Vec<&str> = self.attributes.iter().map(|a| a.tag()).collect();
            fs::write(dir.join(ATTRIBUTES_FILE), tags.join(",") + "\n")?;
        }
        Ok(())
    }
}

/// One `x,y,w,h` line per box, shifted to one-based coordinates.
pub fn format_ground_truth(boxes: &[BoundingBox]) -> String {
    boxes
        .iter()
        .map(|b| format!("{},{},{},{}\n", b.x() + 1.0, b.y() + 1.0, b.w(), b.h()))
        .collect()
}

/// Parses one-based `x,y,w,h` lines separated by commas, tabs or spaces.
/// Blank lines are skipped.
pub fn parse_ground_truth(text: &str, path: &Path) -> Result<Vec<BoundingBox>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let content = line.trim();
        if content.is_empty() {
            continue;
        }
        let bad = || Error::UnparsableLine {
            path: path.to_path_buf(),
            line: n + 1,
            content: content.to_string(),
        };
        let v: Vec<f64> = content
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if v.len() != 4 {
            return Err(bad());
        }
        out.push(BoundingBox::new(v[0] - 1.0, v[1] - 1.0, v[2], v[3]).map_err(|_| bad())?);
    }
    Ok(out)
}

fn parse_attributes(text: &str) -> Result<BTreeSet<Attribute>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

const IMAGE_EXTENSIONS: [&str; 4] = ["jpg", "jpeg", "png", "bmp"];

/// Numeric value of the digits in a file stem, if any.
fn frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem.chars().filter(char::is_ascii_digit).collect();
    digits.parse().ok()
}

/// Loads a sequence directory. A missing ground-truth file yields a
/// sequence without ground truth.
pub fn load_otb_sequence(dir: &Path) -> Result<Sequence> {
    let img = dir.join(IMAGE_DIR);
    let mut files: Vec<(Option<u64>, PathBuf)> = fs::read_dir(&img)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .map(|p| (frame_number(&p), p))
        .collect();
    files.sort();
    let files: Vec<PathBuf> = files.into_iter().map(|(_, p)| p).collect();

    let gt_path = dir.join(GROUND_TRUTH_FILE);
    let ground_truth = match fs::read_to_string(&gt_path) {
        Ok(text) => {
            let gt = parse_ground_truth(&text, &gt_path)?;
            if gt.len() != files.len() {
                return Err(Error::FrameCountMismatch {
                    frames: files.len(),
                    boxes: gt.len(),
                });
            }
            Some(gt)
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            log::warn!("{}", Error::MissingGroundTruth(gt_path));
            None
        }
        Err(e) => return Err(e.into()),
    };
    let attributes = match fs::read_to_string(dir.join(ATTRIBUTES_FILE)) {
        Ok(text) => parse_attributes(&text)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeSet::new(),
        Err(e) => return Err(e.into()),
    };
    let name = dir.file_name().map_or_else(
        || dir.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    );
    Ok(Sequence {
        name,
        frames: Frames::Files(files),
        ground_truth,
        attributes,
        source: Some(dir.to_path_buf()),
    })
}

/// Loads every sequence directory (one holding `img/`) directly under
/// `dir`, sorted by name.
pub fn load_library(dir: &Path) -> Result<Vec<Sequence>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(IMAGE_DIR).is_dir())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| load_otb_sequence(d)).collect()
}

/// The sequences carrying `tag`, which must be one of the eleven tags.
pub fn attribute_filter<'a>(sequences: &'a [Sequence], tag: &str) -> Result<Vec<&'a Sequence>> {
    let tag: Attribute = tag.parse()?;
    Ok(sequences.iter().filter(|s| s.has(tag)).collect())
}
