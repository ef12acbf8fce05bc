//! Unified sample record and the JSONL manifest format.
//!
//! One sample per line:
//!
//! ```text
//! {"id":"s1","image":"img/a.png","width":1920,"height":1080,"task":"point",
//!  "instruction":"open settings","annotation":[0.500,0.250],"source":"web","tags":[]}
//! ```
//!
//! Coordinates are always written with exactly three fractional digits.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::{Error, Point, Rect, Result};

/// Rounds `v` in `[0, 1]` to three decimals, halves away from zero.
///
/// The product `v * 1000` is nudged by `1e-9` before flooring so that decimal
/// halves such as `0.9995` (stored as `0.99949999...`) round up as written.
pub fn quantize_3dp(v: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Range { value: v });
    }
    Ok((v * 1000.0 + 0.5 + 1e-9).floor() / 1000.0)
}

/// Difficulty tier assigned from layout entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }

    pub fn tag(self) -> String {
        format!("bucket:{}", self.as_str())
    }
}

impl std::str::FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            other => Err(Error::Validation(format!("unknown difficulty `{other}`"))),
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskKind {
    BoxPrediction,
    CenterPointLocalization,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::BoxPrediction => "box",
            TaskKind::CenterPointLocalization => "point",
        }
    }

    /// Number of coordinates the annotation of this task carries.
    pub fn arity(self) -> usize {
        match self {
            TaskKind::BoxPrediction => 4,
            TaskKind::CenterPointLocalization => 2,
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" => Ok(TaskKind::BoxPrediction),
            "point" => Ok(TaskKind::CenterPointLocalization),
            other => Err(Error::Validation(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Annotation {
    Point(Point),
    Box(Rect),
}

impl Annotation {
    pub fn task(&self) -> TaskKind {
        match self {
            Annotation::Point(_) => TaskKind::CenterPointLocalization,
            Annotation::Box(_) => TaskKind::BoxPrediction,
        }
    }

    pub fn center(&self) -> Point {
        match self {
            Annotation::Point(p) => *p,
            Annotation::Box(b) => b.center(),
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        match self {
            Annotation::Point(p) => vec![p.x, p.y],
            Annotation::Box(b) => vec![b.x0, b.y0, b.x1, b.y1],
        }
    }

    /// Builds a quantized annotation from 2 or 4 normalized numbers.
    pub fn from_coords(c: &[f64]) -> Result<Self> {
        let q = c.iter().map(|&v| quantize_3dp(v)).collect::<Result<Vec<_>>>()?;
        match q.as_slice() {
            [x, y] => Ok(Annotation::Point(Point::new(*x, *y)?)),
            [x0, y0, x1, y1] => Ok(Annotation::Box(Rect::new(*x0, *y0, *x1, *y1)?)),
            _ => Err(Error::Arity(c.len())),
        }
    }
}

/// One image + instruction + normalized annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundingSample {
    pub id: String,
    pub image_ref: String,
    pub image_size: (u32, u32),
    pub instruction: String,
    pub task: TaskKind,
    pub annotation: Annotation,
    pub source: String,
    pub stage_tags: BTreeSet<String>,
}

impl GroundingSample {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Validation("empty sample id".into()));
        }
        if self.image_size.0 < 1 || self.image_size.1 < 1 {
            return Err(Error::Validation(format!(
                "sample `{}`: image size {:?} must be at least 1x1",
                self.id, self.image_size
            )));
        }
        if self.annotation.task() != self.task {
            return Err(Error::Validation(format!(
                "sample `{}`: task `{}` does not match a {}-coordinate annotation",
                self.id,
                self.task.as_str(),
                self.annotation.coords().len()
            )));
        }
        Ok(())
    }

    /// Key used to join the sample with per-image sidecar files: the file
    /// stem of `image_ref`.
    pub fn image_id(&self) -> String {
        Path::new(&self.image_ref)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.image_ref.clone())
    }

    /// Difficulty recorded by the bucketing stage, if any.
    pub fn difficulty(&self) -> Option<Difficulty> {
        self.stage_tags
            .iter()
            .find_map(|t| t.strip_prefix("bucket:").and_then(|b| b.parse().ok()))
    }
}

#[derive(Serialize)]
struct LineOut<'a> {
    id: &'a str,
    image: &'a str,
    width: u32,
    height: u32,
    task: &'a str,
    instruction: &'a str,
    annotation: Vec<Box<RawValue>>,
    source: &'a str,
    tags: &'a BTreeSet<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LineIn {
    id: String,
    image: String,
    width: u32,
    height: u32,
    task: String,
    instruction: String,
    annotation: Vec<f64>,
    source: String,
    #[serde(default)]
    tags: BTreeSet<String>,
}

/// Renders a coordinate with exactly three fractional digits.
pub(crate) fn coord_raw(v: f64) -> Box<RawValue> {
    RawValue::from_string(format!("{v:.3}")).expect("fixed-point decimal is valid JSON")
}

impl GroundingSample {
    /// Serializes to one manifest line (without the trailing newline).
    pub fn to_json_line(&self) -> String {
        let line = LineOut {
            id: &self.id,
            image: &self.image_ref,
            width: self.image_size.0,
            height: self.image_size.1,
            task: self.task.as_str(),
            instruction: &self.instruction,
            annotation: self.annotation.coords().into_iter().map(coord_raw).collect(),
            source: &self.source,
            tags: &self.stage_tags,
        };
        serde_json::to_string(&line).expect("manifest line serializes")
    }

    pub fn from_json_line(s: &str) -> Result<Self> {
        let raw: LineIn = serde_json::from_str(s)?;
        let task: TaskKind = raw.task.parse()?;
        if raw.annotation.len() != task.arity() {
            return Err(Error::Validation(format!(
                "task `{}` expects {} coordinates, found {}",
                raw.task,
                task.arity(),
                raw.annotation.len()
            )));
        }
        let sample = GroundingSample {
            id: raw.id,
            image_ref: raw.image,
            image_size: (raw.width, raw.height),
            instruction: raw.instruction,
            task,
            annotation: Annotation::from_coords(&raw.annotation)?,
            source: raw.source,
            stage_tags: raw.tags,
        };
        sample.validate()?;
        Ok(sample)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ManifestStats {
    pub per_source: BTreeMap<String, usize>,
    pub per_task: BTreeMap<TaskKind, usize>,
    pub per_bucket: BTreeMap<Difficulty, usize>,
}

/// Ordered samples with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    samples: Vec<GroundingSample>,
}

impl DatasetManifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples(samples: Vec<GroundingSample>) -> Result<Self> {
        let mut m = Self::new();
        for s in samples {
            m.push(s)?;
        }
        Ok(m)
    }

    pub fn push(&mut self, sample: GroundingSample) -> Result<()> {
        sample.validate()?;
        if self.samples.iter().any(|s| s.id == sample.id) {
            return Err(Error::DuplicateId(sample.id));
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn samples(&self) -> &[GroundingSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<GroundingSample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn stats(&self) -> ManifestStats {
        let mut st = ManifestStats::default();
        for s in &self.samples {
            *st.per_source.entry(s.source.clone()).or_default() += 1;
            *st.per_task.entry(s.task).or_default() += 1;
            if let Some(b) = s.difficulty() {
                *st.per_bucket.entry(b).or_default() += 1;
            }
        }
        st
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for s in &self.samples {
            writeln!(w, "{}", s.to_json_line())?;
        }
        w.flush()
    }

    pub fn read_from<R: std::io::Read>(r: R) -> Result<Self> {
        let mut samples = Vec::new();
        let mut seen = HashSet::new();
        for (idx, line) in BufReader::new(r).lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::Line {
                line: lineno,
                msg: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let sample = GroundingSample::from_json_line(&line).map_err(|e| Error::Line {
                line: lineno,
                msg: e.to_string(),
            })?;
            if !seen.insert(sample.id.clone()) {
                return Err(Error::Line {
                    line: lineno,
                    msg: Error::DuplicateId(sample.id).to_string(),
                });
            }
            samples.push(sample);
        }
        Ok(Self { samples })
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    DatasetManifest::read_from(f)
}

/// Writes the manifest atomically (temp file in the same directory, then rename).
pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    manifest.write_to(&mut buf).expect("writing to memory");
    crate::pipeline::write_atomic(path.as_ref(), &buf)
}
