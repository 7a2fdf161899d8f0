//! Labeled skeleton sequences: domain types, the line-delimited dataset
//! format, preprocessing (normalisation, fixed-length resampling) and
//! train/test partitioning.
//!
//! Keypoints follow the 17-point COCO ordering; indices 11 and 12 are the hips.

mod synth;

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use synth::{generate_synthetic, SynthConfig, ViewNoise};

pub const KEYPOINTS: usize = 17;
/// Per-frame feature width: 17 keypoints × (x, y).
pub const FEATURE_DIM: usize = KEYPOINTS * 2;
pub const DEFAULT_FRAME_RATE: f64 = 10.0;
pub const DEFAULT_SEQ_LEN: usize = 64;
const LEFT_HIP: usize = 11;
const RIGHT_HIP: usize = 12;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: frame {frame} has {found} keypoints, expected 17")]
    Schema { line: usize, frame: usize, found: usize },
    #[error("invalid sample: {0}")]
    Invalid(String),
    #[error("partition leaves the test split empty: {0}")]
    EmptyTest(String),
    #[error("partition leaves the train split empty: {0}")]
    EmptyTrain(String),
    #[error("action `{0}` is not one of the model's classes")]
    UnknownClass(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Pixel (or normalised) coordinate pair. `(0, 0)` marks a missing keypoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
}

impl Keypoint {
    pub const MISSING: Keypoint = Keypoint { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_missing(&self) -> bool {
        self.x == 0.0 && self.y == 0.0
    }
}

pub type Frame = [Keypoint; KEYPOINTS];

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    pub frames: Vec<Frame>,
    pub frame_rate: f64,
}

impl SkeletonSequence {
    pub fn new(frames: Vec<Frame>) -> Result<Self, DataError> {
        if frames.is_empty() {
            return Err(DataError::Invalid("sequence has no frames".into()));
        }
        if frames.iter().flatten().any(|k| !k.x.is_finite() || !k.y.is_finite()) {
            return Err(DataError::Invalid("non-finite keypoint coordinate".into()));
        }
        Ok(Self { frames, frame_rate: DEFAULT_FRAME_RATE })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Row-major `[T, 34]` features: `x0, y0, x1, y1, …` per frame.
    pub fn features(&self) -> Vec<f64> {
        self.frames.iter().flatten().flat_map(|k| [k.x, k.y]).collect()
    }

    /// Builds a sequence from `[T, 34]` row-major features.
    pub fn from_features(features: &[f64]) -> Result<Self, DataError> {
        if features.is_empty() || !features.len().is_multiple_of(FEATURE_DIM) {
            return Err(DataError::Invalid(format!(
                "{} values is not a whole number of 34-wide frames",
                features.len()
            )));
        }
        let frames = features
            .chunks(FEATURE_DIM)
            .map(|row| std::array::from_fn(|k| Keypoint::new(row[2 * k], row[2 * k + 1])))
            .collect();
        Self::new(frames)
    }
}

macro_rules! closed_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!("unknown {} value `{other}`", stringify!($name).to_lowercase())),
                }
            }
        }
    };
}

closed_enum!(Gender { Male => "male", Female => "female" });
closed_enum!(Pose { Stand => "stand", Walk => "walk" });
closed_enum!(View { Left => "left", Center => "center", Right => "right" });

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Attributes {
    pub gender: Gender,
    pub pose: Pose,
    pub view: View,
    pub subject_id: String,
}

/// The three cohort-defining attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Gender,
    Pose,
    View,
}

impl Attribute {
    pub const ALL: [Attribute; 3] = [Attribute::Gender, Attribute::Pose, Attribute::View];

    pub fn as_str(&self) -> &'static str {
        match self {
            Attribute::Gender => "gender",
            Attribute::Pose => "pose",
            Attribute::View => "view",
        }
    }

    /// Every value of the attribute, in declaration order.
    pub fn values(&self) -> Vec<AttributeValue> {
        match self {
            Attribute::Gender => Gender::ALL.iter().map(|&g| AttributeValue::Gender(g)).collect(),
            Attribute::Pose => Pose::ALL.iter().map(|&p| AttributeValue::Pose(p)).collect(),
            Attribute::View => View::ALL.iter().map(|&v| AttributeValue::View(v)).collect(),
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Attribute {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "gender" => Ok(Attribute::Gender),
            "pose" => Ok(Attribute::Pose),
            "view" => Ok(Attribute::View),
            other => Err(format!("unknown attribute `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttributeValue {
    Gender(Gender),
    Pose(Pose),
    View(View),
}

impl AttributeValue {
    pub fn attribute(&self) -> Attribute {
        match self {
            AttributeValue::Gender(_) => Attribute::Gender,
            AttributeValue::Pose(_) => Attribute::Pose,
            AttributeValue::View(_) => Attribute::View,
        }
    }

    pub fn value_str(&self) -> &'static str {
        match self {
            AttributeValue::Gender(g) => g.as_str(),
            AttributeValue::Pose(p) => p.as_str(),
            AttributeValue::View(v) => v.as_str(),
        }
    }

    pub fn matches(&self, attrs: &Attributes) -> bool {
        match *self {
            AttributeValue::Gender(g) => attrs.gender == g,
            AttributeValue::Pose(p) => attrs.pose == p,
            AttributeValue::View(v) => attrs.view == v,
        }
    }

    pub fn parse(attribute: Attribute, value: &str) -> Result<Self, String> {
        Ok(match attribute {
            Attribute::Gender => AttributeValue::Gender(value.parse()?),
            Attribute::Pose => AttributeValue::Pose(value.parse()?),
            Attribute::View => AttributeValue::View(value.parse()?),
        })
    }
}

impl fmt::Display for AttributeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.attribute(), self.value_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub id: String,
    pub sequence: SkeletonSequence,
    pub attributes: Attributes,
    /// Index into [`Dataset::classes`].
    pub action: usize,
}

/// Samples plus the class-name table their `action` indices point into.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub classes: Vec<String>,
    pub samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for s in &self.samples {
            counts[s.action] += 1;
        }
        counts
    }

    /// Re-indexes actions against another class table (e.g. a trained model's).
    pub fn with_classes(mut self, classes: &[String]) -> Result<Dataset, DataError> {
        let mut remap = Vec::with_capacity(self.classes.len());
        for name in &self.classes {
            let idx = classes.iter().position(|c| c == name).ok_or_else(|| DataError::UnknownClass(name.clone()))?;
            remap.push(idx);
        }
        for s in &mut self.samples {
            s.action = remap[s.action];
        }
        self.classes = classes.to_vec();
        Ok(self)
    }

    fn subset(&self, keep: impl Fn(&LabeledSample) -> bool) -> Dataset {
        Dataset { classes: self.classes.clone(), samples: self.samples.iter().filter(|s| keep(s)).cloned().collect() }
    }
}

/// One line of the dataset file.
#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    subject: String,
    gender: Gender,
    pose: Pose,
    view: View,
    action: String,
    frames: Vec<Vec<[f64; 2]>>,
}

/// Reads line-delimited JSON records. Blank lines are skipped; class indices
/// follow the sorted order of distinct action names.
pub fn parse_dataset<R: BufRead>(reader: R) -> Result<Dataset, DataError> {
    let mut parsed = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(&line).map_err(|e| DataError::Parse { line: line_no, message: e.to_string() })?;
        let mut frames = Vec::with_capacity(record.frames.len());
        for (fi, frame) in record.frames.iter().enumerate() {
            if frame.len() != KEYPOINTS {
                return Err(DataError::Schema { line: line_no, frame: fi, found: frame.len() });
            }
            frames.push(std::array::from_fn(|k| Keypoint::new(frame[k][0], frame[k][1])));
        }
        let sequence =
            SkeletonSequence::new(frames).map_err(|e| DataError::Parse { line: line_no, message: e.to_string() })?;
        parsed.push((record, sequence));
    }

    let classes: Vec<String> =
        parsed.iter().map(|(r, _)| r.action.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let samples = parsed
        .into_iter()
        .map(|(r, sequence)| LabeledSample {
            action: classes.binary_search(&r.action).expect("class table built from records"),
            id: r.id,
            sequence,
            attributes: Attributes { gender: r.gender, pose: r.pose, view: r.view, subject_id: r.subject },
        })
        .collect();
    Ok(Dataset { classes, samples })
}

/// Writes the dataset in the same line-delimited format [`parse_dataset`] reads.
pub fn write_dataset<W: Write>(dataset: &Dataset, mut writer: W) -> Result<(), DataError> {
    for s in &dataset.samples {
        let record = Record {
            id: s.id.clone(),
            subject: s.attributes.subject_id.clone(),
            gender: s.attributes.gender,
            pose: s.attributes.pose,
            view: s.attributes.view,
            action: dataset.classes[s.action].clone(),
            frames: s.sequence.frames.iter().map(|f| f.iter().map(|k| [k.x, k.y]).collect()).collect(),
        };
        serde_json::to_writer(&mut writer, &record).map_err(|e| DataError::Invalid(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub sequence: SkeletonSequence,
    /// The first-frame bounding box had zero diagonal; scale 1 was used.
    pub degenerate: bool,
}

/// Moves the first-frame mid-hip to the origin and divides by the first-frame
/// bounding-box diagonal. Missing keypoints stay `(0, 0)` and are ignored when
/// measuring the first frame.
pub fn normalize_sequence(seq: &SkeletonSequence) -> Normalized {
    let first = &seq.frames[0];
    let present: Vec<&Keypoint> = first.iter().filter(|k| !k.is_missing()).collect();

    let hips: Vec<&Keypoint> = [&first[LEFT_HIP], &first[RIGHT_HIP]].into_iter().filter(|k| !k.is_missing()).collect();
    let anchor_from = if hips.is_empty() { &present } else { &hips };
    let origin = if anchor_from.is_empty() {
        Keypoint::MISSING
    } else {
        let n = anchor_from.len() as f64;
        Keypoint::new(
            anchor_from.iter().map(|k| k.x).sum::<f64>() / n,
            anchor_from.iter().map(|k| k.y).sum::<f64>() / n,
        )
    };

    let diagonal = if present.is_empty() {
        0.0
    } else {
        let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for k in &present {
            lo_x = lo_x.min(k.x);
            hi_x = hi_x.max(k.x);
            lo_y = lo_y.min(k.y);
            hi_y = hi_y.max(k.y);
        }
        (hi_x - lo_x).hypot(hi_y - lo_y)
    };
    let degenerate = !(diagonal > 0.0) || !diagonal.is_finite();
    let scale = if degenerate { 1.0 } else { diagonal };

    let frames = seq
        .frames
        .iter()
        .map(|frame| {
            frame.map(|k| {
                if k.is_missing() {
                    k
                } else {
                    Keypoint::new((k.x - origin.x) / scale, (k.y - origin.y) / scale)
                }
            })
        })
        .collect();
    Normalized { sequence: SkeletonSequence { frames, frame_rate: seq.frame_rate }, degenerate }
}

/// Center-crops (earlier frames favoured on odd remainders) or pads by
/// repeating the last frame until exactly `target` frames remain.
pub fn resample_to_length(seq: &SkeletonSequence, target: usize) -> Result<SkeletonSequence, DataError> {
    if target == 0 {
        return Err(DataError::Invalid("target length must be at least 1".into()));
    }
    let t = seq.frames.len();
    let frames = if t >= target {
        let start = (t - target) / 2;
        seq.frames[start..start + target].to_vec()
    } else {
        let mut frames = seq.frames.clone();
        let last = *frames.last().expect("sequence is non-empty");
        frames.resize(target, last);
        frames
    };
    Ok(SkeletonSequence { frames, frame_rate: seq.frame_rate })
}

/// Normalise then resample; the model input for one sequence.
pub fn preprocess(seq: &SkeletonSequence, seq_len: usize) -> Result<Vec<f64>, DataError> {
    let normalized = normalize_sequence(seq);
    if normalized.degenerate {
        log::warn!("degenerate first-frame bounding box; using scale 1");
    }
    Ok(resample_to_length(&normalized.sequence, seq_len)?.features())
}

/// A whole dataset flattened into model-ready features.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSet {
    /// `[n, seq_len, 34]` row-major.
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub seq_len: usize,
    pub n_classes: usize,
}

impl PreparedSet {
    pub fn from_dataset(dataset: &Dataset, seq_len: usize) -> Result<Self, DataError> {
        let mut features = Vec::with_capacity(dataset.len() * seq_len * FEATURE_DIM);
        for s in &dataset.samples {
            features.extend(preprocess(&s.sequence, seq_len)?);
        }
        Ok(Self {
            features,
            labels: dataset.samples.iter().map(|s| s.action).collect(),
            seq_len,
            n_classes: dataset.n_classes(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_width(&self) -> usize {
        self.seq_len * FEATURE_DIM
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let w = self.sample_width();
        &self.features[i * w..(i + 1) * w]
    }
}

/// How to split a dataset into train and test.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitProtocol {
    /// The listed subjects form the test set.
    BySubjects(Vec<String>),
    /// Every sample with this attribute value goes to test.
    ByAttribute(AttributeValue),
}

pub fn partition(dataset: &Dataset, protocol: &SplitProtocol) -> Result<(Dataset, Dataset), DataError> {
    let in_test = |s: &LabeledSample| match protocol {
        SplitProtocol::BySubjects(subjects) => subjects.contains(&s.attributes.subject_id),
        SplitProtocol::ByAttribute(value) => value.matches(&s.attributes),
    };
    let describe = || match protocol {
        SplitProtocol::BySubjects(subjects) => format!("subjects {subjects:?}"),
        SplitProtocol::ByAttribute(value) => value.to_string(),
    };
    let test = dataset.subset(in_test);
    let train = dataset.subset(|s| !in_test(s));
    if test.is_empty() {
        return Err(DataError::EmptyTest(describe()));
    }
    if train.is_empty() {
        return Err(DataError::EmptyTrain(describe()));
    }
    Ok((train, test))
}
