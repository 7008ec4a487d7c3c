//! Feature and label files, sequence-length normalization and the synthetic
//! three-class dataset.
//!
//! Feature file:
//! ```text
//! MMSA-FEAT v1 <V|A|T> <dim>
//! <id> <length> v_11 ... v_Ld
//! ```
//! Label file:
//! ```text
//! MMSA-LABEL v1
//! <id> <continuous> <class>
//! ```
//! Values are written with 17 significant digits so doubles round-trip
//! exactly.

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use crate::rng::Rng;
use crate::tensor::Tensor;

pub const FEATURE_MAGIC: &str = "MMSA-FEAT v1";
pub const LABEL_MAGIC: &str = "MMSA-LABEL v1";
pub const NUM_CLASSES: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("bad header: {0:?}")]
    BadHeader(String),
    #[error("line {line}: expected {expected} values, found {found}")]
    DimInconsistent {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("empty sequence")]
    EmptySequence,
    #[error("no label for sample {0:?}")]
    MissingLabel(String),
    #[error("sample {id:?} is missing modality {modality}")]
    MissingModality { id: String, modality: Modality },
}

impl DataError {
    fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    /// Prefixes a parse error with the file it came from.
    fn in_file(self, path: &Path) -> Self {
        match self {
            DataError::Io { .. } => self,
            other => DataError::Io {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Visual,
    Audio,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Visual, Modality::Audio, Modality::Text];

    pub fn letter(self) -> char {
        match self {
            Modality::Visual => 'V',
            Modality::Audio => 'A',
            Modality::Text => 'T',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c {
            'V' => Some(Modality::Visual),
            'A' => Some(Modality::Audio),
            'T' => Some(Modality::Text),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// A `length × dim` sequence of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub modality: Modality,
    pub values: Tensor,
}

impl FeatureSequence {
    pub fn new(modality: Modality, values: Tensor) -> Self {
        let values = if values.rank() == 2 {
            values
        } else {
            let (r, c) = (values.rows(), values.cols());
            values.reshape(&[r, c]).expect("same element count")
        };
        Self { modality, values }
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }
}

/// Pads with trailing zero rows, or keeps rows `floor(k·L/T)`.
pub fn resample_to_len(x: &FeatureSequence, target: usize) -> Result<FeatureSequence, DataError> {
    let len = x.len();
    if x.is_empty() || target == 0 {
        return Err(DataError::EmptySequence);
    }
    let d = x.dim();
    let mut out = Tensor::zeros(&[target, d]);
    if len <= target {
        out.data_mut()[..len * d].copy_from_slice(x.values.data());
    } else {
        for k in 0..target {
            out.row_mut(k)
                .copy_from_slice(x.values.row(k * len / target));
        }
    }
    Ok(FeatureSequence::new(x.modality, out))
}

/// Resampling at the default length of 32 steps.
pub fn resample_to_t(x: &FeatureSequence) -> Result<FeatureSequence, DataError> {
    resample_to_len(x, 32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub modality: Modality,
    pub dim: usize,
    pub entries: Vec<(String, FeatureSequence)>,
}

fn fmt_f64(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("write to string");
}

impl FeatureFile {
    pub fn to_text(&self) -> String {
        let mut s = format!("{FEATURE_MAGIC} {} {}\n", self.modality, self.dim);
        for (id, seq) in &self.entries {
            write!(s, "{id} {}", seq.len()).unwrap();
            for &v in seq.values.data() {
                s.push(' ');
                fmt_f64(&mut s, v);
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (modality, dim) = match fields.as_slice() {
            ["MMSA-FEAT", "v1", m, d] => {
                let modality = single_char(m)
                    .and_then(Modality::from_letter)
                    .ok_or_else(|| DataError::BadHeader(header.to_string()))?;
                let dim = d
                    .parse::<usize>()
                    .ok()
                    .filter(|&x| x > 0)
                    .ok_or_else(|| DataError::BadHeader(header.to_string()))?;
                (modality, dim)
            }
            _ => return Err(DataError::BadHeader(header.to_string())),
        };
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let id = parts.next().expect("nonempty line").to_string();
            let len: usize = parts
                .next()
                .and_then(|l| l.parse().ok())
                .filter(|&l| l > 0)
                .ok_or_else(|| malformed(line_no, "missing or invalid length"))?;
            let values = parts
                .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| malformed(line_no, "non-numeric or non-finite value"))?;
            if values.len() != len * dim {
                return Err(DataError::DimInconsistent {
                    line: line_no,
                    expected: len * dim,
                    found: values.len(),
                });
            }
            if !seen.insert(id.clone()) {
                return Err(DataError::DuplicateId(id));
            }
            let values = Tensor::new(&[len, dim], values).expect("checked length");
            entries.push((id, FeatureSequence::new(modality, values)));
        }
        Ok(Self {
            modality,
            dim,
            entries,
        })
    }
}

fn single_char(s: &str) -> Option<char> {
    let mut it = s.chars();
    match (it.next(), it.next()) {
        (Some(c), None) => Some(c),
        _ => None,
    }
}

fn malformed(line: usize, reason: &str) -> DataError {
    DataError::MalformedLine {
        line,
        reason: reason.to_string(),
    }
}

fn read(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), DataError> {
    std::fs::write(path, text).map_err(|e| DataError::io(path, e))
}

pub fn load_feature_file(path: &Path) -> Result<FeatureFile, DataError> {
    FeatureFile::parse(&read(path)?).map_err(|e| match e {
        DataError::Io { .. } => e.in_file(path),
        other => other,
    })
}

pub fn write_feature_file(path: &Path, file: &FeatureFile) -> Result<(), DataError> {
    write(path, &file.to_text())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Label {
    pub score: f64,
    pub class: usize,
}

pub type LabelMap = BTreeMap<String, Label>;

pub fn parse_labels(text: &str) -> Result<LabelMap, DataError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header.trim() != LABEL_MAGIC {
        return Err(DataError::BadHeader(header.to_string()));
    }
    let mut out = LabelMap::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [id, score, class] = fields.as_slice() else {
            return Err(malformed(line_no, "expected `<id> <continuous> <class>`"));
        };
        let score: f64 = score
            .parse()
            .ok()
            .filter(|x: &f64| x.is_finite())
            .ok_or_else(|| malformed(line_no, "continuous label is not a number"))?;
        let class: usize = class
            .parse()
            .ok()
            .filter(|&c| c < NUM_CLASSES)
            .ok_or_else(|| malformed(line_no, "class label must be 0, 1 or 2"))?;
        if out.insert(id.to_string(), Label { score, class }).is_some() {
            return Err(DataError::DuplicateId(id.to_string()));
        }
    }
    Ok(out)
}

pub fn labels_to_text(labels: &LabelMap) -> String {
    let mut s = format!("{LABEL_MAGIC}\n");
    for (id, l) in labels {
        write!(s, "{id} ").unwrap();
        fmt_f64(&mut s, l.score);
        writeln!(s, " {}", l.class).unwrap();
    }
    s
}

pub fn load_labels(path: &Path) -> Result<LabelMap, DataError> {
    parse_labels(&read(path)?)
}

pub fn write_labels(path: &Path, labels: &LabelMap) -> Result<(), DataError> {
    write(path, &labels_to_text(labels))
}

/// One labeled example with any subset of the three modalities.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub features: BTreeMap<Modality, FeatureSequence>,
    pub label: Label,
}

/// Joins per-modality feature files with a label map. Sample order follows
/// the first feature file; every feature file must cover the same ids.
pub fn assemble(files: &[FeatureFile], labels: &LabelMap) -> Result<Vec<SampleRecord>, DataError> {
    let Some(first) = files.first() else {
        return Ok(Vec::new());
    };
    let lookup: Vec<BTreeMap<&str, &FeatureSequence>> = files
        .iter()
        .map(|f| f.entries.iter().map(|(id, s)| (id.as_str(), s)).collect())
        .collect();
    first
        .entries
        .iter()
        .map(|(id, _)| {
            let label = *labels
                .get(id)
                .ok_or_else(|| DataError::MissingLabel(id.clone()))?;
            let mut features = BTreeMap::new();
            for (file, map) in files.iter().zip(&lookup) {
                let seq = map
                    .get(id.as_str())
                    .ok_or_else(|| DataError::MissingModality {
                        id: id.clone(),
                        modality: file.modality,
                    })?;
                features.insert(file.modality, (*seq).clone());
            }
            Ok(SampleRecord {
                id: id.clone(),
                features,
                label,
            })
        })
        .collect()
}

/// Splits a record list back into one feature file per modality plus labels.
pub fn disassemble(records: &[SampleRecord]) -> (Vec<FeatureFile>, LabelMap) {
    let mut files: BTreeMap<Modality, FeatureFile> = BTreeMap::new();
    let mut labels = LabelMap::new();
    for r in records {
        labels.insert(r.id.clone(), r.label);
        for (&m, seq) in &r.features {
            files
                .entry(m)
                .or_insert_with(|| FeatureFile {
                    modality: m,
                    dim: seq.dim(),
                    entries: Vec::new(),
                })
                .entries
                .push((r.id.clone(), seq.clone()));
        }
    }
    (files.into_values().collect(), labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_per_class: usize,
    /// Feature widths for V, A, T.
    pub dims: [usize; 3],
    pub len_range: (usize, usize),
    pub noise_std: f64,
    /// How many of the three modalities carry the class signature.
    pub signal_modalities: usize,
    pub signal_scale: f64,
    pub train_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_per_class: 100,
            dims: [16, 12, 20],
            len_range: (8, 48),
            noise_std: 0.5,
            signal_modalities: 2,
            signal_scale: 1.0,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<SampleRecord>,
    pub test: Vec<SampleRecord>,
    /// `signatures[class][modality]`, unit norm.
    pub signatures: Vec<[Tensor; 3]>,
}

/// Three classes, each with a unit-norm signature per modality. Every sample
/// adds its class signature to every step of `signal_modalities` randomly
/// chosen modalities, plus white noise everywhere.
pub fn synth_dataset(cfg: &SynthConfig) -> Dataset {
    assert!(cfg.n_per_class >= 1 && (1..=3).contains(&cfg.signal_modalities));
    let mut rng = Rng::new(cfg.seed);
    let signatures: Vec<[Tensor; 3]> = (0..NUM_CLASSES)
        .map(|_| {
            cfg.dims.map(|d| {
                let v = Tensor::rand_normal(&mut rng, &[d], 1.0);
                let norm = v.dot(&v).unwrap().sqrt();
                v.scale(1.0 / norm)
            })
        })
        .collect();

    let mut samples = Vec::with_capacity(NUM_CLASSES * cfg.n_per_class);
    for class in 0..NUM_CLASSES {
        for i in 0..cfg.n_per_class {
            let len = rng.range_inclusive(cfg.len_range.0, cfg.len_range.1);
            let mut order = [0usize, 1, 2];
            rng.shuffle(&mut order);
            let carriers = &order[..cfg.signal_modalities];
            let mut features = BTreeMap::new();
            for m in Modality::ALL {
                let d = cfg.dims[m.index()];
                let mut values = Tensor::rand_normal(&mut rng, &[len, d], cfg.noise_std);
                if carriers.contains(&m.index()) {
                    let sig = signatures[class][m.index()].scale(cfg.signal_scale);
                    values = values.add_row_vector(&sig).expect("signature width");
                }
                features.insert(m, FeatureSequence::new(m, values));
            }
            let score = class as f64 - 1.0 + rng.uniform(-0.2, 0.2);
            samples.push(SampleRecord {
                id: format!("c{class}_{i:04}"),
                features,
                label: Label { score, class },
            });
        }
    }
    rng.shuffle(&mut samples);
    let n_train = ((samples.len() as f64) * cfg.train_fraction).round() as usize;
    let test = samples.split_off(n_train);
    Dataset {
        train: samples,
        test,
        signatures,
    }
}

/// File names used by [`write_dataset_dir`].
pub fn feature_file_name(split: &str, m: Modality) -> String {
    format!("{split}_{m}.feat")
}

pub fn label_file_name(split: &str) -> String {
    format!("{split}.labels")
}

/// Writes `train_{V,A,T}.feat`, `test_{V,A,T}.feat`, `train.labels`, `test.labels`.
pub fn write_dataset_dir(dir: &Path, data: &Dataset) -> Result<Vec<PathBuf>, DataError> {
    std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let mut written = Vec::new();
    for (split, records) in [("train", &data.train), ("test", &data.test)] {
        let (files, labels) = disassemble(records);
        for f in &files {
            let p = dir.join(feature_file_name(split, f.modality));
            write_feature_file(&p, f)?;
            written.push(p);
        }
        let p = dir.join(label_file_name(split));
        write_labels(&p, &labels)?;
        written.push(p);
    }
    Ok(written)
}
