//! `key=value` run configuration. Sources are applied in order (defaults,
//! files, `--set` overrides), so the last assignment of a key wins.

use std::path::{Path, PathBuf};

use mmsa_core::audio::MfccConfig;
use mmsa_core::data::{feature_file_name, label_file_name, Modality, SynthConfig};
use mmsa_core::model::{modalities_to_string, parse_modalities, FusionMode, HeadMode, ModelConfig};
use mmsa_core::optim::{AdamConfig, TrainConfig};

use crate::error::CliError;

/// Keys copied into the checkpoint sidecar; together they fix every
/// parameter shape.
pub const MODEL_KEYS: [&str; 11] = [
    "d_model",
    "heads",
    "blocks",
    "seq_len",
    "head",
    "modalities",
    "fusion",
    "dim_v",
    "dim_a",
    "dim_t",
    "mask_padding",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Paths for one data split; `None` until set explicitly or derived from `data_dir`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitPaths {
    pub features: [Option<PathBuf>; 3],
    pub labels: Option<PathBuf>,
}

impl SplitPaths {
    fn is_set(&self) -> bool {
        self.labels.is_some() || self.features.iter().any(Option::is_some)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub mfcc: MfccConfig,
    /// Peak target in dBFS for `tools mfcc`; `None` disables normalization.
    pub normalize_dbfs: Option<f64>,
    pub synth: SynthConfig,
    pub data_dir: Option<PathBuf>,
    pub train_paths: SplitPaths,
    pub test_paths: SplitPaths,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub eval_split: Split,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            mfcc: MfccConfig::default(),
            normalize_dbfs: Some(-3.0),
            synth: SynthConfig::default(),
            data_dir: None,
            train_paths: SplitPaths::default(),
            test_paths: SplitPaths::default(),
            checkpoint: None,
            out: None,
            eval_split: Split::Test,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
}

fn real(key: &str, v: &str) -> Result<f64, String> {
    let x: f64 = num(key, v)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("{key}: value must be finite"))
    }
}

fn flag(key: &str, v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("{key}: expected true or false, found {v:?}")),
    }
}

fn optional_real(key: &str, v: &str) -> Result<Option<f64>, String> {
    if v == "none" {
        Ok(None)
    } else {
        real(key, v).map(Some)
    }
}

impl RunConfig {
    /// Assigns one key. Unknown keys and unparsable values are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        self.set_inner(key, value.trim()).map_err(CliError::Config)
    }

    fn set_inner(&mut self, key: &str, v: &str) -> Result<(), String> {
        let path = || Some(PathBuf::from(v));
        let modality = |letter: char| Modality::from_letter(letter).expect("letter").index();
        match key {
            "d_model" => self.model.d_model = num(key, v)?,
            "heads" => self.model.heads = num(key, v)?,
            "blocks" => self.model.blocks = num(key, v)?,
            "seq_len" => self.model.seq_len = num(key, v)?,
            "head" => self.model.head = v.parse::<HeadMode>()?,
            "modalities" => self.model.modalities = parse_modalities(v)?,
            "fusion" => self.model.fusion = v.parse::<FusionMode>()?,
            "dim_v" => self.model.dims[0] = num(key, v)?,
            "dim_a" => self.model.dims[1] = num(key, v)?,
            "dim_t" => self.model.dims[2] = num(key, v)?,
            "mask_padding" => self.model.mask_padding = flag(key, v)?,

            "epochs" => self.train.epochs = num(key, v)?,
            "batch_size" => self.train.batch_size = num(key, v)?,
            "seed" => {
                self.train.seed = num(key, v)?;
                self.synth.seed = self.train.seed;
            }
            "shuffle" => self.train.shuffle = flag(key, v)?,
            "clip_norm" => self.train.clip_norm = optional_real(key, v)?,
            "lr" => self.train.adam.lr = real(key, v)?,
            "beta1" => self.train.adam.beta1 = real(key, v)?,
            "beta2" => self.train.adam.beta2 = real(key, v)?,
            "eps" => self.train.adam.eps = real(key, v)?,

            "sample_rate" => self.mfcc.sample_rate = num(key, v)?,
            "frame_len" => self.mfcc.frame_len = num(key, v)?,
            "hop" => self.mfcc.hop = num(key, v)?,
            "fft_size" => self.mfcc.fft_size = num(key, v)?,
            "n_filters" => self.mfcc.n_filters = num(key, v)?,
            "n_coeffs" => self.mfcc.n_coeffs = num(key, v)?,
            "f_min" => self.mfcc.f_min = real(key, v)?,
            "f_max" => self.mfcc.f_max = real(key, v)?,
            "log_floor" => self.mfcc.log_floor = real(key, v)?,
            "normalize_dbfs" => self.normalize_dbfs = optional_real(key, v)?,

            "n_per_class" => self.synth.n_per_class = num(key, v)?,
            "synth_noise" => self.synth.noise_std = real(key, v)?,
            "synth_min_len" => self.synth.len_range.0 = num(key, v)?,
            "synth_max_len" => self.synth.len_range.1 = num(key, v)?,
            "synth_signal_modalities" => self.synth.signal_modalities = num(key, v)?,
            "synth_signal_scale" => self.synth.signal_scale = real(key, v)?,
            "train_fraction" => self.synth.train_fraction = real(key, v)?,

            "data_dir" => self.data_dir = path(),
            "train_v" => self.train_paths.features[modality('V')] = path(),
            "train_a" => self.train_paths.features[modality('A')] = path(),
            "train_t" => self.train_paths.features[modality('T')] = path(),
            "train_labels" => self.train_paths.labels = path(),
            "test_v" => self.test_paths.features[modality('V')] = path(),
            "test_a" => self.test_paths.features[modality('A')] = path(),
            "test_t" => self.test_paths.features[modality('T')] = path(),
            "test_labels" => self.test_paths.labels = path(),
            "checkpoint" => self.checkpoint = path(),
            "out" => self.out = path(),
            "eval_split" => {
                self.eval_split = match v {
                    "train" => Split::Train,
                    "test" => Split::Test,
                    _ => return Err(format!("eval_split: expected train or test, found {v:?}")),
                }
            }
            _ => return Err(format!("unknown config key {key:?}")),
        }
        Ok(())
    }

    /// Applies `key=value` lines. Blank lines and `#` comments are ignored;
    /// `origin` names the source in error messages.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!(
                    "{origin}:{}: expected key=value, found {line:?}",
                    i + 1
                ))
            })?;
            self.set(k.trim(), v)
                .map_err(|e| CliError::Config(format!("{origin}:{}: {}", i + 1, e.message())))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Applies one `--set` argument.
    pub fn apply_override(&mut self, arg: &str) -> Result<(), CliError> {
        let (k, v) = arg
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects key=value, found {arg:?}")))?;
        self.set(k.trim(), v)
    }

    fn model_value(&self, key: &str) -> Option<String> {
        let m = &self.model;
        Some(match key {
            "d_model" => m.d_model.to_string(),
            "heads" => m.heads.to_string(),
            "blocks" => m.blocks.to_string(),
            "seq_len" => m.seq_len.to_string(),
            "head" => m.head.to_string(),
            "modalities" => modalities_to_string(&m.modalities),
            "fusion" => m.fusion.to_string(),
            "dim_v" => m.dims[0].to_string(),
            "dim_a" => m.dims[1].to_string(),
            "dim_t" => m.dims[2].to_string(),
            "mask_padding" => m.mask_padding.to_string(),
            _ => return None,
        })
    }

    /// Sidecar text: the model keys, one per line, in a fixed order.
    pub fn model_text(&self) -> String {
        MODEL_KEYS
            .iter()
            .map(|k| format!("{k}={}\n", self.model_value(k).expect("model key")))
            .collect()
    }

    pub fn validate_model(&self) -> Result<(), CliError> {
        self.model
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate_train(&self) -> Result<(), CliError> {
        let t = &self.train;
        let fail = |m: &str| Err(CliError::Config(m.into()));
        if t.epochs == 0 || t.batch_size == 0 {
            return fail("epochs and batch_size must be at least 1");
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = t.adam;
        if lr < 0.0 || !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
            return fail("need lr >= 0, 0 <= beta1, beta2 < 1 and eps > 0");
        }
        if t.clip_norm.is_some_and(|c| c <= 0.0) {
            return fail("clip_norm must be positive or none");
        }
        Ok(())
    }

    pub fn validate_synth(&self) -> Result<(), CliError> {
        let s = &self.synth;
        let fail = |m: &str| Err(CliError::Config(m.into()));
        if s.n_per_class == 0 {
            return fail("n_per_class must be at least 1");
        }
        if s.len_range.0 == 0 || s.len_range.0 > s.len_range.1 {
            return fail("need 1 <= synth_min_len <= synth_max_len");
        }
        if !(1..=3).contains(&s.signal_modalities) {
            return fail("synth_signal_modalities must be 1, 2 or 3");
        }
        if s.noise_std < 0.0 || !(s.train_fraction > 0.0 && s.train_fraction < 1.0) {
            return fail("need synth_noise >= 0 and 0 < train_fraction < 1");
        }
        if self.model.dims.contains(&0) {
            return fail("dim_v, dim_a and dim_t must be positive");
        }
        Ok(())
    }

    /// Whether any path for `split` was configured, directly or via `data_dir`.
    pub fn has_split(&self, split: Split) -> bool {
        self.data_dir.is_some() || self.split_paths(split).is_set()
    }

    fn split_paths(&self, split: Split) -> &SplitPaths {
        match split {
            Split::Train => &self.train_paths,
            Split::Test => &self.test_paths,
        }
    }

    /// Feature files (one per configured modality, in modality order) and the label file.
    pub fn resolve_split(
        &self,
        split: Split,
    ) -> Result<(Vec<(Modality, PathBuf)>, PathBuf), CliError> {
        let sp = self.split_paths(split);
        let derive = |explicit: &Option<PathBuf>, name: String, key: String| {
            explicit
                .clone()
                .or_else(|| self.data_dir.as_ref().map(|d| d.join(name)))
                .ok_or_else(|| {
                    CliError::Config(format!("no path for {key}: set {key} or data_dir"))
                })
        };
        let split_name = split.name();
        let features = self
            .model
            .modalities
            .iter()
            .map(|&m| {
                let key = format!("{split_name}_{}", m.letter().to_ascii_lowercase());
                Ok((
                    m,
                    derive(
                        &sp.features[m.index()],
                        feature_file_name(split_name, m),
                        key,
                    )?,
                ))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let labels = derive(
            &sp.labels,
            label_file_name(split_name),
            format!("{split_name}_labels"),
        )?;
        Ok((features, labels))
    }
}

/// Sidecar path for a checkpoint: the checkpoint path with `.cfg` appended.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".cfg");
    PathBuf::from(s)
}
