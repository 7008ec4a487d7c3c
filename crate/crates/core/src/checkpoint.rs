//! Text checkpoints of parameter values.
//!
//! ```text
//! MMSA-CKPT v1
//! <name> <rank> <dim_1> ... <dim_rank>
//! <value> <value> ...
//! ```
//!
//! Two lines per parameter, in [`Module::params`] order. Values are written
//! with 17 significant digits, which round-trips every f64 exactly.

use std::path::Path;

use crate::layers::Module;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &str = "MMSA-CKPT v1";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("not a checkpoint (missing {CHECKPOINT_MAGIC:?} header)")]
    BadMagic,
    #[error("corrupt checkpoint at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("parameter {name}: expected shape {expected:?}, checkpoint has {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("parameter {0} is missing from the checkpoint")]
    MissingParam(String),
    #[error("checkpoint has parameter {0} that the model does not")]
    UnexpectedParam(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn capture(module: &dyn Module) -> Self {
        Self {
            entries: module
                .params()
                .into_iter()
                .map(|p| (p.name.clone(), p.value.clone()))
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from(CHECKPOINT_MAGIC);
        s.push('\n');
        for (name, t) in &self.entries {
            s.push_str(name);
            s.push(' ');
            s.push_str(&t.rank().to_string());
            for d in t.shape() {
                s.push(' ');
                s.push_str(&d.to_string());
            }
            s.push('\n');
            let vals: Vec<String> = t.data().iter().map(|v| format!("{v:.16e}")).collect();
            s.push_str(&vals.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, CheckpointError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l.trim_end() == CHECKPOINT_MAGIC => {}
            _ => return Err(CheckpointError::BadMagic),
        }
        let corrupt = |line, reason: &str| CheckpointError::Corrupt {
            line,
            reason: reason.to_string(),
        };
        // The writer always ends with a newline; without it the last number may be cut short.
        if !text.ends_with('\n') {
            return Err(corrupt(
                text.lines().count(),
                "truncated: missing final newline",
            ));
        }
        let mut entries: Vec<(String, Tensor)> = Vec::new();
        while let Some((ln, header)) = lines.next() {
            if header.trim().is_empty() {
                continue;
            }
            let mut tok = header.split_whitespace();
            let name = tok.next().expect("non-empty line").to_string();
            if entries.iter().any(|(n, _)| *n == name) {
                return Err(corrupt(ln, &format!("duplicate parameter {name}")));
            }
            let rank: usize = tok
                .next()
                .and_then(|r| r.parse().ok())
                .ok_or_else(|| corrupt(ln, "missing or invalid rank"))?;
            let shape: Vec<usize> = tok
                .map(|d| d.parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| corrupt(ln, "invalid dimension"))?;
            if shape.len() != rank {
                return Err(corrupt(ln, "rank does not match number of dimensions"));
            }
            let n: usize = shape.iter().product();
            let (vln, vline) = lines
                .next()
                .ok_or_else(|| corrupt(ln + 1, &format!("truncated: no values for {name}")))?;
            let values: Vec<f64> = vline
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| corrupt(vln, "invalid number"))?;
            if values.len() != n {
                return Err(corrupt(
                    vln,
                    &format!("truncated: {name} needs {n} values, found {}", values.len()),
                ));
            }
            let t = Tensor::new(&shape, values).map_err(|e| corrupt(ln, &e.to_string()))?;
            entries.push((name, t));
        }
        Ok(Self { entries })
    }

    /// Copies values into `module`. Names, order and shapes must match
    /// exactly; on error the module is unchanged.
    pub fn apply(&self, module: &mut dyn Module) -> Result<(), CheckpointError> {
        {
            let params = module.params();
            for (i, p) in params.iter().enumerate() {
                let Some((name, t)) = self.entries.get(i) else {
                    return Err(CheckpointError::MissingParam(p.name.clone()));
                };
                if *name != p.name {
                    return Err(if self.entries.iter().any(|(n, _)| *n == p.name) {
                        CheckpointError::UnexpectedParam(name.clone())
                    } else {
                        CheckpointError::MissingParam(p.name.clone())
                    });
                }
                if t.shape() != p.value.shape() {
                    return Err(CheckpointError::ShapeMismatch {
                        name: name.clone(),
                        expected: p.value.shape().to_vec(),
                        found: t.shape().to_vec(),
                    });
                }
            }
            if let Some((name, _)) = self.entries.get(params.len()) {
                return Err(CheckpointError::UnexpectedParam(name.clone()));
            }
        }
        for (p, (_, t)) in module.params_mut().into_iter().zip(&self.entries) {
            p.value = t.clone();
        }
        Ok(())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CheckpointError {
    CheckpointError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn save_checkpoint(module: &dyn Module, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, Checkpoint::capture(module).to_text()).map_err(|e| io_error(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|e| io_error(path, e))?;
    let text = String::from_utf8(bytes).map_err(|_| CheckpointError::BadMagic)?;
    Checkpoint::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Modality;
    use crate::model::{FusionMode, HeadMode, ModelConfig, SmpModel};
    use crate::rng::Rng;

    fn model(seed: u64, d: usize) -> SmpModel {
        let cfg = ModelConfig {
            d_model: d,
            heads: 2,
            seq_len: 6,
            head: HeadMode::Regress,
            modalities: vec![Modality::Visual, Modality::Text],
            fusion: FusionMode::Integrated,
            ..Default::default()
        };
        SmpModel::new(cfg, &mut Rng::new(seed)).unwrap()
    }

    fn values(m: &SmpModel) -> Vec<Tensor> {
        m.params().iter().map(|p| p.value.clone()).collect()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let src = model(1, 8);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&src, &path).unwrap();
        let mut dst = model(2, 8);
        assert_ne!(values(&src), values(&dst));
        load_checkpoint(&path).unwrap().apply(&mut dst).unwrap();
        assert_eq!(values(&src), values(&dst));
        assert_eq!(
            Checkpoint::capture(&dst).to_text(),
            std::fs::read_to_string(&path).unwrap()
        );
    }

    #[test]
    fn extreme_values_round_trip() {
        let vals = vec![f64::MIN_POSITIVE, -0.0, 1e308, -1.0 / 3.0, 5e-324];
        let ck = Checkpoint {
            entries: vec![("w".into(), Tensor::vector(vals.clone()))],
        };
        let back = Checkpoint::parse(&ck.to_text()).unwrap();
        let got = back.entries[0].1.data();
        for (a, b) in vals.iter().zip(got) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn shape_mismatch_names_parameter() {
        let text = Checkpoint::capture(&model(1, 8)).to_text();
        let mut dst = model(1, 12);
        let before = values(&dst);
        match Checkpoint::parse(&text).unwrap().apply(&mut dst) {
            Err(CheckpointError::ShapeMismatch { name, .. }) => assert_eq!(name, "V.proj.weight"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(before, values(&dst));
    }

    #[test]
    fn bad_input_is_an_error_not_a_crash() {
        assert_eq!(Checkpoint::parse(""), Err(CheckpointError::BadMagic));
        assert_eq!(
            Checkpoint::parse("MMSA-FEAT v1\n"),
            Err(CheckpointError::BadMagic)
        );
        let full = Checkpoint::capture(&model(3, 8)).to_text();
        for cut in [full.len() / 3, full.len() / 2, full.len() - 10] {
            let truncated = &full[..cut];
            let r = Checkpoint::parse(truncated).and_then(|c| c.apply(&mut model(3, 8)));
            assert!(r.is_err(), "cut at {cut} accepted");
        }
        let missing = std::path::Path::new("/nonexistent/dir/x.ckpt");
        assert!(matches!(
            load_checkpoint(missing),
            Err(CheckpointError::Io { .. })
        ));
    }

    #[test]
    fn names_must_match() {
        let mut ck = Checkpoint::capture(&model(1, 8));
        ck.entries[0].0 = "bogus".into();
        assert!(matches!(
            ck.apply(&mut model(1, 8)),
            Err(CheckpointError::MissingParam(_))
        ));
        let mut ck = Checkpoint::capture(&model(1, 8));
        ck.entries.push(("extra".into(), Tensor::vector(vec![1.0])));
        assert_eq!(
            ck.apply(&mut model(1, 8)),
            Err(CheckpointError::UnexpectedParam("extra".into()))
        );
        let mut ck = Checkpoint::capture(&model(1, 8));
        ck.entries.pop();
        assert!(matches!(
            ck.apply(&mut model(1, 8)),
            Err(CheckpointError::MissingParam(_))
        ));
    }
}
