use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mmsa_core::audio::{load_wav, mfcc, normalize_peak, AudioError};
use mmsa_core::checkpoint::{load_checkpoint, save_checkpoint};
use mmsa_core::data::{
    assemble, load_feature_file, load_labels, synth_dataset, write_dataset_dir, write_feature_file,
    FeatureFile, FeatureSequence, Modality, SampleRecord, SynthConfig,
};
use mmsa_core::metrics::MetricReport;
use mmsa_core::model::SmpModel;
use mmsa_core::optim::{evaluate, history_csv, prepare_examples, train_with, Evaluation, Example};
use mmsa_core::rng::Rng;
use mmsa_core::verify::{gradcheck_suite, render_table};

use crate::config::{sidecar_path, RunConfig, Split};
use crate::error::CliError;

pub const DEFAULT_RUN_DIR: &str = "run";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const METRICS_FILE: &str = "metrics.csv";

fn require_files(paths: &[&Path]) -> Result<(), CliError> {
    for p in paths {
        if !p.is_file() {
            return Err(CliError::Data(format!(
                "missing input file {}",
                p.display()
            )));
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

struct SplitFiles {
    features: Vec<(Modality, PathBuf)>,
    labels: PathBuf,
}

impl SplitFiles {
    fn resolve(cfg: &RunConfig, split: Split) -> Result<Self, CliError> {
        let (features, labels) = cfg.resolve_split(split)?;
        Ok(Self { features, labels })
    }

    fn paths(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = self.features.iter().map(|(_, p)| p.as_path()).collect();
        v.push(&self.labels);
        v
    }

    fn load(&self) -> Result<Vec<SampleRecord>, CliError> {
        let mut files = Vec::with_capacity(self.features.len());
        for (m, p) in &self.features {
            let f = load_feature_file(p)?;
            if f.modality != *m {
                return Err(CliError::Data(format!(
                    "{}: holds modality {}, expected {m}",
                    p.display(),
                    f.modality
                )));
            }
            files.push(f);
        }
        Ok(assemble(&files, &load_labels(&self.labels)?)?)
    }
}

fn examples(cfg: &RunConfig, files: &SplitFiles) -> Result<Vec<Example>, CliError> {
    Ok(prepare_examples(&files.load()?, &cfg.model)?)
}

/// Text block per split followed by a CSV table. The CSV columns are
/// `split` then [`MetricReport::CSV_HEADER`]; MAE and Corr are in natural
/// units (the text block also shows them ×100).
pub fn render_reports(rows: &[(&str, &Evaluation)]) -> (String, String) {
    let mut text = String::new();
    let mut csv = format!("split,{}\n", MetricReport::CSV_HEADER);
    for (name, ev) in rows {
        writeln!(
            text,
            "[{name}] n={} loss: {:.6}",
            ev.estimates.len(),
            ev.mean_loss
        )
        .expect("string write");
        text.push_str(&ev.report.to_text());
        writeln!(csv, "{name},{}", ev.report.to_csv_row()).expect("string write");
    }
    (text, csv)
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate_model()?;
    cfg.validate_train()?;
    let out = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_RUN_DIR));
    if out.is_file() {
        return Err(CliError::Config(format!(
            "output {} is a file, expected a directory",
            out.display()
        )));
    }
    let train_files = SplitFiles::resolve(cfg, Split::Train)?;
    let test_files = if cfg.has_split(Split::Test) {
        Some(SplitFiles::resolve(cfg, Split::Test)?)
    } else {
        None
    };
    require_files(&train_files.paths())?;
    if let Some(t) = &test_files {
        require_files(&t.paths())?;
    }

    let train_set = examples(cfg, &train_files)?;
    let test_set = test_files.as_ref().map(|t| examples(cfg, t)).transpose()?;

    let mut model = SmpModel::new(cfg.model.clone(), &mut Rng::new(cfg.train.seed))?;
    let history = train_with(&mut model, &train_set, &cfg.train, |s| {
        eprintln!("epoch {} loss {:.6} acc {:.4}", s.epoch, s.loss, s.acc);
    })?;

    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out.display())))?;
    let ckpt = out.join(CHECKPOINT_FILE);
    save_checkpoint(&model, &ckpt)?;
    write_text(&sidecar_path(&ckpt), &cfg.model_text())?;
    write_text(&out.join(HISTORY_FILE), &history_csv(&history))?;

    let train_eval = evaluate(&model, &train_set)?;
    let test_eval = test_set.as_ref().map(|t| evaluate(&model, t)).transpose()?;
    let mut rows = vec![("train", &train_eval)];
    if let Some(t) = &test_eval {
        rows.push(("test", t));
    }
    let (text, csv) = render_reports(&rows);
    write_text(&out.join(METRICS_FILE), &csv)?;
    print!("{text}{csv}");
    eprintln!("wrote {}", out.display());
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let ckpt = cfg
        .checkpoint
        .clone()
        .ok_or_else(|| CliError::Config("eval needs a checkpoint: set checkpoint=PATH".into()))?;
    cfg.validate_model()?;
    let split = cfg.eval_split;
    let files = SplitFiles::resolve(cfg, split)?;
    let mut inputs = files.paths();
    inputs.push(&ckpt);
    require_files(&inputs)?;

    let checkpoint = load_checkpoint(&ckpt)?;
    let data = examples(cfg, &files)?;
    // Initial values are irrelevant: every parameter is overwritten.
    let mut model = SmpModel::new(cfg.model.clone(), &mut Rng::new(0))?;
    checkpoint.apply(&mut model)?;
    let ev = evaluate(&model, &data)?;
    let (text, csv) = render_reports(&[(split.name(), &ev)]);
    if let Some(out) = &cfg.out {
        write_text(out, &csv)?;
    }
    print!("{text}{csv}");
    Ok(())
}

pub fn tool_mfcc(cfg: &RunConfig, input: &Path, output: &Path) -> Result<(), CliError> {
    cfg.mfcc.validate()?;
    require_files(&[input])?;
    if output == input {
        return Err(CliError::Config("output path equals the input path".into()));
    }
    let audio = load_wav(input)?;
    // Silence has no peak to scale; it passes through unchanged.
    let audio = match cfg.normalize_dbfs.map(|t| normalize_peak(&audio, t)) {
        None | Some(Err(AudioError::SilentInput)) => audio,
        Some(r) => r?,
    };
    let coeffs = mfcc(&audio, &cfg.mfcc)?;
    let id = input
        .file_stem()
        .map(|s| s.to_string_lossy().replace(char::is_whitespace, "_"))
        .unwrap_or_else(|| "audio".into());
    let frames = coeffs.rows();
    let file = FeatureFile {
        modality: Modality::Audio,
        dim: cfg.mfcc.n_coeffs,
        entries: vec![(id, FeatureSequence::new(Modality::Audio, coeffs))],
    };
    write_feature_file(output, &file)?;
    println!(
        "wrote {}: {frames} frames x {} coefficients",
        output.display(),
        cfg.mfcc.n_coeffs
    );
    Ok(())
}

pub fn tool_synth(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate_synth()?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::Config("synth needs an output directory: --out DIR".into()))?;
    let data = synth_dataset(&SynthConfig {
        dims: cfg.model.dims,
        ..cfg.synth.clone()
    });
    for p in write_dataset_dir(&out, &data)? {
        println!("{}", p.display());
    }
    Ok(())
}

pub fn tool_gradcheck(cfg: &RunConfig) -> Result<(), CliError> {
    let rows = gradcheck_suite(cfg.train.seed);
    let table = render_table(&rows);
    print!("{table}");
    if let Some(out) = &cfg.out {
        write_text(out, &table)?;
    }
    let failed = rows.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        return Err(CliError::Numeric(format!(
            "{failed} gradient-check rows exceed tolerance"
        )));
    }
    Ok(())
}
