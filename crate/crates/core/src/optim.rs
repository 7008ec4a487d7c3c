//! Adam, mini-batch training and evaluation.
//!
//! Within a batch, samples are split into fixed chunks of [`CHUNK`] samples.
//! Each chunk accumulates gradients on its own copy of the model and chunk
//! gradients are summed in chunk order, so the trajectory depends only on
//! the seed and the data, never on the number of worker threads.

use rayon::prelude::*;

use crate::data::{Label, SampleRecord};
use crate::layers::{Module, Param};
use crate::metrics::{MetricError, MetricReport};
use crate::model::{
    compute_loss, predict, Estimate, HeadMode, ModelConfig, ModelError, ModelInput, SmpModel,
};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimError {
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),
    #[error("optimizer state does not match parameter {0}")]
    ShapeMismatch(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample {index}: {source}")]
    Sample { index: usize, source: ModelError },
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("non-finite loss in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid training config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[&Param]) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape()))
                .collect()
        };
        Self {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn for_module(config: AdamConfig, module: &dyn Module) -> Self {
        Self::new(config, &module.params())
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    /// One bias-corrected update from the gradients stored in `params`.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, mut params: Vec<&mut Param>) -> Result<(), OptimError> {
        if params.len() != self.m.len() {
            let name = params.first().map(|p| p.name.clone()).unwrap_or_default();
            return Err(OptimError::ShapeMismatch(name));
        }
        for (p, m) in params.iter().zip(&self.m) {
            if p.grad.shape() != m.shape() || p.value.shape() != m.shape() {
                return Err(OptimError::ShapeMismatch(p.name.clone()));
            }
            if !p.grad.is_finite() {
                return Err(OptimError::NonFiniteGradient(p.name.clone()));
            }
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = p.grad.data();
            let (m, v) = (m.data_mut(), v.data_mut());
            for (i, theta) in p.value.data_mut().iter_mut().enumerate() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(params: Vec<&mut Param>, max_norm: f64) -> f64 {
    let norm = params
        .iter()
        .map(|p| p.grad.data().iter().map(|g| g * g).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for p in params {
            p.grad = p.grad.scale(s);
        }
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: ModelInput,
    pub label: Label,
}

pub fn prepare_examples(
    records: &[SampleRecord],
    cfg: &ModelConfig,
) -> Result<Vec<Example>, TrainError> {
    records
        .iter()
        .enumerate()
        .map(|(index, r)| {
            Ok(Example {
                input: ModelInput::from_record(r, cfg)
                    .map_err(|source| TrainError::Sample { index, source })?,
                label: r.label,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub clip_norm: Option<f64>,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            seed: 0,
            shuffle: true,
            clip_norm: None,
            adam: AdamConfig::default(),
        }
    }
}

/// One row of the training history. `acc` is class accuracy for a class
/// head and sign accuracy (zero labels excluded) for a score head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub acc: f64,
}

pub fn history_csv(history: &[EpochStats]) -> String {
    let mut s = String::from("epoch,loss,acc\n");
    for h in history {
        s.push_str(&format!("{},{:.10},{:.6}\n", h.epoch, h.loss, h.acc));
    }
    s
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    loss: f64,
    hits: usize,
    counted: usize,
}

impl Tally {
    fn add(&mut self, other: Tally) {
        self.loss += other.loss;
        self.hits += other.hits;
        self.counted += other.counted;
    }

    fn acc(&self) -> f64 {
        if self.counted == 0 {
            0.0
        } else {
            self.hits as f64 / self.counted as f64
        }
    }
}

fn tally_hit(estimate: Estimate, label: &Label) -> Tally {
    match estimate {
        Estimate::Class(c) => Tally {
            loss: 0.0,
            hits: usize::from(c == label.class),
            counted: 1,
        },
        Estimate::Score(s) if label.score != 0.0 => Tally {
            loss: 0.0,
            hits: usize::from((s > 0.0) == (label.score > 0.0)),
            counted: 1,
        },
        Estimate::Score(_) => Tally::default(),
    }
}

/// Forward and backward over `samples` on a private copy of `model`.
fn chunk_gradients(
    model: &SmpModel,
    data: &[Example],
    samples: &[usize],
) -> Result<(Vec<Tensor>, Tally), TrainError> {
    let mut local = model.clone();
    local.zero_grad();
    let mut tally = Tally::default();
    for &i in samples {
        let ex = &data[i];
        let wrap = |source| TrainError::Sample { index: i, source };
        let pass = local.forward(&ex.input).map_err(wrap)?;
        let (loss, d_logits) = compute_loss(&pass.prediction, &ex.label).map_err(wrap)?;
        local.backward(&pass.cache, &d_logits).map_err(wrap)?;
        let mut t = tally_hit(predict(&pass.prediction), &ex.label);
        t.loss = loss;
        tally.add(t);
    }
    Ok((
        local.params().iter().map(|p| p.grad.clone()).collect(),
        tally,
    ))
}

fn check_data(model: &SmpModel, data: &[Example]) -> Result<(), TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let cfg = model.config();
    for (index, ex) in data.iter().enumerate() {
        for &m in &cfg.modalities {
            if !ex.input.seqs.contains_key(&m) {
                return Err(TrainError::Sample {
                    index,
                    source: ModelError::MissingModality(m),
                });
            }
        }
    }
    Ok(())
}

pub fn train(
    model: &mut SmpModel,
    data: &[Example],
    tc: &TrainConfig,
) -> Result<Vec<EpochStats>, TrainError> {
    train_with(model, data, tc, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    model: &mut SmpModel,
    data: &[Example],
    tc: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>, TrainError> {
    if tc.epochs == 0 || tc.batch_size == 0 {
        return Err(TrainError::Config(
            "epochs and batch_size must be at least 1".into(),
        ));
    }
    check_data(model, data)?;
    let mut adam = AdamState::for_module(tc.adam, model);
    let mut rng = Rng::new(tc.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(tc.epochs);

    for epoch in 1..=tc.epochs {
        if tc.shuffle {
            rng.shuffle(&mut order);
        }
        let mut epoch_tally = Tally::default();
        for batch in order.chunks(tc.batch_size) {
            let model_ref: &SmpModel = model;
            let results: Vec<Result<(Vec<Tensor>, Tally), TrainError>> = batch
                .par_chunks(CHUNK)
                .map(|samples| chunk_gradients(model_ref, data, samples))
                .collect();
            let mut total: Option<Vec<Tensor>> = None;
            for r in results {
                let (grads, tally) = r?;
                epoch_tally.add(tally);
                match &mut total {
                    None => total = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            a.add_assign(g).expect("same parameter layout");
                        }
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for (p, g) in model
                .params_mut()
                .into_iter()
                .zip(total.expect("nonempty batch"))
            {
                p.grad = g.scale(scale);
            }
            if let Some(max) = tc.clip_norm {
                clip_grad_norm(model.params_mut(), max);
            }
            adam.step(model.params_mut())?;
        }
        let loss = epoch_tally.loss / data.len() as f64;
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch });
        }
        let stats = EpochStats {
            epoch,
            loss,
            acc: epoch_tally.acc(),
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(history)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub estimates: Vec<Estimate>,
    pub mean_loss: f64,
    /// Class accuracy or sign accuracy, as in [`EpochStats::acc`].
    pub accuracy: f64,
    pub report: MetricReport,
}

/// Forward-only pass over `data`; the model is not modified.
pub fn evaluate(model: &SmpModel, data: &[Example]) -> Result<Evaluation, TrainError> {
    check_data(model, data)?;
    let outputs: Vec<Result<(Estimate, f64), TrainError>> = data
        .par_iter()
        .enumerate()
        .map(|(index, ex)| {
            let wrap = |source| TrainError::Sample { index, source };
            let pass = model.forward(&ex.input).map_err(wrap)?;
            let (loss, _) = compute_loss(&pass.prediction, &ex.label).map_err(wrap)?;
            Ok((predict(&pass.prediction), loss))
        })
        .collect();
    let mut estimates = Vec::with_capacity(data.len());
    let mut tally = Tally::default();
    for (r, ex) in outputs.into_iter().zip(data) {
        let (e, loss) = r?;
        let mut t = tally_hit(e, &ex.label);
        t.loss = loss;
        tally.add(t);
        estimates.push(e);
    }
    let report = match model.config().head {
        HeadMode::Classify3 => {
            let preds: Vec<usize> = estimates
                .iter()
                .map(|e| match e {
                    Estimate::Class(c) => *c,
                    Estimate::Score(_) => unreachable!("class head"),
                })
                .collect();
            let labels: Vec<usize> = data.iter().map(|e| e.label.class).collect();
            MetricReport::for_classes(&preds, &labels)?
        }
        HeadMode::Regress => {
            let preds: Vec<f64> = estimates
                .iter()
                .map(|e| match e {
                    Estimate::Score(s) => *s,
                    Estimate::Class(_) => unreachable!("score head"),
                })
                .collect();
            let labels: Vec<f64> = data.iter().map(|e| e.label.score).collect();
            MetricReport::for_scores(&preds, &labels)?
        }
    };
    Ok(Evaluation {
        estimates,
        mean_loss: tally.loss / data.len() as f64,
        accuracy: tally.acc(),
        report,
    })
}
