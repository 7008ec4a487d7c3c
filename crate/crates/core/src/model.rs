//! Unimodal, bimodal and trimodal sentiment models.
//!
//! Every modality is projected to width `d`. That projection feeds two
//! paths: a BiLSTM plus attention pooling giving the unimodal feature `F_m`,
//! and (after adding positional encodings) the pairwise fusion modules whose
//! time-averaged outputs give `F_xy`. The head is a single linear layer over
//! the concatenated features.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::data::{
    resample_to_len, DataError, FeatureSequence, Label, Modality, SampleRecord, NUM_CLASSES,
};
use crate::layers::{
    join, mean_pool_backward, mean_pool_time, AttentionPool, AttentionPoolCache, BiLstm,
    BiLstmCache, LayerError, Linear, Module, Param, PositionalTable,
};
use crate::rng::Rng;
use crate::smp::{SmpCache, SmpModule};
use crate::tensor::{softmax_in_place, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("input is missing modality {0}")]
    MissingModality(Modality),
    #[error("modality {modality}: expected feature dim {expected}, found {found}")]
    DimMismatch {
        modality: Modality,
        expected: usize,
        found: usize,
    },
    #[error("modality {modality}: expected {expected} time steps, found {found}")]
    LengthMismatch {
        modality: Modality,
        expected: usize,
        found: usize,
    },
    #[error("class label {0} out of range 0..3")]
    LabelOutOfRange(usize),
    #[error("expected {expected} modalities for this entry point, model has {found}")]
    ArityMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadMode {
    /// Three-way softmax over class indices.
    Classify3,
    /// One continuous score.
    Regress,
}

impl HeadMode {
    pub fn outputs(self) -> usize {
        match self {
            HeadMode::Classify3 => NUM_CLASSES,
            HeadMode::Regress => 1,
        }
    }
}

impl fmt::Display for HeadMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadMode::Classify3 => "classify3",
            HeadMode::Regress => "regress",
        })
    }
}

impl FromStr for HeadMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "classify3" => Ok(HeadMode::Classify3),
            "regress" => Ok(HeadMode::Regress),
            other => Err(format!(
                "unknown head mode {other:?} (expected classify3 or regress)"
            )),
        }
    }
}

/// Which features reach the head when two or more modalities are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// Pairwise fused features only.
    FusedOnly,
    /// Unimodal features followed by the pairwise fused features.
    Integrated,
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMode::FusedOnly => "fused-only",
            FusionMode::Integrated => "integrated",
        })
    }
}

impl FromStr for FusionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fused-only" => Ok(FusionMode::FusedOnly),
            "integrated" => Ok(FusionMode::Integrated),
            other => Err(format!(
                "unknown fusion mode {other:?} (expected fused-only or integrated)"
            )),
        }
    }
}

/// Parses letters such as `VAT` or `VA` into a sorted modality list.
pub fn parse_modalities(s: &str) -> Result<Vec<Modality>, String> {
    let mut out = Vec::new();
    for c in s.chars() {
        let m = Modality::from_letter(c).ok_or_else(|| format!("unknown modality {c:?}"))?;
        if out.contains(&m) {
            return Err(format!("modality {c} listed twice"));
        }
        out.push(m);
    }
    if out.is_empty() {
        return Err("no modalities given".into());
    }
    out.sort();
    Ok(out)
}

pub fn modalities_to_string(ms: &[Modality]) -> String {
    ms.iter().map(|m| m.letter()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    pub blocks: usize,
    pub seq_len: usize,
    pub head: HeadMode,
    /// Sorted, without duplicates.
    pub modalities: Vec<Modality>,
    pub fusion: FusionMode,
    /// Input widths for V, A, T.
    pub dims: [usize; 3],
    /// Hide zero-padded steps from attention keys.
    pub mask_padding: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 128,
            heads: 4,
            blocks: 1,
            seq_len: 32,
            head: HeadMode::Classify3,
            modalities: Modality::ALL.to_vec(),
            fusion: FusionMode::Integrated,
            dims: [16, 12, 20],
            mask_padding: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return err("d_model must be a positive multiple of heads");
        }
        if self.d_model % 2 != 0 {
            return err("d_model must be even (BiLSTM halves)");
        }
        if self.blocks == 0 {
            return err("blocks must be at least 1");
        }
        if self.seq_len == 0 {
            return err("seq_len must be at least 1");
        }
        if self.modalities.is_empty() {
            return err("modality set is empty");
        }
        if self.modalities.windows(2).any(|w| w[0] >= w[1]) {
            return err("modalities must be sorted and distinct");
        }
        if self.modalities.iter().any(|m| self.dims[m.index()] == 0) {
            return err("input dims must be positive");
        }
        Ok(())
    }

    pub fn dim(&self, m: Modality) -> usize {
        self.dims[m.index()]
    }

    /// Unimodal encoders exist for single-modality models and in integrated mode.
    pub fn uses_encoders(&self) -> bool {
        self.modalities.len() == 1 || self.fusion == FusionMode::Integrated
    }

    /// Ordered pairs `(V,A), (V,T), (A,T)` restricted to the modality set.
    pub fn pairs(&self) -> Vec<(Modality, Modality)> {
        let ms = &self.modalities;
        let mut out = Vec::new();
        for i in 0..ms.len() {
            for j in i + 1..ms.len() {
                out.push((ms[i], ms[j]));
            }
        }
        out
    }

    pub fn head_width(&self) -> usize {
        let unimodal = if self.uses_encoders() {
            self.modalities.len()
        } else {
            0
        };
        (unimodal + self.pairs().len()) * self.d_model
    }
}

/// Projection plus optional temporal encoder for one modality.
#[derive(Debug, Clone)]
pub struct ModalityBranch {
    pub proj: Linear,
    pub encoder: Option<(BiLstm, AttentionPool)>,
}

#[derive(Debug, Clone)]
struct EncoderCache {
    lstm: BiLstmCache,
    pool: AttentionPoolCache,
}

#[derive(Debug, Clone)]
struct BranchCache {
    input: Tensor,
    encoder: Option<EncoderCache>,
}

impl ModalityBranch {
    fn new(prefix: &str, d_in: usize, d: usize, with_encoder: bool, rng: &mut Rng) -> Self {
        let proj = Linear::new(&join(prefix, "proj"), d_in, d, rng);
        let encoder = with_encoder.then(|| {
            (
                BiLstm::new(&join(prefix, "lstm"), d, d, rng),
                AttentionPool::new(&join(prefix, "pool"), d, rng),
            )
        });
        Self { proj, encoder }
    }
}

impl Module for ModalityBranch {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.proj.params();
        if let Some((lstm, pool)) = &self.encoder {
            v.extend(lstm.params());
            v.extend(pool.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.proj.params_mut();
        if let Some((lstm, pool)) = &mut self.encoder {
            v.extend(lstm.params_mut());
            v.extend(pool.params_mut());
        }
        v
    }
}

/// Model-ready input: one `T × d_m` tensor per modality, plus how many
/// leading steps are real data (the rest is zero padding).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub seqs: BTreeMap<Modality, Tensor>,
    pub valid: BTreeMap<Modality, usize>,
}

impl ModelInput {
    /// Sequences already of length `T`; all steps count as valid.
    pub fn from_tensors(seqs: BTreeMap<Modality, Tensor>) -> Self {
        let valid = seqs.iter().map(|(&m, t)| (m, t.rows())).collect();
        Self { seqs, valid }
    }

    /// Resamples the configured modalities of a record to length `T`.
    pub fn from_record(rec: &SampleRecord, cfg: &ModelConfig) -> Result<Self, ModelError> {
        let mut seqs = BTreeMap::new();
        let mut valid = BTreeMap::new();
        for &m in &cfg.modalities {
            let seq = rec.features.get(&m).ok_or(ModelError::MissingModality(m))?;
            if seq.dim() != cfg.dim(m) {
                return Err(ModelError::DimMismatch {
                    modality: m,
                    expected: cfg.dim(m),
                    found: seq.dim(),
                });
            }
            let resampled = resample_to_len(seq, cfg.seq_len)?;
            valid.insert(m, seq.len().min(cfg.seq_len));
            seqs.insert(m, resampled.values);
        }
        Ok(Self { seqs, valid })
    }
}

/// Pooled features that reach the head.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BranchOutputs {
    pub unimodal: BTreeMap<Modality, Tensor>,
    pub fused: BTreeMap<(Modality, Modality), Tensor>,
}

impl BranchOutputs {
    pub fn unimodal(&self, m: Modality) -> Option<&Tensor> {
        self.unimodal.get(&m)
    }

    pub fn fused(&self, a: Modality, b: Modality) -> Option<&Tensor> {
        self.fused.get(&(a.min(b), a.max(b)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    /// Probabilities indexed by class label.
    Classes([f64; 3]),
    Score(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimate {
    Class(usize),
    Score(f64),
}

/// Argmax with lowest-index tie-break, or the score unchanged.
pub fn predict(pred: &Prediction) -> Estimate {
    match pred {
        Prediction::Classes(p) => {
            let mut best = 0;
            for (i, &v) in p.iter().enumerate().skip(1) {
                if v > p[best] {
                    best = i;
                }
            }
            Estimate::Class(best)
        }
        Prediction::Score(s) => Estimate::Score(*s),
    }
}

pub const PROB_FLOOR: f64 = 1e-12;

/// Cross-entropy for class heads, L1 for score heads. Returns the loss and
/// its gradient with respect to the head outputs (pre-softmax logits).
pub fn compute_loss(pred: &Prediction, label: &Label) -> Result<(f64, Vec<f64>), ModelError> {
    match pred {
        Prediction::Classes(p) => {
            if label.class >= NUM_CLASSES {
                return Err(ModelError::LabelOutOfRange(label.class));
            }
            let loss = -p[label.class].max(PROB_FLOOR).ln();
            let mut g = p.to_vec();
            g[label.class] -= 1.0;
            Ok((loss, g))
        }
        Prediction::Score(s) => {
            let diff = s - label.score;
            let sign = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            Ok((diff.abs(), vec![sign]))
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelCache {
    branches: BTreeMap<Modality, BranchCache>,
    fusions: Vec<SmpCache>,
    head_input: Tensor,
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub outputs: BranchOutputs,
    pub prediction: Prediction,
    pub cache: ModelCache,
}

#[derive(Debug, Clone)]
pub struct SmpModel {
    config: ModelConfig,
    branches: Vec<(Modality, ModalityBranch)>,
    fusions: Vec<((Modality, Modality), SmpModule)>,
    head: Linear,
    pe: PositionalTable,
}

impl SmpModel {
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self, ModelError> {
        config.validate()?;
        let d = config.d_model;
        let branches = config
            .modalities
            .iter()
            .map(|&m| {
                let prefix = m.letter().to_string();
                (
                    m,
                    ModalityBranch::new(&prefix, config.dim(m), d, config.uses_encoders(), rng),
                )
            })
            .collect();
        let fusions = config
            .pairs()
            .into_iter()
            .map(|(a, b)| {
                let prefix = format!("{}{}", a.letter(), b.letter());
                (
                    (a, b),
                    SmpModule::new(&prefix, d, config.heads, config.blocks, rng),
                )
            })
            .collect();
        let head = Linear::new("head", config.head_width(), config.head.outputs(), rng);
        let pe = PositionalTable::new(config.seq_len, d);
        Ok(Self {
            config,
            branches,
            fusions,
            head,
            pe,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn branch(&self, m: Modality) -> Option<&ModalityBranch> {
        self.branches.iter().find(|(k, _)| *k == m).map(|(_, b)| b)
    }

    pub fn fusion(&self, a: Modality, b: Modality) -> Option<&SmpModule> {
        self.fusions
            .iter()
            .find(|(k, _)| *k == (a, b))
            .map(|(_, f)| f)
    }

    pub fn fusion_mut(&mut self, a: Modality, b: Modality) -> Option<&mut SmpModule> {
        self.fusions
            .iter_mut()
            .find(|(k, _)| *k == (a, b))
            .map(|(_, f)| f)
    }

    pub fn head(&self) -> &Linear {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Linear {
        &mut self.head
    }

    /// Projection, BiLSTM states and pooled feature for one modality.
    /// `x` must already have `T` rows.
    pub fn unimodal_branch(
        &self,
        m: Modality,
        x: &Tensor,
    ) -> Result<(Tensor, Option<Tensor>), ModelError> {
        self.check_input(m, x)?;
        let branch = self.branch(m).ok_or(ModelError::MissingModality(m))?;
        let projected = branch.proj.forward(x)?;
        match &branch.encoder {
            Some((lstm, pool)) => {
                let (encoded, _) = lstm.forward(&projected)?;
                let (pooled, _) = pool.forward(&encoded)?;
                Ok((encoded, Some(pooled)))
            }
            None => Ok((projected, None)),
        }
    }

    fn check_input(&self, m: Modality, x: &Tensor) -> Result<(), ModelError> {
        if x.rank() != 2 || x.cols() != self.config.dim(m) {
            return Err(ModelError::DimMismatch {
                modality: m,
                expected: self.config.dim(m),
                found: x.cols(),
            });
        }
        if x.rows() != self.config.seq_len {
            return Err(ModelError::LengthMismatch {
                modality: m,
                expected: self.config.seq_len,
                found: x.rows(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &ModelInput) -> Result<ForwardPass, ModelError> {
        let branch_order: Vec<usize> = (0..self.branches.len()).collect();
        let fusion_order: Vec<usize> = (0..self.fusions.len()).collect();
        self.forward_ordered(input, &branch_order, &fusion_order)
    }

    /// Evaluation order of branches and fusions is a free choice; results
    /// are always assembled in canonical order.
    fn forward_ordered(
        &self,
        input: &ModelInput,
        branch_order: &[usize],
        fusion_order: &[usize],
    ) -> Result<ForwardPass, ModelError> {
        let steps = self.config.seq_len;
        let mut caches = BTreeMap::new();
        let mut smp_inputs = BTreeMap::new();
        let mut outputs = BranchOutputs::default();
        let mut masks: BTreeMap<Modality, Vec<bool>> = BTreeMap::new();

        for &bi in branch_order {
            let (m, branch) = &self.branches[bi];
            let x = input.seqs.get(m).ok_or(ModelError::MissingModality(*m))?;
            self.check_input(*m, x)?;
            let projected = branch.proj.forward(x)?;
            let encoder = match &branch.encoder {
                Some((lstm, pool)) => {
                    let (encoded, lstm_cache) = lstm.forward(&projected)?;
                    let (pooled, pool_cache) = pool.forward(&encoded)?;
                    outputs.unimodal.insert(*m, pooled);
                    Some(EncoderCache {
                        lstm: lstm_cache,
                        pool: pool_cache,
                    })
                }
                None => None,
            };
            if !self.fusions.is_empty() {
                smp_inputs.insert(*m, self.pe.add(&projected)?);
            }
            if self.config.mask_padding {
                let valid = input.valid.get(m).copied().unwrap_or(steps).clamp(1, steps);
                masks.insert(*m, (0..steps).map(|t| t < valid).collect());
            }
            caches.insert(
                *m,
                BranchCache {
                    input: x.clone(),
                    encoder,
                },
            );
        }

        let mut fusion_caches: Vec<Option<SmpCache>> = vec![None; self.fusions.len()];
        for &fi in fusion_order {
            let ((a, b), smp) = &self.fusions[fi];
            let (out, cache) = smp.forward_masked(
                &smp_inputs[a],
                &smp_inputs[b],
                masks.get(a).map(Vec::as_slice),
                masks.get(b).map(Vec::as_slice),
            )?;
            outputs.fused.insert((*a, *b), mean_pool_time(&out.fused)?);
            fusion_caches[fi] = Some(cache);
        }

        let mut features: Vec<&Tensor> = Vec::new();
        if self.config.uses_encoders() {
            features.extend(self.branches.iter().map(|(m, _)| &outputs.unimodal[m]));
        }
        features.extend(self.fusions.iter().map(|(k, _)| &outputs.fused[k]));
        let mut head_input = Vec::with_capacity(self.config.head_width());
        for f in features {
            head_input.extend_from_slice(f.data());
        }
        debug_assert_eq!(head_input.len(), self.config.head_width());
        let head_input = Tensor::new(&[1, head_input.len()], head_input)?;
        let logits = self.head.forward(&head_input)?;
        let prediction = match self.config.head {
            HeadMode::Classify3 => {
                let mut p = [0.0; 3];
                p.copy_from_slice(logits.data());
                softmax_in_place(&mut p);
                Prediction::Classes(p)
            }
            HeadMode::Regress => Prediction::Score(logits.data()[0]),
        };
        Ok(ForwardPass {
            outputs,
            prediction,
            cache: ModelCache {
                branches: caches,
                fusions: fusion_caches
                    .into_iter()
                    .map(|c| c.expect("every fusion ran"))
                    .collect(),
                head_input,
            },
        })
    }

    /// Accumulates parameter gradients for a gradient on the head outputs
    /// and returns the gradient with respect to each input sequence.
    pub fn backward(
        &mut self,
        cache: &ModelCache,
        d_logits: &[f64],
    ) -> Result<BTreeMap<Modality, Tensor>, ModelError> {
        let d = self.config.d_model;
        let steps = self.config.seq_len;
        let dy = Tensor::new(&[1, d_logits.len()], d_logits.to_vec())?;
        let d_head = self.head.backward(&cache.head_input, &dy)?;
        let d_head = d_head.data();

        let mut offset = 0;
        let mut d_proj: BTreeMap<Modality, Tensor> = BTreeMap::new();
        let take = |offset: &mut usize| {
            let chunk = Tensor::vector(d_head[*offset..*offset + d].to_vec());
            *offset += d;
            chunk
        };

        if self.config.uses_encoders() {
            for (m, branch) in &mut self.branches {
                let g = take(&mut offset);
                let (lstm, pool) = branch.encoder.as_mut().expect("encoders present");
                let enc = cache.branches[m].encoder.as_ref().expect("encoder cache");
                let d_encoded = pool.backward(&enc.pool, &g)?;
                d_proj.insert(*m, lstm.backward(&enc.lstm, &d_encoded)?);
            }
        }
        for (((a, b), smp), smp_cache) in self.fusions.iter_mut().zip(&cache.fusions) {
            let g = take(&mut offset);
            let d_fused = mean_pool_backward(&g, steps);
            let (da, db) = smp.backward(smp_cache, &d_fused)?;
            for (m, grad) in [(*a, da), (*b, db)] {
                match d_proj.get_mut(&m) {
                    Some(acc) => acc.add_assign(&grad)?,
                    None => {
                        d_proj.insert(m, grad);
                    }
                }
            }
        }

        let mut d_inputs = BTreeMap::new();
        for (m, branch) in &mut self.branches {
            let x = &cache.branches[m].input;
            let g = &d_proj[m];
            d_inputs.insert(*m, branch.proj.backward(x, g)?);
        }
        Ok(d_inputs)
    }

    /// Shifts inner feed-forward biases until every ReLU pre-activation in
    /// the fusion modules is at least `margin` away from zero on `input`, so
    /// small parameter perturbations never cross a kink. Returns the number
    /// of rounds that moved at least one bias.
    pub fn clear_relu_kinks(
        &mut self,
        input: &ModelInput,
        margin: f64,
    ) -> Result<usize, ModelError> {
        let mut shifts = 0;
        for _ in 0..64 {
            let pass = self.forward(input)?;
            let mut moved = false;
            for ((_, smp), cache) in self.fusions.iter_mut().zip(&pass.cache.fusions) {
                for (level, lvl) in smp.levels.iter_mut().enumerate() {
                    let (l, r) = cache.branch_caches(level);
                    moved |= lvl.left.ffn.shift_kinks(l.ffn_cache(), margin);
                    moved |= lvl.right.ffn.shift_kinks(r.ffn_cache(), margin);
                }
            }
            if !moved {
                return Ok(shifts);
            }
            shifts += 1;
        }
        Err(ModelError::Config(format!(
            "could not clear ReLU kinks to margin {margin}"
        )))
    }

    fn expect_arity(&self, n: usize) -> Result<(), ModelError> {
        if self.config.modalities.len() != n {
            return Err(ModelError::ArityMismatch {
                expected: n,
                found: self.config.modalities.len(),
            });
        }
        Ok(())
    }

    fn forward_sequences(
        &self,
        seqs: &[&FeatureSequence],
    ) -> Result<(BranchOutputs, Prediction), ModelError> {
        let mut map = BTreeMap::new();
        for s in seqs {
            map.insert(s.modality, s.values.clone());
        }
        let pass = self.forward(&ModelInput::from_tensors(map))?;
        Ok((pass.outputs, pass.prediction))
    }

    /// Three sequences of length `T`.
    pub fn trimodal_forward(
        &self,
        v: &FeatureSequence,
        a: &FeatureSequence,
        t: &FeatureSequence,
    ) -> Result<(BranchOutputs, Prediction), ModelError> {
        self.expect_arity(3)?;
        self.forward_sequences(&[v, a, t])
    }

    /// Two sequences of length `T`; the fusion mode comes from the config.
    pub fn bimodal_forward(
        &self,
        x: &FeatureSequence,
        y: &FeatureSequence,
    ) -> Result<(BranchOutputs, Prediction), ModelError> {
        self.expect_arity(2)?;
        self.forward_sequences(&[x, y])
    }
}

impl Module for SmpModel {
    fn params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        for (_, b) in &self.branches {
            v.extend(b.params());
        }
        for (_, f) in &self.fusions {
            v.extend(f.params());
        }
        v.extend(self.head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        for (_, b) in &mut self.branches {
            v.extend(b.params_mut());
        }
        for (_, f) in &mut self.fusions {
            v.extend(f.params_mut());
        }
        v.extend(self.head.params_mut());
        v
    }
}
