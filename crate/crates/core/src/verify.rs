//! Gradient-check suite over every layer, both SMP blocks and the full
//! trimodal model.
//!
//! Every row uses the same numeric settings: central differences with
//! `h = 1e-5 * max(1, |theta|)`, and Ridders' extrapolation from
//! `h = 1e-3 * max(1, |theta|)` for derivatives smaller than 1e-6, which a
//! fixed step cannot resolve against f64 round-off in an O(1) loss. Inputs
//! and the readout projection are drawn from one seeded stream; models with
//! ReLU units have their pre-activations pushed at least [`KINK_MARGIN`]
//! away from zero so that no difference straddles a kink.

use std::time::{Duration, Instant};

use crate::data::{Label, Modality};
use crate::layers::{
    grad_check_scalars_with, mean_pool_backward, mean_pool_time, AttentionPool, BiLstm, Conv1dFuse,
    FeedForward, GradCheckOptions, GradCheckReport, LayerNorm, Linear, Module, MultiHeadAttention,
    Param, PositionalTable, Probe,
};
use crate::model::{compute_loss, FusionMode, HeadMode, ModelConfig, ModelInput, SmpModel};
use crate::rng::Rng;
use crate::smp::{SmpBranch, SmpModule};
use crate::tensor::Tensor;

/// Tolerance for layers that are linear in their inputs.
pub const LINEAR_TOL: f64 = 1e-6;
pub const DEFAULT_TOL: f64 = 1e-4;
pub const KINK_MARGIN: f64 = 1e-2;

pub fn suite_options() -> GradCheckOptions {
    GradCheckOptions {
        refine_below: 1e-6,
        ..GradCheckOptions::default()
    }
}

#[derive(Debug, Clone)]
pub struct SuiteRow {
    pub name: &'static str,
    pub tolerance: f64,
    pub report: GradCheckReport,
    pub elapsed: Duration,
}

impl SuiteRow {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error <= self.tolerance
    }
}

/// Readout `<f(inputs), proj>` of a module.
struct Readout<M> {
    module: M,
    proj: Tensor,
    fwd: fn(&M, &[Tensor]) -> Tensor,
    bwd: fn(&mut M, &[Tensor], &Tensor) -> Vec<Tensor>,
}

impl<M: Module> Probe for Readout<M> {
    fn loss(&self, inputs: &[Tensor]) -> f64 {
        (self.fwd)(&self.module, inputs)
            .dot(&self.proj)
            .expect("readout shape")
    }
    fn backward(&mut self, inputs: &[Tensor]) -> Vec<Tensor> {
        (self.bwd)(&mut self.module, inputs, &self.proj)
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.module.params_mut()
    }
}

/// Parameter-free wrapper for function layers.
struct NoParams<T>(T);

impl<T> Module for NoParams<T> {
    fn params(&self) -> Vec<&Param> {
        vec![]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![]
    }
}

/// Cross-entropy of the full model against a fixed class label.
#[derive(Debug, Clone)]
pub struct ModelProbe {
    pub model: SmpModel,
    pub label: Label,
}

impl ModelProbe {
    fn input(&self, inputs: &[Tensor]) -> ModelInput {
        let mods = &self.model.config().modalities;
        ModelInput::from_tensors(mods.iter().copied().zip(inputs.iter().cloned()).collect())
    }
}

impl Probe for ModelProbe {
    fn loss(&self, inputs: &[Tensor]) -> f64 {
        let pass = self
            .model
            .forward(&self.input(inputs))
            .expect("valid probe input");
        compute_loss(&pass.prediction, &self.label)
            .expect("valid label")
            .0
    }
    fn backward(&mut self, inputs: &[Tensor]) -> Vec<Tensor> {
        let input = self.input(inputs);
        let pass = self.model.forward(&input).expect("valid probe input");
        let (_, g) = compute_loss(&pass.prediction, &self.label).expect("valid label");
        let grads = self
            .model
            .backward(&pass.cache, &g)
            .expect("cache from this model");
        let mods = self.model.config().modalities.clone();
        mods.iter().map(|m| grads[m].clone()).collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.model.params_mut()
    }
}

/// The full-model instance: T=8, d=16, 4 heads, feature dims 6/5/7.
pub fn trimodal_config() -> ModelConfig {
    ModelConfig {
        d_model: 16,
        heads: 4,
        blocks: 1,
        seq_len: 8,
        head: HeadMode::Classify3,
        modalities: Modality::ALL.to_vec(),
        fusion: FusionMode::Integrated,
        dims: [6, 5, 7],
        mask_padding: false,
    }
}

/// A model probe with inputs in U(-1, 1) and ReLU kinks cleared.
pub fn model_instance(cfg: &ModelConfig, seed: u64) -> (ModelProbe, Vec<Tensor>) {
    let mut rng = Rng::new(seed);
    let mut model = SmpModel::new(cfg.clone(), &mut rng).expect("valid config");
    let inputs: Vec<Tensor> = cfg
        .modalities
        .iter()
        .map(|&m| uniform(&mut rng, &[cfg.seq_len, cfg.dim(m)]))
        .collect();
    let mi = ModelInput::from_tensors(
        cfg.modalities
            .iter()
            .copied()
            .zip(inputs.iter().cloned())
            .collect(),
    );
    model
        .clear_relu_kinks(&mi, KINK_MARGIN)
        .expect("kinks clear");
    let label = Label {
        score: 0.0,
        class: 1,
    };
    (ModelProbe { model, label }, inputs)
}

fn uniform(rng: &mut Rng, shape: &[usize]) -> Tensor {
    Tensor::rand_uniform(rng, shape, -1.0, 1.0).expect("valid range")
}

fn run<P: Probe>(
    name: &'static str,
    tolerance: f64,
    mut probe: P,
    mut inputs: Vec<Tensor>,
) -> SuiteRow {
    let start = Instant::now();
    let checks = grad_check_scalars_with(&mut probe, &mut inputs, &suite_options());
    SuiteRow {
        name,
        tolerance,
        report: GradCheckReport::summarize(&checks),
        elapsed: start.elapsed(),
    }
}

fn clear_ffn_kinks(ffn: &mut FeedForward, x: &Tensor) {
    for _ in 0..64 {
        let (_, cache) = ffn.forward(x).expect("probe shape");
        if !ffn.shift_kinks(&cache, KINK_MARGIN) {
            return;
        }
    }
    panic!("could not clear FFN kinks");
}

/// Runs every row. `seed` fixes all weights, inputs and projections.
pub fn gradcheck_suite(seed: u64) -> Vec<SuiteRow> {
    let mut rows = layer_rows(seed);
    rows.push(model_row(seed));
    rows
}

pub fn model_row(seed: u64) -> SuiteRow {
    let (probe, inputs) = model_instance(&trimodal_config(), seed);
    run("full_trimodal_model", DEFAULT_TOL, probe, inputs)
}

/// Every row except the full model.
pub fn layer_rows(seed: u64) -> Vec<SuiteRow> {
    let mut rng = Rng::new(seed);
    let (t, d, heads) = (6, 8, 4);
    let mut rows = Vec::new();

    let lin = Linear::new("linear", 5, 4, &mut rng);
    let x = uniform(&mut rng, &[t, 5]);
    let proj = uniform(&mut rng, &[t, 4]);
    rows.push(run(
        "linear",
        LINEAR_TOL,
        Readout {
            module: lin,
            proj,
            fwd: |m, i| m.forward(&i[0]).unwrap(),
            bwd: |m, i, p| vec![m.backward(&i[0], p).unwrap()],
        },
        vec![x],
    ));

    let conv = Conv1dFuse::new("conv", 2 * d, d, &mut rng);
    let x = uniform(&mut rng, &[t, 2 * d]);
    let proj = uniform(&mut rng, &[t, d]);
    rows.push(run(
        "conv1x1",
        LINEAR_TOL,
        Readout {
            module: conv,
            proj,
            fwd: |m, i| m.forward(&i[0]).unwrap(),
            bwd: |m, i, p| vec![m.backward(&i[0], p).unwrap()],
        },
        vec![x],
    ));

    let x = uniform(&mut rng, &[t, d]);
    let proj = uniform(&mut rng, &[d]);
    rows.push(run(
        "mean_pool",
        LINEAR_TOL,
        Readout {
            module: NoParams(()),
            proj,
            fwd: |_, i| mean_pool_time(&i[0]).unwrap(),
            bwd: |_, i, p| vec![mean_pool_backward(p, i[0].rows())],
        },
        vec![x],
    ));

    let table = PositionalTable::new(t, d);
    let x = uniform(&mut rng, &[t, d]);
    let proj = uniform(&mut rng, &[t, d]);
    // The table is fixed; only the additive input path is differentiable.
    rows.push(run(
        "positional",
        LINEAR_TOL,
        Readout {
            module: NoParams(table),
            proj,
            fwd: |m, i| m.0.add(&i[0]).unwrap(),
            bwd: |_, _, p| vec![p.clone()],
        },
        vec![x],
    ));

    let pool = AttentionPool::new("attn_pool", d, &mut rng);
    let x = uniform(&mut rng, &[t, d]);
    let proj = uniform(&mut rng, &[d]);
    rows.push(run(
        "attention_pool",
        DEFAULT_TOL,
        Readout {
            module: pool,
            proj,
            fwd: |m, i| m.forward(&i[0]).unwrap().0,
            bwd: |m, i, p| {
                let (_, c) = m.forward(&i[0]).unwrap();
                vec![m.backward(&c, p).unwrap()]
            },
        },
        vec![x],
    ));

    let x = uniform(&mut rng, &[t, d]);
    let proj = uniform(&mut rng, &[t, d]);
    rows.push(run(
        "layer_norm",
        DEFAULT_TOL,
        Readout {
            module: LayerNorm::new(),
            proj,
            fwd: |m, i| m.forward(&i[0]).0,
            bwd: |m, i, p| {
                let (_, c) = m.forward(&i[0]);
                vec![m.backward(&c, p).unwrap()]
            },
        },
        vec![x],
    ));

    let mut ffn = FeedForward::new("ffn", d, &mut rng);
    let x = uniform(&mut rng, &[t, d]);
    clear_ffn_kinks(&mut ffn, &x);
    let proj = uniform(&mut rng, &[t, d]);
    rows.push(run(
        "feed_forward",
        DEFAULT_TOL,
        Readout {
            module: ffn,
            proj,
            fwd: |m, i| m.forward(&i[0]).unwrap().0,
            bwd: |m, i, p| {
                let (_, c) = m.forward(&i[0]).unwrap();
                vec![m.backward(&c, p).unwrap()]
            },
        },
        vec![x],
    ));

    let attn = MultiHeadAttention::new("self_attn", d, heads, &mut rng);
    let x = uniform(&mut rng, &[t, d]);
    let proj = uniform(&mut rng, &[t, d]);
    rows.push(run(
        "self_attention",
        DEFAULT_TOL,
        Readout {
            module: attn,
            proj,
            fwd: |m, i| m.self_attention(&i[0]).unwrap().0,
            bwd: |m, i, p| {
                let (_, c) = m.self_attention(&i[0]).unwrap();
                let (dt, ds) = m.backward(&c, p).unwrap();
                vec![dt.add(&ds).unwrap()]
            },
        },
        vec![x],
    ));

    let attn = MultiHeadAttention::new("cross_attn", d, heads, &mut rng);
    let (xt, xs) = (uniform(&mut rng, &[t, d]), uniform(&mut rng, &[t, d]));
    let proj = uniform(&mut rng, &[t, d]);
    rows.push(run(
        "cross_attention",
        DEFAULT_TOL,
        Readout {
            module: attn,
            proj,
            fwd: |m, i| m.cross_attention(&i[0], &i[1]).unwrap().0,
            bwd: |m, i, p| {
                let (_, c) = m.cross_attention(&i[0], &i[1]).unwrap();
                let (dt, ds) = m.backward(&c, p).unwrap();
                vec![dt, ds]
            },
        },
        vec![xt, xs],
    ));

    let lstm = BiLstm::new("bilstm", 5, d, &mut rng);
    let x = uniform(&mut rng, &[t, 5]);
    let proj = uniform(&mut rng, &[t, d]);
    rows.push(run(
        "bilstm",
        DEFAULT_TOL,
        Readout {
            module: lstm,
            proj,
            fwd: |m, i| m.forward(&i[0]).unwrap().0,
            bwd: |m, i, p| {
                let (_, c) = m.forward(&i[0]).unwrap();
                vec![m.backward(&c, p).unwrap()]
            },
        },
        vec![x],
    ));

    let mut branch = SmpBranch::new("smp_branch", d, heads, &mut rng);
    let (xa, xb) = (uniform(&mut rng, &[t, d]), uniform(&mut rng, &[t, d]));
    clear_branch_kinks(&mut branch, &xa, &xb);
    let proj = uniform(&mut rng, &[t, d]);
    rows.push(run(
        "smp_branch",
        DEFAULT_TOL,
        Readout {
            module: branch,
            proj,
            fwd: |m, i| m.forward(&i[0], &i[1]).unwrap().0,
            bwd: |m, i, p| {
                let (_, c) = m.forward(&i[0], &i[1]).unwrap();
                let (a, b) = m.backward(&c, p).unwrap();
                vec![a, b]
            },
        },
        vec![xa, xb],
    ));

    let mut smp = SmpModule::new("smp", d, heads, 1, &mut rng);
    let (xa, xb) = (uniform(&mut rng, &[t, d]), uniform(&mut rng, &[t, d]));
    clear_smp_kinks(&mut smp, &xa, &xb);
    let proj = uniform(&mut rng, &[t, d]);
    rows.push(run(
        "smp_module",
        DEFAULT_TOL,
        Readout {
            module: smp,
            proj,
            fwd: |m, i| m.forward(&i[0], &i[1]).unwrap().0.fused,
            bwd: |m, i, p| {
                let (_, c) = m.forward(&i[0], &i[1]).unwrap();
                let (a, b) = m.backward(&c, p).unwrap();
                vec![a, b]
            },
        },
        vec![xa, xb],
    ));
    rows
}

fn clear_branch_kinks(branch: &mut SmpBranch, target: &Tensor, source: &Tensor) {
    for _ in 0..64 {
        let (_, cache) = branch.forward(target, source).expect("probe shape");
        if !branch.ffn.shift_kinks(cache.ffn_cache(), KINK_MARGIN) {
            return;
        }
    }
    panic!("could not clear SMP branch kinks");
}

fn clear_smp_kinks(smp: &mut SmpModule, a: &Tensor, b: &Tensor) {
    for _ in 0..64 {
        let (_, cache) = smp.forward(a, b).expect("probe shape");
        let mut moved = false;
        for (level, lvl) in smp.levels.iter_mut().enumerate() {
            let (l, r) = cache.branch_caches(level);
            moved |= lvl.left.ffn.shift_kinks(l.ffn_cache(), KINK_MARGIN);
            moved |= lvl.right.ffn.shift_kinks(r.ffn_cache(), KINK_MARGIN);
        }
        if !moved {
            return;
        }
    }
    panic!("could not clear SMP kinks");
}

/// Fixed-width table, one line per row plus a summary line.
pub fn render_table(rows: &[SuiteRow]) -> String {
    let mut s = format!(
        "{:<22} {:>9} {:>12} {:>10} {:>9}  {}\n",
        "layer", "scalars", "max_rel_err", "tolerance", "seconds", "status"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<22} {:>9} {:>12.3e} {:>10.0e} {:>9.2}  {}\n",
            r.name,
            r.report.scalars_checked,
            r.report.max_rel_error,
            r.tolerance,
            r.elapsed.as_secs_f64(),
            if r.passed() { "ok" } else { "FAIL" }
        ));
    }
    let passed = rows.iter().filter(|r| r.passed()).count();
    s.push_str(&format!("{passed}/{} rows within tolerance\n", rows.len()));
    s
}
