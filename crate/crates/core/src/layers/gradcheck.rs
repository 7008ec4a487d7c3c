//! Central-difference gradient checker.
//!
//! A [`Probe`] wraps a layer together with a fixed scalar readout (usually a
//! dot product with a random projection of the output) so that every
//! parameter and input scalar has a well-defined derivative.

use crate::layers::param::Param;
use crate::tensor::Tensor;

pub trait Probe {
    /// Scalar readout of a forward pass.
    fn loss(&self, inputs: &[Tensor]) -> f64;
    /// Runs the analytic backward pass of [`Probe::loss`], accumulating into
    /// parameter gradients (which the checker zeroes first) and returning one
    /// gradient per input.
    fn backward(&mut self, inputs: &[Tensor]) -> Vec<Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Param>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarCheck {
    /// `name[index]`; inputs are named `input<k>`.
    pub label: String,
    pub analytic: f64,
    pub numeric: f64,
}

impl ScalarCheck {
    pub fn rel_error(&self) -> f64 {
        relative_error(self.analytic, self.numeric)
    }

    pub fn abs_error(&self) -> f64 {
        (self.analytic - self.numeric).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Label of the scalar with the largest error.
    pub worst: String,
    /// Analytic and numeric derivative at `worst`.
    pub worst_pair: (f64, f64),
    pub scalars_checked: usize,
}

impl GradCheckReport {
    pub fn summarize(checks: &[ScalarCheck]) -> Self {
        let mut report = GradCheckReport {
            max_rel_error: 0.0,
            worst: String::new(),
            worst_pair: (0.0, 0.0),
            scalars_checked: checks.len(),
        };
        for c in checks {
            let err = c.rel_error();
            if err > report.max_rel_error || report.worst.is_empty() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = c.label.clone();
                report.worst_pair = (c.analytic, c.numeric);
            }
        }
        report
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs().max(numeric.abs()) + 1e-12)
}

/// Default step scale: `h = DEFAULT_STEP * max(1, |theta|)`.
pub const DEFAULT_STEP: f64 = 1e-5;

pub fn grad_check<P: Probe>(probe: &mut P, inputs: &mut [Tensor]) -> GradCheckReport {
    GradCheckReport::summarize(&grad_check_scalars(probe, inputs))
}

/// Analytic versus central-difference derivative for every parameter
/// scalar, then every input scalar.
pub fn grad_check_scalars<P: Probe>(probe: &mut P, inputs: &mut [Tensor]) -> Vec<ScalarCheck> {
    grad_check_scalars_with(probe, inputs, &GradCheckOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step `h = step * max(1, |theta|)`.
    pub step: f64,
    /// Scalars whose plain estimate has magnitude below this are
    /// re-estimated with [`ridders`]; 0 disables refinement.
    pub refine_below: f64,
    /// Initial step scale for the refinement.
    pub refine_step: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            refine_below: 0.0,
            refine_step: 1e-3,
        }
    }
}

/// Derivative of `f` at 0 by Ridders' extrapolation of central differences
/// with steps `h, h/1.4, h/1.4^2, ...`. Returns the estimate and its error
/// bound.
pub fn ridders(mut f: impl FnMut(f64) -> f64, h: f64) -> (f64, f64) {
    const CON: f64 = 1.4;
    const CON2: f64 = CON * CON;
    const NTAB: usize = 10;
    const SAFE: f64 = 2.0;
    let mut a = [[0.0f64; NTAB]; NTAB];
    let mut hh = h;
    a[0][0] = (f(hh) - f(-hh)) / (2.0 * hh);
    let (mut ans, mut err) = (a[0][0], f64::INFINITY);
    for i in 1..NTAB {
        hh /= CON;
        a[0][i] = (f(hh) - f(-hh)) / (2.0 * hh);
        let mut fac = CON2;
        for j in 1..=i {
            a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
            fac *= CON2;
            let errt = (a[j][i] - a[j - 1][i])
                .abs()
                .max((a[j][i] - a[j - 1][i - 1]).abs());
            if errt <= err {
                err = errt;
                ans = a[j][i];
            }
        }
        // Higher order is making things worse.
        if (a[i][i] - a[i - 1][i - 1]).abs() >= SAFE * err {
            break;
        }
    }
    (ans, err)
}

#[derive(Clone, Copy)]
enum Slot {
    Param(usize),
    Input(usize),
}

fn assign<P: Probe>(probe: &mut P, inputs: &mut [Tensor], slot: Slot, j: usize, value: f64) {
    match slot {
        Slot::Param(pi) => probe.params_mut()[pi].value.data_mut()[j] = value,
        Slot::Input(ii) => inputs[ii].data_mut()[j] = value,
    }
}

fn loss_at<P: Probe>(
    probe: &mut P,
    inputs: &mut [Tensor],
    slot: Slot,
    j: usize,
    value: f64,
) -> f64 {
    assign(probe, inputs, slot, j, value);
    probe.loss(inputs)
}

fn current<P: Probe>(probe: &mut P, inputs: &[Tensor], slot: Slot, j: usize) -> f64 {
    match slot {
        Slot::Param(pi) => probe.params_mut()[pi].value.data()[j],
        Slot::Input(ii) => inputs[ii].data()[j],
    }
}

/// [`grad_check_scalars`] with explicit step and refinement settings.
pub fn grad_check_scalars_with<P: Probe>(
    probe: &mut P,
    inputs: &mut [Tensor],
    opts: &GradCheckOptions,
) -> Vec<ScalarCheck> {
    for p in probe.params_mut() {
        p.grad.fill(0.0);
    }
    let input_grads = probe.backward(inputs);
    assert_eq!(input_grads.len(), inputs.len(), "one gradient per input");
    let mut targets: Vec<(Slot, String, Tensor)> = probe
        .params_mut()
        .into_iter()
        .enumerate()
        .map(|(pi, p)| (Slot::Param(pi), p.name.clone(), p.grad.clone()))
        .collect();
    for (ii, g) in input_grads.into_iter().enumerate() {
        assert_eq!(g.len(), inputs[ii].len(), "input gradient shape");
        targets.push((Slot::Input(ii), format!("input{ii}"), g));
    }

    let mut out = Vec::new();
    for (slot, name, grad) in targets {
        for j in 0..grad.len() {
            let orig = current(probe, inputs, slot, j);
            let h = opts.step * orig.abs().max(1.0);
            let up = loss_at(probe, inputs, slot, j, orig + h);
            let down = loss_at(probe, inputs, slot, j, orig - h);
            let mut numeric = (up - down) / (2.0 * h);
            if numeric.abs() < opts.refine_below {
                let h0 = opts.refine_step * orig.abs().max(1.0);
                numeric = ridders(|d| loss_at(probe, inputs, slot, j, orig + d), h0).0;
            }
            assign(probe, inputs, slot, j, orig);
            out.push(ScalarCheck {
                label: format!("{name}[{j}]"),
                analytic: grad.data()[j],
                numeric,
            });
        }
    }
    out
}
