//! Evaluation metrics over continuous scores and class labels.
//!
//! Binning rules for `acc_k`:
//! - 7 and 5: clamp to `[-3, 3]` / `[-2, 2]`, then round half away from zero.
//! - 3: `(-inf, -0.1]` negative, `(-0.1, 0.1)` neutral, `[0.1, inf)` positive.
//! - 2: sign comparison (`> 0` is positive); exact-zero labels are skipped.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("length mismatch: {preds} predictions, {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("unsupported accuracy level {0}; expected 2, 3, 5 or 7")]
    UnsupportedLevel(usize),
}

fn check_lengths(preds: usize, labels: usize) -> Result<(), MetricError> {
    if preds != labels {
        return Err(MetricError::LengthMismatch { preds, labels });
    }
    if preds == 0 {
        return Err(MetricError::UndefinedMetric("no samples".into()));
    }
    Ok(())
}

fn clamp_round(x: f64, bound: f64) -> i64 {
    // f64::round rounds half away from zero.
    x.clamp(-bound, bound).round() as i64
}

fn three_way(x: f64) -> i64 {
    if x <= -0.1 {
        -1
    } else if x < 0.1 {
        0
    } else {
        1
    }
}

/// Bin index of `x` under the `k`-level rule. Not used for `k = 2`.
pub fn bin(x: f64, k: usize) -> Result<i64, MetricError> {
    match k {
        7 => Ok(clamp_round(x, 3.0)),
        5 => Ok(clamp_round(x, 2.0)),
        3 => Ok(three_way(x)),
        2 => Ok(i64::from(x > 0.0)),
        other => Err(MetricError::UnsupportedLevel(other)),
    }
}

pub fn acc_k(preds: &[f64], labels: &[f64], k: usize) -> Result<f64, MetricError> {
    check_lengths(preds.len(), labels.len())?;
    let mut hits = 0usize;
    let mut total = 0usize;
    for (&p, &l) in preds.iter().zip(labels) {
        if k == 2 && l == 0.0 {
            continue;
        }
        total += 1;
        if bin(p, k)? == bin(l, k)? {
            hits += 1;
        }
    }
    if total == 0 {
        return Err(MetricError::UndefinedMetric(
            "acc2 with only zero labels".into(),
        ));
    }
    Ok(hits as f64 / total as f64)
}

/// Plain accuracy over class indices.
pub fn class_accuracy(preds: &[usize], labels: &[usize]) -> Result<f64, MetricError> {
    check_lengths(preds.len(), labels.len())?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Per-class F1 (0/0 taken as 0) averaged with label-support weights.
pub fn f1_weighted(
    preds: &[usize],
    labels: &[usize],
    n_classes: usize,
) -> Result<f64, MetricError> {
    check_lengths(preds.len(), labels.len())?;
    let mut tp = vec![0usize; n_classes];
    let mut pred_count = vec![0usize; n_classes];
    let mut support = vec![0usize; n_classes];
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= n_classes || l >= n_classes {
            return Err(MetricError::UndefinedMetric(format!(
                "class index {} out of range for {n_classes} classes",
                p.max(l)
            )));
        }
        pred_count[p] += 1;
        support[l] += 1;
        if p == l {
            tp[p] += 1;
        }
    }
    let mut weighted = 0.0;
    for c in 0..n_classes {
        let denom = pred_count[c] + support[c];
        // 2PR/(P+R) = 2TP/(predicted + actual).
        let f1 = if denom == 0 {
            0.0
        } else {
            2.0 * tp[c] as f64 / denom as f64
        };
        weighted += f1 * support[c] as f64;
    }
    Ok(weighted / labels.len() as f64)
}

/// Weighted F1 of the positive/negative split used by Acc-2.
pub fn binary_f1(preds: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    check_lengths(preds.len(), labels.len())?;
    let (p, l): (Vec<usize>, Vec<usize>) = preds
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l != 0.0)
        .map(|(&p, &l)| (usize::from(p > 0.0), usize::from(l > 0.0)))
        .unzip();
    if l.is_empty() {
        return Err(MetricError::UndefinedMetric(
            "binary F1 with only zero labels".into(),
        ));
    }
    f1_weighted(&p, &l, 2)
}

pub fn mae(preds: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    check_lengths(preds.len(), labels.len())?;
    Ok(preds
        .iter()
        .zip(labels)
        .map(|(p, l)| (p - l).abs())
        .sum::<f64>()
        / preds.len() as f64)
}

pub fn pearson_corr(preds: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    check_lengths(preds.len(), labels.len())?;
    let n = preds.len() as f64;
    let mp = preds.iter().sum::<f64>() / n;
    let ml = labels.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&p, &l) in preds.iter().zip(labels) {
        let (dp, dl) = (p - mp, l - ml);
        sxy += dp * dl;
        sxx += dp * dp;
        syy += dl * dl;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::UndefinedMetric(
            "correlation with zero variance".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// One evaluation run. Fields a head mode cannot produce stay `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub acc2: Option<f64>,
    pub acc3: Option<f64>,
    pub acc5: Option<f64>,
    pub acc7: Option<f64>,
    pub f1: Option<f64>,
    pub mae: Option<f64>,
    pub corr: Option<f64>,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "acc2,acc3,acc5,acc7,f1,mae,corr";

    /// Report for a three-way class head: accuracy (as `acc3`) and F1.
    pub fn for_classes(preds: &[usize], labels: &[usize]) -> Result<Self, MetricError> {
        Ok(Self {
            acc3: Some(class_accuracy(preds, labels)?),
            f1: Some(f1_weighted(preds, labels, 3)?),
            ..Default::default()
        })
    }

    /// Report for continuous scores. Metrics that are undefined on this
    /// data (all-zero labels, constant predictions) are left out.
    pub fn for_scores(preds: &[f64], labels: &[f64]) -> Result<Self, MetricError> {
        check_lengths(preds.len(), labels.len())?;
        let defined = |r: Result<f64, MetricError>| match r {
            Ok(v) => Ok(Some(v)),
            Err(MetricError::UndefinedMetric(_)) => Ok(None),
            Err(e) => Err(e),
        };
        Ok(Self {
            acc2: defined(acc_k(preds, labels, 2))?,
            acc3: Some(acc_k(preds, labels, 3)?),
            acc5: Some(acc_k(preds, labels, 5)?),
            acc7: Some(acc_k(preds, labels, 7)?),
            f1: defined(binary_f1(preds, labels))?,
            mae: Some(mae(preds, labels)?),
            corr: defined(pearson_corr(preds, labels))?,
        })
    }

    fn fields(&self) -> [(&'static str, Option<f64>); 7] {
        [
            ("acc2", self.acc2),
            ("acc3", self.acc3),
            ("acc5", self.acc5),
            ("acc7", self.acc7),
            ("f1", self.f1),
            ("mae", self.mae),
            ("corr", self.corr),
        ]
    }

    /// `key: value` lines for present fields. MAE and Corr also show the
    /// ×100 scale common in published tables.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.fields() {
            if let Some(v) = v {
                match k {
                    "mae" | "corr" => writeln!(s, "{k}: {v:.6} (x100: {:.2})", v * 100.0),
                    _ => writeln!(s, "{k}: {v:.6}"),
                }
                .expect("write to string");
            }
        }
        s
    }

    /// Row matching [`CSV_HEADER`](Self::CSV_HEADER); absent fields are empty.
    pub fn to_csv_row(&self) -> String {
        self.fields()
            .iter()
            .map(|(_, v)| v.map(|x| format!("{x:.6}")).unwrap_or_default())
            .collect::<Vec<_>>()
            .join(",")
    }
}
