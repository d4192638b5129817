//! Majority-vote baseline and the evaluation measures: F1 variants,
//! label-set distributions and their KL divergence, annotator-type recovery.

use serde::{Deserialize, Serialize};

use crate::data::{
    check_subset_capacity, AnnotationSet, LabelMatrix, LabelSetDistribution, Matrix,
};
use crate::error::{Error, Result};
use crate::sim::{AnnotatorKind, AnnotatorProfile};

/// Label j is predicted for instance i iff strictly more than half of L(i) voted for it.
pub fn majority_vote(y: &AnnotationSet) -> LabelMatrix {
    let (n, c) = (y.num_instances(), y.num_labels());
    let mut out = LabelMatrix::zeros(n, c);
    for i in 0..n {
        let mut votes = vec![0usize; c];
        let mut total = 0usize;
        for r in y.by_instance(i) {
            total += 1;
            for (v, &b) in votes.iter_mut().zip(&r.labels) {
                *v += b as usize;
            }
        }
        for (j, &v) in votes.iter().enumerate() {
            out.set(i, j, 2 * v > total);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub micro: f64,
    #[serde(rename = "macro")]
    pub macro_: f64,
    pub example: f64,
}

#[derive(Debug, Default, Clone, Copy)]
struct Counts {
    tp: usize,
    fp: usize,
    fun: usize,
}

impl Counts {
    fn add(&mut self, t: u8, p: u8) {
        match (t, p) {
            (1, 1) => self.tp += 1,
            (0, 1) => self.fp += 1,
            (1, 0) => self.fun += 1,
            _ => {}
        }
    }

    /// 1 when neither side has a positive.
    fn f1(self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fun;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

pub fn f1_scores(truth: &LabelMatrix, pred: &LabelMatrix) -> Result<F1Scores> {
    if truth.rows() != pred.rows() || truth.cols() != pred.cols() {
        return Err(Error::Dimension(format!(
            "truth is {}x{}, prediction is {}x{}",
            truth.rows(),
            truth.cols(),
            pred.rows(),
            pred.cols()
        )));
    }
    let (n, c) = (truth.rows(), truth.cols());
    let mut pooled = Counts::default();
    let mut per_label = vec![Counts::default(); c];
    let mut example_sum = 0.0;
    for i in 0..n {
        let mut row = Counts::default();
        for (j, label) in per_label.iter_mut().enumerate() {
            let (t, p) = (truth.get(i, j), pred.get(i, j));
            pooled.add(t, p);
            label.add(t, p);
            row.add(t, p);
        }
        example_sum += row.f1();
    }
    let mean = |sum: f64, count: usize| if count == 0 { 1.0 } else { sum / count as f64 };
    Ok(F1Scores {
        micro: pooled.f1(),
        macro_: mean(per_label.iter().map(|c| c.f1()).sum(), c),
        example: mean(example_sum, n),
    })
}

/// Relative frequency of every label row.
pub fn empirical_label_distribution(z: &LabelMatrix) -> Result<LabelSetDistribution> {
    check_subset_capacity(z.cols())?;
    if z.rows() == 0 {
        return Err(Error::Invalid(
            "empirical label distribution of an empty matrix".into(),
        ));
    }
    let mut counts = vec![0usize; 1 << z.cols()];
    for i in 0..z.rows() {
        counts[z.subset_index(i)] += 1;
    }
    let n = z.rows() as f64;
    LabelSetDistribution::new(z.cols(), counts.into_iter().map(|k| k as f64 / n).collect())
}

pub const DEFAULT_KL_FLOOR: f64 = 1e-10;

/// KL(P ‖ P̂) with P̂ floored at `eps`.
pub fn kl_labelsets(
    p: &LabelSetDistribution,
    p_hat: &LabelSetDistribution,
    eps: f64,
) -> Result<f64> {
    if p.num_labels() != p_hat.num_labels() {
        return Err(Error::Dimension(format!(
            "label-set distributions over C = {} and C = {}",
            p.num_labels(),
            p_hat.num_labels()
        )));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Invalid("KL floor must be positive".into()));
    }
    let kl = p
        .probs()
        .iter()
        .zip(p_hat.probs())
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b.max(eps)).ln())
        .sum::<f64>();
    Ok(kl.max(0.0))
}

/// Nearest kind center to a mean reliability score; ties go to the earlier
/// kind in reliable, normal, random order.
pub fn classify_annotator(score: f64) -> AnnotatorKind {
    let mut best = AnnotatorKind::ALL[0];
    let mut best_d = (score - best.center()).abs();
    for &kind in &AnnotatorKind::ALL[1..] {
        let d = (score - kind.center()).abs();
        if d < best_d - 1e-12 {
            best = kind;
            best_d = d;
        }
    }
    best
}

/// Fraction of annotators whose label-averaged estimated reliability lands
/// nearest their true kind's center.
pub fn annotator_type_recovery(profiles: &[AnnotatorProfile], reliability: &Matrix) -> Result<f64> {
    if profiles.len() != reliability.rows() {
        return Err(Error::Dimension(format!(
            "{} profiles for {} estimated annotators",
            profiles.len(),
            reliability.rows()
        )));
    }
    if profiles.is_empty() {
        return Ok(1.0);
    }
    let hits = profiles
        .iter()
        .filter(|p| {
            let row = reliability.row(p.annotator);
            let score = row.iter().sum::<f64>() / row.len().max(1) as f64;
            classify_annotator(score) == p.kind
        })
        .count();
    Ok(hits as f64 / profiles.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub f1_micro: f64,
    pub f1_macro: f64,
    pub f1_example: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub recovery: Option<f64>,
}

impl EvalReport {
    pub fn from_f1(f1: F1Scores) -> Self {
        Self {
            f1_micro: f1.micro,
            f1_macro: f1.macro_,
            f1_example: f1.example,
            kl: None,
            recovery: None,
        }
    }
}
