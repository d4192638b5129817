//! Model data: annotations, label matrices, hyperparameters, variational
//! states and fit results.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// N×C binary matrix (ground truth or predictions).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl LabelMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        Self::from_rows_with_cols(rows, cols)
    }

    /// Like [`LabelMatrix::from_rows`] but keeps `cols` when `rows` is empty.
    pub fn from_rows_with_cols(rows: &[Vec<u8>], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            if let Some(v) = r.iter().find(|&&v| v > 1) {
                return Err(Error::Invalid(format!(
                    "row {i} holds non-binary value {v}"
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.data[i * self.cols + j] = value as u8;
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// Subset index of row `i`; see [`subset_index`].
    pub fn subset_index(&self, i: usize) -> usize {
        subset_index(self.row(i))
    }
}

/// Index of a label vector in a 2^C table. Label 0 is the most significant
/// bit, so the index written in binary reads as the label row.
pub fn subset_index(labels: &[u8]) -> usize {
    labels
        .iter()
        .fold(0usize, |acc, &b| (acc << 1) | b as usize)
}

/// One annotation event: a full label vector from one annotator for one instance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Annotation {
    pub annotator: usize,
    pub instance: usize,
    pub labels: Vec<u8>,
}

/// Sparse store of annotations with both access paths: N(l), the
/// instances labeled by annotator l, and L(i), the annotators of instance i.
///
/// Records are kept sorted by (annotator, instance).
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    num_instances: usize,
    num_labels: usize,
    num_annotators: usize,
    records: Vec<Annotation>,
    by_annotator: Vec<Vec<usize>>,
    by_instance: Vec<Vec<usize>>,
}

impl AnnotationSet {
    pub fn new(
        num_instances: usize,
        num_labels: usize,
        num_annotators: usize,
        mut records: Vec<Annotation>,
    ) -> Result<Self> {
        for r in &records {
            if r.annotator >= num_annotators {
                return Err(Error::Invalid(format!(
                    "annotator id {} out of range (L = {num_annotators})",
                    r.annotator
                )));
            }
            if r.instance >= num_instances {
                return Err(Error::Invalid(format!(
                    "instance id {} out of range (N = {num_instances})",
                    r.instance
                )));
            }
            if r.labels.len() != num_labels {
                return Err(Error::Dimension(format!(
                    "annotation ({}, {}) has {} labels, expected {num_labels}",
                    r.annotator,
                    r.instance,
                    r.labels.len()
                )));
            }
            if r.labels.iter().any(|&b| b > 1) {
                return Err(Error::Invalid(format!(
                    "annotation ({}, {}) is not binary",
                    r.annotator, r.instance
                )));
            }
        }
        records.sort_by_key(|r| (r.annotator, r.instance));
        if let Some(w) = records
            .windows(2)
            .find(|w| w[0].annotator == w[1].annotator && w[0].instance == w[1].instance)
        {
            return Err(Error::Invalid(format!(
                "duplicate annotation for (annotator {}, instance {})",
                w[0].annotator, w[0].instance
            )));
        }
        let mut by_annotator = vec![Vec::new(); num_annotators];
        let mut by_instance = vec![Vec::new(); num_instances];
        for (idx, r) in records.iter().enumerate() {
            by_annotator[r.annotator].push(idx);
            by_instance[r.instance].push(idx);
        }
        Ok(Self {
            num_instances,
            num_labels,
            num_annotators,
            records,
            by_annotator,
            by_instance,
        })
    }

    pub fn empty(num_instances: usize, num_labels: usize, num_annotators: usize) -> Self {
        Self::new(num_instances, num_labels, num_annotators, Vec::new())
            .expect("empty set is valid")
    }

    pub fn num_instances(&self) -> usize {
        self.num_instances
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn num_annotators(&self) -> usize {
        self.num_annotators
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Annotation] {
        &self.records
    }

    pub fn by_annotator(&self, l: usize) -> impl Iterator<Item = &Annotation> + '_ {
        self.by_annotator[l].iter().map(move |&k| &self.records[k])
    }

    pub fn by_instance(&self, i: usize) -> impl Iterator<Item = &Annotation> + '_ {
        self.by_instance[i].iter().map(move |&k| &self.records[k])
    }

    /// N(l)
    pub fn instances_of(&self, l: usize) -> Vec<usize> {
        self.by_annotator(l).map(|r| r.instance).collect()
    }

    /// L(i)
    pub fn annotators_of(&self, i: usize) -> Vec<usize> {
        self.by_instance(i).map(|r| r.annotator).collect()
    }

    /// Instance-grouped view: for every instance, its (annotator, labels) pairs.
    pub fn instance_view(&self) -> Vec<Vec<(usize, Vec<u8>)>> {
        (0..self.num_instances)
            .map(|i| {
                self.by_instance(i)
                    .map(|r| (r.annotator, r.labels.clone()))
                    .collect()
            })
            .collect()
    }

    /// Rebuilds a set from its instance-grouped view.
    pub fn from_instance_view(
        num_labels: usize,
        num_annotators: usize,
        view: Vec<Vec<(usize, Vec<u8>)>>,
    ) -> Result<Self> {
        let n = view.len();
        let records = view
            .into_iter()
            .enumerate()
            .flat_map(|(instance, row)| {
                row.into_iter().map(move |(annotator, labels)| Annotation {
                    annotator,
                    instance,
                    labels,
                })
            })
            .collect();
        Self::new(n, num_labels, num_annotators, records)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub k: usize,
}

impl Hyperparams {
    pub const DEFAULT_ALPHA: f64 = 0.06;
    pub const DEFAULT_BETA: f64 = 0.84;

    /// Reliability prior (a, b) with the default weak label prior and γ = 1/K.
    pub fn new(a: f64, b: f64, k: usize) -> Result<Self> {
        let hp = Self {
            a,
            b,
            alpha: Self::DEFAULT_ALPHA,
            beta: Self::DEFAULT_BETA,
            gamma: 1.0 / k.max(1) as f64,
            k,
        };
        hp.validate()?;
        Ok(hp)
    }

    /// Picks (a, b) from the annotation density, see [`choose_prior`].
    pub fn for_annotations(y: &AnnotationSet, k: usize) -> Result<Self> {
        let (a, b) = choose_prior(annotation_stats(y).avg_per_instance);
        Self::new(a, b, k)
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("a", self.a),
            ("b", self.b),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Invalid(format!(
                    "hyperparameter {name} must be positive, got {v}"
                )));
            }
        }
        if self.k == 0 {
            return Err(Error::Invalid("K must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Relative ELBO improvement below which a restart stops.
    pub eta: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl FitConfig {
    pub fn bnc() -> Self {
        Self {
            eta: 1e-4,
            max_iter: 500,
            restarts: 1,
            seed: 0,
        }
    }

    pub fn bmmb() -> Self {
        Self {
            restarts: 3,
            ..Self::bnc()
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta.is_nan() || self.eta <= 0.0 {
            return Err(Error::Invalid(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Invalid("max_iter must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Invalid("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Variational parameters of the mixture model.
///
/// q(Ψˡⱼ) = Beta(g, h), q(zᵢⱼ) = Bernoulli(λ), q(τₖⱼ) = Beta(e, f),
/// q(xᵢ) = Discrete(rᵢ), q(π) = Dirichlet(m).
#[derive(Debug, Clone, PartialEq)]
pub struct BmmbState {
    pub g: Matrix,
    pub h: Matrix,
    pub lambda: Matrix,
    pub e: Matrix,
    pub f: Matrix,
    pub r: Matrix,
    pub m: Vec<f64>,
}

/// Variational parameters of the label-independent model. τⱼ lives in (e, f).
#[derive(Debug, Clone, PartialEq)]
pub struct BncState {
    pub g: Matrix,
    pub h: Matrix,
    pub lambda: Matrix,
    pub e: Vec<f64>,
    pub f: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Bnc,
    Bmmb,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Bnc => "bnc",
            ModelKind::Bmmb => "bmmb",
        }
    }
}

/// Posterior means of the mixture weights and component label probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSummary {
    /// m / Σm
    pub weights: Vec<f64>,
    /// e / (e + f), K×C
    pub tau: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub hyperparams: Hyperparams,
    pub lambda: Matrix,
    /// g / (g + h), L×C
    pub reliability: Matrix,
    pub elbo_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final ELBO of every restart, in the order they ran.
    pub restart_elbos: Vec<f64>,
    pub mixture: Option<MixtureSummary>,
}

impl FitResult {
    pub fn final_elbo(&self) -> f64 {
        self.elbo_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn predictions(&self) -> LabelMatrix {
        binarize(&self.lambda, DEFAULT_THRESHOLD)
    }
}

pub const MAX_SUBSET_LABELS: usize = 20;

/// Probability vector over the 2^C label subsets, indexed by [`subset_index`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSetDistribution {
    num_labels: usize,
    probs: Vec<f64>,
}

impl LabelSetDistribution {
    pub fn new(num_labels: usize, probs: Vec<f64>) -> Result<Self> {
        check_subset_capacity(num_labels)?;
        if probs.len() != 1 << num_labels {
            return Err(Error::Dimension(format!(
                "{} probabilities for C = {num_labels}, expected {}",
                probs.len(),
                1usize << num_labels
            )));
        }
        if probs.iter().any(|p| p.is_nan() || *p < 0.0) {
            return Err(Error::Invalid(
                "label-set probabilities must be non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!(
                "label-set probabilities sum to {total}"
            )));
        }
        Ok(Self { num_labels, probs })
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

pub(crate) fn check_subset_capacity(num_labels: usize) -> Result<()> {
    if num_labels > MAX_SUBSET_LABELS {
        return Err(Error::Capacity(format!(
            "label-set tables support C <= {MAX_SUBSET_LABELS}, got {num_labels}"
        )));
    }
    Ok(())
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Entry (i, j) is 1 iff λᵢⱼ ≥ threshold.
pub fn binarize(lambda: &Matrix, threshold: f64) -> LabelMatrix {
    let mut out = LabelMatrix::zeros(lambda.rows(), lambda.cols());
    for i in 0..lambda.rows() {
        for j in 0..lambda.cols() {
            out.set(i, j, lambda[(i, j)] >= threshold);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationStats {
    pub avg_per_instance: f64,
    pub per_annotator: Vec<usize>,
}

pub fn annotation_stats(y: &AnnotationSet) -> AnnotationStats {
    let avg_per_instance = if y.num_instances() == 0 {
        0.0
    } else {
        y.len() as f64 / y.num_instances() as f64
    };
    let per_annotator = (0..y.num_annotators())
        .map(|l| y.by_annotator[l].len())
        .collect();
    AnnotationStats {
        avg_per_instance,
        per_annotator,
    }
}

/// Reliability prior (a, b) from the average number of annotations per instance.
pub fn choose_prior(avg_per_instance: f64) -> (f64, f64) {
    if avg_per_instance < 2.0 {
        (12.0, 1.0)
    } else if avg_per_instance < 4.0 {
        (6.0, 1.0)
    } else {
        (4.0, 1.0)
    }
}
