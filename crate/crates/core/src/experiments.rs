//! End-to-end pipeline behind the command-line tool: simulate annotations,
//! fit a model, evaluate against the truth, and sweep one parameter.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bmmb::mixture_label_distribution;
use crate::data::{
    annotation_stats, AnnotationSet, FitConfig, Hyperparams, LabelMatrix, Matrix, MAX_SUBSET_LABELS,
};
use crate::error::{Error, Result};
use crate::metrics::{
    annotator_type_recovery, empirical_label_distribution, f1_scores, kl_labelsets, majority_vote,
    EvalReport, DEFAULT_KL_FLOOR,
};
use crate::sim::{
    generate_annotations, sample_annotator_pool, AnnotatorProfile, PlantedMixture, Ratio, SimConfig,
};
use crate::{bmmb, bnc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Mv,
    Bnc,
    Bmmb,
}

impl ModelChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelChoice::Mv => "mv",
            ModelChoice::Bnc => "bnc",
            ModelChoice::Bmmb => "bmmb",
        }
    }
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mv" => Ok(ModelChoice::Mv),
            "bnc" => Ok(ModelChoice::Bnc),
            "bmmb" => Ok(ModelChoice::Bmmb),
            other => Err(Error::Invalid(format!(
                "unknown model '{other}' (expected mv, bnc or bmmb)"
            ))),
        }
    }
}

/// Explicit hyperparameter values that replace the defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PriorOverrides {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
}

/// Density-based (a, b), α = 0.06, β = 0.84, γ = 1/K, then any overrides.
pub fn resolve_hyperparams(y: &AnnotationSet, k: usize, o: &PriorOverrides) -> Result<Hyperparams> {
    if k == 0 {
        return Err(Error::Invalid("K must be at least 1".into()));
    }
    let mut hp = Hyperparams::for_annotations(y, k)?;
    hp.a = o.a.unwrap_or(hp.a);
    hp.b = o.b.unwrap_or(hp.b);
    hp.alpha = o.alpha.unwrap_or(hp.alpha);
    hp.beta = o.beta.unwrap_or(hp.beta);
    hp.gamma = o.gamma.unwrap_or(hp.gamma);
    hp.validate()?;
    Ok(hp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureReport {
    pub weights: Vec<f64>,
    pub tau: Vec<Vec<f64>>,
}

/// Serialized outcome of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub model: ModelChoice,
    pub num_instances: usize,
    pub num_labels: usize,
    pub num_annotators: usize,
    pub avg_annotations_per_instance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyperparams: Option<Hyperparams>,
    pub predictions: Vec<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliability: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elbo_trace: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureReport>,
}

impl ResultFile {
    pub fn predictions(&self) -> Result<LabelMatrix> {
        LabelMatrix::from_rows_with_cols(&self.predictions, self.num_labels)
    }

    pub fn reliability_matrix(&self) -> Result<Option<Matrix>> {
        self.reliability
            .as_ref()
            .map(|r| Matrix::from_rows(r))
            .transpose()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn fit_model(
    model: ModelChoice,
    y: &AnnotationSet,
    k: usize,
    overrides: &PriorOverrides,
    cfg: &FitConfig,
) -> Result<ResultFile> {
    let avg = annotation_stats(y).avg_per_instance;
    let base = ResultFile {
        model,
        num_instances: y.num_instances(),
        num_labels: y.num_labels(),
        num_annotators: y.num_annotators(),
        avg_annotations_per_instance: avg,
        hyperparams: None,
        predictions: Vec::new(),
        lambda: None,
        reliability: None,
        elbo_trace: None,
        iterations: None,
        converged: None,
        mixture: None,
    };
    let fit = match model {
        ModelChoice::Mv => {
            return Ok(ResultFile {
                predictions: majority_vote(y).to_rows(),
                ..base
            })
        }
        ModelChoice::Bnc => bnc::fit(y, &resolve_hyperparams(y, 1, overrides)?, cfg)?,
        ModelChoice::Bmmb => bmmb::fit(y, &resolve_hyperparams(y, k, overrides)?, cfg)?,
    };
    Ok(ResultFile {
        hyperparams: Some(fit.hyperparams),
        predictions: fit.predictions().to_rows(),
        lambda: Some(fit.lambda.to_rows()),
        reliability: Some(fit.reliability.to_rows()),
        iterations: Some(fit.iterations),
        converged: Some(fit.converged),
        mixture: fit.mixture.map(|m| MixtureReport {
            weights: m.weights,
            tau: m.tau.to_rows(),
        }),
        elbo_trace: Some(fit.elbo_trace),
        ..base
    })
}

/// F1 always; KL only for mixture results with C ≤ 20; recovery only with profiles.
pub fn evaluate(
    truth: &LabelMatrix,
    result: &ResultFile,
    profiles: Option<&[AnnotatorProfile]>,
) -> Result<EvalReport> {
    let pred = result.predictions()?;
    let mut report = EvalReport::from_f1(f1_scores(truth, &pred)?);
    if let Some(mix) = result
        .mixture
        .as_ref()
        .filter(|_| truth.cols() <= MAX_SUBSET_LABELS)
    {
        let p = empirical_label_distribution(truth)?;
        let p_hat = mixture_label_distribution(&mix.weights, &Matrix::from_rows(&mix.tau)?)?;
        report.kl = Some(kl_labelsets(&p, &p_hat, DEFAULT_KL_FLOOR)?);
    }
    if let (Some(profiles), Some(rel)) = (profiles, result.reliability_matrix()?) {
        report.recovery = Some(annotator_type_recovery(profiles, &rel)?);
    }
    Ok(report)
}

pub fn simulate(
    truth: &LabelMatrix,
    cfg: &SimConfig,
) -> Result<(AnnotationSet, Vec<AnnotatorProfile>)> {
    cfg.validate(truth.rows())?;
    let profiles = sample_annotator_pool(cfg, truth.cols());
    let y = generate_annotations(truth, &profiles, cfg.per_annotator, cfg.seed)?;
    Ok((y, profiles))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentRow {
    pub component: usize,
    pub weight: f64,
    pub tau: Vec<f64>,
}

/// Mixture components sorted by decreasing weight.
pub fn report_components(result: &ResultFile) -> Result<Vec<ComponentRow>> {
    let mix = result.mixture.as_ref().ok_or_else(|| {
        Error::Invalid(format!("{} result has no mixture components", result.model))
    })?;
    let mut rows: Vec<ComponentRow> = mix
        .weights
        .iter()
        .zip(&mix.tau)
        .enumerate()
        .map(|(component, (&weight, tau))| ComponentRow {
            component,
            weight,
            tau: tau.clone(),
        })
        .collect();
    rows.sort_by(|a, b| {
        b.weight
            .total_cmp(&a.weight)
            .then(a.component.cmp(&b.component))
    });
    Ok(rows)
}

/// Where the ground truth comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum TruthSource {
    Labels(LabelMatrix),
    /// Random prototypes from [`PlantedMixture::random`], redrawn per run seed.
    Planted {
        instances: usize,
        labels: usize,
        components: usize,
    },
}

impl TruthSource {
    pub fn materialize(&self, seed: u64) -> Result<LabelMatrix> {
        match self {
            TruthSource::Labels(z) => Ok(z.clone()),
            &TruthSource::Planted {
                instances,
                labels,
                components,
            } => planted_truth(instances, labels, components, seed).map(|(z, _)| z),
        }
    }

    fn describe(&self) -> String {
        match self {
            TruthSource::Labels(z) => format!("labels N={} C={}", z.rows(), z.cols()),
            TruthSource::Planted {
                instances,
                labels,
                components,
            } => format!("planted N={instances} C={labels} K={components}"),
        }
    }
}

/// Planted mixture ground truth, deterministic in `seed`.
pub fn planted_truth(
    n: usize,
    c: usize,
    k: usize,
    seed: u64,
) -> Result<(LabelMatrix, PlantedMixture)> {
    if k == 0 {
        return Err(Error::Invalid(
            "planted mixture needs at least one component".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mix = PlantedMixture::random(k, c, &mut rng);
    let (z, _) = mix.sample(n, &mut rng)?;
    Ok((z, mix))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    Ratio(Vec<Ratio>),
    T(Vec<usize>),
    K(Vec<usize>),
    L(Vec<usize>),
}

impl SweepAxis {
    fn name(&self) -> &'static str {
        match self {
            SweepAxis::Ratio(_) => "R",
            SweepAxis::T(_) => "T",
            SweepAxis::K(_) => "K",
            SweepAxis::L(_) => "L",
        }
    }

    fn len(&self) -> usize {
        match self {
            SweepAxis::Ratio(v) => v.len(),
            SweepAxis::T(v) | SweepAxis::K(v) | SweepAxis::L(v) => v.len(),
        }
    }
}

/// Parameters of a single run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunPoint {
    pub ratio: Ratio,
    pub per_annotator: usize,
    pub num_annotators: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub truth: TruthSource,
    pub models: Vec<ModelChoice>,
    pub axis: SweepAxis,
    /// Values for the axes that are not swept.
    pub fixed: RunPoint,
    pub seeds: Vec<u64>,
    pub eta: f64,
    pub max_iter: usize,
    /// Mixture restarts; the label-independent model always runs once.
    pub restarts: usize,
    pub workers: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Invalid("sweep needs at least one seed".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Invalid("sweep needs at least one model".into()));
        }
        if self.axis.len() == 0 {
            return Err(Error::Invalid("sweep grid is empty".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<RunPoint> {
        let f = self.fixed;
        match &self.axis {
            SweepAxis::Ratio(v) => v.iter().map(|&ratio| RunPoint { ratio, ..f }).collect(),
            SweepAxis::T(v) => v
                .iter()
                .map(|&per_annotator| RunPoint { per_annotator, ..f })
                .collect(),
            SweepAxis::K(v) => v.iter().map(|&k| RunPoint { k, ..f }).collect(),
            SweepAxis::L(v) => v
                .iter()
                .map(|&num_annotators| RunPoint {
                    num_annotators,
                    ..f
                })
                .collect(),
        }
    }

    /// Comment lines written above the CSV columns.
    pub fn header_comment(&self) -> String {
        let f = self.fixed;
        let models: Vec<&str> = self.models.iter().map(|m| m.as_str()).collect();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        format!(
            "# truth: {}\n# swept axis: {}\n# fixed: R={} T={} L={} K={}\n# models: {}\n# base seeds: {} (run seed = base + grid index)\n# eta={} max_iter={} restarts={}\n",
            self.truth.describe(),
            self.axis.name(),
            f.ratio,
            f.per_annotator,
            f.num_annotators,
            f.k,
            models.join(","),
            seeds.join(","),
            self.eta,
            self.max_iter,
            self.restarts
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub model: ModelChoice,
    pub point: RunPoint,
    pub seed: u64,
    pub report: EvalReport,
}

pub const SWEEP_COLUMNS: &str = "model,R,T,L,K,seed,f1_micro,f1_macro,f1_example,kl,recovery";

impl SweepRow {
    pub fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.model,
            self.point.ratio,
            self.point.per_annotator,
            self.point.num_annotators,
            self.point.k,
            self.seed,
            self.report.f1_micro,
            self.report.f1_macro,
            self.report.f1_example,
            opt(self.report.kl),
            opt(self.report.recovery)
        )
    }
}

/// Simulates once and evaluates every requested model on the same annotations.
pub fn run_point(
    truth: &TruthSource,
    point: RunPoint,
    seed: u64,
    models: &[ModelChoice],
    fit_cfg: (f64, usize, usize),
) -> Result<Vec<SweepRow>> {
    let (eta, max_iter, restarts) = fit_cfg;
    let z = truth.materialize(seed)?;
    let sim = SimConfig {
        ratio: point.ratio,
        per_annotator: point.per_annotator,
        num_annotators: point.num_annotators,
        seed,
    };
    let (y, profiles) = simulate(&z, &sim)?;
    models
        .iter()
        .map(|&model| {
            let cfg = FitConfig {
                eta,
                max_iter,
                restarts: if model == ModelChoice::Bmmb {
                    restarts
                } else {
                    1
                },
                seed,
            };
            let result = fit_model(model, &y, point.k, &PriorOverrides::default(), &cfg)?;
            let report = evaluate(
                &z,
                &result,
                (model != ModelChoice::Mv).then_some(profiles.as_slice()),
            )?;
            Ok(SweepRow {
                model,
                point,
                seed,
                report,
            })
        })
        .collect()
}

/// Rows come back in grid order, then base-seed order, then model order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let tasks: Vec<(RunPoint, u64)> = spec
        .grid()
        .into_iter()
        .enumerate()
        .flat_map(|(idx, point)| {
            spec.seeds
                .iter()
                .map(move |&s| (point, s.wrapping_add(idx as u64)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers.max(1))
        .build()
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let fit_cfg = (spec.eta, spec.max_iter, spec.restarts);
    let chunks: Vec<Result<Vec<SweepRow>>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(point, seed)| run_point(&spec.truth, point, seed, &spec.models, fit_cfg))
            .collect()
    });
    let mut rows = Vec::new();
    for c in chunks {
        rows.extend(c?);
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(
    out: &mut W,
    spec: &SweepSpec,
    rows: &[SweepRow],
) -> std::io::Result<()> {
    out.write_all(spec.header_comment().as_bytes())?;
    writeln!(out, "{SWEEP_COLUMNS}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}
