//! Heterogeneous annotator pools and noisy annotations drawn from a known
//! ground truth, plus planted-mixture ground truth.
//!
//! Each annotator draws from its own ChaCha stream (stream id = annotator id),
//! so growing the pool leaves earlier annotators' draws untouched.

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Annotation, AnnotationSet, LabelMatrix, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotatorKind {
    Reliable,
    Normal,
    Random,
}

impl AnnotatorKind {
    pub const ALL: [AnnotatorKind; 3] = [
        AnnotatorKind::Reliable,
        AnnotatorKind::Normal,
        AnnotatorKind::Random,
    ];

    /// Half-open reliability interval; `None` for random annotators (Ψ = 0.5).
    pub fn interval(self) -> Option<(f64, f64)> {
        match self {
            AnnotatorKind::Reliable => Some((0.85, 0.99)),
            AnnotatorKind::Normal => Some((0.66, 0.85)),
            AnnotatorKind::Random => None,
        }
    }

    /// Midpoint of the kind's reliability range.
    pub fn center(self) -> f64 {
        match self.interval() {
            Some((lo, hi)) => 0.5 * (lo + hi),
            None => 0.5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AnnotatorKind::Reliable => "reliable",
            AnnotatorKind::Normal => "normal",
            AnnotatorKind::Random => "random",
        }
    }
}

impl FromStr for AnnotatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reliable" => Ok(AnnotatorKind::Reliable),
            "normal" => Ok(AnnotatorKind::Normal),
            "random" => Ok(AnnotatorKind::Random),
            other => Err(Error::Invalid(format!("unknown annotator kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    pub annotator: usize,
    pub kind: AnnotatorKind,
    /// Per-label probability of agreeing with the truth.
    pub psi: Vec<f64>,
}

/// Reliable : normal : random proportions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ratio(pub [u32; 3]);

impl Ratio {
    pub fn new(reliable: u32, normal: u32, random: u32) -> Result<Self> {
        if reliable + normal + random == 0 {
            return Err(Error::Invalid(
                "heterogeneity ratio cannot be all zero".into(),
            ));
        }
        Ok(Self([reliable, normal, random]))
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.0[0], self.0[1], self.0[2])
    }
}

impl FromStr for Ratio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Invalid(format!(
                "ratio '{s}' must have three terms a:b:c"
            )));
        }
        let mut v = [0u32; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .trim()
                .parse()
                .map_err(|_| Error::Invalid(format!("ratio '{s}' has a non-integer term '{p}'")))?;
        }
        Ratio::new(v[0], v[1], v[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub ratio: Ratio,
    /// T: instances labeled by each annotator.
    pub per_annotator: usize,
    /// L
    pub num_annotators: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self, num_instances: usize) -> Result<()> {
        Ratio::new(self.ratio.0[0], self.ratio.0[1], self.ratio.0[2])?;
        if self.per_annotator == 0 || self.per_annotator > num_instances {
            return Err(Error::Invalid(format!(
                "T = {} must lie in [1, N = {num_instances}]",
                self.per_annotator
            )));
        }
        Ok(())
    }
}

/// Largest-remainder split of `total` annotators by `ratio`. Ties in the
/// fractional parts go to the earlier kind.
pub fn apportion(ratio: Ratio, total: usize) -> [usize; 3] {
    let sum: u64 = ratio.0.iter().map(|&v| v as u64).sum();
    let mut counts = [0usize; 3];
    let mut rems = [0u64; 3];
    for k in 0..3 {
        let num = ratio.0[k] as u64 * total as u64;
        counts[k] = (num / sum) as usize;
        rems[k] = num % sum;
    }
    let mut left = total - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&x, &y| rems[y].cmp(&rems[x]).then(x.cmp(&y)));
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    counts
}

// Distinct purposes get distinct keys so the pool and the annotations do not
// share random streams.
const POOL_KEY: u64 = 0x5eed_0001;
const ANNOTATION_KEY: u64 = 0x5eed_0002;

fn annotator_rng(seed: u64, purpose: u64, annotator: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.rotate_left(32));
    rng.set_stream(annotator as u64);
    rng
}

/// Kinds are assigned in contiguous blocks: reliable, then normal, then random.
pub fn sample_annotator_pool(cfg: &SimConfig, num_labels: usize) -> Vec<AnnotatorProfile> {
    let counts = apportion(cfg.ratio, cfg.num_annotators);
    let kinds = AnnotatorKind::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&kind, n)| std::iter::repeat_n(kind, n));
    kinds
        .enumerate()
        .map(|(l, kind)| {
            let mut rng = annotator_rng(cfg.seed, POOL_KEY, l);
            let psi = match kind.interval() {
                Some((lo, hi)) => (0..num_labels).map(|_| rng.gen_range(lo..hi)).collect(),
                None => vec![0.5; num_labels],
            };
            AnnotatorProfile {
                annotator: l,
                kind,
                psi,
            }
        })
        .collect()
}

/// Each annotator labels a uniform size-T subset of instances; each bit agrees
/// with the truth with probability ψⱼ.
pub fn generate_annotations(
    truth: &LabelMatrix,
    profiles: &[AnnotatorProfile],
    per_annotator: usize,
    seed: u64,
) -> Result<AnnotationSet> {
    let (n, c) = (truth.rows(), truth.cols());
    if per_annotator > n {
        return Err(Error::Invalid(format!(
            "T = {per_annotator} exceeds N = {n}"
        )));
    }
    for p in profiles {
        if p.psi.len() != c {
            return Err(Error::Dimension(format!(
                "annotator {} has {} reliabilities for {c} labels",
                p.annotator,
                p.psi.len()
            )));
        }
        if p.psi.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Invalid(format!(
                "annotator {} has reliability outside [0, 1]",
                p.annotator
            )));
        }
    }
    let records: Vec<Annotation> = profiles
        .par_iter()
        .flat_map_iter(|p| {
            let mut rng = annotator_rng(seed, ANNOTATION_KEY, p.annotator);
            let mut chosen = sample(&mut rng, n, per_annotator).into_vec();
            chosen.sort_unstable();
            chosen
                .into_iter()
                .map(|i| {
                    let labels = (0..c)
                        .map(|j| {
                            let agree = rng.gen_bool(p.psi[j]);
                            if agree {
                                truth.get(i, j)
                            } else {
                                1 - truth.get(i, j)
                            }
                        })
                        .collect();
                    Annotation {
                        annotator: p.annotator,
                        instance: i,
                        labels,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let num_annotators = profiles.iter().map(|p| p.annotator + 1).max().unwrap_or(0);
    AnnotationSet::new(n, c, num_annotators, records)
}

/// Mixture weights and K×C component label probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedMixture {
    pub weights: Vec<f64>,
    pub tau: Matrix,
}

impl PlantedMixture {
    /// Random prototypes: each label is "on" in a component with probability
    /// 0.4, drawn from U(0.8, 0.95) when on and U(0.03, 0.15) when off.
    /// Weights are proportional to U(0.5, 1.5).
    pub fn random<R: Rng + ?Sized>(k: usize, c: usize, rng: &mut R) -> Self {
        let mut tau = Matrix::zeros(k, c);
        for kk in 0..k {
            for j in 0..c {
                tau[(kk, j)] = if rng.gen_bool(0.4) {
                    rng.gen_range(0.8..0.95)
                } else {
                    rng.gen_range(0.03..0.15)
                };
            }
        }
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..1.5)).collect();
        let total: f64 = raw.iter().sum();
        Self {
            weights: raw.iter().map(|w| w / total).collect(),
            tau,
        }
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<(LabelMatrix, Vec<usize>)> {
        plant_mixture_ground_truth(n, self.tau.cols(), &self.weights, &self.tau, rng)
    }
}

/// Draws xᵢ ~ Discrete(π) and then zᵢⱼ ~ Bernoulli(τ[xᵢ, j]).
pub fn plant_mixture_ground_truth<R: Rng + ?Sized>(
    n: usize,
    c: usize,
    pi: &[f64],
    tau: &Matrix,
    rng: &mut R,
) -> Result<(LabelMatrix, Vec<usize>)> {
    if tau.rows() != pi.len() || tau.cols() != c {
        return Err(Error::Dimension(format!(
            "tau is {}x{}, expected {}x{c}",
            tau.rows(),
            tau.cols(),
            pi.len()
        )));
    }
    if pi.iter().any(|p| p.is_nan() || *p < 0.0) || (pi.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(
            "mixture weights must be a probability vector".into(),
        ));
    }
    if tau.as_slice().iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::Invalid(
            "component probabilities must lie in [0, 1]".into(),
        ));
    }
    let pick = WeightedIndex::new(pi).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut z = LabelMatrix::zeros(n, c);
    let mut assign = Vec::with_capacity(n);
    for i in 0..n {
        let k = pick.sample(rng);
        for j in 0..c {
            z.set(i, j, rng.gen_bool(tau[(k, j)]));
        }
        assign.push(k);
    }
    Ok((z, assign))
}
