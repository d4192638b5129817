//! Helpers shared by the integration tests: random instances, a brute-force
//! evidence oracle built on `statrs`, and conservation checks.
#![allow(dead_code)]

use crowdmix::sim::{PlantedMixture, Ratio, SimConfig};
use crowdmix::{
    experiments, Annotation, AnnotationSet, BmmbState, BncState, Hyperparams, LabelMatrix,
};
use rand::Rng;
use statrs::function::gamma::ln_gamma;

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// log p(Y | z) with every reliability integrated out.
fn log_annotation_marginal(y: &AnnotationSet, z: &[u8], hp: &Hyperparams) -> f64 {
    let c = y.num_labels();
    let mut agree = vec![0usize; y.num_annotators() * c];
    let mut total = vec![0usize; y.num_annotators() * c];
    for rec in y.records() {
        for j in 0..c {
            let cell = rec.annotator * c + j;
            total[cell] += 1;
            if rec.labels[j] == z[rec.instance * c + j] {
                agree[cell] += 1;
            }
        }
    }
    agree
        .iter()
        .zip(&total)
        .filter(|(_, &t)| t > 0)
        .map(|(&g, &t)| ln_beta(hp.a + g as f64, hp.b + (t - g) as f64) - ln_beta(hp.a, hp.b))
        .sum()
}

/// log p(z) with per-label Beta(α, β) prevalences integrated out.
fn log_label_marginal(z: &[u8], members: &[usize], c: usize, hp: &Hyperparams) -> f64 {
    (0..c)
        .map(|j| {
            let on = members.iter().filter(|&&i| z[i * c + j] == 1).count() as f64;
            let off = members.len() as f64 - on;
            ln_beta(hp.alpha + on, hp.beta + off) - ln_beta(hp.alpha, hp.beta)
        })
        .sum()
}

fn all_assignments(len: usize, base: usize) -> Vec<Vec<usize>> {
    let count = base.pow(len as u32);
    (0..count)
        .map(|mut code| {
            (0..len)
                .map(|_| {
                    let d = code % base;
                    code /= base;
                    d
                })
                .collect()
        })
        .collect()
}

/// Exact log evidence of the label-independent model by enumerating z.
pub fn log_evidence_bnc(y: &AnnotationSet, hp: &Hyperparams) -> f64 {
    let (n, c) = (y.num_instances(), y.num_labels());
    let everyone: Vec<usize> = (0..n).collect();
    let terms: Vec<f64> = all_assignments(n * c, 2)
        .into_iter()
        .map(|z| {
            let z: Vec<u8> = z.into_iter().map(|v| v as u8).collect();
            log_annotation_marginal(y, &z, hp) + log_label_marginal(&z, &everyone, c, hp)
        })
        .collect();
    log_sum_exp(&terms)
}

/// Exact log evidence of the mixture model by enumerating (z, x).
pub fn log_evidence_bmmb(y: &AnnotationSet, hp: &Hyperparams) -> f64 {
    let (n, c, k) = (y.num_instances(), y.num_labels(), hp.k);
    let kg = k as f64 * hp.gamma;
    let xs = all_assignments(n, k);
    let mut terms = Vec::new();
    for z in all_assignments(n * c, 2) {
        let z: Vec<u8> = z.into_iter().map(|v| v as u8).collect();
        let ann = log_annotation_marginal(y, &z, hp);
        for x in &xs {
            let mut lp = ln_gamma(kg) - ln_gamma(kg + n as f64);
            for comp in 0..k {
                let members: Vec<usize> = (0..n).filter(|&i| x[i] == comp).collect();
                lp += ln_gamma(hp.gamma + members.len() as f64) - ln_gamma(hp.gamma);
                lp += log_label_marginal(&z, &members, c, hp);
            }
            terms.push(ann + lp);
        }
    }
    log_sum_exp(&terms)
}

/// Annotations per (annotator, label) cell, i.e. |N(l)| broadcast over labels.
fn annotator_counts(y: &AnnotationSet) -> Vec<f64> {
    (0..y.num_annotators())
        .map(|l| y.by_annotator(l).count() as f64)
        .collect()
}

fn reliability_violation(
    g: &crowdmix::Matrix,
    h: &crowdmix::Matrix,
    y: &AnnotationSet,
    hp: &Hyperparams,
) -> f64 {
    let counts = annotator_counts(y);
    let mut worst = 0.0f64;
    for l in 0..g.rows() {
        for j in 0..g.cols() {
            worst = worst.max(((g[(l, j)] - hp.a) + (h[(l, j)] - hp.b) - counts[l]).abs());
        }
    }
    worst
}

/// Largest absolute violation of the pseudo-count conservation laws.
pub fn conservation_violation_bnc(s: &BncState, y: &AnnotationSet, hp: &Hyperparams) -> f64 {
    let n = y.num_instances() as f64;
    let label =
        s.e.iter()
            .zip(&s.f)
            .map(|(e, f)| ((e - hp.alpha) + (f - hp.beta) - n).abs())
            .fold(0.0, f64::max);
    label.max(reliability_violation(&s.g, &s.h, y, hp))
}

pub fn conservation_violation_bmmb(s: &BmmbState, y: &AnnotationSet, hp: &Hyperparams) -> f64 {
    let n = y.num_instances() as f64;
    let mixing = (s.m.iter().map(|m| m - hp.gamma).sum::<f64>() - n).abs();
    let mut comp = 0.0f64;
    for k in 0..s.e.rows() {
        let mass: f64 = (0..s.r.rows()).map(|i| s.r[(i, k)]).sum();
        for j in 0..s.e.cols() {
            comp = comp.max(((s.e[(k, j)] - hp.alpha) + (s.f[(k, j)] - hp.beta) - mass).abs());
        }
    }
    mixing
        .max(comp)
        .max(reliability_violation(&s.g, &s.h, y, hp))
}

/// Largest drop between consecutive ELBO values, relative to |previous|.
pub fn worst_relative_drop(trace: &[f64]) -> f64 {
    trace
        .windows(2)
        .map(|w| (w[0] - w[1]) / w[0].abs())
        .fold(0.0, f64::max)
}

/// Every annotator labels a random subset of instances with random labels.
pub fn random_annotations<R: Rng>(
    rng: &mut R,
    n: usize,
    c: usize,
    l: usize,
    density: f64,
) -> AnnotationSet {
    let mut records = Vec::new();
    for annotator in 0..l {
        for instance in 0..n {
            if rng.gen_bool(density) {
                let labels = (0..c).map(|_| rng.gen_range(0..2u8)).collect();
                records.push(Annotation {
                    annotator,
                    instance,
                    labels,
                });
            }
        }
    }
    AnnotationSet::new(n, c, l, records).unwrap()
}

/// Either the density-based defaults or a random positive prior.
pub fn random_hyperparams<R: Rng>(rng: &mut R, y: &AnnotationSet, k: usize) -> Hyperparams {
    if rng.gen_bool(0.5) {
        return Hyperparams::for_annotations(y, k).unwrap();
    }
    let mut hp = Hyperparams::new(rng.gen_range(0.5..10.0), rng.gen_range(0.5..5.0), k).unwrap();
    hp.alpha = rng.gen_range(0.05..3.0);
    hp.beta = rng.gen_range(0.05..3.0);
    hp.gamma = rng.gen_range(0.05..2.0);
    hp
}

/// Simulated annotations over planted-mixture truth with random sizes.
pub fn random_simulated<R: Rng>(
    rng: &mut R,
    max_n: usize,
    max_c: usize,
    max_l: usize,
) -> (LabelMatrix, AnnotationSet) {
    let n = rng.gen_range(1..=max_n);
    let c = rng.gen_range(1..=max_c);
    let l = rng.gen_range(1..=max_l);
    let mix = PlantedMixture::random(rng.gen_range(1..=4), c, rng);
    let (z, _) = mix.sample(n, rng).unwrap();
    let mut ratio = [0u32; 3];
    while ratio.iter().sum::<u32>() == 0 {
        ratio = [
            rng.gen_range(0..5),
            rng.gen_range(0..5),
            rng.gen_range(0..5),
        ];
    }
    let cfg = SimConfig {
        ratio: Ratio(ratio),
        per_annotator: rng.gen_range(1..=n.min(30)),
        num_annotators: l,
        seed: rng.gen(),
    };
    let (y, _) = experiments::simulate(&z, &cfg).unwrap();
    (z, y)
}

pub fn label_names(c: usize) -> Vec<String> {
    (0..c).map(|j| format!("label{j}")).collect()
}

/// ARFF header with `features` numeric columns followed by the labels,
/// declared as nominal {0,1} or numeric at random.
fn arff_header<R: Rng>(rng: &mut R, features: usize, names: &[String]) -> String {
    let mut s = String::from("% generated\n@relation 'random set'\n\n");
    for f in 0..features {
        s.push_str(&format!("@attribute feat{f} numeric\n"));
    }
    for name in names {
        if rng.gen_bool(0.5) {
            s.push_str(&format!("@ATTRIBUTE {name} {{0,1}}\n"));
        } else {
            s.push_str(&format!("@attribute {name} numeric\n"));
        }
    }
    s.push_str("\n@data\n");
    s
}

/// The same table written in dense and in sparse ARFF form.
pub fn arff_pair<R: Rng>(rng: &mut R, z: &LabelMatrix, features: usize) -> (String, String) {
    let names = label_names(z.cols());
    let header = arff_header(rng, features, &names);
    let (mut dense, mut sparse) = (header.clone(), header);
    for i in 0..z.rows() {
        let feats: Vec<f64> = (0..features)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    0.0
                } else {
                    rng.gen_range(-5.0..5.0)
                }
            })
            .collect();
        let mut cells: Vec<String> = feats.iter().map(|v| v.to_string()).collect();
        cells.extend(z.row(i).iter().map(|v| v.to_string()));
        dense.push_str(&cells.join(","));
        dense.push('\n');

        let mut entries = Vec::new();
        for (col, v) in feats.iter().enumerate() {
            if *v != 0.0 {
                entries.push(format!("{col} {v}"));
            }
        }
        for (j, &v) in z.row(i).iter().enumerate() {
            if v == 1 {
                entries.push(format!("{} 1", features + j));
            }
        }
        sparse.push('{');
        sparse.push_str(&entries.join(","));
        sparse.push_str("}\n");
    }
    (dense, sparse)
}

pub fn random_label_matrix<R: Rng>(rng: &mut R, n: usize, c: usize) -> LabelMatrix {
    let rows: Vec<Vec<u8>> = (0..n)
        .map(|_| (0..c).map(|_| rng.gen_range(0..2u8)).collect())
        .collect();
    LabelMatrix::from_rows_with_cols(&rows, c).unwrap()
}
