//! Pieces shared by both models: the reliability block (g, h), the
//! annotator-evidence part of the λ update, and the ELBO terms that do not
//! depend on how the label prior is structured.

use crate::data::{AnnotationSet, Hyperparams, Matrix};
use crate::math::{beta_expect_log_unchecked, log_beta};

// Floor applied inside x·ln x terms only.
pub(crate) const ENTROPY_FLOOR: f64 = 1e-12;

/// λᵢⱼ = (positive votes + 0.5) / (votes + 1).
pub(crate) fn smoothed_vote_lambda(y: &AnnotationSet) -> Matrix {
    let (n, c) = (y.num_instances(), y.num_labels());
    let mut pos = Matrix::zeros(n, c);
    let mut total = vec![0.0; n];
    for r in y.records() {
        total[r.instance] += 1.0;
        for (j, &b) in r.labels.iter().enumerate() {
            pos[(r.instance, j)] += b as f64;
        }
    }
    for (i, t) in total.iter().enumerate() {
        for v in pos.row_mut(i) {
            *v = (*v + 0.5) / (t + 1.0);
        }
    }
    pos
}

/// Reliability update: g counts expected agreements, h expected disagreements.
pub(crate) fn update_reliability(
    y: &AnnotationSet,
    lambda: &Matrix,
    hp: &Hyperparams,
    g: &mut Matrix,
    h: &mut Matrix,
) {
    let c = y.num_labels();
    for l in 0..y.num_annotators() {
        let (grow, hrow) = (g.row_mut(l), h.row_mut(l));
        grow.fill(hp.a);
        hrow.fill(hp.b);
        for r in y.by_annotator(l) {
            let lam = lambda.row(r.instance);
            for j in 0..c {
                let agree = if r.labels[j] == 1 {
                    lam[j]
                } else {
                    1.0 - lam[j]
                };
                grow[j] += agree;
                hrow[j] += 1.0 - agree;
            }
        }
    }
}

/// Elementwise (E[ln θ], E[ln(1 − θ)]) for θ ~ Beta(g, h).
pub(crate) fn beta_expectations(g: &Matrix, h: &Matrix) -> (Matrix, Matrix) {
    let mut el = Matrix::zeros(g.rows(), g.cols());
    let mut el1m = Matrix::zeros(g.rows(), g.cols());
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let (p, q) = beta_expect_log_unchecked(g[(i, j)], h[(i, j)]);
            el[(i, j)] = p;
            el1m[(i, j)] = q;
        }
    }
    (el, el1m)
}

/// Per-(i, j) annotator evidence for z = 1 and z = 0 respectively.
pub(crate) fn annotator_evidence(
    y: &AnnotationSet,
    el: &Matrix,
    el1m: &Matrix,
) -> (Matrix, Matrix) {
    let (n, c) = (y.num_instances(), y.num_labels());
    let mut pos = Matrix::zeros(n, c);
    let mut neg = Matrix::zeros(n, c);
    for r in y.records() {
        let (a, b) = (el.row(r.annotator), el1m.row(r.annotator));
        for j in 0..c {
            let (on_one, on_zero) = if r.labels[j] == 1 {
                (a[j], b[j])
            } else {
                (b[j], a[j])
            };
            pos[(r.instance, j)] += on_one;
            neg[(r.instance, j)] += on_zero;
        }
    }
    (pos, neg)
}

/// −KL(Beta(g, h) ‖ Beta(a, b)) given the expectations under Beta(g, h).
#[inline]
pub(crate) fn neg_kl_beta(g: f64, h: f64, a: f64, b: f64, el: f64, el1m: f64) -> f64 {
    log_beta(g, h) - log_beta(a, b) + (a - g) * el + (b - h) * el1m
}

/// Expected annotation log-likelihood plus −KL of the reliability posteriors.
pub(crate) fn reliability_elbo_terms(
    y: &AnnotationSet,
    lambda: &Matrix,
    g: &Matrix,
    h: &Matrix,
    hp: &Hyperparams,
) -> f64 {
    let (el, el1m) = beta_expectations(g, h);
    let c = y.num_labels();
    let mut total = 0.0;
    for r in y.records() {
        let lam = lambda.row(r.instance);
        let (a, b) = (el.row(r.annotator), el1m.row(r.annotator));
        for j in 0..c {
            let (when_one, when_zero) = if r.labels[j] == 1 {
                (a[j], b[j])
            } else {
                (b[j], a[j])
            };
            total += lam[j] * when_one + (1.0 - lam[j]) * when_zero;
        }
    }
    for l in 0..g.rows() {
        for j in 0..c {
            total += neg_kl_beta(g[(l, j)], h[(l, j)], hp.a, hp.b, el[(l, j)], el1m[(l, j)]);
        }
    }
    total
}

#[inline]
pub(crate) fn xlogx(x: f64) -> f64 {
    x * x.max(ENTROPY_FLOOR).ln()
}

/// Σ of Bernoulli entropies of q(z).
pub(crate) fn lambda_entropy(lambda: &Matrix) -> f64 {
    -lambda
        .as_slice()
        .iter()
        .map(|&v| xlogx(v) + xlogx(1.0 - v))
        .sum::<f64>()
}

/// Relative ELBO improvement, with |previous| in the denominator.
pub(crate) fn relative_improvement(prev: f64, cur: f64) -> f64 {
    (cur - prev) / prev.abs().max(f64::MIN_POSITIVE)
}

/// Posterior means g / (g + h).
pub(crate) fn beta_means(g: &Matrix, h: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(g.rows(), g.cols());
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            out[(i, j)] = g[(i, j)] / (g[(i, j)] + h[(i, j)]);
        }
    }
    out
}

/// Runs one restart of a coordinate-ascent loop. `sweep` performs one full
/// pass and returns the ELBO afterwards.
pub(crate) fn run_until_converged<S>(
    state: &mut S,
    eta: f64,
    max_iter: usize,
    mut sweep: impl FnMut(&mut S) -> f64,
    mut observe: impl FnMut(&S, usize, f64),
) -> (Vec<f64>, bool) {
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    for it in 0..max_iter {
        let elbo = sweep(state);
        observe(state, it, elbo);
        let stop = trace
            .last()
            .is_some_and(|&prev| relative_improvement(prev, elbo) < eta);
        trace.push(elbo);
        if stop {
            converged = true;
            break;
        }
    }
    (trace, converged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Annotation;

    #[test]
    fn smoothed_lambda_examples() {
        let recs = vec![
            Annotation {
                annotator: 0,
                instance: 0,
                labels: vec![1, 1],
            },
            Annotation {
                annotator: 1,
                instance: 0,
                labels: vec![1, 1],
            },
            Annotation {
                annotator: 2,
                instance: 0,
                labels: vec![0, 1],
            },
        ];
        let y = AnnotationSet::new(2, 2, 3, recs).unwrap();
        let lam = smoothed_vote_lambda(&y);
        assert_eq!(lam[(0, 0)], 0.625);
        assert_eq!(lam[(0, 1)], 0.875);
        assert_eq!(lam.row(1), &[0.5, 0.5]);
    }

    #[test]
    fn neg_kl_is_zero_at_prior() {
        let (el, el1m) = beta_expect_log_unchecked(3.0, 2.0);
        assert!(neg_kl_beta(3.0, 2.0, 3.0, 2.0, el, el1m).abs() < 1e-14);
        let (el, el1m) = beta_expect_log_unchecked(7.0, 2.0);
        assert!(neg_kl_beta(7.0, 2.0, 3.0, 2.0, el, el1m) < 0.0);
    }
}
