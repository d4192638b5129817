//! Label-independent model: every label is its own binary aggregation task
//! with a Beta prior on its prevalence τⱼ.
//!
//! One sweep runs λ → (g, h) → (e, f) and then evaluates the ELBO.

use crate::data::{AnnotationSet, BncState, FitConfig, FitResult, Hyperparams, Matrix, ModelKind};
use crate::error::Result;
use crate::math::beta_expect_log_unchecked;
use crate::variational::{
    annotator_evidence, beta_expectations, beta_means, lambda_entropy, neg_kl_beta,
    reliability_elbo_terms, run_until_converged, smoothed_vote_lambda, update_reliability,
};

/// Smoothed vote frequencies for λ, then one pass of the (g, h) and (e, f) updates.
pub fn init(y: &AnnotationSet, hp: &Hyperparams) -> BncState {
    let (l, c) = (y.num_annotators(), y.num_labels());
    let mut state = BncState {
        g: Matrix::filled(l, c, hp.a),
        h: Matrix::filled(l, c, hp.b),
        lambda: smoothed_vote_lambda(y),
        e: vec![hp.alpha; c],
        f: vec![hp.beta; c],
    };
    update_gh(&mut state, y, hp);
    update_ef(&mut state, hp);
    state
}

pub fn update_gh(state: &mut BncState, y: &AnnotationSet, hp: &Hyperparams) {
    update_reliability(y, &state.lambda, hp, &mut state.g, &mut state.h);
}

pub fn update_lambda(state: &mut BncState, y: &AnnotationSet, _hp: &Hyperparams) {
    let (el, el1m) = beta_expectations(&state.g, &state.h);
    let (pos, neg) = annotator_evidence(y, &el, &el1m);
    let prior: Vec<(f64, f64)> = state
        .e
        .iter()
        .zip(&state.f)
        .map(|(&e, &f)| beta_expect_log_unchecked(e, f))
        .collect();
    for i in 0..y.num_instances() {
        let row = state.lambda.row_mut(i);
        for (j, &(tau, tau1m)) in prior.iter().enumerate() {
            row[j] = crate::math::two_way(tau + pos[(i, j)], tau1m + neg[(i, j)]);
        }
    }
}

pub fn update_ef(state: &mut BncState, hp: &Hyperparams) {
    state.e.fill(hp.alpha);
    state.f.fill(hp.beta);
    for i in 0..state.lambda.rows() {
        for (j, &lam) in state.lambda.row(i).iter().enumerate() {
            state.e[j] += lam;
            state.f[j] += 1.0 - lam;
        }
    }
}

pub fn elbo(state: &BncState, y: &AnnotationSet, hp: &Hyperparams) -> f64 {
    let mut total = reliability_elbo_terms(y, &state.lambda, &state.g, &state.h, hp);
    for (j, (&e, &f)) in state.e.iter().zip(&state.f).enumerate() {
        let (tau, tau1m) = beta_expect_log_unchecked(e, f);
        total += neg_kl_beta(e, f, hp.alpha, hp.beta, tau, tau1m);
        for i in 0..state.lambda.rows() {
            let lam = state.lambda[(i, j)];
            total += lam * tau + (1.0 - lam) * tau1m;
        }
    }
    total + lambda_entropy(&state.lambda)
}

/// One coordinate-ascent pass; returns the ELBO afterwards.
pub fn sweep(state: &mut BncState, y: &AnnotationSet, hp: &Hyperparams) -> f64 {
    update_lambda(state, y, hp);
    update_gh(state, y, hp);
    update_ef(state, hp);
    elbo(state, y, hp)
}

pub fn fit(y: &AnnotationSet, hp: &Hyperparams, cfg: &FitConfig) -> Result<FitResult> {
    fit_observed(y, hp, cfg, |_, _, _| {})
}

/// [`fit`] with a callback invoked after every sweep as `(state, iteration, elbo)`.
pub fn fit_observed(
    y: &AnnotationSet,
    hp: &Hyperparams,
    cfg: &FitConfig,
    mut observe: impl FnMut(&BncState, usize, f64),
) -> Result<FitResult> {
    hp.validate()?;
    cfg.validate()?;
    let mut best: Option<(BncState, Vec<f64>, bool)> = None;
    let mut restart_elbos = Vec::with_capacity(cfg.restarts);
    // Initialization is deterministic, so extra restarts reproduce the first.
    for _ in 0..cfg.restarts {
        let mut state = init(y, hp);
        let (trace, converged) = run_until_converged(
            &mut state,
            cfg.eta,
            cfg.max_iter,
            |s| sweep(s, y, hp),
            &mut observe,
        );
        let last = *trace.last().expect("max_iter >= 1");
        restart_elbos.push(last);
        if best
            .as_ref()
            .is_none_or(|(_, t, _)| last > *t.last().unwrap())
        {
            best = Some((state, trace, converged));
        }
    }
    let (state, trace, converged) = best.expect("restarts >= 1");
    Ok(FitResult {
        model: ModelKind::Bnc,
        hyperparams: *hp,
        reliability: beta_means(&state.g, &state.h),
        lambda: state.lambda,
        iterations: trace.len(),
        elbo_trace: trace,
        converged,
        restart_elbos,
        mixture: None,
    })
}
