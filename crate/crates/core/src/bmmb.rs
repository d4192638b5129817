//! Mixture-of-Bernoulli model: true label vectors come from a K-component
//! mixture of independent Bernoullis, which lets the posterior of one label
//! borrow strength from the others.
//!
//! One sweep runs λ → r → (g, h) → (e, f) → m and then evaluates the ELBO.
//! Every block update is the closed-form maximizer of the ELBO with the
//! other blocks held fixed, so the trace is non-decreasing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{
    check_subset_capacity, AnnotationSet, BmmbState, FitConfig, FitResult, Hyperparams,
    LabelSetDistribution, Matrix, MixtureSummary, ModelKind,
};
use crate::error::{Error, Result};
use crate::math::{
    dirichlet_expect_log_unchecked, log_gamma_unchecked, normalize_in_place, two_way,
};
use crate::variational::{
    annotator_evidence, beta_expectations, beta_means, lambda_entropy, neg_kl_beta,
    reliability_elbo_terms, run_until_converged, smoothed_vote_lambda, update_reliability, xlogx,
};

/// λ from smoothed vote frequencies and a uniformly random hard assignment of
/// every instance to one component, followed by one pass of the (g, h),
/// (e, f) and m updates.
///
/// Near-uniform responsibilities sit next to the symmetric saddle where all
/// components coincide; the relative-ELBO stop then fires before they
/// separate. A random partition starts the components apart.
pub fn init<R: Rng + ?Sized>(y: &AnnotationSet, hp: &Hyperparams, rng: &mut R) -> BmmbState {
    let (n, c, l, k) = (y.num_instances(), y.num_labels(), y.num_annotators(), hp.k);
    let mut r = Matrix::zeros(n, k);
    for i in 0..n {
        r[(i, rng.gen_range(0..k))] = 1.0;
    }
    let mut state = BmmbState {
        g: Matrix::filled(l, c, hp.a),
        h: Matrix::filled(l, c, hp.b),
        lambda: smoothed_vote_lambda(y),
        e: Matrix::filled(k, c, hp.alpha),
        f: Matrix::filled(k, c, hp.beta),
        r,
        m: vec![hp.gamma; k],
    };
    update_gh(&mut state, y, hp);
    update_ef(&mut state, hp);
    update_m(&mut state, hp);
    state
}

pub fn update_gh(state: &mut BmmbState, y: &AnnotationSet, hp: &Hyperparams) {
    update_reliability(y, &state.lambda, hp, &mut state.g, &mut state.h);
}

pub fn update_lambda(state: &mut BmmbState, y: &AnnotationSet, _hp: &Hyperparams) {
    let (el, el1m) = beta_expectations(&state.g, &state.h);
    let (pos, neg) = annotator_evidence(y, &el, &el1m);
    let (tau, tau1m) = beta_expectations(&state.e, &state.f);
    let (k, c) = (state.e.rows(), state.e.cols());
    let mut prior_pos = vec![0.0; c];
    let mut prior_neg = vec![0.0; c];
    for i in 0..state.lambda.rows() {
        prior_pos.fill(0.0);
        prior_neg.fill(0.0);
        let ri = state.r.row(i);
        for (kk, &w) in ri.iter().enumerate().take(k) {
            for j in 0..c {
                prior_pos[j] += w * tau[(kk, j)];
                prior_neg[j] += w * tau1m[(kk, j)];
            }
        }
        let row = state.lambda.row_mut(i);
        for j in 0..c {
            row[j] = two_way(prior_pos[j] + pos[(i, j)], prior_neg[j] + neg[(i, j)]);
        }
    }
}

pub fn update_ef(state: &mut BmmbState, hp: &Hyperparams) {
    let (k, c) = (state.e.rows(), state.e.cols());
    let mut e = Matrix::filled(k, c, hp.alpha);
    let mut f = Matrix::filled(k, c, hp.beta);
    for i in 0..state.lambda.rows() {
        let lam = state.lambda.row(i);
        for (kk, &w) in state.r.row(i).iter().enumerate() {
            let (erow, frow) = (e.row_mut(kk), f.row_mut(kk));
            for j in 0..c {
                erow[j] += w * lam[j];
                frow[j] += w * (1.0 - lam[j]);
            }
        }
    }
    state.e = e;
    state.f = f;
}

pub fn update_r(state: &mut BmmbState, _hp: &Hyperparams) {
    let (tau, tau1m) = beta_expectations(&state.e, &state.f);
    let log_pi = dirichlet_expect_log_unchecked(&state.m);
    let (k, c) = (state.e.rows(), state.e.cols());
    for i in 0..state.r.rows() {
        let lam = state.lambda.row(i);
        let row = state.r.row_mut(i);
        for kk in 0..k {
            let mut s = log_pi[kk];
            for j in 0..c {
                s += lam[j] * tau[(kk, j)] + (1.0 - lam[j]) * tau1m[(kk, j)];
            }
            row[kk] = s;
        }
        normalize_in_place(row).expect("finite log-responsibilities");
    }
}

pub fn update_m(state: &mut BmmbState, hp: &Hyperparams) {
    state.m.fill(hp.gamma);
    for i in 0..state.r.rows() {
        for (m, &w) in state.m.iter_mut().zip(state.r.row(i)) {
            *m += w;
        }
    }
}

pub fn elbo(state: &BmmbState, y: &AnnotationSet, hp: &Hyperparams) -> f64 {
    let (k, c) = (state.e.rows(), state.e.cols());
    let mut total = reliability_elbo_terms(y, &state.lambda, &state.g, &state.h, hp);

    let (tau, tau1m) = beta_expectations(&state.e, &state.f);
    for kk in 0..k {
        for j in 0..c {
            total += neg_kl_beta(
                state.e[(kk, j)],
                state.f[(kk, j)],
                hp.alpha,
                hp.beta,
                tau[(kk, j)],
                tau1m[(kk, j)],
            );
        }
    }

    let log_pi = dirichlet_expect_log_unchecked(&state.m);
    for i in 0..state.lambda.rows() {
        let lam = state.lambda.row(i);
        for (kk, &w) in state.r.row(i).iter().enumerate() {
            let mut fit = 0.0;
            for j in 0..c {
                fit += lam[j] * tau[(kk, j)] + (1.0 - lam[j]) * tau1m[(kk, j)];
            }
            total += w * (fit + log_pi[kk]) - xlogx(w);
        }
    }
    total += lambda_entropy(&state.lambda);

    // −KL(Dirichlet(m) ‖ Dirichlet(γ))
    let msum: f64 = state.m.iter().sum();
    total += log_gamma_unchecked(k as f64 * hp.gamma)
        - k as f64 * log_gamma_unchecked(hp.gamma)
        - log_gamma_unchecked(msum);
    for (kk, &m) in state.m.iter().enumerate() {
        total += log_gamma_unchecked(m) + (hp.gamma - m) * log_pi[kk];
    }
    total
}

/// One coordinate-ascent pass; returns the ELBO afterwards.
pub fn sweep(state: &mut BmmbState, y: &AnnotationSet, hp: &Hyperparams) -> f64 {
    update_lambda(state, y, hp);
    update_r(state, hp);
    update_gh(state, y, hp);
    update_ef(state, hp);
    update_m(state, hp);
    elbo(state, y, hp)
}

/// Random stream for restart `restart` under base seed `seed`.
pub fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

pub fn fit(y: &AnnotationSet, hp: &Hyperparams, cfg: &FitConfig) -> Result<FitResult> {
    fit_observed(y, hp, cfg, |_, _, _, _| {})
}

/// [`fit`] with a callback invoked after every sweep as
/// `(restart, iteration, state, elbo)`.
pub fn fit_observed(
    y: &AnnotationSet,
    hp: &Hyperparams,
    cfg: &FitConfig,
    mut observe: impl FnMut(usize, usize, &BmmbState, f64),
) -> Result<FitResult> {
    hp.validate()?;
    cfg.validate()?;
    let mut best: Option<(BmmbState, Vec<f64>, bool)> = None;
    let mut restart_elbos = Vec::with_capacity(cfg.restarts);
    for restart in 0..cfg.restarts {
        let mut state = init(y, hp, &mut restart_rng(cfg.seed, restart));
        let (trace, converged) = run_until_converged(
            &mut state,
            cfg.eta,
            cfg.max_iter,
            |s| sweep(s, y, hp),
            |s, it, v| observe(restart, it, s, v),
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
    let msum: f64 = state.m.iter().sum();
    let mixture = MixtureSummary {
        weights: state.m.iter().map(|m| m / msum).collect(),
        tau: beta_means(&state.e, &state.f),
    };
    Ok(FitResult {
        model: ModelKind::Bmmb,
        hyperparams: *hp,
        reliability: beta_means(&state.g, &state.h),
        lambda: state.lambda,
        iterations: trace.len(),
        elbo_trace: trace,
        converged,
        restart_elbos,
        mixture: Some(mixture),
    })
}

/// Model-implied probability of every label subset from a fitted mixture.
pub fn estimate_label_distribution(result: &FitResult) -> Result<LabelSetDistribution> {
    let mix = result
        .mixture
        .as_ref()
        .ok_or_else(|| Error::Invalid("label-set distribution needs a mixture fit".into()))?;
    mixture_label_distribution(&mix.weights, &mix.tau)
}

/// p_S = Σₖ wₖ Πⱼ∈S τₖⱼ Πⱼ∉S (1 − τₖⱼ), indexed by [`crate::data::subset_index`].
pub fn mixture_label_distribution(weights: &[f64], tau: &Matrix) -> Result<LabelSetDistribution> {
    let c = tau.cols();
    check_subset_capacity(c)?;
    if weights.len() != tau.rows() {
        return Err(Error::Dimension(format!(
            "{} mixture weights for {} components",
            weights.len(),
            tau.rows()
        )));
    }
    let mut probs = vec![0.0; 1 << c];
    for (s, p) in probs.iter_mut().enumerate() {
        for (k, &w) in weights.iter().enumerate() {
            let mut prod = w;
            for j in 0..c {
                let on = (s >> (c - 1 - j)) & 1 == 1;
                prod *= if on { tau[(k, j)] } else { 1.0 - tau[(k, j)] };
            }
            *p += prod;
        }
    }
    LabelSetDistribution::new(c, probs)
}

/// Permutation `perm` minimizing Σₖ TV(estimated row perm[k], planted row k),
/// where TV is the mean absolute difference over labels. Exhaustive, so keep K small.
pub fn best_component_matching(estimated: &Matrix, planted: &Matrix) -> Result<Vec<usize>> {
    if estimated.rows() != planted.rows() || estimated.cols() != planted.cols() {
        return Err(Error::Dimension(
            "component matrices differ in shape".into(),
        ));
    }
    let k = planted.rows();
    if k > 9 {
        return Err(Error::Capacity(format!(
            "exhaustive matching supports K <= 9, got {k}"
        )));
    }
    let cost = |a: usize, b: usize| -> f64 {
        estimated
            .row(a)
            .iter()
            .zip(planted.row(b))
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / planted.cols().max(1) as f64
    };
    fn search(
        depth: usize,
        k: usize,
        used: &mut [bool],
        cur: &mut Vec<usize>,
        acc: f64,
        best: &mut (f64, Vec<usize>),
        cost: &dyn Fn(usize, usize) -> f64,
    ) {
        if acc >= best.0 {
            return;
        }
        if depth == k {
            *best = (acc, cur.clone());
            return;
        }
        for cand in 0..k {
            if !used[cand] {
                used[cand] = true;
                cur.push(cand);
                search(depth + 1, k, used, cur, acc + cost(cand, depth), best, cost);
                cur.pop();
                used[cand] = false;
            }
        }
    }
    let mut best = (f64::INFINITY, Vec::new());
    search(
        0,
        k,
        &mut vec![false; k],
        &mut Vec::with_capacity(k),
        0.0,
        &mut best,
        &cost,
    );
    Ok(best.1)
}
