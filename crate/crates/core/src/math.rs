//! Special functions and log-domain helpers used by the variational updates.
//!
//! Everything here is a pure function of its arguments.

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

// Below these thresholds the recurrence is applied before the asymptotic series.
const DIGAMMA_SHIFT: f64 = 10.0;
const LGAMMA_SHIFT: f64 = 15.0;

fn check_positive(name: &str, x: f64) -> Result<()> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::Domain(format!(
            "{name} requires a finite positive argument, got {x}"
        )));
    }
    Ok(())
}

/// The digamma function ψ(x) = d/dx ln Γ(x) for positive arguments.
///
/// Shifts `x` above 10 with ψ(x) = ψ(x + 1) − 1/x and then sums the
/// asymptotic expansion through the x⁻¹⁴ term.
pub fn digamma(x: f64) -> Result<f64> {
    check_positive("digamma", x)?;
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < DIGAMMA_SHIFT {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    acc + x.ln() - 0.5 * inv - series
}

/// Natural log of the gamma function for positive arguments.
pub fn log_gamma(x: f64) -> Result<f64> {
    check_positive("log_gamma", x)?;
    Ok(log_gamma_unchecked(x))
}

pub(crate) fn log_gamma_unchecked(x: f64) -> f64 {
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    let mut z = x;
    let mut prod = 1.0;
    while z < LGAMMA_SHIFT {
        prod *= z;
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            - inv2
                * (1.0 / 360.0
                    - inv2
                        * (1.0 / 1260.0
                            - inv2
                                * (1.0 / 1680.0
                                    - inv2
                                        * (1.0 / 1188.0
                                            - inv2 * (691.0 / 360_360.0 - inv2 / 156.0))))));
    let stirling = (z - 0.5) * z.ln() - z + LN_SQRT_2PI + series;
    if prod == 1.0 {
        stirling
    } else {
        stirling - prod.ln()
    }
}

/// ln B(a, b) = ln Γ(a) + ln Γ(b) − ln Γ(a + b).
pub(crate) fn log_beta(a: f64, b: f64) -> f64 {
    log_gamma_unchecked(a) + log_gamma_unchecked(b) - log_gamma_unchecked(a + b)
}

/// Unnormalized log-probabilities. Must be non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWeightVector(Vec<f64>);

impl LogWeightVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Invalid("log-weight vector must be non-empty".into()));
        }
        if values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Invalid("log-weights must be finite or -inf".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// log Σ exp(wᵢ), shifted by the maximum. Returns -inf if every entry is -inf.
pub fn log_sum_exp(w: &[f64]) -> f64 {
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + w.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Softmax of a log-weight vector.
pub fn normalize_log_weights(w: &LogWeightVector) -> Result<Vec<f64>> {
    let mut out = w.values().to_vec();
    normalize_in_place(&mut out)?;
    Ok(out)
}

/// Overwrites `w` with its softmax and returns the log normalizer.
pub fn normalize_in_place(w: &mut [f64]) -> Result<f64> {
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Domain(
            "cannot normalize: every log-weight is -inf".into(),
        ));
    }
    let mut total = 0.0;
    for v in w.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in w.iter_mut() {
        *v /= total;
    }
    Ok(max + total.ln())
}

/// Probability of the first of two outcomes with log-scores `pos` and `neg`.
#[inline]
pub(crate) fn two_way(pos: f64, neg: f64) -> f64 {
    let d = pos - neg;
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

/// (E[ln θ], E[ln(1 − θ)]) for θ ~ Beta(g, h).
pub fn beta_expect_log(g: f64, h: f64) -> Result<(f64, f64)> {
    check_positive("beta_expect_log", g)?;
    check_positive("beta_expect_log", h)?;
    Ok(beta_expect_log_unchecked(g, h))
}

#[inline]
pub(crate) fn beta_expect_log_unchecked(g: f64, h: f64) -> (f64, f64) {
    let total = digamma_unchecked(g + h);
    (digamma_unchecked(g) - total, digamma_unchecked(h) - total)
}

/// E[ln πₖ] for π ~ Dirichlet(m).
pub fn dirichlet_expect_log(m: &[f64]) -> Result<Vec<f64>> {
    if m.is_empty() {
        return Err(Error::Domain(
            "dirichlet_expect_log needs at least one component".into(),
        ));
    }
    for &v in m {
        check_positive("dirichlet_expect_log", v)?;
    }
    Ok(dirichlet_expect_log_unchecked(m))
}

pub(crate) fn dirichlet_expect_log_unchecked(m: &[f64]) -> Vec<f64> {
    let total = digamma_unchecked(m.iter().sum());
    m.iter().map(|&v| digamma_unchecked(v) - total).collect()
}
