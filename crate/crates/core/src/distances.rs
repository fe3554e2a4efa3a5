//! Discrepancies between posteriors.
//!
//! All Wasserstein values use the squared convention: `w2sq = W₂²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{BetaParams, Gaussian1D, Gaussian2D, Posterior};
use crate::numerics::{spd_sqrt_2x2, BetaFunctions, QuadratureRule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    W2sq,
    Kl,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceValue {
    pub value: f64,
    pub kind: DistanceKind,
}

impl DistanceValue {
    fn w2sq(value: f64) -> Self {
        Self {
            value: value.max(0.0),
            kind: DistanceKind::W2sq,
        }
    }
}

/// `(μa − μb)² + (σa − σb)²`.
pub fn w2sq_gaussian1d(a: &Gaussian1D, b: &Gaussian1D) -> DistanceValue {
    let dm = a.mean - b.mean;
    let ds = a.var.sqrt() - b.var.sqrt();
    DistanceValue::w2sq(dm * dm + ds * ds)
}

/// `‖μA − μB‖² + tr(ΣA + ΣB − 2(ΣB^½ ΣA ΣB^½)^½)`.
pub fn w2sq_gaussian_mv(a: &Gaussian2D, b: &Gaussian2D) -> Result<DistanceValue> {
    a.cov.check_pd()?;
    let root_b = spd_sqrt_2x2(&b.cov)?;
    let cross = spd_sqrt_2x2(&root_b.sandwich(&a.cov))?;
    let d0 = a.mean[0] - b.mean[0];
    let d1 = a.mean[1] - b.mean[1];
    let tr = a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
    Ok(DistanceValue::w2sq(d0 * d0 + d1 * d1 + tr))
}

/// `Σ wᵢ (qa(uᵢ) − qb(uᵢ))²` over the rule's nodes.
pub fn w2sq_quantile<A, B>(qf_a: A, qf_b: B, rule: &QuadratureRule) -> Result<DistanceValue>
where
    A: Fn(f64) -> Result<f64>,
    B: Fn(f64) -> Result<f64>,
{
    let mut acc = 0.0;
    for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
        let d = qf_a(u)? - qf_b(u)?;
        acc += w * d * d;
    }
    Ok(DistanceValue::w2sq(acc))
}

/// Same as [`w2sq_quantile`] on quantiles already evaluated at the nodes.
pub fn w2sq_from_quantiles(qa: &[f64], qb: &[f64], weights: &[f64]) -> f64 {
    debug_assert!(qa.len() == weights.len() && qb.len() == weights.len());
    let mut acc = 0.0;
    for i in 0..weights.len() {
        let d = qa[i] - qb[i];
        acc += weights[i] * d * d;
    }
    acc.max(0.0)
}

/// Beta quantiles at every node of `rule`.
pub fn beta_node_quantiles(p: &BetaParams, rule: &QuadratureRule) -> Result<Vec<f64>> {
    BetaFunctions::new(p.a, p.b)?.quantiles(&rule.nodes)
}

/// Squared W₂ between two posteriors of the same family. Beta pairs use
/// quantile quadrature on `rule`.
pub fn w2sq(a: &Posterior, b: &Posterior, rule: &QuadratureRule) -> Result<DistanceValue> {
    match (a, b) {
        (Posterior::Gaussian1D(a), Posterior::Gaussian1D(b)) => Ok(w2sq_gaussian1d(a, b)),
        (Posterior::Gaussian2D(a), Posterior::Gaussian2D(b)) => w2sq_gaussian_mv(a, b),
        (Posterior::Beta(a), Posterior::Beta(b)) => {
            let qa = beta_node_quantiles(a, rule)?;
            let qb = beta_node_quantiles(b, rule)?;
            Ok(DistanceValue::w2sq(w2sq_from_quantiles(
                &qa,
                &qb,
                &rule.weights,
            )))
        }
        _ => Err(Error::FamilyMismatch {
            expected: "matching posterior families",
            found: "mixed posterior families",
        }),
    }
}

/// KL divergence of the expanded baseline posterior `N(x̄_m, σ²/m)` from the
/// conjugate posterior `N(μn, σ²/(n+z))`, where `d_mn = (x̄_m − μn)²`.
pub fn kl_gaussian_conjugate(
    n: usize,
    m: usize,
    z: f64,
    sigma: f64,
    d_mn: f64,
) -> Result<DistanceValue> {
    if n == 0 || m == 0 {
        return Err(Error::domain("kl requires n, m >= 1"));
    }
    if !(z >= 0.0) || !(sigma > 0.0) || !(d_mn >= 0.0) {
        return Err(Error::domain("kl requires z >= 0, sigma > 0, d >= 0"));
    }
    let (n, m) = (n as f64, m as f64);
    let s2 = sigma * sigma;
    // m/(n+z) − 1 + ln((n+z)/m) = δ − ln(1+δ) with δ = (m − n − z)/(n+z)
    let delta = (m - n - z) / (n + z);
    let v = 0.5 * (m / s2 * d_mn + (delta - delta.ln_1p()));
    Ok(DistanceValue {
        value: v.max(0.0),
        kind: DistanceKind::Kl,
    })
}
