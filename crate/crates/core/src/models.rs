//! Conjugate model families: posteriors, posterior draws and posterior
//! predictive generation of the future-sample chains.
//!
//! Three families are supported:
//!
//! * Gaussian mean with known variance, `N(μ0, λ0²)` prior against a flat
//!   baseline;
//! * Bernoulli success probability, `Beta(α, β)` prior against `Beta(1, 1)`;
//! * simple linear regression with known variance, independent Gaussian
//!   priors on intercept and slope against a flat baseline.
//!
//! Posteriors are always computed from [`SufficientStats`], so expanding the
//! observed data by a chain never rescans the observations.

use rand::Rng;
use rand_distr::{Beta as BetaDistr, Binomial, ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Spd2x2;
use crate::streams::{Branch, RealizationStreams};

const DEGENERATE_VARIANCE: f64 = 1e-300;

/// A prior variance, or the improper flat prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PriorVariance {
    Finite(f64),
    Flat,
}

impl PriorVariance {
    pub fn precision(&self) -> f64 {
        match *self {
            PriorVariance::Finite(v) => 1.0 / v,
            PriorVariance::Flat => 0.0,
        }
    }

    fn validate(&self, key: &str) -> Result<()> {
        match *self {
            PriorVariance::Finite(v) if !(v > 0.0 && v.is_finite()) => {
                Err(Error::config(key, format!("{key} must be > 0")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianModelSpec {
    pub sigma2: f64,
    pub prior_mean: f64,
    pub prior_var: PriorVariance,
}

impl GaussianModelSpec {
    pub fn new(sigma2: f64, prior_mean: f64, prior_var: f64) -> Self {
        Self {
            sigma2,
            prior_mean,
            prior_var: PriorVariance::Finite(prior_var),
        }
    }

    /// Nominal prior sample size `z = σ²/λ0²` (zero for a flat prior).
    pub fn z(&self) -> f64 {
        self.sigma2 * self.prior_var.precision()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::config("sigma2", "sigma2 must be > 0"));
        }
        if !self.prior_mean.is_finite() {
            return Err(Error::config("prior_mean", "prior_mean must be finite"));
        }
        self.prior_var.validate("prior_var")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaBernoulliModelSpec {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaBernoulliModelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha", "alpha must be > 0"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", "beta must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionModelSpec {
    pub sigma2: f64,
    /// Prior mean `(μ0, γ0)` of intercept and slope.
    pub eta0: [f64; 2],
    /// Prior variances `τ1², τ2²`.
    pub tau2: [PriorVariance; 2],
}

impl RegressionModelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::config("sigma2", "sigma2 must be > 0"));
        }
        if !self.eta0.iter().all(|v| v.is_finite()) {
            return Err(Error::config("eta0", "eta0 must be finite"));
        }
        self.tau2[0].validate("tau1_sq")?;
        self.tau2[1].validate("tau2_sq")
    }

    /// Per-coefficient nominal sample sizes `z_i = σ²/τ_i²`.
    pub fn z(&self) -> [f64; 2] {
        [
            self.sigma2 * self.tau2[0].precision(),
            self.sigma2 * self.tau2[1].precision(),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    Gaussian(GaussianModelSpec),
    BetaBernoulli(BetaBernoulliModelSpec),
    Regression(RegressionModelSpec),
}

impl ModelSpec {
    pub fn family(&self) -> &'static str {
        match self {
            ModelSpec::Gaussian(_) => "gaussian",
            ModelSpec::BetaBernoulli(_) => "beta_bernoulli",
            ModelSpec::Regression(_) => "regression",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Gaussian(s) => s.validate(),
            ModelSpec::BetaBernoulli(s) => s.validate(),
            ModelSpec::Regression(s) => s.validate(),
        }
    }

    /// Classical information-ratio sample size of the informative prior.
    pub fn nominal_epss(&self) -> f64 {
        match self {
            ModelSpec::Gaussian(s) => s.z(),
            ModelSpec::BetaBernoulli(s) => s.alpha + s.beta - 2.0,
            ModelSpec::Regression(s) => {
                let z = s.z();
                z[0].max(z[1])
            }
        }
    }

    /// Checks that a dataset belongs to this family.
    pub fn check_dataset(&self, data: &Dataset) -> Result<()> {
        match (self, data) {
            (ModelSpec::Gaussian(_), Dataset::Scalar(_)) => Ok(()),
            (ModelSpec::BetaBernoulli(_), Dataset::Scalar(v)) => {
                match v.iter().position(|&y| y != 0.0 && y != 1.0) {
                    Some(i) => Err(Error::domain(format!(
                        "bernoulli observation {} is {}, expected 0 or 1",
                        i + 1,
                        v[i]
                    ))),
                    None => Ok(()),
                }
            }
            (ModelSpec::Regression(_), Dataset::Pairs(_)) => Ok(()),
            (ModelSpec::Regression(_), Dataset::Scalar(_)) => Err(Error::FamilyMismatch {
                expected: "pairs",
                found: "scalars",
            }),
            (_, Dataset::Pairs(_)) => Err(Error::FamilyMismatch {
                expected: "scalars",
                found: "pairs",
            }),
        }
    }
}

/// Observed data: scalars for the Gaussian/Bernoulli families, `(x, y)`
/// pairs for regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Dataset {
    Scalar(Vec<f64>),
    Pairs(Vec<(f64, f64)>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Scalar(v) => v.len(),
            Dataset::Pairs(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mean(&self) -> Option<f64> {
        match self {
            Dataset::Scalar(v) if !v.is_empty() => Some(v.iter().sum::<f64>() / v.len() as f64),
            _ => None,
        }
    }
}

/// Future observations of one chain. Uses the same representation as
/// [`Dataset`].
pub type Chain = Dataset;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian1D {
    pub mean: f64,
    pub var: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian2D {
    pub mean: [f64; 2],
    pub cov: Spd2x2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Posterior {
    Gaussian1D(Gaussian1D),
    Beta(BetaParams),
    Gaussian2D(Gaussian2D),
}

/// A parameter value: the Gaussian mean or Bernoulli probability, or the
/// regression coefficients `(β1, β2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Theta {
    Scalar(f64),
    Vector([f64; 2]),
}

/// Running sums from which every conjugate posterior is computed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SufficientStats {
    Scalar {
        count: usize,
        sum: f64,
    },
    Regression {
        count: usize,
        sx: f64,
        sxx: f64,
        sy: f64,
        sxy: f64,
    },
}

impl SufficientStats {
    pub fn of(data: &Dataset) -> Self {
        match data {
            Dataset::Scalar(v) => SufficientStats::Scalar {
                count: v.len(),
                sum: v.iter().sum(),
            },
            Dataset::Pairs(v) => {
                let mut s = SufficientStats::Regression {
                    count: 0,
                    sx: 0.0,
                    sxx: 0.0,
                    sy: 0.0,
                    sxy: 0.0,
                };
                if let SufficientStats::Regression {
                    count,
                    sx,
                    sxx,
                    sy,
                    sxy,
                } = &mut s
                {
                    for &(x, y) in v {
                        *count += 1;
                        *sx += x;
                        *sxx += x * x;
                        *sy += y;
                        *sxy += x * y;
                    }
                }
                s
            }
        }
    }

    pub fn count(&self) -> usize {
        match *self {
            SufficientStats::Scalar { count, .. } | SufficientStats::Regression { count, .. } => {
                count
            }
        }
    }

    pub fn combine(&self, other: &Self) -> Result<Self> {
        match (*self, *other) {
            (
                SufficientStats::Scalar { count: c1, sum: s1 },
                SufficientStats::Scalar { count: c2, sum: s2 },
            ) => Ok(SufficientStats::Scalar {
                count: c1 + c2,
                sum: s1 + s2,
            }),
            (
                SufficientStats::Regression {
                    count: c1,
                    sx: a1,
                    sxx: b1,
                    sy: d1,
                    sxy: e1,
                },
                SufficientStats::Regression {
                    count: c2,
                    sx: a2,
                    sxx: b2,
                    sy: d2,
                    sxy: e2,
                },
            ) => Ok(SufficientStats::Regression {
                count: c1 + c2,
                sx: a1 + a2,
                sxx: b1 + b2,
                sy: d1 + d2,
                sxy: e1 + e2,
            }),
            (SufficientStats::Scalar { .. }, _) => Err(Error::FamilyMismatch {
                expected: "scalars",
                found: "pairs",
            }),
            (SufficientStats::Regression { .. }, _) => Err(Error::FamilyMismatch {
                expected: "pairs",
                found: "scalars",
            }),
        }
    }
}

/// Gaussian-mean posterior after `n` observations with mean `ybar`.
pub fn posterior_gaussian(spec: &GaussianModelSpec, n: usize, ybar: f64) -> Result<Posterior> {
    let u = n as f64;
    match spec.prior_var {
        PriorVariance::Flat => {
            if n == 0 {
                return Err(Error::ImproperPosterior(
                    "flat prior with no observations".into(),
                ));
            }
            Ok(Posterior::Gaussian1D(Gaussian1D {
                mean: ybar,
                var: spec.sigma2 / u,
            }))
        }
        PriorVariance::Finite(_) => {
            let z = spec.z();
            let w = u / (u + z);
            let ybar = if n == 0 { 0.0 } else { ybar };
            Ok(Posterior::Gaussian1D(Gaussian1D {
                mean: w * ybar + (1.0 - w) * spec.prior_mean,
                var: spec.sigma2 / (u + z),
            }))
        }
    }
}

/// Beta posterior after `successes` ones in `n` Bernoulli trials.
pub fn posterior_beta(
    spec: &BetaBernoulliModelSpec,
    successes: usize,
    n: usize,
    use_baseline: bool,
) -> Result<Posterior> {
    if successes > n {
        return Err(Error::domain(format!(
            "successes ({successes}) exceed trials ({n})"
        )));
    }
    let (a0, b0) = if use_baseline {
        (1.0, 1.0)
    } else {
        (spec.alpha, spec.beta)
    };
    Ok(Posterior::Beta(BetaParams {
        a: a0 + successes as f64,
        b: b0 + (n - successes) as f64,
    }))
}

/// Regression posterior for `(intercept, slope)`.
pub fn posterior_regression(
    spec: &RegressionModelSpec,
    data: &Dataset,
    use_baseline: bool,
) -> Result<Posterior> {
    posterior_regression_from_stats(spec, &SufficientStats::of(data), use_baseline)
}

fn posterior_regression_from_stats(
    spec: &RegressionModelSpec,
    stats: &SufficientStats,
    use_baseline: bool,
) -> Result<Posterior> {
    let SufficientStats::Regression {
        count,
        sx,
        sxx,
        sy,
        sxy,
    } = *stats
    else {
        return Err(Error::FamilyMismatch {
            expected: "pairs",
            found: "scalars",
        });
    };
    let xtx = Spd2x2::new(count as f64, sx, sxx);
    let xty = [sy, sxy];
    let s2 = spec.sigma2;
    let prior_precision = if use_baseline {
        [0.0, 0.0]
    } else {
        [spec.tau2[0].precision(), spec.tau2[1].precision()]
    };
    let precision = Spd2x2::new(
        xtx.a11 / s2 + prior_precision[0],
        xtx.a12 / s2,
        xtx.a22 / s2 + prior_precision[1],
    );
    let scale = precision.a11.abs().max(precision.a22.abs());
    if !(precision.det() > 1e-12 * scale * scale) {
        return Err(Error::Singular(format!(
            "posterior precision is rank deficient (n = {count})"
        )));
    }
    let cov = precision.inverse()?;
    let rhs = [
        xty[0] / s2 + prior_precision[0] * spec.eta0[0],
        xty[1] / s2 + prior_precision[1] * spec.eta0[1],
    ];
    Ok(Posterior::Gaussian2D(Gaussian2D {
        mean: cov.mul_vec(rhs),
        cov,
    }))
}

/// Posterior under the informative prior (or the baseline, if requested)
/// given sufficient statistics of the data.
pub fn posterior_from_stats(
    spec: &ModelSpec,
    stats: &SufficientStats,
    use_baseline: bool,
) -> Result<Posterior> {
    match (spec, stats) {
        (ModelSpec::Gaussian(g), SufficientStats::Scalar { count, sum }) => {
            let mean = if *count == 0 {
                0.0
            } else {
                sum / *count as f64
            };
            if use_baseline {
                let flat = GaussianModelSpec {
                    prior_var: PriorVariance::Flat,
                    ..g.clone()
                };
                posterior_gaussian(&flat, *count, mean)
            } else {
                posterior_gaussian(g, *count, mean)
            }
        }
        (ModelSpec::BetaBernoulli(b), SufficientStats::Scalar { count, sum }) => {
            posterior_beta(b, sum.round() as usize, *count, use_baseline)
        }
        (ModelSpec::Regression(r), stats @ SufficientStats::Regression { .. }) => {
            posterior_regression_from_stats(r, stats, use_baseline)
        }
        (ModelSpec::Regression(_), _) => Err(Error::FamilyMismatch {
            expected: "pairs",
            found: "scalars",
        }),
        (_, _) => Err(Error::FamilyMismatch {
            expected: "scalars",
            found: "pairs",
        }),
    }
}

/// Posterior given the observed data extended by `chain`.
pub fn expanded_posterior(
    spec: &ModelSpec,
    data_stats: &SufficientStats,
    chain: &Chain,
    use_baseline: bool,
) -> Result<Posterior> {
    spec.check_dataset(chain)?;
    let stats = data_stats.combine(&SufficientStats::of(chain))?;
    posterior_from_stats(spec, &stats, use_baseline)
}

/// One exact draw from a posterior.
pub fn sample_theta<R: Rng + ?Sized>(post: &Posterior, rng: &mut R) -> Result<Theta> {
    match *post {
        Posterior::Gaussian1D(g) => {
            if g.var < DEGENERATE_VARIANCE {
                return Ok(Theta::Scalar(g.mean));
            }
            let z: f64 = rng.sample(StandardNormal);
            Ok(Theta::Scalar(g.mean + g.var.sqrt() * z))
        }
        Posterior::Beta(b) => {
            let d = BetaDistr::new(b.a, b.b)
                .map_err(|e| Error::domain(format!("beta posterior: {e}")))?;
            Ok(Theta::Scalar(d.sample(rng)))
        }
        Posterior::Gaussian2D(g) => {
            let l = g.cov.cholesky()?;
            let z0: f64 = rng.sample(StandardNormal);
            let z1: f64 = rng.sample(StandardNormal);
            Ok(Theta::Vector([
                g.mean[0] + l[0][0] * z0,
                g.mean[1] + l[1][0] * z0 + l[1][1] * z1,
            ]))
        }
    }
}

/// The doubly indexed future-sample family for one realization.
///
/// `primary[i]` and `mirror[i]` hold the chains for `m = n + 1 + i`; the
/// chains for `m = n` are empty and not stored.
#[derive(Clone, Debug, PartialEq)]
pub struct FutureChains {
    pub n: usize,
    pub l: usize,
    pub theta_star: Theta,
    pub primary: Vec<Chain>,
    pub mirror: Vec<Chain>,
}

impl FutureChains {
    pub fn chain(&self, branch: Branch, m: usize) -> Option<&Chain> {
        if m <= self.n || m > self.l {
            return None;
        }
        let v = match branch {
            Branch::Primary => &self.primary,
            Branch::Mirror => &self.mirror,
        };
        v.get(m - self.n - 1)
    }
}

/// Draws one chain of `len` future observations at `theta`.
pub fn sample_chain<R: Rng + ?Sized>(
    spec: &ModelSpec,
    theta: &Theta,
    len: usize,
    rng: &mut R,
) -> Result<Chain> {
    match (spec, theta) {
        (ModelSpec::Gaussian(g), Theta::Scalar(mu)) => {
            let sd = if g.sigma2 < DEGENERATE_VARIANCE {
                0.0
            } else {
                g.sigma2.sqrt()
            };
            Ok(Dataset::Scalar(
                (0..len)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        mu + sd * z
                    })
                    .collect(),
            ))
        }
        (ModelSpec::BetaBernoulli(_), Theta::Scalar(p)) => Ok(Dataset::Scalar(
            (0..len)
                .map(|_| if rng.random::<f64>() < *p { 1.0 } else { 0.0 })
                .collect(),
        )),
        (ModelSpec::Regression(r), Theta::Vector(beta)) => {
            let sd = r.sigma2.sqrt();
            Ok(Dataset::Pairs(
                (0..len)
                    .map(|_| {
                        let x: f64 = rng.sample(StandardNormal);
                        let e: f64 = rng.sample(StandardNormal);
                        (x, beta[0] + beta[1] * x + sd * e)
                    })
                    .collect(),
            ))
        }
        (ModelSpec::Regression(_), Theta::Scalar(_)) => Err(Error::FamilyMismatch {
            expected: "vector parameter",
            found: "scalar parameter",
        }),
        (_, Theta::Vector(_)) => Err(Error::FamilyMismatch {
            expected: "scalar parameter",
            found: "vector parameter",
        }),
    }
}

/// Draws the sufficient statistics of a chain of `len` future observations
/// at `theta` directly, without materializing the chain.
///
/// The result has exactly the distribution of
/// `SufficientStats::of(&sample_chain(..))`: a normal sum, a binomial count,
/// or for regression `Σx ~ N(0, r)`, `Σx² − (Σx)²/r ~ χ²_{r−1}` and
/// `Xᵀy | X ~ N(XᵀXβ, σ²XᵀX)`.
pub fn sample_chain_stats<R: Rng + ?Sized>(
    spec: &ModelSpec,
    theta: &Theta,
    len: usize,
    rng: &mut R,
) -> Result<SufficientStats> {
    if len == 0 {
        return Ok(match spec {
            ModelSpec::Regression(_) => SufficientStats::Regression {
                count: 0,
                sx: 0.0,
                sxx: 0.0,
                sy: 0.0,
                sxy: 0.0,
            },
            _ => SufficientStats::Scalar { count: 0, sum: 0.0 },
        });
    }
    let r = len as f64;
    match (spec, theta) {
        (ModelSpec::Gaussian(g), Theta::Scalar(mu)) => {
            let z: f64 = rng.sample(StandardNormal);
            let sd = if g.sigma2 < DEGENERATE_VARIANCE {
                0.0
            } else {
                (g.sigma2 * r).sqrt()
            };
            Ok(SufficientStats::Scalar {
                count: len,
                sum: r * mu + sd * z,
            })
        }
        (ModelSpec::BetaBernoulli(_), Theta::Scalar(p)) => {
            let k = Binomial::new(len as u64, p.clamp(0.0, 1.0))
                .map_err(|e| Error::domain(format!("binomial: {e}")))?
                .sample(rng);
            Ok(SufficientStats::Scalar {
                count: len,
                sum: k as f64,
            })
        }
        (ModelSpec::Regression(spec), Theta::Vector(beta)) => {
            let z: f64 = rng.sample(StandardNormal);
            let sx = r.sqrt() * z;
            let q = if len > 1 {
                ChiSquared::new(r - 1.0)
                    .map_err(|e| Error::domain(format!("chi-square: {e}")))?
                    .sample(rng)
            } else {
                0.0
            };
            let sxx = q + sx * sx / r;
            let xtx = Spd2x2::new(r, sx, sxx);
            let mean = xtx.mul_vec(*beta);
            let sd = spec.sigma2.sqrt();
            let e0: f64 = rng.sample(StandardNormal);
            let e1: f64 = rng.sample(StandardNormal);
            // Cholesky of XᵀX; for r = 1 it is rank one.
            let l11 = r.sqrt();
            let l21 = sx / l11;
            let l22 = (sxx - l21 * l21).max(0.0).sqrt();
            Ok(SufficientStats::Regression {
                count: len,
                sx,
                sxx,
                sy: mean[0] + sd * l11 * e0,
                sxy: mean[1] + sd * (l21 * e0 + l22 * e1),
            })
        }
        (ModelSpec::Regression(_), Theta::Scalar(_)) => Err(Error::FamilyMismatch {
            expected: "vector parameter",
            found: "scalar parameter",
        }),
        (_, Theta::Vector(_)) => Err(Error::FamilyMismatch {
            expected: "scalar parameter",
            found: "vector parameter",
        }),
    }
}

/// Generates `x^(m)` and `x̃^(m)` for every `m` in `n+1..=l`, all at the
/// shared parameter `theta_star`, each chain from its own substream.
pub fn generate_future_chains(
    spec: &ModelSpec,
    theta_star: Theta,
    n: usize,
    l: usize,
    streams: &RealizationStreams,
) -> Result<FutureChains> {
    if l < n {
        return Err(Error::domain(format!("L ({l}) must be >= n ({n})")));
    }
    let mut primary = Vec::with_capacity(l - n);
    let mut mirror = Vec::with_capacity(l - n);
    for m in (n + 1)..=l {
        primary.push(sample_chain(
            spec,
            &theta_star,
            m - n,
            &mut streams.chain(Branch::Primary, m),
        )?);
        mirror.push(sample_chain(
            spec,
            &theta_star,
            m - n,
            &mut streams.chain(Branch::Mirror, m),
        )?);
    }
    Ok(FutureChains {
        n,
        l,
        theta_star,
        primary,
        mirror,
    })
}
