//! Closed-form results for the Gaussian conjugate family.
//!
//! Notation: `n` observations with mean `ȳ`, prior `N(μ0, σ²/z)`,
//! `w_u = u/(u+z)`, `μn = w_n ȳ + (1 − w_n) μ0`, `r = m − n`. Distances are
//! squared W₂.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{sign_and_mn, OpessRealization};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::numerics::{ncx2_sample_df1, ncx2_sf_df1_unchecked, normal_cdf};
use crate::streams::{substream, Branch};

fn check_setting(n: usize, z: f64, sigma: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("n must be >= 1"));
    }
    if !(z >= 0.0 && z.is_finite()) {
        return Err(Error::domain(format!("z must be finite and >= 0, got {z}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::domain(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(())
}

fn weight(u: f64, z: f64) -> f64 {
    u / (u + z)
}

/// `μn`, the informative posterior mean.
pub fn posterior_mean(n: usize, z: f64, ybar: f64, mu0: f64) -> f64 {
    let w = weight(n as f64, z);
    w * ybar + (1.0 - w) * mu0
}

/// `c_m² = (σ/√(n+z) − σ/√m)²`.
pub fn c2(m: f64, n: usize, z: f64, sigma: f64) -> f64 {
    (sigma / (n as f64 + z).sqrt() - sigma / m.sqrt()).powi(2)
}

/// `c̃_m² = (σ/√(m+z) − σ/√n)²`.
pub fn c2_tilde(m: f64, n: usize, z: f64, sigma: f64) -> f64 {
    (sigma / (m + z).sqrt() - sigma / (n as f64).sqrt()).powi(2)
}

/// `W(n) = W̃(n)`: baseline against informative posterior on the data alone.
pub fn base_distance(n: usize, z: f64, sigma: f64, ybar: f64, mu0: f64) -> f64 {
    (ybar - posterior_mean(n, z, ybar, mu0)).powi(2) + c2(n as f64, n, z, sigma)
}

/// Shifted noncentral χ² parameters of both distances given `ȳ` and `μ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CondDistParams {
    pub tau_m: f64,
    pub lambda_m: f64,
    pub c2_m: f64,
    pub kappa_m: f64,
    pub delta_m: f64,
    pub c2_tilde_m: f64,
}

impl CondDistParams {
    /// Survival `P(W > t)` of one branch.
    pub fn survival(&self, branch: Branch, t: f64) -> f64 {
        let (scale, nc, shift) = self.branch(branch);
        ncx2_sf_df1_unchecked((t - shift) / scale, nc / scale)
    }

    fn branch(&self, branch: Branch) -> (f64, f64, f64) {
        match branch {
            Branch::Primary => (self.tau_m, self.lambda_m, self.c2_m),
            Branch::Mirror => (self.kappa_m, self.delta_m, self.c2_tilde_m),
        }
    }
}

pub fn cond_dist_params(
    m: usize,
    n: usize,
    z: f64,
    sigma: f64,
    ybar: f64,
    mu: f64,
    mu0: f64,
) -> Result<CondDistParams> {
    check_setting(n, z, sigma)?;
    if m <= n {
        return Err(Error::domain(format!("m ({m}) must exceed n ({n})")));
    }
    let (mf, nf) = (m as f64, n as f64);
    let r = mf - nf;
    let s2 = sigma * sigma;
    let w_n = weight(nf, z);
    let w_m = weight(mf, z);
    let tau = r * s2 / (mf * mf);
    let lambda = ((z / (nf + z) - r / mf) * (ybar - mu) + (1.0 - w_n) * (mu - mu0)).powi(2);
    let delta = ((r + z) / (mf + z) * (ybar - mu) + (1.0 - w_m) * (mu - mu0)).powi(2);
    Ok(CondDistParams {
        tau_m: tau,
        lambda_m: lambda,
        c2_m: c2(mf, n, z, sigma),
        kappa_m: w_m * w_m * tau,
        delta_m: delta,
        c2_tilde_m: c2_tilde(mf, n, z, sigma),
    })
}

/// One draw of `τ χ²₁(λ/τ) + c²` (or the mirror analogue).
pub fn cond_distance_sample<R: Rng + ?Sized>(
    params: &CondDistParams,
    branch: Branch,
    rng: &mut R,
) -> f64 {
    let (scale, nc, shift) = params.branch(branch);
    scale * ncx2_sample_df1(nc / scale, rng) + shift
}

/// Distance distributions given `ȳ` only, with `μ` integrated out.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalDistParams {
    pub tau_m: f64,
    pub lambda: f64,
    pub kappa_m: f64,
    pub delta: f64,
    pub c2_m: f64,
    pub c2_tilde_m: f64,
    pub m: usize,
}

impl MarginalDistParams {
    /// Noncentrality of the primary χ²₁ term, `λ/(m²τ_m)`.
    pub fn primary_noncentrality(&self) -> f64 {
        self.lambda / ((self.m as f64).powi(2) * self.tau_m)
    }

    pub fn mirror_noncentrality(&self) -> f64 {
        self.delta / self.kappa_m
    }

    pub fn sample<R: Rng + ?Sized>(&self, branch: Branch, rng: &mut R) -> f64 {
        match branch {
            Branch::Primary => {
                self.tau_m * ncx2_sample_df1(self.primary_noncentrality(), rng) + self.c2_m
            }
            Branch::Mirror => {
                self.kappa_m * ncx2_sample_df1(self.mirror_noncentrality(), rng) + self.c2_tilde_m
            }
        }
    }

    pub fn mean(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Primary => self.tau_m * (1.0 + self.primary_noncentrality()) + self.c2_m,
            Branch::Mirror => self.kappa_m * (1.0 + self.mirror_noncentrality()) + self.c2_tilde_m,
        }
    }
}

pub fn marginal_dist_params(
    m: usize,
    n: usize,
    z: f64,
    sigma: f64,
    ybar: f64,
    mu0: f64,
) -> Result<MarginalDistParams> {
    check_setting(n, z, sigma)?;
    if m <= n {
        return Err(Error::domain(format!("m ({m}) must exceed n ({n})")));
    }
    let (mf, nf) = (m as f64, n as f64);
    let r = mf - nf;
    let w_n = weight(nf, z);
    let w_m = weight(mf, z);
    let tau = r * r / (mf * mf) * (w_n / nf + 1.0 / r) * sigma * sigma;
    let lambda = (nf * (1.0 - w_n) * (ybar - mu0)).powi(2);
    Ok(MarginalDistParams {
        tau_m: tau,
        lambda,
        kappa_m: w_m * w_m * tau,
        delta: lambda / (nf * nf),
        c2_m: c2(mf, n, z, sigma),
        c2_tilde_m: c2_tilde(mf, n, z, sigma),
        m,
    })
}

/// Sizes beyond which the primary (`M`) or mirror (`M̃`) distances exceed
/// `t` surely. `None` stands for an infinite bound, which is the case for
/// every `t > σ²/(n+z)`.
pub fn truncation_bounds(t: f64, n: usize, z: f64, sigma: f64) -> (Option<usize>, Option<usize>) {
    let t = t.max(0.0);
    let nz = n as f64 + z;
    if t > sigma * sigma / nz {
        return (None, None);
    }
    let st = t.sqrt() / sigma;
    let big_m = {
        let rhs = 1.0 / nz.sqrt() - st;
        if rhs <= 0.0 {
            None
        } else {
            let lower = nz.ceil().max(1.0) as usize;
            let pred = |m: usize| c2(m as f64, n, z, sigma) > t && m >= lower;
            Some(first_true(
                ((1.0 / (rhs * rhs)).floor() as usize + 1).max(lower),
                lower,
                pred,
            ))
        }
    };
    let big_mt = {
        let rhs = 1.0 / (n as f64).sqrt() - st;
        if rhs <= 0.0 {
            None
        } else {
            let lower = n + 1;
            let guess = ((1.0 / (rhs * rhs) - z).floor().max(0.0) as usize + 1).max(lower);
            let pred = |m: usize| c2_tilde(m as f64, n, z, sigma) > t;
            Some(first_true(guess, lower, pred))
        }
    };
    (big_m, big_mt)
}

/// Smallest `m >= lower` with `pred(m)`, for a monotone predicate, starting
/// from a nearby guess.
fn first_true(mut m: usize, lower: usize, pred: impl Fn(usize) -> bool) -> usize {
    while !pred(m) {
        m += 1;
    }
    while m > lower && pred(m - 1) {
        m -= 1;
    }
    m
}

/// Query for the probability `P(Mₙ = v | ȳ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmfQuery {
    pub v: i64,
    pub ybar: f64,
    pub n: usize,
    pub z: f64,
    pub sigma: f64,
    pub mu0: f64,
    /// Draws of `μ` from the informative posterior; ignored when `fixed_mu` is set.
    pub mu_draws: usize,
    /// Draws of the distance `t` per `μ`.
    pub t_draws: usize,
    /// Condition on this `μ` instead of integrating it out.
    pub fixed_mu: Option<f64>,
    /// Largest candidate sample size; products and support are cut at `L`.
    pub l: usize,
    pub seed: u64,
}

impl PmfQuery {
    fn validate(&self) -> Result<()> {
        check_setting(self.n, self.z, self.sigma)?;
        if self.mu_draws == 0 || self.t_draws == 0 {
            return Err(Error::domain("mu_draws and t_draws must be >= 1"));
        }
        if self.l <= self.n {
            return Err(Error::domain("L must exceed n"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmfEstimate {
    pub v: i64,
    pub probability: f64,
    pub std_error: f64,
}

/// Precomputed conditional parameters for `m = n+1..=L` at one `μ`.
struct MuCurves {
    params: Vec<CondDistParams>,
}

impl MuCurves {
    fn new(q: &PmfQuery, mu: f64) -> Result<Self> {
        let params = ((q.n + 1)..=q.l)
            .map(|m| cond_dist_params(m, q.n, q.z, q.sigma, q.ybar, mu, q.mu0))
            .collect::<Result<_>>()?;
        Ok(Self { params })
    }

    /// `Π (1 − F)` over both branches up to the truncation bounds, skipping
    /// the entry that carries the density.
    fn survival_product(&self, q: &PmfQuery, t: f64, skip: Option<(Branch, usize)>) -> f64 {
        let (big_m, big_mt) = truncation_bounds(t, q.n, q.z, q.sigma);
        let last_p = big_m.map_or(q.l, |m| m.min(q.l));
        let last_m = big_mt.map_or(q.l, |m| m.min(q.l));
        let mut prod = 1.0;
        for (branch, last) in [(Branch::Primary, last_p), (Branch::Mirror, last_m)] {
            for m in (q.n + 1)..=last {
                if skip == Some((branch, m)) {
                    continue;
                }
                prod *= self.params[m - q.n - 1].survival(branch, t);
                if prod == 0.0 {
                    return 0.0;
                }
            }
        }
        prod
    }
}

fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

fn mu_values(q: &PmfQuery) -> Vec<f64> {
    match q.fixed_mu {
        Some(mu) => vec![mu],
        None => {
            let mean = posterior_mean(q.n, q.z, q.ybar, q.mu0);
            let sd = q.sigma / (q.n as f64 + q.z).sqrt();
            let mut rng = substream(q.seed, &[0x6d75]);
            (0..q.mu_draws)
                .map(|_| mean + sd * rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect()
        }
    }
}

fn estimate_v(q: &PmfQuery, v: i64, curves: &[MuCurves]) -> PmfEstimate {
    let w_n = base_distance(q.n, q.z, q.sigma, q.ybar, q.mu0);
    let cap = q.sigma * q.sigma / (q.n as f64 + q.z);
    let edge = (q.l - q.n) as i64;
    if v.abs() > edge {
        return PmfEstimate {
            v,
            probability: 0.0,
            std_error: 0.0,
        };
    }
    if v == 0 {
        if w_n > cap {
            return PmfEstimate {
                v,
                probability: 0.0,
                std_error: 0.0,
            };
        }
        let vals: Vec<f64> = curves
            .iter()
            .map(|c| c.survival_product(q, w_n, None))
            .collect();
        return summarize(v, &vals);
    }
    let branch = if v > 0 {
        Branch::Primary
    } else {
        Branch::Mirror
    };
    let m = q.n + v.unsigned_abs() as usize;
    let mut vals = Vec::with_capacity(curves.len() * q.t_draws);
    for (j, c) in curves.iter().enumerate() {
        let p = &c.params[m - q.n - 1];
        let mut rng = substream(q.seed, &[zigzag(v), j as u64]);
        for _ in 0..q.t_draws {
            let t = cond_distance_sample(p, branch, &mut rng);
            if t > w_n || t > cap {
                vals.push(0.0);
            } else {
                vals.push(c.survival_product(q, t, Some((branch, m))));
            }
        }
    }
    summarize(v, &vals)
}

fn summarize(v: i64, vals: &[f64]) -> PmfEstimate {
    let k = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / k;
    let var = if vals.len() > 1 {
        vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    PmfEstimate {
        v,
        probability: mean,
        std_error: (var / k).sqrt(),
    }
}

/// Monte Carlo estimate of `P(Mₙ = v | ȳ)` (or `| ȳ, μ` with `fixed_mu`).
pub fn opess_pmf(q: &PmfQuery) -> Result<PmfEstimate> {
    q.validate()?;
    let curves = mu_values(q)
        .into_iter()
        .map(|mu| MuCurves::new(q, mu))
        .collect::<Result<Vec<_>>>()?;
    Ok(estimate_v(q, q.v, &curves))
}

/// The PMF over the whole support `|v| ≤ L − n`; `q.v` is ignored.
pub fn opess_pmf_table(q: &PmfQuery, exec: Execution) -> Result<Vec<PmfEstimate>> {
    q.validate()?;
    let curves = mu_values(q)
        .into_iter()
        .map(|mu| MuCurves::new(q, mu))
        .collect::<Result<Vec<_>>>()?;
    let edge = (q.l - q.n) as i64;
    let vs: Vec<i64> = (-edge..=edge).collect();
    Ok(exec.map(vs.len(), |i| estimate_v(q, vs[i], &curves)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainMode {
    /// Future-sample mean fixed at `μn`.
    PosteriorPredictive,
    /// Future-sample mean fixed at `ȳ`.
    Bootstrap,
    /// Future-sample mean fixed at `μ0`.
    Prior,
}

impl ChainMode {
    pub fn gamma(self, n: usize, z: f64, ybar: f64, mu0: f64) -> f64 {
        match self {
            ChainMode::PosteriorPredictive => posterior_mean(n, z, ybar, mu0),
            ChainMode::Bootstrap => ybar,
            ChainMode::Prior => mu0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainCurves {
    pub w: Vec<f64>,
    pub w_tilde: Vec<f64>,
    pub realization: OpessRealization,
}

/// Deterministic distance curves when every future sample mean equals `γ`.
pub fn chain_curves(
    mode: ChainMode,
    n: usize,
    z: f64,
    sigma: f64,
    ybar: f64,
    mu0: f64,
    l: usize,
) -> Result<ChainCurves> {
    check_setting(n, z, sigma)?;
    if l <= n {
        return Err(Error::domain("L must exceed n"));
    }
    let gamma = mode.gamma(n, z, ybar, mu0);
    let nf = n as f64;
    let mu_n = posterior_mean(n, z, ybar, mu0);
    let base = base_distance(n, z, sigma, ybar, mu0);
    let mut w = vec![base];
    let mut w_tilde = vec![base];
    for m in (n + 1)..=l {
        let mf = m as f64;
        let r = mf - nf;
        let xbar = (nf * ybar + r * gamma) / mf;
        w.push((xbar - mu_n).powi(2) + c2(mf, n, z, sigma));
        let mu_m = ((nf + z) * mu_n + r * gamma) / (mf + z);
        w_tilde.push((ybar - mu_m).powi(2) + c2_tilde(mf, n, z, sigma));
    }
    let realization = sign_and_mn(&w, &w_tilde, n);
    Ok(ChainCurves {
        w,
        w_tilde,
        realization,
    })
}

fn small_setting(r: usize, n: usize, z: f64, sigma: f64, eps: f64) -> Result<SmallSetting> {
    check_setting(n, z, sigma)?;
    if r == 0 {
        return Err(Error::domain("r must be >= 1"));
    }
    let (rf, nf) = (r as f64, n as f64);
    let m = nf + rf;
    let c2n = c2(nf, n, z, sigma);
    Ok(SmallSetting {
        var_gap: (1.0 / rf + 1.0 / (nf + z)) * sigma * sigma,
        a: rf / m,
        b: eps * nf / m,
        rhs: eps * eps + c2n - c2(m, n, z, sigma),
        a_t: rf / (m + z),
        eps,
        rhs_t: eps * eps + c2n - c2_tilde(m, n, z, sigma),
    })
}

/// Pieces of `p(r) = P((aU − b)² < R)` and `p̃(r) = P((ãU + ε)² < R̃)` with
/// `U = μn − s̄ ~ N(0, var_gap)`.
struct SmallSetting {
    var_gap: f64,
    a: f64,
    b: f64,
    rhs: f64,
    a_t: f64,
    eps: f64,
    rhs_t: f64,
}

/// Threshold of `ε²` above which `p̃(r)` is positive: `c̃²_{n+r} − c_n²`.
pub fn mirror_threshold(r: usize, n: usize, z: f64, sigma: f64) -> f64 {
    let m = (n + r) as f64;
    c2_tilde(m, n, z, sigma) - c2(n as f64, n, z, sigma)
}

/// Largest `r ≤ r_max` at which `ε² + c_n² − c²_{n+r}` is positive.
pub fn r_hat(n: usize, z: f64, sigma: f64, eps: f64, r_max: usize) -> Option<usize> {
    (1..=r_max)
        .rev()
        .find(|&r| eps * eps + c2(n as f64, n, z, sigma) - c2((n + r) as f64, n, z, sigma) > 0.0)
}

/// Monte Carlo estimates of `p(r) = P(W(n+r) < W(n) | ȳ)` and
/// `p̃(r) = P(W̃(n+r) < W(n) | ȳ)` at `ȳ = μn + ε`. A non-positive right-hand
/// bound gives an exact zero.
pub fn small_mopess_probs<R: Rng + ?Sized>(
    r: usize,
    n: usize,
    z: f64,
    sigma: f64,
    epsilon: f64,
    mc: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let s = small_setting(r, n, z, sigma, epsilon)?;
    if mc == 0 {
        return Err(Error::domain("mc must be >= 1"));
    }
    let sd = s.var_gap.sqrt();
    let (mut hits, mut hits_t) = (0usize, 0usize);
    for _ in 0..mc {
        let u = sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
        if s.rhs > 0.0 && (s.a * u - s.b).powi(2) < s.rhs {
            hits += 1;
        }
        if s.rhs_t > 0.0 && (s.a_t * u + s.eps).powi(2) < s.rhs_t {
            hits_t += 1;
        }
    }
    Ok((hits as f64 / mc as f64, hits_t as f64 / mc as f64))
}

/// Exact values of the two probabilities of [`small_mopess_probs`], as
/// normal interval probabilities.
pub fn small_mopess_probs_exact(
    r: usize,
    n: usize,
    z: f64,
    sigma: f64,
    epsilon: f64,
) -> Result<(f64, f64)> {
    let s = small_setting(r, n, z, sigma, epsilon)?;
    let sd = s.var_gap.sqrt();
    let interval = |center: f64, half: f64, scale: f64| {
        normal_cdf((center + half) / (scale * sd)) - normal_cdf((center - half) / (scale * sd))
    };
    let p = if s.rhs > 0.0 {
        interval(s.b, s.rhs.sqrt(), s.a)
    } else {
        0.0
    };
    let pt = if s.rhs_t > 0.0 {
        interval(-s.eps, s.rhs_t.sqrt(), s.a_t)
    } else {
        0.0
    };
    Ok((p, pt))
}

/// Expected KL of the expanded baseline posterior from the informative one
/// when the `m` hypothetical samples are drawn with replacement from data
/// with mean `ȳ` and variance `S²`.
pub fn expected_kl_bootstrap(
    m: usize,
    n: usize,
    z: f64,
    sigma: f64,
    ybar: f64,
    mu0: f64,
    s2: f64,
) -> f64 {
    let (mf, nf) = (m as f64, n as f64);
    let w = weight(nf, z);
    let d = (1.0 - w).powi(2) * (ybar - mu0).powi(2) + s2 / mf;
    0.5 * (mf / (nf + z) + mf / (sigma * sigma) * d - 1.0 + ((nf + z) / mf).ln())
}

/// Continuous minimizer `(n+z)[1 + z²(ȳ−μ0)²/((n+z)σ²)]⁻¹` of the expected KL.
pub fn kl_optimal_m_continuous(n: usize, z: f64, sigma: f64, ybar: f64, mu0: f64) -> f64 {
    let nz = n as f64 + z;
    nz / (1.0 + z * z * (ybar - mu0).powi(2) / (nz * sigma * sigma))
}

/// Integer minimizer of the expected KL: the expected KL is
/// `½(a·m − ln m) + const` with `a = 1/m*`, so the minimum is at `⌊m*⌋` or
/// `⌈m*⌉`; ties go to the smaller value.
pub fn kl_optimal_m(n: usize, z: f64, sigma: f64, ybar: f64, mu0: f64) -> Result<usize> {
    check_setting(n, z, sigma)?;
    let ms = kl_optimal_m_continuous(n, z, sigma, ybar, mu0);
    let a = 1.0 / ms;
    let f = |m: f64| a * m - m.ln();
    let lo = ms.floor().max(1.0);
    let hi = ms.ceil().max(1.0);
    Ok(if f(hi) < f(lo) {
        hi as usize
    } else {
        lo as usize
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cond_params_examples() {
        let p = cond_dist_params(30, 20, 10.0, 1.0, 0.7, -0.3, 0.0).unwrap();
        assert!(p.c2_m < 1e-30);
        let p = cond_dist_params(27, 20, 10.0, 1.0, 0.4, 0.4, 0.4).unwrap();
        assert_eq!((p.lambda_m, p.delta_m), (0.0, 0.0));
        let p = cond_dist_params(25, 20, 10.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(p.tau_m, 0.008, epsilon = 1e-16);
        assert!(p.kappa_m <= p.tau_m);
        assert!(cond_dist_params(20, 20, 10.0, 1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn cond_params_match_direct_simulation() {
        // Simulate chain means directly and compare with the χ² form.
        let (n, z, sigma, ybar, mu, mu0) = (20, 10.0, 1.3, 0.35, 0.1, -0.2);
        let m = 27;
        let p = cond_dist_params(m, n, z, sigma, ybar, mu, mu0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let reps = 100_000;
        let (nf, mf) = (n as f64, m as f64);
        let r = mf - nf;
        let mu_n = posterior_mean(n, z, ybar, mu0);
        let (mut sw, mut swt) = (0.0, 0.0);
        for _ in 0..reps {
            let s1 = mu + sigma / r.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal);
            let s2 = mu + sigma / r.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal);
            let xbar = (nf * ybar + r * s1) / mf;
            sw += (xbar - mu_n).powi(2) + c2(mf, n, z, sigma);
            let mu_m = (nf * ybar + r * s2 + z * mu0) / (mf + z);
            swt += (ybar - mu_m).powi(2) + c2_tilde(mf, n, z, sigma);
        }
        let mean_w = p.tau_m + p.lambda_m + p.c2_m;
        let mean_wt = p.kappa_m + p.delta_m + p.c2_tilde_m;
        assert!((sw / reps as f64 / mean_w - 1.0).abs() < 0.01);
        assert!((swt / reps as f64 / mean_wt - 1.0).abs() < 0.01);
    }

    #[test]
    fn cond_sample_moments_and_support() {
        let p = cond_dist_params(26, 20, 10.0, 1.0, 0.3, 0.1, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for branch in [Branch::Primary, Branch::Mirror] {
            let (scale, nc, shift) = p.branch(branch);
            let draws: Vec<f64> = (0..100_000)
                .map(|_| cond_distance_sample(&p, branch, &mut rng))
                .collect();
            assert!(draws.iter().all(|&d| d >= shift));
            let mean = draws.iter().sum::<f64>() / draws.len() as f64;
            let want = scale * (1.0 + nc / scale) + shift;
            assert!((mean / want - 1.0).abs() < 0.01, "{mean} vs {want}");
        }
    }

    #[test]
    fn branches_uncorrelated_on_disjoint_streams() {
        let p = cond_dist_params(28, 20, 10.0, 1.0, 0.2, 0.2, 0.0).unwrap();
        let mut a = substream(5, &[1]);
        let mut b = substream(5, &[2]);
        let k = 100_000;
        let xs: Vec<f64> = (0..k)
            .map(|_| cond_distance_sample(&p, Branch::Primary, &mut a))
            .collect();
        let ys: Vec<f64> = (0..k)
            .map(|_| cond_distance_sample(&p, Branch::Mirror, &mut b))
            .collect();
        let mx = xs.iter().sum::<f64>() / k as f64;
        let my = ys.iter().sum::<f64>() / k as f64;
        let cov: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - mx) * (y - my))
            .sum::<f64>();
        let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        assert!((cov / (vx * vy).sqrt()).abs() < 0.01);
    }

    #[test]
    fn marginal_params_examples() {
        let p = marginal_dist_params(30, 20, 10.0, 1.0, 0.3, 0.0).unwrap();
        assert_abs_diff_eq!(p.lambda, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.delta, 4.0 / 400.0, epsilon = 1e-15);
        let p = marginal_dist_params(30, 20, 10.0, 1.0, 0.5, 0.5).unwrap();
        assert_eq!((p.lambda, p.delta), (0.0, 0.0));
        let p = marginal_dist_params(1_000_000, 20, 10.0, 1.0, 0.1, 0.0).unwrap();
        assert!((p.tau_m / (1.0 / 30.0) - 1.0).abs() < 1e-4);
        assert!((p.kappa_m / (1.0 / 30.0) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn truncation_examples() {
        assert_eq!(
            truncation_bounds(0.001, 20, 10.0, 1.0),
            (Some(44), Some(21))
        );
        assert_eq!(truncation_bounds(0.034, 20, 10.0, 1.0), (None, None));
        // brute force the definitions on a grid of t
        for i in 0..200 {
            let t = i as f64 * 1.6e-4;
            let (m, mt) = truncation_bounds(t, 20, 10.0, 1.0);
            if let Some(m) = m {
                assert!(c2(m as f64, 20, 10.0, 1.0) > t);
                assert!(m == 30 || c2((m - 1) as f64, 20, 10.0, 1.0) <= t);
            }
            if let Some(mt) = mt {
                assert!(c2_tilde(mt as f64, 20, 10.0, 1.0) > t);
                assert!(mt == 21 || c2_tilde((mt - 1) as f64, 20, 10.0, 1.0) <= t);
            }
        }
    }

    fn query(ybar: f64, mu: Option<f64>) -> PmfQuery {
        PmfQuery {
            v: 0,
            ybar,
            n: 20,
            z: 10.0,
            sigma: 1.0,
            mu0: 0.0,
            mu_draws: 1,
            t_draws: 400,
            fixed_mu: mu,
            l: 120,
            seed: 3,
        }
    }

    #[test]
    fn pmf_zero_mass_when_base_distance_exceeds_cap() {
        // W(n) > σ²/(n+z) once (ȳ − μn)² is large
        let q = query(2.0, None);
        assert!(base_distance(20, 10.0, 1.0, 2.0, 0.0) > 1.0 / 30.0);
        assert_eq!(opess_pmf(&q).unwrap().probability, 0.0);
    }

    #[test]
    fn pmf_sums_to_one() {
        let q = query(0.0, Some(0.0));
        let table = opess_pmf_table(&q, Execution::Auto).unwrap();
        let total: f64 = table.iter().map(|e| e.probability).sum();
        let se: f64 = table
            .iter()
            .map(|e| e.std_error.powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(
            (total - 1.0).abs() < 3.0 * se + 1e-3,
            "total {total} se {se}"
        );
    }

    #[test]
    fn truncated_product_equals_full_product() {
        let q = query(0.2, Some(0.1));
        let c = MuCurves::new(&q, 0.1).unwrap();
        for t in [1e-4, 3e-3, 0.02, 0.033] {
            let full: f64 = c
                .params
                .iter()
                .map(|p| p.survival(Branch::Primary, t) * p.survival(Branch::Mirror, t))
                .product();
            let trunc = c.survival_product(&q, t, None);
            assert!((full - trunc).abs() <= 1e-14, "t={t}: {full} vs {trunc}");
        }
    }

    #[test]
    fn chain_curve_examples() {
        for mode in [ChainMode::Prior, ChainMode::PosteriorPredictive] {
            let c = chain_curves(mode, 20, 10.0, 1.0, 0.4, 0.0, 200).unwrap();
            assert!(c.realization.m_n >= 10);
        }
        let c = chain_curves(ChainMode::Prior, 20, 10.0, 1.0, 0.4, 0.0, 200).unwrap();
        assert_eq!(c.realization.m_n, 10);
        let pp =
            chain_curves(ChainMode::PosteriorPredictive, 20, 10.0, 1.0, 0.4, 0.0, 200).unwrap();
        assert!(pp.w.iter().zip(&pp.w_tilde).skip(1).all(|(w, wt)| wt > w));
        let b = chain_curves(ChainMode::Bootstrap, 20, 10.0, 1.0, 1.5, 0.0, 2000).unwrap();
        assert!(b.realization.m_n < 0);
    }

    #[test]
    fn small_mopess_examples() {
        let (n, z, sigma) = (20, 4.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, pt) = small_mopess_probs(2, n, z, sigma, 1e-5, 10_000, &mut rng).unwrap();
        assert_eq!(pt, 0.0);
        let th = mirror_threshold(1, n, z, sigma);
        assert!(th > 1e-4 && th < 2e-4);
        let below = small_mopess_probs_exact(1, n, z, sigma, (th * (1.0 - 1e-6)).sqrt()).unwrap();
        let above = small_mopess_probs_exact(1, n, z, sigma, (th * 1.5).sqrt()).unwrap();
        assert_eq!(below.1, 0.0);
        assert!(above.1 > 0.0);

        let eps = 0.01;
        let rh = r_hat(n, z, sigma, eps, 10_000).unwrap();
        let (p, _) = small_mopess_probs_exact(rh + 1, n, z, sigma, eps).unwrap();
        assert_eq!(p, 0.0);
        assert!(small_mopess_probs_exact(rh, n, z, sigma, eps).unwrap().0 > 0.0);
    }

    #[test]
    fn small_mopess_mc_matches_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (r, eps) in [(1, 0.05), (3, 0.02), (6, 0.1), (2, 0.0)] {
            let (p, pt) = small_mopess_probs(r, 20, 4.0, 1.0, eps, 200_000, &mut rng).unwrap();
            let (ep, ept) = small_mopess_probs_exact(r, 20, 4.0, 1.0, eps).unwrap();
            for (a, b) in [(p, ep), (pt, ept)] {
                let se = (b * (1.0 - b) / 200_000.0).sqrt();
                assert!(
                    (a - b).abs() <= 4.0 * se + 1e-12,
                    "r={r} eps={eps}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn kl_optimum_examples() {
        assert_eq!(kl_optimal_m(20, 10.0, 1.0, 0.3, 0.3).unwrap(), 30);
        let d = (1.0f64 / 20.0 + 1.0 / 10.0).sqrt();
        assert_eq!(kl_optimal_m(20, 10.0, 1.0, d, 0.0).unwrap(), 20);
        assert_abs_diff_eq!(
            kl_optimal_m_continuous(20, 10.0, 1.0, d, 0.0),
            20.0,
            epsilon = 1e-12
        );
        assert!(kl_optimal_m(20, 10.0, 1.0, 3.0 * d, 0.0).unwrap() < 20);
    }
}
