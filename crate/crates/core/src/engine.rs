//! Monte Carlo estimation of the observed prior effective sample size.
//!
//! For each realization a parameter `θ*` is drawn from the informative
//! posterior on the observed data. Two independent families of future
//! chains are generated at `θ*`. For every candidate size `m` the engine
//! compares the baseline posterior on `y ∪ x^(m)` with the informative
//! posterior on `y` (curve `W`), and the baseline posterior on `y` with the
//! informative posterior on `y ∪ x̃^(m)` (curve `W̃`). The better of the two
//! minima decides the sign and magnitude of `Mₙ`.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::distances::{w2sq, w2sq_from_quantiles};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::models::{
    expanded_posterior, posterior_from_stats, sample_chain_stats, sample_theta,
    BetaBernoulliModelSpec, Dataset, FutureChains, ModelSpec, Posterior, SufficientStats, Theta,
};
use crate::numerics::{clustered_gauss_legendre, BetaFunctions, QuadratureRule};
use crate::streams::{Branch, RealizationStreams};

pub const DEFAULT_QUADRATURE_NODES: usize = 256;
pub const DEFAULT_REALIZATIONS: usize = 2000;
/// Fraction of realizations at `|m_n| = L − n` above which results are flagged.
pub const BOUNDARY_WARNING_FRACTION: f64 = 0.01;

/// `n + max(10·⌈z⌉, 50)`.
pub fn default_l(n: usize, nominal_epss: f64) -> usize {
    let z = if nominal_epss.is_finite() {
        nominal_epss.max(0.0).ceil() as usize
    } else {
        0
    };
    n + (10 * z).max(50)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpessProblem {
    pub spec: ModelSpec,
    pub data: Dataset,
    /// Largest candidate sample size.
    pub l: usize,
    /// Number of Monte Carlo realizations.
    pub s: usize,
    pub seed: u64,
    /// Replaces the posterior draw of `θ*` with a fixed value.
    pub forced_theta: Option<Theta>,
    pub quadrature_nodes: usize,
}

impl OpessProblem {
    pub fn new(spec: ModelSpec, data: Dataset) -> Self {
        let l = default_l(data.len(), spec.nominal_epss());
        Self {
            spec,
            data,
            l,
            s: DEFAULT_REALIZATIONS,
            seed: 0,
            forced_theta: None,
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
        }
    }

    pub fn with_l(mut self, l: usize) -> Self {
        self.l = l;
        self
    }

    pub fn with_s(mut self, s: usize) -> Self {
        self.s = s;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_forced_theta(mut self, theta: Theta) -> Self {
        self.forced_theta = Some(theta);
        self
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.spec.check_dataset(&self.data)?;
        if self.data.is_empty() {
            return Err(Error::domain("dataset is empty"));
        }
        if self.l <= self.n() {
            return Err(Error::config(
                "L",
                format!("L ({}) must exceed n ({})", self.l, self.n()),
            ));
        }
        if self.s == 0 {
            return Err(Error::config("S", "S must be >= 1"));
        }
        if self.quadrature_nodes < 2 {
            return Err(Error::config(
                "quadrature_nodes",
                "quadrature_nodes must be >= 2",
            ));
        }
        Ok(())
    }

    pub fn prepare(&self) -> Result<PreparedProblem> {
        self.prepare_with_tables(None)
    }

    /// Like [`prepare`](Self::prepare), reusing Beta distance tables built
    /// for another dataset with the same size and success count.
    pub fn prepare_with_tables(&self, tables: Option<Arc<BetaTables>>) -> Result<PreparedProblem> {
        self.validate()?;
        let n = self.n();
        let stats = SufficientStats::of(&self.data);
        let informative = posterior_from_stats(&self.spec, &stats, false)?;
        let baseline = posterior_from_stats(&self.spec, &stats, true)?;
        let rule = Arc::new(clustered_gauss_legendre(self.quadrature_nodes));
        let evaluator = match &self.spec {
            ModelSpec::BetaBernoulli(b) => {
                let successes = match stats {
                    SufficientStats::Scalar { sum, .. } => sum.round() as usize,
                    SufficientStats::Regression { .. } => unreachable!("checked by check_dataset"),
                };
                let reusable =
                    tables.filter(|t| t.matches(b, n, successes, self.l - n, rule.len()));
                let t = match reusable {
                    Some(t) => t,
                    None => Arc::new(BetaTables::new(b, n, successes, self.l - n, rule.clone())?),
                };
                Evaluator::Beta(t)
            }
            _ => Evaluator::Closed,
        };
        let base_distance = match &evaluator {
            Evaluator::Beta(t) => t.base_distance(),
            Evaluator::Closed => w2sq(&baseline, &informative, &rule)?.value,
        };
        Ok(PreparedProblem {
            problem: self.clone(),
            n,
            stats,
            informative,
            baseline,
            base_distance,
            rule,
            evaluator,
        })
    }
}

/// Lazily filled table of Beta W₂² values indexed by chain length `r` and
/// chain success count `k`.
///
/// The primary entry compares `Beta(1+s+k, 1+n−s+r−k)` with the informative
/// posterior `Beta(α+s, β+n−s)`; the mirror entry compares
/// `Beta(α+s+k, β+n−s+r−k)` with the baseline `Beta(1+s, 1+n−s)`.
#[derive(Debug)]
pub struct BetaTables {
    alpha: f64,
    beta: f64,
    n: usize,
    successes: usize,
    max_r: usize,
    rule: Arc<QuadratureRule>,
    informative_q: Vec<f64>,
    baseline_q: Vec<f64>,
    base_distance: f64,
    primary: Vec<Vec<OnceLock<f64>>>,
    mirror: Vec<Vec<OnceLock<f64>>>,
}

impl BetaTables {
    pub fn new(
        spec: &BetaBernoulliModelSpec,
        n: usize,
        successes: usize,
        max_r: usize,
        rule: Arc<QuadratureRule>,
    ) -> Result<Self> {
        if successes > n {
            return Err(Error::domain("successes exceed n"));
        }
        let f = (n - successes) as f64;
        let s = successes as f64;
        let informative_q =
            BetaFunctions::new(spec.alpha + s, spec.beta + f)?.quantiles(&rule.nodes)?;
        let baseline_q = BetaFunctions::new(1.0 + s, 1.0 + f)?.quantiles(&rule.nodes)?;
        let base_distance = w2sq_from_quantiles(&baseline_q, &informative_q, &rule.weights);
        let table = || {
            (1..=max_r)
                .map(|r| (0..=r).map(|_| OnceLock::new()).collect())
                .collect()
        };
        Ok(Self {
            alpha: spec.alpha,
            beta: spec.beta,
            n,
            successes,
            max_r,
            rule,
            informative_q,
            baseline_q,
            base_distance,
            primary: table(),
            mirror: table(),
        })
    }

    pub fn matches(
        &self,
        spec: &BetaBernoulliModelSpec,
        n: usize,
        successes: usize,
        max_r: usize,
        nodes: usize,
    ) -> bool {
        self.alpha == spec.alpha
            && self.beta == spec.beta
            && self.n == n
            && self.successes == successes
            && self.max_r >= max_r
            && self.rule.len() == nodes
    }

    /// Distance at `m = n`.
    pub fn base_distance(&self) -> f64 {
        self.base_distance
    }

    pub fn get(&self, branch: Branch, r: usize, k: usize) -> Result<f64> {
        if r == 0 || r > self.max_r || k > r {
            return Err(Error::domain(format!(
                "table index (r={r}, k={k}) out of range"
            )));
        }
        let cell = match branch {
            Branch::Primary => &self.primary[r - 1][k],
            Branch::Mirror => &self.mirror[r - 1][k],
        };
        if let Some(v) = cell.get() {
            return Ok(*v);
        }
        let s = (self.successes + k) as f64;
        let f = (self.n - self.successes + r - k) as f64;
        let v = match branch {
            Branch::Primary => {
                let q = BetaFunctions::new(1.0 + s, 1.0 + f)?.quantiles(&self.rule.nodes)?;
                w2sq_from_quantiles(&q, &self.informative_q, &self.rule.weights)
            }
            Branch::Mirror => {
                let q = BetaFunctions::new(self.alpha + s, self.beta + f)?
                    .quantiles(&self.rule.nodes)?;
                w2sq_from_quantiles(&self.baseline_q, &q, &self.rule.weights)
            }
        };
        // A concurrent fill computes the same value.
        let _ = cell.set(v);
        Ok(v)
    }
}

#[derive(Debug)]
enum Evaluator {
    Closed,
    Beta(Arc<BetaTables>),
}

/// Both distance curves of one realization, indexed from `m = n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Curves {
    pub theta: Theta,
    pub w: Vec<f64>,
    pub w_tilde: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpessRealization {
    pub m_n: i64,
    pub sign: i8,
    pub min_distance: f64,
    pub argmin_m: usize,
}

/// Sign rule and `Mₙ` for curves indexed `m = n, n+1, ...`.
///
/// Ties go to the smallest `m`, and to the primary branch between branches.
pub fn sign_and_mn(w: &[f64], w_tilde: &[f64], n: usize) -> OpessRealization {
    let (iw, dw) = argmin(w);
    let (it, dt) = argmin(w_tilde);
    if dw <= dt {
        OpessRealization {
            m_n: iw as i64,
            sign: 1,
            min_distance: dw,
            argmin_m: n + iw,
        }
    } else {
        OpessRealization {
            m_n: -(it as i64),
            sign: -1,
            min_distance: dt,
            argmin_m: n + it,
        }
    }
}

fn argmin(v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, &x) in v.iter().enumerate() {
        if x < best.1 {
            best = (i, x);
        }
    }
    best
}

#[derive(Debug)]
pub struct PreparedProblem {
    problem: OpessProblem,
    n: usize,
    stats: SufficientStats,
    informative: Posterior,
    baseline: Posterior,
    base_distance: f64,
    rule: Arc<QuadratureRule>,
    evaluator: Evaluator,
}

impl PreparedProblem {
    pub fn problem(&self) -> &OpessProblem {
        &self.problem
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.problem.l
    }

    /// Informative posterior on the observed data.
    pub fn informative(&self) -> &Posterior {
        &self.informative
    }

    /// Baseline posterior on the observed data.
    pub fn baseline(&self) -> &Posterior {
        &self.baseline
    }

    /// Shared `W(n) = W̃(n)`.
    pub fn base_distance(&self) -> f64 {
        self.base_distance
    }

    pub fn beta_tables(&self) -> Option<Arc<BetaTables>> {
        match &self.evaluator {
            Evaluator::Beta(t) => Some(t.clone()),
            Evaluator::Closed => None,
        }
    }

    fn draw_theta(&self, streams: &RealizationStreams) -> Result<Theta> {
        match self.problem.forced_theta {
            Some(t) => Ok(t),
            None => sample_theta(&self.informative, &mut streams.theta()),
        }
    }

    fn branch_distance(&self, branch: Branch, chain: &SufficientStats) -> Result<f64> {
        if let Evaluator::Beta(t) = &self.evaluator {
            if let SufficientStats::Scalar { count, sum } = *chain {
                return t.get(branch, count, sum.round() as usize);
            }
        }
        let stats = self.stats.combine(chain)?;
        let d = match branch {
            Branch::Primary => {
                let expanded = posterior_from_stats(&self.problem.spec, &stats, true)?;
                w2sq(&expanded, &self.informative, &self.rule)?
            }
            Branch::Mirror => {
                let expanded = posterior_from_stats(&self.problem.spec, &stats, false)?;
                w2sq(&self.baseline, &expanded, &self.rule)?
            }
        };
        Ok(d.value)
    }

    /// Distance curves of realization `index`, drawn from its substreams.
    pub fn realization_curves(&self, index: usize) -> Result<Curves> {
        let streams = RealizationStreams::new(self.problem.seed, index as u64);
        let theta = self.draw_theta(&streams)?;
        let len = self.l() - self.n + 1;
        let mut w = Vec::with_capacity(len);
        let mut w_tilde = Vec::with_capacity(len);
        w.push(self.base_distance);
        w_tilde.push(self.base_distance);
        for m in (self.n + 1)..=self.l() {
            let r = m - self.n;
            for (branch, curve) in [(Branch::Primary, &mut w), (Branch::Mirror, &mut w_tilde)] {
                let chain = sample_chain_stats(
                    &self.problem.spec,
                    &theta,
                    r,
                    &mut streams.chain(branch, m),
                )?;
                curve.push(self.branch_distance(branch, &chain)?);
            }
        }
        Ok(Curves { theta, w, w_tilde })
    }

    /// Distance curves for explicitly materialized chains.
    pub fn distance_curves(&self, chains: &FutureChains) -> Result<(Vec<f64>, Vec<f64>)> {
        if chains.n != self.n || chains.l != self.l() {
            return Err(Error::domain("future chains do not match the problem"));
        }
        let spec = &self.problem.spec;
        let mut w = vec![self.base_distance];
        let mut w_tilde = vec![self.base_distance];
        for (x, xt) in chains.primary.iter().zip(&chains.mirror) {
            let p = expanded_posterior(spec, &self.stats, x, true)?;
            w.push(w2sq(&p, &self.informative, &self.rule)?.value);
            let q = expanded_posterior(spec, &self.stats, xt, false)?;
            w_tilde.push(w2sq(&self.baseline, &q, &self.rule)?.value);
        }
        Ok((w, w_tilde))
    }

    pub fn realization(&self, index: usize) -> Result<OpessRealization> {
        let c = self.realization_curves(index)?;
        if let Some(bad) = c.w.iter().chain(&c.w_tilde).find(|d| !d.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite distance {bad} in realization {index}"
            )));
        }
        Ok(sign_and_mn(&c.w, &c.w_tilde, self.n))
    }

    pub fn realizations(&self, exec: Execution) -> Result<Vec<OpessRealization>> {
        exec.map(self.problem.s, |j| self.realization(j))
            .into_iter()
            .collect()
    }

    pub fn run(&self, exec: Execution) -> Result<OpessResult> {
        let reals = self.realizations(exec)?;
        Ok(OpessResult::from_realizations(
            &reals,
            RunMetadata {
                seed: self.problem.seed,
                s: self.problem.s,
                l: self.l(),
                n: self.n,
            },
        ))
    }
}

pub fn opess_realization(problem: &OpessProblem, index: usize) -> Result<OpessRealization> {
    if index >= problem.s {
        return Err(Error::domain(format!(
            "realization index {index} out of range for S = {}",
            problem.s
        )));
    }
    problem.prepare()?.realization(index)
}

pub fn mopess(problem: &OpessProblem) -> Result<OpessResult> {
    mopess_with(problem, Execution::Auto)
}

pub fn mopess_with(problem: &OpessProblem, exec: Execution) -> Result<OpessResult> {
    problem.prepare()?.run(exec)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub s: usize,
    pub l: usize,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpessResult {
    pub mopess: f64,
    pub quantiles: Quantiles,
    pub pmf: BTreeMap<i64, f64>,
    pub counts: BTreeMap<i64, u64>,
    pub mean_min_distance: f64,
    pub boundary_fraction: f64,
    pub warning: bool,
    pub metadata: RunMetadata,
}

impl OpessResult {
    pub fn from_realizations(reals: &[OpessRealization], metadata: RunMetadata) -> Self {
        let s = reals.len();
        let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
        let mut total: i64 = 0;
        let mut dist = 0.0;
        let mut boundary = 0usize;
        let edge = metadata.l.saturating_sub(metadata.n) as i64;
        for r in reals {
            *counts.entry(r.m_n).or_default() += 1;
            total += r.m_n;
            dist += r.min_distance;
            if r.m_n.abs() == edge {
                boundary += 1;
            }
        }
        let sf = s.max(1) as f64;
        let pmf = counts.iter().map(|(&v, &c)| (v, c as f64 / sf)).collect();
        let boundary_fraction = boundary as f64 / sf;
        Self {
            mopess: total as f64 / sf,
            quantiles: Quantiles {
                q05: count_quantile(&counts, s, 0.05),
                q50: count_quantile(&counts, s, 0.5),
                q95: count_quantile(&counts, s, 0.95),
            },
            pmf,
            counts,
            mean_min_distance: dist / sf,
            boundary_fraction,
            warning: boundary_fraction > BOUNDARY_WARNING_FRACTION,
            metadata,
        }
    }

    /// Standard error of the MOPESS estimate.
    pub fn standard_error(&self) -> f64 {
        let s = self.metadata.s as f64;
        if s < 2.0 {
            return f64::NAN;
        }
        let var = self
            .counts
            .iter()
            .map(|(&v, &c)| c as f64 * (v as f64 - self.mopess).powi(2))
            .sum::<f64>()
            / (s - 1.0);
        (var / s).sqrt()
    }
}

/// Smallest value whose empirical CDF reaches `p`.
fn count_quantile(counts: &BTreeMap<i64, u64>, total: usize, p: f64) -> f64 {
    let target = p * total as f64;
    let mut cum = 0u64;
    for (&v, &c) in counts {
        cum += c;
        if cum as f64 >= target - 1e-9 {
            return v as f64;
        }
    }
    counts.keys().next_back().map_or(f64::NAN, |&v| v as f64)
}
