//! Replication studies: simulate datasets, run the engine on each and
//! summarize the results as CSV-ready rows.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::engine::{BetaTables, OpessProblem, OpessResult};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::models::{
    BetaBernoulliModelSpec, Dataset, GaussianModelSpec, ModelSpec, PriorVariance,
    RegressionModelSpec, Theta,
};
use crate::numerics::Spd2x2;
use crate::streams::{derive_seed, substream};
use crate::theory::{opess_pmf_table, PmfQuery};

/// Ones and zeros of the sex-ratio population.
pub const SEX_RATIO_ONES: usize = 437;
pub const SEX_RATIO_ZEROS: usize = 543;

const DATA_STREAM: u64 = 0xDA7A;
const ENGINE_STREAM: u64 = 0xE6;
const THEORY_STREAM: u64 = 0x7E0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StudyId {
    #[serde(rename = "gaussian_fig1_2")]
    GaussianFig12,
    #[serde(rename = "gaussian_conditional_fig3")]
    GaussianConditionalFig3,
    #[serde(rename = "beta_fig4")]
    BetaFig4,
    #[serde(rename = "regression_fig5_6")]
    RegressionFig56,
    #[serde(rename = "small_mopess_appE")]
    SmallMopessAppE,
}

impl StudyId {
    pub const ALL: [StudyId; 5] = [
        StudyId::GaussianFig12,
        StudyId::GaussianConditionalFig3,
        StudyId::BetaFig4,
        StudyId::RegressionFig56,
        StudyId::SmallMopessAppE,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StudyId::GaussianFig12 => "gaussian_fig1_2",
            StudyId::GaussianConditionalFig3 => "gaussian_conditional_fig3",
            StudyId::BetaFig4 => "beta_fig4",
            StudyId::RegressionFig56 => "regression_fig5_6",
            StudyId::SmallMopessAppE => "small_mopess_appE",
        }
    }
}

impl fmt::Display for StudyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StudyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StudyId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::config("study_id", format!("unknown study `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Desk,
    Paper,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(Error::config("scale", format!("unknown scale `{s}`"))),
        }
    }
}

/// Optional changes to a study's model and data-generating settings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_mean: Option<f64>,
    /// Nominal prior sample size `z`; sets the prior variance to `σ²/z`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Monte Carlo draws per support point of the theoretical PMF.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory_draws: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub study_id: StudyId,
    pub n_datasets: usize,
    #[serde(rename = "S")]
    pub s: usize,
    /// Largest candidate sample size; the engine default when absent.
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub overrides: ModelOverrides,
}

impl StudyConfig {
    pub fn desk(study_id: StudyId) -> Self {
        let (n_datasets, s) = match study_id {
            StudyId::GaussianFig12 | StudyId::SmallMopessAppE => (50, 2000),
            StudyId::GaussianConditionalFig3 => (1, 10_000),
            StudyId::BetaFig4 => (100, 2000),
            StudyId::RegressionFig56 => (100, 1000),
        };
        Self {
            study_id,
            n_datasets,
            s,
            l: None,
            seed: 1,
            overrides: ModelOverrides::default(),
        }
    }

    pub fn paper(study_id: StudyId) -> Self {
        let n_datasets = match study_id {
            StudyId::GaussianFig12 | StudyId::SmallMopessAppE => 300,
            StudyId::GaussianConditionalFig3 => 1,
            StudyId::BetaFig4 | StudyId::RegressionFig56 => 1000,
        };
        Self {
            n_datasets,
            s: 10_000,
            ..Self::desk(study_id)
        }
    }

    pub fn at_scale(study_id: StudyId, scale: Scale) -> Self {
        match scale {
            Scale::Desk => Self::desk(study_id),
            Scale::Paper => Self::paper(study_id),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_datasets == 0 {
            return Err(Error::config("n_datasets", "n_datasets must be >= 1"));
        }
        if self.s == 0 {
            return Err(Error::config("S", "S must be >= 1"));
        }
        if self.overrides.n == Some(0) {
            return Err(Error::config("overrides.n", "n must be >= 1"));
        }
        if let Some(z) = self.overrides.z {
            if !(z > 0.0 && z.is_finite()) {
                return Err(Error::config("overrides.z", "z must be > 0"));
            }
        }
        Ok(())
    }

    fn n(&self) -> usize {
        self.overrides.n.unwrap_or(20)
    }

    fn dataset_seed(&self, id: usize) -> u64 {
        derive_seed(self.seed, &[DATA_STREAM, id as u64])
    }

    fn engine_seed(&self, id: usize) -> u64 {
        derive_seed(self.seed, &[ENGINE_STREAM, id as u64])
    }

    fn gaussian_spec(&self, default_z: f64) -> GaussianModelSpec {
        let o = &self.overrides;
        let sigma2 = o.sigma2.unwrap_or(1.0);
        let z = o.z.unwrap_or(default_z);
        GaussianModelSpec::new(sigma2, o.prior_mean.unwrap_or(0.0), sigma2 / z)
    }

    fn problem(&self, spec: ModelSpec, data: Dataset, id: usize) -> OpessProblem {
        let mut p = OpessProblem::new(spec, data)
            .with_s(self.s)
            .with_seed(self.engine_seed(id));
        if let Some(l) = self.l {
            p = p.with_l(l);
        }
        p
    }
}

/// One dataset's summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub dataset_id: usize,
    /// `ȳ`, or `‖β̂ − η0‖₂` for regression.
    pub xstat: f64,
    /// Per-coefficient discrepancies `β̂ − η0` (regression only).
    pub components: Option<[f64; 2]>,
    pub mopess: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub mean_min_distance: f64,
    pub boundary_fraction: f64,
}

impl StudyRow {
    fn new(dataset_id: usize, xstat: f64, components: Option<[f64; 2]>, r: &OpessResult) -> Self {
        Self {
            dataset_id,
            xstat,
            components,
            mopess: r.mopess,
            q05: r.quantiles.q05,
            q50: r.quantiles.q50,
            q95: r.quantiles.q95,
            mean_min_distance: r.mean_min_distance,
            boundary_fraction: r.boundary_fraction,
        }
    }
}

fn sort_rows(rows: &mut [StudyRow]) {
    rows.sort_by(|a, b| {
        a.xstat
            .total_cmp(&b.xstat)
            .then(a.dataset_id.cmp(&b.dataset_id))
    });
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub m_n: i64,
    pub count: u64,
    pub frequency: f64,
    pub theory_pmf: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub rows: Vec<HistogramRow>,
}

impl Histogram {
    pub fn from_result(r: &OpessResult) -> Self {
        let total = r.metadata.s.max(1) as f64;
        Self {
            rows: r
                .counts
                .iter()
                .map(|(&m_n, &count)| HistogramRow {
                    m_n,
                    count,
                    frequency: count as f64 / total,
                    theory_pmf: None,
                })
                .collect(),
        }
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().map(|r| r.count).sum()
    }

    pub fn mean(&self) -> f64 {
        let total = self.total().max(1) as f64;
        self.rows
            .iter()
            .map(|r| r.m_n as f64 * r.count as f64)
            .sum::<f64>()
            / total
    }

    pub fn has_theory(&self) -> bool {
        self.rows.iter().any(|r| r.theory_pmf.is_some())
    }
}

/// Rows of a study together with an optional histogram of `Mₙ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyOutput {
    pub rows: Vec<StudyRow>,
    pub histogram: Option<Histogram>,
}

fn run_gaussian_like(
    cfg: &StudyConfig,
    default_z: f64,
    exec: Execution,
) -> Result<Vec<(StudyRow, OpessResult)>> {
    cfg.validate()?;
    let spec = cfg.gaussian_spec(default_z);
    let sd = spec.sigma2.sqrt();
    let n = cfg.n();
    (0..cfg.n_datasets)
        .map(|id| {
            let mut rng = substream(cfg.dataset_seed(id), &[]);
            let data: Vec<f64> = (0..n)
                .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let ybar = data.iter().sum::<f64>() / n as f64;
            let result = cfg
                .problem(ModelSpec::Gaussian(spec.clone()), Dataset::Scalar(data), id)
                .prepare()?
                .run(exec)?;
            Ok((StudyRow::new(id, ybar, None, &result), result))
        })
        .collect()
}

/// Datasets of `n` draws from `N(0, σ²)` with a `N(0, σ²/10)` prior.
pub fn run_gaussian_study(cfg: &StudyConfig, exec: Execution) -> Result<Vec<StudyRow>> {
    let mut rows: Vec<StudyRow> = run_gaussian_like(cfg, 10.0, exec)?
        .into_iter()
        .map(|(r, _)| r)
        .collect();
    sort_rows(&mut rows);
    Ok(rows)
}

/// Summary of a run with `μ` held fixed in every chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalStudy {
    pub ybar: f64,
    pub mu: f64,
    pub histogram: Histogram,
    pub empirical_mean: f64,
    pub empirical_std_error: f64,
    pub theory_mean: f64,
    pub total_variation: f64,
}

/// Engine histogram of `Mₙ` given `ȳ` and a fixed `μ`, paired with the
/// theoretical PMF. The dataset is `n` copies of `ȳ`.
pub fn run_conditional_study(
    cfg: &StudyConfig,
    ybar: f64,
    mu: f64,
    exec: Execution,
) -> Result<ConditionalStudy> {
    cfg.validate()?;
    let spec = cfg.gaussian_spec(10.0);
    let n = cfg.n();
    let problem = cfg
        .problem(
            ModelSpec::Gaussian(spec.clone()),
            Dataset::Scalar(vec![ybar; n]),
            0,
        )
        .with_forced_theta(Theta::Scalar(mu));
    let prepared = problem.prepare()?;
    let result = prepared.run(exec)?;
    let query = PmfQuery {
        v: 0,
        ybar,
        n,
        z: spec.z(),
        sigma: spec.sigma2.sqrt(),
        mu0: spec.prior_mean,
        mu_draws: 1,
        t_draws: cfg.overrides.theory_draws.unwrap_or(10_000),
        fixed_mu: Some(mu),
        l: prepared.l(),
        seed: derive_seed(cfg.seed, &[THEORY_STREAM]),
    };
    let theory = opess_pmf_table(&query, exec)?;
    let empirical = Histogram::from_result(&result);
    let observed: BTreeMap<i64, (u64, f64)> = empirical
        .rows
        .iter()
        .map(|r| (r.m_n, (r.count, r.frequency)))
        .collect();
    let mut rows = Vec::new();
    let mut tv = 0.0;
    let mut theory_mean = 0.0;
    for est in &theory {
        let (count, frequency) = observed.get(&est.v).copied().unwrap_or((0, 0.0));
        tv += (est.probability - frequency).abs();
        theory_mean += est.v as f64 * est.probability;
        if count > 0 || est.probability > 0.0 {
            rows.push(HistogramRow {
                m_n: est.v,
                count,
                frequency,
                theory_pmf: Some(est.probability),
            });
        }
    }
    let theory_mass: f64 = theory.iter().map(|e| e.probability).sum();
    Ok(ConditionalStudy {
        ybar,
        mu,
        histogram: Histogram { rows },
        empirical_mean: result.mopess,
        empirical_std_error: result.standard_error(),
        theory_mean: theory_mean / theory_mass,
        total_variation: 0.5 * tv,
    })
}

/// Resamples of size `n` from the sex-ratio population with a `Beta(5, 5)`
/// prior.
pub fn run_beta_study(cfg: &StudyConfig, exec: Execution) -> Result<Vec<StudyRow>> {
    cfg.validate()?;
    let o = &cfg.overrides;
    let spec = BetaBernoulliModelSpec {
        alpha: o.alpha.unwrap_or(5.0),
        beta: o.beta.unwrap_or(5.0),
    };
    let n = cfg.n();
    let population = SEX_RATIO_ONES + SEX_RATIO_ZEROS;
    let mut tables: HashMap<usize, Arc<BetaTables>> = HashMap::new();
    let mut rows = Vec::with_capacity(cfg.n_datasets);
    for id in 0..cfg.n_datasets {
        let mut rng = substream(cfg.dataset_seed(id), &[]);
        let data: Vec<f64> = (0..n)
            .map(|_| f64::from(u8::from(rng.random_range(0..population) < SEX_RATIO_ONES)))
            .collect();
        let successes = data.iter().filter(|&&y| y == 1.0).count();
        let problem = cfg.problem(
            ModelSpec::BetaBernoulli(spec.clone()),
            Dataset::Scalar(data),
            id,
        );
        let prepared = problem.prepare_with_tables(tables.get(&successes).cloned())?;
        if let Some(t) = prepared.beta_tables() {
            tables.entry(successes).or_insert(t);
        }
        let result = prepared.run(exec)?;
        rows.push(StudyRow::new(
            id,
            successes as f64 / n as f64,
            None,
            &result,
        ));
    }
    sort_rows(&mut rows);
    Ok(rows)
}

/// Ordinary least squares fit of `y = β1 + β2 x`.
pub fn ols(pairs: &[(f64, f64)]) -> Result<[f64; 2]> {
    let n = pairs.len() as f64;
    let (mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sx += x;
        sxx += x * x;
        sy += y;
        sxy += x * y;
    }
    let xtx = Spd2x2::new(n, sx, sxx);
    if !xtx.is_positive_definite() {
        return Err(Error::Singular("design matrix is not of full rank".into()));
    }
    Ok(xtx.inverse()?.mul_vec([sy, sxy]))
}

/// Datasets of `n` pairs with `x ~ N(0, 1)`, `y = ε ~ N(0, σ²)` and
/// independent `N(0, σ²/10)` priors on intercept and slope.
pub fn run_regression_study(cfg: &StudyConfig, exec: Execution) -> Result<Vec<StudyRow>> {
    cfg.validate()?;
    let o = &cfg.overrides;
    let sigma2 = o.sigma2.unwrap_or(1.0);
    let z = o.z.unwrap_or(10.0);
    let eta0 = [o.prior_mean.unwrap_or(0.0), 0.0];
    let spec = RegressionModelSpec {
        sigma2,
        eta0,
        tau2: [PriorVariance::Finite(sigma2 / z); 2],
    };
    let sd = sigma2.sqrt();
    let n = cfg.n();
    let mut rows = Vec::with_capacity(cfg.n_datasets);
    for id in 0..cfg.n_datasets {
        let mut rng = substream(cfg.dataset_seed(id), &[]);
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let x: f64 = rng.sample(StandardNormal);
                let e: f64 = rng.sample(StandardNormal);
                (x, sd * e)
            })
            .collect();
        let beta_hat = ols(&pairs)?;
        let d = [beta_hat[0] - eta0[0], beta_hat[1] - eta0[1]];
        let result = cfg
            .problem(
                ModelSpec::Regression(spec.clone()),
                Dataset::Pairs(pairs),
                id,
            )
            .prepare()?
            .run(exec)?;
        rows.push(StudyRow::new(id, d[0].hypot(d[1]), Some(d), &result));
    }
    sort_rows(&mut rows);
    Ok(rows)
}

/// The Gaussian study with `z = 4`, plus the `Mₙ` histogram of the dataset
/// with the smallest `|ȳ|`.
pub fn run_small_mopess_study(
    cfg: &StudyConfig,
    exec: Execution,
) -> Result<(Vec<StudyRow>, Histogram)> {
    let runs = run_gaussian_like(cfg, 4.0, exec)?;
    let histogram = runs
        .iter()
        .min_by(|a, b| a.0.xstat.abs().total_cmp(&b.0.xstat.abs()))
        .map(|(_, r)| Histogram::from_result(r))
        .unwrap_or_default();
    let mut rows: Vec<StudyRow> = runs.into_iter().map(|(r, _)| r).collect();
    sort_rows(&mut rows);
    Ok((rows, histogram))
}

/// Runs a study by id. The conditional study uses `ȳ = μ = 0`.
pub fn run_study(cfg: &StudyConfig, exec: Execution) -> Result<StudyOutput> {
    match cfg.study_id {
        StudyId::GaussianFig12 => Ok(StudyOutput {
            rows: run_gaussian_study(cfg, exec)?,
            histogram: None,
        }),
        StudyId::GaussianConditionalFig3 => {
            let c = run_conditional_study(cfg, 0.0, 0.0, exec)?;
            Ok(StudyOutput {
                rows: Vec::new(),
                histogram: Some(c.histogram),
            })
        }
        StudyId::BetaFig4 => Ok(StudyOutput {
            rows: run_beta_study(cfg, exec)?,
            histogram: None,
        }),
        StudyId::RegressionFig56 => Ok(StudyOutput {
            rows: run_regression_study(cfg, exec)?,
            histogram: None,
        }),
        StudyId::SmallMopessAppE => {
            let (rows, h) = run_small_mopess_study(cfg, exec)?;
            Ok(StudyOutput {
                rows,
                histogram: Some(h),
            })
        }
    }
}

/// Mean and quantiles of MOPESS over one bin of the x-statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub count: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub x_mean: f64,
    pub mopess_mean: f64,
    pub mopess_q05: f64,
    pub mopess_q50: f64,
    pub mopess_q95: f64,
}

/// Smallest sample value whose empirical CDF reaches `p`.
fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let k = ((p * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[k.min(sorted.len()) - 1]
}

/// Equal-count bins of the rows ordered by x-statistic.
pub fn binned_summary(rows: &[StudyRow], n_bins: usize) -> Result<Vec<BinSummary>> {
    if n_bins == 0 {
        return Err(Error::domain("n_bins must be >= 1"));
    }
    let mut sorted: Vec<&StudyRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.xstat
            .total_cmp(&b.xstat)
            .then(a.dataset_id.cmp(&b.dataset_id))
    });
    let bins = n_bins.min(sorted.len());
    let mut out = Vec::with_capacity(bins);
    let mut start = 0;
    for b in 0..bins {
        let end = (b + 1) * sorted.len() / bins;
        let chunk = &sorted[start..end];
        let k = chunk.len() as f64;
        let mut ms: Vec<f64> = chunk.iter().map(|r| r.mopess).collect();
        ms.sort_by(f64::total_cmp);
        out.push(BinSummary {
            count: chunk.len(),
            x_min: chunk[0].xstat,
            x_max: chunk[chunk.len() - 1].xstat,
            x_mean: chunk.iter().map(|r| r.xstat).sum::<f64>() / k,
            mopess_mean: ms.iter().sum::<f64>() / k,
            mopess_q05: empirical_quantile(&ms, 0.05),
            mopess_q50: empirical_quantile(&ms, 0.5),
            mopess_q95: empirical_quantile(&ms, 0.95),
        });
        start = end;
    }
    Ok(out)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::domain(
            "spearman needs two samples of equal length >= 2",
        ));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let k = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / k, ry.iter().sum::<f64>() / k);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::domain("spearman undefined for a constant sample"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: usize, x: f64, m: f64) -> StudyRow {
        StudyRow {
            dataset_id: id,
            xstat: x,
            components: None,
            mopess: m,
            q05: m - 1.0,
            q50: m,
            q95: m + 1.0,
            mean_min_distance: 0.0,
            boundary_fraction: 0.0,
        }
    }

    #[test]
    fn study_ids_round_trip() {
        for id in StudyId::ALL {
            assert_eq!(id.as_str().parse::<StudyId>().unwrap(), id);
        }
        assert!("fig9".parse::<StudyId>().is_err());
    }

    #[test]
    fn binned_summary_examples() {
        let rows: Vec<StudyRow> = (0..23).map(|i| row(i, i as f64, 2.0 * i as f64)).collect();
        let one = binned_summary(&rows, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].mopess_mean, 22.0);
        let five = binned_summary(&rows, 5).unwrap();
        let counts: Vec<usize> = five.iter().map(|b| b.count).collect();
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        assert_eq!(counts.iter().sum::<usize>(), 23);
        assert!(five.windows(2).all(|w| w[0].mopess_mean < w[1].mopess_mean));
        assert!(binned_summary(&[], 3).unwrap().is_empty());
        assert!(binned_summary(&rows, 0).is_err());
    }

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(spearman(&x, &[2.0, 4.0, 9.0, 16.0, 100.0]).unwrap(), 1.0);
        assert_eq!(spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        // ties take average ranks: ranks of y are 1.5, 1.5, 3, 4, 5
        let r = spearman(&x, &[1.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((r - 0.9746794344808963).abs() < 1e-12);
        assert!(spearman(&x, &[1.0; 5]).is_err());
    }

    #[test]
    fn ols_recovers_line() {
        let pairs: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 1.5 - 0.5 * i as f64)).collect();
        let b = ols(&pairs).unwrap();
        assert!((b[0] - 1.5).abs() < 1e-12 && (b[1] + 0.5).abs() < 1e-12);
        assert!(ols(&[(1.0, 2.0), (1.0, 3.0)]).is_err());
    }

    fn small(id: StudyId, n_datasets: usize, s: usize) -> StudyConfig {
        StudyConfig {
            n_datasets,
            s,
            ..StudyConfig::desk(id)
        }
    }

    #[test]
    fn gaussian_study_rows() {
        let cfg = small(StudyId::GaussianFig12, 6, 200);
        let rows = run_gaussian_study(&cfg, Execution::Auto).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.windows(2).all(|w| w[0].xstat <= w[1].xstat));
        assert!(rows.iter().all(|r| r.q05 <= r.q50 && r.q50 <= r.q95));
        assert_eq!(
            rows,
            run_gaussian_study(&cfg, Execution::Sequential).unwrap()
        );
        assert!(StudyConfig {
            n_datasets: 0,
            ..cfg
        }
        .validate()
        .is_err());
    }

    #[test]
    fn beta_resamples_track_population() {
        let cfg = small(StudyId::BetaFig4, 400, 1);
        let rows = run_beta_study(&cfg, Execution::Auto).unwrap();
        let pooled = rows.iter().map(|r| r.xstat).sum::<f64>() / rows.len() as f64;
        assert!((pooled - 0.446).abs() < 0.01, "{pooled}");
        assert!(rows.iter().all(|r| (r.xstat * 20.0).fract() == 0.0));
    }

    #[test]
    fn regression_rows_carry_components() {
        let rows =
            run_regression_study(&small(StudyId::RegressionFig56, 3, 50), Execution::Auto).unwrap();
        for r in &rows {
            let d = r.components.unwrap();
            assert!((d[0].hypot(d[1]) - r.xstat).abs() < 1e-15);
        }
    }

    #[test]
    fn conditional_study_pairs_theory() {
        let mut cfg = small(StudyId::GaussianConditionalFig3, 1, 500);
        cfg.overrides.theory_draws = Some(300);
        let c = run_conditional_study(&cfg, 0.0, 0.0, Execution::Auto).unwrap();
        assert!(c.histogram.has_theory());
        assert_eq!(c.histogram.total(), 500);
        assert!((0.0..=1.0).contains(&c.total_variation));
    }
}
