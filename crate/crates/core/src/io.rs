//! Dataset readers, CSV/JSON writers and run provenance.
//!
//! CSV files carry floats at 12 significant digits; every CSV has a
//! `.meta.json` sidecar holding the provenance and the full-precision
//! payload. All files are written through a temporary file and renamed into
//! place.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::OpessResult;
use crate::error::{Error, Result};
use crate::harness::{BinSummary, Histogram, HistogramRow, StudyOutput, StudyRow};
use crate::models::{Dataset, ModelSpec};

/// Formats with 12 significant digits, fixed notation for exponents in
/// `[-5, 12)` and trailing zeros removed.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent in scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    if (-5..12).contains(&exp) {
        let body = if exp < 0 {
            format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
        } else {
            let int_len = exp as usize + 1;
            if digits.len() <= int_len {
                format!("{digits}{}", "0".repeat(int_len - digits.len()))
            } else {
                format!("{}.{}", &digits[..int_len], &digits[int_len..])
            }
        };
        format!("{sign}{body}")
    } else {
        let m = if digits.len() > 1 {
            format!("{}.{}", &digits[..1], &digits[1..])
        } else {
            digits.to_string()
        };
        format!("{sign}{m}e{exp}")
    }
}

/// Parses a dataset: one value per line for scalar families, `x,y` per line
/// for regression. Blank lines and `#` comments are skipped.
pub fn parse_dataset(text: &str, spec: &ModelSpec, path: &Path) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let number = |s: &str, line: usize| -> Result<f64> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("`{}` is not a number", s.trim())))?;
        if !v.is_finite() {
            return Err(parse_err(line, format!("`{}` is not finite", s.trim())));
        }
        Ok(v)
    };
    let mut scalars = Vec::new();
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        match spec {
            ModelSpec::Regression(_) => {
                let (x, y) = content
                    .split_once(',')
                    .ok_or_else(|| parse_err(line, format!("expected `x,y`, found `{content}`")))?;
                pairs.push((number(x, line)?, number(y, line)?));
            }
            ModelSpec::BetaBernoulli(_) => {
                let v = number(content, line)?;
                if v != 0.0 && v != 1.0 {
                    return Err(parse_err(
                        line,
                        format!("bernoulli value must be 0 or 1, found `{content}`"),
                    ));
                }
                scalars.push(v);
            }
            ModelSpec::Gaussian(_) => scalars.push(number(content, line)?),
        }
    }
    let data = match spec {
        ModelSpec::Regression(_) => Dataset::Pairs(pairs),
        _ => Dataset::Scalar(scalars),
    };
    if data.is_empty() {
        return Err(parse_err(0, "no observations".into()));
    }
    Ok(data)
}

pub fn read_dataset(path: &Path, spec: &ModelSpec) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, spec, path)
}

/// Where and how a result was produced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub seed: u64,
    /// SHA-256 of the canonical serialized configuration.
    pub config_digest: String,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` when set.
    pub timestamp: u64,
}

impl Provenance {
    pub fn new(seed: u64, canonical_config: &str) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_digest: config_digest(canonical_config),
            timestamp: timestamp(),
        }
    }
}

pub fn config_digest(canonical_config: &str) -> String {
    hex::encode(Sha256::digest(canonical_config.as_bytes()))
}

fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or_else(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Result(OpessResult),
    Study(StudyOutput),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultEnvelope {
    pub provenance: Provenance,
    pub payload: Payload,
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// `path` with `suffix` appended to the file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

/// `path` with its extension replaced by `ext` (`x.csv` → `x.{ext}`).
pub fn companion(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

pub fn summary_csv(r: &OpessResult) -> String {
    let f = format_float;
    format!(
        "mopess,q05,q50,q95,mean_min_distance,boundary_fraction,S,L,n,seed\n{},{},{},{},{},{},{},{},{},{}\n",
        f(r.mopess),
        f(r.quantiles.q05),
        f(r.quantiles.q50),
        f(r.quantiles.q95),
        f(r.mean_min_distance),
        f(r.boundary_fraction),
        r.metadata.s,
        r.metadata.l,
        r.metadata.n,
        r.metadata.seed
    )
}

pub fn rows_csv(rows: &[StudyRow]) -> String {
    let with_components = rows.iter().any(|r| r.components.is_some());
    let mut out =
        String::from("dataset_id,xstat,mopess,q05,q50,q95,mean_min_distance,boundary_fraction");
    if with_components {
        out.push_str(",d1,d2");
    }
    out.push('\n');
    for r in rows {
        let f = format_float;
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.dataset_id,
            f(r.xstat),
            f(r.mopess),
            f(r.q05),
            f(r.q50),
            f(r.q95),
            f(r.mean_min_distance),
            f(r.boundary_fraction)
        );
        if with_components {
            let [a, b] = r.components.unwrap_or([f64::NAN; 2]);
            let _ = write!(out, ",{},{}", f(a), f(b));
        }
        out.push('\n');
    }
    out
}

pub fn histogram_csv(h: &Histogram) -> String {
    let theory = h.has_theory();
    let mut out = String::from("m_n,count,frequency");
    if theory {
        out.push_str(",theory_pmf");
    }
    out.push('\n');
    for r in &h.rows {
        let _ = write!(out, "{},{},{}", r.m_n, r.count, format_float(r.frequency));
        if theory {
            let _ = write!(out, ",{}", format_float(r.theory_pmf.unwrap_or(0.0)));
        }
        out.push('\n');
    }
    out
}

pub fn bins_csv(bins: &[BinSummary]) -> String {
    let mut out =
        String::from("bin,count,x_min,x_max,x_mean,mopess_mean,mopess_q05,mopess_q50,mopess_q95\n");
    for (i, b) in bins.iter().enumerate() {
        let f = format_float;
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{}",
            b.count,
            f(b.x_min),
            f(b.x_max),
            f(b.x_mean),
            f(b.mopess_mean),
            f(b.mopess_q05),
            f(b.mopess_q50),
            f(b.mopess_q95)
        );
    }
    out
}

/// Writes the envelope.
///
/// A result goes to `path` as a one-row summary and to `<stem>.pmf.csv` as
/// the histogram of `Mₙ`. Study rows go to `path` and a histogram, if any,
/// to `<stem>.hist.csv`. The sidecar `<path>.meta.json` is written last.
pub fn write_result(env: &ResultEnvelope, path: &Path) -> Result<()> {
    match &env.payload {
        Payload::Result(r) => {
            write_atomic(path, summary_csv(r).as_bytes())?;
            write_atomic(
                &companion(path, "pmf.csv"),
                histogram_csv(&Histogram::from_result(r)).as_bytes(),
            )?;
        }
        Payload::Study(s) => {
            write_atomic(path, rows_csv(&s.rows).as_bytes())?;
            if let Some(h) = &s.histogram {
                write_atomic(&companion(path, "hist.csv"), histogram_csv(h).as_bytes())?;
            }
        }
    }
    let mut json = serde_json::to_string_pretty(env).map_err(|e| Error::domain(e.to_string()))?;
    json.push('\n');
    write_atomic(&sibling(path, ".meta.json"), json.as_bytes())
}

/// Reads back the envelope written by [`write_result`] at `path`.
pub fn read_result(path: &Path) -> Result<ResultEnvelope> {
    let meta = sibling(path, ".meta.json");
    let text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: meta,
        line: e.line(),
        message: e.to_string(),
    })
}

fn csv_records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').collect()))
}

fn field<T: std::str::FromStr>(rec: &[&str], i: usize, path: &Path, line: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("bad or missing field {}", i + 1),
        })
}

/// Parses a study-rows CSV.
pub fn read_rows_csv(path: &Path) -> Result<Vec<StudyRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let with_components = text.lines().next().is_some_and(|h| h.ends_with(",d1,d2"));
    csv_records(&text)
        .map(|(line, rec)| {
            let g = |i| field::<f64>(&rec, i, path, line);
            Ok(StudyRow {
                dataset_id: field(&rec, 0, path, line)?,
                xstat: g(1)?,
                mopess: g(2)?,
                q05: g(3)?,
                q50: g(4)?,
                q95: g(5)?,
                mean_min_distance: g(6)?,
                boundary_fraction: g(7)?,
                components: if with_components {
                    Some([g(8)?, g(9)?])
                } else {
                    None
                },
            })
        })
        .collect()
}

/// Parses a histogram CSV.
pub fn read_histogram_csv(path: &Path) -> Result<Histogram> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let theory = text
        .lines()
        .next()
        .is_some_and(|h| h.ends_with(",theory_pmf"));
    let rows = csv_records(&text)
        .map(|(line, rec)| {
            Ok(HistogramRow {
                m_n: field(&rec, 0, path, line)?,
                count: field(&rec, 1, path, line)?,
                frequency: field(&rec, 2, path, line)?,
                theory_pmf: if theory {
                    Some(field(&rec, 3, path, line)?)
                } else {
                    None
                },
            })
        })
        .collect::<Result<_>>()?;
    Ok(Histogram { rows })
}
