use libm::lgamma as ln_gamma;

use crate::error::{Error, Result};

const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;
const CF_MAX_ITER: usize = 10_000;

/// CDF, density and quantile of a Beta(a, b) law with the log normalizer
/// cached, so repeated evaluations skip the three `ln Γ` calls.
#[derive(Clone, Copy, Debug)]
pub struct BetaFunctions {
    a: f64,
    b: f64,
    ln_beta: f64,
}

impl BetaFunctions {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::domain(format!(
                "beta shape parameters must be positive and finite, got ({a}, {b})"
            )));
        }
        Ok(Self {
            a,
            b,
            ln_beta: ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b),
        })
    }

    pub fn shape(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Regularized incomplete beta `I_x(a, b)`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let (a, b) = (self.a, self.b);
        let front = (a * x.ln() + b * (1.0 - x).ln() - self.ln_beta).exp();
        if x < (a + 1.0) / (a + b + 2.0) {
            front * continued_fraction(a, b, x) / a
        } else {
            1.0 - front * continued_fraction(b, a, 1.0 - x) / b
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 || x >= 1.0 {
            return 0.0;
        }
        ((self.a - 1.0) * x.ln() + (self.b - 1.0) * (1.0 - x).ln() - self.ln_beta).exp()
    }

    /// Inverse of [`cdf`](Self::cdf) for `p` in (0, 1).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        check_probability(p)?;
        Ok(self.solve(p, self.a / (self.a + self.b)))
    }

    /// Quantiles at increasing probabilities, each solve warm-started from
    /// the previous root.
    pub fn quantiles(&self, ps: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(ps.len());
        let mut guess = self.a / (self.a + self.b);
        for &p in ps {
            check_probability(p)?;
            let x = self.solve(p, guess);
            out.push(x);
            guess = x;
        }
        Ok(out)
    }

    // Safeguarded Newton: the bracket [lo, hi] always contains the root and
    // any Newton step leaving it is replaced by bisection.
    fn solve(&self, p: f64, guess: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let mut x = guess.clamp(1e-300, 1.0 - f64::EPSILON);
        for _ in 0..400 {
            let f = self.cdf(x) - p;
            if f == 0.0 {
                return x;
            }
            if f < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let d = self.pdf(x);
            let newton = x - f / d;
            let next = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let step = (next - x).abs();
            x = next;
            if step <= f64::EPSILON * x || hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        x
    }
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "probability must lie in (0,1), got {p}"
        )))
    }
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
fn continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    Ok(BetaFunctions::new(a, b)?.cdf(x))
}

/// Quantile of Beta(alpha, beta) at probability `p`.
pub fn beta_quantile(p: f64, alpha: f64, beta: f64) -> Result<f64> {
    BetaFunctions::new(alpha, beta)?.quantile(p)
}
