use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric 2×2 matrix `[[a11, a12], [a12, a22]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spd2x2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl Spd2x2 {
    pub const IDENTITY: Spd2x2 = Spd2x2 {
        a11: 1.0,
        a12: 0.0,
        a22: 1.0,
    };

    pub fn new(a11: f64, a12: f64, a22: f64) -> Self {
        Self { a11, a12, a22 }
    }

    pub fn diag(a11: f64, a22: f64) -> Self {
        Self::new(a11, 0.0, a22)
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn is_positive_definite(&self) -> bool {
        self.a11 > 0.0 && self.det() > 0.0
    }

    pub fn check_pd(&self) -> Result<()> {
        if self.is_positive_definite() && self.a22.is_finite() && self.a12.is_finite() {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "matrix is not positive definite: {self:?}"
            )))
        }
    }

    pub fn inverse(&self) -> Result<Spd2x2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Singular(format!("cannot invert {self:?}")));
        }
        Ok(Spd2x2::new(self.a22 / det, -self.a12 / det, self.a11 / det))
    }

    pub fn scale(&self, s: f64) -> Spd2x2 {
        Spd2x2::new(self.a11 * s, self.a12 * s, self.a22 * s)
    }

    pub fn add(&self, o: &Spd2x2) -> Spd2x2 {
        Spd2x2::new(self.a11 + o.a11, self.a12 + o.a12, self.a22 + o.a22)
    }

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.a11 * v[0] + self.a12 * v[1],
            self.a12 * v[0] + self.a22 * v[1],
        ]
    }

    /// `self · other · self`, symmetrized.
    pub fn sandwich(&self, other: &Spd2x2) -> Spd2x2 {
        let m = mat_mul(self.as_array(), other.as_array());
        let p = mat_mul(m, self.as_array());
        Spd2x2::new(p[0][0], 0.5 * (p[0][1] + p[1][0]), p[1][1])
    }

    pub fn as_array(&self) -> [[f64; 2]; 2] {
        [[self.a11, self.a12], [self.a12, self.a22]]
    }

    /// Lower Cholesky factor `[[l11, 0], [l21, l22]]`.
    pub fn cholesky(&self) -> Result<[[f64; 2]; 2]> {
        self.check_pd()?;
        let l11 = self.a11.sqrt();
        let l21 = self.a12 / l11;
        let l22 = (self.a22 - l21 * l21).max(0.0).sqrt();
        Ok([[l11, 0.0], [l21, l22]])
    }
}

pub(crate) fn mat_mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

/// Principal square root of a 2×2 SPD matrix via the closed form
/// `S = (M + √det(M)·I) / √(tr(M) + 2√det(M))`.
pub fn spd_sqrt_2x2(m: &Spd2x2) -> Result<Spd2x2> {
    m.check_pd()?;
    let s = m.det().sqrt();
    let t = (m.trace() + 2.0 * s).sqrt();
    Ok(Spd2x2::new((m.a11 + s) / t, m.a12 / t, (m.a22 + s) / t))
}
