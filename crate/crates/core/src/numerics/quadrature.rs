use std::f64::consts::PI;

/// Quadrature rule on the open unit interval.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&u, &w)| w * f(u))
            .sum()
    }
}

/// `k`-point Gauss–Legendre rule mapped from [-1, 1] onto (0, 1).
///
/// Roots of `P_k` are found by Newton iteration from the usual cosine
/// starting points; `k` is clamped below at 2.
pub fn gauss_legendre(k: usize) -> QuadratureRule {
    let k = k.max(2);
    let mut nodes = vec![0.0; k];
    let mut weights = vec![0.0; k];
    let half = k.div_ceil(2);
    for i in 0..half {
        let mut x = (PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(k, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(k, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is the i-th largest root; mirror it for the lower half.
        nodes[i] = 0.5 * (1.0 - x);
        nodes[k - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[k - 1 - i] = 0.5 * w;
    }
    QuadratureRule { nodes, weights }
}

/// `k`-point Gauss–Legendre rule in `t` under the substitution
/// `u = t²/(t² + (1−t)²)`, which clusters nodes at both ends of (0, 1).
///
/// Integrands that grow like `ln(1/u)` at the endpoints (Gaussian quantiles)
/// become smooth in `t`; bounded integrands lose nothing.
pub fn clustered_gauss_legendre(k: usize) -> QuadratureRule {
    let base = gauss_legendre(k);
    let mut nodes = Vec::with_capacity(base.len());
    let mut weights = Vec::with_capacity(base.len());
    for (&t, &w) in base.nodes.iter().zip(&base.weights) {
        let s = 1.0 - t;
        let den = t * t + s * s;
        nodes.push(t * t / den);
        weights.push(w * 2.0 * t * s / (den * den));
    }
    QuadratureRule { nodes, weights }
}

fn legendre_with_derivative(k: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=k {
        let j = j as f64;
        let p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
    }
    let d = k as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
