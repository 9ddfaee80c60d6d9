//! Gauss-Legendre quadrature rules on arbitrary intervals.

use crate::scalar::Scalar;

/// Nodes and weights of an `n`-point Gauss-Legendre rule on `[-1, 1]`.
///
/// Nodes are computed by Newton iteration on the Legendre polynomial in
/// double precision and then cast to the working scalar type.
#[derive(Debug, Clone)]
pub struct GaussRule<F> {
    pub nodes: Vec<F>,
    pub weights: Vec<F>,
}

impl<F: Scalar> GaussRule<F> {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature rule needs at least one node");
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for k in 0..n {
            // Chebyshev-like initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes.push(F::of(x));
            weights.push(F::of(w));
        }
        // The initial guesses sweep the roots from largest to smallest.
        nodes.reverse();
        weights.reverse();
        GaussRule { nodes, weights }
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: F, b: F) -> Vec<(F, F)> {
        let half = F::of(0.5);
        let mid = (a + b) * half;
        let rad = (b - a) * half;
        self.nodes
            .iter()
            .zip(self.weights.iter())
            .map(|(&x, &w)| (mid + rad * x, w * rad))
            .collect()
    }

    /// Integrate `f` over `[a, b]`.
    pub fn integrate(&self, a: F, b: F, mut f: impl FnMut(F) -> F) -> F {
        self.mapped(a, b)
            .into_iter()
            .map(|(x, w)| w * f(x))
            .fold(F::zero(), |acc, v| acc + v)
    }
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}
