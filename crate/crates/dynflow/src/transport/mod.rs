//! Time-indexed optimal transport: the exact L²-Kantorovich distance with
//! certified duals, an entropic scaling solver, and the action-minimizing
//! dynamic distance between time slices.

mod simplex;

use crate::scalar::Scalar;
use crate::space::MetricFamily;
use ndarray::{Array1, Array2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("weights do not form a probability vector (sum = {0})")]
    NotNormalized(f64),
    #[error("negative weight at index {0}")]
    NegativeWeight(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("marginal sums differ: {0} vs {1}")]
    MarginalMismatch(f64, f64),
    #[error("scaling iterations did not converge in {iters} iterations (residual {residual})")]
    NotConverged { iters: usize, residual: f64 },
    #[error("time ordering violated: need s < t, got s = {s}, t = {t}")]
    TimeOrdering { s: f64, t: f64 },
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error(transparent)]
    Space(#[from] crate::space::SpaceError),
    #[error("internal solver failure: {0}")]
    Internal(String),
}

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector<F> {
    weights: Array1<F>,
}

impl<F: Scalar> ProbabilityVector<F> {
    pub fn new(weights: Array1<F>) -> Result<Self, TransportError> {
        for (i, &w) in weights.iter().enumerate() {
            if w < F::zero() || !w.is_finite() {
                return Err(TransportError::NegativeWeight(i));
            }
        }
        let total: F = weights.iter().copied().sum();
        if (total - F::one()).abs() > F::of(1e-12) {
            return Err(TransportError::NotNormalized(
                total.to_f64().unwrap_or(f64::NAN),
            ));
        }
        Ok(Self { weights })
    }

    /// Normalize arbitrary nonnegative weights.
    pub fn normalized(raw: Array1<F>) -> Result<Self, TransportError> {
        for (i, &w) in raw.iter().enumerate() {
            if w < F::zero() || !w.is_finite() {
                return Err(TransportError::NegativeWeight(i));
            }
        }
        let total: F = raw.iter().copied().sum();
        if total <= F::zero() {
            return Err(TransportError::NotNormalized(0.0));
        }
        Ok(Self {
            weights: raw.mapv(|x| x / total),
        })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            weights: Array1::from_elem(n, F::one() / F::of(n as f64)),
        }
    }

    pub fn dirac(n: usize, at: usize) -> Self {
        let mut w = Array1::zeros(n);
        w[at] = F::one();
        Self { weights: w }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &Array1<F> {
        &self.weights
    }

    pub fn l1_distance(&self, other: &Self) -> F {
        self.weights
            .iter()
            .zip(other.weights.iter())
            .map(|(&a, &b)| (a - b).abs())
            .sum()
    }
}

/// Transport plan with marginal bookkeeping.
#[derive(Debug, Clone)]
pub struct Coupling<F> {
    pub plan: Array2<F>,
    pub row_marginal: Array1<F>,
    pub col_marginal: Array1<F>,
}

impl<F: Scalar> Coupling<F> {
    fn from_plan(plan: Array2<F>) -> Self {
        let row = plan.sum_axis(ndarray::Axis(1));
        let col = plan.sum_axis(ndarray::Axis(0));
        Self {
            plan,
            row_marginal: row,
            col_marginal: col,
        }
    }

    /// Largest absolute deviation of the plan marginals from the targets.
    pub fn marginal_residual(&self, mu: &ProbabilityVector<F>, nu: &ProbabilityVector<F>) -> F {
        let mut worst = F::zero();
        for (got, want) in self
            .row_marginal
            .iter()
            .zip(mu.weights().iter())
            .chain(self.col_marginal.iter().zip(nu.weights().iter()))
        {
            worst = worst.max((*got - *want).abs());
        }
        worst
    }
}

/// Kantorovich dual potentials with the certified duality gap.
#[derive(Debug, Clone)]
pub struct DualPotentials<F> {
    pub phi: Array1<F>,
    pub psi: Array1<F>,
    pub gap: F,
}

/// Exact L²-Kantorovich distance squared between `mu` and `nu` for the
/// ground metric `d`, with vertex-optimal plan and feasible duals.
///
/// The duals are normalized so that `psi[0] = 0`.
pub fn kantorovich<F: Scalar>(
    mu: &ProbabilityVector<F>,
    nu: &ProbabilityVector<F>,
    d: &Array2<F>,
) -> Result<(F, Coupling<F>, DualPotentials<F>), TransportError> {
    let m = mu.len();
    let n = nu.len();
    if d.nrows() != m || d.ncols() != n {
        return Err(TransportError::DimensionMismatch(d.nrows(), m));
    }
    let a64: Array1<f64> = mu.weights().mapv(|x| x.to_f64().unwrap());
    let b64: Array1<f64> = nu.weights().mapv(|x| x.to_f64().unwrap());
    let asum = a64.sum();
    let bsum = b64.sum();
    if (asum - bsum).abs() > 1e-8 {
        return Err(TransportError::MarginalMismatch(asum, bsum));
    }

    // Strip zero-mass rows/columns; zero marginals get zero plan rows/columns.
    let keep_i: Vec<usize> = (0..m).filter(|&i| a64[i] > 0.0).collect();
    let keep_j: Vec<usize> = (0..n).filter(|&j| b64[j] > 0.0).collect();
    let ar = Array1::from_iter(keep_i.iter().map(|&i| a64[i]));
    let mut br = Array1::from_iter(keep_j.iter().map(|&j| b64[j]));
    // Remove round-off mass mismatch exactly.
    let scale = ar.sum() / br.sum();
    br.mapv_inplace(|x| x * scale);

    let mut cost = Array2::<f64>::zeros((keep_i.len(), keep_j.len()));
    for (ri, &i) in keep_i.iter().enumerate() {
        for (rj, &j) in keep_j.iter().enumerate() {
            let dij = d[[i, j]].to_f64().unwrap();
            cost[[ri, rj]] = dij * dij;
        }
    }

    let sol = simplex::solve(&ar, &br, &cost).map_err(|e| TransportError::Internal(e.to_string()))?;

    let mut plan = Array2::<F>::zeros((m, n));
    for (ri, &i) in keep_i.iter().enumerate() {
        for (rj, &j) in keep_j.iter().enumerate() {
            plan[[i, j]] = F::of(sol.plan[[ri, rj]]);
        }
    }

    // Duals on stripped indices: tightest feasible completion.
    let mut phi64 = vec![0.0f64; m];
    let mut psi64 = vec![0.0f64; n];
    for (ri, &i) in keep_i.iter().enumerate() {
        phi64[i] = sol.row_duals[ri];
    }
    for (rj, &j) in keep_j.iter().enumerate() {
        psi64[j] = sol.col_duals[rj];
    }
    for i in 0..m {
        if a64[i] == 0.0 {
            let mut best = f64::INFINITY;
            for (rj, &j) in keep_j.iter().enumerate() {
                let dij = d[[i, j]].to_f64().unwrap();
                best = best.min(dij * dij - sol.col_duals[rj]);
            }
            phi64[i] = if best.is_finite() { best } else { 0.0 };
        }
    }
    for j in 0..n {
        if b64[j] == 0.0 {
            let mut best = f64::INFINITY;
            for (ri, &i) in keep_i.iter().enumerate() {
                let dij = d[[i, j]].to_f64().unwrap();
                best = best.min(dij * dij - sol.row_duals[ri]);
            }
            psi64[j] = if best.is_finite() { best } else { 0.0 };
        }
    }
    // Normalize: shift the additive constant so psi[0] = 0.
    let shift = psi64[0];
    for p in phi64.iter_mut() {
        *p += shift;
    }
    for p in psi64.iter_mut() {
        *p -= shift;
    }

    let dual_value: f64 = phi64
        .iter()
        .zip(a64.iter())
        .map(|(&p, &w)| p * w)
        .sum::<f64>()
        + psi64
            .iter()
            .zip(b64.iter())
            .map(|(&p, &w)| p * w)
            .sum::<f64>();
    let gap = sol.cost - dual_value;

    let duals = DualPotentials {
        phi: Array1::from_iter(phi64.iter().map(|&x| F::of(x))),
        psi: Array1::from_iter(psi64.iter().map(|&x| F::of(x))),
        gap: F::of(gap),
    };
    Ok((F::of(sol.cost), Coupling::from_plan(plan), duals))
}

/// `W_t(mu, nu)` for the metric family at time `t`.
pub fn wasserstein_at<F: Scalar>(
    family: &MetricFamily<F>,
    t: F,
    mu: &ProbabilityVector<F>,
    nu: &ProbabilityVector<F>,
) -> Result<F, TransportError> {
    let d = family.metric_at(t)?;
    let (w2, _, _) = kantorovich(mu, nu, &d)?;
    Ok(w2.max(F::zero()).sqrt())
}

/// Entropic optimal transport by log-domain scaling iterations on the kernel
/// `exp(-c/eps)`; returns the transport cost `<c, plan>` of the entropic
/// plan and the plan itself.
pub fn sinkhorn<F: Scalar>(
    mu: &ProbabilityVector<F>,
    nu: &ProbabilityVector<F>,
    d: &Array2<F>,
    eps: F,
    tol: F,
    max_iter: usize,
) -> Result<(F, Coupling<F>), TransportError> {
    if !(eps > F::zero()) {
        return Err(TransportError::Domain("regularization must be positive"));
    }
    let m = mu.len();
    let n = nu.len();
    if d.nrows() != m || d.ncols() != n {
        return Err(TransportError::DimensionMismatch(d.nrows(), m));
    }
    let eps64 = eps.to_f64().unwrap();
    let tol64 = tol.to_f64().unwrap();
    let cost: Array2<f64> = d.mapv(|x| {
        let v = x.to_f64().unwrap();
        v * v
    });
    let log_a: Vec<f64> = mu
        .weights()
        .iter()
        .map(|&x| {
            let v = x.to_f64().unwrap();
            if v > 0.0 {
                v.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let log_b: Vec<f64> = nu
        .weights()
        .iter()
        .map(|&x| {
            let v = x.to_f64().unwrap();
            if v > 0.0 {
                v.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();

    let mut f = vec![0.0f64; m];
    let mut g = vec![0.0f64; n];
    let mut residual = f64::INFINITY;
    for iter in 0..max_iter {
        for i in 0..m {
            let lse = logsumexp((0..n).map(|j| (g[j] - cost[[i, j]]) / eps64));
            f[i] = eps64 * (log_a[i] - lse);
            if log_a[i] == f64::NEG_INFINITY {
                f[i] = f64::NEG_INFINITY;
            }
        }
        for j in 0..n {
            let lse = logsumexp((0..m).map(|i| (f[i] - cost[[i, j]]) / eps64));
            g[j] = eps64 * (log_b[j] - lse);
            if log_b[j] == f64::NEG_INFINITY {
                g[j] = f64::NEG_INFINITY;
            }
        }
        if (iter + 1) % 5 == 0 || iter + 1 == max_iter {
            // Column marginals are exact after the g-update; check rows.
            residual = 0.0;
            for i in 0..m {
                let lse = logsumexp((0..n).map(|j| (g[j] - cost[[i, j]]) / eps64));
                let row = if f[i] == f64::NEG_INFINITY {
                    0.0
                } else {
                    (f[i] / eps64 + lse).exp()
                };
                let target = if log_a[i] == f64::NEG_INFINITY {
                    0.0
                } else {
                    log_a[i].exp()
                };
                residual = residual.max((row - target).abs());
            }
            if residual <= tol64 {
                let mut plan = Array2::<F>::zeros((m, n));
                let mut total = 0.0f64;
                for i in 0..m {
                    for j in 0..n {
                        let lp = (f[i] + g[j] - cost[[i, j]]) / eps64;
                        let p = if lp == f64::NEG_INFINITY { 0.0 } else { lp.exp() };
                        plan[[i, j]] = F::of(p);
                        total += p * cost[[i, j]];
                    }
                }
                return Ok((F::of(total), Coupling::from_plan(plan)));
            }
        }
    }
    Err(TransportError::NotConverged {
        iters: max_iter,
        residual,
    })
}

fn logsumexp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = vals.map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Squared dynamic distance on the conformally time-scaled line
/// `d_t² = λ t gap²`: the logarithmic-mean formula
/// `λ (t - s) / (log t - log s) · gap²`.
pub fn dynamic_distance_scaled<F: Scalar>(
    lambda: F,
    s: F,
    t: F,
    gap: F,
) -> Result<F, TransportError> {
    if s <= F::zero() || !(lambda > F::zero()) {
        return Err(TransportError::Domain(
            "logarithmic mean needs 0 < s and lambda > 0",
        ));
    }
    if t < s {
        return Err(TransportError::TimeOrdering {
            s: s.to_f64().unwrap_or(f64::NAN),
            t: t.to_f64().unwrap_or(f64::NAN),
        });
    }
    // Logarithmic mean degenerates to s as t -> s.
    if (t - s).abs() < F::of(1e-12) * s {
        return Ok(lambda * s * gap * gap);
    }
    Ok(lambda * (t - s) / (t.ln() - s.ln()) * gap * gap)
}

/// Squared dynamic distance `d_{s,t}²(x, y)` approximated by dynamic
/// programming over chains of grid points.
///
/// Chains have `n_slices` segments; segment `i` from `z_{i-1}` to `z_i` is
/// charged `n_slices · d²_{θ(a_{i-1})}(z_{i-1}, z_i)` with `θ` the linear
/// time interpolation from `s` to `t`.
///
/// With `n_slices = 0` the slice count auto-refines by doubling until the
/// relative change falls below `1e-4`, returning the Richardson
/// extrapolation of the last pair (the chain value converges with an
/// `O(1/K)` time-sampling bias). On a finite grid the value is inflated by
/// lattice quantization once a slice moves less than one lattice pitch, so
/// doubling is capped at a quarter of the pitch count between the
/// endpoints and the extrapolation of the last clean pair is returned.
///
/// `n_probe` is reserved for future subsampling of intermediate points.
pub fn dynamic_distance_chain<F: Scalar>(
    x: usize,
    y: usize,
    s: F,
    t: F,
    family: &MetricFamily<F>,
    n_slices: usize,
    n_probe: usize,
) -> Result<F, TransportError> {
    let _ = n_probe;
    if s > t {
        return Err(TransportError::TimeOrdering {
            s: s.to_f64().unwrap_or(f64::NAN),
            t: t.to_f64().unwrap_or(f64::NAN),
        });
    }
    if s == t {
        let v = family.distance(t, x, y)?;
        return Ok(v * v);
    }
    if x == y {
        return Ok(F::zero());
    }
    if n_slices > 0 {
        return chain_value(x, y, s, t, family, n_slices);
    }

    // Lattice richness: pitch count between the endpoints at mid-time.
    let mid = family.metric_at((s + t) * F::of(0.5))?;
    let mut pitch = F::infinity();
    let n = family.n_points();
    for i in 0..n {
        for j in 0..n {
            if i != j && mid[[i, j]] > F::zero() {
                pitch = pitch.min(mid[[i, j]]);
            }
        }
    }
    let richness = (mid[[x, y]] / pitch).to_f64().unwrap_or(4.0);
    let k_cap = ((richness / 4.0).floor() as usize).clamp(4, 4096);

    let rel_tol = F::of(1e-4);
    let mut v_prev = chain_value(x, y, s, t, family, 1)?;
    let mut extrapolated = v_prev;
    let mut k = 2usize;
    while k <= k_cap {
        let v = chain_value(x, y, s, t, family, k)?;
        let diff = v - v_prev;
        let richardson = v + diff;
        if diff.abs() <= rel_tol * v.abs().max(F::of(1e-30)) {
            return Ok(richardson);
        }
        extrapolated = richardson;
        v_prev = v;
        k *= 2;
    }
    Ok(extrapolated)
}

fn chain_value<F: Scalar>(
    x: usize,
    y: usize,
    s: F,
    t: F,
    family: &MetricFamily<F>,
    k: usize,
) -> Result<F, TransportError> {
    let n = family.n_points();
    let kf = F::of(k as f64);
    let mut dist = vec![F::infinity(); n];
    dist[x] = F::zero();
    for seg in 0..k {
        let a = F::of(seg as f64) / kf;
        let theta = s + a * (t - s);
        let d = family.metric_at(theta)?;
        let mut next = vec![F::infinity(); n];
        for (zi, &acc) in dist.iter().enumerate() {
            if !acc.is_finite() {
                continue;
            }
            for zj in 0..n {
                let step = d[[zi, zj]];
                let cand = acc + kf * step * step;
                if cand < next[zj] {
                    next[zj] = cand;
                }
            }
        }
        dist = next;
    }
    Ok(dist[y])
}

/// Worst sampled log-ratio slope of `t ↦ W_t(mu, nu)` against the family's
/// declared log-Lipschitz constant.
#[derive(Debug, Clone)]
pub struct WassersteinLipReport<F> {
    pub worst_ratio: F,
    pub declared: F,
    pub satisfied: bool,
}

pub fn wasserstein_loglip_check<F: Scalar>(
    family: &MetricFamily<F>,
    mu: &ProbabilityVector<F>,
    nu: &ProbabilityVector<F>,
    sample_times: &[F],
) -> Result<WassersteinLipReport<F>, TransportError> {
    let mut values = Vec::with_capacity(sample_times.len());
    for &t in sample_times {
        values.push(wasserstein_at(family, t, mu, nu)?);
    }
    let mut worst = F::zero();
    for a in 0..values.len() {
        for b in (a + 1)..values.len() {
            if values[a] <= F::zero() || values[b] <= F::zero() {
                continue;
            }
            let dt = (sample_times[b] - sample_times[a]).abs();
            if dt == F::zero() {
                continue;
            }
            let ratio = ((values[b] / values[a]).ln() / dt).abs();
            worst = worst.max(ratio);
        }
    }
    let declared = family.log_lipschitz();
    Ok(WassersteinLipReport {
        worst_ratio: worst,
        declared,
        satisfied: worst <= declared + F::of(1e-9),
    })
}
