//! Time-dependent finite metric measure spaces.
//!
//! A space is a family `(d_t, m_t)` on `N` points, where `t ↦ log d_t(x, y)`
//! is Lipschitz with constant `L` and `m_t = e^{-f_t} m` for a fixed base
//! probability weight `m` and a potential `f_t` that is Lipschitz in time
//! with constant `L*`.

use crate::scalar::Scalar;
use ndarray::{Array1, Array2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("time {t} outside the family domain [{lo}, {hi}]")]
    TimeOutOfDomain { t: f64, lo: f64, hi: f64 },
    #[error("degenerate metric: zero off-diagonal distance at ({i}, {j})")]
    DegenerateMetric { i: usize, j: usize },
    #[error("tabulated family needs at least two nodes, got {0}")]
    TooFewNodes(usize),
    #[error("tabulated potential has no analytic rate and {t} is a tabulation boundary")]
    RateAtBoundary { t: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid step size h = {0}")]
    InvalidStep(f64),
    #[error("metric validation failed: {0} violations (first: {1})")]
    InvalidMetric(usize, String),
}

/// Uniform partition `t_n = n h` of `[0, T]` with `t_{N-1} < T <= t_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<F> {
    t_final: F,
    step: F,
    nodes: Vec<F>,
}

impl<F: Scalar> TimeGrid<F> {
    pub fn new(t_final: F, step: F) -> Result<Self, SpaceError> {
        if !(step > F::zero()) || !step.is_finite() {
            return Err(SpaceError::InvalidStep(step.to_f64().unwrap_or(f64::NAN)));
        }
        if !(t_final > F::zero()) {
            return Err(SpaceError::InvalidStep(f64::NAN));
        }
        let ratio = (t_final / step).to_f64().expect("finite ratio");
        // Snap to an integer node count when T/h is an integer up to round-off.
        let n = if (ratio - ratio.round()).abs() < 1e-9 * (1.0 + ratio.abs()) {
            ratio.round() as usize
        } else {
            ratio.ceil() as usize
        };
        let n = n.max(1);
        let nodes = (0..=n).map(|k| step * F::of(k as f64)).collect();
        Ok(Self {
            t_final,
            step,
            nodes,
        })
    }

    pub fn step(&self) -> F {
        self.step
    }

    pub fn t_final(&self) -> F {
        self.t_final
    }

    /// Number of steps `N`; the grid has `N + 1` nodes.
    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[F] {
        &self.nodes
    }

    pub fn node(&self, n: usize) -> F {
        self.nodes[n]
    }

    /// Right node of the interval containing `t`: the map `t ↦ t_n` for
    /// `t ∈ (t_{n-1}, t_n]`, with `0 ↦ 0`.
    pub fn upper(&self, t: F) -> F {
        self.node(self.upper_index(t))
    }

    /// Left node of the interval containing `t`.
    pub fn lower(&self, t: F) -> F {
        let i = self.upper_index(t);
        self.node(i.saturating_sub(1))
    }

    /// Index `n` such that `t ∈ (t_{n-1}, t_n]`, clamped to the grid.
    pub fn upper_index(&self, t: F) -> usize {
        if t <= F::zero() {
            return 0;
        }
        let ratio = (t / self.step).to_f64().expect("finite ratio");
        let mut n = ratio.ceil() as usize;
        // t exactly on a node belongs to the interval ending there.
        if (ratio - ratio.round()).abs() < 1e-12 * (1.0 + ratio.abs()) {
            n = ratio.round() as usize;
        }
        n.min(self.n_steps()).max(1)
    }
}

/// Report of metric axiom violations found by [`validate_metric`].
#[derive(Debug, Clone, Default)]
pub struct MetricReport {
    pub symmetry: Vec<(usize, usize)>,
    pub diagonal: Vec<usize>,
    pub positivity: Vec<(usize, usize)>,
    pub triangle: Vec<(usize, usize, usize)>,
}

impl MetricReport {
    pub fn is_valid(&self) -> bool {
        self.symmetry.is_empty()
            && self.diagonal.is_empty()
            && self.positivity.is_empty()
            && self.triangle.is_empty()
    }

    pub fn violation_count(&self) -> usize {
        self.symmetry.len() + self.diagonal.len() + self.positivity.len() + self.triangle.len()
    }

    fn first_description(&self) -> String {
        if let Some(&(i, j)) = self.symmetry.first() {
            return format!("symmetry at ({i}, {j})");
        }
        if let Some(&i) = self.diagonal.first() {
            return format!("nonzero diagonal at {i}");
        }
        if let Some(&(i, j)) = self.positivity.first() {
            return format!("non-positive off-diagonal at ({i}, {j})");
        }
        if let Some(&(i, k, j)) = self.triangle.first() {
            return format!("triangle violation d({i},{j}) > d({i},{k}) + d({k},{j})");
        }
        "none".to_string()
    }

    pub fn into_result(self) -> Result<(), SpaceError> {
        if self.is_valid() {
            Ok(())
        } else {
            let first = self.first_description();
            Err(SpaceError::InvalidMetric(self.violation_count(), first))
        }
    }
}

/// Scan a square matrix for symmetry, zero-diagonal, positivity, and
/// triangle-inequality violations beyond `tol`.
pub fn validate_metric<F: Scalar>(d: &Array2<F>, tol: F) -> MetricReport {
    let n = d.nrows();
    assert_eq!(n, d.ncols(), "distance matrix must be square");
    let mut report = MetricReport::default();
    for i in 0..n {
        if d[[i, i]].abs() > tol {
            report.diagonal.push(i);
        }
        for j in (i + 1)..n {
            if (d[[i, j]] - d[[j, i]]).abs() > tol {
                report.symmetry.push((i, j));
            }
            if d[[i, j]] <= tol {
                report.positivity.push((i, j));
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            for k in 0..n {
                if k == i || k == j {
                    continue;
                }
                if d[[i, j]] > d[[i, k]] + d[[k, j]] + tol {
                    report.triangle.push((i, k, j));
                }
            }
        }
    }
    report
}

#[derive(Debug, Clone)]
enum MetricKind<F> {
    /// `d_t = D0` for all `t`.
    Constant(Array2<F>),
    /// `d_t = e^{g t} D0`.
    Conformal { base: Array2<F>, rate: F },
    /// `log d_t` interpolated linearly in `t` between tabulated snapshots,
    /// which keeps the declared log-Lipschitz bound exact between nodes.
    Tabulated { times: Vec<F>, logs: Vec<Array2<F>> },
}

/// Time-indexed family of finite metrics with a declared log-Lipschitz
/// constant `L`: `|log(d_t(x,y)/d_s(x,y))| <= L |t-s|`.
#[derive(Debug, Clone)]
pub struct MetricFamily<F> {
    n_points: usize,
    kind: MetricKind<F>,
    log_lipschitz: F,
    domain: (F, F),
}

impl<F: Scalar> MetricFamily<F> {
    pub fn constant(base: Array2<F>, horizon: F) -> Result<Self, SpaceError> {
        let n = base.nrows();
        validate_metric(&base, F::of(1e-9)).into_result()?;
        Ok(Self {
            n_points: n,
            kind: MetricKind::Constant(base),
            log_lipschitz: F::zero(),
            domain: (F::zero(), horizon),
        })
    }

    pub fn conformal(base: Array2<F>, rate: F, horizon: F) -> Result<Self, SpaceError> {
        let n = base.nrows();
        validate_metric(&base, F::of(1e-9)).into_result()?;
        Ok(Self {
            n_points: n,
            kind: MetricKind::Conformal { base, rate },
            log_lipschitz: rate.abs(),
            domain: (F::zero(), horizon),
        })
    }

    /// Tabulated family; the domain is the span of the tabulation times.
    pub fn tabulated(times: Vec<F>, snapshots: Vec<Array2<F>>) -> Result<Self, SpaceError> {
        if times.len() < 2 || times.len() != snapshots.len() {
            return Err(SpaceError::TooFewNodes(times.len()));
        }
        let n = snapshots[0].nrows();
        let mut logs = Vec::with_capacity(snapshots.len());
        for snap in &snapshots {
            validate_metric(snap, F::of(1e-9)).into_result()?;
            let mut lg = Array2::<F>::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        lg[[i, j]] = snap[[i, j]].ln();
                    }
                }
            }
            logs.push(lg);
        }
        // Declared constant: the largest per-segment pairwise slope.
        let mut lip = F::zero();
        for w in 0..times.len() - 1 {
            let dt = times[w + 1] - times[w];
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let slope = ((logs[w + 1][[i, j]] - logs[w][[i, j]]) / dt).abs();
                    if slope > lip {
                        lip = slope;
                    }
                }
            }
        }
        let domain = (times[0], *times.last().unwrap());
        Ok(Self {
            n_points: n,
            kind: MetricKind::Tabulated { times, logs },
            log_lipschitz: lip,
            domain,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn log_lipschitz(&self) -> F {
        self.log_lipschitz
    }

    pub fn domain(&self) -> (F, F) {
        self.domain
    }

    fn check_domain(&self, t: F) -> Result<(), SpaceError> {
        let (lo, hi) = self.domain;
        let slack = F::of(1e-12) * (F::one() + hi.abs());
        if t < lo - slack || t > hi + slack {
            return Err(SpaceError::TimeOutOfDomain {
                t: t.to_f64().unwrap_or(f64::NAN),
                lo: lo.to_f64().unwrap_or(f64::NAN),
                hi: hi.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }

    /// Full distance matrix at time `t`. Repeated calls with equal `t` are
    /// bit-identical.
    pub fn metric_at(&self, t: F) -> Result<Array2<F>, SpaceError> {
        self.check_domain(t)?;
        match &self.kind {
            MetricKind::Constant(base) => Ok(base.clone()),
            MetricKind::Conformal { base, rate } => {
                let scale = (*rate * t).exp();
                Ok(base.mapv(|d| d * scale))
            }
            MetricKind::Tabulated { times, logs } => {
                let n = self.n_points;
                // Segment containing t (clamped at the ends).
                let mut w = 0;
                while w + 2 < times.len() && t > times[w + 1] {
                    w += 1;
                }
                let (t0, t1) = (times[w], times[w + 1]);
                let a = ((t - t0) / (t1 - t0)).max(F::zero()).min(F::one());
                let mut d = Array2::<F>::zeros((n, n));
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            let lg = logs[w][[i, j]] * (F::one() - a) + logs[w + 1][[i, j]] * a;
                            d[[i, j]] = lg.exp();
                        }
                    }
                }
                Ok(d)
            }
        }
    }

    /// Distance between two points at time `t`.
    pub fn distance(&self, t: F, i: usize, j: usize) -> Result<F, SpaceError> {
        if i == j {
            self.check_domain(t)?;
            return Ok(F::zero());
        }
        match &self.kind {
            MetricKind::Constant(base) => {
                self.check_domain(t)?;
                Ok(base[[i, j]])
            }
            MetricKind::Conformal { base, rate } => {
                self.check_domain(t)?;
                Ok(base[[i, j]] * (*rate * t).exp())
            }
            _ => Ok(self.metric_at(t)?[[i, j]]),
        }
    }

    /// Largest sampled slope `|log d_t - log d_s| / |t - s|` over all pairs
    /// of sample times and point pairs.
    pub fn estimate_log_lipschitz(&self, sample_times: &[F]) -> Result<F, SpaceError> {
        assert!(
            sample_times.len() >= 2,
            "need at least two sample times to estimate a slope"
        );
        let mut mats = Vec::with_capacity(sample_times.len());
        for &t in sample_times {
            let d = self.metric_at(t)?;
            for i in 0..self.n_points {
                for j in 0..self.n_points {
                    if i != j && d[[i, j]] <= F::zero() {
                        return Err(SpaceError::DegenerateMetric { i, j });
                    }
                }
            }
            mats.push(d.mapv(|x| if x > F::zero() { x.ln() } else { F::zero() }));
        }
        let mut worst = F::zero();
        for a in 0..sample_times.len() {
            for b in (a + 1)..sample_times.len() {
                let dt = (sample_times[b] - sample_times[a]).abs();
                if dt == F::zero() {
                    continue;
                }
                for i in 0..self.n_points {
                    for j in 0..self.n_points {
                        if i == j {
                            continue;
                        }
                        let slope = ((mats[b][[i, j]] - mats[a][[i, j]]) / dt).abs();
                        if slope > worst {
                            worst = slope;
                        }
                    }
                }
            }
        }
        Ok(worst)
    }
}

/// Time profile of the potential `f_t` defining `m_t = e^{-f_t} m`.
#[derive(Debug, Clone)]
pub enum Potential<F> {
    /// `f ≡ 0`.
    Zero,
    /// `f_t = t · v`.
    Linear { v: Array1<F> },
    /// `f_t = amp · sin(freq · t) · v`.
    Sine { amp: F, freq: F, v: Array1<F> },
    /// Linear interpolation of tabulated values; no analytic rate.
    Tabulated { times: Vec<F>, values: Vec<Array1<F>> },
}

/// Time-indexed family of vertex weights `m_t = e^{-f_t} m`.
#[derive(Debug, Clone)]
pub struct MeasureFamily<F> {
    base: Array1<F>,
    potential: Potential<F>,
    time_lipschitz: F,
    bound: F,
    rate_step: F,
}

impl<F: Scalar> MeasureFamily<F> {
    /// `base` is normalized to sum to one.
    pub fn new(base: Array1<F>, potential: Potential<F>, horizon: F) -> Self {
        let total: F = base.iter().copied().sum();
        assert!(total > F::zero(), "base weights must have positive mass");
        let base = base.mapv(|x| x / total);
        let (time_lipschitz, bound) = declared_constants(&potential, horizon);
        Self {
            base,
            potential,
            time_lipschitz,
            bound,
            rate_step: F::of(1e-6) * horizon.max(F::one()),
        }
    }

    pub fn uniform(n: usize, potential: Potential<F>, horizon: F) -> Self {
        Self::new(Array1::from_elem(n, F::one()), potential, horizon)
    }

    pub fn n_points(&self) -> usize {
        self.base.len()
    }

    pub fn base(&self) -> &Array1<F> {
        &self.base
    }

    /// Declared time-Lipschitz constant `L*` of `t ↦ f_t(x)`.
    pub fn time_lipschitz(&self) -> F {
        self.time_lipschitz
    }

    /// Declared uniform bound `C` with `|f_t(x)| <= C`.
    pub fn bound(&self) -> F {
        self.bound
    }

    pub fn potential_at(&self, t: F) -> Array1<F> {
        match &self.potential {
            Potential::Zero => Array1::zeros(self.base.len()),
            Potential::Linear { v } => v.mapv(|x| x * t),
            Potential::Sine { amp, freq, v } => {
                let s = *amp * (*freq * t).sin();
                v.mapv(|x| x * s)
            }
            Potential::Tabulated { times, values } => {
                let mut w = 0;
                while w + 2 < times.len() && t > times[w + 1] {
                    w += 1;
                }
                let a = ((t - times[w]) / (times[w + 1] - times[w]))
                    .max(F::zero())
                    .min(F::one());
                let mut out = values[w].clone();
                for (o, &hi) in out.iter_mut().zip(values[w + 1].iter()) {
                    *o = *o * (F::one() - a) + hi * a;
                }
                out
            }
        }
    }

    /// Entrywise `e^{-f_t(x)} m(x)`; strictly positive.
    pub fn measure_at(&self, t: F) -> Array1<F> {
        let f = self.potential_at(t);
        let mut out = self.base.clone();
        for (o, &fi) in out.iter_mut().zip(f.iter()) {
            *o = *o * (-fi).exp();
        }
        out
    }

    /// `∂_t f_t`, analytic when available and a centered difference with
    /// step `rate_step` otherwise.
    pub fn f_rate(&self, t: F) -> Result<Array1<F>, SpaceError> {
        match &self.potential {
            Potential::Zero => Ok(Array1::zeros(self.base.len())),
            Potential::Linear { v } => Ok(v.clone()),
            Potential::Sine { amp, freq, v } => {
                let s = *amp * *freq * (*freq * t).cos();
                Ok(v.mapv(|x| x * s))
            }
            Potential::Tabulated { times, .. } => {
                let lo = times[0];
                let hi = *times.last().unwrap();
                let d = self.rate_step;
                if t - d < lo || t + d > hi {
                    return Err(SpaceError::RateAtBoundary {
                        t: t.to_f64().unwrap_or(f64::NAN),
                    });
                }
                let fp = self.potential_at(t + d);
                let fm = self.potential_at(t - d);
                Ok((&fp - &fm) / (d + d))
            }
        }
    }
}

fn declared_constants<F: Scalar>(potential: &Potential<F>, horizon: F) -> (F, F) {
    match potential {
        Potential::Zero => (F::zero(), F::zero()),
        Potential::Linear { v } => {
            let sup = v.iter().fold(F::zero(), |acc, &x| acc.max(x.abs()));
            (sup, sup * horizon)
        }
        Potential::Sine { amp, freq, v } => {
            let sup = v.iter().fold(F::zero(), |acc, &x| acc.max(x.abs()));
            (amp.abs() * freq.abs() * sup, amp.abs() * sup)
        }
        Potential::Tabulated { times, values } => {
            let mut lip = F::zero();
            let mut bound = F::zero();
            for vals in values {
                for &x in vals.iter() {
                    bound = bound.max(x.abs());
                }
            }
            for w in 0..times.len() - 1 {
                let dt = times[w + 1] - times[w];
                for (lo, hi) in values[w].iter().zip(values[w + 1].iter()) {
                    lip = lip.max(((*hi - *lo) / dt).abs());
                }
            }
            let _ = horizon;
            (lip, bound)
        }
    }
}

/// Frozen view of the space at one time.
#[derive(Debug, Clone)]
pub struct SpaceSnapshot<F> {
    pub t: F,
    pub distances: Array2<F>,
    pub measure: Array1<F>,
    pub f_rate: Array1<F>,
}

impl<F: Scalar> SpaceSnapshot<F> {
    pub fn take(
        metric: &MetricFamily<F>,
        measure: &MeasureFamily<F>,
        t: F,
    ) -> Result<Self, SpaceError> {
        let distances = metric.metric_at(t)?;
        if distances.nrows() != measure.n_points() {
            return Err(SpaceError::DimensionMismatch {
                expected: distances.nrows(),
                got: measure.n_points(),
            });
        }
        Ok(Self {
            t,
            distances,
            measure: measure.measure_at(t),
            f_rate: measure.f_rate(t)?,
        })
    }
}

/// Shortest-path distance matrix of the path graph on `n` points with
/// spacing `dx`.
pub fn path_distances<F: Scalar>(n: usize, dx: F) -> Array2<F> {
    let mut d = Array2::<F>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let gap = if i > j { i - j } else { j - i };
            d[[i, j]] = dx * F::of(gap as f64);
        }
    }
    d
}

/// Distance matrix of the discrete torus on `n` points with spacing `dx`.
pub fn torus_distances<F: Scalar>(n: usize, dx: F) -> Array2<F> {
    let mut d = Array2::<F>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let gap = if i > j { i - j } else { j - i };
            let wrapped = gap.min(n - gap);
            d[[i, j]] = dx * F::of(wrapped as f64);
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn base3() -> Array2<f64> {
        path_distances(3, 1.0)
    }

    #[test]
    fn grid_nodes_cover_horizon() {
        let grid: TimeGrid<f64> = TimeGrid::new(1.0, 0.3).unwrap();
        assert_eq!(grid.n_steps(), 4);
        assert!(grid.node(grid.n_steps()) >= 1.0);
        let exact: TimeGrid<f64> = TimeGrid::new(1.0, 0.25).unwrap();
        assert_eq!(exact.n_steps(), 4);
        assert_eq!(exact.node(4), 1.0);
    }

    #[test]
    fn grid_interpolation_maps() {
        let grid: TimeGrid<f64> = TimeGrid::new(1.0, 0.25).unwrap();
        assert_eq!(grid.upper(0.0), 0.0);
        assert_eq!(grid.upper(0.1), 0.25);
        assert_eq!(grid.upper(0.25), 0.25);
        assert_eq!(grid.lower(0.25), 0.0);
        assert_eq!(grid.lower(0.26), 0.25);
    }

    #[test]
    fn grid_rejects_bad_step() {
        assert!(TimeGrid::<f64>::new(1.0, 0.0).is_err());
        assert!(TimeGrid::<f64>::new(1.0, -0.1).is_err());
    }

    #[test]
    fn constant_family_is_identity() {
        let fam = MetricFamily::constant(base3(), 1.0).unwrap();
        let d = fam.metric_at(0.7).unwrap();
        assert_eq!(d, base3());
    }

    #[test]
    fn conformal_at_zero_is_base() {
        let fam = MetricFamily::conformal(base3(), 0.1, 2.0).unwrap();
        let d = fam.metric_at(0.0).unwrap();
        assert_eq!(d, base3());
    }

    #[test]
    fn conformal_scales_entries() {
        // Entry 2 scales to 2 e^{0.1}; oracle is an independent exponential.
        let fam = MetricFamily::conformal(base3(), 0.1, 2.0).unwrap();
        let d = fam.metric_at(1.0).unwrap();
        let oracle = 2.0 * 0.1f64.exp();
        assert!((d[[0, 2]] - oracle).abs() < 1e-14);
        assert!((oracle - 2.21034).abs() < 1e-5);
    }

    #[test]
    fn domain_error_outside_horizon() {
        let fam = MetricFamily::conformal(base3(), 0.1, 2.0).unwrap();
        assert!(matches!(
            fam.metric_at(2.5),
            Err(SpaceError::TimeOutOfDomain { .. })
        ));
    }

    #[test]
    fn log_lipschitz_constant_family_is_zero() {
        let fam = MetricFamily::constant(base3(), 1.0).unwrap();
        let l = fam.estimate_log_lipschitz(&[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn log_lipschitz_conformal_is_rate() {
        let fam = MetricFamily::conformal(base3(), -0.37, 2.0).unwrap();
        let l = fam.estimate_log_lipschitz(&[0.0, 0.31, 1.17, 2.0]).unwrap();
        assert!((l - 0.37).abs() < 1e-12);
    }

    #[test]
    fn log_lipschitz_tabulated_matches_brute_force() {
        let times = vec![0.0, 0.5, 1.0];
        let snaps = vec![
            base3(),
            base3().mapv(|x| x * 1.2),
            base3().mapv(|x| x * 1.1),
        ];
        let fam = MetricFamily::tabulated(times.clone(), snaps.clone()).unwrap();
        let sample = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let est = fam.estimate_log_lipschitz(&sample).unwrap();

        // Exhaustive pair scan straight from the interpolant definition.
        let mut brute: f64 = 0.0;
        for a in 0..sample.len() {
            for b in (a + 1)..sample.len() {
                let da = fam.metric_at(sample[a]).unwrap();
                let db = fam.metric_at(sample[b]).unwrap();
                for i in 0..3 {
                    for j in 0..3 {
                        if i != j {
                            let q = ((db[[i, j]] / da[[i, j]]).ln()
                                / (sample[b] - sample[a]))
                                .abs();
                            brute = brute.max(q);
                        }
                    }
                }
            }
        }
        assert!((est - brute).abs() < 1e-12);
        // The declared constant dominates every sampled quotient.
        assert!(est <= fam.log_lipschitz() + 1e-12);
    }

    #[test]
    fn loglip_sandwich_holds_on_samples() {
        let fam = MetricFamily::conformal(base3(), 0.25, 2.0).unwrap();
        let l = fam.log_lipschitz();
        for &(s, t) in &[(0.0, 1.0), (0.3, 1.7), (1.9, 2.0)] {
            let ds = fam.metric_at(s).unwrap();
            let dt = fam.metric_at(t).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    if i == j {
                        continue;
                    }
                    let ratio: f64 = dt[[i, j]] / ds[[i, j]];
                    let gap: f64 = t - s;
                    assert!(ratio <= ((l * gap.abs()).exp()) * (1.0 + 1e-12));
                    assert!(ratio >= (-(l * gap.abs())).exp() * (1.0 - 1e-12));
                }
            }
        }
    }

    #[test]
    fn validate_metric_accepts_path_graph() {
        let report = validate_metric(&path_distances::<f64>(5, 0.5), 1e-9);
        assert!(report.is_valid());
    }

    #[test]
    fn validate_metric_finds_triangle_violation() {
        let mut d = path_distances::<f64>(3, 1.0);
        d[[0, 2]] = 5.0;
        d[[2, 0]] = 5.0;
        let report = validate_metric(&d, 1e-9);
        assert_eq!(report.triangle.len(), 2); // (0,1,2) and its mirror
        assert!(!report.is_valid());
    }

    #[test]
    fn validate_metric_matches_triple_scan_oracle() {
        // 4-point metric from points on a line, then perturbed.
        let pts: [f64; 4] = [0.0, 0.4, 1.1, 1.3];
        let mut d = Array2::<f64>::zeros((4, 4));
        for i in 0..4 {
            for j in 0..4 {
                d[[i, j]] = (pts[i] - pts[j]).abs();
            }
        }
        d[[1, 3]] *= 3.0;
        d[[3, 1]] *= 3.0;
        let report = validate_metric(&d, 1e-9);
        let mut oracle = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    continue;
                }
                for k in 0..4 {
                    if k == i || k == j {
                        continue;
                    }
                    if d[[i, j]] > d[[i, k]] + d[[k, j]] + 1e-9 {
                        oracle.push((i, k, j));
                    }
                }
            }
        }
        assert_eq!(report.triangle, oracle);
    }

    #[test]
    fn measure_zero_potential_is_base() {
        let fam = MeasureFamily::uniform(4, Potential::<f64>::Zero, 1.0);
        let m = fam.measure_at(0.7);
        for &x in m.iter() {
            assert!((x - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn measure_uniform_scaling_by_half() {
        // f_t(x) = t on two points, t = log 2 halves the uniform weights.
        let fam = MeasureFamily::uniform(
            2,
            Potential::Linear {
                v: array![1.0, 1.0],
            },
            1.0,
        );
        let m = fam.measure_at(2f64.ln());
        assert!((m[0] - 0.25).abs() < 1e-15);
        assert!((m[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn measure_matches_elementwise_oracle() {
        let v: Array1<f64> = array![0.3, -0.7, 1.1];
        let fam = MeasureFamily::uniform(
            3,
            Potential::Sine {
                amp: 0.5,
                freq: 2.0,
                v: v.clone(),
            },
            1.0,
        );
        let t = 0.43;
        let m = fam.measure_at(t);
        for i in 0..3 {
            let f = 0.5 * (2.0 * t).sin() * v[i];
            let oracle = (1.0 / 3.0) * (-f).exp();
            assert!((m[i] - oracle).abs() < 1e-15);
            assert!(m[i] > 0.0);
        }
    }

    #[test]
    fn f_rate_constant_potential_is_zero() {
        let fam = MeasureFamily::uniform(3, Potential::<f64>::Zero, 1.0);
        assert!(fam.f_rate(0.5).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn f_rate_linear_is_v() {
        let v: Array1<f64> = array![2.0, -1.0];
        let fam = MeasureFamily::uniform(2, Potential::Linear { v: v.clone() }, 1.0);
        let r = fam.f_rate(0.8).unwrap();
        assert_eq!(r, v);
    }

    #[test]
    fn f_rate_sine_matches_centered_difference() {
        let v: Array1<f64> = array![1.0, -0.5, 0.25];
        let fam = MeasureFamily::uniform(
            3,
            Potential::Sine {
                amp: 1.0,
                freq: 1.0,
                v: v.clone(),
            },
            1.0,
        );
        let analytic = fam.f_rate(0.0).unwrap();
        assert!((analytic[0] - v[0]).abs() < 1e-15);
        let d = 1e-6;
        let fp = fam.potential_at(d);
        let fm = fam.potential_at(-d);
        for i in 0..3 {
            let fd = (fp[i] - fm[i]) / (2.0 * d);
            let rel = (analytic[i] - fd).abs() / (1.0 + analytic[i].abs());
            assert!(rel < 1e-8);
        }
    }

    #[test]
    fn f_rate_tabulated_boundary_errors() {
        let fam = MeasureFamily::uniform(
            2,
            Potential::<f64>::Tabulated {
                times: vec![0.0, 1.0],
                values: vec![array![0.0, 0.0], array![1.0, -1.0]],
            },
            1.0,
        );
        assert!(matches!(
            fam.f_rate(0.0),
            Err(SpaceError::RateAtBoundary { .. })
        ));
        let mid = fam.f_rate(0.5).unwrap();
        assert!((mid[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn measure_total_mass_bounded_by_exp_bound() {
        let v: Array1<f64> = array![1.0, 1.0, 1.0];
        let fam = MeasureFamily::uniform(3, Potential::Linear { v }, 1.0);
        let c = fam.bound();
        for &t in &[0.0, 0.5, 1.0] {
            let total: f64 = fam.measure_at(t).sum();
            assert!(total <= c.exp() + 1e-12);
            assert!(fam.measure_at(t).iter().all(|&x| x > 0.0));
        }
    }
}
