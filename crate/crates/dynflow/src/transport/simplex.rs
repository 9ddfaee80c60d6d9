//! Transportation network simplex.
//!
//! Solves `min <c, x>` over the transportation polytope
//! `{x >= 0 : x 1 = a, x^T 1 = b}` exactly, returning a vertex-optimal plan
//! together with the tree duals. Pivoting uses Bland's rule on both the
//! entering and the leaving arc, which rules out cycling on degenerate
//! problems.

use ndarray::{Array1, Array2};

#[derive(Debug, Clone)]
pub struct SimplexSolution {
    pub plan: Array2<f64>,
    pub cost: f64,
    pub row_duals: Array1<f64>,
    pub col_duals: Array1<f64>,
    pub pivots: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum SimplexError {
    #[error("simplex did not terminate within {0} pivots")]
    PivotCap(usize),
    #[error("supplies and demands must be nonnegative")]
    NegativeMass,
}

struct Tree {
    m: usize,
    // Basic cells as (row, col); exactly m + n - 1 entries.
    basis: Vec<(usize, usize)>,
    // Adjacency over nodes 0..m (rows) and m..m+n (cols): (neighbor, basis index).
    adj: Vec<Vec<(usize, usize)>>,
}

impl Tree {
    fn new(m: usize, n: usize, basis: Vec<(usize, usize)>) -> Self {
        let mut tree = Tree {
            m,
            basis,
            adj: vec![Vec::new(); m + n],
        };
        tree.rebuild_adj(n);
        tree
    }

    fn rebuild_adj(&mut self, n: usize) {
        for v in self.adj.iter_mut() {
            v.clear();
        }
        let _ = n;
        for (k, &(i, j)) in self.basis.iter().enumerate() {
            self.adj[i].push((self.m + j, k));
            self.adj[self.m + j].push((i, k));
        }
    }

    /// Tree duals with u[0] = 0: u_i + v_j = c_ij on basic cells.
    fn duals(&self, cost: &Array2<f64>, n: usize) -> (Array1<f64>, Array1<f64>) {
        let m = self.m;
        let mut u = Array1::<f64>::zeros(m);
        let mut v = Array1::<f64>::zeros(n);
        let mut seen = vec![false; m + n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(node) = stack.pop() {
            for &(next, k) in &self.adj[node] {
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                let (i, j) = self.basis[k];
                if next >= m {
                    v[next - m] = cost[[i, j]] - u[i];
                } else {
                    u[next] = cost[[i, j]] - v[j];
                }
                stack.push(next);
            }
        }
        (u, v)
    }

    /// Unique tree path from row node `p` to column node `m + q`, returned as
    /// basis indices in path order.
    fn path(&self, p: usize, q: usize) -> Vec<usize> {
        let target = self.m + q;
        let total = self.adj.len();
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; total];
        let mut seen = vec![false; total];
        let mut queue = std::collections::VecDeque::new();
        seen[p] = true;
        queue.push_back(p);
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &(next, k) in &self.adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    prev[next] = Some((node, k));
                    queue.push_back(next);
                }
            }
        }
        let mut edges = Vec::new();
        let mut node = target;
        while node != p {
            let (parent, k) = prev[node].expect("tree is connected");
            edges.push(k);
            node = parent;
        }
        edges.reverse();
        edges
    }
}

/// North-west corner starting basis: exactly `m + n - 1` cells forming a
/// spanning staircase, including zero-flow cells on degenerate ties.
fn northwest_basis(a: &[f64], b: &[f64]) -> (Vec<(usize, usize)>, Vec<f64>) {
    let m = a.len();
    let n = b.len();
    let mut basis = Vec::with_capacity(m + n - 1);
    let mut flow = Vec::with_capacity(m + n - 1);
    let mut rem_a = a.to_vec();
    let mut rem_b = b.to_vec();
    let (mut i, mut j) = (0usize, 0usize);
    loop {
        let x = rem_a[i].min(rem_b[j]);
        basis.push((i, j));
        flow.push(x);
        rem_a[i] -= x;
        rem_b[j] -= x;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if (rem_a[i] <= rem_b[j] && i < m - 1) || j == n - 1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    (basis, flow)
}

pub fn solve(a: &Array1<f64>, b: &Array1<f64>, cost: &Array2<f64>) -> Result<SimplexSolution, SimplexError> {
    let m = a.len();
    let n = b.len();
    if a.iter().any(|&x| x < 0.0) || b.iter().any(|&x| x < 0.0) {
        return Err(SimplexError::NegativeMass);
    }
    let a_slice = a.as_slice().expect("contiguous");
    let b_slice = b.as_slice().expect("contiguous");
    let (basis, mut flow) = northwest_basis(a_slice, b_slice);
    let mut tree = Tree::new(m, n, basis);

    let cost_scale = cost.iter().fold(0.0f64, |acc, &c| acc.max(c.abs()));
    let tol = 1e-12 * (1.0 + cost_scale);
    let cap = 2000 * (m + n) * (m + n) + 10_000;

    let mut pivots = 0usize;
    loop {
        let (u, v) = tree.duals(cost, n);

        // Bland's rule: smallest-index cell with negative reduced cost.
        let mut entering: Option<(usize, usize)> = None;
        'scan: for i in 0..m {
            for j in 0..n {
                let reduced = cost[[i, j]] - u[i] - v[j];
                if reduced < -tol {
                    entering = Some((i, j));
                    break 'scan;
                }
            }
        }
        let Some((p, q)) = entering else {
            break;
        };

        pivots += 1;
        if pivots > cap {
            return Err(SimplexError::PivotCap(cap));
        }

        // Alternating cycle: edges at even path positions lose flow when the
        // entering cell gains. Leaving arc by min ratio, ties broken by
        // smallest cell index (Bland).
        let path = tree.path(p, q);
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        let mut leave_cell = usize::MAX;
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 != 0 {
                continue;
            }
            let f = flow[k];
            let (bi, bj) = tree.basis[k];
            let cell = bi * n + bj;
            let tie = (f - theta).abs() <= 1e-15 * (1.0 + theta.abs());
            if !tie && f < theta {
                theta = f;
                leave = k;
                leave_cell = cell;
            } else if tie {
                theta = theta.min(f);
                if cell < leave_cell {
                    leave = k;
                    leave_cell = cell;
                }
            }
        }
        assert_ne!(leave, usize::MAX, "source-to-sink path has odd length");

        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                flow[k] -= theta;
            } else {
                flow[k] += theta;
            }
        }
        tree.basis[leave] = (p, q);
        flow[leave] = theta;
        tree.rebuild_adj(n);
    }

    let mut plan = Array2::<f64>::zeros((m, n));
    for (k, &(i, j)) in tree.basis.iter().enumerate() {
        plan[[i, j]] += flow[k].max(0.0);
    }
    let cost_total = plan
        .indexed_iter()
        .map(|((i, j), &x)| cost[[i, j]] * x)
        .sum();
    let (u, v) = tree.duals(cost, n);
    Ok(SimplexSolution {
        plan,
        cost: cost_total,
        row_duals: u,
        col_duals: v,
        pivots,
    })
}
