//! Exact discrete information and transport quantities.
//!
//! Entropy, relative entropy, total variation, mutual information (plain and
//! conditional), and Wasserstein-1 on finite metric spaces, plus the
//! Pinsker / Bretagnolle-Huber comparison function. All quantities are in
//! nats. Infinite relative entropy is carried by the dedicated [`KlValue`]
//! marker rather than a float sentinel.

use crate::prob::{FiniteDistribution, JointTable, MASS_TOL};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfoError {
    #[error("support sizes differ: {left} vs {right}")]
    SupportMismatch { left: usize, right: usize },
    #[error("relative entropy cannot be negative (got {0})")]
    NegativeKl(f64),
    #[error("metric violation: {0}")]
    MetricViolation(String),
    #[error("joint table has {got} variables, expected {expected}")]
    WrongArity { got: usize, expected: usize },
    #[error("transport solver failed to converge")]
    TransportFailed,
}

/// Relative entropy in nats, with an explicit marker for the
/// absolutely-continuous clause failing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KlValue {
    Finite(f64),
    Infinite,
}

impl KlValue {
    /// Checked constructor for raw inputs (e.g. parsed from a file).
    pub fn from_nats(value: f64) -> Result<Self, InfoError> {
        if value.is_nan() || value < 0.0 {
            Err(InfoError::NegativeKl(value))
        } else if value.is_infinite() {
            Ok(KlValue::Infinite)
        } else {
            Ok(KlValue::Finite(value))
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, KlValue::Infinite)
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            KlValue::Finite(v) => Some(*v),
            KlValue::Infinite => None,
        }
    }
}

/// Shannon entropy, `-sum p log p`, in `[0, log n]`.
pub fn entropy(p: &FiniteDistribution) -> f64 {
    let h: f64 = p
        .weights()
        .iter()
        .map(|&w| if w > 0.0 { -w * w.ln() } else { 0.0 })
        .sum();
    h.max(0.0)
}

/// Relative entropy `KL(p || q)` in nats; `Infinite` if some `p_i > 0` has
/// `q_i = 0`.
pub fn kl(p: &FiniteDistribution, q: &FiniteDistribution) -> Result<KlValue, InfoError> {
    if p.support_size() != q.support_size() {
        return Err(InfoError::SupportMismatch {
            left: p.support_size(),
            right: q.support_size(),
        });
    }
    let mut total = 0.0;
    for (&pi, &qi) in p.weights().iter().zip(q.weights()) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Ok(KlValue::Infinite);
            }
            total += pi * (pi / qi).ln();
        }
    }
    Ok(KlValue::Finite(total.max(0.0)))
}

/// Total variation distance, half the L1 distance, in `[0, 1]`.
pub fn tv(p: &FiniteDistribution, q: &FiniteDistribution) -> Result<f64, InfoError> {
    if p.support_size() != q.support_size() {
        return Err(InfoError::SupportMismatch {
            left: p.support_size(),
            right: q.support_size(),
        });
    }
    let l1: f64 = p
        .weights()
        .iter()
        .zip(q.weights())
        .map(|(&a, &b)| (a - b).abs())
        .sum();
    Ok(l1 / 2.0)
}

/// `min(sqrt(kl/2), sqrt(1 - exp(-kl)))`: the tighter of Pinsker's and
/// Bretagnolle-Huber's upper bounds on total variation.
pub fn pinsker_bh_bound(kl_value: KlValue) -> f64 {
    match kl_value {
        KlValue::Infinite => 1.0,
        KlValue::Finite(k) => {
            let pinsker = (k / 2.0).sqrt();
            let bh = (1.0 - (-k).exp()).max(0.0).sqrt();
            pinsker.min(bh)
        }
    }
}

/// A finite metric space: symmetric, zero diagonal, triangle inequality,
/// all checked exhaustively at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMetric {
    n_points: usize,
    dist: Vec<f64>,
}

impl FiniteMetric {
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<Self, InfoError> {
        let n = matrix.len();
        if n == 0 {
            return Err(InfoError::MetricViolation("empty point set".into()));
        }
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != n {
                return Err(InfoError::MetricViolation(format!(
                    "row {i} has length {}, expected {n}",
                    row.len()
                )));
            }
        }
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let d = matrix[i][j];
                if !d.is_finite() || d < 0.0 {
                    return Err(InfoError::MetricViolation(format!(
                        "d({i},{j}) = {d} is not a non-negative real"
                    )));
                }
                if i == j && d.abs() > MASS_TOL {
                    return Err(InfoError::MetricViolation(format!(
                        "nonzero diagonal d({i},{i}) = {d}"
                    )));
                }
                if (matrix[i][j] - matrix[j][i]).abs() > MASS_TOL {
                    return Err(InfoError::MetricViolation(format!(
                        "asymmetry at ({i},{j}): {} vs {}",
                        matrix[i][j], matrix[j][i]
                    )));
                }
                dist[i * n + j] = d;
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if dist[i * n + k] > dist[i * n + j] + dist[j * n + k] + MASS_TOL {
                        return Err(InfoError::MetricViolation(format!(
                            "triangle inequality fails on ({i},{j},{k})"
                        )));
                    }
                }
            }
        }
        Ok(Self { n_points: n, dist })
    }

    /// The discrete metric: distance 1 between distinct points.
    pub fn discrete(n_points: usize) -> Self {
        assert!(n_points > 0);
        let mut dist = vec![1.0; n_points * n_points];
        for i in 0..n_points {
            dist[i * n_points + i] = 0.0;
        }
        Self { n_points, dist }
    }

    /// Metric induced by positions on the real line.
    pub fn from_line(points: &[f64]) -> Self {
        let n = points.len();
        assert!(n > 0);
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                dist[i * n + j] = (points[i] - points[j]).abs();
            }
        }
        Self { n_points: n, dist }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n_points + j]
    }
}

/// A transport plan between two distributions on the same support.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    n_rows: usize,
    n_cols: usize,
    matrix: Vec<f64>,
}

impl Coupling {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.n_cols + j]
    }

    /// Checks the marginal constraints within `tol` (1e-9 in the contract).
    pub fn check_marginals(
        &self,
        p: &FiniteDistribution,
        q: &FiniteDistribution,
        tol: f64,
    ) -> bool {
        if p.support_size() != self.n_rows || q.support_size() != self.n_cols {
            return false;
        }
        for i in 0..self.n_rows {
            let row: f64 = (0..self.n_cols).map(|j| self.mass(i, j)).sum();
            if (row - p.weight(i)).abs() > tol {
                return false;
            }
        }
        for j in 0..self.n_cols {
            let col: f64 = (0..self.n_rows).map(|i| self.mass(i, j)).sum();
            if (col - q.weight(j)).abs() > tol {
                return false;
            }
        }
        true
    }
}

/// Exact Wasserstein-1 distance between `p` and `q` under `metric`, solved as
/// a transportation linear program (network simplex on the bipartite
/// transport graph). Returns the optimum and an optimal coupling witness.
pub fn wasserstein1(
    p: &FiniteDistribution,
    q: &FiniteDistribution,
    metric: &FiniteMetric,
) -> Result<(f64, Coupling), InfoError> {
    let n = metric.n_points();
    if p.support_size() != n || q.support_size() != n {
        return Err(InfoError::SupportMismatch {
            left: p.support_size(),
            right: q.support_size(),
        });
    }
    let rows: Vec<usize> = (0..n).filter(|&i| p.weight(i) > 0.0).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| q.weight(j) > 0.0).collect();
    let supplies: Vec<f64> = rows.iter().map(|&i| p.weight(i)).collect();
    let demands: Vec<f64> = cols.iter().map(|&j| q.weight(j)).collect();
    let cost = |r: usize, c: usize| metric.distance(rows[r], cols[c]);

    let flows = transport_simplex(&supplies, &demands, cost)?;

    let mut matrix = vec![0.0; n * n];
    let mut value = 0.0;
    for (r, row) in flows.iter().enumerate() {
        for (c, &f) in row.iter().enumerate() {
            matrix[rows[r] * n + cols[c]] = f;
            value += f * cost(r, c);
        }
    }
    Ok((
        value,
        Coupling {
            n_rows: n,
            n_cols: n,
            matrix,
        },
    ))
}

/// Transportation simplex on a dense bipartite graph with balanced supplies
/// and demands. Bland's entering rule (lowest index with negative reduced
/// cost) keeps pivoting deterministic and cycle-free.
fn transport_simplex(
    supplies: &[f64],
    demands: &[f64],
    cost: impl Fn(usize, usize) -> f64,
) -> Result<Vec<Vec<f64>>, InfoError> {
    let n = supplies.len();
    let m = demands.len();
    debug_assert!(n > 0 && m > 0);

    // Northwest-corner initial basis: exactly n + m - 1 arcs, degenerate
    // zero-flow arcs included.
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(n + m - 1);
    let mut flow = vec![vec![0.0; m]; n];
    {
        let mut a = supplies.to_vec();
        let mut b = demands.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let f = a[i].min(b[j]);
            basis.push((i, j));
            flow[i][j] = f;
            a[i] -= f;
            b[j] -= f;
            if basis.len() == n + m - 1 {
                break;
            }
            if i < n - 1 && a[i] <= 0.0 {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    let max_iters = 200 * (n + m) * (n + m) + 1000;
    for _ in 0..max_iters {
        // Node potentials from the basis tree: u_i + v_j = c_ij on basic arcs.
        let mut u = vec![f64::NAN; n];
        let mut v = vec![f64::NAN; m];
        u[0] = 0.0;
        let mut settled = 1;
        while settled < n + m {
            let mut progressed = false;
            for &(i, j) in &basis {
                if u[i].is_nan() && !v[j].is_nan() {
                    u[i] = cost(i, j) - v[j];
                    settled += 1;
                    progressed = true;
                } else if !u[i].is_nan() && v[j].is_nan() {
                    v[j] = cost(i, j) - u[i];
                    settled += 1;
                    progressed = true;
                }
            }
            if !progressed {
                return Err(InfoError::TransportFailed);
            }
        }

        // Entering arc: Bland's rule over negative reduced costs.
        let mut entering = None;
        'scan: for i in 0..n {
            for j in 0..m {
                if cost(i, j) - u[i] - v[j] < -1e-12 {
                    entering = Some((i, j));
                    break 'scan;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            return Ok(flow);
        };

        // Unique tree path from the entering column node back to the entering
        // row node; the cycle alternates signs starting with + on the
        // entering arc.
        let path = basis_path(&basis, n, ei, ej).ok_or(InfoError::TransportFailed)?;
        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for (pos, &arc_idx) in path.iter().enumerate() {
            if pos % 2 == 0 {
                // minus arc
                let (i, j) = basis[arc_idx];
                if flow[i][j] < theta {
                    theta = flow[i][j];
                    leaving = arc_idx;
                }
            }
        }
        if leaving == usize::MAX {
            return Err(InfoError::TransportFailed);
        }
        flow[ei][ej] += theta;
        for (pos, &arc_idx) in path.iter().enumerate() {
            let (i, j) = basis[arc_idx];
            if pos % 2 == 0 {
                flow[i][j] = (flow[i][j] - theta).max(0.0);
            } else {
                flow[i][j] += theta;
            }
        }
        basis[leaving] = (ei, ej);
    }
    Err(InfoError::TransportFailed)
}

/// Arc indices of the basis-tree path from column node `ej` to row node `ei`,
/// alternating column/row endpoints. Returns `None` if the basis is not a
/// spanning tree (which would be a solver bug).
fn basis_path(basis: &[(usize, usize)], n: usize, ei: usize, ej: usize) -> Option<Vec<usize>> {
    // Node encoding: rows are 0..n, columns are n..n+m.
    let target = ei;
    let start = n + ej;
    let n_nodes = n + basis.len() + 1; // upper bound on node count
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n_nodes + basis.len()];
    let mut visited = vec![false; parent.len()];
    let mut queue = std::collections::VecDeque::new();
    visited[start] = true;
    queue.push_back(start);
    while let Some(node) = queue.pop_front() {
        if node == target {
            let mut arcs = Vec::new();
            let mut cur = node;
            while let Some((arc, prev)) = parent[cur] {
                arcs.push(arc);
                cur = prev;
            }
            arcs.reverse();
            return Some(arcs);
        }
        for (idx, &(i, j)) in basis.iter().enumerate() {
            let (a, b) = (i, n + j);
            let next = if a == node {
                Some(b)
            } else if b == node {
                Some(a)
            } else {
                None
            };
            if let Some(next) = next {
                if !visited[next] {
                    visited[next] = true;
                    parent[next] = Some((idx, node));
                    queue.push_back(next);
                }
            }
        }
    }
    None
}

/// Mutual information `I(X;Y)` of a two-variable joint table, in nats.
/// Equals `KL(joint || product of marginals)`.
pub fn mutual_information(joint: &JointTable) -> Result<f64, InfoError> {
    if joint.dims().len() != 2 {
        return Err(InfoError::WrongArity {
            got: joint.dims().len(),
            expected: 2,
        });
    }
    let (nx, ny) = (joint.dims()[0], joint.dims()[1]);
    let px = joint.marginal(0).expect("valid joint");
    let py = joint.marginal(1).expect("valid joint");
    let mut total = 0.0;
    for x in 0..nx {
        for y in 0..ny {
            let pxy = joint.weight(&[x, y]);
            if pxy > 0.0 {
                total += pxy * (pxy / (px.weight(x) * py.weight(y))).ln();
            }
        }
    }
    Ok(total.max(0.0))
}

/// Conditional mutual information `I(X;Y|Z)` of a three-variable joint table
/// over `(X, Y, Z)`, in nats. Zero-mass `z` slices contribute nothing.
pub fn conditional_mutual_information(joint: &JointTable) -> Result<f64, InfoError> {
    if joint.dims().len() != 3 {
        return Err(InfoError::WrongArity {
            got: joint.dims().len(),
            expected: 3,
        });
    }
    let pz = joint.marginal(2).expect("valid joint");
    let mut total = 0.0;
    for z in 0..joint.dims()[2] {
        let wz = pz.weight(z);
        if wz > 0.0 {
            let slice = joint.condition(2, z).expect("slice has positive mass");
            total += wz * mutual_information(&slice)?;
        }
    }
    Ok(total.max(0.0))
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::prob::FiniteDistribution;
    use proptest::prelude::*;

    fn pair() -> impl Strategy<Value = (FiniteDistribution, FiniteDistribution)> {
        (2usize..6).prop_flat_map(|n| {
            (
                proptest::collection::vec(1e-6..1e3f64, n),
                proptest::collection::vec(1e-6..1e3f64, n),
            )
                .prop_map(|(a, b)| {
                    (
                        FiniteDistribution::normalize(&a).unwrap(),
                        FiniteDistribution::normalize(&b).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn tv_within_pinsker_bh_envelope((p, q) in pair()) {
            let t = tv(&p, &q).unwrap();
            let envelope = pinsker_bh_bound(kl(&p, &q).unwrap());
            prop_assert!(t <= envelope + 1e-12);
        }

        #[test]
        fn transport_equals_tv_under_discrete_metric((p, q) in pair()) {
            let metric = FiniteMetric::discrete(p.support_size());
            let (w, coupling) = wasserstein1(&p, &q, &metric).unwrap();
            prop_assert!((w - tv(&p, &q).unwrap()).abs() <= 1e-9);
            prop_assert!(coupling.check_marginals(&p, &q, 1e-9));
        }

        #[test]
        fn entropy_bounded_by_log_support(raw in proptest::collection::vec(1e-6..1e3f64, 1..8)) {
            let p = FiniteDistribution::normalize(&raw).unwrap();
            let h = entropy(&p);
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (p.support_size() as f64).ln() + 1e-12);
        }
    }
}
