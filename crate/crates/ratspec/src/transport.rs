//! Discrete optimal transport in the complex plane.
//!
//! Measures are weighted atom sets (typically poles weighted by their
//! spectral mass). [`exact_ot`] solves the balanced problem exactly with a
//! transportation simplex; [`sinkhorn`] and [`unbalanced_sinkhorn`] are
//! log-domain entropic solvers, the latter with KL-relaxed marginals.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RationalModel;

/// Weighted atoms in the complex plane.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    atoms: Vec<Complex64>,
    masses: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<Complex64>, masses: Vec<f64>) -> Result<Self> {
        if atoms.len() != masses.len() {
            return Err(Error::MeasureLengthMismatch { atoms: atoms.len(), masses: masses.len() });
        }
        if atoms.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        for (index, a) in atoms.iter().enumerate() {
            if !(a.re.is_finite() && a.im.is_finite()) {
                return Err(Error::NonFiniteAtom { index });
            }
        }
        for (index, &m) in masses.iter().enumerate() {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::BadMass { index, value: m });
            }
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroTotalMass { total });
        }
        Ok(Self { atoms, masses })
    }

    /// Atoms on the real line.
    pub fn from_reals(xs: &[f64], masses: &[f64]) -> Result<Self> {
        Self::new(xs.iter().map(|&x| Complex64::new(x, 0.0)).collect(), masses.to_vec())
    }

    /// Pole measure of a model: atoms at the poles, masses equal to the
    /// residue weights.
    pub fn from_model(model: &RationalModel) -> Result<Self> {
        Self::new(model.poles().to_vec(), model.residue_weights()?)
    }

    pub fn atoms(&self) -> &[Complex64] {
        &self.atoms
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Same atoms with masses rescaled to total 1.
    pub fn normalized(&self) -> Self {
        let total = self.total_mass();
        Self {
            atoms: self.atoms.clone(),
            masses: self.masses.iter().map(|m| m / total).collect(),
        }
    }
}

/// Solver parameters shared by the transport-backed distances.
#[derive(Debug, Clone)]
pub struct TransportConfig {
    /// Ground-cost exponent p >= 1.
    pub cost_exponent: f64,
    /// Entropic regularization strength; the regularizer is `(1/lambda) h(coupling)`.
    pub lambda: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// KL penalty on marginal deviation; `f64::INFINITY` means balanced.
    pub marginal_penalty: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            cost_exponent: 2.0,
            lambda: 100.0,
            max_iterations: 10_000,
            tolerance: 1e-8,
            marginal_penalty: 1.0,
        }
    }
}

impl TransportConfig {
    fn validate(&self) -> Result<()> {
        if !(self.cost_exponent.is_finite() && self.cost_exponent >= 1.0) {
            return Err(Error::BadCostExponent { value: self.cost_exponent });
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::BadLambda { value: self.lambda });
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::BadTolerance { value: self.tolerance });
        }
        if self.max_iterations == 0 {
            return Err(Error::BadIterationCap);
        }
        Ok(())
    }
}

/// A coupling between two discrete measures together with solver diagnostics.
///
/// `objective` is the transport cost `sum coupling * cost` (entropic and
/// marginal penalty terms are never folded in). `marginal_residual` is the L1
/// distance between the coupling's marginals and the input masses; for exact
/// and balanced solvers it is bounded by the solver tolerance, for unbalanced
/// runs it measures how much mass was created or destroyed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransportPlan {
    pub coupling: Vec<Vec<f64>>,
    pub objective: f64,
    pub iterations: usize,
    pub marginal_residual: f64,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        self.coupling.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let n = self.coupling.first().map_or(0, Vec::len);
        let mut cols = vec![0.0; n];
        for row in &self.coupling {
            for (j, v) in row.iter().enumerate() {
                cols[j] += v;
            }
        }
        cols
    }

    pub fn total_mass(&self) -> f64 {
        self.coupling.iter().flatten().sum()
    }
}

/// Pairwise ground costs `|a_i - b_j|^p`.
pub fn cost_matrix(a: &DiscreteMeasure, b: &DiscreteMeasure, p: f64) -> Result<Vec<Vec<f64>>> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::BadCostExponent { value: p });
    }
    Ok(a.atoms
        .iter()
        .map(|x| b.atoms.iter().map(|y| ground_cost(*x, *y, p)).collect())
        .collect())
}

pub(crate) fn ground_cost(x: Complex64, y: Complex64, p: f64) -> f64 {
    let d = (x - y).norm();
    if p == 1.0 {
        d
    } else if p == 2.0 {
        d * d
    } else {
        d.powf(p)
    }
}

fn marginal_residual(coupling: &[Vec<f64>], a: &[f64], b: &[f64]) -> f64 {
    let mut res = 0.0;
    let mut cols = vec![0.0; b.len()];
    for (i, row) in coupling.iter().enumerate() {
        let mut s = 0.0;
        for (j, v) in row.iter().enumerate() {
            s += v;
            cols[j] += v;
        }
        res += (s - a[i]).abs();
    }
    for (j, c) in cols.iter().enumerate() {
        res += (c - b[j]).abs();
    }
    res
}

/// Exact balanced optimal transport by the transportation simplex.
///
/// Requires equal total masses (within 1e-9 relative). The returned plan's
/// marginals match the inputs within 1e-9 and the objective is the exact LP
/// optimum up to floating-point rounding.
pub fn exact_ot(a: &DiscreteMeasure, b: &DiscreteMeasure, p: f64) -> Result<TransportPlan> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::BadCostExponent { value: p });
    }
    let (ta, tb) = (a.total_mass(), b.total_mass());
    if (ta - tb).abs() > 1e-9 * ta.max(tb) {
        return Err(Error::MassMismatch { left: ta, right: tb });
    }
    // Work on the positive-mass support, normalized to total 1.
    let rows: Vec<usize> = (0..a.len()).filter(|&i| a.masses[i] > 0.0).collect();
    let cols: Vec<usize> = (0..b.len()).filter(|&j| b.masses[j] > 0.0).collect();
    let src: Vec<f64> = rows.iter().map(|&i| a.masses[i] / ta).collect();
    let mut dst: Vec<f64> = cols.iter().map(|&j| b.masses[j] / tb).collect();
    // Absorb the normalization rounding so supplies and demands sum identically.
    let diff: f64 = src.iter().sum::<f64>() - dst.iter().sum::<f64>();
    let last = dst.len() - 1;
    dst[last] += diff;
    let cost: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| cols.iter().map(|&j| ground_cost(a.atoms[i], b.atoms[j], p)).collect())
        .collect();

    let (flows, basis, pivots) = transportation_simplex(&src, &dst, &cost)?;

    let mut coupling = vec![vec![0.0; b.len()]; a.len()];
    let mut objective = 0.0;
    for (k, &(i, j)) in basis.iter().enumerate() {
        let f = flows[k] * ta;
        coupling[rows[i]][cols[j]] += f;
        objective += f * cost[i][j];
    }
    let residual = marginal_residual(&coupling, &a.masses, &b.masses);
    Ok(TransportPlan { coupling, objective, iterations: pivots, marginal_residual: residual })
}

/// Core simplex on positive supplies/demands summing to the same total.
/// Returns basis flows, basis cells and the pivot count.
fn transportation_simplex(
    src: &[f64],
    dst: &[f64],
    cost: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<(usize, usize)>, usize)> {
    let m = src.len();
    let n = dst.len();
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(m + n - 1);
    let mut flow: Vec<f64> = Vec::with_capacity(m + n - 1);

    // North-west corner initial basic feasible solution. Exactly one of the
    // indices advances per step, so the basis is a spanning tree of size
    // m + n - 1 (degenerate zero flows included).
    {
        let mut a = src.to_vec();
        let mut b = dst.to_vec();
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            let d = a[i].min(b[j]);
            basis.push((i, j));
            flow.push(d.max(0.0));
            a[i] -= d;
            b[j] -= d;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if i < m - 1 && (a[i] <= b[j] || j == n - 1) {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    let cost_scale = cost.iter().flatten().fold(0.0f64, |acc, c| acc.max(c.abs()));
    let eps = 1e-12 * (1.0 + cost_scale);
    let max_pivots = 1_000 + 200 * (m + n) * (m + n);
    let mut cell_basis_index = vec![usize::MAX; m * n];
    for (k, &(i, j)) in basis.iter().enumerate() {
        cell_basis_index[i * n + j] = k;
    }

    let mut pivots = 0usize;
    loop {
        // Duals from the basis tree: u_i + v_j = c_ij on basis cells, u_0 = 0.
        let mut u = vec![f64::NAN; m];
        let mut v = vec![f64::NAN; n];
        let mut row_edges: Vec<Vec<usize>> = vec![Vec::new(); m];
        let mut col_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (k, &(i, j)) in basis.iter().enumerate() {
            row_edges[i].push(k);
            col_edges[j].push(k);
        }
        u[0] = 0.0;
        let mut stack: Vec<(bool, usize)> = vec![(true, 0)];
        while let Some((is_row, idx)) = stack.pop() {
            if is_row {
                for &k in &row_edges[idx] {
                    let (_, j) = basis[k];
                    if v[j].is_nan() {
                        v[j] = cost[idx][j] - u[idx];
                        stack.push((false, j));
                    }
                }
            } else {
                for &k in &col_edges[idx] {
                    let (i, _) = basis[k];
                    if u[i].is_nan() {
                        u[i] = cost[i][idx] - v[idx];
                        stack.push((true, i));
                    }
                }
            }
        }
        if u.iter().any(|x| x.is_nan()) || v.iter().any(|x| x.is_nan()) {
            return Err(Error::Internal("transportation basis is not a spanning tree".into()));
        }

        // Bland's rule: first improving cell in row-major order (anti-cycling).
        let mut entering = None;
        'scan: for i in 0..m {
            for j in 0..n {
                if cell_basis_index[i * n + j] == usize::MAX && cost[i][j] - u[i] - v[j] < -eps {
                    entering = Some((i, j));
                    break 'scan;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            return Ok((flow, basis, pivots));
        };
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Internal("transportation simplex pivot limit exceeded".into()));
        }

        // Unique tree path from the entering column back to the entering row.
        let path = tree_path(&basis, &row_edges, &col_edges, m, n, ei, ej)?;
        // Signs alternate -,+,-,... along the path; theta is the smallest
        // flow on a minus edge, the first such edge leaves the basis.
        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 && flow[k] < theta {
                theta = flow[k];
                leaving = k;
            }
        }
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                flow[k] -= theta;
            } else {
                flow[k] += theta;
            }
        }
        let (li, lj) = basis[leaving];
        cell_basis_index[li * n + lj] = usize::MAX;
        basis[leaving] = (ei, ej);
        flow[leaving] = theta;
        cell_basis_index[ei * n + ej] = leaving;
    }
}

/// Basis-edge path from column `ej` to row `ei` through the spanning tree,
/// in traversal order starting with the edge incident to `ej`.
fn tree_path(
    basis: &[(usize, usize)],
    row_edges: &[Vec<usize>],
    col_edges: &[Vec<usize>],
    m: usize,
    n: usize,
    ei: usize,
    ej: usize,
) -> Result<Vec<usize>> {
    // Nodes: rows 0..m, cols m..m+n. BFS from the entering row to the column.
    let total = m + n;
    let mut prev: Vec<(usize, usize)> = vec![(usize::MAX, usize::MAX); total]; // (node, edge)
    let mut seen = vec![false; total];
    let mut queue = std::collections::VecDeque::new();
    seen[ei] = true;
    queue.push_back(ei);
    while let Some(node) = queue.pop_front() {
        if node == m + ej {
            break;
        }
        let edges = if node < m { &row_edges[node] } else { &col_edges[node - m] };
        for &k in edges {
            let (i, j) = basis[k];
            let other = if node < m { m + j } else { i };
            if !seen[other] {
                seen[other] = true;
                prev[other] = (node, k);
                queue.push_back(other);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = m + ej;
    while node != ei {
        let (parent, edge) = prev[node];
        if parent == usize::MAX {
            return Err(Error::Internal("entering cell is not connected to the basis tree".into()));
        }
        path.push(edge);
        node = parent;
    }
    Ok(path)
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = values.collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

struct SinkhornProblem {
    rows: Vec<usize>,
    cols: Vec<usize>,
    a: Vec<f64>,
    b: Vec<f64>,
    cost: Vec<Vec<f64>>,
}

fn sinkhorn_problem(a: &DiscreteMeasure, b: &DiscreteMeasure, p: f64) -> SinkhornProblem {
    let rows: Vec<usize> = (0..a.len()).filter(|&i| a.masses[i] > 0.0).collect();
    let cols: Vec<usize> = (0..b.len()).filter(|&j| b.masses[j] > 0.0).collect();
    SinkhornProblem {
        a: rows.iter().map(|&i| a.masses[i]).collect(),
        b: cols.iter().map(|&j| b.masses[j]).collect(),
        cost: rows
            .iter()
            .map(|&i| cols.iter().map(|&j| ground_cost(a.atoms[i], b.atoms[j], p)).collect())
            .collect(),
        rows,
        cols,
    }
}

fn expand_coupling(
    prob: &SinkhornProblem,
    gamma: Vec<Vec<f64>>,
    full_rows: usize,
    full_cols: usize,
) -> Vec<Vec<f64>> {
    let mut coupling = vec![vec![0.0; full_cols]; full_rows];
    for (ri, &i) in prob.rows.iter().enumerate() {
        for (cj, &j) in prob.cols.iter().enumerate() {
            coupling[i][j] = gamma[ri][cj];
        }
    }
    coupling
}

/// Balanced entropic transport, fully in the log domain.
///
/// Minimizes `<coupling, cost> - (1/lambda) h(coupling)` subject to exact
/// marginals; the reported objective excludes the entropy term. Errors if the
/// L1 marginal residual does not reach `config.tolerance` within
/// `config.max_iterations` sweeps.
pub fn sinkhorn(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    config: &TransportConfig,
) -> Result<TransportPlan> {
    config.validate()?;
    let (ta, tb) = (a.total_mass(), b.total_mass());
    if (ta - tb).abs() > 1e-9 * ta.max(tb) {
        return Err(Error::MassMismatch { left: ta, right: tb });
    }
    let prob = sinkhorn_problem(a, b, config.cost_exponent);
    let eps = 1.0 / config.lambda;
    let (m, n) = (prob.a.len(), prob.b.len());
    let ln_a: Vec<f64> = prob.a.iter().map(|x| x.ln()).collect();
    let ln_b: Vec<f64> = prob.b.iter().map(|x| x.ln()).collect();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for it in 1..=config.max_iterations {
        iterations = it;
        for i in 0..m {
            f[i] = eps * ln_a[i] - eps * log_sum_exp((0..n).map(|j| (g[j] - prob.cost[i][j]) / eps));
        }
        for j in 0..n {
            g[j] = eps * ln_b[j] - eps * log_sum_exp((0..m).map(|i| (f[i] - prob.cost[i][j]) / eps));
        }
        // Column marginals are exact right after the g-update; the residual
        // is carried by the rows.
        residual = 0.0;
        for i in 0..m {
            let row: f64 = (0..n).map(|j| ((f[i] + g[j] - prob.cost[i][j]) / eps).exp()).sum();
            residual += (row - prob.a[i]).abs();
        }
        if residual <= config.tolerance {
            let gamma: Vec<Vec<f64>> = (0..m)
                .map(|i| (0..n).map(|j| ((f[i] + g[j] - prob.cost[i][j]) / eps).exp()).collect())
                .collect();
            let objective: f64 = gamma
                .iter()
                .zip(&prob.cost)
                .map(|(gr, cr)| gr.iter().zip(cr).map(|(x, c)| x * c).sum::<f64>())
                .sum();
            let coupling = expand_coupling(&prob, gamma, a.len(), b.len());
            let residual = marginal_residual(&coupling, &a.masses, &b.masses);
            return Ok(TransportPlan { coupling, objective, iterations, marginal_residual: residual });
        }
    }
    Err(Error::SinkhornNotConverged { iterations, residual, tolerance: config.tolerance })
}

/// Unbalanced entropic transport with KL-relaxed marginals.
///
/// Minimizes `<coupling, cost> - (1/lambda) h(coupling)
/// + rho KL(row sums || a) + rho KL(col sums || b)`. With
/// `marginal_penalty = infinity` this is exactly [`sinkhorn`]. Convergence is
/// declared when the sup-norm change of both potentials drops below
/// `config.tolerance`.
pub fn unbalanced_sinkhorn(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    config: &TransportConfig,
) -> Result<TransportPlan> {
    config.validate()?;
    let rho = config.marginal_penalty;
    if rho.is_infinite() && rho > 0.0 {
        return sinkhorn(a, b, config);
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::BadMarginalPenalty { value: rho });
    }
    let prob = sinkhorn_problem(a, b, config.cost_exponent);
    let eps = 1.0 / config.lambda;
    let kappa = rho / (rho + eps);
    let (m, n) = (prob.a.len(), prob.b.len());
    let ln_a: Vec<f64> = prob.a.iter().map(|x| x.ln()).collect();
    let ln_b: Vec<f64> = prob.b.iter().map(|x| x.ln()).collect();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    for it in 1..=config.max_iterations {
        iterations = it;
        change = 0.0;
        for i in 0..m {
            let new = kappa
                * (eps * ln_a[i] - eps * log_sum_exp((0..n).map(|j| (g[j] - prob.cost[i][j]) / eps)));
            change = change.max((new - f[i]).abs());
            f[i] = new;
        }
        for j in 0..n {
            let new = kappa
                * (eps * ln_b[j] - eps * log_sum_exp((0..m).map(|i| (f[i] - prob.cost[i][j]) / eps)));
            change = change.max((new - g[j]).abs());
            g[j] = new;
        }
        if change <= config.tolerance {
            let gamma: Vec<Vec<f64>> = (0..m)
                .map(|i| (0..n).map(|j| ((f[i] + g[j] - prob.cost[i][j]) / eps).exp()).collect())
                .collect();
            let objective: f64 = gamma
                .iter()
                .zip(&prob.cost)
                .map(|(gr, cr)| gr.iter().zip(cr).map(|(x, c)| x * c).sum::<f64>())
                .sum();
            let coupling = expand_coupling(&prob, gamma, a.len(), b.len());
            let residual = marginal_residual(&coupling, &a.masses, &b.masses);
            return Ok(TransportPlan { coupling, objective, iterations, marginal_residual: residual });
        }
    }
    Err(Error::SinkhornNotConverged { iterations, residual: change, tolerance: config.tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_measure(rng: &mut ChaCha8Rng, len: usize, normalized: bool) -> DiscreteMeasure {
        let atoms: Vec<Complex64> = (0..len)
            .map(|_| Complex64::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)))
            .collect();
        let mut masses: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..1.0)).collect();
        if normalized {
            let t: f64 = masses.iter().sum();
            masses.iter_mut().for_each(|m| *m /= t);
        }
        DiscreteMeasure::new(atoms, masses).unwrap()
    }

    /// Brute-force oracle: on equal uniform masses the LP optimum is attained
    /// at a permutation, so enumerate all of them.
    fn permutation_minimum(cost: &[Vec<f64>]) -> f64 {
        fn rec(cost: &[Vec<f64>], used: &mut [bool], row: usize, acc: f64, best: &mut f64) {
            if row == cost.len() {
                *best = best.min(acc);
                return;
            }
            for j in 0..cost.len() {
                if !used[j] {
                    used[j] = true;
                    rec(cost, used, row + 1, acc + cost[row][j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, &mut vec![false; cost.len()], 0, 0.0, &mut best);
        best
    }

    #[test]
    fn cost_matrix_known_values() {
        let a = DiscreteMeasure::from_reals(&[0.0, 1.0], &[0.5, 0.5]).unwrap();
        let b = DiscreteMeasure::from_reals(&[0.0, 3.0], &[0.5, 0.5]).unwrap();
        let c = cost_matrix(&a, &b, 2.0).unwrap();
        assert_eq!(c[0][0], 0.0);
        assert_eq!(c[0][1], 9.0);
        assert_eq!(c[1][0], 1.0);
        assert_eq!(c[1][1], 4.0);
        assert!(matches!(cost_matrix(&a, &b, 0.5), Err(Error::BadCostExponent { .. })));
    }

    #[test]
    fn identity_transport_is_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let len = rng.gen_range(1..8);
            let a = random_measure(&mut rng, len, true);
            let plan = exact_ot(&a, &a, 2.0).unwrap();
            assert!(plan.objective.abs() <= 1e-12, "objective {}", plan.objective);
            assert!(plan.marginal_residual <= 1e-9);
        }
    }

    #[test]
    fn matches_permutation_oracle_on_equal_masses() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let n = rng.gen_range(1..=4usize);
            let masses = vec![1.0 / n as f64; n];
            let a = DiscreteMeasure::new(
                (0..n).map(|_| Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0))).collect(),
                masses.clone(),
            )
            .unwrap();
            let b = DiscreteMeasure::new(
                (0..n).map(|_| Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0))).collect(),
                masses,
            )
            .unwrap();
            let p = if rng.gen_bool(0.5) { 1.0 } else { 2.0 };
            let cost = cost_matrix(&a, &b, p).unwrap();
            let oracle = permutation_minimum(&cost) / n as f64;
            let plan = exact_ot(&a, &b, p).unwrap();
            assert_relative_eq!(plan.objective, oracle, epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    /// Exact rational oracle for 3x3 instances: enumerate every spanning-tree
    /// basis of the transportation polytope in integer arithmetic.
    #[test]
    fn matches_rational_oracle_on_3x3() {
        fn rational_optimum(supply: [i64; 3], demand: [i64; 3], cost: [[i64; 3]; 3]) -> (i64, i64) {
            // Flows on a tree are integer combinations of the marginals.
            let cells: Vec<(usize, usize)> =
                (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).collect();
            let mut best: Option<i64> = None;
            // choose 5 of 9 cells
            for mask in 0u32..512 {
                if mask.count_ones() != 5 {
                    continue;
                }
                let chosen: Vec<(usize, usize)> =
                    cells.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, &c)| c).collect();
                // Solve by leaf elimination; infeasible or cyclic bases drop out.
                let mut flows: Vec<i64> = vec![0; 5];
                let mut remaining: Vec<(usize, usize, usize)> =
                    chosen.iter().enumerate().map(|(k, &(i, j))| (k, i, j)).collect();
                let mut supply = supply.to_vec();
                let mut demand = demand.to_vec();
                let mut ok = true;
                while !remaining.is_empty() {
                    let mut leaf = None;
                    for (pos, &(_, i, j)) in remaining.iter().enumerate() {
                        let row_deg = remaining.iter().filter(|&&(_, i2, _)| i2 == i).count();
                        let col_deg = remaining.iter().filter(|&&(_, _, j2)| j2 == j).count();
                        if row_deg == 1 || col_deg == 1 {
                            leaf = Some((pos, row_deg == 1));
                            break;
                        }
                    }
                    let Some((pos, is_row)) = leaf else {
                        ok = false; // contains a cycle
                        break;
                    };
                    let (k, i, j) = remaining.remove(pos);
                    let f = if is_row { supply[i] } else { demand[j] };
                    flows[k] = f;
                    supply[i] -= f;
                    demand[j] -= f;
                }
                if !ok || flows.iter().any(|&f| f < 0) || supply.iter().any(|&s| s != 0) {
                    continue;
                }
                let obj: i64 = chosen.iter().zip(&flows).map(|(&(i, j), &f)| cost[i][j] * f).sum();
                best = Some(best.map_or(obj, |b: i64| b.min(obj)));
            }
            let total: i64 = supply.iter().sum::<i64>().max(demand.iter().sum());
            (best.unwrap(), total)
        }

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..60 {
            let supply = [rng.gen_range(1..9i64), rng.gen_range(1..9), rng.gen_range(1..9)];
            let total: i64 = supply.iter().sum();
            let d0 = rng.gen_range(1..total - 1);
            let d1 = rng.gen_range(1..total - d0);
            let demand = [d0, d1, total - d0 - d1];
            let mut cost = [[0i64; 3]; 3];
            for row in cost.iter_mut() {
                for c in row.iter_mut() {
                    *c = rng.gen_range(0..20);
                }
            }
            let (best, _) = rational_optimum(supply, demand, cost);
            let exact_objective = best as f64 / total as f64;

            let a = DiscreteMeasure::from_reals(
                &[0.0, 1.0, 2.0],
                &supply.map(|s| s as f64 / total as f64),
            )
            .unwrap();
            let b = DiscreteMeasure::from_reals(
                &[0.0, 1.0, 2.0],
                &demand.map(|d| d as f64 / total as f64),
            )
            .unwrap();
            // Feed the integer costs directly through atoms is impossible, so
            // solve with the simplex on a custom instance instead.
            let (flows, basis, _) = transportation_simplex(
                &a.masses().to_vec(),
                &b.masses().to_vec(),
                &cost.iter().map(|r| r.iter().map(|&c| c as f64).collect()).collect::<Vec<_>>(),
            )
            .unwrap();
            let got: f64 = basis.iter().zip(&flows).map(|(&(i, j), f)| cost[i][j] as f64 * f).sum();
            assert_relative_eq!(got, exact_objective, epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn marginals_match_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let m = rng.gen_range(1..9usize);
            let n = rng.gen_range(1..9usize);
            let a = random_measure(&mut rng, m, true);
            let b = random_measure(&mut rng, n, true);
            let plan = exact_ot(&a, &b, 2.0).unwrap();
            assert!(plan.marginal_residual <= 1e-9, "residual {}", plan.marginal_residual);
        }
    }

    #[test]
    fn mass_mismatch_rejected() {
        let a = DiscreteMeasure::from_reals(&[0.0], &[1.0]).unwrap();
        let b = DiscreteMeasure::from_reals(&[1.0], &[0.5]).unwrap();
        assert!(matches!(exact_ot(&a, &b, 2.0), Err(Error::MassMismatch { .. })));
    }

    #[test]
    fn objective_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let (la, lb) = (rng.gen_range(1..7), rng.gen_range(1..7));
            let a = random_measure(&mut rng, la, true);
            let b = random_measure(&mut rng, lb, true);
            let ab = exact_ot(&a, &b, 2.0).unwrap().objective;
            let ba = exact_ot(&b, &a, 2.0).unwrap().objective;
            assert_relative_eq!(ab, ba, epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn rooted_objective_satisfies_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..60 {
            let p = if rng.gen_bool(0.5) { 1.0 } else { 2.0 };
            let (la, lb, lc) = (rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..6));
            let a = random_measure(&mut rng, la, true);
            let b = random_measure(&mut rng, lb, true);
            let c = random_measure(&mut rng, lc, true);
            let dab = exact_ot(&a, &b, p).unwrap().objective.powf(1.0 / p);
            let dbc = exact_ot(&b, &c, p).unwrap().objective.powf(1.0 / p);
            let dac = exact_ot(&a, &c, p).unwrap().objective.powf(1.0 / p);
            assert!(dac <= dab + dbc + 1e-9, "triangle violated: {dac} > {dab} + {dbc}");
        }
    }

    #[test]
    fn sinkhorn_upper_bounds_exact_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &lambda in &[10.0, 100.0, 1000.0] {
            let a = random_measure(&mut rng, 5, true);
            let b = random_measure(&mut rng, 5, true);
            let exact = exact_ot(&a, &b, 2.0).unwrap().objective;
            let cfg = TransportConfig {
                lambda,
                tolerance: 1e-10,
                max_iterations: 500_000,
                ..TransportConfig::default()
            };
            let plan = sinkhorn(&a, &b, &cfg).unwrap();
            assert!(
                plan.objective >= exact - 1e-9,
                "lambda={lambda}: sinkhorn {} below exact {exact}",
                plan.objective
            );
        }
    }

    #[test]
    fn sinkhorn_residual_nonincreasing() {
        // Cap the iteration count and read the residual off the error: the
        // residual after k sweeps must not increase with k.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_measure(&mut rng, 6, true);
        let b = random_measure(&mut rng, 6, true);
        let mut prev = f64::INFINITY;
        for k in 1..=40 {
            let cfg = TransportConfig {
                lambda: 50.0,
                tolerance: 1e-300,
                max_iterations: k,
                ..TransportConfig::default()
            };
            let Err(Error::SinkhornNotConverged { residual, .. }) = sinkhorn(&a, &b, &cfg) else {
                panic!("expected capped run to stop early");
            };
            assert!(residual <= prev * (1.0 + 1e-9) + 1e-15, "residual rose at sweep {k}");
            prev = residual;
        }
    }

    #[test]
    fn sinkhorn_survives_large_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_measure(&mut rng, 5, true);
        let b = random_measure(&mut rng, 5, true);
        let cfg = TransportConfig {
            lambda: 1e4,
            tolerance: 1e-12,
            max_iterations: 50,
            ..TransportConfig::default()
        };
        match sinkhorn(&a, &b, &cfg) {
            Ok(plan) => assert!(plan.objective.is_finite()),
            Err(Error::SinkhornNotConverged { residual, .. }) => assert!(residual.is_finite()),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn sinkhorn_parameter_validation() {
        let a = DiscreteMeasure::from_reals(&[0.0], &[1.0]).unwrap();
        let bad = TransportConfig { lambda: -1.0, ..TransportConfig::default() };
        assert!(matches!(sinkhorn(&a, &a, &bad), Err(Error::BadLambda { .. })));
        let bad = TransportConfig { tolerance: 0.0, ..TransportConfig::default() };
        assert!(matches!(sinkhorn(&a, &a, &bad), Err(Error::BadTolerance { .. })));
        let bad = TransportConfig { max_iterations: 0, ..TransportConfig::default() };
        assert!(matches!(sinkhorn(&a, &a, &bad), Err(Error::BadIterationCap)));
    }

    #[test]
    fn unbalanced_approaches_balanced_for_large_rho() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_measure(&mut rng, 5, true);
        let b = random_measure(&mut rng, 5, true);
        let balanced = exact_ot(&a, &b, 2.0).unwrap().objective;
        // The fixed point is approached at rate rho / (rho + 1/lambda) per
        // sweep, so a large penalty needs a tolerance the cap can reach.
        let cfg = TransportConfig {
            lambda: 200.0,
            marginal_penalty: 1e4,
            tolerance: 5e-6,
            max_iterations: 200_000,
            ..TransportConfig::default()
        };
        let plan = unbalanced_sinkhorn(&a, &b, &cfg).unwrap();
        assert!(
            (plan.objective - balanced).abs() <= 0.01 * balanced.max(1e-12),
            "unbalanced {} vs balanced {balanced}",
            plan.objective
        );
    }

    #[test]
    fn unbalanced_ignores_far_mass_when_rho_small() {
        // Source has an atom far from every target; with a small penalty the
        // solver prefers destroying that mass over hauling it.
        let a = DiscreteMeasure::from_reals(&[0.0, 1.0, 50.0], &[1.0, 1.0, 1.0]).unwrap();
        let b = DiscreteMeasure::from_reals(&[0.0, 1.0], &[1.0, 1.0]).unwrap();
        let cfg = TransportConfig {
            lambda: 100.0,
            marginal_penalty: 0.5,
            tolerance: 1e-10,
            max_iterations: 100_000,
            ..TransportConfig::default()
        };
        let plan = unbalanced_sinkhorn(&a, &b, &cfg).unwrap();
        let moved_from_far: f64 = plan.coupling[2].iter().sum();
        assert!(moved_from_far < 0.05 * plan.total_mass(), "far row moved {moved_from_far}");
    }

    #[test]
    fn unbalanced_with_infinite_rho_delegates_to_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_measure(&mut rng, 4, true);
        let b = random_measure(&mut rng, 4, true);
        let cfg = TransportConfig {
            marginal_penalty: f64::INFINITY,
            tolerance: 1e-9,
            max_iterations: 100_000,
            ..TransportConfig::default()
        };
        let plan = unbalanced_sinkhorn(&a, &b, &cfg).unwrap();
        assert!(plan.marginal_residual <= 1e-8);
    }

    #[test]
    fn zero_mass_atoms_are_ignored_but_kept_in_shape() {
        let a = DiscreteMeasure::from_reals(&[0.0, 9.0, 1.0], &[0.5, 0.0, 0.5]).unwrap();
        let b = DiscreteMeasure::from_reals(&[0.0, 1.0], &[0.5, 0.5]).unwrap();
        let plan = exact_ot(&a, &b, 2.0).unwrap();
        assert_eq!(plan.coupling.len(), 3);
        assert!(plan.coupling[1].iter().all(|&x| x == 0.0));
        assert!(plan.objective.abs() <= 1e-12);
    }

    #[test]
    fn plan_serialization_round_trips() {
        let plan = TransportPlan {
            coupling: vec![vec![0.25, 0.25], vec![0.0, 0.5]],
            objective: 1.25,
            iterations: 7,
            marginal_residual: 1e-12,
        };
        let text = serde_json::to_string(&plan).unwrap();
        let back: TransportPlan = serde_json::from_str(&text).unwrap();
        assert_eq!(back.coupling, plan.coupling);
        assert_eq!(back.objective, plan.objective);
        assert_eq!(back.iterations, plan.iterations);
    }
}
