//! Displacement interpolation, barycenters, and barycentric projection.
//!
//! Under the root metrics, geodesics are straight lines in pole space, so
//! interpolation and barycenters reduce to (weighted) arithmetic averages of
//! paired poles. Under the closed-form Wasserstein geometry, interpolation
//! blends inverse cumulative spectra. Free-support transport barycenters and
//! the simplex-constrained projection onto a dictionary are iterative and
//! return their best iterate together with a convergence flag.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::metrics::{optimal_assignment, Assignment};
use crate::model::{pole_order, DiscreteSpectrum, RationalModel};
use crate::transport::{exact_ot, DiscreteMeasure, TransportConfig};

/// Convex weights over a dictionary.
#[derive(Debug, Clone)]
pub struct BarycentricCoordinates {
    weights: Vec<f64>,
}

impl BarycentricCoordinates {
    /// Validates nonnegativity and unit sum (within 1e-9).
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::BadWeights { sum });
        }
        Ok(Self { weights })
    }

    /// Uniform weights over `n` entries.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n.max(1)])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dictionary_size(&self) -> usize {
        self.weights.len()
    }
}

/// A discretized shortest path between two spectra, in either geometry.
#[derive(Debug, Clone)]
pub struct InterpolationPath {
    pub t_values: Vec<f64>,
    pub points: PathPoints,
}

/// The interpolants along a path: pole sets or sampled densities.
#[derive(Debug, Clone)]
pub enum PathPoints {
    Roots(Vec<RationalModel>),
    Spectra(Vec<DiscreteSpectrum>),
}

/// Linear pole interpolation between models of equal order.
///
/// Poles are paired by the requested assignment, then each pair is traversed
/// linearly; the gain is interpolated geometrically. Stability is preserved
/// exactly: real parts are convex combinations of negative numbers.
pub fn interpolate_rd(
    m1: &RationalModel,
    m2: &RationalModel,
    t: f64,
    assignment: Assignment,
) -> Result<RationalModel> {
    if m1.order() != m2.order() {
        return Err(Error::OrderMismatch { left: m1.order(), right: m2.order() });
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::BadInterpolationParameter { t });
    }
    let q = m1.poles();
    let z = m2.poles();
    let sigma = match assignment {
        Assignment::Sorted => (0..q.len()).collect::<Vec<_>>(),
        Assignment::Optimal => optimal_assignment(q, z, 2.0)?,
    };
    let poles: Vec<Complex64> =
        q.iter().enumerate().map(|(i, &qi)| (1.0 - t) * qi + t * z[sigma[i]]).collect();
    assert!(poles.iter().all(|p| p.re < 0.0), "interpolants of stable models stay stable");
    let gain = m1.gain().powf(1.0 - t) * m2.gain().powf(t);
    RationalModel::new(poles, gain, m1.sample_rate())
}

/// Number of mass levels used to trace an interpolated quantile function.
const PATH_MASS_NODES: usize = 4000;

/// Displacement interpolant between two unit-energy spectra, rendered as a
/// density on `grid`.
///
/// The interpolant is defined by its inverse cumulative spectrum
/// `(1 - t) F1^-1 + t F2^-1`; it shifts peaks along the frequency axis
/// instead of cross-fading their amplitudes. Total mass is conserved up to
/// quadrature error.
pub fn interpolate_w2(
    m1: &RationalModel,
    m2: &RationalModel,
    t: f64,
    grid: &[f64],
) -> Result<DiscreteSpectrum> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::BadInterpolationParameter { t });
    }
    // A common internal grid covering both models keeps the two quantile
    // functions directly comparable.
    let mut poles = m1.poles().to_vec();
    poles.extend_from_slice(m2.poles());
    let extent = m1.grid_extent().max(m2.grid_extent());
    let base = crate::model::build_grid(&poles, extent);
    let f1 = m1.cumulative_spectrum(&base)?;
    let f2 = m2.cumulative_spectrum(&base)?;
    // Quantile of the interpolant at midpoints of a uniform mass partition.
    // Endpoints are excluded: there the rescaled cumulative saturates in
    // floating point at model-dependent tail locations.
    let mut q_t = Vec::with_capacity(PATH_MASS_NODES);
    for k in 0..PATH_MASS_NODES {
        let u = (k as f64 + 0.5) / PATH_MASS_NODES as f64;
        let q1 = f1.inverse(u * f1.terminal())?;
        let q2 = f2.inverse(u * f2.terminal())?;
        q_t.push((1.0 - t) * q1 + t * q2);
    }
    // Invert the sampled quantile function into a CDF on the target grid,
    // then differentiate centrally for the density.
    let n = grid.len();
    if n < 2 {
        return Err(Error::GridTooShort { len: n });
    }
    let cdf: Vec<f64> = grid
        .iter()
        .map(|&w| q_t.partition_point(|&q| q <= w) as f64 / PATH_MASS_NODES as f64)
        .collect();
    let mut density = vec![0.0; n];
    for k in 0..n {
        let lo = k.saturating_sub(1);
        let hi = (k + 1).min(n - 1);
        density[k] = ((cdf[hi] - cdf[lo]) / (grid[hi] - grid[lo])).max(0.0);
    }
    DiscreteSpectrum::new(grid.to_vec(), density)
}

/// Pole-space barycenter: the coordinate-wise lambda-average of the sorted
/// pole lists. With `weighted` set, each pole is additionally weighted by its
/// residue weight, mirroring how the root measures weight their atoms.
pub fn barycenter_rd(
    models: &[RationalModel],
    lambda: &BarycentricCoordinates,
    weighted: bool,
) -> Result<RationalModel> {
    if models.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if lambda.dictionary_size() != models.len() {
        return Err(Error::WeightCountMismatch { expected: models.len(), got: lambda.dictionary_size() });
    }
    let order = models[0].order();
    for m in models {
        if m.order() != order {
            return Err(Error::OrderMismatch { left: order, right: m.order() });
        }
    }
    let weights: Vec<Vec<f64>> = if weighted {
        models.iter().map(|m| m.residue_weights()).collect::<Result<_>>()?
    } else {
        models.iter().map(|_| vec![1.0; order]).collect()
    };
    let mut poles = Vec::with_capacity(order);
    for j in 0..order {
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = 0.0;
        for (i, m) in models.iter().enumerate() {
            let w = lambda.weights()[i] * weights[i][j];
            num += w * m.poles()[j];
            den += w;
        }
        poles.push(num / den);
    }
    let mut log_gain = 0.0;
    for (i, m) in models.iter().enumerate() {
        log_gain += lambda.weights()[i] * m.gain().ln();
    }
    RationalModel::new(poles, log_gain.exp(), models[0].sample_rate())
}

/// A free-support barycenter solve: the best iterate, its objective, and
/// whether the fixed point was reached within the iteration budget.
#[derive(Debug, Clone)]
pub struct BarycenterResult {
    pub measure: DiscreteMeasure,
    /// `sum_i lambda_i W_p^p(measure, input_i)` at the returned iterate.
    pub objective: f64,
    pub converged: bool,
    /// Objective after each fixed-point iteration, nonincreasing.
    pub trace: Vec<f64>,
}

const BARYCENTER_ITERATIONS: usize = 50;

/// Free-support transport barycenter of weighted atom sets.
///
/// Alternates between coupling the current barycenter to every input with
/// the exact solver and moving each support point to the lambda-average of
/// its barycentric projections. Masses stay fixed at the warm start (uniform
/// over the largest input support); only positions move. The problem is
/// non-convex, so the result is a local minimizer: the best iterate is kept
/// and `converged` reports whether the objective settled.
pub fn barycenter_ot(
    measures: &[DiscreteMeasure],
    lambda: &BarycentricCoordinates,
    config: &TransportConfig,
) -> Result<BarycenterResult> {
    barycenter_ot_from(measures, lambda, config, None)
}

/// [`barycenter_ot`] with an explicit warm start. When `init` is given, its
/// atoms and masses seed the fixed point, so the returned objective never
/// exceeds the objective of `init` itself.
pub fn barycenter_ot_from(
    measures: &[DiscreteMeasure],
    lambda: &BarycentricCoordinates,
    config: &TransportConfig,
    init: Option<&DiscreteMeasure>,
) -> Result<BarycenterResult> {
    if measures.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if lambda.dictionary_size() != measures.len() {
        return Err(Error::WeightCountMismatch {
            expected: measures.len(),
            got: lambda.dictionary_size(),
        });
    }
    let total = measures[0].total_mass();
    for m in measures {
        let t = m.total_mass();
        if (t - total).abs() > 1e-6 * total.max(1.0) {
            return Err(Error::MassMismatch { left: total, right: t });
        }
    }
    if measures.len() == 1 {
        return Ok(BarycenterResult {
            measure: measures[0].clone(),
            objective: 0.0,
            converged: true,
            trace: vec![0.0],
        });
    }
    let p = config.cost_exponent;
    let (mut atoms, masses) = match init {
        Some(q) => (q.atoms().to_vec(), q.masses().to_vec()),
        None => {
            // Warm start: lambda-average of the input quantile atoms, which is
            // the pole-space barycenter when the supports line up.
            let support = measures.iter().map(DiscreteMeasure::len).max().unwrap();
            let atoms: Vec<Complex64> = (0..support)
                .map(|j| {
                    let u = (j as f64 + 0.5) / support as f64;
                    let mut x = Complex64::new(0.0, 0.0);
                    for (i, m) in measures.iter().enumerate() {
                        x += lambda.weights()[i] * measure_quantile(m, u);
                    }
                    x
                })
                .collect();
            (atoms, vec![total / support as f64; support])
        }
    };
    let support = atoms.len();

    let objective_of = |atoms: &[Complex64]| -> Result<(f64, Vec<crate::transport::TransportPlan>)> {
        let q = DiscreteMeasure::new(atoms.to_vec(), masses.clone())?;
        let mut value = 0.0;
        let mut plans = Vec::with_capacity(measures.len());
        for (i, m) in measures.iter().enumerate() {
            let plan = exact_ot(&q, m, p)?;
            value += lambda.weights()[i] * plan.objective;
            plans.push(plan);
        }
        Ok((value, plans))
    };

    let (mut best_value, mut plans) = objective_of(&atoms)?;
    let mut best_atoms = atoms.clone();
    let mut trace = vec![best_value];
    let mut converged = false;
    for _ in 0..BARYCENTER_ITERATIONS {
        // Barycentric projection: each support point moves to the
        // lambda-average of the mass-weighted targets it ships to.
        let mut moved = vec![Complex64::new(0.0, 0.0); support];
        for (i, m) in measures.iter().enumerate() {
            for (j, row) in plans[i].coupling.iter().enumerate() {
                let shipped: f64 = row.iter().sum();
                if shipped <= 0.0 {
                    continue;
                }
                let mut target = Complex64::new(0.0, 0.0);
                for (k, &flow) in row.iter().enumerate() {
                    target += flow * m.atoms()[k];
                }
                moved[j] += lambda.weights()[i] * target / shipped;
            }
        }
        let (value, new_plans) = objective_of(&moved)?;
        if value < best_value {
            best_value = value;
            best_atoms = moved.clone();
        }
        let settled = (trace.last().unwrap() - value).abs() <= config.tolerance * (1.0 + value);
        trace.push(value.min(*trace.last().unwrap()));
        atoms = moved;
        plans = new_plans;
        if settled {
            converged = true;
            break;
        }
    }
    let _ = atoms;
    Ok(BarycenterResult {
        measure: DiscreteMeasure::new(best_atoms, masses)?,
        objective: best_value,
        converged,
        trace,
    })
}

/// Step quantile of a weighted atom set in the canonical atom order.
fn measure_quantile(m: &DiscreteMeasure, u: f64) -> Complex64 {
    let mut order: Vec<usize> = (0..m.len()).collect();
    order.sort_by(|&a, &b| pole_order(&m.atoms()[a], &m.atoms()[b]));
    let total = m.total_mass();
    let mut acc = 0.0;
    for &idx in &order {
        acc += m.masses()[idx] / total;
        if u <= acc {
            return m.atoms()[idx];
        }
    }
    m.atoms()[*order.last().unwrap()]
}

/// A simplex-constrained projection: coordinates, the achieved outer
/// objective, and whether the search settled before the iteration budget.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub coordinates: BarycentricCoordinates,
    /// `W_p^p(query, barycenter(dictionary, coordinates))` at the optimum found.
    pub objective: f64,
    pub converged: bool,
}

const PROJECTION_ITERATIONS: usize = 200;

/// Projects `query` onto the barycentric hull of `dictionary`: finds convex
/// weights whose barycenter is transport-closest to the query.
///
/// The weights are parameterized through a softmax so the search is
/// unconstrained; gradients of the outer objective are estimated by central
/// differences. The search restarts from the uniform point and from every
/// vertex, keeping the best local minimizer (the outer problem is
/// non-convex).
pub fn barycentric_coordinates(
    query: &DiscreteMeasure,
    dictionary: &[DiscreteMeasure],
    config: &TransportConfig,
) -> Result<ProjectionResult> {
    if dictionary.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    let d = dictionary.len();
    let p = config.cost_exponent;
    let query = query.normalized();
    let dict: Vec<DiscreteMeasure> = dictionary.iter().map(DiscreteMeasure::normalized).collect();

    let objective_of = |theta: &[f64]| -> Result<f64> {
        let lambda = BarycentricCoordinates::new(softmax(theta))?;
        let bary = barycenter_ot(&dict, &lambda, config)?;
        Ok(exact_ot(&bary.measure, &query, p)?.objective)
    };

    let mut starts = vec![vec![0.0; d]];
    for k in 0..d {
        let mut theta = vec![0.0; d];
        theta[k] = 4.0;
        starts.push(theta);
    }
    let budget = PROJECTION_ITERATIONS / starts.len().max(1);
    let mut best_theta = vec![0.0; d];
    let mut best_value = f64::INFINITY;
    let mut converged = false;
    for start in starts {
        let mut theta = start;
        let mut value = objective_of(&theta)?;
        let mut step = 1.0;
        let mut settled = false;
        for _ in 0..budget {
            let mut grad = vec![0.0; d];
            let h = 1e-3;
            for k in 0..d {
                let mut up = theta.clone();
                up[k] += h;
                let mut down = theta.clone();
                down[k] -= h;
                grad[k] = (objective_of(&up)? - objective_of(&down)?) / (2.0 * h);
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm <= 1e-12 {
                settled = true;
                break;
            }
            // Backtracking descent step on the softmax parameters.
            let mut improved = false;
            while step > 1e-6 {
                let trial: Vec<f64> =
                    theta.iter().zip(&grad).map(|(t, g)| t - step * g / norm).collect();
                let trial_value = objective_of(&trial)?;
                if trial_value < value {
                    theta = trial;
                    value = trial_value;
                    step *= 1.5;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                settled = true;
                break;
            }
        }
        if value < best_value {
            best_value = value;
            best_theta = theta;
            converged = settled;
        }
    }
    Ok(ProjectionResult {
        coordinates: BarycentricCoordinates::new(softmax(&best_theta))?,
        objective: best_value,
        converged,
    })
}

fn softmax(theta: &[f64]) -> Vec<f64> {
    let m = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = theta.iter().map(|t| (t - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Weights from the sum-constrained least-squares projection of a root
/// vector onto dictionary root vectors.
#[derive(Debug, Clone)]
pub struct CoordinatesFit {
    /// Sum to 1; nonnegative when solved with the nonnegativity constraint.
    pub weights: Vec<f64>,
    /// Euclidean residual between the query root vector and the combination.
    pub residual: f64,
    /// Set when the constrained normal equations were singular and a
    /// minimum-norm solution was taken.
    pub rank_deficient: bool,
}

/// Projects the stacked root vector of `query` onto the affine (and by
/// default convex) hull of the dictionary root vectors: minimizes
/// `|D lambda - q|` subject to `sum lambda = 1`, with `lambda >= 0` when
/// `nonnegative` is set.
///
/// The nonnegative solve enumerates active sets, which is exact for the
/// small dictionaries this projection is meant for.
pub fn coordinates_rd_leastsquares(
    query: &RationalModel,
    dictionary: &[RationalModel],
    nonnegative: bool,
) -> Result<CoordinatesFit> {
    if dictionary.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    let order = query.order();
    for m in dictionary {
        if m.order() != order {
            return Err(Error::OrderMismatch { left: order, right: m.order() });
        }
    }
    let d = dictionary.len();
    if d > 20 {
        return Err(Error::EmptyDictionary);
    }
    let q = root_vector(query);
    let cols: Vec<Vec<f64>> = dictionary.iter().map(root_vector).collect();

    if !nonnegative {
        return solve_equality_ls(&q, &cols, &(0..d).collect::<Vec<_>>());
    }
    // Enumerate free sets; pick the feasible solution with least residual.
    let mut best: Option<CoordinatesFit> = None;
    for mask in 1u32..(1 << d) {
        let free: Vec<usize> = (0..d).filter(|&k| mask & (1 << k) != 0).collect();
        let Ok(fit) = solve_equality_ls(&q, &cols, &free) else { continue };
        if fit.weights.iter().any(|&w| w < -1e-10) {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => fit.residual < b.residual - 1e-12,
        };
        if better {
            best = Some(fit);
        }
    }
    let mut fit = best.expect("singleton free sets always yield feasible weights");
    for w in &mut fit.weights {
        *w = w.max(0.0);
    }
    Ok(fit)
}

/// Stacked real parts over imaginary parts of the sorted poles.
pub fn root_vector(model: &RationalModel) -> Vec<f64> {
    let mut v: Vec<f64> = model.poles().iter().map(|p| p.re).collect();
    v.extend(model.poles().iter().map(|p| p.im));
    v
}

/// Least squares of `|D_free w - q|` with `sum w = 1` on the free set, zeros
/// elsewhere, via the KKT system solved by SVD (minimum-norm on rank
/// deficiency, reported through the flag).
fn solve_equality_ls(q: &[f64], cols: &[Vec<f64>], free: &[usize]) -> Result<CoordinatesFit> {
    use nalgebra::{DMatrix, DVector};
    let f = free.len();
    let mut kkt = DMatrix::zeros(f + 1, f + 1);
    let mut rhs = DVector::zeros(f + 1);
    for (a, &ia) in free.iter().enumerate() {
        for (b, &ib) in free.iter().enumerate() {
            kkt[(a, b)] = dot(&cols[ia], &cols[ib]);
        }
        rhs[a] = dot(&cols[ia], q);
        kkt[(a, f)] = 1.0;
        kkt[(f, a)] = 1.0;
    }
    rhs[f] = 1.0;
    let svd = kkt.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if !(smax > 0.0) {
        return Err(Error::SingularFit { condition: f64::INFINITY });
    }
    let smin = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    let rank_deficient = smin < 1e-10 * smax;
    let solution = svd
        .solve(&rhs, 1e-12 * smax)
        .map_err(|e| Error::Internal(format!("KKT solve failed: {e}")))?;
    let mut weights = vec![0.0; cols.len()];
    for (a, &ia) in free.iter().enumerate() {
        weights[ia] = solution[a];
    }
    let mut residual = 0.0;
    for row in 0..q.len() {
        let mut r = q[row];
        for (k, col) in cols.iter().enumerate() {
            r -= weights[k] * col[row];
        }
        residual += r * r;
    }
    Ok(CoordinatesFit { weights, residual: residual.sqrt(), rank_deficient })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Samples both geometries along a shared set of interpolation times.
pub fn root_path(
    m1: &RationalModel,
    m2: &RationalModel,
    t_values: &[f64],
    assignment: Assignment,
) -> Result<InterpolationPath> {
    let models = t_values
        .iter()
        .map(|&t| interpolate_rd(m1, m2, t, assignment))
        .collect::<Result<Vec<_>>>()?;
    Ok(InterpolationPath { t_values: t_values.to_vec(), points: PathPoints::Roots(models) })
}

/// Displacement path in the spectral geometry, sampled on `grid`.
pub fn spectral_path(
    m1: &RationalModel,
    m2: &RationalModel,
    t_values: &[f64],
    grid: &[f64],
) -> Result<InterpolationPath> {
    let spectra = t_values
        .iter()
        .map(|&t| interpolate_w2(m1, m2, t, grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(InterpolationPath { t_values: t_values.to_vec(), points: PathPoints::Spectra(spectra) })
}
