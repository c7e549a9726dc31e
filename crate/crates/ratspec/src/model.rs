//! All-pole rational models: estimation, residue calculus and spectra.
//!
//! A [`RationalModel`] is a strictly stable transfer function
//! `G(s) = gain / prod_i (s - p_i)` in the continuous-time Laplace domain.
//! Its power spectrum is `Phi(w) = |G(iw)|^2`. Models fit from real signals
//! have pole sets closed under complex conjugation; the constructor also
//! admits non-symmetric sets (e.g. a lone complex pole), which every
//! spectral routine here handles by integrating both frequency signs.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Discrete-time root magnitudes are capped strictly inside the unit circle
/// so the continuous-time map `p = fs * ln z` always yields `Re p < 0`.
pub const ROOT_MAGNITUDE_CAP: f64 = 1.0 - 1e-6;

/// Floor on `|z|` before taking the logarithm.
pub const ROOT_MAGNITUDE_FLOOR: f64 = 1e-8;

/// Relative separation below which two poles count as repeated.
pub const SIMPLE_POLE_TOLERANCE: f64 = 1e-8;

/// A uniformly sampled real-valued signal.
#[derive(Debug, Clone)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::BadSampleRate { value: sample_rate });
        }
        if let Some(index) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteSample { index });
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Sampled spectrum: a density on a strictly increasing frequency grid.
#[derive(Debug, Clone)]
pub struct DiscreteSpectrum {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl DiscreteSpectrum {
    pub fn new(grid: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if grid.len() != density.len() {
            return Err(Error::MeasureLengthMismatch { atoms: grid.len(), masses: density.len() });
        }
        if grid.len() < 2 {
            return Err(Error::GridTooShort { len: grid.len() });
        }
        for i in 0..grid.len() {
            if !grid[i].is_finite() || (i > 0 && grid[i] <= grid[i - 1]) {
                return Err(Error::UnsortedSpectrumGrid { index: i });
            }
            if !(density[i].is_finite() && density[i] >= 0.0) {
                return Err(Error::BadMass { index: i, value: density[i] });
            }
        }
        Ok(Self { grid, density })
    }

    /// Total mass under trapezoidal quadrature.
    pub fn mass(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    /// Per-node quadrature masses: `density * trapezoid weight`. Summing them
    /// reproduces [`Self::mass`] exactly.
    pub fn bin_masses(&self) -> Vec<f64> {
        let n = self.grid.len();
        let mut w = vec![0.0; n];
        for i in 0..n - 1 {
            let h = 0.5 * (self.grid[i + 1] - self.grid[i]);
            w[i] += h;
            w[i + 1] += h;
        }
        w.iter().zip(&self.density).map(|(wi, di)| wi * di).collect()
    }

    /// Same grid with the density rescaled to unit mass.
    pub fn normalized(&self) -> Result<Self> {
        let mass = self.mass();
        if !(mass > 0.0) {
            return Err(Error::ZeroMassSpectrum);
        }
        Ok(Self {
            grid: self.grid.clone(),
            density: self.density.iter().map(|d| d / mass).collect(),
        })
    }
}

/// Strictly stable all-pole model `G(s) = gain / prod (s - p_i)`.
///
/// Poles are stored sorted by (imaginary part, real part), so two models of
/// equal order can be paired index-by-index; that pairing is the "sorted"
/// assignment used throughout [`crate::metrics`]. The sample rate records the
/// rate of the signal the model was estimated from (1.0 for analytic
/// constructions).
#[derive(Debug, Clone)]
pub struct RationalModel {
    poles: Vec<Complex64>,
    gain: f64,
    sample_rate: f64,
}

/// Total order on complex numbers by (imaginary part, real part).
pub(crate) fn pole_order(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re))
}

impl RationalModel {
    pub fn new(mut poles: Vec<Complex64>, gain: f64, sample_rate: f64) -> Result<Self> {
        if poles.is_empty() {
            return Err(Error::EmptyPoleSet);
        }
        for (index, p) in poles.iter().enumerate() {
            if !(p.re.is_finite() && p.im.is_finite()) {
                return Err(Error::NonFinitePole { index });
            }
            if p.re >= 0.0 {
                return Err(Error::UnstablePole { index, re: p.re, im: p.im });
            }
        }
        if !(gain.is_finite() && gain > 0.0) {
            return Err(Error::BadGain { value: gain });
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::BadSampleRate { value: sample_rate });
        }
        poles.sort_by(pole_order);
        Ok(Self { poles, gain, sample_rate })
    }

    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn order(&self) -> usize {
        self.poles.len()
    }

    pub fn with_gain(&self, gain: f64) -> Result<Self> {
        Self::new(self.poles.clone(), gain, self.sample_rate)
    }

    /// True when the pole set is closed under conjugation within `tol`.
    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        let mut taken = vec![false; self.poles.len()];
        'outer: for (i, p) in self.poles.iter().enumerate() {
            if p.im.abs() <= tol {
                continue;
            }
            for (j, q) in self.poles.iter().enumerate() {
                if i != j && !taken[j] && (q - p.conj()).norm() <= tol * (1.0 + p.norm()) {
                    taken[j] = true;
                    continue 'outer;
                }
            }
            return false;
        }
        true
    }

    /// Dilation `p_i -> alpha * p_i` with the gain left untouched.
    pub fn scale_poles(&self, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::BadScale { value: alpha });
        }
        Self::new(self.poles.iter().map(|p| p * alpha).collect(), self.gain, self.sample_rate)
    }

    /// Residues of the partial-fraction expansion `G(s) = sum r_i / (s - p_i)`.
    ///
    /// For an all-pole `G` with simple poles, `r_i = gain / prod_{j != i}
    /// (p_i - p_j)`. Errors when two poles are closer than
    /// `SIMPLE_POLE_TOLERANCE * (1 + max |p|)`.
    pub fn residues(&self) -> Result<Vec<Complex64>> {
        let scale = 1.0 + self.poles.iter().map(|p| p.norm()).fold(0.0, f64::max);
        let threshold = SIMPLE_POLE_TOLERANCE * scale;
        for i in 0..self.poles.len() {
            for j in i + 1..self.poles.len() {
                let separation = (self.poles[i] - self.poles[j]).norm();
                if separation < threshold {
                    return Err(Error::RepeatedPole { i, j, separation, threshold });
                }
            }
        }
        Ok((0..self.poles.len())
            .map(|i| {
                let mut denom = Complex64::new(1.0, 0.0);
                for j in 0..self.poles.len() {
                    if j != i {
                        denom *= self.poles[i] - self.poles[j];
                    }
                }
                Complex64::new(self.gain, 0.0) / denom
            })
            .collect())
    }

    /// Spectral mass attached to each pole: `w_i = -pi |r_i|^2 / Re p_i`,
    /// which equals the full-line integral of `|r_i / (iw - p_i)|^2`.
    pub fn residue_weights(&self) -> Result<Vec<f64>> {
        Ok(self
            .residues()?
            .iter()
            .zip(&self.poles)
            .map(|(r, p)| -std::f64::consts::PI * r.norm_sqr() / p.re)
            .collect())
    }

    /// Closed-form spectral energy `integral over the real line of |G(iw)|^2 dw`.
    ///
    /// Expanding `G` in partial fractions and closing the contour in the left
    /// half plane gives `E = sum_{i,j} r_i conj(r_j) * (-2 pi) / (p_i + conj(p_j))`;
    /// the single-pole diagonal terms are exactly the residue weights.
    pub fn spectral_energy(&self) -> Result<f64> {
        let rs = self.residues()?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, ri) in rs.iter().enumerate() {
            for (j, rj) in rs.iter().enumerate() {
                // Re(p_i + conj(p_j)) < 0 for stable poles, so never zero.
                acc += ri * rj.conj() * (-2.0 * std::f64::consts::PI)
                    / (self.poles[i] + self.poles[j].conj());
            }
        }
        debug_assert!(acc.im.abs() <= 1e-8 * (1.0 + acc.re.abs()));
        Ok(acc.re)
    }

    /// Rescales the gain so that [`Self::spectral_energy`] becomes 1.
    pub fn normalize_energy(&self) -> Result<Self> {
        let energy = self.spectral_energy()?;
        if !(energy.is_finite() && energy > 0.0) {
            return Err(Error::Internal(format!("non-positive spectral energy {energy}")));
        }
        self.with_gain(self.gain / energy.sqrt())
    }

    /// Pointwise power spectrum `Phi(w) = gain^2 / prod |iw - p_i|^2`.
    pub fn evaluate_spectrum(&self, freqs: &[f64]) -> Vec<f64> {
        freqs
            .iter()
            .map(|&w| {
                let mut denom = 1.0;
                for p in &self.poles {
                    denom *= p.re * p.re + (w - p.im) * (w - p.im);
                }
                self.gain * self.gain / denom
            })
            .collect()
    }

    /// Density accumulated by the one-sided cumulative spectrum:
    /// `Phi(w) + Phi(-w)`, i.e. `2 Phi(w)` for conjugate-symmetric models.
    pub fn folded_density(&self, freqs: &[f64]) -> Vec<f64> {
        let pos = self.evaluate_spectrum(freqs);
        let neg: Vec<f64> = freqs.iter().map(|&w| -w).collect();
        let neg = self.evaluate_spectrum(&neg);
        pos.iter().zip(&neg).map(|(a, b)| a + b).collect()
    }

    /// Default grid extent: `4 max |Im p| + 1000 max |Re p|`. Even a lone
    /// Lorentzian of width `|Re p|` keeps under 1e-3 of its mass beyond this,
    /// so the cumulative-terminal tolerance is always reachable.
    pub fn grid_extent(&self) -> f64 {
        let max_im = self.poles.iter().map(|p| p.im.abs()).fold(0.0, f64::max);
        let max_re = self.poles.iter().map(|p| p.re.abs()).fold(0.0, f64::max);
        4.0 * max_im + 1000.0 * max_re
    }

    /// Default one-sided frequency grid for cumulative spectra.
    ///
    /// A logarithmically dense base covers the whole extent while arctan-spaced
    /// clusters around each pole frequency resolve narrow peaks; pure log
    /// spacing cannot resolve a peak of width `|Re p|` sitting at `|Im p|`.
    pub fn default_grid(&self) -> Vec<f64> {
        build_grid(&self.poles, self.grid_extent())
    }

    /// One-sided cumulative spectrum `F(w) = integral_0^w [Phi + Phi(-.)]` by
    /// trapezoidal quadrature on `grid`.
    ///
    /// Requires a model normalized to unit energy (within 1e-6) and a strictly
    /// increasing grid starting at 0; the result must reach within 1e-3 of 1
    /// at the end of the grid or an error reports the shortfall.
    pub fn cumulative_spectrum(&self, grid: &[f64]) -> Result<CumulativeSpectrum> {
        if grid.len() < 2 {
            return Err(Error::GridTooShort { len: grid.len() });
        }
        if grid[0] != 0.0 {
            return Err(Error::GridStart { start: grid[0] });
        }
        for i in 1..grid.len() {
            if !grid[i].is_finite() || grid[i] <= grid[i - 1] {
                return Err(Error::GridNotIncreasing { index: i });
            }
        }
        let energy = self.spectral_energy()?;
        if (energy - 1.0).abs() > 1e-6 {
            return Err(Error::NotNormalized { energy });
        }
        let density = self.folded_density(grid);
        let values = trapezoid_cumulative(grid, &density);
        let terminal = *values.last().unwrap();
        if (terminal - 1.0).abs() > 1e-3 {
            return Err(Error::CumulativeTerminal { terminal });
        }
        Ok(CumulativeSpectrum { grid: grid.to_vec(), values })
    }
}

/// Monotone cumulative spectrum on a one-sided grid, `F(0) = 0`.
#[derive(Debug, Clone)]
pub struct CumulativeSpectrum {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl CumulativeSpectrum {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Smallest grid-interpolated frequency `w` with `F(w) >= eps`.
    pub fn inverse(&self, eps: f64) -> Result<f64> {
        if !(eps >= 0.0 && eps <= self.terminal()) {
            return Err(Error::QuantileOutOfRange { eps, max: self.terminal() });
        }
        Ok(interp_quantile(&self.grid, &self.values, eps))
    }
}

/// Generalized inverse of a cumulative spectrum; see [`CumulativeSpectrum::inverse`].
pub fn inverse_cumulative(f: &CumulativeSpectrum, eps: f64) -> Result<f64> {
    f.inverse(eps)
}

/// Trapezoidal integral of samples `ys` over nodes `xs`.
pub(crate) fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..xs.len() {
        acc += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
    }
    acc
}

/// Running trapezoidal integral; output[0] = 0.
pub(crate) fn trapezoid_cumulative(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..xs.len() {
        acc += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
        out.push(acc);
    }
    out
}

/// Smallest interpolated x with F(x) >= eps, for monotone samples F over x.
/// Flat stretches resolve to their left edge. Caller guarantees
/// `0 <= eps <= F(end)`.
pub(crate) fn interp_quantile(xs: &[f64], fs: &[f64], eps: f64) -> f64 {
    let k = fs.partition_point(|&v| v < eps);
    if k == 0 {
        return xs[0];
    }
    if k == xs.len() {
        return xs[xs.len() - 1];
    }
    // fs[k-1] < eps <= fs[k], so the span is strictly positive.
    let span = fs[k] - fs[k - 1];
    xs[k - 1] + (eps - fs[k - 1]) / span * (xs[k] - xs[k - 1])
}

/// Shared grid builder: log-dense base + uniform cover + arctan clusters at
/// each pole frequency with scale `|Re p|`. Deterministic for a given pole set.
pub(crate) fn build_grid(poles: &[Complex64], extent: f64) -> Vec<f64> {
    assert!(extent > 0.0, "grid extent must be positive");
    let mut grid = Vec::with_capacity(8192);
    grid.push(0.0);
    // Logarithmic base: 4095 points spanning five decades up to the extent.
    let lo = extent * 1e-5;
    let ratio = (extent / lo).ln();
    for k in 0..4095 {
        grid.push(lo * (ratio * k as f64 / 4094.0).exp());
    }
    // Uniform cover so no interval is ever left long.
    for k in 1..=1024 {
        grid.push(extent * k as f64 / 1024.0);
    }
    // Arctan-spaced cluster per pole: under w = b + sigma tan(theta) the
    // Lorentzian factor becomes slowly varying, so uniform theta nodes
    // resolve the peak at any width.
    let mut seen: Vec<(f64, f64)> = Vec::new();
    for p in poles {
        let b = p.im.abs();
        let sigma = p.re.abs().max(extent * 1e-12);
        if seen.iter().any(|&(sb, ss)| sb == b && ss == sigma) {
            continue;
        }
        seen.push((b, sigma));
        let theta_max = 1.560_8; // tan = ~100: cluster spans +-100 widths
        for k in 0..601 {
            let theta = -theta_max + 2.0 * theta_max * k as f64 / 600.0;
            let w = b + sigma * theta.tan();
            if w > 0.0 && w < extent {
                grid.push(w);
            }
        }
        // Log ladders continue outward from the cluster edge. On a 1/d^2
        // tail, trapezoid error per interval scales with the squared log
        // step, so 300 multiplicative steps keep the tail mass accurate
        // regardless of how narrow the peak is.
        let inner = 100.0 * sigma;
        for side in [-1.0, 1.0] {
            let far = if side > 0.0 { extent - b } else { b };
            if far > inner {
                let ratio = (far / inner).ln();
                for k in 0..=300 {
                    let d = inner * (ratio * k as f64 / 300.0).exp();
                    let w = b + side * d;
                    if w > 0.0 && w < extent {
                        grid.push(w);
                    }
                }
            }
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if *grid.last().unwrap() < extent {
        grid.push(extent);
    }
    grid
}

/// Roots of a real polynomial given coefficients in descending degree order,
/// computed as eigenvalues of the companion matrix.
pub fn polynomial_roots(coefficients: &[f64]) -> Result<Vec<Complex64>> {
    if let Some(index) = coefficients.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFiniteCoefficient { index });
    }
    let Some((&lead, rest)) = coefficients.split_first() else {
        return Err(Error::LeadingCoefficientZero);
    };
    if lead == 0.0 {
        return Err(Error::LeadingCoefficientZero);
    }
    let n = rest.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let monic: Vec<f64> = rest.iter().map(|c| c / lead).collect();
    let companion = DMatrix::from_fn(n, n, |i, j| {
        if i == 0 {
            -monic[j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    Ok(companion.complex_eigenvalues().iter().copied().collect())
}

/// Least-squares autoregressive fit of `order` poles to `signal`.
///
/// Solves `x_t ~ sum_k phi_k x_{t-k}` in the least-squares sense, takes the
/// roots of the predictor polynomial, reflects any root outside the unit disc
/// to `1 / conj(z)`, caps magnitudes at `ROOT_MAGNITUDE_CAP`, folds roots on
/// the negative real axis to their magnitude, and maps to continuous time via
/// `p = sample_rate * ln z`. The gain is set so the model has unit spectral
/// energy.
pub fn fit_ar(signal: &Signal, order: usize) -> Result<RationalModel> {
    if order == 0 {
        return Err(Error::OrderZero);
    }
    let x = signal.samples();
    if x.len() <= 2 * order {
        return Err(Error::SignalTooShort { len: x.len(), order });
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Err(Error::DegenerateSignal { value: lo });
    }

    let phi = ar_coefficients(x, order)?;
    let mut coeffs = Vec::with_capacity(order + 1);
    coeffs.push(1.0);
    coeffs.extend(phi.iter().map(|c| -c));
    let roots = polynomial_roots(&coeffs)?;
    let stabilized: Vec<Complex64> = roots.into_iter().map(stabilize_root).collect();
    let symmetrized = symmetrize_conjugates(stabilized);

    let fs = signal.sample_rate();
    let poles: Vec<Complex64> = symmetrized
        .iter()
        .map(|z| {
            // A root on the negative real axis alternates sign at the Nyquist
            // rate; its principal log (Im = pi fs) has no conjugate partner at
            // this order, so fold it to the matching decay on the positive axis.
            let z = if z.im == 0.0 && z.re < 0.0 { Complex64::new(-z.re, 0.0) } else { *z };
            z.ln() * fs
        })
        .collect();
    RationalModel::new(poles, 1.0, fs)?.normalize_energy()
}

/// Least-squares predictor coefficients phi_1..phi_m via the normal equations.
fn ar_coefficients(x: &[f64], m: usize) -> Result<Vec<f64>> {
    let n = x.len();
    let mut gram = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for t in m..n {
        for a in 0..m {
            rhs[a] += x[t] * x[t - 1 - a];
            for b in a..m {
                gram[(a, b)] += x[t - 1 - a] * x[t - 1 - b];
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let svd = gram.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let smin = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smax > 0.0) || smin < 1e-12 * smax {
        return Err(Error::SingularFit { condition: if smin > 0.0 { smax / smin } else { f64::INFINITY } });
    }
    let solution = svd
        .solve(&rhs, 1e-14 * smax)
        .map_err(|e| Error::Internal(format!("SVD solve failed: {e}")))?;
    Ok(solution.iter().copied().collect())
}

/// Reflect into the unit disc, cap the magnitude, floor it away from zero.
fn stabilize_root(z: Complex64) -> Complex64 {
    let mut z = z;
    if z.norm() >= 1.0 {
        z /= z.norm_sqr(); // 1 / conj(z): magnitude 1/|z|, same angle
    }
    let norm = z.norm();
    if norm > ROOT_MAGNITUDE_CAP {
        z *= ROOT_MAGNITUDE_CAP / norm;
    }
    let norm = z.norm();
    if norm < ROOT_MAGNITUDE_FLOOR {
        z = if norm == 0.0 {
            Complex64::new(ROOT_MAGNITUDE_FLOOR, 0.0)
        } else {
            z * (ROOT_MAGNITUDE_FLOOR / norm)
        };
    }
    z
}

/// Pair roots across the real axis and average them into exact conjugates.
/// Real eigenvalue extraction from a real companion matrix already produces
/// conjugate pairs; this removes the last few ulps of asymmetry.
fn symmetrize_conjugates(mut roots: Vec<Complex64>) -> Vec<Complex64> {
    let tol = 1e-9;
    let mut pos: Vec<Complex64> = Vec::new();
    let mut neg: Vec<Complex64> = Vec::new();
    let mut real: Vec<Complex64> = Vec::new();
    roots.sort_by(pole_order);
    for z in roots {
        let scale = 1.0 + z.norm();
        if z.im > tol * scale {
            pos.push(z);
        } else if z.im < -tol * scale {
            neg.push(z);
        } else {
            real.push(Complex64::new(z.re, 0.0));
        }
    }
    if pos.len() != neg.len() {
        // Cannot happen for eigenvalues of a real matrix; keep whatever came in.
        let mut all = real;
        all.extend(pos);
        all.extend(neg);
        return all;
    }
    neg.sort_by(|a, b| pole_order(&a.conj(), &b.conj()));
    let mut out = real;
    for (zp, zn) in pos.iter().zip(&neg) {
        let avg = 0.5 * (zp + zn.conj());
        out.push(avg);
        out.push(avg.conj());
    }
    out
}
