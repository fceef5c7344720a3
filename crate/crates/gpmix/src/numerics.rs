//! Numerical primitives: a seedable RNG, positive-definite factorization with
//! jitter escalation, Gaussian and inverse-gamma samplers, the standard
//! normal CDF, and an IRLS logistic fitter.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Counter-based RNG with an explicit 64-bit seed, so every draw in a run is
/// reproducible from the config.
#[derive(Debug, Clone)]
pub struct RngState {
    rng: ChaCha20Rng,
}

impl RngState {
    pub fn from_seed(seed: u64) -> Self {
        RngState { rng: ChaCha20Rng::seed_from_u64(seed) }
    }

    /// Independent stream derived from the same seed, used to give parallel
    /// chains their own generators.
    pub fn from_seed_stream(seed: u64, stream: u64) -> Self {
        RngState::from_seed(splitmix64(seed ^ splitmix64(stream)))
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform draw on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn normal_vector(&mut self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.standard_normal())
    }
}

impl RngCore for RngState {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Relative tolerance for the symmetry check in [`chol_psd`].
const SYMMETRY_TOL: f64 = 1e-8;
/// Number of tenfold jitter escalations tried before giving up.
const MAX_ESCALATIONS: u32 = 8;

/// Lower-triangular factor of `a + j*I`, with the jitter that was needed.
#[derive(Debug)]
pub struct CholFactor {
    l: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    pub jitter_used: f64,
    /// How many tenfold escalations beyond the base jitter were required.
    pub escalations: u32,
}

impl CholFactor {
    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Solves `(a + j*I) x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// `L z`, which maps iid standard normals to a draw from `N(0, a + j*I)`.
    pub fn mul_l(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.l * z
    }

    /// Log determinant of `a + j*I`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Cholesky factorization of a symmetric positive semidefinite matrix.
///
/// A jitter of `jitter * mean(diag(a))` is added to the diagonal before
/// factorizing; on failure the jitter escalates tenfold up to eight times.
/// The input must be symmetric to relative tolerance 1e-8 and is symmetrized
/// before factorization so roundoff asymmetry cannot leak through.
pub fn chol_psd(a: &DMatrix<f64>, jitter: f64) -> Result<CholFactor> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !(jitter.is_finite() && jitter > 0.0) {
        return Err(Error::NonPositiveParameter(format!("jitter = {jitter}")));
    }
    let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    let mut max_asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max_asym = max_asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if max_asym > SYMMETRY_TOL * scale {
        return Err(Error::AsymmetricInput(format!(
            "max |a - a'| = {max_asym:e} exceeds {:e}",
            SYMMETRY_TOL * scale
        )));
    }
    let mut sym = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            sym[(i, j)] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }

    let mean_diag = sym.diagonal().mean();
    let jitter_scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut j = jitter * jitter_scale;
    for esc in 0..=MAX_ESCALATIONS {
        let mut candidate = sym.clone();
        for i in 0..n {
            candidate[(i, i)] += j;
        }
        if let Some(chol) = Cholesky::new(candidate) {
            let l = chol.l();
            return Ok(CholFactor { l, chol, jitter_used: j, escalations: esc });
        }
        j *= 10.0;
    }
    Err(Error::NotFactorizable { last_jitter: j / 10.0 })
}

/// Factorizes an already positive-definite matrix exactly, falling back to
/// jitter escalation only when plain Cholesky fails. Returns the factor and
/// the number of jitter events charged (0 on the exact path, 1 plus the
/// escalation count otherwise). Consumes the matrix to avoid a copy on the
/// common path.
pub fn chol_with_fallback(a: DMatrix<f64>, jitter: f64) -> Result<(CholFactor, u32)> {
    match Cholesky::new(a.clone()) {
        Some(chol) => {
            let l = chol.l();
            Ok((CholFactor { l, chol, jitter_used: 0.0, escalations: 0 }, 0))
        }
        None => {
            let f = chol_psd(&a, jitter).map_err(|e| match e {
                Error::NotFactorizable { last_jitter } => Error::FactorizationFailure(
                    format!("observation covariance unfactorizable at jitter {last_jitter:e}"),
                ),
                other => other,
            })?;
            let events = 1 + f.escalations;
            Ok((f, events))
        }
    }
}

/// One draw from `N(mean, cov + jitter-stabilized diagonal)`.
pub fn sample_mvn(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    jitter: f64,
    rng: &mut RngState,
) -> Result<DVector<f64>> {
    if mean.len() != cov.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "mean has {} entries, cov is {}x{}",
            mean.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    let factor = chol_psd(cov, jitter)?;
    let z = rng.normal_vector(mean.len());
    Ok(mean + factor.mul_l(&z))
}

/// One draw from the inverse-gamma distribution with shape `a` and scale `b`
/// (density proportional to `x^(-a-1) exp(-b/x)`), via the reciprocal of a
/// gamma draw.
pub fn sample_inverse_gamma(a: f64, b: f64, rng: &mut RngState) -> Result<f64> {
    if !(a.is_finite() && a > 0.0) || !(b.is_finite() && b > 0.0) {
        return Err(Error::NonPositiveParameter(format!("inverse gamma ({a}, {b})")));
    }
    let gamma = Gamma::new(a, 1.0 / b)
        .map_err(|e| Error::NonPositiveParameter(format!("inverse gamma: {e}")))?;
    loop {
        let g: f64 = gamma.sample(rng);
        if g > 0.0 {
            return Ok(1.0 / g);
        }
    }
}

/// Standard normal CDF, accurate to better than 1e-12 absolutely across the
/// real line (libm's erfc is correct to within an ulp).
pub fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Log density of `N(mean, var)` at `x`.
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var)
}

/// Log density of the inverse-gamma distribution with shape `a` and scale `b`.
pub fn inverse_gamma_logpdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    a * b.ln() - statrs::function::gamma::ln_gamma(a) - (a + 1.0) * x.ln() - b / x
}

/// Maximum-likelihood logistic regression via iteratively reweighted least
/// squares, used to initialize and benchmark the propensity model.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    /// Intercept-first coefficients, length p+1.
    pub beta: DVector<f64>,
    pub converged: bool,
    /// Fitted probabilities reached 0 or 1; `beta` is the last iterate.
    pub separation: bool,
    pub iterations: usize,
}

/// Fits `logit P(w=1|x) = beta0 + x beta` by IRLS.
///
/// Detects separation (fitted probabilities within 1e-10 of the boundary) and
/// returns the current iterate with a warning flag instead of diverging. A
/// design that cannot be full rank, or a singular weighted normal system, is
/// a [`Error::SingularDesign`].
pub fn fit_logistic(
    x: &DMatrix<f64>,
    w: &[u8],
    max_iters: usize,
    tol: f64,
) -> Result<LogisticFit> {
    let n = x.nrows();
    let p = x.ncols();
    if w.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} treatments for {} rows",
            w.len(),
            n
        )));
    }
    if n <= p + 1 {
        return Err(Error::SingularDesign);
    }
    let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });

    let mut beta = DVector::zeros(p + 1);
    for it in 1..=max_iters {
        let eta = &design * &beta;
        let mu = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        if mu.iter().any(|&m| m <= 1e-10 || m >= 1.0 - 1e-10) {
            return Ok(LogisticFit { beta, converged: false, separation: true, iterations: it });
        }
        // Weighted normal equations for the working response
        // z = eta + (w - mu) / weight, weight = mu (1 - mu).
        let mut xtwx = DMatrix::zeros(p + 1, p + 1);
        let mut xtwz = DVector::zeros(p + 1);
        for i in 0..n {
            let weight = mu[i] * (1.0 - mu[i]);
            let z = eta[i] + (w[i] as f64 - mu[i]) / weight;
            let row = design.row(i);
            for a in 0..(p + 1) {
                xtwz[a] += weight * row[a] * z;
                for b in a..(p + 1) {
                    xtwx[(a, b)] += weight * row[a] * row[b];
                }
            }
        }
        for a in 0..(p + 1) {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
        }
        let chol = Cholesky::new(xtwx).ok_or(Error::SingularDesign)?;
        let next = chol.solve(&xtwz);
        let step = (&next - &beta).amax();
        beta = next;
        if step < tol {
            return Ok(LogisticFit { beta, converged: true, separation: false, iterations: it });
        }
    }
    Ok(LogisticFit { beta, converged: false, separation: false, iterations: max_iters })
}
