//! Covariance kernels for the two GP surfaces and their Gram matrices.
//!
//! The effect surface uses a linear kernel, so posterior effect estimates
//! stay interpretable as (shrunk) hyperplanes. The nuisance surface uses a
//! squared-exponential kernel, which absorbs the smooth propensity-dependent
//! structure the transform introduces.

use nalgebra::DMatrix;

use crate::data::ModelHyperParams;
use crate::error::{Error, Result};
use crate::numerics::{chol_psd, CholFactor};

pub trait Kernel {
    /// Kernel value for two points of the dimension this kernel was built
    /// for. Callers validate dimensions first.
    fn eval(&self, u: &[f64], v: &[f64]) -> f64;

    /// Covariate dimension the kernel is tied to, if any.
    fn input_dim(&self) -> Option<usize> {
        None
    }
}

/// `k(u, v) = s0_sq + sum_i s_sq[i] (u_i - c_i)(v_i - c_i)`, the covariance
/// of a random hyperplane with independent Gaussian intercept and slopes.
#[derive(Debug, Clone)]
pub struct LinearKernel {
    pub s0_sq: f64,
    pub s_sq: Vec<f64>,
    pub c: Vec<f64>,
}

impl LinearKernel {
    pub fn new(s0_sq: f64, s_sq: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if s_sq.len() != c.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} slope variances for {} centers",
                s_sq.len(),
                c.len()
            )));
        }
        if !(s0_sq.is_finite() && s0_sq > 0.0)
            || s_sq.iter().any(|&v| !(v.is_finite() && v > 0.0))
        {
            return Err(Error::NonPositiveParameter(
                "linear kernel variances must be positive".into(),
            ));
        }
        Ok(LinearKernel { s0_sq, s_sq, c })
    }

    pub fn from_hypers(hp: &ModelHyperParams) -> Result<Self> {
        LinearKernel::new(hp.s0_sq, hp.s_sq.clone(), hp.c.clone())
    }
}

impl Kernel for LinearKernel {
    fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut acc = self.s0_sq;
        for i in 0..self.s_sq.len() {
            acc += self.s_sq[i] * (u[i] - self.c[i]) * (v[i] - self.c[i]);
        }
        acc
    }

    fn input_dim(&self) -> Option<usize> {
        Some(self.s_sq.len())
    }
}

/// `k(u, v) = sh_sq * exp(-bandwidth_sq * |u - v|^2)`.
#[derive(Debug, Clone)]
pub struct SeKernel {
    pub sh_sq: f64,
    pub bandwidth_sq: f64,
}

impl SeKernel {
    pub fn new(sh_sq: f64, bandwidth_sq: f64) -> Result<Self> {
        if !(sh_sq.is_finite() && sh_sq > 0.0)
            || !(bandwidth_sq.is_finite() && bandwidth_sq > 0.0)
        {
            return Err(Error::NonPositiveParameter(
                "squared-exponential parameters must be positive".into(),
            ));
        }
        Ok(SeKernel { sh_sq, bandwidth_sq })
    }

    pub fn from_hypers(hp: &ModelHyperParams) -> Result<Self> {
        SeKernel::new(hp.sh_sq, hp.bandwidth_sq)
    }
}

impl Kernel for SeKernel {
    fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut d2 = 0.0;
        for i in 0..u.len() {
            let d = u[i] - v[i];
            d2 += d * d;
        }
        self.sh_sq * (-self.bandwidth_sq * d2).exp()
    }
}

fn check_pair(u: &[f64], v: &[f64], dim: Option<usize>) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "points of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    if let Some(p) = dim {
        if u.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "kernel built for {p} coordinates, points have {}",
                u.len()
            )));
        }
    }
    Ok(())
}

/// Validated single evaluation of the linear kernel.
pub fn linear_kernel(u: &[f64], v: &[f64], kernel: &LinearKernel) -> Result<f64> {
    check_pair(u, v, kernel.input_dim())?;
    Ok(kernel.eval(u, v))
}

/// Validated single evaluation of the squared-exponential kernel.
pub fn se_kernel(u: &[f64], v: &[f64], kernel: &SeKernel) -> Result<f64> {
    check_pair(u, v, None)?;
    Ok(kernel.eval(u, v))
}

/// Kernel matrix over the rows of `x`, together with its jittered Cholesky
/// factor. Factoring once here lets the samplers reuse it every sweep.
pub struct Gram {
    pub matrix: DMatrix<f64>,
    pub chol: CholFactor,
}

/// Builds the Gram matrix of `kernel` over the rows of `x` and proves it is
/// (numerically) positive semidefinite by factorizing it.
pub fn gram<K: Kernel>(kernel: &K, x: &DMatrix<f64>, jitter: f64) -> Result<Gram> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyDataset("gram of empty input".into()));
    }
    if let Some(p) = kernel.input_dim() {
        if x.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "kernel built for {p} coordinates, x has {}",
                x.ncols()
            )));
        }
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
    let mut matrix = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(&rows[i], &rows[j]);
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    let chol = chol_psd(&matrix, jitter).map_err(|e| match e {
        Error::NotFactorizable { last_jitter } => Error::NotPSD(format!(
            "gram factorization failed up to jitter {last_jitter:e}"
        )),
        other => other,
    })?;
    Ok(Gram { matrix, chol })
}

/// Median-heuristic inverse bandwidth: `1 / median(|x_i - x_j|^2)` over
/// pairs of rows, falling back to 1 when the median is degenerate. For more
/// than 1000 rows a deterministic stride subsample keeps this quadratic scan
/// cheap.
pub fn median_bandwidth_sq(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    if n < 2 {
        return 1.0;
    }
    let stride = n.div_ceil(1000);
    let idx: Vec<usize> = (0..n).step_by(stride).collect();
    let mut d2s = Vec::with_capacity(idx.len() * (idx.len() - 1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[(a + 1)..] {
            let mut d2 = 0.0;
            for k in 0..x.ncols() {
                let d = x[(i, k)] - x[(j, k)];
                d2 += d * d;
            }
            d2s.push(d2);
        }
    }
    if d2s.is_empty() {
        return 1.0;
    }
    d2s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = d2s.len() / 2;
    let median = if d2s.len() % 2 == 0 { 0.5 * (d2s[mid - 1] + d2s[mid]) } else { d2s[mid] };
    if median > 0.0 {
        1.0 / median
    } else {
        1.0
    }
}
