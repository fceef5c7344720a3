//! The propensity transform of the response and checks of the identities
//! that make it work.
//!
//! With treatment `w`, outcome `y`, and propensity `e`, the transformed
//! response is `y* = (w - e) y / (e (1 - e))`. Its conditional mean given
//! covariates equals the treatment effect surface, and its residual is a
//! two-component Gaussian mixture indexed by `w`; both facts are exercised
//! here, one algebraically and one by Monte Carlo.

use crate::data::TransformedOutcome;
use crate::error::{Error, Result};
use crate::numerics::RngState;

/// Default distance propensities are kept away from 0 and 1.
pub const DEFAULT_CLIP_EPS: f64 = 0.01;

/// Clips propensities into `[eps, 1 - eps]`, reporting how many entries
/// moved. Values outside `[0, 1]` are data errors, not clippable.
pub fn clip_propensity(e: &[f64], eps: f64) -> Result<(Vec<f64>, usize)> {
    if !(eps.is_finite() && eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "clip eps must lie in (0, 0.5), got {eps}"
        )));
    }
    let mut clipped = 0usize;
    let mut out = Vec::with_capacity(e.len());
    for (unit, &value) in e.iter().enumerate() {
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(Error::PropensityOutOfRange { unit, value });
        }
        let c = value.clamp(eps, 1.0 - eps);
        if c != value {
            clipped += 1;
        }
        out.push(c);
    }
    Ok((out, clipped))
}

/// Applies the propensity transform `y* = (w - e) y / (e (1 - e))` after
/// clipping `e` into `[eps, 1 - eps]`.
pub fn transform_outcome(
    y: &[f64],
    w: &[u8],
    e: &[f64],
    eps: f64,
) -> Result<TransformedOutcome> {
    let n = y.len();
    if w.len() != n || e.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "y has {n} entries, w has {}, e has {}",
            w.len(),
            e.len()
        )));
    }
    let (e_used, clipped) = clip_propensity(e, eps)?;
    let ystar = (0..n)
        .map(|i| {
            let ei = e_used[i];
            (w[i] as f64 - ei) * y[i] / (ei * (1.0 - ei))
        })
        .collect();
    Ok(TransformedOutcome { ystar, e_used, clipped })
}

/// Residual of the mixture decomposition for a single unit.
///
/// The transformed response of a unit with potential-outcome means `f1`,
/// `f0`, noise `noise`, and propensity `e` decomposes exactly as
/// `g + (1 - e) h + noise / e` under treatment and `g - e h + noise / (e - 1)`
/// under control, where `g = f1 - f0` and `h = f1 / e + f0 / (1 - e)`.
/// Returns the difference between the transformed response and that
/// decomposition, which should vanish to rounding error.
pub fn verify_mixture_identity(f1: f64, f0: f64, e: f64, noise: f64, w: u8) -> f64 {
    let y = if w == 1 { f1 + noise } else { f0 + noise };
    let ystar = (w as f64 - e) * y / (e * (1.0 - e));
    let g = f1 - f0;
    let h = f1 / e + f0 / (1.0 - e);
    let decomposition = if w == 1 {
        g + (1.0 - e) * h + noise / e
    } else {
        g - e * h + noise / (e - 1.0)
    };
    ystar - decomposition
}

/// One grid point of the Monte Carlo identity check.
#[derive(Debug, Clone)]
pub struct CateCheckPoint {
    pub x: Vec<f64>,
    /// Mean transformed response over the simulated draws.
    pub empirical_mean: f64,
    /// The effect `f1(x) - f0(x)` the mean should recover.
    pub target: f64,
    pub mc_se: f64,
}

/// Monte Carlo check that the transformed response is conditionally unbiased
/// for the treatment effect: at each grid point it simulates treatment
/// assignment and noisy outcomes, transforms them, and reports the empirical
/// mean next to `f1(x) - f0(x)` with its Monte Carlo standard error.
pub fn mc_check_cate_identity(
    f1: impl Fn(&[f64]) -> f64,
    f0: impl Fn(&[f64]) -> f64,
    e_fn: impl Fn(&[f64]) -> f64,
    x_grid: &[Vec<f64>],
    draws: usize,
    noise_sd: f64,
    rng: &mut RngState,
) -> Result<Vec<CateCheckPoint>> {
    if draws < 10_000 {
        return Err(Error::InsufficientDraws(format!(
            "identity check needs at least 10000 draws, got {draws}"
        )));
    }
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise_sd = {noise_sd}")));
    }
    let mut out = Vec::with_capacity(x_grid.len());
    for (unit, x) in x_grid.iter().enumerate() {
        let e = e_fn(x);
        if !(e.is_finite() && e > 0.0 && e < 1.0) {
            return Err(Error::PropensityOutOfRange { unit, value: e });
        }
        let m1 = f1(x);
        let m0 = f0(x);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..draws {
            let w = rng.uniform() < e;
            let y = if w { m1 } else { m0 } + noise_sd * rng.standard_normal();
            let ystar = (f64::from(w) - e) * y / (e * (1.0 - e));
            sum += ystar;
            sumsq += ystar * ystar;
        }
        let k = draws as f64;
        let empirical_mean = sum / k;
        let var = (sumsq - k * empirical_mean * empirical_mean) / (k - 1.0);
        out.push(CateCheckPoint {
            x: x.clone(),
            empirical_mean,
            target: m1 - m0,
            mc_se: (var.max(0.0) / k).sqrt(),
        });
    }
    Ok(out)
}
