//! Posterior summaries of treatment effects.
//!
//! The effect surface of the mixture model is already the conditional
//! average treatment effect, so its retained draws need no further
//! transformation: column means of the draw matrix give per-unit point
//! estimates, row means give average-effect draws, and equal-tailed
//! quantiles give credible intervals. Quantiles follow the common
//! linear-interpolation convention (type 7): for `n` sorted values the
//! `q`-quantile sits at fractional index `q (n - 1)`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Identity map from effect-surface draws to conditional-effect draws, kept
/// explicit so the estimand has a name: row `t`, column `i` is the effect at
/// training point `i` under draw `t`.
pub fn cate_draws(g_draws: &DMatrix<f64>) -> &DMatrix<f64> {
    g_draws
}

/// Average-effect draws: the mean over units within each retained draw.
pub fn ate_draws(cate: &DMatrix<f64>) -> Vec<f64> {
    let n = cate.ncols() as f64;
    cate.row_iter().map(|row| row.sum() / n).collect()
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let idx = q * (n - 1) as f64;
    let lo = idx.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = idx - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Point estimates and equal-tailed credible intervals, one per column of
/// the draw matrix.
#[derive(Debug, Clone)]
pub struct CateSummary {
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
}

fn check_level(level: f64) -> Result<()> {
    if !(level.is_finite() && level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "interval level must lie in (0, 1), got {level}"
        )));
    }
    Ok(())
}

/// Posterior mean and equal-tailed `level` interval for every column.
pub fn summarize(draws: &DMatrix<f64>, level: f64) -> Result<CateSummary> {
    check_level(level)?;
    let t = draws.nrows();
    if t == 0 {
        return Err(Error::InsufficientDraws("no retained draws to summarize".into()));
    }
    let tail = (1.0 - level) / 2.0;
    let mut point = Vec::with_capacity(draws.ncols());
    let mut lower = Vec::with_capacity(draws.ncols());
    let mut upper = Vec::with_capacity(draws.ncols());
    let mut col = vec![0.0; t];
    for j in 0..draws.ncols() {
        for i in 0..t {
            col[i] = draws[(i, j)];
        }
        point.push(col.iter().sum::<f64>() / t as f64);
        col.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&col, tail));
        upper.push(quantile_sorted(&col, 1.0 - tail));
    }
    Ok(CateSummary { point, lower, upper, level })
}

/// Posterior mean and equal-tailed interval of a scalar quantity.
pub fn summarize_scalar(draws: &[f64], level: f64) -> Result<(f64, f64, f64)> {
    check_level(level)?;
    if draws.is_empty() {
        return Err(Error::InsufficientDraws("no retained draws to summarize".into()));
    }
    let point = draws.iter().sum::<f64>() / draws.len() as f64;
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((point, quantile_sorted(&sorted, tail), quantile_sorted(&sorted, 1.0 - tail)))
}

/// Accuracy of per-unit effect estimates against known truth.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Diagnostics {
    /// Mean squared error of the point estimates.
    pub mse: f64,
    /// Mean of truth minus estimate.
    pub bias: f64,
    /// Fraction of units whose true effect lies inside the interval.
    pub coverage: f64,
}

pub fn diagnostics(truth: &[f64], summary: &CateSummary) -> Result<Diagnostics> {
    let n = truth.len();
    if n != summary.point.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} true effects against {} estimates",
            n,
            summary.point.len()
        )));
    }
    if n == 0 {
        return Err(Error::EmptyDataset("no effects to score".into()));
    }
    let mut mse = 0.0;
    let mut bias = 0.0;
    let mut covered = 0usize;
    for (i, &t) in truth.iter().enumerate() {
        let diff = t - summary.point[i];
        mse += diff * diff;
        bias += diff;
        if t >= summary.lower[i] && t <= summary.upper[i] {
            covered += 1;
        }
    }
    Ok(Diagnostics {
        mse: mse / n as f64,
        bias: bias / n as f64,
        coverage: covered as f64 / n as f64,
    })
}

/// Posterior summary of the average effect within one rank bin.
#[derive(Debug, Clone)]
pub struct BinSummary {
    /// Zero-based bin index, lowest-ranked values first.
    pub bin: usize,
    pub n_units: usize,
    /// Mean of the ranking variable over the bin's units.
    pub mean_value: f64,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Ranks units by `values`, splits them into `n_bins` equal-count groups,
/// and summarizes the within-bin average effect draw by draw. Bin sizes
/// differ by at most one unit; ties in the ranking variable break by unit
/// index so the grouping is deterministic.
pub fn bin_by_quantile(
    values: &[f64],
    cate: &DMatrix<f64>,
    n_bins: usize,
    level: f64,
) -> Result<Vec<BinSummary>> {
    check_level(level)?;
    let n = cate.ncols();
    let t = cate.nrows();
    if values.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} ranking values against {} units",
            values.len(),
            n
        )));
    }
    if n_bins == 0 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    if n_bins > n {
        return Err(Error::TooFewUnits(format!("{n_bins} bins requested for {n} units")));
    }
    if t == 0 {
        return Err(Error::InsufficientDraws("no retained draws to bin".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

    let mut out = Vec::with_capacity(n_bins);
    let mut draw_means = vec![0.0; t];
    for k in 0..n_bins {
        let start = k * n / n_bins;
        let end = (k + 1) * n / n_bins;
        let members = &order[start..end];
        let size = members.len() as f64;
        for (row, dm) in draw_means.iter_mut().enumerate() {
            *dm = members.iter().map(|&i| cate[(row, i)]).sum::<f64>() / size;
        }
        let (point, lower, upper) = summarize_scalar(&draw_means, level)?;
        out.push(BinSummary {
            bin: k,
            n_units: members.len(),
            mean_value: members.iter().map(|&i| values[i]).sum::<f64>() / size,
            point,
            lower,
            upper,
        });
    }
    Ok(out)
}
