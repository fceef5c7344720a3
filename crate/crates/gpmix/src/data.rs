//! Core data model: observational dataset, transformed outcome, and the
//! hyperparameter / configuration bundles shared by both samplers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One observational study: outcomes, binary treatments, covariates, and
/// optionally the true assignment propensities.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub w: Vec<u8>,
    pub x: DMatrix<f64>,
    /// Known propensities; `None` means they must be learned.
    pub e_known: Option<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset from raw columns, converting and validating the
    /// treatment indicator on the way in.
    pub fn new(
        y: Vec<f64>,
        w: Vec<f64>,
        x: DMatrix<f64>,
        e_known: Option<Vec<f64>>,
    ) -> Result<Self> {
        let w = check_binary(&w)?;
        let ds = Dataset { y, w, x, e_known };
        validate_dataset(&ds)?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Checks that every entry is exactly 0.0 or 1.0 and converts to u8.
pub fn check_binary(w: &[f64]) -> Result<Vec<u8>> {
    w.iter()
        .enumerate()
        .map(|(unit, &value)| {
            if value == 0.0 {
                Ok(0)
            } else if value == 1.0 {
                Ok(1)
            } else {
                Err(Error::NonBinaryTreatment { unit, value })
            }
        })
        .collect()
}

/// Checks internal consistency of a dataset: matching lengths, at least one
/// unit and one covariate, finite values, binary treatments, and propensities
/// inside [0, 1] when present.
pub fn validate_dataset(ds: &Dataset) -> Result<()> {
    let n = ds.y.len();
    if n == 0 {
        return Err(Error::EmptyDataset("dataset has no units".into()));
    }
    if ds.x.ncols() == 0 {
        return Err(Error::EmptyDataset("covariate matrix has no columns".into()));
    }
    if ds.w.len() != n || ds.x.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "y has {} rows, w has {}, x has {}",
            n,
            ds.w.len(),
            ds.x.nrows()
        )));
    }
    for (i, &v) in ds.y.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("y[{i}] is not finite")));
        }
    }
    for (i, &v) in ds.w.iter().enumerate() {
        if v > 1 {
            return Err(Error::NonBinaryTreatment { unit: i, value: v as f64 });
        }
    }
    if ds.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("x contains non-finite entries".into()));
    }
    if let Some(e) = &ds.e_known {
        if e.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "e has {} entries for {} units",
                e.len(),
                n
            )));
        }
        for (unit, &value) in e.iter().enumerate() {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(Error::PropensityOutOfRange { unit, value });
            }
        }
    }
    Ok(())
}

/// Outcome vector after the propensity transform, together with the (clipped)
/// propensities it was computed from.
#[derive(Debug, Clone)]
pub struct TransformedOutcome {
    pub ystar: Vec<f64>,
    /// Propensities actually used, after clipping away from 0 and 1.
    pub e_used: Vec<f64>,
    /// How many entries the clip moved.
    pub clipped: usize,
}

/// Kernel and prior hyperparameters for one fit.
///
/// The effect surface uses a linear kernel with variance `s0_sq` on the
/// intercept, per-coordinate slope variances `s_sq`, and centering point `c`.
/// The nuisance surface uses a squared-exponential kernel with variance
/// `sh_sq` and bandwidth `bandwidth_sq`. The noise variance has an
/// inverse-gamma prior with shape `ig_a` and scale `ig_b`.
#[derive(Debug, Clone)]
pub struct ModelHyperParams {
    pub s0_sq: f64,
    pub s_sq: Vec<f64>,
    pub c: Vec<f64>,
    pub sh_sq: f64,
    pub bandwidth_sq: f64,
    pub ig_a: f64,
    pub ig_b: f64,
}

impl ModelHyperParams {
    /// Data-driven defaults: unit intercept variance, slope variance 1/p per
    /// coordinate, kernels centered at the column means, unit nuisance
    /// variance, and the median pairwise squared distance as inverse
    /// bandwidth.
    pub fn defaults_for(x: &DMatrix<f64>) -> Self {
        let p = x.ncols();
        let c = (0..p).map(|j| x.column(j).mean()).collect();
        ModelHyperParams {
            s0_sq: 1.0,
            s_sq: vec![1.0 / p as f64; p],
            c,
            sh_sq: 1.0,
            bandwidth_sq: crate::kernels::median_bandwidth_sq(x),
            ig_a: 3.0,
            ig_b: 2.0,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.s_sq.len() != p || self.c.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "kernel parameters sized for {} covariates, data has {}",
                self.s_sq.len(),
                p
            )));
        }
        for (name, v) in [
            ("s0_sq", self.s0_sq),
            ("sh_sq", self.sh_sq),
            ("bandwidth_sq", self.bandwidth_sq),
            ("ig.a", self.ig_a),
            ("ig.b", self.ig_b),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::NonPositiveParameter(format!("{name} = {v}")));
            }
        }
        if self.s_sq.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::NonPositiveParameter("s_sq must be positive".into()));
        }
        if self.c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("kernel center must be finite".into()));
        }
        Ok(())
    }
}

/// Probit stage configuration for the unknown-propensity sampler.
#[derive(Debug, Clone)]
pub struct ProbitConfig {
    /// Prior covariance of the p+1 probit coefficients.
    pub psi: DMatrix<f64>,
    /// Starting coefficients; `None` means a logistic fit (or zero on
    /// separation) supplies them.
    pub beta_init: Option<DVector<f64>>,
    /// Random-walk proposal standard deviation.
    pub step_size: f64,
    /// Double or halve `step_size` during burn-in until the acceptance rate
    /// sits in [0.2, 0.5].
    pub tune: bool,
}

impl ProbitConfig {
    /// Isotropic prior `psi_scale^2 * I` for `p` covariates plus intercept.
    pub fn from_scale(p: usize, psi_scale: f64, step_size: f64) -> Self {
        ProbitConfig {
            psi: DMatrix::identity(p + 1, p + 1) * psi_scale * psi_scale,
            beta_init: None,
            step_size,
            tune: true,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let d = p + 1;
        if self.psi.nrows() != d || self.psi.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "psi is {}x{}, expected {d}x{d}",
                self.psi.nrows(),
                self.psi.ncols()
            )));
        }
        if let Some(b) = &self.beta_init {
            if b.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "beta_init has {} entries, expected {d}",
                    b.len()
                )));
            }
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::NonPositiveParameter(format!(
                "step_size = {}",
                self.step_size
            )));
        }
        Ok(())
    }
}

impl Default for ProbitConfig {
    fn default() -> Self {
        ProbitConfig::from_scale(0, 2.5, 0.1)
    }
}

/// Chain length and reproducibility settings.
#[derive(Debug, Clone, Copy)]
pub struct McmcConfig {
    /// Total Gibbs sweeps K.
    pub iters: usize,
    /// Sweeps discarded from the front.
    pub burn_in: usize,
    /// Keep every thin-th sweep after burn-in.
    pub thin: usize,
    pub seed: u64,
    /// Base jitter for Cholesky factorizations.
    pub jitter: f64,
}

impl McmcConfig {
    /// Number of retained draws.
    pub fn retained(&self) -> usize {
        (self.iters - self.burn_in) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::ConfigInvalid("iters must be positive".into()));
        }
        if self.burn_in >= self.iters {
            return Err(Error::ConfigInvalid(format!(
                "burn_in {} must be below iters {}",
                self.burn_in, self.iters
            )));
        }
        if self.thin == 0 {
            return Err(Error::ConfigInvalid("thin must be at least 1".into()));
        }
        if self.retained() == 0 {
            return Err(Error::ConfigInvalid(format!(
                "no draws retained: iters {}, burn_in {}, thin {}",
                self.iters, self.burn_in, self.thin
            )));
        }
        if !(self.jitter.is_finite() && self.jitter > 0.0) {
            return Err(Error::ConfigInvalid(format!("jitter = {}", self.jitter)));
        }
        Ok(())
    }
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig { iters: 6000, burn_in: 1000, thin: 1, seed: 42, jitter: 1e-8 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_x(n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |i, j| (i * p + j) as f64 * 0.1 - 0.4)
    }

    #[test]
    fn accepts_consistent_dataset() {
        let ds = Dataset::new(
            vec![1.0, -2.0, 0.5],
            vec![1.0, 0.0, 1.0],
            small_x(3, 2),
            Some(vec![0.2, 0.5, 0.9]),
        )
        .unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.p(), 2);
        assert_eq!(ds.w, vec![1, 0, 1]);
    }

    #[test]
    fn single_unit_dataset_is_valid() {
        let ds = Dataset::new(
            vec![2.0],
            vec![1.0],
            DMatrix::from_element(1, 1, 0.0),
            Some(vec![0.5]),
        );
        assert!(ds.is_ok());
    }

    #[test]
    fn rejects_length_mismatch() {
        let err = Dataset::new(vec![1.0, 2.0], vec![1.0, 0.0], small_x(3, 2), None)
            .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn rejects_non_binary_treatment() {
        let err =
            Dataset::new(vec![1.0, 2.0, 3.0], vec![0.0, 1.0, 2.0], small_x(3, 2), None)
                .unwrap_err();
        match err {
            Error::NonBinaryTreatment { unit, value } => {
                assert_eq!(unit, 2);
                assert_eq!(value, 2.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
        let err = check_binary(&[0.0, 0.5]).unwrap_err();
        assert!(matches!(err, Error::NonBinaryTreatment { unit: 1, .. }));
    }

    #[test]
    fn rejects_propensity_outside_unit_interval() {
        let err = Dataset::new(
            vec![1.0, 2.0, 3.0],
            vec![0.0, 1.0, 1.0],
            small_x(3, 2),
            Some(vec![0.2, 1.0001, 0.5]),
        )
        .unwrap_err();
        match err {
            Error::PropensityOutOfRange { unit, value } => {
                assert_eq!(unit, 1);
                assert_eq!(value, 1.0001);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_dataset() {
        let err =
            Dataset::new(vec![], vec![], DMatrix::zeros(0, 2), None).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset(_)));
    }

    #[test]
    fn mcmc_config_retained_count() {
        let cfg = McmcConfig { iters: 6000, burn_in: 1000, thin: 1, ..Default::default() };
        assert_eq!(cfg.retained(), 5000);
        let cfg = McmcConfig { iters: 11, burn_in: 4, thin: 3, ..Default::default() };
        assert_eq!(cfg.retained(), 2);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn mcmc_config_rejects_degenerate_settings() {
        let cfg = McmcConfig { iters: 100, burn_in: 100, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::ConfigInvalid(_))));
        let cfg = McmcConfig { iters: 10, burn_in: 9, thin: 2, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::ConfigInvalid(_))));
        let cfg = McmcConfig { jitter: 0.0, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn hyperparams_defaults_center_at_column_means() {
        let x = small_x(4, 3);
        let hp = ModelHyperParams::defaults_for(&x);
        assert_eq!(hp.s_sq, vec![1.0 / 3.0; 3]);
        for j in 0..3 {
            assert!((hp.c[j] - x.column(j).mean()).abs() < 1e-15);
        }
        assert!(hp.validate(3).is_ok());
        assert!(hp.validate(2).is_err());
    }

    #[test]
    fn hyperparams_reject_nonpositive_scales() {
        let x = small_x(4, 2);
        let mut hp = ModelHyperParams::defaults_for(&x);
        hp.sh_sq = 0.0;
        assert!(matches!(hp.validate(2), Err(Error::NonPositiveParameter(_))));
        let mut hp = ModelHyperParams::defaults_for(&x);
        hp.ig_b = -1.0;
        assert!(matches!(hp.validate(2), Err(Error::NonPositiveParameter(_))));
    }
}
