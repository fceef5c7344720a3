//! Synthetic benchmark designs with ground truth attached.
//!
//! Two designs are built in: a high-dimensional one with 40 covariates
//! (entangled Bernoulli and Poisson columns, strongly nonlinear potential
//! outcomes) and a low-dimensional one with 5 independent covariates and a
//! closed-form effect surface. Both attach the true propensities, potential
//! outcomes, and noise-free effects so fits can be scored.
//!
//! Per unit, draws happen in a fixed order (covariates, treatment, then one
//! noise draw per potential outcome), so a given `(n, seed)` always yields
//! the same dataset. The noise is drawn independently for the two potential
//! outcomes; with a noise standard deviation of 0.01 the distinction from a
//! shared draw is immaterial, and the noise-free effects are identical
//! either way.

use rand::Rng;
use rand_distr::{Binomial, Poisson};

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::numerics::RngState;

/// A generated dataset plus everything the generator knows that an analyst
/// would not: true propensities, both potential outcomes, and the noise-free
/// effect at every unit.
pub struct SyntheticDataset {
    /// Observed data; `e_known` is populated with the true propensities.
    pub dataset: Dataset,
    pub true_cate: Vec<f64>,
    pub true_e: Vec<f64>,
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
}

fn inv_logit(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

const NOISE_SD: f64 = 0.01;

fn case_a_covariates(rng: &mut RngState) -> [f64; 40] {
    let mut x = [0.0; 40];
    for v in x.iter_mut().take(15) {
        *v = rng.standard_normal();
    }
    for v in x.iter_mut().take(30).skip(15) {
        *v = rng.uniform();
    }
    for j in 30..35 {
        let q = inv_logit(x[j - 30] - x[j - 15]);
        x[j] = f64::from(rng.uniform() < q);
    }
    for j in 35..40 {
        // The rate can go slightly negative in the tails, so it is clamped.
        let lambda = (5.0 + 0.75 * x[j - 35] * (x[j - 20] + x[j - 5])).max(1e-3);
        x[j] = rng.sample(Poisson::new(lambda).unwrap());
    }
    x
}

fn case_a_propensity(x: &[f64]) -> f64 {
    let s = |range: std::ops::Range<usize>| x[range].iter().sum::<f64>();
    inv_logit(0.3 * s(0..5) - 0.5 * s(20..25) - 0.0001 * s(25..35) + 0.055 * s(35..40))
}

fn case_a_mean0(x: &[f64]) -> f64 {
    let s: f64 = (15..19).map(|j| x[j] * x[j + 14].exp()).sum();
    let f = s / (1.0 + s);
    0.15 * x[0..5].iter().sum::<f64>() + 1.5 * (1.0 + 1.5 * f).exp()
}

fn case_a_mean1(x: &[f64]) -> f64 {
    let poly: f64 = x[0..5]
        .iter()
        .map(|&v| 2.15 * v + 2.75 * v * v + 10.0 * v * v * v)
        .sum();
    poly + 1.25 * (0.5 + 1.5 * x[35..40].iter().sum::<f64>()).sqrt()
}

/// High-dimensional design: 40 covariates, 15 of them standard normal, 15
/// uniform, 5 Bernoulli with logit-linked rates, 5 Poisson with rates built
/// from three earlier columns. Outcomes mix a saturating exponential
/// (control) with a cubic polynomial (treated), so the effect surface is
/// heavy-tailed and strongly heterogeneous.
pub fn gen_case_a(n: usize, seed: u64) -> SyntheticDataset {
    assert!(n >= 1, "need at least one unit");
    let mut rng = RngState::from_seed(seed);
    let mut x = DMatrix::zeros(n, 40);
    let mut y = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut true_e = Vec::with_capacity(n);
    let mut true_cate = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);

    for i in 0..n {
        let xi = case_a_covariates(&mut rng);
        for (j, &v) in xi.iter().enumerate() {
            x[(i, j)] = v;
        }
        let e = case_a_propensity(&xi);
        let wi = f64::from(rng.uniform() < e);
        let m0 = case_a_mean0(&xi);
        let m1 = case_a_mean1(&xi);
        let y0i = m0 + NOISE_SD * rng.standard_normal();
        let y1i = m1 + NOISE_SD * rng.standard_normal();
        true_e.push(e);
        w.push(wi);
        true_cate.push(m1 - m0);
        y0.push(y0i);
        y1.push(y1i);
        y.push(if wi == 1.0 { y1i } else { y0i });
    }

    let dataset = Dataset::new(y, w, x, Some(true_e.clone()))
        .expect("generated data is always valid");
    SyntheticDataset { dataset, true_cate, true_e, y1, y0 }
}

/// Low-dimensional design: three standard normals, a rare binary, and a
/// two-trial binomial. The control outcome has a steep slope in the third
/// covariate that the effect surface must undo, so the true effect is
/// `1 + 2 x2 x3 + 15 x3` exactly.
pub fn gen_case_b(n: usize, seed: u64) -> SyntheticDataset {
    assert!(n >= 1, "need at least one unit");
    let mut rng = RngState::from_seed(seed);
    let binom = Binomial::new(2, 0.5).unwrap();
    let mut x = DMatrix::zeros(n, 5);
    let mut y = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut true_e = Vec::with_capacity(n);
    let mut true_cate = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);

    for i in 0..n {
        let x1 = rng.standard_normal();
        let x2 = rng.standard_normal();
        let x3 = rng.standard_normal();
        let x4 = f64::from(rng.uniform() < 0.25);
        let x5 = rng.sample(binom) as f64;
        for (j, v) in [x1, x2, x3, x4, x5].into_iter().enumerate() {
            x[(i, j)] = v;
        }

        let e = inv_logit(0.1 * x1 - 0.001 * x2 + 0.275 * x3 - 0.03 * x4);
        let wi = f64::from(rng.uniform() < e);
        let step = match x5 as u64 {
            0 => 2.0,
            1 => -1.0,
            _ => -4.0,
        };
        let f = -6.0 + step + (x3 - 1.0).abs();
        let y0i = f - 15.0 * x3 + NOISE_SD * rng.standard_normal();
        let y1i = f + (1.0 + 2.0 * x2 * x3) + NOISE_SD * rng.standard_normal();
        true_e.push(e);
        w.push(wi);
        true_cate.push(1.0 + 2.0 * x2 * x3 + 15.0 * x3);
        y0.push(y0i);
        y1.push(y1i);
        y.push(if wi == 1.0 { y1i } else { y0i });
    }

    let dataset = Dataset::new(y, w, x, Some(true_e.clone()))
        .expect("generated data is always valid");
    SyntheticDataset { dataset, true_cate, true_e, y1, y0 }
}
