//! Joint fit when assignment probabilities are unknown: a probit stage is
//! sampled by Metropolis-within-Gibbs alongside the outcome stage.

use gpmix::data::{McmcConfig, ModelHyperParams, ProbitConfig};
use gpmix::estimands::{diagnostics, summarize};
use gpmix::sampler_unknown::run_gibbs_unknown;
use gpmix::simgen::gen_case_b;

fn main() -> gpmix::error::Result<()> {
    let synth = gen_case_b(150, 3);
    let mut dataset = synth.dataset;
    dataset.e_known = None;

    let mut hp = ModelHyperParams::defaults_for(&dataset.x);
    hp.s0_sq = 100.0;
    hp.s_sq = vec![500.0; dataset.p()];
    hp.sh_sq = 1e4;
    hp.ig_b = 1e4;

    let cfg = McmcConfig { iters: 1500, burn_in: 400, thin: 1, seed: 19, jitter: 1e-8 };
    let probit = ProbitConfig::from_scale(dataset.p(), 2.5, 0.1);
    let draws = run_gibbs_unknown(&dataset, &hp, &cfg, &probit, 0.01)?;

    println!(
        "acceptance rate {:.3} (tuned step {:.4}), separation fallback: {}",
        draws.acceptance_rate, draws.step_size_final, draws.init_separation
    );

    // The design draws assignments through a logistic link; dividing its
    // coefficients by 1.702 puts them on the probit scale.
    let logistic = [0.0, 0.1, -0.001, 0.275, -0.03, 0.0];
    for (j, &coef) in logistic.iter().enumerate() {
        println!(
            "beta[{j}]: posterior mean {:+.3}, probit-scale truth {:+.4}",
            draws.beta.column(j).mean(),
            coef / 1.702
        );
    }

    let summary = summarize(&draws.g, 0.95)?;
    let diag = diagnostics(&synth.true_cate, &summary)?;
    println!(
        "effect recovery: mse {:.2}, bias {:.2}, interval coverage {:.3}",
        diag.mse, diag.bias, diag.coverage
    );
    Ok(())
}
