//! Config-driven command-line front end.
//!
//! Four subcommands cover the full workflow: `simulate` writes one of the
//! built-in synthetic designs to disk, `fit` runs the matching sampler over
//! a data file, `diagnose` scores a fit against known truth, and `bin`
//! aggregates effect draws over quantile bins of a chosen variable.
//!
//! All tabular output is headered CSV (UTF-8, LF, `.` decimal separator);
//! run-level metadata goes to small JSON files. Draws are stored long-form
//! with columns `iter, quantity, index, value` where `iter` is the 0-based
//! retained-draw index and `index` is the 0-based unit (or coefficient)
//! index; a leading `chain` column appears only when more than one chain
//! ran. Everything except the recorded wall time is byte-reproducible for a
//! fixed seed.
//!
//! `GPMIX_THREADS` caps how many chains run concurrently. Exit codes: 0 on
//! success, 2 for usage or config errors, 3 for data errors, 4 for
//! numerical failures.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, McmcConfig, ModelHyperParams, ProbitConfig};
use crate::error::{Error, Result};
use crate::estimands::{ate_draws, bin_by_quantile, diagnostics, summarize, summarize_scalar, CateSummary};
use crate::sampler_known::run_gibbs_known;
use crate::sampler_unknown::run_gibbs_unknown;
use crate::simgen::{gen_case_a, gen_case_b, SyntheticDataset};
use crate::transform::DEFAULT_CLIP_EPS;

#[derive(Debug, Parser)]
#[command(name = "gpmix", version, about = "Treatment-effect estimation with a transformed-outcome GP mixture")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a built-in synthetic dataset with ground truth.
    Simulate {
        /// Design tag: `a` (40 covariates) or `b` (5 covariates).
        #[arg(long)]
        case: String,
        #[arg(long, default_value_t = 250)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output directory for data.csv, truth.csv, manifest.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the sampler over a data file.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// TOML config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// `known` uses the e_true/e column, `unknown` learns propensities.
        #[arg(long)]
        mode: String,
        /// Credible-interval level for summary.csv and ate.json.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Store only effect-surface draws in draws.csv.
        #[arg(long)]
        thin_output: bool,
        /// Output directory for draws.csv, summary.csv, ate.json,
        /// chain_meta.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a fit against a truth file.
    Diagnose {
        /// summary.csv from a fit.
        #[arg(long)]
        summary: PathBuf,
        /// truth.csv with unit ids and true effects.
        #[arg(long)]
        truth: PathBuf,
        /// Output directory for diagnostics.json and cate_scatter.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize effect draws over quantile bins of a data column.
    Bin {
        /// draws.csv from a fit.
        #[arg(long)]
        draws: PathBuf,
        /// Data file holding the ranking variable.
        #[arg(long)]
        data: PathBuf,
        /// Column to rank by, e.g. `x3`.
        #[arg(long)]
        values_column: String,
        #[arg(long)]
        n_bins: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Output directory for bins.csv.
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { case, n, seed, out } => cmd_simulate(&case, n, seed, &out),
        Command::Fit { data, config, mode, level, thin_output, out } => {
            cmd_fit(&data, config.as_deref(), &out, &mode, level, thin_output)
        }
        Command::Diagnose { summary, truth, out } => cmd_diagnose(&summary, &truth, &out),
        Command::Bin { draws, data, values_column, n_bins, level, out } => {
            cmd_bin(&draws, &data, &values_column, n_bins, level, &out)
        }
    }
}

// ---------------------------------------------------------------------------
// Config file

/// Fit configuration, deserialized from TOML. Every key is optional; unknown
/// keys are errors. `kernel.s_sq` accepts a scalar (broadcast over
/// covariates) or a per-covariate array.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub kernel: KernelSection,
    pub ig: IgSection,
    pub mcmc: McmcSection,
    pub probit: ProbitSection,
    pub clip: ClipSection,
    pub standardize_x: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub s0_sq: Option<f64>,
    pub s_sq: Option<ScalarOrVec>,
    pub c: Option<Vec<f64>>,
    pub sh_sq: Option<f64>,
    pub bandwidth_sq: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IgSection {
    pub a: Option<f64>,
    pub b: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSection {
    pub iters: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub seed: Option<u64>,
    pub jitter: Option<f64>,
    pub chains: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbitSection {
    pub psi_scale: Option<f64>,
    pub step_size: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClipSection {
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(f64),
    Vec(Vec<f64>),
}

impl FitConfig {
    pub fn load(path: &Path) -> Result<FitConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    /// Kernel and prior parameters, starting from the data-driven defaults.
    pub fn hypers(&self, x: &DMatrix<f64>) -> Result<ModelHyperParams> {
        let p = x.ncols();
        let mut hp = ModelHyperParams::defaults_for(x);
        if let Some(v) = self.kernel.s0_sq {
            hp.s0_sq = v;
        }
        match &self.kernel.s_sq {
            Some(ScalarOrVec::Scalar(v)) => hp.s_sq = vec![*v; p],
            Some(ScalarOrVec::Vec(vs)) => hp.s_sq = vs.clone(),
            None => {}
        }
        if let Some(c) = &self.kernel.c {
            if c.len() != p {
                return Err(Error::ConfigInvalid(format!(
                    "kernel.c has {} entries for {} covariates",
                    c.len(),
                    p
                )));
            }
            hp.c = c.clone();
        }
        if let Some(v) = self.kernel.sh_sq {
            hp.sh_sq = v;
        }
        if let Some(v) = self.kernel.bandwidth_sq {
            hp.bandwidth_sq = v;
        }
        if let Some(v) = self.ig.a {
            hp.ig_a = v;
        }
        if let Some(v) = self.ig.b {
            hp.ig_b = v;
        }
        hp.validate(p).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        Ok(hp)
    }

    pub fn mcmc(&self) -> Result<McmcConfig> {
        let mut cfg = McmcConfig::default();
        if let Some(v) = self.mcmc.iters {
            cfg.iters = v;
        }
        if let Some(v) = self.mcmc.burn_in {
            cfg.burn_in = v;
        }
        if let Some(v) = self.mcmc.thin {
            cfg.thin = v;
        }
        if let Some(v) = self.mcmc.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.mcmc.jitter {
            cfg.jitter = v;
        }
        cfg.validate().map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn chains(&self) -> Result<usize> {
        match self.mcmc.chains {
            Some(0) => Err(Error::ConfigInvalid("mcmc.chains must be at least 1".into())),
            Some(v) => Ok(v),
            None => Ok(1),
        }
    }

    pub fn probit(&self, p: usize) -> Result<ProbitConfig> {
        let cfg = ProbitConfig::from_scale(
            p,
            self.probit.psi_scale.unwrap_or(2.5),
            self.probit.step_size.unwrap_or(0.1),
        );
        cfg.validate(p).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn clip_eps(&self) -> f64 {
        self.clip.eps.unwrap_or(DEFAULT_CLIP_EPS)
    }
}

// ---------------------------------------------------------------------------
// CSV plumbing

fn num(v: f64) -> String {
    format!("{v}")
}

fn open_csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut file, value)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    file.write_all(b"\n").map_err(|e| Error::io(path, e))
}

/// A headered CSV read into column-major `f64` storage.
struct Table {
    headers: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Table {
    fn read(path: &Path) -> Result<Table> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let headers: Vec<String> =
            reader.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_owned).collect();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_err(path, e))?;
            if record.len() != headers.len() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    message: format!(
                        "row {} has {} fields, header has {}",
                        row + 2,
                        record.len(),
                        headers.len()
                    ),
                });
            }
            for (j, field) in record.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    message: format!(
                        "row {}, column `{}`: cannot parse `{}` as a number",
                        row + 2,
                        headers[j],
                        field
                    ),
                })?;
                columns[j].push(v);
            }
        }
        Ok(Table { headers, columns })
    }

    fn column(&self, name: &str) -> Option<&[f64]> {
        self.headers.iter().position(|h| h == name).map(|j| self.columns[j].as_slice())
    }

    fn require(&self, name: &str, path: &Path) -> Result<&[f64]> {
        self.column(name).ok_or_else(|| {
            Error::Context {
                context: path.display().to_string(),
                source: Box::new(Error::MissingColumn(name.into())),
            }
        })
    }

    fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

/// Reads a model data file: columns `y`, `w`, covariates `x1..xp`
/// (contiguous from 1), and optionally `e_true` or `e`.
fn read_dataset(path: &Path, require_e: bool) -> Result<Dataset> {
    let table = Table::read(path)?;
    let parse_error = |message: String| Error::Parse {
        path: path.display().to_string(),
        message,
    };

    let mut x_cols: Vec<(usize, usize)> = Vec::new();
    for (j, name) in table.headers.iter().enumerate() {
        match name.as_str() {
            "y" | "w" | "e" | "e_true" => {}
            other => {
                let k = other
                    .strip_prefix('x')
                    .and_then(|rest| rest.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| parse_error(format!("unexpected column `{other}`")))?;
                x_cols.push((k, j));
            }
        }
    }
    x_cols.sort_unstable();
    let p = x_cols.len();
    if p == 0 {
        return Err(parse_error("no covariate columns x1..xp".into()));
    }
    for (slot, &(k, _)) in x_cols.iter().enumerate() {
        if k != slot + 1 {
            return Err(parse_error(format!(
                "covariate columns must be x1..x{p} with no gaps, found x{k}"
            )));
        }
    }

    let y = table.require("y", path)?.to_vec();
    let w = table.require("w", path)?.to_vec();
    let e = table.column("e_true").or_else(|| table.column("e"));
    if require_e && e.is_none() {
        return Err(Error::Context {
            context: path.display().to_string(),
            source: Box::new(Error::MissingColumn("e_true (or e)".into())),
        });
    }
    let n = table.n_rows();
    let x = DMatrix::from_fn(n, p, |i, slot| table.columns[x_cols[slot].1][i]);
    Dataset::new(y, w, x, if require_e { e.map(<[f64]>::to_vec) } else { None })
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Serialize)]
struct SimManifest<'a> {
    artifact: &'a str,
    version: &'a str,
    case: &'a str,
    n: usize,
    seed: u64,
}

pub fn cmd_simulate(case: &str, n: usize, seed: u64, out: &Path) -> Result<()> {
    let synth: SyntheticDataset = match case {
        "a" | "A" => gen_case_a(n, seed),
        "b" | "B" => gen_case_b(n, seed),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown case `{other}`, expected `a` or `b`"
            )))
        }
    };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let data_path = out.join("data.csv");
    let mut w = open_csv_writer(&data_path)?;
    let p = synth.dataset.p();
    let mut header = vec!["y".to_string(), "w".to_string(), "e_true".to_string()];
    header.extend((1..=p).map(|k| format!("x{k}")));
    w.write_record(&header).map_err(|e| csv_err(&data_path, e))?;
    for i in 0..synth.dataset.n() {
        let mut row = vec![
            num(synth.dataset.y[i]),
            synth.dataset.w[i].to_string(),
            num(synth.true_e[i]),
        ];
        row.extend((0..p).map(|j| num(synth.dataset.x[(i, j)])));
        w.write_record(&row).map_err(|e| csv_err(&data_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&data_path, e))?;

    let truth_path = out.join("truth.csv");
    let mut w = open_csv_writer(&truth_path)?;
    w.write_record(["unit", "true_cate", "y1", "y0"]).map_err(|e| csv_err(&truth_path, e))?;
    for i in 0..synth.dataset.n() {
        w.write_record([
            i.to_string(),
            num(synth.true_cate[i]),
            num(synth.y1[i]),
            num(synth.y0[i]),
        ])
        .map_err(|e| csv_err(&truth_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&truth_path, e))?;

    write_json(
        &out.join("manifest.json"),
        &SimManifest {
            artifact: "gpmix",
            version: env!("CARGO_PKG_VERSION"),
            case: &case.to_lowercase(),
            n,
            seed,
        },
    )
}

// ---------------------------------------------------------------------------
// fit

#[derive(Serialize, Clone)]
struct Standardization {
    means: Vec<f64>,
    sds: Vec<f64>,
}

/// Z-scores every column in place; zero-variance columns are centered only
/// and recorded with sd 1.
fn standardize_columns(x: &mut DMatrix<f64>) -> Standardization {
    let n = x.nrows();
    let mut means = Vec::with_capacity(x.ncols());
    let mut sds = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let mean = x.column(j).sum() / n as f64;
        let ss: f64 = x.column(j).iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
        let scale = if sd > 0.0 { sd } else { 1.0 };
        for i in 0..n {
            x[(i, j)] = (x[(i, j)] - mean) / scale;
        }
        means.push(mean);
        sds.push(scale);
    }
    Standardization { means, sds }
}

struct ChainOutput {
    chain: usize,
    seed: u64,
    g: DMatrix<f64>,
    h: DMatrix<f64>,
    sigma2: Vec<f64>,
    beta: Option<DMatrix<f64>>,
    e: Option<DMatrix<f64>>,
    acceptance_rate: Option<f64>,
    nonfinite_rejects: u64,
    step_size_final: Option<f64>,
    clip_count: usize,
    jitter_events: u64,
    sigma2_init: f64,
}

#[derive(Serialize)]
struct ChainMetaEntry {
    chain: usize,
    seed: u64,
    acceptance_rate: Option<f64>,
    nonfinite_rejects: u64,
    step_size_final: Option<f64>,
    clip_count: usize,
    jitter_events: u64,
    sigma2_init: f64,
}

#[derive(Serialize)]
struct ChainMeta {
    mode: String,
    chains: usize,
    iters: usize,
    burn_in: usize,
    thin: usize,
    retained_per_chain: usize,
    seed: u64,
    level: f64,
    acceptance_rate: Option<f64>,
    clip_count: usize,
    jitter_events: u64,
    wall_time_ms: u64,
    standardize_x: Option<Standardization>,
    per_chain: Vec<ChainMetaEntry>,
}

#[derive(Serialize)]
struct AteSummary {
    point: f64,
    lwr: f64,
    upr: f64,
    level: f64,
}

/// How many worker threads chain orchestration may use: the smaller of the
/// machine's parallelism and `GPMIX_THREADS` (when set).
fn thread_cap() -> Result<usize> {
    let hw = std::thread::available_parallelism().map(std::num::NonZeroUsize::get).unwrap_or(1);
    match std::env::var("GPMIX_THREADS") {
        Err(std::env::VarError::NotPresent) => Ok(hw),
        Err(e) => Err(Error::InvalidArgument(format!("GPMIX_THREADS: {e}"))),
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&v| v >= 1)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "GPMIX_THREADS must be a positive integer, got `{s}`"
                ))
            }),
    }
}

fn run_parallel<T, F>(count: usize, cap: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let mut slots: Vec<Option<Result<T>>> = Vec::with_capacity(count);
    slots.resize_with(count, || None);
    let indices: Vec<usize> = (0..count).collect();
    for wave in indices.chunks(cap.max(1)) {
        std::thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|&k| {
                    let job = &job;
                    (k, scope.spawn(move || job(k)))
                })
                .collect();
            for (k, handle) in handles {
                slots[k] = Some(handle.join().expect("chain thread panicked"));
            }
        });
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(k, slot)| {
            slot.expect("chain slot unfilled")
                .map_err(|e| Error::context(format!("chain {k}"), e))
        })
        .collect()
}

fn pooled_rows(outputs: &[ChainOutput], pick: impl Fn(&ChainOutput) -> &DMatrix<f64>) -> DMatrix<f64> {
    let cols = pick(&outputs[0]).ncols();
    let rows: usize = outputs.iter().map(|o| pick(o).nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for o in outputs {
        let m = pick(o);
        out.rows_mut(at, m.nrows()).copy_from(m);
        at += m.nrows();
    }
    out
}

fn write_draws(
    path: &Path,
    outputs: &[ChainOutput],
    thin_output: bool,
) -> Result<()> {
    let multi = outputs.len() > 1;
    let mut w = open_csv_writer(path)?;
    let mut header: Vec<&str> = Vec::new();
    if multi {
        header.push("chain");
    }
    header.extend(["iter", "quantity", "index", "value"]);
    w.write_record(&header).map_err(|e| csv_err(path, e))?;

    let mut row: Vec<String> = Vec::with_capacity(5);
    let mut emit = |w: &mut csv::Writer<std::fs::File>,
                    chain: usize,
                    iter: usize,
                    quantity: &str,
                    index: usize,
                    value: f64|
     -> Result<()> {
        row.clear();
        if multi {
            row.push(chain.to_string());
        }
        row.extend([iter.to_string(), quantity.to_string(), index.to_string(), num(value)]);
        w.write_record(&row).map_err(|e| csv_err(path, e))
    };

    for o in outputs {
        let n = o.g.ncols();
        for t in 0..o.g.nrows() {
            for i in 0..n {
                emit(&mut w, o.chain, t, "g", i, o.g[(t, i)])?;
            }
            if thin_output {
                continue;
            }
            for i in 0..n {
                emit(&mut w, o.chain, t, "h", i, o.h[(t, i)])?;
            }
            emit(&mut w, o.chain, t, "sigma2", 0, o.sigma2[t])?;
            if let Some(beta) = &o.beta {
                for j in 0..beta.ncols() {
                    emit(&mut w, o.chain, t, "beta", j, beta[(t, j)])?;
                }
            }
            if let Some(e) = &o.e {
                for i in 0..e.ncols() {
                    emit(&mut w, o.chain, t, "e", i, e[(t, i)])?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_summary(path: &Path, summary: &CateSummary) -> Result<()> {
    let mut w = open_csv_writer(path)?;
    w.write_record(["unit", "cate_point", "cate_lwr", "cate_upr"])
        .map_err(|e| csv_err(path, e))?;
    for i in 0..summary.point.len() {
        w.write_record([
            i.to_string(),
            num(summary.point[i]),
            num(summary.lower[i]),
            num(summary.upper[i]),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn cmd_fit(
    data_path: &Path,
    config_path: Option<&Path>,
    out: &Path,
    mode: &str,
    level: f64,
    thin_output: bool,
) -> Result<()> {
    let known = match mode {
        "known" => true,
        "unknown" => false,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown mode `{other}`, expected `known` or `unknown`"
            )))
        }
    };
    if !(level.is_finite() && level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "interval level must lie in (0, 1), got {level}"
        )));
    }
    let config = match config_path {
        Some(path) => FitConfig::load(path)?,
        None => FitConfig::default(),
    };

    let mut dataset = read_dataset(data_path, known)?;
    let standardization = config
        .standardize_x
        .then(|| standardize_columns(&mut dataset.x));

    let hypers = config.hypers(&dataset.x)?;
    let mcmc = config.mcmc()?;
    let chains = config.chains()?;
    let clip_eps = config.clip_eps();
    let probit = config.probit(dataset.p())?;
    let cap = thread_cap()?.min(chains);

    let started = std::time::Instant::now();
    let outputs = run_parallel(chains, cap, |k| {
        let mut cfg = mcmc;
        cfg.seed = mcmc.seed.wrapping_add(k as u64);
        if known {
            let draws = run_gibbs_known(&dataset, &hypers, &cfg, clip_eps)?;
            Ok(ChainOutput {
                chain: k,
                seed: cfg.seed,
                g: draws.g,
                h: draws.h,
                sigma2: draws.sigma2,
                beta: None,
                e: None,
                acceptance_rate: None,
                nonfinite_rejects: 0,
                step_size_final: None,
                clip_count: draws.meta.clip_count,
                jitter_events: draws.meta.jitter_events,
                sigma2_init: draws.meta.sigma2_init,
            })
        } else {
            let draws = run_gibbs_unknown(&dataset, &hypers, &cfg, &probit, clip_eps)?;
            Ok(ChainOutput {
                chain: k,
                seed: cfg.seed,
                g: draws.g,
                h: draws.h,
                sigma2: draws.sigma2,
                beta: Some(draws.beta),
                e: Some(draws.e),
                acceptance_rate: Some(draws.acceptance_rate),
                nonfinite_rejects: draws.nonfinite_rejects,
                step_size_final: Some(draws.step_size_final),
                clip_count: draws.meta.clip_count,
                jitter_events: draws.meta.jitter_events,
                sigma2_init: draws.meta.sigma2_init,
            })
        }
    })?;
    let wall_time_ms = started.elapsed().as_millis() as u64;

    for o in &outputs {
        eprintln!(
            "chain {}: {} retained draws, {} jitter events{}",
            o.chain,
            o.g.nrows(),
            o.jitter_events,
            o.acceptance_rate
                .map(|r| format!(", acceptance rate {r:.3}"))
                .unwrap_or_default()
        );
        if let Some(rate) = o.acceptance_rate {
            if !(0.10..=0.60).contains(&rate) {
                eprintln!(
                    "warning: chain {} acceptance rate {rate:.3} outside [0.10, 0.60]; \
                     adjust probit.step_size",
                    o.chain
                );
            }
        }
    }

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_draws(&out.join("draws.csv"), &outputs, thin_output)?;

    let pooled_g = pooled_rows(&outputs, |o| &o.g);
    let summary = summarize(&pooled_g, level)?;
    write_summary(&out.join("summary.csv"), &summary)?;

    let (point, lwr, upr) = summarize_scalar(&ate_draws(&pooled_g), level)?;
    write_json(&out.join("ate.json"), &AteSummary { point, lwr, upr, level })?;

    let rates: Vec<f64> = outputs.iter().filter_map(|o| o.acceptance_rate).collect();
    let meta = ChainMeta {
        mode: mode.to_string(),
        chains,
        iters: mcmc.iters,
        burn_in: mcmc.burn_in,
        thin: mcmc.thin,
        retained_per_chain: mcmc.retained(),
        seed: mcmc.seed,
        level,
        acceptance_rate: (!rates.is_empty())
            .then(|| rates.iter().sum::<f64>() / rates.len() as f64),
        clip_count: outputs.iter().map(|o| o.clip_count).sum(),
        jitter_events: outputs.iter().map(|o| o.jitter_events).sum(),
        wall_time_ms,
        standardize_x: standardization,
        per_chain: outputs
            .iter()
            .map(|o| ChainMetaEntry {
                chain: o.chain,
                seed: o.seed,
                acceptance_rate: o.acceptance_rate,
                nonfinite_rejects: o.nonfinite_rejects,
                step_size_final: o.step_size_final,
                clip_count: o.clip_count,
                jitter_events: o.jitter_events,
                sigma2_init: o.sigma2_init,
            })
            .collect(),
    };
    write_json(&out.join("chain_meta.json"), &meta)
}

// ---------------------------------------------------------------------------
// diagnose

fn integer_ids(values: &[f64], path: &Path) -> Result<Vec<u64>> {
    values
        .iter()
        .map(|&v| {
            if v.fract() == 0.0 && v >= 0.0 && v.is_finite() {
                Ok(v as u64)
            } else {
                Err(Error::Parse {
                    path: path.display().to_string(),
                    message: format!("unit id `{v}` is not a nonnegative integer"),
                })
            }
        })
        .collect()
}

pub fn cmd_diagnose(summary_path: &Path, truth_path: &Path, out: &Path) -> Result<()> {
    let summary_table = Table::read(summary_path)?;
    let truth_table = Table::read(truth_path)?;

    let units = integer_ids(summary_table.require("unit", summary_path)?, summary_path)?;
    let point = summary_table.require("cate_point", summary_path)?;
    let lower = summary_table.require("cate_lwr", summary_path)?;
    let upper = summary_table.require("cate_upr", summary_path)?;

    let truth_units = integer_ids(truth_table.require("unit", truth_path)?, truth_path)?;
    let true_cate = truth_table.require("true_cate", truth_path)?;

    if units.len() != truth_units.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} summary rows against {} truth rows",
            units.len(),
            truth_units.len()
        )));
    }

    let mut truth_by_id = std::collections::HashMap::with_capacity(truth_units.len());
    for (row, &id) in truth_units.iter().enumerate() {
        if truth_by_id.insert(id, true_cate[row]).is_some() {
            return Err(Error::Parse {
                path: truth_path.display().to_string(),
                message: format!("duplicate unit id {id}"),
            });
        }
    }
    let truth_joined: Vec<f64> = units
        .iter()
        .map(|id| {
            truth_by_id.get(id).copied().ok_or_else(|| Error::Parse {
                path: truth_path.display().to_string(),
                message: format!("no truth row for unit {id}"),
            })
        })
        .collect::<Result<_>>()?;

    let cate_summary = CateSummary {
        point: point.to_vec(),
        lower: lower.to_vec(),
        upper: upper.to_vec(),
        level: f64::NAN,
    };
    let diag = diagnostics(&truth_joined, &cate_summary)?;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join("diagnostics.json"), &diag)?;

    let scatter_path = out.join("cate_scatter.csv");
    let mut w = open_csv_writer(&scatter_path)?;
    w.write_record(["true_cate", "point", "lwr", "upr"])
        .map_err(|e| csv_err(&scatter_path, e))?;
    for i in 0..units.len() {
        w.write_record([num(truth_joined[i]), num(point[i]), num(lower[i]), num(upper[i])])
            .map_err(|e| csv_err(&scatter_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&scatter_path, e))
}

// ---------------------------------------------------------------------------
// bin

/// Reads the effect-surface draws back out of a long-format draws file.
fn read_g_draws(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let parse_error = |message: String| Error::Parse {
        path: path.display().to_string(),
        message,
    };
    let (Some(iter_col), Some(quantity_col), Some(index_col), Some(value_col)) =
        (col("iter"), col("quantity"), col("index"), col("value"))
    else {
        return Err(Error::Context {
            context: path.display().to_string(),
            source: Box::new(Error::MissingColumn("iter/quantity/index/value".into())),
        });
    };
    let chain_col = col("chain");

    // (chain, iter) keys in first-seen order become pooled draw rows.
    let mut row_of: std::collections::HashMap<(u64, u64), usize> = std::collections::HashMap::new();
    let mut cells: Vec<(usize, usize, f64)> = Vec::new();
    let mut n = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.get(quantity_col) != Some("g") {
            continue;
        }
        let field = |j: usize| record.get(j).unwrap_or("");
        let chain: u64 = match chain_col {
            Some(j) => field(j)
                .parse()
                .map_err(|_| parse_error(format!("bad chain id `{}`", field(j))))?,
            None => 0,
        };
        let iter: u64 = field(iter_col)
            .parse()
            .map_err(|_| parse_error(format!("bad iter `{}`", field(iter_col))))?;
        let index: usize = field(index_col)
            .parse()
            .map_err(|_| parse_error(format!("bad index `{}`", field(index_col))))?;
        let value: f64 = field(value_col)
            .parse()
            .map_err(|_| parse_error(format!("bad value `{}`", field(value_col))))?;
        let next_row = row_of.len();
        let row = *row_of.entry((chain, iter)).or_insert(next_row);
        n = n.max(index + 1);
        cells.push((row, index, value));
    }
    let rows = row_of.len();
    if rows == 0 || n == 0 {
        return Err(Error::InsufficientDraws("draws file holds no effect draws".into()));
    }
    if cells.len() != rows * n {
        return Err(parse_error(format!(
            "expected {} effect cells ({} draws x {} units), found {}",
            rows * n,
            rows,
            n,
            cells.len()
        )));
    }
    let mut g = DMatrix::zeros(rows, n);
    for (row, index, value) in cells {
        g[(row, index)] = value;
    }
    Ok(g)
}

pub fn cmd_bin(
    draws_path: &Path,
    data_path: &Path,
    values_column: &str,
    n_bins: usize,
    level: f64,
    out: &Path,
) -> Result<()> {
    let g = read_g_draws(draws_path)?;
    let table = Table::read(data_path)?;
    let values = table.require(values_column, data_path)?;
    if values.len() != g.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} data rows against {} units in the draws file",
            values.len(),
            g.ncols()
        )));
    }
    let bins = bin_by_quantile(values, &g, n_bins, level)?;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let bins_path = out.join("bins.csv");
    let mut w = open_csv_writer(&bins_path)?;
    w.write_record(["bin", "mean_value", "point", "lwr", "upr"])
        .map_err(|e| csv_err(&bins_path, e))?;
    for b in &bins {
        w.write_record([
            b.bin.to_string(),
            num(b.mean_value),
            num(b.point),
            num(b.lower),
            num(b.upper),
        ])
        .map_err(|e| csv_err(&bins_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&bins_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_every_documented_key() {
        let text = r#"
            standardize_x = true
            [kernel]
            s0_sq = 2.0
            s_sq = 0.5
            c = [0.0, 1.0]
            sh_sq = 3.0
            bandwidth_sq = 0.25
            [ig]
            a = 4.0
            b = 5.0
            [mcmc]
            iters = 100
            burn_in = 10
            thin = 2
            seed = 7
            jitter = 1e-6
            chains = 3
            [probit]
            psi_scale = 1.5
            step_size = 0.2
            [clip]
            eps = 0.02
        "#;
        let cfg: FitConfig = toml::from_str(text).unwrap();
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let hp = cfg.hypers(&x).unwrap();
        assert_eq!(hp.s0_sq, 2.0);
        assert_eq!(hp.s_sq, vec![0.5, 0.5]);
        assert_eq!(hp.c, vec![0.0, 1.0]);
        assert_eq!(hp.sh_sq, 3.0);
        assert_eq!(hp.bandwidth_sq, 0.25);
        assert_eq!((hp.ig_a, hp.ig_b), (4.0, 5.0));
        let mc = cfg.mcmc().unwrap();
        assert_eq!((mc.iters, mc.burn_in, mc.thin, mc.seed), (100, 10, 2, 7));
        assert_eq!(cfg.chains().unwrap(), 3);
        assert_eq!(cfg.clip_eps(), 0.02);
        assert!(cfg.standardize_x);
        let pc = cfg.probit(2).unwrap();
        assert_eq!(pc.step_size, 0.2);
        assert_eq!(pc.psi[(0, 0)], 1.5 * 1.5);
    }

    #[test]
    fn config_rejects_unknown_keys_and_accepts_arrays() {
        assert!(matches!(
            toml::from_str::<FitConfig>("[kernel]\nbandwith_sq = 1.0")
                .map_err(|e| Error::ConfigInvalid(e.to_string())),
            Err(Error::ConfigInvalid(_))
        ));
        let cfg: FitConfig = toml::from_str("[kernel]\ns_sq = [0.1, 0.2]").unwrap();
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(cfg.hypers(&x).unwrap().s_sq, vec![0.1, 0.2]);
        let cfg: FitConfig = toml::from_str("[kernel]\nc = [0.0]").unwrap();
        assert!(matches!(cfg.hypers(&x), Err(Error::ConfigInvalid(_))));
        let cfg: FitConfig = toml::from_str("[mcmc]\nchains = 0").unwrap();
        assert!(matches!(cfg.chains(), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn standardize_centers_and_scales() {
        let mut x = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let s = standardize_columns(&mut x);
        assert_eq!(s.means, vec![2.0, 5.0]);
        assert_eq!(s.sds[0], 1.0);
        assert_eq!(s.sds[1], 1.0);
        assert_eq!(x.column(0).iter().copied().collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);
        assert!(x.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dataset_reader_handles_column_order_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "x2,y,w,x1,e_true\n0.5,1.0,1,2.0,0.4\n0.25,2.0,0,3.0,0.6\n")
            .unwrap();
        let ds = read_dataset(&path, true).unwrap();
        assert_eq!(ds.x[(0, 0)], 2.0);
        assert_eq!(ds.x[(0, 1)], 0.5);
        assert_eq!(ds.e_known, Some(vec![0.4, 0.6]));

        let ds = read_dataset(&path, false).unwrap();
        assert_eq!(ds.e_known, None);

        let no_e = dir.path().join("no_e.csv");
        std::fs::write(&no_e, "y,w,x1\n1.0,1,2.0\n").unwrap();
        let err = read_dataset(&no_e, true).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("e_true"));

        let odd = dir.path().join("odd.csv");
        std::fs::write(&odd, "y,w,x1,bogus\n1.0,1,2.0,3.0\n").unwrap();
        assert!(matches!(read_dataset(&odd, false), Err(Error::Parse { .. })));

        let gap = dir.path().join("gap.csv");
        std::fs::write(&gap, "y,w,x1,x3\n1.0,1,2.0,3.0\n").unwrap();
        assert!(matches!(read_dataset(&gap, false), Err(Error::Parse { .. })));

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "y,w,x1\noops,1,2.0\n").unwrap();
        assert!(matches!(read_dataset(&bad, false), Err(Error::Parse { .. })));
    }

    #[test]
    fn simulate_rejects_unknown_case() {
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_simulate("z", 10, 1, dir.path()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn fit_rejects_bad_mode_and_level() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data.csv");
        std::fs::write(&data, "y,w,x1\n1.0,1,2.0\n").unwrap();
        assert!(matches!(
            cmd_fit(&data, None, dir.path(), "sideways", 0.95, false),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            cmd_fit(&data, None, dir.path(), "known", 1.5, false),
            Err(Error::InvalidArgument(_))
        ));
    }
}
