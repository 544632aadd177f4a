//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on runtime or numerical failure, 2 on usage
//! errors (bad flags or parameter values).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use crate::embed::{laplacian_eigenmaps, nystrom_extend_batch};
use crate::error::Error;
use crate::kernels::{bind, KernelSpec, NeighborRule};
use crate::krr::{krr_fit, krr_predict_batch};
use crate::matio::{format_real, read_matrix, write_atomic, write_matrix};
use crate::metrics::{sparsity_sweep, sweep_csv, HeldOut, SweepConfig};
use crate::model::Model;
use crate::sparse::{sparse_predict_batch, SolveOptions, SparseModel};
use crate::synth::swiss_roll;

#[derive(Debug, Parser)]
#[command(
    name = "sparse-krr",
    version,
    about = "Sparse out-of-sample extension for manifold embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a Swiss roll; writes points.csv and intrinsic.csv.
    Swissroll {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Laplacian eigenmaps of a point set; writes the coordinates and a
    /// Nyström model.
    Embed {
        #[arg(long)]
        points: PathBuf,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        dims: usize,
        /// Embedding coordinates (CSV).
        #[arg(long)]
        out: PathBuf,
        /// Nyström extension model.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Fit kernel ridge regression from points to targets.
    Fit {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sparsify a fitted kernel ridge regression model.
    Sparsify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        epsilon: f64,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project points through a krr, sparse or nystrom model.
    Project {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an epsilon x lambda grid described by a key=value config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    /// Gaussian kernel width.
    #[arg(long, conflicts_with_all = ["temperature", "tau", "knn"])]
    pub sigma: Option<f64>,
    /// Heat kernel temperature (normalized heat kernel).
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Neighborhood radius.
    #[arg(long, conflicts_with = "knn")]
    pub tau: Option<f64>,
    /// Number of nearest neighbors.
    #[arg(long)]
    pub knn: Option<usize>,
}

impl KernelArgs {
    pub fn spec(&self) -> Result<KernelSpec, CliError> {
        let spec = kernel_spec(self.sigma, self.temperature, self.tau, self.knn).map_err(CliError::Usage)?;
        spec.validate()?;
        Ok(spec)
    }
}

fn kernel_spec(
    sigma: Option<f64>,
    temperature: Option<f64>,
    tau: Option<f64>,
    knn: Option<usize>,
) -> Result<KernelSpec, String> {
    match (sigma, temperature, tau, knn) {
        (Some(sigma), None, None, None) => Ok(KernelSpec::Gaussian { sigma }),
        (None, Some(temperature), Some(tau), None) => Ok(KernelSpec::NormalizedHeat {
            temperature,
            rule: NeighborRule::Ball { tau },
        }),
        (None, Some(temperature), None, Some(k)) => Ok(KernelSpec::NormalizedHeat {
            temperature,
            rule: NeighborRule::Knn { k },
        }),
        _ => Err("give either --sigma, or --temperature with exactly one of --tau and --knn".into()),
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub fista_max_iter: Option<usize>,
    #[arg(long)]
    pub fista_tol: Option<f64>,
    #[arg(long)]
    pub gamma_tol: Option<f64>,
    #[arg(long)]
    pub sv_threshold: Option<f64>,
    #[arg(long)]
    pub slack: Option<f64>,
}

impl SolverArgs {
    pub fn options(&self) -> Result<SolveOptions, CliError> {
        let d = SolveOptions::default();
        let o = SolveOptions {
            fista_max_iter: self.fista_max_iter.unwrap_or(d.fista_max_iter),
            fista_tol: self.fista_tol.unwrap_or(d.fista_tol),
            gamma_tol: self.gamma_tol.unwrap_or(d.gamma_tol),
            sv_threshold: self.sv_threshold.unwrap_or(d.sv_threshold),
            slack: self.slack.unwrap_or(d.slack),
        };
        o.validate()?;
        Ok(o)
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(msg) => CliError::Usage(msg),
            e => CliError::Run(e),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Swissroll { n, seed, out_dir } => {
            let roll = swiss_roll(n as usize, seed)?;
            fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            write_matrix(out_dir.join("points.csv"), &roll.points)?;
            write_matrix(out_dir.join("intrinsic.csv"), &roll.intrinsic)?;
            log::info!("wrote {n} points to {}", out_dir.display());
        }
        Command::Embed {
            points,
            kernel,
            dims,
            out,
            model,
        } => {
            let spec = kernel.spec()?;
            if !spec.needs_training_degrees() {
                return Err(CliError::Usage(
                    "embed needs --temperature with --tau or --knn".into(),
                ));
            }
            let pts = read_matrix(&points)?;
            check_knn(&spec, pts.nrows())?;
            let emb = laplacian_eigenmaps(&pts.view(), spec, dims)?;
            log::info!("eigenvalues {:?}", emb.eigenvalues.to_vec());
            write_matrix(&out, &emb.coordinates)?;
            if let Some(m) = model {
                Model::Nystrom(emb).save(m)?;
            }
        }
        Command::Fit {
            points,
            targets,
            kernel,
            lambda,
            out,
        } => {
            let spec = kernel.spec()?;
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(CliError::Usage(format!(
                    "--lambda must be nonnegative, got {lambda}"
                )));
            }
            let pts = read_matrix(&points)?;
            let y = read_matrix(&targets)?;
            check_knn(&spec, pts.nrows())?;
            if y.nrows() != pts.nrows() {
                return Err(CliError::Usage(format!(
                    "{} has {} rows but {} has {}",
                    targets.display(),
                    y.nrows(),
                    points.display(),
                    pts.nrows()
                )));
            }
            let m = krr_fit(bind(spec, &pts.view())?, &y.view(), lambda)?;
            log::info!("relative residual {:e}", m.relative_residual);
            Model::Krr(m).save(out)?;
        }
        Command::Sparsify {
            model,
            epsilon,
            solver,
            out,
        } => {
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                return Err(CliError::Usage(format!(
                    "--epsilon must be positive, got {epsilon}"
                )));
            }
            let opts = solver.options()?;
            let krr = match Model::load(&model)? {
                Model::Krr(m) => m,
                other => {
                    return Err(CliError::Usage(format!(
                        "{} holds a {} model; sparsify needs a krr model",
                        model.display(),
                        other.kind()
                    )))
                }
            };
            let n = krr.kernel.len();
            let sm = SparseModel::from_krr(&krr, epsilon, &opts)?;
            println!("{}", sparsify_report(&sm, n));
            Model::Sparse(sm).save(out)?;
        }
        Command::Project { model, points, out } => {
            let m = Model::load(&model)?;
            let xs = read_matrix(&points)?;
            let proj = match &m {
                Model::Krr(k) => krr_predict_batch(k, &xs.view())?,
                Model::Sparse(s) => {
                    if s.support_count() == 0 {
                        log::warn!("model has no support vectors; every projection is zero");
                    }
                    sparse_predict_batch(s, &xs.view())?
                }
                Model::Nystrom(e) => nystrom_extend_batch(e, &xs.view())?,
            };
            write_matrix(&out, &proj)?;
        }
        Command::Sweep { config, out } => {
            let cfg = load_sweep_config(&config)?;
            let reports = sparsity_sweep(&cfg)?;
            let csv = sweep_csv(&reports);
            match out {
                Some(p) => write_atomic(p, &csv)?,
                None => print!("{csv}"),
            }
            if reports.iter().any(|r| r.error.is_some()) {
                log::warn!("some sweep cells failed; see the log above");
            }
        }
    }
    Ok(())
}

fn check_knn(spec: &KernelSpec, n: usize) -> Result<(), CliError> {
    if let KernelSpec::NormalizedHeat {
        rule: NeighborRule::Knn { k },
        ..
    } = spec
    {
        if *k >= n {
            return Err(CliError::Usage(format!(
                "--knn {k} needs more than {k} points, got {n}"
            )));
        }
    }
    Ok(())
}

/// One-line summary printed by `sparsify`.
pub fn sparsify_report(m: &SparseModel, n: usize) -> String {
    let bound = m.epsilon * m.epsilon;
    let mut line = format!(
        "support_vectors={} of {n} achieved_msd={} bound={} gamma_star={} converged={}",
        m.support_count(),
        format_real(m.achieved_msd),
        format_real(bound),
        format_real(m.gamma_star),
        m.converged
    );
    if m.support_count() == 0 {
        line.push_str(" (no support vectors needed: the zero predictor meets the bound)");
    }
    line
}

/// Reads a sweep config: one `key = value` per line, `#` comments, list
/// values comma-separated. Relative paths resolve against the config's
/// directory.
///
/// Keys: `points` or `swissroll_n` (+ optional `swissroll_seed`); `targets`
/// or `embed_dims` with `embed_temperature` and one of `embed_tau` /
/// `embed_knn`; the fitted kernel as `sigma`, or `temperature` with `tau` /
/// `knn`; `epsilon` and `lambda` lists; optional `test_points`,
/// `test_reference`, `train_labels`, `test_labels`; and solver overrides
/// `fista_max_iter`, `fista_tol`, `gamma_tol`, `sv_threshold`, `slack`.
pub fn load_sweep_config(path: &Path) -> Result<SweepConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_sweep_config(&text, base)
}

const SWEEP_KEYS: &[&str] = &[
    "points",
    "swissroll_n",
    "swissroll_seed",
    "targets",
    "embed_dims",
    "embed_temperature",
    "embed_tau",
    "embed_knn",
    "sigma",
    "temperature",
    "tau",
    "knn",
    "epsilon",
    "lambda",
    "test_points",
    "test_reference",
    "train_labels",
    "test_labels",
    "fista_max_iter",
    "fista_tol",
    "gamma_tol",
    "sv_threshold",
    "slack",
];

struct ConfigMap {
    entries: BTreeMap<String, (usize, String)>,
}

impl ConfigMap {
    fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(config_err(line_no, format!("expected key = value, got {line:?}")));
            };
            let (k, v) = (k.trim(), v.trim());
            if !SWEEP_KEYS.contains(&k) {
                return Err(config_err(line_no, format!("unknown key {k:?}")));
            }
            if v.is_empty() {
                return Err(config_err(line_no, format!("{k} has no value")));
            }
            if entries.insert(k.to_string(), (line_no, v.to_string())).is_some() {
                return Err(config_err(line_no, format!("{k} given twice")));
            }
        }
        Ok(ConfigMap { entries })
    }

    fn get(&self, key: &str) -> Option<&(usize, String)> {
        self.entries.get(key)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| config_err(*line, format!("{key}: cannot parse {v:?}"))),
        }
    }

    fn list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        let (line, v) = self
            .get(key)
            .ok_or_else(|| CliError::Usage(format!("sweep config lacks {key}")))?;
        v.split(',')
            .map(|s| {
                let s = s.trim();
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| config_err(*line, format!("{key}: cannot parse {s:?}")))
            })
            .collect()
    }

    fn path(&self, key: &str, base: &Path) -> Option<PathBuf> {
        self.get(key).map(|(_, v)| base.join(v))
    }

    fn kernel(&self, prefix: &str) -> Result<Option<KernelSpec>, CliError> {
        let key = |k: &str| format!("{prefix}{k}");
        let sigma = self.parsed::<f64>(&key("sigma"))?;
        let temperature = self.parsed::<f64>(&key("temperature"))?;
        let tau = self.parsed::<f64>(&key("tau"))?;
        let knn = self.parsed::<usize>(&key("knn"))?;
        if sigma.is_none() && temperature.is_none() && tau.is_none() && knn.is_none() {
            return Ok(None);
        }
        let spec = kernel_spec(sigma, temperature, tau, knn).map_err(|m| {
            CliError::Usage(format!("sweep config {prefix}kernel: {m}").replace("--", prefix))
        })?;
        spec.validate()?;
        Ok(Some(spec))
    }
}

fn config_err(line: usize, message: String) -> CliError {
    CliError::Usage(format!("sweep config line {line}: {message}"))
}

fn read_labels(path: &Path) -> Result<Vec<usize>, CliError> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 {
        return Err(CliError::Usage(format!(
            "{}: labels file must have one column",
            path.display()
        )));
    }
    m.column(0)
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(CliError::Run(Error::NonIntegerLabel {
                    line: i + 1,
                    token: format_real(v),
                }))
            }
        })
        .collect()
}

pub fn parse_sweep_config(text: &str, base: &Path) -> Result<SweepConfig, CliError> {
    let c = ConfigMap::parse(text)?;

    let points: Array2<f64> = match (c.path("points", base), c.parsed::<usize>("swissroll_n")?) {
        (Some(p), None) => read_matrix(p)?,
        (None, Some(n)) => swiss_roll(n, c.parsed::<u64>("swissroll_seed")?.unwrap_or(0))?.points,
        _ => {
            return Err(CliError::Usage(
                "sweep config needs exactly one of points, swissroll_n".into(),
            ))
        }
    };

    let targets = match (c.path("targets", base), c.parsed::<usize>("embed_dims")?) {
        (Some(p), None) => read_matrix(p)?,
        (None, Some(dims)) => {
            let spec = c.kernel("embed_")?.ok_or_else(|| {
                CliError::Usage("embed_dims needs embed_temperature with embed_tau or embed_knn".into())
            })?;
            if !spec.needs_training_degrees() {
                return Err(CliError::Usage(
                    "the embedding kernel must be a heat kernel".into(),
                ));
            }
            check_knn(&spec, points.nrows())?;
            laplacian_eigenmaps(&points.view(), spec, dims)?.coordinates
        }
        _ => {
            return Err(CliError::Usage(
                "sweep config needs exactly one of targets, embed_dims".into(),
            ))
        }
    };

    let kernel = c.kernel("")?.ok_or_else(|| {
        CliError::Usage("sweep config needs a kernel (sigma, or temperature with tau/knn)".into())
    })?;
    check_knn(&kernel, points.nrows())?;

    let epsilons = c.list("epsilon")?;
    let lambdas = c.list("lambda")?;
    if let Some(l) = lambdas.iter().find(|l| **l < 0.0) {
        return Err(CliError::Usage(format!("lambda must be nonnegative, got {l}")));
    }

    let d = SolveOptions::default();
    let options = SolveOptions {
        fista_max_iter: c.parsed("fista_max_iter")?.unwrap_or(d.fista_max_iter),
        fista_tol: c.parsed("fista_tol")?.unwrap_or(d.fista_tol),
        gamma_tol: c.parsed("gamma_tol")?.unwrap_or(d.gamma_tol),
        sv_threshold: c.parsed("sv_threshold")?.unwrap_or(d.sv_threshold),
        slack: c.parsed("slack")?.unwrap_or(d.slack),
    };
    options.validate()?;

    let held_out = match c.path("test_points", base) {
        None => {
            for k in ["test_reference", "train_labels", "test_labels"] {
                if let Some((line, _)) = c.get(k) {
                    return Err(config_err(*line, format!("{k} needs test_points")));
                }
            }
            None
        }
        Some(p) => {
            let pts = read_matrix(p)?;
            let reference = match c.path("test_reference", base) {
                None => None,
                Some(r) => {
                    let m = read_matrix(&r)?;
                    if m.ncols() != 1 || m.nrows() != pts.nrows() {
                        return Err(CliError::Usage(format!(
                            "{}: reference must be one column with a row per test point",
                            r.display()
                        )));
                    }
                    Some(m.column(0).to_vec())
                }
            };
            let labels = match (c.path("train_labels", base), c.path("test_labels", base)) {
                (None, None) => None,
                (Some(a), Some(b)) => Some((read_labels(&a)?, read_labels(&b)?)),
                _ => return Err(CliError::Usage("give both train_labels and test_labels".into())),
            };
            Some(HeldOut {
                points: pts,
                reference,
                labels,
            })
        }
    };

    Ok(SweepConfig {
        points,
        targets,
        kernel,
        epsilons,
        lambdas,
        options,
        held_out,
    })
}
