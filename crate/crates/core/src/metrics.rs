//! Evaluation: approximation discrepancy, correlation of 1-D signals,
//! nearest-neighbor classification and the ε × λ sparsity sweep.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::sq_dist;
use crate::kernels::{bind, KernelSpec};
use crate::krr::{krr_fit, KrrModel};
use crate::matio::format_real;
use crate::sparse::{sparse_predict_batch, SolveOptions, SparseModel};

/// `(1/n) Σ_i ||a_i − b_i||²` over the rows of two equally shaped matrices.
pub fn mean_sq_discrepancy(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    if a.nrows() == 0 {
        return Err(Error::Empty);
    }
    let total: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(total / a.nrows() as f64)
}

/// Pearson correlation coefficient.
pub fn pearson_corr(a: &ArrayView1<f64>, b: &ArrayView1<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::InvalidParameter(
            "correlation needs at least two samples".into(),
        ));
    }
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::InvalidParameter(
            "correlation of a constant signal is undefined".into(),
        ));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub labels: Vec<usize>,
    /// Fraction of correct labels, when the truth was supplied.
    pub rate: Option<f64>,
}

/// 1-nearest-neighbor classification; ties go to the lowest training index.
pub fn nn_classify(
    train: &ArrayView2<f64>,
    train_labels: &[usize],
    test: &ArrayView2<f64>,
    truth: Option<&[usize]>,
) -> Result<Classification> {
    if train.nrows() == 0 {
        return Err(Error::Empty);
    }
    if train_labels.len() != train.nrows() {
        return Err(Error::Shape(format!(
            "{} labels for {} training rows",
            train_labels.len(),
            train.nrows()
        )));
    }
    if train.ncols() != test.ncols() {
        return Err(Error::Shape(format!(
            "training rows have dimension {}, test rows {}",
            train.ncols(),
            test.ncols()
        )));
    }
    let labels: Vec<usize> = test
        .rows()
        .into_iter()
        .map(|x| {
            let mut best = (0, f64::INFINITY);
            for (j, t) in train.rows().into_iter().enumerate() {
                let d = sq_dist(x, t);
                if d < best.1 {
                    best = (j, d);
                }
            }
            train_labels[best.0]
        })
        .collect();
    let rate = match truth {
        None => None,
        Some(t) if t.len() != labels.len() => {
            return Err(Error::Shape(format!(
                "{} truth labels for {} test rows",
                t.len(),
                labels.len()
            )))
        }
        Some(_) if labels.is_empty() => None,
        Some(t) => {
            let hits = labels.iter().zip(t).filter(|(a, b)| a == b).count();
            Some(hits as f64 / labels.len() as f64)
        }
    };
    Ok(Classification { labels, rate })
}

/// Held-out data scored in every sweep cell.
#[derive(Debug, Clone)]
pub struct HeldOut {
    pub points: Array2<f64>,
    /// Reference signal compared, in absolute correlation, with the first
    /// coordinate of the sparse projection of `points`.
    pub reference: Option<Vec<f64>>,
    /// Training and test labels for 1-NN classification in the embedding:
    /// test projections are classified against the training targets.
    pub labels: Option<(Vec<usize>, Vec<usize>)>,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub points: Array2<f64>,
    /// Training targets (the embedding to be extended).
    pub targets: Array2<f64>,
    pub kernel: KernelSpec,
    pub epsilons: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub options: SolveOptions,
    pub held_out: Option<HeldOut>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub epsilon: f64,
    pub lambda: f64,
    pub kernel: KernelSpec,
    pub sv_count: usize,
    /// Mean squared gap between full and sparse predictions on the training points.
    pub msd: f64,
    pub correlation: Option<f64>,
    pub class_rate: Option<f64>,
    pub converged: bool,
    /// Set when the cell failed; the numeric fields are then meaningless.
    pub error: Option<String>,
}

impl EvalReport {
    fn failed(epsilon: f64, lambda: f64, kernel: KernelSpec, err: &Error) -> Self {
        EvalReport {
            epsilon,
            lambda,
            kernel,
            sv_count: 0,
            msd: f64::NAN,
            correlation: None,
            class_rate: None,
            converged: false,
            error: Some(err.to_string()),
        }
    }
}

pub const SWEEP_HEADER: &str = "epsilon,lambda,sv_count,msd,correlation,class_rate";

/// Renders reports as CSV. Absent values are empty fields; failed cells
/// carry `failed` in the `sv_count` column.
pub fn sweep_csv(reports: &[EvalReport]) -> String {
    let opt = |v: Option<f64>| v.map(format_real).unwrap_or_default();
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in reports {
        let line = if r.error.is_some() {
            format!("{},{},failed,,,", format_real(r.epsilon), format_real(r.lambda))
        } else {
            format!(
                "{},{},{},{},{},{}",
                format_real(r.epsilon),
                format_real(r.lambda),
                r.sv_count,
                format_real(r.msd),
                opt(r.correlation),
                opt(r.class_rate)
            )
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Fits one KRR model per λ and sparsifies it at every ε. Reports come back
/// in λ-major, ε-minor grid order; a failing cell is reported and the sweep
/// carries on.
pub fn sparsity_sweep(cfg: &SweepConfig) -> Result<Vec<EvalReport>> {
    if cfg.epsilons.is_empty() || cfg.lambdas.is_empty() {
        return Err(Error::InvalidParameter("sweep grid is empty".into()));
    }
    cfg.options.validate()?;
    if cfg.targets.nrows() != cfg.points.nrows() {
        return Err(Error::Shape(format!(
            "{} target rows for {} training points",
            cfg.targets.nrows(),
            cfg.points.nrows()
        )));
    }
    let kernel = bind(cfg.kernel, &cfg.points.view())?;
    let fits: Vec<Result<KrrModel>> = cfg
        .lambdas
        .par_iter()
        .map(|&lambda| krr_fit(kernel.clone(), &cfg.targets.view(), lambda))
        .collect();

    let cells: Vec<(usize, f64)> = (0..cfg.lambdas.len())
        .flat_map(|li| cfg.epsilons.iter().map(move |&e| (li, e)))
        .collect();
    Ok(cells
        .par_iter()
        .map(|&(li, epsilon)| {
            let lambda = cfg.lambdas[li];
            let run = || -> Result<EvalReport> {
                let krr = fits[li].as_ref().map_err(clone_err)?;
                evaluate_cell(cfg, krr, epsilon)
            };
            run().unwrap_or_else(|e| {
                log::error!("sweep cell epsilon={epsilon} lambda={lambda}: {e}");
                EvalReport::failed(epsilon, lambda, cfg.kernel, &e)
            })
        })
        .collect())
}

/// Errors are not `Clone`; a shared fit failure is re-reported by message.
fn clone_err(e: &Error) -> Error {
    Error::InvalidParameter(format!("kernel ridge fit failed: {e}"))
}

fn evaluate_cell(cfg: &SweepConfig, krr: &KrrModel, epsilon: f64) -> Result<EvalReport> {
    let model = SparseModel::from_krr(krr, epsilon, &cfg.options)?;
    let full = krr.training_predictions();
    let sparse = sparse_predict_batch(&model, &cfg.points.view())?;
    let msd = mean_sq_discrepancy(&full.view(), &sparse.view())?;
    let mut correlation = None;
    let mut class_rate = None;
    if let Some(h) = &cfg.held_out {
        let proj = sparse_predict_batch(&model, &h.points.view())?;
        if let Some(reference) = &h.reference {
            let r = ndarray::ArrayView1::from(reference.as_slice());
            correlation = Some(pearson_corr(&proj.column(0), &r)?.abs());
        }
        if let Some((train_labels, test_labels)) = &h.labels {
            class_rate =
                nn_classify(&cfg.targets.view(), train_labels, &proj.view(), Some(test_labels))?.rate;
        }
    }
    Ok(EvalReport {
        epsilon,
        lambda: krr.lambda,
        kernel: cfg.kernel,
        sv_count: model.support_count(),
        msd,
        correlation,
        class_rate,
        converged: model.converged,
        error: None,
    })
}
