//! Kernel functions and Gram matrices.
//!
//! Two kernels are supported: the Gaussian `exp(-||x - x'||² / σ²)` and the
//! degree-normalized heat kernel
//!
//! ```text
//! K(x, x') = W(x, x') / sqrt(deg(x) · deg(x'))
//! ```
//!
//! where `W` is a heat kernel truncated to a neighborhood and `deg(x)` sums
//! `W(x, ·)` over the training set. Training degrees are computed once in
//! [`bind`] and reused for every query.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::graph::{self, sq_dist, NeighborGraph};
use crate::matio::format_real;

/// Neighborhood used to truncate the heat kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NeighborRule {
    /// Neighbors within Euclidean distance `tau`.
    Ball { tau: f64 },
    /// Union-symmetrized k-NN graph for training points; the `k` nearest
    /// training points (directed) for a new query.
    Knn { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Gaussian { sigma: f64 },
    NormalizedHeat { temperature: f64, rule: NeighborRule },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn check_dims(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "points have dimensions {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

pub fn eval_gaussian(x: ArrayView1<f64>, x2: ArrayView1<f64>, sigma: f64) -> Result<f64> {
    check_dims(x, x2)?;
    positive("sigma", sigma)?;
    Ok((-sq_dist(x, x2) / (sigma * sigma)).exp())
}

#[inline]
fn heat_from_sq(d2: f64, t: f64, tau: f64) -> f64 {
    if d2 <= tau * tau {
        (-d2 / t).exp()
    } else {
        0.0
    }
}

/// Truncated heat weight: `exp(-dist²/t)` when `dist <= tau`, else 0.
pub fn heat_weight(x: ArrayView1<f64>, x2: ArrayView1<f64>, t: f64, tau: f64) -> Result<f64> {
    check_dims(x, x2)?;
    positive("temperature", t)?;
    positive("tau", tau)?;
    Ok(heat_from_sq(sq_dist(x, x2), t, tau))
}

impl KernelSpec {
    /// True for kernels normalized by training-set degrees.
    pub fn needs_training_degrees(&self) -> bool {
        matches!(self, KernelSpec::NormalizedHeat { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { sigma } => positive("sigma", sigma),
            KernelSpec::NormalizedHeat { temperature, rule } => {
                positive("temperature", temperature)?;
                match rule {
                    NeighborRule::Ball { tau } => positive("tau", tau),
                    NeighborRule::Knn { k: 0 } => {
                        Err(Error::InvalidParameter("knn must be at least 1".into()))
                    }
                    NeighborRule::Knn { .. } => Ok(()),
                }
            }
        }
    }

    /// `key=value` lines describing the kernel, one parameter per line.
    pub fn to_lines(&self) -> Vec<String> {
        match *self {
            KernelSpec::Gaussian { sigma } => {
                vec!["variant=gaussian".into(), format!("sigma={}", format_real(sigma))]
            }
            KernelSpec::NormalizedHeat { temperature, rule } => {
                let mut v = vec![
                    "variant=normalized_heat".to_string(),
                    format!("temperature={}", format_real(temperature)),
                ];
                match rule {
                    NeighborRule::Ball { tau } => {
                        v.push("rule=ball".into());
                        v.push(format!("tau={}", format_real(tau)));
                    }
                    NeighborRule::Knn { k } => {
                        v.push("rule=knn".into());
                        v.push(format!("k={k}"));
                    }
                }
                v
            }
        }
    }

    /// Parses the output of [`KernelSpec::to_lines`]. `first_line` numbers
    /// the first entry for error messages.
    pub fn from_lines<'a>(lines: impl IntoIterator<Item = &'a str>, first_line: usize) -> Result<Self> {
        let mut kv = Vec::new();
        for (off, raw) in lines.into_iter().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::format(first_line + off, format!("expected key=value, got {line:?}"))
            })?;
            kv.push((first_line + off, k.trim().to_string(), v.trim().to_string()));
        }
        let get = |key: &str| -> Result<(usize, String)> {
            kv.iter()
                .find(|(_, k, _)| k == key)
                .map(|(l, _, v)| (*l, v.clone()))
                .ok_or_else(|| Error::format(first_line, format!("kernel block lacks {key:?}")))
        };
        let real = |key: &str| -> Result<f64> {
            let (l, v) = get(key)?;
            v.parse::<f64>()
                .map_err(|_| Error::format(l, format!("{key}: cannot parse {v:?}")))
        };
        let spec = match get("variant")?.1.as_str() {
            "gaussian" => KernelSpec::Gaussian {
                sigma: real("sigma")?,
            },
            "normalized_heat" => {
                let temperature = real("temperature")?;
                let (l, rule) = get("rule")?;
                let rule = match rule.as_str() {
                    "ball" => NeighborRule::Ball { tau: real("tau")? },
                    "knn" => {
                        let (l, v) = get("k")?;
                        let k = v
                            .parse::<usize>()
                            .map_err(|_| Error::format(l, format!("k: cannot parse {v:?}")))?;
                        NeighborRule::Knn { k }
                    }
                    other => return Err(Error::format(l, format!("unknown neighbor rule {other:?}"))),
                };
                KernelSpec::NormalizedHeat { temperature, rule }
            }
            other => {
                return Err(Error::format(
                    first_line,
                    format!("unknown kernel variant {other:?}"),
                ))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Gaussian { sigma } => write!(f, "gaussian(sigma={sigma})"),
            KernelSpec::NormalizedHeat {
                temperature,
                rule: NeighborRule::Ball { tau },
            } => {
                write!(f, "normalized_heat(t={temperature}, tau={tau})")
            }
            KernelSpec::NormalizedHeat {
                temperature,
                rule: NeighborRule::Knn { k },
            } => {
                write!(f, "normalized_heat(t={temperature}, knn={k})")
            }
        }
    }
}

/// A kernel tied to a training set.
#[derive(Debug, Clone)]
pub struct BoundKernel {
    spec: KernelSpec,
    points: Array2<f64>,
    /// Row sums of the truncated heat matrix (normalized heat only).
    degrees: Option<Array1<f64>>,
    /// Symmetrized training graph (k-NN rule only).
    graph: Option<NeighborGraph>,
}

pub fn bind(spec: KernelSpec, training: &ArrayView2<f64>) -> Result<BoundKernel> {
    spec.validate()?;
    let n = training.nrows();
    if n == 0 || training.ncols() == 0 {
        return Err(Error::Empty);
    }
    let points = training.to_owned();
    match spec {
        KernelSpec::Gaussian { .. } => Ok(BoundKernel {
            spec,
            points,
            degrees: None,
            graph: None,
        }),
        KernelSpec::NormalizedHeat { temperature, rule } => {
            let (w, graph) = heat_matrix(&points.view(), temperature, rule)?;
            let degrees: Array1<f64> = w.rows().into_iter().map(|r| r.sum()).collect();
            if let Some(index) = degrees.iter().position(|&d| !(d > 0.0)) {
                return Err(Error::IsolatedPoint { index });
            }
            Ok(BoundKernel {
                spec,
                points,
                degrees: Some(degrees),
                graph,
            })
        }
    }
}

fn heat_matrix(
    points: &ArrayView2<f64>,
    t: f64,
    rule: NeighborRule,
) -> Result<(Array2<f64>, Option<NeighborGraph>)> {
    match rule {
        NeighborRule::Ball { tau } => {
            let g = graph::ball_graph(points, tau)?;
            Ok((graph::weight_matrix(points, &g, t)?, None))
        }
        NeighborRule::Knn { k } => {
            let g = graph::knn_graph(points, k)?;
            let w = graph::weight_matrix(points, &g, t)?;
            Ok((w, Some(g)))
        }
    }
}

impl BoundKernel {
    /// Rebuilds a bound kernel from stored parts without recomputing degrees.
    pub fn from_parts(spec: KernelSpec, points: Array2<f64>, degrees: Option<Array1<f64>>) -> Result<Self> {
        spec.validate()?;
        match (&spec, &degrees) {
            (KernelSpec::Gaussian { .. }, _) => Ok(BoundKernel {
                spec,
                points,
                degrees: None,
                graph: None,
            }),
            (KernelSpec::NormalizedHeat { rule, .. }, Some(d)) => {
                if d.len() != points.nrows() {
                    return Err(Error::Shape(format!(
                        "{} degrees for {} training points",
                        d.len(),
                        points.nrows()
                    )));
                }
                if let Some(index) = d.iter().position(|&v| !(v > 0.0)) {
                    return Err(Error::IsolatedPoint { index });
                }
                let graph = match rule {
                    NeighborRule::Knn { k } => Some(graph::knn_graph(&points.view(), *k)?),
                    NeighborRule::Ball { .. } => None,
                };
                Ok(BoundKernel {
                    spec,
                    points,
                    degrees,
                    graph,
                })
            }
            (KernelSpec::NormalizedHeat { .. }, None) => Err(Error::InvalidParameter(
                "normalized heat kernel needs training degrees".into(),
            )),
        }
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn degrees(&self) -> Option<&Array1<f64>> {
        self.degrees.as_ref()
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Whether evaluating the kernel at a query needs the whole training set
    /// (the normalized kernel's query degree sums over every training point).
    pub fn needs_full_training_set(&self) -> bool {
        self.degrees.is_some()
    }

    pub fn gram(&self) -> Array2<f64> {
        let n = self.len();
        let mut k = Array2::zeros((n, n));
        match self.spec {
            KernelSpec::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                for i in 0..n {
                    k[[i, i]] = 1.0;
                    for j in (i + 1)..n {
                        let v = (-sq_dist(self.points.row(i), self.points.row(j)) / s2).exp();
                        k[[i, j]] = v;
                        k[[j, i]] = v;
                    }
                }
            }
            KernelSpec::NormalizedHeat { .. } => {
                let deg = self.degrees.as_ref().expect("heat kernel has degrees");
                for i in 0..n {
                    let w = self.training_heat_row(i);
                    for j in i..n {
                        if w[j] != 0.0 {
                            let v = w[j] / (deg[i] * deg[j]).sqrt();
                            k[[i, j]] = v;
                            k[[j, i]] = v;
                        }
                    }
                }
            }
        }
        k
    }

    /// Heat weights between training point `i` and every training point,
    /// identical to row `i` of the weight matrix used for the degrees.
    fn training_heat_row(&self, i: usize) -> Array1<f64> {
        let n = self.len();
        let KernelSpec::NormalizedHeat { temperature, rule } = self.spec else {
            unreachable!("heat row requested for a Gaussian kernel")
        };
        let mut w = Array1::zeros(n);
        match rule {
            NeighborRule::Ball { tau } => {
                for j in 0..n {
                    w[j] = if j == i {
                        1.0
                    } else {
                        heat_from_sq(sq_dist(self.points.row(i), self.points.row(j)), temperature, tau)
                    };
                }
            }
            NeighborRule::Knn { .. } => {
                let g = self.graph.as_ref().expect("knn kernel has a graph");
                w[i] = 1.0;
                for &j in g.neighbors(i) {
                    w[j] = (-sq_dist(self.points.row(i), self.points.row(j)) / temperature).exp();
                }
            }
        }
        w
    }

    /// Truncated heat weights from a query to every training point.
    fn query_heat_row(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let n = self.len();
        let KernelSpec::NormalizedHeat { temperature, rule } = self.spec else {
            unreachable!("heat row requested for a Gaussian kernel")
        };
        let d2: Vec<f64> = self.points.rows().into_iter().map(|r| sq_dist(x, r)).collect();
        // an exact training point keeps its training-graph row
        if let Some(j) = d2.iter().position(|&d| d == 0.0) {
            return self.training_heat_row(j);
        }
        let mut w = Array1::zeros(n);
        match rule {
            NeighborRule::Ball { tau } => {
                for j in 0..n {
                    w[j] = heat_from_sq(d2[j], temperature, tau);
                }
            }
            NeighborRule::Knn { k } => {
                let mut order: Vec<usize> = (0..n).collect();
                let by = |a: &usize, b: &usize| d2[*a].total_cmp(&d2[*b]).then(a.cmp(b));
                let k = k.min(n);
                if k < n {
                    order.select_nth_unstable_by(k, by);
                }
                for &j in &order[..k] {
                    w[j] = (-d2[j] / temperature).exp();
                }
            }
        }
        w
    }

    /// `K(x, x_i)` for every training point `x_i`.
    pub fn cross_row(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.cross_row_at(x, &all)
    }

    /// `K(x, x_i)` for the training points listed in `indices`, in that order.
    pub fn cross_row_at(&self, x: ArrayView1<f64>, indices: &[usize]) -> Result<Array1<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "query has dimension {}, training points have {}",
                x.len(),
                self.dim()
            )));
        }
        match self.spec {
            KernelSpec::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                Ok(indices
                    .iter()
                    .map(|&i| (-sq_dist(x, self.points.row(i)) / s2).exp())
                    .collect())
            }
            KernelSpec::NormalizedHeat { .. } => {
                let deg = self.degrees.as_ref().expect("heat kernel has degrees");
                let w = self.query_heat_row(x);
                let dx = w.sum();
                if !(dx > 0.0) {
                    return Err(Error::IsolatedQuery);
                }
                Ok(indices
                    .iter()
                    .map(|&i| {
                        if w[i] == 0.0 {
                            0.0
                        } else {
                            w[i] / (dx * deg[i]).sqrt()
                        }
                    })
                    .collect())
            }
        }
    }

    /// Kernel restricted to the given training subset for evaluation.
    ///
    /// Returns the kernel to evaluate with and the indices into it that
    /// correspond to `indices`. A Gaussian kernel is rebound to the subset
    /// alone; the normalized heat kernel keeps every training point because
    /// query degrees sum over all of them.
    pub fn restrict(&self, indices: &[usize]) -> (BoundKernel, Vec<usize>) {
        if self.needs_full_training_set() {
            (self.clone(), indices.to_vec())
        } else {
            let pts = self.points.select(ndarray::Axis(0), indices);
            (
                BoundKernel {
                    spec: self.spec,
                    points: pts,
                    degrees: None,
                    graph: None,
                },
                (0..indices.len()).collect(),
            )
        }
    }
}
