//! Text model files.
//!
//! A model file is a sequence of sections. Each section starts with a
//! `[name]` header line; its body is either `key=value` lines or a CSV block
//! in the format of [`crate::matio`]. The first section is always `[model]`
//! with a `type=` line naming one of `krr`, `sparse` or `nystrom`.
//!
//! Normalized heat kernels carry a `[degrees]` block (one value per training
//! point) so that a loaded model evaluates with exactly the degrees it was
//! fitted with.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};

use crate::embed::SpectralEmbedding;
use crate::error::{Error, Result};
use crate::kernels::{BoundKernel, KernelSpec};
use crate::krr::KrrModel;
use crate::matio::{format_matrix, format_real, parse_matrix_lines, write_atomic};
use crate::sparse::{SolveOptions, SparseModel};

#[derive(Debug, Clone)]
pub enum Model {
    Krr(KrrModel),
    Sparse(SparseModel),
    Nystrom(SpectralEmbedding),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Krr(_) => "krr",
            Model::Sparse(_) => "sparse",
            Model::Nystrom(_) => "nystrom",
        }
    }

    pub fn to_text(&self) -> String {
        match self {
            Model::Krr(m) => krr_to_text(m),
            Model::Sparse(m) => sparse_to_text(m),
            Model::Nystrom(m) => nystrom_to_text(m),
        }
    }

    pub fn from_text(text: &str) -> Result<Model> {
        let doc = Document::parse(text)?;
        let header = doc.section("model")?;
        let kind = header.value("type")?;
        match kind.1.as_str() {
            "krr" => krr_from_doc(&doc).map(Model::Krr),
            "sparse" => sparse_from_doc(&doc).map(Model::Sparse),
            "nystrom" => nystrom_from_doc(&doc).map(Model::Nystrom),
            other => Err(Error::format(kind.0, format!("unknown model type {other:?}"))),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, &self.to_text())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Model::from_text(&text)
    }
}

struct Writer(String);

impl Writer {
    fn new(kind: &str) -> Self {
        Writer(format!("[model]\ntype={kind}\n"))
    }

    fn header(&mut self, name: &str) {
        self.0.push_str(&format!("[{name}]\n"));
    }

    fn kv(&mut self, key: &str, value: impl AsRef<str>) {
        self.0.push_str(key);
        self.0.push('=');
        self.0.push_str(value.as_ref());
        self.0.push('\n');
    }

    fn matrix(&mut self, name: &str, m: &Array2<f64>) {
        self.header(name);
        self.0.push_str(&format_matrix(m));
    }

    fn kernel(&mut self, kernel: &BoundKernel) {
        self.header("kernel");
        for line in kernel.spec().to_lines() {
            self.0.push_str(&line);
            self.0.push('\n');
        }
        if let Some(d) = kernel.degrees() {
            self.matrix("degrees", &column(d));
        }
    }
}

fn column(v: &Array1<f64>) -> Array2<f64> {
    v.clone().insert_axis(Axis(1))
}

fn krr_to_text(m: &KrrModel) -> String {
    let mut w = Writer::new("krr");
    w.kernel(&m.kernel);
    w.header("lambda");
    w.0.push_str(&format_real(m.lambda));
    w.0.push('\n');
    w.matrix("points", m.kernel.points());
    w.matrix("alpha", &m.alpha_hat);
    w.header("meta");
    w.kv("relative_residual", format_real(m.relative_residual));
    w.0
}

fn sparse_to_text(m: &SparseModel) -> String {
    let mut w = Writer::new("sparse");
    w.kernel(&m.kernel);
    w.header("meta");
    w.kv("epsilon", format_real(m.epsilon));
    w.kv("gamma_star", format_real(m.gamma_star));
    w.kv("achieved_msd", format_real(m.achieved_msd));
    w.kv("converged", m.converged.to_string());
    w.kv("input_dim", m.kernel.dim().to_string());
    w.kv("output_dim", m.dims().to_string());
    w.kv("fista_max_iter", m.options.fista_max_iter.to_string());
    w.kv("fista_tol", format_real(m.options.fista_tol));
    w.kv("gamma_tol", format_real(m.options.gamma_tol));
    w.kv("sv_threshold", format_real(m.options.sv_threshold));
    w.kv("slack", format_real(m.options.slack));
    w.header("support_indices");
    for i in &m.support {
        w.0.push_str(&format!("{i}\n"));
    }
    w.matrix("support_points", &m.support_points());
    w.matrix("alpha_tilde", &m.alpha_tilde);
    if m.kernel.needs_full_training_set() {
        w.matrix("training_points", m.kernel.points());
    }
    w.0
}

fn nystrom_to_text(m: &SpectralEmbedding) -> String {
    let mut w = Writer::new("nystrom");
    w.kernel(&m.kernel);
    w.header("meta");
    w.kv("skip_trivial", m.skip_trivial.to_string());
    w.matrix("points", m.kernel.points());
    w.matrix("eigenvalues", &m.eigenvalues.clone().insert_axis(Axis(0)));
    w.matrix("coordinates", &m.coordinates);
    w.0
}

/// One parsed section: header name, line number of its first body line, and
/// the body lines.
struct Section<'a> {
    name: String,
    header_line: usize,
    first_line: usize,
    lines: Vec<&'a str>,
}

impl<'a> Section<'a> {
    fn body_is_empty(&self) -> bool {
        self.lines.iter().all(|l| l.trim().is_empty())
    }

    /// Looks up `key=value`; returns the line number and the value.
    fn value(&self, key: &str) -> Result<(usize, String)> {
        for (off, raw) in self.lines.iter().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::format(self.first_line + off, format!("expected key=value, got {line:?}"))
            })?;
            if k.trim() == key {
                return Ok((self.first_line + off, v.trim().to_string()));
            }
        }
        Err(Error::format(
            self.header_line,
            format!("section [{}] lacks {key:?}", self.name),
        ))
    }

    fn real(&self, key: &str) -> Result<f64> {
        let (line, v) = self.value(key)?;
        v.parse()
            .map_err(|_| Error::format(line, format!("{key}: cannot parse {v:?} as a number")))
    }

    fn count(&self, key: &str) -> Result<usize> {
        let (line, v) = self.value(key)?;
        v.parse()
            .map_err(|_| Error::format(line, format!("{key}: cannot parse {v:?} as a count")))
    }

    fn flag(&self, key: &str) -> Result<bool> {
        let (line, v) = self.value(key)?;
        v.parse()
            .map_err(|_| Error::format(line, format!("{key}: expected true or false, got {v:?}")))
    }

    fn matrix(&self) -> Result<Array2<f64>> {
        parse_matrix_lines(self.lines.iter().copied(), self.first_line).map_err(|e| match e {
            Error::Empty => Error::format(self.header_line, format!("section [{}] is empty", self.name)),
            e => e,
        })
    }

    /// Like [`Section::matrix`], but an empty body yields a 0×`cols` matrix.
    fn matrix_or_empty(&self, cols: usize) -> Result<Array2<f64>> {
        if self.body_is_empty() {
            return Ok(Array2::zeros((0, cols)));
        }
        let m = self.matrix()?;
        if m.ncols() != cols {
            return Err(Error::format(
                self.first_line,
                format!(
                    "section [{}] has {} columns, expected {cols}",
                    self.name,
                    m.ncols()
                ),
            ));
        }
        Ok(m)
    }
}

struct Document<'a> {
    sections: Vec<Section<'a>>,
}

impl<'a> Document<'a> {
    fn parse(text: &'a str) -> Result<Self> {
        let mut sections: Vec<Section<'a>> = Vec::new();
        for (idx, raw) in text.split('\n').enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            let trimmed = line.trim();
            if trimmed.starts_with('[') {
                let name = trimmed
                    .strip_prefix('[')
                    .and_then(|s| s.strip_suffix(']'))
                    .ok_or_else(|| Error::format(line_no, format!("malformed section header {trimmed:?}")))?;
                if sections.iter().any(|s| s.name == name) {
                    return Err(Error::format(line_no, format!("duplicate section [{name}]")));
                }
                sections.push(Section {
                    name: name.to_string(),
                    header_line: line_no,
                    first_line: line_no + 1,
                    lines: Vec::new(),
                });
            } else if let Some(s) = sections.last_mut() {
                s.lines.push(line);
            } else if !trimmed.is_empty() {
                return Err(Error::format(line_no, "content before the first section header"));
            }
        }
        if sections.first().map(|s| s.name.as_str()) != Some("model") {
            return Err(Error::format(1, "model file must start with a [model] section"));
        }
        Ok(Document { sections })
    }

    fn section(&self, name: &str) -> Result<&Section<'a>> {
        self.sections
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::format(1, format!("missing section [{name}]")))
    }

    fn find(&self, name: &str) -> Option<&Section<'a>> {
        self.sections.iter().find(|s| s.name == name)
    }

    fn kernel_spec(&self) -> Result<KernelSpec> {
        let s = self.section("kernel")?;
        KernelSpec::from_lines(s.lines.iter().copied(), s.first_line)
    }

    fn degrees(&self, n: usize) -> Result<Option<Array1<f64>>> {
        let Some(s) = self.find("degrees") else {
            return Ok(None);
        };
        let m = s.matrix()?;
        if m.ncols() != 1 || m.nrows() != n {
            return Err(Error::format(
                s.first_line,
                format!("degrees block is {}×{}, expected {n}×1", m.nrows(), m.ncols()),
            ));
        }
        Ok(Some(m.column(0).to_owned()))
    }

    fn kernel(&self, points: Array2<f64>) -> Result<BoundKernel> {
        let spec = self.kernel_spec()?;
        let degrees = self.degrees(points.nrows())?;
        BoundKernel::from_parts(spec, points, degrees)
    }
}

fn check_rows(s: &Section, m: &Array2<f64>, expected: usize, what: &str) -> Result<()> {
    if m.nrows() != expected {
        return Err(Error::format(
            s.header_line,
            format!(
                "section [{}] has {} rows, expected {expected} ({what})",
                s.name,
                m.nrows()
            ),
        ));
    }
    Ok(())
}

fn krr_from_doc(doc: &Document) -> Result<KrrModel> {
    let points = doc.section("points")?.matrix()?;
    let n = points.nrows();
    let kernel = doc.kernel(points)?;
    let lambda_sec = doc.section("lambda")?;
    let lambda = lambda_sec.matrix()?;
    if lambda.dim() != (1, 1) || lambda[[0, 0]] < 0.0 {
        return Err(Error::format(
            lambda_sec.first_line,
            "lambda must be a single nonnegative number",
        ));
    }
    let alpha_sec = doc.section("alpha")?;
    let alpha_hat = alpha_sec.matrix()?;
    check_rows(alpha_sec, &alpha_hat, n, "one per training point")?;
    let relative_residual = doc.section("meta")?.real("relative_residual")?;
    Ok(KrrModel {
        kernel,
        alpha_hat,
        lambda: lambda[[0, 0]],
        relative_residual,
    })
}

fn sparse_from_doc(doc: &Document) -> Result<SparseModel> {
    let meta = doc.section("meta")?;
    let input_dim = meta.count("input_dim")?;
    let output_dim = meta.count("output_dim")?;
    let options = SolveOptions {
        fista_max_iter: meta.count("fista_max_iter")?,
        fista_tol: meta.real("fista_tol")?,
        gamma_tol: meta.real("gamma_tol")?,
        sv_threshold: meta.real("sv_threshold")?,
        slack: meta.real("slack")?,
    };
    options.validate()?;

    let idx_sec = doc.section("support_indices")?;
    let mut support = Vec::new();
    for (off, raw) in idx_sec.lines.iter().enumerate() {
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        support.push(t.parse::<usize>().map_err(|_| {
            Error::format(
                idx_sec.first_line + off,
                format!("cannot parse {t:?} as an index"),
            )
        })?);
    }
    let s = support.len();
    let pts_sec = doc.section("support_points")?;
    let support_points = pts_sec.matrix_or_empty(input_dim)?;
    check_rows(pts_sec, &support_points, s, "one per support index")?;
    let alpha_sec = doc.section("alpha_tilde")?;
    let alpha_tilde = alpha_sec.matrix_or_empty(output_dim)?;
    check_rows(alpha_sec, &alpha_tilde, s, "one per support index")?;

    let spec = doc.kernel_spec()?;
    let (kernel, eval_index) = match doc.find("training_points") {
        Some(tp) => {
            let training = tp.matrix()?;
            if training.ncols() != input_dim {
                return Err(Error::format(
                    tp.first_line,
                    "training points disagree with input_dim",
                ));
            }
            if let Some(&bad) = support.iter().find(|&&i| i >= training.nrows()) {
                return Err(Error::format(
                    idx_sec.first_line,
                    format!(
                        "support index {bad} out of range for {} training points",
                        training.nrows()
                    ),
                ));
            }
            let stored = training.select(Axis(0), &support);
            if stored != support_points {
                return Err(Error::format(
                    pts_sec.header_line,
                    "support points disagree with the training points they index",
                ));
            }
            (doc.kernel(training)?, support.clone())
        }
        None if spec.needs_training_degrees() => {
            return Err(Error::format(
                1,
                "normalized heat sparse model lacks [training_points]",
            ));
        }
        None => (
            BoundKernel::from_parts(spec, support_points, None)?,
            (0..s).collect(),
        ),
    };
    Ok(SparseModel {
        kernel,
        eval_index,
        support,
        alpha_tilde,
        epsilon: meta.real("epsilon")?,
        gamma_star: meta.real("gamma_star")?,
        achieved_msd: meta.real("achieved_msd")?,
        converged: meta.flag("converged")?,
        options,
    })
}

fn nystrom_from_doc(doc: &Document) -> Result<SpectralEmbedding> {
    let points = doc.section("points")?.matrix()?;
    let n = points.nrows();
    let kernel = doc.kernel(points)?;
    let ev_sec = doc.section("eigenvalues")?;
    let ev = ev_sec.matrix()?;
    if ev.nrows() != 1 {
        return Err(Error::format(
            ev_sec.first_line,
            "eigenvalues must be a single row",
        ));
    }
    let eigenvalues = ev.row(0).to_owned();
    let coord_sec = doc.section("coordinates")?;
    let coordinates = coord_sec.matrix()?;
    check_rows(coord_sec, &coordinates, n, "one per training point")?;
    if coordinates.ncols() != eigenvalues.len() {
        return Err(Error::format(
            coord_sec.first_line,
            format!(
                "{} coordinate columns for {} eigenvalues",
                coordinates.ncols(),
                eigenvalues.len()
            ),
        ));
    }
    Ok(SpectralEmbedding {
        coordinates,
        eigenvalues,
        kernel,
        skip_trivial: doc.section("meta")?.flag("skip_trivial")?,
    })
}
