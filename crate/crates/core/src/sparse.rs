//! Row-sparse approximation of a kernel ridge regression fit.
//!
//! Given the dense coefficients `α̂` and Gram matrix `K`, we look for the
//! coefficient matrix with the smallest sum of row norms subject to
//!
//! ```text
//! ||K α̂ − K α||_F² <= n ε²
//! ```
//!
//! i.e. a mean squared gap of at most `ε²` between the two predictors on the
//! training points. The constraint is handled through its Lagrangian: for a
//! penalty weight `γ` the group lasso
//!
//! ```text
//! g(γ) = min_α ||K α̂ − K α||_F² + γ Σ_i ||α_i||_2
//! ```
//!
//! is solved with FISTA, and `γ` is bisected for the largest value whose
//! solution still meets the constraint. The residual of the group-lasso
//! solution is non-decreasing in `γ`, which is what makes bisection valid.
//! Rows of the result that are nonzero mark the support vectors.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::kernels::BoundKernel;
use crate::krr::KrrModel;
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub fista_max_iter: usize,
    /// Stop FISTA once the relative objective change falls to this value.
    pub fista_tol: f64,
    /// Bisection stops when the γ bracket is this narrow relative to its top.
    pub gamma_tol: f64,
    /// Rows whose norm is at most this fraction of the largest row norm are
    /// not support vectors.
    pub sv_threshold: f64,
    /// Relative slack allowed on the mean squared discrepancy bound.
    pub slack: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            fista_max_iter: 50_000,
            fista_tol: 1e-10,
            gamma_tol: 1e-4,
            sv_threshold: 1e-8,
            slack: 1e-3,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("fista tolerance", self.fista_tol),
            ("gamma tolerance", self.gamma_tol),
            ("support threshold", self.sv_threshold),
            ("slack", self.slack),
        ];
        for (name, v) in reals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.fista_max_iter == 0 {
            return Err(Error::InvalidParameter(
                "fista iteration cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn row_norm(r: ArrayView1<f64>) -> f64 {
    r.dot(&r).sqrt()
}

/// Block soft-thresholding: each row is shrunk toward zero by `threshold` in
/// Euclidean norm, and rows with norm at most `threshold` become zero.
pub fn group_prox(a: &ArrayView2<f64>, threshold: f64) -> Array2<f64> {
    let mut out = a.to_owned();
    for mut row in out.rows_mut() {
        let norm = row_norm(row.view());
        let scale = if norm > threshold {
            1.0 - threshold / norm
        } else {
            0.0
        };
        row.mapv_inplace(|v| v * scale);
    }
    out
}

pub fn group_norm(a: &ArrayView2<f64>) -> f64 {
    a.rows().into_iter().map(row_norm).sum()
}

#[derive(Debug, Clone)]
pub struct FistaResult {
    pub alpha: Array2<f64>,
    /// `||K α̂ − K α||_F² + γ Σ ||α_i||` at `alpha`.
    pub objective: f64,
    /// `||K α̂ − K α||_F²` at `alpha`.
    pub residual: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit first; the iterate is still usable.
    pub converged: bool,
}

/// Precomputed pieces of the group-lasso problem for a fixed `K` and `α̂`.
struct GroupLasso<'a> {
    k: ArrayView2<'a, f64>,
    /// K²
    m: Array2<f64>,
    /// K α̂
    k_alpha_hat: Array2<f64>,
    /// K² α̂
    m_alpha_hat: Array2<f64>,
    /// ||K α̂||_F²
    k_alpha_hat_sq: f64,
    /// Lipschitz constant of the smooth part's gradient, 2 ||K||².
    lipschitz: f64,
}

/// `mat · x`, skipping zero rows of `x`. `mat` must be symmetric so that its
/// rows can stand in for its columns.
fn product_skipping_zero_rows(mat: &ArrayView2<f64>, x: &Array2<f64>) -> Array2<f64> {
    let n = mat.nrows();
    let p = x.ncols();
    let active: Vec<usize> = (0..x.nrows())
        .filter(|&i| x.row(i).iter().any(|&v| v != 0.0))
        .collect();
    if 2 * active.len() > n {
        return mat.dot(x);
    }
    // accumulate column by column so the inner loop is a contiguous axpy
    let mut cols = vec![0.0; p * n];
    for &i in &active {
        let row = mat.row(i);
        let row = row.as_slice().expect("Gram rows are contiguous");
        for c in 0..p {
            let xic = x[[i, c]];
            if xic == 0.0 {
                continue;
            }
            let out = &mut cols[c * n..(c + 1) * n];
            for (o, &m) in out.iter_mut().zip(row) {
                *o += m * xic;
            }
        }
    }
    Array2::from_shape_fn((n, p), |(r, c)| cols[c * n + r])
}

fn sq_frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

impl<'a> GroupLasso<'a> {
    fn new(k: &'a ArrayView2<f64>, alpha_hat: &ArrayView2<f64>) -> Result<Self> {
        let n = linalg::check_symmetric(k)?;
        if alpha_hat.nrows() != n {
            return Err(Error::Shape(format!(
                "coefficients have {} rows, Gram matrix is {n}x{n}",
                alpha_hat.nrows()
            )));
        }
        let mut m = k.dot(k);
        // K² of a symmetric K is symmetric; remove rounding asymmetry
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (m[[i, j]] + m[[j, i]]);
                m[[i, j]] = v;
                m[[j, i]] = v;
            }
        }
        let k_alpha_hat = k.dot(alpha_hat);
        let m_alpha_hat = k.dot(&k_alpha_hat);
        let sigma = linalg::spectral_norm(k, 1e-12)?;
        Ok(GroupLasso {
            k: k.view(),
            m,
            k_alpha_hat_sq: sq_frobenius(&k_alpha_hat),
            k_alpha_hat,
            m_alpha_hat,
            lipschitz: 2.0 * sigma * sigma,
        })
    }

    /// Smallest γ at which α = 0 is optimal: 2 max_i ||(K² α̂)_i||.
    fn gamma_max(&self) -> f64 {
        2.0 * self
            .m_alpha_hat
            .rows()
            .into_iter()
            .map(row_norm)
            .fold(0.0, f64::max)
    }

    fn residual(&self, alpha: &Array2<f64>) -> f64 {
        let ka = product_skipping_zero_rows(&self.k, alpha);
        sq_frobenius(&(&self.k_alpha_hat - &ka))
    }

    /// Residual from an already computed `K² α`, as
    /// `||K α̂||² − 2 <α, K² α̂> + <α, K² α>`. Cheaper than [`Self::residual`]
    /// but loses a few digits to cancellation.
    fn residual_from_product(&self, alpha: &Array2<f64>, m_alpha: &Array2<f64>) -> f64 {
        let mut cross = 0.0;
        let mut quad = 0.0;
        Zip::from(alpha)
            .and(m_alpha)
            .and(&self.m_alpha_hat)
            .for_each(|&a, &ma, &mah| {
                cross += a * mah;
                quad += a * ma;
            });
        (self.k_alpha_hat_sq - 2.0 * cross + quad).max(0.0)
    }

    fn solve(&self, gamma: f64, start: Array2<f64>, opts: &SolveOptions) -> FistaResult {
        let n = self.m.nrows();
        let p = self.k_alpha_hat.ncols();
        if self.lipschitz == 0.0 {
            // K = 0: the smooth term is constant and α = 0 minimizes
            let residual = sq_frobenius(&self.k_alpha_hat);
            return FistaResult {
                alpha: Array2::zeros((n, p)),
                objective: residual,
                residual,
                iterations: 0,
                converged: true,
            };
        }
        let step = 1.0 / self.lipschitz;
        let thresh = gamma * step;
        let mv = self.m.view();

        let mut x = start;
        let mut mx = product_skipping_zero_rows(&mv, &x);
        let mut objective = self.residual(&x) + gamma * group_norm(&x.view());
        let mut y = x.clone();
        let mut my = mx.clone();
        let mut t = 1.0f64;

        for it in 1..=opts.fista_max_iter {
            // gradient of ||K(α̂ − y)||² is 2 (K² y − K² α̂)
            let mut z = y;
            Zip::from(&mut z)
                .and(&my)
                .and(&self.m_alpha_hat)
                .for_each(|z, &a, &b| *z -= 2.0 * step * (a - b));
            let x_new = group_prox(&z.view(), thresh);
            let mx_new = product_skipping_zero_rows(&mv, &x_new);
            let res_new = self.residual_from_product(&x_new, &mx_new);
            let obj_new = res_new + gamma * group_norm(&x_new.view());

            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_new;
            y = &x_new + &((&x_new - &x) * beta);
            my = &mx_new + &((&mx_new - &mx) * beta);

            let change = (obj_new - objective).abs();
            x = x_new;
            mx = mx_new;
            objective = obj_new;
            t = t_new;
            if change <= opts.fista_tol * objective.abs() {
                return self.finish(gamma, x, it, true);
            }
        }
        self.finish(gamma, x, opts.fista_max_iter, false)
    }

    /// Packages an iterate with its residual and objective evaluated directly.
    fn finish(&self, gamma: f64, alpha: Array2<f64>, iterations: usize, converged: bool) -> FistaResult {
        let residual = self.residual(&alpha);
        FistaResult {
            objective: residual + gamma * group_norm(&alpha.view()),
            alpha,
            residual,
            iterations,
            converged,
        }
    }
}

/// Minimizes `||K α̂ − K α||_F² + γ Σ_i ||α_i||_2` by FISTA started at zero.
///
/// Step size is `1/L` with `L = 2 ||K||₂²`. A result that hit the iteration
/// cap is returned with `converged == false`.
pub fn fista_group_lasso(
    k: &ArrayView2<f64>,
    alpha_hat: &ArrayView2<f64>,
    gamma: f64,
    opts: &SolveOptions,
) -> Result<FistaResult> {
    opts.validate()?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be finite and >= 0, got {gamma}"
        )));
    }
    let problem = GroupLasso::new(k, alpha_hat)?;
    let start = Array2::zeros(alpha_hat.raw_dim());
    Ok(problem.solve(gamma, start, opts))
}

/// Outcome of [`sparsify`], before support extraction.
#[derive(Debug, Clone)]
pub struct SparseSolution {
    /// Full n×p coefficient matrix with many zero rows.
    pub alpha_tilde: Array2<f64>,
    /// Final penalty weight (reciprocal of the Lagrange multiplier); zero when
    /// only the dense solution meets the bound.
    pub gamma_star: f64,
    /// `||K α̂ − K α̃||_F² / n`.
    pub achieved_msd: f64,
    /// Dual objective `(g(γ*) − nε²)/γ*`, when `γ* > 0`.
    pub dual_value: Option<f64>,
    /// Whether the FISTA solve that produced `alpha_tilde` converged.
    pub converged: bool,
    pub fista_solves: usize,
    pub fista_iterations: usize,
}

/// Finds the sparsest-in-group-norm coefficients whose training predictions
/// stay within mean squared distance `epsilon²` of `K α̂`.
pub fn sparsify(
    k: &ArrayView2<f64>,
    alpha_hat: &ArrayView2<f64>,
    epsilon: f64,
    opts: &SolveOptions,
) -> Result<SparseSolution> {
    opts.validate()?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let problem = GroupLasso::new(k, alpha_hat)?;
    let n = alpha_hat.nrows();
    let p = alpha_hat.ncols();
    let budget = n as f64 * epsilon * epsilon;

    let total = sq_frobenius(&problem.k_alpha_hat);
    let gamma_max = problem.gamma_max();
    if total <= budget {
        return Ok(SparseSolution {
            alpha_tilde: Array2::zeros((n, p)),
            gamma_star: gamma_max,
            achieved_msd: total / n as f64,
            dual_value: if gamma_max > 0.0 {
                Some((total - budget) / gamma_max)
            } else {
                None
            },
            converged: true,
            fista_solves: 0,
            fista_iterations: 0,
        });
    }

    // lo is always feasible (γ = 0 is solved exactly by α̂), hi never is
    let mut lo = 0.0;
    let mut hi = gamma_max;
    let mut best: Option<FistaResult> = None;
    let mut warm = Array2::zeros((n, p));
    let mut solves = 0;
    let mut iterations = 0;
    // below this the penalty is numerically irrelevant next to the data term
    let floor = gamma_max * 1e-10;
    while hi - lo > opts.gamma_tol * hi && hi > floor {
        let mid = 0.5 * (lo + hi);
        let res = problem.solve(mid, warm.clone(), opts);
        solves += 1;
        iterations += res.iterations;
        log::debug!(
            "gamma {mid:.6e}: residual {:.6e} (budget {budget:.6e}), {} iterations",
            res.residual,
            res.iterations
        );
        warm = res.alpha.clone();
        if res.residual <= budget {
            lo = mid;
            best = Some(res);
        } else {
            hi = mid;
        }
    }

    Ok(match best {
        Some(res) => SparseSolution {
            achieved_msd: res.residual / n as f64,
            dual_value: Some((res.objective - budget) / lo),
            alpha_tilde: res.alpha,
            gamma_star: lo,
            converged: res.converged,
            fista_solves: solves,
            fista_iterations: iterations,
        },
        None => SparseSolution {
            achieved_msd: problem.residual(&alpha_hat.to_owned()) / n as f64,
            alpha_tilde: alpha_hat.to_owned(),
            gamma_star: 0.0,
            dual_value: None,
            converged: true,
            fista_solves: solves,
            fista_iterations: iterations,
        },
    })
}

/// Sparse interpolator: kernel expansion over the support vectors only.
#[derive(Debug, Clone)]
pub struct SparseModel {
    /// Kernel used for evaluation; see [`BoundKernel::restrict`].
    pub kernel: BoundKernel,
    /// Rows of `kernel`'s training set paired with the rows of `alpha_tilde`.
    pub eval_index: Vec<usize>,
    /// Support vector indices into the original training set.
    pub support: Vec<usize>,
    /// s×p nonzero coefficient rows.
    pub alpha_tilde: Array2<f64>,
    pub epsilon: f64,
    pub gamma_star: f64,
    pub achieved_msd: f64,
    pub converged: bool,
    pub options: SolveOptions,
}

impl SparseModel {
    pub fn support_count(&self) -> usize {
        self.support.len()
    }

    pub fn dims(&self) -> usize {
        self.alpha_tilde.ncols()
    }

    /// Support vector coordinates, in `support` order.
    pub fn support_points(&self) -> Array2<f64> {
        self.kernel.points().select(ndarray::Axis(0), &self.eval_index)
    }

    /// Fits the sparse interpolator for a kernel ridge regression model.
    pub fn from_krr(krr: &KrrModel, epsilon: f64, opts: &SolveOptions) -> Result<Self> {
        let k = krr.kernel.gram();
        let sol = sparsify(&k.view(), &krr.alpha_hat.view(), epsilon, opts)?;
        let mut model = extract_support(&sol.alpha_tilde.view(), opts.sv_threshold, &krr.kernel)?;
        model.epsilon = epsilon;
        model.gamma_star = sol.gamma_star;
        model.achieved_msd = sol.achieved_msd;
        model.converged = sol.converged;
        model.options = *opts;
        if !sol.converged {
            log::warn!("final FISTA solve stopped at the iteration cap");
        }
        Ok(model)
    }
}

/// Keeps the rows of `alpha_tilde` whose norm exceeds `sv_threshold` times
/// the largest row norm. Solve metadata on the result is left unset.
pub fn extract_support(
    alpha_tilde: &ArrayView2<f64>,
    sv_threshold: f64,
    kernel: &BoundKernel,
) -> Result<SparseModel> {
    if alpha_tilde.nrows() != kernel.len() {
        return Err(Error::Shape(format!(
            "coefficients have {} rows, kernel has {} training points",
            alpha_tilde.nrows(),
            kernel.len()
        )));
    }
    let norms: Vec<f64> = alpha_tilde.rows().into_iter().map(row_norm).collect();
    let top = norms.iter().copied().fold(0.0, f64::max);
    let support: Vec<usize> = if top > 0.0 {
        (0..norms.len())
            .filter(|&i| norms[i] > sv_threshold * top)
            .collect()
    } else {
        Vec::new()
    };
    if support.is_empty() && top > 0.0 {
        log::warn!("every coefficient row fell below the support threshold; model is empty");
    }
    let rows = alpha_tilde.select(ndarray::Axis(0), &support);
    let (kernel, eval_index) = kernel.restrict(&support);
    Ok(SparseModel {
        kernel,
        eval_index,
        support,
        alpha_tilde: rows,
        epsilon: f64::NAN,
        gamma_star: f64::NAN,
        achieved_msd: f64::NAN,
        converged: true,
        options: SolveOptions::default(),
    })
}

/// `f̃(x) = Σ_{i ∈ support} K(x, x_i) α̃_i`. An empty model predicts zero.
pub fn sparse_predict(model: &SparseModel, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    if model.support.is_empty() {
        if x.len() != model.kernel.dim() {
            return Err(Error::Shape(format!(
                "query has dimension {}, model expects {}",
                x.len(),
                model.kernel.dim()
            )));
        }
        return Ok(Array1::zeros(model.dims()));
    }
    let row = model.kernel.cross_row_at(x, &model.eval_index)?;
    Ok(row.dot(&model.alpha_tilde))
}

pub fn sparse_predict_batch(model: &SparseModel, xs: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((xs.nrows(), model.dims()));
    for (i, x) in xs.rows().into_iter().enumerate() {
        let y = sparse_predict(model, x).map_err(|e| Error::at_row(i, e))?;
        out.row_mut(i).assign(&y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{bind, KernelSpec};
    use crate::krr::{krr_fit, krr_predict_batch};
    use crate::synth::SplitMix64;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn cloud(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut r = SplitMix64::new(seed);
        Array2::from_shape_fn((n, d), |_| r.next_f64())
    }

    fn gaussian_gram(n: usize, seed: u64, sigma: f64) -> (BoundKernel, Array2<f64>) {
        let pts = cloud(n, 2, seed);
        let bk = bind(KernelSpec::Gaussian { sigma }, &pts.view()).unwrap();
        let k = bk.gram();
        (bk, k)
    }

    #[test]
    fn prox_examples() {
        let a = array![[2.0 * 0.6, 2.0 * 0.8]];
        assert_eq!(group_prox(&a.view(), 3.0), array![[0.0, 0.0]]);
        let b = group_prox(&array![[3.0, 4.0]].view(), 1.0);
        assert_abs_diff_eq!(b, array![[2.4, 3.2]], epsilon = 1e-15);
        let c = array![[1.0, -2.0], [0.0, 0.0], [5.0, 1.0]];
        assert_eq!(group_prox(&c.view(), 0.0), c);
        assert_eq!(group_prox(&array![[0.0, 0.0]].view(), 1.0), array![[0.0, 0.0]]);
    }

    proptest! {
        #[test]
        fn prox_is_non_expansive(
            a in prop::collection::vec(-10.0f64..10.0, 12),
            b in prop::collection::vec(-10.0f64..10.0, 12),
            thr in 0.0f64..8.0,
        ) {
            let a = Array2::from_shape_vec((4, 3), a).unwrap();
            let b = Array2::from_shape_vec((4, 3), b).unwrap();
            let pa = group_prox(&a.view(), thr);
            let pb = group_prox(&b.view(), thr);
            let lhs = sq_frobenius(&(&pa - &pb)).sqrt();
            let rhs = sq_frobenius(&(&a - &b)).sqrt();
            prop_assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn identity_gram_closed_form() {
        let k = Array2::<f64>::eye(4);
        let ah = array![[1.0, 2.0], [0.1, 0.1], [-3.0, 0.5], [0.0, 0.7]];
        let gamma = 1.0;
        let r = fista_group_lasso(&k.view(), &ah.view(), gamma, &SolveOptions::default()).unwrap();
        for i in 0..4 {
            let norm = row_norm(ah.row(i));
            let f = (1.0 - gamma / (2.0 * norm)).max(0.0);
            for c in 0..2 {
                assert!((r.alpha[[i, c]] - f * ah[[i, c]]).abs() <= 1e-6);
            }
        }
        assert!(r.converged);
    }

    #[test]
    fn zero_is_optimal_beyond_gamma_max() {
        let (_, k) = gaussian_gram(8, 3, 0.5);
        let ah = cloud(8, 2, 4);
        let m_ah = k.dot(&k).dot(&ah);
        let gmax = 2.0 * m_ah.rows().into_iter().map(row_norm).fold(0.0, f64::max);
        let r = fista_group_lasso(&k.view(), &ah.view(), gmax * 1.0001, &SolveOptions::default()).unwrap();
        assert!(r.alpha.iter().all(|&v| v == 0.0));
        // subgradient optimality at zero: ||2 (K² α̂)_i|| <= γ for all i
        for row in m_ah.rows() {
            assert!(2.0 * row_norm(row) <= gmax * 1.0001);
        }
    }

    #[test]
    fn zero_penalty_recovers_dense_fit() {
        let pts = cloud(6, 2, 9);
        let bk = bind(KernelSpec::Gaussian { sigma: 2.0 }, &pts.view()).unwrap();
        let mut k = bk.gram();
        for i in 0..6 {
            k[[i, i]] += 1.0;
        }
        let ah = cloud(6, 2, 10);
        let r = fista_group_lasso(&k.view(), &ah.view(), 0.0, &SolveOptions::default()).unwrap();
        let base = sq_frobenius(&k.dot(&ah));
        assert!(r.objective <= 1e-8 * base, "objective {}", r.objective);
        assert_abs_diff_eq!(r.alpha, ah, epsilon = 1e-3);
    }

    #[test]
    fn residual_is_monotone_in_gamma() {
        let (_, k) = gaussian_gram(15, 5, 0.4);
        let ah = cloud(15, 2, 6);
        let kv = k.view();
        let gmax = GroupLasso::new(&kv, &ah.view()).unwrap().gamma_max();
        let mut last = -1.0;
        for i in 1..=10 {
            let gamma = gmax * (i as f64) / 10.0;
            let r = fista_group_lasso(&k.view(), &ah.view(), gamma, &SolveOptions::default()).unwrap();
            assert!(
                r.residual >= last * (1.0 - 1e-6) - 1e-12,
                "gamma {gamma}: {} < {last}",
                r.residual
            );
            last = r.residual;
        }
    }

    #[test]
    fn huge_epsilon_gives_empty_model() {
        let pts = cloud(12, 2, 1);
        let y = cloud(12, 2, 2);
        let bk = bind(KernelSpec::Gaussian { sigma: 0.5 }, &pts.view()).unwrap();
        let krr = krr_fit(bk, &y.view(), 0.1).unwrap();
        let m = SparseModel::from_krr(&krr, 100.0, &SolveOptions::default()).unwrap();
        assert_eq!(m.support_count(), 0);
        let x = array![0.5, 0.5];
        assert_eq!(sparse_predict(&m, x.view()).unwrap(), array![0.0, 0.0]);
        assert!(sparse_predict(&m, array![0.5].view()).is_err());
    }

    #[test]
    fn guarantee_holds_on_random_instance() {
        let pts = cloud(20, 2, 31);
        let y = cloud(20, 2, 32);
        let bk = bind(KernelSpec::Gaussian { sigma: 0.4 }, &pts.view()).unwrap();
        let krr = krr_fit(bk, &y.view(), 0.1).unwrap();
        let opts = SolveOptions::default();
        let eps = 0.05;
        let m = SparseModel::from_krr(&krr, eps, &opts).unwrap();
        assert!(m.support_count() > 0 && m.support_count() < 20);
        let full = krr_predict_batch(&krr, &pts.view()).unwrap();
        let sparse = sparse_predict_batch(&m, &pts.view()).unwrap();
        let msd = (&full - &sparse).mapv(|v| v * v).sum() / 20.0;
        assert!(msd <= eps * eps * (1.0 + opts.slack), "msd {msd}");
        assert!((msd - m.achieved_msd).abs() <= 1e-9 * eps * eps + 1e-12);
    }

    #[test]
    fn tiny_epsilon_keeps_every_row() {
        let pts = cloud(10, 2, 41);
        let y = cloud(10, 1, 42);
        let bk = bind(KernelSpec::Gaussian { sigma: 0.3 }, &pts.view()).unwrap();
        let krr = krr_fit(bk, &y.view(), 0.1).unwrap();
        let m = SparseModel::from_krr(&krr, 1e-9, &SolveOptions::default()).unwrap();
        assert_eq!(m.support_count(), 10);
        let x = cloud(5, 2, 43);
        let a = krr_predict_batch(&krr, &x.view()).unwrap();
        let b = sparse_predict_batch(&m, &x.view()).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-6);
    }

    #[test]
    fn rejects_bad_epsilon() {
        let (_, k) = gaussian_gram(4, 1, 1.0);
        let ah = cloud(4, 1, 2);
        assert!(sparsify(&k.view(), &ah.view(), 0.0, &SolveOptions::default()).is_err());
        assert!(sparsify(&k.view(), &ah.view(), -1.0, &SolveOptions::default()).is_err());
    }

    #[test]
    fn support_extraction() {
        let (bk, _) = gaussian_gram(3, 1, 1.0);
        let m = extract_support(&Array2::zeros((3, 2)).view(), 1e-8, &bk).unwrap();
        assert!(m.support.is_empty());
        let one = array![[0.0, 0.0], [1.0, -1.0], [0.0, 0.0]];
        let m = extract_support(&one.view(), 1e-8, &bk).unwrap();
        assert_eq!(m.support, vec![1]);
        assert_eq!(m.alpha_tilde, array![[1.0, -1.0]]);
        let rel = array![[1.0, 0.0], [1e-12, 0.0], [0.0, 0.0]];
        let m = extract_support(&rel.view(), 1e-8, &bk).unwrap();
        assert_eq!(m.support, vec![0]);
        assert_eq!(m.support_points(), bk.points().select(ndarray::Axis(0), &[0]));
    }
}
