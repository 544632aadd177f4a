//! Dense symmetric linear algebra: eigendecomposition, regularized solves and
//! spectral norms.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Default deflation tolerance for [`sym_eigen`].
pub const DEFAULT_EIGEN_TOL: f64 = 1e-10;

/// Relative asymmetry accepted by routines that require symmetric input.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Residual bound that [`solve_regularized`] guarantees, relative to `||y||_F`.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-8;

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
///
/// Column `j` of `eigenvectors` pairs with `eigenvalues[j]`. Each column has
/// unit norm and its entry of largest magnitude is positive (lowest index
/// wins a tie).
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

pub fn frobenius_norm(m: &ArrayView2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn max_abs(m: &ArrayView2<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

fn check_square(m: &ArrayView2<f64>) -> Result<usize> {
    let (r, c) = m.dim();
    if r != c || r == 0 {
        return Err(Error::Shape(format!(
            "expected a nonempty square matrix, got {r}x{c}"
        )));
    }
    Ok(r)
}

pub(crate) fn check_symmetric(m: &ArrayView2<f64>) -> Result<usize> {
    let n = check_square(m)?;
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    if worst > SYMMETRY_TOL * scale {
        return Err(Error::Asymmetric(worst / scale));
    }
    Ok(n)
}

/// Symmetric eigendecomposition by Householder tridiagonalization followed by
/// implicit QL iterations.
///
/// `tol` is the relative deflation threshold of the QL sweep (clamped below at
/// machine epsilon); residuals `||S v - λ v||` come out on the order of
/// `tol * ||S||`.
pub fn sym_eigen(s: &ArrayView2<f64>, tol: f64) -> Result<EigenDecomposition> {
    let n = check_symmetric(s)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "eigen tolerance must be positive, got {tol}"
        )));
    }
    // `w` holds the transpose of the accumulated orthogonal transform so that
    // every inner loop walks contiguous memory; rows of `w` end up as the
    // eigenvectors.
    let mut w: Vec<f64> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            // symmetrize exactly; the reduction reads one triangle only
            w.push(0.5 * (s[[i, j]] + s[[j, i]]));
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut w, &mut d, &mut e);
    ql_implicit(n, &mut w, &mut d, &mut e, tol.max(f64::EPSILON))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));

    let mut eigenvalues = Array1::zeros(n);
    let mut eigenvectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        eigenvalues[col] = d[src];
        let row = &w[src * n..(src + 1) * n];
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let big = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let pivot = row
            .iter()
            .position(|v| v.abs() >= big * (1.0 - 1e-10))
            .unwrap_or(0);
        let sign = if row[pivot] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            eigenvectors[[k, col]] = sign * row[k] / norm;
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Householder reduction to tridiagonal form (EISPACK tred2), operating on the
/// transposed transform `w`.
fn tridiagonalize(n: usize, w: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |r: usize, c: usize| r * n + c;
    for j in 0..n {
        d[j] = w[at(j, n - 1)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = w[at(j, i - 1)];
                w[at(j, i)] = 0.0;
                w[at(i, j)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for v in e.iter_mut().take(i) {
                *v = 0.0;
            }
            for j in 0..i {
                f = d[j];
                w[at(i, j)] = f;
                g = e[j] + w[at(j, j)] * f;
                let row = &w[at(j, 0)..at(j, 0) + i];
                for k in (j + 1)..i {
                    g += row[k] * d[k];
                    e[k] += row[k] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                let row = &mut w[at(j, 0)..at(j, 0) + i];
                for k in j..i {
                    row[k] -= f * e[k] + g * d[k];
                }
                d[j] = w[at(j, i - 1)];
                w[at(j, i)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        w[at(i, n - 1)] = w[at(i, i)];
        w[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = w[at(i + 1, k)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += w[at(i + 1, k)] * w[at(j, k)];
                }
                let row = &mut w[at(j, 0)..at(j, 0) + i + 1];
                for k in 0..=i {
                    row[k] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            w[at(i + 1, k)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = w[at(j, n - 1)];
        w[at(j, n - 1)] = 0.0;
    }
    w[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL iterations on the tridiagonal (d, e) (EISPACK tql2), rotating
/// the rows of `w` alongside.
fn ql_implicit(n: usize, w: &mut [f64], d: &mut [f64], e: &mut [f64], eps: f64) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let cap = 100 * n.max(1);
    let mut total_iter = 0usize;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        // e[n-1] is zero, so m < n always
        if m > l {
            loop {
                total_iter += 1;
                if total_iter > cap {
                    return Err(Error::NoConvergence {
                        what: "symmetric QL eigensolver",
                        iterations: cap,
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = w.split_at_mut((i + 1) * n);
                    let row_i = &mut lo[i * n..];
                    let row_next = &mut hi[..n];
                    for k in 0..n {
                        let hk = row_next[k];
                        row_next[k] = s * row_i[k] + c * hk;
                        row_i[k] = c * row_i[k] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Solves `(k + lambda I) alpha = y` for symmetric `k`.
///
/// Uses a Cholesky factorization when `k + lambda I` is positive definite and
/// falls back to LU with partial pivoting otherwise, followed by one step of
/// iterative refinement. Only symmetry and nonsingularity are required.
pub fn solve_regularized(k: &ArrayView2<f64>, lambda: f64, y: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = check_symmetric(k)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    if y.nrows() != n {
        return Err(Error::Shape(format!(
            "right-hand side has {} rows, system has {n}",
            y.nrows()
        )));
    }
    let mut a = k.to_owned();
    for i in 0..n {
        a[[i, i]] += lambda;
    }
    let scale = max_abs(&a.view());
    let floor = (n as f64) * f64::EPSILON * scale;
    let factor = match Cholesky::new(&a, floor) {
        Some(ch) => Factor::Cholesky(ch),
        None => Factor::Lu(Lu::new(&a, floor)?),
    };
    let mut x = factor.solve(y);
    let resid = y - &a.dot(&x);
    x += &factor.solve(&resid.view());

    let resid = y - &a.dot(&x);
    let rnorm = frobenius_norm(&resid.view());
    let ynorm = frobenius_norm(y);
    if !(rnorm <= SOLVE_RESIDUAL_TOL * ynorm) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular {
            pivot: factor.smallest_pivot(),
        });
    }
    Ok(x)
}

enum Factor {
    Cholesky(Cholesky),
    Lu(Lu),
}

impl Factor {
    fn solve(&self, b: &ArrayView2<f64>) -> Array2<f64> {
        match self {
            Factor::Cholesky(c) => c.solve(b),
            Factor::Lu(l) => l.solve(b),
        }
    }

    fn smallest_pivot(&self) -> f64 {
        match self {
            Factor::Cholesky(c) => c.smallest_pivot,
            Factor::Lu(l) => l.smallest_pivot,
        }
    }
}

/// Lower Cholesky factor stored row-major.
struct Cholesky {
    n: usize,
    l: Vec<f64>,
    smallest_pivot: f64,
}

impl Cholesky {
    fn new(a: &Array2<f64>, floor: f64) -> Option<Self> {
        let n = a.nrows();
        let mut l = vec![0.0; n * n];
        let mut smallest = f64::INFINITY;
        for i in 0..n {
            for j in 0..=i {
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                let dot: f64 = ri.iter().zip(rj).map(|(x, y)| x * y).sum();
                let v = a[[i, j]] - dot;
                if i == j {
                    if !(v > floor) {
                        return None;
                    }
                    smallest = smallest.min(v);
                    l[i * n + i] = v.sqrt();
                } else {
                    l[i * n + j] = v / l[j * n + j];
                }
            }
        }
        Some(Cholesky {
            n,
            l,
            smallest_pivot: smallest,
        })
    }

    fn solve(&self, b: &ArrayView2<f64>) -> Array2<f64> {
        let n = self.n;
        let mut x = b.to_owned();
        for mut col in x.axis_iter_mut(Axis(1)) {
            for i in 0..n {
                let row = &self.l[i * n..i * n + i];
                let s: f64 = (0..i).map(|k| row[k] * col[k]).sum();
                col[i] = (col[i] - s) / self.l[i * n + i];
            }
            for i in (0..n).rev() {
                let mut s = col[i];
                for k in (i + 1)..n {
                    s -= self.l[k * n + i] * col[k];
                }
                col[i] = s / self.l[i * n + i];
            }
        }
        x
    }
}

/// LU factorization with partial (row) pivoting.
struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    smallest_pivot: f64,
}

impl Lu {
    fn new(a: &Array2<f64>, floor: f64) -> Result<Self> {
        let n = a.nrows();
        let mut lu: Vec<f64> = a.iter().copied().collect();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut smallest = f64::INFINITY;
        for col in 0..n {
            let (p, pv) = (col..n)
                .map(|r| (r, lu[r * n + col].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            smallest = smallest.min(pv);
            if !(pv > floor) {
                return Err(Error::Singular { pivot: pv });
            }
            if p != col {
                for k in 0..n {
                    lu.swap(p * n + k, col * n + k);
                }
                perm.swap(p, col);
            }
            let piv = lu[col * n + col];
            let (upper, lower) = lu.split_at_mut((col + 1) * n);
            let prow = &upper[col * n..];
            for r in 0..(n - col - 1) {
                let row = &mut lower[r * n..(r + 1) * n];
                let f = row[col] / piv;
                row[col] = f;
                if f != 0.0 {
                    for k in (col + 1)..n {
                        row[k] -= f * prow[k];
                    }
                }
            }
        }
        Ok(Lu {
            n,
            lu,
            perm,
            smallest_pivot: smallest,
        })
    }

    fn solve(&self, b: &ArrayView2<f64>) -> Array2<f64> {
        let n = self.n;
        let mut x = Array2::zeros(b.raw_dim());
        for (c, bcol) in b.axis_iter(Axis(1)).enumerate() {
            let mut v: Vec<f64> = self.perm.iter().map(|&p| bcol[p]).collect();
            for i in 0..n {
                let s: f64 = (0..i).map(|k| self.lu[i * n + k] * v[k]).sum();
                v[i] -= s;
            }
            for i in (0..n).rev() {
                let s: f64 = ((i + 1)..n).map(|k| self.lu[i * n + k] * v[k]).sum();
                v[i] = (v[i] - s) / self.lu[i * n + i];
            }
            for i in 0..n {
                x[[i, c]] = v[i];
            }
        }
        x
    }
}

/// Largest singular value by power iteration on `mᵀm`, started from the
/// all-ones vector. Stops once successive estimates agree to `tol` relative
/// or after 10,000 iterations.
pub fn spectral_norm(m: &ArrayView2<f64>, tol: f64) -> Result<f64> {
    let n = check_square(m)?;
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut sigma = 0.0;
    for _ in 0..10_000 {
        let w = m.dot(&v);
        let wn = w.dot(&w).sqrt();
        if wn == 0.0 {
            return Ok(sigma);
        }
        let u = m.t().dot(&w);
        let un = u.dot(&u).sqrt();
        // ||m v|| with ||v|| = 1 approaches σ_max from below
        let next = wn.max(un / wn);
        let done = (next - sigma).abs() <= tol * next;
        sigma = next;
        if done || un == 0.0 {
            break;
        }
        v = u / un;
    }
    Ok(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn random_symmetric(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = crate::synth::SplitMix64::new(seed);
        let mut a = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let v = 2.0 * rng.next_f64() - 1.0;
                a[[i, j]] = v;
                a[[j, i]] = v;
            }
        }
        a
    }

    fn random_spd(n: usize, seed: u64) -> Array2<f64> {
        let a = random_symmetric(n, seed);
        let mut s = a.t().dot(&a);
        for i in 0..n {
            s[[i, i]] += 0.5;
        }
        s
    }

    #[test]
    fn identity_eigen() {
        let e = sym_eigen(&Array2::<f64>::eye(3).view(), DEFAULT_EIGEN_TOL).unwrap();
        for v in e.eigenvalues.iter() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn diagonal_eigen_sign_convention() {
        let e = sym_eigen(&array![[3.0, 0.0], [0.0, 1.0]].view(), DEFAULT_EIGEN_TOL).unwrap();
        assert_abs_diff_eq!(e.eigenvalues[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.eigenvalues[1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.eigenvectors, array![[1.0, 0.0], [0.0, 1.0]], epsilon = 1e-14);
    }

    #[test]
    fn two_by_two_hand_diagonalized() {
        let e = sym_eigen(&array![[2.0, 1.0], [1.0, 2.0]].view(), DEFAULT_EIGEN_TOL).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(e.eigenvalues, array![3.0, 1.0], epsilon = 1e-12);
        assert_abs_diff_eq!(e.eigenvectors, array![[r, r], [r, -r]], epsilon = 1e-12);
    }

    #[test]
    fn one_by_one_and_errors() {
        let e = sym_eigen(&array![[-4.0]].view(), DEFAULT_EIGEN_TOL).unwrap();
        assert_eq!(e.eigenvalues[0], -4.0);
        assert_eq!(e.eigenvectors[[0, 0]], 1.0);
        assert!(matches!(
            sym_eigen(&array![[1.0, 2.0]].view(), 1e-10),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            sym_eigen(&array![[1.0, 2.0], [0.0, 1.0]].view(), 1e-10),
            Err(Error::Asymmetric(_))
        ));
    }

    #[test]
    fn reconstruction_and_orthogonality() {
        for (n, seed) in [(5, 1u64), (17, 2), (50, 3)] {
            let s = random_symmetric(n, seed);
            let e = sym_eigen(&s.view(), DEFAULT_EIGEN_TOL).unwrap();
            let phi = &e.eigenvectors;
            let recon = phi.dot(&Array2::from_diag(&e.eigenvalues)).dot(&phi.t());
            let snorm = frobenius_norm(&s.view());
            let err = frobenius_norm(&(&recon - &s).view());
            assert!(err <= n as f64 * DEFAULT_EIGEN_TOL * snorm, "n={n} err={err}");
            let gram = phi.t().dot(phi);
            assert_abs_diff_eq!(gram, Array2::eye(n), epsilon = 1e-9);
            for w in e.eigenvalues.windows(2) {
                assert!(w[0] >= w[1]);
            }
            for j in 0..n {
                let v = phi.column(j);
                let resid = s.dot(&v) - &(&v * e.eigenvalues[j]);
                let r = resid.dot(&resid).sqrt();
                assert!(r <= 1e-9 * (1.0 + e.eigenvalues[j].abs()) * snorm);
            }
        }
    }

    #[test]
    fn deterministic_output() {
        let s = random_symmetric(20, 9);
        let a = sym_eigen(&s.view(), DEFAULT_EIGEN_TOL).unwrap();
        let b = sym_eigen(&s.view(), DEFAULT_EIGEN_TOL).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.eigenvectors, b.eigenvectors);
    }

    #[test]
    fn solve_examples() {
        let y = array![[1.5, -2.0], [0.25, 7.0]];
        let a = solve_regularized(&Array2::eye(2).view(), 0.0, &y.view()).unwrap();
        assert_abs_diff_eq!(a, y, epsilon = 1e-15);

        let a = solve_regularized(
            &array![[2.0, 0.0], [0.0, 2.0]].view(),
            1.0,
            &array![[3.0], [6.0]].view(),
        )
        .unwrap();
        assert_abs_diff_eq!(a, array![[1.0], [2.0]], epsilon = 1e-14);

        assert!(matches!(
            solve_regularized(&Array2::zeros((2, 2)).view(), 0.0, &y.view()),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn solve_indefinite_system() {
        let k = array![[0.0, 2.0, 0.0], [2.0, 0.0, 1.0], [0.0, 1.0, -3.0]];
        let y = array![[1.0], [2.0], [3.0]];
        let a = solve_regularized(&k.view(), 0.0, &y.view()).unwrap();
        assert_abs_diff_eq!(k.dot(&a), y, epsilon = 1e-12);
    }

    #[test]
    fn solve_matches_eigen_route() {
        for seed in 0..5 {
            let k = random_spd(12, 100 + seed);
            let y = random_symmetric(12, 200 + seed)
                .slice(ndarray::s![.., 0..3])
                .to_owned();
            let lambda = 0.3;
            let direct = solve_regularized(&k.view(), lambda, &y.view()).unwrap();
            let e = sym_eigen(&k.view(), 1e-14).unwrap();
            let inv = e.eigenvalues.mapv(|l| 1.0 / (l + lambda));
            let via_eigen = e
                .eigenvectors
                .dot(&Array2::from_diag(&inv))
                .dot(&e.eigenvectors.t().dot(&y));
            assert_abs_diff_eq!(direct, via_eigen, epsilon = 1e-6);
        }
    }

    #[test]
    fn spectral_norm_examples() {
        let n = spectral_norm(&Array2::<f64>::eye(4).view(), 1e-12).unwrap();
        assert_abs_diff_eq!(n, 1.0, epsilon = 1e-12);
        let n = spectral_norm(&array![[5.0, 0.0], [0.0, 2.0]].view(), 1e-12).unwrap();
        assert_abs_diff_eq!(n, 5.0, epsilon = 1e-9);
        let n = spectral_norm(&array![[0.0, 3.0], [3.0, 0.0]].view(), 1e-12).unwrap();
        assert_abs_diff_eq!(n, 3.0, epsilon = 1e-12);
        assert_eq!(
            spectral_norm(&Array2::<f64>::zeros((3, 3)).view(), 1e-12).unwrap(),
            0.0
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn spectral_norm_matches_eigen(n in 2usize..15, seed in 0u64..1000) {
            let s = random_symmetric(n, seed);
            let e = sym_eigen(&s.view(), 1e-14).unwrap();
            let top = e.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let sn = spectral_norm(&s.view(), 1e-13).unwrap();
            prop_assert!((sn - top).abs() <= 1e-6 * top.max(1.0), "sn={} top={}", sn, top);
        }
    }
}
