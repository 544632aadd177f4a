//! Laplacian eigenmaps and the Nyström out-of-sample extension.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::kernels::{self, BoundKernel, KernelSpec};
use crate::krr;
use crate::linalg;

/// Retained eigenvalues smaller than this in magnitude are rejected, since
/// the Nyström formula divides by them.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;

/// QL deflation threshold used when embedding.
const EMBED_EIGEN_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    /// n×p coordinates; column j is the eigenvector paired with `eigenvalues[j]`.
    pub coordinates: Array2<f64>,
    pub eigenvalues: Array1<f64>,
    pub kernel: BoundKernel,
    /// True when the leading eigenvector was dropped.
    pub skip_trivial: bool,
}

impl SpectralEmbedding {
    pub fn dims(&self) -> usize {
        self.coordinates.ncols()
    }
}

/// Embeds the kernel's training points with `p` eigenvectors of its Gram
/// matrix, taken in descending eigenvalue order after optionally skipping the
/// leading one.
pub fn spectral_embedding(kernel: BoundKernel, p: usize, skip_trivial: bool) -> Result<SpectralEmbedding> {
    let n = kernel.len();
    let first = usize::from(skip_trivial);
    if p == 0 || first + p > n {
        return Err(Error::InvalidParameter(format!(
            "cannot take {p} eigenvectors{} from {n} points",
            if skip_trivial {
                " after the trivial one"
            } else {
                ""
            }
        )));
    }
    let k = kernel.gram();
    let eig = linalg::sym_eigen(&k.view(), EMBED_EIGEN_TOL)?;
    let eigenvalues = eig.eigenvalues.slice(s![first..first + p]).to_owned();
    if let Some(j) = eigenvalues.iter().position(|v| v.abs() < EIGENVALUE_FLOOR) {
        return Err(Error::ZeroEigenvalue {
            index: first + j,
            value: eigenvalues[j],
        });
    }
    let coordinates = eig.eigenvectors.slice(s![.., first..first + p]).to_owned();
    Ok(SpectralEmbedding {
        coordinates,
        eigenvalues,
        kernel,
        skip_trivial,
    })
}

/// Laplacian eigenmaps with the degree-normalized heat kernel: the `p`
/// eigenvectors following the trivial leading one.
pub fn laplacian_eigenmaps(
    points: &ArrayView2<f64>,
    spec: KernelSpec,
    p: usize,
) -> Result<SpectralEmbedding> {
    if !matches!(spec, KernelSpec::NormalizedHeat { .. }) {
        return Err(Error::InvalidParameter(
            "Laplacian eigenmaps needs the normalized heat kernel".into(),
        ));
    }
    let kernel = kernels::bind(spec, points)?;
    spectral_embedding(kernel, p, true)
}

/// Nyström extension: coordinate j of a new point is
/// `(1/λ_j) Σ_i φ_i^(j) K(x, x_i)`.
pub fn nystrom_extend(emb: &SpectralEmbedding, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    if let Some(j) = emb.eigenvalues.iter().position(|v| v.abs() < EIGENVALUE_FLOOR) {
        return Err(Error::ZeroEigenvalue {
            index: j,
            value: emb.eigenvalues[j],
        });
    }
    let row = emb.kernel.cross_row(x)?;
    let mut out = row.dot(&emb.coordinates);
    out /= &emb.eigenvalues;
    Ok(out)
}

pub fn nystrom_extend_batch(emb: &SpectralEmbedding, xs: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((xs.nrows(), emb.dims()));
    for (i, x) in xs.rows().into_iter().enumerate() {
        let y = nystrom_extend(emb, x).map_err(|e| Error::at_row(i, e))?;
        out.row_mut(i).assign(&y);
    }
    Ok(out)
}

/// Fits unregularized kernel ridge regression to the embedding coordinates
/// and returns the largest Euclidean gap between its predictions and the
/// Nyström extension over `xs`.
pub fn krr_matches_nystrom(emb: &SpectralEmbedding, xs: &ArrayView2<f64>) -> Result<f64> {
    let model = krr::krr_fit(emb.kernel.clone(), &emb.coordinates.view(), 0.0)?;
    let a = krr::krr_predict_batch(&model, xs)?;
    let b = nystrom_extend_batch(emb, xs)?;
    Ok((&a - &b)
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::NeighborRule;
    use crate::synth::SplitMix64;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn heat(t: f64, tau: f64) -> KernelSpec {
        KernelSpec::NormalizedHeat {
            temperature: t,
            rule: NeighborRule::Ball { tau },
        }
    }

    fn cloud(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut r = SplitMix64::new(seed);
        Array2::from_shape_fn((n, d), |_| r.next_f64())
    }

    #[test]
    fn duplicate_pair_has_zero_second_eigenvalue() {
        let pts = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(matches!(
            laplacian_eigenmaps(&pts.view(), heat(1.0, 1.0), 1),
            Err(Error::ZeroEigenvalue { index: 1, .. })
        ));
    }

    #[test]
    fn rejects_bad_requests() {
        let pts = cloud(5, 2, 1);
        assert!(laplacian_eigenmaps(&pts.view(), heat(1.0, 1.0), 0).is_err());
        assert!(laplacian_eigenmaps(&pts.view(), heat(1.0, 1.0), 5).is_err());
        assert!(laplacian_eigenmaps(&pts.view(), KernelSpec::Gaussian { sigma: 1.0 }, 1).is_err());
    }

    #[test]
    fn skipped_eigenvector_has_constant_sign() {
        for seed in 0..5 {
            let pts = cloud(25, 2, seed);
            let spec = KernelSpec::NormalizedHeat {
                temperature: 0.1,
                rule: NeighborRule::Knn { k: 6 },
            };
            let bk = kernels::bind(spec, &pts.view()).unwrap();
            let g = crate::graph::knn_graph(&pts.view(), 6).unwrap();
            if g.component_count() != 1 {
                continue;
            }
            let e = linalg::sym_eigen(&bk.gram().view(), 1e-14).unwrap();
            let top = e.eigenvectors.column(0);
            assert!(top.iter().all(|&v| v > 0.0), "seed {seed}");
            // and it is proportional to sqrt(degree)
            let d = bk.degrees().unwrap().mapv(f64::sqrt);
            let d = &d / d.dot(&d).sqrt();
            assert_abs_diff_eq!(top.to_owned(), d, epsilon = 1e-8);
        }
    }

    #[test]
    fn nystrom_reproduces_training_embedding() {
        let pts = cloud(40, 3, 11);
        let emb = laplacian_eigenmaps(&pts.view(), heat(0.1, 0.6), 3).unwrap();
        assert!(emb.skip_trivial);
        for j in 0..3 {
            let c = emb.coordinates.column(j);
            assert_abs_diff_eq!(c.dot(&c), 1.0, epsilon = 1e-12);
        }
        let ext = nystrom_extend_batch(&emb, &pts.view()).unwrap();
        assert_abs_diff_eq!(ext, emb.coordinates, epsilon = 1e-8);
    }

    #[test]
    fn two_point_hand_computation() {
        // W = [[1, e^-1], [e^-1, 1]], degrees 1 + e^-1, K = W / (1 + e^-1):
        // eigenvalues 1 and (1 - e^-1)/(1 + e^-1), eigenvectors (1,1)/√2, (1,-1)/√2.
        let pts = array![[0.0], [1.0]];
        let emb = laplacian_eigenmaps(&pts.view(), heat(1.0, 2.0), 1).unwrap();
        let c = (-1.0f64).exp();
        let lam = (1.0 - c) / (1.0 + c);
        assert_abs_diff_eq!(emb.eigenvalues[0], lam, epsilon = 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(emb.coordinates, array![[r], [-r]], epsilon = 1e-14);

        // query at 0.25: both training points within tau
        let x = array![0.25];
        let w0 = (-0.0625f64).exp();
        let w1 = (-0.5625f64).exp();
        let dx = w0 + w1;
        let d = 1.0 + c;
        let k0 = w0 / (dx * d).sqrt();
        let k1 = w1 / (dx * d).sqrt();
        let expected = (r * k0 - r * k1) / lam;
        let got = nystrom_extend(&emb, x.view()).unwrap();
        assert_abs_diff_eq!(got[0], expected, epsilon = 1e-14);
    }

    #[test]
    fn scaling_kernel_leaves_extension_unchanged() {
        // scaling every kernel value by c scales the eigenvalues and the
        // query row by c; the ratio in the Nyström formula is unchanged
        let pts = cloud(15, 2, 4);
        let bk = kernels::bind(heat(0.2, 0.8), &pts.view()).unwrap();
        let k2 = bk.gram() * 2.0;
        let emb = spectral_embedding(bk, 2, true).unwrap();
        let e2 = linalg::sym_eigen(&k2.view(), 1e-14).unwrap();
        let x = array![0.5, 0.5];
        let row2 = emb.kernel.cross_row(x.view()).unwrap() * 2.0;
        let mut scaled = Array1::zeros(2);
        for j in 0..2 {
            scaled[j] = row2.dot(&e2.eigenvectors.column(j + 1)) / e2.eigenvalues[j + 1];
        }
        let base = nystrom_extend(&emb, x.view()).unwrap();
        assert_abs_diff_eq!(scaled, base, epsilon = 1e-8);
    }

    #[test]
    fn unregularized_solve_on_eigenvectors_divides_by_eigenvalues() {
        let mut r = SplitMix64::new(31);
        for n in [5, 12, 30] {
            let a = Array2::from_shape_fn((n, n), |_| r.next_f64() - 0.5);
            let s = &a + &a.t() + Array2::<f64>::eye(n) * 0.5;
            let e = linalg::sym_eigen(&s.view(), 1e-14).unwrap();
            if e.eigenvalues.iter().any(|v| v.abs() < 1e-3) {
                continue;
            }
            let l = 3.min(n);
            let y = e.eigenvectors.slice(s![.., ..l]).to_owned();
            let alpha = linalg::solve_regularized(&s.view(), 0.0, &y.view()).unwrap();
            for j in 0..l {
                let want = &y.column(j) / e.eigenvalues[j];
                assert_abs_diff_eq!(alpha.column(j).to_owned(), want, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn krr_equals_nystrom_on_small_instance() {
        let pts = cloud(10, 2, 21);
        let emb = laplacian_eigenmaps(&pts.view(), heat(0.05, 10.0), 2).unwrap();
        let held_out = cloud(8, 2, 22);
        let gap = krr_matches_nystrom(&emb, &held_out.view()).unwrap();
        assert!(gap <= 1e-6, "gap {gap}");
        let gap = krr_matches_nystrom(&emb, &pts.view()).unwrap();
        assert!(gap <= 1e-6, "gap {gap}");
    }
}
