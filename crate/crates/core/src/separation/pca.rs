use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::SeparationError;

/// Principal axes of a samples-by-channels matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// Orthonormal components as columns, by descending eigenvalue.
    pub components: DMatrix<f64>,
    /// Sample-covariance eigenvalues, non-increasing.
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn n_channels(&self) -> usize {
        self.mean.len()
    }

    pub fn center(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut c = data.clone();
        for mut row in c.row_iter_mut() {
            row -= self.mean.transpose();
        }
        c
    }

    /// Scores on the first `k` components (samples by k).
    pub fn transform(&self, data: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
        self.center(data) * self.components.columns(0, k)
    }

    /// Maps scores on the first `scores.ncols()` components back to centered data.
    pub fn inverse_centered(&self, scores: &DMatrix<f64>) -> DMatrix<f64> {
        scores * self.components.columns(0, scores.ncols()).transpose()
    }

    pub fn explained_ratio(&self, k: usize) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        self.eigenvalues[..k].iter().sum::<f64>() / total
    }
}

pub(crate) fn column_means(data: &DMatrix<f64>) -> DVector<f64> {
    let n = data.nrows() as f64;
    DVector::from_iterator(data.ncols(), data.column_iter().map(|c| c.sum() / n))
}

pub fn pca_fit(data: &DMatrix<f64>) -> Result<PcaModel, SeparationError> {
    let (n, d) = data.shape();
    if d == 0 || n <= d {
        return Err(SeparationError::InsufficientSamples {
            samples: n,
            channels: d,
        });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(SeparationError::DegenerateInput("non-finite sample".into()));
    }
    let mean = column_means(data);
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.tr_mul(&centered) / (n as f64 - 1.0);
    if cov.iter().all(|&v| v == 0.0) {
        return Err(SeparationError::DegenerateInput("covariance is all zero".into()));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        // deterministic sign: largest-magnitude loading positive
        let (imax, _) = col.iamax_full();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        components.set_column(dst, &col);
    }
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
    })
}

/// Subtracts the projection of the centered data onto the top `k` components.
pub fn pca_remove_top(data: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>, SeparationError> {
    let d = data.ncols();
    if k == 0 || k >= d {
        return Err(SeparationError::InvalidComponentCount {
            requested: k,
            available: d,
        });
    }
    let model = pca_fit(data)?;
    let scores = model.transform(data, k);
    Ok(data - model.inverse_centered(&scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn rank_one_data_captured_by_first_component() {
        let base = random(200, 1, 1);
        let data = DMatrix::from_fn(200, 2, |i, j| base[i] * (j as f64 + 1.0));
        let m = pca_fit(&data).unwrap();
        assert!(m.explained_ratio(1) >= 1.0 - 1e-9);
        let resid = pca_remove_top(&data, 1).unwrap();
        let centered = m.center(&resid);
        assert!(centered.amax() < 1e-8);
    }

    /// Eigenvalues of a symmetric 3x3 matrix via the trigonometric cubic solution.
    fn cubic_eigenvalues(a: &DMatrix<f64>) -> [f64; 3] {
        let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        let q = (a[(0, 0)] + a[(1, 1)] + a[(2, 2)]) / 3.0;
        let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = (a - DMatrix::identity(3, 3) * q) / p;
        let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        [e1, 3.0 * q - e1 - e3, e3]
    }

    #[test]
    fn three_channel_eigenpairs_match_cubic_solution() {
        let raw = random(500, 3, 7);
        let mix = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, 0.2, 0.0, 0.7, 0.3, 0.1, 0.0, 0.5]);
        let data = raw * mix;
        let m = pca_fit(&data).unwrap();
        let mean = column_means(&data);
        let mut c = data.clone();
        for mut row in c.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = c.tr_mul(&c) / 499.0;
        let expected = cubic_eigenvalues(&cov);
        for k in 0..3 {
            assert!((m.eigenvalues[k] - expected[k]).abs() < 1e-8, "{k}");
            let v = m.components.column(k);
            let residual = &cov * v - v * expected[k];
            assert!(residual.amax() < 1e-8);
        }
        let gram = m.components.tr_mul(&m.components);
        assert!((gram - DMatrix::identity(3, 3)).amax() < 1e-8);
    }

    #[test]
    fn full_reconstruction_and_variance_preserved() {
        let data = random(300, 4, 3);
        let m = pca_fit(&data).unwrap();
        let scores = m.transform(&data, 4);
        let recon = m.inverse_centered(&scores);
        assert!((recon - m.center(&data)).amax() < 1e-8);
        let total_var: f64 = m.center(&data).iter().map(|v| v * v).sum::<f64>() / 299.0;
        let score_var: f64 = scores.iter().map(|v| v * v).sum::<f64>() / 299.0;
        assert!((total_var - score_var).abs() < 1e-8 * total_var);
        assert!(m.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            pca_fit(&DMatrix::zeros(10, 3)),
            Err(SeparationError::DegenerateInput(_))
        ));
        assert!(matches!(
            pca_fit(&DMatrix::zeros(3, 3)),
            Err(SeparationError::InsufficientSamples { .. })
        ));
        assert!(matches!(
            pca_remove_top(&random(50, 3, 1), 3),
            Err(SeparationError::InvalidComponentCount { .. })
        ));
    }

    #[test]
    fn removing_dominant_source_exposes_weak_sources() {
        let n = 2000;
        let t = |i: usize| i as f64 / 200.0;
        let strong: Vec<f64> = (0..n).map(|i| 20.0 * (2.0 * std::f64::consts::PI * 1.3 * t(i)).sin()).collect();
        let w1: Vec<f64> = (0..n).map(|i| ((7.1 * t(i)).fract() - 0.5) * 2.0).collect();
        let w2: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * 5.7 * t(i)).cos()).collect();
        // the strong source dominates channel 0, each weak source one other channel
        let mix = [[1.0, 0.05, 0.05], [0.1, 1.0, 0.1], [0.1, 0.1, 1.0]];
        let data = DMatrix::from_fn(n, 3, |i, c| {
            mix[c][0] * strong[i] + mix[c][1] * w1[i] + mix[c][2] * w2[i]
        });
        let resid = pca_remove_top(&data, 1).unwrap();
        let corr = |a: &[f64], b: &[f64]| crate::eval::pearson_r(a, b).unwrap();
        for weak in [&w1, &w2] {
            let best = (0..3)
                .map(|c| corr(&resid.column(c).iter().copied().collect::<Vec<_>>(), weak).abs())
                .fold(0.0, f64::max);
            assert!(best >= 0.9, "{best}");
        }
    }
}
