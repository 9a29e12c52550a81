use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::pca::{column_means, pca_fit};
use super::SeparationError;

pub const ICA_TOLERANCE: f64 = 1e-6;
pub const ICA_MAX_ITER: usize = 500;

/// Retained eigenvalues below this fraction of the largest make whitening fail.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentFit {
    pub iterations: usize,
    pub converged: bool,
}

/// Deflation FastICA model. Sources are `unmixing * whitening * (x - mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IcaModel {
    pub mean: DVector<f64>,
    /// n_components by n_channels.
    pub whitening: DMatrix<f64>,
    /// n_channels by n_components; left inverse of `whitening` on its row space.
    pub dewhitening: DMatrix<f64>,
    /// n_components by n_components, orthonormal rows.
    pub unmixing: DMatrix<f64>,
    pub fits: Vec<ComponentFit>,
}

impl IcaModel {
    pub fn n_components(&self) -> usize {
        self.unmixing.nrows()
    }

    pub fn converged(&self) -> bool {
        self.fits.iter().all(|f| f.converged)
    }

    /// Fails with `NonConvergence` naming the first component that hit the
    /// iteration cap.
    pub fn check_converged(&self) -> Result<(), SeparationError> {
        match self.fits.iter().position(|f| !f.converged) {
            None => Ok(()),
            Some(component) => Err(SeparationError::NonConvergence {
                component,
                iterations: self.fits[component].iterations,
            }),
        }
    }

    /// Sources as columns (samples by n_components).
    pub fn transform(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centered = data.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        centered * (&self.unmixing * &self.whitening).transpose()
    }

    /// Channel-space loading of component `j`.
    pub fn mixing_column(&self, j: usize) -> DVector<f64> {
        &self.dewhitening * self.unmixing.row(j).transpose()
    }
}

pub fn fastica(
    data: &DMatrix<f64>,
    n_components: usize,
    seed: u64,
) -> Result<IcaModel, SeparationError> {
    let (n, d) = data.shape();
    if n_components == 0 || n_components > d {
        return Err(SeparationError::InvalidComponentCount {
            requested: n_components,
            available: d,
        });
    }
    let pca = pca_fit(data)?;
    let top = pca.eigenvalues[0];
    for k in 0..n_components {
        if !(pca.eigenvalues[k] > RANK_TOLERANCE * top) {
            return Err(SeparationError::RankDeficient {
                rank: k,
                requested: n_components,
            });
        }
    }
    let basis = pca.components.columns(0, n_components).into_owned();
    let inv_sqrt = DMatrix::from_diagonal(&DVector::from_iterator(
        n_components,
        pca.eigenvalues[..n_components].iter().map(|l| 1.0 / l.sqrt()),
    ));
    let sqrt = DMatrix::from_diagonal(&DVector::from_iterator(
        n_components,
        pca.eigenvalues[..n_components].iter().map(|l| l.sqrt()),
    ));
    let whitening = &inv_sqrt * basis.transpose();
    let dewhitening = &basis * &sqrt;

    let mean = column_means(data);
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    // n_components by n_samples
    let z = &whitening * centered.transpose();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unmixing = DMatrix::<f64>::zeros(n_components, n_components);
    let mut fits = Vec::with_capacity(n_components);
    let inv_n = 1.0 / n as f64;

    for p in 0..n_components {
        let mut w = DVector::from_fn(n_components, |_, _| StandardNormal.sample(&mut rng));
        decorrelate(&mut w, &unmixing, p);
        w.normalize_mut();
        let mut fit = ComponentFit {
            iterations: 0,
            converged: false,
        };
        for iter in 1..=ICA_MAX_ITER {
            let proj = z.tr_mul(&w);
            let mut w_new = DVector::zeros(n_components);
            let mut mean_deriv = 0.0;
            for (t, &u) in proj.iter().enumerate() {
                let g = u.tanh();
                mean_deriv += 1.0 - g * g;
                w_new.axpy(g, &z.column(t), 1.0);
            }
            w_new *= inv_n;
            w_new.axpy(-mean_deriv * inv_n, &w, 1.0);
            decorrelate(&mut w_new, &unmixing, p);
            w_new.normalize_mut();
            let change = (1.0 - w_new.dot(&w).abs()).abs();
            w = w_new;
            fit.iterations = iter;
            if change < ICA_TOLERANCE {
                fit.converged = true;
                break;
            }
        }
        // sign convention: the largest-magnitude source sample is positive
        let source = z.tr_mul(&w);
        let (imax, _) = source.iamax_full();
        if source[imax] < 0.0 {
            w.neg_mut();
        }
        unmixing.set_row(p, &w.transpose());
        fits.push(fit);
    }

    Ok(IcaModel {
        mean,
        whitening,
        dewhitening,
        unmixing,
        fits,
    })
}

/// Gram-Schmidt against the first `count` rows of `basis`.
fn decorrelate(w: &mut DVector<f64>, basis: &DMatrix<f64>, count: usize) {
    for j in 0..count {
        let row = basis.row(j).transpose();
        let proj = w.dot(&row);
        w.axpy(-proj, &row, 1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::pearson_r;
    use std::f64::consts::PI;

    fn sources(n: usize) -> Vec<Vec<f64>> {
        let t = |i: usize| i as f64 / 500.0;
        let saw = (0..n).map(|i| (1.3 * t(i)).fract() * 2.0 - 1.0).collect();
        let sine = (0..n).map(|i| (2.0 * PI * 2.1 * t(i)).sin()).collect();
        let pulses = (0..n)
            .map(|i| if i % 173 < 6 { 3.0 } else { 0.0 })
            .collect();
        vec![saw, sine, pulses]
    }

    /// Best |r| assignment over all permutations of recovered vs. true sources.
    fn best_match(recovered: &DMatrix<f64>, truth: &[Vec<f64>]) -> f64 {
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        perms
            .iter()
            .map(|perm| {
                (0..3)
                    .map(|k| {
                        let rec: Vec<f64> = recovered.column(k).iter().copied().collect();
                        pearson_r(&rec, &truth[perm[k]]).unwrap().abs()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn recovers_mixed_sources() {
        let s = sources(5000);
        let a = [[1.0, 0.5, 0.3], [0.4, 1.2, -0.6], [-0.3, 0.8, 1.0]];
        let x = DMatrix::from_fn(5000, 3, |i, c| (0..3).map(|k| a[c][k] * s[k][i]).sum());
        let model = fastica(&x, 3, 11).unwrap();
        assert!(model.converged());
        let rec = model.transform(&x);
        assert!(best_match(&rec, &s) >= 0.95);

        // decorrelated outputs
        for i in 0..3 {
            for j in (i + 1)..3 {
                let a: Vec<f64> = rec.column(i).iter().copied().collect();
                let b: Vec<f64> = rec.column(j).iter().copied().collect();
                assert!(pearson_r(&a, &b).unwrap().abs() < 1e-3);
            }
        }
        let rows = &model.unmixing * model.unmixing.transpose();
        assert!((rows - DMatrix::identity(3, 3)).amax() < 1e-6);
    }

    #[test]
    fn identity_mixing_recovers_inputs() {
        let s = sources(4000);
        let x = DMatrix::from_fn(4000, 3, |i, c| s[c][i]);
        let rec = fastica(&x, 3, 5).unwrap().transform(&x);
        assert!(best_match(&rec, &s) >= 0.95);
    }

    #[test]
    fn channel_reordering_invariance() {
        let s = sources(5000);
        let a = [[1.0, 0.5, 0.3], [0.4, 1.2, -0.6], [-0.3, 0.8, 1.0]];
        let x = DMatrix::from_fn(5000, 3, |i, c| (0..3).map(|k| a[c][k] * s[k][i]).sum());
        let reordered = DMatrix::from_fn(5000, 3, |i, c| x[(i, [2, 0, 1][c])]);
        let r1 = fastica(&x, 3, 3).unwrap().transform(&x);
        let r2 = fastica(&reordered, 3, 3).unwrap().transform(&reordered);
        let truth: Vec<Vec<f64>> = (0..3).map(|k| r1.column(k).iter().copied().collect()).collect();
        assert!(best_match(&r2, &truth) >= 0.95);
    }

    #[test]
    fn rank_deficient_input_is_rejected() {
        let s = sources(1000);
        let x = DMatrix::from_fn(1000, 3, |i, c| match c {
            0 => s[0][i],
            1 => s[1][i],
            _ => s[0][i] + s[1][i],
        });
        assert!(matches!(
            fastica(&x, 3, 1),
            Err(SeparationError::RankDeficient { .. })
        ));
        assert!(fastica(&x, 2, 1).is_ok());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let s = sources(2000);
        let x = DMatrix::from_fn(2000, 3, |i, c| s[c][i] + 0.3 * s[(c + 1) % 3][i]);
        assert_eq!(fastica(&x, 3, 9).unwrap(), fastica(&x, 3, 9).unwrap());
    }
}
