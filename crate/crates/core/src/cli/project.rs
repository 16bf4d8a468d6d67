//! Two-component PCA of pooled embeddings.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

/// Fitted projection onto the two leading principal axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca2 {
    pub mean: Vec<f64>,
    /// Unit axes ordered by descending variance; the largest-magnitude
    /// loading of each is positive. Missing axes (1-D input) are zero.
    pub axes: [Vec<f64>; 2],
    pub variances: [f64; 2],
}

impl Pca2 {
    pub fn fit(points: &[Vec<f64>]) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::Usage(format!("PCA needs at least 3 points, got {}", points.len())));
        }
        let d = points[0].len();
        if d == 0 || points.iter().any(|p| p.len() != d) {
            return Err(Error::Shape("PCA points must share a non-zero dimension".into()));
        }
        let n = points.len() as f64;
        let mut mean = vec![0.0; d];
        for p in points {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);

        let mut cov = DMatrix::<f64>::zeros(d, d);
        for p in points {
            for i in 0..d {
                let ci = p[i] - mean[i];
                for j in i..d {
                    cov[(i, j)] += ci * (p[j] - mean[j]);
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                let v = cov[(i, j)] / (n - 1.0);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }

        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

        let axis = |rank: usize| -> (Vec<f64>, f64) {
            let Some(&c) = order.get(rank) else {
                return (vec![0.0; d], 0.0);
            };
            let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            let lead = v
                .iter()
                .enumerate()
                .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            (v, eig.eigenvalues[c].max(0.0))
        };
        let (a0, v0) = axis(0);
        let (a1, v1) = axis(1);
        Ok(Self {
            mean,
            axes: [a0, a1],
            variances: [v0, v1],
        })
    }

    pub fn project(&self, p: &[f64]) -> [f64; 2] {
        let c: Vec<f64> = p.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        [crate::numerics::dot(&c, &self.axes[0]), crate::numerics::dot(&c, &self.axes[1])]
    }
}

/// Fits on `points` and returns their coordinates.
pub fn pca_2d(points: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let pca = Pca2::fit(points)?;
    Ok(points.iter().map(|p| pca.project(p)).collect())
}
