use crate::error::{Error, Result};
use crate::linalg::{dot, symmetric_eigen, SquareMatrix};

/// Principal axes of a training window.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    components: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn from_parts(mean: Vec<f64>, components: Vec<Vec<f64>>, eigenvalues: Vec<f64>) -> Result<Self> {
        if components.len() != eigenvalues.len() {
            return Err(Error::format("PCA model", "component and eigenvalue counts differ"));
        }
        if let Some(c) = components.iter().find(|c| c.len() != mean.len()) {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: c.len(),
            });
        }
        Ok(Self {
            mean,
            components,
            eigenvalues,
        })
    }

    /// Fits the top `latent_dim` axes of the sample covariance (denominator n − 1).
    pub fn fit(window: &[&[f32]], latent_dim: usize) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::config("PCA latent dimension must be at least 1"));
        }
        if window.len() <= latent_dim {
            return Err(Error::TooFewPoints {
                points: window.len(),
                k: latent_dim + 1,
            });
        }
        let dim = window[0].len();
        if latent_dim > dim {
            return Err(Error::config(format!("latent dimension {latent_dim} exceeds input dimension {dim}")));
        }
        let n = window.len() as f64;
        let mut mean = vec![0.0; dim];
        for x in window {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: x.len(),
                });
            }
            for (m, &v) in mean.iter_mut().zip(x.iter()) {
                *m += f64::from(v);
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);

        let mut cov = SquareMatrix::zeros(dim);
        let mut centered = vec![0.0; dim];
        for x in window {
            for ((c, &v), m) in centered.iter_mut().zip(x.iter()).zip(&mean) {
                *c = f64::from(v) - m;
            }
            for i in 0..dim {
                let ci = centered[i];
                if ci == 0.0 {
                    continue;
                }
                for j in i..dim {
                    cov.set(i, j, cov.get(i, j) + ci * centered[j]);
                }
            }
        }
        for i in 0..dim {
            for j in i..dim {
                let v = cov.get(i, j) / (n - 1.0);
                cov.set(i, j, v);
                cov.set(j, i, v);
            }
        }
        if (0..dim).all(|i| cov.get(i, i) == 0.0) {
            return Err(Error::DegenerateWindow);
        }

        let eig = symmetric_eigen(&cov)?;
        Ok(Self {
            mean,
            components: eig.vectors.into_iter().take(latent_dim).collect(),
            eigenvalues: eig.values.into_iter().take(latent_dim).map(|v| v.max(0.0)).collect(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.components.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn project(&self, x: &[f32]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(&v, m)| f64::from(v) - m).collect();
        Ok(self.components.iter().map(|c| dot(c, &centered)).collect())
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::linalg::sq_dist;

    fn refs(v: &[Vec<f32>]) -> Vec<&[f32]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn axis_aligned_points() {
        let pts: Vec<Vec<f32>> = [-2.0f32, -1.0, 0.5, 3.0].iter().map(|&x| vec![x, 0.0]).collect();
        let pca = PcaModel::fit(&refs(&pts), 2).unwrap();
        assert!((pca.components()[0][0].abs() - 1.0).abs() < 1e-12);
        assert!(pca.components()[0][1].abs() < 1e-12);
        assert_eq!(pca.eigenvalues()[1], 0.0);
    }

    #[test]
    fn projection_is_a_dot_product() {
        let pca = PcaModel::from_parts(vec![0.0, 0.0], vec![vec![1.0, 0.0]], vec![1.0]).unwrap();
        assert_eq!(pca.project(&[3.0, 4.0]).unwrap(), vec![3.0]);
        assert!(pca.project(&[3.0]).is_err());
    }

    #[test]
    fn latent_variance_matches_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f32>> = (0..300)
            .map(|_| {
                let a: f32 = rng.gen_range(-1.0..1.0);
                let b: f32 = rng.gen_range(-1.0..1.0);
                vec![a * 3.0, a + b, b * 0.5, rng.gen_range(-0.1..0.1)]
            })
            .collect();
        let window = refs(&pts);
        let pca = PcaModel::fit(&window, 3).unwrap();
        let latent: Vec<Vec<f64>> = window.iter().map(|x| pca.project(x).unwrap()).collect();
        let n = latent.len() as f64;
        for j in 0..3 {
            let mean = latent.iter().map(|z| z[j]).sum::<f64>() / n;
            let var = latent.iter().map(|z| (z[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((var - pca.eigenvalues()[j]).abs() < 1e-8, "axis {j}");
            assert!(mean.abs() < 1e-10);
        }
        for (i, a) in pca.components().iter().enumerate() {
            for (j, b) in pca.components().iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(a, b) - want).abs() < 1e-8);
            }
            let big = a.iter().fold(0.0f64, |m, v| if v.abs() > m.abs() { *v } else { m });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn planar_set_keeps_pairwise_distances() {
        // a plane spanned by two orthogonal directions inside 784-D
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dim = 784;
        let u: Vec<f32> = (0..dim).map(|i| if i % 2 == 0 { 0.05 } else { 0.0 }).collect();
        let v: Vec<f32> = (0..dim).map(|i| if i % 2 == 1 { 0.05 } else { 0.0 }).collect();
        let pts: Vec<Vec<f32>> = (0..40)
            .map(|_| {
                let (a, b): (f32, f32) = (rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
                (0..dim).map(|k| 0.5 + a * u[k] + b * v[k]).collect()
            })
            .collect();
        let window = refs(&pts);
        let pca = PcaModel::fit(&window, 2).unwrap();
        let latent: Vec<Vec<f64>> = window.iter().map(|x| pca.project(x).unwrap()).collect();
        for i in 0..pts.len() {
            for j in 0..i {
                let input = crate::linalg::sq_dist_f32(&pts[i], &pts[j]).sqrt();
                let lat = sq_dist(&latent[i], &latent[j]).sqrt();
                assert!((input - lat).abs() < 1e-8, "{input} vs {lat}");
            }
        }
    }

    #[test]
    fn degenerate_and_small_windows() {
        let same = vec![vec![1.0f32, 2.0]; 4];
        assert!(matches!(PcaModel::fit(&refs(&same), 1), Err(Error::DegenerateWindow)));
        let two = vec![vec![1.0f32, 2.0], vec![0.0, 0.0]];
        assert!(matches!(PcaModel::fit(&refs(&two), 2), Err(Error::TooFewPoints { .. })));
    }
}
