//! Kernel PCA with an RBF kernel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sq_dist_f32, symmetric_eigen, SquareMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpcaParams {
    pub latent_dim: usize,
    /// RBF bandwidth. `None` selects [`default_gamma`].
    pub gamma: Option<f64>,
    /// Keep at most this many window samples as kernel centres.
    pub max_train: Option<usize>,
}

impl Default for KpcaParams {
    fn default() -> Self {
        Self {
            latent_dim: 2,
            gamma: None,
            max_train: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KpcaModel {
    dim: usize,
    training_points: Vec<f32>,
    gamma: f64,
    eigenvalues: Vec<f64>,
    /// One coefficient column per latent axis: eigenvector scaled by 1/√λ.
    alphas: Vec<Vec<f64>>,
    kernel_row_means: Vec<f64>,
    kernel_grand_mean: f64,
}

/// `1 / (dim · mean per-feature variance)` over the window.
pub fn default_gamma(window: &[&[f32]]) -> Result<f64> {
    let n = window.len();
    if n < 2 {
        return Err(Error::TooFewPoints { points: n, k: 2 });
    }
    let dim = window[0].len();
    let mut mean = vec![0.0f64; dim];
    for x in window {
        for (m, &v) in mean.iter_mut().zip(x.iter()) {
            *m += f64::from(v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = 0.0;
    for x in window {
        for (m, &v) in mean.iter().zip(x.iter()) {
            var += (f64::from(v) - m).powi(2);
        }
    }
    let mean_var = var / (n as f64 * dim as f64);
    if mean_var == 0.0 {
        return Err(Error::DegenerateWindow);
    }
    Ok(1.0 / (dim as f64 * mean_var))
}

#[inline]
fn rbf(gamma: f64, a: &[f32], b: &[f32]) -> f64 {
    (-gamma * sq_dist_f32(a, b)).exp()
}

/// Double-centred RBF Gram matrix plus its row means and grand mean.
pub fn centered_gram(points: &[&[f32]], gamma: f64) -> (SquareMatrix, Vec<f64>, f64) {
    let n = points.len();
    let mut k = SquareMatrix::zeros(n);
    for i in 0..n {
        k.set(i, i, 1.0);
        for j in 0..i {
            let v = rbf(gamma, points[i], points[j]);
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    let row_means: Vec<f64> = (0..n).map(|i| k.row(i).iter().sum::<f64>() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..=i {
            let v = k.get(i, j) - row_means[i] - row_means[j] + grand;
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    (k, row_means, grand)
}

impl KpcaModel {
    pub fn fit(window: &[&[f32]], params: KpcaParams, seed: u64) -> Result<Self> {
        let d = params.latent_dim;
        if d == 0 {
            return Err(Error::config("kernel PCA latent dimension must be at least 1"));
        }
        if window.len() <= d {
            return Err(Error::TooFewPoints {
                points: window.len(),
                k: d + 1,
            });
        }
        let dim = window[0].len();
        if let Some(bad) = window.iter().find(|w| w.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        let points: Vec<&[f32]> = match params.max_train {
            Some(cap) if cap < window.len() => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut picks = rand::seq::index::sample(&mut rng, window.len(), cap).into_vec();
                picks.sort_unstable();
                picks.into_iter().map(|i| window[i]).collect()
            }
            _ => window.to_vec(),
        };
        if points.len() <= d {
            return Err(Error::TooFewPoints {
                points: points.len(),
                k: d + 1,
            });
        }
        let gamma = match params.gamma {
            Some(g) if g > 0.0 && g.is_finite() => g,
            Some(g) => return Err(Error::config(format!("gamma must be positive, got {g}"))),
            None => default_gamma(&points)?,
        };

        let (gram, row_means, grand) = centered_gram(&points, gamma);
        let positive_floor = 1e-10 * gram.frobenius();
        let eig = symmetric_eigen(&gram)?;
        let available = eig.values.iter().filter(|&&v| v > positive_floor).count();
        if available < d {
            return Err(Error::RankDeficient { requested: d, available });
        }
        let eigenvalues: Vec<f64> = eig.values[..d].to_vec();
        let alphas = eig.vectors[..d]
            .iter()
            .zip(&eigenvalues)
            .map(|(v, &l)| v.iter().map(|x| x / l.sqrt()).collect())
            .collect();
        Ok(Self {
            dim,
            training_points: points.iter().flat_map(|p| p.iter().copied()).collect(),
            gamma,
            eigenvalues,
            alphas,
            kernel_row_means: row_means,
            kernel_grand_mean: grand,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        dim: usize,
        training_points: Vec<f32>,
        gamma: f64,
        eigenvalues: Vec<f64>,
        alphas: Vec<Vec<f64>>,
        kernel_row_means: Vec<f64>,
        kernel_grand_mean: f64,
    ) -> Result<Self> {
        let n = kernel_row_means.len();
        if training_points.len() != n * dim
            || alphas.len() != eigenvalues.len()
            || alphas.iter().any(|a| a.len() != n)
        {
            return Err(Error::format("kernel PCA model", "inconsistent sizes"));
        }
        Ok(Self {
            dim,
            training_points,
            gamma,
            eigenvalues,
            alphas,
            kernel_row_means,
            kernel_grand_mean,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.dim
    }

    pub fn latent_dim(&self) -> usize {
        self.alphas.len()
    }

    pub fn num_training(&self) -> usize {
        self.kernel_row_means.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn alphas(&self) -> &[Vec<f64>] {
        &self.alphas
    }

    pub fn kernel_row_means(&self) -> &[f64] {
        &self.kernel_row_means
    }

    pub fn kernel_grand_mean(&self) -> f64 {
        self.kernel_grand_mean
    }

    pub fn training_points(&self) -> &[f32] {
        &self.training_points
    }

    pub fn training_point(&self, i: usize) -> &[f32] {
        &self.training_points[i * self.dim..(i + 1) * self.dim]
    }

    /// Latent coordinates of training point `i` as given by the eigen-decomposition
    /// (`√λ · v`), without evaluating any kernel.
    pub fn training_embedding(&self, i: usize) -> Vec<f64> {
        self.alphas
            .iter()
            .zip(&self.eigenvalues)
            .map(|(a, &l)| a[i] * l)
            .collect()
    }

    pub fn project(&self, x: &[f32]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        let n = self.num_training();
        let kx: Vec<f64> = (0..n).map(|i| rbf(self.gamma, x, self.training_point(i))).collect();
        let kx_mean = kx.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = kx
            .iter()
            .zip(&self.kernel_row_means)
            .map(|(k, r)| k - kx_mean - r + self.kernel_grand_mean)
            .collect();
        Ok(self
            .alphas
            .iter()
            .map(|a| a.iter().zip(&centered).map(|(x, y)| x * y).sum())
            .collect())
    }
}
