//! Rectangular self-organizing map trained with the classic online rule.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sq_dist;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SomParams {
    /// Initial learning rate α₀, decayed linearly to 0.
    pub learning_rate: f64,
    /// Initial neighbourhood radius σ₀. `None` means `max(rows, cols) / 2`.
    pub radius: Option<f64>,
    /// Floor for the decayed radius.
    pub min_radius: f64,
    pub epochs: usize,
}

impl Default for SomParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            radius: None,
            min_radius: 0.5,
            epochs: 10,
        }
    }
}

impl SomParams {
    pub fn initial_radius(&self, rows: usize, cols: usize) -> f64 {
        self.radius.unwrap_or(rows.max(cols) as f64 / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SomModel {
    rows: usize,
    cols: usize,
    dim: usize,
    /// `rows * cols` codebooks of length `dim`, unit `u` at grid `(u / cols, u % cols)`.
    codebooks: Vec<f64>,
    params: SomParams,
}

impl SomModel {
    pub fn from_parts(rows: usize, cols: usize, dim: usize, codebooks: Vec<f64>, params: SomParams) -> Result<Self> {
        if codebooks.len() != rows * cols * dim {
            return Err(Error::DimensionMismatch {
                expected: rows * cols * dim,
                found: codebooks.len(),
            });
        }
        if codebooks.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self {
            rows,
            cols,
            dim,
            codebooks,
            params,
        })
    }

    pub fn fit(window: &[&[f32]], rows: usize, cols: usize, params: SomParams, seed: u64) -> Result<Self> {
        Self::fit_with_history(window, rows, cols, params, seed).map(|(m, _)| m)
    }

    /// Trains a map and also returns the mean BMU distance seen during each epoch
    /// (measured before each update).
    pub fn fit_with_history(
        window: &[&[f32]],
        rows: usize,
        cols: usize,
        params: SomParams,
        seed: u64,
    ) -> Result<(Self, Vec<f64>)> {
        let mut model = Self::init(window, rows, cols, params, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let dim = model.dim;
        let units = rows * cols;
        let total_steps = (params.epochs * window.len()) as f64;
        let sigma0 = params.initial_radius(rows, cols);
        let positions: Vec<(f64, f64)> = (0..units)
            .map(|u| {
                let (r, c) = model.grid_position(u);
                (r as f64, c as f64)
            })
            .collect();

        let mut order: Vec<usize> = (0..window.len()).collect();
        let mut x = vec![0.0f64; dim];
        let mut history = Vec::with_capacity(params.epochs);
        let mut step = 0usize;
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            let mut err_sum = 0.0;
            for &i in &order {
                for (dst, &src) in x.iter_mut().zip(window[i]) {
                    *dst = f64::from(src);
                }
                let progress = step as f64 / total_steps;
                let alpha = params.learning_rate * (1.0 - progress);
                let sigma = (sigma0 * (1.0 - progress)).max(params.min_radius);
                let (bmu, d2) = model.bmu_f64(&x);
                err_sum += d2.sqrt();
                let (br, bc) = positions[bmu];
                let denom = 2.0 * sigma * sigma;
                for (u, &(r, c)) in positions.iter().enumerate() {
                    let g2 = (r - br) * (r - br) + (c - bc) * (c - bc);
                    let rate = alpha * (-g2 / denom).exp();
                    if rate == 0.0 {
                        continue;
                    }
                    let w = &mut model.codebooks[u * dim..(u + 1) * dim];
                    for (wk, &xk) in w.iter_mut().zip(&x) {
                        *wk += rate * (xk - *wk);
                    }
                }
                step += 1;
            }
            history.push(err_sum / window.len() as f64);
        }
        Ok((model, history))
    }

    /// Codebooks set to random window samples, distinct when the window is large enough.
    pub fn init(window: &[&[f32]], rows: usize, cols: usize, params: SomParams, seed: u64) -> Result<Self> {
        if window.is_empty() {
            return Err(Error::EmptyWindow);
        }
        if rows < 2 || cols < 2 {
            return Err(Error::config(format!("SOM grid {rows}x{cols} must be at least 2x2")));
        }
        let dim = window[0].len();
        if let Some(bad) = window.iter().find(|w| w.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        let units = rows * cols;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picks: Vec<usize> = if window.len() >= units {
            rand::seq::index::sample(&mut rng, window.len(), units).into_vec()
        } else {
            (0..units).map(|_| rng.gen_range(0..window.len())).collect()
        };
        let codebooks = picks
            .iter()
            .flat_map(|&i| window[i].iter().map(|&v| f64::from(v)))
            .collect();
        Ok(Self {
            rows,
            cols,
            dim,
            codebooks,
            params,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn units(&self) -> usize {
        self.rows * self.cols
    }

    pub fn params(&self) -> &SomParams {
        &self.params
    }

    pub fn codebook(&self, unit: usize) -> &[f64] {
        &self.codebooks[unit * self.dim..(unit + 1) * self.dim]
    }

    pub fn codebooks(&self) -> impl Iterator<Item = &[f64]> {
        self.codebooks.chunks_exact(self.dim)
    }

    pub fn raw_codebooks(&self) -> &[f64] {
        &self.codebooks
    }

    pub fn grid_position(&self, unit: usize) -> (usize, usize) {
        (unit / self.cols, unit % self.cols)
    }

    fn bmu_f64(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (u, w) in self.codebooks().enumerate() {
            let d = sq_dist(x, w);
            // strict comparison keeps the lowest index on ties
            if d < best.1 {
                best = (u, d);
            }
        }
        best
    }

    /// Best-matching unit and its squared distance.
    pub fn bmu(&self, x: &[f32]) -> Result<(usize, f64)> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        let x: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
        Ok(self.bmu_f64(&x))
    }

    /// Mean Euclidean distance from each window sample to its BMU.
    pub fn quantization_error(&self, window: &[&[f32]]) -> Result<f64> {
        let mut sum = 0.0;
        for x in window {
            sum += self.bmu(x)?.1.sqrt();
        }
        Ok(sum / window.len().max(1) as f64)
    }
}

#[cfg(test)]
mod tests {
    use rand_distr::{Distribution, Normal};

    use super::*;

    fn two_clusters(n: usize, seed: u64) -> Vec<Vec<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0f32, 0.05).unwrap();
        (0..n)
            .map(|i| {
                let c = if i % 2 == 0 { 0.2 } else { 0.8 };
                (0..4).map(|_| c + noise.sample(&mut rng)).collect()
            })
            .collect()
    }

    fn refs(v: &[Vec<f32>]) -> Vec<&[f32]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn collapses_onto_repeated_point() {
        let p = vec![0.3f32, 0.7, 0.1];
        let mut window = vec![p.clone(); 5];
        // init needs something to pick from; all identical anyway
        window.push(p.clone());
        let params = SomParams {
            epochs: 200,
            ..SomParams::default()
        };
        let som = SomModel::fit(&refs(&window), 3, 3, params, 1).unwrap();
        for w in som.codebooks() {
            for (a, &b) in w.iter().zip(&p) {
                assert!((a - f64::from(b)).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn training_reduces_quantization_error() {
        // random-sample init leaves uneven coverage of a uniform square
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<Vec<f32>> = (0..500).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let window = refs(&data);
        let params = SomParams::default();
        let init = SomModel::init(&window, 4, 4, params, 9).unwrap();
        let (trained, history) = SomModel::fit_with_history(&window, 4, 4, params, 9).unwrap();
        let before = init.quantization_error(&window).unwrap();
        let after = trained.quantization_error(&window).unwrap();
        assert!(after <= before, "{after} > {before}");
        assert!(history.last().unwrap() <= history.first().unwrap());
    }

    #[test]
    fn deterministic() {
        let data = two_clusters(50, 4);
        let window = refs(&data);
        let a = SomModel::fit(&window, 3, 2, SomParams::default(), 42).unwrap();
        let b = SomModel::fit(&window, 3, 2, SomParams::default(), 42).unwrap();
        assert_eq!(a, b);
        let c = SomModel::fit(&window, 3, 2, SomParams::default(), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bmu_prefers_nearest_then_lowest_index() {
        let som = SomModel::from_parts(2, 2, 2, vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 5.0, 5.0], SomParams::default())
            .unwrap();
        assert_eq!(som.bmu(&[0.1, 0.0]).unwrap().0, 0);
        assert_eq!(som.bmu(&[0.9, 1.2]).unwrap().0, 1);
        assert_eq!(som.grid_position(3), (1, 1));
        assert!(matches!(som.bmu(&[0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            SomModel::fit(&[], 2, 2, SomParams::default(), 0),
            Err(Error::EmptyWindow)
        ));
        let p = [0.0f32];
        assert!(SomModel::fit(&[&p], 1, 2, SomParams::default(), 0).is_err());
    }
}
