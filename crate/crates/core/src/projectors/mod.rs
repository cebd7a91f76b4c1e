//! Dimensionality reduction fitted on the warm-up window, plus the per-chunk
//! centroid-distance descriptor.
//!
//! For a SOM the codebooks are the cluster centres and distances are taken in
//! input space. PCA and kernel PCA get their centres from k-means over the
//! projected warm-up window, and distances are taken in latent space.

mod cache;
mod kmeans;
mod kpca;
mod pca;
mod som;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cache::{decode_bundle, encode_bundle, ModelBundle};
pub use kmeans::{kmeans_fit, KMeansFit, MAX_ITERATIONS as KMEANS_MAX_ITERATIONS};
pub use kpca::{centered_gram, default_gamma, KpcaModel, KpcaParams};
pub use pca::PcaModel;
pub use som::{SomModel, SomParams};

use crate::error::{Error, Result};
use crate::linalg::sq_dist;
use crate::streamgen::{Chunk, SampleSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProjectorKind {
    #[serde(rename = "SOM")]
    Som,
    #[serde(rename = "PCA")]
    Pca,
    #[serde(rename = "KernelPCA")]
    Kpca,
}

impl fmt::Display for ProjectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Som => "SOM",
            Self::Pca => "PCA",
            Self::Kpca => "KernelPCA",
        })
    }
}

impl ProjectorKind {
    /// Lower-case name used in config files.
    pub fn config_name(self) -> &'static str {
        match self {
            Self::Som => "som",
            Self::Pca => "pca",
            Self::Kpca => "kpca",
        }
    }
}

impl FromStr for ProjectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "som" => Ok(Self::Som),
            "pca" => Ok(Self::Pca),
            "kpca" | "kernelpca" | "kernel_pca" => Ok(Self::Kpca),
            other => Err(Error::config(format!("unknown projector {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projector {
    Som(SomModel),
    Pca(PcaModel),
    Kpca(KpcaModel),
}

impl Projector {
    pub fn kind(&self) -> ProjectorKind {
        match self {
            Self::Som(_) => ProjectorKind::Som,
            Self::Pca(_) => ProjectorKind::Pca,
            Self::Kpca(_) => ProjectorKind::Kpca,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Self::Som(m) => m.dim(),
            Self::Pca(m) => m.input_dim(),
            Self::Kpca(m) => m.input_dim(),
        }
    }

    /// Dimension of the space centroids live in.
    pub fn comparison_dim(&self) -> usize {
        match self {
            Self::Som(m) => m.dim(),
            Self::Pca(m) => m.latent_dim(),
            Self::Kpca(m) => m.latent_dim(),
        }
    }

    /// Latent representation: the BMU's grid position for a SOM, the latent
    /// coordinates otherwise.
    pub fn project(&self, x: &[f32]) -> Result<Vec<f64>> {
        match self {
            Self::Som(m) => {
                let (bmu, _) = m.bmu(x)?;
                let (r, c) = m.grid_position(bmu);
                Ok(vec![r as f64, c as f64])
            }
            Self::Pca(m) => m.project(x),
            Self::Kpca(m) => m.project(x),
        }
    }

    /// The point compared against centroids: the raw sample for a SOM, the
    /// projection otherwise.
    pub fn comparison_point(&self, x: &[f32]) -> Result<Vec<f64>> {
        match self {
            Self::Som(m) => {
                if x.len() != m.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: m.dim(),
                        found: x.len(),
                    });
                }
                Ok(x.iter().map(|&v| f64::from(v)).collect())
            }
            _ => self.project(x),
        }
    }
}

/// Cluster representatives, all of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    dim: usize,
    centroids: Vec<Vec<f64>>,
}

impl CentroidSet {
    pub fn new(centroids: Vec<Vec<f64>>) -> Result<Self> {
        if centroids.len() < 2 {
            return Err(Error::config(format!("need at least 2 centroids, got {}", centroids.len())));
        }
        let dim = centroids[0].len();
        if let Some(c) = centroids.iter().find(|c| c.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: c.len(),
            });
        }
        if centroids.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self { dim, centroids })
    }

    /// Codebooks of a SOM, in unit order.
    pub fn from_som(model: &SomModel) -> Result<Self> {
        Self::new(model.codebooks().map(<[f64]>::to_vec).collect())
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.centroids[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.centroids.iter().map(Vec::as_slice)
    }
}

/// `K × n` matrix of centroid distances for one chunk, stored column by column:
/// column `j` holds the distances from point `j` to every centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceDescriptor {
    pub chunk_index: usize,
    k: usize,
    columns: Vec<f64>,
}

impl DistanceDescriptor {
    /// Distances from already-embedded points.
    pub fn from_points<P: AsRef<[f64]> + Sync>(
        chunk_index: usize,
        points: &[P],
        centroids: &CentroidSet,
    ) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| p.as_ref().len() != centroids.dim()) {
            return Err(Error::DimensionMismatch {
                expected: centroids.dim(),
                found: p.as_ref().len(),
            });
        }
        let columns: Vec<f64> = points
            .par_iter()
            .flat_map_iter(|p| centroids.iter().map(move |c| sq_dist(p.as_ref(), c).sqrt()))
            .collect();
        Ok(Self {
            chunk_index,
            k: centroids.len(),
            columns,
        })
    }

    pub fn from_columns(chunk_index: usize, k: usize, columns: Vec<f64>) -> Result<Self> {
        if k == 0 || !columns.len().is_multiple_of(k) {
            return Err(Error::format("distance descriptor", "column data is not a multiple of K"));
        }
        if columns.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self {
            chunk_index,
            k,
            columns,
        })
    }

    /// Number of centroids (rows).
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of points (columns).
    pub fn n_points(&self) -> usize {
        self.columns.len() / self.k
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j * self.k..(j + 1) * self.k]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.columns.chunks_exact(self.k)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.columns[col * self.k + row]
    }

    /// Mean over every entry.
    pub fn mean(&self) -> f64 {
        self.columns.iter().sum::<f64>() / self.columns.len().max(1) as f64
    }
}

/// Builds the descriptor of `chunk` by embedding each of its samples with
/// `projector` and measuring distances to `centroids`.
pub fn centroid_distances<S: SampleSource + Sync + ?Sized>(
    source: &S,
    chunk: &Chunk,
    projector: &Projector,
    centroids: &CentroidSet,
) -> Result<DistanceDescriptor> {
    if projector.comparison_dim() != centroids.dim() {
        return Err(Error::DimensionMismatch {
            expected: projector.comparison_dim(),
            found: centroids.dim(),
        });
    }
    let points = chunk
        .range()
        .into_par_iter()
        .map(|i| projector.comparison_point(source.sample(i)))
        .collect::<Result<Vec<_>>>()?;
    DistanceDescriptor::from_points(chunk.index, &points, centroids)
}

/// Fits the centroids that go with a projector: the SOM's codebooks, or k-means
/// over the projected window.
pub fn fit_centroids(projector: &Projector, window: &[&[f32]], k: usize, seed: u64) -> Result<CentroidSet> {
    match projector {
        Projector::Som(m) => CentroidSet::from_som(m),
        _ => {
            let latent = window
                .par_iter()
                .map(|x| projector.project(x))
                .collect::<Result<Vec<_>>>()?;
            Ok(kmeans_fit(&latent, k, seed)?.centroids)
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::linalg::{symmetric_eigen, SquareMatrix};

    #[test]
    fn som_projection_is_bmu_position() {
        let som = SomModel::from_parts(1, 2, 2, vec![0.0, 0.0, 1.0, 1.0], SomParams::default()).unwrap();
        let p = Projector::Som(som);
        assert_eq!(p.project(&[0.1, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(p.project(&[0.9, 0.8]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn distance_entries() {
        let cs = CentroidSet::new(vec![vec![0.0], vec![3.0]]).unwrap();
        let d = DistanceDescriptor::from_points(0, &[vec![1.0], vec![3.0]], &cs).unwrap();
        assert_eq!(d.column(0), &[1.0, 2.0]);
        assert_eq!(d.get(1, 1), 0.0);
        assert_eq!((d.k(), d.n_points()), (2, 2));
        assert!(DistanceDescriptor::from_points(0, &[vec![1.0, 2.0]], &cs).is_err());
    }

    fn random_orthogonal(n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        let mut m = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v = rng.gen_range(-1.0..1.0);
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        symmetric_eigen(&m).unwrap().vectors
    }

    fn apply(q: &[Vec<f64>], x: &[f64], shift: &[f64]) -> Vec<f64> {
        q.iter().zip(shift).map(|(row, s)| crate::linalg::dot(row, x) + s).collect()
    }

    #[test]
    fn descriptor_ignores_rigid_motions() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dim = 4;
        let pts: Vec<Vec<f64>> = (0..30).map(|_| (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let cents: Vec<Vec<f64>> = (0..7).map(|_| (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let base = DistanceDescriptor::from_points(0, &pts, &CentroidSet::new(cents.clone()).unwrap()).unwrap();

        let q = random_orthogonal(dim, &mut rng);
        let zero = vec![0.0; dim];
        let shift: Vec<f64> = (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect();
        for t in [&zero, &shift] {
            let moved_pts: Vec<Vec<f64>> = pts.iter().map(|p| apply(&q, p, t)).collect();
            let moved_cents: Vec<Vec<f64>> = cents.iter().map(|c| apply(&q, c, t)).collect();
            let moved =
                DistanceDescriptor::from_points(0, &moved_pts, &CentroidSet::new(moved_cents).unwrap()).unwrap();
            for (a, b) in base.columns().flatten().zip(moved.columns().flatten()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn som_descriptor_uses_input_space() {
        use crate::streamgen::Chunk;
        struct Fixed(Vec<f32>);
        impl SampleSource for Fixed {
            fn len(&self) -> usize {
                self.0.len() / 2
            }
            fn dim(&self) -> usize {
                2
            }
            fn sample(&self, i: usize) -> &[f32] {
                &self.0[i * 2..i * 2 + 2]
            }
        }
        let som = SomModel::from_parts(2, 2, 2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0], SomParams::default())
            .unwrap();
        let cents = CentroidSet::from_som(&som).unwrap();
        let proj = Projector::Som(som);
        let src = Fixed(vec![0.0, 0.0, 1.0, 1.0, 0.5, 0.5]);
        let chunk = Chunk {
            index: 3,
            start: 1,
            end: 3,
            boundary_inside: false,
        };
        let d = centroid_distances(&src, &chunk, &proj, &cents).unwrap();
        assert_eq!(d.chunk_index, 3);
        assert_eq!(d.n_points(), 2);
        assert_eq!(d.column(0)[3], 0.0);
        let h = 0.5f64.sqrt();
        assert!(d.column(1).iter().all(|v| (v - h).abs() < 1e-15));
    }

    #[test]
    fn projector_names() {
        for k in [ProjectorKind::Som, ProjectorKind::Pca, ProjectorKind::Kpca] {
            assert_eq!(k.to_string().parse::<ProjectorKind>().unwrap(), k);
        }
        assert!("tsne".parse::<ProjectorKind>().is_err());
    }
}
