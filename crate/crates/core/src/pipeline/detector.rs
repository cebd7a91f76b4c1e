use std::ops::Range;

use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::projectors::{
    centroid_distances, fit_centroids, CentroidSet, KpcaModel, ModelBundle, PcaModel, Projector, ProjectorKind,
    SomModel,
};
use crate::stats::{Monitor, PValueRecord};
use crate::streamgen::{Chunk, SampleSource};
use crate::topology::{chunk_diagrams_with, persistent_entropy, PeVector, PersistenceDiagram, ScalarRipsH0};

/// Seed for model fitting, decorrelated from the stream seed.
fn model_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

/// Identifies the models a config would fit on this warm-up window.
pub fn model_fingerprint<S: SampleSource + ?Sized>(config: &RunConfig, source: &S, warmup: Range<usize>) -> String {
    let mut h = Sha256::new();
    let settings = format!(
        "{}|{}x{}|{:?}|d={}|gamma={:?}|max_train={:?}|k={}|seed={}|warmup={:?}|dim={}",
        config.projector,
        config.grid_rows,
        config.grid_cols,
        config.som,
        config.latent_dim,
        config.kpca_gamma,
        config.kpca_max_train,
        config.kmeans_k,
        config.seed,
        warmup,
        source.dim()
    );
    h.update(settings.as_bytes());
    for i in warmup {
        for v in source.sample(i) {
            h.update(v.to_le_bytes());
        }
    }
    format!("{:x}", h.finalize())
}

/// Fits projector and centroids on `warmup`, reading nothing outside it.
pub fn fit_models<S: SampleSource + ?Sized>(
    config: &RunConfig,
    source: &S,
    warmup: Range<usize>,
    fingerprint: String,
) -> Result<ModelBundle> {
    if warmup.end > source.len() {
        return Err(Error::config(format!(
            "warm-up window ends at {} but the stream has {} samples",
            warmup.end,
            source.len()
        )));
    }
    let window: Vec<&[f32]> = warmup.map(|i| source.sample(i)).collect();
    let seed = model_seed(config.seed);
    let projector = match config.projector {
        ProjectorKind::Som => Projector::Som(SomModel::fit(&window, config.grid_rows, config.grid_cols, config.som, seed)?),
        ProjectorKind::Pca => Projector::Pca(PcaModel::fit(&window, config.latent_dim)?),
        ProjectorKind::Kpca => Projector::Kpca(KpcaModel::fit(&window, config.kpca_params(), seed)?),
    };
    let centroids = fit_centroids(&projector, &window, config.kmeans_k, seed.wrapping_add(2))?;
    Ok(ModelBundle {
        fingerprint,
        projector,
        centroids,
    })
}

#[derive(Debug, Clone)]
pub struct ChunkOutcome {
    pub chunk: Chunk,
    /// Mean of the chunk's distance descriptor.
    pub mean_distance: f64,
    pub pe: PeVector,
    /// `None` for the first chunk, which only becomes the reference.
    pub record: Option<PValueRecord>,
    pub diagrams: Option<Vec<PersistenceDiagram>>,
}

/// The online half of the procedure: fitted models plus the monitor state.
#[derive(Debug, Clone)]
pub struct Detector {
    projector: Projector,
    centroids: CentroidSet,
    monitor: Monitor,
    keep_diagrams: bool,
}

impl Detector {
    pub fn new(bundle: &ModelBundle, monitor: Monitor, keep_diagrams: bool) -> Self {
        Self {
            projector: bundle.projector.clone(),
            centroids: bundle.centroids.clone(),
            monitor,
            keep_diagrams,
        }
    }

    /// Reads the samples of `chunk` and nothing else.
    pub fn process_chunk<S: SampleSource + Sync + ?Sized>(&mut self, source: &S, chunk: &Chunk) -> Result<ChunkOutcome> {
        if chunk.end > source.len() {
            return Err(Error::format(
                "chunk",
                format!("chunk {} ends past the stream ({} samples)", chunk.index, source.len()),
            ));
        }
        let descriptor = centroid_distances(source, chunk, &self.projector, &self.centroids)?;
        let diagrams = chunk_diagrams_with(&descriptor, &ScalarRipsH0)?;
        let pe = PeVector {
            chunk_index: chunk.index,
            values: diagrams.iter().map(persistent_entropy).collect(),
        };
        let record = self.monitor.push(chunk, &pe)?;
        Ok(ChunkOutcome {
            chunk: *chunk,
            mean_distance: descriptor.mean(),
            pe,
            record,
            diagrams: self.keep_diagrams.then_some(diagrams),
        })
    }
}
