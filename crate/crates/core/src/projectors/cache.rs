//! Versioned binary serialization of a fitted projector and its centroids.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "DSMD" | u32 version | u32 fingerprint length | fingerprint bytes | u8 kind
//! kind 1 (SOM):  u32 rows, u32 cols, u32 dim, f64 α₀, f64 σ₀, f64 σ_min, u32 epochs,
//!                f64 × rows·cols·dim codebooks
//! kind 2 (PCA):  u32 dim, u32 d, f64 × dim mean, f64 × d eigenvalues, f64 × d·dim components
//! kind 3 (KPCA): u32 dim, u32 n, u32 d, f64 gamma, f64 grand mean, f64 × n row means,
//!                f64 × d eigenvalues, f64 × d·n alphas, f64 × n·dim training points
//! then:          u32 K, u32 centroid dim, f64 × K·dim centroids
//! ```

use super::{CentroidSet, KpcaModel, PcaModel, Projector, SomModel, SomParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DSMD";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    /// Free-form description of what the models were fitted on; a cache is
    /// reused only when this matches.
    pub fingerprint: String,
    pub projector: Projector,
    pub centroids: CentroidSet,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) {
        for &v in vs {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let out = self
            .bytes
            .get(self.pos..self.pos.saturating_add(n))
            .ok_or(Error::TruncatedFile {
                expected: self.pos.saturating_add(n),
                actual: self.bytes.len(),
            })?;
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n.saturating_mul(8))?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }
    fn rows(&mut self, rows: usize, cols: usize) -> Result<Vec<Vec<f64>>> {
        (0..rows).map(|_| self.f64s(cols)).collect()
    }
}

pub fn encode_bundle(bundle: &ModelBundle) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION as usize);
    w.u32(bundle.fingerprint.len());
    w.0.extend_from_slice(bundle.fingerprint.as_bytes());
    match &bundle.projector {
        Projector::Som(m) => {
            let p = m.params();
            w.u8(1);
            w.u32(m.rows());
            w.u32(m.cols());
            w.u32(m.dim());
            w.f64(p.learning_rate);
            w.f64(p.initial_radius(m.rows(), m.cols()));
            w.f64(p.min_radius);
            w.u32(p.epochs);
            w.f64s(m.raw_codebooks());
        }
        Projector::Pca(m) => {
            w.u8(2);
            w.u32(m.input_dim());
            w.u32(m.latent_dim());
            w.f64s(m.mean());
            w.f64s(m.eigenvalues());
            w.f64s(m.components().iter().flatten());
        }
        Projector::Kpca(m) => {
            w.u8(3);
            w.u32(m.input_dim());
            w.u32(m.num_training());
            w.u32(m.latent_dim());
            w.f64(m.gamma());
            w.f64(m.kernel_grand_mean());
            w.f64s(m.kernel_row_means());
            w.f64s(m.eigenvalues());
            w.f64s(m.alphas().iter().flatten());
            for &v in m.training_points() {
                w.f64(f64::from(v));
            }
        }
    }
    w.u32(bundle.centroids.len());
    w.u32(bundle.centroids.dim());
    for c in bundle.centroids.iter() {
        w.f64s(c);
    }
    w.0
}

pub fn decode_bundle(bytes: &[u8]) -> Result<ModelBundle> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::format("model cache", "bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::format("model cache", format!("unsupported version {version}")));
    }
    let flen = r.u32()?;
    let fingerprint = String::from_utf8(r.take(flen)?.to_vec())
        .map_err(|_| Error::format("model cache", "fingerprint is not UTF-8"))?;
    let projector = match r.u8()? {
        1 => {
            let (rows, cols, dim) = (r.u32()?, r.u32()?, r.u32()?);
            let params = SomParams {
                learning_rate: r.f64()?,
                radius: Some(r.f64()?),
                min_radius: r.f64()?,
                epochs: r.u32()?,
            };
            let codebooks = r.f64s(rows * cols * dim)?;
            Projector::Som(SomModel::from_parts(rows, cols, dim, codebooks, params)?)
        }
        2 => {
            let (dim, d) = (r.u32()?, r.u32()?);
            let mean = r.f64s(dim)?;
            let eigenvalues = r.f64s(d)?;
            let components = r.rows(d, dim)?;
            Projector::Pca(PcaModel::from_parts(mean, components, eigenvalues)?)
        }
        3 => {
            let (dim, n, d) = (r.u32()?, r.u32()?, r.u32()?);
            let gamma = r.f64()?;
            let grand = r.f64()?;
            let row_means = r.f64s(n)?;
            let eigenvalues = r.f64s(d)?;
            let alphas = r.rows(d, n)?;
            let points = r.f64s(n * dim)?.into_iter().map(|v| v as f32).collect();
            Projector::Kpca(KpcaModel::from_parts(dim, points, gamma, eigenvalues, alphas, row_means, grand)?)
        }
        other => return Err(Error::format("model cache", format!("unknown model kind {other}"))),
    };
    let (k, cdim) = (r.u32()?, r.u32()?);
    let centroids = CentroidSet::new(r.rows(k, cdim)?)?;
    if r.pos != bytes.len() {
        return Err(Error::format("model cache", "trailing bytes"));
    }
    Ok(ModelBundle {
        fingerprint,
        projector,
        centroids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projectors::{fit_centroids, KpcaParams};

    fn window() -> Vec<Vec<f32>> {
        (0..40)
            .map(|i| {
                let t = i as f32 / 40.0;
                vec![t, (t * 7.0).sin() * 0.5 + 0.5, 1.0 - t]
            })
            .collect()
    }

    fn round_trip(projector: Projector, win: &[&[f32]]) {
        let centroids = fit_centroids(&projector, win, 4, 1).unwrap();
        let bundle = ModelBundle {
            fingerprint: "test".into(),
            projector,
            centroids,
        };
        let bytes = encode_bundle(&bundle);
        assert_eq!(decode_bundle(&bytes).unwrap(), bundle);
        assert!(decode_bundle(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn all_kinds_round_trip() {
        let data = window();
        let win: Vec<&[f32]> = data.iter().map(Vec::as_slice).collect();
        let params = SomParams {
            radius: Some(1.5),
            ..SomParams::default()
        };
        round_trip(Projector::Som(SomModel::fit(&win, 2, 3, params, 0).unwrap()), &win);
        round_trip(Projector::Pca(PcaModel::fit(&win, 2).unwrap()), &win);
        round_trip(
            Projector::Kpca(KpcaModel::fit(&win, KpcaParams::default(), 0).unwrap()),
            &win,
        );
    }

    #[test]
    fn rejects_foreign_bytes() {
        assert!(decode_bundle(b"NOPE\x01\x00\x00\x00").is_err());
        assert!(decode_bundle(b"").is_err());
    }
}
