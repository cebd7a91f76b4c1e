//! MNIST IDX ingest.
//!
//! Reads the classic big-endian IDX containers (`idx3-ubyte` images and
//! `idx1-ubyte` labels), optionally gzip-compressed, and pools every split found
//! in a directory into one [`ImageSet`].

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;
pub const NUM_CLASSES: usize = 10;

/// Images decoded from one `idx3-ubyte` container, pixels scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f32>,
}

impl IdxImages {
    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn len(&self) -> usize {
        if self.dim() == 0 {
            0
        } else {
            self.pixels.len() / self.dim()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn image(&self, index: usize) -> &[f32] {
        let dim = self.dim();
        &self.pixels[index * dim..(index + 1) * dim]
    }
}

/// A pool of labelled images. Immutable once built.
#[derive(Debug, Clone)]
pub struct ImageSet {
    dim: usize,
    pixels: Vec<f32>,
    labels: Vec<u8>,
    source_digest: String,
}

impl ImageSet {
    pub fn new(images: IdxImages, labels: Vec<u8>, source_digest: String) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::format(
                "MNIST pair",
                format!("{} images but {} labels", images.len(), labels.len()),
            ));
        }
        if let Some((index, &value)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= NUM_CLASSES)
        {
            return Err(Error::LabelOutOfRange { index, value });
        }
        Ok(Self {
            dim: images.dim(),
            pixels: images.pixels,
            labels,
            source_digest,
        })
    }

    /// Builds a set from in-memory vectors. Used for synthetic fixtures.
    pub fn from_vectors(dim: usize, images: &[Vec<f32>], labels: Vec<u8>) -> Result<Self> {
        let mut pixels = Vec::with_capacity(images.len() * dim);
        for img in images {
            if img.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: img.len(),
                });
            }
            if img.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::format("image", "pixel outside [0, 1]"));
            }
            pixels.extend_from_slice(img);
        }
        let idx = IdxImages {
            rows: 1,
            cols: dim,
            pixels,
        };
        Self::new(idx, labels, String::from("in-memory"))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn image(&self, index: usize) -> &[f32] {
        &self.pixels[index * self.dim..(index + 1) * self.dim]
    }

    pub fn label(&self, index: usize) -> u8 {
        self.labels[index]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Hex SHA-256 over the raw bytes of every file read, in load order.
    pub fn source_digest(&self) -> &str {
        &self.source_digest
    }
}

/// Sample indices grouped by digit class, each list ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DigitIndex {
    by_class: [Vec<usize>; NUM_CLASSES],
}

impl DigitIndex {
    pub fn class(&self, digit: u8) -> &[usize] {
        self.by_class
            .get(digit as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn classes(&self) -> impl Iterator<Item = (u8, &[usize])> {
        self.by_class
            .iter()
            .enumerate()
            .map(|(d, v)| (d as u8, v.as_slice()))
    }
}

pub fn build_digit_index(labels: &[u8]) -> DigitIndex {
    let mut index = DigitIndex::default();
    for (i, &label) in labels.iter().enumerate() {
        index.by_class[label as usize].push(i);
    }
    index
}

fn inflate_if_gzip(bytes: &[u8]) -> Result<std::borrow::Cow<'_, [u8]>> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes).read_to_end(&mut out)?;
        Ok(out.into())
    } else {
        Ok(bytes.into())
    }
}

fn read_be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::TruncatedFile {
            expected: offset + 4,
            actual: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = read_be_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::WrongMagic { expected, found });
    }
    Ok(())
}

fn payload(bytes: &[u8], header_len: usize, payload_len: usize) -> Result<&[u8]> {
    let expected = header_len + payload_len;
    if bytes.len() < expected {
        return Err(Error::TruncatedFile {
            expected,
            actual: bytes.len(),
        });
    }
    Ok(&bytes[header_len..expected])
}

/// Decodes an `idx3-ubyte` image container. Gzip input is inflated first.
pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let bytes = inflate_if_gzip(bytes)?;
    check_magic(&bytes, IMAGE_MAGIC)?;
    let n = read_be_u32(&bytes, 4)? as usize;
    let rows = read_be_u32(&bytes, 8)? as usize;
    let cols = read_be_u32(&bytes, 12)? as usize;
    let body = payload(&bytes, 16, n * rows * cols)?;
    Ok(IdxImages {
        rows,
        cols,
        pixels: body.iter().map(|&b| f32::from(b) / 255.0).collect(),
    })
}

/// Decodes an `idx1-ubyte` label container.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let bytes = inflate_if_gzip(bytes)?;
    check_magic(&bytes, LABEL_MAGIC)?;
    let n = read_be_u32(&bytes, 4)? as usize;
    let body = payload(&bytes, 8, n)?;
    if let Some((index, &value)) = body.iter().enumerate().find(|(_, &b)| b > 9) {
        return Err(Error::LabelOutOfRange { index, value });
    }
    Ok(body.to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(images.rows as u32).to_be_bytes());
    out.extend_from_slice(&(images.cols as u32).to_be_bytes());
    out.extend(
        images
            .pixels
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

const SPLITS: [&str; 2] = ["train", "t10k"];

fn find_file(dir: &Path, split: &str, kind: &str, idx: &str) -> Option<std::path::PathBuf> {
    [
        format!("{split}-{kind}-{idx}-ubyte"),
        format!("{split}-{kind}.{idx}-ubyte"),
    ]
    .into_iter()
    .flat_map(|stem| [format!("{stem}.gz"), stem])
    .map(|name| dir.join(name))
    .find(|p| p.is_file())
}

/// Loads every `train`/`t10k` image+label pair present in `dir` and pools them,
/// train first.
pub fn load_mnist_dir(dir: &Path) -> Result<ImageSet> {
    let mut hasher = Sha256::new();
    let mut rows_cols = None;
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for split in SPLITS {
        let (Some(img_path), Some(lbl_path)) = (
            find_file(dir, split, "images", "idx3"),
            find_file(dir, split, "labels", "idx1"),
        ) else {
            continue;
        };
        let img_bytes = fs::read(&img_path)?;
        let lbl_bytes = fs::read(&lbl_path)?;
        hasher.update(&img_bytes);
        hasher.update(&lbl_bytes);
        let images = parse_idx_images(&img_bytes)?;
        let split_labels = parse_idx_labels(&lbl_bytes)?;
        if images.len() != split_labels.len() {
            return Err(Error::format(
                "MNIST pair",
                format!(
                    "{} holds {} images but {} holds {} labels",
                    img_path.display(),
                    images.len(),
                    lbl_path.display(),
                    split_labels.len()
                ),
            ));
        }
        match rows_cols {
            None => rows_cols = Some((images.rows, images.cols)),
            Some(rc) if rc != (images.rows, images.cols) => {
                return Err(Error::format("MNIST pair", "splits disagree on image size"));
            }
            Some(_) => {}
        }
        pixels.extend_from_slice(&images.pixels);
        labels.extend_from_slice(&split_labels);
    }
    let Some((rows, cols)) = rows_cols else {
        return Err(Error::MissingData(dir.to_path_buf()));
    };
    let digest = hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect::<String>();
    ImageSet::new(IdxImages { rows, cols, pixels }, labels, digest)
}
