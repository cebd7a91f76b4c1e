//! Zero-dimensional persistence of each point's centroid distances and the
//! persistent entropy summary.
//!
//! A column of the distance descriptor is treated as a point cloud on the real
//! line. Under the Vietoris–Rips filtration every value is born at scale 0 and
//! two components merge when the scale reaches the gap between them, so the
//! finite bars are exactly the gaps between adjacent sorted values. The
//! never-dying component is dropped.

use std::io::Write;

use crate::error::{Error, Result};
use crate::projectors::DistanceDescriptor;

/// Finite bar lifetimes of one diagram. All births are 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PersistenceDiagram {
    pub lifetimes: Vec<f64>,
}

impl PersistenceDiagram {
    pub fn len(&self) -> usize {
        self.lifetimes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lifetimes.is_empty()
    }
}

/// Builds a diagram from one column of centroid distances.
pub trait DiagramBuilder {
    fn diagram(&self, values: &[f64]) -> Result<PersistenceDiagram>;
}

/// H0 of the Rips filtration on scalars.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScalarRipsH0;

impl DiagramBuilder for ScalarRipsH0 {
    fn diagram(&self, values: &[f64]) -> Result<PersistenceDiagram> {
        h0_diagram(values)
    }
}

pub fn h0_diagram(values: &[f64]) -> Result<PersistenceDiagram> {
    if values.len() < 2 {
        return Err(Error::TooFewValues(values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lifetimes = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&gap| gap > 0.0)
        .collect();
    Ok(PersistenceDiagram { lifetimes })
}

/// Shannon entropy (nats) of the normalised lifetimes. Empty diagrams give 0.
pub fn persistent_entropy(diagram: &PersistenceDiagram) -> f64 {
    let total: f64 = diagram.lifetimes.iter().sum();
    if diagram.lifetimes.len() < 2 || total <= 0.0 {
        return 0.0;
    }
    let entropy = -diagram
        .lifetimes
        .iter()
        .map(|&l| {
            let p = l / total;
            p * p.ln()
        })
        .sum::<f64>();
    entropy.max(0.0)
}

/// One persistent-entropy value per point of a chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct PeVector {
    pub chunk_index: usize,
    pub values: Vec<f64>,
}

pub fn chunk_pe(descriptor: &DistanceDescriptor) -> Result<PeVector> {
    chunk_pe_with(descriptor, &ScalarRipsH0)
}

pub fn chunk_pe_with(descriptor: &DistanceDescriptor, builder: &impl DiagramBuilder) -> Result<PeVector> {
    let values = chunk_diagrams_with(descriptor, builder)?
        .iter()
        .map(persistent_entropy)
        .collect();
    Ok(PeVector {
        chunk_index: descriptor.chunk_index,
        values,
    })
}

pub fn chunk_diagrams_with(
    descriptor: &DistanceDescriptor,
    builder: &impl DiagramBuilder,
) -> Result<Vec<PersistenceDiagram>> {
    if descriptor.k() < 2 {
        return Err(Error::TooFewValues(descriptor.k()));
    }
    descriptor.columns().map(|c| builder.diagram(c)).collect()
}

/// Writes rows `chunk,point,bar_index,lifetime` (no header).
pub fn write_diagram_rows(
    out: &mut impl Write,
    chunk_index: usize,
    diagrams: &[PersistenceDiagram],
) -> std::io::Result<()> {
    for (point, d) in diagrams.iter().enumerate() {
        for (bar, l) in d.lifetimes.iter().enumerate() {
            writeln!(out, "{chunk_index},{point},{bar},{l:.17e}")?;
        }
    }
    Ok(())
}

pub const DIAGRAM_CSV_HEADER: &str = "chunk,point,bar_index,lifetime";
