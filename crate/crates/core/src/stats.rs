//! Mann-Whitney U comparison of consecutive persistent-entropy vectors.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::streamgen::Chunk;
use crate::topology::PeVector;

/// Complementary error function, Chebyshev-fitted rational approximation with
/// fractional error below 1.2e-7 everywhere.
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let ans = t * poly.exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranks {
    /// Midranks in input order, 1-based.
    pub ranks: Vec<f64>,
    /// Size of every group of two or more tied values.
    pub tie_sizes: Vec<usize>,
}

pub fn rank_with_ties(pooled: &[f64]) -> Result<Ranks> {
    if pooled.is_empty() {
        return Err(Error::format("rank input", "empty sample"));
    }
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut tie_sizes = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share their mean
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        if end - start > 1 {
            tie_sizes.push(end - start);
        }
        start = end;
    }
    Ok(Ranks { ranks, tie_sizes })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitney {
    /// U of the first sample.
    pub u: f64,
    pub z: f64,
    /// Two-sided p-value from the tie-corrected normal approximation.
    pub p: f64,
}

/// Two-sided Mann-Whitney U test with tie-corrected variance and continuity
/// correction. All-tied input gives p = 1.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::SampleTooSmall { a: a.len(), b: b.len() });
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = rank_with_ties(&pooled)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let rank_sum_a: f64 = ranks.ranks[..a.len()].iter().sum();
    let u = rank_sum_a - na * (na + 1.0) / 2.0;

    let tie_term: f64 = ranks
        .tie_sizes
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let variance = (na * nb / 12.0) * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if variance <= 0.0 {
        return Ok(MannWhitney { u, z: 0.0, p: 1.0 });
    }
    let sigma = variance.sqrt();
    let deviation = u - na * nb / 2.0;
    // |U − μ| is identical for (a, b) and (b, a), which makes p symmetric
    let corrected = (deviation.abs() - 0.5).max(0.0);
    let z = corrected.copysign(deviation) / sigma;
    let p = (2.0 * normal_cdf(-corrected / sigma)).clamp(0.0, 1.0);
    Ok(MannWhitney { u, z, p })
}

/// Significance levels; flags are raised when `p < level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub strict: f64,
    pub loose: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            strict: 0.05,
            loose: 0.1,
        }
    }
}

impl Thresholds {
    pub fn new(strict: f64, loose: f64) -> Result<Self> {
        if !(0.0 < strict && strict <= loose && loose < 1.0) {
            return Err(Error::config(format!(
                "thresholds must satisfy 0 < {strict} <= {loose} < 1"
            )));
        }
        Ok(Self { strict, loose })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValueRecord {
    /// Chunk being tested; compared against the reference (by default chunk − 1).
    pub chunk_index: usize,
    pub start_sample: usize,
    pub end_sample: usize,
    pub u_statistic: f64,
    pub p_value: f64,
    pub flag_05: bool,
    pub flag_10: bool,
    /// Evaluation only: an annotated boundary lies inside the chunk.
    pub boundary_inside: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// Compare every chunk with the previous one.
    #[default]
    Consecutive,
    /// Compare every chunk with the first streamed chunk.
    Fixed,
}

/// Online fold over the chunk stream.
#[derive(Debug, Clone)]
pub struct Monitor {
    thresholds: Thresholds,
    mode: ReferenceMode,
    reference: Option<Vec<f64>>,
}

impl Monitor {
    pub fn new(thresholds: Thresholds, mode: ReferenceMode) -> Self {
        Self {
            thresholds,
            mode,
            reference: None,
        }
    }

    /// Feeds the next chunk; returns a record for every chunk after the first.
    pub fn push(&mut self, chunk: &Chunk, pe: &PeVector) -> Result<Option<PValueRecord>> {
        let Some(reference) = &self.reference else {
            self.reference = Some(pe.values.clone());
            return Ok(None);
        };
        let test = mann_whitney_u(&pe.values, reference)?;
        let record = PValueRecord {
            chunk_index: chunk.index,
            start_sample: chunk.start,
            end_sample: chunk.end,
            u_statistic: test.u,
            p_value: test.p,
            flag_05: test.p < self.thresholds.strict,
            flag_10: test.p < self.thresholds.loose,
            boundary_inside: chunk.boundary_inside,
        };
        if self.mode == ReferenceMode::Consecutive {
            self.reference = Some(pe.values.clone());
        }
        Ok(Some(record))
    }
}

/// Tests each PE vector against its predecessor. `chunks[i]` describes `pe_stream[i]`.
pub fn monitor(pe_stream: &[PeVector], chunks: &[Chunk], thresholds: Thresholds) -> Result<Vec<PValueRecord>> {
    if pe_stream.len() != chunks.len() {
        return Err(Error::config("one chunk description per PE vector is required"));
    }
    let mut m = Monitor::new(thresholds, ReferenceMode::Consecutive);
    let mut out = Vec::with_capacity(pe_stream.len().saturating_sub(1));
    for (c, pe) in chunks.iter().zip(pe_stream) {
        out.extend(m.push(c, pe)?);
    }
    Ok(out)
}

pub const RESULTS_CSV_HEADER: &str =
    "chunk_index,start_sample,end_sample,u_statistic,p_value,flag05,flag10,boundary_inside";

/// Fixed-width scientific notation with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_results_csv(out: &mut impl Write, records: &[PValueRecord]) -> std::io::Result<()> {
    writeln!(out, "{RESULTS_CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.chunk_index,
            r.start_sample,
            r.end_sample,
            fmt_real(r.u_statistic),
            fmt_real(r.p_value),
            u8::from(r.flag_05),
            u8::from(r.flag_10),
            u8::from(r.boundary_inside)
        )?;
    }
    Ok(())
}
