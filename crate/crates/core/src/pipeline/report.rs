use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::projectors::ProjectorKind;
use crate::stats::PValueRecord;
use crate::streamgen::StreamAnnotation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub case: String,
    pub projector: ProjectorKind,
    pub chunk_size: usize,
    pub seed: u64,
    pub stream_seed: u64,
    /// Canonical text of the config that produced this report.
    pub config: String,
    pub start_offset: usize,
    pub n_chunks: usize,
    pub flags_05: usize,
    pub flags_10: usize,
    /// Annotated boundaries inside the streamed region.
    pub injected_boundaries_streamed: usize,
    /// Segment count of the whole stream, warm-up included.
    pub segments_full_stream: usize,
    pub detection_rate: f64,
    pub false_alarm_rate: f64,
    pub tolerance_chunks: usize,
    pub model_fingerprint: String,
    pub model_cache_hit: bool,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Evaluation {
    pub boundaries: usize,
    pub flags: usize,
    pub matched: usize,
    pub detection_rate: f64,
    pub false_alarm_rate: f64,
}

/// Matches 0.05-level flags to annotated boundaries.
///
/// Chunk geometry is recovered from the records. A boundary counts when it
/// falls in `[first chunk start, last chunk end)`, where the first chunk is
/// the reference chunk preceding the first record. Pairs within
/// `tolerance_chunks` are matched greedily by chunk distance, then by the
/// earlier boundary, then by the earlier flag.
pub fn evaluate(records: &[PValueRecord], annotation: &StreamAnnotation, tolerance_chunks: usize) -> Evaluation {
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return Evaluation::default();
    };
    let size = first.end_sample - first.start_sample;
    let origin = first.start_sample - size * first.chunk_index;
    let region_start = first.start_sample - size;
    let boundary_chunks: Vec<usize> = annotation
        .boundaries_in(region_start.max(origin)..last.end_sample)
        .map(|b| (b - origin) / size)
        .collect();
    let flag_chunks: Vec<usize> = records.iter().filter(|r| r.flag_05).map(|r| r.chunk_index).collect();

    let mut pairs = Vec::new();
    for (bi, &bc) in boundary_chunks.iter().enumerate() {
        for (fi, &fc) in flag_chunks.iter().enumerate() {
            let d = bc.abs_diff(fc);
            if d <= tolerance_chunks {
                pairs.push((d, bi, fi));
            }
        }
    }
    pairs.sort_unstable();
    let mut b_used = vec![false; boundary_chunks.len()];
    let mut f_used = vec![false; flag_chunks.len()];
    let mut matched = 0;
    for (_, bi, fi) in pairs {
        if !b_used[bi] && !f_used[fi] {
            b_used[bi] = true;
            f_used[fi] = true;
            matched += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Evaluation {
        boundaries: boundary_chunks.len(),
        flags: flag_chunks.len(),
        matched,
        detection_rate: ratio(matched, boundary_chunks.len()),
        false_alarm_rate: ratio(flag_chunks.len() - matched, flag_chunks.len()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportTable {
    pub text: String,
    pub csv: String,
}

const COLUMNS: [&str; 8] = [
    "case",
    "chunk_size",
    "method",
    "seed",
    "injected_drifts",
    "flags_05",
    "flags_10",
    "segments_full_stream",
];

/// One row per report, as aligned text and CSV. An empty list gives headers only.
pub fn report_table(reports: &[RunReport]) -> ReportTable {
    let rows: Vec<[String; 8]> = reports
        .iter()
        .map(|r| {
            [
                r.case.clone(),
                r.chunk_size.to_string(),
                r.projector.to_string(),
                r.seed.to_string(),
                r.injected_boundaries_streamed.to_string(),
                r.flags_05.to_string(),
                r.flags_10.to_string(),
                r.segments_full_stream.to_string(),
            ]
        })
        .collect();

    let mut csv = COLUMNS.join(",");
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.join(","));
        csv.push('\n');
    }

    let widths: Vec<usize> = (0..COLUMNS.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([COLUMNS[c].len()]).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    let mut line = |cells: &[&str]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, w))| if c < 3 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        let _ = writeln!(text, "{}", padded.join("  ").trim_end());
    };
    line(&COLUMNS);
    for row in &rows {
        line(&row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    ReportTable { text, csv }
}
