//! Offline PELT segmentation of the per-chunk mean centroid distance.
//!
//! Not part of the streaming detector; it runs over a finished `means.csv`.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MeanDistanceSeries {
    /// Chunk index of every value, ascending.
    pub chunk_indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl MeanDistanceSeries {
    /// Values indexed 0, 1, 2, ...
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let chunk_indices = (0..values.len()).collect();
        Self::with_indices(chunk_indices, values)
    }

    pub fn with_indices(chunk_indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if chunk_indices.len() != values.len() {
            return Err(Error::format("mean-distance series", "index and value counts differ"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::format("mean-distance series", "values must be finite and non-negative"));
        }
        Ok(Self { chunk_indices, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    /// Positions (into the series) where a new segment starts, in `[1, n-1]`.
    pub breakpoints: Vec<usize>,
    pub penalty: f64,
    /// Total segment cost plus `penalty` per breakpoint.
    pub objective: f64,
}

impl Segmentation {
    /// Segment id of every position.
    pub fn segment_ids(&self, n: usize) -> Vec<usize> {
        let mut ids = Vec::with_capacity(n);
        let mut seg = 0;
        for i in 0..n {
            if self.breakpoints.get(seg) == Some(&i) {
                seg += 1;
            }
            ids.push(seg);
        }
        ids
    }
}

/// Squared-error cost of a constant-mean segment, O(1) per query.
#[derive(Debug, Clone)]
pub struct L2Cost {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl L2Cost {
    pub fn new(values: &[f64]) -> Self {
        let mut sum = Vec::with_capacity(values.len() + 1);
        let mut sum_sq = Vec::with_capacity(values.len() + 1);
        sum.push(0.0);
        sum_sq.push(0.0);
        let (mut s, mut q) = (0.0, 0.0);
        for &v in values {
            s += v;
            q += v * v;
            sum.push(s);
            sum_sq.push(q);
        }
        Self { sum, sum_sq }
    }

    pub fn len(&self) -> usize {
        self.sum.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cost of `values[start..end]`.
    pub fn cost(&self, start: usize, end: usize) -> f64 {
        let s = self.sum[end] - self.sum[start];
        let q = self.sum_sq[end] - self.sum_sq[start];
        (q - s * s / (end - start) as f64).max(0.0)
    }

    /// Objective of a given breakpoint set.
    pub fn objective(&self, breakpoints: &[usize], penalty: f64) -> f64 {
        let mut edges = Vec::with_capacity(breakpoints.len() + 2);
        edges.push(0);
        edges.extend_from_slice(breakpoints);
        edges.push(self.len());
        let segments: f64 = edges.windows(2).map(|w| self.cost(w[0], w[1])).sum();
        segments + penalty * breakpoints.len() as f64
    }
}

/// Walks the last-change pointers back from `n`.
pub fn backtrack(last_change: &[usize], n: usize) -> Vec<usize> {
    let mut breakpoints = Vec::new();
    let mut s = n;
    while s > 0 {
        let t = last_change[s];
        if t > 0 {
            breakpoints.push(t);
        }
        s = t;
    }
    breakpoints.reverse();
    breakpoints
}

pub fn pelt(series: &MeanDistanceSeries, penalty: f64) -> Result<Segmentation> {
    let n = series.len();
    if n < 2 {
        return Err(Error::SeriesTooShort(n));
    }
    if !(penalty > 0.0 && penalty.is_finite()) {
        return Err(Error::config(format!("PELT penalty must be positive, got {penalty}")));
    }
    let cost = L2Cost::new(&series.values);
    let mut f = vec![0.0; n + 1];
    let mut last = vec![0usize; n + 1];
    f[0] = -penalty;
    let mut candidates = vec![0usize];

    for s in 1..=n {
        let mut best = (f64::INFINITY, 0);
        // candidates stay sorted, so strict < keeps the smallest t on ties
        for &t in &candidates {
            let v = f[t] + cost.cost(t, s) + penalty;
            if v < best.0 {
                best = (v, t);
            }
        }
        f[s] = best.0;
        last[s] = best.1;
        candidates.retain(|&t| f[t] + cost.cost(t, s) <= f[s]);
        candidates.push(s);
    }

    let breakpoints = backtrack(&last, n);
    let objective = cost.objective(&breakpoints, penalty);
    Ok(Segmentation {
        breakpoints,
        penalty,
        objective,
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Noise variance from first differences. The median absolute difference
/// is robust to the jumps themselves; when more than half the differences
/// are zero it collapses, and half the variance of the differences is used.
pub fn noise_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let mut abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let sigma = 1.4826 * median(&mut abs) / std::f64::consts::SQRT_2;
    if sigma > 0.0 {
        return sigma * sigma;
    }
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diffs.len() as f64;
    var / 2.0
}

/// `2 σ̂² ln n`, floored at machine epsilon so a constant series still gets
/// a positive penalty.
pub fn default_penalty(series: &MeanDistanceSeries) -> f64 {
    let n = series.len().max(2) as f64;
    (2.0 * noise_variance(&series.values) * n.ln()).max(f64::EPSILON)
}

pub const MEANS_CSV_HEADER: &str = "chunk_index,mean_distance";

pub fn write_means_csv(out: &mut impl Write, series: &MeanDistanceSeries) -> std::io::Result<()> {
    writeln!(out, "{MEANS_CSV_HEADER}")?;
    for (i, v) in series.chunk_indices.iter().zip(&series.values) {
        writeln!(out, "{i},{}", crate::stats::fmt_real(*v))?;
    }
    Ok(())
}

pub fn read_means_csv(input: impl BufRead) -> Result<MeanDistanceSeries> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::format("means csv", "empty file"))?;
    if header.trim() != MEANS_CSV_HEADER {
        return Err(Error::format("means csv", format!("unexpected header {header:?}")));
    }
    let (mut idx, mut vals) = (Vec::new(), Vec::new());
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::format("means csv", format!("malformed row {}: {line:?}", n + 2));
        let (i, v) = line.split_once(',').ok_or_else(bad)?;
        idx.push(i.trim().parse().map_err(|_| bad())?);
        vals.push(v.trim().parse().map_err(|_| bad())?);
    }
    MeanDistanceSeries::with_indices(idx, vals)
}

pub const SEGMENTS_CSV_HEADER: &str = "chunk_index,mean_distance,segment,breakpoint";

/// One row per chunk with its segment id; `breakpoint` marks segment starts.
pub fn write_segments_csv(
    out: &mut impl Write,
    series: &MeanDistanceSeries,
    seg: &Segmentation,
) -> std::io::Result<()> {
    writeln!(out, "{SEGMENTS_CSV_HEADER}")?;
    let ids = seg.segment_ids(series.len());
    for (pos, ((c, v), id)) in series.chunk_indices.iter().zip(&series.values).zip(ids).enumerate() {
        let bp = u8::from(seg.breakpoints.binary_search(&pos).is_ok());
        writeln!(out, "{c},{},{id},{bp}", crate::stats::fmt_real(*v))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Optimal partitioning without pruning.
    fn full_dp(values: &[f64], penalty: f64) -> (Vec<usize>, f64) {
        let n = values.len();
        let cost = L2Cost::new(values);
        let mut f = vec![0.0; n + 1];
        let mut last = vec![0; n + 1];
        f[0] = -penalty;
        for s in 1..=n {
            let mut best = (f64::INFINITY, 0);
            for t in 0..s {
                let v = f[t] + cost.cost(t, s) + penalty;
                if v < best.0 {
                    best = (v, t);
                }
            }
            f[s] = best.0;
            last[s] = best.1;
        }
        let bps = backtrack(&last, n);
        let obj = cost.objective(&bps, penalty);
        (bps, obj)
    }

    /// Every subset of split points, costs summed directly around the mean.
    fn exhaustive(values: &[f64], penalty: f64) -> f64 {
        let n = values.len();
        let seg_cost = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|v| (v - m).powi(2)).sum::<f64>()
        };
        (0u32..1 << (n - 1))
            .map(|mask| {
                let mut start = 0;
                let mut total = 0.0;
                for b in 1..n {
                    if mask & (1 << (b - 1)) != 0 {
                        total += seg_cost(&values[start..b]) + penalty;
                        start = b;
                    }
                }
                total + seg_cost(&values[start..])
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn series(v: Vec<f64>) -> MeanDistanceSeries {
        MeanDistanceSeries::new(v).unwrap()
    }

    #[test]
    fn constant_series_has_no_breaks() {
        let s = series(vec![2.5; 40]);
        let seg = pelt(&s, default_penalty(&s)).unwrap();
        assert!(seg.breakpoints.is_empty());
        assert_eq!(seg.objective, 0.0);
    }

    #[test]
    fn step_series() {
        let mut v = vec![0.0; 50];
        v.extend([5.0; 50]);
        let s = series(v.clone());
        let penalty = default_penalty(&s);
        let seg = pelt(&s, penalty).unwrap();
        assert_eq!(seg.breakpoints, vec![50]);
        assert_eq!(full_dp(&v, penalty).0, vec![50]);
        assert_eq!(seg.segment_ids(100)[49..51], [0, 1]);
    }

    #[test]
    fn matches_unpruned_dp() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..200 {
            let n = rng.gen_range(2..=200);
            let jumps = rng.gen_range(0..6);
            let mut level = rng.gen_range(0.0..3.0);
            let mut v = Vec::with_capacity(n);
            for i in 0..n {
                if jumps > 0 && i % (n / jumps + 1) == 0 {
                    level = rng.gen_range(0.0..3.0);
                }
                v.push(level + rng.gen_range(0.0..0.5));
            }
            let penalty = rng.gen_range(0.01..5.0);
            let seg = pelt(&series(v.clone()), penalty).unwrap();
            let (bps, obj) = full_dp(&v, penalty);
            assert_eq!(seg.breakpoints, bps);
            assert_eq!(seg.objective, obj);
        }
    }

    #[test]
    fn dp_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.gen_range(2..=11);
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..4.0)).collect();
            let penalty = rng.gen_range(0.05..3.0);
            let seg = pelt(&series(v.clone()), penalty).unwrap();
            let best = exhaustive(&v, penalty);
            assert!((seg.objective - best).abs() <= 1e-9 * best.max(1.0));
        }
    }

    #[test]
    fn guards() {
        assert!(matches!(pelt(&series(vec![1.0]), 1.0), Err(Error::SeriesTooShort(1))));
        assert!(pelt(&series(vec![1.0, 2.0]), 0.0).is_err());
        assert!(MeanDistanceSeries::new(vec![-1.0]).is_err());
    }

    #[test]
    fn means_csv_round_trip() {
        let s = MeanDistanceSeries::with_indices(vec![3, 4, 5], vec![0.1, 2.0 / 3.0, 7.0]).unwrap();
        let mut buf = Vec::new();
        write_means_csv(&mut buf, &s).unwrap();
        assert_eq!(read_means_csv(buf.as_slice()).unwrap(), s);
        assert!(read_means_csv(&b"x,y\n"[..]).is_err());
        assert!(read_means_csv(&b"chunk_index,mean_distance\n1;2\n"[..]).is_err());
    }

    #[test]
    fn segments_csv() {
        let s = series(vec![0.0, 0.0, 4.0, 4.0]);
        let seg = pelt(&s, 0.5).unwrap();
        let mut buf = Vec::new();
        write_segments_csv(&mut buf, &s, &seg).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let segs: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit(',').nth(1).unwrap()).collect();
        assert_eq!(segs, ["0", "0", "1", "1"]);
        assert!(text.lines().nth(3).unwrap().ends_with(",1"));
    }

    proptest! {
        #[test]
        fn more_penalty_fewer_breaks(v in proptest::collection::vec(0.0f64..5.0, 2..80)) {
            let s = series(v);
            let mut last = usize::MAX;
            for p in [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0] {
                let k = pelt(&s, p).unwrap().breakpoints.len();
                prop_assert!(k <= last);
                last = k;
            }
        }

        #[test]
        fn shift_leaves_breaks(
            a in proptest::collection::vec(0.0f64..5.0, 2..60),
            shift in 0.0f64..10.0,
            penalty in 0.5f64..30.0,
        ) {
            // continuous draws make exact ties, where rounding could pick either side, improbable
            let b: Vec<f64> = a.iter().map(|v| v + shift).collect();
            let sa = pelt(&series(a), penalty).unwrap();
            let sb = pelt(&series(b), penalty).unwrap();
            prop_assert_eq!(sa.breakpoints, sb.breakpoints);
        }
    }
}
