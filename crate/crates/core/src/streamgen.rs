//! Synthetic annotated streams built by alternating MNIST digit groups of
//! different hole counts, and the chunking used to feed them to a detector.

use std::fs;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mnist::{DigitIndex, ImageSet};

/// Read access to stream samples, without labels. Everything on the detector
/// path goes through this trait.
pub trait SampleSource {
    fn len(&self) -> usize;
    fn dim(&self) -> usize;
    fn sample(&self, index: usize) -> &[f32];

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// How a sample is drawn inside a segment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Pick a digit class uniformly from the group, then an image of that class.
    #[default]
    TwoStage,
    /// Pick uniformly among all images whose class is in the group.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub name: String,
    pub group_cycle: Vec<Vec<u8>>,
    pub segment_len: usize,
    pub total_len: usize,
}

impl CaseSpec {
    /// Digits without holes against digits with one hole.
    pub fn case_a() -> Self {
        Self {
            name: "A".into(),
            group_cycle: vec![vec![1, 3, 5, 7], vec![0, 6, 9]],
            segment_len: 1000,
            total_len: 20000,
        }
    }

    /// Like A, with the ambiguous 2 and 4 added.
    pub fn case_b() -> Self {
        Self {
            name: "B".into(),
            group_cycle: vec![vec![1, 2, 3, 5, 7], vec![0, 4, 6, 9]],
            segment_len: 1000,
            total_len: 20000,
        }
    }

    /// Zero, two and one holes, cycling every 500 samples.
    pub fn case_c() -> Self {
        Self {
            name: "C".into(),
            group_cycle: vec![vec![1, 2, 3, 5, 7], vec![8], vec![0, 4, 6, 9]],
            segment_len: 500,
            total_len: 20000,
        }
    }

    /// One group for the whole stream; no drift is ever injected.
    pub fn single_group(digits: Vec<u8>, total_len: usize) -> Self {
        Self {
            name: format!(
                "single:{}",
                digits.iter().map(u8::to_string).collect::<Vec<_>>().join(",")
            ),
            group_cycle: vec![digits],
            segment_len: total_len,
            total_len,
        }
    }

    /// Parses `A`, `B`, `C` or `single:<d>,<d>,...`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim() {
            "A" | "a" => Ok(Self::case_a()),
            "B" | "b" => Ok(Self::case_b()),
            "C" | "c" => Ok(Self::case_c()),
            other => {
                let digits = other
                    .strip_prefix("single:")
                    .ok_or_else(|| Error::config(format!("unknown case {other:?}")))?;
                let digits = digits
                    .split(',')
                    .map(|d| {
                        d.trim()
                            .parse::<u8>()
                            .map_err(|_| Error::config(format!("bad digit {d:?} in case")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let spec = Self::single_group(digits, 20000);
                spec.validate()?;
                Ok(spec)
            }
        }
    }

    pub fn with_total_len(mut self, total_len: usize) -> Self {
        if self.group_cycle.len() == 1 {
            self.segment_len = total_len;
        }
        self.total_len = total_len;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment_len == 0 || self.total_len == 0 || !self.total_len.is_multiple_of(self.segment_len) {
            return Err(Error::config(format!(
                "total_len {} is not a positive multiple of segment_len {}",
                self.total_len, self.segment_len
            )));
        }
        if self.group_cycle.is_empty() || self.group_cycle.iter().any(Vec::is_empty) {
            return Err(Error::config("every group needs at least one digit"));
        }
        let mut seen = [false; 10];
        for &d in self.group_cycle.iter().flatten() {
            if d > 9 {
                return Err(Error::config(format!("{d} is not a digit")));
            }
            if seen[d as usize] {
                return Err(Error::config(format!("digit {d} appears in two groups")));
            }
            seen[d as usize] = true;
        }
        Ok(())
    }

    pub fn num_segments(&self) -> usize {
        self.total_len / self.segment_len
    }

    pub fn annotation(&self) -> StreamAnnotation {
        let n = self.num_segments();
        StreamAnnotation {
            total_len: self.total_len,
            segment_len: self.segment_len,
            boundaries: (1..n).map(|k| k * self.segment_len).collect(),
            segment_groups: (0..n).map(|k| k % self.group_cycle.len()).collect(),
            groups: self.group_cycle.clone(),
        }
    }
}

/// Ground truth of a generated stream. `segment_groups[k]` indexes `groups`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamAnnotation {
    pub total_len: usize,
    pub segment_len: usize,
    pub boundaries: Vec<usize>,
    pub segment_groups: Vec<usize>,
    pub groups: Vec<Vec<u8>>,
}

impl StreamAnnotation {
    pub fn group_at(&self, sample: usize) -> &[u8] {
        &self.groups[self.segment_groups[sample / self.segment_len]]
    }

    /// Boundaries lying in `range`.
    pub fn boundaries_in(&self, range: Range<usize>) -> impl Iterator<Item = usize> + '_ {
        self.boundaries
            .iter()
            .copied()
            .filter(move |b| range.contains(b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedStream {
    pub case: String,
    pub dim: usize,
    pub samples: Vec<f32>,
    /// For evaluation only.
    pub sample_labels: Vec<u8>,
    pub annotation: StreamAnnotation,
    pub seed: u64,
}

impl AnnotatedStream {
    pub fn labels(&self) -> &[u8] {
        &self.sample_labels
    }
}

impl SampleSource for AnnotatedStream {
    fn len(&self) -> usize {
        self.sample_labels.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, index: usize) -> &[f32] {
        &self.samples[index * self.dim..(index + 1) * self.dim]
    }
}

pub fn generate_stream(
    spec: &CaseSpec,
    index: &DigitIndex,
    set: &ImageSet,
    seed: u64,
    mode: SamplingMode,
) -> Result<AnnotatedStream> {
    spec.validate()?;
    for &d in spec.group_cycle.iter().flatten() {
        if index.class(d).is_empty() {
            return Err(Error::EmptyClass(d));
        }
    }
    let pooled: Vec<Vec<usize>> = spec
        .group_cycle
        .iter()
        .map(|g| {
            let mut all: Vec<usize> = g.iter().flat_map(|&d| index.class(d).iter().copied()).collect();
            all.sort_unstable();
            all
        })
        .collect();

    let annotation = spec.annotation();
    let dim = set.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(spec.total_len * dim);
    let mut sample_labels = Vec::with_capacity(spec.total_len);
    for (segment, &group_id) in annotation.segment_groups.iter().enumerate() {
        let group = &spec.group_cycle[group_id];
        debug_assert_eq!(annotation.group_at(segment * spec.segment_len), &group[..]);
        for _ in 0..spec.segment_len {
            let image = match mode {
                SamplingMode::TwoStage => {
                    let class = group[rng.gen_range(0..group.len())];
                    let members = index.class(class);
                    members[rng.gen_range(0..members.len())]
                }
                SamplingMode::Pooled => {
                    let members = &pooled[group_id];
                    members[rng.gen_range(0..members.len())]
                }
            };
            samples.extend_from_slice(set.image(image));
            sample_labels.push(set.label(image));
        }
    }
    Ok(AnnotatedStream {
        case: spec.name.clone(),
        dim,
        samples,
        sample_labels,
        annotation,
        seed,
    })
}

/// A window `[start, end)` of the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    /// An annotated boundary lies in `[start, end)`.
    pub boundary_inside: bool,
}

impl Chunk {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Splits `[start_offset, total_len)` into consecutive chunks. A trailing partial
/// chunk is dropped.
pub fn chunks(annotation: &StreamAnnotation, chunk_size: usize, start_offset: usize) -> Result<Vec<Chunk>> {
    if chunk_size < 2 {
        return Err(Error::config(format!("chunk_size {chunk_size} < 2")));
    }
    if start_offset >= annotation.total_len {
        return Err(Error::config(format!(
            "start offset {start_offset} is past the stream end {}",
            annotation.total_len
        )));
    }
    let count = (annotation.total_len - start_offset) / chunk_size;
    Ok((0..count)
        .map(|index| {
            let start = start_offset + index * chunk_size;
            let end = start + chunk_size;
            Chunk {
                index,
                start,
                end,
                boundary_inside: annotation.boundaries_in(start..end).next().is_some(),
            }
        })
        .collect())
}

const STREAM_MAGIC: &[u8; 4] = b"DSST";
const STREAM_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    case: String,
    seed: u64,
    annotation: StreamAnnotation,
    sample_labels: Vec<u8>,
}

/// Sidecar path for a stream container: `stream.bin` → `stream.json`.
pub fn sidecar_path(container: &Path) -> std::path::PathBuf {
    container.with_extension("json")
}

/// Writes the binary container and its JSON sidecar.
///
/// Layout (little-endian): `DSST`, u32 version, u32 name length, name bytes,
/// u64 seed, u64 total_len, u64 segment_len, u32 dim, then `total_len * dim`
/// f32 values.
pub fn write_stream(stream: &AnnotatedStream, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(STREAM_MAGIC)?;
    out.write_all(&STREAM_VERSION.to_le_bytes())?;
    out.write_all(&(stream.case.len() as u32).to_le_bytes())?;
    out.write_all(stream.case.as_bytes())?;
    out.write_all(&stream.seed.to_le_bytes())?;
    out.write_all(&(stream.annotation.total_len as u64).to_le_bytes())?;
    out.write_all(&(stream.annotation.segment_len as u64).to_le_bytes())?;
    out.write_all(&(stream.dim as u32).to_le_bytes())?;
    for v in &stream.samples {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;

    let sidecar = Sidecar {
        case: stream.case.clone(),
        seed: stream.seed,
        annotation: stream.annotation.clone(),
        sample_labels: stream.sample_labels.clone(),
    };
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let out = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or(Error::TruncatedFile {
                expected: self.pos + n,
                actual: self.bytes.len(),
            })?;
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_stream(path: &Path) -> Result<AnnotatedStream> {
    let bytes = fs::read(path)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != STREAM_MAGIC {
        return Err(Error::format("stream container", "bad magic"));
    }
    let version = cur.u32()?;
    if version != STREAM_VERSION {
        return Err(Error::format("stream container", format!("unsupported version {version}")));
    }
    let name_len = cur.u32()? as usize;
    let case = String::from_utf8(cur.take(name_len)?.to_vec())
        .map_err(|_| Error::format("stream container", "case name is not UTF-8"))?;
    let seed = cur.u64()?;
    let total_len = cur.u64()? as usize;
    let segment_len = cur.u64()? as usize;
    let dim = cur.u32()? as usize;
    let samples = cur
        .take(total_len * dim * 4)?
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();

    let sidecar: Sidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    if sidecar.annotation.total_len != total_len
        || sidecar.annotation.segment_len != segment_len
        || sidecar.sample_labels.len() != total_len
        || sidecar.seed != seed
        || sidecar.case != case
    {
        return Err(Error::format("stream sidecar", "does not match container header"));
    }
    Ok(AnnotatedStream {
        case,
        dim,
        samples,
        sample_labels: sidecar.sample_labels,
        annotation: sidecar.annotation,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mnist::build_digit_index;

    /// Ten 1-pixel images per class; the pixel encodes the image id so samples
    /// can be traced back.
    fn tiny_set() -> ImageSet {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for d in 0..10u8 {
            for k in 0..10 {
                images.push(vec![(d as f32 * 10.0 + k as f32) / 100.0]);
                labels.push(d);
            }
        }
        ImageSet::from_vectors(1, &images, labels).unwrap()
    }

    #[test]
    fn case_a_boundaries() {
        let a = CaseSpec::case_a().annotation();
        assert_eq!(a.boundaries, (1..20).map(|k| k * 1000).collect::<Vec<_>>());
        assert_eq!(a.segment_groups.len(), 20);
    }

    #[test]
    fn case_c_cycles_three_groups() {
        let spec = CaseSpec::case_c();
        let a = spec.annotation();
        assert_eq!(a.segment_groups.len(), 40);
        assert_eq!(a.boundaries.len(), 39);
        assert_eq!(&a.segment_groups[..4], &[0, 1, 2, 0]);
        assert!(a.segment_groups.windows(2).all(|w| w[0] != w[1]));
    }

    #[test]
    fn presets_validate() {
        for spec in [CaseSpec::case_a(), CaseSpec::case_b(), CaseSpec::case_c()] {
            spec.validate().unwrap();
        }
        let mut bad = CaseSpec::case_a();
        bad.group_cycle[1].push(1);
        assert!(bad.validate().is_err());
        let mut bad = CaseSpec::case_a();
        bad.total_len = 20500;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn parses_case_names() {
        assert_eq!(CaseSpec::from_name("C").unwrap(), CaseSpec::case_c());
        let single = CaseSpec::from_name("single:1,2,3").unwrap();
        assert_eq!(single.group_cycle, vec![vec![1, 2, 3]]);
        assert!(single.annotation().boundaries.is_empty());
        assert!(CaseSpec::from_name("D").is_err());
        assert!(CaseSpec::from_name("single:1,x").is_err());
    }

    #[test]
    fn generation_is_deterministic_and_respects_groups() {
        let set = tiny_set();
        let index = build_digit_index(set.labels());
        let spec = CaseSpec::case_c();
        let s1 = generate_stream(&spec, &index, &set, 11, SamplingMode::TwoStage).unwrap();
        let s2 = generate_stream(&spec, &index, &set, 11, SamplingMode::TwoStage).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.len(), 20000);
        for i in 0..s1.len() {
            assert!(s1.annotation.group_at(i).contains(&s1.sample_labels[i]));
            let d = (s1.sample(i)[0] * 100.0 / 10.0).floor() as u8;
            assert_eq!(d, s1.sample_labels[i]);
        }
        let s3 = generate_stream(&spec, &index, &set, 12, SamplingMode::TwoStage).unwrap();
        assert_ne!(s1.samples, s3.samples);
    }

    #[test]
    fn pooled_mode_respects_groups() {
        let set = tiny_set();
        let index = build_digit_index(set.labels());
        let s = generate_stream(&CaseSpec::case_b(), &index, &set, 3, SamplingMode::Pooled).unwrap();
        assert!((0..s.len()).all(|i| s.annotation.group_at(i).contains(&s.sample_labels[i])));
    }

    #[test]
    fn missing_class_is_reported() {
        let images = vec![vec![0.0]; 3];
        let set = ImageSet::from_vectors(1, &images, vec![1, 3, 5]).unwrap();
        let index = build_digit_index(set.labels());
        assert!(matches!(
            generate_stream(&CaseSpec::case_a(), &index, &set, 0, SamplingMode::TwoStage),
            Err(Error::EmptyClass(7))
        ));
    }

    #[test]
    fn chunk_counts() {
        let a = CaseSpec::case_a().annotation();
        let cs = chunks(&a, 250, 4000).unwrap();
        assert_eq!(cs.len(), (20000 - 4000) / 250);
        assert_eq!(cs[0].range(), 4000..4250);
        assert_eq!(cs.last().unwrap().end, 20000);

        let one = chunks(&a, 20000, 0).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].boundary_inside);

        // trailing partial chunk dropped
        assert_eq!(chunks(&a, 300, 4000).unwrap().len(), 53);
        assert!(chunks(&a, 1, 0).is_err());
        assert!(chunks(&a, 10, 20000).is_err());
    }

    #[test]
    fn chunk_alignment_case_c() {
        let a = CaseSpec::case_c().annotation();
        let cs = chunks(&a, 100, 4000).unwrap();
        for c in &cs {
            let left_edge_on_boundary = a.boundaries.contains(&c.start);
            assert_eq!(left_edge_on_boundary, c.index % 5 == 0, "chunk {}", c.index);
            assert_eq!(c.boundary_inside, c.index % 5 == 0);
        }
    }

    #[test]
    fn container_round_trip() {
        let set = tiny_set();
        let index = build_digit_index(set.labels());
        let spec = CaseSpec::case_a().with_total_len(4000);
        let s = generate_stream(&spec, &index, &set, 5, SamplingMode::TwoStage).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        write_stream(&s, &path).unwrap();
        assert_eq!(read_stream(&path).unwrap(), s);

        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 1);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_stream(&path), Err(Error::TruncatedFile { .. })));
    }
}
