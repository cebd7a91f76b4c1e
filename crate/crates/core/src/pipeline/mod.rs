//! End-to-end runs: load or generate a stream, fit on the warm-up window,
//! monitor the rest chunk by chunk, and summarise.

mod config;
mod detector;
mod report;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;
use std::time::Instant;

pub use config::{RunConfig, StreamSource};
pub use detector::{fit_models, model_fingerprint, ChunkOutcome, Detector};
pub use report::{evaluate, report_table, Evaluation, ReportTable, RunReport};

use crate::changepoint::{write_means_csv, MeanDistanceSeries};
use crate::error::{Error, Result};
use crate::mnist::{build_digit_index, load_mnist_dir, ImageSet};
use crate::projectors::{decode_bundle, encode_bundle, ModelBundle};
use crate::stats::{write_results_csv, Monitor, PValueRecord};
use crate::streamgen::{chunks, generate_stream, read_stream, AnnotatedStream, CaseSpec, SampleSource, StreamAnnotation};
use crate::topology::{write_diagram_rows, PersistenceDiagram, DIAGRAM_CSV_HEADER};

/// Progress hooks. Every method has a no-op default.
pub trait RunObserver {
    fn warmed_up(&mut self, _warmup: Range<usize>, _cache_hit: bool) {}
    fn chunk_done(&mut self, _outcome: &ChunkOutcome) {}
}

/// Observer that ignores everything.
pub struct Quiet;

impl RunObserver for Quiet {}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub records: Vec<PValueRecord>,
    pub means: MeanDistanceSeries,
    pub bundle: ModelBundle,
    pub diagrams: Vec<(usize, Vec<PersistenceDiagram>)>,
}

impl RunOutput {
    pub fn model_bytes(&self) -> Vec<u8> {
        encode_bundle(&self.bundle)
    }
}

/// Builds the stream a config describes, generating it from MNIST if needed.
pub fn load_stream(config: &RunConfig) -> Result<AnnotatedStream> {
    match &config.source {
        StreamSource::File(path) => read_stream(path),
        StreamSource::Case { mnist_dir, .. } => generate_for(config, &load_mnist_dir(mnist_dir)?),
    }
}

/// Generates the configured case from an already loaded image set.
pub fn generate_for(config: &RunConfig, images: &ImageSet) -> Result<AnnotatedStream> {
    let name = config
        .case_name()
        .ok_or_else(|| Error::config("config reads a stream file, nothing to generate"))?;
    let mut spec = CaseSpec::from_name(name)?;
    if let Some(t) = config.total_len {
        spec = spec.with_total_len(t);
    }
    let index = build_digit_index(images.labels());
    generate_stream(&spec, &index, images, config.stream_seed(), config.sampling)
}

fn cached_bundle(path: &Path, fingerprint: &str) -> Option<ModelBundle> {
    let bytes = fs::read(path).ok()?;
    decode_bundle(&bytes).ok().filter(|b| b.fingerprint == fingerprint)
}

/// Runs the detector over `source`. `annotation` is consulted only to count
/// and match boundaries after the fact, never by the detector itself.
pub fn detect<S: SampleSource + Sync + ?Sized>(
    config: &RunConfig,
    case: &str,
    source: &S,
    annotation: &StreamAnnotation,
    observer: &mut dyn RunObserver,
) -> Result<RunOutput> {
    config.validate()?;
    let started = Instant::now();
    if source.len() != annotation.total_len {
        return Err(Error::format(
            "stream",
            format!("{} samples but the annotation covers {}", source.len(), annotation.total_len),
        ));
    }
    let warmup = 0..config.warmup_len(source.len());
    let start_offset = config.start_offset.unwrap_or(warmup.end);
    let plan = chunks(annotation, config.chunk_size, start_offset)?;
    if plan.len() < 2 {
        return Err(Error::config(format!(
            "only {} chunk(s) after offset {start_offset}; at least 2 are needed",
            plan.len()
        )));
    }

    let fingerprint = model_fingerprint(config, source, warmup.clone());
    let cached = config.model_cache.as_deref().and_then(|p| cached_bundle(p, &fingerprint));
    let cache_hit = cached.is_some();
    let bundle = match cached {
        Some(b) => b,
        None => {
            let b = fit_models(config, source, warmup.clone(), fingerprint)?;
            if let Some(path) = &config.model_cache {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir)?;
                }
                fs::write(path, encode_bundle(&b))?;
            }
            b
        }
    };
    observer.warmed_up(warmup, cache_hit);

    let mut detector = Detector::new(
        &bundle,
        Monitor::new(config.thresholds, config.reference_mode),
        config.dump_diagrams,
    );
    let mut records = Vec::with_capacity(plan.len() - 1);
    let mut means = Vec::with_capacity(plan.len());
    let mut diagrams = Vec::new();
    for chunk in &plan {
        let outcome = detector.process_chunk(source, chunk)?;
        observer.chunk_done(&outcome);
        means.push(outcome.mean_distance);
        records.extend(outcome.record);
        if let Some(d) = outcome.diagrams {
            diagrams.push((chunk.index, d));
        }
    }

    let ev = evaluate(&records, annotation, config.tolerance_chunks);
    let report = RunReport {
        case: case.to_string(),
        projector: config.projector,
        chunk_size: config.chunk_size,
        seed: config.seed,
        stream_seed: config.stream_seed(),
        config: config.to_text(),
        start_offset,
        n_chunks: plan.len(),
        flags_05: records.iter().filter(|r| r.flag_05).count(),
        flags_10: records.iter().filter(|r| r.flag_10).count(),
        injected_boundaries_streamed: ev.boundaries,
        segments_full_stream: annotation.boundaries.len() + 1,
        detection_rate: ev.detection_rate,
        false_alarm_rate: ev.false_alarm_rate,
        tolerance_chunks: config.tolerance_chunks,
        model_fingerprint: bundle.fingerprint.clone(),
        model_cache_hit: cache_hit,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        report,
        records,
        means: MeanDistanceSeries::with_indices(plan.iter().map(|c| c.index).collect(), means)?,
        bundle,
        diagrams,
    })
}

pub fn run_on_stream(config: &RunConfig, stream: &AnnotatedStream, observer: &mut dyn RunObserver) -> Result<RunOutput> {
    let out = detect(config, &stream.case, stream, &stream.annotation, observer)?;
    if let Some(dir) = &config.output_dir {
        write_outputs(dir, &out)?;
    }
    Ok(out)
}

/// Loads or generates the stream, runs it, and writes outputs if an output
/// directory is configured.
pub fn run(config: &RunConfig, observer: &mut dyn RunObserver) -> Result<RunOutput> {
    config.validate()?;
    let stream = load_stream(config)?;
    run_on_stream(config, &stream, observer)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes `results.csv`, `means.csv`, `model.bin`, `report.json`, `report.txt`,
/// `report.csv` and, if recorded, `diagrams.csv`.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = create(dir, "results.csv")?;
    write_results_csv(&mut w, &out.records)?;
    w.flush()?;
    let mut w = create(dir, "means.csv")?;
    write_means_csv(&mut w, &out.means)?;
    w.flush()?;
    fs::write(dir.join("model.bin"), out.model_bytes())?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&out.report)? + "\n")?;
    let table = report_table(std::slice::from_ref(&out.report));
    fs::write(dir.join("report.txt"), table.text)?;
    fs::write(dir.join("report.csv"), table.csv)?;
    if !out.diagrams.is_empty() {
        let mut w = create(dir, "diagrams.csv")?;
        writeln!(w, "{DIAGRAM_CSV_HEADER}")?;
        for (chunk, d) in &out.diagrams {
            write_diagram_rows(&mut w, *chunk, d)?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::mnist::ImageSet;
    use crate::projectors::ProjectorKind;
    use crate::streamgen::SamplingMode;

    /// Tiny synthetic "digits": class d lights up pixel block d with noise.
    fn toy_images() -> ImageSet {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dim = 40;
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for d in 0..10u8 {
            for _ in 0..30 {
                let mut img: Vec<f32> = (0..dim).map(|_| rng.gen_range(0.0..0.2)).collect();
                for p in &mut img[usize::from(d) * 4..usize::from(d) * 4 + 4] {
                    *p = rng.gen_range(0.7..1.0);
                }
                images.push(img);
                labels.push(d);
            }
        }
        ImageSet::from_vectors(dim, &images, labels).unwrap()
    }

    fn toy_config(kind: ProjectorKind) -> RunConfig {
        let mut cfg = RunConfig::for_case("A", "unused", kind, 3);
        cfg.total_len = Some(4000);
        cfg.chunk_size = 100;
        cfg.grid_rows = 4;
        cfg.grid_cols = 4;
        cfg.kmeans_k = 8;
        cfg.som.epochs = 2;
        cfg.kpca_max_train = Some(150);
        cfg
    }

    /// Records the largest index read since the last check and counts label reads.
    struct Tracked<'a> {
        inner: &'a AnnotatedStream,
        max_read: AtomicUsize,
        reads: AtomicUsize,
        label_reads: AtomicUsize,
    }

    impl Tracked<'_> {
        #[allow(dead_code)]
        fn labels(&self) -> &[u8] {
            self.label_reads.fetch_add(1, Ordering::SeqCst);
            self.inner.labels()
        }

        fn take_max(&self) -> Option<usize> {
            let reads = self.reads.swap(0, Ordering::SeqCst);
            let max = self.max_read.swap(0, Ordering::SeqCst);
            (reads > 0).then_some(max)
        }
    }

    impl SampleSource for Tracked<'_> {
        fn len(&self) -> usize {
            self.inner.len()
        }
        fn dim(&self) -> usize {
            self.inner.dim()
        }
        fn sample(&self, index: usize) -> &[f32] {
            self.reads.fetch_add(1, Ordering::SeqCst);
            self.max_read.fetch_max(index, Ordering::SeqCst);
            self.inner.sample(index)
        }
    }

    struct Discipline<'a> {
        source: &'a Tracked<'a>,
        violations: Mutex<Vec<String>>,
        chunks_seen: usize,
    }

    impl RunObserver for Discipline<'_> {
        fn warmed_up(&mut self, warmup: Range<usize>, _cache_hit: bool) {
            if let Some(max) = self.source.take_max() {
                if max >= warmup.end {
                    self.violations.lock().unwrap().push(format!("warm-up read {max}"));
                }
            }
        }

        fn chunk_done(&mut self, o: &ChunkOutcome) {
            self.chunks_seen += 1;
            match self.source.take_max() {
                Some(max) if max < o.chunk.end => {}
                other => self
                    .violations
                    .lock()
                    .unwrap()
                    .push(format!("chunk {} read {other:?}", o.chunk.index)),
            }
        }
    }

    #[test]
    fn detector_reads_only_the_past_and_no_labels() {
        let images = toy_images();
        for kind in [ProjectorKind::Som, ProjectorKind::Pca, ProjectorKind::Kpca] {
            let cfg = toy_config(kind);
            let stream = generate_for(&cfg, &images).unwrap();
            let tracked = Tracked {
                inner: &stream,
                max_read: AtomicUsize::new(0),
                reads: AtomicUsize::new(0),
                label_reads: AtomicUsize::new(0),
            };
            let mut obs = Discipline {
                source: &tracked,
                violations: Mutex::new(Vec::new()),
                chunks_seen: 0,
            };
            let out = detect(&cfg, "A", &tracked, &stream.annotation, &mut obs).unwrap();
            assert_eq!(obs.chunks_seen, 32);
            assert_eq!(out.records.len(), 31);
            assert!(obs.violations.lock().unwrap().is_empty(), "{kind}: {:?}", obs.violations);
            assert_eq!(tracked.label_reads.load(Ordering::SeqCst), 0);
        }
    }

    #[test]
    fn toy_drift_is_flagged_and_reports_are_consistent() {
        let images = toy_images();
        let cfg = toy_config(ProjectorKind::Som);
        let stream = generate_for(&cfg, &images).unwrap();
        let out = run_on_stream(&cfg, &stream, &mut Quiet).unwrap();
        let r = &out.report;
        assert_eq!(r.n_chunks, 32);
        assert!(r.flags_05 <= r.flags_10 && r.flags_10 < r.n_chunks);
        // total 4000 with segments of 1000: boundaries 1000, 2000, 3000; streamed from 800
        assert_eq!(r.injected_boundaries_streamed, 3);
        assert_eq!(r.segments_full_stream, 4);
        // group switches here are blatant, so most boundaries must be caught
        assert!(r.detection_rate >= 2.0 / 3.0, "{r:?}");
    }

    #[test]
    fn outputs_are_deterministic_and_cache_reused() {
        let images = toy_images();
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = toy_config(ProjectorKind::Pca);
        cfg.sampling = SamplingMode::Pooled;
        cfg.dump_diagrams = true;
        cfg.model_cache = Some(dir.path().join("cache/model.bin"));
        let stream = generate_for(&cfg, &images).unwrap();

        let mut files = Vec::new();
        for run in 0..2 {
            cfg.output_dir = Some(dir.path().join(format!("run{run}")));
            let out = run_on_stream(&cfg, &stream, &mut Quiet).unwrap();
            assert_eq!(out.report.model_cache_hit, run == 1);
            let read = |n: &str| fs::read(dir.path().join(format!("run{run}")).join(n)).unwrap();
            files.push([read("results.csv"), read("means.csv"), read("model.bin"), read("diagrams.csv")]);
            let back = read_report(&dir.path().join(format!("run{run}/report.json"))).unwrap();
            assert_eq!(back, out.report);
        }
        assert_eq!(files[0], files[1]);
        let results = String::from_utf8(files[0][0].clone()).unwrap();
        assert_eq!(results.lines().count(), 32);
    }

    #[test]
    fn stream_file_source() {
        let images = toy_images();
        let dir = tempfile::tempdir().unwrap();
        let cfg = toy_config(ProjectorKind::Pca);
        let stream = generate_for(&cfg, &images).unwrap();
        let path = dir.path().join("s.bin");
        crate::streamgen::write_stream(&stream, &path).unwrap();
        let text = format!("stream_path = {}\nprojector = pca\nchunk_size = 100\nkmeans_k = 8\nseed = 3\n", path.display());
        let file_cfg = RunConfig::parse(&text, Path::new("/")).unwrap();
        let a = run(&file_cfg, &mut Quiet).unwrap();
        let b = run_on_stream(&file_cfg, &stream, &mut Quiet).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.report.case, "A");
    }

    #[test]
    fn too_few_chunks_is_a_config_error() {
        let images = toy_images();
        let mut cfg = toy_config(ProjectorKind::Pca);
        let stream = generate_for(&cfg, &images).unwrap();
        cfg.chunk_size = 2000;
        assert_eq!(run_on_stream(&cfg, &stream, &mut Quiet).unwrap_err().exit_code(), 2);
    }
}
