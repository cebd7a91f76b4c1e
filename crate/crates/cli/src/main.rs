use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use driftscape::changepoint::{default_penalty, pelt, read_means_csv, write_segments_csv};
use driftscape::mnist::{build_digit_index, load_mnist_dir};
use driftscape::pipeline::{read_report, report_table, run, ChunkOutcome, RunObserver, StreamSource};
use driftscape::streamgen::{generate_stream, write_stream, CaseSpec, SamplingMode};
use driftscape::{Error, Result, RunConfig};

#[derive(Parser)]
#[command(name = "driftscape", version, about = "Topological drift detection on data streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampling {
    TwoStage,
    Pooled,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an annotated stream from MNIST.
    Generate {
        /// A, B, C or single:<digits>
        #[arg(long)]
        case: String,
        #[arg(long)]
        mnist: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Container path; the annotation goes next to it as .json
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "two-stage")]
        sampling: Sampling,
        #[arg(long)]
        total_len: Option<usize>,
    },
    /// Run the detector as described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Suppress per-chunk progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Segment a means.csv with PELT.
    Pelt {
        #[arg(long)]
        means: PathBuf,
        /// Defaults to 2·σ̂²·ln n with σ̂² from first differences.
        #[arg(long)]
        penalty: Option<f64>,
        /// Segments CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate report.json files.
    Report {
        #[arg(long)]
        glob: String,
        /// Directory for report.txt and report.csv; only printed when omitted.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

struct Progress {
    quiet: bool,
}

impl RunObserver for Progress {
    fn warmed_up(&mut self, warmup: Range<usize>, cache_hit: bool) {
        if !self.quiet {
            let how = if cache_hit { "loaded from cache" } else { "fitted" };
            eprintln!("models {how} on samples {}..{}", warmup.start, warmup.end);
        }
    }

    fn chunk_done(&mut self, o: &ChunkOutcome) {
        if self.quiet {
            return;
        }
        if let Some(r) = &o.record {
            let mark = if r.flag_05 { " *" } else { "" };
            eprintln!("chunk {:>4} [{}, {}) p = {:.4e}{mark}", r.chunk_index, r.start_sample, r.end_sample, r.p_value);
        }
    }
}

fn generate(case: &str, mnist: &Path, seed: u64, out: &Path, sampling: Sampling, total_len: Option<usize>) -> Result<()> {
    let mut spec = CaseSpec::from_name(case)?;
    if let Some(t) = total_len {
        spec = spec.with_total_len(t);
    }
    spec.validate()?;
    let images = load_mnist_dir(mnist)?;
    let mode = match sampling {
        Sampling::TwoStage => SamplingMode::TwoStage,
        Sampling::Pooled => SamplingMode::Pooled,
    };
    let stream = generate_stream(&spec, &build_digit_index(images.labels()), &images, seed, mode)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_stream(&stream, out)?;
    println!(
        "wrote {} samples of case {} ({} boundaries) to {}",
        stream.annotation.total_len,
        stream.case,
        stream.annotation.boundaries.len(),
        out.display()
    );
    Ok(())
}

fn default_output_dir(cfg: &RunConfig) -> PathBuf {
    let case = match &cfg.source {
        StreamSource::Case { name, .. } => name.replace([':', ','], "_"),
        StreamSource::File(p) => p.file_stem().map_or("stream".into(), |s| s.to_string_lossy().into_owned()),
    };
    PathBuf::from("runs").join(format!(
        "{case}_{}_{}_{}",
        cfg.projector.config_name(),
        cfg.chunk_size,
        cfg.seed
    ))
}

fn run_config(path: &Path, quiet: bool) -> Result<()> {
    let mut cfg = RunConfig::from_file(path)?;
    if cfg.output_dir.is_none() {
        cfg.output_dir = Some(default_output_dir(&cfg));
    }
    let out = run(&cfg, &mut Progress { quiet })?;
    let r = &out.report;
    print!("{}", report_table(std::slice::from_ref(r)).text);
    println!(
        "detection rate {:.3}, false-alarm rate {:.3} (tolerance {} chunk(s)), {:.1} s",
        r.detection_rate, r.false_alarm_rate, r.tolerance_chunks, r.wall_time_secs
    );
    if let Some(dir) = &cfg.output_dir {
        println!("outputs in {}", dir.display());
    }
    Ok(())
}

fn run_pelt(means: &Path, penalty: Option<f64>, out: Option<&Path>) -> Result<()> {
    let file = File::open(means).map_err(|_| Error::MissingData(means.to_path_buf()))?;
    let series = read_means_csv(BufReader::new(file))?;
    let penalty = penalty.unwrap_or_else(|| default_penalty(&series));
    let seg = pelt(&series, penalty)?;
    let chunks: Vec<String> = seg.breakpoints.iter().map(|&b| series.chunk_indices[b].to_string()).collect();
    eprintln!(
        "{} breakpoint(s) at chunks [{}], penalty {penalty:.6e}",
        seg.breakpoints.len(),
        chunks.join(", ")
    );
    match out {
        Some(path) => {
            let mut w = io::BufWriter::new(File::create(path)?);
            write_segments_csv(&mut w, &series, &seg)?;
            w.flush()?;
        }
        None => write_segments_csv(&mut io::stdout().lock(), &series, &seg)?,
    }
    Ok(())
}

fn run_report(pattern: &str, out_dir: Option<&Path>) -> Result<()> {
    let paths = glob::glob(pattern).map_err(|e| Error::config(format!("bad glob {pattern:?}: {e}")))?;
    let mut files: Vec<PathBuf> = paths
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Io(e.into()))?;
    files.sort();
    let reports = files.iter().map(|p| read_report(p)).collect::<Result<Vec<_>>>()?;
    let table = report_table(&reports);
    print!("{}", table.text);
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.txt"), &table.text)?;
        fs::write(dir.join("report.csv"), &table.csv)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate {
            case,
            mnist,
            seed,
            out,
            sampling,
            total_len,
        } => generate(case, mnist, *seed, out, *sampling, *total_len),
        Command::Run { config, quiet } => run_config(config, *quiet),
        Command::Pelt { means, penalty, out } => run_pelt(means, *penalty, out.as_deref()),
        Command::Report { glob, out_dir } => run_report(glob, out_dir.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
