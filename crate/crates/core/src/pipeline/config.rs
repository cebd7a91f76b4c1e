//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::projectors::{KpcaParams, ProjectorKind, SomParams};
use crate::stats::{ReferenceMode, Thresholds};
use crate::streamgen::{CaseSpec, SamplingMode};

#[derive(Debug, Clone, PartialEq)]
pub enum StreamSource {
    /// Generate a named case (`A`, `B`, `C`, `single:<digits>`) from MNIST.
    Case { name: String, mnist_dir: PathBuf },
    /// Load a container written by `generate`.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: StreamSource,
    /// Overrides the case's total length (generated streams only).
    pub total_len: Option<usize>,
    pub sampling: SamplingMode,
    pub projector: ProjectorKind,
    pub chunk_size: usize,
    pub warmup_fraction: f64,
    /// First streamed sample; defaults to the end of the warm-up window.
    pub start_offset: Option<usize>,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub latent_dim: usize,
    pub kmeans_k: usize,
    pub seed: u64,
    /// Seed of stream generation; defaults to `seed`.
    pub stream_seed: Option<u64>,
    pub thresholds: Thresholds,
    pub som: SomParams,
    pub kpca_gamma: Option<f64>,
    pub kpca_max_train: Option<usize>,
    pub reference_mode: ReferenceMode,
    pub tolerance_chunks: usize,
    pub output_dir: Option<PathBuf>,
    pub model_cache: Option<PathBuf>,
    pub dump_diagrams: bool,
}

impl RunConfig {
    pub fn for_case(name: &str, mnist_dir: impl Into<PathBuf>, projector: ProjectorKind, seed: u64) -> Self {
        Self {
            source: StreamSource::Case {
                name: name.to_string(),
                mnist_dir: mnist_dir.into(),
            },
            total_len: None,
            sampling: SamplingMode::TwoStage,
            projector,
            chunk_size: 250,
            warmup_fraction: 0.2,
            start_offset: None,
            grid_rows: 10,
            grid_cols: 10,
            latent_dim: 2,
            kmeans_k: 100,
            seed,
            stream_seed: None,
            thresholds: Thresholds::default(),
            som: SomParams::default(),
            kpca_gamma: None,
            kpca_max_train: Some(1000),
            reference_mode: ReferenceMode::Consecutive,
            tolerance_chunks: 1,
            output_dir: None,
            model_cache: None,
            dump_diagrams: false,
        }
    }

    pub fn kpca_params(&self) -> KpcaParams {
        KpcaParams {
            latent_dim: self.latent_dim,
            gamma: self.kpca_gamma,
            max_train: self.kpca_max_train,
        }
    }

    pub fn stream_seed(&self) -> u64 {
        self.stream_seed.unwrap_or(self.seed)
    }

    /// Case name for generated streams; `None` for files.
    pub fn case_name(&self) -> Option<&str> {
        match &self.source {
            StreamSource::Case { name, .. } => Some(name),
            StreamSource::File(_) => None,
        }
    }

    /// Warm-up length for a stream of `total_len` samples.
    pub fn warmup_len(&self, total_len: usize) -> usize {
        (self.warmup_fraction * total_len as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return bad(format!("warmup_fraction {} must lie in (0, 1)", self.warmup_fraction));
        }
        if self.chunk_size < 2 {
            return bad(format!("chunk_size {} must be at least 2", self.chunk_size));
        }
        Thresholds::new(self.thresholds.strict, self.thresholds.loose)?;
        if self.grid_rows * self.grid_cols < 2 {
            return bad("the SOM grid needs at least 2 units".into());
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be positive".into());
        }
        if self.kmeans_k < 2 {
            return bad(format!("kmeans_k {} must be at least 2", self.kmeans_k));
        }
        if !(self.som.learning_rate > 0.0 && self.som.learning_rate <= 1.0) {
            return bad(format!("som_learning_rate {} must lie in (0, 1]", self.som.learning_rate));
        }
        if self.som.radius.is_some_and(|r| r.is_nan() || r <= 0.0) || self.som.min_radius.is_nan() || self.som.min_radius <= 0.0 {
            return bad("SOM radii must be positive".into());
        }
        if self.som.epochs == 0 {
            return bad("som_epochs must be positive".into());
        }
        if self.kpca_gamma.is_some_and(|g| !(g > 0.0 && g.is_finite())) {
            return bad("kpca_gamma must be positive".into());
        }
        if self.kpca_max_train.is_some_and(|m| m < 2) {
            return bad("kpca_max_train must be at least 2".into());
        }
        if let StreamSource::Case { name, .. } = &self.source {
            let mut spec = CaseSpec::from_name(name)?;
            if let Some(t) = self.total_len {
                spec = spec.with_total_len(t);
            }
            spec.validate()?;
        } else if self.total_len.is_some() {
            return bad("total_len applies to generated cases only".into());
        }
        Ok(())
    }

    /// Parses the text format; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = k.trim().to_string();
            if map.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::config(format!("line {}: duplicate key `{key}`", n + 1)));
            }
        }
        Self::from_map(map, base)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn from_map(mut map: BTreeMap<String, String>, base: &Path) -> Result<Self> {
        let path = |v: String| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let projector = match map.remove("projector") {
            Some(v) => parse_value::<ProjectorKind>("projector", &v)?,
            None => return Err(Error::config("missing key `projector`")),
        };
        let seed = take(&mut map, "seed")?.unwrap_or(0);
        let case = map.remove("case");
        let stream_path = map.remove("stream_path");
        let mnist_dir = map.remove("mnist_dir");
        let source = match (case, stream_path) {
            (Some(name), None) => StreamSource::Case {
                name,
                mnist_dir: path(mnist_dir.ok_or_else(|| Error::config("`case` needs `mnist_dir`"))?),
            },
            (None, Some(p)) => StreamSource::File(path(p)),
            (Some(_), Some(_)) => return Err(Error::config("set either `case` or `stream_path`, not both")),
            (None, None) => return Err(Error::config("one of `case` or `stream_path` is required")),
        };
        let mut cfg = RunConfig::for_case("A", "", projector, seed);
        cfg.source = source;

        macro_rules! field {
            ($key:literal => $target:expr) => {
                if let Some(v) = take(&mut map, $key)? {
                    $target = v;
                }
            };
        }
        field!("chunk_size" => cfg.chunk_size);
        field!("warmup_fraction" => cfg.warmup_fraction);
        field!("grid_rows" => cfg.grid_rows);
        field!("grid_cols" => cfg.grid_cols);
        field!("latent_dim" => cfg.latent_dim);
        field!("kmeans_k" => cfg.kmeans_k);
        field!("tolerance_chunks" => cfg.tolerance_chunks);
        field!("som_learning_rate" => cfg.som.learning_rate);
        field!("som_min_radius" => cfg.som.min_radius);
        field!("som_epochs" => cfg.som.epochs);
        field!("dump_diagrams" => cfg.dump_diagrams);
        cfg.total_len = take(&mut map, "total_len")?;
        cfg.start_offset = take(&mut map, "start_offset")?;
        cfg.stream_seed = take(&mut map, "stream_seed")?;
        cfg.som.radius = take(&mut map, "som_radius")?;
        cfg.kpca_gamma = take(&mut map, "kpca_gamma")?;
        if let Some(v) = map.remove("kpca_max_train") {
            cfg.kpca_max_train = if v == "none" {
                None
            } else {
                Some(parse_value("kpca_max_train", &v)?)
            };
        }
        if let Some(v) = map.remove("sampling") {
            cfg.sampling = match v.as_str() {
                "two_stage" => SamplingMode::TwoStage,
                "pooled" => SamplingMode::Pooled,
                _ => return Err(Error::config(format!("sampling `{v}`: expected two_stage or pooled"))),
            };
        }
        if let Some(v) = map.remove("reference_mode") {
            cfg.reference_mode = match v.as_str() {
                "consecutive" => ReferenceMode::Consecutive,
                "fixed" => ReferenceMode::Fixed,
                _ => return Err(Error::config(format!("reference_mode `{v}`: expected consecutive or fixed"))),
            };
        }
        if let Some(v) = map.remove("thresholds") {
            let parts: Vec<f64> = v
                .split(',')
                .map(|p| parse_value("thresholds", p.trim()))
                .collect::<Result<_>>()?;
            let [strict, loose] = parts[..] else {
                return Err(Error::config("thresholds needs two comma-separated levels"));
            };
            cfg.thresholds = Thresholds::new(strict, loose)?;
        }
        cfg.output_dir = map.remove("output_dir").map(path);
        cfg.model_cache = map.remove("model_cache").map(path);

        if let Some(key) = map.keys().next() {
            return Err(Error::config(format!("unknown key `{key}`")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form; parses back to the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match &self.source {
            StreamSource::Case { name, mnist_dir } => {
                kv("case", name.clone());
                kv("mnist_dir", mnist_dir.display().to_string());
            }
            StreamSource::File(p) => kv("stream_path", p.display().to_string()),
        }
        if let Some(t) = self.total_len {
            kv("total_len", t.to_string());
        }
        kv(
            "sampling",
            match self.sampling {
                SamplingMode::TwoStage => "two_stage",
                SamplingMode::Pooled => "pooled",
            }
            .into(),
        );
        kv("projector", self.projector.config_name().into());
        kv("chunk_size", self.chunk_size.to_string());
        kv("warmup_fraction", self.warmup_fraction.to_string());
        if let Some(o) = self.start_offset {
            kv("start_offset", o.to_string());
        }
        kv("grid_rows", self.grid_rows.to_string());
        kv("grid_cols", self.grid_cols.to_string());
        kv("latent_dim", self.latent_dim.to_string());
        kv("kmeans_k", self.kmeans_k.to_string());
        kv("seed", self.seed.to_string());
        if let Some(s) = self.stream_seed {
            kv("stream_seed", s.to_string());
        }
        kv("thresholds", format!("{},{}", self.thresholds.strict, self.thresholds.loose));
        kv("som_learning_rate", self.som.learning_rate.to_string());
        if let Some(r) = self.som.radius {
            kv("som_radius", r.to_string());
        }
        kv("som_min_radius", self.som.min_radius.to_string());
        kv("som_epochs", self.som.epochs.to_string());
        if let Some(g) = self.kpca_gamma {
            kv("kpca_gamma", g.to_string());
        }
        kv(
            "kpca_max_train",
            self.kpca_max_train.map_or("none".into(), |m| m.to_string()),
        );
        kv(
            "reference_mode",
            match self.reference_mode {
                ReferenceMode::Consecutive => "consecutive",
                ReferenceMode::Fixed => "fixed",
            }
            .into(),
        );
        kv("tolerance_chunks", self.tolerance_chunks.to_string());
        if let Some(o) = &self.output_dir {
            kv("output_dir", o.display().to_string());
        }
        if let Some(c) = &self.model_cache {
            kv("model_cache", c.display().to_string());
        }
        kv("dump_diagrams", self.dump_diagrams.to_string());
        s
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("`{key}`: cannot parse `{v}`")))
}

fn take<T: FromStr>(map: &mut BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    map.remove(key).map(|v| parse_value(key, &v)).transpose()
}
