//! Config loading, history persistence and feature tables.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agbo::{AgboConfig, HistoryRecord, HistorySink};
use crate::features::FeatureRecord;
use crate::space::SearchSpace;
use crate::surrogate::Lengthscale;

#[derive(Debug, Error)]
pub enum RunIoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config at '{path}': {message}")]
    Config { path: String, message: String },
    #[error("history line {line}: {message}")]
    History { line: usize, message: String },
    #[error("no feature records to export")]
    EmptyFeatures,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn config_err(path: &str, message: impl Into<String>) -> RunIoError {
    RunIoError::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

/// Parses and validates a config. Errors name the offending key path.
pub fn parse_config(text: &str) -> Result<AgboConfig, RunIoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: AgboConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_err(&path, e.into_inner().to_string())
    })?;
    validate_ranges(&cfg)?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<AgboConfig, RunIoError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunIoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

/// The config with every default filled in, as pretty JSON.
pub fn resolved_config_json(cfg: &AgboConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("config serializes")
}

fn in_unit(path: &str, v: f64) -> Result<(), RunIoError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(config_err(path, format!("{v} is outside [0, 1]")))
    }
}

fn nonneg(path: &str, v: f64) -> Result<(), RunIoError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(config_err(path, format!("{v} must be finite and >= 0")))
    }
}

fn positive(path: &str, v: f64) -> Result<(), RunIoError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(config_err(path, format!("{v} must be finite and > 0")))
    }
}

fn validate_ranges(cfg: &AgboConfig) -> Result<(), RunIoError> {
    if let Err(e) = cfg.space.validate() {
        return Err(config_err("space", e.to_string()));
    }
    if cfg.init_points < 1 {
        return Err(config_err("init_points", "must be >= 1"));
    }
    in_unit("ga.pc", cfg.ga.pc)?;
    in_unit("ga.pm", cfg.ga.pm)?;
    if cfg.ga.pool_size < 1 {
        return Err(config_err("ga.pool_size", "must be >= 1"));
    }
    if cfg.ga.tournament_k < 1 {
        return Err(config_err("ga.tournament_k", "must be >= 1"));
    }
    nonneg("ga.mutation_sigma", cfg.ga.mutation_sigma)?;
    match &cfg.kernel.lengthscale {
        Lengthscale::Scalar(l) => positive("kernel.lengthscale", *l)?,
        Lengthscale::PerDim(ls) => {
            if ls.len() != cfg.space.normalized_len() {
                return Err(config_err(
                    "kernel.lengthscale",
                    format!(
                        "{} entries for {} normalized inputs",
                        ls.len(),
                        cfg.space.normalized_len()
                    ),
                ));
            }
            for (i, l) in ls.iter().enumerate() {
                positive(&format!("kernel.lengthscale[{i}]"), *l)?;
            }
        }
    }
    positive("kernel.signal_variance", cfg.kernel.signal_variance)?;
    nonneg("kernel.noise_variance", cfg.kernel.noise_variance)?;
    nonneg("acquisition.xi", cfg.acquisition.xi)?;
    nonneg("acquisition.kappa", cfg.acquisition.kappa)?;
    if cfg.patience == Some(0) {
        return Err(config_err("patience", "must be >= 1"));
    }
    Ok(())
}

/// On-disk form of a history record.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HistoryLine {
    iter: usize,
    x: Vec<Value>,
    f: f64,
    best: f64,
    acq: Option<f64>,
    ms: Option<f64>,
}

pub fn history_line(space: &SearchSpace, rec: &HistoryRecord) -> String {
    let line = HistoryLine {
        iter: rec.iter,
        x: space.to_json_values(&rec.candidate),
        f: rec.fitness,
        best: rec.best_so_far,
        acq: rec.acq_value,
        ms: rec.elapsed_ms,
    };
    serde_json::to_string(&line).expect("history record serializes")
}

/// Writes one JSON object per line and flushes after each, so an
/// interrupted run leaves a readable prefix.
pub struct JsonlSink<W: Write> {
    out: W,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl JsonlSink<File> {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Ok(Self::new(File::create(path)?))
    }
}

impl<W: Write> HistorySink for JsonlSink<W> {
    fn append(&mut self, space: &SearchSpace, rec: &HistoryRecord) -> std::io::Result<()> {
        append_history_record(&mut self.out, space, rec)
    }
}

pub fn append_history_record<W: Write + ?Sized>(
    out: &mut W,
    space: &SearchSpace,
    rec: &HistoryRecord,
) -> std::io::Result<()> {
    let mut line = history_line(space, rec);
    line.push('\n');
    out.write_all(line.as_bytes())?;
    out.flush()
}

pub fn parse_history<R: BufRead>(
    space: &SearchSpace,
    input: R,
) -> Result<Vec<HistoryRecord>, RunIoError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| RunIoError::History {
            line: i + 1,
            message,
        };
        let h: HistoryLine = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        let candidate = space
            .from_json_values(&h.x)
            .map_err(|e| err(e.to_string()))?;
        out.push(HistoryRecord {
            iter: h.iter,
            candidate,
            fitness: h.f,
            best_so_far: h.best,
            acq_value: h.acq,
            elapsed_ms: h.ms,
        });
    }
    Ok(out)
}

pub fn read_history(space: &SearchSpace, path: &Path) -> Result<Vec<HistoryRecord>, RunIoError> {
    let file = File::open(path).map_err(|source| RunIoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_history(space, BufReader::new(file))
}

/// Enough to replay a run: the resolved config plus where its history went.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: AgboConfig,
    pub objective: String,
    pub history_path: String,
    pub best_x: Vec<Value>,
    pub best_f: f64,
    pub evaluations: usize,
    pub wall_ms: f64,
}

pub const FEATURE_COLUMNS: [&str; 19] = [
    "disc_area",
    "cup_area",
    "cdr_area",
    "cdr_vertical",
    "cdr_horizontal",
    "nrr_area",
    "isnt_i",
    "isnt_s",
    "isnt_n",
    "isnt_t",
    "contrast",
    "dissimilarity",
    "homogeneity",
    "energy",
    "correlation",
    "asm",
    "vessel_mean",
    "vessel_max",
    "vessel_density",
];

/// Values of `r` in [`FEATURE_COLUMNS`] order.
pub fn feature_row(r: &FeatureRecord) -> [f64; 19] {
    [
        r.disc_area as f64,
        r.cup_area as f64,
        r.cdr_area,
        r.cdr_vertical,
        r.cdr_horizontal,
        r.nrr_area as f64,
        r.isnt.inferior as f64,
        r.isnt.superior as f64,
        r.isnt.nasal as f64,
        r.isnt.temporal as f64,
        r.texture.contrast,
        r.texture.dissimilarity,
        r.texture.homogeneity,
        r.texture.energy,
        r.texture.correlation,
        r.texture.asm,
        r.vessels.mean_vesselness,
        r.vessels.max_vesselness,
        r.vessels.vessel_density,
    ]
}

pub fn write_features_csv<W: Write>(records: &[FeatureRecord], out: W) -> Result<(), RunIoError> {
    if records.is_empty() {
        return Err(RunIoError::EmptyFeatures);
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(FEATURE_COLUMNS)?;
    for r in records {
        w.write_record(feature_row(r).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_features_csv(records: &[FeatureRecord], path: &Path) -> Result<(), RunIoError> {
    if records.is_empty() {
        return Err(RunIoError::EmptyFeatures);
    }
    write_features_csv(records, File::create(path)?)
}
