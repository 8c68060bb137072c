use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use agbo_core::features::{extract_features, Laterality, SegmentationMasks};
use agbo_core::imaging::{rgb_to_gray, standardize_to, BinaryMask, GrayImage, RgbImage};
use agbo_core::losses::{
    cross_entropy_loss, dice_loss, fn_penalty_mean, focal_loss_mean, seg_loss, total_loss_mean,
    FocalParams, LossError, ProbVector, SegLossWeights, DEFAULT_EPS,
};
use agbo_core::runio::{load_config, JsonlSink, RunSummary};
use agbo_core::{agbo_run_with, compare_methods, Benchmark, Method, RunOptions};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\ncore: agbo-core ",
    env!("CARGO_PKG_VERSION"),
    "\nprofile: ",
    env!("AGBO_BUILD_PROFILE"),
    "\ntarget: ",
    env!("AGBO_BUILD_TARGET"),
);

/// Hybrid genetic/Bayesian optimizer and fundus-image feature tools.
#[derive(Debug, Parser)]
#[command(name = "agbo", version, long_version = LONG_VERSION)]
struct Cli {
    /// Seed for every random choice. Overrides the config seed in `optimize`
    /// and is the first seed in `benchmark`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Maximize a built-in objective and write the evaluation history as JSONL.
    Optimize {
        /// JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Objective name: sphere, branin, rastrigin, hartmann6 or mock-tuning.
        #[arg(long)]
        objective: Benchmark,
        /// History output, one JSON object per evaluation.
        #[arg(long)]
        out: PathBuf,
        /// Store wall time per evaluation in the `ms` field. Output is then
        /// no longer reproducible byte for byte.
        #[arg(long)]
        record_timing: bool,
    },
    /// Compare optimizers on equal evaluation budgets and write a CSV table.
    Benchmark {
        /// Comma-separated objective names.
        #[arg(long, value_delimiter = ',', required = true)]
        objectives: Vec<Benchmark>,
        /// Comma-separated methods: agbo, random, ga-only, bo-only.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "agbo,random,ga-only,bo-only"
        )]
        methods: Vec<Method>,
        /// Number of seeds, counted up from `--seed` (default 0).
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Objective evaluations per run, including the initial design.
        #[arg(long, default_value_t = 60)]
        budget: usize,
        /// CSV output.
        #[arg(long)]
        out: PathBuf,
    },
    /// Center, crop and resize a fundus photograph around its disk.
    Standardize {
        /// Input PNG.
        #[arg(long)]
        input: PathBuf,
        /// Output PNG (RGB).
        #[arg(long)]
        output: PathBuf,
        /// Output side length in pixels.
        #[arg(long, default_value_t = 512)]
        size: usize,
    },
    /// Measure cup/disc geometry, texture and vessel statistics.
    Features {
        /// Fundus image PNG; color input is converted to luma.
        #[arg(long)]
        image: PathBuf,
        /// Optic disc mask PNG, nonzero = foreground.
        #[arg(long)]
        disc: PathBuf,
        /// Optic cup mask PNG, nonzero = foreground.
        #[arg(long)]
        cup: PathBuf,
        /// Which eye, for the nasal/temporal split.
        #[arg(long, value_enum, default_value_t = Side::Right)]
        laterality: Side,
        /// JSON output.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print segmentation and classification loss terms as JSON.
    Loss {
        /// Predicted probabilities, one per line.
        #[arg(long)]
        pred: PathBuf,
        /// Labels in [0, 1], one per line.
        #[arg(long)]
        truth: PathBuf,
        /// Focal loss class weight.
        #[arg(long, default_value_t = 0.25)]
        alpha: f64,
        /// Focal loss focusing exponent.
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
        /// Weight of the false-negative penalty.
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Side {
    Left,
    Right,
}

impl From<Side> for Laterality {
    fn from(s: Side) -> Self {
        match s {
            Side::Left => Laterality::Left,
            Side::Right => Laterality::Right,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Optimize {
            config,
            objective,
            out,
            record_timing,
        } => optimize(&config, objective, &out, cli.seed, record_timing),
        Command::Benchmark {
            objectives,
            methods,
            seeds,
            budget,
            out,
        } => benchmark(
            &objectives,
            &methods,
            cli.seed.unwrap_or(0),
            seeds,
            budget,
            &out,
        ),
        Command::Standardize {
            input,
            output,
            size,
        } => {
            let img = read_rgb(&input)?;
            let out = standardize_to(&img, size)?;
            write_rgb(&out, &output)
        }
        Command::Features {
            image,
            disc,
            cup,
            laterality,
            out,
        } => {
            let img = read_gray(&image)?;
            let masks = SegmentationMasks::new(read_mask(&disc)?, read_mask(&cup)?)?;
            if (masks.disc.width(), masks.disc.height()) != (img.width(), img.height()) {
                bail!(
                    "image is {}x{} but masks are {}x{}",
                    img.width(),
                    img.height(),
                    masks.disc.width(),
                    masks.disc.height()
                );
            }
            let rec = extract_features(&img, &masks, laterality.into())?;
            let text = serde_json::to_string_pretty(&rec)?;
            std::fs::write(&out, text + "\n").with_context(|| format!("writing {}", out.display()))
        }
        Command::Loss {
            pred,
            truth,
            alpha,
            gamma,
            beta,
        } => {
            let fp = FocalParams {
                alpha,
                gamma,
                beta_fn: beta,
                ..FocalParams::default()
            };
            let v = loss_report(&read_column(&pred)?, &read_column(&truth)?, &fp)?;
            println!("{}", serde_json::to_string_pretty(&v)?);
            Ok(())
        }
    }
}

fn optimize(
    config: &Path,
    objective: Benchmark,
    out: &Path,
    seed: Option<u64>,
    record_timing: bool,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut sink = JsonlSink::create(out).with_context(|| format!("creating {}", out.display()))?;
    let start = Instant::now();
    let res = agbo_run_with(&cfg, &objective, &mut sink, RunOptions { record_timing })?;
    let summary = RunSummary {
        best_x: cfg.space.to_json_values(&res.best.0),
        best_f: res.best.1,
        evaluations: res.history.len(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        objective: objective.to_string(),
        history_path: out.display().to_string(),
        config: cfg,
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn benchmark(
    objectives: &[Benchmark],
    methods: &[Method],
    first_seed: u64,
    n_seeds: u64,
    budget: usize,
    out: &Path,
) -> Result<()> {
    if n_seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let seeds: Vec<u64> = (0..n_seeds).map(|i| first_seed.wrapping_add(i)).collect();
    let rows = compare_methods(objectives, methods, &seeds, budget)?;
    let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "objective,method,seed,best,evaluations")?;
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.objective, r.method, r.seed, r.best, r.evaluations
        )?;
    }
    w.flush()?;
    Ok(())
}

fn loss_report(pred: &[f64], truth: &[f64], fp: &FocalParams) -> Result<Value> {
    fp.validate()?;
    let p = ProbVector::new(pred.to_vec()).context("--pred")?;
    let g = ProbVector::new(truth.to_vec()).context("--truth")?;
    // Dice is undefined when both inputs are all zero; report null then.
    let defined = |r: Result<f64, LossError>| match r {
        Ok(v) => Ok(Some(v)),
        Err(LossError::UndefinedDice) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(json!({
        "dice": defined(dice_loss(&p, &g))?,
        "cross_entropy": cross_entropy_loss(&p, &g, DEFAULT_EPS)?,
        "seg": defined(seg_loss(&p, &g, &SegLossWeights::default()))?,
        "focal": focal_loss_mean(&p, &g, fp)?,
        "fn_penalty": fn_penalty_mean(&p, &g)?,
        "total": total_loss_mean(&p, &g, fp)?,
    }))
}

fn read_column(path: &Path) -> Result<Vec<f64>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .with_context(|| format!("{}:{}: not a number: {l:?}", path.display(), i + 1))
        })
        .collect()
}

fn open_image(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).with_context(|| format!("reading {}", path.display()))
}

fn read_rgb(path: &Path) -> Result<RgbImage> {
    let img = open_image(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let px = img.pixels().map(|p| p.0).collect();
    Ok(RgbImage::new(w, h, px)?)
}

fn read_gray(path: &Path) -> Result<GrayImage> {
    match open_image(path)? {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = (g.width() as usize, g.height() as usize);
            Ok(GrayImage::new(w, h, g.into_raw())?)
        }
        _ => Ok(rgb_to_gray(&read_rgb(path)?)),
    }
}

fn read_mask(path: &Path) -> Result<BinaryMask> {
    let g = open_image(path)?.to_luma8();
    let (w, h) = (g.width() as usize, g.height() as usize);
    Ok(BinaryMask::new(
        w,
        h,
        g.into_raw().into_iter().map(|v| v != 0).collect(),
    )?)
}

fn write_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    let raw: Vec<u8> = img.pixels().iter().flatten().copied().collect();
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, raw)
        .context("image buffer size")?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .with_context(|| format!("writing {}", path.display()))
}
