//! Command-line front end. Parsing and dispatch live here so tests can drive
//! commands in-process; `main` only maps the outcome to an exit code.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::TrainConfig;
use crate::diagnostics::run_suite;
use crate::dither::{dither, DitherParams, MEDIAN_WINDOW};
use crate::image::Image;
use crate::kspace::{derive_seed, read_dataset, write_dataset, PhantomKind, SimulationParams};
use crate::metrics::{adversary_probe, eval_row, reconstruct_image, EvalReport, ProbeConfig, ProbeSource};
use crate::models::load_checkpoint_for;
use crate::parallel::par_map;
use crate::pgm::{decode_pgm, encode_pgm};
use crate::training::{run_training, ReconSetup, RunOptions, CONFIG_NAME};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

pub const METRICS_NAME: &str = "metrics.csv";
pub const DEFAULT_RESIDUAL_GAIN: f64 = 10.0;

#[derive(Parser, Debug)]
#[command(name = "bandless", version, about = "Synthetic MRI banding experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize a multi-coil k-space dataset.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        slices: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 4)]
        coils: usize,
        #[arg(long, default_value_t = 0.01)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = PhantomKind::Textured)]
        phantom: PhantomKind,
    },
    /// Train a predictor, with or without the orientation adversary.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Same schedule with the adversarial terms removed.
        #[arg(long)]
        no_adversary: bool,
        /// Base preset applied before the config file (desk or paper).
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Extra `key=value` overrides, applied last.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        quiet: bool,
    },
    /// Reconstruct every slice and write images plus metrics.
    Reconstruct {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ImageFormat::Pgm)]
        format: ImageFormat,
        /// Training config; defaults to the one next to the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_RESIDUAL_GAIN)]
        residual_gain: f64,
    },
    /// Blur-and-noise baseline applied to images in a directory.
    Dither {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.125)]
        alpha: f64,
        #[arg(long, default_value_t = 0.03)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a fresh orientation classifier on reconstructions.
    ProbeBanding {
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ProbeTarget::Predictor)]
        source: ProbeTarget,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Finite-difference check of every differentiable primitive.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ImageFormat {
    Pgm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProbeTarget {
    Predictor,
    ZeroFilled,
    GroundTruth,
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code. Output goes to stdout, diagnostics to stderr.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        Error::Config { .. } => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

pub fn run(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Simulate {
            out,
            slices,
            size,
            coils,
            sigma,
            seed,
            phantom,
        } => {
            let params = SimulationParams {
                slices,
                size,
                coils,
                sigma,
                seed,
                kind: phantom,
            };
            params.validate()?;
            println!(
                "simulate: out = {}\nslices = {slices}\nsize = {size}\ncoils = {coils}\nsigma = {sigma}\nseed = {seed}\nphantom = {phantom}",
                out.display()
            );
            let written = write_dataset(&out, &params)?;
            println!("wrote {} slices", written.len());
        }
        Command::Train {
            data,
            config,
            out,
            no_adversary,
            preset,
            seed,
            overrides,
            quiet,
        } => {
            let cfg = resolve_train_config(config.as_deref(), preset.as_deref(), seed, no_adversary, &overrides)?;
            guard_output(&data, &out)?;
            println!("# resolved config\n{}", cfg.to_text());
            let dataset = read_dataset(&data)?;
            let outcome = run_training::<f32>(
                &dataset,
                &cfg,
                &RunOptions {
                    out_dir: Some(out.clone()),
                    verbose: !quiet,
                },
            )?;
            println!(
                "trained {} steps; wrote {} checkpoints to {}",
                outcome.log.len(),
                outcome.checkpoints.len(),
                out.display()
            );
        }
        Command::Reconstruct {
            ckpt,
            data,
            out,
            format: ImageFormat::Pgm,
            config,
            residual_gain,
        } => {
            let cfg = config_for_checkpoint(&ckpt, config.as_deref())?;
            guard_output(&data, &out)?;
            println!("# resolved config\n{}residual_gain = {residual_gain}\n", cfg.to_text());
            let params = load_checkpoint_for::<f32>(&ckpt, &cfg.predictor, &cfg.adversary)?;
            let dataset = read_dataset(&data)?;
            let report = reconstruct_dir(&params.predictor, &dataset, &cfg, &out, residual_gain)?;
            print!("{}", report.summary_text());
        }
        Command::Dither {
            input,
            out,
            alpha,
            noise,
            seed,
        } => {
            guard_output(&input, &out)?;
            println!("dither: alpha = {alpha}\nnoise = {noise}\nwindow = {MEDIAN_WINDOW}\nseed = {seed}");
            let n = dither_dir(&input, &out, alpha, noise, seed)?;
            println!("dithered {n} images into {}", out.display());
        }
        Command::ProbeBanding {
            ckpt,
            data,
            seed,
            source,
            config,
            epochs,
        } => {
            let cfg = match &ckpt {
                Some(c) => config_for_checkpoint(c, config.as_deref())?,
                None => resolve_train_config(config.as_deref(), None, None, false, &[])?,
            };
            let mut probe = ProbeConfig {
                seed,
                ..ProbeConfig::default()
            };
            if let Some(e) = epochs {
                probe.epochs = e;
            }
            println!(
                "# resolved config\n{}probe_source = {source:?}\nprobe_epochs = {}\nprobe_lr = {}\nprobe_seed = {seed}\n",
                cfg.to_text(),
                probe.epochs,
                probe.lr
            );
            let dataset = read_dataset(&data)?;
            let setup = ReconSetup::from(&cfg);
            let params;
            let src = match source {
                ProbeTarget::GroundTruth => ProbeSource::GroundTruth,
                ProbeTarget::ZeroFilled => ProbeSource::ZeroFilled,
                ProbeTarget::Predictor => {
                    let path = ckpt.as_ref().ok_or_else(|| {
                        Error::Config {
                            line: 0,
                            detail: "--ckpt is required for the predictor source".into(),
                        }
                    })?;
                    params = load_checkpoint_for::<f32>(path, &cfg.predictor, &cfg.adversary)?;
                    ProbeSource::Predictor(&params.predictor)
                }
            };
            let r = adversary_probe(src, &dataset, &setup, &probe)?;
            println!(
                "seed = {seed}\naccuracy = {:.4}\ntrain_accuracy = {:.4}\ntest_images = {}",
                r.accuracy, r.train_accuracy, r.n_test
            );
        }
        Command::Gradcheck { seeds, seed } => {
            println!("gradcheck: seeds = {seeds}\nseed = {seed}");
            let report = run_suite(seeds, seed);
            print!("{}", report.table());
            println!("elapsed {:.1}s", report.seconds);
            if !report.passed() {
                eprintln!("gradcheck: some checks failed");
                return Ok(EXIT_RUNTIME);
            }
        }
    }
    Ok(EXIT_OK)
}

/// Precedence: preset, then config file, then flags.
pub fn resolve_train_config(
    file: Option<&Path>,
    preset: Option<&str>,
    seed: Option<u64>,
    no_adversary: bool,
    overrides: &[String],
) -> Result<TrainConfig> {
    let mut cfg = match preset {
        Some(p) => TrainConfig::preset(p)?,
        None => TrainConfig::desk(),
    };
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_text(&text)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if no_adversary {
        cfg.adversarial = false;
    }
    for kv in overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config {
            line: 0,
            detail: format!("override `{kv}` is not key=value"),
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The explicit config if given, else `config.txt` beside the checkpoint,
/// else the desk preset.
pub fn config_for_checkpoint(ckpt: &Path, explicit: Option<&Path>) -> Result<TrainConfig> {
    let beside = ckpt.parent().map(|d| d.join(CONFIG_NAME));
    let file = explicit
        .map(Path::to_path_buf)
        .or_else(|| beside.filter(|p| p.is_file()));
    resolve_train_config(file.as_deref(), None, None, false, &[])
}

/// Refuses to write into the input directory.
fn guard_output(input: &Path, out: &Path) -> Result<()> {
    let canon = |p: &Path| p.canonicalize().unwrap_or_else(|_| p.to_path_buf());
    if canon(input) == canon(out) {
        return Err(Error::invalid(
            "output directory",
            format!("{} is the input directory", out.display()),
        ));
    }
    Ok(())
}

pub fn recon_name(i: usize) -> String {
    format!("recon_{i:05}.pgm")
}

pub fn target_name(i: usize) -> String {
    format!("target_{i:05}.pgm")
}

pub fn residual_name(i: usize) -> String {
    format!("residual_{i:05}.pgm")
}

/// Writes recon, target and amplified |residual| PGMs for every slice, all
/// windowed to `[0, target max]`, plus the metrics CSV.
pub fn reconstruct_dir(
    predictor: &crate::models::Namespace<f32>,
    dataset: &[crate::kspace::KSpaceSlice],
    cfg: &TrainConfig,
    out: &Path,
    residual_gain: f64,
) -> Result<EvalReport> {
    crate::io::create_dir(out)?;
    let setup = ReconSetup::from(cfg);
    let rows = par_map(dataset.len(), |i| {
        let s = &dataset[i];
        let recon = reconstruct_image(s, false, predictor, &setup)?;
        let target = s.target_image();
        let window = target.max();
        let residual = Image {
            data: recon
                .data
                .iter()
                .zip(&target.data)
                .map(|(a, b)| (a - b).abs() * residual_gain)
                .collect(),
            ..target.clone()
        };
        for (name, img) in [(recon_name(i), &recon), (target_name(i), &target), (residual_name(i), &residual)] {
            crate::io::write_atomic(&out.join(name), &encode_pgm(img, window))?;
        }
        eval_row(i, s.seed, &recon, &target)
    })?;
    let report = EvalReport::from_rows(rows);
    crate::io::write_atomic(&out.join(METRICS_NAME), report.to_csv().as_bytes())?;
    Ok(report)
}

/// Image scaled to `[0, 1]` by its maxval.
pub fn pgm_image(bytes: &[u8], path: &Path) -> Result<Image> {
    let p = decode_pgm(bytes, path)?;
    let m = p.maxval as f64;
    Ok(Image {
        h: p.h,
        w: p.w,
        data: p.samples.iter().map(|&s| s as f64 / m).collect(),
    })
}

/// Dithers every `.pgm` in `input` (name order, file `i` seeded with
/// `derive_seed(seed, i)`) and writes same-named PGMs with window 1 into
/// `out`.
pub fn dither_dir(input: &Path, out: &Path, alpha: f64, noise: f64, seed: u64) -> Result<usize> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(input)
        .map_err(|e| Error::io(input, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid("dither input", format!("no .pgm files in {}", input.display())));
    }
    crate::io::create_dir(out)?;
    for (i, path) in files.iter().enumerate() {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let img = pgm_image(&bytes, path)?;
        let params = DitherParams {
            alpha,
            noise_c: noise,
            window: MEDIAN_WINDOW,
            seed: derive_seed(seed, i as u64),
        };
        let d = dither(&img, &params)?;
        let name = path.file_name().expect("listed file has a name");
        crate::io::write_atomic(&out.join(name), &encode_pgm(&d, 1.0))?;
    }
    Ok(files.len())
}
