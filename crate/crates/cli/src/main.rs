mod config_args;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use config_args::ConfigArgs;
use jotrecon::experiment::{
    depth_csv, exposure_csv, load_dataset, load_simulation, make_dataset, quality, reconstruct, save_dataset,
    save_simulation, scene, simulate, sweep_depth, sweep_exposures, ExperimentConfig, MethodKind,
};
use jotrecon::io::{read_pgm, read_tensor, write_pgm, write_tensor, Pgm, Tensor};
use jotrecon::metrics::{format_db, log_psnr, psnr};
use jotrecon::mlnet::{train_mlnet, MlNetParams};
use jotrecon::solvers::merged_report_csv;
use jotrecon::Error;
use ndarray::Array2;

const REPORT_SCHEMA: &str = "Report CSV columns: iteration,objective,step_start,step,backtracks,wall_time_s \
(row 0 is the initial objective; objectives are summed over patches; for mlnet rows are layers and the \
objective is the data term of each layer's output).";
const HISTORY_SCHEMA: &str = "History CSV columns: epoch,tensor,learning_rate,train_loss,validation_loss \
(epoch 0 is the initialization; one row per epoch, each epoch updates one tensor).";
const EXPOSURE_SCHEMA: &str = "CSV columns: frames,method,psnr_db,seeds (PSNR averaged over seeds).";
const DEPTH_SCHEMA: &str = "CSV columns: depth,method,psnr_db,seconds (depth = iterations for fista, layers for the networks).";

#[derive(Parser)]
#[command(name = "jotrecon", version, about = "Simulate and reconstruct images from dense one-bit threshold sensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene, apply the optics and sample binary frames
    Simulate {
        /// Output directory (truth, rate, bits, thresholds, manifest)
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write the configured threshold tile as text
    MakePattern {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate training patches from scenes disjoint from evaluation scenes
    MakeDataset {
        #[arg(long)]
        out: PathBuf,
        /// Seed of the scene and patch selection
        #[arg(long, default_value_t = 0)]
        dataset_seed: u64,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train a network starting from the ISTA initialization
    #[command(after_help = HISTORY_SCHEMA)]
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Output parameter directory
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        history: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Reconstruct an exposure image from a simulation directory
    #[command(after_help = REPORT_SCHEMA)]
    Reconstruct {
        /// Simulation directory written by `simulate`
        #[arg(long)]
        input: PathBuf,
        /// Output image (.pgm for display, anything else for a float tensor)
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// PSNR between two images
    Psnr {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        peak: f64,
        /// Compare log(1 + x) images with peak log(1 + peak)
        #[arg(long)]
        log: bool,
    },
    /// PSNR against the number of frames
    #[command(after_help = EXPOSURE_SCHEMA)]
    SweepExposures {
        /// Comma-separated frame counts
        #[arg(long, value_delimiter = ',', default_value = "1,4,16,64")]
        frame_list: Vec<usize>,
        /// Comma-separated methods
        #[arg(long, value_delimiter = ',', default_value = "ml,fista")]
        methods: Vec<String>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// PSNR against iterations / layers
    #[command(after_help = DEPTH_SCHEMA)]
    SweepDepth {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,25")]
        depths: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

enum Failure {
    Config(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::Config(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

fn write_image(path: &Path, image: &Array2<f64>, range: f64) -> CliResult<()> {
    if is_pgm(path) {
        write_pgm(path, &Pgm::from_values(image, range, u16::MAX))?;
    } else {
        write_tensor(path, &Tensor::from_array2(image))?;
    }
    Ok(())
}

fn read_image(path: &Path, range: f64) -> CliResult<Array2<f64>> {
    if is_pgm(path) {
        Ok(read_pgm(path)?.normalized(range))
    } else {
        Ok(read_tensor(path)?.into_array2()?)
    }
}

fn init_threads(cfg: &ExperimentConfig) {
    let from_env = std::env::var("JOTRECON_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0);
    if let Some(n) = cfg.threads.or(from_env) {
        // a second initialization only happens in tests; ignoring it is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn load_params(cfg: &ExperimentConfig, config: &ConfigArgs) -> CliResult<Option<MlNetParams<f64>>> {
    if cfg.method != MethodKind::MlNet {
        return Ok(None);
    }
    let path = cfg
        .params
        .as_ref()
        .ok_or_else(|| Failure::Config("method mlnet needs --params".into()))?;
    let mut params = MlNetParams::load(path)?;
    if config.is_set("layers") {
        params = params.with_layers(cfg.layers);
    }
    Ok(Some(params))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { out, config } => {
            let cfg = config.resolve(None)?;
            init_threads(&cfg);
            let truth = scene(&cfg)?;
            let sim = simulate(&cfg, &truth, cfg.seed)?;
            save_simulation(&out, &cfg, &sim)?;
            let (h, w) = sim.stack.dims();
            println!("wrote {} frames of {h}x{w} to {}", sim.stack.frames(), out.display());
        }
        Command::MakePattern { out, config } => {
            let cfg = config.resolve(None)?;
            let pattern = cfg.threshold_pattern()?;
            write_text(&out, &pattern.to_text())?;
            println!("wrote {}x{} pattern to {}", pattern.tile_h(), pattern.tile_w(), out.display());
        }
        Command::MakeDataset { out, dataset_seed, config } => {
            let cfg = config.resolve(None)?;
            init_threads(&cfg);
            let samples = make_dataset(&cfg, cfg.train_patches, dataset_seed)?;
            save_dataset(&out, &cfg, &samples)?;
            println!("wrote {} samples to {}", samples.len(), out.display());
        }
        Command::Train {
            dataset,
            out,
            history,
            config,
        } => {
            let (samples, recorded) = load_dataset(&dataset)?;
            let cfg = config.resolve(Some(&recorded))?;
            init_threads(&cfg);
            let dict = cfg.dictionary()?;
            let op = cfg.operator()?;
            let rho = cfg.rho()?;
            let init = if cfg.fixed_step > 0.0 {
                MlNetParams::ista_init(&dict, &op, rho, cfg.fixed_step, cfg.mu, cfg.layers)?
            } else {
                let refs: Vec<_> = samples.iter().take(32).map(|s| &s.obs).collect();
                let (p, eta) = MlNetParams::ista_init_auto(&dict, &op, rho, cfg.mu, cfg.layers, &refs)?;
                log::info!("ISTA step {eta:e}");
                p
            };
            let (params, hist) = train_mlnet(&samples, &init, &cfg.train_config())?;
            params.save(&out)?;
            if let Some(path) = history {
                write_text(&path, &hist.to_csv())?;
            }
            if hist.aborted {
                return Err(Failure::Numeric(format!(
                    "training diverged; best parameters (epoch {}) written to {}",
                    hist.best_epoch,
                    out.display()
                )));
            }
            println!(
                "validation loss {:.6e} -> {:.6e} (best epoch {})",
                hist.initial_validation(),
                hist.best_validation(),
                hist.best_epoch
            );
        }
        Command::Reconstruct {
            input,
            out,
            report,
            config,
        } => {
            let stored = load_simulation(&input)?;
            let cfg = config.resolve(Some(&stored.config))?;
            init_threads(&cfg);
            let params = load_params(&cfg, &config)?;
            let obs = stored.stack.observations();
            let rec = reconstruct(&cfg, &obs, params.as_ref(), true)?;
            write_image(&out, &rec.image, cfg.range)?;
            if let Some(path) = report {
                write_text(&path, &merged_report_csv(&rec.reports))?;
            }
            match &stored.truth {
                Some(truth) => println!(
                    "{}: {} dB in {:.3} s",
                    cfg.method.name(),
                    format_db(quality(&cfg, &rec.image, truth)?),
                    rec.elapsed.as_secs_f64()
                ),
                None => println!("{}: done in {:.3} s", cfg.method.name(), rec.elapsed.as_secs_f64()),
            }
        }
        Command::Psnr {
            estimate,
            truth,
            peak,
            log,
        } => {
            let e = read_image(&estimate, peak)?;
            let t = read_image(&truth, peak)?;
            let db = if log {
                log_psnr(e.view(), t.view(), peak)?
            } else {
                psnr(e.view(), t.view(), peak)?
            };
            println!("{}", format_db(db));
        }
        Command::SweepExposures {
            frame_list,
            methods,
            seeds,
            out,
            config,
        } => {
            let cfg = config.resolve(None)?;
            init_threads(&cfg);
            let methods = methods
                .iter()
                .map(|m| m.parse::<MethodKind>())
                .collect::<Result<Vec<_>, _>>()?;
            let mut params = None;
            if methods.contains(&MethodKind::MlNet) {
                let mut with_net = cfg.clone();
                with_net.method = MethodKind::MlNet;
                params = load_params(&with_net, &config)?;
            }
            let rows = sweep_exposures(&cfg, &frame_list, &methods, seeds, params.as_ref())?;
            let csv = exposure_csv(&rows);
            write_text(&out, &csv)?;
            print!("{csv}");
        }
        Command::SweepDepth { depths, out, config } => {
            let cfg = config.resolve(None)?;
            init_threads(&cfg);
            let trained = match &cfg.params {
                Some(path) => Some(MlNetParams::load(path)?),
                None => None,
            };
            let rows = sweep_depth(&cfg, &depths, trained.as_ref())?;
            let csv = depth_csv(&rows);
            write_text(&out, &csv)?;
            print!("{csv}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            ExitCode::from(3)
        }
    }
}
