use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ddst_lab::workflow::{self, FrameSource};
use ddst_lab::{ExperimentConfig, LabError, Net, Result};

#[derive(Debug, Parser)]
#[command(name = "ddst", version, about = "DDST link simulator with classic and learned receivers")]
struct Cli {
    /// TOML experiment configuration; defaults apply to omitted keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Single-threaded runs with wall-clock fields zeroed, so reruns give identical files.
    #[arg(long, global = true)]
    deterministic: bool,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build training and validation datasets for one network.
    Generate {
        #[arg(long, value_enum)]
        net: Net,
        /// Training rows (validation keeps its configured ratio).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train one network on its generated datasets.
    Train {
        #[arg(long, value_enum)]
        net: Net,
        /// Train once per configured L2 coefficient and write one loss curve each.
        #[arg(long)]
        alpha_grid: bool,
    },
    /// Run the online receiver over a frames file or simulated frames.
    Infer {
        /// One frame per line: N real parts then N imaginary parts.
        #[arg(long)]
        frames: Option<PathBuf>,
        /// Simulated frames when no file is given.
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// SNR of simulated frames in dB; omit for noiseless.
        #[arg(long)]
        snr: Option<f64>,
        #[arg(long, default_value = "CE_Net + SD_Net")]
        variant: String,
    },
    /// Monte-Carlo BER over the SNR, EVM and path-count grids.
    Sweep {
        /// Minimum frames per point.
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated variants, e.g. "LS_CE + ZF_SD,MMSE_CE + MMSE_SD".
        #[arg(long)]
        variants: Option<String>,
        /// Comma-separated dB values or start:step:stop.
        #[arg(long)]
        snr_grid: Option<String>,
        /// Comma-separated EVM targets in percent.
        #[arg(long)]
        evm: Option<String>,
        /// Comma-separated channel path counts.
        #[arg(long)]
        paths: Option<String>,
    },
    /// Report the drive level that meets each EVM target.
    CalibrateEvm {
        #[arg(long, default_value = "45,50,55,60,65")]
        evm: String,
    },
}

fn parse_list<T: std::str::FromStr>(flag: &str, text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|e| LabError::Config(format!("--{flag}: `{t}`: {e}"))))
        .collect()
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return parse_list("snr-grid", text);
    }
    let [start, step, stop] = [parts[0], parts[1], parts[2]].map(|p| parse_list::<f64>("snr-grid", p));
    let (start, step, stop) = (start?, step?, stop?);
    let (start, step, stop) = match (start.as_slice(), step.as_slice(), stop.as_slice()) {
        ([a], [b], [c]) if *b > 0.0 && c >= a => (*a, *b, *c),
        _ => return Err(LabError::Config(format!("--snr-grid: `{text}` is not start:step:stop with step > 0"))),
    };
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| start + step * k as f64).collect())
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    if cli.deterministic {
        config.deterministic = true;
    }
    if let Some(dir) = &cli.out_dir {
        config.out_dir = dir.clone();
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::Generate { net, count } => {
            let report = workflow::generate(&config, net, count)?;
            for f in &report.files {
                println!("{} {} rows -> {}", f.split, f.rows, f.path.display());
            }
            println!("manifest {} (config {})", report.manifest.display(), report.config_hash);
        }
        Command::Train { net, alpha_grid: false } => {
            let out = workflow::train_net(&config, net)?;
            for e in &out.report.curve {
                println!("epoch {:>3}  train {:.6e}  validation {:.6e}", e.epoch, e.train_loss, e.validation_loss);
            }
            println!("best epoch {} -> {}", out.report.best_epoch, out.checkpoint.display());
        }
        Command::Train { net, alpha_grid: true } => {
            for c in workflow::train_alpha_grid(&config, net)? {
                let last = c.report.final_epoch();
                println!(
                    "alpha {:e}  train {:.6e}  validation {:.6e} -> {}",
                    c.alpha,
                    last.train_loss,
                    last.validation_loss,
                    c.curve.display()
                );
            }
        }
        Command::Infer { frames, count, snr, variant } => {
            let source = match frames {
                Some(path) => FrameSource::File(path),
                None => FrameSource::Simulated { count, snr_db: snr },
            };
            let report = workflow::infer(&config, &source, Some(&variant))?;
            println!("{}: {}", report.variant, report.stages.join(" -> "));
            let total: f64 = report.frames.iter().map(|f| f.latency_s).sum();
            let n = report.frames.len().max(1) as f64;
            println!("{} frames, mean latency {:.3} ms", report.frames.len(), 1e3 * total / n);
            if let Some(errors) = report.bit_errors() {
                let bits: usize = report.frames.iter().map(|f| f.bits.len()).sum();
                println!("bit errors {errors} / {bits}");
            }
            println!("bits -> {}", report.bits_path.display());
        }
        Command::Sweep { trials, variants, snr_grid, evm, paths } => {
            if let Some(t) = trials {
                config.stopping.min_trials = t;
                config.stopping.max_trials = config.stopping.max_trials.max(t);
            }
            if let Some(v) = variants {
                config.variants = parse_list("variants", &v)?;
            }
            if let Some(g) = snr_grid {
                config.snr_grid_db = parse_grid(&g)?;
            }
            if let Some(e) = evm {
                config.evm_grid_pct = parse_list("evm", &e)?;
            }
            if let Some(p) = paths {
                config.paths_grid = parse_list("paths", &p)?;
            }
            let out = workflow::sweep(&config)?;
            let bpf = out.result.bits_per_frame;
            for r in &out.result.rows {
                let evm = r.evm_pct.map_or("-".into(), |e| format!("{e}%"));
                let cap = if r.capped { " (capped)" } else { "" };
                println!(
                    "{:<22} evm {:>4} L {:>2} snr {:>5.1}  ber {:.4e}  [{} errors / {} bits]{cap}",
                    r.variant,
                    evm,
                    r.paths,
                    r.snr_db,
                    r.ber,
                    r.bit_errors,
                    r.bits(bpf)
                );
            }
            println!("-> {}", out.csv.display());
        }
        Command::CalibrateEvm { evm } => {
            let targets: Vec<f64> = parse_list("evm", &evm)?;
            for r in workflow::calibrate_evm(&config, &targets)? {
                println!(
                    "target {:>5.1}%  drive {:.6e}  measured {:.3}%  |K_s| {:.6}",
                    r.target_evm_pct, r.drive_level, r.measured_evm_pct, r.data_gain_abs
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
