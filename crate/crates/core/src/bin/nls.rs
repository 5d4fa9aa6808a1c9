use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tdpsf::classify::classification_csv;
use tdpsf::experiments::{emit_report, measured_decay_rate, run_experiment, ExperimentPreset, PresetName, RunStatus, Scale};
use tdpsf::frame::compute_dual_window_with;
use tdpsf::propagate::velocity_factor;

#[derive(Parser)]
#[command(name = "nls", about = "Phase-space filtered open boundaries for Schrödinger equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset and write CSV series plus a summary.
    Run {
        preset: PresetName,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_enum, default_value_t = Scale::Ci)]
        scale: Scale,
    },
    /// Print the velocity factor and dual-window diagnostics.
    Calibrate {
        #[arg(long)]
        preset: Option<PresetName>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Classify the buffer framelets of a preset.
    Classify {
        #[arg(long, default_value = "freewave1d")]
        preset: PresetName,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Sweep velocity used for velocity-scaled parameters.
        #[arg(long)]
        velocity: Option<f64>,
        /// Print the full classification CSV instead of counts.
        #[arg(long)]
        dump: bool,
    },
}

fn load(name: PresetName, scale: Scale, config: Option<&PathBuf>) -> tdpsf::Result<ExperimentPreset> {
    match config {
        Some(path) => ExperimentPreset::from_file(name, scale, path),
        None => Ok(ExperimentPreset::new(name, scale)),
    }
}

fn real_main(cli: Cli) -> tdpsf::Result<ExitCode> {
    match cli.command {
        Command::Run { preset, config, out, workers, scale } => {
            let mut p = load(preset, scale, config.as_ref())?;
            if let Some(w) = workers {
                p.workers = w;
            }
            let result = run_experiment(&p)?;
            for path in emit_report(&result, &out)? {
                println!("wrote {}", path.display());
            }
            for r in &result.runs {
                let v = r.velocity.map(|v| format!(" v={v}")).unwrap_or_default();
                let e = r.error.map(|e| format!(" error={e:.3e}")).unwrap_or_default();
                let flag = match r.report.as_ref().and_then(|rep| rep.first_exceedance) {
                    Some(x) if r.status == RunStatus::Completed => format!(" flagged t={} mass={:e}", x.time, x.value),
                    _ => String::new(),
                };
                println!("{}{v}: {}{flag}{e} ({:.1} s)", r.baseline.as_str(), r.status.as_str(), r.wall_time);
            }
            Ok(if result.any_halted() { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::Calibrate { preset, config } => {
            println!("nu = {}", velocity_factor());
            let names = match preset {
                Some(p) => vec![p],
                None => PresetName::ALL.to_vec(),
            };
            for name in names {
                let p = load(name, Scale::Ci, config.as_ref())?;
                let v = p.velocities.first().copied().unwrap_or(1.0);
                let cfg = p.tdpsf_config(v)?;
                let dual = compute_dual_window_with(&cfg.frame, &cfg.grid, cfg.dual)?;
                let (a, b) = dual.frame_bounds();
                println!("[{name}]");
                println!("sigma = {}, xs = {}, ks = {}, q = {}", cfg.frame.sigma, cfg.frame.xs, cfg.frame.ks, cfg.frame.q);
                println!("frame bounds = [{a:.6}, {b:.6}]");
                println!("dual residual = {:.3e} after {} iterations", dual.residual, dual.iterations);
                println!("truncation radius = {} (whole box: {})", dual.truncation_radius(), dual.spans_whole_box());
                println!("decay rate: predicted {:.4}, measured {:.4}", cfg.frame.dual_decay_rate(), measured_decay_rate(&dual));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Classify { preset, config, velocity, dump } => {
            let p = load(preset, Scale::Ci, config.as_ref())?;
            let v = velocity.or(p.velocities.first().copied()).unwrap_or(1.0);
            let cfg = p.tdpsf_config(v)?;
            let csv = classification_csv(&cfg.classifier, &cfg.grid)?;
            if dump {
                print!("{csv}");
            } else {
                let mut counts = std::collections::BTreeMap::new();
                for line in csv.lines().skip(1) {
                    *counts.entry(line.rsplit(',').next().unwrap_or("").to_string()).or_insert(0usize) += 1;
                }
                for (k, n) in counts {
                    println!("{k}: {n}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
