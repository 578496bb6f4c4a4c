use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use memxbar::checkpoint::{self, Checkpoint};
use memxbar::harness::{self, report, ExperimentConfig};
use memxbar::qat::{train_qat, QuantizedNet};
use memxbar::{DeviceModelParams, Error};

#[derive(Parser)]
#[command(version, about = "Memristor crossbar simulation experiments")]
struct Cli {
    /// Experiment config (TOML). Built-in defaults when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's output directory.
    #[arg(short, long, global = true)]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit device spreads and nonlinearity to the reference cell statistics.
    Calibrate {
        /// Start from the uncalibrated spreads instead of the config's device.
        #[arg(long)]
        from_scratch: bool,
    },
    /// Paired-cell product statistics for the configured device.
    CellBench {
        /// Device parameters file, e.g. the output of `calibrate`.
        #[arg(long)]
        device: Option<PathBuf>,
    },
    /// Float baseline, PTQ and QAT across the configured bit widths.
    QuantSweep,
    /// Evaluate QAT networks on programmed device instances.
    MemristorEval,
    /// Rebuild summary and plot-data files from per-run CSVs.
    Report,
}

fn load_config(cli: &Cli) -> memxbar::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn load_device(path: &Path) -> memxbar::Result<DeviceModelParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let p: DeviceModelParams = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    p.validate()?;
    Ok(p)
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

/// Exit code 2: calibration finished but missed a tolerance window.
struct ToleranceFailure;

fn run(cli: &Cli) -> anyhow::Result<Option<ToleranceFailure>> {
    let cfg = load_config(cli)?;
    let out = &cfg.output_dir;
    match &cli.command {
        Command::Calibrate { from_scratch } => {
            let mut start = cfg.device;
            if *from_scratch {
                let u = DeviceModelParams::uncalibrated();
                start.g_low_rel_std = u.g_low_rel_std;
                start.g_high_rel_std = u.g_high_rel_std;
                start.g_half_rel_std = u.g_half_rel_std;
                start.nonlin_alpha = u.nonlin_alpha;
            }
            let res = harness::calibrate(
                &start,
                cfg.cell_bench_cells,
                cfg.hardware.correction_samples,
                cfg.master_seed,
            )?;
            println!(
                "calibration: {} evaluations, objective {:.5}, c = {:.1} 1/A",
                res.evaluations, res.objective, res.correction_factor
            );
            std::fs::create_dir_all(out).with_context(|| out.display().to_string())?;
            let device_path = out.join("calibrated_device.toml");
            std::fs::write(&device_path, toml::to_string_pretty(&res.params)?)
                .with_context(|| device_path.display().to_string())?;
            print_written(&[
                device_path,
                report::write_cell_bench(out, &res.rows)?,
                report::write_checks(out, &res.checks)?,
            ]);
            for c in &res.checks {
                println!(
                    "{} {:<10} {:<9} {:>10.5} in [{}, {}]",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.operation,
                    c.quantity,
                    c.value,
                    c.lo,
                    c.hi
                );
            }
            if !res.passed() {
                return Ok(Some(ToleranceFailure));
            }
        }
        Command::CellBench { device } => {
            let params = match device {
                Some(p) => load_device(p)?,
                None => cfg.device,
            };
            let (c, rows) = harness::run_cell_benchmark(
                &params,
                cfg.cell_bench_cells,
                cfg.hardware.correction_samples,
                cfg.master_seed,
            )?;
            println!("correction factor c = {c:.1} 1/A");
            for r in &rows {
                println!(
                    "{:<10} mean {:>11.4e} std {:>10.4e} min {:>11.4e} max {:>11.4e}",
                    r.operation, r.mean, r.std, r.min, r.max
                );
            }
            print_written(&[report::write_cell_bench(out, &rows)?]);
        }
        Command::QuantSweep => {
            if cfg.bits.is_empty() {
                println!("empty bit-width list, nothing to do");
                return Ok(None);
            }
            let (train, test) = cfg.dataset.generate()?;
            let sweep = harness::run_quant_sweep(&cfg, &train, &test)?;
            for r in &sweep.rows {
                match r.accuracy {
                    Some(a) => println!("{:<5} {:>2}-bit seed {} accuracy {:.4}", r.method.as_str(), r.bits, r.seed_index, a),
                    None => println!("{:<5} {:>2}-bit seed {} failed: {}", r.method.as_str(), r.bits, r.seed_index, r.note),
                }
            }
            print_written(&report::write_sweep(out, &sweep)?);
        }
        Command::MemristorEval => {
            if cfg.bits.is_empty() {
                println!("empty bit-width list, nothing to do");
                return Ok(None);
            }
            let (train, test) = cfg.dataset.generate()?;
            let mut nets = Vec::new();
            for &bits in &cfg.bits {
                let path = out.join("checkpoints").join(report::qat_checkpoint_name(bits, 0));
                let qnet = if path.exists() {
                    match checkpoint::read_file(&path)? {
                        Checkpoint::Network { net, quant: Some(quant) } if quant.weight_bits == bits => {
                            QuantizedNet { net, quant }
                        }
                        _ => anyhow::bail!("{} is not a {bits}-bit QAT network", path.display()),
                    }
                } else {
                    log::info!("{} missing, training a {bits}-bit QAT network", path.display());
                    let seed = harness::sweep::training_seed(&cfg, 0);
                    let outcome = train_qat(&cfg.training, &train, bits, seed)?;
                    let qnet = QuantizedNet {
                        net: outcome.net,
                        quant: outcome.quant.expect("QAT observers"),
                    };
                    std::fs::create_dir_all(path.parent().unwrap())?;
                    checkpoint::write_file(&path, &checkpoint::encode_network(&qnet.net, Some(&qnet.quant)))?;
                    qnet
                };
                nets.push((bits, qnet));
            }
            let reports = harness::run_memristor_eval(&cfg, &nets, &test)?;
            for r in &reports {
                let a = &r.aggregate;
                println!(
                    "{}-bit: digital error {:.4}, analog error {:.4} +/- {:.4} [{:.4}, {:.4}], spread {:.3}, {:.1}s",
                    r.bits,
                    r.digital_error,
                    a.mean,
                    a.std,
                    a.min,
                    a.max,
                    r.relative_spread(),
                    r.wall_clock_secs
                );
            }
            print_written(&report::write_memristor_reports(out, &reports)?);
        }
        Command::Report => {
            let written = report::report_from_dir(out)?;
            if written.is_empty() {
                println!("no per-run files under {}", out.display());
            }
            print_written(&written);
        }
    }
    Ok(None)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(ToleranceFailure)) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
