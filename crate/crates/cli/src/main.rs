//! `lwa-doa`: pattern export, simulation, sector planning, estimation and
//! the Monte Carlo benchmark.
//!
//! Every subcommand resolves one [`BenchConfig`] from `--config` (a file or a
//! bench preset name) and the flags, writes it to `config.echo` next to its
//! outputs, and lists everything it wrote in `manifest.txt`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use lwa_sbl::bench::{emit_csv, run_monte_carlo, BenchConfig};
use lwa_sbl::config::KvFile;
use lwa_sbl::io::{self, RunManifest, SnapshotMeta};
use lwa_sbl::pipeline::{estimate_detailed, Mode};
use lwa_sbl::presets::AntennaPreset;
use lwa_sbl::signal::{simulate_snapshots, Coherence, SnapshotMatrix, SourceScenario};
use lwa_sbl::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "lwa-doa", version, about = "Leaky-wave antenna DoA estimation with spatially filtered SBL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalized radiation pattern over the frequency grid.
    Pattern(Common),
    /// Simulate a snapshot matrix.
    Simulate(Common),
    /// Sector partition and frequency assignment.
    Plan(Common),
    /// Estimate DoAs from a snapshot file or an inline simulation.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Snapshot CSV written by `simulate`; simulates inline when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Known source count; threshold detection when absent.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Monte Carlo RMSE and runtime sweep.
    Bench(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Config file, or the name of a bench preset (paper-fig2, paper-fig3).
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    antenna_preset: Option<AntennaPreset>,
    /// Lowest frequency in Hz.
    #[arg(long, allow_hyphen_values = true)]
    fmin: Option<f64>,
    /// Highest frequency in Hz.
    #[arg(long, allow_hyphen_values = true)]
    fmax: Option<f64>,
    #[arg(long)]
    nfreq: Option<usize>,
    /// Field of view as `lo,hi` in degrees.
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
    fov: Option<Vec<f64>>,
    #[arg(long)]
    sector_width: Option<f64>,
    #[arg(long)]
    grid_step: Option<f64>,
    /// One method, or a comma list for `bench`.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<Mode>>,
    /// SNR in dB; a comma list for `bench`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    #[arg(long)]
    snapshots: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Source directions in degrees, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    doas: Option<Vec<f64>>,
    #[arg(long)]
    coherence: Option<Coherence>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Resolve the config and write the manifest without computing anything.
    #[arg(long)]
    dry_run: bool,
}

impl Common {
    fn resolve(&self) -> lwa_sbl::Result<BenchConfig> {
        let mut cfg = match &self.config {
            None => BenchConfig::preset("paper-fig2")?,
            Some(name) if BenchConfig::PRESETS.contains(&name.as_str()) => BenchConfig::preset(name)?,
            Some(path) => BenchConfig::from_kv(&KvFile::read(Path::new(path))?)?,
        };
        if let Some(a) = self.antenna_preset {
            if a != cfg.antenna {
                cfg.antenna = a;
                (cfg.f_min_hz, cfg.f_max_hz) = a.band()?;
            }
        }
        if let Some(v) = self.fmin {
            cfg.f_min_hz = v;
        }
        if let Some(v) = self.fmax {
            cfg.f_max_hz = v;
        }
        if let Some(v) = self.nfreq {
            cfg.n_freq = v;
        }
        if let Some(v) = &self.fov {
            let [lo, hi] = v.as_slice() else {
                return Err(Error::InvalidConfig("--fov takes `lo,hi`".into()));
            };
            (cfg.fov_lo_deg, cfg.fov_hi_deg) = (*lo, *hi);
        }
        if let Some(v) = self.sector_width {
            cfg.sector_width_deg = v;
        }
        if let Some(v) = self.grid_step {
            cfg.grid_step_deg = v;
        }
        if let Some(v) = &self.method {
            cfg.methods = v.clone();
        }
        if let Some(v) = &self.snr {
            cfg.snr_grid_db = v.clone();
        }
        if let Some(v) = self.snapshots {
            cfg.snapshots = v;
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.seed {
            cfg.master_seed = v;
        }
        if let Some(v) = &self.doas {
            cfg.doas_deg = v.clone();
        }
        if let Some(v) = self.coherence {
            cfg.coherence = v;
        }
        cfg.validate()?;
        cfg.grid()?;
        Ok(cfg)
    }
}

fn first_method(cfg: &BenchConfig) -> lwa_sbl::Result<Mode> {
    cfg.methods.first().copied().ok_or_else(|| Error::InvalidConfig("no method given".into()))
}

/// Scenario with phases and data drawn from `seed`; shared by `simulate` and
/// inline `estimate` so both produce the same matrix.
fn simulate(cfg: &BenchConfig) -> lwa_sbl::Result<(SnapshotMatrix<f64>, SnapshotMeta)> {
    let params = cfg.antenna_params();
    let grid = cfg.grid()?;
    let snr_db = cfg.snr_grid_db[0];
    let sc = SourceScenario::with_random_phases(cfg.doas_deg.clone(), cfg.coherence, cfg.master_seed)?;
    let sim = simulate_snapshots(&params, &grid, &sc, cfg.snapshots, snr_db, cfg.master_seed)?;
    let meta = SnapshotMeta {
        antenna: cfg.antenna,
        f_min_hz: cfg.f_min_hz,
        f_max_hz: cfg.f_max_hz,
        n_freq: cfg.n_freq,
        snapshots: cfg.snapshots,
        snr_db,
        seed: cfg.master_seed,
        doas_deg: cfg.doas_deg.clone(),
        coherence: cfg.coherence,
        sigma2: sim.sigma2,
    };
    Ok((sim.y, meta))
}

fn write(path: PathBuf, body: String, files: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    files.push(path);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let (name, common) = match &cli.command {
        Command::Pattern(c) => ("pattern", c),
        Command::Simulate(c) => ("simulate", c),
        Command::Plan(c) => ("plan", c),
        Command::Estimate { common, .. } => ("estimate", common),
        Command::Bench(c) => ("bench", c),
    };
    let cfg = common.resolve()?;
    let out = &common.out_dir;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let started = io::unix_now();
    let mut files = Vec::new();
    let mut code = 0u8;

    if !common.dry_run {
        let params = cfg.antenna_params();
        let grid = cfg.grid()?;
        match &cli.command {
            Command::Pattern(_) => {
                let n = ((cfg.fov_hi_deg - cfg.fov_lo_deg) / cfg.grid_step_deg + 1e-9).floor() as usize;
                let angles: Vec<f64> = (0..=n).map(|i| cfg.fov_lo_deg + i as f64 * cfg.grid_step_deg).collect();
                write(out.join("pattern.csv"), io::pattern_csv(&params, &grid, &angles)?, &mut files)?;
            }
            Command::Simulate(_) => {
                let (y, meta) = simulate(&cfg)?;
                files.extend(io::write_snapshots(&out.join("snapshots.csv"), &y, &meta)?);
            }
            Command::Plan(_) => {
                let plan = cfg.plan()?;
                let b_max = params.max_beamwidth(&grid)?;
                let table = io::plan_csv(&plan, &grid);
                print!("{table}");
                println!("# sectors = {}, w_theta = {} deg, B_max = {:.4} deg", plan.len(), plan.w_theta, b_max);
                write(out.join("plan.csv"), table, &mut files)?;
            }
            Command::Estimate { input, k, .. } => {
                let y = match input {
                    Some(p) => {
                        let (y, meta) = io::read_snapshots(p)?;
                        if let Some(m) = meta {
                            if m.grid()? != grid {
                                bail!(Error::InvalidConfig("snapshot file grid differs from the configured grid".into()));
                            }
                        }
                        y
                    }
                    None => simulate(&cfg)?.0,
                };
                let mut ec = cfg.estimator_config(first_method(&cfg)?)?;
                ec.k_known = *k;
                ec.validate()?;
                let res = estimate_detailed(&y, &params, &grid, &ec)?;
                for e in &res.estimates {
                    println!("{:.4}", e.angle);
                }
                write(out.join("estimates.csv"), io::estimates_csv(&res.estimates), &mut files)?;
                write(out.join("spectrum.csv"), io::spectrum_csv(&res.runs), &mut files)?;
            }
            Command::Bench(_) => {
                let res = run_monte_carlo(&cfg)?;
                files.extend(emit_csv(&res, out)?);
                print!("{}", lwa_sbl::bench::rmse_csv(&res));
                let frac = res.hard_failure_fraction();
                if frac > cfg.max_failure_fraction {
                    eprintln!("error: {:.1}% of trials failed (budget {:.1}%)", 100.0 * frac, 100.0 * cfg.max_failure_fraction);
                    code = EXIT_NUMERICAL;
                }
            }
        }
    }

    let manifest = RunManifest {
        command: name.to_string(),
        version: io::tool_version(),
        master_seed: cfg.master_seed,
        started_unix_s: started,
        finished_unix_s: io::unix_now(),
        files,
        dry_run: common.dry_run,
    };
    manifest.write(out, &cfg.to_kv_string())?;
    Ok(code)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::NumericalFailure(_)) => EXIT_NUMERICAL,
        Some(Error::Io(_)) | None => 1,
        Some(_) => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
