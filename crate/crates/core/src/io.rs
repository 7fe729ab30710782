//! Plain-text file formats.
//!
//! Floats are written with Rust's shortest round-trip formatting unless a
//! fixed precision is part of the format, so a file read back reproduces the
//! in-memory values exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::config::{join_list, KvFile};
use crate::error::{Error, Result};
use crate::lwa::AntennaParams;
use crate::pipeline::{DoaEstimate, SectorRun};
use crate::presets::AntennaPreset;
use crate::sbl::TraceRow;
use crate::sector::SectorPlan;
use crate::signal::{Coherence, FrequencyGrid, SnapshotMatrix};

pub const SNAPSHOT_HEADER: &str = "freq_index,snapshot_index,re,im";

/// Long-format snapshot table, one row per `(frequency, snapshot)`.
pub fn snapshots_csv(y: &SnapshotMatrix<f64>) -> String {
    let mut s = String::with_capacity(32 * y.rows() * y.snapshots() + 64);
    s.push_str(SNAPSHOT_HEADER);
    s.push('\n');
    for i in 0..y.rows() {
        for t in 0..y.snapshots() {
            let z = y.data[(i, t)];
            let _ = writeln!(s, "{i},{t},{},{}", z.re, z.im);
        }
    }
    s
}

pub fn parse_snapshots_csv(text: &str) -> Result<SnapshotMatrix<f64>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SNAPSHOT_HEADER => {}
        _ => return Err(Error::Parse { line: 1, msg: format!("expected header `{SNAPSHOT_HEADER}`") }),
    }
    let mut cells = Vec::new();
    let (mut rows, mut cols) = (0usize, 0usize);
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Parse { line: line_no, msg: msg.to_string() };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let r: usize = f[0].parse().map_err(|_| bad("bad freq_index"))?;
        let c: usize = f[1].parse().map_err(|_| bad("bad snapshot_index"))?;
        let re: f64 = f[2].parse().map_err(|_| bad("bad re"))?;
        let im: f64 = f[3].parse().map_err(|_| bad("bad im"))?;
        rows = rows.max(r + 1);
        cols = cols.max(c + 1);
        cells.push((r, c, Complex::new(re, im)));
    }
    if cells.len() != rows * cols {
        return Err(Error::Parse {
            line: 0,
            msg: format!("expected {} entries for a {rows}x{cols} matrix, got {}", rows * cols, cells.len()),
        });
    }
    let mut m = DMatrix::from_element(rows, cols, Complex::new(f64::NAN, 0.0));
    for (r, c, z) in cells {
        m[(r, c)] = z;
    }
    SnapshotMatrix::new(m)
}

/// Everything needed to re-interpret a snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMeta {
    pub antenna: AntennaPreset,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub n_freq: usize,
    pub snapshots: usize,
    pub snr_db: f64,
    pub seed: u64,
    pub doas_deg: Vec<f64>,
    pub coherence: Coherence,
    pub sigma2: f64,
}

impl SnapshotMeta {
    pub fn to_kv_string(&self) -> String {
        format!(
            "antenna_preset = {}\nf_min_hz = {:?}\nf_max_hz = {:?}\nn_freq = {}\nsnapshots = {}\nsnr_db = {:?}\nseed = {}\ndoas_deg = {}\ncoherence = {}\nsigma2 = {:?}\n",
            self.antenna,
            self.f_min_hz,
            self.f_max_hz,
            self.n_freq,
            self.snapshots,
            self.snr_db,
            self.seed,
            join_list(&self.doas_deg),
            self.coherence,
            self.sigma2
        )
    }

    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        Ok(Self {
            antenna: kv.require("antenna_preset")?,
            f_min_hz: kv.require("f_min_hz")?,
            f_max_hz: kv.require("f_max_hz")?,
            n_freq: kv.require("n_freq")?,
            snapshots: kv.require("snapshots")?,
            snr_db: kv.require("snr_db")?,
            seed: kv.require("seed")?,
            doas_deg: kv.get_list("doas_deg")?.ok_or_else(|| Error::MissingKey("doas_deg".into()))?,
            coherence: kv.require("coherence")?,
            sigma2: kv.require("sigma2")?,
        })
    }

    pub fn grid(&self) -> Result<FrequencyGrid<f64>> {
        FrequencyGrid::new(self.f_min_hz, self.f_max_hz, self.n_freq)
    }
}

/// Sidecar path for a snapshot file: `<file>.meta`.
pub fn meta_path(snapshot_path: &Path) -> PathBuf {
    let mut p = snapshot_path.as_os_str().to_owned();
    p.push(".meta");
    PathBuf::from(p)
}

pub fn write_snapshots(path: &Path, y: &SnapshotMatrix<f64>, meta: &SnapshotMeta) -> Result<Vec<PathBuf>> {
    std::fs::write(path, snapshots_csv(y))?;
    let mp = meta_path(path);
    std::fs::write(&mp, meta.to_kv_string())?;
    Ok(vec![path.to_path_buf(), mp])
}

/// Reads a snapshot file and, when present, its sidecar.
pub fn read_snapshots(path: &Path) -> Result<(SnapshotMatrix<f64>, Option<SnapshotMeta>)> {
    let y = parse_snapshots_csv(&std::fs::read_to_string(path)?)?;
    let mp = meta_path(path);
    let meta = if mp.exists() { Some(SnapshotMeta::from_kv(&KvFile::read(&mp)?)?) } else { None };
    Ok((y, meta))
}

pub fn estimates_csv(est: &[DoaEstimate<f64>]) -> String {
    let mut s = String::from("angle_deg,weight,sector,refined\n");
    for e in est {
        let _ = writeln!(s, "{:.4},{:e},{},{}", e.angle, e.weight, e.sector, u8::from(e.refined));
    }
    s
}

/// Per-sector variance spectrum over the sector's own grid points.
pub fn spectrum_csv(runs: &[SectorRun<f64>]) -> String {
    let mut s = String::from("sector,theta_deg,gamma\n");
    for r in runs {
        for p in r.own.clone() {
            let _ = writeln!(s, "{},{:.4},{:e}", r.sector, r.grid[p], r.gamma[p]);
        }
    }
    s
}

/// Normalized power pattern `|a(f, theta)|^2` on a frequency x angle mesh,
/// 0 dB at each frequency's peak. Frequencies below cutoff carry no field
/// and are written as `-inf`.
pub fn pattern_csv(params: &AntennaParams<f64>, grid: &FrequencyGrid<f64>, angles: &[f64]) -> Result<String> {
    let mut s = String::from("f_hz,theta_deg,gain_db_normalized,is_radiating\n");
    for f in grid.iter() {
        let radiating = params.beam_angle(f).map(|b| b.is_radiating()).unwrap_or(false);
        let gains: Vec<f64> = angles
            .iter()
            .map(|&th| match params.steering_response(f, th) {
                Ok(a) => Ok(a.norm_sqr()),
                Err(Error::BelowCutoff { .. }) => Ok(0.0),
                Err(e) => Err(e),
            })
            .collect::<Result<_>>()?;
        let peak = gains.iter().copied().fold(0.0f64, f64::max);
        for (th, g) in angles.iter().zip(&gains) {
            let db = if peak > 0.0 && *g > 0.0 { 10.0 * (g / peak).log10() } else { f64::NEG_INFINITY };
            let _ = writeln!(s, "{f:?},{th:.4},{db:.4},{}", u8::from(radiating));
        }
    }
    Ok(s)
}

pub fn plan_csv(plan: &SectorPlan<f64>, grid: &FrequencyGrid<f64>) -> String {
    let mut s = String::from("sector,theta_lo_deg,theta_hi_deg,p,freq_lo_index,freq_hi_index,n_s,f_lo_hz,f_hi_hz\n");
    for sec in &plan.sectors {
        let _ = write!(s, "{},{:.4},{:.4},{}", sec.index, sec.theta_lo, sec.theta_hi, sec.p());
        match sec.band {
            Some(b) => {
                let _ = writeln!(s, ",{},{},{},{:?},{:?}", b.lo, b.hi, b.n_s(), grid.freq(b.lo), grid.freq(b.hi));
            }
            None => s.push_str(",,,0,,\n"),
        }
    }
    s
}

pub fn trace_csv(trace: &[TraceRow<f64>]) -> String {
    let mut s = String::from("iteration,max_gamma,sigma2,log_evidence,active,max_abs_beta\n");
    for r in trace {
        let beta = r.max_abs_beta.map(|b| format!("{b:e}")).unwrap_or_default();
        let _ = writeln!(s, "{},{:e},{:e},{:e},{},{}", r.iteration, r.max_gamma, r.sigma2, r.log_evidence, r.active, beta);
    }
    s
}

pub const MANIFEST: &str = "manifest.txt";
pub const CONFIG_ECHO: &str = "config.echo";

pub fn tool_version() -> String {
    format!("lwa-sbl v{}", env!("CARGO_PKG_VERSION"))
}

/// Run record: tool version, seed, timestamps and every file written. The
/// resolved config goes to its own file so it can be fed back verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub master_seed: u64,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub files: Vec<PathBuf>,
    pub dry_run: bool,
}

impl RunManifest {
    pub fn to_kv_string(&self) -> String {
        let files: Vec<String> = self.files.iter().map(|p| p.display().to_string()).collect();
        format!(
            "command = {}\nversion = {}\nmaster_seed = {}\nstarted_unix_s = {:.3}\nfinished_unix_s = {:.3}\nwall_time_s = {:.3}\ndry_run = {}\nconfig = {}\nfiles = {}\n",
            self.command,
            self.version,
            self.master_seed,
            self.started_unix_s,
            self.finished_unix_s,
            self.finished_unix_s - self.started_unix_s,
            self.dry_run,
            CONFIG_ECHO,
            files.join(", ")
        )
    }

    /// Writes `config.echo` and `manifest.txt` into `dir`; both are added to
    /// the file list.
    pub fn write(mut self, dir: &Path, config_echo: &str) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let echo = dir.join(CONFIG_ECHO);
        std::fs::write(&echo, config_echo)?;
        let man = dir.join(MANIFEST);
        self.files.push(echo.clone());
        self.files.push(man.clone());
        std::fs::write(&man, self.to_kv_string())?;
        Ok(self.files)
    }
}

pub fn unix_now() -> f64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}
