//! Monte Carlo SNR sweeps.
//!
//! Each `(method, snr, trial)` cell draws its own seed by hashing the tuple,
//! so cells are independent of execution order and of which other methods or
//! SNR points are in the sweep. Trials run on the rayon pool and are
//! aggregated in a fixed order afterwards.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{join_list, KvFile};
use crate::error::{Error, Result};
use crate::lwa::AntennaParams;
use crate::offgrid::BetaVariant;
use crate::pipeline::{estimate, EstimatorConfig, Mode, DEFAULT_GUARD_DEG};
use crate::presets::{self, AntennaPreset};
use crate::sbl::SblConfig;
use crate::sector::{plan_sectors, SectorPlan, DEFAULT_MIN_NS};
use crate::signal::{simulate_snapshots, Coherence, FrequencyGrid, SourceScenario};

/// Error charged to a true source that no estimate was matched to.
pub const MISS_PENALTY_DEG: f64 = 90.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub antenna: AntennaPreset,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub n_freq: usize,
    pub fov_lo_deg: f64,
    pub fov_hi_deg: f64,
    pub sector_width_deg: f64,
    pub grid_step_deg: f64,
    pub overlap_deg: f64,
    pub guard_deg: f64,
    pub snr_grid_db: Vec<f64>,
    pub trials: usize,
    pub snapshots: usize,
    pub doas_deg: Vec<f64>,
    pub coherence: Coherence,
    pub methods: Vec<Mode>,
    pub master_seed: u64,
    pub act_threshold: f64,
    pub merge_radius_deg: f64,
    pub beta_variant: BetaVariant,
    pub sbl: SblConfig<f64>,
    /// Record estimator wall time. With `false` every runtime is written as
    /// zero and the output files depend only on the config.
    pub timing: bool,
    /// Largest tolerated fraction of trials whose estimator call errored.
    pub max_failure_fraction: f64,
}

const KEYS: &[&str] = &[
    "preset",
    "antenna_preset",
    "f_min_hz",
    "f_max_hz",
    "n_freq",
    "fov_lo_deg",
    "fov_hi_deg",
    "sector_width_deg",
    "grid_step_deg",
    "overlap_deg",
    "guard_deg",
    "snr_db",
    "trials",
    "snapshots",
    "doas_deg",
    "coherence",
    "methods",
    "master_seed",
    "act_threshold",
    "merge_radius_deg",
    "beta_variant",
    "gamma_update",
    "max_iter",
    "tol",
    "varsigma",
    "prior_c",
    "prior_d",
    "gamma_init",
    "prune_threshold",
    "sigma_init_factor",
    "timing",
    "max_failure_fraction",
];

impl BenchConfig {
    pub const PRESETS: [&'static str; 2] = ["paper-fig2", "paper-fig3"];

    /// Three coherent sources at 10.3, 15.7 and 20.7 degrees, every method,
    /// 0 to 20 dB. `paper-fig2` and `paper-fig3` share the sweep; the first is
    /// read for RMSE and the second for runtime.
    pub fn preset(name: &str) -> Result<Self> {
        if !Self::PRESETS.contains(&name) {
            return Err(Error::InvalidConfig(format!("unknown bench preset `{name}`")));
        }
        let antenna = AntennaPreset::PaperAntenna;
        let (f_min_hz, f_max_hz) = antenna.band::<f64>()?;
        Ok(Self {
            antenna,
            f_min_hz,
            f_max_hz,
            n_freq: presets::N_FREQ,
            fov_lo_deg: presets::FOV_DEG.0,
            fov_hi_deg: presets::FOV_DEG.1,
            sector_width_deg: presets::SECTOR_WIDTH_DEG,
            grid_step_deg: presets::GRID_STEP_DEG,
            overlap_deg: 0.0,
            guard_deg: DEFAULT_GUARD_DEG,
            snr_grid_db: presets::SNR_GRID_DB.to_vec(),
            trials: presets::TRIALS,
            snapshots: presets::SNAPSHOTS,
            doas_deg: presets::SOURCE_DOAS_DEG.to_vec(),
            coherence: Coherence::Coherent,
            methods: Mode::ALL.to_vec(),
            master_seed: 2024,
            act_threshold: 0.05,
            merge_radius_deg: 1.0,
            beta_variant: BetaVariant::Ogsbi,
            sbl: SblConfig::default(),
            timing: true,
            max_failure_fraction: 0.0,
        })
    }

    /// Reads a config. With a `preset` key the preset supplies defaults and
    /// the remaining keys override it; without one every key except
    /// `antenna_preset` must be present.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        kv.reject_unknown(KEYS)?;
        let base = match kv.get::<String>("preset")? {
            Some(name) => Some(Self::preset(&name).map_err(|e| match e {
                Error::InvalidConfig(msg) => Error::Parse { line: kv.line_of("preset").unwrap_or(0), msg },
                other => other,
            })?),
            None => None,
        };
        macro_rules! field {
            ($key:literal, $default:expr) => {
                match (kv.get($key)?, &base) {
                    (Some(v), _) => v,
                    (None, Some(b)) => $default(b),
                    (None, None) => return Err(Error::MissingKey($key.into())),
                }
            };
        }
        macro_rules! list {
            ($key:literal, $default:expr) => {
                match (kv.get_list($key)?, &base) {
                    (Some(v), _) => v,
                    (None, Some(b)) => $default(b),
                    (None, None) => return Err(Error::MissingKey($key.into())),
                }
            };
        }
        let antenna =
            kv.get::<AntennaPreset>("antenna_preset")?.or(base.as_ref().map(|b| b.antenna)).unwrap_or(AntennaPreset::PaperAntenna);
        let sbl = SblConfig {
            max_iter: field!("max_iter", |b: &Self| b.sbl.max_iter),
            tol: field!("tol", |b: &Self| b.sbl.tol),
            varsigma: field!("varsigma", |b: &Self| b.sbl.varsigma),
            prior_c: field!("prior_c", |b: &Self| b.sbl.prior_c),
            prior_d: field!("prior_d", |b: &Self| b.sbl.prior_d),
            gamma_init: field!("gamma_init", |b: &Self| b.sbl.gamma_init),
            prune_threshold: field!("prune_threshold", |b: &Self| b.sbl.prune_threshold),
            gamma_update: field!("gamma_update", |b: &Self| b.sbl.gamma_update),
            sigma_init_factor: field!("sigma_init_factor", |b: &Self| b.sbl.sigma_init_factor),
            trace: false,
        };
        let cfg = Self {
            antenna,
            f_min_hz: field!("f_min_hz", |b: &Self| b.f_min_hz),
            f_max_hz: field!("f_max_hz", |b: &Self| b.f_max_hz),
            n_freq: field!("n_freq", |b: &Self| b.n_freq),
            fov_lo_deg: field!("fov_lo_deg", |b: &Self| b.fov_lo_deg),
            fov_hi_deg: field!("fov_hi_deg", |b: &Self| b.fov_hi_deg),
            sector_width_deg: field!("sector_width_deg", |b: &Self| b.sector_width_deg),
            grid_step_deg: field!("grid_step_deg", |b: &Self| b.grid_step_deg),
            overlap_deg: field!("overlap_deg", |b: &Self| b.overlap_deg),
            guard_deg: field!("guard_deg", |b: &Self| b.guard_deg),
            snr_grid_db: list!("snr_db", |b: &Self| b.snr_grid_db.clone()),
            trials: field!("trials", |b: &Self| b.trials),
            snapshots: field!("snapshots", |b: &Self| b.snapshots),
            doas_deg: list!("doas_deg", |b: &Self| b.doas_deg.clone()),
            coherence: field!("coherence", |b: &Self| b.coherence),
            methods: list!("methods", |b: &Self| b.methods.clone()),
            master_seed: field!("master_seed", |b: &Self| b.master_seed),
            act_threshold: field!("act_threshold", |b: &Self| b.act_threshold),
            merge_radius_deg: field!("merge_radius_deg", |b: &Self| b.merge_radius_deg),
            beta_variant: field!("beta_variant", |b: &Self| b.beta_variant),
            sbl,
            timing: field!("timing", |b: &Self| b.timing),
            max_failure_fraction: field!("max_failure_fraction", |b: &Self| b.max_failure_fraction),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(&KvFile::read(path)?)
    }

    /// Every field as `key = value` lines; [`BenchConfig::from_kv`] on the
    /// output reproduces `self` exactly.
    pub fn to_kv_string(&self) -> String {
        let methods: Vec<&str> = self.methods.iter().map(|m| m.as_str()).collect();
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("antenna_preset", self.antenna.to_string());
        put("f_min_hz", format!("{:?}", self.f_min_hz));
        put("f_max_hz", format!("{:?}", self.f_max_hz));
        put("n_freq", self.n_freq.to_string());
        put("fov_lo_deg", format!("{:?}", self.fov_lo_deg));
        put("fov_hi_deg", format!("{:?}", self.fov_hi_deg));
        put("sector_width_deg", format!("{:?}", self.sector_width_deg));
        put("grid_step_deg", format!("{:?}", self.grid_step_deg));
        put("overlap_deg", format!("{:?}", self.overlap_deg));
        put("guard_deg", format!("{:?}", self.guard_deg));
        put("snr_db", join_list(&self.snr_grid_db));
        put("trials", self.trials.to_string());
        put("snapshots", self.snapshots.to_string());
        put("doas_deg", join_list(&self.doas_deg));
        put("coherence", self.coherence.to_string());
        put("methods", methods.join(", "));
        put("master_seed", self.master_seed.to_string());
        put("act_threshold", format!("{:?}", self.act_threshold));
        put("merge_radius_deg", format!("{:?}", self.merge_radius_deg));
        put("beta_variant", self.beta_variant.to_string());
        put("gamma_update", self.sbl.gamma_update.to_string());
        put("max_iter", self.sbl.max_iter.to_string());
        put("tol", format!("{:?}", self.sbl.tol));
        put("varsigma", format!("{:?}", self.sbl.varsigma));
        put("prior_c", format!("{:?}", self.sbl.prior_c));
        put("prior_d", format!("{:?}", self.sbl.prior_d));
        put("gamma_init", format!("{:?}", self.sbl.gamma_init));
        put("prune_threshold", format!("{:?}", self.sbl.prune_threshold));
        put("sigma_init_factor", format!("{:?}", self.sbl.sigma_init_factor));
        put("timing", self.timing.to_string());
        put("max_failure_fraction", format!("{:?}", self.max_failure_fraction));
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.snr_grid_db.is_empty() || self.snr_grid_db.iter().any(|s| s.is_nan()) {
            return Err(Error::InvalidConfig("snr grid must be nonempty".into()));
        }
        if self.snapshots == 0 {
            return Err(Error::InvalidConfig("snapshots must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return Err(Error::InvalidConfig("max_failure_fraction must lie in [0, 1]".into()));
        }
        SourceScenario::new(self.doas_deg.clone(), self.coherence)?;
        self.sbl.validate()?;
        Ok(())
    }

    pub fn antenna_params(&self) -> AntennaParams<f64> {
        self.antenna.antenna()
    }

    pub fn grid(&self) -> Result<FrequencyGrid<f64>> {
        FrequencyGrid::new(self.f_min_hz, self.f_max_hz, self.n_freq)
    }

    pub fn plan(&self) -> Result<SectorPlan<f64>> {
        plan_sectors(self.fov_lo_deg, self.fov_hi_deg, self.sector_width_deg, self.grid_step_deg, self.overlap_deg)?.assign_frequencies(
            &self.antenna_params(),
            &self.grid()?,
            DEFAULT_MIN_NS,
        )
    }

    /// Estimator settings for `mode` with `K` given.
    pub fn estimator_config(&self, mode: Mode) -> Result<EstimatorConfig<f64>> {
        let mut c = EstimatorConfig::new(mode, self.plan()?);
        c.k_known = Some(self.doas_deg.len());
        c.act_threshold = self.act_threshold;
        c.merge_radius = self.merge_radius_deg;
        c.guard_deg = self.guard_deg;
        c.beta_variant = self.beta_variant;
        c.sbl = self.sbl;
        c.validate()?;
        Ok(c)
    }
}

/// Optimal truth-to-estimate assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// For each true source, the index of its estimate or `None` for a miss.
    pub assignment: Vec<Option<usize>>,
    /// Absolute error per true source in degrees, misses charged
    /// [`MISS_PENALTY_DEG`].
    pub errors: Vec<f64>,
}

impl Matching {
    pub fn cost(&self) -> f64 {
        self.errors.iter().map(|e| e * e).sum()
    }
}

/// Minimum total squared error assignment by exhaustive search. Each
/// estimate serves at most one source; surplus estimates are ignored.
pub fn match_estimates(estimates: &[f64], truth: &[f64]) -> Matching {
    fn go(
        k: usize,
        truth: &[f64],
        est: &[f64],
        used: &mut Vec<bool>,
        cur: &mut Vec<Option<usize>>,
        cost: f64,
        best: &mut (f64, Vec<Option<usize>>),
    ) {
        if cost >= best.0 {
            return;
        }
        if k == truth.len() {
            *best = (cost, cur.clone());
            return;
        }
        for j in 0..est.len() {
            if !used[j] {
                used[j] = true;
                cur.push(Some(j));
                go(k + 1, truth, est, used, cur, cost + (est[j] - truth[k]).powi(2), best);
                cur.pop();
                used[j] = false;
            }
        }
        cur.push(None);
        go(k + 1, truth, est, used, cur, cost + MISS_PENALTY_DEG * MISS_PENALTY_DEG, best);
        cur.pop();
    }
    let mut best = (f64::INFINITY, vec![None; truth.len()]);
    go(0, truth, estimates, &mut vec![false; estimates.len()], &mut Vec::new(), 0.0, &mut best);
    let errors = best.1.iter().zip(truth).map(|(a, t)| a.map_or(MISS_PENALTY_DEG, |j| (estimates[j] - t).abs())).collect();
    Matching { assignment: best.1, errors }
}

/// Root mean square over every matched pair of every trial.
pub fn rmse(per_trial: &[Vec<f64>]) -> f64 {
    let (sum, n) = per_trial.iter().flatten().fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one cell, a hash of `(master, method, snr, trial)`.
pub fn trial_seed(master: u64, method: Mode, snr_db: f64, trial: usize) -> u64 {
    let name = method.as_str().bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    let mut h = splitmix64(master);
    h = splitmix64(h ^ name);
    h = splitmix64(h ^ snr_db.to_bits());
    splitmix64(h ^ trial as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub estimates: Vec<f64>,
    /// Per true source, in scenario order.
    pub errors: Vec<f64>,
    pub runtime_s: f64,
    /// Estimate count differs from the source count.
    pub cardinality_failure: bool,
    /// The estimator returned an error.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub method: Mode,
    pub snr_db: f64,
    pub rmse_deg: f64,
    pub mean_runtime_s: f64,
    /// Trials with the wrong number of estimates.
    pub failures: usize,
    /// Trials where the estimator errored.
    pub hard_failures: usize,
    pub trials: Vec<TrialRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub n_sources: usize,
    pub cells: Vec<CellResult>,
}

impl BenchResult {
    pub fn cell(&self, method: Mode, snr_db: f64) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.method == method && c.snr_db == snr_db)
    }

    pub fn hard_failure_fraction(&self) -> f64 {
        let total: usize = self.cells.iter().map(|c| c.trials.len()).sum();
        let bad: usize = self.cells.iter().map(|c| c.hard_failures).sum();
        if total == 0 {
            0.0
        } else {
            bad as f64 / total as f64
        }
    }
}

fn run_trial(
    cfg: &BenchConfig,
    est_cfg: &EstimatorConfig<f64>,
    params: &AntennaParams<f64>,
    grid: &FrequencyGrid<f64>,
    method: Mode,
    snr_db: f64,
    trial: usize,
) -> TrialRecord {
    let seed = trial_seed(cfg.master_seed, method, snr_db, trial);
    let k = cfg.doas_deg.len();
    let fail = |msg: String| TrialRecord {
        trial,
        seed,
        estimates: Vec::new(),
        errors: vec![MISS_PENALTY_DEG; k],
        runtime_s: 0.0,
        cardinality_failure: true,
        error: Some(msg),
    };
    let sim = SourceScenario::with_random_phases(cfg.doas_deg.clone(), cfg.coherence, seed)
        .and_then(|sc| simulate_snapshots(params, grid, &sc, cfg.snapshots, snr_db, splitmix64(seed)));
    let sim = match sim {
        Ok(s) => s,
        Err(e) => return fail(e.to_string()),
    };
    let start = Instant::now();
    let out = estimate(&sim.y, params, grid, est_cfg);
    let elapsed = start.elapsed().as_secs_f64();
    match out {
        Ok(est) => {
            let angles: Vec<f64> = est.iter().map(|e| e.angle).collect();
            let m = match_estimates(&angles, &cfg.doas_deg);
            TrialRecord {
                trial,
                seed,
                cardinality_failure: angles.len() != k,
                estimates: angles,
                errors: m.errors,
                runtime_s: if cfg.timing { elapsed } else { 0.0 },
                error: None,
            }
        }
        Err(e) => fail(e.to_string()),
    }
}

/// Runs every `(method, snr, trial)` cell. Trial-level errors are recorded,
/// never propagated; only configuration problems fail the sweep.
pub fn run_monte_carlo(cfg: &BenchConfig) -> Result<BenchResult> {
    cfg.validate()?;
    let params = cfg.antenna_params();
    let grid = cfg.grid()?;
    let est_cfgs: Vec<EstimatorConfig<f64>> = cfg.methods.iter().map(|&m| cfg.estimator_config(m)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize, usize)> = (0..cfg.methods.len())
        .flat_map(|m| (0..cfg.snr_grid_db.len()).flat_map(move |s| (0..cfg.trials).map(move |t| (m, s, t))))
        .collect();
    let records: Vec<TrialRecord> =
        jobs.par_iter().map(|&(m, s, t)| run_trial(cfg, &est_cfgs[m], &params, &grid, cfg.methods[m], cfg.snr_grid_db[s], t)).collect();
    let mut it = records.into_iter();
    let mut cells = Vec::new();
    for &method in &cfg.methods {
        for &snr_db in &cfg.snr_grid_db {
            let trials: Vec<TrialRecord> = it.by_ref().take(cfg.trials).collect();
            let errs: Vec<Vec<f64>> = trials.iter().map(|r| r.errors.clone()).collect();
            let mean_runtime_s = trials.iter().map(|r| r.runtime_s).sum::<f64>() / trials.len() as f64;
            cells.push(CellResult {
                method,
                snr_db,
                rmse_deg: rmse(&errs),
                mean_runtime_s,
                failures: trials.iter().filter(|r| r.cardinality_failure).count(),
                hard_failures: trials.iter().filter(|r| r.error.is_some()).count(),
                trials,
            });
        }
    }
    Ok(BenchResult { n_sources: cfg.doas_deg.len(), cells })
}

pub const RMSE_CSV: &str = "rmse.csv";
pub const RUNTIME_CSV: &str = "runtime.csv";
pub const TRIALS_CSV: &str = "trials.csv";

pub fn rmse_csv(result: &BenchResult) -> String {
    let mut s = String::from("method,snr_db,rmse_deg,failures\n");
    for c in &result.cells {
        let _ = writeln!(s, "{},{:.4},{:.4},{}", c.method, c.snr_db, c.rmse_deg, c.failures);
    }
    s
}

pub fn runtime_csv(result: &BenchResult) -> String {
    let mut s = String::from("method,snr_db,mean_runtime_s\n");
    for c in &result.cells {
        let _ = writeln!(s, "{},{:.4},{:.9}", c.method, c.snr_db, c.mean_runtime_s);
    }
    s
}

pub fn trials_csv(result: &BenchResult) -> String {
    let mut s = String::from("method,snr_db,trial");
    for k in 1..=result.n_sources {
        let _ = write!(s, ",err_{k}_deg");
    }
    s.push_str(",runtime_s\n");
    for c in &result.cells {
        for r in &c.trials {
            let _ = write!(s, "{},{:.4},{}", c.method, c.snr_db, r.trial);
            for e in &r.errors {
                let _ = write!(s, ",{e:.4}");
            }
            let _ = writeln!(s, ",{:.9}", r.runtime_s);
        }
    }
    s
}

/// Writes the three CSV files into `dir` and returns their paths.
pub fn emit_csv(result: &BenchResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let files = [(RMSE_CSV, rmse_csv(result)), (RUNTIME_CSV, runtime_csv(result)), (TRIALS_CSV, trials_csv(result))];
    let mut out = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        out.push(p);
    }
    Ok(out)
}
