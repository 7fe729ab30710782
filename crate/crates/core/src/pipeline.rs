//! End-to-end DoA estimation.
//!
//! Sector mode slices the snapshot matrix down to each sector's frequency
//! rows, runs SBL on the sector dictionary, and reads peaks off the converged
//! variance spectrum. Peaks are ranked by received power (variance times
//! column energy), thresholded against the largest power over all sectors
//! (gathered in a first pass), then merged across sectors.
//! Full-FoV mode is the same machinery on a single sector fed by every row.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lwa::AntennaParams;
use crate::offgrid::{effective_dictionary, run_offgrid, BetaVariant, OffGridConfig};
use crate::sbl::{run_ongrid, SblConfig};
use crate::scalar::{deg2rad, CMatrix, Real};
use crate::sector::{Sector, SectorPlan};
use crate::signal::{derivative_matrix_at, steering_matrix_at, FrequencyGrid, SnapshotMatrix};

pub const DEFAULT_GUARD_DEG: f64 = 5.0;

/// Estimation strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Sector-wise spatially filtered on-grid SBL.
    SfOngrid,
    /// Sector-wise spatially filtered off-grid SBL.
    SfOffgrid,
    /// On-grid SBL over the whole FoV with every frequency row.
    FullfovOngrid,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::SfOngrid, Mode::SfOffgrid, Mode::FullfovOngrid];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::SfOngrid => "sf_ongrid",
            Mode::SfOffgrid => "sf_offgrid",
            Mode::FullfovOngrid => "fullfov_ongrid",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

/// One estimated direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoaEstimate<T> {
    /// Degrees.
    pub angle: T,
    /// Received power of the supporting grid point: its converged variance
    /// times the squared norm of its dictionary column.
    pub weight: T,
    pub sector: usize,
    /// Whether an off-grid offset was applied.
    pub refined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig<T> {
    pub mode: Mode,
    /// Keep only the K strongest merged estimates when set.
    pub k_known: Option<usize>,
    /// Peaks below this fraction of the global max power are dropped.
    pub act_threshold: T,
    /// Estimates closer than this (degrees) are merged.
    pub merge_radius: T,
    pub sbl: SblConfig<T>,
    /// Sector partition with frequency bands assigned.
    pub plan: SectorPlan<T>,
    /// Extra grid points (degrees) on each side of a sector's dictionary,
    /// clipped to the FoV. They absorb leakage from sources just outside the
    /// sector; peaks landing there are discarded.
    pub guard_deg: T,
    pub beta_variant: BetaVariant,
    /// Run sectors on the rayon pool.
    pub parallel_sectors: bool,
}

impl<T: Real> EstimatorConfig<T> {
    pub fn new(mode: Mode, plan: SectorPlan<T>) -> Self {
        Self {
            mode,
            k_known: None,
            act_threshold: T::lit(0.05),
            merge_radius: T::one(),
            sbl: SblConfig::default(),
            plan,
            beta_variant: BetaVariant::Ogsbi,
            guard_deg: T::lit(DEFAULT_GUARD_DEG),
            parallel_sectors: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.act_threshold > T::zero() && self.act_threshold < T::one()) {
            return Err(Error::InvalidConfig("activation threshold must lie in (0, 1)".into()));
        }
        if !(self.merge_radius > T::zero()) {
            return Err(Error::InvalidConfig("merge radius must be positive".into()));
        }
        if !(self.guard_deg >= T::zero()) {
            return Err(Error::InvalidConfig("guard width must be nonnegative".into()));
        }
        if self.k_known == Some(0) {
            return Err(Error::InvalidConfig("known source count must be positive".into()));
        }
        if self.plan.is_empty() {
            return Err(Error::InvalidConfig("sector plan is empty".into()));
        }
        self.sbl.validate()
    }
}

/// Converged spectrum of one sector.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorRun<T> {
    pub sector: usize,
    /// Grid angles in degrees, guard points included.
    pub grid: Vec<T>,
    /// Indices of `grid` that belong to the sector itself.
    pub own: std::ops::Range<usize>,
    pub gamma: Vec<T>,
    /// Offsets in degrees; zeros for on-grid runs.
    pub beta: Vec<T>,
    /// Squared norm of each (offset-corrected) dictionary column.
    pub col_energy: Vec<T>,
    pub refined: bool,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Real> SectorRun<T> {
    pub fn max_gamma(&self) -> T {
        self.gamma[self.own.clone()].iter().copied().fold(T::zero(), |a, b| a.max(b))
    }

    /// Received power `gamma_p ||phi_p||^2` of each component.
    pub fn power(&self) -> Vec<T> {
        self.gamma.iter().zip(&self.col_energy).map(|(&g, &e)| g * e).collect()
    }

    pub fn max_power(&self) -> T {
        self.power()[self.own.clone()].iter().copied().fold(T::zero(), |a, b| a.max(b))
    }

    /// Local maxima of the variance spectrum inside the sector whose power
    /// reaches `floor`.
    pub fn peaks(&self, floor: T) -> Vec<DoaEstimate<T>> {
        let g = &self.gamma;
        let w = self.power();
        let n = g.len();
        self.own
            .clone()
            .filter(|&p| g[p] > T::zero() && w[p] >= floor && (p == 0 || g[p] >= g[p - 1]) && (p + 1 == n || g[p] > g[p + 1]))
            .map(|p| DoaEstimate { angle: self.grid[p] + self.beta[p], weight: w[p], sector: self.sector, refined: self.refined })
            .collect()
    }
}

fn column_energy<T: Real>(m: &CMatrix<T>) -> Vec<T> {
    m.column_iter().map(|c| c.norm_squared()).collect()
}

/// Rows `lo..=hi` of `y` for the sector's frequency band.
pub fn spatial_filter<T: Real>(y: &SnapshotMatrix<T>, sector: &Sector<T>) -> Result<SnapshotMatrix<T>> {
    let band = sector.band.ok_or(Error::EmptySector(sector.index))?;
    if band.hi >= y.rows() || band.lo > band.hi {
        return Err(Error::IndexOutOfRange { lo: band.lo, hi: band.hi, rows: y.rows() });
    }
    SnapshotMatrix::new(y.data.rows(band.lo, band.n_s()).into_owned())
}

/// Sector grid padded with up to `guard` degrees of extra points on each
/// side, staying inside `[fov_lo, fov_hi]`. Returns the padded grid and the
/// index range of the original points.
pub fn guarded_grid<T: Real>(sector: &Sector<T>, guard: T, fov_lo: T, fov_hi: T) -> (Vec<T>, std::ops::Range<usize>) {
    let step = sector.delta_theta;
    let tol = step * T::lit(1e-9);
    let k = (guard / step + T::lit(1e-9)).floor().to_usize().unwrap_or(0);
    let (Some(&first), Some(&last)) = (sector.grid.first(), sector.grid.last()) else {
        return (Vec::new(), 0..0);
    };
    let below: Vec<T> = (1..=k).rev().map(|i| first - step * T::from_usize(i).unwrap()).filter(|&v| v >= fov_lo - tol).collect();
    let above = (1..=k).map(|i| last + step * T::from_usize(i).unwrap()).filter(|&v| v <= fov_hi + tol);
    let own = below.len()..below.len() + sector.grid.len();
    let mut out = below;
    out.extend_from_slice(&sector.grid);
    out.extend(above);
    (out, own)
}

/// Runs SBL on one sector. Empty sectors yield `None`.
pub fn run_sector<T: Real>(
    y: &SnapshotMatrix<T>,
    sector: &Sector<T>,
    params: &AntennaParams<T>,
    grid: &FrequencyGrid<T>,
    config: &EstimatorConfig<T>,
    off_grid: bool,
) -> Result<Option<SectorRun<T>>> {
    let Some(band) = sector.band else {
        return Ok(None);
    };
    if sector.grid.is_empty() {
        return Ok(None);
    }
    let ys = spatial_filter(y, sector)?;
    let (angles, own) = guarded_grid(sector, config.guard_deg, config.plan.fov_lo, config.plan.fov_hi);
    let freqs: Vec<T> = (band.lo..=band.hi).map(|i| grid.freq(i)).collect();
    let a = steering_matrix_at(params, &freqs, &angles)?;
    if off_grid {
        let per_degree = deg2rad(T::one());
        let b = derivative_matrix_at(params, &freqs, &angles)?.map(|z| z * per_degree);
        let og = OffGridConfig { variant: config.beta_variant, delta_theta: sector.delta_theta, refine: true };
        let st = run_offgrid(&a, &b, &ys.data, &config.sbl, &og)?;
        let phi = effective_dictionary(&a, &b, &st.beta)?;
        Ok(Some(SectorRun {
            sector: sector.index,
            grid: angles,
            own,
            gamma: st.sbl.gamma,
            beta: st.beta,
            col_energy: column_energy(&phi),
            refined: true,
            iterations: st.sbl.iterations,
            converged: st.sbl.converged,
        }))
    } else {
        let st = run_ongrid(&a, &ys.data, &config.sbl)?;
        Ok(Some(SectorRun {
            sector: sector.index,
            beta: vec![T::zero(); angles.len()],
            grid: angles,
            own,
            gamma: st.gamma,
            col_energy: column_energy(&a),
            refined: false,
            iterations: st.iterations,
            converged: st.converged,
        }))
    }
}

/// Runs one sector and thresholds its peaks against `global_max`, the largest
/// component power over all sectors (this sector's own when `None`).
pub fn estimate_sector<T: Real>(
    y: &SnapshotMatrix<T>,
    sector: &Sector<T>,
    params: &AntennaParams<T>,
    grid: &FrequencyGrid<T>,
    config: &EstimatorConfig<T>,
    global_max: Option<T>,
) -> Result<Vec<DoaEstimate<T>>> {
    let off = config.mode == Mode::SfOffgrid;
    let Some(run) = run_sector(y, sector, params, grid, config, off)? else {
        return Ok(Vec::new());
    };
    let reference = global_max.unwrap_or_else(|| run.max_power());
    Ok(run.peaks(config.act_threshold * reference))
}

/// Greedy dedup: strongest first, absorbing anything within `radius` of an
/// accepted estimate, then top-K when `k_known` is set. Output is sorted by
/// angle.
pub fn merge_deduplicate<T: Real>(estimates: &[DoaEstimate<T>], radius: T, k_known: Option<usize>) -> Vec<DoaEstimate<T>> {
    let mut order: Vec<&DoaEstimate<T>> = estimates.iter().collect();
    // weight descending, ties by angle then sector
    order.sort_by(|a, b| {
        b.weight
            .partial_cmp(&a.weight)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.angle.partial_cmp(&b.angle).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.sector.cmp(&b.sector))
    });
    let mut kept: Vec<DoaEstimate<T>> = Vec::new();
    for e in order {
        if kept.iter().all(|k| (k.angle - e.angle).abs() > radius) {
            kept.push(*e);
        }
    }
    if let Some(k) = k_known {
        kept.truncate(k);
    }
    kept.sort_by(|a, b| a.angle.partial_cmp(&b.angle).unwrap_or(std::cmp::Ordering::Equal));
    kept
}

/// Output of [`estimate_detailed`]: final estimates plus every sector spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimation<T> {
    pub estimates: Vec<DoaEstimate<T>>,
    pub runs: Vec<SectorRun<T>>,
}

/// Full estimation, keeping the per-sector spectra.
pub fn estimate_detailed<T: Real>(
    y: &SnapshotMatrix<T>,
    params: &AntennaParams<T>,
    grid: &FrequencyGrid<T>,
    config: &EstimatorConfig<T>,
) -> Result<Estimation<T>> {
    config.validate()?;
    if y.rows() != grid.n {
        return Err(Error::DimensionMismatch(format!("Y has {} rows, grid has {} frequencies", y.rows(), grid.n)));
    }
    let full;
    let plan = match config.mode {
        Mode::FullfovOngrid => {
            let step = config.plan.sectors[0].delta_theta;
            full = SectorPlan::full_fov(config.plan.fov_lo, config.plan.fov_hi, step, grid.n)?;
            &full
        }
        _ => &config.plan,
    };
    let off = config.mode == Mode::SfOffgrid;
    let job = |s: &Sector<T>| run_sector(y, s, params, grid, config, off);
    let results: Vec<Result<Option<SectorRun<T>>>> =
        if config.parallel_sectors { plan.sectors.par_iter().map(job).collect() } else { plan.sectors.iter().map(job).collect() };
    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        if let Some(run) = r? {
            runs.push(run);
        }
    }
    let global_max = runs.iter().map(|r| r.max_power()).fold(T::zero(), |a, b| a.max(b));
    let floor = config.act_threshold * global_max;
    let candidates: Vec<DoaEstimate<T>> = runs.iter().flat_map(|r| r.peaks(floor)).collect();
    let estimates = merge_deduplicate(&candidates, config.merge_radius, config.k_known);
    Ok(Estimation { estimates, runs })
}

/// Final merged estimates, sorted by angle.
pub fn estimate<T: Real>(
    y: &SnapshotMatrix<T>,
    params: &AntennaParams<T>,
    grid: &FrequencyGrid<T>,
    config: &EstimatorConfig<T>,
) -> Result<Vec<DoaEstimate<T>>> {
    Ok(estimate_detailed(y, params, grid, config)?.estimates)
}
