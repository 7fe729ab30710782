//! Named parameter sets for the reference experiments.
//!
//! The operating band of `paper-antenna` is not a pair of hardcoded
//! frequencies: it is obtained by inverting the beam-angle map at
//! [`BAND_THETA_LO`] and [`BAND_THETA_HI`]. `paper-quoted-band` keeps the
//! 24-27.29 GHz endpoints quoted for the prototype, which with the listed
//! geometry only steers over roughly -90 to -10 degrees.

use crate::error::{Error, Result};
use crate::lwa::AntennaParams;
use crate::scalar::Real;
use crate::sector::{plan_sectors, SectorPlan, DEFAULT_MIN_NS};
use crate::signal::FrequencyGrid;

/// Beam angle (degrees) at the low end of the operating band.
pub const BAND_THETA_LO: f64 = -82.0;
/// Beam angle (degrees) at the high end of the operating band.
pub const BAND_THETA_HI: f64 = 70.0;
pub const QUOTED_BAND_HZ: (f64, f64) = (24.0e9, 27.29e9);
pub const N_FREQ: usize = 100;
pub const FOV_DEG: (f64, f64) = (-90.0, 90.0);
pub const SECTOR_WIDTH_DEG: f64 = 30.0;
pub const GRID_STEP_DEG: f64 = 1.0;
pub const SNAPSHOTS: usize = 100;
pub const TRIALS: usize = 100;
pub const SOURCE_DOAS_DEG: [f64; 3] = [10.3, 15.7, 20.7];
pub const SNR_GRID_DB: [f64; 5] = [0.0, 5.0, 10.0, 15.0, 20.0];

/// Upper edge of the bisection window used to locate the band.
const SEARCH_HI_HZ: f64 = 200.0e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AntennaPreset {
    PaperAntenna,
    PaperQuotedBand,
}

impl AntennaPreset {
    pub const ALL: [AntennaPreset; 2] = [AntennaPreset::PaperAntenna, AntennaPreset::PaperQuotedBand];

    pub fn as_str(&self) -> &'static str {
        match self {
            AntennaPreset::PaperAntenna => "paper-antenna",
            AntennaPreset::PaperQuotedBand => "paper-quoted-band",
        }
    }

    pub fn antenna<T: Real>(&self) -> AntennaParams<T> {
        AntennaParams::paper()
    }

    /// `(f_min, f_max)` in Hz.
    pub fn band<T: Real>(&self) -> Result<(T, T)> {
        match self {
            AntennaPreset::PaperAntenna => operating_band(&self.antenna(), T::lit(BAND_THETA_LO), T::lit(BAND_THETA_HI)),
            AntennaPreset::PaperQuotedBand => Ok((T::lit(QUOTED_BAND_HZ.0), T::lit(QUOTED_BAND_HZ.1))),
        }
    }

    pub fn grid<T: Real>(&self) -> Result<FrequencyGrid<T>> {
        let (lo, hi) = self.band()?;
        FrequencyGrid::new(lo, hi, N_FREQ)
    }
}

impl std::fmt::Display for AntennaPreset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AntennaPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AntennaPreset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown antenna preset `{s}`")))
    }
}

/// Frequencies steering the beam to `theta_lo` and `theta_hi` degrees.
pub fn operating_band<T: Real>(params: &AntennaParams<T>, theta_lo: T, theta_hi: T) -> Result<(T, T)> {
    let lo = params.cutoff_frequency();
    let hi = T::lit(SEARCH_HI_HZ);
    Ok((params.invert_beam_angle(theta_lo, lo, hi)?, params.invert_beam_angle(theta_hi, lo, hi)?))
}

/// Six 30-degree sectors over the full half-space on a 1-degree grid, with
/// frequency bands assigned.
pub fn reference_plan<T: Real>(params: &AntennaParams<T>, grid: &FrequencyGrid<T>) -> Result<SectorPlan<T>> {
    plan_sectors(T::lit(FOV_DEG.0), T::lit(FOV_DEG.1), T::lit(SECTOR_WIDTH_DEG), T::lit(GRID_STEP_DEG), T::zero())?.assign_frequencies(
        params,
        grid,
        DEFAULT_MIN_NS,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operating_band_hits_target_angles() {
        let p = AntennaParams::<f64>::paper();
        let (lo, hi) = AntennaPreset::PaperAntenna.band::<f64>().unwrap();
        assert!((p.radiating_angle(lo).unwrap() - BAND_THETA_LO).abs() < 1e-6);
        assert!((p.radiating_angle(hi).unwrap() - BAND_THETA_HI).abs() < 1e-6);
        assert!(lo > 24.0e9 && hi < 36.2e9);
    }

    #[test]
    fn reference_plan_has_six_populated_sectors() {
        let p = AntennaParams::<f64>::paper();
        let g = AntennaPreset::PaperAntenna.grid::<f64>().unwrap();
        let plan = reference_plan(&p, &g).unwrap();
        assert_eq!(plan.len(), 6);
        assert!(plan.sectors.iter().all(|s| s.band.is_some_and(|b| b.n_s() >= DEFAULT_MIN_NS)));
    }

    #[test]
    fn preset_names() {
        for p in AntennaPreset::ALL {
            assert_eq!(p.as_str().parse::<AntennaPreset>().unwrap(), p);
        }
    }
}
