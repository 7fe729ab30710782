//! Angular sectorization of the field of view.
//!
//! Each sector gets a candidate DoA grid and the contiguous block of
//! frequency samples whose main beams point into it. Because the beam angle
//! is monotone in frequency, that block is always a single index range, and
//! picking those rows spatially filters out energy arriving from other
//! sectors.

use crate::error::{Error, Result};
use crate::lwa::AntennaParams;
use crate::scalar::{deg2rad, CMatrix, Real};
use crate::signal::{derivative_matrix_at, steering_matrix_at, FrequencyGrid};

/// Default minimum number of frequency rows per sector.
pub const DEFAULT_MIN_NS: usize = 4;

const ANGLE_TOL: f64 = 1e-9;

/// Contiguous inclusive range of frequency indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreqBand {
    pub lo: usize,
    pub hi: usize,
}

impl FreqBand {
    pub fn n_s(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn overlaps(&self, other: &FreqBand) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// One angular sector.
#[derive(Debug, Clone, PartialEq)]
pub struct Sector<T> {
    pub index: usize,
    pub theta_lo: T,
    pub theta_hi: T,
    /// Grid step in degrees.
    pub delta_theta: T,
    /// Candidate DoAs, strictly increasing, inside `[theta_lo, theta_hi]`.
    pub grid: Vec<T>,
    /// Whether `theta_hi` itself belongs to the sector (true for the last one).
    pub closed_hi: bool,
    /// Selected frequency rows; `None` when no radiating frequency maps here.
    pub band: Option<FreqBand>,
}

impl<T: Real> Sector<T> {
    pub fn contains(&self, theta: T) -> bool {
        let tol = T::lit(ANGLE_TOL);
        theta >= self.theta_lo - tol && (theta < self.theta_hi - tol || (self.closed_hi && theta <= self.theta_hi + tol))
    }

    pub fn p(&self) -> usize {
        self.grid.len()
    }

    pub fn n_s(&self) -> usize {
        self.band.map_or(0, |b| b.n_s())
    }
}

/// Sector partition of the field of view.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorPlan<T> {
    pub sectors: Vec<Sector<T>>,
    pub fov_lo: T,
    pub fov_hi: T,
    pub w_theta: T,
    /// Sector-width factor, when the width was derived from the beamwidth.
    pub gamma_width: Option<T>,
    pub overlap_deg: T,
}

/// Sector width `gamma * B_max`; requires `gamma > 1`.
pub fn sector_width_from_beamwidth<T: Real>(gamma_width: T, b_max: T) -> Result<T> {
    if !(gamma_width > T::one()) {
        return Err(Error::GammaTooSmall(gamma_width.to_f64_lossy()));
    }
    if !(b_max > T::zero()) {
        return Err(Error::InvalidConfig("maximum beamwidth must be positive".into()));
    }
    Ok(gamma_width * b_max)
}

fn arithmetic_grid<T: Real>(lo: T, hi: T, step: T, closed_hi: bool) -> Vec<T> {
    let tol = T::lit(ANGLE_TOL);
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let v = lo + T::from_usize(k).unwrap() * step;
        let inside = if closed_hi { v <= hi + tol } else { v < hi - tol };
        if !inside {
            break;
        }
        // snap tiny round-off so grids read as 10.0 rather than 9.999999999
        let snapped = (v / step).round() * step;
        out.push(if (snapped - v).abs() < tol { snapped } else { v });
        k += 1;
    }
    out
}

/// Tiles `[fov_lo, fov_hi]` into sectors of width `w_theta`.
///
/// Sector `l` spans `[fov_lo + l*w - overlap, fov_lo + (l+1)*w + overlap]`
/// clipped to the FoV. A trailing remainder narrower than half a sector is
/// absorbed into the last full sector. Grids start at each sector's lower
/// bound with step `delta_theta`; the upper bound is excluded except in the
/// last sector.
pub fn plan_sectors<T: Real>(fov_lo: T, fov_hi: T, w_theta: T, delta_theta: T, overlap_deg: T) -> Result<SectorPlan<T>> {
    let span = fov_hi - fov_lo;
    if !(w_theta > T::zero()) || !(span >= w_theta - T::lit(ANGLE_TOL)) {
        return Err(Error::InvalidFov(format!(
            "FoV span {} must be at least the sector width {}",
            span.to_f64_lossy(),
            w_theta.to_f64_lossy()
        )));
    }
    if !(delta_theta > T::zero()) {
        return Err(Error::InvalidFov("grid step must be positive".into()));
    }
    if !(overlap_deg >= T::zero()) {
        return Err(Error::InvalidFov("overlap must be nonnegative".into()));
    }
    let ratio = (span / w_theta - T::lit(ANGLE_TOL)).ceil();
    let mut l = ratio.to_f64_lossy() as usize;
    let remainder = span - T::from_usize(l - 1).unwrap() * w_theta;
    if l > 1 && remainder < w_theta / T::lit(2.0) {
        l -= 1;
    }
    let mut sectors = Vec::with_capacity(l);
    for idx in 0..l {
        let last = idx + 1 == l;
        let nominal_lo = fov_lo + T::from_usize(idx).unwrap() * w_theta;
        let nominal_hi = if last { fov_hi } else { fov_lo + T::from_usize(idx + 1).unwrap() * w_theta };
        let theta_lo = (nominal_lo - overlap_deg).max(fov_lo);
        let theta_hi = (nominal_hi + overlap_deg).min(fov_hi);
        let closed_hi = last || theta_hi >= fov_hi;
        let grid = arithmetic_grid(theta_lo, theta_hi, delta_theta, closed_hi);
        sectors.push(Sector { index: idx, theta_lo, theta_hi, delta_theta, grid, closed_hi, band: None });
    }
    Ok(SectorPlan { sectors, fov_lo, fov_hi, w_theta, gamma_width: None, overlap_deg })
}

/// Frequency rows whose beam angle lies in the sector.
///
/// Returns the maximal contiguous index range of radiating frequencies with
/// beam angle inside `[theta_lo, theta_hi)` (closed at the top for the last
/// sector). When fewer than `min_ns` qualify, the range grows one index at a
/// time, alternating below and above, over radiating neighbours.
pub fn select_frequencies<T: Real>(
    sector: &Sector<T>,
    params: &AntennaParams<T>,
    grid: &FrequencyGrid<T>,
    min_ns: usize,
) -> Result<FreqBand> {
    let angles: Vec<Option<T>> = grid.iter().map(|f| params.beam_angle(f).ok().and_then(|b| b.angle())).collect();
    let inside: Vec<usize> = angles.iter().enumerate().filter_map(|(i, a)| a.filter(|&th| sector.contains(th)).map(|_| i)).collect();
    let (Some(&first), Some(&last)) = (inside.first(), inside.last()) else {
        return Err(Error::EmptySector(sector.index));
    };
    let mut band = FreqBand { lo: first, hi: last };
    let radiating = |i: usize| angles.get(i).is_some_and(|a| a.is_some());
    let mut below = true;
    let mut stuck = 0;
    while band.n_s() < min_ns && stuck < 2 {
        let grew = if below {
            band.lo > 0 && radiating(band.lo - 1) && {
                band.lo -= 1;
                true
            }
        } else {
            radiating(band.hi + 1) && {
                band.hi += 1;
                true
            }
        };
        stuck = if grew { 0 } else { stuck + 1 };
        below = !below;
    }
    Ok(band)
}

impl<T: Real> SectorPlan<T> {
    /// Records the sector-width factor that produced `w_theta`.
    pub fn with_gamma(mut self, gamma_width: T) -> Self {
        self.gamma_width = Some(gamma_width);
        self
    }

    /// Fills each sector's frequency band; sectors no beam reaches keep `None`.
    pub fn assign_frequencies(mut self, params: &AntennaParams<T>, grid: &FrequencyGrid<T>, min_ns: usize) -> Result<Self> {
        for s in &mut self.sectors {
            s.band = match select_frequencies(s, params, grid, min_ns) {
                Ok(b) => Some(b),
                Err(Error::EmptySector(_)) => None,
                Err(e) => return Err(e),
            };
        }
        Ok(self)
    }

    /// A single sector spanning the whole FoV, fed by every frequency row.
    pub fn full_fov(fov_lo: T, fov_hi: T, delta_theta: T, n_freq: usize) -> Result<Self> {
        let mut plan = plan_sectors(fov_lo, fov_hi, fov_hi - fov_lo, delta_theta, T::zero())?;
        plan.sectors[0].band = Some(FreqBand { lo: 0, hi: n_freq - 1 });
        Ok(plan)
    }

    pub fn len(&self) -> usize {
        self.sectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sectors.is_empty()
    }

    /// `w_theta >= b_max`.
    pub fn contains_main_lobe(&self, b_max: T) -> bool {
        self.w_theta >= b_max
    }
}

/// Sector dictionary `(A_s, B_s)`: steering responses and their angular
/// derivatives at the sector's frequency rows and grid angles. `B_s` is in
/// per-degree units.
pub fn build_sector_dictionary<T: Real>(
    params: &AntennaParams<T>,
    grid: &FrequencyGrid<T>,
    sector: &Sector<T>,
) -> Result<(CMatrix<T>, CMatrix<T>)> {
    let band = sector.band.ok_or(Error::EmptySector(sector.index))?;
    let freqs: Vec<T> = (band.lo..=band.hi).map(|i| grid.freq(i)).collect();
    let a = steering_matrix_at(params, &freqs, &sector.grid)?;
    let per_degree = deg2rad(T::one());
    let b = derivative_matrix_at(params, &freqs, &sector.grid)?.map(|z| z * per_degree);
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn width_from_beamwidth() {
        let w: f64 = sector_width_from_beamwidth(2.8, 10.66).unwrap();
        assert_relative_eq!(w, 29.848, max_relative = 1e-12);
        assert_eq!(w.round(), 30.0);
        assert!(matches!(sector_width_from_beamwidth(1.0, 10.0), Err(Error::GammaTooSmall(_))));
        assert_relative_eq!(sector_width_from_beamwidth(4.0, 5.0).unwrap(), 2.0 * sector_width_from_beamwidth(2.0, 5.0).unwrap());
    }

    #[test]
    fn six_sector_tiling() {
        let plan = plan_sectors(-90.0, 90.0, 30.0, 1.0, 0.0).unwrap();
        assert_eq!(plan.len(), 6);
        let bounds: Vec<(f64, f64)> = plan.sectors.iter().map(|s| (s.theta_lo, s.theta_hi)).collect();
        assert_eq!(bounds[0], (-90.0, -60.0));
        assert_eq!(bounds[5], (60.0, 90.0));
        assert_eq!(plan.sectors[0].grid.len(), 30);
        assert_eq!(plan.sectors[5].grid.len(), 31);
        assert_eq!(plan.sectors[3].grid[10], 10.0);
        let all: Vec<f64> = plan.sectors.iter().flat_map(|s| s.grid.clone()).collect();
        assert_eq!(all.len(), 181);
        assert!(all.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn single_wide_sector() {
        let plan = plan_sectors(-90.0, 90.0, 180.0, 1.0, 0.0).unwrap();
        assert_eq!(plan.len(), 1);
        assert_eq!((plan.sectors[0].theta_lo, plan.sectors[0].theta_hi), (-90.0, 90.0));
        assert_eq!(plan.sectors[0].grid.len(), 181);
    }

    #[test]
    fn overlap_shares_band() {
        let plan = plan_sectors(-90.0, 90.0, 30.0, 1.0, 5.0).unwrap();
        assert_eq!(plan.sectors[0].theta_hi, -55.0);
        assert_eq!(plan.sectors[1].theta_lo, -65.0);
        assert_eq!(plan.sectors[0].theta_lo, -90.0);
        assert_eq!(plan.sectors[5].theta_hi, 90.0);
    }

    #[test]
    fn remainder_absorbed() {
        let plan = plan_sectors(-90.0, 90.0, 29.848, 1.0, 0.0).unwrap();
        assert_eq!(plan.len(), 6);
        assert_eq!(plan.sectors[5].theta_hi, 90.0);
        let plan = plan_sectors(-90.0, 90.0, 40.0, 1.0, 0.0).unwrap();
        assert_eq!(plan.len(), 5);
    }

    #[test]
    fn invalid_fov() {
        assert!(matches!(plan_sectors(-10.0, 10.0, 30.0, 1.0, 0.0), Err(Error::InvalidFov(_))));
        assert!(plan_sectors(-90.0, 90.0, 30.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn selection_matches_beam_angles() {
        let p = AntennaParams::paper();
        let grid = FrequencyGrid::new(27e9, 33e9, 60).unwrap();
        let th3 = p.radiating_angle(grid.freq(3)).unwrap();
        let th9 = p.radiating_angle(grid.freq(9)).unwrap();
        let sector = Sector { index: 0, theta_lo: th3, theta_hi: th9, delta_theta: 1.0, grid: vec![th3], closed_hi: true, band: None };
        let band = select_frequencies(&sector, &p, &grid, 2).unwrap();
        assert_eq!((band.lo, band.hi), (3, 9));
        let far = Sector { theta_lo: 80.0, theta_hi: 89.0, ..sector.clone() };
        assert!(matches!(select_frequencies(&far, &p, &grid, 2), Err(Error::EmptySector(0))));
        // expansion to min_ns around a narrow sector
        let narrow = Sector { theta_lo: th3, theta_hi: th3 + 1e-6, closed_hi: true, ..sector };
        let band = select_frequencies(&narrow, &p, &grid, 4).unwrap();
        assert_eq!(band.n_s(), 4);
        assert!(band.lo <= 3 && band.hi >= 3);
    }

    #[test]
    fn dictionary_scalars() {
        let p = AntennaParams::paper();
        let grid = FrequencyGrid::new(29e9, 30e9, 2).unwrap();
        let th = p.radiating_angle(29e9).unwrap();
        let sector = Sector {
            index: 0,
            theta_lo: th - 1.0,
            theta_hi: th + 1.0,
            delta_theta: 1.0,
            grid: vec![th],
            closed_hi: true,
            band: Some(FreqBand { lo: 0, hi: 0 }),
        };
        let (a, b) = build_sector_dictionary(&p, &grid, &sector).unwrap();
        assert_eq!(a.shape(), (1, 1));
        assert_eq!(a[(0, 0)], p.steering_response(29e9, th).unwrap());
        assert_relative_eq!(b[(0, 0)].re, p.steering_derivative(29e9, th).unwrap().re * std::f64::consts::PI / 180.0);
    }
}
