//! Leaky-wave antenna model.
//!
//! A one-dimensional periodic unidirectional leaky-wave waveguide radiating
//! through its -1st spatial harmonic. The complex propagation constant
//! `k_z = beta - j*alpha` sets both the main-beam direction
//! `theta0(f) = asin(beta/k0)` and the far-field response
//!
//! ```text
//! a_f(theta) = l_a * exp(-j*u) * sinc(u),   u = (k_z - k0*sin(theta)) * l_a / 2
//! ```
//!
//! with the unnormalized `sinc(u) = sin(u)/u` evaluated on complex `u`.
//! Angles are degrees at every public entry point; derivatives are returned
//! per radian.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{cabs, deg2rad, rad2deg, Real};
use crate::signal::FrequencyGrid;

/// Vacuum speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const SINC_SERIES_BELOW: f64 = 1e-4;
// The derivative cancels harder than sinc itself, so its series covers a wider disc.
const SINC_PRIME_SERIES_BELOW: f64 = 1e-2;
const ENDFIRE_GUARD_DEG: f64 = 1e-6;
const BISECTION_MAX_ITER: usize = 200;

/// Physical description of the leaky-wave antenna.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AntennaParams<T> {
    /// Relative permittivity of the dielectric filling.
    pub eps_r: T,
    /// Waveguide width in meters.
    pub w_g: T,
    /// Modulation period in meters.
    pub period_p: T,
    /// Aperture length in meters.
    pub l_a: T,
    /// Leakage ratio alpha/k0.
    pub alpha_over_k0: T,
    /// Propagation speed in m/s.
    pub c: T,
}

/// Main-beam direction at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BeamAngle<T> {
    /// Beam angle in degrees, within [-90, 90].
    Angle(T),
    /// `|beta/k0| > 1`: the harmonic is guided, nothing radiates.
    NonRadiating,
}

impl<T> BeamAngle<T> {
    pub fn angle(self) -> Option<T> {
        match self {
            BeamAngle::Angle(a) => Some(a),
            BeamAngle::NonRadiating => None,
        }
    }

    pub fn is_radiating(&self) -> bool {
        matches!(self, BeamAngle::Angle(_))
    }
}

impl<T: Real> AntennaParams<T> {
    /// Validated constructor using the vacuum speed of light.
    pub fn new(eps_r: T, w_g: T, period_p: T, l_a: T, alpha_over_k0: T) -> Result<Self> {
        Self::with_speed(eps_r, w_g, period_p, l_a, alpha_over_k0, T::lit(SPEED_OF_LIGHT))
    }

    pub fn with_speed(eps_r: T, w_g: T, period_p: T, l_a: T, alpha_over_k0: T, c: T) -> Result<Self> {
        let p = Self { eps_r, w_g, period_p, l_a, alpha_over_k0, c };
        p.validate()?;
        Ok(p)
    }

    /// The design used throughout the experiments: Rogers-type substrate
    /// (eps_r = 10.2), 2.1 mm guide, 5.5 mm period, 20 cm aperture and
    /// alpha/k0 = 0.01.
    pub fn paper() -> Self {
        Self {
            eps_r: T::lit(10.2),
            w_g: T::lit(2.1e-3),
            period_p: T::lit(5.5e-3),
            l_a: T::lit(0.20),
            alpha_over_k0: T::lit(0.01),
            c: T::lit(SPEED_OF_LIGHT),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParams(what.to_string()));
        if !(self.eps_r > T::one()) {
            return bad("eps_r must exceed 1");
        }
        if !(self.w_g > T::zero()) {
            return bad("w_g must be positive");
        }
        if !(self.period_p > T::zero()) {
            return bad("period_p must be positive");
        }
        if !(self.l_a > T::zero()) {
            return bad("l_a must be positive");
        }
        if !(self.alpha_over_k0 >= T::zero()) {
            return bad("alpha_over_k0 must be nonnegative");
        }
        if !(self.c > T::zero()) {
            return bad("c must be positive");
        }
        let fc = self.cutoff_frequency();
        if !(fc.is_finite() && fc > T::zero()) {
            return bad("cutoff frequency is not finite and positive");
        }
        Ok(())
    }

    /// Fundamental-mode cutoff `c / (2 w_g sqrt(eps_r))` in Hz.
    pub fn cutoff_frequency(&self) -> T {
        self.c / (T::lit(2.0) * self.w_g * self.eps_r.sqrt())
    }

    /// Free-space wavenumber `2 pi f / c`.
    pub fn k0(&self, f: T) -> T {
        T::two_pi() * f / self.c
    }

    fn check_cutoff(&self, f: T) -> Result<()> {
        let fc = self.cutoff_frequency();
        if f < fc || !f.is_finite() {
            return Err(Error::BelowCutoff { f_hz: f.to_f64_lossy(), fc_hz: fc.to_f64_lossy() });
        }
        Ok(())
    }

    /// Unperturbed phase constant of the dielectric-filled guide, rad/m.
    pub fn phase_constant_beta0(&self, f: T) -> Result<T> {
        self.check_cutoff(f)?;
        let r = self.cutoff_frequency() / f;
        let inner = (T::one() - r * r).max(T::zero());
        Ok(self.k0(f) * self.eps_r.sqrt() * inner.sqrt())
    }

    /// Phase constant of the -1st harmonic, `beta0 - 2 pi / p`.
    pub fn phase_constant(&self, f: T) -> Result<T> {
        Ok(self.phase_constant_beta0(f)? - T::two_pi() / self.period_p)
    }

    /// Normalized phase constant `beta / k0`; strictly increasing in `f`.
    pub fn beta_over_k0(&self, f: T) -> Result<T> {
        Ok(self.phase_constant(f)? / self.k0(f))
    }

    /// Complex longitudinal wavenumber `beta - j alpha`.
    pub fn wavenumber_kz(&self, f: T) -> Result<Complex<T>> {
        let beta = self.phase_constant(f)?;
        Ok(Complex::new(beta, -self.alpha_over_k0 * self.k0(f)))
    }

    pub fn beam_angle(&self, f: T) -> Result<BeamAngle<T>> {
        let ratio = self.beta_over_k0(f)?;
        if ratio.abs() <= T::one() {
            Ok(BeamAngle::Angle(rad2deg(ratio.asin())))
        } else {
            Ok(BeamAngle::NonRadiating)
        }
    }

    /// Beam angle in degrees, or [`Error::NonRadiating`].
    pub fn radiating_angle(&self, f: T) -> Result<T> {
        match self.beam_angle(f)? {
            BeamAngle::Angle(a) => Ok(a),
            BeamAngle::NonRadiating => Err(Error::NonRadiating { f_hz: f.to_f64_lossy(), ratio: self.beta_over_k0(f)?.to_f64_lossy() }),
        }
    }

    /// Finds `f` in `[lo, hi]` with `beta(f)/k0(f) = target` by bisection.
    /// Caller guarantees the sign change.
    fn solve_ratio(&self, target: T, lo: T, hi: T) -> Result<T> {
        let (lo, hi) = self.bracket_ratio(target, lo, hi)?;
        Ok((lo + hi) / T::lit(2.0))
    }

    /// Final bisection bracket `(lo, hi)` with the ratio at most `target` at
    /// `lo` and at least `target` at `hi`.
    fn bracket_ratio(&self, target: T, mut lo: T, mut hi: T) -> Result<(T, T)> {
        let g_lo = self.beta_over_k0(lo)? - target;
        if g_lo == T::zero() {
            return Ok((lo, lo));
        }
        for _ in 0..BISECTION_MAX_ITER {
            let mid = (lo + hi) / T::lit(2.0);
            if mid <= lo || mid >= hi {
                break;
            }
            let g_mid = self.beta_over_k0(mid)? - target;
            if g_mid == T::zero() {
                return Ok((mid, mid));
            }
            if g_mid < T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((lo, hi))
    }

    /// Sub-interval of `[f_lo, f_hi]` where `|beta/k0| <= 1`.
    pub fn radiating_band(&self, f_lo: T, f_hi: T) -> Result<(T, T)> {
        if !(f_hi > f_lo) {
            return Err(Error::InvalidGrid("radiating_band requires f_hi > f_lo".into()));
        }
        self.check_cutoff(f_lo)?;
        let r_lo = self.beta_over_k0(f_lo)?;
        let r_hi = self.beta_over_k0(f_hi)?;
        let one = T::one();
        if r_lo > one || r_hi < -one {
            return Err(Error::NoRadiatingFrequency);
        }
        let start = if r_lo >= -one { f_lo } else { self.bracket_ratio(-one, f_lo, f_hi)?.1 };
        let end = if r_hi <= one { f_hi } else { self.bracket_ratio(one, f_lo, f_hi)?.0 };
        Ok((start, end))
    }

    /// Frequency whose main beam points at `theta` degrees, searched within
    /// the radiating part of `[f_lo, f_hi]`.
    pub fn invert_beam_angle(&self, theta: T, f_lo: T, f_hi: T) -> Result<T> {
        let (a, b) = self.radiating_band(f_lo, f_hi)?;
        let lo_deg = self.radiating_angle(a)?;
        let hi_deg = self.radiating_angle(b)?;
        if !(theta >= lo_deg && theta <= hi_deg) {
            return Err(Error::OutOfBand { theta_deg: theta.to_f64_lossy(), lo_deg: lo_deg.to_f64_lossy(), hi_deg: hi_deg.to_f64_lossy() });
        }
        self.solve_ratio(deg2rad(theta).sin(), a, b)
    }

    /// Broadside frequency (`beta = 0`) within `[f_lo, f_hi]`.
    pub fn broadside_frequency(&self, f_lo: T, f_hi: T) -> Result<T> {
        self.invert_beam_angle(T::zero(), f_lo, f_hi)
    }

    fn u_arg(&self, f: T, theta_deg: T) -> Result<Complex<T>> {
        let kz = self.wavenumber_kz(f)?;
        let proj = self.k0(f) * deg2rad(theta_deg).sin();
        Ok((kz - Complex::new(proj, T::zero())) * (self.l_a / T::lit(2.0)))
    }

    /// Far-field response `a_f(theta)` in meters.
    pub fn steering_response(&self, f: T, theta_deg: T) -> Result<Complex<T>> {
        let u = self.u_arg(f, theta_deg)?;
        Ok(exp_neg_j(u) * sinc(u) * self.l_a)
    }

    /// `d a_f(theta) / d theta` per radian.
    pub fn steering_derivative(&self, f: T, theta_deg: T) -> Result<Complex<T>> {
        let u = self.u_arg(f, theta_deg)?;
        let du = -self.k0(f) * deg2rad(theta_deg).cos() * self.l_a / T::lit(2.0);
        let minus_j = Complex::new(T::zero(), -T::one());
        Ok(exp_neg_j(u) * (minus_j * sinc(u) + sinc_prime(u)) * (self.l_a * du))
    }

    /// Approximate 3-dB beamwidth `(180/pi) lambda / (l_a cos theta0)` in degrees.
    pub fn beamwidth_3db(&self, f: T) -> Result<T> {
        let theta0 = self.radiating_angle(f)?;
        if (T::lit(90.0) - theta0.abs()) <= T::lit(ENDFIRE_GUARD_DEG) {
            return Err(Error::DivergentBeamwidth { theta_deg: theta0.to_f64_lossy() });
        }
        let lambda = self.c / f;
        Ok(rad2deg(lambda / (self.l_a * deg2rad(theta0).cos())))
    }

    /// Largest 3-dB beamwidth over the radiating frequencies of `grid`.
    pub fn max_beamwidth(&self, grid: &FrequencyGrid<T>) -> Result<T> {
        let mut best: Option<T> = None;
        for f in grid.iter() {
            match self.beamwidth_3db(f) {
                Ok(bw) => best = Some(best.map_or(bw, |b: T| b.max(bw))),
                Err(Error::NonRadiating { .. }) | Err(Error::BelowCutoff { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        best.ok_or(Error::NoRadiatingFrequency)
    }
}

#[inline]
fn exp_neg_j<T: Real>(u: Complex<T>) -> Complex<T> {
    // exp(-j u) with u = x + j y  ->  exp(y) * (cos x - j sin x)
    let mag = u.im.exp();
    Complex::new(mag * u.re.cos(), -mag * u.re.sin())
}

#[inline]
fn csin<T: Real>(u: Complex<T>) -> Complex<T> {
    Complex::new(u.re.sin() * u.im.cosh(), u.re.cos() * u.im.sinh())
}

#[inline]
fn ccos<T: Real>(u: Complex<T>) -> Complex<T> {
    Complex::new(u.re.cos() * u.im.cosh(), -u.re.sin() * u.im.sinh())
}

/// Unnormalized complex sinc, `sin(u)/u`, with `sinc(0) = 1`.
pub fn sinc<T: Real>(u: Complex<T>) -> Complex<T> {
    if cabs(u) < T::lit(SINC_SERIES_BELOW) {
        let u2 = u * u;
        let one = Complex::new(T::one(), T::zero());
        one - u2 / T::lit(6.0) + u2 * u2 / T::lit(120.0)
    } else {
        csin(u) / u
    }
}

/// Derivative of [`sinc`]: `cos(u)/u - sin(u)/u^2`.
pub fn sinc_prime<T: Real>(u: Complex<T>) -> Complex<T> {
    if cabs(u) < T::lit(SINC_PRIME_SERIES_BELOW) {
        let u2 = u * u;
        let u3 = u2 * u;
        let u5 = u3 * u2;
        let u7 = u5 * u2;
        -u / T::lit(3.0) + u3 / T::lit(30.0) - u5 / T::lit(840.0) + u7 / T::lit(45360.0)
    } else {
        ccos(u) / u - csin(u) / (u * u)
    }
}
