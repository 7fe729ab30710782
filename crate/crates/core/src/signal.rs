//! Snapshot simulation: steering matrices, coherent or incoherent sources,
//! calibrated complex AWGN, and the sample covariance.

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lwa::AntennaParams;
use crate::scalar::{complex_normal, frob_norm_sq, from_polar, CMatrix, Real};

/// `n` uniformly spaced frequencies from `f_min` to `f_max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid<T> {
    pub f_min: T,
    pub f_max: T,
    pub n: usize,
}

impl<T: Real> FrequencyGrid<T> {
    pub fn new(f_min: T, f_max: T, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 samples, got {n}")));
        }
        if !(f_max > f_min) || !f_min.is_finite() || !f_max.is_finite() {
            return Err(Error::InvalidGrid("f_max must exceed f_min".into()));
        }
        Ok(Self { f_min, f_max, n })
    }

    /// Spacing `(f_max - f_min) / (n - 1)`.
    pub fn step(&self) -> T {
        (self.f_max - self.f_min) / T::from_usize(self.n - 1).unwrap()
    }

    pub fn freq(&self, i: usize) -> T {
        if i + 1 == self.n {
            self.f_max
        } else {
            self.f_min + T::from_usize(i).unwrap() * self.step()
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.n).map(move |i| self.freq(i))
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.iter().collect()
    }
}

/// Whether the source waveforms are fully correlated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coherence {
    Coherent,
    Incoherent,
}

impl std::str::FromStr for Coherence {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coherent" => Ok(Coherence::Coherent),
            "incoherent" => Ok(Coherence::Incoherent),
            other => Err(Error::InvalidScenario(format!("unknown coherence `{other}`"))),
        }
    }
}

impl std::fmt::Display for Coherence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Coherence::Coherent => "coherent",
            Coherence::Incoherent => "incoherent",
        })
    }
}

/// Source directions, coherence model and complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceScenario<T> {
    /// Directions of arrival in degrees.
    pub doas: Vec<T>,
    pub coherence: Coherence,
    /// One complex amplitude per source.
    pub gains: Vec<Complex<T>>,
}

impl<T: Real> SourceScenario<T> {
    /// Unit gains with zero phase.
    pub fn new(doas: Vec<T>, coherence: Coherence) -> Result<Self> {
        let gains = vec![Complex::new(T::one(), T::zero()); doas.len()];
        Self::with_gains(doas, coherence, gains)
    }

    /// Unit-modulus gains whose phases are drawn from `seed`.
    pub fn with_random_phases(doas: Vec<T>, coherence: Coherence, seed: u64) -> Result<Self> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gains = doas
            .iter()
            .map(|_| {
                let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                from_polar(T::one(), T::lit(phi))
            })
            .collect();
        Self::with_gains(doas, coherence, gains)
    }

    pub fn with_gains(doas: Vec<T>, coherence: Coherence, gains: Vec<Complex<T>>) -> Result<Self> {
        if doas.is_empty() {
            return Err(Error::InvalidScenario("at least one source is required".into()));
        }
        if gains.len() != doas.len() {
            return Err(Error::InvalidScenario("one gain per source is required".into()));
        }
        let ninety = T::lit(90.0);
        if doas.iter().any(|&d| !(d >= -ninety && d <= ninety)) {
            return Err(Error::InvalidScenario("DoAs must lie in [-90, 90] degrees".into()));
        }
        Ok(Self { doas, coherence, gains })
    }

    pub fn k(&self) -> usize {
        self.doas.len()
    }
}

/// Received data: rows are frequency samples, columns are snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix<T: Real> {
    pub data: CMatrix<T>,
}

impl<T: Real> SnapshotMatrix<T> {
    pub fn new(data: CMatrix<T>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(Error::DimensionMismatch("snapshot matrix needs at least one column".into()));
        }
        if data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NumericalFailure("snapshot matrix has non-finite entries".into()));
        }
        Ok(Self { data })
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn snapshots(&self) -> usize {
        self.data.ncols()
    }
}

/// Steering matrix at explicit frequencies: entry `(i, k)` is `a_{f_i}(theta_k)`.
pub fn steering_matrix_at<T: Real>(params: &AntennaParams<T>, freqs: &[T], angles: &[T]) -> Result<CMatrix<T>> {
    let mut m = DMatrix::zeros(freqs.len(), angles.len());
    for (k, &th) in angles.iter().enumerate() {
        for (i, &f) in freqs.iter().enumerate() {
            m[(i, k)] = params.steering_response(f, th)?;
        }
    }
    Ok(m)
}

/// Angular derivative matrix at explicit frequencies, per radian.
pub fn derivative_matrix_at<T: Real>(params: &AntennaParams<T>, freqs: &[T], angles: &[T]) -> Result<CMatrix<T>> {
    let mut m = DMatrix::zeros(freqs.len(), angles.len());
    for (k, &th) in angles.iter().enumerate() {
        for (i, &f) in freqs.iter().enumerate() {
            m[(i, k)] = params.steering_derivative(f, th)?;
        }
    }
    Ok(m)
}

/// `N x K` steering matrix over the whole grid. Columns are not normalized.
pub fn build_steering_matrix<T: Real>(params: &AntennaParams<T>, grid: &FrequencyGrid<T>, angles: &[T]) -> Result<CMatrix<T>> {
    steering_matrix_at(params, &grid.to_vec(), angles)
}

/// `K x T` source waveforms.
///
/// Incoherent rows are independent unit-variance circular Gaussians scaled by
/// the gains. Coherent rows share one waveform: row `k` is `gains[k] * s[t]`.
pub fn generate_sources<T: Real>(scenario: &SourceScenario<T>, t: usize, seed: u64) -> CMatrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sources_from_rng(scenario, t, &mut rng)
}

fn sources_from_rng<T: Real>(scenario: &SourceScenario<T>, t: usize, rng: &mut ChaCha8Rng) -> CMatrix<T> {
    let k = scenario.k();
    let mut x = DMatrix::zeros(k, t);
    match scenario.coherence {
        Coherence::Coherent => {
            for col in 0..t {
                let s = complex_normal(rng, T::one());
                for row in 0..k {
                    x[(row, col)] = scenario.gains[row] * s;
                }
            }
        }
        Coherence::Incoherent => {
            for col in 0..t {
                for row in 0..k {
                    x[(row, col)] = scenario.gains[row] * complex_normal(rng, T::one());
                }
            }
        }
    }
    x
}

/// Noise variance giving `snr_db` relative to the mean power of `A X`.
/// `+inf` returns zero.
pub fn snr_to_noise_variance<T: Real>(a: &CMatrix<T>, x: &CMatrix<T>, snr_db: T) -> Result<T> {
    if a.ncols() != x.nrows() {
        return Err(Error::DimensionMismatch(format!("A has {} columns, X has {} rows", a.ncols(), x.nrows())));
    }
    let ax = a * x;
    let count = T::from_usize(ax.nrows() * ax.ncols()).unwrap();
    let power = frob_norm_sq(&ax) / count;
    if !(power > T::zero()) {
        return Err(Error::ZeroSignal);
    }
    if !snr_db.is_finite() && snr_db > T::zero() {
        return Ok(T::zero());
    }
    Ok(power / T::lit(10.0).powf(snr_db / T::lit(10.0)))
}

/// Output of [`simulate_snapshots`], keeping the noiseless pieces for diagnostics.
#[derive(Debug, Clone)]
pub struct Simulation<T: Real> {
    pub y: SnapshotMatrix<T>,
    /// Noise variance actually used.
    pub sigma2: T,
    pub a: CMatrix<T>,
    pub x: CMatrix<T>,
}

/// `Y = A X + N` over the full grid, deterministic in `seed`. Pass
/// `f64::INFINITY` as `snr_db` to disable noise.
pub fn simulate_snapshots<T: Real>(
    params: &AntennaParams<T>,
    grid: &FrequencyGrid<T>,
    scenario: &SourceScenario<T>,
    t: usize,
    snr_db: T,
    seed: u64,
) -> Result<Simulation<T>> {
    if t == 0 {
        return Err(Error::InvalidScenario("snapshot count must be at least 1".into()));
    }
    if scenario.k() >= grid.n {
        return Err(Error::InvalidScenario(format!("need N > K, got N={} K={}", grid.n, scenario.k())));
    }
    let a = build_steering_matrix(params, grid, &scenario.doas)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = sources_from_rng(scenario, t, &mut rng);
    let sigma2 = snr_to_noise_variance(&a, &x, snr_db)?;
    let mut y = &a * &x;
    if sigma2 > T::zero() {
        for z in y.iter_mut() {
            *z += complex_normal(&mut rng, sigma2);
        }
    }
    Ok(Simulation { y: SnapshotMatrix::new(y)?, sigma2, a, x })
}

/// Sample covariance `Y Y^H / T`.
pub fn sample_covariance<T: Real>(y: &SnapshotMatrix<T>) -> CMatrix<T> {
    let t = T::from_usize(y.snapshots()).unwrap();
    (&y.data * y.data.adjoint()).map(|z| z / t)
}
