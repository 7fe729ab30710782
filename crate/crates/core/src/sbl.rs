//! Multi-snapshot sparse Bayesian learning.
//!
//! Each row `x_p` of the source matrix gets a zero-mean complex Gaussian prior
//! with variance `gamma_p`; the noise precision gets a weak Gamma(c, d) prior.
//! The engine alternates
//!
//! * E-step: posterior covariance `Sigma` and mean `U` of the rows,
//! * M-step for the row variances (plain EM or the regularized rule),
//! * M-step for the noise variance,
//! * optionally an off-grid offset refinement (see [`crate::offgrid`]),
//!
//! and prunes rows whose variance falls below a fraction of the largest one.
//! Pruned rows never come back.

use nalgebra::{Cholesky, DMatrix, Dyn};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::offgrid::{beta_update_ogsbi, beta_update_paper, BetaVariant};
use crate::scalar::{frob_norm_sq, CMatrix, Real};

/// Row-variance M-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaUpdate {
    /// `gamma_p = ||u_p||^2 / T + Sigma_pp`.
    Em,
    /// Gamma-hyperprior regularized rule with strength `varsigma`.
    Regularized,
}

impl std::str::FromStr for GammaUpdate {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "em" => Ok(GammaUpdate::Em),
            "regularized" => Ok(GammaUpdate::Regularized),
            other => Err(Error::InvalidConfig(format!("unknown gamma update `{other}`"))),
        }
    }
}

impl std::fmt::Display for GammaUpdate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GammaUpdate::Em => "em",
            GammaUpdate::Regularized => "regularized",
        })
    }
}

/// Engine settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SblConfig<T> {
    pub max_iter: usize,
    /// Stop when `max |d gamma| / max gamma` falls below this.
    pub tol: T,
    pub varsigma: T,
    /// Gamma prior shape on the noise precision.
    pub prior_c: T,
    /// Gamma prior rate on the noise precision.
    pub prior_d: T,
    /// Initial row variance, in units of `mean|Y|^2 / mean|A|^2`.
    pub gamma_init: T,
    /// Rows with `gamma_p < prune_threshold * max gamma` are removed.
    pub prune_threshold: T,
    pub gamma_update: GammaUpdate,
    /// Initial noise variance as a fraction of `mean|Y|^2`.
    pub sigma_init_factor: T,
    /// Record one [`TraceRow`] per iteration.
    pub trace: bool,
}

impl<T: Real> Default for SblConfig<T> {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: T::lit(1e-4),
            varsigma: T::lit(1e-2),
            prior_c: T::lit(1e-4),
            prior_d: T::lit(1e-4),
            gamma_init: T::one(),
            prune_threshold: T::lit(1e-3),
            gamma_update: GammaUpdate::Regularized,
            sigma_init_factor: T::lit(0.1),
            trace: false,
        }
    }
}

impl<T: Real> SblConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        if !(self.tol > T::zero() && self.tol < T::one()) {
            return bad("tol must lie in (0, 1)");
        }
        if !(self.varsigma > T::zero()) {
            return bad("varsigma must be positive");
        }
        if !(self.prior_c >= T::zero() && self.prior_d >= T::zero()) {
            return bad("Gamma prior constants must be nonnegative");
        }
        if !(self.gamma_init > T::zero() && self.sigma_init_factor > T::zero()) {
            return bad("initial variances must be positive");
        }
        if !(self.prune_threshold > T::zero() && self.prune_threshold < T::one()) {
            return bad("prune_threshold must lie in (0, 1)");
        }
        Ok(())
    }
}

/// One line of the optional per-iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow<T> {
    pub iteration: usize,
    pub max_gamma: T,
    pub sigma2: T,
    /// Log evidence plus the noise-precision log prior.
    pub log_evidence: T,
    pub active: usize,
    /// Largest offset magnitude in degrees (off-grid runs only).
    pub max_abs_beta: Option<T>,
}

/// Converged (or last) engine state.
#[derive(Debug, Clone, PartialEq)]
pub struct SblState<T: Real> {
    /// Row variances; pruned rows hold exactly zero.
    pub gamma: Vec<T>,
    pub sigma2: T,
    /// Posterior mean `U`, `P x T`.
    pub mean: CMatrix<T>,
    /// Posterior covariance `Sigma`, `P x P`.
    pub cov: CMatrix<T>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow<T>>,
}

impl<T: Real> SblState<T> {
    /// Indices of unpruned rows.
    pub fn support(&self) -> Vec<usize> {
        self.gamma.iter().enumerate().filter(|(_, &g)| g > T::zero()).map(|(i, _)| i).collect()
    }

    pub fn max_gamma(&self) -> T {
        self.gamma.iter().copied().fold(T::zero(), |a, b| a.max(b))
    }
}

fn zero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

fn cholesky_with_jitter<T: Real>(m: CMatrix<T>) -> Result<Cholesky<Complex<T>, Dyn>> {
    let n = m.nrows();
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let trace = (0..n).fold(T::zero(), |acc, i| acc + m[(i, i)].re.abs());
    let jitter = T::lit(1e-12) * trace.max(T::min_positive_value());
    let mut m = m;
    for i in 0..n {
        m[(i, i)].re += jitter;
    }
    Cholesky::new(m).ok_or_else(|| Error::NumericalFailure("Cholesky factorization failed after jitter".into()))
}

fn check_dims<T: Real>(a: &CMatrix<T>, y: &CMatrix<T>, gamma: &[T]) -> Result<()> {
    if a.nrows() != y.nrows() || a.ncols() != gamma.len() {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, Y has {} rows, gamma has {} entries",
            a.nrows(),
            a.ncols(),
            y.nrows(),
            gamma.len()
        )));
    }
    Ok(())
}

fn active_indices<T: Real>(gamma: &[T]) -> Vec<usize> {
    gamma.iter().enumerate().filter(|(_, &g)| g > T::zero()).map(|(i, _)| i).collect()
}

fn scatter<T: Real>(p: usize, t: usize, idx: &[usize], mean_s: &CMatrix<T>, cov_s: &CMatrix<T>) -> (CMatrix<T>, CMatrix<T>) {
    let mut mean = DMatrix::from_element(p, t, zero());
    let mut cov = DMatrix::from_element(p, p, zero());
    for (r, &i) in idx.iter().enumerate() {
        mean.row_mut(i).copy_from(&mean_s.row(r));
        for (c, &j) in idx.iter().enumerate() {
            cov[(i, j)] = cov_s[(r, c)];
        }
    }
    (mean, cov)
}

/// Information-form E-step on the active rows from the Gram matrix
/// `G = Phi^H Phi` and `Z = Phi^H Y`:
/// `Sigma = (Gamma^-1 + G / sigma2)^-1`, `U = Sigma Z / sigma2`.
///
/// Evaluated as `D (I + D G D / sigma2)^-1 D` with `D = Gamma^{1/2}` so small
/// variances do not blow up the conditioning.
pub(crate) fn info_form_from_gram<T: Real>(gram: &CMatrix<T>, z: &CMatrix<T>, gamma: &[T], sigma2: T) -> Result<(CMatrix<T>, CMatrix<T>)> {
    let k = gamma.len();
    let d: Vec<T> = gamma.iter().map(|g| g.sqrt()).collect();
    let inv_s2 = T::one() / sigma2;
    let mut m = DMatrix::from_fn(k, k, |i, j| gram[(i, j)] * (d[i] * d[j] * inv_s2));
    for i in 0..k {
        m[(i, i)].re += T::one();
    }
    let chol = cholesky_with_jitter(m)?;
    let minv = chol.inverse();
    let cov = DMatrix::from_fn(k, k, |i, j| minv[(i, j)] * (d[i] * d[j]));
    let mean = (&cov * z).map(|v| v * inv_s2);
    Ok((mean, cov))
}

/// Covariance-form E-step on the active rows:
/// `C = sigma2 I + Phi Gamma Phi^H`, `Sigma = Gamma - Gamma Phi^H C^-1 Phi Gamma`,
/// `U = Gamma Phi^H C^-1 Y`.
pub(crate) fn c_form<T: Real>(phi: &CMatrix<T>, y: &CMatrix<T>, gamma: &[T], sigma2: T) -> Result<(CMatrix<T>, CMatrix<T>)> {
    let n = phi.nrows();
    let k = gamma.len();
    let phi_g = DMatrix::from_fn(n, k, |i, j| phi[(i, j)] * gamma[j]);
    let mut c = &phi_g * phi.adjoint();
    for i in 0..n {
        c[(i, i)].re += sigma2;
    }
    let chol = cholesky_with_jitter(c)?;
    // W = C^-1 Phi Gamma  (n x k)
    let w = chol.solve(&phi_g);
    let mut cov = -(phi_g.adjoint() * &w);
    for i in 0..k {
        cov[(i, i)].re += gamma[i];
    }
    let mean = w.adjoint() * y;
    Ok((mean, cov))
}

/// Posterior information form on the full dictionary. Rows with zero
/// variance are excluded and come back as exact zeros.
pub fn posterior_information_form<T: Real>(a: &CMatrix<T>, y: &CMatrix<T>, gamma: &[T], sigma2: T) -> Result<(CMatrix<T>, CMatrix<T>)> {
    check_dims(a, y, gamma)?;
    let idx = active_indices(gamma);
    let g_s: Vec<T> = idx.iter().map(|&i| gamma[i]).collect();
    let a_s = a.select_columns(&idx);
    let gram = a_s.adjoint() * &a_s;
    let z = a_s.adjoint() * y;
    let (m, c) = info_form_from_gram(&gram, &z, &g_s, sigma2)?;
    Ok(scatter(a.ncols(), y.ncols(), &idx, &m, &c))
}

/// Posterior covariance form on the full dictionary.
pub fn posterior_c_form<T: Real>(a: &CMatrix<T>, y: &CMatrix<T>, gamma: &[T], sigma2: T) -> Result<(CMatrix<T>, CMatrix<T>)> {
    check_dims(a, y, gamma)?;
    let idx = active_indices(gamma);
    let g_s: Vec<T> = idx.iter().map(|&i| gamma[i]).collect();
    let a_s = a.select_columns(&idx);
    let (m, c) = c_form(&a_s, y, &g_s, sigma2)?;
    Ok(scatter(a.ncols(), y.ncols(), &idx, &m, &c))
}

/// E-step: returns `(U, Sigma)`. Uses the information form when the active
/// row count is at most twice the number of measurements, the covariance
/// form otherwise.
pub fn posterior_update<T: Real>(a: &CMatrix<T>, y: &CMatrix<T>, gamma: &[T], sigma2: T) -> Result<(CMatrix<T>, CMatrix<T>)> {
    if !(sigma2 > T::zero()) {
        return Err(Error::InvalidConfig("noise variance must be positive".into()));
    }
    let active = gamma.iter().filter(|&&g| g > T::zero()).count();
    if active <= 2 * a.nrows() {
        posterior_information_form(a, y, gamma, sigma2)
    } else {
        posterior_c_form(a, y, gamma, sigma2)
    }
}

/// Plain EM rule `gamma_p = ||u_p||^2 / T + Sigma_pp`.
pub fn gamma_update_em<T: Real>(u: &CMatrix<T>, sigma_diag: &[T], t: usize) -> Vec<T> {
    let tt = T::from_usize(t).unwrap();
    (0..u.nrows())
        .map(|p| {
            let row: T = u.row(p).iter().fold(T::zero(), |acc, z| acc + z.norm_sqr());
            (row / tt + sigma_diag[p]).max(T::zero())
        })
        .collect()
}

/// Regularized rule `(sqrt(T^2 + 4 s S) - T) / (2 s)` with
/// `S = ||u_p||^2 + T Sigma_pp`, evaluated as `2S / (sqrt(T^2 + 4 s S) + T)`.
pub fn gamma_update_regularized<T: Real>(u_row_norms_sq: &[T], sigma_diag: &[T], t: usize, varsigma: T) -> Vec<T> {
    let tt = T::from_usize(t).unwrap();
    u_row_norms_sq
        .iter()
        .zip(sigma_diag)
        .map(|(&un, &sd)| {
            let s = (un + tt * sd).max(T::zero());
            let root = (tt * tt + T::lit(4.0) * varsigma * s).sqrt();
            T::lit(2.0) * s / (root + tt)
        })
        .collect()
}

/// Squared row norms `||u_p||^2`.
pub fn row_norms_sq<T: Real>(u: &CMatrix<T>) -> Vec<T> {
    (0..u.nrows()).map(|p| u.row(p).iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())).collect()
}

/// Noise M-step:
/// `(||Y - A U||^2 + sigma2_prev T sum_p (1 - Sigma_pp / gamma_p) + d) / (N T + c - 1)`,
/// the sum running over rows with `gamma_p > 0`. Floored at
/// `1e-12 mean|Y|^2`.
#[allow(clippy::too_many_arguments)]
pub fn noise_update<T: Real>(
    y: &CMatrix<T>,
    a: &CMatrix<T>,
    u: &CMatrix<T>,
    gamma: &[T],
    sigma_diag: &[T],
    sigma2_prev: T,
    c: T,
    d: T,
) -> T {
    let resid = frob_norm_sq(&(y - a * u));
    let mean_pow = frob_norm_sq(y) / T::from_usize(y.nrows() * y.ncols()).unwrap();
    noise_update_from_residual(resid, (y.nrows(), y.ncols()), mean_pow, gamma, sigma_diag, sigma2_prev, c, d)
}

#[allow(clippy::too_many_arguments)]
fn noise_update_from_residual<T: Real>(
    resid: T,
    (n, t): (usize, usize),
    mean_pow: T,
    gamma: &[T],
    sigma_diag: &[T],
    sigma2_prev: T,
    c: T,
    d: T,
) -> T {
    let tt = T::from_usize(t).unwrap();
    let dof: T = gamma.iter().zip(sigma_diag).filter(|(&g, _)| g > T::zero()).fold(T::zero(), |acc, (&g, &s)| acc + (T::one() - s / g));
    let denom = T::from_usize(n * t).unwrap() + c - T::one();
    let raw = (resid + sigma2_prev * tt * dof + d) / denom;
    raw.max(T::lit(1e-12) * mean_pow)
}

/// Gaussian log marginal likelihood `log p(Y | gamma, sigma2)` with
/// `C = sigma2 I + A Gamma A^H`:
/// `-T log det(pi C) - tr(C^-1 Y Y^H)`.
pub fn log_evidence<T: Real>(a: &CMatrix<T>, y: &CMatrix<T>, gamma: &[T], sigma2: T) -> Result<T> {
    check_dims(a, y, gamma)?;
    let n = a.nrows();
    let t = T::from_usize(y.ncols()).unwrap();
    let ag = DMatrix::from_fn(n, a.ncols(), |i, j| a[(i, j)] * gamma[j]);
    let mut c = &ag * a.adjoint();
    for i in 0..n {
        c[(i, i)].re += sigma2;
    }
    let chol = cholesky_with_jitter(c)?;
    let l = chol.l();
    let logdet = (0..n).fold(T::zero(), |acc, i| acc + l[(i, i)].re.ln()) * T::lit(2.0);
    let solved = chol.solve(y);
    let quad = y.iter().zip(solved.iter()).fold(T::zero(), |acc, (yv, sv)| acc + (yv.conj() * sv).re);
    Ok(-t * (logdet + T::from_usize(n).unwrap() * T::pi().ln()) - quad)
}

/// Log evidence plus the Gamma(c, d) log prior on the noise precision; the
/// objective the EM variant ascends.
pub fn log_objective<T: Real>(a: &CMatrix<T>, y: &CMatrix<T>, gamma: &[T], sigma2: T, c: T, d: T) -> Result<T> {
    let precision = T::one() / sigma2;
    Ok(log_evidence(a, y, gamma, sigma2)? + (c - T::one()) * precision.ln() - d * precision)
}

/// Off-grid refinement settings handed to the shared engine.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Refinement<'a, T: Real> {
    pub b: &'a CMatrix<T>,
    pub variant: BetaVariant,
    /// Clamp half-width in degrees.
    pub half_width: T,
}

/// Engine output: on-grid state plus offsets (all zero for on-grid runs).
pub(crate) struct EngineOutput<T: Real> {
    pub state: SblState<T>,
    pub beta: Vec<T>,
}

struct Moments<T: Real> {
    aha: CMatrix<T>,
    // off-grid only
    ahb: Option<CMatrix<T>>,
    bhb: Option<CMatrix<T>>,
    bhy: Option<CMatrix<T>>,
}

fn sub_square<T: Real>(m: &CMatrix<T>, idx: &[usize]) -> CMatrix<T> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// `R^H` from the QR factorization `Y^H = Q R`: an `N x N` matrix with the
/// same `Y Y^H` as `Y`. Every update in the loop depends on the data only
/// through `Y Y^H` (with the nominal snapshot count), so iterating on the
/// reduced matrix is exact and costs `N` columns instead of `T`.
fn compress_snapshots<T: Real>(y: &CMatrix<T>) -> Option<CMatrix<T>> {
    (y.ncols() > y.nrows()).then(|| y.adjoint().qr().r().adjoint())
}

/// Effective dictionary restricted to `idx`: `A_S + B_S diag(beta_S)`.
fn phi_active<T: Real>(a: &CMatrix<T>, b: Option<&CMatrix<T>>, beta: &[T], idx: &[usize]) -> CMatrix<T> {
    DMatrix::from_fn(a.nrows(), idx.len(), |i, j| {
        let p = idx[j];
        match b {
            Some(b) => a[(i, p)] + b[(i, p)] * beta[p],
            None => a[(i, p)],
        }
    })
}

fn gram_active<T: Real>(mo: &Moments<T>, beta: &[T], idx: &[usize]) -> CMatrix<T> {
    let mut g = sub_square(&mo.aha, idx);
    if let (Some(ahb), Some(bhb)) = (&mo.ahb, &mo.bhb) {
        let k = idx.len();
        for i in 0..k {
            let (p, bp) = (idx[i], beta[idx[i]]);
            for j in 0..k {
                let (q, bq) = (idx[j], beta[idx[j]]);
                // (A + B diag beta)^H (A + B diag beta)
                g[(i, j)] += ahb[(p, q)] * bq + ahb[(q, p)].conj() * bp + bhb[(p, q)] * (bp * bq);
            }
        }
    }
    g
}

#[allow(clippy::too_many_arguments)]
fn e_step<T: Real>(
    a: &CMatrix<T>,
    b: Option<&CMatrix<T>>,
    y: &CMatrix<T>,
    mo: &Moments<T>,
    gamma: &[T],
    beta: &[T],
    idx: &[usize],
    sigma2: T,
) -> Result<(CMatrix<T>, CMatrix<T>, CMatrix<T>)> {
    let g_s: Vec<T> = idx.iter().map(|&i| gamma[i]).collect();
    let phi = phi_active(a, b, beta, idx);
    let (mean, cov) = if idx.len() <= 2 * a.nrows() {
        let gram = gram_active(mo, beta, idx);
        info_form_from_gram(&gram, &(phi.adjoint() * y), &g_s, sigma2)?
    } else {
        c_form(&phi, y, &g_s, sigma2)?
    };
    Ok((mean, cov, phi))
}

/// Shared on-grid/off-grid iteration.
pub(crate) fn run_engine<T: Real>(
    a: &CMatrix<T>,
    y: &CMatrix<T>,
    config: &SblConfig<T>,
    refine: Option<Refinement<'_, T>>,
) -> Result<EngineOutput<T>> {
    config.validate()?;
    let (n, p, t) = (a.nrows(), a.ncols(), y.ncols());
    if y.nrows() != n {
        return Err(Error::DimensionMismatch(format!("A has {} rows, Y has {}", n, y.nrows())));
    }
    if let Some(r) = &refine {
        if r.b.shape() != a.shape() {
            return Err(Error::DimensionMismatch("B must match the shape of A".into()));
        }
    }
    let b = refine.as_ref().map(|r| r.b);
    let mean_y = frob_norm_sq(y) / T::from_usize(n * t).unwrap();
    let mut beta = vec![T::zero(); p];

    if !(mean_y > T::zero()) || p == 0 {
        return Ok(EngineOutput {
            state: SblState {
                gamma: vec![T::zero(); p],
                sigma2: T::min_positive_value(),
                mean: DMatrix::from_element(p, t, zero()),
                cov: DMatrix::from_element(p, p, zero()),
                iterations: 0,
                converged: true,
                trace: Vec::new(),
            },
            beta,
        });
    }

    let reduced = compress_snapshots(y);
    let yw = reduced.as_ref().unwrap_or(y);
    let ah = a.adjoint();
    let mo = Moments { aha: &ah * a, ahb: b.map(|b| &ah * b), bhb: b.map(|b| b.adjoint() * b), bhy: b.map(|b| b.adjoint() * yw) };

    let mean_a = frob_norm_sq(a) / T::from_usize(n * p).unwrap();
    let gamma0 = config.gamma_init * mean_y / mean_a.max(T::min_positive_value());
    let mut gamma = vec![gamma0; p];
    let mut sigma2 = config.sigma_init_factor * mean_y;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..config.max_iter {
        iterations = iter + 1;
        let idx = active_indices(&gamma);
        if idx.is_empty() {
            converged = true;
            break;
        }
        let (mean, cov, phi) = e_step(a, b, yw, &mo, &gamma, &beta, &idx, sigma2)?;
        let sdiag: Vec<T> = (0..idx.len()).map(|i| cov[(i, i)].re.max(T::zero())).collect();

        let new_g_s = match config.gamma_update {
            GammaUpdate::Em => gamma_update_em(&mean, &sdiag, t),
            GammaUpdate::Regularized => gamma_update_regularized(&row_norms_sq(&mean), &sdiag, t, config.varsigma),
        };
        let g_s: Vec<T> = idx.iter().map(|&i| gamma[i]).collect();
        let resid = frob_norm_sq(&(yw - &phi * &mean));
        let new_sigma2 = noise_update_from_residual(resid, (n, t), mean_y, &g_s, &sdiag, sigma2, config.prior_c, config.prior_d);

        let mut max_dbeta = T::zero();
        if let Some(r) = &refine {
            let old: Vec<T> = idx.iter().map(|&i| beta[i]).collect();
            match r.variant {
                BetaVariant::Paper => {
                    // data-space image of the coefficient posterior covariance
                    let w = &phi * &cov * phi.adjoint();
                    for &pi in &idx {
                        let a_col = a.column(pi).into_owned();
                        let b_col = r.b.column(pi).into_owned();
                        if let Some(v) = beta_update_paper(&a_col, &b_col, &w, r.half_width) {
                            beta[pi] = v;
                        }
                    }
                }
                BetaVariant::Ogsbi => {
                    let mo_b = OgsbiMoments { ahb: mo.ahb.as_ref().unwrap(), bhb: mo.bhb.as_ref().unwrap(), bhy: mo.bhy.as_ref().unwrap() };
                    beta_update_ogsbi(&mo_b, &mean, &cov, &idx, &mut beta, t, r.half_width);
                }
            }
            for (k, &pi) in idx.iter().enumerate() {
                max_dbeta = max_dbeta.max((beta[pi] - old[k]).abs());
            }
        }

        let mut new_gamma = vec![T::zero(); p];
        for (k, &pi) in idx.iter().enumerate() {
            new_gamma[pi] = new_g_s[k];
        }
        let gmax = new_gamma.iter().copied().fold(T::zero(), |x, y| x.max(y));
        let cut = config.prune_threshold * gmax;
        for g in new_gamma.iter_mut() {
            if *g < cut || !(*g > T::zero()) {
                *g = T::zero();
            }
        }
        let dg = gamma.iter().zip(&new_gamma).fold(T::zero(), |m, (o, nw)| m.max((*o - *nw).abs()));
        let rel = dg / (gmax + T::lit(1e-30));
        gamma = new_gamma;
        sigma2 = new_sigma2;

        if config.trace {
            let phi_full = phi_active(a, b, &beta, &(0..p).collect::<Vec<_>>());
            let le = log_objective(&phi_full, y, &gamma, sigma2, config.prior_c, config.prior_d).unwrap_or(T::nan());
            trace.push(TraceRow {
                iteration: iterations,
                max_gamma: gmax,
                sigma2,
                log_evidence: le,
                active: gamma.iter().filter(|&&g| g > T::zero()).count(),
                max_abs_beta: refine.as_ref().map(|_| beta.iter().fold(T::zero(), |m, v| m.max(v.abs()))),
            });
        }

        let beta_ok = match &refine {
            Some(r) => max_dbeta < T::lit(0.02) * r.half_width,
            None => true,
        };
        if rel < config.tol && beta_ok {
            converged = true;
            break;
        }
    }

    let idx = active_indices(&gamma);
    let (mean, cov) = if idx.is_empty() {
        (DMatrix::from_element(p, t, zero()), DMatrix::from_element(p, p, zero()))
    } else {
        let (m_s, c_s, _) = e_step(a, b, y, &mo, &gamma, &beta, &idx, sigma2)?;
        scatter(p, t, &idx, &m_s, &c_s)
    };
    Ok(EngineOutput { state: SblState { gamma, sigma2, mean, cov, iterations, converged, trace }, beta })
}

/// Precomputed cross moments used by the residual-based offset update.
pub struct OgsbiMoments<'a, T: Real> {
    /// `A^H B`
    pub ahb: &'a CMatrix<T>,
    /// `B^H B`
    pub bhb: &'a CMatrix<T>,
    /// `B^H Y`
    pub bhy: &'a CMatrix<T>,
}

/// On-grid SBL on dictionary `a` and data `y`. Rows below the prune
/// threshold are dropped as the iteration proceeds.
pub fn run_ongrid<T: Real>(a: &CMatrix<T>, y: &CMatrix<T>, config: &SblConfig<T>) -> Result<SblState<T>> {
    Ok(run_engine(a, y, config, None)?.state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn zero_prior_gives_zero_posterior() {
        let a = DMatrix::from_fn(3, 4, |i, j| c((i + j) as f64, 1.0));
        let y = DMatrix::from_fn(3, 2, |i, j| c(i as f64, j as f64));
        let (u, s) = posterior_update(&a, &y, &[0.0; 4], 1.0).unwrap();
        assert!(u.iter().all(|z| *z == c(0.0, 0.0)));
        assert!(s.iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn identity_dictionary_scalar_bayes() {
        let a = DMatrix::<Complex<f64>>::identity(3, 3);
        let y = DMatrix::from_column_slice(3, 1, &[c(1.0, 2.0), c(-1.0, 0.5), c(0.0, 3.0)]);
        for (u, s) in [posterior_information_form(&a, &y, &[1.0; 3], 1.0).unwrap(), posterior_c_form(&a, &y, &[1.0; 3], 1.0).unwrap()] {
            for i in 0..3 {
                assert_relative_eq!(s[(i, i)].re, 0.5, epsilon = 1e-14);
                assert_relative_eq!((u[(i, 0)] - y[(i, 0)] * 0.5).norm(), 0.0, epsilon = 1e-14);
            }
            assert!(s[(0, 1)].norm() < 1e-14);
        }
    }

    #[test]
    fn gamma_em_arithmetic() {
        let u = DMatrix::from_column_slice(2, 1, &[c(1.0, 1.0), c(0.0, 0.0)]);
        let g = gamma_update_em(&u, &[0.5, 0.0], 1);
        assert_eq!(g, vec![2.5, 0.0]);
    }

    #[test]
    fn gamma_regularized_values() {
        assert_eq!(gamma_update_regularized(&[0.0], &[0.0], 5, 1e-2), vec![0.0]);
        let g = gamma_update_regularized(&[1.0], &[0.0], 1, 1e-2)[0];
        assert_relative_eq!(g, (1.04f64.sqrt() - 1.0) / 0.02, max_relative = 1e-12);
        assert_relative_eq!(g, 0.990195135927848, max_relative = 1e-12);
        let small = gamma_update_regularized(&[3.0], &[0.2], 4, 1e-12)[0];
        assert_relative_eq!(small, 3.0 / 4.0 + 0.2, max_relative = 1e-9);
    }

    #[test]
    fn noise_update_limits() {
        let a = DMatrix::from_fn(4, 2, |i, j| c(1.0 + i as f64, j as f64));
        let u = DMatrix::from_fn(2, 3, |i, j| c(i as f64, 1.0 + j as f64));
        let y = &a * &u;
        // perfect fit and Sigma_pp = gamma_p: only the prior floor remains
        let s = noise_update(&y, &a, &u, &[2.0, 3.0], &[2.0, 3.0], 0.7, 1e-4, 1e-4);
        assert_relative_eq!(s, 1e-4 / (12.0 + 1e-4 - 1.0), max_relative = 1e-9);
        let zero_u = DMatrix::from_element(2, 3, c(0.0, 0.0));
        let s = noise_update(&y, &a, &zero_u, &[0.0, 0.0], &[0.0, 0.0], 0.7, 0.0, 0.0);
        assert_relative_eq!(s, frob_norm_sq(&y) / (4.0 * 3.0 - 1.0), max_relative = 1e-12);
    }

    #[test]
    fn zero_data_prunes_everything() {
        let a = DMatrix::from_fn(4, 6, |i, j| c((i * j) as f64, 1.0));
        let y = DMatrix::from_element(4, 3, c(0.0, 0.0));
        let st = run_ongrid(&a, &y, &SblConfig::default()).unwrap();
        assert!(st.support().is_empty());
        assert!(st.converged);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SblConfig::<f64>::default();
        assert!(cfg.validate().is_ok());
        cfg.prune_threshold = 1.0;
        assert!(cfg.validate().is_err());
        let cfg = SblConfig::<f64> { tol: 2.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
