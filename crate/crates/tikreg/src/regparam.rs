//! Truncated regularization functionals and the 1-D search that picks the
//! regularization parameter.
//!
//! All four criteria reduce to sums over the retained spectral components.
//! UPRE and GCV are minimized directly; the discrepancy criteria are solved
//! as absolute-difference minimizations against their targets, which avoids
//! a root-finding tolerance tied to the size of the target. The search is a
//! log-spaced grid sweep (global on the grid, ties to the smallest value)
//! followed by golden-section refinement inside the bracketing cell.

use std::fmt;
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::spectral::SpectralSystem;

/// Parameter-choice criterion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Discrepancy principle: squared residual matches tau * zeta^2 * p.
    Mdp,
    /// Augmented-system criterion: augmented functional matches zeta^2 * p.
    Adp,
    /// Unbiased predictive risk minimization.
    Upre,
    /// Generalized cross validation; needs no noise level.
    Gcv,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mdp, Method::Adp, Method::Upre, Method::Gcv];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Method::Mdp => "MDP",
            Method::Adp => "ADP",
            Method::Upre => "UPRE",
            Method::Gcv => "GCV",
        };
        write!(f, "{name}")
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mdp" => Ok(Method::Mdp),
            "adp" => Ok(Method::Adp),
            "upre" => Ok(Method::Upre),
            "gcv" => Ok(Method::Gcv),
            other => Err(Error::invalid(format!(
                "unknown method '{other}' (expected mdp, adp, upre or gcv)"
            ))),
        }
    }
}

/// Tikhonov filter factor q(lambda, sigma) = sigma^2 / (lambda^2 + sigma^2).
pub fn filter_factor(lambda: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!(
            "filter factor needs sigma > 0, got {sigma}"
        )));
    }
    if lambda < 0.0 {
        return Err(Error::invalid(format!(
            "filter factor needs lambda >= 0, got {lambda}"
        )));
    }
    Ok(sigma * sigma / (lambda * lambda + sigma * sigma))
}

/// Shared functional core: sum_{i<=p} z_i^2 (lambda^2 / (a_i^2 + lambda^2))^k.
pub fn eta(lambda: f64, p: usize, k: u32, a: &[f64], z: &[f64]) -> Result<f64> {
    if a.len() != z.len() {
        return Err(Error::invalid(format!(
            "eta got {} spectral values and {} coefficients",
            a.len(),
            z.len()
        )));
    }
    if p > a.len() {
        return Err(Error::invalid(format!(
            "eta truncation {p} exceeds {} available components",
            a.len()
        )));
    }
    if k != 1 && k != 2 {
        return Err(Error::invalid(format!("eta exponent must be 1 or 2, got {k}")));
    }
    let l2 = lambda * lambda;
    Ok(a[..p]
        .iter()
        .zip(&z[..p])
        .map(|(&ai, &zi)| {
            let r = l2 / (ai * ai + l2);
            let r = if k == 2 { r * r } else { r };
            zi * zi * r
        })
        .sum())
}

fn filter_sum(lambda: f64, sigma: &[f64], p: usize) -> f64 {
    let l2 = lambda * lambda;
    sigma[..p].iter().map(|&s| s * s / (s * s + l2)).sum()
}

/// Evaluate the truncated functional for `method` at `lambda`.
///
/// `n_data` is the length of the underlying data vector, which only the
/// cross-validation denominator uses. The GCV tail is recovered from the
/// data norm, so no components beyond `p` are needed.
pub fn functional_value(
    method: Method,
    lambda: f64,
    sys: &SpectralSystem,
    p: usize,
    cfg: &SearchConfig,
    n_data: usize,
) -> Result<f64> {
    if p > sys.k {
        return Err(Error::invalid(format!(
            "truncation {p} exceeds the {} retained components",
            sys.k
        )));
    }
    match method {
        Method::Mdp => eta(lambda, p, 2, &sys.sigma, &sys.beta),
        Method::Adp => eta(lambda, p, 1, &sys.sigma, &sys.beta),
        Method::Upre => Ok(eta(lambda, p, 2, &sys.sigma, &sys.beta)?
            + 2.0 * cfg.zeta_sq * filter_sum(lambda, &sys.sigma, p)),
        Method::Gcv => {
            if n_data < p {
                return Err(Error::invalid(format!(
                    "cross validation needs data length >= truncation, got {n_data} < {p}"
                )));
            }
            let residual = eta(lambda, p, 2, &sys.sigma, &sys.beta)? + sys.tail_energy(p);
            // Effective residual degrees of freedom (n_data - p) + sum(1 - q).
            let den = (n_data - p) as f64 + (p as f64 - filter_sum(lambda, &sys.sigma, p));
            if !(den > 0.0) {
                return Err(Error::numerical(
                    "cross-validation denominator vanished; cannot happen for lambda > 0",
                ));
            }
            Ok((n_data as f64 / den).powi(2) * residual)
        }
    }
}

/// The quantity the search minimizes: the functional itself for UPRE and
/// GCV, the absolute deviation from the target for MDP and ADP.
pub fn objective_value(
    method: Method,
    lambda: f64,
    sys: &SpectralSystem,
    p: usize,
    cfg: &SearchConfig,
    n_data: usize,
) -> Result<f64> {
    let value = functional_value(method, lambda, sys, p, cfg, n_data)?;
    Ok(match method {
        Method::Mdp => (value - cfg.zeta_sq * cfg.tau * p as f64).abs(),
        Method::Adp => (value - cfg.zeta_sq * p as f64).abs(),
        Method::Upre | Method::Gcv => value,
    })
}

/// Search configuration for the parameter estimate.
#[derive(Clone, Debug)]
pub struct SearchConfig {
    /// Ascending, strictly positive candidate values, usually log-spaced.
    pub lambda_grid: Vec<f64>,
    /// Golden-section iterations inside the winning grid cell.
    pub refine_iters: usize,
    /// Noise variance per expansion coefficient. Zero is accepted so the
    /// degenerate no-noise behavior stays observable through the boundary
    /// flag.
    pub zeta_sq: f64,
    /// Discrepancy target factor; the target is tau * zeta^2 * p.
    pub tau: f64,
}

/// Default grid width: two decades below sigma_p up to two decades above
/// sigma_1, 200 points.
pub const DEFAULT_GRID_POINTS: usize = 200;
pub const DEFAULT_REFINE_ITERS: usize = 48;

impl SearchConfig {
    pub fn new(lambda_grid: Vec<f64>, refine_iters: usize, zeta_sq: f64, tau: f64) -> Result<Self> {
        if lambda_grid.len() < 2 {
            return Err(Error::invalid("lambda grid needs at least two points"));
        }
        if lambda_grid.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::invalid("lambda grid values must be positive and finite"));
        }
        if lambda_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("lambda grid must be strictly ascending"));
        }
        if !(zeta_sq >= 0.0) || !zeta_sq.is_finite() {
            return Err(Error::invalid(format!(
                "noise variance must be nonnegative, got {zeta_sq}"
            )));
        }
        if !(tau > 0.0) {
            return Err(Error::invalid(format!("tau must be positive, got {tau}")));
        }
        Ok(SearchConfig {
            lambda_grid,
            refine_iters,
            zeta_sq,
            tau,
        })
    }

    /// Default log-spaced grid spanning [sigma_p * 1e-2, sigma_1 * 1e2].
    pub fn auto(sigma: &[f64], p: usize, zeta_sq: f64) -> Result<Self> {
        if p == 0 || p > sigma.len() {
            return Err(Error::invalid(format!(
                "cannot build a search grid for truncation {p} of {} values",
                sigma.len()
            )));
        }
        let lo = sigma[p - 1] * 1e-2;
        let hi = sigma[0] * 1e2;
        Self::new(log_grid(lo, hi, DEFAULT_GRID_POINTS)?, DEFAULT_REFINE_ITERS, zeta_sq, 1.0)
    }

    /// Same grid with a different noise variance.
    pub fn with_zeta_sq(&self, zeta_sq: f64) -> Self {
        SearchConfig {
            zeta_sq,
            ..self.clone()
        }
    }
}

/// Log-spaced grid of `count` points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0) || !(hi > lo) || count < 2 {
        return Err(Error::invalid(format!(
            "log grid needs 0 < lo < hi and count >= 2, got [{lo}, {hi}] x {count}"
        )));
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    let step = (lhi - llo) / (count - 1) as f64;
    Ok((0..count)
        .map(|i| (llo + step * i as f64).exp())
        .collect())
}

/// Result of a parameter search.
#[derive(Clone, Debug)]
pub struct LambdaEstimate {
    pub method: Method,
    /// The located minimizer of the method's objective.
    pub lambda: f64,
    /// sqrt(ds) * lambda, the spacing-weighted companion value.
    pub lambda_tilde: f64,
    /// Truncation level the functionals were evaluated at.
    pub p: usize,
    /// Objective value at the returned lambda (|functional - target| for the
    /// discrepancy criteria).
    pub functional_at_min: f64,
    /// Set when the grid argmin was the first or last point, which signals a
    /// degenerate minimum the refinement cannot rescue.
    pub grid_hit_boundary: bool,
}

/// Minimize the method's objective over the grid, then refine.
///
/// The grid argmin uses strict improvement so ties resolve to the smallest
/// lambda regardless of evaluation order. Refinement is golden-section
/// within [grid(j-1), grid(j+1)] and never returns a worse objective than
/// the grid winner.
pub fn estimate_lambda(
    method: Method,
    sys: &SpectralSystem,
    p: usize,
    cfg: &SearchConfig,
    n_data: usize,
    ds: f64,
) -> Result<LambdaEstimate> {
    if p == 0 {
        return Err(Error::invalid("estimation needs at least one component"));
    }
    if cfg.lambda_grid.is_empty() {
        return Err(Error::invalid("lambda grid is empty"));
    }
    if !(ds > 0.0) {
        return Err(Error::invalid(format!("spacing must be positive, got {ds}")));
    }

    let objective = |lambda: f64| objective_value(method, lambda, sys, p, cfg, n_data);

    let mut best_idx = 0usize;
    let mut best_val = objective(cfg.lambda_grid[0])?;
    for (i, &lam) in cfg.lambda_grid.iter().enumerate().skip(1) {
        let v = objective(lam)?;
        if v < best_val {
            best_val = v;
            best_idx = i;
        }
    }
    let boundary = best_idx == 0 || best_idx == cfg.lambda_grid.len() - 1;

    let lo = cfg.lambda_grid[best_idx.saturating_sub(1)];
    let hi = cfg.lambda_grid[(best_idx + 1).min(cfg.lambda_grid.len() - 1)];
    let (mut lambda, mut value) = (cfg.lambda_grid[best_idx], best_val);
    if cfg.refine_iters > 0 && hi > lo {
        let (refined, refined_val) = golden_section(&objective, lo, hi, cfg.refine_iters)?;
        if refined_val < value {
            lambda = refined;
            value = refined_val;
        }
    }

    Ok(LambdaEstimate {
        method,
        lambda,
        lambda_tilde: scale_lambda(lambda, ds),
        p,
        functional_at_min: value,
        grid_hit_boundary: boundary,
    })
}

/// Spacing-weighted regularization parameter, sqrt(ds) * lambda. Constant
/// across resolutions under equal grid spacing, which is what lets a coarse
/// estimate drive a fine solve.
pub fn scale_lambda(lambda: f64, ds: f64) -> f64 {
    ds.sqrt() * lambda
}

fn golden_section(
    objective: &impl Fn(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    iters: usize,
) -> Result<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = objective(c)?;
    let mut fd = objective(d)?;
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = objective(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = objective(d)?;
        }
    }
    let mid = 0.5 * (a + b);
    Ok((mid, objective(mid)?))
}
