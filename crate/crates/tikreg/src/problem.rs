//! Kernels and source functions for the test problems.
//!
//! The gravity kernel family carries closed forms for its squared L2 norm
//! and for the Galerkin element integrals, which the diagnostics in
//! [`crate::galerkin`] rely on. Arbitrary kernels are supported through a
//! callable and are assembled by midpoint quadrature only.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::galerkin::Grid;

/// A square-integrable kernel H(s, t) on the fixed domain [0,1] x [0,1].
#[derive(Clone)]
pub enum Kernel {
    /// Gravity surveying kernel d / (d^2 + (s-t)^2)^(3/2) with depth d > 0.
    /// Larger depths make the inversion more ill-posed.
    Gravity { depth: f64 },
    /// Kernel supplied as a callable. No analytic norm or exact element
    /// integrals; only midpoint assembly applies.
    Tabulated(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Gravity { depth } => write!(f, "Kernel::Gravity {{ depth: {depth} }}"),
            Kernel::Tabulated(_) => write!(f, "Kernel::Tabulated(..)"),
        }
    }
}

impl Kernel {
    /// Gravity kernel at the given depth. Fails for non-positive or
    /// non-finite depths.
    pub fn gravity(depth: f64) -> Result<Self> {
        if !depth.is_finite() || depth <= 0.0 {
            return Err(Error::invalid(format!(
                "gravity kernel requires finite depth d > 0, got {depth}"
            )));
        }
        Ok(Kernel::Gravity { depth })
    }

    /// Wrap a callable as a kernel.
    pub fn tabulated(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Kernel::Tabulated(Arc::new(f))
    }

    /// Evaluate H(s, t). Both coordinates must lie in [0, 1].
    pub fn eval(&self, s: f64, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid(format!(
                "kernel evaluated outside [0,1]^2 at (s, t) = ({s}, {t})"
            )));
        }
        let v = self.eval_unchecked(s, t);
        if !v.is_finite() {
            return Err(Error::numerical(format!(
                "kernel value not finite at (s, t) = ({s}, {t})"
            )));
        }
        Ok(v)
    }

    /// Evaluation without the domain check, for assembly loops over
    /// already-validated grids.
    pub(crate) fn eval_unchecked(&self, s: f64, t: f64) -> f64 {
        match self {
            Kernel::Gravity { depth: d } => {
                let r2 = d * d + (s - t) * (s - t);
                d / (r2 * r2.sqrt())
            }
            Kernel::Tabulated(f) => f(s, t),
        }
    }

    /// Squared L2 norm of the kernel over [0,1]^2.
    ///
    /// Gravity admits the closed form (3 atan(1/d) + d/(d^2+1)) / (4 d^3);
    /// tabulated kernels are rejected and must be integrated externally.
    pub fn norm_sq(&self) -> Result<f64> {
        match self {
            Kernel::Gravity { depth: d } => {
                Ok((3.0 * (1.0 / d).atan() + d / (d * d + 1.0)) / (4.0 * d * d * d))
            }
            Kernel::Tabulated(_) => Err(Error::unsupported(
                "squared kernel norm has a closed form only for the gravity family",
            )),
        }
    }

    /// Whether an analytic squared norm is available.
    pub fn has_analytic_norm(&self) -> bool {
        matches!(self, Kernel::Gravity { .. })
    }

    /// Exact normalized Galerkin element integral
    /// a_ij = (ds dt)^(-1/2) * Int_{cell_i x cell_j} H(s, t) dt ds
    /// for the gravity kernel on matching uniform grids (ds = dt).
    ///
    /// Closed form with left cell edges s_i = i ds and t_j = j ds:
    /// a_ij = (1/dt) (sqrt((s_{i+1}-t_j)^2+d^2) + sqrt((s_i-t_{j+1})^2+d^2)
    ///         - 2 sqrt((s_i-t_j)^2+d^2)) / d.
    /// The two corner terms merge because s_{i+1}-t_{j+1} = s_i-t_j when
    /// ds = dt; there is no closed form here for ds != dt.
    pub fn element_integral_exact(
        &self,
        grid_s: &Grid,
        grid_t: &Grid,
        i: usize,
        j: usize,
    ) -> Result<f64> {
        let d = match self {
            Kernel::Gravity { depth } => *depth,
            Kernel::Tabulated(_) => {
                return Err(Error::unsupported(
                    "exact element integrals exist only for the gravity family",
                ))
            }
        };
        if grid_s.len() != grid_t.len() {
            return Err(Error::unsupported(format!(
                "exact element integral requires ds = dt, got grids of size {} and {}",
                grid_s.len(),
                grid_t.len()
            )));
        }
        if i >= grid_s.len() || j >= grid_t.len() {
            return Err(Error::invalid(format!(
                "element index ({i}, {j}) out of range for {} x {} cells",
                grid_s.len(),
                grid_t.len()
            )));
        }
        Ok(gravity_element(d, grid_s.spacing(), i, j))
    }
}

/// Closed-form gravity element on a uniform grid with spacing `ds`;
/// `i`, `j` index cells from zero so the left edges are i*ds and j*ds.
pub(crate) fn gravity_element(d: f64, ds: f64, i: usize, j: usize) -> f64 {
    let si = i as f64 * ds;
    let tj = j as f64 * ds;
    let sip = si + ds;
    let tjp = tj + ds;
    let term = |x: f64| (x * x + d * d).sqrt();
    (term(sip - tj) + term(si - tjp) - 2.0 * term(si - tj)) / (d * ds)
}

/// Source function f(t) on [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    /// sin(pi t) + 0.5 sin(2 pi t).
    SmoothSine,
    /// Piecewise-constant function. `levels[k]` applies on the interval
    /// (breakpoints[k-1], breakpoints[k]], taking the first and last levels
    /// out to the domain ends. At a breakpoint exactly, the level to the
    /// left applies (intervals are right-closed).
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        levels: Vec<f64>,
    },
}

impl Source {
    /// Validated piecewise-constant source: breakpoints strictly increasing
    /// inside (0, 1), with exactly one more level than breakpoints.
    pub fn piecewise_constant(breakpoints: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if levels.len() != breakpoints.len() + 1 {
            return Err(Error::invalid(format!(
                "piecewise-constant source needs len(levels) = len(breakpoints) + 1, got {} and {}",
                levels.len(),
                breakpoints.len()
            )));
        }
        for w in breakpoints.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::invalid(
                    "piecewise-constant breakpoints must be strictly increasing",
                ));
            }
        }
        if breakpoints.iter().any(|&b| !(0.0 < b && b < 1.0)) {
            return Err(Error::invalid(
                "piecewise-constant breakpoints must lie strictly inside (0, 1)",
            ));
        }
        if levels.iter().any(|l| !l.is_finite()) {
            return Err(Error::invalid("piecewise-constant levels must be finite"));
        }
        Ok(Source::PiecewiseConstant {
            breakpoints,
            levels,
        })
    }

    /// Default step profile: breaks at 1/3 and 2/3 with levels 0.5, 1.5, 0.75.
    pub fn piecewise_default() -> Self {
        Source::PiecewiseConstant {
            breakpoints: vec![1.0 / 3.0, 2.0 / 3.0],
            levels: vec![0.5, 1.5, 0.75],
        }
    }

    /// Evaluate f(t) for t in [0, 1].
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid(format!(
                "source evaluated outside [0,1] at t = {t}"
            )));
        }
        Ok(match self {
            Source::SmoothSine => {
                (std::f64::consts::PI * t).sin() + 0.5 * (2.0 * std::f64::consts::PI * t).sin()
            }
            Source::PiecewiseConstant {
                breakpoints,
                levels,
            } => {
                // first interval whose right-closed end reaches t
                let k = breakpoints.iter().position(|&b| t <= b);
                levels[k.unwrap_or(breakpoints.len())]
            }
        })
    }

    /// Sample the source at every midpoint of `grid`.
    pub fn sample(&self, grid: &Grid) -> Result<Vec<f64>> {
        grid.midpoints().iter().map(|&t| self.eval(t)).collect()
    }
}
