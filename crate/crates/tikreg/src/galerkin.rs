//! Uniform-grid Galerkin discretization with the normalized box basis.
//!
//! The basis functions are indicator functions scaled to unit L2 norm, so
//! expansion coefficients relate to point values by a sqrt(spacing) factor:
//! b_i = g(s_i) sqrt(ds) and x_j = f(t_j) sqrt(dt). Matrix entries follow
//! either the midpoint rule or, for the gravity kernel, the exact cell
//! integral. Fine matrices downsample to coarse ones by sampling entries at
//! matching midpoints and rescaling, which avoids reassembly.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::problem::{gravity_element, Kernel};

/// Uniform midpoint discretization of [0, 1] into `n` cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    n: usize,
    ds: f64,
    midpoints: Vec<f64>,
}

impl Grid {
    /// Build the uniform grid with `n >= 1` cells; midpoints sit at
    /// (i + 1/2) / n.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("grid needs at least one cell"));
        }
        let ds = 1.0 / n as f64;
        let midpoints = (0..n).map(|i| (i as f64 + 0.5) * ds).collect();
        Ok(Grid { n, ds, midpoints })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell width, 1/n.
    pub fn spacing(&self) -> f64 {
        self.ds
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }
}

/// How matrix entries are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Assembly {
    /// a_ij = sqrt(ds dt) H(s_i, t_j); works for any kernel.
    Midpoint,
    /// Exact cell integrals; gravity kernel on matching grids only.
    Exact,
}

impl fmt::Display for Assembly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assembly::Midpoint => write!(f, "midpoint"),
            Assembly::Exact => write!(f, "exact"),
        }
    }
}

impl FromStr for Assembly {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "midpoint" => Ok(Assembly::Midpoint),
            "exact" => Ok(Assembly::Exact),
            other => Err(Error::invalid(format!(
                "unknown assembly '{other}' (expected 'midpoint' or 'exact')"
            ))),
        }
    }
}

/// Assemble the Galerkin matrix for the kernel on the given grids.
pub fn build_matrix(
    kernel: &Kernel,
    grid_s: &Grid,
    grid_t: &Grid,
    assembly: Assembly,
) -> Result<DMatrix<f64>> {
    let (ns, nt) = (grid_s.len(), grid_t.len());
    let a = match assembly {
        Assembly::Midpoint => {
            let scale = (grid_s.spacing() * grid_t.spacing()).sqrt();
            DMatrix::from_fn(ns, nt, |i, j| {
                scale * kernel.eval_unchecked(grid_s.midpoints[i], grid_t.midpoints[j])
            })
        }
        Assembly::Exact => {
            let d = match kernel {
                Kernel::Gravity { depth } => *depth,
                Kernel::Tabulated(_) => {
                    return Err(Error::unsupported(
                        "exact assembly requires the gravity kernel",
                    ))
                }
            };
            if ns != nt {
                return Err(Error::unsupported(
                    "exact assembly requires matching grids (ds = dt)",
                ));
            }
            let ds = grid_s.spacing();
            DMatrix::from_fn(ns, nt, |i, j| gravity_element(d, ds, i, j))
        }
    };
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("matrix assembly produced non-finite entries"));
    }
    Ok(a)
}

/// Coefficients of the data expansion: b_i = g(s_i) sqrt(ds).
pub fn data_coefficients(samples: &[f64], ds: f64) -> Result<DVector<f64>> {
    if !(ds > 0.0) {
        return Err(Error::invalid(format!("spacing must be positive, got {ds}")));
    }
    let w = ds.sqrt();
    Ok(DVector::from_iterator(
        samples.len(),
        samples.iter().map(|&g| g * w),
    ))
}

/// Midpoint quadrature of the forward map, g(s_i) = sum_j dt H(s_i, t_j) f(t_j).
/// This is how clean synthetic data are produced.
pub fn forward_quadrature(
    kernel: &Kernel,
    grid_s: &Grid,
    grid_t: &Grid,
    f_values: &[f64],
) -> Result<Vec<f64>> {
    if f_values.len() != grid_t.len() {
        return Err(Error::invalid(format!(
            "forward map got {} samples for a grid of {} cells",
            f_values.len(),
            grid_t.len()
        )));
    }
    let dt = grid_t.spacing();
    Ok(grid_s
        .midpoints()
        .iter()
        .map(|&s| {
            let acc: f64 = grid_t
                .midpoints()
                .iter()
                .zip(f_values)
                .map(|(&t, &f)| kernel.eval_unchecked(s, t) * f)
                .sum();
            acc * dt
        })
        .collect())
}

/// Index of the fine sample backing coarse cell `i` (zero-based) under
/// downsampling by `ell`. Midpoints coincide exactly for odd `ell`; for even
/// `ell` the fine midpoint immediately left of the coarse midpoint is taken,
/// an O(ds) convention documented on [`downsample_matrix`].
pub fn downsample_index(i: usize, ell: usize) -> usize {
    ell * i + (ell - 1) / 2
}

/// Downsample a fine matrix to n = N/ell by sampling entries whose midpoints
/// match the coarse midpoints and rescaling by sqrt(ds_n dt_n / ds_N dt_N),
/// which is `ell` for equal spacing in both variables.
///
/// For odd `ell` the coarse midpoints coincide with fine midpoints and the
/// sampled matrix equals direct coarse assembly. For even `ell` no fine
/// midpoint coincides; the nearest fine sample to the left is used and the
/// discrepancy against direct assembly is O(ds).
pub fn downsample_matrix(a_fine: &DMatrix<f64>, ell: usize) -> Result<DMatrix<f64>> {
    if ell == 0 {
        return Err(Error::invalid("downsampling factor must be positive"));
    }
    let big_n = a_fine.nrows();
    if a_fine.ncols() != big_n {
        return Err(Error::invalid("downsampling expects a square matrix"));
    }
    if big_n % ell != 0 {
        return Err(Error::invalid(format!(
            "fine size {big_n} is not divisible by downsampling factor {ell}"
        )));
    }
    if ell == 1 {
        return Ok(a_fine.clone());
    }
    let n = big_n / ell;
    let scale = ell as f64;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        scale * a_fine[(downsample_index(i, ell), downsample_index(j, ell))]
    }))
}

/// Squared Frobenius norm.
pub fn frobenius_norm_sq(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Approximation-quality diagnostic: squared kernel norm minus the squared
/// Frobenius norm of the assembled matrix. Nonnegative and decreasing in n
/// for exact assembly; reported signed because midpoint assembly routinely
/// drives it negative, which is itself diagnostic.
pub fn delta_sq(kernel: &Kernel, a: &DMatrix<f64>) -> Result<f64> {
    Ok(kernel.norm_sq()? - frobenius_norm_sq(a))
}

/// A discretized integral equation: matrix, data coefficients, grids.
#[derive(Clone, Debug)]
pub struct DiscreteSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub grid_s: Grid,
    pub grid_t: Grid,
    pub assembly: Assembly,
}

impl DiscreteSystem {
    /// Assemble the n x n system from data samples g(s_i).
    pub fn assemble(
        kernel: &Kernel,
        n: usize,
        assembly: Assembly,
        g_samples: &[f64],
    ) -> Result<Self> {
        let grid = Grid::uniform(n)?;
        if g_samples.len() != n {
            return Err(Error::invalid(format!(
                "expected {n} data samples, got {}",
                g_samples.len()
            )));
        }
        let a = build_matrix(kernel, &grid, &grid, assembly)?;
        let b = data_coefficients(g_samples, grid.spacing())?;
        Ok(DiscreteSystem {
            a,
            b,
            grid_s: grid.clone(),
            grid_t: grid,
            assembly,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_basics() {
        assert!(Grid::uniform(0).is_err());
        let g1 = Grid::uniform(1).unwrap();
        assert_eq!(g1.midpoints(), &[0.5]);
        assert_eq!(g1.spacing(), 1.0);

        let g4 = Grid::uniform(4).unwrap();
        assert_eq!(g4.midpoints(), &[0.125, 0.375, 0.625, 0.875]);

        let g = Grid::uniform(3000).unwrap();
        assert_relative_eq!(g.spacing(), 1.0 / 3000.0);
        assert_relative_eq!(g.midpoints()[0], 1.0 / 6000.0);
        assert!(g.midpoints().windows(2).all(|w| w[0] < w[1]));
        assert_relative_eq!(g.spacing() * g.len() as f64, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn midpoint_single_cell_entry() {
        let k = Kernel::gravity(0.5).unwrap();
        let g = Grid::uniform(1).unwrap();
        let a = build_matrix(&k, &g, &g, Assembly::Midpoint).unwrap();
        assert_relative_eq!(a[(0, 0)], 4.0, max_relative = 1e-15);
    }

    #[test]
    fn midpoint_entries_scale_with_spacing() {
        let k = Kernel::gravity(0.25).unwrap();
        let g1 = Grid::uniform(10).unwrap();
        let g2 = Grid::uniform(20).unwrap();
        let a1 = build_matrix(&k, &g1, &g1, Assembly::Midpoint).unwrap();
        let a2 = build_matrix(&k, &g2, &g2, Assembly::Midpoint).unwrap();
        // Physical midpoints of coarse cell 3 equal fine cell 7 under doubling
        // only approximately; compare against direct kernel values instead.
        let h1 = a1[(3, 5)] / (k.eval_unchecked(g1.midpoints()[3], g1.midpoints()[5]));
        let h2 = a2[(7, 11)] / (k.eval_unchecked(g2.midpoints()[7], g2.midpoints()[11]));
        assert_relative_eq!(h1, 2.0 * h2, max_relative = 1e-13);
    }

    #[test]
    fn exact_and_midpoint_converge_to_each_other() {
        let k = Kernel::gravity(0.5).unwrap();
        let mut prev = f64::INFINITY;
        for n in [50usize, 100, 200] {
            let g = Grid::uniform(n).unwrap();
            let am = build_matrix(&k, &g, &g, Assembly::Midpoint).unwrap();
            let ae = build_matrix(&k, &g, &g, Assembly::Exact).unwrap();
            let max_diff = (am - ae).abs().max();
            assert!(max_diff < prev, "entrywise gap must shrink with n");
            prev = max_diff;
        }
    }

    #[test]
    fn exact_assembly_rejects_tabulated() {
        let k = Kernel::tabulated(|s, t| s + t);
        let g = Grid::uniform(4).unwrap();
        assert!(matches!(
            build_matrix(&k, &g, &g, Assembly::Exact),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn data_coefficients_examples() {
        let b = data_coefficients(&[1.0; 5], 0.04).unwrap();
        for v in b.iter() {
            assert_relative_eq!(*v, 0.2, max_relative = 1e-15);
        }
        let z = data_coefficients(&[0.0; 5], 0.04).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        // linearity
        let g = [0.3, -1.2, 2.5];
        let b1 = data_coefficients(&g, 0.1).unwrap();
        let g3: Vec<f64> = g.iter().map(|v| 3.0 * v).collect();
        let b3 = data_coefficients(&g3, 0.1).unwrap();
        for i in 0..3 {
            assert_relative_eq!(3.0 * b1[i], b3[i], max_relative = 1e-15);
        }
        assert!(data_coefficients(&g, 0.0).is_err());
    }

    #[test]
    fn downsample_identity_and_scale() {
        let k = Kernel::gravity(0.25).unwrap();
        let g = Grid::uniform(12).unwrap();
        let a = build_matrix(&k, &g, &g, Assembly::Midpoint).unwrap();
        let same = downsample_matrix(&a, 1).unwrap();
        assert_eq!(a, same);

        // factor-of-3 scaling on the sampled entries
        let down = downsample_matrix(&a, 3).unwrap();
        assert_eq!(down.nrows(), 4);
        assert_relative_eq!(
            down[(1, 2)],
            3.0 * a[(downsample_index(1, 3), downsample_index(2, 3))],
            max_relative = 1e-15
        );

        assert!(downsample_matrix(&a, 5).is_err());
        assert!(downsample_matrix(&a, 0).is_err());
    }

    #[test]
    fn odd_downsampling_matches_direct_assembly() {
        let k = Kernel::gravity(0.25).unwrap();
        for ell in [3usize, 5] {
            let n = 30;
            let big = Grid::uniform(n * ell).unwrap();
            let small = Grid::uniform(n).unwrap();
            let a_fine = build_matrix(&k, &big, &big, Assembly::Midpoint).unwrap();
            let a_direct = build_matrix(&k, &small, &small, Assembly::Midpoint).unwrap();
            let a_down = downsample_matrix(&a_fine, ell).unwrap();
            let rel = (&a_down - &a_direct).abs().max() / a_direct.abs().max();
            assert!(rel < 1e-13, "ell={ell}: relative mismatch {rel}");
        }
    }

    #[test]
    fn delta_sq_signs_and_convergence() {
        let k = Kernel::gravity(0.5).unwrap();
        let mut prev = f64::INFINITY;
        for n in [100usize, 200] {
            let g = Grid::uniform(n).unwrap();
            let ae = build_matrix(&k, &g, &g, Assembly::Exact).unwrap();
            let de = delta_sq(&k, &ae).unwrap();
            assert!(de >= 0.0, "exact assembly delta^2 must be nonnegative");
            assert!(de < prev);
            prev = de;

            let am = build_matrix(&k, &g, &g, Assembly::Midpoint).unwrap();
            let dm = delta_sq(&k, &am).unwrap();
            assert!(dm < 0.0, "midpoint quadrature overshoots the norm here");
        }
    }

    #[test]
    fn delta_sq_of_zero_matrix_is_kernel_norm() {
        let k = Kernel::gravity(0.5).unwrap();
        let zero = DMatrix::zeros(8, 8);
        assert_relative_eq!(
            delta_sq(&k, &zero).unwrap(),
            k.norm_sq().unwrap(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn frobenius_norm_exact_assembly_is_monotone_and_bounded() {
        let k = Kernel::gravity(0.25).unwrap();
        let bound = k.norm_sq().unwrap();
        let mut prev = 0.0;
        for n in [50usize, 100, 200] {
            let g = Grid::uniform(n).unwrap();
            let a = build_matrix(&k, &g, &g, Assembly::Exact).unwrap();
            let f2 = frobenius_norm_sq(&a);
            assert!(f2 > prev && f2 < bound);
            prev = f2;
        }
    }

    #[test]
    fn discrete_system_assembly() {
        let k = Kernel::gravity(0.5).unwrap();
        let g = vec![1.0; 16];
        let sys = DiscreteSystem::assemble(&k, 16, Assembly::Exact, &g).unwrap();
        assert_eq!(sys.a.nrows(), 16);
        assert_eq!(sys.b.len(), 16);
        assert_eq!(sys.assembly, Assembly::Exact);
        assert!(sys.a.iter().all(|v| v.is_finite()));
        assert_relative_eq!(sys.b[0], 0.25, max_relative = 1e-15); // sqrt(1/16)

        assert!(DiscreteSystem::assemble(&k, 16, Assembly::Midpoint, &[1.0; 4]).is_err());
    }

    #[test]
    fn forward_consistency_improves_with_resolution() {
        // (A x)_i with x_j = f(t_j) sqrt(dt) approximates g(s_i) sqrt(ds)
        // where g is the continuous forward image; the midpoint-rule error
        // must shrink as the grid refines.
        let k = Kernel::gravity(0.5).unwrap();
        let f = crate::problem::Source::SmoothSine;
        let reference = {
            let fine = Grid::uniform(6400).unwrap();
            let fv = f.sample(&fine).unwrap();
            move |s_grid: &Grid| forward_quadrature(&k, s_grid, &fine, &fv).unwrap()
        };
        let mut errs = Vec::new();
        for n in [50usize, 200] {
            let g = Grid::uniform(n).unwrap();
            let k = Kernel::gravity(0.5).unwrap();
            let a = build_matrix(&k, &g, &g, Assembly::Midpoint).unwrap();
            let x = DVector::from_vec(
                f.sample(&g)
                    .unwrap()
                    .iter()
                    .map(|v| v * g.spacing().sqrt())
                    .collect(),
            );
            let ax = &a * &x;
            let g_ref = reference(&g);
            let err: f64 = ax
                .iter()
                .zip(&g_ref)
                .map(|(&lhs, &gr)| (lhs - gr * g.spacing().sqrt()).powi(2))
                .sum::<f64>()
                .sqrt()
                / g_ref.iter().map(|v| v * v).sum::<f64>().sqrt();
            errs.push(err);
        }
        assert!(
            errs[1] < errs[0],
            "forward error at n=200 ({}) should undercut n=50 ({})",
            errs[1],
            errs[0]
        );
    }
}
