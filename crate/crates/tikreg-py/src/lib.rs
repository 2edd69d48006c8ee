//! Python bindings: the main types and operations of the solver exposed as
//! the `tikreg_py` extension module. Vectors cross the boundary as plain
//! Python lists, which is plenty at the scales the bindings target.

use std::str::FromStr;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use tikreg::galerkin::{
    build_matrix, data_coefficients, delta_sq as delta_sq_impl, forward_quadrature, Assembly, Grid,
};
use tikreg::multiscale::{
    relative_error as relative_error_impl, run_noise_free_with_plan, run_with_noise_with_plan,
    MultiscaleConfig, MultiscalePlan, NoiseMode, RegularizedSolution,
};
use tikreg::noise::gen_noise as gen_noise_impl;
use tikreg::problem::{Kernel, Source};
use tikreg::regparam::{filter_factor as filter_factor_impl, scale_lambda as scale_lambda_impl, Method};
use tikreg::spectral::numerical_rank as numerical_rank_impl;

fn to_py(err: tikreg::Error) -> PyErr {
    match &err {
        tikreg::Error::InvalidInput(_) | tikreg::Error::Unsupported(_) => {
            PyValueError::new_err(err.to_string())
        }
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn parse_source(name: &str) -> PyResult<Source> {
    match name.to_ascii_lowercase().replace('_', "-").as_str() {
        "smooth-sine" | "smoothsine" => Ok(Source::SmoothSine),
        "piecewise-constant" | "piecewiseconstant" => Ok(Source::piecewise_default()),
        other => Err(PyValueError::new_err(format!(
            "unknown source '{other}' (expected 'smooth-sine' or 'piecewise-constant')"
        ))),
    }
}

/// Squared L2 norm of the gravity kernel at depth d.
#[pyfunction]
fn kernel_norm_sq(d: f64) -> PyResult<f64> {
    Kernel::gravity(d).map_err(to_py)?.norm_sq().map_err(to_py)
}

/// Gravity kernel value H(s, t) at depth d.
#[pyfunction]
fn kernel_eval(d: f64, s: f64, t: f64) -> PyResult<f64> {
    Kernel::gravity(d).map_err(to_py)?.eval(s, t).map_err(to_py)
}

/// The smooth reference source sin(pi t) + 0.5 sin(2 pi t).
#[pyfunction]
fn smooth_sine(t: f64) -> PyResult<f64> {
    Source::SmoothSine.eval(t).map_err(to_py)
}

/// Tikhonov filter factor sigma^2 / (lambda^2 + sigma^2).
#[pyfunction]
fn filter_factor(lam: f64, sigma: f64) -> PyResult<f64> {
    filter_factor_impl(lam, sigma).map_err(to_py)
}

/// Spacing-weighted parameter sqrt(ds) * lambda.
#[pyfunction]
fn scale_lambda(lam: f64, ds: f64) -> f64 {
    scale_lambda_impl(lam, ds)
}

/// Count of singular values above the precision.
#[pyfunction]
fn numerical_rank(sigma: Vec<f64>, epsilon: f64) -> PyResult<usize> {
    numerical_rank_impl(&sigma, epsilon).map_err(to_py)
}

/// Seeded white noise scaled to the data maximum; returns the noisy samples
/// and the per-sample noise level nu * max(g).
#[pyfunction]
fn gen_noise(g: Vec<f64>, nu: f64, seed: u64) -> PyResult<(Vec<f64>, f64)> {
    let out = gen_noise_impl(&g, nu, seed).map_err(to_py)?;
    Ok((out.values, out.zeta_e))
}

/// Relative l2 distance between two equal-length vectors.
#[pyfunction]
fn relative_error(values: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    let grid = Grid::uniform(values.len().max(1)).map_err(to_py)?;
    let sol = RegularizedSolution {
        values,
        lambda_tilde_used: 0.0,
        p_used: 0,
        grid,
        method: None,
        estimate: None,
    };
    relative_error_impl(&sol, &truth).map_err(to_py)
}

/// Squared-norm defect of the assembled gravity matrix at resolution n.
#[pyfunction]
fn gravity_delta_sq(d: f64, n: usize, assembly: &str) -> PyResult<f64> {
    let kernel = Kernel::gravity(d).map_err(to_py)?;
    let assembly = Assembly::from_str(assembly).map_err(to_py)?;
    let grid = Grid::uniform(n).map_err(to_py)?;
    let a = build_matrix(&kernel, &grid, &grid, assembly).map_err(to_py)?;
    delta_sq_impl(&kernel, &a).map_err(to_py)
}

/// One regularized solve, as seen from Python.
#[pyclass]
struct Solution {
    #[pyo3(get)]
    values: Vec<f64>,
    #[pyo3(get)]
    lambda_tilde: f64,
    #[pyo3(get)]
    p: usize,
    #[pyo3(get)]
    method: String,
    #[pyo3(get)]
    grid_hit_boundary: bool,
}

impl Solution {
    fn from_run(sol: RegularizedSolution) -> Self {
        Solution {
            lambda_tilde: sol.lambda_tilde_used,
            p: sol.p_used,
            method: sol.method.map(|m| m.to_string()).unwrap_or_default(),
            grid_hit_boundary: sol
                .estimate
                .as_ref()
                .map(|e| e.grid_hit_boundary)
                .unwrap_or(false),
            values: sol.values,
        }
    }
}

#[pymethods]
impl Solution {
    fn __repr__(&self) -> String {
        format!(
            "Solution(method='{}', p={}, lambda_tilde={:.6e}, n={})",
            self.method,
            self.p,
            self.lambda_tilde,
            self.values.len()
        )
    }
}

/// Coarse-to-fine gravity solver with the factorizations precomputed, so
/// repeated solves across seeds and methods are cheap.
#[pyclass]
struct MultiscaleSolver {
    kernel: Kernel,
    source: Source,
    plan: MultiscalePlan,
    assembly: Assembly,
}

#[pymethods]
impl MultiscaleSolver {
    #[new]
    #[pyo3(signature = (d, n_fine, ell, assembly="midpoint", source="smooth-sine"))]
    fn new(d: f64, n_fine: usize, ell: usize, assembly: &str, source: &str) -> PyResult<Self> {
        let kernel = Kernel::gravity(d).map_err(to_py)?;
        let assembly = Assembly::from_str(assembly).map_err(to_py)?;
        let plan = MultiscalePlan::build(&kernel, n_fine, ell, assembly).map_err(to_py)?;
        Ok(MultiscaleSolver {
            kernel,
            source: parse_source(source)?,
            plan,
            assembly,
        })
    }

    /// Fine-grid midpoints t_k.
    fn midpoints(&self) -> Vec<f64> {
        self.plan.grid_fine.midpoints().to_vec()
    }

    /// Source values at the fine midpoints.
    fn true_source(&self) -> PyResult<Vec<f64>> {
        self.source.sample(&self.plan.grid_fine).map_err(to_py)
    }

    /// Clean forward data g(s_k) by midpoint quadrature at the fine scale.
    fn clean_data(&self) -> PyResult<Vec<f64>> {
        let f = self.true_source()?;
        forward_quadrature(
            &self.kernel,
            &self.plan.grid_fine,
            &self.plan.grid_fine,
            &f,
        )
        .map_err(to_py)
    }

    /// Singular values of the downsampled coarse matrix.
    fn coarse_sigma(&self) -> Vec<f64> {
        self.plan.coarse_svd().sigma().to_vec()
    }

    /// Coarse numerical rank at the given precision.
    fn rank(&self, epsilon: f64) -> PyResult<usize> {
        numerical_rank_impl(self.plan.coarse_svd().sigma(), epsilon).map_err(to_py)
    }

    /// Coarse Picard triples (sigma_i, |beta_i|, |beta_i| / sigma_i) for the
    /// given fine data.
    fn picard(&self, g: Vec<f64>) -> PyResult<Vec<(f64, f64, f64)>> {
        let g_coarse = self.plan.sample_coarse(&g).map_err(to_py)?;
        let b = data_coefficients(&g_coarse, self.plan.grid_coarse.spacing()).map_err(to_py)?;
        let sys = self.plan.coarse_svd().project(&b).map_err(to_py)?;
        Ok(tikreg::spectral::picard_table(&sys)
            .into_iter()
            .map(|r| (r.sigma, r.abs_beta, r.ratio))
            .collect())
    }

    /// Clean-data pipeline: coarse estimate with unit coefficient variance,
    /// unscaled transfer, truncated fine solve.
    #[pyo3(signature = (g, method, epsilon))]
    fn solve_clean(&self, g: Vec<f64>, method: &str, epsilon: f64) -> PyResult<Solution> {
        let cfg = self.config(method, epsilon, NoiseMode::NoiseFree)?;
        let sol = run_noise_free_with_plan(&self.plan, &cfg, &g).map_err(to_py)?;
        Ok(Solution::from_run(sol))
    }

    /// Noisy-data pipeline: whiten by zeta_e, estimate the spacing-weighted
    /// parameter on the coarse system, transfer it, solve fine.
    #[pyo3(signature = (g_obs, zeta_e, method, epsilon))]
    fn solve_noisy(
        &self,
        g_obs: Vec<f64>,
        zeta_e: f64,
        method: &str,
        epsilon: f64,
    ) -> PyResult<Solution> {
        let cfg = self.config(method, epsilon, NoiseMode::White { zeta_e })?;
        let sol = run_with_noise_with_plan(&self.plan, &cfg, &g_obs).map_err(to_py)?;
        Ok(Solution::from_run(sol))
    }
}

impl MultiscaleSolver {
    fn config(&self, method: &str, epsilon: f64, noise_mode: NoiseMode) -> PyResult<MultiscaleConfig> {
        Ok(MultiscaleConfig {
            n_fine: self.plan.grid_fine.len(),
            ell: self.plan.ell,
            epsilon,
            method: Method::from_str(method).map_err(to_py)?,
            noise_mode,
            assembly: self.assembly,
            search: None,
        })
    }
}

#[pymodule]
fn tikreg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(kernel_norm_sq, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_eval, m)?)?;
    m.add_function(wrap_pyfunction!(smooth_sine, m)?)?;
    m.add_function(wrap_pyfunction!(filter_factor, m)?)?;
    m.add_function(wrap_pyfunction!(scale_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(numerical_rank, m)?)?;
    m.add_function(wrap_pyfunction!(gen_noise, m)?)?;
    m.add_function(wrap_pyfunction!(relative_error, m)?)?;
    m.add_function(wrap_pyfunction!(gravity_delta_sq, m)?)?;
    m.add_class::<MultiscaleSolver>()?;
    m.add_class::<Solution>()?;
    Ok(())
}
