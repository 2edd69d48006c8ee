//! Experiment driver: configuration parsing, sweeps over resolutions,
//! methods, precisions and seeds, and CSV emission.
//!
//! Output is deterministic: a fixed iteration order, a seeded generator and
//! a fixed float format mean identical configurations produce byte-identical
//! files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::galerkin::{
    build_matrix, data_coefficients, delta_sq, downsample_matrix, forward_quadrature, Assembly,
    Grid,
};
use crate::multiscale::{
    run_noise_free_with_plan, run_with_noise_with_plan, MultiscaleConfig, MultiscalePlan,
    NoiseMode, RegularizedSolution,
};
use crate::noise::gen_noise;
use crate::problem::{Kernel, Source};
use crate::regparam::{objective_value, Method, SearchConfig};
use crate::spectral::{numerical_rank, picard_table, SpectralSystem, TruncatedSvd};

/// Kernel selection in a configuration file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: String,
    pub d: Option<f64>,
}

impl KernelConfig {
    pub fn build(&self) -> Result<Kernel> {
        match self.family.to_ascii_lowercase().as_str() {
            "gravity" => {
                let d = self.d.ok_or_else(|| {
                    Error::invalid("kernel.family = \"gravity\" requires kernel.d")
                })?;
                Kernel::gravity(d)
            }
            other => Err(Error::invalid(format!(
                "unknown kernel family '{other}' (configuration supports 'gravity')"
            ))),
        }
    }
}

/// Source selection in a configuration file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub family: String,
    pub breakpoints: Option<Vec<f64>>,
    pub levels: Option<Vec<f64>>,
}

impl SourceConfig {
    pub fn build(&self) -> Result<Source> {
        match self.family.to_ascii_lowercase().replace('_', "-").as_str() {
            "smooth-sine" | "smoothsine" => Ok(Source::SmoothSine),
            "piecewise-constant" | "piecewiseconstant" => {
                match (&self.breakpoints, &self.levels) {
                    (Some(b), Some(l)) => Source::piecewise_constant(b.clone(), l.clone()),
                    (None, None) => Ok(Source::piecewise_default()),
                    _ => Err(Error::invalid(
                        "piecewise-constant source needs both breakpoints and levels (or neither)",
                    )),
                }
            }
            other => Err(Error::invalid(format!("unknown source family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Noise fraction of the data maximum; zero runs the clean pipeline.
    pub nu: f64,
    pub seeds: Vec<u64>,
}

/// Full experiment description, normally read from a TOML file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelConfig,
    pub source: SourceConfig,
    /// Fine resolution.
    #[serde(rename = "N")]
    pub n_fine: usize,
    /// Coarse resolutions; each must divide N.
    pub resolutions: Vec<usize>,
    pub methods: Vec<Method>,
    pub epsilon_list: Vec<f64>,
    pub noise: NoiseConfig,
    pub output_dir: PathBuf,
    #[serde(default = "default_assembly")]
    pub assembly: Assembly,
}

fn default_assembly() -> Assembly {
    Assembly::Midpoint
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("configuration parse: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Small built-in configuration used when no file is supplied.
    pub fn default_demo() -> Self {
        ExperimentConfig {
            kernel: KernelConfig {
                family: "gravity".into(),
                d: Some(0.25),
            },
            source: SourceConfig {
                family: "smooth-sine".into(),
                breakpoints: None,
                levels: None,
            },
            n_fine: 600,
            resolutions: vec![100, 200, 300],
            methods: Method::ALL.to_vec(),
            epsilon_list: vec![1e-3, 1e-5],
            noise: NoiseConfig {
                nu: 0.001,
                seeds: vec![1, 2, 3],
            },
            output_dir: PathBuf::from("tikreg-out"),
            assembly: Assembly::Midpoint,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fine < 2 {
            return Err(Error::invalid("N must be at least 2"));
        }
        if self.resolutions.is_empty() {
            return Err(Error::invalid("at least one coarse resolution is required"));
        }
        for &n in &self.resolutions {
            if n < 2 || self.n_fine % n != 0 {
                return Err(Error::invalid(format!(
                    "resolution {n} must divide N = {} and be at least 2",
                    self.n_fine
                )));
            }
        }
        if self.epsilon_list.is_empty() || self.epsilon_list.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::invalid("epsilon_list must be nonempty and positive"));
        }
        if !(self.noise.nu >= 0.0) {
            return Err(Error::invalid("noise.nu must be nonnegative"));
        }
        if self.noise.seeds.is_empty() {
            return Err(Error::invalid("noise.seeds must not be empty"));
        }
        self.kernel.build()?;
        self.source.build()?;
        Ok(())
    }
}

/// Which CSV artifacts a run emits.
#[derive(Clone, Copy, Debug, Default)]
pub struct ArtifactSet {
    pub delta: bool,
    pub spectrum: bool,
    pub functionals: bool,
    pub picard: bool,
    pub errors: bool,
    pub maxg: bool,
    pub solution: bool,
}

impl ArtifactSet {
    /// Everything the full sweep produces.
    pub fn sweep() -> Self {
        ArtifactSet {
            delta: true,
            spectrum: true,
            functionals: true,
            picard: true,
            errors: true,
            maxg: true,
            solution: false,
        }
    }

    pub fn only(name: &str) -> Result<Self> {
        let mut set = ArtifactSet::default();
        match name {
            "delta" => set.delta = true,
            "spectrum" => set.spectrum = true,
            "functionals" => set.functionals = true,
            "picard" => set.picard = true,
            "solution" => {
                set.solution = true;
                set.maxg = true;
            }
            other => return Err(Error::invalid(format!("unknown artifact '{other}'"))),
        }
        Ok(set)
    }
}

/// Floats are printed with 17 significant digits so readers round-trip f64.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

struct CsvBuffer {
    name: &'static str,
    text: String,
    rows: usize,
}

impl CsvBuffer {
    fn new(name: &'static str, header: &str) -> Self {
        CsvBuffer {
            name,
            text: format!("{header}\n"),
            rows: 0,
        }
    }

    fn row(&mut self, fields: &[String]) {
        let _ = writeln!(self.text, "{}", fields.join(","));
        self.rows += 1;
    }

    fn write_if_nonempty(self, dir: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
        if self.rows == 0 {
            return Ok(());
        }
        let path = dir.join(self.name);
        fs::write(&path, self.text)?;
        written.push(path);
        Ok(())
    }
}

/// Run the full sweep, emitting every artifact the configuration yields.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    run_artifacts(cfg, &ArtifactSet::sweep())
}

/// Run the experiment, emitting only the requested artifacts. Returns the
/// paths written; files whose sweep is vacuous (for instance errors.csv with
/// no methods configured) are not created.
pub fn run_artifacts(cfg: &ExperimentConfig, set: &ArtifactSet) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let kernel = cfg.kernel.build()?;
    let source = cfg.source.build()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let mut written = Vec::new();

    let grid_fine = Grid::uniform(cfg.n_fine)?;
    let f_fine = source.sample(&grid_fine)?;
    let g_clean = forward_quadrature(&kernel, &grid_fine, &grid_fine, &f_fine)?;
    let max_g = g_clean.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    if set.maxg {
        let mut csv = CsvBuffer::new("maxg.csv", "N,nu,max_g,zeta_e");
        csv.row(&[
            cfg.n_fine.to_string(),
            fmt_f64(cfg.noise.nu),
            fmt_f64(max_g),
            fmt_f64(cfg.noise.nu * max_g),
        ]);
        csv.write_if_nonempty(&cfg.output_dir, &mut written)?;
    }

    if set.delta {
        let mut csv = CsvBuffer::new("delta.csv", "n,assembly,delta_sq");
        for &n in &cfg.resolutions {
            let grid = Grid::uniform(n)?;
            for assembly in [Assembly::Midpoint, Assembly::Exact] {
                let a = build_matrix(&kernel, &grid, &grid, assembly)?;
                let d2 = delta_sq(&kernel, &a)?;
                csv.row(&[n.to_string(), assembly.to_string(), fmt_f64(d2)]);
            }
        }
        csv.write_if_nonempty(&cfg.output_dir, &mut written)?;
    }

    let needs_pipeline = set.spectrum || set.functionals || set.picard || set.errors || set.solution;
    if !needs_pipeline {
        return Ok(written);
    }

    // The pipeline quantities all derive from the fine operator and its
    // downsampled copies, factored once each.
    let a_fine = build_matrix(&kernel, &grid_fine, &grid_fine, cfg.assembly)?;
    // The fine factorization is the expensive piece; skip it unless a solve
    // is actually requested.
    let fine_svd = if set.errors || set.solution {
        Some(Arc::new(TruncatedSvd::compute(&a_fine, None)?))
    } else {
        None
    };

    let noisy_first = if cfg.noise.nu > 0.0 {
        Some(gen_noise(&g_clean, cfg.noise.nu, cfg.noise.seeds[0])?)
    } else {
        None
    };

    let mut spectrum_csv = CsvBuffer::new("spectrum.csv", "n,i,sigma,rank_annotation");
    let mut functionals_csv = CsvBuffer::new("functionals.csv", "n,method,epsilon,lambda,value");
    let mut picard_csv = CsvBuffer::new("picard.csv", "n,seed,i,sigma,abs_beta,ratio");
    let mut errors_csv = CsvBuffer::new(
        "errors.csv",
        "n,method,epsilon,seed,relative_error,lambda_tilde,max_abs_f,grid_hit_boundary",
    );
    let mut solution_csv = CsvBuffer::new("solution.csv", "k,t,f_reg,f_true");
    let mut solved_once = false;

    for &n in &cfg.resolutions {
        let ell = cfg.n_fine / n;
        let grid_coarse = Grid::uniform(n)?;
        let a_coarse = downsample_matrix(&a_fine, ell)?;
        let coarse_svd = Arc::new(TruncatedSvd::compute(&a_coarse, None)?);

        if set.spectrum {
            for (i, &s) in coarse_svd.sigma().iter().enumerate() {
                let mut marks = Vec::new();
                for &eps in &cfg.epsilon_list {
                    let p = numerical_rank(coarse_svd.sigma(), eps)?;
                    if p == i + 1 {
                        marks.push(format!("p(eps={eps:e})"));
                    }
                }
                csv_spectrum_row(&mut spectrum_csv, n, i + 1, s, &marks.join(";"));
            }
        }

        if set.picard {
            let (seed, g_data) = match &noisy_first {
                Some(noisy) => (cfg.noise.seeds[0], noisy.values.clone()),
                None => (cfg.noise.seeds[0], g_clean.clone()),
            };
            let g_sampled = sample_every(&g_data, ell);
            let b = data_coefficients(&g_sampled, grid_coarse.spacing())?;
            let sys = coarse_svd.project(&b)?;
            for row in picard_table(&sys) {
                picard_csv.row(&[
                    n.to_string(),
                    seed.to_string(),
                    row.index.to_string(),
                    fmt_f64(row.sigma),
                    fmt_f64(row.abs_beta),
                    fmt_f64(row.ratio),
                ]);
            }
        }

        if set.functionals && !cfg.methods.is_empty() {
            let (sys, zeta_sq) = coarse_system_for_estimation(
                &noisy_first,
                &g_clean,
                ell,
                &grid_coarse,
                &coarse_svd,
            )?;
            for &method in &cfg.methods {
                for &eps in &cfg.epsilon_list {
                    let p = numerical_rank(&sys.sigma, eps)?;
                    if p == 0 {
                        continue; // nothing retained at this precision
                    }
                    let search = SearchConfig::auto(&sys.sigma, p, zeta_sq)?;
                    for &lambda in &search.lambda_grid {
                        let value = objective_value(method, lambda, &sys, p, &search, n)?;
                        functionals_csv.row(&[
                            n.to_string(),
                            method.to_string(),
                            fmt_f64(eps),
                            fmt_f64(lambda),
                            fmt_f64(value),
                        ]);
                    }
                }
            }
        }

        let solution_done = !set.errors && solved_once;
        if (set.errors || set.solution) && !cfg.methods.is_empty() && !solution_done {
            let plan = MultiscalePlan::from_parts(
                grid_fine.clone(),
                grid_coarse.clone(),
                ell,
                fine_svd.clone().expect("fine factorization present for solve paths"),
                coarse_svd.clone(),
            )?;
            'cells: for &method in &cfg.methods {
                for &eps in &cfg.epsilon_list {
                    for &seed in &cfg.noise.seeds {
                        let (sol, err) =
                            run_cell(cfg, &plan, &g_clean, &f_fine, method, eps, seed, n)?;
                        if set.errors {
                            let boundary = sol
                                .estimate
                                .as_ref()
                                .map(|e| e.grid_hit_boundary)
                                .unwrap_or(false);
                            errors_csv.row(&[
                                n.to_string(),
                                method.to_string(),
                                fmt_f64(eps),
                                seed.to_string(),
                                fmt_f64(err),
                                fmt_f64(sol.lambda_tilde_used),
                                fmt_f64(sol.max_abs()),
                                boundary.to_string(),
                            ]);
                        }
                        if set.solution && !solved_once {
                            for (k, (&v, &t)) in sol
                                .values
                                .iter()
                                .zip(grid_fine.midpoints())
                                .enumerate()
                            {
                                solution_csv.row(&[
                                    (k + 1).to_string(),
                                    fmt_f64(t),
                                    fmt_f64(v),
                                    fmt_f64(f_fine[k]),
                                ]);
                            }
                            solved_once = true;
                            if !set.errors {
                                break 'cells;
                            }
                        }
                    }
                }
            }
        }
    }

    if set.spectrum {
        spectrum_csv.write_if_nonempty(&cfg.output_dir, &mut written)?;
    }
    if set.functionals {
        functionals_csv.write_if_nonempty(&cfg.output_dir, &mut written)?;
    }
    if set.picard {
        picard_csv.write_if_nonempty(&cfg.output_dir, &mut written)?;
    }
    if set.errors {
        errors_csv.write_if_nonempty(&cfg.output_dir, &mut written)?;
    }
    if set.solution {
        solution_csv.write_if_nonempty(&cfg.output_dir, &mut written)?;
    }
    Ok(written)
}

fn csv_spectrum_row(csv: &mut CsvBuffer, n: usize, i: usize, sigma: f64, annotation: &str) {
    csv.row(&[
        n.to_string(),
        i.to_string(),
        fmt_f64(sigma),
        annotation.to_string(),
    ]);
}

fn sample_every(values: &[f64], ell: usize) -> Vec<f64> {
    let n = values.len() / ell;
    (0..n)
        .map(|i| values[crate::galerkin::downsample_index(i, ell)])
        .collect()
}

/// The coarse spectral system and coefficient variance the estimator sees:
/// whitened with variance ds for noisy data, plain with variance 1 otherwise.
fn coarse_system_for_estimation(
    noisy: &Option<crate::noise::NoisySamples>,
    g_clean: &[f64],
    ell: usize,
    grid_coarse: &Grid,
    coarse_svd: &TruncatedSvd,
) -> Result<(SpectralSystem, f64)> {
    match noisy {
        Some(noisy) => {
            let g = sample_every(&noisy.values, ell);
            let b = data_coefficients(&g, grid_coarse.spacing())?;
            let sys = coarse_svd.project_whitened(&b, noisy.zeta_e)?;
            Ok((sys, grid_coarse.spacing()))
        }
        None => {
            let g = sample_every(g_clean, ell);
            let b = data_coefficients(&g, grid_coarse.spacing())?;
            let sys = coarse_svd.project(&b)?;
            Ok((sys, 1.0))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    cfg: &ExperimentConfig,
    plan: &MultiscalePlan,
    g_clean: &[f64],
    f_fine: &[f64],
    method: Method,
    eps: f64,
    seed: u64,
    n: usize,
) -> Result<(RegularizedSolution, f64)> {
    let run_cfg = |noise_mode| MultiscaleConfig {
        n_fine: cfg.n_fine,
        ell: cfg.n_fine / n,
        epsilon: eps,
        method,
        noise_mode,
        assembly: cfg.assembly,
        search: None,
    };
    let sol = if cfg.noise.nu > 0.0 {
        let noisy = gen_noise(g_clean, cfg.noise.nu, seed)?;
        run_with_noise_with_plan(
            plan,
            &run_cfg(NoiseMode::White {
                zeta_e: noisy.zeta_e,
            }),
            &noisy.values,
        )?
    } else {
        run_noise_free_with_plan(plan, &run_cfg(NoiseMode::NoiseFree), g_clean)?
    };
    let err = crate::multiscale::relative_error(&sol, f_fine)?;
    Ok((sol, err))
}
