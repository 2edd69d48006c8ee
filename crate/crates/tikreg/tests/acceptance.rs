//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `--nocapture` to see them as they execute). Heavy
//! factorizations are shared across criteria through lazy fixtures.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use tikreg::galerkin::{
    build_matrix, data_coefficients, delta_sq, forward_quadrature, Assembly, Grid,
};
use tikreg::multiscale::{
    relative_error, run_with_noise_with_plan, solve_truncated, MultiscaleConfig, MultiscalePlan,
    NoiseMode,
};
use tikreg::noise::gen_noise;
use tikreg::problem::{Kernel, Source};
use tikreg::regparam::{
    estimate_lambda, filter_factor, log_grid, objective_value, Method, SearchConfig,
};
use tikreg::spectral::{numerical_rank, TruncatedSvd};

fn report(criterion: u32, pass: bool, detail: &str) {
    println!(
        "criterion {criterion:>2}: {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

// ---------------------------------------------------------------------------
// shared fixtures

fn sigma_cache() -> &'static Mutex<HashMap<(u64, usize), Arc<Vec<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize), Arc<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Singular values of the exactly assembled gravity matrix, cached.
fn exact_sigma(d: f64, n: usize) -> Arc<Vec<f64>> {
    let key = (d.to_bits(), n);
    if let Some(hit) = sigma_cache().lock().unwrap().get(&key) {
        return hit.clone();
    }
    let kernel = Kernel::gravity(d).unwrap();
    let grid = Grid::uniform(n).unwrap();
    let a = build_matrix(&kernel, &grid, &grid, Assembly::Exact).unwrap();
    let sv = a.singular_values();
    let out: Arc<Vec<f64>> = Arc::new(sv.iter().copied().collect());
    sigma_cache()
        .lock()
        .unwrap()
        .insert(key, out.clone());
    out
}

fn svd_cache() -> &'static Mutex<HashMap<(u64, usize), Arc<TruncatedSvd>>> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize), Arc<TruncatedSvd>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Full factorization of the exactly assembled gravity matrix, cached.
fn exact_svd(d: f64, n: usize) -> Arc<TruncatedSvd> {
    let key = (d.to_bits(), n);
    if let Some(hit) = svd_cache().lock().unwrap().get(&key) {
        return hit.clone();
    }
    let kernel = Kernel::gravity(d).unwrap();
    let grid = Grid::uniform(n).unwrap();
    let a = build_matrix(&kernel, &grid, &grid, Assembly::Exact).unwrap();
    let svd = Arc::new(TruncatedSvd::compute(&a, None).unwrap());
    svd_cache().lock().unwrap().insert(key, svd.clone());
    svd
}

/// Fine-scale plan for the end-to-end runs: d = 0.25, N = 3000, n = 1000,
/// midpoint assembly as in the reference experiments.
fn fine_plan() -> &'static (MultiscalePlan, Vec<f64>, Vec<f64>) {
    static PLAN: OnceLock<(MultiscalePlan, Vec<f64>, Vec<f64>)> = OnceLock::new();
    PLAN.get_or_init(|| {
        let kernel = Kernel::gravity(0.25).unwrap();
        let plan = MultiscalePlan::build(&kernel, 3000, 3, Assembly::Midpoint).unwrap();
        let f_true = Source::SmoothSine.sample(&plan.grid_fine).unwrap();
        let g_clean =
            forward_quadrature(&kernel, &plan.grid_fine, &plan.grid_fine, &f_true).unwrap();
        (plan, f_true, g_clean)
    })
}

/// Adaptive Simpson quadrature, the independent oracle for continuous
/// forward images g(s) = int_0^1 H(s, t) f(t) dt.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(a, fa, m, fm, flm);
        let right = simpson(m, fm, b, fb, frm);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, fa, m, fm, flm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, frm, right, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, fa, b, fb, fm);
    recurse(f, a, fa, b, fb, fm, whole, tol, 40)
}

/// g(s) at each grid midpoint via adaptive quadrature (near machine
/// accuracy), independent of the discrete forward map.
fn continuous_forward(d: f64, grid: &Grid) -> Vec<f64> {
    let kernel = Kernel::gravity(d).unwrap();
    grid.midpoints()
        .iter()
        .map(|&s| {
            let kernel = &kernel;
            let integrand =
                move |t: f64| kernel.eval(s, t).unwrap() * Source::SmoothSine.eval(t).unwrap();
            adaptive_simpson(&integrand, 0.0, 1.0, 1e-13)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// criteria

#[test]
fn criterion_01_analytic_kernel_norm() {
    let cases = [(0.25, 67.404), (0.5, 7.443)];
    let mut detail = String::new();
    let mut ok = true;
    for (d, want) in cases {
        let got = Kernel::gravity(d).unwrap().norm_sq().unwrap();
        ok &= (got - want).abs() <= 1e-3;
        detail.push_str(&format!("|H|^2(d={d}) = {got:.6}; "));
    }
    report(1, ok, &detail);
}

#[test]
fn criterion_02_data_magnitude() {
    let grid = Grid::uniform(3000).unwrap();
    let mut detail = String::new();
    let mut ok = true;
    for (d, want) in [(0.25, 6.7542), (0.5, 2.1895)] {
        let kernel = Kernel::gravity(d).unwrap();
        let f = Source::SmoothSine.sample(&grid).unwrap();
        let g = forward_quadrature(&kernel, &grid, &grid, &f).unwrap();
        let max_g = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ok &= (max_g - want).abs() <= 1e-3;
        detail.push_str(&format!("max g(d={d}) = {max_g:.5} vs {want}; "));
    }
    report(2, ok, &detail);
}

#[test]
fn criterion_03_delta_sq_convergence() {
    let mut ok = true;
    let mut detail = String::new();
    for d in [0.25, 0.5] {
        let kernel = Kernel::gravity(d).unwrap();
        let mut prev = f64::INFINITY;
        let mut midpoint_negative = false;
        for n in [100usize, 200, 400, 800] {
            let grid = Grid::uniform(n).unwrap();
            let exact = build_matrix(&kernel, &grid, &grid, Assembly::Exact).unwrap();
            let de = delta_sq(&kernel, &exact).unwrap();
            ok &= de >= -1e-10 && de < prev;
            prev = de;
            let mid = build_matrix(&kernel, &grid, &grid, Assembly::Midpoint).unwrap();
            midpoint_negative |= delta_sq(&kernel, &mid).unwrap() < 0.0;
        }
        ok &= midpoint_negative;
        detail.push_str(&format!(
            "d={d}: exact delta2(800) = {prev:.3e}, midpoint went negative = {midpoint_negative}; "
        ));
    }
    report(3, ok, &detail);
}

#[test]
fn criterion_04_interlacing() {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for d in [0.25, 0.5] {
        for n in [50usize, 100, 200] {
            let coarse = exact_sigma(d, n);
            let fine = exact_sigma(d, 2 * n);
            for i in 0..n.min(coarse.len()) {
                let gap = coarse[i] - fine[i];
                worst = worst.max(gap);
                ok &= gap <= 1e-10;
            }
        }
    }
    report(
        4,
        ok,
        &format!("max sigma_i(n) - sigma_i(2n) over both depths = {worst:.3e}"),
    );
}

#[test]
fn criterion_05_rank_stabilization() {
    let mut ok = true;
    let mut detail = String::new();
    for eps in [1e-3, 1e-5] {
        let ranks: Vec<usize> = [500usize, 1000, 3000]
            .iter()
            .map(|&n| numerical_rank(&exact_sigma(0.25, n), eps).unwrap())
            .collect();
        ok &= ranks[0] == ranks[1] && ranks[1] == ranks[2];
        detail.push_str(&format!("eps={eps:e}: p = {ranks:?}; "));
    }
    report(5, ok, &detail);
}

#[test]
fn criterion_06_lambda_convergence() {
    // Noise-free estimation per the clean-data pipeline (unit coefficient
    // variance). With fixed coefficient variance the singular values and
    // projected data converge as the grid refines, so the selected lambda
    // converges; that unscaled parameter is the asserted quantity. Its
    // sqrt(ds)-weighted companion necessarily decays like sqrt(ds) once
    // lambda has converged and cannot stabilize here.
    let mut ok = true;
    let mut detail = String::new();
    for d in [0.25, 0.5] {
        for method in [Method::Upre, Method::Gcv] {
            let mut lambdas = Vec::new();
            let mut boundary = false;
            for n in [50usize, 100, 200, 500, 1000] {
                let svd = exact_svd(d, n);
                let grid = Grid::uniform(n).unwrap();
                let g = continuous_forward(d, &grid);
                let b = data_coefficients(&g, grid.spacing()).unwrap();
                let sys = svd.project(&b).unwrap();
                let p = numerical_rank(&sys.sigma, 1e-5).unwrap();
                let search = SearchConfig::auto(&sys.sigma, p, 1.0).unwrap();
                let est = estimate_lambda(method, &sys, p, &search, n, grid.spacing()).unwrap();
                boundary |= est.grid_hit_boundary;
                lambdas.push(est.lambda);
            }
            let changes: Vec<f64> = lambdas
                .windows(2)
                .map(|w| (w[1] - w[0]).abs() / w[0])
                .collect();
            let final_change = *changes.last().unwrap();
            ok &= final_change < 0.1;
            detail.push_str(&format!(
                "d={d} {method}: lambda {:?} final change {final_change:.2e} boundary={boundary}; ",
                lambdas
                    .iter()
                    .map(|l| format!("{l:.4e}"))
                    .collect::<Vec<_>>()
            ));
        }
    }
    report(6, ok, &detail);
}

#[test]
fn criterion_07_filter_scale_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let lambda = 10f64.powf(rng.random_range(-6.0..6.0));
        let sigma = 10f64.powf(rng.random_range(-6.0..6.0));
        let ds = 10f64.powf(rng.random_range(-6.0..0.0));
        let lhs = filter_factor(lambda, sigma / ds.sqrt()).unwrap();
        let rhs = filter_factor(ds.sqrt() * lambda, sigma).unwrap();
        worst = worst.max((lhs - rhs).abs() / lhs.max(rhs));
    }
    report(
        7,
        worst <= 1e-14,
        &format!("worst relative deviation over 1000 cases = {worst:.3e}"),
    );
}

#[test]
fn criterion_08_gcv_tail_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let n = rng.random_range(5..=50);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let b = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let sys = tikreg::spectral::decompose(&a, &b, None).unwrap();
        let p = rng.random_range(1..=sys.k);
        let direct: f64 = sys.beta[p..].iter().map(|v| v * v).sum();
        let via_norm = sys.tail_energy(p);
        worst = worst.max((direct - via_norm).abs() / sys.b_norm_sq);
    }
    report(
        8,
        worst <= 1e-12,
        &format!("worst |direct - via-norm| / |b|^2 = {worst:.3e}"),
    );
}

#[test]
fn criterion_09_round_trip_reconstruction() {
    // Forward map of the smooth source through the exact matrix, then the
    // unregularized truncated inverse; the reconstruction scaling decision
    // is pinned by requiring recovery of the midpoint values.
    let kernel = Kernel::gravity(0.5).unwrap();
    let n = 100;
    let grid = Grid::uniform(n).unwrap();
    let a = build_matrix(&kernel, &grid, &grid, Assembly::Exact).unwrap();
    let f_true = Source::SmoothSine.sample(&grid).unwrap();
    let sqrt_dt = grid.spacing().sqrt();
    let x = DVector::from_iterator(n, f_true.iter().map(|f| f * sqrt_dt));
    let b = &a * &x;
    let sys = tikreg::spectral::decompose(&a, &b, None).unwrap();
    let mut best = (0usize, f64::INFINITY);
    for p in 1..=sys.k {
        let sol = solve_truncated(&sys, 0.0, p, &grid).unwrap();
        let err = relative_error(&sol, &f_true).unwrap();
        if err < best.1 {
            best = (p, err);
        }
    }
    let full = relative_error(&solve_truncated(&sys, 0.0, sys.k, &grid).unwrap(), &f_true).unwrap();
    report(
        9,
        best.1 < 1e-6,
        &format!(
            "best error {:.3e} at p = {} (untruncated p = {}: {:.3e})",
            best.1, best.0, sys.k, full
        ),
    );
}

#[test]
fn criterion_10_end_to_end_statistical() {
    let (plan, f_true, g_clean) = fine_plan();
    let mut ok = true;
    let mut detail = String::new();

    let run = |method: Method, eps: f64, nu: f64, seed: u64| {
        let noisy = gen_noise(g_clean, nu, seed).unwrap();
        let cfg = MultiscaleConfig {
            n_fine: 3000,
            ell: 3,
            epsilon: eps,
            method,
            noise_mode: NoiseMode::White {
                zeta_e: noisy.zeta_e,
            },
            assembly: Assembly::Midpoint,
            search: None,
        };
        let sol = run_with_noise_with_plan(plan, &cfg, &noisy.values).unwrap();
        let err = relative_error(&sol, f_true).unwrap();
        (err, sol.max_abs())
    };
    let median = |mut v: Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        0.5 * (v[v.len() / 2] + v[(v.len() - 1) / 2])
    };

    // Low noise: median relative error of the minimization methods.
    for method in [Method::Upre, Method::Gcv] {
        let errs: Vec<f64> = (0..10).map(|s| run(method, 1e-5, 0.001, s).0).collect();
        let med = median(errs);
        ok &= med < 0.05;
        detail.push_str(&format!("nu=0.001 {method} median err {med:.4}; "));
    }
    // High noise: minimization methods bounded, discrepancy methods stable.
    for method in [Method::Upre, Method::Gcv] {
        let errs: Vec<f64> = (0..10).map(|s| run(method, 1e-3, 0.1, s).0).collect();
        let med = median(errs);
        ok &= med < 0.10;
        detail.push_str(&format!("nu=0.1 {method} median err {med:.4}; "));
    }
    for method in [Method::Adp, Method::Mdp] {
        let stable = (0..10)
            .map(|s| run(method, 1e-3, 0.1, s))
            .filter(|(err, max_abs)| err.is_finite() && *max_abs < 3.0)
            .count();
        ok &= stable >= 5;
        detail.push_str(&format!("nu=0.1 {method} stable {stable}/10; "));
    }
    report(10, ok, &detail);
}

#[test]
fn criterion_11_brute_force_lambda_oracle() {
    // Noisy whitened gravity system at n = 100; every method's refined
    // estimate must land within one grid cell of a dense-grid scan.
    let kernel = Kernel::gravity(0.25).unwrap();
    let n = 100;
    let grid = Grid::uniform(n).unwrap();
    let a = build_matrix(&kernel, &grid, &grid, Assembly::Midpoint).unwrap();
    let f = Source::SmoothSine.sample(&grid).unwrap();
    let g = forward_quadrature(&kernel, &grid, &grid, &f).unwrap();
    let noisy = gen_noise(&g, 0.1, 7).unwrap();
    let b = data_coefficients(&noisy.values, grid.spacing()).unwrap();
    let svd = TruncatedSvd::compute(&a, None).unwrap();
    let sys = svd.project_whitened(&b, noisy.zeta_e).unwrap();
    let p = numerical_rank(&sys.sigma, 1e-3).unwrap();
    let search = SearchConfig::auto(&sys.sigma, p, grid.spacing()).unwrap();

    let mut ok = true;
    let mut detail = String::new();
    for method in Method::ALL {
        let est = estimate_lambda(method, &sys, p, &search, n, grid.spacing()).unwrap();
        let dense = log_grid(
            search.lambda_grid[0],
            *search.lambda_grid.last().unwrap(),
            10_000,
        )
        .unwrap();
        let mut best = (f64::INFINITY, dense[0]);
        for &lam in &dense {
            let v = objective_value(method, lam, &sys, p, &search, n).unwrap();
            if v < best.0 {
                best = (v, lam);
            }
        }
        let cell = (search.lambda_grid[1] / search.lambda_grid[0]).ln();
        let dist = (est.lambda / best.1).ln().abs();
        ok &= dist <= cell + 1e-12;
        detail.push_str(&format!(
            "{method}: refined {:.4e} vs dense {:.4e} (log distance {dist:.2e}, cell {cell:.2e}); ",
            est.lambda, best.1
        ));
    }
    report(11, ok, &detail);
}
