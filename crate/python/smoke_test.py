#!/usr/bin/env python3
"""Smoke test for the tikreg_py extension module.

Build the module first:

    cargo build -p tikreg-py --release

then run this script from the repository root:

    python3 python/smoke_test.py
"""
import math
import os
import shutil
import sys
import tempfile


def locate_module():
    here = os.path.dirname(os.path.abspath(__file__))
    root = os.path.dirname(here)
    candidates = [
        os.path.join(root, "target", profile, name)
        for profile in ("release", "debug")
        for name in ("libtikreg_py.so", "tikreg_py.so", "libtikreg_py.dylib")
    ]
    for path in candidates:
        if os.path.exists(path):
            return path
    sys.exit(
        "tikreg_py not built; run `cargo build -p tikreg-py --release` first"
    )


def import_module():
    built = locate_module()
    stage = tempfile.mkdtemp(prefix="tikreg-py-")
    shutil.copy(built, os.path.join(stage, "tikreg_py.so"))
    sys.path.insert(0, stage)
    import tikreg_py

    return tikreg_py


def approx(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b} (tol {tol})"


def main():
    tk = import_module()

    # kernel basics
    approx(tk.kernel_norm_sq(0.25), 67.404, 1e-3)
    approx(tk.kernel_norm_sq(0.5), 7.443, 1e-3)
    approx(tk.kernel_eval(0.5, 0.3, 0.3), 4.0, 1e-12)
    approx(tk.smooth_sine(0.5), 1.0, 1e-12)

    # filter algebra
    approx(tk.filter_factor(1.0, 1.0), 0.5, 1e-15)
    approx(tk.filter_factor(0.0, 2.0), 1.0, 0.0)
    ds = 1.0 / 400.0
    lam = 3.7
    approx(
        tk.filter_factor(lam, 2.0 / math.sqrt(ds)),
        tk.filter_factor(tk.scale_lambda(lam, ds), 2.0),
        1e-15,
    )

    # rank helper
    assert tk.numerical_rank([1.0, 1e-2, 1e-9], 1e-5) == 2
    try:
        tk.numerical_rank([1.0, 2.0], 1e-5)
    except ValueError:
        pass
    else:
        raise AssertionError("unsorted input must raise ValueError")

    # assembly diagnostic: exact assembly undershoots the norm, midpoint overshoots
    assert tk.gravity_delta_sq(0.5, 120, "exact") > 0.0
    assert tk.gravity_delta_sq(0.5, 120, "midpoint") < 0.0

    # end-to-end multiscale solve on a small problem
    solver = tk.MultiscaleSolver(d=0.25, n_fine=300, ell=3)
    truth = solver.true_source()
    g = solver.clean_data()
    assert len(g) == 300

    noisy, zeta_e = tk.gen_noise(g, 0.001, seed=1)
    assert zeta_e > 0.0
    sol = solver.solve_noisy(noisy, zeta_e, method="upre", epsilon=1e-5)
    err = tk.relative_error(sol.values, truth)
    assert err < 0.05, f"noisy solve error {err}"
    assert sol.lambda_tilde > 0.0
    assert sol.p == solver.rank(1e-5 * zeta_e) or sol.p > 0

    clean_sol = solver.solve_clean(g, method="gcv", epsilon=1e-5)
    clean_err = tk.relative_error(clean_sol.values, truth)
    assert clean_err < 0.05, f"clean solve error {clean_err}"

    # Picard table exists and ratios are finite over the retained rank
    rows = solver.picard(g)
    p = solver.rank(1e-5)
    assert len(rows) >= p
    assert all(math.isfinite(r[2]) for r in rows[:p])

    print("smoke test passed:")
    print(f"  noisy UPRE solve:  rel err {err:.4f}, {sol!r}")
    print(f"  clean GCV solve:   rel err {clean_err:.4f}, {clean_sol!r}")


if __name__ == "__main__":
    main()
