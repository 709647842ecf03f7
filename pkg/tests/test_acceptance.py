"""Acceptance criteria 1-7, each reported as one PASS/FAIL line.

Reference values carry three significant digits.
Run standalone with ``python tests/test_acceptance.py``; the lines are also
collected into the pytest terminal summary.
"""

import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from acceptance_log import report
from oracle_setup import compare_with_reference, max_rel_diff
from vofwave.errors import DiagnosticFailure
from vofwave.harness import make_config, run_sweep, run_weak_singularity
from vofwave.kernel import (
    PRESETS,
    VariableOrder,
    compute_s,
    compute_weights,
    linear_exactness_residual,
    sigma_residual,
    solve_sigma,
    startup_exactness_residual,
    weight_variation_report,
)
from vofwave.manufactured import get_solution
from vofwave.mesh import build_mesh
from vofwave.space import FieldVector, FluxParams, assemble_space, flux_dissipation, jump_penalty, project_initial
from vofwave.stepper import run

SMOOTH = ("exp_decay", "quadratic", "sine")

SPATIAL_1D_EU = {
    1: [3.38e-1, 8.96e-2, 2.27e-2, 5.70e-3],
    2: [4.46e-2, 6.39e-3, 8.27e-4, 1.04e-4],
}
SPATIAL_1D_ORDERS = {1: [1.92, 1.98, 1.99], 3: [3.81, 3.94]}
TEMPORAL_1D_EU = {
    "exp_decay": [5.02e-4, 1.27e-4, 3.18e-5, 7.99e-6],
    "quadratic": [3.66e-4, 9.24e-5, 2.33e-5, 5.86e-6],
    "sine": [5.00e-4, 1.27e-4, 3.23e-5, 8.13e-6],
}
SIMULTANEOUS_EV = [4.59e-3, 1.15e-3, 2.87e-4, 7.18e-5]
SINGULAR_EU_MAX = {
    "exp_decay": [4.48e-2, 3.11e-2, 2.15e-2, 1.49e-2],
    "sine": [3.33e-2, 2.34e-2, 1.65e-2, 1.17e-2],
}
SPATIAL_2D_ORDERS = [1.96, 1.98, 1.99]
TEMPORAL_2D_EU = [6.98e-3, 1.78e-3, 7.89e-4, 4.43e-4]

FLUX_SETS = [
    FluxParams(0.0, 0.0, 0.0),
    FluxParams(0.5, 0.0, 0.0),
    FluxParams(0.5, 1.0, 0.25),
    FluxParams(0.3, 0.5, 0.2),
    FluxParams(1.0, 2.0, 0.0),
]


class Checks:
    """Accumulates named checks so every criterion reports before asserting."""

    def __init__(self, criterion):
        self.criterion = criterion
        self.items = []

    def add(self, name, ok, info=""):
        self.items.append((name, bool(ok), info))
        return ok

    def within(self, name, got, expected, rel):
        dev = abs(got / expected - 1.0)
        return self.add(name, dev <= rel, f"{got:.4e} vs {expected:.2e} ({dev:.1%})")

    def between(self, name, got, lo, hi):
        return self.add(name, got is not None and lo <= got <= hi, f"{got:.3f} in [{lo}, {hi}]" if got is not None else "missing")

    def finish(self):
        failed = [f"{n}: {i}" for n, ok, i in self.items if not ok]
        detail = f"{len(self.items) - len(failed)}/{len(self.items)} checks"
        if failed:
            detail += "; failed " + "; ".join(failed)
        report(self.criterion, not failed, detail, self.items)
        assert not failed, "\n".join(failed)


# -- 1: spatial convergence, 1D ---------------------------------------------

@pytest.mark.slow
def test_criterion_1_spatial_convergence_1d():
    ck = Checks("1 (1D spatial convergence)")
    for q, q_v in ((1, 0), (2, 1)):
        rep = run_sweep("spatial", make_config({"q_u": q, "q_v": q_v, "M": 2000}), [10, 20, 40, 80])
        ck.add(f"q={q} temporal budget", rep.budget_ok)
        for N, row, ref in zip((10, 20, 40, 80), rep.rows, SPATIAL_1D_EU[q]):
            ck.within(f"q={q} N={N} E_u", row.E_u, ref, 0.05)
        if q in SPATIAL_1D_ORDERS:
            for k, ref in enumerate(SPATIAL_1D_ORDERS[q], 1):
                ck.between(f"q={q} order {k}", rep.orders["E_u"][k], ref - 0.1, ref + 0.1)
    rep = run_sweep("spatial", make_config({"q_u": 3, "q_v": 2, "M": 10000}), [10, 20, 40])
    ck.add("q=3 temporal budget", rep.budget_ok)
    for k, ref in enumerate(SPATIAL_1D_ORDERS[3], 1):
        ck.between(f"q=3 order {k}", rep.orders["E_u"][k], ref - 0.15, ref + 0.15)
    ck.finish()


# -- 2: temporal convergence, 1D --------------------------------------------

@pytest.mark.slow
def test_criterion_2_temporal_convergence_1d():
    ck = Checks("2 (1D temporal convergence)")
    for preset in SMOOTH:
        base = make_config({"q_u": 5, "q_v": 4, "N": 200, "order": preset})
        rep = run_sweep("temporal", base, [100, 200, 400, 800])
        for M, row, ref in zip((100, 200, 400, 800), rep.rows, TEMPORAL_1D_EU[preset]):
            ck.within(f"{preset} M={M} E_u", row.E_u, ref, 0.10)
        for k in range(1, 4):
            ck.between(f"{preset} order {k}", rep.orders["E_u"][k], 1.9, 2.05)
    ck.finish()


# -- 3: simultaneous refinement ---------------------------------------------

@pytest.mark.slow
def test_criterion_3_simultaneous_refinement():
    ck = Checks("3 (simultaneous refinement, (q_u, q_v) = (2, 1))")
    rep = run_sweep("simultaneous", make_config({"q_u": 2, "q_v": 1}), [100, 200, 400, 800])
    for N, row, ref in zip((100, 200, 400, 800), rep.rows, SIMULTANEOUS_EV):
        ck.within(f"N=M={N} E_v", row.E_v, ref, 0.10)
    for k in range(1, 4):
        ck.between(f"order {k}", rep.orders["E_v"][k], 1.95, 2.05)
    ck.finish()


# -- 4: weak initial singularity --------------------------------------------

@pytest.mark.slow
def test_criterion_4_weak_singularity():
    ck = Checks("4 (weak initial singularity)")
    for preset in ("exp_decay", "sine"):
        base = make_config({"solution": "singular1d", "q_u": 5, "q_v": 4, "N": 200, "order": preset})
        rep = run_weak_singularity(base, [100, 200, 400, 800])
        for M, row, ref in zip((100, 200, 400, 800), rep.rows, SINGULAR_EU_MAX[preset]):
            ck.within(f"{preset} M={M} Eu_max", row.Eu_max, ref, 0.10)
        for k in range(1, 4):
            ck.between(f"{preset} u order {k}", rep.orders["Eu_max"][k], 0.45, 0.58)
            ck.between(f"{preset} v order {k}", rep.orders["Ev_max"][k], 0.44, 0.52)
        for M, peaks in rep.peak_fraction.items():
            for key, frac in peaks.items():
                ck.add(f"{preset} M={M} {key} peak", frac <= 0.05, f"at {frac:.2%} of the steps")
    ck.finish()


# -- 5: 2D convergence -------------------------------------------------------

@pytest.mark.slow
def test_criterion_5_convergence_2d():
    ck = Checks("5 (2D convergence)")
    base = make_config({"dim": 2, "solution": "smooth2d", "order": "kink", "q_u": 1, "q_v": 0, "M": 200})
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rep = run_sweep("spatial", base, [10, 15, 20, 25])
    ck.add("q=1 temporal budget", rep.budget_ok)
    for k, ref in enumerate(SPATIAL_2D_ORDERS, 1):
        ck.between(f"q=1 order {k}", rep.orders["E_u"][k], ref - 0.1, ref + 0.1)

    base = make_config({"dim": 2, "solution": "smooth2d", "order": "kink", "q_u": 5, "q_v": 4, "N": 20})
    rep = run_sweep("temporal", base, [10, 20, 30, 40])
    for M, row, ref in zip((10, 20, 30, 40), rep.rows, TEMPORAL_2D_EU):
        ck.within(f"q=5 M={M} E_u", row.E_u, ref, 0.10)
    for k in range(1, 4):
        ck.between(f"q=5 order {k}", rep.orders["E_u"][k], 1.9, 2.1)
    ck.finish()


# -- 6: property suite -------------------------------------------------------

def test_criterion_6a_flux_dissipation_identity():
    ck = Checks("6a (flux dissipation identity)")
    rng = np.random.default_rng(6)
    for dim, n in ((1, 7), (2, 4)):
        for flux in FLUX_SETS:
            space = assemble_space(build_mesh(dim, (0.0, 1.0), n), 2, 1, flux)
            worst = 0.0
            for _ in range(50):
                u = FieldVector("u", rng.standard_normal(space.n_u))
                v = FieldVector("v", rng.standard_normal(space.n_v))
                scale = max(1.0, float(u.coeffs @ u.coeffs + v.coeffs @ v.coeffs))
                worst = max(worst, abs(flux_dissipation(space, u, v) + jump_penalty(space, u, v)) / scale)
            ck.add(f"{dim}D {flux}", worst <= 1e-12, f"{worst:.1e}")
    ck.finish()


def test_criterion_6b_weight_monotonicity():
    ck = Checks("6b (weight monotonicity and c_m lower bound)")
    tau = 2e-4
    for kind in PRESETS:
        order = VariableOrder(kind)
        bad = None
        for m in range(1, 5001):
            try:
                compute_weights(order, m, tau)
            except DiagnosticFailure as exc:
                bad = str(exc)
                break
        ck.add(kind, bad is None, bad or "m <= 5000")
    ck.finish()


def test_criterion_6c_linear_exactness():
    ck = Checks("6c (linear exactness)")
    tau = 1.0 / 250
    for kind in PRESETS:
        order = VariableOrder(kind)
        worst = max(linear_exactness_residual(compute_weights(order, m, tau)) for m in range(1, 201))
        worst = max(worst, startup_exactness_residual(order, tau))
        ck.add(kind, worst <= 1e-10, f"{worst:.1e}")
    ck.finish()


def _converges_under_halving(values):
    """Increments shrink geometrically, so the sequence has a finite limit."""
    d = np.diff(values)
    tail = d[-4:]
    if np.all(np.abs(tail) <= 1e-2 * abs(values[-1])):
        return True, values[-1]
    ratios = tail[1:] / tail[:-1]
    r = float(np.max(ratios))
    if not (np.all(tail > 0) and r < 0.9):
        return False, math.inf
    return True, values[-1] + tail[-1] * r / (1.0 - r)


def test_criterion_6d_cumulative_weight_variation():
    ck = Checks("6d (cumulative weight variation)")
    steps = [50, 100, 200, 400, 800, 1600]
    for kind in ("exp_decay", "sine", "kink"):
        reps = [weight_variation_report(VariableOrder(kind), 1.0 / M, M) for M in steps]
        for attr in ("ratio_max", "cumulative_over_tau"):
            vals = np.array([getattr(r, attr) for r in reps])
            ok, limit = _converges_under_halving(vals)
            ck.add(f"{kind} {attr}", ok, f"{vals[0]:.3f} -> {vals[-1]:.3f}, limit <= {limit:.3f}")
    ck.finish()


def _unforced_runs():
    """Every preset and flux set on small meshes with f = 0."""
    for kind in PRESETS:
        order = VariableOrder(kind)
        for dim, flux in ((1, FLUX_SETS[0]), (1, FLUX_SETS[2]), (1, FLUX_SETS[3]), (2, FLUX_SETS[4])):
            space = assemble_space(build_mesh(dim, (0.0, 1.0), 8 if dim == 1 else 3), 2, 1, flux)
            u0, v0 = project_initial(
                space,
                lambda x: np.sin(2 * np.pi * x[..., 0]) + 0.3 * np.cos(2 * np.pi * x[..., -1]),
                lambda x: np.cos(2 * np.pi * x[..., 0]) * np.sin(2 * np.pi * x[..., -1] + 0.4),
            )
            yield kind, dim, flux, space, order, u0, v0


def test_criterion_6e_intermediate_points():
    ck = Checks("6e (sigma_m in (1/2, 1), |F| <= 1e-15)")
    for kind in PRESETS:
        order = VariableOrder(kind)
        for M in (20, 200, 2000):
            tau = 1.0 / M
            sig = [solve_sigma(order, m, tau) for m in range(M)]
            res = max(abs(sigma_residual(order, m, tau, s)) for m, s in enumerate(sig))
            ck.add(f"{kind} M={M}", all(0.5 < s < 1.0 for s in sig) and res <= 1e-15, f"{res:.1e}")
    for kind, dim, flux, space, order, u0, v0 in _unforced_runs():
        r = run(space, order, get_solution("zero", dim), 100, initial=(u0, v0), record_errors=False)
        ok = r.max_sigma_residual <= 1e-15 and all(0.5 < lv.sigma < 1.0 for lv in r.levels)
        ck.add(f"run {kind} {dim}D {flux}", ok, f"{r.max_sigma_residual:.1e}")
    ck.finish()


def test_criterion_6f_energy_stability():
    ck = Checks("6f (startup inequality, coercivity, no blow-up)")
    M = 100
    tau = 1.0 / M
    for kind, dim, flux, space, order, u0, v0 in _unforced_runs():
        r = run(space, order, get_solution("zero", dim), M, initial=(u0, v0), record_errors=False)
        bound = space.grad_norm_sq(u0) + (1 + 2 * tau / compute_s(order, 0, tau)) * space.l2_norm_sq(v0)
        name = f"{kind} {dim}D {flux}"
        ck.add(name + " startup", r.startup_ok)
        ck.add(name + " coercive", r.coercive_ok)
        ck.add(name + " bounded", r.max_energy <= bound, f"{r.max_energy:.4e} <= {bound:.4e}")
    ck.finish()


def test_criterion_6g_linearity():
    ck = Checks("6g (zero data and superposition)")
    rng = np.random.default_rng(7)
    order = VariableOrder("kink")
    for dim in (1, 2):
        space = assemble_space(build_mesh(dim, (0.0, 1.0), 6 if dim == 1 else 3), 2, 1, FluxParams(0.5, 1.0, 0.25))
        zero = get_solution("zero", dim)
        z = run(space, order, zero, 40, initial=(space.zeros("u"), space.zeros("v")), record_errors=False)
        ck.add(f"{dim}D zero data", not np.any(z.u.coeffs) and not np.any(z.v.coeffs))

        def data():
            return FieldVector("u", rng.standard_normal(space.n_u)), FieldVector("v", rng.standard_normal(space.n_v))

        d1, d2 = data(), data()
        f1 = lambda x, t: np.sin(2 * np.pi * x[..., 0]) * (1 + t)  # noqa: E731
        f2 = lambda x, t: np.cos(2 * np.pi * x[..., -1]) * t**2  # noqa: E731
        r1 = run(space, order, zero, 40, initial=d1, source=f1, record_errors=False)
        r2 = run(space, order, zero, 40, initial=d2, source=f2, record_errors=False)
        r3 = run(space, order, zero, 40, initial=(d1[0] + d2[0], d1[1] + d2[1]),
                 source=lambda x, t: f1(x, t) + f2(x, t), record_errors=False)
        scale = max(1.0, np.abs(r3.u.coeffs).max(), np.abs(r3.v.coeffs).max())
        err = max(np.abs(r1.u.coeffs + r2.u.coeffs - r3.u.coeffs).max(),
                  np.abs(r1.v.coeffs + r2.v.coeffs - r3.v.coeffs).max()) / scale
        ck.add(f"{dim}D superposition", err <= 1e-11, f"{err:.1e}")
    ck.finish()


def _caputo_cubic_quad(alpha, t):
    # D^alpha t^3 = 1/Gamma(1-alpha) int_0^t 3 s^2 (t - s)^(-alpha) ds
    val, _ = quad(lambda s: 3.0, 0.0, t, weight="alg", wvar=(2.0, -alpha))
    return val / math.gamma(1.0 - alpha)


def test_criterion_6h_fractional_accuracy():
    ck = Checks("6h (fractional operator on t^3)")
    for kind in PRESETS:
        order = VariableOrder(kind)
        errs = []
        for M in (20, 40, 80, 160, 320):
            tau = 1.0 / M
            step = compute_weights(order, M - 1, tau)
            v = (np.arange(M + 1) * tau) ** 3
            approx = step.weights[::-1] @ np.diff(v)
            errs.append(abs(approx - _caputo_cubic_quad(step.alpha_star, step.t_star)))
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        ck.add(kind, bool(np.all(rates >= 2.0)), "rates " + ", ".join(f"{r:.2f}" for r in rates))
    ck.finish()


# -- 7: oracle equivalence ---------------------------------------------------

def test_criterion_7_oracle_equivalence():
    ck = Checks("7 (dense reference oracle)")
    cases = [
        ((2, 1), (0.0, 0.0, 0.0), 0.4),
        ((3, 2), (0.3, 0.5, 0.2), 0.7),
        ((1, 1), (0.5, 1.0, 0.25), 0.2),
    ]
    for (q_u, q_v), flux, alpha in cases:
        out = compare_with_reference(q_u, q_v, flux, alpha=alpha, steps=50)
        worst = max(max_rel_diff(out[k]) for k in ("eu", "ev", "u", "v"))
        ck.add(f"({q_u},{q_v}) flux={flux} alpha={alpha}", worst <= 1e-10, f"{worst:.1e}")
    ck.finish()


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v", *sys.argv[1:]]))
