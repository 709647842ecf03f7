import math

import numpy as np
import pytest
from scipy.optimize import brentq

from reference_dg import caputo_value_weights
from vofwave.errors import DiagnosticFailure, NumericalFailure
from vofwave.kernel import (
    PRESETS,
    PRINTED,
    TWO_MINUS_ALPHA,
    FractionalStep,
    VariableOrder,
    caputo_weights_table,
    check_monotone,
    check_step_size,
    compute_s,
    compute_weights,
    history_sum,
    history_sum_differences,
    linear_exactness_residual,
    raw_weights,
    select_branch_variant,
    sigma_residual,
    solve_sigma,
    startup_exactness_residual,
    weight_variation_report,
)
from vofwave.special import gamma

VARIABLE = [k for k in PRESETS if k != "constant"]


@pytest.mark.parametrize("x", [0.1, 0.5, 1.0, 1.5, 2.0, 3.7, 10.0, 29.5])
def test_gamma_matches_stdlib(x):
    assert gamma(x) == pytest.approx(math.gamma(x), rel=1e-13)


def test_gamma_special_values_and_domain():
    assert gamma(1.5) == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-14)
    np.testing.assert_allclose(gamma(np.array([1.0, 2.0, 5.0])), [1, 1, 24], rtol=1e-14)
    for bad in (0.0, -1.0, 31.0, np.nan):
        with pytest.raises(ValueError):
            gamma(bad)


def test_order_presets_values():
    assert VariableOrder("exp_decay")(0.0) == pytest.approx(0.9)
    assert VariableOrder("quadratic")(1.0) == pytest.approx(0.4)
    assert VariableOrder("sine")(0.0) == pytest.approx(0.5)
    assert VariableOrder("kink")(0.5) == pytest.approx(0.3)
    assert VariableOrder.parse("constant:0.4")(0.7) == 0.4


@pytest.mark.parametrize("kind", VARIABLE)
def test_derivative_matches_finite_difference(kind):
    order = VariableOrder(kind)
    t = np.array([0.1, 0.33, 0.8])
    d = 1e-6
    np.testing.assert_allclose(order.derivative(t), (order(t + d) - order(t - d)) / (2 * d), atol=1e-8)
    assert np.all(np.abs(order.derivative(np.linspace(0, 1, 101))) <= order.lipschitz + 1e-12)


def test_invalid_orders():
    with pytest.raises(ValueError):
        VariableOrder("cubic")
    with pytest.raises(ValueError):
        VariableOrder.parse("constant:1.2")
    with pytest.raises(ValueError):
        VariableOrder.parse("sine:3")
    # 0.9 - 0.5 t^2 reaches 0 at t = sqrt(1.8)
    with pytest.raises(ValueError):
        VariableOrder("quadratic", horizon=2.0)


def test_step_size_guard():
    with pytest.raises(ValueError):
        check_step_size(VariableOrder("exp_decay"), 3.0)
    with pytest.raises(ValueError):
        check_step_size(VariableOrder("exp_decay"), 0.0)
    check_step_size(VariableOrder("exp_decay"), 0.01)


@pytest.mark.parametrize("kind", VARIABLE)
@pytest.mark.parametrize("tau", [0.1, 0.01, 1e-3])
def test_sigma_matches_bracketing_oracle(kind, tau):
    order = VariableOrder(kind)
    for m in (1, 3, int(0.5 / tau), int(0.9 / tau)):
        s = solve_sigma(order, m, tau)
        ref = brentq(lambda z: z - 1 + order(m * tau + z * tau) / 2, 0.5, 1.0, xtol=1e-16, rtol=1e-15)
        assert 0.5 < s < 1.0
        assert abs(s - ref) < 1e-13
        assert abs(sigma_residual(order, m, tau, s)) <= 1e-15


def test_sigma_across_the_kink():
    order = VariableOrder("kink")
    tau = 0.1
    # t_m = 0.4 puts the kink inside [t_m, t_{m+1}]
    s = solve_sigma(order, 4, tau)
    assert abs(sigma_residual(order, 4, tau, s)) <= 1e-15


def test_constant_order_sigma_closed_form():
    assert solve_sigma(VariableOrder.parse("constant:0.4"), 7, 0.01) == pytest.approx(0.8, abs=1e-15)


def test_scaling_values():
    order = VariableOrder("sine")
    tau = 0.02
    a0 = order(tau / 2)
    assert compute_s(order, 0, tau) == pytest.approx(2 ** (1 - a0) * tau**a0 * math.gamma(2 - a0), rel=1e-13)
    sig = solve_sigma(order, 5, tau)
    a = order(5 * tau + sig * tau)
    assert compute_s(order, 5, tau) == pytest.approx(tau**a * math.gamma(2 - a), rel=1e-13)


def _naive_raw(m, s, a, denom):
    p2, p1 = 2 - a, 1 - a
    c = [((1 + s) ** p2 - s**p2) / p2 - ((1 + s) ** p1 - s**p1) / 2]
    for i in range(1, m):
        x = i + s
        c.append(((x + 1) ** p2 - 2 * x**p2 + (x - 1) ** p2) / p2 - ((x + 1) ** p1 - 2 * x**p1 + (x - 1) ** p1) / 2)
    x = m + s
    c.append((3 * x**p1 - (x - 1) ** p1) / 2 - (x**p2 - (x - 1) ** p2) / denom)
    return np.array(c)


@pytest.mark.parametrize("m", [1, 2, 5, 40])
def test_raw_weights_against_direct_formula(m):
    s, a = 0.78, 0.44
    np.testing.assert_allclose(raw_weights(m, s, a), _naive_raw(m, s, a, 2 - a), rtol=1e-11)
    np.testing.assert_allclose(raw_weights(m, s, a, PRINTED), _naive_raw(m, s, a, 2 * a), rtol=1e-11)


def test_raw_weights_guards():
    with pytest.raises(ValueError):
        raw_weights(0, 0.8, 0.4)
    with pytest.raises(ValueError):
        raw_weights(3, 0.8, 0.4, "other")


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.85])
@pytest.mark.parametrize("m", [1, 2, 6])
def test_weights_match_interpolant_quadrature(alpha, m):
    """Constant order: compare with Lagrange interpolants integrated against the kernel."""
    order = VariableOrder.parse(f"constant:{alpha}")
    tau = 0.05
    step = compute_weights(order, m, tau)
    a = step.weights
    g = np.zeros(m + 2)
    for i in range(m + 1):
        g[i + 1] += a[m - i]
        g[i] -= a[m - i]
    ref = caputo_value_weights(alpha, tau, m, step.t_star)
    np.testing.assert_allclose(g, ref, rtol=1e-9, atol=1e-9 * np.abs(ref).max())


@pytest.mark.parametrize("kind", PRESETS)
def test_weights_positive_decreasing_and_exact_for_linear(kind):
    order = VariableOrder(kind)
    for tau in (0.05, 0.01, 0.002):
        M = int(round(1 / tau))
        for m in sorted({1, 2, 3, M // 2, M - 1}):
            step = compute_weights(order, m, tau)
            c = step.c
            assert np.all(c > 0) and np.all(np.diff(c) < 0)
            assert c[m] > (1 - step.alpha_star) / (2 * (m + step.sigma) ** step.alpha_star)
            assert linear_exactness_residual(step) <= 1e-10
        assert startup_exactness_residual(order, tau) <= 1e-13


def test_check_monotone_reports_location():
    c = np.array([1.0, 0.5, 0.6, 0.1])
    step = FractionalStep(3, 0.1, 0.8, 0.38, 0.4, 1.0, c)
    with pytest.raises(DiagnosticFailure) as err:
        check_monotone(step)
    assert err.value.where == (3, 2)


def test_branch_selection_picks_two_minus_alpha():
    assert select_branch_variant(tau=0.02, levels=20) == TWO_MINUS_ALPHA


def test_printed_branch_breaks_linear_exactness():
    step = compute_weights(VariableOrder("exp_decay"), 10, 0.01, variant=PRINTED, check=False)
    assert linear_exactness_residual(step) > 1e-6


@pytest.mark.parametrize("kind", ["constant", "exp_decay", "sine"])
def test_cubic_caputo_accuracy_rate(kind):
    """Discrete derivative of t^3 against the exact value at the frozen order."""
    order = VariableOrder(kind) if kind != "constant" else VariableOrder.parse("constant:0.5")
    errs = []
    for M in (20, 40, 80, 160):
        tau = 1.0 / M
        m = M - 1
        step = compute_weights(order, m, tau)
        v = (np.arange(m + 2) * tau) ** 3
        approx = step.weights[::-1] @ np.diff(v)
        a = step.alpha_star
        exact = 6.0 / math.gamma(4 - a) * step.t_star ** (3 - a)
        errs.append(abs(approx - exact))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates >= 2.0), rates


def test_history_sum_forms_agree(rng):
    step = compute_weights(VariableOrder("quadratic"), 6, 0.01)
    vh = rng.standard_normal((7, 5))
    # every lag except the unknown a_0 term
    expected = np.zeros(5)
    for i in range(6):
        expected += step.weights[6 - i] * (vh[i + 1] - vh[i])
    got = history_sum(step, vh)
    np.testing.assert_allclose(got, expected, rtol=1e-13)
    np.testing.assert_allclose(history_sum_differences(step.weights, np.diff(vh, axis=0)), got, rtol=1e-13)
    with pytest.raises(ValueError):
        history_sum(step, vh[:5])


def test_history_sum_at_level_one(rng):
    step = compute_weights(VariableOrder("sine"), 1, 0.01)
    vh = rng.standard_normal((2, 3))
    np.testing.assert_allclose(history_sum(step, vh), step.weights[1] * (vh[1] - vh[0]), rtol=1e-14)


def test_weight_variation_report_is_bounded():
    rep = weight_variation_report(VariableOrder("exp_decay"), 0.01, 100)
    assert 0 < rep.ratio_max < 5
    assert rep.cumulative_over_tau < 5
    assert rep.bounded_diff_sum > 0 and rep.bounded_tail_sum > 0
    with pytest.raises(ValueError):
        weight_variation_report(VariableOrder("exp_decay"), 0.1, 2)


def test_weights_table_rows():
    rows = list(caputo_weights_table(VariableOrder("kink"), 0.1, 4))
    assert len(rows) == 2 + 3 + 4
    m, i, c, a, sig, s = rows[-1]
    assert (m, i) == (3, 3) and a == pytest.approx(c / s)


def test_sigma_failure_is_numerical():
    class Broken(VariableOrder):
        def __call__(self, t):
            return float("nan")

    order = object.__new__(Broken)
    object.__setattr__(order, "kind", "sine")
    object.__setattr__(order, "value", 0.5)
    object.__setattr__(order, "horizon", 1.0)
    with pytest.raises(NumericalFailure):
        solve_sigma(order, 3, 0.01)


def test_gamma_recurrence_value():
    assert gamma(4.5) == pytest.approx(3.5 * 2.5 * 1.5 * math.sqrt(math.pi) / 2, rel=1e-12)


def test_scaling_worked_examples():
    order = VariableOrder.parse("constant:0.5")
    assert compute_s(order, 0, 0.01) == pytest.approx(math.sqrt(2) * 0.1 * math.gamma(1.5), rel=1e-12)
    sine = VariableOrder("sine")
    sig = solve_sigma(sine, 3, 0.25)
    a = sine(0.75 + 0.25 * sig)
    assert compute_s(sine, 3, 0.25) == pytest.approx(0.25**a * math.gamma(2 - a), rel=1e-12)
