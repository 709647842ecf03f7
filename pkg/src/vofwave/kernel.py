"""Variable-order Caputo machinery for the L2-1sigma time discretization.

At level m the order is frozen at ``alpha* = alpha(t_m + sigma_m tau)`` where
``sigma_m`` solves ``sigma = 1 - alpha(t_m + sigma tau) / 2``. The memory
weights are ``a_i = c_i / s_m`` and the discrete derivative at ``t_{m+sigma}``
is ``sum_i a_{m-i} (v^{i+1} - v^i)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DiagnosticFailure, NumericalFailure
from .special import gamma

log = logging.getLogger(__name__)

SIGMA_TOL = 1e-15
SIGMA_MAXITER = 100

# Denominator of the second bracket in the last (i = m) weight branch.
TWO_MINUS_ALPHA = "two_minus_alpha"
PRINTED = "printed"  # 2 * alpha denominator; fails linear exactness, kept for comparison
BRANCH_VARIANTS = (TWO_MINUS_ALPHA, PRINTED)

PRESETS = ("exp_decay", "quadratic", "sine", "kink", "constant")


@dataclass(frozen=True)
class VariableOrder:
    """Time-dependent fractional order alpha(t) on [0, horizon].

    ``kind`` is one of the presets; ``value`` is only used by ``constant``.
    """

    kind: str
    value: float = 0.5
    horizon: float = 1.0

    def __post_init__(self):
        if self.kind not in PRESETS:
            raise ValueError(f"unknown order preset {self.kind!r}; choose from {PRESETS}")
        if self.kind == "constant" and not 0.0 < self.value < 1.0:
            raise ValueError("a constant order must lie in (0, 1)")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        lo, hi = self.sampled_range()
        if not (0.0 < lo and hi < 1.0):
            raise ValueError(f"{self.label} leaves (0, 1) on [0, {self.horizon}]")

    @classmethod
    def parse(cls, text: str, horizon: float = 1.0) -> "VariableOrder":
        """``exp_decay``, ``sine``, ... or ``constant:0.4``."""
        name, _, arg = text.partition(":")
        if name == "constant":
            return cls("constant", float(arg) if arg else 0.5, horizon)
        if arg:
            raise ValueError(f"preset {name!r} takes no parameter")
        return cls(name, horizon=horizon)

    @property
    def label(self) -> str:
        return f"constant:{self.value:g}" if self.kind == "constant" else self.kind

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "exp_decay":
            out = 0.1 + 0.8 * np.exp(-t)
        elif self.kind == "quadratic":
            out = 0.9 - 0.5 * t * t
        elif self.kind == "sine":
            out = (2.0 + np.sin(t)) / 4.0
        elif self.kind == "kink":
            out = 0.3 + 0.4 * np.abs(t - 0.5)
        else:
            out = np.full_like(t, self.value)
        return float(out) if out.ndim == 0 else out

    def derivative(self, t):
        """alpha'(t); at the kink the right derivative is returned."""
        t = np.asarray(t, dtype=float)
        if self.kind == "exp_decay":
            out = -0.8 * np.exp(-t)
        elif self.kind == "quadratic":
            out = -t
        elif self.kind == "sine":
            out = np.cos(t) / 4.0
        elif self.kind == "kink":
            out = np.where(t >= 0.5, 0.4, -0.4)
        else:
            out = np.zeros_like(t)
        return float(out) if out.ndim == 0 else out

    @property
    def lipschitz(self) -> float:
        T = self.horizon
        return {
            "exp_decay": 0.8,
            "quadratic": T,
            "sine": 0.25,
            "kink": 0.4,
            "constant": 0.0,
        }[self.kind]

    def sampled_range(self, n: int = 10_001):
        t = np.linspace(0.0, self.horizon, n)
        a = np.atleast_1d(self(t))
        return float(a.min()), float(a.max())

    @property
    def alpha_max(self) -> float:
        return self.sampled_range()[1]

    @property
    def alpha_min(self) -> float:
        return self.sampled_range()[0]


def check_step_size(order: VariableOrder, tau: float, limit: float = 2.0):
    if tau <= 0:
        raise ValueError("time step must be positive")
    if order.lipschitz * tau >= limit:
        raise ValueError(
            f"L_alpha * tau = {order.lipschitz * tau:.3g} violates the step restriction "
            f"L_alpha * tau < {limit:g} needed for a unique intermediate point"
        )


def sigma_residual(order: VariableOrder, m: int, tau: float, sigma: float) -> float:
    return sigma - (1.0 - 0.5 * order(m * tau + sigma * tau))


def solve_sigma(order: VariableOrder, m: int, tau: float) -> float:
    """Root in (1/2, 1) of ``sigma - 1 + alpha(t_m + sigma tau) / 2``."""
    check_step_size(order, tau)
    if order.is_constant:
        return 1.0 - 0.5 * order.value
    F = lambda s: sigma_residual(order, m, tau, s)  # noqa: E731
    s = 0.75
    for _ in range(SIGMA_MAXITER):
        r = F(s)
        if abs(r) <= SIGMA_TOL:
            break
        dF = 1.0 + 0.5 * tau * order.derivative(m * tau + s * tau)
        s_new = s - r / dF
        if not 0.5 < s_new < 1.0 or s_new == s:
            s = _bisect_sigma(F)
            break
        s = s_new
    else:
        s = _bisect_sigma(F)
    if not abs(F(s)) <= SIGMA_TOL:
        # Newton can cycle across the kink; fall back to bracketing
        s = _bisect_sigma(F)
    # written so that a NaN residual also fails
    if not (0.5 < s < 1.0 and abs(F(s)) <= SIGMA_TOL):
        raise NumericalFailure(f"intermediate point did not converge at level {m} (|F| = {abs(F(s)):.2e})")
    return s


def _bisect_sigma(F) -> float:
    lo, hi = 0.5, 1.0
    flo = F(lo)
    best = 0.75
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = F(mid)
        if abs(fm) < abs(F(best)):
            best = mid
        if fm == 0.0 or mid in (lo, hi):
            break
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return best


def compute_s(order: VariableOrder, m: int, tau: float, sigma: float | None = None) -> float:
    """Scaling s_m; the startup level uses alpha at tau / 2 instead of sigma_0."""
    if m == 0:
        a = order(0.5 * tau)
        return 2.0 ** (1.0 - a) * tau**a * gamma(2.0 - a)
    if sigma is None:
        sigma = solve_sigma(order, m, tau)
    a = order(m * tau + sigma * tau)
    return tau**a * gamma(2.0 - a)


def _diff1(x, p):
    """x^p - (x-1)^p without cancellation for large x."""
    return -(x**p) * np.expm1(p * np.log1p(-1.0 / x))


def _diff2(x, p):
    """(x+1)^p - 2 x^p + (x-1)^p without cancellation for large x."""
    return x**p * (np.expm1(p * np.log1p(1.0 / x)) + np.expm1(p * np.log1p(-1.0 / x)))


def raw_weights(m: int, sigma: float, alpha: float, variant: str = TWO_MINUS_ALPHA) -> np.ndarray:
    """Unscaled coefficients c_0..c_m at frozen order ``alpha``."""
    if m < 1:
        raise ValueError("raw weights are defined for m >= 1")
    if variant not in BRANCH_VARIANTS:
        raise ValueError(f"unknown branch variant {variant!r}")
    p2, p1 = 2.0 - alpha, 1.0 - alpha
    c = np.empty(m + 1)
    s = sigma
    c[0] = ((1 + s) ** p2 - s**p2) / p2 - 0.5 * ((1 + s) ** p1 - s**p1)
    if m > 1:
        x = np.arange(1, m) + s
        c[1:m] = _diff2(x, p2) / p2 - 0.5 * _diff2(x, p1)
    x = m + s
    denom = p2 if variant == TWO_MINUS_ALPHA else 2.0 * alpha
    c[m] = 0.5 * (3.0 * x**p1 - (x - 1) ** p1) - _diff1(x, p2) / denom
    return c


@dataclass(frozen=True)
class FractionalStep:
    level: int
    tau: float
    sigma: float
    t_star: float
    alpha_star: float
    s: float
    c: np.ndarray = field(repr=False)
    variant: str = TWO_MINUS_ALPHA

    @property
    def weights(self) -> np.ndarray:
        return self.c / self.s

    @property
    def a0(self) -> float:
        return float(self.c[0] / self.s)


def check_monotone(step: FractionalStep):
    """Strict decrease of c_i in i and the lower bound on c_m."""
    c = step.c
    m, sig, a = step.level, step.sigma, step.alpha_star
    if np.any(c <= 0):
        i = int(np.argmax(c <= 0))
        raise DiagnosticFailure(f"nonpositive weight at (m={m}, i={i})", (m, i))
    bad = np.nonzero(np.diff(c) >= 0)[0]
    if bad.size:
        i = int(bad[0]) + 1
        raise DiagnosticFailure(f"weights not strictly decreasing at (m={m}, i={i})", (m, i))
    lower = (1.0 - a) / (2.0 * (m + sig) ** a)
    if not c[m] > lower:
        raise DiagnosticFailure(f"c_m = {c[m]:.6e} below its lower bound {lower:.6e} at m={m}", (m, m))


def compute_weights(
    order: VariableOrder,
    m: int,
    tau: float,
    variant: str = TWO_MINUS_ALPHA,
    check: bool = True,
    sigma: float | None = None,
) -> FractionalStep:
    if m < 1:
        raise ValueError("compute_weights needs m >= 1; the startup step uses 1/s_0")
    if sigma is None:
        sigma = solve_sigma(order, m, tau)
    t_star = m * tau + sigma * tau
    a = order(t_star)
    s = tau**a * gamma(2.0 - a)
    step = FractionalStep(m, tau, sigma, t_star, a, s, raw_weights(m, sigma, a, variant), variant)
    if check:
        check_monotone(step)
    return step


def history_sum(step: FractionalStep, velocity_history) -> np.ndarray:
    """Known part ``sum_{i<m} a_{m-i} (v^{i+1} - v^i)`` of the memory term.

    ``velocity_history`` holds v^0..v^m (rows); the unknown a_0 term is left
    to the stepper.
    """
    v = np.asarray(velocity_history, dtype=float)
    m = step.level
    if v.shape[0] != m + 1:
        raise ValueError(f"level {m} needs {m + 1} history entries, got {v.shape[0]}")
    return history_sum_differences(step.weights, np.diff(v, axis=0))


def history_sum_differences(weights: np.ndarray, dv: np.ndarray) -> np.ndarray:
    """Same as :func:`history_sum` with stored increments dv[i] = v^{i+1} - v^i."""
    m = len(weights) - 1
    if dv.shape[0] != m:
        raise ValueError(f"expected {m} increments, got {dv.shape[0]}")
    if m == 0:
        return np.zeros(dv.shape[1:])
    return weights[m:0:-1] @ dv


def linear_exactness_residual(step: FractionalStep) -> float:
    """Relative defect of tau * sum(a_i) against t_*^{1-a} / Gamma(2-a)."""
    exact = step.t_star ** (1.0 - step.alpha_star) / gamma(2.0 - step.alpha_star)
    return abs(step.tau * step.weights.sum() - exact) / exact


def startup_exactness_residual(order: VariableOrder, tau: float) -> float:
    """Same identity for the startup quotient (v^1 - v^0)/s_0 with v(t) = t."""
    a = order(0.5 * tau)
    exact = (0.5 * tau) ** (1.0 - a) / gamma(2.0 - a)
    return abs(tau / compute_s(order, 0, tau) - exact) / exact


def select_branch_variant(orders=None, tau: float = 0.01, levels: int = 50, tol: float = 1e-10) -> str:
    """Pick the i = m branch that passes both monotonicity and linear exactness."""
    if orders is None:
        orders = [VariableOrder(k) for k in PRESETS]
    passing = []
    for variant in BRANCH_VARIANTS:
        ok = True
        for order in orders:
            for m in range(1, levels + 1):
                try:
                    step = compute_weights(order, m, tau, variant=variant)
                except DiagnosticFailure:
                    ok = False
                    break
                if linear_exactness_residual(step) > tol:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            passing.append(variant)
    if len(passing) != 1:
        raise DiagnosticFailure(f"branch selection is ambiguous: passing variants {passing}")
    log.info("last-branch weight variant selected: %s", passing[0])
    return passing[0]


@dataclass
class WeightVariationReport:
    order: str
    tau: float
    M: int
    ratio_max: float
    cumulative_max: float
    bounded_diff_sum: float
    bounded_tail_sum: float

    @property
    def cumulative_over_tau(self) -> float:
        return self.cumulative_max / self.tau


def weight_variation_report(order: VariableOrder, tau: float, M: int, variant: str = TWO_MINUS_ALPHA) -> WeightVariationReport:
    """Level-to-level variation of the memory weights for 2 <= m <= M-1.

    ``ratio_max`` is the largest |a_i^(m) - a_i^(m-1)| measured against
    tau (1 + |log((i+1) tau)|) ((i+1) tau)^(-alpha_max) over the lags
    0 <= i <= m-2 that use the same branch at both levels.
    ``cumulative_max`` is the largest tau * sum_{m=k}^{n} (a_{m-k}^(m) - a_{m-k}^(m-1))_+.
    The two bounded sums are tau * sum_i (a_{i-1}^(i) - a_i^(i)) and
    tau * sum_i a_i^(i) for i = 1..M-1.
    """
    if M < 3:
        raise ValueError("weight variation needs M >= 3")
    amax = order.alpha_max
    prev = None
    ratio = 0.0
    cum = np.zeros(M + 1)
    diff_sum = tail_sum = 0.0
    for m in range(1, M):
        a = compute_weights(order, m, tau, variant=variant, check=False).weights
        diff_sum += tau * (a[m - 1] - a[m])
        tail_sum += tau * a[m]
        if prev is not None:
            d = a[: m - 1] - prev[: m - 1]
            i = np.arange(m - 1)
            r = (i + 1) * tau
            scale = tau * (1.0 + np.abs(np.log(r))) * r ** (-amax)
            ratio = max(ratio, float(np.max(np.abs(d) / scale)))
            # lag i at level m belongs to k = m - i
            np.add.at(cum, m - i, np.maximum(d, 0.0))
        prev = a
    return WeightVariationReport(order.label, tau, M, ratio, float(tau * cum.max()), diff_sum, tail_sum)


def caputo_weights_table(order: VariableOrder, tau: float, M: int, variant: str = TWO_MINUS_ALPHA):
    """Rows (m, i, c_i, a_i, sigma_m, s_m) for 1 <= m <= M-1."""
    for m in range(1, M):
        step = compute_weights(order, m, tau, variant=variant, check=False)
        for i, (ci, ai) in enumerate(zip(step.c, step.weights)):
            yield m, i, float(ci), float(ai), step.sigma, step.s

