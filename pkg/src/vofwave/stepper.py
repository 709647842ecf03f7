"""Fully discrete time stepping: a Crank-Nicolson-type startup step followed by
sigma-weighted two-level steps with the variable-order memory term.

The unknown of every step is w = [u; v]. With the operators of the DG space,

    T = diag(time_u, mass_v)           time-derivative rows
    S = -[[rhs_uu, rhs_uv], [rhs_vu, rhs_vv]]
    W = diag(0, mass_v)                fractional (a_0) term

a general step solves

    T dt(w) + S w^{m+sigma} + a_0 W (w^{m+1} - w^m) + [0; mass_v h] = [0; F]

where h is the known part of the memory sum and F the source load at t_{m+sigma}.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DiagnosticFailure, NumericalFailure
from .kernel import (
    TWO_MINUS_ALPHA,
    FractionalStep,
    VariableOrder,
    compute_s,
    compute_weights,
    history_sum_differences,
    sigma_residual,
    solve_sigma,
)
from .manufactured import SolutionBundle
from .space import DgSpace, FieldVector, error_norm, project_initial

log = logging.getLogger(__name__)

COERCIVITY_RTOL = 1e-12
# below this size a fresh factorization per step is cheaper than recycling
RECYCLE_MIN_SIZE = 10_000


class LinearSolver:
    """Per-step solver for A(c, sigma, a0) = c T + sigma S + a0 W.

    ``direct`` factorizes with SuperLU and caches factorizations keyed by the
    three multipliers, so constant-order runs factor once. With ``recycle``
    a step whose multipliers are not cached is solved by GMRES preconditioned
    with the most recent factorization; a fresh factorization is made only
    when that takes more than ``recycle_maxiter`` iterations. ``gmres`` uses
    restarted GMRES with an element-block Jacobi preconditioner.
    """

    def __init__(self, T, S, W, method: str = "direct", tol: float = 1e-12, maxiter: int = 500,
                 blocks: list | None = None, cache_size: int = 4, recycle: bool = False,
                 recycle_maxiter: int = 25):
        if method not in ("direct", "gmres"):
            raise ValueError(f"unknown solver method {method!r}")
        self.T, self.S, self.W = T.tocsc(), S.tocsc(), W.tocsc()
        self.method = method
        self.tol = tol
        self.maxiter = maxiter
        self.blocks = blocks
        self.cache_size = cache_size
        self.recycle = recycle
        self.recycle_maxiter = recycle_maxiter
        self._cache: dict = {}
        self._reference = None
        self.factorizations = 0
        self.solves = 0
        self.iterations = 0
        self.max_residual = 0.0

    def matrix(self, c, sigma, a0):
        return (c * self.T + sigma * self.S + a0 * self.W).tocsc()

    def _factor(self, key, A=None):
        lu = self._cache.get(key)
        if lu is None:
            A = self.matrix(*key) if A is None else A
            try:
                lu = (A, spla.splu(A, permc_spec="MMD_AT_PLUS_A"))
            except RuntimeError as exc:
                raise NumericalFailure(f"factorization failed: {exc}") from exc
            self.factorizations += 1
            if len(self._cache) >= self.cache_size:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = lu
        self._reference = lu[1]
        return lu

    def _gmres(self, A, rhs, M, maxiter, restart):
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = spla.gmres(A, rhs, rtol=self.tol, atol=0.0, restart=restart, maxiter=maxiter,
                             M=M, callback=cb, callback_type="pr_norm")
        self.iterations += count[0]
        return x, info, count[0]

    def _block_jacobi(self, A):
        inv = []
        for idx in self.blocks:
            inv.append((idx, np.linalg.inv(A[idx][:, idx].toarray())))

        def apply(x):
            y = np.empty_like(x)
            for idx, B in inv:
                y[idx] = B @ x[idx]
            return y

        return spla.LinearOperator(A.shape, matvec=apply)

    def _relative_residual(self, A, x, rhs):
        nb = np.linalg.norm(rhs)
        return float(np.linalg.norm(A @ x - rhs) / nb) if nb > 0 else 0.0

    def solve(self, c, sigma, a0, rhs):
        self.solves += 1
        key = (float(c), float(sigma), float(a0))
        if self.method == "direct":
            if key in self._cache or not (self.recycle and self._reference is not None):
                A, lu = self._factor(key)
                x = lu.solve(rhs)
            else:
                A = self.matrix(*key)
                ref = self._reference
                M = spla.LinearOperator(A.shape, matvec=ref.solve)
                x, info, its = self._gmres(A, rhs, M, maxiter=4, restart=self.recycle_maxiter)
                if info != 0 or its > self.recycle_maxiter or self._relative_residual(A, x, rhs) > 10 * self.tol:
                    A, lu = self._factor(key, A)
                    x = lu.solve(rhs)
        else:
            A = self.matrix(*key)
            M = self._block_jacobi(A) if self.blocks else None
            x, info, _ = self._gmres(A, rhs, M, maxiter=self.maxiter, restart=60)
            if info != 0:
                res = self._relative_residual(A, x, rhs)
                raise NumericalFailure(f"GMRES did not converge (info={info}, relative residual {res:.3e})")
        res = self._relative_residual(A, x, rhs)
        self.max_residual = max(self.max_residual, res)
        if not np.isfinite(res) or res > 1e-8:
            raise NumericalFailure(f"linear solve residual {res:.3e} too large")
        return x


def element_blocks(space: DgSpace) -> list:
    """Index sets coupling the u- and v-modes of each element."""
    out = []
    for e in range(space.nel):
        iu = np.arange(e * space.nb_u, (e + 1) * space.nb_u)
        iv = space.n_u + np.arange(e * space.nb_v, (e + 1) * space.nb_v)
        out.append(np.concatenate([iu, iv]))
    return out


@dataclass
class System:
    """Block operators of the coupled [u; v] system for one space."""

    space: DgSpace
    T: sp.csr_matrix
    S: sp.csr_matrix
    W: sp.csr_matrix

    @classmethod
    def build(cls, space: DgSpace) -> "System":
        o = space.ops
        zu = sp.csr_matrix((space.n_u, space.n_u))
        T = sp.block_diag([o["time_u"], o["mass_v"]], format="csr")
        S = -sp.bmat([[o["rhs_uu"], o["rhs_uv"]], [o["rhs_vu"], o["rhs_vv"]]], format="csr")
        W = sp.block_diag([zu, o["mass_v"]], format="csr")
        return cls(space, T, S, W)

    def pack(self, u: FieldVector, v: FieldVector) -> np.ndarray:
        return np.concatenate([u.coeffs, v.coeffs])

    def unpack(self, w: np.ndarray):
        n = self.space.n_u
        return FieldVector("u", w[:n].copy()), FieldVector("v", w[n:].copy())

    def v_rows(self, load: np.ndarray) -> np.ndarray:
        out = np.zeros(self.space.n_u + self.space.n_v)
        out[self.space.n_u:] = load
        return out


@dataclass
class State:
    """Discrete solution at level m with what the next step needs.

    ``dv`` is preallocated for all levels; rows 0..m-1 hold v^{i+1} - v^i.
    """

    level: int
    t: float
    u: FieldVector
    v: FieldVector
    u_prev: FieldVector | None
    v_prev: FieldVector | None
    v0: FieldVector
    dv: np.ndarray
    v_norm_sq: list = field(default_factory=list)
    grad_norm_sq: list = field(default_factory=list)
    sigmas: list = field(default_factory=list)

    @property
    def history(self) -> np.ndarray:
        return self.dv[: self.level]

    def reconstruct_v(self) -> np.ndarray:
        return self.v0.coeffs + self.history.sum(axis=0)


def initial_state(space: DgSpace, u0: FieldVector, v0: FieldVector, M: int) -> State:
    st = State(0, 0.0, u0, v0, None, None, v0, np.zeros((M, space.n_v)))
    st.v_norm_sq.append(space.l2_norm_sq(v0))
    st.grad_norm_sq.append(space.grad_norm_sq(u0))
    return st


def _advance(state: State, space: DgSpace, w_new, system: System, tau: float, sigma: float) -> State:
    u, v = system.unpack(w_new)
    state.dv[state.level] = v.coeffs - state.v.coeffs
    state.u_prev, state.v_prev = state.u, state.v
    state.u, state.v = u, v
    state.level += 1
    state.t = state.level * tau
    state.sigmas.append(sigma)
    state.v_norm_sq.append(space.l2_norm_sq(v))
    state.grad_norm_sq.append(space.grad_norm_sq(u))
    return state


def startup_step(system: System, solver: LinearSolver, state: State, load, order: VariableOrder, tau: float) -> State:
    """Level 0 -> 1 with midpoint averages and the 1/s_0 fractional quotient.

    ``load(t)`` returns the source tested against the v-basis.
    """
    if state.level != 0:
        raise ValueError("startup_step needs a state at level 0")
    s0 = compute_s(order, 0, tau)
    w0 = system.pack(state.u, state.v)
    rhs = system.T @ w0 / tau - 0.5 * (system.S @ w0) + (system.W @ w0) / s0
    F = load(0.5 * tau)
    if F is not None:
        rhs = rhs + system.v_rows(F)
    w1 = solver.solve(1.0 / tau, 0.5, 1.0 / s0, rhs)
    return _advance(state, system.space, w1, system, tau, 0.5)


def general_step(system: System, solver: LinearSolver, state: State, load, step: FractionalStep) -> State:
    """Level m -> m+1 for m >= 1 with the L2-1sigma memory term."""
    m = state.level
    if m < 1 or state.u_prev is None:
        raise ValueError("general_step needs a state at level m >= 1")
    if step is None or step.level != m:
        raise ValueError(f"general_step at level {m} needs fractional weights for that level")
    tau, sig = step.tau, step.sigma
    weights = step.weights
    a0 = float(weights[0])
    wm = system.pack(state.u, state.v)
    wp = system.pack(state.u_prev, state.v_prev)
    hist = history_sum_differences(weights, state.history)
    mv = system.space.ops["mass_v"]
    rhs = (
        system.T @ (4.0 * sig * wm - (2.0 * sig - 1.0) * wp) / (2.0 * tau)
        + (sig - 1.0) * (system.S @ wm)
        + a0 * (system.W @ wm)
        - system.v_rows(mv @ hist)
    )
    F = load(step.t_star)
    if F is not None:
        rhs = rhs + system.v_rows(F)
    w_new = solver.solve((2.0 * sig + 1.0) / (2.0 * tau), sig, a0, rhs)
    return _advance(state, system.space, w_new, system, tau, sig)


def a_value(sigma: float, now_sq: float, prev_sq: float, diff_sq: float) -> float:
    """(2s+1)|w^m|^2 - (2s-1)|w^{m-1}|^2 + (2s^2+s-1)|w^m - w^{m-1}|^2."""
    return (
        (2.0 * sigma + 1.0) * now_sq
        - (2.0 * sigma - 1.0) * prev_sq
        + (2.0 * sigma * sigma + sigma - 1.0) * diff_sq
    )


@dataclass
class EnergyDiagnostics:
    A_v: float
    A_gradu: float
    Q: float
    coercive: bool


def energy_diagnostics(state: State, space: DgSpace, sigma_prev: float, weights: np.ndarray | None, tau: float) -> EnergyDiagnostics:
    """A-values at the current level and Q^{m} with the weight tail.

    ``sigma_prev`` is the intermediate point of the step that produced this
    level; ``weights`` are a^{(m-1)} (None at level 1, where the tail is empty).
    """
    m = state.level
    if m < 1:
        raise ValueError("energy diagnostics need two levels")
    dv = FieldVector("v", state.v.coeffs - state.v_prev.coeffs)
    du = FieldVector("u", state.u.coeffs - state.u_prev.coeffs)
    A_v = a_value(sigma_prev, state.v_norm_sq[m], state.v_norm_sq[m - 1], space.l2_norm_sq(dv))
    A_g = a_value(sigma_prev, state.grad_norm_sq[m], state.grad_norm_sq[m - 1], space.grad_norm_sq(du))
    tail = 0.0
    if m >= 2 and weights is not None:
        # sum_{i=2}^{m} a_{m-i}^{(m-1)} |v^i|^2
        norms = np.asarray(state.v_norm_sq[2 : m + 1])
        tail = 2.0 * tau * float(weights[m - 2 :: -1][: len(norms)] @ norms)
    slack = COERCIVITY_RTOL * (1.0 + abs(A_v) + abs(A_g))
    coercive = (
        A_v >= state.v_norm_sq[m] / sigma_prev - slack
        and A_g >= state.grad_norm_sq[m] / sigma_prev - slack
    )
    return EnergyDiagnostics(A_v, A_g, A_v + A_g + tail, coercive)


@dataclass
class LevelRecord:
    m: int
    t: float
    sigma: float
    E_u: float
    E_v: float
    grad_u_norm: float
    v_norm: float
    Q: float
    backward_diff_norm: float


@dataclass
class RunResult:
    E_u: float
    E_v: float
    Eu_max: float
    Ev_max: float
    levels: list
    max_sigma_residual: float
    startup_ok: bool
    coercive_ok: bool
    max_energy: float
    wall_seconds: float
    solver_stats: dict
    u: FieldVector
    v: FieldVector


def check_time_step(order: VariableOrder, tau: float):
    if tau <= 0:
        raise ValueError("time step must be positive")
    if order.lipschitz * tau > 1.0:
        raise ValueError(
            f"L_alpha * tau = {order.lipschitz * tau:.3g} > 1; the time step is too large "
            "for a unique intermediate point sigma_m"
        )


def run(
    space: DgSpace,
    order: VariableOrder,
    solution: SolutionBundle,
    M: int,
    T: float = 1.0,
    *,
    variant: str = TWO_MINUS_ALPHA,
    solver: str = "direct",
    tol: float = 1e-12,
    initial: tuple | None = None,
    source=None,
    record_errors: bool = True,
    check_weights: bool = True,
) -> RunResult:
    """Advance M steps to time T and measure errors against ``solution``.

    ``initial`` overrides the projected initial data with explicit fields and
    ``source(x, t)`` overrides the manufactured forcing; both serve linearity
    and stability checks.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    tau = T / M
    check_time_step(order, tau)
    t_start = time.perf_counter()

    system = System.build(space)
    blocks = element_blocks(space) if solver == "gmres" else None
    n = space.n_u + space.n_v
    lin = LinearSolver(system.T, system.S, system.W, method=solver, tol=tol, blocks=blocks,
                       recycle=n > RECYCLE_MIN_SIZE)

    if initial is None:
        u0, v0 = project_initial(
            space,
            lambda x: solution.u(x, 0.0),
            lambda x: solution.v(x, 0.0),
            lambda x: solution.grad_u(x, 0.0),
        )
    else:
        u0, v0 = initial
    if source is None and not solution.is_zero:
        def source(x, t):
            return solution.source(order, x, t)

    def load(t):
        return None if source is None else space.source_load(source, t)

    def u_exact(t):
        return lambda x: solution.u(x, t)

    def v_exact(t):
        return lambda x: solution.v(x, t)

    state = initial_state(space, u0, v0, M)
    levels = []
    Eu_max = Ev_max = 0.0

    def record(m, sigma_m, Q, bdiff):
        nonlocal Eu_max, Ev_max
        if record_errors:
            eu = error_norm(space, state.u, u_exact(m * tau))
            ev = error_norm(space, state.v, v_exact(m * tau))
        else:
            eu = ev = float("nan")
        Eu_max, Ev_max = max(Eu_max, eu), max(Ev_max, ev)
        levels.append(LevelRecord(
            m, m * tau, sigma_m, eu, ev,
            float(np.sqrt(state.grad_norm_sq[m])), float(np.sqrt(state.v_norm_sq[m])), Q, bdiff,
        ))

    sigma = solve_sigma(order, 0, tau)
    max_res = abs(sigma_residual(order, 0, tau, sigma))
    record(0, sigma, float("nan"), float("nan"))

    # startup energy bound with the projected source
    s0 = compute_s(order, 0, tau)
    f_half = load(0.5 * tau)
    f_sq = 0.0
    if f_half is not None:
        f_sq = float(f_half @ (f_half / space.ops["mass_v"].diagonal()))
    rhs_bound = state.grad_norm_sq[0] + (1.0 + 2.0 * tau / s0) * state.v_norm_sq[0] + 0.5 * tau * s0 * f_sq

    startup_step(system, lin, state, load, order, tau)
    lhs_bound = state.grad_norm_sq[1] + state.v_norm_sq[1]
    startup_ok = lhs_bound <= rhs_bound + 1e-12 * max(1.0, rhs_bound)
    if not startup_ok:
        log.warning("startup energy inequality violated: %.6e > %.6e", lhs_bound, rhs_bound)

    coercive_ok = True
    prev_weights = None
    sigma_prev = sigma  # the startup level is measured with sigma_0
    for m in range(1, M + 1):
        diag = energy_diagnostics(state, space, sigma_prev, prev_weights, tau)
        coercive_ok &= diag.coercive
        bdiff = float(np.sqrt(space.l2_norm_sq(FieldVector("v", state.dv[m - 1])))) / tau
        sigma = solve_sigma(order, m, tau)
        res = abs(sigma_residual(order, m, tau, sigma))
        max_res = max(max_res, res)
        if not (0.5 < sigma < 1.0):
            raise DiagnosticFailure(f"sigma_{m} = {sigma} outside (1/2, 1)", (m,))
        record(m, sigma, diag.Q, bdiff)
        if m == M:
            break
        step = compute_weights(order, m, tau, variant=variant, check=check_weights, sigma=sigma)
        general_step(system, lin, state, load, step)
        prev_weights = step.weights
        sigma_prev = sigma

    if not coercive_ok:
        log.warning("coercivity of the A-functional failed at some level")
    wall = time.perf_counter() - t_start
    energies = [g + v for g, v in zip(state.grad_norm_sq, state.v_norm_sq)]
    stats = {
        "method": lin.method,
        "solves": lin.solves,
        "factorizations": lin.factorizations,
        "iterations": lin.iterations,
        "max_residual": lin.max_residual,
    }
    last = levels[-1]
    return RunResult(
        last.E_u, last.E_v, Eu_max, Ev_max, levels, max_res, startup_ok, coercive_ok,
        float(max(energies)), wall, stats, state.u, state.v,
    )
