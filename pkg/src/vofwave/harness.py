"""Experiment drivers: single runs, convergence sweeps, the weakly singular
study, weight diagnostics, and their CSV output."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernel import (
    BRANCH_VARIANTS,
    TWO_MINUS_ALPHA,
    VariableOrder,
    caputo_weights_table,
    weight_variation_report,
)
from .manufactured import get_solution
from .mesh import build_mesh
from .space import FluxParams, admissible, assemble_space
from .stepper import RunResult, run

log = logging.getLogger(__name__)

MISSING = "--"

SUMMARY_FIELDS = (
    "preset", "alpha", "dim", "q_u", "q_v", "N", "M", "theta", "gamma", "zeta",
    "E_u", "E_v", "Eu_max", "Ev_max", "order_h", "order_tau", "wall_seconds",
)
LEVEL_FIELDS = ("m", "t_m", "sigma_m", "E_u", "E_v", "grad_u_norm", "v_norm", "Q", "backward_diff_norm")
HISTORY_FIELDS = ("m", "t", "sigma", "err_v_l2", "bdiff_v_l2", "energy_Q")
WEIGHT_FIELDS = ("m", "i", "c_i", "a_i", "sigma_m", "s_m")
DIAGNOSTIC_FIELDS = (
    "alpha", "tau", "M", "ratio_max", "cumulative_max", "cumulative_over_tau",
    "bounded_diff_sum", "bounded_tail_sum",
)

# fraction of the spatial error the temporal error tau^2 may take in a spatial sweep
TEMPORAL_BUDGET = 0.1


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class RunConfig:
    dim: int = 1
    lower: float | None = None
    upper: float | None = None
    N: int = 10
    M: int = 100
    T: float = 1.0
    q_u: int = 1
    q_v: int = 0
    theta: float = 0.0
    gamma: float = 0.0
    zeta: float = 0.0
    order: str = "exp_decay"
    solution: str = "smooth1d"
    solver: str = "direct"
    tol: float = 1e-12
    variant: str = TWO_MINUS_ALPHA
    output: str | None = None
    timing: bool = True

    @property
    def tau(self) -> float:
        return self.T / self.M

    def bounds(self):
        sol = get_solution(self.solution, self.dim)
        lo = sol.bounds[0] if self.lower is None else self.lower
        hi = sol.bounds[1] if self.upper is None else self.upper
        return lo, hi

    def order_function(self) -> VariableOrder:
        return VariableOrder.parse(self.order, horizon=self.T)

    def validate(self) -> "RunConfig":
        if self.dim not in (1, 2):
            raise ConfigError(f"dim must be 1 or 2, got {self.dim}")
        if self.N < 1 or self.M < 1:
            raise ConfigError("N and M must be positive")
        if self.T <= 0:
            raise ConfigError("T must be positive")
        if not admissible(self.q_u, self.q_v):
            raise ConfigError(
                f"(q_u, q_v) = ({self.q_u}, {self.q_v}) violates the degree constraint "
                "q_u >= 1, q_u - 2 <= q_v <= q_u"
            )
        if self.gamma < 0 or self.zeta < 0:
            raise ConfigError("flux parameters gamma and zeta must be nonnegative")
        if self.solver not in ("direct", "gmres"):
            raise ConfigError(f"solver must be 'direct' or 'gmres', got {self.solver!r}")
        if self.variant not in BRANCH_VARIANTS:
            raise ConfigError(f"variant must be one of {BRANCH_VARIANTS}")
        try:
            order = self.order_function()
            sol = get_solution(self.solution, self.dim)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if sol.dim != self.dim:
            raise ConfigError(f"solution preset {self.solution!r} is {sol.dim}D but dim = {self.dim}")
        lo, hi = self.bounds()
        if not hi > lo:
            raise ConfigError("upper bound must exceed lower bound")
        if order.lipschitz * self.tau > 1.0:
            raise ConfigError(
                f"L_alpha * tau = {order.lipschitz * self.tau:.3g} exceeds 1; increase M"
            )
        return self

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _convert(key: str, text):
    if not isinstance(text, str):
        return text
    kind = _FIELDS[key].type
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "float | None":
            return None if text.lower() in ("", "none") else float(text)
        if kind == "bool":
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "str | None":
            return None if text.lower() in ("", "none") else text
        return text
    except ValueError:
        raise ConfigError(f"bad value {text!r} for key {key!r} ({kind})") from None


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        out[key.strip()] = value.strip()
    return out


def make_config(values: dict | None = None, base: RunConfig | None = None) -> RunConfig:
    """Build a validated config from string or typed values; unknown keys are errors."""
    values = values or {}
    unknown = sorted(set(values) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    kw = {k: _convert(k, v) for k, v in values.items()}
    cfg = dataclasses.replace(base, **kw) if base is not None else RunConfig(**kw)
    return cfg.validate()


def load_config(path, overrides: dict | None = None) -> RunConfig:
    values = parse_config_text(Path(path).read_text())
    values.update(overrides or {})
    return make_config(values)


def observed_order(e_coarse: float, e_fine: float, ratio: float) -> float:
    """log(e_coarse / e_fine) / log(ratio)."""
    return math.log(e_coarse / e_fine) / math.log(ratio)


def observed_orders(errors, sizes) -> list:
    """Orders between consecutive refinements; the first entry is None."""
    out = [None]
    for k in range(1, len(errors)):
        e1, e2 = errors[k - 1], errors[k]
        if not (e1 > 0 and e2 > 0):
            out.append(None)
        else:
            out.append(observed_order(e1, e2, sizes[k] / sizes[k - 1]))
    return out


@dataclass
class RunSummary:
    config: RunConfig
    E_u: float
    E_v: float
    Eu_max: float
    Ev_max: float
    wall_seconds: float
    solver_stats: dict
    order_h: float | None = None
    order_tau: float | None = None

    def row(self) -> dict:
        c = self.config
        return {
            "preset": c.solution, "alpha": c.order, "dim": c.dim, "q_u": c.q_u, "q_v": c.q_v,
            "N": c.N, "M": c.M, "theta": c.theta, "gamma": c.gamma, "zeta": c.zeta,
            "E_u": self.E_u, "E_v": self.E_v, "Eu_max": self.Eu_max, "Ev_max": self.Ev_max,
            "order_h": self.order_h, "order_tau": self.order_tau,
            "wall_seconds": self.wall_seconds if c.timing else None,
        }


@dataclass
class ErrorReport:
    rows: list
    kind: str = "single"
    orders: dict = field(default_factory=dict)
    budget_ok: bool | None = None
    peak_fraction: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]


def _fmt(value) -> str:
    if value is None:
        return MISSING
    if isinstance(value, float):
        if math.isnan(value):
            return MISSING
        return f"{value:.10e}"
    return str(value)


def write_csv(path, fields, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in fields])
    return path


def read_csv(path) -> list:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _stem(cfg: RunConfig) -> str:
    order = cfg.order.replace(":", "")
    return f"{cfg.solution}_{order}_d{cfg.dim}_q{cfg.q_u}{cfg.q_v}_N{cfg.N}_M{cfg.M}"


def level_rows(result: RunResult) -> list:
    return [
        {
            "m": r.m, "t_m": r.t, "sigma_m": r.sigma, "E_u": r.E_u, "E_v": r.E_v,
            "grad_u_norm": r.grad_u_norm, "v_norm": r.v_norm, "Q": r.Q,
            "backward_diff_norm": r.backward_diff_norm,
        }
        for r in result.levels
    ]


def history_rows(result: RunResult) -> list:
    return [
        {
            "m": r.m, "t": r.t, "sigma": r.sigma, "err_v_l2": r.E_v,
            "bdiff_v_l2": r.backward_diff_norm, "energy_Q": r.Q,
        }
        for r in result.levels[1:]
    ]


def execute(cfg: RunConfig) -> RunResult:
    """Assemble and run one configuration without writing anything."""
    cfg.validate()
    lo, hi = cfg.bounds()
    mesh = build_mesh(cfg.dim, (lo, hi), cfg.N)
    space = assemble_space(mesh, cfg.q_u, cfg.q_v, FluxParams(cfg.theta, cfg.gamma, cfg.zeta))
    return run(
        space, cfg.order_function(), get_solution(cfg.solution, cfg.dim), cfg.M, cfg.T,
        variant=cfg.variant, solver=cfg.solver, tol=cfg.tol,
    )


def _summary(cfg: RunConfig, result: RunResult) -> RunSummary:
    return RunSummary(cfg, result.E_u, result.E_v, result.Eu_max, result.Ev_max,
                      result.wall_seconds, result.solver_stats)


def run_single(cfg: RunConfig):
    """One run; writes the level CSV and a one-row summary when ``output`` is set."""
    result = execute(cfg)
    summary = _summary(cfg, result)
    if cfg.output:
        out = Path(cfg.output)
        write_csv(out / f"levels_{_stem(cfg)}.csv", LEVEL_FIELDS, level_rows(result))
        write_csv(out / f"summary_{_stem(cfg)}.csv", SUMMARY_FIELDS, [summary.row()])
    return ErrorReport([summary]), result


def _sweep_configs(kind: str, base: RunConfig, refinements) -> list:
    if kind == "spatial":
        return [base.replace(N=int(n)) for n in refinements]
    if kind == "temporal":
        return [base.replace(M=int(m)) for m in refinements]
    if kind == "simultaneous":
        return [base.replace(N=int(n), M=int(n)) for n in refinements]
    raise ConfigError(f"unknown sweep kind {kind!r}; use spatial, temporal or simultaneous")


def run_sweep(kind: str, base: RunConfig, refinements, label: str | None = None) -> ErrorReport:
    """Run a refinement sequence and compute observed orders between consecutive rows."""
    if len(refinements) < 2:
        raise ConfigError("a sweep needs at least two refinement levels")
    configs = [c.validate() for c in _sweep_configs(kind, base, refinements)]
    rows = [_summary(c, execute(c)) for c in configs]
    sizes = [c.N for c in configs] if kind != "temporal" else [c.M for c in configs]
    orders = {
        "E_u": observed_orders([r.E_u for r in rows], sizes),
        "E_v": observed_orders([r.E_v for r in rows], sizes),
        "Eu_max": observed_orders([r.Eu_max for r in rows], sizes),
        "Ev_max": observed_orders([r.Ev_max for r in rows], sizes),
    }
    for r, o in zip(rows, orders["E_u"] if kind != "simultaneous" else orders["E_v"]):
        if kind == "temporal":
            r.order_tau = o
        elif kind == "spatial":
            r.order_h = o
        else:
            r.order_h = r.order_tau = o
    report = ErrorReport(rows, kind, orders)
    if kind == "spatial":
        report.budget_ok = temporal_budget_ok(rows)
    if base.output:
        name = label or f"{kind}_{_stem(base)}"
        write_csv(Path(base.output) / f"{name}.csv", SUMMARY_FIELDS, [r.row() for r in rows])
    return report


def temporal_budget_ok(rows) -> bool:
    """tau^2 must stay below a tenth of the smallest spatial error of the sweep."""
    tau = rows[0].config.tau
    smallest = min(r.E_u for r in rows)
    ok = tau * tau < TEMPORAL_BUDGET * smallest
    if not ok:
        warnings.warn(
            f"temporal budget violated: tau^2 = {tau * tau:.3e} is not below "
            f"{TEMPORAL_BUDGET:g} x spatial error {smallest:.3e}; increase M",
            stacklevel=2,
        )
    return ok


def peak_fraction(values) -> float:
    """Position of the maximum as a fraction of the number of entries (1-based step)."""
    values = np.asarray(values, dtype=float)
    return (int(np.nanargmax(values)) + 1) / len(values)


def run_weak_singularity(base: RunConfig, steps, label: str | None = None) -> ErrorReport:
    """Temporal sweep on the singular preset reporting max-in-time errors and
    time histories of the velocity error and backward difference."""
    if len(steps) < 2:
        raise ConfigError("a sweep needs at least two refinement levels")
    configs = [base.replace(M=int(m)).validate() for m in steps]
    rows, peaks = [], {}
    for cfg in configs:
        result = execute(cfg)
        rows.append(_summary(cfg, result))
        hist = history_rows(result)
        peaks[cfg.M] = {
            "bdiff_v_l2": peak_fraction([h["bdiff_v_l2"] for h in hist]),
            "err_v_l2": peak_fraction([h["err_v_l2"] for h in hist]),
        }
        if cfg.output:
            write_csv(Path(cfg.output) / f"history_{_stem(cfg)}.csv", HISTORY_FIELDS, hist)
    sizes = [c.M for c in configs]
    orders = {
        "Eu_max": observed_orders([r.Eu_max for r in rows], sizes),
        "Ev_max": observed_orders([r.Ev_max for r in rows], sizes),
    }
    for r, o in zip(rows, orders["Eu_max"]):
        r.order_tau = o
    report = ErrorReport(rows, "singular", orders, peak_fraction=peaks)
    if base.output:
        name = label or f"singular_{_stem(base)}"
        write_csv(Path(base.output) / f"{name}.csv", SUMMARY_FIELDS, [r.row() for r in rows])
    return report


def run_weight_diagnostics(order: str, taus, T: float = 1.0, variant: str = TWO_MINUS_ALPHA,
                           output: str | None = None) -> list:
    """Weight-variation statistics per time step; one row per tau."""
    alpha = VariableOrder.parse(order, horizon=T)
    rows = []
    for tau in taus:
        M = int(round(T / tau))
        if M < 3:
            raise ConfigError(f"tau = {tau} leaves fewer than 3 steps on [0, {T}]")
        rep = weight_variation_report(alpha, T / M, M, variant)
        rows.append({
            "alpha": alpha.label, "tau": T / M, "M": M, "ratio_max": rep.ratio_max,
            "cumulative_max": rep.cumulative_max, "cumulative_over_tau": rep.cumulative_over_tau,
            "bounded_diff_sum": rep.bounded_diff_sum, "bounded_tail_sum": rep.bounded_tail_sum,
        })
    if output:
        write_csv(Path(output) / f"weights_diag_{alpha.label.replace(':', '')}.csv", DIAGNOSTIC_FIELDS, rows)
    return rows


def write_weight_table(order: str, tau: float, M: int, path, variant: str = TWO_MINUS_ALPHA):
    alpha = VariableOrder.parse(order, horizon=tau * M)
    rows = [dict(zip(WEIGHT_FIELDS, r)) for r in caputo_weights_table(alpha, tau, M, variant)]
    return write_csv(path, WEIGHT_FIELDS, rows)
