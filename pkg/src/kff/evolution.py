"""Time integration of u_t = -M(B(u,u)) W^{-1} H u + f(|u|) u.

Linearly implicit Euler with the Kirchhoff coefficient frozen at the current
state, wrapped in an adaptive loop that only accepts energy-decreasing steps.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from kff.functionals import (
    EnergyReport,
    energy_J,
    energy_report,
    grad_J,
    l2_norm_sq,
    lambda1,
)
from kff.model import ModelParams
from kff.operator import MagneticForm

OUTCOMES = ("converged_to_stationary", "global_undecided", "blow_up", "step_failure")
CSV_COLUMNS = ("t", "J", "I", "x0a_norm_sq", "l2_norm_sq", "ut_l2", "dual_residual_bound", "dt")
_REPORT_ATTRS = ("t", "J", "I", "norm_x0a_sq", "norm_l2_sq", "ut_l2", "dual_residual_bound", "dt")
ENERGY_SLACK = 1e-9


class StepError(RuntimeError):
    pass


@dataclass
class State:
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("state has non-finite entries")


@dataclass
class Controls:
    t_max: float = 1e6
    dt_init: float = 1e-3
    dt_min: float = 1e-12
    blow_up_norm: float = 1e8
    stationary_tol: float = 1e-6
    dt_max: float = math.inf
    max_steps: int = 1_000_000

    def __post_init__(self):
        for name in ("t_max", "dt_init", "dt_min", "blow_up_norm", "stationary_tol", "dt_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"control {name} must be positive")
        if not self.dt_min < self.dt_init:
            raise ValueError("need dt_min < dt_init")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        if math.isinf(d["dt_max"]):
            d["dt_max"] = None
        return d


@dataclass
class RunSummary:
    outcome: str
    t_end: float
    reports: list[EnergyReport]
    t_k_sequence: list[float]
    terminal_state: State
    terminal_dual_residual: float
    lam1: float
    message: str = ""
    states: list[np.ndarray] | None = field(default=None, repr=False)

    @property
    def steps(self) -> list[EnergyReport]:
        """Reports of accepted steps (the first report is the initial state)."""
        return self.reports[1:]

    def ut_along_t_k(self) -> list[float]:
        by_t = {r.t: r.ut_l2 for r in self.steps}
        return [by_t[t] for t in self.t_k_sequence]

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "t_end": self.t_end,
            "accepted_steps": len(self.steps),
            "t_k": list(self.t_k_sequence),
            "terminal_dual_residual": self.terminal_dual_residual,
            "lambda1": self.lam1,
            "J0": self.reports[0].J,
            "I0": self.reports[0].I,
            "J_end": self.reports[-1].J,
            "message": self.message,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        write_reports_csv(self.reports, buf)
        return buf.getvalue()


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else f"{x:.17g}"


def write_reports_csv(reports, fh, header_lines=()) -> None:
    for line in header_lines:
        fh.write(f"# {line}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        writer.writerow([_fmt(getattr(r, a)) for a in _REPORT_ATTRS])


def step(form: MagneticForm, params: ModelParams, u, dt: float) -> np.ndarray:
    """One linearly implicit Euler step.

    Solves ``(W + dt M_k H) u_new = W (u + dt f(|u|) u)`` with
    ``M_k = M(B(u,u))`` by a Cholesky factorization.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    u = np.asarray(u, dtype=complex)
    B = max(float(np.vdot(u, form.H @ u).real), 0.0)
    Mk = params.M(B)
    w = form.weights
    rhs = w * (u + dt * params.f(np.abs(u)) * u)
    A = dt * Mk * form.H + np.diag(w)
    try:
        factor = scipy.linalg.cho_factor(A, lower=False, check_finite=True)
        return scipy.linalg.cho_solve(factor, rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise StepError(f"linear solve failed at dt={dt:g}: {exc}") from exc


def evolve(form: MagneticForm, params: ModelParams, u0, controls: Controls | None = None,
           lam1: float | None = None, record_states: bool = True) -> RunSummary:
    """Adaptive energy-dissipating integration from ``u0``.

    A step is accepted iff ``J(u_new) <= J(u) + 1e-9 (1 + |J(u)|)``; rejected
    steps halve ``dt`` and five consecutive accepts grow it by 1.2.  The run
    stops on the first of: ``|u_t|/sqrt(lambda_1) < stationary_tol``
    (converged_to_stationary), L2 or sup norm above ``blow_up_norm``
    (blow_up), ``dt < dt_min`` (step_failure), ``t >= t_max``
    (global_undecided).  The numerical blow-up time underestimates the true
    maximal existence time.
    """
    c = controls or Controls()
    lam1 = lambda1(form) if lam1 is None else lam1
    sq = math.sqrt(lam1)
    u = np.asarray(u0, dtype=complex).copy()
    if u.shape != (form.N,):
        raise ValueError(f"initial state has shape {u.shape}, expected ({form.N},)")
    w = form.weights
    g0 = math.sqrt(l2_norm_sq(form, grad_J(form, params, u)))
    reports = [energy_report(form, params, u, 0.0, g0, lam1)]
    states = [u.copy()] if record_states else None
    J = reports[0].J
    t, dt = 0.0, c.dt_init
    streak = 0
    best = math.inf
    t_k: list[float] = []
    outcome, message = None, ""

    while outcome is None:
        if t >= c.t_max * (1 - 1e-14):
            outcome = "global_undecided"
            break
        if len(reports) > c.max_steps:
            outcome, message = "global_undecided", "step budget exhausted"
            break
        if dt < c.dt_min:
            outcome, message = "step_failure", f"dt fell below dt_min={c.dt_min:g}"
            break
        h = min(dt, c.dt_max, c.t_max - t)
        try:
            u_new = step(form, params, u, h)
        except StepError as exc:
            outcome, message = "step_failure", str(exc)
            break
        if not np.all(np.isfinite(u_new)):
            dt *= 0.5
            streak = 0
            continue
        with np.errstate(over="ignore", invalid="ignore"):
            J_new = energy_J(form, params, u_new)
        if math.isnan(J_new) or J_new > J + ENERGY_SLACK * (1.0 + abs(J)):
            dt *= 0.5
            streak = 0
            continue

        ut = (u_new - u) / h
        ut_l2 = math.sqrt(float(np.sum(w * np.abs(ut) ** 2)))
        t += h
        u, J = u_new, J_new
        with np.errstate(over="ignore", invalid="ignore"):
            rep = energy_report(form, params, u, t, ut_l2, lam1, h)
        reports.append(rep)
        if record_states:
            states.append(u.copy())
        if ut_l2 < best:
            best = ut_l2
            t_k.append(t)

        l2 = math.sqrt(rep.norm_l2_sq)
        if not l2 <= c.blow_up_norm or float(np.max(np.abs(u))) > c.blow_up_norm:
            outcome = "blow_up"
        elif rep.dual_residual_bound < c.stationary_tol:
            outcome = "converged_to_stationary"

        streak += 1
        if streak >= 5:
            dt = min(dt * 1.2, c.dt_max)
            streak = 0

    last = reports[-1]
    return RunSummary(
        outcome=outcome,
        t_end=t,
        reports=reports,
        t_k_sequence=t_k,
        terminal_state=State(u, t) if np.all(np.isfinite(u)) else State(np.zeros_like(u), t),
        terminal_dual_residual=last.dual_residual_bound,
        lam1=lam1,
        message=message,
        states=states,
    )


def discrete_energy_identity(summary: RunSummary) -> tuple[float, float, float]:
    """``(lhs, rhs, rel_gap)`` for ``sum dt |u_t|^2 + J(u_end) = J(u_0)``."""
    steps = summary.steps
    if not steps:
        raise ValueError("run has no accepted steps")
    dissipated = math.fsum(r.dt * r.ut_l2**2 for r in steps)
    lhs = dissipated + steps[-1].J
    rhs = summary.reports[0].J
    return lhs, rhs, abs(lhs - rhs) / (1.0 + abs(rhs))


def weak_residual_vector(form, params, u_prev, u_next, dt) -> np.ndarray:
    """Riesz vector ``r`` with ``Re(phi^H r)`` equal to the weak residual.

    Evaluated at the midpoint state with the difference quotient as ``u_t``.
    """
    mid = 0.5 * (u_prev + u_next)
    ut = (u_next - u_prev) / dt
    Hm = form.H @ mid
    B = max(float(np.vdot(mid, Hm).real), 0.0)
    w = form.weights
    return w * ut + params.M(B) * Hm - w * params.f(np.abs(mid)) * mid


def weak_residual(form: MagneticForm, params: ModelParams, summary: RunSummary,
                  probe_count: int = 16, seed: int = 0) -> float:
    """Largest normalized weak-form residual over seeded random probes.

    For each accepted step and probe ``phi``:
    ``|<u_t, phi>_W + M(B) B(u, phi) - Re sum w f(|u|) u conj(phi)| / |phi|_X``.
    """
    from kff.rng import generator

    if summary.states is None:
        raise ValueError("run was evolved without recorded states")
    if len(summary.states) < 2:
        raise ValueError("run has no accepted steps")
    rng = generator(seed, "weak_residual")
    phi = rng.standard_normal((form.N, probe_count)) + 1j * rng.standard_normal((form.N, probe_count))
    norms = np.sqrt(np.einsum("ik,ik->k", phi.conj(), form.H @ phi).real)
    worst = 0.0
    for u0, u1, rep in zip(summary.states[:-1], summary.states[1:], summary.steps):
        r = weak_residual_vector(form, params, u0, u1, rep.dt)
        worst = max(worst, float(np.max(np.abs((phi.conj().T @ r).real) / norms)))
    return worst
