"""Ground states of M(|u|^2) (-Delta)_A^s u = f(|u|) u and residual certificates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from kff.functionals import (
    MountainPassResult,
    energy_J,
    fix_gauge,
    lambda1,
    mountain_pass_d,
    nehari_I,
)
from kff.model import ModelParams
from kff.operator import MagneticForm


@dataclass
class StationarySolveResult:
    state: np.ndarray = field(repr=False)
    J_value: float
    I_value: float
    residual: float
    dual_residual_bound: float
    iterations: int
    converged: bool
    d_estimate: float
    mountain_pass: MountainPassResult | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "J": self.J_value,
            "I": self.I_value,
            "residual": self.residual,
            "dual_residual_bound": self.dual_residual_bound,
            "iterations": self.iterations,
            "converged": self.converged,
            "d_estimate": self.d_estimate,
        }


def stationary_residual_vector(form: MagneticForm, params: ModelParams, v) -> np.ndarray:
    """``r = M(B) H v - W f(|v|) v``, so ``<J'(v), phi> = Re(phi^H r)``."""
    v = np.asarray(v, dtype=complex)
    Hv = form.H @ v
    B = max(float(np.vdot(v, Hv).real), 0.0)
    return params.M(B) * Hv - form.weights * params.f(np.abs(v)) * v


def _grad_norm(form, r) -> float:
    # |W^{-1} r|_W
    return math.sqrt(float(np.sum(np.abs(r) ** 2 / form.weights)))


def _realify(A: np.ndarray) -> np.ndarray:
    return np.block([[A.real, -A.imag], [A.imag, A.real]])


def hessian_real(form: MagneticForm, params: ModelParams, v) -> np.ndarray:
    """Hessian of ``J`` in the real coordinates ``[Re v, Im v]``."""
    v = np.asarray(v, dtype=complex)
    N = form.N
    Hv = form.H @ v
    B = max(float(np.vdot(v, Hv).real), 0.0)
    hess = params.M(B) * _realify(form.H)
    a = np.concatenate([Hv.real, Hv.imag])
    if params.theta != 1.0 and B > 0:
        hess += 2.0 * params.dM(B) * np.outer(a, a)
    r = np.abs(v)
    fr = params.f(r)
    q = np.zeros(N)
    nz = r > 0
    if params.C > 0:
        q[nz] = params.C * (params.p - 2.0) * r[nz] ** (params.p - 4.0)
    w = form.weights
    x, y = v.real, v.imag
    idx = np.arange(N)
    hess[idx, idx] -= w * (fr + q * x * x)
    hess[idx + N, idx + N] -= w * (fr + q * y * y)
    hess[idx, idx + N] -= w * q * x * y
    hess[idx + N, idx] -= w * q * x * y
    return hess


def newton_polish(form: MagneticForm, params: ModelParams, v0, tol: float = 1e-8,
                  max_iters: int = 50):
    """Damped Newton on ``J' = 0`` with the phase direction pinned.

    The Hessian is singular along ``i v`` (phase invariance); adding a rank-one
    term in that direction leaves the step unchanged and the system regular.
    Returns ``(v, residual, iterations, converged)``.
    """
    N = form.N
    v = np.asarray(v0, dtype=complex).copy()
    r = stationary_residual_vector(form, params, v)
    res = _grad_norm(form, r)
    it = 0
    while res >= tol and it < max_iters:
        it += 1
        hess = hessian_real(form, params, v)
        gauge = np.concatenate([-v.imag, v.real])
        gn = np.linalg.norm(gauge)
        if gn > 0:
            gauge /= gn
            hess += np.abs(hess).max() * np.outer(gauge, gauge)
        rhs = -np.concatenate([r.real, r.imag])
        try:
            dz = np.linalg.solve(hess, rhs)
        except np.linalg.LinAlgError:
            dz = np.linalg.lstsq(hess, rhs, rcond=None)[0]
        dv = dz[:N] + 1j * dz[N:]
        alpha = 1.0
        while alpha > 1e-6:
            cand = v + alpha * dv
            r_c = stationary_residual_vector(form, params, cand)
            res_c = _grad_norm(form, r_c)
            if res_c < res:
                break
            alpha *= 0.5
        else:
            break
        v, r, res = cand, r_c, res_c
    return v, res, it, res < tol


def solve_ground_state(form: MagneticForm, params: ModelParams, restarts: int = 8,
                       max_iters: int = 5000, descent_tol: float = 1e-6, tol: float = 1e-8,
                       newton_iters: int = 50, seed: int = 0, workers: int = 1,
                       lam1: float | None = None) -> StationarySolveResult:
    """Minimize ``J`` on the Nehari manifold, then polish the minimizer.

    The returned state is gauge-fixed (largest entry real positive).  When
    polishing stalls the best iterate is returned with ``converged=False``.
    """
    mp = mountain_pass_d(form, params, restarts=restarts, max_iters=max_iters,
                         tol=descent_tol, seed=seed, workers=workers)
    v, res, its, ok = newton_polish(form, params, mp.state, tol=tol, max_iters=newton_iters)
    v = fix_gauge(v)
    lam1 = lambda1(form) if lam1 is None else lam1
    J = energy_J(form, params, v)
    I = nehari_I(form, params, v)
    converged = ok and abs(I) < 1e-8 * (1.0 + abs(J))
    return StationarySolveResult(v, J, I, res, res / math.sqrt(lam1), its, converged, mp.d, mp)


def certify_stationary(form: MagneticForm, params: ModelParams, v, probe_count: int = 16,
                       seed: int = 0) -> float:
    """Largest ``|<J'(v), phi>| / |phi|_X`` over seeded random probes.

    For ``N <= 256`` the real and imaginary unit vectors of every node are
    probed as well.  Zero for an exact stationary solution.
    """
    from kff.rng import generator

    v = np.asarray(v, dtype=complex)
    if v.shape != (form.N,):
        raise ValueError(f"state has shape {v.shape}, expected ({form.N},)")
    r = stationary_residual_vector(form, params, v)
    rng = generator(seed, "certify_stationary")
    phi = rng.standard_normal((form.N, probe_count)) + 1j * rng.standard_normal((form.N, probe_count))
    norms = np.sqrt(np.einsum("ik,ik->k", phi.conj(), form.H @ phi).real)
    worst = float(np.max(np.abs((phi.conj().T @ r).real) / norms)) if probe_count else 0.0
    if form.N <= 256:
        diag = np.sqrt(np.diag(form.H).real)
        worst = max(worst, float(np.max(np.abs(r.real) / diag)), float(np.max(np.abs(r.imag) / diag)))
    return worst
