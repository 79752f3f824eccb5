"""Energy, Nehari functional, gradient, first eigenvalue and the well depth."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from kff.model import ModelParams
from kff.operator import PSD_EPS, MagneticForm

BOUNDARY_TOL = 1e-8


class NehariError(ValueError):
    """The fiber ``lam -> I(lam w)`` has no sign change."""


class MountainPassError(RuntimeError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


def _vec(form: MagneticForm, u) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.shape != (form.N,):
        raise ValueError(f"state has shape {u.shape}, expected ({form.N},)")
    return u


def l2_inner(form: MagneticForm, u, v) -> float:
    """W-weighted real L2 product ``Re sum_i w_i u_i conj(v_i)``."""
    return float(np.real(np.sum(form.weights * u * np.conj(v))))


def l2_norm_sq(form: MagneticForm, u) -> float:
    return float(np.sum(form.weights * np.abs(u) ** 2))


def _parts(form, params, u):
    Hu = form.H @ u
    B = max(float(np.vdot(u, Hu).real), 0.0)
    r = np.abs(u)
    return Hu, B, r


def energy_J(form: MagneticForm, params: ModelParams, u) -> float:
    """``J(u) = Mcal(B(u,u))/2 - sum_i w_i F(|u_i|)``."""
    u = _vec(form, u)
    _, B, r = _parts(form, params, u)
    return 0.5 * params.Mcal(B) - float(np.sum(form.weights * params.F(r)))


def nehari_I(form: MagneticForm, params: ModelParams, u) -> float:
    """``I(u) = M(B) B - sum_i w_i f(|u_i|) |u_i|^2``."""
    u = _vec(form, u)
    _, B, r = _parts(form, params, u)
    return params.M(B) * B - float(np.sum(form.weights * params.f(r) * r**2))


def _nehari_scale(form, params, u) -> float:
    # size of the two competing terms of I, for relative sign decisions
    _, B, r = _parts(form, params, u)
    return params.M(B) * B + float(np.sum(form.weights * params.f(r) * r**2))


def grad_J(form: MagneticForm, params: ModelParams, u) -> np.ndarray:
    """L2(W) gradient ``M(B) W^{-1} H u - f(|u|) u``."""
    u = _vec(form, u)
    Hu, B, r = _parts(form, params, u)
    return params.M(B) * Hu / form.weights - params.f(r) * u


def lambda1(form: MagneticForm) -> float:
    """Smallest eigenvalue of ``H phi = lam W phi``."""
    return float(spectrum(form, 1)[0])


def spectrum(form: MagneticForm, k: int = 1, vectors: bool = False):
    """Lowest ``k`` generalized eigenvalues (and W-orthonormal eigenvectors)."""
    k = min(int(k), form.N)
    vals, vecs = scipy.linalg.eigh(form.H, np.diag(form.weights), subset_by_index=[0, k - 1])
    scale = float(np.max(np.abs(form.H) / form.weights[:, None]))
    if vals[0] < -PSD_EPS * scale:
        raise ArithmeticError(f"form is numerically indefinite (lowest eigenvalue {vals[0]:g})")
    if vals[0] <= 0:
        raise ArithmeticError("first eigenvalue is not positive")
    return (vals, vecs) if vectors else vals


def first_eigenmode(form: MagneticForm) -> tuple[float, np.ndarray]:
    """``(lambda_1, phi)`` with ``phi`` W-normalized and gauge-fixed."""
    vals, vecs = spectrum(form, 1, vectors=True)
    return float(vals[0]), fix_gauge(vecs[:, 0])


def fix_gauge(u) -> np.ndarray:
    """Rotate so that the largest-modulus entry is real and positive."""
    u = np.asarray(u, dtype=complex)
    k = int(np.argmax(np.abs(u)))
    if abs(u[k]) == 0:
        return u.copy()
    out = u * (abs(u[k]) / u[k])
    out[k] = abs(u[k])
    return out


# Nehari fiber


def _fiber_g(params: ModelParams, B: float, S: float, lam: float) -> float:
    # I(lam w) / lam^2 in terms of B = B(w,w) and S = sum w_i |w_i|^p
    return params.M(lam**2 * B) * B - params.C * lam ** (params.p - 2.0) * S


def _fiber_data(form, params, w):
    w = _vec(form, w)
    if not np.any(w):
        raise NehariError("cannot project the zero state onto the Nehari manifold")
    B = float(np.vdot(w, form.H @ w).real)
    S = float(np.sum(form.weights * np.abs(w) ** params.p)) if params.C > 0 else 0.0
    if params.C == 0 or S == 0:
        raise NehariError("no Nehari intersection: nonlinearity vanishes along the fiber")
    return w, B, S


def nehari_scale_closed_form(params: ModelParams, B: float, S: float) -> float:
    if not params.homogeneous:
        raise ValueError("closed-form projection needs a_kirchhoff = 0")
    if params.p <= 2 * params.theta:
        raise NehariError("closed-form projection needs p > 2 theta")
    return (params.m0 * B**params.theta / (params.C * S)) ** (1.0 / (params.p - 2.0 * params.theta))


def nehari_scale_bisection(params: ModelParams, B: float, S: float,
                           lo: float = 1e-8, hi: float = 1e8) -> float:
    """Root of ``I(lam w)/lam^2`` by a geometric scan then bisection in log lam."""
    grid = np.geomspace(lo, hi, 161)
    vals = np.array([_fiber_g(params, B, S, lam) for lam in grid])
    idx = np.flatnonzero((vals[:-1] > 0) & (vals[1:] <= 0))
    if idx.size == 0:
        raise NehariError(f"no Nehari intersection for lam in [{lo:g}, {hi:g}]")
    a, b = math.log(grid[idx[0]]), math.log(grid[idx[0] + 1])
    for _ in range(200):
        m = 0.5 * (a + b)
        if m in (a, b):
            break
        if _fiber_g(params, B, S, math.exp(m)) > 0:
            a = m
        else:
            b = m
    return math.exp(0.5 * (a + b))


def nehari_project(form: MagneticForm, params: ModelParams, w, method: str = "auto"):
    """Scale ``w`` onto the Nehari manifold: returns ``(lam, lam * w)``.

    ``method`` is ``"closed"`` (needs ``a_kirchhoff = 0``), ``"bisection"``,
    or ``"auto"`` which picks the closed form whenever it applies.
    """
    w, B, S = _fiber_data(form, params, w)
    if method == "auto":
        method = "closed" if params.homogeneous else "bisection"
    if method == "closed":
        lam = nehari_scale_closed_form(params, B, S)
    elif method == "bisection":
        lam = nehari_scale_bisection(params, B, S)
    else:
        raise ValueError(f"unknown projection method {method!r}")
    return lam, lam * w


# mountain-pass level


@dataclass
class RestartResult:
    index: int
    J: float
    converged: bool
    iterations: int
    grad_norm: float
    J_initial: float
    state: np.ndarray = field(repr=False)


@dataclass
class MountainPassResult:
    d: float
    state: np.ndarray = field(repr=False)
    converged: bool
    restarts: list[RestartResult]

    def __iter__(self):
        yield self.d
        yield self.state


def random_direction(form: MagneticForm, rng: np.random.Generator, modes: int = 8) -> np.ndarray:
    """Random smooth complex state vanishing at the boundary."""
    g = form.grid
    xi = (g.nodes - g.a_dom) / (g.b_dom - g.a_dom)
    k = np.arange(1, modes + 1)
    coef = (rng.standard_normal(modes) + 1j * rng.standard_normal(modes)) / k
    coef[0] += 2.0
    return np.sin(np.pi * np.outer(xi, k)) @ coef


def nehari_descent(form, params, w0, max_iters=5000, tol=1e-6, index=0) -> RestartResult:
    """Projected gradient descent on the Nehari manifold.

    Each iterate is ``project(w - eta grad_J(w))`` with ``eta`` backtracked
    from 1 by halving until the energy decreases sufficiently.  Stops once
    ``|grad_J|_W < tol (1 + |J|)``; the relative form keeps the test above
    the roundoff floor of ``J`` for large well depths.
    """
    _, w = nehari_project(form, params, w0)
    Jw = energy_J(form, params, w)
    J0 = Jw
    gn = math.inf
    for it in range(max_iters + 1):
        g = grad_J(form, params, w)
        gn = math.sqrt(l2_norm_sq(form, g))
        if gn < tol * (1.0 + abs(Jw)):
            return RestartResult(index, Jw, True, it, gn, J0, w)
        if it == max_iters:
            break
        eta = 1.0
        while eta > 1e-14:
            try:
                _, cand = nehari_project(form, params, w - eta * g)
                Jc = energy_J(form, params, cand)
            except NehariError:
                Jc = math.inf
            if Jc <= Jw - 1e-4 * eta * gn**2:
                break
            eta *= 0.5
        else:
            break
        w, Jw = cand, Jc
    return RestartResult(index, Jw, False, it, gn, J0, w)


def mountain_pass_d(form: MagneticForm, params: ModelParams, restarts: int = 8,
                    max_iters: int = 5000, tol: float = 1e-6, seed: int = 0,
                    workers: int = 1, initial=None) -> MountainPassResult:
    """Multi-start upper estimate of ``d = inf {J(u) : I(u) = 0, u != 0}``.

    Restarts are seeded from ``seed`` and merged by lowest energy, ties going
    to the lowest restart index.  Raises :class:`MountainPassError` when no
    restart reaches the gradient tolerance.
    """
    from kff.rng import generator

    starts = []
    for k in range(restarts):
        if initial is not None and k == 0:
            starts.append(np.asarray(initial, dtype=complex))
        else:
            starts.append(random_direction(form, generator(seed, "mountain_pass", k)))

    def run(k):
        return nehari_descent(form, params, starts[k], max_iters, tol, index=k)

    if workers > 1 and restarts > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(restarts)))
    else:
        results = [run(k) for k in range(restarts)]

    good = [r for r in results if r.converged]
    pool_ = good or results
    best = min(pool_, key=lambda r: (r.J, r.index))
    out = MountainPassResult(best.J, fix_gauge(best.state), bool(good), results)
    if not good:
        raise MountainPassError("no restart reached the gradient tolerance", partial=out)
    return out


# reports and classification


@dataclass
class EnergyReport:
    t: float
    J: float
    I: float
    norm_x0a_sq: float
    norm_l2_sq: float
    ut_l2: float = math.nan
    dual_residual_bound: float = math.nan
    dt: float = math.nan


def energy_report(form, params, u, t=0.0, ut_l2=math.nan, lam1=None, dt=math.nan) -> EnergyReport:
    u = _vec(form, u)
    Hu, B, r = _parts(form, params, u)
    J = 0.5 * params.Mcal(B) - float(np.sum(form.weights * params.F(r)))
    I = params.M(B) * B - float(np.sum(form.weights * params.f(r) * r**2))
    dual = ut_l2 / math.sqrt(lam1) if lam1 else math.nan
    return EnergyReport(float(t), J, I, B, l2_norm_sq(form, u), float(ut_l2), dual, float(dt))


@dataclass
class WellClassification:
    verdict: str
    J0: float
    I0: float
    d_estimate: float

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "J0": self.J0, "I0": self.I0, "d_estimate": self.d_estimate}


def classify(form: MagneticForm, params: ModelParams, u0, d_estimate: float,
             tol: float = BOUNDARY_TOL) -> WellClassification:
    """Place ``u0`` in the stable set, the unstable set, or neither.

    ``I`` is compared against ``tol`` times the size of its two terms and
    ``J`` against ``d`` within ``tol (1 + |d|)``; anything within those bands,
    or with ``J >= d``, is ``boundary_or_unknown``.
    """
    u0 = _vec(form, u0)
    if not np.any(u0):
        return WellClassification("stable_set", 0.0, 0.0, float(d_estimate))
    J0 = energy_J(form, params, u0)
    I0 = nehari_I(form, params, u0)
    band_I = tol * _nehari_scale(form, params, u0)
    below = J0 < d_estimate if np.isinf(d_estimate) else J0 < d_estimate - tol * (1.0 + abs(d_estimate))
    if below and I0 > band_I:
        verdict = "stable_set"
    elif below and I0 < -band_I:
        verdict = "unstable_set"
    else:
        verdict = "boundary_or_unknown"
    return WellClassification(verdict, J0, I0, float(d_estimate))
