"""Power-law nonlinearity and Kirchhoff coefficient, with hypothesis checks.

    f(u) = C u^(p-2),         F(u) = C u^p / p
    M(t) = a + m0 t^(theta-1), Mcal(t) = a t + m0 t^theta / theta
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from kff.operator import MagneticPotential

SAMPLE = np.logspace(-6, 6, 241)


def _nonneg(u, what="argument"):
    arr = np.asarray(u, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError(f"{what} must be nonnegative")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


@dataclass(frozen=True)
class ModelParams:
    s: float
    p: float
    C: float = 1.0
    m0: float = 1.0
    theta: float = 1.5
    mu: float | None = None
    gamma: float | None = None
    a_kirchhoff: float = 0.0
    n: int = 1
    potential: MagneticPotential = field(default_factory=MagneticPotential.zero)

    def __post_init__(self):
        # mu and gamma default to their tightest admissible values
        if self.mu is None:
            object.__setattr__(self, "mu", self.theta)
        if self.gamma is None:
            object.__setattr__(self, "gamma", self.p)
        if self.n != 1:
            raise NotImplementedError("only n = 1 is implemented")
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if self.C < 0 or self.m0 <= 0 or self.a_kirchhoff < 0:
            raise ValueError("need C >= 0, m0 > 0, a_kirchhoff >= 0")
        if self.theta < 1:
            raise ValueError(f"theta must be >= 1, got {self.theta}")
        if self.C > 0 and self.p <= 2:
            raise ValueError(f"p must exceed 2, got {self.p}")

    @property
    def critical_exponent(self) -> float:
        """2_s^* = 2n / (n - 2s), infinite when n <= 2s."""
        if self.n <= 2 * self.s:
            return math.inf
        return 2.0 * self.n / (self.n - 2.0 * self.s)

    @property
    def homogeneous(self) -> bool:
        return self.a_kirchhoff == 0.0

    @property
    def linear_test_mode(self) -> bool:
        """M constant and f = 0: the linear fractional heat flow."""
        return self.theta == 1.0 and self.C == 0.0

    def replace(self, **changes) -> "ModelParams":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(changes)
        return ModelParams(**d)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "potential"}
        d["potential"] = self.potential.to_dict()
        return d

    # nonlinearity

    def f(self, u):
        u = _nonneg(u)
        if self.C == 0.0:
            return _out(np.zeros_like(u))
        return _out(self.C * u ** (self.p - 2.0))

    def F(self, u):
        u = _nonneg(u)
        if self.C == 0.0:
            return _out(np.zeros_like(u))
        return _out(self.C * u**self.p / self.p)

    def df(self, u):
        u = _nonneg(u)
        if self.C == 0.0:
            return _out(np.zeros_like(u))
        with np.errstate(divide="ignore"):
            out = self.C * (self.p - 2.0) * u ** (self.p - 3.0)
        return _out(out)

    # Kirchhoff coefficient

    def M(self, t):
        t = _nonneg(t)
        return _out(self.a_kirchhoff + self.m0 * t ** (self.theta - 1.0))

    def Mcal(self, t):
        t = _nonneg(t)
        return _out(self.a_kirchhoff * t + self.m0 * t**self.theta / self.theta)

    def dM(self, t):
        t = _nonneg(t)
        if self.theta == 1.0:
            return _out(np.zeros_like(t))
        with np.errstate(divide="ignore"):
            out = self.m0 * (self.theta - 1.0) * t ** (self.theta - 2.0)
        return _out(out)


def f_eval(u, params: ModelParams):
    return params.f(u)


def F_eval(u, params: ModelParams):
    return params.F(u)


def M_eval(t, params: ModelParams):
    return params.M(t)


def Mcal_eval(t, params: ModelParams):
    return params.Mcal(t)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    witness: float | None = None


@dataclass
class HypothesisReport:
    checks: list[Check]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"theory_consistent": self.ok, "checks": [asdict(c) for c in self.checks]}


def _first_violation(mask, sample):
    bad = np.flatnonzero(~mask)
    return None if bad.size == 0 else float(sample[bad[0]])


def validate_hypotheses(params: ModelParams, sample=SAMPLE) -> HypothesisReport:
    """Check (F), (M1), (M2), (P) and n > 2s for the concrete model.

    Interval conditions are checked on the parameters; the pointwise
    inequalities are evaluated on a log-spaced sample of ``[1e-6, 1e6]`` and
    the first failing point is reported as the witness.
    """
    P = params
    checks: list[Check] = []
    crit = P.critical_exponent

    def add(name, passed, detail, witness=None):
        checks.append(Check(name, bool(passed), detail, witness))

    add("n>2s", P.n > 2 * P.s, f"n={P.n}, 2s={2 * P.s:g}")
    add("p_range", 2 < P.p < crit, f"need 2 < p={P.p:g} < 2_s^*={crit:g}")
    add("C_positive", P.C > 0, f"C={P.C:g}")
    add("f_C1", P.C == 0 or P.p >= 3, f"f(u)=C u^(p-2) is C^1 on [0,inf) iff p >= 3 (p={P.p:g})")
    add("gamma_ge_p", P.gamma >= P.p, f"gamma={P.gamma:g}, p={P.p:g}")

    u = np.asarray(sample, dtype=float)
    F, f, df = P.F(u), P.f(u), P.df(u)
    up = P.C * u**P.p
    tol = 1e-12
    ok = np.abs(F) <= up * (1 + tol)
    add("F_bound", ok.all(), "|F(u)| <= C u^p", _first_violation(ok, u))
    ok = f * u**2 <= P.p * up * (1 + tol)
    add("f_bound", ok.all(), "f(u) u^2 <= p C u^p", _first_violation(ok, u))
    ok = (P.gamma * F > 0) & (P.gamma * F <= f * u**2 * (1 + tol))
    add("ambrosetti_rabinowitz", ok.all(), "0 < gamma F(u) <= f(u) u^2", _first_violation(ok, u))
    g = u**2 * (u * df - (P.p - 2) * f)
    ok = g >= -tol * np.maximum(u**2 * u * np.abs(df), 1e-300)
    add("f_monotone", ok.all(), "u^2 (u f'(u) - (p-2) f(u)) >= 0", _first_violation(ok, u))

    add("theta_range", 1 < P.theta < crit / 2, f"need 1 < theta={P.theta:g} < 2_s^*/2={crit / 2:g}")
    ok = P.M(u) >= P.m0 * u ** (P.theta - 1) * (1 - tol)
    add("M1_lower", ok.all() and P.m0 > 0, "M(t) >= m0 t^(theta-1)", _first_violation(ok, u))
    add("mu_range", 1 < P.mu < crit / 2, f"need 1 < mu={P.mu:g} < 2_s^*/2={crit / 2:g}")
    ok = P.mu * P.Mcal(u) >= P.M(u) * u * (1 - tol)
    add("M2", ok.all(), "mu Mcal(t) >= M(t) t", _first_violation(ok, u))
    add("P", 2 * max(P.theta, P.mu) < P.p < crit,
        f"need 2 max(theta, mu)={2 * max(P.theta, P.mu):g} < p={P.p:g} < {crit:g}")
    return HypothesisReport(checks)
