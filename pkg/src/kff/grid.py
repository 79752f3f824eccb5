"""Uniform midpoint grid on a bounded interval, with the exterior tail."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def exterior_tail(x, a_dom: float, b_dom: float, s: float):
    """Integral of |x - y|^(-1-2s) over y outside (a_dom, b_dom).

    Closed form ``((x - a)^(-2s) + (b - x)^(-2s)) / (2s)``.  Accepts a scalar
    or an array of points, all of which must lie strictly inside the interval.
    """
    xa = np.asarray(x, dtype=float)
    if np.any(xa <= a_dom) or np.any(xa >= b_dom):
        raise ValueError("exterior tail diverges on or outside the boundary")
    tau = ((xa - a_dom) ** (-2.0 * s) + (b_dom - xa) ** (-2.0 * s)) / (2.0 * s)
    return float(tau) if tau.ndim == 0 else tau


@dataclass(frozen=True)
class Grid:
    a_dom: float
    b_dom: float
    N: int
    s: float
    n: int = 1
    nodes: np.ndarray = field(repr=False, compare=False, default=None)
    weights: np.ndarray = field(repr=False, compare=False, default=None)
    tail: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def h(self) -> float:
        return (self.b_dom - self.a_dom) / self.N

    @property
    def is_symmetric(self) -> bool:
        return self.a_dom == -self.b_dom


def build_grid(a_dom: float, b_dom: float, N: int, s: float, n: int = 1) -> Grid:
    """Midpoint grid with ``N`` interior nodes on ``(a_dom, b_dom)``.

    Nodes are ``a_dom + (i + 1/2) h`` so that every node stays away from the
    boundary, where the exterior tail is singular.  Only ``n = 1`` is
    implemented; the dimension tag is kept so that other domains can be added
    behind the same signature.
    """
    if n != 1:
        raise NotImplementedError("only one-dimensional domains are implemented")
    if not 0.0 < s < 1.0:
        raise ValueError(f"fractional order s must lie in (0, 1), got {s}")
    if int(N) != N or N < 2:
        raise ValueError(f"need at least two interior nodes, got N={N}")
    if not a_dom < b_dom:
        raise ValueError(f"degenerate interval ({a_dom}, {b_dom})")
    N = int(N)
    h = (b_dom - a_dom) / N
    nodes = a_dom + (np.arange(N) + 0.5) * h
    weights = np.full(N, h)
    tail = exterior_tail(nodes, a_dom, b_dom, s)
    for arr in (nodes, weights, tail):
        arr.setflags(write=False)
    return Grid(float(a_dom), float(b_dom), N, float(s), n, nodes, weights, tail)
