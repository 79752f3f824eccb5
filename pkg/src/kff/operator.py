"""Discrete magnetic Gagliardo form on X_{0,A} and the induced operator.

The quadratic form is discretized with a punched-hole midpoint rule,

    B(u, v) = sum_{i != j} w_i w_j (u_i - e^{i th_ij} u_j) conj(v_i - e^{i th_ij} v_j) / |x_i - x_j|^(1+2s)
              + 2 sum_i w_i tau(x_i) u_i conj(v_i),

with phase ``th_ij = (x_i - x_j) A((x_i + x_j)/2)``.  ``H`` is the Hermitian
matrix with ``B(u, v) = v^H H u`` and the operator is ``W^{-1} H``.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from kff.grid import Grid

PSD_EPS = 1e-10


@dataclass(frozen=True)
class MagneticPotential:
    """Vector potential ``A``: zero, constant ``c0``, or affine ``c0 + c1 x``."""

    kind: str = "zero"
    c0: float = 0.0
    c1: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "affine"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "zero" and (self.c0 != 0.0 or self.c1 != 0.0):
            raise ValueError("zero potential takes no coefficients")
        if self.kind == "constant" and self.c1 != 0.0:
            raise ValueError("constant potential has no slope")
        if not (np.isfinite(self.c0) and np.isfinite(self.c1)):
            raise ValueError("potential coefficients must be finite")

    @classmethod
    def zero(cls) -> "MagneticPotential":
        return cls("zero")

    @classmethod
    def constant(cls, A0: float) -> "MagneticPotential":
        return cls("constant", float(A0))

    @classmethod
    def affine(cls, c0: float, c1: float) -> "MagneticPotential":
        return cls("affine", float(c0), float(c1))

    @classmethod
    def from_dict(cls, d: dict) -> "MagneticPotential":
        d = dict(d)
        kind = d.pop("kind", "zero")
        if kind == "constant":
            allowed = {"A0"}
        elif kind == "affine":
            allowed = {"c0", "c1"}
        else:
            allowed = set()
        extra = set(d) - allowed
        if extra:
            raise ValueError(f"unknown keys for {kind} potential: {sorted(extra)}")
        if kind == "constant":
            return cls.constant(d.get("A0", 0.0))
        if kind == "affine":
            return cls.affine(d.get("c0", 0.0), d.get("c1", 0.0))
        return cls(kind)

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "A0": self.c0}
        if self.kind == "affine":
            return {"kind": "affine", "c0": self.c0, "c1": self.c1}
        return {"kind": "zero"}

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "constant":
            return np.full_like(x, self.c0)
        return self.c0 + self.c1 * x

    def phase(self, xi, xj):
        """``(xi - xj) A((xi + xj)/2)``; odd under swapping the arguments."""
        return (xi - xj) * self((xi + xj) / 2.0)


@dataclass(frozen=True)
class MagneticForm:
    H: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    grid: Grid
    potential: MagneticPotential

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def W(self) -> np.ndarray:
        return np.diag(self.weights)

    @property
    def is_real(self) -> bool:
        return self.potential.kind == "zero"


def _row_block(grid: Grid, potential: MagneticPotential, r0: int, r1: int) -> np.ndarray:
    x, w = grid.nodes, grid.weights
    xi = x[r0:r1, None]
    dx = xi - x[None, :]
    rows = np.arange(r0, r1)
    dist = np.abs(dx)
    dist[rows - r0, rows] = 1.0
    kern = dist ** (-1.0 - 2.0 * grid.s)
    kern[rows - r0, rows] = 0.0
    wk = w[r0:r1, None] * w[None, :] * kern
    if potential.kind == "zero":
        block = (-2.0 * wk).astype(complex)
    else:
        block = -2.0 * wk * np.exp(1j * potential.phase(xi, x[None, :]))
    diag = 2.0 * w[r0:r1] * (np.sum(w[None, :] * kern, axis=1) + grid.tail[r0:r1])
    block[rows - r0, rows] = diag
    return block


def assemble(
    grid: Grid,
    potential: MagneticPotential | None = None,
    block_rows: int | None = None,
    workers: int = 1,
) -> MagneticForm:
    """Assemble the dense Hermitian matrix of the discrete form.

    Rows are computed in blocks (optionally on a thread pool); the result does
    not depend on the block size or worker count.  Only the upper triangle is
    kept from the row sweep; the lower triangle is its conjugate transpose so
    that Hermiticity is exact.
    """
    potential = potential or MagneticPotential.zero()
    N = grid.N
    block_rows = N if block_rows is None else max(1, int(block_rows))
    starts = list(range(0, N, block_rows))
    spans = [(r0, min(r0 + block_rows, N)) for r0 in starts]
    H = np.empty((N, N), dtype=complex)

    def fill(span):
        r0, r1 = span
        H[r0:r1] = _row_block(grid, potential, r0, r1)

    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, spans))
    else:
        for span in spans:
            fill(span)
    upper = np.triu(H, 1)
    H = upper + upper.conj().T + np.diag(np.diag(H).real)
    H.setflags(write=False)
    return MagneticForm(H, grid.weights, grid, potential)


def _check(form: MagneticForm, u) -> np.ndarray:
    u = np.asarray(u)
    if u.shape != (form.N,):
        raise ValueError(f"state has shape {u.shape}, expected ({form.N},)")
    return u


def apply(form: MagneticForm, u) -> np.ndarray:
    """Discrete magnetic fractional Laplacian ``W^{-1} H u``."""
    u = _check(form, u)
    return form.H @ u / form.weights


def x0a_norm_sq(form: MagneticForm, u) -> float:
    u = _check(form, u)
    val = np.vdot(u, form.H @ u)
    if abs(val.imag) > 1e-12 * abs(val) + 1e-300:
        raise ArithmeticError(f"form value has imaginary part {val.imag!r}")
    return float(val.real)


def scalar_product(form: MagneticForm, u, v) -> float:
    """Real scalar product ``Re(v^H H u)``."""
    u = _check(form, u)
    v = _check(form, v)
    return float(np.vdot(v, form.H @ u).real)


def form_value(grid: Grid, potential: MagneticPotential, u, block_rows: int = 512) -> float:
    """Matrix-free ``B(u, u)`` straight from the double sum.

    Used as an independent route to the assembled matrix and for reference
    values on grids too large to store densely.
    """
    u = np.asarray(u, dtype=complex)
    x, w = grid.nodes, grid.weights
    total = 0.0
    for r0 in range(0, grid.N, block_rows):
        r1 = min(r0 + block_rows, grid.N)
        xi = x[r0:r1, None]
        dist = np.abs(xi - x[None, :])
        rows = np.arange(r0, r1)
        dist[rows - r0, rows] = np.inf
        kern = dist ** (-1.0 - 2.0 * grid.s)
        diff = u[r0:r1, None] - np.exp(1j * potential.phase(xi, x[None, :])) * u[None, :]
        total += float(np.sum(w[r0:r1, None] * w[None, :] * kern * np.abs(diff) ** 2))
    total += 2.0 * float(np.sum(w * grid.tail * np.abs(u) ** 2))
    return total


def dump_operator(form: MagneticForm, path) -> None:
    """Write the upper triangle of ``H`` as CSV rows ``i,j,re,im``."""
    H = form.H
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["i", "j", "re", "im"])
        for i in range(form.N):
            for j in range(i, form.N):
                z = H[i, j]
                writer.writerow([i, j, f"{z.real:.17g}", f"{z.imag:.17g}"])
