"""Derivative-orthogonal wavelet system on a dyadic coarse mesh H = 2^-n.

The basis consists of the hat phi(2x-1), the wavelets psi(2^j x - k) for
j = 1..n-1, and one special function S_i per coarse cell with
S_i' = 1/a - w_i on that cell. Every function is scaled so its derivative
has unit L2 norm, which makes the derivatives mutually orthonormal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .quadrature import CellTables
from .problem import ProblemSpec

__all__ = [
    "BasisIndex",
    "MultiscaleSpace",
    "weight",
    "build_space",
    "regular_indices",
    "eval_regular",
    "eval_regular_deriv",
    "eval_special",
    "eval_special_deriv",
    "regular_derivative_matrix",
    "decompose_piecewise_constant",
    "reconstruct_piecewise_constant",
    "DROP_TOL",
]

DROP_TOL = 1e-14


class BasisIndex(NamedTuple):
    """``kind`` is "scale", "wavelet" (uses j, k) or "special" (cell index in k)."""

    kind: str
    j: int = 0
    k: int = 0

    def label(self) -> str:
        if self.kind == "scale":
            return "phi"
        if self.kind == "wavelet":
            return f"psi_{self.j}_{self.k}"
        return f"S_{self.k}"


def regular_indices(n: int) -> list[BasisIndex]:
    out = [BasisIndex("scale")]
    for j in range(1, n):
        out.extend(BasisIndex("wavelet", j, k) for k in range(2**j))
    return out


def _regular_norm2(index: BasisIndex) -> float:
    if index.kind == "scale":
        return 4.0
    if index.kind == "wavelet":
        return 2.0 ** (index.j + 2)
    raise ValueError("special functions have problem-dependent norms")


def _support(index: BasisIndex):
    if index.kind == "scale":
        return 0.0, 1.0
    return index.k / 2**index.j, (index.k + 1) / 2**index.j


def eval_regular(index: BasisIndex, x):
    """Value of phi(2x-1) or psi(2^j x - k) (not normalized)."""
    if index.kind == "special":
        raise ValueError("use eval_special for special functions")
    x = np.asarray(x, dtype=float)
    lo, hi = _support(index)
    t = (x - lo) / (hi - lo)
    return np.where((t >= 0) & (t <= 1), 1.0 - np.abs(2.0 * t - 1.0), 0.0)


def eval_regular_deriv(index: BasisIndex, x):
    """Derivative with the half-open convention: +slope on [lo, mid), -slope on [mid, hi)."""
    if index.kind == "special":
        raise ValueError("use eval_special_deriv for special functions")
    x = np.asarray(x, dtype=float)
    lo, hi = _support(index)
    mid = 0.5 * (lo + hi)
    slope = 2.0 / (hi - lo)
    return np.where((x >= lo) & (x < mid), slope, np.where((x >= mid) & (x < hi), -slope, 0.0))


def regular_derivative_matrix(n: int, normalized: bool = True) -> np.ndarray:
    """D[c, p] = derivative of regular function p on coarse cell c (2^n x (2^n - 1))."""
    indices = regular_indices(n)
    mids = (np.arange(2**n) + 0.5) / 2**n
    D = np.empty((2**n, len(indices)))
    for p, idx in enumerate(indices):
        D[:, p] = eval_regular_deriv(idx, mids)
        if normalized:
            D[:, p] /= np.sqrt(_regular_norm2(idx))
    return D


@dataclass(frozen=True, eq=False)
class MultiscaleSpace:
    n: int
    indices: tuple
    weights: np.ndarray  # w_i for every coarse cell
    special_norm2: np.ndarray  # ||S_i'||^2 for every coarse cell
    kept: np.ndarray  # coarse cells whose special survives
    D: np.ndarray  # normalized regular derivatives per coarse cell
    nodal: np.ndarray  # normalized regular values at the 2^n + 1 coarse nodes
    special_values: np.ndarray  # S_i at the fine boundaries of cell i, shape (2^n, 2^(L-n) + 1)
    level: int

    @property
    def H(self) -> float:
        return 2.0**-self.n

    @property
    def M(self) -> int:
        return len(self.indices)

    @property
    def n_regular(self) -> int:
        return self.D.shape[1]

    @property
    def special_cells(self) -> np.ndarray:
        return np.flatnonzero(self.kept)

    @property
    def dropped(self) -> np.ndarray:
        return np.flatnonzero(~self.kept)

    def norm(self, p: int) -> float:
        idx = self.indices[p]
        if idx.kind == "special":
            return float(np.sqrt(self.special_norm2[idx.k]))
        return float(np.sqrt(_regular_norm2(idx)))


def weight(tables: CellTables, n: int, i: int) -> float:
    """w_i = 2^n * integral of 1/a over coarse cell i."""
    if not 0 <= i < 2**n:
        raise ValueError(f"coarse cell {i} out of range for n={n}")
    per = 2 ** (tables.level - n)
    return 2.0**n * float(np.sum(tables.IinvA[i * per : (i + 1) * per]))


def build_space(problem: ProblemSpec, tables: CellTables, n: int) -> MultiscaleSpace:
    if n < 1:
        raise ValueError("coarse level n must be at least 1")
    if n > tables.level:
        raise ValueError(f"coarse level {n} exceeds fine level {tables.level}")
    if tables.problem is not problem:
        raise ValueError("tables were built for a different problem")
    per = 2 ** (tables.level - n)
    H = 2.0**-n
    w = tables.coarse("IinvA", n) / H

    # ||S_i'||^2 directly from node values; the expanded form IinvA2 - w^2 H cancels badly
    inv_nodes = tables.inv_a_nodes.reshape(2**n, per, -1)
    dev = inv_nodes - w[:, None, None]
    s2 = np.sum(dev**2 * tables.grid.weights[None, None, :], axis=(1, 2))
    scale = np.maximum(1.0, tables.coarse("IinvA2", n))
    kept = s2 > DROP_TOL * scale

    # S_i at fine boundaries: running integral of (1/a - w_i) from the cell's left edge
    steps = tables.IinvA.reshape(2**n, per) - w[:, None] * tables.grid.h
    special_values = np.zeros((2**n, per + 1))
    special_values[:, 1:] = np.cumsum(steps, axis=1)
    special_values[:, -1] = 0.0

    D = regular_derivative_matrix(n)
    nodal = np.zeros((2**n + 1, D.shape[1]))
    nodal[1:] = H * np.cumsum(D, axis=0)
    nodal[-1] = 0.0

    indices = regular_indices(n) + [BasisIndex("special", 0, int(i)) for i in np.flatnonzero(kept)]
    return MultiscaleSpace(
        n=n,
        indices=tuple(indices),
        weights=w,
        special_norm2=s2,
        kept=kept,
        D=D,
        nodal=nodal,
        special_values=special_values,
        level=tables.level,
    )


def eval_special(tables: CellTables, space: MultiscaleSpace, i: int, x):
    """S_i at fine-cell boundaries (not normalized)."""
    x = np.asarray(x, dtype=float)
    m = x * tables.n_cells
    mi = np.rint(m).astype(np.int64)
    if np.any(np.abs(m - mi) > 1e-9) or np.any((mi < 0) | (mi > tables.n_cells)):
        raise ValueError("x must be a fine-grid boundary point in [0, 1]")
    per = 2 ** (tables.level - space.n)
    local = mi - i * per
    inside = (local >= 0) & (local <= per)
    return np.where(inside, space.special_values[i][np.clip(local, 0, per)], 0.0)


def eval_special_deriv(problem: ProblemSpec, space: MultiscaleSpace, i: int, x):
    """S_i'(x) = 1/a(x) - w_i on [i H, (i+1) H), zero elsewhere."""
    x = np.asarray(x, dtype=float)
    lo, hi = i * space.H, (i + 1) * space.H
    inside = (x >= lo) & (x < hi)
    with np.errstate(divide="ignore"):
        vals = problem.coefficient.inverse(x) - space.weights[i]
    return np.where(inside, vals, 0.0)


def decompose_piecewise_constant(values):
    """Expand a piecewise constant on 2^n cells in {1, phi(2x-1)', psi(2^j x-k)'}.

    Returns ``(c0, c1, coeffs)`` with ``coeffs[(j, k)]`` the wavelet-derivative
    coefficients.
    """
    p = np.asarray(values, dtype=float)
    size = p.size
    n = int(np.log2(size)) if size > 0 else -1
    if size == 0 or 2**n != size:
        raise ValueError(f"length {size} is not a power of two")
    c0 = float(p.mean())
    if n == 0:
        return c0, 0.0, {}
    D = regular_derivative_matrix(n, normalized=False)
    H = 2.0**-n
    proj = H * (p @ D)
    c1 = proj[0] / 4.0
    coeffs = {}
    for col, idx in enumerate(regular_indices(n)[1:], start=1):
        coeffs[(idx.j, idx.k)] = proj[col] / 2.0 ** (idx.j + 2)
    return c0, float(c1), coeffs


def reconstruct_piecewise_constant(c0, c1, coeffs, n: int) -> np.ndarray:
    if n == 0:
        return np.array([c0])
    D = regular_derivative_matrix(n, normalized=False)
    out = c0 + c1 * D[:, 0]
    for col, idx in enumerate(regular_indices(n)[1:], start=1):
        out = out + coeffs.get((idx.j, idx.k), 0.0) * D[:, col]
    return out
