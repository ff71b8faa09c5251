"""Dyadic fine grid and per-cell integral tables.

Every integral the solver needs is reduced to sums over the 2^L cells of a
uniform fine grid, each integrated with a composite Gauss-Legendre rule.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .problem import ProblemSpec

__all__ = [
    "FineGrid",
    "CellTables",
    "build_tables",
    "interval_integral",
    "compensated_prefix",
    "dump_tables",
    "QUAD_ORDERS",
]

QUAD_ORDERS = (1, 2, 3, 5)


@dataclass(frozen=True)
class FineGrid:
    level: int = 14
    order: int = 3

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("fine level must be nonnegative")
        if self.order not in QUAD_ORDERS:
            raise ValueError(f"quadrature order must be one of {QUAD_ORDERS}")

    @property
    def n_cells(self) -> int:
        return 2**self.level

    @property
    def h(self) -> float:
        return 2.0**-self.level

    @cached_property
    def reference_rule(self):
        """Gauss-Legendre nodes and weights on [0, 1]."""
        s, w = np.polynomial.legendre.leggauss(self.order)
        return 0.5 * (s + 1.0), 0.5 * w

    @cached_property
    def boundaries(self):
        return np.arange(self.n_cells + 1) * self.h

    @cached_property
    def nodes(self):
        s, _ = self.reference_rule
        return self.boundaries[:-1, None] + self.h * s[None, :]

    @cached_property
    def weights(self):
        _, w = self.reference_rule
        return self.h * w

    def partial_integrals(self, func):
        """For each node t in cell c, the integral of ``func`` from the cell's left edge to t."""
        s, w = self.reference_rule
        left = self.boundaries[:-1, None, None]
        offset = self.h * s[None, :, None]
        sub = left + offset * s[None, None, :]
        vals = func(sub)
        return np.sum(vals * w[None, None, :], axis=2) * offset[..., 0]


def compensated_prefix(values) -> np.ndarray:
    """Prefix sums [0, v0, v0+v1, ...] accumulated left to right with Neumaier compensation."""
    values = np.asarray(values, dtype=float)
    out = np.empty(values.size + 1)
    out[0] = 0.0
    total = 0.0
    comp = 0.0
    for k, v in enumerate(values.tolist(), start=1):
        t = total + v
        if abs(total) >= abs(v):
            comp += (total - t) + v
        else:
            comp += (v - t) + total
        total = t
        out[k] = total + comp
    return out


@dataclass(frozen=True, eq=False)
class CellTables:
    """Per-cell integrals of a, 1/a, 1/a^2, f, x f, f^2 with prefix arrays and node data."""

    problem: ProblemSpec
    grid: FineGrid
    Ia: np.ndarray
    IinvA: np.ndarray
    IinvA2: np.ndarray
    If: np.ndarray
    Ixf: np.ndarray
    If2: np.ndarray
    PinvA: np.ndarray
    Pa: np.ndarray
    Pf: np.ndarray
    a_nodes: np.ndarray
    inv_a_nodes: np.ndarray
    f_nodes: np.ndarray
    # integral of 1/a (resp. f) from the cell's left edge to each node
    inv_a_partial: np.ndarray
    f_partial: np.ndarray
    # pointwise values at x_i = i 2^-L, half-open convention, left limit at x = 1
    a_grid: np.ndarray
    inv_a_grid: np.ndarray

    @property
    def level(self) -> int:
        return self.grid.level

    @property
    def n_cells(self) -> int:
        return self.grid.n_cells

    def coarse(self, name: str, n: int) -> np.ndarray:
        """Sum a per-cell table over the 2^n coarse cells."""
        if n > self.level:
            raise ValueError(f"coarse level {n} exceeds fine level {self.level}")
        return getattr(self, name).reshape(2**n, -1).sum(axis=1)

    @property
    def f_norm(self) -> float:
        return float(np.sqrt(np.sum(self.If2)))


_KINDS = {"a": ("Ia", "Pa"), "1/a": ("IinvA", "PinvA"), "f": ("If", "Pf"), "1/a^2": ("IinvA2", None), "xf": ("Ixf", None)}


def build_tables(problem: ProblemSpec, grid: FineGrid | None = None) -> CellTables:
    grid = FineGrid(problem.fine_level) if grid is None else grid
    if grid.level < problem.resolution:
        raise ValueError(
            f"fine level {grid.level} is below the data resolution level {problem.resolution}"
        )
    coef, src = problem.coefficient, problem.source
    x = grid.nodes
    wts = grid.weights[None, :]
    with np.errstate(divide="ignore", over="ignore"):
        a = coef(x)
        inv_a = coef.inverse(x)
        f = src(x)
    for label, vals in (("a", a), ("1/a", inv_a), ("f", f)):
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"non-finite node value of {label}")
    if np.any(a <= 0):
        raise ValueError("coefficient must be strictly positive at every quadrature node")

    Ia = np.sum(a * wts, axis=1)
    IinvA = np.sum(inv_a * wts, axis=1)
    IinvA2 = np.sum(inv_a**2 * wts, axis=1)
    If = np.sum(f * wts, axis=1)
    Ixf = np.sum(x * f * wts, axis=1)
    If2 = np.sum(f**2 * wts, axis=1)

    xb = grid.boundaries
    with np.errstate(divide="ignore"):
        inv_a_grid = coef.inverse(xb)
        a_grid = 1.0 / inv_a_grid

    return CellTables(
        problem=problem,
        grid=grid,
        Ia=Ia,
        IinvA=IinvA,
        IinvA2=IinvA2,
        If=If,
        Ixf=Ixf,
        If2=If2,
        PinvA=compensated_prefix(IinvA),
        Pa=compensated_prefix(Ia),
        Pf=compensated_prefix(If),
        a_nodes=a,
        inv_a_nodes=inv_a,
        f_nodes=f,
        inv_a_partial=grid.partial_integrals(coef.inverse),
        f_partial=grid.partial_integrals(src),
        a_grid=a_grid,
        inv_a_grid=inv_a_grid,
    )


def interval_integral(tables: CellTables, kind: str, start: int, stop: int) -> float:
    """Integral of ``kind`` over fine cells [start, stop)."""
    if kind not in _KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {sorted(_KINDS)}")
    if not 0 <= start < stop <= tables.n_cells:
        raise ValueError(f"empty or out-of-range cell range [{start}, {stop})")
    cell_name, prefix_name = _KINDS[kind]
    if prefix_name is None:
        return float(np.sum(getattr(tables, cell_name)[start:stop]))
    prefix = getattr(tables, prefix_name)
    return float(prefix[stop] - prefix[start])


def dump_tables(tables: CellTables, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cell", "Ia", "IinvA", "IinvA2", "If", "Ixf"])
        for c in range(tables.n_cells):
            writer.writerow(
                [c]
                + [
                    f"{v:.17g}"
                    for v in (tables.Ia[c], tables.IinvA[c], tables.IinvA2[c], tables.If[c], tables.Ixf[c])
                ]
            )
