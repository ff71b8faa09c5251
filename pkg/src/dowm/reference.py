"""Ground-truth solutions sampled on the fine grid x_m = m / 2^L."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .problem import ProblemSpec
from .quadrature import CellTables, FineGrid, build_tables, compensated_prefix

__all__ = [
    "ReferenceSolution",
    "generic_reference",
    "closed_form_reference",
    "self_convergence_reference",
    "dump_reference",
    "PROVENANCES",
]

PROVENANCES = ("closed_form", "integral_oracle", "self_convergence")


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    x: np.ndarray
    u: np.ndarray
    du: np.ndarray
    flux: np.ndarray
    provenance: str
    K: float | None = None

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def level(self) -> int:
        return int(round(np.log2(self.x.size - 1)))

    def at_level(self, level: int) -> "ReferenceSolution":
        """Restrict the samples to the coarser grid i / 2^level."""
        if level > self.level:
            raise ValueError(f"reference level {self.level} is coarser than {level}")
        step = 2 ** (self.level - level)
        return ReferenceSolution(
            self.x[::step], self.u[::step], self.du[::step], self.flux[::step], self.provenance, self.K
        )


def generic_reference(
    problem: ProblemSpec,
    level: int = 18,
    order: int = 3,
    tables: CellTables | None = None,
) -> ReferenceSolution:
    """Integral representation u(x) = int_0^x (F + K)/a with F(x) = -int_0^x f.

    K = -(int_0^1 F/a) / (int_0^1 1/a) enforces u(1) = 0.
    """
    if tables is None:
        tables = build_tables(problem, FineGrid(level, order))
    grid = tables.grid
    F_nodes = -(tables.Pf[:-1, None] + tables.f_partial)
    F_over_a = np.sum(F_nodes * tables.inv_a_nodes * grid.weights, axis=1)
    total_inv_a = tables.PinvA[-1]
    if not total_inv_a > 0:
        raise ValueError("integral of 1/a is not positive; tables are corrupt")
    K = -compensated_prefix(F_over_a)[-1] / total_inv_a

    u = compensated_prefix(F_over_a + K * tables.IinvA)
    u[0] = 0.0
    flux = -tables.Pf + K
    du = flux * tables.inv_a_grid
    return ReferenceSolution(grid.boundaries, u, du, flux, "integral_oracle", float(K))


def closed_form_reference(problem: ProblemSpec, level: int | None = None) -> ReferenceSolution:
    if problem.exact is None:
        raise ValueError(f"{problem.name} has no exact solution attached")
    level = problem.fine_level if level is None else level
    x = np.arange(2**level + 1) / 2**level
    exact = problem.exact
    return ReferenceSolution(x, exact.u(x), exact.du(x), exact.flux(x), "closed_form")


def self_convergence_reference(
    problem: ProblemSpec,
    n: int,
    tables: CellTables | None = None,
) -> ReferenceSolution:
    """The multiscale solution at level n + 1 stands in for u."""
    from .assembly import solve_multiscale

    sol, _ = solve_multiscale(problem, n + 1, tables=tables)
    return ReferenceSolution(sol.x, sol.u, sol.du, sol.flux, "self_convergence")


def dump_reference(ref: ReferenceSolution, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "u", "du", "a_du"])
        for row in zip(ref.x, ref.u, ref.du, ref.flux):
            if all(np.isfinite(row)):
                writer.writerow([f"{v:.17g}" for v in row])
