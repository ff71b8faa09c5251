"""Error norms, convergence tables and checks against the a priori bounds."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .assembly import solve_multiscale, solve_standard_fem
from .problem import ProblemSpec, coefficient_range
from .quadrature import CellTables, FineGrid, build_tables
from .reference import ReferenceSolution, closed_form_reference, generic_reference

__all__ = [
    "Errors",
    "ErrorRow",
    "FEMRow",
    "BoundCheck",
    "error_norms",
    "order",
    "convergence_sweep",
    "fem_sweep",
    "check_bounds",
    "interpolation_deviation",
    "format_sci",
    "write_table",
    "write_fem_table",
    "NOISE_FLOOR",
]

NOISE_FLOOR = 1e-12
ERROR_NAMES = ("l2_u", "l2_du", "l2_flux", "linf_u", "linf_du", "linf_flux")


class Errors(NamedTuple):
    l2_u: float
    l2_du: float
    l2_flux: float
    linf_u: float
    linf_du: float
    linf_flux: float


def _rel_l2(err, ref, what):
    denom = np.linalg.norm(ref)
    if denom == 0:
        raise ValueError(f"reference {what} is identically zero")
    return float(np.linalg.norm(err) / denom)


def error_norms(solution, reference, exclude_x0: bool = False) -> Errors:
    """Relative l2 and absolute l-infinity errors over the samples x_i = i/N.

    With ``exclude_x0`` the i = 0 sample is left out of both flux norms.
    """
    if solution.u.shape != reference.u.shape:
        raise ValueError("solution and reference are sampled on different grids")
    eu = solution.u - reference.u
    edu = solution.du - reference.du
    s = slice(1, None) if exclude_x0 else slice(None)
    eflux = solution.flux[s] - reference.flux[s]
    return Errors(
        _rel_l2(eu, reference.u, "u"),
        _rel_l2(edu, reference.du, "u'"),
        _rel_l2(eflux, reference.flux[s], "a u'"),
        float(np.max(np.abs(eu))),
        float(np.max(np.abs(edu))),
        float(np.max(np.abs(eflux))),
    )


def order(coarse: float | None, fine: float) -> float | None:
    """log2 of the error ratio between successive levels; None below the noise floor."""
    if coarse is None or coarse <= NOISE_FLOOR or fine <= NOISE_FLOOR:
        return None
    return math.log2(coarse / fine)


@dataclass
class ErrorRow:
    n: int
    errors: Errors
    kappa: float
    ratio: float
    orders: dict = field(default_factory=dict)
    reference: str = "closed_form"

    @property
    def H(self) -> float:
        return 2.0**-self.n


@dataclass
class FEMRow:
    n: int
    m: int
    errors: Errors
    kappa: float
    ratio: float


def _fill_orders(rows):
    prev = None
    for row in rows:
        for name in ERROR_NAMES:
            e_prev = getattr(prev.errors, name) if prev is not None and prev.n == row.n - 1 else None
            row.orders[name] = order(e_prev, getattr(row.errors, name))
        prev = row
    return rows


def _resolve_reference(problem, tables, kind):
    if kind == "auto":
        kind = "exact" if problem.exact is not None else "self"
    if kind == "exact":
        return kind, closed_form_reference(problem, tables.level)
    if kind == "oracle":
        return kind, generic_reference(problem, tables=tables)
    if kind == "self":
        return kind, None
    raise ValueError(f"unknown reference kind {kind!r}")


def convergence_sweep(
    problem: ProblemSpec,
    n_min: int,
    n_max: int,
    tables: CellTables | None = None,
    grid: FineGrid | None = None,
    reference: str = "auto",
    exclude_x0: bool | None = None,
) -> list[ErrorRow]:
    """One ErrorRow per coarse level n_min..n_max, sharing a single set of cell tables.

    ``reference`` is "exact", "oracle", "self" (level n+1 as reference) or
    "auto" (exact when available, else self).
    """
    if not 1 <= n_min <= n_max:
        raise ValueError(f"invalid level range {n_min}..{n_max}")
    if tables is None:
        tables = build_tables(problem, grid)
    if exclude_x0 is None:
        exclude_x0 = problem.exclude_x0
    kind, ref = _resolve_reference(problem, tables, reference)
    top = n_max + 1 if kind == "self" else n_max
    if top > tables.level:
        raise ValueError(f"level {top} exceeds fine level {tables.level}")
    a_min, a_max = coefficient_range(problem, tables.level)

    solutions = {}
    for n in range(n_min, top + 1):
        solutions[n] = solve_multiscale(problem, n, tables=tables)

    rows = []
    for n in range(n_min, n_max + 1):
        sol, system = solutions[n]
        target = solutions[n + 1][0] if kind == "self" else ref
        rows.append(
            ErrorRow(
                n=n,
                errors=error_norms(sol, target, exclude_x0),
                kappa=system.kappa,
                ratio=a_max / a_min,
                reference={"exact": "closed_form", "oracle": "integral_oracle", "self": "self_convergence"}[kind],
            )
        )
    return _fill_orders(rows)


def fem_sweep(
    problem: ProblemSpec,
    n_min: int,
    n_max: int,
    tables: CellTables | None = None,
    grid: FineGrid | None = None,
    same_level: bool = False,
    reference: str = "auto",
    exclude_x0: bool | None = None,
) -> list[FEMRow]:
    """P1 FEM errors; level n+1 pairs with multiscale level n (equal unknown counts)."""
    if not 1 <= n_min <= n_max:
        raise ValueError(f"invalid level range {n_min}..{n_max}")
    if tables is None:
        tables = build_tables(problem, grid)
    if exclude_x0 is None:
        exclude_x0 = problem.exclude_x0
    shift = 0 if same_level else 1
    if reference == "auto":
        reference = "exact" if problem.exact is not None else "oracle"
    kind, ref = _resolve_reference(problem, tables, reference)
    if kind == "self":
        raise ValueError("FEM comparison needs an exact or oracle reference")
    a_min, a_max = coefficient_range(problem, tables.level)
    rows = []
    for n in range(n_min, n_max + 1):
        fem = solve_standard_fem(problem, n + shift, tables)
        rows.append(FEMRow(n, n + shift, error_norms(fem, ref, exclude_x0), fem.kappa, a_max / a_min))
    return rows


@dataclass(frozen=True)
class BoundCheck:
    energy_error: float
    energy_bound: float
    l2_error: float
    l2_bound: float
    slack: float = 1e-6

    @property
    def energy_ok(self) -> bool:
        return self.energy_error <= self.energy_bound * (1 + self.slack)

    @property
    def l2_ok(self) -> bool:
        return self.l2_error <= self.l2_bound * (1 + self.slack)

    @property
    def passed(self) -> bool:
        return self.energy_ok and self.l2_ok


def check_bounds(
    problem: ProblemSpec,
    solution,
    reference: ReferenceSolution,
    tables: CellTables,
    n: int,
) -> BoundCheck:
    """Discrete energy and L2 errors against C1 H and C2 H^2.

    C1 = 2 ||f|| / sqrt(a_min), C2 = 4 ||f|| / a_min with a_min sampled on the grid.
    """
    H = 2.0**-n
    N = solution.u.size - 1
    a_min, _ = coefficient_range(problem, tables.level)
    f_norm = tables.f_norm
    s = slice(1, None) if problem.exclude_x0 else slice(None)
    a = tables.a_grid[s]
    energy = math.sqrt(float(np.sum(a * (reference.du[s] - solution.du[s]) ** 2)) / N)
    l2 = math.sqrt(float(np.sum((reference.u - solution.u) ** 2)) / N)
    return BoundCheck(energy, 2 * f_norm / math.sqrt(a_min) * H, l2, 4 * f_norm / a_min * H**2)


def interpolation_deviation(solution, reference, n: int) -> float:
    """max |u_H(i/2^n) - u(i/2^n)| over the 2^n + 1 coarse nodes."""
    N = solution.u.size - 1
    step = N // 2**n
    if step * 2**n != N:
        raise ValueError(f"grid of {N} cells does not contain the level-{n} nodes")
    return float(np.max(np.abs(solution.u[::step] - reference.u[::step])))


def format_sci(value: float) -> str:
    """4 significant digits in the 2.7680E-04 style."""
    if not math.isfinite(value):
        raise ValueError(f"non-finite table value {value}")
    return f"{value:.4E}"


def _fmt_order(value):
    return "" if value is None else f"{value:.2f}"


def _h_label(n: int) -> str:
    return f"1/2^{n}"


def write_table(rows: list[ErrorRow], path, norm: str = "l2"):
    """Columns H, e_u, ord, e_du, ord, e_flux, ord, kappa, ratio."""
    if norm not in ("l2", "linf"):
        raise ValueError("norm must be 'l2' or 'linf'")
    names = [f"{norm}_u", f"{norm}_du", f"{norm}_flux"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["H", f"e_{norm}_u", "ord", f"e_{norm}_du", "ord", f"e_{norm}_flux", "ord", "kappa", "ratio"]
        )
        for row in rows:
            cells = [_h_label(row.n)]
            for name in names:
                cells += [format_sci(getattr(row.errors, name)), _fmt_order(row.orders.get(name))]
            cells += [format_sci(row.kappa), format_sci(row.ratio)]
            writer.writerow(cells)


def write_fem_table(rows: list[FEMRow], path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["H", "h"] + [f"e_{name}" for name in ERROR_NAMES] + ["kappa", "ratio"])
        for row in rows:
            writer.writerow(
                [_h_label(row.n), _h_label(row.m)]
                + [format_sci(v) for v in row.errors]
                + [format_sci(row.kappa), format_sci(row.ratio)]
            )
