"""Galerkin assembly and solves for the multiscale space, plus the P1 baseline."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .basis import MultiscaleSpace, build_space
from .problem import ProblemSpec
from .quadrature import CellTables, FineGrid, build_tables

__all__ = [
    "SolverError",
    "GalerkinSystem",
    "MultiscaleSolution",
    "FEMSolution",
    "assemble_stiffness",
    "assemble_gram",
    "assemble_load",
    "solve_spd",
    "condition_number",
    "solve_multiscale",
    "solve_standard_fem",
    "dump_system",
    "dump_solution",
]


class SolverError(RuntimeError):
    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


@dataclass(frozen=True, eq=False)
class GalerkinSystem:
    A: np.ndarray
    b: np.ndarray
    d: np.ndarray
    lam_min: float
    lam_max: float
    residual: float

    @property
    def kappa(self) -> float:
        return self.lam_max / self.lam_min


@dataclass(frozen=True, eq=False)
class MultiscaleSolution:
    space: MultiscaleSpace
    d: np.ndarray  # coefficients of the normalized basis
    x: np.ndarray
    u: np.ndarray
    du: np.ndarray
    flux: np.ndarray


@dataclass(frozen=True, eq=False)
class FEMSolution:
    level: int
    nodal: np.ndarray  # values at the 2^m + 1 mesh nodes
    kappa: float
    x: np.ndarray
    u: np.ndarray
    du: np.ndarray
    flux: np.ndarray

    def __call__(self, x):
        return np.interp(x, np.linspace(0.0, 1.0, self.nodal.size), self.nodal)


def _check_consistent(space: MultiscaleSpace, tables: CellTables):
    if space.level != tables.level:
        raise ValueError(f"space built on level {space.level}, tables are level {tables.level}")


def _special_node_dev(space: MultiscaleSpace, tables: CellTables) -> np.ndarray:
    per = 2 ** (tables.level - space.n)
    return tables.inv_a_nodes.reshape(2**space.n, per, -1) - space.weights[:, None, None]


def assemble_stiffness(space: MultiscaleSpace, tables: CellTables) -> np.ndarray:
    """A_pq = integral of a g_p' g_q' for the normalized basis, dense and symmetric."""
    _check_consistent(space, tables)
    n, H = space.n, space.H
    D = space.D
    Ia_c = tables.coarse("Ia", n)
    R = space.n_regular
    cells = space.special_cells
    A = np.zeros((space.M, space.M))
    A[:R, :R] = D.T @ (Ia_c[:, None] * D)
    if cells.size:
        w = space.weights[cells]
        norms = np.sqrt(space.special_norm2[cells])
        # integral over cell i of a (1/a - w_i) = H - w_i * Ia
        cross = D[cells, :].T * ((H - w * Ia_c[cells]) / norms)[None, :]
        A[:R, R:] = cross
        A[R:, :R] = cross.T
        dev = _special_node_dev(space, tables)[cells]
        a_nodes = _coarse_nodes(tables.a_nodes, n)[cells]
        diag = np.sum(a_nodes * dev**2 * tables.grid.weights, axis=(1, 2))
        A[R + np.arange(cells.size), R + np.arange(cells.size)] = diag / norms**2
    return 0.5 * (A + A.T)


def _coarse_nodes(values: np.ndarray, n: int) -> np.ndarray:
    return values.reshape(2**n, -1, values.shape[-1])


def assemble_gram(space: MultiscaleSpace, tables: CellTables) -> np.ndarray:
    """G_pq = integral of g_p' g_q' (unweighted); the identity for a derivative-orthonormal basis."""
    _check_consistent(space, tables)
    n, H = space.n, space.H
    D = space.D
    R = space.n_regular
    cells = space.special_cells
    G = np.zeros((space.M, space.M))
    G[:R, :R] = H * (D.T @ D)
    if cells.size:
        w = space.weights[cells]
        norms = np.sqrt(space.special_norm2[cells])
        mean_dev = tables.coarse("IinvA", n)[cells] - w * H
        cross = D[cells, :].T * (mean_dev / norms)[None, :]
        G[:R, R:] = cross
        G[R:, :R] = cross.T
        dev = _special_node_dev(space, tables)[cells]
        diag = np.sum(dev**2 * tables.grid.weights, axis=(1, 2))
        G[R + np.arange(cells.size), R + np.arange(cells.size)] = diag / norms**2
    return G


def assemble_load(space: MultiscaleSpace, tables: CellTables) -> np.ndarray:
    """b_p = integral of f g_p for the normalized basis."""
    _check_consistent(space, tables)
    n, H = space.n, space.H
    per = 2 ** (tables.level - n)
    If_c = tables.coarse("If", n)
    Ixf_c = tables.coarse("Ixf", n)
    left = np.arange(2**n) * H
    G0 = space.nodal[:-1]
    b = np.empty(space.M)
    R = space.n_regular
    b[:R] = G0.T @ If_c + space.D.T @ (Ixf_c - left * If_c)

    cells = space.special_cells
    if cells.size:
        fine_left = tables.grid.boundaries[:-1].reshape(2**n, per)
        If = tables.If.reshape(2**n, per)
        Ixf = tables.Ixf.reshape(2**n, per)
        S_left = space.special_values[:, :-1]
        fJ = np.sum(tables.f_nodes * tables.inv_a_partial * tables.grid.weights, axis=1).reshape(2**n, per)
        w = space.weights[:, None]
        per_cell = S_left * If + fJ - w * (Ixf - fine_left * If)
        b[R:] = per_cell[cells].sum(axis=1) / np.sqrt(space.special_norm2[cells])
    return b


def solve_spd(A, b, rtol: float = 1e-10) -> tuple[np.ndarray, float]:
    """Cholesky solve of a symmetrically equilibrated system with one refinement step.

    Returns the solution and the relative residual ||A d - b|| / ||b||. Raises
    SolverError when A is not positive definite, or when the normwise backward
    error ||A d - b|| / (||A|| ||d|| + ||b||) exceeds ``rtol``. The relative
    residual itself cannot go below about kappa * eps once d is rounded.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    diag = np.diag(A)
    if np.any(diag <= 0):
        pivot = int(np.flatnonzero(diag <= 0)[0])
        raise SolverError(f"matrix is not SPD (non-positive pivot at index {pivot})", pivot)
    scale = 1.0 / np.sqrt(diag)
    try:
        factor = sla.cho_factor(scale[:, None] * A * scale[None, :], lower=True)
    except np.linalg.LinAlgError as exc:
        match = re.search(r"(?:order |^)(\d+)(?:-th)?", str(exc))
        pivot = int(match.group(1)) - 1 if match else None
        raise SolverError(f"matrix is not SPD (non-positive pivot at index {pivot})", pivot) from exc

    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), 0.0
    d = scale * sla.cho_solve(factor, scale * b)
    d = d + scale * sla.cho_solve(factor, scale * (b - A @ d))
    r = np.linalg.norm(A @ d - b)
    backward = r / (np.linalg.norm(A, 2) * np.linalg.norm(d) + bnorm)
    if backward > rtol:
        raise SolverError(f"backward error {backward:.3e} exceeds {rtol:.1e}")
    return d, float(r / bnorm)


def condition_number(A) -> tuple[float, float, float]:
    """(kappa, lambda_min, lambda_max) of a symmetric positive definite matrix."""
    A = np.asarray(A, dtype=float)
    try:
        lam = np.linalg.eigvalsh(A)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"eigenvalue iteration failed: {exc}") from exc
    lo, hi = float(lam[0]), float(lam[-1])
    if lo <= 0:
        raise SolverError(f"matrix is not positive definite (lambda_min = {lo:.3e})")
    return hi / lo, lo, hi


def _sample(space: MultiscaleSpace, tables: CellTables, d: np.ndarray):
    n = space.n
    per = 2 ** (tables.level - n)
    R = space.n_regular
    dr = d[:R]
    coarse_u = space.nodal @ dr
    slope = space.D @ dr
    x = tables.grid.boundaries
    N = tables.n_cells
    cell = np.minimum(np.arange(N + 1) // per, 2**n - 1)
    u = coarse_u[cell] + slope[cell] * (x - cell * space.H)

    dt = np.zeros(2**n)
    cells = space.special_cells
    dt[cells] = d[R:] / np.sqrt(space.special_norm2[cells])
    spec = np.zeros(N + 1)
    spec[:-1] = (dt[:, None] * space.special_values[:, :-1]).ravel()
    u = u + spec
    u[0] = 0.0
    u[-1] = 0.0

    du = slope[cell] + dt[cell] * (tables.inv_a_grid - space.weights[cell])
    with np.errstate(invalid="ignore"):
        flux = tables.a_grid * du
    return x, u, du, flux


def solve_multiscale(
    problem: ProblemSpec,
    n: int,
    tables: CellTables | None = None,
    grid: FineGrid | None = None,
) -> tuple[MultiscaleSolution, GalerkinSystem]:
    if tables is None:
        tables = build_tables(problem, grid)
    space = build_space(problem, tables, n)
    A = assemble_stiffness(space, tables)
    b = assemble_load(space, tables)
    d, residual = solve_spd(A, b)
    kappa, lo, hi = condition_number(A)
    system = GalerkinSystem(A=A, b=b, d=d, lam_min=lo, lam_max=hi, residual=residual)
    x, u, du, flux = _sample(space, tables, d)
    return MultiscaleSolution(space=space, d=d, x=x, u=u, du=du, flux=flux), system


def solve_standard_fem(problem: ProblemSpec, m: int, tables: CellTables | None = None) -> FEMSolution:
    """Linear finite elements on the uniform mesh of width 2^-m."""
    if m < 1:
        raise ValueError("FEM level must be at least 1")
    if tables is None:
        tables = build_tables(problem)
    if m > tables.level:
        raise ValueError(f"FEM level {m} exceeds fine level {tables.level}")
    h = 2.0**-m
    Ia = tables.coarse("Ia", m)
    If = tables.coarse("If", m)
    Ixf = tables.coarse("Ixf", m)
    left = np.arange(2**m) * h
    # moments of f against the rising and falling halves of each hat
    rise = (Ixf - left * If) / h
    fall = If - rise
    diag = (Ia[:-1] + Ia[1:]) / h**2
    off = -Ia[1:-1] / h**2
    rhs = rise[:-1] + fall[1:]

    if diag.size == 1:
        interior = rhs / diag
        kappa = 1.0
    else:
        banded = np.zeros((2, diag.size))
        banded[0, 1:] = off
        banded[1] = diag
        try:
            interior = sla.solveh_banded(banded, rhs, lower=False)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"FEM matrix is not SPD: {exc}") from exc
        lam = sla.eigvalsh_tridiagonal(diag, off)
        kappa = float(lam[-1] / lam[0])
    nodal = np.concatenate([[0.0], interior, [0.0]])

    x = tables.grid.boundaries
    per = 2 ** (tables.level - m)
    cell = np.minimum(np.arange(tables.n_cells + 1) // per, 2**m - 1)
    slope = np.diff(nodal) / h
    u = nodal[cell] + slope[cell] * (x - cell * h)
    du = slope[cell]
    with np.errstate(invalid="ignore"):
        flux = tables.a_grid * du
    return FEMSolution(level=m, nodal=nodal, kappa=kappa, x=x, u=u, du=du, flux=flux)


def dump_system(system: GalerkinSystem, space: MultiscaleSpace, path):
    """Write A and b row by row: label, b_p, A_p0, ..., A_p(M-1)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["basis", "b"] + [idx.label() for idx in space.indices])
        for p, idx in enumerate(space.indices):
            writer.writerow([idx.label(), f"{system.b[p]:.17g}"] + [f"{v:.17g}" for v in system.A[p]])


def dump_solution(solution, path, skip_nonfinite: bool = True):
    """Samples (x, u_H, du_H, a_du_H) on the fine grid."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "u_H", "du_H", "a_du_H"])
        for row in zip(solution.x, solution.u, solution.du, solution.flux):
            if skip_nonfinite and not all(np.isfinite(row)):
                continue
            writer.writerow([f"{v:.17g}" for v in row])
