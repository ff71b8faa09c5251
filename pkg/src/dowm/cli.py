"""Command-line front end: sweeps, FEM comparisons, invariant checks and CSV dumps."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .assembly import (
    SolverError,
    assemble_gram,
    dump_solution,
    dump_system,
    solve_multiscale,
    solve_standard_fem,
)
from .basis import eval_regular, eval_regular_deriv
from .metrics import (
    check_bounds,
    convergence_sweep,
    fem_sweep,
    format_sci,
    interpolation_deviation,
    write_fem_table,
    write_table,
)
from .problem import ProblemSpec, builtin_example, coefficient_range, load_problem
from .quadrature import QUAD_ORDERS, FineGrid, build_tables, dump_tables
from .reference import closed_form_reference, dump_reference, generic_reference

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
KAPPA_SLACK = 1e-6


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    example: int | None = None
    problem: str | None = None
    n: str = "1..6"
    fine_level: int | None = None
    quad: int = 3
    out: str = "."
    exclude_x0: bool = False
    reference: str = "auto"
    same_level: bool = False
    dump_system: bool = False
    dump_solution: bool = False
    dump_tables: bool = False

    @property
    def n_range(self) -> tuple[int, int]:
        text = str(self.n)
        parts = text.split("..")
        try:
            lo, hi = (int(parts[0]), int(parts[-1])) if len(parts) <= 2 else (None, None)
        except ValueError:
            lo = hi = None
        if lo is None or lo < 1 or hi < lo:
            raise ConfigError(f"invalid level range {text!r}; expected a..b with 1 <= a <= b")
        return lo, hi


def merge_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the JSON config file, then explicit flags."""
    values = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        known = {f.name for f in fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(data)
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None and flag is not False:
            values[f.name] = flag
    return RunConfig(**values)


def load_run(config: RunConfig) -> tuple[ProblemSpec, FineGrid]:
    if (config.example is None) == (config.problem is None):
        raise ConfigError("give exactly one of --example or --problem")
    try:
        problem = builtin_example(int(config.example)) if config.example is not None else load_problem(config.problem)
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid problem: {exc}") from exc
    if config.quad not in QUAD_ORDERS:
        raise ConfigError(f"--quad must be one of {QUAD_ORDERS}")
    if config.reference not in ("auto", "exact", "oracle", "self"):
        raise ConfigError(f"unknown reference {config.reference!r}")
    if config.reference == "exact" and problem.exact is None:
        raise ConfigError(f"{problem.name} has no exact solution")
    level = problem.fine_level if config.fine_level is None else int(config.fine_level)
    _, n_max = config.n_range
    needs_next = config.reference == "self" or (config.reference == "auto" and problem.exact is None)
    if level < n_max + (1 if needs_next else 0):
        raise ConfigError(f"fine level {level} is too small for coarse level {n_max}")
    if level < problem.resolution:
        raise ConfigError(f"fine level {level} is below the data resolution {problem.resolution}")
    return problem, FineGrid(level, config.quad)


def _outdir(config: RunConfig) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_rows(rows, norm):
    print(f"{'H':>8} {'e_u':>11} {'ord':>5} {'e_du':>11} {'ord':>5} {'e_flux':>11} {'ord':>5} {'kappa':>11} {'ratio':>11}")
    for row in rows:
        line = [f"{'1/2^' + str(row.n):>8}"]
        for name in (f"{norm}_u", f"{norm}_du", f"{norm}_flux"):
            o = row.orders.get(name)
            line += [f"{format_sci(getattr(row.errors, name)):>11}", f"{'' if o is None else f'{o:.2f}':>5}"]
        line += [f"{format_sci(row.kappa):>11}", f"{format_sci(row.ratio):>11}"]
        print(" ".join(line))


def cmd_sweep(config: RunConfig) -> int:
    problem, grid = load_run(config)
    n_min, n_max = config.n_range
    tables = build_tables(problem, grid)
    out = _outdir(config)
    rows = convergence_sweep(
        problem,
        n_min,
        n_max,
        tables=tables,
        reference=config.reference,
        exclude_x0=config.exclude_x0 or problem.exclude_x0,
    )
    write_table(rows, out / f"{problem.name}_l2.csv", "l2")
    write_table(rows, out / f"{problem.name}_linf.csv", "linf")
    if config.dump_tables:
        dump_tables(tables, out / f"{problem.name}_tables.csv")
    if config.dump_system or config.dump_solution:
        for n in range(n_min, n_max + 1):
            sol, system = solve_multiscale(problem, n, tables=tables)
            if config.dump_system:
                dump_system(system, sol.space, out / f"{problem.name}_n{n}_system.csv")
            if config.dump_solution:
                dump_solution(sol, out / f"{problem.name}_n{n}_solution.csv")
    print(f"{problem.name}: reference = {rows[0].reference}")
    _print_rows(rows, "l2")
    return EXIT_OK


def cmd_compare_fem(config: RunConfig) -> int:
    problem, grid = load_run(config)
    n_min, n_max = config.n_range
    shift = 0 if config.same_level else 1
    if grid.level < n_max + shift:
        raise ConfigError(f"fine level {grid.level} is too small for FEM level {n_max + shift}")
    tables = build_tables(problem, grid)
    reference = "auto" if config.reference == "self" else config.reference
    rows = fem_sweep(
        problem,
        n_min,
        n_max,
        tables=tables,
        same_level=config.same_level,
        reference=reference,
        exclude_x0=config.exclude_x0 or problem.exclude_x0,
    )
    out = _outdir(config)
    write_fem_table(rows, out / f"{problem.name}_fem.csv")
    print(f"{'H':>8} {'h':>8} {'e_l2_u':>11} {'e_linf_u':>11} {'kappa':>11}")
    for row in rows:
        print(
            f"{'1/2^' + str(row.n):>8} {'1/2^' + str(row.m):>8} {format_sci(row.errors.l2_u):>11} "
            f"{format_sci(row.errors.linf_u):>11} {format_sci(row.kappa):>11}"
        )
    return EXIT_OK


def run_checks(problem: ProblemSpec, grid: FineGrid, n_min: int, n_max: int, seed: int = 0):
    """Invariant suite; yields (name, n, value, limit, status) with status pass/FAIL/xfail."""
    tables = build_tables(problem, grid)
    a_min, a_max = coefficient_range(problem, tables.level)
    ratio = a_max / a_min
    if problem.exact is not None:
        ref = closed_form_reference(problem, tables.level)
    else:
        ref = generic_reference(problem, level=min(tables.level + 4, 18), order=grid.order).at_level(tables.level)
    rng = np.random.default_rng(seed)
    results = []

    def record(name, n, value, limit, ok, expected_fail=False):
        status = "pass" if ok else ("xfail" if expected_fail else "FAIL")
        results.append((name, n, value, limit, status))

    for n in range(n_min, n_max + 1):
        sol, system = solve_multiscale(problem, n, tables=tables)
        G = assemble_gram(sol.space, tables)
        gram_dev = float(np.max(np.abs(G - np.eye(G.shape[0]))))
        record("gram-identity", n, gram_dev, 1e-10, gram_dev <= 1e-10)

        c = rng.standard_normal((100, system.A.shape[0]))
        c /= np.linalg.norm(c, axis=1, keepdims=True)
        rq = np.einsum("ij,jk,ik->i", c, system.A, c)
        lo_ok = rq.min() >= a_min * (1 - 1e-9)
        hi_ok = rq.max() <= a_max * (1 + 1e-9)
        record("rayleigh-min", n, float(rq.min()), a_min, lo_ok)
        record("rayleigh-max", n, float(rq.max()), a_max, hi_ok)
        # lambda_min carries an absolute error near eps * lambda_max, i.e. relative kappa * eps
        record("kappa-bound", n, system.kappa, ratio, system.kappa <= ratio * (1 + KAPPA_SLACK))

        u_scale = float(np.max(np.abs(ref.u)))
        dev = interpolation_deviation(sol, ref, n)
        record(
            "interpolation",
            n,
            dev,
            1e-6 * u_scale,
            dev <= 1e-6 * u_scale,
            expected_fail=grid.order == 1,
        )
        bounds = check_bounds(problem, sol, ref, tables, n)
        record("energy-bound", n, bounds.energy_error, bounds.energy_bound, bounds.energy_ok)
        record("l2-bound", n, bounds.l2_error, bounds.l2_bound, bounds.l2_ok)
    return results


def cmd_check(config: RunConfig) -> int:
    problem, grid = load_run(config)
    n_min, n_max = config.n_range
    results = run_checks(problem, grid, n_min, n_max)
    print(f"{'check':<16} {'n':>3} {'value':>11} {'limit':>11}  status")
    failed = False
    for name, n, value, limit, status in results:
        print(f"{name:<16} {n:>3} {value:>11.4E} {limit:>11.4E}  {status}")
        failed |= status == "FAIL"
    if any(r[4] == "xfail" for r in results):
        print("note: xfail marks interpolation misses with q = 1, where the integrals are no longer exact")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def cmd_dump_basis(config: RunConfig) -> int:
    """Long-format samples of every normalized basis function at level n_max."""
    problem, grid = load_run(config)
    _, n = config.n_range
    tables = build_tables(problem, grid)
    sol, _ = solve_multiscale(problem, n, tables=tables)
    space = sol.space
    step = 2 ** max(tables.level - (n + 5), 0)
    idx = np.arange(0, tables.n_cells + 1, step)
    x = tables.grid.boundaries[idx]
    per = 2 ** (tables.level - n)
    out = _outdir(config)
    path = out / f"{problem.name}_basis_n{n}.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["basis", "x", "value", "derivative"])
        for p, bi in enumerate(space.indices):
            norm = space.norm(p)
            if bi.kind == "special":
                i = bi.k
                local = idx - i * per
                inside = (local >= 0) & (local <= per)
                value = np.where(inside, space.special_values[i][np.clip(local, 0, per)], 0.0)
                in_half_open = (local >= 0) & (local < per)
                deriv = np.where(in_half_open, tables.inv_a_grid[idx] - space.weights[i], 0.0)
            else:
                value = eval_regular(bi, x)
                deriv = eval_regular_deriv(bi, x)
            for xv, v, dv in zip(x, value / norm, deriv / norm):
                if math.isfinite(dv):
                    writer.writerow([bi.label(), f"{xv:.17g}", f"{v:.17g}", f"{dv:.17g}"])
    print(f"wrote {path}")
    return EXIT_OK


def cmd_dump_reference(config: RunConfig) -> int:
    problem, grid = load_run(config)
    kind = config.reference
    if kind in ("auto", "self"):
        kind = "exact" if problem.exact is not None else "oracle"
    if kind == "exact":
        ref = closed_form_reference(problem, grid.level)
    else:
        ref = generic_reference(problem, tables=build_tables(problem, grid))
    out = _outdir(config)
    path = out / f"{problem.name}_reference.csv"
    dump_reference(ref, path)
    print(f"wrote {path} ({ref.provenance})")
    return EXIT_OK


COMMANDS = {
    "sweep": cmd_sweep,
    "compare-fem": cmd_compare_fem,
    "check": cmd_check,
    "dump-basis": cmd_dump_basis,
    "dump-reference": cmd_dump_reference,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--example", type=int, choices=range(1, 7), metavar="{1..6}")
    common.add_argument("--problem", help="JSON problem description")
    common.add_argument("--n", help="coarse level range a..b (default 1..6)")
    common.add_argument("--fine-level", type=int, dest="fine_level")
    common.add_argument("--quad", type=int, choices=QUAD_ORDERS)
    common.add_argument("--out", help="output directory (default .)")
    common.add_argument("--exclude-x0", action="store_true", dest="exclude_x0")
    common.add_argument("--reference", choices=("auto", "exact", "oracle", "self"))
    common.add_argument("--config", help="JSON run configuration; flags take precedence")
    common.add_argument("--same-level", action="store_true", dest="same_level")
    common.add_argument("--dump-system", action="store_true", dest="dump_system")
    common.add_argument("--dump-solution", action="store_true", dest="dump_solution")
    common.add_argument("--dump-tables", action="store_true", dest="dump_tables")

    parser = argparse.ArgumentParser(prog="dowm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = merge_config(args)
        return COMMANDS[args.command](config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
