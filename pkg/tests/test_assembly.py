import numpy as np
import pytest

from dowm.assembly import (
    SolverError,
    assemble_gram,
    assemble_load,
    assemble_stiffness,
    condition_number,
    dump_solution,
    dump_system,
    solve_multiscale,
    solve_spd,
    solve_standard_fem,
)
from dowm.basis import build_space
from dowm.problem import Analytic, ProblemSpec, coefficient_range
from dowm.quadrature import FineGrid, build_tables

from conftest import example, tables_for


def test_solve_spd_identity():
    b = np.arange(1.0, 6.0)
    d, res = solve_spd(np.eye(5), b)
    assert np.array_equal(d, b) and res == 0.0


def test_solve_spd_random():
    rng = np.random.default_rng(7)
    B = rng.normal(size=(50, 50))
    A = B.T @ B + np.eye(50)
    b = rng.normal(size=50)
    d, res = solve_spd(A, b)
    assert res <= 1e-12
    assert np.linalg.norm(A @ d - b) / np.linalg.norm(b) <= 1e-12


def test_solve_spd_not_spd():
    A = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(SolverError, match="not SPD") as info:
        solve_spd(A, np.ones(2))
    assert info.value.pivot == 1
    with pytest.raises(SolverError):
        solve_spd(np.diag([1.0, -1.0]), np.ones(2))


def test_solve_spd_zero_rhs():
    d, res = solve_spd(np.eye(3) * 2, np.zeros(3))
    assert np.all(d == 0) and res == 0.0


def test_condition_number():
    assert condition_number(np.eye(4))[0] == 1.0
    assert condition_number(np.diag([2.0, 0.5]))[0] == pytest.approx(4.0)
    with pytest.raises(SolverError):
        condition_number(np.diag([1.0, -1.0]))


def test_constant_coefficient_identity(unit):
    p, t = unit
    for n in (1, 3, 5):
        space = build_space(p, t, n)
        A = assemble_stiffness(space, t)
        assert np.max(np.abs(A - np.eye(space.M))) <= 1e-12


def test_zero_source_gives_zero_load():
    p = ProblemSpec(example(1).coefficient, Analytic("0"))
    t = build_tables(p)
    b = assemble_load(build_space(p, t, 4), t)
    assert np.all(b == 0.0)


def test_example1_kappa_n2():
    sol, system = solve_multiscale(example(1), 2, tables=tables_for(1))
    assert system.kappa == pytest.approx(11.64, rel=0.02)


def test_example2_gram_special_diagonal():
    # normalized specials have unit derivative norm; the stiffness diagonal carries the a-weight
    t = tables_for(2)
    space = build_space(example(2), t, 6)
    G = assemble_gram(space, t)
    R = space.n_regular
    assert np.max(np.abs(np.diag(G)[R:] - 1.0)) <= 1e-12


def test_example2_solve_residual():
    sol, system = solve_multiscale(example(2), 6, tables=tables_for(2))
    assert system.kappa == pytest.approx(1e8, rel=1e-6)
    assert system.residual <= 1e-7


@pytest.mark.parametrize("k", [1, 4])
def test_residual_small(k):
    for n in (2, 5):
        _, system = solve_multiscale(example(k), n, tables=tables_for(k))
        r = system.A @ system.d - system.b
        assert np.max(np.abs(r)) <= 1e-10 * np.max(np.abs(system.b))


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5, 6])
def test_stiffness_symmetric_and_bounded(k):
    t = tables_for(k)
    a_min, a_max = coefficient_range(example(k), t.level)
    rng = np.random.default_rng(k)
    for n in (1, 3, 5):
        sol, system = solve_multiscale(example(k), n, tables=t)
        A = system.A
        assert np.max(np.abs(A - A.T)) <= 1e-13 * np.max(np.abs(A))
        assert system.kappa <= a_max / a_min * (1 + 1e-6)
        c = rng.normal(size=(100, A.shape[0]))
        c /= np.linalg.norm(c, axis=1, keepdims=True)
        rq = np.einsum("ij,jk,ik->i", c, A, c)
        assert rq.min() >= a_min * (1 - 1e-9)
        assert rq.max() <= a_max * (1 + 1e-9)


def test_stiffness_against_direct_quadrature():
    # assemble A by brute force from sampled basis derivatives on a finer rule
    p = example(4)
    n = 2
    t = tables_for(4)
    A = assemble_stiffness(build_space(p, t, n), t)
    fine = build_tables(p, FineGrid(16, 5))
    space = build_space(p, fine, n)
    x = fine.grid.nodes.ravel()
    wt = np.tile(fine.grid.weights, fine.n_cells)
    cols = []
    cell = np.minimum((x * 2**n).astype(int), 2**n - 1)
    for p_idx, idx in enumerate(space.indices):
        if idx.kind == "special":
            g = np.where(cell == idx.k, fine.inv_a_nodes.ravel() - space.weights[idx.k], 0.0)
        else:
            g = space.D[cell, p_idx]
        cols.append(g / np.sqrt(np.sum(g * g * wt)))
    Gp = np.array(cols)
    A_direct = (Gp * fine.a_nodes.ravel() * wt) @ Gp.T
    assert np.max(np.abs(A - A_direct)) <= 1e-9 * np.max(np.abs(A_direct))


def test_special_load_against_refinement():
    # f = 1: the special entries are integrals of S_i, compared with the same at L + 2
    p = ProblemSpec(example(1).coefficient, Analytic("1"))
    a = build_tables(p, FineGrid(14))
    b = build_tables(p, FineGrid(16))
    for n in (2, 5):
        sa, sb = build_space(p, a, n), build_space(p, b, n)
        R = sa.n_regular
        la = assemble_load(sa, a)[R:] * np.sqrt(sa.special_norm2)
        lb = assemble_load(sb, b)[R:] * np.sqrt(sb.special_norm2)
        assert np.max(np.abs(la - lb)) <= 1e-9 * max(1e-12, np.max(np.abs(lb))) + 1e-15


def test_example2_regular_load_exact():
    # f = x times piecewise-linear basis is a quadratic per cell: exact
    t = tables_for(2)
    space = build_space(example(2), t, 3)
    b = assemble_load(space, t)
    x = np.linspace(0, 1, 2**12 + 1)
    xm = 0.5 * (x[1:] + x[:-1])
    from dowm.basis import eval_regular

    for p_idx, idx in enumerate(space.indices[: space.n_regular]):
        # Simpson on each sub-interval integrates cubics exactly
        g = lambda s: eval_regular(idx, s) * s
        simpson = np.sum((g(x[:-1]) + 4 * g(xm) + g(x[1:])) / 6) / 2**12
        assert b[p_idx] * space.norm(p_idx) == pytest.approx(simpson, rel=1e-12, abs=1e-15)


def test_solution_boundary_values():
    for k in (1, 2, 3):
        sol, _ = solve_multiscale(example(k), 3, tables=tables_for(k))
        assert sol.u[0] == 0.0 and sol.u[-1] == 0.0


def test_constant_coefficient_interpolates(unit):
    p, t = unit
    for n in (1, 2, 4):
        sol, _ = solve_multiscale(p, n, tables=t)
        step = t.n_cells // 2**n
        xs = sol.x[::step]
        assert np.max(np.abs(sol.u[::step] - xs * (1 - xs) / 2)) <= 1e-14


def test_constant_multiscale_equals_fem(unit):
    p, t = unit
    for n in (1, 3, 6):
        sol, _ = solve_multiscale(p, n, tables=t)
        fem = solve_standard_fem(p, n, t)
        assert np.max(np.abs(sol.u - fem.u)) <= 1e-12
        assert np.max(np.abs(sol.du - fem.du)) <= 1e-12


def test_fem_constant_nodal_exact(unit):
    p, t = unit
    fem = solve_standard_fem(p, 4, t)
    x = np.linspace(0, 1, 17)
    assert np.max(np.abs(fem.nodal - x * (1 - x) / 2)) <= 1e-14
    assert fem(0.3) == pytest.approx(np.interp(0.3, x, x * (1 - x) / 2))


def test_fem_example1_kappa():
    fem = solve_standard_fem(example(1), 7, tables_for(1))
    assert fem.kappa == pytest.approx(6.6e3, rel=0.1)


def test_fem_example2_stagnates():
    t = tables_for(2)
    u = example(2).exact.u(t.grid.boundaries)
    fem = solve_standard_fem(example(2), 7, t)
    assert np.linalg.norm(fem.u - u) / np.linalg.norm(u) >= 0.9


def test_fem_level_checks():
    with pytest.raises(ValueError):
        solve_standard_fem(example(1), 0, tables_for(1))
    with pytest.raises(ValueError):
        solve_standard_fem(example(1), 15, tables_for(1))


def test_inconsistent_space_tables():
    t14 = tables_for(1)
    t12 = build_tables(example(1), FineGrid(12))
    space = build_space(example(1), t12, 3)
    with pytest.raises(ValueError):
        assemble_stiffness(space, t14)


def test_dumps(tmp_path):
    sol, system = solve_multiscale(example(3), 2, tables=build_tables(example(3), FineGrid(8)))
    dump_system(system, sol.space, tmp_path / "sys.csv")
    rows = (tmp_path / "sys.csv").read_text().splitlines()
    assert rows[0].split(",")[:3] == ["basis", "b", "phi"]
    assert len(rows) == sol.space.M + 1
    dump_solution(sol, tmp_path / "sol.csv")
    text = (tmp_path / "sol.csv").read_text()
    assert text.startswith("x,u_H,du_H,a_du_H\n")
    assert "inf" not in text and "nan" not in text
    # the flux at x = 0 is infinite for this coefficient, so that sample is skipped
    assert len(text.splitlines()) == 2**8 + 1
