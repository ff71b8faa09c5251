import numpy as np
import pytest

from dowm.assembly import solve_multiscale
from dowm.metrics import convergence_sweep
from dowm.problem import constant_problem
from dowm.reference import (
    ReferenceSolution,
    closed_form_reference,
    dump_reference,
    generic_reference,
    self_convergence_reference,
)

from conftest import example, oracle_for, tables_for


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_constant_oracle():
    ref = generic_reference(constant_problem(), 12)
    assert ref.K == pytest.approx(0.5, rel=1e-14)
    assert np.max(np.abs(ref.u - ref.x * (1 - ref.x) / 2)) <= 1e-14
    assert ref.provenance == "integral_oracle"


@pytest.mark.parametrize("k", [1, 2, 3])
def test_closed_form_matches_oracle(k):
    oracle = oracle_for(k)
    closed = closed_form_reference(example(k), 18)
    assert rel(oracle.u, closed.u) <= 1e-6
    s = slice(1, None) if k == 3 else slice(None)
    assert rel(oracle.du[s], closed.du[s]) <= 1e-6
    assert rel(oracle.flux[s], closed.flux[s]) <= 1e-6


@pytest.mark.parametrize("k", [1, 2, 3])
def test_boundary_values(k):
    oracle = oracle_for(k)
    closed = closed_form_reference(example(k))
    scale = np.max(np.abs(closed.u))
    assert abs(oracle.u[0]) <= 1e-10 and abs(oracle.u[-1]) <= 1e-9 * max(1, scale)
    assert abs(closed.u[0]) <= 1e-9 * scale and abs(closed.u[-1]) <= 1e-9 * scale


def test_oracle_flux_identity():
    # a u' + int_0^x f - K vanishes at every grid point by construction
    ref = oracle_for(4)
    t = tables_for(4, 18)
    assert np.max(np.abs(ref.flux + t.Pf - ref.K)) <= 1e-12


def test_example2_flux_continuous():
    ex = example(2).exact
    b = np.arange(1, 256) / 256
    eps = 1e-13
    jump = ex.flux(b + eps) - ex.flux(b - eps)
    assert np.max(np.abs(jump)) <= 1e-10


def test_restriction():
    ref = oracle_for(1)
    r14 = ref.at_level(14)
    assert r14.x.size == 2**14 + 1
    assert np.array_equal(r14.u, ref.u[:: 2**4])
    with pytest.raises(ValueError):
        r14.at_level(15)


def test_bad_provenance():
    z = np.zeros(3)
    with pytest.raises(ValueError):
        ReferenceSolution(z, z, z, z, "guess")


def test_closed_form_requires_exact():
    with pytest.raises(ValueError):
        closed_form_reference(example(5))


def test_self_convergence_constant(unit):
    p, t = unit
    for n in (2, 4):
        sol, _ = solve_multiscale(p, n, tables=t)
        ref = self_convergence_reference(p, n, tables=t)
        assert ref.provenance == "self_convergence"
        step = t.n_cells // 2**n
        assert np.max(np.abs(sol.u[::step] - ref.u[::step])) <= 1e-12


@pytest.mark.parametrize("k", [1, 2])
def test_self_and_exact_orders_agree(k):
    t = tables_for(k)
    exact = convergence_sweep(example(k), 1, 6, tables=t, reference="exact")
    selfc = convergence_sweep(example(k), 1, 6, tables=t, reference="self")
    for a, b in zip(exact[2:], selfc[2:]):
        assert abs(a.orders["l2_u"] - b.orders["l2_u"]) <= 0.25
        assert 1 / 3 <= a.errors.l2_u / b.errors.l2_u <= 3


def test_dump_reference(tmp_path):
    ref = closed_form_reference(example(3), 6)
    dump_reference(ref, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "x,u,du,a_du"
    assert len(lines) == 2**6 + 2
