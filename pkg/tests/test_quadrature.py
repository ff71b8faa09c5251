import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dowm.problem import Analytic, DyadicPiecewiseConstant, ProblemSpec
from dowm.quadrature import FineGrid, build_tables, compensated_prefix, dump_tables, interval_integral

from conftest import example, tables_for


def test_grid_layout():
    g = FineGrid(4, 3)
    assert g.n_cells == 16
    assert g.boundaries[0] == 0.0 and g.boundaries[-1] == 1.0
    lo, hi = g.boundaries[:-1, None], g.boundaries[1:, None]
    assert np.all((g.nodes > lo) & (g.nodes < hi))
    assert g.weights.sum() == pytest.approx(g.h, rel=1e-15)


def test_grid_validation():
    with pytest.raises(ValueError):
        FineGrid(4, 4)
    with pytest.raises(ValueError):
        FineGrid(-1, 3)


def test_constant_coefficient_tables():
    p = ProblemSpec(Analytic("1"), Analytic("1"))
    t = build_tables(p, FineGrid(2, 3))
    assert np.allclose(t.Ia, 0.25, rtol=1e-15)
    assert np.allclose(t.IinvA, 0.25, rtol=1e-15)
    assert interval_integral(t, "a", 0, 4) == pytest.approx(1.0, rel=1e-15)


def test_example2_piecewise_exact():
    t = tables_for(2)
    a = np.array(example(2).coefficient.values)
    per = 2 ** (14 - 8)
    a_cells = np.repeat(a, per)
    assert np.allclose(t.Ia, a_cells * 2.0**-14, rtol=1e-14, atol=0)
    assert np.allclose(t.IinvA, 2.0**-14 / a_cells, rtol=1e-14, atol=0)
    assert interval_integral(t, "1/a", 0, per) == pytest.approx(2.0**-8 * 1e-4, rel=1e-13)


def test_example1_total_inverse():
    t = tables_for(1)
    exact = 1.05 + (1 - np.cos(2**9 * np.pi)) / (2**9 * np.pi)
    assert abs(t.PinvA[-1] - exact) <= 1e-10


def test_example1_total_a_against_refinement():
    coarse = tables_for(1)
    fine = build_tables(example(1), FineGrid(16, 5))
    assert interval_integral(coarse, "a", 0, coarse.n_cells) == pytest.approx(
        interval_integral(fine, "a", 0, fine.n_cells), rel=1e-9
    )


@pytest.mark.parametrize("k, order", [(1, 5), (4, 3), (4, 5)])
def test_refinement_consistency(k, order):
    p = example(k)
    a = build_tables(p, FineGrid(14, order))
    b = build_tables(p, FineGrid(15, order))
    for name in ("Ia", "IinvA", "IinvA2", "If", "Ixf"):
        coarse = getattr(a, name)
        fine = getattr(b, name).reshape(-1, 2).sum(axis=1)
        assert np.max(np.abs(coarse - fine) / np.abs(fine)) <= 1e-9, name


def test_jensen_per_cell():
    for k in (1, 4, 5):
        t = tables_for(k)
        assert np.all(t.IinvA**2 <= t.grid.h * t.IinvA2 * (1 + 1e-12))
    t = build_tables(ProblemSpec(Analytic("3"), Analytic("1")), FineGrid(6))
    assert np.allclose(t.IinvA**2, t.grid.h * t.IinvA2, rtol=1e-13)


def test_positivity_and_monotone_prefix():
    for k in (1, 3, 5):
        t = tables_for(k)
        assert np.all(t.Ia > 0) and np.all(t.IinvA > 0)
        assert np.all(np.diff(t.PinvA) > 0)
        assert np.all(np.diff(t.Pa) > 0)


def test_determinism():
    a = build_tables(example(4), FineGrid(10))
    b = build_tables(example(4), FineGrid(10))
    for name in ("Ia", "IinvA", "IinvA2", "If", "Ixf", "PinvA", "Pa", "Pf"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_level_below_resolution():
    with pytest.raises(ValueError):
        build_tables(example(2), FineGrid(7))


def test_nonfinite_values():
    p = ProblemSpec(Analytic("1"), Analytic("log(x - x)"))
    with pytest.raises(ValueError):
        build_tables(p, FineGrid(10, 1))


def test_interval_errors():
    t = build_tables(ProblemSpec(Analytic("1"), Analytic("1")), FineGrid(3))
    with pytest.raises(ValueError):
        interval_integral(t, "a", 3, 3)
    with pytest.raises(ValueError):
        interval_integral(t, "a", 5, 2)
    with pytest.raises(ValueError):
        interval_integral(t, "a", 0, 9)
    with pytest.raises(ValueError):
        interval_integral(t, "a^3", 0, 2)
    assert interval_integral(t, "xf", 0, 8) == pytest.approx(0.5)
    assert interval_integral(t, "1/a^2", 2, 4) == pytest.approx(0.25)


def test_partial_integrals_polynomial():
    g = FineGrid(3, 3)
    part = g.partial_integrals(lambda x: x**2)
    left = g.boundaries[:-1, None]
    exact = (g.nodes**3 - left**3) / 3
    assert np.allclose(part, exact, rtol=1e-14, atol=1e-16)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=200))
def test_compensated_prefix_matches_fsum(values):
    import math

    out = compensated_prefix(values)
    assert out[0] == 0.0
    assert out[-1] == pytest.approx(math.fsum(values), abs=1e-9 * max(1.0, max(map(abs, values))))


def test_dump_tables(tmp_path):
    t = build_tables(ProblemSpec(Analytic("1"), Analytic("x")), FineGrid(3))
    path = tmp_path / "t.csv"
    dump_tables(t, path)
    lines = path.read_bytes().split(b"\n")
    assert lines[0] == b"cell,Ia,IinvA,IinvA2,If,Ixf"
    assert len([ln for ln in lines if ln]) == 9
    assert b"\r" not in path.read_bytes()
