import functools

import pytest

from dowm.problem import builtin_example, constant_problem
from dowm.quadrature import FineGrid, build_tables
from dowm.reference import generic_reference


@functools.lru_cache(maxsize=None)
def example(k):
    return builtin_example(k)


@functools.lru_cache(maxsize=None)
def tables_for(k, level=None, order=3):
    p = example(k)
    return build_tables(p, FineGrid(p.fine_level if level is None else level, order))


@functools.lru_cache(maxsize=None)
def oracle_for(k, level=18):
    return generic_reference(example(k), level)


@pytest.fixture(scope="session")
def unit():
    p = constant_problem(1.0)
    return p, build_tables(p)
