"""Problem definitions for -(a u')' = f on (0, 1) with u(0) = u(1) = 0.

Coefficients and sources are built from three pieces: an analytic
expression in ``x``, a piecewise constant on a dyadic partition, and the
product of the two. Analytic expressions are stored as strings so problems
round-trip through JSON.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np

__all__ = [
    "Analytic",
    "DyadicPiecewiseConstant",
    "Product",
    "ClosedForm",
    "PiecewiseCubic",
    "ProblemSpec",
    "builtin_example",
    "solve_example2_exact",
    "constant_problem",
    "eval_coefficient",
    "eval_inverse_coefficient",
    "eval_source",
    "coefficient_range",
    "problem_from_dict",
    "problem_to_dict",
    "load_problem",
    "save_problem",
    "BUILTIN_IDS",
]

_NAMESPACE = {
    "pi": np.pi,
    "e": np.e,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "arctan": np.arctan,
    "where": np.where,
    "minimum": np.minimum,
    "maximum": np.maximum,
}


def _is_dyadic(value: float, max_level: int = 52) -> bool:
    if not 0.0 <= value <= 1.0:
        return False
    scaled = value * 2.0**max_level
    return scaled == math.floor(scaled)


@dataclass(frozen=True)
class Analytic:
    """Pointwise formula in ``x``.

    ``inverse_expr`` is an optional closed form for 1/value, used where the
    value itself blows up (the inverse stays finite, e.g. ``x**2 * ...``).
    ``singular`` lists endpoints where ``expr`` must not be evaluated.
    """

    expr: str
    inverse_expr: Optional[str] = None
    breakpoints: tuple = ()
    singular: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        object.__setattr__(self, "singular", tuple(float(s) for s in self.singular))
        for b in self.breakpoints:
            if not _is_dyadic(b):
                raise ValueError(f"breakpoint {b!r} is not a dyadic rational in [0, 1]")
        for s in self.singular:
            if s not in (0.0, 1.0):
                raise ValueError("singularities are only permitted at the endpoints 0 and 1")

    @cached_property
    def _code(self):
        return compile(self.expr, "<expr>", "eval")

    @cached_property
    def _inverse_code(self):
        if self.inverse_expr is None:
            return None
        return compile(self.inverse_expr, "<inverse_expr>", "eval")

    @staticmethod
    def _run(code, x):
        x = np.asarray(x, dtype=float)
        out = eval(code, {"__builtins__": {}}, {**_NAMESPACE, "x": x})
        return np.asarray(out, dtype=float) + np.zeros_like(x)

    def __call__(self, x):
        return self._run(self._code, x)

    def inverse(self, x):
        if self._inverse_code is not None:
            return self._run(self._inverse_code, x)
        with np.errstate(divide="ignore"):
            return 1.0 / self(x)

    @property
    def resolution(self) -> int:
        level = 0
        for b in self.breakpoints:
            while b * 2**level != math.floor(b * 2**level):
                level += 1
        return level


@dataclass(frozen=True)
class DyadicPiecewiseConstant:
    """Constant ``values[i]`` on the half-open cell [i 2^-level, (i+1) 2^-level)."""

    level: int
    values: tuple

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if self.level < 0 or len(values) != 2**self.level:
            raise ValueError(f"expected 2**{self.level} values, got {len(values)}")
        if not all(np.isfinite(values)):
            raise ValueError("piecewise values must be finite")
        object.__setattr__(self, "values", values)

    @cached_property
    def _array(self):
        return np.array(self.values)

    def piece_index(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.floor(x * 2**self.level).astype(np.int64)
        return np.clip(idx, 0, 2**self.level - 1)

    def __call__(self, x):
        return self._array[self.piece_index(x)]

    def inverse(self, x):
        return 1.0 / self(x)

    @property
    def resolution(self) -> int:
        return self.level

    @property
    def singular(self) -> tuple:
        return ()


@dataclass(frozen=True)
class Product:
    piecewise: DyadicPiecewiseConstant
    analytic: Analytic

    def __call__(self, x):
        return self.piecewise(x) * self.analytic(x)

    def inverse(self, x):
        return self.piecewise.inverse(x) * self.analytic.inverse(x)

    @property
    def resolution(self) -> int:
        return max(self.piecewise.resolution, self.analytic.resolution)

    @property
    def singular(self) -> tuple:
        return self.analytic.singular


Term = Union[Analytic, DyadicPiecewiseConstant, Product]


@dataclass(frozen=True)
class ClosedForm:
    """Exact solution given by formulas for u, u' and the flux a u'."""

    u: Callable
    du: Callable
    flux: Callable


@dataclass(frozen=True)
class PiecewiseCubic:
    """u = -c3 x^3/6 + c1 x + c0 on each dyadic piece, with constant flux offset K."""

    level: int
    c3: np.ndarray
    c1: np.ndarray
    c0: np.ndarray
    flux_constant: float

    def _piece(self, x):
        idx = np.floor(np.asarray(x, dtype=float) * 2**self.level).astype(np.int64)
        return np.clip(idx, 0, 2**self.level - 1)

    def u(self, x):
        x = np.asarray(x, dtype=float)
        i = self._piece(x)
        return -self.c3[i] * x**3 / 6.0 + self.c1[i] * x + self.c0[i]

    def du(self, x):
        x = np.asarray(x, dtype=float)
        i = self._piece(x)
        return -self.c3[i] * x**2 / 2.0 + self.c1[i]

    def flux(self, x):
        x = np.asarray(x, dtype=float)
        return -(x**2) / 2.0 + self.flux_constant


@dataclass(frozen=True)
class ProblemSpec:
    coefficient: Term
    source: Term
    exact: Optional[Union[ClosedForm, PiecewiseCubic]] = None
    name: str = "problem"
    fine_level: int = 14

    def __post_init__(self):
        _check_positive(self.coefficient)

    @property
    def exclude_x0(self) -> bool:
        return 0.0 in self.coefficient.singular

    @property
    def resolution(self) -> int:
        return max(self.coefficient.resolution, self.source.resolution)


def _check_positive(coef: Term, samples: int = 1025):
    if isinstance(coef, DyadicPiecewiseConstant):
        if min(coef.values) <= 0:
            raise ValueError("coefficient values must be strictly positive")
        return
    if isinstance(coef, Product):
        if min(coef.piecewise.values) <= 0:
            raise ValueError("coefficient values must be strictly positive")
    x = (np.arange(samples) + 0.5) / samples
    vals = coef(x)
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        raise ValueError("coefficient must be finite and strictly positive on (0, 1)")


def _check_x(term: Term, x):
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("x must lie in [0, 1]")
    for s in term.singular:
        if np.any(x == s):
            raise ValueError(f"coefficient is singular at x={s}")
    return x


def eval_coefficient(problem: ProblemSpec, x):
    return problem.coefficient(_check_x(problem.coefficient, x))


def eval_inverse_coefficient(problem: ProblemSpec, x):
    """1/a(x); finite (possibly 0) at singular endpoints when an inverse form exists."""
    x = np.asarray(x, dtype=float)
    return problem.coefficient.inverse(x)


def eval_source(problem: ProblemSpec, x):
    return problem.source(np.asarray(x, dtype=float))


def coefficient_range(problem: ProblemSpec, level: Optional[int] = None):
    """(a_min, a_max) sampled on x_i = i/2^level, skipping singular endpoints."""
    level = problem.fine_level if level is None else level
    x = np.arange(2**level + 1) / 2**level
    keep = np.ones(x.size, dtype=bool)
    for s in problem.coefficient.singular:
        keep &= x != s
    vals = problem.coefficient(x[keep])
    return float(vals.min()), float(vals.max())


# --- built-in examples -------------------------------------------------------

BUILTIN_IDS = (1, 2, 3, 4, 5, 6)


def _alternating(level: int, even: float, odd: float) -> DyadicPiecewiseConstant:
    return DyadicPiecewiseConstant(level, tuple(even if i % 2 == 0 else odd for i in range(2**level)))


def _example1_exact() -> ClosedForm:
    w = 2**9 * np.pi
    c1 = (1.05 * w**3 - 3 * np.cos(w) * w**2 + 6 * np.sin(w) * w + 6 * np.cos(w) - 6) / (
        6 * w**2 * (-1.05 * w + np.cos(w) - 1)
    )
    c2 = (-1.05 * w**2 + 3 * np.cos(w) * w - 6 * np.sin(w) - 6.3) / (6 * w**2 * (-1.05 * w + np.cos(w) - 1))

    def u(x):
        x = np.asarray(x, dtype=float)
        c, s = np.cos(w * x), np.sin(w * x)
        return 1000 * (
            -1.05 * x**3 / 6
            + c1 * c / w
            + c * x**2 / (2 * w)
            - c / w**3
            - s * x / w**2
            - 1.05 * c1 * x
            + c2
        )

    # a u' = 1000 (-x^2/2 - c1)
    def flux(x):
        x = np.asarray(x, dtype=float)
        return 1000 * (-(x**2) / 2 - c1)

    def du(x):
        x = np.asarray(x, dtype=float)
        return (1.05 + np.sin(w * x)) * flux(x)

    return ClosedForm(u, du, flux)


def _example3_exact() -> ClosedForm:
    r1, r2 = 1.05, 2**10 * np.pi

    def basis(x):
        # u = c1 * p(x) + q(x) + c2
        c, s = np.cos(r2 * x), np.sin(r2 * x)
        p = -r1 * x**3 / 3 + x**2 * c / r2 - 2 * c / r2**3 - 2 * x * s / r2**2
        q = -r1 * x**4 / 4 + x**3 * c / r2 - 3 * x**2 * s / r2**2 + 6 * s / r2**4 - 6 * x * c / r2**3
        return p, q

    p0, q0 = basis(0.0)
    p1, q1 = basis(1.0)
    # u(0) = u(1) = 0
    c1 = -(q1 - q0) / (p1 - p0)
    c2 = -(c1 * p0 + q0)

    def u(x):
        x = np.asarray(x, dtype=float)
        p, q = basis(x)
        return c1 * p + q + c2

    # a u' = -x - c1
    def flux(x):
        x = np.asarray(x, dtype=float)
        return -x - c1

    def du(x):
        x = np.asarray(x, dtype=float)
        return x**2 * (r1 + np.sin(r2 * x)) * flux(x)

    return ClosedForm(u, du, flux)


def builtin_example(example_id: int) -> ProblemSpec:
    """The six benchmark problems, numbered in their order of presentation."""
    if example_id == 1:
        return ProblemSpec(
            coefficient=Analytic("1/(1.05 + sin(2**9*pi*x))", inverse_expr="1.05 + sin(2**9*pi*x)"),
            source=Analytic("1000*x"),
            exact=_example1_exact(),
            name="example1",
        )
    if example_id == 2:
        problem = ProblemSpec(
            coefficient=_alternating(8, 1e4, 1e-4),
            source=Analytic("x"),
            name="example2",
        )
        return ProblemSpec(
            coefficient=problem.coefficient,
            source=problem.source,
            exact=solve_example2_exact(problem),
            name="example2",
        )
    if example_id == 3:
        return ProblemSpec(
            coefficient=Analytic(
                "1/(x**2*(1.05 + sin(2**10*pi*x)))",
                inverse_expr="x**2*(1.05 + sin(2**10*pi*x))",
                singular=(0.0,),
            ),
            source=Analytic("1"),
            exact=_example3_exact(),
            name="example3",
            fine_level=15,
        )
    if example_id == 4:
        return ProblemSpec(
            coefficient=Analytic("2*exp(1) + sin(2**9*pi*x)*exp(x**2)*cos(10*x)"),
            source=Analytic("sin(2*x)*cos(x)"),
            name="example4",
        )
    if example_id == 5:
        return ProblemSpec(
            coefficient=Product(_alternating(8, 1e4, 1e-4), Analytic("exp(x**2 + 1)*(10 + cos(20*x))")),
            source=Analytic("cos(4*x)"),
            name="example5",
        )
    if example_id == 6:
        return ProblemSpec(
            coefficient=Product(_alternating(8, 1e4, 1e-4), Analytic("10 + sin(40*x)")),
            source=Product(_alternating(8, 1.0, 1e-3), Analytic("cos(10*x)")),
            name="example6",
        )
    raise ValueError(f"unknown example id {example_id!r}; expected one of {BUILTIN_IDS}")


def solve_example2_exact(problem: ProblemSpec) -> PiecewiseCubic:
    """Exact solution for a piecewise-constant coefficient and f(x) = x.

    The flux a u' = -x^2/2 + K is continuous, so each piece carries
    c3 = 1/a_i and c1 = K/a_i; c0 follows from continuity of u starting at
    u(0) = 0, and K from u(1) = 0.
    """
    coef = problem.coefficient
    if not isinstance(coef, DyadicPiecewiseConstant):
        raise TypeError("coefficient must be a DyadicPiecewiseConstant")
    probe = np.linspace(0.0, 1.0, 17)
    if not np.allclose(problem.source(probe), probe, rtol=0, atol=1e-14):
        raise ValueError("source must be f(x) = x")
    a = np.array(coef.values)
    if np.any(a <= 0):
        raise ValueError("coefficient piece nonpositive")
    m = a.size
    left = np.arange(m) / m
    right = np.arange(1, m + 1) / m
    inv = 1.0 / a
    # u(1) = sum_i int (K - t^2/2)/a_i dt = 0
    K = np.sum(inv * (right**3 - left**3) / 6.0) / np.sum(inv * (right - left))
    c3 = inv
    c1 = K * inv
    c0 = np.empty(m)
    value = 0.0
    for i in range(m):
        c0[i] = value - (-c3[i] * left[i] ** 3 / 6.0 + c1[i] * left[i])
        value = -c3[i] * right[i] ** 3 / 6.0 + c1[i] * right[i] + c0[i]
    return PiecewiseCubic(coef.level, c3, c1, c0, float(K))


def constant_problem(k: float = 1.0, name: str = "constant") -> ProblemSpec:
    """a = k, f = 1, exact u = x(1-x)/(2k)."""
    return ProblemSpec(
        coefficient=Analytic(repr(float(k))),
        source=Analytic("1"),
        exact=ClosedForm(
            u=lambda x: np.asarray(x, dtype=float) * (1 - np.asarray(x, dtype=float)) / (2 * k),
            du=lambda x: (1 - 2 * np.asarray(x, dtype=float)) / (2 * k),
            flux=lambda x: 0.5 - np.asarray(x, dtype=float),
        ),
        name=name,
        fine_level=10,
    )


# --- JSON --------------------------------------------------------------------


def _term_to_dict(term: Term) -> dict:
    if isinstance(term, Analytic):
        out = {"type": "analytic", "expr": term.expr}
        if term.inverse_expr is not None:
            out["inverse_expr"] = term.inverse_expr
        if term.breakpoints:
            out["breakpoints"] = list(term.breakpoints)
        if term.singular:
            out["singular"] = list(term.singular)
        return out
    if isinstance(term, DyadicPiecewiseConstant):
        return {"type": "piecewise", "level": term.level, "values": list(term.values)}
    if isinstance(term, Product):
        return {
            "type": "product",
            "piecewise": _term_to_dict(term.piecewise),
            "analytic": _term_to_dict(term.analytic),
        }
    raise TypeError(f"cannot serialize {type(term).__name__}")


def _term_from_dict(data: dict) -> Term:
    kind = data.get("type")
    if kind == "analytic":
        return Analytic(
            data["expr"],
            inverse_expr=data.get("inverse_expr"),
            breakpoints=tuple(data.get("breakpoints", ())),
            singular=tuple(data.get("singular", ())),
        )
    if kind == "piecewise":
        return DyadicPiecewiseConstant(int(data["level"]), tuple(data["values"]))
    if kind == "product":
        pw = _term_from_dict(data["piecewise"])
        an = _term_from_dict(data["analytic"])
        if not isinstance(pw, DyadicPiecewiseConstant) or not isinstance(an, Analytic):
            raise ValueError("product needs a piecewise and an analytic factor")
        return Product(pw, an)
    raise ValueError(f"unknown term type {kind!r}")


def problem_to_dict(problem: ProblemSpec) -> dict:
    return {
        "name": problem.name,
        "fine_level": problem.fine_level,
        "coefficient": _term_to_dict(problem.coefficient),
        "source": _term_to_dict(problem.source),
    }


def problem_from_dict(data: dict) -> ProblemSpec:
    if "example" in data:
        return builtin_example(int(data["example"]))
    return ProblemSpec(
        coefficient=_term_from_dict(data["coefficient"]),
        source=_term_from_dict(data["source"]),
        name=data.get("name", "problem"),
        fine_level=int(data.get("fine_level", 14)),
    )


def load_problem(path) -> ProblemSpec:
    with open(path) as fh:
        return problem_from_dict(json.load(fh))


def save_problem(problem: ProblemSpec, path):
    with open(path, "w") as fh:
        json.dump(problem_to_dict(problem), fh, indent=2)
