"""Lifted models: chart + algebra + group data, with closed forms for the
built-in Grushin and sine models.

A model bundles the Lie algebra presentation on the chart with the
group-side maps (E, section, products, coordinate changes) and the
density factors.  Built-ins carry closed forms; anything missing falls
back to the generic numeric paths in :mod:`liftsat.groupgeom`.

Split coordinates are (x, s): base chart coordinates plus exponential
coordinates on the model fiber, so the fiber volume form is literally
ds and the full left Haar form is rho_bar(x) * (vol wedge ds).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from fractions import Fraction

import numpy as np

from . import groupgeom
from .closure import LieAlgebraPresentation, lie_closure
from .expr import (
    Expr, Const, ONE, ZERO, PI, Mul, parse, simplify, differentiate,
    compile_numpy, sym,
)
from .fields import VectorField, DiffOperator, vector_field, diff_operator, \
    bracket_table_from_tensor

__all__ = ["LiftedModel", "build_grushin", "build_sine_se2", "get_model",
           "builtin_names", "ConversionError"]


class ConversionError(ValueError):
    """Coordinate conversion requested outside its validity domain."""


@dataclass
class LiftedModel:
    name: str
    presentation: LieAlgebraPresentation
    base_point: np.ndarray
    fiber_coords: tuple[str, ...]
    operator: DiffOperator
    fiber_basis: np.ndarray                       # (p, n) orthonormal rows
    # closed-form hooks; None selects the generic numeric path
    e_map_closed: object = None                   # xi -> x
    section_closed: object = None                 # x -> xi
    split_of_exp1_closed: object = None           # xi -> (x, s)
    exp1_of_split_closed: object = None           # (x, s) -> xi
    product_split_closed: object = None           # (g, h) -> g*h, vectorized
    inverse_split_closed: object = None
    psi_exprs: tuple[Expr, ...] | None = None     # split coords of xi, symbolic
    lifted_field_exprs: tuple[VectorField, ...] | None = None
    vertical_rows_exprs: tuple[tuple[Expr, ...], ...] | None = None
    rho_expr: Expr | None = None
    c_expr: Expr | None = None
    rhobar_expr: Expr | None = None
    ker_frame_exprs: tuple[tuple[Expr, ...], ...] | None = None
    h_generators: tuple[tuple[Expr, ...], ...] = ()
    kernel_name: str | None = None
    sample_box: tuple = ((-2.0, -2.0), (2.0, 2.0))
    orientation_sign: int = 1
    source_text: str | None = None
    _rho_bar_cache: dict = dc_field(default_factory=dict, repr=False)
    _compiled: dict = dc_field(default_factory=dict, repr=False)

    # -- dimensions ---------------------------------------------------------

    @property
    def coords(self) -> tuple[str, ...]:
        return self.presentation.chart

    @property
    def m(self) -> int:
        return self.presentation.m

    @property
    def n(self) -> int:
        return self.presentation.n

    @property
    def p(self) -> int:
        return self.n - self.m

    @property
    def split_chart(self) -> tuple[str, ...]:
        return self.coords + self.fiber_coords

    def _fn(self, key: str, expr: Expr, names) -> object:
        if key not in self._compiled:
            self._compiled[key] = compile_numpy(expr, names)
        return self._compiled[key]

    # -- group maps ----------------------------------------------------------

    def e_map(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.e_map_closed is not None:
            return np.asarray(self.e_map_closed(xi), dtype=float)
        return groupgeom.e_map_generic(self.presentation, self.base_point, xi)

    def section(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.section_closed is not None:
            return np.asarray(self.section_closed(x), dtype=float)
        return groupgeom.section_ell_generic(self.presentation, self.base_point, x)

    def split_of_exp1(self, xi) -> tuple[np.ndarray, np.ndarray]:
        xi = np.asarray(xi, dtype=float)
        if self.split_of_exp1_closed is not None:
            x, s = self.split_of_exp1_closed(xi)
            return np.asarray(x, dtype=float), np.asarray(s, dtype=float)
        x = self.e_map(xi)
        zeta = self.product_exp1(xi, -self.section(x))
        return x, self.fiber_basis @ zeta

    def exp1_of_split(self, x, s) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if self.exp1_of_split_closed is not None:
            return np.asarray(self.exp1_of_split_closed(x, s), dtype=float)
        eta = (s[:, None] * self.fiber_basis).sum(axis=0)
        return self.product_exp1(eta, self.section(x))

    def product_exp1(self, a, b) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if self.product_split_closed is not None and self.split_of_exp1_closed is not None:
            ga = np.concatenate(self._split_pair(a))
            gb = np.concatenate(self._split_pair(b))
            prod = self.product_split_closed(ga[None, :], gb[None, :])[0]
            return self.exp1_of_split(prod[:self.m], prod[self.m:])
        return groupgeom.product_exp1_generic(self.presentation, a, b)

    def _split_pair(self, xi):
        x, s = self.split_of_exp1(xi)
        return x, s

    def product_split(self, g, h) -> np.ndarray:
        """Group law in split coordinates; g, h of shape (..., m+p)."""
        g = np.atleast_2d(np.asarray(g, dtype=float))
        h = np.atleast_2d(np.asarray(h, dtype=float))
        if self.product_split_closed is not None:
            return self.product_split_closed(g, h)
        out = []
        for ga, hb in zip(g, h):
            xi = self.product_exp1(self.exp1_of_split(ga[:self.m], ga[self.m:]),
                                   self.exp1_of_split(hb[:self.m], hb[self.m:]))
            x, s = self.split_of_exp1(xi)
            out.append(np.concatenate([x, s]))
        return np.asarray(out)

    def inverse_split(self, g) -> np.ndarray:
        g = np.atleast_2d(np.asarray(g, dtype=float))
        if self.inverse_split_closed is not None:
            return self.inverse_split_closed(g)
        out = []
        for ga in g:
            xi = self.exp1_of_split(ga[:self.m], ga[self.m:])
            x, s = self.split_of_exp1(-xi)
            out.append(np.concatenate([x, s]))
        return np.asarray(out)

    # -- frames and densities -------------------------------------------------

    def ker_frame(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.ker_frame_exprs is not None:
            rows = []
            for r, row in enumerate(self.ker_frame_exprs):
                fns = [self._fn(f"ker{r}:{k}", c, self.coords)
                       for k, c in enumerate(row)]
                rows.append([float(fn(*x)) for fn in fns])
            return np.asarray(rows)
        return groupgeom.ker_frame_numeric(self.presentation, x)

    def rho(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.rho_expr is not None:
            return float(self._fn("rho", self.rho_expr, self.coords)(*x))
        return groupgeom.gram_density_rho(self.presentation, x)

    def c(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.c_expr is not None:
            return float(self._fn("c", self.c_expr, self.coords)(*x))
        return groupgeom.fiber_scaling_c_generic(self, x)

    def rho_bar(self, x) -> float:
        key = tuple(float(v) for v in np.asarray(x, dtype=float))
        if key not in self._rho_bar_cache:
            if self.rhobar_expr is not None:
                val = float(self._fn("rhobar", self.rhobar_expr, self.coords)(*key))
            else:
                val = self.rho(key) * self.c(key)
            self._rho_bar_cache[key] = val
        return self._rho_bar_cache[key]

    def rho_bar_many(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if self.rhobar_expr is not None:
            fn = self._fn("rhobar", self.rhobar_expr, self.coords)
            return np.broadcast_to(np.asarray(fn(*xs.T), dtype=float),
                                   (xs.shape[0],)).copy()
        return np.asarray([self.rho_bar(x) for x in xs])


# ---------------------------------------------------------------------------
# built-in: Grushin plane lifting to the polarized Heisenberg group

def _grushin_closed_forms():
    def e_map(xi):
        return np.array([xi[0], xi[2] + 0.5 * xi[0] * xi[1]])

    def section(x):
        return np.array([x[0], 0.0, x[1]])

    def split_of_exp1(xi):
        return np.array([xi[0], xi[2] + 0.5 * xi[0] * xi[1]]), np.array([xi[1]])

    def exp1_of_split(x, s):
        return np.array([x[0], s[0], x[1] - 0.5 * s[0] * x[0]])

    def product(g, h):
        out = np.empty_like(g)
        out[:, 0] = g[:, 0] + h[:, 0]
        out[:, 1] = g[:, 1] + h[:, 1] + g[:, 0] * h[:, 2]
        out[:, 2] = g[:, 2] + h[:, 2]
        return out

    def inverse(g):
        out = np.empty_like(g)
        out[:, 0] = -g[:, 0]
        out[:, 1] = -g[:, 1] + g[:, 0] * g[:, 2]
        out[:, 2] = -g[:, 2]
        return out

    return e_map, section, split_of_exp1, exp1_of_split, product, inverse


def build_grushin() -> LiftedModel:
    chart = ("x1", "x2")
    x1 = sym("x1")
    X1 = vector_field(chart, [ONE, ZERO])
    X2 = vector_field(chart, [ZERO, x1])
    pres = lie_closure([X1, X2])
    bt = bracket_table_from_tensor(pres.tensor)
    op = diff_operator(chart, pres.basis, {(2, 0, 0): ONE, (0, 2, 0): ONE},
                       names=("X1", "X2", "X3"), bracket_table=bt)

    lifted_chart = ("x1", "x2", "s1")
    lifted = (
        vector_field(lifted_chart, [ONE, ZERO, ZERO]),
        vector_field(lifted_chart, [ZERO, x1, ONE]),
        vector_field(lifted_chart, [ZERO, ONE, ZERO]),
    )
    sqrt1x = parse("sqrt(1 + x1^2)")
    xi1, xi2, xi3 = sym("xi1"), sym("xi2"), sym("xi3")
    psi = (xi1, simplify(xi3 + Const(Fraction(1, 2)) * xi1 * xi2), xi2)

    e_map, section, soe, eos, product, inverse = _grushin_closed_forms()
    return LiftedModel(
        name="grushin",
        presentation=pres,
        base_point=np.zeros(2),
        fiber_coords=("s1",),
        operator=op,
        fiber_basis=np.array([[0.0, 1.0, 0.0]]),
        e_map_closed=e_map,
        section_closed=section,
        split_of_exp1_closed=soe,
        exp1_of_split_closed=eos,
        product_split_closed=product,
        inverse_split_closed=inverse,
        psi_exprs=psi,
        lifted_field_exprs=lifted,
        vertical_rows_exprs=((ZERO,), (ONE,), (ZERO,)),
        rho_expr=simplify(ONE / sqrt1x),
        c_expr=sqrt1x,
        rhobar_expr=ONE,
        ker_frame_exprs=((simplify(ZERO / sqrt1x),
                          simplify(ONE / sqrt1x),
                          simplify(-x1 / sqrt1x)),),
        kernel_name="heisenberg",
        sample_box=((-2.0, -2.0), (2.0, 2.0)),
    )


# ---------------------------------------------------------------------------
# built-in: sine model lifting to the universal cover of SE(2)

def _sine_ab(x1):
    """a = (1-cos t)/t, b = sin(t)/t with stable small-t branches."""
    x1 = np.asarray(x1, dtype=float)
    small = np.abs(x1) < 1e-5
    safe = np.where(small, 1.0, x1)
    a = np.where(small, x1 / 2 - x1 ** 3 / 24, (1.0 - np.cos(safe)) / safe)
    b = np.where(small, 1.0 - x1 ** 2 / 6, np.sin(safe) / safe)
    return a, b


def _sine_closed_forms():
    def split_of_exp1(xi):
        a, b = _sine_ab(xi[0])
        x2 = a * xi[1] + b * xi[2]
        s = b * xi[1] - a * xi[2]
        return np.array([xi[0], x2]), np.array([s])

    def e_map(xi):
        return split_of_exp1(xi)[0]

    def exp1_of_split(x, s):
        a, b = _sine_ab(x[0])
        den = a * a + b * b
        if den < 1e-12:
            raise ConversionError(
                f"exp coordinates are singular at x1={x[0]} (2*pi*k rotation)")
        xi2 = (a * x[1] + b * s[0]) / den
        xi3 = (b * x[1] - a * s[0]) / den
        return np.array([x[0], xi2, xi3])

    def section(x):
        return exp1_of_split(x, np.zeros(1))

    def product(g, h):
        c, s = np.cos(g[:, 0]), np.sin(g[:, 0])
        out = np.empty_like(g)
        out[:, 0] = g[:, 0] + h[:, 0]
        out[:, 1] = g[:, 1] + c * h[:, 1] + s * h[:, 2]
        out[:, 2] = g[:, 2] - s * h[:, 1] + c * h[:, 2]
        return out

    def inverse(g):
        c, s = np.cos(g[:, 0]), np.sin(g[:, 0])
        out = np.empty_like(g)
        out[:, 0] = -g[:, 0]
        out[:, 1] = -(c * g[:, 1] - s * g[:, 2])
        out[:, 2] = -(s * g[:, 1] + c * g[:, 2])
        return out

    return e_map, section, split_of_exp1, exp1_of_split, product, inverse


def build_sine_se2() -> LiftedModel:
    chart = ("x1", "x2")
    x1 = sym("x1")
    sin1, cos1 = parse("sin(x1)"), parse("cos(x1)")
    X1 = vector_field(chart, [ONE, ZERO])
    X2 = vector_field(chart, [ZERO, sin1])
    pres = lie_closure([X1, X2])
    bt = bracket_table_from_tensor(pres.tensor)
    op = diff_operator(chart, pres.basis, {(2, 0, 0): ONE, (0, 2, 0): ONE},
                       names=("X1", "X2", "X3"), bracket_table=bt)

    lifted_chart = ("x1", "x2", "s1")
    lifted = (
        vector_field(lifted_chart, [ONE, ZERO, ZERO]),
        vector_field(lifted_chart, [ZERO, sin1, cos1]),
        vector_field(lifted_chart, [ZERO, cos1, simplify(-sin1)]),
    )
    # split coordinates of xi, symbolic (valid away from xi1 = 2*pi*k)
    xi1, xi2, xi3 = sym("xi1"), sym("xi2"), sym("xi3")
    a = simplify((ONE - parse("cos(xi1)")) / xi1)
    b = simplify(parse("sin(xi1)") / xi1)
    psi = (xi1, simplify(a * xi2 + b * xi3), simplify(b * xi2 - a * xi3))

    e_map, section, soe, eos, product, inverse = _sine_closed_forms()
    return LiftedModel(
        name="sine-se2",
        presentation=pres,
        base_point=np.zeros(2),
        fiber_coords=("s1",),
        operator=op,
        fiber_basis=np.array([[0.0, 1.0, 0.0]]),
        e_map_closed=e_map,
        section_closed=section,
        split_of_exp1_closed=soe,
        exp1_of_split_closed=eos,
        product_split_closed=product,
        inverse_split_closed=inverse,
        psi_exprs=psi,
        lifted_field_exprs=lifted,
        vertical_rows_exprs=((ZERO,), (cos1,), (simplify(-sin1),)),
        rho_expr=ONE,
        c_expr=ONE,
        rhobar_expr=ONE,
        ker_frame_exprs=((ZERO, cos1, simplify(-sin1)),),
        h_generators=((simplify(Const(Fraction(2)) * Mul((ONE, PI))), ZERO, ZERO),),
        kernel_name=None,
        sample_box=((-2.0, -2.0), (2.0, 2.0)),
    )


_BUILDERS = {"grushin": build_grushin, "sine-se2": build_sine_se2}


def builtin_names() -> tuple[str, ...]:
    return tuple(sorted(_BUILDERS))


def get_model(name: str) -> LiftedModel:
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise KeyError(f"unknown built-in model '{name}'; "
                       f"available: {', '.join(builtin_names())}") from None
