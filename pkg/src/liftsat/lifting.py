"""Lifting fields and operators from the chart to the split coordinates.

A basis field X_i lifts to X_i + sum_j M_ij(x) Y_j where Y_j = d/ds_j
are the fiber coordinate fields and the vertical matrix M depends on
the base point only.  Operators lift term by term; expanding and
normal-ordering splits the result into the original operator plus a
remainder whose terms all carry at least one Y factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import Expr, ONE, ZERO, simplify, free_symbols
from .fields import (
    VectorField, DiffOperator, vector_field, coordinate_field,
    diff_operator, bracket_table_from_tensor,
)
from . import groupgeom

__all__ = [
    "LiftedField", "LiftedOperator", "vertical_matrix",
    "vertical_matrix_numeric", "lift_field", "lift_operator",
    "lifted_adjoint", "lifted_basis_fields", "lifted_operator_report",
]


@dataclass(frozen=True)
class LiftedField:
    """Horizontal copy of a base field plus its vertical part."""

    horizontal: VectorField          # on the base chart
    vertical_coeffs: tuple[Expr, ...]  # coefficients of Y_1..Y_p, in x only
    combined: VectorField            # on the split chart

    def drop_vertical(self) -> VectorField:
        return self.horizontal


@dataclass(frozen=True)
class LiftedOperator:
    base: DiffOperator        # terms without Y factors, on the split chart
    remainder: DiffOperator   # every term carries at least one Y factor
    total: DiffOperator

    @property
    def n_fields(self) -> int:
        return len(self.total.fields)


def vertical_matrix(model, x=None):
    """The p x n matrix expressing vertical parts in the Y basis.

    With ``x`` given returns floats (closed form when the model carries
    one); otherwise returns the symbolic rows (closed-form models only).
    """
    if x is None:
        if model.vertical_rows_exprs is None:
            raise ValueError("model has no symbolic vertical matrix; "
                             "evaluate at a point instead")
        return tuple(model.vertical_rows_exprs)
    x = np.asarray(x, dtype=float)
    if model.vertical_rows_exprs is not None:
        rows = []
        for i, row in enumerate(model.vertical_rows_exprs):
            fns = [model._fn(f"vrow{i}:{j}", c, model.coords)
                   for j, c in enumerate(row)]
            rows.append([float(fn(*x)) for fn in fns])
        return np.asarray(rows)
    return vertical_matrix_numeric(model, x)


def vertical_matrix_numeric(model, x) -> np.ndarray:
    """Numeric vertical matrix through the trivialization pushforward."""
    x = np.asarray(x, dtype=float)
    return np.stack([groupgeom.vertical_row_numeric(model, x, i)
                     for i in range(model.n)])


def lift_field(model, i: int) -> LiftedField:
    """Lift basis field i to the split chart using the model's vertical rows."""
    if model.vertical_rows_exprs is None:
        raise ValueError("symbolic lifting needs a model with vertical rows; "
                         "use vertical_matrix_numeric for point values")
    base = model.presentation.basis[i]
    row = model.vertical_rows_exprs[i]
    split_chart = model.split_chart
    coeffs = tuple(base.coeffs) + tuple(row)
    combined = vector_field(split_chart, coeffs)
    horizontal = base
    return LiftedField(horizontal, tuple(simplify(c) for c in row), combined)


def _split_bracket_table(model):
    """Brackets over [lifted X_1..X_n, Y_1..Y_p]: the X part keeps the
    structure constants, Y fields are central among themselves and
    commute with the (x-only) X coefficients."""
    n, p = model.n, model.p
    tensor = model.presentation.tensor
    table = {}
    for i in range(n + p):
        for j in range(n + p):
            if i < n and j < n:
                table[(i, j)] = tuple((simplify(ONE * c), k)
                                      for k, c in _tensor_row(tensor, i, j))
            else:
                table[(i, j)] = ()
    return table


def _tensor_row(tensor, i, j):
    from .expr import Const
    n = len(tensor)
    return [(Const(tensor[i][j][k]), k) for k in range(n) if tensor[i][j][k] != 0]


def lifted_basis_fields(model) -> tuple[VectorField, ...]:
    """[X_1..X_n extended by zero, Y_1..Y_p] on the split chart."""
    split_chart = model.split_chart
    ext = tuple(vector_field(split_chart,
                             tuple(X.coeffs) + tuple(ZERO for _ in model.fiber_coords))
                for X in model.presentation.basis)
    ys = tuple(coordinate_field(split_chart, name) for name in model.fiber_coords)
    return ext + ys


def lift_operator(model, L: DiffOperator | None = None) -> LiftedOperator:
    """Lift an operator over the basis fields to the split coordinates.

    Substitutes each basis field with its lifted version, expands to
    normal form over [X_1..X_n, Y_1..Y_p], and splits off the remainder
    (terms with a Y factor).
    """
    if L is None:
        L = model.operator
    pres = model.presentation
    n, p = model.n, model.p
    split_chart = model.split_chart
    fields = lifted_basis_fields(model)
    names = tuple(L.names) + tuple(f"Y{j+1}" for j in range(p))
    table = _split_bracket_table(model)

    def op(terms) -> DiffOperator:
        return diff_operator(split_chart, fields, terms, names, table,
                             max_order=L.max_order)

    if model.vertical_rows_exprs is None:
        raise ValueError("operator lifting needs symbolic vertical rows")

    # first-order operators for each lifted field
    lifted_ops = []
    for i in range(n):
        terms = {_unit_alpha(n + p, i): ONE}
        for j, coeff in enumerate(model.vertical_rows_exprs[i]):
            if simplify(coeff) != ZERO:
                terms[_unit_alpha(n + p, n + j)] = simplify(coeff)
        lifted_ops.append(op(terms))

    total = op({})
    identity = tuple(0 for _ in range(n + p))
    for alpha, r in L.terms:
        word = []
        for i, k in enumerate(alpha):
            word.extend([i] * k)
        piece = op({identity: r})
        for i in reversed(word):
            piece = lifted_ops[i].compose(piece)
        total = total + piece

    base_terms = {}
    rem_terms = {}
    for alpha, coeff in total.terms:
        if any(alpha[n + j] for j in range(p)):
            rem_terms[alpha] = coeff
        else:
            base_terms[alpha] = coeff
    for coeff in rem_terms.values():
        fiber_syms = free_symbols(coeff) & set(model.fiber_coords)
        if fiber_syms:
            raise RuntimeError(
                f"remainder coefficient depends on fiber coordinates {fiber_syms}; "
                "vertical invariance is violated")
    return LiftedOperator(op(base_terms), op(rem_terms), total)


def _unit_alpha(length: int, i: int) -> tuple[int, ...]:
    return tuple(1 if k == i else 0 for k in range(length))


def lifted_adjoint(model, lifted: LiftedOperator, density: Expr = ONE) -> LiftedOperator:
    """Formal adjoint of a lifted operator w.r.t. density(x) * (vol ^ ds)."""
    fiber_syms = free_symbols(density) & set(model.fiber_coords)
    if fiber_syms:
        raise ValueError(f"density must not depend on fiber coordinates {fiber_syms}")
    total = lifted.total.adjoint(density)
    n, p = model.n, model.p
    base_terms, rem_terms = {}, {}
    for alpha, coeff in total.terms:
        fiber_deps = free_symbols(coeff) & set(model.fiber_coords)
        if fiber_deps:
            raise RuntimeError(
                f"adjoint coefficient picked up fiber coordinates {fiber_deps}")
        if any(alpha[n + j] for j in range(p)):
            rem_terms[alpha] = coeff
        else:
            base_terms[alpha] = coeff
    make = lambda terms: diff_operator(total.chart, total.fields, terms,
                                       total.names, total.bracket_table,
                                       total.max_order)
    return LiftedOperator(make(base_terms), make(rem_terms), total)


def lifted_operator_report(model, lifted: LiftedOperator, adjoint: LiftedOperator | None = None) -> str:
    """Human-readable text report of the lifted model."""
    lines = [f"model: {model.name}",
             f"chart: {' '.join(model.coords)}  fiber: {' '.join(model.fiber_coords)}",
             "lifted fields:"]
    for i in range(model.n):
        lf = lift_field(model, i)
        lines.append(f"  X{i+1} -> {lf.combined}")
    lines.append(f"rho     = {model.rho_expr if model.rho_expr is not None else '(numeric)'}")
    lines.append(f"c       = {model.c_expr if model.c_expr is not None else '(numeric)'}")
    lines.append(f"rho_bar = {model.rhobar_expr if model.rhobar_expr is not None else '(numeric)'}")
    lines.append(f"lifted operator: {lifted.total}")
    lines.append(f"  base part: {lifted.base}")
    lines.append(f"  remainder: {lifted.remainder}")
    if adjoint is not None:
        lines.append(f"adjoint: {adjoint.total}")
    return "\n".join(lines)
