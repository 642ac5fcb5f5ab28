"""Vector fields and differential operators on a single chart.

Fields are tuples of coefficient expressions; operators are linear
combinations of composition words over a fixed, ordered field list
(multi-index normal form).  Reordering a word uses a bracket table so
the field list must be closed under brackets whenever compositions can
appear out of order (adjoints, products).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .expr import (
    Expr, Const, ONE, ZERO, simplify, differentiate, substitute,
    compile_numpy, to_string, free_symbols,
)

__all__ = [
    "VectorField", "DiffOperator", "ChartMismatchError",
    "vector_field", "zero_field", "coordinate_field",
    "diff_operator", "bracket_table_from_tensor",
]


class ChartMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class VectorField:
    """First-order operator sum(a_i * d/dx_i) on the chart ``chart``."""

    chart: tuple[str, ...]
    coeffs: tuple[Expr, ...]

    def __post_init__(self):
        if len(self.chart) != len(self.coeffs):
            raise ValueError("coefficient count must equal chart dimension")
        object.__setattr__(self, "coeffs", tuple(simplify(c) for c in self.coeffs))

    def _check(self, other: "VectorField"):
        if self.chart != other.chart:
            raise ChartMismatchError(f"chart {other.chart} != {self.chart}")

    def apply(self, f: Expr) -> Expr:
        """Directional derivative sum(a_i * df/dx_i)."""
        terms = []
        for name, a in zip(self.chart, self.coeffs):
            if a == ZERO:
                continue
            df = differentiate(f, name)
            if df == ZERO:
                continue
            terms.append(a * df)
        if not terms:
            return ZERO
        out = terms[0]
        for t in terms[1:]:
            out = out + t
        return simplify(out)

    def bracket(self, other: "VectorField") -> "VectorField":
        """Commutator [self, other] = self o other - other o self."""
        self._check(other)
        coeffs = tuple(self.apply(b) - other.apply(a)
                       for a, b in zip(self.coeffs, other.coeffs))
        return VectorField(self.chart, coeffs)

    def divergence(self, density: Expr = ONE) -> Expr:
        """(1/density) * sum d(density * a_i)/dx_i."""
        total: Expr = ZERO
        for name, a in zip(self.chart, self.coeffs):
            total = total + differentiate(simplify(density * a), name)
        if density == ONE:
            return simplify(total)
        return simplify(total / density)

    def is_zero(self) -> bool:
        return all(c == ZERO for c in self.coeffs)

    def __add__(self, other: "VectorField") -> "VectorField":
        self._check(other)
        return VectorField(self.chart, tuple(a + b for a, b in zip(self.coeffs, other.coeffs)))

    def __sub__(self, other: "VectorField") -> "VectorField":
        self._check(other)
        return VectorField(self.chart, tuple(a - b for a, b in zip(self.coeffs, other.coeffs)))

    def scale(self, k) -> "VectorField":
        return VectorField(self.chart, tuple(k * c for c in self.coeffs))

    def evaluator(self):
        """Vectorized (points -> coefficient matrix) callable."""
        fns = [compile_numpy(c, self.chart) for c in self.coeffs]

        def run(points: np.ndarray) -> np.ndarray:
            points = np.atleast_2d(np.asarray(points, dtype=float))
            cols = [np.broadcast_to(np.asarray(fn(*points.T), dtype=float), (points.shape[0],))
                    for fn in fns]
            return np.stack(cols, axis=1)

        return run

    def at(self, point: Sequence[float]) -> np.ndarray:
        return self.evaluator()(np.asarray(point, dtype=float)[None, :])[0]

    def __str__(self):
        parts = [f"({to_string(c)})*d_{name}" for name, c in zip(self.chart, self.coeffs)
                 if c != ZERO]
        return " + ".join(parts) if parts else "0"


def vector_field(chart: Sequence[str], coeffs: Sequence[Expr]) -> VectorField:
    return VectorField(tuple(chart), tuple(coeffs))


def zero_field(chart: Sequence[str]) -> VectorField:
    return VectorField(tuple(chart), tuple(ZERO for _ in chart))


def coordinate_field(chart: Sequence[str], name: str) -> VectorField:
    return VectorField(tuple(chart), tuple(ONE if c == name else ZERO for c in chart))


# ---------------------------------------------------------------------------
# operator algebra

BracketTable = Mapping[tuple[int, int], tuple[tuple[Expr, int], ...]]


def bracket_table_from_tensor(tensor) -> dict[tuple[int, int], tuple[tuple[Expr, int], ...]]:
    """Bracket table from structure constants c[i][j][k] (rationals)."""
    n = len(tensor)
    table = {}
    for i in range(n):
        for j in range(n):
            entries = tuple((Const(Fraction(tensor[i][j][k])), k)
                            for k in range(n) if tensor[i][j][k] != 0)
            table[(i, j)] = entries
    return table


def _word_of(alpha: tuple[int, ...]) -> tuple[int, ...]:
    word: list[int] = []
    for i, count in enumerate(alpha):
        word.extend([i] * count)
    return tuple(word)


def _alpha_of(word: tuple[int, ...], nfields: int) -> tuple[int, ...]:
    alpha = [0] * nfields
    for i in word:
        alpha[i] += 1
    return tuple(alpha)


@dataclass(frozen=True)
class DiffOperator:
    """sum_alpha r_alpha(x) * X^alpha with X^alpha = X_1^a1 ... X_q^aq.

    ``fields`` is the fixed ordered field list the multi-indices refer
    to; ``bracket_table`` expresses commutators [X_i, X_j] in the list
    and is required whenever normal ordering has to reorder a word.
    """

    chart: tuple[str, ...]
    fields: tuple[VectorField, ...]
    terms: tuple[tuple[tuple[int, ...], Expr], ...]
    names: tuple[str, ...] = ()
    bracket_table: object = field(default=None, compare=False, hash=False)
    max_order: int = 4

    def __post_init__(self):
        if self.names == ():
            object.__setattr__(self, "names",
                               tuple(f"X{i+1}" for i in range(len(self.fields))))
        cleaned = []
        for alpha, coeff in self.terms:
            c = simplify(coeff)
            if c == ZERO:
                continue
            if sum(alpha) > self.max_order:
                raise ValueError(f"term order {sum(alpha)} exceeds max_order={self.max_order}")
            cleaned.append((tuple(alpha), c))
        cleaned.sort(key=lambda t: t[0])
        object.__setattr__(self, "terms", tuple(cleaned))

    # -- basic views --------------------------------------------------------

    @property
    def term_dict(self) -> dict[tuple[int, ...], Expr]:
        return dict(self.terms)

    @property
    def order(self) -> int:
        return max((sum(a) for a, _ in self.terms), default=0)

    def equals(self, other: "DiffOperator") -> bool:
        return self.chart == other.chart and self.term_dict == other.term_dict

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for alpha, coeff in self.terms:
            word = "".join(
                f"{self.names[i]}" + (f"^{k}" if k > 1 else "")
                for i, k in enumerate(alpha) if k > 0)
            cs = to_string(coeff)
            if not word:
                parts.append(cs)
            elif cs == "1":
                parts.append(word)
            else:
                parts.append(f"({cs})*{word}")
        return " + ".join(parts)

    # -- algebra ------------------------------------------------------------

    def _bracket_entries(self, i: int, j: int):
        if self.bracket_table is not None:
            try:
                return self.bracket_table[(i, j)]
            except KeyError:
                pass
        raise ValueError(
            f"normal ordering needs [X{i+1}, X{j+1}]; supply a bracket table "
            "over a bracket-closed field list")

    def _normalize_word(self, word: tuple[int, ...], coeff: Expr,
                        acc: dict[tuple[int, ...], Expr]) -> None:
        """Reduce a composition word to sorted multi-index form into acc."""
        for pos in range(len(word) - 1):
            a, b = word[pos], word[pos + 1]
            if a > b:
                swapped = word[:pos] + (b, a) + word[pos + 2:]
                self._normalize_word(swapped, coeff, acc)
                # [X_a, X_b] replaces the out-of-order pair
                for c, k in self._bracket_entries(a, b):
                    self._normalize_word(word[:pos] + (k,) + word[pos + 2:],
                                         simplify(coeff * c), acc)
                return
        alpha = _alpha_of(word, len(self.fields))
        acc[alpha] = simplify(acc.get(alpha, ZERO) + coeff)

    def _with_terms(self, acc: dict[tuple[int, ...], Expr]) -> "DiffOperator":
        return DiffOperator(self.chart, self.fields,
                            tuple(acc.items()), self.names,
                            self.bracket_table, self.max_order)

    def __add__(self, other: "DiffOperator") -> "DiffOperator":
        acc = dict(self.terms)
        for alpha, coeff in other.terms:
            acc[alpha] = simplify(acc.get(alpha, ZERO) + coeff)
        return self._with_terms(acc)

    def scale(self, k) -> "DiffOperator":
        return self._with_terms({a: simplify(k * c) for a, c in self.terms})

    def _word_through_coeff(self, word: tuple[int, ...], u: Expr):
        """Expand X_w o (u .) as sum (coeff, subword) o, via Leibniz."""
        if not word:
            return [(u, ())]
        head, tail = word[0], word[1:]
        out = []
        for coeff, sub in self._word_through_coeff(tail, u):
            # X_head o (coeff * X_sub) = (X_head coeff) X_sub + coeff X_head X_sub
            dc = self.fields[head].apply(coeff)
            if dc != ZERO:
                out.append((dc, sub))
            out.append((coeff, (head,) + sub))
        return out

    def compose(self, other: "DiffOperator") -> "DiffOperator":
        """Operator product self o other, in normal form."""
        if self.chart != other.chart:
            raise ChartMismatchError("operator charts differ")
        acc: dict[tuple[int, ...], Expr] = {}
        for alpha, r in self.terms:
            wa = _word_of(alpha)
            for beta, u in other.terms:
                wb = _word_of(beta)
                for coeff, sub in self._word_through_coeff(wa, u):
                    self._normalize_word(sub + wb, simplify(r * coeff), acc)
        return self._with_terms(acc)

    def apply(self, f: Expr) -> Expr:
        """Apply the operator to a scalar expression."""
        total: Expr = ZERO
        for alpha, coeff in self.terms:
            g = f
            for i in reversed(_word_of(alpha)):
                g = self.fields[i].apply(g)
            total = total + coeff * g
        return simplify(total)

    def adjoint(self, density: Expr = ONE) -> "DiffOperator":
        """Formal adjoint w.r.t. integral(f*g*density).

        Built from X* = -X - div_density(X) applied factor by factor in
        reversed order, then re-expanded to normal form.
        """
        star: list[DiffOperator] = []
        for i, X in enumerate(self.fields):
            alpha_i = tuple(1 if j == i else 0 for j in range(len(self.fields)))
            zero_alpha = tuple(0 for _ in self.fields)
            div = simplify(Const(Fraction(-1)) * X.divergence(density))
            star.append(self._with_terms({alpha_i: Const(Fraction(-1)), zero_alpha: div}))
        acc: dict[tuple[int, ...], Expr] = {}
        identity_alpha = tuple(0 for _ in self.fields)
        for alpha, r in self.terms:
            word = _word_of(alpha)
            op = self._with_terms({identity_alpha: r})
            for i in word:  # (X_w1 ... X_wk)* = X_wk* ... X_w1*; word reversed twice
                op = star[i].compose(op)
            for a, c in op.terms:
                acc[a] = simplify(acc.get(a, ZERO) + c)
        return self._with_terms(acc)

    def to_partial_form(self) -> dict[tuple[int, ...], Expr]:
        """Expand into coordinate partials: multi-index over chart coords."""
        dim = len(self.chart)
        out: dict[tuple[int, ...], Expr] = {}
        for alpha, r in self.terms:
            acc: dict[tuple[int, ...], Expr] = {tuple([0] * dim): ONE}
            for i in reversed(_word_of(alpha)):
                X = self.fields[i]
                nxt: dict[tuple[int, ...], Expr] = {}
                for beta, c in acc.items():
                    for d, (name, a) in enumerate(zip(self.chart, X.coeffs)):
                        if a == ZERO:
                            continue
                        dc = differentiate(c, name)
                        if dc != ZERO:
                            nxt[beta] = simplify(nxt.get(beta, ZERO) + a * dc)
                        up = tuple(b + (1 if k == d else 0) for k, b in enumerate(beta))
                        nxt[up] = simplify(nxt.get(up, ZERO) + a * c)
                acc = {b: c for b, c in nxt.items() if c != ZERO}
            for beta, c in acc.items():
                out[beta] = simplify(out.get(beta, ZERO) + r * c)
        return {b: c for b, c in out.items() if c != ZERO}


def diff_operator(chart: Sequence[str], fields: Sequence[VectorField],
                  terms: Mapping[tuple[int, ...], Expr] | Iterable,
                  names: Sequence[str] = (), bracket_table=None,
                  max_order: int = 4) -> DiffOperator:
    if isinstance(terms, Mapping):
        terms = tuple(terms.items())
    else:
        terms = tuple(terms)
    return DiffOperator(tuple(chart), tuple(fields), terms, tuple(names),
                        bracket_table, max_order)
