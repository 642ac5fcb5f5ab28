"""Lie closure of vector fields, structure constants, rank condition.

Membership of a bracket in the current span is decided in two stages:
a least-squares fit of constant coefficients on sample-point
evaluations, then a symbolic certification that the residual field
simplifies to zero.  Only certified relations enter the
structure-constant tensor, so the tensor is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .expr import Const, ZERO, simplify
from .fields import VectorField

__all__ = [
    "LieAlgebraPresentation", "RankReport", "ClosureError",
    "lie_closure", "structure_constants", "hormander_rank", "rank_report",
    "is_nilpotent", "NilpotencyReport", "jacobi_tensor_residual",
]


class ClosureError(RuntimeError):
    pass


@dataclass(frozen=True)
class LieAlgebraPresentation:
    """Ordered bracket-closed basis; the first q entries are generators."""

    basis: tuple[VectorField, ...]
    q: int
    tensor: tuple  # tensor[i][j][k] = c_ij^k, exact Fractions

    @property
    def n(self) -> int:
        return len(self.basis)

    @property
    def chart(self) -> tuple[str, ...]:
        return self.basis[0].chart

    @property
    def m(self) -> int:
        return len(self.chart)

    def field_matrix(self, x) -> np.ndarray:
        """The m x n matrix (X_1(x) | ... | X_n(x))."""
        x = np.asarray(x, dtype=float)
        return np.stack([X.at(x) for X in self.basis], axis=1)

    def ad(self, v) -> np.ndarray:
        """Matrix of ad_v = [v, .] in the basis, for coefficient vector v."""
        n = self.n
        v = np.asarray(v, dtype=float)
        out = np.zeros((n, n))
        for j in range(n):
            for i in range(n):
                if v[i] == 0.0:
                    continue
                for k in range(n):
                    c = self.tensor[i][j][k]
                    if c != 0:
                        out[k, j] += v[i] * float(c)
        return out


@dataclass(frozen=True)
class RankReport:
    points: tuple
    ranks: tuple[int, ...]
    min_rank: int
    hormander_ok: bool


def _draw_samples(chart_dim: int, count: int, box, rng) -> np.ndarray:
    lo, hi = box
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (chart_dim,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (chart_dim,))
    return rng.uniform(lo, hi, size=(count, chart_dim))


def _eval_columns(fields, points) -> np.ndarray:
    """Stack field evaluations into columns of shape (m*S, nfields)."""
    cols = [f.evaluator()(points).reshape(-1) for f in fields]
    return np.stack(cols, axis=1)


def _rationalize(v: float, max_den: int = 10 ** 6) -> Fraction:
    return Fraction(v).limit_denominator(max_den)


def _certify_membership(cand: VectorField, basis, coeffs) -> tuple | None:
    """Return exact coefficients if cand == sum(c_k X_k) symbolically."""
    exact = tuple(_rationalize(c) for c in coeffs)
    residual = cand
    for c, X in zip(exact, basis):
        if c != 0:
            residual = residual - X.scale(Const(c))
    if residual.is_zero():
        return exact
    return None


def lie_closure(generators, max_depth: int = 6, sample_points=None,
                box=None, seed: int = 0, residual_tol: float = 1e-9):
    """Close the generators under brackets; returns a presentation.

    Raises :class:`ClosureError` if the dimension is still growing at
    ``max_depth`` (evidence against finite dimensionality) or if the
    sample set stays degenerate after resampling.
    """
    generators = tuple(generators)
    if not generators:
        raise ValueError("need at least one generator")
    chart = generators[0].chart
    for g in generators:
        if g.chart != chart:
            raise ValueError("generators must share one chart")
    if box is None:
        box = (-2.0, 2.0)
    rng = np.random.default_rng(seed)

    basis: list[VectorField] = []
    depth_of: list[int] = []
    relations: dict[tuple[int, int], tuple] = {}

    def samples_for(n_basis: int) -> np.ndarray:
        if sample_points is not None:
            return np.atleast_2d(np.asarray(sample_points, dtype=float))
        return _draw_samples(len(chart), max(4 * max(n_basis, len(generators)), 8),
                             box, rng)

    def try_member(cand: VectorField, pts) -> tuple | None:
        if cand.is_zero():
            return tuple(Fraction(0) for _ in basis)
        A = _eval_columns(basis, pts)
        b = cand.evaluator()(pts).reshape(-1)
        coeffs, *_ = np.linalg.lstsq(A, b, rcond=None)
        resid = np.max(np.abs(A @ coeffs - b))
        scale = max(1.0, float(np.max(np.abs(b))))
        if resid > residual_tol * scale:
            return None
        exact = _certify_membership(cand, basis, coeffs)
        if exact is None:
            # numeric fit accepted but symbolic certificate failed: the
            # sample set may be degenerate; retry once with fresh points
            if sample_points is None:
                pts2 = _draw_samples(len(chart), 2 * len(pts), box, rng)
                A2 = _eval_columns(basis, pts2)
                b2 = cand.evaluator()(pts2).reshape(-1)
                c2, *_ = np.linalg.lstsq(A2, b2, rcond=None)
                if np.max(np.abs(A2 @ c2 - b2)) <= residual_tol * scale:
                    exact = _certify_membership(cand, basis, c2)
        return exact

    for g in generators:
        basis.append(g)
        depth_of.append(1)

    frontier = list(range(len(generators)))
    depth = 1
    while frontier:
        depth += 1
        if depth > max_depth:
            raise ClosureError(
                f"dimension did not stabilize at depth {max_depth}; "
                "the generated algebra may be infinite dimensional")
        pts = samples_for(len(basis))
        new_frontier = []
        pairs = [(i, j) for i in range(len(basis)) for j in frontier if i != j]
        for i, j in sorted(set(tuple(sorted(p)) for p in pairs)):
            cand = basis[i].bracket(basis[j])
            member = try_member(cand, pts)
            if member is not None:
                relations[(i, j)] = member
            else:
                basis.append(cand)
                depth_of.append(depth)
                new_frontier.append(len(basis) - 1)
                pts = samples_for(len(basis))
        frontier = new_frontier

    # complete the relation table over all pairs
    n = len(basis)
    pts = samples_for(n)
    tensor = [[[Fraction(0)] * n for _ in range(n)] for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            member = relations.get((i, j))
            if member is None:
                member = try_member(basis[i].bracket(basis[j]), pts)
            if member is None:
                raise ClosureError(
                    f"bracket [X{i+1},X{j+1}] escaped the computed basis; "
                    "degenerate sample set or non-closed algebra")
            member = tuple(member) + tuple(Fraction(0) for _ in range(n - len(member)))
            for k in range(n):
                tensor[i][j][k] = member[k]
                tensor[j][i][k] = -member[k]
    tensor = tuple(tuple(tuple(row) for row in plane) for plane in tensor)
    pres = LieAlgebraPresentation(tuple(basis), len(generators), tensor)
    bad = jacobi_tensor_residual(tensor)
    if bad != 0:
        raise ClosureError(f"structure constants violate the Jacobi identity ({bad})")
    return pres


def structure_constants(pres: LieAlgebraPresentation):
    """The exact structure-constant tensor c_ij^k of the presentation."""
    return pres.tensor


def jacobi_tensor_residual(tensor) -> Fraction:
    """Max |sum_m (c_ij^m c_mk^l + cyclic)| over all index tuples."""
    n = len(tensor)
    worst = Fraction(0)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    s = Fraction(0)
                    for m in range(n):
                        s += (tensor[i][j][m] * tensor[m][k][l]
                              + tensor[j][k][m] * tensor[m][i][l]
                              + tensor[k][i][m] * tensor[m][j][l])
                    worst = max(worst, abs(s))
    return worst


def hormander_rank(pres: LieAlgebraPresentation, x, svd_tol: float = 1e-10):
    """Rank of (X_1(x)|...|X_n(x)) via singular values."""
    M = pres.field_matrix(x)
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > svd_tol * s[0]))


def rank_report(pres: LieAlgebraPresentation, points) -> RankReport:
    pts = [tuple(float(v) for v in p) for p in np.atleast_2d(np.asarray(points, dtype=float))]
    ranks = tuple(hormander_rank(pres, p) for p in pts)
    min_rank = min(ranks) if ranks else 0
    return RankReport(tuple(pts), ranks, min_rank, min_rank == pres.m)


@dataclass(frozen=True)
class NilpotencyReport:
    nilpotent: bool
    lower_central_step: int | None
    derived_length: int | None
    solvable: bool


def _bracket_span(tensor, left_span: np.ndarray, right_span: np.ndarray) -> np.ndarray:
    """Span of [U, V] given spanning row-sets U, V in basis coordinates."""
    n = len(tensor)
    rows = []
    for u in left_span:
        for v in right_span:
            w = np.zeros(n)
            for i in range(n):
                if u[i] == 0.0:
                    continue
                for j in range(n):
                    if v[j] == 0.0:
                        continue
                    for k in range(n):
                        c = tensor[i][j][k]
                        if c != 0:
                            w[k] += u[i] * v[j] * float(c)
            rows.append(w)
    if not rows:
        return np.zeros((0, n))
    return _row_space(np.array(rows))


def _row_space(rows: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    if rows.size == 0:
        return rows.reshape(0, rows.shape[-1])
    u, s, vt = np.linalg.svd(rows, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((0, rows.shape[1]))
    r = int(np.sum(s > tol * s[0]))
    return vt[:r]


def is_nilpotent(tensor, max_steps: int = 32) -> NilpotencyReport:
    """Lower central series and derived series from the tensor."""
    n = len(tensor)
    full = np.eye(n)

    # nilpotency step c: smallest c with g^(c+1) = 0 for g^(k+1) = [g, g^k]
    lcs = _bracket_span(tensor, full, full)
    lcs_step = None
    for step in range(1, max_steps + 1):
        if lcs.shape[0] == 0:
            lcs_step = step
            break
        lcs = _bracket_span(tensor, full, lcs)
    nilpotent = lcs_step is not None

    der = _bracket_span(tensor, full, full)
    der_len = None
    for step in range(1, max_steps + 1):
        if der.shape[0] == 0:
            der_len = step
            break
        der = _bracket_span(tensor, der, der)
    return NilpotencyReport(nilpotent, lcs_step, der_len, der_len is not None)
