"""Polynomial bump test functions with exact symbolic derivatives.

phi(y) = (1 - |A(y-c)|^2)^k on its support ellipsoid and 0 outside,
with A = diag(1/radii).  For k >= 4 applying a second-order operator
leaves a continuous function, which is all the distributional checks
need; being polynomial, the operator application stays symbolic.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .expr import Expr, ONE, ZERO, Pow, const, simplify, sym, compile_numpy, \
    differentiate

__all__ = ["BumpFunction", "operator_image_evaluator"]


@dataclass(frozen=True)
class BumpFunction:
    names: tuple[str, ...]
    center: tuple[float, ...]
    radii: tuple[float, ...]
    k: int = 6

    def __post_init__(self):
        if self.k < 4:
            raise ValueError("need k >= 4 so second-order operators stay continuous")
        if not (len(self.names) == len(self.center) == len(self.radii)):
            raise ValueError("names, center and radii must share one length")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "radii", tuple(float(v) for v in self.radii))

    @cached_property
    def expr(self) -> Expr:
        u = None
        for name, c, r in zip(self.names, self.center, self.radii):
            q = (sym(name) - const(c)) / const(r)
            q2 = q * q
            u = q2 if u is None else u + q2
        return simplify(Pow(simplify(ONE - u), self.k))

    @cached_property
    def _fn(self):
        return compile_numpy(self.expr, self.names)

    @cached_property
    def support_box(self) -> tuple[tuple[float, float], ...]:
        return tuple((c - r, c + r) for c, r in zip(self.center, self.radii))

    def inside(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        u = np.zeros(pts.shape[0])
        for d, (c, r) in enumerate(zip(self.center, self.radii)):
            u += ((pts[:, d] - c) / r) ** 2
        return u < 1.0

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        vals = np.asarray(self._fn(*pts.T), dtype=float)
        return np.where(self.inside(pts), vals, 0.0)

    def value_at(self, point) -> float:
        return float(self(np.asarray(point, dtype=float)[None, :])[0])

    def masked_evaluator(self, expr: Expr):
        """Vectorized evaluator of an expression valid on the support,
        extended by zero outside (used for operator images of phi)."""
        fn = compile_numpy(simplify(expr), self.names)

        def run(pts: np.ndarray) -> np.ndarray:
            pts = np.atleast_2d(np.asarray(pts, dtype=float))
            vals = np.asarray(fn(*pts.T), dtype=float)
            return np.where(self.inside(pts), vals, 0.0)

        return run


def operator_image_evaluator(partial_form, bump: BumpFunction):
    """Fast masked evaluator of (sum_beta c_beta d^beta) phi.

    Differentiates the bump symbolically per multi-index, then compiles
    the sum as one function: repeated powers of the bump polynomial are
    shared by the compiler's subexpression elimination, which matters
    when this runs inside quadrature loops.
    """
    from .expr import Add, Mul
    pieces = []
    for beta, coeff in partial_form.items():
        dphi = bump.expr
        for d, k in enumerate(beta):
            for _ in range(k):
                dphi = differentiate(dphi, bump.names[d])
        dphi = simplify(dphi)
        if dphi == ZERO:
            continue
        coeff = simplify(coeff)
        pieces.append(dphi if coeff == ONE else Mul((coeff, dphi)))
    if not pieces:
        return lambda pts: np.zeros(np.atleast_2d(pts).shape[0])
    total_expr = pieces[0] if len(pieces) == 1 else Add(tuple(pieces))
    fn = compile_numpy(total_expr, bump.names)

    def run(pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        vals = np.asarray(fn(*pts.T), dtype=float)
        return np.where(bump.inside(pts), vals, 0.0)

    return run
