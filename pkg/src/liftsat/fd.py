"""Fourth-order finite-difference application of differential operators.

Operators arrive in coordinate-partial form (multi-index -> coefficient)
and are applied to a black-box function by central stencils; pure and
mixed partials up to total order 2 per direction are supported, which
covers operators of order <= 4 built from order-2 factors per axis.
"""

from __future__ import annotations

import numpy as np

__all__ = ["partial_stencil", "apply_partial_form"]

_D1 = ((-2, 1.0 / 12), (-1, -8.0 / 12), (1, 8.0 / 12), (2, -1.0 / 12))
_D2 = ((-2, -1.0 / 12), (-1, 16.0 / 12), (0, -30.0 / 12), (1, 16.0 / 12), (2, -1.0 / 12))


def partial_stencil(beta: tuple[int, ...], h: float):
    """Offsets/weights for the mixed partial d^beta, 4th order, step h.

    Returns (offsets, weights): offsets of shape (K, dim) in units of h.
    """
    dim = len(beta)
    combos = [((0,) * 0, 1.0)]
    offsets = [()]
    weights = [1.0]
    for d, order in enumerate(beta):
        if order == 0:
            table = (((0,), 1.0),)
            scale = 1.0
        elif order == 1:
            table = tuple(((o,), w) for o, w in _D1)
            scale = 1.0 / h
        elif order == 2:
            table = tuple(((o,), w) for o, w in _D2)
            scale = 1.0 / (h * h)
        else:
            raise ValueError("stencils implemented for per-axis order <= 2")
        new_offsets, new_weights = [], []
        for off, wt in zip(offsets, weights):
            for (o,), w in table:
                new_offsets.append(off + (o,))
                new_weights.append(wt * w * scale)
        offsets, weights = new_offsets, new_weights
    return np.asarray(offsets, dtype=float), np.asarray(weights, dtype=float)


def apply_partial_form(partial_form: dict, f, points: np.ndarray, h: float,
                       coeff_eval=None) -> np.ndarray:
    """Evaluate sum_beta c_beta(x) d^beta f at each point.

    ``partial_form`` maps multi-indices to vectorized coefficient
    callables (or constants); ``f`` maps an (N, dim) array to N values.
    All stencil nodes across points and betas are evaluated in one call.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    npts, dim = points.shape
    pieces = []
    for beta, coeff in partial_form.items():
        offsets, weights = partial_stencil(tuple(beta), h)
        nodes = points[:, None, :] + h * offsets[None, :, :]
        pieces.append((beta, coeff, nodes, weights))
    all_nodes = np.concatenate([p[2].reshape(-1, dim) for p in pieces], axis=0)
    all_vals = np.asarray(f(all_nodes), dtype=float)
    out = np.zeros(npts)
    start = 0
    for beta, coeff, nodes, weights in pieces:
        k = nodes.shape[1]
        vals = all_vals[start:start + npts * k].reshape(npts, k)
        start += npts * k
        deriv = vals @ weights
        if callable(coeff):
            cvals = np.asarray(coeff(points), dtype=float)
        else:
            cvals = float(coeff)
        out += cvals * deriv
    return out
