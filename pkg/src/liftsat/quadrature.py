"""Panel quadrature shared by the saturation and verification paths.

All integrators use nested Clenshaw-Curtis nodes so a coarse rule is
embedded in the fine one; the panel error estimate is the difference of
the two rules.  Everything evaluates integrands on whole node arrays at
once -- integrands must be numpy-vectorized.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "cc_rule", "integrate_1d", "graded_panels", "panel_values_1d",
    "adaptive_tensor_2d", "adaptive_tensor_3d", "QuadratureError",
]


class QuadratureError(RuntimeError):
    pass


@lru_cache(maxsize=None)
def cc_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Clenshaw-Curtis nodes/weights on [-1, 1] with n+1 points, n even.

    Node j is cos(j*pi/n); the n/2+1 even-indexed nodes of rule 2n are
    exactly the nodes of rule n, which gives a free embedded estimate.
    """
    if n % 2 != 0 or n < 2:
        raise ValueError("n must be even and >= 2")
    j = np.arange(n + 1)
    theta = j * np.pi / n
    x = np.cos(theta)
    w = np.zeros(n + 1)
    for idx in range(n + 1):
        s = 0.0
        for k in range(1, n // 2 + 1):
            b = 1.0 if k == n // 2 else 2.0
            s += b * np.cos(2 * k * theta[idx]) / (4 * k * k - 1)
        c = 1.0 if idx in (0, n) else 2.0
        w[idx] = (c / n) * (1.0 - s)
    return x, w


def _panel_nodes(lo: np.ndarray, hi: np.ndarray, x: np.ndarray) -> np.ndarray:
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return mid[..., None] + half[..., None] * x


def integrate_1d(f, a: float, b: float, tol: float = 1e-10,
                 n: int = 16, max_panels: int = 4096) -> tuple[float, float]:
    """Adaptive bisection on [a, b]; returns (value, error estimate)."""
    x, w = cc_rule(n)
    xc, wc = cc_rule(n // 2)

    def panel(lo, hi):
        nodes = _panel_nodes(np.array([lo]), np.array([hi]), x)[0]
        vals = np.asarray(f(nodes), dtype=float)
        half = 0.5 * (hi - lo)
        fine = half * float(vals @ w)
        coarse = half * float(vals[::2] @ wc)
        return fine, abs(fine - coarse)

    panels = [(a, b, *panel(a, b))]
    while len(panels) < max_panels:
        total = sum(p[2] for p in panels)
        err = sum(p[3] for p in panels)
        if err <= tol * max(1.0, abs(total)):
            return total, err
        worst = max(range(len(panels)), key=lambda i: panels[i][3])
        lo, hi, _, _ = panels.pop(worst)
        mid = 0.5 * (lo + hi)
        panels.append((lo, mid, *panel(lo, mid)))
        panels.append((mid, hi, *panel(mid, hi)))
    total = sum(p[2] for p in panels)
    err = sum(p[3] for p in panels)
    return total, err


def graded_panels(center: np.ndarray, scale: np.ndarray, lo: float, hi: float,
                  max_len: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Per-row panel boundaries on [lo, hi], dyadically graded around center.

    Returns (plo, phi) of shape (rows, L); empty slots collapse to
    zero-width panels.  Row i uses boundaries center_i +- scale_i*2^k.
    """
    center = np.asarray(center, dtype=float)
    scale = np.asarray(scale, dtype=float)
    rows = center.shape[0]
    bounds = []
    for i in range(rows):
        c, d = center[i], max(scale[i], 1e-300)
        pts = {lo, hi}
        if lo < c < hi:
            pts.add(c)
        k = 0
        while True:
            off = d * (2.0 ** k)
            added = False
            for p in (c - off, c + off):
                if lo < p < hi:
                    pts.add(p)
                    added = True
            if not added and off > (hi - lo):
                break
            k += 1
            if k > 200:
                break
        bounds.append(np.array(sorted(pts)))
    L = max(len(b) - 1 for b in bounds)
    if L > max_len:
        raise QuadratureError(f"graded mesh needs {L} panels > max {max_len}")
    plo = np.zeros((rows, L))
    phi = np.zeros((rows, L))
    for i, b in enumerate(bounds):
        k = len(b) - 1
        plo[i, :k] = b[:-1]
        phi[i, :k] = b[1:]
        plo[i, k:] = b[-1]
        phi[i, k:] = b[-1]
    return plo, phi


def panel_values_1d(f_rows, plo: np.ndarray, phi: np.ndarray,
                    n: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Integrate row-wise over given panels; f_rows maps a (rows, K) node
    array to values of the same shape.  Returns (values, error estimates)
    per row."""
    x, w = cc_rule(n)
    xc, wc = cc_rule(n // 2)
    nodes = _panel_nodes(plo, phi, x)                  # (rows, L, n+1)
    rows, L, _ = nodes.shape
    vals = f_rows(nodes.reshape(rows, -1)).reshape(rows, L, n + 1)
    half = 0.5 * (phi - plo)
    fine = np.einsum("rlk,k->rl", vals, w) * half
    coarse = np.einsum("rlk,k->rl", vals[:, :, ::2], wc) * half
    return fine.sum(axis=1), np.abs(fine - coarse).sum(axis=1)


# ---------------------------------------------------------------------------
# adaptive tensor panels

@dataclass
class _Panel:
    lo: tuple
    hi: tuple
    value: float
    err: float


def _adaptive_tensor(f, lo, hi, dim, tol, n, max_panels,
                     singular=None, excise=0.0, min_size=1e-3, chunk=16):
    """Shared quadtree/octree refinement driver with batched evaluation."""
    x, w = cc_rule(n)
    _, wc = cc_rule(n // 2)
    npts = x.size
    # flattened tensor weights for the fine and embedded coarse rule
    wf = w.copy()
    for _ in range(dim - 1):
        wf = np.multiply.outer(wf, w)
    wf = wf.reshape(-1)
    wcf = wc.copy()
    for _ in range(dim - 1):
        wcf = np.multiply.outer(wcf, wc)
    wcf = wcf.reshape(-1)
    coarse_idx = np.arange(npts ** dim).reshape([npts] * dim)
    coarse_idx = coarse_idx[(slice(None, None, 2),) * dim].reshape(-1)
    # local node offsets on the reference cube, shape (npts**dim, dim)
    ref = np.stack([g.reshape(-1) for g in
                    np.meshgrid(*([x] * dim), indexing="ij")], axis=1)

    sing = None if singular is None else np.asarray(singular, dtype=float)

    def near_singular(plo, phi):
        if sing is None:
            return False
        return all(plo[d] - (phi[d] - plo[d]) <= sing[d] <= phi[d] + (phi[d] - plo[d])
                   for d in range(dim))

    def make_batch(boxes):
        """boxes: list of (lo_tuple, hi_tuple); evaluates f once."""
        B = len(boxes)
        los = np.array([b[0] for b in boxes])
        his = np.array([b[1] for b in boxes])
        mid = 0.5 * (los + his)
        half = 0.5 * (his - los)
        pts = mid[:, None, :] + half[:, None, :] * ref[None, :, :]
        pts = pts.reshape(-1, dim)
        if sing is not None and excise > 0.0:
            d2 = np.sum((pts - sing[None, :]) ** 2, axis=1)
            mask = d2 >= excise * excise
        else:
            mask = None
        vals = np.asarray(f(pts), dtype=float)
        if mask is not None:
            vals = np.where(mask, vals, 0.0)
        vals = vals.reshape(B, -1)
        scale = np.prod(half, axis=1)
        fine = (vals @ wf) * scale
        coarse = (vals[:, coarse_idx] @ wcf) * scale
        out = []
        for b in range(B):
            err = abs(fine[b] - coarse[b])
            size = float(np.max(his[b] - los[b]))
            if near_singular(los[b], his[b]) and size > min_size:
                err = max(err, abs(fine[b]) + 1.0)  # force refinement at the pole
            out.append(_Panel(tuple(los[b]), tuple(his[b]), float(fine[b]), err))
        return out

    heap: list = []
    counter = 0
    total_val = 0.0
    total_err = 0.0

    def push(p):
        nonlocal counter, total_val, total_err
        heapq.heappush(heap, (-p.err, counter, p))
        counter += 1
        total_val += p.value
        total_err += p.err

    for p in make_batch([(tuple(lo), tuple(hi))]):
        push(p)
    evals = 1
    frozen_err = 0.0
    while heap:
        if total_err + frozen_err <= tol * max(1.0, abs(total_val)):
            break
        if evals >= max_panels:
            break
        children_boxes = []
        popped = 0
        while heap and popped < chunk:
            neg_err, _, p = heap[0]
            if -neg_err <= 1e-300:
                break
            heapq.heappop(heap)
            total_val -= p.value
            total_err -= p.err
            size = max(p.hi[d] - p.lo[d] for d in range(dim))
            limit = min_size if near_singular(p.lo, p.hi) else 1e-9
            if size <= limit:
                total_val += p.value
                frozen_err += min(p.err, abs(p.value))
                popped += 1
                continue
            mids = [0.5 * (p.lo[d] + p.hi[d]) for d in range(dim)]
            for corner in range(2 ** dim):
                clo, chi = [], []
                for d in range(dim):
                    if (corner >> d) & 1:
                        clo.append(mids[d])
                        chi.append(p.hi[d])
                    else:
                        clo.append(p.lo[d])
                        chi.append(mids[d])
                children_boxes.append((tuple(clo), tuple(chi)))
            popped += 1
        if not children_boxes:
            break
        for p in make_batch(children_boxes):
            push(p)
        evals += len(children_boxes)
    return total_val, total_err + frozen_err


def adaptive_tensor_2d(f, box, tol: float = 1e-6, n: int = 16,
                       max_panels: int = 4000, singular=None,
                       excise: float = 0.0, min_size: float = 1e-3):
    """Adaptive tensor quadrature over box = ((x0,x1),(y0,y1)).

    ``f`` maps an (N, 2) point array to N values.  If ``singular`` is
    given, panels near it are refined down to ``min_size`` and nodes
    within ``excise`` of it contribute zero.
    """
    (x0, x1), (y0, y1) = box
    return _adaptive_tensor(f, (x0, y0), (x1, y1), 2, tol, n, max_panels,
                            singular, excise, min_size)


def adaptive_tensor_3d(f, box, tol: float = 1e-6, n: int = 8,
                       max_panels: int = 20000, singular=None,
                       excise: float = 0.0, min_size: float = 1e-3):
    (x0, x1), (y0, y1), (z0, z1) = box
    return _adaptive_tensor(f, (x0, y0, z0), (x1, y1, z1), 3, tol, n,
                            max_panels, singular, excise, min_size)
