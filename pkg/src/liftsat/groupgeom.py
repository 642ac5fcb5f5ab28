"""Group-side geometry: flows, the projection E, sections, densities.

Everything here has a generic numeric path driven only by the Lie
algebra presentation (structure constants + coefficient expressions);
models carrying closed forms short-circuit these in ``models.py``.

Exponential-coordinate conventions: a point of G is the coordinate
vector xi with g = exp(sum xi_i * Xt_i); left-invariant fields read
Xt_u(xi) = phi(ad_xi)^(-1) u with phi(z) = (1 - e^(-z))/z, and the left
Haar density against Lebesgue d(xi) is |det phi(ad_xi)|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .closure import LieAlgebraPresentation
from .expr import compile_numpy

__all__ = [
    "FlowBlowupError", "SectionError", "GramSingularError", "GroupPoint",
    "flow", "flow_combo", "phi_ad", "binv_ad", "haar_density_exp1",
    "e_map_generic", "product_exp1_generic", "section_ell_generic",
    "ker_frame_numeric", "gram_density_rho", "fiber_basis_at_base",
    "fiber_scaling_c_generic", "vertical_row_numeric",
]

FLOW_RTOL = 1e-10
FLOW_ATOL = 1e-12


class FlowBlowupError(RuntimeError):
    """Integration failed before the requested time: non-completeness evidence."""


class SectionError(RuntimeError):
    pass


class GramSingularError(RuntimeError):
    """Singular Gram matrix: the rank condition fails at this point."""


@dataclass(frozen=True)
class GroupPoint:
    """A point of G in either coordinate representation."""

    tag: str  # "exp1" | "split"
    vec: tuple[float, ...]

    def __post_init__(self):
        if self.tag not in ("exp1", "split"):
            raise ValueError(f"unknown representation tag {self.tag!r}")
        object.__setattr__(self, "vec", tuple(float(v) for v in self.vec))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vec, dtype=float)


# ---------------------------------------------------------------------------
# flows on the chart

def _rhs_of_field(field):
    fns = [compile_numpy(c, field.chart) for c in field.coeffs]

    def rhs(_t, y):
        return [float(fn(*y)) for fn in fns]

    return rhs


def flow(field, start, t: float, rtol: float = FLOW_RTOL, atol: float = FLOW_ATOL):
    """Flow the ODE x' = X(x) from ``start`` for time ``t``."""
    start = np.asarray(start, dtype=float)
    if t == 0.0:
        return start.copy()
    sol = solve_ivp(_rhs_of_field(field), (0.0, t), start, method="DOP853",
                    rtol=rtol, atol=atol, dense_output=False)
    if not sol.success:
        raise FlowBlowupError(
            f"flow from {start.tolist()} failed before t={t}: {sol.message}")
    return sol.y[:, -1]


def flow_combo(pres: LieAlgebraPresentation, coeffs, start, t: float = 1.0,
               rtol: float = FLOW_RTOL, atol: float = FLOW_ATOL):
    """Flow of the constant combination sum(c_i X_i) of basis fields."""
    coeffs = np.asarray(coeffs, dtype=float)
    start = np.asarray(start, dtype=float)
    if t == 0.0 or not np.any(coeffs):
        return start.copy()
    evals = [X.evaluator() for X in pres.basis]

    def rhs(_t, y):
        pt = y[None, :]
        out = np.zeros(len(y))
        for c, ev in zip(coeffs, evals):
            if c != 0.0:
                out += c * ev(pt)[0]
        return out

    sol = solve_ivp(rhs, (0.0, t), start, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise FlowBlowupError(f"combination flow failed: {sol.message}")
    return sol.y[:, -1]


# ---------------------------------------------------------------------------
# exp-coordinate linear algebra

def phi_ad(A: np.ndarray, terms: int = 40) -> np.ndarray:
    """phi(A) = sum_k (-A)^k / (k+1)!  (d(exp) factor at A = ad_xi)."""
    n = A.shape[0]
    out = np.eye(n)
    term = np.eye(n)
    for k in range(1, terms + 1):
        term = term @ (-A) / (k + 1)
        out = out + term
        if np.max(np.abs(term)) < 1e-18:
            break
    return out


def binv_ad(A: np.ndarray) -> np.ndarray:
    """Inverse of phi(ad): takes Lie-algebra coefficients to coordinate
    velocities of the corresponding left-invariant field."""
    return np.linalg.inv(phi_ad(A))


def haar_density_exp1(pres: LieAlgebraPresentation, xi) -> float:
    """Left Haar density against Lebesgue in exp coordinates, = 1 at 0."""
    return abs(float(np.linalg.det(phi_ad(pres.ad(np.asarray(xi, dtype=float))))))


def e_map_generic(pres: LieAlgebraPresentation, z, xi) -> np.ndarray:
    """E(xi) = time-1 flow of sum(xi_i X_i) from the base point."""
    return flow_combo(pres, xi, z, 1.0)


def product_exp1_generic(pres: LieAlgebraPresentation, a, b) -> np.ndarray:
    """log(exp(a) exp(b)) by flowing the left-invariant field with
    constant coefficients b from a for unit time."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        return a.copy()
    if not np.any(a):
        return b.copy()

    def rhs(_t, y):
        return binv_ad(pres.ad(y)) @ b

    sol = solve_ivp(rhs, (0.0, 1.0), a, method="DOP853",
                    rtol=FLOW_RTOL, atol=FLOW_ATOL)
    if not sol.success:
        raise FlowBlowupError(f"group product integration failed: {sol.message}")
    return sol.y[:, -1]


# ---------------------------------------------------------------------------
# sections and frames

def independent_columns_at(pres: LieAlgebraPresentation, x, tol: float = 1e-9):
    """Indices of the first m basis fields independent at x."""
    M = pres.field_matrix(x)
    chosen: list[int] = []
    for j in range(pres.n):
        trial = chosen + [j]
        s = np.linalg.svd(M[:, trial], compute_uv=False)
        if s[-1] > tol * max(1.0, s[0]):
            chosen.append(j)
        if len(chosen) == pres.m:
            return tuple(chosen)
    raise GramSingularError(f"fields do not span the tangent space at {x}")


def section_ell_generic(pres: LieAlgebraPresentation, z, x,
                        gprime=None, tol: float = 1e-10,
                        max_iter: int = 50) -> np.ndarray:
    """Newton solve for xi in the subspace g' with E(xi) = x; ell(z) = 0."""
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    if gprime is None:
        gprime = independent_columns_at(pres, z)
    m = pres.m
    a = np.zeros(m)

    def F(avec):
        xi = np.zeros(pres.n)
        for c, j in zip(avec, gprime):
            xi[j] = c
        return flow_combo(pres, xi, z, 1.0) - x

    r = F(a)
    for _ in range(max_iter):
        if np.max(np.abs(r)) < tol:
            break
        J = np.zeros((m, m))
        h = 1e-6
        for k in range(m):
            da = np.zeros(m)
            da[k] = h
            J[:, k] = (F(a + da) - F(a - da)) / (2 * h)
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            raise SectionError(f"singular Newton system at x={x.tolist()}") from None
        damping = 1.0
        for _ in range(12):
            r_new = F(a - damping * step)
            if np.max(np.abs(r_new)) < np.max(np.abs(r)):
                a = a - damping * step
                r = r_new
                break
            damping *= 0.5
        else:
            raise SectionError(f"Newton stalled for the section at x={x.tolist()}")
    else:
        raise SectionError(f"section Newton did not converge at x={x.tolist()}")
    xi = np.zeros(pres.n)
    for c, j in zip(a, gprime):
        xi[j] = c
    return xi


def _fix_sign(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v)))
    return v if v[i] > 0 else -v


def ker_frame_numeric(pres: LieAlgebraPresentation, x) -> np.ndarray:
    """Orthonormal basis of Ker X(x) as rows, deterministic orientation."""
    M = pres.field_matrix(x)
    u, s, vt = np.linalg.svd(M)
    if s.size and s[-1] <= 1e-10 * s[0] and pres.m == pres.n:
        raise GramSingularError(f"rank condition fails at {np.asarray(x).tolist()}")
    p = pres.n - pres.m
    rows = vt[pres.n - p:]
    return np.stack([_fix_sign(r) for r in rows])


def fiber_basis_at_base(pres: LieAlgebraPresentation, z) -> np.ndarray:
    """The fixed orthonormal basis of Lie(G^z) = Ker X(z), as rows."""
    return ker_frame_numeric(pres, z)


def gram_density_rho(pres: LieAlgebraPresentation, x) -> float:
    """rho(x) = 1/sqrt(det(X(x) X(x)^T))."""
    M = pres.field_matrix(x)
    g = M @ M.T
    det = float(np.linalg.det(g))
    if det <= 1e-300:
        raise GramSingularError(f"singular Gram matrix at {np.asarray(x).tolist()}")
    return 1.0 / math.sqrt(det)


# ---------------------------------------------------------------------------
# fiber transport

def _product_jacobian(product, at, right, h: float = 1e-6) -> np.ndarray:
    """d/d(zeta) of zeta -> product(zeta, right), central differences."""
    at = np.asarray(at, dtype=float)
    n = at.size
    J = np.zeros((n, n))
    for k in range(n):
        d = np.zeros(n)
        d[k] = h
        J[:, k] = (product(at + d, right) - product(at - d, right)) / (2 * h)
    return J


def fiber_scaling_c_generic(model, x, fiber_shift: float | np.ndarray | None = None,
                            h: float = 1e-6) -> float:
    """Determinant of the right-translation transport of the fiber frame.

    Expresses dR_{ell(x)} applied to the orthonormal vertical frame on
    G^z in the orthonormal vertical frame at the image point of G^x.
    ``fiber_shift`` moves the evaluation point along the fiber (exp
    coordinates on G^z); the result is fiber-constant up to numerics.
    """
    pres = model.presentation
    x = np.asarray(x, dtype=float)
    ell = model.section(x)
    Y = model.fiber_basis  # (p, n) rows
    p = Y.shape[0]

    if fiber_shift is None:
        eta = np.zeros(pres.n)
    else:
        shift = np.atleast_1d(np.asarray(fiber_shift, dtype=float))
        eta = (shift[:, None] * Y).sum(axis=0)  # exp of a Lie(G^z) element

    xi = model.product_exp1(eta, ell)
    J = _product_jacobian(model.product_exp1, eta, ell, h=h)
    phi_eta_inv = binv_ad(pres.ad(eta))
    phi_xi = phi_ad(pres.ad(xi))

    W = model.ker_frame(model.e_map(xi))  # (p, n) orthonormal rows at x
    C = np.zeros((p, p))
    for a in range(p):
        v = phi_eta_inv @ Y[a]          # coordinate velocity at eta
        u = J @ v                       # pushed to xi
        k = phi_xi @ u                  # back to Lie-algebra coefficients
        resid = k - W.T @ (W @ k)
        if np.linalg.norm(resid) > 1e-4 * max(1.0, np.linalg.norm(k)):
            raise RuntimeError(
                "ill-conditioned frame transport: pushed frame left the "
                f"vertical space at x={x.tolist()} (residual {np.linalg.norm(resid):.2e})")
        C[:, a] = W @ k
    return float(np.linalg.det(C))


def vertical_row_numeric(model, x, i: int, h: float = 1e-6) -> np.ndarray:
    """Row i of the vertical matrix via the trivialization pushforward.

    Differentiates the fiber part of psi along exp(eps * Xt_i) started
    at ell(x); the horizontal part reproduces X_i by construction, the
    fiber derivative is the vertical coefficient row.
    """
    pres = model.presentation
    x = np.asarray(x, dtype=float)
    ell = model.section(x)
    Y = model.fiber_basis

    def fiber_coords(eps: float) -> np.ndarray:
        step = np.zeros(pres.n)
        step[i] = eps
        xi = model.product_exp1(ell, step)
        y = model.e_map(xi)
        zeta = model.product_exp1(xi, -model.section(y))
        return Y @ zeta

    return (fiber_coords(h) - fiber_coords(-h)) / (2 * h)
