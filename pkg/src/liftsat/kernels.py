"""Candidate fundamental solutions on the lifted group.

The built-in kernel is the gauge kernel on the first Heisenberg group,
c * N(xi^-1 eta)^(-2), expressed in the split coordinates of the
Grushin model.  The normalization constant is not hard-coded: it is
calibrated numerically against the defining distributional identity.
User kernels given as expression files pass through the same checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .bumps import BumpFunction
from .expr import parse, compile_numpy, free_symbols
from .fd import apply_partial_form
from .lifting import lift_operator, lifted_adjoint
from .quadrature import adaptive_tensor_3d

__all__ = [
    "Kernel", "PoleEvaluationError", "heisenberg_kernel",
    "kernel_from_expression", "get_kernel",
    "calibrate_kernel_constant", "check_kernel_hypotheses",
]


class PoleEvaluationError(ZeroDivisionError):
    pass


@dataclass
class Kernel:
    """Evaluator of a candidate fundamental solution in split coordinates."""

    name: str
    model_name: str
    raw: object                      # raw(xi (d,), etas (N, d)) -> (N,) values
    left_invariant: bool = False
    homogeneity: float | None = None
    pole: str = "diagonal"
    constant: float = 1.0
    fiber_center_scale: object = None  # (xi, ys (N, m)) -> (tstar, dscale)
    calibration: dict = dc_field(default_factory=dict)

    def evaluate(self, xi, etas) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        etas = np.atleast_2d(np.asarray(etas, dtype=float))
        vals = self.constant * np.asarray(self.raw(xi, etas), dtype=float)
        if np.any(~np.isfinite(vals)):
            raise PoleEvaluationError(
                f"kernel {self.name} evaluated on its pole set")
        return vals

    def with_constant(self, c: float, calibration: dict | None = None) -> "Kernel":
        return Kernel(self.name, self.model_name, self.raw, self.left_invariant,
                      self.homogeneity, self.pole, c, self.fiber_center_scale,
                      dict(calibration or {}))


# ---------------------------------------------------------------------------
# the Heisenberg gauge kernel

# Split coordinates (x1, x2, s) are polarized coordinates on H^1 with
# the center along x2; the linear map below permutes them into the
# standard polarized order (a, b, c) = (x1, s, x2) before the shear to
# symmetric coordinates.  |det| must be 1 so Haar normalizations match.
_POLARIZED_PERM = np.array([[1.0, 0.0, 0.0],
                            [0.0, 0.0, 1.0],
                            [0.0, 1.0, 0.0]])


def _gauge_quarters(g: np.ndarray) -> np.ndarray:
    """N(g)^4 for g in split coordinates (rows)."""
    abc = g @ _POLARIZED_PERM.T
    a, b, c = abc[:, 0], abc[:, 1], abc[:, 2]
    w = c - 0.5 * a * b
    return (a * a + b * b) ** 2 + 16.0 * w * w


def heisenberg_kernel(model) -> Kernel:
    """Gauge kernel N(xi^-1 eta)^(-2) on the Grushin model's group."""
    if abs(abs(np.linalg.det(_POLARIZED_PERM)) - 1.0) > 1e-14:
        raise AssertionError("coordinate change must be volume preserving")

    inverse = model.inverse_split_closed
    product = model.product_split_closed

    def raw(xi, etas):
        gi = inverse(np.asarray(xi, dtype=float)[None, :])
        rel = product(np.broadcast_to(gi, etas.shape).copy(), etas)
        return _gauge_quarters(rel) ** (-0.5)

    def fiber_center_scale(xi, ys):
        x1, x2, s = float(xi[0]), float(xi[1]), float(xi[2])
        y1, y2 = ys[:, 0], ys[:, 1]
        q = x1 + y1
        # t zeroing the vertical gauge component, else the fiber point
        # closest in the horizontal part
        t_w = s + 2.0 * (y2 - x2) * q / (q * q + 1e-30)
        cand = np.stack([np.full_like(y1, s), t_w], axis=1)
        best_t = np.full_like(y1, s)
        best_n = np.full_like(y1, np.inf)
        for k in range(cand.shape[1]):
            etas = np.stack([y1, y2, cand[:, k]], axis=1)
            n4 = _gauge_quarters(product(
                np.broadcast_to(inverse(np.asarray(xi)[None, :]), etas.shape).copy(),
                etas))
            better = n4 < best_n
            best_t = np.where(better, cand[:, k], best_t)
            best_n = np.where(better, n4, best_n)
        scale = np.maximum(best_n ** 0.25, 1e-6)
        return best_t, scale

    return Kernel(
        name="heisenberg",
        model_name=model.name,
        raw=raw,
        left_invariant=True,
        homogeneity=-2.0,
        pole="diagonal (gauge zero of the relative coordinate)",
        fiber_center_scale=fiber_center_scale,
    )


def kernel_from_expression(text: str, model, name: str = "user") -> Kernel:
    """Kernel from an expression in (x..., s..., y..., t...) symbols.

    The x/s symbols name the source point, y/t the target, matching the
    model's chart and fiber coordinate names with y/t prefixes.
    """
    src_names = model.coords + model.fiber_coords
    dst_names = tuple("y" + c[1:] if c.startswith("x") else "t" + c[1:]
                      for c in src_names)
    expr = parse(text.strip(), symbols=src_names + dst_names)
    fn = compile_numpy(expr, src_names + dst_names)
    invariant = False  # unknown until checked; metadata only

    def raw(xi, etas):
        args = [np.full(etas.shape[0], v) for v in xi] + list(etas.T)
        return np.asarray(fn(*args), dtype=float)

    return Kernel(name=name, model_name=model.name, raw=raw,
                  left_invariant=invariant, pole="unknown")


def get_kernel(name_or_path: str, model) -> Kernel:
    if name_or_path == "heisenberg":
        if model.name != "grushin":
            raise ValueError("the heisenberg kernel is tied to the grushin model")
        return heisenberg_kernel(model)
    with open(name_or_path, "r") as fh:
        return kernel_from_expression(fh.read(), model, name=name_or_path)


# ---------------------------------------------------------------------------
# calibration against the defining identity

def _lifted_star_partial_evaluator(model, bump: BumpFunction):
    """(Ltilde* phi) as a masked vectorized function on the split chart."""
    lifted = lift_operator(model)
    density = model.rhobar_expr
    adj = lifted_adjoint(model, lifted, density) if density is not None \
        else lifted_adjoint(model, lifted)
    from .bumps import operator_image_evaluator
    return operator_image_evaluator(adj.total.to_partial_form(), bump)


def calibrate_kernel_constant(kernel: Kernel, model, bump: BumpFunction | None = None,
                              xi=None, tol: float = 1e-6,
                              max_panels: int = 60000, n: int = 8) -> Kernel:
    """Fix the kernel constant from the distributional identity.

    Solves integral(Gamma_raw * Ltilde^* phi * rho_bar d(vol ds)) * c = -phi(xi)
    with one adaptive 3D quadrature refined toward the pole.
    """
    split_names = model.split_chart
    if bump is None:
        bump = BumpFunction(split_names, (0.35, 0.2, 0.15), (1.1, 1.1, 1.1), k=6)
    if xi is None:
        xi = np.zeros(model.m + model.p)
    xi = np.asarray(xi, dtype=float)
    phi_val = bump.value_at(xi)
    if abs(phi_val) < 1e-12:
        raise ValueError("calibration bump must not vanish at the pole point")

    lstar = _lifted_star_partial_evaluator(model, bump)

    def integrand(pts):
        vals = kernel.raw(xi, pts) * lstar(pts)
        return vals * model.rho_bar_many(pts[:, :model.m])

    box = bump.support_box
    I, err = adaptive_tensor_3d(integrand, box, tol=tol, n=n,
                                max_panels=max_panels, singular=tuple(xi),
                                excise=1e-4, min_size=2e-3)
    if I == 0.0:
        raise ZeroDivisionError("calibration integral vanished")
    c = -phi_val / I
    if not math.isfinite(c):
        raise ArithmeticError("calibration quadrature did not converge")
    info = {"integral": I, "quad_error": err, "phi_at_pole": phi_val,
            "constant": c, "rel_error": abs(err / I)}
    return kernel.with_constant(c, info)


def identity_residual_3d(kernel: Kernel, model, bump: BumpFunction,
                         xi=None, tol: float = 1e-6, max_panels: int = 60000,
                         n: int = 8) -> float:
    """Relative residual of the lifted identity for an independent bump."""
    if xi is None:
        xi = np.zeros(model.m + model.p)
    xi = np.asarray(xi, dtype=float)
    lstar = _lifted_star_partial_evaluator(model, bump)

    def integrand(pts):
        return kernel.evaluate(xi, pts) * lstar(pts) \
            * model.rho_bar_many(pts[:, :model.m])

    I, _ = adaptive_tensor_3d(integrand, bump.support_box, tol=tol, n=n,
                              max_panels=max_panels, singular=tuple(xi),
                              excise=1e-4, min_size=2e-3)
    phi_val = bump.value_at(xi)
    return abs(I + phi_val) / max(1.0, abs(phi_val))


# ---------------------------------------------------------------------------
# hypothesis checks

def check_kernel_hypotheses(kernel: Kernel, model, n_samples: int = 10000,
                            seed: int = 0, harm_step: float = 1e-3,
                            min_pole_distance: float = 0.5) -> dict:
    """Numeric evidence for positivity, harmonicity and fiber integrability."""
    rng = np.random.default_rng(seed)
    dim = model.m + model.p
    xi = rng.uniform(-1.0, 1.0, size=dim)

    # positivity off the pole set
    etas = rng.uniform(-3.0, 3.0, size=(n_samples, dim))
    vals = kernel.evaluate(xi, etas)
    positivity_rate = float(np.mean(vals > 0.0))

    # harmonicity in the second argument, 4th-order differences
    lifted = lift_operator(model)
    partial = lifted.total.to_partial_form()
    coeffs = {beta: compile_numpy(c, model.split_chart) for beta, c in partial.items()}
    pform = {beta: (lambda pts, fn=fn: fn(*pts.T)) for beta, fn in coeffs.items()}
    probes = rng.uniform(-2.0, 2.0, size=(400, dim))
    dist = np.linalg.norm(probes - xi, axis=1)
    probes = probes[dist >= min_pole_distance][:100]
    gvals = kernel.evaluate(xi, probes)
    resid = apply_partial_form(pform, lambda pts: kernel.evaluate(xi, pts),
                               probes, harm_step)
    harm_rel = np.abs(resid) / np.maximum(np.abs(gvals), 1e-300)
    harmonicity_max = float(np.max(harm_rel))

    # fiber tail decay exponent via log-log fit
    y = np.array([1.0, 0.4])
    ts = 2.0 ** np.arange(4, 14)
    etas_t = np.column_stack([np.full_like(ts, y[0]), np.full_like(ts, y[1]), ts])
    fvals = kernel.evaluate(xi, etas_t)
    slope = float(np.polyfit(np.log(ts), np.log(fvals), 1)[0])

    # L1 over E^-1(K): truncated integrals converge as the radius grows
    from .saturation import fiber_integral_batch
    ys = rng.uniform(-1.5, 1.5, size=(24, model.m))
    keep = np.linalg.norm(ys - xi[:model.m], axis=1) > 0.2
    ys = ys[keep]
    radii = [64.0, 256.0, 1024.0]
    totals = []
    for R in radii:
        v, _ = fiber_integral_batch(kernel, model, xi[:model.m], xi[model.m:],
                                    ys, radius=R)
        totals.append(float(np.mean(v)))
    increments = [abs(b - a) for a, b in zip(totals, totals[1:])]

    return {
        "positivity_rate": positivity_rate,
        "harmonicity_max_rel": harmonicity_max,
        "harmonicity_step": harm_step,
        "fiber_tail_exponent": slope,
        "fiber_integrable": slope < -1.0,
        "truncation_radii": radii,
        "truncated_means": totals,
        "truncation_increments": increments,
        "truncation_converging": all(b < a for a, b in zip(increments, increments[1:]))
        if len(increments) > 1 else True,
    }
