"""Riemannian BFGS restricted to a constraint level set {delta : G(delta) = c^2}.

The geometry uses the Euclidean metric of the ambient space: tangent
projection I - n n', a projection retraction implemented as iterated
normal-direction Newton corrections, and projection vector transport. The
inverse-Hessian update is the cautious BFGS update, skipped when the
curvature pairing is too small.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "RetractionError",
    "InitializationError",
    "ManifoldPoint",
    "RBFGSOptions",
    "RBFGSResult",
    "project_tangent",
    "make_point",
    "retract",
    "transport",
    "fd_gradient",
    "rbfgs",
    "init_on_manifold",
    "multistart",
]


class RetractionError(RuntimeError):
    """The normal-correction iteration left the retraction's domain."""


class InitializationError(RuntimeError):
    """No feasible starting point could be constructed."""


@dataclass(frozen=True)
class ManifoldPoint:
    """A feasible point with its cached constraint value and unit normal."""

    delta: np.ndarray
    g_value: float
    normal: np.ndarray


@dataclass
class RBFGSOptions:
    feas_tol: float | None = None      # default 1e-6 * c^2
    grad_tol: float = 1e-5
    max_iter: int = 200
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    max_corrections: int = 10
    max_doublings: int = 10
    max_linesearch: int = 50
    fd_step: float = 1e-4              # objective finite-difference step
    cautious_eps: float = 1e-10


@dataclass
class RBFGSResult:
    delta: np.ndarray
    value: float
    grad_norm: float
    converged: bool
    n_iter: int
    trace: list[dict] = field(default_factory=list)
    start_index: int | None = None


def project_tangent(v: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Orthogonal projection v - (n'v) n onto the tangent space at a point
    with unit normal n; idempotent."""
    v = np.asarray(v, dtype=float)
    normal = np.asarray(normal, dtype=float)
    return v - (normal @ v) * normal


def transport(v: np.ndarray, new_normal: np.ndarray) -> np.ndarray:
    """Projection vector transport: project onto the new tangent space.

    A contraction, not an isometry.
    """
    return project_tangent(v, new_normal)


def _normal(constraint, delta: np.ndarray) -> tuple[np.ndarray, float]:
    g = np.asarray(constraint.grad(delta), dtype=float)
    norm = float(np.linalg.norm(g))
    if norm <= 0 or not np.isfinite(norm):
        raise RetractionError("constraint gradient vanished; not a regular value")
    return g / norm, norm


def make_point(constraint, delta: np.ndarray) -> ManifoldPoint:
    delta = np.asarray(delta, dtype=float).reshape(-1)
    n, _ = _normal(constraint, delta)
    return ManifoldPoint(delta=delta.copy(), g_value=float(constraint.value(delta)), normal=n)


def retract(delta: np.ndarray, xi: np.ndarray, constraint, c: float,
            feas_tol: float, max_corrections: int = 10) -> ManifoldPoint:
    """Map the tangent step delta + xi back onto {G = c^2} by iterated
    normal-direction Newton corrections.

    Raises :class:`RetractionError` when the corrections diverge (the line
    search treats this as a trial step outside the retraction's domain).
    """
    target = c * c
    y = np.asarray(delta, dtype=float) + np.asarray(xi, dtype=float)
    gap = abs(float(constraint.value(y)) - target)
    for _ in range(max_corrections):
        if gap <= feas_tol:
            break
        grad = np.asarray(constraint.grad(y), dtype=float)
        denom = float(grad @ grad)
        if denom <= 0 or not np.isfinite(denom):
            raise RetractionError("constraint gradient vanished during correction")
        y = y - ((float(constraint.value(y)) - target) / denom) * grad
        new_gap = abs(float(constraint.value(y)) - target)
        if not np.isfinite(new_gap) or new_gap > 4.0 * max(gap, feas_tol):
            raise RetractionError("normal corrections diverged; shrink the step")
        gap = new_gap
    if gap > feas_tol:
        raise RetractionError(
            f"retraction did not reach feasibility ({gap:.3e} > {feas_tol:.3e})"
        )
    n, _ = _normal(constraint, y)
    return ManifoldPoint(delta=y, g_value=float(constraint.value(y)), normal=n)


def bfgs_update(B: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Inverse-BFGS update; maps the new-gradient difference b back to the
    step a exactly (secant property) whenever b'a > 0."""
    rho = 1.0 / float(b @ a)
    q = a.size
    I_ab = np.eye(q) - rho * np.outer(a, b)
    out = I_ab @ B @ I_ab.T + rho * np.outer(a, a)
    return (out + out.T) / 2.0


def fd_gradient(fun: Callable[[np.ndarray], float], x: np.ndarray, h: float) -> np.ndarray:
    """Centered finite-difference gradient; the objective is expected to be
    deterministic (common random numbers) so differences are smooth."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return g


def _weak_wolfe(objective, grad_fn, constraint, c, feas_tol, point, direction,
                f0, slope0, opts):
    """Bisection weak Wolfe search along the retraction curve.

    Returns (point, f, t) or None if no acceptable step exists. Retraction
    failures shrink the bracket exactly like sufficient-decrease failures.
    """
    lo, hi = 0.0, math.inf
    t = 1.0
    doublings = 0
    best_armijo = None
    for _ in range(opts.max_linesearch):
        try:
            cand = retract(point.delta, t * direction, constraint, c, feas_tol,
                           opts.max_corrections)
        except RetractionError:
            hi = t
            t = 0.5 * (lo + hi)
            continue
        f_t = objective(cand.delta)
        if not np.isfinite(f_t) or f_t > f0 + opts.wolfe_c1 * t * slope0:
            hi = t
            t = 0.5 * (lo + hi)
            continue
        if best_armijo is None or f_t < best_armijo[1]:
            best_armijo = (cand, f_t, t)
        slope_t = float(project_tangent(grad_fn(cand.delta), cand.normal)
                        @ project_tangent(direction, cand.normal))
        if slope_t < opts.wolfe_c2 * slope0:
            lo = t
            if math.isinf(hi) and doublings < opts.max_doublings:
                t = 2.0 * t
                doublings += 1
            else:
                t = 0.5 * (lo + hi) if not math.isinf(hi) else t * 2.0
            continue
        return cand, f_t, t
    return best_armijo


def rbfgs(objective: Callable[[np.ndarray], float], constraint, c: float,
          start: np.ndarray, options: RBFGSOptions | None = None,
          gradient: Callable[[np.ndarray], np.ndarray] | None = None) -> RBFGSResult:
    """Minimize the objective over {delta : G(delta) = c^2}.

    ``constraint`` exposes ``value(delta)`` and ``grad(delta)``. The
    objective gradient defaults to centered finite differences with
    ``options.fd_step``. Iterates stay feasible within ``feas_tol`` and the
    objective never increases across accepted iterates.
    """
    opts = options or RBFGSOptions()
    feas_tol = opts.feas_tol if opts.feas_tol is not None else 1e-6 * c * c
    grad_fn = gradient or (lambda x: fd_gradient(objective, x, opts.fd_step))

    start = np.asarray(start, dtype=float).reshape(-1)
    if abs(float(constraint.value(start)) - c * c) > feas_tol:
        raise InitializationError(
            "start is not on the constraint manifold; use init_on_manifold"
        )
    point = make_point(constraint, start)
    f = float(objective(point.delta))
    rgrad = project_tangent(grad_fn(point.delta), point.normal)
    q = start.size
    B = np.eye(q)
    best = (f, point.delta.copy())
    trace = [{"iter": 0, "objective": f, "grad_norm": float(np.linalg.norm(rgrad)),
              "step": 0.0, "feasibility": abs(point.g_value - c * c)}]
    converged = float(np.linalg.norm(rgrad)) <= opts.grad_tol
    it = 0
    while not converged and it < opts.max_iter:
        direction = -(B @ rgrad)
        slope = float(rgrad @ direction)
        if slope >= 0:  # safeguard against a broken curvature model
            B = np.eye(q)
            direction = -rgrad
            slope = -float(rgrad @ rgrad)
        hit = _weak_wolfe(objective, grad_fn, constraint, c, feas_tol, point,
                          direction, f, slope, opts)
        if hit is None:
            break
        new_point, f_new, step = hit
        new_rgrad = project_tangent(grad_fn(new_point.delta), new_point.normal)
        a = project_tangent(new_point.delta - point.delta, new_point.normal)
        b = new_rgrad - project_tangent(rgrad, new_point.normal)
        P = np.eye(q) - np.outer(new_point.normal, new_point.normal)
        B = P @ B @ P
        curv = float(b @ a)
        if curv > opts.cautious_eps * float(a @ a):  # cautious update, else skip
            B = bfgs_update(B, a, b)
        B = (B + B.T) / 2.0
        point, f, rgrad = new_point, f_new, new_rgrad
        it += 1
        if f < best[0]:
            best = (f, point.delta.copy())
        gn = float(np.linalg.norm(rgrad))
        trace.append({"iter": it, "objective": f, "grad_norm": gn,
                      "step": step, "feasibility": abs(point.g_value - c * c)})
        converged = gn <= opts.grad_tol
    return RBFGSResult(delta=best[1], value=best[0],
                       grad_norm=float(np.linalg.norm(rgrad)),
                       converged=converged, n_iter=it, trace=trace)


def init_on_manifold(direction: np.ndarray, constraint, c: float,
                     feas_tol: float | None = None, max_doublings: int = 20) -> np.ndarray:
    """Scale a ray t * direction until G(t * direction) = c^2 by bracketing
    and bisection (G(0) = 0 < c^2 and G grows along the ray)."""
    direction = np.asarray(direction, dtype=float).reshape(-1)
    norm = float(np.linalg.norm(direction))
    if norm <= 0:
        raise InitializationError("direction must be nonzero")
    direction = direction / norm
    feas_tol = feas_tol if feas_tol is not None else 1e-6 * c * c
    target = c * c
    t_hi = 1.0
    for _ in range(max_doublings + 1):
        if float(constraint.value(t_hi * direction)) >= target:
            break
        t_hi *= 2.0
    else:
        raise InitializationError("constraint radius unreachable along direction")
    t_lo = 0.0
    for _ in range(200):
        t = 0.5 * (t_lo + t_hi)
        val = float(constraint.value(t * direction))
        if abs(val - target) <= feas_tol:
            return t * direction
        if val < target:
            t_lo = t
        else:
            t_hi = t
    raise InitializationError("bisection failed to reach the constraint level")


def multistart(objective: Callable[[np.ndarray], float], constraint, c: float,
               q: int, n_starts: int, seed: int,
               options: RBFGSOptions | None = None,
               gradient: Callable[[np.ndarray], np.ndarray] | None = None,
               ) -> tuple[RBFGSResult, list[RBFGSResult]]:
    """Independent RBFGS runs from random feasible starts.

    Starts are uniformly random unit directions scaled onto the manifold;
    the winner is the minimum-objective feasible endpoint, ties within 1e-8
    broken by the smallest start index.
    """
    if n_starts < 1:
        raise ValueError("need n_starts >= 1")
    opts = options or RBFGSOptions()
    feas_tol = opts.feas_tol if opts.feas_tol is not None else 1e-6 * c * c
    children = np.random.SeedSequence(seed).spawn(n_starts)
    results: list[RBFGSResult] = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        direction = rng.standard_normal(q)
        start = init_on_manifold(direction, constraint, c, feas_tol)
        res = rbfgs(objective, constraint, c, start, options=opts, gradient=gradient)
        res.start_index = i
        results.append(res)
    best_val = min(r.value for r in results)
    winner = next(r for r in results if r.value <= best_val + 1e-8)
    return winner, results
