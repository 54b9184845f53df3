"""Independent checks for the continuation engine.

Nothing here imports the analytic gradients or the continuation code. The
general solver is an augmented-Lagrangian loop whose inner problems are solved
by L-BFGS on finite-difference gradients of its own objective code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .exceptions import ConstraintSlackError, InfeasibleError
from .geometry import DronePath

AGREEMENT_RTOL = 1e-3


@dataclass(frozen=True)
class OracleResult:
    path: DronePath
    energy: float
    constraint_violation: float
    restarts_agreeing: int
    n_feasible: int
    seed: int | None = None


def single_head_closed_form(head, start, L, p=2.0):
    """Optimum for one head with ``start == end`` and length budget ``L``.

    The drone flies straight toward the head, stops at distance ``L/2`` and
    returns, so energy is ``(d - L/2)**p`` and the multiplier is
    ``-(p/2) (d - L/2)**(p-1)``.

    Returns
    -------
    path : DronePath
    lam : float
    """
    head = np.asarray(head, dtype=float)
    start = np.asarray(start, dtype=float)
    d = float(np.hypot(*(head - start)))
    if d == 0:
        raise ValueError("head coincides with the start point")
    if L > 2 * d:
        raise ConstraintSlackError(f"L={L:g} exceeds the full tour 2d={2 * d:g}")
    if L < 0:
        raise ValueError("L must be non-negative")
    vertex = start + (L / 2.0) * (head - start) / d
    lam = -(p / 2.0) * (d - L / 2.0) ** (p - 1.0)
    return DronePath(start, start, vertex[None, :]), lam


def single_head_energy(head, start, L, p=2.0):
    d = float(np.hypot(*(np.asarray(head, float) - np.asarray(start, float))))
    return (d - L / 2.0) ** p


def fd_gradient(field, x, h=1e-6, vectorized=False):
    """Central-difference gradient of a scalar field.

    Parameters
    ----------
    field : callable
        ``field(x) -> float``; with ``vectorized`` it receives an array of
        shape ``(k, n)`` and returns ``k`` values.
    x : array_like, shape (n,)
    h : float
        Absolute step.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    E = h * np.eye(n)
    if vectorized:
        vals = np.asarray(field(np.vstack([x + E, x - E])), dtype=float)
        return (vals[:n] - vals[n:]) / (2 * h)
    g = np.empty(n)
    for i in range(n):
        g[i] = (field(x + E[i]) - field(x - E[i])) / (2 * h)
    return g


class _Problem:
    """Batched energy and length evaluation on flat ``(k, 2J)`` arrays."""

    def __init__(self, heads, start, end, p):
        self.heads = np.asarray(heads, dtype=float)
        self.start = np.asarray(start, dtype=float)
        self.end = np.asarray(end, dtype=float)
        self.p = float(p)
        self.J = self.heads.shape[0]

    def energy(self, X):
        W = X.reshape(X.shape[0], self.J, 2)
        d2 = ((W - self.heads) ** 2).sum(axis=-1)
        return (d2 ** (self.p / 2)).sum(axis=-1)

    def length(self, X):
        W = X.reshape(X.shape[0], self.J, 2)
        k = X.shape[0]
        pts = np.concatenate([np.broadcast_to(self.start, (k, 1, 2)), W,
                              np.broadcast_to(self.end, (k, 1, 2))], axis=1)
        return np.sqrt((np.diff(pts, axis=1) ** 2).sum(axis=-1)).sum(axis=-1)


def _augmented_lagrangian(prob, x0, L, fscale, h, rho0=10.0, outer=60, ctol=1e-10):
    x = x0.copy()
    mu, rho = 0.0, rho0
    c_prev = math.inf
    for _ in range(outer):
        def phi(X, mu=mu, rho=rho):
            c = prob.length(X) - L
            return prob.energy(X) / fscale - mu * c + 0.5 * rho * c * c

        def fun(xx):
            return float(phi(xx[None, :])[0])

        def jac(xx):
            return fd_gradient(phi, xx, h=h, vectorized=True)

        res = minimize(fun, x, jac=jac, method="L-BFGS-B",
                       options={"maxiter": 2000, "gtol": 1e-10, "ftol": 1e-15})
        x = res.x
        c = float(prob.length(x[None, :])[0] - L)
        if abs(c) <= ctol * L and res.success:
            break
        mu -= rho * c
        if abs(c) > 0.25 * abs(c_prev):
            rho = min(rho * 10.0, 1e10)
        c_prev = c
    return x


def _project_length(prob, x, L, h, iters=20):
    """Newton steps along the length gradient until ``length == L``."""
    for _ in range(iters):
        c = float(prob.length(x[None, :])[0] - L)
        if abs(c) <= 1e-13 * L:
            break
        g = fd_gradient(prob.length, x, h=h, vectorized=True)
        gg = float(g @ g)
        if gg == 0:
            break
        x = x - c * g / gg
    return x


def constrained_minimize(heads, start, end, L, p=2.0, restarts=16, seed=0,
                         perturbation=None):
    """Minimize energy subject to ``length == L`` from ``restarts`` random starts.

    Heads are taken in the given (tour) order. Starting points are the heads
    displaced by Gaussian noise of scale ``perturbation`` (default: a tenth of
    the mean tour segment, plus the per-vertex share of the length deficit).

    Raises
    ------
    InfeasibleError
        If no restart meets ``|length - L| <= 1e-6 L``.
    """
    heads = np.asarray(heads, dtype=float)
    start = np.asarray(start, dtype=float)
    end = start if end is None else np.asarray(end, dtype=float)
    prob = _Problem(heads, start, end, p)
    x_tour = heads.ravel()
    tour = float(prob.length(x_tour[None, :])[0])
    if L >= tour:
        raise ConstraintSlackError(f"L={L:g} admits the full tour ({tour:g})")
    if L <= float(np.hypot(*(end - start))):
        raise InfeasibleError(f"L={L:g} is below the straight-line distance")
    J = prob.J
    if perturbation is None:
        perturbation = 0.1 * tour / (J + 1) + (tour - L) / (2 * J)
    scale = max(1.0, float(np.max(np.abs(heads))))
    h = 1e-7 * scale
    # balance the objective against the constraint penalty
    fscale = max(((tour - L) / (2 * J)) ** p * J, 1e-12)

    rng = np.random.default_rng(seed)
    results = []
    for _ in range(restarts):
        x0 = x_tour + perturbation * rng.standard_normal(x_tour.size)
        x = _augmented_lagrangian(prob, x0, L, fscale, h)
        x = _project_length(prob, x, L, h)
        viol = abs(float(prob.length(x[None, :])[0]) - L)
        results.append((float(prob.energy(x[None, :])[0]), viol, x))

    feasible = [r for r in results if r[1] <= 1e-6 * L]
    if not feasible:
        worst = min(r[1] for r in results)
        raise InfeasibleError(
            f"no restart met the length constraint (best violation {worst:.3g})"
        )
    best = min(feasible, key=lambda r: (r[0], r[1]))
    agreeing = sum(1 for r in feasible if r[0] <= best[0] * (1 + AGREEMENT_RTOL) + 1e-15)
    path = DronePath(start, end, best[2].reshape(J, 2))
    return OracleResult(path, best[0], best[1], agreeing, len(feasible), seed)
