"""Continuation of constrained optima from the full tour down to shorter ranges.

Along the family of local optima parametrized by consumed length ``s`` the
conditions ``grad f = lam * grad g`` hold identically, and ``dg/ds = -1``.
Differentiating gives a bordered ``(2J + 1)``-dimensional linear system
``K D = C`` for ``D = d(u_1, v_1, ..., u_J, v_J, lam)/ds`` that is integrated
with classical RK4.

Coefficient naming follows the code-oriented notation: ``M`` is the *squared*
segment length and ``H = M**1.5``. True lengths only appear at the API surface.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve
from scipy.linalg.lapack import dgecon

from .exceptions import (
    DegenerateBisectorError,
    DegenerateSegmentError,
    MergePendingError,
    RangeError,
    SingularSystemError,
)
from .geometry import (
    ClusterLayout,
    DronePath,
    PowerModel,
    energy,
    grad_energy,
    grad_length,
    path_length,
)

logger = logging.getLogger(__name__)

RCOND_FLOOR = 1e-12
# a sample within this relative distance of a requested length is returned as is
SAMPLE_MATCH_RTOL = 1e-8

TARGET_REACHED = "target-length-reached"
MERGE_DETECTED = "merge-detected"
MAX_STEPS = "max-steps"
STRAIGHT_LINE_FLOOR = "straight-line-floor"
TERMINATION_REASONS = (TARGET_REACHED, MERGE_DETECTED, MAX_STEPS, STRAIGHT_LINE_FLOOR)


@dataclass(frozen=True)
class HarvestProblem:
    """Heads already in visiting order, fixed endpoints, and the power law."""

    layout: ClusterLayout
    start: np.ndarray
    end: np.ndarray
    model: PowerModel

    @classmethod
    def from_arrays(cls, heads, start, end=None, p=2.0):
        start = np.asarray(start, dtype=float)
        end = start if end is None else np.asarray(end, dtype=float)
        return cls(ClusterLayout(heads), start, end, PowerModel(p))

    @property
    def J(self):
        return self.layout.J

    @property
    def heads(self):
        return self.layout.heads

    def path(self, vertices):
        return DronePath(self.start, self.end, vertices)

    def tour_path(self):
        return self.path(self.heads)

    def floor_length(self):
        return float(np.linalg.norm(self.end - self.start))


@dataclass(frozen=True)
class HomotopyState:
    """Harvesting vertices, multiplier and continuation parameter."""

    u: np.ndarray
    v: np.ndarray
    lam: float
    s: float = 0.0

    def __post_init__(self):
        u = np.array(self.u, dtype=float).ravel()
        v = np.array(self.v, dtype=float).ravel()
        if u.shape != v.shape:
            raise ValueError("u and v must have the same length")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))
                and math.isfinite(self.lam) and math.isfinite(self.s)):
            raise ValueError("HomotopyState entries must be finite")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "s", float(self.s))

    @classmethod
    def from_vector(cls, y, s):
        """Build from the interleaved vector ``(u_1, v_1, ..., u_J, v_J, lam)``."""
        y = np.asarray(y, dtype=float)
        w = y[:-1].reshape(-1, 2)
        return cls(w[:, 0], w[:, 1], y[-1], s)

    @classmethod
    def from_vertices(cls, vertices, lam, s=0.0):
        w = np.asarray(vertices, dtype=float).reshape(-1, 2)
        return cls(w[:, 0], w[:, 1], lam, s)

    @property
    def J(self):
        return self.u.shape[0]

    @property
    def vertices(self):
        return np.column_stack([self.u, self.v])

    def as_vector(self):
        return np.append(self.vertices.ravel(), self.lam)


@dataclass(frozen=True)
class CoefficientSet:
    """Per-vertex coefficients of the continuation equations.

    Vertex arrays (``a``, ``b``, ``A``, ``s1``..``s6``, ``t1``..``t6``, ``w``,
    ``z``) have length ``J``; segment arrays (``m``, ``n``, ``M``, ``H``) have
    length ``J + 1``. ``s1``/``t1`` multiply ``du``/``dv`` of the previous
    vertex, ``s3``/``t3`` and ``s4``/``t4`` the current one, ``s5``/``t5``
    and ``s6``/``t6`` the next one.
    """

    a: np.ndarray
    b: np.ndarray
    A: np.ndarray
    m: np.ndarray
    n: np.ndarray
    M: np.ndarray
    H: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    s3: np.ndarray
    s4: np.ndarray
    s5: np.ndarray
    s6: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    t3: np.ndarray
    t4: np.ndarray
    t5: np.ndarray
    t6: np.ndarray
    w: np.ndarray
    z: np.ndarray
    q: float
    r: float = 0.5

    @property
    def J(self):
        return self.a.shape[0]


@dataclass(frozen=True)
class SystemMatrix:
    K: np.ndarray
    C: np.ndarray


@dataclass(frozen=True)
class TraceSample:
    state: HomotopyState
    length: float
    energy: float
    residual: float
    relative_residual: float
    merged: bool = False


@dataclass
class Trace:
    """Sampled continuation run."""

    problem: HarvestProblem
    tour_length: float
    order: tuple
    samples: list = field(default_factory=list)
    merge_events: list = field(default_factory=list)
    terminated_reason: str | None = None

    def __len__(self):
        return len(self.samples)

    @property
    def lengths(self):
        return np.array([smp.length for smp in self.samples])

    @property
    def energies(self):
        return np.array([smp.energy for smp in self.samples])

    @property
    def s_values(self):
        return np.array([smp.state.s for smp in self.samples])

    @property
    def lambdas(self):
        return np.array([smp.state.lam for smp in self.samples])

    @property
    def relative_residuals(self):
        return np.array([smp.relative_residual for smp in self.samples])

    def first_merge_index(self):
        """Index of the first merge-flagged sample, or ``len(self)`` if none."""
        return self.merge_events[0][0] if self.merge_events else len(self.samples)

    def pre_merge_samples(self):
        return self.samples[: self.first_merge_index()]

    def path(self, i):
        return self.problem.path(self.samples[i].state.vertices)


def _segments(vertices, start, end):
    pts = np.vstack([start, vertices, end])
    d = pts[:-1] - pts[1:]
    return d[:, 0], d[:, 1]


def state_path(state, problem):
    return problem.path(state.vertices)


def segment_lengths(state, problem):
    m, n = _segments(state.vertices, problem.start, problem.end)
    return np.sqrt(m * m + n * n)


def relative_residual(path, lam, problem):
    """``|grad f - lam grad g|_inf / |grad f|_inf`` (absolute when ``grad f = 0``)."""
    gf = grad_energy(path, problem.layout, problem.model)
    r = np.max(np.abs(gf - lam * grad_length(path)))
    scale = np.max(np.abs(gf))
    return float(r / scale) if scale > 0 else float(r)


def _lagrangian_hessian(path, lam, problem):
    """Hessian of ``f - lam g`` in interleaved order; used by the Newton polish."""
    state = HomotopyState.from_vertices(path.vertices, lam)
    K = assemble_matrix(assemble_coefficients(state, problem)).K
    return K[:-1, :-1]


def initial_state(problem, lambda0=0.05, refine=True, tol=1e-13, max_iter=20):
    """Near-tour local optimum offset from each head against the length gradient.

    Each vertex starts at ``z_j - |eps_j| g_j / |g_j|`` where ``g_j`` is the
    length gradient at the tour and ``|eps_j| = (lambda0 |g_j| / p)**(1/(p-1))``;
    the multiplier is ``-lambda0``. With ``refine`` the vertices are then
    polished by Newton's method on ``grad f = lam grad g`` at fixed ``lam``,
    removing the error of freezing ``g_j`` at the heads.

    Raises
    ------
    DegenerateBisectorError
        If some head lies on the straight line between its tour neighbours.
    """
    if not lambda0 > 0:
        raise ValueError(f"lambda0 must be > 0, got {lambda0!r}")
    p = problem.model.p
    heads = problem.heads
    tour = problem.tour_path()
    g = grad_length(tour).reshape(-1, 2)
    gnorm = np.linalg.norm(g, axis=1)
    scale = np.max(gnorm) if gnorm.size else 0.0
    bad = np.flatnonzero(gnorm <= 1e-12 * max(scale, 1.0))
    if bad.size:
        raise DegenerateBisectorError(int(bad[0]))
    eps = (lambda0 * gnorm / p) ** (1.0 / (p - 1.0))
    w = heads - eps[:, None] * g / gnorm[:, None]
    lam = -float(lambda0)

    if refine:
        offset = np.linalg.norm(w - heads, axis=1).max()
        for _ in range(max_iter):
            path = problem.path(w)
            F = grad_energy(path, problem.layout, problem.model) - lam * grad_length(path)
            if np.max(np.abs(F)) <= tol * max(1.0, lambda0):
                break
            Hs = _lagrangian_hessian(path, lam, problem)
            step = np.linalg.solve(Hs, -F).reshape(-1, 2)
            # reject a wild Newton step rather than leave the near-tour branch
            if np.max(np.linalg.norm(step, axis=1)) > offset:
                logger.debug("initial-state polish abandoned: step exceeds offset")
                break
            w = w + step

    state = HomotopyState.from_vertices(w, lam)
    tour_len = path_length(tour)
    state = replace(state, s=tour_len - path_length(problem.path(w)))
    return state


def assemble_coefficients(state, problem, merge_threshold=0.0, floor=False):
    """Evaluate every per-vertex coefficient of the continuation equations.

    Parameters
    ----------
    merge_threshold : float
        Segment length at or below which the system counts as merged.
    floor : bool
        If true, squared lengths below ``merge_threshold**2`` are clamped to it
        instead of raising. Results past a merge are not validated.

    Raises
    ------
    MergePendingError
        If a segment is not longer than ``merge_threshold`` and ``floor`` is off.
    """
    p = problem.model.p
    q = p / 2.0 - 1.0
    x, y = problem.heads[:, 0], problem.heads[:, 1]
    a = state.u - x
    b = state.v - y
    A = a * a + b * b
    m, n = _segments(state.vertices, problem.start, problem.end)
    M = m * m + n * n
    thr2 = merge_threshold * merge_threshold
    short = np.flatnonzero(M <= thr2)
    if short.size:
        if floor and merge_threshold > 0:
            M = np.maximum(M, thr2)
        else:
            k = int(short[0])
            raise MergePendingError(k, math.sqrt(M[k]))
    H = M ** 1.5

    Aq = A ** q
    # 2pq a^2 A^(q-1) written as 2pq A^q (a^2/A); the ratio is bounded by 1
    with np.errstate(invalid="ignore", divide="ignore"):
        ra = np.where(A > 0, a * a / A, 0.0)
        rb = np.where(A > 0, b * b / A, 0.0)
        rab = np.where(A > 0, a * b / A, 0.0)
    faa = 2 * p * q * Aq * ra
    fbb = 2 * p * q * Aq * rb
    fab = 2 * p * q * Aq * rab

    lam = state.lam
    mp, np_, Mp, Hp = m[:-1], n[:-1], M[:-1], H[:-1]   # segment before vertex
    mn, nn, Mn, Hn = m[1:], n[1:], M[1:], H[1:]         # segment after vertex

    s1 = lam * (Mp - mp ** 2) / Hp
    s2 = -lam * mp * np_ / Hp
    s3 = faa + p * Aq - lam * (Hn * (Mp - mp ** 2) + Hp * (Mn - mn ** 2)) / (Hp * Hn)
    s4 = fab + lam * (mp * np_ * Hn + mn * nn * Hp) / (Hp * Hn)
    s5 = lam * (Mn - mn ** 2) / Hn
    s6 = -lam * mn * nn / Hn
    w = (-mp * np.sqrt(Mn) + mn * np.sqrt(Mp)) / np.sqrt(Mp * Mn)

    t1 = -lam * mp * np_ / Hp
    t2 = lam * (Mp - np_ ** 2) / Hp
    t3 = fab + lam * (mp * np_ * Hn + mn * nn * Hp) / (Hp * Hn)
    t4 = fbb + p * Aq - lam * (Hn * (Mp - np_ ** 2) + Hp * (Mn - nn ** 2)) / (Hp * Hn)
    t5 = -lam * mn * nn / Hn
    t6 = lam * (Mn - nn ** 2) / Hn
    z = (-np_ * np.sqrt(Mn) + nn * np.sqrt(Mp)) / np.sqrt(Mp * Mn)

    return CoefficientSet(a=a, b=b, A=A, m=m, n=n, M=M, H=H,
                          s1=s1, s2=s2, s3=s3, s4=s4, s5=s5, s6=s6,
                          t1=t1, t2=t2, t3=t3, t4=t4, t5=t5, t6=t6,
                          w=w, z=z, q=q)


def assemble_matrix(coeffs):
    """Interleaved bordered system in unknown order ``(u_1, v_1, ..., lam)``."""
    J = coeffs.J
    N = 2 * J + 1
    K = np.zeros((N, N))
    for j in range(J):
        ru, rv = 2 * j, 2 * j + 1
        if j > 0:
            K[ru, ru - 2:ru] = coeffs.s1[j], coeffs.s2[j]
            K[rv, ru - 2:ru] = coeffs.t1[j], coeffs.t2[j]
        K[ru, ru:ru + 2] = coeffs.s3[j], coeffs.s4[j]
        K[rv, ru:ru + 2] = coeffs.t3[j], coeffs.t4[j]
        if j < J - 1:
            K[ru, ru + 2:ru + 4] = coeffs.s5[j], coeffs.s6[j]
            K[rv, ru + 2:ru + 4] = coeffs.t5[j], coeffs.t6[j]
        K[ru, -1] = -coeffs.w[j]
        K[rv, -1] = -coeffs.z[j]
        K[-1, ru] = coeffs.w[j]
        K[-1, rv] = coeffs.z[j]
    C = np.zeros(N)
    C[-1] = -1.0
    return SystemMatrix(K, C)


def block_ordering(J):
    """Index permutation from interleaved to ``(u_1..u_J, v_1..v_J, lam)`` order."""
    return np.concatenate([np.arange(0, 2 * J, 2), np.arange(1, 2 * J, 2), [2 * J]])


def block_form_matrix(state, problem):
    """Assemble the same system from diagonal and forward-difference blocks.

    Independent of :func:`assemble_coefficients`: uses true segment lengths and
    ``diag(.) @ D`` products, with ``D`` the forward-difference matrix. Rows and
    columns are ordered ``(u_1..u_J, v_1..v_J, lam)``.
    """
    J = state.J
    p = problem.model.p
    q = p / 2.0 - 1.0
    a = state.u - problem.heads[:, 0]
    b = state.v - problem.heads[:, 1]
    A = a ** 2 + b ** 2
    pts = np.vstack([problem.start, state.vertices, problem.end])
    m = pts[:-1, 0] - pts[1:, 0]
    n = pts[:-1, 1] - pts[1:, 1]
    ell = np.hypot(m, n)
    lam = state.lam

    D = -np.eye(J) + np.eye(J, k=1)
    dg = np.diag
    with np.errstate(invalid="ignore", divide="ignore"):
        cuu = np.where(A > 0, p * A ** q * (1 + 2 * q * a ** 2 / np.where(A > 0, A, 1)), p * A ** q)
        cvv = np.where(A > 0, p * A ** q * (1 + 2 * q * b ** 2 / np.where(A > 0, A, 1)), p * A ** q)
        cuv = np.where(A > 0, 2 * p * q * a * b * A ** q / np.where(A > 0, A, 1), 0.0)
    nxt, prv = slice(1, None), slice(None, -1)
    H11 = (dg(cuu) + lam * dg(n[nxt] ** 2 / ell[nxt] ** 3) @ D
           + lam * dg(n[prv] ** 2 / ell[prv] ** 3) @ D.T)
    H12 = (dg(cuv) - lam * dg(m[nxt] * n[nxt] / ell[nxt] ** 3) @ D
           - lam * dg(m[prv] * n[prv] / ell[prv] ** 3) @ D.T)
    H22 = (dg(cvv) + lam * dg(m[nxt] ** 2 / ell[nxt] ** 3) @ D
           + lam * dg(m[prv] ** 2 / ell[prv] ** 3) @ D.T)
    h1 = -m[nxt] / ell[nxt] + m[prv] / ell[prv]
    h2 = -n[nxt] / ell[nxt] + n[prv] / ell[prv]

    Hm = np.zeros((2 * J + 1, 2 * J + 1))
    Hm[:J, :J] = H11
    Hm[:J, J:2 * J] = H12
    Hm[J:2 * J, :J] = H12
    Hm[J:2 * J, J:2 * J] = H22
    Hm[:J, -1] = h1
    Hm[J:2 * J, -1] = h2
    # the last row is the length derivative, i.e. -h, so that dg/ds = -1
    Hm[-1, :J] = -h1
    Hm[-1, J:2 * J] = -h2
    return Hm


def _factor(K):
    """LU factors, pivots and the reciprocal 1-norm condition estimate."""
    with warnings.catch_warnings():
        # exact singularity shows up in the condition estimate instead
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(K, check_finite=True)
    rcond, info = dgecon(lu, np.linalg.norm(K, 1), norm="1")
    return lu, piv, (float(rcond) if info == 0 else float("nan"))


def _solve(K, C, stage=None):
    lu, piv, rcond = _factor(K)
    if not rcond >= RCOND_FLOOR:
        raise SingularSystemError(rcond, stage)
    return lu_solve((lu, piv), C), rcond


def homotopy_rhs(state, problem, merge_threshold=0.0, floor=False):
    """Derivative ``d(u_1, v_1, ..., u_J, v_J, lam)/ds`` at ``state``.

    Raises
    ------
    SingularSystemError
        When the reciprocal condition number of ``K`` is below ``1e-12``; this
        happens in particular at the exact tour.
    """
    system = assemble_matrix(assemble_coefficients(state, problem, merge_threshold, floor))
    D, _ = _solve(system.K, system.C)
    return D


def system_rcond(state, problem):
    K = assemble_matrix(assemble_coefficients(state, problem)).K
    return _factor(K)[2]


def rk4_step(state, h, problem, merge_threshold=0.0, floor=False, k1=None):
    """One classical Runge-Kutta step of size ``h`` in ``s``.

    A failing stage re-raises its error with ``stage`` (1-4) attached.
    """
    if h == 0:
        return state
    y0 = state.as_vector()

    def f(y, stage):
        try:
            return homotopy_rhs(HomotopyState.from_vector(y, state.s), problem,
                                merge_threshold, floor)
        except (MergePendingError, SingularSystemError, DegenerateSegmentError) as exc:
            exc.stage = stage
            raise
        except ValueError as exc:  # non-finite stage point
            raise SingularSystemError(float("nan"), stage) from exc

    if k1 is None:
        k1 = f(y0, 1)
    k2 = f(y0 + 0.5 * h * k1, 2)
    k3 = f(y0 + 0.5 * h * k2, 3)
    k4 = f(y0 + h * k3, 4)
    y1 = y0 + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return HomotopyState.from_vector(y1, state.s + h)


def detect_merge(state, problem, threshold):
    """Smallest segment index whose length is at most ``threshold``, else None."""
    m, n = _segments(state.vertices, problem.start, problem.end)
    hit = np.flatnonzero(m * m + n * n <= threshold * threshold)
    return int(hit[0]) if hit.size else None


def _sample(state, problem, merged=False):
    path = problem.path(state.vertices)
    gf = grad_energy(path, problem.layout, problem.model)
    try:
        gl = grad_length(path)
        r = float(np.max(np.abs(gf - state.lam * gl)))
    except DegenerateSegmentError:
        r = float("nan")
    scale = float(np.max(np.abs(gf)))
    rel = r / scale if scale > 0 else r
    return TraceSample(state, path_length(path), energy(path, problem.layout, problem.model),
                       r, rel, merged)


def _segment_rates(state, D, problem):
    """d(length of each segment)/ds given the state derivative ``D``."""
    m, n = _segments(state.vertices, problem.start, problem.end)
    ell = np.hypot(m, n)
    dw = np.vstack([np.zeros(2), D[:-1].reshape(-1, 2), np.zeros(2)])
    dm = dw[:-1, 0] - dw[1:, 0]
    dn = dw[:-1, 1] - dw[1:, 1]
    return ell, (m * dm + n * dn) / ell


def integrate(problem, state0, tour_length, *, step_size=0.1, merge_threshold=1e-3,
              target_lengths=(), max_steps=None, continue_after_merge=False,
              max_halvings=20, order=None):
    """Integrate the continuation ODE from ``state0`` and record a :class:`Trace`.

    Steps have the nominal size ``step_size`` except when shortened to land
    exactly on a requested length or to approach a vertex merge. Near a merge
    the step is cut to half the predicted time for the closing segment to reach
    zero length, so each step halves that segment; the run stops once it is
    at most ``merge_threshold`` long.
    """
    if step_size <= 0:
        raise ValueError("step_size must be > 0")
    floor_len = problem.floor_length() + 10.0 * merge_threshold
    if max_steps is None:
        max_steps = int(math.ceil(10.0 * tour_length / step_size))
    targets = sorted({float(t) for t in target_lengths}, reverse=True)
    for t in targets:
        if not floor_len < t <= tour_length + 1e-12:
            raise RangeError(
                f"target length {t:g} outside ({floor_len:g}, {tour_length:g}]"
            )
    # s at which each requested length is reached, since dg/ds = -1
    target_s = [tour_length - t for t in targets if tour_length - t > state0.s]

    trace = Trace(problem, float(tour_length), tuple(order or range(problem.J)))
    trace.samples.append(_sample(state0, problem))
    merged = set()
    if detect_merge(state0, problem, merge_threshold) is not None:
        trace.terminated_reason = MERGE_DETECTED
        trace.merge_events.append((0, detect_merge(state0, problem, merge_threshold)))
        return trace
    if targets and not target_s:
        trace.terminated_reason = TARGET_REACHED
        return trace

    state = state0
    floor = False
    steps = 0
    while True:
        if steps >= max_steps:
            trace.terminated_reason = MAX_STEPS
            break
        if trace.samples[-1].length <= floor_len:
            trace.terminated_reason = STRAIGHT_LINE_FLOOR
            break

        h = step_size
        if target_s:
            h = min(h, target_s[0] - state.s)
        try:
            k1 = homotopy_rhs(state, problem, merge_threshold if floor else 0.0, floor)
        except (SingularSystemError, DegenerateSegmentError) as exc:
            logger.info("continuation stopped at s=%.6g: %s", state.s, exc)
            k = int(np.argmin(segment_lengths(state, problem)))
            trace.merge_events.append((len(trace.samples) - 1, k))
            trace.terminated_reason = MERGE_DETECTED
            break

        ell, rate = _segment_rates(state, k1, problem)
        closing = (rate < 0) & ~np.isin(np.arange(ell.size), list(merged))
        if np.any(closing):
            tau = np.min(ell[closing] / -rate[closing])
            if tau < 2.0 * h:
                h = min(h, 0.5 * tau)

        accepted = None
        for _ in range(max_halvings):
            try:
                cand = rk4_step(state, h, problem, merge_threshold if floor else 0.0,
                                floor, k1=k1)
            except (MergePendingError, SingularSystemError, DegenerateSegmentError):
                h *= 0.5
                continue
            ell_new = segment_lengths(cand, problem)
            worst = np.min(ell_new / np.maximum(ell, 1e-300))
            if worst < 0.25:
                # the closing segment collapsed faster than predicted
                h *= 0.5
                continue
            accepted = cand
            break
        if accepted is None:
            k = int(np.argmin(segment_lengths(state, problem)))
            trace.merge_events.append((len(trace.samples) - 1, k))
            trace.terminated_reason = MERGE_DETECTED
            break

        state = accepted
        steps += 1
        if target_s and abs(state.s - target_s[0]) <= 1e-12 * max(1.0, tour_length):
            state = replace(state, s=target_s[0])
            target_s.pop(0)

        newly = [k for k in range(problem.J + 1)
                 if k not in merged and segment_lengths(state, problem)[k] <= merge_threshold]
        trace.samples.append(_sample(state, problem, merged=bool(merged or newly)))
        if newly:
            for k in newly:
                trace.merge_events.append((len(trace.samples) - 1, k))
            merged.update(newly)
            if not continue_after_merge:
                trace.terminated_reason = MERGE_DETECTED
                break
            floor = True
            logger.warning("continuing past vertex merge at s=%.6g; results not validated",
                           state.s)
        if targets and not target_s:
            trace.terminated_reason = TARGET_REACHED
            break
    return trace


def solution_at_length(trace, L):
    """Path of length ``L`` by linear interpolation between bracketing samples."""
    lengths = trace.lengths
    tol = SAMPLE_MATCH_RTOL * max(1.0, abs(L))
    near = np.flatnonzero(np.abs(lengths - L) <= tol)
    if near.size:
        return trace.path(int(near[np.argmin(np.abs(lengths[near] - L))]))
    if not lengths.min() <= L <= lengths.max():
        raise RangeError(
            f"length {L:g} outside sampled range [{lengths.min():g}, {lengths.max():g}]"
        )
    # lengths are strictly decreasing
    i = int(np.searchsorted(-lengths, -L)) - 1
    L0, L1 = lengths[i], lengths[i + 1]
    t = (L0 - L) / (L0 - L1)
    w0 = trace.samples[i].state.vertices
    w1 = trace.samples[i + 1].state.vertices
    return trace.problem.path((1 - t) * w0 + t * w1)


def multiplier_at_length(trace, L):
    lengths = trace.lengths
    tol = SAMPLE_MATCH_RTOL * max(1.0, abs(L))
    if not lengths.min() - tol <= L <= lengths.max() + tol:
        raise RangeError(f"length {L:g} outside sampled range")
    return float(np.interp(-L, -lengths, trace.lambdas))


def build_problem(scenario):
    """Order the scenario's heads and return ``(problem, TourOrder)``."""
    from .ordering import order_heads

    heads = scenario.heads_array
    order = order_heads(heads, scenario.start, scenario.end, scenario.ordering)
    problem = HarvestProblem.from_arrays(heads[list(order.perm)], scenario.start,
                                         scenario.end, scenario.p)
    return problem, order


def run_homotopy(scenario):
    """Order the heads, build the near-tour start and integrate to termination.

    With ``scenario.target_lengths`` empty the run sweeps until the first
    vertex merge (or the straight-line floor); otherwise it stops at the
    shortest requested length, landing a sample exactly on each one.
    """
    problem, order = build_problem(scenario)
    state0 = initial_state(problem, scenario.lambda0)
    return integrate(
        problem, state0, order.tour_length,
        step_size=scenario.step_size,
        merge_threshold=scenario.merge_threshold,
        target_lengths=scenario.target_lengths,
        max_steps=scenario.max_steps,
        continue_after_merge=scenario.continue_after_merge,
        order=order.perm,
    )
