"""Visit order of the cluster heads for the full tour.

Two routes are provided: an exact Held-Karp dynamic program for small
instances and a nearest-neighbour + 2-opt heuristic for large ones. Both treat
the drone start and end as fixed terminals, so a closed depot tour is just the
``start == end`` special case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import CapacityError
from .geometry import ClusterLayout

EXACT_MAX_HEADS = 14
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class TourOrder:
    """A permutation of head indices (zero-based) and its tour length."""

    perm: tuple
    tour_length: float

    def __post_init__(self):
        perm = tuple(int(i) for i in self.perm)
        if sorted(perm) != list(range(len(perm))):
            raise ValueError(f"perm must be a permutation of 0..{len(perm) - 1}, got {perm}")
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "tour_length", float(self.tour_length))


def _as_heads(layout):
    return layout.heads if isinstance(layout, ClusterLayout) else np.asarray(layout, float)


def _distances(heads, start, end):
    d_hh = np.linalg.norm(heads[:, None, :] - heads[None, :, :], axis=-1)
    d_s = np.linalg.norm(heads - np.asarray(start, float), axis=1)
    d_e = np.linalg.norm(heads - np.asarray(end, float), axis=1)
    return d_hh, d_s, d_e


def tour_length(heads, perm, start, end):
    """Length of the path start -> heads[perm] -> end."""
    pts = np.vstack([start, np.asarray(heads, float)[list(perm)], end])
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def exact_order(layout, start, end):
    """Shortest visit order by Held-Karp dynamic programming.

    Among orders whose length ties the optimum (to a relative ``1e-12``), the
    lexicographically smallest permutation is returned. With ``start == end``
    every tour ties with its reverse, so the rule matters in practice.

    Raises
    ------
    CapacityError
        If there are more than ``EXACT_MAX_HEADS`` heads.
    """
    heads = _as_heads(layout)
    J = len(heads)
    if J > EXACT_MAX_HEADS:
        raise CapacityError(
            f"exact ordering supports at most {EXACT_MAX_HEADS} heads (got {J}); "
            "use heuristic_order"
        )
    d_hh, d_s, d_e = _distances(heads, start, end)
    full = (1 << J) - 1

    # cost[mask, v]: shortest path leaving head v, visiting every head in
    # mask (v not in mask), then flying to the end point.
    cost = np.full((1 << J, J), np.inf)
    cost[0, :] = d_e
    masks = sorted(range(1, full + 1), key=lambda m: bin(m).count("1"))
    for mask in masks:
        members = [u for u in range(J) if mask >> u & 1]
        best = np.full(J, np.inf)
        for u in members:
            cand = d_hh[:, u] + cost[mask ^ (1 << u), u]
            np.minimum(best, cand, out=best)
        best[members] = np.inf
        cost[mask] = best

    total = d_s + np.array([cost[full ^ (1 << v), v] for v in range(J)])
    optimum = float(total.min())
    tol = _TIE_RTOL * max(optimum, 1.0)

    # Walk forward choosing the smallest index that still completes optimally.
    perm = []
    remaining = full
    spent = 0.0
    prev = None
    while remaining:
        for v in range(J):
            if not remaining >> v & 1:
                continue
            leg = d_s[v] if prev is None else d_hh[prev, v]
            if spent + leg + cost[remaining ^ (1 << v), v] <= optimum + tol:
                perm.append(v)
                spent += leg
                remaining ^= 1 << v
                prev = v
                break
        else:  # pragma: no cover - guarded by the DP invariant
            raise RuntimeError("Held-Karp reconstruction failed")
    return TourOrder(tuple(perm), tour_length(heads, perm, start, end))


def brute_force_order(layout, start, end):
    """Exhaustive scan of all ``J!`` orders; for testing only."""
    from itertools import permutations

    heads = _as_heads(layout)
    best_perm, best_len = None, np.inf
    for perm in permutations(range(len(heads))):
        length = tour_length(heads, perm, start, end)
        if length < best_len * (1 - _TIE_RTOL) - 1e-300:
            best_perm, best_len = perm, length
    return TourOrder(best_perm, best_len)


def _two_opt_gain(route, d, i, k):
    """Length saved by reversing ``route[i:k+1]``; route includes the terminals."""
    a, b = route[i - 1], route[i]
    c, e = route[k], route[k + 1]
    return d[a, b] + d[c, e] - d[a, c] - d[b, e]


def _full_distance_matrix(heads, start, end):
    pts = np.vstack([start, heads, end])
    return np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)


def improving_two_opt_moves(heads, perm, start, end, atol=1e-12):
    """All ``(i, k)`` reversals of ``perm[i:k+1]`` that shorten the tour."""
    heads = np.asarray(heads, float)
    d = _full_distance_matrix(heads, start, end)
    route = [0] + [p + 1 for p in perm] + [len(heads) + 1]
    moves = []
    for i in range(1, len(route) - 2):
        for k in range(i + 1, len(route) - 1):
            if _two_opt_gain(route, d, i, k) > atol:
                moves.append((i - 1, k - 1))
    return moves


def heuristic_order(layout, start, end, max_passes=1000):
    """Nearest-neighbour construction refined by first-improvement 2-opt.

    Terminates at a 2-opt local optimum: no reversal of a contiguous block of
    heads shortens the start-to-end path.
    """
    heads = _as_heads(layout)
    J = len(heads)
    d = _full_distance_matrix(heads, start, end)
    # Node 0 is the start, 1..J are heads, J + 1 is the end.
    unvisited = set(range(1, J + 1))
    route = [0]
    while unvisited:
        last = route[-1]
        nxt = min(unvisited, key=lambda v: (d[last, v], v))
        route.append(nxt)
        unvisited.remove(nxt)
    route.append(J + 1)

    for _ in range(max_passes):
        improved = False
        for i in range(1, len(route) - 2):
            for k in range(i + 1, len(route) - 1):
                if _two_opt_gain(route, d, i, k) > 1e-12:
                    route[i:k + 1] = route[i:k + 1][::-1]
                    improved = True
        if not improved:
            break
    perm = tuple(v - 1 for v in route[1:-1])
    return TourOrder(perm, tour_length(heads, perm, start, end))


def order_heads(layout, start, end, method="exact"):
    """Dispatch on ``method`` in ``{"exact", "heuristic", "as-given"}``."""
    heads = _as_heads(layout)
    if method == "exact":
        return exact_order(heads, start, end)
    if method == "heuristic":
        return heuristic_order(heads, start, end)
    if method == "as-given":
        perm = tuple(range(len(heads)))
        return TourOrder(perm, tour_length(heads, perm, start, end))
    raise ValueError(f"unknown ordering method {method!r}")
