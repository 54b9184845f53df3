"""Energy objective, path-length constraint and their exact gradients.

Every other module is checked against the functions here, so nothing in this
file regularizes or smooths: degenerate inputs raise.

Indexing is zero-based throughout. A path with ``J`` harvesting vertices has
``J + 2`` points (start, vertices, end) and ``J + 1`` segments; segment ``k``
joins point ``k`` to point ``k + 1``, so vertex ``j`` sits between segments
``j`` and ``j + 1``. Gradients are flat vectors of length ``2J`` in interleaved
order ``(u_0, v_0, u_1, v_1, ...)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_distinct, check_point, check_points, check_power
from .exceptions import DegenerateSegmentError, DimensionError, DomainError, VertexAtHead

__all__ = [
    "Point2",
    "ClusterLayout",
    "DronePath",
    "PowerModel",
    "energy",
    "path_length",
    "segment_lengths",
    "grad_energy",
    "grad_length",
    "lagrange_residual",
    "shrink_toward",
]


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError(f"Point2 coordinates must be finite, got ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y

    def __array__(self, dtype=None, copy=None):
        return np.array([self.x, self.y], dtype=dtype or float)


class ClusterLayout:
    """Ordered, pairwise-distinct cluster-head positions."""

    __slots__ = ("_heads",)

    def __init__(self, heads):
        heads = check_points(heads, name="heads")
        check_distinct(heads)
        object.__setattr__(self, "_heads", _frozen(heads))

    def __setattr__(self, name, value):
        raise AttributeError("ClusterLayout is immutable")

    @property
    def heads(self):
        return self._heads

    @property
    def J(self):
        return self._heads.shape[0]

    def __len__(self):
        return self.J

    def reordered(self, perm):
        """Return a new layout with heads taken in the order ``perm``."""
        return ClusterLayout(self._heads[np.asarray(perm, dtype=int)])

    def __repr__(self):
        return f"ClusterLayout({self._heads.tolist()})"

    def __eq__(self, other):
        return isinstance(other, ClusterLayout) and np.array_equal(self._heads, other._heads)

    def __hash__(self):
        return hash(self._heads.tobytes())


class DronePath:
    """Fixed start and end points joined through ``J`` harvesting vertices."""

    __slots__ = ("_start", "_end", "_vertices")

    def __init__(self, start, end, vertices):
        object.__setattr__(self, "_start", _frozen(check_point(start, "start")))
        object.__setattr__(self, "_end", _frozen(check_point(end, "end")))
        object.__setattr__(
            self, "_vertices", _frozen(check_points(vertices, name="vertices", allow_empty=True))
        )

    def __setattr__(self, name, value):
        raise AttributeError("DronePath is immutable")

    @property
    def start(self):
        return self._start

    @property
    def end(self):
        return self._end

    @property
    def vertices(self):
        return self._vertices

    @property
    def J(self):
        return self._vertices.shape[0]

    def points(self):
        """All ``J + 2`` points including the fixed endpoints, shape ``(J + 2, 2)``."""
        return np.vstack([self._start, self._vertices, self._end])

    def with_vertices(self, vertices):
        return DronePath(self._start, self._end, vertices)

    def __repr__(self):
        return (f"DronePath(start={self._start.tolist()}, end={self._end.tolist()}, "
                f"vertices={self._vertices.tolist()})")


@dataclass(frozen=True)
class PowerModel:
    """Transmission power law ``energy ~ distance**p``."""

    p: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "p", check_power(self.p, p_max=None))

    @property
    def q(self):
        return self.p / 2.0 - 1.0


def _check_pair(path, layout):
    if path.J != layout.J:
        raise DimensionError(
            f"path has {path.J} vertices but layout has {layout.J} cluster heads"
        )


def energy(path, layout, model):
    """Total transmission energy ``sum_j |w_j - z_j|**p``."""
    _check_pair(path, layout)
    d = path.vertices - layout.heads
    A = np.einsum("ij,ij->i", d, d)
    return float(np.sum(A ** (model.p / 2.0)))


def segment_lengths(path):
    """Euclidean lengths of the ``J + 1`` path segments."""
    return np.linalg.norm(np.diff(path.points(), axis=0), axis=1)


def path_length(path):
    """Total flight distance from start through every vertex to end."""
    return float(np.sum(segment_lengths(path)))


def grad_energy(path, layout, model):
    """Gradient of :func:`energy` with respect to the vertices.

    Computed as ``p * a_j * A_j**q`` so that ``p`` in ``(2, 4)`` stays finite at
    a head (the ``A**(q-1)`` factor would diverge there).
    """
    _check_pair(path, layout)
    q = model.q
    d = path.vertices - layout.heads
    A = np.einsum("ij,ij->i", d, d)
    if q < 0 and np.any(A == 0):
        j = int(np.flatnonzero(A == 0)[0])
        raise DomainError(f"energy gradient is singular at head {j} for p={model.p:g}")
    return (model.p * d * (A ** q)[:, None]).ravel()


def grad_length(path):
    """Gradient of :func:`path_length` with respect to the vertices.

    Each vertex contributes the incoming unit tangent minus the outgoing one.
    """
    pts = path.points()
    diff = pts[:-1] - pts[1:]
    seg = np.linalg.norm(diff, axis=1)
    zero = np.flatnonzero(seg == 0.0)
    if zero.size and path.J > 0:
        raise DegenerateSegmentError(int(zero[0]))
    unit = diff / seg[:, None]
    return (unit[1:] - unit[:-1]).ravel()


def lagrange_residual(path, lam, layout, model):
    """Max-norm of ``grad f - lam * grad g``; zero at a constrained critical point."""
    r = grad_energy(path, layout, model) - lam * grad_length(path)
    return float(np.max(np.abs(r))) if r.size else 0.0


def shrink_toward(path, layout, j, delta):
    """Move vertex ``j`` a fraction ``delta`` of the way to its head.

    Raises :class:`VertexAtHead` when there is nothing to contract.
    """
    _check_pair(path, layout)
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta!r}")
    if not 0 <= j < path.J:
        raise IndexError(f"vertex index {j} out of range for J={path.J}")
    w = path.vertices.copy()
    z = layout.heads[j]
    if np.array_equal(w[j], z):
        raise VertexAtHead(j)
    if delta == 1.0:
        w[j] = z
    else:
        w[j] = w[j] + delta * (z - w[j])
    return path.with_vertices(w)
