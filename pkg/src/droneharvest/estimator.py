"""Scikit-learn style front end: ``fit`` on head positions, ``predict`` paths."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_distinct, check_point, check_points, check_power, check_positive
from .exceptions import RangeError
from .geometry import energy
from .homotopy import (
    SAMPLE_MATCH_RTOL,
    HarvestProblem,
    initial_state,
    integrate,
    multiplier_at_length,
    solution_at_length,
)
from .ordering import order_heads
from .scenario import ORDERING_METHODS


class HomotopyPathPlanner(BaseEstimator):
    """Locally energy-optimal drone paths for every range below the full tour.

    ``fit`` orders the cluster heads and integrates the continuation from the
    tour down to the first vertex merge (or the requested lengths); ``predict``
    then returns the harvesting vertices for any path length inside the
    covered range.

    Parameters
    ----------
    p : float, default=2.0
        Power-loss exponent, in ``[2, 16]``.
    step_size : float, default=0.1
        Nominal RK4 step in consumed length.
    lambda0 : float, default=0.05
        Magnitude of the multiplier at the near-tour starting point.
    merge_threshold : float, default=1e-3
        Segment length at which two consecutive vertices count as merged.
    ordering : {"exact", "heuristic", "as-given"}, default="exact"
        How the visit order of the heads is chosen.
    max_steps : int or None, default=None
        Step budget; ``None`` means ``10 * tour_length / step_size``.
    continue_after_merge : bool, default=False
        Keep integrating past a merge with the segment length floored.
        Samples after the merge are flagged and are not validated.
    refine_initial : bool, default=True
        Newton-polish the near-tour starting point at fixed multiplier.

    Attributes
    ----------
    order_ : tuple of int
        Visit order as indices into the fitted heads.
    tour_length_ : float
    trace_ : Trace
    min_length_, max_length_ : float
        Range of lengths ``predict`` accepts.
    """

    def __init__(self, p=2.0, step_size=0.1, lambda0=0.05, merge_threshold=1e-3,
                 ordering="exact", max_steps=None, continue_after_merge=False,
                 refine_initial=True):
        self.p = p
        self.step_size = step_size
        self.lambda0 = lambda0
        self.merge_threshold = merge_threshold
        self.ordering = ordering
        self.max_steps = max_steps
        self.continue_after_merge = continue_after_merge
        self.refine_initial = refine_initial

    def _validate_params(self):
        check_power(self.p)
        check_positive(self.step_size, "step_size")
        check_positive(self.lambda0, "lambda0")
        check_positive(self.merge_threshold, "merge_threshold")
        if self.ordering not in ORDERING_METHODS:
            raise ValueError(f"ordering must be one of {ORDERING_METHODS}, got {self.ordering!r}")

    def fit(self, X, y=None, start=(0.0, 0.0), end=None, target_lengths=None):
        """Compute the continuation family for heads ``X`` of shape ``(J, 2)``."""
        self._validate_params()
        heads = check_points(X, name="X")
        check_distinct(heads, name="head")
        start = check_point(start, "start")
        end = start.copy() if end is None else check_point(end, "end")

        order = order_heads(heads, start, end, self.ordering)
        problem = HarvestProblem.from_arrays(heads[list(order.perm)], start, end, self.p)
        state0 = initial_state(problem, self.lambda0, refine=self.refine_initial)
        self.trace_ = integrate(
            problem, state0, order.tour_length,
            step_size=self.step_size,
            merge_threshold=self.merge_threshold,
            target_lengths=() if target_lengths is None else target_lengths,
            max_steps=self.max_steps,
            continue_after_merge=self.continue_after_merge,
            order=order.perm,
        )
        self.heads_ = heads
        self.start_ = start
        self.end_ = end
        self.n_heads_ = heads.shape[0]
        self.order_ = order.perm
        self.tour_length_ = order.tour_length
        self.problem_ = problem
        self.termination_reason_ = self.trace_.terminated_reason
        lengths = self.trace_.lengths
        self.min_length_ = float(lengths.min())
        self.max_length_ = float(self.tour_length_)
        return self

    def _vertices_at(self, L):
        trace = self.trace_
        first = trace.samples[0]
        if L > first.length * (1 + SAMPLE_MATCH_RTOL):
            if L > self.tour_length_ * (1 + SAMPLE_MATCH_RTOL):
                raise RangeError(f"length {L:g} exceeds the full tour {self.tour_length_:g}")
            # between the tour and the first sample the branch is linear to first order
            t = (self.tour_length_ - L) / (self.tour_length_ - first.length)
            heads = self.problem_.heads
            return (1 - t) * heads + t * first.state.vertices
        return solution_at_length(trace, L).vertices

    def predict(self, lengths):
        """Harvesting vertices for each requested length.

        Returns
        -------
        ndarray of shape (n_lengths, J, 2)
            Vertices in visiting order (``order_``).
        """
        check_is_fitted(self, "trace_")
        lengths = np.atleast_1d(np.asarray(lengths, dtype=float))
        return np.stack([self._vertices_at(float(L)) for L in lengths])

    def path_at(self, length):
        check_is_fitted(self, "trace_")
        return self.problem_.path(self._vertices_at(float(length)))

    def multiplier_at(self, length):
        """Lagrange multiplier of the predicted path (zero at the full tour)."""
        check_is_fitted(self, "trace_")
        L = float(length)
        first = self.trace_.samples[0]
        if L > first.length * (1 + SAMPLE_MATCH_RTOL):
            if L > self.tour_length_ * (1 + SAMPLE_MATCH_RTOL):
                raise RangeError(f"length {L:g} exceeds the full tour {self.tour_length_:g}")
            t = (self.tour_length_ - L) / (self.tour_length_ - first.length)
            return t * first.state.lam + 0.0
        return multiplier_at_length(self.trace_, L)

    def energy_at(self, lengths):
        """Total transmission energy of the predicted path at each length."""
        W = self.predict(lengths)
        return np.array([energy(self.problem_.path(w), self.problem_.layout,
                                self.problem_.model) for w in W])

    def vertices_by_head(self, lengths):
        """Like :meth:`predict`, but rows indexed by the original head order."""
        W = self.predict(lengths)
        out = np.empty_like(W)
        out[:, list(self.order_), :] = W
        return out
