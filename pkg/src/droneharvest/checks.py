"""Verification suites run by ``droneharvest validate`` and the acceptance tests.

Each check returns a :class:`CheckResult`; none of them raise on failure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import energy, grad_energy, grad_length, path_length
from .homotopy import (
    SAMPLE_MATCH_RTOL,
    assemble_coefficients,
    assemble_matrix,
    block_form_matrix,
    block_ordering,
    integrate,
)
from .oracle import constrained_minimize, fd_gradient, single_head_closed_form

GRADIENT_RTOL = 1e-6
FD_STEP = 1e-6
RESIDUAL_RTOL = 1e-3
LINEARITY_FRACTION = 0.01
ENERGY_STEP_TOL = 1e-9
MATRIX_ATOL = 1e-10
ORACLE_RATIO = 1.01
ORACLE_VIOLATION_RTOL = 1e-6


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    value: float = float("nan")

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<22} {self.detail}"


def gradient_error(path, layout, model, h=FD_STEP):
    """Worst finite-difference mismatch of both gradients, relative to their max-norm."""
    J = path.J
    pts = path.points()

    def field(fn):
        def f(x):
            return fn(path.with_vertices(x.reshape(J, 2)))
        return f

    x = pts[1:-1].ravel()
    errs = []
    for analytic, fn in (
        (grad_energy(path, layout, model), lambda pth: energy(pth, layout, model)),
        (grad_length(path), path_length),
    ):
        fd = fd_gradient(field(fn), x, h=h)
        scale = max(np.max(np.abs(analytic)), np.finfo(float).tiny)
        errs.append(float(np.max(np.abs(analytic - fd)) / scale))
    return max(errs)


def check_gradients(problem, states, rtol=GRADIENT_RTOL):
    worst = 0.0
    for st in states:
        worst = max(worst, gradient_error(problem.path(st.vertices), problem.layout,
                                          problem.model))
    return CheckResult("gradients", worst <= rtol,
                       f"max rel err {worst:.2e} over {len(states)} states (tol {rtol:g})",
                       worst)


def check_residuals(trace, rtol=RESIDUAL_RTOL):
    pre = trace.pre_merge_samples()
    worst = max((smp.relative_residual for smp in pre), default=0.0)
    ok = bool(pre) and np.isfinite(worst) and worst <= rtol
    return CheckResult("lagrange-residual", ok,
                       f"max rel residual {worst:.2e} over {len(pre)} pre-merge samples "
                       f"(tol {rtol:g})", worst)


def check_linearity(trace, fraction=LINEARITY_FRACTION):
    pre = trace.pre_merge_samples()
    L0 = trace.tour_length
    dev = max((abs(smp.length - (L0 - smp.state.s)) for smp in pre), default=0.0)
    return CheckResult("length-linearity", dev <= fraction * L0,
                       f"max |length - (L0 - s)| {dev:.2e} (tol {fraction * L0:.3g})", dev)


def check_energy_monotone(trace, tol=ENERGY_STEP_TOL):
    e = trace.energies
    drop = float(max(0.0, -np.min(np.diff(e)))) if e.size > 1 else 0.0
    p = trace.problem.model.p
    defect = trace.tour_length - trace.lengths
    root_drop = 0.0
    if e.size > 1:
        order = np.argsort(defect, kind="stable")
        root_drop = float(max(0.0, -np.min(np.diff(e[order] ** (1 / p)))))
    ok = drop <= tol and root_drop <= tol
    return CheckResult("energy-monotone", ok,
                       f"largest energy drop {drop:.2e}, root drop {root_drop:.2e} (tol {tol:g})",
                       max(drop, root_drop))


def matrix_discrepancy(state, problem):
    K = assemble_matrix(assemble_coefficients(state, problem)).K
    idx = block_ordering(state.J)
    Hb = block_form_matrix(state, problem)
    return float(np.max(np.abs(K[np.ix_(idx, idx)] - Hb))), float(np.max(np.abs(K)))


def check_matrix_equivalence(problem, states, atol=MATRIX_ATOL, relative=False):
    """Interleaved (coefficient-by-coefficient) assembly versus block-form assembly.

    With ``relative`` the tolerance is scaled by ``max(1, max|K|)``; entries
    grow like ``1/segment length`` near a merge, where absolute agreement is
    limited by rounding.
    """
    worst = 0.0
    for st in states:
        diff, kmax = matrix_discrepancy(st, problem)
        worst = max(worst, diff / max(1.0, kmax) if relative else diff)
    kind = "scaled" if relative else "max-abs"
    return CheckResult("matrix-equivalence", worst <= atol,
                       f"{kind} diff {worst:.2e} over {len(states)} states (tol {atol:g})",
                       worst)


def _landed_path(trace, L, step_size, merge_threshold):
    # rerun from the first sample so a step ends exactly on L, avoiding interpolation error
    for smp in trace.samples:
        if abs(smp.length - L) <= SAMPLE_MATCH_RTOL * L:
            return smp.state
    sub = integrate(trace.problem, trace.samples[0].state, trace.tour_length,
                    step_size=step_size, merge_threshold=merge_threshold, target_lengths=(L,))
    return sub.samples[-1].state


def check_oracle_agreement(trace, defects=(1.0, 2.0, 3.0), restarts=16, seed=0,
                           ratio=ORACLE_RATIO, step_size=0.1, merge_threshold=1e-3):
    problem = trace.problem
    pre = trace.pre_merge_samples()
    lo = min(smp.length for smp in pre)
    hi = max(smp.length for smp in pre)
    worst_ratio, worst_viol, used = 0.0, 0.0, []
    for d in defects:
        L = trace.tour_length - d
        if not lo <= L <= hi:
            continue
        hom = problem.path(_landed_path(trace, L, step_size, merge_threshold).vertices)
        e_h = energy(hom, problem.layout, problem.model)
        res = constrained_minimize(problem.heads, problem.start, problem.end, L,
                                   problem.model.p, restarts=restarts, seed=seed)
        worst_ratio = max(worst_ratio, e_h / res.energy if res.energy > 0 else 1.0)
        worst_viol = max(worst_viol, res.constraint_violation / L)
        used.append(d)
    if not used:
        return CheckResult("oracle-agreement", False, "no target length inside the trace")
    ok = worst_ratio <= ratio and worst_viol <= ORACLE_VIOLATION_RTOL
    return CheckResult("oracle-agreement", ok,
                       f"worst homotopy/oracle energy {worst_ratio:.8f} (tol {ratio}), "
                       f"violation {worst_viol:.1e}, defects {used}", worst_ratio)


def check_closed_form(trace, atol=1e-6):
    problem = trace.problem
    if problem.J != 1 or not np.array_equal(problem.start, problem.end):
        return CheckResult("closed-form", True, "not applicable")
    worst = 0.0
    for smp in trace.pre_merge_samples():
        path, lam = single_head_closed_form(problem.heads[0], problem.start, smp.length,
                                            problem.model.p)
        worst = max(worst, float(np.max(np.abs(path.vertices - smp.state.vertices))),
                    abs(lam - smp.state.lam))
    return CheckResult("closed-form", worst <= atol,
                       f"max deviation from single-head optimum {worst:.2e} (tol {atol:g})",
                       worst)


def validate_trace(trace, restarts=16, seed=0, gradient_states=20, step_size=0.1,
                   merge_threshold=1e-3):
    pre = trace.pre_merge_samples()
    step = max(1, len(pre) // gradient_states)
    states = [smp.state for smp in pre[::step]]
    results = [
        check_gradients(trace.problem, states),
        check_residuals(trace),
        check_linearity(trace),
        check_energy_monotone(trace),
        check_matrix_equivalence(trace.problem, states, relative=True),
        check_oracle_agreement(trace, restarts=restarts, seed=seed, step_size=step_size,
                               merge_threshold=merge_threshold),
    ]
    if trace.problem.J == 1:
        results.append(check_closed_form(trace))
    return results
