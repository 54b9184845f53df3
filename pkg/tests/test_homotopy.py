import time

import numpy as np
import pytest

from droneharvest import HarvestProblem, HomotopyState, initial_state, solution_at_length
from droneharvest.checks import matrix_discrepancy
from droneharvest.exceptions import (
    DegenerateBisectorError,
    MergePendingError,
    RangeError,
    SingularSystemError,
)
from droneharvest.geometry import energy, grad_length, lagrange_residual, path_length
from droneharvest.homotopy import (
    MERGE_DETECTED,
    RCOND_FLOOR,
    TARGET_REACHED,
    assemble_coefficients,
    assemble_matrix,
    detect_merge,
    homotopy_rhs,
    integrate,
    relative_residual,
    rk4_step,
    run_homotopy,
    segment_lengths,
    system_rcond,
)

from conftest import random_layout


@pytest.fixture
def single_head():
    return HarvestProblem.from_arrays([[2.0, 0.0]], (0.0, 0.0), p=2.0)


def _random_state(rng, J, p=2.0):
    heads, start = random_layout(rng, J)
    end = start if rng.random() < 0.5 else rng.uniform(-5, 5, size=2)
    problem = HarvestProblem.from_arrays(heads, start, end, p)
    w = heads + 0.4 * rng.standard_normal(heads.shape)
    return problem, HomotopyState.from_vertices(w, -rng.uniform(0.05, 2.0))


# ---------------------------------------------------------------- initial state

def test_initial_state_single_head(single_head):
    st = initial_state(single_head, lambda0=0.1)
    np.testing.assert_allclose(st.vertices, [[1.9, 0.0]], atol=1e-12)
    assert st.lam == -0.1
    path = single_head.path(st.vertices)
    assert lagrange_residual(path, st.lam, single_head.layout, single_head.model) < 1e-12


def test_initial_state_unrefined_matches_formula(single_head):
    st = initial_state(single_head, lambda0=0.1, refine=False)
    np.testing.assert_allclose(st.vertices, [[1.9, 0.0]], atol=1e-15)


def test_small_lambda0_approaches_tour(case_scenarios):
    from droneharvest.homotopy import build_problem
    problem, order = build_problem(case_scenarios["case1"])
    lengths = [path_length(problem.path(initial_state(problem, lam0).vertices))
               for lam0 in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert all(a < b for a, b in zip(lengths, lengths[1:]))
    assert lengths[-1] < order.tour_length
    assert order.tour_length - lengths[-1] < 1e-3


def test_case1_initial_residual(case_scenarios):
    from droneharvest.homotopy import build_problem
    problem, _ = build_problem(case_scenarios["case1"])
    st = initial_state(problem, 0.05)
    assert relative_residual(problem.path(st.vertices), st.lam, problem) <= 1e-3


def test_initial_state_s_offsets_consumed_length(case_scenarios):
    from droneharvest.homotopy import build_problem
    problem, order = build_problem(case_scenarios["case2"])
    st = initial_state(problem, 0.05)
    assert st.s == pytest.approx(order.tour_length - path_length(problem.path(st.vertices)),
                                 abs=1e-14)


def test_collinear_head_rejected():
    problem = HarvestProblem.from_arrays([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]],
                                         (0.0, 0.0), (4.0, 0.0))
    with pytest.raises(DegenerateBisectorError) as info:
        initial_state(problem, 0.05)
    assert info.value.index == 0


# ---------------------------------------------------------------- coefficients and matrix

def test_symmetric_single_head_coefficients(single_head):
    st = HomotopyState.from_vertices([[1.5, 0.0]], -0.5)
    c = assemble_coefficients(st, single_head)
    assert c.s3[0] == pytest.approx(2.0)  # p * A**q with q = 0
    assert c.w[0] == pytest.approx(2.0)
    assert c.z[0] == 0.0
    assert c.s4[0] == 0.0 and c.t3[0] == 0.0
    K = assemble_matrix(c).K
    np.testing.assert_allclose(K[0], [2.0, 0.0, -2.0], atol=1e-15)
    np.testing.assert_allclose(K[2], [2.0, 0.0, 0.0], atol=1e-15)
    assert K[1, 0] == 0.0 and K[1, 2] == 0.0 and K[1, 1] == pytest.approx(c.t4[0])


def test_right_hand_side_vector():
    rng = np.random.default_rng(5)
    problem, st = _random_state(rng, 4)
    C = assemble_matrix(assemble_coefficients(st, problem)).C
    assert C.shape == (9,)
    assert np.count_nonzero(C) == 1 and C[-1] == -1.0


@pytest.mark.parametrize("seed", range(10))
def test_coefficient_cross_symmetry_and_border(seed):
    rng = np.random.default_rng(seed)
    problem, st = _random_state(rng, int(rng.integers(1, 9)), p=float(rng.choice([2, 4, 8])))
    c = assemble_coefficients(st, problem)
    np.testing.assert_array_equal(c.s2, c.t1)
    np.testing.assert_array_equal(c.s4, c.t3)
    gl = grad_length(problem.path(st.vertices)).reshape(-1, 2)
    np.testing.assert_allclose(c.w, gl[:, 0], atol=1e-12)
    np.testing.assert_allclose(c.z, gl[:, 1], atol=1e-12)
    assert np.all(np.hypot(c.w, c.z) <= 2 + 1e-12)
    K = assemble_matrix(c).K
    n = 2 * st.J
    np.testing.assert_allclose(K[:n, :n], K[:n, :n].T, atol=1e-12)
    np.testing.assert_allclose(K[:n, n], -K[n, :n], atol=0)


def test_block_form_equivalence_fifty_states():
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(50):
        problem, st = _random_state(rng, int(rng.integers(1, 9)),
                                    p=float(rng.choice([2, 3, 4, 8])))
        worst = max(worst, matrix_discrepancy(st, problem)[0])
    assert worst <= 1e-10


def test_merge_pending_names_segment(single_head):
    problem = HarvestProblem.from_arrays([[1.0, 1.0], [2.0, 1.0]], (0.0, 0.0))
    st = HomotopyState.from_vertices([[1.5, 0.5], [1.5, 0.5 + 1e-5]], -0.1)
    with pytest.raises(MergePendingError) as info:
        assemble_coefficients(st, problem, merge_threshold=1e-3)
    assert info.value.index == 1


# ---------------------------------------------------------------- rhs and stepping

def test_single_head_derivatives(single_head):
    st = HomotopyState.from_vertices([[1.7, 0.0]], -0.3)
    D = homotopy_rhs(st, single_head)
    np.testing.assert_allclose(D, [-0.5, 0.0, -0.5], atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_length_decreases_at_unit_rate(seed):
    rng = np.random.default_rng(seed + 50)
    problem, st = _random_state(rng, int(rng.integers(1, 8)))
    D = homotopy_rhs(st, problem)
    c = assemble_coefficients(st, problem)
    assert np.dot(c.w, D[:-1:2]) + np.dot(c.z, D[1:-1:2]) == pytest.approx(-1.0, abs=1e-10)
    K = assemble_matrix(c)
    assert np.max(np.abs(K.K @ D - K.C)) <= 1e-10


def test_mirror_symmetry():
    heads = np.array([[2.0, 1.0], [3.0, 4.0], [6.0, 2.5]])
    w = heads + [[0.2, -0.3], [-0.1, -0.2], [-0.3, 0.1]]
    start = np.array([0.0, 0.5])
    flip = np.array([1.0, -1.0])
    D = homotopy_rhs(HomotopyState.from_vertices(w, -0.4),
                     HarvestProblem.from_arrays(heads, start))
    Dm = homotopy_rhs(HomotopyState.from_vertices(w * flip, -0.4),
                      HarvestProblem.from_arrays(heads * flip, start * flip))
    np.testing.assert_allclose(Dm[:-1:2], D[:-1:2], atol=1e-12)
    np.testing.assert_allclose(Dm[1:-1:2], -D[1:-1:2], atol=1e-12)
    assert Dm[-1] == pytest.approx(D[-1], abs=1e-12)


@pytest.mark.parametrize("p", [3.0, 4.0, 8.0])
def test_singular_at_tour_for_higher_powers(case_scenarios, p):
    from droneharvest.homotopy import build_problem
    problem, _ = build_problem(case_scenarios["case1"].with_overrides(p=p))
    st = HomotopyState.from_vertices(problem.heads, 0.0)
    assert system_rcond(st, problem) < RCOND_FLOOR
    with pytest.raises(SingularSystemError) as info:
        homotopy_rhs(st, problem)
    assert info.value.rcond < RCOND_FLOOR


def test_tour_is_regular_for_quadratic_energy(case_scenarios):
    # with p = 2 the energy Hessian is 2I, so the bordered system stays invertible
    from droneharvest.homotopy import build_problem
    problem, _ = build_problem(case_scenarios["case1"])
    st = HomotopyState.from_vertices(problem.heads, 0.0)
    assert system_rcond(st, problem) > 1e-3


def test_rk4_single_head_exact(single_head):
    st = initial_state(single_head, 0.1)
    nxt = rk4_step(st, 0.1, single_head)
    assert nxt.u[0] - st.u[0] == pytest.approx(-0.05, abs=1e-9)
    assert nxt.v[0] == pytest.approx(0.0, abs=1e-12)
    assert nxt.s == pytest.approx(st.s + 0.1)


def test_rk4_zero_step_is_identity(single_head):
    st = initial_state(single_head, 0.1)
    assert rk4_step(st, 0.0, single_head) is st


def test_rk4_case1_one_step_length(case_scenarios):
    from droneharvest.homotopy import build_problem
    problem, _ = build_problem(case_scenarios["case1"])
    st = initial_state(problem, 0.05)
    nxt = rk4_step(st, 0.1, problem)
    drop = path_length(problem.path(st.vertices)) - path_length(problem.path(nxt.vertices))
    assert drop == pytest.approx(0.1, abs=1e-4)


@pytest.mark.parametrize("failing_stage", [1, 2, 3, 4])
def test_rk4_stage_failure_carries_stage(monkeypatch, single_head, failing_stage):
    import droneharvest.homotopy as hm

    real = hm.homotopy_rhs
    calls = []

    def flaky(*args, **kwargs):
        calls.append(1)
        if len(calls) == failing_stage:
            raise MergePendingError(0, 1e-5)
        return real(*args, **kwargs)

    monkeypatch.setattr(hm, "homotopy_rhs", flaky)
    st = initial_state(single_head, 0.1)
    with pytest.raises(MergePendingError) as info:
        rk4_step(st, 0.1, single_head)
    assert info.value.stage == failing_stage


# ---------------------------------------------------------------- merge detection

def test_detect_merge():
    problem = HarvestProblem.from_arrays([[1.0, 1.0], [2.0, 1.0]], (0.0, 0.0))
    close = HomotopyState.from_vertices([[1.5, 0.5], [1.5, 0.5 + 1e-4]], -0.1)
    apart = HomotopyState.from_vertices([[1.0, 0.8], [2.0, 0.8]], -0.1)
    assert detect_merge(close, problem, 1e-3) == 1
    assert detect_merge(apart, problem, 1e-3) is None


# ---------------------------------------------------------------- full runs

@pytest.mark.parametrize("name", ["case1", "case2", "case3", "case4"])
def test_sweep_invariants(case_traces, name):
    tr = case_traces[name]
    assert tr.terminated_reason == MERGE_DETECTED
    L = tr.lengths
    assert np.all(np.diff(L) < 0)
    assert np.all(np.diff(tr.energies) >= -1e-9)
    pre = tr.pre_merge_samples()
    assert max(smp.relative_residual for smp in pre) <= 1e-3
    dev = max(abs(smp.length - (tr.tour_length - smp.state.s)) for smp in pre)
    assert dev <= 0.01 * tr.tour_length


def test_case4_sweep_runtime(case_scenarios):
    t0 = time.perf_counter()
    tr = run_homotopy(case_scenarios["case4"])
    assert time.perf_counter() - t0 < 5.0
    assert tr.terminated_reason == MERGE_DETECTED


def test_case1_to_sixteen(case_scenarios):
    tr = run_homotopy(case_scenarios["case1"].with_overrides(target_lengths=(16.0,)))
    assert tr.terminated_reason == TARGET_REACHED
    path = solution_at_length(tr, 16.0)
    assert abs(path_length(path) - 16.0) <= 1e-3
    assert tr.samples[-1].relative_residual <= 1e-3


def test_target_equal_to_tour_gives_initial_sample_only(case_scenarios):
    sc = case_scenarios["case1"]
    from droneharvest.homotopy import build_problem
    _, order = build_problem(sc)
    tr = run_homotopy(sc.with_overrides(target_lengths=(order.tour_length,)))
    assert len(tr) == 1 and tr.terminated_reason == TARGET_REACHED


def test_targets_are_landed_exactly(case_scenarios):
    sc = case_scenarios["case2"]
    tr = run_homotopy(sc.with_overrides(target_lengths=(18.0, 17.33, 16.05)))
    for t in (18.0, 17.33, 16.05):
        assert np.min(np.abs(tr.lengths - t)) < 1e-7


def test_target_below_floor_rejected(single_head):
    st = initial_state(single_head, 0.1)
    with pytest.raises(RangeError):
        integrate(single_head, st, 4.0, target_lengths=(0.001,))


def test_first_merge_coincides_with_slope_change(case_traces):
    tr = case_traces["case1"]
    k = tr.first_merge_index()
    steps = -np.diff(tr.lengths[:k + 1])
    nominal = np.isclose(steps, 0.1, rtol=1e-2)
    # constant unit slope with full steps, until event location shortens them just before the merge
    first_short = int(np.flatnonzero(~nominal)[0])
    assert first_short >= k - 12
    assert np.all(nominal[:first_short])
    # the slope itself (length lost per unit s) stays -1 right up to the merge
    ds = np.diff(tr.s_values[:k + 1])
    np.testing.assert_allclose(steps / ds, 1.0, atol=1e-4)


def test_single_head_sweep_follows_closed_form(single_head):
    from droneharvest.oracle import single_head_closed_form
    st = initial_state(single_head, 0.1)
    tr = integrate(single_head, st, 4.0, target_lengths=(2.0,))
    path = solution_at_length(tr, 2.0)
    exact, lam = single_head_closed_form((2, 0), (0, 0), 2.0)
    np.testing.assert_allclose(path.vertices, exact.vertices, atol=1e-9)
    assert tr.samples[-1].state.lam == pytest.approx(lam, abs=1e-9)


def test_solution_at_length_exact_sample_verbatim(case_traces):
    tr = case_traces["case3"]
    path = solution_at_length(tr, tr.samples[5].length)
    np.testing.assert_array_equal(path.vertices, tr.samples[5].state.vertices)


def test_solution_at_length_interpolates_and_orders_energy(case_traces):
    tr = case_traces["case1"]
    prob = tr.problem
    Ls = np.linspace(tr.lengths.min() + 0.01, tr.lengths.max() - 0.01, 25)
    paths = [solution_at_length(tr, L) for L in Ls]
    for L, pth in zip(Ls, paths):
        assert abs(path_length(pth) - L) <= 1e-3 * L
    e = [energy(pth, prob.layout, prob.model) for pth in paths]
    assert all(a >= b - 1e-9 for a, b in zip(e, e[1:]))
    with pytest.raises(RangeError):
        solution_at_length(tr, tr.lengths.min() - 0.5)


def test_step_convergence_order(case_scenarios):
    sc = case_scenarios["case1"]
    from droneharvest.homotopy import build_problem
    _, order = build_problem(sc)
    target = order.tour_length - 2.0
    W = {}
    for h in (0.1, 0.05, 0.025):
        tr = run_homotopy(sc.with_overrides(step_size=h, target_lengths=(target,)))
        W[h] = tr.samples[-1].state.vertices
    e1 = np.max(np.abs(W[0.1] - W[0.025]))
    e2 = np.max(np.abs(W[0.05] - W[0.025]))
    assert e1 / e2 >= 8


def test_translation_equivariance(case_scenarios):
    sc = case_scenarios["case2"]
    shift = np.array([13.5, -7.25])
    moved = sc.with_overrides(heads=tuple(map(tuple, sc.heads_array + shift)),
                              start=tuple(np.array(sc.start) + shift),
                              end=tuple(np.array(sc.end) + shift))
    a, b = run_homotopy(sc), run_homotopy(moved)
    assert len(a) == len(b)
    for sa, sb in zip(a.samples, b.samples):
        np.testing.assert_allclose(sb.state.vertices, sa.state.vertices + shift, atol=1e-8)
        assert sb.state.lam == pytest.approx(sa.state.lam, abs=1e-9)


def test_post_merge_continuation_is_flagged(case_scenarios):
    tr = run_homotopy(case_scenarios["case1"].with_overrides(continue_after_merge=True))
    k = tr.first_merge_index()
    assert k < len(tr) - 1
    assert all(smp.merged for smp in tr.samples[k:])
    assert not any(smp.merged for smp in tr.samples[:k])
    assert np.all(np.diff(tr.lengths) < 0)


def test_segment_lengths_helper(single_head):
    st = HomotopyState.from_vertices([[1.0, 0.0]], -1.0)
    np.testing.assert_allclose(segment_lengths(st, single_head), [1.0, 1.0])
