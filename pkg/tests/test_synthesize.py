import itertools
import math

import numpy as np
import pytest

from passivize.cones import build_s, check_siso
from passivize.lti import RationalTransferFunction, frequency_grid, hinf_norm, transform_tf
from passivize.synthesize import (
    SimultaneousSpec,
    closest_transform,
    constraint_matrix,
    feedback_feedthrough_bounds,
    feedback_feedthrough_cost,
    feedback_feedthrough_matrix,
    hinf_min_feedback_feedthrough,
    simultaneous_passivation,
)

CASE_MODES = [(0.0, 0.0), (-2 / 3, 0.0), (0.0, -1.25), (-0.4, -0.4)]
T_PRINTED = np.array([[0.6918, 0.4622], [0.4883, 0.3896]])
T_EXACT = np.array([[9 / 13, 6 / 13], [20 / 41, 16 / 41]])


def _sign_constraints(source, target):
    """Rows a with a . vec(T) = entries of inv(S_t) T S_s, built from basis matrices."""
    rows = []
    for k in range(4):
        e = np.zeros(4)
        e[k] = 1.0
        rows.append((np.linalg.inv(build_s(target)) @ e.reshape(2, 2) @ build_s(source)).ravel())
    return np.array(rows).T


def _active_set_qp(ref, a):
    """min |x - ref|^2 s.t. a x >= 0 by enumerating active sets of size <= 4."""
    best = None
    for size in range(0, 5):
        for act in itertools.combinations(range(len(a)), size):
            act = list(act)
            if act:
                aa = a[act]
                if np.linalg.matrix_rank(aa) < len(act):
                    continue
                # x = ref + aa^T lam with aa x = 0
                lam = np.linalg.solve(aa @ aa.T, -aa @ ref)
                if np.any(lam < -1e-12):
                    continue
                x = ref + aa.T @ lam
            else:
                x = ref.copy()
            if np.all(a @ x >= -1e-12):
                cost = float(np.sum((x - ref) ** 2))
                if best is None or cost < best[0] - 1e-14:
                    best = (cost, x)
    return best


def test_constraint_matrix_matches_basis_construction():
    for s, t in itertools.product(CASE_MODES, [(0, 0), (0.5, 0.1), (-1, 0.2)]):
        np.testing.assert_allclose(constraint_matrix(s, t), _sign_constraints(s, t), atol=1e-12)


def test_case_study_qp():
    res = simultaneous_passivation(SimultaneousSpec(CASE_MODES))
    assert res.feasible and res.theta == 1
    assert np.max(np.abs(res.t - T_PRINTED)) <= 1e-3
    np.testing.assert_allclose(res.t, T_EXACT, atol=1e-7)
    assert res.kkt_residual <= 1e-8
    for s, cert in zip(CASE_MODES, res.certificates):
        assert np.all(cert.m >= 0)
        assert check_siso(res.t, s, (0, 0)) is not None


def test_case_study_qp_matches_active_set_oracle():
    a = np.vstack([_sign_constraints(s, (0, 0)) for s in CASE_MODES])
    ref = np.eye(2).ravel()
    plus = _active_set_qp(ref, a)
    minus = _active_set_qp(ref, -a)
    cost, x = min(plus, minus, key=lambda b: b[0])
    res = simultaneous_passivation(SimultaneousSpec(CASE_MODES))
    np.testing.assert_allclose(res.t.ravel(), x, atol=1e-7)
    assert res.cost == pytest.approx(cost, abs=1e-9)


def test_random_specs_match_active_set_oracle():
    rng = np.random.default_rng(0)
    pool = [(0, 0), (-2 / 3, 0), (0, -1.25), (-0.4, -0.4), (0.3, 0.2), (1, -1), (-1, 0.2)]
    for _ in range(25):
        k = int(rng.integers(1, 4))
        modes = [pool[i] for i in rng.choice(len(pool), k, replace=False)]
        targets = [pool[i] for i in rng.choice(len(pool), k)]
        ref = rng.standard_normal((2, 2))
        res = simultaneous_passivation(SimultaneousSpec(modes, targets, ref))
        a = np.vstack([_sign_constraints(s, t) for s, t in zip(modes, targets)])
        plus = _active_set_qp(ref.ravel(), a)
        minus = _active_set_qp(ref.ravel(), -a)
        assert res.cost == pytest.approx(min(plus[0], minus[0]), abs=1e-7)


def test_single_mode_identity():
    res = simultaneous_passivation(SimultaneousSpec([(0, 0)]))
    np.testing.assert_allclose(res.t, np.eye(2), atol=1e-12)
    assert res.cost == pytest.approx(0.0, abs=1e-20)


def test_feasible_reference_is_returned():
    ref = np.array([[0.4, 0.4], [0.12, 0.2]]) @ np.linalg.inv(build_s((0, -1.25)))
    res = simultaneous_passivation(SimultaneousSpec([(0, -1.25)], [(0, 0)], ref))
    np.testing.assert_allclose(res.t, ref, atol=1e-10)


def test_negative_branch_selected():
    res = simultaneous_passivation(SimultaneousSpec([(0, 0)], reference=-np.eye(2)))
    assert res.theta == -1
    np.testing.assert_allclose(res.t, -np.eye(2), atol=1e-12)


def test_infeasible_spec_is_reported():
    # the two target cones meet only at the origin
    res = simultaneous_passivation(SimultaneousSpec([(0, 0), (0, 0)], [(1, 0.24), (0.24, 1)]))
    assert not res.feasible and res.t is None
    assert len(res.violated) == 2
    assert res.to_dict()["feasible"] is False


def test_spec_validation_and_json():
    with pytest.raises(ValueError):
        SimultaneousSpec([])
    with pytest.raises(ValueError):
        SimultaneousSpec([(0, 0)], [(0, 0), (0, 0)])
    spec = SimultaneousSpec(CASE_MODES)
    again = SimultaneousSpec.from_dict(spec.to_dict())
    assert again.to_dict() == spec.to_dict()


def test_closest_transform_example():
    res = closest_transform(np.eye(2), (0, -1), (1, 0))
    np.testing.assert_allclose(res.t, [[1.5, 0.5], [0.5, 0.5]], atol=1e-2)
    assert res.norm == pytest.approx(1 / math.sqrt(2), abs=1e-3)
    assert check_siso(res.t, (0, -1), (1, 0)) is not None


def test_closest_transform_already_certified():
    t0 = np.array([[1.0, 0.4], [0.4, 0.2]])
    res = closest_transform(t0, (2 / 3, 0), (2, 0))
    np.testing.assert_array_equal(res.t, t0)
    assert res.norm == 0.0


def test_baseline_distance():
    assert np.linalg.norm(np.array([[1, 1], [1, 2]]) - np.eye(2), 2) == pytest.approx(
        math.sqrt((3 + math.sqrt(5)) / 2), abs=1e-12)
    assert math.sqrt((3 + math.sqrt(5)) / 2) == pytest.approx(1.618, abs=1e-3)


def _cvx_closest(t0, source, target):
    cp = pytest.importorskip("cvxpy")
    best = math.inf
    for theta in (1, -1):
        m = cp.Variable((2, 2), nonneg=True)
        expr = theta * build_s(target) @ m @ np.linalg.inv(build_s(source)) - t0
        prob = cp.Problem(cp.Minimize(cp.sigma_max(expr)))
        prob.solve(solver=cp.CLARABEL)
        best = min(best, prob.value)
    return best


@pytest.mark.parametrize("t0, source, target", [
    (np.eye(2), (0, -1), (1, 0)),
    (np.eye(2), (-0.4, -0.4), (0.5, 0.2)),
    (np.array([[0.0, 1.0], [-1.0, 0.5]]), (0, 0), (0, 0)),
    (np.array([[2.0, -1.0], [0.3, 1.0]]), (0, -1.25), (0.2, 0)),
])
def test_closest_transform_matches_conic_oracle(t0, source, target):
    res = closest_transform(t0, source, target)
    assert res.norm == pytest.approx(_cvx_closest(t0, source, target), abs=1e-3)
    assert np.linalg.norm(res.t - t0, 2) == pytest.approx(res.norm, abs=1e-12)
    assert check_siso(res.t, source, target) is not None


def test_closest_transform_monte_carlo_bound():
    src, dst = (0, -1), (1, 0)
    res = closest_transform(np.eye(2), src, dst)
    rng = np.random.default_rng(1)
    m = rng.uniform(0, 2, size=(10_000, 2, 2))
    theta = rng.choice([-1.0, 1.0], size=(10_000, 1, 1))
    ts = theta * (build_s(dst) @ m @ np.linalg.inv(build_s(src)))
    norms = np.linalg.norm(ts - np.eye(2), ord=2, axis=(1, 2))
    assert res.norm <= norms.min() + 1e-6


def _closed_form_cost(g, ind, b, w):
    """Closed-form cost -2nu/(1+R+2nu b) * max |(1 + U G)/(1 + b G)|."""
    rho, nu = ind
    r = math.sqrt(1 - 4 * rho * nu)
    u = (1 + r) / (-2 * nu)
    h = g.freqresp(w)
    vals = np.abs((1 + u * h) / (1 + b * h))
    vals = np.append(vals, abs((1 + u * g.high_frequency_gain()) / (1 + b * g.high_frequency_gain())))
    return (-2 * nu) / (1 + r + 2 * nu * b) * vals.max()


def test_hinf_synthesis_small_kappa():
    g = RationalTransferFunction([0.5, -1], [1, 1])
    res = hinf_min_feedback_feedthrough(g, (0, -1))
    assert (res.b, res.c, res.cost) == pytest.approx((0, 1, 1.5), abs=1e-3)


def test_hinf_synthesis_large_kappa():
    g = RationalTransferFunction([2, -1], [1, 1])
    res = hinf_min_feedback_feedthrough(g, (0, -1))
    assert (res.b, res.c, res.cost) == pytest.approx((0.25, 4 / 3, 8 / 3), abs=1e-3)
    kappa = 2.0
    assert res.cost == pytest.approx(4 * kappa / (1 + kappa), abs=1e-3)


def test_hinf_synthesis_vanishing_kappa():
    kappa = 1e-4
    g = RationalTransferFunction([kappa, -1], [1, 1])
    res = hinf_min_feedback_feedthrough(g, (0, -1))
    assert res.cost == pytest.approx(1 + kappa, abs=1e-6)


def test_hinf_synthesis_rejects_nonnegative_nu():
    g = RationalTransferFunction([1], [1, 1])
    with pytest.raises(ValueError):
        hinf_min_feedback_feedthrough(g, (0, 0))
    with pytest.raises(ValueError):
        feedback_feedthrough_bounds((0.1, -1))


def test_feedback_feedthrough_matrix():
    np.testing.assert_array_equal(feedback_feedthrough_matrix(0.25, 4 / 3), [[1, 0.25], [4 / 3, 1 + 1 / 3]])


@pytest.mark.parametrize("kappa", [0.5, 2.0, 3.0])
def test_cost_consistency(kappa):
    g = RationalTransferFunction([kappa, -1], [1, 1])
    ind = (0.0, -1.0)
    res = hinf_min_feedback_feedthrough(g, ind)
    assert feedback_feedthrough_cost(g, ind, res.b) == pytest.approx(res.cost, abs=1e-9)
    w = frequency_grid(g)
    assert _closed_form_cost(g, ind, res.b, w) == pytest.approx(res.cost, rel=1e-6)
    rng = np.random.default_rng(2)
    lo, hi = feedback_feedthrough_bounds(ind)
    for b in rng.uniform(lo, hi, 100):
        assert res.cost <= feedback_feedthrough_cost(g, ind, b) + 1e-9


def test_cost_monotone_in_feedthrough():
    g = RationalTransferFunction([2, -1], [1, 1])
    res = hinf_min_feedback_feedthrough(g, (0, -1))
    costs = [hinf_norm(transform_tf(g, feedback_feedthrough_matrix(res.b, c)))
             for c in np.linspace(res.c, res.c + 5, 50)]
    assert all(b >= a - 1e-9 for a, b in zip(costs, costs[1:]))


def test_unstable_candidates_cost_infinity():
    # b at the top of the interval is excluded
    g = RationalTransferFunction([2, -1], [1, 1])
    lo, hi = feedback_feedthrough_bounds((0, -1))
    assert feedback_feedthrough_cost(g, (0, -1), hi) == math.inf
