import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import lstsq as sp_lstsq, null_space

from conftest import F_STAR, LAMBDA_STAR, X_STAR
from tikhonov_flow.errors import (
    DimensionMismatch, InfeasibleConstraints, KktInconsistent, NotPSD,
)
from tikhonov_flow.problem import (
    build_instance, build_paper_problem, build_quadratic, dump_instance, gradient_check,
    load_instance, random_quadratic, resolve_instance, solve_min_norm_kkt,
)


def test_paper_oracle_matches_hand_solution(paper):
    o = paper.oracle
    np.testing.assert_allclose(o.min_norm_primal, X_STAR, atol=1e-15)
    np.testing.assert_allclose(o.min_norm_dual, LAMBDA_STAR, atol=1e-15)
    assert o.optimal_value == F_STAR
    stat, feas = paper.kkt_residual(X_STAR, LAMBDA_STAR)
    assert stat == 0.0 and feas == 0.0


def test_min_norm_kkt_solver_reproduces_paper_oracle(paper):
    o = solve_min_norm_kkt(paper)
    np.testing.assert_allclose(o.min_norm_primal, X_STAR, atol=1e-12)
    np.testing.assert_allclose(o.min_norm_dual, LAMBDA_STAR, atol=1e-12)
    assert abs(o.optimal_value - F_STAR) < 1e-12


def test_paper_objective_and_quadratic_agree(paper):
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = rng.standard_normal(3)
        assert abs(paper.objective(x) - paper.quadratic(x)) < 1e-12
        np.testing.assert_allclose(paper.gradient(x), paper.quadratic.gradient(x), atol=1e-12)
    assert gradient_check(paper) < 1e-7


def _null_space_oracle(inst):
    """Minimum-norm KKT point via an explicit parametrization of the solution set."""
    Q, q = inst.quadratic.Q, inst.quadratic.linear_term
    A, b = inst.A, inst.b
    n, m = inst.dim_primal, inst.dim_dual
    K = np.block([[Q, A.T], [A, np.zeros((m, m))]])
    rhs = np.concatenate([-q, b])
    z0 = sp_lstsq(K, rhs, lapack_driver="gelsy")[0]
    N = null_space(K)
    # project z0 onto the orthogonal complement of the null space
    z = z0 - N @ (N.T @ z0)
    return z[:n], z[n:]


@pytest.mark.parametrize("seed", [0, 1, 2, 7])
def test_min_norm_kkt_against_null_space_oracle(seed):
    inst = random_quadratic(seed, n=6, m=2, rank=3)
    x_ref, l_ref = _null_space_oracle(inst)
    np.testing.assert_allclose(inst.oracle.min_norm_primal, x_ref, atol=1e-9)
    np.testing.assert_allclose(inst.oracle.min_norm_dual, l_ref, atol=1e-9)
    stat, feas = inst.kkt_residual(inst.oracle.min_norm_primal, inst.oracle.min_norm_dual)
    assert stat < 1e-9 and feas < 1e-9


def test_min_norm_is_smaller_than_other_solutions():
    inst = random_quadratic(5, n=6, m=2, rank=3)
    K = np.block([[inst.quadratic.Q, inst.A.T], [inst.A, np.zeros((2, 2))]])
    N = null_space(K)
    assert N.shape[1] > 0
    z = np.concatenate([inst.oracle.min_norm_primal, inst.oracle.min_norm_dual])
    for k in range(N.shape[1]):
        assert np.linalg.norm(z + 0.3 * N[:, k]) > np.linalg.norm(z)


def test_unconstrained_quadratic_has_empty_dual():
    inst = build_quadratic(np.diag([2.0, 0.0]), [-2.0, 0.0], 0.0, [], [])
    o = solve_min_norm_kkt(inst)
    assert inst.dim_dual == 0
    np.testing.assert_allclose(o.min_norm_primal, [1.0, 0.0], atol=1e-12)


def test_validation_errors():
    with pytest.raises(NotPSD):
        build_quadratic(np.diag([1.0, -1.0]), [0.0, 0.0], 0.0, [[1.0, 1.0]], [1.0])
    with pytest.raises(NotPSD):
        build_quadratic(np.array([[1.0, 2.0], [0.0, 1.0]]), [0.0, 0.0], 0.0, [[1.0, 1.0]], [1.0])
    with pytest.raises(DimensionMismatch):
        build_quadratic(np.eye(2), [0.0, 0.0], 0.0, [[1.0, 1.0, 1.0]], [1.0])
    with pytest.raises(InfeasibleConstraints):
        build_quadratic(np.eye(2), [0.0, 0.0], 0.0, [[1.0, 1.0], [1.0, 1.0]], [1.0, 2.0])


def test_unbounded_kkt_is_inconsistent():
    # f linear along a feasible direction: no KKT point
    inst = build_quadratic(np.zeros((2, 2)), [1.0, 0.0], 0.0, [[0.0, 1.0]], [1.0])
    with pytest.raises(KktInconsistent):
        solve_min_norm_kkt(inst)


def test_build_instance_rejects_wrong_gradient():
    with pytest.raises(ValueError):
        build_instance(lambda x: float(x @ x), lambda x: x, [[1.0, 1.0]], [1.0])


def test_instance_file_round_trip(tmp_path, paper):
    path = tmp_path / "paper.json"
    dump_instance(paper, path)
    back = load_instance(path)
    np.testing.assert_array_equal(back.A, paper.A)
    np.testing.assert_array_equal(back.oracle.min_norm_primal, paper.oracle.min_norm_primal)
    assert resolve_instance(str(path)).dim_primal == 3
    doc = json.loads(path.read_text())
    doc["surprise"] = 1
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="surprise"):
        load_instance(path)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_paper_objective_is_convex_along_chords(a, b, c):
    inst = build_paper_problem()
    x = np.array([a, b, c])
    y = x[::-1] + 1.0
    fx, fy = inst.objective(x), inst.objective(y)
    fm = inst.objective(0.5 * (x + y))
    assert fm <= 0.5 * (fx + fy) + 1e-9 * (1 + abs(fx) + abs(fy))
