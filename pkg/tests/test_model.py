import json

import numpy as np
import pytest

from quadtrap.fixtures import build_fixture
from quadtrap.model import (
    ModelError,
    eval_quadratic,
    eval_rhs,
    load_system,
    make_system,
    save_system,
    shift,
    validate,
)


def test_lorenz_fixture_accepted():
    system = build_fixture("lorenz")
    assert system.n == 3
    # z-row quadratic: 2xy encoded as symmetric halves
    assert system.Q[2][0, 1] == pytest.approx(0.5)
    assert system.Q[2][1, 0] == pytest.approx(0.5)
    assert system.Q[1][0, 2] == pytest.approx(-0.5)


def test_dimension_mismatch_rejected():
    A = -np.eye(3)
    Q = np.zeros((2, 3, 3))  # only two quadratic forms for a 3-state system
    with pytest.raises(ModelError):
        make_system(A, Q, np.zeros(3))


def test_asymmetric_q_rejected():
    Q = np.zeros((2, 2, 2))
    Q[0, 0, 1] = 1e-3  # asymmetry far above the symmetrization tolerance
    with pytest.raises(ModelError):
        make_system(-np.eye(2), Q, np.zeros(2))


def test_tiny_asymmetry_symmetrized():
    Q = np.zeros((2, 2, 2))
    Q[0, 0, 1] = 1.0
    Q[0, 1, 0] = 1.0 + 1e-12
    system = make_system(-np.eye(2), Q, np.zeros(2))
    assert np.allclose(system.Q[0], system.Q[0].T)


def test_eval_quadratic_lorenz():
    system = build_fixture("lorenz")
    np.testing.assert_allclose(eval_quadratic(system, [1.0, 1.0, 1.0]), [0.0, -1.0, 1.0], atol=1e-14)


def test_eval_quadratic_origin_zero():
    system = build_fixture("mls")
    np.testing.assert_allclose(eval_quadratic(system, np.zeros(4)), np.zeros(4))


def test_eval_quadratic_academic():
    system = build_fixture("academic2d")
    np.testing.assert_allclose(eval_quadratic(system, [1.0, 2.0]), [-2.0, 1.0], atol=1e-14)


def test_eval_rhs_equilibrium_academic():
    system = build_fixture("academic2d")
    np.testing.assert_allclose(eval_rhs(system, [0.0, 0.25]), [0.0, 0.0], atol=1e-14)


def test_eval_rhs_linear_case():
    system = make_system(-np.eye(2), np.zeros((2, 2, 2)), np.zeros(2))
    np.testing.assert_allclose(eval_rhs(system, [1.0, 1.0]), [-1.0, -1.0])


def test_eval_rhs_lorenz_point():
    system = build_fixture("lorenz")
    np.testing.assert_allclose(eval_rhs(system, [1.0, 1.0, 1.0]), [0.0, 26.0, -5.0 / 3.0], atol=1e-12)


def test_zero_shift_identity():
    system = build_fixture("mls")
    sh = shift(system, np.zeros(4))
    np.testing.assert_allclose(sh.L, system.A)
    np.testing.assert_allclose(sh.c, system.d)


def test_shift_academic_equilibrium():
    system = build_fixture("academic2d")
    sh = shift(system, [0.0, 0.25])
    np.testing.assert_allclose(sh.L, np.diag([-1.25, -4.0]), atol=1e-14)
    np.testing.assert_allclose(sh.c, [0.0, 0.0], atol=1e-14)


def test_shift_mls_row():
    system = build_fixture("mls")
    sh = shift(system, [0.0, 0.0, 25.22, 0.0])
    np.testing.assert_allclose(sh.L[1], [0.78, -1.0, 0.0, 0.0], atol=1e-12)


def test_shift_consistency_random():
    # eval_rhs(x) must equal L(m)(x-m) + Q(x-m) + c(m) for any m
    rng = np.random.default_rng(3)
    for name in ("lorenz", "mls", "academic2d"):
        system = build_fixture(name)
        for _ in range(20):
            x = rng.standard_normal(system.n) * 10
            m = rng.standard_normal(system.n) * 5
            sh = shift(system, m)
            y = x - m
            lhs = eval_rhs(system, x)
            rhs = sh.L @ y + eval_quadratic(system, y) + sh.c
            np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


def test_shift_linear_part_is_jacobian():
    system = build_fixture("mls")
    rng = np.random.default_rng(5)
    m = rng.standard_normal(4)
    sh = shift(system, m)
    h = 1e-6
    jac = np.zeros((4, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        jac[:, j] = (eval_rhs(system, m + e) - eval_rhs(system, m - e)) / (2 * h)
    np.testing.assert_allclose(sh.L, jac, rtol=1e-6, atol=1e-6)


def test_quadratic_homogeneity():
    system = build_fixture("lorenz")
    rng = np.random.default_rng(9)
    for _ in range(10):
        x = rng.standard_normal(3)
        t = float(rng.uniform(0.1, 4.0))
        np.testing.assert_allclose(
            eval_quadratic(system, t * x), t**2 * eval_quadratic(system, x), rtol=1e-12
        )


def test_batched_evaluation_matches_loop():
    system = build_fixture("mls")
    rng = np.random.default_rng(11)
    X = rng.standard_normal((7, 4))
    batched = eval_rhs(system, X)
    row_by_row = np.stack([eval_rhs(system, x) for x in X])
    np.testing.assert_allclose(batched, row_by_row, rtol=1e-13)


def test_system_json_round_trip(tmp_path):
    system = build_fixture("mls")
    path = tmp_path / "mls.json"
    save_system(system, path)
    loaded = load_system(path)
    assert loaded.n == system.n
    np.testing.assert_allclose(loaded.A, system.A)
    np.testing.assert_allclose(loaded.Q, system.Q)
    np.testing.assert_allclose(loaded.d, system.d)
    # file structure is the declared row-major JSON schema
    raw = json.loads(path.read_text())
    assert set(raw) == {"n", "A", "Q", "d"}


def test_non_finite_rejected():
    A = -np.eye(2)
    A[0, 0] = np.nan
    with pytest.raises(ModelError):
        make_system(A, np.zeros((2, 2, 2)), np.zeros(2))


def test_validate_returns_symmetrized_copy():
    system = build_fixture("academic2d")
    again = validate(system)
    assert again.n == 2
    np.testing.assert_allclose(again.Q, system.Q)
