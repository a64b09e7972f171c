import json
import math

import numpy as np
import pytest

import fedlora


def test_singular_extremes_diag():
    smax, smin, kappa = fedlora.singular_extremes(np.diag([2.0, 0.5]))
    assert smax == pytest.approx(2.0)
    assert smin == pytest.approx(0.5)
    assert kappa == pytest.approx(4.0)


def test_singular_values_match_numpy():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((7, 4))
    assert np.allclose(fedlora.singular_values(a), np.linalg.svd(a, compute_uv=False), atol=1e-12)


def test_orthonormal_rows():
    a = fedlora.orthonormal_rows(4, 16, 0.1, seed=3)
    assert a.shape == (4, 16)
    assert np.allclose(a @ a.T, 0.01 * np.eye(4), atol=1e-12)


def test_fixed_a_noise_term_matches_numpy():
    rng = np.random.default_rng(1)
    a = fedlora.orthonormal_rows(2, 6, 0.1, seed=1)
    n = rng.standard_normal(5)
    u = rng.standard_normal(6)
    eta = 0.3
    expected = -eta * np.outer(n, u) @ a.T @ a
    assert np.allclose(fedlora.noise_in_delta_w_fixed_a(a, n, u, eta), expected, atol=1e-14)
    energy = fedlora.noise_energy_fixed_a(a, u, 5.0, eta)
    assert energy == pytest.approx(eta**2 * 5.0 * np.sum((a.T @ a @ u) ** 2))


def test_both_factor_noise_term_matches_numpy():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((2, 6))
    b = rng.standard_normal((5, 2))
    g, n, u = rng.standard_normal(5), rng.standard_normal(5), rng.standard_normal(6)
    eta = 0.1

    def delta(grad):
        a2 = a - eta * b.T @ np.outer(grad, u)
        b2 = b - eta * np.outer(grad, u) @ a.T
        return b2 @ a2 - b @ a

    got = fedlora.noise_in_delta_w_both(a, b, g, n, u, eta)
    assert np.allclose(got, delta(g + n) - delta(g), atol=1e-12)


def test_privacy_helpers():
    assert fedlora.snr(3.0, 2.0, 9, 1.0) == pytest.approx(4.0)
    assert np.allclose(fedlora.clip_gradient(np.array([3.0, 4.0]), 1.0), [0.6, 0.8])
    eps = fedlora.epsilon_from_snr(1.0, 1.0, 1, math.exp(-1.0), 1.0, 1)
    assert eps == pytest.approx(1.0)
    dec = fedlora.power_control_alpha(10.0, math.exp(-1.0), 1.0, 1, 1.0, 1.0, 4.0)
    assert dec["binding"] == "power"
    assert dec["alpha"] == pytest.approx(2.0)


def test_generate_shapes():
    x_train, y_train, x_test, y_test = fedlora.generate(0, 400, 8, 4, 3.0)
    assert x_train.shape == (320, 8)
    assert x_test.shape == (80, 8)
    assert sorted(set(y_train)) == [0, 1, 2, 3]
    assert len(y_test) == 80


def test_config_errors():
    with pytest.raises(ValueError, match="delta must lie in"):
        fedlora.validate_config('{"delta": 1.5}')
    canonical = json.loads(fedlora.validate_config("{}"))
    assert canonical["devices"] == 15


def test_run_cell_is_deterministic_and_private():
    cfg = json.dumps(
        {"devices": 2, "rounds": 3, "input_dim": 4, "width": 8, "rank": 2, "classes": 3,
         "samples": 120, "fraction": 0.2, "epsilons": [5.0]}
    )
    a = fedlora.run_cell(cfg, "fixed_orthonormal_a", 5.0, seed=4)
    b = fedlora.run_cell(cfg, "fixed_orthonormal_a", 5.0, seed=4)
    assert a == b
    assert len(a) == 3
    assert all(r["realized_epsilon_max"] <= 5.0 * (1 + 1e-9) for r in a)
    with pytest.raises(ValueError):
        fedlora.run_cell(cfg, "lora", 5.0)


def test_bad_shapes_raise():
    with pytest.raises(ValueError):
        fedlora.singular_extremes(np.zeros(3))
