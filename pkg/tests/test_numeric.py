import numpy as np
import pytest

from passivize._numeric import golden_max, golden_min, is_invertible, is_psd, min_eig_symmetric, parse_number


@pytest.mark.parametrize("a, expected", [
    (np.diag([1.0, 2.0]), 1.0),
    (np.array([[0.0, 0.5], [0.5, 0.0]]), -0.5),
    (np.zeros((3, 3)), 0.0),
])
def test_min_eig_examples(a, expected):
    assert min_eig_symmetric(a) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 7, 16, 40])
def test_min_eig_matches_lapack(n):
    rng = np.random.default_rng(n)
    for _ in range(20):
        a = rng.standard_normal((n, n)) * 10.0 ** rng.uniform(-3, 3)
        a = a + a.T
        ref = np.linalg.eigvalsh(a)[0]
        assert abs(min_eig_symmetric(a) - ref) <= 1e-10 * max(np.linalg.norm(a, 2), 1e-300)


def test_min_eig_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        min_eig_symmetric(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_is_psd_boundary():
    assert is_psd(np.array([[1.0, 1.0], [1.0, 1.0]]))
    assert not is_psd(np.array([[1.0, 1.01], [1.01, 1.0]]))


def test_is_invertible_scale_free():
    m = np.array([[1.0, 2.0], [2.0, 4.0 + 1e-3]])
    assert is_invertible(m)
    assert is_invertible(1e-20 * m)
    assert not is_invertible(np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_golden_search():
    x, fx = golden_max(lambda t: -(t - 0.3) ** 2, -1.0, 2.0)
    assert x == pytest.approx(0.3, abs=1e-8)
    assert fx == pytest.approx(0.0, abs=1e-14)
    x, fx = golden_min(lambda t: abs(t - 1.0), 0.0, 1.0)
    assert x == pytest.approx(1.0, abs=1e-8)


def test_parse_number_fractions():
    assert parse_number("2/3") == 2 / 3
    assert parse_number("-5/4") == -1.25
    assert parse_number("0.6667") == 0.6667
