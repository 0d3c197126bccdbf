import numpy as np
import pytest

from deepknot.baselines import nktp_knots, uniform_knots
from deepknot.network import ConfigError


def test_uniform():
    np.testing.assert_allclose(uniform_knots(4).interior, [0.2, 0.4, 0.6, 0.8])
    assert uniform_knots(0).n_basis == 4


def test_nktp_hand_example():
    # d = 11/4: (i, alpha) = (2, .75), (5, .5), (8, .25)
    s = np.linspace(0, 1, 11)
    kv = nktp_knots(s, 7, 3)
    np.testing.assert_allclose(kv.interior, [0.175, 0.45, 0.725], rtol=1e-12)
    assert kv.n_basis == 7


def test_nktp_uniform_data_is_nearly_uniform():
    s = np.linspace(0, 1, 1001)
    kv = nktp_knots(s, 5 + 4, 3)
    np.testing.assert_allclose(kv.interior, uniform_knots(5).interior, atol=2e-3)


def test_nktp_follows_parameter_density():
    s = np.concatenate([np.linspace(0, 0.5, 900, endpoint=False), np.linspace(0.5, 1, 101)])
    inner = nktp_knots(s, 9, 3).interior
    assert np.count_nonzero(inner < 0.5) == 5


def test_nktp_random_params_valid():
    rng = np.random.default_rng(0)
    for _ in range(50):
        s = np.sort(np.concatenate([[0, 1], rng.uniform(0, 1, 40)]))
        n_controls = int(rng.integers(4, 40))
        kv = nktp_knots(s, n_controls, 3)
        assert kv.n_basis == n_controls


@pytest.mark.parametrize("n_params,n_controls", [(5, 5), (10, 3), (10, 11)])
def test_nktp_rejects_bad_sizes(n_params, n_controls):
    with pytest.raises(ConfigError):
        nktp_knots(np.linspace(0, 1, n_params), n_controls, 3)


def test_nktp_rejects_unsorted():
    with pytest.raises(ConfigError):
        nktp_knots([0, 0.5, 0.2, 0.7, 0.8, 1.0], 5, 3)
