import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmmdesign import stimulus

params = st.tuples(st.floats(0, np.pi), st.floats(0, 6.28), st.floats(0, 6.28),
                   st.floats(0, np.pi), st.floats(0, 6.28), st.floats(0, 6.28)).map(np.array)


@pytest.mark.parametrize("slot, value, name", [(0, -0.1, "amp1"), (3, 4.0, "amp2"), (1, 2 * np.pi, "shift_x1"),
                                               (5, np.nan, "shift_y2")])
def test_validation_names_the_variable(slot, value, name):
    p = np.ones(6)
    p[slot] = value
    with pytest.raises(ValueError, match=name):
        stimulus.validate_params(p)


def test_project_clamps_amplitudes_and_wraps_shifts():
    p = stimulus.project([4.0, -0.5, 7.0, -1.0, 2 * np.pi, 1.0])
    np.testing.assert_allclose(p, [np.pi, 2 * np.pi - 0.5, 7.0 - 2 * np.pi, 0.0, 0.0, 1.0])
    stimulus.validate_params(p)


def test_phase_field_is_zero_for_zero_amplitudes():
    assert not np.any(stimulus.phase_field([0, 1, 2, 0, 3, 4], 12))


def test_phase_field_orientation_and_bounds():
    p = np.array([1.0, 0.3, 1.1, 0.5, 2.0, 0.7])
    f = stimulus.phase_field(p, 30)
    c = stimulus.pixel_centers(30)
    assert f[4, 9] == pytest.approx(stimulus.phase_at(p, c[9], c[4]))
    assert np.abs(f).max() <= p[0] + p[3] + 1e-12


@settings(max_examples=40, deadline=None)
@given(params)
def test_shift_periodicity(p):
    q = p.copy()
    q[[1, 2, 4, 5]] = np.mod(q[[1, 2, 4, 5]] + 2 * np.pi, 2 * np.pi)
    x = np.linspace(0, 3, 7)
    a = stimulus.phase_at(p, x[:, None], x[None, :], check=False)
    b = stimulus.phase_at(q, x[:, None], x[None, :], check=False)
    np.testing.assert_allclose(a, b, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(params)
def test_jacobian_matches_central_differences(p):
    jac = stimulus.phase_jacobian(p, 9)
    h = 1e-6
    for i in range(6):
        d = np.zeros(6)
        d[i] = h
        fd = (stimulus.phase_field(p + d, 9, check=False) - stimulus.phase_field(p - d, 9, check=False)) / (2 * h)
        np.testing.assert_allclose(jac[i], fd, atol=1e-7)


def test_random_params_are_valid():
    rng = np.random.default_rng(0)
    for _ in range(200):
        stimulus.validate_params(stimulus.random_params(rng))
