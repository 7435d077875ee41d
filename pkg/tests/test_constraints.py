import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from localprop.constraints import IDENTITY, ConstraintKind, kink_distance

eps_kind = st.sampled_from(["eps_abs", "eps_lin"])
reals = st.floats(-10, 10, allow_nan=False)
eps_vals = st.floats(0, 2, allow_nan=False)


@pytest.mark.parametrize("kind, eps, a, value", [
    ("eps_abs", 0.2, 0.5, 0.3),
    ("eps_abs", 0.2, -0.1, 0.0),
    ("eps_lin", 0.2, -0.5, -0.3),
    ("eps_lin", 0.2, 0.1, 0.0),
    ("identity", 0.0, -1.75, -1.75),
])
def test_value_examples(kind, eps, a, value):
    assert ConstraintKind(kind, eps).value(np.array([a]))[0] == pytest.approx(value, abs=1e-15)


@pytest.mark.parametrize("kind, a, d", [("eps_abs", 0.5, 1.0), ("eps_abs", -0.5, -1.0),
                                        ("eps_lin", 0.0, 0.0), ("eps_lin", -0.7, 1.0),
                                        ("identity", 3.0, 1.0)])
def test_derivative_examples(kind, a, d):
    eps = 0.0 if kind == "identity" else 0.2
    assert ConstraintKind(kind, eps).derivative(np.array([a]))[0] == d


def test_validation():
    with pytest.raises(ValueError):
        ConstraintKind("hinge", 0.1)
    with pytest.raises(ValueError):
        ConstraintKind("eps_abs", -0.1)
    assert not IDENTITY.has_dead_zone
    assert ConstraintKind("eps_lin", 0.1).has_dead_zone


@settings(max_examples=200, deadline=None)
@given(eps_kind, eps_vals, reals, reals)
def test_one_lipschitz(kind, eps, a, b):
    g = ConstraintKind(kind, eps)
    va, vb = g.value(np.array([a, b]))
    assert abs(va - vb) <= abs(a - b) + 1e-12


@settings(max_examples=200, deadline=None)
@given(eps_kind, eps_vals, reals)
def test_dead_zone_is_exact(kind, eps, a):
    g = ConstraintKind(kind, eps)
    if abs(a) <= eps:
        assert g.value(np.array([a]))[0] == 0.0
        assert g.derivative(np.array([a]))[0] == 0.0


@settings(max_examples=200, deadline=None)
@given(reals)
def test_zero_epsilon_matches_identity_for_eps_lin(a):
    assert ConstraintKind("eps_lin", 0.0).value(np.array([a]))[0] == a
    assert ConstraintKind("eps_abs", 0.0).value(np.array([a]))[0] == abs(a)


def test_eps_abs_residuals_non_negative(rng):
    a = rng.normal(size=1000)
    assert np.all(ConstraintKind("eps_abs", 0.3).value(a) >= 0.0)


@settings(max_examples=100, deadline=None)
@given(eps_kind, st.floats(0.05, 1.0), reals)
def test_derivative_matches_central_difference(kind, eps, a):
    g = ConstraintKind(kind, eps)
    h = 1e-6
    if kink_distance(g, np.array([a]))[0] < 10 * h:
        return
    num = (g.value(np.array([a + h]))[0] - g.value(np.array([a - h]))[0]) / (2 * h)
    assert g.derivative(np.array([a]))[0] == pytest.approx(num, abs=1e-6)


def test_kink_distance():
    g = ConstraintKind("eps_abs", 0.2)
    assert kink_distance(g, np.array([0.25, -0.2]))[0] == pytest.approx(0.05)
    assert kink_distance(g, np.array([0.25, -0.2]))[1] == pytest.approx(0.0)
    assert np.all(np.isinf(kink_distance(IDENTITY, np.array([0.0, 1.0]))))
