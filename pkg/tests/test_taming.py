"""Taming function branches, derivatives, primitive and pointwise action."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from tamed_mhd import TamingFunction

thresholds = st.floats(min_value=0.0, max_value=50.0, allow_nan=False)
radii = st.floats(min_value=0.0, max_value=200.0, allow_nan=False)


def _piecewise(n: float, r: float) -> float:
    """Reference definition: zero, Hermite ramp, linear branch."""
    if r <= n:
        return 0.0
    s = r - n
    if s < 1.0:
        return 2 * s**3 - s**4
    return 2.0 * (r - n - 0.5)


class TestValue:
    def test_zero_below_threshold(self):
        assert TamingFunction(1.0).value(0.5) == 0.0
        assert TamingFunction(1.0).value(1.0) == 0.0

    def test_linear_branch(self):
        tf = TamingFunction(1.0)
        assert tf.value(2.0) == pytest.approx(1.0)
        for h in (1e-3, 0.5, 10.0):
            assert (tf.value(2.0 + h) - tf.value(2.0)) / h == pytest.approx(2.0)

    def test_ramp_matches_at_both_ends(self):
        tf = TamingFunction(3.0)
        assert tf.value(4.0) == pytest.approx(1.0)
        assert tf.derivative(4.0) == pytest.approx(2.0)
        assert tf.second_derivative(4.0) == pytest.approx(0.0)
        assert tf.derivative(3.0) == 0.0
        assert tf.second_derivative(3.0) == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            TamingFunction(-1.0)
        with pytest.raises(ValueError):
            TamingFunction(float("nan"))
        with pytest.raises(ValueError):
            TamingFunction(1.0).value(-0.1)

    @settings(max_examples=1000, deadline=None)
    @given(thresholds, radii)
    def test_branch_consistency(self, n, r):
        assert TamingFunction(n).value(r) == pytest.approx(_piecewise(n, r), rel=1e-12, abs=1e-14)

    @settings(max_examples=200, deadline=None)
    @given(thresholds, radii)
    def test_lower_bound(self, n, r):
        assert TamingFunction(n).value(r) >= 2.0 * (r - n - 0.5) - 1e-12

    def test_monotone_on_dense_samples(self):
        for n in (0.0, 1.0, 7.5):
            r = np.linspace(0.0, 10.0 * max(n, 1.0), 20001)
            assert np.all(np.diff(TamingFunction(n).value(r)) >= 0.0)

    def test_vectorised(self):
        tf = TamingFunction(1.0)
        r = np.array([[0.0, 1.5], [2.0, 5.0]])
        assert tf.value(r).shape == (2, 2)


class TestDerivative:
    def test_branches(self):
        tf = TamingFunction(1.0)
        assert tf.derivative(0.5) == 0.0
        assert tf.derivative(3.0) == 2.0

    def test_finite_difference_in_ramp(self):
        tf = TamingFunction(1.0)
        h = 1e-6
        fd = (tf.value(1.5 + h) - tf.value(1.5 - h)) / (2 * h)
        assert 0.0 < tf.value(1.5) < 2.0
        assert tf.derivative(1.5) == pytest.approx(fd, abs=1e-8)

    @pytest.mark.parametrize("n", [0.5, 1.0, 4.0])
    def test_matches_finite_differences_on_range(self, n):
        tf = TamingFunction(n)
        r = np.linspace(1e-3, 10.0 * n, 4001)
        h = 1e-6
        fd = (tf.value(r + h) - tf.value(np.maximum(r - h, 0.0))) / (r + h - np.maximum(r - h, 0.0))
        d = tf.derivative(r)
        assert np.max(np.abs(d - fd) / np.maximum(np.abs(d), 1.0)) < 1e-6

    def test_derivative_bounded_by_two(self):
        r = np.linspace(0.0, 20.0, 10001)
        d = TamingFunction(2.0).derivative(r)
        assert np.all(d >= 0.0) and np.all(d <= 2.0)


class TestPrimitive:
    def test_zero_up_to_threshold(self):
        assert TamingFunction(1.0).primitive(1.0) == 0.0

    @pytest.mark.parametrize("r", [1.3, 2.0, 5.0, 40.0])
    def test_against_quadrature(self, r):
        tf = TamingFunction(1.0)
        ref, _ = integrate.quad(lambda s: float(tf.value(s)), 0.0, r, points=[1.0, 2.0], epsabs=1e-13, epsrel=1e-13)
        assert tf.primitive(r) == pytest.approx(ref, rel=1e-10, abs=1e-12)

    def test_large_r_asymptotics(self):
        tf = TamingFunction(1.0)
        r = np.array([10.0, 100.0, 1000.0])
        assert np.allclose(tf.primitive(r) - (r - 1.5) ** 2, 0.05, rtol=0, atol=1e-9)

    def test_derivative_is_value(self):
        tf = TamingFunction(2.0)
        r = np.linspace(0.01, 20.0, 2001)
        h = 1e-6
        fd = (tf.primitive(r + h) - tf.primitive(r - h)) / (2 * h)
        assert np.max(np.abs(fd - tf.value(r))) < 1e-6

    @settings(max_examples=300, deadline=None)
    @given(thresholds, radii)
    def test_bounded_by_r_squared(self, n, r):
        assert TamingFunction(n).primitive(r) <= r * r + 1e-12


class TestApply:
    def test_below_threshold_is_zero(self):
        rng = np.random.default_rng(0)
        y = rng.uniform(-0.3, 0.3, size=(6, 4, 4, 4))
        out = TamingFunction(1.0).apply(y)
        assert not np.any(out)
        assert not TamingFunction(1.0).is_active(y)

    def test_constant_state_on_linear_branch(self):
        n = 1.0
        a = np.sqrt(n + 2.0)
        y = np.zeros((6, 4, 4, 4))
        y[0] = a
        out = TamingFunction(n).apply(y)
        assert np.allclose(out[0], 3.0 * a)
        assert not np.any(out[1:])

    def test_nonlinear_scaling(self):
        rng = np.random.default_rng(5)
        y = rng.standard_normal((6, 4, 4, 4))
        tf = TamingFunction(1.0)
        twice = tf.apply(2.0 * y)
        oracle = np.array([_piecewise(1.0, r) for r in np.sum((2 * y) ** 2, axis=0).ravel()]).reshape(4, 4, 4) * 2 * y
        assert np.allclose(twice, oracle, rtol=1e-12, atol=1e-14)
        assert not np.allclose(twice, 4.0 * tf.apply(y))
