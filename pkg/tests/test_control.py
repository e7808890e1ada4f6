import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gloloc.control import (
    BasisSpec,
    SampledControl,
    TransferFunction,
    apply_transfer,
    gaussian_transfer,
    regularization_cost,
    regularization_gradient,
    shape_function,
    synthesize,
    time_grid,
    transfer_adjoint,
)

finite = st.floats(-3, 3, allow_nan=False)


def ref(T=1.0, n=201, u0=0.0, uT=0.0):
    t, dt = time_grid(T, T / (n - 1))
    return SampledControl(u0 + (uT - u0) * t / T, dt)


def test_basis_rejects_bad_shifts():
    with pytest.raises(ValueError):
        BasisSpec(np.array([0.6]), 1.0)
    with pytest.raises(ValueError):
        BasisSpec(np.array([]), 1.0)


def test_time_grid_hits_endpoint():
    t, dt = time_grid(1.0, 0.03)
    assert t[-1] == 1.0
    assert dt <= 0.03
    assert np.allclose(np.diff(t), dt)


def test_shape_function_values():
    assert shape_function(0.0, 2.0) == 0.0
    assert shape_function(2.0, 2.0) == 0.0
    assert shape_function(1.0, 2.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        shape_function(2.5, 2.0)
    with pytest.raises(ValueError):
        shape_function(-0.1, 2.0)


def test_zero_coefficients_give_reference():
    r = ref(u0=0.2, uT=0.9)
    u = synthesize(np.zeros(4), BasisSpec(np.zeros(4), 1.0), r)
    np.testing.assert_array_equal(u.u, r.u)


def test_single_mode_closed_form():
    r = ref()
    u = synthesize(np.array([1.0]), BasisSpec(np.zeros(1), 1.0), r)
    t = r.times
    np.testing.assert_allclose(u.u, np.sin(np.pi * t) ** 2, atol=1e-15)
    assert u.u[100] == pytest.approx(1.0)


@given(c=arrays(float, 5, elements=finite), r=arrays(float, 5, elements=st.floats(-0.5, 0.5)))
@settings(max_examples=50, deadline=None)
def test_endpoints_pinned(c, r):
    reference = ref(u0=0.0, uT=1.0)
    u = synthesize(c, BasisSpec(r, 1.0), reference, bounds=(0.0, 1.0))
    assert u.u[0] == 0.0 and u.u[-1] == 1.0
    assert np.all((u.u >= 0.0) & (u.u <= 1.0))


@given(
    c1=arrays(float, 4, elements=st.floats(-0.1, 0.1)),
    c2=arrays(float, 4, elements=st.floats(-0.1, 0.1)),
    a=st.floats(-2, 2),
    b=st.floats(-2, 2),
)
@settings(max_examples=50, deadline=None)
def test_synthesis_affine_in_coefficients(c1, c2, a, b):
    basis = BasisSpec(np.array([0.1, -0.2, 0.3, 0.0]), 1.0)
    r = ref(u0=0.5, uT=0.5)
    lhs = synthesize(a * c1 + b * c2, basis, r).u
    rhs = a * synthesize(c1, basis, r).u + b * synthesize(c2, basis, r).u - (a + b - 1) * r.u
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_regularization_values():
    gamma = 1e-6
    assert regularization_cost(SampledControl(np.full(50, 0.3), 0.1), gamma) == 0.0
    ramp = ref(T=2.0, u0=0.1, uT=0.7)
    assert regularization_cost(ramp, gamma) == pytest.approx(0.5 * gamma * 0.36 / 2.0, rel=1e-12)
    t, dt = time_grid(1.0, 1e-4)
    s = SampledControl(np.sin(2 * np.pi * t), dt)
    assert regularization_cost(s, gamma) == pytest.approx(0.5 * gamma * 2 * np.pi**2, rel=1e-6)


@given(u=arrays(float, 30, elements=finite))
@settings(max_examples=50, deadline=None)
def test_regularization_nonnegative(u):
    cost = regularization_cost(SampledControl(u, 0.05), 1.0)
    assert cost >= 0.0
    if np.ptp(u) > 1e-6:
        assert cost > 0.0


def test_regularization_gradient_matches_fd():
    rng = np.random.default_rng(0)
    u = SampledControl(rng.normal(size=40), 0.05)
    g = regularization_gradient(u, 0.7)
    h = 1e-6
    fd = np.empty(40)
    for j in range(40):
        up, dn = u.u.copy(), u.u.copy()
        up[j] += h
        dn[j] -= h
        fd[j] = (regularization_cost(SampledControl(up, 0.05), 0.7) - regularization_cost(SampledControl(dn, 0.05), 0.7)) / (2 * h)
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-8)


def test_transfer_kernel_normalized_and_symmetric():
    tf = gaussian_transfer(bandwidth=2.0, dt=0.01)
    assert tf.kernel.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(tf.kernel, tf.kernel[::-1])
    with pytest.raises(ValueError):
        TransferFunction(np.ones(4))


def test_gaussian_transfer_minus_3db():
    bw, dt = 2.0, 0.001
    tf = gaussian_transfer(bw, dt)
    j = np.arange(-tf.half_width, tf.half_width + 1)
    response = np.sum(tf.kernel * np.cos(2 * np.pi * bw * j * dt))
    # truncation at +-3 sigma and renormalization move the response by < 1%
    assert response == pytest.approx(1 / np.sqrt(2), rel=1e-2)


def test_transfer_identity_and_constant():
    u = SampledControl(np.linspace(0, 1, 50) ** 2, 0.1)
    np.testing.assert_array_equal(apply_transfer(u, TransferFunction(np.ones(1))).u, u.u)
    c = SampledControl(np.full(50, 0.4), 0.1)
    np.testing.assert_allclose(apply_transfer(c, gaussian_transfer(0.5, 0.1)).u, 0.4, rtol=1e-14)


def test_transfer_step_response():
    kernel = np.array([1.0, 2.0, 3.0, 2.0, 1.0])
    tf = TransferFunction(kernel)
    u = np.r_[np.zeros(10), np.ones(10)]
    v = apply_transfer(SampledControl(u, 1.0), tf).u
    w = kernel / kernel.sum()
    expected = np.empty_like(u)
    for j in range(len(u)):
        acc = 0.0
        for m in range(-2, 3):
            acc += w[m + 2] * u[min(max(j - m, 0), len(u) - 1)]
        expected[j] = acc
    np.testing.assert_allclose(v, expected, atol=1e-15)
    # rising edge traces the cumulative kernel
    np.testing.assert_allclose(v[8:12], np.cumsum(w)[:4], atol=1e-15)


@given(seed=st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_transfer_adjoint_identity(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(12, 80))
    tf = TransferFunction(rng.uniform(0.1, 1.0, 2 * int(rng.integers(1, 5)) + 1))
    if tf.kernel.size >= n:
        return
    u, g = rng.normal(size=n), rng.normal(size=n)
    lhs = np.dot(apply_transfer(SampledControl(u, 1.0), tf).u, g)
    rhs = np.dot(u, transfer_adjoint(g, tf))
    assert lhs == pytest.approx(rhs, abs=1e-12 * max(1.0, abs(lhs)))


def test_transfer_adjoint_fd_chain_rule():
    rng = np.random.default_rng(3)
    tf = gaussian_transfer(1.0, 0.05)
    u0 = rng.normal(size=60)
    w = rng.normal(size=60)

    def J(u):
        return float(np.sum(w * np.sin(apply_transfer(SampledControl(u, 0.05), tf).u)))

    v = apply_transfer(SampledControl(u0, 0.05), tf).u
    grad = transfer_adjoint(w * np.cos(v), tf)
    h = 1e-6
    fd = np.array([(J(u0 + h * e) - J(u0 - h * e)) / (2 * h) for e in np.eye(60)])
    np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-9)


def test_transfer_identity_adjoint():
    g = np.arange(10.0)
    np.testing.assert_array_equal(transfer_adjoint(g, TransferFunction(np.ones(1))), g)


@given(u=arrays(float, 40, elements=finite))
@settings(max_examples=50, deadline=None)
def test_transfer_range_and_pinning(u):
    v = apply_transfer(SampledControl(u, 0.1), gaussian_transfer(0.4, 0.1)).u
    assert v[0] == u[0] and v[-1] == u[-1]
    assert np.all(v >= u.min() - 1e-12) and np.all(v <= u.max() + 1e-12)
