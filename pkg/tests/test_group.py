import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from carnot.errors import InputError, SpecError
from carnot.group import (CarnotGroup, check_group_laws, dilate, distance, engel, euclidean, euclidean_norm,
                          gauge_kernel, gauge_norm, heisenberg, inverse, kernel_hessian, load_group, multiply,
                          pairwise_kernel, pairwise_quotient, right_jacobian)

GROUPS = ["euclidean:2", "heisenberg:1", "heisenberg:2", "engel"]
coords = st.floats(-3, 3, allow_nan=False)


def points(n):
    return arrays(float, n, elements=coords)


def test_heisenberg_product():
    G = heisenberg(1)
    np.testing.assert_array_equal(multiply(G, [1, 0, 0], [0, 1, 0]), [1, 1, 0.5])


def test_euclidean_product_and_inverse():
    G = euclidean(2)
    np.testing.assert_array_equal(multiply(G, [1, 2], [3, 4]), [4, 6])
    np.testing.assert_array_equal(inverse(G, [3, 4]), [-3, -4])


@pytest.mark.parametrize("name", GROUPS)
def test_identity_is_neutral(name):
    G = load_group(name)
    p = np.random.default_rng(1).normal(size=G.n)
    np.testing.assert_array_equal(multiply(G, p, G.identity()), p)
    np.testing.assert_array_equal(multiply(G, G.identity(), p), p)


@pytest.mark.parametrize("name", GROUPS)
def test_product_matches_matrix_oracle(name):
    G = load_group(name)
    rng = np.random.default_rng(2)
    for _ in range(50):
        p, q = rng.normal(size=(2, G.n)) * 2
        np.testing.assert_allclose(multiply(G, p, q), oracles.matrix_product(name, p, q), rtol=0, atol=1e-12)


def test_inverse_examples():
    G = heisenberg(1)
    np.testing.assert_array_equal(inverse(G, [1, 1, 0.5]), [-1, -1, -0.5])
    np.testing.assert_array_equal(inverse(G, G.identity()), G.identity())


def test_dilation_examples():
    G = heisenberg(1)
    np.testing.assert_array_equal(dilate(G, 2, [1, 1, 1]), [2, 2, 4])
    p = np.array([0.3, -1.2, 2.5])
    np.testing.assert_array_equal(dilate(G, 1, p), p)
    np.testing.assert_allclose(dilate(G, 2, dilate(G, 3, p)), dilate(G, 6, p), rtol=1e-15)
    with pytest.raises(InputError):
        dilate(G, 0, p)
    with pytest.raises(InputError):
        dilate(G, -1, p)


def test_gauge_examples():
    G = heisenberg(1)
    assert gauge_norm(G, [1, 0, 0]) == 1.0
    assert gauge_norm(G, G.identity()) == 0.0
    assert gauge_norm(G, dilate(G, 3, [1, 0, 1])) == pytest.approx(3 * 2 ** 0.25, rel=1e-14)
    assert G.homogeneous_exponent == 4
    assert engel().homogeneous_exponent == 12
    assert distance(euclidean(1), [0], [3]) == pytest.approx(3)
    assert euclidean_norm([3, 4, 0]) == 5
    assert euclidean_norm([0, 0, 2]) == 2


@pytest.mark.parametrize("name", GROUPS)
def test_kernel_is_power_of_norm(name):
    G = load_group(name)
    p = np.random.default_rng(3).normal(size=(100, G.n))
    np.testing.assert_allclose(gauge_kernel(G, p), gauge_norm(G, p) ** G.homogeneous_exponent, rtol=1e-12)


@pytest.mark.parametrize("name", GROUPS)
@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_group_laws_property(name, data):
    G = load_group(name)
    x, y, z = (data.draw(points(G.n)) for _ in range(3))
    lhs = multiply(G, multiply(G, x, y), z)
    rhs = multiply(G, x, multiply(G, y, z))
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-10 * (1 + np.max(np.abs(rhs))))
    np.testing.assert_allclose(multiply(G, x, inverse(G, x)), 0, atol=1e-12)
    np.testing.assert_array_equal(inverse(G, inverse(G, x)), x)
    d = distance(G, x, y)
    # roots of the gauge amplify rounding near the diagonal
    assume(d > 1e-3)
    assert distance(G, multiply(G, z, x), multiply(G, z, y)) == pytest.approx(d, rel=1e-10, abs=1e-12)
    for lam in (0.5, 2.0, 10.0):
        assert distance(G, dilate(G, lam, x), dilate(G, lam, y)) == pytest.approx(lam * d, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("name", GROUPS)
def test_check_group_laws_passes(name):
    rep = check_group_laws(load_group(name), 500, 11)
    assert rep["all_passed"]
    assert set(rep["max_relative_error"]) == {"associativity", "inverse", "left_invariance", "homogeneity",
                                              "dilation_automorphism"}


@pytest.mark.parametrize("name", GROUPS)
def test_pairwise_quotient_matches_pointwise(name):
    G = load_group(name)
    rng = np.random.default_rng(4)
    x, y = rng.normal(size=(5, G.n)), rng.normal(size=(7, G.n))
    ref = multiply(G, x[:, None, :], -y[None, :, :])
    np.testing.assert_allclose(pairwise_quotient(G, x, y), ref, atol=1e-13)
    np.testing.assert_allclose(pairwise_kernel(G, x, y), gauge_kernel(G, ref), rtol=1e-12)


@pytest.mark.parametrize("name", GROUPS)
def test_kernel_hessian_matches_finite_differences(name):
    G = load_group(name)
    rng = np.random.default_rng(5)
    x, y = rng.uniform(-1, 1, size=(2, G.n))
    h = 1e-4
    K = lambda z: float(gauge_kernel(G, multiply(G, z, -y)))
    fd = np.empty((G.n, G.n))
    for i in range(G.n):
        for j in range(G.n):
            ei, ej = np.eye(G.n)[i] * h, np.eye(G.n)[j] * h
            fd[i, j] = (K(x + ei + ej) - K(x + ei - ej) - K(x - ei + ej) + K(x - ei - ej)) / (4 * h * h)
    H = kernel_hessian(G, x, y)
    np.testing.assert_allclose(H, fd, rtol=1e-5, atol=1e-5 * (1 + np.max(np.abs(fd))))


@pytest.mark.parametrize("name", GROUPS)
def test_right_jacobian_matches_finite_differences(name):
    G = load_group(name)
    rng = np.random.default_rng(6)
    p, q = rng.normal(size=(2, G.n))
    h = 1e-6
    fd = np.stack([(multiply(G, p, q + h * e) - multiply(G, p, q - h * e)) / (2 * h) for e in np.eye(G.n)], axis=1)
    np.testing.assert_allclose(right_jacobian(G, p, q), fd, atol=1e-8)


def test_json_roundtrip():
    for G in (heisenberg(2), engel(), euclidean(3)):
        doc = json.loads(G.to_json())
        G2 = CarnotGroup.from_dict(doc)
        np.testing.assert_array_equal(G2.structure, G.structure)
        assert G2.layer_dims == G.layer_dims


def test_spec_validation():
    good = {"name": "h", "layer_dims": [2, 1], "brackets": [{"i": 1, "j": 2, "out": [1.0]}]}
    assert load_group(good).n == 3
    with pytest.raises(SpecError):
        load_group({"name": "bad", "layer_dims": [2, 1], "brackets": []})  # second layer never generated
    with pytest.raises(SpecError):
        load_group({"name": "bad", "layer_dims": [2, 1], "brackets": [{"i": 1, "j": 3, "out": [1.0]}]})
    with pytest.raises(SpecError):
        load_group("heisenberg:x")
    with pytest.raises(SpecError):
        load_group("sl2")


def test_dimension_mismatch():
    with pytest.raises(InputError):
        multiply(heisenberg(1), [1, 2], [3, 4])


def test_step_four_rejected():
    # free filiform of step 4 is out of scope
    C = np.zeros((5, 5, 5))
    for a, b, c in ((0, 1, 2), (0, 2, 3), (0, 3, 4)):
        C[a, b, c], C[b, a, c] = 1.0, -1.0
    with pytest.raises(SpecError):
        CarnotGroup("filiform4", (2, 1, 1, 1), C)


def test_homogeneous_exponent_formula():
    for G in (euclidean(2), heisenberg(1), engel()):
        assert G.homogeneous_exponent == 2 * math.factorial(G.step)
