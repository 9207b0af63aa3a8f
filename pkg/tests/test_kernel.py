import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptsph import kernel
from adaptsph.kernel import KernelError, KernelFamily, KernelSpec

PARAM_FAMILIES = [KernelFamily.CUBIC, KernelFamily.QUADRATIC]


@st.composite
def specs(draw, families=tuple(KernelFamily), dims=(1, 2, 3)):
    family = draw(st.sampled_from(families))
    b = draw(st.floats(1.0, 3.0))
    chi = draw(st.floats(0.05, 0.95))
    a = min(max(chi * b, kernel.KNOT_EPS), b - kernel.KNOT_EPS)
    h = draw(st.floats(0.1, 5.0))
    dim = draw(st.sampled_from(dims))
    return KernelSpec(family, a, b, h, dim)


def test_knot_validation():
    with pytest.raises(KernelError):
        KernelSpec("cubic-bspline", a=2.5, b=2.0)
    with pytest.raises(KernelError):
        KernelSpec("cubic-bspline", a=0.01, b=2.0)
    with pytest.raises(KernelError):
        KernelSpec("cubic-bspline", a=1.0, b=2.0, h=0.0)
    with pytest.raises(ValueError):
        KernelSpec("quintic", a=1.0)
    # the standard kernel ignores the knot
    KernelSpec("standard-cubic", a=7.0)


def test_knot_vector_must_not_decrease():
    with pytest.raises(KernelError):
        kernel.KnotVector((0.0, 2.0, 1.0))


def test_table_values_at_landmarks():
    s = KernelSpec("cubic-bspline", a=1.0, b=2.0)
    assert kernel.eval_unnormalized(s, 0.0) == pytest.approx(2.0 / 3.0)  # b / (a + b)
    assert kernel.eval_unnormalized(s, 1.0) == pytest.approx(1.0 / 6.0)
    assert kernel.eval_unnormalized(s, 2.0) == 0.0
    std = KernelSpec("standard-cubic")
    assert kernel.eval_unnormalized(std, 0.0) == 1.0
    assert kernel.eval_unnormalized(std, 1.0) == 0.25


def test_standard_normalisation_constants():
    for dim, alpha in [(1, 2.0 / 3.0), (2, 10.0 / (7.0 * math.pi)), (3, 1.0 / math.pi)]:
        assert kernel.normalization_constant(KernelSpec("standard-cubic", dim=dim)) == pytest.approx(alpha)


@settings(max_examples=60, deadline=None)
@given(specs())
def test_positive_inside_zero_outside(spec):
    q = np.linspace(0.0, spec.support, 400, endpoint=False)
    assert np.all(kernel.eval_unnormalized(spec, q) > 0.0)
    outside = spec.support * np.array([1.0, 1.0 + 1e-12, 1.5, 10.0])
    assert np.all(kernel.eval_unnormalized(spec, outside) == 0.0)


@settings(max_examples=40, deadline=None)
@given(specs())
def test_closed_form_normalisation_matches_quadrature(spec):
    closed = kernel.normalization_constant(spec)
    assert kernel.quadrature_normalization(spec) == pytest.approx(closed, rel=1e-8)


@settings(max_examples=60, deadline=None)
@given(specs(families=PARAM_FAMILIES))
def test_continuity_at_intermediate_knot(spec):
    eps = 1e-9
    left = kernel.shape_derivatives(spec.family, spec.a, spec.b, spec.a - eps)
    right = kernel.shape_derivatives(spec.family, spec.a, spec.b, spec.a)
    orders = 3 if spec.family is KernelFamily.CUBIC else 2  # C2 for cubic, C1 for quadratic
    for k in range(orders):
        scale = max(1.0, abs(float(right[k])))
        assert abs(float(left[k]) - float(right[k])) <= 1e-6 * scale


@settings(max_examples=60, deadline=None)
@given(specs(families=PARAM_FAMILIES))
def test_matches_cox_de_boor(spec):
    q = np.linspace(-spec.b, spec.b, 301)
    basis = kernel.bspline_basis(spec.knot_vector(), 0, spec.degree, q)
    closed = kernel.eval_unnormalized(spec, q)
    np.testing.assert_allclose(closed, basis, rtol=1e-10, atol=1e-14)


def test_cox_de_boor_partition_of_unity():
    knots = kernel.KnotVector((0, 0, 0, 0, 1, 2, 3, 3, 3, 3))
    z = np.linspace(0.0, 2.999, 50)
    total = sum(kernel.bspline_basis(knots, i, 3, z) for i in range(len(knots) - 4))
    np.testing.assert_allclose(total, 1.0, rtol=1e-12)


def test_cox_de_boor_index_errors():
    with pytest.raises(KernelError):
        kernel.bspline_basis((0, 1, 2), 0, 3, 0.5)
    with pytest.raises(KernelError):
        kernel.bspline_basis((0, 1, 2), 0, -1, 0.5)


@settings(max_examples=60, deadline=None)
@given(specs(), st.floats(0.02, 0.98))
def test_gradient_matches_finite_difference(spec, frac):
    r = frac * spec.radius
    # stay off the knots where the second derivative jumps
    knots = [1.0, 2.0] if spec.family is KernelFamily.STANDARD_CUBIC else [spec.a, spec.b]
    if min(abs(r / spec.h - k) for k in knots) < 1e-3:
        return
    d = 1e-6 * spec.h
    fd = (kernel.eval(spec, r + d) - kernel.eval(spec, r - d)) / (2 * d)
    _, dw = kernel.radial_profile(spec.family, spec.a, spec.b, spec.h, spec.dim, r)
    assert float(dw) == pytest.approx(fd, rel=1e-6, abs=1e-9 * kernel.normalization_constant(spec) / spec.h)


def test_gradient_vector_is_radial():
    spec = KernelSpec("cubic-bspline", a=0.7, b=2.0, h=0.5, dim=2)
    g = kernel.eval_grad(spec, np.array([[0.3, 0.4], [0.0, 0.0]]))
    _, dw = kernel.radial_profile(spec.family, spec.a, spec.b, spec.h, 2, 0.5)
    np.testing.assert_allclose(g[0], dw * np.array([0.6, 0.8]))
    np.testing.assert_array_equal(g[1], 0.0)


@settings(max_examples=60, deadline=None)
@given(specs(families=PARAM_FAMILIES, dims=(1,)))
def test_gradient_peak_location(spec):
    q = np.linspace(0.0, spec.b, 200_001)
    dw = kernel.shape_derivatives(spec.family, spec.a, spec.b, q)[1]
    peak = q[np.argmax(np.abs(dw))]
    assert peak == pytest.approx(kernel.grad_peak_location(spec), abs=2 * spec.b / 200_000)


def test_gradient_peak_formula_cubic():
    spec = KernelSpec("cubic-bspline", a=1.0, b=2.0)
    assert kernel.grad_peak_location(spec) == pytest.approx(2.0 / 3.0)  # chi = 1/2
    with pytest.raises(KernelError):
        kernel.grad_peak_location(KernelSpec("standard-cubic"))


def test_array_knots_broadcast():
    a = np.array([0.5, 1.0, 1.5])
    w, dw, d2w = kernel.shape_derivatives("cubic-bspline", a, 2.0, np.array([0.2, 0.2, 0.2]))
    for k in range(3):
        single = kernel.shape_derivatives("cubic-bspline", a[k], 2.0, 0.2)
        assert (w[k], dw[k], d2w[k]) == pytest.approx(tuple(float(v) for v in single))
