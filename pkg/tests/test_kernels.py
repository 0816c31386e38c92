import math
import warnings

import numpy as np
import pytest

from dppspacing import kernels
from dppspacing.errors import DivergentMoment, NotEven, RangeViolation
from dppspacing.kernels import SpectralDensity

from oracles import cosine_transform


def custom(fn, name="custom", **kw):
    return SpectralDensity(eval=fn, name=name, **kw)


def test_sine_moments():
    vd = kernels.validate_density(kernels.sine_density())
    assert vd.m0 == pytest.approx(1.0, rel=1e-14)
    assert vd.m2 == pytest.approx(1 / 12, rel=1e-14)


def test_sine_moments_by_quadrature():
    # same indicator without hints: scipy.quad must reproduce 1 and 1/12
    phi = custom(lambda t: np.where(np.abs(t) <= 0.5, 1.0, 0.0), support_bound=0.5,
                 breakpoints=(0.5,))
    vd = kernels.validate_density(phi)
    assert vd.m0 == pytest.approx(1.0, rel=1e-10)
    assert vd.m2 == pytest.approx(1 / 12, rel=1e-10)


def test_zero_density():
    vd = kernels.validate_density(kernels.zero_density())
    assert vd.m0 == 0 and vd.m2 == 0
    k = kernels.kernel_from_density(vd)
    assert k.alpha == 0 and k.is_zero
    assert np.all(k.g(np.linspace(-5, 5, 11)) == 0)


def test_range_violation():
    phi = custom(lambda t: np.where(np.abs(t) <= 1, 1.5, 0.0), support_bound=1.0)
    with pytest.raises(RangeViolation):
        kernels.validate_density(phi)
    with pytest.raises(RangeViolation):
        kernels.validate_density(custom(lambda t: -np.exp(-t**2)))


def test_not_even():
    phi = custom(lambda t: np.where((t >= 0) & (t <= 1), 1.0, 0.0), support_bound=1.0)
    with pytest.raises(NotEven):
        kernels.validate_density(phi)


def test_divergent_second_moment():
    with pytest.raises(DivergentMoment):
        kernels.validate_density(custom(lambda t: 1 / (1 + t**2)))


def test_sine_kernel_values():
    k = kernels.kernel_from_spec("sine")
    assert k.g(np.array([0.5]))[0] == pytest.approx(2 / math.pi, rel=1e-15)
    assert k.g0 == 1.0
    assert k(0.0, 0.5) == pytest.approx(2 / math.pi)
    x = np.linspace(-7, 7, 57)
    assert np.allclose(k.matrix(x), np.sinc(x[None, :] - x[:, None]), atol=1e-15)


def test_gaussian_kernel_values():
    k = kernels.kernel_from_spec("gaussian")
    assert k.g(np.array([1.0]))[0] == pytest.approx(math.exp(-math.pi), rel=1e-14)


@pytest.mark.parametrize("name", ["sine", "gaussian"])
def test_quadrature_matches_closed_form(name):
    vd = kernels.validate_density(kernels.density_from_spec(name))
    closed = kernels.kernel_from_density(vd)
    quad = kernels.quadrature_kernel(vd)
    assert quad.provenance == "quadrature" and closed.provenance == "closed_form"
    x = np.linspace(-30, 30, 241)
    assert np.max(np.abs(quad.g(x) - closed.g(x))) < 1e-10
    assert np.max(np.abs(quad.g_prime(x) - closed.g_prime(x))) < 1e-9


def test_triangle_density_against_adaptive_quadrature():
    # phi(t) = max(0, 1 - |t|) has g = sinc^2; compare with scipy's Fourier-weight quad
    tri = lambda t: np.maximum(0.0, 1 - np.abs(t))
    phi = custom(tri, support_bound=1.0, breakpoints=(1.0,))
    k = kernels.kernel_from_density(kernels.validate_density(phi))
    x = np.array([0.0, 0.3, 1.7, 4.25, 12.5])
    ref = np.array([cosine_transform(lambda t: 1 - t, xi, 1.0) for xi in x])
    assert np.allclose(k.g(x), ref, atol=1e-10)
    assert np.allclose(k.g(x), np.sinc(x) ** 2, atol=1e-10)
    assert k.alpha == pytest.approx(2 * math.pi**2 / 9, rel=1e-9)


def test_alpha_values():
    assert kernels.alpha(kernels.kernel_from_spec("sine")) == pytest.approx(math.pi**2 / 9, rel=1e-12)
    assert kernels.alpha(kernels.kernel_from_spec("gaussian")) == pytest.approx(2 * math.pi / 3,
                                                                               rel=1e-12)
    assert kernels.alpha(kernels.kernel_from_spec("zero")) == 0.0


@pytest.mark.parametrize("name", ["sine", "gaussian"])
def test_alpha_finite_difference(name):
    k = kernels.kernel_from_spec(name)
    assert kernels.alpha_finite_difference(k) == pytest.approx(k.alpha, rel=1e-5)


def test_gaussian_second_derivative():
    k = kernels.kernel_from_spec("gaussian")
    assert k.g2_at_0 == pytest.approx(-2 * math.pi, rel=1e-14)


def test_scaled_indicator():
    k = kernels.kernel_from_spec({"name": "scaled_indicator", "a": 0.5})
    assert k.g0 == 0.5
    assert k.alpha == pytest.approx(math.pi**2 / 9 / 4, rel=1e-14)
    with pytest.raises(RangeViolation):
        kernels.kernel_from_spec({"name": "scaled_indicator", "a": 1.5})


def test_sinc_prime_series_branch():
    k = kernels.kernel_from_spec("sine")
    x = np.array([1e-3, 5e-3, 9.99e-3, 1.001e-2, 0.1])
    fd = (np.sinc(x + 1e-6) - np.sinc(x - 1e-6)) / 2e-6
    assert np.allclose(k.g_prime(x), fd, atol=1e-8)


def test_tabulated_density(tmp_path):
    t = np.linspace(0, 6, 601)
    path = tmp_path / "phi.csv"
    with open(path, "w") as fh:
        fh.write("t,phi\n")
        for a, b in zip(t, np.exp(-math.pi * t**2)):
            fh.write(f"{a:.17g},{b:.17g}\n")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        k = kernels.kernel_from_spec({"name": "table", "path": str(path)})
    x = np.linspace(0, 3, 13)
    assert np.allclose(k.g(x), np.exp(-math.pi * x**2), atol=1e-4)
    assert k.alpha == pytest.approx(2 * math.pi / 3, rel=1e-3)


def test_tabulated_range_violation(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0,1.5\n1,1.5\n1.01,0\n")
    with pytest.raises(RangeViolation):
        kernels.kernel_from_spec({"name": "table", "path": str(path)})


def test_unknown_spec():
    with pytest.raises(ValueError):
        kernels.density_from_spec("cauchy")
    with pytest.raises(ValueError):
        kernels.density_from_spec({"name": "sine", "a": 2})


def test_check_decay():
    sine = kernels.kernel_from_spec("sine")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        slopes = kernels.check_decay(sine)
    assert slopes[0] == pytest.approx(-1.0, abs=0.1)
    slow = kernels.TranslationKernel(
        g=lambda x: (1 + np.asarray(x) ** 2) ** -0.125,
        g_prime=lambda x: -0.25 * np.asarray(x) * (1 + np.asarray(x) ** 2) ** -1.125,
        g0=1.0, g2_at_0=-0.25, alpha=1 / 12, provenance="quadrature", name="slow")
    with pytest.warns(RuntimeWarning, match="decays like"):
        slopes = kernels.check_decay(slow)
    assert slopes[0] == pytest.approx(-0.25, abs=0.02)


@pytest.mark.parametrize("name", ["sine", "gaussian"])
@pytest.mark.parametrize("route", ["closed", "quadrature"])
def test_g_prime_finite_difference(name, route):
    vd = kernels.validate_density(kernels.density_from_spec(name))
    k = kernels.kernel_from_density(vd) if route == "closed" else kernels.quadrature_kernel(vd)
    x = np.linspace(-10, 10, 161)
    h = 1e-4
    fd = (k.g(x + h) - k.g(x - h)) / (2 * h)
    assert np.max(np.abs(k.g_prime(x) - fd)) <= 1e-6
