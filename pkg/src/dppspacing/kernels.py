"""Translation-invariant correlation kernels built from spectral densities.

A spectral density ``phi`` is an even function with ``0 <= phi <= 1`` and a
finite second moment.  Its Fourier transform ``g`` gives the kernel
``K(x, y) = g(y - x)`` and the limit constant

    alpha = (4 pi^2 / 3) * int(phi) * int(t^2 phi).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import roots_legendre

from .errors import DivergentMoment, NotEven, QuadratureFailure, RangeViolation

__all__ = [
    "SpectralDensity",
    "ValidatedDensity",
    "TranslationKernel",
    "QuadratureOptions",
    "validate_density",
    "kernel_from_density",
    "alpha",
    "alpha_finite_difference",
    "check_decay",
    "sine_density",
    "gaussian_density",
    "scaled_indicator_density",
    "zero_density",
    "tabulated_density",
    "density_from_spec",
    "kernel_from_spec",
]

RANGE_TOL = 1e-12
EVEN_TOL = 1e-12
TAIL_EPS = 1e-18

Array = np.ndarray


@dataclass(frozen=True)
class SpectralDensity:
    eval: Callable[[Array], Array]
    support_bound: float = math.inf
    moment0_hint: Optional[float] = None
    moment2_hint: Optional[float] = None
    name: str = "custom"
    # kinks/jumps of phi on t >= 0, used to align quadrature panels
    breakpoints: tuple = ()
    # closed-form g and g' for built-in densities
    fourier: Optional[Callable[[Array], Array]] = None
    fourier_prime: Optional[Callable[[Array], Array]] = None
    params: dict = field(default_factory=dict)

    def __call__(self, t):
        return self.eval(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class ValidatedDensity:
    density: SpectralDensity
    m0: float
    m2: float
    # truncation point for quadrature: phi is negligible beyond it
    effective_bound: float


@dataclass(frozen=True)
class QuadratureOptions:
    nodes_per_panel: int = 16
    rtol: float = 1e-10
    # number of largest-|x| points re-checked on a refined panel set
    check_points: int = 32


@dataclass(frozen=True, eq=False)
class TranslationKernel:
    g: Callable[[Array], Array]
    g_prime: Callable[[Array], Array]
    g0: float
    g2_at_0: float
    alpha: float
    provenance: str  # "closed_form" or "quadrature"
    name: str = "custom"
    support_bound: float = math.inf
    m0: float = 0.0
    m2: float = 0.0

    def __call__(self, u, v):
        """K(u, v) = g(v - u), broadcasting over array arguments."""
        return self.g(np.asarray(v, dtype=float) - np.asarray(u, dtype=float))

    def matrix(self, points, others=None) -> Array:
        x = np.asarray(points, dtype=float)
        y = x if others is None else np.asarray(others, dtype=float)
        return self.g(y[None, :] - x[:, None])

    @property
    def is_zero(self) -> bool:
        return self.g0 == 0.0


# -- built-in densities --------------------------------------------------------

def _sinc_prime(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-2
    xs = x[small]
    p2 = math.pi**2
    out[small] = xs * (-p2 / 3 + xs**2 * (p2**2 / 30 - xs**2 * p2**3 / 840))
    xl = x[~small]
    px = math.pi * xl
    out[~small] = (px * np.cos(px) - np.sin(px)) / (math.pi * xl**2)
    return out


def scaled_indicator_density(a: float) -> SpectralDensity:
    """``a`` times the indicator of [-1/2, 1/2]; ``a = 1`` is the sine kernel."""
    a = float(a)

    def phi(t):
        return np.where(np.abs(t) <= 0.5, a, 0.0)

    return SpectralDensity(
        eval=phi,
        support_bound=0.5,
        moment0_hint=a,
        moment2_hint=a / 12.0,
        name="sine" if a == 1.0 else "scaled_indicator",
        breakpoints=(0.5,),
        fourier=lambda x: a * np.sinc(x),
        fourier_prime=lambda x: a * _sinc_prime(x),
        params={} if a == 1.0 else {"a": a},
    )


def sine_density() -> SpectralDensity:
    return scaled_indicator_density(1.0)


def gaussian_density() -> SpectralDensity:
    """phi(t) = exp(-pi t^2), which is its own Fourier transform."""
    return SpectralDensity(
        eval=lambda t: np.exp(-math.pi * t**2),
        moment0_hint=1.0,
        moment2_hint=1.0 / (2 * math.pi),
        name="gaussian",
        fourier=lambda x: np.exp(-math.pi * np.asarray(x, dtype=float) ** 2),
        fourier_prime=lambda x: -2 * math.pi * np.asarray(x, dtype=float)
        * np.exp(-math.pi * np.asarray(x, dtype=float) ** 2),
    )


def zero_density() -> SpectralDensity:
    return SpectralDensity(
        eval=lambda t: np.zeros_like(t, dtype=float),
        support_bound=0.0,
        moment0_hint=0.0,
        moment2_hint=0.0,
        name="zero",
        fourier=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        fourier_prime=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
    )


def tabulated_density(path) -> SpectralDensity:
    """Piecewise-linear density read from a two-column CSV ``t, phi(t)``.

    Rows whose first field is not numeric (headers) are skipped.  A table
    covering only ``t >= 0`` is mirrored; otherwise the interpolant is
    symmetrized by averaging ``phi(t)`` and ``phi(-t)``.
    """
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if len(rec) < 2:
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except ValueError:
                continue
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two numeric rows")
    tab = np.array(sorted(rows))
    t, f = tab[:, 0], tab[:, 1]
    if t.min() >= 0:
        t = np.concatenate([-t[::-1], t])
        f = np.concatenate([f[::-1], f])
        t, idx = np.unique(t, return_index=True)
        f = f[idx]
    bound = float(np.abs(t).max())

    def phi(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * (np.interp(x, t, f, left=0.0, right=0.0)
                      + np.interp(-x, t, f, left=0.0, right=0.0))

    knots = tuple(sorted(set(np.abs(t).tolist())))
    return SpectralDensity(eval=phi, support_bound=bound, name="table",
                           breakpoints=knots, params={"path": str(path)})


def density_from_spec(spec) -> SpectralDensity:
    """Build a density from a config entry.

    ``spec`` is a name (``"sine"``, ``"gaussian"``) or a mapping with key
    ``name`` plus ``a`` for ``scaled_indicator`` or ``path`` for ``table``.
    """
    if isinstance(spec, str):
        spec = {"name": spec}
    spec = dict(spec)
    name = spec.pop("name")
    if name == "sine":
        density = sine_density()
    elif name == "gaussian":
        density = gaussian_density()
    elif name == "zero":
        density = zero_density()
    elif name == "scaled_indicator":
        a = float(spec.pop("a"))
        if not 0.0 < a <= 1.0:
            raise RangeViolation(f"scaled_indicator needs a in (0, 1], got {a}")
        density = scaled_indicator_density(a)
    elif name == "table":
        density = tabulated_density(spec.pop("path"))
    else:
        raise ValueError(f"unknown density {name!r}")
    if spec:
        raise ValueError(f"unexpected parameters for {name!r}: {sorted(spec)}")
    return density


def kernel_from_spec(spec, opts: Optional[QuadratureOptions] = None) -> TranslationKernel:
    return kernel_from_density(validate_density(density_from_spec(spec)), opts)


# -- validation ----------------------------------------------------------------

def _default_grid(density: SpectralDensity) -> Array:
    b = density.support_bound
    half = 1.5 * b if math.isfinite(b) and b > 0 else 10.0
    return np.linspace(-half, half, 4001)


def _effective_bound(density: SpectralDensity) -> float:
    if math.isfinite(density.support_bound):
        return float(density.support_bound)
    T = 1.0
    for _ in range(40):
        t = np.linspace(T, 2 * T, 513)
        if np.max(np.abs(density(t)) * (1 + t**2)) < TAIL_EPS:
            return T
        T *= 2
    raise DivergentMoment(f"{density.name}: density tail does not decay")


def _half_line_quad(f, T, points):
    pts = [p for p in points if 0 < p < T]
    val, err, info = integrate.quad(
        f, 0.0, T, points=pts or None, limit=200 + 4 * len(pts),
        epsabs=1e-14, epsrel=1e-12, full_output=True)[:3]
    if not np.isfinite(val) or err > 1e-8 * max(1.0, abs(val)):
        raise DivergentMoment(f"moment quadrature failed (value={val}, err={err})")
    return 2.0 * val


def validate_density(phi: SpectralDensity, grid=None) -> ValidatedDensity:
    """Check evenness and ``0 <= phi <= 1``; compute ``int phi`` and ``int t^2 phi``."""
    grid = _default_grid(phi) if grid is None else np.asarray(grid, dtype=float)
    grid = np.union1d(grid, -grid)
    vals = phi(grid)
    if not np.all(np.isfinite(vals)):
        raise RangeViolation(f"{phi.name}: density is not finite on the grid")
    asym = np.max(np.abs(vals - phi(-grid)))
    if asym > EVEN_TOL:
        raise NotEven(f"{phi.name}: |phi(t) - phi(-t)| reaches {asym:.3g}")
    lo, hi = vals.min(), vals.max()
    if lo < -RANGE_TOL or hi > 1 + RANGE_TOL:
        raise RangeViolation(f"{phi.name}: density takes values in [{lo:.6g}, {hi:.6g}]")

    T = _effective_bound(phi)
    if phi.moment0_hint is not None and phi.moment2_hint is not None:
        m0, m2 = float(phi.moment0_hint), float(phi.moment2_hint)
    elif T == 0:
        m0 = m2 = 0.0
    else:
        f = lambda t: float(phi(np.array([t]))[0])
        m0 = _half_line_quad(f, T, phi.breakpoints)
        m2 = _half_line_quad(lambda t: t * t * f(t), T, phi.breakpoints)
    return ValidatedDensity(density=phi, m0=m0, m2=m2, effective_bound=T)


# -- Fourier transform by panel quadrature -------------------------------------

class _CosineTransform:
    """g(x) = 2 int_0^T cos(2 pi x t) phi(t) dt (and g') by composite Gauss-Legendre.

    Panels are no wider than 1/(4 |x|max(T, 1)) and split at the density's
    breakpoints; every call re-checks the largest |x| values against a rule
    with halved panels.
    """

    def __init__(self, vd: ValidatedDensity, opts: QuadratureOptions, derivative: bool):
        self.phi = vd.density
        self.T = vd.effective_bound
        self.opts = opts
        self.derivative = derivative
        self._ref, self._ref_w = roots_legendre(opts.nodes_per_panel)
        self._cache = {}

    def _rule(self, xmax: float, halve: bool):
        key = (xmax, halve)
        if key not in self._cache:
            width = min(self.T / 4, 1.0 / (4 * max(xmax, 1.0) * max(self.T, 1.0)))
            if halve:
                width /= 2
            n = max(1, int(math.ceil(self.T / width)))
            edges = np.union1d(np.linspace(0.0, self.T, n + 1),
                               [b for b in self.phi.breakpoints if 0 < b < self.T])
            a, b = edges[:-1, None], edges[1:, None]
            t = (0.5 * (b - a) * self._ref + 0.5 * (a + b)).ravel()
            w = (0.5 * (b - a) * self._ref_w).ravel()
            w = w * self.phi(t)
            if self.derivative:
                w = w * (-2 * math.pi * t)
            keep = w != 0
            self._cache[key] = (t[keep], 2.0 * w[keep])
        return self._cache[key]

    def _apply(self, x, rule):
        t, w = rule
        trig = np.sin if self.derivative else np.cos
        out = np.empty_like(x)
        step = max(1, 4_000_000 // max(len(t), 1))
        for i in range(0, len(x), step):
            out[i:i + step] = trig(2 * math.pi * np.outer(x[i:i + step], t)) @ w
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        if flat.size == 0 or self.T == 0:
            return np.zeros_like(x)
        # bucket by magnitude so small |x| does not pay for the finest panels
        ax = np.abs(flat)
        xmax = float(2.0 ** math.ceil(math.log2(max(ax.max(), 1.0))))
        out = self._apply(flat, self._rule(xmax, False))
        k = min(self.opts.check_points, flat.size)
        idx = np.argpartition(ax, -k)[-k:]
        fine = self._apply(flat[idx], self._rule(xmax, True))
        scale = np.maximum(1.0, np.abs(fine))
        err = np.max(np.abs(fine - out[idx]) / scale)
        if err > self.opts.rtol:
            raise QuadratureFailure(
                f"Fourier quadrature not converged: rel. change {err:.3g} at |x| <= {xmax}")
        return out.reshape(x.shape)


def kernel_from_density(vd: ValidatedDensity, opts: Optional[QuadratureOptions] = None
                        ) -> TranslationKernel:
    opts = opts or QuadratureOptions()
    phi = vd.density
    if phi.fourier is not None:
        g, gp, prov = phi.fourier, phi.fourier_prime, "closed_form"
    else:
        g = _CosineTransform(vd, opts, derivative=False)
        gp = _CosineTransform(vd, opts, derivative=True)
        prov = "quadrature"
    kernel = TranslationKernel(
        g=g, g_prime=gp, g0=vd.m0, g2_at_0=-4 * math.pi**2 * vd.m2,
        alpha=4 * math.pi**2 / 3 * vd.m0 * vd.m2, provenance=prov,
        name=phi.name, support_bound=vd.effective_bound, m0=vd.m0, m2=vd.m2)
    if prov == "quadrature" and vd.m0 > 0:
        check_decay(kernel)
    return kernel


def quadrature_kernel(vd: ValidatedDensity, opts: Optional[QuadratureOptions] = None
                      ) -> TranslationKernel:
    """Kernel built by quadrature even when a closed form is available."""
    opts = opts or QuadratureOptions()
    return TranslationKernel(
        g=_CosineTransform(vd, opts, False), g_prime=_CosineTransform(vd, opts, True),
        g0=vd.m0, g2_at_0=-4 * math.pi**2 * vd.m2,
        alpha=4 * math.pi**2 / 3 * vd.m0 * vd.m2, provenance="quadrature",
        name=vd.density.name, support_bound=vd.effective_bound, m0=vd.m0, m2=vd.m2)


# -- alpha -----------------------------------------------------------------------

def alpha(kernel: TranslationKernel) -> float:
    """Limit constant (4 pi^2/3) m0 m2, i.e. g(0) |g''(0)| / 3."""
    return kernel.alpha


def alpha_finite_difference(kernel: TranslationKernel, h: float = 1e-3) -> float:
    """alpha from a central second difference of g at 0 (independent of m2)."""
    g = kernel.g(np.array([-h, 0.0, h]))
    g2 = (g[0] - 2 * g[1] + g[2]) / h**2
    return kernel.g0 * abs(g2) / 3.0


def check_decay(kernel: TranslationKernel, lo: float = 1.0, hi: float = 100.0,
                threshold: float = -0.5) -> tuple:
    """Log-log slopes of the envelopes of |g| and |g'| over [lo, hi].

    Warns (never raises) when a slope exceeds ``threshold``.
    """
    edges = np.geomspace(lo, hi, 17)
    centers = np.sqrt(edges[:-1] * edges[1:])
    slopes = []
    for fn, label in ((kernel.g, "g"), (kernel.g_prime, "g'")):
        env = []
        for a, b in zip(edges[:-1], edges[1:]):
            x = np.linspace(a, b, 64)
            env.append(max(np.max(np.abs(fn(x))), 1e-300))
        slope = float(np.polyfit(np.log(centers), np.log(env), 1)[0])
        slopes.append(slope)
        if slope > threshold:
            warnings.warn(f"{kernel.name}: |{label}| decays like x^{slope:.2f}; "
                          f"the limit theorems assume faster than x^{threshold}",
                          RuntimeWarning, stacklevel=2)
    return tuple(slopes)
