"""Nystrom discretization of kernel operators and Fredholm determinants.

The intensity of the s-modified process (points with exactly one right
neighbour within distance s) is computed two ways:

* ``modified_intensity_fredholm``:  int_0^s rho_2(0, y) det(1 - K~_{0,y}) dy,
  where K~ is the kernel conditioned on particles at 0 and y;
* ``modified_intensity_series``: the alternating inclusion-exclusion series
  sum_m (-1)^m/m! int rho_{m+2}(0, y, z_1..z_m) over [0, s]^(m+1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import roots_legendre

from .errors import EigOutOfRange, OrderTooSmall, SingularBlock, TruncationNotConverged
from .kernels import TranslationKernel

EIG_TOL = 1e-8
SINGULAR_TOL = 1e-12
DEFAULT_ORDER = 24
SERIES_ORDER = 8
SKIP_BOUND = 1e-14


def gauss_legendre(a: float, b: float, n: int):
    """Gauss-Legendre nodes and weights on [a, b]."""
    t, w = roots_legendre(n)
    half = 0.5 * (b - a)
    return half * t + 0.5 * (a + b), half * w


@dataclass(frozen=True, eq=False)
class DiscretizedOperator:
    interval: tuple
    nodes: np.ndarray
    weights: np.ndarray
    matrix: np.ndarray
    eigenvalues: np.ndarray  # descending, clamped to [0, 1]
    eigenvectors: np.ndarray  # orthonormal columns
    kernel_fn: Callable = field(repr=False)

    @property
    def order(self) -> int:
        return self.nodes.size

    def eigenfunctions(self, x, modes=None) -> np.ndarray:
        """Nystrom extension of the eigenfunctions to arbitrary points.

        phi_i(x) = (1/lambda_i) sum_j w_j kappa(x, x_j) phi_i(x_j), which
        reproduces the node values and is L2-orthonormal up to quadrature error.
        Returns an array of shape (len(x), len(modes)).
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        modes = np.arange(self.order) if modes is None else np.asarray(modes)
        lam = self.eigenvalues[modes]
        coef = np.sqrt(self.weights)[:, None] * self.eigenvectors[:, modes] / lam
        return self.kernel_fn(x[:, None], self.nodes[None, :]) @ coef


def discretize(kernel_fn: Callable, interval, order: int) -> DiscretizedOperator:
    """Symmetric Nystrom matrix sqrt(w_i w_j) kappa(x_i, x_j) on Gauss-Legendre nodes.

    Eigenvalues more than ``EIG_TOL`` outside [0, 1] are rejected, since a
    correlation kernel must satisfy 0 <= K <= 1.
    """
    a, b = (float(v) for v in interval)
    if order < 4:
        raise OrderTooSmall(f"order {order} < 4")
    if not b > a:
        raise ValueError(f"empty interval [{a}, {b}]")
    x, w = gauss_legendre(a, b, order)
    sw = np.sqrt(w)
    m = sw[:, None] * np.asarray(kernel_fn(x[:, None], x[None, :]), dtype=float) * sw[None, :]
    m = 0.5 * (m + m.T)
    lam, vec = np.linalg.eigh(m)
    lam, vec = lam[::-1], vec[:, ::-1]
    if lam.size and (lam[-1] < -EIG_TOL or lam[0] > 1 + EIG_TOL):
        raise EigOutOfRange(f"spectrum [{lam[-1]:.3g}, {lam[0]:.3g}] leaves [0, 1]")
    lam = np.clip(lam, 0.0, 1.0)
    return DiscretizedOperator((a, b), x, w, m, lam, vec, kernel_fn)


def fredholm_det(op: DiscretizedOperator) -> float:
    """det(1 - K) as the product of (1 - lambda_i)."""
    return float(np.prod(1.0 - op.eigenvalues))


def fredholm_det_direct(op: DiscretizedOperator) -> float:
    """det(I - matrix) by LU; the second evaluation path for ``fredholm_det``."""
    return float(np.linalg.det(np.eye(op.order) - op.matrix))


# -- conditional kernel --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConditionalKernel:
    """Kernel of the process conditioned on particles at ``x`` and ``y``.

    K~(u, v) = K(u, v) - [K(u,x) K(u,y)] T [K(x,v) K(y,v)]^T with
    T = [[K(x,x), K(x,y)], [K(y,x), K(y,y)]]^(-1).
    """
    base: TranslationKernel
    x: float
    y: float
    T: np.ndarray

    def __call__(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        K = self.base
        ux, uy = K(u, self.x), K(u, self.y)
        xv, yv = K(self.x, v), K(self.y, v)
        (t11, t12), (t21, t22) = self.T
        return K(u, v) - (ux * (t11 * xv + t12 * yv) + uy * (t21 * xv + t22 * yv))

    eval = __call__


def conditional_kernel(kernel: TranslationKernel, x: float, y: float) -> ConditionalKernel:
    g0 = kernel.g0
    gxy = float(kernel.g(np.array([y - x]))[0])
    det = (g0 - gxy) * (g0 + gxy)
    if det <= SINGULAR_TOL:
        raise SingularBlock(f"rho_2({x}, {y}) = {det:.3g} is too small to condition on")
    T = np.array([[g0, -gxy], [-gxy, g0]]) / det
    return ConditionalKernel(kernel, float(x), float(y), T)


def pair_correlation(kernel: TranslationKernel, u) -> np.ndarray:
    """rho_2(0, u) = g(0)^2 - g(u)^2."""
    gu = kernel.g(np.asarray(u, dtype=float))
    return (kernel.g0 - gu) * (kernel.g0 + gu)


# -- intensity of the s-modified process ----------------------------------------------

def modified_intensity_fredholm(kernel: TranslationKernel, s_tilde: float,
                                order: int = DEFAULT_ORDER,
                                y_order: Optional[int] = None) -> float:
    """rho_1(0; s) = int_0^s rho_2(0, y) det(1 - K~_{0,y} on [0, s]) dy.

    The y integral uses an open Gauss-Legendre rule, so y = 0 (where the 2x2
    block is singular) is never evaluated.
    """
    if not s_tilde > 0:
        raise ValueError("s_tilde must be positive")
    if kernel.g0 == 0:
        return 0.0
    ys, wy = gauss_legendre(0.0, s_tilde, y_order or order)
    total = 0.0
    for y, w in zip(ys, wy):
        ck = conditional_kernel(kernel, 0.0, y)
        d = fredholm_det(discretize(ck, (0.0, s_tilde), order))
        total += w * float(pair_correlation(kernel, y)) * d
    return total


def max_conditional_trace(kernel: TranslationKernel, s_tilde: float,
                          order: int = DEFAULT_ORDER) -> float:
    """max over y nodes of int_0^s K~_{0,y}(z, z) dz."""
    ys, _ = gauss_legendre(0.0, s_tilde, order)
    zs, wz = gauss_legendre(0.0, s_tilde, order)
    best = 0.0
    for y in ys:
        ck = conditional_kernel(kernel, 0.0, y)
        best = max(best, float(wz @ ck(zs, zs)))
    return best


@dataclass(frozen=True)
class SeriesResult:
    value: float
    terms: tuple  # signed contributions (-1)^m/m! * integral, None where skipped
    truncation_bound: float  # bound on the discarded tail m > m_max


def _series_term(kernel: TranslationKernel, s_tilde: float, m: int, order: int) -> float:
    # int over [0,s]^(m+1) of det K[0, y, z_1..z_m], tensor Gauss-Legendre
    x, w = gauss_legendre(0.0, s_tilde, order)
    dim = m + 1
    total = 0.0
    n_total = order**dim
    chunk = max(1, 200_000 // (m + 2) ** 2)
    for start in range(0, n_total, chunk):
        flat = np.arange(start, min(start + chunk, n_total))
        idx = np.stack(np.unravel_index(flat, (order,) * dim), axis=1)
        pts = np.concatenate([np.zeros((flat.size, 1)), x[idx]], axis=1)
        mats = kernel.g(pts[:, None, :] - pts[:, :, None])
        dets = np.linalg.det(mats)
        total += float(np.prod(w[idx], axis=1) @ dets)
    return total


def modified_intensity_series(kernel: TranslationKernel, s_tilde: float, m_max: int = 4,
                              order: int = SERIES_ORDER) -> SeriesResult:
    """Alternating series for rho_1(0; s), truncated after m_max.

    Term bounds: rho_{m+2}(0, y, z) = rho_2(0, y) K~[z] <= rho_2(0, y) prod K~(z_i, z_i)
    (Hadamard applied to the conditional kernel), so the m-th integral is at
    most I_0 t^m with t the largest conditional trace.  Terms whose bound is
    below 1e-14 are skipped; the tail bound must be below 1e-10 * value.
    """
    if not 0 < s_tilde <= 0.5:
        raise ValueError("series path requires 0 < s_tilde <= 0.5")
    if not 0 <= m_max <= 6:
        raise ValueError("m_max must be in [0, 6]")
    if kernel.g0 == 0:
        return SeriesResult(0.0, (0.0,) * (m_max + 1), 0.0)
    i0 = _series_term(kernel, s_tilde, 0, order)
    t = max_conditional_trace(kernel, s_tilde) if m_max > 0 else 0.0
    terms = [i0]
    for m in range(1, m_max + 1):
        bound = i0 * t**m / math.factorial(m)
        if bound < SKIP_BOUND:
            terms.append(None)
            continue
        terms.append((-1) ** m / math.factorial(m) * _series_term(kernel, s_tilde, m, order))
    value = math.fsum(v for v in terms if v is not None)
    tail = i0 * math.fsum(t**m / math.factorial(m) for m in range(m_max + 1, m_max + 40))
    if m_max > 0 and tail > 1e-10 * abs(value):
        raise TruncationNotConverged(
            f"tail bound {tail:.3g} exceeds 1e-10 * value ({value:.3g}) at m_max={m_max}")
    return SeriesResult(value, tuple(terms), tail)


# -- ratio table -------------------------------------------------------------------

@dataclass(frozen=True)
class IntensityRow:
    s_tilde: float
    fredholm: float
    series: float
    ratio: float  # fredholm / (alpha s^3)
    rel_diff: float  # |fredholm - series| / |fredholm|


def intensity_table(kernel: TranslationKernel, s_values=(0.2, 0.1, 0.05, 0.025),
                    m_max: int = 4) -> list:
    rows = []
    for s in s_values:
        f = modified_intensity_fredholm(kernel, s)
        ser = modified_intensity_series(kernel, s, m_max=m_max).value
        ratio = f / (kernel.alpha * s**3) if kernel.alpha > 0 else math.nan
        rel = abs(f - ser) / abs(f) if f != 0 else abs(ser)
        rows.append(IntensityRow(s, f, ser, ratio, rel))
    return rows


def richardson_limit(s_values, ratios) -> float:
    """Extrapolate ratio(s) to s -> 0 from the two smallest s, assuming an O(s) error."""
    pairs = sorted(zip(s_values, ratios))
    (s1, r1), (s2, r2) = pairs[0], pairs[1]
    return (s2 * r1 - s1 * r2) / (s2 - s1)
