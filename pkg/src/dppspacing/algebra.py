"""Finite-point correlation and cluster functions of a determinantal process.

Correlation functions are Gram determinants ``K[x_1, ..., x_k]``; cluster
(Ursell) functions are signed sums over cyclic permutations, or equivalently
the Moebius inversion over set partitions.  Everything here is exact
enumeration for small ``k``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import DegenerateTuple, NotPSD, PartitionAmbiguity, TooLarge
from .kernels import TranslationKernel

MAX_POINTS = 12
MAX_PARTITION_POINTS = 10
MAX_CUMULANT_ORDER = 10
DET_TOL = 1e-10
MIN_GAP = 1e-12

# above this size cyclic sums switch from explicit enumeration to a subset DP
_ENUMERATE_CYCLES_UP_TO = 8


def _as_points(points, limit=MAX_POINTS, distinct=True) -> np.ndarray:
    x = np.atleast_1d(np.asarray(points, dtype=float))
    if x.ndim != 1 or x.size == 0:
        raise ValueError("need a non-empty 1-d tuple of points")
    if x.size > limit:
        raise TooLarge(f"{x.size} points exceeds the limit of {limit}")
    if distinct and x.size > 1:
        gaps = np.diff(np.sort(x))
        if gaps.min() <= MIN_GAP:
            raise DegenerateTuple(f"points coincide (min gap {gaps.min():.3g})")
    return x


def gram_matrix(points, kernel: TranslationKernel) -> np.ndarray:
    """Matrix K(x_i, x_j) = g(x_j - x_i)."""
    return kernel.matrix(np.asarray(points, dtype=float))


def _det(m: np.ndarray) -> float:
    # LAPACK LU with partial pivoting
    return float(np.linalg.det(m)) if m.size else 1.0


def _clamp(value: float, scale: float = 1.0) -> float:
    if -DET_TOL * max(1.0, scale) <= value < 0.0:
        return 0.0
    return value


def correlation(points, kernel: TranslationKernel) -> float:
    """k-point correlation rho_k = det K[x_1..x_k]; tiny negative round-off is clamped to 0."""
    x = _as_points(points)
    m = gram_matrix(x, kernel)
    return _clamp(_det(m), kernel.g0 ** x.size)


# -- enumeration helpers ---------------------------------------------------------

def set_partitions(k: int) -> Iterator[list]:
    """All set partitions of range(k) as lists of blocks, via restricted-growth strings."""
    if k == 0:
        yield []
        return
    a = [0] * k
    b = [1] * k  # b[i] = 1 + max(a[:i])

    def emit():
        blocks = [[] for _ in range(max(a) + 1)]
        for i, label in enumerate(a):
            blocks[label].append(i)
        return blocks

    while True:
        yield emit()
        # advance to the next restricted-growth string
        i = k - 1
        while i > 0 and a[i] == b[i]:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        for j in range(i + 1, k):
            a[j] = 0
            b[j] = max(b[j - 1], a[j - 1] + 1)


@lru_cache(maxsize=None)
def bell_number(n: int) -> int:
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def cyclic_permutations(k: int) -> Iterator[tuple]:
    """The (k-1)! permutations of range(k) consisting of a single k-cycle.

    Each is generated from the cycle (0, p_1, ..., p_{k-1}) with 0 fixed first,
    returned in one-line form ``sigma[i]``.
    """
    if k == 1:
        yield (0,)
        return
    for rest in itertools.permutations(range(1, k)):
        cycle = (0,) + rest
        sigma = [0] * k
        for a, b in zip(cycle, cycle[1:] + cycle[:1]):
            sigma[a] = b
        yield tuple(sigma)


def _cycle_sum_enumerate(m: np.ndarray) -> float:
    k = m.shape[0]
    idx = np.arange(k)
    total = 0.0
    for sigma in cyclic_permutations(k):
        total += float(np.prod(m[idx, sigma]))
    return total


def _cycle_sum_dp(m: np.ndarray) -> float:
    """Sum over Hamiltonian cycles through all k vertices (directed, rooted at 0).

    Held-Karp style DP over subsets of {1..k-1}: O(2^k k^2) instead of (k-1)!.
    """
    k = m.shape[0]
    if k == 1:
        return float(m[0, 0])
    n = k - 1
    full = (1 << n) - 1
    # paths[mask][j]: sum of weights of paths 0 -> ... -> j+1 visiting exactly mask
    paths = np.zeros((1 << n, n))
    for j in range(n):
        paths[1 << j, j] = m[0, j + 1]
    for mask in range(1, full + 1):
        row = paths[mask]
        if not row.any():
            continue
        for j in range(n):
            if not (mask >> j) & 1 or row[j] == 0.0:
                continue
            free = full & ~mask
            while free:
                low = free & -free
                nxt = low.bit_length() - 1
                paths[mask | low, nxt] += row[j] * m[j + 1, nxt + 1]
                free ^= low
    return float(paths[full] @ m[1:, 0])


def cluster_cyclic(points, kernel: TranslationKernel) -> float:
    """r_k = (-1)^(k-1) * sum over cyclic sigma of prod_i K(x_i, x_sigma(i))."""
    x = _as_points(points, distinct=False)
    m = gram_matrix(x, kernel)
    k = x.size
    s = _cycle_sum_enumerate(m) if k <= _ENUMERATE_CYCLES_UP_TO else _cycle_sum_dp(m)
    return (-1) ** (k - 1) * s


def _subset_values(x: np.ndarray, fn: Callable[[np.ndarray], float]) -> dict:
    # fn evaluated on every non-empty subset, keyed by bitmask
    k = x.size
    out = {}
    for mask in range(1, 1 << k):
        idx = [i for i in range(k) if (mask >> i) & 1]
        out[mask] = fn(x[idx])
    return out


def _mask(block) -> int:
    return sum(1 << i for i in block)


def cluster_from_correlations(points, kernel: TranslationKernel) -> float:
    """r_k = sum over set partitions G of (-1)^(m-1) (m-1)! prod_j rho_|G_j|."""
    x = _as_points(points, limit=MAX_PARTITION_POINTS, distinct=False)
    rho = _subset_values(x, lambda sub: _det(gram_matrix(sub, kernel)))
    total = 0.0
    for blocks in set_partitions(x.size):
        m = len(blocks)
        term = (-1) ** (m - 1) * math.factorial(m - 1)
        for blk in blocks:
            term *= rho[_mask(blk)]
        total += term
    return total


def correlations_from_clusters(points, cluster_oracle: Callable[[np.ndarray], float]) -> float:
    """rho_k = sum over set partitions G of prod_j r_|G_j|, with ``cluster_oracle(sub_points)``."""
    x = _as_points(points, limit=MAX_PARTITION_POINTS, distinct=False)
    r = _subset_values(x, cluster_oracle)
    total = 0.0
    for blocks in set_partitions(x.size):
        term = 1.0
        for blk in blocks:
            term *= r[_mask(blk)]
        total += term
    return total


# -- cumulants ---------------------------------------------------------------------

@lru_cache(maxsize=None)
def stirling2(n: int, k: int) -> int:
    """Stirling numbers of the second kind, exact integers."""
    if n == k:
        return 1
    if k == 0 or k > n:
        return 0
    return k * stirling2(n - 1, k) + stirling2(n - 1, k - 1)


def cumulants_from_cluster_integrals(V: Sequence, n_max: int) -> list:
    """Cumulants C_1..C_n_max of the count from integrated cluster functions.

    From sum_n C_n z^n/n! = sum_j V_j (e^z - 1)^j / j!, which gives
    C_n = sum_j S(n, j) V_j.  Integer/Fraction inputs stay exact.
    """
    if n_max > MAX_CUMULANT_ORDER:
        raise TooLarge(f"n_max={n_max} exceeds {MAX_CUMULANT_ORDER}")
    if n_max > len(V):
        raise ValueError("need at least n_max cluster integrals")
    return [sum(stirling2(n, j) * V[j - 1] for j in range(1, n + 1))
            for n in range(1, n_max + 1)]


# -- truncated correlation for two groups -------------------------------------------

def truncated_pair_correlation(x1: float, x2: float, y1: float, y2: float, zs,
                               kernel: TranslationKernel, s_tilde: float) -> float:
    """K[x1,y1,x2,y2,z..] - K[x1,y1,z in group 1] * K[x2,y2,z in group 2].

    Each z must lie in exactly one of [x1, x1+s_tilde] and [x2, x2+s_tilde].
    """
    zs = [float(z) for z in np.atleast_1d(np.asarray(zs, dtype=float))]
    if 4 + len(zs) > MAX_POINTS:
        raise TooLarge(f"{4 + len(zs)} points exceeds the limit of {MAX_POINTS}")
    g1, g2 = [], []
    for z in zs:
        in1 = x1 <= z <= x1 + s_tilde
        in2 = x2 <= z <= x2 + s_tilde
        if in1 == in2:
            raise PartitionAmbiguity(f"z={z} lies in {'both' if in1 else 'neither'} interval")
        (g1 if in1 else g2).append(z)
    full = _det(gram_matrix([x1, y1, x2, y2, *zs], kernel))
    left = _det(gram_matrix([x1, y1, *g1], kernel))
    right = _det(gram_matrix([x2, y2, *g2], kernel))
    return full - left * right


# -- determinant inequalities --------------------------------------------------------

@dataclass(frozen=True)
class FischerResult:
    holds: bool
    det_m: float
    det_a_det_c: float


def _check_psd(m, name, tol=1e-10):
    ev = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    if ev.min() < -tol * max(1.0, abs(ev).max()):
        raise NotPSD(f"{name} has eigenvalue {ev.min():.3g}")


def fischer_check(A, C, B) -> FischerResult:
    """Fischer's inequality det [[A, B], [B*, C]] <= det A det C for PSD blocks."""
    A = np.atleast_2d(np.asarray(A))
    C = np.atleast_2d(np.asarray(C))
    B = np.asarray(B).reshape(A.shape[0], C.shape[0])
    M = np.block([[A, B], [B.conj().T, C]])
    _check_psd(M, "block matrix")
    det_m = float(np.real(np.linalg.det(M)))
    det_ac = float(np.real(np.linalg.det(A) * np.linalg.det(C)))
    scale = max(1.0, abs(det_ac), float(np.prod(np.abs(np.diag(M)))))
    return FischerResult(det_m <= det_ac + DET_TOL * scale, det_m, det_ac)


def hadamard_check(points, kernel: TranslationKernel) -> bool:
    """det K[x_1..x_k] <= g(0)^k."""
    x = _as_points(points)
    return correlation(x, kernel) <= kernel.g0 ** x.size + DET_TOL
