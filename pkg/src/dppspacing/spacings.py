"""Nearest-spacing statistics, the s-modified configuration and goodness-of-fit tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import InsufficientTrials, QuadratureFailure
from .fredholm import gauss_legendre
from .kernels import TranslationKernel
from .sampler import Configuration

MIN_GOF_SAMPLES = 1000


@dataclass(frozen=True)
class SpacingSet:
    spacings: np.ndarray
    L: float
    too_few_points: bool = False

    def __len__(self):
        return self.spacings.size


@dataclass(frozen=True)
class ModifiedConfig:
    kept_points: np.ndarray
    s: float
    n1: int
    n2: int


@dataclass
class GofReport:
    statistic: str
    value: float
    n: int
    params: dict
    pvalue: Optional[float] = None
    dof: Optional[int] = None
    details: dict = field(default_factory=dict)


def spacings(config: Configuration) -> SpacingSet:
    """theta_i = x_{i+1} - x_i; flagged (and empty) when there are fewer than two points."""
    pts = config.points
    if pts.size < 2:
        return SpacingSet(np.empty(0), config.L, too_few_points=True)
    return SpacingSet(np.diff(pts), config.L)


def rescaled_threshold(s: float, L: float) -> float:
    return s * L ** (-1.0 / 3.0)


def count_below(spacing_set: SpacingSet, s: float, L: Optional[float] = None) -> int:
    """Number of spacings strictly below s L^(-1/3)."""
    L = spacing_set.L if L is None else L
    return int(np.count_nonzero(spacing_set.spacings < rescaled_threshold(s, L)))


def min_spacing_rescaled(config: Configuration) -> float:
    """L^(1/3) * min theta_i, or +inf with fewer than two points."""
    sp = spacings(config)
    if sp.too_few_points:
        return math.inf
    return config.L ** (1.0 / 3.0) * float(sp.spacings.min())


def s_modify(config: Configuration, s: float) -> ModifiedConfig:
    """Keep x_i with x_{i+1} - x_i <= s and x_{i+2} - x_i > s.

    A missing x_{i+2} counts as +inf, so the second-to-last point is kept
    whenever its gap is <= s; the last point is never kept.  ``n2`` counts
    points with two or more right neighbours within s.
    """
    x = config.points
    n = x.size
    if n < 2:
        return ModifiedConfig(np.empty(0), s, 0, 0)
    near = np.diff(x) <= s  # one right neighbour within s
    second = np.zeros(n - 1, dtype=bool)
    if n > 2:
        second[:-1] = (x[2:] - x[:-2]) <= s
    keep = near & ~second
    return ModifiedConfig(x[:-1][keep], s, int(keep.sum()), int((near & second).sum()))


def en2_bound(kernel: TranslationKernel, L: float, s_tilde: float, order: int = 16) -> float:
    """L * int_{[0,s]^2} rho_3(0, y1, y2) dy1 dy2, an upper bound on E N_2(L)."""
    if not 0 < s_tilde < 1:
        raise ValueError("s_tilde must lie in (0, 1)")
    if kernel.g0 == 0:
        return 0.0
    coarse = _rho3_integral(kernel, s_tilde, order)
    fine = _rho3_integral(kernel, s_tilde, 2 * order)
    if abs(coarse - fine) > 1e-8 * abs(fine) + 1e-300:
        raise QuadratureFailure(f"rho_3 integral unstable: {coarse} vs {fine}")
    return L * fine


def _rho3_integral(kernel, s_tilde, order):
    y, w = gauss_legendre(0.0, s_tilde, order)
    y1, y2 = np.meshgrid(y, y, indexing="ij")
    pts = np.stack([np.zeros_like(y1), y1, y2], axis=-1).reshape(-1, 3)
    dets = np.linalg.det(kernel.g(pts[:, None, :] - pts[:, :, None]))
    return float(np.outer(w, w).ravel() @ dets)


def scaling_exponent(fn, s: float) -> float:
    """log2(fn(s) / fn(s/2))."""
    return math.log2(fn(s) / fn(s / 2))


def poisson_gof(counts: Sequence[int], mean: float, ddof: int = 0,
                min_expected: float = 5.0) -> GofReport:
    """Chi-square test of count data against Poisson(mean).

    Cells are pooled from the left (and the upper tail merged) so every
    expected cell count is at least ``min_expected``.  Use ``ddof=1`` when
    ``mean`` was estimated from the same counts.
    """
    counts = np.asarray(counts, dtype=int)
    n = counts.size
    if n < MIN_GOF_SAMPLES:
        raise InsufficientTrials(f"{n} counts < {MIN_GOF_SAMPLES}")
    kmax = max(int(counts.max()), int(mean + 10 * math.sqrt(mean) + 10))
    ks = np.arange(kmax + 1)
    probs = stats.poisson.pmf(ks, mean)
    probs[-1] += stats.poisson.sf(kmax, mean)
    observed = np.bincount(counts, minlength=kmax + 1)[: kmax + 1].astype(float)
    expected = n * probs

    cells_o, cells_e = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            cells_o.append(acc_o)
            cells_e.append(acc_e)
            acc_o = acc_e = 0.0
    if cells_e:
        cells_o[-1] += acc_o
        cells_e[-1] += acc_e
    else:
        cells_o, cells_e = [acc_o], [acc_e]
    if len(cells_e) > 1 and cells_e[-1] < min_expected:
        cells_o[-2] += cells_o.pop()
        cells_e[-2] += cells_e.pop()
    o = np.array(cells_o)
    e = np.array(cells_e)
    chi2 = float(((o - e) ** 2 / e).sum())
    dof = len(cells_e) - 1 - ddof
    pvalue = float(stats.chi2.sf(chi2, dof)) if dof > 0 else math.nan
    return GofReport("chi2_poisson", chi2, n, {"mean": float(mean)}, pvalue=pvalue, dof=dof,
                     details={"observed": o.tolist(), "expected": e.tolist()})


def weibull_survival(s, alpha: float):
    return np.exp(-alpha * np.asarray(s, dtype=float) ** 3)


def survival_vs_weibull(etas: Sequence[float], alpha: float, s_grid: Sequence[float]
                        ) -> GofReport:
    """Sup distance on ``s_grid`` between the empirical P(eta > s) and exp(-alpha s^3).

    Infinite etas (configurations with fewer than two points) count as
    survivors; at least 1000 finite values are required.
    """
    etas = np.asarray(etas, dtype=float)
    finite = int(np.isfinite(etas).sum())
    if finite < MIN_GOF_SAMPLES:
        raise InsufficientTrials(f"{finite} finite eta values < {MIN_GOF_SAMPLES}")
    grid = np.asarray(s_grid, dtype=float)
    empirical = (etas[None, :] > grid[:, None]).mean(axis=1)
    target = weibull_survival(grid, alpha)
    dev = empirical - target
    return GofReport("sup_survival_distance", float(np.abs(dev).max()), etas.size,
                     {"alpha": float(alpha)},
                     details={"s_grid": grid.tolist(), "empirical": empirical.tolist(),
                              "target": target.tolist(), "deviation": dev.tolist()})
