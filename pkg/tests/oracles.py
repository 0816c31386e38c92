"""Slow, independent reference implementations used only by the tests."""

import itertools
import math
from fractions import Fraction

import numpy as np
from scipy import integrate


def cofactor_det(m):
    """Laplace expansion along the first row."""
    m = [list(r) for r in m]
    n = len(m)
    if n == 0:
        return 1.0
    if n == 1:
        return m[0][0]
    total = 0.0
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        total += (-1) ** j * m[0][j] * cofactor_det(minor)
    return total


def sinc_gram(points):
    x = np.asarray(points, dtype=float)
    return np.sinc(x[None, :] - x[:, None])


def is_single_cycle(perm):
    seen, i, steps = set(), 0, 0
    while i not in seen:
        seen.add(i)
        i = perm[i]
        steps += 1
    return steps == len(perm)


def cluster_by_permutations(m):
    """(-1)^(k-1) times the sum over all k-cycles, found by brute force over S_k."""
    k = len(m)
    total = 0.0
    for perm in itertools.permutations(range(k)):
        if is_single_cycle(perm):
            total += math.prod(m[i][perm[i]] for i in range(k))
    return (-1) ** (k - 1) * total


def partitions(items):
    """All set partitions of a list, recursively."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for p in partitions(rest):
        yield [[first]] + p
        for i in range(len(p)):
            yield p[:i] + [[first] + p[i]] + p[i + 1:]


def stirling2_explicit(n, k):
    return sum((-1) ** j * math.comb(k, j) * (k - j) ** n for j in range(k + 1)) // math.factorial(k)


def cumulant_oracle(V, n):
    """Expand sum_j V_j (e^z - 1)^j / j! as a power series with exact rationals."""
    # coefficients of e^z - 1
    base = [Fraction(0)] + [Fraction(1, math.factorial(i)) for i in range(1, n + 1)]
    total = [Fraction(0)] * (n + 1)
    power = [Fraction(1)] + [Fraction(0)] * n
    for j in range(1, n + 1):
        power = [sum(power[a] * base[c - a] for a in range(c + 1)) for c in range(n + 1)]
        for c in range(n + 1):
            total[c] += Fraction(V[j - 1]) * power[c] / math.factorial(j)
    return [total[c] * math.factorial(c) for c in range(1, n + 1)]


def cosine_transform(phi, x, T):
    """g(x) = 2 int_0^T phi(t) cos(2 pi x t) dt by adaptive quadrature."""
    val, _ = integrate.quad(phi, 0.0, T, weight="cos", wvar=2 * math.pi * x, limit=400)
    return 2 * val


def pair_integral(g0, g, s):
    """int_0^s (g0^2 - g(t)^2) dt."""
    return integrate.quad(lambda t: g0**2 - g(t) ** 2, 0.0, s, epsabs=1e-15, epsrel=1e-13)[0]
