import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dppspacing import algebra
from dppspacing.errors import DegenerateTuple, NotPSD, PartitionAmbiguity, TooLarge
from dppspacing.kernels import kernel_from_spec

from oracles import (cluster_by_permutations, cofactor_det, cumulant_oracle, partitions,
                     sinc_gram, stirling2_explicit)

SINE = kernel_from_spec("sine")
GAUSS = kernel_from_spec("gaussian")
ZERO = kernel_from_spec("zero")

distinct_points = st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=6,
                           unique=True).filter(
    lambda xs: len(xs) < 2 or np.diff(np.sort(xs)).min() > 1e-3)


def test_correlation_one_point():
    assert algebra.correlation([2.7], SINE) == pytest.approx(1.0)


@pytest.mark.parametrize("kernel", [SINE, GAUSS])
def test_correlation_two_points(kernel):
    u = 0.37
    g = kernel.g(np.array([u]))[0]
    assert algebra.correlation([0.0, u], kernel) == pytest.approx(kernel.g0**2 - g**2, abs=1e-15)


def test_correlation_three_points_cofactor():
    pts = [0.0, 0.5, 1.3]
    assert algebra.correlation(pts, SINE) == pytest.approx(cofactor_det(sinc_gram(pts)),
                                                          abs=1e-14)


@given(distinct_points)
@settings(max_examples=60, deadline=None)
def test_correlation_matches_cofactor(pts):
    want = max(cofactor_det(sinc_gram(pts)), 0.0)
    assert algebra.correlation(pts, SINE) == pytest.approx(want, abs=1e-12)


def test_correlation_limits():
    with pytest.raises(TooLarge):
        algebra.correlation(np.arange(13.0), SINE)
    with pytest.raises(DegenerateTuple):
        algebra.correlation([0.0, 0.0], SINE)


def test_hadamard():
    rng = np.random.default_rng(1)
    for _ in range(50):
        assert algebra.hadamard_check(np.sort(rng.uniform(0, 4, 5)), SINE)


def test_set_partitions_bell():
    for k, bell in enumerate([1, 1, 2, 5, 15, 52, 203, 877]):
        if k:
            assert sum(1 for _ in algebra.set_partitions(k)) == bell
            assert algebra.bell_number(k) == bell
    got = sorted(sorted(map(sorted, p)) for p in algebra.set_partitions(4))
    want = sorted(sorted(map(sorted, p)) for p in partitions(list(range(4))))
    assert got == want


def test_cyclic_permutation_count():
    for k in range(1, 7):
        perms = list(algebra.cyclic_permutations(k))
        assert len(perms) == math.factorial(k - 1)
        assert len(set(perms)) == len(perms)


def test_cluster_small_cases():
    assert algebra.cluster_cyclic([1.2], SINE) == pytest.approx(1.0)
    u = 0.8
    assert algebra.cluster_cyclic([0.0, u], SINE) == pytest.approx(-np.sinc(u) ** 2)
    rho2 = algebra.correlation([0.0, u], SINE)
    assert algebra.cluster_from_correlations([0.0, u], SINE) == pytest.approx(rho2 - 1.0)
    assert algebra.cluster_from_correlations([0.4], SINE) == pytest.approx(1.0)


def test_cluster_three_points():
    pts = [0.0, 0.5, 1.3]
    a = algebra.cluster_cyclic(pts, SINE)
    assert a == pytest.approx(algebra.cluster_from_correlations(pts, SINE), abs=1e-12)
    assert a == pytest.approx(cluster_by_permutations(sinc_gram(pts)), abs=1e-14)


def test_cluster_four_random():
    rng = np.random.default_rng(4)
    pts = np.sort(rng.uniform(0, 3, 4))
    assert algebra.cluster_cyclic(pts, SINE) == pytest.approx(
        algebra.cluster_from_correlations(pts, SINE), abs=1e-11)


@pytest.mark.parametrize("k", [7, 9, 10])
def test_cluster_cycle_sum_dp_matches_brute_force(k):
    # k >= 9 takes the subset dynamic program; k = 7 the explicit enumeration
    pts = np.linspace(0, 2.5, k) + np.random.default_rng(k).uniform(0, 0.05, k)
    got = algebra.cluster_cyclic(pts, GAUSS)
    want = algebra.cluster_from_correlations(pts, GAUSS)
    assert got == pytest.approx(want, rel=1e-8, abs=1e-12)
    if k <= 9:
        m = GAUSS.matrix(pts)
        assert got == pytest.approx(cluster_by_permutations(m), rel=1e-10, abs=1e-14)


@given(distinct_points)
@settings(max_examples=60, deadline=None)
def test_cluster_roundtrip(pts):
    rc = algebra.cluster_cyclic(pts, SINE)
    assert rc == pytest.approx(algebra.cluster_from_correlations(pts, SINE), abs=1e-10)
    back = algebra.correlations_from_clusters(pts, lambda sub: algebra.cluster_cyclic(sub, SINE))
    assert back == pytest.approx(algebra.correlation(pts, SINE), abs=1e-10)


def test_roundtrip_named_cases():
    u = 0.6
    rho2 = algebra.correlations_from_clusters(
        [0.0, u], lambda sub: algebra.cluster_cyclic(sub, SINE))
    assert rho2 == pytest.approx(1 - np.sinc(u) ** 2, abs=1e-14)
    assert algebra.correlations_from_clusters([3.0], lambda sub: 0.25) == 0.25
    pts = [0.0, 0.7, 2.1]
    rho3 = algebra.correlations_from_clusters(pts, lambda sub: algebra.cluster_cyclic(sub, SINE))
    assert rho3 == pytest.approx(algebra.correlation(pts, SINE), abs=1e-12)


def test_cluster_zero_kernel():
    assert algebra.cluster_cyclic([0.0, 1.0, 2.0], ZERO) == 0.0


def test_stirling():
    for n in range(1, 11):
        for k in range(n + 1):
            assert algebra.stirling2(n, k) == stirling2_explicit(n, k)


def test_cumulants_low_order():
    v1, v2, v3 = Fraction(3, 7), Fraction(-2, 5), Fraction(11, 13)
    assert algebra.cumulants_from_cluster_integrals([v1], 1) == [v1]
    assert algebra.cumulants_from_cluster_integrals([v1, v2], 2) == [v1, v1 + v2]
    assert algebra.cumulants_from_cluster_integrals([v1, v2, v3], 3) == \
        [v1, v1 + v2, v1 + 3 * v2 + v3]


@given(st.lists(st.fractions(min_value=-100, max_value=100, max_denominator=50),
                min_size=8, max_size=8))
@settings(max_examples=40, deadline=None)
def test_cumulants_generating_function(V):
    assert algebra.cumulants_from_cluster_integrals(V, 8) == cumulant_oracle(V, 8)


def test_cumulants_poisson_case():
    # only V_1 nonzero: Poisson counts, all cumulants equal
    assert algebra.cumulants_from_cluster_integrals([2, 0, 0, 0, 0], 5) == [2] * 5
    with pytest.raises(TooLarge):
        algebra.cumulants_from_cluster_integrals([0] * 12, 11)


def test_truncated_far_apart():
    v = algebra.truncated_pair_correlation(0.0, 50.0, 0.3, 50.3, [], SINE, 0.5)
    assert abs(v) <= 1e-2


def test_truncated_zero_kernel():
    assert algebra.truncated_pair_correlation(0.0, 5.0, 0.2, 5.1, [0.1], ZERO, 0.5) == 0.0


def test_truncated_one_z_cofactor():
    x1, y1, x2, y2, z = 0.0, 0.3, 1.5, 1.7, 0.15
    v = algebra.truncated_pair_correlation(x1, x2, y1, y2, [z], SINE, 0.4)
    full = cofactor_det(sinc_gram([x1, y1, x2, y2, z]))
    want = full - cofactor_det(sinc_gram([x1, y1, z])) * cofactor_det(sinc_gram([x2, y2]))
    assert v == pytest.approx(want, abs=1e-12)


def test_truncated_ambiguous():
    with pytest.raises(PartitionAmbiguity):
        algebra.truncated_pair_correlation(0.0, 0.2, 0.1, 0.3, [0.25], SINE, 0.4)
    with pytest.raises(PartitionAmbiguity):
        algebra.truncated_pair_correlation(0.0, 5.0, 0.1, 5.1, [3.0], SINE, 0.4)


def test_fischer_examples():
    r = algebra.fischer_check([[1.0]], [[1.0]], [[0.6]])
    assert r.holds and r.det_m == pytest.approx(1 - 0.36)
    rng = np.random.default_rng(0)
    G = rng.normal(size=(5, 5))
    M = G @ G.T
    r = algebra.fischer_check(M[:3, :3], M[3:, 3:], np.zeros((3, 2)))
    assert r.det_m == pytest.approx(r.det_a_det_c, rel=1e-12)


def test_fischer_random_draws():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        G = rng.normal(size=(5, 5))
        M = G @ G.T
        assert algebra.fischer_check(M[:3, :3], M[3:, 3:], M[:3, 3:]).holds


def test_fischer_complex_hermitian():
    rng = np.random.default_rng(3)
    G = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    M = G @ G.conj().T
    assert algebra.fischer_check(M[:2, :2], M[2:, 2:], M[:2, 2:]).holds


def test_fischer_not_psd():
    with pytest.raises(NotPSD):
        algebra.fischer_check([[1.0]], [[1.0]], [[2.0]])


def test_fischer_on_kernel_gram_blocks():
    rng = np.random.default_rng(9)
    for _ in range(200):
        left = np.sort(rng.uniform(0, 2, 3))
        right = np.sort(rng.uniform(1, 4, 2))
        pts = np.concatenate([left, right])
        M = SINE.matrix(pts)
        assert algebra.fischer_check(M[:3, :3], M[3:, 3:], M[:3, 3:]).holds
