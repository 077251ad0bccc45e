import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ksliouville.criticality import (
    CRITICAL, DEGENERATE, EIGHT_PI, INADMISSIBLE, SUB_CRITICAL,
    InteractionSpec, classify, critical_scale, drift_variance, lambda_subset,
    saturation_tolerance, subset_mask, weighted_drift_min,
)
from ksliouville.errors import DomainError

PI = np.pi


def brute_lambda(A, beta, J):
    total = 0.0
    for i in J:
        inner = 8 * PI
        for j in J:
            inner -= A[i][j] * beta[j]
        total += beta[i] * inner
    return total


def brute_class(A, beta):
    n = len(beta)
    tol = 1e-12 * max(1.0, 8 * PI * sum(beta))
    subsets = [J for k in range(1, n + 1) for J in itertools.combinations(range(n), k)]
    lam = {J: brute_lambda(A, beta, J) for J in subsets}
    snap = {J: (0.0 if abs(x) <= tol else x) for J, x in lam.items()}
    snap[()] = 0.0
    if any(x < 0 for x in snap.values()):
        return INADMISSIBLE
    for J in subsets:
        if snap[J] == 0:
            for i in J:
                rest = tuple(j for j in J if j != i)
                if A[i][i] + snap[rest] <= 0:
                    return INADMISSIBLE
    full = tuple(range(n))
    proper = [J for J in subsets if J != full]
    if all(snap[J] > 0 for J in subsets):
        return SUB_CRITICAL
    if snap[full] == 0 and all(snap[J] > 0 for J in proper):
        return CRITICAL
    return DEGENERATE


def random_spec(rng, n, scale_to_root=False):
    M = rng.uniform(0, 2, size=(n, n)) * (rng.uniform(size=(n, n)) < 0.8)
    A = np.triu(M) + np.triu(M, 1).T
    beta = rng.uniform(0.5, 15, size=n)
    if scale_to_root and beta @ A @ beta > 0:
        beta = beta * 8 * PI * beta.sum() / (beta @ A @ beta)
    return InteractionSpec(A, beta)


class TestLambda:
    def test_single_species_critical_mass(self):
        for a in (0.5, 1.0, 3.0):
            spec = InteractionSpec([[a]], [8 * PI / a])
            assert abs(lambda_subset(spec, [0])) <= 1e-12 * 8 * PI * spec.beta[0]

    def test_zero_interaction(self):
        spec = InteractionSpec(np.zeros((2, 2)), [1.0, 1.0])
        assert lambda_subset(spec, [0, 1]) == pytest.approx(16 * PI, rel=1e-15)

    def test_unit_pair(self):
        spec = InteractionSpec(np.ones((2, 2)), [4 * PI, 4 * PI])
        assert lambda_subset(spec, [0]) == pytest.approx(16 * PI ** 2, rel=1e-14)
        assert lambda_subset(spec, [1]) == pytest.approx(16 * PI ** 2, rel=1e-14)
        assert abs(lambda_subset(spec, [0, 1])) < 1e-12

    def test_empty_subset_refused(self):
        spec = InteractionSpec(np.ones((2, 2)), [1.0, 1.0])
        with pytest.raises(DomainError):
            lambda_subset(spec, [])
        with pytest.raises(DomainError):
            lambda_subset(spec, [2])

    def test_bitmask_and_indices_agree(self):
        spec = InteractionSpec(np.ones((3, 3)), [1.0, 2.0, 3.0])
        assert lambda_subset(spec, 0b101) == lambda_subset(spec, [2, 0])
        assert subset_mask([0, 2], 3) == 0b101

    def test_relabeling_invariance(self, rng):
        for _ in range(20):
            spec = random_spec(rng, 4)
            p = rng.permutation(4)
            perm = InteractionSpec(spec.A[np.ix_(p, p)], spec.beta[p])
            inv = np.argsort(p)
            for k in range(1, 5):
                for J in itertools.combinations(range(4), k):
                    a = lambda_subset(spec, J)
                    b = lambda_subset(perm, [inv[j] for j in J])
                    assert a == pytest.approx(b, rel=1e-12, abs=1e-9)


class TestClassify:
    @pytest.mark.parametrize("A,beta,expected", [
        ([[1.0]], [4 * PI], SUB_CRITICAL),
        ([[1.0]], [8 * PI], CRITICAL),
        ([[1.0]], [9 * PI], INADMISSIBLE),
        (np.ones((2, 2)), [4 * PI, 4 * PI], CRITICAL),
        (np.zeros((2, 2)), [100.0, 100.0], SUB_CRITICAL),
    ])
    def test_examples(self, A, beta, expected):
        assert classify(InteractionSpec(A, beta)).cls == expected

    def test_table_size_and_witnesses(self):
        v = classify(InteractionSpec(np.ones((2, 2)), [4 * PI, 4 * PI]))
        assert len(v.lambda_table) == 3
        assert v.witnesses == (0b11,)
        bad = classify(InteractionSpec([[1.0]], [9 * PI]))
        assert bad.witnesses == (0b1,) and not bad.is_admissible

    def test_degenerate_admissible(self):
        # species 0 alone saturated, the full set strictly positive
        A = np.array([[1.0, 0.0], [0.0, 0.0]])
        v = classify(InteractionSpec(A, [8 * PI, 1.0]))
        assert v.cls == DEGENERATE
        assert 0b01 in v.witnesses

    def test_cross_coupled_pair_at_root(self):
        # no self-interaction: the saturated pair is admissible through
        # a_ii + Lambda_{j} = 0 + 64 pi^2 > 0
        A = np.array([[0.0, 1.0], [1.0, 0.0]])
        b = 8 * PI
        v = classify(InteractionSpec(A, [b, b]))
        assert v.cls == CRITICAL

    def test_refuses_large_n(self):
        with pytest.raises(DomainError):
            classify(InteractionSpec(np.zeros((21, 21)), np.ones(21)))

    def test_matches_brute_force(self, rng):
        for k in range(200):
            n = int(rng.integers(1, 5))
            spec = random_spec(rng, n, scale_to_root=(k % 3 == 0))
            v = classify(spec)
            assert v.cls == brute_class(spec.A.tolist(), spec.beta.tolist())
            for mask, val in v.lambda_table.items():
                J = [i for i in range(n) if mask >> i & 1]
                ref = brute_lambda(spec.A.tolist(), spec.beta.tolist(), J)
                assert abs(val - ref) <= 1e-12 * max(1.0, abs(ref), 8 * PI * spec.beta.sum())

    def test_mass_sweep_transitions(self, rng):
        A = rng.uniform(0.2, 2, size=(3, 3))
        A = np.triu(A) + np.triu(A, 1).T
        beta0 = rng.uniform(1, 3, size=3)
        t_root = 8 * PI * beta0.sum() / (beta0 @ A @ beta0)
        t_star = critical_scale(A, beta0)
        # strictly positive couplings: a proper subset may saturate first
        assert t_star <= t_root * (1 + 1e-9)
        assert classify(InteractionSpec(A, 0.5 * t_star * beta0)).cls == SUB_CRITICAL
        assert classify(InteractionSpec(A, 2.0 * t_star * beta0)).cls == INADMISSIBLE

    def test_critical_scale_single_species(self):
        t = critical_scale([[1.0]], [1.0])
        assert abs(t - 8 * PI) <= 1e-9 * 8 * PI


def test_saturation_tolerance_floor():
    assert saturation_tolerance([1e-20]) == 1e-12
    assert saturation_tolerance([1.0, 1.0]) == pytest.approx(1e-12 * 16 * PI)


class TestDrifts:
    def test_coincident(self):
        p = (1.5, -2.0)
        val, c = drift_variance([p, p, p])
        assert val == 0 and np.allclose(c, p)

    def test_pair(self):
        val, c = drift_variance([(0, 0), (3, 0)])
        assert val == pytest.approx(4.5) and np.allclose(c, (1.5, 0))

    def test_unit_triangle(self):
        pts = [(0, 0), (1, 0), (0.5, np.sqrt(3) / 2)]
        val, c = drift_variance(pts)
        assert val == pytest.approx(1.0, rel=1e-14)
        assert np.allclose(c, (0.5, np.sqrt(3) / 6))

    @given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=1, max_size=8))
    def test_identity(self, pts):
        v = np.array(pts, dtype=float)
        val, c = drift_variance(v)
        alt = np.sum(v ** 2) - len(v) * np.sum(c ** 2)
        assert val >= 0
        assert val == pytest.approx(alt, rel=1e-9, abs=1e-8 * (1 + np.sum(v ** 2)))

    def test_weighted_examples(self):
        spec = InteractionSpec(np.zeros((2, 2)), [1.0, 1.0], [(0, 0), (2, 0)])
        val, x = weighted_drift_min(spec)
        assert val == pytest.approx(1.0) and np.allclose(x, (1, 0))
        same = InteractionSpec(np.zeros((3, 3)), [1.0, 2.0, 3.0], [(1, 1)] * 3)
        assert weighted_drift_min(same)[0] == 0

    @given(st.floats(0.1, 20), st.floats(0.1, 20), st.floats(-10, 10), st.floats(-10, 10))
    def test_weighted_pair_formula(self, b1, b2, dx, dy):
        spec = InteractionSpec(np.zeros((2, 2)), [b1, b2], [(0, 0), (dx, dy)])
        val, _ = weighted_drift_min(spec)
        expect = b1 * b2 * (dx * dx + dy * dy) / (2 * (b1 + b2))
        assert val == pytest.approx(expect, rel=1e-10, abs=1e-12)


class TestSpecValidation:
    def test_asymmetric_rejected(self):
        with pytest.raises(DomainError):
            InteractionSpec([[1.0, 0.5], [0.5000001, 1.0]], [1.0, 1.0])

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            InteractionSpec([[1.0, -0.1], [-0.1, 1.0]], [1.0, 1.0])
        with pytest.raises(DomainError):
            InteractionSpec([[1.0]], [0.0])

    def test_immutable(self):
        spec = InteractionSpec([[1.0]], [1.0])
        with pytest.raises(ValueError):
            spec.beta[0] = 2.0
