"""Tests for hellinger.py — affinities, products, sums and verdicts."""

import math

import numpy as np
import pytest

from hellinger import (
    SIMPLE_INEQUALITY_CONSTANT, TAIL_FINITE, TAIL_LINEAR, TAIL_LOGARITHMIC,
    VERDICT_DECAY, VERDICT_NON_ORTHOGONAL, VERDICT_UNDECIDED, VERDICT_ZERO_FACTOR,
    DomainError, equivalence_bound_holds, hellinger_factors, hellinger_item,
    hellinger_product, hellinger_sum, interior_support_check, midpoint_divergence_check,
    orthogonality_verdict, pairwise_scan, simple_inequality_check, tail_certificate,
)
from model import FAMILY_CONSTANT_TAIL, FAMILY_PERIODIC, Generator, LatentPoint, ModelSpec
from scenarios import random_points, scenario_random


# -- Item affinities --

def test_hellinger_item_binary_pair(binary):
    """Item 1 rows (1,0) and (0,1) share nothing; item 2 rows are identical."""
    g1, g2 = binary.grid
    assert hellinger_item(g1, g2, 1, binary.model) == 0.0
    assert hellinger_item(g1, g2, 2, binary.model) == 1.0


def test_hellinger_item_identical_points(sqrt_decay):
    g = sqrt_decay.point(0.3)
    for j in (1, 2, 9, 400):
        assert hellinger_item(g, g, j, sqrt_decay.model) == 1.0


def test_factors_in_unit_interval(sqrt_decay):
    h = hellinger_factors(sqrt_decay.point(-0.9), sqrt_decay.point(0.4), 2000, sqrt_decay.model)
    assert np.all(h >= 0.0)
    assert np.all(h <= 1.0)


# -- Products and sums --

def test_binary_pair_exact_constants(binary):
    g1, g2 = binary.grid
    assert hellinger_product(g1, g2, 1, binary.model) == 0.0
    for N in (2, 3, 10, 1000):
        assert hellinger_product(g1, g2, N, binary.model) == 0.0
        assert abs(hellinger_sum(g1, g2, N, binary.model) - 2.0) <= 1e-15


def test_identical_points_product_one_sum_zero(sqrt_decay):
    g = sqrt_decay.point(-0.2)
    assert hellinger_product(g, g, 500, sqrt_decay.model) == 1.0
    assert hellinger_sum(g, g, 500, sqrt_decay.model) == 0.0


def test_sqrt_product_positive_and_decreasing(sqrt_decay):
    g1, g2 = sqrt_decay.point(-0.5), sqrt_decay.point(0.5)
    p1000 = hellinger_product(g1, g2, 1000, sqrt_decay.model)
    p4000 = hellinger_product(g1, g2, 4000, sqrt_decay.model)
    assert 0.0 < p1000 < 1.0
    assert p4000 < p1000


def test_partial_products_and_sums_monotone(sqrt_decay):
    g1, g2 = sqrt_decay.point(-0.3), sqrt_decay.point(0.8)
    products = [hellinger_product(g1, g2, N, sqrt_decay.model) for N in (1, 5, 50, 500)]
    sums = [hellinger_sum(g1, g2, N, sqrt_decay.model) for N in (1, 5, 50, 500)]
    assert all(b <= a for a, b in zip(products, products[1:]))
    assert all(b >= a for a, b in zip(sums, sums[1:]))


@pytest.mark.parametrize("N", [10_000, 100_000, 1_000_000])
def test_sqrt_sum_grows_like_log(sqrt_decay, N):
    """H⁺_N / ln N is within 20% of (g − g′)²/4 = 1 for the pair (−1, 1)."""
    s = hellinger_sum(sqrt_decay.point(-1.0), sqrt_decay.point(1.0), N, sqrt_decay.model)
    assert s / math.log(N) == pytest.approx(1.0, rel=0.2)


def _identity_gap(g1, g2, N, model):
    h = hellinger_factors(g1, g2, N, model)
    return abs(hellinger_sum(g1, g2, N, model) - 2.0 * math.fsum(1.0 - h))


@pytest.mark.parametrize("name", ["binary", "remark", "sqrt_decay"])
def test_sum_equals_twice_affinity_deficit(request, name):
    scenario = request.getfixturevalue(name)
    points = random_points(scenario.model, 200, seed=17)
    for g1, g2 in zip(points[::2], points[1::2]):
        assert _identity_gap(g1, g2, 1000, scenario.model) <= 1e-12


@pytest.mark.parametrize("family", ["separated", "tail-constant"])
def test_sum_identity_random_families(family):
    scenario = scenario_random(family, seed=4)
    points = random_points(scenario.model, 200, seed=5)
    for g1, g2 in zip(points[::2], points[1::2]):
        assert _identity_gap(g1, g2, 1000, scenario.model) <= 1e-12


def test_swap_symmetry(sqrt_decay):
    g1, g2 = sqrt_decay.point(-0.6), sqrt_decay.point(0.1)
    m = sqrt_decay.model
    assert hellinger_product(g1, g2, 3000, m) == pytest.approx(
        hellinger_product(g2, g1, 3000, m), abs=1e-12)
    assert hellinger_sum(g1, g2, 3000, m) == pytest.approx(hellinger_sum(g2, g1, 3000, m),
                                                           abs=1e-12)


# -- Tail certificates --

def test_certificate_sqrt_rate(sqrt_decay):
    """Equal limits, different slopes: H⁺ ~ ((g − g′)²/4) ln N."""
    cert = tail_certificate(sqrt_decay.point(-1.0), sqrt_decay.point(1.0), sqrt_decay.model)
    assert cert.kind == TAIL_LOGARITHMIC
    assert cert.rate == pytest.approx(1.0)
    cert = tail_certificate(sqrt_decay.point(0.0), sqrt_decay.point(0.5), sqrt_decay.model)
    assert cert.rate == pytest.approx(0.25 / 4)


def test_certificate_coin_tail_is_finite(remark):
    cert = tail_certificate(remark.point(0.25), remark.point(0.75), remark.model)
    assert cert.kind == TAIL_FINITE
    assert not cert.divergent


def test_certificate_distinct_constant_tails():
    gen = Generator(FAMILY_CONSTANT_TAIL, {"tail": [[0.9, 0.1], [0.1, 0.9]]})
    model = ModelSpec.build([[(1.0, 0.0)], [(0.0, 1.0)]], generator=gen)
    cert = tail_certificate((0.8, 0.2), (0.3, 0.7), model)
    assert cert.kind == TAIL_LINEAR
    assert cert.divergent


def test_certificate_periodic():
    model = ModelSpec.build([[(0.7, 0.3)], [(0.2, 0.8)]], generator=Generator(FAMILY_PERIODIC))
    assert tail_certificate((1.0, 0.0), (0.0, 1.0), model).kind == TAIL_LINEAR
    assert tail_certificate((0.4, 0.6), (0.4, 0.6), model).kind == TAIL_FINITE


def test_no_generator_no_certificate():
    model = ModelSpec.build([[(1.0, 0.0)], [(0.0, 1.0)]])
    assert tail_certificate((1.0, 0.0), (0.0, 1.0), model) is None


# -- Verdicts --

def test_verdict_binary_zero_factor(binary):
    report = orthogonality_verdict(*binary.grid, binary.model)
    assert report.verdict == VERDICT_ZERO_FACTOR
    assert report.zero_factor_at == 1
    assert report.orthogonal


def test_verdict_remark_interior_pair(remark):
    """P_¼ ∼ P_¾: shared coin tail, positive head product."""
    report = orthogonality_verdict(remark.point(0.25), remark.point(0.75), remark.model)
    assert report.verdict == VERDICT_NON_ORTHOGONAL
    assert report.basis["limit_product"] == pytest.approx(math.sqrt(3) / 2)
    assert report.basis["floor_threshold"] == 1e-6


def test_verdict_remark_endpoints(remark):
    report = orthogonality_verdict(remark.point(0.0), remark.point(1.0), remark.model)
    assert report.verdict == VERDICT_ZERO_FACTOR


def test_verdict_sqrt_endpoints_by_certificate(sqrt_decay):
    """The divergence certificate outranks the zero factor at item 1."""
    report = orthogonality_verdict(sqrt_decay.point(-1.0), sqrt_decay.point(1.0),
                                   sqrt_decay.model)
    assert report.verdict == VERDICT_DECAY
    assert report.zero_factor_at == 1
    assert report.basis["rule"] == "tail-certificate"
    assert report.basis["growth"] == TAIL_LOGARITHMIC
    assert report.N == 10_000
    assert not report.truncated


def test_verdict_truncated_without_generator():
    model = ModelSpec.build([[(0.6, 0.4), (0.5, 0.5)], [(0.4, 0.6), (0.5, 0.5)]])
    report = orthogonality_verdict((0.9, 0.1), (0.1, 0.9), model, N=100)
    assert report.truncated
    assert report.N == 2
    assert report.verdict == VERDICT_UNDECIDED
    assert report.basis["heuristic"]


def test_verdict_heuristic_decay():
    """With no certificate, a product below decay_threshold reads as orthogonal."""
    row1 = [(0.99, 0.01)] * 40
    row2 = [(0.01, 0.99)] * 40
    model = ModelSpec.build([row1, row2])
    report = orthogonality_verdict((1.0, 0.0), (0.0, 1.0), model, N=40)
    assert report.verdict == VERDICT_DECAY
    assert report.basis["heuristic"]


def test_verdict_rejects_bad_thresholds(binary):
    with pytest.raises(ValueError):
        orthogonality_verdict(*binary.grid, binary.model, decay_threshold=0.0)


def test_equivalence_bound(sqrt_decay):
    report = orthogonality_verdict(sqrt_decay.point(-0.5), sqrt_decay.point(0.5),
                                   sqrt_decay.model, N=5000)
    assert report.zero_factor_at is None
    assert equivalence_bound_holds(report)


def test_report_dict_omits_factors_by_default(binary):
    doc = orthogonality_verdict(*binary.grid, binary.model).to_dict()
    assert "factors" not in doc
    assert doc["verdict"] == VERDICT_ZERO_FACTOR
    assert doc["log_product_N"] is None


# -- Pairwise scans --

def test_scan_sqrt_grid_all_orthogonal(sqrt_decay):
    scan = pairwise_scan(sqrt_decay.model, sqrt_decay.grid)
    assert set(scan.off_diagonal) == {VERDICT_DECAY}
    n = len(sqrt_decay.grid)
    for i in range(n):
        assert scan.verdicts[i][i] == VERDICT_NON_ORTHOGONAL
        for j in range(n):
            assert scan.verdicts[i][j] == scan.verdicts[j][i]


def test_scan_remark_grid_all_equivalent(remark):
    scan = pairwise_scan(remark.model, remark.grid)
    assert set(scan.off_diagonal) == {VERDICT_NON_ORTHOGONAL}
    assert not scan.undecided_dominant


def test_scan_singleton(remark):
    scan = pairwise_scan(remark.model, [remark.point(0.5)])
    assert scan.verdicts == [[VERDICT_NON_ORTHOGONAL]]
    assert scan.reports == {}


def test_scan_parallel_matches_serial(sqrt_decay):
    serial = pairwise_scan(sqrt_decay.model, sqrt_decay.grid, N=1000)
    parallel = pairwise_scan(sqrt_decay.model, sqrt_decay.grid, N=1000, jobs=2)
    assert serial.verdicts == parallel.verdicts
    for key, report in serial.reports.items():
        assert parallel.reports[key].sum == report.sum


def test_scan_random_separated_all_orthogonal():
    scenario = scenario_random("separated", atoms=2, seed=8)
    scan = pairwise_scan(scenario.model, scenario.grid, N=2000)
    assert set(scan.off_diagonal) == {VERDICT_DECAY}


# -- Inequalities --

def test_simple_inequality_equality_case():
    check = simple_inequality_check(0.5, 0.5)
    assert check.lhs == 0.0
    assert check.rhs == 0.0
    assert check.holds


def test_simple_inequality_corner():
    check = simple_inequality_check(1.0, 0.0)
    assert check.lhs == pytest.approx(0.0857864, abs=1e-7)
    assert check.rhs == pytest.approx(0.5)
    assert check.holds


def test_simple_inequality_full_grid():
    grid = np.linspace(0.0, 1.0, 100)
    for a in grid:
        for b in grid:
            check = simple_inequality_check(float(a), float(b))
            assert check.rhs - check.lhs >= -1e-15


def test_simple_inequality_domain():
    with pytest.raises(DomainError):
        simple_inequality_check(1.5, 0.0)


def test_midpoint_check_sqrt(sqrt_decay):
    check = midpoint_divergence_check(sqrt_decay.point(-1.0), sqrt_decay.point(1.0),
                                      sqrt_decay.model, 10_000)
    assert check.holds


def test_midpoint_check_identical(sqrt_decay):
    g = sqrt_decay.point(0.2)
    check = midpoint_divergence_check(g, g, sqrt_decay.model, 100)
    assert check.sum_pair == 0.0
    assert check.sum_midpoint == 0.0
    assert check.holds


def test_midpoint_check_binary(binary):
    """Midpoint has β₁ = (½,½): H⁺(mid, g″) = 2(1 − √½) ≥ (3/2 − √2)·2."""
    check = midpoint_divergence_check(*binary.grid, binary.model, 10)
    assert check.sum_midpoint == pytest.approx(2 * (1 - math.sqrt(0.5)))
    assert check.bound == pytest.approx(SIMPLE_INEQUALITY_CONSTANT * 2)
    assert check.holds


@pytest.mark.parametrize("name", ["binary", "remark", "sqrt_decay"])
def test_midpoint_check_all_grid_pairs(request, name):
    scenario = request.getfixturevalue(name)
    grid = scenario.grid
    for i in range(len(grid)):
        for j in range(len(grid)):
            if i != j:
                assert midpoint_divergence_check(grid[i], grid[j], scenario.model, 10_000).holds


def test_interior_support(remark, sqrt_decay):
    assert interior_support_check(remark.point(0.0), remark.point(1.0), remark.model).holds
    assert interior_support_check(sqrt_decay.point(-1.0), sqrt_decay.point(1.0),
                                  sqrt_decay.model).holds


def test_interior_support_with_shared_zero():
    """An entry that is 0 along the whole segment is consistent."""
    model = ModelSpec.build([
        [(0.5, 0.5, 0.0)], [(0.0, 0.5, 0.5)], [(0.5, 0.0, 0.5)],
    ])
    a = LatentPoint((0.5, 1.0, -0.5))
    b = LatentPoint((-0.5, 1.0, 0.5))
    assert model.profile(a.array, 1)[0, 0] == pytest.approx(0.0, abs=1e-15)
    check = interior_support_check(a, b, model)
    assert check.holds
    assert check.mismatch is None
