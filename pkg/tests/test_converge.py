"""Tests for converge.py — W1 and energy distances, curves and verdicts."""

import math

import numpy as np
import pytest

from converge import (
    DECAY_FACTOR, METRIC_ENERGY, METRIC_WASSERSTEIN, VERDICT_CONVERGING, VERDICT_PLATEAU,
    VERDICT_UNDECIDED, classify_curve, convergence_curve, discretization_error, distance,
    distance_seed, energy_distance, project, wasserstein1_1d,
)
from measure import MixingMeasure, uniform_segment_quadrature
from model import ModelSpec
from posterior import EmpiricalMeasureQ
from scenarios import REMARK_FLOOR
from workers import derive_seed, make_rng

GRID = [10, 50, 200, 400]


def _unit(values, weights=None):
    """Empirical measure of scalar values embedded as (s, 1 − s)."""
    s = np.asarray(values, dtype=float)
    return EmpiricalMeasureQ(np.column_stack([s, 1.0 - s]), weights)


def _random_cloud(rng, size, K=3):
    pts = rng.dirichlet(np.ones(K), size=size)
    pts[:, -1] = 1.0 - pts[:, :-1].sum(axis=1)
    return EmpiricalMeasureQ(pts, rng.dirichlet(np.ones(size)))


# -- Wasserstein --

def test_w1_identical_is_zero(sqrt_decay):
    assert wasserstein1_1d(sqrt_decay.mixing, sqrt_decay.mixing, [1.0, -1.0]) == 0.0


def test_w1_between_diracs():
    assert wasserstein1_1d(_unit([1 / 3]), _unit([2 / 3])) == pytest.approx(1 / 3, abs=1e-15)


def test_w1_two_points_against_uniform(remark):
    """½δ_{1/3} + ½δ_{2/3} against the uniform law on [0, 1] is 5/36."""
    fine = uniform_segment_quadrature(remark.model, (0.0, 1.0), (1.0, 0.0), 10_000)
    assert wasserstein1_1d(_unit([1 / 3, 2 / 3]), fine) == pytest.approx(REMARK_FLOOR, abs=1e-3)


def test_w1_direction_projection(sqrt_decay):
    """Direction (1, −1) reads off the scalar s of a symmetric embedding."""
    a = EmpiricalMeasureQ([sqrt_decay.point(-0.5).array])
    b = EmpiricalMeasureQ([sqrt_decay.point(0.5).array])
    assert wasserstein1_1d(a, b, [1.0, -1.0]) == pytest.approx(1.0, abs=1e-15)
    assert project(a, [1.0, -1.0])[0] == pytest.approx(-0.5)


def test_projection_errors():
    e = _unit([0.5])
    with pytest.raises(ValueError):
        project(e, 2)
    with pytest.raises(ValueError):
        project(e, [1.0, 0.0, 0.0])


# -- Energy distance --

def test_energy_identical_is_zero(sqrt_decay):
    assert energy_distance(sqrt_decay.mixing, sqrt_decay.mixing) == pytest.approx(0.0, abs=1e-15)


def test_energy_between_diracs():
    x, y = np.array([0.2, 0.3, 0.5]), np.array([0.6, 0.1, 0.3])
    d = energy_distance(EmpiricalMeasureQ([x]), EmpiricalMeasureQ([y]))
    assert d == pytest.approx(2 * np.linalg.norm(x - y), abs=1e-15)


def test_energy_and_w1_agree_on_shift_order():
    """Shifting a cloud further away increases both distances."""
    base = np.linspace(0.3, 0.5, 50)
    w1, energy = [], []
    for shift in (0.05, 0.1, 0.2):
        w1.append(wasserstein1_1d(_unit(base), _unit(base + shift)))
        energy.append(energy_distance(_unit(base), _unit(base + shift)))
    assert w1 == pytest.approx([0.05, 0.1, 0.2], abs=1e-12)
    assert energy[0] < energy[1] < energy[2]


def test_energy_symmetric_and_permutation_invariant():
    rng = make_rng(4)
    a, b = _random_cloud(rng, 40), _random_cloud(rng, 30)
    assert energy_distance(a, b) == pytest.approx(energy_distance(b, a), abs=1e-13)
    order = rng.permutation(a.size)
    shuffled = EmpiricalMeasureQ(a.points[order], a.weights[order])
    assert energy_distance(shuffled, b) == pytest.approx(energy_distance(a, b), abs=1e-13)


@pytest.mark.parametrize("seed", range(5))
def test_root_energy_triangle_inequality(seed):
    rng = make_rng(seed)
    a, b, c = (_random_cloud(rng, 25) for _ in range(3))
    ab = math.sqrt(energy_distance(a, b))
    bc = math.sqrt(energy_distance(b, c))
    ac = math.sqrt(energy_distance(a, c))
    assert ac <= ab + bc + 1e-12


def test_energy_subsampling_is_seeded():
    rng = make_rng(8)
    a, b = _random_cloud(rng, 300), _random_cloud(rng, 300)
    first = energy_distance(a, b, seed=3, budget=10_000)
    assert energy_distance(a, b, seed=3, budget=10_000) == first
    assert first == pytest.approx(energy_distance(a, b), abs=0.1)


def test_distance_seed_stays_off_replicate_streams():
    cell = derive_seed(3, 1, 0)
    seed = distance_seed(cell)
    replicate_keys = {derive_seed(cell, i).spawn_key for i in range(64)}
    assert seed.spawn_key not in replicate_keys
    assert seed.spawn_key[:len(cell.spawn_key)] == cell.spawn_key
    assert distance_seed(cell).spawn_key == seed.spawn_key
    assert not np.array_equal(seed.generate_state(4), derive_seed(cell, 0).generate_state(4))


def test_unknown_metric():
    with pytest.raises(ValueError, match="Unknown metric"):
        distance(_unit([0.5]), _unit([0.5]), "kolmogorov")


# -- Verdict rules --

def test_classify_all_zero():
    verdict, stats = classify_curve(GRID, [0.0] * 4, [0.0] * 4, 0.0, 0.0)
    assert verdict == VERDICT_CONVERGING
    assert stats["route"] == "noise-floor"


def test_classify_flat_floor_is_plateau():
    verdict, stats = classify_curve(GRID, [0.14] * 4, [0.001] * 4, 0.01, 0.001)
    assert verdict == VERDICT_PLATEAU
    assert stats["floor"] == pytest.approx(0.14)
    assert stats["floor_excess"] == pytest.approx(0.13)


def test_classify_decay_into_noise():
    verdict, stats = classify_curve(GRID, [0.4, 0.1, 0.0105, 0.0100], [0.001] * 4, 0.01, 0.001)
    assert verdict == VERDICT_CONVERGING
    assert stats["route"] == "decay-factor"


def test_classify_downward_trend():
    verdict, stats = classify_curve(GRID, [0.45, 0.40, 0.35, 0.32], [0.003] * 4, 0.015, 0.001)
    assert verdict == VERDICT_CONVERGING
    assert stats["route"] == "trend"
    assert stats["slope_log_n"] < 0
    assert stats["trend_t"] > 5


def test_classify_noisy_flat_is_undecided():
    verdict, stats = classify_curve(GRID, [0.2, 0.19, 0.21, 0.2], [0.06] * 4, 0.01, 0.001)
    assert verdict == VERDICT_UNDECIDED
    assert stats["route"] is None
    assert stats["thresholds"]["trend_t"] == 5.0


# -- Convergence curves --

def test_sqrt_decay_curve_converges(sqrt_decay):
    curve = convergence_curve(sqrt_decay.model, sqrt_decay.mixing, sqrt_decay.mixing,
                              GRID, 2000, 10, METRIC_WASSERSTEIN, seed=0,
                              projection=sqrt_decay.projection, scenario=sqrt_decay.id)
    assert curve.verdict == VERDICT_CONVERGING
    # W1 shrinks slowly here; the drop is well short of the decay factor
    assert curve.stats["route"] == "trend"
    assert curve.means[-1] < curve.means[0]
    assert curve.means[-1] > curve.means[0] / DECAY_FACTOR
    assert curve.distances.shape == (4, 10)
    assert [r.n for r in curve.rows] == GRID


def test_remark_curve_plateaus_at_floor(remark):
    curve = convergence_curve(remark.model, remark.mixing, remark.reference,
                              [10, 50, 200], 1000, 8, METRIC_WASSERSTEIN, seed=1,
                              projection=remark.projection)
    assert curve.verdict == VERDICT_PLATEAU
    assert curve.stats["floor"] == pytest.approx(REMARK_FLOOR, rel=0.15)
    spread = np.abs(curve.means - curve.means.mean()).max()
    assert spread <= 8 * curve.stderrs.max()


def test_dirac_curve_is_zero(sqrt_decay):
    mu = MixingMeasure.dirac(sqrt_decay.point(0.2), sqrt_decay.model)
    curve = convergence_curve(sqrt_decay.model, mu, mu, [5, 20], 100, 3, METRIC_ENERGY, seed=2)
    assert np.all(curve.means == 0.0)
    assert curve.verdict == VERDICT_CONVERGING
    assert curve.stats["route"] == "noise-floor"


def test_binary_curve_at_noise_level(binary):
    """One item already reveals the atom, so μ̂ₙ is as good as a sample of μ."""
    curve = convergence_curve(binary.model, binary.mixing, binary.mixing, [1, 5, 20],
                              500, 20, METRIC_WASSERSTEIN, seed=3, projection=binary.projection)
    assert curve.verdict == VERDICT_CONVERGING


def test_curve_independent_of_jobs(sqrt_decay):
    args = (sqrt_decay.model, sqrt_decay.mixing, sqrt_decay.mixing, [5, 10], 50, 3,
            METRIC_ENERGY, 11)
    serial = convergence_curve(*args, jobs=1)
    parallel = convergence_curve(*args, jobs=2)
    assert np.array_equal(serial.distances, parallel.distances)
    assert serial.to_dict() == parallel.to_dict()


def test_curve_rejects_bad_grid(sqrt_decay):
    with pytest.raises(ValueError, match="increasing"):
        convergence_curve(sqrt_decay.model, sqrt_decay.mixing, sqrt_decay.mixing,
                          [50, 10], 10, 2, METRIC_ENERGY, seed=0)


def test_curve_rejects_n_past_horizon():
    model = ModelSpec.build([[(1.0, 0.0), (0.5, 0.5)], [(0.0, 1.0), (0.5, 0.5)]])
    mu = MixingMeasure.dirac((0.5, 0.5), model)
    with pytest.raises(ValueError, match="horizon"):
        convergence_curve(model, mu, mu, [1, 3], 10, 2, METRIC_ENERGY, seed=0)


def test_discretization_error(remark, sqrt_decay):
    err = discretization_error(remark.mixing, remark.model, METRIC_WASSERSTEIN)
    assert 0.0 <= err < 1e-3
    assert discretization_error(sqrt_decay.mixing, sqrt_decay.model, METRIC_ENERGY) is None
