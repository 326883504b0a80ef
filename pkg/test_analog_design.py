import itertools
import logging
import math

import numpy as np
import pytest

from models.beamformer import FactorShape
from models.errors import DegenerateScenario, InsufficientFactors, InvalidRowIndex, TargetInNullSet
from models.system import SystemConfig
from services.analog_design import (
    adaptive_allocation,
    enhancement_factor,
    kron_analog_beamformer,
    kron_zf_beamformer,
    multiuser_analog,
    phase_of,
    nulling_factor,
)
from services.array_channel import data_channel_matrix, draw_scenario, steering_vector
from services.kron_core import mixed_product_inner, steering_factors

logger = logging.getLogger(__name__)


def test_nulling_factor_two_elements():
    theta = 1.3
    target = np.array([1, np.exp(1j * theta)])
    out = nulling_factor(target, 2, basis="hadamard")
    np.testing.assert_allclose(out, [1, -np.exp(1j * theta)])
    assert abs(np.vdot(out, target)) < 1e-12


def test_nulling_factor_unit_target_is_fourier_row():
    out = nulling_factor(np.ones(3), 2)
    np.testing.assert_allclose(out, np.exp(-2j * math.pi * np.arange(3) / 3))
    assert abs(out.sum()) < 1e-12


@pytest.mark.parametrize("basis", ["fourier", "hadamard"])
def test_nulling_factor_every_row_is_orthogonal(basis):
    rng = np.random.default_rng(5)
    for n in (4, 5):
        target = np.exp(1j * rng.uniform(0, 2 * math.pi) * np.arange(n))
        for row in range(2, n + 1):
            out = nulling_factor(target, row, basis)
            np.testing.assert_allclose(np.abs(out), 1.0, atol=1e-12)
            assert abs(np.vdot(out, target)) <= 1e-12 * n


def test_nulling_factor_row_range():
    with pytest.raises(InvalidRowIndex):
        nulling_factor(np.ones(3), 1)
    with pytest.raises(InvalidRowIndex):
        nulling_factor(np.ones(3), 4)


def test_phase_alignment():
    """g~ = [2, -3j] gives [1, -j] and combined magnitude 5"""
    g = np.array([2, -3j])
    np.testing.assert_allclose(phase_of(g), [1, -1j])
    assert abs(np.vdot(phase_of(g), g)) == pytest.approx(5.0)
    np.testing.assert_array_equal(phase_of([0.0, -2.0]), [1, -1])


def test_enhancement_factor_sums_paths():
    result = enhancement_factor([(2.0, 0.0), (0.0, 1.0)], [], FactorShape((2,)))
    np.testing.assert_allclose(result.factor, [1, 1])
    assert result.gain == pytest.approx(4.0)
    assert not result.degenerate


def test_enhancement_is_matched_beam_without_nulls():
    a, phi = 0.8 - 0.6j, 2.2
    result = enhancement_factor([(a, phi)], [], FactorShape((2, 2, 2, 2)))
    f = result.factor
    np.testing.assert_allclose(np.abs(f), 1.0, atol=1e-12)
    g = a * steering_vector(phi, 16)
    assert abs(np.vdot(f, g)) == pytest.approx(16 * abs(a), rel=1e-12)


def test_enhancement_triangle_equality_and_grid_optimality():
    """Construction beats a 64-level exhaustive search of the length-4 tail"""
    rng = np.random.default_rng(8)
    shape = FactorShape((2, 2, 2, 2))
    levels = np.exp(2j * math.pi * np.arange(64) / 64)
    for _ in range(5):
        thetas = rng.uniform(0, 2 * math.pi, 2)
        grouped = shape.grouped(2)
        nulls = [nulling_factor(steering_factors(t, grouped)[m], 2) for m, t in enumerate(thetas)]
        paths = [(complex(*rng.normal(size=2)), a) for a in rng.uniform(0, 2 * math.pi, 2)]
        result = enhancement_factor(paths, nulls, shape)
        g_eff = result.effective_channel
        assert result.gain == pytest.approx(np.abs(g_eff).sum(), rel=1e-10)

        grid = np.array([(1.0,) + combo for combo in itertools.product(levels, repeat=3)])
        best = np.max(np.abs(grid.conj() @ g_eff))
        assert best <= result.gain * (1 + 1e-12)
        assert best >= result.gain * math.cos(math.pi / 64)


def test_single_path_without_interference_is_matched():
    config = SystemConfig.uniform(16, k=1, m=0, l=1)
    rng = np.random.default_rng(1)
    scenario = draw_scenario(config, rng)
    beam = kron_analog_beamformer(scenario, 0)
    g = data_channel_matrix(scenario)[:, 0]
    assert abs(np.vdot(beam.weights, g)) == pytest.approx(16 * abs(scenario.data_gains[0, 0]))


def test_hand_built_scenario_nulls_and_mixed_product(scenario_factory):
    """N=8, two nulls: residuals vanish and the gain matches the factor-wise product"""
    scenario = scenario_factory(8, [[(1.0 + 0.5j, 0.9)]], [(1.0, 2.0), (0.7j, 4.4)])
    beam = kron_analog_beamformer(scenario, 0)
    for theta in scenario.interf_angles:
        assert abs(np.vdot(beam.weights, steering_vector(theta, 8))) < 1e-12
    grouped = FactorShape((2, 2, 2)).grouped(2)
    v = steering_factors(0.9, grouped)
    expected = abs((1.0 + 0.5j) * mixed_product_inner(beam.factors, v))
    g = data_channel_matrix(scenario)[:, 0]
    assert abs(np.vdot(beam.weights, g)) == pytest.approx(expected, rel=1e-9)
    assert beam.assignment.pairs == {0: 0, 1: 1}
    assert beam.assignment.enhancement_factors == [2]


def test_random_scenarios_null_every_interferer():
    config = SystemConfig.uniform(128, k=4, m=2, l=2)
    rng = np.random.default_rng(20)
    for _ in range(200):
        scenario = draw_scenario(config, rng)
        analog = multiuser_analog(scenario)
        assert analog.is_unimodular(1e-12)
        f = analog.matrix
        for theta in scenario.interf_angles:
            assert np.max(np.abs(f.conj().T @ steering_vector(theta, 128))) / 128 <= 1e-9


def test_all_factors_used_for_nulls(scenario_factory):
    """D = M leaves a length-1 enhancement factor"""
    scenario = scenario_factory(4, [[(1.0, 0.3)]], [(1.0, 1.5), (1.0, 2.5)])
    beam = kron_analog_beamformer(scenario, 0)
    assert beam.factors.lengths == (2, 2, 1)
    assert abs(beam.factors[2][0]) == pytest.approx(1.0)
    assert not beam.degenerate


def test_too_many_interferers(scenario_factory):
    scenario = scenario_factory(97, [[(1.0, 0.3)]], [(1.0, 1.5), (1.0, 2.5)])
    with pytest.raises(InsufficientFactors, match="composite"):
        kron_analog_beamformer(scenario, 0)


def test_exact_collision_is_degenerate(scenario_factory):
    scenario = scenario_factory(8, [[(1.0, 0.3)]], [(1.0, 0.3)])
    with pytest.raises(DegenerateScenario):
        kron_analog_beamformer(scenario, 0)


def test_annihilated_data_flags_degenerate(scenario_factory):
    """A data path aliased onto the nulled factor leaves nothing to enhance"""
    # the stride-2 factor cannot tell 0.3 from 0.3 + pi
    scenario = scenario_factory(4, [[(1.0, 0.3 + math.pi)]], [(1.0, 1.0), (1.0, 0.3)])
    beam = kron_analog_beamformer(scenario, 0)
    assert beam.degenerate
    np.testing.assert_allclose(beam.factors[-1], [1.0])


def test_multiuser_columns(scenario_factory):
    single = scenario_factory(16, [[(1.0, 0.3), (0.5, 1.7)]], [(1.0, 2.9)])
    assert np.allclose(multiuser_analog(single).matrix[:, 0], kron_analog_beamformer(single, 0).weights)
    twins = scenario_factory(16, [[(1.0, 0.3)], [(1.0, 0.3)]], [(1.0, 2.9)])
    matrix = multiuser_analog(twins).matrix
    np.testing.assert_array_equal(matrix[:, 0], matrix[:, 1])


def test_assignment_search_never_loses(scenario_factory):
    scenario = scenario_factory(16, [[(1.0, 0.4), (0.8j, 2.5)]], [(1.0, 1.2), (1.0, 3.9), (1.0, 5.0)])
    default = kron_analog_beamformer(scenario, 0)
    searched = kron_analog_beamformer(scenario, 0, search_assignment=True)
    assert searched.enhancement_gain >= default.enhancement_gain - 1e-12
    for theta in scenario.interf_angles:
        assert abs(np.vdot(searched.weights, steering_vector(theta, 16))) < 1e-9 * 16


def test_zf_closed_form_one_null():
    n, phi, theta = 64, 1.0, 1.2
    f = kron_zf_beamformer(phi, [theta], n)
    response = np.vdot(f, steering_vector(phi, n))
    assert response == pytest.approx((1 - np.exp(1j * (phi - theta))) / 2 * n, rel=1e-12)
    assert abs(np.vdot(f, steering_vector(theta, n))) < 1e-12 * n


def test_zf_without_nulls_is_matched():
    f = kron_zf_beamformer(0.8, [], 32)
    assert abs(np.vdot(f, steering_vector(0.8, 32))) == pytest.approx(32)


def test_zf_nulls_many_paths():
    nulls = [0.3, 1.1, 2.0, 4.0, 5.5]
    f = kron_zf_beamformer(3.0, nulls, 128)
    np.testing.assert_allclose(np.abs(f), 1.0, atol=1e-12)
    for theta in nulls:
        assert abs(np.vdot(f, steering_vector(theta, 128))) < 1e-9 * 128


def test_zf_errors():
    with pytest.raises(TargetInNullSet):
        kron_zf_beamformer(1.0, [1.0 + 2 * math.pi], 16)
    with pytest.raises(InsufficientFactors):
        kron_zf_beamformer(1.0, [0.1, 0.2, 0.3, 0.4, 0.5], 16)


def test_adaptive_allocation(scenario_factory):
    scenario = scenario_factory(64, [[(1.0, 0.1)]], [(0.1, 1.0), (3.0, 2.0), (1.0, 3.0)])
    assert adaptive_allocation(scenario, 0.0) == (1, 2, 0)
    assert adaptive_allocation(scenario, math.inf) == ()
    assert adaptive_allocation(scenario, 0.5) == (1, 2)
    capped = adaptive_allocation(scenario, 0.0, shape=FactorShape((2, 2, 16)))
    assert capped == (1, 2)
    beam = kron_analog_beamformer(scenario, 0, interferers=adaptive_allocation(scenario, 0.5))
    assert sorted(beam.assignment.pairs) == [1, 2]


def test_placement_search_at_n128_keeps_nulls_and_gains():
    config = SystemConfig.uniform(128, k=4, m=2, l=2)
    rng = np.random.default_rng(31)
    moved = False
    for _ in range(20):
        scenario = draw_scenario(config, rng)
        g = data_channel_matrix(scenario)
        for k in range(4):
            default = kron_analog_beamformer(scenario, k)
            searched = kron_analog_beamformer(scenario, k, search_assignment=True)
            assert searched.enhancement_gain >= default.enhancement_gain * (1 - 1e-12)
            np.testing.assert_allclose(np.abs(searched.weights), 1.0, atol=1e-12)
            assert abs(np.vdot(searched.weights, g[:, k])) == pytest.approx(
                searched.enhancement_gain, rel=1e-9)
            for theta in scenario.interf_angles:
                assert abs(np.vdot(searched.weights, steering_vector(theta, 128))) / 128 <= 1e-9
            moved = moved or max(searched.assignment.pairs.values()) >= 2
    assert moved
