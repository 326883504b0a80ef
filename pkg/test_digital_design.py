import logging

import numpy as np
import pytest

from models.beamformer import AnalogBeamformer, HybridBeamformer
from models.errors import ConfigurationError, DimensionMismatch, SingularSystem
from models.system import SystemConfig
from services.analog_design import multiuser_analog
from services.array_channel import data_channel_matrix, draw_scenario
from services.digital_design import (
    analog_mmse_hybrid,
    analog_mmse_projection,
    effective_channel,
    equal_gain_beamformer,
    equal_gain_hybrid,
    fully_digital_mmse,
    kronecker_hybrid,
    mmse_digital,
)
from services.metrics import sinr

logger = logging.getLogger(__name__)


def test_mmse_digital_matches_explicit_solve():
    config = SystemConfig.uniform(32, k=3, m=2, l=2, user_power=[1.0, 2.0, 0.5], noise_var=0.3)
    scenario = draw_scenario(config, np.random.default_rng(3))
    analog = multiuser_analog(scenario)
    f = analog.matrix
    g_eff = f.conj().T @ data_channel_matrix(scenario)
    lhs = g_eff @ np.diag([1.0, 2.0, 0.5]) @ g_eff.conj().T + 0.3 * f.conj().T @ f
    np.testing.assert_allclose(mmse_digital(analog, scenario), np.linalg.solve(lhs, g_eff),
                               rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(effective_channel(analog, scenario), g_eff)


def test_single_user_sinr_ignores_digital_scaling(rng):
    """With K = 1 the digital stage is a scalar and cannot change the SINR"""
    scenario = draw_scenario(SystemConfig.uniform(64, k=1, m=2, l=2, noise_var=0.5), rng)
    hybrid = kronecker_hybrid(multiuser_analog(scenario), scenario)
    scaled = HybridBeamformer(hybrid.analog, hybrid.digital * (2 - 3j))
    assert sinr(scaled, scenario, 0) == pytest.approx(sinr(hybrid, scenario, 0), rel=1e-12)


def test_fully_digital_is_an_upper_bound(rng):
    config = SystemConfig.uniform(32, k=2, m=2, l=2, noise_var=1.0)
    for _ in range(20):
        scenario = draw_scenario(config, rng)
        optimum = fully_digital_mmse(scenario)
        for hybrid in (kronecker_hybrid(multiuser_analog(scenario), scenario),
                       equal_gain_hybrid(scenario), analog_mmse_hybrid(scenario)):
            for k in range(2):
                assert sinr(optimum, scenario, k) >= sinr(hybrid, scenario, k) * (1 - 1e-9)


def test_hybrid_mmse_beats_identity_digital_stage(rng):
    """Interferers are nulled, so the K x K MMSE stage is optimal within the analog span"""
    config = SystemConfig.uniform(64, k=3, m=2, l=2, noise_var=0.2)
    for _ in range(10):
        scenario = draw_scenario(config, rng)
        analog = multiuser_analog(scenario)
        hybrid = kronecker_hybrid(analog, scenario)
        plain = HybridBeamformer(analog, np.eye(3))
        for k in range(3):
            assert sinr(hybrid, scenario, k) >= sinr(plain, scenario, k) * (1 - 1e-9)


def test_equal_gain_reaches_triangle_bound(rng):
    g = rng.normal(size=40) + 1j * rng.normal(size=40)
    f = equal_gain_beamformer(g)
    np.testing.assert_allclose(np.abs(f), 1.0, atol=1e-12)
    assert abs(np.vdot(f, g)) == pytest.approx(np.abs(g).sum(), rel=1e-12)


def test_phase_projections_are_unimodular(rng):
    scenario = draw_scenario(SystemConfig.uniform(16, k=2, m=1, l=2), rng)
    assert equal_gain_hybrid(scenario).analog.is_unimodular()
    projected = analog_mmse_projection(fully_digital_mmse(scenario))
    np.testing.assert_allclose(np.abs(projected), 1.0, atol=1e-12)
    assert analog_mmse_hybrid(scenario).combiner.shape == (16, 2)
    np.testing.assert_array_equal(analog_mmse_projection(np.zeros(3)), np.ones(3))


def test_singular_digital_system(scenario_factory):
    scenario = scenario_factory(8, [[(0.0, 0.4)], [(0.0, 1.9)]], noise_var=0.0)
    analog = multiuser_analog(scenario)
    with pytest.raises(SingularSystem):
        mmse_digital(analog, scenario)


def test_fully_digital_needs_noise(scenario_factory):
    scenario = scenario_factory(8, [[(1.0, 0.4)]], noise_var=0.0)
    with pytest.raises(ConfigurationError):
        fully_digital_mmse(scenario)


def test_analog_size_must_match_array(scenario_factory):
    scenario = scenario_factory(8, [[(1.0, 0.4)]])
    with pytest.raises(DimensionMismatch):
        effective_channel(AnalogBeamformer.from_matrix(np.ones((4, 1))), scenario)
    with pytest.raises(DimensionMismatch):
        mmse_digital(multiuser_analog(scenario), scenario, powers=[1.0, 1.0])
