import logging
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, solve

from models.beamformer import AnalogBeamformer, HybridBeamformer
from models.errors import ConfigurationError, DimensionMismatch, SingularSystem
from models.system import Scenario
from services.analog_design import phase_of
from services.array_channel import data_channel_matrix, interference_channel_matrix

logger = logging.getLogger(__name__)


def _powers(scenario: Scenario, powers: Optional[Sequence[float]]) -> np.ndarray:
    p = np.asarray(scenario.config.user_power if powers is None else powers, dtype=float)
    if p.shape != (scenario.config.k,):
        raise DimensionMismatch(f"need {scenario.config.k} user powers, got {p.shape}")
    return p


def _noise(scenario: Scenario, noise_var: Optional[float]) -> float:
    return float(scenario.config.noise_var if noise_var is None else noise_var)


def effective_channel(analog: AnalogBeamformer, scenario: Scenario) -> np.ndarray:
    """G~ = F_RF^H G"""
    f_rf = analog.matrix
    if f_rf.shape[0] != scenario.config.n:
        raise DimensionMismatch(f"analog stage has {f_rf.shape[0]} rows, array has {scenario.config.n}")
    return f_rf.conj().T @ data_channel_matrix(scenario)


def _hermitian_solve(lhs: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    try:
        return solve(lhs, rhs, assume_a="her")
    except (LinAlgError, ValueError) as e:
        logger.error(f"{what} system is singular: {str(e)}")
        raise SingularSystem(f"{what} system is singular; increase the noise variance or "
                             f"check for collinear channels") from e


def mmse_digital(analog: AnalogBeamformer, scenario: Scenario,
                 powers: Optional[Sequence[float]] = None,
                 noise_var: Optional[float] = None) -> np.ndarray:
    """F_BB = (G~ D G~^H + N0 F_RF^H F_RF)^{-1} G~ with D = diag(P_1..P_K)"""
    g_eff = effective_channel(analog, scenario)
    p = _powers(scenario, powers)
    n0 = _noise(scenario, noise_var)
    f_rf = analog.matrix
    lhs = (g_eff * p) @ g_eff.conj().T + n0 * (f_rf.conj().T @ f_rf)
    return _hermitian_solve(lhs, g_eff, "digital MMSE")


def fully_digital_mmse(scenario: Scenario, powers: Optional[Sequence[float]] = None,
                       noise_var: Optional[float] = None,
                       interferer_powers: Optional[Sequence[float]] = None) -> np.ndarray:
    """Unconstrained N x K MMSE combiner (G D G^H + H D' H^H + N0 I)^{-1} G"""
    cfg = scenario.config
    g = data_channel_matrix(scenario)
    h = interference_channel_matrix(scenario)
    p = _powers(scenario, powers)
    p_i = np.asarray(cfg.interferer_power if interferer_powers is None else interferer_powers,
                     dtype=float)
    n0 = _noise(scenario, noise_var)
    if n0 <= 0:
        raise ConfigurationError("fully digital MMSE needs a positive noise variance")
    cov = (g * p) @ g.conj().T + (h * p_i) @ h.conj().T + n0 * np.eye(cfg.n)
    return _hermitian_solve(cov, g, "fully digital MMSE")


def equal_gain_beamformer(g) -> np.ndarray:
    """Phases of the array observation; |f^H g| = sum |g_i|"""
    return phase_of(np.asarray(g, dtype=complex).ravel())


def analog_mmse_projection(digital_vector) -> np.ndarray:
    """Keep only the phases of a fully digital combiner"""
    return phase_of(np.asarray(digital_vector, dtype=complex))


def kronecker_hybrid(analog: AnalogBeamformer, scenario: Scenario,
                     powers: Optional[Sequence[float]] = None,
                     noise_var: Optional[float] = None) -> HybridBeamformer:
    return HybridBeamformer(analog, mmse_digital(analog, scenario, powers, noise_var))


def equal_gain_hybrid(scenario: Scenario) -> HybridBeamformer:
    """Per-user equal-gain columns followed by the K x K MMSE stage"""
    analog = AnalogBeamformer.from_matrix(equal_gain_beamformer_matrix(scenario))
    return kronecker_hybrid(analog, scenario)


def equal_gain_beamformer_matrix(scenario: Scenario) -> np.ndarray:
    return phase_of(data_channel_matrix(scenario))


def analog_mmse_hybrid(scenario: Scenario) -> HybridBeamformer:
    """Phase-only projection of the fully digital MMSE columns, then the K x K MMSE stage"""
    analog = AnalogBeamformer.from_matrix(analog_mmse_projection(fully_digital_mmse(scenario)))
    return kronecker_hybrid(analog, scenario)
