import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from models.system import Scenario, SystemConfig  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20170823)


def make_scenario(n, data, interference=(), k_power=1.0, i_power=1.0, noise_var=1.0, z=1):
    """Scenario from explicit paths: data is a list (one per user) of (gain, angle) lists"""
    k, l = len(data), len(data[0])
    config = SystemConfig.uniform(n, k=k, m=len(interference), l=l, z=z, user_power=k_power,
                                  interferer_power=i_power, noise_var=noise_var)
    return Scenario(
        config=config,
        data_gains=np.array([[g for g, _ in paths] for paths in data], dtype=complex),
        data_angles=np.array([[a for _, a in paths] for paths in data], dtype=float),
        interf_gains=np.array([g for g, _ in interference], dtype=complex).reshape(-1),
        interf_angles=np.array([a for _, a in interference], dtype=float).reshape(-1),
    )


@pytest.fixture
def scenario_factory():
    return make_scenario
