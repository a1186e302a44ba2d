import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from simreach.aeb import AebSpec, oracle_cell_max
from simreach.risk import build_risk_grid
from simreach.simulator import BrakingProfile
from simreach.verifier import VerifierConfig

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

MEDIUM = BrakingProfile.preset("medium")


def medium_pair(v0: float = 30.0, d=(40.0, 50.0), r=(0.7, 2.4)) -> AebSpec:
    return AebSpec((v0, v0), (d,), (r,), (MEDIUM, MEDIUM))


@pytest.fixture(scope="session")
def sweep_v30():
    """The 10 x 17 medium/medium grid at 30 m/s with per-cell oracle maxima."""
    spec = medium_pair(30.0)
    grid = build_risk_grid(spec, 10, 17, None, None, VerifierConfig())
    oracle = np.array([[oracle_cell_max(spec.with_cell([d], [r]), 20) for r in grid.r_cells]
                       for d in grid.d_cells])
    return spec, grid, oracle
