import math

import pytest

from app.core.config import DiscretizationConfig, RunConfig, SweepGrid
from app.services.adiabatic_lab import Geometry


@pytest.fixture
def small_geometry():
    # 8 nodes x 25 fiber states: dimension 400
    return Geometry(L=2 * math.pi, k=2, tau=1.0, N=8, fiber_basis=4, max_mode=200, cutoff=8)


@pytest.fixture
def small_config(tmp_path):
    cfg = RunConfig(
        discretization=DiscretizationConfig(N=8, fiber_basis=4, max_mode=200, cutoff=8),
        grids=SweepGrid(epsilons=(1.0, 0.5, 0.25), times=(0.3, 1.0), Ts=(1.0, 2.0, 4.0), sigmas=(0.1, 0.5)),
    )
    return cfg.with_output(tmp_path / "out")
