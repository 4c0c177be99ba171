import math
from pathlib import Path

import pytest

from app.core.config import RunConfig, dump_config, load_config, parse_config
from app.core.errors import ConfigError
from app.core.settings import DEFAULT_EPSILONS, TOLERANCES

SAMPLE = """
# a small run
geometry.L = 3.5
geometry.alpha = 3.141592653589793   # half turn
discretization.N = 12
grids.epsilons = 1, 0.5, 0.25
tolerances.contour = 1e-9
seed = 7
output.dir = results
"""


def test_parse_sample():
    cfg = parse_config(SAMPLE)
    assert cfg.geometry.L == 3.5
    assert cfg.geometry.alpha == pytest.approx(math.pi)
    assert cfg.discretization.N == 12
    assert cfg.grids.epsilons == (1.0, 0.5, 0.25)
    assert cfg.tolerance("contour") == 1e-9
    assert cfg.tolerance("rectangle") == TOLERANCES["rectangle"]
    assert cfg.seed == 7
    assert cfg.output.dir == Path("results")


def test_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.grids.epsilons == DEFAULT_EPSILONS


def test_dump_reads_back_identically():
    cfg = parse_config(SAMPLE)
    assert parse_config(dump_config(cfg)) == cfg


@pytest.mark.parametrize("text", [
    "geometry.radius = 2",
    "tolerances.speed = 1",
    "geometry.L",
    "geometry.L = -1",
    "geometry.k = 3",
    "geometry.alpha = 7",
    "discretization.N = 4",
    "discretization.fiber_basis = 3",
    "discretization.max_mode = 0",
    "grids.epsilons = 0.5, 1",
    "grids.epsilons = 1",
    "grids.times = 0, 1",
    "discretization.N = eight",
    "seed = -1",
])
def test_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_with_overrides(tmp_path):
    cfg = RunConfig().with_output(tmp_path).with_seed(3)
    assert cfg.output.dir == tmp_path
    assert cfg.seed == 3


def test_load_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(SAMPLE, encoding="utf-8")
    assert load_config(path) == parse_config(SAMPLE)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")
