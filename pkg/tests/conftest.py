import numpy as np
import pytest
from hypothesis import settings

from nsholder.forcing import ForcingSpec
from nsholder.io import TrajectoryWriter, load_trajectory
from nsholder.solver import InitialCondition, SolverConfig, run
from nsholder.spectral import Grid

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_velocity(grid: Grid, seed: int, kmax: float = 6.0) -> np.ndarray:
    """Smooth random (not divergence-free) vector field."""
    r = np.random.default_rng(seed)
    m1, m2 = grid.mode_index
    mask = (m1**2 + m2**2) <= kmax**2
    coef = (r.standard_normal((2,) + grid.spectral_shape) + 1j * r.standard_normal((2,) + grid.spectral_shape)) * mask
    from nsholder.spectral import ifft2

    return ifft2(coef, grid)


@pytest.fixture(scope="session")
def indicator_run(tmp_path_factory):
    """Small IndicatorStress run from rest, stored on disk and reloaded lazily."""
    cfg = SolverConfig(grid=Grid(64), dt=4e-3, t_end=1.0,
                       forcing=ForcingSpec("IndicatorStress", gamma=0.5, amplitude=1.0),
                       initial=InitialCondition("Zero"), output_every=5, dense_from=0.5, dense_every=1)
    path = tmp_path_factory.mktemp("indicator") / "traj"
    writer = TrajectoryWriter(path, cfg)
    traj = run(cfg, sink=writer, keep=False)
    writer.close(traj.energy_log)
    return load_trajectory(path)
