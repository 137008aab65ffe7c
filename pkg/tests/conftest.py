import numpy as np
import pytest

from cryocavity import fabry_perot as fp
from cryocavity import lockloop, mechanics
from cryocavity.timeseries import TimeSeries


@pytest.fixture
def geom():
    return fp.CavityGeometry(780e-9, 110.0, 13)


def sine(amplitude, freq, duration=1.0, dt=1e-5, phase=0.0):
    t = dt * np.arange(int(round(duration / dt)))
    return TimeSeries(dt, amplitude * np.sin(2 * np.pi * freq * t + phase))


@pytest.fixture(scope="session")
def default_run():
    """Default 10 s recipe through the isolation chain and the default lock, seed 0."""
    geometry = fp.CavityGeometry(780e-9, 110.0, 13)
    cold = mechanics.kick_train(mechanics.default_cold_plate_recipe(seed=0))
    unlocked = mechanics.IsolationChain().differential(cold)
    locked = lockloop.simulate_lock(unlocked, geometry, lockloop.LockConfig(), seed=0)
    return {"cold": cold, "unlocked": unlocked, "locked": locked.residual, "result": locked}
