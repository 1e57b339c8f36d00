"""
Shared fixtures for the ReachDiff test suite.
"""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from src.core.logging import setup_logging
from src.models.diffusion import Modality, NoiseSchedule, TrainingConfig
from src.services.controllers import generate_dataset
from src.services.diffusion import Trainer
from src.services.dynamics import get_environment

settings.register_profile(
    "reachdiff",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.function_scoped_fixture],
)
settings.load_profile("reachdiff")

TINY_TRAINING = TrainingConfig(steps=0, batch_size=4, width=8, kernel=3, embed_dim=4, seed=0)


@pytest.fixture(autouse=True)
def _log_to_current_stderr():
    """Re-point log output after tests that swap sys.stderr."""
    setup_logging()
    yield
    setup_logging()


@pytest.fixture
def di1():
    """1-D double integrator with the default horizon (16)."""
    return get_environment("double-integrator-1d")


@pytest.fixture
def di1_short():
    """1-D double integrator with horizon 5."""
    return get_environment("double-integrator-1d", horizon=5)


@pytest.fixture
def di2():
    return get_environment("double-integrator-2d")


@pytest.fixture
def unicycle():
    return get_environment("unicycle")


@pytest.fixture
def quadrotor():
    return get_environment("quadrotor-lite")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_dataset():
    """Eight lqr-goal demonstrations on a horizon-8 double integrator."""
    env = get_environment("double-integrator-1d", horizon=8)
    return env, generate_dataset(env, "lqr-goal", 8, seed=0)


@pytest.fixture
def untrained_sa(small_dataset):
    """SA checkpoint with zero optimizer steps (random network)."""
    env, dataset = small_dataset
    trainer = Trainer(env, dataset, Modality.SA, config=TINY_TRAINING, schedule=NoiseSchedule())
    return env, dataset, trainer.train()
