"""
ReachDiff Correction Policy Tests
"""

import numpy as np
import pytest

from src.core.exceptions import CheckpointMismatchError, ConfigurationError
from src.models.policy import PolicyConfig
from src.models.projection import ProjectorKind, ProjectorTag
from src.models.trajectory import Dataset, Trajectory
from src.services.controllers import generate_dataset
from src.services.correction_policy import (
    CorrectionPolicy,
    load_policy,
    save_policy,
    train_correction_policy,
)
from src.services.dynamics import get_environment, is_admissible, step
from src.services.projection import project_trajectory

QUICK = PolicyConfig(width=16, steps=300, batch_size=32, seed=0)


@pytest.fixture
def policy(small_dataset):
    env, dataset = small_dataset
    return env, train_correction_policy(env, dataset, QUICK)


class TestCorrectionPolicy:
    """Tests for training, storing and applying the correction network."""

    def test_loss_decreases(self, policy):
        """Training lowers the evaluation loss."""
        _, trained = policy

        assert trained.loss_trace[-1] < trained.loss_trace[0]
        assert np.isfinite(trained.final_loss)

    def test_training_is_deterministic(self, small_dataset):
        """One seed gives one set of weights."""
        env, dataset = small_dataset
        config = PolicyConfig(width=8, steps=20, batch_size=16, seed=3)

        a = train_correction_policy(env, dataset, config)
        b = train_correction_policy(env, dataset, config)

        np.testing.assert_array_equal(a.to_record()[1], b.to_record()[1])

    def test_batch_correction_shape(self, policy):
        """Row-wise residuals give row-wise corrections."""
        env, trained = policy

        out = trained.correct(np.zeros((3, env.spec.n_states)))

        assert out.shape == (3, env.spec.n_actions)

    def test_round_trip(self, tmp_path, policy):
        """A saved policy reproduces the same corrections."""
        env, trained = policy
        residual = np.array([0.001, -0.01])
        path = save_policy(tmp_path / "p.rdcp", trained)

        loaded = load_policy(path, env=env.spec)

        np.testing.assert_array_equal(loaded.correct(residual), trained.correct(residual))
        assert loaded.loss_trace == trained.loss_trace

    def test_env_mismatch(self, tmp_path, policy):
        """Loading against another environment is refused."""
        _, trained = policy
        path = save_policy(tmp_path / "p.rdcp", trained)

        with pytest.raises(CheckpointMismatchError):
            load_policy(path, env=get_environment("double-integrator-2d").spec)

    def test_parameter_count_mismatch(self, policy):
        """A truncated parameter block is refused."""
        _, trained = policy
        header, params = trained.to_record()

        with pytest.raises(CheckpointMismatchError):
            CorrectionPolicy.from_record(header, params[:-1])

    def test_requires_actions(self, small_dataset):
        """A state-only dataset cannot train a correction policy."""
        env, dataset = small_dataset
        stripped = Dataset(
            env=dataset.env,
            trajectories=[t.replace(actions=None, admissible=False) for t in dataset.trajectories],
            stats=dataset.stats,
        )

        with pytest.raises(ConfigurationError):
            train_correction_policy(env, stripped, QUICK)

    def test_corrected_projection_is_admissible(self, policy, rng):
        """PSA outputs re-simulate exactly whatever the network says."""
        env, trained = policy
        H = env.spec.horizon
        guess = Trajectory(
            states=rng.normal(0.0, 0.5, size=(H + 1, 2)), actions=rng.uniform(-1.0, 1.0, size=(H, 1))
        )

        result = project_trajectory(env, guess, ProjectorKind(tag=ProjectorTag.PSA), policy=trained)

        assert result.trajectory.admissible
        assert is_admissible(env, result.trajectory)

    def test_corrected_projection_needs_policy(self, small_dataset):
        """PSA without a policy is a configuration error."""
        env, dataset = small_dataset

        with pytest.raises(ConfigurationError):
            project_trajectory(env, dataset.trajectories[0], ProjectorKind(tag=ProjectorTag.PSA))

    @pytest.mark.slow
    def test_recovers_planted_correction(self):
        """A trained policy recovers a planted action offset to within 20%."""
        env = get_environment("double-integrator-1d")
        dataset = generate_dataset(env, "lqr-goal", 100, seed=0)
        trained = train_correction_policy(env, dataset, PolicyConfig(width=32, steps=3000, batch_size=128))
        s, a, delta = np.array([0.2, -0.1]), np.array([0.1]), np.array([0.08])

        residual = step(env, s, a + delta) - step(env, s, a)

        assert trained.correct(residual)[0] == pytest.approx(delta[0], rel=0.2)
