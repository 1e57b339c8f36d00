"""
ReachDiff Controller and Dataset Tests

Demonstration generation, dataset containers and load-time integrity checks.
"""

import numpy as np
import orjson
import pytest

from src.core.exceptions import ArtifactFormatError, ConfigurationError, DatasetIntegrityError
from src.models.trajectory import Dataset, NormalizationStats
from src.services.controllers import generate_dataset, make_controller
from src.services.datasets import (
    export_jsonl,
    failing_claims,
    load_dataset,
    load_trajectories,
    save_dataset,
    save_trajectories,
)
from src.services.dynamics import get_environment, is_admissible


# ═══════════════════════════════════════════════════════════════════════════════
# Controllers
# ═══════════════════════════════════════════════════════════════════════════════

class TestControllers:
    """Tests for controller lookup and dataset generation."""

    def test_lqr_goal_dataset_is_admissible(self, di1):
        """Every lqr-goal demonstration passes the re-simulation check."""
        dataset = generate_dataset(di1, "lqr-goal", 100, seed=0)

        assert len(dataset) == 100
        assert all(is_admissible(di1, t) for t in dataset.trajectories)

    @pytest.mark.parametrize(
        ("env_name", "controller"),
        [
            ("double-integrator-2d", "pd-waypoints"),
            ("unicycle", "pd-waypoints"),
            ("quadrotor-lite", "lqr-goal"),
            ("quadrotor-lite", "scripted-slalom"),
        ],
    )
    def test_every_controller_produces_admissible_data(self, env_name, controller):
        """Clamped controller outputs still give admissible trajectories."""
        env = get_environment(env_name)

        dataset = generate_dataset(env, controller, 5, seed=3)

        assert all(is_admissible(env, t) for t in dataset.trajectories)
        assert dataset.metadata["controller"] == controller

    def test_lqr_goal_drives_toward_origin(self, di1):
        """The LQR controller reduces the distance to the goal."""
        dataset = generate_dataset(di1, "lqr-goal", 20, seed=1)

        start = np.abs(np.stack([t.states[0, 0] for t in dataset.trajectories]))
        end = np.abs(np.stack([t.states[-1, 0] for t in dataset.trajectories]))

        assert end.mean() < start.mean()

    def test_empty_dataset(self, di1):
        """Zero trajectories yield an empty dataset with identity statistics."""
        dataset = generate_dataset(di1, "lqr-goal", 0, seed=0)

        assert len(dataset) == 0
        assert dataset.stats == NormalizationStats.identity(2, 1)

    def test_unknown_controller(self, di1):
        """Unknown controller names list the valid set."""
        with pytest.raises(ConfigurationError) as excinfo:
            make_controller("mpc", di1)

        assert "lqr-goal" in str(excinfo.value)

    def test_unsupported_pair(self, di1):
        """The slalom script exists only for the quadrotor."""
        with pytest.raises(ConfigurationError):
            make_controller("scripted-slalom", di1)


# ═══════════════════════════════════════════════════════════════════════════════
# Dataset Containers
# ═══════════════════════════════════════════════════════════════════════════════

class TestDatasetStorage:
    """Tests for dataset and trajectory containers."""

    def test_round_trip(self, tmp_path, small_dataset):
        """A saved dataset loads back with identical arrays and stats."""
        _, dataset = small_dataset
        path = save_dataset(tmp_path / "d.rdds", dataset)

        loaded = load_dataset(path)

        assert loaded.env == dataset.env
        assert loaded.stats == dataset.stats
        for a, b in zip(loaded.trajectories, dataset.trajectories, strict=True):
            np.testing.assert_array_equal(a.states, b.states)
            np.testing.assert_array_equal(a.actions, b.actions)
            assert a.admissible

    def test_same_seed_byte_identical(self, tmp_path, di1):
        """Generating twice with one seed writes byte-identical files."""
        first = save_dataset(tmp_path / "a.rdds", generate_dataset(di1, "pd-waypoints", 10, seed=7))
        second = save_dataset(tmp_path / "b.rdds", generate_dataset(di1, "pd-waypoints", 10, seed=7))

        assert first.read_bytes() == second.read_bytes()

    def test_empty_dataset_round_trip(self, tmp_path, di1):
        """An empty dataset still has a valid header."""
        path = save_dataset(tmp_path / "empty.rdds", generate_dataset(di1, "lqr-goal", 0, seed=0))

        assert len(load_dataset(path)) == 0

    def test_corrupted_claim_rejected(self, tmp_path, small_dataset):
        """Loading rejects a trajectory whose states no longer replay."""
        env, dataset = small_dataset
        bad = dataset.trajectories[3]
        states = bad.states.copy()
        states[2:, 0] += 0.1
        trajectories = list(dataset.trajectories)
        trajectories[3] = bad.replace(states=states)
        path = save_dataset(
            tmp_path / "bad.rdds",
            Dataset(env=env.spec, trajectories=trajectories, stats=dataset.stats),
        )

        with pytest.raises(DatasetIntegrityError) as excinfo:
            load_dataset(path)

        assert excinfo.value.context["indices"] == [3]
        assert len(load_dataset(path, verify=False)) == len(trajectories)

    def test_payload_tampering_detected(self, tmp_path, small_dataset):
        """A flipped payload byte fails the digest check."""
        _, dataset = small_dataset
        path = save_dataset(tmp_path / "d.rdds", dataset)
        data = bytearray(path.read_bytes())
        data[-3] ^= 0xFF
        path.write_bytes(bytes(data))

        with pytest.raises(ArtifactFormatError):
            load_dataset(path)

    def test_trajectories_file_keeps_claims(self, tmp_path, small_dataset):
        """Per-trajectory admissibility claims survive a round trip."""
        env, dataset = small_dataset
        trajectories = [dataset.trajectories[0], dataset.trajectories[1].replace(admissible=False)]
        path = save_trajectories(tmp_path / "t.rdtr", env.spec, trajectories, metadata={"k": 1})

        spec, loaded, header = load_trajectories(path)

        assert spec == env.spec
        assert [t.admissible for t in loaded] == [True, False]
        assert header["metadata"] == {"k": 1}
        assert failing_claims(spec, loaded) == []

    def test_jsonl_export(self, tmp_path, small_dataset):
        """The inspection export has one object per trajectory."""
        _, dataset = small_dataset
        path = export_jsonl(tmp_path / "d.jsonl", dataset)

        lines = path.read_bytes().splitlines()

        assert len(lines) == len(dataset)
        record = orjson.loads(lines[0])
        assert record["index"] == 0
        assert len(record["states"]) == dataset.env.horizon + 1
