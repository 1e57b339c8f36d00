"""
ReachDiff Evaluation Tests

Experiment plans, per-sample scoring, aggregation and the report bundle.
"""

import csv
import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.core.exceptions import CheckpointMismatchError, ConfigurationError
from src.models.experiment import ExperimentPlan, Metric
from src.services.diffusion import save_checkpoint
from src.services.evaluation import aggregate, run_experiment


@pytest.fixture
def plan_factory(tmp_path, untrained_sa):
    """Builds plans comparing PA-projected and raw sampling of one checkpoint."""
    _, _, checkpoint = untrained_sa
    path = save_checkpoint(tmp_path / "models" / "sa.rdck", checkpoint)

    def build(**overrides):
        data = {
            "env": "double-integrator-1d",
            "models": [
                {"name": "pa", "checkpoint": str(path), "projector": {"tag": "PA"}, "curriculum": "mid"},
                {"name": "raw", "checkpoint": str(path), "use_projection": False},
            ],
            "n_initial_states": 2,
            "samples_per_state": 2,
            "id_method": "polytopic",
        }
        data.update(overrides)
        return ExperimentPlan.model_validate(data)

    return build


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ═══════════════════════════════════════════════════════════════════════════════
# Plans
# ═══════════════════════════════════════════════════════════════════════════════

class TestExperimentPlan:
    """Tests for plan validation."""

    def test_defaults(self, plan_factory):
        """Unspecified metrics and seeds take their defaults."""
        plan = plan_factory()

        assert plan.metrics == list(Metric)
        assert plan.seeds == [0]
        assert plan.selection_metric == "survival"

    def test_duplicate_names(self, plan_factory):
        """Model names must be unique."""
        plan = plan_factory()
        models = [m.model_dump(mode="json") for m in plan.models]
        models[1]["name"] = "pa"

        with pytest.raises(ValidationError):
            plan_factory(models=models)

    def test_empty_metrics(self, plan_factory):
        """The metric set cannot be empty."""
        with pytest.raises(ValidationError):
            plan_factory(metrics=[])


# ═══════════════════════════════════════════════════════════════════════════════
# Runs
# ═══════════════════════════════════════════════════════════════════════════════

class TestRunExperiment:
    """Tests for executing plans and writing the report bundle."""

    def test_bundle_layout(self, tmp_path, plan_factory):
        """Every report file is written with one row per sample."""
        out = tmp_path / "report"

        bundle = run_experiment(plan_factory(), out)

        for name in ("plan.json", "samples.csv", "metrics.csv", "selected.csv"):
            assert (out / name).is_file()
        for name in ("sae.svg", "cae.svg", "violation.svg"):
            assert (out / "plots" / name).is_file()
        assert len(bundle.rows) == 2 * 2 * 2
        assert len(_read_csv(out / "samples.csv")) == 8
        assert len(_read_csv(out / "selected.csv")) == 4
        assert len(list((out / "trajectories").glob("*.rdtr"))) == 4

    def test_action_projection_scores_zero(self, tmp_path, plan_factory):
        """PA samples replay their actions, so SAE and CAE are exactly zero."""
        bundle = run_experiment(plan_factory(), tmp_path / "report")

        pa_rows = [r for r in bundle.rows if r["model"] == "pa"]
        assert all(r["sae_mean"] == 0.0 and r["cae"] == 0.0 for r in pa_rows)
        assert all(r["admissible_claim"] for r in pa_rows)
        assert not any(r["admissible_claim"] for r in bundle.rows if r["model"] == "raw")

    def test_aggregates_match_samples(self, tmp_path, plan_factory):
        """metrics.csv is the mean and population std of samples.csv."""
        out = tmp_path / "report"
        run_experiment(plan_factory(), out)

        samples = _read_csv(out / "samples.csv")
        metrics = {(r["model"], r["metric"]): r for r in _read_csv(out / "metrics.csv")}
        for model in ("pa", "raw"):
            values = np.array([float(r["cae"]) for r in samples if r["model"] == model])
            row = metrics[(model, "CAE")]
            assert float(row["mean"]) == pytest.approx(values.mean())
            assert float(row["std"]) == pytest.approx(values.std())
            assert int(row["n"]) == 4

    def test_reruns_are_byte_identical(self, tmp_path, plan_factory):
        """Two runs of one plan write identical bundles."""
        plan = plan_factory()
        first, second = tmp_path / "a", tmp_path / "b"

        run_experiment(plan, first)
        run_experiment(plan, second, workers=2)

        files = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file())
        assert files == sorted(p.relative_to(second) for p in second.rglob("*") if p.is_file())
        for rel in files:
            assert (first / rel).read_bytes() == (second / rel).read_bytes(), rel

    def test_metric_subset_skips_inverse_dynamics(self, tmp_path, plan_factory):
        """Without SAE/CAE the error columns are NaN and no error plots are drawn."""
        out = tmp_path / "report"

        bundle = run_experiment(plan_factory(metrics=["survival-fraction"]), out)

        assert all(math.isnan(r["cae"]) for r in bundle.rows)
        assert not (out / "plots" / "sae.svg").exists()
        assert [a["metric"] for a in bundle.aggregates] == ["survival-fraction", "survival-fraction"]

    def test_selection_rows(self, tmp_path, plan_factory):
        """Each cell records its best sample under the plan's metric."""
        bundle = run_experiment(plan_factory(selection_metric="reward"), tmp_path / "report")

        for sel in bundle.selected:
            assert sel["metric"] == "reward"
            assert sel["best_sample"] in (0, 1)

    def test_violation_curves(self, tmp_path, plan_factory):
        """Violation ratios are monotone fractions over H+1 steps."""
        bundle = run_experiment(plan_factory(), tmp_path / "report")

        for curve in bundle.violation_curves.values():
            assert curve.shape == (9,)
            assert np.all((curve >= 0.0) & (curve <= 1.0))
            assert np.all(np.diff(curve) >= 0.0)

    def test_missing_checkpoint(self, tmp_path, plan_factory):
        """A plan naming a missing checkpoint is a configuration error."""
        plan = plan_factory(models=[{"name": "gone", "checkpoint": str(tmp_path / "nope.rdck")}])

        with pytest.raises(ConfigurationError) as excinfo:
            run_experiment(plan, tmp_path / "report")

        assert "gone" in str(excinfo.value)

    def test_env_mismatch(self, tmp_path, plan_factory):
        """Checkpoints from another environment are refused."""
        with pytest.raises(CheckpointMismatchError):
            run_experiment(plan_factory(env="unicycle"), tmp_path / "report")

    def test_aggregate_empty_model(self, plan_factory):
        """A model without rows aggregates to NaN with n = 0."""
        rows = aggregate([], plan_factory(metrics=["CAE"]))

        assert all(r["n"] == 0 and math.isnan(r["mean"]) for r in rows)
