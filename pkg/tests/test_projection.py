"""
ReachDiff Projection Tests

Single-state projectors, the reference trade-off and gated trajectory
projection.
"""

import numpy as np
import pytest

from src.core.exceptions import ConfigurationError, RejectedInputError
from src.models.projection import ProjectorKind, ProjectorTag
from src.models.trajectory import Trajectory
from src.services.dynamics import ENV_NAMES, get_environment, is_admissible, step
from src.services.projection import project_state, project_trajectory
from src.services.reachability import action_polytope, hull_contains, reach_vertices, shrunk_vertices

P = ProjectorKind(tag=ProjectorTag.P)
P_FULL = ProjectorKind(tag=ProjectorTag.P, use_reduction=False)
PA = ProjectorKind(tag=ProjectorTag.PA)
GUIDED = ProjectorKind(tag=ProjectorTag.P, action_guided=True)


# ═══════════════════════════════════════════════════════════════════════════════
# Single Transitions
# ═══════════════════════════════════════════════════════════════════════════════

class TestProjectState:
    """Tests for one projected transition."""

    def test_segment_example_full_state(self, di1):
        """Without reduction the full state lands on the successor segment."""
        result = project_state(di1, [0.0, 0.0], [0.05, 0.05], P_FULL)

        np.testing.assert_allclose(result.state, [0.0054455, 0.054455], atol=1e-6)
        np.testing.assert_allclose(result.action, [0.5445545], atol=1e-6)

    def test_segment_example_reduced(self, di1):
        """With reduction the velocity is projected and the position rebuilt."""
        result = project_state(di1, [0.0, 0.0], [0.05, 0.05], P)

        np.testing.assert_allclose(result.state, [0.005, 0.05], atol=1e-12)
        assert result.residual == pytest.approx(0.045, abs=1e-12)

    @pytest.mark.parametrize("v", [-0.3, -0.05, 0.0, 0.07, 0.25])
    def test_reduction_agrees_on_integrator_line(self, di1, v):
        """Targets consistent with the position update project identically either way."""
        base = np.array([0.4, 0.1])
        target = np.array([base[0] + 0.1 * v, v])

        full = project_state(di1, base, target, P_FULL)
        reduced = project_state(di1, base, target, P)

        np.testing.assert_allclose(full.state, reduced.state, atol=1e-10)

    def test_action_explains_projection(self, di2, rng):
        """Stepping the returned action reproduces the projected state."""
        for _ in range(200):
            s = rng.uniform(-1.0, 1.0, size=4)
            target = step(di2, s, rng.uniform(-1.0, 1.0, size=2)) + rng.normal(0.0, 0.05, size=4)
            result = project_state(di2, s, target, P)
            np.testing.assert_allclose(step(di2, s, result.action), result.state, atol=1e-9)

    @pytest.mark.parametrize("env_name", ENV_NAMES)
    def test_guided_action_explains_projection(self, env_name):
        """Action-guided projections re-simulate exactly, with and without box clamping."""
        env = get_environment(env_name)
        rng = np.random.default_rng(7)
        width = env.action_high - env.action_low
        errors: dict[bool, list[float]] = {True: [], False: []}

        for s in env.sample_initial_states(1000, rng):
            a_pred = rng.uniform(env.action_low - 0.2 * width, env.action_high + 0.2 * width)
            target = step(env, s, a_pred) + rng.normal(0.0, 0.05, size=env.spec.n_states)
            result = project_state(env, s, target, GUIDED, a_pred=a_pred)
            clamped = shrunk_vertices(action_polytope(env), a_pred, GUIDED.delta, env=env).clamped
            errors[clamped].append(float(np.max(np.abs(step(env, s, result.action) - result.state))))
            assert np.all(result.action >= env.action_low - 1e-12)
            assert np.all(result.action <= env.action_high + 1e-12)

        assert errors[True] and errors[False]
        assert max(errors[True]) < 1e-9
        assert max(errors[False]) < 1e-9

    def test_reference_zero_weight_matches_hull_projection(self, di1):
        """λ = 0 reduces the reference projection to the plain one."""
        pref = ProjectorKind(tag=ProjectorTag.PREF, lambda_ref=0.0)

        plain = project_state(di1, [0.2, 0.1], [0.3, 0.5], P)
        ref = project_state(di1, [0.2, 0.1], [0.3, 0.5], pref, s_ref=[0.0, -1.0])

        np.testing.assert_array_equal(plain.state, ref.state)

    def test_heavy_reference_wins(self, di1):
        """A large trade-off coefficient pulls the result onto a reachable reference."""
        pref = ProjectorKind(tag=ProjectorTag.PREF, lambda_ref=100.0)

        result = project_state(di1, [0.0, 0.0], [0.05, 0.05], pref, s_ref=[-0.005, -0.05])

        np.testing.assert_allclose(result.state, [-0.005, -0.05], atol=1e-8)

    def test_action_projection_clamps(self, di1):
        """PA executes the clamped predicted action."""
        result = project_state(di1, [0.0, 0.0], [9.0, 9.0], PA, a_pred=[5.0])

        np.testing.assert_array_equal(result.action, [1.0])
        np.testing.assert_array_equal(result.state, step(di1, [0.0, 0.0], [1.0]))

    def test_missing_reference(self, di1):
        """Pref needs a reference state."""
        with pytest.raises(ConfigurationError):
            project_state(di1, [0.0, 0.0], [0.0, 0.0], ProjectorKind(tag=ProjectorTag.PREF))

    def test_missing_action(self, di1):
        """PA needs a predicted action."""
        with pytest.raises(ConfigurationError):
            project_state(di1, [0.0, 0.0], [0.0, 0.0], PA)

    def test_wrong_dimension(self, di1):
        """Predictions must match the state width."""
        with pytest.raises(RejectedInputError):
            project_state(di1, [0.0, 0.0], [0.0], P)


# ═══════════════════════════════════════════════════════════════════════════════
# Trajectories
# ═══════════════════════════════════════════════════════════════════════════════

def _step_trajectory() -> Trajectory:
    states = np.zeros((6, 2))
    states[4:, 0] = 1.0
    return Trajectory(states=states)


class TestProjectTrajectory:
    """Tests for chronological, gated trajectory projection."""

    def test_action_projection_is_exact_on_data(self, small_dataset):
        """PA leaves admissible demonstrations bit-identical."""
        env, dataset = small_dataset

        for traj in dataset.trajectories:
            result = project_trajectory(env, traj, PA)
            np.testing.assert_array_equal(result.trajectory.states, traj.states)
            assert result.total_residual == 0.0
            assert result.trajectory.admissible

    def test_action_projection_is_admissible(self, di1, rng):
        """PA on arbitrary predictions yields re-simulatable trajectories."""
        H = di1.spec.horizon
        guess = Trajectory(
            states=rng.normal(size=(H + 1, 2)), actions=rng.uniform(-2.0, 2.0, size=(H, 1))
        )

        result = project_trajectory(di1, guess, PA)

        assert result.trajectory.admissible
        assert is_admissible(di1, result.trajectory)
        np.testing.assert_array_equal(result.trajectory.states[0], guess.states[0])

    def test_hull_membership(self, di2):
        """Every projected state lies in the successor hull of its output predecessor."""
        H = di2.spec.horizon
        line = np.zeros((H + 1, 4))
        line[:, 0] = np.linspace(0.0, 2.0, H + 1)
        line[:, 1] = np.linspace(0.0, -1.0, H + 1)

        result = project_trajectory(di2, Trajectory(states=line), P)

        out = result.trajectory.states
        poly = action_polytope(di2)
        for t in range(H):
            reach = reach_vertices(di2, out[t], poly)
            assert hull_contains(out[t + 1], reach.vertex_successors)
        assert not result.trajectory.admissible

    def test_full_projection_residuals(self, di1_short):
        """Projecting every step accumulates the two position jumps."""
        result = project_trajectory(di1_short, _step_trajectory(), P)

        np.testing.assert_allclose(result.residuals, [0.0, 0.0, 0.0, 1.0, 1.0], atol=1e-12)
        assert result.total_residual == pytest.approx(2.0)

    def test_skipped_step_keeps_prediction(self, di1_short):
        """A skipped transition keeps the raw state and later hulls build on it."""
        gate = np.array([True, True, True, False, True])

        result = project_trajectory(di1_short, _step_trajectory(), P, gate=gate)

        assert result.total_residual == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_array_equal(result.trajectory.states[4], [1.0, 0.0])
        np.testing.assert_array_equal(result.projected, gate)
        assert not result.trajectory.admissible

    def test_empty_gate_is_identity(self, small_dataset):
        """With no step projected the input comes back unchanged."""
        env, dataset = small_dataset
        traj = dataset.trajectories[0]

        result = project_trajectory(env, traj, P, gate=np.zeros(env.spec.horizon, dtype=bool))

        np.testing.assert_array_equal(result.trajectory.states, traj.states)
        assert result.trajectory.admissible == traj.admissible
        assert not result.residuals.any()

    def test_gate_length(self, di1_short):
        """The gate must cover every transition."""
        with pytest.raises(RejectedInputError):
            project_trajectory(di1_short, _step_trajectory(), P, gate=np.ones(3, dtype=bool))

    def test_missing_reference_trajectory(self, di1_short):
        """Pref over a trajectory needs a reference trajectory."""
        with pytest.raises(ConfigurationError):
            project_trajectory(di1_short, _step_trajectory(), ProjectorKind(tag=ProjectorTag.PREF))

    def test_missing_actions(self, di1_short):
        """PA over a trajectory needs predicted actions."""
        with pytest.raises(ConfigurationError):
            project_trajectory(di1_short, _step_trajectory(), PA)
