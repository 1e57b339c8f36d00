"""
ReachDiff Dynamics Tests

Simulator stepping, rollouts, admissibility checks and the environment
registry.
"""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.core.exceptions import ConfigurationError, RejectedInputError, RolloutError
from src.models.environment import EnvSpec, Integrator
from src.services.dynamics import (
    ENV_NAMES,
    env_from_spec,
    get_environment,
    is_admissible,
    rollout,
    step,
    step_checked,
)


# ═══════════════════════════════════════════════════════════════════════════════
# Step
# ═══════════════════════════════════════════════════════════════════════════════

class TestStep:
    """Tests for the single-step simulator."""

    def test_double_integrator_semi_implicit(self, di1):
        """Unit acceleration from rest moves velocity first, then position."""
        s_next = step(di1, [0.0, 0.0], [1.0])

        assert s_next[1] == pytest.approx(0.1, abs=1e-15)
        assert s_next[0] == pytest.approx(0.01, abs=1e-15)

    def test_double_integrator_explicit(self):
        """Explicit Euler integrates position with the old velocity."""
        env = get_environment("double-integrator-1d", integrator=Integrator.EXPLICIT_EULER)

        s_next = step(env, [0.5, 0.2], [1.0])

        assert s_next[0] == pytest.approx(0.5 + 0.1 * 0.2, abs=1e-15)
        assert s_next[1] == pytest.approx(0.3, abs=1e-15)

    def test_unicycle_coasting(self, unicycle):
        """Zero input at unit speed advances x by v·dt and leaves the rest fixed."""
        s_next = step(unicycle, [0.0, 0.0, 0.0, 1.0, 0.0], [0.0, 0.0])

        assert s_next[0] == pytest.approx(0.1, abs=1e-15)
        np.testing.assert_array_equal(s_next[1:], [0.0, 0.0, 1.0, 0.0])

    def test_quadrotor_hover(self, quadrotor):
        """Hover thrust at zero tilt keeps a resting quadrotor in place."""
        s = np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0])

        s_next = step(quadrotor, s, [quadrotor.mass * 9.81, 0.0])

        np.testing.assert_allclose(s_next, s, atol=1e-12)

    def test_out_of_box_action_is_clamped(self, di1):
        """Actions outside the box are applied clamped and flagged."""
        s_next, clamped = step_checked(di1, [0.0, 0.0], [5.0])

        assert clamped
        np.testing.assert_array_equal(s_next, step(di1, [0.0, 0.0], [1.0]))

    def test_non_finite_state_rejected(self, di1):
        """Non-finite inputs are rejected."""
        with pytest.raises(RejectedInputError):
            step(di1, [np.nan, 0.0], [0.0])

    def test_wrong_action_dimension_rejected(self, di1):
        """Action width must match the environment."""
        with pytest.raises(RejectedInputError):
            step(di1, [0.0, 0.0], [0.0, 0.0])

    @given(
        x=st.floats(-2.0, 2.0),
        v=st.floats(-1.0, 1.0),
        a=st.floats(-1.0, 1.0),
    )
    def test_step_is_deterministic(self, x, v, a):
        """Repeated calls return bit-identical successors."""
        env = get_environment("double-integrator-1d")

        np.testing.assert_array_equal(step(env, [x, v], [a]), step(env, [x, v], [a]))


# ═══════════════════════════════════════════════════════════════════════════════
# Rollout & Admissibility
# ═══════════════════════════════════════════════════════════════════════════════

class TestRollout:
    """Tests for rollouts and the bit-exact admissibility check."""

    def test_zero_actions_from_origin(self):
        """Zero actions from the origin stay at the origin."""
        env = get_environment("double-integrator-1d", horizon=3)

        traj = rollout(env, [0.0, 0.0], np.zeros((3, 1)))

        np.testing.assert_array_equal(traj.states, np.zeros((4, 2)))
        assert traj.admissible

    def test_constant_acceleration(self):
        """Hand-iterated semi-implicit Euler for two unit-acceleration steps."""
        env = get_environment("double-integrator-1d", horizon=2)

        traj = rollout(env, [0.0, 0.0], np.ones((2, 1)))

        np.testing.assert_allclose(traj.states[:, 1], [0.0, 0.1, 0.2], atol=1e-15)
        np.testing.assert_allclose(traj.states[:, 0], [0.0, 0.01, 0.03], atol=1e-15)

    def test_rollout_stores_clamped_actions(self, di1):
        """Stored actions are the ones actually applied."""
        actions = np.full((di1.spec.horizon, 1), 3.0)

        traj = rollout(di1, [0.0, 0.0], actions)

        np.testing.assert_array_equal(traj.actions, np.ones_like(actions))
        assert is_admissible(di1, traj)

    def test_wrong_length_rejected(self, di1):
        """Rollout needs exactly H actions."""
        with pytest.raises(RejectedInputError):
            rollout(di1, [0.0, 0.0], np.zeros((3, 1)))

    def test_failure_reports_time_index(self, di1):
        """A failing step inside a rollout carries its time index."""
        actions = np.zeros((di1.spec.horizon, 1))
        actions[2, 0] = np.nan

        with pytest.raises(RolloutError) as excinfo:
            rollout(di1, [0.0, 0.0], actions)

        assert excinfo.value.time_index == 2

    def test_replay_reproduces_states(self, unicycle, rng):
        """Replaying a rollout's actions reproduces its states bit-exactly."""
        actions = rng.uniform(-1.0, 1.0, size=(unicycle.spec.horizon, 2))
        traj = rollout(unicycle, [0.0, 0.0, 0.1, 0.3, 0.0], actions)

        replay = rollout(unicycle, traj.states[0], traj.actions)

        np.testing.assert_array_equal(replay.states, traj.states)
        assert is_admissible(unicycle, traj)

    def test_perturbed_trajectory_not_admissible(self, di1, rng):
        """A tiny state change breaks bit-exact admissibility."""
        traj = rollout(di1, [0.1, 0.0], rng.uniform(-1.0, 1.0, size=(di1.spec.horizon, 1)))
        states = traj.states.copy()
        states[5, 0] += 1e-9

        assert not is_admissible(di1, traj.replace(states=states))

    def test_trajectory_without_actions_not_admissible(self, di1):
        """Admissibility needs actions to replay."""
        traj = rollout(di1, [0.0, 0.0], np.zeros((di1.spec.horizon, 1)))

        assert not is_admissible(di1, traj.replace(actions=None))


# ═══════════════════════════════════════════════════════════════════════════════
# Registry
# ═══════════════════════════════════════════════════════════════════════════════

class TestRegistry:
    """Tests for the environment registry and stored specs."""

    def test_all_builtins_build(self):
        """Every registered environment builds and has actuated structure."""
        for name in ENV_NAMES:
            env = get_environment(name)
            assert env.name == name
            assert env.spec.has_structure

    def test_unknown_name_lists_valid_set(self):
        """Unknown names raise a configuration error listing the valid names."""
        with pytest.raises(ConfigurationError) as excinfo:
            get_environment("pendulum")

        assert "double-integrator-1d" in str(excinfo.value)

    def test_horizon_override(self):
        """A horizon override produces a spec with that horizon."""
        env = get_environment("unicycle", horizon=7)

        assert env.spec.horizon == 7

    def test_spec_round_trip(self, quadrotor):
        """A stored spec rebuilds an identical environment."""
        stored = EnvSpec.model_validate(quadrotor.spec.model_dump(mode="json"))

        assert env_from_spec(stored).spec == quadrotor.spec

    def test_quadrotor_violations(self, quadrotor):
        """Ground contact or excessive tilt counts as a violation."""
        states = np.array([
            [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, -0.1, 0.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 1.5, 0.0, 0.0, 0.0],
        ])

        np.testing.assert_array_equal(quadrotor.violations(states), [False, True, True])
        assert quadrotor.survival_steps(states) == 0

    def test_gates_passed(self, quadrotor):
        """Crossing every station inside its window passes all gates."""
        ys = np.linspace(0.0, 3.5, 36)
        zs = np.interp(ys, [0.0, 1.0, 2.0, 3.0, 3.5], [1.0, 1.8, 0.7, 1.8, 1.5])
        states = np.zeros((ys.size, 6))
        states[:, 0] = ys
        states[:, 1] = zs

        assert quadrotor.gates_passed(states) == 3
        assert quadrotor.task_completed(states)
