"""
ReachDiff Reachability Tests

Action polytopes, vertex successors, the shrunk search box and the
velocity-only reduction.
"""

import numpy as np
import pytest

from src.core.exceptions import RejectedInputError
from src.models.environment import Integrator
from src.services.dynamics import ENV_NAMES, get_environment, step
from src.services.reachability import (
    ActionPolytope,
    action_polytope,
    hull_contains,
    linear_model,
    reach_vertices,
    reduce_to_actuated,
    shrunk_vertices,
)


# ═══════════════════════════════════════════════════════════════════════════════
# Polytopes
# ═══════════════════════════════════════════════════════════════════════════════

class TestActionPolytope:
    """Tests for box-corner polytopes and their shrunk variant."""

    def test_box_corners(self, unicycle):
        """Corners enumerate the box with the first dimension varying slowest."""
        poly = action_polytope(unicycle)

        np.testing.assert_array_equal(
            poly.vertices, [[-1.0, -2.0], [-1.0, 2.0], [1.0, -2.0], [1.0, 2.0]]
        )
        np.testing.assert_array_equal(poly.mean, [0.0, 0.0])

    def test_shrunk_box(self, di1):
        """δ = 0.5 around the origin halves the box."""
        shrunk = shrunk_vertices(action_polytope(di1), [0.0], 0.5, env=di1)

        np.testing.assert_array_equal(shrunk.vertices, [[-0.5], [0.5]])
        assert not shrunk.clamped

    def test_shrunk_box_clamped_at_corner(self, di1):
        """A search box centered on the bound is clamped back inside."""
        shrunk = shrunk_vertices(action_polytope(di1), [1.0], 0.5, env=di1)

        np.testing.assert_array_equal(shrunk.vertices, [[0.5], [1.0]])
        assert shrunk.clamped

    def test_shrunk_without_env_is_unclamped(self, di1):
        """Without an env the raw shrunk vertices are returned."""
        shrunk = shrunk_vertices(action_polytope(di1), [1.0], 0.5)

        np.testing.assert_array_equal(shrunk.vertices, [[0.5], [1.5]])

    @pytest.mark.parametrize("delta", [0.0, 1.0, -0.2, 1.5])
    def test_shrink_fraction_range(self, di1, delta):
        """The shrink fraction must lie strictly inside (0, 1)."""
        with pytest.raises(RejectedInputError):
            shrunk_vertices(action_polytope(di1), [0.0], delta)

    def test_center_dimension(self, di1):
        """The center must match the action dimension."""
        with pytest.raises(RejectedInputError):
            shrunk_vertices(action_polytope(di1), [0.0, 0.0], 0.5)

    @pytest.mark.parametrize("env_name", ENV_NAMES)
    @pytest.mark.parametrize(("small", "large"), [(0.05, 0.1), (0.1, 0.5), (0.3, 0.9)])
    def test_shrunk_hulls_nest(self, env_name, small, large):
        """A smaller shrink fraction gives a hull inside the larger one, and both inside C(s)."""
        env = get_environment(env_name)
        rng = np.random.default_rng(11)
        base = action_polytope(env)
        width = env.action_high - env.action_low
        idx = env.velocity_indices

        for s in env.sample_initial_states(25, rng):
            center = rng.uniform(env.action_low - 0.2 * width, env.action_high + 0.2 * width)
            inner = shrunk_vertices(base, center, small, env=env)
            outer = shrunk_vertices(base, center, large, env=env)
            succ = [reach_vertices(env, s, poly).vertex_successors for poly in (inner, outer, base)]

            for v in inner.vertices:
                assert hull_contains(v, outer.vertices, tol=1e-7)
            for point in succ[0][:, idx]:
                assert hull_contains(point, succ[1][:, idx], tol=1e-7)
            for point in succ[1][:, idx]:
                assert hull_contains(point, succ[2][:, idx], tol=1e-7)
            if env.is_linear:
                for point in succ[1]:
                    assert hull_contains(point, succ[2], tol=1e-7)


# ═══════════════════════════════════════════════════════════════════════════════
# Reachable Sets
# ═══════════════════════════════════════════════════════════════════════════════

class TestReachVertices:
    """Tests for vertex successors and the reduction."""

    def test_double_integrator_successors(self, di1):
        """From rest the successors are (∓0.01, ∓0.1)."""
        reach = reach_vertices(di1, [0.0, 0.0], action_polytope(di1))

        np.testing.assert_allclose(reach.vertex_successors, [[-0.01, -0.1], [0.01, 0.1]], atol=1e-15)
        np.testing.assert_array_equal(reach.vertex_actions, [[-1.0], [1.0]])

    def test_under_approximation(self, di2, rng):
        """Convex combinations of vertex actions reach the matching successor combination."""
        s = np.array([0.3, -0.2, 0.1, 0.4])
        reach = reach_vertices(di2, s, action_polytope(di2))

        for _ in range(20):
            lam = rng.dirichlet(np.ones(reach.m))
            reached = step(di2, s, lam @ reach.vertex_actions)
            np.testing.assert_allclose(reached, lam @ reach.vertex_successors, atol=1e-9)

    def test_reduction_keeps_velocities(self, di1):
        """The reduced problem lives on the velocity coordinate."""
        reach = reach_vertices(di1, [0.0, 0.0], action_polytope(di1))

        reduced, predicted, reconstruct = reduce_to_actuated(di1, reach, [0.05, 0.05])

        assert reduced.reduced
        np.testing.assert_allclose(reduced.vertex_successors, [[-0.1], [0.1]], atol=1e-15)
        np.testing.assert_array_equal(predicted, [0.05])
        np.testing.assert_allclose(reconstruct(np.array([0.05])), [0.005, 0.05], atol=1e-15)

    def test_explicit_reconstruction_uses_current_velocity(self):
        """Explicit Euler rebuilds positions from the base velocity."""
        env = get_environment("double-integrator-1d", integrator=Integrator.EXPLICIT_EULER)
        reach = reach_vertices(env, [0.5, 0.2], action_polytope(env))

        _, _, reconstruct = reduce_to_actuated(env, reach, [0.0, 0.0])

        np.testing.assert_allclose(reconstruct(np.array([0.3])), [0.5 + 0.1 * 0.2, 0.3], atol=1e-15)

    def test_linear_model_is_exact_for_linear_env(self, di2, rng):
        """The finite-difference model reproduces a linear simulator."""
        s = rng.uniform(-1.0, 1.0, size=4)
        model = linear_model(di2, s)

        for _ in range(5):
            a = rng.uniform(-1.0, 1.0, size=2)
            np.testing.assert_allclose(model.predict(a), step(di2, s, a), atol=1e-12)

    def test_hull_contains(self, di1):
        """Midpoints are inside the successor hull, far points are not."""
        reach = reach_vertices(di1, [0.0, 0.0], action_polytope(di1))

        assert hull_contains(np.array([0.0, 0.0]), reach.vertex_successors)
        assert not hull_contains(np.array([0.05, 0.05]), reach.vertex_successors)

    def test_polytope_accepts_single_vertex(self):
        """A single vertex is promoted to a one-row array."""
        assert ActionPolytope([0.25]).m == 1
