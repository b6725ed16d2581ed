import math

import numpy as np
import pytest

from postpert.errors import DimensionMismatch, NonPositiveState
from postpert.lv import (
    INITIAL_STATE,
    OBSERVED_DATA,
    LotkaVolterraModel,
    Trajectory,
    build_lotka_volterra,
    integrate,
    integrate_derivative,
    integrate_derivative_many,
    lv_noise_covariance,
    lv_observe,
    lv_time_grid,
    observation_indices,
)
from postpert.model_api import evaluate_at

from oracles import predator_prey_invariant


class TestTimeGrid:
    def test_observation_steps_land_on_grid(self):
        np.testing.assert_array_equal(observation_indices(1000), [250, 500, 750, 1000])
        grid = lv_time_grid(1000)
        assert grid[0] == 0.0 and grid[-1] == 1.0 and len(grid) == 1001
        assert grid[250] == pytest.approx(0.25)

    def test_step_count_must_divide_quarters(self):
        with pytest.raises(DimensionMismatch):
            lv_time_grid(250)


class TestIntegrator:
    def test_equilibrium_is_exactly_stationary(self):
        traj = integrate(np.zeros(401), y_init=(50.0, 100.0))
        np.testing.assert_array_equal(traj.y1, 50.0)
        np.testing.assert_array_equal(traj.y2, 100.0)

    def test_prey_grows_from_initial_state(self):
        traj = integrate(np.zeros(1001))
        assert traj.y1[0] == INITIAL_STATE[0]
        assert traj.y1[10] > traj.y1[0]
        assert np.all(traj.y1 > 0) and np.all(traj.y2 > 0)

    def test_self_convergence_is_first_order(self):
        obs = {n: lv_observe(integrate(np.zeros(n + 1))) for n in (400, 800, 1600)}
        d1 = np.abs(obs[400] - obs[800]).max()
        d2 = np.abs(obs[800] - obs[1600]).max()
        assert 0.85 < math.log2(d1 / d2) < 1.15

    def test_first_integral_drift_shrinks_linearly(self):
        def drift(n):
            t = integrate(np.zeros(n + 1))
            v = predator_prey_invariant(t.y1[0], t.y2[0])
            worst = 0.0
            for a, b in zip(t.y1, t.y2):
                worst = max(worst, abs(predator_prey_invariant(a, b) - v))
            return worst

        coarse, fine = drift(200), drift(3200)
        assert coarse / fine > 8.0  # 16x more steps, first-order scheme

    def test_collapse_to_nonpositive_population_raises(self):
        with pytest.raises(NonPositiveState):
            integrate(np.full(101, -1e4))

    def test_trajectory_length_validation(self):
        with pytest.raises(DimensionMismatch):
            Trajectory(lv_time_grid(4), np.zeros(5), np.zeros(5), np.zeros(4))


class TestVariationalSolves:
    def test_matches_central_differences(self):
        model, expansion = build_lotka_volterra(n_modes=8, n_steps=200)
        base = integrate(expansion.x0)
        mode = expansion.modes[2]
        deriv = integrate_derivative(base, mode)
        idx = observation_indices(200)
        h = 1e-4
        fd = (
            lv_observe(integrate(expansion.x0 + h * mode))
            - lv_observe(integrate(expansion.x0 - h * mode))
        ) / (2 * h)
        got = np.empty(8)
        got[0::2] = deriv.y1[idx]
        got[1::2] = deriv.y2[idx]
        np.testing.assert_allclose(got, fd, atol=1e-5)

    def test_linearity_in_the_direction(self):
        model, expansion = build_lotka_volterra(n_modes=4, n_steps=200)
        base = integrate(expansion.x0)
        single = integrate_derivative_many(base, expansion.modes[2:3])
        doubled = integrate_derivative_many(base, 2.0 * expansion.modes[2:3])
        np.testing.assert_array_equal(doubled, 2.0 * single)

    def test_many_stacks_single_directions(self):
        _, expansion = build_lotka_volterra(n_modes=3, n_steps=200)
        base = integrate(expansion.x0)
        stacked = integrate_derivative_many(base, expansion.modes)
        for m, mode in enumerate(expansion.modes):
            one = integrate_derivative(base, mode)
            np.testing.assert_array_equal(stacked[m, 0], one.y1)
            np.testing.assert_array_equal(stacked[m, 1], one.y2)

    def test_direction_grid_must_match_base(self):
        base = integrate(np.zeros(201))
        with pytest.raises(DimensionMismatch):
            integrate_derivative_many(base, np.zeros((2, 105)))


class TestObservation:
    def test_interleaves_populations(self):
        tgrid = lv_time_grid(4)
        traj = Trajectory(tgrid, np.arange(5.0), np.arange(10.0, 15.0), np.zeros(5))
        np.testing.assert_array_equal(
            lv_observe(traj), [1.0, 11.0, 2.0, 12.0, 3.0, 13.0, 4.0, 14.0]
        )

    def test_recorded_data_layout(self):
        assert OBSERVED_DATA.shape == (8,)
        assert np.all(OBSERVED_DATA > 0)
        # final snapshot matches the initial populations (period-one data)
        np.testing.assert_array_equal(OBSERVED_DATA[6:], INITIAL_STATE)


class TestNoiseCovariance:
    def test_block_structure(self):
        sig = lv_noise_covariance(5.0).entries
        assert sig.shape == (8, 8)
        np.testing.assert_allclose(np.diag(sig), 5.0)
        assert sig[0, 1] == pytest.approx(0.5)
        assert sig[0, 2] == 0.0
        assert sig[2, 3] == pytest.approx(0.5)

    def test_scale_is_linear(self):
        np.testing.assert_allclose(
            lv_noise_covariance(20.0).entries, 4.0 * lv_noise_covariance(5.0).entries
        )


class TestModelWiring:
    def test_dimensions_and_norms(self, lv_small):
        model, expansion = lv_small
        assert model.parameter_dim == len(expansion.x0)
        assert model.observation_dim == 8
        assert model.prediction_dim == model.parameter_dim
        assert model.field_norm_name == "max"
        assert model.field_error_norm([-3.0, 2.0]) == 3.0
        assert model.tensor_error_norm([[1.0, -4.0], [0.0, 2.0]]) == 4.0

    def test_batch_observations_match_loop(self, lv_small):
        model, expansion = lv_small
        rng = np.random.default_rng(5)
        xs = expansion.x0 + 0.1 * rng.normal(size=(3, model.parameter_dim))
        batch = model.observe_state_batch(model.solve_state_batch(xs))
        for k in range(3):
            np.testing.assert_allclose(
                batch[k], model.observe_state(model.solve_state(xs[k])), atol=1e-12
            )

    def test_evaluation_is_affine_in_the_path(self, lv_small):
        model, expansion = lv_small
        ev = evaluate_at(model, expansion)
        assert ev.prediction_affine
        np.testing.assert_array_equal(ev.dr_modes, expansion.modes)
        np.testing.assert_array_equal(ev.second_diag(), 0.0)
        np.testing.assert_allclose(ev.q0, lv_observe(integrate(expansion.x0)))

    def test_bridge_prior_shape(self):
        model, expansion = build_lotka_volterra(n_modes=6, n_steps=200)
        assert expansion.modes.shape == (6, 201)
        t = model.tgrid
        np.testing.assert_allclose(
            expansion.modes[0], np.sqrt(2.0) * np.sin(np.pi * t) / np.pi, atol=1e-14
        )
        assert all(law.kind == "standard-normal" for law in expansion.laws)
