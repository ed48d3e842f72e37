import numpy as np
import pytest

from gpelab.core import ModelParams, ParameterError, mass
from gpelab.evolve import EvolveConfig
from gpelab.functionals import (SetLabel, action, h_omega_norm_sq, nehari,
                                potential)
from gpelab.core import grad_norm_sq
from gpelab.experiments import (HypothesisError, construct_cross_point,
                                dichotomy_run, dilation_exponent,
                                estimate_d_n_upper, estimate_d_omega,
                                estimate_levels, nehari_project,
                                random_trial_field, scale_amplitude,
                                scale_dilation, scale_mass_preserving,
                                scale_potential_preserving, stability_run,
                                threshold_sweep)

from helpers import rel_err


class TestScalings:
    def test_amplitude_scaling_matches_functional(self, bound_state,
                                                  params_critical):
        lam = 1.23
        H = h_omega_norm_sq(bound_state.profile, params_critical)
        P = potential(bound_state.profile, params_critical)
        K = nehari(scale_amplitude(bound_state.profile, lam), params_critical)
        assert K == pytest.approx(lam ** 2 * H - lam ** (params_critical.p + 1) * P,
                                  rel=1e-12)

    def test_mass_preserving(self, bound_state):
        for mu in (0.7, 1.4):
            v = scale_mass_preserving(bound_state.profile, mu)
            assert rel_err(mass(v), bound_state.mass) < 1e-6

    def test_potential_preserving(self, bound_state, params_critical):
        P0 = potential(bound_state.profile, params_critical)
        for mu in (0.8, 1.3):
            v = scale_potential_preserving(bound_state.profile, mu,
                                           params_critical)
            assert rel_err(potential(v, params_critical), P0) < 1e-6

    def test_dilation_exponent_positive(self):
        for dim in (3, 4):
            for b in (0.25, 0.5, 0.75):
                pmax = 1 + (4 - 2 * b) / (dim - 2)
                for frac in (0.2, 0.5, 0.9):
                    p = 1 + frac * (pmax - 1)
                    params = ModelParams(dim=dim, b=b, p=p, gamma=1.0)
                    assert dilation_exponent(params) > 0

    def test_dilation_exponent_vanishes_at_upper_power(self):
        # a = 0 exactly at p = p_max
        b, dim = 0.5, 3
        pmax = 1 + (4 - 2 * b) / (dim - 2)
        a = (4 - 2 * b - (dim - 2) * (pmax - 1)) / (pmax - 1)
        assert a == pytest.approx(0.0, abs=1e-15)

    def test_dilation_changes_kinetic_term_with_exponent(self, bound_state,
                                                         params_critical):
        # the kinetic part of the dilated profile scales like mu^a
        a = dilation_exponent(params_critical)
        g1 = grad_norm_sq(scale_dilation(bound_state.profile, 1.2,
                                         params_critical))
        g0 = grad_norm_sq(bound_state.profile)
        assert rel_err(g1 / g0, 1.2 ** a) < 1e-4


class TestNehariLevel:
    def test_projection_fixed_point(self, bound_state, params_critical):
        _, lam0 = nehari_project(bound_state.profile, params_critical)
        assert abs(lam0 - 1.0) < 1e-10

    def test_projection_stationary_at_near_minimizer(self, bound_state,
                                                     params_critical):
        # projecting a state already on the zero set moves the action by
        # less than 1e-10
        S0 = action(bound_state.profile, params_critical)
        proj, _ = nehari_project(bound_state.profile, params_critical)
        assert abs(action(proj, params_critical) - S0) < 1e-10 * S0

    def test_projection_lands_on_zero_set(self, grid, params_critical, rng):
        u = random_trial_field(grid, rng)
        proj, _ = nehari_project(u, params_critical)
        H = h_omega_norm_sq(proj, params_critical)
        assert abs(nehari(proj, params_critical)) < 1e-10 * H

    def test_flow_seeded_matches_minimizer_action(self, bound_state, grid,
                                                  params_critical):
        d = estimate_d_omega(params_critical, grid,
                             reference=bound_state.profile, n_random=3)
        S = action(bound_state.profile, params_critical)
        assert abs(d - S) <= 1e-6 * S
        assert d > 0

    def test_random_restarts_agree_within_percent(self, bound_state, grid,
                                                  params_critical):
        d_ref = action(bound_state.profile, params_critical)
        d_rand = estimate_d_omega(params_critical, grid, reference=None,
                                  n_random=15, seed=3)
        assert abs(d_rand - d_ref) <= 1e-2 * d_ref


class TestCrossLevel:
    def test_cross_point_admissible(self, bound_state, params_critical):
        pt = construct_cross_point(bound_state.profile, params_critical, 1.05)
        assert pt.nehari < 0
        assert abs(pt.virial) < 1e-8 * grad_norm_sq(pt.field)
        assert pt.action > 0

    def test_needs_amplitude_above_one(self, bound_state, params_critical):
        with pytest.raises(ParameterError):
            construct_cross_point(bound_state.profile, params_critical, 0.9)

    def test_rejects_negative_dilation_coefficient(self, bound_state,
                                                   params_critical):
        # far outside the admissible amplitude window
        with pytest.raises(ParameterError):
            construct_cross_point(bound_state.profile, params_critical, 3.0)

    def test_upper_bound_positive(self, bound_state, grid, params_critical):
        dn, points = estimate_d_n_upper(bound_state.profile, params_critical)
        assert dn > 0
        assert all(p.action >= dn for p in points)

    def test_levels_bundle(self, bound_state, grid, params_critical):
        levels = estimate_levels(params_critical, grid, reference=bound_state,
                                 n_random=3)
        assert levels.d == min(levels.d_omega, levels.d_n_upper)
        assert levels.d > 0
        assert levels.d_omega > 0
        payload = levels.as_dict()
        assert set(payload) == {"d_omega", "d_n_upper", "d", "trial_count"}

    def test_supercritical_levels(self, bound_state_super, grid,
                                  params_supercritical):
        dn, _ = estimate_d_n_upper(bound_state_super.profile,
                                   params_supercritical)
        d_om = estimate_d_omega(params_supercritical, grid,
                                reference=bound_state_super.profile,
                                n_random=2)
        assert dn > 0 and d_om > 0


class TestDichotomy:
    D = 15.0

    def test_outside_hypothesis(self, bound_state, params_critical):
        cfg = EvolveConfig(dt=1e-3, t_end=0.5)
        with pytest.raises(HypothesisError, match="outside hypothesis"):
            dichotomy_run(bound_state.profile, params_critical, self.D, cfg)

    def test_r_plus_run(self, bound_state, params_critical):
        u0 = scale_amplitude(bound_state.profile, 0.5)
        cfg = EvolveConfig(dt=5e-4, t_end=2.2, record_every=40)
        out = dichotomy_run(u0, params_critical, self.D, cfg,
                            sample_times=(0.5, 1.0, 2.0))
        assert out.initial_label is SetLabel.R_PLUS
        assert out.blowup_time is None
        assert [lab for _, lab in out.labels] == [SetLabel.R_PLUS] * 3
        assert out.consistent

    def test_k_minus_run(self, bound_state, params_critical):
        u0 = scale_amplitude(bound_state.profile, 1.4)
        cfg = EvolveConfig(dt=5e-4, t_end=float(np.pi), record_every=40)
        out = dichotomy_run(u0, params_critical, self.D, cfg,
                            sample_times=(0.1, 0.3))
        assert out.initial_label is SetLabel.K_MINUS
        assert out.blowup_time is not None
        assert out.consistent

    def test_supercritical_k_minus(self, bound_state_super,
                                   params_supercritical):
        u0 = scale_mass_preserving(
            scale_amplitude(bound_state_super.profile, 1.0), 3.0)
        d = 13.59
        assert action(u0, params_supercritical) < d
        cfg = EvolveConfig(dt=5e-4, t_end=float(np.pi), record_every=40)
        out = dichotomy_run(u0, params_supercritical, d, cfg,
                            sample_times=(0.05,))
        assert out.initial_label is SetLabel.K_MINUS
        assert out.blowup_time is not None


class TestStability:
    def test_unperturbed_orbit_stays_put(self, params_subcritical, grid):
        res = stability_run(params_subcritical, grid, q=1.0, eps=0.0,
                            horizon=5.0, dt=2.5e-3, n_samples=10)
        assert res.sup_distance < 1e-4

    def test_small_perturbation_stays_close(self, params_subcritical, grid):
        eps = 1e-2
        res = stability_run(params_subcritical, grid, q=1.0, eps=eps,
                            horizon=5.0, dt=5e-3, n_samples=10, seed=5)
        assert res.initial_distance == pytest.approx(eps, rel=0.5)
        assert res.sup_distance <= 5 * eps
        assert res.blowup_time is None


class TestThresholdSweep:
    def test_rows_and_outcomes(self, soliton, grid, params_critical, tmp_path):
        cfg = EvolveConfig(dt=5e-4, t_end=float(np.pi), record_every=40)
        result = threshold_sweep(soliton.profile, params_critical, grid,
                                 c_values=(0.9, 1.1), lambda_values=(1.65,),
                                 cfg=cfg)
        by_c = {row.c: row for row in result.rows}
        assert by_c[0.9].outcome == "global_bounded"
        assert by_c[0.9].max_grad_ratio <= 3.0
        assert by_c[1.1].outcome == "blowup"
        assert by_c[1.1].t_blow <= 1.1 * by_c[1.1].t_pred
        path = tmp_path / "sweep.csv"
        result.to_csv(path, metadata={"seed": 1})
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "# seed = 1"
        assert lines[1] == "c,lambda,outcome,t_blow,t_pred,max_grad_ratio"
        assert len(lines) == 4

    def test_worker_pool_matches_serial(self, soliton, grid, params_critical):
        cfg = EvolveConfig(dt=2e-3, t_end=0.5, record_every=20)
        serial = threshold_sweep(soliton.profile, params_critical, grid,
                                 c_values=(0.5,), lambda_values=(1.0, 1.3),
                                 cfg=cfg, workers=1)
        pooled = threshold_sweep(soliton.profile, params_critical, grid,
                                 c_values=(0.5,), lambda_values=(1.0, 1.3),
                                 cfg=cfg, workers=2)
        for a, b in zip(serial.rows, pooled.rows):
            assert a == b

    def test_requires_critical(self, soliton, grid, params_subcritical):
        cfg = EvolveConfig(dt=1e-3, t_end=0.5)
        with pytest.raises(ParameterError):
            threshold_sweep(soliton.profile, params_subcritical, grid,
                            c_values=(1.0,), lambda_values=(1.0,), cfg=cfg)
