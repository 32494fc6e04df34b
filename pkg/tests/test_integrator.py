import math

import numpy as np
import pytest

from cascadelab.circuit import (
    CircuitSpec,
    InteractionTerm,
    Mode,
    StateVector,
    total_energy,
)
from cascadelab.errors import (
    DivergenceError,
    EventNotFoundError,
    SpecError,
    StiffnessError,
    WindowExhaustedError,
)
from cascadelab.gates import pump_closed_form
from cascadelab.integrator import (
    IntegratorConfig,
    WindowPolicy,
    extend_window,
    integrate,
    integrate_until,
    stitch,
    top_scale_energy_fraction,
)
from cascadelab.models import (
    CascadeParams,
    DelayParams,
    DyadicParams,
    bundled_systems,
    cascade_initial_state,
    cascade_run,
    cascade_spec,
    delay_circuit_spec,
    delay_initial_state,
    dyadic_spec,
)

from conftest import state


class TestConfigValidation:
    def test_rtol_range(self):
        with pytest.raises(ValueError):
            IntegratorConfig(rtol=1e-2)
        with pytest.raises(ValueError):
            IntegratorConfig(rtol=0.0)

    def test_positive_atol(self):
        with pytest.raises(ValueError):
            IntegratorConfig(atol=0.0)
        with pytest.raises(ValueError):
            IntegratorConfig(atol_overrides={"x": -1.0})

    def test_step_bounds(self):
        with pytest.raises(ValueError):
            IntegratorConfig(h_min=1.0, h_max=0.5)

    def test_event_tol(self):
        with pytest.raises(ValueError):
            IntegratorConfig(event_tol=0.0)


class TestIntegrate:
    def test_pump_endpoint(self, pump_spec, tight_cfg):
        traj = integrate(pump_spec, state(1.0, 0.0), 5.0, tight_cfg)
        exact = pump_closed_form(1.0, 1.0, 5.0)
        assert np.abs(traj.states[-1] - exact).max() <= 1e-8

    def test_inviscid_dissipation_ledger_is_zero(self, pump_spec, tight_cfg):
        traj = integrate(pump_spec, state(1.0, 0.0), 3.0, tight_cfg)
        assert np.all(traj.dissipation == 0.0)

    def test_requires_forward_time(self, pump_spec, tight_cfg):
        with pytest.raises(ValueError):
            integrate(pump_spec, state(1.0, 0.0), 0.0, tight_cfg)

    def test_sample_cadence(self, pump_spec):
        cfg = IntegratorConfig(rtol=1e-8, atol=1e-12, sample_interval=0.25)
        traj = integrate(pump_spec, state(1.0, 0.0), 2.0, cfg)
        assert np.allclose(traj.times, np.arange(9) * 0.25, atol=1e-15)

    def test_deterministic_bit_for_bit(self, rotor_spec, tight_cfg):
        a = integrate(rotor_spec, state(1.0, 0.0, 1.0), 10.0, tight_cfg)
        b = integrate(rotor_spec, state(1.0, 0.0, 1.0), 10.0, tight_cfg)
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.states, b.states)
        assert (a.accepted, a.rejected) == (b.accepted, b.rejected)

    def test_divergence_error_carries_last_finite_state(self):
        # du/dt = u^2 overflows quickly under a large fixed step
        u, v = Mode("u", 1), Mode("v", 2)
        spec = CircuitSpec((u, v), (InteractionTerm(u, u, u, 1.0),))
        cfg = IntegratorConfig(rtol=1e-6, atol=1e-9, h_min=0.5, h_max=0.5)
        with pytest.raises(DivergenceError) as err:
            integrate(spec, state(1.0, 0.0), 50.0, cfg)
        assert np.all(np.isfinite(err.value.state.x))

    def test_blowup_surfaces_as_stiffness_failure(self):
        # adaptive control on the same problem shrinks h to underflow while
        # the state is still finite: reported as stiffness, not divergence
        u, v = Mode("u", 1), Mode("v", 2)
        spec = CircuitSpec((u, v), (InteractionTerm(u, u, u, 1.0),))
        with pytest.raises(StiffnessError) as err:
            integrate(spec, state(1.0, 0.0), 2.0, IntegratorConfig(rtol=1e-6, atol=1e-9))
        assert err.value.t == pytest.approx(1.0, abs=0.01)
        assert np.all(np.isfinite(err.value.state.x))

    def test_stiffness_error_when_h_min_too_large(self, pump_spec):
        cfg = IntegratorConfig(rtol=1e-10, atol=1e-14, h_min=0.5, h_max=1.0)
        with pytest.raises(StiffnessError):
            integrate(pump_spec, state(1.0, 0.0), 5.0, cfg)


class TestOrder:
    def test_fixed_step_error_ratio_is_fifth_order(self, rotor_spec):
        # halving h must shrink the endpoint error by 2^5, within [16, 64]
        t_end = 2.0
        errors = []
        for n in (20, 40, 80, 160):
            h = t_end / n
            cfg = IntegratorConfig(rtol=1e-4, atol=1.0, h_min=h, h_max=h)
            traj = integrate(rotor_spec, state(1.0, 0.0, 1.0), t_end, cfg)
            exact = np.array([math.cos(t_end), math.sin(t_end), 1.0])
            errors.append(float(np.abs(traj.states[-1] - exact).max()))
        for coarse, fine in zip(errors, errors[1:]):
            assert 16.0 <= coarse / fine <= 64.0


class TestEnergyBudget:
    def test_bundled_inviscid_systems_conserve(self):
        cfg = IntegratorConfig(rtol=1e-10, atol=1e-14)
        for name, system in bundled_systems().items():
            traj = integrate(system.spec, system.state0, 20.0, cfg)
            e0 = total_energy(system.state0)
            energies = 0.5 * (traj.states ** 2).sum(axis=1)
            assert np.abs(energies - e0).max() / e0 <= 1e-9, name

    def test_viscous_identity_to_1e6(self, tight_cfg):
        spec = dyadic_spec(DyadicParams(2.0, 0.25, 0, 4))
        x0 = np.zeros(5)
        x0[0] = 1.0
        traj = integrate(spec, StateVector(0.0, x0), 5.0, tight_cfg)
        e0 = 0.5
        eT = 0.5 * float(traj.states[-1] @ traj.states[-1])
        assert abs(eT + traj.dissipation_integral - e0) / e0 <= 1e-6
        assert traj.dissipation_integral > 0.1

    def test_pure_decay_matches_analytic_dissipated_share(self, tight_cfg):
        # single mode, rate nu: energy dissipated by T is (1 - e^(-2 nu T))/2
        u = Mode("u", 1)
        nu, T = 0.7, 3.0
        spec = CircuitSpec((u,), (), {u: nu})
        traj = integrate(spec, state(1.0), T, tight_cfg)
        assert traj.states[-1, 0] == pytest.approx(math.exp(-nu * T), rel=1e-10)
        expected = 0.5 * (1.0 - math.exp(-2 * nu * T))
        assert traj.dissipation_integral == pytest.approx(expected, rel=1e-9)


def _rk4_delay_event(K, eps, gamma, threshold, t_end, dt):
    """Independent fixed-step reference locating c == threshold."""
    seed = eps ** 2 * math.exp(-gamma)
    rot = eps ** -2
    amp = gamma / eps

    def f(y):
        a, b, c, d, an = y
        return np.array([
            -rot * c * d - eps * a * b - seed * a * c,
            eps * a * a - amp * c * c,
            seed * a * a + amp * b * c,
            rot * c * a - K * d * an,
            K * d * d,
        ])

    y = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
    t = 0.0
    prev = y[2] - threshold
    for _ in range(int(round(t_end / dt))):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
        g = y[2] - threshold
        if prev < 0.0 <= g:
            return t - dt * g / (g - prev)
        prev = g
    raise AssertionError("reference run found no crossing")


class TestEvents:
    def test_pump_event_inverts_closed_form(self, pump_spec, tight_cfg):
        target = math.tanh(1.0)
        res = integrate_until(
            pump_spec, state(1.0, 0.0), lambda t, x: x[1] - target, 3.0, tight_cfg
        )
        assert abs(res.t_event - 1.0) <= 1e-9
        assert res.state.x[1] == pytest.approx(target, abs=1e-12)

    def test_zero_at_start_rejected(self, pump_spec, tight_cfg):
        with pytest.raises(ValueError):
            integrate_until(
                pump_spec, state(1.0, 0.0), lambda t, x: x[1], 1.0, tight_cfg
            )

    def test_no_root_raises_with_budget(self, pump_spec, tight_cfg):
        with pytest.raises(EventNotFoundError) as err:
            integrate_until(
                pump_spec, state(1.0, 0.0), lambda t, x: x[1] - 5.0, 1.0, tight_cfg
            )
        assert err.value.budget == 1.0
        assert err.value.trajectory is not None
        assert err.value.trajectory.t_final == pytest.approx(1.0)

    def test_delay_ignition_matches_rk4_reference(self):
        # threshold far below the working amplitudes; oracle is a fixed-step
        # reference integrator written independently above
        K, eps, gamma = 10.0, 1e-3, 30.0
        threshold = K ** -10 * eps ** 2
        spec = delay_circuit_spec(DelayParams(K=K, eps=eps, gamma=gamma))
        cfg = IntegratorConfig(rtol=1e-10, atol=1e-16, atol_overrides={"c": 1e-30})
        res = integrate_until(
            spec, delay_initial_state(),
            lambda t, x: x[2] - threshold, 2.0, cfg,
        )
        reference = _rk4_delay_event(K, eps, gamma, threshold, 2.0, 1e-5)
        assert abs(res.t_event - reference) <= 1e-6

    def test_event_determinism(self, pump_spec, tight_cfg):
        runs = [
            integrate_until(
                pump_spec, state(1.0, 0.0), lambda t, x: x[1] - 0.5, 3.0, tight_cfg
            )
            for _ in range(2)
        ]
        assert runs[0].t_event == runs[1].t_event
        assert np.array_equal(runs[0].state.x, runs[1].state.x)


class TestStitch:
    def test_pads_and_offsets(self):
        t1 = np.array([0.0, 1.0])
        t2 = np.array([1.0, 2.0])
        from cascadelab.integrator import Trajectory

        a = Trajectory(t1, np.array([[1.0], [2.0]]), np.array([0.0, 0.5]), 1, 0)
        b = Trajectory(t2, np.array([[2.0, 0.0], [3.0, 1.0]]), np.array([0.0, 0.25]), 1, 0)
        merged = stitch([a, b], 2)
        assert np.array_equal(merged.times, [0.0, 1.0, 2.0])
        assert np.array_equal(merged.states, [[1.0, 0.0], [2.0, 0.0], [3.0, 1.0]])
        assert np.allclose(merged.dissipation, [0.0, 0.5, 0.75])
        assert merged.accepted == 2


class TestWindowExtension:
    def _policy(self, p, cap):
        from dataclasses import replace

        return WindowPolicy(
            threshold=1e-12,
            build=lambda n_hi: cascade_spec(replace(p, window=(p.window[0], n_hi))),
            n_cap=cap,
        )

    def test_appended_modes_are_zero_and_energy_unchanged(self):
        p = CascadeParams(eps0=0.5, eps=0.25, K=1.5, gamma=4.0, n0=0, window=(0, 1))
        spec = cascade_spec(p)
        s0 = cascade_initial_state(p, spec)
        new_spec, s1 = extend_window(spec, s0, self._policy(p, 4))
        assert len(new_spec.modes) == len(spec.modes) + 4
        assert np.all(s1.x[len(spec.modes):] == 0.0)
        assert total_energy(s1) == total_energy(s0)

    def test_cap_raises_window_exhausted(self):
        p = CascadeParams(eps0=0.5, eps=0.25, K=1.5, gamma=4.0, n0=0, window=(0, 1))
        spec = cascade_spec(p)
        s0 = cascade_initial_state(p, spec)
        with pytest.raises(WindowExhaustedError):
            extend_window(spec, s0, self._policy(p, 1))

    def test_prefix_violation_rejected(self, pump_spec):
        policy = WindowPolicy(
            threshold=0.5,
            build=lambda n_hi: CircuitSpec((Mode("q", 1, n_hi),)),
            n_cap=10,
        )
        with pytest.raises(SpecError):
            extend_window(pump_spec, state(1.0, 0.0), policy)

    def test_trigger_never_fires_on_isolated_top_mode(self, tight_cfg):
        # a pump pair at scales (0, 1) plus an uncoupled zero mode at scale 2:
        # the top-scale share stays exactly zero for the whole run
        lo, hi, top = Mode("u0", 1, 0), Mode("u1", 1, 1), Mode("u2", 1, 2)
        terms = (
            InteractionTerm(lo, lo, hi, -1.0),
            InteractionTerm(hi, lo, lo, 1.0),
        )
        spec = CircuitSpec((lo, hi, top), terms)
        with pytest.raises(EventNotFoundError) as err:
            integrate_until(
                spec, state(1.0, 0.0, 0.0),
                lambda t, x: top_scale_energy_fraction(spec, x) - 1e-12,
                5.0, tight_cfg,
            )
        assert np.all(err.value.trajectory.states[:, 2] == 0.0)

    def test_growing_window_reproduces_fixed_window(self):
        # horizon covers the pre-burst phase with two window extensions;
        # later a rotor burst amplifies any restart perturbation chaotically,
        # so agreement past the first full handover is not meaningful
        p = CascadeParams(eps0=0.5, eps=0.25, K=1.5, gamma=4.0, n0=0, window=(0, 1))
        cfg = IntegratorConfig(rtol=1e-10, atol=1e-16, atol_overrides={
            f"c{n}": 1e-24 for n in range(0, 5)
        })
        t_end = 2.5
        grown = cascade_run(p, cfg, t_end=t_end, max_extra_scales=2)
        from dataclasses import replace

        assert max(m.scale for m in grown.spec.modes) == 3  # two extensions
        fixed_p = replace(p, window=(0, 3))
        fixed_spec = cascade_spec(fixed_p)
        fixed = integrate(
            fixed_spec, cascade_initial_state(fixed_p, fixed_spec), t_end, cfg
        )
        assert grown.spec.modes == fixed_spec.modes
        assert np.abs(grown.trajectory.states[-1] - fixed.states[-1]).max() <= 1e-9
