import math

import numpy as np
import pytest

from cascadelab.circuit import (
    CircuitSpec,
    InteractionTerm,
    Mode,
    StateVector,
    amplifier_seeded_modes,
    assemble_rhs,
    check_cancellation_numeric,
    check_cancellation_structural,
    total_energy,
)
from cascadelab.errors import NonFiniteStateError, SpecError
from cascadelab.models import (
    CascadeParams,
    DyadicParams,
    bundled_systems,
    cascade_mode,
    cascade_spec,
    delay_circuit_spec,
    DelayParams,
    dyadic_spec,
)

from conftest import state


class TestSpecInvariants:
    def test_duplicate_component_scale_rejected(self):
        with pytest.raises(SpecError):
            CircuitSpec((Mode("a", 1, 0), Mode("b", 1, 0)))

    def test_duplicate_label_rejected(self):
        with pytest.raises(SpecError):
            CircuitSpec((Mode("a", 1, 0), Mode("a", 2, 0)))

    def test_undeclared_mode_in_interaction_rejected(self):
        a, b = Mode("a", 1), Mode("b", 2)
        with pytest.raises(SpecError):
            CircuitSpec((a,), (InteractionTerm(a, a, b, 1.0),))

    def test_zero_coefficient_rejected(self):
        a, b = Mode("a", 1), Mode("b", 2)
        with pytest.raises(SpecError):
            InteractionTerm(a, a, b, 0.0)

    def test_negative_dissipation_rejected(self):
        a = Mode("a", 1)
        with pytest.raises(SpecError):
            CircuitSpec((a,), (), {a: -1.0})

    def test_degenerate_spec_without_interactions_is_valid(self):
        spec = CircuitSpec((Mode("a", 1),))
        report = check_cancellation_structural(spec)
        assert report.passed and report.max_residual == 0.0


class TestAssembleRhs:
    def test_pump_example(self, pump_spec):
        d = assemble_rhs(pump_spec, state(1.0, 0.0))
        assert np.allclose(d.x, [0.0, 1.0], atol=0.0)

    def test_zero_state_gives_zero_derivative(self, pump_spec):
        d = assemble_rhs(pump_spec, state(0.0, 0.0))
        assert np.all(d.x == 0.0)

    def test_dyadic_single_hot_mode(self):
        # lam=2, alpha=1/4, X_3 = 1: dX_3 = -2^(3/2), dX_4 = 2^3
        spec = dyadic_spec(DyadicParams(2.0, 0.25, 0, 4))
        x = np.zeros(5)
        x[3] = 1.0
        d = assemble_rhs(spec, StateVector(0.0, x))
        assert d.x[3] == pytest.approx(-(2.0 ** 1.5), rel=1e-15)
        assert d.x[4] == pytest.approx(8.0, rel=1e-15)
        assert np.all(d.x[:3] == 0.0)

    def test_rejects_non_finite_state(self, pump_spec):
        with pytest.raises(NonFiniteStateError):
            assemble_rhs(pump_spec, state(1.0, math.nan))

    def test_rejects_misaligned_state(self, pump_spec):
        with pytest.raises(SpecError):
            assemble_rhs(pump_spec, state(1.0, 0.0, 0.0))

    def test_quadratic_part_is_bilinear(self, rotor_spec):
        # rhs minus the linear (dissipative) part must scale as c^2
        rng = np.random.default_rng(3)
        x = rng.standard_normal(3)
        q1 = rotor_spec.quadratic(x)
        q2 = rotor_spec.quadratic(2.0 * x)
        assert np.allclose(q2, 4.0 * q1, rtol=1e-14)


class TestTotalEnergy:
    def test_unit_mode(self):
        assert total_energy(state(1.0, 0.0, 0.0)) == 0.5

    def test_unit_vector(self):
        assert total_energy(state(0.6, 0.8)) == pytest.approx(0.5, abs=1e-16)


class TestStructuralCancellation:
    def test_cascade_table_passes_any_parameters(self):
        for eps, K in ((1e-2, 8.0), (0.3, 2.0)):
            spec = cascade_spec(
                CascadeParams(eps0=0.5, eps=eps, K=K, gamma=20.0, n0=3, window=(3, 6))
            )
            report = check_cancellation_structural(spec)
            assert report.passed, report.violating_triples[:3]

    def test_cascade_rotor_triple_sums_to_zero_by_hand(self):
        # the four stored half-terms over modes {(1,n),(3,n),(4,n)}
        p = CascadeParams(eps0=0.5, eps=0.1, K=2.0, gamma=10.0, n0=0, window=(0, 1))
        spec = cascade_spec(p)
        triple = tuple(sorted(cascade_mode(i, 0) for i in (1, 3, 4)))
        coeffs = [
            t.coeff for t in spec.interactions if t.mode_multiset() == triple
        ]
        assert len(coeffs) == 4
        rot = 0.1 ** -2 / 2.0
        assert sorted(coeffs) == pytest.approx([-rot, -rot, rot, rot])
        assert sum(coeffs) == 0.0

    def test_unbalanced_term_fails_and_is_reported(self):
        a, b, c = Mode("a", 1), Mode("b", 2), Mode("c", 3)
        spec = CircuitSpec((a, b, c), (InteractionTerm(a, b, c, 1.0),))
        report = check_cancellation_structural(spec)
        assert not report.passed
        assert report.max_residual == 1.0
        (triple, residual), = report.violating_triples
        assert set(triple) == {a, b, c}

    def test_delay_circuit_triples_match_hand_enumeration(self):
        # each gate contributes one balanced triple; enumerated by hand from
        # the five-mode equations before building
        eps, K, gamma = 0.2, 2.0, 5.0
        spec = delay_circuit_spec(DelayParams(K=K, eps=eps, gamma=gamma))
        a, b, c, d, an = spec.modes
        expected = {
            tuple(sorted((a, d, c))): [-eps ** -2, eps ** -2],
            tuple(sorted((a, a, b))): [-eps, eps],
            tuple(sorted((a, a, c))): [
                -eps ** 2 * math.exp(-gamma), eps ** 2 * math.exp(-gamma)
            ],
            tuple(sorted((b, c, c))): [-gamma / eps, gamma / eps],
            tuple(sorted((d, d, an))): [-K, K],
        }
        seen: dict = {}
        for t in spec.interactions:
            seen.setdefault(t.mode_multiset(), []).append(t.coeff)
        assert set(seen) == set(expected)
        for key, coeffs in expected.items():
            assert sorted(seen[key]) == pytest.approx(sorted(coeffs))
        assert check_cancellation_structural(spec).passed


class TestNumericCancellation:
    def test_pump_identically_zero(self, pump_spec):
        assert check_cancellation_numeric(pump_spec, 100, seed=0) <= 1e-15

    def test_cascade_table_thousand_samples(self):
        spec = cascade_spec(
            CascadeParams(eps0=0.5, eps=1e-2, K=8.0, gamma=30.0, n0=40, window=(40, 43))
        )
        # normalize by the largest coefficient: amplitudes are unit-norm
        scale = max(abs(t.coeff) for t in spec.interactions)
        assert check_cancellation_numeric(spec, 1000, seed=1) / scale <= 1e-12

    def test_corrupted_coefficient_detected(self, pump_spec):
        terms = list(pump_spec.interactions)
        bad = terms[0]
        terms[0] = InteractionTerm(bad.out, bad.in1, bad.in2, bad.coeff * 1.1)
        corrupted = CircuitSpec(pump_spec.modes, tuple(terms))
        assert check_cancellation_numeric(corrupted, 100, seed=2) > 1e-3
        assert not check_cancellation_structural(corrupted).passed

    def test_structural_pass_implies_numeric_pass_on_bundle(self):
        for name, system in bundled_systems().items():
            report = check_cancellation_structural(system.spec)
            assert report.passed, name
            scale = max(
                (abs(t.coeff) for t in system.spec.interactions), default=1.0
            )
            numeric = check_cancellation_numeric(system.spec, 200, seed=5)
            assert numeric <= 1e-12 * max(scale, 1.0), name

    def test_rhs_orthogonal_to_state_property(self):
        rng = np.random.default_rng(11)
        for name, system in bundled_systems().items():
            spec = system.spec
            scale = max((abs(t.coeff) for t in spec.interactions), default=1.0)
            for _ in range(20):
                x = rng.standard_normal(len(spec.modes)) * rng.uniform(0.1, 3.0)
                resid = abs(float(spec.quadratic(x) @ x))
                norm = float(np.linalg.norm(x))
                assert resid <= 1e-12 * scale * norm ** 3 + 1e-300, name


class TestAmplifierSeededModes:
    def test_delay_circuit_flags_only_the_amplified_mode(self):
        spec = delay_circuit_spec(DelayParams(K=2.0, eps=0.2, gamma=5.0))
        assert [m.label for m in amplifier_seeded_modes(spec)] == ["c"]

    def test_cascade_flags_component_three(self):
        spec = cascade_spec(
            CascadeParams(eps0=0.5, eps=0.1, K=2.0, gamma=10.0, n0=0, window=(0, 2))
        )
        seeded = amplifier_seeded_modes(spec)
        assert seeded and all(m.component == 3 for m in seeded)

    def test_plain_pump_has_none(self, pump_spec):
        assert amplifier_seeded_modes(pump_spec) == ()
