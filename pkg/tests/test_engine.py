import math

import mpmath
import numpy as np
import pytest

from toa_lab import (
    InvalidSpecError,
    LatticeSpec,
    MeasurementSchedule,
    OracleSizeError,
    dense_oracle_evolve,
    evolve,
    init_state,
    position_amplitudes,
    step,
)
from toa_lab.engine import _expm_taylor, _record_grid
from toa_lab.lattice import dense_hamiltonian


def two_site_reference(taus, steps):
    """cos^(2n)(tau) at 50-digit precision, rounded once to double."""
    with mpmath.workdps(50):
        c2 = mpmath.cos(mpmath.mpf(repr(taus))) ** 2
        return np.array([float(c2**int(n)) for n in steps])


class TestInitState:
    def test_middle_site_couples_to_odd_modes(self):
        state = init_state(LatticeSpec(3, "open"), "pos:2")
        np.testing.assert_allclose(state.coeffs, [1 / np.sqrt(2), 0.0, -1 / np.sqrt(2)], atol=1e-15)
        assert state.survival == 1.0 and state.step_count == 0

    def test_mode_initial_is_basis_vector(self):
        state = init_state(LatticeSpec(6, "open"), "mode:1")
        expected = np.zeros(6)
        expected[0] = 1.0
        np.testing.assert_array_equal(state.coeffs, expected)

    def test_ring_position_is_normalized(self):
        state = init_state(LatticeSpec(4, "ring"), "pos:4")
        assert abs(state.norm_squared() - 1.0) < 1e-12

    def test_explicit_vector_is_renormalized(self):
        amp = np.zeros(5, dtype=complex)
        amp[1] = 1.0 + 3e-10
        state = init_state(LatticeSpec(5, "open"), amp)
        assert abs(state.norm_squared() - 1.0) < 1e-13

    @pytest.mark.parametrize("initial", ["pos:0", "pos:6", "mode:9", "reduced-mode:5",
                                         "sideways:2", "pos:"])
    def test_bad_initial_strings(self, initial):
        with pytest.raises(InvalidSpecError):
            init_state(LatticeSpec(5, "open"), initial)

    def test_zero_vector_rejected(self):
        with pytest.raises(InvalidSpecError):
            init_state(LatticeSpec(5, "open"), np.zeros(5, dtype=complex))

    def test_unnormalized_vector_rejected(self):
        with pytest.raises(InvalidSpecError):
            init_state(LatticeSpec(5, "open"), 0.7 * np.eye(5, dtype=complex)[0])

    def test_reduced_mode_needs_boundary_detector(self):
        with pytest.raises(InvalidSpecError):
            init_state(LatticeSpec(5, "open", detector_site=3), "reduced-mode:1")


class TestTwoSite:
    def test_single_step_survival(self):
        state = init_state(LatticeSpec(2, "open"), "pos:1")
        state, factor = step(state, 0.1)
        assert abs(state.survival - math.cos(0.1) ** 2) < 1e-15
        assert abs(factor - state.survival) < 1e-15

    def test_repeated_steps_follow_closed_form(self):
        spec = LatticeSpec(2, "open")
        series = evolve(init_state(spec, "pos:1"),
                        MeasurementSchedule(tau=0.1, max_steps=2000, recording="every"))
        ref = two_site_reference(0.1, series.steps)
        assert np.max(np.abs(series.survival - ref)) < 1e-13

    def test_oracle_matches_closed_form(self):
        spec = LatticeSpec(2, "open")
        series = dense_oracle_evolve(spec, "pos:1",
                                     MeasurementSchedule(tau=0.3, max_steps=500, recording="every"))
        ref = two_site_reference(0.3, series.steps)
        assert np.max(np.abs(series.survival - ref)) < 1e-12


class TestStep:
    def test_detector_amplitude_removed(self):
        state = init_state(LatticeSpec(9, "open"), "pos:4")
        state, _ = step(state, 0.7)
        amps = position_amplitudes(state)
        assert abs(amps[8]) < 1e-12

    def test_survival_equals_coefficient_norm(self):
        state = init_state(LatticeSpec(9, "ring", 5), "pos:2")
        for _ in range(300):
            state, _ = step(state, 0.25)
            assert abs(state.survival - state.norm_squared()) < 1e-12

    def test_survival_monotone_and_factors_telescope(self):
        state = init_state(LatticeSpec(7, "ring"), "pos:3")
        product = 1.0
        previous = 1.0
        for _ in range(400):
            state, factor = step(state, 0.15)
            product *= factor
            assert state.survival <= previous
            previous = state.survival
        assert abs(product - state.survival) < 1e-12

    def test_position_amplitudes_round_trip(self):
        state = init_state(LatticeSpec(6, "open"), "pos:3")
        amps = position_amplitudes(state)
        expected = np.zeros(6)
        expected[2] = 1.0
        np.testing.assert_allclose(amps, expected, atol=1e-12)
        state, _ = step(state, 0.4)
        amps = position_amplitudes(state)
        assert abs(np.vdot(amps, amps).real - state.survival) < 1e-12


class TestEvolve:
    def test_single_step_schedule(self):
        spec = LatticeSpec(5, "open")
        series = evolve(init_state(spec, "pos:2"), MeasurementSchedule(tau=0.3, max_steps=1))
        assert len(series) == 1
        u = _expm_taylor(-1j * 0.3 * dense_hamiltonian(spec))
        expected = 1.0 - abs(u[4, 1]) ** 2
        assert abs(series.survival[0] - expected) < 1e-13

    def test_zero_steps_rejected(self):
        with pytest.raises(InvalidSpecError):
            MeasurementSchedule(tau=0.1, max_steps=0)

    def test_stride_recording(self):
        spec = LatticeSpec(4, "open")
        series = evolve(init_state(spec, "pos:1"),
                        MeasurementSchedule(tau=0.1, max_steps=100, recording="stride:7"))
        assert series.steps[0] == 7 and series.steps[-1] == 100
        assert np.all(np.diff(series.steps[:-1]) == 7)

    def test_log_recording_is_strictly_increasing(self):
        grid = _record_grid(MeasurementSchedule(tau=0.1, max_steps=10**6, recording="log"))
        assert np.all(np.diff(grid) > 0)
        assert grid[-1] == 10**6
        assert len(grid) < 500

    def test_threshold_stop(self):
        spec = LatticeSpec(2, "open")
        series = evolve(init_state(spec, "pos:1"),
                        MeasurementSchedule(tau=0.5, max_steps=10**6, stop_survival=1e-6,
                                            recording="every"))
        assert series.terminal_reason == "threshold"
        assert series.survival[-1] < 1e-6
        assert np.all(series.survival[:-1] >= 1e-6)

    def test_ring_dark_mode_never_decays(self):
        spec = LatticeSpec(8, "ring")
        series = evolve(init_state(spec, "reduced-mode:2"),
                        MeasurementSchedule(tau=0.1, max_steps=10_000, recording="log"))
        np.testing.assert_array_equal(series.survival, 1.0)

    def test_x_scaling_variable(self):
        spec = LatticeSpec(10, "open")
        series = evolve(init_state(spec, "pos:5"),
                        MeasurementSchedule(tau=0.2, max_steps=50, recording="every"))
        np.testing.assert_allclose(series.x, series.steps * 0.2**2 / 10, rtol=1e-15)

    def test_zeno_scaling_of_detection(self):
        # fixed physical time horizon: halving tau halves the detected fraction
        spec = LatticeSpec(20, "open")
        detected = []
        for tau in (0.02, 0.01):
            series = evolve(init_state(spec, "pos:10"),
                            MeasurementSchedule(tau=tau, max_steps=int(round(1.0 / tau)),
                                                recording="every"))
            detected.append(1.0 - series.survival[-1])
        assert detected[0] / detected[1] == pytest.approx(2.0, rel=0.1)


class TestDenseOracle:
    def test_refuses_large_systems(self):
        with pytest.raises(OracleSizeError):
            dense_oracle_evolve(LatticeSpec(65, "open"), "pos:1",
                                MeasurementSchedule(tau=0.1, max_steps=10))

    def test_expm_taylor_matches_scipy(self):
        from scipy.linalg import expm
        h = dense_hamiltonian(LatticeSpec(12, "ring"))
        ours = _expm_taylor(-1j * 0.8 * h)
        assert np.max(np.abs(ours - expm(-1j * 0.8 * h))) < 1e-13

    def test_engine_example_n5(self):
        spec = LatticeSpec(5, "open")
        schedule = MeasurementSchedule(tau=0.1, max_steps=10, recording="every")
        engine = evolve(init_state(spec, "pos:3"), schedule)
        oracle = dense_oracle_evolve(spec, "pos:3", schedule)
        assert abs(engine.survival[-1] - oracle.survival[-1]) < 1e-12

    def test_engine_example_n8_open(self):
        spec = LatticeSpec(8, "open")
        schedule = MeasurementSchedule(tau=0.2, max_steps=100, recording="every")
        engine = evolve(init_state(spec, "pos:3"), schedule)
        oracle = dense_oracle_evolve(spec, "pos:3", schedule)
        assert np.max(np.abs(engine.survival - oracle.survival)) < 1e-10

    def test_engine_example_n6_ring(self):
        spec = LatticeSpec(6, "ring")
        schedule = MeasurementSchedule(tau=0.2, max_steps=100, recording="every")
        engine = evolve(init_state(spec, "pos:2"), schedule)
        oracle = dense_oracle_evolve(spec, "pos:2", schedule)
        assert np.max(np.abs(engine.survival - oracle.survival)) < 1e-10

    @pytest.mark.parametrize("boundary", ["open", "ring"])
    @pytest.mark.parametrize("n", [3, 7, 10])
    def test_oracle_equivalence_interior_detector(self, n, boundary):
        # detector away from the boundary site is exact-engine territory,
        # but the oracle must still agree
        spec = LatticeSpec(n, boundary, detector_site=2)
        schedule = MeasurementSchedule(tau=0.35, max_steps=150, recording="every")
        engine = evolve(init_state(spec, "pos:1"), schedule)
        oracle = dense_oracle_evolve(spec, "pos:1", schedule)
        assert np.max(np.abs(engine.survival - oracle.survival)) < 1e-9

    def test_explicit_vector_agreement(self):
        spec = LatticeSpec(6, "open")
        amp = np.arange(1, 7, dtype=complex) * (1 + 0.5j)
        amp /= np.linalg.norm(amp)
        schedule = MeasurementSchedule(tau=0.2, max_steps=60, recording="every")
        engine = evolve(init_state(spec, amp), schedule)
        oracle = dense_oracle_evolve(spec, amp, schedule)
        assert np.max(np.abs(engine.survival - oracle.survival)) < 1e-10
