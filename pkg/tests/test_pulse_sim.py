"""Pulse-level simulation tests: propagation, calibration, channels."""

import numpy as np
import pytest

from quditpovm.naimark import PulseSchedule, RPulse, schedule_demo
from quditpovm.povm import demo_povm, operational_distance, sic_povm, validate_povm
from quditpovm.pulse_sim import (
    BudgetError,
    DriveConfig,
    NoiseChannel,
    average_gate_fidelity,
    budgeted_schedule,
    calibrate_sqrtx,
    charge_noise_channel,
    compile_gate_schedule,
    gaussian_envelope,
    povm_of_unitaries,
    povm_schedule,
    propagate,
    simulated_povm,
    sqrtx_target,
    sweep_ejec,
)
from quditpovm.transmon import calibrate_params, diagonalize, spectrum

PARAMS = calibrate_params(5.0, 45.0)
SPEC = spectrum(PARAMS)
FREQS = tuple(SPEC.transition_freqs[:3])
DT = 0.222


def snap(duration):
    return round(duration / DT) * DT


def single_pulse(transition, duration, theta=np.pi / 2, phase=0.0):
    return PulseSchedule(
        (RPulse(transition, theta, phase, snap(duration)),),
        FREQS, (0.0, 0.0, 0.0), DT,
    )


class TestPropagate:
    def test_free_evolution_phases(self):
        # a zero-angle pulse has zero amplitude: pure rotating-frame drift
        t = snap(20.0)
        sched = single_pulse(0, t, theta=0.0)
        n_g = 0.3
        u = propagate(sched, PARAMS, n_g)
        energies = diagonalize(PARAMS, n_g)
        m = np.arange(5)
        expected = np.exp(-2j * np.pi * (energies - m * FREQS[0]) * t)
        assert np.max(np.abs(np.diag(u) - expected)) < 1e-10
        assert np.max(np.abs(u - np.diag(np.diag(u)))) < 1e-12

    def test_calibrated_angle_at_average(self):
        t = snap(36.0)
        sched = single_pulse(0, t)
        # propagate on a fictitious transmon whose spectrum equals the
        # n_g-average: calibration promises a pi/2 rotation there; n_g=1/4
        # sits within a dispersion of the average for the qubit transition
        u = propagate(sched, PARAMS, 0.25)
        angle = 2 * np.arctan2(abs(u[1, 0]), abs(u[0, 0]))
        assert angle == pytest.approx(np.pi / 2, abs=1e-3)

    def test_unitarity(self):
        sched = compile_gate_schedule(schedule_demo(), PARAMS, [36.0, 32.0, 14.0])
        for n_g in (0.0, 0.25, 0.5):
            u = propagate(sched, PARAMS, n_g)
            assert np.linalg.norm(u.conj().T @ u - np.eye(5), np.inf) < 1e-8

    def test_two_level_reduction_matches_analytic(self):
        # decouple everything except 0<->1 and compare with the closed-form
        # per-sample two-level rotation composed independently
        drive = DriveConfig(coupling_weights=(1.0, 0.0, 0.0, 0.0))
        t = snap(24.0)
        sched = single_pulse(0, t, phase=0.7)
        n_g = 0.5
        u = propagate(sched, PARAMS, n_g, drive)

        from quditpovm.pulse_sim import _calibrated_amplitude

        amp = _calibrated_amplitude(PARAMS, drive, 0, round(t / DT),
                                    np.pi / 2, FREQS[0])
        env = amp * gaussian_envelope(round(t / DT), DT)
        energies = diagonalize(PARAMS, n_g)
        delta = 2 * np.pi * (energies[1] - energies[0] - FREQS[0])  # rad/ns
        block = np.eye(2, dtype=complex)
        for a in env:
            # block Hamiltonian (a/2)(cos phi sx + sin phi sy) - (delta/2) sz
            # plus trace delta/2: exact rotation via trig formulas
            omega = np.hypot(a, delta)
            half = omega * DT / 2
            c, s = np.cos(half), np.sin(half)
            if omega > 0:
                nx = a * np.cos(0.7) / omega
                ny = a * np.sin(0.7) / omega
                nz = -delta / omega
            else:
                nx = ny = nz = 0.0
            step = np.array(
                [
                    [c - 1j * s * nz, -1j * s * (nx - 1j * ny)],
                    [-1j * s * (nx + 1j * ny), c + 1j * s * nz],
                ]
            ) * np.exp(-1j * delta * DT / 2)
            block = step @ block
        # global phase of the block relative to level 0 energy drift
        phase = np.exp(-2j * np.pi * energies[0] * t)
        assert np.max(np.abs(u[:2, :2] - phase * block)) < 1e-6

    def test_detuned_drive_transfers_less(self):
        drive = DriveConfig(coupling_weights=(0.0, 0.0, 1.0, 0.0))
        t = snap(14.0)
        sched = single_pulse(2, t)
        # resonant: spectrum artificially at the average (n_g where the
        # 2<->3 transition crosses its mean); detuned: n_g = 0 (extremal)
        spec = SPEC
        f23 = spec.energies[:, 3] - spec.energies[:, 2]
        n_g_res = spec.n_g_grid[np.argmin(np.abs(f23 - f23.mean()))]
        u_res = propagate(sched, PARAMS, n_g_res, drive)
        u_det = propagate(sched, PARAMS, 0.0, drive)
        assert abs(u_det[3, 2]) < abs(u_res[3, 2])

    def test_step_halving_convergence(self):
        sched = compile_gate_schedule(schedule_demo(), PARAMS, [36.0, 32.0, 14.0])
        u_coarse = propagate(sched, PARAMS, 0.3)
        fine = DriveConfig(sample_dt=DT / 2)
        sched_fine = compile_gate_schedule(
            schedule_demo(), PARAMS, [36.0, 32.0, 14.0], fine
        )
        u_fine = propagate(sched_fine, PARAMS, 0.3, fine)
        assert np.linalg.norm(u_coarse - u_fine, 2) < 1e-4


class TestChannel:
    def test_weights_and_trace_preservation(self):
        sched = single_pulse(0, 20.0)
        ch = charge_noise_channel(sched, PARAMS, k=8)
        assert ch.weights.sum() == pytest.approx(1.0)
        acc = sum(
            w * (u.conj().T @ u) for w, u in zip(ch.weights, ch.unitaries)
        )
        assert np.linalg.norm(acc - np.eye(5), np.inf) < 1e-8

    def test_k_one_degenerates(self):
        sched = single_pulse(0, 20.0)
        ch = charge_noise_channel(sched, PARAMS, k=1)
        assert ch.unitaries.shape == (1, 5, 5)
        assert ch.weights[0] == 1.0

    def test_low_dispersion_members_agree(self):
        # 0<->1 pulses deep in the transmon regime barely feel the offset
        # charge: members agree on the computational subspace
        params = calibrate_params(5.0, 80.0)
        freqs = tuple(spectrum(params).transition_freqs[:3])
        sched = PulseSchedule(
            (RPulse(0, np.pi / 2, 0.0, snap(36.0)),), freqs, (0, 0, 0), DT
        )
        ch = charge_noise_channel(sched, params, k=6)
        base = ch.unitaries[0][:3, :3]
        for u in ch.unitaries[1:]:
            assert np.max(np.abs(u[:3, :3] - base)) < 1e-3

    def test_channel_averaging_is_linear(self):
        sched = compile_gate_schedule(schedule_demo(), PARAMS, [20.0, 16.0, 6.0])
        ch = charge_noise_channel(sched, PARAMS, k=5)
        povm = povm_of_unitaries(ch)
        alpha, beta = 0.8, 0.6j
        vec = np.array([alpha, beta, 0, 0, 0], dtype=complex)
        vec /= np.linalg.norm(vec)
        p_members = []
        for u in ch.unitaries:
            amps = u @ vec
            probs = np.abs(amps) ** 2
            p_members.append(
                [probs[0], probs[1], probs[2], probs[3] + probs[4]]
            )
        p_mean = np.mean(p_members, axis=0)
        rho = np.outer(vec[:2], vec[:2].conj())
        p_povm = [np.trace(rho @ op).real for op in povm.operators]
        assert np.allclose(p_povm, p_mean, atol=1e-12)


class TestFidelity:
    def test_exact_target_gives_one(self):
        target = sqrtx_target(PARAMS, 0, snap(36.0))
        ch = NoiseChannel(np.array([1.0]), target[None])
        assert average_gate_fidelity(ch, target, (0, 1, 2)) == pytest.approx(1.0)

    def test_excluded_level_phase_invisible(self):
        target = sqrtx_target(PARAMS, 0, snap(36.0))
        phased = target @ np.diag([1, 1, 1, np.exp(1j * 0.8), np.exp(-1j * 0.3)])
        ch = NoiseChannel(np.array([1.0]), phased[None])
        assert average_gate_fidelity(ch, target, (0, 1, 2)) == pytest.approx(1.0)

    def test_empty_subspace_rejected(self):
        target = sqrtx_target(PARAMS, 0, snap(36.0))
        ch = NoiseChannel(np.array([1.0]), target[None])
        with pytest.raises(ValueError):
            average_gate_fidelity(ch, target, ())


GRID = (np.arange(9, 181, 18) * DT)  # 2..40 ns coarse grid for fast tests


class TestCalibrationSweep:
    def test_interior_maximum_at_ratio_40(self):
        params = calibrate_params(5.0, 40.0)
        cal = calibrate_sqrtx(params, 2, duration_grid=GRID, k=8)
        best = int(np.argmax(cal.fidelities))
        assert 0 < best < len(cal.fidelities) - 1

    def test_t_opt_grows_with_ratio(self):
        t_opts = []
        for ratio in (30.0, 60.0):
            params = calibrate_params(5.0, ratio)
            cal = calibrate_sqrtx(params, 2, duration_grid=GRID, k=8)
            t_opts.append(cal.t_opt)
        assert t_opts[1] > t_opts[0]

    def test_sx01_infidelity_scale_at_36ns(self):
        cal = calibrate_sqrtx(
            PARAMS, 0, duration_grid=np.array([snap(36.0)] + list(GRID[-2:])), k=20
        )
        infid = 1.0 - cal.fidelity_at(snap(36.0))
        assert 1e-5 <= infid <= 1e-2  # order 1e-4..1e-3


class TestSimulatedPovm:
    def test_ideal_channel_reduces_to_compiler_roundtrip(self):
        from quditpovm.naimark import ideal_unitary_of_schedule

        sched = povm_schedule(sic_povm(), PARAMS, [20.0, 16.0, 6.0])
        avg = SPEC.average_energies
        ideal = ideal_unitary_of_schedule(sched, avg)
        ch = NoiseChannel(np.array([1.0]), ideal[None])
        povm = povm_of_unitaries(ch, sic_povm().labels)
        assert operational_distance(povm, sic_povm()) < 1e-8

    def test_simulated_povm_is_valid(self):
        sched = povm_schedule(sic_povm(), PARAMS, [20.0, 16.0, 6.0])
        sim = simulated_povm(sched, PARAMS, k=8)
        report = validate_povm(sim, tol=1e-6)
        assert report.valid

    def test_demo_sequence_five_pulses(self):
        sched = compile_gate_schedule(schedule_demo(), PARAMS, [20.0, 16.0, 6.0])
        assert len(sched.pulses) == 5
        sim = simulated_povm(sched, PARAMS, k=8)
        assert operational_distance(sim, demo_povm()) < 0.2


class TestBudget:
    @pytest.fixture(scope="class")
    def cals(self):
        params = calibrate_params(5.0, 40.0)
        return [
            calibrate_sqrtx(params, n, duration_grid=GRID, k=8) for n in range(3)
        ]

    def test_loose_budget_keeps_optimum(self, cals):
        t_opt_total = sum(
            c.t_opt * n for c, n in zip(cals, (4, 4, 2))
        )
        durations = budgeted_schedule(cals, t_opt_total + 1.0)
        assert np.allclose(durations, [c.t_opt for c in cals], atol=1e-9)

    def test_budget_is_respected(self, cals):
        durations = budgeted_schedule(cals, 100.0)
        total = sum(d * n for d, n in zip(durations, (4, 4, 2)))
        assert total <= 100.0 + 1e-9

    def test_infeasible_budget(self, cals):
        with pytest.raises(BudgetError):
            budgeted_schedule(cals, 1.0)


class TestSweep:
    def test_structure_and_determinism(self):
        rows1 = sweep_ejec([40.0], [None, 100.0], sic_povm(), k=4,
                           duration_grid=GRID)
        rows2 = sweep_ejec([40.0], [None, 100.0], sic_povm(), k=4,
                           duration_grid=GRID)
        assert len(rows1) == 2
        for a, b in zip(rows1, rows2):
            assert a == b
        assert rows1[0].error == ""
        assert rows1[0].d_od > 0

    def test_failed_ratio_recorded(self):
        rows = sweep_ejec([5.0], [None], sic_povm(), k=4, duration_grid=GRID)
        assert len(rows) == 1
        assert rows[0].error != ""
        assert np.isnan(rows[0].d_od)
