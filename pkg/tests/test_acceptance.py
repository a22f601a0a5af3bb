"""Acceptance criteria.

Each test covers one release criterion at its stated tolerance and prints
one [PASS]/[FAIL] line.  Tolerances are pinned here; nothing is deferred
to later calibration.  Run with ``pytest tests/test_acceptance.py -v -s``.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

import quditpovm as q
from quditpovm import pulse_sim as ps
from quditpovm import tomography as tg
from quditpovm.estimation import scatter_export
from quditpovm.naimark import (
    compile_schedule,
    ideal_unitary_of_schedule,
    povm_from_unitary,
    schedule_demo,
    to_sqrtx_sequence,
)

LADDER = np.array([0.0, 5.0, 9.7, 14.1])  # GHz
FREQS = np.diff(LADDER)
DURATIONS = np.array([36.0, 32.0, 14.0])


@contextmanager
def criterion(name):
    try:
        yield
    except AssertionError:
        print(f"\n[FAIL] {name}")
        raise
    else:
        print(f"\n[PASS] {name}")


def random_rank1_povm(rng):
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    unitary, _ = np.linalg.qr(a)
    return povm_from_unitary(unitary)


def haar_state(rng):
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    return q.QubitState.from_amplitudes(*v)


def random_observable(rng):
    w = rng.normal(size=3)
    return q.Observable(1, ((w[0], "X"), (w[1], "Y"), (w[2], "Z")))


@pytest.fixture(scope="module")
def ratio45():
    params = q.calibrate_params(5.0, 45.0)
    cals = [ps.calibrate_sqrtx(params, n, k=20) for n in range(3)]
    return params, cals


def test_criterion_1_compiler_roundtrip():
    with criterion("compiler round trip: 200 random POVMs, D_OD <= 1e-9, < 10 s"):
        rng = np.random.default_rng(2024)
        start = time.perf_counter()
        worst = 0.0
        for _ in range(200):
            povm = random_rank1_povm(rng)
            u = q.build_naimark_unitary(povm)
            seq = to_sqrtx_sequence(q.givens_decompose(u))
            sched = compile_schedule(seq, FREQS, DURATIONS)
            ideal = ideal_unitary_of_schedule(sched, LADDER)
            worst = max(worst, q.operational_distance(povm, povm_from_unitary(ideal)))
        elapsed = time.perf_counter() - start
        print(f"  worst D_OD {worst:.2e}, elapsed {elapsed:.1f} s", end="")
        assert worst <= 1e-9
        assert elapsed < 10.0


def test_criterion_2_pulse_counts():
    with criterion("pulse counts: generic POVM -> 10 sqrt-X, demo -> 5"):
        rng = np.random.default_rng(7)
        for _ in range(20):
            seq = to_sqrtx_sequence(
                q.givens_decompose(q.build_naimark_unitary(random_rank1_povm(rng)))
            )
            assert seq.count_sqrtx() == 10
            sched = compile_schedule(seq, FREQS, DURATIONS)
            assert len(sched.pulses) == 10
        sic_seq = to_sqrtx_sequence(
            q.givens_decompose(q.build_naimark_unitary(q.sic_povm()))
        )
        assert sic_seq.count_sqrtx() == 10
        demo_sched = compile_schedule(schedule_demo(), FREQS, DURATIONS)
        assert len(demo_sched.pulses) == 5


def test_criterion_3_charge_dispersion_golden():
    with criterion("charge dispersion: eps_3 = 13.9 MHz +- 5 % "
                   "(5.2 GHz qubit, alpha_1 ~ -340 MHz, nominal ratio 45), < 1 s"):
        start = time.perf_counter()
        params = q.calibrate_params(5.2, 45.0)
        eps3_mhz = q.charge_dispersion(params, 3) * 1e3
        alpha_mhz = q.anharmonicity(params, 1) * 1e3
        elapsed = time.perf_counter() - start
        # strict two-parameter fit to the rounded inputs lands at 15.1 MHz;
        # see the dispersion sensitivity test for the +-5 MHz input bracket
        strict = q.calibrate_to_anharmonicity(5.2, -0.340)
        strict_mhz = q.charge_dispersion(strict, 3) * 1e3
        print(
            f"  eps3 {eps3_mhz:.2f} MHz (alpha1 {alpha_mhz:.1f} MHz), "
            f"strict-alpha construction {strict_mhz:.2f} MHz, "
            f"elapsed {elapsed:.2f} s",
            end="",
        )
        assert abs(eps3_mhz - 13.9) / 13.9 <= 0.05
        assert abs(alpha_mhz + 340.0) <= 5.0
        assert elapsed < 1.0


def test_criterion_4_simulated_distance_sweep():
    with criterion("simulated SIC distances: ~0.1 at ratio 40, ~0.01 at 80 "
                   "(factor 3), 6-ratio sweep with K=20 in < 10 min"):
        start = time.perf_counter()
        rows = ps.sweep_ejec(
            [30.0, 40.0, 50.0, 60.0, 70.0, 80.0], [None], q.sic_povm(), k=20
        )
        elapsed = time.perf_counter() - start
        assert all(r.error == "" for r in rows)
        by_ratio = {r.ratio: r for r in rows}
        d40, d80 = by_ratio[40.0].d_od, by_ratio[80.0].d_od
        print(
            "  D_OD: "
            + " ".join(f"{r.ratio:.0f}:{r.d_od:.4f}" for r in rows)
            + f", elapsed {elapsed:.0f} s",
            end="",
        )
        assert 0.1 / 3 <= d40 <= 0.1 * 3
        assert 0.01 / 3 <= d80 <= 0.01 * 3
        dods = [r.d_od for r in rows]
        assert all(b <= a * 1.15 for a, b in zip(dods, dods[1:]))  # trend
        assert elapsed < 600.0


def test_criterion_5_gate_fidelity_plateau(ratio45):
    with criterion("gate fidelities at ratio 45: sqrt-X 01/12 >= 0.999, "
                   "23 >= 0.98"):
        _, cals = ratio45
        f = [c.f_opt for c in cals]
        print(f"  F = {f[0]:.5f}, {f[1]:.5f}, {f[2]:.5f}", end="")
        assert f[0] >= 0.999
        assert f[1] >= 0.999
        assert f[2] >= 0.98


def test_criterion_6_tomography_scaling():
    with criterion("tomography scaling: log-log slope -0.45 +- 0.15 over "
                   "1e3..1e6 shots, < 5 min"):
        start = time.perf_counter()
        grid = [int(x) for x in np.logspace(3, 6, 7)]
        result = tg.tomo_scaling_experiment(q.sic_povm(), grid, seed=17, repeats=3)
        elapsed = time.perf_counter() - start
        print(f"  slope {result.slope:.3f}, elapsed {elapsed:.0f} s", end="")
        assert -0.60 <= result.slope <= -0.30
        assert result.rows[-1].d_od < result.rows[0].d_od
        assert elapsed < 300.0


def test_criterion_7_bias_mitigation(ratio45):
    with criterion("bias mitigation: |mitigated| < |unmitigated| in >= 90 % "
                   "of 20 random cases at 1e5 tomography shots"):
        params, cals = ratio45
        durations = np.array([c.t_opt for c in cals])
        sched = ps.povm_schedule(q.sic_povm(), params, durations)
        povm_exp = ps.simulated_povm(sched, params, k=20, labels=q.sic_povm().labels)
        counts = tg.sample_counts(povm_exp, shots=100_000 // 6, seed=99)
        povm_tomo = tg.ml_tomography(counts).povm
        d_exp_theo = q.operational_distance(q.sic_povm(), povm_exp)
        d_exp_tomo = q.operational_distance(povm_exp, povm_tomo)
        rng = np.random.default_rng(4242)
        wins = 0
        for _ in range(20):
            state = haar_state(rng)
            obs = random_observable(rng)
            truth = float(np.trace(state.density @ obs.dense()).real)
            p_exp = q.outcome_probabilities(state, povm_exp)
            c_theo = q.decompose_observable(obs, q.sic_povm())
            c_tomo = q.decompose_observable(obs, povm_tomo)
            bias_unmit = float(c_theo @ p_exp) - truth
            bias_mit = float(c_tomo @ p_exp) - truth
            if abs(bias_mit) < abs(bias_unmit):
                wins += 1
        print(
            f"  wins {wins}/20, D(theo, exp) {d_exp_theo:.4f}, "
            f"D(exp, tomo) {d_exp_tomo:.4f}",
            end="",
        )
        assert wins >= 18


def test_criterion_8_variance_reduction_floor():
    with criterion("variance mechanism: Z x Z on |00>: second moment 25 "
                   "(SIC product) vs 1 = <O>^2 (aligned projective)"):
        zz = q.Observable(2, ((1.0, "ZZ"),))
        state00 = np.array([1, 0, 0, 0], dtype=complex)
        sic2 = q.ProductPovm((q.sic_povm(), q.sic_povm()))
        aligned = q.ProductPovm((q.projective_z_povm(), q.projective_z_povm()))
        m_sic = scatter_export(zz, sic2, state00).second_moment
        table = scatter_export(zz, aligned, state00)
        print(f"  second moments {m_sic:.6f} vs {table.second_moment:.6f}", end="")
        assert m_sic == pytest.approx(25.0, abs=1e-9)
        assert table.second_moment == pytest.approx(1.0, abs=1e-9)
        assert table.second_moment == pytest.approx(
            table.expectation ** 2, abs=1e-9
        )


def test_criterion_9_invariant_suites(ratio45):
    with criterion("invariant suites: POVM validity, ML monotonicity, "
                   "estimator consistency, propagator unitarity/convergence"):
        # POVM validity for every constructed POVM
        rng = np.random.default_rng(5)
        for povm in (q.sic_povm(), q.demo_povm(), q.projective_z_povm(),
                     *(random_rank1_povm(rng) for _ in range(25))):
            report = q.validate_povm(povm)
            assert report.psd_violation <= 1e-10
            assert report.completeness_residual <= 1e-10

        # ML likelihood monotonicity
        table = tg.sample_counts(q.demo_povm(), 5000, seed=31)
        ml = tg.ml_tomography(table, max_iter=1000)
        ll = ml.log_likelihoods
        assert np.all(np.diff(ll) >= -1e-9 * np.maximum(1.0, np.abs(ll[:-1])))

        # estimator consistency at 1e6 shots, 5 sigma
        from quditpovm.estimation import (
            estimate_expectation,
            product_state_probabilities,
            sample_outcomes,
        )

        prod = q.ProductPovm((q.sic_povm(), q.sic_povm()))
        psi = rng.normal(size=4) + 1j * rng.normal(size=4)
        psi /= np.linalg.norm(psi)
        obs = q.Observable(2, ((0.8, "ZX"), (-0.5, "YY")))
        probs = product_state_probabilities(prod, psi)
        coeffs = q.decompose_observable(obs, prod)
        hist = sample_outcomes(probs, 10 ** 6, seed=77)
        rep = estimate_expectation(hist, coeffs)
        truth = float(np.trace(np.outer(psi, psi.conj()) @ obs.dense()).real)
        assert abs(rep.estimate - truth) < 5 * rep.std_error

        # propagator unitarity and step-halving convergence
        params, _ = ratio45
        sched = ps.compile_gate_schedule(schedule_demo(), params,
                                         [36.0, 32.0, 14.0])
        u = ps.propagate(sched, params, 0.3)
        assert np.linalg.norm(u.conj().T @ u - np.eye(5), np.inf) <= 1e-8
        fine = ps.DriveConfig(sample_dt=ps.DEFAULT_SAMPLE_DT / 2)
        sched_fine = ps.compile_gate_schedule(schedule_demo(), params,
                                              [36.0, 32.0, 14.0], fine)
        u_fine = ps.propagate(sched_fine, params, 0.3, fine)
        assert np.linalg.norm(u - u_fine, 2) <= 1e-4
