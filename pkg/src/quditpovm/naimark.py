"""Dilation unitaries and their compilation into frame-tracked pulse schedules.

Any four-outcome rank-one qubit POVM is realized by a single 4x4 unitary
acting on the qudit: the POVM operators fix its first two columns and a
Gram-Schmidt completion (with a vanishing top-right entry) supplies the
rest.  The unitary is peeled into Givens rotations between adjacent levels
plus phase gates, optionally re-expressed with pi/2 x-rotations only, and
finally scheduled as drive pulses whose phases absorb every virtual-Z and
idle-level phase advance.

Gate sequences are stored in *execution order*: ``gates[0]`` is applied
first, so the implemented unitary is ``M(gates[-1]) @ ... @ M(gates[0])``.
Frequencies are linear (GHz), durations are nanoseconds internally and
seconds in JSON, angles are radians.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .povm import Povm, PovmError, operational_distance, validate_povm

UNITARY_TOL = 1e-10
N_FRAMES = 3  # driven transitions 0<->1, 1<->2, 2<->3


class RankOneError(PovmError):
    """A POVM operator has rank two and cannot be dilated column-wise."""


def wrap_theta(theta: float) -> float:
    return float(np.mod(theta, 2 * np.pi))


def wrap_phi(phi: float) -> float:
    """Wrap into (-pi, pi]; valid for phases entering only as exp(i phi)."""
    out = np.mod(phi, 2 * np.pi)
    if out > np.pi:
        out -= 2 * np.pi
    return float(out)


def wrap_phi_z(phi: float) -> float:
    """Wrap a Z angle into (-2 pi, 2 pi].

    Z rotations carry half-angle phases, so their period is 4 pi; wrapping
    modulo 2 pi would flip the sign of the rotated block relative to the
    idle levels.
    """
    out = np.mod(phi, 4 * np.pi)
    if out > 2 * np.pi:
        out -= 4 * np.pi
    return float(out)


@dataclass(frozen=True)
class Givens:
    """Rotation by ``theta`` about an xy-axis at angle ``phi`` between
    adjacent levels ``transition`` and ``transition + 1``."""

    transition: int
    theta: float
    phi: float

    def matrix(self, dim: int = 4) -> np.ndarray:
        g = np.eye(dim, dtype=complex)
        n = self.transition
        c, s = np.cos(self.theta / 2), np.sin(self.theta / 2)
        g[n, n] = c
        g[n + 1, n + 1] = c
        g[n, n + 1] = -1j * s * np.exp(-1j * self.phi)
        g[n + 1, n] = -1j * s * np.exp(1j * self.phi)
        return g

    def dagger(self) -> "Givens":
        return Givens(self.transition, self.theta, wrap_phi(self.phi + np.pi))


@dataclass(frozen=True)
class VirtualZ:
    """diag(e^{-i phi/2}, e^{i phi/2}) on levels ``transition``, ``transition+1``."""

    transition: int
    phi: float

    def matrix(self, dim: int = 4) -> np.ndarray:
        z = np.eye(dim, dtype=complex)
        n = self.transition
        z[n, n] = np.exp(-1j * self.phi / 2)
        z[n + 1, n + 1] = np.exp(1j * self.phi / 2)
        return z

    def dagger(self) -> "VirtualZ":
        return VirtualZ(self.transition, wrap_phi_z(-self.phi))


@dataclass(frozen=True)
class GateSequence:
    """Gates in execution order."""

    gates: tuple

    def __post_init__(self):
        for g in self.gates:
            if not isinstance(g, (Givens, VirtualZ)):
                raise TypeError(f"unsupported gate {g!r}")
            if not 0 <= g.transition < N_FRAMES:
                raise ValueError(f"transition {g.transition} outside the qudit ladder")
        object.__setattr__(self, "gates", tuple(self.gates))

    def __iter__(self):
        return iter(self.gates)

    def __len__(self):
        return len(self.gates)

    def unitary(self, dim: int = 4) -> np.ndarray:
        u = np.eye(dim, dtype=complex)
        for g in self.gates:
            u = g.matrix(dim) @ u
        return u

    def count_givens(self) -> int:
        return sum(isinstance(g, Givens) for g in self.gates)

    def count_sqrtx(self) -> int:
        return sum(
            isinstance(g, Givens)
            and abs(g.theta - np.pi / 2) < 1e-12
            and abs(g.phi) < 1e-12
            for g in self.gates
        )

    def to_json(self) -> dict:
        items = []
        for g in self.gates:
            if isinstance(g, Givens):
                items.append(
                    {"kind": "givens", "transition": g.transition,
                     "theta": g.theta, "phi": g.phi}
                )
            else:
                items.append(
                    {"kind": "z", "transition": g.transition, "phi": g.phi}
                )
        return {"order": "execution", "gates": items}

    @classmethod
    def from_json(cls, data: dict) -> "GateSequence":
        gates = []
        for item in data["gates"]:
            if item["kind"] == "givens":
                gates.append(Givens(item["transition"], item["theta"], item["phi"]))
            elif item["kind"] == "z":
                gates.append(VirtualZ(item["transition"], item["phi"]))
            else:
                raise ValueError(f"unknown gate kind {item['kind']!r}")
        return cls(tuple(gates))


@dataclass(frozen=True)
class RPulse:
    """One drive pulse: rotation angle, resolved drive phase and duration."""

    transition: int
    theta: float
    drive_phase: float
    duration: float  # ns
    envelope: tuple = ()  # unit-peak samples; filled by the pulse simulator

    def with_envelope(self, samples) -> "RPulse":
        return replace(self, envelope=tuple(float(s) for s in samples))


@dataclass(frozen=True)
class PulseSchedule:
    """Compiled pulse program plus the final frame phase registers."""

    pulses: tuple
    frame_freqs: tuple   # GHz, one per driven transition
    frame_phases: tuple  # rad, registers after the last instruction
    sample_dt: float     # ns

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))
        object.__setattr__(self, "frame_freqs", tuple(float(f) for f in self.frame_freqs))
        object.__setattr__(self, "frame_phases", tuple(float(p) for p in self.frame_phases))

    @property
    def total_duration(self) -> float:
        return sum(p.duration for p in self.pulses)

    def count_on(self, transition: int) -> int:
        return sum(p.transition == transition for p in self.pulses)

    def to_json(self) -> dict:
        return {
            "frame_freqs_hz": [f * 1e9 for f in self.frame_freqs],
            "frame_phases_rad": list(self.frame_phases),
            "sample_dt_s": self.sample_dt * 1e-9,
            "pulses": [
                {
                    "transition": p.transition,
                    "theta_rad": p.theta,
                    "drive_phase_rad": p.drive_phase,
                    "duration_s": p.duration * 1e-9,
                    "envelope": list(p.envelope),
                }
                for p in self.pulses
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "PulseSchedule":
        pulses = tuple(
            RPulse(
                int(p["transition"]),
                float(p["theta_rad"]),
                float(p["drive_phase_rad"]),
                float(p["duration_s"]) * 1e9,
                tuple(p.get("envelope") or ()),
            )
            for p in data["pulses"]
        )
        return cls(
            pulses,
            tuple(f * 1e-9 for f in data["frame_freqs_hz"]),
            tuple(data["frame_phases_rad"]),
            float(data["sample_dt_s"]) * 1e9,
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path) -> "PulseSchedule":
        return cls.from_json(json.loads(Path(path).read_text()))

    def text_dump(self) -> str:
        lines = [
            "# frame_freqs_ghz " + " ".join(f"{f:.9f}" for f in self.frame_freqs)
        ]
        for p in self.pulses:
            lines.append(
                f"R t{p.transition} theta={p.theta:+.9f} phase={p.drive_phase:+.9f} "
                f"dur_ns={p.duration:.6f}"
            )
        lines.append(
            "# final_frame_phases " + " ".join(f"{p:+.9f}" for p in self.frame_phases)
        )
        return "\n".join(lines) + "\n"


def _check_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> None:
    dev = np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0]), np.inf)
    if dev > tol:
        raise ValueError(f"matrix is not unitary (deviation {dev:.2e})")


def build_naimark_unitary(povm: Povm, tol: float = 1e-9) -> np.ndarray:
    """4x4 dilation unitary whose first two columns encode the POVM.

    Row m of the qubit columns is ``sqrt(Gamma_m) <pi_m|``; the free phase
    of each projector state is fixed by making its first non-zero amplitude
    real and non-negative.  The completion forces the top-right entry to
    vanish, the convention the decomposition below relies on.
    """
    if povm.dim != 2 or povm.n_outcomes != 4:
        raise PovmError("dilation needs a 4-outcome qubit POVM")
    report = validate_povm(povm, tol)
    if not report.valid:
        raise PovmError(
            f"invalid POVM: psd violation {report.psd_violation:.2e}, "
            f"completeness residual {report.completeness_residual:.2e}"
        )
    cols = np.zeros((4, 2), dtype=complex)
    for m, op in enumerate(povm.operators):
        w, v = np.linalg.eigh((op + op.conj().T) / 2)
        gamma = w[-1]
        if w[0] > tol * max(1.0, gamma):
            raise RankOneError(
                f"operator {m} has rank two (second eigenvalue {w[0]:.2e})"
            )
        if gamma <= tol:
            continue  # zero-weight outcome: row stays zero
        state = v[:, -1]
        pivot = 0 if abs(state[0]) > 1e-12 else 1
        state = state * np.exp(-1j * np.angle(state[pivot]))
        cols[m] = np.sqrt(gamma) * state.conj()
    basis = [cols[:, 0], cols[:, 1]]
    for e in np.eye(4, dtype=complex):
        if len(basis) == 4:
            break
        v = e.copy()
        for b in basis:
            v = v - b * (b.conj() @ v)
        nrm = np.linalg.norm(v)
        if nrm > 1e-7:
            basis.append(v / nrm)
    c2, c3 = basis[2], basis[3]
    a, b = c2[0], c3[0]
    nrm = np.hypot(abs(a), abs(b))
    if nrm > 1e-14:
        c2, c3 = (np.conj(a) * c2 + np.conj(b) * c3) / nrm, (-b * c2 + a * c3) / nrm
    u = np.column_stack([cols[:, 0], cols[:, 1], c2, c3])
    _check_unitary(u)
    if abs(u[0, 3]) > UNITARY_TOL:
        raise AssertionError("completion failed to zero the top-right entry")
    return u


def povm_from_unitary(u: np.ndarray, labels=()) -> Povm:
    """POVM encoded by the first two columns of a 4x4 unitary."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (4, 4):
        raise ValueError("expected a 4x4 unitary")
    _check_unitary(u)
    ops = []
    for m in range(4):
        row = u[m, :2].conj()
        ops.append(np.outer(row, row.conj()))
    return Povm(tuple(ops), labels)


def givens_decompose(u: np.ndarray, tol: float = UNITARY_TOL) -> GateSequence:
    """Peel a dilation unitary into 5 Givens and 3 Z gates.

    The input must satisfy the ``U[0, 3] = 0`` convention; inputs violating
    it are rejected rather than re-gauged.  The returned sequence, applied
    in execution order, reproduces ``u`` up to a global phase.
    """
    u = np.asarray(u, dtype=complex)
    _check_unitary(u, tol)
    if abs(u[0, 3]) > max(tol, 1e-8):
        raise ValueError(
            f"top-right entry must vanish (got {abs(u[0, 3]):.2e}); "
            "re-build the dilation unitary instead of re-gauging"
        )
    w = u * np.linalg.det(u) ** (-0.25)
    applied = []

    def rotate_out(row, col):
        r1, d1 = abs(w[row, col]), np.angle(w[row, col])
        r2, d2 = abs(w[row + 1, col]), np.angle(w[row + 1, col])
        if r1 < 1e-15:
            return
        theta = 2 * np.arctan2(r1, r2)
        phi = np.pi / 2 - d1 + d2
        g = Givens(row, wrap_theta(theta), wrap_phi(phi))
        applied.append(g)
        w[:] = g.matrix(4) @ w

    def fix_phase(level, col, frame):
        beta = np.angle(w[level, col])
        if abs(beta) > 1e-15:
            z = VirtualZ(frame, wrap_phi_z(-2 * beta))
            applied.append(z)
            w[:] = z.matrix(4) @ w

    rotate_out(1, 3)
    rotate_out(2, 3)
    fix_phase(3, 3, 2)
    rotate_out(0, 2)
    rotate_out(1, 2)
    fix_phase(2, 2, 1)
    rotate_out(0, 1)
    fix_phase(1, 1, 0)
    if np.linalg.norm(w - np.eye(4), np.inf) > 1e-8:
        raise AssertionError("reduction to identity failed")
    # A_k ... A_1 U' = 1  =>  U' = A_1^dag ... A_k^dag; execution order is
    # right-to-left, i.e. the last-applied reduction gate plays first.
    gates = tuple(g.dagger() for g in reversed(applied))
    return GateSequence(gates)


def to_sqrtx_sequence(seq: GateSequence) -> GateSequence:
    """Rewrite every Givens as two pi/2 x-pulses and three Z gates.

    Uses G(theta, phi) = Z(phi - pi/2) SX Z(pi - theta) SX Z(-phi - pi/2)
    read as a matrix product, i.e. the rightmost Z executes first.
    """
    out = []
    for g in seq:
        if isinstance(g, VirtualZ):
            out.append(g)
            continue
        n = g.transition
        out.extend(
            [
                VirtualZ(n, wrap_phi_z(-g.phi - np.pi / 2)),
                Givens(n, np.pi / 2, 0.0),
                VirtualZ(n, wrap_phi_z(np.pi - g.theta)),
                Givens(n, np.pi / 2, 0.0),
                VirtualZ(n, wrap_phi_z(g.phi - np.pi / 2)),
            ]
        )
    return GateSequence(tuple(out))


def schedule_demo() -> GateSequence:
    """Fixed five-pulse sequence realizing the hardware demo POVM.

    Needs no Z gate on the 2<->3 frame, which is what made it practical to
    run: only a single virtual Z on 1<->2 appears between the pulses.
    """
    sx = lambda n: Givens(n, np.pi / 2, 0.0)  # noqa: E731
    return GateSequence(
        (sx(0), sx(1), VirtualZ(1, np.pi / 2), sx(0), sx(2), sx(1))
    )


def compile_schedule(seq: GateSequence, frame_freqs, durations,
                     sample_dt: float = 0.222) -> PulseSchedule:
    """Resolve a gate sequence into drive pulses with tracked frame phases.

    Z gates consume no time: their angle is subtracted from their own frame
    register and half of it added to the neighbouring registers.  Each
    Givens becomes one pulse played at ``register + gate phase``; afterwards
    every other frame register is debited ``2*pi*(f_m - f_n) * T`` for the
    idle-level phases advanced during the pulse.
    """
    freqs = np.asarray(frame_freqs, dtype=float)
    if freqs.shape != (N_FRAMES,):
        raise ValueError(f"need {N_FRAMES} frame frequencies")
    durs = np.asarray(durations, dtype=float)
    if durs.shape != (N_FRAMES,):
        raise ValueError(f"need {N_FRAMES} per-transition durations")
    # durations snap to whole samples
    n_samples = np.maximum(1, np.rint(durs / sample_dt).astype(int))
    durs = n_samples * sample_dt
    phases = np.zeros(N_FRAMES)
    pulses = []
    for gate in seq:
        n = gate.transition
        if isinstance(gate, VirtualZ):
            phases[n] -= gate.phi
            if n - 1 >= 0:
                phases[n - 1] += gate.phi / 2
            if n + 1 < N_FRAMES:
                phases[n + 1] += gate.phi / 2
            continue
        t = durs[n]
        pulses.append(
            RPulse(n, gate.theta, wrap_phi(phases[n] + gate.phi), float(t))
        )
        for m in range(N_FRAMES):
            if m != n:
                phases[m] -= 2 * np.pi * (freqs[m] - freqs[n]) * t
    return PulseSchedule(
        tuple(pulses), tuple(freqs), tuple(float(p) for p in phases), sample_dt
    )


def r_matrix(transition: int, theta: float, phi: float, energies,
             carrier_ghz: float, duration_ns: float) -> np.ndarray:
    """Exact rotation of one resonant pulse, including idle-level phases.

    ``energies`` are level energies in GHz; the diagonal factor applies
    ``exp(-i 2 pi (E_m - m f_D) T)`` to every level.
    """
    energies = np.asarray(energies, dtype=float)
    d = energies.shape[0]
    m = np.arange(d)
    idle = np.exp(-2j * np.pi * (energies - m * carrier_ghz) * duration_ns)
    return Givens(transition, theta, phi).matrix(d) @ np.diag(idle)


def ideal_unitary_of_schedule(sched: PulseSchedule, energies) -> np.ndarray:
    """Noise-free composition of the schedule's exact pulse rotations."""
    energies = np.asarray(energies, dtype=float)
    u = np.eye(energies.shape[0], dtype=complex)
    for p in sched.pulses:
        freq = sched.frame_freqs[p.transition]
        u = r_matrix(p.transition, p.theta, p.drive_phase, energies, freq,
                     p.duration) @ u
    return u


def compiler_roundtrip_distance(povm: Povm, frame_freqs, durations,
                                energies, use_sqrtx: bool = True) -> float:
    """Distance between a POVM and the POVM of its compiled ideal schedule."""
    u = build_naimark_unitary(povm)
    seq = givens_decompose(u)
    if use_sqrtx:
        seq = to_sqrtx_sequence(seq)
    sched = compile_schedule(seq, frame_freqs, durations)
    u_ideal = ideal_unitary_of_schedule(sched, energies)
    return operational_distance(povm, povm_from_unitary(u_ideal, povm.labels))
