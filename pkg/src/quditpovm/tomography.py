"""Detector tomography: sampling, linear inversion, maximum likelihood.

Reference states are the six single-qubit stabilizer states; counts tables
hold one row per prepared state.  The maximum-likelihood reconstruction is
the fixed-point iteration that preserves positivity and completeness at
every step, so its output is always a valid POVM no matter the counts.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .povm import (
    Povm,
    PovmError,
    QubitState,
    operational_distance,
    outcome_probabilities,
)

STABILIZER_LABELS = ("0", "1", "+", "-", "i", "-i")
PROB_FLOOR = 1e-12


def reference_states() -> tuple:
    """The six single-qubit stabilizer states as density matrices."""
    amps = {
        "0": (1, 0),
        "1": (0, 1),
        "+": (1, 1),
        "-": (1, -1),
        "i": (1, 1j),
        "-i": (1, -1j),
    }
    return tuple(QubitState.from_amplitudes(*amps[lab]) for lab in STABILIZER_LABELS)


@dataclass(frozen=True)
class CountsTable:
    """Outcome counts per prepared reference state."""

    counts: np.ndarray  # (n_states, n_outcomes) integers
    state_labels: tuple = STABILIZER_LABELS

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2:
            raise ValueError("counts must be a 2-d table")
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        c = c.astype(np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        if len(self.state_labels) != c.shape[0]:
            raise ValueError("one label per prepared state required")

    @property
    def shots_per_state(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def frequencies(self) -> np.ndarray:
        return self.counts / self.shots_per_state[:, None]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["state_label", "outcome", "count"])
            for lab, row in zip(self.state_labels, self.counts):
                for m, n in enumerate(row):
                    writer.writerow([lab, m, int(n)])

    @classmethod
    def from_csv(cls, path) -> "CountsTable":
        rows: dict = {}
        labels = []
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                lab = rec["state_label"]
                if lab not in rows:
                    rows[lab] = {}
                    labels.append(lab)
                rows[lab][int(rec["outcome"])] = int(rec["count"])
        n_out = 1 + max(max(d) for d in rows.values())
        table = np.zeros((len(labels), n_out), dtype=np.int64)
        for i, lab in enumerate(labels):
            for m, n in rows[lab].items():
                table[i, m] = n
        return cls(table, tuple(labels))


@dataclass(frozen=True)
class ConfusionMatrix:
    """Column-stochastic map from prepared to measured outcome labels."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("confusion matrix must be square")
        if m.min() < 0 or m.max() > 1 + 1e-12:
            raise ValueError("entries must be probabilities")
        if np.any(np.abs(m.sum(axis=0) - 1.0) > 1e-9):
            raise ValueError("columns must sum to one")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, n: int = 4) -> "ConfusionMatrix":
        return cls(np.eye(n))

    def apply(self, probs: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(probs, dtype=float)


def measured_readout_confusion() -> ConfusionMatrix:
    """Assignment-error probabilities measured on a 4-level transmon readout.

    Column j holds the distribution of measured labels when level j is
    prepared; the dominant error channels confuse the two highest levels.
    """
    m = np.array(
        [
            [0.983, 0.042, 0.006, 0.002],
            [0.005, 0.888, 0.088, 0.021],
            [0.008, 0.069, 0.593, 0.228],
            [0.004, 0.001, 0.313, 0.749],
        ]
    )
    return ConfusionMatrix(m / m.sum(axis=0, keepdims=True))


def sample_counts(povm: Povm, shots: int, seed: int = 0, states=None,
                  confusion: ConfusionMatrix | None = None) -> CountsTable:
    """Multinomial outcome counts for each reference state.

    Per-state RNG streams are derived from (seed, state index), so tables
    are reproducible regardless of evaluation order.
    """
    if shots < 1:
        raise ValueError("need at least one shot")
    states = reference_states() if states is None else tuple(states)
    rows = []
    for j, state in enumerate(states):
        p = outcome_probabilities(state, povm)
        if confusion is not None:
            p = confusion.apply(p)
        rng = np.random.default_rng([seed, j])
        rows.append(rng.multinomial(shots, p))
    labels = STABILIZER_LABELS if len(states) == 6 else tuple(map(str, range(len(states))))
    return CountsTable(np.stack(rows), labels)


@dataclass(frozen=True)
class LinearInversionResult:
    """Least-squares operators; Hermitian and complete but possibly non-PSD."""

    operators: tuple
    min_eigenvalue: float
    completeness_residual: float

    @property
    def physical(self) -> bool:
        return self.min_eigenvalue >= -1e-9


def linear_inversion(counts: CountsTable, states=None) -> LinearInversionResult:
    """Invert <psi_j| Pi_m |psi_j> ~ f_jm per outcome.

    Each operator is expanded in the Pauli basis, so the design matrix is
    built from the states' Bloch vectors; rank deficiency of that matrix
    means the reference states are not informationally complete.
    """
    states = reference_states() if states is None else tuple(states)
    if len(states) != counts.counts.shape[0]:
        raise ValueError("state count does not match the counts table")
    design = np.stack([np.concatenate(([1.0], s.bloch())) for s in states]) / 2.0
    if np.linalg.matrix_rank(design, tol=1e-9) < 4:
        raise PovmError("reference states are not informationally complete")
    freqs = counts.frequencies()
    coeffs, *_ = np.linalg.lstsq(design, freqs, rcond=None)
    pauli = np.stack(
        [np.eye(2), [[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]]
    ).astype(complex)
    ops = []
    min_eig = np.inf
    for m in range(freqs.shape[1]):
        op = 0.5 * np.tensordot(coeffs[:, m], pauli, axes=1)
        op = (op + op.conj().T) / 2
        min_eig = min(min_eig, np.linalg.eigvalsh(op)[0])
        ops.append(op)
    residual = float(np.linalg.norm(sum(ops) - np.eye(2), np.inf))
    return LinearInversionResult(tuple(ops), float(min_eig), residual)


@dataclass(frozen=True)
class MlTomographyResult:
    povm: Povm
    iterations: int
    converged: bool
    log_likelihoods: np.ndarray


def _log_likelihood(counts: np.ndarray, probs: np.ndarray) -> float:
    mask = counts > 0
    return float(np.sum(counts[mask] * np.log(probs[mask])))


def ml_tomography(counts: CountsTable, states=None, tol: float = 1e-8,
                  max_iter: int = 10000,
                  initial: Povm | None = None) -> MlTomographyResult:
    """Maximum-likelihood detector tomography.

    Fixed-point iteration from the uniform POVM (or ``initial``): with
    ``R_m = sum_j (N_jm / p_jm) rho_j`` and ``L = sum_m R_m Pi_m R_m``,
    update ``Pi_m <- L^{-1/2} R_m Pi_m R_m L^{-1/2}``.  Positivity and
    completeness hold at every iterate; the log-likelihood is
    non-decreasing.  Iteration stops when successive POVMs are closer
    than ``tol`` in operational distance.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    states = reference_states() if states is None else tuple(states)
    table = counts.counts
    n_states, n_out = table.shape
    if len(states) != n_states:
        raise ValueError("state count does not match the counts table")
    rhos = np.stack([s.density for s in states])
    if initial is None:
        ops = np.stack([np.eye(2, dtype=complex) / n_out] * n_out)
    else:
        ops = initial.stack().astype(complex)
    history = []
    floored = False
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        probs = np.einsum("jab,mba->jm", rhos, ops).real
        if np.any((probs <= PROB_FLOOR) & (table > 0)):
            floored = True
        probs = np.clip(probs, PROB_FLOOR, None)
        history.append(_log_likelihood(table, probs))
        ratio = table / probs  # (j, m)
        r_ops = np.einsum("jm,jab->mab", ratio, rhos)
        lam = np.einsum("mab,mbc,mcd->ad", r_ops, ops, r_ops)
        lam = (lam + lam.conj().T) / 2
        w, v = np.linalg.eigh(lam)
        inv_sqrt = (v * (1.0 / np.sqrt(np.clip(w, 1e-14, None)))) @ v.conj().T
        new_ops = np.einsum(
            "ab,mbc,mcd,mde,ef->maf", inv_sqrt, r_ops, ops, r_ops, inv_sqrt
        )
        new_ops = (new_ops + np.conj(np.swapaxes(new_ops, 1, 2))) / 2
        delta = operational_distance(
            Povm(tuple(ops)), Povm(tuple(new_ops))
        )
        ops = new_ops
        if delta < tol:
            converged = True
            break
    if floored:
        warnings.warn(
            "predicted probability underflowed with non-zero counts; "
            f"floored at {PROB_FLOOR}",
            RuntimeWarning,
        )
    probs = np.clip(np.einsum("jab,mba->jm", rhos, ops).real, PROB_FLOOR, None)
    history.append(_log_likelihood(table, probs))
    return MlTomographyResult(
        Povm(tuple(ops)), it, converged, np.array(history)
    )


def mitigate_readout(raw_probs, confusion: ConfusionMatrix) -> np.ndarray:
    """Constrained inversion of the misassignment matrix.

    Solves ``min ||C q - p||_2`` over the probability simplex, so the
    output is always a valid distribution.
    """
    p = np.asarray(raw_probs, dtype=float)
    c = confusion.matrix
    if p.shape != (c.shape[0],):
        raise ValueError("probability vector does not match the confusion matrix")
    if abs(p.sum() - 1.0) > 1e-6 or p.min() < -1e-9:
        raise ValueError("input must be a probability vector")
    cond = np.linalg.cond(c)
    if cond > 1e12:
        warnings.warn(
            f"confusion matrix is numerically singular (cond {cond:.1e}); "
            "falling back to a pseudo-inverse starting point",
            RuntimeWarning,
        )
        q0 = np.linalg.pinv(c) @ p
    else:
        q0 = np.linalg.solve(c, p)
    q0 = np.clip(q0, 0.0, None)
    q0 = q0 / q0.sum() if q0.sum() > 0 else np.full_like(p, 1.0 / p.size)
    if np.all(q0 >= 0) and np.linalg.norm(c @ q0 - p) < 1e-12:
        return q0
    n = p.size
    res = minimize(
        lambda q: float(np.sum((c @ q - p) ** 2)),
        q0,
        jac=lambda q: 2.0 * c.T @ (c @ q - p),
        method="SLSQP",
        bounds=[(0.0, 1.0)] * n,
        constraints=[{"type": "eq", "fun": lambda q: q.sum() - 1.0,
                      "jac": lambda q: np.ones(n)}],
        options={"maxiter": 500, "ftol": 1e-16},
    )
    q = np.clip(res.x, 0.0, None)
    return q / q.sum()


@dataclass(frozen=True)
class ScalingRow:
    n_tomo: int
    d_od: float


@dataclass(frozen=True)
class ScalingResult:
    rows: tuple
    slope: float
    intercept: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n_tomo", "d_od"])
            for row in self.rows:
                writer.writerow([row.n_tomo, f"{row.d_od:.10g}"])


def tomo_scaling_experiment(povm: Povm, shot_grid, seed: int = 0,
                            repeats: int = 3, tol: float = 1e-8,
                            max_iter: int = 10000) -> ScalingResult:
    """Reconstruction error versus total tomography shots.

    Every budget is split evenly over the six reference states, sampled,
    reconstructed with maximum likelihood, and compared to the sampling
    POVM; the log-log slope of the averaged distances is fitted.  RNG
    streams derive from (seed, budget index, repeat), making rows
    independent of evaluation order.
    """
    shot_grid = [int(n) for n in shot_grid]
    if len(shot_grid) < 2:
        raise ValueError("need at least two shot budgets")
    rows = []
    for b_idx, n_tomo in enumerate(shot_grid):
        per_state = max(1, n_tomo // 6)
        dists = []
        for rep in range(repeats):
            counts = sample_counts(
                povm, per_state, seed=hash((seed, b_idx, rep)) % (2**31)
            )
            result = ml_tomography(counts, tol=tol, max_iter=max_iter)
            dists.append(operational_distance(povm, result.povm))
        rows.append(ScalingRow(n_tomo, float(np.mean(dists))))
    x = np.log10([r.n_tomo for r in rows])
    y = np.log10([max(r.d_od, 1e-12) for r in rows])
    slope, intercept = np.polyfit(x, y, 1)
    return ScalingResult(tuple(rows), float(slope), float(intercept))
