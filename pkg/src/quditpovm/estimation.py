"""Observable estimation from POVM outcome samples.

Histograms are sparse maps over the mixed-radix outcome index (qubit 0 is
the least-significant base-4 digit), so multi-qubit estimation only ever
touches the outcomes actually observed.  Coefficients may be a dense
vector or a lazily evaluated product decomposition.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .povm import (
    Observable,
    Povm,
    ProductCoefficients,
    ProductPovm,
    decompose_observable,
)


@dataclass(frozen=True)
class OutcomeHistogram:
    """Sparse outcome counts."""

    counts: dict
    shots: int
    n_outcomes: int

    def __post_init__(self):
        total = sum(self.counts.values())
        if total != self.shots:
            raise ValueError("counts do not sum to the shot number")
        if any(k < 0 or k >= self.n_outcomes for k in self.counts):
            raise ValueError("outcome index out of range")
        object.__setattr__(self, "counts", dict(self.counts))

    def frequencies(self) -> dict:
        return {k: v / self.shots for k, v in self.counts.items()}


@dataclass(frozen=True)
class EstimationReport:
    estimate: float
    std_error: float
    second_moment: float
    shots: int
    coefficients_source: str  # "theoretical" | "tomographic"

    def to_json(self) -> dict:
        return {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "second_moment": self.second_moment,
            "shots": self.shots,
            "coefficients_source": self.coefficients_source,
        }


def sample_outcomes(probs, shots: int, seed: int = 0) -> OutcomeHistogram:
    """Draw outcome counts from a joint or per-qubit factorized distribution.

    ``probs`` is either a single distribution over all outcomes or a list
    of per-qubit 4-outcome distributions; the factorized form samples each
    qubit independently and composes mixed-radix indices.
    """
    if shots < 1:
        raise ValueError("need at least one shot")
    rng = np.random.default_rng(seed)
    if isinstance(probs, (list, tuple)) and len(probs) > 0 and np.ndim(probs[0]) == 1:
        factors = [np.asarray(p, dtype=float) for p in probs]
        for p in factors:
            if abs(p.sum() - 1.0) > 1e-9 or p.min() < -1e-12:
                raise ValueError("factor distributions must be normalized")
        n_out = 1
        for p in factors:
            n_out *= p.size
        index = np.zeros(shots, dtype=np.int64)
        radix = 1
        for p in factors:
            draws = rng.choice(p.size, size=shots, p=p / p.sum())
            index += radix * draws
            radix *= p.size
        uniq, cnt = np.unique(index, return_counts=True)
        counts = {int(k): int(v) for k, v in zip(uniq, cnt)}
        return OutcomeHistogram(counts, shots, n_out)
    p = np.asarray(probs, dtype=float)
    if abs(p.sum() - 1.0) > 1e-9 or p.min() < -1e-12:
        raise ValueError("distribution must be normalized")
    draws = rng.multinomial(shots, p / p.sum())
    counts = {int(k): int(v) for k, v in enumerate(draws) if v > 0}
    return OutcomeHistogram(counts, shots, p.size)


def _coefficient_lookup(coeffs):
    if isinstance(coeffs, ProductCoefficients):
        return coeffs.value
    dense = np.asarray(coeffs, dtype=float)

    def lookup(index: int) -> float:
        if index >= dense.size:
            raise KeyError(index)
        return float(dense[index])

    return lookup


def estimate_expectation(hist: OutcomeHistogram, coeffs,
                         source: str = "theoretical") -> EstimationReport:
    """Plug-in estimate, standard error and second moment from a histogram."""
    lookup = _coefficient_lookup(coeffs)
    est = 0.0
    second = 0.0
    for index, n in hist.counts.items():
        try:
            c = lookup(index)
        except KeyError:
            raise ValueError(f"no coefficient for observed outcome {index}")
        f = n / hist.shots
        est += c * f
        second += c * c * f
    var = max(0.0, second - est * est)
    return EstimationReport(
        estimate=est,
        std_error=float(np.sqrt(var / hist.shots)),
        second_moment=second,
        shots=hist.shots,
        coefficients_source=source,
    )


def bias(c, p_exp, p_theo) -> float:
    """Systematic estimator offset ``sum_m c_m (p_exp_m - p_theo_m)``."""
    c = np.asarray(c, dtype=float)
    p_exp = np.asarray(p_exp, dtype=float)
    p_theo = np.asarray(p_theo, dtype=float)
    if not (c.shape == p_exp.shape == p_theo.shape):
        raise ValueError("length mismatch")
    return float(c @ (p_exp - p_theo))


def mitigated_estimate(obs: Observable, tomo_povm, hist: OutcomeHistogram) -> EstimationReport:
    """Re-estimate with coefficients from a tomographic POVM reconstruction."""
    coeffs = decompose_observable(obs, tomo_povm)
    return estimate_expectation(hist, coeffs, source="tomographic")


def product_state_probabilities(povm: ProductPovm, state: np.ndarray) -> np.ndarray:
    """Exact joint outcome distribution of a product POVM on a pure state.

    ``state`` holds 2^N amplitudes, qubit 0 least significant.  Dense in
    the 4^N outcomes, so capped at six qubits.
    """
    n = povm.n_qubits
    if n > 6:
        raise ValueError("dense probabilities limited to 6 qubits")
    state = np.asarray(state, dtype=complex)
    if state.shape != (2 ** n,):
        raise ValueError("state length must be 2^n_qubits")
    nrm = np.linalg.norm(state)
    if abs(nrm - 1.0) > 1e-9:
        raise ValueError("state must be normalized")
    # rho as a (2,)*n x (2,)*n tensor; contract one qubit at a time against
    # that qubit's stack of 4 operators.  Axis order keeps qubit 0 fastest.
    psi = state.reshape((2,) * n, order="F")
    rho = np.tensordot(psi, psi.conj(), axes=0)  # 2n axes: (q0..q_{n-1}, q0'..q_{n-1}')
    current = rho
    for q in range(n):
        ops = np.stack(povm.factors[q].operators)  # (4, 2, 2)
        # contract axes of qubit q: bra axis now 0, ket axis n-q (after prior
        # contractions shifted earlier axes away)
        current = np.tensordot(ops, current, axes=[[1, 2], [n - q, 0]])
        # result axes: (m_q, leftover...) with previous outcome axes at the end
        current = np.moveaxis(current, 0, -1)
    probs = np.real(current).reshape(-1, order="F").copy()
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


@dataclass(frozen=True)
class ScatterRow:
    outcome: int
    coefficient: float
    probability: float
    contribution: float  # c^2 p


@dataclass(frozen=True)
class ScatterTable:
    rows: tuple
    second_moment: float
    expectation: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["outcome_index", "c", "p", "c2p"])
            for r in self.rows:
                writer.writerow(
                    [r.outcome, f"{r.coefficient:.12g}",
                     f"{r.probability:.12g}", f"{r.contribution:.12g}"]
                )
            writer.writerow(["total", "", "", f"{self.second_moment:.12g}"])


def scatter_export(obs: Observable, povm: ProductPovm, state) -> ScatterTable:
    """Per-outcome (c_m, p_m, c_m^2 p_m) rows, sorted by contribution.

    The totals row carries the second moment, the shot-cost driver of the
    estimator variance.
    """
    probs = product_state_probabilities(povm, state)
    coeffs = decompose_observable(obs, povm).dense()
    contrib = coeffs * coeffs * probs
    order = np.argsort(-contrib, kind="stable")
    rows = tuple(
        ScatterRow(int(i), float(coeffs[i]), float(probs[i]), float(contrib[i]))
        for i in order
    )
    return ScatterTable(rows, float(contrib.sum()), float(coeffs @ probs))
