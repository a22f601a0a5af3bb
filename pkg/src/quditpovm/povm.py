"""POVM data model, estimator arithmetic and distance measures.

A POVM is stored as an ordered tuple of Hermitian positive semi-definite
operators that sum to the identity.  This module provides the standard
single-qubit constructors (symmetric tetrahedral, the four-outcome hardware
demo set, projective measurements padded to four outcomes), observable
decomposition into POVM coefficients, expectation/variance bookkeeping and
the operational distance between POVMs.

Conventions
-----------
* Multi-qubit outcome indices are little-endian mixed-radix: qubit 0 is the
  least-significant base-4 digit.
* Pauli strings are read with character ``q`` acting on qubit ``q``
  (``"ZX"`` means Z on qubit 0, X on qubit 1).
* Probabilities, coefficients and operators are plain numpy arrays.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import reduce
from pathlib import Path

import numpy as np

PSD_TOL = 1e-9
COMPLETENESS_TOL = 1e-9
DEFAULT_SUBSET_LIMIT = 16

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class PovmError(ValueError):
    """Structural or validation failure of a POVM."""


class InformationalCompletenessError(PovmError):
    """The observable cannot be represented in the given POVM."""


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=complex)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate_povm`."""

    psd_violation: float
    completeness_residual: float
    tol: float

    @property
    def valid(self) -> bool:
        return self.psd_violation <= self.tol and self.completeness_residual <= self.tol


@dataclass(frozen=True)
class Povm:
    """An ordered set of measurement operators on a d-dimensional space."""

    operators: tuple
    labels: tuple = ()

    def __post_init__(self):
        ops = tuple(_readonly(op) for op in self.operators)
        if not ops:
            raise PovmError("a POVM needs at least one operator")
        d = ops[0].shape[0]
        for op in ops:
            if op.ndim != 2 or op.shape != (d, d):
                raise PovmError(
                    f"operator shapes disagree: expected {(d, d)}, got {op.shape}"
                )
        labels = self.labels or tuple(str(m) for m in range(len(ops)))
        if len(labels) != len(ops):
            raise PovmError("labels and operators must have equal length")
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "labels", tuple(labels))

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    @property
    def n_outcomes(self) -> int:
        return len(self.operators)

    def stack(self) -> np.ndarray:
        return np.stack(self.operators)

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "labels": list(self.labels),
            "operators": [
                [[[float(z.real), float(z.imag)] for z in row] for row in op]
                for op in self.operators
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Povm":
        ops = []
        for op in data["operators"]:
            mat = np.array([[complex(re, im) for re, im in row] for row in op])
            ops.append(mat)
        return cls(tuple(ops), tuple(data.get("labels") or ()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path) -> "Povm":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class QubitState:
    """A single-qubit state stored as a 2x2 density matrix."""

    density: np.ndarray

    def __post_init__(self):
        rho = _readonly(self.density)
        if rho.shape != (2, 2):
            raise ValueError("density matrix must be 2x2")
        if abs(np.trace(rho) - 1.0) > 1e-9:
            raise ValueError("density matrix must have unit trace")
        if np.linalg.eigvalsh(rho)[0] < -1e-9:
            raise ValueError("density matrix must be positive semi-definite")
        object.__setattr__(self, "density", rho)

    @classmethod
    def from_amplitudes(cls, alpha: complex, beta: complex) -> "QubitState":
        vec = np.array([alpha, beta], dtype=complex)
        nrm = np.linalg.norm(vec)
        if nrm < 1e-15:
            raise ValueError("zero state vector")
        vec = vec / nrm
        return cls(np.outer(vec, vec.conj()))

    def bloch(self) -> np.ndarray:
        rho = self.density
        return np.array(
            [np.trace(rho @ PAULI[p]).real for p in ("X", "Y", "Z")]
        )


@dataclass(frozen=True)
class Observable:
    """Weighted Pauli-string observable on ``n_qubits`` qubits."""

    n_qubits: int
    terms: tuple  # of (weight, pauli_string)

    def __post_init__(self):
        terms = []
        for weight, word in self.terms:
            word = str(word).upper()
            if len(word) != self.n_qubits:
                raise ValueError(
                    f"pauli string {word!r} does not match n_qubits={self.n_qubits}"
                )
            if any(ch not in PAULI for ch in word):
                raise ValueError(f"invalid pauli string {word!r}")
            terms.append((float(weight), word))
        object.__setattr__(self, "terms", tuple(terms))

    def dense(self) -> np.ndarray:
        dim = 2 ** self.n_qubits
        out = np.zeros((dim, dim), dtype=complex)
        for weight, word in self.terms:
            # qubit 0 is the least significant bit -> rightmost kron factor
            ops = [PAULI[word[q]] for q in range(self.n_qubits)]
            out += weight * reduce(np.kron, reversed(ops))
        return out

    @classmethod
    def from_json(cls, data) -> "Observable":
        terms = tuple((w, s) for w, s in data["terms"])
        return cls(int(data["n_qubits"]), terms)

    def to_json(self) -> dict:
        return {"n_qubits": self.n_qubits, "terms": [[w, s] for w, s in self.terms]}


@dataclass(frozen=True)
class ProductPovm:
    """Tensor product of per-qubit four-outcome POVMs."""

    factors: tuple

    def __post_init__(self):
        for f in self.factors:
            if f.dim != 2 or f.n_outcomes != 4:
                raise PovmError("product factors must be 4-outcome qubit POVMs")
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def n_qubits(self) -> int:
        return len(self.factors)

    @property
    def n_outcomes(self) -> int:
        return 4 ** self.n_qubits

    def digits(self, index: int) -> tuple:
        """Little-endian base-4 digits of a global outcome index."""
        out = []
        for _ in range(self.n_qubits):
            out.append(index % 4)
            index //= 4
        return tuple(out)

    def global_operator(self, index: int) -> np.ndarray:
        ops = [self.factors[q].operators[m] for q, m in enumerate(self.digits(index))]
        return reduce(np.kron, reversed(ops))

    def dense(self) -> Povm:
        """Materialize the full POVM (exponential in n_qubits; tests only)."""
        if self.n_qubits > 6:
            raise PovmError("dense product POVM limited to 6 qubits")
        ops = tuple(self.global_operator(i) for i in range(self.n_outcomes))
        return Povm(ops)


@dataclass(frozen=True)
class ProductCoefficients:
    """Lazily evaluated decomposition coefficients over a product POVM.

    The coefficient of global outcome ``(m_0, ..., m_{N-1})`` is
    ``sum_t w_t prod_q c^{(q)}_t[m_q]`` where ``c^{(q)}_t`` is the
    decomposition of term t's local Pauli in qubit q's POVM.
    """

    n_qubits: int
    term_weights: tuple
    term_factors: tuple  # per term: tuple of per-qubit (4,) arrays

    def value(self, index: int) -> float:
        digits = []
        idx = index
        for _ in range(self.n_qubits):
            digits.append(idx % 4)
            idx //= 4
        total = 0.0
        for w, factors in zip(self.term_weights, self.term_factors):
            prod = w
            for q, m in enumerate(digits):
                prod *= factors[q][m]
            total += prod
        return total

    def dense(self) -> np.ndarray:
        if self.n_qubits > 6:
            raise PovmError("dense coefficients limited to 6 qubits")
        total = np.zeros((4,) * self.n_qubits)
        for w, factors in zip(self.term_weights, self.term_factors):
            tensor = np.array([w])
            for q in range(self.n_qubits):
                # prepend qubit q's axis so qubit 0 ends up varying fastest
                tensor = np.multiply.outer(factors[q], tensor)
            total += tensor.reshape((4,) * self.n_qubits)
        return total.reshape(-1)


def validate_povm(povm: Povm, tol: float = PSD_TOL) -> ValidationReport:
    """Check positivity and completeness; see :class:`ValidationReport`."""
    worst = 0.0
    for op in povm.operators:
        herm_dev = np.linalg.norm(op - op.conj().T, np.inf)
        low = np.linalg.eigvalsh((op + op.conj().T) / 2)[0]
        worst = max(worst, herm_dev, -low, 0.0)
    residual = np.linalg.norm(
        sum(povm.operators) - np.eye(povm.dim), np.inf
    )
    return ValidationReport(worst, float(residual), tol)


def outcome_probabilities(state: QubitState | np.ndarray, povm: Povm,
                          tol: float = PSD_TOL) -> np.ndarray:
    """Born-rule outcome distribution ``p_m = Tr(rho Pi_m)``."""
    report = validate_povm(povm, tol)
    if not report.valid:
        raise PovmError(
            f"invalid POVM: psd violation {report.psd_violation:.2e}, "
            f"completeness residual {report.completeness_residual:.2e}"
        )
    rho = state.density if isinstance(state, QubitState) else np.asarray(state)
    p = np.array([np.trace(rho @ op).real for op in povm.operators])
    if p.min() < -tol:
        raise PovmError(f"negative probability {p.min():.2e} beyond tolerance")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def sic_povm() -> Povm:
    """Four rank-one operators whose Bloch vectors form a regular tetrahedron."""
    states = [np.array([1.0, 0.0], dtype=complex)]
    for m in range(1, 4):
        states.append(
            np.array([1.0, np.sqrt(2.0) * np.exp(2j * np.pi * (m - 1) / 3)]) / np.sqrt(3.0)
        )
    ops = tuple(0.5 * np.outer(s, s.conj()) for s in states)
    return Povm(ops, ("sic0", "sic1", "sic2", "sic3"))


def demo_povm() -> Povm:
    """The four-outcome set used for the hardware demonstration.

    Three operators point along Bloch-sphere axes (+x, +z, -y) and the
    fourth into the opposite octant.
    """
    psi0 = np.array([1.0, 1j - 2.0], dtype=complex) / np.sqrt(6.0)
    plus = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)
    zero = np.array([1.0, 0.0], dtype=complex)
    minus_i = np.array([1.0, -1j], dtype=complex) / np.sqrt(2.0)
    ops = (
        0.75 * np.outer(psi0, psi0.conj()),
        0.50 * np.outer(plus, plus.conj()),
        0.50 * np.outer(zero, zero.conj()),
        0.25 * np.outer(minus_i, minus_i.conj()),
    )
    return Povm(ops, ("octant", "+x", "+z", "-y"))


def projective_z_povm() -> Povm:
    """Computational-basis measurement embedded as a 4-outcome POVM."""
    zero = np.zeros((2, 2), dtype=complex)
    ops = (
        np.diag([1.0, 0.0]).astype(complex),
        np.diag([0.0, 1.0]).astype(complex),
        zero,
        zero,
    )
    return Povm(ops, ("0", "1", "pad2", "pad3"))


def _gram_solve(povm: Povm, target: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    ops = povm.stack()
    m = len(ops)
    gram = np.empty((m, m))
    for k in range(m):
        for l in range(m):
            gram[k, l] = np.trace(ops[k] @ ops[l]).real
    rhs = np.array([np.trace(op @ target).real for op in ops])
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        c = np.linalg.pinv(gram, rcond=1e-13) @ rhs
    else:
        c = np.linalg.solve(gram, rhs)
    recon = np.tensordot(c, ops, axes=1)
    scale = max(1.0, np.linalg.norm(target, np.inf))
    if np.linalg.norm(recon - target, np.inf) > tol * scale:
        raise InformationalCompletenessError(
            "observable is not representable in this POVM "
            f"(residual {np.linalg.norm(recon - target, np.inf):.2e})"
        )
    return c


def decompose_observable(obs, povm):
    """Coefficients c with ``O = sum_m c_m Pi_m``.

    For a plain :class:`Povm`, ``obs`` may be an :class:`Observable` or a
    dense Hermitian matrix and a dense coefficient vector is returned.  For
    a :class:`ProductPovm` with a Pauli observable the decomposition is done
    factor-wise and a :class:`ProductCoefficients` is returned without ever
    materializing the 4^N-dimensional system.
    """
    if isinstance(povm, ProductPovm):
        if not isinstance(obs, Observable):
            raise TypeError("product decomposition needs a Pauli Observable")
        if obs.n_qubits != povm.n_qubits:
            raise ValueError("observable and POVM qubit counts differ")
        local_cache: dict = {}
        term_factors = []
        for _, word in obs.terms:
            factors = []
            for q, ch in enumerate(word):
                key = (q, ch)
                if key not in local_cache:
                    local_cache[key] = _gram_solve(povm.factors[q], PAULI[ch])
                factors.append(local_cache[key])
            term_factors.append(tuple(factors))
        weights = tuple(w for w, _ in obs.terms)
        return ProductCoefficients(povm.n_qubits, weights, tuple(term_factors))
    target = obs.dense() if isinstance(obs, Observable) else np.asarray(obs, dtype=complex)
    if target.shape != (povm.dim, povm.dim):
        raise ValueError("observable dimension does not match POVM")
    return _gram_solve(povm, target)


def expectation_from_probs(c: np.ndarray, p: np.ndarray) -> float:
    c = np.asarray(c, dtype=float)
    p = np.asarray(p, dtype=float)
    if c.shape != p.shape:
        raise ValueError("coefficient and probability lengths differ")
    return float(c @ p)


def estimator_variance(c: np.ndarray, p: np.ndarray) -> tuple:
    """Return ``(variance, second_moment)`` of the single-shot estimator."""
    c = np.asarray(c, dtype=float)
    p = np.asarray(p, dtype=float)
    if c.shape != p.shape:
        raise ValueError("coefficient and probability lengths differ")
    second = float(np.sum(c * c * p))
    var = second - float(c @ p) ** 2
    return max(0.0, var), second


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distribution lengths differ")
    return 0.5 * float(np.sum(np.abs(p - q)))


def operational_distance(a: Povm, b: Povm,
                         subset_limit: int = DEFAULT_SUBSET_LIMIT) -> float:
    """Worst-case total variation between two POVMs over all states.

    Computed exactly as the maximum spectral norm of subset sums of the
    operator differences; exhaustive over the 2^M - 1 non-empty subsets.
    """
    if a.dim != b.dim or a.n_outcomes != b.n_outcomes:
        raise PovmError("POVMs must share dimension and outcome count")
    m = a.n_outcomes
    if m > subset_limit:
        raise PovmError(
            f"operational distance is exhaustive (2^M subsets); M={m} exceeds "
            f"the configured limit {subset_limit}"
        )
    deltas = a.stack() - b.stack()
    d = a.dim
    sums = np.zeros((2 ** m, d, d), dtype=complex)
    for mask in range(1, 2 ** m):
        low = mask & -mask
        sums[mask] = sums[mask ^ low] + deltas[low.bit_length() - 1]
    eigs = np.linalg.eigvalsh(sums[1:])
    return float(np.abs(eigs).max())


def probabilities_to_csv(path, labels, values, column: str = "probability") -> None:
    """Write (outcome_index, label, value) rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["outcome_index", "label", column])
        for i, (lab, val) in enumerate(zip(labels, values)):
            writer.writerow([i, lab, f"{val:.12g}"])
