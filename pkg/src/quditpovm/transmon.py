"""Charge-basis transmon spectrum, parameter calibration and level decay.

Energies are linear frequencies in GHz (h = 1), offset charge is
dimensionless in [0, 1], decay rates are 1/us.  The spectrum is obtained by
diagonalizing ``4 E_C (k - n_g)^2 - (E_J/2) (hop+ + hop-)`` on the charge
lattice ``k in [-cutoff, cutoff]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq, minimize

NG_GRID_POINTS = 21


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TransmonParams:
    e_j: float
    e_c: float
    levels: int = 5
    charge_cutoff: int = 20

    def __post_init__(self):
        if self.e_c <= 0 or self.e_j <= 0:
            raise ValueError("energies must be positive")
        if self.e_j / self.e_c <= 1:
            raise ValueError("need E_J/E_C > 1 (transmon regime)")
        if self.levels < 4:
            raise ValueError("need at least 4 levels")
        if self.charge_cutoff < 10:
            raise ValueError("charge cutoff below 10 is not converged")

    @property
    def ratio(self) -> float:
        return self.e_j / self.e_c


def diagonalize(params: TransmonParams, n_g: float) -> np.ndarray:
    """Lowest level energies at fixed offset charge, shifted so E_0 = 0."""
    if not 0.0 <= n_g <= 1.0:
        raise ValueError("offset charge must lie in [0, 1]")
    return _diagonalize_cached(params.e_j, params.e_c, float(n_g),
                               params.charge_cutoff, params.levels)


@lru_cache(maxsize=4096)
def _diagonalize_cached(e_j, e_c, n_g, cutoff, levels):
    k = np.arange(-cutoff, cutoff + 1)
    h = 4.0 * e_c * np.diag((k - n_g) ** 2)
    hop = np.diag(np.ones(2 * cutoff), 1)
    h -= e_j / 2.0 * (hop + hop.T)
    w = np.linalg.eigvalsh(h)[:levels]
    out = w - w[0]
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Spectrum:
    """Eigenenergy surface over an offset-charge grid."""

    n_g_grid: np.ndarray
    energies: np.ndarray  # (n_grid, levels)

    def __post_init__(self):
        object.__setattr__(self, "n_g_grid", np.asarray(self.n_g_grid, dtype=float))
        object.__setattr__(self, "energies", np.asarray(self.energies, dtype=float))

    @property
    def average_energies(self) -> np.ndarray:
        return self.energies.mean(axis=0)

    @property
    def transition_freqs(self) -> np.ndarray:
        """n_g-averaged transition frequencies (GHz)."""
        return np.diff(self.average_energies)

    def dispersion(self, n: int) -> float:
        e0 = self.energies[np.argmin(np.abs(self.n_g_grid - 0.0))]
        e5 = self.energies[np.argmin(np.abs(self.n_g_grid - 0.5))]
        return float(abs(e0[n] - e5[n]))

    def anharmonicity(self, n: int) -> float:
        freqs = self.transition_freqs
        return float(freqs[n] - freqs[n - 1])

    def to_csv(self, path) -> None:
        levels = self.energies.shape[1]
        header = "n_g," + ",".join(f"E_{n}" for n in range(levels))
        lines = [header]
        for g, row in zip(self.n_g_grid, self.energies):
            lines.append(f"{g:.10g}," + ",".join(f"{e:.12g}" for e in row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def spectrum(params: TransmonParams, n_points: int = NG_GRID_POINTS) -> Spectrum:
    grid = np.linspace(0.0, 1.0, n_points)
    energies = np.stack([diagonalize(params, g) for g in grid])
    return Spectrum(grid, energies)


def charge_dispersion(params: TransmonParams, n: int) -> float:
    """|E_n(n_g=0) - E_n(n_g=1/2)| in GHz."""
    if not 0 <= n < params.levels:
        raise ValueError("level index out of range")
    return float(abs(diagonalize(params, 0.0)[n] - diagonalize(params, 0.5)[n]))


def anharmonicity(params: TransmonParams, n: int) -> float:
    """alpha_n = average transition frequency difference (GHz)."""
    if not 1 <= n < params.levels - 1:
        raise ValueError("anharmonicity defined for 1 <= n < levels-1")
    return spectrum(params).anharmonicity(n)


def calibrate_params(target_freq: float, ratio: float, levels: int = 5,
                     charge_cutoff: int = 20) -> TransmonParams:
    """Choose (E_J, E_C) at fixed ratio so the base frequency matches.

    Eigenvalues scale linearly with the overall energy scale at fixed
    E_J/E_C, so the solve is a single rescaling; the result is verified to
    1e-6 GHz.
    """
    if not 10 <= ratio <= 200:
        raise CalibrationError(f"ratio {ratio} outside the supported range [10, 200]")
    probe = TransmonParams(ratio * 1.0, 1.0, levels, charge_cutoff)
    base = diagonalize(probe, 0.0)
    e_c = target_freq / (base[1] - base[0])
    params = TransmonParams(ratio * e_c, e_c, levels, charge_cutoff)
    achieved = diagonalize(params, 0.0)[1]
    if abs(achieved - target_freq) > 1e-6:
        raise CalibrationError(
            f"calibration missed: wanted {target_freq} GHz, got {achieved} GHz "
            f"with E_C in [{0.5 * e_c}, {2 * e_c}]"
        )
    return params


def calibrate_to_anharmonicity(target_freq: float, target_alpha1: float,
                               levels: int = 5, charge_cutoff: int = 20,
                               ratio_bracket=(10.0, 200.0)) -> TransmonParams:
    """Two-parameter calibration: base frequency and first anharmonicity."""

    def mismatch(ratio):
        p = calibrate_params(target_freq, ratio, levels, charge_cutoff)
        return anharmonicity(p, 1) - target_alpha1

    try:
        ratio = brentq(mismatch, *ratio_bracket, xtol=1e-9)
    except ValueError as exc:
        raise CalibrationError(
            f"anharmonicity {target_alpha1} GHz not bracketed by ratios "
            f"{ratio_bracket}"
        ) from exc
    return calibrate_params(target_freq, ratio, levels, charge_cutoff)


_DOWNWARD = ((3, 2), (3, 1), (3, 0), (2, 1), (2, 0), (1, 0))


@dataclass(frozen=True)
class DecayModel:
    """Downward multi-channel decay rates between the four qudit levels."""

    rates: np.ndarray  # (4, 4), rates[i, j] = rate i -> j for i > j, 1/us

    def __post_init__(self):
        r = np.asarray(self.rates, dtype=float).copy()
        if r.shape != (4, 4):
            raise ValueError("rate matrix must be 4x4")
        if np.any(r[np.triu_indices(4, 1)] != 0.0):
            raise ValueError("upward rates must be zero")
        off = r[np.tril_indices(4, -1)]
        if np.any(off < 0):
            raise ValueError("negative decay rate")
        for i in range(4):
            r[i, i] = -np.sum(r[i, :i])
        r.setflags(write=False)
        object.__setattr__(self, "rates", r)

    @classmethod
    def from_downward(cls, g32, g31, g30, g21, g20, g10) -> "DecayModel":
        r = np.zeros((4, 4))
        for (i, j), val in zip(_DOWNWARD, (g32, g31, g30, g21, g20, g10)):
            r[i, j] = val
        return cls(r)

    def downward(self) -> np.ndarray:
        return np.array([self.rates[i, j] for i, j in _DOWNWARD])

    def t1(self, level: int) -> float:
        """1 / (total decay rate out of ``level``) in us."""
        total = np.sum(self.rates[level, :level])
        if total <= 0:
            return np.inf
        return float(1.0 / total)

    def generator(self) -> np.ndarray:
        """dp/dt = generator() @ p; columns sum to zero exactly."""
        return self.rates.T.copy()

    def to_json(self) -> dict:
        return {
            "rates_per_us": {f"{i}{j}": self.rates[i, j] for i, j in _DOWNWARD},
            "t1_us": {str(n): self.t1(n) for n in (1, 2, 3)},
        }


def decay_evolve(model: DecayModel, p0, t: float) -> np.ndarray:
    """Populations after ``t`` microseconds of free decay."""
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (4,) or abs(p0.sum() - 1.0) > 1e-9 or p0.min() < -1e-12:
        raise ValueError("p0 must be a normalized population vector")
    if t < 0:
        raise ValueError("time must be non-negative")
    p = expm(model.generator() * t) @ p0
    return np.clip(p, 0.0, 1.0) / np.clip(p, 0.0, 1.0).sum()


@dataclass(frozen=True)
class DecayFit:
    model: DecayModel
    residual: float

    def to_json(self) -> dict:
        out = self.model.to_json()
        out["residual"] = self.residual
        return out


def decay_fit(times, populations, restarts: int = 5, seed: int = 0) -> DecayFit:
    """Fit the six downward rates to population trajectories.

    Bounded Nelder-Mead from several perturbed starts; the trajectories are
    propagated from the first data row.
    """
    times = np.asarray(times, dtype=float)
    data = np.asarray(populations, dtype=float)
    if times.size < 10:
        raise ValueError("need at least 10 time points")
    if data.shape != (times.size, 4):
        raise ValueError("populations must be (n_times, 4)")
    if np.ptp(data, axis=0).max() < 1e-12:
        raise ValueError("degenerate data: populations are constant")
    order = np.argsort(times)
    times, data = times[order], data[order]
    p0 = data[0] / data[0].sum()
    t_rel = times - times[0]

    def trajectories(gen):
        # spectral propagation; the generator is triangular up to transpose,
        # fall back to expm when the eigenbasis is ill-conditioned
        w, v = np.linalg.eig(gen)
        if np.linalg.cond(v) < 1e8:
            coeff = np.linalg.solve(v, p0.astype(complex))
            return np.real(np.exp(np.outer(t_rel, w)) * coeff) @ v.T
        return np.stack([expm(gen * t) @ p0 for t in t_rel])

    def objective(rates):
        model = DecayModel.from_downward(*np.clip(rates, 0.0, None))
        return float(np.sum((trajectories(model.generator()) - data) ** 2))

    span = max(t_rel[-1], 1e-6)
    guess = np.full(6, 1.0 / span)
    rng = np.random.default_rng(seed)
    best = None
    for k in range(restarts):
        start = guess if k == 0 else guess * rng.lognormal(0.0, 1.0, size=6)
        res = minimize(
            objective, start, method="Nelder-Mead",
            bounds=[(0.0, 100.0 / span)] * 6,
            options={"maxiter": 4000, "xatol": 1e-11, "fatol": 1e-15,
                     "adaptive": True},
        )
        if best is None or res.fun < best.fun:
            best = res
    # simplex contraction stalls near the optimum; a short restart from the
    # incumbent tightens noiseless fits to ~1e-7 rates
    res = minimize(
        objective, best.x, method="Nelder-Mead",
        bounds=[(0.0, 100.0 / span)] * 6,
        options={"maxiter": 2000, "xatol": 1e-12, "fatol": 1e-18},
    )
    if res.fun < best.fun:
        best = res
    rates = np.clip(best.x, 0.0, None)
    return DecayFit(DecayModel.from_downward(*rates), float(best.fun))
