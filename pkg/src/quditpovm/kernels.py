"""Time-stepping propagation kernels.

The inner loop of every pulse simulation is the same: step a batch of
unitaries through a piecewise-constant drive, one exact matrix exponential
per envelope sample.  Two interchangeable implementations are provided:

* a numba ``@njit`` kernel (scaling-and-squaring Taylor exponential,
  parallel over the batch), used by default when numba is importable;
* a pure-numpy fallback built on batched Hermitian eigendecomposition.

Selection is controlled by the ``QUDITPOVM_NUMBA`` environment variable:
``"0"`` forces the numpy path, ``"1"`` requires numba (ImportError if it is
missing), unset/``"auto"`` picks numba when available.  Both paths compute
the same exact per-sample exponential; ``benchmarks/bench_kernels.py``
compares their throughput.
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("QUDITPOVM_NUMBA", "auto").strip().lower()

if _FLAG == "0":
    NUMBA_ENABLED = False
elif _FLAG in ("1", "auto", ""):
    try:
        import numba  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:
        if _FLAG == "1":
            raise
        NUMBA_ENABLED = False
else:
    raise ValueError(f"QUDITPOVM_NUMBA must be '0', '1' or 'auto', got {_FLAG!r}")


def propagate_pulse_batch_numpy(u_batch, h0_batch, vmat, env, dt):
    """Advance a batch of unitaries through one pulse (numpy path).

    Parameters
    ----------
    u_batch : (K, d, d) complex
        Accumulated propagators, updated as ``u <- exp(-i H_k dt) u`` per
        envelope sample.
    h0_batch : (K, d) float
        Static rotating-frame diagonal (rad/ns) per batch member.
    vmat : (d, d) complex
        Drive coupling matrix (Hermitian, includes the drive phase); the
        sample Hamiltonian is ``diag(h0) + env[k] * vmat``.
    env : (n,) float
        Envelope samples (rad/ns).
    dt : float
        Sample duration (ns).

    Returns
    -------
    (K, d, d) complex array of updated propagators.
    """
    u = np.array(u_batch, dtype=np.complex128, copy=True)
    kk, d = np.shape(h0_batch)
    hdiag = np.zeros((kk, d, d), dtype=np.complex128)
    idx = np.arange(d)
    hdiag[:, idx, idx] = h0_batch
    for a in env:
        h = hdiag + a * vmat
        w, vec = np.linalg.eigh(h)
        phases = np.exp(-1j * w * dt)
        step = (vec * phases[:, None, :]) @ np.conj(np.swapaxes(vec, 1, 2))
        u = step @ u
    return u


if NUMBA_ENABLED:
    from numba import njit

    @njit(cache=True, inline="always")
    def _matmul(a, b, out):  # pragma: no cover - exercised via wrappers
        d = a.shape[0]
        for i in range(d):
            for j in range(d):
                acc = 0.0 + 0.0j
                for k in range(d):
                    acc += a[i, k] * b[k, j]
                out[i, j] = acc

    @njit(cache=True)
    def _expm_step(h, dt, out, w1, w2):  # pragma: no cover
        # out = exp(-1i h dt), h Hermitian; scaled Taylor-12 is exact to
        # machine precision once the scaled norm is below 0.25.
        d = h.shape[0]
        nrm = 0.0
        for j in range(d):
            col = 0.0
            for i in range(d):
                col += abs(h[i, j])
            if col > nrm:
                nrm = col
        x = nrm * dt
        s = 0
        while x > 0.25:
            x *= 0.5
            s += 1
        scale = dt / (2.0 ** s)
        for i in range(d):
            for j in range(d):
                w1[i, j] = -1j * h[i, j] * scale
                out[i, j] = w1[i, j]
        for i in range(d):
            out[i, i] += 1.0
        for k in range(2, 13):
            _matmul(w1, h, w2)
            c = -1j * scale / k
            for i in range(d):
                for j in range(d):
                    w1[i, j] = w2[i, j] * c
                    out[i, j] += w1[i, j]
        for _ in range(s):
            _matmul(out, out, w2)
            for i in range(d):
                for j in range(d):
                    out[i, j] = w2[i, j]

    @njit(cache=True)
    def _propagate_single(u, h0, vmat, env, dt):  # pragma: no cover
        d = h0.shape[0]
        h = np.empty((d, d), dtype=np.complex128)
        step = np.empty((d, d), dtype=np.complex128)
        w1 = np.empty((d, d), dtype=np.complex128)
        w2 = np.empty((d, d), dtype=np.complex128)
        nxt = np.empty((d, d), dtype=np.complex128)
        for k in range(env.shape[0]):
            a = env[k]
            for i in range(d):
                for j in range(d):
                    h[i, j] = a * vmat[i, j]
                h[i, i] += h0[i]
            _expm_step(h, dt, step, w1, w2)
            _matmul(step, u, nxt)
            u[:] = nxt

    # serial over the batch but GIL-free, so callers may thread over
    # independent sweep cells without fighting numba's threading layer
    @njit(cache=True, nogil=True)
    def _propagate_batch_numba(u_batch, h0_batch, vmat, env, dt):  # pragma: no cover
        out = u_batch.copy()
        for i in range(out.shape[0]):
            _propagate_single(out[i], h0_batch[i], vmat, env, dt)
        return out

    def propagate_pulse_batch_numba(u_batch, h0_batch, vmat, env, dt):
        """numba counterpart of :func:`propagate_pulse_batch_numpy`."""
        return _propagate_batch_numba(
            np.ascontiguousarray(u_batch, dtype=np.complex128),
            np.ascontiguousarray(h0_batch, dtype=np.float64),
            np.ascontiguousarray(vmat, dtype=np.complex128),
            np.ascontiguousarray(env, dtype=np.float64),
            float(dt),
        )

    propagate_pulse_batch = propagate_pulse_batch_numba
else:
    propagate_pulse_batch_numba = None
    propagate_pulse_batch = propagate_pulse_batch_numpy
