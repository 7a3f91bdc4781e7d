"""Exact statevector simulation of the depth-p QAOA circuit for Max-Cut.

Vertex ``i`` is carried by bit ``i`` (least significant first) of the
basis-state index.  The cost diagonal holds the cut size of every bitstring,
so the expected energy is directly the expected cut.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numba
import numpy as np

from .graphs import CapacityError, Graph

MAX_QUBITS = 24

# log2 of the amplitude block kept cache-resident during the low-qubit sweeps
_LOW_BITS = 11
# contiguous amplitudes gathered per row during the high-qubit sweeps
_CHUNK = 32


class BudgetExhausted(RuntimeError):
    """Raised when an objective evaluation would exceed its budget."""


@dataclass(frozen=True)
class QaoaParams:
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=np.float64))
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=np.float64))
        if beta.ndim != 1 or beta.shape != gamma.shape or beta.size < 1:
            raise ValueError(f"beta and gamma must be equal-length vectors, got {beta.shape} and {gamma.shape}")
        if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(gamma))):
            raise ValueError("QAOA angles must be finite")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)

    @property
    def p(self) -> int:
        return self.beta.size

    @classmethod
    def from_vector(cls, x) -> QaoaParams:
        """Split a flat ``2p`` vector laid out as ``(beta_1..beta_p, gamma_1..gamma_p)``."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.size % 2 or x.size == 0:
            raise ValueError(f"parameter vector must have even positive length, got shape {x.shape}")
        p = x.size // 2
        return cls(x[:p], x[p:])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.beta, self.gamma])

    def wrapped(self) -> QaoaParams:
        """Angles reduced to [-pi, pi) for reporting."""
        wrap = lambda a: (a + np.pi) % (2 * np.pi) - np.pi
        return QaoaParams(wrap(self.beta), wrap(self.gamma))


@dataclass(frozen=True)
class CostDiagonal:
    values: np.ndarray  # int64 cut size per basis state
    n: int
    n_edges: int

    @property
    def max_value(self) -> int:
        return int(self.values.max())


@dataclass
class StateVector:
    amps: np.ndarray
    n: int

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amps, self.amps).real))

    def copy(self) -> StateVector:
        return StateVector(self.amps.copy(), self.n)


class EvalCounter:
    """Evaluation budget shared by everything that queries one objective."""

    def __init__(self, budget: int | None = None):
        self.budget = budget
        self.used = 0
        self._lock = threading.Lock()

    @property
    def remaining(self) -> float:
        return float("inf") if self.budget is None else self.budget - self.used

    def consume(self, k: int = 1) -> None:
        with self._lock:
            if self.budget is not None and self.used + k > self.budget:
                raise BudgetExhausted(f"evaluation budget {self.budget} exhausted ({self.used} used, {k} requested)")
            self.used += k

    def __repr__(self):
        return f"EvalCounter(used={self.used}, budget={self.budget})"


def _check_qubits(n: int) -> None:
    if not 1 <= n <= MAX_QUBITS:
        raise CapacityError(f"qubit count must be in [1, {MAX_QUBITS}], got {n}")


def cost_diagonal(g: Graph) -> CostDiagonal:
    """Cut value of every basis state: ``sum over edges of (1 - z_i z_j) / 2``."""
    _check_qubits(g.n)
    idx = np.arange(1 << g.n, dtype=np.int64)
    values = np.zeros(1 << g.n, dtype=np.int64)
    for i, j in g.edges:
        values += ((idx >> i) ^ (idx >> j)) & 1
    return CostDiagonal(values, g.n, g.m)


def plus_state(n: int) -> StateVector:
    _check_qubits(n)
    return StateVector(np.full(1 << n, 2.0 ** (-n / 2), dtype=np.complex128), n)


# --- kernels -------------------------------------------------------------------
#
# H_C and H_M both commute with flipping every bit, and so does |+>^n, hence
# psi[z] == psi[~z] throughout the evolution.  The fast path stores only the
# half with the top bit clear.  In that half the top-qubit mixer pairs index k
# with its reversal M - k.


@numba.njit(cache=True, inline="always")
def _rot(x, y, c, s):
    # (x, y) -> (c x - i s y, c y - i s x)
    return (
        complex(c * x.real + s * y.imag, c * x.imag - s * y.real),
        complex(c * y.real + s * x.imag, c * y.imag - s * x.real),
    )


@numba.njit(cache=True, inline="always")
def _rotate_pairs(a, lo, hi, stride, c, s):
    for b0 in range(lo, hi, 2 * stride):
        for k in range(b0, b0 + stride):
            a[k], a[k + stride] = _rot(a[k], a[k + stride], c, s)


@numba.njit(cache=True)
def _full_phase(psi, values, phases):
    for k in range(psi.shape[0]):
        psi[k] *= phases[values[k]]


@numba.njit(cache=True)
def _full_mix(psi, n, c, s):
    for q in range(n):
        _rotate_pairs(psi, 0, psi.shape[0], 1 << q, c, s)


@numba.njit(cache=True)
def _half_low(h, m, vals, phases, c, s, init_amp):
    n_low = min(m, _LOW_BITS)
    block = 1 << n_low
    for blk in range(0, h.shape[0], block):
        if init_amp != 0.0:
            for k in range(blk, blk + block):
                h[k] = init_amp * phases[vals[k]]
        else:
            for k in range(blk, blk + block):
                h[k] *= phases[vals[k]]
        for q in range(n_low):
            _rotate_pairs(h, blk, blk + block, 1 << q, c, s)


@numba.njit(cache=True)
def _half_high(h, m, vals, c, s, buf, store, want_energy):
    """High-qubit sweeps plus the top-qubit reversal sweep; optionally the energy."""
    energy = 0.0
    if m == 0:
        # single qubit: the symmetric state is an eigenvector of X
        h[0] = h[0] * complex(c, -s)
        z = h[0]
        return 2.0 * (z.real * z.real + z.imag * z.imag) * vals[0]
    n_low = min(m, _LOW_BITS)
    n_high = m - n_low
    top = h.shape[0] - 1
    if n_high == 0:
        for k in range(h.shape[0] // 2):
            h[k], h[top - k] = _rot(h[k], h[top - k], c, s)
        if want_energy:
            for k in range(h.shape[0]):
                z = h[k]
                energy += (z.real * z.real + z.imag * z.imag) * vals[k]
        return 2.0 * energy
    low = 1 << n_low
    rows = 1 << n_high
    w = min(_CHUNK, low // 2)
    sec = rows * w
    for lo0 in range(0, low // 2, w):
        mirror = low - w - lo0
        for r in range(rows):
            base = r * low
            for t in range(w):
                buf[r * w + t] = h[base + lo0 + t]
                buf[sec + r * w + t] = h[base + mirror + t]
        for q in range(n_high):
            _rotate_pairs(buf, 0, sec, (1 << q) * w, c, s)
            _rotate_pairs(buf, sec, 2 * sec, (1 << q) * w, c, s)
        # index r*low + lo0 + t reverses to (rows-1-r)*low + mirror + (w-1-t)
        for r in range(rows):
            rr = rows - 1 - r
            for t in range(w):
                ia = r * w + t
                ib = sec + rr * w + (w - 1 - t)
                buf[ia], buf[ib] = _rot(buf[ia], buf[ib], c, s)
        if want_energy:
            for r in range(rows):
                base = r * low
                for t in range(w):
                    z = buf[r * w + t]
                    energy += (z.real * z.real + z.imag * z.imag) * vals[base + lo0 + t]
                    z = buf[sec + r * w + t]
                    energy += (z.real * z.real + z.imag * z.imag) * vals[base + mirror + t]
        if store:
            for r in range(rows):
                base = r * low
                for t in range(w):
                    h[base + lo0 + t] = buf[r * w + t]
                    h[base + mirror + t] = buf[sec + r * w + t]
    return 2.0 * energy


@numba.njit(cache=True)
def _scratch_size(n):
    m = max(n - 1, 0)
    n_low = min(m, _LOW_BITS)
    n_high = m - n_low
    if n_high == 0:
        return 1
    return 2 * (1 << n_high) * min(_CHUNK, (1 << n_low) // 2)


@numba.njit(cache=True)
def _evolve_half(h, n, vals, n_edges, betas, gammas, buf, keep_state):
    """Run all layers on the half state ``h``; returns the final energy."""
    levels = np.arange(n_edges + 1).astype(np.float64)
    m = n - 1
    p = betas.shape[0]
    energy = 0.0
    for layer in range(p):
        phases = np.exp(-1j * gammas[layer] * levels)
        c = np.cos(betas[layer])
        s = np.sin(betas[layer])
        init = 2.0 ** (-n / 2) if layer == 0 else 0.0
        _half_low(h, m, vals, phases, c, s, init)
        last = layer == p - 1
        energy = _half_high(h, m, vals, c, s, buf, keep_state or not last, last)
    return energy


@numba.njit(cache=True)
def _energies_batch(n, vals, n_edges, betas, gammas, h, buf):
    out = np.empty(betas.shape[0])
    for r in range(betas.shape[0]):
        out[r] = _evolve_half(h, n, vals, n_edges, betas[r], gammas[r], buf, False)
    return out


@numba.njit(cache=True)
def _energy(psi, values):
    acc = 0.0
    for k in range(psi.shape[0]):
        z = psi[k]
        acc += (z.real * z.real + z.imag * z.imag) * values[k]
    return acc


_workspaces = threading.local()


def _workspace(n: int):
    cache = getattr(_workspaces, "by_n", None)
    if cache is None:
        cache = _workspaces.by_n = {}
    if n not in cache:
        cache.clear()  # one large workspace per thread at a time
        cache[n] = (
            np.empty(1 << (n - 1), dtype=np.complex128),
            np.empty(_scratch_size(n), dtype=np.complex128),
        )
    return cache[n]


# --- public layer operations ---------------------------------------------------


def apply_cost_layer(s: StateVector, gamma: float, d: CostDiagonal) -> StateVector:
    """Return ``exp(-i gamma H_C) |s>``."""
    if s.n != d.n:
        raise ValueError(f"state has {s.n} qubits, diagonal has {d.n}")
    out = s.amps.astype(np.complex128, copy=True)
    _full_phase(out, d.values, np.exp(-1j * float(gamma) * np.arange(d.n_edges + 1)))
    return StateVector(out, s.n)


def apply_mixer_layer(s: StateVector, beta: float) -> StateVector:
    """Return ``exp(-i beta sum_q X_q) |s>`` for an arbitrary state."""
    if s.amps.shape != (1 << s.n,):
        raise ValueError(f"state of {s.n} qubits needs {1 << s.n} amplitudes, got {s.amps.shape}")
    out = s.amps.astype(np.complex128, copy=True)
    _full_mix(out, s.n, np.cos(beta), np.sin(beta))
    return StateVector(out, s.n)


def _half_values(d: CostDiagonal) -> np.ndarray:
    return np.ascontiguousarray(d.values[: 1 << (d.n - 1)])


def evolve(d: CostDiagonal, params: QaoaParams) -> StateVector:
    """Prepare ``|psi(beta, gamma)>``: from ``|+>^n`` apply the cost layer then the mixer layer, ``p`` times."""
    _check_qubits(d.n)
    h = np.empty(1 << (d.n - 1), dtype=np.complex128)
    buf = np.empty(_scratch_size(d.n), dtype=np.complex128)
    _evolve_half(h, d.n, _half_values(d), d.n_edges, params.beta, params.gamma, buf, True)
    # psi[2**(n-1) + k] == psi[complement] == h[2**(n-1) - 1 - k]
    return StateVector(np.concatenate([h, h[::-1]]), d.n)


def expected_energy(s: StateVector, d: CostDiagonal) -> float:
    if s.n != d.n or s.amps.shape != d.values.shape:
        raise ValueError(f"state has {s.n} qubits, diagonal has {d.n}")
    return float(_energy(s.amps, d.values))


def evaluate(d: CostDiagonal, params: QaoaParams, counter: EvalCounter | None = None) -> float:
    """One circuit evaluation ``f(beta, gamma)``; charges ``counter`` first."""
    if counter is not None:
        counter.consume(1)
    h, buf = _workspace(d.n)
    return float(_evolve_half(h, d.n, _half_values(d), d.n_edges, params.beta, params.gamma, buf, False))


def evaluate_batch(d: CostDiagonal, x: np.ndarray, counter: EvalCounter | None = None) -> np.ndarray:
    """Evaluate each row of ``x`` (shape ``(B, 2p)``); charges ``B`` evaluations."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] == 0 or x.shape[1] % 2:
        raise ValueError(f"parameter rows must have even positive length, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("QAOA angles must be finite")
    if counter is not None:
        counter.consume(x.shape[0])
    p = x.shape[1] // 2
    h, buf = _workspace(d.n)
    return _energies_batch(
        d.n, _half_values(d), d.n_edges, np.ascontiguousarray(x[:, :p]), np.ascontiguousarray(x[:, p:]), h, buf
    )


def qaoa_objective(d: CostDiagonal, counter: EvalCounter | None = None):
    """``x -> f`` closure over a flat ``(beta, gamma)`` vector."""

    def f(x):
        return evaluate(d, QaoaParams.from_vector(x), counter)

    return f


def landscape_grid(d: CostDiagonal, resolution: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """p=1 energy on a uniform grid over ``[-pi, pi]^2``.

    Returns ``(betas, gammas, f)`` with ``f[i, j] = f(betas[i], gammas[j])``.
    """
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    axis = np.linspace(-np.pi, np.pi, resolution)
    bb, gg = np.meshgrid(axis, axis, indexing="ij")
    f = evaluate_batch(d, np.column_stack([bb.ravel(), gg.ravel()]))
    return axis, axis.copy(), f.reshape(resolution, resolution)


def write_landscape_csv(betas, gammas, f, fh) -> None:
    fh.write("beta,gamma,f\n")
    for i, b in enumerate(betas):
        for j, g in enumerate(gammas):
            fh.write(f"{b:.12g},{g:.12g},{f[i, j]:.12g}\n")
