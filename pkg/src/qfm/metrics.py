"""Distribution-level and state-level evaluation metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .states import PauliString, StateVector, expectation

DEFAULT_BINS = 20
# Additive smoothing on the q histogram: eps = 1 / (SMOOTHING_FACTOR * total).
SMOOTHING_FACTOR = 10


@dataclass(frozen=True)
class Histogram:
    """Binned counts with strictly increasing edges."""

    edges: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(float(e) for e in self.edges))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if len(self.edges) != len(self.counts) + 1:
            raise ValueError("need one more edge than bins")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ValueError("edges must be strictly increasing")
        if any(c < 0 for c in self.counts):
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return sum(self.counts)

    def probabilities(self) -> np.ndarray:
        total = self.total
        if total == 0:
            raise ValueError("empty histogram")
        return np.asarray(self.counts, dtype=np.float64) / total


def histogram(values, edges) -> Histogram:
    counts, _ = np.histogram(np.asarray(values, dtype=np.float64), bins=np.asarray(edges))
    return Histogram(tuple(edges), tuple(int(c) for c in counts))


def uniform_edges(lo: float, hi: float, bins: int = DEFAULT_BINS) -> tuple[float, ...]:
    return tuple(np.linspace(lo, hi, bins + 1))


def centered_edges(lo: float, hi: float, width: float) -> tuple[float, ...]:
    """Edges offset by half a bin so multiples of ``width`` are bin centers."""
    n = int(round((hi - lo) / width))
    return tuple(lo - width / 2.0 + width * k for k in range(n + 2))


def _check_same_bins(p: Histogram, q: Histogram) -> None:
    if p.edges != q.edges:
        raise ValueError("histograms use different bin edges")


def kl_divergence(p: Histogram, q: Histogram) -> float:
    """``sum_i p_i ln(p_i / q~_i)`` with additive smoothing on ``q``.

    ``q`` is smoothed by ``eps = 1 / (10 * q.total)`` per bin (renormalized)
    so empty bins stay finite; bins with ``p_i = 0`` contribute nothing.
    """
    _check_same_bins(p, q)
    pp = p.probabilities()
    eps = 1.0 / (SMOOTHING_FACTOR * q.total)
    qq = q.probabilities() + eps
    qq /= qq.sum()
    mask = pp > 0
    return float(np.sum(pp[mask] * np.log(pp[mask] / qq[mask])))


def hellinger(p: Histogram, q: Histogram) -> float:
    """``sqrt(1 - sum_i sqrt(p_i q_i))``, bounded in [0, 1]."""
    _check_same_bins(p, q)
    bc = float(np.sum(np.sqrt(p.probabilities() * q.probabilities())))
    return float(np.sqrt(max(0.0, 1.0 - bc)))


def magnetization(state: StateVector, n_data: int | None = None) -> float:
    """``(1/n) sum_i <s_z^i>`` over the first ``n_data`` qubits."""
    n = state.n_qubits if n_data is None else int(n_data)
    if not 1 <= n <= state.n_qubits:
        raise ValueError(f"n_data {n} out of range")
    word = ["I"] * state.n_qubits
    total = 0.0
    for q in range(n):
        word[q] = "Z"
        total += expectation(state, PauliString("".join(word)))
        word[q] = "I"
    return total / n


_SIGMA_Y = PauliString("Y")


def ring_deviation(ensemble) -> float:
    """Ensemble second moment of the per-state ``<Y>`` for single-qubit states."""
    vals = []
    for s in ensemble.states:
        if s.n_qubits != 1:
            raise ValueError("ring deviation is defined for single-qubit states")
        vals.append(expectation(s, _SIGMA_Y))
    return float(np.mean(np.square(vals)))


def coefficient_of_variation(running) -> np.ndarray:
    """Per-prefix population std / |mean|; NaN marks an undefined (zero-mean)
    prefix rather than an error."""
    x = np.asarray(running, dtype=np.float64)
    if x.size == 0:
        raise ValueError("need at least one sample")
    k = np.arange(1, x.size + 1, dtype=np.float64)
    csum = np.cumsum(x)
    csq = np.cumsum(x * x)
    mean = csum / k
    var = np.maximum(csq / k - mean**2, 0.0)
    out = np.full(x.size, np.nan)
    ok = mean != 0.0
    out[ok] = np.sqrt(var[ok]) / np.abs(mean[ok])
    return out


def cv_stabilization_index(cv: np.ndarray, window: int = 50, rel_tol: float = 0.01) -> int | None:
    """First index where the CV stays within ``rel_tol`` relative change over
    the trailing ``window`` samples; ``None`` if it never stabilizes."""
    cv = np.asarray(cv, dtype=np.float64)
    for i in range(window, cv.size):
        seg = cv[i - window : i + 1]
        if np.any(~np.isfinite(seg)):
            continue
        lo, hi = seg.min(), seg.max()
        if hi == 0.0 or (hi - lo) / max(abs(hi), 1e-300) < rel_tol:
            return i
    return None
