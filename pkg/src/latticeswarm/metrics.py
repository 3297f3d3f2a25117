"""Formation-quality metrics and their time-series summaries."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .core import SwarmParams, SwarmState, TWO_PI, relative_positions

E_THETA_STAR = 0.2
E_L_STAR = 0.3


@dataclass(frozen=True)
class Thresholds:
    e_theta: float = E_THETA_STAR
    e_L: float = E_L_STAR


@dataclass
class MetricSeries:
    times: np.ndarray
    e_theta: np.ndarray
    e_L: np.ndarray
    N: np.ndarray
    e: Optional[np.ndarray] = None
    Gn_mean: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.times)
        for name in ("e_theta", "e_L", "N", "e", "Gn_mean"):
            v = getattr(self, name)
            if v is not None and len(v) != n:
                raise ValueError(f"{name} has length {len(v)}, expected {n}")

    def __len__(self):
        return len(self.times)

    def to_csv(self, path) -> None:
        cols = ["t", "e_theta", "e_L", "N", "e", "Gn_mean"]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for k in range(len(self)):
                vals = [self.times[k], self.e_theta[k], self.e_L[k], int(self.N[k]),
                        "" if self.e is None else self.e[k],
                        "" if self.Gn_mean is None else self.Gn_mean[k]]
                fh.write(",".join(v if isinstance(v, str) else repr(v if isinstance(v, int) else float(v))
                                  for v in vals) + "\n")


# --- instantaneous metrics ----------------------------------------------------

def circular_pair_sum(psi: np.ndarray) -> float:
    """Sum over ordered pairs of the circular distance between angles ``psi``.

    Runs in O(n log n) via sorting and prefix sums.
    """
    n = len(psi)
    if n < 2:
        return 0.0
    s = np.sort(np.mod(psi, TWO_PI))
    P = np.concatenate([[0.0], np.cumsum(s)])
    idx = np.arange(n)
    k = np.searchsorted(s, s + math.pi, side="right")
    k = np.maximum(k, idx + 1)
    cnt1 = k - idx - 1
    near = P[k] - P[idx + 1] - cnt1 * s
    cnt2 = n - k
    far = cnt2 * (TWO_PI + s) - (P[n] - P[k])
    return 2.0 * float(np.sum(near + far))


def regularity_of_vectors(vecs: np.ndarray, L: int) -> float:
    """e_theta for a list of directed link vectors (both directions included)."""
    m = len(vecs)
    if m <= 2:
        return 0.0
    phi = np.arctan2(vecs[:, 1], vecs[:, 0])
    total = circular_pair_sum(L * phi) / L
    theta_err = total / (m * m - 2 * m)
    return (L / math.pi) * theta_err


def regularity(state: SwarmState, params: SwarmParams, geometry=None) -> float:
    """Regularity metric e_theta in [0, 1] (0 for a perfect (L, R)-lattice)."""
    if state.d != 2:
        raise ValueError("regularity is defined in the plane only")
    r, dist = geometry if geometry is not None else relative_positions(state.positions)
    adj = _adjacency(dist, params)
    return regularity_of_vectors(r[adj], params.L)


def _adjacency(dist, params):
    adj = (dist >= params.R_min) & (dist <= params.R_max)
    np.fill_diagonal(adj, False)
    return adj


def compactness(state: SwarmState, params: SwarmParams, geometry=None) -> float:
    """Mean normalised deviation of neighbour counts from L."""
    if geometry is not None:
        dist = geometry[1]
    else:
        _, dist = relative_positions(state.positions)
    deg = _adjacency(dist, params).sum(axis=1)
    return float(np.mean(np.abs(deg - params.L)) / params.L)


def link_length_error(state: SwarmState, R: float, R_min: float, R_max: float,
                      geometry=None) -> Optional[float]:
    """max over links of ``| |r_k| - R |``; None when there are no links."""
    dist = geometry[1] if geometry is not None else relative_positions(state.positions)[1]
    m = (dist >= R_min) & (dist <= R_max)
    np.fill_diagonal(m, False)
    if not m.any():
        return None
    return float(np.max(np.abs(dist[m] - R)))


# --- time-series summaries --------------------------------------------------------

def stable_flags(e: np.ndarray, tol: float, W: int) -> np.ndarray:
    """flags[k] is True when |e_k - e_{k-j}| <= tol for all j = 1..W."""
    e = np.asarray(e, dtype=float)
    n = len(e)
    out = np.zeros(n, dtype=bool)
    if n <= W:
        return out
    # centred filter of size W+1 at i covers [i - c, i - c + W]; shift to trailing
    c = (W + 1) // 2
    mx = maximum_filter1d(e, size=W + 1, mode="nearest")
    mn = minimum_filter1d(e, size=W + 1, mode="nearest")
    k = np.arange(W, n)
    eps = 1e-12
    ok = (mx[k - W + c] - e[k] <= tol + eps) & (e[k] - mn[k - W + c] <= tol + eps)
    out[W:] = ok
    return out


def steady_state(series: MetricSeries, e_theta_star: float = E_THETA_STAR,
                 e_L_star: float = E_L_STAR, T_w: float = 10.0, dt: float = 0.01) -> Optional[float]:
    """Earliest time at which both metrics have settled over the trailing window."""
    W = int(math.floor(T_w / dt + 1e-9))
    f1 = stable_flags(series.e_theta, 0.1 * e_theta_star, W)
    f2 = stable_flags(series.e_L, 0.1 * e_L_star, W)
    both = np.flatnonzero(f1 & f2)
    if len(both) == 0:
        return None
    return float(series.times[both[0]])


def _suffix_time(times, values, thr):
    bad = np.flatnonzero(np.asarray(values) > thr)
    if len(bad) == 0:
        return float(times[0]) if len(times) else None
    last = bad[-1]
    if last + 1 >= len(times):
        return None
    return float(times[last + 1])


def convergence_times(series: MetricSeries, thresholds: Thresholds = Thresholds()):
    """(T_theta, T_L, T): first instants after which each metric stays below threshold."""
    T_th = _suffix_time(series.times, series.e_theta, thresholds.e_theta)
    T_L = _suffix_time(series.times, series.e_L, thresholds.e_L)
    T = None if T_th is None or T_L is None else max(T_th, T_L)
    return T_th, T_L, T


def tuning_cost(e_theta_ss: float, e_L_ss: float, thresholds: Thresholds = Thresholds()) -> float:
    if e_theta_ss < 0 or e_L_ss < 0:
        raise ValueError("metrics must be non-negative")
    return (e_theta_ss / thresholds.e_theta) ** 2 + (e_L_ss / thresholds.e_L) ** 2
