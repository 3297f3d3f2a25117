"""Swarm state, parameters and geometric primitives.

Positions are stored as ``(N, d)`` float arrays.  Relative positions follow
the convention ``r_ij = x_i - x_j`` throughout the package.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

TWO_PI = 2.0 * math.pi


class CoincidentAgentsError(ValueError):
    """Raised when an angle is requested for two agents at the same point."""


@dataclass(frozen=True)
class SwarmParams:
    """Geometric and timing parameters shared by all agents."""

    N: int = 100
    d: int = 2
    R: float = 1.0
    R_min: float = 0.6
    R_max: float = 1.1
    R_s: float = math.inf
    V_max: float = 5.0
    dt: float = 0.01
    L: int = 6
    T_w: float = 10.0
    R_a: Optional[float] = None

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be positive")
        if self.d not in (2, 3):
            raise ValueError("d must be 2 or 3")
        if not (0.0 <= self.R_min <= self.R <= self.R_max <= self.R_s):
            raise ValueError(
                "need 0 <= R_min <= R <= R_max <= R_s, got "
                f"R_min={self.R_min}, R={self.R}, R_max={self.R_max}, R_s={self.R_s}")
        if self.d == 2 and self.L not in (4, 6):
            raise ValueError("L must be 4 or 6 in the plane")
        if self.dt <= 0 or self.V_max <= 0 or self.T_w <= 0:
            raise ValueError("dt, V_max and T_w must be positive")
        if self.R_a is not None:
            r_next = next_neighbor_distance(self.d, self.R)
            if not (self.R < self.R_a < r_next):
                raise ValueError(f"R_a must lie in ({self.R}, {r_next:.4f})")

    @property
    def window_steps(self) -> int:
        return int(math.floor(self.T_w / self.dt + 1e-9))

    def with_(self, **kw) -> "SwarmParams":
        return replace(self, **kw)


def next_neighbor_distance(d: int, R: float = 1.0) -> float:
    """Second-shell distance of the rigid lattice (triangular in 2D, fcc in 3D)."""
    return math.sqrt(3.0) * R if d == 2 else math.sqrt(2.0) * R


def default_link_radius(d: int, R: float = 1.0) -> float:
    """Midpoint between first and second neighbour shells."""
    return 0.5 * (R + next_neighbor_distance(d, R))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SwarmState:
    """Snapshot of the swarm at step ``step`` (time ``t = step * dt``)."""

    positions: np.ndarray
    t: float = 0.0
    velocities: Optional[np.ndarray] = None
    step: int = 0
    ids: Optional[np.ndarray] = None

    def __post_init__(self):
        pos = _frozen(self.positions)
        if pos.ndim != 2 or pos.shape[1] not in (2, 3):
            raise ValueError("positions must have shape (N, 2) or (N, 3)")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        object.__setattr__(self, "positions", pos)
        if self.velocities is not None:
            vel = _frozen(self.velocities)
            if vel.shape != pos.shape:
                raise ValueError("velocities must match positions")
            object.__setattr__(self, "velocities", vel)
        ids = np.arange(len(pos)) if self.ids is None else np.asarray(self.ids, dtype=int)
        if len(ids) != len(pos):
            raise ValueError("ids must match positions")
        ids = ids.copy()
        ids.setflags(write=False)
        object.__setattr__(self, "ids", ids)

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def evolve(self, positions, velocities=None, dt: float = 0.0) -> "SwarmState":
        k = self.step + 1
        return SwarmState(positions, t=k * dt, velocities=velocities, step=k, ids=self.ids)

    def subset(self, keep) -> "SwarmState":
        keep = np.asarray(keep)
        vel = None if self.velocities is None else self.velocities[keep]
        return SwarmState(self.positions[keep], t=self.t, velocities=vel,
                          step=self.step, ids=self.ids[keep])


@dataclass(frozen=True)
class LinkSet:
    """Directed links ``(i, j)`` with their lengths, sorted lexicographically."""

    pairs: np.ndarray
    lengths: np.ndarray

    def __len__(self):
        return len(self.pairs)

    def undirected(self) -> np.ndarray:
        p = self.pairs
        return p[p[:, 0] < p[:, 1]]

    def degree(self, N: int) -> np.ndarray:
        return np.bincount(self.pairs[:, 0], minlength=N)


@dataclass(frozen=True)
class Framework:
    """A graph embedded at the given vertex positions."""

    positions: np.ndarray
    edges: np.ndarray  # undirected, i < j

    @classmethod
    def from_state(cls, state: SwarmState, R_min: float, R_max: float) -> "Framework":
        links = build_links(state, R_min, R_max)
        return cls(state.positions, links.undirected())

    @property
    def N(self):
        return self.positions.shape[0]

    @property
    def d(self):
        return self.positions.shape[1]


# --- pairwise geometry ------------------------------------------------------

def relative_positions(x: np.ndarray):
    """Return ``r[i, j] = x_i - x_j`` and the distance matrix."""
    r = x[:, None, :] - x[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", r, r))
    return r, dist


def _band_mask(dist, lo, hi, strict_lo=False):
    n = dist.shape[0]
    m = (dist > lo) if strict_lo else (dist >= lo)
    m &= dist <= hi
    m[np.arange(n), np.arange(n)] = False
    return m


def interaction_set(state: SwarmState, i: int, R_s: float) -> np.ndarray:
    """Indices j != i with ``|r_ij| <= R_s``."""
    dist = np.linalg.norm(state.positions - state.positions[i], axis=1)
    m = dist <= R_s
    m[i] = False
    return np.flatnonzero(m)


def adjacency_set(state: SwarmState, i: int, R_min: float, R_max: float) -> np.ndarray:
    """Indices j != i with ``R_min <= |r_ij| <= R_max``."""
    dist = np.linalg.norm(state.positions - state.positions[i], axis=1)
    m = (dist >= R_min) & (dist <= R_max)
    m[i] = False
    return np.flatnonzero(m)


def build_links(state: SwarmState, R_min, R_max: Optional[float] = None) -> LinkSet:
    """All directed links.  Both (i, j) and (j, i) are present.

    ``R_min`` may also be a :class:`SwarmParams`, in which case its band is used.
    """
    if isinstance(R_min, SwarmParams):
        R_min, R_max = R_min.R_min, R_min.R_max
    _, dist = relative_positions(state.positions)
    m = _band_mask(dist, R_min, R_max)
    i, j = np.nonzero(m)  # row-major order is lexicographic
    return LinkSet(np.stack([i, j], axis=1).astype(int), dist[i, j])


def angle_of(v: np.ndarray) -> np.ndarray:
    """Counterclockwise angle of planar vectors, normalised to [0, 2pi)."""
    v = np.asarray(v, dtype=float)
    th = np.arctan2(v[..., 1], v[..., 0])
    th = np.where(th < 0, th + TWO_PI, th)
    return np.where(th >= TWO_PI, 0.0, th)


def pairwise_angle(state: SwarmState, i: int, j: int) -> float:
    """Angle of ``r_ij`` with respect to the horizontal axis, in [0, 2pi)."""
    r = state.positions[i] - state.positions[j]
    if not np.any(r):
        raise CoincidentAgentsError(f"agents {i} and {j} coincide")
    return float(angle_of(r[:2]))


def link_angle_between(r1: np.ndarray, r2: np.ndarray) -> float:
    """Unsigned angle in [0, pi] between two link vectors."""
    r1 = np.asarray(r1, float)
    r2 = np.asarray(r2, float)
    if r1.shape[-1] == 2:
        cross = abs(r1[0] * r2[1] - r1[1] * r2[0])
    else:
        cross = np.linalg.norm(np.cross(r1, r2))
    return float(math.atan2(cross, float(np.dot(r1, r2))))


def pairwise_link_angle(state: SwarmState, link1, link2) -> float:
    x = state.positions
    (i, j), (h, k) = link1, link2
    return link_angle_between(x[i] - x[j], x[h] - x[k])


def centroid(state: SwarmState) -> np.ndarray:
    return state.positions.mean(axis=0)


def sample_ball(n: int, radius: float, d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples in the d-ball of the given radius."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    g = rng.standard_normal((n, d))
    nrm = np.linalg.norm(g, axis=1, keepdims=True)
    nrm[nrm == 0] = 1.0
    rho = radius * rng.random((n, 1)) ** (1.0 / d)
    return g / nrm * rho


def sample_disk_initial(N: int, r: float, rng: np.random.Generator, d: int = 2) -> SwarmState:
    """Initial positions drawn uniformly from a disk (ball) of radius r."""
    if N < 1 or r <= 0:
        raise ValueError("need N >= 1 and r > 0")
    return SwarmState(sample_ball(N, r, d, rng))


def is_congruent(x: np.ndarray, y: np.ndarray, tol: float = 1e-9) -> bool:
    """True when the two labelled point sets differ by a rigid motion."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.shape != y.shape:
        return False
    dx = np.linalg.norm(x[:, None] - x[None], axis=-1)
    dy = np.linalg.norm(y[:, None] - y[None], axis=-1)
    return bool(np.max(np.abs(dx - dy), initial=0.0) <= tol)


# --- I/O --------------------------------------------------------------------

def _axis_names(d):
    return ["x", "y", "z"][:d]


def write_state_csv(state: SwarmState, path) -> None:
    d = state.d
    cols = ["id"] + _axis_names(d)
    if state.velocities is not None:
        cols += ["v" + a for a in _axis_names(d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for k in range(state.N):
            row = [int(state.ids[k])] + [repr(float(v)) for v in state.positions[k]]
            if state.velocities is not None:
                row += [repr(float(v)) for v in state.velocities[k]]
            w.writerow(row)


def read_state_csv(path, t: float = 0.0) -> SwarmState:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no agents")
    axes = [a for a in "xyz" if a in rows[0]]
    pos = [[float(r[a]) for a in axes] for r in rows]
    vel = None
    if "v" + axes[0] in rows[0]:
        vel = [[float(r["v" + a]) for a in axes] for r in rows]
    ids = [int(r["id"]) for r in rows]
    return SwarmState(np.array(pos), t=t, velocities=vel, ids=ids)


def state_to_json(state: SwarmState, params: Optional[SwarmParams] = None) -> str:
    doc = {
        "t": state.t,
        "step": state.step,
        "ids": state.ids.tolist(),
        "positions": state.positions.tolist(),
        "velocities": None if state.velocities is None else state.velocities.tolist(),
    }
    if params is not None:
        doc["params"] = asdict(params)
    return json.dumps(doc)


def state_from_json(text: str):
    doc = json.loads(text)
    st = SwarmState(np.array(doc["positions"]), t=doc["t"], velocities=doc.get("velocities"),
                    step=doc.get("step", 0), ids=doc.get("ids"))
    params = SwarmParams(**doc["params"]) if doc.get("params") else None
    return st, params
