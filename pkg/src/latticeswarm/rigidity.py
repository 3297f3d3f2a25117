"""Rigidity theory tools and local-stability diagnostics for rigid lattices."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.spatial.transform import Rotation

from .core import Framework, SwarmState, relative_positions, sample_ball
from .control import InteractionFn, lj_knee


@dataclass(frozen=True)
class RigidityReport:
    rank: int
    required_rank: int
    infinitesimally_rigid: bool
    e: Optional[float]
    is_rigid_lattice: bool
    n_edges: int

    def to_dict(self):
        return dict(rank=self.rank, required_rank=self.required_rank,
                    infinitesimally_rigid=self.infinitesimally_rigid, e=self.e,
                    is_rigid_lattice=self.is_rigid_lattice, n_edges=self.n_edges)


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    tol_zero: float
    n_zero: int
    n_negative: int
    n_positive: int
    zero_Mw: np.ndarray          # ||M w|| for near-zero eigenvectors
    other_Mw_min: float          # smallest ||M w|| among the remaining eigenvectors
    symmetric: bool
    notes: list = field(default_factory=list)

    @property
    def n_dead_band(self) -> int:
        return len(self.eigenvalues) - self.n_zero - self.n_negative - self.n_positive

    def to_dict(self):
        return dict(n_zero=self.n_zero, n_negative=self.n_negative, n_positive=self.n_positive,
                    n_dead_band=self.n_dead_band, tol_zero=self.tol_zero,
                    zero_Mw_max=float(np.max(self.zero_Mw, initial=0.0)),
                    other_Mw_min=self.other_Mw_min, symmetric=self.symmetric,
                    notes=list(self.notes))


# --- matrices -------------------------------------------------------------------

def _edges(framework) -> np.ndarray:
    e = np.asarray(framework.edges, dtype=int).reshape(-1, 2)
    return e


def incidence_matrix(framework: Framework) -> np.ndarray:
    """N x m matrix with +1 at the start and -1 at the end vertex of each edge."""
    e = _edges(framework)
    B = np.zeros((framework.N, len(e)))
    k = np.arange(len(e))
    B[e[:, 0], k] = 1.0
    B[e[:, 1], k] = -1.0
    return B


def rigidity_matrix(framework: Framework) -> np.ndarray:
    """m x dN matrix; row of edge (i, j) has p_j - p_i under i and p_i - p_j under j."""
    p = np.asarray(framework.positions, float)
    e = _edges(framework)
    N, d = p.shape
    M = np.zeros((len(e), d * N))
    for k, (i, j) in enumerate(e):
        diff = p[j] - p[i]
        if not np.any(diff):
            raise ValueError(f"edge ({i}, {j}) has coincident endpoints")
        M[k, d * i:d * i + d] = diff
        M[k, d * j:d * j + d] = -diff
    return M


def required_rank(N: int, d: int) -> int:
    if N < d:
        raise ValueError("need N >= d")
    return d * N - d * (d + 1) // 2


def is_infinitesimally_rigid(framework: Framework, tol: float = 1e-8, R: Optional[float] = None,
                             e_tol: float = 1e-10):
    """Rank test on the rigidity matrix.  Returns ``(flag, RigidityReport)``."""
    N, d = framework.N, framework.d
    req = required_rank(N, d)
    e = _edges(framework)
    if len(e) == 0:
        rank = 0
    else:
        sv = np.linalg.svd(rigidity_matrix(framework), compute_uv=False)
        rank = int(np.sum(sv > tol * sv[0])) if sv[0] > 0 else 0
    rigid = rank == req
    err = None
    if R is not None and len(e):
        p = np.asarray(framework.positions)
        err = float(np.max(np.abs(np.linalg.norm(p[e[:, 0]] - p[e[:, 1]], axis=1) - R)))
    rl = bool(rigid and err is not None and err <= e_tol)
    return rigid, RigidityReport(rank, req, rigid, err, rl, len(e))


def framework_from_positions(x: np.ndarray, R_a: float, R_min: float = 0.0) -> Framework:
    _, dist = relative_positions(np.asarray(x, float))
    m = (dist >= R_min) & (dist <= R_a)
    np.fill_diagonal(m, False)
    i, j = np.nonzero(np.triu(m))
    return Framework(np.asarray(x, float), np.stack([i, j], axis=1))


# --- lattice generation ---------------------------------------------------------

def _lattice_basis(d: int):
    if d == 2:
        nbrs = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)]
        basis = np.array([[1.0, 0.0], [0.5, math.sqrt(3) / 2]])
        seed = [(0, 0), (1, 0), (0, 1)]
    else:
        # fcc in integer coordinates (a, b, c) with a + b + c even, spacing sqrt(2)
        nbrs = [(s1, s2, 0) for s1 in (1, -1) for s2 in (1, -1)]
        nbrs += [(s1, 0, s2) for s1 in (1, -1) for s2 in (1, -1)]
        nbrs += [(0, s1, s2) for s1 in (1, -1) for s2 in (1, -1)]
        basis = np.eye(3) / math.sqrt(2)
        # the octahedron is the smallest rigid fcc patch that can keep growing
        seed = [(0, 0, 0), (1, 1, 0), (1, 0, 1), (1, -1, 0), (1, 0, -1), (2, 0, 0)]
    return [np.array(n) for n in nbrs], basis, seed


def generate_rigid_lattice(N: int, d: int = 2, R: float = 1.0,
                           rng: Optional[np.random.Generator] = None,
                           knockouts: int = 0, rotate: bool = True) -> np.ndarray:
    """Random connected patch of the triangular (d=2) or fcc (d=3) lattice.

    Sites are accreted one at a time in random order; a candidate site is
    eligible only when its bars to already placed sites span R^d, which keeps
    every intermediate patch infinitesimally rigid.  Growth starts from a
    triangle (d=2) or an octahedron (d=3; a tetrahedron when N=4).  ``knockouts`` interior
    vacancies are then removed when doing so preserves rigidity.
    """
    if N < d + 1:
        raise ValueError("need N >= d + 1")
    rng = np.random.default_rng() if rng is None else rng
    nbrs, basis, seed = _lattice_basis(d)
    total = N + knockouts
    if d == 3:
        if total == 5:
            raise ValueError("no infinitesimally rigid fcc patch has 5 sites")
        if total == 4:
            seed = [(0, 0, 0), (1, 1, 0), (1, 0, 1), (0, 1, 1)]
    placed = [tuple(s) for s in seed[:min(len(seed), total)]]
    occupied = set(placed)

    def eligible(site):
        dirs = [n for n in nbrs if tuple(np.add(site, n)) in occupied]
        if len(dirs) < d:
            return False
        return np.linalg.matrix_rank(np.array(dirs, float) @ basis) == d

    frontier = set()
    for s in placed:
        for n in nbrs:
            c = tuple(np.add(s, n))
            if c not in occupied:
                frontier.add(c)
    while len(placed) < total:
        cands = sorted(c for c in frontier if eligible(c))
        site = cands[int(rng.integers(len(cands)))]
        placed.append(site)
        occupied.add(site)
        frontier.discard(site)
        for n in nbrs:
            c = tuple(np.add(site, n))
            if c not in occupied:
                frontier.add(c)
    pts = np.array(placed, float) @ basis * R
    if knockouts:
        pts = _knock_out(pts, knockouts, d, R, rng)
    pts = pts - pts.mean(axis=0)
    if rotate:
        if d == 2:
            a = rng.uniform(0, 2 * math.pi)
            Q = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
        else:
            Q = Rotation.random(random_state=rng).as_matrix()
        pts = pts @ Q.T
    return pts


def _knock_out(pts, k, d, R, rng):
    R_a = 0.5 * (R + (math.sqrt(3) if d == 2 else math.sqrt(2)) * R)
    for _ in range(k):
        order = rng.permutation(len(pts))
        for idx in order:
            trial = np.delete(pts, idx, axis=0)
            ok, _ = is_infinitesimally_rigid(framework_from_positions(trial, R_a))
            if ok:
                pts = trial
                break
        else:
            raise RuntimeError("no vacancy preserves rigidity")
    return pts


def perturb(x: np.ndarray, delta: float, rng: np.random.Generator) -> np.ndarray:
    """Independent uniform-in-ball displacement of radius ``delta`` per agent."""
    if delta < 0:
        raise ValueError("delta must be non-negative")
    x = np.asarray(x, float)
    if delta == 0:
        return x.copy()
    return x + sample_ball(len(x), delta, x.shape[1], rng)


# --- potentials and Lyapunov function -----------------------------------------------

def potential(z, f: InteractionFn, R: float = 1.0):
    """``P(z) = -int_R^z f(y) dy``; closed forms for LJ and power law."""
    z_arr = np.asarray(z, dtype=float)
    if f.kind == "lennard_jones":
        out = _potential_lj(z_arr, f.a, f.b, f.c, R)
    elif f.kind == "power_law":
        out = _potential_power(z_arr, f.g, f.R, f.R_a)
    else:
        out = np.vectorize(lambda v: _potential_quad(v, f, R))(z_arr)
    return float(out) if np.ndim(out) == 0 else out


def _lj_anti(y, a, b, c):
    return a * y ** (1 - 2 * c) / (1 - 2 * c) - b * y ** (1 - c) / (1 - c)


def _potential_lj(z, a, b, c, R):
    zs = lj_knee(a, b, c)

    def unsat(v):  # -int_R^v of the unsaturated branch
        return -(_lj_anti(v, a, b, c) - _lj_anti(R, a, b, c))

    if R < zs:
        raise ValueError("reference length lies on the saturated branch")
    with np.errstate(divide="ignore", over="ignore"):
        hi = unsat(np.maximum(z, zs))
        lo = unsat(zs) + (zs - z)
    return np.where(z >= zs, hi, lo)


def _potential_power(z, g, R, R_a):
    D = R_a - R
    K = math.pi * R * R / D
    with np.errstate(divide="ignore"):
        inner = g * K * ((z - R) / R - np.log(z / R))
    outer = g * D / math.pi * (1 - np.cos((np.minimum(z, R_a) - R) * math.pi / D))
    return np.where(z <= R, inner, outer)


def _potential_quad(z, f, R):
    val, err = integrate.quad(lambda y: float(f(y)), R, z, epsabs=1e-10, epsrel=1e-10, limit=200)
    if not np.isfinite(val) or err > 1e-6:
        raise ArithmeticError(f"quadrature of f over [{R}, {z}] failed (error estimate {err})")
    return -val


def lyapunov(x, x_c_star, f: InteractionFn, R: float = 1.0, R_a: Optional[float] = None,
             R_min: float = 0.0) -> float:
    """``|x_c* - x_c|^2 + sum over directed links of P(|r_k|)``."""
    x = np.asarray(x.positions if isinstance(x, SwarmState) else x, float)
    R_a = f.R_a if R_a is None else R_a
    _, dist = relative_positions(x)
    m = (dist >= R_min) & (dist <= R_a)
    np.fill_diagonal(m, False)
    dc = np.asarray(x_c_star) - x.mean(axis=0)
    return float(dc @ dc + np.sum(potential(dist[m], f, R)))


def lyapunov_rate(state, controls) -> float:
    """Rate of change of V along the first-order flow, taken as ``-sum |u_i|^2``."""
    u = np.asarray(controls, float)
    return -float(np.sum(u * u))


# --- Jacobian ---------------------------------------------------------------------

def jacobian(x, f: Callable, f_prime: Callable, R_a: float, R_min: float = 0.0,
             tol_eq: float = 1e-8):
    """Jacobian of ``u_i = sum_j f(|r_ij|) r_ij/|r_ij|`` over links in [R_min, R_a].

    Assembled over undirected edges; each edge (i, j) contributes the block
    ``K = f'(z) r r^T/z^2 + f(z)/z (I - r r^T/z^2)`` with signs
    ``du_i/dx_i += K``, ``du_i/dx_j -= K`` and symmetrically for j.  Returns
    ``(J, notes)``; notes flag non-equilibrium inputs.
    """
    x = np.asarray(x, float)
    N, d = x.shape
    fw = framework_from_positions(x, R_a, R_min)
    J = np.zeros((d * N, d * N))
    notes = []
    u = np.zeros((N, d))
    for i, j in fw.edges:
        r = x[i] - x[j]
        z = float(np.linalg.norm(r))
        rh = r / z
        P = np.outer(rh, rh)
        fz = float(f(z))
        K = float(f_prime(z)) * P + fz / z * (np.eye(d) - P)
        si, sj = slice(d * i, d * i + d), slice(d * j, d * j + d)
        J[si, si] += K
        J[sj, sj] += K
        J[si, sj] -= K
        J[sj, si] -= K
        u[i] += fz * rh
        u[j] -= fz * rh
    if np.max(np.abs(u), initial=0.0) > tol_eq:
        notes.append(f"input is not an equilibrium: max |u_i| = {np.max(np.abs(u)):.3e}")
    return J, notes


def classify_spectrum(J: np.ndarray, M: np.ndarray, tol: float = 1e-6,
                      notes=None) -> SpectrumReport:
    """Split the spectrum into zero / negative / positive parts.

    ``tol`` is relative: the zero band is ``|lambda| < tol * max|lambda|``.
    """
    sym = bool(np.max(np.abs(J - J.T), initial=0.0) < 1e-10)
    if sym:
        lam, W = np.linalg.eigh(J)
        lam = lam.astype(complex)
    else:
        lam, W = np.linalg.eig(J)
    scale = float(np.max(np.abs(lam))) if len(lam) else 0.0
    tz = tol * scale
    zero = np.abs(lam) < tz
    neg = (lam.real < -tz) & ~zero
    pos = (lam.real > tz) & ~zero
    Mw = np.linalg.norm(M @ W, axis=0) / np.maximum(np.linalg.norm(W, axis=0), 1e-300)
    other = Mw[~zero]
    return SpectrumReport(lam, tz, int(zero.sum()), int(neg.sum()), int(pos.sum()),
                          Mw[zero], float(other.min()) if len(other) else math.inf,
                          sym, list(notes or []))
