"""Virtual-force control laws.

Two entry points are provided for every law: a per-agent function that reads
like the mathematical definition, and a vectorised ``*_controls`` function
that evaluates all agents at once and is what the simulator calls.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .core import SwarmParams, SwarmState, TWO_PI, relative_positions


# --- interaction functions ----------------------------------------------------

def f_radial_lj(z, a: float = 0.15, b: float = 0.15, c: float = 5.0):
    """Saturated Lennard-Jones radial function ``min(a/z^2c - b/z^c, 1)``."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("distance must be non-negative")
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        s = z ** (-c)
        val = a * s * s - b * s
    val = np.where((z == 0) | ~np.isfinite(val), 1.0, np.minimum(val, 1.0))
    return float(val) if val.ndim == 0 else val


f2_lj = f_radial_lj


def f2_lj_prime(z, a: float = 0.5, b: float = 0.5, c: float = 12.0):
    """Derivative of the saturated LJ function (zero on the saturated branch)."""
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        s = z ** (-c)
        raw = a * s * s - b * s
        der = (-2 * c * a * s * s + c * b * s) / z
    out = np.where((z == 0) | ~np.isfinite(raw) | (raw >= 1.0), 0.0, der)
    return float(out) if out.ndim == 0 else out


def lj_knee(a: float, b: float, c: float) -> float:
    """Distance below which the LJ function is saturated at 1."""
    s = (b + math.sqrt(b * b + 4 * a)) / (2 * a)
    return s ** (-1.0 / c)


def f1_power_law(z, g: float = 0.5, R: float = 1.0, R_a: float = 1.366):
    """Power-law function, divergent at 0, sinusoidal tail vanishing at ``R_a``."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("distance must be non-negative")
    D = R_a - R
    with np.errstate(divide="ignore"):
        inner = g * (1.0 / z - 1.0 / R) * math.pi * R * R / D
    outer = -g * np.sin((z - R) * math.pi / D)
    val = np.where(z <= R, inner, np.where(z <= R_a, outer, 0.0))
    return float(val) if val.ndim == 0 else val


def f1_power_law_prime(z, g: float = 0.5, R: float = 1.0, R_a: float = 1.366):
    z = np.asarray(z, dtype=float)
    D = R_a - R
    with np.errstate(divide="ignore"):
        inner = -g * math.pi * R * R / (D * z * z)
    outer = -g * math.pi / D * np.cos((z - R) * math.pi / D)
    val = np.where(z <= R, inner, np.where(z <= R_a, outer, 0.0))
    return float(val) if val.ndim == 0 else val


def f_gravitational(z, G: float, F_max: float, R_eff, mass: float = 1.0):
    """Spears' clipped gravitational force; positive means repulsive."""
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore"):
        mag = np.minimum(G * mass * mass / (z * z), F_max)
    mag = np.where(z == 0, F_max, np.clip(mag, 0.0, F_max))
    val = np.where(z <= R_eff, mag, np.where(z <= 1.5 * R_eff, -mag, 0.0))
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class InteractionFn:
    """A radial interaction function selected by ``kind``.

    kinds: ``lennard_jones`` (a, b, c), ``power_law`` (g, R, R_a),
    ``gravitational`` (G, F_max, R, mass) and ``table`` (z, f samples,
    linearly interpolated, zero beyond the last sample).
    """

    kind: str = "lennard_jones"
    a: float = 0.5
    b: float = 0.5
    c: float = 12.0
    g: float = 0.5
    R: float = 1.0
    R_a: float = 1.366
    G: float = 1.0
    F_max: float = 1.0
    mass: float = 1.0
    cutoff: float = math.inf
    table_z: tuple = ()
    table_f: tuple = ()

    def __post_init__(self):
        if self.kind not in ("lennard_jones", "power_law", "gravitational", "table"):
            raise ValueError(f"unknown interaction kind {self.kind!r}")
        if self.kind == "table" and len(self.table_z) != len(self.table_f):
            raise ValueError("table_z and table_f must have equal length")

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "lennard_jones":
            out = f_radial_lj(z, self.a, self.b, self.c)
        elif self.kind == "power_law":
            out = f1_power_law(z, self.g, self.R, self.R_a)
        elif self.kind == "gravitational":
            out = f_gravitational(z, self.G, self.F_max, self.R, self.mass)
        else:
            out = np.interp(z, self.table_z, self.table_f, right=0.0)
        out = np.where(z <= self.cutoff, out, 0.0)
        return float(out) if out.ndim == 0 else out

    def derivative(self, z):
        if self.kind == "lennard_jones":
            return f2_lj_prime(z, self.a, self.b, self.c)
        if self.kind == "power_law":
            return f1_power_law_prime(z, self.g, self.R, self.R_a)
        h = 1e-6
        return (np.asarray(self(np.asarray(z) + h)) - np.asarray(self(np.asarray(z) - h))) / (2 * h)

    @property
    def singular_at_zero(self) -> bool:
        return self.kind == "power_law"


# --- angular terms ------------------------------------------------------------

def angular_error(theta, L: int):
    """``theta`` minus the nearest multiple of 2pi/L, in (-pi/L, pi/L]."""
    p = TWO_PI / L
    theta = np.asarray(theta, dtype=float)
    q = np.ceil(theta / p - 0.5)
    err = theta - q * p
    # guard against rounding pushing the value just outside the interval
    err = np.where(err <= -p / 2, err + p, err)
    err = np.where(err > p / 2, err - p, err)
    return float(err) if err.ndim == 0 else err


def f_normal(theta_err, L: int):
    """Linear normal function ``-(L/pi) * theta_err``."""
    e = np.asarray(theta_err, dtype=float)
    lim = math.pi / L
    if np.any(e <= -lim - 1e-12) or np.any(e > lim + 1e-12):
        raise ValueError("angular error outside (-pi/L, pi/L]")
    out = -(L / math.pi) * e
    return float(out) if out.ndim == 0 else out


def _scatter(rows, contrib, n):
    """Sum ``contrib`` rows into an ``(n, d)`` array by row index."""
    return np.stack([np.bincount(rows, weights=contrib[:, k], minlength=n)
                     for k in range(contrib.shape[1])], axis=1)


def _perp(v):
    """Rotate planar vectors by +pi/2."""
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


# --- displacement-based law ---------------------------------------------------

@dataclass(frozen=True)
class Gains:
    G_r: np.ndarray | float = 15.0
    G_n: np.ndarray | float = 8.0

    def __post_init__(self):
        if np.any(np.asarray(self.G_r) < 0) or np.any(np.asarray(self.G_n) < 0):
            raise ValueError("gains must be non-negative")


@dataclass(frozen=True)
class LJParams:
    a: float = 0.15
    b: float = 0.15
    c: float = 5.0


def control_displacement(state: SwarmState, i: int, params: SwarmParams, gains: Gains,
                         noise=(0.0, 0.0), rng: Optional[np.random.Generator] = None,
                         lj: LJParams = LJParams()) -> np.ndarray:
    """Radial plus normal input of agent ``i`` (reference implementation).

    ``noise`` is ``(sigma_m, compass_offset)``: distance noise std and a fixed
    heading offset added to every measured angle of agent ``i``.
    """
    if state.d != 2:
        raise ValueError("the normal input is only defined in the plane")
    sigma_m, offset = noise
    x = state.positions
    G_r = float(np.broadcast_to(gains.G_r, (state.N,))[i])
    G_n = float(np.broadcast_to(gains.G_n, (state.N,))[i])
    u = np.zeros(2)
    for j in range(state.N):
        if j == i:
            continue
        r = x[i] - x[j]
        z = math.hypot(r[0], r[1])
        if z > params.R_s:
            continue
        rhat = r / z if z > 0 else np.zeros(2)
        zm = z
        if sigma_m > 0:
            zm = max(z + sigma_m * rng.standard_normal(), 0.0)
        u += G_r * f_radial_lj(zm, lj.a, lj.b, lj.c) * rhat
        if params.R_min <= z <= params.R_max and z > 0:
            th = math.atan2(r[1], r[0]) % TWO_PI + offset
            if sigma_m > 0:
                th += sigma_m * math.pi / params.L * rng.standard_normal()
            err = angular_error(th, params.L)
            u += G_n * f_normal(err, params.L) * _perp(rhat)
    return u


def displacement_controls(x: np.ndarray, params: SwarmParams, G_r, G_n,
                          lj: LJParams = LJParams(), sigma_m: float = 0.0,
                          sigma_compass: float = 0.0,
                          rng: Optional[np.random.Generator] = None,
                          geometry=None) -> np.ndarray:
    """Vectorised radial plus normal input for all agents.

    ``geometry`` may carry a precomputed ``(r, dist)`` pair.
    """
    n = x.shape[0]
    r, dist = geometry if geometry is not None else relative_positions(x)
    eye = np.eye(n, dtype=bool)
    inter = dist <= params.R_s
    inter &= ~eye
    with np.errstate(invalid="ignore", divide="ignore"):
        rhat = np.where(dist[..., None] > 0, r / dist[..., None], 0.0)
    zm = dist
    if sigma_m > 0:
        zm = np.maximum(dist + sigma_m * rng.standard_normal(dist.shape), 0.0)
    fr = np.where(inter, f_radial_lj(zm, lj.a, lj.b, lj.c), 0.0)
    u = np.asarray(G_r, float).reshape(-1, 1) * np.einsum("ij,ijk->ik", fr, rhat)

    adj = (dist >= params.R_min) & (dist <= params.R_max) & (dist > 0)
    adj &= ~eye
    ii, jj = np.nonzero(adj)
    if len(ii):
        rv = r[ii, jj]
        th = np.arctan2(rv[:, 1], rv[:, 0]) % TWO_PI
        if sigma_compass > 0:
            th = th + (sigma_compass * rng.standard_normal(n))[ii]
        if sigma_m > 0:
            th = th + sigma_m * math.pi / params.L * rng.standard_normal(len(ii))
        fn = -(params.L / math.pi) * angular_error(th, params.L)
        contrib = fn[:, None] * _perp(rhat[ii, jj])
        un = _scatter(ii, contrib, n)
        u += np.asarray(G_n, float).reshape(-1, 1) * un
    return u


# --- adaptive normal gain -----------------------------------------------------

@dataclass(frozen=True)
class AdaptiveState:
    G_n: np.ndarray
    alpha: float = 3.0
    e_theta_star: float = 0.2

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        g = np.array(self.G_n, dtype=float)
        g.setflags(write=False)
        object.__setattr__(self, "G_n", g)

    @classmethod
    def zeros(cls, N: int, alpha: float = 3.0, e_theta_star: float = 0.2):
        return cls(np.zeros(N), alpha, e_theta_star)

    def reset(self) -> "AdaptiveState":
        return replace(self, G_n=np.zeros_like(self.G_n))

    def subset(self, keep) -> "AdaptiveState":
        return replace(self, G_n=self.G_n[np.asarray(keep)])


def local_angular_errors(x: np.ndarray, params: SwarmParams, geometry=None) -> np.ndarray:
    """Per-agent ``(L/pi) * mean |theta_err|`` over the adjacency set (0 if empty)."""
    n = x.shape[0]
    r, dist = geometry if geometry is not None else relative_positions(x)
    adj = (dist >= params.R_min) & (dist <= params.R_max) & (dist > 0)
    adj[np.arange(n), np.arange(n)] = False
    ii, jj = np.nonzero(adj)
    out = np.zeros(n)
    if len(ii):
        rv = r[ii, jj]
        th = np.arctan2(rv[:, 1], rv[:, 0]) % TWO_PI
        err = np.abs(angular_error(th, params.L))
        s = np.bincount(ii, weights=err, minlength=n)
        cnt = np.bincount(ii, minlength=n)
        nz = cnt > 0
        out[nz] = (params.L / math.pi) * s[nz] / cnt[nz]
    return out


def adapt_gains(adaptive: AdaptiveState, state: SwarmState, params: SwarmParams,
                dt: Optional[float] = None, geometry=None) -> AdaptiveState:
    """One Euler step of the dead-zone adaptation law for ``G_n``."""
    if state.d != 2:
        raise ValueError("adaptive law requires d = 2")
    dt = params.dt if dt is None else dt
    e = local_angular_errors(state.positions, params, geometry)
    dg = np.where(e > adaptive.e_theta_star, adaptive.alpha * (e - adaptive.e_theta_star), 0.0)
    return replace(adaptive, G_n=adaptive.G_n + dt * dg)


# --- Spears gravitational baseline --------------------------------------------

def checkerboard_spins(N: int) -> np.ndarray:
    return np.arange(N) % 2


def _spears_reff(params: SwarmParams, spins, ii, jj):
    if params.L == 4:
        same = spins[ii] == spins[jj]
        return np.where(same, math.sqrt(2.0) * params.R, params.R)
    return np.full(np.shape(ii), params.R)


def spears_control(state: SwarmState, i: int, params: SwarmParams, G: float, F_max: float,
                   spins=None, mass: float = 1.0) -> np.ndarray:
    """Spears' gravitational input of agent ``i`` (reference implementation)."""
    spins = checkerboard_spins(state.N) if spins is None else np.asarray(spins)
    x = state.positions
    u = np.zeros(state.d)
    for j in range(state.N):
        if j == i:
            continue
        r = x[i] - x[j]
        z = float(np.linalg.norm(r))
        if z > params.R_s or z == 0:
            continue
        reff = float(_spears_reff(params, spins, np.array(i), np.array(j)))
        u += f_gravitational(z, G, F_max, reff, mass) * r / z
    return u


def spears_controls(x: np.ndarray, params: SwarmParams, G: float, F_max: float,
                    spins=None, mass: float = 1.0, geometry=None) -> np.ndarray:
    n = x.shape[0]
    spins = checkerboard_spins(n) if spins is None else np.asarray(spins)
    r, dist = geometry if geometry is not None else relative_positions(x)
    ii, jj = np.nonzero((dist <= params.R_s) & (dist > 0))
    reff = _spears_reff(params, spins, ii, jj)
    f = f_gravitational(dist[ii, jj], G, F_max, reff, mass)
    contrib = (f / dist[ii, jj])[:, None] * r[ii, jj]
    return _scatter(ii, contrib, n)


# --- radial-only law ------------------------------------------------------------

def control_radial_only(state: SwarmState, i: int, f: Callable, R_s: float) -> np.ndarray:
    """``sum_j f(|r_ij|) r_ij/|r_ij|`` over the interaction set of ``i``."""
    x = state.positions
    u = np.zeros(state.d)
    singular = getattr(f, "singular_at_zero", False)
    for j in range(state.N):
        if j == i:
            continue
        r = x[i] - x[j]
        z = float(np.linalg.norm(r))
        if z > R_s:
            continue
        if z == 0:
            if singular:
                raise ValueError(f"agents {i} and {j} coincide")
            continue
        u += float(f(z)) * r / z
    return u


def radial_controls(x: np.ndarray, f: Callable, R_s: float, geometry=None) -> np.ndarray:
    r, dist = geometry if geometry is not None else relative_positions(x)
    n = x.shape[0]
    mask = dist <= R_s
    mask[np.arange(n), np.arange(n)] = False
    if np.any(mask & (dist == 0)):
        if getattr(f, "singular_at_zero", False):
            raise ValueError("coincident agents under a singular interaction function")
        mask &= dist > 0
    ii, jj = np.nonzero(mask)
    z = dist[ii, jj]
    contrib = (np.asarray(f(z)) / z)[:, None] * r[ii, jj]
    return _scatter(ii, contrib, n)
