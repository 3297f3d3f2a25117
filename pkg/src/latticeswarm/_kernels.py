"""Compiled inner loops for the simulator.

Each kernel fuses the O(N^2) pair loop of one control law with the
bookkeeping the metrics need (link angles, degrees), so a simulation step
touches every pair once.  The numpy functions in ``control`` and ``metrics``
are the reference implementations these kernels are tested against.
"""
import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def _angular_error(th, p):
    q = math.ceil(th / p - 0.5)
    e = th - q * p
    if e <= -0.5 * p:
        e += p
    elif e > 0.5 * p:
        e -= p
    return e


@njit(cache=True)
def _ipow(z, k):
    r = 1.0
    base = z
    while k > 0:
        if k & 1:
            r *= base
        base *= base
        k >>= 1
    return r


@njit(cache=True)
def _lj(z, a, b, c):
    if z == 0.0:
        return 1.0
    ic = int(c)
    if ic == c and ic < 64:
        s = 1.0 / _ipow(z, ic)
    else:
        s = z ** (-c)
    v = a * s * s - b * s
    if not (v < 1.0):  # also catches overflow to inf / nan
        return 1.0
    return v


@njit(cache=True)
def displacement_step(x, R_s, R_min, R_max, L, Gr, Gn, a, b, c,
                      dist_noise, ang_noise, compass):
    """Controls of the radial+normal law plus link data.

    dist_noise: (N, N) additive distance noise or shape (0, 0)
    ang_noise:  (N, N) additive angle noise or shape (0, 0)
    compass:    (N,) per-agent angle offset or shape (0,)
    Returns u, link angles (directed, first n_links entries valid), n_links,
    degrees and per-agent mean |angular error| (radians).
    """
    n = x.shape[0]
    u = np.zeros((n, 2))
    phi = np.empty(n * n)
    deg = np.zeros(n, dtype=np.int64)
    mean_err = np.zeros(n)
    p = TWO_PI / L
    has_dn = dist_noise.shape[0] > 0
    has_an = ang_noise.shape[0] > 0
    has_cp = compass.shape[0] > 0
    nl = 0
    for i in range(n):
        ur0 = 0.0
        ur1 = 0.0
        un0 = 0.0
        un1 = 0.0
        serr = 0.0
        for j in range(n):
            if j == i:
                continue
            r0 = x[i, 0] - x[j, 0]
            r1 = x[i, 1] - x[j, 1]
            z = math.sqrt(r0 * r0 + r1 * r1)
            if z > R_s or z == 0.0:
                continue
            h0 = r0 / z
            h1 = r1 / z
            zm = z
            if has_dn:
                zm = z + dist_noise[i, j]
                if zm < 0.0:
                    zm = 0.0
            f = _lj(zm, a, b, c)
            ur0 += f * h0
            ur1 += f * h1
            if z >= R_min and z <= R_max:
                th = math.atan2(r1, r0)
                phi[nl] = th
                nl += 1
                deg[i] += 1
                if th < 0.0:
                    th += TWO_PI
                if th >= TWO_PI:
                    th = 0.0
                serr += abs(_angular_error(th, p))
                if has_cp:
                    th += compass[i]
                if has_an:
                    th += ang_noise[i, j]
                fn = -(L / math.pi) * _angular_error(th, p)
                un0 += fn * (-h1)
                un1 += fn * h0
        u[i, 0] = Gr[i] * ur0 + Gn[i] * un0
        u[i, 1] = Gr[i] * ur1 + Gn[i] * un1
        if deg[i] > 0:
            mean_err[i] = serr / deg[i]
    return u, phi, nl, deg, mean_err


@njit(cache=True)
def link_data(x, R_min, R_max, L):
    """Link angles, degrees and per-agent mean |angular error| (planar)."""
    n = x.shape[0]
    phi = np.empty(n * n)
    deg = np.zeros(n, dtype=np.int64)
    mean_err = np.zeros(n)
    p = TWO_PI / L
    nl = 0
    for i in range(n):
        serr = 0.0
        for j in range(n):
            if j == i:
                continue
            r0 = x[i, 0] - x[j, 0]
            r1 = x[i, 1] - x[j, 1]
            z = math.sqrt(r0 * r0 + r1 * r1)
            if z >= R_min and z <= R_max and z > 0.0:
                th = math.atan2(r1, r0)
                phi[nl] = th
                nl += 1
                deg[i] += 1
                if th < 0.0:
                    th += TWO_PI
                serr += abs(_angular_error(th, p))
        if deg[i] > 0:
            mean_err[i] = serr / deg[i]
    return phi, nl, deg, mean_err


@njit(cache=True)
def radial_step(x, R_s, kind, p0, p1, p2, link_lo, link_hi, R):
    """Radial-only law.  kind 0: saturated LJ (a, b, c); 1: power law (g, R, R_a).

    Also returns the link-length error over pairs in [link_lo, link_hi]
    (-1 when there are no links), the minimum pairwise distance and a flag
    set when two agents coincide under the singular power law.
    """
    n = x.shape[0]
    d = x.shape[1]
    u = np.zeros((n, d))
    emax = -1.0
    dmin = np.inf
    coincide = False
    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            z2 = 0.0
            for k in range(d):
                t = x[i, k] - x[j, k]
                z2 += t * t
            z = math.sqrt(z2)
            if z < dmin:
                dmin = z
            if z >= link_lo and z <= link_hi and j > i:
                e = abs(z - R)
                if e > emax:
                    emax = e
            if z > R_s:
                continue
            if z == 0.0:
                if kind == 1:
                    coincide = True
                continue
            if kind == 0:
                f = _lj(z, p0, p1, p2)
            else:
                D = p2 - p1
                if z <= p1:
                    f = p0 * (1.0 / z - 1.0 / p1) * math.pi * p1 * p1 / D
                elif z <= p2:
                    f = -p0 * math.sin((z - p1) * math.pi / D)
                else:
                    f = 0.0
            for k in range(d):
                u[i, k] += f * (x[i, k] - x[j, k]) / z
    return u, emax, dmin, coincide


@njit(cache=True)
def spears_step(x, R_s, R, L, G, F_max, mass, spins):
    n = x.shape[0]
    u = np.zeros((n, 2))
    sq2 = math.sqrt(2.0)
    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            r0 = x[i, 0] - x[j, 0]
            r1 = x[i, 1] - x[j, 1]
            z = math.sqrt(r0 * r0 + r1 * r1)
            if z > R_s or z == 0.0:
                continue
            reff = R
            if L == 4 and spins[i] == spins[j]:
                reff = sq2 * R
            mag = G * mass * mass / (z * z)
            if mag > F_max:
                mag = F_max
            if mag < 0.0:
                mag = 0.0
            if z <= reff:
                f = mag
            elif z <= 1.5 * reff:
                f = -mag
            else:
                f = 0.0
            u[i, 0] += f * r0 / z
            u[i, 1] += f * r1 / z
    return u


@njit(cache=True)
def circular_pair_sum(psi):
    """Sum of circular distances over ordered pairs, O(n log n)."""
    n = psi.shape[0]
    if n < 2:
        return 0.0
    s = np.sort(np.mod(psi, TWO_PI))
    P = np.empty(n + 1)
    P[0] = 0.0
    for i in range(n):
        P[i + 1] = P[i] + s[i]
    tot = 0.0
    k = 0
    for i in range(n):
        if k < i + 1:
            k = i + 1
        while k < n and s[k] <= s[i] + math.pi:
            k += 1
        cnt1 = k - i - 1
        tot += P[k] - P[i + 1] - cnt1 * s[i]
        cnt2 = n - k
        tot += cnt2 * (TWO_PI + s[i]) - (P[n] - P[k])
    return 2.0 * tot
