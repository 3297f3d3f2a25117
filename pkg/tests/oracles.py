"""Brute-force reference implementations used as test oracles.

Everything here is deliberately naive: explicit loops over agents and links,
no shared helpers with the package.
"""
import math

import numpy as np


def links_bruteforce(x, R_min, R_max):
    n = len(x)
    out = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            z = math.dist(x[i], x[j])
            if R_min <= z <= R_max:
                out.append((i, j))
    return out


def unsigned_angle(a, b):
    # atan2 form: well conditioned near 0 and pi, unlike acos of the cosine
    return math.atan2(abs(a[0] * b[1] - a[1] * b[0]), a[0] * b[0] + a[1] * b[1])


def regularity_oracle(x, L, R_min, R_max):
    E = links_bruteforce(x, R_min, R_max)
    m = len(E)
    if m <= 2:
        return 0.0
    p = 2 * math.pi / L
    total = 0.0
    for (i, j) in E:
        rij = (x[i][0] - x[j][0], x[i][1] - x[j][1])
        for (h, k) in E:
            if (h, k) == (i, j) or (h, k) == (j, i):
                continue
            rhk = (x[h][0] - x[k][0], x[h][1] - x[k][1])
            a = unsigned_angle(rij, rhk)
            total += min(abs(a - q * p) for q in range(-L, L + 1))
    return (L / math.pi) * total / (m * m - 2 * m)


def compactness_oracle(x, L, R_min, R_max):
    n = len(x)
    s = 0.0
    for i in range(n):
        cnt = 0
        for j in range(n):
            if i != j and R_min <= math.dist(x[i], x[j]) <= R_max:
                cnt += 1
        s += abs(cnt - L) / L
    return s / n


def angular_error_oracle(theta, L):
    """theta minus the nearest multiple of 2pi/L, ties going to +pi/L."""
    p = 2 * math.pi / L
    best = None
    for q in range(-L, L + 1):
        e = theta - q * p
        if best is None or abs(e) < abs(best) - 1e-15:
            best = e
        elif abs(abs(e) - abs(best)) <= 1e-15 and e > best:
            best = e
    return best


def rigidity_matrix_fd(x, edges, h=1e-6):
    """Jacobian of the squared-length map 0.5*|p_i - p_j|^2 by central differences.

    The derivative w.r.t. p_i is (p_i - p_j); rows are returned with the
    opposite sign to match the (p_j - p_i) convention.
    """
    x = np.asarray(x, float)
    N, d = x.shape
    M = np.zeros((len(edges), d * N))
    for c in range(d * N):
        xp = x.copy().ravel()
        xm = x.copy().ravel()
        xp[c] += h
        xm[c] -= h
        xp = xp.reshape(N, d)
        xm = xm.reshape(N, d)
        for k, (i, j) in enumerate(edges):
            fp = 0.5 * np.sum((xp[i] - xp[j]) ** 2)
            fm = 0.5 * np.sum((xm[i] - xm[j]) ** 2)
            M[k, c] = -(fp - fm) / (2 * h)
    return M


def triangular_patch(rows, cols, R=1.0):
    pts = []
    for r in range(rows):
        for c in range(cols):
            pts.append((R * (c + 0.5 * r), R * r * math.sqrt(3) / 2))
    return np.array(pts)


def square_patch(rows, cols, R=1.0):
    return np.array([(R * c, R * r) for r in range(rows) for c in range(cols)], float)
