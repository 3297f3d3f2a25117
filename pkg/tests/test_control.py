"""Interaction functions, angular error and the control laws."""
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from latticeswarm.control import (AdaptiveState, Gains, InteractionFn, adapt_gains, angular_error,
                                  control_displacement, control_radial_only, displacement_controls,
                                  f1_power_law, f1_power_law_prime, f2_lj_prime, f_gravitational,
                                  f_normal, f_radial_lj, lj_knee, local_angular_errors,
                                  radial_controls, spears_control, spears_controls)
from latticeswarm.core import SwarmParams, SwarmState
from oracles import angular_error_oracle, square_patch, triangular_patch


def test_lj_examples():
    assert f_radial_lj(1.0) == pytest.approx(0.0, abs=1e-15)
    assert f_radial_lj(1e-6) == 1.0
    assert f_radial_lj(0.0) == 1.0
    assert f_radial_lj(1.2) == pytest.approx(0.15 / 1.2 ** 10 - 0.15 / 1.2 ** 5, rel=1e-12)
    exact = Fraction(15, 100) / Fraction(6, 5) ** 10 - Fraction(15, 100) / Fraction(6, 5) ** 5
    assert f_radial_lj(1.2) == pytest.approx(float(exact), rel=1e-14)
    assert round(f_radial_lj(1.2), 3) == -0.036
    assert f_radial_lj(0.9, 0.5, 0.5, 12) > 0
    with pytest.raises(ValueError):
        f_radial_lj(-1.0)


def test_lj_knee_and_derivative():
    a, b, c = 0.5, 0.5, 12.0
    zk = lj_knee(a, b, c)
    assert f_radial_lj(zk, a, b, c) == pytest.approx(1.0)
    for z in (0.97, 1.0, 1.1, 1.3):
        h = 1e-7
        fd = (f_radial_lj(z + h, a, b, c) - f_radial_lj(z - h, a, b, c)) / (2 * h)
        assert f2_lj_prime(z, a, b, c) == pytest.approx(fd, rel=1e-5)
    assert f2_lj_prime(0.5 * zk, a, b, c) == 0.0


def test_power_law():
    assert f1_power_law(1.0) == pytest.approx(0.0)
    assert f1_power_law(1.366) == pytest.approx(0.0, abs=1e-12)
    assert f1_power_law(1.366 + 1e-9) == 0.0
    assert f1_power_law(2.0) == 0.0
    assert f1_power_law(0.5) > 0 and f1_power_law(1.2) < 0
    for z in (0.5, 0.9, 1.1, 1.3):
        h = 1e-7
        fd = (f1_power_law(z + h) - f1_power_law(z - h)) / (2 * h)
        assert f1_power_law_prime(z) == pytest.approx(fd, rel=1e-5)


def test_gravitational():
    assert f_gravitational(1.0, 1.0, 5.0, 1.0) > 0  # z = R_eff is repulsive
    assert f_gravitational(1.2, 1.0, 5.0, 1.0) < 0
    assert f_gravitational(1.6, 1.0, 5.0, 1.0) == 0.0
    z = math.sqrt(1.0 / 2.0)  # G m^2 / z^2 = 2 F_max
    assert f_gravitational(z, 1.0, 1.0, 1.0) == 1.0


def test_interaction_fn_table_and_cutoff():
    f = InteractionFn(kind="table", table_z=(0.0, 1.0, 2.0), table_f=(1.0, 0.0, -1.0))
    assert f(0.5) == pytest.approx(0.5)
    assert f(3.0) == 0.0
    g = InteractionFn(cutoff=1.05)
    assert g(1.2) == 0.0
    with pytest.raises(ValueError):
        InteractionFn(kind="nope")


def test_angular_error_examples():
    assert angular_error(math.pi / 2, 4) == pytest.approx(0.0)
    assert angular_error(math.pi / 3, 4) == pytest.approx(-math.pi / 6)
    assert angular_error(math.pi / 4, 4) == pytest.approx(math.pi / 4)
    assert angular_error(-math.pi / 4, 4) == pytest.approx(math.pi / 4)


@given(st.floats(0, 2 * math.pi, exclude_max=True), st.sampled_from([4, 6]))
def test_angular_error_matches_bruteforce(theta, L):
    e = angular_error(theta, L)
    assert -math.pi / L < e <= math.pi / L
    assert e == pytest.approx(angular_error_oracle(theta, L), abs=1e-12)


def test_f_normal():
    assert f_normal(0.0, 6) == 0.0
    assert f_normal(math.pi / 6, 6) == pytest.approx(-1.0)
    assert f_normal(-math.pi / 12, 6) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        f_normal(0.6, 6)


def test_displacement_examples():
    p = SwarmParams(N=2)
    s = SwarmState(np.array([[0.0, 0.0]]))
    assert np.allclose(control_displacement(s, 0, p.with_(N=1), Gains()), 0)
    s = SwarmState(np.array([[0.0, 0.0], [1.0, 0.0]]))
    for i in range(2):
        assert np.allclose(control_displacement(s, i, p, Gains()), 0, atol=1e-14)
    th = 2 * math.pi / 6 + 0.1
    s = SwarmState(np.array([[math.cos(th), math.sin(th)], [0.0, 0.0]]))
    u0 = control_displacement(s, 0, p, Gains(0.0, 1.0))
    u1 = control_displacement(s, 1, p, Gains(0.0, 1.0))
    assert np.linalg.norm(u0) == pytest.approx(6 / math.pi * 0.1)
    assert np.linalg.norm(u1) == pytest.approx(6 / math.pi * 0.1)
    r = s.positions[0] - s.positions[1]
    assert abs(u0 @ r) < 1e-12
    # opposite rotational sense about the pair midpoint: u1 = -u0
    assert np.allclose(u0, -u1)
    # the normal force turns the link back toward 2pi/6
    th_new = math.atan2(*(r + 1e-3 * (u0 - u1))[::-1])
    assert abs(th_new - 2 * math.pi / 6) < 0.1


def test_displacement_vectorised_matches_reference(rng):
    p = SwarmParams(N=30, R_s=2.5)
    x = rng.uniform(-3, 3, size=(30, 2))
    s = SwarmState(x)
    g = Gains(15.0, 8.0)
    ref = np.array([control_displacement(s, i, p, g) for i in range(30)])
    assert np.allclose(displacement_controls(x, p, 15.0, 8.0), ref, atol=1e-12)


def test_equilibrium_on_perfect_lattices():
    for x, L in ((triangular_patch(5, 5), 6), (square_patch(5, 5), 4)):
        p = SwarmParams(N=len(x), L=L, R_s=math.inf)
        u = displacement_controls(x, p, 15.0, 8.0)
        # only the LJ tail from second neighbours and beyond remains
        un = displacement_controls(x, p, 0.0, 8.0)
        assert np.allclose(un, 0, atol=1e-12)
        assert np.all(np.isfinite(u))


def test_adaptive_law():
    p = SwarmParams(N=3, L=6)
    x = triangular_patch(1, 3)
    s = SwarmState(x)
    ad = AdaptiveState.zeros(3, alpha=3.0, e_theta_star=0.2)
    assert np.all(adapt_gains(ad, s, p).G_n == 0)  # collinear row: zero error, dead zone
    # rotate so each link error is known
    th = 0.1 + 0.2 * math.pi / 6  # local error (6/pi)*|err| = 0.3
    err = th
    x = np.array([[0, 0], [math.cos(th), math.sin(th)]])
    s = SwarmState(x)
    e = local_angular_errors(x, p.with_(N=2))
    assert e[0] == pytest.approx(6 / math.pi * err)
    ad = AdaptiveState.zeros(2)
    new = adapt_gains(ad, s, p.with_(N=2), dt=0.01)
    assert new.G_n[0] == pytest.approx(0.01 * 3.0 * (e[0] - 0.2))
    assert np.all(new.reset().G_n == 0)
    with pytest.raises(ValueError):
        AdaptiveState.zeros(2, alpha=0)


def test_adaptive_one_step_increment():
    # e_theta,i = e* + 0.1 -> dG = 3 * 0.1 * 0.01 = 0.003
    p = SwarmParams(N=2, L=6)
    err = (0.3) * math.pi / 6
    x = np.array([[0, 0], [math.cos(err), math.sin(err)]])
    new = adapt_gains(AdaptiveState.zeros(2), SwarmState(x), p, dt=0.01)
    assert new.G_n[0] == pytest.approx(0.003)


def test_radial_law_examples(rng):
    f = InteractionFn("lennard_jones", 0.5, 0.5, 12.0)
    tri = triangular_patch(1, 2).tolist() + [[0.5, math.sqrt(3) / 2]]
    assert np.allclose(radial_controls(np.array(tri), f, math.inf), 0, atol=1e-14)
    x = np.array([[0, 0], [3.0, 0]])
    g = InteractionFn("lennard_jones", 0.5, 0.5, 12.0, cutoff=1.366)
    assert np.allclose(radial_controls(x, g, math.inf), 0)
    x = rng.uniform(-2, 2, size=(12, 3))
    s = SwarmState(x)
    ref = np.array([control_radial_only(s, i, f, 2.0) for i in range(12)])
    assert np.allclose(radial_controls(x, f, 2.0), ref, atol=1e-12)
    with pytest.raises(ValueError):
        radial_controls(np.zeros((2, 2)), InteractionFn("power_law"), math.inf)


def test_spears_vectorised_matches_reference(rng):
    x = rng.uniform(-3, 3, size=(16, 2))
    p = SwarmParams(N=16, L=4, R_s=2.0)
    s = SwarmState(x)
    ref = np.array([spears_control(s, i, p, 1.0, 2.0) for i in range(16)])
    assert np.allclose(spears_controls(x, p, 1.0, 2.0), ref, atol=1e-12)
