"""Light programs, PTW and Levy walkers, population simulation."""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from latticeswarm.stochastic import (KinematicAgent, LevyAgent, LevyParams, LightProgram,
                                     PTWParams, agent_rngs, exact_ou_step, levy_step, light_at,
                                     ptw_step, simulate_levy_population, simulate_ptw_population)


def test_light_examples():
    sw = LightProgram.switching(10, 20, 0.5, 1.0)
    assert light_at(sw, [0, 0], 15.0) == 1.0
    assert light_at(sw, [0, 0], 5.0) == 0.0
    assert light_at(sw, [0, 0], 20.0) == 0.0
    assert light_at(sw, [0, 0], 30.0) == 1.0
    ramp = LightProgram(temporal="ramp", t0=10, t1=40)
    assert light_at(ramp, [0, 0], 10.0) == 0.0
    assert light_at(ramp, [0, 0], 25.0) == pytest.approx(round(0.5 * 255) / 255)
    dark = LightProgram(temporal="constant", spatial="circle_dark")
    assert light_at(dark, [960, 540], 3.0) == 0.0
    assert light_at(dark, [10, 10], 3.0) == 1.0
    half = LightProgram(temporal="constant", spatial="half_half")
    assert light_at(half, np.array([[100.0, 5], [1500, 5]]), 0.0).tolist() == [0.0, 1.0]
    with pytest.raises(ValueError):
        LightProgram(temporal="blink")
    with pytest.raises(ValueError):
        LightProgram(temporal="ramp", t0=5, t1=5)


@given(st.floats(0, 200), st.floats(0, 1920), st.floats(0, 1080),
       st.sampled_from(["uniform", "half_half", "gradient_lateral", "gradient_center_light",
                        "gradient_center_dark", "circle_light", "circle_dark"]))
def test_light_range_and_quantized(t, x, y, spatial):
    prog = LightProgram(temporal="ramp", t0=0, t1=100, spatial=spatial, intensity=0.8)
    val = light_at(prog, [x, y], t)
    assert 0 <= val <= 1
    assert abs(val * 255 - round(val * 255)) < 1e-9


def test_ptw_fixed_point_and_step_up_only():
    P = PTWParams(sigma_v=0, sigma_w=0, alpha_v=-5, beta_v=-3, alpha_w=1, beta_w=2)
    a = KinematicAgent([0, 0], 0.0, P.mu_v, 0.0)
    out = ptw_step(a, P, 0.0, 0.0, 0.01, np.random.default_rng(0))
    assert out.v == P.mu_v and out.w == 0.0 and out.heading == 0.0
    assert np.allclose(out.position, [P.mu_v * 0.01, 0.0])
    # a negative input derivative has no effect
    b = ptw_step(a, P, 0.0, -7.0, 0.01, np.random.default_rng(0))
    assert b.v == out.v and b.w == out.w
    # negative photokinesis: with light on, v decreases from mu_v
    c = ptw_step(a, P, 1.0, 0.0, 0.01, np.random.default_rng(0))
    assert c.v < P.mu_v
    with pytest.raises(ValueError):
        ptw_step(a, P, 0.0, 0.0, 0.0, np.random.default_rng(0))


@given(st.integers(0, 10_000), st.floats(0, 1), st.floats(-5, 5))
def test_ptw_speed_never_negative(seed, u, ud):
    P = PTWParams(mu_v=1.0, sigma_v=40.0, alpha_v=-50.0)
    rng = np.random.default_rng(seed)
    a = KinematicAgent([0, 0], 0.0, 0.5, 0.1)
    for _ in range(50):
        a = ptw_step(a, P, u, ud, 0.01, rng)
        assert a.v >= 0


def test_exact_ou_examples():
    rng = np.random.default_rng(1)
    th, mu, dT = 0.7, 3.0, 0.5
    a = math.exp(-th * dT)
    assert exact_ou_step(2.0, 0.0, th, mu, 0.0, 0.0, dT, rng) == pytest.approx(a * 2 + mu * (1 - a))
    far = exact_ou_step(100.0, 1.0, th, mu, 2.0, 0.0, 200.0, rng)
    assert far == pytest.approx(mu + 2.0 / th)
    draws = exact_ou_step(np.zeros(100_000), 0.0, th, mu, 0.0, 1.3, dT, rng)
    var = 1.3 ** 2 * (1 - math.exp(-2 * th * dT)) / (2 * th)
    assert np.var(draws) == pytest.approx(var, rel=0.02)
    with pytest.raises(ValueError):
        exact_ou_step(0.0, 0.0, 0.0, mu, 0.0, 1.0, dT, rng)


def test_euler_ou_stationary_moments():
    # speed channel with no input: stationary mean mu_v, variance sigma^2/(2 theta)
    P = PTWParams(theta_v=2.0, mu_v=40.0, sigma_v=6.0, sigma_w=0.0)
    prog = LightProgram()
    run = simulate_ptw_population([P] * 200, prog, t_max=40, dt=0.01, sample_dt=0.5, seed=2)
    v = run.v[:, 20:].ravel()
    assert v.mean() == pytest.approx(40.0, rel=0.01)
    assert v.var() == pytest.approx(36.0 / 4.0, rel=0.06)


def test_levy_within_run_displacement():
    p = LevyParams(v=30.0)
    a = LevyAgent([0, 0], 0.3, 5.0)
    b = levy_step(a, p, 0.01, np.random.default_rng(0))
    assert np.linalg.norm(b.position - a.position) == pytest.approx(0.3)
    assert b.heading == 0.3 and b.remaining == pytest.approx(4.99)


def test_levy_run_lengths_and_turns():
    rng = np.random.default_rng(4)
    p = LevyParams(rate=2.0)
    assert p.run_duration(rng.random(100_000)).mean() == pytest.approx(0.5, rel=0.02)
    pl = LevyParams(run="power_law", exponent=3.5, tau_min=0.2)
    # Pareto with shape 2.5: mean = tau_min * 2.5 / 1.5
    assert pl.run_duration(rng.random(200_000)).mean() == pytest.approx(0.2 * 2.5 / 1.5, rel=0.02)
    h = p.new_heading(np.zeros(20_000), rng.random(20_000))
    assert stats.kstest((h + math.pi) / (2 * math.pi), "uniform").pvalue > 0.01
    g = LevyParams(turn="wrapped_gaussian", turn_std=0.3)
    h = g.new_heading(np.zeros(20_000), rng.random(20_000))
    assert np.std(h) == pytest.approx(0.3, rel=0.03)


def test_levy_step_tumbles_on_expiry():
    rng = np.random.default_rng(0)
    p = LevyParams(rate=1.0)
    a = LevyAgent([0, 0], 0.0, 0.0)
    runs, tumbles = [], 0
    for _ in range(200_000):
        b = levy_step(a, p, 0.01, rng)
        if a.remaining <= 0:
            tumbles += 1
            runs.append(b.remaining + 0.01)
        a = b
    assert tumbles > 1000
    # the agent keeps moving for ceil(tau/dt) steps, so realised runs average 1/lambda + dt/2
    assert np.mean(np.ceil(np.array(runs) / 0.01 - 1e-9) * 0.01) == pytest.approx(1.0 + 0.005, rel=0.05)


def test_agent_streams_independent_of_population_size():
    a = agent_rngs(1, 0, 3)[1].random()
    b = agent_rngs(1, 0, 10)[1].random()
    assert a == b


def test_population_shapes_and_bounds():
    P = PTWParams(alpha_v=-10, alpha_w=0.5)
    prog = LightProgram.switching(spatial="half_half")
    run = simulate_ptw_population([P] * 5, prog, t_max=20, seed=3)
    assert run.positions.shape == (5, 41, 2)
    assert np.all(run.positions[..., 0] >= 0) and np.all(run.positions[..., 0] <= 1920)
    assert np.all(run.positions[..., 1] >= 0) and np.all(run.positions[..., 1] <= 1080)
    assert np.all(run.v >= 0)
    same = simulate_ptw_population([P] * 5, prog, t_max=20, seed=3)
    assert np.array_equal(run.positions, same.positions)
    with pytest.raises(ValueError):
        simulate_ptw_population([P], prog, t_max=1, dt=0.03, sample_dt=0.5)


def test_levy_population(tmp_path):
    run = simulate_levy_population(LevyParams(), 4, t_max=10, seed=1)
    assert run.positions.shape == (4, 21, 2)
    run.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,agent_id,x,y,v,w,u" and len(lines) == 1 + 4 * 21
