from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochhj.action import DiscretePath, total_action
from stochhj.env import constant_field, sample_environment, single_mode, zero_field
from stochhj.errors import InfeasibleError, ParameterError
from stochhj.hamiltonian import PowerLawHamiltonian
from stochhj.optimizer import (LagrangianEstimate, LatticeSpec, check_growth, check_subadditivity,
                               descent_refine, direct_frame, dp_lagrangian, loglog_slope,
                               scaled_lagrangian, straight_line, symmetric_lattice)

Q2 = PowerLawHamiltonian(2.0)


def _env(spec, horizon=4.0, dt=1 / 128, seed=0, index=0):
    return sample_environment(spec, horizon, dt, seed, index)


def test_zero_noise_value():
    env = _env(zero_field(), 1.0)
    lat = symmetric_lattice(2.0, 1 / 64, 1 / 64, 4.0, subsamples=1)
    est = dp_lagrangian([0.0], [1.0], 0.0, 1.0, env, lat)
    assert abs(est.value - 0.5) <= 0.02
    assert est.method == "dp" and not est.flags["truncated"]
    # at dt = h / 2 single slices move 0 or 2 cells, so the lattice value needs the polish
    fine = dp_lagrangian([0.0], [1.0], 0.0, 1.0, env, symmetric_lattice(2.0, 1 / 64, 1 / 128, 8.0))
    assert abs(descent_refine(fine, env, Q2).value - 0.5) <= 0.02


def test_constant_field_decouples():
    env = _env(constant_field([0.6]), 2.0)
    lat = symmetric_lattice(2.0, 1 / 64, 1 / 128, 8.0, subsamples=1)
    est = descent_refine(dp_lagrangian([0.0], [0.5], 0.5, 1.5, env, lat), env, Q2)
    expect = 0.5 ** 2 / 2 + 0.6 * (env.path(1.5)[0] - env.path(0.5)[0])
    assert abs(est.value - expect) <= 0.02


def test_value_is_recomputed_action_and_beats_straight_line():
    env = _env(single_mode(1.0, 1.5), 2.0, seed=3)
    lat = symmetric_lattice(2.0, 1 / 16, 1 / 16, 3.0, subsamples=2)
    est = dp_lagrangian([0.0], [0.5], 0.0, 1.0, env, lat)
    br = total_action(est.minimizer, env, Q2, 2)
    assert abs(est.value - br.total) <= 1e-9 * max(1.0, abs(br.total))
    assert abs(est.value - est.flags["dp_value"]) <= 1e-9 * max(1.0, abs(est.value))
    line = straight_line([0.0], [0.5], 0.0, 1.0, env, Q2, 16, 2)
    assert est.value <= line.value + 1e-12
    data = json.loads(est.to_json())
    assert data["method"] == "dp" and data["lattice"]["h"] == 1 / 16


def test_errors():
    env = _env(zero_field(), 1.0)
    lat = symmetric_lattice(1.0, 1 / 8, 1 / 8, 1.0)
    with pytest.raises(ParameterError):
        dp_lagrangian([0.0], [5.0], 0.0, 1.0, env, lat)
    with pytest.raises(InfeasibleError):
        dp_lagrangian([-1.0], [1.0], 0.0, 0.5, env, lat)
    with pytest.raises(ParameterError):
        LatticeSpec((0, 0, 0), (1, 1, 1), 0.5, 0.5, 1.0)
    with pytest.raises(ParameterError):
        LatticeSpec((0,), (1,), 0.5, 0.1, 1.0)


@pytest.mark.filterwarnings("ignore:DP minimizer saturates")
def test_monotone_in_speed_cap_and_resolution():
    env = _env(single_mode(1.0, 2.0), 2.0, seed=8)
    base = dict(x=[0.0], y=[0.25], s=0.0, t=1.0, env=env)
    coarse = dp_lagrangian(lattice=symmetric_lattice(1.5, 1 / 8, 1 / 16, 2.0, subsamples=2), **base).flags["dp_value"]
    faster = dp_lagrangian(lattice=symmetric_lattice(1.5, 1 / 8, 1 / 16, 4.0, subsamples=2), **base).flags["dp_value"]
    finer = dp_lagrangian(lattice=symmetric_lattice(1.5, 1 / 16, 1 / 16, 2.0, subsamples=2), **base).flags["dp_value"]
    assert faster <= coarse + 1e-9
    assert finer <= coarse + 1e-9


def test_subadditivity_chord_equality_and_degenerate():
    env = _env(zero_field(), 2.0)
    lat = symmetric_lattice(2.0, 1 / 16, 1 / 16, 4.0)
    rep = check_subadditivity(env, lat, [([0.0], [0.5], [1.0], 0.0, 0.5, 1.0)])
    assert rep.ok and abs(rep.max_excess) <= 1e-9
    env = _env(single_mode(), 2.0, seed=1)
    rep = check_subadditivity(env, lat, [([0.0], [0.5], [0.5], 0.0, 1.0, 1.0)])
    assert rep.ok and rep.max_excess == 0.0


@settings(max_examples=10)
@given(st.integers(0, 2 ** 32))
def test_subadditivity_random_triples(seed):
    gen = np.random.default_rng(seed)
    env = _env(single_mode(1.0, 1.3), 2.0, dt=1 / 16, seed=seed)
    lat = symmetric_lattice(2.0, 1 / 8, 1 / 8, 16.0, subsamples=1)
    pts = gen.integers(-8, 9, 3) / 8
    s, r, t = sorted(gen.choice(np.arange(0, 17), 3, replace=False) / 8)
    assert check_subadditivity(env, lat, [([pts[0]], [pts[1]], [pts[2]], s, r, t)]).ok


def test_descent_keeps_straight_line_and_fixes_zigzag():
    env = _env(zero_field(), 1.0)
    line = straight_line([0.0], [1.0], 0.0, 1.0, env, Q2, 8)
    out = descent_refine(line, env, Q2)
    assert out.value == pytest.approx(line.value, abs=1e-12)
    zig = np.linspace(0, 1, 9)[:, None] + 0.2 * (np.arange(9) % 2)[:, None] * (np.arange(9) < 8)[:, None]
    path = DiscretePath(0.0, 1.0, zig)
    br = total_action(path, env, Q2)
    est = LagrangianEstimate(br.total, path, br, "dp", np.zeros(1), np.ones(1), 0.0, 1.0)
    out = descent_refine(est, env, Q2)
    assert out.value <= est.value
    assert abs(out.value - 0.5) <= 1e-4
    out2 = descent_refine(est, env, Q2, quasi_newton=False)
    assert abs(out2.value - 0.5) <= 1e-4


@settings(max_examples=8)
@given(st.integers(0, 1000))
def test_descent_never_increases(seed):
    env = _env(single_mode(1.0, 2.0), 1.0, seed=seed)
    lat = symmetric_lattice(1.5, 1 / 16, 1 / 16, 3.0, subsamples=2)
    est = dp_lagrangian([0.0], [0.25], 0.0, 1.0, env, lat)
    out = descent_refine(est, env, Q2, iterations=20)
    assert out.value <= est.value


def test_scaled_lagrangian_unit_eps_matches_dp():
    env = _env(single_mode(), 2.0, seed=2)
    lat = symmetric_lattice(2.0, 1 / 16, 1 / 16, 3.0, subsamples=2)
    a = scaled_lagrangian([0.0], [0.5], 0.0, 1.0, 1.0, 0.5, env, lat)
    b = dp_lagrangian([0.0], [0.5], 0.0, 1.0, env, lat)
    assert a.value == b.value


def test_scaled_lagrangian_zero_noise_independent_of_eps():
    env = _env(zero_field(), 8.0, dt=1 / 8)
    lat = LatticeSpec((-1.0,), (5.0,), 1 / 8, 1 / 8, 2.0)
    vals = [scaled_lagrangian([0.0], [1.0], 0.0, 1.0, eps, 0.5, env, lat).value for eps in (1.0, 0.5, 0.25)]
    assert np.allclose(vals, 0.5, atol=0.02)


@pytest.mark.parametrize("theta", [0.25, 0.5, 0.75])
def test_scaled_frame_matches_direct_computation(theta):
    eps = 0.25
    env = _env(single_mode(0.8, 1.0), 8.0, dt=1 / 16, seed=4)
    lat = symmetric_lattice(6.0, 1 / 8, 1 / 8, 4.0, subsamples=1)
    a = scaled_lagrangian([0.0], [0.5], 0.0, 1.0, eps, theta, env, lat)
    env_d, lat_d = direct_frame(env, lat, eps, theta)
    b = dp_lagrangian([0.0], [0.5], 0.0, 1.0, env_d, lat_d)
    assert abs(a.value - b.value) <= 0.04
    assert abs(a.value - b.value) <= 1e-9 * max(1.0, abs(a.value))


def test_growth_envelope_zero_noise():
    env = _env(zero_field(), 2.0, dt=1 / 16)
    lat = symmetric_lattice(2.0, 1 / 8, 1 / 16, 4.0)
    samples = [([0.0], [y], 0.0, t) for y in (0.0, 0.5, 1.0) for t in (0.5, 1.0, 2.0)]
    rep = check_growth(env, lat, samples, Q2)
    assert rep.ok and rep.C_hat <= Q2.star_growth_constant()


def test_growth_exponent_in_displacement():
    env = _env(single_mode(0.3, 1.0), 1.0, dt=1 / 8, seed=5)
    lat = LatticeSpec((-1.0,), (9.0,), 1 / 8, 1 / 8, 16.0, 1)
    ys = [2.0, 4.0, 8.0]
    vals = [dp_lagrangian([0.0], [y], 0.0, 1.0, env, lat).value for y in ys]
    assert abs(loglog_slope(ys, vals) - Q2.q_dual) <= 0.1


def test_growth_exponent_in_duration():
    env = _env(single_mode(0.3, 1.0), 1.0, dt=1 / 128, seed=6)
    lat = LatticeSpec((-1.0,), (2.0,), 1 / 128, 1 / 128, 40.0, 1)
    ts = [1 / 32, 1 / 16, 1 / 8, 1 / 4]
    vals = [dp_lagrangian([0.0], [1.0], 0.0, t, env, lat).value for t in ts]
    assert abs(loglog_slope(ts, vals) + (Q2.q_dual - 1)) <= 0.15


def test_stationarity_in_law():
    lat = symmetric_lattice(3.0, 1 / 8, 1 / 8, 3.0, subsamples=1)
    z = 1.0
    a, b = [], []
    for i in range(200):
        env = sample_environment(single_mode(1.0, 1.0), 1.0, 1 / 16, 21, i)
        a.append(dp_lagrangian([0.0], [0.5], 0.0, 1.0, env, lat).value)
        b.append(dp_lagrangian([z], [0.5 + z], 0.0, 1.0, env, lat).value)
    a, b = np.array(a), np.array(b)
    se = math.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
    assert abs(a.mean() - b.mean()) <= 4 * se
