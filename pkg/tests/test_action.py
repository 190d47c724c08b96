from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochhj.action import (DiscretePath, action_and_gradient, forcing_integral, kinetic_action,
                            quadrature_nodes, total_action)
from stochhj.env import (RandomEnvironment, constant_field, sample_environment, shift_field,
                         single_mode, zero_field)
from stochhj.errors import AlignmentError
from stochhj.hamiltonian import PowerLawHamiltonian

Q2 = PowerLawHamiltonian(2.0)
DT = 1 / 64


def _env(spec, seed=0, horizon=4.0):
    return sample_environment(spec, horizon, DT, seed, 0)


def _random_path(K=16, s=0.0, t=1.0, seed=0, d=1):
    gen = np.random.default_rng(seed)
    return DiscretePath(s, t, np.cumsum(gen.normal(scale=0.3, size=(K + 1, d)), axis=0))


def _direct_forcing(path, env, n_gauss=20):
    """int f(gamma) B' dr with B' constant between Brownian grid times (Gauss-Legendre per piece)."""
    xg, wg = np.polynomial.legendre.leggauss(n_gauss)
    B = env.path
    i0, i1 = round(path.s / B.dt), round(path.t / B.dt)
    total = 0.0
    for i in range(i0, i1):
        a, b = i * B.dt, (i + 1) * B.dt
        slope = (B.values[i + 1] - B.values[i]) / B.dt
        r = 0.5 * (a + b) + 0.5 * (b - a) * xg
        k = np.minimum(((r - path.s) / path.step).astype(int), path.K - 1)
        lam = (r - path.times[k]) / path.step
        pos = path.nodes[k] + lam[:, None] * (path.nodes[k + 1] - path.nodes[k])
        total += 0.5 * (b - a) * np.sum(wg * (env.field.value(pos) @ slope))
    return total


def test_constant_path_kinetic():
    for q in (1.5, 2.0, 3.0):
        assert kinetic_action(DiscretePath(0.0, 3.0, np.zeros((7, 2))), PowerLawHamiltonian(q)) == 0.0


def test_straight_line_independent_of_K():
    x, y, T = np.array([0.2, -0.1]), np.array([1.0, 0.5]), 2.0
    exact = np.sum((y - x) ** 2) / (2 * T)
    vals = [kinetic_action(DiscretePath(0.0, T, np.linspace(x, y, K + 1)), Q2) for K in (1, 2, 4, 8, 16)]
    assert np.allclose(vals, exact, rtol=0, atol=1e-12)


def test_refinement_is_stable():
    p = _random_path(8)
    fine = np.empty((17, 1))
    fine[::2] = p.nodes
    fine[1::2] = 0.5 * (p.nodes[:-1] + p.nodes[1:])
    assert abs(kinetic_action(p, Q2) - kinetic_action(DiscretePath(0.0, 1.0, fine), Q2)) < 1e-12


def test_forcing_zero_and_constant_field():
    p = _random_path(16)
    assert forcing_integral(p, _env(zero_field())) == 0.0
    env = _env(constant_field([0.7]))
    expect = 0.7 * (env.path(1.0)[0] - env.path(0.0)[0])
    assert forcing_integral(p, env) == pytest.approx(expect, abs=1e-13)
    p2 = DiscretePath(0.5, 1.5, p.nodes)
    assert forcing_integral(p2, env) == pytest.approx(0.7 * (env.path(1.5)[0] - env.path(0.5)[0]), abs=1e-13)


def test_forcing_against_direct_quadrature():
    env = _env(single_mode(1.0, 2.0), seed=3)
    path = _random_path(8, seed=4)
    ref = _direct_forcing(path, env)
    errs = [abs(forcing_integral(path, env, s) - ref) for s in (2, 4, 8)]
    assert errs[0] / errs[1] > 3.0 and errs[1] / errs[2] > 3.0
    assert errs[2] < 1e-4


def test_quadrature_order_against_64_subsamples():
    env = _env(single_mode(1.0, 3.0), seed=5)
    path = _random_path(4, seed=6)
    ref = forcing_integral(path, env, 64)
    subs = np.array([2, 4, 8, 16])
    errs = np.array([abs(forcing_integral(path, env, int(s)) - ref) for s in subs])
    slope = -np.polyfit(np.log(subs), np.log(errs), 1)[0]
    assert slope >= 1.9


def test_total_action_examples():
    env = _env(zero_field())
    line = DiscretePath(0.0, 1.0, np.linspace(0, 1, 9)[:, None])
    br = total_action(line, env, Q2)
    assert br.forcing == 0 and br.total == br.kinetic == pytest.approx(0.5)
    env = _env(single_mode(0.8, 1.0), seed=1)
    x = 0.3
    const = DiscretePath(0.0, 2.0, np.full((9, 1), x))
    br = total_action(const, env, PowerLawHamiltonian(3.0))
    assert br.total == pytest.approx(env.field.value([x])[0] * env.path(2.0)[0], abs=1e-12)
    assert br.total == br.kinetic + br.forcing


@given(st.integers(1, 15), st.integers(0, 10_000))
def test_additivity(k, seed):
    env = _env(single_mode(0.9, 1.3), seed=seed % 17)
    path = _random_path(16, seed=seed)
    a, b = path.split(k)
    whole = total_action(path, env, Q2).total
    parts = total_action(a, env, Q2).total + total_action(b, env, Q2).total
    assert abs(whole - parts) <= 1e-9 * max(1.0, abs(whole))


@given(st.floats(-5, 5), st.integers(0, 1000))
def test_shift_covariance(y, seed):
    env = _env(single_mode(0.9, 1.3), seed=seed % 11)
    path = _random_path(8, seed=seed)
    shifted = RandomEnvironment(shift_field(env.field, [y]), env.path)
    moved = DiscretePath(path.s, path.t, path.nodes - y)
    a = total_action(path, env, Q2).total
    b = total_action(moved, shifted, Q2).total
    assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


def test_misaligned_grid_rejected():
    env = _env(single_mode())
    with pytest.raises(AlignmentError):
        forcing_integral(DiscretePath(0.0, 1.0, np.zeros((4, 1))), env)
    with pytest.raises(AlignmentError):
        forcing_integral(DiscretePath(0.001, 1.001, np.zeros((5, 1))), env)


def test_segment_centred_nodes():
    env = _env(single_mode(), seed=2)
    Bq, wq, J = quadrature_nodes(env.path, 0.5, 0.25, 3, 2)
    assert J == 2 * 16 and np.all(Bq[:, 0] == 0)
    assert wq.sum() == pytest.approx(0.25)


def test_action_gradient_matches_finite_differences():
    env = sample_environment(single_mode(0.8, 1.5, 2), 2.0, DT, 9, 0)
    path = _random_path(8, d=2, seed=3)
    Bq, wq, _ = quadrature_nodes(env.path, 0.0, path.step, path.K, 2)
    total, grad = action_and_gradient(path.nodes, path.step, env, Q2, Bq, wq)
    assert total == pytest.approx(total_action(path, env, Q2, 2).total, rel=1e-12)
    h = 1e-6
    for k in (0, 3, 8):
        for c in range(2):
            e = np.zeros_like(path.nodes)
            e[k, c] = h
            fp = action_and_gradient(path.nodes + e, path.step, env, Q2, Bq, wq)[0]
            fm = action_and_gradient(path.nodes - e, path.step, env, Q2, Bq, wq)[0]
            assert grad[k, c] == pytest.approx((fp - fm) / (2 * h), abs=1e-6)
