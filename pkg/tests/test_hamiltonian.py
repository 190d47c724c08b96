from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochhj.errors import ParameterError
from stochhj.hamiltonian import (EffectiveTable, PowerLawHamiltonian, convexity_violations, eval_H,
                                 eval_H_star, growth_G, legendre_numeric, lower_convex_envelope, map_p,
                                 map_v)

qs = st.floats(1.2, 5.0)
cs = st.floats(0.25, 4.0)
vec = st.lists(st.floats(-4, 4, allow_nan=False), min_size=2, max_size=2).map(np.array)


def test_quadratic_values():
    ham = PowerLawHamiltonian(2.0)
    assert eval_H(ham, [3.0, 4.0]) == pytest.approx(12.5)
    assert eval_H_star(ham, [3.0, 4.0]) == pytest.approx(12.5)


def test_quartic_conjugate():
    assert eval_H_star(PowerLawHamiltonian(4.0), [1.0, 0.0]) == pytest.approx(0.75)


def test_numeric_conjugate_matches_closed_form():
    ham = PowerLawHamiltonian(3.0)
    ax = np.arange(-3, 3 + 1e-9, 0.02)
    grid = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
    res = legendre_numeric(ham.H, grid, np.array([1.0, 0.0]))
    assert res.value == pytest.approx(float(ham.H_star([1.0, 0.0])), abs=2e-3)
    assert not res.truncated


def test_legendre_quadratic_example():
    ax = np.arange(-5, 5 + 1e-9, 0.05)
    grid = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
    res = legendre_numeric(lambda v: 0.5 * np.sum(v * v, axis=1), grid, np.array([1.0, 0.0]))
    assert abs(res.value - 0.5) <= 3e-3


def test_legendre_recovers_H_from_H_star():
    ham = PowerLawHamiltonian(3.0)
    R = ham.legendre_radius(2.0)
    grid = np.linspace(-R, R, 20001)[:, None]
    P = np.linspace(-2, 2, 17)[:, None]
    res = legendre_numeric(ham.H_star, grid, P)
    assert np.max(np.abs(res.value - ham.H(P))) < 1e-2
    assert not res.truncated.any()


def test_legendre_flags_boundary_maximizer():
    grid = np.linspace(-1, 1, 101)[:, None]
    res = legendre_numeric(lambda v: 0.5 * v[:, 0] ** 2, grid, np.array([5.0]))
    assert res.truncated


def test_biconjugation_of_convex_sample():
    v = np.linspace(-2, 2, 81)[:, None]
    L = np.abs(v[:, 0]) ** 1.7
    P = np.linspace(-6, 6, 4001)[:, None]
    Hs = legendre_numeric(L, v, P).value
    back = legendre_numeric(Hs, P, v).value
    assert np.max(np.abs(back - L)) <= 0.5 * (P[1, 0] - P[0, 0]) * 4 + 1e-12


def test_dual_maps():
    q2 = PowerLawHamiltonian(2.0)
    p = np.array([[0.3, -1.2], [2.0, 5.0]])
    assert np.allclose(map_v(q2, p), p) and np.allclose(map_p(q2, p), p)
    assert np.allclose(map_v(PowerLawHamiltonian(3.0), [[2.0, 0.0]]), [[4.0, 0.0]])
    assert np.all(map_v(q2, np.zeros((1, 2))) == 0) and np.all(map_p(q2, np.zeros((1, 2))) == 0)
    gen = np.random.default_rng(0)
    for q in (1.5, 3.0):
        ham = PowerLawHamiltonian(q, 1.7)
        P = gen.normal(size=(100, 2))
        assert np.allclose(ham.map_p(ham.map_v(P)), P, atol=1e-10, rtol=0)


def test_growth_G_quadratic():
    ham = PowerLawHamiltonian(2.0)
    assert growth_G(ham, [3.0, -1.0]) == pytest.approx(0.5, abs=1e-3)
    for v in ([0.0, 0.0], [1.0, 2.0], [-5.0, 0.5]):
        assert growth_G(ham, v) == pytest.approx(0.5, abs=1e-3)


def test_growth_G_bound_for_dual_exponent_above_two():
    ham = PowerLawHamiltonian(1.5)  # q' = 3
    for r in (0.0, 0.5, 1.0, 2.0, 4.0, 8.0):
        G = growth_G(ham, [r, 0.0])
        assert 0.0 <= G <= (1.0 + r) ** (ham.q_dual - 2.0) + 1e-9


def test_invalid_parameters():
    with pytest.raises(ParameterError):
        PowerLawHamiltonian(1.0)
    with pytest.raises(ParameterError):
        PowerLawHamiltonian(2.0, -1.0)


@given(qs, cs, vec, vec)
def test_fenchel_young(q, c, p, v):
    ham = PowerLawHamiltonian(q, c)
    assert p @ v <= ham.H(p) + ham.H_star(v) + 1e-9 * (1 + abs(p @ v))
    w = ham.map_v(p)
    assert abs(ham.H(p) + ham.H_star(w) - p @ w) <= 1e-10 * (1 + ham.H(p) + abs(p @ w))


@given(qs, cs, vec, vec)
def test_midpoint_convexity(q, c, a, b):
    ham = PowerLawHamiltonian(q, c)
    m = 0.5 * (a + b)
    assert ham.H(m) <= 0.5 * (ham.H(a) + ham.H(b)) + 1e-12 * (1 + ham.H(a) + ham.H(b))
    assert ham.H_star(m) <= 0.5 * (ham.H_star(a) + ham.H_star(b)) + 1e-12 * (1 + ham.H_star(a) + ham.H_star(b))


@given(qs, cs, vec)
def test_growth_bounds(q, c, p):
    ham = PowerLawHamiltonian(q, c)
    C = ham.growth_constant()
    r = np.linalg.norm(p)
    assert r ** q / C - C <= ham.H(p) <= C * (r ** q + 1)
    Cs = ham.star_growth_constant()
    qd = ham.q_dual
    assert r ** qd / Cs - Cs <= ham.H_star(p) <= Cs * (r ** qd + 1)


@given(qs, cs, vec, vec)
def test_star_lipschitz_bound(q, c, a, b):
    ham = PowerLawHamiltonian(q, c)
    qd = ham.q_dual
    C = ham.star_lipschitz_constant()
    lhs = abs(ham.H_star(a) - ham.H_star(b))
    rhs = C * (1 + np.linalg.norm(a) ** (qd - 1) + np.linalg.norm(b) ** (qd - 1)) * np.linalg.norm(a - b)
    assert lhs <= rhs + 1e-9


@given(st.lists(st.floats(-2, 2), min_size=21, max_size=21), st.floats(-3, 3))
def test_legendre_monotone_in_values(noise, p):
    grid = np.linspace(-3, 3, 21)[:, None]
    base = 0.5 * grid[:, 0] ** 2
    bigger = base + np.abs(noise)
    assert legendre_numeric(bigger, grid, np.array([p])).value <= legendre_numeric(base, grid, np.array([p])).value


def test_lower_convex_envelope():
    x = np.linspace(-1, 1, 9)
    y = x ** 2
    y[4] += 0.3
    env = lower_convex_envelope(x, y)
    assert np.all(env <= y + 1e-15)
    assert env[4] == pytest.approx(0.5 * (y[3] + y[5]))
    assert np.allclose(np.delete(env, 4), np.delete(y, 4))
    ax = np.linspace(-1, 1, 5)
    pts = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
    vals = np.sum(pts ** 2, axis=1)
    assert np.allclose(lower_convex_envelope(pts, vals), vals)


def test_convexity_violations_and_csv(tmp_path):
    v = np.array([-1.0, 0.0, 1.0])
    assert convexity_violations(v, np.array([1.0, 0.0, 1.0]), np.zeros(3)) == []
    bad = convexity_violations(v, np.array([0.0, 1.0, 0.0]), np.full(3, 0.1))
    assert [b[:3] for b in bad] == [(0, 1, 2)]
    t = EffectiveTable(v, [0.5, 0.0, 0.5], [0.01, 0.02, 0.03], [[0.0], [1.0]], [0.0, 0.5], [0.1, 0.1])
    t.write_csv(tmp_path / "t.csv")
    r = EffectiveTable.read_csv(tmp_path / "t.csv")
    assert np.array_equal(r.Lbar, t.Lbar) and np.array_equal(r.Hbar, t.Hbar)
