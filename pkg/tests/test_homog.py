from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochhj.env import constant_field, single_mode, zero_field
from stochhj.errors import ParameterError, ResolutionError, StatisticsError
from stochhj.hamiltonian import EffectiveTable, PowerLawHamiltonian
from stochhj.hj import InitialDatum
from stochhj.homog import (LatticeTemplate, ScalingLattice, SubadditiveSchedule, default_tent_parameters,
                           effective_hamiltonian, effective_table, enhancement_gap, estimate_Lbar,
                           extend_lbar, holder_seminorm, homog_convergence, hopf_lax_effective,
                           median_se, observation_grid, regularity_tails, scaling_study,
                           tent_directions, tent_upper_bound)

Q2 = PowerLawHamiltonian(2.0)
FINE = LatticeTemplate(1 / 16, 1 / 8, 2.0, 1, 2.0, 1 / 16)
COARSE = LatticeTemplate(1 / 8, 1 / 4, 2.0, 1, 4.0, 1 / 8)
UNIT = ScalingLattice(1 / 8, 1 / 4, 2.0, 1.0, 1, 1 / 8)


def _quadratic(v):
    return 0.5 * np.sum(np.atleast_2d(v) ** 2, axis=-1) if np.ndim(v) > 1 else 0.5 * np.asarray(v) ** 2


def test_zero_field_estimate_is_H_star():
    for v in (0.0, 0.5, -1.0):
        e = estimate_Lbar((v,), SubadditiveSchedule((2, 4, 8), 4), zero_field(), FINE, 0)
        for row in e.table:
            assert abs(row["mean"] - Q2.H_star(v)) <= 1e-12
        assert e.converged and e.half_width == 0.0


def test_constant_field_deviation_decays():
    c = 0.75
    e = estimate_Lbar((0.5,), SubadditiveSchedule((2, 8, 32), 64), constant_field([c]), COARSE, 1)
    for row in e.table:
        sigma = c  # sd of c B_T / sqrt(T)
        assert abs(row["mean"] - Q2.H_star(0.5)) <= 4 * sigma * row["T"] ** -0.5 / math.sqrt(row["n"])


def test_schedule_and_lattice_errors():
    with pytest.raises(ParameterError):
        SubadditiveSchedule((4, 2), 8)
    with pytest.raises(ParameterError):
        SubadditiveSchedule((2, 4), 1)
    with pytest.raises(ParameterError):
        estimate_Lbar((0.0,), SubadditiveSchedule((0.3, 1.0), 4), zero_field(), FINE, 0)
    with pytest.raises(ResolutionError):
        ScalingLattice(1 / 4, 1 / 4, 2.0, 1.0).for_eps(0.5)


def _table(L, hw=0.0):
    v = np.linspace(-3, 3, 61)
    return EffectiveTable(v, L(v), np.full(v.shape, hw))


def test_exact_table_gives_H():
    tab = effective_hamiltonian(_table(lambda v: 0.5 * v ** 2), np.linspace(-2, 2, 9), Q2)
    assert np.max(np.abs(tab.Hbar - Q2.H(tab.momenta))) <= 0.5 * 0.1 ** 2
    assert not tab.truncated.any()


def test_convexification_moves_values_by_at_most_noise():
    gen = np.random.default_rng(0)
    hw = 0.05
    base = _table(lambda v: 0.5 * v ** 2)
    noisy = EffectiveTable(base.velocities, base.Lbar + gen.uniform(-hw, hw, base.Lbar.shape), np.full(61, hw))
    tab = effective_hamiltonian(noisy, [0.0], Q2)
    assert np.max(np.abs(tab.convexified - noisy.Lbar)) <= 2 * hw


def test_enhanced_table_raises_H():
    tab = _table(lambda v: 0.5 * v ** 2 - 0.2 * np.exp(-v ** 2))
    out = effective_hamiltonian(tab, np.linspace(-2, 2, 9), Q2)
    assert np.all(out.Hbar >= Q2.H(out.momenta) - 1e-12)


def test_truncated_conjugate_warns():
    with pytest.warns(UserWarning, match="boundary"):
        out = effective_hamiltonian(_table(lambda v: 0.5 * v ** 2), [10.0], Q2)
    assert out.truncated.all()


@pytest.mark.filterwarnings("ignore:conjugate supremum")
@settings(max_examples=25)
@given(st.lists(st.floats(-0.5, 0.5), min_size=13, max_size=13), st.floats(1.2, 3.0))
def test_duality_sandwich(noise, q):
    ham = PowerLawHamiltonian(q)
    v = np.linspace(-1.5, 1.5, 13)
    tab = EffectiveTable(v, ham.H_star(v) + np.array(noise), np.zeros(13))
    P = np.linspace(-1, 1, 7)
    out = effective_hamiltonian(tab, P, ham)
    pv = P[:, None] * v[None, :] - tab.Lbar[None, :]
    assert np.all(pv <= out.Hbar[:, None] + 1e-12)


def test_tent_zero_delta_is_straight_path():
    spec = single_mode(1.0, 1.0)
    cert = tent_upper_bound((0.5,), 4.0, 0.0, 8, spec, 3, samples=64, env_dt=1 / 8)
    assert abs(cert.bound - Q2.H_star(0.5)) <= 4 * cert.se
    assert cert.reference == Q2.H_star(0.5)


def test_tent_constant_field_has_no_benefit():
    spec = constant_field([0.8])
    a = tent_upper_bound((0.5,), 4.0, 1.0, 8, spec, 3, samples=32, env_dt=1 / 8)
    b = tent_upper_bound((0.5,), 4.0, 0.0, 8, spec, 3, samples=32, env_dt=1 / 8)
    assert a.bound == pytest.approx(b.bound, abs=1e-12)
    assert a.bound >= Q2.H_star(0.5) - 4 * a.se
    assert not a.certified or a.gap <= 4 * a.se


def test_tent_parameter_checks():
    spec = single_mode(1.0, 1.0)
    with pytest.raises(ParameterError):
        tent_upper_bound((0.0,), 4.0, 2.5, 4, spec, 0, samples=4)
    M, delta = default_tent_parameters((0.0,), spec, Q2)
    assert M == pytest.approx(4 * 1.5 ** 2 / 0.25) and 0 < delta <= M / 2
    with pytest.raises(ParameterError):
        default_tent_parameters((0.0,), constant_field([1.0]), Q2)
    assert tent_directions(1, 8).shape == (9, 1)
    assert tent_directions(2, 8).shape == (33, 2)
    assert np.all(np.linalg.norm(tent_directions(2), axis=1) <= 1 + 1e-12)


def test_tent_soundness_against_estimate():
    spec = single_mode(1.0, 1.0)
    e = estimate_Lbar((0.0,), SubadditiveSchedule((8, 16), 32), spec, LatticeTemplate(1 / 16, 1 / 8, 3.0, 2, 3.0, 1 / 16), 4)
    cert = tent_upper_bound((0.0,), 8.0, 2.0, 4, spec, 4, samples=32, env_dt=1 / 8)
    assert cert.bound >= e.value - 3 * math.hypot(cert.se, e.se)
    assert e.value <= Q2.H_star(0.0) + 3 * e.se


def test_constant_field_gap_is_noise():
    ests = [estimate_Lbar((v,), SubadditiveSchedule((4, 8), 32), constant_field([0.5]), FINE, 2)
            for v in (-1.0, -0.5, 0.0, 0.5, 1.0)]
    tab = effective_hamiltonian(effective_table(ests, Q2), [-0.5, 0.0, 0.5], Q2)
    for p in (-0.5, 0.0, 0.5):
        g = enhancement_gap((p,), tab, constant_field([0.5]), Q2)
        assert g.gap <= 2 * max(g.half_width, 1e-12) and g.structural == 0.0
    with pytest.raises(ParameterError):
        enhancement_gap((0.3,), tab, constant_field([0.5]), Q2)


def test_homog_convergence_examples():
    probe = [(np.zeros(1), np.array([0.5]), 0.0, 1.0)]
    flat = homog_convergence(probe, [2 ** -2, 2 ** -4, 2 ** -6], zero_field(), UNIT, 4, 5, _quadratic)
    assert max(flat.discrepancy) <= 1e-12
    const = homog_convergence(probe, [2.0 ** -k for k in range(2, 7)], constant_field([0.7]), UNIT, 64, 5,
                              _quadratic)
    assert abs(const.slope() - 0.5) <= 0.15 and const.decreasing
    spec = single_mode(0.5, 1.0)
    e = estimate_Lbar((0.0,), SubadditiveSchedule((8, 16, 32), 64), spec, COARSE, 3)
    rep = homog_convergence([(np.zeros(1), np.zeros(1), 0.0, 1.0)], [2 ** -2, 2 ** -6], spec, UNIT, 64, 5,
                            lambda v: e.value + _quadratic(v))
    d, s = rep.discrepancy, rep.se
    assert d[1] + 1.645 * math.hypot(s[0], s[1]) < d[0]


def test_scaling_study_small():
    u0 = InitialDatum.linear([1.0])
    rep = scaling_study([0.75, 0.25], [2 ** -2, 2 ** -3, 2 ** -4], (np.zeros(1), 1.0), u0,
                        single_mode(0.35, 2.0), ScalingLattice(1 / 8, 1 / 2, 6.0, 3.0, 1, 1 / 4), 16, 3)
    assert rep.classification[0.75]["regime"] == "noise vanishes"
    assert rep.classification[0.25]["drop"] > 0
    hi = rep.for_theta(0.75)
    assert hi[-1].distance < hi[0].distance
    with pytest.raises(ParameterError):
        scaling_study([0.5], [2 ** -3, 2 ** -2], (np.zeros(1), 1.0), u0, single_mode(), UNIT, 16, 0)


def test_hopf_lax_effective_quadratic():
    u0 = InitialDatum.linear([0.5])
    val = hopf_lax_effective(u0, [0.0], 1.0, lambda v: 0.5 * v ** 2)
    assert val == pytest.approx(-0.125, abs=1e-5)
    fn = extend_lbar([-1.0, 0.0, 1.0], [0.5, 0.0, 0.5])
    assert fn(0.5) == pytest.approx(0.25) and fn(2.0) == pytest.approx(0.5 + 0.5 + 0.5)


def test_holder_seminorm_and_median_se():
    xs = np.linspace(-1, 1, 5)
    ts = np.array([0.5, 1.0])
    assert holder_seminorm(np.zeros((2, 5)), xs, ts) == 0.0
    u = np.tile(xs, (2, 1))
    assert holder_seminorm(u, xs, ts, 1.0) == pytest.approx(1.0)
    with pytest.raises(StatisticsError):
        median_se(np.arange(5.0))
    vals = np.random.default_rng(0).normal(size=4000)
    assert median_se(vals) == pytest.approx(math.sqrt(math.pi / 2 / 4000), rel=0.2)


def test_regularity_tails_small():
    lat = ScalingLattice(1 / 8, 1 / 2, 4.0, 2.5, 1, 1 / 4)
    eps = [2 ** -2, 2 ** -3]
    zero = regularity_tails(eps, 1.25, 100, lat, zero_field(), 7)
    assert zero.baseline[0] == pytest.approx(zero.baseline[1], abs=1e-3)
    assert all(np.allclose(s, b, atol=1e-3) for s, b in zip(zero.seminorms, zero.baseline))
    rep = regularity_tails(eps, 1.25, 100, lat, single_mode(0.1, 1.0), 7)
    lams = np.linspace(0, 0.5, 26)
    for i in range(len(eps)):
        surv = rep.survival(i, lams)
        assert np.all(np.diff(surv) <= 0)
    with pytest.raises(StatisticsError):
        regularity_tails(eps, 1.25, 50, lat, zero_field(), 7)
    with pytest.raises(ParameterError):
        regularity_tails(eps, 1.0, 100, lat, zero_field(), 7)
    xs, ts = observation_grid(1.25)
    assert xs[0] == -1.25 and ts[0] == 0.875 and ts[-1] == 1.25
