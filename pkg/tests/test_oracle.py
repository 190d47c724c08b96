from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochhj import rng
from stochhj.env import BrownianPath, sample_path
from stochhj.errors import ParameterError
from stochhj.optimizer import symmetric_lattice
from stochhj.oracle import (PsiFixture, UnboundedLinearField, psi_action, psi_batch, psi_mean_identity,
                            psi_minimizer, psi_value, psi_vs_dp)

DT = 1 / 512


def _fixture(seed, T=1.0, scale=1.0):
    p = sample_path(T, DT, 1, np.random.default_rng(seed))
    return PsiFixture(0.0, T, BrownianPath(T, DT, scale * p.values))


def test_zero_path():
    fix = PsiFixture(0.0, 1.0, BrownianPath(1.0, DT, np.zeros(513)))
    assert psi_value(fix) == 0.0
    assert np.all(psi_minimizer(fix).nodes == 0.0)


def test_linear_path():
    t = np.arange(513) * DT
    fix = PsiFixture(0.0, 1.0, BrownianPath(1.0, DT, t))
    assert psi_value(fix) == pytest.approx(-1 / 24, abs=1e-5)


@pytest.mark.parametrize("seed", range(5))
def test_minimizer_endpoints_and_action(seed):
    fix = _fixture(seed)
    g = psi_minimizer(fix)
    assert abs(g.nodes[0, 0]) <= 1e-8 and abs(g.nodes[-1, 0]) <= 1e-8
    assert abs(psi_action(fix) - psi_value(fix)) <= 1e-3


def test_subinterval_fixture():
    p = sample_path(2.0, DT, 1, np.random.default_rng(9))
    fix = PsiFixture(0.5, 1.5, p)
    g = psi_minimizer(fix)
    assert g.s == 0.5 and abs(g.nodes[-1, 0]) <= 1e-8
    assert abs(psi_action(fix) - psi_value(fix)) <= 1e-3
    with pytest.raises(ParameterError):
        PsiFixture(1.0, 1.0, p)


@given(st.integers(0, 10_000))
def test_psi_nonpositive(seed):
    assert psi_value(_fixture(seed)) <= 1e-9


@given(st.integers(0, 10_000), st.floats(-5, 5))
def test_scale_covariance(seed, c):
    base = psi_value(_fixture(seed))
    assert psi_value(_fixture(seed, scale=c)) == pytest.approx(c * c * base, rel=1e-12, abs=1e-15)


def test_batch_matches_single_fixture():
    vals = psi_batch(1.0, 3, DT, 4, tag="psi")
    for i, v in enumerate(vals):
        p = sample_path(1.0, DT, 1, rng.stream(4, i, rng.PATH_STREAM, "psi"))
        assert v == pytest.approx(psi_value(PsiFixture(0.0, 1.0, p)), rel=1e-12)


def test_mean_identity_small_sample():
    r = psi_mean_identity(1.0, 4000, master_seed=3)
    assert r.target == pytest.approx(-1 / 12)
    assert r.ok


def test_linear_field():
    f = UnboundedLinearField(2.0)
    assert f.value(np.array([[1.5]]))[0, 0] == 3.0
    assert f.gradient(np.array([[7.0]]))[0, 0, 0] == 2.0
    assert f.scaled(0.5, 0.25).slope == 4.0


def test_psi_vs_dp_small(tmp_path):
    lat = symmetric_lattice(3.0, 1 / 64, 1 / 128, 8.0, 1, 1)
    rep = psi_vs_dp(1.0, lat, 3, 7)
    assert rep.n_excluded == 0
    assert rep.fraction_within(0.05) == 1.0
    rep.write_csv(tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().startswith("realization,psi_closed_form,dp_value")
