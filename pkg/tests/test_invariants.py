from __future__ import annotations

import numpy as np
import pytest

from stochhj.hamiltonian import EffectiveTable, PowerLawHamiltonian
from stochhj.invariants import (duality_suite, fenchel_young, hamiltonian_biconjugation, lbar_convexity,
                                table_biconjugation)


@pytest.mark.parametrize("q,c", [(1.5, 1.0), (2.0, 1.0), (3.0, 0.5), (4.0, 2.0)])
def test_hamiltonian_invariants(q, c):
    ham = PowerLawHamiltonian(q, c)
    for d in (1, 2):
        assert fenchel_young(ham, d).ok
    assert hamiltonian_biconjugation(ham).ok


def test_table_invariants_pass_on_convex_and_flag_concave():
    v = np.linspace(-1.5, 1.5, 7)
    good = EffectiveTable(v, 0.5 * v ** 2 - 0.1, np.full(7, 0.01))
    assert table_biconjugation(good).ok and lbar_convexity(good).ok
    bad = EffectiveTable(v, -0.5 * v ** 2, np.full(7, 0.01))
    rep = lbar_convexity(bad)
    assert not rep.ok and rep.to_dict()["violations"]


def test_two_dimensional_table():
    ax = np.linspace(-1, 1, 5)
    V = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
    tab = EffectiveTable(V, 0.5 * np.sum(V ** 2, axis=1), np.zeros(len(V)))
    reports = duality_suite(PowerLawHamiltonian(2.0), tab, d=2)
    assert [r.name for r in reports] == ["fenchel_young", "hamiltonian_biconjugation",
                                         "table_biconjugation", "lbar_convexity"]
    assert all(r.ok for r in reports)
