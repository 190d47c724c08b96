"""Duality invariants: Fenchel-Young, biconjugation, convexity of sampled L-bar."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hamiltonian import (EffectiveTable, PowerLawHamiltonian, convexity_violations, legendre_numeric,
                          lower_convex_envelope)

FY_TOL = 1e-10


@dataclass
class InvariantReport:
    name: str
    checked: int
    violations: list = field(default_factory=list)
    detail: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"name": self.name, "checked": self.checked, "ok": self.ok,
                "violations": [list(map(_plain, v)) if isinstance(v, tuple) else _plain(v)
                               for v in self.violations],
                "detail": {k: _plain(v) for k, v in self.detail.items()}}


def _plain(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return x


def fenchel_young(ham: PowerLawHamiltonian, d: int = 1, n: int = 1000, seed: int = 0,
                  radius: float = 3.0) -> InvariantReport:
    """p.v <= H(p) + H*(v) on random pairs, with equality at v = DH(p)."""
    gen = np.random.default_rng(seed)
    P = gen.uniform(-radius, radius, (n, d))
    V = gen.uniform(-radius, radius, (n, d))
    gap = ham.H(P) + ham.H_star(V) - np.einsum("nd,nd->n", P, V)
    bad = [("inequality", i, float(g)) for i, g in enumerate(gap) if g < -FY_TOL * (1 + abs(g))]
    dual = ham.map_v(P)
    eq = ham.H(P) + ham.H_star(dual) - np.einsum("nd,nd->n", P, dual)
    scale = 1.0 + ham.H(P)
    bad += [("equality", i, float(e)) for i, e in enumerate(eq) if abs(e) > FY_TOL * scale[i]]
    return InvariantReport("fenchel_young", 2 * n, bad,
                           {"min_gap": float(gap.min()), "max_equality_error": float(np.abs(eq).max())})


def hamiltonian_biconjugation(ham: PowerLawHamiltonian, p_max: float = 2.0, n_p: int = 9,
                              tol: float = 1e-2) -> InvariantReport:
    """Numeric conjugate of H* on a 1-d grid recovers H at |p| <= p_max."""
    R = ham.legendre_radius(p_max)
    grid = np.linspace(-R, R, 20001)[:, None]
    P = np.linspace(-p_max, p_max, n_p)[:, None]
    res = legendre_numeric(ham.H_star, grid, P)
    err = np.abs(np.atleast_1d(res.value) - ham.H(P))
    bad = [("H**", float(p[0]), float(e)) for p, e in zip(P, err) if e > tol]
    bad += [("truncated", float(p[0]), 0.0) for p, t in zip(P, np.atleast_1d(res.truncated)) if t]
    return InvariantReport("hamiltonian_biconjugation", n_p, bad, {"max_error": float(err.max())})


def table_biconjugation(table: EffectiveTable, n_p: int = 4001) -> InvariantReport:
    """Conjugating the convexified L-bar sample twice returns it on every sample point.

    Momenta span the chord slopes of the sample (1-d) or a box of the same
    extent (2-d); the tolerance is the loss from the momentum grid step,
    (dp / 2) * diameter of the velocity set.
    """
    V = table.velocities
    L = lower_convex_envelope(V, table.Lbar)
    dist = np.linalg.norm(V[:, None] - V[None], axis=2)
    diam = float(dist.max())
    if diam == 0:
        return InvariantReport("table_biconjugation", 0)
    off = dist > 0
    span = float(np.max(np.abs(L[:, None] - L[None])[off] / dist[off])) + 1.0
    if table.d == 1:
        P = np.linspace(-span, span, n_p)[:, None]
        dp = P[1, 0] - P[0, 0]
    else:
        side = int(round(np.sqrt(n_p)))
        ax = np.linspace(-span, span, side)
        P = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1).reshape(-1, 2)
        dp = (ax[1] - ax[0]) * np.sqrt(2)
    Hs = np.atleast_1d(legendre_numeric(L, V, P).value)
    back = np.atleast_1d(legendre_numeric(Hs, P, V).value)
    err = np.abs(back - L)
    tol = float(0.5 * dp * diam + 1e-12)
    bad = [("L**", i, float(e)) for i, e in enumerate(err) if e > tol]
    return InvariantReport("table_biconjugation", len(V), bad, {"max_error": float(err.max()), "tol": tol})


def lbar_convexity(table: EffectiveTable, n_sigma: float = 1.0) -> InvariantReport:
    v = convexity_violations(table.velocities, table.Lbar, table.half_width, n_sigma)
    return InvariantReport("lbar_convexity", len(table.velocities), v)


def duality_suite(ham: PowerLawHamiltonian, table: EffectiveTable | None = None, d: int = 1,
                  seed: int = 0) -> list[InvariantReport]:
    out = [fenchel_young(ham, d, seed=seed), hamiltonian_biconjugation(ham)]
    if table is not None:
        out += [table_biconjugation(table), lbar_convexity(table)]
    return out
