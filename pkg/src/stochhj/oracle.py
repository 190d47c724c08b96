"""Closed-form fixture for quadratic kinetic cost with the linear field f(x) = x.

With H*(v) = v^2/2 and f(x) = x the action of a loop gamma_a = gamma_b = 0 is
int (gamma'^2/2 - gamma' B) dr, minimized by gamma' = B - avg(B), giving

    psi([a, b)) = 1/2 [ (int_a^b B)^2 / (b - a) - int_a^b B^2 ].

Its mean is -(b - a)^2 / 12, so psi / (b - a) is unbounded in the interval
length.  The field is not bounded in C^1 and exists only in this module.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .action import DiscretePath, total_action
from .env import BrownianPath, RandomEnvironment, sample_path
from .errors import ParameterError
from .hamiltonian import PowerLawHamiltonian
from .optimizer import LatticeSpec, descent_refine, dp_lagrangian

QUADRATIC = PowerLawHamiltonian(2.0)


@dataclass(frozen=True)
class UnboundedLinearField:
    """f(x) = slope * x in d = m = 1."""

    slope: float = 1.0

    d = 1
    m = 1

    def value(self, x) -> np.ndarray:
        return self.slope * np.asarray(x, dtype=float)

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.full(x.shape + (1,), self.slope)

    def hessian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape + (1, 1))

    def scaled(self, amplitude: float, length: float) -> "UnboundedLinearField":
        return UnboundedLinearField(self.slope * amplitude / length)


@dataclass(frozen=True)
class PsiFixture:
    a: float
    b: float
    path: BrownianPath
    subsamples: int = 1

    def __post_init__(self):
        if not self.b > self.a:
            raise ParameterError("psi fixture needs b > a")
        if self.path.m != 1:
            raise ParameterError("psi fixture needs a scalar path")
        self.path.index_of(self.a)
        self.path.index_of(self.b)

    def window(self) -> np.ndarray:
        i, j = self.path.index_of(self.a), self.path.index_of(self.b)
        return self.path.values[i:j + 1, 0]

    def environment(self) -> RandomEnvironment:
        return RandomEnvironment(UnboundedLinearField(), self.path)


def _trapz(y: np.ndarray, dx: float) -> float:
    return float(dx * (y.sum() - 0.5 * (y[0] + y[-1])))


def psi_value(fix: PsiFixture) -> float:
    B = fix.window()
    dt = fix.path.dt
    I1 = _trapz(B, dt)
    I2 = _trapz(B * B, dt)
    return 0.5 * (I1 * I1 / (fix.b - fix.a) - I2)


def psi_minimizer(fix: PsiFixture) -> DiscretePath:
    """gamma*_t = int_a^t (B - avg B) ds on the Brownian grid, by cumulative trapezoid."""
    B = fix.window()
    dt = fix.path.dt
    avg = _trapz(B, dt) / (fix.b - fix.a)
    g = B - avg
    nodes = np.concatenate([[0.0], np.cumsum(0.5 * dt * (g[1:] + g[:-1]))])
    return DiscretePath(fix.a, fix.b, nodes[:, None])


def psi_action(fix: PsiFixture) -> float:
    """Action of the closed-form minimizer evaluated by the generic action code."""
    path = psi_minimizer(fix)
    return total_action(path, fix.environment(), QUADRATIC, fix.subsamples).total


def psi_batch(T: float, n: int, dt: float, master_seed: int, tag: str = "psi",
              start: int = 0) -> np.ndarray:
    """psi([0, T)) for realizations start..start+n-1 (closed form, vectorized)."""
    steps = round(T / dt)
    B = np.empty((n, steps + 1))
    for i in range(n):
        gen = rng.stream(master_seed, start + i, rng.PATH_STREAM, tag)
        B[i] = sample_path(T, dt, 1, gen).values[:, 0]
    I1 = dt * (B.sum(axis=1) - 0.5 * (B[:, 0] + B[:, -1]))
    B2 = B * B
    I2 = dt * (B2.sum(axis=1) - 0.5 * (B2[:, 0] + B2[:, -1]))
    return 0.5 * (I1 * I1 / T - I2)


@dataclass
class PsiMeanResult:
    T: float
    n: int
    mean: float
    se: float
    target: float

    @property
    def ok(self) -> bool:
        return abs(self.mean - self.target) <= 3 * self.se + 1e-3


def psi_mean_identity(T: float, n: int = 20000, dt: float | None = None,
                      master_seed: int = 0) -> PsiMeanResult:
    """Monte Carlo mean of psi([0, T)) / T against -T / 12."""
    dt = T / 512 if dt is None else dt
    vals = psi_batch(T, n, dt, master_seed, tag=f"psi-mean-{T!r}") / T
    return PsiMeanResult(T, n, float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n)), -T / 12)


@dataclass
class PsiRow:
    realization: int
    psi: float
    dp_value: float
    relative_error: float
    sup_distance: float
    excluded: bool


@dataclass
class PsiReport:
    T: float
    rows: list = field(default_factory=list)

    @property
    def included(self) -> list:
        return [r for r in self.rows if not r.excluded]

    @property
    def n_excluded(self) -> int:
        return len(self.rows) - len(self.included)

    def fraction_within(self, rel: float = 0.05) -> float:
        rows = self.included
        return sum(r.relative_error <= rel for r in rows) / max(1, len(rows))

    def fraction_path_within(self, dist: float = 0.05) -> float:
        rows = self.included
        return sum(r.sup_distance <= dist for r in rows) / max(1, len(rows))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["realization", "psi_closed_form", "dp_value", "relative_error",
                        "sup_distance", "excluded_flag"])
            for r in self.rows:
                w.writerow([r.realization, repr(r.psi), repr(r.dp_value), repr(r.relative_error),
                            repr(r.sup_distance), int(r.excluded)])


def psi_case(T: float, lattice: LatticeSpec, master_seed: int, index: int,
             env_dt: float = 1 / 512, iterations: int = 200,
             subdivide: int = 1) -> tuple[PsiRow, DiscretePath, DiscretePath]:
    gen = rng.stream(master_seed, index, rng.PATH_STREAM, "psi")
    fix = PsiFixture(0.0, T, sample_path(T, env_dt, 1, gen), lattice.subsamples)
    env = fix.environment()
    est = dp_lagrangian(0.0, 0.0, 0.0, T, env, lattice, QUADRATIC)
    ref = descent_refine(est, env, QUADRATIC, iterations, subdivide=subdivide)
    psi = psi_value(fix)
    star = psi_minimizer(fix)
    on_grid = np.interp(ref.minimizer.times, star.times, star.nodes[:, 0])
    dist = float(np.max(np.abs(ref.minimizer.nodes[:, 0] - on_grid)))
    row = PsiRow(index, psi, ref.value, abs(ref.value - psi) / abs(psi), dist,
                 bool(est.flags["truncated"]))
    return row, ref.minimizer, star


def psi_vs_dp(T: float, lattice: LatticeSpec, samples: int, master_seed: int,
              env_dt: float = 1 / 512, iterations: int = 200,
              subdivide: int | None = None) -> PsiReport:
    """DP plus descent against the closed form over ``samples`` realizations.

    By default the descent polishes at the Brownian resolution
    (``subdivide = lattice.dt / env_dt``).
    """
    if subdivide is None:
        subdivide = max(1, round(lattice.dt / env_dt))
    rep = PsiReport(T)
    for i in range(samples):
        rep.rows.append(psi_case(T, lattice, master_seed, i, env_dt, iterations, subdivide)[0])
    return rep
