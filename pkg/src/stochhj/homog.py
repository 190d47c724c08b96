"""Effective Lagrangian and Hamiltonian, enhancement certificates, and the
epsilon-scaling experiments.

All Monte Carlo loops run over realization indices of counter-based streams,
so adding samples never perturbs earlier ones and results do not depend on
the worker count.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from .action import quadrature_nodes, segment_forcing
from .env import FieldSpec, grad_energy, sample_environment, zero_field
from .errors import ParameterError, ResolutionError, StatisticsError, TruncationError
from .hamiltonian import (EffectiveTable, PowerLawHamiltonian, growth_G, legendre_numeric,
                          lower_convex_envelope)
from .hj import InitialDatum, hopf_lax_solve
from .optimizer import LatticeSpec, Sweep, scaled_lagrangian
from .parallel import map_realizations

Z95 = 1.959963984540054
Z95_ONE_SIDED = 1.6448536269514722


def _snap_down(x: float, h: float) -> float:
    return math.floor(x / h + 1e-9) * h


def _snap_up(x: float, h: float) -> float:
    return math.ceil(x / h - 1e-9) * h


@dataclass(frozen=True)
class LatticeTemplate:
    """Lattice steps without a box; boxes are fitted around each query with ``pad``."""

    h: float
    dt: float
    v_max: float
    subsamples: int = 4
    pad: float = 4.0
    env_dt: float | None = None

    @property
    def brownian_dt(self) -> float:
        return self.env_dt if self.env_dt is not None else self.dt / 2

    def box(self, points) -> LatticeSpec:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = tuple(_snap_down(v - self.pad, self.h) for v in pts.min(axis=0))
        hi = tuple(_snap_up(v + self.pad, self.h) for v in pts.max(axis=0))
        return LatticeSpec(lo, hi, self.h, self.dt, self.v_max, self.subsamples)

    def to_dict(self) -> dict:
        return {"h": self.h, "dt": self.dt, "v_max": self.v_max, "subsamples": self.subsamples,
                "pad": self.pad, "env_dt": self.env_dt}


@dataclass(frozen=True)
class SubadditiveSchedule:
    T_list: tuple
    N: int
    velocities: tuple = ((0.0,),)

    def __post_init__(self):
        T = tuple(float(t) for t in self.T_list)
        object.__setattr__(self, "T_list", T)
        object.__setattr__(self, "velocities", tuple(tuple(np.atleast_1d(v).astype(float)) for v in self.velocities))
        if not T or any(b <= a for a, b in zip(T, T[1:])) or T[0] <= 0:
            raise ParameterError("T_list must be positive and strictly increasing")
        if self.N < 2:
            raise ParameterError("N must be at least 2")


@dataclass
class LbarEstimate:
    v: np.ndarray
    value: float
    half_width: float
    se: float
    table: list
    converged: bool
    truncated: int = 0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["T", "mean", "se", "n"])
            for row in self.table:
                w.writerow([repr(row["T"]), repr(row["mean"]), repr(row["se"]), row["n"]])


def _lagrangian_over_horizons(index: int, v, T_list, spec, lattice: LatticeTemplate, ham,
                              master_seed: int, tag: str) -> tuple[list, int]:
    """L(0, T v, 0, T) / T for every T in one sweep, plus a truncation count."""
    v = np.atleast_1d(np.asarray(v, float))
    Tmax = T_list[-1]
    env = sample_environment(spec, Tmax, lattice.brownian_dt, master_seed, index, tag)
    ends = [T * v for T in T_list]
    lat = lattice.box(np.vstack([np.zeros_like(v)] + ends))
    K = [int(round(T / lat.dt)) for T in T_list]
    sweep = Sweep.build(lat, env, ham, 0.0, K[-1])
    V0 = np.full(lat.ncell, np.inf)
    V0[lat.cell_of(np.zeros_like(v))] = 0.0
    _, arg, rec = sweep.run(V0, record=K, track=True)
    out, trunc = [], 0
    for i, (T, y) in enumerate(zip(T_list, ends)):
        cell = lat.cell_of(y)
        val = rec[i][cell]
        if not np.isfinite(val):
            raise ParameterError(f"velocity {v} unreachable under the lattice speed cap")
        cells = replace(sweep, K=K[i]).backtrack(arg[: K[i]], cell)
        trunc += int(lat.on_boundary(cells).any())
        out.append(val / T)
    return out, trunc


def estimate_Lbar(v, schedule: SubadditiveSchedule, spec: FieldSpec, lattice: LatticeTemplate,
                  master_seed: int, ham: PowerLawHamiltonian | None = None, workers: int = 1,
                  tag: str = "lbar") -> LbarEstimate:
    """Monte Carlo means of L(0, T v, 0, T) / T over the schedule."""
    ham = ham or PowerLawHamiltonian(2.0)
    v = np.atleast_1d(np.asarray(v, float))
    T_list = schedule.T_list
    for T in T_list:
        k = T / lattice.dt
        if abs(k - round(k)) > 1e-9 * k:
            raise ParameterError(f"horizon {T:g} is not a multiple of the lattice dt")
    fn = partial(_lagrangian_over_horizons, v=v, T_list=T_list, spec=spec, lattice=lattice, ham=ham,
                 master_seed=master_seed, tag=tag)
    res = map_realizations(fn, range(schedule.N), workers)
    vals = np.array([r[0] for r in res])           # (N, nT)
    trunc = sum(r[1] for r in res)
    if trunc:
        raise TruncationError(f"{trunc} minimizers touched the lattice box; enlarge the padding")
    means = vals.mean(axis=0)
    ses = vals.std(axis=0, ddof=1) / math.sqrt(schedule.N)
    table = [{"T": T, "mean": float(m), "se": float(s), "n": schedule.N} for T, m, s in zip(T_list, means, ses)]
    converged = True
    for a, b in zip(table, table[1:]):
        if abs(a["mean"] - b["mean"]) > 3 * math.hypot(a["se"], b["se"]):
            converged = False
    if not converged:
        warnings.warn("successive horizon means differ by more than 3 combined SE", stacklevel=2)
    return LbarEstimate(v, float(means[-1]), float(Z95 * ses[-1]), float(ses[-1]), table, converged, trunc)


def effective_table(estimates: list, ham: PowerLawHamiltonian | None = None) -> EffectiveTable:
    """EffectiveTable (velocities, L-bar, 95% half-widths) from estimate_Lbar results."""
    ham = ham or PowerLawHamiltonian(2.0)
    V = np.array([np.atleast_1d(e.v) for e in estimates])
    return EffectiveTable(V, np.array([e.value for e in estimates]),
                          np.array([e.half_width for e in estimates]),
                          growth_C=ham.growth_constant())


def effective_hamiltonian(table: EffectiveTable, momenta, ham: PowerLawHamiltonian | None = None,
                          convexify: bool = True) -> EffectiveTable:
    """H-bar = conjugate of the (convexified) sampled L-bar at the given momenta.

    ``Hbar_half_width`` is Hbar - lower bound, where the lower bound uses the
    sample at the dual velocity v(p) (nearest sampled point) with L-bar raised
    by its half-width: H-bar(p) >= p.v - L-bar(v) for every v.
    """
    ham = ham or PowerLawHamiltonian(2.0)
    P = np.asarray(momenta, dtype=float)
    if P.ndim == 1:
        P = P[:, None] if table.d == 1 else P[None, :]
    L = lower_convex_envelope(table.velocities, table.Lbar) if convexify else table.Lbar
    res = legendre_numeric(L, table.velocities, P)
    Hbar = np.atleast_1d(res.value)
    trunc = np.atleast_1d(res.truncated)
    dual = ham.map_v(P)
    near = np.argmin(np.linalg.norm(table.velocities[None, :, :] - dual[:, None, :], axis=2), axis=1)
    lower = np.einsum("pd,pd->p", P, table.velocities[near]) - (table.Lbar[near] + table.half_width[near])
    out = EffectiveTable(table.velocities, table.Lbar, table.half_width, P, Hbar,
                         np.maximum(Hbar - lower, 0.0), trunc, L, table.growth_C)
    if trunc.any():
        warnings.warn("conjugate supremum attained on the velocity-grid boundary", stacklevel=2)
    return out


@dataclass
class EnhancementCertificate:
    v: np.ndarray
    M: float
    delta: float
    N: int
    bound: float
    half_width: float
    se: float
    reference: float
    samples: int

    @property
    def gap(self) -> float:
        return self.reference - self.bound

    @property
    def certified(self) -> bool:
        """Upper confidence limit (one-sided 95%) below H*(v)."""
        return self.bound + Z95_ONE_SIDED * self.se < self.reference

    def to_dict(self) -> dict:
        return {"v": np.atleast_1d(self.v).tolist(), "M": self.M, "delta": self.delta, "N": self.N,
                "bound": self.bound, "half_width": self.half_width, "se": self.se,
                "reference": self.reference, "gap": self.gap, "certified": self.certified,
                "samples": self.samples}


def tent_directions(d: int, n: int = 64) -> np.ndarray:
    """Candidate u in the closed unit ball: u = 0 plus a fixed net.

    d = 1: n evenly spaced points of [-1, 1]; d = 2: n unit directions at
    radii 1/4, 1/2, 3/4, 1.
    """
    if d == 1:
        return np.concatenate([[0.0], np.linspace(-1.0, 1.0, n)])[:, None]
    if d == 2:
        ang = 2 * np.pi * np.arange(n) / n
        ring = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        rad = np.array([0.25, 0.5, 0.75, 1.0])
        return np.vstack([np.zeros((1, 2)), (rad[:, None, None] * ring[None]).reshape(-1, 2)])
    raise ParameterError("tent directions are defined for d <= 2")


def default_tent_parameters(v, spec: FieldSpec, ham: PowerLawHamiltonian,
                            lam: float | None = None) -> tuple[float, float]:
    """(M, delta) from M = 4 (1 + G(v))^2 / E|Df|^4 and delta = c (E|Df|^2)^(1/lam), delta <= M/2."""
    e = grad_energy(spec)
    if e <= 0:
        raise ParameterError("default tent parameters need a nonconstant field")
    lam = 0.45 * spec.kappa if lam is None else lam
    M = 4.0 * (1.0 + growth_G(ham, v)) ** 2 / e ** 2
    base = e ** (1.0 / lam)
    c_bar = min(1.0, 0.5 * M / base)
    return M, c_bar * base


def _tent_realization(index: int, v, M, delta, N, spec, ham, master_seed, env_dt, subsamples, dirs, tag):
    v = np.atleast_1d(np.asarray(v, float))
    env = sample_environment(spec, N * M, env_dt, master_seed, index, tag)
    half = M / 2
    Bq, wq, _ = quadrature_nodes(env.path, 0.0, half, 2 * N, subsamples)
    nd, d = dirs.shape
    total = 0.0
    for k in range(N):
        x0 = k * M * v
        mid = x0 + half * v + delta * dirs                  # (nd, d)
        end = x0 + M * v
        starts = np.vstack([np.broadcast_to(x0, (nd, d)), mid])
        ends = np.vstack([mid, np.broadcast_to(end, (nd, d))])
        segs = np.concatenate([np.full(nd, 2 * k), np.full(nd, 2 * k + 1)])
        forcing = segment_forcing(starts, ends, segs, env.field, Bq, wq, half)
        kin = ham.H_star((ends - starts) / half) * half
        cost = (kin + forcing).reshape(2, nd).sum(axis=0)
        total += float(cost.min())
    return total / (N * M)


def tent_upper_bound(v, M: float | None, delta: float | None, N: int, spec: FieldSpec, master_seed: int,
                     samples: int = 128, ham: PowerLawHamiltonian | None = None, env_dt: float | None = None,
                     subsamples: int = 4, n_dirs: int = 64, workers: int = 1,
                     tag: str = "tent") -> EnhancementCertificate:
    """Upper bound on L-bar(v) from per-block optimized tent perturbations of the straight path."""
    ham = ham or PowerLawHamiltonian(2.0)
    v = np.atleast_1d(np.asarray(v, float))
    if M is None or delta is None:
        M0, d0 = default_tent_parameters(v, spec, ham)
        M = M0 if M is None else M
        delta = d0 if delta is None else delta
    if not (M > 0 and delta >= 0):
        raise ParameterError("M must be positive and delta non-negative")
    if delta > M / 2 * (1 + 1e-12):
        raise ParameterError(f"delta={delta:g} exceeds M/2={M / 2:g}")
    if N < 1 or samples < 2:
        raise ParameterError("need N >= 1 blocks and at least 2 samples")
    env_dt = env_dt if env_dt is not None else M / 16
    dirs = tent_directions(spec.dimension, n_dirs) if delta > 0 else np.zeros((1, spec.dimension))
    fn = partial(_tent_realization, v=v, M=M, delta=delta, N=N, spec=spec, ham=ham,
                 master_seed=master_seed, env_dt=env_dt, subsamples=subsamples, dirs=dirs, tag=tag)
    vals = np.array(map_realizations(fn, range(samples), workers))
    se = float(vals.std(ddof=1) / math.sqrt(samples))
    return EnhancementCertificate(v, float(M), float(delta), N, float(vals.mean()), Z95 * se, se,
                                  float(ham.H_star(v)), samples)


@dataclass
class GapReport:
    p: np.ndarray
    gap: float
    half_width: float
    lower: float
    structural: float

    @property
    def certified(self) -> bool:
        return self.lower > 0


def enhancement_gap(p, profile: EffectiveTable, spec: FieldSpec, ham: PowerLawHamiltonian | None = None,
                    lam: float | None = None) -> GapReport:
    """Measured H-bar(p) - H(p) with its lower confidence bound, and the reference shape
    (E|Df|^2)^(2 + 1/lam) / (1 + G(v(p)))."""
    ham = ham or PowerLawHamiltonian(2.0)
    p = np.atleast_1d(np.asarray(p, float))
    i = int(np.argmin(np.linalg.norm(profile.momenta - p, axis=1)))
    if np.linalg.norm(profile.momenta[i] - p) > 1e-9:
        raise ParameterError("momentum not sampled in the profile")
    H = float(ham.H(p))
    gap = float(profile.Hbar[i]) - H
    hw = float(profile.Hbar_half_width[i])
    lam = 0.45 * spec.kappa if lam is None else lam
    e = grad_energy(spec)
    vp = ham.map_v(p)
    structural = e ** (2 + 1 / lam) / (1 + growth_G(ham, vp)) if e > 0 else 0.0
    return GapReport(p, gap, hw, gap - hw, float(structural))


@dataclass(frozen=True)
class ScalingLattice:
    """Unit-frame steps (h, dt, v_max) and a physical box radius."""

    h: float
    dt: float
    v_max: float
    radius: float
    subsamples: int = 1
    env_dt: float | None = None
    d: int = 1

    @property
    def brownian_dt(self) -> float:
        return self.env_dt if self.env_dt is not None else self.dt / 2

    def for_eps(self, eps: float) -> LatticeSpec:
        if self.h > 1 / 8 * (1 + 1e-12):
            raise ResolutionError(f"unit-frame h={self.h:g} exceeds 1/8, so h_phys > eps/8")
        r = _snap_up(self.radius / eps, self.h)
        return LatticeSpec((-r,) * self.d, (r,) * self.d, self.h, self.dt, self.v_max, self.subsamples)

    def to_dict(self) -> dict:
        return {"h": self.h, "dt": self.dt, "v_max": self.v_max, "radius": self.radius,
                "subsamples": self.subsamples, "env_dt": self.env_dt, "d": self.d}


def _probe_value(index, spec, eps, theta, lattice: ScalingLattice, u0, x, t, ham, master_seed, tag):
    env = sample_environment(spec, t / eps, lattice.brownian_dt, master_seed, index, tag)
    sol = hopf_lax_solve(u0, env, eps, theta, lattice.for_eps(eps), [t], ham)
    return sol.probe(x, t)


def hopf_lax_effective(u0: InitialDatum, x, t: float, Lbar_fn, radius: float = 4.0,
                       n: int = 4001) -> float:
    """min_y u0(y) + t Lbar((x - y) / t) by brute force over a 1-d grid of y."""
    x = float(np.atleast_1d(x)[0])
    y = np.linspace(x - radius, x + radius, n)
    return float(np.min(u0(y[:, None]) + t * Lbar_fn((x - y) / t)))


def extend_lbar(velocities, values):
    """Piecewise-linear interpolant of a sampled convex L-bar, extended by H*-like growth."""
    vs = np.asarray(velocities, float).reshape(-1)
    ls = np.asarray(values, float)
    order = np.argsort(vs)
    vs, ls = vs[order], ls[order]
    sl, sr = (ls[1] - ls[0]) / (vs[1] - vs[0]), (ls[-1] - ls[-2]) / (vs[-1] - vs[-2])

    def fn(v):
        v = np.asarray(v, float)
        out = np.interp(v, vs, ls)
        out = np.where(v < vs[0], ls[0] + sl * (v - vs[0]) + 0.5 * (v - vs[0]) ** 2, out)
        return np.where(v > vs[-1], ls[-1] + sr * (v - vs[-1]) + 0.5 * (v - vs[-1]) ** 2, out)
    return fn


@dataclass
class ScalingRow:
    theta: float
    eps: float
    median: float
    se_median: float
    reference: float
    distance: float


@dataclass
class ScalingReport:
    rows: list
    classification: dict = field(default_factory=dict)

    def for_theta(self, theta: float) -> list:
        return [r for r in self.rows if abs(r.theta - theta) < 1e-12]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["theta", "eps", "median", "se_median", "reference", "distance"])
            for r in self.rows:
                w.writerow([repr(r.theta), repr(r.eps), repr(r.median), repr(r.se_median),
                            repr(r.reference), repr(r.distance)])


def median_se(vals: np.ndarray) -> float:
    """Large-sample standard error of the median from the order-statistic interval."""
    n = len(vals)
    if n < 10:
        raise StatisticsError("need at least 10 samples for a median standard error")
    s = np.sort(vals)
    k = int(math.floor(0.5 * n - Z95 * math.sqrt(n) / 2))
    j = int(math.ceil(0.5 * n + Z95 * math.sqrt(n) / 2))
    k, j = max(k, 0), min(j, n - 1)
    return float((s[j] - s[k]) / (2 * Z95))


def scaling_study(theta_list, eps_list, probe, u0: InitialDatum, spec: FieldSpec,
                  lattice: ScalingLattice, samples: int, master_seed: int,
                  ham: PowerLawHamiltonian | None = None, Hbar_solution: float | None = None,
                  workers: int = 1, tag: str = "scaling") -> ScalingReport:
    """Median of u_eps(x, t) over realizations for each (theta, eps), with trend classification.

    References: the noiseless solution (same lattice) for theta > 1/2 and the
    homogenized value ``Hbar_solution`` (if given) for theta = 1/2.
    """
    ham = ham or PowerLawHamiltonian(2.0)
    x, t = probe
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ParameterError("eps_list must be decreasing")
    lattice.for_eps(eps_list[-1])
    rows = []
    zero = zero_field(spec.dimension, spec.channels)
    for theta in theta_list:
        for eps in eps_list:
            fn = partial(_probe_value, spec=spec, eps=eps, theta=theta, lattice=lattice, u0=u0,
                         x=x, t=t, ham=ham, master_seed=master_seed, tag=tag)
            vals = np.array(map_realizations(fn, range(samples), workers))
            med = float(np.median(vals))
            noiseless = _probe_value(0, zero, eps, theta, lattice, u0, x, t, ham, master_seed, tag)
            if abs(theta - 0.5) < 1e-12 and Hbar_solution is not None:
                ref = Hbar_solution
            else:
                ref = noiseless
            rows.append(ScalingRow(theta, eps, med, median_se(vals), ref, abs(med - ref)))
    rep = ScalingReport(rows)
    for theta in theta_list:
        rep.classification[theta] = classify_scaling(rep.for_theta(theta), theta)
    return rep


def classify_scaling(rows: list, theta: float) -> dict:
    meds = np.array([r.median for r in rows])
    dist = np.array([r.distance for r in rows])
    se = np.array([r.se_median for r in rows])
    if theta > 0.5:
        return {"regime": "noise vanishes", "decreasing": bool(dist[-1] < dist[0]),
                "final_distance": float(dist[-1])}
    if theta < 0.5:
        steps = np.diff(meds)
        return {"regime": "diverges", "monotone": bool(np.all(steps <= 2 * np.hypot(se[1:], se[:-1]))),
                "drop": float(meds[0] - meds[-1])}
    return {"regime": "homogenizes", "final_distance": float(dist[-1]), "final_se": float(se[-1])}


def holder_seminorm(values: np.ndarray, xs: np.ndarray, ts: np.ndarray, theta: float = 0.3,
                    q: float = 2.0) -> float:
    """max over distinct pairs of |u(x,s) - u(y,t)| / (|x-y|^theta + |s-t|^(theta/q)).

    ``values`` has shape (len(ts), len(xs)).
    """
    X, Tm = np.meshgrid(xs, ts)
    U = values.reshape(-1)
    X, Tm = X.reshape(-1), Tm.reshape(-1)
    du = np.abs(U[:, None] - U[None, :])
    den = np.abs(X[:, None] - X[None, :]) ** theta + np.abs(Tm[:, None] - Tm[None, :]) ** (theta / q)
    off = den > 0
    return float(np.max(du[off] / den[off]))


@dataclass
class TailsReport:
    """Per-eps seminorms of u_eps and of its fluctuation u_eps - median_omega(u_eps).

    ``baseline`` holds the noise-free seminorm per eps.  The excess of a
    realization is the seminorm of its deviation from the pointwise ensemble
    median, which removes the deterministic (homogenized) profile.
    """

    eps_list: list
    baseline: list
    seminorms: list
    excess: list
    medians: list
    median_excess: list
    slope: float

    def survival(self, i: int, lams) -> np.ndarray:
        s = np.asarray(self.excess[i])
        return np.array([np.mean(s > lam) for lam in lams])

    @property
    def slope_ok(self) -> bool:
        return 0.35 <= self.slope <= 0.65

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "baseline", "median_seminorm", "median_excess"])
            for e, b, m, x in zip(self.eps_list, self.baseline, self.medians, self.median_excess):
                w.writerow([repr(e), repr(b), repr(m), repr(x)])


def _solution_on_grid(index, spec, eps, lattice: ScalingLattice, u0, xs, ts, ham, master_seed, tag):
    env = sample_environment(spec, float(ts[-1]) / eps, lattice.brownian_dt, master_seed, index, tag)
    sol = hopf_lax_solve(u0, env, eps, 0.5, lattice.for_eps(eps), list(ts), ham)
    return np.array([np.interp(xs, sol.points[:, 0], sol.at(t)) for t in ts])


def observation_grid(R: float, spacing: float = 0.125, t_spacing: float = 0.125):
    """Coarse, eps-independent points in [-R, R] x [1/R, R] (times on the t_spacing grid)."""
    n = int(math.floor(R / spacing + 1e-9))
    xs = spacing * np.arange(-n, n + 1)
    t0 = math.ceil((1 / R) / t_spacing - 1e-9) * t_spacing
    ts = np.arange(t0, R + 1e-9, t_spacing)
    return xs, ts


def regularity_tails(eps_list, R: float, samples: int, lattice: ScalingLattice, spec: FieldSpec,
                     master_seed: int, u0: InitialDatum | None = None,
                     ham: PowerLawHamiltonian | None = None, theta_reg: float = 0.3,
                     spacing: float = 0.125, workers: int = 1, tag: str = "tails") -> TailsReport:
    """Hoelder seminorms of u_eps (theta = 1/2) on a fixed coarse grid; slope of the median excess."""
    ham = ham or PowerLawHamiltonian(2.0)
    if R <= 1:
        raise ParameterError("R must exceed 1")
    if samples < 100:
        raise StatisticsError("regularity tails need at least 100 samples")
    u0 = u0 or InitialDatum.bump(1.0, 0.0, 0.5)
    xs, ts = observation_grid(R, spacing)
    zero = zero_field(spec.dimension, spec.channels)
    base, semis, excess, meds, mex = [], [], [], [], []
    for eps in eps_list:
        b = _solution_on_grid(0, zero, eps, lattice, u0, xs, ts, ham, master_seed, tag)
        fn = partial(_solution_on_grid, spec=spec, eps=eps, lattice=lattice, u0=u0, xs=xs, ts=ts, ham=ham,
                     master_seed=master_seed, tag=tag)
        U = np.array(map_realizations(fn, range(samples), workers))
        centre = np.median(U, axis=0)
        s = np.array([holder_seminorm(u, xs, ts, theta_reg, ham.q) for u in U])
        x = np.array([holder_seminorm(u - centre, xs, ts, theta_reg, ham.q) for u in U])
        base.append(holder_seminorm(b, xs, ts, theta_reg, ham.q))
        semis.append(s)
        excess.append(x)
        meds.append(float(np.median(s)))
        mex.append(float(np.median(x)))
    ex = np.array(mex)
    slope = float("nan") if np.any(ex <= 0) else float(np.polyfit(np.log(eps_list), np.log(ex), 1)[0])
    return TailsReport(list(eps_list), base, semis, excess, meds, mex, slope)


@dataclass
class ConvergenceReport:
    eps_list: list
    discrepancy: list
    se: list

    @property
    def decreasing(self) -> bool:
        d, s = self.discrepancy, self.se
        return all(b <= a + 3 * math.hypot(sa, sb) for a, b, sa, sb in zip(d, d[1:], s, s[1:]))

    def slope(self) -> float:
        return float(np.polyfit(np.log(self.eps_list), np.log(self.discrepancy), 1)[0])


def homog_convergence(probes, eps_list, spec: FieldSpec, lattice: ScalingLattice, samples: int,
                      master_seed: int, Lbar_fn, ham: PowerLawHamiltonian | None = None,
                      workers: int = 1, tag: str = "homog") -> ConvergenceReport:
    """max over probes (x, y, s, t) of mean |L_eps - (t - s) Lbar((y - x) / (t - s))|."""
    ham = ham or PowerLawHamiltonian(2.0)
    disc, ses = [], []
    for eps in eps_list:
        per_probe = []
        for x, y, s, t in probes:
            fn = partial(_homog_sample, spec=spec, eps=eps, lattice=lattice, probe=(x, y, s, t), ham=ham,
                         master_seed=master_seed, tag=tag)
            L = np.array(map_realizations(fn, range(samples), workers))
            ref = (t - s) * float(np.ravel(Lbar_fn((np.atleast_1d(y) - np.atleast_1d(x)) / (t - s)))[0])
            dev = np.abs(L - ref)
            per_probe.append((float(dev.mean()), float(dev.std(ddof=1) / math.sqrt(samples))))
        worst = max(per_probe, key=lambda m: m[0])
        disc.append(worst[0])
        ses.append(worst[1])
    return ConvergenceReport(list(eps_list), disc, ses)


def _homog_sample(index, spec, eps, lattice: ScalingLattice, probe, ham, master_seed, tag):
    x, y, s, t = probe
    env = sample_environment(spec, t / eps, lattice.brownian_dt, master_seed, index, tag)
    return scaled_lagrangian(x, y, s, t, eps, 0.5, env, lattice.for_eps(eps), ham).value
