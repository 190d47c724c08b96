"""Random Lagrangian by dynamic programming on a space-time lattice.

The lattice restricts paths to cell-to-cell moves of at most ``v_max * dt``
per time slice.  Every edge is a straight segment whose forcing cost is the
same trapezoid quadrature used by :mod:`stochhj.action`, so the DP value of a
backtracked path equals its recomputed action up to summation order.
"""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import kernels
from ._kernels_py import edge_costs
from .action import (ActionBreakdown, DiscretePath, action_and_gradient, quadrature_nodes,
                     segment_forcing, total_action)
from .env import rescale_path
from .errors import InfeasibleError, InvariantError, ParameterError
from .hamiltonian import PowerLawHamiltonian

_TOL = 1e-9


@dataclass(frozen=True)
class LatticeSpec:
    """Axis-aligned box [lo, hi] with spatial step h, time step dt and speed cap."""

    lo: tuple
    hi: tuple
    h: float
    dt: float
    v_max: float
    subsamples: int = 4

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi):
            raise ParameterError("box corners have different dimensions")
        if len(lo) not in (1, 2):
            raise ParameterError(f"lattice DP supports d in {{1, 2}}, got d={len(lo)}")
        if not (self.h > 0 and self.dt > 0 and self.v_max > 0):
            raise ParameterError("h, dt and v_max must be positive")
        if self.subsamples < 1:
            raise ParameterError("subsamples must be at least 1")
        if self.v_max * self.dt < self.h * (1 - _TOL):
            raise ParameterError("v_max * dt must be at least h (one cell per step)")
        for a, b in zip(lo, hi):
            n = (b - a) / self.h
            if b <= a or abs(n - round(n)) > 1e-7 * max(1.0, n):
                raise ParameterError(f"box side [{a:g}, {b:g}] is not a multiple of h={self.h:g}")

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(round((b - a) / self.h)) + 1 for a, b in zip(self.lo, self.hi))

    @property
    def n1(self) -> int:
        return self.shape[0]

    @property
    def n2(self) -> int:
        return self.shape[1] if self.d == 2 else 1

    @property
    def ncell(self) -> int:
        return self.n1 * self.n2

    @property
    def reach(self) -> int:
        return int(math.floor(self.v_max * self.dt / self.h * (1 + 1e-12)))

    def offsets(self) -> np.ndarray:
        """Admissible per-slice moves as an (noff, 2) int64 array.

        Ordered by decreasing flat displacement, i.e. ascending source index,
        so the strict-less tie-break in the sweep picks the lowest source cell.
        """
        r = self.reach
        rng2 = range(-r, r + 1) if self.d == 2 else [0]
        lim = (self.v_max * self.dt / self.h) ** 2 * (1 + 1e-12)
        offs = [(a, b) for a in range(-r, r + 1) for b in rng2 if a * a + b * b <= lim]
        offs.sort(key=lambda o: -(o[0] * self.n2 + o[1]))
        return np.array(offs, dtype=np.int64).reshape(-1, 2)

    def coords(self, flat: np.ndarray) -> np.ndarray:
        """Positions of flat cell indices, shape (..., d)."""
        flat = np.asarray(flat)
        i1, i2 = np.divmod(flat, self.n2)
        out = [self.lo[0] + i1 * self.h]
        if self.d == 2:
            out.append(self.lo[1] + i2 * self.h)
        return np.stack(out, axis=-1).astype(float)

    def points(self) -> np.ndarray:
        return self.coords(np.arange(self.ncell))

    def cell_of(self, x) -> int:
        """Flat index of the lattice node at x; raises if x is off-node or outside."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.size != self.d:
            raise ParameterError(f"point has dimension {x.size}, lattice has {self.d}")
        idx = []
        for xi, a, n in zip(x, self.lo, self.shape):
            u = (xi - a) / self.h
            i = int(round(u))
            if abs(u - i) > 1e-6:
                raise ParameterError(f"point {xi:g} is not a lattice node")
            if not 0 <= i < n:
                raise ParameterError(f"point {xi:g} lies outside the lattice box")
            idx.append(i)
        return idx[0] * self.n2 + (idx[1] if self.d == 2 else 0)

    def on_boundary(self, flat: np.ndarray) -> np.ndarray:
        i1, i2 = np.divmod(np.asarray(flat), self.n2)
        out = (i1 == 0) | (i1 == self.n1 - 1)
        if self.d == 2:
            out |= (i2 == 0) | (i2 == self.n2 - 1)
        return out

    def margin_ok(self, x, y, s: float, t: float) -> bool:
        """Whether both endpoints sit at least v_max (t - s) / 2 inside the box."""
        m = self.v_max * (t - s) / 2
        for p in (np.atleast_1d(x), np.atleast_1d(y)):
            for pi, a, b in zip(p, self.lo, self.hi):
                if pi - a < m - _TOL or b - pi < m - _TOL:
                    return False
        return True

    def scaled(self, eps: float) -> "LatticeSpec":
        """The same lattice in coordinates multiplied by eps (speeds unchanged)."""
        return LatticeSpec(tuple(a * eps for a in self.lo), tuple(b * eps for b in self.hi),
                           self.h * eps, self.dt * eps, self.v_max, self.subsamples)

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi), "h": self.h, "dt": self.dt,
                "v_max": self.v_max, "subsamples": self.subsamples}

    @classmethod
    def from_dict(cls, data: dict) -> "LatticeSpec":
        return cls(**data)


def symmetric_lattice(radius: float, h: float, dt: float, v_max: float, d: int = 1,
                      subsamples: int = 4) -> LatticeSpec:
    return LatticeSpec((-radius,) * d, (radius,) * d, h, dt, v_max, subsamples)


@dataclass
class Sweep:
    """Precomputed edge data for K slices starting at time s."""

    lattice: LatticeSpec
    s: float
    K: int
    offsets: np.ndarray
    kin: np.ndarray
    vel: np.ndarray
    F: np.ndarray
    DF: np.ndarray
    Bq: np.ndarray
    wq: np.ndarray
    J: int
    N2: int
    amplitude: float

    @classmethod
    def build(cls, lattice: LatticeSpec, env, ham, s: float, K: int,
              amplitude: float = 1.0) -> "Sweep":
        if env.field.d != lattice.d:
            raise ParameterError("field and lattice dimensions differ")
        Bq, wq, J = quadrature_nodes(env.path, s, lattice.dt, K, lattice.subsamples)
        offsets = lattice.offsets()
        vel = np.ascontiguousarray(offsets[:, : lattice.d] * (lattice.h / lattice.dt), dtype=float)
        kin = np.ascontiguousarray(ham.H_star(vel) * lattice.dt, dtype=float)
        axes = [a + np.arange((n - 1) * J + 1) * (lattice.h / J) for a, n in zip(lattice.lo, lattice.shape)]
        N2 = len(axes[1]) if lattice.d == 2 else 1
        pos = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lattice.d)
        F = np.ascontiguousarray(env.field.value(pos), dtype=float)
        DF = np.ascontiguousarray(env.field.gradient(pos), dtype=float)
        return cls(lattice, s, K, offsets, kin, vel, F, DF, Bq, wq, J, N2, float(amplitude))

    def _args(self):
        lat = self.lattice
        return (lat.n1, lat.n2, self.offsets, self.kin, self.vel, self.F, self.DF,
                self.Bq, self.wq, self.J, self.N2, self.amplitude)

    def run(self, V0: np.ndarray, record=None, track: bool = False, backend: str | None = None):
        """Min-plus sweep; returns (V_K, argmin offsets (K, ncell), recorded slices)."""
        rec = np.zeros(self.K + 1, dtype=np.int32)
        if record is not None:
            rec[np.asarray(record, dtype=int)] = 1
        fn = kernels.dp_sweep if backend is None else kernels.get_backend(backend)
        n1, n2, *rest = self._args()
        V0 = np.ascontiguousarray(V0, dtype=float)
        return fn(V0, n1, n2, *rest, rec, bool(track))

    def edge_costs(self, k: int) -> np.ndarray:
        n1, n2, *rest = self._args()
        return edge_costs(k, n1, n2, *rest)

    def backtrack(self, arg: np.ndarray, end: int) -> np.ndarray:
        """Flat cell indices of the argmin path ending at ``end``, shape (K+1,)."""
        cells = np.empty(self.K + 1, dtype=np.int64)
        cells[self.K] = end
        n2 = self.lattice.n2
        for k in range(self.K - 1, -1, -1):
            o = arg[k, cells[k + 1]]
            if o < 0:
                raise InfeasibleError("backtrack reached an unreachable cell")
            cells[k] = cells[k + 1] - (self.offsets[o, 0] * n2 + self.offsets[o, 1])
        return cells


@dataclass
class LagrangianEstimate:
    value: float
    minimizer: DiscretePath
    breakdown: ActionBreakdown
    method: str
    x: np.ndarray
    y: np.ndarray
    s: float
    t: float
    lattice: LatticeSpec | None = None
    amplitude: float = 1.0
    flags: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "value": self.value,
            "method": self.method,
            "x": np.atleast_1d(self.x).tolist(),
            "y": np.atleast_1d(self.y).tolist(),
            "s": self.s,
            "t": self.t,
            "breakdown": {"kinetic": self.breakdown.kinetic, "forcing": self.breakdown.forcing,
                          "total": self.breakdown.total},
            "lattice": None if self.lattice is None else self.lattice.to_dict(),
            "amplitude": self.amplitude,
            "flags": self.flags,
        }, indent=2)


def _slices(lattice: LatticeSpec, s: float, t: float) -> int:
    K = (t - s) / lattice.dt
    if t <= s or abs(K - round(K)) > 1e-7 * max(1.0, K):
        raise ParameterError(f"(t - s) = {t - s:g} is not a positive multiple of dt={lattice.dt:g}")
    return int(round(K))


def _flags(lattice: LatticeSpec, cells: np.ndarray, x, y, s, t) -> dict:
    steps = np.diff(lattice.coords(cells), axis=0)
    speeds = np.linalg.norm(steps, axis=1) / lattice.dt
    flags = {
        "truncated": bool(lattice.on_boundary(cells).any()),
        "cap_saturated": bool(speeds.size and speeds.max() >= lattice.reach * lattice.h / lattice.dt * (1 - 1e-12)),
        "margin_ok": lattice.margin_ok(x, y, s, t),
    }
    if flags["cap_saturated"]:
        warnings.warn("DP minimizer saturates the speed cap; consider a larger v_max", stacklevel=3)
    return flags


def dp_lagrangian(x, y, s: float, t: float, env, lattice: LatticeSpec,
                  ham: PowerLawHamiltonian | None = None, amplitude: float = 1.0,
                  backend: str | None = None) -> LagrangianEstimate:
    """L(x, y, s, t) restricted to lattice paths, with the backtracked minimizer."""
    ham = ham or PowerLawHamiltonian(2.0)
    K = _slices(lattice, s, t)
    src, dst = lattice.cell_of(x), lattice.cell_of(y)
    sweep = Sweep.build(lattice, env, ham, s, K, amplitude)
    V0 = np.full(lattice.ncell, np.inf)
    V0[src] = 0.0
    V, arg, _ = sweep.run(V0, track=True, backend=backend)
    if not np.isfinite(V[dst]):
        raise InfeasibleError("endpoint unreachable under the speed cap")
    cells = sweep.backtrack(arg, dst)
    path = DiscretePath(s, t, lattice.coords(cells))
    br = total_action(path, env, ham, lattice.subsamples, amplitude)
    xa, ya = np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(y, float))
    flags = _flags(lattice, cells, xa, ya, s, t)
    flags["dp_value"] = float(V[dst])
    return LagrangianEstimate(br.total, path, br, "dp", xa, ya, s, t, lattice, amplitude, flags)


def straight_line(x, y, s: float, t: float, env, ham: PowerLawHamiltonian, K: int,
                  subsamples: int = 4, amplitude: float = 1.0) -> LagrangianEstimate:
    xa, ya = np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(y, float))
    frac = np.arange(K + 1)[:, None] / K
    path = DiscretePath(s, t, xa + frac * (ya - xa))
    br = total_action(path, env, ham, subsamples, amplitude)
    return LagrangianEstimate(br.total, path, br, "straight-line", xa, ya, s, t, None, amplitude)


_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


def descent_refine(estimate: LagrangianEstimate, env, ham: PowerLawHamiltonian | None = None,
                   iterations: int = 500, subsamples: int | None = None, tol: float = 1e-8,
                   bracket: float | None = None, line_steps: int = 30,
                   quasi_newton: bool = True, subdivide: int = 1) -> LagrangianEstimate:
    """Continuous polish of the interior nodes of a lattice minimizer.

    An optional L-BFGS pass on the full node vector (analytic gradient) removes
    the long-wavelength error that coordinate moves fix only slowly.  Then
    coordinate-wise golden-section sweeps update even and odd nodes alternately
    (each node's cost involves only its two adjacent segments, so same-parity
    nodes decouple).  A move is kept only if it lowers the cost; the result
    never exceeds the input value.

    ``subdivide`` > 1 first splits every segment into that many pieces (the
    path is unchanged), letting the polish resolve finer time structure; the
    pieces must stay aligned with the Brownian grid.
    """
    ham = ham or PowerLawHamiltonian(2.0)
    path = estimate.minimizer
    if subdivide > 1:
        frac = np.arange(subdivide) / subdivide
        a, b = path.nodes[:-1], path.nodes[1:]
        fine = (a[:, None, :] + frac[None, :, None] * (b - a)[:, None, :]).reshape(-1, path.d)
        path = DiscretePath(path.s, path.t, np.vstack([fine, path.nodes[-1:]]))
    K, d, step = path.K, path.d, path.step
    if subsamples is None:
        subsamples = estimate.lattice.subsamples if estimate.lattice is not None else 4
    amp = estimate.amplitude
    if K < 2:
        return estimate
    Bq, wq, _ = quadrature_nodes(env.path, path.s, step, K, subsamples)
    nodes = np.array(path.nodes, dtype=float)
    if quasi_newton:
        nodes = _quasi_newton(nodes, step, env, ham, Bq, wq, amp, iterations)
    if bracket is None:
        bracket = estimate.lattice.h * 2 if estimate.lattice is not None else 0.1
    width = np.full((K + 1, d), float(bracket))

    def local(idx, pts):
        prev, nxt = nodes[idx - 1], nodes[idx + 1]
        c1 = ham.H_star((pts - prev) / step) * step + segment_forcing(prev, pts, idx - 1, env.field, Bq, wq, step, amp)
        c2 = ham.H_star((nxt - pts) / step) * step + segment_forcing(pts, nxt, idx, env.field, Bq, wq, step, amp)
        return c1 + c2

    colors = [np.arange(1, K, 2), np.arange(2, K, 2)]
    sweeps = 0
    for sweeps in range(1, iterations + 1):
        gain = 0.0
        for idx in colors:
            if idx.size == 0:
                continue
            for l in range(d):
                base = nodes[idx].copy()
                f0 = local(idx, base)

                def at(val):
                    p = base.copy()
                    p[:, l] = val
                    return local(idx, p)

                c = base[:, l]
                w = width[idx, l]
                a, b = c - w, c + w
                x1, x2 = b - _GOLD * (b - a), a + _GOLD * (b - a)
                f1, f2 = at(x1), at(x2)
                for _ in range(line_steps):
                    left = f1 < f2
                    b = np.where(left, x2, b)
                    a = np.where(left, a, x1)
                    nx = np.where(left, b - _GOLD * (b - a), a + _GOLD * (b - a))
                    fn = at(nx)
                    x2, f2, x1, f1 = (np.where(left, x1, nx), np.where(left, f1, fn),
                                      np.where(left, nx, x2), np.where(left, fn, f2))
                cand = np.where(f1 < f2, x1, x2)
                fc = np.minimum(f1, f2)
                ok = fc < f0
                moved = np.where(ok, cand, c)
                nodes[idx, l] = moved
                gain += float(np.sum(np.where(ok, f0 - fc, 0.0)))
                step_len = np.abs(moved - c)
                edge = step_len > 0.8 * w
                width[idx, l] = np.where(edge, 2 * w, np.clip(4 * step_len, 1e-7, bracket))
        if gain < tol:
            break
    new = DiscretePath(path.s, path.t, nodes)
    br = total_action(new, env, ham, subsamples, amp)
    if br.total > estimate.value:
        return estimate
    flags = dict(estimate.flags)
    flags["descent_sweeps"] = sweeps
    return LagrangianEstimate(br.total, new, br, "dp+descent", estimate.x, estimate.y,
                              estimate.s, estimate.t, estimate.lattice, amp, flags)


def _quasi_newton(nodes, step, env, ham, Bq, wq, amp, maxiter):
    shape = nodes[1:-1].shape

    def fun(z):
        full = nodes.copy()
        full[1:-1] = z.reshape(shape)
        val, g = action_and_gradient(full, step, env, ham, Bq, wq, amp)
        return val, g[1:-1].ravel()

    z0 = nodes[1:-1].ravel()
    f0, _ = fun(z0)
    res = minimize(fun, z0, jac=True, method="L-BFGS-B",
                   options={"maxiter": max(50, 4 * maxiter), "gtol": 1e-10, "ftol": 1e-15})
    if not res.fun < f0:
        return nodes
    out = nodes.copy()
    out[1:-1] = res.x.reshape(shape)
    return out


def scaled_lagrangian(x, y, s: float, t: float, eps: float, theta: float, env,
                      lattice: LatticeSpec, ham: PowerLawHamiltonian | None = None,
                      backend: str | None = None) -> LagrangianEstimate:
    """L_eps for the forcing eps^theta f(x/eps) dB^eps, with B^eps(t) = sqrt(eps) B(t/eps).

    Computed as eps * L(x/eps, y/eps, s/eps, t/eps) with forcing amplitude
    eps^(theta - 1/2) against the unit-scale environment; ``lattice`` lives in
    the rescaled (unit) frame.
    """
    if eps <= 0:
        raise ParameterError("eps must be positive")
    amp = eps ** (theta - 0.5)
    xs = np.atleast_1d(np.asarray(x, float)) / eps
    ys = np.atleast_1d(np.asarray(y, float)) / eps
    est = dp_lagrangian(xs, ys, s / eps, t / eps, env, lattice, ham, amp, backend)
    path = DiscretePath(s, t, est.minimizer.nodes * eps)
    br = ActionBreakdown(eps * est.breakdown.kinetic, eps * est.breakdown.forcing, eps * est.breakdown.total)
    flags = dict(est.flags, eps=eps, theta=theta)
    return LagrangianEstimate(eps * est.value, path, br, "dp", xs * eps, ys * eps, s, t,
                              lattice, amp, flags)


def direct_frame(env, lattice: LatticeSpec, eps: float, theta: float):
    """(environment, lattice) of the unscaled problem: field eps^theta f(x/eps), path B^eps."""
    field_ = env.field.scaled(eps ** theta, eps)
    return env.with_field(field_).with_path(rescale_path(env.path, eps)), lattice.scaled(eps)


@dataclass
class SubadditivityReport:
    n: int
    violations: list
    max_excess: float

    @property
    def ok(self) -> bool:
        return not self.violations


def _L(x, y, s, t, env, lattice, ham) -> float:
    if t == s:
        return 0.0 if np.allclose(np.atleast_1d(x), np.atleast_1d(y)) else math.inf
    return dp_lagrangian(x, y, s, t, env, lattice, ham).flags["dp_value"]


def check_subadditivity(env, lattice: LatticeSpec, triples, ham: PowerLawHamiltonian | None = None,
                        rtol: float = 1e-9, raise_on_violation: bool = False) -> SubadditivityReport:
    """Check L(x,y,s,t) <= L(x,z,s,r) + L(z,y,r,t) on lattice-aligned triples (x,z,y,s,r,t)."""
    ham = ham or PowerLawHamiltonian(2.0)
    bad, worst = [], -math.inf
    for tr in triples:
        x, z, y, s, r, t = tr
        lhs = _L(x, y, s, t, env, lattice, ham)
        rhs = _L(x, z, s, r, env, lattice, ham) + _L(z, y, r, t, env, lattice, ham)
        excess = lhs - rhs
        worst = max(worst, excess)
        if excess > rtol * max(1.0, abs(lhs), abs(rhs)):
            bad.append({"triple": [np.atleast_1d(v).tolist() if not np.isscalar(v) else v for v in tr],
                        "excess": excess})
    rep = SubadditivityReport(len(triples), bad, worst)
    if bad and raise_on_violation:
        raise InvariantError("sub-additivity violated", bad)
    return rep


@dataclass
class GrowthReport:
    C_hat: float
    alpha: float
    samples: list
    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def ok(self) -> bool:
        return bool(np.all(self.lower <= self.values + 1e-12) and np.all(self.values <= self.upper + 1e-12))


def envelope_constant(disp: np.ndarray, dur: np.ndarray, L: np.ndarray, qd: float,
                      alpha: float) -> float:
    """Smallest C >= 1 with |dx|^q'/(C dt^(q'-1)) - C dt^alpha <= L <= C |dx|^q'/dt^(q'-1) + C dt^alpha."""
    a = disp ** qd / dur ** (qd - 1.0)
    b = dur ** alpha
    C = 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        C = max(C, float(np.max(L / (a + b))))
        # lower side: a/C - C b <= L  <=>  b C^2 + L C - a >= 0
        root = (-L + np.sqrt(L * L + 4 * a * b)) / (2 * b)
    return max(C, float(np.max(root)))


def check_growth(env, lattice: LatticeSpec, samples, ham: PowerLawHamiltonian | None = None,
                 alpha: float = 0.45) -> GrowthReport:
    """Fit the two-sided growth envelope over sampled (x, y, s, t)."""
    ham = ham or PowerLawHamiltonian(2.0)
    qd = ham.q_dual
    vals, disp, dur = [], [], []
    for x, y, s, t in samples:
        vals.append(dp_lagrangian(x, y, s, t, env, lattice, ham).value)
        disp.append(float(np.linalg.norm(np.atleast_1d(y) - np.atleast_1d(x))))
        dur.append(t - s)
    L, dx, dt = np.array(vals), np.array(disp), np.array(dur)
    C = envelope_constant(dx, dt, L, qd, alpha)
    a = dx ** qd / dt ** (qd - 1.0)
    b = dt ** alpha
    return GrowthReport(C, alpha, list(samples), L, a / C - C * b, C * a + C * b)


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


def brute_force_lagrangian(x, y, s: float, t: float, env, lattice: LatticeSpec,
                           ham: PowerLawHamiltonian | None = None, amplitude: float = 1.0) -> float:
    """Minimum over every lattice path by enumeration (d = 1, tiny lattices only)."""
    ham = ham or PowerLawHamiltonian(2.0)
    if lattice.d != 1:
        raise ParameterError("enumeration is implemented for d = 1")
    K = _slices(lattice, s, t)
    sweep = Sweep.build(lattice, env, ham, s, K, amplitude)
    costs = [sweep.edge_costs(k) for k in range(K)]
    src, dst = lattice.cell_of(x), lattice.cell_of(y)
    offs = sweep.offsets[:, 0]
    best = math.inf
    for choice in itertools.product(range(len(offs)), repeat=K):
        cell, total = src, 0.0
        for k, o in enumerate(choice):
            cell = cell + int(offs[o])
            if not 0 <= cell < lattice.ncell:
                total = math.inf
                break
            total = total + costs[k][o, cell]
        if cell == dst and total < best:
            best = total
    return best
