"""Solvers for u_t + H(Du) = eps^theta f(x/eps) . dB^eps(t), u(., 0) = u0.

Two independent routes:

* Hopf-Lax: u(x, t) = min_y u0(y) + L_eps(y, x, 0, t).  Because the formula
  is a min-plus convolution, the whole field comes from one lattice sweep
  started from V_0 = u0 on every cell.
* Finite differences on the transformed unknown w = u - f.B, which solves
  the classical equation w_t + H(Dw + Df B) = 0.  A monotone Lax-Friedrichs
  scheme advances w with B frozen at each step midpoint.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .env import rescale_path
from .errors import ParameterError, StepSizeError
from .hamiltonian import PowerLawHamiltonian
from .optimizer import LatticeSpec, Sweep

_KINDS = ("linear", "bump", "cone", "tabulated")


@dataclass(frozen=True)
class InitialDatum:
    """u0 of kind linear (p . x), bump, cone or tabulated.

    Parameters by kind:
      linear     p
      bump       amplitude, center, width   (amplitude * exp(-|x-c|^2 / (2 w^2)))
      cone       slope, center              (slope * |x - c|)
      tabulated  axes (list of 1-d grids), values
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ParameterError(f"unknown initial datum kind {self.kind!r}")

    @classmethod
    def linear(cls, p) -> "InitialDatum":
        return cls("linear", {"p": list(np.atleast_1d(np.asarray(p, float)))})

    @classmethod
    def bump(cls, amplitude: float = 1.0, center=0.0, width: float = 0.5) -> "InitialDatum":
        return cls("bump", {"amplitude": amplitude, "center": list(np.atleast_1d(np.asarray(center, float))),
                            "width": width})

    @classmethod
    def cone(cls, slope: float = 1.0, center=0.0) -> "InitialDatum":
        return cls("cone", {"slope": slope, "center": list(np.atleast_1d(np.asarray(center, float)))})

    @classmethod
    def tabulated(cls, axes, values) -> "InitialDatum":
        axes = [list(np.asarray(a, float)) for a in axes]
        return cls("tabulated", {"axes": axes, "values": np.asarray(values, float).tolist()})

    def __call__(self, x) -> np.ndarray:
        """u0 at points of shape (..., d)."""
        x = np.asarray(x, dtype=float)
        prm = self.params
        if self.kind == "linear":
            return x @ np.asarray(prm["p"], float)
        if self.kind == "bump":
            r2 = np.sum((x - np.asarray(prm["center"], float)) ** 2, axis=-1)
            return prm["amplitude"] * np.exp(-r2 / (2.0 * prm["width"] ** 2))
        if self.kind == "cone":
            return prm["slope"] * np.linalg.norm(x - np.asarray(prm["center"], float), axis=-1)
        axes = [np.asarray(a, float) for a in prm["axes"]]
        vals = np.asarray(prm["values"], float)
        if len(axes) == 1:
            return np.interp(x[..., 0], axes[0], vals)
        interp = RegularGridInterpolator(axes, vals, bounds_error=False, fill_value=None)
        return interp(x)

    def sup_norm(self, points) -> float:
        return float(np.max(np.abs(self(points))))

    def modulus(self) -> float | None:
        """Lipschitz modulus of the tabulated datum (max slope between nodes)."""
        if self.kind != "tabulated":
            return None
        vals = np.asarray(self.params["values"], float)
        out = 0.0
        for ax, a in enumerate(self.params["axes"]):
            step = np.diff(np.asarray(a, float))
            shape = [1] * vals.ndim
            shape[ax] = -1
            out = max(out, float(np.max(np.abs(np.diff(vals, axis=ax)) / step.reshape(shape))))
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params}

    @classmethod
    def from_dict(cls, data: dict) -> "InitialDatum":
        return cls(data["kind"], dict(data.get("params", {})))


@dataclass
class SolutionField:
    """u at grid points (n, d) and times (nt,); values has shape (nt, n)."""

    points: np.ndarray
    times: np.ndarray
    values: np.ndarray
    method: str
    flags: dict = field(default_factory=dict)

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ParameterError(f"time {t:g} was not recorded")
        return self.values[k]

    def probe(self, x, t: float) -> float:
        """Value at the grid node nearest to x."""
        x = np.atleast_1d(np.asarray(x, float))
        i = int(np.argmin(np.linalg.norm(self.points - x, axis=1)))
        return float(self.at(t)[i])

    def write_csv(self, path) -> None:
        d = self.points.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(d)] + ["t", "u"])
            for t, row in zip(self.times, self.values):
                for x, u in zip(self.points, row):
                    w.writerow([*map(repr, x.tolist()), repr(float(t)), repr(float(u))])


def localization_radius(u0_sup: float, eps: float, t: float, C_hat: float, q_dual: float = 2.0,
                        alpha: float = 0.45, safety: float = 1.5) -> float:
    """Radius M such that minimizing y in the Hopf-Lax formula satisfy |y - x| <= M.

    ``eps`` does not enter: the growth envelope is scale invariant.
    """
    if t <= 0:
        raise ParameterError("t must be positive")
    inner = C_hat * (2.0 + 2.0 * u0_sup + C_hat * t ** alpha) * t ** (q_dual - 1.0)
    return safety * inner ** (1.0 / q_dual)


def hopf_lax_solve(u0: InitialDatum, env, eps: float, theta: float, lattice: LatticeSpec,
                   times, ham: PowerLawHamiltonian | None = None, C_hat: float | None = None,
                   backend: str | None = None) -> SolutionField:
    """u_eps at the lattice nodes (physical coordinates eps * z) for each requested time.

    ``lattice`` is in the rescaled unit frame: physical spacing eps * h, time
    step eps * dt.  The field is flagged ``truncated`` at time t when no node
    keeps its localization ball of radius M(t) inside the box.
    """
    ham = ham or PowerLawHamiltonian(2.0)
    if eps <= 0:
        raise ParameterError("eps must be positive")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    ks = []
    for t in times:
        k = t / (eps * lattice.dt)
        if t < 0 or abs(k - round(k)) > 1e-7 * max(1.0, k):
            raise ParameterError(f"time {t:g} is not a multiple of eps * dt = {eps * lattice.dt:g}")
        ks.append(int(round(k)))
    K = max(ks)
    pts = lattice.points() * eps
    V0 = u0(pts) / eps
    amp = eps ** (theta - 0.5)
    if K == 0:
        vals = np.tile(u0(pts), (len(times), 1))
        return SolutionField(pts, times, vals, "hopf-lax")
    sweep = Sweep.build(lattice, env, ham, 0.0, K, amp)
    order = sorted(set(ks))
    _, _, rec = sweep.run(V0, record=order, backend=backend)
    by_k = {k: eps * rec[i] for i, k in enumerate(order)}
    vals = np.array([by_k[k] if k > 0 else u0(pts) for k in ks])
    flags = _localization_flags(u0, pts, lattice, eps, times, ham, C_hat)
    return SolutionField(pts, times, vals, "hopf-lax", flags)


def _localization_flags(u0, pts, lattice, eps, times, ham, C_hat) -> dict:
    C = C_hat if C_hat is not None else ham.star_growth_constant()
    sup = u0.sup_norm(pts)
    lo = np.asarray(lattice.lo) * eps
    hi = np.asarray(lattice.hi) * eps
    inner = np.min(np.minimum(pts - lo, hi - pts), axis=1)
    radii, fits = [], []
    for t in times:
        if t <= 0:
            radii.append(0.0)
            fits.append(True)
            continue
        M = localization_radius(sup, eps, t, C, ham.q_dual)
        radii.append(M)
        fits.append(bool(np.any(inner >= M)))
    return {"localization_radius": radii, "truncated": not all(fits)}


def interior_mask(sol: SolutionField, lo, hi, margin: float) -> np.ndarray:
    """Nodes at distance >= margin from the box faces."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    return np.all((sol.points - lo >= margin - 1e-12) & (hi - sol.points >= margin - 1e-12), axis=1)


@dataclass(frozen=True)
class FDGrid:
    """Physical box [lo, hi] with spacing h for the finite-difference solver."""

    lo: tuple
    hi: tuple
    h: float

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) not in (1, 2) or len(lo) != len(hi):
            raise ParameterError("finite differences support d in {1, 2}")
        if self.h <= 0:
            raise ParameterError("h must be positive")

    @property
    def d(self) -> int:
        return len(self.lo)

    def axes(self) -> list[np.ndarray]:
        return [a + self.h * np.arange(int(round((b - a) / self.h)) + 1) for a, b in zip(self.lo, self.hi)]

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.d)


def _one_sided(w: np.ndarray, h: float, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Backward and forward differences with linearly extrapolated ghost nodes."""
    pad = [(0, 0)] * w.ndim
    pad[axis] = (1, 1)
    g = np.pad(w, pad, mode="reflect", reflect_type="odd")
    sl = [slice(None)] * w.ndim
    sl[axis] = slice(1, -1)
    mid = g[tuple(sl)]
    sl[axis] = slice(0, -2)
    left = g[tuple(sl)]
    sl[axis] = slice(2, None)
    right = g[tuple(sl)]
    return (mid - left) / h, (right - mid) / h


def fd_transformed_solve(u0: InitialDatum, env, eps: float, theta: float, grid: FDGrid,
                         times, cfl: float = 0.9, ham: PowerLawHamiltonian | None = None,
                         dt: float | None = None) -> SolutionField:
    """Lax-Friedrichs solution of the transformed equation, reported as u = w + f.B."""
    ham = ham or PowerLawHamiltonian(2.0)
    if not 0 < cfl <= 1:
        raise StepSizeError("cfl must lie in (0, 1]")
    if eps <= 0:
        raise ParameterError("eps must be positive")
    field_ = env.field.scaled(eps ** theta, eps)
    times = np.sort(np.atleast_1d(np.asarray(times, dtype=float)))
    path = rescale_path(env.path, eps, float(times[-1]))
    if grid.h > eps / 8 * (1 + 1e-9):
        warnings.warn("grid spacing exceeds eps / 8 and may not resolve the forcing", stacklevel=2)
    d = grid.d
    axes = grid.axes()
    shape = tuple(len(a) for a in axes)
    pts = grid.points()
    F = field_.value(pts)                                  # (n, m)
    DF = field_.gradient(pts)                              # (n, m, d)
    u_init = u0(pts)
    w = u_init.reshape(shape).copy()
    out = []
    t = 0.0
    ti = 0
    if times[0] <= 0:
        out.append(u_init.copy())
        ti = 1
    tol = 1e-12
    while ti < len(times):
        target = times[ti]
        diffs = [_one_sided(w, grid.h, ax) for ax in range(d)]
        Bm_probe = path(min(t, path.horizon))
        P = np.einsum("ncl,c->nl", DF, Bm_probe)
        pm = np.stack([dm.reshape(-1) for dm, _ in diffs], axis=-1) + P
        pp = np.stack([dp.reshape(-1) for _, dp in diffs], axis=-1) + P
        speed = float(max(np.max(np.linalg.norm(ham.map_v(pm), axis=-1)),
                          np.max(np.linalg.norm(ham.map_v(pp), axis=-1))))
        alpha = 1.05 * speed + 1e-3
        stable = grid.h / (d * alpha)
        if dt is not None:
            if dt > stable * (1 + 1e-12):
                raise StepSizeError(f"dt={dt:g} exceeds the CFL bound {stable:g}")
            step = dt
        else:
            step = min(cfl * stable, path.dt)
        step = min(step, target - t)
        Bm = path(t + 0.5 * step)
        P = np.einsum("ncl,c->nl", DF, Bm)
        avg = np.stack([(0.5 * (dm + dp)).reshape(-1) for dm, dp in diffs], axis=-1) + P
        visc = sum((dp - dm).reshape(-1) for dm, dp in diffs)
        Hn = ham.H(avg) - 0.5 * alpha * visc
        w = w - step * Hn.reshape(shape)
        t += step
        if t >= target - tol * max(1.0, target):
            t = target
            B = path(t)
            out.append(w.reshape(-1) + F @ B)
            ti += 1
    return SolutionField(pts, times, np.array(out), "fd-lax-friedrichs")
