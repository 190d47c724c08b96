"""Power-law Hamiltonians, numerical Legendre transforms and enhancement geometry."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import ParameterError


def _norm(x: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.atleast_1d(x), axis=-1)


@dataclass(frozen=True)
class PowerLawHamiltonian:
    """H(p) = c |p|^q / q with conjugate H*(v) = c^(1-q') |v|^q' / q'."""

    q: float
    c: float = 1.0

    def __post_init__(self):
        if not self.q > 1:
            raise ParameterError("q must exceed 1")
        if not self.c > 0:
            raise ParameterError("scale c must be positive")

    @property
    def q_dual(self) -> float:
        return self.q / (self.q - 1.0)

    @property
    def star_coef(self) -> float:
        return self.c ** (1.0 - self.q_dual)

    def H(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return self.c * _norm(p) ** self.q / self.q if p.ndim else self.c * abs(p) ** self.q / self.q

    def H_star(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        r = _norm(v) if v.ndim else abs(v)
        return self.star_coef * r ** self.q_dual / self.q_dual

    def map_v(self, p) -> np.ndarray:
        """DH(p) = c |p|^(q-2) p, the velocity dual to momentum p."""
        p = np.asarray(p, dtype=float)
        r = _norm(p)[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(r > 0, self.c * r ** (self.q - 2.0), 0.0)
        return scale * p

    def map_p(self, v) -> np.ndarray:
        """DH*(v) = c^(1-q') |v|^(q'-2) v, the momentum dual to velocity v."""
        v = np.asarray(v, dtype=float)
        r = _norm(v)[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(r > 0, self.star_coef * r ** (self.q_dual - 2.0), 0.0)
        return scale * v

    def growth_constant(self) -> float:
        """C with |p|^q / C - C <= H(p) <= C (|p|^q + 1)."""
        a = self.c / self.q
        return max(a, 1.0 / a) + 1.0

    def star_growth_constant(self) -> float:
        """C with |v|^q' / C - C <= H*(v) <= C (|v|^q' + 1)."""
        a = self.star_coef / self.q_dual
        return max(a, 1.0 / a) + 1.0

    def star_lipschitz_constant(self) -> float:
        """C in |H*(v1) - H*(v2)| <= C (1 + |v1|^(q'-1) + |v2|^(q'-1)) |v1 - v2|."""
        return self.star_coef

    def legendre_radius(self, p_max: float) -> float:
        """Velocity radius that contains every maximizer of p.v - H*(v) for |p| <= p_max."""
        C = self.star_growth_constant()
        return (2.0 * p_max * C) ** (1.0 / (self.q_dual - 1.0)) + 1.0

    def to_dict(self) -> dict:
        return {"q": self.q, "c": self.c}


def eval_H(ham: PowerLawHamiltonian, p) -> np.ndarray:
    return ham.H(p)


def eval_H_star(ham: PowerLawHamiltonian, v) -> np.ndarray:
    return ham.H_star(v)


def map_p(ham: PowerLawHamiltonian, v) -> np.ndarray:
    return ham.map_p(v)


def map_v(ham: PowerLawHamiltonian, p) -> np.ndarray:
    return ham.map_v(p)


def boundary_mask(points: np.ndarray) -> np.ndarray:
    """True for points on the outer faces of a tensor-product sample grid."""
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    return np.any((points == lo) | (points == hi), axis=1)


@dataclass(frozen=True)
class LegendreResult:
    value: np.ndarray
    argmax: np.ndarray
    truncated: np.ndarray


def legendre_numeric(values, grid, query) -> LegendreResult:
    """Discrete conjugate sup_v (p.v - values(v)) over sample points.

    ``grid`` is an (n, d) array of sample points (a tensor-product grid, so its
    outer faces can be detected); ``values`` is either the (n,) sample array or a
    callable evaluated on ``grid``.  ``query`` has shape (d,) or (k, d).  A
    supremum attained on the outer face is reported in ``truncated``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None]
    vals = values(grid) if callable(values) else np.asarray(values, dtype=float)
    vals = np.asarray(vals, dtype=float).reshape(len(grid))
    q = np.asarray(query, dtype=float)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    if q.shape[1] != grid.shape[1]:
        q = q.reshape(-1, grid.shape[1])
    scores = q @ grid.T - vals[None, :]
    idx = np.argmax(scores, axis=1)
    out = scores[np.arange(len(q)), idx]
    trunc = boundary_mask(grid)[idx]
    if single:
        return LegendreResult(out[0], grid[idx[0]], trunc[0])
    return LegendreResult(out, grid[idx], trunc)


def lower_convex_envelope(points: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Greatest convex function below the samples, evaluated at the sample points."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    values = np.asarray(values, dtype=float)
    d = points.shape[1]
    if d == 1:
        x = points[:, 0]
        order = np.argsort(x, kind="stable")
        xs, ys = x[order], values[order]
        hull: list[int] = []
        for i in range(len(xs)):
            while len(hull) >= 2:
                i0, i1 = hull[-2], hull[-1]
                cross = (xs[i1] - xs[i0]) * (ys[i] - ys[i0]) - (ys[i1] - ys[i0]) * (xs[i] - xs[i0])
                if cross <= 0:
                    hull.pop()
                else:
                    break
            hull.append(i)
        env = np.interp(xs, xs[hull], ys[hull])
        out = np.empty_like(values)
        out[order] = np.minimum(env, ys)
        return out
    lifted = np.column_stack([points, values])
    try:
        hull = ConvexHull(lifted)
    except QhullError:
        return values.copy()
    eq = hull.equations
    lower = eq[eq[:, d] < -1e-12]
    # each lower facet n.x + n_z z + b = 0 gives the affine minorant z = -(n.x + b)/n_z
    planes = -(points @ lower[:, :d].T + lower[:, d + 1]) / lower[:, d]
    return np.minimum(planes.max(axis=1), values)


def growth_G(ham: PowerLawHamiltonian, v, n_dirs: int = 64, n_radii: int = 8,
             rho_levels: int = 8) -> float:
    """Lower estimate of G(v) = sup_rho rho^-1 max_{|z|<=rho} [H*(v+z) - H*(v) - p(v).z].

    rho runs over {2^-rho_levels, ..., 1}; z over ``n_dirs`` unit directions times
    ``n_radii`` radii in (0, rho].
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    d = v.size
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        ang = 2 * np.pi * np.arange(n_dirs) / n_dirs
        dirs = np.zeros((n_dirs, d))
        dirs[:, 0], dirs[:, 1] = np.cos(ang), np.sin(ang)
    radii = np.arange(1, n_radii + 1) / n_radii
    unit = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    h0 = ham.H_star(v)
    pv = ham.map_p(v)
    best = 0.0
    for rho in 2.0 ** -np.arange(rho_levels, -1, -1):
        z = rho * unit
        rem = ham.H_star(v + z) - h0 - z @ pv
        best = max(best, float(rem.max()) / rho)
    return best


@dataclass
class EffectiveTable:
    """Sampled effective Lagrangian with the conjugate effective Hamiltonian."""

    velocities: np.ndarray
    Lbar: np.ndarray
    half_width: np.ndarray
    momenta: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    Hbar: np.ndarray = field(default_factory=lambda: np.zeros(0))
    Hbar_half_width: np.ndarray = field(default_factory=lambda: np.zeros(0))
    truncated: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    convexified: np.ndarray | None = None
    growth_C: float | None = None

    def __post_init__(self):
        self.velocities = np.asarray(self.velocities, dtype=float)
        if self.velocities.ndim == 1:
            self.velocities = self.velocities[:, None]
        self.Lbar = np.asarray(self.Lbar, dtype=float)
        self.half_width = np.asarray(self.half_width, dtype=float)
        self.momenta = np.asarray(self.momenta, dtype=float).reshape(-1, self.velocities.shape[1])

    @property
    def d(self) -> int:
        return self.velocities.shape[1]

    def write_csv(self, path) -> None:
        comps = [f"x{i}" for i in range(self.d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["block", *comps, "value", "half_width"])
            for v, val, hw in zip(self.velocities, self.Lbar, self.half_width):
                w.writerow(["Lbar", *map(repr, v.tolist()), repr(float(val)), repr(float(hw))])
            hws = self.Hbar_half_width if len(self.Hbar_half_width) else np.zeros(len(self.Hbar))
            for p, val, hw in zip(self.momenta, self.Hbar, hws):
                w.writerow(["Hbar", *map(repr, p.tolist()), repr(float(val)), repr(float(hw))])

    @classmethod
    def read_csv(cls, path) -> "EffectiveTable":
        rows = {"Lbar": [], "Hbar": []}
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            d = len(header) - 3
            for row in r:
                rows[row[0]].append([float(x) for x in row[1:]])
        L = np.array(rows["Lbar"]).reshape(-1, d + 2)
        H = np.array(rows["Hbar"]).reshape(-1, d + 2)
        return cls(L[:, :d], L[:, d], L[:, d + 1], H[:, :d], H[:, d], H[:, d + 1])


def convexity_violations(points: np.ndarray, values: np.ndarray, half_width: np.ndarray,
                         n_sigma: float = 1.0) -> list[tuple[int, int, int, float]]:
    """Collinear midpoint triples (i, j, k) with L(j) > (L(i)+L(k))/2 beyond the combined width."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    out = []
    lookup = {tuple(np.round(p, 12)): i for i, p in enumerate(points)}
    n = len(points)
    for i in range(n):
        for k in range(i + 1, n):
            mid = tuple(np.round(0.5 * (points[i] + points[k]), 12))
            j = lookup.get(mid)
            if j is None:
                continue
            excess = values[j] - 0.5 * (values[i] + values[k])
            width = n_sigma * np.sqrt(half_width[j] ** 2 + 0.25 * (half_width[i] ** 2 + half_width[k] ** 2))
            if excess > width + 1e-12:
                out.append((i, j, k, float(excess)))
    return out
