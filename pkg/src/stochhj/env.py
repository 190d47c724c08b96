"""Random environments: random-phase Fourier fields and sampled Brownian paths.

A realization is the pair (f, B).  The field is a finite sum

    f(x) = offset + sum_j a_j cos(k_j . (x + shift) + phase_j)

with phases drawn uniformly on [0, 2pi), which makes the law of f translation
invariant.  B is sampled on a uniform grid with exact Gaussian increments and
evaluated off-grid by linear interpolation.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from . import rng
from .errors import AlignmentError, HorizonError, ParameterError

_GRID_TOL = 1e-9


def _grid_index(t: float, dt: float) -> int | None:
    """Integer n with n*dt == t up to rounding, else None."""
    n = round(t / dt)
    if abs(n * dt - t) <= _GRID_TOL * max(1.0, abs(t)):
        return int(n)
    return None


@dataclass(frozen=True)
class FieldSpec:
    """Mode table of a random-phase Fourier field.

    ``amplitudes`` has shape (n_modes, m) and ``wavevectors`` (n_modes, d).
    ``offset`` is a deterministic constant added to the field; a spec with
    no modes and a nonzero offset is the constant-field baseline.
    """

    dimension: int
    channels: int
    amplitudes: np.ndarray
    wavevectors: np.ndarray
    M0: float
    offset: np.ndarray | None = None
    nonconstant: bool = False
    kappa: float = 0.5

    def __post_init__(self):
        d, m = int(self.dimension), int(self.channels)
        if d < 1 or m < 1:
            raise ParameterError("dimension and channels must be positive")
        amps = np.asarray(self.amplitudes, dtype=float).reshape(-1, m)
        waves = np.asarray(self.wavevectors, dtype=float).reshape(-1, d)
        if amps.shape[0] != waves.shape[0]:
            raise ParameterError("amplitudes and wavevectors must list the same modes")
        offset = np.zeros(m) if self.offset is None else np.asarray(self.offset, dtype=float).reshape(m)
        amps.setflags(write=False)
        waves.setflags(write=False)
        offset.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "wavevectors", waves)
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "M0", float(self.M0))
        if not 0.0 < self.kappa < 1.0:
            raise ParameterError("kappa must lie in (0, 1)")
        if self.M0 <= 0:
            raise ParameterError("M0 must be positive")
        tol = 1e-12 * max(1.0, self.M0)
        if self.sup_bound() > self.M0 + tol:
            raise ParameterError(f"sup-norm bound {self.sup_bound():g} exceeds M0={self.M0:g}")
        if self.lip_bound() > self.M0 + tol:
            raise ParameterError(f"gradient bound {self.lip_bound():g} exceeds M0={self.M0:g}")
        if self.nonconstant and not np.any(np.linalg.norm(waves, axis=1) > 0):
            raise ParameterError("spec flagged nonconstant but has no mode with nonzero wavevector")
        self._warn_rational_dependence()

    @property
    def n_modes(self) -> int:
        return self.amplitudes.shape[0]

    def sup_bound(self) -> float:
        return float(np.linalg.norm(self.offset) + np.linalg.norm(self.amplitudes, axis=1).sum())

    def lip_bound(self) -> float:
        return float((np.linalg.norm(self.amplitudes, axis=1) * np.linalg.norm(self.wavevectors, axis=1)).sum())

    def _warn_rational_dependence(self):
        k = self.wavevectors
        for i in range(len(k)):
            for j in range(i + 1, len(k)):
                ki, kj = k[i], k[j]
                ni, nj = np.linalg.norm(ki), np.linalg.norm(kj)
                if ni == 0 or nj == 0:
                    continue
                if abs(abs(ki @ kj) - ni * nj) > 1e-12 * ni * nj:
                    continue
                ratio = ni / nj
                frac = Fraction(ratio).limit_denominator(64)
                if abs(float(frac) - ratio) < 1e-9:
                    warnings.warn(
                        f"wavevectors {i} and {j} are rationally dependent; the field is "
                        "stationary but not ergodic under spatial shifts",
                        stacklevel=3,
                    )

    def scaled(self, amplitude: float, length: float) -> "FieldSpec":
        """Spec of x -> amplitude * f(x / length)."""
        amps = self.amplitudes * amplitude
        waves = self.wavevectors / length
        offset = self.offset * amplitude
        sup = float(np.linalg.norm(offset) + np.linalg.norm(amps, axis=1).sum())
        lip = float((np.linalg.norm(amps, axis=1) * np.linalg.norm(waves, axis=1)).sum())
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return replace(self, amplitudes=amps, wavevectors=waves, offset=offset,
                           M0=max(sup, lip, 1e-300))

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "channels": self.channels,
            "amplitudes": self.amplitudes.tolist(),
            "wavevectors": self.wavevectors.tolist(),
            "M0": self.M0,
            "offset": self.offset.tolist(),
            "nonconstant": self.nonconstant,
            "kappa": self.kappa,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FieldSpec":
        return cls(**data)


def single_mode(amplitude: float = 1.0, wavenumber: float = 1.0, dimension: int = 1) -> FieldSpec:
    k = np.zeros(dimension)
    k[0] = wavenumber
    M0 = max(abs(amplitude), abs(amplitude * wavenumber))
    return FieldSpec(dimension, 1, [[amplitude]], [k], M0=M0, nonconstant=wavenumber != 0)


def constant_field(value, dimension: int = 1) -> FieldSpec:
    value = np.atleast_1d(np.asarray(value, dtype=float))
    return FieldSpec(dimension, value.size, np.zeros((0, value.size)), np.zeros((0, dimension)),
                     M0=max(float(np.linalg.norm(value)), 1e-12), offset=value)


def zero_field(dimension: int = 1, channels: int = 1) -> FieldSpec:
    return FieldSpec(dimension, channels, np.zeros((0, channels)), np.zeros((0, dimension)), M0=1.0)


@dataclass(frozen=True)
class RandomField:
    """One realization of a Fourier field; ``shift`` accumulates spatial translations."""

    spec: FieldSpec
    phases: np.ndarray
    shift: np.ndarray = field(default=None)

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=float).reshape(self.spec.n_modes)
        shift = np.zeros(self.spec.dimension) if self.shift is None else np.asarray(self.shift, dtype=float).reshape(self.spec.dimension)
        phases.setflags(write=False)
        shift.setflags(write=False)
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "shift", shift)

    @property
    def d(self) -> int:
        return self.spec.dimension

    @property
    def m(self) -> int:
        return self.spec.channels

    @property
    def effective_phases(self) -> np.ndarray:
        """Phases with the accumulated shift folded in, reduced mod 2pi."""
        return np.mod(self.phases + self.spec.wavevectors @ self.shift, 2 * np.pi)

    def _arg(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x + self.shift) @ self.spec.wavevectors.T + self.phases

    def value(self, x) -> np.ndarray:
        """f(x) for points of shape (..., d); returns (..., m)."""
        x = np.asarray(x, dtype=float)
        base = np.broadcast_to(self.spec.offset, x.shape[:-1] + (self.m,))
        if self.spec.n_modes == 0:
            return base.copy()
        return base + np.cos(self._arg(x)) @ self.spec.amplitudes

    def gradient(self, x) -> np.ndarray:
        """Jacobian Df(x) with shape (..., m, d)."""
        x = np.asarray(x, dtype=float)
        if self.spec.n_modes == 0:
            return np.zeros(x.shape[:-1] + (self.m, self.d))
        s = -np.sin(self._arg(x))
        return np.einsum("...j,jc,jl->...cl", s, self.spec.amplitudes, self.spec.wavevectors)

    def hessian(self, x) -> np.ndarray:
        """Second derivatives with shape (..., m, d, d)."""
        x = np.asarray(x, dtype=float)
        if self.spec.n_modes == 0:
            return np.zeros(x.shape[:-1] + (self.m, self.d, self.d))
        c = -np.cos(self._arg(x))
        k = self.spec.wavevectors
        return np.einsum("...j,jc,jl,jr->...clr", c, self.spec.amplitudes, k, k)

    def scaled(self, amplitude: float, length: float) -> "RandomField":
        """Realization of x -> amplitude * f(x / length) sharing these phases."""
        return RandomField(self.spec.scaled(amplitude, length), self.phases, self.shift * length)


def eval_field(field_, x) -> np.ndarray:
    return field_.value(x)


def eval_gradient(field_, x) -> np.ndarray:
    return field_.gradient(x)


def shift_field(field_: RandomField, y) -> RandomField:
    """Translate the realization: the result at x equals the original at x + y."""
    y = np.asarray(y, dtype=float).reshape(field_.d)
    return replace(field_, shift=field_.shift + y)


@dataclass(frozen=True)
class BrownianPath:
    """m-dimensional Brownian path on the grid 0, dt, ..., T (values shape (n+1, m))."""

    horizon: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        if self.horizon <= 0 or self.dt <= 0:
            raise ParameterError("horizon and dt must be positive")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        n = _grid_index(self.horizon, self.dt)
        if n is None or n < 1:
            raise AlignmentError(f"dt={self.dt:g} does not divide horizon={self.horizon:g}")
        if vals.shape[0] != n + 1:
            raise ParameterError(f"expected {n + 1} grid values, got {vals.shape[0]}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def n_steps(self) -> int:
        return self.values.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def index_of(self, t: float) -> int:
        n = _grid_index(t, self.dt)
        if n is None:
            raise AlignmentError(f"time {t:g} is not on the Brownian grid (dt={self.dt:g})")
        if n < 0 or n > self.n_steps:
            raise HorizonError(f"time {t:g} outside [0, {self.horizon:g}]")
        return n

    def __call__(self, t) -> np.ndarray:
        """B(t) by linear interpolation; t scalar or array, result (..., m)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < -_GRID_TOL) or np.any(t > self.horizon * (1 + _GRID_TOL) + _GRID_TOL):
            raise HorizonError(f"evaluation outside [0, {self.horizon:g}]")
        u = np.clip(t / self.dt, 0.0, self.n_steps)
        i = np.minimum(np.floor(u).astype(np.int64), self.n_steps - 1)
        frac = (u - i)[..., None]
        return (1.0 - frac) * self.values[i] + frac * self.values[i + 1]


def sample_path(horizon: float, dt: float, m: int, gen: np.random.Generator) -> BrownianPath:
    n = _grid_index(horizon, dt)
    if horizon <= 0 or dt <= 0:
        raise ParameterError("horizon and dt must be positive")
    if n is None or n < 1:
        raise AlignmentError(f"dt={dt:g} does not divide horizon={horizon:g}")
    inc = gen.standard_normal((n, m)) * math.sqrt(dt)
    vals = np.vstack([np.zeros((1, m)), np.cumsum(inc, axis=0)])
    return BrownianPath(horizon, dt, vals)


def shift_path(path: BrownianPath, t: float) -> BrownianPath:
    """s -> B(t + s) - B(t) on the remaining horizon."""
    i = path.index_of(t)
    if i == 0:
        return path
    if i == path.n_steps:
        raise HorizonError("cannot shift to the end of the horizon")
    vals = path.values[i:] - path.values[i]
    return BrownianPath(path.n_steps * path.dt - i * path.dt, path.dt, vals)


def rescale_path(path: BrownianPath, eps: float, horizon: float | None = None) -> BrownianPath:
    """t -> sqrt(eps) B(t / eps), sampled on the grid eps * dt.

    ``horizon`` (in rescaled time) is checked against the sampled range.
    """
    if eps <= 0:
        raise ParameterError("eps must be positive")
    if horizon is not None and horizon / eps > path.horizon * (1 + _GRID_TOL):
        raise HorizonError(f"rescaled horizon {horizon:g} needs B up to {horizon / eps:g} > {path.horizon:g}")
    if eps == 1.0:
        return path
    return BrownianPath(path.horizon * eps, path.dt * eps, math.sqrt(eps) * path.values)


@dataclass(frozen=True)
class RandomEnvironment:
    """One realization omega = (f, B) with its seed provenance."""

    field: object
    path: BrownianPath
    seed: int = 0
    index: int = 0

    def with_field(self, new_field) -> "RandomEnvironment":
        return replace(self, field=new_field)

    def with_path(self, new_path: BrownianPath) -> "RandomEnvironment":
        return replace(self, path=new_path)


def sample_field(spec: FieldSpec, gen: np.random.Generator) -> RandomField:
    return RandomField(spec, gen.uniform(0.0, 2 * np.pi, spec.n_modes))


def sample_environment(spec: FieldSpec, horizon: float, dt: float, master_seed: int,
                       index: int, tag: str = "env") -> RandomEnvironment:
    """Deterministic realization number ``index`` under ``master_seed``.

    Field phases and Brownian increments come from independent substreams.
    """
    if horizon <= 0 or dt <= 0:
        raise ParameterError("horizon and dt must be positive")
    field_ = sample_field(spec, rng.stream(master_seed, index, rng.FIELD_STREAM, tag))
    path = sample_path(horizon, dt, spec.channels, rng.stream(master_seed, index, rng.PATH_STREAM, tag))
    return RandomEnvironment(field_, path, master_seed, index)


def grad_energy(spec: FieldSpec) -> float:
    """E|Df(0)|^2 in closed form: sum_j |a_j|^2 |k_j|^2 / 2."""
    if spec.n_modes == 0:
        return 0.0
    a2 = (spec.amplitudes ** 2).sum(axis=1)
    k2 = (spec.wavevectors ** 2).sum(axis=1)
    return float(0.5 * (a2 * k2).sum())
