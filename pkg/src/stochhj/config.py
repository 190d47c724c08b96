"""Experiment configuration: a versioned JSON tree with strict keys.

Every section is a small dataclass.  Parsing rejects unknown keys at any
level, so a typo in an experiment definition fails loudly instead of being
silently ignored.
"""
from __future__ import annotations

import copy
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .env import FieldSpec, single_mode
from .errors import ParameterError
from .hamiltonian import PowerLawHamiltonian
from .hj import FDGrid, InitialDatum
from .homog import LatticeTemplate, ScalingLattice, SubadditiveSchedule

VERSION = "1"
OUT_ENV = "STOCHHJ_OUT"
_TOL = 1e-9
_field = field  # the config has an attribute named "field"


def _multiple(a: float, b: float) -> bool:
    k = a / b
    return abs(k - round(k)) <= _TOL * max(1.0, abs(k)) and round(k) >= 1


@dataclass
class HamiltonianSection:
    q: float = 2.0
    c: float = 1.0

    def build(self) -> PowerLawHamiltonian:
        return PowerLawHamiltonian(self.q, self.c)


@dataclass
class LatticeSection:
    h: float = 1 / 32
    dt: float = 1 / 8
    v_max: float = 5.0
    subsamples: int = 2
    pad: float = 4.0
    env_dt: float | None = 1 / 16

    def build(self) -> LatticeTemplate:
        return LatticeTemplate(self.h, self.dt, self.v_max, self.subsamples, self.pad, self.env_dt)


@dataclass
class ScalingLatticeSection:
    h: float = 1 / 8
    dt: float = 1 / 2
    v_max: float = 6.0
    radius: float = 3.0
    subsamples: int = 1
    env_dt: float | None = 1 / 4

    def build(self, d: int = 1) -> ScalingLattice:
        return ScalingLattice(self.h, self.dt, self.v_max, self.radius, self.subsamples, self.env_dt, d)


@dataclass
class ScheduleSection:
    T_list: list = field(default_factory=lambda: [4.0, 8.0, 16.0, 32.0])
    N: int = 128

    def build(self) -> SubadditiveSchedule:
        return SubadditiveSchedule(tuple(self.T_list), self.N)


@dataclass
class LagrangianSection:
    x: list = field(default_factory=lambda: [0.0])
    y: list = field(default_factory=lambda: [0.5])
    s: float = 0.0
    t: float = 1.0
    descent: bool = True
    samples: int = 8


@dataclass
class TentSection:
    v: list = field(default_factory=lambda: [0.0])
    M: float | None = 16.0
    delta: float | None = 6.0
    N: int = 16
    samples: int = 64
    env_dt: float | None = None
    subsamples: int = 4


@dataclass
class HJSection:
    eps: float = 1.0
    theta: float = 0.5
    times: list = field(default_factory=lambda: [0.5, 1.0])
    index: int = 0
    method: str = "hopf-lax"
    fd_h: float = 1 / 32
    fd_radius: float = 2.0
    cfl: float = 0.9
    compare_radius: float = 1.0

    def fd_grid(self, d: int) -> FDGrid:
        r = self.fd_radius
        return FDGrid((-r,) * d, (r,) * d, self.fd_h)


@dataclass
class ScalingSection:
    probe: list = field(default_factory=lambda: [0.0, 1.0])
    samples: int = 40
    hbar_velocities: list = field(default_factory=list)
    hbar_schedule: ScheduleSection | None = None


@dataclass
class TailsSection:
    R: float = 1.25
    samples: int = 200
    spacing: float = 0.125
    theta_reg: float = 0.3


@dataclass
class PsiSection:
    T_list: list = field(default_factory=lambda: [1.0, 2.0, 4.0])
    samples: int = 20000
    optimizer_T: float = 1.0
    optimizer_samples: int = 0
    h: float = 1 / 64
    dt: float = 1 / 128
    v_max: float = 4.0
    radius: float = 1.0
    env_dt: float = 1 / 512


_SECTIONS = {
    "hamiltonian": HamiltonianSection,
    "lattice": LatticeSection,
    "scaling_lattice": ScalingLatticeSection,
    "schedule": ScheduleSection,
    "lagrangian": LagrangianSection,
    "tent": TentSection,
    "hj": HJSection,
    "scaling": ScalingSection,
    "tails": TailsSection,
    "psi": PsiSection,
}


def _section(cls, data, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ParameterError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ParameterError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    kw = dict(data)
    if cls is ScalingSection and kw.get("hbar_schedule") is not None:
        kw["hbar_schedule"] = _section(ScheduleSection, kw["hbar_schedule"], f"{where}.hbar_schedule")
    return cls(**kw)


def _field_from(data) -> FieldSpec:
    if not isinstance(data, dict):
        raise ParameterError("field must be an object")
    names = {f.name for f in fields(FieldSpec)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ParameterError(f"unknown key(s) in field: {', '.join(unknown)}")
    try:
        return FieldSpec.from_dict(data)
    except TypeError as exc:
        raise ParameterError(f"field: {exc}") from None


def _datum_from(data) -> InitialDatum:
    if not isinstance(data, dict) or set(data) - {"kind", "params"} or "kind" not in data:
        raise ParameterError("datum must be an object with keys 'kind' and 'params'")
    return InitialDatum.from_dict(data)


@dataclass
class ExperimentConfig:
    version: str = VERSION
    seed: int = 0
    workers: int = 1
    output_dir: str | None = None
    hamiltonian: HamiltonianSection = _field(default_factory=HamiltonianSection)
    field: FieldSpec = _field(default_factory=lambda: single_mode(0.5, 1.0, 1))
    datum: InitialDatum = _field(default_factory=lambda: InitialDatum.bump(1.0, 0.0, 0.5))
    lattice: LatticeSection = _field(default_factory=LatticeSection)
    scaling_lattice: ScalingLatticeSection = _field(default_factory=ScalingLatticeSection)
    schedule: ScheduleSection = _field(default_factory=ScheduleSection)
    velocities: list = _field(default_factory=lambda: [-1.0, -0.5, 0.0, 0.5, 1.0])
    momenta: list = _field(default_factory=lambda: [-1.0, -0.5, 0.0, 0.5, 1.0])
    eps_list: list = _field(default_factory=lambda: [2.0 ** -k for k in range(2, 7)])
    theta_list: list = _field(default_factory=lambda: [0.75, 0.5, 0.25])
    lagrangian: LagrangianSection = _field(default_factory=LagrangianSection)
    tent: TentSection = _field(default_factory=TentSection)
    hj: HJSection = _field(default_factory=HJSection)
    scaling: ScalingSection = _field(default_factory=ScalingSection)
    tails: TailsSection = _field(default_factory=TailsSection)
    psi: PsiSection = _field(default_factory=PsiSection)

    # ------------------------------------------------------------ parsing
    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ParameterError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ParameterError(f"unknown top-level key(s): {', '.join(unknown)}")
        if "version" not in data:
            raise ParameterError("config needs a 'version' field")
        if str(data["version"]) != VERSION:
            raise ParameterError(f"unsupported config version {data['version']!r} (expected {VERSION!r})")
        kw = {}
        for k, v in data.items():
            if k in _SECTIONS:
                kw[k] = _section(_SECTIONS[k], v, k)
            elif k == "field":
                kw[k] = _field_from(v)
            elif k == "datum":
                kw[k] = _datum_from(v)
            else:
                kw[k] = v
        try:
            cfg = cls(**kw)
        except ParameterError:
            raise
        except (TypeError, ValueError) as exc:
            raise ParameterError(str(exc)) from None
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{path}: invalid JSON ({exc})") from None
        except OSError as exc:
            raise ParameterError(f"{path}: cannot read ({exc.strerror})") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("field", "datum"):
                out[f.name] = copy.deepcopy(v.to_dict())
            elif f.name in _SECTIONS:
                out[f.name] = asdict(v)
            else:
                out[f.name] = copy.deepcopy(v)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        """New validated config with dotted-key overrides applied (e.g. ``psi.samples``)."""
        data = self.to_dict()
        for key, value in overrides.items():
            node = data
            parts = key.split(".")
            for p in parts[:-1]:
                if not isinstance(node, dict) or p not in node:
                    raise ParameterError(f"unknown override key {key!r}")
                if node[p] is None:
                    node[p] = {}
                node = node[p]
            if not isinstance(node, dict):
                raise ParameterError(f"unknown override key {key!r}")
            node[parts[-1]] = value
        return ExperimentConfig.from_dict(data)

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir or os.environ.get(OUT_ENV) or "runs")

    # --------------------------------------------------------- validation
    def validate(self) -> None:
        errs = []
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2 ** 64:
            errs.append("seed must be an unsigned 64-bit integer")
        if not isinstance(self.workers, int) or self.workers < 1:
            errs.append("workers must be a positive integer")
        try:
            self.hamiltonian.build()
        except ParameterError as exc:
            errs.append(f"hamiltonian: {exc}")
        d = self.field.dimension
        lat = self.lattice
        if not (lat.h > 0 and lat.dt > 0 and lat.v_max > 0):
            errs.append("lattice: h, dt and v_max must be positive")
        else:
            if lat.v_max * lat.dt < lat.h * (1 - _TOL):
                errs.append("lattice: v_max * dt must be at least h")
            bdt = lat.build().brownian_dt
            if not _multiple(lat.dt, bdt):
                errs.append(f"lattice: dt={lat.dt:g} is not a multiple of the Brownian step {bdt:g}")
            for T in self.schedule.T_list:
                if not _multiple(T, lat.dt):
                    errs.append(f"schedule: horizon {T:g} is not a multiple of lattice dt {lat.dt:g}")
        try:
            self.schedule.build()
        except ParameterError as exc:
            errs.append(f"schedule: {exc}")
        sl = self.scaling_lattice
        if sl.h > 1 / 8 * (1 + _TOL):
            errs.append(f"scaling_lattice: h={sl.h:g} exceeds 1/8 (physical h > eps/8)")
        if sl.v_max * sl.dt < sl.h * (1 - _TOL):
            errs.append("scaling_lattice: v_max * dt must be at least h")
        if not _multiple(sl.dt, sl.build(d).brownian_dt):
            errs.append("scaling_lattice: dt is not a multiple of the Brownian step")
        eps = [float(e) for e in self.eps_list]
        if not eps or any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            errs.append("eps_list must be positive and strictly decreasing")
        if any(not 0 < float(t) <= 1 for t in self.theta_list):
            errs.append("theta_list entries must lie in (0, 1]")
        for name, pts in (("velocities", self.velocities), ("momenta", self.momenta)):
            for v in pts:
                if len(_as_point(v)) != d:
                    errs.append(f"{name}: entry {v!r} does not have dimension {d}")
                    break
        lg = self.lagrangian
        if len(_as_point(lg.x)) != d or len(_as_point(lg.y)) != d:
            errs.append("lagrangian: x and y must have the field dimension")
        if not lg.t > lg.s:
            errs.append("lagrangian: need t > s")
        tn = self.tent
        if tn.M is not None and tn.delta is not None and tn.delta > tn.M / 2 * (1 + 1e-12):
            errs.append(f"tent: delta={tn.delta:g} exceeds M/2={tn.M / 2:g}")
        if tn.M is not None and tn.env_dt is not None and not _multiple(tn.M / 2, tn.env_dt):
            errs.append("tent: M/2 must be a multiple of env_dt")
        hj = self.hj
        if hj.method not in ("hopf-lax", "fd", "both"):
            errs.append(f"hj: unknown method {hj.method!r}")
        if hj.method in ("fd", "both"):
            if hj.fd_h > hj.eps / 8 * (1 + _TOL):
                errs.append(f"hj: fd_h={hj.fd_h:g} exceeds eps/8={hj.eps / 8:g}")
        if not 0 < hj.theta <= 1:
            errs.append("hj: theta must lie in (0, 1]")
        if len(self.scaling.probe) != d + 1:
            errs.append("scaling.probe must be [x_1..x_d, t]")
        if self.tails.R <= 1:
            errs.append("tails: R must exceed 1")
        ps = self.psi
        if not _multiple(ps.dt, ps.env_dt):
            errs.append("psi: lattice dt must be a multiple of env_dt")
        if any(float(T) <= 0 for T in ps.T_list):
            errs.append("psi: horizons must be positive")
        if ps.optimizer_samples and not _multiple(ps.optimizer_T, ps.dt):
            errs.append("psi: optimizer_T must be a multiple of the lattice dt")
        if errs:
            raise ParameterError("; ".join(errs))


def _as_point(v) -> list:
    return [float(x) for x in (v if isinstance(v, (list, tuple)) else [v])]


def as_point(v) -> tuple:
    return tuple(_as_point(v))
