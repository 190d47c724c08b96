"""Lagrangian action of piecewise-linear paths.

The forcing integral int f(gamma_r) . dB_r is defined for arbitrary continuous
B through integration by parts,

    f(gamma_t).B_t - f(gamma_s).B_s - int_s^t Df(gamma_r) gamma'_r . B_r dr,

and the Riemann integral is computed by a composite trapezoid rule whose nodes
include every Brownian grid time, so B is exactly linear between nodes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import BrownianPath
from .errors import AlignmentError, HorizonError, ParameterError

_TOL = 1e-9


@dataclass(frozen=True)
class DiscretePath:
    """Nodes gamma_k at times s + k (t - s) / K, k = 0..K; shape (K+1, d)."""

    s: float
    t: float
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        if nodes.shape[0] < 2:
            raise ParameterError("a path needs at least two nodes")
        if not self.t > self.s:
            raise ParameterError("path requires s < t")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def K(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def d(self) -> int:
        return self.nodes.shape[1]

    @property
    def step(self) -> float:
        return (self.t - self.s) / self.K

    @property
    def times(self) -> np.ndarray:
        return self.s + self.step * np.arange(self.K + 1)

    @property
    def velocities(self) -> np.ndarray:
        return np.diff(self.nodes, axis=0) / self.step

    def split(self, k: int) -> tuple["DiscretePath", "DiscretePath"]:
        """Split at interior node k into [s, t_k] and [t_k, t]."""
        if not 0 < k < self.K:
            raise ParameterError("split node must be interior")
        r = self.s + k * self.step
        return DiscretePath(self.s, r, self.nodes[: k + 1]), DiscretePath(r, self.t, self.nodes[k:])

    def write_csv(self, fh) -> None:
        fh.write("k,t," + ",".join(f"x{i}" for i in range(self.d)) + "\n")
        for k, (tk, x) in enumerate(zip(self.times, self.nodes)):
            fh.write(f"{k},{tk!r}," + ",".join(repr(float(v)) for v in x) + "\n")


@dataclass(frozen=True)
class ActionBreakdown:
    kinetic: float
    forcing: float
    total: float

    @classmethod
    def of(cls, kinetic: float, forcing: float) -> "ActionBreakdown":
        return cls(float(kinetic), float(forcing), float(kinetic + forcing))


def brownian_steps(path: BrownianPath, s: float, step: float) -> tuple[int, int]:
    """(index of s, Brownian steps per segment); raises on misaligned grids."""
    nb = round(step / path.dt)
    if nb < 1 or abs(nb * path.dt - step) > _TOL * max(1.0, step):
        raise AlignmentError(f"segment length {step:g} is not a multiple of the Brownian step {path.dt:g}")
    i0 = round(s / path.dt)
    if abs(i0 * path.dt - s) > _TOL * max(1.0, abs(s)):
        raise AlignmentError(f"start time {s:g} is not on the Brownian grid")
    return i0, nb


def quadrature_nodes(path: BrownianPath, s: float, step: float, K: int,
                     subsamples: int) -> tuple[np.ndarray, np.ndarray, int]:
    """B at the trapezoid nodes of K consecutive segments, and the weights.

    Each segment's values are taken relative to B at the segment start.  The
    integral is unchanged in the continuum, but the quadrature error on
    int Df.gamma' dr is then multiplied by a local increment instead of B
    itself, which grows like sqrt(t) and which a minimizer could exploit.

    Returns (Bq of shape (K, J+1, m), weights of shape (J+1,), J) where
    J = subsamples * (Brownian steps per segment).
    """
    if subsamples < 1:
        raise ParameterError("subsamples must be at least 1")
    i0, nb = brownian_steps(path, s, step)
    if i0 < 0 or i0 + K * nb > path.n_steps:
        raise HorizonError(f"segments reach past the Brownian horizon {path.horizon:g}")
    J = nb * subsamples
    j = np.arange(J + 1)
    base = i0 + nb * np.arange(K)[:, None] + (j // subsamples)[None, :]
    frac = ((j % subsamples) / subsamples)[None, :, None]
    upper = np.minimum(base + 1, path.n_steps)
    vals = path.values
    Bq = (1.0 - frac) * vals[base] + frac * vals[upper]
    Bq = Bq - Bq[:, :1, :]
    wq = np.full(J + 1, step / J)
    wq[0] = wq[-1] = 0.5 * step / J
    return np.ascontiguousarray(Bq), wq, J


def kinetic_action(path: DiscretePath, ham) -> float:
    """sum_k H*((gamma_{k+1} - gamma_k) / dt) dt, exact for piecewise-linear paths."""
    return float(np.sum(ham.H_star(path.velocities)) * path.step)


def segment_forcing(starts: np.ndarray, ends: np.ndarray, seg: np.ndarray, field,
                    Bq: np.ndarray, wq: np.ndarray, step: float, amplitude: float = 1.0) -> np.ndarray:
    """Forcing integral over individual segments.

    ``starts``/``ends`` are (n, d) endpoints, ``seg`` the (n,) segment indices
    into ``Bq``.
    """
    J = len(wq) - 1
    frac = np.arange(J + 1) / J
    pos = starts[:, None, :] + frac[None, :, None] * (ends - starts)[:, None, :]
    vel = (ends - starts) / step
    B = Bq[seg]  # (n, J+1, m)
    bnd = np.einsum("nc,nc->n", field.value(ends), B[:, -1]) - np.einsum("nc,nc->n", field.value(starts), B[:, 0])
    dfv = np.einsum("njcl,nl->njc", field.gradient(pos), vel)
    integral = np.einsum("njc,njc,j->n", dfv, B, wq)
    return amplitude * (bnd - integral)


def forcing_integral(path: DiscretePath, env, subsamples: int = 4, amplitude: float = 1.0) -> float:
    """Nonadapted integral int f(gamma_r) . dB_r of a piecewise-linear path."""
    Bq, wq, _ = quadrature_nodes(env.path, path.s, path.step, path.K, subsamples)
    n = path.nodes
    per_seg = segment_forcing(n[:-1], n[1:], np.arange(path.K), env.field, Bq, wq, path.step, amplitude)
    return float(per_seg.sum())


def total_action(path: DiscretePath, env, ham, subsamples: int = 4, amplitude: float = 1.0) -> ActionBreakdown:
    return ActionBreakdown.of(kinetic_action(path, ham), forcing_integral(path, env, subsamples, amplitude))


def segment_actions(nodes: np.ndarray, seg: np.ndarray, env, ham, Bq, wq, step,
                    amplitude: float = 1.0) -> np.ndarray:
    """Kinetic plus forcing action of segments seg (from node seg to seg+1)."""
    a, b = nodes[seg], nodes[seg + 1]
    kin = ham.H_star((b - a) / step) * step
    return kin + segment_forcing(a, b, seg, env.field, Bq, wq, step, amplitude)


def action_and_gradient(nodes: np.ndarray, step: float, env, ham, Bq, wq,
                        amplitude: float = 1.0) -> tuple[float, np.ndarray]:
    """Total action of the path through ``nodes`` and its gradient in every node."""
    field = env.field
    K = nodes.shape[0] - 1
    J = len(wq) - 1
    a, b = nodes[:-1], nodes[1:]
    v = (b - a) / step
    frac = np.arange(J + 1) / J
    pos = a[:, None, :] + frac[None, :, None] * (b - a)[:, None, :]
    B = Bq[:K]
    Df = field.gradient(pos)                                # (K, J+1, m, d)
    D2f = field.hessian(pos)                                # (K, J+1, m, d, d)
    fb, fa = field.value(b), field.value(a)
    bnd = np.einsum("kc,kc->k", fb, B[:, -1]) - np.einsum("kc,kc->k", fa, B[:, 0])
    integral = np.einsum("kjcl,kl,kjc,j->k", Df, v, B, wq)
    kin = ham.H_star(v) * step
    total = float(np.sum(kin) + amplitude * np.sum(bnd - integral))

    pk = ham.map_p(v)
    grad = np.zeros_like(nodes)
    grad[1:] += pk
    grad[:-1] -= pk
    DfB = np.einsum("kjcl,kjc->kjl", Df, B)                 # Df^T B at every node
    hvB = np.einsum("kjclr,kr,kjc->kjl", D2f, v, B)         # (D2f v)^T B
    end_b = DfB[:, -1]
    end_a = DfB[:, 0]
    gb = end_b - np.einsum("j,kjl->kl", wq * frac, hvB) - np.einsum("j,kjl->kl", wq, DfB) / step
    ga = -end_a - np.einsum("j,kjl->kl", wq * (1 - frac), hvB) + np.einsum("j,kjl->kl", wq, DfB) / step
    grad[1:] += amplitude * gb
    grad[:-1] += amplitude * ga
    return total, grad
