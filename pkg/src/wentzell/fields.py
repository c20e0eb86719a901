"""Bulk/surface pairs, trajectories, and the quadratures acting on them."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import InvalidArgument, SingularWeight
from .geometry import Mesh


@dataclass(frozen=True)
class L2Pair:
    """A bulk field and a surface field. No trace relation is implied."""

    bulk: np.ndarray
    surface: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bulk", np.asarray(self.bulk, dtype=float))
        object.__setattr__(self, "surface", np.asarray(self.surface, dtype=float))

    @classmethod
    def constant(cls, mesh: Mesh, bulk: float = 1.0, surface: float | None = None) -> "L2Pair":
        surface = bulk if surface is None else surface
        return cls(np.full(mesh.n_bulk, float(bulk)), np.full(mesh.n_boundary, float(surface)))

    @classmethod
    def zeros(cls, mesh: Mesh) -> "L2Pair":
        return cls(np.zeros(mesh.n_bulk), np.zeros(mesh.n_boundary))

    @classmethod
    def from_function(cls, mesh: Mesh, fn: Callable) -> "L2Pair":
        """Evaluate ``fn(x, y)`` at bulk nodes and take its trace on the boundary."""
        b = np.asarray(fn(mesh.bulk_nodes[:, 0], mesh.bulk_nodes[:, 1]), dtype=float)
        b = np.broadcast_to(b, (mesh.n_bulk,)).copy()
        return cls(b, b[mesh.trace_index].copy())

    @classmethod
    def random_smooth(cls, mesh: Mesh, rng: np.random.Generator, degree: int = 3) -> "L2Pair":
        """Random polynomial of total degree ``degree`` in ``(x, y)`` with its trace.

        Coefficients are standard normal and the result is scaled to unit
        maximum, so draws are comparable across meshes.
        """
        x, y = mesh.bulk_nodes[:, 0], mesh.bulk_nodes[:, 1]
        b = np.zeros(mesh.n_bulk)
        for i in range(degree + 1):
            for j in range(degree + 1 - i):
                b += rng.standard_normal() * x**i * y**j
        b /= max(np.abs(b).max(), np.finfo(float).tiny)
        return cls(b, b[mesh.trace_index].copy())

    def conforms(self, mesh: Mesh) -> bool:
        return self.bulk.shape == (mesh.n_bulk,) and self.surface.shape == (mesh.n_boundary,)

    def __add__(self, other: "L2Pair") -> "L2Pair":
        return L2Pair(self.bulk + other.bulk, self.surface + other.surface)

    def __sub__(self, other: "L2Pair") -> "L2Pair":
        return L2Pair(self.bulk - other.bulk, self.surface - other.surface)

    def __mul__(self, c: float) -> "L2Pair":
        return L2Pair(c * self.bulk, c * self.surface)

    __rmul__ = __mul__


def _check(mesh: Mesh, *pairs: L2Pair) -> None:
    for p in pairs:
        if not p.conforms(mesh):
            raise InvalidArgument(
                f"pair of sizes ({p.bulk.shape}, {p.surface.shape}) does not conform to "
                f"mesh ({mesh.n_bulk}, {mesh.n_boundary})"
            )


def inner(a: L2Pair, b: L2Pair, mesh: Mesh) -> float:
    """The L2(Omega) x L2(Gamma) pairing with the mesh quadrature."""
    _check(mesh, a, b)
    return float(
        np.dot(a.bulk * b.bulk, mesh.bulk_weights)
        + np.dot(a.surface * b.surface, mesh.boundary_weights)
    )


def norm(a: L2Pair, mesh: Mesh) -> float:
    return float(np.sqrt(inner(a, a, mesh)))


def trapezoid_weights(M: int, dt: float) -> np.ndarray:
    w = np.full(M + 1, dt)
    w[[0, -1]] = 0.5 * dt
    return w


@dataclass(frozen=True)
class Trajectory:
    """States on the uniform grid ``t_n = n T / M``, stacked row-wise."""

    times: np.ndarray
    bulk: np.ndarray
    surface: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise InvalidArgument("a trajectory needs at least two time nodes")
        steps = np.diff(t)
        if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * t[-1]:
            raise InvalidArgument("time grid must be strictly increasing and uniform")
        if self.bulk.shape[0] != len(t) or self.surface.shape[0] != len(t):
            raise InvalidArgument("one state per time node is required")

    @classmethod
    def uniform(cls, T: float, M: int, bulk: np.ndarray, surface: np.ndarray) -> "Trajectory":
        return cls(np.linspace(0.0, T, M + 1), np.asarray(bulk, float), np.asarray(surface, float))

    @property
    def M(self) -> int:
        return len(self.times) - 1

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> float:
        return self.T / self.M

    def __len__(self) -> int:
        return len(self.times)

    def state(self, n: int) -> L2Pair:
        return L2Pair(self.bulk[n], self.surface[n])

    @property
    def states(self) -> list[L2Pair]:
        return [self.state(n) for n in range(len(self))]

    def final(self) -> L2Pair:
        return self.state(-1)

    def reversed(self) -> "Trajectory":
        return Trajectory(self.times, self.bulk[::-1].copy(), self.surface[::-1].copy())

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        return Trajectory(self.times, self.bulk - other.bulk, self.surface - other.surface)

    def conforms(self, mesh: Mesh) -> bool:
        return self.bulk.shape[1] == mesh.n_bulk and self.surface.shape[1] == mesh.n_boundary

    def node_norms(self, mesh: Mesh) -> np.ndarray:
        """Pair norm at every time node."""
        return np.sqrt(self.bulk**2 @ mesh.bulk_weights + self.surface**2 @ mesh.boundary_weights)

    def to_csv(self, path, mesh: Mesh) -> None:
        """Long format: t, node_id, component, value (surface ids follow bulk ids)."""
        nb = mesh.n_bulk
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "node_id", "component", "value"])
            for n, t in enumerate(self.times):
                ts = repr(float(t))
                for i, v in enumerate(self.bulk[n]):
                    w.writerow([ts, i, "bulk", repr(float(v))])
                for i, v in enumerate(self.surface[n]):
                    w.writerow([ts, nb + i, "surface", repr(float(v))])

    def save(self, path) -> None:
        np.savez(Path(path), times=self.times, bulk=self.bulk, surface=self.surface)

    @classmethod
    def load(cls, path) -> "Trajectory":
        with np.load(Path(path)) as z:
            return cls(z["times"], z["bulk"], z["surface"])

    @classmethod
    def from_csv(cls, path, mesh: Mesh) -> "Trajectory":
        rows = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=None, encoding=None)
        times = np.unique([float(r[0]) for r in rows])
        nb, ng = mesh.n_bulk, mesh.n_boundary
        bulk = np.zeros((len(times), nb))
        surf = np.zeros((len(times), ng))
        index = {t: n for n, t in enumerate(times)}
        for t, node, comp, val in rows:
            n = index[float(t)]
            if comp == "bulk":
                bulk[n, int(node)] = val
            else:
                surf[n, int(node) - nb] = val
        return cls(times, bulk, surf)


def _eval_weight(w, t):
    out = w(t)
    if isinstance(out, L2Pair):
        return out.bulk, out.surface
    return out


def weighted_time_norm(tr: Trajectory, w: Callable | None, mesh: Mesh) -> float:
    """Trapezoidal approximation of the integral over (0, T) of ``|w(t) y(t)|^2``.

    ``w(t)`` returns ``(bulk_weight, surface_weight)`` (arrays or scalars) or
    an :class:`L2Pair`. At ``t = 0`` and ``t = T`` a weight that is singular
    (raises :class:`SingularWeight` or is not finite) contributes zero,
    i.e. the integrand is taken by its continuous extension. A non-finite
    weight at an interior node is an error. Time nodes where the data
    vanishes are skipped without evaluating ``w``.
    """
    if not tr.conforms(mesh):
        raise InvalidArgument("trajectory does not conform to mesh")
    tw = trapezoid_weights(tr.M, tr.dt)
    total = 0.0
    for n, t in enumerate(tr.times):
        endpoint = n in (0, tr.M)
        if not (np.any(tr.bulk[n]) or np.any(tr.surface[n])):
            continue
        if w is None:
            wb, ws = 1.0, 1.0
        else:
            try:
                wb, ws = _eval_weight(w, t)
            except (SingularWeight, FloatingPointError, OverflowError):
                if endpoint:
                    continue
                raise
            wb, ws = np.asarray(wb, float), np.asarray(ws, float)
            if not (np.all(np.isfinite(wb)) and np.all(np.isfinite(ws))):
                if endpoint:
                    continue
                raise SingularWeight(f"weight is not finite at interior time t={t}")
        yb, ys = wb * tr.bulk[n], ws * tr.surface[n]
        total += tw[n] * (np.dot(yb * yb, mesh.bulk_weights) + np.dot(ys * ys, mesh.boundary_weights))
    return float(total)
