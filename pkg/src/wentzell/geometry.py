"""Discrete geometries: the polar disk and the unit-interval test bed.

Nodes are ordered bulk first. On the disk the bulk nodes are the origin
followed by the rings ``r_j = j R / n_r`` (``j = 1..n_r``), angle fastest;
the outermost ring lies on the circle and doubles as the boundary grid.
On the interval the boundary is the two endpoints with counting measure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument

DISK = "disk"
INTERVAL = "interval"


@dataclass(frozen=True)
class Mesh:
    kind: str
    bulk_nodes: np.ndarray
    bulk_weights: np.ndarray
    boundary_nodes: np.ndarray
    boundary_weights: np.ndarray
    trace_index: np.ndarray
    h: float
    radius: float | None = None
    length: float | None = None
    n_r: int = 0
    n_theta: int = 0
    trace_map: sp.csr_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nb, ng = self.n_bulk, self.n_boundary
        tm = sp.csr_matrix(
            (np.ones(ng), (np.arange(ng), self.trace_index)), shape=(ng, nb)
        )
        object.__setattr__(self, "trace_map", tm)

    @property
    def n_bulk(self) -> int:
        return len(self.bulk_weights)

    @property
    def n_boundary(self) -> int:
        return len(self.boundary_weights)

    @property
    def area(self) -> float:
        """Exact measure of the continuous domain."""
        if self.kind == DISK:
            return np.pi * self.radius**2
        return self.length

    @property
    def perimeter(self) -> float:
        if self.kind == DISK:
            return 2 * np.pi * self.radius
        return 2.0

    def ring(self, j: int) -> np.ndarray:
        """Bulk indices of ring ``j`` (``j = 0`` is the origin)."""
        if self.kind != DISK:
            raise InvalidArgument("rings exist only on the disk")
        if j == 0:
            return np.array([0])
        start = 1 + (j - 1) * self.n_theta
        return np.arange(start, start + self.n_theta)

    def radii(self) -> np.ndarray:
        return np.hypot(self.bulk_nodes[:, 0], self.bulk_nodes[:, 1])

    def interior_mask(self) -> np.ndarray:
        """True on bulk nodes that are not on the boundary."""
        mask = np.ones(self.n_bulk, dtype=bool)
        mask[self.trace_index] = False
        return mask

    def to_csv(self, path) -> None:
        """Write the node table: id, x, y, weight, is_boundary.

        Boundary rows follow the bulk rows and carry surface weights.
        """
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "x", "y", "weight", "is_boundary"])
            for i, (p, wt) in enumerate(zip(self.bulk_nodes, self.bulk_weights)):
                w.writerow([i, repr(float(p[0])), repr(float(p[1])), repr(float(wt)), 0])
            off = self.n_bulk
            for i, (p, wt) in enumerate(zip(self.boundary_nodes, self.boundary_weights)):
                w.writerow(
                    [off + i, repr(float(p[0])), repr(float(p[1])), repr(float(wt)), 1]
                )


def _disk(n_r: int, n_theta: int, radius: float) -> Mesh:
    h = radius / n_r
    dtheta = 2 * np.pi / n_theta
    theta = dtheta * np.arange(n_theta)
    r = h * np.arange(1, n_r + 1)

    rr = np.repeat(r, n_theta)
    tt = np.tile(theta, n_r)
    nodes = np.vstack([[0.0, 0.0], np.column_stack([rr * np.cos(tt), rr * np.sin(tt)])])

    # control-volume areas; the outer ring only owns the half cell inside the circle
    w_ring = r * h * dtheta
    w_ring[-1] = 0.5 * (radius**2 - (radius - 0.5 * h) ** 2) * dtheta
    weights = np.concatenate([[np.pi * (0.5 * h) ** 2], np.repeat(w_ring, n_theta)])

    trace = 1 + (n_r - 1) * n_theta + np.arange(n_theta)
    return Mesh(
        kind=DISK,
        bulk_nodes=nodes,
        bulk_weights=weights,
        boundary_nodes=nodes[trace].copy(),
        boundary_weights=np.full(n_theta, radius * dtheta),
        trace_index=trace,
        h=h,
        radius=float(radius),
        n_r=n_r,
        n_theta=n_theta,
    )


def _interval(n: int, length: float) -> Mesh:
    h = length / n
    x = h * np.arange(n + 1)
    weights = np.full(n + 1, h)
    weights[[0, -1]] = 0.5 * h
    nodes = np.column_stack([x, np.zeros_like(x)])
    trace = np.array([0, n])
    return Mesh(
        kind=INTERVAL,
        bulk_nodes=nodes,
        bulk_weights=weights,
        boundary_nodes=nodes[trace].copy(),
        boundary_weights=np.ones(2),
        trace_index=trace,
        h=h,
        length=float(length),
        n_r=n,
    )


def build_mesh(kind: str, *, n_r: int = 16, n_theta: int = 64, radius: float = 1.0,
               n: int = 200, length: float = 1.0) -> Mesh:
    """Build a disk (``n_r``, ``n_theta``, ``radius``) or interval (``n``, ``length``)."""
    if kind == DISK:
        if int(n_r) < 2 or int(n_theta) < 2:
            raise InvalidArgument(f"disk resolution must be >= 2, got n_r={n_r}, n_theta={n_theta}")
        if not radius > 0:
            raise InvalidArgument(f"radius must be positive, got {radius}")
        return _disk(int(n_r), int(n_theta), float(radius))
    if kind == INTERVAL:
        if int(n) < 2:
            raise InvalidArgument(f"interval resolution must be >= 2, got n={n}")
        if not length > 0:
            raise InvalidArgument(f"length must be positive, got {length}")
        return _interval(int(n), float(length))
    raise InvalidArgument(f"unknown geometry kind {kind!r}")


@dataclass(frozen=True)
class ControlRegion:
    """Indicator of the control set on bulk nodes.

    ``surface`` is only ever nonzero for the full-observation region used
    by observability estimates; controls proper never reach the boundary.
    """

    indicator: np.ndarray
    descriptor: dict
    surface: np.ndarray | None = None

    @property
    def is_full(self) -> bool:
        return self.descriptor.get("kind") == "full"

    def contains(self, other: "ControlRegion") -> bool:
        return bool(np.all(self.indicator >= other.indicator))


def _descriptor_inside(mesh: Mesh, desc: dict) -> tuple[np.ndarray, float]:
    """Return (strict indicator, distance-to-boundary margin)."""
    if mesh.kind == DISK:
        cx, cy = desc.get("center", (0.0, 0.0))
        rad = float(desc["radius"])
        if rad <= 0:
            raise InvalidArgument("control disk radius must be positive")
        dist = np.hypot(mesh.bulk_nodes[:, 0] - cx, mesh.bulk_nodes[:, 1] - cy)
        margin = mesh.radius - (np.hypot(cx, cy) + rad)
        return (dist < rad).astype(float), margin
    lo, hi = (float(v) for v in desc["segment"])
    if not lo < hi:
        raise InvalidArgument(f"empty control segment ({lo}, {hi})")
    x = mesh.bulk_nodes[:, 0]
    margin = min(lo, mesh.length - hi)
    return ((x > lo) & (x < hi)).astype(float), margin


def control_mask(mesh: Mesh, descriptor: dict) -> ControlRegion:
    """Indicator of an open disk (``center``, ``radius``) or segment (``segment``)."""
    desc = dict(descriptor)
    desc.setdefault("kind", "disk" if mesh.kind == DISK else "segment")
    if mesh.kind == DISK and "center" in desc:
        desc["center"] = tuple(float(c) for c in desc["center"])
    ind, margin = _descriptor_inside(mesh, desc)
    if margin <= 0:
        raise InvalidArgument(f"control region {desc} is not strictly inside the domain")
    if np.any(ind[mesh.trace_index] != 0):
        raise InvalidArgument("control region reaches boundary nodes")
    if not ind.any():
        raise InvalidArgument(f"control region {desc} contains no mesh node")
    return ControlRegion(indicator=ind, descriptor=desc)


def full_observation(mesh: Mesh) -> ControlRegion:
    """Observation of the whole pair space, bulk and surface.

    Not a valid control set (it touches the boundary); used for the
    full-observation reference case of the observability estimate.
    """
    return ControlRegion(
        indicator=np.ones(mesh.n_bulk),
        descriptor={"kind": "full"},
        surface=np.ones(mesh.n_boundary),
    )


def shrink(mesh: Mesh, region: ControlRegion, factor: float = 0.5) -> ControlRegion:
    """Concentric sub-region at ``factor`` times the radius/extent."""
    desc = dict(region.descriptor)
    if desc.get("kind") == "full":
        raise InvalidArgument("cannot shrink the full-observation region")
    if mesh.kind == DISK:
        desc["radius"] = factor * float(desc["radius"])
    else:
        lo, hi = desc["segment"]
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo) * factor
        desc["segment"] = (mid - half, mid + half)
    return control_mask(mesh, desc)
