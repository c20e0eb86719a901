"""Discrete generator of the bulk-surface heat semigroup.

The stiffness is assembled edge by edge from the energy form

    d * int_Omega grad y . grad z dx + delta * int_Gamma grad_G y . grad_G z dS

on the trace-coupled nodal space (boundary unknowns are the outer-ring
values), so symmetry, semidefiniteness and the constant kernel hold to
rounding. States of the evolution live in this coupled space with the
lumped mass ``m_c = bulk_weights + T^T boundary_weights``; general pairs
are mapped in by the L2-orthogonal projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, InvalidArgument
from .fields import L2Pair
from .geometry import DISK, Mesh


def _evaluator(value) -> Callable[[float], np.ndarray | float]:
    if value is None:
        return lambda t: 0.0
    if callable(value):
        return value
    const = np.asarray(value, dtype=float)
    return lambda t: const


@dataclass(frozen=True)
class PotentialPair:
    """Bulk potential ``a(t, x)`` and surface potential ``b(t, x)``.

    Either entry may be ``None`` (zero), a scalar, a nodal array, or a
    callable ``t -> scalar | array``. ``static`` marks time-independent
    potentials so that step factorizations can be shared across steps.
    """

    a: object = None
    b: object = None
    static: bool | None = None

    def __post_init__(self):
        if self.static is None:
            object.__setattr__(self, "static", not (callable(self.a) or callable(self.b)))

    @classmethod
    def zero(cls) -> "PotentialPair":
        return cls(None, None, static=True)

    @property
    def is_zero(self) -> bool:
        return self.a is None and self.b is None

    def bulk(self, t: float, mesh: Mesh) -> np.ndarray:
        return np.broadcast_to(np.asarray(_evaluator(self.a)(t), float), (mesh.n_bulk,))

    def surface(self, t: float, mesh: Mesh) -> np.ndarray:
        return np.broadcast_to(np.asarray(_evaluator(self.b)(t), float), (mesh.n_boundary,))

    def sup_norm(self, times, mesh: Mesh) -> float:
        return max(
            max(np.max(np.abs(self.bulk(t, mesh))), np.max(np.abs(self.surface(t, mesh))))
            for t in times
        )

    def check_bound(self, times, mesh: Mesh, R_bound: float) -> None:
        val = self.sup_norm(times, mesh)
        if not np.isfinite(val) or val > R_bound:
            raise InvalidArgument(f"potential sup-norm {val:.6g} exceeds bound {R_bound}")

    def reversed(self, T: float) -> "PotentialPair":
        """Potentials evaluated at ``T - t``."""
        a, b = _evaluator(self.a), _evaluator(self.b)
        if self.static:
            return self
        return PotentialPair(lambda t: a(T - t), lambda t: b(T - t), static=False)


def _edge_matrix(n: int, i, j, c) -> sp.csr_matrix:
    i, j, c = (np.asarray(v) for v in (i, j, c))
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    vals = np.concatenate([c, c, -c, -c])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _disk_stiffness(mesh: Mesh, d: float, delta: float) -> sp.csr_matrix:
    n_r, n_t, h, R = mesh.n_r, mesh.n_theta, mesh.h, mesh.radius
    dth = 2 * np.pi / n_t
    k = np.arange(n_t)
    I, J, C = [], [], []

    # origin to first ring: face of length (h/2) dtheta at distance h
    I.append(np.zeros(n_t, int)); J.append(mesh.ring(1)); C.append(np.full(n_t, d * 0.5 * dth))
    for j in range(1, n_r):
        r_face = (j + 0.5) * h
        I.append(mesh.ring(j)); J.append(mesh.ring(j + 1)); C.append(np.full(n_t, d * r_face * dth / h))
    for j in range(1, n_r + 1):
        ext = h if j < n_r else 0.5 * h
        ring = mesh.ring(j)
        I.append(ring); J.append(ring[(k + 1) % n_t]); C.append(np.full(n_t, d * ext / (j * h * dth)))
    if delta:
        ring = mesh.ring(n_r)
        I.append(ring); J.append(ring[(k + 1) % n_t]); C.append(np.full(n_t, delta / (R * dth)))
    return _edge_matrix(mesh.n_bulk, np.concatenate(I), np.concatenate(J), np.concatenate(C))


def _interval_stiffness(mesh: Mesh, d: float) -> sp.csr_matrix:
    n = mesh.n_bulk
    i = np.arange(n - 1)
    return _edge_matrix(n, i, i + 1, np.full(n - 1, d / mesh.h))


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Stiffness and lumped mass of the coupled bulk-surface generator.

    ``A = -M^{-1} K`` on pairs; ``stiffness`` and ``mass`` are the
    pair-space (bulk + surface) matrices, ``K_c`` and ``m_c`` their
    coupled-space counterparts used by the time steppers.
    """

    mesh: Mesh
    d: float
    delta: float
    K_c: sp.csr_matrix = field(repr=False)

    @cached_property
    def m_c(self) -> np.ndarray:
        return self.mesh.bulk_weights + self.mesh.trace_map.T @ self.mesh.boundary_weights

    @property
    def size(self) -> int:
        return self.mesh.n_bulk

    @cached_property
    def mass(self) -> np.ndarray:
        return np.concatenate([self.mesh.bulk_weights, self.mesh.boundary_weights])

    @cached_property
    def embedding(self) -> sp.csr_matrix:
        """Coupled vector -> stacked pair ``(u, trace u)``."""
        return sp.vstack([sp.identity(self.size, format="csr"), self.mesh.trace_map]).tocsr()

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        E, M = self.embedding, sp.diags(self.mass)
        Minv = sp.diags(1.0 / self.m_c)
        return (M @ E @ Minv @ self.K_c @ Minv @ E.T @ M).tocsr()

    def project(self, y: L2Pair) -> np.ndarray:
        """L2-orthogonal projection of a pair onto the coupled space."""
        if not y.conforms(self.mesh):
            raise InvalidArgument("pair does not conform to the operator's mesh")
        mesh = self.mesh
        return (mesh.bulk_weights * y.bulk + mesh.trace_map.T @ (mesh.boundary_weights * y.surface)) / self.m_c

    def embed(self, u: np.ndarray) -> L2Pair:
        return L2Pair(u.copy(), u[self.mesh.trace_index].copy())

    def embed_rows(self, U: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return U, U[:, self.mesh.trace_index]

    def potential_mass(self, pot: PotentialPair, t: float) -> np.ndarray:
        """Diagonal of ``M_c B(t)`` on the coupled space."""
        mesh = self.mesh
        return mesh.bulk_weights * pot.bulk(t, mesh) + mesh.trace_map.T @ (
            mesh.boundary_weights * pot.surface(t, mesh)
        )

    def source_mass(self, f: np.ndarray | float, g: np.ndarray | float) -> np.ndarray:
        """``M_c`` times the projected source pair ``(f, g)``."""
        mesh = self.mesh
        return mesh.bulk_weights * f + mesh.trace_map.T @ (mesh.boundary_weights * np.broadcast_to(g, (mesh.n_boundary,)))

    def apply(self, y: L2Pair) -> L2Pair:
        """``A y``."""
        return self.embed(-(self.K_c @ self.project(y)) / self.m_c)

    @cached_property
    def diff(self) -> "DifferenceOperators":
        return difference_operators(self.mesh)

    def dump_triplets(self, prefix) -> tuple[Path, Path]:
        """Write K and the mass diagonal as ``i j value`` text files."""
        prefix = Path(prefix)
        kpath, mpath = prefix.with_name(prefix.name + "_K.txt"), prefix.with_name(prefix.name + "_mass.txt")
        K = self.stiffness.tocoo()
        with open(kpath, "w") as fh:
            for i, j, v in sorted(zip(K.row.tolist(), K.col.tolist(), K.data.tolist())):
                fh.write(f"{i} {j} {v!r}\n")
        with open(mpath, "w") as fh:
            for i, v in enumerate(self.mass.tolist()):
                fh.write(f"{i} {i} {v!r}\n")
        return kpath, mpath


def assemble(mesh: Mesh, d: float = 1.0, delta: float = 1.0) -> DiscreteOperator:
    if not d > 0:
        raise InvalidArgument(f"bulk diffusivity d must be positive, got {d}")
    if delta < 0:
        raise InvalidArgument(f"surface diffusivity delta must be nonnegative, got {delta}")
    if mesh.kind == DISK:
        K = _disk_stiffness(mesh, d, delta)
    else:
        K = _interval_stiffness(mesh, d)
    K.sum_duplicates()
    return DiscreteOperator(mesh=mesh, d=float(d), delta=float(delta), K_c=K)


def apply_operator(op: DiscreteOperator, pot: PotentialPair, t: float, y: L2Pair) -> L2Pair:
    """``A y - B(t) y`` with ``B(t)`` multiplying bulk by ``a`` and surface by ``b``."""
    Ay = op.apply(y)
    mesh = op.mesh
    return L2Pair(Ay.bulk - pot.bulk(t, mesh) * y.bulk, Ay.surface - pot.surface(t, mesh) * y.surface)


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray
    vectors: np.ndarray  # coupled-space eigenvectors, mass-normalized, one per column


def spectrum_smallest(op: DiscreteOperator, k: int, *, tol: float = 1e-12, maxiter: int | None = None) -> Spectrum:
    """The ``k`` smallest eigenvalues of ``-A`` (pencil ``(K_c, m_c)``)."""
    n = op.size
    if not 1 <= k <= n:
        raise InvalidArgument(f"k must lie in [1, {n}], got {k}")
    if n <= 1500 or k >= n - 1:
        from scipy.linalg import eigh

        s = 1.0 / np.sqrt(op.m_c)
        A = (op.K_c.toarray() * s[:, None]) * s[None, :]
        vals, vecs = eigh(A, subset_by_index=[0, k - 1])
        vecs = vecs * s[:, None]
    else:
        sigma = -1e-6 * abs(op.K_c.diagonal()).max() / op.m_c.max()
        try:
            vals, vecs = spla.eigsh(op.K_c.tocsc(), k=k, M=sp.diags(op.m_c).tocsc(), sigma=sigma,
                                    which="LM", tol=tol, maxiter=maxiter)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(
                "eigen-iteration did not converge",
                {"converged": len(exc.eigenvalues), "requested": k, "tol": tol, "maxiter": maxiter},
            ) from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    # fix sign so the largest-magnitude entry is positive
    idx = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.sign(vecs[idx, np.arange(vecs.shape[1])])
    return Spectrum(values=vals, vectors=vecs)


@dataclass(frozen=True)
class DifferenceOperators:
    """Strong-form finite differences used by diagnostics only.

    ``grad_x``, ``grad_y``, ``lap``: bulk -> bulk; ``normal``: bulk ->
    boundary (outward, one-sided second order); ``surf_lap`` and
    ``surf_grad``: boundary -> boundary (periodic, tangential).
    """

    grad_x: sp.csr_matrix
    grad_y: sp.csr_matrix
    lap: sp.csr_matrix
    normal: sp.csr_matrix
    surf_lap: sp.csr_matrix
    surf_grad: sp.csr_matrix


def _disk_differences(mesh: Mesh) -> DifferenceOperators:
    n_r, n_t, h, R = mesh.n_r, mesh.n_theta, mesh.h, mesh.radius
    if n_r < 3:
        raise InvalidArgument("difference operators need n_r >= 3")
    nb = mesh.n_bulk
    dth = 2 * np.pi / n_t
    theta = dth * np.arange(n_t)
    k = np.arange(n_t)
    kp, km = (k + 1) % n_t, (k - 1) % n_t

    def ring_rows(j, kk):
        return 0 if j == 0 else 1 + (j - 1) * n_t + kk

    Dr = sp.lil_matrix((nb, nb)); Drr = sp.lil_matrix((nb, nb))
    Dth = sp.lil_matrix((nb, nb)); Dthth = sp.lil_matrix((nb, nb))
    for j in range(1, n_r + 1):
        for kk in range(n_t):
            row = ring_rows(j, kk)
            if j < n_r:
                up, dn = ring_rows(j + 1, kk), ring_rows(j - 1, kk)
                Dr[row, up] += 0.5 / h; Dr[row, dn] -= 0.5 / h
                Drr[row, up] += 1 / h**2; Drr[row, row] -= 2 / h**2; Drr[row, dn] += 1 / h**2
            else:
                c1, c2, c3 = (ring_rows(j - i, kk) for i in (1, 2, 3))
                Dr[row, row] += 1.5 / h; Dr[row, c1] -= 2 / h; Dr[row, c2] += 0.5 / h
                for col, c in ((row, 2), (c1, -5), (c2, 4), (c3, -1)):
                    Drr[row, col] += c / h**2
            Dth[row, ring_rows(j, kp[kk])] += 0.5 / dth
            Dth[row, ring_rows(j, km[kk])] -= 0.5 / dth
            Dthth[row, ring_rows(j, kp[kk])] += 1 / dth**2
            Dthth[row, row] -= 2 / dth**2
            Dthth[row, ring_rows(j, km[kk])] += 1 / dth**2

    r = mesh.radii()
    rinv = np.zeros(nb); rinv[1:] = 1 / r[1:]
    ang = np.zeros(nb); ang[1:] = np.tile(theta, n_r)
    c, s = np.cos(ang), np.sin(ang)
    Dr, Drr, Dth, Dthth = (m.tocsr() for m in (Dr, Drr, Dth, Dthth))
    gx = sp.diags(c) @ Dr - sp.diags(s * rinv) @ Dth
    gy = sp.diags(s) @ Dr + sp.diags(c * rinv) @ Dth
    lap = Drr + sp.diags(rinv) @ Dr + sp.diags(rinv**2) @ Dthth

    ring1 = mesh.ring(1)
    origin = sp.lil_matrix((nb, nb))
    origin_x = sp.lil_matrix((nb, nb)); origin_y = sp.lil_matrix((nb, nb))
    origin[0, 0] = -4 / h**2
    for kk, col in enumerate(ring1):
        origin[0, col] = 4 / (h**2 * n_t)
        origin_x[0, col] = 2 * np.cos(theta[kk]) / (n_t * h)
        origin_y[0, col] = 2 * np.sin(theta[kk]) / (n_t * h)
    lap = (lap + origin).tocsr()
    gx = (gx + origin_x).tocsr()
    gy = (gy + origin_y).tocsr()

    normal = Dr[mesh.trace_index].tocsr()
    ng = mesh.n_boundary
    i = np.arange(ng)
    surf_lap = sp.csr_matrix(
        (np.concatenate([np.full(ng, -2.0), np.ones(ng), np.ones(ng)]) / (R * dth) ** 2,
         (np.tile(i, 3), np.concatenate([i, (i + 1) % ng, (i - 1) % ng]))), shape=(ng, ng))
    surf_grad = sp.csr_matrix(
        (np.concatenate([np.ones(ng), -np.ones(ng)]) / (2 * R * dth),
         (np.tile(i, 2), np.concatenate([(i + 1) % ng, (i - 1) % ng]))), shape=(ng, ng))
    return DifferenceOperators(gx, gy, lap, normal, surf_lap, surf_grad)


def _interval_differences(mesh: Mesh) -> DifferenceOperators:
    n, h = mesh.n_bulk, mesh.h
    D = sp.lil_matrix((n, n)); L = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        D[i, i + 1], D[i, i - 1] = 0.5 / h, -0.5 / h
        L[i, i - 1], L[i, i], L[i, i + 1] = 1 / h**2, -2 / h**2, 1 / h**2
    D[0, [0, 1, 2]] = np.array([-1.5, 2.0, -0.5]) / h
    D[n - 1, [n - 3, n - 2, n - 1]] = np.array([0.5, -2.0, 1.5]) / h
    L[0, [0, 1, 2, 3]] = np.array([2.0, -5.0, 4.0, -1.0]) / h**2
    L[n - 1, [n - 4, n - 3, n - 2, n - 1]] = np.array([-1.0, 4.0, -5.0, 2.0]) / h**2
    D = D.tocsr()
    normal = sp.vstack([-D[0], D[n - 1]]).tocsr()
    z = sp.csr_matrix((2, 2))
    return DifferenceOperators(D, sp.csr_matrix((n, n)), L.tocsr(), normal, z, z)


def difference_operators(mesh: Mesh) -> DifferenceOperators:
    return _disk_differences(mesh) if mesh.kind == DISK else _interval_differences(mesh)


def normal_derivative(op: DiscreteOperator, bulk: np.ndarray) -> np.ndarray:
    """Outward normal derivative of a bulk field on the boundary nodes."""
    return op.diff.normal @ bulk
