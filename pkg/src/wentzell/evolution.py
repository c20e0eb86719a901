"""Theta-scheme time stepping for the forward and adjoint systems.

One forward step on the coupled space reads

    (M + th dt (K + M B_{n+1})) y^{n+1} = (M - (1-th) dt (K + M B_n)) y^n + dt M F_{n+th}

and the adjoint marches the transposed steps from ``T`` down to ``0``,
so every duality identity holds to rounding on the discrete level.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgument, SolverError
from .fields import L2Pair, Trajectory, trapezoid_weights
from .geometry import ControlRegion, DISK
from .operators import DiscreteOperator, PotentialPair

DIRECT_LIMIT = 200_000


@dataclass(frozen=True)
class EvolutionConfig:
    T: float = 1.0
    M: int = 200
    theta: float = 0.5
    solver_tol: float = 1e-12

    def __post_init__(self):
        if not self.T > 0:
            raise InvalidArgument(f"T must be positive, got {self.T}")
        if int(self.M) < 2:
            raise InvalidArgument(f"M must be at least 2, got {self.M}")
        if not 0.5 <= self.theta <= 1.0:
            raise InvalidArgument(f"theta must lie in [1/2, 1], got {self.theta}")

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.M + 1)


@dataclass(frozen=True)
class SourceData:
    """Initial pair and right-hand sides.

    ``f`` and ``g`` are callables ``t -> array`` (or ``None``); the control
    ``v`` is a nodal array of shape ``(M + 1, n_bulk)`` (or ``None``).
    """

    y0: L2Pair
    f: Callable | None = None
    g: Callable | None = None
    v: np.ndarray | None = None

    def check_support(self, region: ControlRegion) -> None:
        if self.v is not None and np.any(self.v * (1 - region.indicator) != 0):
            raise InvalidArgument("control is not supported in the control region")


def region_mass(op: DiscreteOperator, region: ControlRegion) -> np.ndarray:
    """Coupled-space weights with which a control on ``region`` enters."""
    mesh = op.mesh
    m = mesh.bulk_weights * region.indicator
    if region.surface is not None:
        m = m + mesh.trace_map.T @ (mesh.boundary_weights * region.surface)
    return m


class Propagator:
    """Step matrices for one (operator, potentials, time grid) triple.

    Factorizations are computed on first use and kept, so repeated solves
    (conjugate-gradient sweeps) pay for them once.
    """

    def __init__(self, op: DiscreteOperator, pot: PotentialPair | None, cfg: EvolutionConfig):
        self.op, self.cfg = op, cfg
        self.pot = pot or PotentialPair.zero()
        self.M, self.dt, self.theta = cfg.M, cfg.dt, cfg.theta
        self.times = cfg.times
        self.m_c = op.m_c
        if self.pot.is_zero:
            self._mB = None
        elif self.pot.static:
            self._mB = op.potential_mass(self.pot, 0.0)
        else:
            self._mB = np.array([op.potential_mass(self.pot, t) for t in self.times])
        self._solvers = {}

    @property
    def static(self) -> bool:
        return self._mB is None or self._mB.ndim == 1

    def mB(self, n: int):
        if self._mB is None:
            return 0.0
        return self._mB if self._mB.ndim == 1 else self._mB[n]

    def _lhs_matrix(self, n: int) -> sp.csc_matrix:
        diag = self.m_c + self.theta * self.dt * self.mB(n)
        return (sp.diags(diag) + (self.theta * self.dt) * self.op.K_c).tocsc()

    def _solver(self, n: int):
        key = 0 if self.static else n
        if key not in self._solvers:
            A = self._lhs_matrix(n)
            if A.shape[0] <= DIRECT_LIMIT:
                self._solvers[key] = spla.splu(A).solve
            else:
                self._solvers[key] = self._iterative(A)
        return self._solvers[key]

    def _iterative(self, A):
        pre = sp.diags(1.0 / A.diagonal())
        tol = self.cfg.solver_tol

        def solve(b):
            x, info = spla.cg(A, b, rtol=tol, M=pre, maxiter=10 * A.shape[0])
            if info != 0:
                res = np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300)
                raise SolverError("step solve failed", {"info": info, "relative_residual": res})
            return x

        return solve

    def solve_lhs(self, n: int, b: np.ndarray) -> np.ndarray:
        """Apply ``L_n^{-1}`` (``L_n`` the implicit matrix at node ``n``)."""
        return self._solver(n)(b)

    def apply_rhs(self, n: int, y: np.ndarray) -> np.ndarray:
        """Apply ``R_n = M - (1 - th) dt (K + M B_n)``."""
        out = self.m_c * y
        c = (1.0 - self.theta) * self.dt
        if c:
            out = out - c * (self.op.K_c @ y + self.mB(n) * y)
        return out

    def apply_lhs(self, n: int, y: np.ndarray) -> np.ndarray:
        c = self.theta * self.dt
        return self.m_c * y + c * (self.op.K_c @ y + self.mB(n) * y)

    def forward(self, u0: np.ndarray, forcing: np.ndarray | None = None) -> np.ndarray:
        """March from ``u0``; ``forcing[n]`` is ``M F_{n+th}`` (mass-weighted)."""
        U = np.empty((self.M + 1, self.op.size))
        U[0] = u0
        for n in range(self.M):
            rhs = self.apply_rhs(n, U[n])
            if forcing is not None:
                rhs = rhs + self.dt * forcing[n]
            U[n + 1] = self.solve_lhs(n + 1, rhs)
        return U

    def adjoint_sweep(self, qT: np.ndarray, running: np.ndarray | None = None):
        """Reverse-mode sweep through the forward recursion.

        ``qT`` and ``running[n]`` are Euclidean gradients of a functional with
        respect to ``y^M`` and ``y^n``. Returns ``(q, r)`` where ``q[n]`` is the
        total gradient with respect to ``y^n`` and ``r[n] = L_n^{-1} q[n]``
        (``r[0] = r[M+1] = 0``) carries the sensitivity to ``F_{n-1+th}``.
        """
        M, N = self.M, self.op.size
        q = np.empty((M + 1, N))
        r = np.zeros((M + 2, N))
        q[M] = qT if running is None else qT + running[M]
        for n in range(M - 1, -1, -1):
            r[n + 1] = self.solve_lhs(n + 1, q[n + 1])
            q[n] = self.apply_rhs(n, r[n + 1])
            if running is not None:
                q[n] += running[n]
        return q, r

    def nodal_forcing(self, v: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """``weights * v`` at the intermediate times ``t_{n+th}``."""
        return weights * ((1.0 - self.theta) * v[:-1] + self.theta * v[1:])

    def nodal_gradient(self, r: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Euclidean gradient with respect to nodal ``v`` given sweep output ``r``."""
        return weights * (self.dt * ((1.0 - self.theta) * r[1:] + self.theta * r[:-1]))


def _source_forcing(prop: Propagator, src_f, src_g, v) -> np.ndarray | None:
    op, cfg = prop.op, prop.cfg
    if src_f is None and src_g is None and v is None:
        return None
    mesh = op.mesh
    forcing = np.zeros((cfg.M, op.size))
    if src_f is not None or src_g is not None:
        for n in range(cfg.M):
            t = (n + cfg.theta) * cfg.dt
            fb = 0.0 if src_f is None else np.asarray(src_f(t), float)
            gb = 0.0 if src_g is None else np.asarray(src_g(t), float)
            forcing[n] = op.source_mass(np.broadcast_to(fb, (mesh.n_bulk,)), gb)
    if v is not None:
        forcing += prop.nodal_forcing(np.asarray(v, float), mesh.bulk_weights)
    return forcing


def _trajectory(op: DiscreteOperator, cfg: EvolutionConfig, U: np.ndarray) -> Trajectory:
    bulk, surf = op.embed_rows(U)
    return Trajectory(cfg.times, bulk, surf.copy())


def _check_source(op: DiscreteOperator, src: SourceData, cfg: EvolutionConfig) -> None:
    if not src.y0.conforms(op.mesh):
        raise InvalidArgument("initial pair does not conform to mesh")
    if src.v is not None and np.shape(src.v) != (cfg.M + 1, op.size):
        raise InvalidArgument(f"control must have shape {(cfg.M + 1, op.size)}, got {np.shape(src.v)}")


def solve_forward(op: DiscreteOperator, pot: PotentialPair | None, src: SourceData,
                  cfg: EvolutionConfig, *, prop: Propagator | None = None) -> Trajectory:
    """Forward solve of the bulk-surface system from ``src.y0``.

    A pair that is not trace-related is first projected onto the coupled
    space (the discrete counterpart of instant smoothing).
    """
    _check_source(op, src, cfg)
    prop = prop or Propagator(op, pot, cfg)
    forcing = _source_forcing(prop, src.f, src.g, src.v)
    return _trajectory(op, cfg, prop.forward(op.project(src.y0), forcing))


def solve_backward(op: DiscreteOperator, pot: PotentialPair | None, f, g, phi_T: L2Pair,
                   cfg: EvolutionConfig, *, prop: Propagator | None = None) -> Trajectory:
    """Backward solve of the adjoint system from ``phi(T) = phi_T``.

    Without sources this is the exact transpose of the forward stepping.
    With sources ``f``/``g`` it is the forward solve of the time-reversed
    problem, read backwards.
    """
    if not phi_T.conforms(op.mesh):
        raise InvalidArgument("terminal pair does not conform to mesh")
    pot = pot or PotentialPair.zero()
    if f is None and g is None:
        prop = prop or Propagator(op, pot, cfg)
        q, _ = prop.adjoint_sweep(op.m_c * op.project(phi_T))
        return _trajectory(op, cfg, q / op.m_c)
    T = cfg.T
    fr = None if f is None else (lambda t: f(T - t))
    gr = None if g is None else (lambda t: g(T - t))
    fwd = solve_forward(op, pot.reversed(T), SourceData(phi_T, fr, gr), cfg)
    return fwd.reversed()


def mass_functional(tr: Trajectory, mesh) -> np.ndarray:
    """``int_Omega y dx + int_Gamma y dS`` at each time node."""
    return tr.bulk @ mesh.bulk_weights + tr.surface @ mesh.boundary_weights


def _test_functions(op: DiscreteOperator, cfg: EvolutionConfig) -> list[np.ndarray]:
    mesh = op.mesh
    x, y = mesh.bulk_nodes[:, 0], mesh.bulk_nodes[:, 1]
    if mesh.kind == DISK:
        space = [np.ones_like(x), x, y, x**2 - y**2, x * y, x**2 + y**2]
    else:
        L = mesh.length
        space = [np.ones_like(x), x / L, (x / L) ** 2, np.cos(np.pi * x / L)]
    t = cfg.times
    T = cfg.T
    time = [np.cos(np.pi * t / (2 * T)), np.cos(3 * np.pi * t / (2 * T)), 1 - t / T]
    return [np.outer(tk, sk) for tk in time for sk in space]


def residual_distributional(tr: Trajectory, op: DiscreteOperator, pot: PotentialPair | None,
                            src: SourceData, cfg: EvolutionConfig) -> float:
    """Largest normalized weak-form defect over a fixed family of test functions.

    For a test trajectory ``psi`` with ``psi(T) = 0`` the discrete weak form
    (time derivative moved onto ``psi`` by summation by parts) is

        -sum_n <psi_{n} - psi_{n-1}, y^n> + dt sum_n <A_n y^n, psi~_n>
        + <psi_{M-1}, y^M> - <psi_0, y_0> - dt sum_n <F_{n+th}, psi_n>

    with ``psi_n = th psi^{n+1} + (1-th) psi^n``. It vanishes for the
    forward solution up to solver error.
    """
    if not tr.conforms(op.mesh) or tr.M != cfg.M:
        raise InvalidArgument("trajectory does not conform to mesh/time grid")
    _check_source(op, src, cfg)
    prop = Propagator(op, pot, cfg)
    M, th, dt = cfg.M, cfg.theta, cfg.dt
    mc = op.m_c
    U = np.array([op.project(tr.state(n)) for n in range(M + 1)])
    u0 = op.project(src.y0)
    forcing = _source_forcing(prop, src.f, src.g, src.v)
    AU = np.array([op.K_c @ U[n] + prop.mB(n) * U[n] for n in range(M + 1)])
    tw = trapezoid_weights(M, dt)
    worst = 0.0
    for psi in _test_functions(op, cfg):
        psi[-1] = 0.0
        pb = th * psi[1:] + (1 - th) * psi[:-1]  # M rows
        ext = np.vstack([np.zeros(op.size), pb, np.zeros(op.size)])  # pb_{-1}, ..., pb_M
        comb = th * ext[:-1] + (1 - th) * ext[1:]  # n = 0..M
        val = -np.sum((pb[1:] - pb[:-1]) * (mc * U[1:M]))
        val += dt * np.sum(AU * comb)
        val += pb[M - 1] @ (mc * U[M]) - pb[0] @ (mc * u0)
        if forcing is not None:
            val -= dt * np.sum(pb * forcing)
        nrm = np.sqrt(np.sum(tw * ((psi**2) @ mc)))
        worst = max(worst, abs(val) / nrm)
    return float(worst)
