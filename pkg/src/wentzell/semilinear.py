"""Null control of the semilinear system by fixed-point iteration on frozen potentials.

With ``F(xi) = F~(xi) xi`` and ``G(xi) = G~(xi) xi`` the map ``Phi`` sends a
state ``y`` to the controlled state of the linear problem with potentials
``a = F~(y)``, ``b = G~(y)``. The iteration ``y <- y + w (Phi(y) - y)``
stops once consecutive iterates agree to ``fp_tol``; the damping ``w`` is
halved whenever the distance grows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .carleman import CarlemanWeights
from .control import ControlResult, penalized_hum, weighted_minimal_control
from .errors import ConvergenceError, InvalidArgument, InvariantViolation
from .evolution import EvolutionConfig, Propagator, SourceData, _source_forcing, _trajectory
from .fields import L2Pair, trapezoid_weights
from .geometry import ControlRegion
from .operators import DiscreteOperator, PotentialPair

SOLVERS = ("weighted", "hum")


def _zero(xi):
    return np.zeros_like(np.asarray(xi, float))


@dataclass(frozen=True)
class Nonlinearity:
    """Scalar nonlinearities ``F`` (bulk) and ``G`` (surface) with their quotients.

    ``None`` entries mean zero. The quotients must satisfy
    ``Ftilde(xi) * xi == F(xi)``, and ``|Ftilde|, |Gtilde| <= R_F``.
    """

    F: Callable | None = None
    G: Callable | None = None
    Ftilde: Callable | None = None
    Gtilde: Callable | None = None
    R_F: float = 1.0
    samples: tuple = (-2.0, -1.0, -0.3, 0.1, 0.5, 1.5, 3.0)

    def __post_init__(self):
        for name in ("F", "G", "Ftilde", "Gtilde"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, _zero)
        if not self.R_F >= 0:
            raise InvalidArgument(f"R_F must be nonnegative, got {self.R_F}")
        zero = np.zeros(1)
        for name in ("F", "G"):
            if np.any(np.asarray(getattr(self, name)(zero), float) != 0):
                raise InvariantViolation(f"{name}(0) must vanish")
        xi = np.asarray(self.samples, float)
        for name, fn, q in (("F", self.F, self.Ftilde), ("G", self.G, self.Gtilde)):
            fx, qx = np.asarray(fn(xi), float), np.asarray(q(xi), float)
            if not np.allclose(qx * xi, fx, rtol=1e-12, atol=1e-14):
                raise InvariantViolation(f"{name}tilde(xi) * xi does not reproduce {name}(xi)")
            self.check_bound(qx, name + "tilde")

    @property
    def is_zero(self) -> bool:
        return self.F is _zero and self.G is _zero

    def check_bound(self, values, name: str = "quotient") -> None:
        mx = float(np.max(np.abs(values))) if np.size(values) else 0.0
        if not mx <= self.R_F * (1 + 1e-12):
            raise InvariantViolation(f"|{name}| = {mx:.6g} exceeds the bound R_F = {self.R_F}")


def rational_saturation() -> Nonlinearity:
    """``F(xi) = xi / (1 + xi^2)``, ``G = 0``: the bounded test nonlinearity."""
    return Nonlinearity(
        F=lambda x: np.asarray(x, float) / (1.0 + np.asarray(x, float) ** 2),
        Ftilde=lambda x: 1.0 / (1.0 + np.asarray(x, float) ** 2),
        R_F=1.0,
    )


def frozen_potentials(op: DiscreteOperator, nl: Nonlinearity, U: np.ndarray, cfg: EvolutionConfig) -> PotentialPair:
    """Potentials ``(F~(y(t_n)), G~(y(t_n)))`` tabulated on the time nodes."""
    tix = op.mesh.trace_index
    A = np.asarray(nl.Ftilde(U), float) * np.ones_like(U)
    B = np.asarray(nl.Gtilde(U[:, tix]), float) * np.ones((U.shape[0], tix.size))
    nl.check_bound(A, "Ftilde")
    nl.check_bound(B, "Gtilde")
    dt = cfg.dt

    def node(t):
        return int(np.clip(np.rint(t / dt), 0, cfg.M))

    return PotentialPair(lambda t: A[node(t)], lambda t: B[node(t)], static=False)


def _nonlinear_mass(op: DiscreteOperator, nl: Nonlinearity, u: np.ndarray) -> np.ndarray:
    return op.source_mass(np.asarray(nl.F(u), float), np.asarray(nl.G(u[op.mesh.trace_index]), float))


def simulate_nonlinear(op: DiscreteOperator, nl: Nonlinearity, src: SourceData, cfg: EvolutionConfig,
                       *, prop: Propagator | None = None) -> tuple[np.ndarray, float]:
    """Semi-implicit march: linear part by the theta-scheme, ``F``, ``G`` at the old level.

    Returns the coupled states ``(M + 1, n)`` and the largest relative
    step residual of the discrete nonlinear equations.
    """
    prop = prop or Propagator(op, None, cfg)
    forcing = _source_forcing(prop, src.f, src.g, src.v)
    U = np.empty((cfg.M + 1, op.size))
    U[0] = op.project(src.y0)
    worst = 0.0
    for n in range(cfg.M):
        rhs = prop.apply_rhs(n, U[n]) - cfg.dt * _nonlinear_mass(op, nl, U[n])
        if forcing is not None:
            rhs = rhs + cfg.dt * forcing[n]
        U[n + 1] = prop.solve_lhs(n + 1, rhs)
        scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
        worst = max(worst, np.linalg.norm(prop.apply_lhs(n + 1, U[n + 1]) - rhs) / scale)
    return U, float(worst)


@dataclass
class PicardResult:
    control: ControlResult  # control with the state re-simulated through the nonlinear dynamics
    linear: ControlResult  # last linear sub-solve
    iterations: int
    distances: list = field(default_factory=list)
    terminal_norms: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    dampings: list = field(default_factory=list)
    nonlinear_residual: float = 0.0
    relinearization_change: float | None = None

    def write_history(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "distance", "terminal_norm", "inner_cg_iterations", "damping"])
            for k, row in enumerate(zip(self.distances, self.terminal_norms, self.inner_iterations, self.dampings), 1):
                w.writerow([k, *(repr(float(x)) for x in row)])


class _LinearStep:
    """``Phi``: controlled coupled state of the problem linearized at ``U``."""

    def __init__(self, op, nl, f, g, y0, region, cfg, solver, cw, params):
        if solver not in SOLVERS:
            raise InvalidArgument(f"unknown linear solver {solver!r}; expected one of {SOLVERS}")
        if solver == "weighted" and cw is None:
            raise InvalidArgument("the weighted solver needs Carleman weights")
        self.op, self.nl, self.f, self.g, self.y0 = op, nl, f, g, y0
        self.region, self.cfg, self.solver, self.cw, self.params = region, cfg, solver, cw, params

    def __call__(self, U: np.ndarray) -> tuple[np.ndarray, ControlResult]:
        pot = frozen_potentials(self.op, self.nl, U, self.cfg)
        if self.solver == "weighted":
            res = weighted_minimal_control(self.op, pot, self.f, self.g, self.y0, self.region, self.cw,
                                           self.cfg, **self.params)
        else:
            res = penalized_hum(self.op, pot, self.f, self.g, self.y0, self.region, self.cfg, **self.params)
        return np.array([self.op.project(res.y.state(n)) for n in range(self.cfg.M + 1)]), res


def picard_control(op: DiscreteOperator, nl: Nonlinearity, f, g, y0: L2Pair, region: ControlRegion,
                   cfg: EvolutionConfig, *, solver: str = "weighted", cw: CarlemanWeights | None = None,
                   control_params: dict | None = None, max_iter: int = 50, fp_tol: float = 1e-6,
                   damping: float = 1.0, check: bool = True) -> PicardResult:
    """Fixed-point iteration for a null control of the semilinear system.

    ``control_params`` is passed to the linear sub-solver
    (``epsilon_rho``, ``mu``, ``cg_tol`` for ``weighted``; ``epsilon``,
    ``cg_tol`` for ``hum``). With ``check`` the accepted iterate is
    linearized once more and the relative change is reported.
    """
    if not 0 < damping <= 1:
        raise InvalidArgument(f"damping must lie in (0, 1], got {damping}")
    if not fp_tol > 0 or int(max_iter) < 1:
        raise InvalidArgument("need fp_tol > 0 and max_iter >= 1")
    step = _LinearStep(op, nl, f, g, y0, region, cfg, solver, cw, dict(control_params or {}))
    tw = trapezoid_weights(cfg.M, cfg.dt)

    def norm(U):
        return float(np.sqrt(np.sum(tw * ((U * U) @ op.m_c))))

    prop = Propagator(op, None, cfg)
    U, _ = simulate_nonlinear(op, nl, SourceData(y0, f, g), cfg, prop=prop)
    distances, terms, inner, damps = [], [], [], []
    w = damping
    res = None
    for k in range(1, max_iter + 1):
        V, res = step(U)
        U_new = U + w * (V - U)
        dist = norm(U_new - U)
        distances.append(dist)
        terms.append(res.terminal_norm)
        inner.append(int(res.diagnostics["cg_iterations"]))
        damps.append(w)
        U_prev_norm = norm(U)
        U = U_new
        if dist <= fp_tol * max(U_prev_norm, np.finfo(float).tiny):
            break
        if len(distances) > 1 and dist > distances[-2]:
            w *= 0.5
    else:
        raise ConvergenceError(
            f"fixed-point iteration did not reach fp_tol={fp_tol} in {max_iter} iterations",
            {"distances": distances, "terminal_norms": terms, "dampings": damps},
        )

    change = None
    if check:
        V, _ = step(U)
        change = norm(V - U) / max(norm(U), np.finfo(float).tiny)

    v = res.v
    Y, resid = simulate_nonlinear(op, nl, SourceData(y0, f, g, v), cfg, prop=prop)
    y = _trajectory(op, cfg, Y)
    yT = Y[-1]
    final = ControlResult(
        v=v,
        y=y,
        terminal_norm=float(np.sqrt(np.dot(yT * yT, op.m_c))),
        control_energy=res.control_energy,
        weighted_state_energy=res.weighted_state_energy,
        cost=res.cost,
        phi_T=res.phi_T,
        diagnostics={
            "linear_terminal_norm": res.terminal_norm,
            "iterations": k,
            "nonlinear_residual": resid,
            "relinearization_change": change,
            "solver": solver,
        },
    )
    return PicardResult(final, res, k, distances, terms, inner, damps, resid, change)
