"""Observability constants of the adjoint system and the forward final-state check."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, InvalidArgument, InvariantViolation
from .evolution import EvolutionConfig, Propagator, region_mass
from .fields import L2Pair, trapezoid_weights
from .geometry import ControlRegion
from .krylov import cg
from .operators import DiscreteOperator, PotentialPair


class ControlMaps:
    """Final-state map ``L_T`` of a control and its adjoint ``L_T^*``.

    Controls are nodal arrays of shape ``(M + 1, n)`` on the coupled grid,
    paired by the trapezoid rule in time and the region mass in space.
    ``gramian`` is ``L_T L_T^*``, self-adjoint in the lumped-mass product.
    """

    def __init__(self, op: DiscreteOperator, pot: PotentialPair | None, region: ControlRegion,
                 cfg: EvolutionConfig, prop: Propagator | None = None):
        self.op, self.region, self.cfg = op, region, cfg
        self.prop = prop or Propagator(op, pot, cfg)
        self.m_omega = region_mass(op, region)
        self.support = self.m_omega > 0
        self.tw = trapezoid_weights(cfg.M, cfg.dt)
        self.m_c = op.m_c

    def inner(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(np.dot(x * y, self.m_c))

    def control_inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.sum(self.tw * ((u * v) @ self.m_omega)))

    def final_state(self, v: np.ndarray) -> np.ndarray:
        forcing = self.prop.nodal_forcing(v, self.m_omega)
        return self.prop.forward(np.zeros(self.op.size), forcing)[-1]

    def riesz(self, g: np.ndarray) -> np.ndarray:
        """Turn a Euclidean control gradient into a control-space vector."""
        out = np.zeros_like(g)
        w = self.tw[:, None] * self.m_omega[None, :]
        out[:, self.support] = g[:, self.support] / w[:, self.support]
        return out

    def adjoint(self, phi_T: np.ndarray) -> np.ndarray:
        _, r = self.prop.adjoint_sweep(self.m_c * phi_T)
        return self.riesz(self.prop.nodal_gradient(r, self.m_omega))

    def gramian(self, phi_T: np.ndarray) -> np.ndarray:
        return self.final_state(self.adjoint(phi_T))

    def initial_state(self, phi_T: np.ndarray) -> np.ndarray:
        """``phi(0)`` of the homogeneous adjoint solve."""
        q, _ = self.prop.adjoint_sweep(self.m_c * phi_T)
        return q[0] / self.m_c

    def propagate(self, z: np.ndarray) -> np.ndarray:
        """Homogeneous forward solve from ``z``: the adjoint of ``initial_state``."""
        return self.prop.forward(z)[-1]

    def observed_energy(self, phi_T: np.ndarray) -> float:
        """``<Lambda phi_T, phi_T>`` = observed energy of the adjoint solution."""
        w = self.adjoint(phi_T)
        return self.control_inner(w, w)

    def trace_estimate(self, probes: int = 4, seed: int = 0) -> float:
        rng = np.random.default_rng(seed)
        acc = 0.0
        for _ in range(probes):
            z = rng.standard_normal(self.op.size) / np.sqrt(self.m_c)
            acc += self.inner(self.gramian(z), z)
        return acc / probes


@dataclass
class ObservabilityReport:
    constant: float
    iterations: int
    residual: float  # relative eigen-residual at the last iterate
    increment: float  # relative growth of the quotient in the last iteration
    shift: float
    maximizer: L2Pair | None = field(default=None, repr=False)
    quotient_history: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    inner_failures: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("maximizer")
        return d

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def observability_quotient(maps: ControlMaps, phi_T: np.ndarray) -> float:
    """``|phi(0)|^2 / int_0^T int_omega |phi|^2`` for one terminal datum."""
    p0 = maps.initial_state(phi_T)
    return maps.inner(p0, p0) / maps.observed_energy(phi_T)


def estimate_backward_observability(op: DiscreteOperator, pot: PotentialPair | None, region: ControlRegion,
                                    cfg: EvolutionConfig, tol: float = 1e-4, *, max_iter: int = 100,
                                    shift_factor: float = 1e-10, inner_tol: float = 1e-4,
                                    inner_maxiter: int = 150, seed: int = 0,
                                    maps: ControlMaps | None = None) -> ObservabilityReport:
    """Largest generalized eigenvalue of ``R^* R x = C Lambda x`` by inverse power iteration.

    ``R`` maps the terminal datum to ``phi(0)``; the Gramian solves use a
    shift ``eps = shift_factor * trace(Lambda)``, reported with the result.
    The inner solves are inexact (``inner_tol``); iteration stops once the
    quotient changes by less than ``tol`` (relative) between iterations.
    The eigen-residual is reported but not used for stopping: components in
    strongly damped modes make it small long before the quotient settles.
    An inner solve that misses ``inner_tol`` within ``inner_maxiter`` still
    yields a usable iterate (inexact inverse iteration); such solves are
    counted in ``inner_failures``. The returned constant is the quotient of
    the returned maximizer, hence a certified lower bound of the supremum.
    """
    if not np.any(region.indicator):
        raise InvalidArgument("observation region is empty")
    if not tol > 0:
        raise InvalidArgument("tol must be positive")
    maps = maps or ControlMaps(op, pot, region, cfg)
    shift = shift_factor * maps.trace_estimate(seed=seed)
    rng = np.random.default_rng(seed)
    # smooth start: a perturbed constant pushed through one forward solve
    x = maps.propagate(np.ones(op.size) + 0.1 * rng.standard_normal(op.size))
    x /= np.sqrt(maps.inner(x, x))

    def shifted(z):
        return maps.gramian(z) + shift * z

    history, inner_its = [], []
    failures = 0
    C_prev = None
    residual = increment = np.inf
    for it in range(1, max_iter + 1):
        b = maps.propagate(maps.initial_state(x))
        try:
            res = cg(shifted, b, maps.inner, tol=inner_tol, maxiter=inner_maxiter, strict=False)
        except ConvergenceError as exc:
            exc.diagnostics.update({"shift": shift, "outer_iteration": it})
            raise
        inner_its.append(res.iterations)
        failures += not res.converged
        x = res.x / np.sqrt(maps.inner(res.x, res.x))
        Rx_x = maps.propagate(maps.initial_state(x))
        Lx = shifted(x)
        C_s = maps.inner(Rx_x, x) / maps.inner(Lx, x)
        residual = np.sqrt(maps.inner(Rx_x - C_s * Lx, Rx_x - C_s * Lx)) / np.sqrt(maps.inner(Rx_x, Rx_x))
        C = maps.inner(Rx_x, x) / (maps.inner(Lx, x) - shift)
        history.append(C)
        if C_prev is not None:
            increment = abs(C - C_prev) / abs(C)
        if increment <= tol:
            break
        C_prev = C
    else:
        raise ConvergenceError(
            "power iteration did not converge",
            {"iterations": max_iter, "residual": residual, "increment": increment, "shift": shift,
             "history": history},
        )
    return ObservabilityReport(
        constant=float(history[-1]), iterations=it, residual=float(residual), increment=float(increment),
        shift=float(shift),
        maximizer=op.embed(x), quotient_history=[float(c) for c in history], inner_iterations=inner_its,
        inner_failures=failures,
    )


@dataclass
class ForwardCheckReport:
    quotients: list
    maximum: float
    backward_constant: float | None
    consistent: bool | None

    def to_dict(self) -> dict:
        return asdict(self)


def forward_quotient(maps: ControlMaps, y0: np.ndarray) -> float:
    """``|y(T)|^2 / int_0^T int_omega |y|^2`` for the free forward solution."""
    U = maps.prop.forward(y0)
    obs = float(np.sum(maps.tw * ((U * U) @ maps.m_omega)))
    return maps.inner(U[-1], U[-1]) / obs


def check_forward_final_state(op: DiscreteOperator, pot: PotentialPair | None, region: ControlRegion,
                              cfg: EvolutionConfig, samples: list[L2Pair], *,
                              backward_constant: float | None = None, rtol: float = 1e-6,
                              maps: ControlMaps | None = None) -> ForwardCheckReport:
    """Final-state quotients for sampled initial data.

    With ``backward_constant`` given, the maximum must not exceed it by
    more than ``rtol`` (relative); a violation raises
    :class:`InvariantViolation`.
    """
    if not samples:
        raise InvalidArgument("at least one initial datum is required")
    maps = maps or ControlMaps(op, pot, region, cfg)
    qs = [forward_quotient(maps, op.project(y0)) for y0 in samples]
    mx = max(qs)
    consistent = None
    if backward_constant is not None:
        consistent = mx <= backward_constant * (1 + rtol)
        if not consistent:
            raise InvariantViolation(
                f"forward quotient {mx:.6g} exceeds backward observability constant {backward_constant:.6g}"
            )
    return ForwardCheckReport([float(q) for q in qs], float(mx), backward_constant, consistent)
