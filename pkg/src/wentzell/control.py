"""Null controls: penalized HUM and the weighted minimal-norm control.

Both reduce to one conjugate-gradient solve with an operator built from a
forward sweep and its exact discrete adjoint, so every identity they rely
on holds to solver tolerance and can be checked on the output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .carleman import LOG_MAX, CarlemanWeights
from .errors import InvalidArgument, SingularWeight, WeightOverflow
from .evolution import EvolutionConfig, Propagator, SourceData, residual_distributional, solve_forward
from .fields import L2Pair, Trajectory, weighted_time_norm
from .geometry import ControlRegion
from .krylov import cg
from .observability import ControlMaps
from .operators import DiscreteOperator, PotentialPair


@dataclass
class ControlResult:
    v: np.ndarray  # (M + 1, n_bulk), zero outside the control region
    y: Trajectory
    terminal_norm: float
    control_energy: float
    weighted_state_energy: float | None = None
    cost: float | None = None
    phi_T: L2Pair | None = None
    diagnostics: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {
            "terminal_norm": self.terminal_norm,
            "control_energy": self.control_energy,
            "weighted_state_energy": self.weighted_state_energy,
            "cost": self.cost,
        }
        out.update({k: v for k, v in self.diagnostics.items() if k != "cg_history"})
        return out

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, default=float))

    def control_trajectory(self) -> Trajectory:
        return Trajectory(self.y.times, self.v, np.zeros_like(self.y.surface))


def _free_solution(prop: Propagator, op: DiscreteOperator, y0: L2Pair, f, g, cfg) -> np.ndarray:
    tr = solve_forward(op, prop.pot, SourceData(y0, f, g), cfg, prop=prop)
    return np.array([op.project(tr.state(n)) for n in range(cfg.M + 1)])


def _resimulate(op, pot, y0, f, g, v, cfg, prop, region):
    src = SourceData(y0, f, g, v)
    src.check_support(region)
    y = solve_forward(op, pot, src, cfg, prop=prop)
    return y, src


def penalized_hum(op: DiscreteOperator, pot: PotentialPair | None, f, g, y0: L2Pair, region: ControlRegion,
                  cfg: EvolutionConfig, epsilon: float = 1e-3, cg_tol: float = 1e-8, *,
                  maxiter: int = 500, maps: ControlMaps | None = None) -> ControlResult:
    """Solve ``(Lambda + eps) phi_T = -y_free(T)`` and apply ``v = L_T^* phi_T``.

    The controlled state then satisfies ``y(T) = -eps phi_T`` up to the CG
    residual; the measured defect is returned as ``identity_residual``.
    """
    if not epsilon > 0:
        raise InvalidArgument(f"epsilon must be positive, got {epsilon}")
    if region.is_full:
        raise InvalidArgument("controls must be supported strictly inside the domain")
    maps = maps or ControlMaps(op, pot, region, cfg)
    prop = maps.prop
    free_T = _free_solution(prop, op, y0, f, g, cfg)[-1]

    res = cg(lambda z: maps.gramian(z) + epsilon * z, -free_T, maps.inner, tol=cg_tol, maxiter=maxiter)
    phi = res.x
    v = maps.adjoint(phi)
    y, src = _resimulate(op, prop.pot, y0, f, g, v, cfg, prop, region)
    yT = op.project(y.final())
    defect = yT + epsilon * phi
    return ControlResult(
        v=v,
        y=y,
        terminal_norm=float(np.sqrt(maps.inner(yT, yT))),
        control_energy=0.5 * maps.control_inner(v, v),
        phi_T=op.embed(phi),
        diagnostics={
            "epsilon": epsilon,
            "cg_iterations": res.iterations,
            "cg_residual": res.residual,
            "cg_history": res.history,
            "phi_norm": float(np.sqrt(maps.inner(phi, phi))),
            "identity_residual": float(np.sqrt(maps.inner(defect, defect))),
            "distributional_residual": residual_distributional(y, op, prop.pot, src, cfg),
        },
    )


class WeightedProblem:
    """Reduced quadratic of the weighted minimal-norm control.

    ``J(v) = 1/2 int |rho_eps y|^2 + 1/2 |v|^2_{omega_T} + 1/(2 mu) |y(T)|^2``
    with ``y = y_free + L v``; everything is evaluated with the same
    trapezoid/lumped-mass quadrature as the rest of the package.
    """

    def __init__(self, op: DiscreteOperator, pot: PotentialPair | None, f, g, y0: L2Pair,
                 region: ControlRegion, cw: CarlemanWeights, cfg: EvolutionConfig,
                 epsilon_rho: float = 1.0, mu: float = 1e-6, maps: ControlMaps | None = None):
        if not mu > 0:
            raise InvalidArgument(f"mu must be positive, got {mu}")
        if not 0 < epsilon_rho <= 1:
            raise InvalidArgument(f"epsilon_rho must lie in (0, 1], got {epsilon_rho}")
        if region.is_full:
            raise InvalidArgument("controls must be supported strictly inside the domain")
        if 2 * cw.max_log_rho(epsilon_rho) > LOG_MAX:
            raise WeightOverflow(
                f"rho_eps^2 overflows (log {2 * cw.max_log_rho(epsilon_rho):.4g}); "
                "use a smaller s or lambda, or a larger epsilon_rho"
            )
        self.op, self.cfg, self.cw, self.region = op, cfg, cw, region
        self.y0, self.f, self.g = y0, f, g
        self.epsilon_rho, self.mu = epsilon_rho, mu
        self.maps = maps or ControlMaps(op, pot, region, cfg)
        self.prop = self.maps.prop
        mesh = op.mesh
        surf = np.zeros(mesh.n_boundary)
        # rho^2-weighted lumped mass at every time node
        self.W = np.array([
            mesh.bulk_weights * cw.rho(t, epsilon_rho) ** 2
            + mesh.trace_map.T @ (mesh.boundary_weights * cw.rho(t, epsilon_rho, surf) ** 2)
            for t in cfg.times
        ])
        self.tw = self.maps.tw
        self.free = _free_solution(self.prop, op, y0, f, g, cfg)
        self.data_norms = self._data_norms()

    def _data_norms(self) -> dict:
        """Norms of the data in the spaces of the a-priori bound."""
        mesh, cfg = self.op.mesh, self.cfg
        out = {"y0": float(np.sqrt(np.dot(self.y0.bulk**2, mesh.bulk_weights)
                                    + np.dot(self.y0.surface**2, mesh.boundary_weights)))}
        zw = self.cw.pair_weight("z", mesh)
        for name, fn, bulk in (("f", self.f, True), ("g", self.g, False)):
            if fn is None:
                out[name] = 0.0
                continue
            vals = np.array([np.broadcast_to(np.asarray(fn(t), float), (mesh.n_bulk if bulk else mesh.n_boundary,))
                             for t in cfg.times])
            zeros_b = np.zeros((cfg.M + 1, mesh.n_bulk))
            zeros_s = np.zeros((cfg.M + 1, mesh.n_boundary))
            tr = Trajectory(cfg.times, vals if bulk else zeros_b, zeros_s if bulk else vals)
            try:
                val = weighted_time_norm(tr, zw, mesh)
            except (SingularWeight, WeightOverflow) as exc:
                raise InvalidArgument(f"source {name} is not in the weighted source space: {exc}") from exc
            if not np.isfinite(val):
                raise InvalidArgument(f"source {name} has infinite weighted norm")
            out[name] = float(np.sqrt(val))
        return out

    def _gradient_terms(self, U: np.ndarray, with_penalty: bool = True) -> np.ndarray:
        running = self.tw[:, None] * self.W * U
        qT = (self.op.m_c * U[-1]) / self.mu if with_penalty else np.zeros(self.op.size)
        _, r = self.prop.adjoint_sweep(qT, running)
        return self.maps.riesz(self.prop.nodal_gradient(r, self.maps.m_omega))

    def response(self, v: np.ndarray) -> np.ndarray:
        """State trajectory (coupled) caused by ``v`` alone."""
        forcing = self.prop.nodal_forcing(v, self.maps.m_omega)
        return self.prop.forward(np.zeros(self.op.size), forcing)

    def hessian(self, v: np.ndarray) -> np.ndarray:
        return v + self._gradient_terms(self.response(v))

    def rhs(self) -> np.ndarray:
        return -self._gradient_terms(self.free)

    def terms(self, v: np.ndarray) -> dict:
        U = self.free + self.response(v)
        state = 0.5 * float(np.sum(self.tw * np.sum(self.W * U * U, axis=1)))
        control = 0.5 * self.maps.control_inner(v, v)
        term = float(np.sqrt(self.maps.inner(U[-1], U[-1])))
        return {"weighted_state_energy": state, "control_energy": control, "terminal_norm": term,
                "penalty": 0.5 * term**2 / self.mu, "objective": state + control + 0.5 * term**2 / self.mu}

    def objective(self, v: np.ndarray) -> float:
        return self.terms(v)["objective"]


def weighted_minimal_control(op: DiscreteOperator, pot: PotentialPair | None, f, g, y0: L2Pair,
                             region: ControlRegion, cw: CarlemanWeights, cfg: EvolutionConfig,
                             epsilon_rho: float = 1.0, mu: float = 1e-6, cg_tol: float = 1e-8, *,
                             maxiter: int = 500, maps: ControlMaps | None = None) -> ControlResult:
    """Minimize the weighted cost with the terminal constraint penalized by ``1/mu``."""
    prob = WeightedProblem(op, pot, f, g, y0, region, cw, cfg, epsilon_rho, mu, maps)
    b = prob.rhs()
    res = cg(prob.hessian, b, prob.maps.control_inner, tol=cg_tol, maxiter=maxiter)
    v = res.x
    terms = prob.terms(v)
    y, src = _resimulate(op, prob.prop.pot, y0, f, g, v, cfg, prob.prop, region)
    yT = op.project(y.final())
    return ControlResult(
        v=v,
        y=y,
        terminal_norm=float(np.sqrt(prob.maps.inner(yT, yT))),
        control_energy=terms["control_energy"],
        weighted_state_energy=terms["weighted_state_energy"],
        cost=terms["weighted_state_energy"] + terms["control_energy"],
        diagnostics={
            "epsilon_rho": epsilon_rho,
            "mu": mu,
            "objective": terms["objective"],
            "cg_iterations": res.iterations,
            "cg_residual": res.residual,
            "cg_history": res.history,
            "data_norms": prob.data_norms,
            "distributional_residual": residual_distributional(y, op, prob.prop.pot, src, cfg),
        },
    )
