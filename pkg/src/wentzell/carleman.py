"""Carleman weight functions and a numerical Carleman-ratio diagnostic.

With ``E = exp(2 lam m |eta0|_inf)`` and ``P(x) = exp(lam (m |eta0|_inf + eta0(x)))``:

    alpha   = (E - P) / (t (T - t))        xi   = P / (t (T - t))
    alpha~  = (E - P) / (T (T - t))        xi~  = P / (T (T - t))
    rho_eps = exp(s (E - P) / (T (T - t + eps)))

The weighted integrals ``e^{-2 s alpha} xi^k ...`` underflow for any
useful ``s``, so the diagnostic works with logarithms throughout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .errors import (
    InvalidArgument,
    SingularWeight,
    UndefinedRatio,
    UnsupportedConfiguration,
    UnsupportedGeometry,
    WeightOverflow,
)
from .evolution import EvolutionConfig
from .fields import Trajectory
from .geometry import DISK, ControlRegion, Mesh
from .operators import DiscreteOperator, PotentialPair

LOG_MAX = np.log(np.finfo(float).max) - 10.0


def build_eta0(mesh: Mesh, omega_prime: ControlRegion) -> np.ndarray:
    """``R^2 - |x|^2`` on bulk nodes; zero on the boundary ring.

    Its only critical point is the origin, so it meets all the required
    properties as long as ``omega_prime`` contains the origin.
    """
    if mesh.kind != DISK:
        raise UnsupportedGeometry(
            "Carleman weights need a two-dimensional domain with surface diffusion "
            "(the interval test bed has no tangential direction and delta > 0 is essential)"
        )
    if omega_prime.indicator[0] != 1:
        raise UnsupportedConfiguration(
            "omega' must contain the origin; general-position weight construction is not supported"
        )
    eta = mesh.radius**2 - mesh.radii() ** 2
    eta[mesh.trace_index] = 0.0
    return eta


@dataclass(frozen=True)
class CarlemanWeights:
    eta0: np.ndarray
    lam: float = 2.0
    s: float = 2.0
    m: float = 2.0
    T: float = 1.0
    eta_inf: float = field(init=False)

    def __post_init__(self):
        if self.lam < 1 or self.s < 1 or not self.m > 1 or not self.T > 0:
            raise InvalidArgument(
                f"need lam >= 1, s >= 1, m > 1, T > 0; got lam={self.lam}, s={self.s}, m={self.m}, T={self.T}"
            )
        object.__setattr__(self, "eta0", np.asarray(self.eta0, float))
        object.__setattr__(self, "eta_inf", float(np.max(np.abs(self.eta0))))

    def with_s(self, s: float) -> "CarlemanWeights":
        return CarlemanWeights(self.eta0, self.lam, s, self.m, self.T)

    def _eta(self, eta):
        return self.eta0 if eta is None else np.asarray(eta, float)

    def log_P(self, eta=None) -> np.ndarray:
        return self.lam * (self.m * self.eta_inf + self._eta(eta))

    def numerator(self, eta=None) -> np.ndarray:
        """``E - P``, the space part of ``alpha``; positive on the closure."""
        return np.exp(2 * self.lam * self.m * self.eta_inf) - np.exp(self.log_P(eta))

    def _interior(self, t: float) -> float:
        if not 0 < t < self.T:
            raise SingularWeight(f"alpha and xi are singular at t={t} (need 0 < t < T)")
        return t * (self.T - t)

    def alpha(self, t: float, eta=None) -> np.ndarray:
        return self.numerator(eta) / self._interior(t)

    def xi(self, t: float, eta=None) -> np.ndarray:
        return np.exp(self.log_P(eta)) / self._interior(t)

    def log_xi(self, t: float, eta=None) -> np.ndarray:
        return self.log_P(eta) - np.log(self._interior(t))

    def _before_T(self, t: float) -> float:
        if not 0 <= t < self.T:
            raise SingularWeight(f"tilde weights are singular at t={t} (need 0 <= t < T)")
        return self.T * (self.T - t)

    def alpha_tilde(self, t: float, eta=None) -> np.ndarray:
        return self.numerator(eta) / self._before_T(t)

    def xi_tilde(self, t: float, eta=None) -> np.ndarray:
        return np.exp(self.log_P(eta)) / self._before_T(t)

    def log_rho(self, t: float, eps: float, eta=None) -> np.ndarray:
        if not 0 < eps <= 1:
            raise InvalidArgument(f"eps must lie in (0, 1], got {eps}")
        if not 0 <= t <= self.T:
            raise InvalidArgument(f"t={t} outside [0, T]")
        return self.s * self.numerator(eta) / (self.T * (self.T - t + eps))

    def rho(self, t: float, eps: float, eta=None) -> np.ndarray:
        lr = self.log_rho(t, eps, eta)
        if np.max(lr) > LOG_MAX:
            raise WeightOverflow(
                f"rho_eps overflows (log {np.max(lr):.4g}); use a smaller s or a larger eps"
            )
        return np.exp(lr)

    def max_log_rho(self, eps: float) -> float:
        """Largest ``log rho_eps`` over the closure (attained at ``t = T`` on the boundary)."""
        return float(self.s * np.max(self.numerator(np.array([0.0, self.eta_inf]))) / (self.T * eps))

    def z_weight(self, t: float, eta=None) -> np.ndarray:
        """``e^{s alpha~} xi~^{-3/2}``, the weight of the source spaces."""
        la = self.s * self.alpha_tilde(t, eta) - 1.5 * np.log(self.xi_tilde(t, eta))
        if np.max(la) > LOG_MAX:
            raise WeightOverflow(f"source weight overflows at t={t}")
        return np.exp(la)

    def pair_weight(self, kind: str, mesh: Mesh, eps: float | None = None):
        """Evaluator ``t -> (bulk, surface)`` for ``fields.weighted_time_norm``."""
        surf = np.zeros(mesh.n_boundary)

        def w(t):
            if kind == "rho":
                return self.rho(t, eps), self.rho(t, eps, surf)
            if kind == "z":
                return self.z_weight(t), self.z_weight(t, surf)
            if kind == "exp_alpha_tilde":
                return np.exp(self.s * self.alpha_tilde(t)), np.exp(self.s * self.alpha_tilde(t, surf))
            raise InvalidArgument(f"unknown weight kind {kind!r}")

        return w


def weights(eta0: np.ndarray, *, s: float = 2.0, lam: float = 2.0, m: float = 2.0, T: float = 1.0) -> CarlemanWeights:
    return CarlemanWeights(eta0, lam=lam, s=s, m=m, T=T)


def check_eta0(op: DiscreteOperator, eta0: np.ndarray, omega_prime: ControlRegion, T: float = 1.0) -> dict:
    """Nodewise checks of the properties the weights rely on.

    Returns the measured quantities; every ``ok_*`` entry must be true.
    """
    mesh = op.mesh
    D = op.diff
    interior = mesh.interior_mask()
    gx, gy = D.grad_x @ eta0, D.grad_y @ eta0
    gmag = np.hypot(gx, gy)
    outside = interior & (omega_prime.indicator == 0)
    dn = D.normal @ eta0
    cw = CarlemanWeights(eta0, T=T, lam=1.0, m=2.0)
    t = 0.5 * T
    tang_alpha = D.surf_grad @ cw.alpha(t, eta0[mesh.trace_index])
    tang_xi = D.surf_grad @ cw.xi(t, eta0[mesh.trace_index])
    out = {
        "min_interior": float(eta0[interior].min()),
        "max_boundary_abs": float(np.abs(eta0[mesh.trace_index]).max()),
        "min_grad_outside": float(gmag[outside].min()),
        "max_normal_derivative": float(dn.max()),
        "max_tangential_alpha": float(np.abs(tang_alpha).max()),
        "max_tangential_xi": float(np.abs(tang_xi).max()),
    }
    out["ok_positive"] = out["min_interior"] > 0
    out["ok_boundary"] = out["max_boundary_abs"] == 0
    out["ok_gradient"] = out["min_grad_outside"] > 0
    out["ok_normal"] = out["max_normal_derivative"] < 0
    out["ok_tangential"] = bool(max(out["max_tangential_alpha"], out["max_tangential_xi"]) <= 1e-9 * (
        1 + np.abs(cw.alpha(t, 0.0)).max()
    ))
    return out


LHS_NAMES = ("dt_lap_bulk", "dt_lap_surface", "grad_bulk", "grad_surface", "zero_bulk", "zero_surface", "normal")
RHS_NAMES = ("control", "residual_bulk", "residual_surface")


@dataclass(frozen=True)
class CarlemanReport:
    """Natural logarithms of the seven left and three right integrals."""

    log_lhs: tuple
    log_rhs: tuple
    ratio: float
    anomaly: bool = False

    @property
    def lhs_terms(self) -> np.ndarray:
        return np.exp(np.array(self.log_lhs))

    @property
    def rhs_terms(self) -> np.ndarray:
        return np.exp(np.array(self.log_rhs))


def _log_integral(log_weight: np.ndarray, values: np.ndarray) -> float:
    """``log sum exp(log_weight) * values`` for nonnegative ``values``."""
    mask = values > 0
    if not mask.any():
        return -np.inf
    return float(logsumexp(log_weight[mask], b=values[mask]))


def carleman_ratio(tr: Trajectory, op: DiscreteOperator, pot: PotentialPair | None, cw: CarlemanWeights,
                   cfg: EvolutionConfig, region: ControlRegion) -> CarlemanReport:
    """Left side over right side of the Carleman inequality for ``tr`` (without ``C``).

    Time derivatives are centered differences; only interior time nodes
    contribute (all weighted integrands vanish at ``t = 0, T``).
    """
    mesh = op.mesh
    if mesh.kind != DISK or op.delta <= 0:
        raise UnsupportedGeometry("the Carleman diagnostic needs the disk with delta > 0")
    if not tr.conforms(mesh) or tr.M != cfg.M:
        raise InvalidArgument("trajectory does not conform to mesh/time grid")
    if not (np.any(tr.bulk) or np.any(tr.surface)):
        raise UndefinedRatio("ratio undefined for the zero trajectory")
    pot = pot or PotentialPair.zero()
    D = op.diff
    d, delta, s, lam = op.d, op.delta, cw.s, cw.lam
    dt = cfg.dt
    wb, ws = mesh.bulk_weights, mesh.boundary_weights
    eta_s = np.zeros(mesh.n_boundary)
    chi = region.indicator

    lhs = [[] for _ in range(7)]
    rhs = [[] for _ in range(3)]
    for n in range(1, cfg.M):
        t = tr.times[n]
        phi, phs = tr.bulk[n], tr.surface[n]
        dtb = (tr.bulk[n + 1] - tr.bulk[n - 1]) / (2 * dt)
        dts = (tr.surface[n + 1] - tr.surface[n - 1]) / (2 * dt)
        lap = D.lap @ phi
        grad2 = (D.grad_x @ phi) ** 2 + (D.grad_y @ phi) ** 2
        lb = D.surf_lap @ phs
        tg = D.surf_grad @ phs
        dn = D.normal @ phi

        lwb = -2 * s * cw.alpha(t) + np.log(wb * dt)
        lws = -2 * s * cw.alpha(t, eta_s) + np.log(ws * dt)
        lxb, lxs = cw.log_xi(t), cw.log_xi(t, eta_s)

        entries = [
            (lhs[0], lwb - lxb - np.log(s), dtb**2 + lap**2),
            (lhs[1], lws - lxs - np.log(s), dts**2 + lb**2),
            (lhs[2], lwb + lxb + np.log(s * lam**2), grad2),
            (lhs[3], lws + lxs + np.log(s * lam), tg**2),
            (lhs[4], lwb + 3 * lxb + np.log(s**3 * lam**4), phi**2),
            (lhs[5], lws + 3 * lxs + np.log(s**3 * lam**3), phs**2),
            (lhs[6], lws + lxs + np.log(s * lam), dn**2),
            (rhs[0], lwb + 3 * lxb + np.log(s**3 * lam**4), chi * phi**2),
            (rhs[1], lwb, (dtb + d * lap - pot.bulk(t, mesh) * phi) ** 2),
            (rhs[2], lws, (dts + delta * lb - d * dn - pot.surface(t, mesh) * phs) ** 2),
        ]
        for bucket, lw, vals in entries:
            bucket.append(_log_integral(lw, vals))

    log_lhs = tuple(float(logsumexp(b)) for b in lhs)
    log_rhs = tuple(float(logsumexp(b)) for b in rhs)
    total_l, total_r = logsumexp(log_lhs), logsumexp(log_rhs)
    if total_l == -np.inf:
        raise UndefinedRatio("all weighted left-hand integrals vanish")
    if total_r == -np.inf:
        return CarlemanReport(log_lhs, log_rhs, float("inf"), anomaly=True)
    return CarlemanReport(log_lhs, log_rhs, float(np.exp(total_l - total_r)))


def write_sweep_csv(path, rows: list[tuple[float, float, CarlemanReport]]) -> None:
    """One row per (s, lambda) point; term columns hold natural logarithms."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "lambda", *(f"log_lhs_{n}" for n in LHS_NAMES),
                    *(f"log_rhs_{n}" for n in RHS_NAMES), "ratio"])
        for s, lam, rep in rows:
            w.writerow([repr(float(s)), repr(float(lam)), *(repr(v) for v in rep.log_lhs),
                        *(repr(v) for v in rep.log_rhs), repr(rep.ratio)])
