"""Verification suites on pinned desk-scale problems.

Each suite returns a list of :class:`Check` records, one per criterion
part, with the measured value and the threshold it was compared with.
Regression bounds marked ``pinned`` were frozen from a first verified run
and widened by a factor 1.5, iteration budgets by 2.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import bisect

from .carleman import build_eta0, carleman_ratio, check_eta0, weights
from .control import WeightedProblem, penalized_hum, weighted_minimal_control
from .errors import InvalidArgument
from .evolution import EvolutionConfig, Propagator, SourceData, mass_functional, solve_backward, solve_forward
from .fields import L2Pair
from .geometry import build_mesh, control_mask, full_observation, shrink
from .observability import ControlMaps, estimate_backward_observability
from .operators import assemble, spectrum_smallest
from .semilinear import Nonlinearity, picard_control, rational_saturation

# first verified runs, widened by 1.5 (iteration counts by 2)
HUM_TERMINAL_RATIO = 0.0053387
SEMILINEAR_ITERATIONS = 3
SEMILINEAR_TERMINAL_RATIO = 5.2929e-4
CARLEMAN_KAPPA = 1.0000094
WEIGHTED_BOUND_C = 17.534
PIN = 1.5

# small weights keep rho_eps^2 representable (log rho <= 6 on the default disk)
WEIGHTED_PARAMS = {"s": 1.0, "lam": 1.0, "m": 1.1}


@dataclass
class Check:
    criterion: int
    name: str
    passed: bool
    value: float
    threshold: float
    relation: str = "<="

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.criterion}. {self.name}: {self.value:.6g} {self.relation} {self.threshold:.6g}"

    def to_dict(self) -> dict:
        return asdict(self)


def _le(criterion, name, value, threshold) -> Check:
    return Check(criterion, name, bool(value <= threshold), float(value), float(threshold), "<=")


def _ge(criterion, name, value, threshold) -> Check:
    return Check(criterion, name, bool(value >= threshold), float(value), float(threshold), ">=")


def default_disk(n_r: int = 16, n_theta: int = 64, M: int = 200, theta: float = 0.5, radius: float = 0.5):
    """Unit disk, ``d = delta = 1``, ``T = 1``, control on ``disk(0, radius)``."""
    mesh = build_mesh("disk", n_r=n_r, n_theta=n_theta)
    op = assemble(mesh, 1.0, 1.0)
    cfg = EvolutionConfig(1.0, M, theta)
    region = control_mask(mesh, {"center": (0.0, 0.0), "radius": radius})
    return mesh, op, cfg, region


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), np.finfo(float).tiny)


# 1 -------------------------------------------------------------------------

def suite_operators(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    for label, mesh in (("disk", build_mesh("disk", n_r=16, n_theta=64)), ("interval", build_mesh("interval", n=200))):
        op = assemble(mesh, 1.0, 1.0 if label == "disk" else 0.0)
        K = op.stiffness.toarray()
        kmax = np.abs(K).max()
        out.append(_le(1, f"{label}: max|K - K^T| / max|K|", np.abs(K - K.T).max() / kmax, 1e-12))
        worst = min(float(y @ K @ y) / float(y @ y) for y in rng.standard_normal((100, K.shape[0])))
        out.append(_ge(1, f"{label}: min y^T K y / |y|^2 over 100 probes", worst, -1e-12))
        out.append(_le(1, f"{label}: max|K (1, 1)|", np.abs(K @ np.ones(K.shape[0])).max(), 1e-12))
    return out


# 2, 3 ----------------------------------------------------------------------

def tan_even_root() -> float:
    """First positive root of ``tan(mu/2) = -mu``, by bisection on ``(pi, 2 pi)``."""
    return bisect(lambda m: np.sin(m / 2) + m * np.cos(m / 2), np.pi, 2 * np.pi, xtol=1e-15, rtol=1e-15)


def tan_odd_root() -> float:
    """First positive root of ``tan(mu/2) = 1/mu``, by bisection on ``(0, pi)``."""
    return bisect(lambda m: m * np.sin(m / 2) - np.cos(m / 2), 1e-9, np.pi, xtol=1e-15, rtol=1e-15)


def suite_evolution(seed: int = 0) -> list[Check]:
    out = []
    mesh, op, cfg, _ = default_disk()
    y0 = L2Pair.random_smooth(mesh, np.random.default_rng(seed))
    tr = solve_forward(op, None, SourceData(y0), cfg)
    mass = mass_functional(tr, mesh)
    out.append(_le(2, "relative mass drift over [0, T]", np.abs(mass - mass[0]).max() / abs(mass[0]), 1e-11))
    norms = tr.node_norms(mesh)
    out.append(_le(2, "largest stepwise norm increase (relative)", np.max(np.diff(norms) / norms[:-1]), 0.0))

    imesh = build_mesh("interval", n=200)
    iop = assemble(imesh, 1.0, 0.0)
    spec = spectrum_smallest(iop, 6)
    mu_e, mu_o = tan_even_root(), tan_odd_root()
    lam1 = spec.values[1]
    out.append(_le(3, "first nonzero eigenvalue vs mu^2, tan(mu/2) = -mu (relative)", _rel(lam1, mu_e**2), 0.01))
    # the mode symmetric about the midpoint is the one this root describes
    even = [k for k in range(1, spec.values.size)
            if np.allclose(spec.vectors[:, k], spec.vectors[::-1, k], atol=1e-8 * np.abs(spec.vectors[:, k]).max())]
    k_even = even[0]
    out.append(_le(3, "first symmetric eigenvalue vs mu^2, tan(mu/2) = -mu (relative)",
                   _rel(spec.values[k_even], mu_e**2), 0.01))
    out.append(_le(3, "first nonzero eigenvalue vs mu^2, tan(mu/2) = 1/mu (relative)", _rel(lam1, mu_o**2), 0.01))
    icfg = EvolutionConfig(1.0, 200)
    u = spec.vectors[:, k_even]
    tr = solve_forward(iop, None, SourceData(L2Pair(u, u[imesh.trace_index])), icfg)
    n = tr.node_norms(imesh)
    rate = -np.log(n[-1] / n[0]) / icfg.T
    out.append(_le(3, "eigenmode decay rate vs mu^2 (relative)", _rel(rate, mu_e**2), 0.02))
    return out


# 4 -------------------------------------------------------------------------

def suite_duality(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    mesh, op, cfg, region = default_disk()
    maps = ControlMaps(op, None, region, cfg)
    worst = 0.0
    for _ in range(20):
        v = rng.standard_normal((cfg.M + 1, op.size)) * maps.support
        phi = rng.standard_normal(op.size)
        lhs = maps.inner(maps.final_state(v), phi)
        rhs = maps.control_inner(v, maps.adjoint(phi))
        worst = max(worst, _rel(lhs, rhs))
    out = [_le(4, "20 random probes <L_T v, phi_T> vs <v, L_T^* phi_T> (relative)", worst, 1e-10)]

    small = build_mesh("interval", n=79)
    sop = assemble(small, 1.0, 1.0)
    scfg = EvolutionConfig(1.0, 10)
    sreg = control_mask(small, {"segment": (0.3, 0.7)})
    smaps = ControlMaps(sop, None, sreg, scfg)
    cols = np.flatnonzero(smaps.support)
    n_t = scfg.M + 1
    L = np.zeros((sop.size, n_t * cols.size))
    for j in range(n_t):
        for i, c in enumerate(cols):
            v = np.zeros((n_t, sop.size))
            v[j, c] = 1.0
            L[:, j * cols.size + i] = smaps.final_state(v)
    W = (smaps.tw[:, None] * smaps.m_omega[None, cols]).ravel()
    dense_adj = (L.T * sop.m_c[None, :]) / W[:, None]
    Lstar = np.zeros_like(dense_adj)
    for k in range(sop.size):
        e = np.zeros(sop.size)
        e[k] = 1.0
        Lstar[:, k] = smaps.adjoint(e)[:, cols].ravel()
    err = np.abs(Lstar - dense_adj).max() / np.abs(dense_adj).max()
    out.append(_le(4, f"{sop.size}-unknown mesh: L_T^* vs explicit dense transpose (relative)", err, 1e-10))
    return out


# 5 -------------------------------------------------------------------------

def suite_observability(seed: int = 0) -> list[Check]:
    out = []
    mesh, op, cfg, _ = default_disk()
    full = estimate_backward_observability(op, None, full_observation(mesh), cfg, seed=seed)
    out.append(_le(5, "omega = Omega: |C_obs - 1|", abs(full.constant - 1.0), 0.02))

    # implicit Euler: the trapezoidal scheme barely damps the stiffest modes, which
    # then escape the time-averaged observation and inflate the discrete constant
    _, op1, cfg1, inner = default_disk(theta=1.0)
    quad_tol = 1e-4
    est = estimate_backward_observability(op1, None, inner, cfg1, quad_tol, seed=seed)
    out.append(_ge(5, "omega = disk(0, 0.5): C_obs vs constant-datum bound 12 (1 - tol)", est.constant,
                   12 * (1 - quad_tol)))

    rng = np.random.default_rng(seed)
    maps = ControlMaps(op, None, inner, cfg)
    P = rng.standard_normal((4, op.size))
    G = np.array([maps.gramian(p) for p in P])
    S = np.array([[maps.inner(G[i], P[j]) for j in range(4)] for i in range(4)])
    out.append(_le(5, "Gramian symmetry |<G x, y> - <x, G y>| / max", np.abs(S - S.T).max() / np.abs(S).max(), 1e-10))
    out.append(_ge(5, "Gramian <G x, x> on probes (min)", float(np.diag(S).min()), 0.0))

    wide = control_mask(mesh, {"center": (0.0, 0.0), "radius": 0.75})
    est_wide = estimate_backward_observability(op1, None, wide, cfg1, quad_tol, seed=seed)
    out.append(_le(5, "monotone in omega: C(disk 0.75) vs C(disk 0.5)", est_wide.constant, est.constant))
    return out


# 6 -------------------------------------------------------------------------

def suite_hum(seed: int = 0) -> list[Check]:
    out = []
    mesh, op, cfg, region = default_disk()
    maps = ControlMaps(op, None, region, cfg)
    y0 = L2Pair.constant(mesh)
    y0n = float(np.sqrt(np.dot(y0.bulk**2, mesh.bulk_weights) + np.dot(y0.surface**2, mesh.boundary_weights)))
    cg_tol = 1e-8
    norms, worst_id = [], 0.0
    for eps in (1e-2, 1e-3, 1e-4):
        r = penalized_hum(op, None, None, None, y0, region, cfg, eps, cg_tol, maps=maps)
        norms.append(r.terminal_norm)
        worst_id = max(worst_id, r.diagnostics["identity_residual"] / (cg_tol * r.diagnostics["phi_norm"]))
    out.append(_le(6, "|y(T) + eps phi_T| / (cg_tol |phi_T|), worst over eps", worst_id, 10.0))
    out.append(_le(6, "terminal_norm strictly decreasing in eps (max successive ratio)",
                   max(norms[1] / norms[0], norms[2] / norms[1]), 1.0 - 1e-12))
    ratio = norms[-1] / y0n
    out.append(_le(6, "terminal_norm / |y0| at eps = 1e-4", ratio, 1e-2))
    out.append(_le(6, "terminal_norm / |y0| at eps = 1e-4 (pinned)", ratio, PIN * HUM_TERMINAL_RATIO))
    return out


# 7 -------------------------------------------------------------------------

def _weighted_setup():
    mesh, op, cfg, region = default_disk()
    cw = weights(build_eta0(mesh, shrink(mesh, region)), T=cfg.T, **WEIGHTED_PARAMS)
    return mesh, op, cfg, region, cw


def suite_weighted(seed: int = 0) -> list[Check]:
    out = []
    mesh, op, cfg, region, cw = _weighted_setup()
    maps = ControlMaps(op, None, region, cfg)
    zero = weighted_minimal_control(op, None, None, None, L2Pair.zeros(mesh), region, cw, cfg, maps=maps)
    out.append(_le(7, "zero data: max|v| + J", float(np.abs(zero.v).max()) + zero.cost, 0.0))

    rng = np.random.default_rng(seed + 1)
    half = lambda t: np.full(mesh.n_bulk, 1.0 if t <= 0.5 else 0.0)  # noqa: E731
    problems = [
        (L2Pair.constant(mesh), None),
        (L2Pair.constant(mesh, 0.5), None),
        (L2Pair.random_smooth(mesh, rng), None),
        (L2Pair.random_smooth(mesh, rng), None),
        (L2Pair.zeros(mesh), half),
    ]
    margin, worst_C = np.inf, 0.0
    for k, (y0, f) in enumerate(problems):
        res = weighted_minimal_control(op, None, f, None, y0, region, cw, cfg, maps=maps)
        if k < 3:
            prob = WeightedProblem(op, None, f, None, y0, region, cw, cfg, maps=maps)
            hum = penalized_hum(op, None, f, None, y0, region, cfg, 1e-4, maps=maps)
            gap = prob.objective(hum.v) - res.diagnostics["objective"]
            margin = min(margin, gap / res.diagnostics["objective"])
        dn = res.diagnostics["data_norms"]
        lhs = np.sqrt(2 * res.weighted_state_energy) + np.sqrt(2 * res.control_energy)
        worst_C = max(worst_C, lhs / (dn["y0"] + dn["f"] + dn["g"]))
    out.append(_ge(7, "minimality: (J(v_HUM) - J_min) / J_min over 3 problems (min)", margin, -1e-6))
    out.append(_le(7, "(|rho y| + |v|) / data norm over 5-point sweep (pinned)", worst_C, PIN * WEIGHTED_BOUND_C))
    return out


# 8 -------------------------------------------------------------------------

def suite_carleman(seed: int = 0) -> list[Check]:
    out = []
    mesh, op, cfg, region = default_disk()
    wp = shrink(mesh, region)
    eta0 = build_eta0(mesh, wp)
    inv = check_eta0(op, eta0, wp, cfg.T)
    bad = [k for k, v in inv.items() if k.startswith("ok_") and not v]
    out.append(_le(8, "eta0 invariants violated (count)", len(bad), 0))

    cw = weights(eta0, s=1.0, lam=1.0, m=2.0, T=1.0)
    zero = np.zeros(1)
    out.append(_le(8, "xi(1/2) at boundary vs 4 e^2 (relative)", _rel(cw.xi(0.5, zero)[0], 4 * np.e**2), 1e-12))
    out.append(_le(8, "alpha(1/2) at boundary vs 4 (e^4 - e^2) (relative)",
                   _rel(cw.alpha(0.5, zero)[0], 4 * (np.e**4 - np.e**2)), 1e-12))

    rng = np.random.default_rng(seed)
    prop = Propagator(op, None, cfg)
    worst = 0.0
    for _ in range(10):
        tr = solve_backward(op, None, None, None, L2Pair.random_smooth(mesh, rng), cfg, prop=prop)
        for s in (2.0, 4.0, 8.0):
            rep = carleman_ratio(tr, op, None, weights(eta0, s=s, lam=2.0, m=2.0, T=cfg.T), cfg, region)
            worst = max(worst, rep.ratio)
    out.append(_le(8, "Carleman ratio, s in {2, 4, 8}, 10 data (max, pinned kappa)", worst, PIN * CARLEMAN_KAPPA))
    return out


# 9 -------------------------------------------------------------------------

def suite_semilinear(seed: int = 0) -> list[Check]:
    out = []
    mesh, op, cfg, region, cw = _weighted_setup()
    fp_tol = 1e-6
    y0 = L2Pair.constant(mesh, 0.1 / np.sqrt(mesh.area + mesh.perimeter))
    y0n = 0.1

    lin = weighted_minimal_control(op, None, None, None, y0, region, cw, cfg)
    zero = picard_control(op, Nonlinearity(), None, None, y0, region, cfg, cw=cw, fp_tol=fp_tol, check=False)
    diff = np.abs(zero.linear.v - lin.v).max() / np.abs(lin.v).max()
    out.append(_le(9, "F = G = 0 vs linear weighted control (relative max |dv|)", diff, fp_tol))

    res = picard_control(op, rational_saturation(), None, None, y0, region, cfg, cw=cw, fp_tol=fp_tol)
    out.append(_le(9, "Picard iterations (pinned budget)", res.iterations, 2 * SEMILINEAR_ITERATIONS))
    ratio = res.control.terminal_norm / y0n
    out.append(_le(9, "nonlinear terminal_norm / |y0|", ratio, 1e-2))
    out.append(_le(9, "nonlinear terminal_norm / |y0| (pinned)", ratio, PIN * SEMILINEAR_TERMINAL_RATIO))
    out.append(_le(9, "re-linearization change at accepted iterate", res.relinearization_change, 2 * fp_tol))
    return out


SUITES = {
    "operators": suite_operators,
    "evolution": suite_evolution,
    "duality": suite_duality,
    "observability": suite_observability,
    "hum": suite_hum,
    "weighted": suite_weighted,
    "semilinear": suite_semilinear,
    "carleman": suite_carleman,
}


def run_suite(name: str, seed: int = 0) -> list[Check]:
    if name not in SUITES:
        raise InvalidArgument(f"unknown suite {name!r}; valid suites: {', '.join(SUITES)}")
    return SUITES[name](seed)
