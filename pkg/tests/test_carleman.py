import numpy as np
import pytest

from wentzell.carleman import (
    LHS_NAMES,
    RHS_NAMES,
    CarlemanWeights,
    build_eta0,
    carleman_ratio,
    check_eta0,
    weights,
    write_sweep_csv,
)
from wentzell.errors import (
    InvalidArgument,
    SingularWeight,
    UndefinedRatio,
    UnsupportedConfiguration,
    UnsupportedGeometry,
    WeightOverflow,
)
from wentzell.evolution import EvolutionConfig, solve_backward
from wentzell.fields import L2Pair, Trajectory
from wentzell.geometry import build_mesh, control_mask, shrink
from wentzell.operators import assemble


@pytest.fixture(scope="module")
def setup():
    mesh = build_mesh("disk", n_r=8, n_theta=32)
    op = assemble(mesh, 1.0, 1.0)
    region = control_mask(mesh, {"center": (0.0, 0.0), "radius": 0.5})
    wp = shrink(mesh, region)
    return mesh, op, region, wp, build_eta0(mesh, wp)


def test_eta0_invariants(setup):
    _, op, _, wp, eta0 = setup
    res = check_eta0(op, eta0, wp)
    assert all(v for k, v in res.items() if k.startswith("ok_"))
    assert res["max_normal_derivative"] == pytest.approx(-2.0)


def test_eta0_requires_origin_and_disk(setup):
    mesh, *_ = setup
    off = control_mask(mesh, {"center": (0.4, 0.0), "radius": 0.2})
    with pytest.raises(UnsupportedConfiguration):
        build_eta0(mesh, off)
    line = build_mesh("interval", n=10)
    with pytest.raises(UnsupportedGeometry):
        build_eta0(line, control_mask(line, {"segment": (0.2, 0.8)}))


def test_spot_values():
    cw = CarlemanWeights(np.array([1.0, 0.0]), lam=1.0, m=2.0, T=1.0)
    b = np.zeros(1)
    assert cw.xi(0.5, b)[0] == pytest.approx(4 * np.e**2, rel=1e-12)
    assert cw.alpha(0.5, b)[0] == pytest.approx(4 * (np.e**4 - np.e**2), rel=1e-12)
    assert np.exp(cw.log_xi(0.5, b))[0] == pytest.approx(4 * np.e**2, rel=1e-12)


def test_weight_singularities_and_validation():
    cw = CarlemanWeights(np.array([1.0, 0.0]))
    for t in (0.0, 1.0):
        with pytest.raises(SingularWeight):
            cw.alpha(t)
    with pytest.raises(SingularWeight):
        cw.xi_tilde(1.0)
    assert np.all(cw.alpha_tilde(0.0) > 0)
    with pytest.raises(InvalidArgument):
        CarlemanWeights(np.zeros(2), lam=0.5)
    with pytest.raises(InvalidArgument):
        cw.log_rho(0.5, 0.0)


def test_rho_bounded_and_overflow():
    cw = weights(np.array([1.0, 0.0]), s=1.0, lam=1.0, m=1.1)
    assert np.all(np.isfinite(cw.rho(1.0, 1.0)))
    assert cw.max_log_rho(1.0) == pytest.approx(float(np.max(cw.log_rho(1.0, 1.0))))
    # rho_eps grows as t -> T and as eps -> 0
    assert np.all(cw.rho(1.0, 0.5) > cw.rho(0.5, 0.5))
    big = weights(np.array([1.0, 0.0]), s=2.0, lam=2.0, m=2.0)
    with pytest.raises(WeightOverflow):
        big.rho(1.0, 1e-2)


def test_ratio_on_adjoint_solution(setup, tmp_path):
    mesh, op, region, _, eta0 = setup
    cfg = EvolutionConfig(1.0, 60)
    tr = solve_backward(op, None, None, None, L2Pair.random_smooth(mesh, np.random.default_rng(3)), cfg)
    rows = []
    for s in (2.0, 4.0):
        rep = carleman_ratio(tr, op, None, weights(eta0, s=s, lam=2.0), cfg, region)
        assert np.isfinite(rep.ratio) and rep.ratio > 0 and not rep.anomaly
        assert len(rep.log_lhs) == len(LHS_NAMES) and len(rep.log_rhs) == len(RHS_NAMES)
        rows.append((s, 2.0, rep))
    write_sweep_csv(tmp_path / "sweep.csv", rows)
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[0].startswith("s,lambda,log_lhs_")


def test_ratio_rejects_zero_and_interval(setup):
    mesh, op, region, _, eta0 = setup
    cfg = EvolutionConfig(1.0, 10)
    zero = Trajectory.uniform(1.0, 10, np.zeros((11, mesh.n_bulk)), np.zeros((11, mesh.n_boundary)))
    with pytest.raises(UndefinedRatio):
        carleman_ratio(zero, op, None, weights(eta0), cfg, region)
    line = build_mesh("interval", n=10)
    lop = assemble(line, 1.0, 0.0)
    tr = Trajectory.uniform(1.0, 10, np.ones((11, line.n_bulk)), np.ones((11, 2)))
    with pytest.raises(UnsupportedGeometry):
        carleman_ratio(tr, lop, None, weights(eta0), cfg, control_mask(line, {"segment": (0.2, 0.8)}))
