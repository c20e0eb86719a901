import numpy as np
import pytest

from wentzell.carleman import build_eta0, weights
from wentzell.control import penalized_hum
from wentzell.errors import InvalidArgument, InvariantViolation
from wentzell.evolution import SourceData, solve_forward
from wentzell.fields import L2Pair
from wentzell.geometry import shrink
from wentzell.semilinear import Nonlinearity, frozen_potentials, picard_control, rational_saturation, simulate_nonlinear


def test_nonlinearity_validation():
    with pytest.raises(InvariantViolation):
        Nonlinearity(F=lambda x: 1.0 + 0 * x, Ftilde=lambda x: 1.0 + 0 * x)
    with pytest.raises(InvariantViolation):
        Nonlinearity(F=lambda x: np.sin(x), Ftilde=lambda x: 0 * x + 1.0)
    with pytest.raises(InvariantViolation):
        Nonlinearity(F=lambda x: 3 * x, Ftilde=lambda x: 3 + 0 * x, R_F=1.0)
    assert Nonlinearity().is_zero and not rational_saturation().is_zero


def test_frozen_potentials_tabulate_nodes(small_disk, small_cfg, rng):
    _, op, _ = small_disk
    U = rng.standard_normal((small_cfg.M + 1, op.size))
    pot = frozen_potentials(op, rational_saturation(), U, small_cfg)
    n = 7
    assert np.allclose(pot.bulk(n * small_cfg.dt, op.mesh), 1 / (1 + U[n] ** 2))


def test_zero_nonlinearity_is_linear(small_disk, small_cfg, rng):
    mesh, op, _ = small_disk
    src = SourceData(L2Pair.random_smooth(mesh, rng))
    U, resid = simulate_nonlinear(op, Nonlinearity(), src, small_cfg)
    tr = solve_forward(op, None, src, small_cfg)
    assert np.allclose(U[-1], op.project(tr.final()), atol=1e-13)
    assert resid <= 1e-10


def test_picard_with_zero_nonlinearity_reproduces_hum(small_disk, small_cfg, rng):
    mesh, op, region = small_disk
    y0 = L2Pair.random_smooth(mesh, rng) * 0.1
    res = picard_control(op, Nonlinearity(), None, None, y0, region, small_cfg, solver="hum",
                         control_params={"epsilon": 1e-3, "cg_tol": 1e-10})
    lin = penalized_hum(op, None, None, None, y0, region, small_cfg, epsilon=1e-3, cg_tol=1e-10)
    assert res.iterations <= 2
    assert res.control.terminal_norm == pytest.approx(lin.terminal_norm, rel=1e-6)


def test_picard_saturation(small_disk, small_cfg, rng, tmp_path):
    mesh, op, region = small_disk
    cw = weights(build_eta0(mesh, shrink(mesh, region)), s=1.0, lam=1.0, m=1.1)
    y0 = L2Pair.random_smooth(mesh, rng) * 0.1
    res = picard_control(op, rational_saturation(), None, None, y0, region, small_cfg, cw=cw,
                         control_params={"mu": 1e-4, "cg_tol": 1e-10}, fp_tol=1e-6)
    assert res.iterations < 20
    assert res.relinearization_change <= 1e-5
    assert res.nonlinear_residual <= 1e-10
    res.write_history(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "k,distance,terminal_norm,inner_cg_iterations,damping"
    assert len(lines) == res.iterations + 1


def test_picard_argument_checks(small_disk, small_cfg):
    mesh, op, region = small_disk
    y0 = L2Pair.zeros(mesh)
    with pytest.raises(InvalidArgument):
        picard_control(op, Nonlinearity(), None, None, y0, region, small_cfg, solver="newton")
    with pytest.raises(InvalidArgument):
        picard_control(op, Nonlinearity(), None, None, y0, region, small_cfg)
    with pytest.raises(InvalidArgument):
        picard_control(op, Nonlinearity(), None, None, y0, region, small_cfg, solver="hum", damping=0.0)
