import numpy as np
import pytest

from wentzell.carleman import build_eta0, weights
from wentzell.control import WeightedProblem, penalized_hum, weighted_minimal_control
from wentzell.errors import InvalidArgument
from wentzell.fields import L2Pair
from wentzell.geometry import full_observation, shrink
from wentzell.observability import ControlMaps


@pytest.fixture(scope="module")
def weights_small(small_disk):
    mesh, _, region = small_disk
    return weights(build_eta0(mesh, shrink(mesh, region)), s=1.0, lam=1.0, m=1.1)


def test_hum_zero_data(small_disk, small_cfg):
    mesh, op, region = small_disk
    res = penalized_hum(op, None, None, None, L2Pair.zeros(mesh), region, small_cfg)
    assert res.terminal_norm == 0 and not res.v.any()


def test_hum_identity_and_support(small_disk, small_cfg, rng):
    mesh, op, region = small_disk
    y0 = L2Pair.random_smooth(mesh, rng)
    res = penalized_hum(op, None, None, None, y0, region, small_cfg, epsilon=1e-3, cg_tol=1e-10)
    assert res.diagnostics["identity_residual"] <= 1e-6 * res.terminal_norm
    outside = op.project(L2Pair(region.indicator, np.zeros(mesh.n_boundary))) == 0
    assert not res.v[:, outside].any()
    assert res.diagnostics["distributional_residual"] <= 1e-9
    free = penalized_hum(op, None, None, None, y0, region, small_cfg, epsilon=1e3)
    assert res.terminal_norm < free.terminal_norm


def test_hum_matches_dense_solve(small_disk, small_cfg, rng):
    mesh, op, region = small_disk
    maps = ControlMaps(op, None, region, small_cfg)
    n = op.size
    G = np.column_stack([maps.gramian(e) for e in np.eye(n)])
    y0 = L2Pair.random_smooth(mesh, rng)
    yfree = maps.propagate(op.project(y0))
    eps = 1e-2
    phi = np.linalg.solve(G + eps * np.eye(n), -yfree)
    res = penalized_hum(op, None, None, None, y0, region, small_cfg, epsilon=eps, cg_tol=1e-12, maps=maps)
    assert np.allclose(op.project(res.phi_T), phi, rtol=1e-7, atol=1e-9 * np.abs(phi).max())


def test_hum_rejects_bad_arguments(small_disk, small_cfg):
    mesh, op, region = small_disk
    with pytest.raises(InvalidArgument):
        penalized_hum(op, None, None, None, L2Pair.zeros(mesh), region, small_cfg, epsilon=0.0)
    with pytest.raises(InvalidArgument):
        penalized_hum(op, None, None, None, L2Pair.zeros(mesh), full_observation(mesh), small_cfg)


def test_weighted_zero_data(small_disk, small_cfg, weights_small):
    mesh, op, region = small_disk
    res = weighted_minimal_control(op, None, None, None, L2Pair.zeros(mesh), region, weights_small, small_cfg)
    assert res.cost == 0 and not res.v.any()


def test_weighted_minimizer(small_disk, small_cfg, weights_small, rng):
    mesh, op, region = small_disk
    y0 = L2Pair.random_smooth(mesh, rng) * 0.1
    res = weighted_minimal_control(op, None, None, None, y0, region, weights_small, small_cfg,
                                   mu=1e-4, cg_tol=1e-10)
    prob = WeightedProblem(op, None, None, None, y0, region, weights_small, small_cfg, 1.0, 1e-4)
    J = prob.objective(res.v)
    assert J == pytest.approx(res.diagnostics["objective"], rel=1e-12)
    support = prob.maps.support
    for _ in range(3):
        dv = rng.standard_normal(res.v.shape) * support * 1e-2
        assert prob.objective(res.v + dv) >= J
    assert res.terminal_norm < np.sqrt(prob.maps.inner(op.project(y0), op.project(y0)))
