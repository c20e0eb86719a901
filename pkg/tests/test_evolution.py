import numpy as np
import pytest

from wentzell import evolution
from wentzell.errors import InvalidArgument
from wentzell.evolution import (
    EvolutionConfig,
    Propagator,
    SourceData,
    mass_functional,
    region_mass,
    residual_distributional,
    solve_backward,
    solve_forward,
)
from wentzell.fields import L2Pair, Trajectory, inner
from wentzell.operators import PotentialPair, spectrum_smallest


@pytest.mark.parametrize("theta", [0.5, 0.75, 1.0])
def test_mass_and_norm(small_disk, rng, theta):
    mesh, op, _ = small_disk
    cfg = EvolutionConfig(1.0, 40, theta)
    tr = solve_forward(op, None, SourceData(L2Pair.random_smooth(mesh, rng)), cfg)
    mass = mass_functional(tr, mesh)
    assert np.abs(mass - mass[0]).max() <= 1e-12 * abs(mass[0])
    norms = tr.node_norms(mesh)
    assert np.all(np.diff(norms) <= 1e-14 * norms[:-1])


def test_config_validation():
    for kw in ({"T": 0.0}, {"M": 1}, {"theta": 0.4}, {"theta": 1.5}):
        with pytest.raises(InvalidArgument):
            EvolutionConfig(**kw)
    cfg = EvolutionConfig(2.0, 8)
    assert cfg.dt == 0.25 and cfg.times[-1] == 2.0


def test_eigenmode_follows_scheme_amplification(small_disk, small_cfg):
    mesh, op, _ = small_disk
    sp = spectrum_smallest(op, 3)
    u = sp.vectors[:, 1]
    tr = solve_forward(op, None, SourceData(op.embed(u)), small_cfg)
    lam, dt = sp.values[1], small_cfg.dt
    g = (1 - 0.5 * dt * lam) / (1 + 0.5 * dt * lam)
    norms = tr.node_norms(mesh)
    assert np.allclose(norms / norms[0], g ** np.arange(small_cfg.M + 1), rtol=1e-10)
    assert norms[-1] / norms[0] == pytest.approx(np.exp(-lam), rel=1e-3)


def test_residual_small_for_solution_large_for_perturbation(small_disk, small_cfg, rng):
    mesh, op, region = small_disk
    pot = PotentialPair(lambda t: 0.5 + t, 0.3)
    src = SourceData(L2Pair.random_smooth(mesh, rng), f=lambda t: np.sin(t) * np.ones(mesh.n_bulk),
                     g=lambda t: t, v=rng.standard_normal((small_cfg.M + 1, mesh.n_bulk)) * region.indicator)
    tr = solve_forward(op, pot, src, small_cfg)
    assert residual_distributional(tr, op, pot, src, small_cfg) <= 1e-10
    bulk = tr.bulk.copy()
    bulk[small_cfg.M // 2, 0] += 1.0
    bad = Trajectory(tr.times, bulk, tr.surface)
    assert residual_distributional(bad, op, pot, src, small_cfg) > 1e-5


def test_control_support_enforced(small_disk, small_cfg):
    mesh, op, region = small_disk
    v = np.ones((small_cfg.M + 1, mesh.n_bulk))
    with pytest.raises(InvalidArgument):
        SourceData(L2Pair.zeros(mesh), v=v).check_support(region)


def test_backward_routes_agree(small_disk, small_cfg, rng):
    """Transposed sweep and time-reversed forward solve coincide for static potentials."""
    mesh, op, _ = small_disk
    pot = PotentialPair(0.7, 0.2)
    phi_T = L2Pair.random_smooth(mesh, rng)
    sweep = solve_backward(op, pot, None, None, phi_T, small_cfg)
    reversed_fwd = solve_backward(op, pot, lambda t: 0.0, None, phi_T, small_cfg)
    assert np.allclose(sweep.bulk, reversed_fwd.bulk, atol=1e-12)
    assert np.allclose(sweep.final().bulk, op.embed(op.project(phi_T)).bulk)


def test_discrete_duality(small_disk, small_cfg, rng):
    mesh, op, region = small_disk
    pot = PotentialPair(lambda t: np.cos(t), 0.5)
    prop = Propagator(op, pot, small_cfg)
    m_omega = region_mass(op, region)
    v = rng.standard_normal((small_cfg.M + 1, op.size)) * (m_omega > 0)
    yT = prop.forward(np.zeros(op.size), prop.nodal_forcing(v, m_omega))[-1]
    phi = rng.standard_normal(op.size)
    _, r = prop.adjoint_sweep(op.m_c * phi)
    grad = prop.nodal_gradient(r, m_omega)
    lhs, rhs = float(yT @ (op.m_c * phi)), float(np.sum(grad * v))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_projection_of_incompatible_pair(small_disk, small_cfg):
    mesh, op, _ = small_disk
    y0 = L2Pair(np.zeros(mesh.n_bulk), np.ones(mesh.n_boundary))
    tr = solve_forward(op, None, SourceData(y0), small_cfg)
    assert inner(tr.state(0), L2Pair.constant(mesh), mesh) == pytest.approx(
        inner(y0, L2Pair.constant(mesh), mesh), rel=1e-12)
    assert np.array_equal(tr.surface[0], tr.bulk[0][mesh.trace_index])


def test_iterative_step_solver_matches_direct(small_disk, small_cfg, rng, monkeypatch):
    mesh, op, _ = small_disk
    y0 = L2Pair.random_smooth(mesh, rng)
    direct = solve_forward(op, None, SourceData(y0), small_cfg)
    monkeypatch.setattr(evolution, "DIRECT_LIMIT", 0)
    iterative = solve_forward(op, None, SourceData(y0), small_cfg)
    assert np.allclose(direct.bulk, iterative.bulk, atol=1e-10)


def test_nonconforming_terminal_data(small_disk, small_cfg):
    _, op, _ = small_disk
    with pytest.raises(InvalidArgument):
        solve_backward(op, None, None, None, L2Pair(np.ones(2), np.ones(1)), small_cfg)
