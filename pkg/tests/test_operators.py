import numpy as np
import pytest

from wentzell.errors import InvalidArgument
from wentzell.fields import L2Pair
from wentzell.geometry import build_mesh
from wentzell.operators import PotentialPair, apply_operator, assemble, normal_derivative, spectrum_smallest


def test_stiffness_structure(small_disk, rng):
    _, op, _ = small_disk
    K = op.stiffness.toarray()
    assert np.abs(K - K.T).max() <= 1e-12 * np.abs(K).max()
    assert np.abs(K @ np.ones(K.shape[0])).max() <= 1e-12
    for y in rng.standard_normal((20, K.shape[0])):
        assert y @ K @ y >= -1e-12 * (y @ y)


def test_operator_on_paraboloid():
    """A(1 - r^2, 0) is -4 in the interior; on the ring it is the projected value."""
    mesh = build_mesh("disk", n_r=16, n_theta=64)
    op = assemble(mesh, 1.0, 1.0)
    y = L2Pair.from_function(mesh, lambda x, yy: 1 - x**2 - yy**2)
    Ay = op.apply(y)
    interior = mesh.interior_mask()
    assert np.allclose(Ay.bulk[interior], -4.0, atol=1e-10)
    # exact pair: bulk -4 (Laplacian), surface 2 (= -d dn y, zero tangential part)
    exact = op.embed(op.project(L2Pair(np.full(mesh.n_bulk, -4.0), np.full(mesh.n_boundary, 2.0))))
    assert np.allclose(Ay.surface, exact.surface, atol=1e-10)


def test_surface_diffusion_on_boundary_mode():
    """cos(k theta) is an eigenvector of the periodic second difference."""
    mesh = build_mesh("disk", n_r=16, n_theta=64)
    D = assemble(mesh, 1.0, 1.0).diff
    theta = np.arctan2(mesh.boundary_nodes[:, 1], mesh.boundary_nodes[:, 0])
    u = np.cos(3 * theta)
    dth = 2 * np.pi / 64
    lam = (2 * np.sin(3 * dth / 2) / dth) ** 2
    assert np.allclose(D.surf_lap @ u, -lam * u, atol=1e-12)
    assert lam == pytest.approx(9.0, rel=1e-2)


def test_normal_derivative_of_paraboloid():
    mesh = build_mesh("disk", n_r=16, n_theta=64)
    op = assemble(mesh, 1.0, 1.0)
    dn = normal_derivative(op, 1 - mesh.radii() ** 2)
    assert np.allclose(dn, -2.0, atol=1e-10)


def test_potentials_subtracted():
    mesh = build_mesh("interval", n=10)
    op = assemble(mesh, 1.0, 0.0)
    y = L2Pair.constant(mesh, 2.0)
    out = apply_operator(op, PotentialPair(0.5, 3.0), 0.0, y)
    assert np.allclose(out.bulk, -1.0, atol=1e-12)
    assert np.allclose(out.surface, -6.0, atol=1e-12)


def test_potential_helpers():
    mesh = build_mesh("interval", n=4)
    pot = PotentialPair(lambda t: t, None)
    assert not pot.static and PotentialPair(1.0, 2.0).static
    assert pot.sup_norm([0.0, 0.5], mesh) == 0.5
    with pytest.raises(InvalidArgument):
        pot.check_bound([0.0, 2.0], mesh, 1.0)
    rev = pot.reversed(1.0)
    assert rev.bulk(0.25, mesh)[0] == 0.75
    assert PotentialPair.zero().is_zero


def test_spectrum_kernel_and_order(small_disk):
    _, op, _ = small_disk
    sp = spectrum_smallest(op, 5)
    assert abs(sp.values[0]) < 1e-10
    assert np.all(np.diff(sp.values) >= -1e-12)
    G = sp.vectors.T @ (op.m_c[:, None] * sp.vectors)
    assert np.allclose(G, np.eye(5), atol=1e-10)


def test_spectrum_sparse_path_agrees_with_dense():
    mesh = build_mesh("disk", n_r=24, n_theta=64)
    op = assemble(mesh, 1.0, 1.0)
    sp = spectrum_smallest(op, 4)  # above the dense cutoff: shift-invert
    coarse = spectrum_smallest(assemble(build_mesh("disk", n_r=16, n_theta=64), 1.0, 1.0), 4)
    assert np.allclose(sp.values[1:], coarse.values[1:], rtol=0.02)


def test_assemble_rejects_bad_coefficients():
    mesh = build_mesh("interval", n=4)
    with pytest.raises(InvalidArgument):
        assemble(mesh, 0.0, 1.0)
    with pytest.raises(InvalidArgument):
        assemble(mesh, 1.0, -1.0)


def test_dump_triplets(tmp_path, small_disk):
    _, op, _ = small_disk
    kpath, mpath = op.dump_triplets(tmp_path / "op")
    rows = np.loadtxt(kpath)
    assert rows.shape[1] == 3
    K = op.stiffness.tocoo()
    assert rows.shape[0] == K.nnz
    assert np.loadtxt(mpath).shape == (op.mass.size, 3)
