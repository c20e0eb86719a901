import numpy as np
import pytest

from wentzell.errors import InvalidArgument
from wentzell.geometry import build_mesh, control_mask, full_observation, shrink


def test_disk_quadrature_sums():
    mesh = build_mesh("disk", n_r=16, n_theta=64)
    assert abs(mesh.boundary_weights.sum() - 2 * np.pi) <= 1e-12
    assert abs(mesh.bulk_weights.sum() - np.pi) <= 1e-2
    assert mesh.n_bulk == 1 + 16 * 64 and mesh.n_boundary == 64


def test_boundary_nodes_on_circle_and_trace():
    mesh = build_mesh("disk", n_r=5, n_theta=12, radius=2.0)
    assert np.allclose(np.hypot(*mesh.boundary_nodes.T), 2.0)
    assert np.array_equal(mesh.bulk_nodes[mesh.trace_index], mesh.boundary_nodes)
    assert np.array_equal(mesh.ring(5), mesh.trace_index)
    assert not mesh.interior_mask()[mesh.trace_index].any()


def test_interval_mesh():
    mesh = build_mesh("interval", n=10, length=2.0)
    assert mesh.n_bulk == 11 and mesh.n_boundary == 2
    assert abs(mesh.bulk_weights.sum() - 2.0) < 1e-14
    assert np.array_equal(mesh.trace_index, [0, 10])


@pytest.mark.parametrize("kw", [{"n_r": 1}, {"n_theta": 1}])
def test_disk_resolution_too_small(kw):
    with pytest.raises(InvalidArgument):
        build_mesh("disk", **kw)


def test_unknown_kind():
    with pytest.raises(InvalidArgument):
        build_mesh("square")


def test_control_mask_strictly_inside():
    mesh = build_mesh("disk", n_r=8, n_theta=16)
    reg = control_mask(mesh, {"center": (0.0, 0.0), "radius": 0.5})
    assert reg.indicator[0] == 1
    assert not reg.indicator[mesh.trace_index].any()
    assert np.all(mesh.radii()[reg.indicator == 1] < 0.5)


@pytest.mark.parametrize("desc", [
    {"center": (0.0, 0.0), "radius": 1.0},
    {"center": (0.6, 0.0), "radius": 0.5},
    {"center": (0.0, 0.0), "radius": -0.1},
])
def test_control_mask_rejects_boundary_reach(desc):
    mesh = build_mesh("disk", n_r=8, n_theta=16)
    with pytest.raises(InvalidArgument):
        control_mask(mesh, desc)


def test_control_mask_empty_region():
    mesh = build_mesh("disk", n_r=4, n_theta=8)
    with pytest.raises(InvalidArgument):
        control_mask(mesh, {"center": (0.5, 0.1), "radius": 0.01})


def test_segment_and_shrink():
    mesh = build_mesh("interval", n=20)
    reg = control_mask(mesh, {"segment": (0.2, 0.8)})
    sub = shrink(mesh, reg)
    assert reg.contains(sub) and not sub.contains(reg)
    assert sub.descriptor["segment"] == pytest.approx((0.35, 0.65))
    with pytest.raises(InvalidArgument):
        control_mask(mesh, {"segment": (0.0, 0.5)})


def test_full_observation():
    mesh = build_mesh("disk", n_r=4, n_theta=8)
    full = full_observation(mesh)
    assert full.is_full and full.surface.sum() == mesh.n_boundary
    with pytest.raises(InvalidArgument):
        shrink(mesh, full)


def test_mesh_csv(tmp_path):
    mesh = build_mesh("disk", n_r=3, n_theta=8)
    mesh.to_csv(tmp_path / "mesh.csv")
    rows = np.loadtxt(tmp_path / "mesh.csv", delimiter=",", skiprows=1)
    assert rows.shape == (mesh.n_bulk + mesh.n_boundary, 5)
    assert rows[:, 4].sum() == mesh.n_boundary
    assert np.allclose(rows[: mesh.n_bulk, 3], mesh.bulk_weights)
