import numpy as np
import pytest

from wentzell.errors import InvalidArgument, InvariantViolation
from wentzell.evolution import EvolutionConfig
from wentzell.fields import L2Pair
from wentzell.geometry import control_mask, full_observation
from wentzell.observability import (
    ControlMaps,
    check_forward_final_state,
    estimate_backward_observability,
    observability_quotient,
)


def test_gramian_self_adjoint_and_psd(small_disk, small_cfg, rng):
    _, op, region = small_disk
    maps = ControlMaps(op, None, region, small_cfg)
    x, y = rng.standard_normal((2, op.size))
    assert maps.inner(maps.gramian(x), y) == pytest.approx(maps.inner(x, maps.gramian(y)), rel=1e-10)
    assert maps.inner(maps.gramian(x), x) > 0
    assert maps.observed_energy(x) == pytest.approx(maps.inner(maps.gramian(x), x), rel=1e-10)


def test_full_observation_constant_is_one(small_disk, small_cfg):
    mesh, op, _ = small_disk
    rep = estimate_backward_observability(op, None, full_observation(mesh), small_cfg, tol=1e-8)
    assert rep.constant == pytest.approx(1.0, abs=1e-6)


def test_interior_constant_dominates_quotients(small_disk, rng):
    _, op, region = small_disk
    cfg = EvolutionConfig(1.0, 20, theta=1.0)
    rep = estimate_backward_observability(op, None, region, cfg, tol=1e-6)
    maps = ControlMaps(op, None, region, cfg)
    assert rep.constant > 1.0
    for _ in range(5):
        assert observability_quotient(maps, rng.standard_normal(op.size)) <= rep.constant * (1 + 1e-6)
    assert observability_quotient(maps, op.project(rep.maximizer)) == pytest.approx(rep.constant, rel=1e-4)
    larger = estimate_backward_observability(op, None, control_mask(op.mesh, {"center": (0, 0), "radius": 0.75}),
                                             cfg, tol=1e-6)
    assert larger.constant <= rep.constant


def test_forward_check(small_disk, rng):
    mesh, op, region = small_disk
    cfg = EvolutionConfig(1.0, 20, theta=1.0)
    rep = estimate_backward_observability(op, None, region, cfg, tol=1e-6)
    samples = [L2Pair.random_smooth(mesh, rng) for _ in range(3)]
    ok = check_forward_final_state(op, None, region, cfg, samples, backward_constant=rep.constant)
    assert ok.consistent and ok.maximum <= rep.constant
    with pytest.raises(InvariantViolation):
        check_forward_final_state(op, None, region, cfg, samples, backward_constant=1e-3 * ok.maximum)
    with pytest.raises(InvalidArgument):
        check_forward_final_state(op, None, region, cfg, [])
