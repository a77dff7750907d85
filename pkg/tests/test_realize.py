import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import golden
from startile.config import Config
from startile.errors import NumericError, ResourceError, ValidationError
from startile.geometry import StarPolygon, boundary_samples
from startile.maps import LinearLayer, PlaneMap
from startile.realize import (Hierarchy, bilip_estimate, build_phi_m, convergence_report, level_density,
                              sample_working_region, verify_jacobian)
from startile.starmap import star_to_star
from startile.substitution import count_tiles, pf_stats

PHI = golden()


@pytest.fixture(scope="module")
def penrose_phi3(penrose):
    return build_phi_m(penrose, 0, 3, working_level=6)


# -- level densities ------------------------------------------------------------------------


@pytest.mark.parametrize("m", range(0, 7))
def test_chair_level_density_is_one_third(chair, m):
    assert level_density(chair, m).by_type[0] == pytest.approx(1 / 3, rel=1e-12)


def test_level0_density_is_reciprocal_area(penrose):
    assert np.allclose(level_density(penrose, 0).by_type, 1.0 / penrose.areas, rtol=1e-12)


def test_penrose_density_tends_to_rho(penrose):
    rho = pf_stats(penrose).rho
    lam2 = PHI ** -2
    for m in (4, 8, 12):
        dev = np.abs(level_density(penrose, m).by_type / rho - 1)
        # area-normalized discrepancy decays like (lambda2 / lambda)^m
        assert np.all(dev <= 10 * (lam2 / PHI ** 2) ** m)
    assert np.allclose(level_density(penrose, 16).by_type, rho, rtol=1e-9)


@given(st.integers(1, 6))
@settings(max_examples=6)
def test_refinement_consistency(m):
    from startile.substitution import get_system

    sys = get_system("penrose")
    prev = level_density(sys, m - 1).by_type
    cur = level_density(sys, m).by_type
    for t in range(sys.n_types):
        kids = sys.rules[t]
        mass = sum(prev[c.type] * sys.areas[c.type] / sys.xi ** 2 for c in kids)
        assert mass / sys.areas[t] == pytest.approx(cur[t], rel=1e-9)


def test_tile_by_tile_accumulation_matches_counts(penrose):
    h = Hierarchy(penrose, 0, 5)
    f = 1.0 / h.node_area(0)
    for m in range(6):
        acc = level_density(penrose, m, f, hierarchy=h)
        exact = np.array([sum(count_tiles(penrose, t, m)) for t in h.types[m]]) / h.node_area(m)
        assert np.allclose(acc.node_values, exact, rtol=1e-9)


def test_level_density_rejects_negative(penrose):
    with pytest.raises(ValidationError):
        level_density(penrose, -1)


# -- hierarchy ----------------------------------------------------------------------------


def test_hierarchy_counts_and_areas(penrose):
    h = Hierarchy(penrose, 0, 5)
    assert h.count(0) == sum(count_tiles(penrose, 0, 5))
    for k in range(6):
        assert h.node_area(k).sum() == pytest.approx(h.node_area(5)[0], rel=1e-9)


def test_hierarchy_locate_agrees_with_polygons(penrose, rng):
    h = Hierarchy(penrose, 1, 4)
    pts, _ = sample_working_region(h, 500, rng, margin=1e-2)
    from startile.geometry import point_in_polygon

    for k in (0, 2):
        node = h.locate(pts, k)
        for p, i in zip(pts[:100], node[:100]):
            assert point_in_polygon(h.polygon(k, i), p[None])[0]


def test_hierarchy_cap(penrose):
    with pytest.raises(ResourceError):
        Hierarchy(penrose, 0, 12, max_tiles=1000)


# -- phi_m -----------------------------------------------------------------------------------


@pytest.mark.parametrize("m", [1, 2, 3])
def test_chair_phi_is_identity(chair, rng, m):
    rm = build_phi_m(chair, 0, m, working_level=3)
    pts, _ = sample_working_region(rm.hierarchy, 500, rng)
    assert np.max(np.abs(rm(pts) - pts)) <= 1e-6


def test_phi_0_is_identity(penrose, rng):
    rm = build_phi_m(penrose, 0, 0, working_level=3)
    pts, _ = sample_working_region(rm.hierarchy, 200, rng)
    assert np.array_equal(rm(pts), pts)


def test_penrose_phi_telescoping(penrose_phi3, rng):
    rm = penrose_phi3
    pts, excluded = sample_working_region(rm.hierarchy, 2000, rng)
    assert excluded < 0.01
    for m in (1, 2, 3):
        phi = rm.phi(m)
        res = verify_jacobian(phi, rm.jacobian_target(m, pts), pts)
        assert res["median"] <= 5e-2


def test_phi_fixes_supertile_boundaries(penrose_phi3):
    rm = penrose_phi3
    h = rm.hierarchy
    for m in (1, 2, 3):
        layer = rm.map.layers[m - 1]
        for i in range(min(h.count(m), 6)):
            b = boundary_samples(h.polygon(m, i), 200)
            # nudge inward along the segment to the node's center so locate picks this node
            c = h.to_world(m, [i], penrose_phi3.sys.prototiles[h.types[m][i]].shape.center[None])[0]
            b = b + 1e-9 * (c - b)
            assert np.max(np.hypot(*(layer(b) - b).T)) <= 1e-6


def test_phi_maps_region_into_itself(penrose_phi3, rng):
    rm = penrose_phi3
    pts, _ = sample_working_region(rm.hierarchy, 3000, rng, margin=0.0)
    assert rm.hierarchy.contains(rm(pts)).mean() == 1.0


def test_monotone_improvement_vs_rho(penrose_phi3, penrose):
    stats = convergence_report(penrose, 3, realized=penrose_phi3, samples=1500)
    med = [stats.residuals[m]["vs_rho"]["median"] for m in (1, 2, 3)]
    for a, b in zip(med, med[1:]):
        assert b <= 1.1 * a
    assert stats.residuals["excluded_fraction"] < 0.01
    assert all(math.isfinite(stats.bilip[m]) for m in (1, 2, 3))


def test_failure_reports_address(penrose, monkeypatch):
    import startile.realize as R

    def boom(*a, **k):
        raise NumericError("flow left the annulus")

    monkeypatch.setattr(R, "tile_corrector", boom)
    with pytest.raises(NumericError, match=r"address \["):
        build_phi_m(penrose, 0, 1, working_level=2)


# -- verification helpers ------------------------------------------------------------------------


def test_verify_identity(rng):
    pts = rng.random((200, 2))
    res = verify_jacobian(PlaneMap.identity(), 1.0, pts)
    assert res["max"] <= 1e-9


def test_verify_star_to_star(rng):
    a = StarPolygon(np.array([[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2.0]]), (0.5, 0.5))
    h = math.sqrt(3.0) / 2
    b = StarPolygon(np.array([[h, -h], [h, h], [-h, h], [-h, -h]]), (0.0, 0.0))
    x = rng.random((3000, 2)) * 2
    x = x[a.contains(x)][:1000]
    assert verify_jacobian(star_to_star(a, b), 1.0, x)["median"] <= 1e-3


def test_bilip_identity(rng):
    assert bilip_estimate(PlaneMap.identity(), 2000, rng).lower == pytest.approx(1.0, abs=1e-12)


def test_bilip_linear(rng):
    m = PlaneMap([LinearLayer(np.diag([2.0, 0.5]))])
    assert bilip_estimate(m, 10_000, rng).lower == pytest.approx(2.0, abs=1e-6)


def test_bilip_chair(chair, rng):
    rm = build_phi_m(chair, 0, 2, working_level=3)
    pts, _ = sample_working_region(rm.hierarchy, 2000, rng)
    assert bilip_estimate(rm.map, 2000, rng, points=pts).lower == pytest.approx(1.0, abs=1e-4)


# -- convergence report -----------------------------------------------------------------------------


def test_convergence_chair(chair):
    st_ = convergence_report(chair, 8)
    assert st_.E_values == [1.0] * 8 and st_.epsilon is None and st_.partial_products[-1] == 1.0


def test_convergence_squares(squares):
    assert convergence_report(squares, 8).E_values == [1.0] * 8


def test_convergence_penrose(penrose):
    st_ = convergence_report(penrose, 12)
    assert st_.epsilon == pytest.approx(PHI ** -4, rel=0.10)
    assert all(E >= 1 for E in st_.E_values)
    assert all(b >= a for a, b in zip(st_.partial_products, st_.partial_products[1:]))


def test_config_threads_env(monkeypatch):
    monkeypatch.setenv("TILE_THREADS", "3")
    assert Config().threads == 3
