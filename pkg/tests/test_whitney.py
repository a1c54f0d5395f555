import math
from collections import Counter

import numpy as np
import pytest

from hardylab.grids import DomainSpec, rasterize
from hardylab.whitney import (decompose, check_decomposition,
                              intersection_cutoff, packing_constant,
                              summation_lemma_ratio, WhitneyError, to_svg)


@pytest.fixture(scope="module")
def halfspace7():
    return decompose(rasterize(DomainSpec(kind="halfspace", dim=2, level=7)))


@pytest.fixture(scope="module")
def frame7():
    # unit square minus its boundary frame: inside = all but the outer ring
    n = 2**7
    inside = np.zeros((n, n), dtype=bool)
    inside[1:-1, 1:-1] = True
    from hardylab.grids import GridDomain, distance_transform
    dom = distance_transform(GridDomain(dim=2, level=7, inside=inside))
    return decompose(dom)


def test_frame_domain_conditions(frame7):
    res = check_decomposition(frame7)
    assert res["cover_exact"]
    assert res["lower_bound_ok"] and res["upper_bound_ok"]
    assert res["ratio_ok"]


def test_halfspace_banded_levels(halfspace7):
    dec = halfspace7
    # central strip, away from the left/right; cubes at a fixed height share
    # a level, and the level drops by one when the height doubles
    by_height = {}
    for i in range(dec.n_cubes):
        side = dec.side(i)
        x0 = dec.coords[i][0] * side
        y0 = dec.coords[i][1] * side - 0.5
        if not (0.25 <= x0 <= 0.7):
            continue
        by_height.setdefault(round(y0, 6), set()).add(int(dec.levels[i]))
    for height, levels in by_height.items():
        assert len(levels) == 1, (height, levels)
    # each level occupies one height band, and band starts double as the
    # level coarsens by one
    band_start = {}
    for i in range(dec.n_cubes):
        side = dec.side(i)
        x0 = dec.coords[i][0] * side
        y0 = dec.coords[i][1] * side - 0.5
        if not (0.25 <= x0 <= 0.7):
            continue
        k = int(dec.levels[i])
        band_start[k] = min(band_start.get(k, 10.0), y0)
    ks = sorted(band_start, reverse=True)
    ratios = []
    for fine, coarse in zip(ks, ks[1:]):
        assert coarse == fine - 1
        if band_start[fine] == 0.0:
            continue  # the boundary-skin band
        ratios.append(band_start[coarse] / band_start[fine])
    # dyadic band starts: doubling per level, with at most one merged
    # transition from the acceptance slack
    assert all(1.9 <= r <= 4.1 for r in ratios), ratios
    assert sum(1 for r in ratios if r <= 2.1) >= len(ratios) - 1


def test_lshape_cover_is_exact_cellwise():
    dom = rasterize(DomainSpec(kind="lshape", dim=2, level=8))
    dec = decompose(dom)
    covered = dec.owner >= 0
    assert np.array_equal(covered, dom.inside)


def test_intersection_cutoff_values():
    assert intersection_cutoff(1) == 5.0
    assert intersection_cutoff(4) == 10.0
    with pytest.raises(ValueError):
        intersection_cutoff(0)


def test_neighbor_pairs_respect_cutoff(halfspace7):
    dec = halfspace7
    cutoff = intersection_cutoff(2)
    for i in range(dec.n_cubes):
        for j in dec.neighbors(i):
            assert dec.diam(int(j)) / dec.diam(i) <= cutoff + 1e-12


def test_packing_constant_enumeration():
    # one dimension by hand: unit cells meeting [-12.5, 12.5]
    assert packing_constant(1) == 26
    assert packing_constant(2) > packing_constant(1)
    assert packing_constant(3) > packing_constant(2)


def test_summation_zero_function(halfspace7):
    dom = halfspace7.domain
    lhs, rhs = summation_lemma_ratio(halfspace7, np.zeros(dom.shape), 1.0)
    assert lhs == 0.0 and rhs == 0.0


def test_summation_band_oracle(halfspace7):
    # f = 1 on a band: recompute the lhs by a direct per-cube double sum
    dec = halfspace7
    dom = dec.domain
    _, ys = dom.center_grid()
    f = ((ys > 0.6) & (ys < 0.8)).astype(float) * dom.inside
    s = 1.0
    lhs, rhs = summation_lemma_ratio(dec, f, s)
    hN = dom.h**2
    oracle = 0.0
    g = f * np.where(dom.inside, dom.distance, 0.0) ** s
    for i in range(dec.n_cubes):
        block = g[dec.rq_slice(i)]
        oracle += dec.diam(i) ** (-s) * float(block.sum()) * hN
    assert lhs == pytest.approx(oracle, rel=1e-12)
    assert lhs <= rhs


def test_summation_random_nonnegative(halfspace7):
    rng = np.random.default_rng(7)
    dom = halfspace7.domain
    for _ in range(5):
        f = rng.random(dom.shape) * dom.inside
        for s in (0.25, 0.5, 1.0, 2.0):
            lhs, rhs = summation_lemma_ratio(halfspace7, f, s)
            assert lhs <= rhs


def test_summation_small_s_growth(halfspace7):
    dom = halfspace7.domain
    rng = np.random.default_rng(3)
    f = (rng.random(dom.shape) + 0.5) * dom.inside
    l8, _ = summation_lemma_ratio(halfspace7, f, 0.125)
    l4, _ = summation_lemma_ratio(halfspace7, f, 0.25)
    assert l8 / l4 <= 2.5


def test_summation_rejections(halfspace7):
    dom = halfspace7.domain
    f = np.ones(dom.shape) * dom.inside
    with pytest.raises(ValueError):
        summation_lemma_ratio(halfspace7, f, 0.0)
    with pytest.raises(ValueError):
        summation_lemma_ratio(halfspace7, -f, 1.0)
    with pytest.raises(ValueError):
        summation_lemma_ratio(halfspace7, np.ones(dom.shape), 1.0)


def test_enlarged_cube_geometry(halfspace7):
    dec = halfspace7
    dom = dec.domain
    h = dom.h
    for i in range(0, dec.n_cubes, 7):
        side_q = dec.side(i)
        lo_q = dec.coords[i] * side_q
        hi_q = lo_q + side_q
        c = dec.rq_center[i]
        s = dec.rq_side[i]
        assert (c - s / 2 <= lo_q + 1e-12).all()
        assert (hi_q <= c + s / 2 + 1e-12).all()
        assert s <= 10 * dec.diam(i) + 2 * math.sqrt(2) * h + 1e-12
        # center is an outside cell center (possibly in the boundary ring)
        rel = c / h - 0.5
        assert np.allclose(rel, np.round(rel), atol=1e-9)


def test_rescale_map_roundtrip(halfspace7):
    dec = halfspace7
    rmap = dec.rescale_map(3)
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    for corner in corners:
        phys = rmap.from_unit(corner)
        assert np.allclose(rmap.to_unit(phys), corner, atol=1e-12)


def test_gs_percube_stable_under_refinement():
    # one extra dyadic level changes per-cube values only within the
    # rasterization tolerance, and the argmax family stays at the same level
    from hardylab.dimension import g_s
    dec7 = decompose(rasterize(DomainSpec(kind="halfspace", dim=2, level=7)))
    dec8 = decompose(rasterize(DomainSpec(kind="halfspace", dim=2, level=8)))
    _, t7 = g_s(dec7, 0.5)
    _, t8 = g_s(dec8, 0.5)
    t7d, t8d = dict(t7), dict(t8)
    # compare weight-resolved levels only (cubes of at least 4 cells on the
    # coarser raster); finer levels are boundary skin with clamped weights
    shared = [k for k in sorted(set(t7d) & set(t8d)) if k <= 7 - 2]
    assert len(shared) >= 3
    for k in shared:
        assert t8d[k] == pytest.approx(t7d[k], rel=0.15)
    arg7 = max(t7d, key=lambda k: t7d[k])
    arg8 = max(t8d, key=lambda k: t8d[k])
    assert abs(arg7 - arg8) <= 1


def test_degenerate_raster_fails():
    from hardylab.grids import GridDomain, distance_transform
    inside = np.zeros((16, 16), dtype=bool)
    dom = distance_transform(GridDomain(dim=2, level=4, inside=inside))
    with pytest.raises(WhitneyError):
        decompose(dom)


def test_svg_export(tmp_path, halfspace7):
    path = tmp_path / "dec.svg"
    to_svg(halfspace7, path, show_enlarged=True)
    text = path.read_text()
    assert text.startswith("<svg") and "rect" in text
