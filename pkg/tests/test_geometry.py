import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fencesim.geometry import (
    CoverageShape,
    FieldSpec,
    PirSpec,
    blind_area_fraction,
    build_layout,
    build_position_map,
    covering_sensors,
    reflect_layout,
)

FIELD = FieldSpec(25.0, 25.0)
PIR = PirSpec(7.0, 5.0)
SPACING = {"A": 5.0, "B": 2.5, "C": 5.0}


@pytest.fixture(scope="module")
def layouts():
    return {k: build_layout(FIELD, PIR, k, s) for k, s in SPACING.items()}


@pytest.fixture(scope="module")
def maps(layouts):
    return {k: build_position_map(lay) for k, lay in layouts.items()}


def test_field_frames_round_trip():
    for side in FIELD.sides:
        p = FIELD.to_field(side, 3.0, 1.5)
        along, depth = FIELD.to_side(side, p)
        assert along == pytest.approx(3.0)
        assert depth == pytest.approx(1.5)
        assert FIELD.nearest_side(p) == side or depth > 3.0


def test_side_a_is_bottom_edge():
    assert FIELD.to_field("A", 4.0, 2.0) == (4.0, -2.0)
    assert FIELD.outward_normal("A") == (0.0, -1.0)


@pytest.mark.parametrize("kind,per_side", [("A", 10), ("B", 10), ("C", 10)])
def test_sensor_counts_25m_field(layouts, kind, per_side):
    lay = layouts[kind]
    for side in FIELD.sides:
        assert len(lay.on_side(side)) == per_side
    assert len(set(lay.sensor_ids)) == len(lay.sensors)


@settings(max_examples=60, deadline=None)
@given(
    w=st.floats(6.0, 80.0),
    h=st.floats(6.0, 80.0),
    kind=st.sampled_from("ABC"),
    spacing=st.floats(2.0, 6.0),
)
def test_counts_follow_floor_rule(w, h, kind, spacing):
    f = FieldSpec(w, h)
    rows = 1 if kind == "B" else 2
    n = {s: math.floor(f.side_length(s) / spacing + 1e-9) for s in f.sides}
    limit = 32 if kind == "B" else 16
    if max(n.values()) > limit:
        with pytest.raises(ValueError):
            build_layout(f, PIR, kind, spacing)
        return
    lay = build_layout(f, PIR, kind, spacing)
    for side in f.sides:
        assert len(lay.on_side(side)) == rows * n[side]


def test_layout_a_adjacent_disks_touch(layouts):
    row0 = [s for s in layouts["A"].on_side("A") if s.pose.index < 5]
    for a, b in zip(row0, row0[1:]):
        d = math.dist(a.shape.origin, b.shape.origin)
        assert d == pytest.approx(PIR.base_diameter)


def test_layout_a_rows_straddle_boundary(layouts):
    depths = sorted({FIELD.to_side("A", s.shape.origin)[1] for s in layouts["A"].on_side("A")})
    assert depths == pytest.approx([-1.25, 1.25])


def test_triangles_point_outward(layouts):
    for s in layouts["B"].sensors:
        assert s.shape.direction == FIELD.outward_normal(s.pose.side)
        assert s.shape.reach == 7.0 and s.shape.size == 5.0


def test_spacing_gap_limit():
    with pytest.raises(ValueError, match="between adjacent footprints"):
        build_layout(FIELD, PIR, "B", 8.0)
    # a looser limit lets it through
    build_layout(FIELD, PIR, "B", 8.0, max_gap=3.0)


def test_bad_inputs():
    with pytest.raises(ValueError):
        build_layout(FIELD, PIR, "Z", 5.0)
    with pytest.raises(ValueError):
        build_layout(FIELD, PIR, "A", 0.0)
    with pytest.raises(ValueError):
        build_layout(FieldSpec(3.0, 25.0), PIR, "B", 4.0)
    with pytest.raises(ValueError):
        build_position_map(build_layout(FIELD, PIR, "B", 2.5), resolution=2.0)


def test_triangle_containment():
    tri = CoverageShape.triangle((0.0, 0.0), (0.0, -1.0), 5.0, 7.0)
    assert tri.contains(0.0, -7.0)
    assert tri.contains(2.5, -7.0)
    assert tri.contains(1.25, -3.5)
    assert not tri.contains(1.3, -3.5)
    assert not tri.contains(0.0, 0.1)
    assert tri.centroid() == pytest.approx((0.0, -14.0 / 3.0))


def test_regions_partition_covered_cells(layouts, maps):
    for kind, pm in maps.items():
        lay = layouts[kind]
        gx, gy = pm.grid.centers()
        covered = lay.coverage_matrix(gx, gy).any(axis=1).reshape(gx.shape)
        assert np.array_equal(pm.labels >= 0, covered)
        counted = sum(r.size for r in pm.regions)
        assert counted == int(covered.sum())


def test_region_signatures_match_exact_cover(layouts, maps):
    rng = np.random.default_rng(3)
    for kind, pm in maps.items():
        lay = layouts[kind]
        for r in pm.regions:
            pick = r.cells[rng.integers(len(r.cells))]
            centre = pm.grid.center_of(*pick)
            assert covering_sensors(lay, centre) == r.signature


def test_representatives_lie_in_their_region(maps):
    for pm in maps.values():
        for r in pm.regions:
            ix, iy = pm.grid.cell_of(r.representative)
            assert pm.labels[ix, iy] == r.region_id


def test_layout_b_single_sensor_points(maps):
    pm = maps["B"]
    # interior sensors of side A: region between the two neighbours, halfway out
    for i in range(1, 9):
        x, y = pm.lookup([f"A{i}"])
        assert (x, y) == pytest.approx((2.5 * i, -3.5))


def test_single_sensor_depths_differ_by_layout(maps):
    ya = maps["A"].lookup(["A2"])[1]
    yc = maps["C"].lookup(["A7"])[1]  # triangle row of side A, index 5 + 2
    assert -2.5 < ya < 0
    assert yc < -3.5


def test_lookup_of_unrealised_signature_falls_back():
    pm = build_position_map(build_layout(FIELD, PIR, "B", 2.5))
    sig = ["A1", "A7"]  # never overlap
    assert frozenset(sig) not in pm
    a, b = pm.lookup(["A1"]), pm.lookup(["A7"])
    assert pm.lookup(sig) == pytest.approx(((a[0] + b[0]) / 2, (a[1] + b[1]) / 2))
    with pytest.raises(KeyError):
        pm.lookup([])


def test_mirror_equivariance(layouts, maps):
    for kind, lay in layouts.items():
        mirrored = build_position_map(reflect_layout(lay))
        got = sorted((round(x, 6), round(y, 6)) for x, y in (r.representative for r in mirrored.regions))
        want = sorted(
            (round(FIELD.width - x, 6), round(y, 6)) for x, y in (r.representative for r in maps[kind].regions)
        )
        assert len(got) == len(want)
        tol = maps[kind].resolution
        assert np.allclose(np.array(got), np.array(want), atol=tol) or _matched(got, want, tol)


def _matched(got, want, tol):
    pool = list(want)
    for p in got:
        hit = next((q for q in pool if abs(p[0] - q[0]) <= tol and abs(p[1] - q[1]) <= tol), None)
        if hit is None:
            return False
        pool.remove(hit)
    return True


def _sample(lay, n, seed):
    rng = np.random.default_rng(seed)
    x0, y0, x1, y1 = lay.bounds()
    return rng.uniform((x0, y0), (x1, y1), size=(n, 2))


@pytest.mark.parametrize("kind", "ABC")
def test_raster_disagrees_only_below_cell_size(layouts, maps, kind):
    lay, pm = layouts[kind], maps[kind]
    for p in _sample(lay, 3000, 11):
        p = tuple(p)
        raster = pm.signature_at(p)
        exact = covering_sensors(lay, p)
        if raster != exact:
            centre = pm.grid.center_of(*pm.grid.cell_of(p))
            # the cell's own label is exact; only the sub-cell offset differs
            assert covering_sensors(lay, centre) == raster
            assert max(abs(p[0] - centre[0]), abs(p[1] - centre[1])) <= pm.resolution / 2 + 1e-12


@pytest.mark.parametrize("kind", "ABC")
def test_raster_agreement_rate(layouts, kind):
    lay = layouts[kind]
    pts = _sample(lay, 4000, 5)
    fine = build_position_map(lay, 0.05)
    agree = np.mean([fine.signature_at(tuple(p)) == covering_sensors(lay, tuple(p)) for p in pts])
    assert agree >= 0.99
    coarse = build_position_map(lay, 0.25)
    agree = np.mean([coarse.signature_at(tuple(p)) == covering_sensors(lay, tuple(p)) for p in pts])
    assert agree >= 0.95


def test_blind_fraction_ordering(layouts):
    band = PIR.base_diameter / 2
    blind = {k: blind_area_fraction(lay, band) for k, lay in layouts.items()}
    assert blind["C"] > blind["A"]
    assert all(0.0 <= v <= 1.0 for v in blind.values())


def test_blind_fraction_rejects_bad_band(layouts):
    with pytest.raises(ValueError):
        blind_area_fraction(layouts["A"], 0.0)


def test_exports_are_plain_data(layouts, maps):
    d = layouts["C"].to_dict()
    assert d["kind"] == "C" and len(d["sensors"]) == 40
    assert {s["orientation"] for s in d["sensors"]} == {"vertical-down", "horizontal-outward"}
    csv_text = maps["B"].to_csv()
    assert csv_text.splitlines()[0] == "regionId,signature,x,y"
