import re
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from urbancool.geometry import (
    GeometryConfig, GeometryError, TriangleMesh, assemble, assign_ids, box_mesh, build_index,
    clean_mesh, enclosed_volume, generate_ground_plane, load_stl, make_building,
    rasterize_footprints, render_index_map, write_building_index, write_stl_ascii,
    write_stl_binary,
)


def soup(mesh):
    """Unwelded copy: three private vertices per triangle."""
    v = mesh.vertices[mesh.triangles].reshape(-1, 3)
    return TriangleMesh(v, np.arange(len(v)).reshape(-1, 3))


def test_ascii_unit_cube(tmp_path, unit_cube):
    write_stl_ascii(unit_cube, tmp_path / "c.stl")
    m = load_stl(tmp_path / "c.stl")
    assert m.n_triangles == 12
    lo, hi = m.bbox()
    np.testing.assert_array_equal(lo, [0, 0, 0])
    np.testing.assert_array_equal(hi, [1, 1, 1])


def test_binary_facet_count_mismatch(tmp_path, unit_cube):
    p = tmp_path / "c.stl"
    write_stl_binary(unit_cube, p)
    data = p.read_bytes()
    p.write_bytes(data[: 84 + 50 * 10])
    with pytest.raises(GeometryError, match="facet count mismatch"):
        load_stl(p)


def test_truncated_header(tmp_path):
    p = tmp_path / "t.stl"
    p.write_bytes(b"\x00" * 40)
    with pytest.raises(GeometryError, match="truncated"):
        load_stl(p)


def test_non_finite_binary_names_offset(tmp_path, unit_cube):
    p = tmp_path / "c.stl"
    write_stl_binary(unit_cube, p)
    data = bytearray(p.read_bytes())
    struct.pack_into("<f", data, 84 + 50 * 3 + 12, float("nan"))
    p.write_bytes(bytes(data))
    with pytest.raises(GeometryError, match="byte"):
        load_stl(p)


def test_non_finite_ascii_names_line(tmp_path, unit_cube):
    p = tmp_path / "c.stl"
    write_stl_ascii(unit_cube, p)
    text = p.read_text().replace("vertex 1", "vertex nan", 1)
    p.write_text(text)
    with pytest.raises(GeometryError, match="line"):
        load_stl(p)


def test_scaled_cube_volume(tmp_path):
    write_stl_binary(box_mesh(0, 0, 0, 2, 2, 2), tmp_path / "c.stl")
    m = clean_mesh(load_stl(tmp_path / "c.stl"))
    vol, approx = enclosed_volume(m)
    assert vol == pytest.approx(8.0, rel=1e-12)
    assert not approx


def test_weld_soup_cube(unit_cube):
    s = soup(unit_cube)
    assert len(s.vertices) == 36
    c = clean_mesh(s)
    assert len(c.vertices) == 8
    assert c.n_triangles == 12
    assert c.cleaning["vertices_merged"] == 28


def test_zero_area_triangle_removed(unit_cube):
    v = np.vstack([unit_cube.vertices, [[5, 5, 5], [6, 6, 6], [7, 7, 7]]])
    t = np.vstack([unit_cube.triangles, [[8, 9, 10]]])
    c = clean_mesh(TriangleMesh(v, t))
    assert c.n_triangles == 12
    assert c.cleaning["degenerate_removed"] == 1


def test_duplicate_triangle_removed(unit_cube):
    t = np.vstack([unit_cube.triangles, unit_cube.triangles[:1, ::-1]])
    c = clean_mesh(TriangleMesh(unit_cube.vertices, t))
    assert c.n_triangles == 12
    assert c.cleaning["duplicates_removed"] == 1


def test_all_degenerate_errors():
    v = np.array([[0, 0, 0], [1, 1, 1], [2, 2, 2]], dtype=float)
    with pytest.raises(GeometryError, match="degenerate after cleaning"):
        clean_mesh(TriangleMesh(v, np.array([[0, 1, 2]])))


def test_build_index_two_cubes(stl_dir):
    bset = build_index(stl_dir)
    assert bset.ids == ["b001", "b002"]
    assert [b.height for b in bset] == [1.0, 1.0]
    assert bset.combined_mesh.n_triangles == 24


def test_id_collisions():
    assert assign_ids(["Tower", "tower", "TOWER"]) == ["tower", "tower_1", "tower_2"]
    assert assign_ids(["a-b c"]) == ["a_b_c"]
    assert assign_ids(["x", "y"], mode="order") == ["b001", "b002"]


def test_build_index_collision_files(tmp_path):
    d = tmp_path / "g"
    d.mkdir()
    write_stl_binary(box_mesh(0, 0, 0, 1, 1, 1), d / "Tower.stl")
    write_stl_binary(box_mesh(5, 0, 0, 6, 1, 1), d / "tower.stl")
    assert build_index(d).ids == ["tower", "tower_1"]


def test_prism_statistics():
    b = make_building("b1", box_mesh(0, 0, 0, 20, 20, 30))
    assert b.height == 30.0
    assert b.footprint_area == pytest.approx(400.0)
    assert b.volume == pytest.approx(12000.0, rel=1e-12)
    assert b.envelope_area == pytest.approx(2800.0)
    assert b.envelope_area >= b.footprint_area


def test_inward_winding_is_fixed():
    m = box_mesh(0, 0, 0, 10, 10, 10)
    flipped = TriangleMesh(m.vertices, m.triangles[:, ::-1].copy())
    b = make_building("b", flipped)
    assert b.volume == pytest.approx(1000.0)
    assert b.envelope_area == pytest.approx(500.0)


def test_open_mesh_volume_flagged():
    m = box_mesh(0, 0, 0, 1, 1, 1)
    open_mesh = TriangleMesh(m.vertices, m.triangles[2:])
    _, approx = enclosed_volume(open_mesh)
    assert approx


def test_empty_directory(tmp_path):
    with pytest.raises(GeometryError, match="no STL"):
        build_index(tmp_path)


def test_bad_file_aborts_or_is_skipped(stl_dir):
    (stl_dir / "broken.stl").write_bytes(b"\x00" * 90)
    with pytest.raises(GeometryError, match="broken.stl"):
        build_index(stl_dir)
    bset = build_index(stl_dir, GeometryConfig(permissive=True))
    assert bset.ids == ["b001", "b002"]
    assert len(bset.load_errors) == 1


def test_auto_shift(tmp_path):
    d = tmp_path / "g"
    d.mkdir()
    write_stl_binary(box_mesh(0, 0, 5, 1, 1, 8), d / "a.stl")
    b = build_index(d).buildings[0]
    assert b.mesh.vertices[:, 2].min() == 0.0
    assert b.height == 3.0


def test_ground_plane_buffer():
    bset = assemble([make_building("a", box_mesh(0, 0, 0, 10, 1000, 5)),
                     make_building("b", box_mesh(990, 0, 0, 1000, 1000, 5))])
    g = generate_ground_plane(bset, 1.2, cell_size=50.0)
    lo, hi = g.bbox()
    assert lo[0] == pytest.approx(-100.0) and hi[0] == pytest.approx(1100.0)
    assert lo[2] == hi[2] == 0.0
    g1 = generate_ground_plane(bset, 1.0, cell_size=50.0)
    lo, hi = g1.bbox()
    np.testing.assert_allclose([lo[0], lo[1], hi[0], hi[1]], [0, 0, 1000, 1000])
    assert g1.n_triangles == 2 * 20 * 20


def test_ground_plane_degenerate():
    m = box_mesh(0, 0, 0, 1, 1, 1)
    bset = assemble([make_building("a", m)])
    with pytest.raises(GeometryError, match="buffer_factor"):
        generate_ground_plane(bset, 0.5)
    thin = TriangleMesh(np.array([[0, 0, 0], [1e-3, 0, 0], [0, 1e-3, 1.0]]), np.array([[0, 1, 2]]))
    from urbancool.geometry import buffered_extents
    with pytest.raises(GeometryError, match="degenerate plan extents"):
        buffered_extents((5.0, 5.0, 5.0, 5.0), 1.2)
    assert thin.n_triangles == 1


def test_rasterize_block():
    bset = assemble([make_building("a", box_mesh(100, 100, 0, 120, 120, 30))],
                    GeometryConfig(domain_bbox=(0, 0, 200, 200)))
    mask = rasterize_footprints(bset, 2.0, 2.0)
    assert (mask.nx, mask.ny) == (100, 100)
    assert mask.cells.sum() == 100
    rows, cols = np.nonzero(mask.cells)
    assert (rows.min(), rows.max(), cols.min(), cols.max()) == (50, 59, 50, 59)
    assert not rasterize_footprints(bset, 2.0, 50.0).cells.any()


def test_rasterize_empty_set():
    from urbancool.geometry import BuildingSet, concatenate
    empty = BuildingSet((), concatenate([]), None, (0, 0, 10, 10))
    assert not rasterize_footprints(empty, 2.0, 2.0, extents=(0, 0, 10, 10)).cells.any()


def test_rasterize_monotone_in_height():
    bset = assemble([make_building("lo", box_mesh(10, 10, 0, 30, 30, 12)),
                     make_building("hi", box_mesh(50, 10, 0, 60, 40, 40))],
                    GeometryConfig(domain_bbox=(0, 0, 80, 60)))
    prev = None
    for h in [2, 10, 12, 20, 40, 41]:
        cells = rasterize_footprints(bset, 2.0, h).cells
        if prev is not None:
            assert not (cells & ~prev).any()
        prev = cells


def test_index_map_counts(tmp_path, stl_dir):
    bset = build_index(stl_dir)
    svg = render_index_map(bset, tmp_path / "map.svg").read_text()
    assert svg.count("<polygon") == 2
    assert re.findall(r"<text[^>]*>([^<]*)</text>", svg) == ["b001", "b002"]


def test_index_map_l_shape_centroid(tmp_path):
    v = np.array([[0, 0], [20, 0], [20, 5], [5, 5], [5, 20], [0, 20]], dtype=float)
    import shapely
    from urbancool.geometry import make_building as mk
    # extrude the L outline as two boxes
    m1 = box_mesh(0, 0, 0, 20, 5, 10)
    m2 = box_mesh(0, 5, 0, 5, 20, 10)
    from urbancool.geometry import concatenate
    b = mk("l", clean_mesh(concatenate([m1, m2])))
    poly = shapely.Polygon(v)
    assert b.footprint.area == pytest.approx(poly.area)
    cx, cy = b.centroid_xy
    assert (cx, cy) == pytest.approx((poly.centroid.x, poly.centroid.y))
    svg = render_index_map(assemble([b]), tmp_path / "l.svg").read_text()
    assert f'x="{cx:.3f}"' in svg


def test_index_map_district_scale(tmp_path):
    blds = [make_building(f"b{i * 10 + j + 1:03d}", box_mesh(i * 50, j * 50, 0, i * 50 + 30, j * 50 + 30, 20 + i))
            for i in range(9) for j in range(10)]
    svg = render_index_map(assemble(blds), tmp_path / "d.svg").read_text()
    assert svg.count("<polygon") == 90
    assert svg.count("<text") == 90


def test_building_index_json(tmp_path, stl_dir):
    import json
    bset = build_index(stl_dir)
    recs = json.loads(write_building_index(bset, tmp_path / "i.json").read_text())
    assert recs[0]["id"] == "b001"
    assert set(recs[0]) == {"id", "file", "bbox_xy", "height_m", "footprint_area_m2", "volume_m3",
                            "envelope_area_m2"}


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 50), st.floats(0.1, 50), st.floats(0.1, 50))
def test_box_volume_exact(w, d, h):
    vol, approx = enclosed_volume(box_mesh(0, 0, 0, w, d, h))
    assert vol == pytest.approx(w * d * h, rel=1e-9)
    assert not approx


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_clean_idempotent(seed):
    rng = np.random.default_rng(seed)
    base = soup(box_mesh(0, 0, 0, 3, 2, 1))
    extra = rng.integers(0, len(base.vertices), size=(5, 3))
    m = TriangleMesh(base.vertices, np.vstack([base.triangles, extra]))
    once = clean_mesh(m)
    twice = clean_mesh(once)
    assert len(twice.vertices) == len(once.vertices)
    assert twice.n_triangles == once.n_triangles


@settings(max_examples=20, deadline=None)
@given(st.floats(-500, 500), st.floats(-500, 500))
def test_translation_invariance(dx, dy):
    m = box_mesh(0, 0, 0, 12, 7, 9)
    a = make_building("a", m)
    b = make_building("a", m.translated((dx, dy, 0.0)))
    np.testing.assert_allclose(np.array(b.bbox_xy) - np.array(a.bbox_xy), [dx, dy, dx, dy], atol=1e-9)
    np.testing.assert_allclose(np.array(b.centroid_xy) - np.array(a.centroid_xy), [dx, dy], atol=1e-9)
    assert b.height == a.height
    assert b.footprint_area == pytest.approx(a.footprint_area)
    assert b.volume == pytest.approx(a.volume)
    assert b.envelope_area == pytest.approx(a.envelope_area)
