import json
import math

import numpy as np
import pytest

from urbancool import outputs
from urbancool.geometry import Grid2D, box_mesh


def read_sections(path):
    """Tiny legacy-VTK reader: header lines plus {array name: values}."""
    lines = path.read_text().splitlines()
    arrays, i = {}, 0
    while i < len(lines):
        parts = lines[i].split()
        if parts and parts[0] == "SCALARS":
            name = parts[1]
            i += 2
            vals = []
            while i < len(lines) and lines[i] and lines[i][0] in "-0123456789":
                vals.append(float(lines[i]))
                i += 1
            arrays[name] = np.array(vals)
            continue
        i += 1
    return lines, arrays


def test_structured_points_layout(tmp_path):
    grid = Grid2D((10.0, 20.0), 2.0, 3, 2)
    a = np.arange(6.0).reshape(2, 3)
    fg = outputs.FieldGrid.from_grid(grid, 2.0, pet_c=a)
    fg.vectors["velocity"] = (np.ones((2, 3)), np.zeros((2, 3)))
    path = outputs.write_vtk_structured(fg, tmp_path / "f" / "pet.vtk", "demo")
    lines, arrays = read_sections(path)
    assert lines[:5] == ["# vtk DataFile Version 3.0", "demo", "ASCII", "DATASET STRUCTURED_POINTS",
                         "DIMENSIONS 3 2 1"]
    assert [float(v) for v in lines[5].split()[1:]] == [11.0, 21.0, 2.0]    # cell centres
    assert "POINT_DATA 6" in lines
    np.testing.assert_array_equal(arrays["pet_c"], a.ravel())             # x fastest
    assert "VECTORS velocity double" in lines


def test_structured_fill_value(tmp_path):
    grid = Grid2D((0.0, 0.0), 1.0, 2, 1)
    fg = outputs.FieldGrid.from_grid(grid, 0.0, mrt_c=np.array([[np.nan, 31.5]]))
    _, arrays = read_sections(outputs.write_vtk_structured(fg, tmp_path / "m.vtk"))
    np.testing.assert_array_equal(arrays["mrt_c"], [outputs.FILL_VALUE, 31.5])


def test_field_grid_validation():
    with pytest.raises(outputs.OutputError):
        outputs.FieldGrid((0, 0, 0), (1, 1), 2, 2, {"a": np.zeros(3)})


def test_polydata_roundtrip(tmp_path):
    mesh = box_mesh(0, 0, 0, 2, 3, 4)
    corners = mesh.corners
    temps = np.linspace(290, 310, len(corners))
    path = outputs.write_vtk_polydata(corners, {"T_surf_K": temps}, tmp_path / "s.vtk",
                                      int_arrays={"building_id": np.zeros(len(corners), int)})
    lines, arrays = read_sections(path)
    assert lines[3] == "DATASET POLYDATA"
    assert lines[4] == "POINTS 8 double"          # corners welded
    assert f"POLYGONS {len(corners)} {4 * len(corners)}" in lines
    np.testing.assert_allclose(arrays["T_surf_K"], temps, rtol=1e-6)
    assert np.all(arrays["building_id"] == 0)


def test_polydata_length_mismatch(tmp_path):
    with pytest.raises(outputs.OutputError):
        outputs.write_vtk_polydata(box_mesh(0, 0, 0, 1, 1, 1).corners, {"a": [1.0]}, tmp_path / "x.vtk")


def test_weld_shares_points():
    pts, tri = outputs.weld(box_mesh(0, 0, 0, 1, 1, 1).corners)
    assert len(pts) == 8 and tri.shape == (12, 3)


def test_vtk_bytes_stable(tmp_path):
    grid = Grid2D((0.0, 0.0), 2.0, 4, 4)
    fg = outputs.FieldGrid.from_grid(grid, 2.0, svf=np.random.default_rng(0).random((4, 4)))
    a = outputs.write_vtk_structured(fg, tmp_path / "a.vtk").read_bytes()
    b = outputs.write_vtk_structured(fg, tmp_path / "b.vtk").read_bytes()
    assert a == b


def test_json_cleaning():
    text = outputs.dumps_json({"b": np.float64(1.23456789), "a": [math.nan, np.int64(3), True], "c": -0.0})
    data = json.loads(text)
    assert list(data) == ["a", "b", "c"]
    assert data == {"a": [None, 3, True], "b": 1.234568, "c": 0.0}
    assert text.endswith("\n")


def test_write_metrics_adds_schema(tmp_path):
    path = outputs.write_metrics({"x": 1}, tmp_path / "metrics.json")
    assert json.loads(path.read_text()) == {"schema_version": outputs.SCHEMA_VERSION, "x": 1}


def test_figures_are_png(tmp_path):
    from urbancool.comfort import Hotspot

    grid = Grid2D((0.0, 0.0), 2.0, 5, 4)
    pet = np.full((4, 5), 35.0)
    pet[0, 0] = np.nan
    p = outputs.plot_pet_map(grid, pet, 13, [Hotspot(3.0, 3.0, 13, 35.0, 50.0)], tmp_path / "fig" / "pet.png")
    e = outputs.plot_eui(["b1", "b2"], [0.5, 0.4], tmp_path / "fig" / "eui.png", after=[0.45, 0.38])
    for path in (p, e):
        assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
