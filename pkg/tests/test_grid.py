import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridsight.grid import (
    GridFileError,
    GridMap,
    GridSpec,
    SemanticClass,
    cell_center,
    cell_centers,
    colorize,
    read_grid,
    world_to_cell,
    world_to_cells,
    write_grid,
)
from gridsight.netpbm import write_pgm

DEFAULT = GridSpec()


def test_four_classes():
    assert [int(c) for c in SemanticClass] == [0, 1, 2, 3]


def test_spec_defaults_and_high_res():
    assert (DEFAULT.rows, DEFAULT.cols, DEFAULT.cell_size_m, DEFAULT.x_offset_m) == (64, 64, 0.5, 5.0)
    hr = GridSpec.high_res()
    assert hr.shape == (128, 128) and hr.cell_size_m == 0.25
    assert hr.width_m == DEFAULT.width_m == 32 and hr.depth_m == DEFAULT.depth_m == 32


@pytest.mark.parametrize("kw", [{"rows": 0}, {"cols": -1}, {"cell_size_m": 0.0}])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        GridSpec(**kw)


@pytest.mark.parametrize(
    "ij,xy", [((0, 0), (36.75, 15.75)), ((63, 32), (5.25, -0.25)), ((32, 31), (20.75, 0.25))]
)
def test_cell_center_examples(ij, xy):
    assert cell_center(DEFAULT, *ij) == pytest.approx(xy, abs=1e-12)


@pytest.mark.parametrize("ij", [(-1, 0), (64, 0), (0, 64)])
def test_cell_center_out_of_range(ij):
    with pytest.raises(IndexError):
        cell_center(DEFAULT, *ij)


@pytest.mark.parametrize(
    "xy,ij", [((5.0, 0.0), (63, 32)), ((20.25, -3.1), (33, 38)), ((37.0, 0.0), None)]
)
def test_world_to_cell_examples(xy, ij):
    assert world_to_cell(DEFAULT, *xy) == ij


def test_footprint_edges():
    assert world_to_cell(DEFAULT, 4.999999, 0) is None
    assert world_to_cell(DEFAULT, 36.999999, 0) == (0, 32)
    assert world_to_cell(DEFAULT, 10, 16.0) == (53, 0)       # upper y bound included
    assert world_to_cell(DEFAULT, 10, -16.0) is None         # lower y bound excluded
    assert world_to_cell(DEFAULT, 10, -15.999999) == (53, 63)


@pytest.mark.parametrize("spec", [DEFAULT, GridSpec.high_res()])
def test_round_trip_exhaustive(spec):
    for i in range(spec.rows):
        for j in range(spec.cols):
            assert world_to_cell(spec, *cell_center(spec, i, j)) == (i, j)


def test_vectorised_forms_agree():
    x, y = cell_centers(DEFAULT)
    assert (x[5, 7], y[5, 7]) == cell_center(DEFAULT, 5, 7)
    rng = np.random.default_rng(0)
    px, py = rng.uniform(0, 40, 500), rng.uniform(-20, 20, 500)
    i, j, ok = world_to_cells(DEFAULT, px, py)
    for k in range(500):
        ref = world_to_cell(DEFAULT, px[k], py[k])
        assert (ref is not None) == ok[k]
        if ref is not None:
            assert ref == (i[k], j[k])


def test_gridmap_validation():
    with pytest.raises(ValueError):
        GridMap(DEFAULT, np.full((64, 64), 4))
    with pytest.raises(ValueError):
        GridMap(DEFAULT, np.zeros((64, 63)))
    with pytest.raises(ValueError):
        GridMap(DEFAULT, np.zeros((64, 64)), np.ones((2, 2), bool))


def test_one_hot():
    g = GridMap(GridSpec(2, 2), [[0, 1], [2, 3]])
    oh = g.one_hot()
    assert oh.shape == (4, 2, 2) and oh.dtype == np.float32
    np.testing.assert_array_equal(oh.argmax(axis=0), g.classes)
    np.testing.assert_array_equal(oh.sum(axis=0), 1)


def test_file_round_trip_all_road(tmp_path):
    g = GridMap(DEFAULT, np.ones((64, 64), np.uint8))
    path = write_grid(g, tmp_path / "road.json")
    assert read_grid(path) == g
    meta = json.loads((tmp_path / "road.json").read_text())
    assert meta == {"rows": 64, "cols": 64, "cell_size_m": 0.5, "x_offset_m": 5.0, "mask_file": "road_mask.pgm"}


def test_file_round_trip_mixed_mask(tmp_path):
    rng = np.random.default_rng(1)
    g = GridMap(DEFAULT, rng.integers(0, 4, (64, 64)), rng.random((64, 64)) < 0.5)
    assert read_grid(write_grid(g, tmp_path / "m")) == g


@settings(max_examples=200, deadline=None)
@given(
    rows=st.integers(1, 12),
    cols=st.integers(1, 12),
    seed=st.integers(0, 2**32 - 1),
)
def test_file_round_trip_random(tmp_path_factory, rows, cols, seed):
    rng = np.random.default_rng(seed)
    spec = GridSpec(rows, cols, float(rng.uniform(0.1, 1.0)), float(rng.uniform(0, 10)))
    g = GridMap(spec, rng.integers(0, 4, (rows, cols)), rng.random((rows, cols)) < 0.5)
    d = tmp_path_factory.mktemp("g")
    assert read_grid(write_grid(g, d / "x.json")) == g


def test_bad_class_value(tmp_path):
    write_grid(GridMap(DEFAULT, np.zeros((64, 64))), tmp_path / "bad.json")
    img = np.zeros((64, 64), np.uint8)
    img[3, 3] = 7
    write_pgm(tmp_path / "bad.pgm", img)
    with pytest.raises(GridFileError):
        read_grid(tmp_path / "bad.json")


def test_dimension_mismatch(tmp_path):
    write_grid(GridMap(DEFAULT, np.zeros((64, 64))), tmp_path / "d.json")
    write_pgm(tmp_path / "d.pgm", np.zeros((32, 64), np.uint8))
    with pytest.raises(GridFileError):
        read_grid(tmp_path / "d.json")


def test_malformed_metadata(tmp_path):
    write_grid(GridMap(DEFAULT, np.zeros((64, 64))), tmp_path / "h.json")
    (tmp_path / "h.json").write_text('{"rows": 64}')
    with pytest.raises(GridFileError):
        read_grid(tmp_path / "h.json")


def test_colorize_palette_and_mask():
    mask = np.array([[True, True, True, False]])
    rgb = colorize(GridMap(GridSpec(1, 4), [[0, 1, 2, 3]], mask))
    assert rgb[0, :3].tolist() == [[0, 0, 0], [128, 64, 128], [244, 35, 232]]
    assert rgb[0, 3].tolist() == [76, 125, 76]
