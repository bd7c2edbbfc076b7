import json
import math

import numpy as np
import pytest

from qfreg import DataFormatError, GaussianQuantile, InputOutputError, density, io, fit


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_bundled_lung_table(lung_data):
    assert lung_data.n == 44
    assert lung_data.ids[0] == "1" and lung_data.ids[-1] == "44"
    assert all(q.sigma > 0 for q in lung_data.x + lung_data.y)


def test_param_table_round_trip_is_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    mx, my = rng.normal(-700, 100, 7), rng.normal(-700, 100, 7)
    sx, sy = rng.uniform(1, 300, 7), rng.uniform(1, 300, 7)
    x = [GaussianQuantile(a, b) for a, b in zip(mx, sx)]
    y = [GaussianQuantile(a, b) for a, b in zip(my, sy)]
    ids = [f"s{i}" for i in range(7)]
    p = tmp_path / "params.csv"
    io.write_param_table(p, ids, x, y)
    back = io.read_param_table(p)
    assert back.ids == tuple(ids)
    np.testing.assert_array_equal(back.arrays()[0], mx)
    np.testing.assert_array_equal(back.arrays()[1], sx)
    np.testing.assert_array_equal(back.arrays()[2], my)
    np.testing.assert_array_equal(back.arrays()[3], sy)


@pytest.mark.parametrize("text,where", [
    ("id,mu_x,sigma_x,mu_y\n1,2,3,4\n", "row 1"),
    ("id,mu_x,sigma_x,mu_y,sigma_y\n1,2,3,4\n", "row 2: expected 5 fields"),
    ("id,mu_x,sigma_x,mu_y,sigma_y\n1,2,3,4,5\n2,2,abc,4,5\n", "row 3, column 3"),
    ("id,mu_x,sigma_x,mu_y,sigma_y\n1,2,3,4,-5\n", "row 2, column 5"),
    ("id,mu_x,sigma_x,mu_y,sigma_y\n1,nan,3,4,5\n", "row 2, column 2"),
    ("id,mu_x,sigma_x,mu_y,sigma_y\n1,2,3,4,5\n1,2,3,4,5\n", "duplicate"),
    ("", "empty"),
])
def test_param_table_errors_name_the_location(tmp_path, text, where):
    with pytest.raises(DataFormatError, match=where):
        io.read_param_table(write(tmp_path, "p.csv", text))


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(InputOutputError) as exc:
        io.read_param_table(tmp_path / "nope.csv")
    assert exc.value.exit_code == 4


def test_count_table_reading(tmp_path):
    p = write(tmp_path, "c.csv", "hu,a,b\n-900,0,2\n-850,3,0\n-800,1,1\n\n")
    tables = io.read_count_table(p)
    assert list(tables) == ["a", "b"]
    assert tables["a"].values == (-850.0, -800.0) and tables["a"].counts == (3, 1)
    assert tables["b"].values == (-900.0, -800.0) and tables["b"].counts == (2, 1)


@pytest.mark.parametrize("text,where", [
    ("hu\n-900\n", "row 1"),
    ("hu,a,a\n-900,1,1\n", "duplicate"),
    ("hu,a\n-900,1\n-950,1\n", "row 3, column 1"),
    ("hu,a\n-900,1.5\n", "row 2, column 2"),
    ("hu,a\n-900,-1\n", "row 2, column 2"),
    ("hu,a,b\n-900,1\n", "row 2: expected 3"),
    ("hu,a,b\n-900,1,0\n", "column 3 \\(b\\)"),
    ("hu,a\n", "no data rows"),
])
def test_count_table_errors_name_the_location(tmp_path, text, where):
    with pytest.raises(DataFormatError, match=where):
        io.read_count_table(write(tmp_path, "c.csv", text))


def test_count_table_hu_validation(tmp_path):
    p = write(tmp_path, "c.csv", "hu,a\n-1100,1\n-900,1\n")
    assert io.read_count_table(p)["a"].total == 2
    with pytest.raises(DataFormatError, match="column 2"):
        io.read_count_table(p, validate_hu=True)


def test_count_table_rejects_bad_encoding(tmp_path):
    p = tmp_path / "c.csv"
    p.write_bytes(b"hu,a\n-900,\xff\n")
    with pytest.raises(DataFormatError, match="UTF-8"):
        io.read_count_table(p)


def test_report_serialization_is_deterministic(tmp_path):
    doc = {"b": np.float64(1.0) / 3, "a": [np.int64(2), np.bool_(True)], "nan": math.nan, "inf": math.inf,
           "arr": np.array([0.1, 0.2])}
    text = io.dumps_report(doc)
    assert text == io.dumps_report(dict(reversed(list(doc.items()))))
    back = json.loads(text)
    assert back["schema_version"] == io.SCHEMA_VERSION
    assert back["b"] == 1.0 / 3
    assert back["nan"] is None and back["inf"] == "inf"
    assert back["a"] == [2, True] and back["arr"] == [0.1, 0.2]
    p = tmp_path / "r.json"
    io.write_report(p, doc)
    assert io.read_report(p) == back


def test_read_report_reports_position(tmp_path):
    with pytest.raises(DataFormatError, match="line 2"):
        io.read_report(write(tmp_path, "bad.json", '{\n  "a": ,\n}'))


def test_format_float_round_trips():
    for v in (0.1, 1 / 3, -725.98628409090918, 1e-300, 2.0**60 + 1):
        assert float(io.format_float(v)) == float(v)


def test_grid_file_and_sidecar(tmp_path, lung_data):
    f = fit(lung_data)
    d = density.MeanResponseDensity.from_fit(f, GaussianQuantile(-750.0, 120.0))
    grid = density.density_grid(d, s_panels=4, t_level=1, order=4)
    p = tmp_path / "grid.csv"
    side = io.write_grid(p, grid)
    rows = p.read_text().splitlines()
    assert rows[0] == "s,t,density,weight"
    assert len(rows) == 1 + grid.values.size
    vals = np.array([[float(c) for c in r.split(",")] for r in rows[1:]])
    assert float(np.sum(vals[:, 2] * vals[:, 3])) == pytest.approx(grid.total_mass(), rel=1e-14)
    meta = json.loads(side.read_text())
    assert meta["shape"] == list(grid.values.shape) and meta["kind"] == "density_grid"
