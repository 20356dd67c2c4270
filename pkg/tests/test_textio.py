import numpy as np
import pytest

from cpolab.errors import ConfigIOError, ParseError
from cpolab.textio import format_float, format_header_value, read_table, render_table, write_table


def test_float_format_is_fixed():
    assert format_float(0.27) == "2.7000000000e-01"
    assert format_float(float("nan")) == "nan"
    assert format_header_value(True) == "true"
    assert format_header_value(None) == "none"


def test_render_layout():
    text = render_table(["delta_MHz", "transmission"], [[-0.5, 0.3], [0.5, 0.4]],
                        header={"model": "rate", "tau_us": None}, comments=["created 2026-01-01"])
    lines = text.splitlines()
    assert lines[0] == "# created 2026-01-01"
    assert lines[1:3] == ["# model=rate", "# tau_us=none"]
    assert lines[3] == "delta_MHz,transmission"
    assert lines[4] == "-5.0000000000e-01,3.0000000000e-01"
    with pytest.raises(ValueError):
        render_table(["a"], [[1.0, 2.0]])


def test_written_table_reads_back(tmp_path):
    data = np.column_stack([np.linspace(-1, 1, 5), np.linspace(0.2, 0.6, 5)])
    path = write_table(tmp_path / "sub" / "t.csv", ["x", "y"], data, header={"points": 5})
    table = read_table(path)
    assert list(table.columns) == ["x", "y"]
    assert table.header == {"points": "5"}
    np.testing.assert_allclose(table.column(1), data[:, 1], rtol=1e-10)


def test_whitespace_columns_without_names(tmp_path):
    path = tmp_path / "plain.dat"
    path.write_text("0.1 1.0\n0.2 0.5\n\n0.3 0.25\n", encoding="utf-8")
    table = read_table(path)
    assert list(table.columns) == ["col0", "col1"]
    assert table.data.shape == (3, 2)


@pytest.mark.parametrize("body, line_no", [
    ("x,y\n1,2\n3,oops\n", 3),
    ("x,y\n1,2\n3,4,5\n", 3),
    ("1\n", 1),
])
def test_bad_rows_name_their_line(tmp_path, body, line_no):
    path = tmp_path / "bad.csv"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(ParseError) as err:
        read_table(path)
    assert err.value.line_no == line_no
    assert err.value.codes == ["parse_error"]


def test_no_rows(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("# nothing here\nx,y\n", encoding="utf-8")
    with pytest.raises(ParseError):
        read_table(path)


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigIOError):
        read_table(tmp_path / "missing.csv")
