import csv

import pytest
from click.testing import CliRunner

from plots.cli import main
from plots.figures import (
    SchemaError,
    read_curve,
    read_points,
    render_bars,
    render_curves,
    render_scatter,
)


def _write_points(path, n_student=100, n_teacher=100):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["role", "x", "y"])
        for i in range(n_student):
            w.writerow(["student", 3 + 0.01 * i, 3 - 0.01 * i])
        for i in range(n_teacher):
            w.writerow(["teacher", -1 + 0.02 * i, 0.5 * i % 3])
    return path


def _write_curve(path, n=50, offset=0.0):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "loss"])
        for i in range(n):
            w.writerow([i, offset + 2.0 / (i + 1)])
    return path


# ----------------------------------------------------------------------
def test_scatter_draws_documented_point_counts(tmp_path):
    before = _write_points(tmp_path / "before.csv")
    out = tmp_path / "fig.svg"
    counts = render_scatter([("before", str(before))], out)
    assert counts == {"before": {"student": 100, "teacher": 100}}
    text = out.read_text()
    assert text.count("<circle") == 200 + 2  # points + 2 legend markers
    assert text.count('fill="#d62728"') == 101  # student red + legend
    assert text.count('fill="#1f77b4"') == 101  # teacher blue + legend


def test_scatter_two_panels(tmp_path):
    before = _write_points(tmp_path / "b.csv", 10, 10)
    after = _write_points(tmp_path / "a.csv", 10, 10)
    out = tmp_path / "fig.svg"
    counts = render_scatter([("before", str(before)), ("after", str(after))], out)
    assert sum(sum(v.values()) for v in counts.values()) == 40
    assert out.read_text().count("<circle") == 40 + 2


def test_scatter_byte_identical(tmp_path):
    p = _write_points(tmp_path / "p.csv", 20, 20)
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    render_scatter([("before", str(p))], a)
    render_scatter([("before", str(p))], b)
    assert a.read_bytes() == b.read_bytes()
    assert b"<svg" in a.read_bytes()


def test_points_schema_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(SchemaError, match="missing column"):
        read_points(bad)
    weird = tmp_path / "weird.csv"
    weird.write_text("role,x,y\nreferee,1,2\n")
    with pytest.raises(SchemaError, match="unknown role"):
        read_points(weird)
    empty = tmp_path / "empty.csv"
    empty.write_text("role,x,y\n")
    with pytest.raises(SchemaError, match="no data rows"):
        read_points(empty)
    with pytest.raises(FileNotFoundError):
        read_points(tmp_path / "nope.csv")


# ----------------------------------------------------------------------
def test_curves_two_labeled_series(tmp_path):
    c1 = _write_curve(tmp_path / "c1.csv", 30)
    c2 = _write_curve(tmp_path / "c2.csv", 30, offset=0.5)
    out = tmp_path / "fig.svg"
    lengths = render_curves([("shared", str(c1)), ("different", str(c2))], out)
    assert lengths == {"shared": 30, "different": 30}
    text = out.read_text()
    assert text.count("<polyline") == 2
    assert ">shared<" in text and ">different<" in text


def test_curves_byte_identical_and_no_timestamps(tmp_path):
    c = _write_curve(tmp_path / "c.csv")
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    render_curves([("run", str(c))], a)
    render_curves([("run", str(c))], b)
    assert a.read_bytes() == b.read_bytes()
    low = a.read_text().lower()
    assert "date" not in low and "time" not in low


def test_curve_schema_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("iteration,value\n1,2\n")
    with pytest.raises(SchemaError, match="step"):
        read_curve(bad)


# ----------------------------------------------------------------------
def test_bars_grouped(tmp_path):
    table = tmp_path / "t.csv"
    with open(table, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["seed", "d_cosine_vanilla", "d_cosine_dskd"])
        for s, a, b in [(0, 31.0, 24.5), (1, 29.0, 26.1), (2, 33.0, 22.0)]:
            w.writerow([s, a, b])
    out = tmp_path / "fig.svg"
    info = render_bars(table, "seed", ["d_cosine_vanilla", "d_cosine_dskd"], out)
    assert info == {"groups": 3, "bars_per_group": 2}
    text = out.read_text()
    # frame + 6 bars + 2 legend swatches
    assert text.count("<rect") == 1 + 6 + 2
    render_bars(table, "seed", ["d_cosine_vanilla", "d_cosine_dskd"], tmp_path / "b.svg")
    assert out.read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_bars_schema_error_names_columns(tmp_path):
    table = tmp_path / "t.csv"
    table.write_text("seed,a\n0,1\n")
    with pytest.raises(SchemaError, match="missing column.*found seed, a"):
        render_bars(table, "seed", ["missing_col"], tmp_path / "x.svg")


# ----------------------------------------------------------------------
# CLI
# ----------------------------------------------------------------------
def test_cli_scatter(tmp_path):
    before = _write_points(tmp_path / "before.csv")
    after = _write_points(tmp_path / "after.csv")
    out = tmp_path / "fig.svg"
    res = CliRunner().invoke(main, ["scatter", "--before", str(before),
                                    "--after", str(after), "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert "before: 200 points" in res.output
    assert "after: 200 points" in res.output
    assert out.exists()


def test_cli_scatter_requires_input(tmp_path):
    res = CliRunner().invoke(main, ["scatter", "--out", str(tmp_path / "f.svg")])
    assert res.exit_code != 0


def test_cli_curves(tmp_path):
    c1 = _write_curve(tmp_path / "c1.csv")
    c2 = _write_curve(tmp_path / "c2.csv", offset=1.0)
    out = tmp_path / "fig.svg"
    res = CliRunner().invoke(main, [
        "curves", "--curve", f"shared={c1}", "--curve", f"different={c2}",
        "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert out.exists()
    res2 = CliRunner().invoke(main, ["curves", "--curve", "nopath",
                                     "--out", str(out)])
    assert res2.exit_code != 0


def test_cli_bars(tmp_path):
    table = tmp_path / "t.csv"
    table.write_text("arm,final_eval_loss\nvanilla_kd,1.51\ndskd,1.47\n")
    out = tmp_path / "fig.svg"
    res = CliRunner().invoke(main, [
        "bars", "--table", str(table), "--label-col", "arm",
        "--value-col", "final_eval_loss", "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert "2 groups x 1 bars" in res.output
