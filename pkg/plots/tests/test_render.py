from pathlib import Path

import numpy as np
import pytest

from dfrcplots import FIGURES, FigureSpec, RenderError, figure_spec, render
from dfrcplots.cli import main as cli_main
from dfrcplots.render import load_series

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

FIXTURE_OF = {
    "power": "power.csv",
    "elements": "elements.csv",
    "qos": "qos.csv",
    "antennas": "antennas.csv",
    "pathloss": "pathloss.csv",
    "distance": "distance.csv",
    "convergence": "convergence.csv",
}


@pytest.mark.parametrize("name", sorted(FIGURES))
def test_every_figure_family_renders(name, tmp_path):
    out = tmp_path / f"{name}.png"
    render(figure_spec(name, str(FIXTURES / FIXTURE_OF[name]), str(out)))
    assert out.exists() and out.stat().st_size > 0


@pytest.mark.parametrize("name", sorted(FIGURES))
def test_golden_images_byte_stable(name, tmp_path):
    golden = GOLDEN / f"{name}.png"
    out = tmp_path / f"{name}.png"
    render(figure_spec(name, str(FIXTURES / FIXTURE_OF[name]), str(out)))
    assert golden.exists(), "golden image missing from the repository"
    assert out.read_bytes() == golden.read_bytes()


def test_rerender_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    render(figure_spec("power", str(FIXTURES / "power.csv"), str(a)))
    render(figure_spec("power", str(FIXTURES / "power.csv"), str(b)))
    assert a.read_bytes() == b.read_bytes()


def test_aggregation_matches_hand_computation():
    spec = figure_spec("power", str(FIXTURES / "power.csv"), "unused.png")
    series = load_series(spec)
    import csv
    vals = []
    with open(FIXTURES / "power.csv") as fh:
        for row in csv.DictReader(fh):
            if row["scheme"] == "ci+ris" and float(row["value"]) == 14.0:
                vals.append(float(row["sinr_db"]))
    xs, mean, std = series["ci+ris"]
    assert xs[0] == 14.0
    assert mean[0] == pytest.approx(np.mean(vals))
    assert std[0] == pytest.approx(np.std(vals, ddof=1))


def test_empty_scheme_filter_errors_without_file(tmp_path):
    out = tmp_path / "never.png"
    spec = figure_spec("power", str(FIXTURES / "power.csv"), str(out),
                       schemes=("nonexistent+ris",))
    with pytest.raises(RenderError):
        render(spec)
    assert not out.exists()


def test_missing_columns_descriptive(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    spec = FigureSpec(csv_path=str(bad), x_column="P_dBW",
                      output_path=str(tmp_path / "x.png"))
    with pytest.raises(RenderError, match="required columns"):
        render(spec)


def test_unknown_figure_name():
    with pytest.raises(RenderError, match="unknown figure"):
        figure_spec("bogus", "x.csv", "y.png")


class TestCli:
    def test_ok(self, tmp_path, capsys):
        out = tmp_path / "fig.png"
        rc = cli_main(["--csv", str(FIXTURES / "power.csv"),
                       "--figure", "power", "--out", str(out)])
        assert rc == 0 and out.exists()

    def test_scheme_filter(self, tmp_path):
        out = tmp_path / "fig.png"
        rc = cli_main(["--csv", str(FIXTURES / "power.csv"),
                       "--figure", "power", "--out", str(out),
                       "--schemes", "ci+ris"])
        assert rc == 0

    def test_error_exit(self, tmp_path, capsys):
        rc = cli_main(["--csv", str(FIXTURES / "power.csv"),
                       "--figure", "power", "--out", str(tmp_path / "f.png"),
                       "--schemes", "none+ris"])
        assert rc == 1
        assert "error" in capsys.readouterr().err
