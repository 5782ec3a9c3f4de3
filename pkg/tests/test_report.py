import numpy as np
import pandas as pd
import pytest

from poiexplain.report import (coefficient_matrix, coefficient_plot, confidence_bounds, density_grid,
                               heatmap_figure, markdown_table, metric_summary)

BBOX = {"lat_min": 40.0, "lat_max": 41.0, "lon_min": -74.0, "lon_max": -73.0}


def _table(theta, p):
    return pd.DataFrame({"ev": ["(Intercept)", "Shape", "Density"], "theta": theta, "stderr": [0.1, 0.1, 0.2],
                         "t": np.divide(theta, 0.1), "p": p, "stars": ""})


def test_whisker_example():
    lo, hi = confidence_bounds([0.5], [0.1], 135)[0]
    assert lo == pytest.approx(0.302, abs=1e-3) and hi == pytest.approx(0.698, abs=1e-3)


def test_coefficient_matrix_stars_follow_p():
    m = coefficient_matrix({"Pop": _table([0.1, 0.5, -0.2], [0.5, 0.0001, 0.03])})
    assert m.loc["Shape", "Pop"] == "0.500***"
    assert m.loc["Density", "Pop"] == "-0.200*"
    assert m.loc["(Intercept)", "Pop"] == "0.100"


def test_single_model_plot_has_one_panel(tmp_path):
    path = coefficient_plot({"Pop": _table([0.1, 0.5, -0.2], [0.5, 0.01, 0.03])}, {"Pop": 20}, tmp_path / "c.svg")
    text = path.read_text()
    assert text.startswith("<?xml") and text.count('id="axes_') == 1


def test_plot_is_reproducible(tmp_path):
    tables = {"Pop": _table([0.1, 0.5, -0.2], [0.5, 0.01, 0.03]), "UB": _table([0.0, 0.2, 0.3], [0.9, 0.2, 0.001])}
    a = coefficient_plot(tables, {"Pop": 20, "UB": 20}, tmp_path / "a.svg", title="nDCG@5")
    b = coefficient_plot(tables, {"Pop": 20, "UB": 20}, tmp_path / "b.svg", title="nDCG@5")
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().count('id="axes_') == 2


def test_plot_requires_tables(tmp_path):
    with pytest.raises(ValueError):
        coefficient_plot({}, {}, tmp_path / "x.svg")


def test_density_grid_counts():
    lat = np.array([40.05, 40.05, 40.95, 42.0])
    lon = np.array([-73.95, -73.95, -73.05, -73.5])
    grid = density_grid(lat, lon, BBOX, bins=10)
    assert len(grid) == 100 and grid["count"].sum() == 3
    assert grid.loc[(grid.lat_bin == 0) & (grid.lon_bin == 0), "count"].item() == 2
    assert grid.loc[(grid.lat_bin == 9) & (grid.lon_bin == 9), "count"].item() == 1


def test_heatmap_figure(tmp_path):
    grid = density_grid(np.array([40.5]), np.array([-73.5]), BBOX, bins=4)
    path = heatmap_figure({"NYC": grid, "US": grid}, tmp_path / "h.svg")
    assert path.exists()


def test_metric_summary_and_markdown():
    metrics = pd.DataFrame({"model": ["Pop", "Pop", "UB", "UB"], "ndcg@5": [0.1, 0.3, 0.2, 0.2],
                            "epc@5": [0.5, 0.7, 0.6, 0.6], "item_exposure@5": [7.0, 9.0, 6.0, 6.0]})
    s = metric_summary(metrics, 5)
    assert s.loc["Pop", "ndcg@5 mean"] == pytest.approx(0.2)
    assert s.loc["Pop", "ndcg@5 std"] == pytest.approx(np.std([0.1, 0.3], ddof=1))
    md = markdown_table(s)
    assert md.splitlines()[0].startswith("| model | ndcg@5 mean")
    assert "| Pop | 0.200 |" in md
