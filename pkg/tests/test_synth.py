import pandas as pd
import pytest

from poiexplain.config import DEFAULT_BBOX
from poiexplain.data import build_matrix, detect_homes, in_bbox, parse_canonical_csv, write_canonical_csv
from poiexplain.features import gini
from poiexplain.synth import SynthParams, generate


def _target(frame):
    return frame.loc[in_bbox(frame["lat"].to_numpy(), frame["lon"].to_numpy(), DEFAULT_BBOX)]


def test_desk_scale_counts_and_schema(tmp_path):
    frame = generate(SynthParams(), seed=1)
    target = _target(frame)
    assert len(target) == 20000
    assert target["user_id"].nunique() == 500 and target["venue_id"].nunique() <= 300
    path = tmp_path / "c.csv"
    write_canonical_csv(frame, path)
    back = parse_canonical_csv(path)
    assert len(back) == len(frame)


def test_seed_determinism(tmp_path):
    p = SynthParams(n_users=50, n_venues=40, n_checkins=800)
    for name, seed in (("a", 5), ("b", 5), ("c", 6)):
        write_canonical_csv(generate(p, seed=seed), tmp_path / f"{name}.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "c.csv").read_bytes()


def test_zero_skew_is_near_uniform():
    p = SynthParams(popularity_skew=0.0, locality=1.0)
    m = build_matrix(_target(generate(p, seed=3)))
    assert gini(m.item_degrees()) < 0.15


def test_skew_increases_concentration():
    flat = build_matrix(_target(generate(SynthParams(popularity_skew=0.0), seed=3)))
    steep = build_matrix(_target(generate(SynthParams(popularity_skew=1.2), seed=3)))
    assert gini(steep.item_degrees()) > gini(flat.item_degrees()) + 0.2


def test_home_labels_recoverable():
    frame = generate(SynthParams(n_users=200, n_venues=50, n_checkins=2000), seed=4)
    labels = detect_homes(frame)
    counts = labels["origin_class"].value_counts()
    assert set(counts.index) == {"NYC", "US", "OTHER"}
    assert counts["NYC"] > counts["OTHER"]


@pytest.mark.parametrize("kwargs", [dict(n_clusters=400), dict(n_checkins=10), dict(popularity_skew=-1.0),
                                    dict(seasonality=1.5), dict(n_users=0), dict(local_share=0.9, us_share=0.3)])
def test_infeasible_parameters(kwargs):
    with pytest.raises(ValueError):
        generate(SynthParams(**kwargs))


def test_seasonality_tilts_toward_summer():
    frame = _target(generate(SynthParams(seasonality=0.8, n_users=100, n_checkins=5000), seed=2))
    months = pd.to_datetime(frame["timestamp"], unit="s", utc=True).dt.month
    summer = months.between(5, 10).mean()
    assert summer > 0.6
