import numpy as np
import pandas as pd
import pytest

from poiexplain.data import (DataFormatError, Origin, VenueCatalog, build_matrix, classify_origin, detect_home,
                             detect_homes, format_timestamp, parse_canonical_csv, parse_tist2015, parse_timestamp,
                             preprocess, records, write_canonical_csv)

from conftest import T0, checkin_frame

HEADER = "user_id,venue_id,timestamp,lat,lon,category,city\n"


def _write(tmp_path, body, name="c.csv"):
    p = tmp_path / name
    p.write_text(HEADER + body)
    return p


def test_parse_single_row(tmp_path):
    frame = parse_canonical_csv(_write(tmp_path, 'u1,v1,2012-07-04T10:00:00Z,40.7,-73.9,Bar,"New York, US"\n'))
    assert len(frame) == 1
    ci = next(records(frame))
    assert ci.user_id == "u1" and ci.timestamp == parse_timestamp("2012-07-04T10:00:00Z")
    assert ci.city == "New York, US"


def test_parse_header_only(tmp_path):
    assert len(parse_canonical_csv(_write(tmp_path, ""))) == 0


def test_parse_bad_latitude_reports_line(tmp_path):
    body = 'u1,v1,2012-07-04T10:00:00Z,40.7,-73.9,Bar,X\nu1,v2,2012-07-04T11:00:00Z,95.0,-73.9,Bar,X\n'
    with pytest.raises(DataFormatError) as err:
        parse_canonical_csv(_write(tmp_path, body))
    assert err.value.line == 3


def test_parse_bad_timestamp(tmp_path):
    with pytest.raises(DataFormatError):
        parse_canonical_csv(_write(tmp_path, "u1,v1,yesterday,40.7,-73.9,Bar,X\n"))


def test_csv_roundtrip(tmp_path):
    frame = checkin_frame([("a", "v1", T0), ("b", "v2", T0 + 5, 40.1, -74.0, "Park", "Boston, US")])
    path = tmp_path / "out.csv"
    write_canonical_csv(frame, path)
    back = parse_canonical_csv(path)
    assert back["user_id"].tolist() == ["a", "b"]
    assert back["timestamp"].tolist() == [T0, T0 + 5]
    assert back["city"].tolist() == ["New York, US", "Boston, US"]


def test_timestamp_roundtrip():
    assert format_timestamp(parse_timestamp("2013-01-15T08:30:00Z")) == "2013-01-15T08:30:00Z"
    assert parse_timestamp("2013-01-15T08:30:00") == parse_timestamp("2013-01-15T08:30:00+00:00")


def _tist_files(tmp_path, checkin_lines, poi_lines):
    c = tmp_path / "checkins.txt"
    p = tmp_path / "pois.txt"
    c.write_text("".join(checkin_lines))
    p.write_text("".join(poi_lines))
    return c, p


POIS = ["v1\t40.75\t-73.98\tBar\tUS\n", "v2\t40.70\t-74.00\tPark\tUS\n", "v3\t51.5\t-0.12\tPub\tGB\n"]


def test_tist_all_known(tmp_path):
    lines = ["u1\tv1\tTue Apr 03 18:00:09 +0000 2012\t-240\n",
             "u1\tv2\tTue Apr 03 19:00:09 +0000 2012\t-240\n",
             "u2\tv3\tWed Apr 04 18:00:09 +0000 2012\t60\n"]
    frame = parse_tist2015(*_tist_files(tmp_path, lines, POIS))
    assert len(frame) == 3
    assert frame.attrs["warnings"] == {"unknown_venue": 0, "bad_time": 0}
    assert frame["timestamp"].iloc[0] == parse_timestamp("2012-04-03T18:00:09Z")


def test_tist_unknown_venue(tmp_path):
    frame = parse_tist2015(*_tist_files(tmp_path, ["u1\tvX\tTue Apr 03 18:00:09 +0000 2012\t0\n"], POIS))
    assert len(frame) == 0
    assert frame.attrs["warnings"]["unknown_venue"] == 1


def test_tist_bbox_labels_target_city(tmp_path):
    lines = ["u1\tv1\tTue Apr 03 18:00:09 +0000 2012\t0\n", "u1\tv3\tTue Apr 03 19:00:09 +0000 2012\t0\n"]
    bbox = {"lat_min": 40.47, "lat_max": 40.93, "lon_min": -74.27, "lon_max": -73.68}
    frame = parse_tist2015(*_tist_files(tmp_path, lines, POIS), bbox=bbox)
    assert frame["venue_id"].tolist() == ["v1"]
    assert frame["city"].tolist() == ["New York, US"]


def test_tist_city_file_labels(tmp_path):
    cities = tmp_path / "cities.txt"
    cities.write_text("London\t51.5\t-0.12\tGB\tUnited Kingdom\tcapital\nManchester\t53.48\t-2.24\tGB\tUK\tx\n")
    lines = ["u2\tv3\tWed Apr 04 18:00:09 +0000 2012\t60\n"]
    frame = parse_tist2015(*_tist_files(tmp_path, lines, POIS), cities_path=cities)
    assert frame["city"].tolist() == ["London, GB"]


def test_preprocess_duplicates_and_residences():
    rows = [("u", "a", T0), ("u", "a", T0), ("u", "b", T0 + 1), ("u", "r", T0 + 2, 40.7, -73.9, "Residences"),
            ("u", "c", T0 + 3)]
    out = preprocess(checkin_frame(rows), ["Residence", "Residences"])
    assert out["venue_id"].tolist() == ["a", "b", "c"]


def test_preprocess_single_residence_removed():
    out = preprocess(checkin_frame([("u", "r", T0, 40.7, -73.9, "Residences")]), ["Residences"])
    assert out.empty


def _home_rows(user, counts):
    rows, t = [], T0
    for city, n in counts:
        for _ in range(n):
            rows.append((user, f"{city}-v", t, 40.7, -73.9, "Bar", city))
            t += 10
    return rows


def test_home_strict_plurality_nyc():
    label = detect_home(checkin_frame(_home_rows("u", [("New York, US", 3), ("Boston, US", 2)])), "u")
    assert label.home_city == "New York, US" and label.origin_class is Origin.NYC


def test_home_us_origin():
    label = detect_home(checkin_frame(_home_rows("u", [("Chicago, US", 4), ("New York, US", 1)])), "u")
    assert label.home_city == "Chicago, US" and label.origin_class is Origin.US


def test_home_tie_earliest_city_wins():
    rows = _home_rows("u", [("London, GB", 1), ("New York, US", 2), ("London, GB", 1)])
    label = detect_home(checkin_frame(rows), "u")
    assert label.home_city == "London, GB" and label.origin_class is Origin.OTHER
    rows = _home_rows("w", [("New York, US", 1), ("London, GB", 2), ("New York, US", 1)])
    assert detect_home(checkin_frame(rows), "w").home_city == "New York, US"


def test_home_unknown_without_labels():
    frame = checkin_frame([("u", "v", T0, 40.7, -73.9, "Bar", "")])
    labels = detect_homes(frame)
    assert labels["origin_class"].tolist() == ["UNKNOWN"]


def test_classify_origin_rules():
    assert classify_origin("New York, US", "New York, US", "US") is Origin.NYC
    assert classify_origin("Austin, US", "New York, US", "US") is Origin.US
    assert classify_origin("Tokyo, JP", "New York, US", "US") is Origin.OTHER
    assert classify_origin(None, "New York, US", "US") is Origin.UNKNOWN


def test_matrix_repeat_visits_collapse():
    m = build_matrix(checkin_frame([("u", "v", T0), ("u", "v", T0 + 1), ("u", "v", T0 + 2)]))
    assert m.unique_visits.shape == (1, 1)
    assert m.unique_visits.toarray().tolist() == [[1]]
    assert m.n_checkins == 3 and m.n_visits == 1


def test_matrix_two_by_three():
    m = build_matrix(checkin_frame([("a", "x", T0), ("a", "y", T0), ("b", "z", T0)]))
    assert (m.n_users, m.n_items, m.n_visits) == (2, 3, 3)


def test_matrix_matches_stream_scan(rng):
    rows = [(f"u{rng.integers(20)}", f"v{rng.integers(30)}", T0 + int(t)) for t in rng.integers(0, 10**6, 200)]
    m = build_matrix(checkin_frame(rows))
    pairs = {(u, v) for u, v, _ in rows}
    dense = m.unique_visits.toarray()
    for a, u in enumerate(m.users):
        for b, v in enumerate(m.items):
            assert bool(dense[a, b]) == ((u, v) in pairs)


def test_matrix_restrict_keeps_raw_stream():
    m = build_matrix(checkin_frame([("a", "x", T0), ("a", "x", T0 + 9), ("a", "y", T0), ("b", "y", T0)]))
    sub = m.restrict(np.array([True, False]), np.array([True, False]))
    assert sub.users.tolist() == ["a"] and sub.items.tolist() == ["x"]
    assert sub.n_checkins == 2


def test_catalog_lookup():
    frame = checkin_frame([("a", "x", T0, 40.1, -73.1), ("b", "y", T0, 40.2, -73.2)])
    cat = VenueCatalog.from_checkins(frame)
    assert cat["y"][:2] == (40.2, -73.2)
    assert np.allclose(cat.coords(["y", "x"]), [[40.2, -73.2], [40.1, -73.1]])
    assert "x" in cat and "z" not in cat
