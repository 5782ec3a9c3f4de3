import numpy as np
import pandas as pd
import pytest

from poiexplain.data import CANONICAL_COLUMNS, VenueCatalog, build_matrix

T0 = 1_341_100_800  # 2012-07-01T00:00:00Z
DAY = 86400


def checkin_frame(rows, city="New York, US"):
    """Frame from (user, venue, timestamp[, lat, lon[, category[, city]]]) tuples."""
    full = []
    for r in rows:
        r = tuple(r)
        user, venue, ts = r[:3]
        lat, lon = r[3:5] if len(r) >= 5 else (40.75, -73.98)
        category = r[5] if len(r) >= 6 else "Bar"
        c = r[6] if len(r) >= 7 else city
        full.append((str(user), str(venue), int(ts), float(lat), float(lon), category, c))
    return pd.DataFrame(full, columns=CANONICAL_COLUMNS)


def matrix_from_pairs(pairs, start=T0):
    rows = [(u, v, start + n * 3600) for n, (u, v) in enumerate(pairs)]
    return build_matrix(checkin_frame(rows))


def random_matrix(rng, n_users, n_items, density=0.2, min_one=True):
    """Random binary interaction matrix; every user and item gets at least one visit if ``min_one``."""
    dense = rng.random((n_users, n_items)) < density
    if min_one:
        for u in range(n_users):
            if not dense[u].any():
                dense[u, rng.integers(n_items)] = True
        for i in range(n_items):
            if not dense[:, i].any():
                dense[rng.integers(n_users), i] = True
    pairs = [(f"u{u:03d}", f"v{i:03d}") for u, i in zip(*np.nonzero(dense))]
    return matrix_from_pairs(pairs), dense


def catalog_for(matrix, coords):
    """Catalog with ``coords[j]`` for ``matrix.items[j]``."""
    coords = np.asarray(coords, float)
    n = len(matrix.items)
    return VenueCatalog(np.asarray(matrix.items, dtype=object), coords[:, 0], coords[:, 1],
                        np.full(n, "Bar", dtype=object), np.full(n, "New York, US", dtype=object))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = __import__("sys").modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in results:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
