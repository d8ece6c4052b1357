import math
from itertools import chain

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mob import data
from mob.data import (DataError, Dataset, TargetColumn, TargetKind, fit_standardizer, kfold_split,
                      load_csv, parse_arff, write_csv)

from conftest import make_dataset


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadCsv:
    def test_basic(self, tmp_path):
        ds = load_csv(write(tmp_path, "x,y\n1,0\n2,1\n3,0\n"), [("y", "binary")])
        assert (ds.n, ds.d, ds.m) == (3, 1, 1)
        assert ds.targets[0].kind is TargetKind.BINARY
        np.testing.assert_array_equal(ds.targets[0].values, [0, 1, 0])

    def test_unknown_target(self, tmp_path):
        with pytest.raises(DataError, match="unknown target"):
            load_csv(write(tmp_path, "x,y\n1,0\n2,1\n3,0\n"), [("z", "regression")])

    def test_missing_cell_drops_row(self, tmp_path):
        ds = load_csv(write(tmp_path, "x,y\n1,0.5\n,1.5\n3,2.5\n"), [("y", "regression")])
        assert ds.n == 2
        assert ds.dropped_rows == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_csv(tmp_path / "nope.csv", [("y", "regression")])

    def test_binary_with_three_levels(self, tmp_path):
        with pytest.raises(DataError, match="not binary"):
            load_csv(write(tmp_path, "x,y\n1,0\n2,1\n3,2\n"), [("y", "binary")])

    def test_empty_after_dropping(self, tmp_path):
        with pytest.raises(DataError, match="empty"):
            load_csv(write(tmp_path, "x,y\n1,\n,2\n"), [("y", "regression")])

    def test_categorical_first_appearance_order(self, tmp_path):
        ds = load_csv(write(tmp_path, "c,y\nred,1\nblue,2\nred,3\n"), [("y", "regression")])
        assert ds.levels[0] == ("red", "blue")
        np.testing.assert_array_equal(ds.features[:, 0], [0, 1, 0])

    def test_text_binary_target(self, tmp_path):
        ds = load_csv(write(tmp_path, "x,y\n1,yes\n2,no\n3,yes\n"), [("y", "binary")])
        np.testing.assert_array_equal(ds.targets[0].values, [1, 0, 1])

    def test_round_trip(self, tmp_path):
        ds = make_dataset(n=25, d=3, kinds=("regression", "binary"), categorical=True, seed=4)
        path = tmp_path / "rt.csv"
        write_csv(ds, path)
        back = load_csv(path, [("t1", "regression"), ("t2", "binary")])
        assert back.feature_names == ds.feature_names
        for p in range(ds.d):
            if ds.levels[p] is None:
                np.testing.assert_array_equal(back.features[:, p], ds.features[:, p])
            else:
                orig = [ds.levels[p][int(v)] for v in ds.features[:, p]]
                got = [back.levels[p][int(v)] for v in back.features[:, p]]
                assert orig == got
        np.testing.assert_array_equal(back.Y, ds.Y)


class TestParseArff:
    def test_single_line(self):
        ds = parse_arff("@relation t @attribute a numeric @attribute c {0,1} @data 1.5,1", [("c", "binary")])
        assert ds.n == 1
        assert ds.targets[0].kind is TargetKind.BINARY
        assert ds.features[0, 0] == 1.5

    def test_nominal_feature(self):
        text = "@relation t\n@attribute col {red,blue}\n@attribute y numeric\n@data\nred,1\nblue,2\nblue,3\n"
        ds = parse_arff(text, [("y", "regression")])
        assert ds.levels[0] == ("red", "blue")
        np.testing.assert_array_equal(ds.features[:, 0], [0, 1, 1])

    def test_non_binary_nominal_target(self):
        text = "@relation t\n@attribute a numeric\n@attribute c {1,2,3}\n@data\n1,1\n2,2\n"
        with pytest.raises(DataError, match="not binary"):
            parse_arff(text, [("c", "binary")])

    def test_question_mark_drops_row(self):
        text = "@relation t\n@attribute a numeric\n@attribute y numeric\n@data\n1,2\n?,3\n4,5\n"
        ds = parse_arff(text, [("y", "regression")])
        assert ds.n == 2 and ds.dropped_rows == 1

    def test_sparse_rejected(self):
        text = "@relation t\n@attribute a numeric\n@attribute y numeric\n@data\n{0 1, 1 2}\n"
        with pytest.raises(DataError, match="sparse"):
            parse_arff(text, [("y", "regression")])

    def test_malformed_attribute(self):
        with pytest.raises(DataError):
            parse_arff("@relation t\n@attribute a\n@data\n1\n", [("a", "regression")])

    def test_quoted_names_and_comments(self):
        text = ("% comment\n@RELATION 'x y'\n@ATTRIBUTE 'feat one' REAL\n"
                "@ATTRIBUTE target {'0','1'}\n@DATA\n0.5,'1'\n1.5,'0'\n")
        ds = parse_arff(text, [("target", "binary")])
        assert ds.feature_names == ("feat one",)
        np.testing.assert_array_equal(ds.targets[0].values, [1, 0])

    def test_declared_level_order_is_respected(self):
        text = "@relation t\n@attribute a numeric\n@attribute c {1,0}\n@data\n1,1\n2,0\n"
        ds = parse_arff(text, [("c", "binary")])
        np.testing.assert_array_equal(ds.targets[0].values, [1, 0])


class TestKfold:
    def test_loo_sizes(self):
        f = kfold_split(10, 10, 7)
        assert list(f.sizes()) == [1] * 10

    def test_uneven_sizes(self):
        assert sorted(kfold_split(10, 3, 1).sizes()) == [3, 3, 4]

    def test_deterministic(self):
        a, b = kfold_split(37, 5, 123), kfold_split(37, 5, 123)
        np.testing.assert_array_equal(a.assignment, b.assignment)

    @pytest.mark.parametrize("n,k", [(3, 4), (5, 1)])
    def test_invalid(self, n, k):
        with pytest.raises(ValueError):
            kfold_split(n, k, 0)

    @given(st.integers(2, 60).flatmap(lambda n: st.tuples(st.just(n), st.integers(2, n))),
           st.integers(0, 2**63 - 1))
    @settings(max_examples=60, deadline=None)
    def test_partition(self, nk, seed):
        n, k = nk
        f = kfold_split(n, k, seed)
        folds = [set(f.test_rows(i)) for i in range(k)]
        assert set(chain.from_iterable(folds)) == set(range(n))
        assert sum(len(s) for s in folds) == n
        sizes = f.sizes()
        assert sizes.max() - sizes.min() <= 1


class TestStandardizer:
    def test_zero_variance(self):
        s = fit_standardizer([0, 0, 0])
        assert (s.mean, s.sd) == (0.0, 0.0)
        assert s.apply(5) == 5

    def test_sample_sd(self):
        s = fit_standardizer([1, 3])
        assert s.mean == 2
        assert s.sd == pytest.approx(math.sqrt(2))
        # hand computed: (3 - 2) / sqrt(2)
        assert s.apply(3) == pytest.approx(0.7071067811865475, rel=1e-15)

    def test_mean_maps_to_zero(self):
        s = fit_standardizer([2.5, -1, 7, 3])
        assert s.apply(s.mean) == 0

    def test_empty(self):
        with pytest.raises(ValueError):
            fit_standardizer([])

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50))
    @settings(max_examples=80, deadline=None)
    def test_standardized_moments(self, values):
        s = fit_standardizer(values)
        z = s.apply(values)
        assert abs(z.mean()) < 1e-10 * max(1.0, np.abs(values).max())
        if s.sd > 1e-6:
            assert np.std(z, ddof=1) == pytest.approx(1.0, rel=1e-9)


class TestDatasetInvariants:
    def test_target_length_mismatch(self):
        with pytest.raises(DataError):
            Dataset(np.zeros((3, 1)), ["x"], [TargetColumn("y", TargetKind.REGRESSION, [1, 2])])

    def test_binary_values_checked(self):
        with pytest.raises(DataError):
            TargetColumn("y", TargetKind.BINARY, [0, 2])

    def test_no_targets(self):
        with pytest.raises(DataError):
            Dataset(np.zeros((3, 1)), ["x"], [])

    def test_immutable(self, small_dataset):
        with pytest.raises(ValueError):
            small_dataset.features[0, 0] = 1.0


ARFF = """@relation fake
@attribute f1 numeric
@attribute f2 {a,b}
@attribute t1 numeric
@attribute t2 numeric
@data
1.0,a,2.0,3.0
2.0,b,4.0,5.0
3.0,a,6.0,?
"""


class TestOpenml:
    def _fake_http(self, calls):
        def get(url, timeout=60.0):
            calls.append(url)
            if "api/v1/json/data/999" in url:
                return b'{"data_set_description": {"id": "999", "name": "fake", ' \
                       b'"url": "https://example.invalid/fake.arff", "default_target_attribute": "t1,t2"}}'
            if url.endswith("fake.arff"):
                return ARFF.encode()
            raise data.urllib.error.URLError("unreachable")
        return get

    def test_download_then_cache(self, tmp_path, monkeypatch):
        calls = []
        monkeypatch.setattr(data, "_http_get", self._fake_http(calls))
        text = data.fetch_openml(999, tmp_path)
        assert (tmp_path / "openml_999.arff").read_text() == text
        assert len(calls) == 2
        # cold network, warm cache
        monkeypatch.setattr(data, "_http_get", lambda *a, **k: pytest.fail("network used"))
        assert data.fetch_openml(999, tmp_path) == text

    def test_load_openml_default_targets(self, tmp_path, monkeypatch):
        monkeypatch.setattr(data, "_http_get", self._fake_http([]))
        ds = data.load_openml(999, tmp_path)
        assert ds.target_names == ("t1", "t2")
        assert ds.n == 2 and ds.d == 2 and ds.dropped_rows == 1
        assert all(t.kind is TargetKind.REGRESSION for t in ds.targets)

    def test_no_network_no_cache(self, tmp_path, monkeypatch):
        def fail(url, timeout=60.0):
            raise data.urllib.error.URLError("offline")
        monkeypatch.setattr(data, "_http_get", fail)
        with pytest.raises(ConnectionError):
            data.fetch_openml(1234, tmp_path)

    def test_unknown_id(self, tmp_path, monkeypatch):
        def not_found(url, timeout=60.0):
            raise data.urllib.error.HTTPError(url, 412, "Unknown dataset", {}, None)
        monkeypatch.setattr(data, "_http_get", not_found)
        with pytest.raises(DataError, match="not found"):
            data.fetch_openml(4242, tmp_path)


def _openml_or_skip(data_id):
    try:
        return data.load_openml(data_id)
    except ConnectionError as exc:
        pytest.skip(f"OpenML unavailable and not cached: {exc}")


@pytest.mark.network
@pytest.mark.parametrize("data_id,shape", [(41550, (49, 30, 6)), (41545, (593, 72, 6))])
def test_openml_catalogue_shapes(data_id, shape):
    ds = _openml_or_skip(data_id)
    assert (ds.n, ds.d, ds.m) == shape
