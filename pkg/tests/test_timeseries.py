import numpy as np
import pytest

from regimecast.errors import DataError
from regimecast.timeseries import (FracDiffSeries, PriceSeries, frac_diff,
                                   frac_diff_weights, load_ohlcv, simple_returns)


def make_prices(closes, asset_id="a", start="2020-01-01"):
    closes = np.asarray(closes, float)
    dates = np.datetime64(start, "D") + np.arange(len(closes))
    return PriceSeries(asset_id, dates, closes, closes, closes, closes,
                       np.ones(len(closes)))


def write_csv(tmp_path, rows, header="date,open,high,low,close,volume"):
    path = tmp_path / "asset.csv"
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


class TestLoadOhlcv:
    def test_three_row_csv(self, tmp_path):
        path = write_csv(tmp_path, [
            "2020-01-01,1,1,1,1,10",
            "2020-01-02,2,2,2,2,10",
            "2020-01-03,3,3,3,3,10",
        ])
        ps = load_ohlcv(path, asset_id="x")
        assert len(ps) == 3
        assert ps.close.tolist() == [1.0, 2.0, 3.0]

    def test_duplicate_date_cites_row(self, tmp_path):
        path = write_csv(tmp_path, [
            "2020-01-01,1,1,1,1,10",
            "2020-01-01,2,2,2,2,10",
        ])
        with pytest.raises(DataError, match="row 2"):
            load_ohlcv(path)

    def test_shuffled_rows_sorted(self, tmp_path):
        path = write_csv(tmp_path, [
            "2020-01-03,3,3,3,3,10",
            "2020-01-01,1,1,1,1,10",
            "2020-01-02,2,2,2,2,10",
        ])
        ps = load_ohlcv(path)
        assert ps.close.tolist() == [1.0, 2.0, 3.0]
        assert np.all(np.diff(ps.dates) > np.timedelta64(0, "D"))

    def test_nonpositive_price_rejected(self, tmp_path):
        path = write_csv(tmp_path, ["2020-01-01,1,1,1,-2,10"])
        with pytest.raises(DataError, match="row 1"):
            load_ohlcv(path)

    def test_missing_price_rejected_without_fill(self, tmp_path):
        path = write_csv(tmp_path, [
            "2020-01-01,1,1,1,1,10",
            "2020-01-02,1,1,1,,10",
        ])
        with pytest.raises(DataError, match="row 2"):
            load_ohlcv(path)

    def test_forward_fill_small_gap(self, tmp_path):
        path = write_csv(tmp_path, [
            "2020-01-01,1,1,1,1,10",
            "2020-01-02,,,,,10",
            "2020-01-03,3,3,3,3,10",
        ])
        ps = load_ohlcv(path, forward_fill=True)
        assert ps.close.tolist() == [1.0, 1.0, 3.0]

    def test_forward_fill_gap_limit(self, tmp_path):
        rows = ["2020-01-01,1,1,1,1,10"]
        rows += [f"2020-01-{2+i:02d},,,,,10" for i in range(6)]
        path = write_csv(tmp_path, rows)
        with pytest.raises(DataError, match="gap"):
            load_ohlcv(path, forward_fill=True)


class TestSimpleReturns:
    def test_basic(self):
        rs = simple_returns(make_prices([100, 110]))
        assert np.allclose(rs.values, [0.10])

    def test_constant(self):
        rs = simple_returns(make_prices([50, 50, 50]))
        assert np.allclose(rs.values, [0.0, 0.0])

    def test_hand_arithmetic(self):
        rs = simple_returns(make_prices([100, 90, 99]))
        assert np.allclose(rs.values, [-0.10, 0.10])

    def test_too_short(self):
        with pytest.raises(DataError):
            simple_returns(make_prices([100]))

    def test_compounding_roundtrip(self):
        rng = np.random.default_rng(7)
        closes = 100 * np.cumprod(1 + rng.normal(0, 0.01, 200))
        rs = simple_returns(make_prices(closes))
        rebuilt = closes[0] * np.cumprod(1 + rs.values)
        assert np.max(np.abs(rebuilt / closes[1:] - 1)) < 1e-10


class TestFracDiff:
    def test_identity_at_zero(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=30)
        fd = frac_diff(x, 0.0)
        assert fd.warmup == 0
        assert np.allclose(fd.values, x)

    def test_first_difference_at_one(self):
        fd = frac_diff([1, 3, 6], 1.0)
        assert fd.warmup == 1
        assert np.allclose(fd.values[1:], [2, 3])

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=50)
        fd = frac_diff(x, 0.5, 1e-4)
        w = fd.weights[: len(x)]
        k = len(w)
        oracle = np.full(len(x), np.nan)
        for t in range(k - 1, len(x)):
            oracle[t] = sum(w[j] * x[t - j] for j in range(k))
        avail = slice(fd.warmup, None)
        assert np.max(np.abs(oracle[avail] - fd.values[avail])) < 1e-10

    def test_domain_error(self):
        with pytest.raises(DataError):
            frac_diff([1, 2, 3], 1.5)

    def test_weight_signs_and_decay(self):
        # w_0 = 1; every later weight is negative for 0 < d < 1, with
        # magnitudes decaying monotonically after k = 1
        for d in (0.2, 0.5, 0.8):
            w = frac_diff_weights(d, 1e-6)
            assert w[0] == 1.0
            assert np.all(w[1:] < 0)
            mags = np.abs(w[1:])
            assert np.all(np.diff(mags) <= 1e-15)

    def test_identity_property_random_inputs(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            x = rng.normal(size=rng.integers(5, 60))
            fd = frac_diff(x, 0.0)
            assert np.allclose(fd.available, x)


class TestPriceSeriesInvariants:
    def test_length_mismatch(self):
        dates = np.datetime64("2020-01-01") + np.arange(3)
        with pytest.raises(DataError):
            PriceSeries("a", dates, np.ones(3), np.ones(3), np.ones(3),
                        np.ones(2), np.ones(3))

    def test_decreasing_dates(self):
        dates = np.array(["2020-01-02", "2020-01-01"], dtype="datetime64[D]")
        with pytest.raises(DataError):
            PriceSeries("a", dates, np.ones(2), np.ones(2), np.ones(2),
                        np.ones(2), np.ones(2))

    def test_negative_volume(self):
        dates = np.datetime64("2020-01-01") + np.arange(2)
        with pytest.raises(DataError):
            PriceSeries("a", dates, np.ones(2), np.ones(2), np.ones(2),
                        np.ones(2), np.array([1.0, -1.0]))
