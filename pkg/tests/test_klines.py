"""Candlestick ingestion: parsing, rejection accounting, resampling."""

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pegmfg.klines import (
    KlineRecord,
    infer_bar_ms,
    parse_klines,
    records_to_csv,
    to_mispricing,
)

MIN = 60_000  # one-minute bar in ms


def bar(i, close, open_=None, lo=None, hi=None, vol=1.0, t0=1_678_000_000_000):
    o = close if open_ is None else open_
    low = min(o, close) if lo is None else lo
    high = max(o, close) if hi is None else hi
    return KlineRecord(open_time=t0 + i * MIN, open=o, high=high, low=low,
                       close=close, volume=vol)


def to_stream(rows: str):
    return io.StringIO(rows)


class TestParse:
    def test_two_rows_round_trip(self):
        text = ("1678000000000,0.999,1.001,0.998,1.0,12.5,1678000059999\n"
                "1678000060000,1.0,1.002,0.9995,1.0015,7.25,1678000119999\n")
        res = parse_klines(to_stream(text))
        assert res.rows_read == 2 and not res.rejected
        assert res.records[0].close == 1.0
        assert res.records[1].volume == 7.25
        # serialize and re-parse: numeric fields identical
        again = parse_klines(to_stream(records_to_csv(res.records)))
        assert again.records == res.records

    def test_ohlc_violation_rejected_with_line(self):
        text = ("1678000000000,1.0,0.998,1.001,1.0,1\n"    # high < low
                "1678000060000,1.0,1.001,0.999,1.0,1\n")
        res = parse_klines(to_stream(text))
        assert len(res.records) == 1
        assert len(res.rejected) == 1
        line, reason = res.rejected[0]
        assert line == 1 and "OHLC" in reason

    def test_unparseable_numeric_rejected(self):
        text = ("1678000000000,1.0,1.001,0.999,oops,1\n"
                "1678000060000,1.0,1.001,0.999,1.0,1\n")
        res = parse_klines(to_stream(text))
        assert res.rejected[0][0] == 1
        assert "numeric" in res.rejected[0][1]

    def test_header_flag(self):
        text = ("open_time,open,high,low,close,volume\n"
                "1678000000000,1.0,1.001,0.999,1.0,1\n")
        res = parse_klines(to_stream(text), has_header=True)
        assert len(res.records) == 1 and res.rows_read == 1

    def test_empty_file_raises(self):
        with pytest.raises(ValueError, match="empty"):
            parse_klines(to_stream(""))

    def test_non_monotone_timestamps_raise(self):
        text = ("1678000060000,1.0,1.001,0.999,1.0,1\n"
                "1678000000000,1.0,1.001,0.999,1.0,1\n")
        with pytest.raises(ValueError, match="increasing"):
            parse_klines(to_stream(text))

    def test_custom_column_map(self):
        text = "1.0,1.001,0.999,1.0,1678000000000,3\n"
        cols = {"open": 0, "high": 1, "low": 2, "close": 3,
                "open_time": 4, "volume": 5}
        res = parse_klines(to_stream(text), columns=cols)
        assert res.records[0].open_time == 1678000000000
        assert res.records[0].volume == 3.0

    def test_no_silent_loss(self):
        text = ("1678000000000,1.0,1.001,0.999,1.0,1\n"
                "bogus row,,,,,\n"
                "1678000120000,1.0,0.9,1.2,1.0,1\n"
                "1678000180000,1.0,1.001,0.999,1.0,1\n")
        res = parse_klines(to_stream(text))
        assert len(res.records) + len(res.rejected) == res.rows_read == 4


class TestToMispricing:
    def test_par_prices_give_zero(self):
        series = to_mispricing([bar(i, 1.0) for i in range(5)])
        assert np.all(series.mispricing == 0.0)

    def test_close_minus_one(self):
        series = to_mispricing([bar(0, 0.99), bar(1, 0.98), bar(2, 1.00)])
        assert np.allclose(series.mispricing, [-0.01, -0.02, 0.0], atol=1e-15)

    def test_hourly_resample_of_minute_bars(self):
        closes = 1.0 + 0.0001 * np.arange(120)
        recs = [bar(i, float(c)) for i, c in enumerate(closes)]
        series = to_mispricing(recs, resample_ms=60 * MIN)
        assert len(series) == 2  # ceil(120/60)
        assert series.mispricing[0] == pytest.approx(closes[59] - 1.0, abs=1e-15)
        assert series.mispricing[1] == pytest.approx(closes[119] - 1.0, abs=1e-15)
        assert series.resolution_ms == 60 * MIN

    def test_ceil_length_for_partial_bucket(self):
        recs = [bar(i, 1.0) for i in range(61)]
        series = to_mispricing(recs, resample_ms=60 * MIN)
        assert len(series) == 2

    def test_gap_forward_fill_and_report(self):
        recs = [bar(0, 0.99), bar(3, 0.97)]  # minutes 1, 2 missing
        series = to_mispricing(recs, resample_ms=MIN, bar_ms=MIN)
        assert len(series) == 4
        assert np.allclose(series.mispricing, [-0.01, -0.01, -0.01, -0.03])
        assert series.gaps == (1, 2)

    def test_resample_must_be_multiple(self):
        recs = [bar(i, 1.0) for i in range(5)]
        with pytest.raises(ValueError, match="multiple"):
            to_mispricing(recs, resample_ms=90_000)
        with pytest.raises(ValueError, match="multiple"):
            to_mispricing(recs, resample_ms=30_000)

    def test_bar_length_inference_robust_to_gaps(self):
        recs = [bar(0, 1.0), bar(5, 1.0), bar(6, 1.0)]
        assert infer_bar_ms(recs) == MIN

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(0, 400), min_size=2, max_size=40, unique=True),
           st.integers(1, 5))
    def test_bucket_boundaries_from_timestamps(self, offsets, factor):
        offsets = sorted(offsets)
        recs = [bar(i, 1.0 + 0.001 * (k % 7)) for k, i in enumerate(offsets)]
        res_ms = factor * MIN
        series = to_mispricing(recs, resample_ms=res_ms, bar_ms=MIN)
        span = offsets[-1] - offsets[0]
        assert len(series) == span // factor + 1
        assert series.timestamps[0] == recs[0].open_time
        assert np.all(np.diff(series.timestamps) == res_ms)
        # bucket value equals the last close landing in that bucket
        for k, i in enumerate(offsets):
            b = (i - offsets[0]) // factor
            later = [j for j in offsets if (j - offsets[0]) // factor == b]
            if i == max(later):
                assert series.mispricing[b] == pytest.approx(
                    recs[k].close - 1.0, abs=1e-15)
