"""Candlestick (kline) file ingestion and mispricing extraction.

Input is CSV with the pinned column order

    open_time, open, high, low, close, volume[, close_time, ...]

(`open_time` in epoch milliseconds; extra trailing columns are ignored; a
different layout can be supplied via an explicit column index map). Rows
with unparseable numerics or inconsistent OHLC bounds are rejected with
their line numbers rather than dropped silently: rows read = records kept +
rows rejected.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "KlineRecord",
    "KlineParseResult",
    "ObservedSeries",
    "parse_klines",
    "to_mispricing",
    "DEFAULT_COLUMNS",
]

DEFAULT_COLUMNS = {"open_time": 0, "open": 1, "high": 2, "low": 3,
                   "close": 4, "volume": 5}


@dataclass(frozen=True)
class KlineRecord:
    """One candlestick bar."""

    open_time: int  # epoch milliseconds
    open: float
    high: float
    low: float
    close: float
    volume: float


@dataclass(frozen=True)
class KlineParseResult:
    records: tuple[KlineRecord, ...]
    rejected: tuple[tuple[int, str], ...]  # (1-based line number, reason)
    rows_read: int

    def require_clean(self) -> tuple[KlineRecord, ...]:
        if self.rejected:
            line, reason = self.rejected[0]
            raise ValueError(
                f"{len(self.rejected)} rejected rows (first: line {line}: {reason})"
            )
        return self.records


@dataclass(frozen=True)
class ObservedSeries:
    """Observed mispricing series at a fixed resolution.

    ``mispricing`` is close - 1 in dollars; ``timestamps`` are the epoch
    milliseconds of each bucket start, strictly increasing. ``gaps`` lists
    bucket indices that had no source bar and were forward-filled.
    """

    timestamps: np.ndarray  # (n,) int64 epoch ms
    mispricing: np.ndarray  # (n,) dollars
    resolution_ms: int
    gaps: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64).copy()
        mp = np.asarray(self.mispricing, dtype=float).copy()
        if ts.size != mp.size:
            raise ValueError("timestamps and mispricing must have equal length")
        if ts.size >= 2 and not np.all(np.diff(ts) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(mp)):
            raise ValueError("mispricing entries must be finite")
        if self.resolution_ms <= 0:
            raise ValueError("resolution must be positive")
        ts.flags.writeable = False
        mp.flags.writeable = False
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "mispricing", mp)

    def __len__(self) -> int:
        return self.timestamps.size


def parse_klines(source, fmt: str = "csv", has_header: bool = False,
                 columns: dict | None = None) -> KlineParseResult:
    """Parse a kline CSV stream or path into records plus a rejection report.

    Raises on an empty input and on non-monotone timestamps among accepted
    rows; malformed individual rows are reported, not fatal.
    """
    if fmt != "csv":
        raise ValueError(f"unsupported kline format: {fmt!r}")
    cols = DEFAULT_COLUMNS if columns is None else columns
    need = max(cols.values()) + 1

    if hasattr(source, "read"):
        reader = csv.reader(source)
        close_fh = None
    else:
        close_fh = open(source, "r", newline="")
        reader = csv.reader(close_fh)

    records: list[KlineRecord] = []
    rejected: list[tuple[int, str]] = []
    rows_read = 0
    try:
        for line_no, row in enumerate(reader, start=1):
            if line_no == 1 and has_header:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            rows_read += 1
            if len(row) < need:
                rejected.append((line_no, f"expected >= {need} columns, got {len(row)}"))
                continue
            try:
                rec = KlineRecord(
                    open_time=int(float(row[cols["open_time"]])),
                    open=float(row[cols["open"]]),
                    high=float(row[cols["high"]]),
                    low=float(row[cols["low"]]),
                    close=float(row[cols["close"]]),
                    volume=float(row[cols["volume"]]),
                )
            except ValueError as exc:
                rejected.append((line_no, f"unparseable numeric: {exc}"))
                continue
            if not all(np.isfinite(v) for v in
                       (rec.open, rec.high, rec.low, rec.close, rec.volume)):
                rejected.append((line_no, "non-finite field"))
                continue
            if min(rec.open, rec.close) <= 0:
                rejected.append((line_no, "non-positive price"))
                continue
            if not (rec.low <= min(rec.open, rec.close)
                    <= max(rec.open, rec.close) <= rec.high):
                rejected.append(
                    (line_no,
                     f"OHLC violation: low={rec.low} high={rec.high} "
                     f"open={rec.open} close={rec.close}"))
                continue
            records.append(rec)
    finally:
        if close_fh is not None:
            close_fh.close()

    if rows_read == 0:
        raise ValueError("empty kline input")
    times = [r.open_time for r in records]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("open_time not strictly increasing across records")
    return KlineParseResult(tuple(records), tuple(rejected), rows_read)


def infer_bar_ms(records) -> int:
    """Bar length = smallest positive timestamp step (robust to gaps)."""
    times = np.array([r.open_time for r in records], dtype=np.int64)
    if times.size < 2:
        raise ValueError("need at least two records to infer the bar length")
    return int(np.diff(times).min())


def to_mispricing(records, resample_ms: int | None = None,
                  bar_ms: int | None = None) -> ObservedSeries:
    """Bucket closes into the target resolution and convert to mispricing.

    Buckets take the last close observed inside them (mispricing is a state
    variable, so the bucket-final observation is the correct sample); empty
    buckets forward-fill the previous close and are flagged in ``gaps``.
    ``bar_ms`` overrides the inferred source bar length for feeds whose gaps
    hide it.
    """
    records = list(records)
    if not records:
        raise ValueError("no records")
    if bar_ms is None:
        bar_ms = (infer_bar_ms(records) if len(records) > 1
                  else (resample_ms or 60_000))
    if resample_ms is None:
        resample_ms = bar_ms
    if resample_ms < bar_ms or resample_ms % bar_ms != 0:
        raise ValueError(
            f"resample step {resample_ms} ms must be a positive multiple of "
            f"the bar length {bar_ms} ms"
        )
    t0 = records[0].open_time
    n_buckets = (records[-1].open_time - t0) // resample_ms + 1
    closes = np.full(n_buckets, np.nan)
    for rec in records:
        closes[(rec.open_time - t0) // resample_ms] = rec.close

    gaps: list[int] = []
    for i in range(n_buckets):
        if np.isnan(closes[i]):
            gaps.append(i)
            closes[i] = closes[i - 1] if i > 0 else records[0].close
    return ObservedSeries(
        timestamps=t0 + np.arange(n_buckets, dtype=np.int64) * resample_ms,
        mispricing=closes - 1.0,
        resolution_ms=int(resample_ms),
        gaps=tuple(gaps),
    )


def records_to_csv(records) -> str:
    """Serialize records back to the pinned column order (17 digits)."""
    buf = io.StringIO()
    w = csv.writer(buf)
    for r in records:
        w.writerow([r.open_time] + ["%.17g" % v for v in
                                    (r.open, r.high, r.low, r.close, r.volume)])
    return buf.getvalue()
