"""Daily EPLG series: rolling outlier thresholds, summaries and quantile plots."""
from __future__ import annotations

import datetime as _dt
import json
import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from layerfid.chainsearch import Chain, ChainSearchError, GateErrorTable, score_chain
from layerfid.metrics import EPLG_MAX, eplg

KINDS = ("optimal_N", "optimal_M", "fixed")
MIN_WINDOW_POINTS = 4
DEFAULT_WINDOW = 15


class MonitorError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class SeriesEntry:
    day: _dt.date
    kind: str
    eplg: float
    chain: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise MonitorError(f"unknown chain kind {self.kind!r}")
        if not 0.0 <= self.eplg <= EPLG_MAX:
            raise MonitorError(f"EPLG {self.eplg} on {self.day} outside [0, {EPLG_MAX}]")

    def to_dict(self) -> dict:
        return {"day": self.day.isoformat(), "kind": self.kind, "chain": list(self.chain), "eplg": self.eplg}


@dataclass(frozen=True)
class EplgSeries:
    entries: tuple[SeriesEntry, ...]

    def __post_init__(self):
        ordered = tuple(sorted(self.entries, key=lambda e: (e.kind, e.day)))
        seen = set()
        for e in ordered:
            if (e.kind, e.day) in seen:
                raise MonitorError(f"duplicate {e.kind} entry on {e.day}")
            seen.add((e.kind, e.day))
        object.__setattr__(self, "entries", ordered)

    def __len__(self):
        return len(self.entries)

    def kinds(self) -> list[str]:
        return sorted({e.kind for e in self.entries})

    def of_kind(self, kind: str) -> "EplgSeries":
        return EplgSeries(tuple(e for e in self.entries if e.kind == kind))

    def days(self) -> list[_dt.date]:
        return [e.day for e in self.entries]

    def values(self) -> list[float]:
        return [e.eplg for e in self.entries]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in self.entries)


def parse_jsonl(text: str) -> EplgSeries:
    """One ``{day, kind, chain, eplg}`` record per non-blank line."""
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            entries.append(SeriesEntry(_dt.date.fromisoformat(rec["day"]), rec.get("kind", "fixed"),
                                       float(rec["eplg"]), tuple(int(q) for q in rec.get("chain", ()))))
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise MonitorError(f"line {lineno}: {exc}") from exc
    return EplgSeries(tuple(entries))


def quantile(values: Sequence[float], p: float) -> float:
    """Linear interpolation between order statistics at position ``p * (n - 1)``."""
    if not values:
        raise MonitorError("quantile of an empty sample")
    xs = sorted(values)
    h = p * (len(xs) - 1)
    lo = math.floor(h)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (h - lo) * (xs[hi] - xs[lo])


def iqr_threshold(values: Sequence[float]) -> float:
    q1 = quantile(values, 0.25)
    q3 = quantile(values, 0.75)
    return q3 + 1.5 * (q3 - q1)


@dataclass(frozen=True)
class OutlierReport:
    window: int
    days: tuple[_dt.date, ...]
    values: tuple[float, ...]
    thresholds: tuple[float | None, ...]
    flags: frozenset[_dt.date]
    gap_days: frozenset[_dt.date] = frozenset()
    static: bool = False

    def to_dict(self) -> dict:
        return {
            "window": self.window,
            "static": self.static,
            "days": [
                {"day": d.isoformat(), "eplg": v, "threshold": t, "flagged": d in self.flags,
                 "window_gap": d in self.gap_days}
                for d, v, t in zip(self.days, self.values, self.thresholds)
            ],
            "flags": sorted(d.isoformat() for d in self.flags),
        }

    def rows(self) -> list[dict]:
        return [{"day": d.isoformat(), "eplg": v, "threshold": "" if t is None else t, "flagged": int(d in self.flags)}
                for d, v, t in zip(self.days, self.values, self.thresholds)]


def rolling_outlier_threshold(series: EplgSeries, window: int = DEFAULT_WINDOW, static: bool = False) -> OutlierReport:
    """Flag days whose EPLG exceeds ``Q3 + 1.5 IQR`` of their trailing window.

    The window holds the current entry and up to ``window - 1`` earlier
    entries. With ``static`` a single threshold from the last ``window``
    entries is applied to every day in it.
    """
    if window < MIN_WINDOW_POINTS:
        raise MonitorError(f"window must be at least {MIN_WINDOW_POINTS}, got {window}")
    if not len(series):
        raise MonitorError("empty series")
    if len(series.kinds()) > 1:
        raise MonitorError(f"series mixes chain kinds {series.kinds()}; select one")
    days = series.days()
    vals = series.values()
    thresholds: list[float | None] = []
    flags, gaps = set(), set()
    if static:
        tail = vals[-window:]
        t = iqr_threshold(tail) if len(tail) >= MIN_WINDOW_POINTS else None
        start = len(vals) - len(tail)
        for i, (d, v) in enumerate(zip(days, vals)):
            thresholds.append(t if i >= start else None)
            if t is not None and i >= start and v > t:
                flags.add(d)
        if (days[-1] - days[start]).days >= window:
            gaps.add(days[-1])
    else:
        for i, (d, v) in enumerate(zip(days, vals)):
            lo = max(0, i - window + 1)
            win = vals[lo: i + 1]
            if len(win) < MIN_WINDOW_POINTS:
                thresholds.append(None)
                continue
            t = iqr_threshold(win)
            thresholds.append(t)
            if v > t:
                flags.add(d)
            if (d - days[lo]).days >= window:
                gaps.add(d)
    return OutlierReport(window, tuple(days), tuple(vals), tuple(thresholds), frozenset(flags),
                         frozenset(gaps), static)


def summary_stats(series: EplgSeries | Sequence[float]) -> dict:
    vals = series.values() if isinstance(series, EplgSeries) else [float(v) for v in series]
    if not vals:
        raise MonitorError("empty series")
    flags = []
    if len(vals) > 1:
        sd = statistics.stdev(vals)
    else:
        sd = 0.0
        flags.append("n=1")
    lo, hi = min(vals), max(vals)
    return {"n": len(vals), "median": statistics.median(vals), "std_dev": sd, "min": lo, "max": hi,
            "abs_range": hi - lo, "flags": flags}


# rational approximation coefficients for the normal quantile (Acklam)
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00)
_P_LOW = 0.02425


def _acklam(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2 * math.log(p))
        return ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1))
    if p > 1 - _P_LOW:
        return -_acklam(1 - p)
    q = p - 0.5
    r = q * q
    return ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
            / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1))


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2))


def normal_ppf(p: float) -> float:
    """Standard normal quantile: rational approximation plus one Halley step."""
    if not 0.0 < p < 1.0:
        raise MonitorError(f"probability {p} outside (0, 1)")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -normal_ppf(1.0 - p)
    z = _acklam(p)
    e = normal_cdf(z) - p
    try:
        u = e * math.sqrt(2 * math.pi) * math.exp(z * z / 2)
    except OverflowError:
        return z
    refined = z - u / (1 + z * u / 2)
    return refined if math.isfinite(refined) else z


def normal_quantile_points(series: EplgSeries | Sequence[float]) -> list[tuple[float, float]]:
    """Sorted values paired with ``Phi^-1((i - 0.5) / n)``."""
    vals = sorted(series.values() if isinstance(series, EplgSeries) else [float(v) for v in series])
    n = len(vals)
    if n < 2:
        raise MonitorError("normal quantile plot needs at least 2 values")
    return [(normal_ppf((i - 0.5) / n), v) for i, v in enumerate(vals, 1)]


@dataclass(frozen=True)
class Reconstruction:
    series: EplgSeries
    omitted: tuple[tuple[_dt.date, str], ...] = field(default=())


def reconstruct_fixed_chain_series(chain: Chain | Sequence[int],
                                   daily_tables: Mapping[_dt.date, GateErrorTable] | Iterable[tuple[_dt.date, GateErrorTable]]
                                   ) -> Reconstruction:
    """EPLG of one fixed chain on every day with a complete error table.

    Days whose table lacks an element of the chain are left out and listed
    in ``omitted`` with the reason.
    """
    if not isinstance(chain, Chain):
        chain = Chain(tuple(chain))
    items = daily_tables.items() if isinstance(daily_tables, Mapping) else daily_tables
    entries, omitted = [], []
    for day, table in sorted(items, key=lambda kv: kv[0]):
        try:
            scored = score_chain(chain, table)
        except ChainSearchError as exc:
            omitted.append((day, str(exc)))
            continue
        entries.append(SeriesEntry(day, "fixed", eplg(scored.score, chain.N), chain.qubits))
    return Reconstruction(EplgSeries(tuple(entries)), tuple(omitted))
