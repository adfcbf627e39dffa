"""Decentralization and churn analytics over daily activity series.

Pure functions over immutable inputs. Conventions fixed for
reproducibility: the lower median for even counts, explicit gap markers
(None) instead of bridging missing days, one decimal place in rendered
percentage tables with full precision in machine output.
"""

from __future__ import annotations

import datetime as dt
import ipaddress
import json
from dataclasses import dataclass, field
from pathlib import Path
from statistics import median_low

from .liveness import RESPONDED, DailyActivity, ProbeResult
from .store import CATEGORY_HOSTING, CATEGORY_ISP, UNKNOWN, JoinedRecord


class MetricsError(Exception):
    pass


class EmptyBaseline(MetricsError):
    pass


# ---------------------------------------------------------------------------
# activity series
# ---------------------------------------------------------------------------


@dataclass
class DailyActivitySeries:
    network: str
    days: list[tuple[dt.date, set[str]]] = field(default_factory=list)

    def __post_init__(self) -> None:
        dates = [d for d, _ in self.days]
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise MetricsError("dates must be strictly increasing")

    @property
    def dates(self) -> list[dt.date]:
        return [d for d, _ in self.days]

    def active(self, date: dt.date) -> set[str] | None:
        for d, s in self.days:
            if d == date:
                return s
        return None

    def gaps(self) -> list[dt.date]:
        """Calendar dates missing between the first and last observation."""
        if not self.days:
            return []
        have = set(self.dates)
        out = []
        day = self.days[0][0]
        while day <= self.days[-1][0]:
            if day not in have:
                out.append(day)
            day += dt.timedelta(days=1)
        return out


def ad_ratio(activity: DailyActivity) -> float:
    """The discovery-hit ratio: active / discovered."""
    if not activity.discovered:
        raise EmptyBaseline("no discovered addresses")
    return len(activity.active) / len(activity.discovered)


def retention(prev_active: set, cur_active: set) -> float:
    """Fraction of the previous day's actives still active."""
    if not prev_active:
        raise EmptyBaseline("previous active set is empty")
    return len(prev_active & cur_active) / len(prev_active)


def new_rate(prev_active: set, cur_active: set) -> float:
    """Today's newcomers as a fraction of yesterday's active count."""
    if not prev_active:
        raise EmptyBaseline("previous active set is empty")
    return len(cur_active - prev_active) / len(prev_active)


def daily_rates(series: DailyActivitySeries, fn=retention) -> list[tuple[dt.date, float | None]]:
    """fn across consecutive days; None marks a gap (never bridged)."""
    out: list[tuple[dt.date, float | None]] = []
    for (d_prev, prev), (d_cur, cur) in zip(series.days, series.days[1:]):
        if (d_cur - d_prev).days != 1 or not prev:
            out.append((d_cur, None))
        else:
            out.append((d_cur, fn(prev, cur)))
    return out


def uptime_streaks(
    series: DailyActivitySeries, window: tuple[dt.date, dt.date]
) -> tuple[dict[str, int], list[tuple[int, float]]]:
    """Longest run of consecutive active days per address within the window,
    plus the CDF over addresses: fraction whose streak is <= x."""
    start, end = window
    wanted = []
    day = start
    while day <= end:
        wanted.append(day)
        day += dt.timedelta(days=1)
    if not set(wanted) <= set(series.dates):
        raise MetricsError("window not fully covered by the series")
    by_date = dict(series.days)
    addresses = set()
    for d in wanted:
        addresses |= by_date[d]
    streaks: dict[str, int] = {}
    for address in addresses:
        best = run = 0
        for d in wanted:
            if address in by_date[d]:
                run += 1
                best = max(best, run)
            else:
                run = 0
        streaks[address] = best
    total = len(streaks)
    cdf = []
    if total:
        for x in range(1, len(wanted) + 1):
            cdf.append((x, sum(1 for s in streaks.values() if s <= x) / total))
    return streaks, cdf


# ---------------------------------------------------------------------------
# concentration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShareVector:
    shares: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        total = sum(v for _, v in self.shares)
        if self.shares and abs(total - 1.0) > 1e-9:
            raise MetricsError(f"shares sum to {total}, not 1")
        if any(not 0.0 <= v <= 1.0 for _, v in self.shares):
            raise MetricsError("every share must be in [0, 1]")

    @classmethod
    def from_counts(cls, counts: dict[str, int]) -> "ShareVector":
        total = sum(counts.values())
        if total == 0:
            raise EmptyBaseline("no members to compute shares over")
        return cls(tuple((k, counts[k] / total) for k in sorted(counts)))

    def as_dict(self) -> dict[str, float]:
        return dict(self.shares)

    def __len__(self) -> int:
        return len(self.shares)


def hhi(shares: ShareVector) -> float:
    """Herfindahl-Hirschman index: sum of squared shares, in [1/M, 1]."""
    return sum(v * v for _, v in shares.shares)


def as_shares(joined: list[JoinedRecord]) -> ShareVector:
    counts: dict[str, int] = {}
    for rec in joined:
        key = str(rec.asn) if rec.asn is not None else UNKNOWN
        counts[key] = counts.get(key, 0) + 1
    return ShareVector.from_counts(counts)


def geo_shares(
    joined: list[JoinedRecord], level: str = "country", top: int | None = None
) -> ShareVector:
    """Share per country or continent; with `top`, the largest N groups stay
    named and the rest roll into 'Other'."""
    if level not in ("country", "continent"):
        raise MetricsError(f"unknown level {level!r}")
    counts: dict[str, int] = {}
    for rec in joined:
        key = rec.country if level == "country" else rec.continent
        counts[key] = counts.get(key, 0) + 1
    if top is not None and len(counts) > top:
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        kept = dict(ranked[:top])
        kept["Other"] = sum(v for _, v in ranked[top:])
        counts = kept
    return ShareVector.from_counts(counts)


def percentage_table(shares: ShareVector, decimals: int = 1) -> dict[str, float]:
    """Rendering convention for report tables: percentages, one decimal."""
    return {k: round(100.0 * v, decimals) for k, v in shares.shares}


# ---------------------------------------------------------------------------
# peer tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PeerTableStats:
    table_size: int
    active_in_table: int
    prop_active: float
    prop_covered: float


def peer_table_stats(tables: dict | list, active: set[str]) -> PeerTableStats:
    """Medians over responders: table size, active entries, per-table active
    fraction, and the share of the whole active set a table covers."""
    table_list = list(tables.values()) if isinstance(tables, dict) else list(tables)
    if not table_list:
        raise EmptyBaseline("no peer tables")
    sizes, active_counts, prop_active, prop_covered = [], [], [], []
    for table in table_list:
        hosts = {e[0] if isinstance(e, tuple) else e for e in table}
        n_active = len(hosts & active)
        sizes.append(len(hosts))
        active_counts.append(n_active)
        prop_active.append(n_active / len(hosts) if hosts else 0.0)
        prop_covered.append(n_active / len(active) if active else 0.0)
    return PeerTableStats(
        table_size=median_low(sizes),
        active_in_table=median_low(active_counts),
        prop_active=median_low(prop_active),
        prop_covered=median_low(prop_covered),
    )


def greedy_coverage(tables: dict, active: set[str]) -> tuple[list, list[float]]:
    """Union tables in order of maximal marginal active coverage.

    Returns (selected table ids, cumulative coverage fractions). Stops when
    no table adds anything; ties break on table id order.
    """
    if not active:
        raise EmptyBaseline("active set is empty")
    remaining = {
        key: {e[0] if isinstance(e, tuple) else e for e in table} & active
        for key, table in tables.items()
    }
    covered: set[str] = set()
    order: list = []
    curve: list[float] = []
    while remaining:
        best_key = None
        best_gain = 0
        for key in sorted(remaining):
            gain = len(remaining[key] - covered)
            if gain > best_gain:
                best_gain = gain
                best_key = key
        if best_key is None:
            break
        covered |= remaining.pop(best_key)
        order.append(best_key)
        curve.append(len(covered) / len(active))
    return order, curve


def overlap_matrix(activities: dict[str, set[str]]) -> tuple[list[str], list[list[float]]]:
    """Cell (i, j): percent of network i's actives also active in j.
    Diagonal is 100 by definition."""
    names = sorted(activities)
    matrix = []
    for a in names:
        row = []
        for b in names:
            if a == b:
                row.append(100.0)
            elif not activities[a]:
                row.append(0.0)
            else:
                row.append(100.0 * len(activities[a] & activities[b]) / len(activities[a]))
        matrix.append(row)
    return names, matrix


# ---------------------------------------------------------------------------
# composition (Table-2-style daily attributes)
# ---------------------------------------------------------------------------


def composition(
    activity: DailyActivity,
    joined: list[JoinedRecord] | None = None,
    probe_results: list[ProbeResult] | None = None,
) -> dict[str, float]:
    """Proportions over the active set: IP version, ISP vs hosting, and
    per-probe-kind response rates."""
    active = activity.active
    if not active:
        raise EmptyBaseline("active set is empty")
    n = len(active)
    v6 = sum(1 for a in active if ipaddress.ip_address(a).version == 6)
    out = {
        "active": float(len(active)),
        "discovered": float(len(activity.discovered)),
        "ad_ratio": ad_ratio(activity),
        "prop_ipv4": (n - v6) / n,
        "prop_ipv6": v6 / n,
    }
    if joined is not None:
        by_addr = {rec.address: rec for rec in joined}
        isp = sum(1 for a in active if a in by_addr and by_addr[a].category == CATEGORY_ISP)
        hosting = sum(1 for a in active if a in by_addr and by_addr[a].category == CATEGORY_HOSTING)
        out["prop_isp"] = isp / n
        out["prop_hosting"] = hosting / n
    if probe_results is not None:
        responders: dict[str, set[str]] = {}
        for r in probe_results:
            if r.outcome == RESPONDED:
                responders.setdefault(r.probe_kind, set()).add(r.endpoint[0])
        for kind, hosts in sorted(responders.items()):
            out[f"prop_{kind}_ping"] = len(hosts & active) / n
    return out


def median_composition(daily: list[dict[str, float]]) -> dict[str, float]:
    """Aggregate per-day composition dicts as the median of daily
    proportions (not the proportion of medians); attributes missing on some
    days are medianed over the days that have them."""
    if not daily:
        raise EmptyBaseline("no daily compositions")
    keys = sorted({k for comp in daily for k in comp})
    return {k: median_low([comp[k] for comp in daily if k in comp]) for k in keys}


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------


def write_table(path: str | Path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def write_series(path: str | Path, rows: list[tuple], header: tuple[str, ...]) -> None:
    """Plot-ready CSV series."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join("" if v is None else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
