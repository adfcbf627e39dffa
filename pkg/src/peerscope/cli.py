"""Operator entry point: crawl, probe, fold, label, analyze, scan-classify,
and simulate subcommands over a profile configuration file.

Single-shot by design: scheduling (the hourly cron cadence) belongs to the
operator's scheduler. Every artifact is written to a temp file and renamed
into place, so partial artifacts are never left looking sealed. One
subcommand at a time per (network, date), enforced with a lock file. Errors
exit non-zero with one machine-parsable line on stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import datetime as dt
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import metrics, netlabel, scan, store
from .crawl import CrawlConfig, CrawlSnapshot, crawl, next_bootstrap
from .liveness import DEFAULT_KINDS, LivenessProber, fold_active, load_probe_results, save_probe_results
from .netlabel import LABELERS, RuleTable, evidence_from_metadata, inherit_labels
from .profiles import (
    BUILTIN_PROFILES,
    FAMILY_BITCOIN,
    FAMILY_KADEMLIA,
    NetworkProfile,
    load_profile_config,
    parse_endpoint,
)
from .simnet import ChurnConfig, SimConfig, SimNetwork
from .store import DayStore, EnrichmentDataset, StoredDay, enrich
from .strategies import strategy_for
from .transport import SimnetTransport, TcpTransport


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------


def _data_dir(args) -> Path:
    root = args.data_dir or os.environ.get("PEERSCOPE_DATA_DIR") or "peerscope-data"
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _profiles(args) -> dict[str, NetworkProfile]:
    config = getattr(args, "config", None) or os.environ.get("PEERSCOPE_CONFIG")
    if config:
        return load_profile_config(config)
    return dict(BUILTIN_PROFILES)


def _profile(args) -> NetworkProfile:
    profiles = _profiles(args)
    try:
        return profiles[args.network]
    except KeyError:
        raise CliError(f"unknown network {args.network!r}") from None


def _seal_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
    return path


@contextlib.contextmanager
def _lock(data_dir: Path, name: str):
    lock_dir = data_dir / "locks"
    lock_dir.mkdir(parents=True, exist_ok=True)
    lock_path = lock_dir / f"{name}.lock"
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise CliError(f"lock held: {lock_path}") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            lock_path.unlink()


def _parse_date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise CliError(f"bad date {text!r} (want YYYY-MM-DD)") from None


def _parse_range(text: str) -> tuple[dt.date, dt.date]:
    if ":" in text:
        lo, hi = text.split(":", 1)
        start, end = _parse_date(lo), _parse_date(hi)
    else:
        start = end = _parse_date(text)
    if end < start:
        raise CliError(f"empty date range {text!r}")
    return start, end


def _dates(span: tuple[dt.date, dt.date]) -> list[dt.date]:
    start, end = span
    out = []
    day = start
    while day <= end:
        out.append(day)
        day += dt.timedelta(days=1)
    return out


def _snapshot_path(data_dir: Path, network: str, date: dt.date) -> Path:
    return data_dir / "snapshots" / network / f"{date.isoformat()}.json"


def _probe_path(data_dir: Path, network: str, date: dt.date, hour: int) -> Path:
    return data_dir / "probes" / network / f"{date.isoformat()}-h{hour:02d}.csv"


def _labels_path(data_dir: Path, network: str, date: dt.date) -> Path:
    return data_dir / "labels" / network / f"{date.isoformat()}.csv"


def _load_snapshot(data_dir: Path, network: str, date: dt.date) -> CrawlSnapshot:
    path = _snapshot_path(data_dir, network, date)
    if not path.exists():
        raise CliError(f"no snapshot for {network}/{date} (expected {path})")
    return CrawlSnapshot.load(path)


def _load_day_probes(data_dir: Path, network: str, date: dt.date):
    probe_dir = data_dir / "probes" / network
    results = []
    if probe_dir.is_dir():
        for path in sorted(probe_dir.glob(f"{date.isoformat()}-h*.csv")):
            results.extend(load_probe_results(path))
    return results


def _rule_table(profile: NetworkProfile, override: str | None) -> RuleTable:
    if override:
        return RuleTable.load(override)
    if profile.rule_table:
        path = Path(profile.rule_table)
        if path.exists():
            return RuleTable.load(path)
        return RuleTable.builtin(path.name)
    raise CliError(f"network {profile.name!r} has no rule table configured")


def _default_labeler(profile: NetworkProfile) -> str:
    if profile.family == FAMILY_BITCOIN:
        return "bitcoincash"
    if profile.family == FAMILY_KADEMLIA:
        if profile.dht_dialect == "explicit-distance":
            return "discv5"
        return "discv4"
    raise CliError(f"no default labeler for family {profile.family!r}")


# ---------------------------------------------------------------------------
# live subcommands
# ---------------------------------------------------------------------------


def _crawl_bootstrap(data_dir: Path, profile: NetworkProfile, date: dt.date,
                     seed: int, sample_size: int = 100) -> list:
    """First crawl uses the profile's hard-coded seeds; re-crawls sample the
    most recent earlier snapshot's responded set."""
    snap_dir = data_dir / "snapshots" / profile.name
    if snap_dir.is_dir():
        earlier = sorted(p for p in snap_dir.glob("*.json") if p.stem < date.isoformat())
        if earlier:
            previous = CrawlSnapshot.load(earlier[-1])
            sample = next_bootstrap(previous, seed=seed, sample_size=sample_size)
            if sample:
                return sample
    return list(profile.bootstrap)


def cmd_crawl(args) -> int:
    profile = _profile(args)
    data_dir = _data_dir(args)
    date = _parse_date(args.date) if args.date else dt.date.today()
    if profile.family != FAMILY_BITCOIN:
        raise CliError(f"live crawling is wired for the bitcoin family only; "
                       f"run family {profile.family!r} against a simulation")
    if args.bootstrap:
        bootstrap = [parse_endpoint(b) for b in args.bootstrap]
    else:
        bootstrap = _crawl_bootstrap(data_dir, profile, date, args.seed)
    if not bootstrap:
        raise CliError(f"network {profile.name!r} has no bootstrap endpoints")
    config = CrawlConfig(
        network=profile.name,
        bootstrap=bootstrap,
        max_attempts=args.max_attempts,
        attempt_timeout=args.timeout,
        parallelism=args.parallelism,
    )
    strategy = strategy_for(profile, TcpTransport(), seed=args.seed)
    status = None
    if args.status:
        status = lambda counters: print(json.dumps(counters, sort_keys=True), file=sys.stderr)
    with _lock(data_dir, f"{profile.name}-{date.isoformat()}"):
        snapshot = crawl(config, strategy, status=status)
        path = _seal_text(_snapshot_path(data_dir, profile.name, date), snapshot.to_json() + "\n")
    print(f"snapshot sealed: {path} ({len(snapshot.records)} records, "
          f"{len(snapshot.responded())} responded)")
    return 0


def cmd_probe(args) -> int:
    profile = _profile(args)
    data_dir = _data_dir(args)
    date = _parse_date(args.date)
    hour = args.hour if args.hour is not None else dt.datetime.utcnow().hour
    snapshot = _load_snapshot(data_dir, profile.name, date)
    prober = LivenessProber(profile, TcpTransport(), seed=args.seed, timeout=args.timeout)
    results = []
    with _lock(data_dir, f"{profile.name}-{date.isoformat()}-h{hour:02d}"):
        for ep in sorted(snapshot.records):
            results.extend(prober.probe(ep, hour=hour))
        path = _probe_path(data_dir, profile.name, date, hour)
        tmp = path.with_name(path.name + ".tmp")
        path.parent.mkdir(parents=True, exist_ok=True)
        save_probe_results(tmp, profile.name, results)
        os.replace(tmp, path)
    print(f"probes sealed: {path} ({len(results)} results)")
    return 0


def cmd_fold(args) -> int:
    network = args.network
    data_dir = _data_dir(args)
    date = _parse_date(args.date)
    snapshot = _load_snapshot(data_dir, network, date)
    results = _load_day_probes(data_dir, network, date)
    labels_file = _labels_path(data_dir, network, date)
    labels = netlabel.load_labels(labels_file) if labels_file.exists() else []
    activity = fold_active(results, snapshot, date)
    enrichment = []
    if args.enrichment:
        enrichment = enrich(activity, EnrichmentDataset.load(args.enrichment))
    day = StoredDay(network=network, date=date, activity=activity,
                    tables=snapshot.tables, labels=labels, enrichment=enrichment)
    with _lock(data_dir, f"{network}-{date.isoformat()}"):
        path = DayStore(data_dir / "store").put_day(day)
    print(f"day sealed: {path} (active {len(activity.active)}, "
          f"discovered {len(activity.discovered)})")
    return 0


def cmd_label(args) -> int:
    # artifacts may be filed under a name with no profile (e.g. simulated
    # networks); then the labeler must be named explicitly
    profile = _profiles(args).get(args.network)
    data_dir = _data_dir(args)
    span = _parse_range(args.range)
    if profile is None and not args.labeler:
        raise CliError(f"unknown network {args.network!r}: pass --labeler explicitly")
    labeler_name = args.labeler or _default_labeler(profile)
    if labeler_name not in LABELERS:
        raise CliError(f"unknown labeler {labeler_name!r}")
    if profile is not None:
        rules = _rule_table(profile, args.rule_table)
    elif args.rule_table:
        rules = RuleTable.load(args.rule_table)
    else:
        rules = RuleTable.builtin(f"rules_{labeler_name}.json")
    evidence = []
    network = args.network
    for date in _dates(span):
        path = _snapshot_path(data_dir, network, date)
        if not path.exists():
            continue
        snapshot = CrawlSnapshot.load(path)
        for ep in sorted(snapshot.records):
            meta = snapshot.metadata.get(ep)
            if snapshot.records[ep].responded and meta:
                evidence.append(evidence_from_metadata(ep[0], date, meta))
            else:
                evidence.append(netlabel.LabelEvidence(address=ep[0], date=date))
    if not evidence:
        raise CliError(f"no snapshots found in {args.range}")
    labels = netlabel.label_series(evidence, rules, labeler_name)
    labels = inherit_labels(labels, window_days=args.window)
    by_date: dict[dt.date, list] = {}
    for row in labels:
        by_date.setdefault(row.date, []).append(row)
    for date, rows in sorted(by_date.items()):
        path = _labels_path(data_dir, network, date)
        tmp = path.with_name(path.name + ".tmp")
        path.parent.mkdir(parents=True, exist_ok=True)
        netlabel.save_labels(tmp, network, rows)
        os.replace(tmp, path)
    labeled = sum(1 for row in labels if row.label != netlabel.LABEL_NONE)
    print(f"labeled {labeled}/{len(labels)} address-days across {len(by_date)} files")
    return 0


def cmd_scan_classify(args) -> int:
    profile = _profile(args)
    data_dir = _data_dir(args)
    known = [p for p in _profiles(args).values() if p.magic is not None]
    classified = scan.classify_capture(profile, args.capture, known_profiles=known)
    activity = None
    if args.activity_date:
        day = DayStore(data_dir / "store").get_day(profile.name, _parse_date(args.activity_date))
        if day is None:
            raise CliError(f"no stored day {profile.name}/{args.activity_date}")
        activity = day.activity
    report = scan.scan_report(classified, crawl_activity=activity, network=profile.name,
                              success_count=args.success_count)
    out = data_dir / "reports" / f"scan-{profile.name}-{Path(args.capture).stem}.json"
    _seal_text(out, report.to_json() + "\n")
    print(report.to_text())
    print(f"report sealed: {out}")
    return 0


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def _series_from_store(day_store: DayStore, network: str, span) -> metrics.DailyActivitySeries:
    days = []
    for date in _dates(span):
        day = day_store.get_day(network, date)
        if day is not None:
            days.append((date, day.activity.active))
    if not days:
        raise CliError(f"no stored days for {network} in range")
    return metrics.DailyActivitySeries(network=network, days=days)


def _maybe_plot(args, rows, header, title: str) -> None:
    if not getattr(args, "plot", None):
        return
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = [r[0] for r in rows]
    ys = [r[1] if r[1] is not None else float("nan") for r in rows]
    fig, ax = plt.subplots(figsize=(8, 4))
    if all(isinstance(x, (int, float)) for x in xs):
        ax.plot(xs, ys, marker="o")
    else:
        ax.plot(range(len(xs)), ys, marker="o")
        ax.set_xticks(range(len(xs)))
        ax.set_xticklabels([str(x) for x in xs], rotation=45, ha="right", fontsize=7)
    ax.set_xlabel(header[0])
    ax.set_ylabel(header[1])
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(args.plot, dpi=120)
    plt.close(fig)
    print(f"plot written: {args.plot}")


def cmd_analyze(args) -> int:
    data_dir = _data_dir(args)
    day_store = DayStore(data_dir / "store")
    span = _parse_range(args.range)
    report_dir = data_dir / "reports"
    name = f"{args.metric}-{args.network}-{span[0].isoformat()}-{span[1].isoformat()}"
    table_path = report_dir / f"{name}.json"
    series_path = report_dir / f"{name}.csv"

    if args.metric in ("retention", "new-rate"):
        series = _series_from_store(day_store, args.network, span)
        fn = metrics.retention if args.metric == "retention" else metrics.new_rate
        rows = metrics.daily_rates(series, fn)
        values = [v for _, v in rows if v is not None]
        payload = {
            "metric": args.metric,
            "network": args.network,
            "days": len(rows),
            "gaps": sum(1 for _, v in rows if v is None),
            "median": metrics.median_low(values) if values else None,
        }
        _seal_text(table_path, json.dumps(payload, indent=1, sort_keys=True) + "\n")
        _emit_series(series_path, [(d.isoformat(), v) for d, v in rows], ("date", args.metric))
        _maybe_plot(args, [(d.isoformat(), v) for d, v in rows], ("date", args.metric), name)
    elif args.metric == "streaks":
        series = _series_from_store(day_store, args.network, span)
        streaks, cdf = metrics.uptime_streaks(series, span)
        payload = {
            "metric": "streaks",
            "network": args.network,
            "addresses": len(streaks),
            "window_days": (span[1] - span[0]).days + 1,
            "full_window_fraction": (
                sum(1 for s in streaks.values() if s == (span[1] - span[0]).days + 1) / len(streaks)
                if streaks else None
            ),
        }
        _seal_text(table_path, json.dumps(payload, indent=1, sort_keys=True) + "\n")
        _emit_series(series_path, cdf, ("streak_days", "cum_fraction"))
        _maybe_plot(args, cdf, ("streak_days", "cum_fraction"), name)
    elif args.metric == "hhi":
        rows = []
        for date in _dates(span):
            day = day_store.get_day(args.network, date)
            if day is None or not day.enrichment:
                rows.append((date.isoformat(), None))
                continue
            shares = metrics.as_shares(day.enrichment)
            rows.append((date.isoformat(), metrics.hhi(shares)))
        values = [v for _, v in rows if v is not None]
        payload = {"metric": "hhi", "network": args.network,
                   "median": metrics.median_low(values) if values else None}
        _seal_text(table_path, json.dumps(payload, indent=1, sort_keys=True) + "\n")
        _emit_series(series_path, rows, ("date", "hhi"))
        _maybe_plot(args, rows, ("date", "hhi"), name)
    elif args.metric == "geo":
        day = _require_day(day_store, args.network, span[0])
        if not day.enrichment:
            raise CliError(f"no enrichment stored for {args.network}/{span[0]}; "
                           f"fold (or simulate) with an enrichment dataset first")
        shares = metrics.geo_shares(day.enrichment, level=args.level, top=args.top)
        table = metrics.percentage_table(shares)
        _seal_text(table_path, json.dumps({"metric": "geo", "level": args.level,
                                           "percent": table}, indent=1, sort_keys=True) + "\n")
        _emit_series(series_path, sorted(table.items()), (args.level, "percent"))
        _maybe_plot(args, sorted(table.items()), (args.level, "percent"), name)
    elif args.metric == "composition":
        # a range medians the daily proportions (never proportions of medians)
        daily = []
        for date in _dates(span):
            day = day_store.get_day(args.network, date)
            if day is None:
                continue
            probes = _load_day_probes(data_dir, args.network, date)
            daily.append(metrics.composition(day.activity, day.enrichment or None, probes or None))
        if not daily:
            raise CliError(f"no stored days for {args.network} in range")
        comp = daily[0] if len(daily) == 1 else metrics.median_composition(daily)
        _seal_text(table_path, json.dumps({"metric": "composition", "days": len(daily), **comp},
                                          indent=1, sort_keys=True) + "\n")
        _emit_series(series_path, sorted(comp.items()), ("attribute", "value"))
    elif args.metric == "tables":
        day = _require_day(day_store, args.network, span[0])
        stats = metrics.peer_table_stats(day.tables, day.activity.active)
        payload = {"metric": "tables", "network": args.network,
                   "table_size": stats.table_size, "active_in_table": stats.active_in_table,
                   "prop_active": stats.prop_active, "prop_covered": stats.prop_covered}
        _seal_text(table_path, json.dumps(payload, indent=1, sort_keys=True) + "\n")
        _emit_series(series_path, sorted(payload.items())[1:], ("stat", "value"))
    elif args.metric == "coverage":
        day = _require_day(day_store, args.network, span[0])
        hosts_active = day.activity.active
        order, curve = metrics.greedy_coverage(day.tables, hosts_active)
        payload = {"metric": "coverage", "network": args.network,
                   "tables_to_full": len(curve), "final_coverage": curve[-1] if curve else 0.0}
        _seal_text(table_path, json.dumps(payload, indent=1, sort_keys=True) + "\n")
        rows = [(i + 1, c) for i, c in enumerate(curve)]
        _emit_series(series_path, rows, ("tables_unioned", "coverage"))
        _maybe_plot(args, rows, ("tables_unioned", "coverage"), name)
    elif args.metric == "overlap":
        networks = args.network.split(",")
        activities = {}
        for net_name in networks:
            day = day_store.get_day(net_name, span[0])
            if day is None:
                raise CliError(f"no stored day {net_name}/{span[0]}")
            activities[net_name] = day.activity.active
        names, matrix = metrics.overlap_matrix(activities)
        payload = {"metric": "overlap", "date": span[0].isoformat(),
                   "networks": names, "matrix_percent": matrix}
        _seal_text(table_path, json.dumps(payload, indent=1, sort_keys=True) + "\n")
        rows = [(a, b, matrix[i][j]) for i, a in enumerate(names) for j, b in enumerate(names)]
        _emit_series(series_path, rows, ("from", "to", "percent"))
    else:
        raise CliError(f"unknown metric {args.metric!r}")
    print(f"analysis sealed: {table_path}")
    return 0


def _require_day(day_store: DayStore, network: str, date: dt.date) -> StoredDay:
    day = day_store.get_day(network, date)
    if day is None:
        raise CliError(f"no stored day {network}/{date.isoformat()}")
    return day


def _emit_series(path: Path, rows, header) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    metrics.write_series(tmp, rows, header)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


@dataclass
class SimSpec:
    """Parsed simulate config: the simnet parameters plus pipeline knobs."""

    network: str = "simnet"
    sim: SimConfig = field(default_factory=SimConfig)
    days: int = 1
    start_date: dt.date = dt.date(2025, 1, 1)
    parallelism: int = 1
    probe_hours: int = 24
    enrichment: str | None = None
    labeler: str | None = None
    rule_table: str | None = None

    @classmethod
    def load(cls, path: str | Path) -> "SimSpec":
        doc = yaml.safe_load(Path(path).read_text()) or {}
        churn = doc.get("churn") or {}
        sim = SimConfig(
            seed=int(doc.get("seed", 0)),
            peer_count=int(doc.get("peers", 100)),
            reachable_fraction=float(doc.get("reachable_fraction", 1.0)),
            family=doc.get("family", "bitcoin"),
            profile_name=doc.get("profile", "bitcoin"),
            table_fill=int(doc.get("table_fill", 64)),
            k=int(doc.get("k", 16)),
            addr_cache_ttl=int(doc.get("addr_cache_ttl", 24)),
            churn=ChurnConfig(
                leave_prob=float(churn.get("leave_prob", 0.0)),
                arrivals_per_day=float(churn.get("arrivals_per_day", 0.0)),
            ),
            decoy_count=int(doc.get("decoys", 0)),
            client_mix=tuple((str(a), float(w)) for a, w in doc.get("client_mix", [])) or None,
        )
        base = Path(path).parent
        enrichment = doc.get("enrichment")
        rule_table = doc.get("rule_table")
        return cls(
            network=doc.get("network", "simnet"),
            sim=sim,
            days=int(doc.get("days", 1)),
            start_date=dt.date.fromisoformat(str(doc.get("start_date", "2025-01-01"))),
            parallelism=int(doc.get("parallelism", 1)),
            probe_hours=int(doc.get("probe_hours", 24)),
            enrichment=str(base / enrichment) if enrichment else None,
            labeler=doc.get("labeler"),
            rule_table=str(base / rule_table) if rule_table else None,
        )


def run_simulation(spec: SimSpec, data_dir: Path) -> dict:
    """Build the simnet and run the whole pipeline against it, one simulated
    day at a time. Everything is logical-clock driven, so two runs with one
    seed produce byte-identical artifacts."""
    net = SimNetwork.build(spec.sim)
    transport = SimnetTransport(net)
    day_store = DayStore(data_dir / "store")
    profile = net.profile
    dataset = EnrichmentDataset.load(spec.enrichment) if spec.enrichment else None
    rules = None
    if spec.labeler:
        if spec.labeler not in LABELERS:
            raise CliError(f"unknown labeler {spec.labeler!r}")
        if spec.rule_table:
            rules = RuleTable.load(spec.rule_table)
        elif profile.rule_table:
            rules = RuleTable.builtin(Path(profile.rule_table).name)
        else:
            rules = RuleTable.builtin(f"rules_{spec.labeler}.json")

    truth_path = data_dir / "reports" / f"ground-truth-{spec.network}.json"
    truth_path.parent.mkdir(parents=True, exist_ok=True)
    net.dump_ground_truth(truth_path)

    summary = {"network": spec.network, "seed": spec.sim.seed, "days": []}
    strategy = strategy_for(profile, transport, seed=spec.sim.seed)
    for day_index in range(spec.days):
        date = spec.start_date + dt.timedelta(days=day_index)
        config = CrawlConfig(
            network=spec.network,
            bootstrap=list(net.bootstrap),
            max_attempts=2,
            attempt_timeout=5.0,
            parallelism=spec.parallelism,
        )
        snapshot = crawl(config, strategy, clock=lambda: float(net.hour), sleep=None)
        _seal_text(_snapshot_path(data_dir, spec.network, date), snapshot.to_json() + "\n")

        prober = LivenessProber(profile, transport, strategy=strategy, seed=spec.sim.seed)
        kinds = DEFAULT_KINDS.get(profile.family)
        results = []
        for slot in range(spec.probe_hours):
            if slot:
                net.advance_hours(1)
            for ep in sorted(snapshot.records):
                results.extend(prober.probe(ep, kinds=kinds, hour=net.hour))
        probe_file = _probe_path(data_dir, spec.network, date, 0)
        probe_file.parent.mkdir(parents=True, exist_ok=True)
        tmp = probe_file.with_name(probe_file.name + ".tmp")
        save_probe_results(tmp, spec.network, results)
        os.replace(tmp, probe_file)

        labels = []
        if rules is not None:
            evidence = []
            for ep in sorted(snapshot.records):
                meta = snapshot.metadata.get(ep)
                if snapshot.records[ep].responded and meta:
                    evidence.append(evidence_from_metadata(ep[0], date, meta))
                else:
                    evidence.append(netlabel.LabelEvidence(address=ep[0], date=date))
            labels = netlabel.label_series(evidence, rules, spec.labeler)
            tmp_labels = _labels_path(data_dir, spec.network, date)
            tmp = tmp_labels.with_name(tmp_labels.name + ".tmp")
            tmp_labels.parent.mkdir(parents=True, exist_ok=True)
            netlabel.save_labels(tmp, spec.network, labels)
            os.replace(tmp, tmp_labels)

        activity = fold_active(results, snapshot, date)
        enrichment = enrich(activity, dataset) if dataset else []
        day_store.put_day(StoredDay(network=spec.network, date=date, activity=activity,
                                    tables=snapshot.tables, labels=labels, enrichment=enrichment))

        truth_active = net.active_hosts()
        summary["days"].append({
            "date": date.isoformat(),
            "discovered": len(activity.discovered),
            "table_known": len({ep[0] for ep in net.table_known()}),
            "active": len(activity.active),
            "ground_truth_active": len(truth_active),
            "active_matches_truth": activity.active == truth_active,
            "ad_ratio": round(metrics.ad_ratio(activity), 6),
        })
        report = net.advance_day()
        summary["days"][-1]["churn_left"] = len(report.left)
        summary["days"][-1]["churn_joined"] = len(report.joined)

    _seal_text(data_dir / "reports" / f"simulate-{spec.network}.json",
               json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return summary


def cmd_simulate(args) -> int:
    spec = SimSpec.load(args.spec)
    data_dir = _data_dir(args)
    with _lock(data_dir, f"simulate-{spec.network}"):
        summary = run_simulation(spec, data_dir)
    last = summary["days"][-1]
    print(f"simulated {len(summary['days'])} day(s) of {spec.network}: "
          f"day {last['date']} active={last['active']} "
          f"truth={last['ground_truth_active']} ad={last['ad_ratio']}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="peerscope",
                                     description="p2p network crawler and measurement toolkit")
    parser.add_argument("--config", help="profile config YAML (default: built-in profiles)")
    parser.add_argument("--data-dir", help="artifact root (default: $PEERSCOPE_DATA_DIR or ./peerscope-data)")
    # the same options are accepted after the subcommand; SUPPRESS keeps a
    # subparser's unset option from clobbering the top-level value
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS)
    common.add_argument("--data-dir", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parser(name, **kwargs):
        return sub.add_parser(name, parents=[common], **kwargs)

    p = add_parser("crawl", help="run one crawl and seal a snapshot")
    p.add_argument("network")
    p.add_argument("--date", help="snapshot date (default: today UTC)")
    p.add_argument("--bootstrap", nargs="*", help="override bootstrap host:port list")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-attempts", type=int, default=10)
    p.add_argument("--timeout", type=float, default=20.0)
    p.add_argument("--parallelism", type=int, default=128)
    p.add_argument("--status", action="store_true",
                   help="emit JSON progress counters on stderr")
    p.set_defaults(fn=cmd_crawl)

    p = add_parser("probe", help="probe a snapshot's endpoints for one hour slot")
    p.add_argument("network")
    p.add_argument("date")
    p.add_argument("--hour", type=int, help="hour slot 0-23 (default: current UTC hour)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timeout", type=float, default=5.0)
    p.set_defaults(fn=cmd_probe)

    p = add_parser("fold", help="fold snapshot+probes(+labels) into the day store")
    p.add_argument("network")
    p.add_argument("date")
    p.add_argument("--enrichment", help="prefix enrichment CSV")
    p.set_defaults(fn=cmd_fold)

    p = add_parser("label", help="label address-days from snapshot handshakes")
    p.add_argument("network")
    p.add_argument("range", help="YYYY-MM-DD or YYYY-MM-DD:YYYY-MM-DD")
    p.add_argument("--labeler", choices=sorted(LABELERS))
    p.add_argument("--rule-table", help="rule table JSON (default: profile's)")
    p.add_argument("--window", type=int, default=7, help="inheritance window in days")
    p.set_defaults(fn=cmd_label)

    p = add_parser("analyze", help="compute a metric over stored days")
    p.add_argument("metric", choices=["retention", "new-rate", "streaks", "hhi", "geo",
                                      "composition", "tables", "coverage", "overlap"])
    p.add_argument("network", help="network name (comma-separated for overlap)")
    p.add_argument("range", help="YYYY-MM-DD or YYYY-MM-DD:YYYY-MM-DD")
    p.add_argument("--level", choices=["country", "continent"], default="continent")
    p.add_argument("--top", type=int, help="keep top-N groups, roll the rest into Other")
    p.add_argument("--plot", help="also render a PNG")
    p.set_defaults(fn=cmd_analyze)

    p = add_parser("scan-classify", help="classify captured scan responses")
    p.add_argument("network")
    p.add_argument("capture", help="address,port,hexresponse lines")
    p.add_argument("--activity-date", help="stored day to intersect with")
    p.add_argument("--success-count", type=int, help="TCP connects reported by the capture stage")
    p.set_defaults(fn=cmd_scan_classify)

    p = add_parser("simulate", help="build a simnet and run the full pipeline against it")
    p.add_argument("spec", help="simulation spec YAML")
    p.set_defaults(fn=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as err:  # single-line machine-parsable failure
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
