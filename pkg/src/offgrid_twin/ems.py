"""Telemetry collector and energy ledger.

The poller reads every registry node once per cycle over a bus object with a
``transact(request, timeout) -> reply | None`` method.  Records go into an
:class:`EnergyLedger`, which is idempotent per ``(node_id, seq)`` and keeps
records ordered by that key whatever the arrival order.  Statistics integrate
the sampled power with the trapezoid rule; spans longer than twice the poll
cadence are treated as gaps and contribute nothing.

Ledger file: one JSON object per line, appended as records arrive.
Snapshot file: a JSON header line, one JSON record per line, then a trailer
line ``#sha256 <hex>`` over every byte before it.
"""

from __future__ import annotations

import bisect
import calendar
import csv
import enum
import functools
import hashlib
import io
import json
import math
import os
import re
from array import array
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path

from .errors import TwinError
from .kernels import integrate_power
from .telemetry import (
    REGISTER_COUNT,
    Function,
    MeterFrame,
    MeterReading,
    NodeRegistry,
    decode_frame,
    encode_frame,
)

DEFAULT_CADENCE = 10.0  # s
DEFAULT_TIMEOUT = 0.2  # s
DEFAULT_RETRIES = 2

INPUT_LINES = ("PV1", "PV2", "PV3", "PV4", "PV5", "PV6", "Generator")
PV_LINES = INPUT_LINES[:6]
OUTPUT_LINES = ("LineGeneral", "Line220VAC", "Line48VDC", "LineEMS")

SNAPSHOT_FORMAT = "offgrid-twin-ledger"
SNAPSHOT_VERSION = 1
REPORT_HEADER = "period,line,generation_Wh,consumption_Wh"

_SEQ_MOD = 1 << 32


class MonotonicityViolation(TwinError):
    """A node's cumulative energy went down: the meter was reset."""


class StorageError(TwinError):
    pass


class IntegrityError(TwinError):
    pass


# ---------------------------------------------------------------------------
# Records and polling
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class TelemetryRecord:
    node_id: int
    line: str
    timestamp: datetime
    seq: int
    voltage: float  # V
    current: float  # A
    power: float  # W
    energy: float  # Wh, cumulative register

    def to_json(self) -> str:
        d = {
            "node_id": self.node_id,
            "line": self.line,
            "timestamp": self.timestamp.isoformat(),
            "seq": self.seq,
            "voltage": self.voltage,
            "current": self.current,
            "power": self.power,
            "energy": self.energy,
        }
        return json.dumps(d, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> TelemetryRecord:
        d = json.loads(text)
        d["timestamp"] = datetime.fromisoformat(d["timestamp"])
        return cls(**d)


@dataclass(frozen=True, slots=True)
class OfflineNode:
    node_id: int
    reason: str  # "timeout", "decode" or "error"


@dataclass(frozen=True, slots=True)
class PollResult:
    records: tuple[TelemetryRecord, ...]
    offline: tuple[OfflineNode, ...]


def _parse_reply(raw: bytes, node_id: int) -> MeterReading:
    frame = decode_frame(raw)
    if frame.node_id != node_id:
        raise ValueError(f"reply from node {frame.node_id}, expected {node_id}")
    if frame.function is Function.ERROR:
        raise LookupError(f"node {node_id} exception {frame.payload.hex()}")
    if frame.function is not Function.REPLY or frame.register_addr != 0:
        raise ValueError("unexpected reply frame")
    return MeterReading.from_registers(frame.payload)


@functools.lru_cache(maxsize=256)
def _read_request(node_id: int) -> bytes:
    return encode_frame(MeterFrame.read(node_id, 0, REGISTER_COUNT))


def poll_cycle(
    registry: NodeRegistry,
    bus,
    timestamp: datetime,
    *,
    timeout: float = DEFAULT_TIMEOUT,
    retries: int = DEFAULT_RETRIES,
    seq: dict[int, int] | None = None,
) -> PollResult:
    """Read every node once (plus ``retries`` more attempts on failure).

    ``seq`` holds the per-node sequence counters and is advanced for every
    node, polled successfully or not, so a lost cycle leaves a hole.  A node
    that fails every attempt is reported offline and never blocks the rest.
    """
    if not len(registry):
        raise ValueError("registry is empty")
    seq = {} if seq is None else seq
    records, offline = [], []
    for node in registry:
        n = seq.get(node.node_id, -1) + 1
        seq[node.node_id] = n % _SEQ_MOD
        request = _read_request(node.node_id)
        reason = "timeout"
        for _ in range(retries + 1):
            raw = bus.transact(request, timeout)
            if raw is None:
                reason = "timeout"
                continue
            try:
                reading = _parse_reply(raw, node.node_id)
            except LookupError:
                reason = "error"
                continue
            except (TwinError, ValueError):
                reason = "decode"
                continue
            records.append(
                TelemetryRecord(
                    node.node_id, node.line, timestamp, seq[node.node_id],
                    reading.voltage, reading.current, reading.power, reading.energy,
                )
            )
            break
        else:
            offline.append(OfflineNode(node.node_id, reason))
    return PollResult(tuple(records), tuple(offline))


# ---------------------------------------------------------------------------
# Ledger
# ---------------------------------------------------------------------------


class EnergyLedger:
    """Records keyed by ``(node_id, seq)``; ingestion is idempotent.

    Contents depend only on the set of records ingested, never on arrival
    order.  Meter resets are derived: a record whose energy is below its
    predecessor's (by seq) carries a reset annotation.
    """

    def __init__(self, path: str | Path | None = None):
        self._by_node: dict[int, dict[int, TelemetryRecord]] = {}
        self._seqs: dict[int, list[int]] = {}  # sorted seqs per node
        self._series: dict[int, tuple[array, array, bool]] = {}  # cached (epoch, power, sorted)
        self.path = Path(path) if path is not None else None
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        self._insert(TelemetryRecord.from_json(line))

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_node.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EnergyLedger):
            return NotImplemented
        return self.records() == other.records()

    def __contains__(self, key: tuple[int, int]) -> bool:
        node, seq = key
        return seq in self._by_node.get(node, {})

    def _insert(self, record: TelemetryRecord) -> int | None:
        """Position of the new record among its node's seqs, or None if already present."""
        node = self._by_node.setdefault(record.node_id, {})
        if record.seq in node:
            return None
        node[record.seq] = record
        self._series.pop(record.node_id, None)
        seqs = self._seqs.setdefault(record.node_id, [])
        if not seqs or seqs[-1] < record.seq:
            seqs.append(record.seq)
            return len(seqs) - 1
        i = bisect.bisect_left(seqs, record.seq)
        seqs.insert(i, record.seq)
        return i

    def ingest(self, record: TelemetryRecord) -> bool:
        """Store ``record`` unless its key is already present.

        Returns whether it was new.  Raises :class:`MonotonicityViolation`
        after storing a record that breaks the energy ordering of its node.
        """
        i = self._insert(record)
        if i is None:
            return False
        if self.path is not None:
            try:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(record.to_json() + "\n")
            except OSError as exc:
                raise StorageError(f"ledger append failed: {exc}") from exc
        seqs, by_seq = self._seqs[record.node_id], self._by_node[record.node_id]
        if (i > 0 and record.energy < by_seq[seqs[i - 1]].energy) or (
            i + 1 < len(seqs) and by_seq[seqs[i + 1]].energy < record.energy
        ):
            raise MonotonicityViolation(
                f"node {record.node_id} energy not monotone around seq {record.seq}"
            )
        return True

    def ingest_many(self, records: Iterable[TelemetryRecord]) -> int:
        """Ingest a batch, tolerating resets; returns how many were new."""
        added = 0
        for r in records:
            try:
                added += self.ingest(r)
            except MonotonicityViolation:
                added += 1
        return added

    @property
    def nodes(self) -> tuple[int, ...]:
        return tuple(sorted(self._by_node))

    def node_records(self, node_id: int) -> list[TelemetryRecord]:
        by_seq = self._by_node.get(node_id, {})
        return [by_seq[s] for s in self._seqs.get(node_id, [])]

    def records(self) -> list[TelemetryRecord]:
        return [r for n in self.nodes for r in self.node_records(n)]

    def high_water(self, node_id: int) -> int | None:
        seqs = self._seqs.get(node_id)
        return seqs[-1] if seqs else None

    def resets(self, node_id: int) -> list[TelemetryRecord]:
        """Records annotated as meter resets."""
        recs = self.node_records(node_id)
        return [b for a, b in zip(recs, recs[1:]) if b.energy < a.energy]

    def digest(self) -> str:
        h = hashlib.sha256()
        for r in self.records():
            h.update(r.to_json().encode())
            h.update(b"\n")
        return h.hexdigest()

    def series(self, node_id: int) -> tuple[array, array, bool]:
        """Epoch seconds and power of a node in seq order, plus whether the times are sorted."""
        cached = self._series.get(node_id)
        if cached is None:
            recs = self.node_records(node_id)
            times = array("d", (_epoch(r.timestamp) for r in recs))
            powers = array("d", (r.power for r in recs))
            ordered = all(a <= b for a, b in zip(times, times[1:]))
            cached = self._series[node_id] = (times, powers, ordered)
        return cached

    def lines(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for n in self.nodes:
            first = self._by_node[n][self._seqs[n][0]]
            out.setdefault(first.line, []).append(n)
        return out


def detect_gaps(
    ledger: EnergyLedger, node_id: int, expected_cadence: float = DEFAULT_CADENCE
) -> list[tuple[datetime, datetime]]:
    """Intervals between consecutive records more than twice the cadence apart."""
    if expected_cadence <= 0:
        raise ValueError("cadence must be positive")
    times = sorted(r.timestamp for r in ledger.node_records(node_id))
    limit = 2.0 * expected_cadence
    return [(a, b) for a, b in zip(times, times[1:]) if (b - a).total_seconds() > limit]


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


class Period(str, enum.Enum):
    DAILY = "daily"
    MONTHLY = "monthly"
    ANNUAL = "annual"


@dataclass(frozen=True)
class EnergyStats:
    period: Period
    label: str  # 2021-08-18, 2021-08 or 2021
    per_line: dict[str, float] = field(default_factory=dict)  # Wh

    def _sum(self, names: Sequence[str]) -> float:
        return math.fsum(self.per_line.get(n, 0.0) for n in names)

    @property
    def pv_generation(self) -> float:
        return self._sum(PV_LINES)

    @property
    def generator_generation(self) -> float:
        return self._sum(("Generator",))

    @property
    def consumption(self) -> float:
        return self._sum(OUTPUT_LINES)


def _epoch(t: datetime) -> float:
    return calendar.timegm(t.timetuple()) + t.microsecond / 1e6


def line_energy(
    ledger: EnergyLedger,
    line: str,
    lo: datetime,
    hi: datetime,
    cadence: float = DEFAULT_CADENCE,
) -> float:
    """Trapezoid energy (Wh) of all nodes on ``line`` within ``[lo, hi)``."""
    parts = [
        _integrate_node(ledger, node_id, lo, hi, cadence)
        for node_id in ledger.lines().get(line, [])
    ]
    return math.fsum(parts)


def _integrate_node(
    ledger: EnergyLedger, node_id: int, lo: datetime, hi: datetime, cadence: float, positive: bool = False
) -> float:
    t0, t1 = _epoch(lo), _epoch(hi)
    times, powers, ordered = ledger.series(node_id)
    i, j = 0, len(times)
    if ordered:
        # one neighbour either side keeps the segments straddling the edges
        i = max(bisect.bisect_left(times, t0) - 1, 0)
        j = min(bisect.bisect_right(times, t1) + 1, len(times))
    rel = array("d", (t - t0 for t in times[i:j]))
    p = powers[i:j]
    if positive:
        p = array("d", (max(x, 0.0) for x in p))
    return integrate_power(rel, p, 2.0 * cadence, 0.0, t1 - t0)


def _daily(ledger: EnergyLedger, day: date, lines: Sequence[str], cadence: float) -> EnergyStats:
    lo = datetime(day.year, day.month, day.day)
    hi = lo + timedelta(days=1)
    return EnergyStats(
        Period.DAILY,
        day.isoformat(),
        {line: line_energy(ledger, line, lo, hi, cadence) for line in lines},
    )


def _combine(period: Period, label: str, parts: Sequence[EnergyStats], lines: Sequence[str]) -> EnergyStats:
    return EnergyStats(period, label, {line: math.fsum(p.per_line[line] for p in parts) for line in lines})


def aggregate(
    ledger: EnergyLedger,
    period: Period | str,
    when: date,
    lines: Sequence[str] | None = None,
    cadence: float = DEFAULT_CADENCE,
) -> EnergyStats:
    """Energy per line over the day, month or year containing ``when``.

    Monthly figures are the sum of that month's dailies and annual figures
    the sum of the monthlies, so both are additive by construction.
    """
    period = Period(period)
    lines = tuple(INPUT_LINES + OUTPUT_LINES if lines is None else lines)
    if period is Period.DAILY:
        return _daily(ledger, when, lines, cadence)
    if period is Period.MONTHLY:
        days = calendar.monthrange(when.year, when.month)[1]
        dailies = [_daily(ledger, date(when.year, when.month, d), lines, cadence) for d in range(1, days + 1)]
        return _combine(period, f"{when.year:04d}-{when.month:02d}", dailies, lines)
    months = [aggregate(ledger, Period.MONTHLY, date(when.year, m, 1), lines, cadence) for m in range(1, 13)]
    return _combine(period, f"{when.year:04d}", months, lines)


def register_energy(ledger: EnergyLedger, node_id: int, lo: datetime, hi: datetime) -> float:
    """Energy (Wh) by differencing the cumulative register over ``[lo, hi]``.

    Integration restarts after each meter reset.
    """
    recs = [r for r in ledger.node_records(node_id) if lo <= r.timestamp <= hi]
    total = 0.0
    for a, b in zip(recs, recs[1:]):
        total += b.energy - a.energy if b.energy >= a.energy else b.energy
    return total


def cross_check(
    ledger: EnergyLedger, day: date, cadence: float = DEFAULT_CADENCE
) -> dict[int, tuple[float, float]]:
    """Per node: (trapezoid energy of positive power, register energy) for one day."""
    lo = datetime(day.year, day.month, day.day)
    hi = lo + timedelta(days=1)
    out = {}
    for node_id in ledger.nodes:
        integrated = _integrate_node(ledger, node_id, lo, hi, cadence, positive=True)
        out[node_id] = (integrated, register_energy(ledger, node_id, lo, hi))
    return out


def stats_rows(stats: Iterable[EnergyStats]) -> list[tuple[str, str, float, float]]:
    """(period label, line, generation, consumption) for every line in each stat."""
    rows = []
    for s in stats:
        for line, wh in s.per_line.items():
            if line in INPUT_LINES:
                rows.append((s.label, line, wh, 0.0))
            elif line in OUTPUT_LINES:
                rows.append((s.label, line, 0.0, wh))
    return rows


def export_csv(stats: Iterable[EnergyStats]) -> str:
    buf = io.StringIO()
    buf.write(REPORT_HEADER + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    for label, line, gen, cons in stats_rows(stats):
        writer.writerow([label, line, f"{gen:.0f}", f"{cons:.0f}"])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------

_SNAP_RE = re.compile(r"^ledger-(\d{6})\.snap$")


def _snapshot_paths(directory: Path) -> list[Path]:
    found = []
    for p in directory.iterdir():
        m = _SNAP_RE.match(p.name)
        if m:
            found.append((int(m.group(1)), p))
    return [p for _, p in sorted(found)]


def _serialize(ledger: EnergyLedger) -> bytes:
    records = ledger.records()
    header = {"format": SNAPSHOT_FORMAT, "version": SNAPSHOT_VERSION, "records": len(records)}
    body = json.dumps(header, sort_keys=True) + "\n" + "".join(r.to_json() + "\n" for r in records)
    raw = body.encode("utf-8")
    return raw + f"#sha256 {hashlib.sha256(raw).hexdigest()}\n".encode("ascii")


def snapshot(ledger: EnergyLedger, directory: str | Path, keep: int = 2) -> Path:
    """Write a checksummed copy of the ledger and prune to the newest ``keep``.

    The new file is written under a temporary name and renamed into place, so
    a failed write leaves earlier snapshots untouched.
    """
    if keep < 2:
        raise ValueError("keep must be at least 2")
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        existing = _snapshot_paths(directory)
        number = int(_SNAP_RE.match(existing[-1].name).group(1)) + 1 if existing else 1
        target = directory / f"ledger-{number:06d}.snap"
        tmp = target.with_suffix(".tmp")
        with open(tmp, "wb") as fh:
            fh.write(_serialize(ledger))
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, target)
        for old in _snapshot_paths(directory)[:-keep]:
            old.unlink()
    except OSError as exc:
        raise StorageError(f"snapshot failed: {exc}") from exc
    return target


def list_snapshots(directory: str | Path) -> list[Path]:
    return _snapshot_paths(Path(directory))


def restore(path: str | Path) -> EnergyLedger:
    """Rebuild a ledger from a snapshot, refusing anything that fails the checksum."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read snapshot: {exc}") from exc
    body, sep, trailer = raw.rpartition(b"#sha256 ")
    if not sep or trailer.strip().decode("ascii", "replace") != hashlib.sha256(body).hexdigest():
        raise IntegrityError(f"{path}: checksum mismatch")
    lines = body.decode("utf-8").splitlines()
    try:
        header = json.loads(lines[0])
        if header.get("format") != SNAPSHOT_FORMAT or header.get("version") != SNAPSHOT_VERSION:
            raise IntegrityError(f"{path}: unsupported snapshot {header}")
        if header.get("records") != len(lines) - 1:
            raise IntegrityError(f"{path}: record count mismatch")
        ledger = EnergyLedger()
        for line in lines[1:]:
            ledger._insert(TelemetryRecord.from_json(line))
    except (ValueError, KeyError, TypeError, IndexError) as exc:
        raise IntegrityError(f"{path}: malformed snapshot: {exc}") from exc
    return ledger


def latest_snapshot(directory: str | Path) -> Path | None:
    paths = list_snapshots(directory)
    return paths[-1] if paths else None


# ---------------------------------------------------------------------------
# Collector driver
# ---------------------------------------------------------------------------


@dataclass
class CollectorRun:
    ledger: EnergyLedger
    cycles: int = 0
    offline: dict[int, int] = field(default_factory=dict)  # node -> offline cycles
    resets: int = 0


def collect(
    registry: NodeRegistry,
    bus,
    start: datetime,
    cycles: int,
    *,
    cadence: float = DEFAULT_CADENCE,
    timeout: float = DEFAULT_TIMEOUT,
    retries: int = DEFAULT_RETRIES,
    ledger: EnergyLedger | None = None,
) -> CollectorRun:
    """Run ``cycles`` poll cycles ``cadence`` seconds apart, ingesting as it goes.

    ``bus.clock`` is advanced before each cycle when the bus has one.
    """
    run = CollectorRun(EnergyLedger() if ledger is None else ledger)
    seq: dict[int, int] = {}
    for k in range(cycles):
        t = start + timedelta(seconds=k * cadence)
        if hasattr(bus, "clock"):
            bus.clock = t
        result = poll_cycle(registry, bus, t, timeout=timeout, retries=retries, seq=seq)
        for rec in result.records:
            try:
                run.ledger.ingest(rec)
            except MonotonicityViolation:
                run.resets += 1
        for off in result.offline:
            run.offline[off.node_id] = run.offline.get(off.node_id, 0) + 1
        run.cycles += 1
    return run
