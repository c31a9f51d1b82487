from __future__ import annotations

import random
from datetime import date, datetime, timedelta

import pytest
from hypothesis import given
from hypothesis import strategies as st

from offgrid_twin import ems
from offgrid_twin.ems import (
    EnergyLedger,
    IntegrityError,
    MonotonicityViolation,
    Period,
    StorageError,
    TelemetryRecord,
    aggregate,
    detect_gaps,
    poll_cycle,
    restore,
    snapshot,
)
from offgrid_twin.telemetry import (
    Function,
    MeterFrame,
    MeterReading,
    Node,
    NodeKind,
    NodeRegistry,
    SimulatedBus,
    Source,
    decode_frame,
    encode_frame,
    preset_registry,
)
from offgrid_twin.simulation import load_preset, run_scenario

T0 = datetime(2021, 9, 1)
NODE_A = Node(1, "PV1", NodeKind.DC_METER, 120.0, Source.PV, channel=1)
NODE_B = Node(2, "LineGeneral", NodeKind.AC_METER, 110.0, Source.LOAD, channel=1)


class FakeBus:
    """Answers with a fixed reading; behaviour per node is configurable."""

    def __init__(self, silent=(), empty=(), error=()):
        self.silent, self.empty, self.error = set(silent), set(empty), set(error)
        self.calls: dict[int, int] = {}

    def transact(self, request, timeout=0.2):
        frame = decode_frame(request)
        self.calls[frame.node_id] = self.calls.get(frame.node_id, 0) + 1
        if frame.node_id in self.silent:
            return None
        if frame.node_id in self.empty:
            return encode_frame(MeterFrame.reply(frame.node_id, 0, b""))
        if frame.node_id in self.error:
            return encode_frame(MeterFrame.error(frame.node_id, 0, 2))
        return encode_frame(MeterFrame.reply(frame.node_id, 0, MeterReading(120.0, 5.0, 600.0, 10.0).to_registers()))


def rec(node=1, seq=0, t=T0, power=100.0, energy=0.0, line="PV1") -> TelemetryRecord:
    return TelemetryRecord(node, line, t, seq, 120.0, power / 120.0, power, energy)


class TestPoll:
    def test_failed_node_is_isolated(self):
        bus = FakeBus(silent={2})
        result = poll_cycle(NodeRegistry("r", (NODE_A, NODE_B)), bus, T0, retries=1)
        assert [r.node_id for r in result.records] == [1]
        assert [(o.node_id, o.reason) for o in result.offline] == [(2, "timeout")]
        assert bus.calls == {1: 1, 2: 2}

    def test_empty_payload_is_decode_failure(self):
        result = poll_cycle(NodeRegistry("r", (NODE_A, NODE_B)), FakeBus(empty={1}), T0)
        assert [(o.node_id, o.reason) for o in result.offline] == [(1, "decode")]

    def test_exception_reply(self):
        result = poll_cycle(NodeRegistry("r", (NODE_A,)), FakeBus(error={1}), T0)
        assert result.offline[0].reason == "error"

    def test_record_values(self):
        (r,) = poll_cycle(NodeRegistry("r", (NODE_A,)), FakeBus(), T0).records
        assert (r.voltage, r.current, r.power, r.energy, r.line) == (120.0, 5.0, 600.0, 10.0, "PV1")

    def test_seq_advances_even_when_offline(self):
        seq: dict[int, int] = {}
        reg = NodeRegistry("r", (NODE_A, NODE_B))
        poll_cycle(reg, FakeBus(silent={2}), T0, seq=seq)
        result = poll_cycle(reg, FakeBus(), T0, seq=seq)
        assert [r.seq for r in result.records] == [1, 1]

    def test_empty_registry(self):
        with pytest.raises(ValueError):
            poll_cycle(NodeRegistry("r", ()), FakeBus(), T0)

    def test_forty_healthy_nodes(self):
        scenario = load_preset("future-plan")
        trace = run_scenario(scenario)[:5]
        reg = preset_registry("future-plan")
        bus = SimulatedBus.from_trace(reg, trace, scenario.dt)
        result = poll_cycle(reg, bus, trace[0].time)
        assert len(result.records) == 40 and not result.offline


class TestLedger:
    def test_duplicate_is_noop(self):
        ledger = EnergyLedger()
        assert ledger.ingest(rec(seq=1))
        digest = ledger.digest()
        assert not ledger.ingest(rec(seq=1))
        assert ledger.digest() == digest and len(ledger) == 1

    def test_out_of_order(self):
        ledger = EnergyLedger()
        ledger.ingest(rec(seq=7, energy=7.0))
        ledger.ingest(rec(seq=5, energy=5.0))
        assert [r.seq for r in ledger.node_records(1)] == [5, 7]
        assert ledger.high_water(1) == 7

    def test_reset_annotated_and_raised(self):
        ledger = EnergyLedger()
        ledger.ingest(rec(seq=1, energy=1000.0))
        with pytest.raises(MonotonicityViolation):
            ledger.ingest(rec(seq=2, energy=10.0))
        assert (1, 2) in ledger
        assert [r.seq for r in ledger.resets(1)] == [2]

    def test_late_record_can_reveal_reset(self):
        ledger = EnergyLedger()
        ledger.ingest(rec(seq=3, energy=5.0))
        with pytest.raises(MonotonicityViolation):
            ledger.ingest(rec(seq=2, energy=900.0))

    @given(st.permutations(range(12)), st.lists(st.integers(0, 11), max_size=10))
    def test_order_independent(self, order, dups):
        records = [rec(node=1 + k % 3, seq=k, energy=float(k)) for k in range(12)]
        a, b = EnergyLedger(), EnergyLedger()
        a.ingest_many(records)
        b.ingest_many([records[i] for i in list(order) + dups])
        assert a == b and a.digest() == b.digest()

    def test_jsonl_persistence(self, tmp_path):
        path = tmp_path / "ledger.jsonl"
        ledger = EnergyLedger(path)
        ledger.ingest_many([rec(seq=s, energy=float(s)) for s in range(5)])
        ledger.ingest(rec(seq=2, energy=2.0))  # duplicate does not append
        assert len(path.read_text().splitlines()) == 5
        assert EnergyLedger(path) == ledger

    def test_append_failure_surfaces(self, tmp_path):
        ledger = EnergyLedger(tmp_path / "missing-dir" / "ledger.jsonl")
        with pytest.raises(StorageError):
            ledger.ingest(rec())

    def test_record_json_roundtrip(self):
        r = rec(seq=4, power=123.456, energy=0.1)
        assert TelemetryRecord.from_json(r.to_json()) == r


def _stream(node, line, start, seconds, cadence, power, drop=0.0, seed=0, first_seq=0):
    rng = random.Random(seed)
    out, energy = [], 0.0
    for k in range(int(seconds // cadence) + 1):
        if rng.random() < drop:
            continue
        t = start + timedelta(seconds=k * cadence)
        energy = power * k * cadence / 3600.0
        out.append(TelemetryRecord(node, line, t, first_seq + k, 0.0, 0.0, power, energy))
    return out


class TestGaps:
    def test_one_gap(self):
        start = datetime(2021, 8, 18, 6, 0)
        times = [start + timedelta(seconds=s) for s in (0, 10, 60, 70)]
        ledger = EnergyLedger()
        ledger.ingest_many([rec(seq=i, t=t) for i, t in enumerate(times)])
        assert detect_gaps(ledger, 1, 10.0) == [(times[1], times[2])]

    def test_complete_stream(self):
        ledger = EnergyLedger()
        ledger.ingest_many(_stream(1, "PV1", T0, 600, 10, 1.0))
        assert detect_gaps(ledger, 1, 10.0) == []

    def test_single_record(self):
        ledger = EnergyLedger()
        ledger.ingest(rec())
        assert detect_gaps(ledger, 1, 10.0) == []

    def test_exactly_twice_cadence_is_not_a_gap(self):
        ledger = EnergyLedger()
        ledger.ingest_many([rec(seq=0, t=T0), rec(seq=1, t=T0 + timedelta(seconds=20))])
        assert detect_gaps(ledger, 1, 10.0) == []

    def test_bad_cadence(self):
        with pytest.raises(ValueError):
            detect_gaps(EnergyLedger(), 1, 0.0)


class TestAggregate:
    def test_constant_day(self):
        ledger = EnergyLedger()
        ledger.ingest_many(_stream(1, "PV1", T0, 86400, 10, 1000.0))
        stats = aggregate(ledger, Period.DAILY, T0.date())
        assert stats.pv_generation == pytest.approx(24000.0)
        assert stats.consumption == 0.0

    def test_month_of_identical_days(self):
        ledger = EnergyLedger()
        # September has 30 days; one record per minute
        ledger.ingest_many(_stream(1, "LineGeneral", T0, 30 * 86400, 60, 500.0))
        daily = aggregate(ledger, Period.DAILY, date(2021, 9, 14), cadence=60)
        monthly = aggregate(ledger, "monthly", date(2021, 9, 1), cadence=60)
        assert daily.consumption == pytest.approx(12000.0)
        assert monthly.consumption == pytest.approx(30 * daily.consumption)
        assert monthly.label == "2021-09"

    def test_additivity_exact(self):
        ledger = EnergyLedger()
        ledger.ingest_many(_stream(1, "PV1", T0, 5 * 86400, 60, 321.0, drop=0.3, seed=4))
        ledger.ingest_many(_stream(2, "Generator", T0, 3 * 86400, 60, 77.0, drop=0.1, seed=5))
        monthly = aggregate(ledger, Period.MONTHLY, T0.date(), cadence=60)
        days = [aggregate(ledger, Period.DAILY, date(2021, 9, d), cadence=60) for d in range(1, 31)]
        for line in monthly.per_line:
            assert monthly.per_line[line] == ems.math.fsum(d.per_line[line] for d in days)
        annual = aggregate(ledger, Period.ANNUAL, T0.date(), cadence=60)
        assert annual.pv_generation == monthly.pv_generation
        assert annual.generator_generation == monthly.generator_generation

    def test_gap_contributes_zero(self):
        ledger = EnergyLedger()
        recs = _stream(1, "PV1", T0, 3600, 10, 3600.0)
        ledger.ingest_many(recs[:10] + recs[100:])  # 90 s to 1000 s missing
        stats = aggregate(ledger, Period.DAILY, T0.date())
        assert stats.pv_generation == pytest.approx(3600.0 - 910.0)

    @given(drop=st.floats(0.0, 0.5), seed=st.integers(0, 1000))
    def test_dropping_records_bounded(self, drop, seed):
        full, thin = EnergyLedger(), EnergyLedger()
        full.ingest_many(_stream(1, "PV1", T0, 3600, 10, 1000.0))
        thin.ingest_many(_stream(1, "PV1", T0, 3600, 10, 1000.0, drop=drop, seed=seed))
        a = aggregate(full, Period.DAILY, T0.date()).pv_generation
        b = aggregate(thin, Period.DAILY, T0.date()).pv_generation
        assert 0.0 <= b <= a + 1e-9  # gaps only ever undercount

    def test_midnight_clipping(self):
        ledger = EnergyLedger()
        ledger.ingest_many(_stream(1, "PV1", T0 - timedelta(hours=1), 7200, 10, 100.0))
        first = aggregate(ledger, Period.DAILY, T0.date()).pv_generation
        before = aggregate(ledger, Period.DAILY, (T0 - timedelta(days=1)).date()).pv_generation
        assert first == pytest.approx(100.0) and before == pytest.approx(100.0)

    def test_empty_ledger_is_zero(self):
        stats = aggregate(EnergyLedger(), Period.DAILY, T0.date())
        assert stats.pv_generation == stats.consumption == stats.generator_generation == 0.0

    def test_register_cross_check(self):
        ledger = EnergyLedger()
        ledger.ingest_many(_stream(1, "PV1", T0, 86400 - 10, 10, 250.0))
        integrated, register = ems.cross_check(ledger, T0.date())[1]
        assert integrated == pytest.approx(register)

    def test_register_energy_restarts_after_reset(self):
        ledger = EnergyLedger()
        ledger.ingest_many(
            [rec(seq=0, energy=100.0), rec(seq=1, t=T0 + timedelta(seconds=10), energy=110.0),
             rec(seq=2, t=T0 + timedelta(seconds=20), energy=3.0)]
        )
        assert ems.register_energy(ledger, 1, T0, T0 + timedelta(minutes=1)) == pytest.approx(13.0)


class TestExport:
    def test_empty_is_header_only(self):
        assert ems.export_csv([]) == "period,line,generation_Wh,consumption_Wh\n"

    def test_rows(self):
        stats = ems.EnergyStats(Period.DAILY, "2021-08-18", {"PV1": 1234.4, "LineGeneral": 99.6, "ESS": 5.0})
        assert ems.export_csv([stats]).splitlines()[1:] == ["2021-08-18,PV1,1234,0", "2021-08-18,LineGeneral,0,100"]


class TestSnapshots:
    def _ledger(self, n=20):
        ledger = EnergyLedger()
        ledger.ingest_many(_stream(1, "PV1", T0, n * 10, 10, 42.0))
        return ledger

    def test_rotation(self, tmp_path):
        ledger = self._ledger()
        paths = [snapshot(ledger, tmp_path, keep=2) for _ in range(3)]
        assert ems.list_snapshots(tmp_path) == paths[1:]

    def test_keep_minimum(self, tmp_path):
        with pytest.raises(ValueError):
            snapshot(self._ledger(), tmp_path, keep=1)

    def test_roundtrip(self, tmp_path):
        ledger = self._ledger()
        assert restore(snapshot(ledger, tmp_path)) == ledger

    def test_corruption_refused(self, tmp_path):
        path = snapshot(self._ledger(), tmp_path)
        raw = bytearray(path.read_bytes())
        raw[40] ^= 0x01
        path.write_bytes(bytes(raw))
        with pytest.raises(IntegrityError):
            restore(path)

    def test_missing_trailer_refused(self, tmp_path):
        path = tmp_path / "ledger-000001.snap"
        path.write_text('{"format": "offgrid-twin-ledger"}\n')
        with pytest.raises(IntegrityError):
            restore(path)

    def test_storage_error_keeps_prior(self, tmp_path):
        ledger = self._ledger()
        good = snapshot(ledger, tmp_path)
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(StorageError):
            snapshot(ledger, blocker / "sub")
        assert restore(good) == ledger

    def test_latest(self, tmp_path):
        assert ems.latest_snapshot(tmp_path) is None
        p = snapshot(self._ledger(), tmp_path)
        assert ems.latest_snapshot(tmp_path) == p


def test_collect_runs_cycles():
    scenario = load_preset("2021-default")
    trace = run_scenario(scenario)
    reg = preset_registry("2021-default")
    bus = SimulatedBus.from_trace(reg, trace, scenario.dt, loss=0.5, seed=3)
    run = ems.collect(reg, bus, scenario.start_time, 50)
    assert run.cycles == 50
    assert len(run.ledger) + sum(run.offline.values()) == 50 * len(reg)
