from __future__ import annotations

import csv
import io

import pytest

from offgrid_twin import ems
from offgrid_twin.cli import describe_pack, main, parse_pack, render_report
from offgrid_twin.battery import Chemistry


def run(capsys, *argv: str) -> tuple[int, str, str]:
    try:
        code = main(list(argv))
    except SystemExit as exc:  # argparse rejects before dispatch
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


class TestExamples:
    def test_plan_pack(self, capsys):
        code, out, _ = run(capsys, "plan-pack", "--source", "24V,600Ah,block=12V/100Ah", "--target", "48V")
        assert code == 0
        assert out.strip() == "48 V / 300 Ah (14.4 kWh)"

    def test_doctor(self, capsys):
        code, out, _ = run(capsys, "doctor", "--chemistry", "lead12", "--ocv", "0.7,5.6,12.8")
        assert code == 0
        assert [line.split()[-1] for line in out.splitlines()] == ["FAILED", "FAILED", "HEALTHY"]

    def test_simulate_to_file(self, capsys, tmp_path):
        out_path = tmp_path / "trace.csv"
        code, out, _ = run(capsys, "simulate", "--preset", "2021-default", "--out", str(out_path))
        assert code == 0 and "1440 steps" in out
        rows = list(csv.DictReader(io.StringIO(out_path.read_text())))
        assert len(rows) == 2 * 1440  # one row per channel per step
        assert max(float(r["bus_voltage_V"]) for r in rows) <= 54.0

    def test_simulate_is_byte_identical(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(capsys, "simulate", "--preset", "2021-outage", "--out", str(a))
        run(capsys, "simulate", "--preset", "2021-outage", "--out", str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_plan_strings_lists_layouts(self, capsys):
        code, out, _ = run(capsys, "plan-strings", "--modules", "28", "--module", "generic-75")
        assert code == 0 and out.startswith("7S4P")

    def test_check_parallel_refuses(self, capsys):
        code, out, err = run(
            capsys, "check-parallel", "--va", "54", "--vb", "48", "--ra", "0.005", "--rb", "0.005"
        )
        assert code == 1
        assert "inrush 600.0 A" in out and "REFUSE" in out
        assert err.startswith("InrushRisk:") and len(err.strip().splitlines()) == 1


def _ok(tmp_path):
    return [
        ["plan-strings", "--modules", "40", "--module", "generic-80"],
        ["plan-pack", "--source", "24V,600Ah,block=12V/100Ah", "--target", "48V"],
        ["check-parallel", "--va", "48", "--vb", "48.2", "--ra", "0.005", "--rb", "0.005"],
        ["simulate", "--preset", "pre-2021", "--out", str(tmp_path / "t.csv")],
        ["poll", "--preset", "2021-default", "--cycles", "5"],
        ["doctor", "--chemistry", "lfp", "--ocv", "3.3"],
    ]


DOMAIN = [
    ["plan-strings", "--modules", "3", "--module", "generic-75"],
    ["plan-pack", "--source", "24V,600Ah,block=12V/100Ah", "--target", "60V"],
    ["check-parallel", "--va", "54", "--vb", "48", "--ra", "0.005", "--rb", "0.005"],
    ["simulate", "--scenario", "/nonexistent/scenario.yaml"],
    ["poll", "--scenario", "/nonexistent/scenario.yaml", "--registry", "/nonexistent/r.yaml"],
    ["report", "--ledger", "/nonexistent/ledger.jsonl"],
    ["doctor", "--chemistry", "lfp", "--ocv", "-1"],
]

USAGE = [
    ["plan-strings", "--modules", "28"],
    ["plan-pack", "--source", "junk", "--target", "48V"],
    ["check-parallel", "--va", "54"],
    ["simulate"],
    ["poll", "--preset", "2021-default", "--keep", "1"],
    ["report", "--ledger", "x", "--period", "weekly"],
    ["doctor", "--chemistry", "lead12", "--ocv", "a,b"],
    ["no-such-command"],
]


class TestExitCodes:
    def test_ok(self, capsys, tmp_path):
        for argv in _ok(tmp_path):
            assert run(capsys, *argv)[0] == 0, argv

    @pytest.mark.parametrize("argv", DOMAIN, ids=lambda a: a[0])
    def test_domain_errors_exit_1(self, capsys, argv):
        code, _, err = run(capsys, *argv)
        assert code == 1
        assert len(err.strip().splitlines()) == 1 and ":" in err

    @pytest.mark.parametrize("argv", USAGE, ids=lambda a: a[0])
    def test_usage_errors_exit_2(self, capsys, argv):
        assert run(capsys, *argv)[0] == 2


class TestPollReport:
    def test_poll_then_report(self, capsys, tmp_path):
        ledger = tmp_path / "ledger.jsonl"
        snaps = tmp_path / "snaps"
        code, out, _ = run(
            capsys, "poll", "--preset", "2021-default", "--cycles", "360", "--ledger", str(ledger),
            "--snapshot-dir", str(snaps), "--loss", "0.1", "--seed", "2",
        )
        assert code == 0 and "cycles 360" in out
        digest = out.split("ledger sha256 ")[1].split()[0]
        assert digest == ems.EnergyLedger(ledger).digest()

        code, table, _ = run(capsys, "report", "--ledger", str(ledger))
        assert code == 0 and table.splitlines()[0].split() == ["period", "pv_Wh", "generator_Wh", "consumption_Wh"]
        snap = ems.latest_snapshot(snaps)
        code, csv_text, _ = run(capsys, "report", "--snapshot", str(snap), "--format", "csv")
        assert code == 0 and csv_text.startswith(ems.REPORT_HEADER)

    def test_repoll_is_idempotent(self, capsys, tmp_path):
        ledger = tmp_path / "ledger.jsonl"
        argv = ["poll", "--preset", "2021-default", "--cycles", "20", "--ledger", str(ledger)]
        first = run(capsys, *argv)[1].splitlines()[-1]
        second = run(capsys, *argv)[1].splitlines()[-1]
        assert first == second

    def test_bad_date(self, capsys, tmp_path):
        ledger = tmp_path / "l.jsonl"
        run(capsys, "poll", "--preset", "2021-default", "--cycles", "3", "--ledger", str(ledger))
        assert run(capsys, "report", "--ledger", str(ledger), "--date", "18/08/2021")[0] == 2


class TestRenderReport:
    STAT = ems.EnergyStats(ems.Period.DAILY, "2021-08-18", {"PV1": 1000.4, "Generator": 0.0, "LineGeneral": 700.0})

    @pytest.mark.parametrize("fmt", ["table", "csv"])
    def test_empty_is_header_only(self, fmt):
        assert len(render_report([], fmt).splitlines()) == 1

    def test_one_daily_stat_is_one_row(self):
        assert render_report([self.STAT], "table").splitlines()[1].split() == ["2021-08-18", "1000", "0", "700"]

    def test_csv_matches_export(self):
        assert render_report([self.STAT], "csv") == ems.export_csv([self.STAT])

    @pytest.mark.parametrize("fmt", ["table", "csv"])
    def test_deterministic(self, fmt):
        assert render_report([self.STAT, self.STAT], fmt) == render_report([self.STAT, self.STAT], fmt)


class TestPackParsing:
    def test_parse_and_describe(self):
        pack = parse_pack("24V,600Ah,block=12V/100Ah", Chemistry.LEAD_ACID)
        assert describe_pack(pack) == "24 V / 600 Ah (14.4 kWh)"

    @pytest.mark.parametrize("text", ["24V", "24V,600Ah", "24,600,block=12/100", "24V,600Ah,block=12V"])
    def test_rejects_malformed(self, text):
        from offgrid_twin.errors import UsageError

        with pytest.raises(UsageError):
            parse_pack(text, Chemistry.LEAD_ACID)
