"""``offgrid-twin`` command-line entry point.

Exit codes: 0 success, 1 domain error (one ``ErrorName: message`` line on
stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import math
import re
import sys
from collections.abc import Sequence
from dataclasses import replace
from datetime import date
from pathlib import Path

from . import ems
from .battery import (
    LEAD_ACID_BLOCK,
    LFP_CELL,
    BatteryPack,
    CellBlockSpec,
    Chemistry,
    InrushRisk,
    NonDivisibleTopology,
    classify_cell_health,
    estimate_inrush,
    reassemble_pack,
)
from .errors import TwinError, UsageError
from .pv import PvConfigError, PvModuleSpec, VoltageWindow, enumerate_string_configs
from .simulation import PRESET_NAMES, load_preset, load_scenario, run_scenario, trace_to_csv
from .simulation.presets import HYBRID_6K, MODULES
from .telemetry import SimulatedBus, load_registry, preset_registry

DOCTOR_SPECS = {"lead12": LEAD_ACID_BLOCK, "lfp": LFP_CELL}


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------


def _quantity(text: str, unit: str) -> float:
    m = re.fullmatch(rf"\s*([0-9]*\.?[0-9]+)\s*{unit}\s*", text, re.IGNORECASE)
    if not m:
        raise UsageError(f"expected a value in {unit}, got {text!r}")
    return float(m.group(1))


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def parse_pack(text: str, chemistry: Chemistry) -> BatteryPack:
    """``24V,600Ah,block=12V/100Ah`` -> the pack built from those blocks."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3 or not parts[2].startswith("block="):
        raise UsageError(f"pack must look like 24V,600Ah,block=12V/100Ah, got {text!r}")
    volts, amp_hours = _quantity(parts[0], "V"), _quantity(parts[1], "Ah")
    block_v, _, block_ah = parts[2][len("block="):].partition("/")
    block_v, block_ah = _quantity(block_v, "V"), _quantity(block_ah, "Ah")
    template = LEAD_ACID_BLOCK if chemistry is Chemistry.LEAD_ACID else LFP_CELL
    spec = CellBlockSpec(
        chemistry, block_v, block_ah, template.internal_resistance, template.cutoff_voltage * block_v / template.nominal_voltage
    )
    series, parallel = volts / block_v, amp_hours / block_ah
    if not (series.is_integer() and parallel.is_integer()) or series < 1 or parallel < 1:
        raise NonDivisibleTopology(f"{text} is not a whole number of {block_v:g} V/{block_ah:g} Ah blocks")
    return BatteryPack(spec, int(series), int(parallel))


def describe_pack(pack: BatteryPack) -> str:
    return f"{pack.nominal_voltage:g} V / {pack.capacity_ah:g} Ah ({pack.energy_nominal / 1000:g} kWh)"


def render_report(stats: Sequence[ems.EnergyStats], fmt: str = "table") -> str:
    """Energy statistics as an aligned table (one row per stat) or the export CSV."""
    if fmt == "csv":
        return ems.export_csv(stats)
    if fmt != "table":
        raise ValueError(f"unknown report format {fmt!r}")
    rows = [f"{'period':<12}{'pv_Wh':>12}{'generator_Wh':>14}{'consumption_Wh':>16}"]
    for s in stats:
        rows.append(
            f"{s.label:<12}{s.pv_generation:>12.0f}{s.generator_generation:>14.0f}{s.consumption:>16.0f}"
        )
    return "\n".join(rows) + "\n"


def _scenario(args: argparse.Namespace):
    if args.scenario:
        scenario = load_scenario(args.scenario)
    else:
        scenario = load_preset(args.preset)
    overrides = {}
    for name in ("irradiance_scale", "load_scale"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if overrides:
        scenario = replace(scenario, **overrides)
        scenario.validate()
    return scenario


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_plan_strings(args: argparse.Namespace) -> int:
    if args.module:
        m = MODULES[args.module]
        module = PvModuleSpec(args.module, m["power_peak"], m["v_mp"], m["v_oc"])
    else:
        if None in (args.pmax, args.vmp, args.voc):
            raise UsageError("give --module or all of --pmax, --vmp and --voc")
        module = PvModuleSpec("custom", args.pmax, args.vmp, args.voc)
    window = VoltageWindow(*args.window)
    configs = enumerate_string_configs(module, args.modules, window)
    if not configs:
        raise PvConfigError(f"no layout of {args.modules} x {module.name} fits the window")
    for c in configs:
        print(
            f"{c.series}S{c.parallel}P  Vmp {c.v_operating:.1f} V  Voc {c.v_open_circuit:.1f} V  "
            f"{c.power_peak:.0f} Wp"
        )
    return 0


def cmd_plan_pack(args: argparse.Namespace) -> int:
    source = parse_pack(args.source, Chemistry(args.chemistry))
    target = reassemble_pack(source, _quantity(args.target, "V"))
    print(describe_pack(target))
    return 0


def cmd_check_parallel(args: argparse.Namespace) -> int:
    delta_v = abs(args.va - args.vb)
    current = estimate_inrush(args.va, args.vb, args.ra, args.rb)
    print(f"dV {delta_v:.2f} V, loop {(args.ra + args.rb) * 1000:.1f} mOhm, inrush {current:.1f} A")
    if delta_v > args.max_dv:
        print("verdict: REFUSE")
        raise InrushRisk(delta_v, current, args.max_dv)
    print("verdict: OK")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = _scenario(args)
    trace = run_scenario(scenario)
    text = trace_to_csv(trace)
    if args.out in (None, "-"):
        sys.stdout.write(text)
        return 0
    Path(args.out).write_text(text, encoding="utf-8")
    print(
        f"{scenario.name}: {len(trace)} steps -> {args.out}; "
        f"max bus voltage {max(p.bus_voltage for p in trace):.1f} V, "
        f"min soc {min(p.soc for p in trace):.1f} %"
    )
    return 0


def cmd_poll(args: argparse.Namespace) -> int:
    scenario = _scenario(args)
    if args.registry:
        registry = load_registry(args.registry)
    elif args.preset:
        registry = preset_registry(args.preset)
    else:
        raise UsageError("--registry is required with --scenario")
    trace = run_scenario(scenario)
    bus = SimulatedBus.from_trace(
        registry, trace, scenario.dt, noise=args.noise, loss=args.loss, corruption=args.corruption, seed=args.seed
    )
    cycles = args.cycles
    if cycles is None:
        cycles = math.floor(scenario.duration / args.cadence) + 1
    ledger = ems.EnergyLedger(args.ledger)
    run = ems.collect(
        registry, bus, scenario.start_time, cycles,
        cadence=args.cadence, timeout=args.timeout, retries=args.retries, ledger=ledger,
    )
    print(
        f"cycles {run.cycles}, nodes {len(registry)}, records {len(run.ledger)}, "
        f"offline polls {sum(run.offline.values())}, resets {run.resets}"
    )
    print(f"ledger sha256 {run.ledger.digest()}")
    if args.snapshot_dir:
        path = ems.snapshot(run.ledger, args.snapshot_dir, keep=args.keep)
        print(f"snapshot {path}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    if args.snapshot:
        ledger = ems.restore(args.snapshot)
    else:
        if not Path(args.ledger).exists():
            raise ems.StorageError(f"no ledger at {args.ledger}")
        ledger = ems.EnergyLedger(args.ledger)
    if args.date:
        try:
            when = date.fromisoformat(args.date)
        except ValueError:
            raise UsageError(f"--date must be YYYY-MM-DD, got {args.date!r}") from None
    else:
        records = ledger.records()
        if not records:
            raise ems.StorageError("ledger is empty")
        when = min(r.timestamp for r in records).date()
    stats = ems.aggregate(ledger, args.period, when, cadence=args.cadence)
    sys.stdout.write(render_report([stats], args.format))
    return 0


def cmd_doctor(args: argparse.Namespace) -> int:
    spec = DOCTOR_SPECS[args.chemistry]
    for i, ocv in enumerate(_floats(args.ocv), start=1):
        health = classify_cell_health(spec, ocv)
        print(f"cell {i}: {ocv:.2f} V {health.name}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _source_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    group = p.add_mutually_exclusive_group(required=required)
    group.add_argument("--preset", choices=PRESET_NAMES, help="built-in scenario")
    group.add_argument("--scenario", metavar="FILE", help="scenario YAML file")
    p.add_argument("--irradiance-scale", type=float, help="override the irradiance multiplier")
    p.add_argument("--load-scale", type=float, help="override the load multiplier")


def _window(text: str) -> tuple[float, float, float]:
    values = text.split(",")
    try:
        op_min, op_max, oc_max = (float(v) for v in values)
    except ValueError:
        raise argparse.ArgumentTypeError("window is op_min,op_max,oc_max in volts") from None
    return op_min, op_max, oc_max


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="offgrid-twin", description="Off-grid PV/battery microgrid twin.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("plan-strings", help="list PV string layouts that fit an inverter window")
    p.add_argument("--modules", type=int, required=True, help="total module count")
    p.add_argument("--module", choices=sorted(MODULES), help="built-in module")
    p.add_argument("--pmax", type=float, help="module peak power, Wp")
    p.add_argument("--vmp", type=float, help="module voltage at maximum power, V")
    p.add_argument("--voc", type=float, help="module open-circuit voltage, V")
    default_window = ",".join(f"{v:g}" for v in HYBRID_6K["dc_window"])
    p.add_argument("--window", type=_window, default=_window(default_window), help=f"op_min,op_max,oc_max (default {default_window})")
    p.set_defaults(func=cmd_plan_strings)

    p = sub.add_parser("plan-pack", help="rewire a battery bank to a new voltage")
    p.add_argument("--source", required=True, help="e.g. 24V,600Ah,block=12V/100Ah")
    p.add_argument("--target", required=True, help="target voltage, e.g. 48V")
    p.add_argument("--chemistry", choices=[c.value for c in Chemistry], default="lead_acid")
    p.set_defaults(func=cmd_plan_pack)

    p = sub.add_parser("check-parallel", help="estimate inrush before paralleling two packs")
    p.add_argument("--va", type=float, required=True, help="pack A terminal voltage, V")
    p.add_argument("--vb", type=float, required=True, help="pack B terminal voltage, V")
    p.add_argument("--ra", type=float, required=True, help="pack A internal resistance, ohm")
    p.add_argument("--rb", type=float, required=True, help="pack B internal resistance, ohm")
    p.add_argument("--max-dv", type=float, default=0.5, help="largest allowed voltage gap, V")
    p.set_defaults(func=cmd_check_parallel)

    p = sub.add_parser("simulate", help="run a scenario and write the trace CSV")
    _source_args(p)
    p.add_argument("--out", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("poll", help="run collector cycles against meters fed by a simulated trace")
    _source_args(p)
    p.add_argument("--registry", metavar="FILE", help="node registry YAML (default: the preset's)")
    p.add_argument("--cycles", type=int, help="poll cycles (default: cover the whole scenario)")
    p.add_argument("--cadence", type=float, default=ems.DEFAULT_CADENCE, help="seconds between cycles")
    p.add_argument("--timeout", type=float, default=ems.DEFAULT_TIMEOUT, help="per-read timeout, s")
    p.add_argument("--retries", type=int, default=ems.DEFAULT_RETRIES)
    p.add_argument("--loss", type=float, default=0.0, help="frame loss probability")
    p.add_argument("--corruption", type=float, default=0.0, help="reply bit-flip probability")
    p.add_argument("--noise", type=float, default=0.0, help="meter relative error, e.g. 0.005")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ledger", metavar="FILE", help="append records to this JSONL ledger")
    p.add_argument("--snapshot-dir", metavar="DIR", help="write a snapshot after polling")
    p.add_argument("--keep", type=int, default=2, help="snapshots to keep (>= 2)")
    p.set_defaults(func=cmd_poll)

    p = sub.add_parser("report", help="energy statistics from a ledger or snapshot")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--ledger", metavar="FILE")
    src.add_argument("--snapshot", metavar="FILE")
    p.add_argument("--period", choices=[x.value for x in ems.Period], default="daily")
    p.add_argument("--date", help="any day inside the period (default: first record)")
    p.add_argument("--format", choices=["table", "csv"], default="table")
    p.add_argument("--cadence", type=float, default=ems.DEFAULT_CADENCE, help="poll cadence for gap detection")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("doctor", help="classify measured open-circuit voltages")
    p.add_argument("--chemistry", choices=sorted(DOCTOR_SPECS), required=True)
    p.add_argument("--ocv", required=True, help="comma-separated voltages, e.g. 0.7,5.6,12.8")
    p.set_defaults(func=cmd_doctor)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "keep", 2) < 2:
            raise UsageError("--keep must be at least 2")
        return args.func(args)
    except UsageError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (TwinError, OSError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
