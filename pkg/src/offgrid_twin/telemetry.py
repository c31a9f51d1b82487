"""Meter field-bus: frame codec, register map, node registry and simulated meters.

Frame layout (all multi-byte header fields big-endian, CRC little-endian)::

    0xA5 | node_id | function | addr_hi addr_lo | count_or_len | payload | crc_lo crc_hi

``read_regs`` requests carry no payload and ``count_or_len`` is the number of
16-bit registers wanted.  ``reply`` and ``error`` frames carry
``count_or_len`` payload bytes.  The CRC is CRC-16/MODBUS over every byte
before it.
"""

from __future__ import annotations

import enum
import itertools
import math
import random
import struct
from collections.abc import Sequence
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any

import yaml

from .errors import TwinError
from .kernels import crc16

START_BYTE = 0xA5
HEADER_LEN = 6
CRC_LEN = 2
MAX_NODE_ID = 247
MAX_PAYLOAD = 255

REGISTRY_SCHEMA_VERSION = 1


class FramingError(TwinError):
    pass


class ChecksumError(TwinError):
    pass


class FieldRange(TwinError):
    pass


class IllegalAddress(TwinError):
    pass


class Function(enum.IntEnum):
    READ_REGS = 0x03
    REPLY = 0x83
    ERROR = 0xEE


class ExceptionCode(enum.IntEnum):
    ILLEGAL_ADDRESS = 0x02
    DEVICE_FAILURE = 0x04


# ---------------------------------------------------------------------------
# Frames
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class MeterFrame:
    node_id: int
    function: Function
    register_addr: int
    count_or_len: int
    payload: bytes = b""

    @classmethod
    def read(cls, node_id: int, register_addr: int, count: int) -> MeterFrame:
        return cls(node_id, Function.READ_REGS, register_addr, count)

    @classmethod
    def reply(cls, node_id: int, register_addr: int, payload: bytes) -> MeterFrame:
        return cls(node_id, Function.REPLY, register_addr, len(payload), bytes(payload))

    @classmethod
    def error(cls, node_id: int, register_addr: int, code: ExceptionCode) -> MeterFrame:
        return cls(node_id, Function.ERROR, register_addr, 1, bytes([code]))


def _check_fields(frame: MeterFrame) -> None:
    if not 1 <= frame.node_id <= MAX_NODE_ID:
        raise FieldRange(f"node_id {frame.node_id} outside 1..{MAX_NODE_ID}")
    if not 0 <= frame.register_addr <= 0xFFFF:
        raise FieldRange(f"register_addr {frame.register_addr:#x} outside 16 bits")
    if not 0 <= frame.count_or_len <= 0xFF:
        raise FieldRange(f"count_or_len {frame.count_or_len} outside 8 bits")
    if frame.function is Function.READ_REGS:
        if frame.payload:
            raise FieldRange("read_regs request carries no payload")
        if frame.count_or_len == 0:
            raise FieldRange("read_regs count must be >= 1")
    elif len(frame.payload) != frame.count_or_len:
        raise FieldRange(f"payload length {len(frame.payload)} != count_or_len {frame.count_or_len}")


def encode_frame(frame: MeterFrame) -> bytes:
    try:
        function = Function(frame.function)
    except ValueError:
        raise FieldRange(f"unknown function {frame.function!r}") from None
    _check_fields(frame)
    body = bytes(
        (START_BYTE, frame.node_id, function, frame.register_addr >> 8, frame.register_addr & 0xFF, frame.count_or_len)
    ) + frame.payload
    return body + crc16(body).to_bytes(2, "little")


def decode_frame(data: bytes | bytearray | memoryview) -> MeterFrame:
    data = bytes(data)
    if not data:
        raise FramingError("empty frame")
    if data[0] != START_BYTE:
        raise FramingError(f"bad start byte {data[0]:#04x}")
    if len(data) < HEADER_LEN + CRC_LEN:
        raise FramingError(f"truncated frame ({len(data)} bytes)")
    if crc16(data[:-CRC_LEN]) != int.from_bytes(data[-CRC_LEN:], "little"):
        raise ChecksumError("crc mismatch")
    try:
        function = Function(data[2])
    except ValueError:
        raise FieldRange(f"unknown function {data[2]:#04x}") from None
    count = data[5]
    payload_len = 0 if function is Function.READ_REGS else count
    if len(data) != HEADER_LEN + payload_len + CRC_LEN:
        raise FramingError(f"frame length {len(data)} does not match header")
    frame = MeterFrame(
        data[1], function, (data[3] << 8) | data[4], count, data[HEADER_LEN : HEADER_LEN + payload_len]
    )
    _check_fields(frame)
    return frame


def flip_bit(data: bytes, bit: int) -> bytes:
    buf = bytearray(data)
    buf[bit // 8] ^= 1 << (bit % 8)
    return bytes(buf)


# ---------------------------------------------------------------------------
# Register map
# ---------------------------------------------------------------------------

# name -> (register address, register count, struct code, scale to SI)
REGISTERS = {
    "voltage": (0x0000, 2, ">I", 1e-3),  # mV
    "current": (0x0002, 2, ">i", 1e-3),  # mA
    "power": (0x0004, 2, ">i", 1e-3),  # mW
    "energy": (0x0006, 4, ">Q", 1e-3),  # mWh
}
REGISTER_COUNT = 10
_BLOCK = struct.Struct(">IiiQ")


@dataclass(frozen=True, slots=True)
class MeterReading:
    """One set of register values in SI-ish units (V, A, W, Wh)."""

    voltage: float
    current: float
    power: float
    energy: float

    def to_registers(self) -> bytes:
        raw = (
            round(self.voltage * 1000),
            round(self.current * 1000),
            round(self.power * 1000),
            round(self.energy * 1000),
        )
        try:
            return _BLOCK.pack(*raw)
        except struct.error as exc:
            raise FieldRange(f"reading out of register range: {self}") from exc

    @classmethod
    def from_registers(cls, block: bytes) -> MeterReading:
        if len(block) != 2 * REGISTER_COUNT:
            raise FieldRange(f"register block must be {2 * REGISTER_COUNT} bytes")
        mv, ma, mw, mwh = _BLOCK.unpack(block)
        return cls(mv / 1000, ma / 1000, mw / 1000, mwh / 1000)


def read_register_window(block: bytes, register_addr: int, count: int) -> bytes:
    """Slice ``count`` registers starting at ``register_addr`` out of a full block."""
    if count < 1 or register_addr + count > REGISTER_COUNT:
        raise IllegalAddress(f"registers {register_addr:#06x}+{count} not mapped")
    return block[2 * register_addr : 2 * (register_addr + count)]


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------


class NodeKind(str, enum.Enum):
    DC_METER = "dc_meter"
    AC_METER = "ac_meter"
    ESS = "ess"
    INVERTER = "inverter"


class Source(str, enum.Enum):
    """Which trace quantity a node measures."""

    PV = "pv"  # PV power used by a channel
    LOAD = "load"  # load served by a channel (or all channels)
    GENERATOR = "generator"  # generator power delivered to loads
    ESS = "ess"  # bus, or one pack when ``pack`` is set
    INVERTER = "inverter"  # AC output of a channel's inverter group


@dataclass(frozen=True, slots=True)
class Node:
    node_id: int
    line: str
    kind: NodeKind
    nominal_voltage: float
    source: Source
    channel: int | None = None  # 1-based; None = all channels
    pack: int | None = None  # 1-based pack index for ESS module meters
    scale: float = 1.0

    def __post_init__(self) -> None:
        if not 1 <= self.node_id <= MAX_NODE_ID:
            raise FieldRange(f"node_id {self.node_id} outside 1..{MAX_NODE_ID}")
        if self.nominal_voltage <= 0:
            raise ValueError("nominal_voltage must be positive")


@dataclass(frozen=True)
class NodeRegistry:
    name: str
    nodes: tuple[Node, ...]

    def __post_init__(self) -> None:
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("node ids must be unique")

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    def by_id(self, node_id: int) -> Node:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    @property
    def lines(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(n.line for n in self.nodes))

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": REGISTRY_SCHEMA_VERSION,
            "name": self.name,
            "nodes": [
                {
                    "node_id": n.node_id,
                    "line": n.line,
                    "kind": n.kind.value,
                    "nominal_voltage": n.nominal_voltage,
                    "source": n.source.value,
                    "channel": n.channel,
                    "pack": n.pack,
                    "scale": n.scale,
                }
                for n in self.nodes
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> NodeRegistry:
        version = data.get("schema_version")
        if version != REGISTRY_SCHEMA_VERSION:
            raise ValueError(f"unsupported registry schema_version {version!r}")
        nodes = tuple(
            Node(
                int(n["node_id"]),
                str(n["line"]),
                NodeKind(n["kind"]),
                float(n["nominal_voltage"]),
                Source(n["source"]),
                None if n.get("channel") is None else int(n["channel"]),
                None if n.get("pack") is None else int(n["pack"]),
                float(n.get("scale", 1.0)),
            )
            for n in data["nodes"]
        )
        if not nodes:
            raise ValueError("registry lists no nodes")
        return cls(str(data.get("name", "registry")), nodes)


def load_registry(path: str | Path) -> NodeRegistry:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: not a registry mapping")
    return NodeRegistry.from_dict(data)


def save_registry(registry: NodeRegistry, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(registry.to_dict(), fh, sort_keys=False)


def _registry_2021(name: str) -> NodeRegistry:
    return NodeRegistry(
        name,
        (
            Node(1, "ESS", NodeKind.ESS, 48.0, Source.ESS),
            Node(2, "PV1", NodeKind.DC_METER, 119.0, Source.PV, channel=1),
            Node(3, "PV2", NodeKind.DC_METER, 138.4, Source.PV, channel=2),
            Node(4, "LineGeneral", NodeKind.AC_METER, 110.0, Source.LOAD, channel=1),
            Node(5, "LineGeneral", NodeKind.AC_METER, 110.0, Source.LOAD, channel=2),
            Node(6, "INV1", NodeKind.INVERTER, 110.0, Source.INVERTER, channel=1),
            Node(7, "INV2", NodeKind.INVERTER, 110.0, Source.INVERTER, channel=2),
        ),
    )


def _registry_pre_2021() -> NodeRegistry:
    # one PWM channel feeds both arrays; split by nameplate (power is linear in Wp)
    pv1, pv2 = 2 * 14 * 75.0, 2 * 20 * 80.0
    return NodeRegistry(
        "pre-2021",
        (
            Node(1, "ESS", NodeKind.ESS, 24.0, Source.ESS),
            Node(2, "PV1", NodeKind.DC_METER, 34.0, Source.PV, channel=1, scale=pv1 / (pv1 + pv2)),
            Node(3, "PV2", NodeKind.DC_METER, 34.6, Source.PV, channel=1, scale=pv2 / (pv1 + pv2)),
            Node(4, "LineGeneral", NodeKind.AC_METER, 110.0, Source.LOAD, channel=1),
            Node(5, "INV1", NodeKind.INVERTER, 110.0, Source.INVERTER, channel=1),
        ),
    )


def _registry_future_plan() -> NodeRegistry:
    nodes: list[Node] = []
    ids = itertools.count(1)
    # 7 DC meters: six PV strings plus the 48 V DC load line
    for i in range(1, 7):
        nodes.append(Node(next(ids), f"PV{i}", NodeKind.DC_METER, 126.0, Source.PV, channel=1 if i <= 3 else 2, scale=1 / 3))
    nodes.append(Node(next(ids), "Line48VDC", NodeKind.DC_METER, 48.0, Source.LOAD, channel=3))
    # 4 AC meters
    nodes.append(Node(next(ids), "Generator", NodeKind.AC_METER, 220.0, Source.GENERATOR))
    nodes.append(Node(next(ids), "Line220VAC", NodeKind.AC_METER, 220.0, Source.LOAD, channel=1, scale=0.95))
    nodes.append(Node(next(ids), "LineEMS", NodeKind.AC_METER, 220.0, Source.LOAD, channel=1, scale=0.05))
    nodes.append(Node(next(ids), "LineGeneral", NodeKind.AC_METER, 110.0, Source.LOAD, channel=2))
    # ESS: the bus plus one meter per 16S module (2 existing, 20 new)
    nodes.append(Node(next(ids), "ESS", NodeKind.ESS, 48.0, Source.ESS))
    for m in range(1, 3):
        nodes.append(Node(next(ids), f"ESS-A{m:02d}", NodeKind.ESS, 48.0, Source.ESS, pack=1, scale=1 / 2))
    for m in range(1, 21):
        nodes.append(Node(next(ids), f"ESS-B{m:02d}", NodeKind.ESS, 48.0, Source.ESS, pack=2, scale=1 / 20))
    # two parallel units per channel
    unit = 0
    for ch, vac in ((1, 220.0), (2, 110.0), (3, 48.0)):
        for _ in range(2):
            unit += 1
            nodes.append(Node(next(ids), f"INV{unit}", NodeKind.INVERTER, vac, Source.INVERTER, channel=ch, scale=0.5))
    return NodeRegistry("future-plan", tuple(nodes))


def preset_registry(name: str) -> NodeRegistry:
    if name in ("2021-default", "2021-outage"):
        return _registry_2021(name)
    if name == "pre-2021":
        return _registry_pre_2021()
    if name == "future-plan":
        return _registry_future_plan()
    raise KeyError(f"no registry for preset {name!r}")


# ---------------------------------------------------------------------------
# Simulated meters
# ---------------------------------------------------------------------------


def _channels(p, channel: int | None):
    return p.channels if channel is None else (p.channels[channel - 1],)


def node_series(node: Node, trace: Sequence) -> tuple[list[float], list[float], list[float]]:
    """Per-step (voltage, current, power) seen by ``node`` over a trace."""
    volts, amps, watts = [], [], []
    for p in trace:
        if node.source is Source.ESS:
            if node.pack is None:
                v, i = p.bus_voltage, p.bus_current
                w = p.bus_power
            else:
                v = p.pack_voltage[node.pack - 1]
                i = p.pack_current[node.pack - 1] * node.scale
                w = v * i
            volts.append(v)
            amps.append(i)
            watts.append(w)
            continue
        chans = _channels(p, node.channel)
        if node.source is Source.PV:
            w = math.fsum(c.pv_used for c in chans)
        elif node.source is Source.GENERATOR:
            w = math.fsum(c.gen_to_load for c in chans)
        else:  # LOAD and INVERTER both see the served AC/DC load
            w = math.fsum(c.served for c in chans)
        w *= node.scale
        volts.append(node.nominal_voltage)
        amps.append(w / node.nominal_voltage)
        watts.append(w)
    return volts, amps, watts


class SimulatedMeter:
    """Answers register reads for one node from a precomputed trace.

    The reading at time ``t`` is the trace step covering ``t``.  The energy
    register accumulates the positive part of power, so it never decreases.
    ``noise`` (fraction, e.g. 0.005 for a Class-0.5 meter) perturbs voltage,
    current and power by a uniform relative error.
    """

    def __init__(
        self,
        node: Node,
        trace: Sequence,
        dt: float,
        noise: float = 0.0,
        seed: int | None = None,
    ):
        if not trace:
            raise ValueError("meter needs a non-empty trace")
        self.node = node
        self.start = trace[0].time
        self.dt = float(dt)
        self.volts, self.amps, self.watts = node_series(node, trace)
        self.energy_before = [0.0, *itertools.accumulate(max(w, 0.0) * self.dt / 3600.0 for w in self.watts)]
        self.noise = noise
        self._rng = random.Random(seed)

    @property
    def end(self) -> datetime:
        return self.start + timedelta(seconds=self.dt * len(self.watts))

    def _step(self, t: datetime) -> tuple[int, float]:
        elapsed = (t - self.start).total_seconds()
        n = len(self.watts)
        if elapsed < 0 or elapsed > n * self.dt:
            raise ValueError(f"{t} outside the meter trace")
        k = min(int(elapsed // self.dt), n - 1)
        return k, elapsed - k * self.dt

    def reading(self, t: datetime) -> MeterReading:
        k, into = self._step(t)
        energy = self.energy_before[k] + max(self.watts[k], 0.0) * into / 3600.0
        v, i, w = self.volts[k], self.amps[k], self.watts[k]
        if self.noise:
            u = self._rng.uniform
            v *= 1 + u(-self.noise, self.noise)
            i *= 1 + u(-self.noise, self.noise)
            w *= 1 + u(-self.noise, self.noise)
        return MeterReading(v, i, w, energy)

    def read(self, register_addr: int, count: int, t: datetime) -> bytes:
        """Register payload for a read; raises IllegalAddress for unmapped registers."""
        if count < 1 or register_addr + count > REGISTER_COUNT:
            raise IllegalAddress(f"registers {register_addr:#06x}+{count} not mapped")
        return read_register_window(self.reading(t).to_registers(), register_addr, count)

    def respond(self, request: MeterFrame, t: datetime) -> MeterFrame:
        try:
            payload = self.read(request.register_addr, request.count_or_len, t)
        except IllegalAddress:
            return MeterFrame.error(self.node.node_id, request.register_addr, ExceptionCode.ILLEGAL_ADDRESS)
        return MeterFrame.reply(self.node.node_id, request.register_addr, payload)


@dataclass
class SimulatedBus:
    """In-process half-duplex bus with seeded frame loss and corruption.

    ``loss`` is the probability that a transaction gets no answer (request or
    reply lost); ``corruption`` the probability that one random bit of the
    reply is flipped.  Set ``clock`` before each poll cycle.
    """

    meters: dict[int, SimulatedMeter]
    loss: float = 0.0
    corruption: float = 0.0
    seed: int | None = None
    clock: datetime | None = None
    transactions: int = 0
    _rng: random.Random = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not (0 <= self.loss <= 1 and 0 <= self.corruption <= 1):
            raise ValueError("loss and corruption are probabilities")
        self._rng = random.Random(self.seed)

    @classmethod
    def from_trace(
        cls,
        registry: NodeRegistry,
        trace: Sequence,
        dt: float,
        *,
        noise: float = 0.0,
        loss: float = 0.0,
        corruption: float = 0.0,
        seed: int | None = None,
    ) -> SimulatedBus:
        meters = {
            n.node_id: SimulatedMeter(n, trace, dt, noise, None if seed is None else seed + n.node_id)
            for n in registry
        }
        return cls(meters, loss, corruption, seed, trace[0].time)

    def transact(self, request: bytes, timeout: float = 0.2) -> bytes | None:
        """Send one request frame; the reply bytes, or None on timeout."""
        self.transactions += 1
        if self.loss and self._rng.random() < self.loss:
            return None
        try:
            frame = decode_frame(request)
        except TwinError:
            return None  # a meter ignores frames it cannot parse
        meter = self.meters.get(frame.node_id)
        if meter is None or frame.function is not Function.READ_REGS or self.clock is None:
            return None
        reply = encode_frame(meter.respond(frame, self.clock))
        if self.corruption and self._rng.random() < self.corruption:
            reply = flip_bit(reply, self._rng.randrange(len(reply) * 8))
        return reply


__all__ = [
    "START_BYTE",
    "ChecksumError",
    "ExceptionCode",
    "FieldRange",
    "FramingError",
    "Function",
    "IllegalAddress",
    "MeterFrame",
    "MeterReading",
    "Node",
    "NodeKind",
    "NodeRegistry",
    "REGISTERS",
    "REGISTER_COUNT",
    "SimulatedBus",
    "SimulatedMeter",
    "Source",
    "crc16",
    "decode_frame",
    "encode_frame",
    "flip_bit",
    "load_registry",
    "node_series",
    "preset_registry",
    "read_register_window",
    "save_registry",
]
