"""Event-driven link simulation with Poisson interferers, fading and capture."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import phy
from .phy import RadioConfig, SfTables


@dataclass(frozen=True)
class Frame:
    sf: int
    channel: int
    start: float
    airtime: float
    tx_power: float
    index: int = 0
    sender: str = ""

    @property
    def end(self) -> float:
        return self.start + self.airtime


@dataclass(frozen=True)
class Interferer:
    radius: float
    angle: float
    frame_rate: float  # frames per hour
    next_tx_time: float


@dataclass(frozen=True)
class InterfererFrame:
    sf: int
    channel: int
    start: float
    duration: float
    rx_power: float

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass
class LinkRealization:
    fading: float
    overlapping: list[InterfererFrame] = field(default_factory=list)


@dataclass(frozen=True)
class InterferenceConfig:
    intensity: float = 1e-5  # devices per square meter
    frame_rate: float = 10.0  # frames per hour per interferer
    radius: float = 2000.0
    payload: dict[int, int] | None = None  # bytes per SF; None = that SF's MTU

    def __post_init__(self) -> None:
        if self.intensity < 0 or self.frame_rate < 0:
            raise ValueError("interferer intensity and frame rate must be >= 0")
        if self.radius <= 0:
            raise ValueError("interference radius must be positive")

    def payload_bytes(self, sf: int, tables: SfTables) -> int:
        if self.payload is not None and sf in self.payload:
            return self.payload[sf]
        return phy.mtu(sf, tables)

    def durations(self, cfg: RadioConfig, tables: SfTables) -> dict[int, float]:
        return {
            sf: phy.airtime(sf, self.payload_bytes(sf, tables), cfg, tables)
            for sf in phy.SPREADING_FACTORS
        }


def spawn_interferers(
    intensity: float, radius: float, rng: np.random.Generator, frame_rate: float = 0.0, start: float = 0.0
) -> list[Interferer]:
    """Drop a homogeneous PPP on a disk of ``radius`` meters around the receiver."""
    if intensity < 0 or radius <= 0:
        raise ValueError("need intensity >= 0 and radius > 0")
    count = int(rng.poisson(intensity * math.pi * radius**2))
    r = radius * np.sqrt(rng.random(count))
    theta = 2.0 * math.pi * rng.random(count)
    if frame_rate > 0:
        first = start + rng.exponential(3600.0 / frame_rate, count)
    else:
        first = np.full(count, math.inf)
    return [Interferer(float(a), float(b), frame_rate, float(c)) for a, b, c in zip(r, theta, first)]


def next_interferer_frame(
    interferer: Interferer,
    rng: np.random.Generator,
    cfg: RadioConfig,
    tables: SfTables,
    durations: dict[int, float],
) -> tuple[InterfererFrame | None, Interferer]:
    """Emit the interferer's pending frame and schedule its next one.

    Returns ``(None, interferer)`` for a silent interferer.
    """
    if interferer.frame_rate <= 0 or math.isinf(interferer.next_tx_time):
        return None, interferer
    sf = int(rng.integers(7, 13))
    channel = int(rng.integers(cfg.channel_count))
    fading = phy.sample_fading(rng)
    power = phy.received_power(cfg.tx_power, max(interferer.radius, 1e-9), fading, cfg)
    frame = InterfererFrame(sf, channel, interferer.next_tx_time, durations[sf], power)
    gap = rng.exponential(3600.0 / interferer.frame_rate)
    return frame, Interferer(
        interferer.radius, interferer.angle, interferer.frame_rate, interferer.next_tx_time + gap
    )


class InterfererField:
    """Receiver-centric interferer population advanced along one timeline.

    Interferer frames are generated lazily up to the latest queried time.
    ``skip_to`` jumps over idle periods by redrawing stale arrival times,
    which is exact for Poisson traffic.
    """

    def __init__(
        self,
        interference: InterferenceConfig,
        cfg: RadioConfig,
        tables: SfTables,
        rng: np.random.Generator,
        start: float = 0.0,
    ) -> None:
        self.cfg = cfg
        self.tables = tables
        self.rng = rng
        self.mean_gap = 3600.0 / interference.frame_rate if interference.frame_rate > 0 else math.inf
        self.durations = interference.durations(cfg, tables)
        self.max_duration = max(self.durations.values())
        # Start in steady state: frames already on air at ``start`` are included.
        origin = start - self.max_duration
        self.interferers = spawn_interferers(
            interference.intensity, interference.radius, rng, interference.frame_rate, start=origin
        )
        self.next_tx = np.array([i.next_tx_time for i in self.interferers], dtype=float)
        self.generated_until = origin
        self.active: list[InterfererFrame] = []

    def __len__(self) -> int:
        return len(self.interferers)

    def skip_to(self, t: float) -> None:
        """Forget frames that ended before ``t`` and fast-forward idle arrivals."""
        horizon = t - self.max_duration
        if horizon > self.generated_until:
            stale = self.next_tx < horizon
            if np.any(stale):
                self.next_tx[stale] = horizon + self.rng.exponential(self.mean_gap, int(stale.sum()))
            self.generated_until = horizon
        self.active = [f for f in self.active if f.end > t]

    def _generate_until(self, t: float) -> None:
        if t <= self.generated_until or not len(self.interferers):
            self.generated_until = max(self.generated_until, t)
            return
        while True:
            due = np.flatnonzero(self.next_tx < t)
            if due.size == 0:
                break
            due = due[np.argsort(self.next_tx[due], kind="stable")]
            for i in due:
                src = replace(self.interferers[i], next_tx_time=float(self.next_tx[i]))
                frame, nxt = next_interferer_frame(src, self.rng, self.cfg, self.tables, self.durations)
                self.active.append(frame)
                self.next_tx[i] = nxt.next_tx_time
        self.generated_until = t

    def overlapping(self, channel: int, start: float, end: float) -> list[InterfererFrame]:
        self._generate_until(end)
        return [
            f for f in self.active if f.channel == channel and f.start < end and f.end > start
        ]


def frame_outcome(
    frame: Frame, distance: float, realization: LinkRealization, tables: SfTables, cfg: RadioConfig
) -> bool:
    p_r = phy.received_power(frame.tx_power, distance, realization.fading, cfg)
    if not phy.above_sensitivity(p_r, frame.sf, tables):
        return False
    for other in realization.overlapping:
        if other.channel != frame.channel:
            continue
        if not phy.capture_ok(p_r, other.rx_power, frame.sf, other.sf, tables):
            return False
    return True


@dataclass
class Receiver:
    id: int | str
    distance: float
    field: InterfererField | None = None


def transmit_fragments(
    frames: Sequence[Frame],
    receivers: Iterable[Receiver],
    rng: np.random.Generator,
    tables: SfTables,
    cfg: RadioConfig,
    force_fading: float | None = None,
) -> dict[int | str, set[int]]:
    """Deliver a frame sequence to each receiver independently.

    Every (receiver, frame) pair gets its own fading draw; each receiver sees
    its own interferer field.  Returns the received frame indices per receiver.
    """
    ordered = sorted(frames, key=lambda f: (f.start, f.channel, f.index))
    out: dict[int | str, set[int]] = {}
    for rx in receivers:
        got: set[int] = set()
        if rx.field is not None and ordered:
            rx.field.skip_to(ordered[0].start)
        for f in ordered:
            fading = force_fading if force_fading is not None else phy.sample_fading(rng)
            overlap = rx.field.overlapping(f.channel, f.start, f.end) if rx.field is not None else []
            if frame_outcome(f, rx.distance, LinkRealization(fading, overlap), tables, cfg):
                got.add(f.index)
        out[rx.id] = got
    return out


def monte_carlo_success(
    sf: int,
    distance: float,
    interference: InterferenceConfig,
    cfg: RadioConfig,
    tables: SfTables,
    n_frames: int,
    rng: np.random.Generator,
    frames_per_realization: int = 100,
) -> float:
    """Empirical frame success rate from full link simulation.

    Each realization draws a fresh interferer population and sends a burst of
    back-to-back full-MTU frames through it.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be positive")
    l = phy.airtime(sf, phy.mtu(sf, tables), cfg, tables)
    ok = 0
    sent = 0
    while sent < n_frames:
        burst = min(frames_per_realization, n_frames - sent)
        fld = InterfererField(interference, cfg, tables, rng, start=0.0)
        channels = rng.integers(cfg.channel_count, size=burst)
        fading = phy.sample_fading(rng, burst)
        for j in range(burst):
            frame = Frame(sf, int(channels[j]), j * l, l, cfg.tx_power, index=j)
            overlap = fld.overlapping(frame.channel, frame.start, frame.end)
            if frame_outcome(frame, distance, LinkRealization(float(fading[j]), overlap), tables, cfg):
                ok += 1
        sent += burst
    return ok / n_frames
