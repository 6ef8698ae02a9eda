"""Round engine: multicast downlink, parallel uplink, duty cycling and metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Protocol

import numpy as np

from . import codec, fl, linkmodel, linksim, phy
from .codec import CodecConfig, EncodedUpdate
from .fl import Dataset, TrainConfig
from .linksim import Frame, InterferenceConfig
from .phy import RadioConfig, SfTables

SERVER = -1
LINK_MODES = ("sim", "analytical", "perfect")
_SLOT_EPS = 1e-9


@dataclass(frozen=True)
class ScheduleConfig:
    lorawan_class: str = "B"
    ping_period: float = 0.03
    duty_cycle: float = 1.0  # percent
    processing_delay: float = 10.0
    rounds: int = 15
    clients_per_round: int = 8
    link_mode: str = "sim"
    sf: int = 9
    fec_rate: Fraction = Fraction(1, 2)

    def __post_init__(self) -> None:
        if self.lorawan_class not in ("B", "C"):
            raise ValueError("lorawan_class must be 'B' or 'C'")
        if self.lorawan_class == "B" and not self.ping_period > 0:
            raise ValueError("ping_period must be positive for class B")
        if not 0 < self.duty_cycle <= 100:
            raise ValueError("duty_cycle must lie in (0, 100]")
        if self.processing_delay < 0:
            raise ValueError("processing_delay must be >= 0")
        if self.rounds < 1 or self.clients_per_round < 1:
            raise ValueError("rounds and clients_per_round must be positive")
        if self.link_mode not in LINK_MODES:
            raise ValueError(f"link_mode must be one of {LINK_MODES}")
        phy.check_sf(self.sf)
        object.__setattr__(self, "fec_rate", codec.as_rate(self.fec_rate))


@dataclass(frozen=True)
class TopologyConfig:
    n_clients: int = 20
    radius: float = 500.0

    def __post_init__(self) -> None:
        if self.n_clients < 1 or not self.radius > 0:
            raise ValueError("need at least one client and a positive radius")


@dataclass(frozen=True)
class Topology:
    distances: tuple[float, ...]

    @classmethod
    def uniform_disk(cls, cfg: TopologyConfig, rng: np.random.Generator) -> "Topology":
        # 1 - U lies in (0, 1], so no client sits on top of the server.
        d = cfg.radius * np.sqrt(1.0 - rng.random(cfg.n_clients))
        return cls(tuple(float(x) for x in d))


@dataclass
class RoundMetrics:
    round: int
    accuracy: float
    loss: float
    completion_time: float
    downlink_start: float
    downlink_airtime: float
    cumulative_uplink_airtime: float
    downlink_bytes: int
    downlink_k: int
    downlink_n: int
    uplink_bytes: int
    sampled: tuple[int, ...]
    decoded: tuple[int, ...]
    delivered: tuple[int, ...]


@dataclass(frozen=True)
class TxRecord:
    """One update transmission by one device."""

    device: int
    round: int
    start: float
    frames: int
    airtime: float


@dataclass
class RunResult:
    metrics: list[RoundMetrics]
    log: list[TxRecord]


def downlink_start_time(t0_candidate: float, lorawan_class: str, ping_period: float) -> float:
    """Class C starts immediately; class B waits for the next ping-slot boundary."""
    if lorawan_class == "C":
        return t0_candidate
    slot = math.ceil(t0_candidate / ping_period - _SLOT_EPS)
    return max(slot, 0) * ping_period


def round_interval(
    k: int, l: float, r: float | Fraction, dc_max: float, lorawan_class: str = "C", ping_period: float = 0.0
) -> float:
    """Minimum spacing between consecutive update starts for duty-cycle compliance."""
    if k < 1 or not l > 0 or not dc_max > 0:
        raise ValueError("k, airtime and duty cycle must be positive")
    rate = codec.as_rate(r) if not isinstance(r, Fraction) else r
    delta = float(Fraction(k) / rate) * l / dc_max * 100
    if lorawan_class == "B":
        return math.ceil(delta / ping_period - _SLOT_EPS) * ping_period
    return delta


def update_interval(update: EncodedUpdate, l: float, dc_max: float, lorawan_class: str = "C", ping_period: float = 0.0) -> float:
    # Effective rate k/n so the interval covers the n actually transmitted frames.
    return round_interval(update.k, l, Fraction(update.k, update.n), dc_max, lorawan_class, ping_period)


def update_frames(update: EncodedUpdate, sf: int, channel: int, start: float, l: float, tx_power: float, sender: str) -> list[Frame]:
    return [Frame(sf, channel, start + j * l, l, tx_power, index=j, sender=sender) for j in range(update.n)]


def audit_duty_cycle(log: list[TxRecord], dc_max: float, tol: float = 1e-9) -> list[str]:
    """Return violations where a device's update airtime exceeds ``dc_max``% of
    the gap to its next update start."""
    problems = []
    by_device: dict[int, list[TxRecord]] = {}
    for rec in log:
        by_device.setdefault(rec.device, []).append(rec)
    for dev, recs in by_device.items():
        recs.sort(key=lambda r: r.start)
        for a, b in zip(recs, recs[1:]):
            window = b.start - a.start
            if a.airtime > dc_max / 100.0 * window * (1 + tol) + tol:
                problems.append(
                    f"device {dev}: {a.airtime:.6f} s on air within a {window:.6f} s window (round {a.round})"
                )
    return problems


class Link(Protocol):
    def receive(self, frames: list[Frame], receiver: int, distance: float, rng: np.random.Generator) -> set[int]:
        ...


class PerfectLink:
    def receive(self, frames, receiver, distance, rng):
        return {f.index for f in frames}


class SimulatedLink:
    """Full link simulation with one interferer field per receiver."""

    def __init__(self, radio: RadioConfig, tables: SfTables, interference: InterferenceConfig, seed: int, receivers) -> None:
        self.radio = radio
        self.tables = tables
        self.fields = {
            rx: linksim.InterfererField(interference, radio, tables, fl.stream(seed, fl.INTERFERENCE, rx + 1))
            for rx in receivers
        }

    def receive(self, frames, receiver, distance, rng):
        rx = linksim.Receiver(receiver, distance, self.fields[receiver])
        return linksim.transmit_fragments(frames, [rx], rng, self.tables, self.radio)[receiver]


class AnalyticalLink:
    """Per-frame Bernoulli trials against the semi-analytical success probability."""

    def __init__(self, radio: RadioConfig, tables: SfTables, interference: InterferenceConfig, resolution: float = 0.1) -> None:
        params = linkmodel.AnalyticalParams.from_radio(radio, tables, interference)
        self.cache = linkmodel.ProbabilityCache(params, resolution)

    def receive(self, frames, receiver, distance, rng):
        got = set()
        for f in frames:
            if linkmodel.bernoulli_outcome(self.cache(f.sf, distance), rng):
                got.add(f.index)
        return got


def make_link(mode: str, radio, tables, interference, seed: int, n_clients: int, resolution: float = 0.1) -> Link:
    if mode == "perfect":
        return PerfectLink()
    if mode == "analytical":
        return AnalyticalLink(radio, tables, interference, resolution)
    if mode == "sim":
        return SimulatedLink(radio, tables, interference, seed, [SERVER, *range(n_clients)])
    raise ValueError(f"unknown link mode {mode!r}")


@dataclass
class UplinkResult:
    received: dict[int, set[int]]
    updates: dict[int, EncodedUpdate]
    airtime: dict[int, float]
    end: float


def uplink_phase(
    transmissions: list[tuple[int, EncodedUpdate]],
    start: float,
    link: Link,
    distances: tuple[float, ...],
    sf: int,
    l: float,
    tx_power: float,
    rng_for,
    channels: dict[int, int] | None = None,
) -> UplinkResult:
    """All transmitting clients start together, each on its own channel.

    ``channels`` maps client to channel; by default clients take channels in
    the order they appear in ``transmissions``.
    """
    received: dict[int, set[int]] = {}
    updates: dict[int, EncodedUpdate] = {}
    airtime: dict[int, float] = {}
    end = start
    for pos, (client, upd) in enumerate(transmissions):
        channel = channels[client] if channels is not None else pos
        frames = update_frames(upd, sf, channel, start, l, tx_power, sender=str(client))
        received[client] = link.receive(frames, SERVER, distances[client], rng_for(client))
        updates[client] = upd
        airtime[client] = upd.n * l
        end = max(end, start + upd.n * l)
    return UplinkResult(received, updates, airtime, end)


@dataclass
class Simulation:
    """One replication of federated learning over the LoRa link."""

    radio: RadioConfig
    tables: SfTables
    interference: InterferenceConfig
    codec_cfg: CodecConfig
    train: TrainConfig
    schedule: ScheduleConfig
    topology: Topology
    shards: list[Dataset]
    test: Dataset
    seed: int
    link: Link
    theta: np.ndarray = field(init=False)
    metrics: list[RoundMetrics] = field(default_factory=list, init=False)
    log: list[TxRecord] = field(default_factory=list, init=False)

    def __post_init__(self) -> None:
        m = self.schedule.clients_per_round
        if m > self.radio.channel_count:
            raise ValueError(f"{m} clients per round exceed {self.radio.channel_count} channels")
        if m > len(self.shards):
            raise ValueError("more clients per round than clients")
        if len(self.topology.distances) != len(self.shards):
            raise ValueError("topology and shard counts differ")
        self.model = fl.build_model(self.train)
        self.theta = fl.init_global(self.model, self.seed)
        self.sampler = fl.stream(self.seed, fl.SAMPLING)
        self.mtu = phy.mtu(self.schedule.sf, self.tables)
        self.frame_airtime = phy.airtime(self.schedule.sf, self.mtu, self.radio, self.tables)
        self.server_ready = 0.0
        self.previous_end = 0.0
        self.client_ready: dict[int, float] = {}

    def _encode(self, v: np.ndarray, reference: np.ndarray | None = None) -> EncodedUpdate:
        return codec.encode_update(v, self.codec_cfg, self.mtu, self.schedule.fec_rate, reference)

    def run(self) -> RunResult:
        for t in range(1, self.schedule.rounds + 1):
            self.run_round(t)
        return RunResult(self.metrics, self.log)

    def run_round(self, t: int) -> RoundMetrics:
        sch = self.schedule
        l = self.frame_airtime
        sampled = fl.sample_clients(len(self.shards), sch.clients_per_round, self.sampler, self.radio.channel_count)
        global_update = self._encode(self.theta)

        if t == 1:
            # Every device already holds the seeded initial model.
            t0 = 0.0
            dl_airtime = 0.0
            received_global = self.theta
            decoded = list(sampled)
        else:
            candidate = max(self.server_ready, self.previous_end)
            lead = global_update.n * l + sch.processing_delay
            for c in sampled:
                candidate = max(candidate, self.client_ready.get(c, 0.0) - lead)
            t0 = downlink_start_time(candidate, sch.lorawan_class, sch.ping_period)
            frames = update_frames(global_update, sch.sf, 0, t0, l, self.radio.tx_power, sender="server")
            dl_airtime = global_update.n * l
            self.log.append(TxRecord(SERVER, t, t0, global_update.n, dl_airtime))
            block = global_update.fec_block()
            decoded = []
            received_global = None
            for c in sampled:
                got = self.link.receive(frames, c, self.topology.distances[c], fl.stream(self.seed, fl.LINK, t, 0, c))
                if codec.fec_decodable(got, global_update.k):
                    payload = codec.reassemble(block, got, global_update.byte_size)
                    received_global = codec.decode_payload(payload, self.model.size)
                    decoded.append(c)
        self.server_ready = t0 + update_interval(global_update, l, sch.duty_cycle, sch.lorawan_class, sch.ping_period)
        dl_end = t0 + dl_airtime
        up_start = dl_end + sch.processing_delay

        transmissions = []
        for c in decoded:
            local = fl.train_round_client(self.model, received_global, self.shards[c], self.train, self.seed, t, c)
            ref = received_global if self.codec_cfg.differential else None
            transmissions.append((c, self._encode(local, ref)))
        up = uplink_phase(
            transmissions,
            up_start,
            self.link,
            self.topology.distances,
            sch.sf,
            l,
            self.radio.tx_power,
            lambda c: fl.stream(self.seed, fl.LINK, t, 1, c),
            {c: i for i, c in enumerate(sampled)},
        )

        updates = []
        for c in sorted(up.received):
            upd = up.updates[c]
            self.log.append(TxRecord(c, t, up_start, upd.n, up.airtime[c]))
            self.client_ready[c] = up_start + update_interval(upd, l, sch.duty_cycle)
            if codec.fec_decodable(up.received[c], upd.k):
                payload = codec.reassemble(upd.fec_block(), up.received[c], upd.byte_size)
                # The server holds the unquantized global model the difference was taken from.
                ref = self.theta if upd.is_differential else None
                updates.append((c, codec.decode_payload(payload, self.model.size, ref)))
        if updates:
            self.theta = fl.fedavg([(v, len(self.shards[c])) for c, v in updates]).astype(np.float32)

        accuracy, loss = fl.evaluate(self.model, self.theta, self.test)
        completion = up.end if transmissions else dl_end
        self.previous_end = completion
        metrics = RoundMetrics(
            round=t,
            accuracy=accuracy,
            loss=loss,
            completion_time=completion,
            downlink_start=t0,
            downlink_airtime=dl_airtime,
            cumulative_uplink_airtime=sum(up.airtime.values()),
            downlink_bytes=global_update.byte_size if t > 1 else 0,
            downlink_k=global_update.k if t > 1 else 0,
            downlink_n=global_update.n if t > 1 else 0,
            uplink_bytes=sum(u.byte_size for u in up.updates.values()),
            sampled=tuple(sampled),
            decoded=tuple(sorted(decoded)),
            delivered=tuple(c for c, _ in updates),
        )
        self.metrics.append(metrics)
        return metrics
