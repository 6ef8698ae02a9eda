"""LoRa physical layer: SF tables, time-on-air and the fading link budget."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPREADING_FACTORS = (7, 8, 9, 10, 11, 12)

# EU868, 125 kHz maximum payload per SF.
MTU_BYTES = {7: 222, 8: 222, 9: 115, 10: 51, 11: 51, 12: 51}

# SX1276-class receiver sensitivity at 125 kHz (dBm).
DEFAULT_SENSITIVITY_DBM = {7: -123.0, 8: -126.0, 9: -129.0, 10: -132.0, 11: -133.0, 12: -136.0}

# SIR thresholds (dB) for a wanted signal with SF row against an interferer
# with SF column.  Co-SF uses the usual 6 dB rejection; the inter-SF entries
# are the commonly used Goursaud/Croce measurements.
DEFAULT_CAPTURE_DB = (
    (6.0, -8.0, -9.0, -9.0, -9.0, -9.0),
    (-11.0, 6.0, -11.0, -12.0, -13.0, -13.0),
    (-15.0, -13.0, 6.0, -13.0, -14.0, -15.0),
    (-19.0, -18.0, -17.0, 6.0, -17.0, -18.0),
    (-22.0, -22.0, -21.0, -20.0, 6.0, -20.0),
    (-25.0, -25.0, -25.0, -24.0, -23.0, 6.0),
)


class FragmentationRequired(ValueError):
    """Payload does not fit in a single frame at the requested SF."""


def check_sf(sf: int) -> int:
    if sf not in MTU_BYTES:
        raise ValueError(f"spreading factor must be in 7..12, got {sf!r}")
    return int(sf)


@dataclass(frozen=True)
class RadioConfig:
    """Radio and propagation settings shared by every device.

    ``path_loss_exponent`` multiplies ``log10(d / ref_distance)`` directly
    (the dB-per-decade slope).  With ``conventional_path_loss`` it is instead
    treated as the dimensionless exponent and multiplied by ten.
    """

    bandwidth: float = 125_000.0
    coding_rate_index: int = 1
    preamble_symbols: int = 8
    explicit_header: bool = True
    crc: bool = True
    low_data_rate_optimize: dict[int, bool] = field(
        default_factory=lambda: {7: False, 8: False, 9: False, 10: False, 11: True, 12: True}
    )
    tx_power: float = 14.0
    path_loss_exponent: float = 20.8
    ref_loss: float = 127.41
    ref_distance: float = 40.0
    antenna_gain: float = 10.0
    channel_count: int = 8
    conventional_path_loss: bool = False

    def __post_init__(self) -> None:
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if not 1 <= self.coding_rate_index <= 4:
            raise ValueError("coding_rate_index must be in 1..4")
        if self.channel_count < 1:
            raise ValueError("channel_count must be >= 1")
        if self.path_loss_exponent <= 0:
            raise ValueError("path_loss_exponent must be positive")
        if self.ref_distance <= 0:
            raise ValueError("ref_distance must be positive")

    @property
    def db_per_decade(self) -> float:
        if self.conventional_path_loss:
            return 10.0 * self.path_loss_exponent
        return self.path_loss_exponent

    @property
    def decay_exponent(self) -> float:
        """Exponent of the linear power decay ``d**-x`` implied by the budget."""
        return self.db_per_decade / 10.0


@dataclass(frozen=True)
class SfTables:
    sensitivity: dict[int, float] = field(default_factory=lambda: dict(DEFAULT_SENSITIVITY_DBM))
    capture: tuple[tuple[float, ...], ...] = DEFAULT_CAPTURE_DB
    mtu: dict[int, int] = field(default_factory=lambda: dict(MTU_BYTES))

    def __post_init__(self) -> None:
        if sorted(self.sensitivity) != list(SPREADING_FACTORS):
            raise ValueError("sensitivity table must cover SF 7..12")
        values = [self.sensitivity[sf] for sf in SPREADING_FACTORS]
        if any(b >= a for a, b in zip(values, values[1:])):
            raise ValueError("sensitivity must be strictly decreasing in SF")
        cap = np.asarray(self.capture, dtype=float)
        if cap.shape != (6, 6) or not np.all(np.isfinite(cap)):
            raise ValueError("capture matrix must be a finite 6x6 table")
        if sorted(self.mtu) != list(SPREADING_FACTORS) or min(self.mtu.values()) < 3:
            raise ValueError("mtu table must cover SF 7..12 with at least 3 bytes")

    def capture_db(self, sf_signal: int, sf_interferer: int) -> float:
        return self.capture[sf_signal - 7][sf_interferer - 7]


def mtu(sf: int, tables: SfTables | None = None) -> int:
    sf = check_sf(sf)
    return (tables.mtu if tables is not None else MTU_BYTES)[sf]


def symbol_time(sf: int, cfg: RadioConfig) -> float:
    return (2**sf) / cfg.bandwidth


def payload_symbols(sf: int, payload: int, cfg: RadioConfig) -> int:
    de = 1 if cfg.low_data_rate_optimize.get(sf, False) else 0
    h = 0 if cfg.explicit_header else 1
    crc = 16 if cfg.crc else 0
    num = 8 * payload - 4 * sf + 28 + crc - 20 * h
    blocks = math.ceil(num / (4 * (sf - 2 * de)))
    return 8 + max(blocks * (cfg.coding_rate_index + 4), 0)


def airtime(sf: int, payload: int, cfg: RadioConfig, tables: SfTables | None = None) -> float:
    """Time on air in seconds of one frame carrying ``payload`` bytes."""
    sf = check_sf(sf)
    if payload < 1:
        raise ValueError("frames always carry at least one payload byte")
    limit = mtu(sf, tables)
    if payload > limit:
        raise FragmentationRequired(f"{payload} B exceeds the SF{sf} MTU of {limit} B")
    ts = symbol_time(sf, cfg)
    return (cfg.preamble_symbols + 4.25) * ts + payload_symbols(sf, payload, cfg) * ts


def received_power(tx_dbm: float, d: float, fading: float, cfg: RadioConfig) -> float:
    """Received power in dBm at distance ``d`` meters under power fading ``fading``."""
    if not d > 0:
        raise ValueError("distance must be positive")
    if not fading > 0:
        raise ValueError("fading coefficient must be positive")
    return (
        tx_dbm
        - cfg.ref_loss
        + cfg.antenna_gain
        - cfg.db_per_decade * math.log10(d / cfg.ref_distance)
        + 10.0 * math.log10(fading)
    )


def mean_received_mw(d: float, cfg: RadioConfig) -> float:
    return 10.0 ** (received_power(cfg.tx_power, d, 1.0, cfg) / 10.0)


def sample_fading(rng: np.random.Generator, size: int | None = None):
    """Rayleigh block fading power gain, Exp(1)."""
    # standard_exponential can return exactly 0.0 with negligible probability
    a = rng.standard_exponential(size)
    return np.maximum(a, np.finfo(float).tiny) if size is not None else max(a, np.finfo(float).tiny)


def above_sensitivity(p_r: float, sf: int, tables: SfTables) -> bool:
    return p_r >= tables.sensitivity[sf]


def capture_ok(p_sig: float, p_int: float, sf_sig: int, sf_int: int, tables: SfTables) -> bool:
    return p_sig - p_int >= tables.capture_db(sf_sig, sf_int)


def dbm_to_mw(p: float) -> float:
    return 10.0 ** (p / 10.0)
