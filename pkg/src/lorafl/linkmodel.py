"""Semi-analytical frame success probability under fading and PPP interference."""

from __future__ import annotations

import hashlib
import math
import threading
import warnings
from dataclasses import astuple, dataclass

import numpy as np
from scipy import integrate, special

from . import phy
from .linksim import InterferenceConfig
from .phy import RadioConfig, SfTables

# Quadrature upper limit on the excess variable: exp(-27.64) < 1e-12.
_TAIL = -math.log(1e-12)


class NumericalFailure(RuntimeError):
    """Quadrature did not converge to the requested accuracy."""


def lower_incomplete_gamma(s: float, x: float) -> float:
    """Unregularized lower incomplete gamma ``int_0^x t**(s-1) e**-t dt``."""
    if not s > 0 or not x >= 0 or not math.isfinite(s):
        raise ValueError(f"lower incomplete gamma needs s > 0 and x >= 0, got s={s}, x={x}")
    if x == 0:
        return 0.0
    return float(special.gammainc(s, x) * special.gamma(s))


@dataclass(frozen=True)
class AnalyticalParams:
    """Inputs of the success-probability integral, all in linear units and seconds."""

    intensity: float  # interferers per m^2
    frame_rate: float  # frames per second per interferer
    radius: float  # interference radius R_I in meters
    channels: int
    exponent: float  # path-loss exponent of the linear power law
    gamma0: float  # mean received power at 1 m per mW transmitted
    tx_power: float  # mW
    sensitivity: tuple[float, ...]  # mW, SF 7..12
    capture: tuple[tuple[float, ...], ...]  # linear SIR thresholds
    own_airtime: tuple[float, ...]  # seconds, SF 7..12
    interferer_airtime: tuple[float, ...]  # seconds, SF 7..12
    sf_weights: tuple[float, ...] = (1 / 6,) * 6

    def __post_init__(self) -> None:
        if self.intensity < 0 or self.frame_rate < 0:
            raise ValueError("intensity and frame rate must be >= 0")
        if self.radius <= 0 or self.channels < 1 or self.exponent <= 0:
            raise ValueError("radius, channel count and exponent must be positive")
        if not math.isclose(sum(self.sf_weights), 1.0, rel_tol=1e-9):
            raise ValueError("SF weights must sum to 1")
        if min(self.own_airtime) <= 0 or min(self.interferer_airtime) <= 0:
            raise ValueError("airtimes must be positive")

    @property
    def mean_interferers(self) -> float:
        return self.intensity * math.pi * self.radius**2

    def digest(self) -> str:
        return hashlib.sha256(repr(astuple(self)).encode()).hexdigest()[:16]

    @classmethod
    def from_radio(
        cls,
        cfg: RadioConfig,
        tables: SfTables,
        interference: InterferenceConfig,
        sf_weights: tuple[float, ...] | None = None,
    ) -> "AnalyticalParams":
        """Match the constants to the link budget used by the full simulation."""
        x = cfg.decay_exponent
        gamma0 = 10 ** ((cfg.antenna_gain - cfg.ref_loss) / 10.0) * cfg.ref_distance**x
        sfs = phy.SPREADING_FACTORS
        durations = interference.durations(cfg, tables)
        return cls(
            intensity=interference.intensity,
            frame_rate=interference.frame_rate / 3600.0,
            radius=interference.radius,
            channels=cfg.channel_count,
            exponent=x,
            gamma0=gamma0,
            tx_power=phy.dbm_to_mw(cfg.tx_power),
            sensitivity=tuple(phy.dbm_to_mw(tables.sensitivity[sf]) for sf in sfs),
            capture=tuple(tuple(10 ** (v / 10.0) for v in row) for row in tables.capture),
            own_airtime=tuple(phy.airtime(sf, phy.mtu(sf, tables), cfg, tables) for sf in sfs),
            interferer_airtime=tuple(durations[sf] for sf in sfs),
            sf_weights=sf_weights if sf_weights is not None else (1 / 6,) * 6,
        )


def outage_threshold(sf: int, d: float, params: AnalyticalParams) -> float:
    """Smallest fading gain that keeps the frame above sensitivity."""
    return params.sensitivity[sf - 7] * d**params.exponent / (params.gamma0 * params.tx_power)


def _interference_term(a: float, sf: int, d: float, params: AnalyticalParams, consts) -> float:
    alpha = params.exponent
    s = 2.0 / alpha
    weights, dur, xi, r_alpha, coef = consts
    beta = a * d ** (-alpha) / xi
    lig = special.gammainc(s, beta * r_alpha) * special.gamma(s)
    total = float(np.sum((params.own_airtime[sf - 7] + dur) * weights * beta ** (-s) * lig))
    return coef * total


def success_probability(sf: int, d: float, params: AnalyticalParams) -> float:
    """Probability that one frame at SF ``sf`` survives fading and interference at ``d`` meters."""
    sf = phy.check_sf(sf)
    if not d > 0:
        raise ValueError("distance must be positive")
    a0 = outage_threshold(sf, d, params)
    if not math.isfinite(a0):
        raise NumericalFailure(f"non-finite outage threshold at SF{sf}, d={d}")
    n_bar = params.mean_interferers
    if n_bar == 0 or params.frame_rate == 0:
        return min(1.0, max(0.0, math.exp(-a0)))
    if a0 > _TAIL + 50:
        return 0.0

    alpha = params.exponent
    consts = (
        np.asarray(params.sf_weights, dtype=float),
        np.asarray(params.interferer_airtime, dtype=float),
        np.asarray(params.capture[sf - 7], dtype=float),
        params.radius**alpha,
        2.0 * params.frame_rate / (alpha * params.radius**2 * params.channels),
    )

    def integrand(u: float) -> float:
        inner = 1.0 - _interference_term(a0 + u, sf, d, params, consts)
        inner = min(1.0, max(0.0, inner))
        return inner**n_bar * math.exp(-u)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, err = integrate.quad(integrand, 0.0, _TAIL, epsabs=0.0, epsrel=1e-10, limit=200)
        except integrate.IntegrationWarning as exc:
            raise NumericalFailure(f"quadrature failed at SF{sf}, d={d}: {exc}") from exc
    p = math.exp(-a0) * value
    if not math.isfinite(p) or (value > 0 and err > 1e-6 * value):
        raise NumericalFailure(f"quadrature error too large at SF{sf}, d={d} (est. {err:g})")
    return min(1.0, max(0.0, p))


def bernoulli_outcome(p: float, rng: np.random.Generator) -> bool:
    if not 0.0 <= p <= 1.0:
        raise ValueError("probability must lie in [0, 1]")
    return bool(rng.random() <= p)


class ProbabilityCache:
    """Memoize ``success_probability`` on (SF, quantized distance, params).

    Distances are snapped to ``resolution`` meters before evaluation whether or
    not caching is enabled, so toggling the cache never changes results.
    """

    def __init__(self, params: AnalyticalParams, resolution: float = 0.1, enabled: bool = True) -> None:
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        self.params = params
        self.resolution = resolution
        self.enabled = enabled
        self.integrations = 0
        self._key = params.digest()
        self._values: dict[tuple[int, int, str], float] = {}
        self._lock = threading.Lock()

    def __call__(self, sf: int, d: float) -> float:
        step = max(1, round(d / self.resolution))
        key = (sf, step, self._key)
        if self.enabled:
            hit = self._values.get(key)
            if hit is not None:
                return hit
        value = success_probability(sf, step * self.resolution, self.params)
        self.integrations += 1
        if self.enabled:
            with self._lock:
                self._values.setdefault(key, value)
        return value
