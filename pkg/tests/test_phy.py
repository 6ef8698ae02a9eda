import math

import numpy as np
import pytest

from lorafl import phy
from lorafl.phy import RadioConfig, SfTables

CFG = RadioConfig()


# Hand-evaluated time-on-air at 125 kHz, CR 4/5, 8-symbol preamble,
# explicit header, CRC on, low-data-rate optimization for SF 11/12.
@pytest.mark.parametrize(
    "sf, payload, expected",
    [
        (7, 51, 0.102656),
        (7, 222, 0.348416),
        (9, 115, 0.615424),
        (10, 51, 0.616448),
        (12, 51, 2.465792),
    ],
)
def test_airtime_reference_values(sf, payload, expected):
    assert phy.airtime(sf, payload, CFG) == pytest.approx(expected, abs=1e-9)


def _airtime_oracle(sf, payload, de):
    ts = 2**sf / 125e3
    n = 8 + max(math.ceil((8 * payload - 4 * sf + 28 + 16) / (4 * (sf - 2 * de))) * 5, 0)
    return (12.25 + n) * ts


def test_airtime_matches_symbol_formula_everywhere():
    for sf in phy.SPREADING_FACTORS:
        de = 1 if sf >= 11 else 0
        for payload in range(1, phy.mtu(sf) + 1):
            assert phy.airtime(sf, payload, CFG) == pytest.approx(_airtime_oracle(sf, payload, de), rel=1e-12)


def test_airtime_monotone_in_sf_and_payload():
    for sf in range(7, 12):
        assert phy.airtime(sf + 1, 51, CFG) > phy.airtime(sf, 51, CFG)
    for sf in phy.SPREADING_FACTORS:
        times = [phy.airtime(sf, p, CFG) for p in range(1, phy.mtu(sf) + 1)]
        assert all(b >= a for a, b in zip(times, times[1:]))


def test_airtime_rejects_oversize_and_empty():
    with pytest.raises(phy.FragmentationRequired):
        phy.airtime(9, 116, CFG)
    with pytest.raises(ValueError):
        phy.airtime(7, 0, CFG)
    with pytest.raises(ValueError):
        phy.airtime(6, 10, CFG)


def test_mtu_table():
    assert [phy.mtu(sf) for sf in phy.SPREADING_FACTORS] == [222, 222, 115, 51, 51, 51]


def test_received_power_at_reference_distance():
    # At d = d_ref the distance term vanishes.
    assert phy.received_power(14.0, 40.0, 1.0, CFG) == pytest.approx(14 - 127.41 + 10)


def test_received_power_slope_per_decade():
    p1 = phy.received_power(14.0, 50.0, 1.0, CFG)
    p2 = phy.received_power(14.0, 500.0, 1.0, CFG)
    assert p1 - p2 == pytest.approx(20.8)
    conv = RadioConfig(path_loss_exponent=2.08, conventional_path_loss=True)
    assert phy.received_power(14.0, 500.0, 1.0, conv) == pytest.approx(p2)


def test_received_power_fading_adds_in_db():
    base = phy.received_power(14.0, 200.0, 1.0, CFG)
    assert phy.received_power(14.0, 200.0, 10.0, CFG) == pytest.approx(base + 10.0)


def test_received_power_errors():
    with pytest.raises(ValueError):
        phy.received_power(14.0, 0.0, 1.0, CFG)
    with pytest.raises(ValueError):
        phy.received_power(14.0, 10.0, 0.0, CFG)


def test_sensitivity_boundary_is_inclusive():
    t = SfTables()
    assert phy.above_sensitivity(-129.0, 9, t)
    assert not phy.above_sensitivity(-129.0001, 9, t)


def test_capture_threshold():
    t = SfTables()
    assert phy.capture_ok(-100.0, -106.0, 7, 7, t)
    assert not phy.capture_ok(-100.0, -105.9, 7, 7, t)
    # Inter-SF rejection lets a weaker wanted frame survive.
    assert phy.capture_ok(-110.0, -100.0, 9, 7, t)


def test_fading_is_unit_mean_exponential():
    a = phy.sample_fading(np.random.default_rng(1), 200_000)
    assert a.min() > 0
    assert a.mean() == pytest.approx(1.0, abs=0.01)
    assert np.mean(a > 1.0) == pytest.approx(math.exp(-1), abs=0.005)


def test_table_validation():
    with pytest.raises(ValueError):
        SfTables(sensitivity={7: -120.0, 8: -121.0, 9: -119.0, 10: -130.0, 11: -131.0, 12: -132.0})
    with pytest.raises(ValueError):
        SfTables(capture=((0.0,),))
