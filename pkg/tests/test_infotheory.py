import math

import numpy as np
import pytest

from afddim.channel import SufficientStats
from afddim.infotheory import (
    mi_gaussian, mi_monte_carlo, mi_small_snr_slope, mi_via_immse, mmse_curve, mmse_discrete,
    mmse_gaussian,
)
from afddim.signal import build_constellation
from oracles import mmse_quadrature


@pytest.mark.parametrize("M,gamma", [(4, 0.3), (4, 1.0), (4, 10.0), (16, 5.0), (16, 20.0), (16, 31.6)])
def test_mmse_matches_quadrature(M, gamma):
    c = build_constellation(M)
    ref = mmse_quadrature(c.points, c.prior, gamma)
    assert abs(mmse_discrete(c, gamma) - ref) < 1e-8 * max(ref, 1e-3)


def test_gauss_hermite_path():
    # non-product prior goes through the 2-D Gauss-Hermite sum
    c = build_constellation(4, prior=[0.1, 0.2, 0.3, 0.4])
    ref = mmse_quadrature(c.points, c.prior, 1.0)
    assert abs(mmse_discrete(c, 1.0) - ref) < 1e-7
    # on a product prior both paths agree where the fixed rule is adequate ...
    u = build_constellation(16)
    assert abs(mmse_discrete(u, 2.0, method="gh") - mmse_discrete(u, 2.0)) < 1e-7
    # ... and the fixed order falls short once the posterior gets sharp
    q = build_constellation(4)
    assert abs(mmse_discrete(q, 10.0, method="gh") / mmse_discrete(q, 10.0) - 1) > 0.01
    with pytest.raises(ValueError):
        mmse_discrete(u, 1.0, method="mc")


def test_mmse_endpoints():
    c = build_constellation(16)
    assert math.isclose(mmse_discrete(c, 0.0), 1.0, rel_tol=1e-12)
    assert mmse_discrete(c, 1e4) < 1e-12
    with pytest.raises(ValueError):
        mmse_discrete(c, -1.0)


def test_mmse_monotone_and_below_gaussian():
    c = build_constellation(64)
    g = np.geomspace(0.01, 100, 30)
    curve = mmse_curve(c, g)
    assert np.all(np.diff(curve.mmse_values) < 0)
    assert np.all(curve.mmse_values <= mmse_gaussian(g) + 1e-12)
    assert curve.prior_id == "qam64"
    with pytest.raises(ValueError):
        mmse_curve(c, [1.0, 0.5])


def test_gaussian_mi():
    assert math.isclose(mi_via_immse("gaussian", 3.0), math.log(4.0), rel_tol=1e-10)
    assert mi_gaussian(3.0, d=4) == 4 * math.log(4.0)
    assert mi_via_immse("gaussian", 0.0) == 0.0
    with pytest.raises(ValueError):
        mi_via_immse("laplace", 1.0)


@pytest.mark.parametrize("M", [4, 16])
def test_discrete_mi_saturates_at_entropy(M):
    c = build_constellation(M)
    assert abs(mi_via_immse(c, 1e3) - math.log(M)) < 1e-6
    assert mi_via_immse(c, 10.0) < mi_via_immse("gaussian", 10.0)


def test_small_snr_slope_is_unit_power():
    assert abs(mi_small_snr_slope(build_constellation(16)) - 1.0) < 1e-3


def test_monte_carlo_mi(rng):
    c = build_constellation(4)
    gamma = 2.0
    n = 40000
    idx = rng.integers(0, 4, n)
    noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
    y = math.sqrt(gamma) * c.points[idx] + noise
    est, se = mi_monte_carlo(c, y, idx, SufficientStats(math.sqrt(gamma), 1.0))
    assert abs(est - mi_via_immse(c, gamma)) < 4 * se
