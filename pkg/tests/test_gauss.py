import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from gsdopt.errors import DomainError
from gsdopt.gauss import (
    QuadratureGrid,
    StageDistribution,
    normal_cdf,
    normal_quantile,
    propagate,
)
from gsdopt.model import BoundarySet, InformationRates


def test_normal_quantile_and_cdf():
    assert normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)
    assert normal_cdf(normal_quantile(0.9)) == pytest.approx(0.9, abs=1e-14)
    with pytest.raises(DomainError):
        normal_quantile(0.0)
    with pytest.raises(DomainError):
        normal_quantile(1.0)


def test_simpson_grid_integrates_polynomials_exactly():
    grid = QuadratureGrid.simpson(-1.0, 2.0, 0.1)
    assert grid.points_per_stage % 2 == 1
    assert grid.integrate(grid.nodes ** 3) == pytest.approx((16 - 1) / 4, abs=1e-12)
    assert QuadratureGrid.simpson(1.0, 1.0, 0.1).empty


def test_stage_distribution_moments():
    dist = StageDistribution(InformationRates((0.25, 0.5, 1.0)), drift=1.5)
    np.testing.assert_allclose(dist.means(), [1.5, 1.5 * math.sqrt(2), 3.0])
    cov = dist.covariance()
    assert cov[0, 2] == pytest.approx(0.5)
    assert cov[1, 2] == pytest.approx(math.sqrt(0.5))
    np.testing.assert_allclose(np.diag(cov), 1.0)


def test_single_stage_tail():
    rates = InformationRates((1.0,))
    bounds = BoundarySet((normal_quantile(0.975),))
    probs = propagate(StageDistribution(rates, 0.0), bounds)
    assert probs.rejection() == pytest.approx(0.025, abs=1e-12)
    assert probs.total() == pytest.approx(1.0, abs=1e-12)


def test_two_stage_matches_bivariate_normal():
    rates = InformationRates((0.5, 1.0))
    bounds = BoundarySet((2.0, 2.0))
    probs = propagate(StageDistribution(rates, 0.0), bounds)
    rho = math.sqrt(0.5)
    both_below = multivariate_normal(mean=[0, 0], cov=[[1, rho], [rho, 1]]).cdf([2.0, 2.0])
    assert probs.upper[0] == pytest.approx(1 - normal_cdf(2.0), abs=1e-12)
    assert probs.upper[1] == pytest.approx(normal_cdf(2.0) - both_below, abs=5e-5)


def test_two_sided_exits_are_symmetric_under_null():
    rates = InformationRates((0.3, 0.7, 1.0))
    bounds = BoundarySet((3.0, 2.5, 2.0), two_sided=True)
    probs = propagate(StageDistribution(rates, 0.0), bounds)
    np.testing.assert_allclose(probs.upper, probs.lower_tail, atol=1e-10)


@pytest.mark.parametrize("drift", [0.0, 1.0, 2.5, 4.0])
def test_probabilities_sum_to_one_with_futility(drift):
    rates = InformationRates((0.2, 0.45, 0.8, 1.0))
    bounds = BoundarySet((3.5, 2.8, 2.3, 2.0), (-1.0, 0.0, 1.0, 2.0))
    probs = propagate(StageDistribution(rates, drift), bounds)
    assert abs(probs.total() - 1.0) <= 1e-8
    assert np.all(probs.continuation[:-1] > 0)
    assert np.all(np.diff(probs.continuation[:-1]) < 0)


def test_efficacy_exits_increase_with_drift():
    rates = InformationRates((1 / 3, 2 / 3, 1.0))
    bounds = BoundarySet((3.0, 2.5, 2.0))
    low = propagate(StageDistribution(rates, 0.5), bounds).rejection()
    high = propagate(StageDistribution(rates, 1.5), bounds).rejection()
    assert high > low


def test_standard_grid_integrates_normal_density():
    grid = QuadratureGrid.simpson(-6.5, 6.5, 13 / 300)
    density = np.exp(-0.5 * grid.nodes ** 2) / math.sqrt(2 * math.pi)
    assert grid.integrate(density) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("drift", [0.0, 2.9])
def test_doubling_grid_points_leaves_probabilities_unchanged(drift):
    dist = StageDistribution(InformationRates((0.3, 0.6, 1.0)), drift)
    bounds = BoundarySet((3.7, 2.5, 2.0), (-0.5, 0.8, 2.0))
    coarse = propagate(dist, bounds, points=301)
    fine = propagate(dist, bounds, points=601)
    np.testing.assert_allclose(coarse.upper, fine.upper, rtol=0, atol=1e-7)
    np.testing.assert_allclose(coarse.futility, fine.futility, rtol=0, atol=1e-7)
