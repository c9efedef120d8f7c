import numpy as np
import pytest

from gsdopt.boundaries import FutilityMode
from gsdopt.design import Hypothesis, characterize
from gsdopt.errors import DesignValidationError
from gsdopt.gauss import StageDistribution, normal_quantile
from gsdopt.model import BoundarySet, InformationRates
from gsdopt.oracle import SimConfig, mc_exit_probabilities, mc_expected_sample_size
from tests.helpers import make_spec

CFG = SimConfig(paths=200_000, seed=11)


def test_single_stage_tail():
    dist = StageDistribution(InformationRates((1.0,)), 0.0)
    mc = mc_exit_probabilities(dist, BoundarySet((normal_quantile(0.975),)), CFG)
    assert abs(mc.rejection() - 0.025) <= 4 * mc.se(0.025)
    assert mc.stopping.sum() == pytest.approx(1.0, abs=1e-12)


def test_fixed_seed_is_reproducible():
    dist = StageDistribution(InformationRates((0.5, 1.0)), 1.0)
    bounds = BoundarySet((2.5, 2.0))
    cfg = SimConfig(paths=30_000, seed=3, batch_size=7_000)
    a = mc_exit_probabilities(dist, bounds, cfg)
    b = mc_exit_probabilities(dist, bounds, cfg)
    np.testing.assert_array_equal(a.upper, b.upper)
    c = mc_exit_probabilities(dist, bounds, SimConfig(paths=30_000, seed=4, batch_size=7_000))
    assert not np.array_equal(a.upper, c.upper)


def test_batches_cover_all_paths():
    sizes = [n for n, _ in SimConfig(paths=250_000, batch_size=100_000).batches()]
    assert sizes == [100_000, 100_000, 50_000]


def test_invalid_config():
    with pytest.raises(DesignValidationError):
        SimConfig(paths=0)
    with pytest.raises(DesignValidationError):
        SimConfig(rng_kind="mt19937")


def test_fixed_design_ess_has_no_variance():
    dist = StageDistribution(InformationRates((1.0,)), 2.0)
    mean, se = mc_expected_sample_size(dist, BoundarySet((1.96,)), (168.1,),
                                       SimConfig(paths=1000))
    assert mean == 168.1
    assert se == 0.0


def test_ess_from_exit_counts_matches_direct_estimate():
    spec = make_spec("pocock", 3, beta=0.2, rates=(0.4, 0.7, 1.0))
    oc = characterize(spec)
    dist = StageDistribution(oc.rates, oc.drift)
    cfg = SimConfig(paths=50_000, seed=5)
    mc = mc_exit_probabilities(dist, oc.boundaries, cfg)
    assert mc.expected_sample_size(oc.n_per_stage) == mc_expected_sample_size(
        dist, oc.boundaries, oc.n_per_stage, cfg)
    assert mc.rejection_se() == pytest.approx(
        np.sqrt(mc.rejection() * (1 - mc.rejection()) / cfg.paths))
    with pytest.raises(DesignValidationError):
        mc.expected_sample_size(oc.n_per_stage[:2])


@pytest.mark.parametrize("family,futility", [
    ("obf", FutilityMode.NONE),
    ("pocock", FutilityMode.NON_BINDING),
    ("haybittle-peto", FutilityMode.NONE),
])
def test_analytic_matches_monte_carlo(family, futility):
    rates = InformationRates((0.35, 0.7, 1.0))
    oc = characterize(make_spec(family, 3, beta=0.2, rates=rates, futility=futility))
    for h in (Hypothesis.H0, Hypothesis.H1):
        dist = StageDistribution(rates, oc.drift * oc.spec.endpoint.effect_ratio(h))
        mc = mc_exit_probabilities(dist, oc.boundaries, CFG)
        analytic = oc.exit_probs[h]
        for kind in ("efficacy", "futility"):
            a = getattr(analytic, kind)
            m = getattr(mc, kind)
            assert np.all(np.abs(a - m) <= 4 * mc.se(a) + 1e-12), (h, kind, a, m)
        mean, se = mc_expected_sample_size(dist, oc.boundaries, oc.n_per_stage, CFG)
        assert abs(mean - oc.ess[h]) <= 4 * se


@pytest.mark.slow
def test_hypress_optimal_exits_at_ten_million_paths(hypress_spec):
    rates = InformationRates((0.574, 0.763, 1.0))
    oc = characterize(hypress_spec.with_rates(rates))
    dist = StageDistribution(rates, oc.drift)
    mc = mc_exit_probabilities(dist, oc.boundaries, SimConfig(paths=10_000_000, seed=1))
    expected = np.array([0.2760, 0.2802, 0.2438])
    assert np.all(np.abs(mc.efficacy - expected) <= 3 * mc.se(expected) + 1e-3)


RANDOM_FAMILIES = [
    ("obf", {}),
    ("pocock", {}),
    ("haybittle-peto", {}),
    ("hsd", {"gamma": -2.0}),
    ("kim-demets", {"rho": 3.0}),
]


def _random_design(rng, i):
    stages = int(rng.integers(2, 5))
    interims = np.sort(rng.uniform(0.15, 0.9, stages - 1))
    if np.any(np.diff(interims) < 0.05):
        interims = np.linspace(0.2, 0.8, stages - 1)
    family, shape = RANDOM_FAMILIES[i % len(RANDOM_FAMILIES)]
    futility = FutilityMode.NON_BINDING if i % 2 else FutilityMode.NONE
    beta = 0.1 if (i // 2) % 2 else 0.2
    return make_spec(family, stages, beta=beta, rates=InformationRates.from_interims(interims),
                     futility=futility, **shape)


def _agrees_with_monte_carlo(oc, cfg):
    """Interim exits, final rejection and ESS within 3 se under H0 and H1."""
    for h in (Hypothesis.H0, Hypothesis.H1):
        dist = StageDistribution(oc.rates, oc.drift * oc.spec.endpoint.effect_ratio(h))
        mc = mc_exit_probabilities(dist, oc.boundaries, cfg)
        analytic = oc.exit_probs[h]
        # the final futility share is one minus the others
        pairs = [(analytic.efficacy, mc.efficacy), (analytic.futility[:-1], mc.futility[:-1])]
        for a, m in pairs:
            if np.any(np.abs(a - m) > 3 * mc.se(a) + 1e-12):
                return False
        mean, se = mc.expected_sample_size(oc.n_per_stage)
        if abs(mean - oc.ess[h]) > 3 * se:
            return False
    return True


@pytest.mark.slow
def test_random_designs_agree_with_monte_carlo():
    rng = np.random.default_rng(2024)
    agree = 0
    for i in range(50):
        oc = characterize(_random_design(rng, i))
        agree += _agrees_with_monte_carlo(oc, SimConfig(paths=10_000_000, seed=i))
    assert agree >= 47
