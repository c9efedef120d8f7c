from gsdopt.model import InformationRates
from gsdopt.optimizer import OptimConfig, OptimResult
from gsdopt.store import ResultStore
from tests.helpers import make_spec


def test_save_and_lookup(tmp_path):
    store = ResultStore(str(tmp_path / "cache" / "gsdopt.db"))
    spec = make_spec("pocock", 3, beta=0.2)
    cfg = OptimConfig()
    assert store.lookup(spec, cfg) is None
    res = OptimResult(InformationRates((0.35, 0.68, 1.0)), 9.1, 250.0, 321, 10, True)
    rid, created = store.save(spec, cfg, res)
    assert created
    assert store.save(spec, cfg, res) == (rid, False)
    hit = store.lookup(spec, cfg)
    assert hit.rates == res.rates
    assert hit.ess_h1 == 250.0
    assert hit.converged


def test_hash_ignores_rates_and_workers():
    spec = make_spec("obf", 3)
    with_rates = spec.with_rates(InformationRates.equal(3))
    assert ResultStore.spec_hash(spec, OptimConfig()) == ResultStore.spec_hash(
        with_rates, OptimConfig(workers=4))
    assert ResultStore.spec_hash(spec, OptimConfig()) != ResultStore.spec_hash(
        make_spec("obf", 3, beta=0.2), OptimConfig())
