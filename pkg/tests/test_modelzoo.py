import numpy as np
import pytest

from proxyrecon import modelzoo
from proxyrecon.dataset import ProxyMatrix, TimeSeries, gen_synthetic_locals, gen_synthetic_world
from proxyrecon.errors import DataError
from proxyrecon.modelzoo import ModelSpec, fit, forward_stepwise, predict, zoo_ensemble_specs
from proxyrecon.nullmodels import PseudoProxyClass
from proxyrecon.harness import BlockScheme

FAST = dict(cv_reps=2, grid_size=20)


@pytest.fixture(scope="module")
def world():
    y, X = gen_synthetic_world(80, 12, 0.6, seed=3, start_year=1900)
    Z = gen_synthetic_locals(y, 8, seed=4)
    return y, X, Z


def test_labels_round_trip():
    specs = zoo_ensemble_specs()
    assert len(specs) == 27
    labels = [s.label for s in specs]
    assert len(set(labels)) == 27
    for s in specs:
        assert ModelSpec.parse(s.label) == s
    for t in ("ArmaBaseline", "TwoStageLassoLocal", "LassoPC7"):
        assert ModelSpec.parse(t).label == t
    with pytest.raises(DataError):
        ModelSpec.parse("Nonsense")
    with pytest.raises(DataError):
        ModelSpec("PCRegression")
    with pytest.raises(DataError):
        ModelSpec("TwoStagePC", g=0, p=1)


def _bruteforce_stepwise(X, y, c):
    # oracle: refit OLS for every candidate at every step
    n = y.size
    chosen = []

    def crit(cols):
        D = np.column_stack([np.ones(n)] + [X[:, j] for j in cols])
        r = y - D @ np.linalg.lstsq(D, y, rcond=None)[0]
        return n * np.log(r @ r / n) + c * len(cols)

    cur = crit([])
    while True:
        cand = [(crit(chosen + [j]), j) for j in range(X.shape[1]) if j not in chosen]
        if not cand:
            break
        v, j = min(cand)
        if not v < cur:
            break
        chosen.append(j)
        cur = v
    return chosen


@pytest.mark.parametrize("seed", range(5))
def test_forward_stepwise_matches_bruteforce(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 8))
    y = X[:, 2] - 0.5 * X[:, 5] + rng.normal(size=40)
    for crit, c in (("aic", 2.0), ("bic", np.log(40))):
        got, _ = forward_stepwise(X, y, crit)
        assert got == _bruteforce_stepwise(X, y, c)


def test_intercept_only_and_pc_regression(world):
    y, X, Z = world
    tr = y.years[20:]
    m = fit(ModelSpec("InterceptOnly"), y, X, train_years=tr)
    np.testing.assert_allclose(predict(m, y.years[:5]), y.at(tr).mean())
    m = fit(ModelSpec("PCRegression", k=X.shape[1]), y, X, train_years=tr)
    D = np.column_stack([np.ones(tr.size), X.rows(tr)])
    beta = np.linalg.lstsq(D, y.at(tr), rcond=None)[0]
    test = y.years[:20]
    oracle = np.column_stack([np.ones(20), X.rows(test)]) @ beta
    np.testing.assert_allclose(predict(m, test, X), oracle, atol=1e-8)


def test_pcs_use_full_span(world):
    y, X, _ = world
    a = fit(ModelSpec("PCRegression", k=2), y, X, train_years=y.years[:40])
    b = fit(ModelSpec("PCRegression", k=2), y, X, train_years=y.years[40:])
    np.testing.assert_array_equal(a.parts["basis"].loadings, b.parts["basis"].loadings)


def test_all_kinds_fit_and_predict(world):
    y, X, Z = world
    tr = np.r_[y.years[:30], y.years[60:]]
    test = y.years[30:60]
    for label in ("InterceptOnly", "PC3", "LassoOnProxies", "LassoPC5", "StepwiseAIC",
                  "StepwiseBIC_PC", "TwoStageLassoLocal", "TwoStagePC_g2_p3"):
        spec = ModelSpec.parse(label, **FAST)
        m = fit(spec, y, X, Z, seed=1, train_years=tr)
        p = predict(m, test, X, Z)
        assert p.shape == (30,) and np.all(np.isfinite(p))
        if spec.needs_local:
            assert np.all(np.isfinite(predict(m, test, X, Z, use_local=True)))
    # determinism under a fixed seed
    s = ModelSpec("LassoOnProxies", **FAST)
    a = predict(fit(s, y, X, seed=5, train_years=tr), test, X)
    b = predict(fit(s, y, X, seed=5, train_years=tr), test, X)
    assert np.array_equal(a, b)


def test_two_stage_pc_matches_manual(world):
    y, X, Z = world
    tr = y.years[10:]
    m = fit(ModelSpec("TwoStagePC", g=2, p=3), y, X, Z, train_years=tr)
    from proxyrecon.numerics import principal_components
    zb = principal_components(Z.data, 2, center=True)
    xb = principal_components(X.data, 3, center=True)
    ti = tr - y.start_year
    zs, xs = zb.scores[ti], xb.scores[ti]
    D = np.column_stack([np.ones(tr.size), zs])
    g = np.linalg.lstsq(D, y.at(tr), rcond=None)[0]
    E = np.column_stack([np.ones(tr.size), xs])
    H = np.linalg.lstsq(E, zs, rcond=None)[0]
    te = np.arange(10)
    zhat = np.column_stack([np.ones(10), xb.scores[te]]) @ H
    oracle = np.column_stack([np.ones(10), zhat]) @ g
    np.testing.assert_allclose(predict(m, y.years[:10], X, Z), oracle, atol=1e-8)


def test_two_stage_lasso_fallback():
    rng = np.random.default_rng(0)
    y = TimeSeries(0, rng.normal(size=40))
    Z = ProxyMatrix(0, ("z1", "z2"), np.zeros((40, 2)) + np.arange(2))
    X = ProxyMatrix(0, ("x",), rng.normal(size=(40, 1)))
    m = fit(ModelSpec("TwoStageLassoLocal", **FAST), y, X, Z)
    assert m.fallback
    np.testing.assert_allclose(predict(m, np.arange(5), X, Z), y.values.mean())


def test_arma_baseline_forwards_and_backwards():
    rng = np.random.default_rng(1)
    e = rng.normal(size=120)
    v = np.zeros(120)
    for t in range(1, 120):
        v[t] = 0.7 * v[t - 1] + e[t]
    y = TimeSeries(1000, v)
    spec = ModelSpec("ArmaBaseline", arma_max=1)
    m = fit(spec, y, train_years=y.years[30:])
    back = predict(m, y.years[:30])
    mod = m.parts["model"]
    if mod.order == (1, 0):
        first = v[30] - mod.mean
        np.testing.assert_allclose(back[-1], mod.mean + mod.ar[0] * first, atol=1e-8)
    assert abs(back[0] - mod.mean) < abs(back[-1] - mod.mean) + 1e-12
    with pytest.raises(DataError):
        predict(m, y.years[40:45])


def test_missing_inputs_raise(world):
    y, X, Z = world
    with pytest.raises(DataError):
        fit(ModelSpec("PC2"), y)
    with pytest.raises(DataError):
        fit(ModelSpec("TwoStagePC", g=1, p=1), y, X)


def test_augmentation_test_bounds_and_oracle(world):
    y, X, _ = world
    cls = PseudoProxyClass.white()
    sch = BlockScheme(block_len=30)
    spec = ModelSpec("LassoOnProxies", **FAST)
    res = modelzoo.augmentation_test(X, cls, y, sch, seed=2, spec=spec)
    assert 0 <= res.percent_pseudo <= 100
    assert res.per_block.size == 51
    # near-zero pseudo columns can never beat real proxies
    low = modelzoo.augmentation_test(X, cls, y, sch, seed=2, spec=spec,
                                     pseudo=lambda rng, n, m: 1e-6 * rng.standard_normal((n, m)))
    assert low.percent_pseudo == 0
