import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from ffci.citest import (
    DataProvider, OracleProvider, SingularityError, ci_test, partial_correlation, permutation_psi_test,
    pooled_sample, psi_ci_test,
)
from ffci.fixtures import CANONICAL, build
from ffci.graph import ContractViolation
from ffci.simulator import Dataset, SimConfig, sample_all, structure_for


def residual_pcorr(data, x, y, cond):
    """Partial correlation as the correlation of least-squares residuals."""
    z = np.column_stack([np.ones(len(data)), data[:, cond]]) if cond else np.ones((len(data), 1))
    rx = data[:, x] - z @ np.linalg.lstsq(z, data[:, x], rcond=None)[0]
    ry = data[:, y] - z @ np.linalg.lstsq(z, data[:, y], rcond=None)[0]
    return np.corrcoef(rx, ry)[0, 1]


def chain_data(n, seed):
    rng = np.random.default_rng(seed)
    x1 = rng.normal(size=n)
    x2 = 0.8 * x1 + rng.normal(size=n)
    x3 = -0.7 * x2 + rng.normal(size=n)
    return np.column_stack([x1, x2, x3])


def test_partial_correlation_matches_residual_oracle():
    d = chain_data(500, 0)
    for x, y, cond in [(0, 2, []), (0, 2, [1]), (1, 2, [0]), (0, 1, [2])]:
        assert partial_correlation(d, x, y, cond) == pytest.approx(residual_pcorr(d, x, y, cond), abs=1e-10)


def test_fisher_z_statistic_and_p_value():
    d = chain_data(400, 1)
    r = residual_pcorr(d, 0, 2, [1])
    stat = np.sqrt(400 - 1 - 3) * abs(np.arctanh(r))
    res = ci_test(d, 0, 2, [1])
    assert res.statistic == pytest.approx(stat, rel=1e-9)
    assert res.p_value == pytest.approx(2 * stats.norm.sf(stat), rel=1e-9)
    assert res.independent == (res.p_value > res.alpha) and res.effective_n == 400


def test_copy_column_is_dependent():
    rng = np.random.default_rng(2)
    y = rng.normal(size=300)
    res = ci_test(np.column_stack([y, y]), 0, 1)
    assert not res.independent and res.p_value < 1e-12


def test_chain_decisions_at_2000():
    d = chain_data(2000, 3)
    assert ci_test(d, 0, 2, [1]).independent
    assert not ci_test(d, 0, 2).independent


def test_independent_columns_size():
    hits = sum(ci_test(np.random.default_rng(s).normal(size=(2000, 2)), 0, 1).independent for s in range(100))
    assert hits >= 90


def test_type_one_error_bound():
    rejections = sum(not ci_test(np.random.default_rng(10_000 + s).normal(size=(1000, 3)), 0, 1, [2]).independent
                     for s in range(500))
    assert rejections / 500 <= 0.05 + 0.03


def test_singular_conditioning_set_reports_columns():
    d = chain_data(200, 4)
    d = np.column_stack([d, 2 * d[:, 1]])
    with pytest.raises(SingularityError) as err:
        ci_test(d, 0, 2, [1, 3])
    assert 3 in err.value.columns
    with pytest.raises(SingularityError):
        ci_test(np.column_stack([d, np.ones(200)]), 0, 2, [4])


def test_too_few_rows_and_overlap():
    with pytest.raises(ContractViolation):
        ci_test(chain_data(4, 0), 0, 2, [1])
    with pytest.raises(ContractViolation):
        ci_test(chain_data(50, 0), 0, 0)


@given(st.integers(0, 1000), st.floats(0.1, 50), st.floats(-20, 20))
@settings(max_examples=40, deadline=None)
def test_affine_invariance_and_symmetry(seed, scale, shift):
    d = chain_data(300, seed)
    res = ci_test(d, 0, 2, [1])
    d2 = d.copy()
    d2[:, 1] = scale * d2[:, 1] + shift
    assert ci_test(d2, 0, 2, [1]).p_value == pytest.approx(res.p_value, rel=1e-6, abs=1e-12)
    assert ci_test(d, 2, 0, [1]) == res


# indicator tests ------------------------------------------------------------


def ds(regime, data, targets=()):
    return Dataset(regime, tuple(targets), ["X1", "X2"], data, len(data))


def chain_regimes(n, seed, shift=False):
    rng = np.random.default_rng(seed)
    x1 = rng.normal(size=n)
    obs = np.column_stack([x1, x1 + rng.normal(size=n)])
    y1 = rng.uniform(-1, 1, n) + (2.0 if shift else 0.0)
    intv = np.column_stack([y1, y1 + rng.normal(size=n)])
    return ds(0, obs), ds(1, intv, ["X1"])


def test_pooled_sample_layout():
    obs, intv = chain_regimes(10, 0)
    pooled, cols = pooled_sample(obs, intv)
    assert cols == ["X1", "X2", "psi"] and pooled.shape == (20, 3)
    assert set(pooled[:, 2]) == {0.0, 1.0}
    bad = Dataset(1, ("X1",), ["X1", "X3"], intv.data, 10)
    with pytest.raises(ContractViolation):
        pooled_sample(obs, bad)


def test_indicator_patterns_on_chain():
    obs, intv = chain_regimes(2000, 5, shift=True)
    assert not psi_ci_test(obs, intv, "X1").independent
    assert not psi_ci_test(obs, intv, "X2").independent
    assert psi_ci_test(obs, intv, "X2", ["X1"]).independent


def test_permutation_fallback():
    obs, intv = chain_regimes(400, 6, shift=True)
    assert not psi_ci_test(obs, intv, "X1", method="permutation", n_perm=100).independent
    assert psi_ci_test(obs, intv, "X2", ["X1"], method="permutation", n_perm=100).p_value > 0.01
    rng = np.random.default_rng(0)
    res = permutation_psi_test(rng.normal(size=200), rng.integers(0, 2, 200), np.zeros((200, 0)), n_perm=50)
    assert 0 < res.p_value <= 1
    with pytest.raises(ValueError):
        psi_ci_test(obs, intv, "X1", method="kci")


# providers ------------------------------------------------------------------


def test_oracle_provider_delegates_and_caches():
    p = OracleProvider(build("chain"))
    first = p.psi_ci(1, "X2", ["X1"])
    assert first.independent
    assert p.psi_ci(1, "X2", ["X1"]) is first
    assert p.ci("X1", "X3", ["X2"]).independent and not p.ci("X1", "X3").independent


def test_provider_rejects_unknown_names():
    p = OracleProvider(build("chain"))
    with pytest.raises(ContractViolation):
        p.ci("X1", "Q")


def test_cache_is_thread_safe():
    p = OracleProvider(build("fig4b"))
    out = []

    def work():
        out.append([p.ci("X1", "X2", c) for c in ([], ["X3"])] + [p.psi_ci(k, "X2") for k in (1, 2, 3)])

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(all(a is b for a, b in zip(r, out[0])) for r in out)


def test_trace_hook_sees_every_fresh_query():
    p = OracleProvider(build("chain"))
    seen = []
    p.trace_hook = seen.append
    p.ci("X1", "X2")
    p.ci("X1", "X2")
    assert len(seen) >= 1 and p.n_evaluations == 1


@pytest.mark.parametrize("name", sorted(CANONICAL))
def test_backends_agree_on_indicator_queries(name):
    # Frozen cross-backend run: structure seed 5, n = 5000 per regime, default selection band.
    g = build(name)
    spec = structure_for(g, SimConfig.linear_gaussian(seed=5))
    data = DataProvider(sample_all(spec, 5000))
    oracle = OracleProvider(g)
    for k, (tgt, other) in enumerate((("X1", "X2"), ("X2", "X1")), start=1):
        for var, cond in ((other, []), (other, [tgt]), (tgt, [])):
            assert data.psi_indep(k, var, cond) == oracle.psi_indep(k, var, cond), (k, var, cond)
    assert data.indep("X1", "X2") == oracle.indep("X1", "X2")
