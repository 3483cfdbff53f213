import numpy as np
import pytest
from scipy import stats

from simreg.comparators import FLAG_COLLINEAR, FLAG_CONSTANT, k_eff, minp_adjusted, minp_test, single_snp_cox
from simreg.data import join
from simreg.exceptions import DataError
from simreg.schemas import CodedGenotypes, GeneMap, GenotypePanel, SurvivalSample
from simreg.simulator import gen_censoring, gen_survival_ph


def _coded(values):
    values = np.asarray(values)
    return CodedGenotypes(
        sample_ids=[str(i) for i in range(values.shape[0])],
        snp_ids=[f"m{j}" for j in range(values.shape[1])],
        values=values,
        mode="additive",
    )


def _dataset(n=500, seed=0, log_hr=np.log(3.0)):
    rng = np.random.default_rng(seed)
    causal = rng.binomial(2, 0.3, size=n)
    noise = rng.binomial(2, 0.2, size=n)
    counts = np.column_stack((causal, noise, np.zeros(n, dtype=int)))
    ids = [f"s{i:04d}" for i in range(n)]
    panel = GenotypePanel(sample_ids=ids, snp_ids=["causal", "noise", "flat"], counts=counts)
    T = gen_survival_ph(log_hr * causal, seed + 1)
    C = gen_censoring(n, "15%", seed + 2)
    sample = SurvivalSample(
        sample_ids=ids,
        time=np.minimum(T, C),
        event=(T <= C).astype(int),
        covariates=rng.standard_normal((n, 1)),
    )
    return join(panel, sample, GeneMap(genes={"G": ["causal", "noise", "flat"]}))


def test_minp_adjustment_example():
    result = minp_adjusted([0.0065, 0.2, 0.8], 11.28)
    assert result.p_min == 0.0065
    assert result.adjusted == pytest.approx(0.0704, abs=0.001)


def test_minp_adjustment_edges():
    assert minp_adjusted([0.03], 1.0).adjusted == pytest.approx(0.03)
    assert minp_adjusted([0.0, 0.5], 4.0).adjusted == 0.0
    assert minp_adjusted([np.nan, 0.2], 2.0).p_min == 0.2
    with pytest.raises(DataError):
        minp_adjusted([np.nan], 1.0)


def test_minp_adjustment_is_monotone():
    grid = np.linspace(0.001, 0.5, 50)
    adjusted = [minp_adjusted([p], 6.0).adjusted for p in grid]
    assert np.all(np.diff(adjusted) > 0)
    by_k = [minp_adjusted([0.01], k).adjusted for k in (1.0, 2.0, 5.0, 10.0)]
    assert np.all(np.diff(by_k) > 0)


def test_k_eff_single_and_duplicated_columns():
    rng = np.random.default_rng(1)
    g = rng.binomial(2, 0.3, size=200)
    assert k_eff(_coded(g[:, None])) == 1.0
    assert k_eff(_coded(np.column_stack((g, g)))) <= 1.01


def test_k_eff_independent_columns():
    rng = np.random.default_rng(2)
    values = rng.binomial(2, 0.3, size=(5000, 10))
    assert k_eff(_coded(values)) == pytest.approx(10.0, rel=0.05)


def test_k_eff_drops_constant_columns():
    rng = np.random.default_rng(3)
    values = rng.binomial(2, 0.3, size=(300, 3))
    flat = np.zeros(300, dtype=int)
    padded = np.column_stack((values[:, :1], flat, values[:, 1:]))
    assert k_eff(_coded(padded)) == pytest.approx(k_eff(_coded(values)))
    assert k_eff(_coded(np.column_stack((values[:, 0], flat)))) == 1.0
    assert k_eff(_coded(np.zeros((300, 2), dtype=int))) == 1.0


def test_single_snp_cox_flags_collinear_column():
    dataset = _dataset(n=200, seed=4)
    sample = dataset.sample
    copy = dataset.panel.counts[:, 1].astype(float)
    dataset = join(dataset.panel, sample.with_covariates(copy[:, None], ["noise_copy"]), dataset.gene_map)
    pvalues, flags = single_snp_cox(dataset, "G", "additive")
    assert flags[1] == FLAG_COLLINEAR
    assert np.isnan(pvalues[1])
    assert 0.0 < pvalues[0] <= 1.0


def test_single_snp_cox_detects_strong_effect():
    dataset = _dataset()
    pvalues, flags = single_snp_cox(dataset, "G", "additive")
    assert pvalues[0] < 1e-3
    assert 0.0 < pvalues[1] <= 1.0
    assert pvalues[2] == 1.0
    assert flags == ["", "", FLAG_CONSTANT]


def test_minp_test_combines_pieces():
    dataset = _dataset(seed=4)
    result = minp_test(dataset, "G", "additive")
    assert result.p_min == pytest.approx(np.nanmin(result.pvalues))
    assert 1.0 <= result.k_eff <= 3.0
    assert result.p_min <= result.adjusted <= 1.0


@pytest.mark.slow
def test_single_snp_cox_null_is_uniform():
    pvalues = [single_snp_cox(_dataset(seed=10 * s, log_hr=0.0), "G", "additive")[0][0] for s in range(500)]
    assert stats.kstest(pvalues, "uniform").pvalue > 0.01


@pytest.mark.slow
def test_single_snp_cox_strong_effect_is_found():
    pvalues = np.array([single_snp_cox(_dataset(seed=10 * s + 5000), "G", "additive")[0][0] for s in range(100)])
    assert np.mean(pvalues < 1e-3) >= 0.95
