import numpy as np
import pytest

from simreg.data import join
from simreg.reference_panel import reference_panel
from simreg.schemas import GeneMap, SurvivalSample
from simreg.simulator import bootstrap_genotypes, gen_censoring, gen_survival_ph, gen_survival_po


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow Monte Carlo checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def survival_sample(n, seed, coefficients=(0.5, -0.3), model="ph", censoring=3.0):
    """Two covariates (normal, binary) with T drawn from a PH or PO model with hazard index X @ coefficients."""
    rng = np.random.default_rng(seed)
    X = np.column_stack((rng.standard_normal(n), rng.integers(0, 2, size=n).astype(float)))
    eta = X @ np.asarray(coefficients, dtype=float)
    draw = gen_survival_ph if model == "ph" else gen_survival_po
    T = draw(eta, seed + 1)
    C = gen_censoring(n, censoring, seed + 2)
    return SurvivalSample(
        sample_ids=[f"p{i:04d}" for i in range(n)],
        time=np.minimum(T, C),
        event=(T <= C).astype(int),
        covariates=X,
        covariate_names=["age_z", "sex"],
    )


@pytest.fixture
def small_sample():
    """21 subjects with distinct times; one censored before the first event."""
    x = [1, 0, 1, 1, 0, 0, 1, 0, 1, 0, 0, 1, 1, 0, 1, 0, 0, 1, 0, 1, 1]
    time = [float(t) for t in range(1, 21)] + [0.5]
    event = [1] * 20 + [0]
    for i in (4, 9, 14, 19):
        event[i] = 0
    return SurvivalSample(
        sample_ids=[f"h{i:02d}" for i in range(21)],
        time=time,
        event=event,
        covariates=np.array(x, dtype=float)[:, None],
        covariate_names=["carrier"],
    )


@pytest.fixture
def ph_sample():
    return survival_sample(200, seed=42)


@pytest.fixture
def po_sample():
    return survival_sample(200, seed=43, model="po")


@pytest.fixture
def gene_dataset():
    """200 subjects bootstrapped from the reference panel, two genes, null PH outcome."""
    panel = bootstrap_genotypes(reference_panel(), 200, seed=5)
    sample = survival_sample(200, seed=6, coefficients=(0.4, 0.0))
    sample = SurvivalSample(
        sample_ids=panel.sample_ids,
        time=sample.time,
        event=sample.event,
        covariates=sample.covariates[:, :1],
        covariate_names=["age_z"],
    )
    gene_map = GeneMap(
        genes={
            "GENE_A": ["snp_04", "snp_05", "snp_06", "snp_07", "snp_08"],
            "GENE_B": ["snp_09", "snp_10", "snp_11", "snp_12", "snp_13", "snp_14", "snp_15"],
        }
    )
    return join(panel, sample, gene_map)
