"""Size and power simulations.

A replicate bootstraps whole multi-locus genotypes from a reference panel,
draws survival times from a PH or PO model driven by the coded causal SNPs
and a standard-normal covariate, censors them with Uniform(0, c), and tests
the non-causal SNPs. Replicate r draws every random quantity from seeds
derived from (base_seed, r), so summaries do not depend on worker count.
"""

import logging
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from dotenv import dotenv_values
from joblib import Parallel, delayed
from pydantic import ValidationError
from tqdm import tqdm

from .comparators import minp_test
from .config import CENSORING_PRESETS, DEFAULT_ALPHAS, N_JOBS, SHOW_PROGRESS
from .data import code_genotypes, join, load_genotypes
from .exceptions import DataError, SimRegError, UsageError
from .inference import gene_test
from .quadform import derive_seed
from .reference_panel import CAUSAL_COMMON, CAUSAL_RARE, CAUSAL_UNCOMMON, reference_panel
from .schemas import GeneMap, GenotypePanel, ReplicationSummary, Scenario, SurvivalSample

logger = logging.getLogger(__name__)

ANALYSIS_GENE = "analysis"
SUMMARY_COLUMNS = ["scenario", "method", "alpha", "rejections", "replicates", "failures", "rate"]

# stream keys under a replicate seed
_GENOTYPES, _COVARIATES, _EVENTS, _CENSORING, _TESTS = range(5)

# (gamma_R, gamma_U, gamma_C) by scenario id; id 0 is the type-I design
DESIGN_EFFECTS: Dict[str, Dict[int, Tuple[float, float, float]]] = {
    "additive": {
        0: (0.0, 0.0, 0.0),
        1: (1.5, 0.0, 0.0),
        2: (0.0, 1.0, 0.0),
        3: (0.0, 0.0, 0.3),
        4: (0.6, 0.6, 0.0),
        5: (0.6, 0.4, 0.0),
        6: (0.3, 0.0, 0.3),
        7: (0.6, 0.0, 0.2),
        8: (0.0, 0.3, 0.3),
        9: (0.0, 0.4, 0.2),
        10: (0.3, 0.3, 0.3),
        11: (0.6, 0.4, 0.2),
    },
    "recessive": {
        0: (0.0, 0.0, 0.0),
        1: (4.0, 0.0, 0.0),
        2: (0.0, 3.0, 0.0),
        3: (0.0, 0.0, 0.3),
        4: (4.0, 4.0, 0.0),
        5: (2.5, 2.0, 0.0),
        6: (0.3, 0.0, 0.3),
        7: (2.5, 0.0, 0.2),
        8: (0.0, 0.3, 0.3),
        9: (0.0, 2.0, 0.2),
        10: (0.3, 0.3, 0.3),
        11: (2.5, 2.0, 0.2),
    },
}
DESIGN_EFFECTS["dominant"] = DESIGN_EFFECTS["additive"]


def bootstrap_genotypes(panel: GenotypePanel, n: int, seed: int) -> GenotypePanel:
    if panel.n == 0:
        raise DataError("cannot bootstrap from an empty panel")
    rows = np.random.default_rng(seed).integers(0, panel.n, size=n)
    return GenotypePanel(
        sample_ids=[f"sim{i:05d}" for i in range(n)],
        snp_ids=panel.snp_ids,
        counts=panel.counts[rows],
    )


def gen_survival_ph(eta: np.ndarray, seed: int) -> np.ndarray:
    """log T = -eta + extreme-value error, i.e. hazard exp(eta) against a unit exponential."""
    eta = np.asarray(eta, dtype=float)
    return np.exp(-eta) * np.random.default_rng(seed).standard_exponential(eta.shape[0])


def gen_survival_po(eta: np.ndarray, seed: int) -> np.ndarray:
    """log(exp(T) - 1) = -eta + standard logistic error."""
    eta = np.asarray(eta, dtype=float)
    noise = np.random.default_rng(seed).logistic(size=eta.shape[0])
    return np.maximum(np.logaddexp(0.0, -eta + noise), np.finfo(float).tiny)


def censoring_constant(censoring: Union[str, float]) -> float:
    if isinstance(censoring, str):
        if censoring in CENSORING_PRESETS:
            return CENSORING_PRESETS[censoring]
        try:
            censoring = float(censoring)
        except ValueError:
            raise UsageError(f"censoring must be one of {list(CENSORING_PRESETS)} or a positive number")
    if not censoring > 0:
        raise UsageError("censoring constant c must be > 0")
    return float(censoring)


def gen_censoring(n: int, censoring: Union[str, float], seed: int) -> np.ndarray:
    """Uniform(0, c] censoring times."""
    c = censoring_constant(censoring)
    return c * (1.0 - np.random.default_rng(seed).random(n))


def design_scenario(
    scenario_id: int,
    mode: str = "additive",
    censoring: str = "15%",
    true_model: str = "ph",
    methods: Sequence[str] = ("simreg_ph",),
    **overrides,
) -> Scenario:
    if mode not in DESIGN_EFFECTS:
        raise UsageError(f"unknown mode '{mode}'")
    if scenario_id not in DESIGN_EFFECTS[mode]:
        raise UsageError(f"scenario id must be in 0..11 (got {scenario_id})")
    effects = DESIGN_EFFECTS[mode][scenario_id]
    n = 500 if mode != "recessive" and censoring in ("15%", "40%") else 1000
    fields = dict(
        name=f"design-s{scenario_id:02d}-{mode}-{censoring.rstrip('%')}-{true_model}",
        causal=dict(zip((CAUSAL_RARE, CAUSAL_UNCOMMON, CAUSAL_COMMON), effects)),
        mode=mode,
        censoring=censoring,
        n=n,
        true_model=true_model,
        methods=tuple(methods),
    )
    fields.update(overrides)
    try:
        return Scenario(**fields)
    except ValidationError as e:
        raise UsageError(f"invalid scenario: {e}")


_LIST_KEYS = {"covariate_effects", "methods", "alphas"}


def load_scenario(path) -> Scenario:
    """Read a KEY=value scenario file.

    Keys are Scenario field names (case-insensitive). ``causal`` takes
    comma-separated snp:effect pairs; covariate_effects, methods and alphas
    take comma-separated lists.
    """
    raw = dotenv_values(path)
    if not raw:
        raise UsageError(f"{path}: empty scenario file")
    known = set(Scenario.model_fields)
    fields: Dict[str, object] = {}
    for key, value in raw.items():
        name = key.strip().lower()
        if name not in known:
            raise UsageError(f"{path}: unknown scenario key '{key}' (known: {', '.join(sorted(known))})")
        value = (value or "").strip()
        if name == "causal":
            causal = {}
            for item in filter(None, (part.strip() for part in value.split(","))):
                snp, _, effect = item.partition(":")
                try:
                    causal[snp.strip()] = float(effect)
                except ValueError:
                    raise UsageError(f"{path}: bad causal entry '{item}' (expected snp:effect)")
            fields[name] = causal
        elif name in _LIST_KEYS:
            fields[name] = tuple(part.strip() for part in value.split(",") if part.strip())
        else:
            fields[name] = value
    try:
        return Scenario(**fields)
    except ValidationError as e:
        raise UsageError(f"{path}: invalid scenario: {e}")


def _scenario_panel(scenario: Scenario) -> GenotypePanel:
    panel = load_genotypes(scenario.panel) if scenario.panel else reference_panel()
    unknown = [s for s in scenario.causal if s not in panel.snp_ids]
    if unknown:
        raise DataError(f"scenario references unknown SNP(s): {', '.join(unknown)}")
    return panel


def analysed_snps(scenario: Scenario, panel: GenotypePanel) -> List[str]:
    """Panel SNPs entering the analysis gene: every SNP not listed as causal."""
    return [s for s in panel.snp_ids if s not in scenario.causal]


def _replicate(scenario: Scenario, panel: GenotypePanel, methods: Sequence[str], seed: int) -> Dict[str, float]:
    """p-value of each method on one simulated dataset."""
    n = scenario.n
    geno = bootstrap_genotypes(panel, n, derive_seed(seed, _GENOTYPES))
    n_cov = len(scenario.covariate_effects)
    X = np.random.default_rng(derive_seed(seed, _COVARIATES)).standard_normal((n, n_cov))
    eta = X @ np.asarray(scenario.covariate_effects, dtype=float)
    causal = list(scenario.causal)
    if causal:
        coded = code_genotypes(geno.subset_snps(causal), scenario.mode)
        eta = eta + coded.values @ np.array([scenario.effect_of(s) for s in causal])

    generate = gen_survival_ph if scenario.true_model == "ph" else gen_survival_po
    T = generate(eta, derive_seed(seed, _EVENTS))
    C = gen_censoring(n, scenario.censoring, derive_seed(seed, _CENSORING))
    sample = SurvivalSample(
        sample_ids=geno.sample_ids,
        time=np.minimum(T, C),
        event=(T <= C).astype(np.int8),
        covariates=X,
    )
    analysed = analysed_snps(scenario, panel)
    dataset = join(geno, sample, GeneMap(genes={ANALYSIS_GENE: analysed}))
    assert not set(dataset.gene_map.snps(ANALYSIS_GENE)) & set(causal), "causal SNPs entered the kernel"

    test_seed = derive_seed(seed, _TESTS)
    coding = scenario.mode if scenario.kernel_coding == "coded" else None
    pvalues: Dict[str, float] = {}
    for method in methods:
        try:
            if method == "minp":
                pvalues[method] = minp_test(dataset, ANALYSIS_GENE, scenario.mode).adjusted
                continue
            model, kind, path = {
                "simreg_ph": ("ph", scenario.kernel, "eigen"),
                "simreg_po": ("po", scenario.kernel, "perturb"),
                "km": ("ph", scenario.kernel, "perturb"),
                "global": ("ph", "linear", "eigen"),
            }[method]
            result = gene_test(
                dataset, ANALYSIS_GENE, model=model, scheme=scenario.weights, kind=kind,
                coding=coding, pvalue=path, B=scenario.resamples, seed=test_seed,
            )
            pvalues[method] = result.p_value
        except SimRegError as e:
            logger.warning("Replicate method %s failed, counted as no rejection: %s", method, e.message)
            pvalues[method] = float("nan")
    return pvalues


def run_scenario(
    scenario: Scenario,
    replicates: int,
    base_seed: int = 0,
    methods: Optional[Sequence[str]] = None,
    alphas: Optional[Sequence[float]] = None,
    n_jobs: int = N_JOBS,
    progress: bool = SHOW_PROGRESS,
) -> List[ReplicationSummary]:
    """One ReplicationSummary per method; a replicate rejects at alpha when p <= alpha.

    A method that raises on a replicate counts as a non-rejection and is tallied
    in ``failures``; rates keep every replicate in the denominator.
    """
    methods = tuple(methods or scenario.methods)
    alphas = tuple(alphas or scenario.alphas or DEFAULT_ALPHAS)
    if replicates < 0:
        raise UsageError("replicates must be >= 0")
    unknown = set(methods) - {"simreg_ph", "simreg_po", "km", "global", "minp"}
    if unknown:
        raise UsageError(f"unknown method(s): {', '.join(sorted(unknown))}")

    panel = _scenario_panel(scenario)
    seeds = [derive_seed(base_seed, r) for r in range(replicates)]
    tasks = tqdm(seeds, desc=scenario.name, disable=not progress)
    logger.info("Running %s: %d replicate(s), methods %s", scenario.name, replicates, ", ".join(methods))
    if n_jobs == 1:
        results = [_replicate(scenario, panel, methods, s) for s in tasks]
    else:
        results = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(_replicate)(scenario, panel, methods, s) for s in tasks)

    summaries = []
    for method in methods:
        p = np.array([res[method] for res in results], dtype=float)
        failures = int(np.isnan(p).sum())
        if failures:
            logger.warning("%s: method %s failed on %d of %d replicate(s)", scenario.name, method, failures, replicates)
        rejections = tuple(int(np.sum(p <= a)) for a in alphas)
        summaries.append(
            ReplicationSummary(
                scenario=scenario.name,
                method=method,
                alphas=alphas,
                rejections=rejections,
                replicates=replicates,
                failures=failures,
                base_seed=base_seed,
            )
        )
    return summaries


def summary_frame(summaries: Iterable[ReplicationSummary]) -> pd.DataFrame:
    rows = []
    for s in summaries:
        for alpha, count, rate in zip(s.alphas, s.rejections, s.rates):
            rows.append(
                dict(
                    scenario=s.scenario,
                    method=s.method,
                    alpha=alpha,
                    rejections=count,
                    replicates=s.replicates,
                    failures=s.failures,
                    rate=rate,
                )
            )
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def write_summary(summaries: Iterable[ReplicationSummary], path) -> None:
    summary_frame(summaries).to_csv(path, sep="\t", index=False, lineterminator="\n", float_format="%.10g")
