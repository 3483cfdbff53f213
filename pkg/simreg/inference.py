"""Variance-component score test Q_n = n^{-1} r' S r and its null distribution.

Q_n = |n^{-1/2} L' r|^2 for any root L L' = S. Its null law is a weighted
chi-square whose weights are the nonzero eigenvalues of Sigma = E(psi psi'),
psi_i being the influence of n^{-1/2} sum_i r_i s_i.
"""

import logging
import threading
import time
from typing import Dict, Optional, Union

import numpy as np

from .config import DEFAULT_RESAMPLES, EIGEN_CUTOFF, MIN_RESAMPLES, PSD_TOLERANCE
from .data import code_genotypes
from .exceptions import DataError, SigmaNotPSDError, UsageError
from .null_ph import fit_cox_null, influence_components_ph
from .null_po import fit_po_null, influence_components_po
from .quadform import WeightedChiSq, chunked_draws, sample as sample_chisq, tail_moment_match
from .schemas import (
    AnalysisDataset,
    CodingMode,
    KernelKind,
    KernelMatrix,
    NullFit,
    NullFitPH,
    NullFitPO,
    NullModel,
    PValuePath,
    SigmaEstimate,
    SurvivalSample,
    TestResult,
    WeightScheme,
)
from .similarity import kernel, kernel_root, weights

logger = logging.getLogger(__name__)

_fit_lock = threading.Lock()

DEFAULT_PATHS: Dict[str, PValuePath] = {"ph": "eigen", "po": "perturb"}


def _matrix(S: Union[KernelMatrix, np.ndarray]) -> np.ndarray:
    return S.matrix if isinstance(S, KernelMatrix) else np.asarray(S, dtype=float)


def score_statistic(residuals: np.ndarray, S: Union[KernelMatrix, np.ndarray]) -> float:
    r = np.asarray(residuals, dtype=float)
    matrix = _matrix(S)
    if matrix.shape != (r.shape[0], r.shape[0]):
        raise DataError(f"kernel of shape {matrix.shape} does not match {r.shape[0]} residuals")
    return float(r @ matrix @ r) / r.shape[0]


def _check_resamples(B: int) -> None:
    if B < MIN_RESAMPLES:
        raise UsageError(f"resamples must be >= {MIN_RESAMPLES} (got {B})")


def influence_components(fit: NullFit, sample: SurvivalSample, root: np.ndarray) -> np.ndarray:
    if isinstance(fit, NullFitPH):
        return influence_components_ph(fit, sample, root)
    if isinstance(fit, NullFitPO):
        return influence_components_po(fit, sample, root)
    raise UsageError(f"unsupported null fit type {type(fit).__name__}")


def sigma_from_influence(psi: np.ndarray) -> SigmaEstimate:
    """Sigma = n^{-1} sum_i psi_i psi_i' with its retained spectrum."""
    psi = np.asarray(psi, dtype=float)
    n = psi.shape[0]
    matrix = psi.T @ psi / n
    matrix = 0.5 * (matrix + matrix.T)
    if matrix.size == 0:
        return SigmaEstimate(matrix=matrix, eigenvalues=np.zeros(0))

    eigenvalues = np.linalg.eigvalsh(matrix)
    top = float(eigenvalues[-1])
    lowest = float(eigenvalues[0])
    if top <= 0:
        return SigmaEstimate(matrix=matrix, eigenvalues=np.zeros(0), n_clipped=int(eigenvalues.size), min_eigenvalue=lowest)
    if lowest < -PSD_TOLERANCE * top:
        raise SigmaNotPSDError(f"influence covariance has eigenvalue {lowest:.3e} below tolerance (max {top:.3e})")
    keep = eigenvalues > EIGEN_CUTOFF * top
    n_clipped = int(np.sum(~keep))
    if n_clipped:
        logger.debug("Dropped %d eigenvalue(s) below %.1e of the largest", n_clipped, EIGEN_CUTOFF)
    return SigmaEstimate(
        matrix=matrix,
        eigenvalues=eigenvalues[keep][::-1].copy(),
        n_clipped=n_clipped,
        min_eigenvalue=lowest,
    )


def estimate_sigma(
    fit: NullFit,
    sample: SurvivalSample,
    S: KernelMatrix,
    allow_po_plugin: bool = False,
    root: Optional[np.ndarray] = None,
) -> SigmaEstimate:
    if isinstance(fit, NullFitPO) and not allow_po_plugin:
        raise UsageError(
            "plug-in Sigma for a transformation-model null is opt-in; "
            "use the perturb p-value path or pass allow_po_plugin=True"
        )
    if root is None:
        root = kernel_root(S)
    return sigma_from_influence(influence_components(fit, sample, root))


def pvalue_eigen(Q: float, sigma: SigmaEstimate, B: int = DEFAULT_RESAMPLES, seed: int = 0, n_jobs: int = 1) -> float:
    _check_resamples(B)
    if sigma.d == 0:
        return 1.0
    draws = sample_chisq(WeightedChiSq(weights=sigma.eigenvalues), B, seed, n_jobs=n_jobs)
    return (1.0 + np.count_nonzero(draws >= Q)) / (1.0 + B)


def pvalue_perturb(
    fit: NullFit,
    sample: SurvivalSample,
    S: KernelMatrix,
    B: int = DEFAULT_RESAMPLES,
    seed: int = 0,
    n_jobs: int = 1,
    Q: Optional[float] = None,
    root: Optional[np.ndarray] = None,
) -> float:
    """Null draws |n^{-1/2} sum_i psi_i Z_i|^2 with Z_i iid N(0, 1)."""
    _check_resamples(B)
    if Q is None:
        Q = score_statistic(fit.residuals, S)
    if root is None:
        root = kernel_root(S)
    if root.shape[1] == 0:
        return 1.0
    psi = influence_components(fit, sample, root)
    if not np.any(psi):
        return 1.0
    n = psi.shape[0]

    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        projected = rng.standard_normal((size, n)) @ psi
        return np.sum(projected * projected, axis=1) / n

    draws = chunked_draws(B, seed, draw, stream=1, n_jobs=n_jobs)
    return (1.0 + np.count_nonzero(draws >= Q)) / (1.0 + B)


def pvalue_moment(Q: float, sigma: SigmaEstimate) -> float:
    if sigma.d == 0:
        return 1.0
    return tail_moment_match(WeightedChiSq(weights=sigma.eigenvalues), Q)


def fit_null(dataset: AnalysisDataset, model: NullModel) -> NullFit:
    """Null fit for the dataset, computed once per model and cached on it."""
    with _fit_lock:
        cache = dataset._null_fits
        if model not in cache:
            if model == "ph":
                cache[model] = fit_cox_null(dataset.sample)
            elif model == "po":
                cache[model] = fit_po_null(dataset.sample)
            else:
                raise UsageError(f"unknown null model '{model}'")
        return cache[model]


def gene_kernel(
    dataset: AnalysisDataset,
    gene: str,
    scheme: WeightScheme,
    kind: KernelKind = "ibs",
    coding: Optional[CodingMode] = None,
) -> KernelMatrix:
    """Kernel over the gene's polymorphic SNPs in the analysis sample."""
    wanted = set(dataset.gene_map.snps(gene))
    snps = [s for s in dataset.panel.polymorphic_snps() if s in wanted]
    if not snps:
        raise DataError(f"gene {gene} has no polymorphic SNPs in the analysis sample")
    # keep the gene map's SNP order
    order = {s: j for j, s in enumerate(dataset.gene_map.snps(gene))}
    panel = dataset.panel.subset_snps(sorted(snps, key=order.__getitem__))
    w = weights(panel.maf, scheme)
    genotypes = code_genotypes(panel, coding) if coding else panel
    return kernel(genotypes, w, kind)


def gene_test(
    dataset: AnalysisDataset,
    gene: str,
    model: NullModel = "ph",
    scheme: Union[WeightScheme, str] = "q34",
    kind: KernelKind = "ibs",
    coding: Optional[CodingMode] = None,
    pvalue: Optional[PValuePath] = None,
    B: int = DEFAULT_RESAMPLES,
    seed: int = 0,
    n_jobs: int = 1,
) -> TestResult:
    """Score test of one gene. An explicit eigen or moment path under the PO null
    opts in to the plug-in Sigma."""
    if isinstance(scheme, str):
        scheme = WeightScheme.from_alias(scheme)
    path = pvalue or DEFAULT_PATHS[model]
    if path != "moment":
        _check_resamples(B)

    fit = fit_null(dataset, model)
    km = gene_kernel(dataset, gene, scheme, kind, coding)
    Q = score_statistic(fit.residuals, km)
    root = kernel_root(km)

    eigenvalues = None
    if path == "perturb":
        p = pvalue_perturb(fit, dataset.sample, km, B=B, seed=seed, n_jobs=n_jobs, Q=Q, root=root)
    else:
        sigma = estimate_sigma(fit, dataset.sample, km, allow_po_plugin=True, root=root)
        eigenvalues = sigma.eigenvalues
        p = pvalue_eigen(Q, sigma, B=B, seed=seed, n_jobs=n_jobs) if path == "eigen" else pvalue_moment(Q, sigma)

    logger.info("Gene %s: %d SNP(s), Q=%.6g, p=%.6g (%s, %s)", gene, len(km.snp_ids), Q, p, model, path)
    return TestResult(
        gene=gene,
        Q=Q,
        eigenvalues=eigenvalues,
        p_value=p,
        method=f"simreg_{model}",
        pvalue_path=path,
        resamples=0 if path == "moment" else B,
        seed=seed,
        kernel_kind=kind,
        weight_scheme=scheme.label,
        n_snps=len(km.snp_ids),
    )


def time_pvalue_paths(
    dataset: AnalysisDataset,
    gene: str,
    model: NullModel = "ph",
    B: int = DEFAULT_RESAMPLES,
    seed: int = 0,
    repeats: int = 1,
) -> Dict[str, float]:
    """Mean wall-clock seconds per test for the eigenvalue and perturbation paths."""
    fit_null(dataset, model)
    timings = {}
    for path in ("eigen", "perturb"):
        start = time.perf_counter()
        for _ in range(repeats):
            gene_test(dataset, gene, model=model, pvalue=path, B=B, seed=seed)
        timings[path] = (time.perf_counter() - start) / repeats
    logger.info("Resampling runtime for %s: eigen %.4fs, perturb %.4fs", gene, timings["eigen"], timings["perturb"])
    return timings
