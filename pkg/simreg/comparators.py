"""Single-SNP Cox screening with an effective-number-of-tests minP correction."""

import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy import stats

from .data import code_genotypes
from .exceptions import DataError, NumericalError
from .null_ph import fit_cox_null
from .schemas import AnalysisDataset, CodedGenotypes, CodingMode, MinPResult

logger = logging.getLogger(__name__)

FLAG_CONSTANT = "constant"
FLAG_SEPARATION = "separation"
FLAG_COLLINEAR = "collinear"


def single_snp_cox(dataset: AnalysisDataset, gene: str, mode: CodingMode) -> Tuple[np.ndarray, List[str]]:
    """Two-sided Wald p-value of each coded SNP added to the null Cox model.

    Constant coded columns get p = 1. Columns collinear with the covariates,
    and fits that separate or fail to converge, get p = NaN. All are flagged.
    """
    panel = dataset.panel.subset_snps(dataset.gene_map.snps(gene))
    coded = code_genotypes(panel, mode)
    sample = dataset.sample
    pvalues = np.ones(len(coded.snp_ids))
    flags = [""] * len(coded.snp_ids)

    for j, snp in enumerate(coded.snp_ids):
        column = coded.values[:, j].astype(float)
        if np.all(column == column[0]):
            flags[j] = FLAG_CONSTANT
            continue
        augmented = sample.with_covariates(
            np.column_stack((sample.covariates, column)),
            sample.covariate_names + [snp],
        )
        try:
            fit = fit_cox_null(augmented)
            variance = np.linalg.inv(fit.information)[-1, -1]
        except DataError as e:
            logger.warning("Single-SNP Cox fit for %s skipped: %s", snp, e)
            pvalues[j] = np.nan
            flags[j] = FLAG_COLLINEAR
            continue
        except (NumericalError, np.linalg.LinAlgError) as e:
            logger.warning("Single-SNP Cox fit for %s failed: %s", snp, e)
            pvalues[j] = np.nan
            flags[j] = FLAG_SEPARATION
            continue
        z = fit.gamma_hat[-1] / np.sqrt(variance)
        pvalues[j] = 2.0 * stats.norm.sf(abs(z))
    return pvalues, flags


def k_eff(coded: CodedGenotypes, alpha: float = 0.05) -> float:
    """Effective number of independent tests among the coded columns, in given order.

    Constant columns carry no test and are dropped first. Locus j then contributes
    sqrt(1 - r_j^(-1.31 log10 alpha)) with r_j its largest absolute correlation
    with any earlier locus; the first locus contributes 1.
    """
    values = np.asarray(coded.values, dtype=float)
    if values.shape[1] == 0:
        raise DataError("k_eff needs at least one SNP")
    values = values[:, np.ptp(values, axis=0) > 0]
    m = values.shape[1]
    if m <= 1:
        return 1.0
    corr = np.abs(np.corrcoef(values, rowvar=False))
    exponent = -1.31 * np.log10(alpha)
    total = 1.0
    for j in range(1, m):
        r = min(float(np.max(corr[j, :j])), 1.0)
        total += np.sqrt(max(1.0 - r ** exponent, 0.0))
    return float(total)


def minp_adjusted(pvals, k: float, flags: Optional[List[str]] = None) -> MinPResult:
    """Adjusted gene p-value 1 - (1 - p_min)^K_eff."""
    pvals = np.asarray(pvals, dtype=float)
    if pvals.size == 0 or np.all(np.isnan(pvals)):
        raise DataError("minP needs at least one testable SNP")
    p_min = float(np.nanmin(pvals))
    with np.errstate(divide="ignore"):
        adjusted = float(-np.expm1(k * np.log1p(-p_min)))
    return MinPResult(pvalues=pvals, flags=list(flags or []), p_min=p_min, k_eff=float(k), adjusted=adjusted)


def minp_test(dataset: AnalysisDataset, gene: str, mode: CodingMode, alpha: float = 0.05) -> MinPResult:
    pvalues, flags = single_snp_cox(dataset, gene, mode)
    panel = dataset.panel.subset_snps(dataset.gene_map.snps(gene))
    k = k_eff(code_genotypes(panel, mode), alpha=alpha)
    return minp_adjusted(pvalues, k, flags)
