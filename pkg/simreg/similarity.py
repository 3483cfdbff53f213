"""Weighted-IBS and linear genetic similarity kernels.

For biallelic markers with minor-allele counts a, b the IBS score is the
number of shared alleles, 2 - |a - b|. With l_m alleles the general rule
counts shared alleles between the two allele-count vectors; only the
biallelic case is ingested.
"""

import logging
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .config import EIGEN_CUTOFF, PSD_TOLERANCE
from .exceptions import DataError, KernelNotPSDError
from .schemas import CodedGenotypes, GenotypePanel, KernelKind, KernelMatrix, WeightScheme

logger = logging.getLogger(__name__)

Genotypes = Union[GenotypePanel, CodedGenotypes]


def ibs_marker(a_i: int, a_j: int) -> int:
    return 2 - abs(int(a_i) - int(a_j))


def weights(maf: np.ndarray, scheme: WeightScheme) -> np.ndarray:
    maf = np.asarray(maf, dtype=float)
    if scheme.variant == "custom":
        if scheme.values is None or scheme.values.shape != maf.shape:
            raise DataError(f"custom weights must have one value per SNP ({maf.shape[0]})")
        w = np.asarray(scheme.values, dtype=float)
    else:
        if np.any(maf <= 0.0) or np.any(maf > 0.5):
            raise DataError("weights need minor allele frequencies in (0, 0.5]; filter monomorphic SNPs first")
        if scheme.variant == "uniform":
            w = np.ones_like(maf)
        elif scheme.variant == "q_pow":
            w = maf ** scheme.exponent
        else:
            w = (1.0 - maf) ** scheme.exponent
    if not np.all(w > 0) or not np.all(np.isfinite(w)):
        raise DataError("SNP weights must be finite and strictly positive")
    return w


def _ibs_features(values: np.ndarray, w: np.ndarray, binary: bool) -> np.ndarray:
    """Explicit feature map F with F F^T equal to the weighted IBS kernel."""
    if binary:
        blocks = [values, 1 - values]
        scale = np.sqrt(2.0 * w)
    else:
        blocks = [values >= 1, values >= 2, values <= 1, values <= 0]
        scale = np.sqrt(w)
    return np.concatenate([b.astype(float) * scale[None, :] for b in blocks], axis=1)


def kernel(
    genotypes: Genotypes,
    w: np.ndarray,
    kind: KernelKind = "ibs",
) -> KernelMatrix:
    """Build S from raw minor-allele counts (GenotypePanel) or coded values."""
    if isinstance(genotypes, CodedGenotypes):
        values = np.asarray(genotypes.values, dtype=np.int64)
        binary = genotypes.mode != "additive"
    else:
        values = np.asarray(genotypes.minor_counts, dtype=np.int64)
        binary = False
    w = np.asarray(w, dtype=float)
    n, m = values.shape
    if m == 0:
        raise DataError("kernel needs at least one SNP")
    if w.shape != (m,):
        raise DataError(f"{w.shape[0] if w.ndim else 1} weights given for {m} SNPs")

    if kind == "linear":
        features = values.astype(float) * np.sqrt(w)[None, :]
        matrix = features @ features.T
        matrix = 0.5 * (matrix + matrix.T)
    else:
        matrix = np.zeros((n, n))
        for j in range(m):
            diff = np.abs(values[:, j][:, None] - values[:, j][None, :])
            shared = 2.0 * (1 - diff) if binary else 2.0 - diff
            matrix += w[j] * shared
        features = _ibs_features(values, w, binary)

    return KernelMatrix(
        matrix=matrix,
        kind=kind,
        weights=w,
        snp_ids=list(genotypes.snp_ids),
        features=features,
    )


def check_psd(matrix: Union[np.ndarray, KernelMatrix], tolerance: float = PSD_TOLERANCE) -> Tuple[float, float]:
    """Return (min, max) eigenvalue; raise when min < -tolerance * max."""
    if isinstance(matrix, KernelMatrix):
        matrix = matrix.matrix
    eigenvalues = np.linalg.eigvalsh(matrix)
    lo, hi = float(eigenvalues[0]), float(eigenvalues[-1])
    if lo < -tolerance * max(hi, 0.0):
        raise KernelNotPSDError(f"kernel is not positive semidefinite (min eigenvalue {lo:.3e}, max {hi:.3e})")
    return lo, hi


def kernel_root(km: KernelMatrix, full: bool = False, cutoff: float = EIGEN_CUTOFF) -> np.ndarray:
    """Square root of S.

    Returns L (n x r) with L L^T = S over the retained spectrum, or the
    symmetric n x n S^{1/2} when ``full`` is set.
    """
    if km.features is not None:
        u, s, _ = np.linalg.svd(km.features, full_matrices=False)
        eigenvalues, vectors = s ** 2, u
    else:
        eigenvalues, vectors = np.linalg.eigh(km.matrix)
        top = max(float(eigenvalues.max()), 0.0)
        if eigenvalues.min() < -PSD_TOLERANCE * top:
            raise KernelNotPSDError(
                f"kernel is not positive semidefinite (min eigenvalue {eigenvalues.min():.3e}, max {top:.3e})"
            )
        n_clipped = int(np.sum(eigenvalues < 0))
        if n_clipped:
            logger.debug("Clipped %d slightly negative kernel eigenvalue(s) to 0", n_clipped)

    top = float(eigenvalues.max()) if eigenvalues.size else 0.0
    keep = eigenvalues > cutoff * top if top > 0 else np.zeros(eigenvalues.shape, dtype=bool)
    root = vectors[:, keep] * np.sqrt(eigenvalues[keep])[None, :]
    if full:
        return root @ vectors[:, keep].T
    return root


def dump_kernel(km: KernelMatrix, path, sample_ids: Optional[List[str]] = None) -> None:
    labels = sample_ids if sample_ids is not None else [str(i) for i in range(km.n)]
    pd.DataFrame(km.matrix, index=labels, columns=labels).to_csv(path, sep="\t", float_format="%.17g")
