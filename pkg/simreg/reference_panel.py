"""Synthetic 15-SNP reference panel for desk-scale simulations.

Each haplotype carries a minor allele at SNP j when a latent Gaussian
a_j * F + sqrt(1 - a_j^2) * e_j falls below the normal quantile of the target
MAF, with F a factor shared by the linked block. Loci with a_j = 0 are in
linkage equilibrium with everything else. Output is fixed by PANEL_SEED.
"""

from typing import List, Tuple

import numpy as np
from scipy import stats

from .schemas import GenotypePanel

PANEL_SEED = 20120917
PANEL_SIZE = 969

CAUSAL_RARE = "snp_R"
CAUSAL_UNCOMMON = "snp_U"
CAUSAL_COMMON = "snp_C"
CAUSAL_SNPS = (CAUSAL_RARE, CAUSAL_UNCOMMON, CAUSAL_COMMON)

# (snp id, target MAF, loading on the linked block's factor)
PANEL_LAYOUT: List[Tuple[str, float, float]] = [
    (CAUSAL_RARE, 0.036, 0.0),
    (CAUSAL_UNCOMMON, 0.132, 0.0),
    (CAUSAL_COMMON, 0.419, 0.85),
    ("snp_04", 0.03, 0.0),
    ("snp_05", 0.04, 0.0),
    ("snp_06", 0.06, 0.0),
    ("snp_07", 0.08, 0.3),
    ("snp_08", 0.11, 0.0),
    ("snp_09", 0.15, 0.5),
    ("snp_10", 0.19, 0.0),
    ("snp_11", 0.24, 0.7),
    ("snp_12", 0.29, 0.8),
    ("snp_13", 0.33, 0.0),
    ("snp_14", 0.38, 0.85),
    ("snp_15", 0.45, 0.75),
]


def reference_panel(n: int = PANEL_SIZE, seed: int = PANEL_SEED) -> GenotypePanel:
    rng = np.random.default_rng(seed)
    snp_ids = [s for s, _, _ in PANEL_LAYOUT]
    maf = np.array([q for _, q, _ in PANEL_LAYOUT])
    loading = np.array([a for _, _, a in PANEL_LAYOUT])
    thresholds = stats.norm.ppf(maf)

    haplotypes = []
    for _ in range(2):
        factor = rng.standard_normal((n, 1))
        noise = rng.standard_normal((n, len(snp_ids)))
        latent = loading[None, :] * factor + np.sqrt(1.0 - loading ** 2)[None, :] * noise
        haplotypes.append(latent < thresholds[None, :])
    counts = (haplotypes[0].astype(np.int8) + haplotypes[1].astype(np.int8))
    return GenotypePanel(
        sample_ids=[f"ref{i:04d}" for i in range(n)],
        snp_ids=snp_ids,
        counts=counts,
    )
