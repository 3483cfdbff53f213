"""Ingestion, coding and alignment of genotype, phenotype and gene-map files.

All inputs are UTF-8, tab-delimited text; lines starting with '#' are ignored.
"""

import logging
from typing import Dict, List, Literal, Tuple

import numpy as np
import pandas as pd

from .exceptions import DataError, JoinError, ParseError
from .schemas import (
    AnalysisDataset,
    CodedGenotypes,
    CodingMode,
    GeneMap,
    GenotypePanel,
    JoinReport,
    SurvivalSample,
)

logger = logging.getLogger(__name__)

MISSING = "NA"


def _read_tsv(path, header="infer") -> pd.DataFrame:
    try:
        return pd.read_csv(
            path,
            sep="\t",
            comment="#",
            header=header,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: file has no data")
    except pd.errors.ParserError as e:
        raise ParseError(f"{path}: malformed table: {e}")


def read_genotypes(path, missing_policy: Literal["reject", "drop_subject"] = "reject") -> Tuple[GenotypePanel, List[str]]:
    """Parse a genotype TSV; returns the panel and the ids of subjects dropped for missing calls."""
    df = _read_tsv(path)
    if isinstance(df.index, pd.RangeIndex):
        # header carries a label for the id column
        df = df.set_index(df.columns[0])
    if df.shape[0] == 0:
        raise DataError(f"{path}: no genotype rows")

    sample_ids = [str(s).strip() for s in df.index]
    snp_ids = [str(c).strip() for c in df.columns]
    duplicated = pd.Index(sample_ids).duplicated()
    if duplicated.any():
        raise DataError(f"{path}: duplicate sample_id '{sample_ids[int(np.argmax(duplicated))]}'")

    cells = np.char.strip(df.to_numpy(dtype=str))
    missing = cells == MISSING
    valid = np.isin(cells, ("0", "1", "2")) | missing
    if not valid.all():
        row, col = np.argwhere(~valid)[0]
        raise ParseError(
            f"{path}: malformed genotype '{cells[row, col]}' for sample {sample_ids[row]}",
            row=int(row) + 1,
            column=snp_ids[col],
        )

    dropped: List[str] = []
    if missing.any():
        if missing_policy == "reject":
            row, col = np.argwhere(missing)[0]
            raise ParseError(
                f"{path}: missing genotype for sample {sample_ids[row]} (missing_policy=reject)",
                row=int(row) + 1,
                column=snp_ids[col],
            )
        keep = ~missing.any(axis=1)
        dropped = [s for s, k in zip(sample_ids, keep) if not k]
        logger.warning("Dropped %d subject(s) with missing genotypes", len(dropped))
        cells = cells[keep]
        sample_ids = [s for s, k in zip(sample_ids, keep) if k]
        if not sample_ids:
            raise DataError(f"{path}: every subject has a missing genotype")

    panel = GenotypePanel(sample_ids=sample_ids, snp_ids=snp_ids, counts=cells.astype(np.int8))
    n_mono = int(panel.monomorphic.sum())
    if n_mono:
        logger.warning("%d monomorphic SNP(s) flagged and excluded from kernels", n_mono)
    logger.info("Loaded genotypes: %d subjects x %d SNPs", panel.n, panel.n_snps)
    return panel, dropped


def load_genotypes(path, missing_policy: Literal["reject", "drop_subject"] = "reject") -> GenotypePanel:
    panel, _ = read_genotypes(path, missing_policy)
    return panel


def write_genotypes(panel: GenotypePanel, path) -> None:
    df = pd.DataFrame(panel.counts, index=pd.Index(panel.sample_ids, name="sample_id"), columns=panel.snp_ids)
    df.to_csv(path, sep="\t", lineterminator="\n")


def load_phenotypes(path) -> SurvivalSample:
    """Parse sample_id, time, event and K covariate columns (header row required)."""
    df = _read_tsv(path)
    if df.shape[1] < 3:
        raise DataError(f"{path}: expected columns sample_id, time, event[, covariates...]")
    columns = list(df.columns)
    numeric = {}
    for col in columns[1:]:
        values = pd.to_numeric(df[col].str.strip(), errors="coerce")
        bad = values.isna().to_numpy()
        if bad.any():
            row = int(np.argmax(bad))
            raise ParseError(f"{path}: non-numeric value '{df[col].iloc[row]}'", row=row + 1, column=col)
        numeric[col] = values.to_numpy(dtype=float)

    time = numeric[columns[1]]
    event = numeric[columns[2]]
    if np.any(time <= 0):
        row = int(np.argmax(time <= 0))
        raise ParseError(f"{path}: survival time must be > 0", row=row + 1, column=columns[1])
    if not np.isin(event, (0.0, 1.0)).all():
        row = int(np.argmax(~np.isin(event, (0.0, 1.0))))
        raise ParseError(f"{path}: event indicator must be 0 or 1", row=row + 1, column=columns[2])

    covariate_names = [str(c) for c in columns[3:]]
    covariates = np.column_stack([numeric[c] for c in columns[3:]]) if covariate_names else np.zeros((len(df), 0))
    sample = SurvivalSample(
        sample_ids=[str(s).strip() for s in df[columns[0]]],
        time=time,
        event=event.astype(np.int8),
        covariates=covariates,
        covariate_names=covariate_names,
    )
    logger.info("Loaded phenotypes: %d subjects, %d events, %d covariates", sample.n, sample.n_events, sample.n_covariates)
    return sample


def write_phenotypes(sample: SurvivalSample, path) -> None:
    df = pd.DataFrame({"sample_id": sample.sample_ids, "time": sample.time, "event": sample.event})
    for k, name in enumerate(sample.covariate_names):
        df[name] = sample.covariates[:, k]
    df.to_csv(path, sep="\t", index=False, lineterminator="\n", float_format="%.17g")


def load_gene_map(path) -> GeneMap:
    df = _read_tsv(path, header=None)
    if df.shape[1] != 2:
        raise DataError(f"{path}: gene map lines must be 'gene<TAB>snp_id'")
    genes: Dict[str, List[str]] = {}
    for gene, snp in zip(df[0].str.strip(), df[1].str.strip()):
        members = genes.setdefault(gene, [])
        if snp not in members:
            members.append(snp)
    return GeneMap(genes=genes)


def code_genotypes(panel: GenotypePanel, mode: CodingMode) -> CodedGenotypes:
    g = panel.minor_counts
    if mode == "additive":
        values = g
    elif mode == "dominant":
        values = (g >= 1).astype(np.int8)
    elif mode == "recessive":
        values = (g == 2).astype(np.int8)
    else:
        raise DataError(f"unknown coding mode: {mode}")
    return CodedGenotypes(sample_ids=panel.sample_ids, snp_ids=panel.snp_ids, values=values, mode=mode)


def join(panel: GenotypePanel, sample: SurvivalSample, gene_map: GeneMap) -> AnalysisDataset:
    """Align genotypes and phenotypes on sample id, in sorted-id order."""
    geno_ids = set(panel.sample_ids)
    pheno_ids = set(sample.sample_ids)
    shared = sorted(geno_ids & pheno_ids)
    if not shared:
        raise JoinError("genotype and phenotype files share no sample ids")

    only_geno = sorted(geno_ids - pheno_ids)
    only_pheno = sorted(pheno_ids - geno_ids)
    if only_geno or only_pheno:
        logger.warning(
            "Restricting to %d shared subjects (%d only in genotypes, %d only in phenotypes)",
            len(shared), len(only_geno), len(only_pheno),
        )

    geno_pos = {s: i for i, s in enumerate(panel.sample_ids)}
    pheno_pos = {s: i for i, s in enumerate(sample.sample_ids)}
    aligned_panel = panel.subset_samples([geno_pos[s] for s in shared])
    aligned_sample = sample.subset([pheno_pos[s] for s in shared])

    known = set(panel.snp_ids)
    resolved: Dict[str, List[str]] = {}
    unresolved: Dict[str, List[str]] = {}
    empty: List[str] = []
    for gene, snps in gene_map.genes.items():
        hits = [s for s in snps if s in known]
        misses = [s for s in snps if s not in known]
        resolved[gene] = hits
        if misses:
            unresolved[gene] = misses
            logger.warning("Gene %s: %d SNP(s) not in genotype panel", gene, len(misses))
        if not hits:
            empty.append(gene)
            logger.warning("Gene %s has no SNPs in the genotype panel", gene)

    return AnalysisDataset(
        sample_ids=shared,
        panel=aligned_panel,
        sample=aligned_sample,
        gene_map=GeneMap(genes=resolved),
        report=JoinReport(
            only_in_genotypes=only_geno,
            only_in_phenotypes=only_pheno,
            unresolved_snps=unresolved,
            empty_genes=empty,
        ),
    )
