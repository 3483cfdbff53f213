"""Command-line front end: ``simreg scan`` and ``simreg simulate``."""

import argparse
import json
import logging
import os
import platform
import sys
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
import scipy
from joblib import Parallel, delayed
from pydantic import ValidationError

from . import __version__
from .config import DEFAULT_RESAMPLES, LOG_LEVEL, N_JOBS, SHOW_PROGRESS
from .data import join, load_gene_map, load_phenotypes, read_genotypes
from .exceptions import SimRegError, UsageError
from .inference import fit_null, gene_kernel, gene_test
from .quadform import derive_seed
from .schemas import AnalysisDataset, ScanConfig, WeightScheme
from .similarity import dump_kernel
from .simulator import load_scenario, run_scenario, summary_frame, write_summary

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = "1"
REPORT_COLUMNS = ["gene", "n_snps", "method", "Q", "p_value", "bonferroni_threshold", "significant", "reason"]
FAMILY_ALPHA = 0.05


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return "NA"
    return f"{x:.10g}"


def _versions() -> Dict[str, str]:
    return {
        "simreg": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }


def _write_sidecar(out: str, payload: Dict) -> None:
    with open(f"{out}.meta.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _scan_gene(dataset: AnalysisDataset, config: ScanConfig, gene: str, index: int, threshold: float) -> Dict[str, str]:
    row = dict(gene=gene, method=f"simreg_{config.model}", bonferroni_threshold=_fmt(threshold))
    snps = dataset.gene_map.snps(gene)
    polymorphic = set(dataset.panel.polymorphic_snps())
    n_poly = sum(s in polymorphic for s in snps)
    reason = ""
    if not snps:
        reason = "no SNPs resolved in genotype panel"
    elif n_poly == 0:
        reason = "all SNPs monomorphic"
    if reason:
        return dict(row, n_snps=str(n_poly), Q="NA", p_value="NA", significant="NA", reason=reason)

    scheme = WeightScheme.from_alias(config.weights)
    if config.dump_kernel:
        km = gene_kernel(dataset, gene, scheme, config.kernel, config.coding)
        dump_kernel(km, os.path.join(config.dump_kernel, f"{gene}.kernel.tsv"), dataset.sample_ids)
    result = gene_test(
        dataset,
        gene,
        model=config.model,
        scheme=scheme,
        kind=config.kernel,
        coding=config.coding,
        pvalue=config.pvalue,
        B=config.resamples,
        seed=derive_seed(config.seed, index),
    )
    return dict(
        row,
        n_snps=str(result.n_snps),
        Q=_fmt(result.Q),
        p_value=_fmt(result.p_value),
        significant="1" if result.p_value <= threshold else "0",
        reason="",
    )


def cmd_scan(config: ScanConfig) -> pd.DataFrame:
    """Gene-based scan; writes the TSV report and its metadata sidecar."""
    panel, dropped = read_genotypes(config.geno, config.missing)
    sample = load_phenotypes(config.pheno)
    gene_map = load_gene_map(config.genes)
    dataset = join(panel, sample, gene_map)

    genes = dataset.gene_map.gene_names
    divisor = config.bonferroni or len(genes)
    threshold = FAMILY_ALPHA / divisor
    if config.dump_kernel:
        os.makedirs(config.dump_kernel, exist_ok=True)

    fit_null(dataset, config.model)
    logger.info("Scanning %d gene(s), Bonferroni threshold %.4g", len(genes), threshold)
    if config.jobs == 1:
        rows = [_scan_gene(dataset, config, g, i, threshold) for i, g in enumerate(genes)]
    else:
        rows = Parallel(n_jobs=config.jobs, prefer="threads")(
            delayed(_scan_gene)(dataset, config, g, i, threshold) for i, g in enumerate(genes)
        )

    report = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    report.to_csv(config.out, sep="\t", index=False, lineterminator="\n")
    _write_sidecar(
        config.out,
        dict(
            command="scan",
            report_schema_version=REPORT_SCHEMA_VERSION,
            report_columns=REPORT_COLUMNS,
            seed=config.seed,
            versions=_versions(),
            config=config.model_dump(),
            subjects=dataset.n,
            dropped_missing_genotypes=dropped,
            join_report=dataset.report.model_dump(),
        ),
    )
    logger.info("Wrote %d report row(s) to %s", len(report), config.out)
    return report


def cmd_simulate(config_path: str, reps: int, seed: int, out: str, jobs: int = 1, progress: bool = False) -> pd.DataFrame:
    scenario = load_scenario(config_path)
    summaries = run_scenario(scenario, reps, base_seed=seed, n_jobs=jobs, progress=progress)
    write_summary(summaries, out)
    _write_sidecar(
        out,
        dict(
            command="simulate",
            seed=seed,
            replicates=reps,
            versions=_versions(),
            scenario=scenario.model_dump(),
        ),
    )
    return summary_frame(summaries)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="simreg", description="Gene-trait similarity regression for censored survival outcomes")
    parser.add_argument("--log-level", default=LOG_LEVEL, help="logging level (default from SIMREG_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    scan = sub.add_parser("scan", help="gene-based scan of a genotype/phenotype dataset")
    scan.add_argument("--geno", required=True)
    scan.add_argument("--pheno", required=True)
    scan.add_argument("--genes", required=True)
    scan.add_argument("--out", required=True)
    scan.add_argument("--model", choices=["ph", "po"], default="ph")
    scan.add_argument("--weights", choices=["q34", "qinv", "beta24", "uniform"], default="q34")
    scan.add_argument("--kernel", choices=["ibs", "linear"], default="ibs")
    scan.add_argument("--coding", choices=["additive", "dominant", "recessive"], default=None)
    scan.add_argument("--pvalue", choices=["eigen", "perturb", "moment"], default=None)
    scan.add_argument("--resamples", type=int, default=DEFAULT_RESAMPLES)
    scan.add_argument("--seed", type=int, default=0)
    scan.add_argument("--bonferroni", type=int, default=None)
    scan.add_argument("--missing", choices=["reject", "drop_subject"], default="reject")
    scan.add_argument("--dump-kernel", default=None, metavar="DIR")
    scan.add_argument("--jobs", type=int, default=N_JOBS)

    simulate = sub.add_parser("simulate", help="run a size/power simulation scenario")
    simulate.add_argument("--config", required=True)
    simulate.add_argument("--reps", type=int, required=True)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--out", required=True)
    simulate.add_argument("--jobs", type=int, default=N_JOBS)
    simulate.add_argument("--progress", action="store_true", default=SHOW_PROGRESS)
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )
    if args.command == "scan":
        try:
            config = ScanConfig(
                geno=args.geno, pheno=args.pheno, genes=args.genes, out=args.out,
                model=args.model, weights=args.weights, kernel=args.kernel, coding=args.coding,
                pvalue=args.pvalue, resamples=args.resamples, seed=args.seed, bonferroni=args.bonferroni,
                missing=args.missing, dump_kernel=args.dump_kernel, jobs=args.jobs,
            )
        except ValidationError as e:
            raise UsageError(f"invalid scan options: {e.errors()[0]['msg']}")
        cmd_scan(config)
    elif args.command == "simulate":
        if args.reps < 0 or args.seed < 0:
            raise UsageError("--reps and --seed must be non-negative")
        cmd_simulate(args.config, args.reps, args.seed, args.out, jobs=args.jobs, progress=args.progress)
    else:
        raise UsageError("a command is required: scan or simulate")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    try:
        return run(argv)
    except SimRegError as e:
        message = " ".join(str(e.message).split())
        sys.stderr.write(f"simreg-error\tcode={e.exit_code}\ttype={type(e).__name__}\tmessage={message}\n")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
