import os
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

from .config import CENSORING_PRESETS
from .exceptions import DataError, UsageError

CodingMode = Literal["additive", "dominant", "recessive"]
KernelKind = Literal["ibs", "linear"]
NullModel = Literal["ph", "po"]
PValuePath = Literal["eigen", "perturb", "moment"]
Method = Literal["simreg_ph", "simreg_po"]


def frozen_array(values: Any, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


class ArrayModel(BaseModel):
    """Immutable record holding numpy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


# Genotype schemas
class GenotypePanel(ArrayModel):
    sample_ids: List[str]
    snp_ids: List[str]
    counts: np.ndarray
    maf: np.ndarray
    flipped: np.ndarray
    monomorphic: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def _derive_frequencies(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        counts = np.asarray(data.get("counts"))
        sample_ids = list(data.get("sample_ids", []))
        snp_ids = list(data.get("snp_ids", []))
        if counts.ndim != 2:
            raise DataError("genotype counts must be a 2-d matrix")
        if counts.shape != (len(sample_ids), len(snp_ids)):
            raise DataError(
                f"genotype matrix shape {counts.shape} does not match "
                f"{len(sample_ids)} samples x {len(snp_ids)} SNPs"
            )
        if not np.isin(counts, (0, 1, 2)).all():
            raise DataError("genotype counts must be in {0, 1, 2}")
        if len(set(sample_ids)) != len(sample_ids):
            raise DataError("duplicate sample_id in genotype panel")
        if len(set(snp_ids)) != len(snp_ids):
            raise DataError("duplicate snp_id in genotype panel")

        n = counts.shape[0]
        freq = counts.sum(axis=0) / (2.0 * n) if n else np.zeros(counts.shape[1])
        flipped = freq > 0.5
        maf = np.where(flipped, 1.0 - freq, freq)
        data.update(
            sample_ids=sample_ids,
            snp_ids=snp_ids,
            counts=frozen_array(counts, np.int8),
            maf=frozen_array(maf),
            flipped=frozen_array(flipped, bool),
            monomorphic=frozen_array(maf == 0.0, bool),
        )
        return data

    @property
    def n(self) -> int:
        return len(self.sample_ids)

    @property
    def n_snps(self) -> int:
        return len(self.snp_ids)

    @property
    def minor_counts(self) -> np.ndarray:
        """Counts of the minor allele (columns with the folding flag set are re-expressed)."""
        return np.where(self.flipped[None, :], 2 - self.counts, self.counts).astype(np.int8)

    def subset_samples(self, indices) -> "GenotypePanel":
        indices = np.asarray(indices, dtype=int)
        return GenotypePanel(
            sample_ids=[self.sample_ids[i] for i in indices],
            snp_ids=self.snp_ids,
            counts=self.counts[indices],
        )

    def subset_snps(self, snp_ids: List[str]) -> "GenotypePanel":
        position = {s: j for j, s in enumerate(self.snp_ids)}
        missing = [s for s in snp_ids if s not in position]
        if missing:
            raise DataError(f"unknown SNP id(s): {', '.join(missing)}")
        cols = [position[s] for s in snp_ids]
        return GenotypePanel(sample_ids=self.sample_ids, snp_ids=list(snp_ids), counts=self.counts[:, cols])

    def polymorphic_snps(self) -> List[str]:
        return [s for s, mono in zip(self.snp_ids, self.monomorphic) if not mono]


class CodedGenotypes(ArrayModel):
    sample_ids: List[str]
    snp_ids: List[str]
    values: np.ndarray
    mode: CodingMode


# Phenotype schemas
class SurvivalSample(ArrayModel):
    sample_ids: List[str]
    time: np.ndarray
    event: np.ndarray
    covariates: np.ndarray
    covariate_names: List[str] = Field(default_factory=list)

    @model_validator(mode="before")
    @classmethod
    def _validate_arrays(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        sample_ids = list(data.get("sample_ids", []))
        n = len(sample_ids)
        time = np.asarray(data.get("time"), dtype=float).reshape(-1)
        event = np.asarray(data.get("event")).reshape(-1)
        covariates = data.get("covariates")
        covariates = np.zeros((n, 0)) if covariates is None else np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates.reshape(n, -1)
        names = list(data.get("covariate_names") or [f"x{k + 1}" for k in range(covariates.shape[1])])

        if time.shape[0] != n or event.shape[0] != n or covariates.shape[0] != n:
            raise DataError("time, event and covariates must have one row per sample")
        if len(names) != covariates.shape[1]:
            raise DataError("covariate_names length does not match covariate columns")
        if len(set(sample_ids)) != n:
            raise DataError("duplicate sample_id in phenotype sample")
        if not np.all(np.isfinite(time)) or np.any(time <= 0):
            raise DataError("survival times must be finite and > 0")
        if not np.isin(event, (0, 1)).all():
            raise DataError("event indicator must be 0 or 1")
        if not np.all(np.isfinite(covariates)):
            raise DataError("covariates must be finite")

        data.update(
            sample_ids=sample_ids,
            time=frozen_array(time),
            event=frozen_array(event, np.int8),
            covariates=frozen_array(covariates),
            covariate_names=names,
        )
        return data

    @property
    def n(self) -> int:
        return len(self.sample_ids)

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]

    @property
    def n_events(self) -> int:
        return int(self.event.sum())

    def subset(self, indices) -> "SurvivalSample":
        indices = np.asarray(indices, dtype=int)
        return SurvivalSample(
            sample_ids=[self.sample_ids[i] for i in indices],
            time=self.time[indices],
            event=self.event[indices],
            covariates=self.covariates[indices],
            covariate_names=self.covariate_names,
        )

    def with_covariates(self, covariates: np.ndarray, names: Optional[List[str]] = None) -> "SurvivalSample":
        return SurvivalSample(
            sample_ids=self.sample_ids,
            time=self.time,
            event=self.event,
            covariates=covariates,
            covariate_names=names,
        )


# Gene map schemas
class GeneMap(BaseModel):
    model_config = ConfigDict(frozen=True)

    genes: Dict[str, List[str]]

    @property
    def gene_names(self) -> List[str]:
        return list(self.genes.keys())

    def snps(self, gene: str) -> List[str]:
        if gene not in self.genes:
            raise DataError(f"unknown gene: {gene}")
        return list(self.genes[gene])


class JoinReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    only_in_genotypes: List[str] = Field(default_factory=list)
    only_in_phenotypes: List[str] = Field(default_factory=list)
    unresolved_snps: Dict[str, List[str]] = Field(default_factory=dict)
    empty_genes: List[str] = Field(default_factory=list)


class AnalysisDataset(ArrayModel):
    sample_ids: List[str]
    panel: GenotypePanel
    sample: SurvivalSample
    gene_map: GeneMap
    report: JoinReport = Field(default_factory=JoinReport)

    _null_fits: Dict[str, Any] = PrivateAttr(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.sample_ids)


# Kernel schemas
class WeightScheme(ArrayModel):
    variant: Literal["uniform", "q_pow", "one_minus_q_pow", "custom"] = "q_pow"
    exponent: float = -0.75
    values: Optional[np.ndarray] = None

    @classmethod
    def from_alias(cls, alias: str) -> "WeightScheme":
        schemes = {
            "q34": cls(variant="q_pow", exponent=-0.75),
            "qinv": cls(variant="q_pow", exponent=-1.0),
            "beta24": cls(variant="one_minus_q_pow", exponent=24.0),
            "uniform": cls(variant="uniform"),
        }
        if alias not in schemes:
            raise UsageError(f"unknown weight scheme '{alias}' (choose from {', '.join(schemes)})")
        return schemes[alias]

    @property
    def label(self) -> str:
        if self.variant == "uniform":
            return "uniform"
        if self.variant == "custom":
            return "custom"
        if self.variant == "q_pow":
            return f"q^{self.exponent:g}"
        return f"(1-q)^{self.exponent:g}"


class KernelMatrix(ArrayModel):
    matrix: np.ndarray
    kind: KernelKind
    weights: np.ndarray
    snp_ids: List[str]
    features: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


# Null model schemas
class NullFit(ArrayModel):
    model: NullModel
    gamma_hat: np.ndarray
    event_times: np.ndarray
    jumps: np.ndarray
    residuals: np.ndarray
    n_events: int
    iterations: int
    score_norm: float

    @property
    def cumulative(self) -> np.ndarray:
        """Baseline Gamma = exp(H) at each event time."""
        return np.cumsum(self.jumps)

    @property
    def H_hat(self) -> np.ndarray:
        return np.log(self.cumulative)

    def cumulative_at(self, t) -> np.ndarray:
        """Right-continuous step function Gamma(t); zero before the first event."""
        idx = np.searchsorted(self.event_times, np.asarray(t, dtype=float), side="right")
        padded = np.concatenate(([0.0], self.cumulative))
        return padded[idx]


class NullFitPH(NullFit):
    model: NullModel = "ph"
    information: np.ndarray
    risk_means: np.ndarray
    log_likelihood: float


class NullFitPO(NullFit):
    model: NullModel = "po"
    family: str = "po"
    baseline_residual: float
    converged: bool = True


# Inference schemas
class SigmaEstimate(ArrayModel):
    matrix: np.ndarray
    eigenvalues: np.ndarray
    n_clipped: int = 0
    min_eigenvalue: float = 0.0

    @property
    def d(self) -> int:
        return int(self.eigenvalues.shape[0])


class TestResult(ArrayModel):
    __test__ = False

    gene: Optional[str] = None
    Q: float
    eigenvalues: Optional[np.ndarray] = None
    p_value: float
    method: Method
    pvalue_path: PValuePath
    resamples: int = 0
    seed: Optional[int] = None
    kernel_kind: KernelKind = "ibs"
    weight_scheme: str = ""
    n_snps: int = 0
    note: str = ""


class MinPResult(ArrayModel):
    pvalues: np.ndarray
    flags: List[str] = Field(default_factory=list)
    p_min: float
    k_eff: float
    adjusted: float


# Simulation schemas
class Scenario(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "scenario"
    causal: Dict[str, float] = Field(default_factory=dict)
    mode: CodingMode = "additive"
    censoring: str = "15%"
    n: int = 500
    true_model: NullModel = "ph"
    covariate_effects: Tuple[float, ...] = (1.0,)
    methods: Tuple[str, ...] = ("simreg_ph",)
    alphas: Tuple[float, ...] = (0.05, 0.005, 0.0005)
    weights: str = "q34"
    kernel: KernelKind = "ibs"
    kernel_coding: Literal["counts", "coded"] = "counts"
    resamples: int = 10_000
    panel: Optional[str] = None

    @field_validator("causal")
    @classmethod
    def _finite_effects(cls, value: Dict[str, float]) -> Dict[str, float]:
        for snp, effect in value.items():
            if not np.isfinite(effect):
                raise ValueError(f"effect size for {snp} must be finite")
        return value

    @field_validator("n")
    @classmethod
    def _enough_subjects(cls, value: int) -> int:
        if value < 2:
            raise ValueError("n must be >= 2")
        return value

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:
        known = {"simreg_ph", "simreg_po", "km", "global", "minp"}
        unknown = [m for m in value if m not in known]
        if unknown:
            raise ValueError(f"unknown method(s) {unknown}; choose from {sorted(known)}")
        return value

    @field_validator("censoring")
    @classmethod
    def _valid_censoring(cls, value: str) -> str:
        if value in CENSORING_PRESETS:
            return value
        try:
            c = float(value)
        except ValueError:
            raise ValueError(f"censoring must be one of {list(CENSORING_PRESETS)} or a positive number")
        if not c > 0:
            raise ValueError("censoring constant c must be > 0")
        return value

    def effect_of(self, snp_id: str) -> float:
        return float(self.causal.get(snp_id, 0.0))


class ReplicationSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    scenario: str
    method: str
    alphas: Tuple[float, ...]
    rejections: Tuple[int, ...]
    replicates: int
    failures: int = 0
    base_seed: int

    @property
    def rates(self) -> Tuple[float, ...]:
        if self.replicates == 0:
            return tuple(0.0 for _ in self.alphas)
        return tuple(r / self.replicates for r in self.rejections)


# CLI schemas
class ScanConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    geno: str
    pheno: str
    genes: str
    out: str
    model: NullModel = "ph"
    weights: str = "q34"
    kernel: KernelKind = "ibs"
    coding: Optional[CodingMode] = None
    pvalue: Optional[PValuePath] = None
    resamples: int = 10_000
    seed: int = 0
    bonferroni: Optional[int] = None
    missing: Literal["reject", "drop_subject"] = "reject"
    dump_kernel: Optional[str] = None
    jobs: int = 1

    @field_validator("resamples")
    @classmethod
    def _resolution(cls, value: int) -> int:
        if value < 100:
            raise ValueError("resamples must be >= 100")
        return value

    @field_validator("seed")
    @classmethod
    def _non_negative_seed(cls, value: int) -> int:
        if value < 0:
            raise ValueError("seed must be >= 0")
        return value

    @field_validator("jobs")
    @classmethod
    def _worker_count(cls, value: int) -> int:
        if value == 0 or value < -1:
            raise ValueError("jobs must be >= 1, or -1 for all cores")
        return value

    @field_validator("geno", "pheno", "genes")
    @classmethod
    def _input_exists(cls, value: str) -> str:
        if not os.path.isfile(value):
            raise DataError(f"input file not found: {value}")
        return value
