from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config import DEFAULT_SEED


class Section(BaseModel):
    model_config = ConfigDict(extra='forbid')

    seed: Optional[int] = None


def _check_q(value):
    values = value.values() if isinstance(value, dict) else [value]
    for q in values:
        if q is not None and not 0.0 < q < 1.0:
            raise ValueError(f"q values must lie in (0, 1), got {q}")
    return value


# Synthesis Schemas
class SynthConfig(Section):
    variant: Literal['pair', 'single', 'linear'] = 'pair'
    network_variant: Literal['pkt', 'normal'] = 'pkt'
    out: Path = Path("synth")
    layer_widths: List[int] = Field(default_factory=lambda: [16, 24, 24, 2])
    critical_widths: List[int] = Field(default_factory=lambda: [8, 8, 8, 2])
    k_true: int = Field(default=4, ge=1)
    n_samples: int = Field(default=2000, ge=1)
    response_class: Optional[int] = None
    # linear-gaussian case
    p: int = Field(default=200, ge=1)
    support_size: int = Field(default=30, ge=0)
    amplitude: float = 3.5
    rho: float = Field(default=0.3, ge=0.0, lt=1.0)

    @field_validator('layer_widths', 'critical_widths')
    @classmethod
    def positive_widths(cls, value):
        if not value or min(value) < 1:
            raise ValueError("widths must be a non-empty list of positive integers")
        return value


# Discovery Schemas
class DiscoverConfig(Section):
    trace: Optional[Path] = None
    out: Path = Path("selection.json")
    layer_ids: Optional[List[str]] = None
    q: Optional[Union[float, Dict[str, float]]] = None
    statistic: Literal['marginal_corr', 'lasso_cd'] = 'marginal_corr'
    repetitions: int = Field(default=50, ge=1)
    keep_fraction: float = Field(default=0.5, gt=0.0, le=1.0)
    offset: Literal[0, 1] = 1
    group_threshold: Optional[float] = Field(default=None, gt=0.0, le=1.0)
    lambda_ratio: float = Field(default=0.25, gt=0.0)
    shrinkage: float = Field(default=0.1, ge=0.0, le=1.0)
    all_samples: bool = False

    @field_validator('q')
    @classmethod
    def q_range(cls, value):
        return _check_q(value)


# Learning Schemas
class LearnConfig(Section):
    trace: Optional[Path] = None
    selection: Optional[Path] = None
    out: Path = Path("assignment.json")
    k: int = Field(default=2, ge=1)
    method: Literal['kmeans', 'gmm', 'agglomerative'] = 'kmeans'
    limits: Optional[Union[int, Dict[str, int]]] = None
    top_k: Optional[Union[int, Dict[str, int]]] = None
    reg: float = Field(default=1e-6, ge=0.0)
    all_samples: bool = False


# Evaluation Schemas
class EvaluateConfig(Section):
    mode: Literal['ce-curve', 'ce-diff', 'ablate'] = 'ce-curve'
    trace: Optional[Path] = None
    trace_b: Optional[Path] = None
    out: Path = Path("evaluation.csv")
    selector: Literal['neucept', 'activation', 'all'] = 'neucept'
    k_range: List[int] = Field(default_factory=lambda: list(range(1, 9)))
    method: Literal['kmeans', 'gmm', 'agglomerative'] = 'kmeans'
    layer_ids: Optional[List[str]] = None
    q: Optional[Union[float, Dict[str, float]]] = None
    statistic: Literal['marginal_corr', 'lasso_cd'] = 'marginal_corr'
    repetitions: int = Field(default=50, ge=1)
    keep_fraction: float = Field(default=0.5, gt=0.0, le=1.0)
    limits: Optional[Union[int, Dict[str, int]]] = None
    activation_k: Optional[int] = Field(default=None, ge=0)
    all_samples: bool = False
    # ablation
    layer_id: Optional[str] = None
    levels: List[float] = Field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0])
    gammas: List[float] = Field(default_factory=lambda: [0.0, 20.0])
    seeds: List[int] = Field(default_factory=lambda: list(range(5)))
    score_mode: Literal['binary', 'frequency'] = 'binary'
    include_random: bool = True
    per_sample: bool = False

    @field_validator('q')
    @classmethod
    def q_range(cls, value):
        return _check_q(value)

    @field_validator('k_range')
    @classmethod
    def k_range_positive(cls, value):
        if not value or min(value) < 1:
            raise ValueError("k_range must be a non-empty list of positive integers")
        return value

    @field_validator('levels', 'gammas')
    @classmethod
    def nonnegative(cls, value):
        if any(v < 0 for v in value):
            raise ValueError("levels and gammas must be nonnegative")
        return value

    @model_validator(mode='after')
    def mode_inputs(self):
        if self.mode == 'ce-diff' and self.trace_b is None:
            raise ValueError("mode 'ce-diff' needs trace_b")
        if self.mode == 'ablate' and self.layer_id is None:
            raise ValueError("mode 'ablate' needs layer_id")
        return self


# Oracle Schemas
class OracleConfig(Section):
    table: Optional[Path] = None
    y_column: str = 'y'
    trace: Optional[Path] = None
    layer_id: Optional[str] = None
    selection: Optional[Path] = None
    k: int = Field(default=2, ge=0)
    out: Path = Path("oracle.json")

    @model_validator(mode='after')
    def one_source(self):
        if (self.table is None) == (self.trace is None):
            raise ValueError("give exactly one of 'table' or 'trace'")
        if self.trace is not None and self.layer_id is None:
            raise ValueError("'trace' needs 'layer_id'")
        return self


class RunConfig(BaseModel):
    """One run file; sections without a seed inherit the top-level seed"""
    model_config = ConfigDict(extra='forbid')

    seed: int = DEFAULT_SEED
    synth: SynthConfig = Field(default_factory=SynthConfig)
    discover: DiscoverConfig = Field(default_factory=DiscoverConfig)
    learn: LearnConfig = Field(default_factory=LearnConfig)
    evaluate: EvaluateConfig = Field(default_factory=EvaluateConfig)
    oracle: Optional[OracleConfig] = None

    @model_validator(mode='after')
    def inherit_seed(self):
        for section in (self.synth, self.discover, self.learn, self.evaluate, self.oracle):
            if section is not None and section.seed is None:
                section.seed = self.seed
        return self


# Result Schemas
class SelectionRecord(BaseModel):
    layer_id: str
    q: float
    tau: Optional[float]
    taus: List[Optional[float]]
    selected: List[int]
    frequency: List[float]
    w_mean: Optional[List[float]] = None
    statistic: str
    repetitions: int
    keep_fraction: float
    n_retained: int
    dropped: List[int]
    groups: Optional[List[List[int]]] = None
    error: Optional[str] = None


class SelectionReport(BaseModel):
    trace: str
    seed: int
    layers: List[SelectionRecord]


class RepresentativeRecord(BaseModel):
    layer_id: str
    limit: Optional[int] = None
    groups: List[List[int]]


class AssignmentReport(BaseModel):
    trace: str
    seed: int
    method: str
    k: int
    fit_score: float
    converged: bool
    history: List[float]
    cluster_sizes: List[int]
    labels: List[int]
    representatives: List[RepresentativeRecord]
    ce_bits: Optional[float] = None


class OracleReport(BaseModel):
    source: str
    n_variables: int
    k: int
    subset: List[int]
    mi_bits: float
    selected: Optional[List[int]] = None
    selected_mi_bits: Optional[float] = None
    ratio: Optional[float] = None
