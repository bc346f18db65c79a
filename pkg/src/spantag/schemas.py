"""Request and response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field

DEFAULT_GAMMA_GRID = (-6.0, -4.0, -2.5, -1.5, -1.0, -0.6, -0.3, -0.1, -0.02, 0.05)


class TrainRequest(BaseModel):
    train_path: str
    descriptions_path: str
    checkpoint_path: str
    config_path: str | None = None
    vocab_path: str | None = None
    loss_csv_path: str | None = None
    epochs: int | None = None
    learning_rate: float | None = None
    batch_size: int | None = None
    seed: int | None = None
    negative_sampling: str | None = None
    use_attention: bool | None = None
    max_span_len: int | None = None


class TrainResponse(BaseModel):
    checkpoint_path: str
    n_sentences: int
    n_steps: int
    first_epoch_loss: float
    last_epoch_loss: float
    seconds: float


class DecodingOptions(BaseModel):
    mode: str = "few-shot"
    index_threshold: float = 0.5
    match_threshold: float = 0.5
    class_boundary: float = 0.5
    gamma: float | None = None
    max_span_len: int | None = None
    overlap_policy: str = "flat-greedy"


class ClassMetricsModel(BaseModel):
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


class EvalReportModel(BaseModel):
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    n_runs: int = 1
    per_class: dict[str, ClassMetricsModel] = Field(default_factory=dict)
    precision_std: float | None = None
    recall_std: float | None = None
    f1_std: float | None = None


class EvaluateRequest(BaseModel):
    checkpoint_path: str
    data_path: str
    descriptions_path: str
    decoding: DecodingOptions = Field(default_factory=DecodingOptions)


class EvaluateResponse(BaseModel):
    report: EvalReportModel
    n_sentences: int


class PredictRequest(BaseModel):
    checkpoint_path: str
    descriptions_path: str
    sentences: list[list[str]] | None = None
    data_path: str | None = None
    out_path: str | None = None
    decoding: DecodingOptions = Field(default_factory=DecodingOptions)


class SpanPredictionModel(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    start: int
    end: int
    label: str = Field(alias="class")
    score: float
    p_match: float
    class_score: float
    joint_score: float | None = None


class PredictResponse(BaseModel):
    predictions: list[list[SpanPredictionModel]]
    out_path: str | None = None


class FewShotSampleRequest(BaseModel):
    data_path: str
    out_path: str
    k: int
    classes: list[str] | None = None
    seed: int = 0


class FewShotSampleResponse(BaseModel):
    out_path: str
    n_sentences: int
    class_counts: dict[str, int]


class SweepGammaRequest(BaseModel):
    checkpoint_path: str
    data_path: str
    descriptions_path: str
    gammas: list[float] | None = None
    decoding: DecodingOptions = Field(default_factory=DecodingOptions)


class SweepPoint(BaseModel):
    gamma: float
    f1: float


class SweepGammaResponse(BaseModel):
    points: list[SweepPoint]
    best_gamma: float
    best_f1: float


class ZeroShotEvalRequest(BaseModel):
    checkpoint_path: str
    dev_path: str
    test_path: str
    descriptions_path: str
    gammas: list[float] | None = None
    unseen_classes: list[str] | None = None
    decoding: DecodingOptions = Field(default_factory=DecodingOptions)


class ZeroShotEvalResponse(BaseModel):
    best_gamma: float
    dev_f1: float
    test_report: EvalReportModel
    unseen_f1: dict[str, float]


class GradCheckRequest(BaseModel):
    seed: int = 0
    n_sentences: int = 4
    epsilon: float = 1e-5
    samples_per_param: int = 6


class GradCheckResponse(BaseModel):
    max_rel_error: float
    worst_param: str
    frozen_grad_absent: bool
    per_param: dict[str, float]


class GenSyntheticRequest(BaseModel):
    outdir: str
    preset: str = "few-shot"
    seed: int = 0
    n_train: int | None = None
    n_dev: int | None = None
    n_test: int | None = None
    heldout: list[str] | None = None
    distractor_rate: float | None = None


class GenSyntheticResponse(BaseModel):
    paths: dict[str, str]
    classes: list[str]


class HealthResponse(BaseModel):
    status: str
    version: str
